//! Time-dependent partial Hamiltonians `H_j(t_1, …, t_n)`.
//!
//! A field is a finite sum of scalar coefficients times constant operators.
//! Each coefficient depends on at most one time variable and belongs to a
//! family closed under differentiation, so partial derivatives are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{c, CMatrix, Operator};

/// Closed-form scalar coefficient.
///
/// Wire form: `{"kind": "sine", "var": j, "params": [amplitude, frequency]}`.
/// Parameter lists by kind: constant `[a]`, monomial `[a, power]`,
/// sine/cosine `[a, ω]`, exponential `[a, rate]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientRepr", into = "CoefficientRepr")]
pub enum CoefficientFunction {
    Constant { amplitude: f64 },
    /// `a · t^power`
    Monomial { var: usize, amplitude: f64, power: u32 },
    /// `a · sin(ω t)`
    Sine { var: usize, amplitude: f64, frequency: f64 },
    /// `a · cos(ω t)`
    Cosine { var: usize, amplitude: f64, frequency: f64 },
    /// `a · exp(r t)`
    Exponential { var: usize, amplitude: f64, rate: f64 },
}

#[derive(Serialize, Deserialize)]
struct CoefficientRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var: Option<usize>,
    params: Vec<f64>,
}

impl TryFrom<CoefficientRepr> for CoefficientFunction {
    type Error = String;

    fn try_from(r: CoefficientRepr) -> std::result::Result<Self, Self::Error> {
        if r.params.iter().any(|p| !p.is_finite()) {
            return Err("coefficient params must be finite".into());
        }
        let want = |n: usize| -> std::result::Result<(), String> {
            if r.params.len() == n {
                Ok(())
            } else {
                Err(format!("`{}` takes {n} params, got {}", r.kind, r.params.len()))
            }
        };
        let var = || r.var.ok_or_else(|| format!("`{}` requires `var`", r.kind));
        Ok(match r.kind.as_str() {
            "constant" => {
                want(1)?;
                CoefficientFunction::Constant { amplitude: r.params[0] }
            }
            "monomial" => {
                want(2)?;
                let p = r.params[1];
                if p < 0.0 || p.fract() != 0.0 || p > u32::MAX as f64 {
                    return Err(format!("monomial power must be a non-negative integer, got {p}"));
                }
                CoefficientFunction::Monomial {
                    var: var()?,
                    amplitude: r.params[0],
                    power: p as u32,
                }
            }
            "sine" => {
                want(2)?;
                CoefficientFunction::Sine {
                    var: var()?,
                    amplitude: r.params[0],
                    frequency: r.params[1],
                }
            }
            "cosine" => {
                want(2)?;
                CoefficientFunction::Cosine {
                    var: var()?,
                    amplitude: r.params[0],
                    frequency: r.params[1],
                }
            }
            "exponential" => {
                want(2)?;
                CoefficientFunction::Exponential {
                    var: var()?,
                    amplitude: r.params[0],
                    rate: r.params[1],
                }
            }
            other => return Err(format!("unknown coefficient kind `{other}`")),
        })
    }
}

impl From<CoefficientFunction> for CoefficientRepr {
    fn from(f: CoefficientFunction) -> Self {
        use CoefficientFunction::*;
        let (kind, var, params) = match f {
            Constant { amplitude } => ("constant", None, vec![amplitude]),
            Monomial { var, amplitude, power } => ("monomial", Some(var), vec![amplitude, power as f64]),
            Sine { var, amplitude, frequency } => ("sine", Some(var), vec![amplitude, frequency]),
            Cosine { var, amplitude, frequency } => ("cosine", Some(var), vec![amplitude, frequency]),
            Exponential { var, amplitude, rate } => ("exponential", Some(var), vec![amplitude, rate]),
        };
        CoefficientRepr {
            kind: kind.into(),
            var,
            params,
        }
    }
}

impl CoefficientFunction {
    pub fn constant(amplitude: f64) -> Self {
        CoefficientFunction::Constant { amplitude }
    }

    pub fn monomial(var: usize, amplitude: f64, power: u32) -> Self {
        CoefficientFunction::Monomial { var, amplitude, power }
    }

    pub fn sine(var: usize, amplitude: f64, frequency: f64) -> Self {
        CoefficientFunction::Sine { var, amplitude, frequency }
    }

    pub fn cosine(var: usize, amplitude: f64, frequency: f64) -> Self {
        CoefficientFunction::Cosine { var, amplitude, frequency }
    }

    pub fn exponential(var: usize, amplitude: f64, rate: f64) -> Self {
        CoefficientFunction::Exponential { var, amplitude, rate }
    }

    /// The time variable this coefficient depends on, if any.
    pub fn variable(&self) -> Option<usize> {
        use CoefficientFunction::*;
        match *self {
            Constant { .. } => None,
            Monomial { power: 0, .. } => None,
            Monomial { var, .. } | Sine { var, .. } | Cosine { var, .. } | Exponential { var, .. } => {
                Some(var)
            }
        }
    }

    /// Caller guarantees `times` is long enough.
    pub fn eval(&self, times: &[f64]) -> f64 {
        use CoefficientFunction::*;
        match *self {
            Constant { amplitude } => amplitude,
            Monomial { var, amplitude, power } => amplitude * powu(times[var], power),
            Sine { var, amplitude, frequency } => amplitude * (frequency * times[var]).sin(),
            Cosine { var, amplitude, frequency } => amplitude * (frequency * times[var]).cos(),
            Exponential { var, amplitude, rate } => amplitude * (rate * times[var]).exp(),
        }
    }

    /// `∂/∂t_j`, or `None` when the derivative vanishes identically.
    pub fn derivative(&self, j: usize) -> Option<CoefficientFunction> {
        use CoefficientFunction::*;
        if self.variable() != Some(j) {
            return None;
        }
        match *self {
            Constant { .. } | Monomial { power: 0, .. } => None,
            Monomial { amplitude, power: 1, .. } => Some(Constant { amplitude }),
            Monomial { var, amplitude, power } => Some(Monomial {
                var,
                amplitude: amplitude * power as f64,
                power: power - 1,
            }),
            Sine { var, amplitude, frequency } => Some(Cosine {
                var,
                amplitude: amplitude * frequency,
                frequency,
            }),
            Cosine { var, amplitude, frequency } => Some(Sine {
                var,
                amplitude: -amplitude * frequency,
                frequency,
            }),
            Exponential { var, amplitude, rate } => Some(Exponential {
                var,
                amplitude: amplitude * rate,
                rate,
            }),
        }
    }

    fn max_var(&self) -> Option<usize> {
        use CoefficientFunction::*;
        match *self {
            Constant { .. } => None,
            Monomial { var, .. } | Sine { var, .. } | Cosine { var, .. } | Exponential { var, .. } => {
                Some(var)
            }
        }
    }
}

fn powu(x: f64, n: u32) -> f64 {
    if n <= i32::MAX as u32 {
        x.powi(n as i32)
    } else {
        x.powf(n as f64)
    }
}

/// `Σ_k coeff_k(t) · A_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldRepr", into = "FieldRepr")]
pub struct TimeDependentOperator {
    n_times: usize,
    dim: usize,
    terms: Vec<(CoefficientFunction, Operator)>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    coeff: CoefficientFunction,
    op: Operator,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    n_times: usize,
    dim: usize,
    terms: Vec<TermRepr>,
}

impl TryFrom<FieldRepr> for TimeDependentOperator {
    type Error = String;

    fn try_from(r: FieldRepr) -> std::result::Result<Self, Self::Error> {
        let terms = r.terms.into_iter().map(|t| (t.coeff, t.op)).collect();
        TimeDependentOperator::new(r.n_times, r.dim, terms).map_err(|e| e.to_string())
    }
}

impl From<TimeDependentOperator> for FieldRepr {
    fn from(f: TimeDependentOperator) -> Self {
        FieldRepr {
            n_times: f.n_times,
            dim: f.dim,
            terms: f
                .terms
                .into_iter()
                .map(|(coeff, op)| TermRepr { coeff, op })
                .collect(),
        }
    }
}

impl TimeDependentOperator {
    pub fn new(n_times: usize, dim: usize, terms: Vec<(CoefficientFunction, Operator)>) -> Result<Self> {
        if n_times == 0 {
            return Err(Error::InvalidArgument("a field needs at least one time variable".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("field dimension must be at least 1".into()));
        }
        for (coeff, op) in &terms {
            if op.dim() != dim {
                return Err(Error::dims(dim, op.dim()));
            }
            if let Some(v) = coeff.max_var() {
                if v >= n_times {
                    return Err(Error::IndexOutOfRange { index: v, len: n_times });
                }
            }
        }
        Ok(TimeDependentOperator { n_times, dim, terms })
    }

    pub fn zero(n_times: usize, dim: usize) -> Self {
        TimeDependentOperator {
            n_times,
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(n_times: usize, op: Operator) -> Self {
        TimeDependentOperator {
            n_times,
            dim: op.dim(),
            terms: vec![(CoefficientFunction::constant(1.0), op)],
        }
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(CoefficientFunction, Operator)] {
        &self.terms
    }

    /// True when no term depends on `t_j`.
    pub fn is_constant_in(&self, j: usize) -> bool {
        self.terms.iter().all(|(f, _)| f.variable() != Some(j))
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|(f, _)| f.variable().is_none())
    }

    pub fn evaluate(&self, times: &[f64]) -> Result<Operator> {
        if times.len() != self.n_times {
            return Err(Error::ArityMismatch {
                expected: self.n_times,
                found: times.len(),
            });
        }
        let mut acc = CMatrix::zeros(self.dim, self.dim);
        let mut hermitian = true;
        for (coeff, op) in &self.terms {
            acc += op.matrix() * c(coeff.eval(times), 0.0);
            hermitian &= op.is_hermitian();
        }
        // Real combinations of Hermitian terms stay exactly conjugate-symmetric.
        let out = Operator::from_matrix_unchecked(acc);
        Ok(if hermitian { out.with_hint(true) } else { out })
    }

    pub fn partial_derivative(&self, j: usize) -> Result<TimeDependentOperator> {
        if j >= self.n_times {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.n_times,
            });
        }
        let terms = self
            .terms
            .iter()
            .filter_map(|(f, op)| f.derivative(j).map(|d| (d, op.clone())))
            .collect();
        Ok(TimeDependentOperator {
            n_times: self.n_times,
            dim: self.dim,
            terms,
        })
    }

    /// Term-list concatenation.
    pub fn add(&self, other: &TimeDependentOperator) -> Result<TimeDependentOperator> {
        if self.n_times != other.n_times {
            return Err(Error::ArityMismatch {
                expected: self.n_times,
                found: other.n_times,
            });
        }
        if self.dim != other.dim {
            return Err(Error::dims(self.dim, other.dim));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(TimeDependentOperator {
            n_times: self.n_times,
            dim: self.dim,
            terms,
        })
    }
}

/// One partial Hamiltonian per time variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct HamiltonianFamily {
    members: Vec<TimeDependentOperator>,
    hermitian_required: bool,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    n_times: usize,
    #[serde(default = "default_true")]
    hermitian_required: bool,
    members: Vec<TimeDependentOperator>,
}

fn default_true() -> bool {
    true
}

impl TryFrom<FamilyRepr> for HamiltonianFamily {
    type Error = String;

    fn try_from(r: FamilyRepr) -> std::result::Result<Self, Self::Error> {
        if r.members.len() != r.n_times {
            return Err(format!(
                "family declares n_times = {} but has {} members",
                r.n_times,
                r.members.len()
            ));
        }
        HamiltonianFamily::new(r.members, r.hermitian_required).map_err(|e| e.to_string())
    }
}

impl From<HamiltonianFamily> for FamilyRepr {
    fn from(f: HamiltonianFamily) -> Self {
        FamilyRepr {
            n_times: f.n_times(),
            hermitian_required: f.hermitian_required,
            members: f.members,
        }
    }
}

impl HamiltonianFamily {
    /// Validates a family. With `hermitian_required`, every term operator
    /// must be Hermitian; real coefficients then keep every evaluation
    /// Hermitian.
    pub fn new(members: Vec<TimeDependentOperator>, hermitian_required: bool) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("family needs at least one member".into()))?;
        let (n, d) = (first.n_times, first.dim);
        if members.len() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                found: members.len(),
            });
        }
        for m in &members {
            if m.n_times != n {
                return Err(Error::ArityMismatch {
                    expected: n,
                    found: m.n_times,
                });
            }
            if m.dim != d {
                return Err(Error::dims(d, m.dim));
            }
            if hermitian_required {
                if let Some((_, op)) = m.terms.iter().find(|(_, op)| !op.is_hermitian()) {
                    return Err(Error::NotHermitian {
                        defect: op.hermitian_max_defect() / (1.0 + op.frobenius_norm()),
                    });
                }
            }
        }
        Ok(HamiltonianFamily {
            members,
            hermitian_required,
        })
    }

    /// Family of constant partial Hamiltonians.
    pub fn constant(ops: Vec<Operator>) -> Result<Self> {
        let n = ops.len();
        let hermitian = ops.iter().all(Operator::is_hermitian);
        let members = ops
            .into_iter()
            .map(|op| TimeDependentOperator::constant(n, op))
            .collect();
        Self::new(members, hermitian)
    }

    pub fn n_times(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim
    }

    pub fn hermitian_required(&self) -> bool {
        self.hermitian_required
    }

    pub fn members(&self) -> &[TimeDependentOperator] {
        &self.members
    }

    pub fn member(&self, j: usize) -> Result<&TimeDependentOperator> {
        self.members.get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: self.members.len(),
        })
    }

    /// Every term operator of every member, for gate checks.
    pub fn operators(&self) -> impl Iterator<Item = &Operator> {
        self.members.iter().flat_map(|m| m.terms.iter().map(|(_, op)| op))
    }

    /// `Σ_j H_j(t, …, t)`.
    pub fn diagonal_sum(&self, t: f64) -> Result<Operator> {
        let times = vec![t; self.n_times()];
        let mut acc = CMatrix::zeros(self.dim(), self.dim());
        for m in &self.members {
            acc += m.evaluate(&times)?.matrix();
        }
        Ok(Operator::from_matrix_unchecked(acc))
    }

    /// Largest relative Hermiticity defect of any member over the samples.
    pub fn max_hermitian_defect(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for t in samples {
            for m in &self.members {
                let h = m.evaluate(t)?;
                worst = worst.max(h.hermitian_max_defect() / (1.0 + h.frobenius_norm()));
            }
        }
        Ok(worst)
    }
}
