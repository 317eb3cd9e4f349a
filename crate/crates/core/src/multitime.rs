//! Multi-time propagation and the integrability condition.
//!
//! A state carries one time per partial Hamiltonian. Moving along axis `j`
//! solves `i ∂φ/∂t_j = H_j φ`; the integrability residual
//! `∂H_k/∂t_j − ∂H_j/∂t_k + i[H_j, H_k]` measures whether the evolutions along
//! different axes can be composed consistently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{self, frobenius, propagator, Operator, StateVector, I};
use crate::par::{self, Execution};
use crate::timefield::{HamiltonianFamily, TimeDependentOperator};

pub const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTimeState {
    pub state: StateVector,
    pub times: Vec<f64>,
}

impl MultiTimeState {
    pub fn new(state: StateVector, times: Vec<f64>) -> Self {
        MultiTimeState { state, times }
    }

    /// State at the origin of `n_times` time variables.
    pub fn at_origin(state: StateVector, n_times: usize) -> Self {
        MultiTimeState {
            state,
            times: vec![0.0; n_times],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub axis: usize,
    pub delta: f64,
    pub steps: usize,
}

/// Axis-aligned staircase through the time hyperplane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct TimePath {
    start: Vec<f64>,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    start: Vec<f64>,
    segments: Vec<Segment>,
}

impl TryFrom<PathRepr> for TimePath {
    type Error = String;

    fn try_from(r: PathRepr) -> std::result::Result<Self, Self::Error> {
        TimePath::new(r.start, r.segments).map_err(|e| e.to_string())
    }
}

impl From<TimePath> for PathRepr {
    fn from(p: TimePath) -> Self {
        PathRepr {
            start: p.start,
            segments: p.segments,
        }
    }
}

impl TimePath {
    pub fn new(start: Vec<f64>, segments: Vec<Segment>) -> Result<Self> {
        if start.is_empty() {
            return Err(Error::InvalidArgument("path start must have at least one time".into()));
        }
        if start.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("path start must be finite".into()));
        }
        for s in &segments {
            if s.axis >= start.len() {
                return Err(Error::IndexOutOfRange {
                    index: s.axis,
                    len: start.len(),
                });
            }
            if s.steps == 0 {
                return Err(Error::InvalidArgument("segment steps must be at least 1".into()));
            }
            if !s.delta.is_finite() {
                return Err(Error::InvalidArgument("segment delta must be finite".into()));
            }
        }
        Ok(TimePath { start, segments })
    }

    /// Visits axes in the given order, moving each by `deltas[axis]`.
    pub fn staircase(start: Vec<f64>, order: &[usize], deltas: &[f64], steps: usize) -> Result<Self> {
        let segments = order
            .iter()
            .map(|&axis| {
                let delta = *deltas.get(axis).ok_or(Error::IndexOutOfRange {
                    index: axis,
                    len: deltas.len(),
                })?;
                Ok(Segment { axis, delta, steps })
            })
            .collect::<Result<Vec<_>>>()?;
        TimePath::new(start, segments)
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn endpoint(&self) -> Vec<f64> {
        let mut end = self.start.clone();
        for s in &self.segments {
            end[s.axis] += s.delta;
        }
        end
    }

    /// Sum of `|delta|` over segments.
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.delta.abs()).sum()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_index(family: &HamiltonianFamily, j: usize) -> Result<()> {
    if j >= family.n_times() {
        return Err(Error::IndexOutOfRange {
            index: j,
            len: family.n_times(),
        });
    }
    Ok(())
}

/// `‖∂H_k/∂t_j − ∂H_j/∂t_k + i[H_j, H_k]‖_F` at `times`, with exact
/// derivatives. Symmetric in `(j, k)`.
pub fn integrability_residual(family: &HamiltonianFamily, times: &[f64], j: usize, k: usize) -> Result<f64> {
    check_index(family, j)?;
    check_index(family, k)?;
    if j == k {
        return Err(Error::InvalidArgument(format!(
            "integrability residual needs two distinct indices, got ({j}, {k})"
        )));
    }
    let hj = family.member(j)?;
    let hk = family.member(k)?;
    let dk_dj = hk.partial_derivative(j)?.evaluate(times)?;
    let dj_dk = hj.partial_derivative(k)?.evaluate(times)?;
    let comm = opalg::commutator(&hj.evaluate(times)?, &hk.evaluate(times)?)?;
    let total = dk_dj.matrix() - dj_dk.matrix() + comm.matrix() * I;
    Ok(frobenius(&total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLocation {
    pub j: usize,
    pub k: usize,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub max_residual: f64,
    /// `None` when there is no pair to check.
    pub argmax: Option<ResidualLocation>,
    pub evaluations: usize,
}

pub fn integrability_report(family: &HamiltonianFamily, sample_times: &[Vec<f64>]) -> Result<IntegrabilityReport> {
    integrability_report_with(Execution::default(), family, sample_times)
}

/// Maximum residual over all pairs `j < k` and all samples. Ties keep the
/// first location in (sample, j, k) order.
pub fn integrability_report_with(
    exec: Execution,
    family: &HamiltonianFamily,
    sample_times: &[Vec<f64>],
) -> Result<IntegrabilityReport> {
    if sample_times.is_empty() {
        return Err(Error::InvalidArgument("integrability report needs at least one sample".into()));
    }
    let n = family.n_times();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| ((j + 1)..n).map(move |k| (j, k)))
        .collect();
    let jobs: Vec<(usize, usize, usize)> = (0..sample_times.len())
        .flat_map(|s| pairs.iter().map(move |&(j, k)| (s, j, k)))
        .collect();
    let values = par::map(exec, &jobs, |&(s, j, k)| integrability_residual(family, &sample_times[s], j, k));

    let mut report = IntegrabilityReport {
        max_residual: 0.0,
        argmax: None,
        evaluations: jobs.len(),
    };
    for (&(s, j, k), value) in jobs.iter().zip(values) {
        let value = value?;
        if report.argmax.is_none() || value > report.max_residual {
            report.max_residual = value;
            report.argmax = Some(ResidualLocation {
                j,
                k,
                times: sample_times[s].clone(),
            });
        }
    }
    Ok(report)
}

fn advance_segment(
    member: &TimeDependentOperator,
    state: StateVector,
    times: &mut [f64],
    seg: &Segment,
) -> Result<StateVector> {
    if seg.delta == 0.0 {
        return Ok(state);
    }
    if member.is_constant_in(seg.axis) {
        let h = member.evaluate(times)?;
        times[seg.axis] += seg.delta;
        return propagator(&h, seg.delta)?.apply(&state);
    }
    let width = seg.delta / seg.steps as f64;
    let origin = times[seg.axis];
    let mut psi = state;
    for step in 0..seg.steps {
        times[seg.axis] = origin + (step as f64 + 0.5) * width;
        let h = member.evaluate(times)?;
        psi = propagator(&h, width)?.apply(&psi)?;
    }
    times[seg.axis] = origin + seg.delta;
    Ok(psi)
}

/// Evolves `initial` along `path`.
///
/// Each substep of width `h` on axis `j` applies `exp(−i·h·H_j(midpoint))`.
/// Segments along which `H_j` does not vary collapse to a single exact
/// exponential.
pub fn propagate(family: &HamiltonianFamily, initial: &MultiTimeState, path: &TimePath) -> Result<MultiTimeState> {
    if initial.state.dim() != family.dim() {
        return Err(Error::dims(family.dim(), initial.state.dim()));
    }
    if initial.times.len() != family.n_times() {
        return Err(Error::ArityMismatch {
            expected: family.n_times(),
            found: initial.times.len(),
        });
    }
    if path.start.len() != family.n_times() {
        return Err(Error::ArityMismatch {
            expected: family.n_times(),
            found: path.start.len(),
        });
    }
    if max_abs_diff(&path.start, &initial.times) > ENDPOINT_TOL {
        return Err(Error::PathStartMismatch {
            path: path.start.clone(),
            state: initial.times.clone(),
        });
    }
    let mut times = initial.times.clone();
    let mut psi = initial.state.clone();
    for seg in &path.segments {
        psi = advance_segment(family.member(seg.axis)?, psi, &mut times, seg)?;
    }
    Ok(MultiTimeState {
        state: psi,
        times: path.endpoint(),
    })
}

pub fn path_dependence_residual(
    family: &HamiltonianFamily,
    initial: &MultiTimeState,
    path_a: &TimePath,
    path_b: &TimePath,
) -> Result<f64> {
    path_dependence_residual_with(Execution::default(), family, initial, path_a, path_b)
}

/// `‖φ_a − φ_b‖₂` for two paths sharing start and endpoint.
pub fn path_dependence_residual_with(
    exec: Execution,
    family: &HamiltonianFamily,
    initial: &MultiTimeState,
    path_a: &TimePath,
    path_b: &TimePath,
) -> Result<f64> {
    let (end_a, end_b) = (path_a.endpoint(), path_b.endpoint());
    if end_a.len() != end_b.len() || max_abs_diff(&end_a, &end_b) > ENDPOINT_TOL {
        return Err(Error::EndpointMismatch { a: end_a, b: end_b });
    }
    let (a, b) = par::join(
        exec,
        || propagate(family, initial, path_a),
        || propagate(family, initial, path_b),
    );
    a?.state.distance(&b?.state)
}

/// Evolves the ordinary Schrödinger equation with `Σ_j H_j(s, …, s)` from
/// `0` to `t` using `steps` midpoint substeps.
pub fn evolve_diagonal(family: &HamiltonianFamily, initial: &StateVector, t: f64, steps: usize) -> Result<StateVector> {
    if initial.dim() != family.dim() {
        return Err(Error::dims(family.dim(), initial.dim()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if t == 0.0 {
        return Ok(initial.clone());
    }
    let time_independent = family.members().iter().all(TimeDependentOperator::is_time_independent);
    if time_independent {
        return propagator(&family.diagonal_sum(0.0)?, t)?.apply(initial);
    }
    let width = t / steps as f64;
    let mut psi = initial.clone();
    for step in 0..steps {
        let h = family.diagonal_sum((step as f64 + 0.5) * width)?;
        psi = propagator(&h, width)?.apply(&psi)?;
    }
    Ok(psi)
}

/// `‖ψ_full(t) − φ_multi(t, …, t)‖₂`, where `ψ_full` follows the summed
/// Hamiltonian along the diagonal and `φ_multi` follows the staircase
/// `t_1, t_2, …, t_n` from the origin.
pub fn diagonal_consistency_gap(family: &HamiltonianFamily, initial: &StateVector, t: f64, steps: usize) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("t must be finite".into()));
    }
    let n = family.n_times();
    let full = evolve_diagonal(family, initial, t, steps)?;
    let order: Vec<usize> = (0..n).collect();
    let path = TimePath::staircase(vec![0.0; n], &order, &vec![t; n], steps)?;
    let multi = propagate(family, &MultiTimeState::at_origin(initial.clone(), n), &path)?;
    full.distance(&multi.state)
}

/// `‖[H_1, H_2] ψ₀‖₂ · |t₁ t₂|`, the leading-order path dependence of the
/// two staircase orders around the rectangle `[0, t₁] × [0, t₂]` for constant
/// generators.
pub fn leading_order_path_residual(h1: &Operator, h2: &Operator, psi0: &StateVector, t1: f64, t2: f64) -> Result<f64> {
    let k = opalg::commutator(h1, h2)?;
    Ok(k.apply(psi0)?.norm() * (t1 * t2).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{pauli_x, pauli_z, random_hermitian, random_state, tensor, Operator};
    use crate::timefield::CoefficientFunction;

    fn sx_sz() -> HamiltonianFamily {
        HamiltonianFamily::constant(vec![pauli_x(), pauli_z()]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let id = Operator::identity(2);
        let disjoint = HamiltonianFamily::constant(vec![
            tensor(&pauli_x(), &id).unwrap(),
            tensor(&id, &pauli_z()).unwrap(),
        ])
        .unwrap();
        assert_eq!(integrability_residual(&disjoint, &[0.0, 0.0], 0, 1).unwrap(), 0.0);

        let r = integrability_residual(&sx_sz(), &[0.3, -1.0], 0, 1).unwrap();
        assert!((r - 8.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(r, integrability_residual(&sx_sz(), &[0.3, -1.0], 1, 0).unwrap());

        let a = random_hermitian(3, 4);
        let cross = HamiltonianFamily::new(
            vec![
                TimeDependentOperator::new(2, 3, vec![(CoefficientFunction::monomial(1, 1.0, 1), a.clone())]).unwrap(),
                TimeDependentOperator::new(2, 3, vec![(CoefficientFunction::monomial(0, 1.0, 1), a)]).unwrap(),
            ],
            true,
        )
        .unwrap();
        assert!(integrability_residual(&cross, &[1.5, -0.5], 0, 1).unwrap() < 1e-14);
    }

    #[test]
    fn residual_index_errors() {
        assert!(matches!(
            integrability_residual(&sx_sz(), &[0.0, 0.0], 0, 2).unwrap_err(),
            Error::IndexOutOfRange { index: 2, len: 2 }
        ));
        assert!(integrability_residual(&sx_sz(), &[0.0, 0.0], 1, 1).is_err());
    }

    #[test]
    fn report_examples() {
        let samples = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        let rep = integrability_report(&sx_sz(), &samples).unwrap();
        assert!((rep.max_residual - 8.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(rep.argmax.unwrap().times, vec![0.0, 0.0]);

        let single = HamiltonianFamily::constant(vec![pauli_x()]).unwrap();
        let rep = integrability_report(&single, &[vec![0.5]]).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!(rep.argmax.is_none());

        assert!(integrability_report(&sx_sz(), &[]).is_err());
    }

    #[test]
    fn zero_family_leaves_state_alone() {
        let fam = HamiltonianFamily::constant(vec![Operator::zeros(3), Operator::zeros(3)]).unwrap();
        let psi = random_state(3, 1);
        let path = TimePath::staircase(vec![0.0, 0.0], &[0, 1], &[2.0, -1.0], 4).unwrap();
        let out = propagate(&fam, &MultiTimeState::at_origin(psi.clone(), 2), &path).unwrap();
        assert_eq!(out.state, psi);
        assert_eq!(out.times, vec![2.0, -1.0]);
    }

    #[test]
    fn single_axis_matches_propagator() {
        let h = random_hermitian(4, 8);
        let fam = HamiltonianFamily::constant(vec![h.clone()]).unwrap();
        let psi = random_state(4, 2);
        let path = TimePath::staircase(vec![0.0], &[0], &[1.3], 1).unwrap();
        let out = propagate(&fam, &MultiTimeState::at_origin(psi.clone(), 1), &path).unwrap();
        let direct = propagator(&h, 1.3).unwrap().apply(&psi).unwrap();
        assert!(out.state.distance(&direct).unwrap() < 1e-14);
    }

    #[test]
    fn start_mismatch_is_reported() {
        let path = TimePath::staircase(vec![1.0, 0.0], &[0], &[1.0, 0.0], 1).unwrap();
        let init = MultiTimeState::at_origin(StateVector::basis(2, 0), 2);
        assert!(matches!(
            propagate(&sx_sz(), &init, &path).unwrap_err(),
            Error::PathStartMismatch { .. }
        ));
    }

    #[test]
    fn endpoint_mismatch_is_reported() {
        let a = TimePath::staircase(vec![0.0, 0.0], &[0, 1], &[1.0, 1.0], 1).unwrap();
        let b = TimePath::staircase(vec![0.0, 0.0], &[0], &[1.0, 1.0], 1).unwrap();
        let init = MultiTimeState::at_origin(StateVector::basis(2, 0), 2);
        assert!(matches!(
            path_dependence_residual(&sx_sz(), &init, &a, &b).unwrap_err(),
            Error::EndpointMismatch { .. }
        ));
    }

    #[test]
    fn identical_paths_agree_exactly() {
        let a = TimePath::staircase(vec![0.0, 0.0], &[1, 0], &[0.4, 0.9], 3).unwrap();
        let init = MultiTimeState::at_origin(random_state(2, 3), 2);
        assert_eq!(path_dependence_residual(&sx_sz(), &init, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_gap_vanishes_at_zero() {
        assert_eq!(diagonal_consistency_gap(&sx_sz(), &StateVector::basis(2, 0), 0.0, 5).unwrap(), 0.0);
    }

    #[test]
    fn leading_order_prediction_for_pauli_pair() {
        let v = leading_order_path_residual(&pauli_x(), &pauli_z(), &StateVector::basis(2, 0), 1e-3, 1e-3).unwrap();
        assert!((v - 2e-6).abs() < 1e-20);
    }

    #[test]
    fn path_json_round_trip() {
        let text = r#"{"start": [0.0, 0.0], "segments": [{"axis": 1, "delta": 0.5, "steps": 2}]}"#;
        let p: TimePath = serde_json::from_str(text).unwrap();
        assert_eq!(p.endpoint(), vec![0.0, 0.5]);
        let bad = r#"{"start": [0.0], "segments": [{"axis": 0, "delta": 0.5, "steps": 0}]}"#;
        assert!(serde_json::from_str::<TimePath>(bad).is_err());
    }
}
