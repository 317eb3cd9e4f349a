//! Bipartite Hamiltonians `H = H_A ⊗ 1 + 1 ⊗ H_B + V_AB` and the failure of
//! per-factor evolution once `V_AB ≠ 0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::opalg::{self, propagator, Operator, StateVector};
use crate::par::{self, Execution};

const NORMALIZED_TOL: f64 = 1e-10;
const SCHMIDT_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct TensorDecomposition {
    h_a: Operator,
    h_b: Operator,
    interaction: Option<Operator>,
}

impl TensorDecomposition {
    /// The interaction, when present, must be Hermitian and act on the
    /// product space.
    pub fn new(h_a: Operator, h_b: Operator, interaction: Option<Operator>) -> Result<Self> {
        if let Some(v) = &interaction {
            let d = h_a.dim() * h_b.dim();
            if v.dim() != d {
                return Err(Error::dims(d, v.dim()));
            }
            if !v.is_hermitian() {
                return Err(Error::NotHermitian {
                    defect: v.hermitian_max_defect() / (1.0 + v.frobenius_norm()),
                });
            }
        }
        Ok(TensorDecomposition { h_a, h_b, interaction })
    }

    pub fn h_a(&self) -> &Operator {
        &self.h_a
    }

    pub fn h_b(&self) -> &Operator {
        &self.h_b
    }

    pub fn interaction(&self) -> Option<&Operator> {
        self.interaction.as_ref()
    }

    pub fn d_a(&self) -> usize {
        self.h_a.dim()
    }

    pub fn d_b(&self) -> usize {
        self.h_b.dim()
    }

    /// Same local parts, interaction dropped.
    pub fn without_interaction(&self) -> TensorDecomposition {
        TensorDecomposition {
            h_a: self.h_a.clone(),
            h_b: self.h_b.clone(),
            interaction: None,
        }
    }
}

/// Amplitudes over `A ⊗ B`, index `i·d_b + j ↦ (i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    d_a: usize,
    d_b: usize,
    state: StateVector,
}

impl BipartiteState {
    pub fn new(d_a: usize, d_b: usize, state: StateVector) -> Result<Self> {
        if d_a == 0 || d_b == 0 {
            return Err(Error::InvalidArgument("factor dimensions must be positive".into()));
        }
        if state.dim() != d_a * d_b {
            return Err(Error::dims(d_a * d_b, state.dim()));
        }
        Ok(BipartiteState { d_a, d_b, state })
    }

    pub fn product(psi_a: &StateVector, psi_b: &StateVector) -> Self {
        BipartiteState {
            d_a: psi_a.dim(),
            d_b: psi_b.dim(),
            state: psi_a.tensor(psi_b),
        }
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    /// The `d_a × d_b` coefficient matrix.
    pub fn coefficient_matrix(&self) -> DMatrix<opalg::C64> {
        let amps = self.state.amplitudes();
        DMatrix::from_fn(self.d_a, self.d_b, |i, j| amps[i * self.d_b + j])
    }
}

pub fn assemble(dec: &TensorDecomposition) -> Result<Operator> {
    let (d_a, d_b) = (dec.d_a(), dec.d_b());
    let left = opalg::tensor(&dec.h_a, &Operator::identity(d_b))?;
    let right = opalg::tensor(&Operator::identity(d_a), &dec.h_b)?;
    let free = left.add(&right)?;
    match &dec.interaction {
        Some(v) => free.add(v),
        None => Ok(free),
    }
}

fn require_normalized(psi: &StateVector) -> Result<()> {
    if !psi.is_normalized(NORMALIZED_TOL) {
        return Err(Error::NotNormalized { norm: psi.norm() });
    }
    Ok(())
}

fn check_factors(dec: &TensorDecomposition, psi_a: &StateVector, psi_b: &StateVector) -> Result<()> {
    if psi_a.dim() != dec.d_a() {
        return Err(Error::dims(dec.d_a(), psi_a.dim()));
    }
    if psi_b.dim() != dec.d_b() {
        return Err(Error::dims(dec.d_b(), psi_b.dim()));
    }
    require_normalized(psi_a)?;
    require_normalized(psi_b)
}

/// Full evolute `exp(−iHt)(ψ_A ⊗ ψ_B)` and the product ansatz
/// `exp(−iH_A t)ψ_A ⊗ exp(−iH_B t)ψ_B`.
fn evolve_both(full: &Operator, dec: &TensorDecomposition, psi_a: &StateVector, psi_b: &StateVector, t: f64) -> Result<(StateVector, StateVector)> {
    let psi0 = psi_a.tensor(psi_b);
    let exact = propagator(full, t)?.apply(&psi0)?;
    let ansatz_a = propagator(&dec.h_a, t)?.apply(psi_a)?;
    let ansatz_b = propagator(&dec.h_b, t)?.apply(psi_b)?;
    Ok((exact, ansatz_a.tensor(&ansatz_b)))
}

/// `‖exp(−iHt)(ψ_A ⊗ ψ_B) − exp(−iH_A t)ψ_A ⊗ exp(−iH_B t)ψ_B‖₂`.
pub fn product_ansatz_residual(dec: &TensorDecomposition, psi_a: &StateVector, psi_b: &StateVector, t: f64) -> Result<f64> {
    check_factors(dec, psi_a, psi_b)?;
    let full = assemble(dec)?;
    let (exact, ansatz) = evolve_both(&full, dec, psi_a, psi_b, t)?;
    exact.distance(&ansatz)
}

/// Singular values of the coefficient matrix, non-increasing.
///
/// Computed as square roots of the reduced density matrix spectrum on the
/// smaller factor.
pub fn schmidt_spectrum(psi: &BipartiteState) -> Vec<f64> {
    let m = psi.coefficient_matrix();
    let rho = if m.nrows() <= m.ncols() { &m * m.adjoint() } else { m.adjoint() * &m };
    let weights = opalg::hermitian_eigen(&rho).map(|(v, _)| v).expect("reduced density matrix is Hermitian");
    let mut values: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// `−Σ p ln p` over Schmidt weights `p = s²`, dropping `s < 1e-15`.
pub fn entanglement_entropy(psi: &BipartiteState) -> Result<f64> {
    require_normalized(&psi.state)?;
    let entropy = schmidt_spectrum(psi)
        .into_iter()
        .filter(|&s| s >= SCHMIDT_FLOOR)
        .map(|s| s * s)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>();
    Ok(entropy.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub t: f64,
    pub residual: f64,
    pub entropy: f64,
    /// `‖exp(−iHt)ψ₀‖₂`.
    pub norm: f64,
}

pub fn interaction_entanglement_sweep(
    dec: &TensorDecomposition,
    psi_a: &StateVector,
    psi_b: &StateVector,
    t_grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    interaction_entanglement_sweep_with(Execution::default(), dec, psi_a, psi_b, t_grid)
}

/// Product-ansatz residual and entanglement of the exact evolute at each
/// grid time.
pub fn interaction_entanglement_sweep_with(
    exec: Execution,
    dec: &TensorDecomposition,
    psi_a: &StateVector,
    psi_b: &StateVector,
    t_grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    check_factors(dec, psi_a, psi_b)?;
    if let Some(t) = t_grid.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid time {t} is not finite")));
    }
    let full = assemble(dec)?;
    let points = par::map(exec, t_grid, |&t| -> Result<SweepPoint> {
        let (exact, ansatz) = evolve_both(&full, dec, psi_a, psi_b, t)?;
        let residual = exact.distance(&ansatz)?;
        let norm = exact.norm();
        let entropy = entanglement_entropy(&BipartiteState::new(dec.d_a(), dec.d_b(), exact)?)?;
        Ok(SweepPoint { t, residual, entropy, norm })
    });
    points.into_iter().collect()
}
