//! Non-Hermitian diagnostics.
//!
//! A generator that is not Hermitian has no unitary Schrödinger evolution:
//! its spectrum may leave the real axis and norms decay or grow. The gate in
//! this module is what the scenario runner consults before running anything
//! that presumes unitarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{self, c, frobenius, Operator, StateVector, C64};
use crate::par::{self, Execution};

/// Gate threshold on the relative Hermiticity defect.
pub const DEFECT_TOL: f64 = 1e-12;
const COMPLEX_SPECTRUM_REL: f64 = 1e-10;
const NORMALIZED_TOL: f64 = 1e-10;

/// `‖H − H†‖_F / (1 + ‖H‖_F)`.
pub fn hermiticity_defect(h: &Operator) -> f64 {
    let m = h.matrix();
    frobenius(&(m - m.adjoint())) / (1.0 + h.frobenius_norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub hermitian: bool,
    pub hermiticity_defect: f64,
    #[serde(with = "complex_pairs")]
    pub eigenvalues: Vec<C64>,
    pub max_imag: f64,
}

mod complex_pairs {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

pub fn spectral_report(h: &Operator) -> Result<SpectralReport> {
    let defect = hermiticity_defect(h);
    let hermitian = defect <= DEFECT_TOL;
    let eigenvalues = if hermitian {
        // Below the gate tolerance the anti-Hermitian part is rounding noise.
        let sym = (h.matrix() + h.matrix().adjoint()) * c(0.5, 0.0);
        opalg::eigenvalues(&Operator::from_matrix_unchecked(sym).with_hint(true))?
    } else {
        opalg::eigenvalues(&h.clone().with_hint(false))?
    };
    let max_imag = eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(SpectralReport {
        hermitian,
        hermiticity_defect: defect,
        eigenvalues,
        max_imag,
    })
}

pub fn norm_decay_curve(h: &Operator, psi0: &StateVector, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    norm_decay_curve_with(Execution::default(), h, psi0, t_grid)
}

/// `(t, ‖exp(−iHt)ψ₀‖₂²)` for each grid time.
pub fn norm_decay_curve_with(exec: Execution, h: &Operator, psi0: &StateVector, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if psi0.dim() != h.dim() {
        return Err(Error::dims(h.dim(), psi0.dim()));
    }
    if !psi0.is_normalized(NORMALIZED_TOL) {
        return Err(Error::NotNormalized { norm: psi0.norm() });
    }
    if let Some(t) = t_grid.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "decay grid times must be finite and non-negative, got {t}"
        )));
    }
    let points = par::map(exec, t_grid, |&t| -> Result<(f64, f64)> {
        let psi = opalg::propagator(h, t)?.apply(psi0)?;
        let n = psi.norm();
        Ok((t, n * n))
    });
    points.into_iter().collect()
}

/// `diag(E_k − iγ_k/2)`: each eigenstate decays as `exp(−γ_k t)`.
pub fn resonance_hamiltonian(levels: &[(f64, f64)]) -> Operator {
    let diag: Vec<C64> = levels.iter().map(|&(e, gamma)| c(e, -gamma / 2.0)).collect();
    Operator::diagonal(&diag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub admits_unitary_picture: bool,
    pub complex_spectrum_detected: bool,
    pub report: SpectralReport,
}

/// Admits a unitary treatment iff the generator is Hermitian to within
/// [`DEFECT_TOL`].
pub fn schroedinger_picture_gate(h: &Operator) -> Result<GateDecision> {
    let report = spectral_report(h)?;
    let complex = !report.hermitian && report.max_imag > COMPLEX_SPECTRUM_REL * (1.0 + h.frobenius_norm());
    Ok(GateDecision {
        admits_unitary_picture: report.hermitian,
        complex_spectrum_detected: complex,
        report,
    })
}

/// Cheap gate check that skips the eigensolver.
pub fn passes_gate(h: &Operator) -> bool {
    hermiticity_defect(h) <= DEFECT_TOL
}
