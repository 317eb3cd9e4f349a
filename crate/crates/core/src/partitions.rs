//! Direct-sum partitions `H = P_A H P_A + P_A H P_B + P_B H P_A + P_B H P_B`
//! and the energy-dependent effective Hamiltonian on subspace A.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::{self, c, frobenius, CMatrix, CVector, Operator, Projector, StateVector, C64};
use crate::par::{self, Execution};

/// Minimum A-weight `‖P_A ψ‖₂` for an eigenvector to enter the fixed-point check.
pub const A_COMPONENT_MIN: f64 = 1e-8;
const RESOLVENT_SIGMA_REL: f64 = 1e-10;
const SUBSPACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PartitionBlocks {
    pub h: Operator,
    pub p_a: Projector,
    pub p_b: Projector,
    pub h_aa: Operator,
    pub h_ab: Operator,
    pub h_ba: Operator,
    pub h_bb: Operator,
}

impl PartitionBlocks {
    /// `‖(H_AA + H_AB + H_BA + H_BB) − H‖_F / ‖H‖_F` (absolute when `H = 0`).
    pub fn reassembly_error(&self) -> f64 {
        let sum = self.h_aa.matrix() + self.h_ab.matrix() + self.h_ba.matrix() + self.h_bb.matrix();
        let err = frobenius(&(sum - self.h.matrix()));
        let scale = self.h.frobenius_norm();
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

fn sandwich(left: &Projector, h: &Operator, right: &Projector) -> Operator {
    Operator::from_matrix_unchecked(left.operator().matrix() * h.matrix() * right.operator().matrix())
}

pub fn decompose(h: &Operator, p_a: &Projector) -> Result<PartitionBlocks> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            defect: h.hermitian_max_defect() / (1.0 + h.frobenius_norm()),
        });
    }
    if p_a.dim() != h.dim() {
        return Err(Error::dims(h.dim(), p_a.dim()));
    }
    if p_a.rank() == 0 || p_a.rank() >= h.dim() {
        return Err(Error::TrivialPartition {
            rank: p_a.rank(),
            dim: h.dim(),
        });
    }
    let p_b = p_a.complement();
    Ok(PartitionBlocks {
        h_aa: sandwich(p_a, h, p_a),
        h_ab: sandwich(p_a, h, &p_b),
        h_ba: sandwich(&p_b, h, p_a),
        h_bb: sandwich(&p_b, h, &p_b),
        h: h.clone(),
        p_a: p_a.clone(),
        p_b,
    })
}

/// `‖[H_AA, H_BB]‖_F`.
pub fn block_commutator_residual(blocks: &PartitionBlocks) -> f64 {
    opalg::commutator(&blocks.h_aa, &blocks.h_bb)
        .map(|k| k.frobenius_norm())
        .expect("blocks share the full dimension")
}

/// Effective Hamiltonian together with the A-basis it is expressed in.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    /// `rank_A × rank_A` operator.
    pub operator: Operator,
    /// `dim × rank_A` orthonormal basis of subspace A.
    pub basis_a: CMatrix,
}

/// Restricts the partition to orthonormal bases of A and B once, so that the
/// effective Hamiltonian can be evaluated at many energies.
#[derive(Debug, Clone)]
pub struct FeshbachSolver {
    basis_a: CMatrix,
    h_aa: CMatrix,
    h_ab: CMatrix,
    h_ba: CMatrix,
    h_bb: CMatrix,
    h_bb_spectrum: Vec<f64>,
    h_bb_norm: f64,
}

impl FeshbachSolver {
    pub fn new(blocks: &PartitionBlocks) -> Self {
        let qa = blocks.p_a.range_basis();
        let qb = blocks.p_b.range_basis();
        let h = blocks.h.matrix();
        let h_bb = qb.adjoint() * h * &qb;
        let h_bb_spectrum = opalg::hermitian_eigen(&h_bb).map(|(v, _)| v).expect("H_BB is Hermitian");
        FeshbachSolver {
            h_aa: qa.adjoint() * h * &qa,
            h_ab: qa.adjoint() * h * &qb,
            h_ba: qb.adjoint() * h * &qa,
            h_bb,
            h_bb_spectrum,
            h_bb_norm: blocks.h_bb.frobenius_norm(),
            basis_a: qa,
        }
    }

    pub fn basis_a(&self) -> &CMatrix {
        &self.basis_a
    }

    /// Coordinates of `P_A ψ` in the A-basis.
    pub fn a_component(&self, psi: &StateVector) -> CVector {
        self.basis_a.adjoint() * psi.vector()
    }

    /// `H_AA + H_AB (E − H_BB)⁻¹ H_BA` on subspace A.
    pub fn at(&self, energy: C64) -> Result<CMatrix> {
        let rb = self.h_bb.nrows();
        let shifted = CMatrix::identity(rb, rb) * energy - &self.h_bb;
        // E − H_BB is normal, so its singular values are |E − λ_k|.
        let sigma_min = self
            .h_bb_spectrum
            .iter()
            .map(|&l| (energy - l).norm())
            .fold(f64::INFINITY, f64::min);
        let bound = RESOLVENT_SIGMA_REL * (1.0 + energy.norm() + self.h_bb_norm);
        if sigma_min.is_nan() || sigma_min < bound {
            return Err(Error::ResolventSingular {
                re: energy.re,
                im: energy.im,
                sigma_min,
            });
        }
        let coupling = shifted.lu().solve(&self.h_ba).ok_or(Error::ResolventSingular {
            re: energy.re,
            im: energy.im,
            sigma_min,
        })?;
        Ok(&self.h_aa + &self.h_ab * coupling)
    }
}

/// Effective Hamiltonian at `energy`, expressed in the phase-fixed
/// eigenvector basis of `P_A` (see [`Projector::range_basis`]).
pub fn effective_hamiltonian(blocks: &PartitionBlocks, energy: C64) -> Result<Operator> {
    Ok(effective_hamiltonian_with_basis(blocks, energy)?.operator)
}

pub fn effective_hamiltonian_with_basis(blocks: &PartitionBlocks, energy: C64) -> Result<EffectiveHamiltonian> {
    let solver = FeshbachSolver::new(blocks);
    let m = solver.at(energy)?;
    Ok(EffectiveHamiltonian {
        operator: Operator::from_matrix_unchecked(m),
        basis_a: solver.basis_a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConsistencyOutcome {
    /// `‖H_eff(E) ψ_A − E ψ_A‖₂ / ‖ψ_A‖₂`.
    Residual { value: f64 },
    /// `E` hits the spectrum of `H_BB`.
    ResolventSingular { sigma_min: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub energy: f64,
    pub a_weight: f64,
    pub outcome: ConsistencyOutcome,
}

impl ConsistencyEntry {
    pub fn residual(&self) -> Option<f64> {
        match self.outcome {
            ConsistencyOutcome::Residual { value } => Some(value),
            ConsistencyOutcome::ResolventSingular { .. } => None,
        }
    }
}

pub fn feshbach_eigenconsistency(h: &Operator, p_a: &Projector) -> Result<Vec<ConsistencyEntry>> {
    feshbach_eigenconsistency_with(Execution::default(), h, p_a)
}

/// Checks that every eigenvalue `E` of `H` with a non-negligible A-component
/// is a fixed point `H_eff(E) ψ_A = E ψ_A`. Eigenvalues at which the
/// resolvent is singular are flagged rather than failing the whole call.
pub fn feshbach_eigenconsistency_with(exec: Execution, h: &Operator, p_a: &Projector) -> Result<Vec<ConsistencyEntry>> {
    let blocks = decompose(h, p_a)?;
    let solver = FeshbachSolver::new(&blocks);
    let pairs = opalg::eigendecompose(h)?;
    let candidates: Vec<(f64, CVector, f64)> = pairs
        .into_iter()
        .filter_map(|p| {
            let psi_a = solver.a_component(&p.vector);
            let weight = psi_a.norm();
            (weight > A_COMPONENT_MIN).then_some((p.value.re, psi_a, weight))
        })
        .collect();
    let entries = par::map(exec, &candidates, |(energy, psi_a, weight)| {
        let outcome = match solver.at(c(*energy, 0.0)) {
            Ok(heff) => {
                let r = &heff * psi_a - psi_a * c(*energy, 0.0);
                Ok(ConsistencyOutcome::Residual {
                    value: r.norm() / weight,
                })
            }
            Err(Error::ResolventSingular { sigma_min, .. }) => Ok(ConsistencyOutcome::ResolventSingular { sigma_min }),
            Err(e) => Err(e),
        };
        outcome.map(|outcome| ConsistencyEntry {
            energy: *energy,
            a_weight: *weight,
            outcome,
        })
    });
    entries.into_iter().collect()
}

/// `‖(1 − P_V) H ψ‖₂` for `ψ ∈ V`: the component of the exact time
/// derivative that leaves the variational subspace.
pub fn dirac_frenkel_error(h: &Operator, p_v: &Projector, psi: &StateVector) -> Result<f64> {
    if p_v.dim() != h.dim() {
        return Err(Error::dims(h.dim(), p_v.dim()));
    }
    if psi.dim() != h.dim() {
        return Err(Error::dims(h.dim(), psi.dim()));
    }
    let q = p_v.complement();
    let leakage = q.operator().apply(psi)?.norm();
    if leakage > SUBSPACE_TOL * psi.norm().max(1.0) {
        return Err(Error::NotInSubspace { leakage });
    }
    Ok(q.operator().apply(&h.apply(psi)?)?.norm())
}

/// `‖(1 − P_V) H P_V‖_F`; zero exactly when V is invariant under H.
pub fn subspace_leakage(h: &Operator, p_v: &Projector) -> Result<f64> {
    if p_v.dim() != h.dim() {
        return Err(Error::dims(h.dim(), p_v.dim()));
    }
    let q = p_v.complement();
    Ok(frobenius(&(q.operator().matrix() * h.matrix() * p_v.operator().matrix())))
}

/// For each eigenvalue of `H_AA` restricted to A, the distance to the
/// nearest eigenvalue of `H`; returns the largest such distance.
pub fn bare_block_spectral_gap(h: &Operator, p_a: &Projector) -> Result<f64> {
    let blocks = decompose(h, p_a)?;
    let solver = FeshbachSolver::new(&blocks);
    let bare = Operator::from_matrix_unchecked(solver.h_aa.clone()).with_hint(true);
    let bare_vals = opalg::eigenvalues(&bare)?;
    let full_vals = opalg::eigenvalues(h)?;
    let gap = bare_vals
        .iter()
        .map(|b| full_vals.iter().map(|f| (b - f).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{pauli_x, projector_from_basis, random_hermitian, random_projector, ONE, ZERO};

    fn coordinate_projector(dim: usize, coords: &[usize]) -> Projector {
        let cols: Vec<_> = coords.iter().map(|&k| StateVector::basis(dim, k)).collect();
        projector_from_basis(&cols).unwrap()
    }

    fn two_level(delta: f64, g: f64) -> Operator {
        Operator::from_real_rows(&[&[0.0, g], &[g, delta]]).unwrap()
    }

    #[test]
    fn block_diagonal_has_no_coupling() {
        let h = Operator::from_real_rows(&[&[1.0, 2.0, 0.0], &[2.0, -1.0, 0.0], &[0.0, 0.0, 5.0]]).unwrap();
        let blocks = decompose(&h, &coordinate_projector(3, &[0, 1])).unwrap();
        assert_eq!(blocks.h_ab.frobenius_norm(), 0.0);
        assert_eq!(blocks.h_ba.frobenius_norm(), 0.0);
        assert_eq!(block_commutator_residual(&blocks), 0.0);
    }

    #[test]
    fn pauli_x_split_by_first_coordinate() {
        let blocks = decompose(&pauli_x(), &coordinate_projector(2, &[0])).unwrap();
        assert_eq!(blocks.h_aa.frobenius_norm(), 0.0);
        assert_eq!(blocks.h_ab.get(0, 1), ONE);
        assert_eq!(blocks.h_ab.get(1, 0), ZERO);
        assert_eq!(blocks.h_ba.get(1, 0), ONE);
        assert!(blocks.reassembly_error() < 1e-15);
    }

    #[test]
    fn decompose_errors() {
        let non_herm = Operator::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(
            decompose(&non_herm, &coordinate_projector(2, &[0])).unwrap_err(),
            Error::NotHermitian { .. }
        ));
        assert!(matches!(
            decompose(&pauli_x(), &Projector::identity(2)).unwrap_err(),
            Error::TrivialPartition { rank: 2, dim: 2 }
        ));
        assert!(matches!(
            decompose(&pauli_x(), &coordinate_projector(3, &[0])).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn identity_blocks_commute() {
        let blocks = decompose(&Operator::identity(4), &random_projector(4, 2, 1).unwrap()).unwrap();
        assert!(block_commutator_residual(&blocks) < 1e-15);
    }

    #[test]
    fn uncoupled_effective_hamiltonian_is_bare_block() {
        let h = Operator::from_real_rows(&[&[0.7, 0.0], &[0.0, 3.0]]).unwrap();
        let blocks = decompose(&h, &coordinate_projector(2, &[0])).unwrap();
        for e in [-2.0, 0.1, 10.0] {
            let heff = effective_hamiltonian(&blocks, c(e, 0.0)).unwrap();
            assert!((heff.get(0, 0) - c(0.7, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn two_level_self_energy() {
        let (delta, g) = (1.0, 2.0);
        let blocks = decompose(&two_level(delta, g), &coordinate_projector(2, &[0])).unwrap();
        for e in [-3.0, 0.5, 4.0] {
            let heff = effective_hamiltonian(&blocks, c(e, 0.0)).unwrap();
            assert_eq!(heff.dim(), 1);
            let expected = g * g / (e - delta);
            assert!((heff.get(0, 0).re - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn resolvent_pole_is_singular() {
        let blocks = decompose(&two_level(1.0, 2.0), &coordinate_projector(2, &[0])).unwrap();
        assert!(matches!(
            effective_hamiltonian(&blocks, c(1.0, 0.0)).unwrap_err(),
            Error::ResolventSingular { .. }
        ));
    }

    #[test]
    fn eigenconsistency_for_pauli_x() {
        let entries = feshbach_eigenconsistency(&pauli_x(), &coordinate_projector(2, &[0])).unwrap();
        assert_eq!(entries.len(), 2);
        for e in &entries {
            assert!((e.energy.abs() - 1.0).abs() < 1e-14);
            assert!(e.residual().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn eigenconsistency_block_diagonal() {
        let h = Operator::from_real_rows(&[&[1.0, 0.5, 0.0], &[0.5, -1.0, 0.0], &[0.0, 0.0, 2.0]]).unwrap();
        let entries = feshbach_eigenconsistency(&h, &coordinate_projector(3, &[0, 1])).unwrap();
        assert_eq!(entries.len(), 2);
        for e in entries {
            assert!(e.residual().unwrap() <= 1e-12);
        }
    }

    #[test]
    fn eigenconsistency_flags_singular_resolvent() {
        // The eigenvalue 2 lives in both blocks.
        let h = Operator::diagonal(&[c(2.0, 0.0), c(2.0, 0.0), c(-1.0, 0.0)]);
        let entries = feshbach_eigenconsistency(&h, &coordinate_projector(3, &[0])).unwrap();
        assert!(entries
            .iter()
            .any(|e| matches!(e.outcome, ConsistencyOutcome::ResolventSingular { .. })));
    }

    #[test]
    fn dirac_frenkel_examples() {
        let psi = random_crate_state();
        assert_eq!(dirac_frenkel_error(&random_hermitian(3, 2), &Projector::identity(3), &psi).unwrap(), 0.0);

        let e = dirac_frenkel_error(&pauli_x(), &coordinate_projector(2, &[0]), &StateVector::basis(2, 0)).unwrap();
        assert!((e - 1.0).abs() < 1e-15);

        let h = Operator::from_real_rows(&[&[1.0, 0.5, 0.0], &[0.5, -1.0, 0.0], &[0.0, 0.0, 2.0]]).unwrap();
        let p = coordinate_projector(3, &[0, 1]);
        let inside = StateVector::from_real(&[0.6, 0.8, 0.0]);
        assert_eq!(dirac_frenkel_error(&h, &p, &inside).unwrap(), 0.0);

        let outside = StateVector::from_real(&[0.6, 0.0, 0.8]);
        assert!(matches!(
            dirac_frenkel_error(&h, &p, &outside).unwrap_err(),
            Error::NotInSubspace { .. }
        ));
    }

    fn random_crate_state() -> StateVector {
        crate::opalg::random_state(3, 77)
    }

    #[test]
    fn bare_block_misses_the_coupled_levels() {
        let h = Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 1.0]]).unwrap();
        let gap = bare_block_spectral_gap(&h, &coordinate_projector(2, &[0])).unwrap();
        // H_AA = 0 while the levels are (1 ± √5)/2.
        assert!((gap - (5.0_f64.sqrt() - 1.0) / 2.0).abs() < 1e-14);
    }
}
