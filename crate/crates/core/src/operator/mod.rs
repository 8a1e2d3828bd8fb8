//! The nonlocal bidomain operator
//! `Ā = A_i − A_i R_H (Ã_i + Ã_e)⁻¹ R_H* A_i`, its mean-free extension
//! `A = J* Ā J`, the boundary forcing and the extracellular recovery.

pub mod eigen;
pub mod elliptic;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::domain::{
    assemble_endo_load, assemble_forms, build_strip_mesh, check_compatibility, ConductivityField,
    CoupledMesh, FormAssembly, StripGeometry, Tensor2,
};
use crate::error::{check_len, Error, Result};
use crate::exec::Execution;

pub use eigen::{generalized_eigenbasis, EigenBasis, EigenDiagnostics};
pub use elliptic::{CoupledEllipticSolver, EllipticSolution};

/// Discrete bidomain operator on one mesh. The a-form matrix is built once,
/// column by column, from coupled elliptic solves.
pub struct BidomainOperator {
    pub mesh: CoupledMesh,
    pub cond: ConductivityField,
    pub forms: FormAssembly,
    solver: CoupledEllipticSolver,
    a_form: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
}

/// Extracellular potential on the whole domain with its heart and torso parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Extracellular {
    pub full: DVector<f64>,
    /// `u_e`, the restriction to the heart.
    pub heart: DVector<f64>,
    /// `u_T`, the torso nodes (the epicardial column belongs to the heart
    /// part, where both potentials coincide).
    pub torso: DVector<f64>,
}

impl BidomainOperator {
    pub fn new(mesh: CoupledMesh, cond: ConductivityField, exec: Execution) -> Result<Self> {
        let forms = assemble_forms(&mesh, &cond, exec)?;
        let solver = CoupledEllipticSolver::new(&forms)?;
        let x = solver.solve_heart_columns(&forms.k_i, exec)?;
        let mut a = &forms.k_i - &forms.k_i * x;
        a = (&a + a.transpose()) * 0.5;
        let mass_chol = forms
            .m_h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("heart mass matrix is not positive definite".into()))?;
        Ok(BidomainOperator {
            mesh,
            cond,
            forms,
            solver,
            a_form: a,
            mass_chol,
        })
    }

    /// Uniform tensors on a strip.
    pub fn uniform(
        geometry: &StripGeometry,
        sigma_i: Tensor2,
        sigma_e: Tensor2,
        sigma_t: Tensor2,
        exec: Execution,
    ) -> Result<Self> {
        let mesh = build_strip_mesh(geometry)?;
        let cond = ConductivityField::uniform(&mesh, sigma_i, sigma_e, sigma_t);
        Self::new(mesh, cond, exec)
    }

    pub fn n_heart(&self) -> usize {
        self.forms.n_heart
    }

    pub fn solver(&self) -> &CoupledEllipticSolver {
        &self.solver
    }

    /// Matrix of the form `a`: `a(u, v) = vᵀ A u` for mean-free `u`, `v`.
    pub fn a_form(&self) -> &DMatrix<f64> {
        &self.a_form
    }

    pub fn solve_coupled_elliptic(&self, r: &DVector<f64>) -> Result<EllipticSolution> {
        self.solver.solve(r)
    }

    /// `a(u, v) = ā(Ju, Jv)` from the assembled matrix.
    pub fn bilinear_a(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_len(self.n_heart(), u.len())?;
        check_len(self.n_heart(), v.len())?;
        let (ju, jv) = (self.forms.mean_free(u), self.forms.mean_free(v));
        Ok(jv.dot(&(&self.a_form * ju)))
    }

    /// `a(u, v)` evaluated directly from its definition with one coupled
    /// solve: `a_i(Ju − R_H W, Jv)` with `W = (Ã_i + Ã_e)⁻¹ R_H* A_i Ju`.
    pub fn bilinear_a_composed(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_len(self.n_heart(), u.len())?;
        check_len(self.n_heart(), v.len())?;
        let (ju, jv) = (self.forms.mean_free(u), self.forms.mean_free(v));
        let w = self.solver.solve(&(&self.forms.k_i * &ju))?.w;
        let diff = &ju - self.forms.restrict_heart(&w);
        Ok(jv.dot(&(&self.forms.k_i * diff)))
    }

    pub fn compute_eigenbasis(&self, m_max: usize) -> Result<EigenBasis> {
        generalized_eigenbasis(&self.a_form, &self.forms.m_h, self.forms.heart_volume, m_max)
    }

    /// Endocardial load `ℓ` after the compatibility check on `s_vals`.
    pub fn endo_load(&self, s_vals: &[f64]) -> Result<DVector<f64>> {
        let compat = check_compatibility(&self.mesh, s_vals)?;
        if !compat.passes {
            return Err(Error::Compatibility {
                defect: compat.defect,
                tolerance: compat.tolerance,
            });
        }
        assemble_endo_load(&self.forms, s_vals)
    }

    /// Heart functional `s = J* s̄` with `s̄ = −A_i R_H (Ã_i + Ã_e)⁻¹ R_H* s̄_e`.
    pub fn compute_forcing(&self, s_vals: &[f64]) -> Result<DVector<f64>> {
        let load = self.endo_load(s_vals)?;
        self.forcing_from_load(&load)
    }

    pub fn forcing_from_load(&self, load: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.solver.solve(load)?.w;
        let s_bar = -(&self.forms.k_i * self.forms.restrict_heart(&w));
        let total = s_bar.sum();
        Ok(s_bar - &self.forms.heart_mean * (total / self.forms.heart_volume))
    }

    /// `L_H` Riesz representative of a heart functional (one mass solve).
    pub fn riesz(&self, functional: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n_heart(), functional.len())?;
        Ok(self.mass_chol.solve(functional))
    }

    /// Extracellular/torso potential `(Ã_e + Ã_i)⁻¹ R_H*(s̄_e − A_i J u_m)`.
    pub fn recover_extracellular(&self, u_m: &DVector<f64>, load: &DVector<f64>) -> Result<Extracellular> {
        check_len(self.n_heart(), u_m.len())?;
        check_len(self.n_heart(), load.len())?;
        let rhs = load - &self.forms.k_i * self.forms.mean_free(u_m);
        let full = self.solver.solve(&rhs)?.w;
        let n = self.n_heart();
        Ok(Extracellular {
            heart: full.rows(0, n).into_owned(),
            torso: full.rows(n, full.len() - n).into_owned(),
            full,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn heart_only(n: usize) -> BidomainOperator {
        BidomainOperator::uniform(
            &StripGeometry::heart_only(n),
            Tensor2::isotropic(1.0),
            Tensor2::isotropic(2.0),
            Tensor2::isotropic(1.5),
            Execution::Parallel,
        )
        .unwrap()
    }

    fn coupled() -> BidomainOperator {
        BidomainOperator::uniform(
            &StripGeometry {
                nx_heart: 6,
                nx_torso: 4,
                ny: 5,
                ..Default::default()
            },
            Tensor2::diag(1.0, 0.5),
            Tensor2::diag(2.0, 1.5),
            Tensor2::isotropic(1.5),
            Execution::Parallel,
        )
        .unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matrix_and_composed_routes_agree() {
        let op = coupled();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let (u, v) = (random(&mut rng, op.n_heart()), random(&mut rng, op.n_heart()));
            let a = op.bilinear_a(&u, &v).unwrap();
            let b = op.bilinear_a_composed(&u, &v).unwrap();
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            let ba = op.bilinear_a(&v, &u).unwrap();
            assert!((a - ba).abs() <= 1e-12 * u.norm() * v.norm());
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let op = coupled();
        let one = DVector::from_element(op.n_heart(), 3.0);
        let v = random(&mut ChaCha8Rng::seed_from_u64(1), op.n_heart());
        assert!(op.bilinear_a(&one, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn heart_only_form_is_harmonic_mean_laplacian() {
        let op = heart_only(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let (u, v) = (random(&mut rng, op.n_heart()), random(&mut rng, op.n_heart()));
            let a = op.bilinear_a(&u, &v).unwrap();
            let expected = (2.0 / 3.0) * v.dot(&(&op.forms.grad_heart * &u));
            assert!((a - expected).abs() < 1e-11);
        }
    }

    #[test]
    fn eigenbasis_invariants() {
        let op = coupled();
        let basis = op.compute_eigenbasis(20).unwrap();
        assert_eq!(basis.lambdas[0], 0.0);
        assert!(basis.lambdas.windows(2).all(|w| w[0] <= w[1]));
        assert!(basis.lambdas[1] > 0.1);
        assert!(basis.diagnostics.orthonormality_defect < 1e-10);
        assert!(basis.diagnostics.scaled_residual < 1e-10);
        let c0 = 1.0 / op.forms.heart_volume.sqrt();
        assert!(basis.psi.column(0).iter().all(|v| (*v - c0).abs() < 1e-15));
        assert!(matches!(
            op.compute_eigenbasis(op.n_heart()),
            Err(Error::Level { .. })
        ));
    }

    #[test]
    fn smallest_nonzero_eigenvalue_approaches_two_thirds_pi_squared() {
        let target = 2.0 / 3.0 * PI * PI;
        let errs: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| (heart_only(n).compute_eigenbasis(1).unwrap().lambdas[1] - target).abs())
            .collect();
        assert!(errs[2] / target < 5e-3);
        assert!((errs[0] / errs[1]).log2() > 1.8 && (errs[1] / errs[2]).log2() > 1.8);
    }

    #[test]
    fn forcing_matches_dense_composition() {
        let op = heart_only(8);
        let s_vals = op.mesh.sample_endo(|y| (2.0 * PI * y).cos());
        let s = op.compute_forcing(&s_vals).unwrap();
        // Dense oracle: −K_i (K_i + K_e + h hᵀ)⁻¹ ℓ, valid because ℓ ⊥ 1.
        let load = assemble_endo_load(&op.forms, &s_vals).unwrap();
        let h = &op.forms.heart_mean;
        let k = &op.forms.k_i + &op.forms.k_e + h * h.transpose();
        let w = k.lu().solve(&load).unwrap();
        let oracle = -(&op.forms.k_i * w);
        assert!((&s - &oracle).norm() <= 1e-8 * oracle.norm());
        assert!(s.norm() > 0.0);
        assert_eq!(op.compute_forcing(&vec![0.0; s_vals.len()]).unwrap().amax(), 0.0);
        let constant = op.mesh.sample_endo(|_| 0.7);
        assert!(matches!(op.compute_forcing(&constant), Err(Error::Compatibility { .. })));
    }

    #[test]
    fn recovery_in_heart_only_mode() {
        let op = heart_only(8);
        let basis = op.compute_eigenbasis(3).unwrap();
        let psi = basis.psi.column(1).into_owned();
        let zero = DVector::zeros(op.n_heart());
        let rec = op.recover_extracellular(&psi, &zero).unwrap();
        assert!((&rec.heart + &psi / 3.0).amax() < 1e-11);
        assert!(rec.torso.is_empty());
        let none = op.recover_extracellular(&zero, &zero).unwrap();
        assert_eq!(none.full.amax(), 0.0);
    }

    #[test]
    fn recovery_satisfies_the_variational_identity() {
        let op = coupled();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u_m = random(&mut rng, op.n_heart());
        let s_vals = op.mesh.sample_endo(|y| (2.0 * PI * y).sin() + 0.5 * (4.0 * PI * y).cos());
        let load = op.endo_load(&s_vals).unwrap();
        let rec = op.recover_extracellular(&u_m, &load).unwrap();
        // (ã_e + ã_i)(u, φ) + a_i(u_m, R_H φ) = ⟨s̄_e, R_H φ⟩ for every φ with
        // zero heart mean: test with φ_k = e_k − (h_k/|Ω_H|)·1 on all nodes.
        let ku = &op.forms.k_full * &rec.full;
        let kum = &op.forms.k_i * &u_m;
        let n = op.n_heart();
        let residual: DVector<f64> = DVector::from_fn(op.forms.n_full, |k, _| {
            let mut r = ku[k];
            if k < n {
                r += kum[k] - load[k];
            }
            r
        });
        let total = residual.sum();
        let scale = ku.norm() + kum.norm() + load.norm();
        let worst = (0..op.forms.n_full)
            .map(|k| {
                let phi_k = op.forms.heart_mean.get(k).copied().unwrap_or(0.0);
                (residual[k] - total * phi_k / op.forms.heart_volume).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-10 * scale);
        assert!(op.forms.heart_integral(&rec.heart).abs() < 1e-12);
    }

    #[test]
    fn gauge_invariance() {
        let op = coupled();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random(&mut rng, op.n_heart());
        let v = random(&mut rng, op.n_heart());
        let shifted = u.add_scalar(2.5);
        let a = op.bilinear_a(&u, &v).unwrap();
        assert!((a - op.bilinear_a(&shifted, &v).unwrap()).abs() < 1e-12);
        let zero = DVector::zeros(op.n_heart());
        let r1 = op.recover_extracellular(&u, &zero).unwrap();
        let r2 = op.recover_extracellular(&shifted, &zero).unwrap();
        assert!((r1.full - r2.full).amax() < 1e-12);
    }
}
