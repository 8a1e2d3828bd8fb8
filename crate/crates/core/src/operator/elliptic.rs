//! Coupled heart+torso elliptic solve with a heart-mean constraint.
//!
//! Solves the bordered system
//!
//! ```text
//! [ K_full  ĥ ] [W]   [r]
//! [ ĥᵀ      0 ] [μ] = [0]
//! ```
//!
//! where `ĥ` is the heart-mean functional extended by zero to the torso.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::domain::FormAssembly;
use crate::error::{check_len, Error, Result};
use crate::exec::Execution;

/// Relative tolerance for `|Σ r| ≤ tol · Σ|r|`.
pub const RHS_COMPATIBILITY_TOL: f64 = 1e-10;

/// Column block size for multi right-hand-side solves.
const BLOCK: usize = 16;

pub struct CoupledEllipticSolver {
    lu: LU<f64, Dyn, Dyn>,
    n_full: usize,
    n_heart: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticSolution {
    /// Full-domain potential with zero heart mean.
    pub w: DVector<f64>,
    /// Lagrange multiplier of the mean constraint.
    pub multiplier: f64,
}

impl CoupledEllipticSolver {
    pub fn new(forms: &FormAssembly) -> Result<Self> {
        let n = forms.n_full;
        let mut b = DMatrix::zeros(n + 1, n + 1);
        b.view_mut((0, 0), (n, n)).copy_from(&forms.k_full);
        for i in 0..forms.n_heart {
            b[(i, n)] = forms.heart_mean[i];
            b[(n, i)] = forms.heart_mean[i];
        }
        let lu = b.lu();
        if !lu.is_invertible() {
            return Err(Error::Numerical(
                "bordered coupled stiffness matrix is singular".into(),
            ));
        }
        Ok(CoupledEllipticSolver {
            lu,
            n_full: n,
            n_heart: forms.n_heart,
        })
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    fn check_rhs(r: &[f64]) -> Result<()> {
        let sum: f64 = r.iter().sum();
        let scale: f64 = r.iter().map(|v| v.abs()).sum();
        let tolerance = RHS_COMPATIBILITY_TOL * scale;
        if sum.abs() > tolerance {
            return Err(Error::Compatibility {
                defect: sum.abs(),
                tolerance,
            });
        }
        Ok(())
    }

    /// Solve with a full-domain right-hand side functional `r` (`rᵀ1 = 0`).
    pub fn solve_full(&self, r: &DVector<f64>) -> Result<EllipticSolution> {
        check_len(self.n_full, r.len())?;
        Self::check_rhs(r.as_slice())?;
        let mut rhs = DVector::zeros(self.n_full + 1);
        rhs.rows_mut(0, self.n_full).copy_from(r);
        let x = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("coupled solve failed".into()))?;
        Ok(EllipticSolution {
            w: x.rows(0, self.n_full).into_owned(),
            multiplier: x[self.n_full],
        })
    }

    /// Solve with a heart functional `r`, extended by zero to the torso
    /// (the `R_H*` lift).
    pub fn solve(&self, r: &DVector<f64>) -> Result<EllipticSolution> {
        check_len(self.n_heart, r.len())?;
        let mut full = DVector::zeros(self.n_full);
        full.rows_mut(0, self.n_heart).copy_from(r);
        self.solve_full(&full)
    }

    /// Solve for every column of `rhs` (heart functionals, one per column) and
    /// return the heart restrictions of the solutions. Column blocks are
    /// independent and share the factorization.
    pub fn solve_heart_columns(&self, rhs: &DMatrix<f64>, exec: Execution) -> Result<DMatrix<f64>> {
        check_len(self.n_heart, rhs.nrows())?;
        let k = rhs.ncols();
        for j in 0..k {
            Self::check_rhs(rhs.column(j).as_slice())?;
        }
        let blocks = k.div_ceil(BLOCK);
        let parts = exec.map(blocks, |b| {
            let start = b * BLOCK;
            let width = BLOCK.min(k - start);
            let mut x = DMatrix::zeros(self.n_full + 1, width);
            x.view_mut((0, 0), (self.n_heart, width))
                .copy_from(&rhs.columns(start, width));
            self.lu.solve_mut(&mut x);
            x
        });
        let mut out = DMatrix::zeros(self.n_heart, k);
        for (b, x) in parts.into_iter().enumerate() {
            let width = x.ncols();
            out.columns_mut(b * BLOCK, width)
                .copy_from(&x.view((0, 0), (self.n_heart, width)));
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("coupled column solve produced non-finite values".into()));
        }
        Ok(out)
    }
}
