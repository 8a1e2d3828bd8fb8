//! Mass-orthonormal eigenbasis of the discrete bidomain operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Eigen-residual / orthonormality level above which the solve is rejected.
const ACCEPT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenDiagnostics {
    /// `max_ij |ψ_iᵀ M ψ_j − δ_ij|`.
    pub orthonormality_defect: f64,
    /// `max_i ‖Aψ_i − λ_i Mψ_i‖ / (‖Mψ_i‖ (1 + λ_i))`.
    pub scaled_residual: f64,
    /// Eigenvalue the solver returned for the constant mode before it was
    /// pinned to zero.
    pub raw_lambda0: f64,
}

/// `(λ_n, ψ_n)` for `n = 0..=m_max`, ascending, with `ψ_iᵀ M_H ψ_j = δ_ij`.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub lambdas: Vec<f64>,
    /// Heart-nodal coefficients, one column per mode.
    pub psi: DMatrix<f64>,
    pub m_max: usize,
    pub mass: DMatrix<f64>,
    pub heart_volume: f64,
    pub diagnostics: EigenDiagnostics,
}

impl EigenBasis {
    /// Number of modes (`m_max + 1`).
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn n_heart(&self) -> usize {
        self.psi.nrows()
    }

    /// First `m + 1` modes.
    pub fn truncate(&self, m: usize) -> Result<EigenBasis> {
        if m > self.m_max {
            return Err(Error::Level {
                requested: m,
                available: self.m_max,
            });
        }
        Ok(EigenBasis {
            lambdas: self.lambdas[..=m].to_vec(),
            psi: self.psi.columns(0, m + 1).into_owned(),
            m_max: m,
            ..self.clone()
        })
    }

    /// `(v, ψ_i)` for `i = 0..=m_max` of a heart-nodal function `v`.
    pub fn coefficients(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n_heart(), v.len())?;
        Ok(self.psi.tr_mul(&(&self.mass * v)))
    }

    /// `Σ c_i ψ_i` for the leading `c.len()` modes.
    pub fn synthesize(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() > self.len() {
            return Err(Error::Level {
                requested: c.len() - 1,
                available: self.m_max,
            });
        }
        Ok(self.psi.columns(0, c.len()) * c)
    }
}

/// Solve `A ψ = λ M ψ` for symmetric `A` (positive semidefinite, kernel =
/// constants) and SPD `M`, keeping the lowest `m_max + 1` pairs.
pub fn generalized_eigenbasis(
    a: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    heart_volume: f64,
    m_max: usize,
) -> Result<EigenBasis> {
    let n = a.nrows();
    if m_max + 1 > n {
        return Err(Error::Level {
            requested: m_max,
            available: n.saturating_sub(1),
        });
    }
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("heart mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let order = &order[..=m_max];

    let y = DMatrix::from_fn(n, m_max + 1, |r, k| eig.eigenvectors[(r, order[k])]);
    let mut psi = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("back substitution failed".into()))?;
    let mut lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let raw_lambda0 = lambdas[0];
    let top = lambdas[m_max].abs().max(1.0);
    if raw_lambda0.abs() > 1e-8 * top {
        return Err(Error::Numerical(format!(
            "lowest eigenvalue {raw_lambda0:.3e} is not zero; constants are not the kernel"
        )));
    }
    lambdas[0] = 0.0;
    psi.column_mut(0).fill(1.0 / heart_volume.sqrt());
    let psi0 = psi.column(0).into_owned();
    let m_psi0 = mass * &psi0;
    for k in 1..=m_max {
        let mut col = psi.column(k).into_owned();
        col -= &psi0 * m_psi0.dot(&col);
        let norm = col.dot(&(mass * &col)).sqrt();
        col /= norm;
        let peak = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * peak) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        psi.set_column(k, &col);
    }

    let m_psi = mass * &psi;
    let gram = psi.tr_mul(&m_psi);
    let orthonormality_defect = (&gram - DMatrix::identity(m_max + 1, m_max + 1)).amax();
    let a_psi = a * &psi;
    let scaled_residual = (0..=m_max)
        .map(|k| {
            let r = a_psi.column(k) - m_psi.column(k) * lambdas[k];
            r.norm() / (m_psi.column(k).norm() * (1.0 + lambdas[k]))
        })
        .fold(0.0f64, f64::max);
    if !(orthonormality_defect <= ACCEPT_TOL && scaled_residual <= ACCEPT_TOL) {
        return Err(Error::Numerical(format!(
            "eigensolve not accepted: orthonormality defect {orthonormality_defect:.3e}, scaled residual {scaled_residual:.3e}"
        )));
    }

    Ok(EigenBasis {
        lambdas,
        psi,
        m_max,
        mass: mass.clone(),
        heart_volume,
        diagnostics: EigenDiagnostics {
            orthonormality_defect,
            scaled_residual,
            raw_lambda0,
        },
    })
}
