//! Piecewise-constant conductivity tensors and their admissibility checks.

use crate::domain::mesh::{CoupledMesh, Region};
use crate::error::{Error, Result};

/// Symmetric 2x2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub const fn diag(xx: f64, yy: f64) -> Self {
        Tensor2 { xx, xy: 0.0, yy }
    }

    pub const fn isotropic(s: f64) -> Self {
        Tensor2::diag(s, s)
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let radius = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (mean - radius, mean + radius)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    pub fn quadratic(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let sb = self.apply(b);
        a[0] * sb[0] + a[1] * sb[1]
    }
}

impl std::ops::Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2 {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }
}

/// Conductivities per element. `sigma_i` and `sigma_e` are indexed by heart
/// element (heart elements come first in the mesh), `sigma_t` by torso
/// element in mesh order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductivityField {
    pub sigma_i: Vec<Tensor2>,
    pub sigma_e: Vec<Tensor2>,
    pub sigma_t: Vec<Tensor2>,
    pub m_ell: f64,
    pub big_m_ell: f64,
}

/// Relative tolerance for the normal/tangential coupling on fiber faces.
const FIBER_TOL: f64 = 1e-12;

impl ConductivityField {
    /// Same tensor on every element of each region; the ellipticity bounds
    /// are the extreme eigenvalues over the three tensors.
    pub fn uniform(mesh: &CoupledMesh, si: Tensor2, se: Tensor2, st: Tensor2) -> Self {
        let n_heart = mesh.heart_elements().count();
        let n_torso = mesh.elements.len() - n_heart;
        let mut tensors = vec![si, se];
        if n_torso > 0 {
            tensors.push(st);
        }
        let (lo, hi) = tensors.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| {
            let (a, b) = t.eigenvalues();
            (lo.min(a), hi.max(b))
        });
        ConductivityField {
            sigma_i: vec![si; n_heart],
            sigma_e: vec![se; n_heart],
            sigma_t: vec![st; n_torso],
            m_ell: lo,
            big_m_ell: hi,
        }
    }

    /// Replace the ellipticity bounds (they must still enclose every tensor).
    pub fn with_bounds(mut self, m_ell: f64, big_m_ell: f64) -> Self {
        self.m_ell = m_ell;
        self.big_m_ell = big_m_ell;
        self
    }

    /// Tensor of `ã_i + ã_e` on element `e`: `σ_i + σ_e` on the heart, `σ_T`
    /// on the torso.
    pub fn full_tensor(&self, mesh: &CoupledMesh, e: usize) -> Tensor2 {
        let n_heart = self.sigma_i.len();
        match mesh.elements[e].region {
            Region::Heart => self.sigma_i[e] + self.sigma_e[e],
            Region::Torso => self.sigma_t[e - n_heart],
        }
    }

    pub fn validate(&self, mesh: &CoupledMesh) -> Result<()> {
        let n_heart = mesh.heart_elements().count();
        let n_torso = mesh.elements.len() - n_heart;
        if self.sigma_i.len() != n_heart || self.sigma_e.len() != n_heart {
            return Err(Error::Shape {
                expected: n_heart,
                actual: self.sigma_i.len().min(self.sigma_e.len()),
            });
        }
        if self.sigma_t.len() != n_torso {
            return Err(Error::Shape {
                expected: n_torso,
                actual: self.sigma_t.len(),
            });
        }
        if !(self.m_ell > 0.0 && self.big_m_ell >= self.m_ell && self.big_m_ell.is_finite()) {
            return Err(Error::Config(format!(
                "ellipticity bounds must satisfy 0 < m <= M, got m = {}, M = {}",
                self.m_ell, self.big_m_ell
            )));
        }
        let heart = self.sigma_i.iter().chain(&self.sigma_e).enumerate().map(|(k, t)| (k % n_heart.max(1), t));
        let torso = self.sigma_t.iter().enumerate().map(|(k, t)| (n_heart + k, t));
        for (element, t) in heart.chain(torso) {
            let (min, max) = t.eigenvalues();
            let symmetric_finite = t.xx.is_finite() && t.xy.is_finite() && t.yy.is_finite();
            if !symmetric_finite || min < self.m_ell || max > self.big_m_ell {
                return Err(Error::Ellipticity {
                    element,
                    min,
                    max,
                    lower: self.m_ell,
                    upper: self.big_m_ell,
                });
            }
        }
        // Normals on the endocardium and epicardium are ±x, so the fiber
        // condition forces σ e_x = σ_n e_x, i.e. no xy coupling and xx >= m.
        let nx_heart = mesh.geometry.nx_heart;
        for (element, q) in mesh.heart_elements() {
            if q.column != 0 && q.column + 1 != nx_heart {
                continue;
            }
            for t in [&self.sigma_i[element], &self.sigma_e[element]] {
                let coupling = t.xy.abs() / t.xx.abs().max(f64::MIN_POSITIVE);
                if coupling > FIBER_TOL || t.xx < self.m_ell {
                    return Err(Error::Fiber {
                        element,
                        normal: t.xx,
                        coupling: t.xy,
                    });
                }
            }
        }
        Ok(())
    }
}
