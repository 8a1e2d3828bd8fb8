//! Bilinear-form assembly on the strip mesh.

use nalgebra::{DMatrix, DVector};

use crate::domain::conductivity::{ConductivityField, Tensor2};
use crate::domain::mesh::{CoupledMesh, Quad};
use crate::error::{check_len, Result};
use crate::exec::Execution;

const GAUSS_2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Stiffness, mass and trace operators on one mesh, stored densely (desk-scale
/// meshes have at most a few thousand nodes).
#[derive(Clone, Debug)]
pub struct FormAssembly {
    /// Heart stiffness for `σ_i`.
    pub k_i: DMatrix<f64>,
    /// Heart stiffness for `σ_e`.
    pub k_e: DMatrix<f64>,
    /// Full-domain stiffness for `σ_i + σ_e` (heart) and `σ_T` (torso).
    pub k_full: DMatrix<f64>,
    /// Consistent heart mass matrix.
    pub m_h: DMatrix<f64>,
    /// `h = M_H 1`, so that `hᵀv` integrates `v` over the heart.
    pub heart_mean: DVector<f64>,
    /// Maps endocardial quadrature samples to the heart load vector.
    pub endo_trace: DMatrix<f64>,
    /// Unit-conductivity gradient Gram matrix on the heart (`|·|_{U_H}`).
    pub grad_heart: DMatrix<f64>,
    /// Unit-conductivity gradient Gram matrix on the whole domain.
    pub grad_full: DMatrix<f64>,
    pub n_heart: usize,
    pub n_full: usize,
    pub heart_volume: f64,
}

/// Local shape functions of the unit square, counter-clockwise from (0,0).
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

fn shape_grad(q: &Quad, xi: f64, eta: f64) -> [[f64; 2]; 4] {
    let (ix, iy) = (1.0 / q.hx, 1.0 / q.hy);
    [
        [-(1.0 - eta) * ix, -(1.0 - xi) * iy],
        [(1.0 - eta) * ix, -xi * iy],
        [eta * ix, xi * iy],
        [-eta * ix, (1.0 - xi) * iy],
    ]
}

/// Element stiffness `∫ ∇N_a · σ ∇N_b` with 2x2 Gauss.
pub fn element_stiffness(q: &Quad, sigma: &Tensor2) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    let w = 0.25 * q.area();
    for xi in GAUSS_2 {
        for eta in GAUSS_2 {
            let g = shape_grad(q, xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += w * sigma.quadratic(g[a], g[b]);
                }
            }
        }
    }
    k
}

/// Element mass `∫ N_a N_b` with 2x2 Gauss.
pub fn element_mass(q: &Quad) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    let w = 0.25 * q.area();
    for xi in GAUSS_2 {
        for eta in GAUSS_2 {
            let n = shape(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += w * n[a] * n[b];
                }
            }
        }
    }
    m
}

fn scatter(n: usize, elements: &[(Quad, [[f64; 4]; 4])]) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for (q, local) in elements {
        for a in 0..4 {
            for b in 0..4 {
                k[(q.nodes[a], q.nodes[b])] += local[a][b];
            }
        }
    }
    k
}

/// Assemble every form the operator construction needs.
pub fn assemble_forms(
    mesh: &CoupledMesh,
    cond: &ConductivityField,
    exec: Execution,
) -> Result<FormAssembly> {
    cond.validate(mesh)?;
    let n_full = mesh.n_nodes();
    let n_heart = mesh.n_heart_nodes();
    let heart: Vec<Quad> = mesh.heart_elements().map(|(_, q)| *q).collect();
    let all = &mesh.elements;
    let iso = Tensor2::isotropic(1.0);

    let local = |quads: &[Quad], f: &(dyn Fn(usize, &Quad) -> [[f64; 4]; 4] + Sync)| {
        exec.map(quads.len(), |e| (quads[e], f(e, &quads[e])))
    };
    let k_i = scatter(n_heart, &local(&heart, &|e, q| element_stiffness(q, &cond.sigma_i[e])));
    let k_e = scatter(n_heart, &local(&heart, &|e, q| element_stiffness(q, &cond.sigma_e[e])));
    let m_h = scatter(n_heart, &local(&heart, &|_, q| element_mass(q)));
    let grad_heart = scatter(n_heart, &local(&heart, &|_, q| element_stiffness(q, &iso)));
    let k_full = scatter(
        n_full,
        &local(all, &|e, q| element_stiffness(q, &cond.full_tensor(mesh, e))),
    );
    let grad_full = scatter(n_full, &local(all, &|_, q| element_stiffness(q, &iso)));

    let heart_mean = &m_h * DVector::from_element(n_heart, 1.0);

    let points = mesh.endo_quadrature();
    let mut endo_trace = DMatrix::zeros(n_heart, points.len());
    for (k, p) in points.iter().enumerate() {
        let edge = &mesh.endo_edges[p.edge];
        for (node, phi) in edge.nodes.iter().zip(p.shape) {
            endo_trace[(*node, k)] += p.weight * phi;
        }
    }

    Ok(FormAssembly {
        k_i,
        k_e,
        k_full,
        m_h,
        heart_mean,
        endo_trace,
        grad_heart,
        grad_full,
        n_heart,
        n_full,
        heart_volume: mesh.heart_volume(),
    })
}

impl FormAssembly {
    /// `R_H`: restriction of a full-domain vector to the heart nodes.
    pub fn restrict_heart(&self, full: &DVector<f64>) -> DVector<f64> {
        full.rows(0, self.n_heart).into_owned()
    }

    /// `R_H*`: zero extension of a heart functional to the whole domain.
    pub fn extend_heart(&self, heart: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_full);
        full.rows_mut(0, self.n_heart).copy_from(heart);
        full
    }

    /// `∫_{Ω_H} v`.
    pub fn heart_integral(&self, v: &DVector<f64>) -> f64 {
        self.heart_mean.dot(v)
    }

    /// `J v = v − mean(v)`.
    pub fn mean_free(&self, v: &DVector<f64>) -> DVector<f64> {
        let mean = self.heart_integral(v) / self.heart_volume;
        v.add_scalar(-mean)
    }

    /// `|v|²_{U_H} = ∫_{Ω_H} |∇v|²`.
    pub fn heart_seminorm_sq(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.grad_heart * v))
    }

    pub fn mass_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.m_h * v))
    }
}

/// Load vector `ℓ` with `ℓᵀv ≈ ∫_{Σ_endo} s_e v` from samples of `s_e` at the
/// endocardial quadrature points.
pub fn assemble_endo_load(forms: &FormAssembly, s_vals: &[f64]) -> Result<DVector<f64>> {
    check_len(forms.endo_trace.ncols(), s_vals.len())?;
    Ok(&forms.endo_trace * DVector::from_column_slice(s_vals))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Compatibility {
    pub defect: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// `|∫_{Σ_endo} s_e|` against `1e-10 · y_period · max|s_e|`.
pub fn check_compatibility(mesh: &CoupledMesh, s_vals: &[f64]) -> Result<Compatibility> {
    let points = mesh.endo_quadrature();
    check_len(points.len(), s_vals.len())?;
    let integral: f64 = points.iter().zip(s_vals).map(|(p, s)| p.weight * s).sum();
    let peak = s_vals.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let defect = integral.abs();
    let tolerance = 1e-10 * mesh.geometry.y_period * peak;
    Ok(Compatibility {
        defect,
        tolerance,
        passes: defect <= tolerance,
    })
}

/// Nonzero entries as `(row, col, value)` triplets, row-major.
pub fn triplets(a: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::mesh::{build_strip_mesh, StripGeometry};
    use std::f64::consts::PI;

    fn forms(g: &StripGeometry, si: Tensor2) -> (CoupledMesh, FormAssembly) {
        let mesh = build_strip_mesh(g).unwrap();
        let cond = ConductivityField::uniform(
            &mesh,
            si,
            Tensor2::isotropic(2.0),
            Tensor2::isotropic(1.5),
        );
        let f = assemble_forms(&mesh, &cond, Execution::Sequential).unwrap();
        (mesh, f)
    }

    fn nodal(mesh: &CoupledMesh, n: usize, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(n, mesh.nodes[..n].iter().map(|p| f(p[0], p[1])))
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let (_, f) = forms(&StripGeometry::default(), Tensor2::isotropic(1.0));
        let one_h = DVector::from_element(f.n_heart, 1.0);
        let one = DVector::from_element(f.n_full, 1.0);
        assert!((&f.k_i * &one_h).amax() < 1e-12);
        assert!((&f.k_e * &one_h).amax() < 1e-12);
        assert!((&f.k_full * &one).amax() < 1e-12);
    }

    #[test]
    fn linear_function_energy() {
        let g = StripGeometry::heart_only(6);
        for (sigma, expected) in [(Tensor2::isotropic(1.0), 1.0), (Tensor2::diag(2.0, 1.0), 2.0)] {
            let (mesh, f) = forms(&g, sigma);
            let u = nodal(&mesh, f.n_heart, |x, _| x);
            assert!((u.dot(&(&f.k_i * &u)) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_integrates_the_heart() {
        let (_, f) = forms(&StripGeometry::default(), Tensor2::isotropic(1.0));
        assert!((f.heart_mean.sum() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn endo_load_moments() {
        let (mesh, f) = forms(&StripGeometry::default(), Tensor2::isotropic(1.0));
        let one = DVector::from_element(f.n_heart, 1.0);
        let l = assemble_endo_load(&f, &mesh.sample_endo(|_| 1.0)).unwrap();
        assert!((l.dot(&one) - 1.0).abs() < 1e-14);
        let l = assemble_endo_load(&f, &mesh.sample_endo(|y| (2.0 * PI * y).cos())).unwrap();
        assert!(l.dot(&one).abs() < 1e-14);
        assert!(assemble_endo_load(&f, &[1.0]).is_err());
    }

    #[test]
    fn endo_load_matches_fine_quadrature() {
        // ℓᵀv with v = y-hat function: compare against a 200-point midpoint
        // rule of s(y)·v(y) on the face.
        let (mesh, f) = forms(&StripGeometry::default(), Tensor2::isotropic(1.0));
        let s = |y: f64| (2.0 * PI * y).sin() + 0.3 * (4.0 * PI * y).cos();
        let v = nodal(&mesh, f.n_heart, |x, y| (1.0 - x) * (y * (1.0 - y)));
        let l = assemble_endo_load(&f, &mesh.sample_endo(s)).unwrap();
        let ny = mesh.geometry.ny;
        let hy = 1.0 / ny as f64;
        let n_fine = 4000;
        let mut oracle = 0.0;
        for k in 0..n_fine {
            let y = (k as f64 + 0.5) / n_fine as f64;
            let j = (y / hy).floor() as usize;
            let t = y / hy - j as f64;
            let (a, b) = (mesh.endo_nodes[j], mesh.endo_nodes[(j + 1) % ny]);
            let vy = (1.0 - t) * v[a] + t * v[b];
            oracle += s(y) * vy / n_fine as f64;
        }
        // 2-point Gauss on each edge is accurate to O(h^4) for smooth s.
        assert!((l.dot(&v) - oracle).abs() < 1e-5);
    }

    #[test]
    fn compatibility_examples() {
        let mesh = build_strip_mesh(&StripGeometry::default()).unwrap();
        let c = check_compatibility(&mesh, &mesh.sample_endo(|_| 1.0)).unwrap();
        assert!(!c.passes && (c.defect - 1.0).abs() < 1e-14);
        let c = check_compatibility(&mesh, &mesh.sample_endo(|y| (2.0 * PI * y).cos())).unwrap();
        assert!(c.passes);
        for t in [0.0, 0.13, 0.5, 0.77] {
            let s = |y: f64| (2.0 * PI * t).sin() * (2.0 * PI * y).cos();
            assert!(check_compatibility(&mesh, &mesh.sample_endo(s)).unwrap().passes);
        }
    }

    #[test]
    fn smooth_energy_converges_at_second_order() {
        let exact = {
            // ∫∫ |∇(cos(πx) sin(2πy))|² over the unit square
            let gx = PI * PI * 0.5 * 0.5;
            let gy = 4.0 * PI * PI * 0.5 * 0.5;
            gx + gy
        };
        let err = |n| {
            let (mesh, f) = forms(&StripGeometry::heart_only(n), Tensor2::isotropic(1.0));
            let u = nodal(&mesh, f.n_heart, |x, y| (PI * x).cos() * (2.0 * PI * y).sin());
            (u.dot(&(&f.k_i * &u)) - exact).abs()
        };
        let (e1, e2, e3) = (err(8), err(16), err(32));
        assert!((e1 / e2).log2() > 1.8 && (e2 / e3).log2() > 1.8);
    }
}
