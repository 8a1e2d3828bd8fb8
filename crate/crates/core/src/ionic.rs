//! Reaction terms, their Lipschitz certification and their projection onto
//! the eigenbasis.
//!
//! With `f`, `g` the ionic and gate kinetics the shifted nonlinearity is
//! `F(u, w) = (a_1 u − f(u, w), a_1 w − g(u, w))`, so that
//! `dz/dt = −𝒜 z + F(z) + S` reproduces `u' + f + A u = s`, `w' + g = 0`.

use nalgebra::{DMatrix, DVector};

use crate::domain::CoupledMesh;
use crate::error::{check_len, Error, Result};
use crate::exec::Execution;
use crate::operator::EigenBasis;
use crate::spectral::SpectralPair;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IonicKind {
    /// `f = u(u − a)(u − 1) + w`, `g = −ε(u − γ w)`.
    FitzHughNagumo { a: f64, eps: f64, gamma: f64 },
    /// `f = u`, `g = w`: affine test model.
    LinearTest,
    /// `f = a_1 u`, `g = a_1 w`, so that `F ≡ 0`.
    Inert,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IonicModel {
    pub kind: IonicKind,
    pub a1: f64,
}

impl IonicModel {
    pub fn fitzhugh_nagumo(a: f64, eps: f64, gamma: f64, a1: f64) -> Result<Self> {
        let m = IonicModel {
            kind: IonicKind::FitzHughNagumo { a, eps, gamma },
            a1,
        };
        m.validate()?;
        Ok(m)
    }

    /// FitzHugh–Nagumo with `a = 0.1`, `ε = 0.01`, `γ = 0.5`.
    pub fn fhn_default(a1: f64) -> Result<Self> {
        Self::fitzhugh_nagumo(0.1, 0.01, 0.5, a1)
    }

    pub fn linear_test(a1: f64) -> Result<Self> {
        let m = IonicModel {
            kind: IonicKind::LinearTest,
            a1,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn inert(a1: f64) -> Result<Self> {
        let m = IonicModel {
            kind: IonicKind::Inert,
            a1,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a1.is_finite()) {
            return Err(Error::Parameter(format!("a_1 must be positive, got {}", self.a1)));
        }
        if let IonicKind::FitzHughNagumo { a, eps, gamma } = self.kind {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
            }
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Parameter(format!("threshold a must lie in (0, 1), got {a}")));
            }
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::Parameter(format!("gamma must be non-negative, got {gamma}")));
            }
        }
        Ok(())
    }

    /// Polynomial degree of `F` in `(u, w)`.
    pub fn degree(&self) -> usize {
        match self.kind {
            IonicKind::FitzHughNagumo { .. } => 3,
            IonicKind::LinearTest | IonicKind::Inert => 1,
        }
    }

    /// `(f(u, w), g(u, w))`.
    pub fn kinetics(&self, u: f64, w: f64) -> (f64, f64) {
        match self.kind {
            IonicKind::FitzHughNagumo { a, eps, gamma } => {
                (u * (u - a) * (u - 1.0) + w, -eps * (u - gamma * w))
            }
            IonicKind::LinearTest => (u, w),
            IonicKind::Inert => (self.a1 * u, self.a1 * w),
        }
    }

    /// `F(u, w) = (a_1 u − f, a_1 w − g)`.
    pub fn evaluate_f(&self, u: f64, w: f64) -> (f64, f64) {
        let (f, g) = self.kinetics(u, w);
        (self.a1 * u - f, self.a1 * w - g)
    }

    /// Jacobian `∂F/∂(u, w)` as `[[Fu_u, Fu_w], [Fw_u, Fw_w]]`.
    pub fn jacobian(&self, u: f64, _w: f64) -> [[f64; 2]; 2] {
        let a1 = self.a1;
        match self.kind {
            IonicKind::FitzHughNagumo { a, eps, gamma } => {
                let fu = 3.0 * u * u - 2.0 * (1.0 + a) * u + a;
                [[a1 - fu, -1.0], [eps, a1 - eps * gamma]]
            }
            IonicKind::LinearTest => [[a1 - 1.0, 0.0], [0.0, a1 - 1.0]],
            IonicKind::Inert => [[0.0, 0.0], [0.0, 0.0]],
        }
    }

    /// Certified upper bound for the max-row-sum norm of the Jacobian of `F`
    /// over the sup-norm ball `|u|, |w| ≤ r`.
    ///
    /// The ball is covered by cells of fixed width anchored at 0 and the
    /// Jacobian is bounded on each cell with interval arithmetic, so the
    /// bound is nondecreasing in `r`.
    pub fn lipschitz_on_ball(&self, r: f64) -> Result<f64> {
        Ok(self.jacobian_sums(r)?.0)
    }

    /// Certified bound on the spectral norm of the Jacobian over the same
    /// ball, via `‖J‖₂ ≤ max(‖J‖₁, ‖J‖_∞)`.
    pub fn euclidean_lipschitz_on_ball(&self, r: f64) -> Result<f64> {
        let (row, col) = self.jacobian_sums(r)?;
        Ok(row.max(col))
    }

    /// Bounds on the max row sum and max column sum of `|∂F|`.
    fn jacobian_sums(&self, r: f64) -> Result<(f64, f64)> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Parameter(format!("ball radius must be positive, got {r}")));
        }
        let a1 = self.a1;
        let (row, col) = match self.kind {
            IonicKind::FitzHughNagumo { a, eps, gamma } => {
                let d2 = (a1 - eps * gamma).abs();
                let mut d1 = 0.0f64;
                for cell in cells(r, LIPSCHITZ_CELL) {
                    let fu = cell.sqr() * 3.0 - cell * (2.0 * (1.0 + a)) + Interval::point(a);
                    d1 = d1.max((Interval::point(a1) - fu).mag());
                }
                ((d1 + 1.0).max(eps + d2), (d1 + eps).max(1.0 + d2))
            }
            IonicKind::LinearTest => ((a1 - 1.0).abs(), (a1 - 1.0).abs()),
            IonicKind::Inert => (0.0, 0.0),
        };
        let pad = 1.0 + 4.0 * f64::EPSILON;
        Ok((row * pad, col * pad))
    }
}

const LIPSCHITZ_CELL: f64 = 1e-3;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn sqr(self) -> Self {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Interval::new(0.0, a.max(b))
        } else {
            Interval::new(a.min(b), a.max(b))
        }
    }

    /// `max |x|` over the interval.
    pub fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }
}

impl std::ops::Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo)
    }
}

impl std::ops::Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, c: f64) -> Interval {
        let (a, b) = (self.lo * c, self.hi * c);
        Interval::new(a.min(b), a.max(b))
    }
}

/// Cells `[k h, (k+1) h] ∩ [−r, r]` covering `[−r, r]`.
fn cells(r: f64, h: f64) -> impl Iterator<Item = Interval> {
    let n = (r / h).ceil() as i64;
    (-n..n).map(move |k| {
        let lo = (k as f64 * h).max(-r);
        let hi = ((k + 1) as f64 * h).min(r);
        Interval::new(lo, hi)
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Discrete embedding constant
/// `c_∞(m) = max_x √(Σ_{i≤m} ψ_i(x)² / (1 + λ_i^{2α}))` over the heart nodes.
pub fn embedding_constant(basis: &EigenBasis, alpha: f64) -> f64 {
    let weights: Vec<f64> = basis
        .lambdas
        .iter()
        .map(|&l| crate::spectral::fractional_weight(l, alpha))
        .collect();
    (0..basis.n_heart())
        .map(|x| {
            basis
                .psi
                .row(x)
                .iter()
                .zip(&weights)
                .map(|(p, w)| p * p / w)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Lipschitz constant of `z ↦ P_m F(z)` from `Z^α` (ball of radius `radius`)
/// to `Z`: `L_pt(c_∞ R) · c_∞ · √|Ω_H|`.
pub fn certified_lipschitz(model: &IonicModel, basis: &EigenBasis, alpha: f64, radius: f64) -> Result<CertifiedLipschitz> {
    let c_inf = embedding_constant(basis, alpha);
    let sup_radius = c_inf * radius;
    let pointwise = model.euclidean_lipschitz_on_ball(sup_radius)?;
    Ok(CertifiedLipschitz {
        pointwise,
        embedding: c_inf,
        sup_radius,
        spectral: pointwise * c_inf * basis.heart_volume.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedLipschitz {
    /// Bound on the pointwise Jacobian spectral norm over the sup-norm ball.
    pub pointwise: f64,
    /// `c_∞(m)`.
    pub embedding: f64,
    /// Sup-norm radius `c_∞ R` covering the `Z^α` ball.
    pub sup_radius: f64,
    /// Lipschitz constant `Z^α → Z`.
    pub spectral: f64,
}

/// Gauss points per direction for the nonlinearity projection.
pub const DEFAULT_QUADRATURE: usize = 4;

/// Minimum Gauss points per direction for exact integration of
/// `F(u_m) ψ_i` with bilinear `u_m`, `ψ_i` and `F` of degree `d`.
pub fn exact_points(degree: usize) -> usize {
    (degree + 2).div_ceil(2)
}

/// Precomputed evaluation of `∫_{Ω_H} F(u_m, w_m) ψ_i` by element Gauss
/// quadrature.
#[derive(Clone, Debug)]
pub struct NonlinearProjector {
    pub model: IonicModel,
    /// Values of `ψ_i` at quadrature points (rows) for modes `0..=m`.
    values: DMatrix<f64>,
    weights: DVector<f64>,
    points_per_element: usize,
    pub points_per_direction: usize,
    /// True when the rule cannot integrate the projected nonlinearity exactly.
    pub aliasing: bool,
}

impl NonlinearProjector {
    pub fn new(
        model: IonicModel,
        basis: &EigenBasis,
        mesh: &CoupledMesh,
        points_per_direction: usize,
    ) -> Result<Self> {
        if points_per_direction == 0 {
            return Err(Error::Parameter("quadrature needs at least one point".into()));
        }
        check_len(mesh.n_heart_nodes(), basis.n_heart())?;
        let (xi, wq) = gauss_legendre(points_per_direction);
        let heart: Vec<_> = mesh.heart_elements().map(|(_, q)| *q).collect();
        let per = points_per_direction * points_per_direction;
        let m1 = basis.len();
        let mut values = DMatrix::zeros(heart.len() * per, m1);
        let mut weights = DVector::zeros(heart.len() * per);
        for (e, q) in heart.iter().enumerate() {
            let mut k = e * per;
            for (a, &x) in xi.iter().enumerate() {
                for (b, &y) in xi.iter().enumerate() {
                    let shape = [(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y];
                    for i in 0..m1 {
                        values[(k, i)] = (0..4).map(|c| shape[c] * basis.psi[(q.nodes[c], i)]).sum();
                    }
                    weights[k] = wq[a] * wq[b] * q.area();
                    k += 1;
                }
            }
        }
        Ok(NonlinearProjector {
            model,
            values,
            weights,
            points_per_element: per,
            points_per_direction,
            aliasing: points_per_direction < exact_points(model.degree()),
        })
    }

    pub fn level(&self) -> usize {
        self.values.ncols() - 1
    }

    /// Coefficients `(P_m F(z), ψ_i)` for `i = 0..=m`.
    pub fn project(&self, z: &SpectralPair, exec: Execution) -> Result<SpectralPair> {
        check_len(self.values.ncols(), z.u.len())?;
        check_len(self.values.ncols(), z.w.len())?;
        let uq = &self.values * &z.u;
        let wq = &self.values * &z.w;
        let per = self.points_per_element;
        let n_elem = self.weights.len() / per;
        let blocks = exec.map(n_elem, |e| {
            (e * per..(e + 1) * per)
                .map(|k| {
                    let (fu, fw) = self.model.evaluate_f(uq[k], wq[k]);
                    (self.weights[k] * fu, self.weights[k] * fw)
                })
                .collect::<Vec<_>>()
        });
        let mut gu = DVector::zeros(self.weights.len());
        let mut gw = DVector::zeros(self.weights.len());
        for (k, (a, b)) in blocks.into_iter().flatten().enumerate() {
            gu[k] = a;
            gw[k] = b;
        }
        Ok(SpectralPair {
            u: self.values.tr_mul(&gu),
            w: self.values.tr_mul(&gw),
        })
    }
}

/// One-shot projection with the default rule; returns the projected pair and
/// the aliasing flag.
pub fn project_nonlinearity(
    z: &SpectralPair,
    basis: &EigenBasis,
    mesh: &CoupledMesh,
    model: &IonicModel,
    points_per_direction: usize,
) -> Result<(SpectralPair, bool)> {
    let truncated = basis.truncate(z.level())?;
    let p = NonlinearProjector::new(*model, &truncated, mesh, points_per_direction)?;
    Ok((p.project(z, Execution::Sequential)?, p.aliasing))
}
