//! Calculus that is diagonal in the eigenbasis: truncations, fractional
//! norms, the semigroup `e^{−t𝒜}`, the periodic resolvent and the periodic
//! integral operator `L^(p)`.
//!
//! The generator is `𝒜 = (a_1 + A) ⊕ a_1 I`, so mode `i` of the potential
//! decays at rate `μ_i = a_1 + λ_i` and every gate mode at rate `a_1`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::exec::Execution;

/// State `z = (u, w)` as eigen-coefficients `(u, ψ_i)`, `(w, ψ_i)`,
/// `i = 0..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPair {
    pub u: DVector<f64>,
    pub w: DVector<f64>,
}

/// `1 + λ^{2α}` with `0^{2α} = 0` for `α > 0` and `λ^0 = 1`.
pub fn fractional_weight(lambda: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        2.0
    } else if lambda <= 0.0 {
        1.0
    } else {
        1.0 + lambda.powf(2.0 * alpha)
    }
}

impl SpectralPair {
    pub fn new(u: DVector<f64>, w: DVector<f64>) -> Result<Self> {
        check_len(u.len(), w.len())?;
        if u.is_empty() {
            return Err(Error::Parameter("a spectral pair needs at least one mode".into()));
        }
        Ok(SpectralPair { u, w })
    }

    pub fn zeros(m: usize) -> Self {
        SpectralPair {
            u: DVector::zeros(m + 1),
            w: DVector::zeros(m + 1),
        }
    }

    /// Potential coefficient vector `e_k`, zero gate.
    pub fn mode(m: usize, k: usize) -> Self {
        let mut z = Self::zeros(m);
        z.u[k] = 1.0;
        z
    }

    /// Truncation level `m` (the pair holds `m + 1` modes per component).
    pub fn level(&self) -> usize {
        self.u.len() - 1
    }

    /// `‖z‖_Z = max(‖U‖₂, ‖W‖₂)`.
    pub fn z_norm(&self) -> f64 {
        self.u.norm().max(self.w.norm())
    }

    /// `max` over both components of `√(Σ (1 + λ_i^{2α}) c_i²)`.
    pub fn fractional_norm(&self, lambdas: &[f64], alpha: f64) -> Result<f64> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "fractional exponent must be non-negative, got {alpha}"
            )));
        }
        if lambdas.len() < self.u.len() {
            return Err(Error::Level {
                requested: self.level(),
                available: lambdas.len().saturating_sub(1),
            });
        }
        let weighted = |c: &DVector<f64>| {
            c.iter()
                .zip(lambdas)
                .map(|(c, &l)| fractional_weight(l, alpha) * c * c)
                .sum::<f64>()
                .sqrt()
        };
        Ok(weighted(&self.u).max(weighted(&self.w)))
    }

    /// `P_m z`: keep modes `0..=m`.
    pub fn project(&self, m: usize) -> Result<SpectralPair> {
        if m > self.level() {
            return Err(Error::Level {
                requested: m,
                available: self.level(),
            });
        }
        Ok(SpectralPair {
            u: self.u.rows(0, m + 1).into_owned(),
            w: self.w.rows(0, m + 1).into_owned(),
        })
    }

    /// Zero-pad to level `n ≥ level`.
    pub fn embed(&self, n: usize) -> Result<SpectralPair> {
        if n < self.level() {
            return Err(Error::Level {
                requested: n,
                available: self.level(),
            });
        }
        let mut z = SpectralPair::zeros(n);
        z.u.rows_mut(0, self.u.len()).copy_from(&self.u);
        z.w.rows_mut(0, self.w.len()).copy_from(&self.w);
        Ok(z)
    }

    /// `P_m z − P_n z` for `n > m` seen at level `n` (the modes `m+1..=n`).
    pub fn tail(&self, m: usize) -> Result<SpectralPair> {
        let mut t = self.clone();
        if m > self.level() {
            return Err(Error::Level {
                requested: m,
                available: self.level(),
            });
        }
        t.u.rows_mut(0, m + 1).fill(0.0);
        t.w.rows_mut(0, m + 1).fill(0.0);
        Ok(t)
    }

    pub fn axpy(&mut self, a: f64, x: &SpectralPair) {
        self.u.axpy(a, &x.u, 1.0);
        self.w.axpy(a, &x.w, 1.0);
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.w.iter()).all(|v| v.is_finite())
    }
}

impl Add for &SpectralPair {
    type Output = SpectralPair;
    fn add(self, o: &SpectralPair) -> SpectralPair {
        SpectralPair {
            u: &self.u + &o.u,
            w: &self.w + &o.w,
        }
    }
}

impl Sub for &SpectralPair {
    type Output = SpectralPair;
    fn sub(self, o: &SpectralPair) -> SpectralPair {
        SpectralPair {
            u: &self.u - &o.u,
            w: &self.w - &o.w,
        }
    }
}

impl Mul<f64> for &SpectralPair {
    type Output = SpectralPair;
    fn mul(self, a: f64) -> SpectralPair {
        SpectralPair {
            u: &self.u * a,
            w: &self.w * a,
        }
    }
}

impl Neg for &SpectralPair {
    type Output = SpectralPair;
    fn neg(self) -> SpectralPair {
        self * -1.0
    }
}

/// Shift, exponent and period shared by the evolution and periodic problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalParams {
    pub a1: f64,
    pub alpha0: f64,
    pub period: f64,
}

impl FractionalParams {
    pub fn new(a1: f64, alpha0: f64, period: f64) -> Result<Self> {
        let p = FractionalParams { a1, alpha0, period };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > 0.0 && self.a1.is_finite()) {
            return Err(Error::Parameter(format!("a_1 must be positive, got {}", self.a1)));
        }
        if !(self.alpha0 > 0.75 && self.alpha0 < 1.0) {
            return Err(Error::Parameter(format!(
                "alpha_0 must lie in (3/4, 1), got {}",
                self.alpha0
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Parameter(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        Ok(())
    }

    /// `κ = 1/a_1 + T^{1−α_0} / ((1−α_0)(1 − e^{−a_1 T}))`.
    pub fn kappa(&self) -> f64 {
        let one_minus = 1.0 - self.alpha0;
        1.0 / self.a1
            + self.period.powf(one_minus) / (one_minus * -(-self.a1 * self.period).exp_m1())
    }

    /// Bound constant `2κ` of `‖L^(p) f‖_{C^{α_0}_T} ≤ 2κ ‖f‖_{C_T}`.
    pub fn lp_bound_constant(&self) -> f64 {
        2.0 * self.kappa()
    }
}

/// `φ₁(x) = (1 − e^{−x}) / x`.
pub fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // Σ (−x)^k / (k+1)!
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            term *= -x / (k + 1) as f64;
            sum += term;
        }
        sum
    } else {
        -(-x).exp_m1() / x
    }
}

/// `φ₂(x) = (x − 1 + e^{−x}) / x² = (1 − φ₁(x)) / x`.
pub fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // Σ (−x)^k / (k+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..8 {
            term *= -x / (k + 2) as f64;
            sum += term;
        }
        sum
    } else {
        (1.0 - phi1(x)) / x
    }
}

/// Exact step of `y' = −μ y + f(t)` over `[0, h]` with `f` linear between
/// `f0` and `f1`.
pub fn exp_linear_step(mu: f64, h: f64, y: f64, f0: f64, f1: f64) -> f64 {
    let x = mu * h;
    (-x).exp() * y + h * phi1(x) * f0 + h * phi2(x) * (f1 - f0)
}

/// Per-mode factor `e^{−μΔ} / (1 − e^{−μT})` of the periodic resolvent.
pub fn resolvent_gain(mu: f64, delta: f64, period: f64) -> f64 {
    (-mu * delta).exp() / -(-mu * period).exp_m1()
}

/// Diagonal generator `𝒜` truncated at level `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGenerator {
    pub lambdas: Vec<f64>,
    pub a1: f64,
}

impl DiagonalGenerator {
    pub fn new(lambdas: &[f64], a1: f64) -> Result<Self> {
        if !(a1 > 0.0 && a1.is_finite()) {
            return Err(Error::Parameter(format!("a_1 must be positive, got {a1}")));
        }
        if lambdas.is_empty() {
            return Err(Error::Parameter("empty spectrum".into()));
        }
        Ok(DiagonalGenerator {
            lambdas: lambdas.to_vec(),
            a1,
        })
    }

    pub fn level(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn truncate(&self, m: usize) -> Result<DiagonalGenerator> {
        if m > self.level() {
            return Err(Error::Level {
                requested: m,
                available: self.level(),
            });
        }
        Ok(DiagonalGenerator {
            lambdas: self.lambdas[..=m].to_vec(),
            a1: self.a1,
        })
    }

    /// Decay rate of flat mode index `k`: potential modes come first
    /// (`k ≤ m`), then gate modes.
    pub fn rate(&self, k: usize) -> f64 {
        if k < self.lambdas.len() {
            self.a1 + self.lambdas[k]
        } else {
            self.a1
        }
    }

    pub fn n_flat(&self) -> usize {
        2 * self.lambdas.len()
    }

    fn check(&self, z: &SpectralPair) -> Result<()> {
        check_len(self.lambdas.len(), z.u.len())?;
        check_len(self.lambdas.len(), z.w.len())
    }

    /// `𝒜 z`.
    pub fn apply(&self, z: &SpectralPair) -> Result<SpectralPair> {
        self.check(z)?;
        Ok(self.map_modes(z, |mu, c| mu * c))
    }

    fn map_modes(&self, z: &SpectralPair, f: impl Fn(f64, f64) -> f64) -> SpectralPair {
        SpectralPair {
            u: DVector::from_iterator(
                z.u.len(),
                z.u.iter().zip(&self.lambdas).map(|(c, l)| f(self.a1 + l, *c)),
            ),
            w: z.w.map(|c| f(self.a1, c)),
        }
    }

    /// `e^{−t𝒜} z`.
    pub fn semigroup(&self, z: &SpectralPair, t: f64) -> Result<SpectralPair> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Parameter(format!("semigroup time must be >= 0, got {t}")));
        }
        self.check(z)?;
        Ok(self.map_modes(z, |mu, c| (-mu * t).exp() * c))
    }

    /// `R(t, τ) z` for `t, τ ∈ [0, T]`.
    pub fn periodic_resolvent(
        &self,
        z: &SpectralPair,
        t: f64,
        tau: f64,
        period: f64,
    ) -> Result<SpectralPair> {
        let inside = |s: f64| (0.0..=period).contains(&s);
        if !(period > 0.0 && inside(t) && inside(tau)) {
            return Err(Error::Parameter(format!(
                "resolvent arguments t = {t}, tau = {tau} must lie in [0, {period}]"
            )));
        }
        self.check(z)?;
        let delta = if tau <= t { t - tau } else { t + period - tau };
        Ok(self.map_modes(z, |mu, c| resolvent_gain(mu, delta, period) * c))
    }

    /// `L^(p) f`: the `T`-periodic solution of `g' = −𝒜 g + f` with `f`
    /// piecewise linear between the samples of `path` (`T` = path horizon).
    pub fn lp_apply(&self, path: &Path, exec: Execution) -> Result<Path> {
        for z in &path.states {
            self.check(z)?;
        }
        let n_steps = path.states.len() - 1;
        let h = path.dt;
        let period = path.horizon();
        let modes = exec.map(self.n_flat(), |k| {
            let mu = self.rate(k);
            let f: Vec<f64> = path.states.iter().map(|z| flat(z, k)).collect();
            let mut y = 0.0;
            for s in 0..n_steps {
                y = exp_linear_step(mu, h, y, f[s], f[s + 1]);
            }
            let g0 = y / -(-mu * period).exp_m1();
            let mut out = Vec::with_capacity(n_steps + 1);
            out.push(g0);
            let mut y = g0;
            for s in 0..n_steps {
                y = exp_linear_step(mu, h, y, f[s], f[s + 1]);
                out.push(y);
            }
            out[n_steps] = g0;
            out
        });
        let m1 = self.lambdas.len();
        let states = (0..=n_steps)
            .map(|s| SpectralPair {
                u: DVector::from_fn(m1, |i, _| modes[i][s]),
                w: DVector::from_fn(m1, |i, _| modes[m1 + i][s]),
            })
            .collect();
        Ok(Path { dt: h, states })
    }
}

/// Flat mode accessor: potential modes first, then gate modes.
pub fn flat(z: &SpectralPair, k: usize) -> f64 {
    let m1 = z.u.len();
    if k < m1 {
        z.u[k]
    } else {
        z.w[k - m1]
    }
}

/// States sampled on the uniform grid `t_k = k · dt`, `k = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub dt: f64,
    pub states: Vec<SpectralPair>,
}

impl Path {
    /// `N + 1 = states.len()` samples spanning `[0, horizon]`.
    pub fn uniform(horizon: f64, states: Vec<SpectralPair>) -> Result<Path> {
        if states.len() < 2 {
            return Err(Error::Parameter("a path needs at least two samples".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Parameter(format!("path horizon must be positive, got {horizon}")));
        }
        let m = states[0].level();
        for z in &states {
            check_len(m + 1, z.u.len())?;
            check_len(m + 1, z.w.len())?;
        }
        Ok(Path {
            dt: horizon / (states.len() - 1) as f64,
            states,
        })
    }

    /// Path from explicit sample times, which must form a uniform grid
    /// starting at 0.
    pub fn from_samples(times: &[f64], states: Vec<SpectralPair>) -> Result<Path> {
        check_len(states.len(), times.len())?;
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Parameter("sample times must start at 0".into()));
        }
        let horizon = times[times.len() - 1];
        let dt = horizon / (times.len() - 1) as f64;
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-12 * horizon.max(1.0) {
                return Err(Error::Parameter(format!(
                    "non-uniform time grid: sample {k} at {t}, expected {}",
                    k as f64 * dt
                )));
            }
        }
        Path::uniform(horizon, states)
    }

    /// Sample every state of `f` at the grid `k · horizon / n`.
    pub fn sample(horizon: f64, n: usize, f: impl Fn(f64) -> SpectralPair) -> Result<Path> {
        let dt = horizon / n as f64;
        Path::uniform(horizon, (0..=n).map(|k| f(k as f64 * dt)).collect())
    }

    pub fn constant(horizon: f64, n: usize, z: &SpectralPair) -> Result<Path> {
        Path::uniform(horizon, vec![z.clone(); n + 1])
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn level(&self) -> usize {
        self.states[0].level()
    }

    pub fn first(&self) -> &SpectralPair {
        &self.states[0]
    }

    pub fn last(&self) -> &SpectralPair {
        &self.states[self.states.len() - 1]
    }

    /// `sup_t ‖z(t)‖_Z` over the samples.
    pub fn sup_z_norm(&self) -> f64 {
        self.states.iter().map(|z| z.z_norm()).fold(0.0, f64::max)
    }

    /// `sup_t ‖z(t)‖_α` over the samples.
    pub fn sup_norm(&self, lambdas: &[f64], alpha: f64) -> Result<f64> {
        let mut sup = 0.0f64;
        for z in &self.states {
            sup = sup.max(z.fractional_norm(lambdas, alpha)?);
        }
        Ok(sup)
    }

    /// `‖z(0) − z(T)‖_α`.
    pub fn periodicity_defect(&self, lambdas: &[f64], alpha: f64) -> Result<f64> {
        (self.first() - self.last()).fractional_norm(lambdas, alpha)
    }

    pub fn project(&self, m: usize) -> Result<Path> {
        let states = self.states.iter().map(|z| z.project(m)).collect::<Result<_>>()?;
        Ok(Path { dt: self.dt, states })
    }

    pub fn map(&self, f: impl Fn(&SpectralPair) -> SpectralPair) -> Path {
        Path {
            dt: self.dt,
            states: self.states.iter().map(f).collect(),
        }
    }

    fn check_grid(&self, other: &Path) -> Result<()> {
        check_len(self.states.len(), other.states.len())?;
        if (self.dt - other.dt).abs() > 1e-14 * self.dt {
            return Err(Error::Parameter("paths live on different time grids".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Path) -> Result<Path> {
        self.check_grid(other)?;
        Ok(Path {
            dt: self.dt,
            states: self.states.iter().zip(&other.states).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Path) -> Result<Path> {
        self.check_grid(other)?;
        Ok(Path {
            dt: self.dt,
            states: self.states.iter().zip(&other.states).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, a: f64) -> Path {
        self.map(|z| z * a)
    }
}
