//! Faedo–Galerkin evolution `dz_m/dt = −𝒜 z_m + P_m F(z_m) + P_m S(t)`,
//! its mild-form residual and the convergence diagnostics across levels.

use nalgebra::DVector;

use crate::domain::CoupledMesh;
use crate::error::{check_len, Error, Result};
use crate::exec::Execution;
use crate::ionic::{certified_lipschitz, CertifiedLipschitz, IonicModel, NonlinearProjector};
use crate::operator::{BidomainOperator, EigenBasis};
use crate::spectral::{phi1, phi2, DiagonalGenerator, Path, SpectralPair};

/// Time-dependent spectral forcing `S(t) = (s(t), 0)`.
pub trait Forcing: Sync {
    /// `P_m S(t)` at level `m`.
    fn sample(&self, t: f64, m: usize) -> Result<SpectralPair>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// `sin(2π t / period)`.
    Sine { period: f64 },
    /// `cos(2π t / period)`.
    Cosine { period: f64 },
}

impl TimeProfile {
    pub fn at(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sine { period } => (TAU * t / period).sin(),
            TimeProfile::Cosine { period } => (TAU * t / period).cos(),
        }
    }
}

/// `S(t) = amplitude · profile(t) · (s, 0)` for fixed spectral coefficients
/// `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableForcing {
    pub coefficients: DVector<f64>,
    pub profile: TimeProfile,
    pub amplitude: f64,
}

impl SeparableForcing {
    pub fn new(coefficients: DVector<f64>, profile: TimeProfile, amplitude: f64) -> Self {
        SeparableForcing {
            coefficients,
            profile,
            amplitude,
        }
    }

    pub fn zero(m: usize) -> Self {
        Self::new(DVector::zeros(m + 1), TimeProfile::Constant, 0.0)
    }

    pub fn level(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SeparableForcing {
            amplitude: self.amplitude * factor,
            ..self.clone()
        }
    }
}

impl Forcing for SeparableForcing {
    fn sample(&self, t: f64, m: usize) -> Result<SpectralPair> {
        if m > self.level() {
            return Err(Error::Level {
                requested: m,
                available: self.level(),
            });
        }
        let c = self.amplitude * self.profile.at(t);
        Ok(SpectralPair {
            u: self.coefficients.rows(0, m + 1) * c,
            w: DVector::zeros(m + 1),
        })
    }
}

/// Spectral coefficients `(s, ψ_i)` of the heart forcing generated by the
/// endocardial samples `s_vals`.
pub fn forcing_coefficients(
    op: &BidomainOperator,
    basis: &EigenBasis,
    s_vals: &[f64],
) -> Result<DVector<f64>> {
    let s = op.compute_forcing(s_vals)?;
    // ψ_iᵀ s = (M⁻¹s, ψ_i)_{L_H} because the ψ_i are mass-orthonormal.
    Ok(basis.psi.tr_mul(&s))
}

/// Galerkin right-hand side at one level.
pub struct GalerkinSystem {
    pub generator: DiagonalGenerator,
    pub projector: NonlinearProjector,
    pub exec: Execution,
}

impl GalerkinSystem {
    pub fn new(
        basis: &EigenBasis,
        mesh: &CoupledMesh,
        model: IonicModel,
        m: usize,
        points_per_direction: usize,
        exec: Execution,
    ) -> Result<Self> {
        let truncated = basis.truncate(m)?;
        Ok(GalerkinSystem {
            generator: DiagonalGenerator::new(&truncated.lambdas, model.a1)?,
            projector: NonlinearProjector::new(model, &truncated, mesh, points_per_direction)?,
            exec,
        })
    }

    pub fn level(&self) -> usize {
        self.generator.level()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.generator.lambdas
    }

    /// `P_m F(z) + P_m S(t)`.
    pub fn nonlinear(&self, z: &SpectralPair, t: f64, forcing: &dyn Forcing) -> Result<SpectralPair> {
        let mut n = self.projector.project(z, self.exec)?;
        n.axpy(1.0, &forcing.sample(t, self.level())?);
        Ok(n)
    }

    /// Full vector field `−𝒜 z + P_m F(z) + P_m S(t)`.
    pub fn vector_field(&self, z: &SpectralPair, t: f64, forcing: &dyn Forcing) -> Result<SpectralPair> {
        let n = self.nonlinear(z, t, forcing)?;
        Ok(&n - &self.generator.apply(z)?)
    }
}

/// Containment requirement during time stepping: `‖z(t)‖_α ≤ radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub radius: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub path: Path,
    pub level: usize,
    pub dt: f64,
    pub method: &'static str,
    pub order: u32,
}

/// Per-mode exponential-integrator weights for step `h`.
struct StepWeights {
    decay: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl StepWeights {
    fn new(g: &DiagonalGenerator, h: f64) -> Self {
        let rates: Vec<f64> = (0..g.n_flat()).map(|k| g.rate(k)).collect();
        StepWeights {
            decay: rates.iter().map(|mu| (-mu * h).exp()).collect(),
            w1: rates.iter().map(|mu| h * phi1(mu * h)).collect(),
            w2: rates.iter().map(|mu| h * phi2(mu * h)).collect(),
        }
    }

    /// `E y + w1 f0 + w2 (f1 − f0)` mode by mode.
    fn apply(&self, y: &SpectralPair, f0: &SpectralPair, f1: Option<&SpectralPair>) -> SpectralPair {
        let m1 = y.u.len();
        let one = |k: usize, y: f64, a: f64, b: Option<f64>| {
            let mut v = self.decay[k] * y + self.w1[k] * a;
            if let Some(b) = b {
                v += self.w2[k] * (b - a);
            }
            v
        };
        SpectralPair {
            u: DVector::from_fn(m1, |i, _| one(i, y.u[i], f0.u[i], f1.map(|f| f.u[i]))),
            w: DVector::from_fn(m1, |i, _| one(m1 + i, y.w[i], f0.w[i], f1.map(|f| f.w[i]))),
        }
    }
}

fn step_count(t1: f64, dt: f64) -> Result<usize> {
    if !(t1 > 0.0 && t1.is_finite() && dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("need t1 > 0 and dt > 0, got t1 = {t1}, dt = {dt}")));
    }
    let n = (t1 / dt).round();
    if n < 1.0 || (n * dt - t1).abs() > 1e-9 * t1 {
        return Err(Error::Parameter(format!("dt = {dt} does not divide t1 = {t1}")));
    }
    Ok(n as usize)
}

/// Second-order exponential Runge–Kutta (ETD2RK): the diagonal linear part
/// is integrated exactly, the nonlinearity by a predictor and a linear
/// correction in time.
pub fn solve_ivp(
    system: &GalerkinSystem,
    z0: &SpectralPair,
    t1: f64,
    dt: f64,
    forcing: &dyn Forcing,
    ball: Option<Ball>,
) -> Result<Trajectory> {
    check_len(system.level() + 1, z0.u.len())?;
    check_len(system.level() + 1, z0.w.len())?;
    let n = step_count(t1, dt)?;
    let h = t1 / n as f64;
    let weights = StepWeights::new(&system.generator, h);
    let check_ball = |z: &SpectralPair, t: f64| -> Result<()> {
        if let Some(b) = ball {
            let norm = z.fractional_norm(system.lambdas(), b.alpha)?;
            if norm > b.radius {
                return Err(Error::BallExit {
                    time: t,
                    norm,
                    radius: b.radius,
                });
            }
        }
        Ok(())
    };
    check_ball(z0, 0.0)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(z0.clone());
    let mut z = z0.clone();
    for k in 0..n {
        let t = k as f64 * h;
        let nz = system.nonlinear(&z, t, forcing)?;
        let a = weights.apply(&z, &nz, None);
        let na = system.nonlinear(&a, t + h, forcing)?;
        let mut next = a;
        for i in 0..next.u.len() {
            let m1 = next.u.len();
            next.u[i] += weights.w2[i] * (na.u[i] - nz.u[i]);
            next.w[i] += weights.w2[m1 + i] * (na.w[i] - nz.w[i]);
        }
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite state at t = {}", t + h)));
        }
        check_ball(&next, t + h)?;
        states.push(next.clone());
        z = next;
    }
    Ok(Trajectory {
        path: Path { dt: h, states },
        level: system.level(),
        dt: h,
        method: "ETD2RK",
        order: 2,
    })
}

/// `sup_k ‖z(t_k) − [e^{−t_k𝒜} z(0) + ∫₀^{t_k} e^{−(t_k−τ)𝒜}(P_m F(z) + P_m S)(τ) dτ]‖_Z`
/// with the integrand interpolated linearly between grid times.
pub fn mild_residual(system: &GalerkinSystem, traj: &Trajectory, forcing: &dyn Forcing) -> Result<f64> {
    let path = &traj.path;
    check_len(system.level(), traj.level)?;
    let times = path.times();
    let values = system
        .exec
        .map(path.states.len(), |k| system.nonlinear(&path.states[k], times[k], forcing));
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    duhamel_defect(&system.generator, path, &values)
}

/// `sup_k ‖z_k − D_k‖_Z` where `D` propagates `z_0` with the integrand
/// `values` interpolated linearly between grid times.
pub fn duhamel_defect(generator: &DiagonalGenerator, path: &Path, values: &[SpectralPair]) -> Result<f64> {
    check_len(path.states.len(), values.len())?;
    let weights = StepWeights::new(generator, path.dt);
    let mut duhamel = path.states[0].clone();
    let mut worst = 0.0f64;
    for k in 0..path.n_steps() {
        duhamel = weights.apply(&duhamel, &values[k], Some(&values[k + 1]));
        worst = worst.max((&path.states[k + 1] - &duhamel).z_norm());
    }
    Ok(worst)
}

/// `sup_t ‖z_m(t) − z_n(t)‖_α` on a shared grid (`z_m` zero-padded).
pub fn cauchy_gap(traj_m: &Trajectory, traj_n: &Trajectory, lambdas: &[f64], alpha: f64) -> Result<f64> {
    let (a, b) = (&traj_m.path, &traj_n.path);
    check_len(b.states.len(), a.states.len())?;
    if (a.dt - b.dt).abs() > 1e-14 * b.dt {
        return Err(Error::Parameter("trajectories use different time grids".into()));
    }
    if traj_m.level > traj_n.level {
        return Err(Error::Level {
            requested: traj_m.level,
            available: traj_n.level,
        });
    }
    let mut sup = 0.0f64;
    for (zm, zn) in a.states.iter().zip(&b.states) {
        let d = &zm.embed(traj_n.level)? - zn;
        sup = sup.max(d.fractional_norm(lambdas, alpha)?);
    }
    Ok(sup)
}

/// `t^{1−α} / (1 − α)`.
pub fn horizon_factor(t1: f64, alpha: f64) -> f64 {
    t1.powf(1.0 - alpha) / (1.0 - alpha)
}

/// Largest `t₁` with `L t₁^{1−α} / (1−α) ≤ 1/2`, pulled inside by a
/// relative `1e-9` so that the inequality survives rounding.
pub fn contraction_horizon(lipschitz: f64, alpha: f64) -> f64 {
    if lipschitz <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - alpha) / (2.0 * lipschitz)).powf(1.0 / (1.0 - alpha)) * (1.0 - 1e-9)
}

/// Ball cover of a convergent sequence of initial data.
#[derive(Clone, Debug, PartialEq)]
pub struct CbCertificate {
    pub delta: f64,
    /// First index whose element lies within `δ/2` of the limit.
    pub m0: usize,
    /// Head elements `0..m0` followed by the limit.
    pub centers: Vec<SpectralPair>,
    /// `‖z_k − z_∞‖_α` for every element.
    pub distances: Vec<f64>,
}

/// Lower limit for the ball radius `δ`.
pub const DELTA_FLOOR: f64 = 1e-3;

/// Certify that a sequence of initial data (all at one level, the last
/// element standing for the limit) is covered by finitely many balls of
/// radius `δ/2`: individual balls around the head and one ball around the
/// limit containing the whole tail.
pub fn cb_certificate(sequence: &[SpectralPair], lambdas: &[f64], alpha: f64, delta_min: f64) -> Result<CbCertificate> {
    let limit = sequence
        .last()
        .ok_or_else(|| Error::Certification("empty sequence".into()))?;
    if sequence.iter().any(|z| !z.is_finite()) {
        return Err(Error::Certification("sequence contains non-finite entries".into()));
    }
    let distances = sequence
        .iter()
        .map(|z| (z - limit).fractional_norm(lambdas, alpha))
        .collect::<Result<Vec<_>>>()?;
    let scale = distances.iter().cloned().fold(0.0, f64::max);
    for (k, pair) in distances.windows(2).enumerate() {
        if pair[1] > pair[0] + 1e-12 * scale {
            return Err(Error::Certification(format!(
                "distance to the limit grows at index {}: {:.3e} -> {:.3e}",
                k + 1,
                pair[0],
                pair[1]
            )));
        }
    }
    let delta = delta_min.max(DELTA_FLOOR);
    let m0 = distances
        .iter()
        .position(|&d| d < delta / 2.0)
        .unwrap_or(sequence.len() - 1);
    let mut centers: Vec<SpectralPair> = sequence[..m0].to_vec();
    centers.push(limit.clone());
    Ok(CbCertificate {
        delta,
        m0,
        centers,
        distances,
    })
}

/// Vector-tail form of the Cauchy estimate between levels `m < n`:
/// `(‖z⁰_m − z⁰_n‖_α + c (sup‖(P_n − P_m) S‖ + sup‖(P_n − P_m) F(z_n)‖)) / (1 − L c)`
/// with `c = t₁^{1−α}/(1−α)`. `None` when `L c ≥ 1`.
pub fn rate_bound(initial_gap: f64, s_tail: f64, f_tail: f64, lipschitz: f64, t1: f64, alpha: f64) -> Option<f64> {
    let c = horizon_factor(t1, alpha);
    let q = lipschitz * c;
    (q < 1.0).then(|| (initial_gap + c * (s_tail + f_tail)) / (1.0 - q))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceEntry {
    pub m: usize,
    pub n: usize,
    pub gap: f64,
    pub bound: Option<f64>,
    /// Premise holds and the measured gap is within the bound.
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    pub certificate: CbCertificate,
    pub lipschitz: CertifiedLipschitz,
    pub radius: f64,
    pub t1: f64,
    /// `L t₁^{1−α}/(1−α)`.
    pub premise: f64,
    pub premise_holds: bool,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Clone, Debug)]
pub struct ConvergeConfig {
    pub levels: Vec<usize>,
    pub reference: usize,
    pub alpha: f64,
    /// Horizon; `None` picks the contraction horizon of the certified `L`.
    pub t1: Option<f64>,
    pub steps: usize,
    pub delta_min: f64,
    pub points_per_direction: usize,
}

/// Run the level sweep against the reference level and evaluate gaps and
/// rate bounds. `z0` is the reference-level initial datum; level `m` starts
/// from `P_m z0`.
pub fn converge(
    basis: &EigenBasis,
    mesh: &CoupledMesh,
    model: IonicModel,
    forcing: &dyn Forcing,
    z0: &SpectralPair,
    config: &ConvergeConfig,
    exec: Execution,
) -> Result<ConvergenceReport> {
    let n = config.reference;
    if config.levels.iter().any(|&m| m >= n) {
        return Err(Error::Parameter("every level must be below the reference".into()));
    }
    if config.steps == 0 {
        return Err(Error::Parameter("steps must be positive".into()));
    }
    let z0 = z0.project(n)?;
    let basis_n = basis.truncate(n)?;
    let lambdas = &basis_n.lambdas;
    let alpha = config.alpha;

    let mut all_levels = config.levels.clone();
    all_levels.push(n);
    let sequence = all_levels
        .iter()
        .map(|&m| z0.project(m)?.embed(n))
        .collect::<Result<Vec<_>>>()?;
    let certificate = cb_certificate(&sequence, lambdas, alpha, config.delta_min)?;
    let mut radius = 0.0f64;
    for c in &certificate.centers {
        radius = radius.max(c.fractional_norm(lambdas, alpha)?);
    }
    radius += certificate.delta;
    let lipschitz = certified_lipschitz(&model, &basis_n, alpha, radius)?;
    let l = lipschitz.spectral;
    let t1 = match config.t1 {
        Some(t) => t,
        None => contraction_horizon(l, alpha),
    };
    if !(t1 > 0.0 && t1.is_finite()) {
        return Err(Error::Parameter(format!("horizon t1 = {t1} is not usable")));
    }
    let premise = l * horizon_factor(t1, alpha);
    let premise_holds = premise <= 0.5;
    let ball = premise_holds.then_some(Ball { radius, alpha });
    let dt = t1 / config.steps as f64;

    let runs = exec.map(all_levels.len(), |k| {
        let m = all_levels[k];
        let system = GalerkinSystem::new(basis, mesh, model, m, config.points_per_direction, Execution::Sequential)?;
        solve_ivp(&system, &z0.project(m)?, t1, dt, forcing, ball)
    });
    let trajectories = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = &trajectories[trajectories.len() - 1];

    let system_n = GalerkinSystem::new(basis, mesh, model, n, config.points_per_direction, exec)?;
    let times = reference.path.times();
    let f_values = reference
        .path
        .states
        .iter()
        .map(|z| system_n.projector.project(z, exec))
        .collect::<Result<Vec<_>>>()?;
    let s_values = times
        .iter()
        .map(|&t| forcing.sample(t, n))
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(config.levels.len());
    for (k, &m) in config.levels.iter().enumerate() {
        let gap = cauchy_gap(&trajectories[k], reference, lambdas, alpha)?;
        let initial_gap = (&sequence[k] - &sequence[sequence.len() - 1]).fractional_norm(lambdas, alpha)?;
        let tail_sup = |values: &[SpectralPair]| -> Result<f64> {
            let mut sup = 0.0f64;
            for v in values {
                sup = sup.max(v.tail(m)?.z_norm());
            }
            Ok(sup)
        };
        let bound = rate_bound(initial_gap, tail_sup(&s_values)?, tail_sup(&f_values)?, l, t1, alpha);
        let certified = premise_holds && bound.is_some_and(|b| gap <= b);
        entries.push(ConvergenceEntry {
            m,
            n,
            gap,
            bound,
            certified,
        });
    }
    Ok(ConvergenceReport {
        entries,
        certificate,
        lipschitz,
        radius,
        t1,
        premise,
        premise_holds,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{StripGeometry, Tensor2};

    fn operator() -> BidomainOperator {
        BidomainOperator::uniform(
            &StripGeometry {
                nx_heart: 6,
                nx_torso: 4,
                ny: 6,
                ..Default::default()
            },
            Tensor2::isotropic(1.0),
            Tensor2::isotropic(2.0),
            Tensor2::isotropic(1.5),
            Execution::Sequential,
        )
        .unwrap()
    }

    #[test]
    fn pure_decay_is_exact() {
        let op = operator();
        let basis = op.compute_eigenbasis(4).unwrap();
        let model = IonicModel::inert(1.0).unwrap();
        let sys = GalerkinSystem::new(&basis, &op.mesh, model, 4, 4, Execution::Sequential).unwrap();
        let z0 = SpectralPair::mode(4, 2);
        let traj = solve_ivp(&sys, &z0, 1.0, 0.05, &SeparableForcing::zero(4), None).unwrap();
        for (t, z) in traj.path.times().iter().zip(&traj.path.states) {
            let exact = sys.generator.semigroup(&z0, *t).unwrap();
            assert!((z - &exact).z_norm() < 1e-13);
        }
        assert!(mild_residual(&sys, &traj, &SeparableForcing::zero(4)).unwrap() < 1e-13);
    }

    #[test]
    fn constant_forcing_closed_form() {
        let op = operator();
        let basis = op.compute_eigenbasis(3).unwrap();
        let a1 = 2.0;
        let model = IonicModel::linear_test(a1).unwrap();
        let sys = GalerkinSystem::new(&basis, &op.mesh, model, 3, 2, Execution::Sequential).unwrap();
        let s = DVector::from_vec(vec![0.0, 1.0, -0.5, 0.25]);
        let forcing = SeparableForcing::new(s.clone(), TimeProfile::Constant, 1.0);
        let z0 = SpectralPair::mode(3, 1);
        let err = |dt: f64| {
            let traj = solve_ivp(&sys, &z0, 1.0, dt, &forcing, None).unwrap();
            let z = traj.path.last();
            // u_i' = −(a1 + λ_i) u_i + (a1 − 1) u_i + s_i
            (0..4)
                .map(|i| {
                    let rate = 1.0 + basis.lambdas[i];
                    let fixed = s[i] / rate;
                    let exact = fixed + (z0.u[i] - fixed) * (-rate).exp();
                    (z.u[i] - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 < 1e-4);
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn ball_exit_is_reported() {
        let op = operator();
        let basis = op.compute_eigenbasis(3).unwrap();
        let model = IonicModel::inert(1.0).unwrap();
        let sys = GalerkinSystem::new(&basis, &op.mesh, model, 3, 2, Execution::Sequential).unwrap();
        let forcing = SeparableForcing::new(DVector::from_vec(vec![5.0, 0.0, 0.0, 0.0]), TimeProfile::Constant, 1.0);
        let err = solve_ivp(&sys, &SpectralPair::zeros(3), 1.0, 0.01, &forcing, Some(Ball { radius: 1.0, alpha: 0.8 }));
        match err {
            Err(Error::BallExit { time, radius, .. }) => {
                assert!(time > 0.0 && time < 1.0 && radius == 1.0);
            }
            other => panic!("expected ball exit, got {other:?}"),
        }
        assert!(matches!(
            solve_ivp(&sys, &SpectralPair::zeros(3), 1.0, 0.3, &forcing, None),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn corrupted_trajectory_is_detected() {
        let op = operator();
        let basis = op.compute_eigenbasis(3).unwrap();
        let model = IonicModel::fhn_default(1.0).unwrap();
        let sys = GalerkinSystem::new(&basis, &op.mesh, model, 3, 4, Execution::Sequential).unwrap();
        let mut z0 = SpectralPair::zeros(3);
        z0.u[0] = 0.5;
        z0.u[1] = 0.3;
        let forcing = SeparableForcing::zero(3);
        let mut traj = solve_ivp(&sys, &z0, 0.5, 0.005, &forcing, None).unwrap();
        assert!(mild_residual(&sys, &traj, &forcing).unwrap() < 1e-5);
        traj.path.states[40].u[1] += 1e-3;
        assert!(mild_residual(&sys, &traj, &forcing).unwrap() >= 1e-4);
    }

    #[test]
    fn cb_certificate_examples() {
        let l = vec![0.0, 1.0, 4.0, 9.0];
        let z = SpectralPair::mode(3, 1);
        let c = cb_certificate(&vec![z.clone(); 4], &l, 0.8, 0.0).unwrap();
        assert_eq!((c.m0, c.delta), (0, DELTA_FLOOR));
        assert_eq!(c.centers.len(), 1);

        let mut full = SpectralPair::zeros(3);
        for i in 0..4 {
            full.u[i] = 0.3f64.powi(i as i32 + 1);
        }
        let seq: Vec<_> = (0..4).map(|m| full.project(m).unwrap().embed(3).unwrap()).collect();
        let c = cb_certificate(&seq, &l, 0.8, 0.01).unwrap();
        let expected = c.distances.iter().position(|&d| d < 0.005).unwrap();
        assert_eq!(c.m0, expected);
        assert_eq!(c.centers.len(), expected + 1);

        let mut bad = seq.clone();
        bad[2].u[0] += 10.0;
        assert!(matches!(cb_certificate(&bad, &l, 0.8, 0.01), Err(Error::Certification(_))));
    }

    #[test]
    fn horizon_and_bound_arithmetic() {
        let t1 = contraction_horizon(4.0, 0.8);
        assert!(4.0 * horizon_factor(t1, 0.8) <= 0.5);
        assert!((4.0 * horizon_factor(t1, 0.8) - 0.5).abs() < 1e-9);
        assert!((rate_bound(1.0, 0.0, 0.0, 4.0, t1, 0.8).unwrap() - 2.0).abs() < 1e-8);
        assert_eq!(rate_bound(1.0, 0.0, 0.0, 10.0, 1.0, 0.8), None);
    }

    #[test]
    fn separable_forcing_samples() {
        let f = SeparableForcing::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), TimeProfile::Sine { period: 2.0 }, 0.5);
        let s = f.sample(0.5, 1).unwrap();
        assert!((s.u[1] - 1.0).abs() < 1e-15);
        assert_eq!(s.w, DVector::zeros(2));
        assert!(f.sample(0.5, 3).is_err());
        assert!(TimeProfile::Cosine { period: 1.0 }.at(0.5) + 1.0 < 1e-15);
    }
}
