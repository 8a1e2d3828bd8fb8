//! `T`-periodic Galerkin solutions: the linear periodic solution, the
//! fixed-point map `K(z) = L^(p) P_m (F(z) + S)` and its contraction
//! certificates.

use crate::domain::CoupledMesh;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::galerkin::{duhamel_defect, Forcing};
use crate::ionic::{certified_lipschitz, CertifiedLipschitz, IonicModel, NonlinearProjector};
use crate::operator::EigenBasis;
use crate::spectral::{DiagonalGenerator, FractionalParams, Path, SpectralPair};

/// Default number of grid intervals per period.
pub const DEFAULT_SAMPLES: usize = 256;

/// Consecutive update-norm increases after which the iteration is declared
/// divergent.
pub const DIVERGENCE_STREAK: usize = 5;

/// Relative tolerance on `S(0) = S(T)` and on `z(0) = z(T)` for inputs.
const PERIODICITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy)]
pub struct PeriodicProblem<'a> {
    pub params: FractionalParams,
    pub model: IonicModel,
    /// Radius of the `C^{α_0}_T` ball the iteration is confined to.
    pub r0: f64,
    pub samples: usize,
    pub points_per_direction: usize,
    pub forcing: &'a dyn Forcing,
}

impl<'a> PeriodicProblem<'a> {
    pub fn new(params: FractionalParams, model: IonicModel, r0: f64, forcing: &'a dyn Forcing) -> Result<Self> {
        let p = PeriodicProblem {
            params,
            model,
            r0,
            samples: DEFAULT_SAMPLES,
            points_per_direction: crate::ionic::DEFAULT_QUADRATURE,
            forcing,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.model.validate()?;
        if self.model.a1 != self.params.a1 {
            return Err(Error::Parameter(format!(
                "ionic shift a_1 = {} differs from generator shift {}",
                self.model.a1, self.params.a1
            )));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::Parameter(format!("r0 must be positive, got {}", self.r0)));
        }
        if self.samples == 0 {
            return Err(Error::Parameter("samples per period must be positive".into()));
        }
        Ok(())
    }
}

/// The periodic problem discretized at level `m`.
pub struct PeriodicSolver {
    pub generator: DiagonalGenerator,
    pub projector: NonlinearProjector,
    pub params: FractionalParams,
    pub r0: f64,
    /// `P_m S` on the period grid.
    pub forcing: Path,
    pub exec: Execution,
}

impl PeriodicSolver {
    pub fn new(problem: &PeriodicProblem, basis: &EigenBasis, mesh: &CoupledMesh, m: usize, exec: Execution) -> Result<Self> {
        problem.validate()?;
        let basis = basis.truncate(m)?;
        let period = problem.params.period;
        let n = problem.samples;
        let states = (0..=n)
            .map(|k| problem.forcing.sample(period * k as f64 / n as f64, m))
            .collect::<Result<Vec<_>>>()?;
        let forcing = Path::uniform(period, states)?;
        let defect = (forcing.first() - forcing.last()).z_norm();
        if defect > PERIODICITY_TOL * forcing.sup_z_norm().max(1.0) {
            return Err(Error::Parameter(format!(
                "forcing is not {period}-periodic: |S(0) - S(T)| = {defect:.3e}"
            )));
        }
        Ok(PeriodicSolver {
            generator: DiagonalGenerator::new(&basis.lambdas, problem.params.a1)?,
            projector: NonlinearProjector::new(problem.model, &basis, mesh, problem.points_per_direction)?,
            params: problem.params,
            r0: problem.r0,
            forcing,
            exec,
        })
    }

    pub fn level(&self) -> usize {
        self.generator.level()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.generator.lambdas
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha0
    }

    /// `Ŝ = sup_t ‖P_m S(t)‖_Z`.
    pub fn s_hat(&self) -> f64 {
        self.forcing.sup_z_norm()
    }

    /// `‖P_m F(0)‖_Z`.
    pub fn f0_norm(&self) -> Result<f64> {
        Ok(self.projector.project(&SpectralPair::zeros(self.level()), self.exec)?.z_norm())
    }

    /// `sup_t ‖z(t)‖_{α_0}`.
    pub fn c_alpha_norm(&self, path: &Path) -> Result<f64> {
        path.sup_norm(self.lambdas(), self.alpha())
    }

    /// `sup_t ‖a(t) − b(t)‖_{α_0}`.
    pub fn distance(&self, a: &Path, b: &Path) -> Result<f64> {
        self.c_alpha_norm(&a.sub(b)?)
    }

    /// The zero path on the period grid.
    pub fn zero_path(&self) -> Path {
        Path::constant(self.params.period, self.forcing.n_steps(), &SpectralPair::zeros(self.level()))
            .expect("period grid is valid")
    }

    /// `∫₀ᵀ R(t, τ) P_m S(τ) dτ`.
    pub fn linear_periodic_solution(&self) -> Result<Path> {
        self.generator.lp_apply(&self.forcing, self.exec)
    }

    fn check_input(&self, z: &Path) -> Result<()> {
        if z.states.len() != self.forcing.states.len() || (z.dt - self.forcing.dt).abs() > 1e-14 * self.forcing.dt {
            return Err(Error::Parameter("path is not on the period grid".into()));
        }
        if z.level() != self.level() {
            return Err(Error::Level {
                requested: z.level(),
                available: self.level(),
            });
        }
        let defect = (z.first() - z.last()).z_norm();
        if defect > PERIODICITY_TOL * z.sup_z_norm().max(1.0) {
            return Err(Error::Parameter(format!("input path is not periodic: defect {defect:.3e}")));
        }
        Ok(())
    }

    /// `P_m (F(z) + S)` on the grid.
    pub fn integrand(&self, z: &Path) -> Result<Path> {
        let values = self.exec.map(z.states.len(), |k| {
            let mut f = self.projector.project(&z.states[k], Execution::Sequential)?;
            f.axpy(1.0, &self.forcing.states[k]);
            Ok(f)
        });
        Ok(Path {
            dt: z.dt,
            states: values.into_iter().collect::<Result<Vec<_>>>()?,
        })
    }

    /// `K(z) = L^(p) P_m (F(z) + S)` for `z` in the `r0` ball.
    pub fn kp_apply(&self, z: &Path) -> Result<Path> {
        self.check_input(z)?;
        let norm = self.c_alpha_norm(z)?;
        if norm > self.r0 {
            return Err(Error::CertificateScope { norm, radius: self.r0 });
        }
        self.generator.lp_apply(&self.integrand(z)?, self.exec)
    }

    /// Mild-form defect of a periodic path over one period.
    pub fn mild_residual(&self, z: &Path) -> Result<f64> {
        let f = self.integrand(z)?;
        duhamel_defect(&self.generator, z, &f.states)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub value: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Left sides of the three sufficient conditions for the periodic fixed
/// point, each evaluated as printed, together with the contraction factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionCertificates {
    /// `(L r0 + ‖F(0)‖ + Ŝ) κ ≤ r0 / 2`.
    pub invariance: Certificate,
    /// `κ L r0 < 1/2`.
    pub contraction: Certificate,
    /// `κ < 1/2`.
    pub premise: Certificate,
    /// `κ = 1/a_1 + T^{1−α_0} / ((1−α_0)(1 − e^{−a_1 T}))`.
    pub kappa: f64,
    /// `2 κ L r0`, the factor attached to the contraction condition.
    pub stated_factor: f64,
    /// `2 κ L`, the Lipschitz constant of `K` implied by the `L^(p)` bound.
    pub lipschitz_factor: f64,
}

pub fn contraction_certificates(
    lipschitz: f64,
    r0: f64,
    f0_norm: f64,
    s_hat: f64,
    params: &FractionalParams,
) -> Result<ContractionCertificates> {
    params.validate()?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::Parameter(format!("r0 must be positive, got {r0}")));
    }
    for (name, v) in [("L", lipschitz), ("|F(0)|", f0_norm), ("S_hat", s_hat)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("{name} must be non-negative, got {v}")));
        }
    }
    let kappa = params.kappa();
    let invariance = (lipschitz * r0 + f0_norm + s_hat) * kappa;
    let contraction = kappa * lipschitz * r0;
    Ok(ContractionCertificates {
        invariance: Certificate {
            value: invariance,
            threshold: r0 / 2.0,
            passes: invariance <= r0 / 2.0,
        },
        contraction: Certificate {
            value: contraction,
            threshold: 0.5,
            passes: contraction < 0.5,
        },
        premise: Certificate {
            value: kappa,
            threshold: 0.5,
            passes: kappa < 0.5,
        },
        kappa,
        stated_factor: 2.0 * contraction,
        lipschitz_factor: 2.0 * kappa * lipschitz,
    })
}

/// Certified Lipschitz data for the `r0` ball at the solver's level.
pub fn certify(solver: &PeriodicSolver, basis: &EigenBasis, model: &IonicModel) -> Result<CertifiedLipschitz> {
    let basis = basis.truncate(solver.level())?;
    certified_lipschitz(model, &basis, solver.alpha(), solver.r0)
}

/// Largest `r0` with `κ L(r0) r0 ≤ margin / 2`, where `L(r0)` is the
/// certified Lipschitz constant on the `r0` ball (bisection; `L` is
/// nondecreasing in `r0`). `None` when no radius in `[lo, hi]` qualifies.
pub fn largest_certified_radius(
    model: &IonicModel,
    basis: &EigenBasis,
    params: &FractionalParams,
    margin: f64,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    let kappa = params.kappa();
    let lhs = |r: f64| -> Result<f64> {
        Ok(kappa * certified_lipschitz(model, basis, params.alpha0, r)?.spectral * r)
    };
    let target = margin / 2.0;
    if lhs(lo)? > target {
        return Ok(None);
    }
    if lhs(hi)? <= target {
        return Ok(Some(hi));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if lhs(mid)? <= target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-14 * b {
            break;
        }
    }
    Ok(Some(a))
}

#[derive(Clone, Debug)]
pub struct FixedPointReport {
    pub iterates: Vec<Path>,
    /// `‖z^{k+1} − z^k‖_{C^{α_0}_T}` for every iteration.
    pub update_norms: Vec<f64>,
    /// Successive update-norm ratios (`NaN` for the first iteration).
    pub ratios: Vec<f64>,
    /// Geometric mean rate `(u_last / u_first)^{1/(k−1)}` over updates above
    /// round-off.
    pub ratio_estimate: f64,
    /// Largest successive ratio among updates above round-off.
    pub max_ratio: f64,
    pub converged: bool,
    pub diverged: bool,
    /// `‖z(0) − z(T)‖_{α_0}` of the last iterate.
    pub periodic_defect: f64,
    /// Mild-form defect of the last iterate over one period.
    pub mild_residual: f64,
}

impl FixedPointReport {
    pub fn limit(&self) -> &Path {
        self.iterates.last().expect("at least the initial path is stored")
    }

    pub fn iterations(&self) -> usize {
        self.update_norms.len()
    }
}

/// Picard iteration `z^{k+1} = K(z^k)` until the update falls below `tol`,
/// `max_iter` is reached or the update grows for five iterations in a row.
pub fn fixed_point_solve(solver: &PeriodicSolver, z_init: &Path, tol: f64, max_iter: usize) -> Result<FixedPointReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut iterates = vec![z_init.clone()];
    let mut update_norms: Vec<f64> = Vec::new();
    let mut ratios = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut streak = 0;
    for _ in 0..max_iter {
        let z = iterates.last().expect("non-empty");
        let next = solver.kp_apply(z)?;
        let update = solver.distance(&next, z)?;
        if !update.is_finite() {
            return Err(Error::Numerical("non-finite fixed-point update".into()));
        }
        let ratio = update_norms.last().map_or(f64::NAN, |&prev| update / prev);
        if ratio > 1.0 {
            streak += 1;
        } else {
            streak = 0;
        }
        update_norms.push(update);
        ratios.push(ratio);
        iterates.push(next);
        if update <= tol {
            converged = true;
            break;
        }
        if streak >= DIVERGENCE_STREAK {
            diverged = true;
            break;
        }
    }
    let (ratio_estimate, max_ratio) = ratio_estimates(&update_norms, &ratios, tol);
    let limit = iterates.last().expect("non-empty");
    Ok(FixedPointReport {
        periodic_defect: limit.periodicity_defect(solver.lambdas(), solver.alpha())?,
        mild_residual: solver.mild_residual(limit)?,
        iterates,
        update_norms,
        ratios,
        ratio_estimate,
        max_ratio,
        converged,
        diverged,
    })
}

/// Geometric mean and maximum of the successive ratios, restricted to
/// updates still well above round-off.
fn ratio_estimates(updates: &[f64], ratios: &[f64], tol: f64) -> (f64, f64) {
    let floor = (tol * 1e-2).max(1e-13 * updates.first().copied().unwrap_or(0.0));
    let kept: Vec<usize> = (0..updates.len()).take_while(|&k| updates[k] > floor).collect();
    let max = kept
        .iter()
        .skip(1)
        .map(|&k| ratios[k])
        .fold(f64::NAN, f64::max);
    let geometric = match kept.len() {
        0 | 1 => f64::NAN,
        n => (updates[n - 1] / updates[0]).powf(1.0 / (n - 1) as f64),
    };
    (geometric, max)
}

#[derive(Clone, Debug)]
pub struct PeriodicLevel {
    pub m: usize,
    pub report: FixedPointReport,
    /// `sup_t ‖z_m − z_n‖_{α_0}` against the reference level.
    pub gap: f64,
}

/// Fixed points at several levels (run in parallel), each started from its
/// linear periodic solution, with gaps against the reference level.
#[allow(clippy::too_many_arguments)]
pub fn periodic_sweep(
    problem: &PeriodicProblem,
    basis: &EigenBasis,
    mesh: &CoupledMesh,
    levels: &[usize],
    reference: usize,
    tol: f64,
    max_iter: usize,
    exec: Execution,
) -> Result<Vec<PeriodicLevel>> {
    let mut all = levels.to_vec();
    all.push(reference);
    let runs = exec.map(all.len(), |k| {
        let solver = PeriodicSolver::new(problem, basis, mesh, all[k], Execution::Sequential)?;
        let init = solver.linear_periodic_solution()?;
        fixed_point_solve(&solver, &init, tol, max_iter)
    });
    let mut reports = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let reference_report = reports.pop().expect("reference run");
    let lambdas = &basis.truncate(reference)?.lambdas;
    let alpha = problem.params.alpha0;
    let reference_limit = reference_report.limit().clone();
    let mut out = Vec::with_capacity(levels.len() + 1);
    for (report, &m) in reports.into_iter().zip(levels) {
        let lifted = report.limit().map(|z| z.embed(reference).expect("level below reference"));
        let gap = lifted.sub(&reference_limit)?.sup_norm(lambdas, alpha)?;
        out.push(PeriodicLevel { m, report, gap });
    }
    out.push(PeriodicLevel {
        m: reference,
        report: reference_report,
        gap: 0.0,
    });
    Ok(out)
}

/// Double the period grid until the fixed-point limit moves by less than
/// `tol / 10` on the shared samples. Returns `(samples, shift)` per doubling.
#[allow(clippy::too_many_arguments)]
pub fn grid_refinement(
    problem: &PeriodicProblem,
    basis: &EigenBasis,
    mesh: &CoupledMesh,
    m: usize,
    tol: f64,
    max_iter: usize,
    max_doublings: usize,
    exec: Execution,
) -> Result<Vec<(usize, f64)>> {
    let solve = |samples: usize| -> Result<(PeriodicSolver, Path)> {
        let p = PeriodicProblem { samples, ..*problem };
        let solver = PeriodicSolver::new(&p, basis, mesh, m, exec)?;
        let init = solver.linear_periodic_solution()?;
        let limit = fixed_point_solve(&solver, &init, tol, max_iter)?.limit().clone();
        Ok((solver, limit))
    };
    let (mut solver, mut coarse) = solve(problem.samples)?;
    let mut history = Vec::new();
    for _ in 0..max_doublings {
        let samples = 2 * (coarse.states.len() - 1);
        let (fine_solver, fine) = solve(samples)?;
        let restricted = Path {
            dt: coarse.dt,
            states: fine.states.iter().step_by(2).cloned().collect(),
        };
        let shift = solver.distance(&restricted, &coarse)?;
        history.push((samples, shift));
        solver = fine_solver;
        coarse = fine;
        if shift < tol / 10.0 {
            break;
        }
    }
    Ok(history)
}
