//! Subcommand bodies. Each returns a JSON summary for the manifest and an
//! optional failure message that turns into exit status 1.

use std::f64::consts::TAU;

use bidomain_core::galerkin::{
    converge, forcing_coefficients, mild_residual, solve_ivp, ConvergeConfig, GalerkinSystem, SeparableForcing,
    TimeProfile,
};
use bidomain_core::ionic::IonicModel;
use bidomain_core::operator::{BidomainOperator, EigenBasis};
use bidomain_core::periodic::{
    certify, contraction_certificates, fixed_point_solve, largest_certified_radius, Certificate, PeriodicProblem,
    PeriodicSolver,
};
use bidomain_core::spectral::{Path, SpectralPair};
use bidomain_core::Execution;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{HarnessConfig, InitialKind, ProfileKind};
use crate::error::{HarnessError, InModule};
use crate::output::{csv, eigenbasis_csv, num, path_csv, triplet_csv, RunDir};
use crate::Command;

/// Default margin on `κ L(r0) r0 ≤ margin / 2` when `r0` is not configured.
const RADIUS_MARGIN: f64 = 0.99;
/// Default number of random path pairs in the Lipschitz probe.
const PROBES: usize = 8;

pub struct Outcome {
    pub summary: Value,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, failure: None }
    }
}

pub fn dispatch(
    command: &Command,
    config: &HarnessConfig,
    exec: Execution,
    run: &mut RunDir,
) -> Result<Outcome, HarnessError> {
    match command {
        Command::Eigen { .. } => eigen(config, exec, run),
        Command::ExportForms => export_forms(config, exec, run),
        Command::Ivp { .. } => ivp(config, exec, run),
        Command::Converge { .. } => convergence(config, exec, run),
        Command::Periodic { .. } => periodic(config, exec, run),
        Command::CheckConditions { .. } => check_conditions(config, exec, run),
    }
}

fn operator(config: &HarnessConfig, exec: Execution) -> Result<BidomainOperator, HarnessError> {
    let (si, se, st) = config.tensors();
    BidomainOperator::uniform(&config.geometry(), si, se, st, exec).in_module("bidomain_operator")
}

fn basis(op: &BidomainOperator, m: usize) -> Result<EigenBasis, HarnessError> {
    op.compute_eigenbasis(m).in_module("bidomain_operator")
}

fn model(config: &HarnessConfig) -> Result<IonicModel, HarnessError> {
    config.model().in_module("ionic")
}

fn forcing(config: &HarnessConfig, op: &BidomainOperator, basis: &EigenBasis) -> Result<SeparableForcing, HarnessError> {
    let f = &config.forcing;
    let y_period = config.geometry.y_period;
    let k = f64::from(f.wavenumber);
    let s_vals = op.mesh.sample_endo(|y| (TAU * k * y / y_period).cos());
    let coefficients = forcing_coefficients(op, basis, &s_vals).in_module("galerkin_ivp")?;
    let period = config.time.period;
    let profile = match f.profile {
        ProfileKind::Constant => TimeProfile::Constant,
        ProfileKind::Sine => TimeProfile::Sine { period },
        ProfileKind::Cosine => TimeProfile::Cosine { period },
    };
    Ok(SeparableForcing::new(coefficients, profile, f.amplitude))
}

/// Initial datum at the basis level: zero, or a smooth bump that is even
/// about both heart faces and periodic in `y`.
fn initial(config: &HarnessConfig, op: &BidomainOperator, basis: &EigenBasis) -> Result<SpectralPair, HarnessError> {
    let m = basis.m_max;
    let init = &config.initial;
    if init.kind == InitialKind::Zero {
        return Ok(SpectralPair::zeros(m));
    }
    let g = &config.geometry;
    let scale = (TAU * init.width).powi(2);
    let u0 = DVector::from_fn(op.n_heart(), |k, _| {
        let p = op.mesh.nodes[k];
        let gx = ((TAU * (p[0] / g.heart_length - 0.5)).cos() - 1.0) / scale;
        let gy = ((TAU * (p[1] / g.y_period - 0.5)).cos() - 1.0) / scale;
        init.amplitude * (gx + gy).exp()
    });
    Ok(SpectralPair {
        u: basis.coefficients(&u0).in_module("bidomain_operator")?,
        w: DVector::zeros(m + 1),
    })
}

fn eigen(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let op = operator(config, exec)?;
    let basis = basis(&op, config.spectral.m)?;
    run.write("eigenbasis.csv", &eigenbasis_csv(&basis))?;
    let rows = basis.lambdas.iter().enumerate().map(|(i, &l)| vec![i.to_string(), num(l)]);
    run.write("lambdas.csv", &csv(&["n", "lambda"], rows))?;
    let nodes = op.mesh.nodes[..op.n_heart()]
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i.to_string(), num(p[0]), num(p[1])]);
    run.write("nodes.csv", &csv(&["node", "x", "y"], nodes))?;
    let d = &basis.diagnostics;
    Ok(Outcome::ok(json!({
        "m": basis.m_max,
        "heart_nodes": op.n_heart(),
        "lambda_1": basis.lambdas.get(1),
        "orthonormality_defect": d.orthonormality_defect,
        "scaled_residual": d.scaled_residual,
        "raw_lambda0": d.raw_lambda0,
    })))
}

fn export_forms(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let op = operator(config, exec)?;
    run.write("a_form.csv", &triplet_csv(op.a_form()))?;
    run.write("mass_heart.csv", &triplet_csv(&op.forms.m_h))?;
    run.write("stiffness_i.csv", &triplet_csv(&op.forms.k_i))?;
    let nodes = op
        .mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i.to_string(), num(p[0]), num(p[1])]);
    run.write("nodes.csv", &csv(&["node", "x", "y"], nodes))?;
    Ok(Outcome::ok(json!({
        "nodes": op.mesh.n_nodes(),
        "heart_nodes": op.n_heart(),
    })))
}

fn ivp(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let m = config.spectral.m;
    let op = operator(config, exec)?;
    let basis = basis(&op, m)?;
    let model = model(config)?;
    let system = GalerkinSystem::new(&basis, &op.mesh, model, m, config.spectral.quadrature_points, exec)
        .in_module("galerkin_ivp")?;
    let forcing = forcing(config, &op, &basis)?;
    let z0 = initial(config, &op, &basis)?;
    let traj = solve_ivp(&system, &z0, config.time.t1, config.time.dt, &forcing, None).in_module("galerkin_ivp")?;
    run.write("trajectory.csv", &path_csv(&traj.path))?;
    let residual = mild_residual(&system, &traj, &forcing).in_module("galerkin_ivp")?;
    let alpha = config.spectral.alpha0;
    Ok(Outcome::ok(json!({
        "m": m,
        "steps": traj.path.n_steps(),
        "dt": traj.dt,
        "method": traj.method,
        "order": traj.order,
        "mild_residual": residual,
        "final_alpha_norm": traj.path.last().fractional_norm(system.lambdas(), alpha).in_module("spectral_calculus")?,
        "sup_alpha_norm": traj.path.sup_norm(system.lambdas(), alpha).in_module("spectral_calculus")?,
        "aliasing": system.projector.aliasing,
    })))
}

fn convergence(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let s = &config.spectral;
    let op = operator(config, exec)?;
    let basis = basis(&op, s.reference)?;
    let model = model(config)?;
    let forcing = forcing(config, &op, &basis)?;
    let z0 = initial(config, &op, &basis)?;
    let t1 = (!config.time.certified_horizon).then_some(config.time.t1);
    let steps = if config.time.certified_horizon {
        (1.0 / config.time.dt).round().max(1.0) as usize
    } else {
        (config.time.t1 / config.time.dt).round().max(1.0) as usize
    };
    let cc = ConvergeConfig {
        levels: s.levels.clone(),
        reference: s.reference,
        alpha: s.alpha0,
        t1,
        steps,
        delta_min: config.tolerances.delta_min,
        points_per_direction: s.quadrature_points,
    };
    let report = converge(&basis, &op.mesh, model, &forcing, &z0, &cc, exec).in_module("galerkin_ivp")?;
    let rows = report.entries.iter().map(|e| {
        vec![
            e.m.to_string(),
            e.n.to_string(),
            num(e.gap),
            e.bound.map_or_else(String::new, num),
            e.certified.to_string(),
        ]
    });
    run.write("report.csv", &csv(&["m", "n", "gap", "bound", "certified"], rows))?;
    if let Some(reference) = report.trajectories.last() {
        run.write("reference_trajectory.csv", &path_csv(&reference.path))?;
    }
    let violations: Vec<usize> = report
        .entries
        .iter()
        .filter(|e| e.bound.is_some_and(|b| e.gap > b))
        .map(|e| e.m)
        .collect();
    let summary = json!({
        "levels": s.levels,
        "reference": s.reference,
        "t1": report.t1,
        "steps": steps,
        "lipschitz": report.lipschitz.spectral,
        "ball_radius": report.radius,
        "premise": report.premise,
        "premise_holds": report.premise_holds,
        "cb_delta": report.certificate.delta,
        "cb_m0": report.certificate.m0,
        "bound_violations": violations,
    });
    if !report.premise_holds {
        eprintln!(
            "warning: contraction premise {:.6e} exceeds 1/2 at t1 = {}; rate bounds are not evaluated",
            report.premise, report.t1
        );
    }
    let failure = (!violations.is_empty()).then(|| format!("measured gap exceeds the rate bound at levels {violations:?}"));
    Ok(Outcome { summary, failure })
}

/// Everything the periodic subcommands share.
struct PeriodicSetup {
    op: BidomainOperator,
    basis: EigenBasis,
    model: IonicModel,
    forcing: SeparableForcing,
    r0: f64,
}

fn periodic_setup(config: &HarnessConfig, exec: Execution) -> Result<PeriodicSetup, HarnessError> {
    let m = config.spectral.m;
    let op = operator(config, exec)?;
    let basis = basis(&op, m)?;
    let model = model(config)?;
    let forcing = forcing(config, &op, &basis)?;
    let r0 = match config.periodic.r0 {
        Some(r0) => r0,
        None => {
            let params = config.params().in_module("spectral_calculus")?;
            let margin = config.periodic.radius_margin.unwrap_or(RADIUS_MARGIN);
            largest_certified_radius(&model, &basis, &params, margin, 1e-9, 10.0)
                .in_module("periodic")?
                .ok_or_else(|| HarnessError::Failed("no radius in [1e-9, 10] meets the contraction condition".into()))?
        }
    };
    Ok(PeriodicSetup {
        op,
        basis,
        model,
        forcing,
        r0,
    })
}

fn problem<'a>(config: &HarnessConfig, setup: &'a PeriodicSetup) -> Result<PeriodicProblem<'a>, HarnessError> {
    let params = config.params().in_module("spectral_calculus")?;
    let mut p = PeriodicProblem::new(params, setup.model, setup.r0, &setup.forcing).in_module("periodic")?;
    p.samples = config.time.samples;
    p.points_per_direction = config.spectral.quadrature_points;
    Ok(p)
}

fn certificate_json(c: &Certificate) -> Value {
    json!({ "value": c.value, "threshold": c.threshold, "passes": c.passes })
}

fn periodic(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let setup = periodic_setup(config, exec)?;
    let problem = problem(config, &setup)?;
    let solver =
        PeriodicSolver::new(&problem, &setup.basis, &setup.op.mesh, config.spectral.m, exec).in_module("periodic")?;
    let init = solver.linear_periodic_solution().in_module("periodic")?;
    let tol = config.tolerances.fixed_point;
    let report = fixed_point_solve(&solver, &init, tol, config.tolerances.max_iter).in_module("periodic")?;
    let mut rows = Vec::with_capacity(report.iterations());
    for (k, (&update, &ratio)) in report.update_norms.iter().zip(&report.ratios).enumerate() {
        let defect = report.iterates[k + 1]
            .periodicity_defect(solver.lambdas(), solver.alpha())
            .in_module("periodic")?;
        let ratio = if ratio.is_nan() { String::new() } else { num(ratio) };
        rows.push(vec![(k + 1).to_string(), num(update), ratio, num(defect)]);
    }
    run.write("report.csv", &csv(&["iter", "update_norm", "ratio", "periodic_defect"], rows))?;
    run.write("periodic_solution.csv", &path_csv(report.limit()))?;
    let lipschitz = certify(&solver, &setup.basis, &setup.model).in_module("ionic")?;
    let certs = contraction_certificates(
        lipschitz.spectral,
        setup.r0,
        solver.f0_norm().in_module("periodic")?,
        solver.s_hat(),
        &problem.params,
    )
    .in_module("periodic")?;
    let summary = json!({
        "m": config.spectral.m,
        "r0": setup.r0,
        "iterations": report.iterations(),
        "converged": report.converged,
        "diverged": report.diverged,
        "ratio_estimate": report.ratio_estimate,
        "max_ratio": report.max_ratio,
        "periodic_defect": report.periodic_defect,
        "mild_residual": report.mild_residual,
        "contraction_factor": certs.stated_factor,
        "lipschitz_factor": certs.lipschitz_factor,
        "conditions_hold": certs.contraction.passes && certs.invariance.passes,
    });
    let failure = if report.diverged {
        Some(format!("fixed-point iteration diverged after {} iterations", report.iterations()))
    } else if !report.converged {
        Some(format!("no convergence to {tol:e} within {} iterations", report.iterations()))
    } else {
        None
    };
    Ok(Outcome { summary, failure })
}

/// Random periodic path `a + b cos(2πt/T) + c sin(2πt/T)` with coefficients
/// decaying in the mode index, scaled to `‖·‖_{C^α} = radius`.
fn random_path(solver: &PeriodicSolver, rng: &mut ChaCha8Rng, radius: f64) -> Result<Path, HarnessError> {
    let m = solver.level();
    let mut draw = || {
        let u = DVector::from_fn(m + 1, |i, _| rng.random_range(-1.0..1.0) / (1.0 + i as f64));
        let w = DVector::from_fn(m + 1, |i, _| rng.random_range(-1.0..1.0) / (1.0 + i as f64));
        SpectralPair { u, w }
    };
    let (a, b, c) = (draw(), draw(), draw());
    let grid = solver.zero_path();
    let period = grid.horizon();
    let states = grid
        .times()
        .iter()
        .map(|&t| {
            let th = TAU * t / period;
            let mut z = a.clone();
            z.axpy(th.cos(), &b);
            z.axpy(th.sin(), &c);
            z
        })
        .collect();
    let mut path = Path { dt: grid.dt, states };
    let last = path.states.len() - 1;
    path.states[last] = path.states[0].clone();
    let norm = solver.c_alpha_norm(&path).in_module("periodic")?;
    Ok(path.scale(radius / norm))
}

fn check_conditions(config: &HarnessConfig, exec: Execution, run: &mut RunDir) -> Result<Outcome, HarnessError> {
    let setup = periodic_setup(config, exec)?;
    let problem = problem(config, &setup)?;
    let solver =
        PeriodicSolver::new(&problem, &setup.basis, &setup.op.mesh, config.spectral.m, exec).in_module("periodic")?;
    let lipschitz = certify(&solver, &setup.basis, &setup.model).in_module("ionic")?;
    let certs = contraction_certificates(
        lipschitz.spectral,
        setup.r0,
        solver.f0_norm().in_module("periodic")?,
        solver.s_hat(),
        &problem.params,
    )
    .in_module("periodic")?;
    let named = [
        ("invariance", &certs.invariance),
        ("contraction", &certs.contraction),
        ("premise", &certs.premise),
    ];
    for (name, c) in named {
        println!(
            "{name}: {:.6e} vs {:.6e} {}",
            c.value,
            c.threshold,
            if c.passes { "PASS" } else { "FAIL" }
        );
    }
    let rows = named
        .iter()
        .map(|(name, c)| vec![name.to_string(), num(c.value), num(c.threshold), c.passes.to_string()]);
    run.write("conditions.csv", &csv(&["condition", "value", "threshold", "passes"], rows))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let probes = config.periodic.probes.unwrap_or(PROBES);
    let mut probe_rows = Vec::with_capacity(probes);
    let mut max_ratio = 0.0f64;
    for k in 0..probes {
        let r1 = rng.random_range(0.1..0.9) * setup.r0;
        let r2 = rng.random_range(0.1..0.9) * setup.r0;
        let z1 = random_path(&solver, &mut rng, r1)?;
        let z2 = random_path(&solver, &mut rng, r2)?;
        let k1 = solver.kp_apply(&z1).in_module("periodic")?;
        let k2 = solver.kp_apply(&z2).in_module("periodic")?;
        let ratio = solver.distance(&k1, &k2).in_module("periodic")? / solver.distance(&z1, &z2).in_module("periodic")?;
        max_ratio = max_ratio.max(ratio);
        probe_rows.push(vec![k.to_string(), num(ratio)]);
    }
    run.write("lipschitz_probe.csv", &csv(&["probe", "ratio"], probe_rows))?;
    println!(
        "empirical Lipschitz ratio of K: {max_ratio:.6e} (2κLr0 = {:.6e}, 2κL = {:.6e})",
        certs.stated_factor, certs.lipschitz_factor
    );

    let summary = json!({
        "m": config.spectral.m,
        "r0": setup.r0,
        "kappa": certs.kappa,
        "lipschitz": lipschitz.spectral,
        "invariance": certificate_json(&certs.invariance),
        "contraction": certificate_json(&certs.contraction),
        "premise": certificate_json(&certs.premise),
        "stated_factor": certs.stated_factor,
        "lipschitz_factor": certs.lipschitz_factor,
        "empirical_ratio": max_ratio,
        "probes": probes,
    });
    let failed: Vec<&str> = named.iter().filter(|(_, c)| !c.passes).map(|(n, _)| *n).collect();
    let failure = (!failed.is_empty()).then(|| format!("conditions not met: {}", failed.join(", ")));
    Ok(Outcome { summary, failure })
}
