//! Stage orchestration. Stages exchange typed values only.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use super::config::{ExperimentConfig, SdeStart, SweepParameter};
use super::report::*;
use crate::diffusion::{drift_from_density, moments, simulate, stationary_histogram, InitialCondition, SdeConfig};
use crate::error::{Error, Result};
use crate::fields::{build_grid, gradient, l1_distance, BoundaryCondition, ScalarField};
use crate::force::{check_gibbs_relation, check_operator_identity, extra_potential, force_kernel, force_monte_carlo_batched};
use crate::kernel::{
    detailed_balance_asymmetry, ergodic_limit, evolve_family, evolve_forward, max_stable_dt, stationary_density_from_drift,
    verify_backward,
};
use crate::params::PhysicalParams;
use crate::reference::{ou_force, Gausson};
use crate::stationary::{
    classical_gibbs, gaussian_alpha, quantum_potential, solve_log_nlse_ground, verify_stationary_decomposition,
    EigenSolution,
};

const DIRICHLET: BoundaryCondition = BoundaryCondition::DirichletZero;

/// Pipeline stages after the stationary solve, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Kernel,
    Force,
}

/// The subcommands and the stages they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Solve,
    Simulate,
    Kernel,
    Force,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Kernel => "kernel",
            Command::Force => "force",
            Command::Sweep => "sweep",
        }
    }

    fn stages(self) -> &'static [Stage] {
        match self {
            Command::Verify => &[Stage::Simulate, Stage::Kernel, Stage::Force],
            Command::Simulate => &[Stage::Simulate],
            Command::Kernel => &[Stage::Kernel],
            Command::Force => &[Stage::Force],
            Command::Solve | Command::Sweep => &[],
        }
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

fn metadata(cfg: &ExperimentConfig, command: Command) -> RunMetadata {
    RunMetadata {
        schema_version: SCHEMA_VERSION,
        command: command.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn physics_record(p: &PhysicalParams) -> PhysicsRecord {
    PhysicsRecord {
        gamma: p.gamma(),
        kt: p.kt(),
        tau: p.tau(),
        nu: p.nu(),
        charge: p.charge(),
    }
}

/// Everything the later stages take from the stationary solve, restricted
/// to the transport grid.
struct Transport {
    rho: ScalarField,
    drift: ScalarField,
    potential: ScalarField,
}

fn transport(cfg: &ExperimentConfig, sol: &EigenSolution, nu: f64, mass: f64) -> Result<Transport> {
    let grid = cfg.transport_grid()?;
    let values = match &sol.log_density {
        Some(r) => r.resample(&grid).into_iter().map(|r| (2.0 * r).exp()).collect(),
        None => sol.rho.resample(&grid),
    };
    let rho = ScalarField::normalized_density(grid, values)?;
    let drift = drift_from_density(&rho, nu, DIRICHLET)?;
    let potential = cfg.potential.field(grid, mass)?;
    Ok(Transport { rho, drift, potential })
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

struct Outcome {
    bundle: ReportBundle,
}

impl Outcome {
    fn check(&mut self, c: CheckRecord) {
        self.bundle.checks.push(c);
    }
}

fn stationary_stage(cfg: &ExperimentConfig, p: &PhysicalParams, out: &mut Outcome) -> Result<(EigenSolution, ScalarField)> {
    let tol = &cfg.tolerances;
    let v = cfg.potential.field(cfg.grid()?, p.mass())?;
    let sol = staged("solve_log_nlse_ground", solve_log_nlse_ground(&v, p.gamma(), p.kt(), &cfg.solver))?;
    let balance = staged(
        "verify_stationary_decomposition",
        verify_stationary_decomposition(&sol, &v, p.gamma()),
    )?;
    let alpha = gaussian_alpha(&sol.rho);
    let reference = cfg.potential.harmonic_curvature(p.mass()).map(|c| Gausson::new(p.gamma(), p.kt(), c));
    let matched = (p.gamma() - p.quantum_gamma()).abs() <= 1e-12 * p.quantum_gamma();
    let identity = if matched {
        let extra = staged("extra_potential", extra_potential(&sol.rho, p.gamma(), DIRICHLET))?;
        let quantum = staged("quantum_potential", quantum_potential(&sol.rho, p.hbar(), p.mass(), DIRICHLET))?;
        Some(extra.values().iter().zip(quantum.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    } else {
        None
    };

    out.check(CheckRecord::at_most("stationary", "residual", sol.residual, tol.residual));
    out.check(CheckRecord::at_most("stationary", "balance", balance.max_abs, tol.balance));
    if let Some(g) = reference {
        out.check(CheckRecord::at_most(
            "stationary",
            "alpha_relative",
            ((alpha - g.alpha) / g.alpha).abs(),
            tol.gausson_relative,
        ));
        out.check(CheckRecord::at_most(
            "stationary",
            "lambda_relative",
            ((sol.lambda - g.lambda) / g.lambda).abs(),
            tol.gausson_relative,
        ));
    }
    if let Some(d) = identity {
        out.check(CheckRecord::at_most("stationary", "quantum_identity", d, tol.quantum_identity));
    }
    out.bundle.stationary = Some(StationaryRecord {
        lambda: sol.lambda,
        residual: sol.residual,
        iterations: sol.iterations,
        alpha,
        balance_max: balance.max_abs,
        balance_x: balance.x,
        reference_alpha: reference.map(|g| g.alpha),
        reference_lambda: reference.map(|g| g.lambda),
        quantum_identity_max: identity,
    });
    Ok((sol, v))
}

fn sde_stage(cfg: &ExperimentConfig, p: &PhysicalParams, sol: &EigenSolution, t: &Transport, out: &mut Outcome) -> Result<()> {
    let s = &cfg.sde;
    let sde = SdeConfig {
        dt: s.dt,
        n_steps: s.n_steps(),
        n_paths: s.paths,
        burn_in: s.burn_in,
        seed: cfg.seed,
        nu: p.nu(),
        sample_every: s.sample_every,
        log_increments: true,
    };
    let start = match s.start {
        SdeStart::Mode => InitialCondition::Point(t.rho.grid().x(argmax(t.rho.values()))),
        SdeStart::Density => InitialCondition::Density(t.rho.clone()),
    };
    let batch = staged("simulate", simulate(&t.drift, &sde, &start))?;
    let g = t.rho.grid();
    let bins = ((g.x_max() - g.x_min()) / s.bin_width).round() as usize + 1;
    let hgrid = staged("stationary_histogram", build_grid(g.x_min(), g.x_max(), bins))?;
    let hist = staged("stationary_histogram", stationary_histogram(&batch, &hgrid))?;
    let l1 = hist.l1_to(&sol.rho);
    let pos = staged("stationary_histogram", moments(&batch.sample_positions))?;
    let inc = staged("simulate", moments(batch.increments_logged.as_deref().unwrap_or_default()))?;
    let expected = 2.0 * p.nu() * s.dt;

    let tol = &cfg.tolerances;
    out.check(CheckRecord::at_most("sde", "histogram_l1", l1, tol.histogram_l1));
    out.check(CheckRecord::at_most(
        "sde",
        "increment_variance_sigmas",
        (inc.variance - expected).abs() / inc.variance_se,
        tol.increment_sigmas,
    ));
    out.bundle.sde = Some(SdeRecord {
        samples: hist.samples(),
        outside: hist.outside,
        bin_width: hgrid.spacing(),
        histogram_l1: l1,
        sample_mean: pos.mean,
        sample_variance: pos.variance,
        increment_variance: inc.variance,
        increment_variance_se: inc.variance_se,
        expected_increment_variance: expected,
    });
    Ok(())
}

fn kernel_stage(cfg: &ExperimentConfig, p: &PhysicalParams, t: &Transport, out: &mut Outcome) -> Result<()> {
    let k = &cfg.kernel;
    let nu = p.nu();
    let grid = *t.rho.grid();
    let dt = match k.dt {
        Some(dt) => dt,
        None => 0.5 * staged("evolve_forward", max_stable_dt(&t.drift, nu))?,
    };
    let start = k.start_position.map_or_else(|| argmax(t.rho.values()), |x| grid.nearest(x));
    let tail = grid.nearest(k.tail_position);

    let main = staged("evolve_forward", evolve_forward(&t.drift, nu, start, &k.times, dt))?;
    let other = staged("evolve_forward", evolve_forward(&t.drift, nu, tail, &k.times, dt))?;
    let erg = ergodic_limit(&main, &t.rho);
    let erg_tail = ergodic_limit(&other, &t.rho);
    let independence = l1_distance(main.columns.last().expect("t = 0 column"), other.columns.last().expect("t = 0 column"));

    let mut btimes = vec![0.0];
    btimes.extend_from_slice(&k.backward_times);
    let bk = staged("evolve_forward", evolve_forward(&t.drift, nu, start, &btimes, dt))?;
    let backward = staged("verify_backward", verify_backward(&bk, &t.drift, nu))?;

    let starts: Vec<usize> = (0..grid.len()).collect();
    let family = staged("detailed_balance", evolve_family(&t.drift, nu, &starts, &[0.0, k.balance_time], dt))?;
    // The scheme is reversible with respect to its own invariant density;
    // its distance to the solved density is reported separately.
    let invariant = staged("detailed_balance", stationary_density_from_drift(&t.drift, nu))?;
    let asym = staged("detailed_balance", detailed_balance_asymmetry(&family, 1, &invariant))?;
    let invariant_l1 = l1_distance(&invariant, &t.rho);

    let mass = main.max_mass_error().max(other.max_mass_error()).max(bk.max_mass_error());
    let min_value = main.min_value().min(other.min_value()).min(bk.min_value());
    let tol = &cfg.tolerances;
    out.check(CheckRecord::at_most("kernel", "mass_error", mass, tol.mass));
    out.check(CheckRecord::at_least("kernel", "min_value", min_value, crate::kernel::NEGATIVITY_FLOOR));
    out.check(CheckRecord::at_least("kernel", "starts_as_delta", f64::from(u8::from(main.starts_as_delta())), 1.0));
    out.check(CheckRecord::at_least("kernel", "ergodic_monotone", f64::from(u8::from(erg.monotone)), 1.0));
    out.check(CheckRecord::at_most("kernel", "ergodic_l1", erg.final_l1, tol.ergodic_l1));
    out.check(CheckRecord::at_most("kernel", "ergodic_l1_tail_start", erg_tail.final_l1, tol.ergodic_l1));
    out.check(CheckRecord::at_most("kernel", "start_independence_l1", independence, tol.ergodic_l1));
    out.check(CheckRecord::at_most("kernel", "backward_residual", backward.relative_residual, tol.backward));
    out.check(CheckRecord::at_most("kernel", "detailed_balance", asym, tol.detailed_balance));
    out.check(CheckRecord::at_most("kernel", "invariant_density_l1", invariant_l1, tol.invariant_density_l1));
    out.bundle.kernel = Some(KernelRecord {
        dt,
        start: grid.x(start),
        times: k.times.clone(),
        ergodic_l1: erg.l1,
        monotone: erg.monotone,
        tail_start: grid.x(tail),
        tail_final_l1: erg_tail.final_l1,
        start_independence_l1: independence,
        max_mass_error: mass,
        min_value,
        starts_as_delta: main.starts_as_delta(),
        backward_residual: backward.relative_residual,
        detailed_balance: asym,
        invariant_density_l1: invariant_l1,
    });
    Ok(())
}

fn force_stage(cfg: &ExperimentConfig, p: &PhysicalParams, t: &Transport, out: &mut Outcome) -> Result<Vec<f64>> {
    let f = &cfg.force;
    let (nu, tau) = (p.nu(), p.tau());
    let fk = staged(
        "force_kernel",
        force_kernel(&t.potential, &t.drift, nu, tau, f.s_max, f.n_s, f.kernel_dt),
    )?;
    let grid = *t.rho.grid();
    let nodes: Vec<usize> = f.start_positions.iter().map(|&x| grid.nearest(x)).collect();
    let mc_cfg = SdeConfig {
        dt: f.mc_dt,
        n_steps: 1,
        n_paths: f.mc_paths,
        burn_in: 0,
        seed: cfg.seed.wrapping_add(1),
        nu,
        sample_every: 1,
        log_increments: false,
    };
    let mc = staged(
        "force_monte_carlo",
        force_monte_carlo_batched(&t.potential, &t.drift, &mc_cfg, tau, f.s_max, &nodes, f.batches),
    )?;
    let gibbs = staged("check_gibbs_relation", check_gibbs_relation(&t.rho, &fk, p.kt()))?;
    let identity = staged(
        "check_operator_identity",
        check_operator_identity(&fk, &t.drift, nu, tau, &t.potential),
    )?;
    let doubled = if f.tau_doubling {
        let f2 = staged(
            "force_kernel",
            force_kernel(&t.potential, &t.drift, nu, 2.0 * tau, f.s_max, f.n_s, f.kernel_dt),
        )?;
        Some(staged("check_gibbs_relation", check_gibbs_relation(&t.rho, &f2, p.kt()))?.relative_residual)
    } else {
        None
    };

    let kernel_at: Vec<f64> = nodes.iter().map(|&i| fk.values[i]).collect();
    let sigma = |a: &[f64]| {
        a.iter()
            .zip(&mc.values)
            .zip(&mc.stderr)
            .map(|((a, m), s)| (a - m).abs() / s)
            .fold(0.0, f64::max)
    };
    let max_sigma = sigma(&kernel_at);
    // Closed form for a quadratic potential under the matching linear drift of the reference state.
    let closed = cfg.potential.harmonic_curvature(p.mass()).map(|c| {
        let alpha = Gausson::new(p.gamma(), p.kt(), c).alpha;
        let kappa = 2.0 * nu * alpha;
        mc.positions().iter().map(|&x| ou_force(x, c, kappa, tau)).collect::<Vec<f64>>()
    });

    let tol = &cfg.tolerances;
    out.check(CheckRecord::at_most("force", "kernel_vs_monte_carlo_sigmas", max_sigma, tol.force_sigmas));
    let mut closed_rel = None;
    if let Some(cf) = &closed {
        let scale = cf.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let rel = kernel_at.iter().zip(cf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        closed_rel = Some(rel);
        out.check(CheckRecord::at_most("force", "kernel_vs_closed_form", rel, tol.closed_form_relative));
        out.check(CheckRecord::at_most("force", "monte_carlo_vs_closed_form_sigmas", sigma(cf), tol.force_sigmas));
    }
    out.check(CheckRecord::at_most("force", "gibbs_residual", gibbs.relative_residual, tol.gibbs));
    out.check(CheckRecord::at_most("force", "identity_residual", identity.relative_residual, tol.identity));
    if let Some(d) = doubled {
        out.check(CheckRecord::at_least(
            "force",
            "gibbs_inflation_doubled_tau",
            d / gibbs.relative_residual,
            tol.tau_doubling_ratio,
        ));
    }
    out.bundle.force = Some(ForceRecord {
        quadrature: fk.s_quadrature.clone(),
        positions: mc.positions(),
        kernel: kernel_at,
        monte_carlo: mc.values.clone(),
        monte_carlo_stderr: mc.stderr.clone(),
        closed_form: closed,
        max_sigma,
        closed_form_relative: closed_rel,
        gibbs_residual: gibbs.relative_residual,
        gibbs_residual_doubled_tau: doubled,
        identity_residual: identity.relative_residual,
    });
    Ok(fk.values)
}

fn empty_bundle(cfg: &ExperimentConfig, command: Command, p: &PhysicalParams) -> Outcome {
    Outcome {
        bundle: ReportBundle {
            metadata: metadata(cfg, command),
            config: cfg.clone(),
            physics: physics_record(p),
            stationary: None,
            sde: None,
            kernel: None,
            force: None,
            sweep: None,
            profiles: None,
            checks: Vec::new(),
            all_pass: false,
        },
    }
}

fn finish(mut out: Outcome) -> ReportBundle {
    out.bundle.all_pass = !out.bundle.checks.is_empty() && out.bundle.checks.iter().all(|c| c.pass);
    out.bundle
}

/// Run the stationary solve followed by the stages of `command`.
pub fn run_command(cfg: &ExperimentConfig, command: Command) -> Result<ReportBundle> {
    if command == Command::Sweep {
        return run_sweep(cfg);
    }
    let p = cfg.params()?;
    let mut out = empty_bundle(cfg, command, &p);
    let (sol, _) = stationary_stage(cfg, &p, &mut out)?;
    let stages = command.stages();
    if stages.is_empty() {
        return Ok(finish(out));
    }
    let t = staged("drift_from_density", transport(cfg, &sol, p.nu(), p.mass()))?;
    let mut force = None;
    for stage in stages {
        match stage {
            Stage::Simulate => sde_stage(cfg, &p, &sol, &t, &mut out)?,
            Stage::Kernel => kernel_stage(cfg, &p, &t, &mut out)?,
            Stage::Force => force = Some(force_stage(cfg, &p, &t, &mut out)?),
        }
    }
    let extra = staged("extra_potential", extra_potential(&t.rho, p.gamma(), DIRICHLET))?;
    out.bundle.profiles = Some(Profiles {
        x: t.rho.grid().nodes(),
        rho: t.rho.values().to_vec(),
        potential: t.potential.values().to_vec(),
        extra_potential: extra.values().to_vec(),
        force,
        external_force: gradient(&t.potential, DIRICHLET).values().iter().map(|g| -g).collect(),
    });
    Ok(finish(out))
}

/// The full verification chain.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    run_command(cfg, Command::Verify)
}

struct PointResult {
    lambda: f64,
    residual: f64,
    rho: ScalarField,
}

fn solve_point(cfg: &ExperimentConfig, v: &ScalarField, gamma: f64, kt: f64) -> Result<PointResult> {
    let sol = solve_log_nlse_ground(v, gamma, kt, &cfg.solver)?;
    Ok(PointResult {
        lambda: sol.lambda,
        residual: sol.residual,
        rho: sol.rho,
    })
}

/// Repeat the stationary solve across the sweep values. Failed points are
/// recorded with their error and the sweep carries on.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::validation("sweep", "sweep command needs a [sweep] section"))?;
    let p = cfg.params()?;
    let mut out = empty_bundle(cfg, Command::Sweep, &p);
    let v = staged("sweep", cfg.potential.field(cfg.grid()?, p.mass()))?;

    // kT = 0 reference; for a gamma sweep it depends on the point.
    let zero = match sweep.parameter {
        SweepParameter::Kt => Some(staged("solve_log_nlse_ground", solve_point(cfg, &v, p.gamma(), 0.0))?),
        SweepParameter::Gamma => None,
    };
    let gibbs = match sweep.parameter {
        SweepParameter::Gamma => Some(staged("classical_gibbs", classical_gibbs(&v, p.kt()))?),
        SweepParameter::Kt => None,
    };

    let mut rows = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let (gamma, kt) = match sweep.parameter {
            SweepParameter::Kt => (p.gamma(), value),
            SweepParameter::Gamma => (value, p.kt()),
        };
        let point = solve_point(cfg, &v, gamma, kt).and_then(|r| {
            let linear = match &zero {
                Some(z) => z.rho.clone(),
                None => solve_point(cfg, &v, gamma, 0.0)?.rho,
            };
            Ok((r, linear))
        });
        rows.push(match point {
            Ok((r, linear)) => SweepRow {
                value,
                lambda: Some(r.lambda),
                l1_to_linear: Some(l1_distance(&r.rho, &linear)),
                l1_to_gibbs: gibbs.as_ref().map(|g| l1_distance(&r.rho, g)),
                max_residual: Some(r.residual),
                lambda_shift: zero.as_ref().map(|z| (r.lambda - z.lambda).abs()),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                lambda: None,
                l1_to_linear: None,
                l1_to_gibbs: None,
                max_residual: None,
                lambda_shift: None,
                error: Some(e.to_string()),
            },
        });
    }

    let tol = &cfg.tolerances;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    out.check(CheckRecord::at_most("sweep", "failed_points", failed as f64, 0.0));
    for r in rows.iter().filter(|r| r.error.is_none()) {
        if let Some(res) = r.max_residual {
            out.check(CheckRecord::at_most("sweep", &format!("residual@{}", r.value), res, tol.residual));
        }
    }
    // Along decreasing parameter values each step must shrink the metric.
    let mut ok: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    ok.sort_by(|a, b| b.value.total_cmp(&a.value));
    let metric = |r: &SweepRow| match sweep.parameter {
        SweepParameter::Kt => r.lambda_shift,
        SweepParameter::Gamma => r.l1_to_gibbs,
    };
    let trend_name = match sweep.parameter {
        SweepParameter::Kt => "lambda_shift_change",
        SweepParameter::Gamma => "l1_to_gibbs_change",
    };
    for w in ok.windows(2) {
        let (hi, lo) = (metric(w[0]).unwrap_or(0.0), metric(w[1]).unwrap_or(f64::MAX));
        out.check(CheckRecord::below(
            "sweep",
            &format!("{trend_name}@{}->{}", w[0].value, w[1].value),
            lo - hi,
            0.0,
        ));
    }
    if sweep.parameter == SweepParameter::Kt {
        if let Some(last) = ok.last() {
            out.check(CheckRecord::at_most(
                "sweep",
                &format!("lambda_shift@{}", last.value),
                last.lambda_shift.unwrap_or(f64::MAX),
                tol.zero_temperature_shift,
            ));
        }
    }
    out.bundle.sweep = Some(SweepTable {
        parameter: sweep.parameter.name().into(),
        lambda_zero: zero.as_ref().map(|z| z.lambda),
        rows,
        partial: failed > 0,
    });
    Ok(finish(out))
}

/// Run a command and time it.
pub fn run_timed(cfg: &ExperimentConfig, command: Command) -> Result<(ReportBundle, RunInfo)> {
    let unix = || SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let started_unix = unix();
    let clock = Instant::now();
    let bundle = run_command(cfg, command)?;
    let info = RunInfo {
        started_unix,
        finished_unix: unix(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    Ok((bundle, info))
}
