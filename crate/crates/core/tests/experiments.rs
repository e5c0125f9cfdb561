use std::path::PathBuf;

use radlab::experiments::*;
use radlab::Error;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn quick() -> ExperimentConfig {
    load_config(&configs_dir().join("quick.toml")).unwrap()
}

const HARMONIC: &str = "[potential]\nkind = \"harmonic\"\nomega = 1.0\n";

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn permuted_document_hashes_identically() {
    let a = "seed = 3\n[grid]\nnodes = 801\nx_min = -8.0\nx_max = 8.0\n[potential]\nkind = \"harmonic\"\nomega = 1.5\n[sde]\ndt = 2e-3\npaths = 10\n";
    let b = "seed = 3\n[sde]\npaths = 10\ndt = 2e-3\n[potential]\nomega = 1.5\nkind = \"harmonic\"\n[grid]\nx_max = 8.0\nx_min = -8.0\nnodes = 801\n";
    assert_eq!(parse_config(a).unwrap().hash(), parse_config(b).unwrap().hash());
}

#[test]
fn kernel_stage_is_reproducible() {
    let cfg = quick();
    let a = run_command(&cfg, Command::Kernel).unwrap();
    let b = run_command(&cfg, Command::Kernel).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.all_pass, "{:?}", a.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    assert!(a.sde.is_none() && a.force.is_none() && a.kernel.is_some());
}

#[test]
fn seed_changes_simulation_only_through_the_seed() {
    let mut cfg = quick();
    cfg.sde.paths = 50;
    let a = run_command(&cfg, Command::Simulate).unwrap();
    let again = run_command(&cfg, Command::Simulate).unwrap();
    cfg.seed += 1;
    let b = run_command(&cfg, Command::Simulate).unwrap();
    assert_eq!(a.sde, again.sde);
    assert_ne!(a.sde.as_ref().unwrap().histogram_l1, b.sde.as_ref().unwrap().histogram_l1);
    assert_eq!(a.stationary, b.stationary);
    assert_ne!(a.metadata.config_hash, b.metadata.config_hash);
}

#[test]
fn unresolved_monte_carlo_step_is_a_staged_error() {
    let mut cfg = quick();
    cfg.force.mc_dt = 0.5;
    cfg.force.tau_doubling = false;
    match run_command(&cfg, Command::Force) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "force_monte_carlo");
            assert!(matches!(*source, Error::StepResolution { .. }));
        }
        other => panic!("expected staged error, got {other:?}"),
    }
}

#[test]
fn sweep_report_files_and_round_trip() {
    let cfg = parse_config(&format!("{HARMONIC}[sweep]\nparameter = \"kt\"\nvalues = [1e-1, 1e-2, 1e-3]\n")).unwrap();
    let bundle = run_sweep(&cfg).unwrap();
    assert!(bundle.all_pass);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&bundle, None, dir.path()).unwrap();
    assert!(files.len() >= 3);
    for f in &files {
        assert!(f.exists());
    }
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(ReportBundle::from_json(&text).unwrap(), bundle);

    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "parameter,value,lambda,l1_to_linear,l1_to_gibbs,max_residual,lambda_shift,status");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("kt,1.0000000000000001e-1,") && lines[1].ends_with(",ok"));
    assert!(!sweep.contains('\r'));
    let checks = std::fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert_eq!(checks.lines().next().unwrap(), "stage,check,value,tolerance,comparison,pass");
}

#[test]
fn profile_columns_match_schema() {
    let mut cfg = quick();
    cfg.force.tau_doubling = false;
    cfg.force.mc_paths = 100;
    let bundle = run_command(&cfg, Command::Force).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let info = RunInfo {
        started_unix: 0.0,
        finished_unix: 1.0,
        elapsed_seconds: 1.0,
        threads: 1,
    };
    let files = emit_report(&bundle, Some(&info), dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["report.json", "checks.csv", "profiles.csv", "run_info.json"]);
    let profiles = std::fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
    let mut lines = profiles.lines();
    assert_eq!(lines.next().unwrap(), "x,rho,potential,extra_potential,force,external_force");
    assert_eq!(PROFILES_HEADER.join(","), "x,rho,potential,extra_potential,force,external_force");
    assert_eq!(lines.count(), cfg.transport.nodes);
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(ReportBundle::from_json(&text).unwrap(), bundle);
}

#[test]
fn gamma_sweep_approaches_classical_gibbs() {
    let cfg = parse_config(&format!("{HARMONIC}[sweep]\nparameter = \"gamma\"\nvalues = [1e-1, 1e-2, 1e-3]\n")).unwrap();
    let bundle = run_sweep(&cfg).unwrap();
    let rows = &bundle.sweep.as_ref().unwrap().rows;
    let l1: Vec<f64> = rows.iter().map(|r| r.l1_to_gibbs.unwrap()).collect();
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
    assert!(bundle.all_pass);
    assert!(rows.iter().all(|r| r.lambda_shift.is_none()));
}

#[test]
fn failed_sweep_points_are_recorded() {
    let cfg = parse_config(&format!(
        "{HARMONIC}[solver]\nmax_iterations = 1\nnewton = false\n[sweep]\nparameter = \"kt\"\nvalues = [0.3, 0.2]\n"
    ))
    .unwrap();
    let bundle = run_sweep(&cfg).unwrap();
    let table = bundle.sweep.as_ref().unwrap();
    assert!(table.partial && !bundle.all_pass);
    assert!(table.rows.iter().all(|r| r.error.is_some() && r.lambda.is_none()));
    let dir = tempfile::tempdir().unwrap();
    emit_report(&bundle, None, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l == format!("kt,{},,,,,,failed", l.split(',').nth(1).unwrap())));
}

#[test]
fn sweep_needs_a_sweep_section() {
    let cfg = parse_config(HARMONIC).unwrap();
    assert!(matches!(run_sweep(&cfg), Err(Error::Validation { .. })));
}

#[test]
fn tabulated_potential_reproduces_analytic_one() {
    let dir = tempfile::tempdir().unwrap();
    let table: String = std::iter::once("x,V".to_string())
        .chain((0..=2000).map(|i| {
            let x = -10.0 + 0.01 * i as f64;
            format!("{x},{}", 0.5 * x * x)
        }))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(dir.path().join("v.csv"), table).unwrap();
    std::fs::write(dir.path().join("c.toml"), "[potential]\nkind = \"table\"\nfile = \"v.csv\"\n").unwrap();
    let tab = load_config(&dir.path().join("c.toml")).unwrap();
    let a = run_command(&tab, Command::Solve).unwrap();
    let b = run_command(&parse_config(HARMONIC).unwrap(), Command::Solve).unwrap();
    let (sa, sb) = (a.stationary.unwrap(), b.stationary.unwrap());
    assert!((sa.lambda - sb.lambda).abs() < 1e-9);
    // No closed-form reference for a table, so fewer checks run.
    assert!(a.checks.len() < b.checks.len() && a.all_pass);
}

#[test]
fn double_well_chain_consistency() {
    let cfg = parse_config(
        "[grid]\nx_min = -4.0\nx_max = 4.0\nnodes = 801\n\
         [potential]\nkind = \"double_well\"\ndepth = 1.0\nwidth = 1.5\n\
         [physics]\ntemperature = 0.2\n\
         [transport]\nmargin = 0.5\nnodes = 351\n\
         [force]\nn_s = 64\nmc_paths = 1000\nbatches = 20\nstart_positions = [-1.5, 0.0, 0.7]\n",
    )
    .unwrap();
    let bundle = run_command(&cfg, Command::Force).unwrap();
    let f = bundle.force.as_ref().unwrap();
    assert!(bundle.all_pass, "{:?}", bundle.checks);
    assert!(f.identity_residual < 2e-2 && f.gibbs_residual < 2e-2);
    assert!(f.gibbs_residual_doubled_tau.unwrap() > 5.0 * f.gibbs_residual);
}
