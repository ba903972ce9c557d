//! Time-loop behaviour of the splitting scheme on small setups.

use meshshell::config::Config;
use meshshell::splitting::{read_ledger, run, LedgerEntry};
use meshshell::Error;

const SMALL: &str = "
[domain]
R = 0.5
L = 2.0
N_z = 4
N_rho = 2
N_theta = 8

[time]
T = 0.02
N = 4

[fluid]
rho_F = 1.0
mu_F = 0.035

[shell]
h = 0.05
lambda = 1e3
mu = 1e3
rho_K = 1.1
n_z = 8
n_theta = 8

[net]
topology = none

[bc]
P_in = expr: 50*sin(pi*t/0.02)^2
P_out = 0

[init]
preset = rest
";

fn config(text: &str) -> Config {
    Config::parse(text, None).unwrap()
}

fn no_observer(_: &meshshell::splitting::CoupledState, _: &meshshell::splitting::StepOutcome) -> meshshell::Result<()> {
    Ok(())
}

#[test]
fn zero_data_leaves_the_rest_state_unchanged() {
    let cfg = config(&SMALL.replace("expr: 50*sin(pi*t/0.02)^2", "0"));
    let p = cfg.build_problem().unwrap();
    let s0 = cfg.initial_state(&p).unwrap();
    let res = run(&p, s0.clone(), &cfg.run_options(), no_observer).unwrap();
    assert!(res.error.is_none());
    assert_eq!(res.ledger.len(), 4);
    let s = &res.final_state;
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(max(&s.structure.eta) == 0.0 && max(&s.structure.v) == 0.0);
    assert!(max(&s.fluid.u) <= 1e-300, "{}", max(&s.fluid.u));
    assert!(res.ledger.iter().all(|e| e.e_full == 0.0 && e.d == 0.0));
}

#[test]
fn zero_steps_only_record_the_initial_state() {
    let cfg = config(&SMALL.replace("N = 4", "N = 0"));
    let p = cfg.build_problem().unwrap();
    let s0 = cfg.initial_state(&p).unwrap();
    let res = run(&p, s0, &cfg.run_options(), no_observer).unwrap();
    assert!(res.ledger.is_empty());
    assert_eq!(res.final_state.n, 0);
    assert_eq!(res.initial_energy, 0.0);
    assert!((res.initial_margin - 1.0).abs() < 1e-12);
}

#[test]
fn structure_alone_conserves_energy_up_to_numerical_dissipation() {
    let text = SMALL
        .replace("[fluid]\n", "[fluid]\nenabled = false\n")
        .replace("preset = rest", "preset = bulge\namplitude = 0.01");
    let cfg = config(&text);
    let p = cfg.build_problem().unwrap();
    let s0 = cfg.initial_state(&p).unwrap();
    let res = run(&p, s0, &cfg.run_options(), no_observer).unwrap();
    let e0 = res.initial_energy;
    assert!(e0 > 0.0);
    let mut prev = e0;
    for e in &res.ledger {
        let balance = e.e_full + e.numdiss_structure() - prev;
        assert!(balance.abs() <= 1e-9 * e0, "step {}: {balance:e}", e.n);
        assert!(e.numdiss_structure() >= 0.0);
        assert_eq!(e.kin_mismatch, 0.0);
        prev = e.e_full;
    }
}

#[test]
fn coupled_runs_are_deterministic_and_persist_the_ledger() {
    let cfg = config(SMALL);
    let p = cfg.build_problem().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut ledgers: Vec<Vec<LedgerEntry>> = Vec::new();
    for d in &dirs {
        let mut opts = cfg.run_options();
        opts.out_dir = Some(d.path().to_path_buf());
        let res = run(&p, cfg.initial_state(&p).unwrap(), &opts, no_observer).unwrap();
        assert!(res.error.is_none());
        assert_eq!(read_ledger(&d.path().join("ledger.csv")).unwrap(), res.ledger);
        assert!(d.path().join("final_state.json").exists());
        ledgers.push(res.ledger);
    }
    assert_eq!(ledgers[0], ledgers[1]);
    let a = std::fs::read(dirs[0].path().join("ledger.csv")).unwrap();
    let b = std::fs::read(dirs[1].path().join("ledger.csv")).unwrap();
    assert_eq!(a, b);
    for e in &ledgers[0] {
        assert!(e.fluid_excess <= 1e-9 * e.e_full.max(1e-300), "step {}: {:e}", e.n, e.fluid_excess);
        assert!(e.numdiss_fluid >= 0.0 && e.numdiss_coupling >= 0.0 && e.numdiss_stab >= 0.0);
    }
}

#[test]
fn an_observer_error_stops_the_run_with_the_last_valid_state() {
    let cfg = config(SMALL);
    let p = cfg.build_problem().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut opts = cfg.run_options();
    opts.out_dir = Some(dir.path().to_path_buf());
    let res = run(&p, cfg.initial_state(&p).unwrap(), &opts, |_, out| {
        if out.state.n == 3 {
            Err(Error::Solver("injected failure".into()))
        } else {
            Ok(())
        }
    })
    .unwrap();
    assert!(res.error.as_deref().unwrap().contains("injected failure"));
    assert_eq!(res.ledger.len(), 2);
    assert_eq!(res.final_state.n, 2);
    let saved: meshshell::splitting::StateFile =
        serde_json::from_reader(std::fs::File::open(dir.path().join("final_state.json")).unwrap()).unwrap();
    assert_eq!(saved.n, 2);
}

#[test]
fn a_folded_initial_wall_is_rejected() {
    let text = SMALL.replace("preset = rest", "preset = bulge\namplitude = -0.6");
    let cfg = config(&text);
    let p = cfg.build_problem().unwrap();
    let err = cfg.initial_state(&p).and_then(|s| run(&p, s, &cfg.run_options(), no_observer));
    assert!(matches!(err, Err(Error::SubgraphViolation(_))), "{:?}", err.err());
}
