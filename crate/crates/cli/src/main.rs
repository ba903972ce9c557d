//! `meshshell`: runs, verification suites, refinement studies and state
//! inspection for the shell–net–fluid splitting simulator.
//!
//! Every subcommand prints human-readable text followed by a one-line JSON
//! summary on stdout, and exits with 0 iff all of its checks pass.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use meshshell::config::Config;
use meshshell::diagnostics::subgraph_monitor;
use meshshell::linalg::norm_inf;
use meshshell::splitting::{run, StateFile};
use meshshell::verify::{self, Check, LevelReport, RunSummary, Suite};

#[derive(Parser)]
#[command(name = "meshshell", version, about = "Lie-splitting simulator for a fluid in a net-reinforced elastic tube")]
struct Cli {
    /// Also write the JSON summary to this file.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its ledger, snapshots and final state.
    Run {
        config: PathBuf,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in verification suite.
    Verify {
        #[arg(value_parser = parse_suite)]
        suite: Suite,
    },
    /// Run a configuration at Δt, Δt/2, … and tabulate energies and mismatch.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=8))]
        levels: u32,
    },
    /// Summarize a state file written by `run`.
    Inspect {
        state: PathBuf,
        /// Configuration the state belongs to; enables energies and monitors.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse::<Suite>().map_err(|_| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        format!("expected one of: {}", names.join(", "))
    })
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("MESHSHELL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .with_context(|| format!("MESHSHELL_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{}", c.line());
    }
}

fn run_checks(s: &RunSummary) -> Vec<Check> {
    vec![
        Check::holds("run completed, monitors hold", s.monitors_hold()),
        Check::at_most("max structure residual / energy scale", s.max_structure_residual_rel, 1e-9),
        Check::at_most("max fluid excess / E", s.energy.max_fluid_excess.max(0.0), 1e-9),
        Check::at_least_zero("min numerical dissipation", s.min_numdiss),
        Check::at_most("max energy / K", s.energy.max_energy / s.energy.k_bound, 1.0 + 1e-9),
    ]
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<(bool, Value)> {
    let mut cfg = Config::load(config)?;
    if out.is_some() {
        cfg.out_dir = out;
    }
    let problem = cfg.build_problem()?;
    let initial = cfg.initial_state(&problem)?;
    let clock = std::time::Instant::now();
    let res = run(&problem, initial, &cfg.run_options(), |_, _| Ok(()))?;
    let summary = verify::summarize(&problem, &cfg, &res, clock.elapsed().as_secs_f64());
    log::info!("{} steps in {:.1} s", summary.steps, summary.seconds);
    let e = &summary.energy;
    println!("steps             {} of {} (dt = {:.6e})", summary.steps, cfg.steps, summary.dt);
    println!("E0                {:.6e}", e.initial_energy);
    println!("max energy        {:.6e}", e.max_energy);
    println!("K = E0 + C|P|^2   {:.6e} (C = {:.6e})", e.k_bound, e.pressure_constant);
    println!("kin mismatch      {:.6e}", e.kin_mismatch_integral);
    println!("min margin        {:.6e}", summary.min_subgraph_margin);
    println!("max lipschitz     {:.6e} (cap {})", summary.max_lipschitz, summary.lipschitz_cap);
    if let Some(err) = &summary.error {
        println!("stopped: {err}");
    }
    let checks = run_checks(&summary);
    print_checks(&checks);
    let passed = checks.iter().all(|c| c.passed);
    let value = json!({ "command": "run", "passed": passed, "summary": summary, "checks": checks });
    if let Some(dir) = &cfg.out_dir {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&value)?)?;
        println!("outputs in {}", dir.display());
    }
    Ok((passed, value))
}

fn cmd_verify(suite: Suite) -> Result<(bool, Value)> {
    println!("suite {}", suite.name());
    let rep = verify::run_suite(suite)?;
    print_checks(&rep.checks);
    println!("{} in {:.2} s", if rep.passed() { "passed" } else { "FAILED" }, rep.seconds);
    Ok((rep.passed(), json!({ "command": "verify", "passed": rep.passed(), "report": rep })))
}

fn print_level(i: usize, l: &LevelReport) {
    let e = &l.run.energy;
    let weak = l.weak.iter().map(|w| w.relative().abs()).fold(0.0, f64::max);
    println!(
        "{:>5} {:>7} {:>12.5e} {:>12.5e} {:>12.5e} {:>14.5e} {:>12.5e}",
        i, l.run.steps, l.run.dt, e.max_energy, e.k_bound, e.kin_mismatch_integral, weak
    );
}

fn cmd_convergence(config: &Path, levels: u32) -> Result<(bool, Value)> {
    let cfg = Config::load(config)?;
    println!(
        "{:>5} {:>7} {:>12} {:>12} {:>12} {:>14} {:>12}",
        "level", "N", "dt", "max_energy", "K", "kin_mismatch", "weak_rel"
    );
    let mut i = 0;
    let reports = verify::convergence(&cfg, levels as usize, |l| {
        print_level(i, l);
        log::info!("level {i}: {:.1} s", l.run.seconds);
        i += 1;
    })?;
    if reports.len() >= 2 {
        println!("max energy spread   {:.4e}", verify::max_energy_spread(&reports));
        println!("mismatch slope      {:.4}", verify::mismatch_slope(&reports));
    }
    if let Some(first) = reports.first().filter(|r| !r.weak.is_empty()) {
        println!("weak residuals |R| per level:");
        for (k, row) in first.weak.iter().enumerate() {
            let vals: Vec<String> = reports.iter().map(|r| format!("{:.4e}", r.weak[k].residual.abs())).collect();
            println!("  {:>5} {:>10}  {}", row.profile.name(), row.mode.name(), vals.join("  "));
        }
    }
    let checks = verify::convergence_checks(&reports);
    print_checks(&checks);
    let passed = checks.iter().all(|c| c.passed);
    Ok((passed, json!({ "command": "convergence", "passed": passed, "levels": reports, "checks": checks })))
}

fn cmd_inspect(state: &Path, config: Option<&Path>) -> Result<(bool, Value)> {
    let text = std::fs::read_to_string(state).with_context(|| format!("cannot read {}", state.display()))?;
    let sf: StateFile = serde_json::from_str(&text).context("not a state file")?;
    let s = &sf.structure;
    println!("step              {}", sf.n);
    println!("time              {:.6e}", sf.t);
    println!("shell dofs        {}", s.eta.len());
    println!("net dofs          {}", s.w.len());
    println!("fluid nodes       {}", sf.fluid.u.len() / 3);
    println!("max |eta|         {:.6e}", norm_inf(&s.eta));
    println!("max |v|           {:.6e}", norm_inf(&s.v));
    println!("max |u|           {:.6e}", norm_inf(&sf.fluid.u));
    println!("max |p|           {:.6e}", norm_inf(&sf.fluid.p));
    let mut value = json!({
        "command": "inspect",
        "n": sf.n,
        "t": sf.t,
        "shell_dofs": s.eta.len(),
        "net_dofs": s.w.len(),
        "fluid_nodes": sf.fluid.u.len() / 3,
        "max_eta": norm_inf(&s.eta),
        "max_v": norm_inf(&s.v),
        "max_u": norm_inf(&sf.fluid.u),
        "max_p": norm_inf(&sf.fluid.p),
    });
    let mut passed = true;
    if let Some(cfg_path) = config {
        let cfg = Config::load(cfg_path)?;
        let problem = cfg.build_problem()?;
        let coupled = problem.make_state(sf.n, sf.t, sf.structure.clone(), Some(sf.fluid.clone()))?;
        let energy = problem.energy(&coupled);
        let margin = subgraph_monitor(&problem.structure.shell.view(&coupled.structure.eta), &problem.cyl);
        println!("energy            {:.6e}", energy);
        println!("subgraph margin   {:.6e}", margin.normalized(problem.cyl.r));
        passed = margin.holds();
        value["energy"] = json!(energy);
        value["subgraph"] = json!(margin);
    }
    value["passed"] = json!(passed);
    Ok((passed, value))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| match &cli.command {
        Command::Run { config, out } => cmd_run(config, out.clone()),
        Command::Verify { suite } => cmd_verify(*suite),
        Command::Convergence { config, levels } => cmd_convergence(config, *levels),
        Command::Inspect { state, config } => cmd_inspect(state, config.as_deref()),
    });
    let (passed, value) = match outcome {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            (false, json!({ "passed": false, "error": format!("{e:#}") }))
        }
    };
    println!("{value}");
    if let Some(path) = &cli.json {
        if let Err(e) = write_json(path, &value) {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if path.as_os_str().is_empty() {
        bail!("empty JSON path");
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("cannot write {}", path.display()))
}

