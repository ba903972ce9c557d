//! Run configuration: INI-style sections with `key = value` lines.
//!
//! ```ini
//! [domain]
//! R = 0.5
//! L = 3.0
//! N_z = 16
//! N_rho = 8
//! N_theta = 16
//!
//! [time]
//! T = 1.0
//! N = 100
//!
//! ; `enabled = false` runs the structure alone
//! [fluid]
//! rho_F = 1.0
//! mu_F = 0.035
//! convection = true
//! c_stab = 0.1
//!
//! [shell]
//! h = 0.05
//! lambda = 1e4
//! mu = 1e4
//! rho_K = 1.1
//! n_z = 16
//! n_theta = 16
//!
//! [net]
//! ; a topology file or `none`
//! topology = net.txt
//! rho_S = 1.0
//!
//! [bc]
//! P_in = expr: 10*sin(pi*t)^2
//! P_out = 0
//!
//! [init]
//! ; `rest`, `bulge` (with `amplitude`) or `state = file.json`
//! preset = rest
//!
//! [output]
//! dir = out
//! cadence = 10
//! ```
//!
//! Relative paths are resolved against the configuration file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::composite::StructureModel;
use crate::error::{Error, Result};
use crate::fluid::FluidParams;
use crate::geometry::CylinderRef;
use crate::net::{NetModel, NetTopology};
use crate::pressure::{PressureData, Signal};
use crate::shell::{l2_projection, ShellModel, ShellParams};
use crate::splitting::{CoupledState, Problem, RunOptions, StateFile};

/// Initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// Everything at rest.
    Rest,
    /// Fluid at rest, shell displaced radially by `amplitude·sin²(πz/L)`
    /// (projected onto the rod constraint when a net is present).
    Bulge { amplitude: f64 },
    /// A state file written by a previous run.
    File(PathBuf),
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub cyl: CylinderRef,
    pub t_end: f64,
    pub steps: usize,
    pub fluid: Option<FluidParams>,
    pub shell: ShellParams,
    pub shell_n_z: usize,
    pub shell_n_theta: usize,
    pub lipschitz_cap: f64,
    /// Net topology and rod density, or `None` for a bare shell.
    pub net: Option<(NetTopology, f64)>,
    pub pressure: PressureData,
    pub init: InitialData,
    pub out_dir: Option<PathBuf>,
    /// Snapshot cadence in steps; 0 disables snapshots.
    pub cadence: usize,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("domain", &["R", "L", "N_z", "N_rho", "N_theta"]),
    ("time", &["T", "N"]),
    ("fluid", &["enabled", "rho_F", "mu_F", "convection", "c_stab", "tol", "refactor_after"]),
    ("shell", &["h", "lambda", "mu", "rho_K", "eps_K", "n_z", "n_theta", "lipschitz_cap"]),
    ("net", &["topology", "rho_S"]),
    ("bc", &["P_in", "P_out"]),
    ("init", &["preset", "amplitude", "state"]),
    ("output", &["dir", "cadence"]),
];

/// Key lookup with errors that name `section.key`.
struct Sections {
    map: BTreeMap<String, BTreeMap<String, String>>,
}

fn parse_err(key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        key: key.to_string(),
        message: message.into(),
    }
}

impl Sections {
    fn new(ini: &Ini) -> Result<Self> {
        let mut map: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(parse_err(k, "key outside of any section"));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == sec) else {
                return Err(parse_err(sec, "unknown section"));
            };
            let entry = map.entry(sec.to_string()).or_default();
            for (k, v) in props.iter() {
                if !keys.contains(&k) {
                    return Err(parse_err(&format!("{sec}.{k}"), "unknown key"));
                }
                entry.insert(k.to_string(), v.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    fn has_section(&self, sec: &str) -> bool {
        self.map.contains_key(sec)
    }

    fn opt(&self, sec: &str, key: &str) -> Option<&str> {
        self.map.get(sec).and_then(|m| m.get(key)).map(String::as_str)
    }

    fn req(&self, sec: &str, key: &str) -> Result<&str> {
        self.opt(sec, key).ok_or_else(|| parse_err(&format!("{sec}.{key}"), "missing key"))
    }

    fn number(&self, sec: &str, key: &str, s: &str) -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(&format!("{sec}.{key}"), format!("`{s}` is not a finite number")))
    }

    fn f64_req(&self, sec: &str, key: &str) -> Result<f64> {
        self.number(sec, key, self.req(sec, key)?)
    }

    fn f64_opt(&self, sec: &str, key: &str) -> Result<Option<f64>> {
        self.opt(sec, key).map(|s| self.number(sec, key, s)).transpose()
    }

    /// A strictly positive constant.
    fn positive(&self, sec: &str, key: &str) -> Result<f64> {
        let v = self.f64_req(sec, key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(parse_err(&format!("{sec}.{key}"), format!("must be positive, got {v}")))
        }
    }

    fn count(&self, sec: &str, key: &str, s: &str) -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| parse_err(&format!("{sec}.{key}"), format!("`{s}` is not a nonnegative integer")))
    }

    fn usize_req(&self, sec: &str, key: &str) -> Result<usize> {
        self.count(sec, key, self.req(sec, key)?)
    }

    fn usize_opt(&self, sec: &str, key: &str) -> Result<Option<usize>> {
        self.opt(sec, key).map(|s| self.count(sec, key, s)).transpose()
    }

    fn bool_opt(&self, sec: &str, key: &str) -> Result<Option<bool>> {
        self.opt(sec, key)
            .map(|s| match s.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(parse_err(&format!("{sec}.{key}"), format!("`{s}` is not a boolean"))),
            })
            .transpose()
    }

    fn signal(&self, sec: &str, key: &str, base: Option<&Path>) -> Result<Signal> {
        let s = self.req(sec, key)?;
        Signal::parse(s, base).map_err(|e| parse_err(&format!("{sec}.{key}"), strip_kind(e)))
    }
}

fn strip_kind(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Topology(m) => m,
        other => other.to_string(),
    }
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let p = Path::new(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

impl Config {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Parses configuration text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("malformed configuration: {e}")))?;
        let s = Sections::new(&ini)?;

        let (r, l) = (s.positive("domain", "R")?, s.positive("domain", "L")?);
        let cyl = CylinderRef::new(
            r,
            l,
            s.usize_req("domain", "N_z")?,
            s.usize_req("domain", "N_rho")?,
            s.usize_req("domain", "N_theta")?,
        )
        .map_err(|e| parse_err("domain", strip_kind(e)))?;

        let t_end = s.positive("time", "T")?;
        let steps = s.usize_req("time", "N")?;

        let fluid_on = s.has_section("fluid") && s.bool_opt("fluid", "enabled")?.unwrap_or(true);
        let fluid = if fluid_on {
            let d = FluidParams::default();
            let mut fp = FluidParams {
                rho: s.positive("fluid", "rho_F")?,
                mu: s.positive("fluid", "mu_F")?,
                convection: s.bool_opt("fluid", "convection")?.unwrap_or(d.convection),
                c_stab: d.c_stab,
                tol: d.tol,
                refactor_after: s.usize_opt("fluid", "refactor_after")?.unwrap_or(d.refactor_after),
            };
            if s.opt("fluid", "c_stab").is_some() {
                fp.c_stab = s.positive("fluid", "c_stab")?;
            }
            if s.opt("fluid", "tol").is_some() {
                fp.tol = s.positive("fluid", "tol")?;
            }
            Some(fp)
        } else {
            None
        };

        let h = s.positive("shell", "h")?;
        let mu = s.positive("shell", "mu")?;
        let lambda = s.positive("shell", "lambda")?;
        let eps_k = match s.f64_opt("shell", "eps_K")? {
            Some(v) if v >= 0.0 => v,
            Some(v) => return Err(parse_err("shell.eps_K", format!("must be nonnegative, got {v}"))),
            None => ShellParams::default_eps(mu, h),
        };
        let shell = ShellParams {
            h,
            lambda,
            mu,
            rho_k: s.positive("shell", "rho_K")?,
            eps_k,
            r,
            l,
        };
        let shell_n_z = s.usize_req("shell", "n_z")?;
        let shell_n_theta = s.usize_req("shell", "n_theta")?;
        let lipschitz_cap = match s.opt("shell", "lipschitz_cap") {
            Some(_) => s.positive("shell", "lipschitz_cap")?,
            None => 1.0,
        };

        let topology = s.req("net", "topology")?;
        let net = if topology.eq_ignore_ascii_case("none") {
            None
        } else {
            let top = NetTopology::load(&resolve(base, topology)).map_err(|e| parse_err("net.topology", strip_kind(e)))?;
            Some((top, s.positive("net", "rho_S")?))
        };

        let pressure = PressureData {
            p_in: s.signal("bc", "P_in", base)?,
            p_out: s.signal("bc", "P_out", base)?,
        };
        pressure
            .p_in
            .check_finite(t_end, steps)
            .map_err(|e| parse_err("bc.P_in", strip_kind(e)))?;
        pressure
            .p_out
            .check_finite(t_end, steps)
            .map_err(|e| parse_err("bc.P_out", strip_kind(e)))?;

        let init = match (s.opt("init", "state"), s.opt("init", "preset")) {
            (Some(_), Some(_)) => return Err(parse_err("init.state", "give either `state` or `preset`, not both")),
            (Some(p), None) => InitialData::File(resolve(base, p)),
            (None, None) | (None, Some("rest")) => InitialData::Rest,
            (None, Some("bulge")) => InitialData::Bulge {
                amplitude: s.f64_req("init", "amplitude")?,
            },
            (None, Some(other)) => return Err(parse_err("init.preset", format!("unknown preset `{other}`"))),
        };

        let out_dir = s.opt("output", "dir").map(|d| resolve(base, d));
        let cadence = s.usize_opt("output", "cadence")?.unwrap_or(0);

        let cfg = Self {
            cyl,
            t_end,
            steps,
            fluid,
            shell,
            shell_n_z,
            shell_n_theta,
            lipschitz_cap,
            net,
            pressure,
            init,
            out_dir,
            cadence,
        };
        cfg.shell.validate().map_err(|e| parse_err("shell", strip_kind(e)))?;
        Ok(cfg)
    }

    /// The bundled demo setup: a compliant tube with a zig-zag rod ring,
    /// driven by a smooth inlet pulse (`configs/demo.ini`), without output
    /// directory.
    pub fn demo() -> Self {
        const TEXT: &str = include_str!("../../../configs/demo.ini");
        const NET: &str = include_str!("../../../configs/demo_net.txt");
        let rho_s = Ini::load_from_str(TEXT)
            .ok()
            .and_then(|i| i.get_from(Some("net"), "rho_S").and_then(|v| v.trim().parse().ok()))
            .expect("demo configuration names rho_S");
        let mut cfg = Self::parse(&TEXT.replace("topology = demo_net.txt", "topology = none"), None)
            .expect("demo configuration is valid");
        cfg.net = Some((NetTopology::parse(NET).expect("demo net is valid"), rho_s));
        cfg.out_dir = None;
        cfg
    }

    /// Time step `T / N` (`T` when `N = 0`).
    pub fn dt(&self) -> f64 {
        self.t_end / self.steps.max(1) as f64
    }

    /// The same setup with `N` multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            steps: self.steps * factor,
            ..self.clone()
        }
    }

    /// Assembles the operators of the configured problem.
    pub fn build_problem(&self) -> Result<Problem> {
        let shell = ShellModel::new(self.shell, self.shell_n_z, self.shell_n_theta)?;
        let net = match &self.net {
            Some((top, rho_s)) => Some(NetModel::new(top, self.cyl.r, self.cyl.l, *rho_s)?),
            None => None,
        };
        let problem = Problem {
            cyl: self.cyl,
            structure: StructureModel::new(shell, net),
            fluid: self.fluid,
            lipschitz_cap: self.lipschitz_cap,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Initial state, checked for compatibility.
    pub fn initial_state(&self, problem: &Problem) -> Result<CoupledState> {
        match &self.init {
            InitialData::Rest => problem.initial_state(None, None),
            InitialData::Bulge { amplitude } => {
                let (a, l) = (*amplitude, self.cyl.l);
                let st = &problem.structure;
                let eta = l2_projection(&st.shell.basis, self.cyl.r, |z, _| {
                    [0.0, a * (std::f64::consts::PI * z / l).sin().powi(2), 0.0]
                })?;
                // With a net, the bulge is made compatible with the rod
                // constraint by projecting (η, w = 0) onto its kernel.
                let mut x = eta;
                x.resize(st.n_eta() + st.n_w(), 0.0);
                st.kernel_projector()?.project(&mut x);
                let mut s = st.zero_state();
                s.w = x.split_off(st.n_eta());
                s.eta = x;
                problem.make_state(0, 0.0, s, None)
            }
            InitialData::File(path) => {
                let f = std::fs::File::open(path)
                    .map_err(|e| Error::Config(format!("cannot read state file {}: {e}", path.display())))?;
                let sf: StateFile = serde_json::from_reader(std::io::BufReader::new(f))?;
                problem.make_state(sf.n, sf.t, sf.structure, Some(sf.fluid))
            }
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            dt: self.dt(),
            steps: self.steps,
            pressure: self.pressure.clone(),
            out_dir: self.out_dir.clone(),
            vtk_every: self.cadence,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIGID_PIPE: &str = "
[domain]
R = 0.5
L = 2.0
N_z = 4
N_rho = 2
N_theta = 8

[time]
T = 0.1
N = 10

[fluid]
rho_F = 1.0
mu_F = 0.035
convection = false
c_stab = 0.1

[shell]
h = 0.05
lambda = 100
mu = 100
rho_K = 1.1
n_z = 8
n_theta = 8

[net]
topology = none

[bc]
P_in = expr: sin(2*pi*t)
P_out = 0

[init]
preset = rest
";

    fn with(replace: &str, by: &str) -> String {
        assert!(RIGID_PIPE.contains(replace), "{replace}");
        RIGID_PIPE.replace(replace, by)
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Parse { key, .. } => key,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn minimal_rigid_pipe() {
        let c = Config::parse(RIGID_PIPE, None).unwrap();
        assert!(c.net.is_none());
        assert_eq!(c.init, InitialData::Rest);
        assert_eq!((c.cyl.n_z, c.cyl.n_rho, c.cyl.n_theta), (4, 2, 8));
        assert!((c.dt() - 0.01).abs() < 1e-15);
        let f = c.fluid.unwrap();
        assert!(!f.convection && f.rho == 1.0);
        assert_eq!(c.shell.eps_k, ShellParams::default_eps(100.0, 0.05));
        assert!((c.pressure.p_in.value(0.25) - 1.0).abs() < 1e-15);
        assert_eq!(c.pressure.p_out.value(0.3), 0.0);
        let p = c.build_problem().unwrap();
        let s = c.initial_state(&p).unwrap();
        assert_eq!(p.energy(&s), 0.0);
    }

    #[test]
    fn non_positive_constants_are_rejected_by_key() {
        for (from, to, key) in [
            ("rho_F = 1.0", "rho_F = 0", "fluid.rho_F"),
            ("mu_F = 0.035", "mu_F = -1", "fluid.mu_F"),
            ("h = 0.05", "h = 0", "shell.h"),
            ("rho_K = 1.1", "rho_K = 0.0", "shell.rho_K"),
            ("R = 0.5", "R = -0.5", "domain.R"),
            ("T = 0.1", "T = 0", "time.T"),
        ] {
            let e = Config::parse(&with(from, to), None).unwrap_err();
            assert!(e.to_string().contains("positive"), "{e}");
            assert_eq!(key_of(e), key);
        }
    }

    #[test]
    fn missing_and_malformed_keys_are_named() {
        let e = Config::parse(&with("mu_F = 0.035\n", ""), None).unwrap_err();
        assert!(e.to_string().contains("missing"));
        assert_eq!(key_of(e), "fluid.mu_F");
        let e = Config::parse(&with("sin(2*pi*t)", "sin(2*pi*t"), None).unwrap_err();
        assert_eq!(key_of(e), "bc.P_in");
        let e = Config::parse(&with("N = 10", "N = ten"), None).unwrap_err();
        assert_eq!(key_of(e), "time.N");
        let e = Config::parse(&with("c_stab = 0.1", "c_stab = 0.1\ncolour = red"), None).unwrap_err();
        assert_eq!(key_of(e), "fluid.colour");
        let e = Config::parse(&with("preset = rest", "preset = wobble"), None).unwrap_err();
        assert_eq!(key_of(e), "init.preset");
        let e = Config::parse(&with("topology = none", "topology = /nonexistent/net.txt\nrho_S = 1"), None).unwrap_err();
        assert_eq!(key_of(e), "net.topology");
    }

    #[test]
    fn structure_only_and_bulge() {
        let text = with("[fluid]\n", "[fluid]\nenabled = false\n").replace("preset = rest", "preset = bulge\namplitude = 0.01");
        let c = Config::parse(&text, None).unwrap();
        assert!(c.fluid.is_none());
        let p = c.build_problem().unwrap();
        let s = c.initial_state(&p).unwrap();
        let view = p.structure.shell.view(&s.structure.eta);
        let mid = crate::geometry::SurfaceDisplacement::eval(&view, 1.0, 0.3);
        assert!((mid[0][1] - 0.01).abs() < 1e-4, "{mid:?}");
        assert!(p.energy(&s) > 0.0);
    }
}
