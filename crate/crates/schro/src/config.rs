//! Experiment configuration: a line-based `key = value` format.
//!
//! ```text
//! seed = 7            # optional; --seed and SCHRO_SEED also work
//! [grid]
//! n_points = 512
//! truncation = 8
//! [potential]
//! v = linear 1
//! q = gauss 1 0.37 0.1
//! ```
//!
//! Sections are `[grid]`, `[potential]`, `[control]`, `[stochastic]` and
//! `[conditions]`. Every key has a default; [`Config::to_text`] writes all of
//! them, and its output parses back to an equal [`Config`].

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use schro_core::conditions::{GapReading, MAX_QUARTIC_BOUND};
use schro_core::stochastic::{BasisFamily, NoiseFamily};
use schro_core::{ControlSignal, Potential};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError { line: None, message: message.into() }
}

/// How an initial or goal state is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    /// Uniform on the sphere, drawn from a stream of the run seed.
    Random,
    /// Uniform on the sphere, drawn from ChaCha8 seeded with this value
    /// regardless of the run seed.
    Seeded(u64),
    Eigen(usize),
    /// Real amplitudes, normalized on use.
    Coeffs(Vec<f64>),
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Random => f.write_str("random"),
            StateSpec::Seeded(s) => write!(f, "random {s}"),
            StateSpec::Eigen(k) => write!(f, "eigen {k}"),
            StateSpec::Coeffs(c) => {
                f.write_str("coeffs")?;
                for x in c {
                    write!(f, " {x:?}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for StateSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or("empty state")?;
        let rest: Vec<&str> = words.collect();
        let num = |w: &str| w.parse::<f64>().map_err(|e| format!("{w:?}: {e}"));
        match (kind, rest.as_slice()) {
            ("random", []) => Ok(StateSpec::Random),
            ("random", [seed]) => seed.parse().map(StateSpec::Seeded).map_err(|e| format!("{seed:?}: {e}")),
            ("eigen", [k]) => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(StateSpec::Eigen(k)),
                _ => Err(format!("eigen level must be a positive integer, got {k:?}")),
            },
            ("coeffs", c) if !c.is_empty() => c.iter().map(|w| num(w)).collect::<Result<_, _>>().map(StateSpec::Coeffs),
            _ => Err(format!("expected `random [seed]`, `eigen k` or `coeffs a1 a2 …`, got {s:?}")),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn write_value(&self) -> String;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{s:?}: {e}"))
            }
            fn write_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_from_str!(usize, u64, bool, Potential, StateSpec, BasisFamily, NoiseFamily);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        let x: f64 = s.parse().map_err(|e| format!("{s:?}: {e}"))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("{s:?} is not finite"))
        }
    }

    fn write_value(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok((!s.is_empty()).then(|| PathBuf::from(s)))
    }

    fn write_value(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl ConfigValue for GapReading {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "reduced" => Ok(GapReading::Reduced),
            "literal" => Ok(GapReading::LiteralMultiset),
            _ => Err(format!("expected `reduced` or `literal`, got {s:?}")),
        }
    }

    fn write_value(&self) -> String {
        match self {
            GapReading::Reduced => "reduced",
            GapReading::LiteralMultiset => "literal",
        }
        .into()
    }
}

macro_rules! section {
    ($name:ident, $title:literal { $($field:ident),* $(,)? }) => {
        impl $name {
            fn assign(&mut self, key: &str, value: &str) -> Option<Result<(), String>> {
                match key {
                    $(stringify!($field) => Some(ConfigValue::parse_value(value).map(|v| self.$field = v)),)*
                    _ => None,
                }
            }

            fn write(&self, out: &mut String) {
                out.push_str(concat!("[", $title, "]\n"));
                $(
                    let v = self.$field.write_value();
                    if v.is_empty() {
                        out.push_str(concat!(stringify!($field), " =\n"));
                    } else {
                        out.push_str(&format!(concat!(stringify!($field), " = {}\n"), v));
                    }
                )*
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n_points: usize,
    pub length: f64,
    pub truncation: usize,
    pub dt: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_points: 512, length: 1.0, truncation: 20, dt: 1e-3 }
    }
}

section!(GridConfig, "grid" { n_points, length, truncation, dt });

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialConfig {
    pub v: Potential,
    pub q: Potential,
    /// CSV with columns `x,v,q` at the interior nodes; replaces `v` and `q`.
    pub samples: Option<PathBuf>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { v: Potential::linear(1.0), q: Potential::gauss(1.0, 0.37, 0.1), samples: None }
    }
}

section!(PotentialConfig, "potential" { v, q, samples });

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub target: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Halve `delta` when a hold interval overshoots.
    pub adapt_delta: bool,
    pub hold_steps: usize,
    pub horizon: f64,
    pub stop_threshold: f64,
    /// Gain of the cubic feedback.
    pub nonlinear_delta: f64,
    pub initial: StateSpec,
    pub goal: StateSpec,
    pub eps: f64,
    pub budget: f64,
    pub max_time: f64,
    pub max_halvings: usize,
    /// Every `csv_stride`-th control sample goes to `control.csv`; 0 picks
    /// the smallest stride keeping the file under 10⁵ rows.
    pub csv_stride: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            target: 1,
            alpha: 0.1,
            delta: 0.5,
            adapt_delta: true,
            hold_steps: 10,
            horizon: 10.0,
            stop_threshold: 1e-4,
            nonlinear_delta: 1.0,
            initial: StateSpec::Random,
            goal: StateSpec::Eigen(1),
            eps: 0.1,
            budget: 1000.0,
            max_time: 100.0,
            max_halvings: 4,
            csv_stride: 0,
        }
    }
}

section!(ControlConfig, "control" {
    target, alpha, delta, adapt_delta, hold_steps, horizon, stop_threshold, nonlinear_delta,
    initial, goal, eps, budget, max_time, max_halvings, csv_stride,
});

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticConfig {
    /// `b_j = scale · j⁻²` for `j ≤ terms`.
    pub terms: usize,
    pub scale: f64,
    pub family: BasisFamily,
    pub noise: NoiseFamily,
    pub initial: StateSpec,
    /// Entrance radius as a multiple of `‖z0‖_{−s}`.
    pub radius_factor: f64,
    pub sobolev: f64,
    pub max_steps: usize,
    pub n_max: usize,
    pub block: usize,
    pub paths: usize,
    pub growth_steps: usize,
    pub growth_sobolev: f64,
    pub per_path_csv: bool,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            terms: 16,
            scale: 1.0,
            family: BasisFamily::Fourier,
            noise: NoiseFamily::Gaussian,
            initial: StateSpec::Eigen(1),
            radius_factor: 0.5,
            sobolev: 1.0,
            max_steps: 500,
            n_max: 10,
            block: 10,
            paths: 200,
            growth_steps: 500,
            growth_sobolev: 2.0,
            per_path_csv: false,
        }
    }
}

section!(StochasticConfig, "stochastic" {
    terms, scale, family, noise, initial, radius_factor, sobolev, max_steps, n_max, block, paths,
    growth_steps, growth_sobolev, per_path_csv,
});

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionsConfig {
    pub index_bound: usize,
    pub coupling_tol: f64,
    pub gap_tol: f64,
    pub nonlinear_bound: usize,
    pub reading: GapReading,
    pub probe_p: usize,
    pub probe_l: usize,
    pub probe_amplitude: f64,
    /// Constant added to `cos(ωt)` in the probe control.
    pub probe_offset: f64,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        Self {
            index_bound: 4,
            coupling_tol: 1e-8,
            gap_tol: 1e-6,
            nonlinear_bound: 4,
            reading: GapReading::Reduced,
            probe_p: 1,
            probe_l: 2,
            probe_amplitude: 1e-3,
            probe_offset: 0.3,
        }
    }
}

section!(ConditionsConfig, "conditions" {
    index_bound, coupling_tol, gap_tol, nonlinear_bound, reading, probe_p, probe_l, probe_amplitude, probe_offset,
});

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub seed: Option<u64>,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub control: ControlConfig,
    pub stochastic: StochasticConfig,
    pub conditions: ConditionsConfig,
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| ConfigError { line: Some(line), message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| err(format!("malformed section header {content:?}")))?.trim();
                if !["grid", "potential", "control", "stochastic", "conditions"].contains(&name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let scope = section.as_deref().unwrap_or("");
            if !seen.insert((scope.to_string(), key.to_string())) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let outcome = match scope {
                "" if key == "seed" => Some(u64::parse_value(value).map(|s| cfg.seed = Some(s))),
                "" => None,
                "grid" => cfg.grid.assign(key, value),
                "potential" => cfg.potential.assign(key, value),
                "control" => cfg.control.assign(key, value),
                "stochastic" => cfg.stochastic.assign(key, value),
                _ => cfg.conditions.assign(key, value),
            };
            match outcome {
                None if scope.is_empty() => return Err(err(format!("unknown top-level key `{key}`"))),
                None => return Err(err(format!("unknown key `{key}` in [{scope}]"))),
                Some(Err(e)) => return Err(err(format!("`{key}`: {e}"))),
                Some(Ok(())) => {}
            }
        }
        Ok(cfg)
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    /// Every key, defaults included.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(s) = self.seed {
            out.push_str(&format!("seed = {s}\n"));
        }
        self.grid.write(&mut out);
        self.potential.write(&mut out);
        self.control.write(&mut out);
        self.stochastic.write(&mut out);
        self.conditions.write(&mut out);
        out
    }

    /// Range checks that need no numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        let m = g.truncation;
        if g.n_points < 16 {
            return Err(invalid("grid.n_points must be at least 16"));
        }
        if !(g.length > 0.0) {
            return Err(invalid("grid.length must be positive"));
        }
        if m == 0 || m > g.n_points / 4 {
            return Err(invalid(format!("grid.truncation must lie in 1..={}", g.n_points / 4)));
        }
        if !(g.dt > 0.0 && g.dt <= 1.0) {
            return Err(invalid("grid.dt must lie in (0, 1]"));
        }
        if let Some(p) = &self.potential.samples {
            if !p.is_file() {
                return Err(invalid(format!("potential.samples: {} does not exist", p.display())));
            }
        }

        let c = &self.control;
        if c.target == 0 || c.target > m {
            return Err(invalid(format!("control.target must lie in 1..={m}")));
        }
        positive("control.alpha", c.alpha)?;
        positive("control.delta", c.delta)?;
        positive("control.nonlinear_delta", c.nonlinear_delta)?;
        positive("control.horizon", c.horizon)?;
        positive("control.eps", c.eps)?;
        positive("control.budget", c.budget)?;
        positive("control.max_time", c.max_time)?;
        if c.hold_steps == 0 {
            return Err(invalid("control.hold_steps must be positive"));
        }
        if c.stop_threshold < 0.0 {
            return Err(invalid("control.stop_threshold must be non-negative"));
        }
        check_state("control.initial", &c.initial, m)?;
        check_state("control.goal", &c.goal, m)?;

        let s = &self.stochastic;
        if s.terms == 0 {
            return Err(invalid("stochastic.terms must be positive"));
        }
        if !(s.scale >= 0.0) {
            return Err(invalid("stochastic.scale must be non-negative"));
        }
        positive("stochastic.radius_factor", s.radius_factor)?;
        positive("stochastic.sobolev", s.sobolev)?;
        positive("stochastic.growth_sobolev", s.growth_sobolev)?;
        check_state("stochastic.initial", &s.initial, m)?;
        if s.block == 0 || s.n_max * s.block > s.max_steps {
            return Err(invalid("stochastic: need block ≥ 1 and n_max·block ≤ max_steps"));
        }
        if s.paths < 50 {
            return Err(invalid("stochastic.paths must be at least 50"));
        }
        if s.growth_steps < 10 {
            return Err(invalid("stochastic.growth_steps must be at least 10"));
        }
        let unit = ControlSignal::steps_for(g.dt, 1.0);
        if (unit as f64 * g.dt - 1.0).abs() > 1e-9 {
            return Err(invalid("grid.dt must divide the unit time interval"));
        }

        let k = &self.conditions;
        if k.index_bound == 0 || k.index_bound > m {
            return Err(invalid(format!("conditions.index_bound must lie in 1..={m}")));
        }
        if k.nonlinear_bound == 0 || k.nonlinear_bound > m.min(MAX_QUARTIC_BOUND) {
            return Err(invalid(format!("conditions.nonlinear_bound must lie in 1..={}", m.min(MAX_QUARTIC_BOUND))));
        }
        if !(k.coupling_tol >= 0.0 && k.gap_tol >= 0.0) {
            return Err(invalid("conditions tolerances must be non-negative"));
        }
        for (name, level) in [("probe_p", k.probe_p), ("probe_l", k.probe_l)] {
            if level == 0 || level > m {
                return Err(invalid(format!("conditions.{name} must lie in 1..={m}")));
            }
        }
        if k.probe_p == k.probe_l {
            return Err(invalid("conditions.probe_p and probe_l must differ"));
        }
        positive("conditions.probe_amplitude", k.probe_amplitude)?;
        Ok(())
    }
}

fn positive(name: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x:?}")))
    }
}

fn check_state(name: &str, spec: &StateSpec, m: usize) -> Result<(), ConfigError> {
    match spec {
        StateSpec::Eigen(k) if *k > m => Err(invalid(format!("{name}: level {k} exceeds truncation {m}"))),
        StateSpec::Coeffs(c) if c.len() != m => Err(invalid(format!("{name}: {} coefficients for truncation {m}", c.len()))),
        StateSpec::Coeffs(c) if c.iter().all(|x| *x == 0.0) => Err(invalid(format!("{name}: zero state"))),
        _ => Ok(()),
    }
}

/// `--seed`, then the config file, then `SCHRO_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, ConfigError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|e| invalid(format!("SCHRO_SEED={v:?}: {e}"))),
        None => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_valid_defaults() {
        let c: Config = "".parse().unwrap();
        assert_eq!(c, Config::default());
        c.validate().unwrap();
        assert_eq!(c.grid.truncation, 20);
        assert_eq!(c.stochastic.terms, 16);
    }

    #[test]
    fn comments_and_sections() {
        let c: Config = "seed = 3 # top\n\n[grid]\n  dt = 1e-4\n[control]\ninitial = coeffs 1 0 1\n".parse().unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.grid.dt, 1e-4);
        assert_eq!(c.control.initial, StateSpec::Coeffs(vec![1.0, 0.0, 1.0]));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = "[grid]\ndt = 1e-3\ndt = 2e-3\n".parse::<Config>().unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("duplicate"));
        assert_eq!("[grid]\nbogus = 1\n".parse::<Config>().unwrap_err().line, Some(2));
        assert_eq!("[gird]\n".parse::<Config>().unwrap_err().line, Some(1));
        assert_eq!("\n\n[grid]\nn_points = many\n".parse::<Config>().unwrap_err().line, Some(4));
        assert!("colour = blue".parse::<Config>().is_err());
        assert!("[control]\nalpha\n".parse::<Config>().is_err());
        // Same key name in different sections is fine.
        assert!("[control]\ninitial = eigen 2\n[stochastic]\ninitial = eigen 2\n".parse::<Config>().is_ok());
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let bad = ["[grid]\ndt = -1e-3", "[grid]\ntruncation = 200", "[control]\ntarget = 21", "[control]\ngoal = eigen 40", "[stochastic]\npaths = 10"];
        for text in bad {
            let c: Config = text.parse().unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
        assert!("[grid]\ndt = nan".parse::<Config>().is_err());
    }

    #[test]
    fn seed_priority() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(resolve_seed(None, None, Some("x")).is_err());
    }

    #[test]
    fn state_specs_round_trip() {
        for s in ["random", "random 7", "eigen 3", "coeffs 0.1 -2.0 1e-7"] {
            let spec: StateSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<StateSpec>().unwrap(), spec);
        }
        assert!("eigen 0".parse::<StateSpec>().is_err());
        assert!("coeffs".parse::<StateSpec>().is_err());
    }
}
