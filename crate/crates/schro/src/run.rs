//! The experiments behind each subcommand. Nothing here touches the file
//! system except reading potential samples; artifacts are returned as bytes.

use std::fmt;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rayon::prelude::*;
use serde_json::{json, Value};

use schro_core::conditions::{
    check_alpha_admissible, check_condition_2p, check_coupling_nonvanishing, check_gap_condition, ConditionReport,
};
use schro_core::controllability::steer;
use schro_core::lyapunov::{closed_loop, ClosedLoopRecord, FeedbackParams, MONOTONE_TOL};
use schro_core::nonlinear::{cubic_closed_loop, cubic_coupling, linearized_response, propagate_cubic, rank_check, BLOW_UP_H2};
use schro_core::seed::{stream_rng, stream_seeds};
use schro_core::spectral::{build_basis, sobolev_norm};
use schro_core::stochastic::{
    entrance_path, growth_path, growth_summary, tail_from_entrances, Entrance, RandomAmplitudeModel, StoppingConfig,
};
use schro_core::{ControlSignal, Error, Grid, PotentialPair, PropagatorTables, QuantumState, SpectralBasis};

use crate::config::{Config, StateSpec};
use crate::svg::LinePlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    CheckConditions,
    Stabilize,
    Steer,
    RandomGrowth,
    NonlinearStabilize,
    LinearizedProbe,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::CheckConditions => "check-conditions",
            Command::Stabilize => "stabilize",
            Command::Steer => "steer",
            Command::RandomGrowth => "random-growth",
            Command::NonlinearStabilize => "nonlinear-stabilize",
            Command::LinearizedProbe => "linearized-probe",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    /// Bad input; exit status 2.
    #[error("{0}")]
    Invalid(String),
    /// The computation ran and failed; exit status 3.
    #[error("{message}")]
    Numerical { status: &'static str, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Input(_)
            | Error::Dimension { .. }
            | Error::Resolution { .. }
            | Error::Truncation { .. }
            | Error::Resource(_)
            | Error::Resonance { .. } => return Failure::Invalid(e.to_string()),
            Error::Timeout { .. } => "timeout",
            Error::Budget { .. } => "budget_exceeded",
            Error::Precondition(_) | Error::NoCouplingPath { .. } => "precondition_failed",
            Error::Numerical(_) => "numerical_failure",
        };
        Failure::Numerical { status, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub result: Value,
    /// File name and contents, written next to `result.json`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Set by `nonlinear-stabilize`.
    pub blow_up: Option<bool>,
}

/// Stream indices for states drawn from the run seed; far above any path index.
const INITIAL_STREAM: u64 = 1 << 63;
const GOAL_STREAM: u64 = (1 << 63) + 1;

pub fn execute(command: Command, cfg: &Config, seed: u64, log: &dyn Fn(&str)) -> Result<Artifacts, Failure> {
    cfg.validate().map_err(|e| Failure::Invalid(e.to_string()))?;
    let basis = build(cfg)?;
    log(&format!("basis: n_points {}, M {}", cfg.grid.n_points, cfg.grid.truncation));
    match command {
        Command::Spectrum => spectrum(&basis),
        Command::CheckConditions => conditions(cfg, &basis),
        Command::Stabilize => stabilize(cfg, &basis, seed, log),
        Command::Steer => steering(cfg, &basis, seed),
        Command::RandomGrowth => random_growth(cfg, &basis, seed, log),
        Command::NonlinearStabilize => nonlinear_stabilize(cfg, &basis, seed, log),
        Command::LinearizedProbe => probe(cfg, &basis),
    }
}

pub fn build(cfg: &Config) -> Result<SpectralBasis, Failure> {
    let grid = Grid::new(cfg.grid.n_points, cfg.grid.length)?;
    let pots = match &cfg.potential.samples {
        Some(path) => read_samples(path, &grid)?,
        None => PotentialPair::from_potentials(&grid, &cfg.potential.v, &cfg.potential.q)?,
    };
    Ok(build_basis(&grid, &pots, cfg.grid.truncation)?)
}

/// `x,v,q` rows at the interior nodes, in order.
fn read_samples(path: &Path, grid: &Grid) -> Result<PotentialPair, Failure> {
    let bad = |m: String| Failure::Invalid(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["x", "v", "q"] {
        return Err(bad(format!("expected header x,v,q, got {}", header.join(","))));
    }
    let (mut v, mut q) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64, Failure> {
            rec[k].trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 2)))
        };
        if i >= grid.n_points() {
            return Err(bad(format!("more than {} rows", grid.n_points())));
        }
        if (num(0)? - grid.node(i + 1)).abs() > 1e-9 * grid.length() {
            return Err(bad(format!("row {}: x does not match node {}", i + 2, grid.node(i + 1))));
        }
        v.push(num(1)?);
        q.push(num(2)?);
    }
    Ok(PotentialPair::new(grid, v, q)?)
}

pub fn resolve_state(spec: &StateSpec, m: usize, seed: u64, stream: u64) -> Result<QuantumState, Failure> {
    Ok(match spec {
        StateSpec::Random => QuantumState::random(m, &mut stream_rng(seed, stream)),
        StateSpec::Seeded(s) => QuantumState::random(m, &mut ChaCha8Rng::seed_from_u64(*s)),
        StateSpec::Eigen(k) => QuantumState::eigenstate(m, *k),
        StateSpec::Coeffs(c) => QuantumState::from_real(c)?,
    })
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn plot(name: &str, p: LinePlot<'_>) -> (String, Vec<u8>) {
    (name.to_string(), p.render().into_bytes())
}

fn spectrum(b: &SpectralBasis) -> Result<Artifacts, Failure> {
    let m = b.truncation();
    let levels: Vec<f64> = (1..=m).map(|j| j as f64).collect();
    let grid = b.grid();
    let spectrum = csv_bytes(
        &["level", "eigenvalue", "norm_scale"],
        (1..=m).map(|j| vec![j.to_string(), num(b.eigenvalue(j)), num(b.norm_scale()[j - 1])]),
    );
    let couplings = csv_bytes(
        &["j", "k", "coupling"],
        (1..=m).flat_map(|j| (1..=m).map(move |k| (j, k))).map(|(j, k)| vec![j.to_string(), k.to_string(), num(b.coupling_entry(j, k))]),
    );
    let potentials = csv_bytes(
        &["x", "v", "q"],
        (0..grid.n_points()).map(|i| vec![num(grid.node(i + 1)), num(b.potentials().v()[i]), num(b.potentials().q()[i])]),
    );
    let coupling: Vec<Vec<f64>> = (1..=m).map(|j| (1..=m).map(|k| b.coupling_entry(j, k)).collect()).collect();
    Ok(Artifacts {
        result: json!({
            "n_points": grid.n_points(),
            "length": grid.length(),
            "truncation": m,
            "eigenvalues": b.eigenvalues(),
            "norm_scale": b.norm_scale(),
            "coupling": coupling,
        }),
        files: vec![
            ("spectrum.csv".into(), spectrum),
            ("couplings.csv".into(), couplings),
            ("potentials.csv".into(), potentials),
            plot(
                "spectrum.svg",
                LinePlot { title: "Eigenvalues", x_label: "level j", y_label: "λ_j", x: &levels, y: b.eigenvalues(), log_y: false },
            ),
        ],
        blow_up: None,
    })
}

fn report_json(r: &ConditionReport) -> Value {
    json!({
        "condition_id": r.condition_id.as_str(),
        "target": r.target,
        "index_bound": r.index_bound,
        "tolerance": r.tolerance,
        "passed": r.passed,
        "violations": r.violations.iter().map(|v| json!({"indices": v.indices, "value": v.value})).collect::<Vec<_>>(),
    })
}

fn conditions(cfg: &Config, b: &SpectralBasis) -> Result<Artifacts, Failure> {
    let k = &cfg.conditions;
    let target = cfg.control.target;
    let (quartic_coupling, quartic_gap) = check_condition_2p(b, k.nonlinear_bound, k.coupling_tol, k.reading)?;
    let reports = [
        check_coupling_nonvanishing(b, target, k.index_bound, k.coupling_tol)?,
        check_gap_condition(b, target, k.index_bound, k.gap_tol)?,
        check_alpha_admissible(b, target, cfg.control.alpha, k.index_bound, k.gap_tol)?,
        quartic_coupling,
        quartic_gap,
    ];
    let rows = reports.iter().flat_map(|r| {
        r.violations.iter().map(move |v| {
            let idx: Vec<String> = v.indices.iter().map(|i| i.to_string()).collect();
            vec![r.condition_id.as_str().to_string(), idx.join(" "), num(v.value)]
        })
    });
    let violations = csv_bytes(&["condition_id", "indices", "value"], rows);
    Ok(Artifacts {
        result: json!({
            "reports": reports.iter().map(report_json).collect::<Vec<_>>(),
            "nonlinear_gap_reading": match k.reading {
                schro_core::conditions::GapReading::Reduced => "reduced",
                schro_core::conditions::GapReading::LiteralMultiset => "literal",
            },
            "passed": reports.iter().all(|r| r.passed),
        }),
        files: vec![("violations.csv".into(), violations)],
        blow_up: None,
    })
}

fn feedback_params(cfg: &Config, delta: f64) -> Result<FeedbackParams, Failure> {
    let c = &cfg.control;
    let p = FeedbackParams::new(c.alpha, delta, c.target)?.with_hold_steps(c.hold_steps).with_stop_threshold(c.stop_threshold);
    Ok(if c.adapt_delta { p } else { p.fixed_delta() })
}

fn trajectory_csv(rec: &ClosedLoopRecord) -> Vec<u8> {
    let rows = (0..rec.times.len()).map(|i| {
        vec![
            num(rec.times[i]),
            num(rec.lyapunov[i]),
            num(rec.control[i]),
            num(rec.target_population[i]),
            num(rec.norm_l2[i]),
            num(rec.norm_h2[i]),
        ]
    });
    csv_bytes(&["t", "lyapunov", "control", "pop_target", "norm_l2", "norm_h2"], rows)
}

fn loop_summary(rec: &ClosedLoopRecord) -> Value {
    let v0 = rec.lyapunov.first().copied().unwrap_or(0.0);
    let vt = rec.lyapunov.last().copied().unwrap_or(0.0);
    let monotone = rec.lyapunov.windows(2).all(|w| w[1] - w[0] <= MONOTONE_TOL * (1.0 + w[0]));
    json!({
        "rows": rec.times.len(),
        "final_time": rec.times.last().copied().unwrap_or(0.0),
        "lyapunov_initial": v0,
        "lyapunov_final": vt,
        "lyapunov_ratio": if v0 > 0.0 { vt / v0 } else { 0.0 },
        "monotone": monotone,
        "worst_increase": if rec.lyapunov.len() > 1 { Some(rec.worst_increase()) } else { None },
        "dissipation_residual": rec.dissipation_residual(),
        "final_delta": rec.final_delta,
        "delta_halvings": rec.delta_halvings,
        "stopped": rec.stopped,
        "warn_orthogonal": rec.warn_orthogonal,
        "warn_lyapunov_range": rec.warn_lyapunov_range,
        "max_norm_l2_drift": rec.norm_l2.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max),
        "max_norm_h2": rec.norm_h2.iter().copied().fold(0.0, f64::max),
    })
}

fn warn_flags(rec: &ClosedLoopRecord, log: &dyn Fn(&str)) {
    if rec.warn_orthogonal {
        log("warning: initial state is orthogonal to the target level");
    }
    if rec.warn_lyapunov_range {
        log("warning: initial Lyapunov value outside (0, 1)");
    }
}

fn lyapunov_plot(rec: &ClosedLoopRecord, title: &str) -> (String, Vec<u8>) {
    plot("lyapunov.svg", LinePlot { title, x_label: "t", y_label: "V", x: &rec.times, y: &rec.lyapunov, log_y: true })
}

fn stabilize(cfg: &Config, b: &SpectralBasis, seed: u64, log: &dyn Fn(&str)) -> Result<Artifacts, Failure> {
    let t = PropagatorTables::new(b, cfg.grid.dt)?;
    let z0 = resolve_state(&cfg.control.initial, b.truncation(), seed, INITIAL_STREAM)?;
    let rec = closed_loop(&z0, b, &t, &feedback_params(cfg, cfg.control.delta)?, cfg.control.horizon)?;
    warn_flags(&rec, log);
    Ok(Artifacts {
        result: loop_summary(&rec),
        files: vec![("trajectory.csv".into(), trajectory_csv(&rec)), lyapunov_plot(&rec, "Closed-loop Lyapunov function")],
        blow_up: None,
    })
}

fn nonlinear_stabilize(cfg: &Config, b: &SpectralBasis, seed: u64, log: &dyn Fn(&str)) -> Result<Artifacts, Failure> {
    let t = PropagatorTables::new(b, cfg.grid.dt)?;
    let z0 = resolve_state(&cfg.control.initial, b.truncation(), seed, INITIAL_STREAM)?;
    let rec = cubic_closed_loop(&z0, b, &t, &feedback_params(cfg, cfg.control.nonlinear_delta)?, cfg.control.horizon)?;
    warn_flags(&rec, log);
    let blow_up = rec.norm_h2.iter().any(|h| !(*h <= BLOW_UP_H2));
    if blow_up {
        log("warning: H² norm exceeded the blow-up threshold");
    }
    let mut result = loop_summary(&rec);
    result["blow_up"] = json!(blow_up);
    Ok(Artifacts {
        result,
        files: vec![("trajectory.csv".into(), trajectory_csv(&rec)), lyapunov_plot(&rec, "Cubic closed-loop Lyapunov function")],
        blow_up: Some(blow_up),
    })
}

fn steering(cfg: &Config, b: &SpectralBasis, seed: u64) -> Result<Artifacts, Failure> {
    let c = &cfg.control;
    let t = PropagatorTables::new(b, cfg.grid.dt)?;
    let m = b.truncation();
    let z0 = resolve_state(&c.initial, m, seed, INITIAL_STREAM)?;
    let z1 = resolve_state(&c.goal, m, seed, GOAL_STREAM)?;
    let s = steer(&z0, &z1, b, &t, &feedback_params(cfg, c.delta)?, c.eps, c.budget, c.max_time, c.max_halvings)?;
    let u = s.control.values();
    let stride = if c.csv_stride > 0 { c.csv_stride } else { u.len().div_ceil(100_000).max(1) };
    let dt = cfg.grid.dt;
    let kept: Vec<(f64, f64)> = u.iter().enumerate().step_by(stride).map(|(i, &v)| (i as f64 * dt, v)).collect();
    let control = csv_bytes(&["t", "u"], kept.iter().map(|(t, u)| vec![num(*t), num(*u)]));
    let (ts, us): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
    Ok(Artifacts {
        result: json!({
            "k0": s.k0,
            "k1": s.k1,
            "eps": c.eps,
            "achieved": s.achieved,
            "sup_u": s.sup_u,
            "delta": s.delta,
            "steps": u.len(),
            "csv_stride": stride,
        }),
        files: vec![
            ("control.csv".into(), control),
            plot("control.svg", LinePlot { title: "Steering control", x_label: "t", y_label: "u", x: &ts, y: &us, log_y: false }),
        ],
        blow_up: None,
    })
}

fn random_growth(cfg: &Config, b: &SpectralBasis, seed: u64, log: &dyn Fn(&str)) -> Result<Artifacts, Failure> {
    let s = &cfg.stochastic;
    let t = PropagatorTables::new(b, cfg.grid.dt)?;
    let m = b.truncation();
    let z0 = resolve_state(&s.initial, m, seed, INITIAL_STREAM)?;
    let base = RandomAmplitudeModel::power_law(s.terms, s.scale)?;
    let model = RandomAmplitudeModel::new(base.b().to_vec(), s.family, s.noise)?;
    let r = s.radius_factor * sobolev_norm(&z0, -s.sobolev, b)?;
    let stop = StoppingConfig::new(r, s.sobolev, s.max_steps)?;
    stream_seeds(seed, s.paths)?;

    log(&format!("{} entrance paths, K_max {}", s.paths, s.max_steps));
    let entrances = (0..s.paths)
        .into_par_iter()
        .map(|i| entrance_path(&z0, &model, &stop, b, &t, seed, i))
        .collect::<Result<Vec<Entrance>, _>>()?;
    let tail = tail_from_entrances(&entrances, s.n_max, s.block, s.max_steps)?;

    log(&format!("{} growth paths, K {}", s.paths, s.growth_steps));
    let paths = (0..s.paths)
        .into_par_iter()
        .map(|i| growth_path(&z0, &model, s.growth_steps, s.growth_sobolev, b, &t, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let growth = growth_summary(&paths, s.growth_steps)?;

    let tail_csv = csv_bytes(&["n", "p_hat", "stderr"], tail.curve.iter().map(|c| vec![c.n.to_string(), num(c.p_hat), num(c.stderr)]));
    let growth_csv = csv_bytes(
        &["k", "median_G", "median_L"],
        (0..growth.checkpoints.len()).map(|i| vec![growth.checkpoints[i].to_string(), num(growth.median_g[i]), num(growth.median_l[i])]),
    );
    let ns: Vec<f64> = tail.curve.iter().map(|c| c.n as f64).collect();
    let ps: Vec<f64> = tail.curve.iter().map(|c| c.p_hat).collect();
    let ks: Vec<f64> = growth.checkpoints.iter().map(|&k| k as f64).collect();
    let mut files = vec![
        ("tail.csv".to_string(), tail_csv),
        ("growth.csv".to_string(), growth_csv),
        plot("tail.svg", LinePlot { title: "Entrance-time survival", x_label: "n (blocks)", y_label: "P(τ > n·block)", x: &ns, y: &ps, log_y: true }),
        plot(
            "growth.svg",
            LinePlot { title: "Median running maximum", x_label: "k", y_label: "median G_k", x: &ks, y: &growth.median_g, log_y: false },
        ),
    ];
    if s.per_path_csv {
        files.push((
            "entrances.csv".into(),
            csv_bytes(
                &["path", "tau", "censored"],
                entrances.iter().enumerate().map(|(i, e)| match e {
                    Entrance::Hit(k) => vec![i.to_string(), k.to_string(), "false".into()],
                    Entrance::Censored(k) => vec![i.to_string(), k.to_string(), "true".into()],
                }),
            ),
        ));
        files.push((
            "growth_paths.csv".into(),
            csv_bytes(
                &["path", "G_K", "L_K"],
                paths.iter().enumerate().map(|(i, p)| vec![i.to_string(), num(p.running_max[s.growth_steps]), num(p.running_min[s.growth_steps])]),
            ),
        ));
    }
    Ok(Artifacts {
        result: json!({
            "config_hash": crate::output::config_hash(&cfg.to_text()),
            "paths": tail.paths,
            "censored": tail.censored,
            "max_steps": tail.max_steps,
            "block": tail.block,
            "radius": r,
            "tail": tail.curve.iter().map(|c| json!({"n": c.n, "p_hat": c.p_hat, "stderr": c.stderr})).collect::<Vec<_>>(),
            "log_slope": tail.log_slope.map(|(slope, se)| json!({"slope": slope, "stderr": se})),
            "degenerate": tail.degenerate,
            "growth": {
                "steps": growth.steps,
                "sobolev": s.growth_sobolev,
                "checkpoints": growth.checkpoints,
                "median_G": growth.median_g,
                "median_L": growth.median_l,
                "growth_factor": growth.growth_factor(),
            },
        }),
        files,
        blow_up: None,
    })
}

fn probe(cfg: &Config, b: &SpectralBasis) -> Result<Artifacts, Failure> {
    let k = &cfg.conditions;
    let (p, l) = (k.probe_p, k.probe_l);
    let dt = cfg.grid.dt;
    let t = PropagatorTables::new(b, dt)?;
    let omega = b.eigenvalue(p) - b.eigenvalue(l);
    let u = ControlSignal::from_fn(dt, ControlSignal::steps_for(dt, 1.0), |s| (omega * s).cos() + k.probe_offset)?;
    let lin = linearized_response(p, l, &u, b)?;
    let rank = rank_check(p, l, b, dt)?;
    let zp = QuantumState::eigenstate(b.truncation(), p);
    let mut rows = Vec::new();
    for i in 0..5 {
        let a = k.probe_amplitude * 0.5f64.powi(i);
        let out = propagate_cubic(&zp, &u.scaled(a)?, b, &t)?.amplitude(l);
        let rel = (out - lin * a).norm() / (a * lin.norm());
        rows.push((a, out, rel));
    }
    let csv = csv_bytes(
        &["amplitude", "response_re", "response_im", "relative_error"],
        rows.iter().map(|(a, o, r)| vec![num(*a), num(o.re), num(o.im), num(*r)]),
    );
    let amps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok(Artifacts {
        result: json!({
            "p": p,
            "l": l,
            "omega": omega,
            "cubic_coupling": cubic_coupling(b, p, l)?,
            "linearized": [lin.re, lin.im],
            "amplitude": k.probe_amplitude,
            "relative_error": rows[0].2,
            "rank": {
                "sin_response": [rank.sin_response.re, rank.sin_response.im],
                "cos_response": [rank.cos_response.re, rank.cos_response.im],
                "singular_values": rank.singular_values,
                "full_rank": rank.full_rank,
            },
        }),
        files: vec![
            ("probe.csv".into(), csv),
            plot(
                "probe.svg",
                LinePlot { title: "Linearization error", x_label: "amplitude a", y_label: "relative error", x: &amps, y: &errs, log_y: true },
            ),
        ],
        blow_up: None,
    })
}
