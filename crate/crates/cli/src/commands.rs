//! The `simulate`, `solvability` and `stability` commands.

use std::fmt;
use std::path::{Path, PathBuf};

use convoy_core::coupled_game::{assemble_game, game_h, vehicle_weights_from_edges};
use convoy_core::fleet_sim::{
    attach_virtual_leader, pairwise_distances, simulate_with, synthesize,
};
use convoy_core::relative_game::{build_relative_problem, solvability_report};
use convoy_core::rh_controller::{closed_loop, FeedbackGain};
use convoy_core::Error;

use crate::config::ScenarioConfig;
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Ok = 0,
    Config = 1,
    Numerical = 2,
    Solvability = 3,
    Instability = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Exit status for a core error.
pub fn classify(e: &Error) -> ExitStatus {
    match e {
        Error::Unsolvable(_) | Error::Degenerate { .. } => ExitStatus::Solvability,
        Error::MarginalStability => ExitStatus::Instability,
        Error::InvalidGraph(_) => ExitStatus::Config,
        _ => ExitStatus::Numerical,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Verdicts {
    pub solvability: Option<bool>,
    pub game: Option<bool>,
    pub stability: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub final_x_inf: f64,
    pub final_e_inf: f64,
    pub min_distance: f64,
    pub min_time: f64,
    pub min_pair: (String, String),
    pub leader_lateral_offset: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub status: ExitStatus,
    pub verdicts: Verdicts,
    /// Present iff the simulation completed.
    pub metrics: Option<Metrics>,
    pub files: Vec<PathBuf>,
    /// Human-readable diagnostic lines.
    pub lines: Vec<String>,
}

impl RunReport {
    fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            scenario: cfg.name.clone(),
            status: ExitStatus::Ok,
            verdicts: Verdicts::default(),
            metrics: None,
            files: Vec::new(),
            lines: Vec::new(),
        }
    }

    fn fail(mut self, status: ExitStatus, message: impl Into<String>) -> Self {
        self.status = status;
        self.lines.push(format!("error: {}", message.into()));
        self
    }

    fn fail_with(self, e: &Error) -> Self {
        let status = classify(e);
        self.fail(status, e.to_string())
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario)?;
        for l in &self.lines {
            writeln!(f, "  {l}")?;
        }
        let verdict = |v: Option<bool>, yes: &str, no: &str| match v {
            Some(true) => yes.to_string(),
            Some(false) => no.to_string(),
            None => "not checked".to_string(),
        };
        writeln!(
            f,
            "  solvability: {}",
            verdict(self.verdicts.solvability, "nonsingular", "singular")
        )?;
        if self.verdicts.game.is_some() {
            writeln!(
                f,
                "  game H(t_f): {}",
                verdict(self.verdicts.game, "nonsingular", "singular")
            )?;
        }
        writeln!(
            f,
            "  stability: {}",
            verdict(self.verdicts.stability, "Hurwitz", "not Hurwitz")
        )?;
        if let Some(m) = &self.metrics {
            writeln!(f, "  final |x|_inf: {:.6e} m", m.final_x_inf)?;
            writeln!(f, "  final |e|_inf: {:.6e} m/s^2", m.final_e_inf)?;
            writeln!(
                f,
                "  min pairwise distance: {:.6} m between {} and {} at t = {:.2} s",
                m.min_distance, m.min_pair.0, m.min_pair.1, m.min_time
            )?;
            if let Some(o) = m.leader_lateral_offset {
                writeln!(f, "  leader lateral offset at end: {o:.6} m")?;
            }
        }
        for p in &self.files {
            writeln!(f, "  wrote {}", p.display())?;
        }
        write!(f, "  exit status: {}", self.status.code())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub game: bool,
    /// Flip the sign of the feedback gains (debugging aid).
    pub negate_gains: bool,
}

fn edge_name(cfg: &ScenarioConfig, k: usize) -> String {
    let m = cfg.ids.len();
    let aug_edges: Vec<(usize, usize)> = match &cfg.scenario.virtual_leader {
        Some(l) => std::iter::once((m, l.attach_to))
            .chain(cfg.scenario.graph.edges().iter().map(|e| (e.tail, e.head)))
            .collect(),
        None => cfg
            .scenario
            .graph
            .edges()
            .iter()
            .map(|e| (e.tail, e.head))
            .collect(),
    };
    let name = |i: usize| {
        if i < m {
            cfg.ids[i].to_string()
        } else {
            "leader".into()
        }
    };
    aug_edges.get(k).map_or_else(
        || format!("#{k}"),
        |&(t, h)| format!("#{k} ({} -> {})", name(t), name(h)),
    )
}

fn describe(cfg: &ScenarioConfig, e: &Error) -> String {
    match e {
        Error::Degenerate { edge, reason } => format!(
            "degenerate parameters on edge {}: {reason}",
            edge_name(cfg, *edge)
        ),
        other => other.to_string(),
    }
}

fn stability_lines(
    report: &mut RunReport,
    cfg: &ScenarioConfig,
    negate: bool,
) -> Result<FeedbackGain, Error> {
    let (_, problem, gains) = synthesize(&cfg.scenario)?;
    let gains = if negate { gains.negated() } else { gains };
    let r = closed_loop(&problem, &gains)?;
    let spectrum: Vec<String> = r
        .spectrum
        .iter()
        .map(|v| format!("{:.6}{:+.6}i", v.re, v.im))
        .collect();
    report.lines.push(format!(
        "closed-loop spectrum (per axis): [{}]",
        spectrum.join(", ")
    ));
    report
        .lines
        .push(format!("max real part: {:.6e}", r.max_real_part));
    report.lines.push(format!(
        "Lyapunov certificate: min eig(P) = {:.6e}, residual = {:.3e}, {}",
        r.min_p_eigenvalue,
        r.lyapunov_residual,
        if r.pd_flag {
            "P > 0"
        } else {
            "P not positive definite"
        }
    ));
    report.verdicts.stability = Some(r.hurwitz && r.pd_flag);
    Ok(gains)
}

pub fn solvability(cfg: &ScenarioConfig, opts: &Options) -> RunReport {
    let mut report = RunReport::new(cfg);
    let aug = match attach_virtual_leader(&cfg.scenario) {
        Ok(a) => a,
        Err(e) => return report.fail_with(&e),
    };
    let problem = match build_relative_problem(&aug.graph, &aug.r, cfg.scenario.t_f) {
        Ok(p) => p,
        Err(e) => return report.fail_with(&e),
    };
    match solvability_report(&problem) {
        Ok(s) => {
            let n = s.lambdas.len();
            for (k, l) in s.lambdas.iter().enumerate() {
                report.lines.push(format!(
                    "edge {}: lambda = {:.6}{:+.6}i, delta = [{:.6}{:+.6}i, {:.6}{:+.6}i]",
                    edge_name(cfg, k),
                    l.re,
                    l.im,
                    s.deltas[k].re,
                    s.deltas[k].im,
                    s.deltas[n + k].re,
                    s.deltas[n + k].im
                ));
            }
            report
                .lines
                .push(format!("|h_closed - h_oracle|_max = {:.3e}", s.discrepancy));
            report
                .lines
                .push(format!("reciprocal condition = {:.3e}", s.rcond));
            report.lines.push(format!(
                "det h = {:.6e} (product of deltas {:.6e}), |h h^-1 - I| = {:.3e}",
                s.det_lu, s.det_product, s.inverse_residual
            ));
            report.verdicts.solvability = Some(s.nonsingular);
            if !s.nonsingular {
                report = report.fail(ExitStatus::Solvability, "solvability matrix is singular");
            }
        }
        Err(e) => {
            let status = classify(&e);
            if status == ExitStatus::Solvability {
                report.verdicts.solvability = Some(false);
            }
            let message = describe(cfg, &e);
            return report.fail(status, message);
        }
    }
    if opts.game {
        let g = &aug.graph;
        let r = vehicle_weights_from_edges(g, &aug.r, 1.0);
        match assemble_game(g, &r, cfg.scenario.t_f).and_then(|game| game_h(&game)) {
            Ok(h) => {
                report.lines.push(format!(
                    "game H(t_f): reciprocal condition = {:.3e}",
                    h.rcond
                ));
                report.verdicts.game = Some(h.nonsingular);
                if !h.nonsingular && report.status == ExitStatus::Ok {
                    report = report.fail(ExitStatus::Solvability, "game-level H(t_f) is singular");
                }
            }
            Err(e) => return report.fail_with(&e),
        }
    }
    report
}

pub fn stability(cfg: &ScenarioConfig, opts: &Options) -> RunReport {
    let mut report = RunReport::new(cfg);
    match stability_lines(&mut report, cfg, opts.negate_gains) {
        Ok(_) if report.verdicts.stability == Some(true) => report,
        Ok(_) => report.fail(
            ExitStatus::Instability,
            "closed loop is not asymptotically stable",
        ),
        Err(e) => {
            // a Riccati or solvability failure is a numerical failure here
            let status = match classify(&e) {
                ExitStatus::Instability => ExitStatus::Instability,
                ExitStatus::Config => ExitStatus::Config,
                _ => ExitStatus::Numerical,
            };
            let message = describe(cfg, &e);
            report.fail(status, message)
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

pub fn simulate(cfg: &ScenarioConfig, opts: &Options) -> RunReport {
    let mut report = solvability(
        cfg,
        &Options {
            game: opts.game,
            ..Options::default()
        },
    );
    if report.status != ExitStatus::Ok {
        return report;
    }
    let gains = match stability_lines(&mut report, cfg, opts.negate_gains) {
        Ok(g) => g,
        Err(e) => {
            let status = classify(&e);
            let message = describe(cfg, &e);
            return report.fail(status, message);
        }
    };
    if report.verdicts.stability != Some(true) {
        return report.fail(
            ExitStatus::Instability,
            "closed loop is not asymptotically stable; simulation skipped",
        );
    }
    let aug = match attach_virtual_leader(&cfg.scenario) {
        Ok(a) => a,
        Err(e) => return report.fail_with(&e),
    };
    let log = match simulate_with(&cfg.scenario, &aug, &gains) {
        Ok(l) => l,
        Err(e) => return report.fail_with(&e),
    };
    let d = pairwise_distances(&log);
    report.metrics = Some(Metrics {
        final_x_inf: log.final_x_inf(),
        final_e_inf: log.final_e_inf(),
        min_distance: d.min_distance,
        min_time: d.min_time,
        min_pair: (
            cfg.ids[d.min_pair.0].to_string(),
            cfg.ids[d.min_pair.1].to_string(),
        ),
        leader_lateral_offset: log.leader_lateral_offset(),
    });
    if log.pairs.is_empty() {
        if let Some(m) = report.metrics.as_mut() {
            m.min_distance = f64::NAN;
        }
    }

    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("convoy_out").join(&cfg.name));
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return report.fail(
            ExitStatus::Numerical,
            format!("cannot create {}: {e}", dir.display()),
        );
    }
    let files = [
        ("trajectories.csv", output::trajectories_csv(cfg, &log)),
        ("relative.csv", output::relative_csv(cfg, &log)),
        ("distances.csv", output::distances_csv(cfg, &log)),
    ];
    for (name, content) in files {
        let path = dir.join(name);
        if let Err(e) = write_file(&path, &content) {
            return report.fail(ExitStatus::Numerical, e);
        }
        report.files.push(path);
    }
    if opts.plot || cfg.plot {
        match output::write_plots(&dir, cfg, &log) {
            Ok(files) => report.files.extend(files),
            Err(e) => return report.fail(ExitStatus::Numerical, e),
        }
    }
    report
}
