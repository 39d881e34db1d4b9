//! Experiment configs, sweep execution and on-disk reports.
//!
//! A config names one problem, an order policy, a step-size rule and optional
//! sweep axes. Each cell of the sweep is solved and certified independently;
//! cells run in parallel and write `trace_<cell>.csv` and `report_<cell>.json`
//! atomically, after which `summary.txt` is written from the collected reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{self, CertificateReport, CheckStatus, ComplexityReport};
use crate::error::{Error, Result};
use crate::problems::{ProblemSpec, ProblemSummary};
use crate::schedule::OrderPolicy;
use crate::solver::{self, IterateTrace, SolverConfig};

/// Column header of every trace CSV.
pub const CSV_HEADER: &str = "k,F_k,norm_d_k,dist_to_opt,grad_error,eta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepMode {
    /// The given step size.
    Explicit { eta: f64 },
    /// `scale / L`.
    Scaled { scale: f64 },
    /// Largest step the envelope is proven for with history `a`.
    Theorem2 { a: usize },
    /// The parameter-free rule.
    Corollary2,
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::Corollary2
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    /// Staleness bounds; each selects a policy with that certified `K`.
    #[serde(default)]
    pub staleness: Vec<usize>,
    /// Condition numbers, applied through the generator's ridge.
    #[serde(default)]
    pub condition: Vec<f64>,
    /// Multipliers applied to the computed step size.
    #[serde(default)]
    pub eta_scale: Vec<f64>,
}

fn default_history() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemSpec,
    /// Defaults to cyclic; ignored for cells that fix a staleness.
    #[serde(default)]
    pub policy: Option<OrderPolicy>,
    #[serde(default)]
    pub step: StepMode,
    pub iterations: usize,
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    /// History parameter of the recursion checks.
    #[serde(default = "default_history")]
    pub history: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the problem seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl ExperimentConfig {
    /// Parses JSON when the extension is `.json`, TOML otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("name {:?} must be nonempty and use [A-Za-z0-9._-]", self.name));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.history < 2 {
            return bad(format!("history must be >= 2, got {}", self.history));
        }
        match self.step {
            StepMode::Explicit { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return bad(format!("explicit eta must be positive and finite, got {eta}"));
            }
            StepMode::Scaled { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return bad(format!("scale must be positive and finite, got {scale}"));
            }
            StepMode::Theorem2 { a } if a < 3 => return bad(format!("theorem2 needs a >= 3, got {a}")),
            _ => {}
        }
        if let Some(eps) = self.target_epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("target_epsilon must be positive, got {eps}"));
            }
        }
        if self.sweep.condition.iter().any(|q| !(*q > 1.0 && q.is_finite())) {
            return bad("swept condition numbers must be finite and > 1".into());
        }
        if self.sweep.eta_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("eta_scale entries must be positive and finite".into());
        }
        let m = self.problem.num_components();
        if let Some(&k) = self.sweep.staleness.iter().find(|&&k| k >= m && k > 0) {
            return bad(format!("staleness {k} needs at least {} components, problem has {m}", k + 1));
        }
        if let Some(p) = &self.policy {
            p.compile(m).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Every sweep cell, in a fixed order (staleness, then condition, then scale).
    pub fn cells(&self) -> Vec<Cell> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().map(|x| Some(*x)).collect()
            }
        }
        let mut out = Vec::new();
        for k in axis(&self.sweep.staleness) {
            for q in axis(&self.sweep.condition) {
                for s in axis(&self.sweep.eta_scale) {
                    out.push(Cell { staleness: k, condition: q, eta_scale: s });
                }
            }
        }
        out
    }
}

/// One point of the sweep grid; `None` means the axis is not swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub staleness: Option<usize>,
    pub condition: Option<f64>,
    pub eta_scale: Option<f64>,
}

impl Cell {
    /// File-name label, e.g. `K4_Q10_s0.5`, or `base` for an unswept run.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = self.staleness {
            parts.push(format!("K{k}"));
        }
        if let Some(q) = self.condition {
            parts.push(format!("Q{q}"));
        }
        if let Some(s) = self.eta_scale {
            parts.push(format!("s{s}"));
        }
        if parts.is_empty() {
            "base".to_string()
        } else {
            parts.join("_")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Certified,
    CertificationFailed,
    Diverged,
    Error,
}

/// Contents of `report_<cell>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub experiment: String,
    pub cell: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub problem: Option<ProblemSummary>,
    pub policy: Option<OrderPolicy>,
    pub staleness: Option<usize>,
    pub eta: Option<f64>,
    /// History used by the envelope check.
    pub envelope_a: Option<usize>,
    pub iterations: usize,
    pub final_suboptimality: Option<f64>,
    /// Per-iteration factor of the fitted `ln F_k` slope.
    pub empirical_rate: Option<f64>,
    /// Per-iteration factor of the envelope, `(1 − ημ/18)^(1/(aK+1))`.
    pub envelope_rate: Option<f64>,
    pub checks: Vec<CertificateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<ComplexityReport>,
}

impl CellReport {
    fn failure(experiment: &str, cell: String, status: CellStatus, diagnostic: String) -> Self {
        CellReport {
            experiment: experiment.to_string(),
            cell,
            status,
            diagnostic: Some(diagnostic),
            problem: None,
            policy: None,
            staleness: None,
            eta: None,
            envelope_a: None,
            iterations: 0,
            final_suboptimality: None,
            empirical_rate: None,
            envelope_rate: None,
            checks: Vec::new(),
            complexity: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.status != CellStatus::Certified
    }
}

/// Everything a cell produced: its report and, when the solver finished, the trace.
#[derive(Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub report: CellReport,
    pub trace: Option<IterateTrace>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub cells: Vec<CellOutcome>,
    pub summary: String,
}

impl ExperimentOutcome {
    /// 0 when every cell certified, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.cells.iter().any(|c| c.report.failed()) {
            1
        } else {
            0
        }
    }
}

/// Step size and envelope history for a cell.
fn choose_step(cfg: &ExperimentConfig, l: f64, mu: f64, k: usize) -> Result<(f64, usize)> {
    let cor2 = || solver::step_size_corollary2(l, mu, k);
    Ok(match cfg.step {
        StepMode::Explicit { eta } => (eta, cor2()?.a),
        StepMode::Scaled { scale } => (scale / l, cor2()?.a),
        StepMode::Theorem2 { a } => (solver::step_size_theorem2(l, mu, k, a)?, a),
        StepMode::Corollary2 => {
            let s = cor2()?;
            (s.eta, s.a)
        }
    })
}

/// Solves and certifies one cell without touching the file system.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> CellOutcome {
    let label = cell.label();
    let mut spec = cfg.problem.clone();
    if let Some(seed) = cfg.seed {
        spec.set_seed(seed);
    }
    if cell.condition.is_some() {
        spec.set_condition(cell.condition);
    }
    let problem = match spec.build() {
        Ok(p) => p,
        Err(e) => {
            let report = CellReport::failure(&cfg.name, label, CellStatus::Error, e.to_string());
            return CellOutcome { cell, report, trace: None };
        }
    };
    let m = problem.num_components();
    let policy = match cell.staleness {
        Some(k) => OrderPolicy::for_staleness(k, m),
        None => cfg.policy.clone().unwrap_or(OrderPolicy::Cyclic),
    };
    let prepared = policy.compile(m).and_then(|s| {
        let k = s.staleness();
        let (eta, a) = choose_step(cfg, problem.smooth.lipschitz(), problem.smooth.mu(), k)?;
        Ok((k, eta * cell.eta_scale.unwrap_or(1.0), a))
    });
    let (k, eta, envelope_a) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let report = CellReport::failure(&cfg.name, label, CellStatus::Error, e.to_string());
            return CellOutcome { cell, report, trace: None };
        }
    };
    let mut solver_cfg = SolverConfig::new(eta, policy.clone(), cfg.iterations).with_history(cfg.history);
    if let Some(eps) = cfg.target_epsilon {
        solver_cfg = solver_cfg.with_target(eps);
    }
    let x0 = vec![0.0; problem.dim()];
    let trace = match solver::run(&problem, &solver_cfg, &x0) {
        Ok(t) => t,
        Err(e) => {
            let status = match e {
                Error::Diverged { .. } | Error::NonFinite(_) | Error::Infeasible { .. } => CellStatus::Diverged,
                _ => CellStatus::Error,
            };
            let mut report = CellReport::failure(&cfg.name, label, status, e.to_string());
            report.problem = Some(problem.summary());
            report.policy = Some(policy);
            report.staleness = Some(k);
            report.eta = Some(eta);
            return CellOutcome { cell, report, trace: None };
        }
    };

    let checks = certify::certify_trace(&trace, cfg.history, envelope_a);
    let complexity = cfg
        .target_epsilon
        .and_then(|eps| certify::empirical_vs_bound_complexity(&trace, eps).ok());
    let complexity_failed = complexity.as_ref().is_some_and(|c| c.pass == Some(false));
    let status = if checks.iter().any(|c| c.failed()) || complexity_failed {
        CellStatus::CertificationFailed
    } else {
        CellStatus::Certified
    };
    let block = (envelope_a * k + 1) as f64;
    let report = CellReport {
        experiment: cfg.name.clone(),
        cell: label,
        status,
        diagnostic: None,
        problem: Some(trace.meta.problem.clone()),
        policy: Some(policy),
        staleness: Some(k),
        eta: Some(eta),
        envelope_a: Some(envelope_a),
        iterations: trace.iterations(),
        final_suboptimality: trace.rows.last().map(|r| r.suboptimality),
        empirical_rate: certify::empirical_rate(&trace),
        envelope_rate: Some(solver::envelope_rate(eta, problem.smooth.mu()).powf(1.0 / block)),
        checks,
        complexity,
    };
    CellOutcome { cell, report, trace: Some(trace) }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Trace as CSV, one row per iterate including `k = 0`.
pub fn trace_csv(trace: &IterateTrace) -> String {
    let eta = trace.eta();
    let mut out = String::with_capacity(96 * trace.rows.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{},{:.16e},{},{:.16e}",
            r.k,
            r.suboptimality,
            fmt_opt(r.direction_norm),
            r.dist_to_opt,
            fmt_opt(r.grad_error),
            eta
        );
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_cell(dir: &Path, outcome: &CellOutcome) -> Result<()> {
    let label = &outcome.report.cell;
    if let Some(trace) = &outcome.trace {
        write_atomic(&dir.join(format!("trace_{label}.csv")), trace_csv(trace).as_bytes())?;
    }
    let mut json = serde_json::to_string_pretty(&outcome.report)?;
    json.push('\n');
    write_atomic(&dir.join(format!("report_{label}.json")), json.as_bytes())
}

/// Runs every cell on `jobs` worker threads and writes all outputs into
/// `output_dir` (or the config's directory, or `./<name>`).
pub fn run_experiment(cfg: &ExperimentConfig, output_dir: Option<&Path>, jobs: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = output_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(&cfg.name));
    fs::create_dir_all(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cells = cfg.cells();
    let results: Vec<Result<CellOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let outcome = run_cell(cfg, cell);
                write_cell(&dir, &outcome)?;
                Ok(outcome)
            })
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
    let entries: Vec<(String, std::result::Result<CellReport, String>)> = outcomes
        .iter()
        .map(|o| (format!("report_{}.json", o.report.cell), Ok(o.report.clone())))
        .collect();
    let summary = summarize_reports(&entries);
    write_atomic(&dir.join("summary.txt"), summary.text.as_bytes())?;
    Ok(ExperimentOutcome { output_dir: dir, cells: outcomes, summary: summary.text })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub text: String,
    pub failed: bool,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed)
    }
}

struct SummaryRow {
    rank: u8,
    cells: [String; 7],
}

/// One row per (cell, check): fail and error rows first, then the rest in input order.
pub fn summarize_reports(entries: &[(String, std::result::Result<CellReport, String>)]) -> Summary {
    let mut rows = Vec::new();
    for (source, entry) in entries {
        match entry {
            Err(msg) => rows.push(SummaryRow {
                rank: 0,
                cells: [source.clone(), "-".into(), "ERROR".into(), msg.clone(), String::new(), String::new(), String::new()],
            }),
            Ok(rep) => {
                let rate = |v: Option<f64>| v.map(|x| format!("{x:.9}")).unwrap_or_else(|| "-".into());
                let (emp, env) = (rate(rep.empirical_rate), rate(rep.envelope_rate));
                if matches!(rep.status, CellStatus::Diverged | CellStatus::Error) {
                    let label = if rep.status == CellStatus::Diverged { "DIVERGED" } else { "ERROR" };
                    rows.push(SummaryRow {
                        rank: 0,
                        cells: [
                            rep.cell.clone(),
                            "solver".into(),
                            label.into(),
                            rep.diagnostic.clone().unwrap_or_default(),
                            emp.clone(),
                            env.clone(),
                            String::new(),
                        ],
                    });
                }
                for c in &rep.checks {
                    let (rank, label) = match c.status {
                        CheckStatus::Fail => (0, "FAIL"),
                        CheckStatus::Pass => (1, "PASS"),
                        CheckStatus::NotApplicable => (1, "N/A"),
                        CheckStatus::Refused => (1, "REFUSED"),
                    };
                    let margin = c.worst_margin.map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into());
                    let first = c.first_violation.map(|k| k.to_string()).unwrap_or_default();
                    rows.push(SummaryRow {
                        rank,
                        cells: [rep.cell.clone(), c.check.clone(), label.into(), margin, emp.clone(), env.clone(), first],
                    });
                }
                if let Some(cx) = &rep.complexity {
                    let (rank, label) = match cx.pass {
                        Some(false) => (0, "FAIL"),
                        Some(true) => (1, "PASS"),
                        None => (1, "N/A"),
                    };
                    let got = cx.k_actual.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
                    rows.push(SummaryRow {
                        rank,
                        cells: [
                            rep.cell.clone(),
                            "complexity".into(),
                            label.into(),
                            format!("{got} <= {}", cx.k_bound),
                            emp.clone(),
                            env.clone(),
                            String::new(),
                        ],
                    });
                }
            }
        }
    }
    rows.sort_by_key(|r| r.rank);
    let failed = rows.iter().any(|r| r.rank == 0);
    let header = ["cell", "check", "status", "worst_margin", "empirical_rate", "envelope_rate", "first_violation"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(&r.cells) {
            *w = (*w).max(c.len());
        }
    }
    let mut text = String::new();
    if !rows.is_empty() {
        let line = |cells: &[&str]| {
            let joined: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            joined.join("  ").trim_end().to_string()
        };
        text.push_str(&line(&header));
        text.push('\n');
        for r in &rows {
            let cells: Vec<&str> = r.cells.iter().map(String::as_str).collect();
            text.push_str(&line(&cells));
            text.push('\n');
        }
    }
    Summary { text, failed }
}

/// Reads every `report_*.json` in `dir` (sorted by name) and summarizes them.
/// Unparseable reports become error rows.
pub fn report_summary(dir: &Path) -> Result<Summary> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    Ok(summarize_paths(&paths))
}

pub fn summarize_paths(paths: &[PathBuf]) -> Summary {
    let entries: Vec<_> = paths
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let parsed = fs::read_to_string(p)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<CellReport>(&s).map_err(|e| e.to_string()));
            (name, parsed)
        })
        .collect();
    summarize_reports(&entries)
}
