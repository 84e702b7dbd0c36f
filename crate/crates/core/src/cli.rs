//! The `audit`, `run` and `sweep` commands and their output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, FamilyKind};
use crate::error::{Error, Result};
use crate::field::{Grid, State, MIN_CELLS};
use crate::hypothesis::{self, AuditReport, ExponentChoice, Threshold};
use crate::monitors::{inequality_tolerance, trend_bounded, Monitor, MonitorConfig, MonitorRecord};
use crate::motility::MotilityFamily;
use crate::stepper::{self, RunSettings, RunStatus};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const BLOW_UP: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const AUDIT_FAILED: i32 = 4;
    pub const NUMERICAL_FAILURE: i32 = 5;
}

/// Exit code for an error escaping a command.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit::CONFIG,
        Error::Io(_) => exit::IO,
        Error::Domain(_) | Error::NegativeMotility { .. } => exit::NUMERICAL_FAILURE,
    }
}

pub fn status_exit_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Completed => exit::OK,
        RunStatus::BlowUpSuspected => exit::BLOW_UP,
        RunStatus::PositivityLost | RunStatus::DtUnderflow => exit::NUMERICAL_FAILURE,
    }
}

/// Head fraction and growth factor of the windowed no-growth criterion.
pub const TREND_HEAD_FRACTION: f64 = 0.1;
pub const TREND_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct AuditDocument {
    #[serde(flatten)]
    pub report: AuditReport,
    pub n_dim: usize,
    pub d: f64,
    /// Closed-form comparison for the algebraic family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub exponents: ExponentChoice,
}

#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub exit_code: i32,
    pub document: AuditDocument,
}

/// Audit plus closed-form threshold (algebraic family) and exponent choice.
pub fn audit_config(cfg: &ExperimentConfig) -> Result<AuditDocument> {
    let fam = cfg.family()?;
    let params = cfg.model_params();
    let a = &cfg.audit;
    let report = hypothesis::audit(&fam, &params, a.v_min, a.v_max, a.grid_points)?;
    let exponents = hypothesis::choose_exponents(&fam, &params, a.v_min, a.v_max, a.grid_points)?;
    let (threshold, eta) = match fam {
        MotilityFamily::AlgebraicKs {
            sigma,
            lambda,
            alpha,
        } => {
            let eta = a.eta.unwrap_or(a.v_min);
            (
                Some(hypothesis::algebraic_threshold(
                    sigma,
                    lambda,
                    alpha,
                    params.d,
                    eta,
                    params.n_dim,
                )?),
                Some(eta),
            )
        }
        _ => (None, None),
    };
    Ok(AuditDocument {
        report,
        n_dim: params.n_dim,
        d: params.d,
        threshold,
        eta,
        exponents,
    })
}

/// Writes `audit.json` into `out_dir`; exit 0 when the condition holds, 4 otherwise.
pub fn cmd_audit(cfg: &ExperimentConfig, out_dir: &Path) -> Result<AuditOutcome> {
    let document = audit_config(cfg)?;
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&document).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("audit.json"), json + "\n")?;
    let exit_code = if document.report.h3_ok {
        exit::OK
    } else {
        exit::AUDIT_FAILED
    };
    Ok(AuditOutcome {
        exit_code,
        document,
    })
}

/// Exponents of the monitored functional: overrides, else the audited
/// choice, else a fallback pair flagged as not audited.
pub fn monitor_exponents(cfg: &ExperimentConfig) -> Result<(f64, f64, bool)> {
    if let Some(e) = &cfg.exponents {
        if let (Some(p), Some(q)) = (e.p, e.q) {
            return Ok((p, q, false));
        }
    }
    let fam = cfg.family()?;
    let params = cfg.model_params();
    let a = &cfg.audit;
    let choice = hypothesis::choose_exponents(&fam, &params, a.v_min, a.v_max, a.grid_points)?;
    if choice.feasible {
        return Ok((choice.p, choice.q, true));
    }
    let half = params.half_dim();
    let p = if half + 0.25 > 1.0 { half + 0.25 } else { 1.25 };
    Ok((p, 0.5 * half.min(p), false))
}

pub fn series_header(n_lp: usize) -> String {
    let mut cols: Vec<String> = [
        "t",
        "mass_u",
        "int_v",
        "min_v",
        "min_gamma",
        "sup_u",
        "sup_grad_v",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=n_lp).map(|k| format!("lp_u_p{k}")));
    cols.extend(
        ["W", "ineq_residual", "identity_residual"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

pub fn series_row(r: &MonitorRecord) -> String {
    let mut cols = vec![
        r.t,
        r.mass_u,
        r.int_v,
        r.min_v,
        r.min_gamma,
        r.sup_u,
        r.sup_grad_v,
    ];
    cols.extend(&r.lp_u);
    cols.extend([r.w, r.ineq_residual, r.identity_residual]);
    cols.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn snapshot_name(t: f64) -> String {
    format!("snap_{t:.6}.csv")
}

/// Writes `x[,y],u,v` rows with 17 significant digits.
pub fn write_snapshot(path: &Path, state: &State) -> Result<()> {
    let grid: &Grid = state.grid();
    let mut w = BufWriter::new(File::create(path)?);
    let header = if grid.dim() == 2 { "x,y,u,v" } else { "x,u,v" };
    writeln!(w, "{header}")?;
    for k in 0..grid.len() {
        let c = grid.center(k);
        let (u, v) = (state.u.values()[k], state.v.values()[k]);
        if grid.dim() == 2 {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", c[0], c[1], u, v)?;
        } else {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", c[0], u, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub exit_code: i32,
    pub status: RunStatus,
    pub steps_taken: usize,
    pub degenerate_steps: usize,
    pub final_t: f64,
    pub p: f64,
    pub q: f64,
    pub exponents_audited: bool,
    #[serde(with = "crate::hypothesis::ext_real")]
    pub inf_f: f64,
    pub h3_ok: bool,
    pub ineq_tolerance: f64,
    pub ineq_violations: usize,
    pub sup_u_trend_bounded: bool,
    pub w_trend_bounded: bool,
    pub lp_trend_bounded: Vec<bool>,
    /// Largest `sup u` after the head window divided by the largest within it.
    pub sup_u_growth_ratio: f64,
    pub initial_sup_u: f64,
    pub final_sup_u: f64,
    pub min_v: f64,
    #[serde(skip)]
    pub records: Vec<MonitorRecord>,
    #[serde(skip)]
    pub final_state: Option<State>,
}

fn growth_ratio(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 1.0;
    }
    let head =
        ((series.len() as f64 * TREND_HEAD_FRACTION).ceil() as usize).clamp(1, series.len() - 1);
    let head_max = series[..head]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let tail_max = series[head..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    tail_max / head_max
}

/// Runs one simulation, writing `series.csv`, snapshots and `summary.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let fam = cfg.family()?;
    let params = cfg.model_params();
    let initial = cfg.initial_state()?;
    let a = &cfg.audit;
    let report = hypothesis::audit(&fam, &params, a.v_min, a.v_max, a.grid_points)?;
    let (p, q, exponents_audited) = monitor_exponents(cfg)?;
    let mon_cfg = MonitorConfig {
        p,
        q,
        lp_exponents: cfg.run.lp_exponents.clone(),
    };
    mon_cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml_string())?;

    let mut series = BufWriter::new(File::create(out_dir.join("series.csv"))?);
    writeln!(series, "{}", series_header(mon_cfg.lp_exponents.len()))?;
    let mut monitor = Monitor::new(fam.clone(), params.clone(), mon_cfg);
    let mut records: Vec<MonitorRecord> = Vec::new();
    let mut failure: Option<Error> = None;
    let snap_every = cfg.output.snapshots_every;
    let mut next_snap = 0.0f64;

    let outcome = stepper::run(
        &initial,
        &fam,
        &params,
        &cfg.step,
        RunSettings {
            horizon: cfg.run.horizon,
            sample_every: Some(cfg.run.sample_every),
        },
        &mut |state: &State| {
            if failure.is_some() {
                return;
            }
            let mut step = || -> Result<()> {
                let rec = monitor.observe(state)?;
                writeln!(series, "{}", series_row(&rec))?;
                records.push(rec);
                if let Some(every) = snap_every {
                    if state.t >= next_snap - 1e-9 * every {
                        write_snapshot(&out_dir.join(snapshot_name(state.t)), state)?;
                        while next_snap <= state.t + 1e-9 * every {
                            next_snap += every;
                        }
                    }
                }
                Ok(())
            };
            if let Err(e) = step() {
                failure = Some(e);
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    series.flush()?;
    if let Some(every) = snap_every {
        let name = out_dir.join(snapshot_name(outcome.final_state.t));
        if !name.exists() && outcome.final_state.t < next_snap - every + 1e-9 * every {
            write_snapshot(&name, &outcome.final_state)?;
        }
    }

    let w_series: Vec<f64> = records.iter().map(|r| r.w).collect();
    let sup_series: Vec<f64> = records.iter().map(|r| r.sup_u).collect();
    let w_scale = w_series.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let grid = initial.grid();
    let tol = inequality_tolerance(grid.min_spacing(), cfg.run.sample_every, w_scale);
    let ineq_violations = records.iter().filter(|r| r.ineq_residual > tol).count();
    let lp_trend_bounded = (0..cfg.run.lp_exponents.len())
        .map(|k| {
            let s: Vec<f64> = records.iter().map(|r| r.lp_u[k]).collect();
            trend_bounded(&s, TREND_HEAD_FRACTION, TREND_FACTOR)
        })
        .collect();
    let summary = RunSummary {
        exit_code: status_exit_code(outcome.status),
        status: outcome.status,
        steps_taken: outcome.steps_taken,
        degenerate_steps: outcome.degenerate_steps,
        final_t: outcome.final_state.t,
        p,
        q,
        exponents_audited,
        inf_f: report.inf_f,
        h3_ok: report.h3_ok,
        ineq_tolerance: tol,
        ineq_violations,
        sup_u_trend_bounded: trend_bounded(&sup_series, TREND_HEAD_FRACTION, TREND_FACTOR),
        w_trend_bounded: trend_bounded(&w_series, TREND_HEAD_FRACTION, TREND_FACTOR),
        lp_trend_bounded,
        sup_u_growth_ratio: growth_ratio(&sup_series),
        initial_sup_u: initial.u.sup_abs(),
        final_sup_u: outcome.final_state.u.sup_abs(),
        min_v: records
            .iter()
            .map(|r| r.min_v)
            .fold(f64::INFINITY, f64::min),
        records,
        final_state: Some(outcome.final_state),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// One sweep axis: `name=start:stop:count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(vec![format!(
                "axis must look like name=start:stop:count, got {s:?}"
            )])
        };
        let (name, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        let values = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|k| (start * (count - 1 - k) as f64 + stop * k as f64) / (count - 1) as f64)
                .collect()
        };
        Ok(Axis {
            name: name.trim().to_string(),
            values,
        })
    }
}

/// Applies a named parameter to a configuration.
pub fn apply_axis_value(cfg: &mut ExperimentConfig, name: &str, value: f64) -> Result<()> {
    let key = name.strip_prefix("family.").unwrap_or(name);
    if cfg.family.set(key, value) {
        return Ok(());
    }
    match name
        .strip_prefix("model.")
        .or(name.strip_prefix("initial."))
        .unwrap_or(name)
    {
        "d" => cfg.model.d = value,
        "amplitude" => cfg.initial.amplitude = value,
        "width" => cfg.initial.width = value,
        "baseline_u" => cfg.initial.baseline_u = value,
        "baseline_v" => cfg.initial.baseline_v = value,
        _ => {
            return Err(Error::Config(vec![format!("unknown sweep axis {name:?}")]));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub values: Vec<f64>,
    #[serde(with = "crate::hypothesis::ext_real")]
    pub inf_f: f64,
    pub h3_ok: bool,
    pub status: String,
    pub exit_code: i32,
    pub steps: usize,
    pub final_t: f64,
    pub initial_sup_u: f64,
    pub final_sup_u: f64,
    pub sup_u_growth_ratio: f64,
    pub min_v: f64,
    pub regime: String,
}

impl SweepRow {
    fn csv(&self) -> String {
        let mut cols = vec![self.point.to_string()];
        cols.extend(self.values.iter().map(|v| v.to_string()));
        cols.extend([
            self.inf_f.to_string(),
            self.h3_ok.to_string(),
            self.status.clone(),
            self.exit_code.to_string(),
            self.steps.to_string(),
            self.final_t.to_string(),
            self.initial_sup_u.to_string(),
            self.final_sup_u.to_string(),
            self.sup_u_growth_ratio.to_string(),
            self.min_v.to_string(),
            self.regime.clone(),
        ]);
        cols.join(",")
    }
}

/// `bounded`: completed without `sup u` rising above its early maximum;
/// `growth`: completed but `sup u` rose; otherwise the failure status.
pub fn classify(status: RunStatus, growth_ratio: f64) -> &'static str {
    match status {
        RunStatus::Completed if growth_ratio <= 1.0 => "bounded",
        RunStatus::Completed => "growth",
        RunStatus::BlowUpSuspected => "blowup",
        RunStatus::DtUnderflow | RunStatus::PositivityLost => "failed",
    }
}

/// Expands the cross product of the axes into configurations. With axes the
/// resolution is halved (never below the grid minimum); without axes the
/// single point is the configuration itself.
pub fn sweep_points(
    cfg: &ExperimentConfig,
    axes: &[Axis],
) -> Result<Vec<(Vec<f64>, ExperimentConfig)>> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    points
        .into_iter()
        .map(|values| {
            let mut c = cfg.clone();
            for (axis, &v) in axes.iter().zip(&values) {
                apply_axis_value(&mut c, &axis.name, v)?;
            }
            if !axes.is_empty() {
                for n in c.model.cells.iter_mut() {
                    *n = (*n / 2).max(MIN_CELLS);
                }
            }
            c.validate()?;
            Ok((values, c))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub exit_code: i32,
    pub rows: Vec<SweepRow>,
    pub table: PathBuf,
}

/// Runs every sweep point on a pool of `threads` workers and appends one row
/// per finished point to `sweep.csv`.
pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axes: &[Axis],
    out_dir: &Path,
    threads: usize,
) -> Result<SweepOutcome> {
    let points = sweep_points(cfg, axes)?;
    fs::create_dir_all(out_dir)?;
    let table = out_dir.join("sweep.csv");
    let mut header = vec!["point".to_string()];
    header.extend(axes.iter().map(|a| a.name.clone()));
    header.extend(
        [
            "inf_F",
            "h3_ok",
            "status",
            "exit_code",
            "steps",
            "final_t",
            "initial_sup_u",
            "final_sup_u",
            "sup_u_growth_ratio",
            "min_v",
            "regime",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut w = BufWriter::new(File::create(&table)?);
    writeln!(w, "{}", header.join(","))?;
    w.flush()?;
    let writer = Mutex::new(w);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let single = axes.is_empty();
    let results: Vec<Result<SweepRow>> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(k, (values, c))| {
                let dir = if single {
                    out_dir.to_path_buf()
                } else {
                    out_dir.join(format!("point_{k:04}"))
                };
                let s = cmd_run(c, &dir)?;
                let row = SweepRow {
                    point: k,
                    values: values.clone(),
                    inf_f: s.inf_f,
                    h3_ok: s.h3_ok,
                    status: s.status.as_str().to_string(),
                    exit_code: s.exit_code,
                    steps: s.steps_taken,
                    final_t: s.final_t,
                    initial_sup_u: s.initial_sup_u,
                    final_sup_u: s.final_sup_u,
                    sup_u_growth_ratio: s.sup_u_growth_ratio,
                    min_v: s.min_v,
                    regime: classify(s.status, s.sup_u_growth_ratio).to_string(),
                };
                let mut w = writer.lock().expect("sweep writer poisoned");
                writeln!(w, "{}", row.csv())?;
                w.flush()?;
                Ok(row)
            })
            .collect()
    });
    let mut rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.point);
    Ok(SweepOutcome {
        exit_code: exit::OK,
        rows,
        table,
    })
}

/// `true` when the family kind has the given scalar parameter.
pub fn family_has_param(kind: FamilyKind, name: &str) -> bool {
    matches!(
        (kind, name),
        (FamilyKind::Singular, "chi")
            | (FamilyKind::Algebraic, "sigma" | "lambda" | "alpha")
            | (FamilyKind::Constant, "gamma0" | "phi0")
    )
}
