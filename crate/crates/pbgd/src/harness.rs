//! Run harness behind the `pbgd` binary: config-file parsing, the four
//! commands (`run`, `probe`, `svm`, `list`), and machine-readable outputs.
//!
//! Config files are flat `key = value` text with optional `[section]`
//! headers that prefix keys as `section.key`. Outputs are RFC-4180 CSV with
//! LF line endings and two-space-indented JSON; the only nondeterministic
//! content is wall-clock timing (the `wall_ms` CSV column and the summary's
//! `wall_ms`/`timing` entries) — everything else is byte-reproducible for a
//! fixed config and seed.

use crate::algorithms::{
    alt_pbgd, jnt_pbgd, pbgd_blocc, pbgd_free, pbgd_free_cc, FreeMode, PenaltyConfig, Terminal,
    TrajectoryRecord,
};
use crate::catalog::{catalog, catalog_entry, make_example};
use crate::diagnostics::{
    flatness_delta_cfg, free_bias_cfg, gap_report_cfg, smoothness_probe_cfg, DiagConfig,
};
use crate::error::{Error, Result};
use crate::inner::InnerStop;
use crate::problem::BilevelProblem;
use crate::svm::{
    load_csv_dataset, run_svm_once, synthetic_dataset, LabelColumn, RawDataset, SvmAlgorithm,
    SvmConfig, SvmRunResult,
};
use crate::vecmath::RealVec;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub const RUN_SUMMARY_SCHEMA: &str = include_str!("../schemas/run_summary.schema.json");
pub const SVM_SUMMARY_SCHEMA: &str = include_str!("../schemas/svm_summary.schema.json");

/// Environment variable capping `svm` seed parallelism (default 1).
pub const THREADS_ENV: &str = "BILEVEL_THREADS";

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

/// Parsed `key = value` file with consumption tracking: any key left
/// unconsumed after extraction is a config error (typos must not pass
/// silently).
#[derive(Debug)]
pub struct ConfigFile {
    entries: HashMap<String, (usize, String)>,
    consumed: std::cell::RefCell<Vec<String>>,
    path: PathBuf,
}

impl ConfigFile {
    pub fn parse(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Config {
            line: 0,
            message: format!("cannot read {}: {e}", path.as_ref().display()),
        })?;
        let mut entries = HashMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: lineno,
                    message: format!("expected 'key = value', found '{line}'"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config { line: lineno, message: "empty key".into() });
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if entries
                .insert(full.clone(), (lineno, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config {
                    line: lineno,
                    message: format!("duplicate key '{full}'"),
                });
            }
        }
        Ok(ConfigFile {
            entries,
            consumed: std::cell::RefCell::new(Vec::new()),
            path: path.as_ref().to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| {
            self.consumed.borrow_mut().push(key.to_string());
            (*l, v.as_str())
        })
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        self.raw(key).map(|(_, v)| v.to_string())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.opt_str(key).unwrap_or_else(|| default.to_string())
    }

    pub fn require_str(&self, key: &str) -> Result<String> {
        self.opt_str(key).ok_or_else(|| Error::Config {
            line: 0,
            message: format!("missing required key '{key}' in {}", self.path.display()),
        })
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<f64>().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("key '{key}': expected a real number, found '{v}'"),
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<usize>().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("key '{key}': expected a nonnegative integer, found '{v}'"),
            }),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("key '{key}': expected an integer, found '{v}'"),
            }),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some((_, "true")) | Some((_, "1")) | Some((_, "on")) => Ok(true),
            Some((_, "false")) | Some((_, "0")) | Some((_, "off")) => Ok(false),
            Some((line, v)) => Err(Error::Config {
                line,
                message: format!("key '{key}': expected true/false, found '{v}'"),
            }),
        }
    }

    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    out.push(part.parse::<f64>().map_err(|_| Error::Config {
                        line,
                        message: format!("key '{key}': '{part}' is not a real number"),
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Reject unconsumed (unknown or misspelled) keys.
    pub fn finish(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let mut leftovers: Vec<(&String, usize)> = self
            .entries
            .iter()
            .filter(|(k, _)| !consumed.contains(k))
            .map(|(k, (line, _))| (k, *line))
            .collect();
        leftovers.sort_by_key(|(_, line)| *line);
        if let Some((key, line)) = leftovers.first() {
            return Err(Error::Config {
                line: *line,
                message: format!("unknown key '{key}'"),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Jnt,
    Alt,
    FreeNaive,
    FreeSingle,
    Blocc,
    FreeCc,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "jnt" => Algorithm::Jnt,
            "alt" => Algorithm::Alt,
            "free_naive" => Algorithm::FreeNaive,
            "free_single" => Algorithm::FreeSingle,
            "blocc" => Algorithm::Blocc,
            "free_cc" => Algorithm::FreeCc,
            other => {
                return Err(Error::argument(format!(
                    "unknown algorithm '{other}' (expected jnt|alt|free_naive|free_single|blocc|free_cc)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Jnt => "jnt",
            Algorithm::Alt => "alt",
            Algorithm::FreeNaive => "free_naive",
            Algorithm::FreeSingle => "free_single",
            Algorithm::Blocc => "blocc",
            Algorithm::FreeCc => "free_cc",
        }
    }

    pub fn needs_coupled(&self) -> bool {
        matches!(self, Algorithm::Blocc | Algorithm::FreeCc)
    }
}

fn parse_inner_stop(cfg: &ConfigFile) -> Result<InnerStop> {
    let kind = cfg.str_or("inner.stop", "tol");
    match kind.as_str() {
        "fixed" => Ok(InnerStop::FixedSteps(cfg.usize_or("inner.steps", 1)?)),
        "tol" => Ok(InnerStop::StepNormTol {
            tol: cfg.f64_or("inner.tol", 1e-9)?,
            max_steps: cfg.usize_or("inner.max_steps", 5_000)?,
        }),
        other => Err(Error::Config {
            line: 0,
            message: format!("inner.stop must be 'fixed' or 'tol', found '{other}'"),
        }),
    }
}

fn parse_vector(cfg: &ConfigFile, key: &str, dim: usize) -> Result<Option<RealVec>> {
    match cfg.opt_f64_list(key)? {
        None => Ok(None),
        Some(vs) => {
            if vs.len() != dim {
                return Err(Error::Config {
                    line: 0,
                    message: format!("key '{key}': expected {dim} entries, found {}", vs.len()),
                });
            }
            Ok(Some(RealVec::new(vs)?))
        }
    }
}

fn float_to_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn ensure_out_dir(cfg_dir: Option<String>, out_override: Option<&Path>) -> Result<PathBuf> {
    let dir = match (out_override, cfg_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => {
            return Err(Error::Config {
                line: 0,
                message: "no output directory: set output_dir in the config or pass --out".into(),
            })
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// cmd_run
// ---------------------------------------------------------------------------

/// Everything `cmd_run` needs, parsed and validated.
pub struct RunConfig {
    pub problem_name: String,
    pub algorithm: Algorithm,
    pub penalty: PenaltyConfig,
    pub x0: Option<RealVec>,
    pub y0: Option<RealVec>,
    pub output_dir: Option<String>,
    pub problem: BilevelProblem,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg = ConfigFile::parse(path)?;
        let problem_name = cfg.require_str("problem")?;
        let entry = catalog_entry(&problem_name)?;
        let problem = make_example(&problem_name)?;
        let algorithm = Algorithm::parse(&cfg.require_str("algorithm")?)?;
        if algorithm.needs_coupled() != problem.is_coupled() {
            return Err(Error::Unsupported(format!(
                "algorithm '{}' does not match the constraint regime of '{}'",
                algorithm.name(),
                problem_name
            )));
        }
        let penalty = PenaltyConfig {
            gamma: cfg.f64_or("gamma", entry.default_gamma)?,
            eta_outer: Some(cfg.f64_or("eta_outer", entry.default_eta_outer)?),
            inner_stop: parse_inner_stop(&cfg)?,
            eta_inner_y: cfg.opt_f64("eta_inner_y")?,
            eta_inner_lambda: cfg.opt_f64("eta_inner_lambda")?,
            max_outer: cfg.usize_or("max_outer", 500)?,
            outer_tol: cfg.f64_or("outer_tol", 1e-4)?,
            record_every: cfg.usize_or("record_every", 1)?,
            seed: cfg.opt_u64("seed")?.unwrap_or(0),
        };
        let x0 = parse_vector(&cfg, "x0", problem.d_x)?;
        let y0 = parse_vector(&cfg, "y0", problem.d_y)?;
        let output_dir = cfg.opt_str("output_dir");
        cfg.finish()?;
        penalty.validate()?;
        Ok(RunConfig { problem_name, algorithm, penalty, x0, y0, output_dir, problem })
    }

    fn config_echo(&self) -> Value {
        json!({
            "problem": self.problem_name,
            "algorithm": self.algorithm.name(),
            "gamma": self.penalty.gamma,
            "eta_outer": self.penalty.eta_outer,
            "eta_inner_y": self.penalty.eta_inner_y,
            "eta_inner_lambda": self.penalty.eta_inner_lambda,
            "inner_stop": inner_stop_echo(&self.penalty.inner_stop),
            "max_outer": self.penalty.max_outer,
            "outer_tol": self.penalty.outer_tol,
            "record_every": self.penalty.record_every,
            "seed": self.penalty.seed,
            "x0": self.x0.as_ref().map(|v| v.to_vec()),
            "y0": self.y0.as_ref().map(|v| v.to_vec()),
        })
    }
}

fn inner_stop_echo(stop: &InnerStop) -> Value {
    match stop {
        InnerStop::FixedSteps(k) => json!({"kind": "fixed", "steps": k}),
        InnerStop::StepNormTol { tol, max_steps } => {
            json!({"kind": "tol", "tol": tol, "max_steps": max_steps})
        }
    }
}

pub struct RunArtifacts {
    pub trajectory_csv: PathBuf,
    pub summary_json: PathBuf,
    pub terminal: Terminal,
    pub record: TrajectoryRecord,
}

/// Execute one configured run and write `trajectory.csv` + `summary.json`.
pub fn cmd_run(config_path: impl AsRef<Path>, out_override: Option<&Path>) -> Result<RunArtifacts> {
    let rc = RunConfig::from_file(config_path)?;
    let out = ensure_out_dir(rc.output_dir.clone(), out_override)?;
    let x0 = match &rc.x0 {
        Some(v) => v.clone(),
        None => rc.problem.set_x.project(&RealVec::zeros(rc.problem.d_x))?,
    };
    let y0 = match &rc.y0 {
        Some(v) => v.clone(),
        None => rc.problem.set_y.project(&RealVec::zeros(rc.problem.d_y))?,
    };
    let record = match rc.algorithm {
        Algorithm::Jnt => jnt_pbgd(&rc.problem, &rc.penalty, &x0, &y0)?,
        Algorithm::Alt => alt_pbgd(&rc.problem, &rc.penalty, &x0)?,
        Algorithm::FreeNaive => pbgd_free(&rc.problem, &rc.penalty, &x0, &y0, FreeMode::Naive)?,
        Algorithm::FreeSingle => {
            pbgd_free(&rc.problem, &rc.penalty, &x0, &y0, FreeMode::SingleLoop)?
        }
        Algorithm::Blocc => pbgd_blocc(&rc.problem, &rc.penalty, &x0)?,
        Algorithm::FreeCc => pbgd_free_cc(&rc.problem, &rc.penalty, &x0, &y0)?,
    };

    let trajectory_csv = out.join("trajectory.csv");
    write_trajectory_csv(&trajectory_csv, &record, rc.problem.d_x)?;
    let summary = json!({
        "terminal": record.terminal,
        "iterations": record.outer_iterations,
        "final_gg_metric": float_to_json(record.final_gg_metric),
        "final_x": record.final_x.to_vec(),
        "wall_ms": record.wall_ms,
        "config": rc.config_echo(),
        "timing": { "written_at_unix": unix_now() },
    });
    validate_against_schema(&serde_json::from_str(RUN_SUMMARY_SCHEMA)?, &summary)
        .map_err(Error::Data)?;
    let summary_json = out.join("summary.json");
    write_json(&summary_json, &summary)?;
    Ok(RunArtifacts { trajectory_csv, summary_json, terminal: record.terminal, record })
}

/// Stable trajectory schema: `t,x_norm,gg_metric,g_t_norm,inner_steps,wall_ms`
/// plus per-coordinate `x` columns when `d_x <= 8`.
pub fn write_trajectory_csv(path: &Path, record: &TrajectoryRecord, d_x: usize) -> Result<()> {
    let mut body = String::new();
    body.push_str("t,x_norm,gg_metric,g_t_norm,inner_steps,wall_ms");
    if d_x <= 8 {
        for i in 0..d_x {
            body.push_str(&format!(",x{i}"));
        }
    }
    body.push('\n');
    for it in &record.iterations {
        body.push_str(&format!(
            "{},{},{},{},{},{}",
            it.t,
            it.x.norm(),
            it.gg_metric,
            it.g_t_norm,
            it.inner_steps_used,
            it.wall_ms
        ));
        if d_x <= 8 {
            for i in 0..d_x {
                body.push_str(&format!(",{}", it.x[i]));
            }
        }
        body.push('\n');
    }
    std::fs::write(path, body)?;
    Ok(())
}

/// CSV body with the wall-clock column removed. Timing is the one column
/// that cannot be bit-reproducible, so determinism comparisons go through
/// this view.
pub fn csv_without_timing(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let fields: Vec<&str> = line.split(',').collect();
        let kept: Vec<&str> = fields
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 5)
            .map(|(_, f)| *f)
            .collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// cmd_probe
// ---------------------------------------------------------------------------

pub struct ProbeArtifacts {
    pub probe_csv: PathBuf,
    pub rows: usize,
}

/// Sweep the diagnostics over an `x`-grid and a gamma list; one CSV row per
/// `(gamma, x)` pair.
pub fn cmd_probe(
    config_path: impl AsRef<Path>,
    out_override: Option<&Path>,
) -> Result<ProbeArtifacts> {
    let cfg = ConfigFile::parse(config_path)?;
    let problem_name = cfg.require_str("problem")?;
    let entry = catalog_entry(&problem_name)?;
    let problem = make_example(&problem_name)?;
    if problem.d_x != 1 {
        return Err(Error::Unsupported(
            "probe sweeps need a one-dimensional upper variable".into(),
        ));
    }
    let gammas = cfg
        .opt_f64_list("gammas")?
        .unwrap_or_else(|| vec![entry.default_gamma]);
    let x_min = cfg.f64_or("grid.min", 0.0)?;
    let x_max = cfg.f64_or("grid.max", 1.0)?;
    let points = cfg.usize_or("grid.points", 0)?;
    let c_mod = cfg.f64_or("c_mod", 5.0)?;
    let alpha = cfg.f64_or("alpha", 1.1)?;
    let h = cfg.f64_or("h", 1e-3)?;
    let precision = cfg.f64_or("precision", 1e-10)?;
    let output_dir = cfg.opt_str("output_dir");
    cfg.finish()?;
    if points == 0 || gammas.is_empty() {
        return Err(Error::Config {
            line: 0,
            message: "empty probe grid: grid.points >= 1 and a nonempty gamma list required"
                .into(),
        });
    }
    if x_max < x_min {
        return Err(Error::Config {
            line: 0,
            message: "grid.max must be at least grid.min".into(),
        });
    }

    let out = ensure_out_dir(output_dir, out_override)?;
    let diag = DiagConfig::with_precision(precision);
    let direction = RealVec::scalar(1.0);
    let mut body = String::from(
        "gamma,x,penalty_value,phi,value_gap,solution_gap,flatness_delta,free_bias,smoothness_probe\n",
    );
    let mut rows = 0;
    for &gamma in &gammas {
        for i in 0..points {
            let x = if points == 1 {
                x_min
            } else {
                x_min + (x_max - x_min) * i as f64 / (points - 1) as f64
            };
            let xv = RealVec::scalar(x);
            let rep = gap_report_cfg(&problem, gamma, &xv, &diag)?;
            let delta = flatness_delta_cfg(&problem, gamma, &xv, c_mod, alpha, &diag)?;
            let bias = free_bias_cfg(&problem, gamma, &xv, &diag)?;
            // The curvature stencil needs x +- h feasible; report NaN at the
            // boundary rather than failing the whole sweep.
            let probe = smoothness_probe_cfg(&problem, gamma, &xv, &direction, h, &diag)
                .map(|v| v.to_string())
                .unwrap_or_else(|_| "nan".to_string());
            body.push_str(&format!(
                "{gamma},{x},{},{},{},{},{delta},{bias},{probe}\n",
                rep.f_gamma_val, rep.phi_val, rep.value_gap, rep.solution_gap,
            ));
            rows += 1;
        }
    }
    let probe_csv = out.join("probe.csv");
    std::fs::write(&probe_csv, body)?;
    Ok(ProbeArtifacts { probe_csv, rows })
}

// ---------------------------------------------------------------------------
// cmd_svm
// ---------------------------------------------------------------------------

pub struct SvmArtifacts {
    pub per_seed_csv: PathBuf,
    pub summary_json: PathBuf,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub results: Vec<SvmRunResult>,
}

pub struct SvmCommandConfig {
    pub raw: RawDataset,
    pub dataset_desc: String,
    pub svm: SvmConfig,
    pub algorithm: SvmAlgorithm,
    pub penalty: PenaltyConfig,
    pub val_tol: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub output_dir: Option<String>,
}

impl SvmCommandConfig {
    pub fn from_file(
        path: impl AsRef<Path>,
        seeds_override: Option<usize>,
        force_synthetic: bool,
    ) -> Result<Self> {
        let cfg = ConfigFile::parse(path)?;
        let dataset_key = cfg.str_or("dataset", "synthetic");
        let synthetic_n = cfg.usize_or("synthetic.n", 200)?;
        let synthetic_p = cfg.usize_or("synthetic.p", 2)?;
        let separation = cfg.f64_or("synthetic.separation", 2.0)?;
        let noise = cfg.f64_or("synthetic.noise", 0.02)?;
        let label_column = cfg.opt_str("label_column");
        let positive_label = cfg.str_or("positive_label", "1");
        let data_seed = cfg.opt_u64("data_seed")?.unwrap_or(0);
        let (raw, dataset_desc) = if force_synthetic || dataset_key == "synthetic" {
            (
                synthetic_dataset(synthetic_n, synthetic_p, separation, noise, data_seed),
                format!(
                    "synthetic(n={synthetic_n}, p={synthetic_p}, separation={separation}, noise={noise})"
                ),
            )
        } else {
            let label = match label_column {
                Some(name) => match name.parse::<usize>() {
                    Ok(idx) => LabelColumn::Index(idx),
                    Err(_) => LabelColumn::Name(name),
                },
                None => {
                    return Err(Error::Config {
                        line: 0,
                        message: "label_column is required for CSV datasets".into(),
                    })
                }
            };
            (
                load_csv_dataset(&dataset_key, &label, &positive_label)?,
                dataset_key.clone(),
            )
        };
        let fractions = cfg
            .opt_f64_list("fractions")?
            .unwrap_or_else(|| vec![0.5, 0.25, 0.25]);
        if fractions.len() != 3 {
            return Err(Error::Config {
                line: 0,
                message: "fractions must have exactly three entries".into(),
            });
        }
        let svm = SvmConfig {
            ridge_b: cfg.f64_or("ridge_b", 1e-6)?,
            split_fractions: (fractions[0], fractions[1], fractions[2]),
            standardize: cfg.bool_or("standardize", true)?,
            b_lambda: cfg.f64_or("b_lambda", 5.0)?,
            nonneg_c: cfg.bool_or("nonneg_c", false)?,
        };
        svm.validate()?;
        let algorithm = match cfg.str_or("algorithm", "free_cc").as_str() {
            "free_cc" => SvmAlgorithm::FreeCc,
            "blocc" => SvmAlgorithm::Blocc,
            other => {
                return Err(Error::Config {
                    line: 0,
                    message: format!("svm algorithm must be free_cc or blocc, found '{other}'"),
                })
            }
        };
        let penalty = PenaltyConfig {
            gamma: cfg.f64_or("gamma", 20.0)?,
            eta_outer: Some(cfg.f64_or("eta_outer", 0.05)?),
            inner_stop: InnerStop::StepNormTol {
                tol: cfg.f64_or("inner.tol", 1e-8)?,
                max_steps: cfg.usize_or("inner.max_steps", 400)?,
            },
            eta_inner_y: Some(cfg.f64_or("eta_inner_y", 0.05)?),
            eta_inner_lambda: Some(cfg.f64_or("eta_inner_lambda", 0.05)?),
            max_outer: cfg.usize_or("max_epochs", 50)?,
            outer_tol: cfg.f64_or("outer_tol", 0.0)?,
            record_every: cfg.usize_or("record_every", 1)?,
            seed: 0,
        };
        let val_tol = cfg.f64_or("val_tol", 1e-5)?;
        let seeds = seeds_override.unwrap_or(cfg.usize_or("seeds", 20)?);
        let base_seed = cfg.opt_u64("base_seed")?.unwrap_or(0);
        let output_dir = cfg.opt_str("output_dir");
        cfg.finish()?;
        penalty.validate()?;
        if seeds == 0 {
            return Err(Error::Config { line: 0, message: "seeds must be at least 1".into() });
        }
        Ok(SvmCommandConfig {
            raw,
            dataset_desc,
            svm,
            algorithm,
            penalty,
            val_tol,
            seeds,
            base_seed,
            output_dir,
        })
    }
}

fn seed_workers() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Run the chosen driver over `seeds` random splits; results are merged in
/// seed order regardless of worker completion order.
pub fn run_svm_seeds(cfg: &SvmCommandConfig) -> Result<Vec<SvmRunResult>> {
    let workers = seed_workers().min(cfg.seeds);
    let seeds: Vec<u64> = (0..cfg.seeds).map(|i| cfg.base_seed + i as u64).collect();
    if workers <= 1 {
        return seeds
            .iter()
            .map(|&s| run_svm_once(&cfg.raw, &cfg.svm, cfg.algorithm, &cfg.penalty, cfg.val_tol, s))
            .collect();
    }
    let mut slots: Vec<Option<Result<SvmRunResult>>> = Vec::new();
    slots.resize_with(seeds.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let seeds = &seeds;
            let cfgr = &*cfg;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                for (i, &s) in seeds.iter().enumerate() {
                    if i % workers == w {
                        out.push((
                            i,
                            run_svm_once(
                                &cfgr.raw,
                                &cfgr.svm,
                                cfgr.algorithm,
                                &cfgr.penalty,
                                cfgr.val_tol,
                                s,
                            ),
                        ));
                    }
                }
                out
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("svm worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("seed slot unfilled")).collect()
}

pub fn cmd_svm(
    config_path: impl AsRef<Path>,
    out_override: Option<&Path>,
    seeds_override: Option<usize>,
    force_synthetic: bool,
) -> Result<SvmArtifacts> {
    let cfg = SvmCommandConfig::from_file(config_path, seeds_override, force_synthetic)?;
    let out = ensure_out_dir(cfg.output_dir.clone(), out_override)?;
    let results = run_svm_seeds(&cfg)?;

    let mut body = String::from("seed,test_accuracy,wall_ms,final_upper_loss,final_kkt_residual\n");
    for r in &results {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            r.seed, r.test_accuracy, r.wall_ms, r.final_upper_loss, r.final_kkt_residual
        ));
    }
    let per_seed_csv = out.join("svm_seeds.csv");
    std::fs::write(&per_seed_csv, body)?;

    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.test_accuracy).sum::<f64>() / n;
    let var = results
        .iter()
        .map(|r| (r.test_accuracy - mean).powi(2))
        .sum::<f64>()
        / n;
    let mean_val = results.iter().map(|r| r.val_accuracy).sum::<f64>() / n;
    let mean_wall = results.iter().map(|r| r.wall_ms).sum::<f64>() / n;
    let algorithm_name = match cfg.algorithm {
        SvmAlgorithm::FreeCc => "free_cc",
        SvmAlgorithm::Blocc => "blocc",
    };
    let summary = json!({
        "algorithm": algorithm_name,
        "seeds": cfg.seeds,
        "mean_test_accuracy": mean,
        "std_test_accuracy": var.sqrt(),
        "mean_val_accuracy": mean_val,
        "mean_wall_ms": mean_wall,
        "per_seed": results.iter().map(|r| json!({
            "seed": r.seed,
            "test_accuracy": r.test_accuracy,
            "terminal": r.terminal.to_string(),
            "epochs": r.epochs,
        })).collect::<Vec<_>>(),
        "config": {
            "dataset": cfg.dataset_desc,
            "gamma": cfg.penalty.gamma,
            "eta_outer": cfg.penalty.eta_outer,
            "eta_inner_y": cfg.penalty.eta_inner_y,
            "eta_inner_lambda": cfg.penalty.eta_inner_lambda,
            "max_epochs": cfg.penalty.max_outer,
            "val_tol": cfg.val_tol,
            "ridge_b": cfg.svm.ridge_b,
            "b_lambda": cfg.svm.b_lambda,
            "fractions": [cfg.svm.split_fractions.0, cfg.svm.split_fractions.1, cfg.svm.split_fractions.2],
            "standardize": cfg.svm.standardize,
            "base_seed": cfg.base_seed,
        },
        "timing": { "written_at_unix": unix_now() },
    });
    validate_against_schema(&serde_json::from_str(SVM_SUMMARY_SCHEMA)?, &summary)
        .map_err(Error::Data)?;
    let summary_json = out.join("svm_summary.json");
    write_json(&summary_json, &summary)?;
    Ok(SvmArtifacts {
        per_seed_csv,
        summary_json,
        mean_test_accuracy: mean,
        std_test_accuracy: var.sqrt(),
        results,
    })
}

// ---------------------------------------------------------------------------
// cmd_list
// ---------------------------------------------------------------------------

/// Catalog listing: name, constraint regime, default gamma and step size.
pub fn cmd_list() -> String {
    let mut out = String::from("built-in problems:\n");
    for e in catalog() {
        let regime = if e.coupled { " (coupled)" } else { "" };
        out.push_str(&format!(
            "  {:<22} gamma={:<6} eta={:<6} {}\n",
            format!("{}{}", e.name, regime),
            e.default_gamma,
            e.default_eta_outer,
            e.blurb
        ));
    }
    out.push_str("\ndatasets: `pbgd svm` trains on a CSV file or the synthetic fallback\n");
    out
}

// ---------------------------------------------------------------------------
// JSON schema validation (the subset the shipped schemas use)
// ---------------------------------------------------------------------------

/// Validate `doc` against a schema supporting: `type` (string or list),
/// `required`, `properties`, `items`, `enum`, `additionalProperties`.
pub fn validate_against_schema(schema: &Value, doc: &Value) -> std::result::Result<(), String> {
    validate_node(schema, doc, "$")
}

fn type_matches(ty: &str, doc: &Value) -> bool {
    match ty {
        "object" => doc.is_object(),
        "array" => doc.is_array(),
        "string" => doc.is_string(),
        "number" => doc.is_number(),
        "integer" => doc.is_i64() || doc.is_u64(),
        "boolean" => doc.is_boolean(),
        "null" => doc.is_null(),
        _ => false,
    }
}

fn validate_node(schema: &Value, doc: &Value, path: &str) -> std::result::Result<(), String> {
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(s) => type_matches(s, doc),
            Value::Array(options) => options
                .iter()
                .filter_map(|t| t.as_str())
                .any(|t| type_matches(t, doc)),
            _ => return Err(format!("{path}: malformed schema 'type'")),
        };
        if !ok {
            return Err(format!("{path}: type mismatch (expected {ty}, got {doc})"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(|e| e.as_array()) {
        if !options.contains(doc) {
            return Err(format!("{path}: value {doc} not in enum"));
        }
    }
    if let Some(obj) = doc.as_object() {
        if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !obj.contains_key(key) {
                    return Err(format!("{path}: missing required field '{key}'"));
                }
            }
        }
        let props = schema.get("properties").and_then(|p| p.as_object());
        if let Some(props) = props {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate_node(sub, v, &format!("{path}.{key}"))?;
                }
            }
        }
        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
            for key in obj.keys() {
                if props.map(|p| !p.contains_key(key)).unwrap_or(true) {
                    return Err(format!("{path}: unexpected field '{key}'"));
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), doc.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate_node(items, v, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("pbgd_harness_{tag}_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn config_parser_sections_types_and_unknown_keys() {
        let dir = tmp_dir("cfg");
        let path = dir.join("a.conf");
        std::fs::write(
            &path,
            "# comment\nproblem = example1\ngamma = 10\n[inner]\nstop = tol\ntol = 1e-9\n",
        )
        .unwrap();
        let cfg = ConfigFile::parse(&path).unwrap();
        assert_eq!(cfg.require_str("problem").unwrap(), "example1");
        assert_eq!(cfg.f64_or("gamma", 0.0).unwrap(), 10.0);
        assert_eq!(cfg.str_or("inner.stop", "x"), "tol");
        assert_eq!(cfg.f64_or("inner.tol", 0.0).unwrap(), 1e-9);
        cfg.finish().unwrap();

        let path2 = dir.join("b.conf");
        std::fs::write(&path2, "problem = example1\nnot_a_key = 3\n").unwrap();
        let cfg2 = ConfigFile::parse(&path2).unwrap();
        cfg2.require_str("problem").unwrap();
        let err = cfg2.finish().unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("not_a_key"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn config_parser_rejects_garbage_lines_and_duplicates() {
        let dir = tmp_dir("cfg2");
        let path = dir.join("c.conf");
        std::fs::write(&path, "problem example1\n").unwrap();
        assert!(matches!(
            ConfigFile::parse(&path).err(),
            Some(Error::Config { line: 1, .. })
        ));
        std::fs::write(&path, "a = 1\na = 2\n").unwrap();
        assert!(matches!(
            ConfigFile::parse(&path).err(),
            Some(Error::Config { line: 2, .. })
        ));
    }

    #[test]
    fn run_config_checks_algorithm_regime() {
        let dir = tmp_dir("regime");
        let path = dir.join("r.conf");
        std::fs::write(&path, "problem = example2\nalgorithm = alt\n").unwrap();
        assert!(matches!(
            RunConfig::from_file(&path).err(),
            Some(Error::Unsupported(_))
        ));
        std::fs::write(&path, "problem = example1\nalgorithm = blocc\n").unwrap();
        assert!(matches!(
            RunConfig::from_file(&path).err(),
            Some(Error::Unsupported(_))
        ));
    }

    #[test]
    fn list_mentions_regimes_and_defaults() {
        let text = cmd_list();
        assert!(text.contains("example2 (coupled)"));
        let ex3 = text.lines().find(|l| l.contains("example3")).unwrap();
        assert!(ex3.contains("gamma=15"), "{ex3}");
    }

    #[test]
    fn schema_validator_accepts_and_rejects() {
        let schema: Value = serde_json::from_str(RUN_SUMMARY_SCHEMA).unwrap();
        let good = json!({
            "terminal": "converged",
            "iterations": 10,
            "final_gg_metric": 1e-5,
            "final_x": [0.5],
            "wall_ms": 1.5,
            "config": {},
            "timing": {"written_at_unix": 1.0},
        });
        validate_against_schema(&schema, &good).unwrap();
        let mut bad = good.clone();
        bad["terminal"] = json!("exploded");
        assert!(validate_against_schema(&schema, &bad).is_err());
        let mut missing = good.clone();
        missing.as_object_mut().unwrap().remove("final_x");
        assert!(validate_against_schema(&schema, &missing).is_err());
        let mut extra = good;
        extra["surprise"] = json!(1);
        assert!(validate_against_schema(&schema, &extra).is_err());
    }

    #[test]
    fn run_writes_artifacts_and_valid_summary() {
        let dir = tmp_dir("run");
        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "problem = bias\nalgorithm = alt\ngamma = 10\neta_outer = 0.05\n\
             max_outer = 200\nouter_tol = 1e-8\nx0 = 0\n",
        )
        .unwrap();
        let art = cmd_run(&path, Some(&dir.join("out"))).unwrap();
        assert_eq!(art.terminal, Terminal::Converged);
        let csv = std::fs::read_to_string(&art.trajectory_csv).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "t,x_norm,gg_metric,g_t_norm,inner_steps,wall_ms,x0");
        assert!(!csv.contains('\r'), "LF line endings only");
        let summary: Value =
            serde_json::from_str(&std::fs::read_to_string(&art.summary_json).unwrap()).unwrap();
        assert_eq!(summary["terminal"], "converged");
        assert!((summary["final_x"][0].as_f64().unwrap() + 5.0).abs() < 1e-2);
    }

    #[test]
    fn rerun_is_byte_identical_without_timing() {
        let dir = tmp_dir("det");
        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "problem = example1\nalgorithm = alt\ngamma = 10\neta_outer = 0.1\n\
             max_outer = 60\nouter_tol = 0\nseed = 3\n",
        )
        .unwrap();
        let a = cmd_run(&path, Some(&dir.join("a"))).unwrap();
        let b = cmd_run(&path, Some(&dir.join("b"))).unwrap();
        let ca = csv_without_timing(&a.trajectory_csv).unwrap();
        let cb = csv_without_timing(&b.trajectory_csv).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn probe_rejects_empty_grid() {
        let dir = tmp_dir("probe");
        let path = dir.join("p.conf");
        std::fs::write(
            &path,
            "problem = bias\ngammas = 10\ngrid.min = -1\ngrid.max = 1\ngrid.points = 0\n",
        )
        .unwrap();
        assert!(matches!(
            cmd_probe(&path, Some(&dir.join("out"))).err(),
            Some(Error::Config { .. })
        ));
    }

    #[test]
    fn probe_handles_coupled_problems() {
        let dir = tmp_dir("probe_cc");
        let path = dir.join("p.conf");
        std::fs::write(
            &path,
            "problem = example2\ngammas = 10\ngrid.min = 0.5\ngrid.max = 2.5\ngrid.points = 3\n",
        )
        .unwrap();
        let art = cmd_probe(&path, Some(&dir.join("out"))).unwrap();
        assert_eq!(art.rows, 3);
        let text = std::fs::read_to_string(&art.probe_csv).unwrap();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            // Active constraint keeps y_g = y_gamma = x up to O(1/gamma)
            // differences; the gap column must be small and finite.
            let solution_gap: f64 = f[5].parse().unwrap();
            assert!(solution_gap.is_finite() && solution_gap < 0.1, "{line}");
            let probe: f64 = f[8].parse().unwrap();
            assert!(probe.is_finite(), "{line}");
        }
    }

    #[test]
    fn probe_gap_columns_follow_the_bias_law() {
        let dir = tmp_dir("probe2");
        let path = dir.join("p.conf");
        std::fs::write(
            &path,
            "problem = bias\ngammas = 10,100\ngrid.min = -6\ngrid.max = 1\ngrid.points = 15\n\
             c_mod = 0.5\nalpha = 1.5\n",
        )
        .unwrap();
        let art = cmd_probe(&path, Some(&dir.join("out"))).unwrap();
        assert_eq!(art.rows, 30);
        let text = std::fs::read_to_string(&art.probe_csv).unwrap();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let gamma: f64 = f[0].parse().unwrap();
            let solution_gap: f64 = f[5].parse().unwrap();
            assert!(
                (solution_gap - 5.0 / gamma).abs() < 1e-6,
                "row {line}: gap {solution_gap}"
            );
        }
    }
}
