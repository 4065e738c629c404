//! Config-driven sweeps that write CSV curves and a JSON manifest.
//!
//! Every experiment starts from a desk-scale preset; a config file only
//! needs to name the experiment and whatever fields it wants to override.
//! Instance seeds are derived from the master seed, the experiment name, the
//! sweep index and the instance index, and aggregation always runs in that
//! order, so output files do not depend on the number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::landscape::LandscapeReport;

mod protocols;
pub mod stats;

pub use protocols::{distance_curve, log_linear_window, DistanceRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "fig3a")]
    Fig3a,
    #[serde(rename = "fig3b")]
    Fig3b,
    #[serde(rename = "fig4a")]
    Fig4a,
    #[serde(rename = "fig4b")]
    Fig4b,
    #[serde(rename = "fig5")]
    Fig5,
    #[serde(rename = "fig6")]
    Fig6,
    #[serde(rename = "fig7")]
    Fig7,
    #[serde(rename = "fig8a")]
    Fig8a,
    #[serde(rename = "fig8b")]
    Fig8b,
    #[serde(rename = "fig9a")]
    Fig9a,
    #[serde(rename = "fig9b")]
    Fig9b,
    #[serde(rename = "morse-cert")]
    MorseCert,
    #[serde(rename = "unif-conv")]
    UnifConv,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 13] = [
        ExperimentId::Fig3a,
        ExperimentId::Fig3b,
        ExperimentId::Fig4a,
        ExperimentId::Fig4b,
        ExperimentId::Fig5,
        ExperimentId::Fig6,
        ExperimentId::Fig7,
        ExperimentId::Fig8a,
        ExperimentId::Fig8b,
        ExperimentId::Fig9a,
        ExperimentId::Fig9b,
        ExperimentId::MorseCert,
        ExperimentId::UnifConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig3a => "fig3a",
            ExperimentId::Fig3b => "fig3b",
            ExperimentId::Fig4a => "fig4a",
            ExperimentId::Fig4b => "fig4b",
            ExperimentId::Fig5 => "fig5",
            ExperimentId::Fig6 => "fig6",
            ExperimentId::Fig7 => "fig7",
            ExperimentId::Fig8a => "fig8a",
            ExperimentId::Fig8b => "fig8b",
            ExperimentId::Fig9a => "fig9a",
            ExperimentId::Fig9b => "fig9b",
            ExperimentId::MorseCert => "morse-cert",
            ExperimentId::UnifConv => "unif-conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment '{s}'")))
    }
}

/// All knobs of every protocol. Each experiment reads the subset it needs;
/// the meaning of `ratios` is per experiment (see [`ExperimentConfig::preset`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub replications: usize,
    pub inits: usize,
    pub dims: Vec<usize>,
    pub ratios: Vec<f64>,
    pub theta0_norm: f64,
    pub radius: f64,
    pub step: f64,
    pub step_halving: bool,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Inits are drawn from `N(0, init_var * I / p)`.
    pub init_var: f64,
    pub sparsity: usize,
    pub lambda_scale: f64,
    pub max_n: Option<usize>,
    pub deltas: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub separation: f64,
    pub target: f64,
    pub epsilons: Vec<f64>,
    pub grid_points: usize,
    /// Instance failure rate above which a run counts as partially failed.
    pub max_failure_rate: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults.
    ///
    /// `ratios` is `n / (d log d)` for fig3a, `n / (s0 log^2 d)` for fig5 and
    /// fig6, and `n / d` everywhere else. For morse-cert `grid_points` is the
    /// tensor grid size per axis, for unif-conv the number of parameter grid
    /// points.
    pub fn preset(experiment: ExperimentId) -> Self {
        let base = ExperimentConfig {
            experiment,
            seed: 2024,
            replications: 20,
            inits: 5,
            dims: vec![20],
            ratios: vec![20.0],
            theta0_norm: 1.0,
            radius: 3.0,
            step: 1.0,
            step_halving: false,
            max_iters: 10_000,
            grad_tol: 1e-8,
            init_var: 1.0,
            sparsity: 10,
            lambda_scale: 0.01,
            max_n: None,
            deltas: vec![0.1],
            sigma2: vec![100.0],
            separation: 1.5,
            target: 1e-4,
            epsilons: vec![0.05],
            grid_points: 200,
            max_failure_rate: 0.1,
        };
        match experiment {
            ExperimentId::Fig3a => ExperimentConfig {
                replications: 30,
                dims: vec![10, 20, 40],
                ratios: vec![0.5, 1.0, 2.0, 4.0, 8.0],
                theta0_norm: 3.0,
                radius: 9.0,
                grad_tol: 1e-7,
                ..base
            },
            ExperimentId::Fig3b => ExperimentConfig {
                dims: vec![10, 20, 40],
                ratios: vec![5.0, 10.0, 20.0, 40.0, 80.0],
                ..base
            },
            ExperimentId::Fig4a => ExperimentConfig {
                replications: 30,
                dims: vec![20, 40, 80],
                max_iters: 1000,
                grad_tol: 0.0,
                ..base
            },
            ExperimentId::Fig4b => ExperimentConfig {
                replications: 30,
                dims: vec![20, 40],
                ratios: vec![5.0, 10.0, 20.0, 40.0, 80.0],
                max_iters: 5000,
                grad_tol: 0.0,
                ..base
            },
            ExperimentId::Fig5 => ExperimentConfig {
                replications: 3,
                dims: vec![200],
                max_n: Some(4000),
                radius: 10.0,
                max_iters: 1500,
                grad_tol: 1e-12,
                ..base
            },
            ExperimentId::Fig6 => ExperimentConfig {
                replications: 10,
                dims: vec![200],
                ratios: vec![5.0, 10.0, 20.0],
                max_n: Some(4000),
                radius: 10.0,
                max_iters: 1500,
                grad_tol: 1e-12,
                ..base
            },
            ExperimentId::Fig7 => ExperimentConfig {
                replications: 3,
                dims: vec![40],
                ratios: vec![6.0],
                radius: 10.0,
                step_halving: true,
                max_iters: 2000,
                grad_tol: 1e-12,
                init_var: 25.0,
                ..base
            },
            ExperimentId::Fig8a => ExperimentConfig {
                replications: 3,
                dims: vec![40],
                ratios: vec![6.0],
                radius: 10.0,
                step_halving: true,
                max_iters: 2000,
                grad_tol: 1e-12,
                init_var: 25.0,
                deltas: vec![0.0, 0.1, 0.2, 0.3],
                ..base
            },
            ExperimentId::Fig8b => ExperimentConfig {
                dims: vec![40],
                ratios: vec![6.0],
                radius: 10.0,
                step_halving: true,
                init_var: 25.0,
                deltas: vec![0.05, 0.1, 0.2],
                sigma2: vec![1.0, 10.0, 100.0],
                ..base
            },
            ExperimentId::Fig9a => ExperimentConfig {
                dims: vec![1, 5, 10],
                ratios: vec![6.0, 12.0, 24.0, 48.0],
                radius: 10.0,
                step_halving: true,
                ..base
            },
            ExperimentId::Fig9b => ExperimentConfig {
                dims: vec![5, 10],
                ratios: vec![6.0],
                radius: 10.0,
                step_halving: true,
                max_iters: 500,
                grad_tol: 0.0,
                ..base
            },
            ExperimentId::MorseCert => ExperimentConfig {
                replications: 1,
                dims: vec![1],
                max_n: Some(10_000),
                epsilons: vec![0.01, 0.05, 0.1, 0.2],
                grid_points: 201,
                ..base
            },
            ExperimentId::UnifConv => ExperimentConfig {
                dims: vec![10],
                ratios: vec![25.0, 100.0, 400.0],
                ..base
            },
        }
    }

    /// Parses a TOML or JSON document and layers it over the preset named
    /// by its `experiment` field.
    pub fn from_str(text: &str, format: ConfigFormat) -> Result<Self> {
        let doc: Value = match format {
            ConfigFormat::Json => serde_json::from_str(text)?,
            ConfigFormat::Toml => {
                let t: toml::Table = toml::from_str(text)?;
                serde_json::to_value(t)?
            }
        };
        let Value::Object(fields) = doc else {
            return Err(Error::invalid("experiment config must be a table"));
        };
        let id = fields
            .get("experiment")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::invalid("experiment config needs an 'experiment' field"))?;
        let mut merged = serde_json::to_value(Self::preset(ExperimentId::parse(id)?))?;
        let slots = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in fields {
            slots.insert(k, v);
        }
        let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_str(&text, ConfigFormat::from_path(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("{}: {msg}", self.experiment.name())));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a non-empty list of positive integers");
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("ratios must be a non-empty list of positive numbers");
        }
        let positive = [
            ("theta0_norm", self.theta0_norm),
            ("radius", self.radius),
            ("step", self.step),
            ("separation", self.separation),
            ("target", self.target),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.init_var >= 0.0 && self.lambda_scale >= 0.0 && self.grad_tol >= 0.0) {
            return bad("init_var, lambda_scale and grad_tol must be nonnegative");
        }
        if self.deltas.iter().any(|d| !(0.0..1.0).contains(d)) {
            return bad("contamination fractions must lie in [0, 1)");
        }
        if self.sigma2.is_empty() || self.sigma2.iter().any(|s| !(*s > 0.0)) {
            return bad("outlier variances must be positive");
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0)) {
            return bad("epsilons must be positive");
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return bad("max_failure_rate must lie in [0, 1]");
        }
        if self.max_n == Some(0) || self.grid_points == 0 || self.max_iters == 0 {
            return bad("max_n, grid_points and max_iters must be positive");
        }
        let needs_inits = matches!(
            self.experiment,
            ExperimentId::Fig3a | ExperimentId::Fig5 | ExperimentId::Fig7 | ExperimentId::Fig8a
        );
        if needs_inits && self.inits < 2 {
            return bad("spread statistics need at least 2 inits");
        }
        if matches!(self.experiment, ExperimentId::Fig5 | ExperimentId::Fig6)
            && self.dims.iter().any(|&d| self.sparsity == 0 || self.sparsity > d)
        {
            return bad("sparsity must lie in 1..=d");
        }
        if matches!(self.experiment, ExperimentId::Fig8a | ExperimentId::Fig8b) && self.deltas.is_empty() {
            return bad("deltas must not be empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(ConfigFormat::Toml),
            Some("json") => Ok(ConfigFormat::Json),
            _ => Err(Error::invalid(format!("{}: config must end in .toml or .json", path.display()))),
        }
    }
}

/// One row of a curve: sweep coordinates, the statistic, its dispersion and
/// how many replications it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coords: Vec<f64>,
    pub value: f64,
    /// Standard deviation across replications; absent below two.
    pub dispersion: Option<f64>,
    pub n_reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub coord_names: Vec<String>,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn new(name: &str, coord_names: &[&str]) -> Self {
        Curve {
            name: name.to_string(),
            coord_names: coord_names.iter().map(|s| s.to_string()).collect(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, coords: Vec<f64>, value: f64, dispersion: Option<f64>, n_reps: usize) {
        debug_assert_eq!(coords.len(), self.coord_names.len());
        self.points.push(CurvePoint {
            coords,
            value,
            dispersion,
            n_reps,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for c in &self.coord_names {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{},dispersion,n_reps", self.name);
        for p in &self.points {
            for c in &p.coords {
                let _ = write!(s, "{c},");
            }
            let disp = p.dispersion.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{disp},{}", p.value, p.n_reps);
        }
        s
    }
}

/// Seeds behind one instance; inits use `derive_seed(init_seed, [i])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub sweep: usize,
    pub instance: usize,
    pub instance_seed: u64,
    pub init_seed: u64,
}

/// In-memory result of an experiment.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub curves: Vec<Curve>,
    pub summary: serde_json::Map<String, Value>,
    pub seeds: Vec<SeedRecord>,
    pub attempts: usize,
    pub failures: usize,
    pub report: Option<LandscapeReport>,
}

impl ExperimentOutput {
    pub fn failure_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.failures as f64 / self.attempts as f64
        }
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }
}

/// Runs the protocol without touching the file system.
pub fn compute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput::default();
    protocols::run(cfg, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub attempts: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Whether the failure rate exceeded `max_failure_rate`.
    pub partial: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    version: &'a str,
    threads: usize,
    wall_time_secs: f64,
    attempts: usize,
    failures: usize,
    files: Vec<String>,
    seeds: &'a [SeedRecord],
}

/// Runs the experiment and writes `<name>_<curve>.csv`, `<name>_summary.json`,
/// an optional `<name>_report.json` and `<name>_manifest.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let out = compute(cfg)?;
    let name = cfg.experiment.name();
    let mut files = Vec::new();
    for curve in &out.curves {
        let path = out_dir.join(format!("{name}_{}.csv", curve.name));
        fs::write(&path, curve.to_csv())?;
        files.push(path);
    }
    let path = out_dir.join(format!("{name}_summary.json"));
    fs::write(&path, serde_json::to_string_pretty(&out.summary)?)?;
    files.push(path);
    if let Some(report) = &out.report {
        let path = out_dir.join(format!("{name}_report.json"));
        report.write_json(fs::File::create(&path)?)?;
        files.push(path);
    }
    let manifest = Manifest {
        experiment: name,
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        threads: crate::par::current_threads(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        attempts: out.attempts,
        failures: out.failures,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        seeds: &out.seeds,
    };
    let path = out_dir.join(format!("{name}_manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    files.push(path);
    let failure_rate = out.failure_rate();
    Ok(RunSummary {
        files,
        attempts: out.attempts,
        failures: out.failures,
        failure_rate,
        partial: failure_rate > cfg.max_failure_rate,
    })
}

/// Gathers curve CSVs into one gnuplot-friendly file per figure. Each curve
/// becomes a section that starts with a `# <curve>` line; sections are
/// separated by two blank lines. The figure is the file name up to the
/// first underscore.
pub fn emit_plotdata(curve_files: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if curve_files.is_empty() {
        return Err(Error::invalid("no curve files given"));
    }
    let mut figures: Vec<(String, String)> = Vec::new();
    for path in curve_files {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("bad curve file name {}", path.display())))?;
        let text = fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        if text.trim().is_empty() {
            return Err(Error::invalid(format!("{} is empty", path.display())));
        }
        let (figure, curve) = stem.split_once('_').unwrap_or((stem, stem));
        let section = format!("# {curve}\n{}", text.trim_end());
        match figures.iter_mut().find(|(f, _)| f == figure) {
            Some((_, body)) => {
                body.push_str("\n\n\n");
                body.push_str(&section);
            }
            None => figures.push((figure.to_string(), section)),
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (figure, body) in figures {
        let path = out_dir.join(format!("{figure}_plotdata.csv"));
        fs::write(&path, body + "\n")?;
        written.push(path);
    }
    Ok(written)
}
