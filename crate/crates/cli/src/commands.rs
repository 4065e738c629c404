use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use riskscape::datagen::GenConfig;
use riskscape::experiments::{emit_plotdata, run_experiment, ExperimentConfig, ExperimentId};
use riskscape::landscape::{
    certify_strong_morse, find_critical_points, measure_constants, LandscapeReport, Region, SearchConfig,
};
use riskscape::models::EmpiricalRisk;
use riskscape::optim::{fit, IterateStorage};
use riskscape::oracle::{PopulationGrid, PopulationOracle};
use riskscape::par::Execution;
use riskscape::{Objective, ParamVec};
use serde_json::{json, Value};

use crate::config::{load, FitConfig, LandscapeConfig, OracleConfig};
use crate::{Cli, CliError, Command};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen => gen(cli),
        Command::Fit => fit_cmd(cli),
        Command::Landscape => landscape(cli),
        Command::Experiment { name, plotdata } => experiment(cli, name.as_deref(), *plotdata),
        Command::Oracle => oracle(cli),
    }
}

fn require_config(cli: &Cli) -> Result<&Path, CliError> {
    cli.config
        .as_deref()
        .ok_or_else(|| CliError::Config("this subcommand needs --config".into()))
}

fn config_err(e: riskscape::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn out_or(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(riskscape::Error::from)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(riskscape::Error::from)?;
    fs::write(path, text + "\n").map_err(riskscape::Error::from)?;
    Ok(())
}

fn vec_json(v: &ParamVec) -> Value {
    json!(v.as_slice())
}

fn gen(cli: &Cli) -> Result<(), CliError> {
    let mut cfg: GenConfig = load(require_config(cli)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(config_err)?;
    let (data, truth) = riskscape::datagen::generate(&cfg)?;
    let path = out_or(cli, "dataset.bin");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(riskscape::Error::from)?;
    }
    data.save(&path)?;
    let summary = json!({
        "path": path.display().to_string(),
        "family": cfg.family,
        "n": data.n(),
        "d": data.d(),
        "seed": cfg.seed,
        "truth": vec_json(&truth),
    });
    println!("{}", serde_json::to_string(&summary).map_err(riskscape::Error::from)?);
    Ok(())
}

fn fit_cmd(cli: &Cli) -> Result<(), CliError> {
    let mut cfg: FitConfig = load(require_config(cli)?)?;
    cfg.data.override_seed(cli.seed);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.data.check()?;
    cfg.model.validate().map_err(config_err)?;
    cfg.optimizer.validate().map_err(config_err)?;
    if cfg.inits == 0 {
        return Err(CliError::Config("inits must be at least 1".into()));
    }
    let (data, truth) = cfg.data.load()?;
    let mut opt = cfg.optimizer.clone();
    opt.storage = IterateStorage::All;
    let dim = data.param_dim();
    let inits = (0..cfg.inits)
        .map(|i| cfg.init.sample(dim, i, cfg.seed))
        .collect::<riskscape::Result<Vec<_>>>()
        .map_err(config_err)?;
    let runs = Execution::Parallel.map(inits, |init| fit(&cfg.model, &data, &init, &opt));

    let dir = out_or(cli, "fit");
    fs::create_dir_all(&dir).map_err(riskscape::Error::from)?;
    let mut results = Vec::new();
    let mut failures = 0;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(t) => {
                let file = fs::File::create(dir.join(format!("trajectory_{i}.csv"))).map_err(riskscape::Error::from)?;
                t.write_csv(std::io::BufWriter::new(file), truth.as_ref())?;
                results.push(json!({
                    "init": i,
                    "final_point": vec_json(&t.final_point),
                    "final_risk": t.final_risk(),
                    "final_grad_norm": t.final_grad_norm(),
                    "iterations": t.iterations(),
                    "stop": t.stop,
                    "error": truth.as_ref().map(|th| (&t.final_point - th).norm()),
                }));
            }
            Err(e) => {
                log::warn!("init {i} failed: {e}");
                failures += 1;
                results.push(json!({ "init": i, "error_message": e.to_string() }));
            }
        }
    }
    write_json(&dir.join("fit.json"), &json!({ "runs": results, "failures": failures }))?;
    if failures == cfg.inits {
        return Err(CliError::Partial {
            failures,
            attempts: cfg.inits,
            rate: 1.0,
            limit: 0.0,
        });
    }
    Ok(())
}

fn landscape(cli: &Cli) -> Result<(), CliError> {
    let mut cfg: LandscapeConfig = load(require_config(cli)?)?;
    cfg.data.override_seed(cli.seed);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.data.check()?;
    cfg.model.validate().map_err(config_err)?;
    if cfg.population && cfg.data.generate.is_none() {
        return Err(CliError::Config("a population reference needs generated data".into()));
    }
    let (data, truth) = cfg.data.load()?;
    let obj = EmpiricalRisk::new(&cfg.model, &data)?;
    let region = cfg
        .region
        .clone()
        .unwrap_or_else(|| Region::origin_ball(obj.dim(), cfg.model.radius));
    region.validate().map_err(config_err)?;
    let search = SearchConfig::new(cfg.starts, cfg.seed);
    let mut report = LandscapeReport::new(find_critical_points(&obj, &region, &search)?);
    if cfg.population {
        let law = cfg.data.generate.as_ref().expect("checked").law()?;
        let oracle = PopulationOracle::quadrature(cfg.model.clone(), law)?;
        report = report.with_reference(find_critical_points(&oracle, &region, &search)?);
    }
    if let Some(c) = &cfg.certificate {
        report.certificate = Some(certify_strong_morse(&obj, &region, &c.grid, c.epsilon, c.eta, Execution::Parallel)?);
    }
    if let Some(c) = &cfg.constants {
        let theta0 = truth.ok_or_else(|| CliError::Config("landscape constants need generated data".into()))?;
        report.constants = Some(measure_constants(&obj, &theta0, c.radius, c.points, cfg.seed, Execution::Parallel)?);
    }
    let path = out_or(cli, "landscape_report.json");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(riskscape::Error::from)?;
    }
    let file = fs::File::create(&path).map_err(riskscape::Error::from)?;
    report.write_json(std::io::BufWriter::new(file))?;
    Ok(())
}

fn experiment(cli: &Cli, name: Option<&str>, plotdata: bool) -> Result<(), CliError> {
    let mut cfg = match (&cli.config, name) {
        (Some(path), None) => ExperimentConfig::from_path(path).map_err(config_err)?,
        (None, Some(name)) => ExperimentConfig::preset(ExperimentId::parse(name).map_err(config_err)?),
        _ => return Err(CliError::Config("experiment needs exactly one of --config or --name".into())),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(config_err)?;
    let dir = out_or(cli, "results");
    let summary = run_experiment(&cfg, &dir)?;
    if plotdata {
        let curves: Vec<PathBuf> = summary
            .files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .cloned()
            .collect();
        emit_plotdata(&curves, &dir)?;
    }
    let mut stdout = std::io::stdout();
    for f in &summary.files {
        writeln!(stdout, "{}", f.display()).map_err(riskscape::Error::from)?;
    }
    if summary.partial {
        return Err(CliError::Partial {
            failures: summary.failures,
            attempts: summary.attempts,
            rate: summary.failure_rate,
            limit: cfg.max_failure_rate,
        });
    }
    Ok(())
}

fn oracle(cli: &Cli) -> Result<(), CliError> {
    let mut cfg: OracleConfig = load(require_config(cli)?)?;
    if let Some(s) = cli.seed {
        cfg.law.seed = s;
    }
    cfg.model.validate().map_err(config_err)?;
    if cfg.thetas.is_empty() {
        return Err(CliError::Config("oracle needs at least one theta".into()));
    }
    let law = cfg.law.law().map_err(config_err)?;
    let oracle = PopulationOracle::new(cfg.model.clone(), law.clone(), cfg.method).map_err(config_err)?;
    let thetas: Vec<ParamVec> = cfg.thetas.iter().map(|t| ParamVec::from_column_slice(t)).collect();
    if let Some(t) = thetas.iter().find(|t| t.len() != oracle.dim()) {
        return Err(CliError::Config(format!("theta has {} entries, expected {}", t.len(), oracle.dim())));
    }
    let mut points = Vec::new();
    for theta in &thetas {
        let est = oracle.risk_estimate(theta)?;
        let mut entry = json!({
            "theta": vec_json(theta),
            "risk": est.value,
            "std_error": est.std_error,
            "gradient": vec_json(&oracle.gradient(theta)?),
        });
        if cfg.hessian {
            let h = oracle.hessian(theta)?;
            let rows: Vec<Vec<f64>> = h.as_matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
            entry["hessian"] = json!(rows);
        }
        points.push(entry);
    }
    let mut doc = json!({ "points": points });
    if let Some(n) = cfg.gap_n {
        let data = law.sample(n, cfg.law.seed).map_err(config_err)?;
        let grid = PopulationGrid::new(&oracle, thetas)?;
        doc["gap"] = serde_json::to_value(grid.gap(&cfg.model, &data, Execution::Parallel)?).map_err(riskscape::Error::from)?;
    }
    match &cli.out {
        Some(path) => write_json(path, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc).map_err(riskscape::Error::from)?);
            Ok(())
        }
    }
}
