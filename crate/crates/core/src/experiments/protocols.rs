use serde_json::{json, Value};

use super::stats::{linear_fit, mean, median, ols, smooth3, std_dev, trimmed_mean, LinearFit};
use super::{Curve, ExperimentConfig, ExperimentId, ExperimentOutput, SeedRecord};
use crate::datagen::{generate, GenConfig, NoiseSpec, Theta0Spec};
use crate::error::Result;
use crate::landscape::{
    basin_stats, certify_strong_morse, find_critical_points, newton_polish, run_from_inits, spread_curve, GridSpec,
    InitLaw, LandscapeReport, Region, SearchConfig,
};
use crate::math::{derive_seed, label_key, ParamVec, StreamRng};
use crate::models::{gmm_swap, Dataset, EmpiricalRisk, Family, ModelSpec, Objective, RobustLoss};
use crate::optim::{minimize, IterateStorage, OptConfig};
use crate::oracle::{PopulationGrid, PopulationOracle};
use crate::par::Execution;

const TRIM: (f64, f64) = (0.05, 0.95);
/// Window used to read a geometric rate off a distance curve.
const RATE_HI: f64 = 1e-2;
const RATE_LO: f64 = 1e-10;
const RATE_BURN_IN: usize = 5;
const INIT_KEY: u64 = 1;

pub(super) fn run(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    match cfg.experiment {
        ExperimentId::Fig3a => fig3a(cfg, out),
        ExperimentId::Fig3b => fig3b(cfg, out),
        ExperimentId::Fig4a => fig4a(cfg, out),
        ExperimentId::Fig4b => fig4b(cfg, out),
        ExperimentId::Fig5 => fig5(cfg, out),
        ExperimentId::Fig6 => fig6(cfg, out),
        ExperimentId::Fig7 | ExperimentId::Fig8a => regression_spread(cfg, out),
        ExperimentId::Fig8b => fig8b(cfg, out),
        ExperimentId::Fig9a => fig9a(cfg, out),
        ExperimentId::Fig9b => fig9b(cfg, out),
        ExperimentId::MorseCert => morse_cert(cfg, out),
        ExperimentId::UnifConv => unif_conv(cfg, out),
    }
}

struct Job {
    sweep: usize,
    instance: usize,
    seed: u64,
    init_seed: u64,
}

/// Runs `f` for every (sweep, instance) pair in parallel and returns the
/// successes grouped by sweep, in instance order. Failures are logged and
/// counted.
fn run_jobs<T: Send>(
    cfg: &ExperimentConfig,
    out: &mut ExperimentOutput,
    sweeps: usize,
    f: impl Fn(&Job) -> Result<T> + Sync + Send,
) -> Vec<Vec<(usize, T)>> {
    let key = label_key(cfg.experiment.name());
    let jobs: Vec<Job> = (0..sweeps)
        .flat_map(|sweep| {
            (0..cfg.replications).map(move |instance| {
                let seed = derive_seed(cfg.seed, &[key, sweep as u64, instance as u64]);
                Job {
                    sweep,
                    instance,
                    seed,
                    init_seed: derive_seed(seed, &[INIT_KEY]),
                }
            })
        })
        .collect();
    for j in &jobs {
        out.seeds.push(SeedRecord {
            sweep: j.sweep,
            instance: j.instance,
            instance_seed: j.seed,
            init_seed: j.init_seed,
        });
    }
    out.attempts += jobs.len();
    let results = Execution::Parallel.map(jobs, |job| {
        let r = f(&job);
        (job, r)
    });
    let mut grouped: Vec<Vec<(usize, T)>> = (0..sweeps).map(|_| Vec::new()).collect();
    for (job, r) in results {
        match r {
            Ok(v) => grouped[job.sweep].push((job.instance, v)),
            Err(e) => {
                log::warn!(
                    "{} sweep {} instance {} failed: {e}",
                    cfg.experiment.name(),
                    job.sweep,
                    job.instance
                );
                out.failures += 1;
            }
        }
    }
    grouped
}

fn grid2<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

fn samples(ratio: f64, scale: f64) -> usize {
    ((ratio * scale).round() as usize).max(2)
}

fn values<T: Copy>(v: &[(usize, T)]) -> Vec<T> {
    v.iter().map(|(_, x)| *x).collect()
}

fn gd(cfg: &ExperimentConfig) -> OptConfig {
    let mut opt = OptConfig::gd(cfg.step, cfg.max_iters).with_radius(cfg.radius);
    opt.grad_tol = cfg.grad_tol;
    opt.step_halving = cfg.step_halving;
    opt
}

fn gaussian_init(cfg: &ExperimentConfig) -> InitLaw {
    InitLaw::Gaussian { var_factor: cfg.init_var }
}

fn classification_data(d: usize, n: usize, theta0: Theta0Spec, seed: u64) -> Result<(Dataset, ParamVec)> {
    generate(&GenConfig::new(Family::Classification, n, d, seed).with_theta0(theta0))
}

fn fit_json(fit: Option<LinearFit>) -> Value {
    match fit {
        Some(f) => json!({ "slope": f.slope, "intercept": f.intercept, "r2": f.r2, "points": f.points }),
        None => Value::Null,
    }
}

/// Distances from each iterate of one run to the point it converges to.
#[derive(Debug, Clone)]
pub struct DistanceRun {
    pub distances: Vec<f64>,
    pub minimizer: ParamVec,
}

/// Runs `opt` from `init`, storing every iterate, and measures distances to
/// the final point. With `polish` the final point is first refined by
/// damped Newton so that the reference is a critical point to machine
/// precision.
pub fn distance_curve<O: Objective + ?Sized>(obj: &O, init: &ParamVec, opt: &OptConfig, polish: bool) -> Result<DistanceRun> {
    let opt = opt.clone().with_storage(IterateStorage::All);
    let traj = minimize(obj, init, &opt)?;
    let minimizer = if polish {
        let p = newton_polish(obj, &traj.final_point, 100)?;
        if obj.gradient(&p)?.norm() <= obj.gradient(&traj.final_point)?.norm() {
            p
        } else {
            traj.final_point.clone()
        }
    } else {
        traj.final_point.clone()
    };
    let distances = traj.iterates.iter().map(|x| (x - &minimizer).norm()).collect();
    Ok(DistanceRun { distances, minimizer })
}

/// Line fit of `ln dist` against the step, over the steps after `burn_in`
/// where the distance has dropped to `hi` but not yet below `lo`.
pub fn log_linear_window(dist: &[f64], hi: f64, lo: f64, burn_in: usize) -> Option<LinearFit> {
    let start = (burn_in..dist.len()).find(|&k| dist[k] <= hi)?;
    let end = (start..dist.len()).rev().find(|&k| dist[k] >= lo)?;
    if end < start + 2 {
        return None;
    }
    let ks: Vec<f64> = (start..=end).map(|k| k as f64).collect();
    let ys: Vec<f64> = dist[start..=end].iter().map(|d| d.ln()).collect();
    linear_fit(&ks, &ys).ok()
}

/// Per-step trimmed means of distance and log distance across runs, each
/// run held at its last value once it stops.
fn trimmed_curves(runs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    let mut dist = Vec::with_capacity(len);
    let mut logd = Vec::with_capacity(len);
    for k in 0..len {
        let at: Vec<f64> = runs.iter().map(|r| r[k.min(r.len() - 1)]).collect();
        let logs: Vec<f64> = at.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
        dist.push(trimmed_mean(&at, TRIM.0, TRIM.1));
        logd.push(trimmed_mean(&logs, TRIM.0, TRIM.1));
    }
    (dist, logd)
}

fn fig3a(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let opt = gd(cfg);
    let law = gaussian_init(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, x) = sweeps[job.sweep];
        let n = samples(x, d as f64 * (d as f64).ln());
        let (data, _) = classification_data(d, n, Theta0Spec::Norm { norm: cfg.theta0_norm }, job.seed)?;
        let spec = ModelSpec::classification(cfg.radius);
        let runs = run_from_inits(&spec, &data, &opt.clone().with_storage(IterateStorage::FinalOnly), &law, cfg.inits, job.init_seed, Execution::Sequential)?;
        let st = basin_stats(&runs, cfg.radius);
        Ok((st.success, st.boundary_hits > 0))
    });
    let mut rate = Curve::new("success_rate", &["d", "x", "n"]);
    let mut boundary = Curve::new("boundary_rate", &["d", "x", "n"]);
    for (s, &(d, x)) in sweeps.iter().enumerate() {
        let n = samples(x, d as f64 * (d as f64).ln());
        let m = results[s].len();
        let frac = |hits: usize| if m == 0 { f64::NAN } else { hits as f64 / m as f64 };
        let p = frac(results[s].iter().filter(|(_, (ok, _))| *ok).count());
        let b = frac(results[s].iter().filter(|(_, (_, hit))| *hit).count());
        let disp = |p: f64| (m >= 2).then(|| (p * (1.0 - p) / m as f64).sqrt());
        rate.push(vec![d as f64, x, n as f64], p, disp(p), m);
        boundary.push(vec![d as f64, x, n as f64], b, disp(b), m);
    }
    let mut smooth = Curve::new("success_rate_smoothed", &["d", "x", "n"]);
    for chunk in rate.points.chunks(cfg.ratios.len()) {
        let vals: Vec<f64> = chunk.iter().map(|p| p.value).collect();
        for (p, v) in chunk.iter().zip(smooth3(&vals)) {
            smooth.push(p.coords.clone(), v, None, p.n_reps);
        }
    }
    out.curves.extend([rate, smooth, boundary]);
    Ok(())
}

fn fig3b(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let opt = gd(cfg).with_storage(IterateStorage::FinalOnly);
    let law = gaussian_init(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (data, theta0) = classification_data(d, samples(ratio, d as f64), Theta0Spec::Norm { norm: cfg.theta0_norm }, job.seed)?;
        let spec = ModelSpec::classification(cfg.radius);
        let init = law.sample(d, 0, job.init_seed)?;
        let t = crate::optim::fit(&spec, &data, &init, &opt)?;
        Ok((t.final_point - theta0).norm())
    });
    let mut curve = Curve::new("error", &["d", "n_over_d", "n"]);
    let mut pooled = (Vec::new(), Vec::new());
    let mut fits = serde_json::Map::new();
    for (di, &d) in cfg.dims.iter().enumerate() {
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for (ri, &ratio) in cfg.ratios.iter().enumerate() {
            let errs = values(&results[di * cfg.ratios.len() + ri]);
            let m = if errs.is_empty() { f64::NAN } else { mean(&errs) };
            curve.push(vec![d as f64, ratio, samples(ratio, d as f64) as f64], m, std_dev(&errs), errs.len());
            if m.is_finite() && m > 0.0 {
                lx.push(ratio.ln());
                ly.push(m.ln());
            }
        }
        fits.insert(d.to_string(), fit_json(linear_fit(&lx, &ly).ok()));
        pooled.0.extend(lx);
        pooled.1.extend(ly);
    }
    out.summary.insert("loglog_fit_by_d".into(), Value::Object(fits));
    out.summary.insert("loglog_fit_pooled".into(), fit_json(linear_fit(&pooled.0, &pooled.1).ok()));
    out.curves.push(curve);
    Ok(())
}

/// Per-sweep `(d, n/d)` with each replication's dimension and distance curve.
type ConvergenceRuns = (Vec<(usize, f64)>, Vec<Vec<(usize, Vec<f64>)>>);

fn convergence_runs(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> ConvergenceRuns {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let opt = gd(cfg);
    let law = gaussian_init(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (data, _) = classification_data(d, samples(ratio, d as f64), Theta0Spec::Norm { norm: cfg.theta0_norm }, job.seed)?;
        let spec = ModelSpec::classification(cfg.radius);
        let obj = EmpiricalRisk::new(&spec, &data)?;
        let init = law.sample(d, 0, job.init_seed)?;
        Ok(distance_curve(&obj, &init, &opt, true)?.distances)
    });
    (sweeps, results)
}

fn fig4a(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let (sweeps, results) = convergence_runs(cfg, out);
    distance_outputs(out, &sweeps, results);
    Ok(())
}

fn distance_outputs(out: &mut ExperimentOutput, sweeps: &[(usize, f64)], results: Vec<Vec<(usize, Vec<f64>)>>) {
    let mut dist_curve = Curve::new("distance", &["d", "n_over_d", "k"]);
    let mut log_curve = Curve::new("log_distance", &["d", "n_over_d", "k"]);
    let mut rates = Vec::new();
    for (s, &(d, ratio)) in sweeps.iter().enumerate() {
        let runs: Vec<Vec<f64>> = results[s].iter().map(|(_, r)| r.clone()).collect();
        if runs.is_empty() {
            continue;
        }
        let (dist, logd) = trimmed_curves(&runs);
        for (k, (a, b)) in dist.iter().zip(&logd).enumerate() {
            dist_curve.push(vec![d as f64, ratio, k as f64], *a, None, runs.len());
            log_curve.push(vec![d as f64, ratio, k as f64], *b, None, runs.len());
        }
        let geometric: Vec<f64> = logd.iter().map(|l| l.exp()).collect();
        let fit = log_linear_window(&geometric, RATE_HI, RATE_LO, RATE_BURN_IN);
        rates.push(json!({ "d": d, "n_over_d": ratio, "fit": fit_json(fit) }));
    }
    out.summary.insert("rate_window".into(), json!({ "hi": RATE_HI, "lo": RATE_LO, "burn_in": RATE_BURN_IN }));
    out.summary.insert("log_distance_fits".into(), Value::Array(rates));
    out.curves.extend([dist_curve, log_curve]);
}

fn fig4b(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let (sweeps, results) = convergence_runs(cfg, out);
    let mut curve = Curve::new("iterations", &["d", "n_over_d"]);
    let mut unreached = 0;
    for (s, &(d, ratio)) in sweeps.iter().enumerate() {
        let mut iters = Vec::new();
        for (_, dist) in &results[s] {
            match dist.iter().position(|&x| x <= cfg.target) {
                Some(k) => iters.push(k as f64),
                None => unreached += 1,
            }
        }
        let v = if iters.is_empty() { f64::NAN } else { trimmed_mean(&iters, TRIM.0, TRIM.1) };
        curve.push(vec![d as f64, ratio], v, std_dev(&iters), iters.len());
    }
    if unreached > 0 {
        log::warn!("fig4b: {unreached} runs never reached distance {}", cfg.target);
    }
    out.failures += unreached;
    out.summary.insert("target".into(), json!(cfg.target));
    out.curves.push(curve);
    Ok(())
}

/// Sample size and l1 weight of the sparse protocol.
fn sparse_design(cfg: &ExperimentConfig, d: usize, ratio: f64) -> (usize, f64) {
    let log2 = (d as f64).ln().powi(2);
    let mut n = samples(ratio, cfg.sparsity as f64 * log2);
    if let Some(cap) = cfg.max_n {
        n = n.min(cap);
    }
    (n, cfg.lambda_scale * (log2 / n as f64).sqrt())
}

fn proxgd(cfg: &ExperimentConfig, lambda: f64) -> OptConfig {
    let mut opt = OptConfig::proxgd(cfg.step, cfg.max_iters, lambda).with_radius(cfg.radius);
    opt.grad_tol = cfg.grad_tol;
    opt.step_halving = cfg.step_halving;
    opt
}

fn support(theta: &ParamVec) -> usize {
    theta.iter().filter(|v| **v != 0.0).count()
}

fn fig5(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let law = gaussian_init(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (n, lambda) = sparse_design(cfg, d, ratio);
        let (data, _) = classification_data(d, n, Theta0Spec::Sparse { s0: cfg.sparsity }, job.seed)?;
        let spec = ModelSpec::classification(cfg.radius).with_lambda(lambda);
        let opt = proxgd(cfg, lambda).with_storage(IterateStorage::All);
        let runs = run_from_inits(&spec, &data, &opt, &law, cfg.inits, job.init_seed, Execution::Sequential)?;
        let st = basin_stats(&runs, cfg.radius);
        let finished: Vec<_> = runs.into_iter().flatten().collect();
        let curve = spread_curve(&finished)?;
        let max_support = st.limits.iter().map(support).max().unwrap_or(0);
        Ok((curve.std, st.spread, max_support))
    });
    let mut curve = Curve::new("std", &["d", "n", "instance", "k"]);
    let mut per_instance = Vec::new();
    for (s, &(d, ratio)) in sweeps.iter().enumerate() {
        let (n, lambda) = sparse_design(cfg, d, ratio);
        for (inst, (std, final_spread, max_support)) in &results[s] {
            for (k, v) in std.iter().enumerate() {
                curve.push(vec![d as f64, n as f64, *inst as f64, k as f64], *v, None, cfg.inits);
            }
            per_instance.push(json!({
                "d": d, "n": n, "lambda": lambda, "instance": inst,
                "final_spread": final_spread, "max_support": max_support,
                "decay_fit": fit_json(log_linear_window(std, f64::INFINITY, 1e-12, 1)),
            }));
        }
    }
    out.summary.insert("instances".into(), Value::Array(per_instance));
    out.curves.push(curve);
    Ok(())
}

fn fig6(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let law = gaussian_init(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (n, lambda) = sparse_design(cfg, d, ratio);
        let (data, theta0) = classification_data(d, n, Theta0Spec::Sparse { s0: cfg.sparsity }, job.seed)?;
        let spec = ModelSpec::classification(cfg.radius).with_lambda(lambda);
        let obj = EmpiricalRisk::new(&spec, &data)?;
        let init = law.sample(d, 0, job.init_seed)?;
        let run = distance_curve(&obj, &init, &proxgd(cfg, lambda), false)?;
        let err = (&run.minimizer - theta0).norm();
        Ok((run.distances, err))
    });
    let mut dist_curve = Curve::new("distance", &["d", "n", "k"]);
    let mut err_curve = Curve::new("error", &["d", "ratio", "n"]);
    for (s, &(d, ratio)) in sweeps.iter().enumerate() {
        let (n, _) = sparse_design(cfg, d, ratio);
        let runs: Vec<Vec<f64>> = results[s].iter().map(|(_, (r, _))| r.clone()).collect();
        let errs: Vec<f64> = results[s].iter().map(|(_, (_, e))| *e).collect();
        if !runs.is_empty() {
            let (dist, _) = trimmed_curves(&runs);
            for (k, v) in dist.iter().enumerate() {
                dist_curve.push(vec![d as f64, n as f64, k as f64], *v, None, runs.len());
            }
        }
        let m = if errs.is_empty() { f64::NAN } else { mean(&errs) };
        err_curve.push(vec![d as f64, ratio, n as f64], m, std_dev(&errs), errs.len());
    }
    out.curves.extend([dist_curve, err_curve]);
    Ok(())
}

fn regression_data(d: usize, n: usize, norm: f64, noise: NoiseSpec, seed: u64) -> Result<(Dataset, ParamVec)> {
    generate(
        &GenConfig::new(Family::RobustRegression, n, d, seed)
            .with_theta0(Theta0Spec::Norm { norm })
            .with_noise(noise),
    )
}

/// Spread curves for robust regression; fig7 sweeps dimensions, fig8a the
/// contamination grid at the first dimension.
fn regression_spread(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let fig7 = cfg.experiment == ExperimentId::Fig7;
    let sweeps: Vec<(usize, f64, NoiseSpec, Vec<f64>)> = if fig7 {
        grid2(&cfg.dims, &cfg.ratios)
            .into_iter()
            .map(|(d, r)| (d, r, NoiseSpec::Gaussian { var: 1.0 }, vec![d as f64, samples(r, d as f64) as f64]))
            .collect()
    } else {
        let (d, r) = (cfg.dims[0], cfg.ratios[0]);
        grid2(&cfg.deltas, &cfg.sigma2)
            .into_iter()
            .map(|(delta, var)| (d, r, NoiseSpec::Contaminated { delta, var }, vec![delta, var]))
            .collect()
    };
    let law = gaussian_init(cfg);
    let opt = gd(cfg).with_storage(IterateStorage::All);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio, noise, _) = &sweeps[job.sweep];
        let (data, _) = regression_data(*d, samples(*ratio, *d as f64), cfg.theta0_norm, *noise, job.seed)?;
        let spec = ModelSpec::robust_regression(RobustLoss::default(), cfg.radius);
        let runs = run_from_inits(&spec, &data, &opt, &law, cfg.inits, job.init_seed, Execution::Sequential)?;
        let finished: Vec<_> = runs.into_iter().flatten().collect();
        Ok(spread_curve(&finished)?.std)
    });
    let coords: &[&str] = if fig7 { &["d", "n", "instance", "k"] } else { &["delta", "sigma2", "instance", "k"] };
    let mut curve = Curve::new("std", coords);
    let mut fits = Vec::new();
    for (s, (_, _, _, c)) in sweeps.iter().enumerate() {
        for (inst, std) in &results[s] {
            for (k, v) in std.iter().enumerate() {
                curve.push(vec![c[0], c[1], *inst as f64, k as f64], *v, None, cfg.inits);
            }
            fits.push(json!({ coords[0]: c[0], coords[1]: c[1], "instance": inst,
                "decay_fit": fit_json(log_linear_window(std, f64::INFINITY, 1e-12, 1)) }));
        }
    }
    out.summary.insert("decay_fits".into(), Value::Array(fits));
    out.curves.push(curve);
    Ok(())
}

fn fig8b(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.deltas, &cfg.sigma2);
    let (d, ratio) = (cfg.dims[0], cfg.ratios[0]);
    let n = samples(ratio, d as f64);
    let law = gaussian_init(cfg);
    let opt = gd(cfg).with_storage(IterateStorage::FinalOnly);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (delta, var) = sweeps[job.sweep];
        let (data, theta0) = regression_data(d, n, cfg.theta0_norm, NoiseSpec::Contaminated { delta, var }, job.seed)?;
        let spec = ModelSpec::robust_regression(RobustLoss::default(), cfg.radius);
        let init = law.sample(d, 0, job.init_seed)?;
        let tukey = crate::optim::fit(&spec, &data, &init, &opt)?.final_point;
        let ls = ols(&data)?;
        Ok(((tukey - &theta0).norm(), (ls - theta0).norm()))
    });
    let mut tukey = Curve::new("tukey_error", &["delta", "sigma2"]);
    let mut ls = Curve::new("ols_error", &["delta", "sigma2"]);
    for (s, &(delta, var)) in sweeps.iter().enumerate() {
        let t: Vec<f64> = results[s].iter().map(|(_, (a, _))| *a).collect();
        let o: Vec<f64> = results[s].iter().map(|(_, (_, b))| *b).collect();
        let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { mean(v) };
        tukey.push(vec![delta, var], avg(&t), std_dev(&t), t.len());
        ls.push(vec![delta, var], avg(&o), std_dev(&o), o.len());
    }
    out.summary.insert("d".into(), json!(d));
    out.summary.insert("n".into(), json!(n));
    out.curves.extend([tukey, ls]);
    Ok(())
}

fn gmm_data(cfg: &ExperimentConfig, d: usize, n: usize, seed: u64) -> Result<(Dataset, ParamVec)> {
    generate(&GenConfig::new(Family::Gmm2, n, d, seed).with_separation(cfg.separation))
}

/// Error up to relabeling of the two components.
fn gmm_error(theta: &ParamVec, truth: &ParamVec) -> f64 {
    (theta - truth).norm().min((gmm_swap(theta) - truth).norm())
}

fn fig9a(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let law = gaussian_init(cfg);
    let opt = gd(cfg).with_storage(IterateStorage::FinalOnly);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (data, truth) = gmm_data(cfg, d, samples(ratio, d as f64), job.seed)?;
        let spec = ModelSpec::gmm2(cfg.radius);
        let init = law.sample(2 * d, 0, job.init_seed)?;
        let t = crate::optim::fit(&spec, &data, &init, &opt)?;
        Ok(gmm_error(&t.final_point, &truth))
    });
    let mut curve = Curve::new("error", &["d", "n_over_d", "n"]);
    for (s, &(d, ratio)) in sweeps.iter().enumerate() {
        let errs = values(&results[s]);
        let m = if errs.is_empty() { f64::NAN } else { mean(&errs) };
        curve.push(vec![d as f64, ratio, samples(ratio, d as f64) as f64], m, std_dev(&errs), errs.len());
    }
    out.curves.push(curve);
    Ok(())
}

fn fig9b(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let sweeps = grid2(&cfg.dims, &cfg.ratios);
    let law = gaussian_init(cfg);
    let opt = gd(cfg);
    let results = run_jobs(cfg, out, sweeps.len(), |job| {
        let (d, ratio) = sweeps[job.sweep];
        let (data, _) = gmm_data(cfg, d, samples(ratio, d as f64), job.seed)?;
        let spec = ModelSpec::gmm2(cfg.radius);
        let obj = EmpiricalRisk::new(&spec, &data)?;
        let init = law.sample(2 * d, 0, job.init_seed)?;
        Ok(distance_curve(&obj, &init, &opt, true)?.distances)
    });
    distance_outputs(out, &sweeps, results);
    Ok(())
}

fn morse_cert(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let key = label_key(cfg.experiment.name());
    let d = cfg.dims[0];
    let law = GenConfig::new(Family::Gmm2, 0, d, derive_seed(cfg.seed, &[key, 0])).with_separation(cfg.separation).law()?;
    let spec = ModelSpec::gmm2(cfg.radius.max(10.0));
    let oracle = PopulationOracle::quadrature(spec.clone(), law.clone())?;
    let region = Region::origin_ball(2 * d, cfg.radius);
    let search = SearchConfig::new(40, derive_seed(cfg.seed, &[key, 1]));
    let population = find_critical_points(&oracle, &region, &search)?;

    let n = cfg.max_n.unwrap_or(10_000);
    let data = law.sample(n, derive_seed(cfg.seed, &[key, 2]))?;
    let emp = EmpiricalRisk::new(&spec, &data)?;
    let empirical = find_critical_points(&emp, &region, &search)?;

    let grid = GridSpec {
        per_axis: cfg.grid_points,
        seed: derive_seed(cfg.seed, &[key, 3]),
        ..GridSpec::default()
    };
    let mut eta = Curve::new("measured_eta", &["epsilon"]);
    let mut bdy = Curve::new("boundary_gradient", &["epsilon"]);
    let mut first = None;
    for &eps in &cfg.epsilons {
        out.attempts += 1;
        match certify_strong_morse(&oracle, &region, &grid, eps, 0.0, Execution::Parallel) {
            Ok(cert) => {
                eta.push(vec![eps], cert.measured_eta.unwrap_or(f64::NAN), None, cert.near_critical);
                bdy.push(vec![eps], cert.min_boundary_grad.unwrap_or(f64::NAN), None, cert.boundary_points);
                first.get_or_insert(cert);
            }
            Err(e) => {
                log::warn!("morse-cert: certificate at epsilon {eps} failed: {e}");
                out.failures += 1;
            }
        }
    }
    let mut report = LandscapeReport::new(empirical).with_reference(population);
    report.certificate = first;
    out.summary.insert("n".into(), json!(n));
    out.summary.insert("empirical_points".into(), json!(report.critical_points.len()));
    out.summary.insert("population_points".into(), json!(report.reference_points.len()));
    out.report = Some(report);
    out.curves.extend([eta, bdy]);
    Ok(())
}

fn unif_conv(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let key = label_key(cfg.experiment.name());
    let d = cfg.dims[0];
    let gen = GenConfig::new(Family::Classification, 0, d, derive_seed(cfg.seed, &[key, u64::MAX]))
        .with_theta0(Theta0Spec::Norm { norm: cfg.theta0_norm });
    let law = gen.law()?;
    let spec = ModelSpec::classification(cfg.radius);
    let oracle = PopulationOracle::quadrature(spec.clone(), law.clone())?;
    let mut rng = StreamRng::new(derive_seed(cfg.seed, &[key, u64::MAX - 1]), 0);
    let thetas = (0..cfg.grid_points).map(|_| rng.in_ball(&ParamVec::zeros(d), cfg.radius)).collect();
    let grid = PopulationGrid::new(&oracle, thetas)?;
    let sizes: Vec<usize> = cfg.ratios.iter().map(|&r| samples(r, d as f64)).collect();
    let results = run_jobs(cfg, out, sizes.len(), |job| {
        let data = law.sample(sizes[job.sweep], job.seed)?;
        let g = grid.gap(&spec, &data, Execution::Sequential)?;
        Ok((g.sup_grad_gap, g.sup_hess_gap))
    });
    let mut grad = Curve::new("grad_gap", &["n"]);
    let mut hess = Curve::new("hess_gap", &["n"]);
    for (s, &n) in sizes.iter().enumerate() {
        let g: Vec<f64> = results[s].iter().map(|(_, (a, _))| *a).collect();
        let h: Vec<f64> = results[s].iter().map(|(_, (_, b))| *b).collect();
        let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { median(v) };
        grad.push(vec![n as f64], med(&g), std_dev(&g), g.len());
        hess.push(vec![n as f64], med(&h), std_dev(&h), h.len());
    }
    let mut grad_ratio = Curve::new("grad_gap_ratio", &["n_small", "n_large"]);
    let mut hess_ratio = Curve::new("hess_gap_ratio", &["n_small", "n_large"]);
    for s in 1..sizes.len() {
        let (mut gr, mut hr) = (Vec::new(), Vec::new());
        for (inst, (g1, h1)) in &results[s] {
            if let Some((_, (g0, h0))) = results[s - 1].iter().find(|(i, _)| i == inst) {
                gr.push(g1 / g0);
                hr.push(h1 / h0);
            }
        }
        let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { median(v) };
        let c = vec![sizes[s - 1] as f64, sizes[s] as f64];
        grad_ratio.push(c.clone(), med(&gr), std_dev(&gr), gr.len());
        hess_ratio.push(c, med(&hr), std_dev(&hr), hr.len());
    }
    out.summary.insert("grid_points".into(), json!(grid.len()));
    out.curves.extend([grad, hess, grad_ratio, hess_ratio]);
    Ok(())
}
