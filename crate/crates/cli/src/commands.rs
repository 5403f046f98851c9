use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use memwalk::io::{fmt_f64, indexed, write_csv, write_histogram_csv, write_trajectory_csv};
use memwalk::models::SamplingPlan;
use memwalk::variational::decay_constant;
use memwalk::reference::{run_fig1, DEFAULT_BURN_IN, FULL_T_MAX};
use memwalk::{
    build_control_path, gamma_residual, mixing_rate, peak_location, radial_histogram,
    rho_closed_form, rho_numeric, simulate as simulate_trajectory, simulate_ensemble, stationarity_test,
    Perturbation,
};
use serde_json::json;

use crate::config::{fit_target, parse_config, ConfigError, RunConfig};
use crate::{Common, EXIT_RUNTIME, EXIT_VALIDATION};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// The config parsed but the model or run setup rejected it.
    Setup(memwalk::Error),
    Run(memwalk::Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Setup(_) => EXIT_VALIDATION,
            CliError::Run(_) | CliError::Io(..) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config: {e}"),
            CliError::Setup(e) => write!(f, "config: {e}"),
            CliError::Run(e) => write!(f, "run aborted: {e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn run<T>(r: memwalk::Result<T>) -> Result<T> {
    r.map_err(CliError::Run)
}

fn setup<T>(r: memwalk::Result<T>) -> Result<T> {
    r.map_err(CliError::Setup)
}

/// Loaded config with command-line overrides applied, and the output
/// directory it resolves to.
struct Job {
    config: RunConfig,
    out_dir: PathBuf,
}

fn load(common: &Common) -> Result<Job> {
    let (mut config, text) = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            (parse_config(&text).map_err(CliError::Config)?, text)
        }
        None => (RunConfig::default(), String::new()),
    };
    if let Some(seed) = common.seed {
        config.sim.seed = seed;
    }
    if let Some(alpha) = common.alpha {
        config.model.singular.kind = "coulomb-log".into();
        config.model.singular.coulomb_alpha = Some(alpha);
        config.model.singular.params.clear();
    }
    let t_max = if common.full { Some(FULL_T_MAX) } else { common.t_max };
    if let Some(t) = t_max {
        config.sim.t_max = t;
        if config.sim.burn_in >= t {
            config.sim.burn_in = 0.25 * t;
        }
    }
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("MEMWALK_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.out_dir));
    config.output.out_dir = out_dir.to_string_lossy().into_owned();
    config.check(&text).map_err(CliError::Config)?;
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(out_dir.clone(), e))?;
    write_file(&out_dir.join("effective_config.json"), |w| w.write_all(config.to_json().as_bytes()))?;
    Ok(Job { config, out_dir })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io = |e| CliError::Io(path.to_path_buf(), e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    f(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    write_file(path, |w| w.write_all(s.as_bytes()))
}

fn histogram_plot(job: &Job) -> Result<()> {
    if !job.config.output.emit_plots {
        return Ok(());
    }
    let script = "set datafile separator ','\n\
                  set xlabel 'r'\n\
                  set ylabel 'p(r)'\n\
                  set terminal pngcairo\n\
                  set output 'histogram.png'\n\
                  plot 'histogram.csv' using 1:2 skip 1 with steps notitle\n";
    write_file(&job.out_dir.join("histogram.gp"), |w| w.write_all(script.as_bytes()))
}

pub fn simulate(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let cfg = setup(job.config.sim())?;
    let traj = run(simulate_trajectory(&cfg))?;
    write_file(&job.out_dir.join("trajectory.csv"), |w| write_trajectory_csv(w, &traj))?;
    let pdf = run(radial_histogram(&traj, cfg.burn_in, job.config.analysis.bins))?;
    write_file(&job.out_dir.join("histogram.csv"), |w| write_histogram_csv(w, &pdf))?;
    let peak = run(peak_location(&pdf))?;
    let ks = run(stationarity_test(&traj, cfg.burn_in, job.config.analysis.split))?;
    write_json(
        &job.out_dir.join("summary.json"),
        &json!({
            "peak": peak,
            "stationarity": ks,
            "singularity_events": traj.events.singularity_count,
            "guarded_steps": traj.events.guarded_count,
        }),
    )?;
    histogram_plot(&job)?;
    println!(
        "peak r = {:.4}; KS D = {:.4} (critical {:.4}) {}",
        peak.radius,
        ks.statistic,
        ks.critical_value,
        if ks.passed { "stationary" } else { "not stationary" }
    );
    Ok(0)
}

pub fn ensemble(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let cfg = setup(job.config.sim())?;
    let obs = setup(job.config.observable(&cfg.model))?;
    let ens = run(simulate_ensemble(&cfg, job.config.sim.n_members, &[obs], common.threads))?;
    let header = ["t", "mean", "stderr", "n"].map(String::from);
    let rows = ens
        .times
        .iter()
        .zip(&ens.stats[0])
        .map(|(t, s)| [*t, s.mean, s.stderr(), s.n as f64]);
    write_file(&job.out_dir.join("ensemble.csv"), |w| write_csv(w, &header, rows))?;
    let aborted: Vec<_> = ens
        .aborted
        .iter()
        .map(|(i, e)| json!({"member": i, "error": e.to_string()}))
        .collect();
    write_json(
        &job.out_dir.join("summary.json"),
        &json!({
            "observable": ens.observables[0].name(),
            "n_members": ens.n_members,
            "completed": ens.completed(),
            "aborted": aborted,
            "singularity_events": ens.singularity_events,
        }),
    )?;
    println!("{} of {} members completed", ens.completed(), ens.n_members);
    Ok(0)
}

pub fn validate(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let model = setup(job.config.model())?;
    let plan = SamplingPlan {
        seed: job.config.sim.seed,
        p2: job.config.analysis.metric.p2,
        ..SamplingPlan::default()
    };
    let report = model.validate_assumptions(&plan);
    write_json(&job.out_dir.join("validation.json"), &report)?;
    for v in &report.verdicts {
        let status = match (v.passed, v.advisory) {
            (true, _) => "pass",
            (false, true) => "note",
            (false, false) => "FAIL",
        };
        println!("{status:4} {}: {}", v.condition, v.detail);
    }
    Ok(if report.passed() { 0 } else { EXIT_VALIDATION })
}

pub fn mixing(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let a_cfg = setup(job.config.sim())?;
    let mut b_cfg = a_cfg.clone();
    b_cfg.x0 = job.config.analysis.mixing.compare_x0.clone();
    b_cfg.initial_past = b_cfg.x0.clone();
    setup(b_cfg.validate())?;
    let obs = setup(job.config.observable(&a_cfg.model))?;
    let n = job.config.sim.n_members;
    let a = run(simulate_ensemble(&a_cfg, n, &[obs.clone()], common.threads))?;
    let b = run(simulate_ensemble(&b_cfg, n, &[obs.clone()], common.threads))?;
    let m = &job.config.analysis.mixing;
    let target = fit_target(&m.fit).expect("checked when the config was loaded");
    let fit = run(mixing_rate(&a, &b, &obs.name(), target, m.r2_threshold))?;
    let header = ["t", "d", "stderr"].map(String::from);
    let rows = (0..fit.times.len()).map(|k| [fit.times[k], fit.d[k], fit.stderr[k]]);
    write_file(&job.out_dir.join("mixing.csv"), |w| write_csv(w, &header, rows))?;
    write_json(
        &job.out_dir.join("mixing.json"),
        &json!({
            "c": fit.rate,
            "C": fit.prefactor,
            "r2": fit.r2,
            "verdict": fit.verdict,
            "target": fit.target,
            "fit_points": fit.fit_points,
            "terminal_within_noise": fit.terminal_within_noise,
        }),
    )?;
    match (fit.rate, fit.r2) {
        (Some(c), Some(r2)) => println!("c = {c:.4}, R^2 = {r2:.3} ({:?})", fit.verdict),
        _ => println!("no rate fitted ({:?})", fit.verdict),
    }
    Ok(0)
}

pub fn variational(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let model = setup(job.config.model())?;
    let v = &job.config.analysis.variational;
    let p2 = job.config.analysis.metric.p2;
    let xi = setup(Perturbation::new(v.xi_x.clone(), v.xi_v.clone()))?;
    let series = run(rho_numeric(&xi, v.rate_alpha, job.config.sim.dt, v.t_end, &model.kernel, p2))?;
    let d = xi.dim();
    let mut header = vec!["t".to_string()];
    header.extend(indexed("pi_x", d));
    header.extend(indexed("pi_v", d));
    header.push("eta_norm".into());
    header.extend(indexed("exact_x", d));
    header.extend(indexed("exact_v", d));
    let rows = (0..series.len()).map(|k| {
        let t = series.times[k];
        let (ex, ev) = rho_closed_form(&xi, v.rate_alpha, t);
        let mut row = vec![t];
        row.extend(&series.pi_x[k]);
        row.extend(&series.pi_v[k]);
        row.push(series.eta_norm[k]);
        row.extend(ex);
        row.extend(ev);
        row
    });
    write_file(&job.out_dir.join("variational.csv"), |w| write_csv(w, &header, rows))?;
    let sup = series.sup_error(&xi);
    write_json(
        &job.out_dir.join("summary.json"),
        &json!({
            "rate_alpha": v.rate_alpha,
            "sup_error": sup,
            "decay_constant": decay_constant(&xi, v.rate_alpha),
        }),
    )?;
    println!("sup |numeric - closed form| = {}", fmt_f64(sup));
    Ok(0)
}

pub fn control_path(common: &Common) -> Result<u8> {
    let job = load(common)?;
    let model = setup(job.config.model())?;
    let c = &job.config.analysis.control;
    let p2 = job.config.analysis.metric.p2;
    let path = run(build_control_path(&job.config.sim.x0, &c.v0, c.t, c.eps, c.r_target, p2))?;
    let gamma = run(gamma_residual(&path, &model, c.h))?;
    let samples = path.sample(c.h);
    let d = path.dim();
    let mut header = vec!["s".to_string()];
    header.extend(indexed("x", d));
    header.extend(indexed("v", d));
    header.extend(indexed("gamma", d));
    let rows = (0..samples.s.len()).map(|k| {
        let mut row = vec![samples.s[k]];
        row.extend(&samples.x[k]);
        row.extend(&samples.v[k]);
        row.extend(&gamma.gamma[k]);
        row
    });
    write_file(&job.out_dir.join("control_path.csv"), |w| write_csv(w, &header, rows))?;
    write_json(
        &job.out_dir.join("summary.json"),
        &json!({
            "case": path.case,
            "segments": path.segments,
            "eps": path.eps,
            "halvings": path.halvings,
            "integral": path.integral,
            "grid_integral": path.grid_integral(c.h),
            "min_clearance": path.min_clearance,
            "cutoff": path.cutoff,
            "gamma_residual": gamma.residual,
        }),
    )?;
    println!(
        "eps = {}, integral = {:.3e}, min |x| = {:.3e}, residual = {:.2e}",
        path.eps, path.integral, path.min_clearance, gamma.residual
    );
    Ok(0)
}

pub fn reproduce_fig1(common: &Common) -> Result<u8> {
    let mut common = common.clone();
    if common.config.is_none() && common.t_max.is_none() && !common.full {
        common.t_max = Some(memwalk::reference::DEFAULT_T_MAX);
    }
    let mut job = load(&common)?;
    if common.config.is_none() {
        let t = job.config.sim.t_max;
        job.config.sim.burn_in = if DEFAULT_BURN_IN < t { DEFAULT_BURN_IN } else { 0.25 * t };
        write_file(&job.out_dir.join("effective_config.json"), |w| {
            w.write_all(job.config.to_json().as_bytes())
        })?;
    }
    let cfg = setup(job.config.sim())?;
    let fig = run(run_fig1(&cfg, job.config.analysis.bins, job.config.analysis.split))?;
    write_file(&job.out_dir.join("trajectory.csv"), |w| write_trajectory_csv(w, &fig.trajectory))?;
    write_file(&job.out_dir.join("histogram.csv"), |w| write_histogram_csv(w, &fig.pdf))?;
    let summary = fig.summary();
    write_json(&job.out_dir.join("summary.json"), &summary)?;
    histogram_plot(&job)?;
    println!(
        "alpha = {}: peak r = {:.4} = {:.3} sqrt(alpha){}; KS D = {:.4} (critical {:.4})",
        summary.coulomb_alpha,
        summary.peak.radius,
        summary.peak_over_sqrt_alpha,
        if summary.peak.ambiguous { " (ambiguous)" } else { "" },
        summary.stationarity.statistic,
        summary.stationarity.critical_value,
    );
    Ok(0)
}
