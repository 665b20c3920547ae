//! `gossip-clt`: command-line driver for the solver, the samplers and the
//! three studies.
//!
//! Exit codes: 0 success, 1 configuration error (including bad arguments),
//! 2 resource error, 3 a failed threshold under `--check`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gossip_clt::cmj::{sample_w, CmjParams};
use gossip_clt::experiment::{
    clt_experiment, collapse_experiment, fmt_f64, hex_digest, read_config, variance_study,
    write_outputs, Check, CltConfig, CollapseConfig, Manifest, Rate, VarianceConfig, VERSION,
};
use gossip_clt::gossip::{GossipState, SeedLineage};
use gossip_clt::laplace::{solve_phi_fixed_point, GridSpec, SolverOptions};
use gossip_clt::par::{map_indexed, with_threads};
use gossip_clt::rng::{check_distinct, stage, stream};
use gossip_clt::stats::summarize;
use gossip_clt::torus::TorusSpec;
use gossip_clt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gossip-clt",
    version,
    about = "Continuum gossip process simulator and CLT studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the Laplace transform of W and write the grid cache.
    PhiSolve(Common),
    /// Draw samples of the branching-process limit W.
    CmjSample(Common),
    /// Run one gossip trajectory and record coverage at checkpoints.
    GossipRun(Common),
    /// Conditional central limit study.
    Clt(Common),
    /// Unconditional curve-collapse study.
    Collapse(Common),
    /// Conditional variance scaling study.
    Variance(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Exact arc-union coverage instead of probes (d = 1).
    #[arg(long)]
    exact_d1: bool,
    /// Exit with status 3 if any threshold check fails.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiSolveConfig {
    d: usize,
    #[serde(default)]
    theta_min: Option<f64>,
    #[serde(default)]
    theta_max: Option<f64>,
    #[serde(default)]
    nodes: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CmjSampleConfig {
    d: usize,
    #[serde(flatten)]
    rate: Rate,
    samples: usize,
    /// Horizon `λT` of each draw.
    #[serde(default = "default_horizon")]
    horizon: f64,
    master_seed: u64,
    #[serde(default)]
    threads: Option<usize>,
}

fn default_horizon() -> f64 {
    12.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GossipRunConfig {
    d: usize,
    #[serde(flatten)]
    rate: Rate,
    system_size: f64,
    u_values: Vec<f64>,
    #[serde(default = "default_probes")]
    probes: usize,
    #[serde(default)]
    exact_d1: bool,
    master_seed: u64,
    #[serde(default)]
    replicate: u64,
    /// Also write `snapshot.gsnp` at the last checkpoint.
    #[serde(default)]
    snapshot: bool,
    #[serde(default)]
    threads: Option<usize>,
}

fn default_probes() -> usize {
    100_000
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(checks) => report(&checks),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_resource() || matches!(e, Error::Io(_)) {
                2
            } else {
                1
            })
        }
    }
}

/// Prints the checks and returns the exit code for the run.
fn report(checks: &(bool, Vec<Check>)) -> ExitCode {
    let (enforce, checks) = checks;
    for c in checks {
        println!(
            "{} {}: {} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    if *enforce && checks.iter().any(|c| !c.pass) {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(command: Command) -> Result<(bool, Vec<Check>)> {
    match command {
        Command::PhiSolve(a) => phi_solve(&a).map(|c| (a.check, c)),
        Command::CmjSample(a) => cmj_sample(&a).map(|c| (a.check, c)),
        Command::GossipRun(a) => gossip_run(&a).map(|c| (a.check, c)),
        Command::Clt(a) => {
            let mut config: CltConfig = read_config(&a.config)?;
            override_common(
                &a,
                &mut config.master_seed,
                &mut config.threads,
                &mut config.exact_d1,
            );
            let result = clt_experiment(&config)?;
            let manifest = result.manifest();
            write_outputs(&a.out, &result.to_csv(), &manifest)?;
            eprintln!(
                "gate: {} attempts, accepted seed {}, w_hat = {:.4}",
                result.gate.attempts, result.gate.accepted_seed, result.gate.w_hat
            );
            Ok((a.check, manifest.checks))
        }
        Command::Collapse(a) => {
            let mut config: CollapseConfig = read_config(&a.config)?;
            override_common(
                &a,
                &mut config.master_seed,
                &mut config.threads,
                &mut config.exact_d1,
            );
            let result = collapse_experiment(&config)?;
            let manifest = result.manifest();
            write_outputs(&a.out, &result.to_csv(), &manifest)?;
            Ok((a.check, manifest.checks))
        }
        Command::Variance(a) => {
            let mut config: VarianceConfig = read_config(&a.config)?;
            override_common(
                &a,
                &mut config.master_seed,
                &mut config.threads,
                &mut config.exact_d1,
            );
            let result = variance_study(&config)?;
            let manifest = result.manifest();
            write_outputs(&a.out, &result.to_csv(), &manifest)?;
            Ok((a.check, manifest.checks))
        }
    }
}

fn override_common(a: &Common, seed: &mut u64, threads: &mut Option<usize>, exact: &mut bool) {
    if let Some(s) = a.seed {
        *seed = s;
    }
    if a.threads.is_some() {
        *threads = a.threads;
    }
    *exact |= a.exact_d1;
}

fn manifest(
    command: &str,
    config: &impl Serialize,
    lambda: f64,
    seed: u64,
    threads: Option<usize>,
) -> Manifest {
    Manifest {
        command: command.into(),
        version: VERSION.into(),
        config: serde_json::to_value(config).unwrap_or_default(),
        lambda,
        master_seed: seed,
        stages: Vec::new(),
        threads,
        phi_cache_sha256: None,
        wall_time_secs: 0.0,
        summary: serde_json::Value::Null,
        checks: Vec::new(),
    }
}

fn phi_solve(a: &Common) -> Result<Vec<Check>> {
    let config: PhiSolveConfig = read_config(&a.config)?;
    let start = Instant::now();
    let defaults = GridSpec::default();
    let spec = GridSpec {
        theta_min: config.theta_min.unwrap_or(defaults.theta_min),
        theta_max: config.theta_max.unwrap_or(defaults.theta_max),
        n: config.nodes.unwrap_or(defaults.n),
    };
    let opts = SolverOptions {
        tol: config.tol.unwrap_or(SolverOptions::default().tol),
        ..SolverOptions::default()
    };
    let grid = solve_phi_fixed_point(config.d, spec, opts).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::Config(m),
        e => e,
    })?;
    std::fs::create_dir_all(&a.out)?;
    let path = cache_path(&a.out, config.d);
    let text = grid.to_cache_string();
    std::fs::write(&path, &text)?;

    let target = gossip_clt::laplace::limit_second_moment(config.d);
    let m2 = grid.second_moment();
    let checks = vec![
        Check::new(
            "fixed-point residual",
            grid.residual,
            format!("<= {:e}", grid.tol),
            grid.residual <= grid.tol,
        ),
        Check::new(
            "E W^2 relative error",
            (m2 / target - 1.0).abs(),
            "<= 1e-3",
            (m2 / target - 1.0).abs() <= 1e-3,
        ),
    ];
    let mut m = manifest("phi-solve", &config, 1.0, 0, None);
    m.phi_cache_sha256 = Some(hex_digest(text.as_bytes()));
    m.wall_time_secs = start.elapsed().as_secs_f64();
    m.summary = serde_json::json!({
        "cache": path.display().to_string(),
        "iterations": grid.iterations,
        "residual": grid.residual,
        "second_moment": m2,
        "interp_tol": grid.interp_tol(),
    });
    m.checks = checks.clone();
    let mut csv = String::from("theta,phi\n");
    for (t, v) in grid.thetas.iter().zip(&grid.values) {
        csv.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*v)));
    }
    write_outputs(&a.out, &csv, &m)?;
    eprintln!("wrote {}", path.display());
    Ok(checks)
}

fn cache_path(dir: &Path, d: usize) -> PathBuf {
    dir.join(format!("phi_d{d}.txt"))
}

fn cmj_sample(a: &Common) -> Result<Vec<Check>> {
    let mut config: CmjSampleConfig = read_config(&a.config)?;
    let mut unused = false;
    override_common(a, &mut config.master_seed, &mut config.threads, &mut unused);
    let start = Instant::now();
    let lambda = config.rate.resolve(config.d)?;
    if config.samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    if !(config.horizon > 0.0 && config.horizon.is_finite()) {
        return Err(Error::Config(format!(
            "horizon must be positive, got {}",
            config.horizon
        )));
    }
    let params = CmjParams::with_lambda(config.d, lambda).map_err(config_error)?;
    check_distinct(config.master_seed, stage::CMJ, config.samples as u64)?;
    let ws = with_threads(config.threads, || {
        map_indexed(config.samples, |i| {
            sample_w(
                &params,
                config.horizon,
                &mut stream(config.master_seed, i as u64, stage::CMJ),
            )
        })
    })?;
    let s = summarize(&ws)?;
    let z = (s.mean - 1.0) / s.se_mean;
    let checks = vec![
        Check::new("E W = 1 (z-score)", z, "|z| <= 4", z.abs() <= 4.0),
        Check::new(
            "Var W",
            s.variance,
            "<= 1 + 4 SE",
            s.variance <= 1.0 + 4.0 * s.se_variance,
        ),
    ];
    let mut csv = String::from("sample,w\n");
    for (i, w) in ws.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", fmt_f64(*w)));
    }
    let mut m = manifest(
        "cmj-sample",
        &config,
        lambda,
        config.master_seed,
        config.threads,
    );
    m.stages = vec![("cmj".into(), stage::CMJ)];
    m.wall_time_secs = start.elapsed().as_secs_f64();
    m.summary = serde_json::to_value(s).unwrap_or_default();
    m.checks = checks.clone();
    write_outputs(&a.out, &csv, &m)?;
    Ok(checks)
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) => Error::Config(m),
        Error::UnsupportedDimension(d) => Error::Config(format!("unsupported dimension {d}")),
        e => e,
    }
}

fn gossip_run(a: &Common) -> Result<Vec<Check>> {
    let mut config: GossipRunConfig = read_config(&a.config)?;
    override_common(
        a,
        &mut config.master_seed,
        &mut config.threads,
        &mut config.exact_d1,
    );
    let start = Instant::now();
    let lambda = config.rate.resolve(config.d)?;
    if config.exact_d1 && config.d != 1 {
        return Err(Error::Config(
            "exact coverage is only available for d = 1".into(),
        ));
    }
    if config.u_values.is_empty() || config.probes == 0 {
        return Err(Error::Config(
            "need at least one u value and one probe".into(),
        ));
    }
    let spec =
        TorusSpec::for_system_size(config.d, lambda, config.system_size).map_err(config_error)?;
    let mut us = config.u_values.clone();
    us.sort_by(f64::total_cmp);
    us.dedup();
    let times: Vec<f64> = us
        .iter()
        .map(|u| (config.system_size.ln() + u) / lambda)
        .collect();
    if times[0] <= 0.0 || times[times.len() - 1] > spec.wrap_radius() {
        return Err(Error::Config(
            "checkpoints must lie in (0, wrap radius]".into(),
        ));
    }

    let r = config.replicate;
    let lineage = SeedLineage {
        master_seed: config.master_seed,
        replicate: r,
        stage: stage::FULL_RUN,
    };
    let mut state = GossipState::new(
        spec,
        lambda,
        stream(config.master_seed, r, stage::FULL_RUN),
        lineage,
    )?;
    let mut probes = stream(config.master_seed, r, stage::PROBES);
    let mut csv = String::from("u,t,coverage,probe_se,n_kept,m_kept,n_all,m_all\n");
    let mut k = 0;
    state.run_with_checkpoints(&times, |st, t| {
        let (cov, se) = if config.exact_d1 {
            (st.coverage_exact(t)?, 0.0)
        } else {
            st.coverage_fraction(t, config.probes, &mut probes)?
        };
        let ps = st.process_stats(t)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(us[k]),
            fmt_f64(t),
            fmt_f64(cov),
            fmt_f64(se),
            ps.n_kept,
            fmt_f64(ps.m_kept),
            ps.n_all,
            fmt_f64(ps.m_all)
        ));
        k += 1;
        Ok(())
    })?;
    std::fs::create_dir_all(&a.out)?;
    let mut m = manifest(
        "gossip-run",
        &config,
        lambda,
        config.master_seed,
        config.threads,
    );
    m.stages = vec![
        ("full_run".into(), stage::FULL_RUN),
        ("probes".into(), stage::PROBES),
    ];
    if config.snapshot {
        let snap = state.snapshot();
        snap.write_to(&a.out.join("snapshot.gsnp"))?;
        m.summary = serde_json::json!({ "records": state.records().len(), "snapshot_hash": format!("{:016x}", snap.hash()) });
    } else {
        m.summary = serde_json::json!({ "records": state.records().len() });
    }
    m.wall_time_secs = start.elapsed().as_secs_f64();
    write_outputs(&a.out, &csv, &m)?;
    Ok(Vec::new())
}
