//! Command-line experiment runner: resolves a configuration, writes a
//! manifest, dispatches into the solver library, and writes reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (non-finite state), 4 I/O error. Failures print a machine-readable JSON
//! object on stderr.

mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spde::{
    holder_estimate, moment_check, strong_error_spatial, strong_error_temporal, Discretization,
    ErrorTime, InitialDatum, ModelSpec, NoiseLattice, Result, SnapshotPolicy, SpdeError,
    SpectralPlan, Stepper,
};

use config::{parse_lag, resolve, Overrides, Resolved};
use output::{fmt_f64, run_dir, write_json, write_manifest, write_rates_csv, write_table_csv};

#[derive(Parser)]
#[command(
    name = "spde",
    version,
    about = "Strong-convergence experiments for a stochastic heat equation solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coupled temporal or spatial refinement study.
    Convergence(ConvergenceArgs),
    /// Simulate one trajectory and dump its snapshots.
    Path(PathArgs),
    /// Pathwise time-regularity (structure-function) estimate.
    Holder(HolderArgs),
    /// Second-moment boundedness across spatial resolutions.
    Moments(MomentsArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Flat key=value configuration file (flags override it).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in model: paper-ex | heat | linear-additive.
    #[arg(long)]
    model: Option<String>,
    /// Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Base seed for the per-sample noise streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Moment exponent: errors are reported as (E e^p)^{1/p}.
    #[arg(long)]
    p: Option<u32>,
    /// Final time T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Reference spatial resolution (modes).
    #[arg(long)]
    n_ref: Option<usize>,
    /// Reference (finest) time-step count.
    #[arg(long)]
    k_ref: Option<usize>,
    /// Brownian modes driving the noise.
    #[arg(long)]
    j_modes: Option<usize>,
    /// Quadrature points per retained mode.
    #[arg(long)]
    m_factor: Option<usize>,
    /// Initial datum: power-law | zero | e<k> (e.g. e1).
    #[arg(long)]
    datum: Option<String>,
    /// Use the full-size study defaults (double resolution, 200 samples).
    #[arg(long)]
    paper_scale: bool,
    /// Base output directory; a per-run subdirectory is created inside.
    /// Overrides the SPDE_OUT_DIR environment variable.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Worker threads for sample-level parallelism (0 = all cores).
    /// Results are identical for every thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Diffusion amplitude for the linear-additive model (ignored otherwise).
    #[arg(long)]
    sigma: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            model: self.model.clone(),
            horizon: self.horizon,
            n_ref: self.n_ref,
            k_ref: self.k_ref,
            j_modes: self.j_modes,
            samples: self.samples,
            p: self.p,
            seed: self.seed,
            m_factor: self.m_factor,
            datum: match &self.datum {
                Some(text) => Some(InitialDatum::parse(text)?),
                None => None,
            },
            outdir: self.outdir.clone(),
            threads: self.threads,
            sigma: self.sigma,
            ..Overrides::default()
        })
    }

    fn resolve(&self, extra: impl FnOnce(&mut Overrides) -> Result<()>) -> Result<Resolved> {
        let mut flags = self.overrides()?;
        extra(&mut flags)?;
        resolve(self.config.as_deref(), self.paper_scale, &flags)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Axis {
    Temporal,
    Spatial,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Temporal => "temporal",
            Axis::Spatial => "spatial",
        }
    }
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Refinement axis.
    #[arg(long, value_enum)]
    mode: Axis,
    /// Where the error is measured: final | sup-over-grid.
    #[arg(long)]
    error_time: Option<String>,
    /// Coarse step counts for the temporal sweep (comma-separated).
    #[arg(long, value_delimiter = ',')]
    sweep_k: Option<Vec<usize>>,
    /// Coarse resolutions for the spatial sweep (comma-separated).
    #[arg(long, value_delimiter = ',')]
    sweep_n: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct PathArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Snapshot stride in steps (default keeps roughly 256 rows).
    #[arg(long)]
    every: Option<usize>,
    /// Sample index within the seed's stream family.
    #[arg(long, default_value_t = 0)]
    sample: u64,
    /// Also evaluate the field at this many uniform interior grid points.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct HolderArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Lag times, comma-separated; plain floats or dyadic `2^-k`.
    #[arg(long, value_delimiter = ',')]
    lags: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spatial resolutions to check (comma-separated).
    #[arg(long, value_delimiter = ',')]
    sweep_n: Option<Vec<usize>>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convergence(args) => cmd_convergence(args),
        Command::Path(args) => cmd_path(args),
        Command::Holder(args) => cmd_holder(args),
        Command::Moments(args) => cmd_moments(args),
    };
    if let Err(err) = outcome {
        let code = match err.kind() {
            "non-finite" => 3,
            "io" => 4,
            _ => 2,
        };
        eprintln!(
            "{}",
            serde_json::json!({
                "error": { "kind": err.kind(), "message": err.to_string() }
            })
        );
        std::process::exit(code);
    }
}

fn init_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| SpdeError::Config(format!("building the worker pool: {e}")))
}

fn model_spec(resolved: &Resolved) -> Result<ModelSpec> {
    if resolved.cfg.model == "linear-additive" {
        Ok(ModelSpec::linear_additive(resolved.sigma))
    } else {
        ModelSpec::by_name(&resolved.cfg.model)
    }
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<()> {
    let resolved = args.common.resolve(|flags| {
        if let Some(text) = &args.error_time {
            flags.error_time = Some(ErrorTime::parse(text)?);
        }
        flags.sweep_k = args.sweep_k.clone().or(flags.sweep_k.take());
        flags.sweep_n = args.sweep_n.clone().or(flags.sweep_n.take());
        Ok(())
    })?;
    init_threads(resolved.threads)?;
    let model = model_spec(&resolved)?;
    let axis = args.mode.label();
    let dir = run_dir(&resolved.outdir_base, &resolved.cfg.model, axis, resolved.cfg.seed);
    std::fs::create_dir_all(&dir)?;
    let hash = write_manifest(
        &dir,
        "convergence",
        Some(axis),
        &resolved.cfg,
        resolved.sigma,
        resolved.threads,
    )?;
    let report = match args.mode {
        Axis::Temporal => strong_error_temporal(&resolved.cfg, &model)?,
        Axis::Spatial => strong_error_spatial(&resolved.cfg, &model)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_rates_csv(&dir, &report)?;
    match (report.fitted_rate, report.fit_residual) {
        (Some(rate), Some(residual)) => {
            println!("fitted rate: {rate:.4} (log-log residual {residual:.4})")
        }
        _ => println!("fitted rate: n/a (degenerate sweep)"),
    }
    println!("config hash: {hash}");
    println!("results: {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct PathSummary {
    model: String,
    n_modes: usize,
    k_steps: usize,
    horizon: f64,
    seed: u64,
    sample_index: u64,
    snapshot_stride: usize,
    snapshots: usize,
    final_norm: f64,
}

fn cmd_path(args: PathArgs) -> Result<()> {
    let resolved = args.common.resolve(|_| Ok(()))?;
    let cfg = &resolved.cfg;
    let model = model_spec(&resolved)?;
    let n = cfg.n_ref;
    let k = cfg.k_ref;
    let dir = run_dir(&resolved.outdir_base, &cfg.model, "path", cfg.seed);
    std::fs::create_dir_all(&dir)?;
    write_manifest(&dir, "path", None, cfg, resolved.sigma, resolved.threads)?;

    let stride = match args.every {
        Some(0) | None => (k / 256).max(1),
        Some(s) => s,
    };
    if cfg.m_factor * n < cfg.j_modes {
        return Err(SpdeError::Config(format!(
            "noise expansion ({} modes) does not fit the quadrature grid ({} points); \
             raise m_factor or n_ref, or lower j_modes",
            cfg.j_modes,
            cfg.m_factor * n
        )));
    }
    let disc = Discretization::new(n, k, cfg.horizon)?.with_quadrature(cfg.m_factor * n)?;
    let stepper = Stepper::new(&model, disc, cfg.j_modes)?;
    let lattice = NoiseLattice::generate(cfg.seed, args.sample, cfg.j_modes, k, cfg.horizon)?;
    let traj = stepper.simulate(
        &cfg.datum.coefficients(n),
        &lattice,
        SnapshotPolicy::Every(stride),
    )?;

    let coeff_header = std::iter::once("time".to_string())
        .chain((1..=n).map(|j| format!("c{j}")))
        .collect::<Vec<_>>()
        .join(",");
    let coeff_rows: Vec<Vec<f64>> = (0..traj.len())
        .map(|i| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(traj.time(i));
            row.extend_from_slice(traj.state(i));
            row
        })
        .collect();
    write_table_csv(&dir.join("path.csv"), &coeff_header, &coeff_rows)?;

    if let Some(points) = args.grid {
        if points < n {
            return Err(SpdeError::Config(format!(
                "grid evaluation needs at least as many points as modes ({points} < {n})"
            )));
        }
        let plan = SpectralPlan::new(points, n, 0)?;
        let field_header = std::iter::once("time".to_string())
            .chain((1..=points).map(|i| format!("u{i}")))
            .collect::<Vec<_>>()
            .join(",");
        let field_rows: Vec<Vec<f64>> = (0..traj.len())
            .map(|i| {
                let mut row = Vec::with_capacity(points + 1);
                row.push(traj.time(i));
                row.extend(plan.synthesize(traj.state(i)));
                row
            })
            .collect();
        write_table_csv(&dir.join("field.csv"), &field_header, &field_rows)?;
    }

    let summary = PathSummary {
        model: cfg.model.clone(),
        n_modes: n,
        k_steps: k,
        horizon: cfg.horizon,
        seed: cfg.seed,
        sample_index: args.sample,
        snapshot_stride: stride,
        snapshots: traj.len(),
        final_norm: spde::coeff_norm_sq(traj.final_state()).sqrt(),
    };
    write_json(&dir.join("report.json"), &summary)?;
    println!("final norm: {}", fmt_f64(summary.final_norm));
    println!("results: {}", dir.display());
    Ok(())
}

fn cmd_holder(args: HolderArgs) -> Result<()> {
    let resolved = args.common.resolve(|flags| {
        if let Some(list) = &args.lags {
            flags.holder_lags = Some(
                list.iter()
                    .map(|item| parse_lag(item))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        Ok(())
    })?;
    init_threads(resolved.threads)?;
    let model = model_spec(&resolved)?;
    let cfg = &resolved.cfg;
    let dir = run_dir(&resolved.outdir_base, &cfg.model, "holder", cfg.seed);
    std::fs::create_dir_all(&dir)?;
    write_manifest(&dir, "holder", None, cfg, resolved.sigma, resolved.threads)?;
    let report = holder_estimate(cfg, &model)?;
    write_json(&dir.join("report.json"), &report)?;
    let rows: Vec<Vec<f64>> = report
        .lags
        .iter()
        .zip(&report.structure)
        .map(|(lag, s)| vec![*lag, *s])
        .collect();
    write_table_csv(&dir.join("structure.csv"), "lag,structure", &rows)?;
    match report.exponent {
        Some(exponent) => println!("fitted exponent: {exponent:.4}"),
        None => println!("fitted exponent: n/a (degenerate structure)"),
    }
    println!("results: {}", dir.display());
    Ok(())
}

fn cmd_moments(args: MomentsArgs) -> Result<()> {
    let resolved = args.common.resolve(|flags| {
        flags.sweep_n = args.sweep_n.clone().or(flags.sweep_n.take());
        Ok(())
    })?;
    init_threads(resolved.threads)?;
    let model = model_spec(&resolved)?;
    let cfg = &resolved.cfg;
    let dir = run_dir(&resolved.outdir_base, &cfg.model, "moments", cfg.seed);
    std::fs::create_dir_all(&dir)?;
    write_manifest(&dir, "moments", None, cfg, resolved.sigma, resolved.threads)?;
    let report = moment_check(cfg, &model)?;
    write_json(&dir.join("report.json"), &report)?;

    let mut csv = String::from("n_modes,sup_second_moment,datum_norm_sq,ratio\n");
    for point in &report.points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            point.n_modes,
            fmt_f64(point.sup_second_moment),
            fmt_f64(point.datum_norm_sq),
            point.ratio.map(fmt_f64).unwrap_or_default()
        ));
    }
    std::fs::write(dir.join("moments.csv"), csv)?;

    let worst = report
        .points
        .iter()
        .filter_map(|p| p.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst.is_finite() {
        println!("worst moment ratio: {worst:.4}");
    } else {
        println!("worst moment ratio: n/a (zero datum)");
    }
    println!("results: {}", dir.display());
    Ok(())
}
