//! `dqw`: runs, ensembles, grid-size scans, distribution snapshots and plots
//! for the electric Dirac quantum walk search.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for
//! failures during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dqw_core::config::{load_config, parse_config};
use dqw_core::experiments::{run_snapshots, run_time_series, scaling_scan, SnapshotAt};
use dqw_core::io::{write_distribution, write_scan, write_series, FitMeta, GridFormat};
use dqw_core::observables::height_ratio;
use dqw_core::peaks::{detect_peaks, Peak};
use dqw_core::plot::{emit_plot, heatmap_svg, rescaled_series_svg, scaling_svg, write_svg, PlotKind, Rescale};
use dqw_core::{Error, ExperimentPlan, PeakRecord, Result};

#[derive(Parser)]
#[command(name = "dqw", version, about = "Electric Dirac quantum walk search experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; without one a noiseless M = 200 run is used.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's noise seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; 0 or unset uses all available cores.
    #[arg(long, global = true, env = "DQW_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One realization of the walk; writes its P_j series.
    Run {
        #[arg(long, default_value_t = 0)]
        realization: usize,
    },
    /// Noise-averaged P_j series.
    Ensemble,
    /// Scan over grid sizes: peaks per size, j2 scaling fit and plots.
    Scan {
        /// Comma-separated even grid sizes; defaults to the config's grid_size.
        #[arg(long, value_delimiter = ',', value_name = "CSV-LIST")]
        grid_sizes: Option<Vec<usize>>,
    },
    /// Ensemble-averaged distributions at the config's snapshot steps.
    Snapshot {
        /// Steps or j1/j2, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<String>>,
        /// Dense binary grids instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// SVG figure from previously written files.
    Plot {
        #[arg(long, value_parser = ["series", "rescaled_series", "scaling", "heatmap"])]
        kind: String,
        #[arg(long, default_value = "none", value_parser = ["none", "N", "logN"])]
        rescale: String,
        /// Output file name inside the output directory.
        #[arg(long)]
        name: Option<String>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load_plan(global: &Global) -> Result<ExperimentPlan> {
    let mut plan = match &global.config {
        Some(path) => load_config(path)?,
        None => parse_config("grid_size = 200\n")?,
    };
    if let Some(seed) = global.seed {
        plan.noise.master_seed = seed;
    }
    if let Some(out) = &global.out {
        plan.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(plan)
}

fn describe(peaks: &PeakRecord, nodes: usize) -> String {
    let part = |name: &str, p: Option<Peak<f64>>| match p {
        Some(p) => format!("{name} = {} (P = {:.6e}, P*N = {:.4})", p.step, p.probability, p.probability * nodes as f64),
        None => format!("{name} not found"),
    };
    format!("{}; {}", part("j1", peaks.first), part("j2", peaks.second))
}

fn run(cli: Cli) -> Result<()> {
    let plan = load_plan(&cli.global)?;
    let out = PathBuf::from(&plan.output_dir);
    let m = plan.template.size();

    match cli.command {
        Command::Run { realization } => {
            let j_max = plan.horizon_for(m);
            let series = run_time_series(&plan.template, &plan.noise, realization, j_max)?;
            let path = out.join(format!("series_M{m}_r{realization}.csv"));
            write_series(&series, &path, &plan)?;
            println!("{}: {}", path.display(), describe(&detect_peaks(&series, plan.peak_params), m * m));
        }
        Command::Ensemble => {
            let run = run_snapshots(&plan.template, &plan.noise, plan.horizon_for(m), &[], plan.peak_params)?;
            let path = out.join(format!("ensemble_M{m}.csv"));
            write_series(&run.series, &path, &plan)?;
            println!("{}: {}", path.display(), describe(&run.peaks, m * m));
        }
        Command::Scan { grid_sizes } => {
            let mut plan = plan;
            if let Some(sizes) = grid_sizes {
                plan.grid_sizes = sizes;
            }
            for &size in &plan.grid_sizes {
                plan.template.with_size(size)?;
            }
            let report = scaling_scan(&plan)?;
            for series in &report.series {
                write_series(series, out.join(format!("series_M{}.csv", series.size)), &plan)?;
            }
            let path = out.join("scan.csv");
            write_scan(&report, &path, &plan)?;
            let fit = report.fit.as_ref().map(|f| FitMeta {
                slope: f.slope,
                intercept: f.intercept,
                r_squared: f.r_squared,
            });
            write_svg(&scaling_svg(&report.rows, fit.as_ref()), out.join("scaling.svg"))?;
            write_svg(&rescaled_series_svg(&report.series, Rescale::N)?, out.join("series_N.svg"))?;
            write_svg(&rescaled_series_svg(&report.series, Rescale::LogN)?, out.join("series_logN.svg"))?;

            for row in &report.rows {
                println!("M = {}: {}", row.size, describe(&row.peaks, row.size * row.size));
            }
            match &report.fit {
                Some(f) => println!(
                    "j2 = {:.4} M + {:.2} (r^2 = {:.4})",
                    f.slope, f.intercept, f.r_squared
                ),
                None => println!("no fit (needs three sizes with a second peak)"),
            }
            if !report.excluded.is_empty() {
                println!("excluded from fit: {:?}", report.excluded);
            }
            println!("wrote {}", path.display());
        }
        Command::Snapshot { at, binary } => {
            let requests = match at {
                Some(list) => list
                    .iter()
                    .map(|s| match s.trim() {
                        "j1" => Ok(SnapshotAt::FirstPeak),
                        "j2" => Ok(SnapshotAt::SecondPeak),
                        other => other
                            .parse()
                            .map(SnapshotAt::Step)
                            .map_err(|_| Error::Config(format!("--at: expected j1, j2 or a step (got `{other}`)"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => plan.snapshots.clone(),
            };
            if requests.is_empty() {
                return Err(Error::Config("no snapshot steps: set `snapshots` in the config or pass --at".into()));
            }
            let format = if binary { GridFormat::Binary } else { GridFormat::Csv };
            let run = run_snapshots(&plan.template, &plan.noise, plan.horizon_for(m), &requests, plan.peak_params)?;
            write_series(&run.series, out.join(format!("ensemble_M{m}.csv")), &plan)?;
            println!("{}", describe(&run.peaks, m * m));
            let mut grids = Vec::new();
            for (request, snapshot) in &run.snapshots {
                let Some(snapshot) = snapshot else {
                    println!("{request}: peak not detected, no snapshot written");
                    continue;
                };
                let path = out.join(format!("dist_M{m}_j{}.{}", snapshot.step, format.extension()));
                write_distribution(snapshot, &path, format, &plan)?;
                let eta = height_ratio(snapshot);
                println!("{request}: {} (eta = {:.4})", path.display(), eta.value);
                grids.push(snapshot.clone());
            }
            if !grids.is_empty() {
                write_svg(&heatmap_svg(&grids)?, out.join(format!("heatmap_M{m}.svg")))?;
            }
        }
        Command::Plot {
            kind,
            rescale,
            name,
            inputs,
        } => {
            let kind: PlotKind = kind.parse()?;
            let rescale: Rescale = rescale.parse()?;
            let path = out.join(name.unwrap_or_else(|| format!("{}.svg", kind_name(kind))));
            emit_plot(kind, rescale, &inputs, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn kind_name(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::Series => "series",
        PlotKind::RescaledSeries => "rescaled_series",
        PlotKind::Scaling => "scaling",
        PlotKind::Heatmap => "heatmap",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.global.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
