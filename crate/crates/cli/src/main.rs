use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use jkfd::detector::{DetectorConfig, DetectorKind, NominalBank, ThresholdMethod};
use jkfd::dist::GridConfig;
use jkfd::harness::{
    bench_detectors, generate_scenario, generate_training_residuals, load_config, run_replay,
    run_world_sim, write_bench_csv, write_scenario_csv, write_timeline_csv, BenchConfig,
    FaultWindow, ReplayScenario, ScenarioConfig, WorldSimConfig,
};
use jkfd::overbound::{
    build_pgo, ccdf_table, cdf_table, fit_bgmm_em, gaussian_overbound, read_elevation_residuals,
    write_cdf_csv, write_elevation_residuals, ElevationBins, EmpiricalSample, FitMethod, ModelBank,
};

#[derive(Parser)]
#[command(
    name = "jkfd",
    version,
    about = "Jackknife and solution-separation GNSS fault detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worldwide detection-rate simulation with an injected bias.
    Simulate {
        /// JSON configuration; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// 10 degree grid, 5 minute epochs over one day.
        #[arg(long)]
        full_scale: bool,
    },
    /// Runs the detector over a scenario CSV and writes the detection timeline.
    Replay(ReplayArgs),
    /// Fits a Gaussian or PGO overbound to residual samples.
    FitOverbound {
        /// Single-column residual CSV, or `elevation_deg,residual_m` with --bins.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pgo")]
        method: FitMethod,
        /// Elevation bins as `lower:upper:width` degrees.
        #[arg(long, num_args = 0..=1, default_missing_value = "15:75:5")]
        bins: Option<String>,
        /// Output directory for model.json, cdf.csv and ccdf.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Rows in the CDF tables.
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
    /// Synthesizes a fault-free scenario CSV at one receiver.
    GenScenario {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write `elevation_deg,residual_m` training data for fit-overbound.
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        training_count: usize,
    },
    /// Times threshold computation of both detectors on identical epochs.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Model bank JSON written by fit-overbound.
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, default_value = "jk")]
    detector: DetectorKind,
    #[arg(long)]
    gridded: bool,
    /// Grid points per density; odd.
    #[arg(long, default_value_t = GridConfig::default().points)]
    points: usize,
    #[arg(long, requires_all = ["fault_start", "fault_end", "fault_bias"])]
    fault_sat: Option<u32>,
    #[arg(long)]
    fault_start: Option<f64>,
    #[arg(long)]
    fault_end: Option<f64>,
    #[arg(long)]
    fault_bias: Option<f64>,
    #[arg(long, default_value = "timeline.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            out,
            full_scale,
        } => simulate(config.as_deref(), &out, full_scale),
        Command::Replay(args) => replay(&args),
        Command::FitOverbound {
            input,
            method,
            bins,
            out,
            points,
        } => fit_overbound(&input, method, bins.as_deref(), &out, points),
        Command::GenScenario {
            config,
            out,
            training,
            training_count,
        } => gen_scenario(config.as_deref(), &out, training.as_deref(), training_count),
        Command::Bench { config, out } => bench(config.as_deref(), &out),
    }
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(T::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn simulate(config: Option<&Path>, out: &Path, full_scale: bool) -> Result<()> {
    let cfg = match (config, full_scale) {
        (None, true) => WorldSimConfig::full_scale(),
        (Some(_), true) => bail!("--full-scale and --config are exclusive"),
        (c, false) => config_or_default(c)?,
    };
    let report = run_world_sim(&cfg)?;
    report.write_outputs(out)?;
    for pair in &report.pairs {
        let s = &pair.summary;
        eprintln!(
            "{:?}/{}: median rate {}",
            s.detector,
            s.overbound,
            s.median_rate.map_or("n/a".into(), |r| format!("{r:.4}"))
        );
    }
    Ok(())
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let bank = ModelBank::load(&args.models)
        .with_context(|| format!("reading {}", args.models.display()))?;
    let grid = GridConfig::with_points(args.points);
    let nominal = NominalBank::new(bank, &grid)?;
    let fault = args.fault_sat.map(|sat_id| FaultWindow {
        sat_id,
        start_s: args.fault_start.unwrap_or_default(),
        end_s: args.fault_end.unwrap_or_default(),
        bias_m: args.fault_bias.unwrap_or_default(),
    });
    let scenario = ReplayScenario::from_csv_path(&args.scenario, fault)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let cfg = DetectorConfig {
        tau: args.tau,
        kind: args.detector,
        threshold: if args.gridded {
            ThresholdMethod::Gridded
        } else {
            ThresholdMethod::Auto
        },
        grid,
        ..DetectorConfig::default()
    };
    let report = run_replay(&scenario, &nominal, &cfg)?;
    write_timeline_csv(create(&args.out)?, &report.timeline)?;
    let summary = serde_json::json!({
        "first_detection_s": report.first_detection_s,
        "delay_s": report.delay_s,
        "false_alarm_epochs": report.false_alarm_epochs,
        "valid_epochs": report.valid_epochs,
        "epochs": report.timeline.len(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn parse_bins(spec: &str) -> Result<ElevationBins> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad --bins {spec:?}"))?;
    let [lower_deg, upper_deg, width_deg] = parts[..] else {
        bail!("--bins expects lower:upper:width, got {spec:?}");
    };
    let bins = ElevationBins {
        lower_deg,
        upper_deg,
        width_deg,
    };
    bins.validate()?;
    Ok(bins)
}

fn fit_overbound(
    input: &Path,
    method: FitMethod,
    bins: Option<&str>,
    out: &Path,
    points: usize,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let (bank, pooled) = match bins {
        Some(spec) => {
            let bins = parse_bins(spec)?;
            let data = read_elevation_residuals(File::open(input)?)
                .with_context(|| format!("reading {}", input.display()))?;
            let pooled = EmpiricalSample::new(data.iter().map(|d| d.1).collect())?;
            (ModelBank::fit(&data, method, bins)?, pooled)
        }
        None => {
            let sample = EmpiricalSample::from_csv_path(input)
                .with_context(|| format!("reading {}", input.display()))?;
            let model = jkfd::overbound::fit_model(&sample, method)?;
            (ModelBank::uniform(method, model), sample)
        }
    };
    bank.save(out.join("model.json"))?;

    // tables compare both overbounds on the pooled sample
    let sigma = gaussian_overbound(&pooled)?;
    let pgo = match fit_bgmm_em(&pooled).and_then(|b| build_pgo(&b)) {
        Ok(p) => Some(p),
        Err(e) if method == FitMethod::Gaussian => {
            eprintln!("no PGO column in the CDF tables: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let rows = cdf_table(&pooled, sigma, pgo.as_ref(), points);
    write_cdf_csv(create(&out.join("cdf.csv"))?, &rows)?;
    write_cdf_csv(create(&out.join("ccdf.csv"))?, &ccdf_table(&rows))?;
    println!("{}", bank.to_json()?);
    Ok(())
}

fn gen_scenario(
    config: Option<&Path>,
    out: &Path,
    training: Option<&Path>,
    training_count: usize,
) -> Result<()> {
    let cfg: ScenarioConfig = config_or_default(config)?;
    let records = generate_scenario(&cfg)?;
    write_scenario_csv(create(out)?, &records)?;
    if let Some(path) = training {
        let data =
            generate_training_residuals(&cfg.error, training_count, cfg.seed.wrapping_add(1))?;
        write_elevation_residuals(create(path)?, &data)?;
    }
    eprintln!("{} epochs written to {}", records.len(), out.display());
    Ok(())
}

fn bench(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: BenchConfig = config_or_default(config)?;
    let report = bench_detectors(&cfg)?;
    write_bench_csv(create(out)?, &report.rows)?;
    let summary = serde_json::json!({
        "epochs": report.rows.len(),
        "median_ratio": report.median_ratio,
        "median_jk_seconds": report.median_jk_seconds,
        "median_ss_seconds": report.median_ss_seconds,
        "max_jk_seconds": report.max_jk_seconds,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
