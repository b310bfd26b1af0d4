use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beamsweep::config::{Config, Method};
use beamsweep::detection::{detect_targets, PeakEstimate};
use beamsweep::eval::{
    evaluate, format_table, report_json, run_comparison, scenario_catalog, select_scenarios, write_peaks_csv,
    write_report_csv, Pipeline, Scenario,
};
use beamsweep::ofdm::{range_doppler_periodogram, synthesize_csi, AmplitudeMap};
use beamsweep::ramp::{read_ramp, write_map_csv, write_ramp};
use beamsweep::{rng, Error, NafAngle, Result};

#[derive(Debug, Parser)]
#[command(name = "beamsweep", version, about = "Beam-sweep angular reconstruction and evaluation")]
struct Cli {
    /// TOML configuration; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in scenarios.
    Catalog {
        #[arg(long)]
        json: bool,
    },
    /// Simulate an oversampled sweep of one scenario and write the averaged field.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed_index: u64,
        /// Frames to average; defaults to the configured dwell.
        #[arg(long)]
        frames: Option<usize>,
        /// Also dump the full range-Doppler periodogram of one frame steered here.
        #[arg(long, allow_negative_numbers = true)]
        csi_steer: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a dense map from a RAMP sweep on the minimal or oversampled grid.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run CA-CFAR and peak search on a RAMP map.
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Peak CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of every method over the scenario catalog.
    Evaluate {
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long = "method", value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-method RAMP maps of seed 0 for each scenario.
        #[arg(long)]
        dump_maps: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let mut cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env()?;
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::from(e).context(format!("creating {}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::from(e).context(format!("creating {}", path.display())))
}

fn find_scenario(cfg: &Config, name: &str) -> Result<(u64, Scenario)> {
    scenario_catalog(&cfg.scene)
        .into_iter()
        .enumerate()
        .find(|(_, s)| s.name == name)
        .map(|(i, s)| (i as u64, s))
        .ok_or_else(|| Error::input(format!("unknown scenario '{name}'")))
}

fn write_peaks<W: Write>(peaks: &[PeakEstimate], mut out: W) -> Result<()> {
    writeln!(out, "peak_index,naf,range_m,power_db")?;
    for (i, p) in peaks.iter().enumerate() {
        writeln!(out, "{i},{:.6},{:.4},{:.3}", p.naf.0, p.range_m, 10.0 * p.power.log10())?;
    }
    out.flush()?;
    Ok(())
}

fn catalog(cfg: &Config, json: bool) -> Result<()> {
    let scenarios = scenario_catalog(&cfg.scene);
    let mut out = io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&scenarios)?)?;
        return Ok(());
    }
    writeln!(out, "{:<32}{:>10}{:>10}{:>10}{:>10}", "name", "sep_naf", "range_m", "amp_db", "wall")?;
    for s in &scenarios {
        writeln!(
            out,
            "{:<32}{:>10.3}{:>10.2}{:>10.1}{:>10}",
            s.name,
            s.separation_naf,
            s.range_m,
            s.amplitude_db,
            if s.rear_wall.is_some() { "yes" } else { "no" }
        )?;
    }
    Ok(())
}

fn simulate(
    cfg: &Config,
    name: &str,
    seed_index: u64,
    frames: Option<usize>,
    csi_steer: Option<f64>,
    out: &Path,
) -> Result<()> {
    let pipeline = Pipeline::new(cfg)?;
    let (idx, scenario) = find_scenario(cfg, name)?;
    let frames = frames.unwrap_or(cfg.sweep.dwell_frames);
    if frames == 0 {
        return Err(Error::input("--frames must be at least 1"));
    }
    let master = cfg.eval.master_seed;
    let mut scene_rng = rng::stream(master, &[idx, seed_index, u64::MAX]);
    let scene = scenario.scene(&mut scene_rng)?;
    let acq = pipeline.acquire(&scene, master, &[idx, seed_index], frames)?;
    let map = acq.field(0..frames)?.to_power()?;
    create_dir(out)?;
    write_ramp(&map, create(&out.join("sweep.ramp"))?)?;
    write_map_csv(&map, create(&out.join("sweep.csv"))?)?;
    if let Some(steer) = csi_steer {
        let seed = rng::derive_seed(master, &[idx, seed_index, u64::MAX - 1]);
        let csi = synthesize_csi(
            &pipeline.setup,
            &scene,
            NafAngle(steer),
            pipeline.noise_power(),
            seed,
            cfg.scene.mode,
        )?;
        let pg = range_doppler_periodogram(&cfg.radio, &csi)?;
        let mut w = create(&out.join("range_doppler.csv"))?;
        writeln!(w, "range_m,doppler_bin,power")?;
        for (r, range) in pg.range_axis().iter().enumerate() {
            for d in 0..pg.n_doppler {
                writeln!(w, "{range},{d},{}", pg.get(r, d))?;
            }
        }
        w.flush()?;
    }
    eprintln!(
        "{}: {} beams x {} range bins, {frames} frame(s) -> {}",
        scenario.name,
        map.n_angle(),
        map.n_range(),
        out.display()
    );
    Ok(())
}

fn reconstruct(cfg: &Config, input: &Path, method: Method, out: &Path, csv: Option<&Path>) -> Result<()> {
    let pipeline = Pipeline::new(cfg)?;
    let map = read_ramp(File::open(input).map_err(|e| Error::from(e).context(format!("opening {}", input.display())))?)?;
    let field = AmplitudeMap::from_power(&map);
    let result = if field.n_angle() == pipeline.minimal.len() {
        pipeline.estimate_minimal(&field, method)?
    } else {
        pipeline.estimate(&field, method)?
    };
    let dense = result.field.to_power()?;
    write_ramp(&dense, create(out)?)?;
    if let Some(path) = csv {
        write_map_csv(&dense, create(path)?)?;
    }
    write_peaks(&result.peaks, io::stdout().lock())
}

fn detect(cfg: &Config, input: &Path, out: Option<&Path>) -> Result<()> {
    let map = read_ramp(File::open(input).map_err(|e| Error::from(e).context(format!("opening {}", input.display())))?)?;
    let geometry = cfg.array.geometry()?;
    let detection = detect_targets(&AmplitudeMap::from_power(&map), &cfg.detection_config(&geometry)?)?;
    match out {
        Some(path) => write_peaks(&detection.peaks, create(path)?),
        None => write_peaks(&detection.peaks, io::stdout().lock()),
    }
}

fn run_evaluate(mut cfg: Config, args: EvaluateArgs) -> Result<()> {
    if let Some(n) = args.seeds {
        cfg.eval.n_seeds = n;
    }
    if let Some(s) = args.master_seed {
        cfg.eval.master_seed = s;
    }
    if !args.scenarios.is_empty() {
        cfg.eval.scenarios = args.scenarios;
    }
    if !args.methods.is_empty() {
        cfg.eval.methods = args.methods;
    }
    cfg.validate()?;
    let evaluation = evaluate(&cfg)?;
    create_dir(&args.out)?;
    let mut json = create(&args.out.join("report.json"))?;
    json.write_all(report_json(&evaluation.report)?.as_bytes())?;
    json.flush()?;
    write_report_csv(&evaluation.report, create(&args.out.join("report.csv"))?)?;
    write_peaks_csv(
        &evaluation.records,
        cfg.sweep.dwell_frames,
        create(&args.out.join("peaks.csv"))?,
    )?;
    if args.dump_maps {
        let pipeline = Pipeline::new(&cfg)?;
        let catalog = scenario_catalog(&cfg.scene);
        let maps_dir = args.out.join("maps");
        create_dir(&maps_dir)?;
        for scenario in select_scenarios(&cfg)? {
            let idx = catalog.iter().position(|c| c.name == scenario.name).unwrap_or(0) as u64;
            let comparison = run_comparison(&pipeline, &scenario, idx, &[0])?;
            for (method, map) in &comparison.maps {
                let path = maps_dir.join(format!("{}-{}.ramp", scenario.name, method));
                write_ramp(map, create(&path)?)?;
            }
        }
    }
    print!("{}", format_table(&evaluation.report));
    Ok(())
}

struct EvaluateArgs {
    seeds: Option<usize>,
    master_seed: Option<u64>,
    scenarios: Vec<String>,
    methods: Vec<Method>,
    out: PathBuf,
    dump_maps: bool,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Catalog { json } => catalog(&cfg, json),
        Command::Simulate {
            scenario,
            seed_index,
            frames,
            csi_steer,
            out,
        } => simulate(&cfg, &scenario, seed_index, frames, csi_steer, &out),
        Command::Reconstruct {
            input,
            method,
            out,
            csv,
        } => reconstruct(&cfg, &input, method, &out, csv.as_deref()),
        Command::Detect { input, out } => detect(&cfg, &input, out.as_deref()),
        Command::Evaluate {
            seeds,
            master_seed,
            scenarios,
            methods,
            out,
            dump_maps,
        } => run_evaluate(
            cfg,
            EvaluateArgs {
                seeds,
                master_seed,
                scenarios,
                methods,
                out,
                dump_maps,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
