//! Batch commands behind the `lsvl` binary: world generation, map
//! precomputation, likelihood calibration, missions, seed sweeps and reports.

mod config;
mod error;
mod output;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lsvl_core::belief::{make_grid_spec, Extent};
use lsvl_core::map_store::{load_map, precompute, write_map, MapManifest, RasterMap};
use lsvl_core::measurement::{calibrate, CalibrationModel};
use lsvl_core::sim::{generate_world, run_mission, sample_calibration, MissionLog, MissionSummary, PerturbationConfig, WorldConfig, WorldPair};
use lsvl_core::{DescriptorMap32, GridSpec};

pub use config::{CameraSection, Likelihood, RunConfigFile, RunOverrides, WORLD_FLIGHT_RASTER, WORLD_MANIFEST, WORLD_MAP_RASTER};
pub use error::CliError;
pub use output::{config_hash, manifest_path, Manifest, VERSION};
pub use report::{cmd_report, recount_log, LogCount, Report, ReportArgs, ReportRow};

#[derive(Debug, Parser)]
#[command(name = "lsvl", version, about = "Global visual localization with a point mass filter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic map raster and its perturbed flight twin.
    Worldgen(WorldgenArgs),
    /// Precompute the descriptor map of a world.
    Precompute(PrecomputeArgs),
    /// Fit match/nonmatch distance histograms on a world.
    Calibrate(CalibrateArgs),
    /// Run one mission.
    Run(RunArgs),
    /// Run one mission per seed.
    Sweep(SweepArgs),
    /// Tabulate convergence statistics of sweeps.
    Report(ReportArgs),
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Worldgen(a) => cmd_worldgen(&a).map(|_| ()),
        Command::Precompute(a) => cmd_precompute(&a).map(|_| ()),
        Command::Calibrate(a) => cmd_calibrate(&a).map(|_| ()),
        Command::Run(a) => {
            let s = cmd_run(&a)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
            Ok(())
        }
        Command::Sweep(a) => {
            let s = cmd_sweep(&a)?;
            println!("p_c {:.2}  mean k_c {:?}  mean err {:?}", s.p_c, s.mean_k_c, s.mean_err_c);
            Ok(())
        }
        Command::Report(a) => {
            let r = cmd_report(&a)?;
            print!("{}", r.table());
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WorldgenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// East-west extent, meters.
    #[arg(long, default_value_t = 3000.0)]
    pub width: f64,
    /// North-south extent, meters.
    #[arg(long, default_value_t = 3000.0)]
    pub height: f64,
    /// Ground sampling distance, meters per pixel.
    #[arg(long, default_value_t = 2.0)]
    pub gsd: f64,
    /// Raster border beyond the extent, meters.
    #[arg(long, default_value_t = 100.0)]
    pub margin: f64,
    /// Make the flight raster an exact copy of the map raster.
    #[arg(long)]
    pub no_perturbation: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_worldgen(args: &WorldgenArgs) -> Result<Manifest<WorldConfig>, CliError> {
    let mut cfg = WorldConfig::new(args.seed, args.width, args.height, args.gsd);
    cfg.margin = args.margin;
    if args.no_perturbation {
        cfg.perturbation = PerturbationConfig::none();
    }
    let world = generate_world(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    save_raster(&world.map_raster, &args.out.join(WORLD_MAP_RASTER))?;
    save_raster(&world.flight_raster, &args.out.join(WORLD_FLIGHT_RASTER))?;
    let manifest = Manifest::new("worldgen", cfg, &[WORLD_MAP_RASTER, WORLD_FLIGHT_RASTER]);
    output::write_json_atomic(&args.out.join(WORLD_MANIFEST), &manifest)?;
    Ok(manifest)
}

fn save_raster(raster: &RasterMap, path: &Path) -> Result<(), CliError> {
    output::save_raster_atomic(raster, path)
}

/// Reads a `lsvl worldgen` output directory.
pub fn load_world(dir: &Path) -> Result<(WorldConfig, WorldPair), CliError> {
    let manifest: Manifest<WorldConfig> = output::read_json(&dir.join(WORLD_MANIFEST))?;
    let load = |name: &str| {
        let p = dir.join(name);
        RasterMap::load(&p).map_err(|e| CliError::map(&p, e))
    };
    let world = WorldPair {
        map_raster: load(WORLD_MAP_RASTER)?,
        flight_raster: load(WORLD_FLIGHT_RASTER)?,
    };
    Ok((manifest.config, world))
}

/// Grid over the world extent `[0, width] × [0, height]`.
pub fn world_grid(world: &WorldConfig, rxy: f64, ntheta: usize) -> Result<GridSpec, CliError> {
    make_grid_spec(Extent::new(0.0, world.width, 0.0, world.height), rxy, ntheta).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PrecomputeArgs {
    /// Output directory of `lsvl worldgen`.
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub rxy: f64,
    #[arg(long, default_value_t = 60)]
    pub ntheta: usize,
    #[arg(long = "D", default_value_t = 8)]
    pub d: usize,
    /// Patch side, meters.
    #[arg(long, default_value_t = 100.0)]
    pub w: f64,
    /// Patch resolution, meters per pixel.
    #[arg(long, default_value_t = 5.0)]
    pub out_res: f64,
    /// Map file to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_precompute(args: &PrecomputeArgs) -> Result<MapManifest, CliError> {
    let (world_cfg, world) = load_world(&args.world)?;
    let spec = world_grid(&world_cfg, args.rxy, args.ntheta)?;
    let map: DescriptorMap32 =
        precompute(&world.map_raster, &spec, args.w, args.out_res, args.d).map_err(|e| CliError::map(&args.world, e))?;
    output::write_atomic(&args.out, |out| write_map(&map, out).map_err(|e| CliError::map(&args.out, e)))?;
    let manifest = MapManifest {
        provider: "block-mean".into(),
        w: args.w,
        out_res: args.out_res,
        d: args.d,
        grid_fingerprint: format!("{:016x}", spec.fingerprint()),
        version: VERSION.into(),
        config_hash: config_hash(args),
    };
    output::write_json_atomic(&manifest_path(&args.out), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    /// Output directory of `lsvl worldgen`; use a different world than the
    /// one flown in missions.
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub rxy: f64,
    #[arg(long, default_value_t = 60)]
    pub ntheta: usize,
    #[arg(long = "D", default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 100.0)]
    pub w: f64,
    #[arg(long, default_value_t = 5.0)]
    pub out_res: f64,
    /// Number of match/nonmatch pairs to draw.
    #[arg(long, default_value_t = 20_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = lsvl_core::measurement::DEFAULT_CALIBRATION_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = lsvl_core::measurement::DEFAULT_CALIBRATION_FLOOR)]
    pub floor: f64,
    /// Calibration JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<CalibrationModel, CliError> {
    let (world_cfg, world) = load_world(&args.world)?;
    let spec = world_grid(&world_cfg, args.rxy, args.ntheta)?;
    if args.pairs == 0 {
        return Err(CliError::Config("pairs: must be at least 1".into()));
    }
    let samples = sample_calibration::<f32>(&world, &spec, args.w, args.out_res, args.d, args.pairs, args.seed)?;
    let model = calibrate(&samples.matches, &samples.nonmatches, args.bins, args.floor)
        .map_err(|e| CliError::Config(e.to_string()))?;
    output::write_json_atomic(&args.out, &model)?;
    let name = args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    output::write_json_atomic(&manifest_path(&args.out), &Manifest::new("calibrate", args, &[&name]))?;
    Ok(model)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: RunOverrides,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const RUN_LOG: &str = "log.csv";
pub const RUN_SUMMARY: &str = "summary.json";
pub const DIR_MANIFEST: &str = "manifest.json";

/// Everything a mission needs, loaded once.
struct Prepared {
    cfg: RunConfigFile,
    out: PathBuf,
    world: WorldPair,
    map: DescriptorMap32,
    calib: Option<CalibrationModel>,
}

fn prepare(config: &Path, overrides: &RunOverrides, out: Option<&PathBuf>) -> Result<Prepared, CliError> {
    let mut cfg = RunConfigFile::load(config)?;
    cfg.apply(overrides);
    cfg.validate()?;
    let out = out
        .cloned()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("output: not set in the config and no --out given".into()))?;
    let (_, world) = load_world(&cfg.world)?;
    let map: DescriptorMap32 = load_map(&cfg.map).map_err(|e| CliError::map(&cfg.map, e))?;
    let spec = map.spec();
    if let Some(r) = cfg.rxy {
        if (spec.r_xy - r).abs() > 1e-9 {
            return Err(CliError::Config(format!("rxy: config asks for {r} m but the map has {} m", spec.r_xy)));
        }
    }
    if let Some(n) = cfg.ntheta {
        if spec.n_theta != n {
            return Err(CliError::Config(format!("ntheta: config asks for {n} but the map has {}", spec.n_theta)));
        }
    }
    if map.dim() != cfg.d {
        return Err(CliError::Config(format!("D: config asks for {} but the map has {}", cfg.d, map.dim())));
    }
    let calib = match &cfg.calibration {
        Some(p) => {
            let model: CalibrationModel =
                output::read_json(p).map_err(|e| CliError::Config(format!("calibration: {e}")))?;
            model.validate().map_err(|e| CliError::Config(format!("calibration: {e}")))?;
            Some(model)
        }
        None => None,
    };
    Ok(Prepared {
        cfg,
        out,
        world,
        map,
        calib,
    })
}

fn mission(p: &Prepared, seed: u64) -> Result<MissionLog, CliError> {
    let mut m = p.cfg.mission();
    m.seed = seed;
    Ok(run_mission(&p.world, &p.map, p.calib.as_ref(), &m)?)
}

fn write_log(path: &Path, log: &MissionLog) -> Result<(), CliError> {
    output::write_atomic(path, |out| log.write_csv(out).map_err(|e| CliError::io(path, e)))
}

pub fn cmd_run(args: &RunArgs) -> Result<MissionSummary, CliError> {
    let p = prepare(&args.config, &args.overrides, args.out.as_ref())?;
    let log = mission(&p, p.cfg.seed)?;
    let summary = log.summary();
    write_log(&p.out.join(RUN_LOG), &log)?;
    output::write_json_atomic(&p.out.join(RUN_SUMMARY), &summary)?;
    output::write_json_atomic(&p.out.join(DIR_MANIFEST), &Manifest::new("run", &p.cfg, &[RUN_LOG, RUN_SUMMARY]))?;
    Ok(summary)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: RunOverrides,
    /// Number of consecutive mission seeds, starting at the configured seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const SWEEP_SUMMARY: &str = "sweep.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    pub seed: u64,
    /// Log file name inside the sweep directory.
    pub log: String,
    pub k_c: Option<usize>,
    pub mean_err_post: Option<f64>,
    pub updates: usize,
    pub divergences: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSummary {
    pub likelihood: Likelihood,
    pub max_updates: usize,
    pub runs: Vec<SweepRun>,
    /// Fraction of runs that converged.
    pub p_c: f64,
    /// Mean k_c over converged runs.
    pub mean_k_c: Option<f64>,
    /// Mean post-convergence error over converged runs, meters.
    pub mean_err_c: Option<f64>,
}

pub fn seed_log_name(seed: u64) -> String {
    format!("seed_{seed:04}.csv")
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub(crate) fn sweep_summary(likelihood: Likelihood, max_updates: usize, runs: Vec<SweepRun>) -> SweepSummary {
    let k: Vec<f64> = runs.iter().filter_map(|r| r.k_c).map(|k| k as f64).collect();
    let e: Vec<f64> = runs.iter().filter_map(|r| r.mean_err_post).collect();
    SweepSummary {
        likelihood,
        max_updates,
        p_c: k.len() as f64 / runs.len().max(1) as f64,
        mean_k_c: mean(&k),
        mean_err_c: mean(&e),
        runs,
    }
}

/// A sweep fails when no run converged and every run hit a divergence.
pub fn divergence_only(summary: &SweepSummary) -> bool {
    !summary.runs.is_empty() && summary.runs.iter().all(|r| r.k_c.is_none() && !r.divergences.is_empty())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepSummary, CliError> {
    if args.seeds == 0 {
        return Err(CliError::Config("seeds: must be at least 1".into()));
    }
    let p = prepare(&args.config, &args.overrides, args.out.as_ref())?;
    let first = p.cfg.seed;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|s| first + s).collect();
    // collect() keeps seed order whatever order the workers finish in
    let logs: Vec<MissionLog> = seeds.par_iter().map(|&s| mission(&p, s)).collect::<Result<_, _>>()?;
    let mut runs = Vec::with_capacity(logs.len());
    for (&seed, log) in seeds.iter().zip(&logs) {
        let name = seed_log_name(seed);
        write_log(&p.out.join(&name), log)?;
        let s = log.summary();
        runs.push(SweepRun {
            seed,
            log: name,
            k_c: s.k_c,
            mean_err_post: s.mean_err_post,
            updates: s.updates,
            divergences: s.divergences,
        });
    }
    let summary = sweep_summary(p.cfg.likelihood, p.cfg.max_updates, runs);
    output::write_json_atomic(&p.out.join(SWEEP_SUMMARY), &summary)?;
    output::write_json_atomic(
        &p.out.join(DIR_MANIFEST),
        &Manifest::new("sweep", (&p.cfg, args.seeds), &[SWEEP_SUMMARY]),
    )?;
    if divergence_only(&summary) {
        return Err(CliError::DivergenceOnly(summary.runs.len()));
    }
    Ok(summary)
}
