//! `spinepoi` command line: landmark extraction, orientation evaluation,
//! phantom generation, format conversion and timing.
//!
//! Exit codes: 0 on success, 1 when the run completed but recorded per-item
//! skips or failures, 2 on fatal or usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use spinepoi::anatomy::{assemble_spine, LabelDictionary, SpineInstance};
use spinepoi::grid::{LabelVolume, WorldConvention};
use spinepoi::io::{
    export_slicer, import_slicer, merge_instance_map, orientation_report_csv, orientation_report_json, orientation_table,
    poi_from_json, read_label_dictionary, read_label_volume, read_phantom_spec, write_label_volume, write_poi_json,
    write_truth_json, DictionarySource,
};
use spinepoi::orientation::OrientationMethod;
use spinepoi::phantom::{generate_spine, generate_suite, score_methods, suite_cases, PhantomSpec, SUITE_SEED, SUITE_SIZE};
use spinepoi::poi::{extract_all, BisectionConfig, ExtractionConfig, PoiSet, RayConfig, RetargetTarget, ShiftMode};

#[derive(Parser)]
#[command(name = "spinepoi", version, about = "Vertebral frames and landmarks from spine subregion segmentations")]
struct Cli {
    /// Worker threads for per-vertebra work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract frames and landmarks from a label volume.
    Extract(ExtractArgs),
    /// Score the orientation methods on the seeded phantom suite.
    OrientEval(OrientEvalArgs),
    /// Materialize a phantom spec into a label volume and a truth file.
    Phantom(PhantomArgs),
    /// Change the convention or space of a landmark file, or export it to Slicer.
    Convert(ConvertArgs),
    /// Time a full extraction.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Ras,
    Lps,
}

impl From<Convention> for WorldConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Ras => WorldConvention::Ras,
            Convention::Lps => WorldConvention::Lps,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    #[value(name = "cms3d-all")]
    Cms3dAll,
    #[value(name = "cms3d-arcspin")]
    Cms3dArcspin,
    Proj2d,
}

impl From<Method> for OrientationMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Cms3dAll => OrientationMethod::Cms3dAllPosterior,
            Method::Cms3dArcspin => OrientationMethod::Cms3dArcusSpinosus,
            Method::Proj2d => OrientationMethod::Projection2d,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Shift {
    Divide,
    Multiply,
}

/// Input volume and the settings that control extraction.
#[derive(Args)]
struct ExtractionArgs {
    /// Label volume (.nii or .nii.gz).
    #[arg(long)]
    input: PathBuf,
    /// Label dictionary JSON (default: SPINEPS code blocks).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "proj2d")]
    method: Method,
    /// Bisection stopping step.
    #[arg(long, default_value_t = 0.05)]
    precision_mm: f64,
    /// Ray marching step.
    #[arg(long, default_value_t = 0.25)]
    step_mm: f64,
    #[arg(long, value_enum, default_value = "divide")]
    shift_mode: Shift,
}

impl ExtractionArgs {
    fn config(&self) -> ExtractionConfig {
        ExtractionConfig {
            method: self.method.into(),
            ray: RayConfig { march_step_mm: self.step_mm, ..RayConfig::default() },
            bisection: BisectionConfig { precision_mm: self.precision_mm, ..BisectionConfig::default() },
            shift_mode: match self.shift_mode {
                Shift::Divide => ShiftMode::Divide,
                Shift::Multiply => ShiftMode::Multiply,
            },
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    extraction: ExtractionArgs,
    /// Landmark JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// World convention of the written coordinates.
    #[arg(long, value_enum, default_value = "ras")]
    convention: Convention,
    /// Also write 3D Slicer markups here.
    #[arg(long)]
    slicer_out: Option<PathBuf>,
}

#[derive(Args)]
struct OrientEvalArgs {
    #[arg(long, default_value_t = SUITE_SEED)]
    seed: u64,
    /// Number of suite cases.
    #[arg(long, default_value_t = SUITE_SIZE)]
    cases: usize,
    /// Report file; `.csv` gives CSV, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhantomArgs {
    /// Phantom spec JSON (default: the built-in 24-level spine).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Label volume to write (.nii or .nii.gz).
    #[arg(long)]
    out: PathBuf,
    /// Truth file (default: next to the volume, `<name>.truth.json`).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Landmark JSON or Slicer markups.
    #[arg(long)]
    input: PathBuf,
    /// Landmark JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// World convention of the written coordinates.
    #[arg(long, value_enum, default_value = "ras")]
    convention: Convention,
    /// Write voxel coordinates of this volume's grid instead of world coordinates.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    slicer_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Label volume (default: the built-in 24-level phantom, generated first).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "proj2d")]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    precision_mm: f64,
    #[arg(long, default_value_t = 0.25)]
    step_mm: f64,
    /// Seed of the built-in phantom's asymmetry.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the extracted landmarks.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How a completed command went.
enum Outcome {
    Clean,
    /// Finished, with this many recorded per-item failures.
    Partial(usize),
}

fn load_spine(input: &Path, labels: Option<&Path>) -> anyhow::Result<SpineInstance> {
    let vol = read_label_volume(input).with_context(|| format!("reading {}", input.display()))?;
    info!("{}: dims {:?}, spacing {:?}", input.display(), vol.dims(), vol.frame().spacing());
    let source = match labels {
        Some(path) => read_label_dictionary(path).with_context(|| format!("reading {}", path.display()))?,
        None => DictionarySource::Blocks(LabelDictionary::spineps_blocks()),
    };
    let (vol, dict) = match source {
        DictionarySource::Blocks(dict) => (vol, dict),
        DictionarySource::InstanceMap { subregions, instances, instance_volume, ignore } => {
            let inst = read_label_volume(&instance_volume).with_context(|| format!("reading {}", instance_volume.display()))?;
            merge_instance_map(&vol, &inst, &subregions, &instances, &ignore)?
        }
    };
    Ok(assemble_spine(Arc::new(vol), &dict)?)
}

fn outcome_of(set: &PoiSet) -> Outcome {
    for s in set.skips() {
        warn!("skipped {} of vertebra {}: {}", s.name, s.v_id, s.reason);
    }
    match set.skips().len() {
        0 => Outcome::Clean,
        n => Outcome::Partial(n),
    }
}

fn write_outputs(set: &PoiSet, out: Option<&Path>, slicer_out: Option<&Path>) -> anyhow::Result<()> {
    if let Some(path) = out {
        write_poi_json(set, path).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = slicer_out {
        export_slicer(set, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn extract(args: &ExtractArgs) -> anyhow::Result<Outcome> {
    let e = &args.extraction;
    let spine = load_spine(&e.input, e.labels.as_deref())?;
    let set = extract_all(&spine, &e.config())?;
    let set = set.retarget(&RetargetTarget::World(args.convention.into()))?;
    info!("{} landmarks on {} vertebrae", set.len(), spine.len());
    write_outputs(&set, Some(&args.out), args.slicer_out.as_deref())?;
    Ok(outcome_of(&set))
}

fn orient_eval(args: &OrientEvalArgs) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let samples = generate_suite(&suite_cases(args.seed, args.cases))?;
    let stats = score_methods(&samples, &OrientationMethod::ALL)?;
    info!("suite of {} cases scored in {:.2} s", args.cases, start.elapsed().as_secs_f64());
    print!("{}", orientation_table(&stats));
    if let Some(path) = &args.out {
        let bytes = if path.extension().is_some_and(|e| e == "csv") {
            orientation_report_csv(&stats).into_bytes()
        } else {
            orientation_report_json(&stats, args.seed)?
        };
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(match stats.iter().map(|s| s.failures).sum() {
        0 => Outcome::Clean,
        n => Outcome::Partial(n),
    })
}

fn default_truth_path(volume: &Path) -> PathBuf {
    let name = volume.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".gz").unwrap_or(&name);
    let stem = stem.strip_suffix(".nii").unwrap_or(stem);
    volume.with_file_name(format!("{stem}.truth.json"))
}

fn phantom(args: &PhantomArgs) -> anyhow::Result<Outcome> {
    let mut spec = match &args.input {
        Some(path) => read_phantom_spec(path)?,
        None => PhantomSpec::full_spine(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (vol, truth) = generate_spine(&spec)?;
    write_label_volume(&vol, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let truth_path = args.truth_out.clone().unwrap_or_else(|| default_truth_path(&args.out));
    write_truth_json(&truth, &truth_path).with_context(|| format!("writing {}", truth_path.display()))?;
    info!("{} levels, dims {:?}", truth.vertebrae.len(), vol.dims());
    Ok(Outcome::Clean)
}

fn convert(args: &ConvertArgs) -> anyhow::Result<Outcome> {
    if args.out.is_none() && args.slicer_out.is_none() {
        bail!("nothing to write: give --out and/or --slicer-out");
    }
    let bytes = std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let is_markups = serde_json::from_slice::<serde_json::Value>(&bytes).ok().is_some_and(|v| v.get("@schema").is_some());
    let set = if is_markups { import_slicer(&bytes, args.convention.into())? } else { poi_from_json(&bytes)? };
    let world = set.retarget(&RetargetTarget::World(args.convention.into()))?;
    let target = match &args.reference {
        Some(path) => {
            let reference: LabelVolume = read_label_volume(path).with_context(|| format!("reading {}", path.display()))?;
            world.retarget(&RetargetTarget::Voxel(reference.frame().with_convention(args.convention.into())))?
        }
        None => world,
    };
    write_outputs(&target, args.out.as_deref(), None)?;
    if let Some(path) = &args.slicer_out {
        export_slicer(&target, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Outcome::Clean)
}

fn bench(args: &BenchArgs) -> anyhow::Result<Outcome> {
    let config = ExtractionConfig {
        method: args.method.into(),
        ray: RayConfig { march_step_mm: args.step_mm, ..RayConfig::default() },
        bisection: BisectionConfig { precision_mm: args.precision_mm, ..BisectionConfig::default() },
        shift_mode: ShiftMode::Divide,
    };
    let load = Instant::now();
    let spine = match &args.input {
        Some(path) => load_spine(path, args.labels.as_deref())?,
        None => {
            let mut spec = PhantomSpec::full_spine();
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let (vol, _) = generate_spine(&spec)?;
            assemble_spine(Arc::new(vol), &LabelDictionary::spineps_blocks())?
        }
    };
    let loaded = load.elapsed();
    let start = Instant::now();
    let set = extract_all(&spine, &config)?;
    let wall = start.elapsed();
    let dims = spine.volume().dims();
    println!("vertebrae: {}", spine.len());
    println!("landmarks: {}", set.len());
    println!("voxels: {} ({}x{}x{})", dims[0] * dims[1] * dims[2], dims[0], dims[1], dims[2]);
    println!("threads: {}", rayon::current_num_threads());
    println!("load_s: {:.3}", loaded.as_secs_f64());
    println!("wall_s: {:.3}", wall.as_secs_f64());
    write_outputs(&set, args.out.as_deref(), None)?;
    Ok(outcome_of(&set))
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting the worker pool")?;
    pool.install(|| match &cli.command {
        Command::Extract(a) => extract(a),
        Command::OrientEval(a) => orient_eval(a),
        Command::Phantom(a) => phantom(a),
        Command::Convert(a) => convert(a),
        Command::Bench(a) => bench(a),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPINEPOI_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            warn!("{n} item(s) could not be processed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
