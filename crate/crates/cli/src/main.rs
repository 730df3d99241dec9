use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use launder_core::degradations::{
    apply_postproc, launder_proxy, write_fixtures, FixtureConfig, LaunderProxyConfig, PostProcOp,
};
use launder_core::patch::{AggregationConfig, SamplerConfig, DEFAULT_PATCHES, DEFAULT_TOP_FRACTION};
use launder_core::pipeline::{
    calibrate_pipeline, class_spectrum, run_eval, write_spectrum, CalibrationOptions, EvalOptions,
    EvalReport, Pipeline, Stage1Positives, DEFAULT_HISTOGRAM_BINS,
};
use launder_core::spectral::Denoiser;
use launder_core::{load_image, load_manifest, save_image, ClassLabel, Error, ErrorKind};

#[derive(Parser)]
#[command(name = "launder", version, about = "Detect laundered synthetic images from residual spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write deterministic pristine, fully synthetic and laundered fixtures.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        /// Images per class.
        #[arg(long, default_value_t = 150)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the down/up laundering proxy on one image.
    Launder {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        factor: usize,
    },
    /// Apply one post-processing op (jpeg70, jpeg80, resize0.5, resize2, downup4).
    Postproc {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        op: String,
    },
    /// Average residual spectrum of one class, written as PREFIX.png and PREFIX.json.
    Spectrum {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 8)]
        factor: usize,
    },
    /// Fit both stage models on a manifest and write a model directory.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATCHES)]
        n_patches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOP_FRACTION)]
        top_fraction: f64,
        /// Re-sample patches for stage 2 instead of reusing stage 1's.
        #[arg(long)]
        resample_stage2: bool,
        /// Use only fully synthetic images as stage-1 positives.
        #[arg(long)]
        stage1_fully_synthetic_only: bool,
        /// Held-out manifest, checked for overlap with the training set.
        #[arg(long)]
        test_manifest: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Classify one image.
    Score {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        json: bool,
        /// Print per-stage patch counters to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Evaluate a manifest, optionally under post-processing, and write a JSON report.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated ops, or "all" for the standard suite.
        #[arg(long)]
        postproc: Option<String>,
        #[arg(long)]
        n_patches: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        skip_errors: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
        histogram_bins: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Scorer => 3,
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::GenFixtures { out, count, size, seed } => {
            let cfg = FixtureConfig {
                count_per_class: count,
                size,
                seed,
                ..Default::default()
            };
            let set = write_fixtures(&cfg, &out)?;
            eprintln!("wrote {} images to {}", set.all.len(), out.display());
        }
        Command::Launder { input, out, factor } => {
            let img = load_image(&input)?;
            save_image(&launder_proxy(&img, &LaunderProxyConfig::with_factor(factor))?, &out)?;
        }
        Command::Postproc { input, out, op } => {
            let op: PostProcOp = op.parse()?;
            let img = load_image(&input)?;
            save_image(&apply_postproc(&img, &op)?, &out)?;
        }
        Command::Spectrum { manifest, class, out, factor } => {
            let label: ClassLabel = class.parse()?;
            let manifest = load_manifest(&manifest)?;
            let (spec, sidecar) = class_spectrum(&manifest, label, factor, &Denoiser::default())?;
            let (png, json) = write_spectrum(&spec, &sidecar, &out)?;
            eprintln!(
                "{} images, peak strength {:.3}: {} {}",
                sidecar.count,
                sidecar.peak_strength,
                png.display(),
                json.display()
            );
        }
        Command::Calibrate {
            manifest,
            out,
            n_patches,
            seed,
            top_fraction,
            resample_stage2,
            stage1_fully_synthetic_only,
            test_manifest,
            workers,
        } => {
            check_workers(workers)?;
            let train = load_manifest(&manifest)?;
            let test = test_manifest.map(load_manifest).transpose()?;
            let opts = CalibrationOptions {
                sampler: SamplerConfig { n_patches, seed, ..Default::default() },
                aggregation: AggregationConfig { top_fraction },
                stage1_positives: if stage1_fully_synthetic_only {
                    Stage1Positives::FullySyntheticOnly
                } else {
                    Stage1Positives::AllSynthetic
                },
                workers,
                ..Default::default()
            };
            let mut cal = calibrate_pipeline(&train, &opts, test.as_ref())?;
            cal.pipeline.config.resample_stage2 = resample_stage2;
            for w in &cal.warnings {
                eprintln!("warning: {w}");
            }
            cal.pipeline.save(&out)?;
            eprintln!("models written to {}", out.display());
        }
        Command::Score { image, models, json, verbose } => {
            let pipeline = Pipeline::load(&models)?;
            let img = load_image(&image)?;
            let mut session = pipeline.session();
            let result = session.classify(&img, 0)?;
            if json {
                let mut value = serde_json::to_value(&result).expect("result serializes");
                value["image"] = image.display().to_string().into();
                println!("{}", serde_json::to_string_pretty(&value).expect("json"));
            } else {
                match result.s2 {
                    Some(s2) => println!("{} s1={} s2={}", result.label, result.s1, s2),
                    None => println!("{} s1={}", result.label, result.s1),
                }
            }
            if verbose {
                let c = session.counters();
                eprintln!(
                    "stage1 patches {}, stage2 patches {}, stage2 images {}",
                    c.stage1_patches, c.stage2_patches, c.stage2_images
                );
            }
        }
        Command::Eval {
            manifest,
            models,
            out,
            postproc,
            n_patches,
            seed,
            skip_errors,
            workers,
            histogram_bins,
        } => {
            check_workers(workers)?;
            let manifest = load_manifest(&manifest)?;
            let mut pipeline = Pipeline::load(&models)?;
            if let Some(n) = n_patches {
                pipeline.config.sampler.n_patches = n;
            }
            if let Some(s) = seed {
                pipeline.config.sampler.seed = s;
            }
            pipeline.config.validate()?;
            let opts = EvalOptions {
                postproc: parse_postproc_list(postproc.as_deref())?,
                skip_errors,
                workers,
                histogram_bins,
            };
            let start = Instant::now();
            let report = run_eval(&manifest, &pipeline, &opts)?;
            write_report(&report, &out)?;
            print_summary(&report);
            eprintln!("runtime {:.2}s", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn check_workers(workers: Option<usize>) -> Result<(), Error> {
    match workers {
        Some(0) => Err(Error::InvalidConfig("--workers must be at least 1".into())),
        _ => Ok(()),
    }
}

fn parse_postproc_list(list: Option<&str>) -> Result<Vec<PostProcOp>, Error> {
    match list.map(str::trim) {
        None | Some("") => Ok(Vec::new()),
        Some("all") => Ok(PostProcOp::standard_suite()),
        Some(s) => s.split(',').map(|op| op.trim().parse()).collect(),
    }
}

fn write_report(report: &EvalReport, out: &Path) -> Result<(), Error> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(out, report.to_json()).map_err(|e| io_error(out, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn print_summary(report: &EvalReport) {
    let fmt = |row: Option<&launder_core::metrics::MetricRow>| match row {
        Some(r) => format!("{:.4}", r.auc),
        None => "n/a".to_string(),
    };
    for c in std::iter::once(&report.clean).chain(&report.postproc) {
        eprintln!(
            "{:<10} n={:<4} stage1 auc {}  stage2 auc {}  3-class b_acc {:.4}",
            c.postproc,
            c.n_images,
            fmt(c.stage1.as_ref()),
            fmt(c.stage2.as_ref()),
            c.three_class_b_acc
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for s in &report.skipped {
        eprintln!("skipped {}: {}", s.path, s.error);
    }
}
