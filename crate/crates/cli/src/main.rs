use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bird::acoustics::{compute_tdoa, measure_rt60, predict_rt60};
use bird::augment::{assemble, ExampleRequest, Scenario};
use bird::clean::{read_mono, write_wav_i16};
use bird::engine::EngineConfig;
use bird::packager::{decode_record, generate_corpus, verify_corpus, GenerateOptions};
use bird::rng::SeedStream;
use bird::scene::{sample_scene, ParamRanges, NUM_MICS, NUM_SOURCES};
use bird::stats::{corpus_metric_values, Histogram, Metric, Moments};
use bird::stft::{Stft, StftConfig};
use bird::Error;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "bird",
    version,
    about = "Randomized two-microphone RIR corpora and mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a corpus of FLAC records split into balanced folds.
    Gen {
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 10)]
        folds: u32,
        #[arg(long, env = "BIRD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// TOML file overriding parameter ranges.
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = "BIRD_WORKERS", default_value_t = 0)]
        workers: usize,
    },
    /// Print the scene and derived acoustics of one record.
    Inspect { file: PathBuf },
    /// Histogram of TDOA or RT60 values over a corpus.
    Stats {
        /// Corpus directory (omit with --synthetic).
        dir: Option<PathBuf>,
        #[arg(long, value_parser = parse_metric)]
        metric: Metric,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        bin_width: Option<f64>,
        /// Sample this many scenes from the parameter ranges instead of
        /// reading a corpus (metadata only, no simulation).
        #[arg(long, conflicts_with = "dir")]
        synthetic: Option<u64>,
        #[arg(long, env = "BIRD_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ranges: Option<PathBuf>,
    },
    /// Mix clean signals through one record and write WAV plus JSON targets.
    Mix {
        #[arg(long)]
        rir: PathBuf,
        #[arg(long, num_args = 1..=NUM_SOURCES, required = true)]
        sources: Vec<PathBuf>,
        /// Record source (1-based) for each clean signal; defaults to 1, 2, ...
        #[arg(long, num_args = 1..=NUM_SOURCES)]
        slots: Vec<usize>,
        /// SINR of the first source against the rest; gains stay 1 if absent.
        #[arg(long, allow_hyphen_values = true)]
        sinr: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        volume: f64,
        #[arg(long, value_parser = parse_scenario, default_value = "count")]
        scenario: Scenario,
        /// Output prefix; writes PREFIX.wav and PREFIX.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every record of a corpus.
    Verify { dir: PathBuf },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Bad flag combinations and configuration are usage errors (2); anything
/// else is a failure of the data being processed (1).
fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn load_ranges(path: Option<&Path>) -> bird::Result<ParamRanges> {
    match path {
        Some(p) => ParamRanges::load(p),
        None => Ok(ParamRanges::default()),
    }
}

/// Runs one command; `Ok(false)` is a validation failure.
fn run(command: Command) -> bird::Result<bool> {
    match command {
        Command::Gen {
            count,
            folds,
            seed,
            out,
            ranges,
            workers,
        } => {
            let opts = GenerateOptions {
                count,
                folds,
                master_seed: seed,
                out_dir: out,
                ranges: load_ranges(ranges.as_deref())?,
                engine: EngineConfig::default(),
                workers,
            };
            let summary = generate_corpus(&opts)?;
            println!(
                "generated {} records ({} already present) in {:.1} s: {:.2} records/s",
                summary.generated,
                summary.skipped,
                summary.elapsed.as_secs_f64(),
                summary.throughput()
            );
            Ok(true)
        }
        Command::Inspect { file } => inspect(&file),
        Command::Stats {
            dir,
            metric,
            csv,
            bin_width,
            synthetic,
            seed,
            ranges,
        } => {
            let values = match (dir, synthetic) {
                (Some(dir), _) => corpus_metric_values(&dir, metric)?,
                (None, Some(n)) => {
                    let ranges = load_ranges(ranges.as_deref())?;
                    let mut values = Vec::new();
                    for i in 0..n {
                        let scene = sample_scene(&ranges, SeedStream::new(seed, i))?;
                        values.extend(metric.values(&scene, 16_000.0)?);
                    }
                    values
                }
                (None, None) => {
                    return Err(Error::Config(
                        "give a corpus directory or --synthetic N".into(),
                    ))
                }
            };
            let m = Moments::of(&values).ok_or_else(|| Error::Config("no values".into()))?;
            println!("metric           {metric}");
            println!("values           {}", m.count);
            println!("mean             {:.6}", m.mean);
            println!("variance         {:.6}", m.variance);
            println!("skewness         {:.6}", m.skewness);
            println!("excess kurtosis  {:.6}", m.excess_kurtosis);
            println!("min              {:.6}", m.min);
            println!("max              {:.6}", m.max);
            if let Some(path) = csv {
                let h = Histogram::build(&values, bin_width.unwrap_or(metric.default_bin_width()))?;
                fs::write(&path, h.to_csv(metric)).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            Ok(true)
        }
        Command::Mix {
            rir,
            sources,
            slots,
            sinr,
            volume,
            scenario,
            out,
        } => {
            let record = decode_record(&rir)?;
            let slots: Vec<usize> = if slots.is_empty() {
                (0..sources.len()).collect()
            } else {
                if slots.len() != sources.len() || slots.contains(&0) {
                    return Err(Error::Config(
                        "--slots needs one 1-based index per source".into(),
                    ));
                }
                slots.iter().map(|s| s - 1).collect()
            };
            let clean = sources
                .iter()
                .map(|p| read_mono(p))
                .collect::<bird::Result<Vec<_>>>()?;
            let stft = Stft::new(StftConfig::default())?;
            let example = assemble(
                scenario,
                ExampleRequest {
                    record: &record,
                    record_name: rir.display().to_string(),
                    slots,
                    clean,
                    clean_names: sources.iter().map(|p| p.display().to_string()).collect(),
                    sinr_db: sinr,
                    volume,
                },
                &stft,
            )?;
            let wav = with_suffix(&out, "wav");
            let json = with_suffix(&out, "json");
            write_wav_i16(&wav, &example.mixture, record.set.sample_rate())?;
            fs::write(&json, example.sidecar_json()).map_err(|e| Error::Io {
                path: json.clone(),
                source: e,
            })?;
            if example.rescaled {
                eprintln!("note: mixture exceeded full scale and was rescaled to 0.99");
            }
            println!("wrote {} and {}", wav.display(), json.display());
            Ok(true)
        }
        Command::Verify { dir } => {
            let report = verify_corpus(&dir);
            for f in &report.failures {
                println!("FAIL {} [{}]: {}", f.path.display(), f.check, f.detail);
            }
            let sizes: Vec<String> = report
                .fold_sizes
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect();
            println!(
                "{} files in {} folds ({}); {} failures",
                report.files_checked,
                report.fold_sizes.len(),
                sizes.join(" "),
                report.failures.len()
            );
            if report.passed() {
                println!("PASS");
                Ok(true)
            } else {
                println!("FAIL");
                Ok(false)
            }
        }
    }
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn inspect(file: &Path) -> bird::Result<bool> {
    let rec = decode_record(file)?;
    let s = &rec.scene;
    let fs = rec.set.sample_rate() as f64;
    let v3 = |v: &bird::scene::Vec3| format!("[{:.4}, {:.4}, {:.4}]", v.x, v.y, v.z);
    println!("file             {}", file.display());
    println!("record           {} (fold {})", rec.record_index, rec.fold);
    println!("room L           {} m", v3(&s.room));
    println!("alpha            {}", s.alpha);
    println!("c                {} m/s", s.c);
    for k in 0..NUM_MICS {
        println!("mic {}            {}", k + 1, v3(&s.mics[k]));
    }
    println!("spacing d        {:.4} m", s.spacing);
    for i in 0..NUM_SOURCES {
        println!(
            "source {}         {}  tdoa {:.3} samples",
            i + 1,
            v3(&s.sources[i]),
            compute_tdoa(s, i, fs)?
        );
    }
    println!("predicted rt60   {:.3} s", predict_rt60(s)?);
    let measured: Vec<String> = rec
        .set
        .channels()
        .iter()
        .map(|ch| match measure_rt60(&ch.samples, fs) {
            Ok(t) => format!("{t:.3}"),
            Err(_) => "n/a".to_string(),
        })
        .collect();
    println!("measured rt60    {} s", measured.join(" "));
    Ok(true)
}
