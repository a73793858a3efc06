use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cml_core::extractor;
use cml_core::lyapunov::{max_deviation, WolfOptions, WolfOrbit};
use cml_core::stats::{self, TestReport, TwoLevelReport};
use cml_core::{
    extract_stream, le_spectrum, wolf_le, Error, ExtractionSettings, Extractor, Init, Instance,
    InstancePair, Lattice, TapMode,
};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{
    BenchArgs, BifurcationArgs, ExtractArgs, Format, GenArgs, HistArgs, LeArgs, TestArgs,
    DEFAULT_PERTURBATION,
};
use crate::failure::{CliResult, Failure};
use crate::manifest::sidecar;

/// What a command reports back for its manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub results: serde_json::Value,
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

/// Write to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => write_file(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(Failure::validation("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::validation(format!("cannot start worker pool: {e}")))
}

impl ExtractArgs {
    fn settings(&self) -> ExtractionSettings {
        ExtractionSettings {
            z: self.z,
            window: self.window,
            alpha: self.alpha,
            max_windows: self.max_windows,
            tap: if self.round_robin {
                TapMode::RoundRobin
            } else {
                TapMode::Nodes {
                    a: self.tap.into(),
                    b: self.tap.into(),
                }
            },
            retest_every: self.retest_every,
        }
    }

    fn inits(&self, offset: u64) -> (Init, Init) {
        let seed_a = self.seed_a.wrapping_add(offset);
        let b = match self.seed_b {
            Some(seed_b) => Init::Seed(seed_b.wrapping_add(offset)),
            None => Init::Perturbed {
                seed: seed_a,
                delta: self.perturb.unwrap_or(DEFAULT_PERTURBATION),
            },
        };
        (Init::Seed(seed_a), b)
    }

    fn seeds(&self, count: usize) -> Vec<u64> {
        let mut seeds: Vec<u64> = (0..count as u64).map(|i| self.seed_a.wrapping_add(i)).collect();
        if let Some(seed_b) = self.seed_b {
            seeds.extend((0..count as u64).map(|i| seed_b.wrapping_add(i)));
        }
        seeds
    }

    fn check(&self) -> CliResult<()> {
        if let Some(delta) = self.perturb {
            if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
                return Err(Failure::validation(format!(
                    "--perturb {delta} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Pair for stream `offset`; the chaos check runs once here.
    fn pair(&self, offset: u64) -> CliResult<InstancePair> {
        let config = self.lattice.config()?;
        let (a, b) = self.inits(offset);
        Ok(InstancePair::new(
            Instance::new(config, a),
            Instance::new(config, b),
            self.settings(),
        )?)
    }
}

/// Same configuration and settings as `template`, reseeded for stream `offset`.
fn reseed(template: &InstancePair, args: &ExtractArgs, offset: u64) -> CliResult<InstancePair> {
    let (a, b) = args.inits(offset);
    Ok(InstancePair::new(
        Instance::new(template.a().config, a),
        Instance::new(template.b().config, b),
        *template.settings(),
    )?)
}

pub fn gen(args: &GenArgs) -> CliResult<Outcome> {
    args.extract.check()?;
    if args.streams == 0 {
        return Err(Failure::validation("--streams must be at least 1"));
    }
    let template = args.extract.pair(0)?;
    let paths: Vec<PathBuf> = if args.streams == 1 {
        vec![args.out.clone()]
    } else {
        (0..args.streams).map(|i| sidecar(&args.out, &i.to_string())).collect()
    };
    let pool = thread_pool(args.jobs)?;
    let results: Vec<CliResult<serde_json::Value>> = pool.install(|| {
        paths
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let pair = if i == 0 {
                    template.clone()
                } else {
                    reseed(&template, &args.extract, i as u64)?
                };
                let stream = extract_stream(&pair, args.bits)?;
                let data = match args.format {
                    Format::Raw => stream.to_packed(),
                    Format::Ascii => stream.to_ascii(),
                };
                write_file(path, &data)?;
                write_file(
                    &sidecar(path, "provenance"),
                    stream.origin.to_sidecar().as_bytes(),
                )?;
                Ok(json!({
                    "path": path,
                    "windows_tried": stream.origin.windows_tried,
                    "discarded_steps": stream.origin.discarded_steps,
                    "fisher_statistic": stream.origin.last_statistic,
                }))
            })
            .collect()
    });
    let streams = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let mut outputs = paths.clone();
    outputs.extend(paths.iter().map(|p| sidecar(p, "provenance")));
    Ok(Outcome {
        seeds: args.extract.seeds(args.streams),
        outputs,
        results: json!({ "bits_per_stream": args.bits, "streams": streams }),
    })
}

pub fn le(args: &LeArgs) -> CliResult<Outcome> {
    let config = args.lattice.config()?;
    let le_f = config.map.local_le(0.3, args.local_iterations, cml_core::local_maps::DEFAULT_LE_DISCARD)?;
    let spectrum = le_spectrum(le_f, config.epsilon, config.rows, config.cols)?;
    let mut results = json!({ "le_f": le_f, "max_le": spectrum.max_le() });
    let csv = if args.numeric {
        let mut options = WolfOptions::new(args.iterations, config.nodes());
        if args.free_orbit {
            options.orbit = WolfOrbit::Free(Init::Seed(args.seed));
        }
        let numeric = wolf_le(&config, &options)?;
        let deviation = max_deviation(&spectrum, &numeric);
        eprintln!("max |analytic - numeric| = {deviation:.6}");
        results["max_deviation"] = json!(deviation);
        let mut csv = String::from("r,l,lambda,le,le_numeric\n");
        for (e, n) in spectrum.entries.iter().zip(&numeric) {
            csv.push_str(&format!("{},{},{},{},{}\n", e.r, e.l, e.lambda, e.le, n));
        }
        csv
    } else {
        spectrum.to_csv()
    };
    emit(args.out.as_deref(), csv.as_bytes())?;
    Ok(Outcome {
        seeds: if args.numeric && args.free_orbit { vec![args.seed] } else { Vec::new() },
        outputs: args.out.iter().cloned().collect(),
        results,
    })
}

pub fn bifurcation(args: &BifurcationArgs) -> CliResult<Outcome> {
    let template = args.lattice.config()?;
    let points = stats::bifurcation_scan(
        args.lattice.map.into(),
        (args.mu_min, args.mu_max),
        args.steps,
        &template,
        &Init::Seed(args.seed),
        args.node.into(),
        args.points,
        args.discard,
    )?;
    emit(args.out.as_deref(), stats::bifurcation_csv(&points).as_bytes())?;
    Ok(Outcome {
        seeds: vec![args.seed],
        outputs: args.out.iter().cloned().collect(),
        results: json!({ "rows": points.len() }),
    })
}

fn read_values(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            line.trim().parse::<f64>().map_err(|e| {
                Failure::validation(format!("{}:{}: '{}': {e}", path.display(), i + 1, line.trim()))
            })
        })
        .collect()
}

pub fn hist(args: &HistArgs) -> CliResult<Outcome> {
    let (values, seeds) = match &args.input {
        Some(path) => (read_values(path)?, Vec::new()),
        None => {
            let config = args.lattice.config()?;
            let mut lattice = Lattice::new(config, Init::Seed(args.seed))?;
            (lattice.orbit(args.node.into(), args.points, args.discard)?, vec![args.seed])
        }
    };
    let counts = stats::orbit_histogram(&values, args.bins)?;
    emit(args.out.as_deref(), stats::histogram_csv(&counts).as_bytes())?;
    Ok(Outcome {
        seeds,
        outputs: args.out.iter().cloned().collect(),
        results: json!({ "samples": values.len(), "bins": counts.len() }),
    })
}

type SubTest = (&'static str, fn(&[u8], usize, f64) -> cml_core::Result<Vec<TestReport>>);

const SUB_TESTS: [SubTest; 4] = [
    ("frequency", |b, _, a| Ok(vec![stats::monobit_test(b, a)?])),
    ("block_frequency", |b, m, a| Ok(vec![stats::block_frequency_test(b, m, a)?])),
    ("runs", |b, _, a| Ok(vec![stats::runs_test(b, a)?])),
    ("serial", |b, _, a| Ok(stats::serial2_test(b, a)?.to_vec())),
];

fn load_sequences(args: &TestArgs) -> CliResult<(Vec<Vec<u8>>, Vec<u64>)> {
    if let Some(path) = &args.input {
        let text = fs::read(path).map_err(|e| Failure::io(path, e))?;
        let text = text.strip_suffix(b"\n").unwrap_or(&text);
        let bits = extractor::from_ascii(text)?;
        let available = bits.len() / args.length;
        if available < args.sequences {
            eprintln!(
                "warning: {} holds {available} sequences of {} bits, not {}",
                path.display(),
                args.length,
                args.sequences
            );
        }
        let sequences = bits
            .chunks_exact(args.length)
            .take(args.sequences)
            .map(<[u8]>::to_vec)
            .collect();
        return Ok((sequences, Vec::new()));
    }
    args.extract.check()?;
    let template = args.extract.pair(0)?;
    let sequences = (0..args.sequences)
        .into_par_iter()
        .map(|i| {
            let pair = reseed(&template, &args.extract, i as u64)?;
            Ok(extract_stream(&pair, args.length)?.bits)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((sequences, args.extract.seeds(args.sequences)))
}

pub fn test(args: &TestArgs) -> CliResult<Outcome> {
    if args.length == 0 {
        return Err(Failure::validation("--length must be positive"));
    }
    if !(args.test_alpha > 0.0 && args.test_alpha < 1.0) {
        return Err(Failure::validation(format!(
            "--test-alpha {} not in (0, 1)",
            args.test_alpha
        )));
    }
    let minimum = ((1.0 / args.test_alpha).round() as usize).max(stats::MIN_UNIFORMITY_SAMPLES);
    let pool = thread_pool(args.jobs)?;
    let (sequences, seeds) = pool.install(|| load_sequences(args))?;
    if sequences.len() < minimum {
        return Err(Failure::validation(format!(
            "two-level evaluation needs at least {minimum} sequences, got {}",
            sequences.len()
        )));
    }

    let mut summaries: Vec<TwoLevelReport> = Vec::new();
    let mut details = String::from("sequence,test,statistic,p_value,pass\n");
    let mut skipped = Vec::new();
    for (name, run) in SUB_TESTS {
        let per_sequence: cml_core::Result<Vec<Vec<TestReport>>> = pool.install(|| {
            sequences
                .par_iter()
                .map(|bits| run(bits, args.block_len, args.test_alpha))
                .collect()
        });
        let per_sequence = match per_sequence {
            Ok(reports) => reports,
            Err(Error::InsufficientData(msg)) => {
                eprintln!("warning: skipping {name}: {msg}");
                skipped.push(name);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let columns = per_sequence[0].len();
        for column in 0..columns {
            let reports: Vec<TestReport> = per_sequence.iter().map(|r| r[column].clone()).collect();
            for (i, r) in reports.iter().enumerate() {
                details.push_str(&format!("{i},{},{},{},{}\n", r.name, r.statistic, r.p_value, r.pass));
            }
            summaries.push(stats::two_level_evaluate(&reports, args.test_alpha)?);
        }
    }

    for s in &summaries {
        eprintln!(
            "{:<16} pass rate {:.5} (threshold {:.5})  P-value_T {:.6}  {}",
            s.name,
            s.pass_rate,
            s.pass_rate_threshold,
            s.p_value_t,
            if s.pass() { "PASS" } else { "FAIL" }
        );
    }
    emit(args.out.as_deref(), stats::two_level_csv(&summaries).as_bytes())?;
    let mut outputs: Vec<PathBuf> = args.out.iter().cloned().collect();
    if let Some(path) = &args.details {
        write_file(path, details.as_bytes())?;
        outputs.push(path.clone());
    }
    let passed = summaries.iter().filter(|s| s.pass()).count();
    Ok(Outcome {
        seeds,
        outputs,
        results: json!({
            "sequences": sequences.len(),
            "sub_tests_passed": passed,
            "sub_tests_run": summaries.len(),
            "skipped": skipped,
            "summary": summaries.iter().map(|s| json!({
                "sub_test": s.name,
                "pass_rate": s.pass_rate,
                "pass_rate_threshold": s.pass_rate_threshold,
                "p_value_t": s.p_value_t,
                "pass": s.pass(),
            })).collect::<Vec<_>>(),
        }),
    })
}

/// Timing of repeated generation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub bits_per_second: f64,
}

/// Time `repeats` runs of gate plus generation of `bytes` bytes.
pub fn time_generation(pair: &InstancePair, bytes: usize, repeats: usize) -> cml_core::Result<Timing> {
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let mut extractor = Extractor::new(pair)?;
        let out = extractor.take_bytes(bytes)?;
        samples.push(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    let mean = samples.iter().sum::<f64>() / repeats as f64;
    Ok(Timing {
        mean_seconds: mean,
        min_seconds: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_seconds: samples.iter().copied().fold(0.0, f64::max),
        bits_per_second: 8.0 * bytes as f64 / mean,
    })
}

pub fn bench(args: &BenchArgs) -> CliResult<Outcome> {
    args.extract.check()?;
    if args.repeats == 0 || args.bytes == 0 {
        return Err(Failure::validation("--bytes and --repeats must be positive"));
    }
    let pair = args.extract.pair(0)?;
    let timing = time_generation(&pair, args.bytes, args.repeats)?;
    let report = json!({
        "bytes": args.bytes,
        "repeats": args.repeats,
        "mean_ms": timing.mean_seconds * 1e3,
        "min_ms": timing.min_seconds * 1e3,
        "max_ms": timing.max_seconds * 1e3,
        "bits_per_second": timing.bits_per_second,
    });
    println!(
        "{} bytes x {} runs: mean {:.3} ms, min {:.3} ms, max {:.3} ms, {:.3e} bits/s",
        args.bytes,
        args.repeats,
        timing.mean_seconds * 1e3,
        timing.min_seconds * 1e3,
        timing.max_seconds * 1e3,
        timing.bits_per_second
    );
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(path, (text + "\n").as_bytes())?;
    }
    Ok(Outcome {
        seeds: args.extract.seeds(1),
        outputs: args.out.iter().cloned().collect(),
        results: report,
    })
}
