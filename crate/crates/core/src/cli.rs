//! The `detcap` command line.
//!
//! Scheme files are JSON `{"assignment": [1, 2, ...]}` (1-based detectors);
//! configuration files are JSON `{"probs": [0.2, 0.8, ...]}`. Alphabets on the
//! command line are `0.2,0.8` (uniform) or `0.2:0.3,0.8:0.7` (value:weight).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::capacity_harness::{run_experiment, ExperimentConfig};
use crate::config_model::{ConfigAlphabet, Configuration};
use crate::detection_core::{detection_pmf, empirical_pmf, DetectionDistribution};
use crate::ensemble_analysis::{
    exact_mean_t, replicate_samples, sandwich_from_samples, EnsembleReport, QuenchedMode,
};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::scheme_model::{Evaluation, FamilySpec, Scheme, DEFAULT_MC_SAMPLES};
use crate::verify;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DETCAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "detcap", version, about = "Detection-time capacity of randomized detection schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Mc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact detection law of one scheme on one configuration.
    Exact {
        #[arg(long, required_unless_present = "demo")]
        scheme_file: Option<PathBuf>,
        #[arg(long, required_unless_present = "demo")]
        config_file: Option<PathBuf>,
        /// Use the bundled two-detector example.
        #[arg(long, conflicts_with_all = ["scheme_file", "config_file"])]
        demo: bool,
    },
    /// Bernoulli simulation of rounds, with the exact law alongside.
    Simulate {
        #[arg(long, required_unless_present = "demo")]
        scheme_file: Option<PathBuf>,
        #[arg(long, required_unless_present = "demo")]
        config_file: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["scheme_file", "config_file"])]
        demo: bool,
        #[arg(long, default_value_t = 100_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Prefix distinctness a_k and pairwise disjointness b_k of a family.
    SchemeStats {
        #[arg(long)]
        family: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Method::Exact)]
        method: Method,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Configuration mean/variance of T(p) with the variance bound check.
    Ensemble {
        #[arg(long)]
        family: String,
        #[arg(long)]
        alphabet: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Directory for `ensemble.csv` and `bounds.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment config (a path, or a bundled name such as `theorem1_demo`).
    Run {
        config: String,
        #[arg(long, default_value = "detcap_out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the invariant suite.
    Verify {
        /// Smaller instance counts.
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Deserialize, Serialize)]
struct SchemeFile {
    assignment: Vec<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ConfigFile {
    probs: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_instance(
    scheme_file: Option<&Path>,
    config_file: Option<&Path>,
    demo: bool,
) -> Result<(Scheme, Configuration)> {
    if demo {
        let config = Configuration::from_probs_inferred(&[0.5, 0.5])?;
        return Ok((Scheme::from_one_based(&[1, 2], 2)?, config));
    }
    let (Some(s), Some(c)) = (scheme_file, config_file) else {
        return Err(Error::InvalidArgument("need --scheme-file and --config-file, or --demo".into()));
    };
    let c: ConfigFile = read_json(c)?;
    let config = Configuration::from_probs_inferred(&c.probs)?;
    let s: SchemeFile = read_json(s)?;
    Ok((Scheme::from_one_based(&s.assignment, config.n())?, config))
}

/// `0.2,0.8` or `0.2:0.3,0.8:0.7`.
pub fn parse_alphabet(text: &str) -> Result<ConfigAlphabet> {
    let mut values = Vec::new();
    let mut weights = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let mut it = part.splitn(2, ':');
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidAlphabet(format!("cannot parse {s:?}")))
        };
        values.push(num(it.next().unwrap_or_default())?);
        if let Some(w) = it.next() {
            weights.push(num(w)?);
        }
    }
    if weights.is_empty() {
        ConfigAlphabet::uniform(values)
    } else if weights.len() == values.len() {
        ConfigAlphabet::new(values, weights)
    } else {
        Err(Error::InvalidAlphabet("give a weight for every value or for none".into()))
    }
}

fn law_json(scheme: &Scheme, config: &Configuration, d: &DetectionDistribution) -> serde_json::Value {
    json!({
        "assignment": scheme.one_based(),
        "probs": config.probs(),
        "pmf": d.pmf,
        "mass_at_infinity": d.mass_at_infinity,
        "expected_truncated_time": d.expected_truncated_time(),
        "success_probability": d.success_probability(),
        "conditional_mean": d.conditional_mean(),
    })
}

fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn pretty(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Exact {
            scheme_file,
            config_file,
            demo,
        } => {
            let (scheme, config) =
                load_instance(scheme_file.as_deref(), config_file.as_deref(), demo)?;
            let d = detection_pmf(&scheme, &config)?;
            write_stdout(&pretty(&law_json(&scheme, &config, &d))?)
        }
        Command::Simulate {
            scheme_file,
            config_file,
            demo,
            replicates,
            seed,
        } => {
            let (scheme, config) =
                load_instance(scheme_file.as_deref(), config_file.as_deref(), demo)?;
            let exact = detection_pmf(&scheme, &config)?;
            let emp = empirical_pmf(&scheme, &config, replicates, StreamKey::new(seed))?;
            write_stdout(&pretty(&json!({
                "replicates": replicates,
                "seed": seed,
                "empirical": law_json(&scheme, &config, &emp),
                "exact": law_json(&scheme, &config, &exact),
            }))?)
        }
        Command::SchemeStats {
            family,
            n,
            r,
            k,
            method,
            samples,
            seed,
            format,
        } => {
            let spec: FamilySpec = family.parse()?;
            let fam = spec.build(n, r)?;
            let root = StreamKey::new(seed);
            let eval = |label: u64| match method {
                Method::Exact => Evaluation::Exact,
                Method::Mc => Evaluation::MonteCarlo {
                    samples,
                    stream: root.child(label),
                },
            };
            let mut a = Vec::new();
            let mut b = Vec::new();
            for kk in 1..=k {
                a.push(fam.prefix_distinctness(kk, eval(2 * kk as u64))?);
                b.push(fam.pairwise_disjointness(kk, eval(2 * kk as u64 + 1))?);
            }
            match format {
                Format::Json => write_stdout(&pretty(&json!({
                    "family": spec.label(), "n": n, "r": r, "a_k": a, "b_k": b,
                }))?),
                Format::Csv => {
                    let mut s = String::from("k,a_k,se_a,b_k,se_b\n");
                    for (x, y) in a.iter().zip(&b) {
                        s.push_str(&format!(
                            "{},{},{},{},{}\n",
                            x.k,
                            x.a_k,
                            x.method.std_error(),
                            y.b_k,
                            y.method.std_error()
                        ));
                    }
                    write_stdout(&s)
                }
            }
        }
        Command::Ensemble {
            family,
            alphabet,
            n,
            r,
            replicates,
            seed,
            k,
            format,
            out,
        } => {
            let spec: FamilySpec = family.parse()?;
            let fam = spec.build(n, r)?;
            let alphabet = parse_alphabet(&alphabet)?;
            if replicates < 2 {
                return Err(Error::InvalidArgument("need at least 2 replicates".into()));
            }
            let k = k.min(r);
            let samples = replicate_samples(
                &fam,
                &alphabet,
                replicates,
                k,
                QuenchedMode::Auto,
                StreamKey::new(seed),
            )?;
            let report = EnsembleReport::from_samples(&fam, &samples, exact_mean_t(&fam, &alphabet)?);
            let bounds = if k > 0 {
                Some(sandwich_from_samples(&fam, &alphabet, k, &samples)?)
            } else {
                None
            };
            let csv = format!("{}\n{}\n", EnsembleReport::CSV_HEADER, report.csv_row());
            let bounds_json = pretty(&json!({ "family": spec.label(), "bounds": bounds }))?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("ensemble.csv"), &csv)?;
                std::fs::write(dir.join("bounds.json"), format!("{bounds_json}\n"))?;
            }
            match format {
                Format::Csv => write_stdout(&csv),
                Format::Json => write_stdout(&pretty(&json!({
                    "family": spec.label(),
                    "report": report,
                    "bounds": bounds,
                }))?),
            }
        }
        Command::Run { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg, &out, seed)?;
            let mut s = String::from("family,verdict,predicted\n");
            for v in &summary.verdicts {
                s.push_str(&format!("{},{},{}\n", v.family, v.verdict, v.predicted));
            }
            write_stdout(&s)
        }
        Command::Verify { fast, seed } => {
            let results = verify::run_suite(fast, seed);
            let mut failed = 0;
            for r in &results {
                write_stdout(&r.line())?;
                if !r.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                Err(Error::Model(format!("{failed} invariant check(s) failed")))
            } else {
                Ok(())
            }
        }
    }
}

/// Configures the worker pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

/// Exit status: 0 success, 2 usage errors and missing configs, 1 otherwise.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("detcap: {e}");
        return 2;
    }
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("detcap: {e}");
            match e {
                Error::ConfigNotFound(_) | Error::InvalidArgument(_) | Error::InvalidAlphabet(_) => 2,
                _ => 1,
            }
        }
    }
}
