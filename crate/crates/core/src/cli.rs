//! `additivity` command line.
//!
//! Exit codes for `test`: 0 accept, 1 reject, 2 error. Other commands
//! return 0 on success and 2 on error. Reports go to stdout, warnings and
//! errors to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classic::{
    calibrate, run_classic_test_with, CacheKey, CriticalValueCache, MandelDf, Method,
    ResamplingKind, TestOutcome, DEFAULT_CALIBRATION_REPLICATIONS,
};
use crate::distributions::RngStream;
use crate::error::{AdditivityError, Result};
use crate::ingest::{parse_csv, CsvOptions, Detect};
use crate::modified::{
    modified_tukey_test_with, resampling_test, FitOptions, ResamplingConfig, UpdateMode,
};
use crate::power::{
    default_k_grid, reference_grid, run_grid, write_power_tsv, GeneratorConfig, GridPoint, Scheme,
    DEFAULT_REPLICATIONS, FAST_REPLICATIONS, REFERENCE_B_VALUES,
};

pub const CACHE_ENV: &str = "ADDITIVITY_CACHE";
pub const DEFAULT_CACHE_FILE: &str = "additivity-critical-values.tsv";

/// Row count below which `--adjust auto` switches to the permutation test.
pub const SMALL_SAMPLE_THRESHOLD: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "additivity",
    version,
    about = "Tests of additivity in two-way layouts without replication"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an additivity test on a CSV grid.
    Test(TestArgs),
    /// Compute and cache a Monte Carlo critical value.
    Calibrate(CalibrateArgs),
    /// Simulate power over a grid of interaction strengths.
    Power(PowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjust {
    None,
    Perm,
    Boot,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MandelDfArg {
    /// (a-1)(b-2)
    Divisor,
    /// (a-1)(b-1)
    Stated,
}

impl From<MandelDfArg> for MandelDf {
    fn from(v: MandelDfArg) -> Self {
        match v {
            MandelDfArg::Divisor => MandelDf::ErrorDivisor,
            MandelDfArg::Stated => MandelDf::Stated,
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    pub path: PathBuf,
    /// tukey, mandel, jg, lbi, tusell or mtukey
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Small-sample adjustment for mtukey; auto permutes when min(a, b) < 20.
    #[arg(long, value_enum, default_value_t = Adjust::None)]
    pub adjust: Adjust,
    /// Resamples for --adjust perm/boot.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Swap rows and columns before testing.
    #[arg(long)]
    pub transpose: bool,
    /// Update rounds of the interaction fit (mtukey).
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Use previous-iteration values in every update (mtukey).
    #[arg(long)]
    pub snapshot: bool,
    #[arg(long, value_enum, default_value_t = MandelDfArg::Divisor)]
    pub mandel_df: MandelDfArg,
    /// Critical-value cache for omnibus tests (also ADDITIVITY_CACHE).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    #[arg(long)]
    pub no_header: bool,
    #[arg(long)]
    pub no_labels: bool,
    /// Print the report as key/value TSV instead of JSON.
    #[arg(long)]
    pub tsv: bool,
    /// Include wall time in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// jg, lbi or tusell
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long)]
    pub a: usize,
    #[arg(long)]
    pub b: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPLICATIONS)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Interaction schemes, comma separated (A, B, none).
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    pub scheme: Vec<Scheme>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub tests: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub kgrid: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full reference design: schemes A and B, b in {10, 50}, all tests.
    #[arg(long)]
    pub paper: bool,
    /// 1 000 replications instead of 10 000.
    #[arg(long)]
    pub fast: bool,
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_REPLICATIONS)]
    pub cal_reps: usize,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: AdditivityError| e.to_string())
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: AdditivityError| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub alpha: f64,
    pub adjust: Adjust,
    /// Adjustment actually applied after resolving `auto`.
    pub applied_adjust: Adjust,
    pub samples: usize,
    pub seed: u64,
    pub transpose: bool,
    pub iterations: usize,
    pub update_mode: UpdateMode,
    pub mandel_df: MandelDf,
    pub calibration_replications: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: InputDigest,
    pub method: Method,
    pub options: ReportOptions,
    pub decision: Decision,
    pub outcome: TestOutcome,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl RunReport {
    pub fn to_tsv(&self) -> String {
        let o = &self.outcome;
        let mut rows = vec![
            ("path", self.input.path.clone()),
            ("rows", self.input.rows.to_string()),
            ("cols", self.input.cols.to_string()),
            ("sha256", self.input.sha256.clone()),
            ("method", self.method.to_string()),
            ("alpha", self.options.alpha.to_string()),
            (
                "adjust",
                format!("{:?}", self.options.applied_adjust).to_lowercase(),
            ),
            ("seed", self.options.seed.to_string()),
            ("statistic", o.statistic.to_string()),
            ("critical_value", o.critical_value.to_string()),
            (
                "rejection_side",
                format!("{:?}", o.rejection_side).to_lowercase(),
            ),
            ("decision", format!("{:?}", self.decision).to_lowercase()),
            (
                "p_value",
                o.p_value
                    .map_or_else(|| "NA".to_string(), |p| p.to_string()),
            ),
        ];
        for w in &self.warnings {
            rows.push(("warning", w.clone()));
        }
        if let Some(t) = self.wall_time_ms {
            rows.push(("wall_time_ms", t.to_string()));
        }
        rows.into_iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect()
    }
}

fn cache_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

fn omnibus_calibration(
    method: Method,
    a: usize,
    b: usize,
    alpha: f64,
    seed: u64,
    cache: Option<&Path>,
) -> Result<Option<crate::classic::MonteCarloCritical>> {
    let Some(path) = cache_path(cache) else {
        return Ok(None);
    };
    let mut store = CriticalValueCache::open(&path)?;
    let key = CacheKey::new(method, a, b, alpha, DEFAULT_CALIBRATION_REPLICATIONS, seed);
    if let Some(hit) = store.get(&key) {
        return Ok(Some(hit));
    }
    let cal = calibrate(method, a, b, alpha, DEFAULT_CALIBRATION_REPLICATIONS, seed)?;
    store.insert(cal.clone())?;
    store.save()?;
    Ok(Some(cal))
}

pub fn cmd_test(args: &TestArgs) -> Result<RunReport> {
    let started = Instant::now();
    if args.iterations == 0 {
        return Err(AdditivityError::Config(
            "--iterations must be at least 1".into(),
        ));
    }
    if !args.delimiter.is_ascii() {
        return Err(AdditivityError::Config(
            "delimiter must be a single ASCII character".into(),
        ));
    }
    let bytes = fs::read(&args.path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| AdditivityError::Parse {
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let csv_options = CsvOptions {
        delimiter: args.delimiter as u8,
        header: if args.no_header {
            Detect::Never
        } else {
            Detect::Auto
        },
        labels: if args.no_labels {
            Detect::Never
        } else {
            Detect::Auto
        },
    };
    let mut data = parse_csv(&text, &csv_options)?;
    if args.transpose {
        data = data.transpose();
    }
    let (a, b) = (data.rows(), data.cols());
    let fit = FitOptions {
        iterations: args.iterations,
        mode: if args.snapshot {
            UpdateMode::Snapshot
        } else {
            UpdateMode::Sequential
        },
    };

    let applied = match (args.method, args.adjust) {
        (Method::ModifiedTukey, Adjust::Auto) if a.min(b) < SMALL_SAMPLE_THRESHOLD => Adjust::Perm,
        (Method::ModifiedTukey, Adjust::Auto) => Adjust::None,
        (Method::ModifiedTukey, adj) => adj,
        (_, Adjust::None | Adjust::Auto) => Adjust::None,
        (m, adj) => {
            return Err(AdditivityError::Config(
                format!("--adjust {adj:?} applies only to mtukey, not {m}").to_lowercase(),
            ))
        }
    };

    let outcome = match args.method {
        Method::ModifiedTukey => {
            let stream = RngStream::new(args.seed, 0);
            match applied {
                Adjust::Perm | Adjust::Boot => {
                    let kind = if applied == Adjust::Perm {
                        ResamplingKind::Permutation
                    } else {
                        ResamplingKind::Bootstrap
                    };
                    let config = ResamplingConfig {
                        kind,
                        n_samples: args.samples,
                        stream,
                        fit,
                    };
                    resampling_test(&data, args.alpha, &config)?
                }
                _ => modified_tukey_test_with(&data, args.alpha, &fit)?,
            }
        }
        m if m.is_omnibus() => {
            let cal = omnibus_calibration(m, a, b, args.alpha, args.seed, args.cache.as_deref())?;
            let stream = cal.is_none().then(|| RngStream::new(args.seed, 0));
            run_classic_test_with(
                &data,
                m,
                args.alpha,
                cal.as_ref(),
                stream,
                args.mandel_df.into(),
            )?
        }
        m => run_classic_test_with(&data, m, args.alpha, None, None, args.mandel_df.into())?,
    };

    let digest = Sha256::digest(&bytes);
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(RunReport {
        input: InputDigest {
            path: args.path.display().to_string(),
            rows: a,
            cols: b,
            sha256,
        },
        method: args.method,
        options: ReportOptions {
            alpha: args.alpha,
            adjust: args.adjust,
            applied_adjust: applied,
            samples: args.samples,
            seed: args.seed,
            transpose: args.transpose,
            iterations: args.iterations,
            update_mode: fit.mode,
            mandel_df: args.mandel_df.into(),
            calibration_replications: DEFAULT_CALIBRATION_REPLICATIONS,
        },
        decision: if outcome.reject {
            Decision::Reject
        } else {
            Decision::Accept
        },
        warnings: outcome.warnings.clone(),
        outcome,
        wall_time_ms: args.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
    })
}

pub fn cmd_calibrate(
    args: &CalibrateArgs,
) -> Result<(crate::classic::MonteCarloCritical, Vec<String>)> {
    if !args.method.is_omnibus() {
        return Err(AdditivityError::Config(format!(
            "{} uses an F reference and needs no calibration",
            args.method
        )));
    }
    let path =
        cache_path(args.cache.as_deref()).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_FILE));
    let mut store = CriticalValueCache::open(&path)?;
    let cal = calibrate(
        args.method,
        args.a,
        args.b,
        args.alpha,
        args.reps,
        args.seed,
    )?;
    if store.insert(cal.clone())? {
        store.save()?;
    }
    let mut warnings = Vec::new();
    if cal.is_uninformative() {
        warnings.push(format!(
            "uninformative test: min(a, b) - 1 = 1, critical value {}",
            cal.critical_value
        ));
    }
    Ok((cal, warnings))
}

pub fn cmd_power(args: &PowerArgs) -> Result<String> {
    let reps = args.reps.unwrap_or(if args.fast {
        FAST_REPLICATIONS
    } else {
        DEFAULT_REPLICATIONS
    });
    let (grid, tests) = if args.paper {
        let tests = if args.tests.is_empty() {
            vec![
                Method::Tukey,
                Method::Mandel,
                Method::JohnsonGraybill,
                Method::Lbi,
                Method::Tusell,
                Method::ModifiedTukey,
            ]
        } else {
            args.tests.clone()
        };
        (reference_grid(), tests)
    } else {
        let schemes = if args.scheme.is_empty() {
            vec![Scheme::A]
        } else {
            args.scheme.clone()
        };
        let bs = if args.b.is_empty() {
            REFERENCE_B_VALUES.to_vec()
        } else {
            args.b.clone()
        };
        let ks = if args.kgrid.is_empty() {
            default_k_grid()
        } else {
            args.kgrid.clone()
        };
        let tests = if args.tests.is_empty() {
            vec![Method::Tukey]
        } else {
            args.tests.clone()
        };
        let mut grid = Vec::new();
        for &scheme in &schemes {
            for &b in &bs {
                for &k in &ks {
                    grid.push(GridPoint { scheme, k, b });
                }
            }
        }
        (grid, tests)
    };
    let template = GeneratorConfig::reference(10, Scheme::A, 0.0);
    let cells = run_grid(
        &template,
        &grid,
        &tests,
        args.alpha,
        reps,
        args.cal_reps,
        args.seed,
    )?;
    let mut buf = Vec::new();
    write_power_tsv(&mut buf, &cells)?;
    let table = String::from_utf8(buf).expect("tsv is utf-8");
    if let Some(path) = &args.out {
        fs::write(path, &table)?;
    }
    Ok(table)
}

/// Parses `args` and executes the command, returning the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Test(args) => cmd_test(args).and_then(|report| {
            for w in &report.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            let text = if args.tsv {
                report.to_tsv()
            } else {
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
            };
            stdout.write_all(text.as_bytes())?;
            Ok(if report.outcome.reject { 1 } else { 0 })
        }),
        Command::Calibrate(args) => cmd_calibrate(args).and_then(|(cal, warnings)| {
            for w in &warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            let text = serde_json::to_string_pretty(&cal).expect("calibration serializes");
            writeln!(stdout, "{text}")?;
            Ok(0)
        }),
        Command::Power(args) => cmd_power(args).and_then(|table| {
            if args.out.is_none() {
                stdout.write_all(table.as_bytes())?;
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error"))
        .try_init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
