//! Command-line front end.
//!
//! Every value can come from a flag or from a flat `key=value` config file
//! (`--config`); flags win. Config keys are the long flag names without the
//! leading dashes, e.g. `L=8`, `modes=10:1,40:1.5`, `base-seed=3`.
//!
//! Exit codes: 0 success, 1 I/O or numerical failure, 2 unparsable flags or
//! config values, 3 invalid model, 4 infeasible Monte Carlo configuration.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::detector::{detect, DEFAULT_SLOPES};
use crate::error::{Error, Result};
use crate::harness::{auto_sigma, run_montecarlo, SigmaRule, TrialConfig};
use crate::hermite::ModeIndex;
use crate::spectrogram::{
    evaluate_field, level_set, level_set_csv, level_set_pbm, magnitude_csv, magnitude_pgm,
    max_magnitude, write_file, Grid, ModeSpec, DEFAULT_LEVEL_FACTOR,
};
use crate::theory::{calibrate_k, ThresholdBundle, CALIBRATION_DRAWS};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "SPECTROLEV_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID_MODEL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

const DEFAULT_L: f64 = 8.0;
const DEFAULT_N: usize = 256;

#[derive(Debug, Parser)]
#[command(
    name = "spectrolev",
    version,
    about = "Hermite mode detection from Gabor spectrogram level sets"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (falls back to SPECTROLEV_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the spectrogram magnitude on the grid as CSV and PGM.
    Spectrogram {
        #[command(flatten)]
        model: ModelArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the level set at 0.2 m_L as PBM and CSV.
        #[arg(long)]
        level_set: bool,
    },
    /// Run the detector and print its JSON report.
    Detect {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of lines through the origin.
        #[arg(long)]
        slopes: Option<usize>,
    },
    /// Monte Carlo evaluation on random mode mixtures.
    Montecarlo(MonteCarloArgs),
    /// Print the theoretical thresholds as JSON.
    Theory {
        #[arg(long)]
        k0: Option<u32>,
        #[arg(long = "L")]
        half_width: Option<f64>,
        /// Supremum constant K.
        #[arg(long = "K")]
        k_const: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Estimate K from pure-noise suprema.
    Calibrate {
        #[arg(long = "L")]
        half_width: Option<f64>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Half-width of the observation box B_L (default 8).
    #[arg(long = "L")]
    half_width: Option<f64>,
    /// Grid resolution: 2N+1 points per axis (default 256).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Modes as k:lambda[,k:lambda...]; empty for pure noise.
    #[arg(long)]
    modes: Option<String>,
    /// Noise strength: `auto` for 1/(10√log L) or a number (default auto).
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[arg(long = "L")]
    half_width: Option<f64>,
    #[arg(long = "N")]
    n: Option<usize>,
    /// Number of modes per trial.
    #[arg(long)]
    m: Option<usize>,
    /// Minimum separation of peak radii.
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    slopes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Output directory for montecarlo.json and montecarlo.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Values from the config file, looked up when a flag is absent.
#[derive(Debug, Default)]
struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key=value", lineno + 1))
            })?;
            values.insert(
                key.trim().trim_start_matches("--").to_string(),
                value.trim().to_string(),
            );
        }
        Ok(ConfigFile { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag if given, else the parsed config entry.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    Error::Parse(format!("config value for `{key}` is not valid: {v:?}"))
                })
            })
            .transpose()
    }
}

/// Parses `k:lambda[,k:lambda...]`; an empty or blank string means no modes.
pub fn parse_modes(text: &str) -> Result<Vec<(ModeIndex, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (k, lambda) = item.split_once(':').ok_or_else(|| {
                Error::Parse(format!("mode `{item}` is not of the form k:lambda"))
            })?;
            let k = k
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse(format!("bad mode index in `{item}`")))?;
            let lambda = lambda
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad strength in `{item}`")))?;
            Ok((ModeIndex(k), lambda))
        })
        .collect()
}

/// Parses `auto` or a number.
pub fn parse_sigma(text: &str) -> Result<SigmaRule> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("auto") {
        return Ok(SigmaRule::Auto);
    }
    text.parse::<f64>()
        .map(SigmaRule::Fixed)
        .map_err(|_| Error::Parse(format!("sigma must be `auto` or a number, got {text:?}")))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::InvalidModel(_) | Error::Domain(_) | Error::EmptyLevelSet => EXIT_INVALID_MODEL,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Io(_) | Error::Quadrature { .. } => EXIT_FAILURE,
    }
}

fn resolve_threads(flag: Option<usize>, cfg: &ConfigFile) -> Result<Option<usize>> {
    if let Some(t) = cfg.pick(flag, "threads")? {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Parse(format!("{THREADS_ENV} must be an integer, got {v:?}"))),
        _ => Ok(None),
    }
}

/// Runs the CLI on `args` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err((code, e)) => {
            let _ = writeln!(err, "error: {e}");
            code
        }
    }
}

type Outcome = std::result::Result<i32, (i32, Error)>;

fn fail(e: Error) -> (i32, Error) {
    (exit_code(&e), e)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Outcome {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(fail)?,
        None => ConfigFile::default(),
    };
    let threads = resolve_threads(cli.threads, &cfg).map_err(fail)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| fail(Error::Io(format!("cannot start thread pool: {e}"))))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| {
        let out = &mut buf;
        match cli.command {
            Command::Spectrogram {
                model,
                out: dir,
                level_set,
            } => cmd_spectrogram(&cfg, model, dir, level_set, out),
            Command::Detect { model, slopes } => cmd_detect(&cfg, model, slopes, out),
            Command::Montecarlo(args) => cmd_montecarlo(&cfg, args, out),
            Command::Theory {
                k0,
                half_width,
                k_const,
                tau,
                lambda,
            } => cmd_theory(&cfg, k0, half_width, k_const, tau, lambda, out),
            Command::Calibrate {
                half_width,
                n,
                draws,
                base_seed,
            } => cmd_calibrate(&cfg, half_width, n, draws, base_seed, out),
        }
    });
    let _ = out.write_all(&buf);
    result
}

fn model_from(cfg: &ConfigFile, model: ModelArgs) -> Result<(Grid, ModeSpec)> {
    let half_width = cfg.pick(model.half_width, "L")?.unwrap_or(DEFAULT_L);
    let n = cfg.pick(model.n, "N")?.unwrap_or(DEFAULT_N);
    let modes = match model.modes.as_deref().or(cfg.raw("modes")) {
        Some(text) => parse_modes(text)?,
        None => Vec::new(),
    };
    let sigma = match model.sigma.as_deref().or(cfg.raw("sigma")) {
        Some(text) => parse_sigma(text)?,
        None => SigmaRule::Auto,
    };
    let seed = cfg.pick(model.seed, "seed")?.unwrap_or(0);
    let grid = Grid::new(half_width, n)?;
    let sigma = match sigma {
        SigmaRule::Auto if half_width <= 1.0 => {
            return Err(Error::InvalidModel(format!(
                "sigma=auto needs L > 1, got {half_width}"
            )))
        }
        SigmaRule::Auto => auto_sigma(half_width),
        SigmaRule::Fixed(s) => s,
    };
    Ok((grid, ModeSpec::new(modes, sigma, seed)?))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn cmd_spectrogram(
    cfg: &ConfigFile,
    model: ModelArgs,
    dir: Option<PathBuf>,
    with_level_set: bool,
    out: &mut dyn Write,
) -> Outcome {
    let (grid, spec) = model_from(cfg, model).map_err(fail)?;
    let dir = dir
        .or_else(|| cfg.raw("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| fail(io_err(&dir, e)))?;
    let field = evaluate_field(&spec, &grid).map_err(fail)?;

    let mut written = vec![
        (
            dir.join("magnitude.csv"),
            magnitude_csv(&field).into_bytes(),
        ),
        (dir.join("magnitude.pgm"), magnitude_pgm(&field)),
    ];
    let m_l = max_magnitude(&field).m_l;
    if with_level_set
        || cfg
            .raw("level-set")
            .is_some_and(|v| v == "true" || v == "1")
    {
        let ls = level_set(&field, DEFAULT_LEVEL_FACTOR * m_l).map_err(fail)?;
        written.push((dir.join("level_set.pbm"), level_set_pbm(&ls)));
        written.push((dir.join("level_set.csv"), level_set_csv(&ls).into_bytes()));
    }
    for (path, bytes) in &written {
        write_file(path, bytes).map_err(fail)?;
        let _ = writeln!(out, "{}", path.display());
    }
    let _ = writeln!(out, "m_L {m_l}");
    Ok(EXIT_OK)
}

fn cmd_detect(
    cfg: &ConfigFile,
    model: ModelArgs,
    slopes: Option<usize>,
    out: &mut dyn Write,
) -> Outcome {
    let (grid, spec) = model_from(cfg, model).map_err(fail)?;
    let slopes = cfg
        .pick(slopes, "slopes")
        .map_err(fail)?
        .unwrap_or(DEFAULT_SLOPES);
    let field = evaluate_field(&spec, &grid).map_err(fail)?;
    let report = detect(&field, slopes).map_err(fail)?;
    let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    let _ = writeln!(out, "{text}");
    Ok(EXIT_OK)
}

fn montecarlo_config(cfg: &ConfigFile, a: &MonteCarloArgs) -> Result<TrialConfig> {
    let d = TrialConfig::default();
    let sigma = match a.sigma.as_deref().or(cfg.raw("sigma")) {
        Some(text) => parse_sigma(text)?,
        None => d.sigma,
    };
    Ok(TrialConfig {
        half_width: cfg.pick(a.half_width, "L")?.unwrap_or(d.half_width),
        n: cfg.pick(a.n, "N")?.unwrap_or(d.n),
        m: cfg.pick(a.m, "m")?.unwrap_or(d.m),
        w: cfg.pick(a.w, "w")?.unwrap_or(d.w),
        lambda_range: (
            cfg.pick(a.lambda_min, "lambda-min")?
                .unwrap_or(d.lambda_range.0),
            cfg.pick(a.lambda_max, "lambda-max")?
                .unwrap_or(d.lambda_range.1),
        ),
        sigma,
        k_range: (
            d.k_range.0,
            cfg.pick(a.k_max, "k-max")?.unwrap_or(d.k_range.1),
        ),
        slopes: cfg.pick(a.slopes, "slopes")?.unwrap_or(d.slopes),
        trials: cfg.pick(a.trials, "trials")?.unwrap_or(d.trials),
        base_seed: cfg.pick(a.base_seed, "base-seed")?.unwrap_or(d.base_seed),
    })
}

fn cmd_montecarlo(cfg: &ConfigFile, args: MonteCarloArgs, out: &mut dyn Write) -> Outcome {
    let config = montecarlo_config(cfg, &args).map_err(fail)?;
    // any configuration the harness cannot run counts as infeasible here
    let infeasible = |e: Error| match e {
        Error::Io(_) | Error::Parse(_) | Error::Quadrature { .. } => fail(e),
        other => (EXIT_INFEASIBLE, other),
    };
    if config.trials == 0 {
        return Err(infeasible(Error::InvalidModel(
            "trials must be >= 1".into(),
        )));
    }
    config.validate().map_err(infeasible)?;
    let dir = args
        .out
        .or_else(|| cfg.raw("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| fail(io_err(&dir, e)))?;
    let report = run_montecarlo(&config).map_err(infeasible)?;
    let json_path = dir.join("montecarlo.json");
    let csv_path = dir.join("montecarlo.csv");
    write_file(&json_path, report.to_json().as_bytes()).map_err(fail)?;
    write_file(&csv_path, report.to_csv().as_bytes()).map_err(fail)?;
    let _ = writeln!(out, "{}", json_path.display());
    let _ = writeln!(out, "{}", csv_path.display());
    let _ = writeln!(out, "average_mACC {}", report.average_macc);
    Ok(EXIT_OK)
}

fn cmd_theory(
    cfg: &ConfigFile,
    k0: Option<u32>,
    half_width: Option<f64>,
    k_const: Option<f64>,
    tau: Option<f64>,
    lambda: Option<f64>,
    out: &mut dyn Write,
) -> Outcome {
    let get = || -> Result<ThresholdBundle> {
        ThresholdBundle::compute(
            cfg.pick(k0, "k0")?.unwrap_or(1),
            cfg.pick(half_width, "L")?.unwrap_or(DEFAULT_L),
            cfg.pick(k_const, "K")?.unwrap_or(1.0),
            cfg.pick(tau, "tau")?.unwrap_or(1.0),
            cfg.pick(lambda, "lambda")?.unwrap_or(1.0),
        )
    };
    let bundle = get().map_err(fail)?;
    let _ = writeln!(out, "{}", bundle.to_json());
    Ok(EXIT_OK)
}

fn cmd_calibrate(
    cfg: &ConfigFile,
    half_width: Option<f64>,
    n: Option<usize>,
    draws: Option<usize>,
    base_seed: Option<u64>,
    out: &mut dyn Write,
) -> Outcome {
    let get = || -> Result<f64> {
        let grid = Grid::new(
            cfg.pick(half_width, "L")?.unwrap_or(DEFAULT_L),
            cfg.pick(n, "N")?.unwrap_or(DEFAULT_N),
        )?;
        calibrate_k(
            &grid,
            cfg.pick(draws, "draws")?.unwrap_or(CALIBRATION_DRAWS),
            cfg.pick(base_seed, "base-seed")?.unwrap_or(0),
        )
    };
    let k_eff = get().map_err(fail)?;
    let _ = writeln!(out, "K_eff {k_eff}");
    Ok(EXIT_OK)
}
