//! Command-line front end: `estimate`, `verify`, `sweep`, `factory`, `zeta`.
//!
//! Settings come from flags, then a `key = value` config file (`--config`),
//! then defaults. Every output starts with the resolved configuration.
//! Exit codes: 0 success, 1 failed check or failed run, 2 usage or
//! configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::approx::{CoefficientScheme, FunctionSpec, NacuPeres, Side, TableScheme};
use crate::error::{Error, Result};
use crate::estimator::{self, stream_rng, DrawRecord, EstimatorConfig, ReplayCoins, ReplicateSummary, Stream};
use crate::oracle::{verify_suite, VerifyOptions, MAX_EXACT_L};
use crate::truncation::{TruncationLaw, DEFAULT_LAMBDA};

#[derive(Debug, Parser)]
#[command(
    name = "debias",
    version,
    about = "Debiased Bernoulli factory estimator and exact verification oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seeded replicate draws of the estimator.
    Estimate(EstimateArgs),
    /// Exact-arithmetic checks of a scheme; exit 1 if any fails.
    Verify(CommonArgs),
    /// Replicate summaries over a grid of x and lambda values (CSV).
    Sweep(SweepArgs),
    /// f(x)-coins as ASCII 0/1.
    Factory(FactoryArgs),
    /// zeta(lambda, k), pmf and survival of the truncation law (CSV).
    Zeta(ZetaArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// const13, lin, quad or trig.
    #[arg(long)]
    preset: Option<String>,
    /// Coefficient table (`n k a b` lines) instead of a preset.
    #[arg(long)]
    coeff_file: Option<PathBuf>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// `auto` or a support start >= the scheme minimum.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// lower or upper.
    #[arg(long)]
    variant: Option<String>,
    /// Output file; records are only written when this is given.
    #[arg(long)]
    output: Option<PathBuf>,
    /// jsonl or csv.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    ell_max: Option<u64>,
    #[arg(long)]
    n_max: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Replay coins from a 0/1 file instead of simulating them.
    #[arg(long)]
    coins_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated x values.
    #[arg(long, value_delimiter = ',')]
    xs: Option<Vec<String>>,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct FactoryArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    count: Option<u64>,
}

#[derive(Debug, Args)]
struct ZetaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Table rows from n = k.
    #[arg(long)]
    rows: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown format `{other}` (expected jsonl|csv)"))),
        }
    }
}

/// Fully resolved settings of one run.
///
/// `output` and `workers` do not affect results and are left out of the
/// serialized form, so outputs compare byte for byte across them.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub preset: Option<String>,
    pub coeff_file: Option<String>,
    pub x: f64,
    pub lambda: f64,
    pub k: u64,
    pub k_auto: bool,
    pub reps: u64,
    pub seed: u64,
    pub variant: Side,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coins_file: Option<String>,
    pub ell_max: u64,
    pub n_max: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub xs: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<u64>,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub workers: Option<usize>,
}

const CONFIG_KEYS: [&str; 18] = [
    "preset",
    "coeff-file",
    "x",
    "lambda",
    "k",
    "reps",
    "seed",
    "variant",
    "output",
    "format",
    "coins-file",
    "ell-max",
    "n-max",
    "workers",
    "xs",
    "lambdas",
    "count",
    "rows",
];

/// `key = value` lines; `#` starts a comment, `_` and `-` are interchangeable in keys.
#[derive(Debug, Default)]
struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
            None => Ok(Self::default()),
        }
    }

    /// The flag if given, else the parsed config value.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn pick_list(&self, flag: Option<Vec<String>>, key: &str) -> Result<Option<Vec<f64>>> {
        let raw = match flag {
            Some(v) => Some(v),
            None => self.values.get(key).map(|v| v.split(',').map(str::to_string).collect()),
        };
        raw.map(|items| {
            items
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad number `{s}` in `{key}`")))
                })
                .collect()
        })
        .transpose()
    }
}

/// Defaults for subcommand-specific settings.
#[derive(Debug, Default)]
struct Extras {
    coins_file: Option<PathBuf>,
    xs: Option<Vec<String>>,
    lambdas: Option<Vec<String>>,
    count: Option<u64>,
    rows: Option<u64>,
}

struct Resolved {
    config: RunConfig,
    scheme: Arc<dyn CoefficientScheme>,
}

fn resolve(command: &str, args: CommonArgs, extras: Extras) -> Result<Resolved> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let preset: Option<String> = file.pick(args.preset, "preset")?;
    let coeff_file: Option<PathBuf> = file.pick(args.coeff_file, "coeff-file")?;
    let scheme: Arc<dyn CoefficientScheme> = match (&preset, &coeff_file) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --preset or --coeff-file, not both".into())),
        (Some(p), None) => Arc::new(NacuPeres::new(FunctionSpec::preset(p)?)),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let label = path
                .file_name()
                .map_or("table".into(), |n| n.to_string_lossy().into_owned());
            Arc::new(TableScheme::parse(label, &text)?.validated().0)
        }
        (None, None) if command == "zeta" => Arc::new(NacuPeres::new(FunctionSpec::preset("const13")?)),
        (None, None) => return Err(Error::Config("one of --preset or --coeff-file is required".into())),
    };
    let k_raw: Option<String> = file.pick(args.k, "k")?;
    let (k, k_auto) = match k_raw.as_deref() {
        None | Some("auto") => (scheme.min_support_index(), true),
        Some(v) => (
            v.parse()
                .map_err(|_| Error::Config(format!("bad value `{v}` for `k` (expected auto or an integer)")))?,
            false,
        ),
    };
    let default_format = if command == "sweep" || command == "zeta" {
        Format::Csv
    } else {
        Format::Jsonl
    };
    let lambda = file.pick(args.lambda, "lambda")?.unwrap_or(DEFAULT_LAMBDA);
    let xs = file.pick_list(extras.xs, "xs")?;
    let lambdas = file.pick_list(extras.lambdas, "lambdas")?;
    let config = RunConfig {
        command: command.to_string(),
        preset,
        coeff_file: coeff_file.map(|p| p.display().to_string()),
        x: file.pick(args.x, "x")?.unwrap_or(0.5),
        lambda,
        k,
        k_auto,
        reps: file.pick(args.reps, "reps")?.unwrap_or(1000),
        seed: file.pick(args.seed, "seed")?.unwrap_or(0),
        variant: file
            .pick(args.variant, "variant")?
            .map(|v: String| v.parse())
            .transpose()?
            .unwrap_or(Side::Lower),
        format: file
            .pick(args.format, "format")?
            .map(|v: String| v.parse())
            .transpose()?
            .unwrap_or(default_format),
        coins_file: file
            .pick(extras.coins_file, "coins-file")?
            .map(|p: PathBuf| p.display().to_string()),
        ell_max: file.pick(args.ell_max, "ell-max")?.unwrap_or(50),
        n_max: file.pick(args.n_max, "n-max")?.unwrap_or(20),
        xs: match command {
            "sweep" => xs.unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect()),
            _ => Vec::new(),
        },
        lambdas: match command {
            "sweep" => lambdas.unwrap_or_else(|| vec![lambda]),
            _ => Vec::new(),
        },
        count: match command {
            "factory" => Some(file.pick(extras.count, "count")?.unwrap_or(1000)),
            _ => None,
        },
        rows: match command {
            "zeta" => Some(file.pick(extras.rows, "rows")?.unwrap_or(20)),
            _ => None,
        },
        output: file.pick(args.output, "output")?,
        workers: file.pick(args.workers, "workers")?,
    };
    if config.workers == Some(0) {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    if command == "sweep" && (config.xs.is_empty() || config.lambdas.is_empty()) {
        return Err(Error::Config("sweep needs nonempty x and lambda grids".into()));
    }
    Ok(Resolved { config, scheme })
}

fn estimator_config(r: &Resolved, lambda: f64) -> Result<EstimatorConfig> {
    EstimatorConfig::new(
        r.scheme.clone(),
        TruncationLaw::new(lambda, r.config.k)?,
        r.config.variant,
    )
}

fn config_line(config: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string(&json!({ "config": config }))?)
}

/// Opens `--output`, or `fallback` when none was given.
fn sink<'a>(path: Option<&Path>, fallback: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(fallback),
    })
}

fn cmd_estimate(r: &Resolved, out: &mut dyn Write) -> Result<i32> {
    let cfg = estimator_config(r, r.config.lambda)?;
    let c = &r.config;
    let records = match &c.coins_file {
        Some(path) => replay_records(&cfg, Path::new(path), c.reps, c.seed)?,
        None => estimator::run_replicates_with(&cfg, c.x, c.reps, c.seed, c.workers)?.records,
    };
    let summary = ReplicateSummary::from_records(&records, cfg.certification());
    if let Some(path) = &c.output {
        let mut w = BufWriter::new(File::create(path)?);
        write_records(&mut w, c, &records, &summary)?;
        w.flush()?;
    }
    writeln!(out, "{}", serde_json::to_string(&json!({ "summary": summary }))?)?;
    Ok(0)
}

/// Draws that take their coins, in order, from a replay file.
fn replay_records(cfg: &EstimatorConfig, path: &Path, reps: u64, seed: u64) -> Result<Vec<DrawRecord>> {
    let mut coins = ReplayCoins::from_file(path)?;
    (0..reps)
        .map(|rep| {
            let u = stream_rng(seed, rep, Stream::Truncation).random::<f64>();
            let d = estimator::draw(cfg, &mut coins, u)?;
            Ok(DrawRecord {
                rep,
                l: d.l,
                s: d.s,
                psi: d.psi,
                coins: d.coins_used,
            })
        })
        .collect()
}

fn write_records(w: &mut dyn Write, c: &RunConfig, records: &[DrawRecord], summary: &ReplicateSummary) -> Result<()> {
    match c.format {
        Format::Jsonl => {
            writeln!(w, "{}", config_line(c)?)?;
            for rec in records {
                writeln!(w, "{}", serde_json::to_string(rec)?)?;
            }
            writeln!(w, "{}", serde_json::to_string(&json!({ "summary": summary }))?)?;
        }
        Format::Csv => {
            writeln!(w, "# {}", config_line(c)?)?;
            writeln!(w, "rep,L,S,psi")?;
            for rec in records {
                writeln!(w, "{},{},{},{}", rec.rep, rec.l, rec.s, rec.psi)?;
            }
            writeln!(w, "# {}", serde_json::to_string(&json!({ "summary": summary }))?)?;
        }
    }
    Ok(())
}

fn cmd_verify(r: &Resolved, out: &mut dyn Write) -> Result<i32> {
    let c = &r.config;
    let opts = VerifyOptions {
        n_max: c.n_max,
        l_max: MAX_EXACT_L.min(c.n_max),
        ell_max: c.ell_max,
        lambda: c.lambda,
        k: Some(c.k),
        variant: c.variant,
    };
    let report = verify_suite(r.scheme.clone(), &opts)?;
    write!(out, "{}", report.to_table())?;
    let status = if report.passed() { "all checks passed" } else { "FAILED" };
    writeln!(out, "{status}")?;
    if let Some(path) = &c.output {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &json!({ "config": c, "report": report }))?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_sweep(r: &Resolved, out: &mut dyn Write) -> Result<i32> {
    let c = &r.config;
    let f = r.scheme.function_spec();
    let mut w = sink(c.output.as_deref(), out)?;
    writeln!(w, "# {}", config_line(c)?)?;
    writeln!(w, "x,lambda,k,reps,mean,se,f,mean_coins,min_psi,max_psi")?;
    for &lambda in &c.lambdas {
        let cfg = estimator_config(r, lambda)?;
        for &x in &c.xs {
            let s = estimator::run_replicates_with(&cfg, x, c.reps, c.seed, c.workers)?.summary;
            let fx = f.map_or(String::new(), |spec| spec.evaluate(x).to_string());
            writeln!(
                w,
                "{x},{lambda},{},{},{},{},{fx},{},{},{}",
                c.k, c.reps, s.mean, s.se, s.mean_coins, s.min_psi, s.max_psi
            )?;
        }
    }
    w.flush()?;
    Ok(0)
}

fn cmd_factory(r: &Resolved, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let c = &r.config;
    let cfg = estimator_config(r, c.lambda)?;
    let count = c.count.unwrap_or(0);
    let bits = estimator::factory_coins(&cfg, c.x, count, c.seed, c.workers)?;
    let ones = bits.iter().filter(|&&b| b).count() as u64;
    let summary = json!({ "factory": {
        "count": count,
        "ones": ones,
        "mean": ones as f64 / count.max(1) as f64,
        "f": r.scheme.function_spec().map(|s| s.evaluate(c.x)),
    }});
    let to_file = c.output.is_some();
    {
        let mut w = sink(c.output.as_deref(), out)?;
        writeln!(w, "# {}", config_line(c)?)?;
        for chunk in bits.chunks(64) {
            let line: String = chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    // the summary goes wherever the bits do not
    if to_file {
        writeln!(out, "{summary}")?;
    } else {
        writeln!(err, "{summary}")?;
    }
    Ok(0)
}

fn cmd_zeta(r: &Resolved, out: &mut dyn Write) -> Result<i32> {
    let c = &r.config;
    let law = TruncationLaw::new(c.lambda, c.k)?;
    let mut w = sink(c.output.as_deref(), out)?;
    writeln!(w, "# {}", config_line(c)?)?;
    writeln!(w, "# zeta({}, {}) = {}", c.lambda, c.k, law.zeta_norm())?;
    writeln!(w, "n,pmf,survival")?;
    for n in c.k..c.k + c.rows.unwrap_or(0) {
        writeln!(w, "{n},{},{}", law.pmf(n), law.survival(n)?)?;
    }
    w.flush()?;
    Ok(0)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ReplayExhausted { .. }
        | Error::TruncationCap { .. }
        | Error::EvaluationLimit(_)
        | Error::CoefficientWindow { .. }
        | Error::Io(_) => 1,
        _ => 2,
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let outcome = (|| match cli.command {
        Command::Estimate(a) => {
            let r = resolve(
                "estimate",
                a.common,
                Extras {
                    coins_file: a.coins_file,
                    ..Extras::default()
                },
            )?;
            cmd_estimate(&r, out)
        }
        Command::Verify(a) => cmd_verify(&resolve("verify", a, Extras::default())?, out),
        Command::Sweep(a) => {
            let r = resolve(
                "sweep",
                a.common,
                Extras {
                    xs: a.xs,
                    lambdas: a.lambdas,
                    ..Extras::default()
                },
            )?;
            cmd_sweep(&r, out)
        }
        Command::Factory(a) => {
            let r = resolve(
                "factory",
                a.common,
                Extras {
                    count: a.count,
                    ..Extras::default()
                },
            )?;
            cmd_factory(&r, out, err)
        }
        Command::Zeta(a) => cmd_zeta(
            &resolve(
                "zeta",
                a.common,
                Extras {
                    rows: a.rows,
                    ..Extras::default()
                },
            )?,
            out,
        ),
    })();
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("debias").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn config_file_parsing() {
        let f = ConfigFile::parse("# comment\npreset = quad\nell_max = 30 # trailing\n\n").unwrap();
        assert_eq!(f.values.get("ell-max").map(String::as_str), Some("30"));
        assert!(matches!(
            ConfigFile::parse("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(ConfigFile::parse("x = 1\nx = 2").is_err());
        assert!(ConfigFile::parse("x 1").is_err());
        assert_eq!(
            f.pick(Some("lin".to_string()), "preset").unwrap().as_deref(),
            Some("lin")
        );
        assert_eq!(f.pick::<String>(None, "preset").unwrap().as_deref(), Some("quad"));
        assert!(f.pick::<u64>(None, "preset").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&["estimate"]).0, 2);
        assert_eq!(run_str(&["estimate", "--preset", "nope"]).0, 2);
        assert_eq!(run_str(&["sweep", "--preset", "lin", "--lambdas", ""]).0, 2);
        assert_eq!(run_str(&["frobnicate"]).0, 2);
        assert_eq!(run_str(&["estimate", "--preset", "quad", "--k", "1"]).0, 2);
        assert_eq!(run_str(&["factory", "--preset", "quad"]).0, 2);
        assert_eq!(run_str(&["--help"]).0, 0);
    }

    #[test]
    fn estimate_constant() {
        let (code, out, _) = run_str(&[
            "estimate", "--preset", "const13", "--x", "0.5", "--reps", "100", "--seed", "1",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert!((v["summary"]["mean"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(v["summary"]["variance"].as_f64().unwrap() < 1e-30);
    }

    #[test]
    fn zeta_table() {
        let (code, out, _) = run_str(&["zeta", "--lambda", "2", "--k", "1", "--rows", "3"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[2], "n,pmf,survival");
        assert!(lines[3].starts_with("1,0.6079271018540"));
        assert!(lines[3].ends_with(",1"));
    }
}
