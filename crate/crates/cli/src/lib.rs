//! The `miml` command line: `synth`, `train`, `eval` and `cv`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use miml_core::dataio::{parse_dataset, serialize_dataset, Config};
use miml_core::harness::{generate, paired_t_test, random_split_eval, SplitReport, SynthSpec};
use miml_core::{train, Algorithm, MetricReport, MimlDataset, MimlError, TrainedModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "MIML_THREADS";

const ALGO_NAMES: [&str; 5] = ["mimlboost", "mimlsvm", "dmimlsvm", "insdif", "subcod"];

#[derive(Debug, Parser)]
#[command(
    name = "miml",
    version,
    about = "Multi-instance multi-label learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a `synth.*` spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `synth.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a learner and write the model file.
    Train {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ALGO_NAMES))]
        algo: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the learner's seed key.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a model on a dataset and print the seven criteria.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Print `criterion=value` lines instead of the table.
        #[arg(long)]
        lines: bool,
    },
    /// Repeated random-split evaluation, optionally paired against a second learner.
    Cv {
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ALGO_NAMES))]
        algo: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        runs: usize,
        #[arg(long, default_value_t = 0.75)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Second learner for a paired t-test on every criterion.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(ALGO_NAMES))]
        compare: Option<String>,
    },
}

/// A failed command, tagged with its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<MimlError> for Failure {
    fn from(e: MimlError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if matches!(e, MimlError::Config(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Runs one command line. `args` includes the program name.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = thread_pool().and_then(|pool| match pool {
        Some(pool) => pool.install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    });
    match result {
        Ok(text) => match out.write_all(text.as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(err, "error: cannot write output: {e}");
                EXIT_DATA
            }
        },
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            if let Failure::Usage(_) = f {
                let _ = writeln!(err, "run `miml --help` for usage");
            }
            f.code()
        }
    }
}

fn thread_pool() -> Outcome<Option<rayon::ThreadPool>> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            Failure::Usage(format!(
                "{THREADS_VAR} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))
}

fn dispatch(command: Command) -> Outcome<String> {
    match command {
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Train {
            algo,
            data,
            model,
            config,
            seed,
        } => train_cmd(&algo, &data, &model, config.as_deref(), seed),
        Command::Eval { model, data, lines } => eval(&model, &data, lines),
        Command::Cv {
            algo,
            data,
            runs,
            train_frac,
            seed,
            config,
            compare,
        } => cv(&CvArgs {
            algo: &algo,
            data: &data,
            runs,
            train_frac,
            seed,
            config: config.as_deref(),
            compare: compare.as_deref(),
        }),
    }
}

fn read(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome<()> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn algorithm(name: &str) -> Outcome<Algorithm> {
    name.parse().map_err(|_| {
        let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
        Failure::Usage(format!(
            "unknown algorithm {name:?}; expected one of {}",
            known.join(", ")
        ))
    })
}

fn load_config(path: Option<&Path>) -> Outcome<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            Config::parse(&read(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn load_dataset(path: &Path) -> Outcome<MimlDataset> {
    parse_dataset(&read(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Outcome<String> {
    let mut cfg = load_config(Some(spec_path))?;
    if let Some(s) = seed {
        cfg.set("synth.seed", s.to_string());
    }
    let spec = SynthSpec::from_config(&cfg)
        .map_err(|e| Failure::Usage(format!("{}: {e}", spec_path.display())))?;
    let data = generate(&spec)?;
    write(out, &serialize_dataset(&data.dataset)?)?;
    Ok(format!(
        "wrote {} bags ({} instances, T={}, d={}) to {}\n",
        data.dataset.len(),
        data.dataset.n_instances(),
        data.dataset.n_labels(),
        data.dataset.dim(),
        out.display()
    ))
}

/// Config restricted to `algo`'s keys, with the seed override applied.
fn learner_config(algo: Algorithm, cfg: &Config, seed: Option<u64>) -> Config {
    let mut own = Config::default();
    for (k, v) in cfg.entries() {
        if algo.config_keys().contains(&k.as_str()) {
            own.set(k.clone(), v.clone());
        }
    }
    if let (Some(s), Some(key)) = (seed, algo.seed_key()) {
        own.set(key, s.to_string());
    }
    own
}

fn train_cmd(
    algo: &str,
    data: &Path,
    model_path: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Outcome<String> {
    let algo = algorithm(algo)?;
    let cfg = load_config(config)?;
    cfg.check_keys(algo.config_keys())
        .map_err(|e| Failure::Usage(format!("{e} (not a {algo} setting)")))?;
    let ds = load_dataset(data)?;
    let model = train(algo, &ds, &learner_config(algo, &cfg, seed))?;
    write(model_path, &model.to_text()?)?;
    Ok(format!(
        "trained {algo} on {} bags; model written to {}\n",
        ds.len(),
        model_path.display()
    ))
}

fn eval(model_path: &Path, data: &Path, lines: bool) -> Outcome<String> {
    let model = TrainedModel::from_text(&read(model_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", model_path.display())))?;
    let ds = load_dataset(data)?;
    let preds = model.model.predict_dataset(&ds)?;
    let truth: Vec<_> = ds.label_sets().cloned().collect();
    let report = MetricReport::evaluate(&preds, &truth, ds.n_labels())?;
    Ok(if lines {
        report.to_lines()
    } else {
        report.to_table()
    })
}

struct CvArgs<'a> {
    algo: &'a str,
    data: &'a Path,
    runs: usize,
    train_frac: f64,
    seed: u64,
    config: Option<&'a Path>,
    compare: Option<&'a str>,
}

fn cv_report(
    algo: Algorithm,
    ds: &MimlDataset,
    cfg: &Config,
    args: &CvArgs,
) -> Outcome<SplitReport> {
    Ok(random_split_eval(
        ds,
        args.train_frac,
        args.runs,
        args.seed,
        |train_set, test, s| {
            let model = train(algo, train_set, &learner_config(algo, cfg, Some(s)))?;
            model.model.predict_dataset(test)
        },
    )?)
}

fn cv(args: &CvArgs) -> Outcome<String> {
    let algo = algorithm(args.algo)?;
    let other = args.compare.map(algorithm).transpose()?;
    if args.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
        return Err(Failure::Usage(format!(
            "--train-frac must lie in (0, 1), got {}",
            args.train_frac
        )));
    }
    let cfg = load_config(args.config)?;
    let allowed: Vec<&str> = std::iter::once(algo)
        .chain(other)
        .flat_map(|a| a.config_keys().iter().copied())
        .collect();
    cfg.check_keys(&allowed)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let ds = load_dataset(args.data)?;

    let first = cv_report(algo, &ds, &cfg, args)?;
    let mut text = String::new();
    writeln!(
        text,
        "{} runs, train fraction {}, seed {}, {} bags",
        args.runs,
        args.train_frac,
        args.seed,
        ds.len()
    )
    .unwrap();
    let Some(other) = other else {
        writeln!(text, "{algo}").unwrap();
        text.push_str(&first.to_table());
        return Ok(text);
    };

    let second = cv_report(other, &ds, &cfg, args)?;
    let (m1, s1, m2, s2) = (
        first.means(),
        first.std_devs(),
        second.means(),
        second.std_devs(),
    );
    writeln!(
        text,
        "{:<10} {:>13} {:>13} {:>9}  significant",
        "criterion",
        algo.name(),
        other.name(),
        "t"
    )
    .unwrap();
    for (k, name) in MetricReport::NAMES.iter().enumerate() {
        let cell = |m: f64, s: f64| format!("{m:.3}\u{b1}{s:.3}");
        let (t, sig) = if args.runs >= 2 {
            let test = paired_t_test(&first.column(k), &second.column(k), 0.05)?;
            (
                format!("{:.3}", test.t),
                if test.significant { "yes" } else { "no" },
            )
        } else {
            ("-".to_owned(), "-")
        };
        writeln!(
            text,
            "{name:<10} {:>13} {:>13} {t:>9}  {sig}",
            cell(m1[k], s1[k]),
            cell(m2[k], s2[k])
        )
        .unwrap();
    }
    Ok(text)
}
