//! The `mjp` command-line runner.
//!
//! Every subcommand writes into an output directory together with a
//! `run-manifest.json` that records the seed and arguments; `mjp replay`
//! re-runs a manifest. Exit codes: 0 success, 1 usage or configuration
//! error, 2 model or data error, 3 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bayes::{full_bayes_chain_with, InitialDistMode, RatePrior};
use crate::ctbn::{
    ctbn_simulate, run_ctbn_chain_with, CtbnGibbsConfig, CtbnModel, CtbnObservations,
    CtbnTrajectory, LotkaVolterraExperiment,
};
use crate::diagnostics::{
    exact_log_likelihood, exact_smoothed_marginals, stats::quantile, EssReport,
};
use crate::error::Error;
use crate::experiments::{
    chain_ctbn, ctbn_sweep_seconds, dispersed_initializations, ess_run,
    lotka_volterra_sweep_seconds, mmpp_sweep_seconds, summarize_ess_runs, transition_trace, EssRun,
    ScalingProblem, StudyMode,
};
use crate::gibbs::{initial_trajectory, run_chain_with, GibbsConfig};
use crate::mjp::{format_time, gillespie_sample, SufficientStats, TimeInterval, Trajectory};
use crate::mmpp::{
    mmpp_bayes_chain_with, mmpp_simulate, EmissionPrior, MmppLikelihood, PoissonObservations,
};
use crate::model_file::{read_discrete_csv, MjpModel};
use crate::uniformization::OmegaMultiplier;

const MANIFEST: &str = "run-manifest.json";
const DRUG_EFFECT: &str = include_str!("../models/drug_effect.json");

#[derive(Debug, Parser)]
#[command(
    name = "mjp",
    version,
    about = "Exact Gibbs sampling for Markov jump processes, MMPPs and CTBNs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward-simulate a path from an MJP, MMPP or CTBN model file.
    Simulate(SimulateArgs),
    /// Posterior paths (and optionally rates) of an MJP given discrete observations.
    InferMjp(InferMjpArgs),
    /// Posterior paths of an MMPP given event times.
    InferMmpp(InferMmppArgs),
    /// Node-wise Gibbs sampling for a CTBN.
    InferCtbn(InferCtbnArgs),
    /// Exact smoothed state marginals by matrix exponentials (small models).
    Oracle(OracleArgs),
    /// Effective sample size against the uniformization multiplier k.
    EssStudy(EssStudyArgs),
    /// Per-sweep timings for the scaling experiments.
    Bench(BenchArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Base seed; drawn from the clock and recorded when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Uniformization multiplier: Omega = k * max exit rate.
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Independent chains, seeded `seed + r`.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Worker threads for replicate chains.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct RatePriorArgs {
    /// Gamma shape of the exit-rate prior.
    #[arg(long, default_value_t = 1.0)]
    alpha1: f64,
    /// Gamma rate of the exit-rate prior.
    #[arg(long, default_value_t = 1.0)]
    alpha2: f64,
    /// Symmetric Dirichlet concentration of jump targets.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    /// Also record observations of the path at these times.
    #[arg(long, value_delimiter = ',')]
    obs_times: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct InferMjpArgs {
    #[arg(long)]
    model: PathBuf,
    /// `time,value` CSV.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    /// Sample the rate matrix too, starting from the prior.
    #[arg(long)]
    learn_rates: bool,
    /// Tie the initial distribution to the stationary distribution of A.
    #[arg(long)]
    stationary_init: bool,
    #[command(flatten)]
    prior: RatePriorArgs,
    /// Estimate posterior state marginals at these times.
    #[arg(long, value_delimiter = ',')]
    query_times: Vec<f64>,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct InferMmppArgs {
    /// Model file with `emission_rates`.
    #[arg(long)]
    model: PathBuf,
    /// Single-column `time` CSV of events.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    /// Sample A and the emission rates (gamma prior with shape s + 1 for state s).
    #[arg(long)]
    learn_rates: bool,
    #[command(flatten)]
    prior: RatePriorArgs,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    LotkaVolterra,
}

#[derive(Debug, Args)]
struct InferCtbnArgs {
    #[arg(
        long,
        required_unless_present = "experiment",
        conflicts_with = "experiment"
    )]
    model: Option<PathBuf>,
    /// `time,node,state` CSV of exact observations.
    #[arg(long, requires = "model")]
    obs: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true, requires = "model")]
    interval: Vec<f64>,
    /// Built-in synthetic problem; the truth is simulated from the seed.
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Visit nodes in a random order each sweep.
    #[arg(long)]
    random_scan: bool,
    /// Time points of the posterior band.
    #[arg(long, default_value_t = 226)]
    grid: usize,
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    /// `time,value` CSV.
    #[arg(long)]
    obs: PathBuf,
    #[arg(long, num_args = 2, value_names = ["T0", "T1"], allow_negative_numbers = true, required = true)]
    interval: Vec<f64>,
    #[arg(long, value_delimiter = ',', required_unless_present = "grid")]
    query_times: Vec<f64>,
    /// Evenly spaced query times over the interval, endpoints included.
    #[arg(long, conflicts_with = "query_times")]
    grid: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Fixed,
    Joint,
    Both,
}

#[derive(Debug, Args)]
struct EssStudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,3,5,10")]
    k: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1000)]
    burnin: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// States of the random generator.
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    /// Dispersed starting paths for the burn-in traces.
    #[arg(long, default_value_t = 10)]
    trace_inits: usize,
    #[arg(long, default_value_t = 30)]
    trace_sweeps: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    MmppEvents,
    LvCap,
    ChainLength,
    ChainStates,
    DrugInterval,
    All,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Timed repetitions per point; at least 5.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Sweeps per repetition.
    #[arg(long, default_value_t = 100)]
    sweeps: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

/// Recorded next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub replicate_seeds: Vec<u64>,
    /// Arguments after the program name, with `--seed` made explicit and
    /// output flags removed. Input paths are absolute.
    pub args: Vec<String>,
    pub outputs: Vec<String>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_) | Error::DominatingRate { .. } => 1,
            Error::Numerical(_) | Error::NonUniqueStationary(_) | Error::DuplicateTime(_) => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr as a single line.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let raw: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli, raw) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            e.code
        }
    }
}

fn run(cli: Cli, raw: Vec<String>) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a, raw),
        Command::InferMjp(a) => infer_mjp(a, raw),
        Command::InferMmpp(a) => infer_mmpp(a, raw),
        Command::InferCtbn(a) => infer_ctbn(a, raw),
        Command::Oracle(a) => oracle(a, raw),
        Command::EssStudy(a) => ess_study(a, raw),
        Command::Bench(a) => bench(a, raw),
        Command::Replay(a) => replay(a),
    }
}

/// An output directory that refuses to reuse a non-empty directory
/// without `--force`, and remembers what it wrote.
struct OutDir {
    dir: PathBuf,
    written: Mutex<Vec<String>>,
}

impl OutDir {
    fn open(args: &OutputArgs) -> CliResult<Self> {
        let dir = args.out.clone();
        if dir.exists() {
            if !dir.is_dir() {
                return Err(CliError::usage(format!(
                    "{} exists and is not a directory",
                    dir.display()
                )));
            }
            if !args.force && fs::read_dir(&dir)?.next().is_some() {
                return Err(CliError::usage(format!(
                    "output directory {} is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
        }
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Mutex::new(Vec::new()),
        })
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        self.written
            .lock()
            .expect("not poisoned")
            .push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn csv(&self, name: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
        Ok(csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(self.create(name)?))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn finish(
        self,
        command: &str,
        seed: u64,
        replicate_seeds: Vec<u64>,
        raw: &[String],
    ) -> CliResult<()> {
        let mut outputs = self.written.lock().expect("not poisoned").clone();
        outputs.sort();
        outputs.dedup();
        let manifest = RunManifest {
            tool: "mjp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            replicate_seeds,
            args: manifest_args(raw, seed),
            outputs,
        };
        let mut w = BufWriter::new(File::create(self.dir.join(MANIFEST))?);
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn manifest_args(raw: &[String], seed: u64) -> Vec<String> {
    let mut out = Vec::with_capacity(raw.len() + 2);
    let mut it = raw.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--out" | "--seed" => {
                it.next();
            }
            "--force" => {}
            s if s.starts_with("--out=") || s.starts_with("--seed=") => {}
            _ => {
                let p = Path::new(a);
                match p
                    .is_file()
                    .then(|| fs::canonicalize(p))
                    .and_then(|r| r.ok())
                {
                    Some(abs) => out.push(abs.to_string_lossy().into_owned()),
                    None => out.push(a.clone()),
                }
            }
        }
    }
    out.push("--seed".into());
    out.push(seed.to_string());
    out
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let d = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default();
        d.as_secs().wrapping_mul(1_000_000_007) ^ u64::from(d.subsec_nanos())
    })
}

fn interval_of(v: &[f64]) -> CliResult<TimeInterval> {
    match v {
        [a, b] => Ok(TimeInterval::new(*a, *b)?),
        _ => Err(CliError::usage("--interval takes two values T0 T1")),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

enum AnyModel {
    Mjp(MjpModel),
    Ctbn(CtbnModel),
}

fn read_any_model(path: &Path) -> CliResult<AnyModel> {
    let value: Value =
        serde_json::from_reader(std::io::BufReader::new(open(path)?)).map_err(Error::from)?;
    if value.get("nodes").is_some() {
        Ok(AnyModel::Ctbn(CtbnModel::from_json(
            value.to_string().as_bytes(),
        )?))
    } else {
        Ok(AnyModel::Mjp(MjpModel::from_json(
            value.to_string().as_bytes(),
        )?))
    }
}

fn read_mjp_model(path: &Path) -> CliResult<MjpModel> {
    Ok(MjpModel::from_json(std::io::BufReader::new(open(path)?))?)
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn chain_lengths(
    chain: &ChainArgs,
    burnin: usize,
    samples: usize,
) -> CliResult<(OmegaMultiplier, usize, usize)> {
    if chain.replicates == 0 || chain.threads == 0 {
        return Err(CliError::usage(
            "--replicates and --threads must be positive",
        ));
    }
    Ok((
        OmegaMultiplier::new(chain.k)?,
        chain.burnin.unwrap_or(burnin),
        chain.samples.unwrap_or(samples),
    ))
}

fn replicate_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|r| seed.wrapping_add(r)).collect()
}

fn suffix(r: usize, n: usize) -> String {
    if n == 1 {
        String::new()
    } else {
        format!("_r{r}")
    }
}

/// Runs `job(r)` for `r in 0..n` on up to `threads` workers and returns
/// the results in replicate order.
fn run_replicates<T, F>(n: usize, threads: usize, job: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= n {
                    break;
                }
                let out = job(r);
                results.lock().expect("not poisoned")[r] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("not poisoned")
        .into_iter()
        .map(|r| r.expect("every replicate ran"))
        .collect()
}

fn simulate(args: SimulateArgs, raw: Vec<String>) -> CliResult<()> {
    let interval = interval_of(&args.interval)?;
    if let Some(t) = args.obs_times.iter().find(|t| !interval.contains(**t)) {
        return Err(CliError::usage(format!(
            "observation time {t} lies outside the interval"
        )));
    }
    let model = read_any_model(&args.model)?;
    let out = OutDir::open(&args.output)?;
    let seed = resolve_seed(args.output.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        AnyModel::Mjp(m) => {
            let traj = match &m.emission_rates {
                Some(_) => {
                    let (traj, events) = mmpp_simulate(&m.mmpp()?, interval, &mut rng);
                    events.write_csv(out.create("events.csv")?)?;
                    traj
                }
                None => gillespie_sample(&m.a, &m.pi0, interval, &mut rng),
            };
            traj.write_csv(out.create("trajectory.csv")?)?;
            if !args.obs_times.is_empty() {
                let mut w = out.csv("observations.csv")?;
                w.write_record(["time", "value"])?;
                for &t in &args.obs_times {
                    let x = m.sample_observation(traj.state_at(t), &mut rng);
                    w.write_record([format_time(t), x.to_string()])?;
                }
                w.flush()?;
            }
        }
        AnyModel::Ctbn(m) => {
            let traj = ctbn_simulate(&m, interval, &mut rng);
            traj.write_csv(out.create("trajectory.csv")?)?;
            if !args.obs_times.is_empty() {
                let mut w = out.csv("observations.csv")?;
                w.write_record(["time", "node", "state"])?;
                for &t in &args.obs_times {
                    for (k, s) in traj.state_at(t).into_iter().enumerate() {
                        w.write_record([
                            format_time(t),
                            m.node(k).name().to_string(),
                            s.to_string(),
                        ])?;
                    }
                }
                w.flush()?;
            }
        }
    }
    out.finish("simulate", seed, vec![seed], &raw)
}

/// Streams one CSV row per post-burn-in sweep and keeps the traces needed
/// for ESS and state marginals.
struct SampleSink {
    writer: csv::Writer<BufWriter<File>>,
    labels: Vec<String>,
    series: Vec<Vec<f64>>,
    query_times: Vec<f64>,
    state_counts: Vec<Vec<u64>>,
    error: Option<CliError>,
}

impl SampleSink {
    fn new(
        out: &OutDir,
        name: &str,
        labels: Vec<String>,
        query_times: &[f64],
        n_states: usize,
    ) -> CliResult<Self> {
        let mut writer = out.csv(name)?;
        let mut header = vec!["sweep".to_string()];
        header.extend(labels.iter().cloned());
        writer.write_record(&header)?;
        Ok(Self {
            writer,
            series: vec![Vec::new(); labels.len()],
            labels,
            query_times: query_times.to_vec(),
            state_counts: vec![vec![0; n_states]; query_times.len()],
            error: None,
        })
    }

    fn push(&mut self, i: usize, values: &[f64], traj: &Trajectory) {
        for (s, &v) in self.series.iter_mut().zip(values) {
            s.push(v);
        }
        for (c, &t) in self.state_counts.iter_mut().zip(&self.query_times) {
            c[traj.state_at(t)] += 1;
        }
        if self.error.is_none() {
            let row = std::iter::once(i.to_string()).chain(values.iter().map(|&v| f(v)));
            if let Err(e) = self.writer.write_record(row) {
                self.error = Some(e.into());
            }
        }
    }

    /// Flushes the CSV and returns the JSON summary of the replicate.
    fn finish(mut self, seconds: f64, extra: Value) -> CliResult<(Value, Vec<Vec<f64>>)> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush()?;
        let means: serde_json::Map<String, Value> = self
            .labels
            .iter()
            .zip(&self.series)
            .map(|(l, s)| {
                (
                    l.clone(),
                    json!(s.iter().sum::<f64>() / s.len().max(1) as f64),
                )
            })
            .collect();
        let ess = if self.series.first().is_some_and(|s| s.len() >= 10) {
            let r = EssReport::new(self.labels.clone(), &self.series, seconds)?;
            json!({"median_ess": r.median_ess, "ess_per_second": r.ess_per_second, "constant": r.constant})
        } else {
            Value::Null
        };
        let marginals: Vec<Vec<f64>> = self
            .state_counts
            .iter()
            .map(|c| {
                let total = c.iter().sum::<u64>().max(1) as f64;
                c.iter().map(|&x| x as f64 / total).collect()
            })
            .collect();
        let mut summary = json!({"seconds": seconds, "posterior_means": means, "ess": ess});
        if let (Value::Object(s), Value::Object(e)) = (&mut summary, extra) {
            s.extend(e);
        }
        Ok((summary, marginals))
    }
}

fn stat_values(stats: &SufficientStats) -> impl Iterator<Item = f64> + '_ {
    stats
        .to_vec()
        .into_iter()
        .chain(std::iter::once(stats.total_transitions() as f64))
}

fn stat_labels(n: usize) -> Vec<String> {
    let mut l = SufficientStats::labels(n);
    l.push("n_total".into());
    l
}

fn rate_labels(n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|to| {
            (0..n)
                .filter(move |&from| from != to)
                .map(move |from| format!("a_{to}_{from}"))
        })
        .collect()
}

fn rate_values(a: &crate::mjp::RateMatrix) -> Vec<f64> {
    let n = a.n_states();
    (0..n)
        .flat_map(|to| {
            (0..n)
                .filter(move |&from| from != to)
                .map(move |from| a.rate(to, from))
        })
        .collect()
}

fn write_marginals(
    out: &OutDir,
    name: &str,
    times: &[f64],
    marginals: &[Vec<f64>],
) -> CliResult<()> {
    let mut w = out.csv(name)?;
    let n = marginals.first().map_or(0, |m| m.len());
    let mut header = vec!["time".to_string()];
    header.extend((0..n).map(|s| format!("p_{s}")));
    w.write_record(&header)?;
    for (t, m) in times.iter().zip(marginals) {
        w.write_record(std::iter::once(format_time(*t)).chain(m.iter().map(|&p| f(p))))?;
    }
    w.flush()?;
    Ok(())
}

fn infer_mjp(args: InferMjpArgs, raw: Vec<String>) -> CliResult<()> {
    let interval = interval_of(&args.interval)?;
    let (mult, n_burnin, n_samples) = chain_lengths(&args.chain, 1000, 10_000)?;
    if let Some(t) = args.query_times.iter().find(|t| !interval.contains(**t)) {
        return Err(CliError::usage(format!(
            "query time {t} lies outside the interval"
        )));
    }
    let model = read_mjp_model(&args.model)?;
    let (times, values) = read_discrete_csv(open(&args.obs)?)?;
    if let Some(t) = times.iter().find(|t| !interval.contains(**t)) {
        return Err(Error::InvalidObservations(format!(
            "observation time {t} lies outside the interval"
        ))
        .into());
    }
    let obs = model.observations(times, &values)?;
    let n = model.n_states();
    let prior = RatePrior::symmetric(args.prior.alpha1, args.prior.alpha2, args.prior.beta, n)?;
    let mode = if args.stationary_init {
        InitialDistMode::Stationary
    } else {
        InitialDistMode::Fixed(model.pi0.clone())
    };
    let pi0 = mode.resolve(&model.a)?;
    let out = OutDir::open(&args.output)?;
    let seed = resolve_seed(args.output.seed);
    let seeds = replicate_seeds(seed, args.chain.replicates);
    let reps = args.chain.replicates;

    let results = run_replicates(reps, args.chain.threads, |r| {
        let config = GibbsConfig {
            omega_multiplier: mult,
            n_burnin,
            n_samples,
            seed: seeds[r],
            keep_paths: false,
        };
        let mut labels = if args.learn_rates {
            rate_labels(n)
        } else {
            Vec::new()
        };
        labels.extend(stat_labels(n));
        let mut sink = SampleSink::new(
            &out,
            &format!("samples{}.csv", suffix(r, reps)),
            labels,
            &args.query_times,
            n,
        )?;
        let start = Instant::now();
        let extra = if args.learn_rates {
            let summary = full_bayes_chain_with(
                &obs,
                interval,
                &prior,
                &mode,
                &config,
                None,
                |i, a, traj| {
                    let mut v = rate_values(a);
                    v.extend(stat_values(&SufficientStats::from_trajectory(traj, n)));
                    sink.push(i, &v, traj);
                },
            )?;
            json!({"acceptance_rate": summary.acceptance_rate()})
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds[r] ^ 0x9e37_79b9_7f4a_7c15);
            let init = initial_trajectory(&model.a, &pi0, &obs, interval, &mut rng);
            run_chain_with(&init, &model.a, &pi0, &obs, &config, |i, traj| {
                let v: Vec<f64> = stat_values(&SufficientStats::from_trajectory(traj, n)).collect();
                sink.push(i, &v, traj);
            })?;
            json!({})
        };
        sink.finish(start.elapsed().as_secs_f64(), extra)
    })?;

    write_summaries(&out, &args.query_times, results)?;
    out.finish("infer-mjp", seed, seeds, &raw)
}

fn write_summaries(
    out: &OutDir,
    query_times: &[f64],
    results: Vec<(Value, Vec<Vec<f64>>)>,
) -> CliResult<()> {
    let reps = results.len();
    let mut summaries = Vec::with_capacity(reps);
    for (r, (summary, marginals)) in results.into_iter().enumerate() {
        if !query_times.is_empty() {
            write_marginals(
                out,
                &format!("marginals{}.csv", suffix(r, reps)),
                query_times,
                &marginals,
            )?;
        }
        summaries.push(summary);
    }
    out.json("summary.json", &json!({ "replicates": summaries }))
}

fn infer_mmpp(args: InferMmppArgs, raw: Vec<String>) -> CliResult<()> {
    let interval = interval_of(&args.interval)?;
    let (mult, n_burnin, n_samples) = chain_lengths(&args.chain, 1000, 10_000)?;
    let model = read_mjp_model(&args.model)?.mmpp()?;
    let events = PoissonObservations::read_csv(open(&args.obs)?)?;
    if let Some(t) = events
        .event_times()
        .iter()
        .find(|t| !interval.contains(**t))
    {
        return Err(Error::InvalidObservations(format!(
            "event time {t} lies outside the interval"
        ))
        .into());
    }
    let n = model.n_states();
    let prior = RatePrior::symmetric(args.prior.alpha1, args.prior.alpha2, args.prior.beta, n)?;
    let emission_prior = EmissionPrior::increasing(n);
    let out = OutDir::open(&args.output)?;
    let seed = resolve_seed(args.output.seed);
    let seeds = replicate_seeds(seed, args.chain.replicates);
    let reps = args.chain.replicates;

    let results = run_replicates(reps, args.chain.threads, |r| {
        let config = GibbsConfig {
            omega_multiplier: mult,
            n_burnin,
            n_samples,
            seed: seeds[r],
            keep_paths: false,
        };
        let mut labels = Vec::new();
        if args.learn_rates {
            labels.extend(rate_labels(n));
            labels.extend((0..n).map(|s| format!("lambda_{s}")));
        }
        labels.extend(stat_labels(n));
        let mut sink = SampleSink::new(
            &out,
            &format!("samples{}.csv", suffix(r, reps)),
            labels,
            &[],
            n,
        )?;
        let start = Instant::now();
        if args.learn_rates {
            mmpp_bayes_chain_with(
                &events,
                interval,
                &model.pi0,
                &prior,
                &emission_prior,
                &config,
                |i, a, lam, traj| {
                    let mut v = rate_values(a);
                    v.extend_from_slice(lam);
                    v.extend(stat_values(&SufficientStats::from_trajectory(traj, n)));
                    sink.push(i, &v, traj);
                },
            )?;
        } else {
            let obs = MmppLikelihood {
                events: &events,
                rates: &model.emission_rates,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seeds[r] ^ 0x9e37_79b9_7f4a_7c15);
            let init = initial_trajectory(&model.a, &model.pi0, &obs, interval, &mut rng);
            run_chain_with(&init, &model.a, &model.pi0, &obs, &config, |i, traj| {
                let v: Vec<f64> = stat_values(&SufficientStats::from_trajectory(traj, n)).collect();
                sink.push(i, &v, traj);
            })?;
        }
        sink.finish(start.elapsed().as_secs_f64(), json!({}))
    })?;

    write_summaries(&out, &[], results)?;
    out.finish("infer-mmpp", seed, seeds, &raw)
}

/// Per-node summaries of a CTBN sample: jumps, then dwell time per state.
fn ctbn_labels(model: &CtbnModel) -> Vec<String> {
    let mut l = Vec::new();
    for node in model.nodes() {
        l.push(format!("jumps_{}", node.name()));
        l.extend((0..node.cardinality()).map(|s| format!("dwell_{}_{s}", node.name())));
    }
    l
}

fn ctbn_values(model: &CtbnModel, traj: &CtbnTrajectory) -> Vec<f64> {
    let mut v = Vec::new();
    for k in 0..model.n_nodes() {
        let path = traj.node_path(k);
        let stats = SufficientStats::from_trajectory(&path, model.node(k).cardinality());
        v.push(path.n_jumps() as f64);
        v.extend_from_slice(stats.dwell_times());
    }
    v
}

fn infer_ctbn(args: InferCtbnArgs, raw: Vec<String>) -> CliResult<()> {
    let (mult, n_burnin, n_samples) = chain_lengths(&args.chain, 100, 1000)?;
    if args.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    let seed = resolve_seed(args.output.seed);
    let (model, obs, interval, out, truth) = match args.experiment {
        Some(Experiment::LotkaVolterra) => {
            let exp = LotkaVolterraExperiment::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (model, truth, obs) = exp.generate(&mut rng)?;
            let out = OutDir::open(&args.output)?;
            out.json("experiment.json", &exp)?;
            (model, obs, exp.interval()?, out, Some(truth))
        }
        None => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| CliError::usage("--model or --experiment is required"))?;
            let interval = interval_of(&args.interval)?;
            let model = CtbnModel::from_json(std::io::BufReader::new(open(path)?))?;
            let obs = match &args.obs {
                Some(p) => CtbnObservations::read_csv(open(p)?, &model)?,
                None => CtbnObservations::empty(&model),
            };
            (model, obs, interval, OutDir::open(&args.output)?, None)
        }
    };
    if let Some(truth) = &truth {
        truth.write_csv(out.create("truth.csv")?)?;
    }
    let seeds = replicate_seeds(seed, args.chain.replicates);
    let reps = args.chain.replicates;
    let grid: Vec<f64> = (0..args.grid)
        .map(|i| interval.start() + interval.length() * i as f64 / (args.grid - 1) as f64)
        .collect();
    let n_nodes = model.n_nodes();

    let results = run_replicates(reps, args.chain.threads, |r| {
        let config = CtbnGibbsConfig {
            omega_multiplier: mult,
            n_burnin,
            n_samples,
            seed: seeds[r],
            random_scan: args.random_scan,
        };
        let labels = ctbn_labels(&model);
        let mut w = out.csv(&format!("samples{}.csv", suffix(r, reps)))?;
        w.write_record(std::iter::once("sweep".to_string()).chain(labels.iter().cloned()))?;
        let mut series = vec![Vec::with_capacity(n_samples); labels.len()];
        // states[(g * n_nodes + k)] holds the sampled states at grid point g
        let mut states: Vec<Vec<u32>> = vec![Vec::with_capacity(n_samples); grid.len() * n_nodes];
        let mut write_err = None;
        let start = Instant::now();
        run_ctbn_chain_with(&model, &obs, interval, None, &config, |i, traj| {
            let v = ctbn_values(&model, traj);
            for (s, &x) in series.iter_mut().zip(&v) {
                s.push(x);
            }
            for (g, &t) in grid.iter().enumerate() {
                for (k, s) in traj.state_at(t).into_iter().enumerate() {
                    states[g * n_nodes + k].push(s as u32);
                }
            }
            if write_err.is_none() {
                if let Err(e) =
                    w.write_record(std::iter::once(i.to_string()).chain(v.iter().map(|&x| f(x))))
                {
                    write_err = Some(e);
                }
            }
        })?;
        let seconds = start.elapsed().as_secs_f64();
        if let Some(e) = write_err {
            return Err(e.into());
        }
        w.flush()?;

        let mut band = out.csv(&format!("band{}.csv", suffix(r, reps)))?;
        band.write_record(["time", "node", "mean", "q05", "q95"])?;
        for (g, &t) in grid.iter().enumerate() {
            for k in 0..n_nodes {
                let xs: Vec<f64> = states[g * n_nodes + k].iter().map(|&s| s as f64).collect();
                if xs.is_empty() {
                    continue;
                }
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                band.write_record([
                    format_time(t),
                    model.node(k).name().to_string(),
                    f(mean),
                    f(quantile(&xs, 0.05)),
                    f(quantile(&xs, 0.95)),
                ])?;
            }
        }
        band.flush()?;
        let ess = if n_samples >= 10 {
            let rep = EssReport::new(labels, &series, seconds)?;
            json!({"median_ess": rep.median_ess, "ess_per_second": rep.ess_per_second, "constant": rep.constant})
        } else {
            Value::Null
        };
        Ok(json!({"seconds": seconds, "ess": ess}))
    })?;
    out.json("summary.json", &json!({ "replicates": results }))?;
    out.finish("infer-ctbn", seed, seeds, &raw)
}

fn oracle(args: OracleArgs, raw: Vec<String>) -> CliResult<()> {
    let interval = interval_of(&args.interval)?;
    let query: Vec<f64> = match args.grid {
        Some(g) if g >= 2 => (0..g)
            .map(|i| interval.start() + interval.length() * i as f64 / (g - 1) as f64)
            .collect(),
        Some(_) => return Err(CliError::usage("--grid must be at least 2")),
        None => args.query_times.clone(),
    };
    if let Some(t) = query.iter().find(|t| !interval.contains(**t)) {
        return Err(CliError::usage(format!(
            "query time {t} lies outside the interval"
        )));
    }
    let model = read_mjp_model(&args.model)?;
    let (times, values) = read_discrete_csv(open(&args.obs)?)?;
    let obs = model.observations(times, &values)?;
    let marginals = exact_smoothed_marginals(&model.a, &model.pi0, &obs, interval, &query)?;
    let log_lik = exact_log_likelihood(&model.a, &model.pi0, &obs, interval)?;
    let out = OutDir::open(&args.output)?;
    write_marginals(&out, "marginals.csv", &query, &marginals)?;
    out.json(
        "summary.json",
        &json!({"log_likelihood": log_lik, "n_observations": obs.len()}),
    )?;
    let seed = args.output.seed.unwrap_or(0);
    out.finish("oracle", seed, vec![], &raw)
}

fn ess_study(args: EssStudyArgs, raw: Vec<String>) -> CliResult<()> {
    if args.k.is_empty() || args.replicates == 0 || args.threads == 0 {
        return Err(CliError::usage(
            "--k, --replicates and --threads must be non-empty and positive",
        ));
    }
    for &k in &args.k {
        OmegaMultiplier::new(k)?;
    }
    if args.samples < 10 {
        return Err(CliError::usage(
            "--samples must be at least 10 for ESS estimates",
        ));
    }
    let modes: Vec<StudyMode> = match args.mode {
        ModeArg::Fixed => vec![StudyMode::Fixed],
        ModeArg::Joint => vec![StudyMode::Joint],
        ModeArg::Both => vec![StudyMode::Fixed, StudyMode::Joint],
    };
    let seed = resolve_seed(args.output.seed);
    let problem = ScalingProblem::generate(args.states, args.t_end, seed)?;
    let out = OutDir::open(&args.output)?;
    let mut problem_file = MjpModel::new(problem.model.a.clone(), problem.model.pi0.clone());
    problem_file.description = Some("generator drawn for the Omega-scaling study".into());
    problem_file.emission_rates = Some(problem.model.emission_rates.clone());
    out.create("problem.json")?
        .write_all((problem_file.to_json_pretty() + "\n").as_bytes())?;
    problem.events.write_csv(out.create("events.csv")?)?;

    let seeds = replicate_seeds(seed, args.replicates);
    let jobs: Vec<(StudyMode, f64, usize)> = modes
        .iter()
        .flat_map(|&m| {
            args.k
                .iter()
                .flat_map(move |&k| (0..args.replicates).map(move |r| (m, k, r)))
        })
        .collect();
    let runs: Vec<EssRun> = run_replicates(jobs.len(), args.threads, |j| {
        let (mode, k, r) = jobs[j];
        Ok(ess_run(
            &problem,
            k,
            mode,
            args.burnin,
            args.samples,
            seeds[r],
        )?)
    })?;

    let mut w = out.csv("ess_study.csv")?;
    w.write_record([
        "k",
        "mode",
        "replicate",
        "seed",
        "median_ess",
        "seconds",
        "ess_per_second",
        "seconds_per_sweep",
        "ess_per_sweep",
    ])?;
    for (run, &(_, _, r)) in runs.iter().zip(&jobs) {
        w.write_record([
            run.k.to_string(),
            run.mode.as_str().to_string(),
            r.to_string(),
            run.seed.to_string(),
            f(run.median_ess),
            f(run.seconds),
            f(run.ess_per_second),
            f(run.seconds_per_sweep),
            f(run.ess_per_sweep),
        ])?;
    }
    w.flush()?;
    let mut w = out.csv("ess_summary.csv")?;
    w.write_record([
        "k",
        "mode",
        "replicates",
        "median_ess",
        "seconds",
        "ess_per_second",
        "seconds_per_sweep",
        "ess_per_sweep",
    ])?;
    for s in summarize_ess_runs(&runs) {
        w.write_record([
            s.k.to_string(),
            s.mode.as_str().to_string(),
            s.replicates.to_string(),
            f(s.median_ess),
            f(s.seconds),
            f(s.ess_per_second),
            f(s.seconds_per_sweep),
            f(s.ess_per_sweep),
        ])?;
    }
    w.flush()?;

    if args.trace_inits > 0 {
        let inits = dispersed_initializations(&problem, args.trace_inits, seed)?;
        let mut w = out.csv("burnin.csv")?;
        w.write_record(["init", "sweep", "transitions"])?;
        for (i, init) in inits.iter().enumerate() {
            let trace = transition_trace(
                &problem,
                init,
                2.0,
                args.trace_sweeps,
                seed.wrapping_add(i as u64),
            )?;
            for (s, c) in trace.iter().enumerate() {
                w.write_record([i.to_string(), s.to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
    }
    out.finish("ess-study", seed, seeds, &raw)
}

fn bench(args: BenchArgs, raw: Vec<String>) -> CliResult<()> {
    if args.repeats < 5 {
        return Err(CliError::usage("--repeats must be at least 5"));
    }
    if args.sweeps == 0 {
        return Err(CliError::usage("--sweeps must be positive"));
    }
    let seed = resolve_seed(args.output.seed);
    let out = OutDir::open(&args.output)?;
    let mut w = out.csv("bench.csv")?;
    w.write_record([
        "benchmark",
        "parameter",
        "median_seconds_per_sweep",
        "repeats",
        "sweeps",
    ])?;
    let (reps, sweeps) = (args.repeats, args.sweeps);
    let on = |s: Suite| args.suite == s || args.suite == Suite::All;
    let mut rows: Vec<(&str, String, f64)> = Vec::new();

    if on(Suite::MmppEvents) {
        let problem = ScalingProblem::generate(5, 10.0, seed)?;
        for count in [10, 100, 1000] {
            rows.push((
                "mmpp-events",
                count.to_string(),
                mmpp_sweep_seconds(&problem, count, reps, sweeps, seed)?,
            ));
        }
    }
    if on(Suite::LvCap) {
        let base = LotkaVolterraExperiment::default();
        for cap in [25, 50, 100] {
            rows.push((
                "lv-cap",
                cap.to_string(),
                lotka_volterra_sweep_seconds(&base, cap, reps, sweeps, seed)?,
            ));
        }
    }
    let endpoint_problem =
        |model: &CtbnModel, t_end: f64| -> CliResult<(CtbnObservations, TimeInterval)> {
            let interval = TimeInterval::new(0.0, t_end)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = ctbn_simulate(model, interval, &mut rng);
            let obs = CtbnObservations::noiseless_joint(
                model,
                &[0.0, t_end],
                &[truth.initial_state().to_vec(), truth.final_state()],
            )?;
            Ok((obs, interval))
        };
    if on(Suite::ChainLength) {
        for len in [2, 4, 6, 8, 10] {
            let model = chain_ctbn(len, 5)?;
            let (obs, interval) = endpoint_problem(&model, 20.0)?;
            let t = ctbn_sweep_seconds(&model, &obs, interval, 20, reps, sweeps, seed)?;
            rows.push(("chain-length", len.to_string(), t));
        }
    }
    if on(Suite::ChainStates) {
        for card in [2, 5, 10, 20] {
            let model = chain_ctbn(5, card)?;
            let (obs, interval) = endpoint_problem(&model, 20.0)?;
            let t = ctbn_sweep_seconds(&model, &obs, interval, 20, reps, sweeps, seed)?;
            rows.push(("chain-states", card.to_string(), t));
        }
    }
    if on(Suite::DrugInterval) {
        let model = CtbnModel::from_json(DRUG_EFFECT.as_bytes())?;
        for t_end in [5.0, 10.0, 20.0, 40.0] {
            let (obs, interval) = endpoint_problem(&model, t_end)?;
            let t = ctbn_sweep_seconds(&model, &obs, interval, 20, reps, sweeps, seed)?;
            rows.push(("drug-interval", t_end.to_string(), t));
        }
    }
    for (name, param, t) in rows {
        w.write_record([
            name.to_string(),
            param,
            f(t),
            reps.to_string(),
            sweeps.to_string(),
        ])?;
    }
    w.flush()?;
    out.finish("bench", seed, vec![seed], &raw)
}

fn replay(args: ReplayArgs) -> CliResult<()> {
    let manifest: RunManifest =
        serde_json::from_reader(open(&args.manifest)?).map_err(Error::from)?;
    let mut argv: Vec<OsString> = vec!["mjp".into()];
    argv.extend(manifest.args.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(args.out.into_os_string());
    if args.force {
        argv.push("--force".into());
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::usage(e.to_string()))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::usage("a manifest cannot replay another replay"));
    }
    let raw = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    run(cli, raw)
}
