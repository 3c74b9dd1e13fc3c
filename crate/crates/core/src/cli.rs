//! Command-line front end. [`run`] does all the work so that tests can drive
//! it in-process; the binary only forwards its arguments and exit code.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; for `monitor`, the trace satisfies the formula |
//! | 1 | `monitor` only: the trace violates the formula |
//! | 2 | bad command line |
//! | 3 | invalid configuration |
//! | 4 | file could not be read or written |
//! | 5 | formula or trace did not parse |
//! | 6 | checkpoint unreadable or inconsistent with its configuration |
//! | 7 | training or rollout failure |

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, TensorError};
use crate::config::{parse_formula_lines, RunConfig};
use crate::game::{episode_robustness, episode_seed, run_episode, ActionMode, RewardMode};
use crate::model::{ModelError, TdmatPolicy};
use crate::statverify::{estimate_satisfaction, VerificationReport};
use crate::stl::{conjoin, prefix_robustness, robustness, StlError, Trajectory};
use crate::trainer::{IterationMetrics, TrainError, Trainer};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_PARSE: i32 = 5;
pub const EXIT_CHECKPOINT: i32 = 6;
pub const EXIT_TRAINING: i32 = 7;

#[derive(Parser, Debug)]
#[command(name = "tdmat", version, about = "Train, verify and monitor multi-agent transformer policies against temporal logic tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy; writes metrics.csv, checkpoints and config.toml.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the satisfaction probability of a checkpoint.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Take the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a formula file on a JSON Lines trace at t = 0.
    Monitor { spec: PathBuf, trace: PathBuf },
    /// Roll out a checkpoint and save each episode as JSON Lines.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        greedy: bool,
        /// Trace directory; defaults to `eval/` next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    msg: String,
}

type CmdResult = Result<i32, Failure>;

fn fail(code: i32, msg: impl std::fmt::Display) -> Failure {
    Failure { code, msg: msg.to_string() }
}

/// Exit code for a library error outside checkpoint loading.
fn classify(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Config(_) | Error::Game(_) | Error::Verify(_) => EXIT_CONFIG,
        Error::Model(ModelError::InvalidConfig(_)) | Error::Train(TrainError::InvalidConfig(_)) => EXIT_CONFIG,
        Error::Parse(_) | Error::Stl(_) => EXIT_PARSE,
        Error::Tensor(TensorError::Checkpoint(_)) => EXIT_CHECKPOINT,
        _ => EXIT_TRAINING,
    }
}

fn lib(e: Error) -> Failure {
    fail(classify(&e), e)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    fail(EXIT_IO, format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train { config, out: dir, seed } => cmd_train(&config, dir, seed, out),
        Command::Verify { checkpoint, n, confidence, seed, greedy, out: file } => {
            cmd_verify(&checkpoint, n, confidence, seed, greedy, file, out)
        }
        Command::Monitor { spec, trace } => cmd_monitor(&spec, &trace, out),
        Command::Eval { checkpoint, episodes, seed, greedy, out: dir } => {
            cmd_eval(&checkpoint, episodes, seed, greedy, dir, out)
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn cmd_train(config: &Path, dir: Option<PathBuf>, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let mut cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(Error::Io(e)) => return Err(io_err(config, e)),
        Err(e) => return Err(lib(e)),
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.resolve().map_err(lib)?;
    }
    let dir = dir.unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let resolved = cfg.to_toml();
    write_file(&dir.join("config.toml"), resolved.as_bytes())?;

    let world = cfg.world().map_err(lib)?;
    let specs = cfg.specs().map_err(lib)?;
    let policy = TdmatPolicy::new(cfg.model.clone(), cfg.seed).map_err(|e| lib(e.into()))?;
    let mut trainer = Trainer::new(&world, specs, policy, cfg.train.clone()).map_err(lib)?;

    let metrics_path = dir.join("metrics.csv");
    let file = File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?;
    let mut csv = BufWriter::new(file);
    let w = |csv: &mut BufWriter<File>, line: &str| writeln!(csv, "{line}").and_then(|_| csv.flush());
    w(&mut csv, IterationMetrics::CSV_HEADER).map_err(|e| io_err(&metrics_path, e))?;
    let every = cfg.train.checkpoint_every;
    let mut last = None;
    for _ in 0..cfg.train.iterations {
        let m = trainer.step().map_err(|e| fail(EXIT_TRAINING, e))?;
        w(&mut csv, &m.csv_row()).map_err(|e| io_err(&metrics_path, e))?;
        if every > 0 && (m.iteration + 1) % every == 0 {
            let path = dir.join(format!("checkpoint_{:06}.ckpt", m.iteration + 1));
            save_checkpoint(trainer.policy(), &resolved, &path)?;
        }
        last = Some(m);
    }
    let final_path = dir.join("final.ckpt");
    save_checkpoint(trainer.policy(), &resolved, &final_path)?;
    let _ = match last {
        Some(m) => writeln!(
            out,
            "trained {} iterations, {} environment steps; last mean robustness {:.4}, satisfaction {:.3}",
            m.iteration + 1,
            m.env_steps,
            m.mean_robustness,
            m.satisfaction_rate
        ),
        None => writeln!(out, "no iterations requested; saved the initial policy"),
    };
    let _ = writeln!(out, "checkpoint: {}", final_path.display());
    Ok(EXIT_OK)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn save_checkpoint(policy: &TdmatPolicy, meta: &str, path: &Path) -> Result<(), Failure> {
    let mut buf = Vec::new();
    policy.params().write_checkpoint(meta, &mut buf).map_err(|e| io_err(path, e))?;
    write_file(path, &buf)
}

struct Loaded {
    cfg: RunConfig,
    policy: TdmatPolicy,
    sha256: String,
}

fn load_checkpoint(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let bad = |m: String| fail(EXIT_CHECKPOINT, format!("{}: {m}", path.display()));
    let (params, meta): (ParamStore, String) =
        ParamStore::read_checkpoint(bytes.as_slice()).map_err(|e| bad(e.to_string()))?;
    let mut cfg = RunConfig::from_toml(&meta).map_err(|e| bad(format!("embedded configuration: {e}")))?;
    cfg.resolve().map_err(|e| bad(format!("embedded configuration: {e}")))?;
    let policy = TdmatPolicy::from_params(cfg.model.clone(), params).map_err(|e| bad(e.to_string()))?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { cfg, policy, sha256 })
}

fn mode_of(greedy: bool, default: ActionMode) -> ActionMode {
    if greedy {
        ActionMode::Greedy
    } else {
        default
    }
}

fn cmd_verify(
    checkpoint: &Path,
    n: Option<u64>,
    confidence: Option<f64>,
    seed: Option<u64>,
    greedy: bool,
    file: Option<PathBuf>,
    out: &mut dyn Write,
) -> CmdResult {
    let loaded = load_checkpoint(checkpoint)?;
    let cfg = &loaded.cfg;
    let n = n.unwrap_or(cfg.verify.n);
    let confidence = confidence.unwrap_or(cfg.verify.confidence);
    let seed = seed.unwrap_or(cfg.seed);
    let mode = mode_of(greedy, cfg.verify.mode);
    let world = cfg.world().map_err(lib)?;
    let specs = cfg.specs().map_err(lib)?;
    let (est, outcomes) =
        estimate_satisfaction(&world, &specs, &loaded.policy, n, confidence, seed, mode, cfg.train.parallel)
            .map_err(lib)?;
    let report = VerificationReport::new(&est, &outcomes, mode, seed, loaded.sha256);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = file {
        write_file(&path, format!("{json}\n").as_bytes())?;
    }
    let _ = writeln!(out, "{json}");
    Ok(EXIT_OK)
}

fn cmd_monitor(spec: &Path, trace: &Path, out: &mut dyn Write) -> CmdResult {
    let text = fs::read_to_string(spec).map_err(|e| io_err(spec, e))?;
    let formulas = parse_formula_lines(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", spec.display())))?;
    let phi = conjoin(formulas).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", spec.display())))?;
    let file = File::open(trace).map_err(|e| io_err(trace, e))?;
    let tr = Trajectory::read_jsonl(BufReader::new(file)).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", trace.display())))?;
    if tr.is_empty() {
        return Err(fail(EXIT_PARSE, format!("{}: empty trace", trace.display())));
    }
    let (rho, note) = match robustness(&phi, &tr, 0) {
        Ok(r) => (r, ""),
        Err(StlError::WindowPastEnd { .. }) => {
            (prefix_robustness(&phi, &tr).map_err(|e| fail(EXIT_PARSE, e))?, " (windows clipped to the trace)")
        }
        Err(e) => return Err(fail(EXIT_PARSE, e)),
    };
    let satisfied = rho > 0.0;
    let _ = writeln!(out, "rho = {rho}{note}");
    let _ = writeln!(out, "{}", if satisfied { "satisfied" } else { "violated" });
    Ok(if satisfied { EXIT_OK } else { EXIT_VIOLATED })
}

fn cmd_eval(
    checkpoint: &Path,
    episodes: u64,
    seed: Option<u64>,
    greedy: bool,
    dir: Option<PathBuf>,
    out: &mut dyn Write,
) -> CmdResult {
    let loaded = load_checkpoint(checkpoint)?;
    let cfg = &loaded.cfg;
    let seed = seed.unwrap_or(cfg.seed);
    let mode = mode_of(greedy, cfg.verify.mode);
    let dir = dir.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join("eval"));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let world = cfg.world().map_err(lib)?;
    let specs = cfg.specs().map_err(lib)?;
    let mut values = Vec::with_capacity(episodes as usize);
    for k in 0..episodes {
        let s = episode_seed(seed, k);
        let wrap = |e| lib(Error::Episode { episode: k as usize, source: Box::new(e) });
        let (rec, _) = run_episode(&world, &specs, &loaded.policy, s, mode, RewardMode::Robustness).map_err(wrap)?;
        let rho = episode_robustness(&rec.trajectory, &specs).map_err(wrap)?;
        let path = dir.join(format!("episode_{k:04}.jsonl"));
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).map_err(|e| io_err(&path, e))?;
        write_file(&path, &buf)?;
        let _ = writeln!(out, "episode {k} seed {s} robustness {rho}");
        values.push(rho);
    }
    if !values.is_empty() {
        let sat = values.iter().filter(|&&r| r > 0.0).count();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "{} episodes: satisfied {sat}, mean robustness {mean:.6}, min {min:.6}, max {max:.6}",
            values.len()
        );
    }
    let _ = writeln!(out, "traces: {}", dir.display());
    Ok(EXIT_OK)
}
