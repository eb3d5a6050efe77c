//! Command line: `train`, `eval`, `analyze` and `sweep`.
//!
//! Every subcommand accepts `--config FILE`, a plain-text file of
//! `key = value` lines whose keys are long flag names. Flags given on the
//! command line override the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::consolidation::StrategyKind;
use crate::data::{DatasetKind, Sample};
use crate::error::{Error, Result};
use crate::harness::{
    activation_change_analysis, evaluate, probe_indices, run_seeds, summarize, write_activation_change,
    write_summary, Profile, RunConfig,
};

#[derive(Debug, Parser)]
#[command(name = "npc", version, about = "Neuron-level plasticity control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one strategy over the task sequence.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a checkpoint on every task it has been trained on.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Second-top activation change between two checkpoints.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
    /// Grid search over one hyperparameter.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Plain-text `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "mnist", value_parser = |s: &str| s.parse::<DatasetKind>())]
    dataset: DatasetKind,
    /// Defaults to $NPC_DATA_DIR, then data/<dataset>.
    #[arg(long, env = "NPC_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Number of tasks the classes are split into.
    #[arg(long)]
    tasks: Option<usize>,
    /// Train only the first N tasks.
    #[arg(long)]
    train_tasks: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct StrategyArgs {
    #[arg(long, default_value = "desk", value_parser = |s: &str| s.parse::<Profile>())]
    profile: Profile,
    #[arg(long, default_value = "npc", value_parser = |s: &str| s.parse::<StrategyKind>())]
    strategy: StrategyKind,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    swap_delta: bool,
    /// Global learning rate of the penalty baselines and fine-tuning.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Samples used for the EWC/MAS importance estimate.
    #[arg(long)]
    importance_samples: Option<usize>,
    /// Probe samples for the activation-change analysis (0 disables it).
    #[arg(long, default_value_t = 256)]
    probes: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Comma-separated seeds; overrides --seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Write wall_ms as 0 so metrics.csv is reproducible byte for byte.
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 256)]
    batch: usize,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    before: PathBuf,
    #[arg(long)]
    after: PathBuf,
    #[arg(long, default_value_t = 256)]
    probes: usize,
    /// 1-based task whose validation samples are probed.
    #[arg(long, default_value_t = 1)]
    probe_task: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    Lambda,
    Alpha,
    Beta,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values; defaults to powers of ten from 1e-3 to 1e3.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
    #[arg(long)]
    no_wall_time: bool,
}

/// Flags that take no value; `key = true` in a config file enables them.
const SWITCHES: [&str; 2] = ["swap-delta", "no-wall-time"];

/// Turns a config file into flag tokens.
fn config_tokens(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("{}:{}: expected key = value, got {line:?}", path.display(), i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                _ => return Err(Error::Usage(format!("{key} = {value}: expected true or false"))),
            }
        } else {
            out.push(format!("--{key}={value}").into());
        }
    }
    Ok(out)
}

/// Splices config-file flags in front of the command-line flags so the
/// latter win.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(PathBuf::from(args.get(i + 1).ok_or_else(|| Error::Usage("--config needs a path".into()))?));
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let sub = args
        .iter()
        .position(|a| ["train", "eval", "analyze", "sweep"].contains(&a.to_string_lossy().as_ref()));
    let Some(sub) = sub else { return Ok(args) };
    let mut out = args[..=sub].to_vec();
    out.extend(config_tokens(&path)?);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    cfg.data_dir = d
        .data_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("data").join(d.dataset.as_str()));
    if let Some(k) = d.tasks {
        cfg.tasks = k;
    }
    if d.train_tasks.is_some() {
        cfg.train_tasks = d.train_tasks;
    }
    cfg.train_per_class = d.train_per_class;
    cfg.test_per_class = d.test_per_class;
    cfg.seed = d.seed;
}

fn run_config(d: &DataArgs, s: &StrategyArgs) -> Result<RunConfig> {
    let kind = s.strategy;
    if !kind.uses_penalty() && s.lambda.is_some() {
        return Err(Error::Usage(format!("--lambda is not a parameter of {kind}")));
    }
    if !kind.uses_plasticity_control() {
        for (flag, v) in [("--alpha", s.alpha), ("--beta", s.beta), ("--eta-max", s.eta_max)] {
            if v.is_some() {
                return Err(Error::Usage(format!("{flag} is not a parameter of {kind}")));
            }
        }
    }
    if kind.uses_plasticity_control() && s.lr.is_some() {
        return Err(Error::Usage(format!("--lr is not a parameter of {kind}")));
    }
    let mut cfg = RunConfig::new(s.profile, d.dataset, kind);
    apply_data(&mut cfg, d);
    let st = &mut cfg.strategy;
    st.npc.alpha = s.alpha.unwrap_or(st.npc.alpha);
    st.npc.beta = s.beta.unwrap_or(st.npc.beta);
    st.npc.eta_max = s.eta_max.unwrap_or(st.npc.eta_max);
    st.delta = s.delta.unwrap_or(st.delta);
    st.lambda = s.lambda.unwrap_or(st.lambda);
    st.lr = s.lr.unwrap_or(st.lr);
    st.swap_delta = s.swap_delta;
    st.importance_samples = s.importance_samples.unwrap_or(st.importance_samples);
    cfg.epochs = s.epochs.unwrap_or(cfg.epochs);
    cfg.batch = s.batch.unwrap_or(cfg.batch);
    cfg.probes = s.probes;
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = run_config(&a.data, &a.strategy)?;
    cfg.out_dir = Some(a.out.clone());
    cfg.record_wall_time = !a.no_wall_time;
    let seeds = a.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    let stream = cfg.load_stream()?;
    let outcomes = run_seeds(&cfg, &stream, &seeds)?;
    for (seed, o) in seeds.iter().zip(&outcomes) {
        let acc: Vec<String> = o.final_accuracies().iter().map(|a| format!("{a:.4}")).collect();
        println!("seed {seed}: average {:.4} per task [{}]", o.final_average(), acc.join(", "));
        if let Some(act) = &o.activation {
            let s = act.summary;
            println!(
                "seed {seed}: second-top |Δactivation| all {:.4} top10 {:.4} bottom10 {:.4}",
                s.all, s.top, s.bottom
            );
        }
    }
    println!("metrics written to {}", a.out.join("metrics.csv").display());
    Ok(())
}

fn load_for_data(d: &DataArgs, spec_input: [usize; 3], tasks: Option<usize>) -> Result<crate::data::TaskStream> {
    let mut cfg = RunConfig::new(Profile::Desk, d.dataset, StrategyKind::Finetune);
    apply_data(&mut cfg, d);
    if let Some(k) = tasks {
        cfg.tasks = k;
    }
    cfg.model.input = spec_input;
    cfg.load_stream()
}

fn eval(a: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::<f32>::load(&a.checkpoint)?;
    let stream = load_for_data(&a.data, ck.spec.input, None)?;
    let seen = (ck.tasks_completed as usize).clamp(1, stream.tasks.len());
    let acc = evaluate(&ck.spec, &ck.params, &stream.tasks[..seen], a.batch)?;
    println!("task,classes,accuracy");
    for (t, v) in stream.tasks.iter().zip(&acc) {
        let classes: Vec<String> = t.classes.iter().map(|c| c.to_string()).collect();
        println!("{},{},{v:.4}", t.id + 1, classes.join(" "));
    }
    println!("average,,{:.4}", acc.iter().sum::<f64>() / acc.len() as f64);
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let before = Checkpoint::<f32>::load(&a.before)?;
    let after = Checkpoint::<f32>::load(&a.after)?;
    let stream = load_for_data(&a.data, before.spec.input, None)?;
    let task = stream
        .tasks
        .get(a.probe_task.wrapping_sub(1))
        .ok_or_else(|| Error::Usage(format!("--probe-task {} out of range", a.probe_task)))?;
    let probes: Vec<Sample> = probe_indices(task.test.len(), a.probes, a.data.seed)
        .into_iter()
        .map(|i| task.test[i].clone())
        .collect();
    let change = activation_change_analysis(&before, &after, &probes)?;
    let s = change.summary;
    println!("group,neurons,mean_abs_change");
    println!("all,{},{:.4}", change.neurons.len(), s.all);
    println!("top10,{},{:.4}", s.group_size, s.top);
    println!("bottom10,{},{:.4}", s.group_size, s.bottom);
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_activation_change(&out.join("activation_change.csv"), "analyze", &change)?;
    }
    Ok(())
}

/// Powers of ten from 1e-3 to 1e3.
pub fn default_grid() -> Vec<f64> {
    (-3..=3).map(|e| 10f64.powi(e)).collect()
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let base = run_config(&a.data, &a.strategy)?;
    let kind = base.strategy.kind;
    match a.param {
        SweepParam::Lambda if !kind.uses_penalty() => {
            return Err(Error::Usage(format!("--param lambda does not apply to {kind}")))
        }
        SweepParam::Alpha | SweepParam::Beta if !kind.uses_plasticity_control() => {
            return Err(Error::Usage(format!("--param {:?} does not apply to {kind}", a.param).to_lowercase()))
        }
        _ => {}
    }
    let grid = a.grid.clone().unwrap_or_else(default_grid);
    let stream = base.load_stream()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut all = Vec::new();
    let mut table = String::from("param,value,avg_accuracy\n");
    for &v in &grid {
        let mut cfg = base.clone();
        let name = match a.param {
            SweepParam::Lambda => {
                cfg.strategy.lambda = v;
                "lambda"
            }
            SweepParam::Alpha => {
                cfg.strategy.npc.alpha = v;
                "alpha"
            }
            SweepParam::Beta => {
                cfg.strategy.npc.beta = v;
                "beta"
            }
        };
        cfg.validate()?;
        cfg.run_id = format!("{kind}-{name}={v}-s{}", cfg.seed);
        cfg.out_dir = Some(a.out.join(&cfg.run_id));
        cfg.record_wall_time = !a.no_wall_time;
        let outcome = crate::harness::run_on_stream(&cfg, &stream)?;
        println!("{name} = {v}: average {:.4}", outcome.final_average());
        table.push_str(&format!("{name},{v},{}\n", outcome.final_average()));
        all.extend(outcome.records);
    }
    let path = a.out.join("sweep.csv");
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    crate::harness::write_metrics(&a.out.join("metrics.csv"), &all)?;
    write_summary(&a.out.join("summary.csv"), &summarize(&all))
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let args = expand_config(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.render().to_string().trim_end().to_string())),
    };
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn lambda_rejected_for_npc() {
        let cli = parse(&["npc", "train", "--strategy", "npc", "--lambda", "1"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let err = run_config(&a.data, &a.strategy).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.contains("--lambda")));
    }

    #[test]
    fn unknown_flag_names_the_token() {
        let err = run(["npc", "train", "--bogus", "3"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--bogus"));
        let err = run(["npc", "train", "--strategy", "ssl"]).unwrap_err();
        assert!(err.to_string().contains("ssl"));
    }

    #[test]
    fn later_flags_override_earlier() {
        let cli = parse(&["npc", "train", "--seed", "1", "--seed", "4"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.data.seed, 4);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# desk run\nstrategy = ewc\nlambda = 5\nseed = 2\nswap_delta = true\n").unwrap();
        let args: Vec<OsString> = ["npc", "train", "--config", path.to_str().unwrap(), "--seed", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let cli = Cli::try_parse_from(expand_config(args).unwrap()).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.data.seed, 9);
        assert_eq!(a.strategy.strategy, StrategyKind::Ewc);
        assert_eq!(a.strategy.lambda, Some(5.0));
        assert!(a.strategy.swap_delta);
    }

    #[test]
    fn default_grid_spans_six_decades() {
        let g = default_grid();
        assert_eq!(g.len(), 7);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[6] - 1e3).abs() < 1e-9);
    }
}
