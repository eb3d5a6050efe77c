//! Sequential training over a task stream, evaluation of every task seen so
//! far, and the bookkeeping around it.

mod analysis;
mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::consolidation::{
    ewc_importance, finetune_step, mas_importance, npc_learning_rate, npc_step, StrategyConfig, StrategyKind,
    StrategyState,
};
use crate::data::{augment, batch_tensor, split_tasks, Dataset, DatasetKind, EpochPlan, Sample, Task, TaskSampler, TaskStream};
use crate::error::{Error, Result};
use crate::importance::{raw_from_graph, ImportanceState};
use crate::nn::{forward, ModelSpec, NeuronRegistry, ParamSet};
use crate::tensor::{Graph, Scalar, Tensor};

pub use analysis::{activation_change_analysis, probe_indices, ActivationChange, ActivationSummary, NeuronChange};
pub use metrics::{
    read_metrics, summarize, write_activation_change, write_metrics, write_summary, MetricsRecord, MetricsWriter,
    SummaryRow, METRICS_HEADER, SUMMARY_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Full-size network, 30 epochs per task, batch 512.
    Paper,
    /// Reduced network, 5 epochs per task, batch 128.
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Usage(format!("unknown profile {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub tasks: usize,
    /// Train only the first tasks of the split (CIFAR-100 uses 5 of 10).
    pub train_tasks: Option<usize>,
    pub model: ModelSpec,
    pub strategy: StrategyConfig,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// When false, `wall_ms` is written as 0 so metrics files are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
    pub run_id: String,
    /// Probe samples for the activation-change analysis; 0 disables it.
    pub probes: usize,
}

impl RunConfig {
    pub fn new(profile: Profile, dataset: DatasetKind, strategy: StrategyKind) -> Self {
        let shape = match dataset {
            DatasetKind::Mnist => [1, 28, 28],
            DatasetKind::Cifar100 => [3, 32, 32],
        };
        let classes = dataset.num_classes();
        let (model, epochs, batch) = match profile {
            Profile::Paper => (ModelSpec::paper(shape, classes), 30, 512),
            Profile::Desk => (ModelSpec::desk(shape, classes), 5, 128),
        };
        let mut strategy_cfg = StrategyConfig::new(strategy);
        strategy_cfg.delta = dataset.default_delta();
        if dataset == DatasetKind::Cifar100 && strategy == StrategyKind::Ewc {
            strategy_cfg.lambda = 300.0;
        }
        Self {
            profile,
            dataset,
            data_dir: PathBuf::from("data").join(dataset.as_str()),
            tasks: dataset.default_tasks(),
            train_tasks: (dataset == DatasetKind::Cifar100).then_some(5),
            model,
            strategy: strategy_cfg,
            epochs,
            batch,
            seed: 0,
            train_per_class: None,
            test_per_class: None,
            out_dir: None,
            record_wall_time: true,
            run_id: format!("{strategy}-s0"),
            probes: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.tasks == 0 || self.train_tasks.is_some_and(|n| n == 0 || n > self.tasks) {
            return Err(Error::Config(format!(
                "cannot train {:?} of {} tasks",
                self.train_tasks, self.tasks
            )));
        }
        self.model.validate()?;
        self.strategy.validate()
    }

    /// Loads the dataset, applies per-class subsampling and splits it.
    pub fn load_stream(&self) -> Result<TaskStream> {
        let mut ds = Dataset::load(self.dataset, &self.data_dir)?;
        ds.subsample_per_class(self.train_per_class, self.test_per_class);
        if ds.shape != self.model.input {
            return Err(Error::Config(format!(
                "model input {:?} does not match data shape {:?}",
                self.model.input, ds.shape
            )));
        }
        split_tasks(&ds, self.tasks, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Loss,
    Backward,
    Importance,
    LearningRate,
    Update,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub phase: Phase,
}

pub type TraceHook = Box<dyn FnMut(TraceEvent) + Send>;

/// Model, neuron importance and strategy state for one run.
pub struct Trainer<T> {
    pub spec: ModelSpec,
    pub params: ParamSet<T>,
    pub registry: NeuronRegistry,
    pub importance: ImportanceState,
    pub strategy: StrategyState<T>,
    pub cfg: StrategyConfig,
    pub step: u64,
    pub tasks_completed: u32,
    trace: Option<TraceHook>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new<R: Rng + ?Sized>(spec: &ModelSpec, cfg: &StrategyConfig, rng: &mut R) -> Result<Self> {
        Self::with_params(spec, cfg, ParamSet::init(spec, rng)?)
    }

    pub fn with_params(spec: &ModelSpec, cfg: &StrategyConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        keep_heap_resident();
        params.check_spec(spec)?;
        let registry = NeuronRegistry::new(spec);
        let importance = ImportanceState::new(registry.neuron_count(), cfg.delta, cfg.swap_delta)?;
        let strategy = StrategyState::new(cfg, &params, &registry)?;
        Ok(Self {
            spec: spec.clone(),
            params,
            registry,
            importance,
            strategy,
            cfg: cfg.clone(),
            step: 0,
            tasks_completed: 0,
            trace: None,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint<T>, cfg: &StrategyConfig) -> Result<Self> {
        if ck.strategy.kind() != cfg.kind {
            return Err(Error::Config(format!(
                "checkpoint holds {} state, configuration asks for {}",
                ck.strategy.kind(),
                cfg.kind
            )));
        }
        let mut t = Self::with_params(&ck.spec, cfg, ck.params)?;
        t.importance = ck.importance;
        t.strategy = ck.strategy;
        t.tasks_completed = ck.tasks_completed;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            spec: self.spec.clone(),
            params: self.params.clone(),
            importance: self.importance.clone(),
            strategy: self.strategy.clone(),
            tasks_completed: self.tasks_completed,
        }
    }

    /// Observes every phase of every training step.
    pub fn set_trace(&mut self, hook: TraceHook) {
        self.trace = Some(hook);
    }

    fn emit(&mut self, phase: Phase) {
        let step = self.step;
        if let Some(hook) = self.trace.as_mut() {
            hook(TraceEvent { step, phase });
        }
    }

    fn numerical_abort(&self, what: &str) -> Error {
        let stats = |v: &mut dyn Iterator<Item = f64>| {
            let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
            for x in v {
                lo = lo.min(x);
                hi = hi.max(x);
                sum += x;
                n += 1;
            }
            format!("min {lo:.4e} mean {:.4e} max {hi:.4e}", sum / n.max(1) as f64)
        };
        let lr = if self.cfg.kind.uses_plasticity_control() {
            stats(&mut self.importance.c.iter().map(|&c| npc_learning_rate(c, &self.cfg.npc)))
        } else {
            format!("{}", self.cfg.lr)
        };
        let imp = stats(&mut self.importance.c.iter().copied());
        Error::Numerical(format!(
            "{what} at step {}: learning rate {lr}; importance {imp}",
            self.step
        ))
    }

    /// One step: forward, masked loss (plus penalty), backward, importance
    /// update, learning rates, parameter update. Returns the task loss.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        input: Tensor<T>,
        labels: &[usize],
        classes: &[usize],
        rng: &mut R,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let vars = self.params.attach(&mut g);
        let x = g.constant(input);
        let fwd = forward(&self.spec, &mut g, &vars, x, true, rng)?;
        self.emit(Phase::Forward);

        let task_loss = g.masked_cross_entropy(fwd.logits, labels, classes)?;
        let total = match self.strategy.penalty() {
            Some(p) if p.anchor_sets() > 0 => {
                let pen = p.penalty_loss(&mut g, &vars)?;
                g.add(task_loss, pen)?
            }
            _ => task_loss,
        };
        let loss = g.value(task_loss).item().as_f64();
        let total_value = g.value(total).item().as_f64();
        self.emit(Phase::Loss);
        if !total_value.is_finite() {
            return Err(self.numerical_abort(&format!("non-finite loss {total_value}")));
        }

        g.backward(total)?;
        self.emit(Phase::Backward);

        let raw = raw_from_graph(&g, &fwd, &self.registry)?;
        self.importance.update(raw, &self.registry.layer_ranges());
        let grads: Vec<Vec<T>> = vars
            .iter()
            .map(|&v| g.take_grad(v).ok_or_else(|| Error::State("missing parameter gradient".into())))
            .collect::<Result<_>>()?;
        if grads.iter().flatten().any(|d| !d.as_f64().is_finite()) {
            return Err(self.numerical_abort("non-finite gradient"));
        }
        if let StrategyState::Cpc(cpc) = &mut self.strategy {
            cpc.update(&self.params, &grads)?;
        }
        self.emit(Phase::Importance);
        self.emit(Phase::LearningRate);

        match &mut self.strategy {
            StrategyState::Npc => npc_step(&mut self.params, &grads, &self.registry, &self.importance, &self.cfg.npc)?,
            StrategyState::Cpc(cpc) => cpc.step(&mut self.params, &grads, &self.cfg.npc)?,
            StrategyState::Ewc(_) | StrategyState::Mas(_) | StrategyState::Finetune => {
                finetune_step(&mut self.params, &grads, self.cfg.lr)?
            }
            StrategyState::Si { penalty, accumulator } => {
                let pen_grad = penalty.penalty_grad(&self.params);
                let task_grads: Vec<Vec<T>> = grads
                    .iter()
                    .zip(&pen_grad)
                    .map(|(g, p)| g.iter().zip(p).map(|(&a, &b)| a - b).collect())
                    .collect();
                let before: Vec<Vec<f64>> = self.params.tensors.iter().map(|t| t.to_f64_vec()).collect();
                finetune_step(&mut self.params, &grads, self.cfg.lr)?;
                let delta: Vec<Vec<f64>> = self
                    .params
                    .tensors
                    .iter()
                    .zip(&before)
                    .map(|(t, b)| t.data().iter().zip(b).map(|(&v, &o)| v.as_f64() - o).collect())
                    .collect();
                accumulator.record_step(&task_grads, &delta)?;
            }
        }
        self.emit(Phase::Update);
        self.step += 1;
        Ok(loss)
    }

    /// Trains `task` for `epochs` redefined epochs, calling `on_epoch` with
    /// the 1-based epoch number after each one.
    pub fn train_task<R, F>(
        &mut self,
        stream: &TaskStream,
        task: usize,
        epochs: usize,
        batch: usize,
        rng: &mut R,
        mut on_epoch: F,
    ) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(&Self, usize) -> Result<()>,
    {
        let task_ref = stream
            .tasks
            .get(task)
            .ok_or_else(|| Error::Config(format!("task {task} out of range")))?;
        let plan = EpochPlan {
            total_train_count: stream.total_train,
            batch,
        };
        let mut sampler = TaskSampler::new(task_ref.train.len());
        for epoch in 1..=epochs {
            for idx in sampler.epoch(&plan, rng)? {
                let samples: Vec<Sample> = idx
                    .iter()
                    .map(|&i| augment(&task_ref.train[i], stream.shape, stream.augmentation, rng))
                    .collect();
                let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
                let x = batch_tensor(&samples, stream.shape)?;
                self.train_step(x, &labels, &task_ref.classes, rng)?;
            }
            on_epoch(self, epoch)?;
        }
        Ok(())
    }

    /// End-of-task bookkeeping: the penalty baselines compute their
    /// importance weights and store an anchor.
    pub fn finish_task<R: Rng + ?Sized>(&mut self, task: &Task, shape: [usize; 3], rng: &mut R) -> Result<()> {
        let weights = match &mut self.strategy {
            StrategyState::Ewc(_) | StrategyState::Mas(_) => {
                let mut idx: Vec<usize> = (0..task.train.len()).collect();
                idx.shuffle(rng);
                idx.truncate(self.cfg.importance_samples);
                let spec = &self.spec;
                let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
                let mut one = |g: &mut Graph<T>, vars: &[crate::tensor::Var], s: usize| {
                    let x = g.constant(batch_tensor(std::slice::from_ref(&task.train[idx[s]]), shape)?);
                    Ok(forward(spec, g, vars, x, false, &mut eval_rng)?.logits)
                };
                if self.cfg.kind == StrategyKind::Ewc {
                    Some(ewc_importance(&self.params, idx.len(), &task.classes, one)?)
                } else {
                    let mut mask = vec![T::zero(); spec.num_classes];
                    task.classes.iter().for_each(|&c| mask[c] = T::one());
                    Some(mas_importance(&self.params, idx.len(), |g, vars, s| {
                        let z = one(g, vars, s)?;
                        let m = g.constant(Tensor::new(&[1, spec.num_classes], mask.clone())?);
                        g.mul(z, m)
                    })?)
                }
            }
            StrategyState::Si { accumulator, .. } => Some(accumulator.fold(&self.params)),
            _ => None,
        };
        if let Some(w) = weights {
            match &mut self.strategy {
                StrategyState::Ewc(p) | StrategyState::Mas(p) | StrategyState::Si { penalty: p, .. } => {
                    p.push_task(&self.params, &w)?
                }
                _ => unreachable!(),
            }
        }
        self.tasks_completed += 1;
        Ok(())
    }
}

/// Logits in evaluation mode for a list of samples, `batch` at a time.
pub fn predict_logits<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamSet<T>,
    samples: &[Sample],
    batch: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in samples.chunks(batch.max(1)) {
        let mut g = Graph::new();
        let vars = params.attach(&mut g);
        let x = g.constant(batch_tensor(chunk, spec.input)?);
        let fwd = forward(spec, &mut g, &vars, x, false, &mut rng)?;
        for row in g.data(fwd.logits).chunks(spec.num_classes) {
            out.push(row.iter().map(|v| v.as_f64()).collect());
        }
    }
    Ok(out)
}

/// Index into `classes` of the largest logit; the first one wins ties.
pub fn masked_argmax(logits: &[f64], classes: &[usize]) -> usize {
    let mut best = 0;
    for (j, &c) in classes.iter().enumerate() {
        if logits[c] > logits[classes[best]] {
            best = j;
        }
    }
    classes[best]
}

/// Per-task accuracy, each task scored against its own classes. A task
/// without validation samples scores 0.
pub fn evaluate<T: Scalar>(spec: &ModelSpec, params: &ParamSet<T>, tasks: &[Task], batch: usize) -> Result<Vec<f64>> {
    tasks
        .iter()
        .map(|task| {
            if task.test.is_empty() {
                return Ok(0.0);
            }
            let logits = predict_logits(spec, params, &task.test, batch)?;
            let correct = logits
                .iter()
                .zip(&task.test)
                .filter(|(z, s)| masked_argmax(z, &task.classes) == s.label)
                .count();
            Ok(correct as f64 / task.test.len() as f64)
        })
        .collect()
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    /// Snapshot at the end of each task.
    pub task_checkpoints: Vec<Checkpoint<f32>>,
    /// Second-top activation change across the second task, if there is one.
    pub activation: Option<ActivationChange>,
}

impl RunOutcome {
    pub fn final_checkpoint(&self) -> &Checkpoint<f32> {
        self.task_checkpoints.last().expect("a run trains at least one task")
    }

    /// Accuracy of every task after the last epoch of the last task.
    pub fn final_accuracies(&self) -> Vec<f64> {
        let last = self.records.last().map(|r| (r.task, r.epoch));
        self.records
            .iter()
            .filter(|r| Some((r.task, r.epoch)) == last)
            .map(|r| r.accuracy)
            .collect()
    }

    pub fn final_average(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.avg_accuracy)
    }
}

/// Loads data per `cfg` and runs the full task sequence.
pub fn run_sequence(cfg: &RunConfig) -> Result<RunOutcome> {
    let stream = cfg.load_stream()?;
    run_on_stream(cfg, &stream)
}

/// Trains every task in order, evaluating all seen tasks after each epoch.
/// With an output directory, metrics are appended as they are produced and
/// a checkpoint is written after each task.
pub fn run_on_stream(cfg: &RunConfig, stream: &TaskStream) -> Result<RunOutcome> {
    cfg.validate()?;
    if stream.tasks.len() != cfg.tasks {
        return Err(Error::Config(format!(
            "stream has {} tasks, configuration expects {}",
            stream.tasks.len(),
            cfg.tasks
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trainer: Trainer<f32> = Trainer::new(&cfg.model, &cfg.strategy, &mut rng)?;
    let mut writer = match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let start = Instant::now();
    let mut records = Vec::new();
    let mut task_checkpoints = Vec::with_capacity(stream.tasks.len());

    let trained = cfg.train_tasks.unwrap_or(cfg.tasks);
    for (k, task) in stream.tasks.iter().take(trained).enumerate() {
        let seen = &stream.tasks[..=k];
        trainer.train_task(stream, k, cfg.epochs, cfg.batch, &mut rng, |t, epoch| {
            let acc = evaluate(&t.spec, &t.params, seen, cfg.batch.max(256))?;
            let avg = acc.iter().sum::<f64>() / acc.len() as f64;
            let wall_ms = if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
            let new: Vec<MetricsRecord> = acc
                .iter()
                .enumerate()
                .map(|(j, &a)| MetricsRecord {
                    run_id: cfg.run_id.clone(),
                    seed: cfg.seed,
                    strategy: cfg.strategy.kind.to_string(),
                    task: k + 1,
                    epoch,
                    eval_task: j + 1,
                    accuracy: a,
                    avg_accuracy: avg,
                    wall_ms,
                })
                .collect();
            if let Some(w) = writer.as_mut() {
                w.append(&new)?;
            }
            log::info!("{} task {} epoch {epoch}: average accuracy {avg:.4}", cfg.run_id, k + 1);
            records.extend(new);
            Ok(())
        })?;
        trainer.finish_task(task, stream.shape, &mut rng)?;
        let ck = trainer.checkpoint();
        if let Some(dir) = &cfg.out_dir {
            ck.save(&dir.join(format!("task{}.ckpt", k + 1)))?;
        }
        task_checkpoints.push(ck);
    }

    let activation = if cfg.probes > 0 && task_checkpoints.len() >= 2 {
        let probes = probe_indices(stream.tasks[0].test.len(), cfg.probes, cfg.seed);
        let samples: Vec<Sample> = probes.iter().map(|&i| stream.tasks[0].test[i].clone()).collect();
        Some(activation_change_analysis(&task_checkpoints[0], &task_checkpoints[1], &samples)?)
    } else {
        None
    };
    if let Some(dir) = &cfg.out_dir {
        task_checkpoints.last().unwrap().save(&dir.join("final.ckpt"))?;
        if let Some(a) = &activation {
            write_activation_change(&dir.join("activation_change.csv"), &cfg.run_id, a)?;
        }
    }
    Ok(RunOutcome {
        records,
        task_checkpoints,
        activation,
    })
}

/// Runs the same configuration once per seed and writes the combined
/// metrics and a summary to the output directory, if any.
pub fn run_seeds(cfg: &RunConfig, stream: &TaskStream, seeds: &[u64]) -> Result<Vec<RunOutcome>> {
    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        c.run_id = format!("{}-s{seed}", cfg.strategy.kind);
        c.out_dir = cfg.out_dir.as_ref().map(|d| d.join(&c.run_id));
        outcomes.push(run_on_stream(&c, stream)?);
    }
    if let Some(dir) = &cfg.out_dir {
        let all: Vec<MetricsRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
        write_metrics(&dir.join("metrics.csv"), &all)?;
        write_summary(&dir.join("summary.csv"), &summarize(&all))?;
    }
    Ok(outcomes)
}

/// Mean and standard error of the mean (sample standard deviation over
/// `sqrt(n)`; 0 for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Checkpoint path helper used by the command line.
pub fn task_checkpoint_path(dir: &Path, task: usize) -> PathBuf {
    dir.join(format!("task{task}.ckpt"))
}

/// Training allocates and frees the same large buffers every step. Stops
/// glibc from handing them back to the kernel so the pages stay mapped.
fn keep_heap_resident() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    {
        static ONCE: std::sync::Once = std::sync::Once::new();
        ONCE.call_once(|| unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, i32::MAX);
            libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_argmax_ignores_other_heads() {
        let z = [9.0, 0.1, 0.3, 5.0];
        assert_eq!(masked_argmax(&z, &[1, 2]), 2);
        assert_eq!(masked_argmax(&[1.0, 1.0], &[0, 1]), 0);
    }

    #[test]
    fn mean_se_examples() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn profiles_parse() {
        assert_eq!("desk".parse::<Profile>().unwrap(), Profile::Desk);
        assert!("huge".parse::<Profile>().is_err());
        let cfg = RunConfig::new(Profile::Paper, DatasetKind::Cifar100, StrategyKind::Ewc);
        assert_eq!((cfg.epochs, cfg.batch, cfg.tasks), (30, 512, 10));
        assert_eq!(cfg.strategy.lambda, 300.0);
        assert_eq!(cfg.strategy.delta, 5e-4);
    }
}
