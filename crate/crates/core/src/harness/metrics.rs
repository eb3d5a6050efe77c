use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{mean_se, ActivationChange};

pub const METRICS_HEADER: [&str; 9] = [
    "run_id",
    "seed",
    "strategy",
    "task",
    "epoch",
    "eval_task",
    "accuracy",
    "avg_accuracy",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "eval_task", "mean_accuracy", "std_error", "runs"];

/// Accuracy of one evaluated task at one evaluation point. `task`,
/// `epoch` and `eval_task` are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub strategy: String,
    pub task: usize,
    pub epoch: usize,
    pub eval_task: usize,
    pub accuracy: f64,
    /// Mean accuracy over the tasks trained so far at this point.
    pub avg_accuracy: f64,
    pub wall_ms: u64,
}

impl MetricsRecord {
    fn fields(&self) -> [String; 9] {
        [
            self.run_id.clone(),
            self.seed.to_string(),
            self.strategy.clone(),
            self.task.to_string(),
            self.epoch.to_string(),
            self.eval_task.to_string(),
            self.accuracy.to_string(),
            self.avg_accuracy.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Appends records to `metrics.csv` as they are produced.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = create(path)?;
        inner.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn append(&mut self, records: &[MetricsRecord]) -> Result<()> {
        for r in records {
            self.inner.write_record(r.fields()).map_err(|e| csv_err(&self.path, e))?;
        }
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    MetricsWriter::create(path)?.append(records)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Data(format!("{}: unexpected header {header:?}", path.display())));
    }
    let bad = |line: usize| Error::Data(format!("{}: malformed row {line}", path.display()));
    rdr.records()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| csv_err(path, e))?;
            let num = |j: usize| row[j].parse::<u64>().map_err(|_| bad(i + 2));
            let float = |j: usize| row[j].parse::<f64>().map_err(|_| bad(i + 2));
            Ok(MetricsRecord {
                run_id: row[0].to_string(),
                seed: num(1)?,
                strategy: row[2].to_string(),
                task: num(3)? as usize,
                epoch: num(4)? as usize,
                eval_task: num(5)? as usize,
                accuracy: float(6)?,
                avg_accuracy: float(7)?,
                wall_ms: num(8)?,
            })
        })
        .collect()
}

/// One cell of the strategy × task table. `eval_task` is the task number
/// or `"average"`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub eval_task: String,
    pub mean_accuracy: f64,
    pub std_error: f64,
    pub runs: usize,
}

/// Final accuracies (last evaluation of each run) aggregated over runs per
/// strategy: one row per task plus one for the average.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut last: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = last.entry(&r.run_id).or_insert((r.task, r.epoch));
        *e = (*e).max((r.task, r.epoch));
    }
    // strategy -> eval_task -> per-run values
    let mut cells: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut avgs: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in records {
        if last[r.run_id.as_str()] == (r.task, r.epoch) {
            cells
                .entry(&r.strategy)
                .or_default()
                .entry(r.eval_task)
                .or_default()
                .push(r.accuracy);
            avgs.entry(&r.strategy).or_default().insert(&r.run_id, r.avg_accuracy);
        }
    }
    let mut rows = Vec::new();
    for (strategy, tasks) in &cells {
        for (task, values) in tasks {
            let (m, se) = mean_se(values);
            rows.push(SummaryRow {
                strategy: strategy.to_string(),
                eval_task: task.to_string(),
                mean_accuracy: m,
                std_error: se,
                runs: values.len(),
            });
        }
        let values: Vec<f64> = avgs[strategy].values().copied().collect();
        let (m, se) = mean_se(&values);
        rows.push(SummaryRow {
            strategy: strategy.to_string(),
            eval_task: "average".into(),
            mean_accuracy: m,
            std_error: se,
            runs: values.len(),
        });
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.eval_task.clone(),
            r.mean_accuracy.to_string(),
            r.std_error.to_string(),
            r.runs.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full neuron × probe grid plus one summary row per group.
pub fn write_activation_change(path: &Path, run_id: &str, a: &ActivationChange) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["run_id", "neuron_id", "importance", "probe", "abs_change"])
        .map_err(|e| csv_err(path, e))?;
    for n in &a.neurons {
        for (p, d) in n.changes.iter().enumerate() {
            w.write_record([
                run_id.to_string(),
                n.neuron_id.to_string(),
                n.importance.to_string(),
                p.to_string(),
                d.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let summary = path.with_file_name("activation_summary.csv");
    let mut w = create(&summary)?;
    w.write_record(["run_id", "group", "neurons", "mean_abs_change"])
        .map_err(|e| csv_err(&summary, e))?;
    let s = &a.summary;
    for (group, n, v) in [
        ("all", a.neurons.len(), s.all),
        ("top10", s.group_size, s.top),
        ("bottom10", s.group_size, s.bottom),
    ] {
        w.write_record([run_id.to_string(), group.to_string(), n.to_string(), v.to_string()])
            .map_err(|e| csv_err(&summary, e))?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(run: &str, strategy: &str, task: usize, eval_task: usize, acc: f64, avg: f64) -> MetricsRecord {
        MetricsRecord {
            run_id: run.into(),
            seed: 0,
            strategy: strategy.into(),
            task,
            epoch: 1,
            eval_task,
            accuracy: acc,
            avg_accuracy: avg,
            wall_ms: 0,
        }
    }

    #[test]
    fn empty_metrics_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), METRICS_HEADER.join(",") + "\n");
        assert!(read_metrics(&path).unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![rec("a", "npc", 1, 1, 0.1 + 0.2, 0.3), rec("a", "npc", 2, 2, 1.0 / 3.0, 0.5)];
        write_metrics(&path, &records).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), records);
    }

    #[test]
    fn summary_uses_last_point_of_each_run() {
        let records = vec![
            rec("a", "npc", 1, 1, 0.2, 0.2),
            rec("a", "npc", 2, 1, 0.9, 0.8),
            rec("a", "npc", 2, 2, 0.7, 0.8),
            rec("b", "npc", 2, 1, 0.7, 0.6),
            rec("b", "npc", 2, 2, 0.5, 0.6),
        ];
        let rows = summarize(&records);
        assert_eq!(rows.len(), 3);
        assert!((rows[0].mean_accuracy - 0.8).abs() < 1e-12);
        assert!((rows[0].std_error - 0.1).abs() < 1e-12);
        assert_eq!(rows[2].eval_task, "average");
        assert!((rows[2].mean_accuracy - 0.7).abs() < 1e-12);
    }
}
