//! Compares the second-top layer of two checkpoints written by a training
//! run and prints the neurons that moved most and least.
//!
//! cargo run --release --example activation_change -- out/task1.ckpt out/task2.ckpt [data dir]

use std::path::PathBuf;

use npc::checkpoint::Checkpoint;
use npc::data::{split_tasks, Dataset, DatasetKind};
use npc::harness::{activation_change_analysis, probe_indices};

fn main() -> npc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        return Err(npc::Error::Usage("expected two checkpoint paths".into()));
    }
    let before = Checkpoint::<f32>::load(&PathBuf::from(&args[0]))?;
    let after = Checkpoint::<f32>::load(&PathBuf::from(&args[1]))?;
    let data = args.get(2).map_or_else(|| PathBuf::from("data/mnist"), PathBuf::from);
    let stream = split_tasks(&Dataset::load(DatasetKind::Mnist, &data)?, 5, None)?;
    let first = &stream.tasks[0].test;
    let probes: Vec<_> = probe_indices(first.len(), 256, 0).into_iter().map(|i| first[i].clone()).collect();

    let change = activation_change_analysis(&before, &after, &probes)?;
    let mut ranked = change.neurons.clone();
    ranked.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    println!("neuron  importance  mean |change|");
    for n in ranked.iter().take(5).chain(ranked.iter().rev().take(5).rev()) {
        println!("{:>6}  {:>10.4}  {:>13.4}", n.neuron_id, n.importance, n.mean_abs_change);
    }
    let s = &change.summary;
    println!("all {:.4}, top group {:.4}, bottom group {:.4} ({} neurons each)", s.all, s.top, s.bottom, s.group_size);
    Ok(())
}
