//! Trains an EWC model on two small synthetic tasks, saves a checkpoint,
//! reloads it and resumes training from the stored state.
//!
//! cargo run --release --example checkpoint_round_trip

use npc::checkpoint::Checkpoint;
use npc::consolidation::{StrategyConfig, StrategyKind};
use npc::data::{split_tasks, Dataset, DatasetKind, Sample};
use npc::harness::{evaluate, Trainer};
use npc::nn::ModelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let side = 8;
    let mut make = |per_class: usize| -> Vec<Sample> {
        (0..4 * per_class)
            .map(|i| {
                let label = i % 4;
                let pixels = (0..side * side)
                    .map(|p| if p % 4 == label { 0.8 } else { rng.gen_range(0.0..0.3) })
                    .collect();
                Sample { pixels, label }
            })
            .collect()
    };
    Dataset {
        kind: DatasetKind::Mnist,
        train: make(40),
        test: make(10),
        shape: [1, side, side],
        num_classes: 4,
    }
}

fn main() -> npc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stream = split_tasks(&toy_dataset(&mut rng), 2, None)?;
    let mut spec = ModelSpec::desk([1, 8, 8], 4);
    spec.conv_channels = vec![4];
    spec.dense_hidden = vec![16];
    let cfg = StrategyConfig::new(StrategyKind::Ewc);

    let mut trainer: Trainer<f32> = Trainer::new(&spec, &cfg, &mut rng)?;
    trainer.train_task(&stream, 0, 3, 16, &mut rng, |_, _| Ok(()))?;
    trainer.finish_task(&stream.tasks[0], stream.shape, &mut rng)?;

    let dir = std::env::temp_dir().join("npc-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| npc::Error::Data(e.to_string()))?;
    let path = dir.join("task1.ckpt");
    trainer.checkpoint().save(&path)?;
    let bytes = std::fs::metadata(&path).map_err(|e| npc::Error::Data(e.to_string()))?.len();
    println!("saved {} ({bytes} bytes, {} anchor set)", path.display(), trainer.strategy.anchor_sets());

    let mut resumed = Trainer::from_checkpoint(Checkpoint::<f32>::load(&path)?, &cfg)?;
    resumed.train_task(&stream, 1, 3, 16, &mut rng, |_, _| Ok(()))?;
    let acc = evaluate(&resumed.spec, &resumed.params, &stream.tasks, 64)?;
    println!("accuracy per task after resuming: {acc:.3?}");
    Ok(())
}
