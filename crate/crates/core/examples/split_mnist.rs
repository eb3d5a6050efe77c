//! Trains one strategy over the five split-MNIST tasks at desk scale and
//! prints the accuracy of every task after each task.
//!
//! cargo run --release --example split_mnist -- [strategy] [seed]

use npc::consolidation::StrategyKind;
use npc::data::DatasetKind;
use npc::harness::{run_sequence, Profile, RunConfig};

fn main() -> npc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let strategy: StrategyKind = args.next().as_deref().unwrap_or("npc").parse()?;
    let seed = args.next().map_or(Ok(0), |s| s.parse()).map_err(|_| npc::Error::Usage("seed".into()))?;

    let mut cfg = RunConfig::new(Profile::Desk, DatasetKind::Mnist, strategy);
    cfg.seed = seed;
    if let Ok(dir) = std::env::var("NPC_DATA_DIR") {
        cfg.data_dir = dir.into();
    }
    let outcome = run_sequence(&cfg)?;
    for ck in &outcome.task_checkpoints {
        println!("after task {}: {} neurons tracked", ck.tasks_completed, ck.importance.len());
    }
    println!("final accuracies: {:?}", outcome.final_accuracies());
    println!("average: {:.4}", outcome.final_average());
    if let Some(a) = &outcome.activation {
        println!(
            "second-top |Δactivation|: all {:.4}, top 10% {:.4}, bottom 10% {:.4}",
            a.summary.all, a.summary.top, a.summary.bottom
        );
    }
    Ok(())
}
