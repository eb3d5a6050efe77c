//! Shows how per-layer normalized importance turns into per-neuron
//! learning rates, and how the running average reacts to a shift.
//!
//! cargo run --release --example plasticity_schedule

use npc::consolidation::{npc_learning_rate, NpcConfig};
use npc::importance::{layer_normalize, ImportanceState};

fn main() -> npc::Result<()> {
    let cfg = NpcConfig::default();
    println!("importance -> learning rate");
    for c in [0.0, 0.05, 0.175, 0.35, 0.7, 1.4, 7.0] {
        println!("  {c:>6.3} -> {:.5}", npc_learning_rate(c, &cfg));
    }

    let layers = [0..4, 4..6];
    let raw = [0.1, 0.2, 0.3, 3.4, 50.0, 150.0];
    let normalized = layer_normalize(&raw, &layers);
    println!("raw {raw:?}\nnormalized {normalized:.3?}");

    let mut state = ImportanceState::new(raw.len(), 0.2, true)?;
    for step in 0..40 {
        let input = if step < 20 { normalized.clone() } else { normalized.iter().rev().copied().collect() };
        state.ema_update(&input);
        if step % 10 == 9 {
            let rates: Vec<f64> = state.c.iter().map(|&c| npc_learning_rate(c, &cfg)).collect();
            println!("step {:>2}: C {:.3?}\n          eta {:.4?}", step + 1, state.c, rates);
        }
    }
    Ok(())
}
