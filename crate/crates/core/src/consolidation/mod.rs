//! Strategies that turn importance into parameter updates.
//!
//! * NPC: one learning rate per neuron from its running importance.
//! * CPC: the same rate law applied to each connection weight separately.
//! * EWC / MAS / SI: quadratic anchoring penalties with a fixed global rate.
//! * Fine-tuning: plain SGD.

mod penalty;
mod plasticity;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{NeuronRegistry, ParamSet};
use crate::tensor::Scalar;

pub use penalty::{ewc_importance, mas_importance, PenaltyState, SiAccumulator, TaskAnchor};
pub use plasticity::{
    cpc_importance_and_step, finetune_step, npc_learning_rate, npc_step, CpcState, NpcConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Npc,
    Cpc,
    Ewc,
    Mas,
    Si,
    Finetune,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Npc,
        StrategyKind::Cpc,
        StrategyKind::Ewc,
        StrategyKind::Mas,
        StrategyKind::Si,
        StrategyKind::Finetune,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Npc => "npc",
            StrategyKind::Cpc => "cpc",
            StrategyKind::Ewc => "ewc",
            StrategyKind::Mas => "mas",
            StrategyKind::Si => "si",
            StrategyKind::Finetune => "finetune",
        }
    }

    /// Rate-controlled strategies ignore the global learning rate.
    pub fn uses_plasticity_control(self) -> bool {
        matches!(self, StrategyKind::Npc | StrategyKind::Cpc)
    }

    pub fn uses_penalty(self) -> bool {
        matches!(self, StrategyKind::Ewc | StrategyKind::Mas | StrategyKind::Si)
    }

    /// Penalty strengths used for split MNIST.
    pub fn default_lambda(self) -> f64 {
        match self {
            StrategyKind::Ewc => 100.0,
            StrategyKind::Mas => 1.0,
            StrategyKind::Si => 0.1,
            _ => 0.0,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub npc: NpcConfig,
    /// Importance combination coefficient.
    pub delta: f64,
    pub swap_delta: bool,
    pub lambda: f64,
    /// Global SGD rate for the penalty baselines and fine-tuning.
    pub lr: f64,
    pub si_xi: f64,
    /// Samples drawn for the EWC/MAS importance estimate at task end.
    pub importance_samples: usize,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            npc: NpcConfig::default(),
            delta: 1e-3,
            swap_delta: false,
            lambda: kind.default_lambda(),
            lr: 0.05,
            si_xi: 1e-3,
            importance_samples: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.npc.validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if self.kind.uses_penalty() && self.lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !self.kind.uses_plasticity_control() && self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.si_xi <= 0.0 {
            return Err(Error::Config("SI damping must be positive".into()));
        }
        Ok(())
    }
}

/// Strategy-specific state carried across tasks.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyState<T> {
    /// Uses the trainer's per-neuron importance; nothing per task.
    Npc,
    Cpc(CpcState),
    Ewc(PenaltyState<T>),
    Mas(PenaltyState<T>),
    Si {
        penalty: PenaltyState<T>,
        accumulator: SiAccumulator,
    },
    Finetune,
}

impl<T: Scalar> StrategyState<T> {
    pub fn new(cfg: &StrategyConfig, params: &ParamSet<T>, registry: &NeuronRegistry) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            StrategyKind::Npc => StrategyState::Npc,
            StrategyKind::Cpc => StrategyState::Cpc(CpcState::for_registry(params, registry, cfg.delta, cfg.swap_delta)?),
            StrategyKind::Ewc => StrategyState::Ewc(PenaltyState::new(cfg.lambda)),
            StrategyKind::Mas => StrategyState::Mas(PenaltyState::new(cfg.lambda)),
            StrategyKind::Si => StrategyState::Si {
                penalty: PenaltyState::new(cfg.lambda),
                accumulator: SiAccumulator::new(params, cfg.si_xi),
            },
            StrategyKind::Finetune => StrategyState::Finetune,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyState::Npc => StrategyKind::Npc,
            StrategyState::Cpc(_) => StrategyKind::Cpc,
            StrategyState::Ewc(_) => StrategyKind::Ewc,
            StrategyState::Mas(_) => StrategyKind::Mas,
            StrategyState::Si { .. } => StrategyKind::Si,
            StrategyState::Finetune => StrategyKind::Finetune,
        }
    }

    pub fn penalty(&self) -> Option<&PenaltyState<T>> {
        match self {
            StrategyState::Ewc(p) | StrategyState::Mas(p) => Some(p),
            StrategyState::Si { penalty, .. } => Some(penalty),
            _ => None,
        }
    }

    /// Stored per-task anchor parameter sets.
    pub fn anchor_sets(&self) -> usize {
        self.penalty().map_or(0, PenaltyState::anchor_sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("ssl".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn default_lambdas() {
        assert_eq!(StrategyConfig::new(StrategyKind::Ewc).lambda, 100.0);
        assert_eq!(StrategyConfig::new(StrategyKind::Mas).lambda, 1.0);
        assert_eq!(StrategyConfig::new(StrategyKind::Si).lambda, 0.1);
    }
}
