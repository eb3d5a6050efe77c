//! Versioned binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "NPC1" | version u32 | scalar width u8 | spec digest [32]
//! | spec string (u32 len + utf8) | tasks completed u32
//! | parameters: count u32, then per tensor: len u64 + values
//! | importance: delta f64, swap u8, pinned u8, step u64, len u64, C f64[len]
//! | strategy: tag u8 + strategy-specific block
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::consolidation::{CpcState, PenaltyState, SiAccumulator, StrategyKind, StrategyState, TaskAnchor};
use crate::error::{Error, Result};
use crate::importance::ImportanceState;
use crate::nn::{ModelSpec, ParamSet};
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"NPC1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: ModelSpec,
    pub params: ParamSet<T>,
    pub importance: ImportanceState,
    pub strategy: StrategyState<T>,
    pub tasks_completed: u32,
}

fn tag(kind: StrategyKind) -> u8 {
    StrategyKind::ALL.iter().position(|&k| k == kind).unwrap() as u8
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn scalars<T: Scalar>(&mut self, v: &[T]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| x.write_le(&mut self.0));
    }
    fn nested_f64(&mut self, v: &[Vec<f64>]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|x| self.f64s(x));
    }
    fn nested_scalars<T: Scalar>(&mut self, v: &[Arc<[T]>]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|x| self.scalars(x));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Length {
            path: self.path.to_path_buf(),
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(width) > self.bytes.len() - self.pos {
            return Err(Error::Length {
                path: self.path.to_path_buf(),
                expected: self.pos + n.saturating_mul(width),
                found: self.bytes.len(),
            });
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn scalars<T: Scalar>(&mut self) -> Result<Vec<T>> {
        let n = self.len(T::BYTES)?;
        Ok(self.take(n * T::BYTES)?.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
    fn nested_f64(&mut self) -> Result<Vec<Vec<f64>>> {
        let n = self.u32()?;
        (0..n).map(|_| self.f64s()).collect()
    }
    fn nested_scalars<T: Scalar>(&mut self) -> Result<Vec<Arc<[T]>>> {
        let n = self.u32()?;
        (0..n).map(|_| self.scalars::<T>().map(Arc::from)).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(self.corrupt(format!("invalid flag byte {v}"))),
        }
    }
    fn corrupt(&self, what: String) -> Error {
        Error::Data(format!("{}: corrupt checkpoint: {what}", self.path.display()))
    }
}

fn write_importance(w: &mut Writer, s: &ImportanceState) {
    w.f64(s.delta);
    w.u8(s.swap_delta as u8);
    w.u8(s.is_pinned() as u8);
    w.u64(s.step);
    w.f64s(&s.c);
}

fn read_importance(r: &mut Reader<'_>) -> Result<ImportanceState> {
    let delta = r.f64()?;
    let swap = r.flag()?;
    let pinned = r.flag()?;
    let step = r.u64()?;
    let c = r.f64s()?;
    let mut s = ImportanceState::new(c.len(), delta, swap)?;
    s.c = c;
    s.step = step;
    s.restore_pinned(pinned);
    Ok(s)
}

fn write_penalty<T: Scalar>(w: &mut Writer, p: &PenaltyState<T>) {
    w.f64(p.lambda);
    w.u32(p.tasks.len() as u32);
    for t in &p.tasks {
        w.nested_scalars(&t.anchor);
        w.nested_scalars(&t.weight);
    }
}

fn read_penalty<T: Scalar>(r: &mut Reader<'_>) -> Result<PenaltyState<T>> {
    let mut p = PenaltyState::new(r.f64()?);
    let n = r.u32()?;
    for _ in 0..n {
        let anchor = r.nested_scalars()?;
        let weight = r.nested_scalars()?;
        p.tasks.push(TaskAnchor { anchor, weight });
    }
    Ok(p)
}

/// Serialized strategy block; its length is what the strategy costs to keep.
pub fn encode_strategy<T: Scalar>(state: &StrategyState<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u8(tag(state.kind()));
    match state {
        StrategyState::Npc | StrategyState::Finetune => {}
        StrategyState::Cpc(cpc) => {
            write_importance(&mut w, &cpc.importance);
            w.u32(cpc.layers.len() as u32);
            for r in &cpc.layers {
                w.u64(r.start as u64);
                w.u64(r.end as u64);
            }
        }
        StrategyState::Ewc(p) | StrategyState::Mas(p) => write_penalty(&mut w, p),
        StrategyState::Si { penalty, accumulator } => {
            write_penalty(&mut w, penalty);
            w.f64(accumulator.xi);
            w.nested_f64(&accumulator.omega);
            w.nested_f64(&accumulator.task_start);
        }
    }
    w.0
}

fn read_strategy<T: Scalar>(r: &mut Reader<'_>) -> Result<StrategyState<T>> {
    let t = r.u8()? as usize;
    let kind = *StrategyKind::ALL
        .get(t)
        .ok_or_else(|| r.corrupt(format!("unknown strategy tag {t}")))?;
    Ok(match kind {
        StrategyKind::Npc => StrategyState::Npc,
        StrategyKind::Finetune => StrategyState::Finetune,
        StrategyKind::Cpc => {
            let importance = read_importance(r)?;
            let n = r.u32()?;
            let layers = (0..n)
                .map(|_| Ok(r.u64()? as usize..r.u64()? as usize))
                .collect::<Result<Vec<_>>>()?;
            StrategyState::Cpc(CpcState { importance, layers })
        }
        StrategyKind::Ewc => StrategyState::Ewc(read_penalty(r)?),
        StrategyKind::Mas => StrategyState::Mas(read_penalty(r)?),
        StrategyKind::Si => {
            let penalty = read_penalty(r)?;
            let xi = r.f64()?;
            let omega = r.nested_f64()?;
            let task_start = r.nested_f64()?;
            StrategyState::Si {
                penalty,
                accumulator: SiAccumulator { omega, task_start, xi },
            }
        }
    })
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u32(VERSION);
        w.u8(T::BYTES as u8);
        w.0.extend_from_slice(&self.spec.digest());
        let spec = self.spec.to_canonical();
        w.u32(spec.len() as u32);
        w.0.extend_from_slice(spec.as_bytes());
        w.u32(self.tasks_completed);
        w.u32(self.params.len() as u32);
        for t in &self.params.tensors {
            w.scalars(t.data());
        }
        write_importance(&mut w, &self.importance);
        w.0.extend(encode_strategy(&self.strategy));
        w.0
    }

    /// `path` is used only in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                observed: u32::from_be_bytes(magic.try_into().unwrap()),
                expected: u32::from_be_bytes(MAGIC),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.corrupt(format!("unsupported version {version}")));
        }
        let width = r.u8()? as usize;
        if width != T::BYTES {
            return Err(Error::Config(format!(
                "{}: checkpoint stores {}-byte scalars, expected {}",
                path.display(),
                width,
                T::BYTES
            )));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let n = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| r.corrupt("spec is not utf-8".into()))?;
        let spec = ModelSpec::from_canonical(text)?;
        if spec.digest() != digest {
            return Err(r.corrupt("spec digest mismatch".into()));
        }
        let tasks_completed = r.u32()?;
        let count = r.u32()? as usize;
        let layers = spec.layers();
        if count != 2 * layers.len() {
            return Err(r.corrupt(format!("{count} parameter tensors for {} layers", layers.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for layer in &layers {
            for shape in [layer.weight_shape.clone(), vec![layer.units]] {
                let data = r.scalars::<T>()?;
                tensors.push(Tensor::new(&shape, data)?);
            }
        }
        let params = ParamSet { tensors };
        let importance = read_importance(&mut r)?;
        if importance.len() != spec.neuron_count() {
            return Err(r.corrupt("importance length does not match the model".into()));
        }
        let strategy = read_strategy(&mut r)?;
        if r.pos != bytes.len() {
            return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            spec,
            params,
            importance,
            strategy,
            tasks_completed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
