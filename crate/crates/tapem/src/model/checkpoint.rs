//! Versioned checkpoint archive: every parameter with its Adam state,
//! plus the vocabulary the model was trained against.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BaselineModel, Dims, EntityCounts, ModelKind, Pooling, TapemModel};
use crate::error::{Result, TapemError};
use crate::hetgraph::Vocabulary;
use crate::objective::TrainingConfig;
use crate::numerics::{ParamStore, Shape};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    row_sparse: bool,
    row_steps: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub dims: Dims,
    pub pooling: Pooling,
    pub counts: EntityCounts,
    /// Paper count (sizes the baseline's context-paper table).
    pub papers: usize,
    pub epoch: usize,
    /// Resolved training configuration the checkpoint was produced with.
    pub config: TrainingConfig,
    /// External ids of the authors, in embedding-row order.
    pub author_symbols: Vec<String>,
    pub vocab_tokens: Vec<String>,
    pub vocab_digest: String,
    params: Vec<ParamEntry>,
}

/// A loaded model of either family.
pub enum AnyModel {
    Tapem(TapemModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Tapem(m) => m.kind,
            AnyModel::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            AnyModel::Tapem(m) => &m.store,
            AnyModel::Baseline(m) => &m.store,
        }
    }
}

fn dump_store(store: &ParamStore) -> Vec<ParamEntry> {
    store
        .params()
        .iter()
        .map(|p| {
            let shape = match p.value.shape() {
                Shape::Vector(n) => vec![n],
                Shape::Matrix(r, c) => vec![r, c],
            };
            ParamEntry {
                name: p.name.clone(),
                shape,
                values: p.value.data().to_vec(),
                m: p.m.data().to_vec(),
                v: p.v.data().to_vec(),
                step: p.step,
                row_sparse: p.row_sparse,
                row_steps: p.row_steps.clone(),
            }
        })
        .collect()
}

fn restore_store(store: &mut ParamStore, entries: &[ParamEntry]) -> Result<()> {
    if entries.len() != store.len() {
        return Err(TapemError::Integrity(format!(
            "checkpoint has {} parameters, model expects {}",
            entries.len(),
            store.len()
        )));
    }
    for entry in entries {
        let id = store.id(&entry.name).ok_or_else(|| {
            TapemError::Integrity(format!("checkpoint parameter {} is unknown", entry.name))
        })?;
        let expected = store.value(id).shape();
        let got = match entry.shape[..] {
            [n] => Shape::Vector(n),
            [r, c] => Shape::Matrix(r, c),
            _ => {
                return Err(TapemError::Integrity(format!(
                    "checkpoint parameter {} has rank {}",
                    entry.name,
                    entry.shape.len()
                )))
            }
        };
        if expected != got {
            return Err(TapemError::Integrity(format!(
                "checkpoint parameter {}: shape {got} does not match model {expected}",
                entry.name
            )));
        }
        let p = &mut store.params_mut()[id.0];
        p.value.data_mut().copy_from_slice(&entry.values);
        p.m.data_mut().copy_from_slice(&entry.m);
        p.v.data_mut().copy_from_slice(&entry.v);
        p.step = entry.step;
        p.row_steps = entry.row_steps.clone();
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_tapem(
        model: &TapemModel,
        epoch: usize,
        config: &TrainingConfig,
        author_symbols: Vec<String>,
        vocab: &Vocabulary,
    ) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: model.kind.as_str().to_string(),
            dims: model.dims,
            pooling: model.pooling,
            counts: model.counts,
            papers: 0,
            epoch,
            config: config.clone(),
            author_symbols,
            vocab_tokens: vocab.tokens().to_vec(),
            vocab_digest: vocab.digest(),
            params: dump_store(&model.store),
        }
    }

    pub fn from_baseline(
        model: &BaselineModel,
        epoch: usize,
        config: &TrainingConfig,
        author_symbols: Vec<String>,
        vocab: &Vocabulary,
        papers: usize,
    ) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: "baseline".to_string(),
            dims: Dims { k: model.k, d: model.k, pair_hidden: 0, classifier_hidden: 0 },
            pooling: model.pooling,
            counts: model.counts,
            papers,
            epoch,
            config: config.clone(),
            author_symbols,
            vocab_tokens: vocab.tokens().to_vec(),
            vocab_digest: vocab.digest(),
            params: dump_store(&model.store),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self).expect("serializable");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let raw = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&raw)
            .map_err(|e| TapemError::Integrity(format!("unreadable checkpoint: {e}")))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(TapemError::Integrity(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Rebuild the model this checkpoint holds.
    pub fn instantiate(&self) -> Result<AnyModel> {
        let kind = ModelKind::parse(&self.kind)?;
        match kind {
            ModelKind::Baseline => {
                let mut model =
                    BaselineModel::new(self.dims.k, self.pooling, self.counts, self.papers, 0);
                restore_store(&mut model.store, &self.params)?;
                Ok(AnyModel::Baseline(model))
            }
            _ => {
                let mut model = TapemModel::new(kind, self.dims, self.pooling, self.counts, 0);
                restore_store(&mut model.store, &self.params)?;
                Ok(AnyModel::Tapem(model))
            }
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_tokens(self.vocab_tokens.clone())
    }

    /// Fail when the data's vocabulary differs from the checkpoint's.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.digest() != self.vocab_digest {
            return Err(TapemError::Integrity(
                "vocabulary mismatch between checkpoint and data".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn vocab() -> Vocabulary {
        let seqs = vec![vec!["alpha".to_string(), "beta".to_string()]];
        Vocabulary::build(&seqs, 1)
    }

    #[test]
    fn round_trip_preserves_values_and_moments() {
        let dims = Dims { k: 3, d: 2, pair_hidden: 4, classifier_hidden: 4 };
        let counts = EntityCounts { authors: 2, venues: 1, vocab: 3 };
        let model = TapemModel::new(ModelKind::Tapem, dims, Pooling::Mean, counts, 3);
        let vocab = vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = TrainingConfig::default();
        Checkpoint::from_tapem(&model, 7, &cfg, vec!["a0".into(), "a1".into()], &vocab)
            .save(&path)
            .unwrap();
        let loaded = Checkpoint::read(&path).unwrap();
        assert_eq!(loaded.epoch, 7);
        match loaded.instantiate().unwrap() {
            AnyModel::Tapem(m) => {
                for id in model.store.ids() {
                    assert_eq!(model.store.value(id), m.store.value(id));
                }
                assert_eq!(m.kind, ModelKind::Tapem);
            }
            _ => panic!("wrong family"),
        }
        loaded.check_vocab(&vocab).unwrap();
    }

    #[test]
    fn vocab_mismatch_is_detected() {
        let dims = Dims { k: 3, d: 2, pair_hidden: 4, classifier_hidden: 4 };
        let counts = EntityCounts { authors: 2, venues: 1, vocab: 3 };
        let model = TapemModel::new(ModelKind::Tapem, dims, Pooling::Mean, counts, 3);
        let ck = Checkpoint::from_tapem(
            &model,
            0,
            &TrainingConfig::default(),
            vec!["a0".into(), "a1".into()],
            &vocab(),
        );
        let other = Vocabulary::build(&vec![vec!["other".to_string()]], 1);
        assert!(ck.check_vocab(&other).is_err());
    }

    #[test]
    fn identical_saves_are_byte_identical() {
        let dims = Dims { k: 2, d: 2, pair_hidden: 3, classifier_hidden: 3 };
        let counts = EntityCounts { authors: 2, venues: 1, vocab: 2 };
        let model = TapemModel::new(ModelKind::TapemNpv, dims, Pooling::Last, counts, 8);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let cfg = TrainingConfig::default();
        let syms = vec!["a0".to_string(), "a1".to_string()];
        Checkpoint::from_tapem(&model, 1, &cfg, syms.clone(), &vocab()).save(&p1).unwrap();
        Checkpoint::from_tapem(&model, 1, &cfg, syms, &vocab()).save(&p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
