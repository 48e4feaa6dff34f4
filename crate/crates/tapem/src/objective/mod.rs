//! Training objective: hyperparameters, the context-path pool, loss
//! assembly, and the epoch loops for the pair model and the baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapemError};
use crate::hetgraph::NodeId;
use crate::model::Pooling;
use crate::numerics::AdamConfig;
use crate::walker::PairPathInstance;

pub mod loss;
pub mod train;

pub use loss::{instance_loss, loss_ctx, loss_metric, loss_pv, InstanceLoss};
pub use train::{train_baseline_epoch, train_epoch};

fn d_k() -> usize { 128 }
fn d_d() -> usize { 100 }
fn d_hidden() -> usize { 100 }
fn d_tau() -> usize { 3 }
fn d_dropout() -> f64 { 0.15 }
fn d_neg() -> usize { 1 }
fn d_margin() -> f64 { 0.1 }
fn d_walks() -> usize { 5 }
fn d_walk_len() -> usize { 20 }
fn d_schemes() -> Vec<String> { vec!["APA".to_string()] }
fn d_batch() -> usize { 64 }
fn d_epochs() -> usize { 50 }
fn d_lr() -> f64 { 1e-3 }
fn d_beta1() -> f64 { 0.9 }
fn d_beta2() -> f64 { 0.999 }
fn d_eps() -> f64 { 1e-8 }
fn d_metric_weight() -> f64 { 1.0 }
fn d_metric_neg() -> usize { 1 }
fn d_pv_weight() -> f64 { 1.0 }
fn d_pooling() -> Pooling { Pooling::Mean }
fn d_patience() -> usize { 10 }
fn d_seed() -> u64 { 42 }

/// Every training hyperparameter; unspecified config fields take the
/// published defaults.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Node embedding dimension K.
    #[serde(default = "d_k")]
    pub k: usize,
    /// Pair/path embedding dimension d.
    #[serde(default = "d_d")]
    pub d: usize,
    #[serde(default = "d_hidden")]
    pub pair_hidden: usize,
    #[serde(default = "d_hidden")]
    pub classifier_hidden: usize,
    /// Context window size.
    #[serde(default = "d_tau")]
    pub tau: usize,
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    /// Negative context paths per pair.
    #[serde(default = "d_neg")]
    pub negative_contexts: usize,
    /// Margin xi of the metric loss.
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_walks")]
    pub walks_per_node: usize,
    #[serde(default = "d_walk_len")]
    pub walk_length: usize,
    /// Meta-path schemes; the pair model uses APA only by default.
    #[serde(default = "d_schemes")]
    pub schemes: Vec<String>,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    /// Weight of the paper-encoder metric loss on positive instances.
    #[serde(default = "d_metric_weight")]
    pub metric_weight: f64,
    /// Negative authors sampled per positive instance for the metric loss.
    #[serde(default = "d_metric_neg")]
    pub metric_negatives: usize,
    /// Weight of the validity loss relative to the context loss.
    #[serde(default = "d_pv_weight")]
    pub pv_weight: f64,
    #[serde(default = "d_pooling")]
    pub pooling: Pooling,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "d_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl TrainingConfig {
    pub fn from_json(raw: &str) -> Result<TrainingConfig> {
        let cfg: TrainingConfig = serde_json::from_str(raw)
            .map_err(|e| TapemError::Config(format!("invalid training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("d", self.d),
            ("pair_hidden", self.pair_hidden),
            ("classifier_hidden", self.classifier_hidden),
            ("tau", self.tau),
            ("walks_per_node", self.walks_per_node),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TapemError::Config(format!("config field {name} must be positive")));
            }
        }
        if self.walk_length < 2 {
            return Err(TapemError::Config("config field walk_length must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TapemError::Config("config field dropout must be in [0, 1)".into()));
        }
        if self.margin <= 0.0 {
            return Err(TapemError::Config("config field margin must be positive".into()));
        }
        if self.learning_rate <= 0.0 && self.learning_rate != 0.0 {
            return Err(TapemError::Config("config field learning_rate must be non-negative".into()));
        }
        if self.schemes.is_empty() {
            return Err(TapemError::Config("config field schemes must not be empty".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Multiset of every context path extracted from the walks; the sampling
/// universe for negative paths.
#[derive(Clone, Debug, Default)]
pub struct ContextPathPool {
    entries: Vec<(NodeId, NodeId, Vec<NodeId>)>,
}

impl ContextPathPool {
    pub fn from_instances(instances: &[PairPathInstance]) -> ContextPathPool {
        ContextPathPool {
            entries: instances
                .iter()
                .map(|i| (i.paper, i.author, i.path.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, idx: usize) -> &(NodeId, NodeId, Vec<NodeId>) {
        &self.entries[idx]
    }

    /// `k` uniform draws, re-drawing (up to 100 attempts each) paths whose
    /// endpoints equal the excluded pair; the last draw is accepted anyway
    /// on a degenerate pool.
    pub fn sample_negative_paths<R: rand::Rng>(
        &self,
        k: usize,
        exclude: (NodeId, NodeId),
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(TapemError::Contract("negative path pool is empty".into()));
        }
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let mut idx = rng.gen_range(0..self.entries.len());
            for _ in 0..100 {
                let e = &self.entries[idx];
                if (e.0, e.1) != exclude {
                    break;
                }
                idx = rng.gen_range(0..self.entries.len());
            }
            out.push(idx);
        }
        Ok(out)
    }
}

/// Per-epoch loss means and bookkeeping.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainStats {
    pub epoch: usize,
    pub mean_ctx: f64,
    pub mean_pv: f64,
    pub mean_metric: f64,
    pub mean_total: f64,
    pub instances: usize,
    pub wall_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_values() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.k, 128);
        assert_eq!(cfg.d, 100);
        assert_eq!(cfg.tau, 3);
        assert_eq!(cfg.dropout, 0.15);
        assert_eq!(cfg.negative_contexts, 1);
        assert_eq!(cfg.margin, 0.1);
        assert_eq!(cfg.walks_per_node, 5);
        assert_eq!(cfg.walk_length, 20);
        assert_eq!(cfg.schemes, vec!["APA".to_string()]);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.beta1, 0.9);
        assert_eq!(cfg.beta2, 0.999);
        assert_eq!(cfg.epsilon, 1e-8);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = TrainingConfig::from_json("{\"k\": 16, \"epochs\": 3}").unwrap();
        assert_eq!(cfg.k, 16);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.d, 100);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = TrainingConfig::from_json("{\"no_such_knob\": 1}").unwrap_err();
        assert!(err.to_string().contains("no_such_knob"), "{err}");
    }

    #[test]
    fn pool_sampling_uniformity() {
        use rand::SeedableRng;
        let instances: Vec<PairPathInstance> = (0..10)
            .map(|i| PairPathInstance {
                paper: 100 + i,
                author: 200 + i,
                path: vec![100 + i, 200 + i],
                label: true,
                paper_offset: 0,
            })
            .collect();
        let pool = ContextPathPool::from_instances(&instances);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut hits = vec![0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            let idx = pool.sample_negative_paths(1, (0, 0), &mut rng).unwrap()[0];
            hits[idx] += 1;
        }
        for h in hits {
            let f = h as f64 / draws as f64;
            assert!((0.08..=0.12).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn degenerate_pool_accepts_after_rejections() {
        use rand::SeedableRng;
        let instances = vec![PairPathInstance {
            paper: 1,
            author: 2,
            path: vec![1, 2],
            label: true,
            paper_offset: 0,
        }];
        let pool = ContextPathPool::from_instances(&instances);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let picked = pool.sample_negative_paths(1, (1, 2), &mut rng).unwrap();
        assert_eq!(picked, vec![0], "only path accepted after max rejections");
    }

    #[test]
    fn empty_pool_is_a_contract_violation() {
        use rand::SeedableRng;
        let pool = ContextPathPool::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(pool.sample_negative_paths(1, (0, 0), &mut rng).is_err());
    }

    #[test]
    fn k_draws_return_k_paths() {
        use rand::SeedableRng;
        let instances: Vec<PairPathInstance> = (0..3)
            .map(|i| PairPathInstance {
                paper: i,
                author: 10 + i,
                path: vec![i, 10 + i],
                label: false,
                paper_offset: 0,
            })
            .collect();
        let pool = ContextPathPool::from_instances(&instances);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pool.sample_negative_paths(1, (9, 9), &mut rng).unwrap().len(), 1);
        assert_eq!(pool.sample_negative_paths(4, (9, 9), &mut rng).unwrap().len(), 4);
    }
}
