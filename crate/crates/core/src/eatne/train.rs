//! Mini-batch Adam training with validation-AUC early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{roc_auc, split_edges, LinkSet};
use super::linalg::cosine;
use super::loss::{loss_and_grad, loss_registry, TrainingPairSets};
use super::negatives::sampler_registry;
use super::params::{Dims, ModelParams, NodeCache, Propagated};
use super::table::EmbeddingTable;
use super::walks::{extract_positive_pairs, generate_walks};
use crate::error::{Error, Result};
use crate::network::{Amhen, EdgeType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EatneConfig {
    pub base_dim: usize,
    pub edge_dim: usize,
    pub attention_dim: usize,
    pub walk_length: usize,
    pub window: usize,
    pub walks_per_node: usize,
    pub negatives_per_positive: usize,
    pub hop_floor: usize,
    /// Margins for (pickup, delivery) negatives.
    pub margin: [f64; 2],
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma_pos: [f64; 2],
    pub gamma_neg: [f64; 2],
    pub aggregation_levels: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub validation_fraction: f64,
    pub loss: String,
    pub sampler: String,
}

impl Default for EatneConfig {
    fn default() -> Self {
        EatneConfig {
            base_dim: 200,
            edge_dim: 20,
            attention_dim: 20,
            walk_length: 10,
            window: 3,
            walks_per_node: 20,
            negatives_per_positive: 5,
            hop_floor: 3,
            margin: [0.3, 0.3],
            alpha: [1.0, 1.0],
            beta: [1.0, 1.0],
            gamma_pos: [1.0, 1.0],
            gamma_neg: [1.0, 1.0],
            aggregation_levels: 2,
            learning_rate: 0.001,
            batch_size: 512,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.05,
            loss: "margin".into(),
            sampler: "regional".into(),
        }
    }
}

impl EatneConfig {
    /// The cross-entropy baseline: log-sigmoid loss with uniform negatives.
    pub fn baseline() -> Self {
        EatneConfig {
            loss: "logsigmoid".into(),
            sampler: "uniform".into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.base_dim == 0 || self.edge_dim == 0 || self.attention_dim == 0 {
            return bad("embedding dimensions must be positive");
        }
        if self.walk_length < 2 {
            return bad("walk_length must be at least 2");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.walks_per_node == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("walks_per_node, batch_size and max_epochs must be positive");
        }
        if self.hop_floor <= 2 {
            return bad("hop_floor must exceed 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 0.5)");
        }
        let all = self.margin.iter().chain(&self.alpha).chain(&self.beta).chain(&self.gamma_pos).chain(&self.gamma_neg);
        if all.clone().any(|x| !x.is_finite()) || self.gamma_pos.iter().chain(&self.gamma_neg).any(|&g| g < 0.0) {
            return bad("weights must be finite and loss weights non-negative");
        }
        if !loss_registry().contains(&self.loss) {
            return bad(&format!("unknown loss '{}' (available: {:?})", self.loss, loss_registry().names()));
        }
        if !sampler_registry().contains(&self.sampler) {
            return bad(&format!(
                "unknown sampler '{}' (available: {:?})",
                self.sampler,
                sampler_registry().names()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    pub params: ModelParams,
    pub curve: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..theta.len() {
            let g = grad[k];
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            theta[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Walk-based positives and a negative pool of `negatives_per_positive`
/// times as many pairs, per edge type.
pub fn build_pair_sets(graph: &Amhen, cfg: &EatneConfig, seed: u64) -> Result<TrainingPairSets> {
    let sampler = sampler_registry().build(&cfg.sampler, &cfg.hop_floor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = TrainingPairSets {
        gamma_pos: cfg.gamma_pos,
        gamma_neg: cfg.gamma_neg,
        ..Default::default()
    };
    for t in EdgeType::ALL {
        let walks = generate_walks(graph, t, cfg.walk_length, cfg.walks_per_node, rng.random());
        let positives = extract_positive_pairs(&walks, cfg.window);
        let want = positives.len() * cfg.negatives_per_positive;
        let negatives = sampler.sample(graph, t, &positives, want, &mut rng);
        sets.positives[t.index()] = positives.into_iter().collect();
        sets.negatives[t.index()] = negatives.pairs;
    }
    Ok(sets)
}

/// Typed embeddings of every node under `params`.
pub fn embed_all(graph: &Amhen, params: &ModelParams) -> Vec<NodeCache> {
    use rayon::prelude::*;
    let prop = Propagated::new(graph, params.aggregation_levels);
    (0..graph.len()).into_par_iter().map(|i| params.forward(&prop, i)).collect()
}

pub fn table_from_params(graph: &Amhen, params: &ModelParams) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(params.dims.base);
    for c in embed_all(graph, params) {
        table.insert_learned(graph.node(c.node), c.embedding(EdgeType::Pickup), c.embedding(EdgeType::Delivery))?;
    }
    Ok(table)
}

/// Mean over edge types of the typed-cosine validation AUC.
pub fn validation_auc(graph: &Amhen, params: &ModelParams, links: &LinkSet) -> f64 {
    let caches = embed_all(graph, params);
    let mut aucs = Vec::new();
    for t in EdgeType::ALL {
        let k = t.index();
        let score = |pairs: &[(crate::network::FuId, crate::network::FuId)]| -> Vec<f64> {
            pairs
                .iter()
                .filter_map(|&(a, b)| {
                    let (i, j) = (graph.index_of(a)?, graph.index_of(b)?);
                    Some(cosine(caches[i].embedding(t), caches[j].embedding(t)))
                })
                .collect()
        };
        let (p, n) = (score(&links.positives[k]), score(&links.negatives[k]));
        if !p.is_empty() && !n.is_empty() {
            aucs.push(roc_auc(&p, &n));
        }
    }
    if aucs.is_empty() {
        0.5
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    }
}

/// Holds out a validation split of the graph's edges, trains on the rest
/// with early stopping, and embeds every node with the kept parameters.
pub fn train(graph: &Amhen, cfg: &EatneConfig, seed: u64) -> Result<EmbeddingTable> {
    Ok(train_outcome(graph, cfg, seed)?.table)
}

/// [`train`] with its loss curve and stopping epoch.
pub fn train_outcome(graph: &Amhen, cfg: &EatneConfig, seed: u64) -> Result<TrainOutcome> {
    let outcome = if cfg.validation_fraction > 0.0 {
        let split = split_edges(graph, 0.0, cfg.validation_fraction, cfg.hop_floor, seed ^ 0x7a1d);
        let out = train_with_validation(&split.train, cfg, Some(&split.validation), seed)?;
        TrainOutcome {
            table: table_from_params(graph, &out.params)?,
            ..out
        }
    } else {
        train_with_validation(graph, cfg, None, seed)?
    };
    Ok(outcome)
}

/// Trains on all edges of `graph`. With a validation set, training stops
/// after `patience` epochs without AUC improvement and the best epoch's
/// parameters are kept; otherwise it runs `max_epochs`.
pub fn train_with_validation(
    graph: &Amhen,
    cfg: &EatneConfig,
    validation: Option<&LinkSet>,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(Error::validation("cannot train on an empty graph"));
    }
    let loss = loss_registry().build(&cfg.loss, &cfg.margin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims {
        attr: graph.attr_dim(),
        base: cfg.base_dim,
        edge: cfg.edge_dim,
        attention: cfg.attention_dim,
    };
    let mut params = ModelParams::init(dims, cfg.alpha, cfg.beta, cfg.aggregation_levels, &mut rng);
    let pairs = build_pair_sets(graph, cfg, rng.random())?;
    let prop = Propagated::new(graph, cfg.aggregation_levels);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);

    let mut order: Vec<(usize, usize)> = (0..2)
        .flat_map(|t| (0..pairs.positives[t].len()).map(move |k| (t, k)))
        .collect();
    if order.is_empty() {
        log::warn!("no positive pairs; embeddings are left at initialization");
    }
    let mut curve = Vec::new();
    let mut best = (f64::NEG_INFINITY, params.theta.clone(), 0usize);
    let mut stale = 0;
    let mut stopped_early = false;
    let mut grad = params.zeros_like();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = pairs.empty_like();
            for &(t, k) in chunk {
                batch.positives[t].push(pairs.positives[t][k]);
                let pool = &pairs.negatives[t];
                if !pool.is_empty() {
                    for _ in 0..cfg.negatives_per_positive {
                        batch.negatives[t].push(pool[rng.random_range(0..pool.len())]);
                    }
                }
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = loss_and_grad(&params, &prop, &batch, loss.as_ref(), Some(&mut grad));
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss: l });
            }
            adam.step(&mut params.theta, &grad);
            total += l;
            batches += 1;
        }
        let mean_loss = if batches > 0 { total / batches as f64 } else { 0.0 };
        let auc = validation.map(|v| validation_auc(graph, &params, v));
        log::debug!("epoch {epoch}: loss {mean_loss:.5} validation auc {auc:?}");
        curve.push(EpochRecord {
            epoch,
            loss: mean_loss,
            validation_auc: auc,
        });
        match auc {
            Some(a) if a > best.0 => {
                best = (a, params.theta.clone(), epoch);
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    stopped_early = true;
                    break;
                }
            }
            None => best = (f64::NEG_INFINITY, Vec::new(), epoch),
        }
    }
    if !best.1.is_empty() {
        params.theta = best.1;
    }
    let table = table_from_params(graph, &params)?;
    Ok(TrainOutcome {
        table,
        params,
        curve,
        best_epoch: best.2,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_amhen, FuId, FuSequences};
    use std::collections::BTreeMap;

    fn tiny() -> Amhen {
        let seqs = vec![FuSequences {
            pickup: vec![FuId(0), FuId(1), FuId(2)],
            delivery: vec![FuId(2), FuId(3)],
        }];
        let attrs: BTreeMap<_, _> = (0..4).map(|i| (FuId(i), vec![i as f64, (i * i) as f64 * 0.1, 1.0])).collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    fn small_cfg() -> EatneConfig {
        EatneConfig {
            base_dim: 16,
            edge_dim: 4,
            attention_dim: 4,
            walks_per_node: 2,
            max_epochs: 200,
            validation_fraction: 0.0,
            learning_rate: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn loss_decreases_on_two_positive_pairs() {
        let g = tiny();
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = Dims {
            attr: 3,
            base: 16,
            edge: 4,
            attention: 4,
        };
        let mut params = ModelParams::init(dims, [1.0; 2], [1.0; 2], 2, &mut rng);
        let prop = Propagated::new(&g, 2);
        let pairs = TrainingPairSets {
            positives: [vec![(0, 1)], vec![(2, 3)]],
            negatives: [vec![], vec![]],
            gamma_pos: [1.0; 2],
            gamma_neg: [1.0; 2],
        };
        let loss = loss_registry().build("margin", &cfg.margin).unwrap();
        let initial = loss_and_grad(&params, &prop, &pairs, loss.as_ref(), None);
        let mut adam = Adam::new(params.len(), cfg.learning_rate);
        let mut grad = params.zeros_like();
        for _ in 0..200 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            loss_and_grad(&params, &prop, &pairs, loss.as_ref(), Some(&mut grad));
            adam.step(&mut params.theta, &grad);
        }
        let fin = loss_and_grad(&params, &prop, &pairs, loss.as_ref(), None);
        assert!(fin < initial, "{fin} !< {initial}");
    }

    #[test]
    fn training_is_deterministic() {
        let g = tiny();
        let mut cfg = small_cfg();
        cfg.max_epochs = 5;
        let a = train(&g, &cfg, 3).unwrap();
        let b = train(&g, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coverage(), (4, 4));
    }

    #[test]
    fn learned_overall_is_typed_mean() {
        let g = tiny();
        let mut cfg = small_cfg();
        cfg.max_epochs = 2;
        let t = train(&g, &cfg, 0).unwrap();
        for e in t.iter() {
            for k in 0..e.overall.len() {
                let m = 0.5 * (e.pickup[k] as f64 + e.delivery[k] as f64);
                assert!((e.overall[k] as f64 - m).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EatneConfig::default().validate().is_ok());
        assert!(EatneConfig::baseline().validate().is_ok());
        let bad = EatneConfig {
            hop_floor: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EatneConfig {
            loss: "nce".into(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn negatives_disjoint_from_positives_and_regional() {
        let g = tiny();
        let s = build_pair_sets(&g, &small_cfg(), 4).unwrap();
        for t in 0..2 {
            for p in &s.negatives[t] {
                assert!(!s.positives[t].contains(p));
                assert_eq!(g.region(p.0), g.region(p.1));
            }
        }
    }
}
