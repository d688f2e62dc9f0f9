//! Held-out link prediction: edge splits, scoring and ranking metrics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::cosine;
use super::negatives::{edge_pairs, sample_negatives};
use super::table::EmbeddingTable;
use crate::network::{Amhen, EdgeType, FuId};

/// Labeled FU pairs per edge type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkSet {
    pub positives: [Vec<(FuId, FuId)>; 2],
    pub negatives: [Vec<(FuId, FuId)>; 2],
}

impl LinkSet {
    pub fn is_empty(&self) -> bool {
        self.positives.iter().all(Vec::is_empty)
    }
}

#[derive(Debug, Clone)]
pub struct EdgeSplit {
    /// The input graph minus test and validation edges.
    pub train: Amhen,
    pub test: LinkSet,
    pub validation: LinkSet,
}

/// Holds out `test_fraction` and `validation_fraction` of each edge type
/// and pairs each held-out set with as many regional negatives drawn from
/// the full graph (never a true edge of that type).
pub fn split_edges(graph: &Amhen, test_fraction: f64, validation_fraction: f64, hop_floor: usize, seed: u64) -> EdgeSplit {
    assert!(test_fraction >= 0.0 && validation_fraction >= 0.0 && test_fraction + validation_fraction < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = LinkSet::default();
    let mut validation = LinkSet::default();
    let mut removed = Vec::new();
    for t in EdgeType::ALL {
        let mut edges: Vec<(usize, usize)> = graph.edges(t).iter().map(|(i, j, _)| (i, j)).collect();
        edges.shuffle(&mut rng);
        let n_test = (edges.len() as f64 * test_fraction).round() as usize;
        let n_val = (edges.len() as f64 * validation_fraction).round() as usize;
        let held = &edges[..(n_test + n_val).min(edges.len())];
        let (te, va) = held.split_at(n_test.min(held.len()));
        removed.extend(held.iter().map(|&(i, j)| (t, i, j)));
        let all_edges = edge_pairs(graph, t);
        let negs = sample_negatives(graph, t, &all_edges, te.len() + va.len(), hop_floor, &mut rng).pairs;
        let mut negs = negs;
        negs.shuffle(&mut rng);
        let fu = |&(i, j): &(usize, usize)| (graph.node(i), graph.node(j));
        let k = t.index();
        test.positives[k] = te.iter().map(fu).collect();
        validation.positives[k] = va.iter().map(fu).collect();
        let cut = te.len().min(negs.len());
        test.negatives[k] = negs[..cut].iter().map(fu).collect();
        validation.negatives[k] = negs[cut..].iter().map(fu).collect();
    }
    EdgeSplit {
        train: graph.without_edges(&removed),
        test,
        validation,
    }
}

/// Mann-Whitney AUC with tie-averaged ranks; 0.5 when a class is empty.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() || negative.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    (rank_sum - np * (np + 1.0) / 2.0) / (np * nn)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// F1 of the rule "score above the pooled median".
pub fn f1_at_median(positive: &[f64], negative: &[f64]) -> f64 {
    let pooled: Vec<f64> = positive.iter().chain(negative).copied().collect();
    let m = median(&pooled);
    let tp = positive.iter().filter(|&&s| s - m > 0.0).count() as f64;
    let fp = negative.iter().filter(|&&s| s - m > 0.0).count() as f64;
    let fnn = positive.len() as f64 - tp;
    if tp == 0.0 {
        return 0.0;
    }
    2.0 * tp / (2.0 * tp + fp + fnn)
}

/// Average precision: mean precision at each positive's rank, ties broken
/// pessimistically.
pub fn average_precision(positive: &[f64], negative: &[f64]) -> f64 {
    if positive.is_empty() {
        return 0.0;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut tp = 0.0;
    let mut ap = 0.0;
    for (k, &(_, is_pos)) in all.iter().enumerate() {
        if is_pos {
            tp += 1.0;
            ap += tp / (k + 1) as f64;
        }
    }
    ap / positive.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub auc: f64,
    pub f1: f64,
    pub pr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkReport {
    pub pickup: LinkMetrics,
    pub delivery: LinkMetrics,
    /// Unweighted mean of the two edge types.
    pub mean: LinkMetrics,
    /// Pairs skipped because an endpoint had no embedding.
    pub skipped: usize,
    pub evaluated: usize,
}

pub fn metrics(positive: &[f64], negative: &[f64]) -> LinkMetrics {
    LinkMetrics {
        auc: roc_auc(positive, negative),
        f1: f1_at_median(positive, negative),
        pr: average_precision(positive, negative),
    }
}

/// Scores held-out pairs by typed cosine similarity.
pub fn link_prediction_eval(table: &EmbeddingTable, links: &LinkSet) -> LinkReport {
    let mut report = LinkReport::default();
    let mut per_type = [LinkMetrics::default(); 2];
    for t in EdgeType::ALL {
        let k = t.index();
        let mut score = |pairs: &[(FuId, FuId)]| -> Vec<f64> {
            let mut out = Vec::with_capacity(pairs.len());
            for &(a, b) in pairs {
                match (table.covered(a), table.covered(b)) {
                    (Some(ea), Some(eb)) => {
                        let (va, vb) = match t {
                            EdgeType::Pickup => (&ea.pickup, &eb.pickup),
                            EdgeType::Delivery => (&ea.delivery, &eb.delivery),
                        };
                        let va: Vec<f64> = va.iter().map(|&x| x as f64).collect();
                        let vb: Vec<f64> = vb.iter().map(|&x| x as f64).collect();
                        out.push(cosine(&va, &vb));
                    }
                    _ => report.skipped += 1,
                }
            }
            out
        };
        let pos = score(&links.positives[k]);
        let neg = score(&links.negatives[k]);
        report.evaluated += pos.len() + neg.len();
        per_type[k] = metrics(&pos, &neg);
    }
    if report.skipped > 0 {
        log::warn!("link prediction skipped {} pairs without embeddings", report.skipped);
    }
    report.pickup = per_type[0];
    report.delivery = per_type[1];
    report.mean = LinkMetrics {
        auc: 0.5 * (per_type[0].auc + per_type[1].auc),
        f1: 0.5 * (per_type[0].f1 + per_type[1].f1),
        pr: 0.5 * (per_type[0].pr + per_type[1].pr),
    };
    report
}

/// Graph used to train an ablated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoAttributes,
    NoPickup,
    NoDelivery,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoAttributes, Ablation::NoPickup, Ablation::NoDelivery];

    /// Applies the ablation. Without attributes, every FU gets a seeded
    /// standard-normal feature vector of the same dimension so that the
    /// inductive model still has an input.
    pub fn apply(self, graph: &Amhen, seed: u64) -> Amhen {
        match self {
            Ablation::Full => graph.clone(),
            Ablation::NoPickup => graph.without_edge_type(EdgeType::Pickup),
            Ablation::NoDelivery => graph.without_edge_type(EdgeType::Delivery),
            Ablation::NoAttributes => {
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a77e);
                let attrs: BTreeMap<FuId, Vec<f64>> = graph
                    .nodes()
                    .iter()
                    .map(|&fu| (fu, (0..graph.attr_dim()).map(|_| StandardNormal.sample(&mut rng)).collect()))
                    .collect();
                graph.with_attributes(&attrs).expect("same node set and dimension")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_amhen, FuSequences};
    use rand::Rng;

    #[test]
    fn separated_scores_give_auc_one() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2, 0.3]), 1.0);
        assert_eq!(roc_auc(&[0.1], &[0.9]), 0.0);
        assert_eq!(roc_auc(&[0.5], &[0.5]), 0.5);
    }

    /// Direct pair-counting definition of AUC.
    fn auc_oracle(p: &[f64], n: &[f64]) -> f64 {
        let mut s = 0.0;
        for &a in p {
            for &b in n {
                s += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        s / (p.len() * n.len()) as f64
    }

    #[test]
    fn rank_auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p: Vec<f64> = (0..rng.random_range(1..30)).map(|_| (rng.random_range(0..8)) as f64).collect();
            let n: Vec<f64> = (0..rng.random_range(1..30)).map(|_| (rng.random_range(0..8)) as f64).collect();
            assert!((roc_auc(&p, &n) - auc_oracle(&p, &n)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_scores_give_half() {
        let mut aucs = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            let n: Vec<f64> = (0..500).map(|_| rng.random()).collect();
            aucs.push(roc_auc(&p, &n));
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((mean - 0.5).abs() < 0.05);
    }

    #[test]
    fn f1_and_ap_bounds() {
        assert_eq!(f1_at_median(&[0.9, 0.8], &[0.1, 0.2]), 1.0);
        assert_eq!(average_precision(&[0.9, 0.8], &[0.1, 0.2]), 1.0);
        // Ranking p, n, p: precision 1 and 2/3.
        assert!((average_precision(&[0.9, 0.5], &[0.7]) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(f1_at_median(&[0.1], &[0.9]), 0.0);
    }

    fn ring(n: u32) -> Amhen {
        let seqs = vec![FuSequences {
            pickup: (0..n).chain([0]).map(FuId).collect(),
            delivery: (0..n).step_by(2).map(FuId).collect(),
        }];
        let attrs: BTreeMap<_, _> = (0..n).map(|i| (FuId(i), vec![i as f64, 1.0])).collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    #[test]
    fn split_holds_out_and_pairs_negatives() {
        let g = ring(40);
        let s = split_edges(&g, 0.1, 0.05, 3, 1);
        assert_eq!(s.test.positives[0].len(), 4);
        assert_eq!(s.validation.positives[0].len(), 2);
        assert_eq!(s.test.negatives[0].len(), 4);
        assert_eq!(s.train.edges(EdgeType::Pickup).len(), 40 - 6);
        for &(a, b) in &s.test.positives[0] {
            let (i, j) = (s.train.index_of(a).unwrap(), s.train.index_of(b).unwrap());
            assert!(!s.train.edges(EdgeType::Pickup).contains(i, j));
        }
        for &(a, b) in s.test.negatives[0].iter().chain(&s.validation.negatives[0]) {
            let (i, j) = (g.index_of(a).unwrap(), g.index_of(b).unwrap());
            assert!(!g.edges(EdgeType::Pickup).contains(i, j));
        }
    }

    #[test]
    fn eval_skips_missing_nodes() {
        let mut t = EmbeddingTable::new(2);
        t.insert_learned(FuId(0), &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        t.insert_learned(FuId(1), &[1.0, 0.1], &[1.0, 0.1]).unwrap();
        t.insert_learned(FuId(2), &[-1.0, 0.0], &[0.0, 1.0]).unwrap();
        let links = LinkSet {
            positives: [vec![(FuId(0), FuId(1)), (FuId(0), FuId(9))], vec![(FuId(0), FuId(1))]],
            negatives: [vec![(FuId(0), FuId(2))], vec![(FuId(1), FuId(2))]],
        };
        let r = link_prediction_eval(&t, &links);
        assert_eq!(r.skipped, 1);
        assert_eq!(r.pickup.auc, 1.0);
        assert_eq!(r.delivery.auc, 1.0);
    }

    #[test]
    fn ablations_change_the_right_thing() {
        let g = ring(10);
        assert!(Ablation::NoPickup.apply(&g, 0).edges(EdgeType::Pickup).is_empty());
        assert!(!Ablation::NoPickup.apply(&g, 0).edges(EdgeType::Delivery).is_empty());
        let na = Ablation::NoAttributes.apply(&g, 0);
        assert_eq!(na.attr_dim(), 2);
        assert_ne!(na.attrs(3), g.attrs(3));
    }
}
