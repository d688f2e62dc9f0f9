//! Pair losses over typed embeddings and the full mini-batch objective.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::linalg::{cosine_backward, dot};
use super::params::{ModelParams, NodeCache, Propagated};
use crate::registry::Registry;

/// Loss applied to one pair of typed embeddings.
pub trait PairLoss: Send + Sync {
    fn name(&self) -> &'static str;

    /// Loss of a linked pair; gradients scaled by `scale` are added into `ga`, `gb`.
    fn positive(&self, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64;

    /// Loss of a non-linked pair of edge type `t`.
    fn negative(&self, t: usize, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64;
}

/// `1 - cos` for positives and `max(0, cos - m_t)` for negatives.
#[derive(Debug, Clone, Copy)]
pub struct MarginLoss {
    pub margins: [f64; 2],
}

impl PairLoss for MarginLoss {
    fn name(&self) -> &'static str {
        "margin"
    }

    fn positive(&self, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64 {
        1.0 - cosine_backward(a, b, -scale, ga, gb)
    }

    fn negative(&self, t: usize, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64 {
        let c = cosine_backward(a, b, 0.0, ga, gb);
        let m = self.margins[t];
        if c > m {
            cosine_backward(a, b, scale, ga, gb);
            c - m
        } else {
            0.0
        }
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Skip-gram negative-sampling loss on inner products.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogSigmoidLoss;

impl PairLoss for LogSigmoidLoss {
    fn name(&self) -> &'static str {
        "logsigmoid"
    }

    fn positive(&self, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64 {
        let s = dot(a, b);
        let g = scale * (sigmoid(s) - 1.0);
        for k in 0..a.len() {
            ga[k] += g * b[k];
            gb[k] += g * a[k];
        }
        -log_sigmoid(s)
    }

    fn negative(&self, _t: usize, a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) -> f64 {
        let s = dot(a, b);
        let g = scale * sigmoid(s);
        for k in 0..a.len() {
            ga[k] += g * b[k];
            gb[k] += g * a[k];
        }
        -log_sigmoid(-s)
    }
}

pub fn loss_registry() -> Registry<dyn PairLoss, [f64; 2]> {
    let mut r: Registry<dyn PairLoss, [f64; 2]> = Registry::new("pair loss");
    r.register("margin", |m: &[f64; 2]| Box::new(MarginLoss { margins: *m }));
    r.register("logsigmoid", |_: &[f64; 2]| Box::new(LogSigmoidLoss));
    r
}

/// Positive and negative node-index pairs per edge type with their weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingPairSets {
    pub positives: [Vec<(usize, usize)>; 2],
    pub negatives: [Vec<(usize, usize)>; 2],
    pub gamma_pos: [f64; 2],
    pub gamma_neg: [f64; 2],
}

impl TrainingPairSets {
    pub fn len(&self) -> usize {
        self.positives.iter().chain(&self.negatives).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same weights, empty pair lists.
    pub fn empty_like(&self) -> Self {
        TrainingPairSets {
            gamma_pos: self.gamma_pos,
            gamma_neg: self.gamma_neg,
            ..Default::default()
        }
    }
}

const CHUNK: usize = 16;

/// Weighted sum over the four pair sets of each set's mean pair loss.
/// When `grad` is given, the gradient with respect to `params.theta` is
/// added into it. Empty sets contribute nothing.
pub fn loss_and_grad(
    params: &ModelParams,
    prop: &Propagated,
    pairs: &TrainingPairSets,
    loss: &dyn PairLoss,
    grad: Option<&mut [f64]>,
) -> f64 {
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    for sets in [&pairs.positives, &pairs.negatives] {
        for set in sets {
            for &(i, j) in set {
                let n = slot.len();
                slot.entry(i).or_insert(n);
                let n = slot.len();
                slot.entry(j).or_insert(n);
            }
        }
    }
    let mut nodes = vec![0; slot.len()];
    for (&node, &s) in &slot {
        nodes[s] = node;
    }
    let caches: Vec<NodeCache> = nodes.par_iter().map(|&i| params.forward(prop, i)).collect();
    let d = params.dims.base;
    let mut dv: Vec<[Vec<f64>; 2]> = vec![[vec![0.0; d], vec![0.0; d]]; nodes.len()];
    let want = grad.is_some();
    let mut total = 0.0;
    for t in 0..2 {
        for (positive, set, gamma) in [
            (true, &pairs.positives[t], pairs.gamma_pos[t]),
            (false, &pairs.negatives[t], pairs.gamma_neg[t]),
        ] {
            if set.is_empty() || gamma == 0.0 {
                continue;
            }
            let scale = if want { gamma / set.len() as f64 } else { 0.0 };
            let mut sum = 0.0;
            let mut ga = vec![0.0; d];
            let mut gb = vec![0.0; d];
            for &(i, j) in set {
                let (si, sj) = (slot[&i], slot[&j]);
                let a = &caches[si].typed[t].v;
                let b = &caches[sj].typed[t].v;
                ga.iter_mut().for_each(|x| *x = 0.0);
                gb.iter_mut().for_each(|x| *x = 0.0);
                sum += if positive {
                    loss.positive(a, b, scale, &mut ga, &mut gb)
                } else {
                    loss.negative(t, a, b, scale, &mut ga, &mut gb)
                };
                if want {
                    for k in 0..d {
                        dv[si][t][k] += ga[k];
                        dv[sj][t][k] += gb[k];
                    }
                }
            }
            total += gamma * sum / set.len() as f64;
        }
    }
    if let Some(grad) = grad {
        // Fixed chunking keeps the floating-point summation order independent
        // of the thread count.
        let partial: Vec<Vec<f64>> = caches
            .par_chunks(CHUNK)
            .zip(dv.par_chunks(CHUNK))
            .map(|(cs, ds)| {
                let mut g = params.zeros_like();
                for (c, dvi) in cs.iter().zip(ds) {
                    params.backward(prop, c, dvi, &mut g);
                }
                g
            })
            .collect();
        for g in partial {
            for (o, v) in grad.iter_mut().zip(&g) {
                *o += v;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eatne::params::Dims;
    use crate::network::{build_amhen, Amhen, FuId, FuSequences};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn zeros(n: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; n], vec![0.0; n])
    }

    #[test]
    fn identical_positive_costs_nothing() {
        let (mut ga, mut gb) = zeros(3);
        let v = [0.3, -1.0, 2.0];
        let l = MarginLoss { margins: [0.3; 2] }.positive(&v, &v, 1.0, &mut ga, &mut gb);
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn hinge_values() {
        let m = MarginLoss { margins: [0.3; 2] };
        let (mut ga, mut gb) = zeros(2);
        // cos = 0.3 exactly: (1, 0) vs (0.3, sqrt(0.91)).
        let b = [0.3, 0.91f64.sqrt()];
        let l = m.negative(0, &[1.0, 0.0], &b, 1.0, &mut ga, &mut gb);
        assert!(l.abs() < 1e-12);
        assert!(ga.iter().chain(&gb).all(|g| *g == 0.0));
        let l = m.negative(0, &[1.0, 2.0], &[1.0, 2.0], 1.0, &mut ga, &mut gb);
        assert!((l - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_cosine_is_zero() {
        let (mut ga, mut gb) = zeros(2);
        let l = MarginLoss { margins: [0.3; 2] }.positive(&[0.0, 0.0], &[1.0, 1.0], 1.0, &mut ga, &mut gb);
        assert_eq!(l, 1.0);
    }

    #[test]
    fn registry_has_both_losses() {
        let r = loss_registry();
        assert_eq!(r.names(), vec!["logsigmoid", "margin"]);
        assert_eq!(r.build("margin", &[0.3, 0.3]).unwrap().name(), "margin");
        assert!(r.build("hinge", &[0.3, 0.3]).is_err());
    }

    fn random_graph(n: u32, seed: u64) -> Amhen {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seqs = Vec::new();
        for _ in 0..n {
            let len = rng.random_range(2..5);
            let pick = |rng: &mut ChaCha8Rng| (0..len).map(|_| FuId(rng.random_range(0..n))).collect();
            seqs.push(FuSequences {
                pickup: pick(&mut rng),
                delivery: pick(&mut rng),
            });
        }
        let attrs: BTreeMap<_, _> = (0..n)
            .map(|i| (FuId(i), (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()))
            .collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    fn all_pairs(g: &Amhen, seed: u64) -> TrainingPairSets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = TrainingPairSets {
            gamma_pos: [1.0, 0.7],
            gamma_neg: [1.3, 1.0],
            ..Default::default()
        };
        for t in 0..2 {
            for i in 0..g.len() {
                for j in i + 1..g.len() {
                    if rng.random::<f64>() < 0.5 {
                        p.positives[t].push((i, j));
                    } else {
                        p.negatives[t].push((i, j));
                    }
                }
            }
        }
        p
    }

    /// Central finite differences over every parameter.
    fn gradient_rel_error(g: &Amhen, loss: &dyn PairLoss, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims {
            attr: g.attr_dim(),
            base: 6,
            edge: 3,
            attention: 3,
        };
        let mut params = ModelParams::init(dims, [0.8, 1.2], [0.5, 1.0], 2, &mut rng);
        let prop = Propagated::new(g, 2);
        let pairs = all_pairs(g, seed + 1);
        let mut analytic = params.zeros_like();
        loss_and_grad(&params, &prop, &pairs, loss, Some(&mut analytic));
        let h = 1e-6;
        let mut numeric = params.zeros_like();
        for k in 0..params.len() {
            let orig = params.theta[k];
            params.theta[k] = orig + h;
            let up = loss_and_grad(&params, &prop, &pairs, loss, None);
            params.theta[k] = orig - h;
            let down = loss_and_grad(&params, &prop, &pairs, loss, None);
            params.theta[k] = orig;
            numeric[k] = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
            .max(1e-12);
        diff / scale
    }

    #[test]
    fn margin_gradient_matches_finite_differences_on_five_nodes() {
        let g = random_graph(5, 11);
        let err = gradient_rel_error(&g, &MarginLoss { margins: [0.3, 0.3] }, 5);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn logsigmoid_gradient_matches_finite_differences() {
        let g = random_graph(5, 12);
        let err = gradient_rel_error(&g, &LogSigmoidLoss, 6);
        assert!(err <= 1e-4, "relative error {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn gradient_matches_finite_differences(n in 2u32..=10, seed in 0u64..1000) {
            let g = random_graph(n, seed);
            let err = gradient_rel_error(&g, &MarginLoss { margins: [0.3, 0.3] }, seed);
            prop_assert!(err <= 1e-4, "relative error {}", err);
        }

        #[test]
        fn loss_is_non_negative(n in 2u32..=10, seed in 0u64..1000) {
            let g = random_graph(n, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims { attr: g.attr_dim(), base: 8, edge: 4, attention: 4 };
            let params = ModelParams::init(dims, [1.0; 2], [1.0; 2], 2, &mut rng);
            let prop = Propagated::new(&g, 2);
            let l = loss_and_grad(&params, &prop, &all_pairs(&g, seed), &MarginLoss { margins: [0.3; 2] }, None);
            prop_assert!(l >= 0.0);
        }
    }
}
