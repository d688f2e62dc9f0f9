//! Negative pair samplers: region-congregated hard negatives and a
//! city-wide uniform baseline.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::walks::{ordered, PairSet};
use crate::network::{Amhen, EdgeType};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeSample {
    pub pairs: Vec<(usize, usize)>,
    /// Requested minus delivered, when the candidate pool was too small.
    pub shortfall: usize,
}

pub trait NegativeSampler: Send + Sync {
    fn name(&self) -> &'static str;

    /// Eligibility of an unordered candidate pair (positives already excluded).
    fn eligible(&self, graph: &Amhen, t: EdgeType, i: usize, j: usize, near: &[HashSet<usize>]) -> bool;

    /// Whether the sampler needs per-node neighborhoods within `hop_floor - 1` hops.
    fn hop_exclusion(&self) -> Option<usize> {
        None
    }

    /// Draws up to `count` distinct eligible pairs not in `positives`.
    fn sample(
        &self,
        graph: &Amhen,
        t: EdgeType,
        positives: &PairSet,
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> NegativeSample {
        let near: Vec<HashSet<usize>> = match self.hop_exclusion() {
            Some(h) => (0..graph.len()).map(|i| graph.edges(t).within_hops(i, h)).collect(),
            None => Vec::new(),
        };
        let mut pool = Vec::new();
        for i in 0..graph.len() {
            for j in i + 1..graph.len() {
                if !positives.contains(&(i, j)) && self.eligible(graph, t, i, j, &near) {
                    pool.push((i, j));
                }
            }
        }
        let take = count.min(pool.len());
        let (chosen, _) = pool.partial_shuffle(rng, take);
        let mut pairs = chosen.to_vec();
        pairs.sort_unstable();
        let shortfall = count - take;
        if shortfall > 0 {
            log::warn!(
                "{} sampler: only {take} of {count} {:?} negatives available",
                self.name(),
                t
            );
        }
        NegativeSample { pairs, shortfall }
    }
}

/// Same-region pairs farther than `hop_floor - 1` hops apart on the edge type.
#[derive(Debug, Clone, Copy)]
pub struct RegionalSampler {
    pub hop_floor: usize,
}

impl RegionalSampler {
    pub fn new(hop_floor: usize) -> Self {
        assert!(hop_floor > 2, "hop floor must exceed 2");
        RegionalSampler { hop_floor }
    }
}

impl NegativeSampler for RegionalSampler {
    fn name(&self) -> &'static str {
        "regional"
    }

    fn hop_exclusion(&self) -> Option<usize> {
        Some(self.hop_floor - 1)
    }

    fn eligible(&self, graph: &Amhen, _t: EdgeType, i: usize, j: usize, near: &[HashSet<usize>]) -> bool {
        graph.region(i) == graph.region(j) && !near[i].contains(&j)
    }
}

/// Any pair in the graph except positives.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSampler;

impl NegativeSampler for UniformSampler {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn eligible(&self, _: &Amhen, _: EdgeType, _: usize, _: usize, _: &[HashSet<usize>]) -> bool {
        true
    }
}

/// Region-restricted sampling of `count` negatives excluding `positives`
/// and pairs within `hop_floor - 1` hops.
pub fn sample_negatives(
    graph: &Amhen,
    t: EdgeType,
    positives: &PairSet,
    count: usize,
    hop_floor: usize,
    rng: &mut ChaCha8Rng,
) -> NegativeSample {
    RegionalSampler::new(hop_floor).sample(graph, t, positives, count, rng)
}

/// All edges of type `t` as a pair set (used to exclude true links).
pub fn edge_pairs(graph: &Amhen, t: EdgeType) -> PairSet {
    graph.edges(t).iter().map(|(i, j, _)| ordered(i, j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_amhen, FuId, FuSequences};
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    fn two_regions() -> Amhen {
        // Region A: path 0-1-2-3-4 (pickup); region B: 10-11.
        let seqs = vec![
            FuSequences {
                pickup: (0..5).map(FuId).collect(),
                delivery: vec![],
            },
            FuSequences {
                pickup: vec![FuId(10), FuId(11)],
                delivery: vec![],
            },
        ];
        let attrs: BTreeMap<_, _> = [0, 1, 2, 3, 4, 10, 11].iter().map(|&i| (FuId(i), vec![0.0])).collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    #[test]
    fn regional_negatives_obey_every_rule() {
        let g = two_regions();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let positives = PairSet::from([(0, 4)]);
        let s = sample_negatives(&g, EdgeType::Pickup, &positives, 100, 3, &mut rng);
        // Only (0,3) and (1,4) are 3 hops apart in region A; (0,4) is positive.
        assert_eq!(s.pairs, vec![(0, 3), (1, 4)]);
        assert_eq!(s.shortfall, 98);
        for &(i, j) in &s.pairs {
            assert_eq!(g.region(i), g.region(j));
            assert!(!positives.contains(&(i, j)));
        }
    }

    #[test]
    fn one_hop_and_cross_region_rejected() {
        let g = two_regions();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_negatives(&g, EdgeType::Pickup, &PairSet::new(), 100, 3, &mut rng);
        assert!(!s.pairs.contains(&(0, 1)));
        assert!(!s.pairs.iter().any(|&(i, j)| g.region(i) != g.region(j)));
    }

    #[test]
    fn uniform_sampler_crosses_regions() {
        let g = two_regions();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = UniformSampler.sample(&g, EdgeType::Pickup, &PairSet::new(), 21, &mut rng);
        assert_eq!(s.pairs.len(), 21);
        assert!(s.pairs.iter().any(|&(i, j)| g.region(i) != g.region(j)));
    }
}

pub fn sampler_registry() -> crate::registry::Registry<dyn NegativeSampler, usize> {
    let mut r: crate::registry::Registry<dyn NegativeSampler, usize> = crate::registry::Registry::new("negative sampler");
    r.register("regional", |hop: &usize| Box::new(RegionalSampler::new(*hop)));
    r.register("uniform", |_: &usize| Box::new(UniformSampler));
    r
}
