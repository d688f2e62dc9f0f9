use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Amhen, EdgeType};

/// Unordered node-index pairs stored as `(low, high)`.
pub type PairSet = BTreeSet<(usize, usize)>;

pub(crate) fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Random walks over edges of type `t` with transition probabilities
/// proportional to co-occurrence counts. Walks are sequences of node
/// indices, at most `walk_length` long; a node without type-`t` edges
/// yields a walk of length one.
pub fn generate_walks(
    graph: &Amhen,
    t: EdgeType,
    walk_length: usize,
    walks_per_node: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    assert!(walk_length >= 2, "walk length must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walks = Vec::with_capacity(graph.len() * walks_per_node);
    for _ in 0..walks_per_node {
        for start in 0..graph.len() {
            let mut walk = vec![start];
            let mut cur = start;
            while walk.len() < walk_length {
                let nb = graph.neighbors(t, cur);
                if nb.is_empty() {
                    break;
                }
                let total: u64 = nb.iter().map(|&(_, c)| c as u64).sum();
                let mut pick = rng.random_range(0..total);
                let mut next = nb[nb.len() - 1].0;
                for &(j, c) in nb {
                    if pick < c as u64 {
                        next = j;
                        break;
                    }
                    pick -= c as u64;
                }
                walk.push(next);
                cur = next;
            }
            walks.push(walk);
        }
    }
    walks
}

/// Skip-gram context pairs: every `{w[t], w[k]}` with `0 < |k - t| <= window`,
/// deduplicated and unordered. Pairs of a node with itself are dropped.
pub fn extract_positive_pairs(walks: &[Vec<usize>], window: usize) -> PairSet {
    assert!(window >= 1, "window must be at least 1");
    let mut out = PairSet::new();
    for w in walks {
        for t in 0..w.len() {
            for k in t + 1..w.len().min(t + window + 1) {
                if w[t] != w[k] {
                    out.insert(ordered(w[t], w[k]));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_amhen, FuId, FuSequences};
    use std::collections::BTreeMap;

    fn path_graph() -> Amhen {
        let seqs = vec![FuSequences {
            pickup: vec![FuId(0), FuId(1), FuId(2)],
            delivery: vec![FuId(3)],
        }];
        let attrs: BTreeMap<_, _> = (0..4).map(|i| (FuId(i), vec![0.0])).collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    #[test]
    fn walks_respect_length_and_edges() {
        let g = path_graph();
        let walks = generate_walks(&g, EdgeType::Pickup, 10, 5, 1);
        assert_eq!(walks.len(), 20);
        for w in &walks {
            assert!(w.len() <= 10);
            for s in w.windows(2) {
                assert!(g.edges(EdgeType::Pickup).contains(s[0], s[1]));
            }
        }
    }

    #[test]
    fn middle_of_path_has_two_options() {
        let g = path_graph();
        let walks = generate_walks(&g, EdgeType::Pickup, 2, 50, 7);
        let from_mid: BTreeSet<_> = walks.iter().filter(|w| w[0] == 1).map(|w| w.clone()).collect();
        assert_eq!(from_mid, BTreeSet::from([vec![1, 0], vec![1, 2]]));
    }

    #[test]
    fn isolated_node_walk_is_itself() {
        let g = path_graph();
        let walks = generate_walks(&g, EdgeType::Pickup, 10, 1, 3);
        assert_eq!(walks[3], vec![3]);
    }

    #[test]
    fn walks_are_seed_deterministic() {
        let g = path_graph();
        assert_eq!(
            generate_walks(&g, EdgeType::Pickup, 10, 4, 9),
            generate_walks(&g, EdgeType::Pickup, 10, 4, 9)
        );
    }

    #[test]
    fn window_pairs() {
        let w = vec![vec![0, 1, 2]];
        assert_eq!(extract_positive_pairs(&w, 1), PairSet::from([(0, 1), (1, 2)]));
        assert_eq!(extract_positive_pairs(&w, 2), PairSet::from([(0, 1), (1, 2), (0, 2)]));
        assert!(extract_positive_pairs(&[vec![4]], 3).is_empty());
    }
}
