//! Embedding estimates for FUs that never appeared in training trajectories.

use super::table::{EmbeddingTable, Provenance};
use crate::network::{ExtendedNetwork, FuId};

/// For every absent FU, averages the learned vectors of its extended-network
/// neighbors; if none of those is learned, of learned FUs sharing its pickup
/// AOI. Only learned vectors are used as sources, so a single pass suffices
/// and the result does not depend on visiting order.
pub fn estimate_cold_start(table: &EmbeddingTable, extended: &ExtendedNetwork) -> EmbeddingTable {
    let mut out = table.clone();
    let absent: Vec<FuId> = table
        .iter()
        .filter(|e| e.provenance == Provenance::Absent)
        .map(|e| e.fu)
        .chain(extended.adjacency.keys().copied().filter(|fu| table.entry(*fu).is_none()))
        .collect();
    let learned = |ids: &[FuId]| -> Vec<FuId> {
        ids.iter()
            .copied()
            .filter(|n| table.provenance(*n) == Provenance::Learned)
            .collect()
    };
    let d = table.dim();
    for fu in absent {
        let mut sources = learned(extended.neighbors(fu));
        if sources.is_empty() {
            sources = learned(extended.fallback(fu));
        }
        if sources.is_empty() {
            out.insert_absent(fu);
            continue;
        }
        let mut acc = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        for s in &sources {
            let e = table.entry(*s).expect("learned source present");
            for (a, v) in acc.iter_mut().zip([&e.overall, &e.pickup, &e.delivery]) {
                for (x, &y) in a.iter_mut().zip(v.iter()) {
                    *x += y as f64;
                }
            }
        }
        let inv = 1.0 / sources.len() as f64;
        for a in &mut acc {
            a.iter_mut().for_each(|x| *x *= inv);
        }
        out.insert_vectors(fu, Provenance::Estimated, &acc[1], &acc[2], Some(&acc[0]))
            .expect("finite averages of finite vectors");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn net(adj: &[(u32, &[u32])], same: &[(u32, &[u32])]) -> ExtendedNetwork {
        let conv = |x: &[(u32, &[u32])]| -> BTreeMap<FuId, Vec<FuId>> {
            x.iter().map(|(k, v)| (FuId(*k), v.iter().map(|&i| FuId(i)).collect())).collect()
        };
        ExtendedNetwork {
            adjacency: conv(adj),
            same_pickup: conv(same),
            excluded: Vec::new(),
        }
    }

    #[test]
    fn one_learned_neighbor_is_copied() {
        let mut t = EmbeddingTable::new(2);
        t.insert_learned(FuId(0), &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        t.insert_absent(FuId(1));
        let out = estimate_cold_start(&t, &net(&[(1, &[0])], &[]));
        let e = out.entry(FuId(1)).unwrap();
        assert_eq!(e.provenance, Provenance::Estimated);
        assert_eq!(e.pickup, vec![1.0, 2.0]);
        assert_eq!(e.overall, vec![2.0, 3.0]);
        assert!(out.coverage().0 > t.coverage().0);
    }

    #[test]
    fn falls_back_to_same_pickup() {
        let mut t = EmbeddingTable::new(1);
        t.insert_learned(FuId(0), &[2.0], &[2.0]).unwrap();
        t.insert_learned(FuId(3), &[4.0], &[4.0]).unwrap();
        t.insert_absent(FuId(1));
        t.insert_absent(FuId(2));
        let out = estimate_cold_start(&t, &net(&[(1, &[2])], &[(1, &[0, 2, 3])]));
        assert_eq!(out.entry(FuId(1)).unwrap().pickup, vec![3.0]);
        assert_eq!(out.provenance(FuId(2)), Provenance::Absent);
    }

    #[test]
    fn coverage_never_decreases() {
        let mut t = EmbeddingTable::new(1);
        t.insert_absent(FuId(1));
        let out = estimate_cold_start(&t, &net(&[], &[]));
        assert_eq!(out.coverage(), t.coverage());
    }
}
