use super::{check_labels, objective_of_labels, BpInstance, SehPartition};
use crate::error::{Error, Result};

pub const EXACT_MAX_FUS: usize = 10;

/// Enumerates labelings in canonical form (nonzero labels appear in order
/// of first use), which covers every partition once and, since objective
/// and constraints are label-symmetric, contains the lexicographically
/// smallest optimal labeling. Ties keep the first labeling found.
pub fn solve_exact(inst: &BpInstance) -> Result<SehPartition> {
    inst.validate()?;
    if inst.len() > EXACT_MAX_FUS {
        return Err(Error::validation(format!(
            "exact solver limited to {EXACT_MAX_FUS} FUs, instance has {}",
            inst.len()
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut labels = vec![0; inst.len()];
    enumerate(inst, &mut labels, 0, 0, &mut best);
    let labels = match best {
        Some((_, l)) => l,
        None => {
            log::warn!("no feasible hotspot partition exists");
            vec![inst.min_label(); inst.len()]
        }
    };
    Ok(SehPartition::from_labels(&labels, inst, "exact"))
}

fn enumerate(inst: &BpInstance, labels: &mut Vec<usize>, pos: usize, used: usize, best: &mut Option<(f64, Vec<usize>)>) {
    if pos == labels.len() {
        if check_labels(labels, inst).feasible {
            let obj = objective_of_labels(labels, inst);
            if best.as_ref().is_none_or(|(b, _)| obj > *b + 1e-12) {
                *best = Some((obj, labels.clone()));
            }
        }
        return;
    }
    let top = (used + 1).min(inst.groups);
    for l in inst.min_label()..=top {
        labels[pos] = l;
        let next = if l > used { l } else { used };
        enumerate(inst, labels, pos + 1, next, best);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seh::tests::instance;

    #[test]
    fn two_fus_single_group_when_feasible() {
        let inst = instance(&[&[0.7]], &[10.0, 10.0], 1, false);
        let p = solve_exact(&inst).unwrap();
        assert!(p.feasible);
        assert_eq!(p.groups[0].len(), 2);
        let mut low = inst.clone();
        low.hpp[0][1] = 0.3;
        low.hpp[1][0] = 0.3;
        assert!(!solve_exact(&low).unwrap().feasible);
    }

    #[test]
    fn all_low_hpp_leaves_everything_unassigned() {
        let mut inst = instance(&[&[0.1], &[0.2], &[0.3]], &[10.0; 3], 2, true);
        inst.min_size = 2;
        let p = solve_exact(&inst).unwrap();
        assert_eq!(p.objective, 0.0);
        assert_eq!(p.unassigned.len(), 3);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let n = 11;
        let inst = BpInstance::new(
            (0..n as u32).map(crate::network::FuId).collect(),
            vec![vec![0.5; n]; n],
            vec![1.0; n],
            2,
            (1, n),
            1.0,
            0.5,
            false,
        )
        .unwrap();
        assert!(solve_exact(&inst).is_err());
    }

    #[test]
    fn recovers_two_clusters() {
        // 0,1,2 tight; 3,4,5 tight; cross pairs weak.
        let n = 6;
        let mut m = vec![vec![0.1; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a == b || (a < 3) == (b < 3) {
                    m[a][b] = 0.9;
                }
            }
        }
        let inst = BpInstance::new(
            (0..n as u32).map(crate::network::FuId).collect(),
            m,
            vec![10.0; n],
            2,
            (2, 4),
            20.0,
            0.5,
            false,
        )
        .unwrap();
        let p = solve_exact(&inst).unwrap();
        assert!((p.objective - 1.8).abs() < 1e-12);
        assert_eq!(p.labels(&inst), vec![1, 1, 1, 2, 2, 2]);
    }
}
