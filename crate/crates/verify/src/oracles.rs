//! Reference implementations written from the definitions, sharing no code
//! with the solvers they check beyond the public data types.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use scdn_core::dispatch::{md_score, Courier, DispatchContext, MoaInstance, Order, TaskKind, Route};
use scdn_core::eatne::{forward, loss_and_grad, loss_registry, Dims, ModelParams, Propagated, TrainingPairSets};
use scdn_core::geo::{AoiId, AoiMap};
use scdn_core::network::{build_amhen, Action, Amhen, CourierId, FuId, FuSequences, TrajectoryEvent};
use scdn_core::seh::{BpInstance, SehPartition};

use crate::instances::rng;

/// AUC as the share of (positive, negative) pairs ranked correctly, ties
/// counting one half.
pub fn pair_count_auc(positive: &[f64], negative: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in positive {
        for &n in negative {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (positive.len() * negative.len()) as f64
}

/// Great-circle distance in meters on a sphere of radius 6,371,008.8 m.
pub fn haversine_m(map: &AoiMap, a: AoiId, b: AoiId) -> f64 {
    let (p, q) = (map.get(a).expect("known AOI"), map.get(b).expect("known AOI"));
    let (la1, la2) = (p.lat.to_radians(), q.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (q.lon - p.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * 6_371_008.8 * h.sqrt().asin()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn log_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

/// The training objective recomputed from typed embeddings: per edge type,
/// the weighted mean positive loss plus the weighted mean negative loss.
pub fn reference_loss(graph: &Amhen, params: &ModelParams, pairs: &TrainingPairSets, loss: &str, margins: [f64; 2]) -> f64 {
    let emb: Vec<[Vec<f64>; 2]> = (0..graph.len())
        .map(|i| {
            let (p, d) = forward(graph, params, i);
            [p, d]
        })
        .collect();
    let mut total = 0.0;
    for t in 0..2 {
        for (positive, set, gamma) in [
            (true, &pairs.positives[t], pairs.gamma_pos[t]),
            (false, &pairs.negatives[t], pairs.gamma_neg[t]),
        ] {
            if set.is_empty() {
                continue;
            }
            let sum: f64 = set
                .iter()
                .map(|&(i, j)| {
                    let (a, b) = (&emb[i][t], &emb[j][t]);
                    match (loss, positive) {
                        ("margin", true) => 1.0 - cos(a, b),
                        ("margin", false) => (cos(a, b) - margins[t]).max(0.0),
                        (_, true) => -log_sigmoid(a.iter().zip(b).map(|(x, y)| x * y).sum()),
                        (_, false) => -log_sigmoid(-a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()),
                    }
                })
                .sum();
            total += gamma * sum / set.len() as f64;
        }
    }
    total
}

/// Five FUs, pickup edges 0-1-2-3 and delivery edges 0-2, 2-4, 4-1.
pub fn five_node_graph(seed: u64) -> Amhen {
    let mut r = rng(seed);
    let f = |i: u32| FuId(i);
    let seqs = vec![
        FuSequences {
            pickup: vec![f(0), f(1), f(2), f(3)],
            delivery: vec![f(0), f(2), f(4), f(1)],
        },
        FuSequences {
            pickup: vec![f(3), f(2)],
            delivery: vec![f(2), f(4)],
        },
    ];
    let attrs: BTreeMap<FuId, Vec<f64>> = (0..5)
        .map(|i| (f(i), (0..3).map(|_| r.random::<f64>() * 2.0 - 1.0).collect()))
        .collect();
    build_amhen(&seqs, &attrs).expect("consistent attributes")
}

#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    /// `|L_core - L_reference| / max(1, |L_reference|)`.
    pub loss_gap: f64,
    /// `||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||)`.
    pub rel_error: f64,
    /// Largest per-coordinate `|a - n| / max(|a|, |n|, 1e-3)`.
    pub worst_coordinate: f64,
    /// Closest any negative cosine comes to its hinge; finite differences
    /// are only meaningful when this exceeds the step.
    pub kink_distance: f64,
    pub parameters: usize,
}

/// Central differences of the reference loss against the analytic gradient.
/// `margins` only matter for the margin loss; margins below -1 keep every
/// hinge active.
pub fn gradient_check(loss: &str, margins: [f64; 2], seed: u64) -> GradientCheck {
    let g = five_node_graph(seed);
    let mut r = rng(seed ^ 0x9d);
    let dims = Dims {
        attr: g.attr_dim(),
        base: 5,
        edge: 3,
        attention: 3,
    };
    let mut params = ModelParams::init(dims, [0.9, 1.1], [0.6, 1.0], 2, &mut r);
    let mut pairs = TrainingPairSets {
        gamma_pos: [1.0, 0.8],
        gamma_neg: [1.2, 0.9],
        ..Default::default()
    };
    for t in 0..2 {
        for i in 0..5 {
            for j in i + 1..5 {
                if r.random_bool(0.5) {
                    pairs.positives[t].push((i, j));
                } else {
                    pairs.negatives[t].push((i, j));
                }
            }
        }
    }
    let core_loss = loss_registry().build(loss, &margins).expect("registered loss");
    let prop = Propagated::new(&g, 2);
    let mut analytic = params.zeros_like();
    let l_core = loss_and_grad(&params, &prop, &pairs, core_loss.as_ref(), Some(&mut analytic));
    let l_ref = reference_loss(&g, &params, &pairs, loss, margins);
    let h = 1e-5;
    let mut numeric = vec![0.0; params.len()];
    for k in 0..params.len() {
        let x = params.theta[k];
        params.theta[k] = x + h;
        let up = reference_loss(&g, &params, &pairs, loss, margins);
        params.theta[k] = x - h;
        let down = reference_loss(&g, &params, &pairs, loss, margins);
        params.theta[k] = x;
        numeric[k] = (up - down) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max);
    let kink_distance = if loss == "margin" {
        (0..2)
            .flat_map(|t| pairs.negatives[t].iter().map(move |&p| (t, p)))
            .map(|(t, (i, j))| {
                let (a, b) = (forward(&g, &params, i), forward(&g, &params, j));
                let (x, y) = if t == 0 { (a.0, b.0) } else { (a.1, b.1) };
                (cos(&x, &y) - margins[t]).abs()
            })
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    GradientCheck {
        kink_distance,
        loss_gap: (l_core - l_ref).abs() / l_ref.abs().max(1.0),
        rel_error: norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12),
        worst_coordinate: worst,
        parameters: params.len(),
    }
}

/// Group statistics `(size, volume, pair sum, pairs)` per label `1..=groups`.
fn groups_of(labels: &[usize], inst: &BpInstance) -> Vec<(usize, f64, f64, usize)> {
    let mut g = vec![(0, 0.0, 0.0, 0); inst.groups];
    for a in 0..labels.len() {
        if labels[a] == 0 {
            continue;
        }
        let s = &mut g[labels[a] - 1];
        s.0 += 1;
        s.1 += inst.volumes[a];
        for b in 0..a {
            if labels[b] == labels[a] {
                s.2 += inst.hpp[a][b];
                s.3 += 1;
            }
        }
    }
    g
}

/// Feasibility of a labeling (`0` = left out, allowed only when relaxed):
/// every used group has size within bounds, volume at the floor and mean
/// pairwise HPP at the floor. Without relaxation every group is used.
pub fn bp_feasible(labels: &[usize], inst: &BpInstance) -> bool {
    if !inst.relaxed && labels.contains(&0) {
        return false;
    }
    groups_of(labels, inst).iter().all(|&(size, vol, sum, pairs)| {
        if size == 0 && inst.relaxed {
            return true;
        }
        (inst.min_size..=inst.max_size).contains(&size)
            && vol >= inst.volume_floor
            && (pairs == 0 || sum / pairs as f64 >= inst.hpp_floor - 1e-12)
    })
}

/// Sum over groups of mean pairwise HPP (singletons contribute 0).
pub fn bp_objective(labels: &[usize], inst: &BpInstance) -> f64 {
    groups_of(labels, inst)
        .iter()
        .map(|&(_, _, sum, pairs)| if pairs == 0 { 0.0 } else { sum / pairs as f64 })
        .sum()
}

/// Best feasible labeling by full enumeration, or `None` when infeasible.
pub fn bp_brute_force(inst: &BpInstance) -> Option<(Vec<usize>, f64)> {
    let n = inst.fus.len();
    let lo = if inst.relaxed { 0 } else { 1 };
    let mut labels = vec![lo; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        if bp_feasible(&labels, inst) {
            let v = bp_objective(&labels, inst);
            if best.as_ref().is_none_or(|(_, b)| v > *b + 1e-12) {
                best = Some((labels.clone(), v));
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            labels[k] += 1;
            if labels[k] <= inst.groups {
                break;
            }
            labels[k] = lo;
        }
    }
}

/// Labels of a solver's partition, or an error when an FU is missing,
/// repeated or foreign, or there are too many groups.
pub fn partition_labels(p: &SehPartition, inst: &BpInstance) -> Result<Vec<usize>, String> {
    if p.groups.len() > inst.groups {
        return Err(format!("{} groups for {} slots", p.groups.len(), inst.groups));
    }
    let pos: HashMap<FuId, usize> = inst.fus.iter().enumerate().map(|(k, f)| (*f, k)).collect();
    let mut labels = vec![usize::MAX; inst.fus.len()];
    let listed = p
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, fus)| fus.iter().map(move |f| (f, g + 1)))
        .chain(p.unassigned.iter().map(|f| (f, 0)));
    for (f, l) in listed {
        let k = *pos.get(f).ok_or_else(|| format!("{f} not in instance"))?;
        if labels[k] != usize::MAX {
            return Err(format!("{f} listed twice"));
        }
        labels[k] = l;
    }
    if labels.contains(&usize::MAX) {
        return Err("FU missing from partition".into());
    }
    Ok(labels)
}

/// Optimal total MD by assigning order subsets courier by courier, couriers
/// taken in a shuffled order. Every order must be assigned; a courier takes
/// at most `bundle_cap`, its spare capacity and the per-cycle cap.
pub fn moa_brute_force(inst: &MoaInstance, bundle_cap: usize, shuffle_seed: u64) -> Option<f64> {
    let n = inst.orders.len();
    let mut order: Vec<usize> = (0..inst.couriers.len()).collect();
    order.shuffle(&mut rng(shuffle_seed));
    let mut memo: HashMap<(usize, u32), f64> = HashMap::new();
    let mut cost = |r: usize, mask: u32| -> f64 {
        *memo.entry((r, mask)).or_insert_with(|| {
            let mut os: Vec<&Order> = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| &inst.orders[k]).collect();
            os.sort_by_key(|o| o.id);
            md_score(&inst.couriers[r], &os, inst.now, &inst.ctx, &inst.config).total
        })
    };
    fn go(
        pos: usize,
        left: u32,
        order: &[usize],
        inst: &MoaInstance,
        cap: usize,
        cost: &mut dyn FnMut(usize, u32) -> f64,
    ) -> f64 {
        if left == 0 {
            return 0.0;
        }
        if pos == order.len() {
            return f64::INFINITY;
        }
        let r = order[pos];
        let c = &inst.couriers[r];
        let limit = c.spare().min(cap).min(inst.config.max_new_per_courier);
        let mut best = go(pos + 1, left, order, inst, cap, cost);
        // Every non-empty subset of the remaining orders.
        let mut sub = left;
        while sub > 0 {
            if (sub.count_ones() as usize) <= limit {
                let here = cost(r, sub);
                if here.is_finite() {
                    best = best.min(here + go(pos + 1, left & !sub, order, inst, cap, cost));
                }
            }
            sub = (sub - 1) & left;
        }
        best
    }
    let v = go(0, (1u32 << n) - 1, &order, inst, bundle_cap, &mut cost);
    v.is_finite().then_some(v)
}

/// Hotspot-mode cost from its definition: for each courier with new orders,
/// the weighted growth in distinct pickup AOIs still to visit and in
/// distinct delivery AOIs.
pub fn seh_cost(orders: &[Order], couriers: &[Courier], labels: &[Option<usize>], w: [f64; 2]) -> f64 {
    let mut total = 0.0;
    for (r, c) in couriers.iter().enumerate() {
        let new: Vec<&Order> = orders.iter().zip(labels).filter(|(_, l)| **l == Some(r)).map(|(o, _)| o).collect();
        if new.is_empty() {
            continue;
        }
        let p0: BTreeSet<AoiId> = c.on_hand.iter().filter(|h| !h.picked_up).map(|h| h.order.pickup_aoi).collect();
        let d0: BTreeSet<AoiId> = c.on_hand.iter().map(|h| h.order.delivery_aoi).collect();
        let mut p1 = p0.clone();
        let mut d1 = d0.clone();
        for o in &new {
            p1.insert(o.pickup_aoi);
            d1.insert(o.delivery_aoi);
        }
        total += w[0] * (p1.len() - p0.len()) as f64 + w[1] * (d1.len() - d0.len()) as f64;
    }
    total
}

/// Cheapest complete labeling within spare capacities.
pub fn seh_brute_force(orders: &[Order], couriers: &[Courier], w: [f64; 2]) -> Option<(Vec<Option<usize>>, f64)> {
    let (n, m) = (orders.len(), couriers.len());
    let mut best: Option<(Vec<Option<usize>>, f64)> = None;
    let mut labels = vec![0usize; n];
    loop {
        let fits = (0..m).all(|r| labels.iter().filter(|&&l| l == r).count() <= couriers[r].spare());
        if fits {
            let l: Vec<Option<usize>> = labels.iter().map(|&x| Some(x)).collect();
            let v = seh_cost(orders, couriers, &l, w);
            if best.as_ref().is_none_or(|(_, b)| v < *b - 1e-12) {
                best = Some((l, v));
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            labels[k] += 1;
            if labels[k] < m {
                break;
            }
            labels[k] = 0;
        }
    }
}

/// Order pairing from its definition: prune pairs below `p1`, then keep
/// taking the highest-HPP pair whose orders are both still single. Ties go
/// to the smallest `(id, id)`.
pub fn combine_reference(ids: &[u64], hpp: impl Fn(usize, usize) -> f64, p1: f64) -> (Vec<(usize, usize)>, Vec<usize>) {
    let n = ids.len();
    let mut pairs: Vec<(f64, u64, u64, usize, usize)> = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = hpp(a, b);
            if p >= p1 {
                let (x, y) = if ids[a] <= ids[b] { (a, b) } else { (b, a) };
                pairs.push((p, ids[x], ids[y], x, y));
            }
        }
    }
    let mut single = vec![true; n];
    let mut bundles = Vec::new();
    while let Some(best) = pairs
        .iter()
        .filter(|p| single[p.3] && single[p.4])
        .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)).then(y.2.cmp(&x.2)))
        .copied()
    {
        single[best.3] = false;
        single[best.4] = false;
        bundles.push((best.3, best.4));
    }
    (bundles, (0..n).filter(|&k| single[k]).collect())
}

/// Recall filter from its definition. A courier without on-hands passes;
/// otherwise, for each entity order, the mean HPP with the on-hands (a
/// picked-up on-hand stands for the FU from the courier's AOI to its
/// delivery AOI; unknown FUs and HPPs count 0) must reach `p2`.
pub fn recall_reference(entity: &[&Order], candidates: &[usize], couriers: &[Courier], ctx: &DispatchContext, p2: f64) -> Vec<usize> {
    let scenario = ctx.scenario;
    let lookup = |p: AoiId, d: AoiId| {
        ctx.catalog
            .iter()
            .find(|u| u.pickup_aoi == p && u.delivery_aoi == d && Some(u.scenario) == scenario)
            .map(|u| u.id)
    };
    let hpp = |a: FuId, b: Option<FuId>| match (&ctx.hpp, b) {
        (Some(h), Some(b)) => h.hpp(a, b).unwrap_or(0.0),
        _ => 0.0,
    };
    candidates
        .iter()
        .copied()
        .filter(|&r| {
            let c = &couriers[r];
            if c.on_hand.is_empty() {
                return true;
            }
            entity.iter().all(|o| {
                let f: f64 = c
                    .on_hand
                    .iter()
                    .map(|h| {
                        let other = if h.picked_up {
                            lookup(c.current_aoi, h.order.delivery_aoi)
                        } else {
                            Some(h.order.fu)
                        };
                        hpp(o.fu, other)
                    })
                    .sum::<f64>()
                    / c.on_hand.len() as f64;
                f >= p2
            })
        })
        .collect()
}

/// Every pickup precedes its delivery, and each order appears as exactly
/// one pickup (unless already picked up) and one delivery.
pub fn route_precedence(route: &Route, picked_up: &BTreeSet<u64>) -> Result<(), String> {
    let mut seen_pickup = BTreeSet::new();
    let mut delivered = BTreeSet::new();
    for t in &route.tasks {
        match t.kind {
            TaskKind::Pickup => {
                if !seen_pickup.insert(t.order.0) || picked_up.contains(&t.order.0) {
                    return Err(format!("extra pickup of {}", t.order));
                }
            }
            TaskKind::Delivery => {
                if !(seen_pickup.contains(&t.order.0) || picked_up.contains(&t.order.0)) {
                    return Err(format!("{} delivered before pickup", t.order));
                }
                if !delivered.insert(t.order.0) {
                    return Err(format!("{} delivered twice", t.order));
                }
            }
        }
    }
    if seen_pickup.iter().any(|o| !delivered.contains(o)) {
        return Err("picked-up order never delivered".into());
    }
    Ok(())
}

/// Adjacent-pair counts of the typed FU sequences of every session, with a
/// session ending at a gap above `gap_secs`. Consecutive repeats collapse
/// and self pairs are skipped; keys are `(min, max)`.
pub fn session_adjacency(events: &[TrajectoryEvent], gap_secs: i64) -> BTreeMap<(FuId, FuId), usize> {
    let mut by_courier: BTreeMap<CourierId, Vec<&TrajectoryEvent>> = BTreeMap::new();
    for e in events {
        by_courier.entry(e.courier_id).or_default().push(e);
    }
    let mut counts = BTreeMap::new();
    for evs in by_courier.values_mut() {
        evs.sort_by_key(|e| e.timestamp);
        let mut sessions: Vec<Vec<&TrajectoryEvent>> = Vec::new();
        for e in evs.iter() {
            match sessions.last_mut() {
                Some(s) if e.timestamp - s.last().unwrap().timestamp <= gap_secs => s.push(e),
                _ => sessions.push(vec![e]),
            }
        }
        for s in &sessions {
            for action in [Action::Pickup, Action::Delivery] {
                let mut seq: Vec<FuId> = s.iter().filter(|e| e.action == action).map(|e| e.fu).collect();
                seq.dedup();
                for w in seq.windows(2) {
                    if w[0] != w[1] {
                        *counts.entry((w[0].min(w[1]), w[0].max(w[1]))).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    counts
}
