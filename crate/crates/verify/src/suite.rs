//! Named oracle comparisons, runnable as one table.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use scdn_core::dispatch::{
    combine_orders, md_score, seh_assignment_cost, solve_moa_exact, solve_seh_hillclimb, Courier, DispatchConfig, DispatchContext,
    ExactCaps, HillClimbParams, MdWeights, Order,
};
use scdn_core::eatne::{roc_auc, EmbeddingTable};
use scdn_core::geo::AoiId;
use scdn_core::indices::HppIndex;
use scdn_core::network::{CourierId, EdgeType, FuId, NetworkConfig, OrderId};
use scdn_core::seh::solve_exact;
use scdn_core::simgen::{build_network, generate_city, generate_sc_trajectories, ScPolicy, ScenarioConfig};

use crate::instances::{grid, random_bp, random_moa, random_seh, rng};
use crate::oracles::{
    bp_brute_force, combine_reference, gradient_check, haversine_m, moa_brute_force, pair_count_auc, seh_brute_force, seh_cost,
    session_adjacency,
};

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub secs: f64,
}

type Check = fn(bool) -> (bool, String);

const CHECKS: [(&str, Check); 10] = [
    ("auc_pair_count", auc_pair_count),
    ("auc_random_scores", auc_random_scores),
    ("gradient_five_node", gradient_five_node),
    ("partition_exact_enumeration", partition_exact_enumeration),
    ("assignment_exact_enumeration", assignment_exact_enumeration),
    ("hotspot_hillclimb_enumeration", hotspot_hillclimb_enumeration),
    ("combine_hand_trace", combine_hand_trace),
    ("combine_reference_random", combine_reference_random),
    ("md_non_additivity", md_non_additivity),
    ("corridor_adjacency", corridor_adjacency),
];

/// Runs every oracle comparison; `quick` uses fewer random instances.
pub fn run_oracles(quick: bool) -> Vec<OracleOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| {
            let t = Instant::now();
            let (passed, detail) = check(quick);
            OracleOutcome {
                name,
                passed,
                detail,
                secs: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub fn format_table(rows: &[OracleOutcome]) -> String {
    let w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{:<w$}  {}  {:>7.2}s  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.secs, r.detail);
    }
    s
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn auc_pair_count(quick: bool) -> (bool, String) {
    let trials = if quick { 20 } else { 200 };
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let np = r.random_range(1..40);
        let nn = r.random_range(1..40);
        // Coarse scores force ties.
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (r.random::<f64>() * 8.0).floor()).collect() };
        let (p, n) = (draw(np), draw(nn));
        worst = worst.max((roc_auc(&p, &n) - pair_count_auc(&p, &n)).abs());
    }
    (worst <= 1e-12, format!("{trials} score sets with ties, max |diff| {worst:.1e}"))
}

fn auc_random_scores(_quick: bool) -> (bool, String) {
    let mut r = rng(2);
    let p: Vec<f64> = (0..2000).map(|_| r.random()).collect();
    let n: Vec<f64> = (0..2000).map(|_| r.random()).collect();
    let auc = roc_auc(&p, &n);
    ((auc - 0.5).abs() <= 0.05, format!("uniform scores, AUC {auc:.4}"))
}

fn gradient_five_node(quick: bool) -> (bool, String) {
    let seeds = if quick { 1 } else { 3 };
    let mut worst: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for seed in 0..seeds {
        for (loss, m) in [("margin", [0.3, 0.3]), ("margin", [-1.5, -1.5]), ("logsigmoid", [0.0, 0.0])] {
            let g = gradient_check(loss, m, seed);
            worst = worst.max(g.rel_error);
            gap = gap.max(g.loss_gap);
        }
    }
    (worst <= 1e-4 && gap <= 1e-9, format!("max rel. error {worst:.2e}, loss gap {gap:.1e}"))
}

fn partition_exact_enumeration(quick: bool) -> (bool, String) {
    let n_inst = if quick { 6 } else { 30 };
    let mut bad = 0;
    let mut feasible = 0;
    for seed in 0..n_inst {
        let inst = random_bp(seed, 6 + (seed % 3) as usize, seed % 2 == 0);
        let core = solve_exact(&inst).expect("within the exact solver's size");
        match bp_brute_force(&inst) {
            Some((_, v)) => {
                feasible += 1;
                if !core.feasible || !close(core.objective, v) {
                    bad += 1;
                }
            }
            None => {
                if core.feasible {
                    bad += 1;
                }
            }
        }
    }
    (bad == 0, format!("{n_inst} instances ({feasible} feasible), {bad} mismatches"))
}

fn assignment_exact_enumeration(quick: bool) -> (bool, String) {
    let n_inst = if quick { 5 } else { 25 };
    let mut bad = 0;
    for seed in 0..n_inst {
        let inst = random_moa(1000 + seed, 5, 4);
        let (a, _) = solve_moa_exact(&inst, ExactCaps::default()).expect("within caps");
        let want = moa_brute_force(&inst, 3, seed);
        if want.is_none_or(|w| !close(w, a.total_md)) || a.partial {
            bad += 1;
        }
    }
    (bad == 0, format!("{n_inst} instances of up to 5 orders x 4 couriers, {bad} mismatches"))
}

fn hotspot_hillclimb_enumeration(quick: bool) -> (bool, String) {
    let n_inst = if quick { 20 } else { 100 };
    let w = [0.5, 0.5];
    let (mut cost_bad, mut opt_miss) = (0, 0);
    for seed in 0..n_inst {
        let (orders, couriers) = random_seh(seed, 6, 3);
        let got = solve_seh_hillclimb(&orders, &couriers, w, HillClimbParams { seed, ..Default::default() });
        if !close(seh_assignment_cost(&orders, &couriers, &got.labels, w), seh_cost(&orders, &couriers, &got.labels, w))
            || !close(got.cost, seh_cost(&orders, &couriers, &got.labels, w))
        {
            cost_bad += 1;
        }
        let best = seh_brute_force(&orders, &couriers, w).expect("capacity covers the orders");
        if !got.overflow.is_empty() || !close(got.cost, best.1) {
            opt_miss += 1;
        }
    }
    (
        cost_bad == 0 && opt_miss == 0,
        format!("{n_inst} instances of up to 6 orders x 3 couriers, {cost_bad} cost mismatches, {opt_miss} non-optimal"),
    )
}

/// Context on a line of AOIs whose FUs `1..=vectors.len()` carry the
/// given embeddings.
fn context_with(vectors: &[Vec<f64>]) -> DispatchContext {
    let mut t = EmbeddingTable::new(vectors[0].len());
    for (k, v) in vectors.iter().enumerate() {
        t.insert_learned(FuId(k as u32 + 1), v, v).expect("finite");
    }
    DispatchContext {
        hpp: Some(HppIndex::new(&t)),
        ..DispatchContext::new(grid(4, 1, 1000.0))
    }
}

fn simple_order(id: u64, fu: u32, p: u32, d: u32) -> Order {
    Order {
        id: OrderId(id),
        fu: FuId(fu),
        pickup_aoi: AoiId(p),
        delivery_aoi: AoiId(d),
        placed_at: 0,
        deadline: 1_000_000,
    }
}

fn combine_hand_trace(_quick: bool) -> (bool, String) {
    // Literal trace: p(AB) = 0.9, p(AC) = 0.8, p(BC) = 0.3.
    let p = |a: usize, b: usize| match (a.min(b), a.max(b)) {
        (0, 1) => 0.9,
        (0, 2) => 0.8,
        _ => 0.3,
    };
    let (bundles, singles) = combine_reference(&[1, 2, 3], p, 0.6);
    let literal = bundles == vec![(0, 1)] && singles == vec![2];
    // Cosines of 0.9, 0.8, 0.3 cannot coexist; realize 0.9, 0.8, 0.5,
    // which prunes BC the same way.
    let y = (0.5 - 0.72) / 0.19f64.sqrt();
    let vectors = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.9, 0.19f64.sqrt(), 0.0],
        vec![0.8, y, (1.0 - 0.64 - y * y).sqrt()],
    ];
    let ctx = context_with(&vectors);
    let orders: Vec<Order> = (1..=3).map(|k| simple_order(k, k as u32, 0, 1)).collect();
    let hpps = [
        ctx.hpp(Some(FuId(1)), Some(FuId(2))),
        ctx.hpp(Some(FuId(1)), Some(FuId(3))),
        ctx.hpp(Some(FuId(2)), Some(FuId(3))),
    ];
    let c = combine_orders(&orders, &ctx, 0.6);
    let realized = c.bundles == vec![(0, 1)] && c.singles == vec![2];
    let exact_boundary = {
        let two = context_with(&[vec![1.0, 0.0], vec![0.6, 0.8]]);
        let o = [simple_order(1, 1, 0, 1), simple_order(2, 2, 0, 1)];
        let p = two.hpp(Some(FuId(1)), Some(FuId(2)));
        combine_orders(&o, &two, p).bundles.len() == 1
    };
    (
        literal && realized && exact_boundary,
        format!(
            "bundles {{AB}}, singles {{C}}; realized HPP ({:.3}, {:.3}, {:.3}); pair at exactly P1 kept: {exact_boundary}",
            hpps[0], hpps[1], hpps[2]
        ),
    )
}

fn combine_reference_random(quick: bool) -> (bool, String) {
    let n_inst = if quick { 20 } else { 200 };
    let mut bad = 0;
    for seed in 0..n_inst {
        let mut inst = random_moa(5000 + seed, 6, 2);
        let mut r = rng(seed);
        let extra = r.random_range(0..10);
        for k in 0..extra {
            let mut o = inst.orders[k % inst.orders.len()].clone();
            o.id = OrderId(100 + k as u64);
            inst.orders.push(o);
        }
        let p1 = r.random_range(0.2..0.9);
        let ctx = &inst.ctx;
        let ids: Vec<u64> = inst.orders.iter().map(|o| o.id.0).collect();
        let (bundles, singles) = combine_reference(&ids, |a, b| ctx.hpp(Some(inst.orders[a].fu), Some(inst.orders[b].fu)), p1);
        let got = combine_orders(&inst.orders, ctx, p1);
        if got.bundles != bundles || got.singles != singles {
            bad += 1;
        }
    }
    (bad == 0, format!("{n_inst} random order sets, {bad} mismatches"))
}

fn md_non_additivity(_quick: bool) -> (bool, String) {
    let ctx = Arc::new(DispatchContext::new(grid(4, 1, 1000.0)));
    let cfg = DispatchConfig {
        weights: MdWeights {
            efficiency: 1.0,
            overtime: 0.0,
            acceptance: 0.0,
        },
        ..Default::default()
    };
    let c = Courier::idle(CourierId(1), AoiId(0), 4);
    let (o1, o2) = (simple_order(1, 1, 1, 3), simple_order(2, 2, 1, 3));
    let one = md_score(&c, &[&o1], 0, &ctx, &cfg).total;
    let two = md_score(&c, &[&o2], 0, &ctx, &cfg).total;
    let both = md_score(&c, &[&o1, &o2], 0, &ctx, &cfg).total;
    let expect = (haversine_m(&ctx.centroids, AoiId(0), AoiId(1)) + haversine_m(&ctx.centroids, AoiId(1), AoiId(3))) / cfg.scale_m;
    let ok = (one - expect).abs() < 1e-6 && (both - expect).abs() < 1e-6 && (both - (one + two)).abs() > 1.0;
    (ok, format!("single {one:.4}, single {two:.4}, bundle {both:.4}, expected {expect:.4}"))
}

fn corridor_adjacency(quick: bool) -> (bool, String) {
    let cfg = ScenarioConfig {
        history_days: if quick { 1 } else { 3 },
        ..Default::default()
    };
    let s = generate_city(&cfg).expect("default city");
    let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
    let net = build_network(&s, &h, &NetworkConfig::default()).expect("network");
    let counts = session_adjacency(&h.events, NetworkConfig::default().session_gap_secs);
    let g = &net.graph;
    let mut from_graph = std::collections::BTreeMap::new();
    for t in EdgeType::ALL {
        for (i, j, c) in g.edges(t).iter() {
            let (a, b) = (g.node(i), g.node(j));
            *from_graph.entry((a.min(b), a.max(b))).or_insert(0usize) += c as usize;
        }
    }
    let same = from_graph == counts;
    let corridor = s.truth.corridor_of();
    let (mut cor, mut other) = ((0usize, 0usize), (0usize, 0usize));
    let fus: Vec<FuId> = s.catalog.iter().map(|u| u.id).collect();
    for (k, &a) in fus.iter().enumerate() {
        for &b in &fus[k + 1..] {
            if s.zone_of_fu(a) != s.zone_of_fu(b) {
                continue;
            }
            let c = counts.get(&(a.min(b), a.max(b))).copied().unwrap_or(0);
            let slot = if corridor.get(&a).is_some() && corridor.get(&a) == corridor.get(&b) { &mut cor } else { &mut other };
            slot.0 += c;
            slot.1 += 1;
        }
    }
    let (mc, mo) = (cor.0 as f64 / cor.1.max(1) as f64, other.0 as f64 / other.1.max(1) as f64);
    (
        same && mc >= 2.0 * mo,
        format!("edge counts match sessions: {same}; mean adjacency per corridor pair {mc:.2} vs other same-zone pair {mo:.3}"),
    )
}
