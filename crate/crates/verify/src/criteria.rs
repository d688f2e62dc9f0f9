//! The acceptance criteria as runnable checks. Each returns a pass/fail
//! outcome with the measured numbers; none of them panics on failure.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;
use scdn_core::dispatch::{
    base_route, combine_orders, moa_registry, plan_route_insertion, recall_couriers, solve_moa_exact, solve_moa_iterative, BundlingMode,
    DispatchConfig, DispatchReport, ExactCaps, Order,
};
use scdn_core::eatne::{
    estimate_cold_start, link_prediction_eval, split_edges, train, train_with_validation, Ablation, EatneConfig, EmbeddingTable,
    Provenance,
};
use scdn_core::indices::{fei_table, neighborhoods, HppIndex};
use scdn_core::network::{build_extended_network, FlowUnit, FuId, NetworkConfig, OrderId};
use scdn_core::seh::{solve_exact, solve_ga, GaParams};
use scdn_core::simgen::{
    build_network, dispatch_context, evaluate_seh_mode, generate_city, generate_sc_trajectories, learn_embeddings, peak_instance, ScPolicy,
    ScenarioConfig, SehModeConfig,
};

use crate::instances::{random_bp, random_context, random_moa, rng, GRID};
use crate::oracles::{bp_brute_force, bp_feasible, gradient_check, moa_brute_force, partition_labels, recall_reference, route_precedence};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub criterion: u8,
    pub passed: bool,
    pub summary: String,
    pub secs: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {}: {} ({:.1}s) {}",
            self.criterion,
            if self.passed { "PASS" } else { "FAIL" },
            self.secs,
            self.summary
        )
    }
}

fn timed(criterion: u8, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (passed, summary) = f();
    Outcome {
        criterion,
        passed,
        summary,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Analytic gradients of the training loss against central differences
/// of an independently written loss on a five-node, two-type graph.
pub fn gradient_correctness() -> Outcome {
    timed(1, || {
        let mut worst: f64 = 0.0;
        let mut gap: f64 = 0.0;
        let mut params = 0;
        for seed in 0..3 {
            for (loss, m) in [("margin", [0.3, 0.3]), ("margin", [-1.5, -1.5]), ("logsigmoid", [0.0, 0.0])] {
                let g = gradient_check(loss, m, seed);
                worst = worst.max(g.rel_error);
                gap = gap.max(g.loss_gap);
                params = g.parameters;
            }
        }
        (
            worst <= 1e-4 && gap <= 1e-9,
            format!("max relative error {worst:.2e} over 9 checks of {params} parameters; loss agreement {gap:.1e}"),
        )
    })
}

/// Per-type held-out AUC of one trained model.
#[derive(Debug, Clone, Copy)]
pub struct TypedAuc {
    pub pickup: f64,
    pub delivery: f64,
}

impl TypedAuc {
    pub fn mean(&self) -> f64 {
        0.5 * (self.pickup + self.delivery)
    }
}

/// Full, no-attribute, no-pickup and no-delivery models of one seed.
pub fn ablation_run(seed: u64) -> [TypedAuc; 4] {
    let s = generate_city(&ScenarioConfig {
        rng_seed: seed,
        ..Default::default()
    })
    .expect("default city");
    let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
    let net = build_network(&s, &h, &NetworkConfig::default()).expect("network");
    let cfg = EatneConfig::default();
    let split = split_edges(&net.graph, 0.2, 0.05, cfg.hop_floor, seed);
    Ablation::ALL.map(|ab| {
        let g = ab.apply(&split.train, seed);
        let out = train_with_validation(&g, &cfg, Some(&split.validation), seed).expect("training");
        let r = link_prediction_eval(&out.table, &split.test);
        TypedAuc {
            pickup: r.pickup.auc,
            delivery: r.delivery.auc,
        }
    })
}

/// Held-out AUC over five seeded cities and the ablation ordering by
/// majority vote.
pub fn link_prediction() -> Outcome {
    timed(2, || {
        let t = Instant::now();
        let runs: Vec<[TypedAuc; 4]> = (0..5).map(ablation_run).collect();
        let secs = t.elapsed().as_secs_f64();
        let (p, d): (Vec<f64>, Vec<f64>) = runs.iter().map(|r| (r[0].pickup, r[0].delivery)).unzip();
        let (mp, md) = (mean(&p), mean(&d));
        let attrs = runs.iter().filter(|r| r[0].mean() > r[1].mean()).count();
        let edges = runs.iter().filter(|r| r[2].mean() <= r[3].mean()).count();
        let per_seed: Vec<String> = runs
            .iter()
            .map(|r| format!("[{:.3}/{:.3} {:.3} {:.3} {:.3}]", r[0].pickup, r[0].delivery, r[1].mean(), r[2].mean(), r[3].mean()))
            .collect();
        (
            mp >= 0.75 && md >= 0.75 && attrs >= 3 && edges >= 3 && secs < 900.0,
            format!(
                "mean AUC pickup {mp:.3} delivery {md:.3}; full > no-attributes on {attrs}/5, no-pickup <= no-delivery on {edges}/5; \
                 per seed [full p/d, no-attr, no-pickup, no-delivery] {}",
                per_seed.join(" ")
            ),
        )
    })
}

/// First epoch (1-based) whose validation AUC reaches `target`.
pub fn epochs_to_target(seed: u64, cfg: &EatneConfig, target: f64) -> Option<usize> {
    let s = generate_city(&ScenarioConfig {
        rng_seed: seed,
        ..Default::default()
    })
    .expect("default city");
    let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
    let net = build_network(&s, &h, &NetworkConfig::default()).expect("network");
    let split = split_edges(&net.graph, 0.0, 0.1, cfg.hop_floor, seed);
    let out = train_with_validation(&split.train, cfg, Some(&split.validation), seed).expect("training");
    out.curve
        .iter()
        .find(|e| e.validation_auc.is_some_and(|a| a >= target))
        .map(|e| e.epoch)
}

/// Epochs to a validation AUC of 0.75: regional negatives with the margin
/// loss against uniform negatives with cross-entropy.
pub fn convergence() -> Outcome {
    timed(3, || {
        let target = 0.75;
        let fixed = |c: EatneConfig| EatneConfig {
            patience: 0,
            max_epochs: 40,
            ..c
        };
        let (ours, base) = (fixed(EatneConfig::default()), fixed(EatneConfig::baseline()));
        let rows: Vec<(Option<usize>, Option<usize>)> = (0..5)
            .map(|seed| (epochs_to_target(seed, &ours, target), epochs_to_target(seed, &base, target)))
            .collect();
        let wins = rows
            .iter()
            .filter(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => a < b,
                (Some(_), None) => true,
                _ => false,
            })
            .count();
        let show = |x: &Option<usize>| x.map_or("never".to_string(), |e| e.to_string());
        let cells: Vec<String> = rows.iter().map(|(a, b)| format!("{}/{}", show(a), show(b))).collect();
        (
            wins >= 4,
            format!("fewer epochs on {wins}/5 seeds; epochs (regional margin / uniform cross-entropy) {}", cells.join(" ")),
        )
    })
}

/// Genetic solver against the enumerated optimum on 20 feasible random
/// instances of eight FUs.
pub fn partition_solver() -> Outcome {
    timed(4, || {
        let mut ratios = Vec::new();
        let mut infeasible = 0;
        let mut exact_mismatch = 0;
        let mut seed = 0;
        while ratios.len() < 20 {
            seed += 1;
            let inst = random_bp(seed, 8, false);
            let Some((_, best)) = bp_brute_force(&inst) else { continue };
            if best <= 0.0 {
                continue;
            }
            let exact = solve_exact(&inst).expect("eight FUs");
            if (exact.objective - best).abs() > 1e-9 {
                exact_mismatch += 1;
            }
            let ga = solve_ga(&inst, &GaParams { seed, ..Default::default() }).expect("ga");
            let ok = partition_labels(&ga, &inst).is_ok_and(|l| bp_feasible(&l, &inst));
            if !ok {
                infeasible += 1;
            }
            ratios.push(if ok { ga.objective / best } else { 0.0 });
        }
        let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        (
            worst >= 0.95 && infeasible == 0 && exact_mismatch == 0,
            format!(
                "20 instances: worst GA/optimum {worst:.4}, mean {:.4}; {infeasible} infeasible GA outputs; exact solver off the enumeration on {exact_mismatch}",
                mean(&ratios)
            ),
        )
    })
}

/// Iterative matching (ruled and HPP bundling) against the exact optimum on
/// 50 random instances of at most 6 orders and 5 couriers.
pub fn assignment_gap() -> Outcome {
    timed(5, || {
        let mut gaps: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut partial = 0;
        let mut oracle_mismatch = 0;
        for seed in 0..50 {
            let inst = random_moa(seed, 6, 5);
            let (exact, _) = solve_moa_exact(&inst, ExactCaps::default()).expect("within caps");
            let e = exact.total_md;
            if moa_brute_force(&inst, 3, seed).is_none_or(|b| (b - e).abs() > 1e-9 * (1.0 + e)) {
                oracle_mismatch += 1;
            }
            for (name, mode) in [("ruled", BundlingMode::Ruled), ("scdn", BundlingMode::Scdn)] {
                let (a, _) = solve_moa_iterative(&inst, mode).expect("solve");
                if a.partial {
                    partial += 1;
                }
                let gap = if e > 1e-9 { (a.total_md - e) / e } else { a.total_md - e };
                gaps.entry(name).or_default().push(gap);
            }
        }
        let (r, s) = (mean(&gaps["ruled"]), mean(&gaps["scdn"]));
        (
            r <= 0.05 && s <= 0.05 && partial == 0 && oracle_mismatch == 0,
            format!(
                "mean gap ruled {:.2}%, scdn {:.2}%; {partial} partial; exact solver off the enumeration on {oracle_mismatch}/50",
                100.0 * r,
                100.0 * s
            ),
        )
    })
}

/// Ruled and HPP-bundled reports on one 500-order / 2,500-courier peak
/// instance of a seeded city.
#[derive(Debug, Clone)]
pub struct PeakRun {
    pub seed: u64,
    pub ruled: DispatchReport,
    pub scdn: DispatchReport,
}

pub fn peak_run(seed: u64) -> PeakRun {
    let s = generate_city(&ScenarioConfig {
        rng_seed: seed,
        ..Default::default()
    })
    .expect("default city");
    let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
    let m = learn_embeddings(&s, &h, &NetworkConfig::default(), &EatneConfig::default(), seed).expect("embeddings");
    let ctx = Arc::new(dispatch_context(&s, Some(&m.table)));
    let inst = peak_instance(&s, ctx, DispatchConfig::default(), 500, 2500, seed);
    let run = |name: &str| moa_registry().build(name, &()).expect("registered").solve(&inst).expect("solve").1;
    PeakRun {
        seed,
        ruled: run("ruled"),
        scdn: run("scdn"),
    }
}

/// The three seeded peak instances shared by criteria 6 and 7.
pub fn peak_runs() -> &'static [PeakRun] {
    static RUNS: OnceLock<Vec<PeakRun>> = OnceLock::new();
    RUNS.get_or_init(|| (0..3).map(peak_run).collect())
}

/// HPP bundling against the ruled baseline on peak instances: total MD,
/// MD evaluations and wall time per cycle.
pub fn peak_dispatch() -> Outcome {
    timed(6, || {
        let runs = peak_runs();
        let gains: Vec<f64> = runs.iter().map(|r| 1.0 - r.scdn.total_md / r.ruled.total_md).collect();
        let evals: Vec<f64> = runs.iter().map(|r| r.scdn.evaluations as f64 / r.ruled.evaluations as f64).collect();
        let slowest = runs.iter().map(|r| r.scdn.wall_ms.max(r.ruled.wall_ms)).fold(0.0, f64::max);
        let cells: Vec<String> = runs
            .iter()
            .zip(&gains)
            .map(|(r, g)| format!("seed {}: MD {:.1} -> {:.1} ({:+.1}%), evals {} -> {}", r.seed, r.ruled.total_md, r.scdn.total_md, 100.0 * g, r.ruled.evaluations, r.scdn.evaluations))
            .collect();
        let gain = mean(&gains);
        let worst_evals = evals.iter().copied().fold(0.0, f64::max);
        (
            gain >= 0.02 && worst_evals <= 1.15 && slowest < 10_000.0,
            format!(
                "mean MD improvement {:.2}%, evaluation ratio at most {worst_evals:.3}, slowest cycle {slowest:.0} ms; {}",
                100.0 * gain,
                cells.join("; ")
            ),
        )
    })
}

/// Share of orders assigned alone, HPP bundling against ruled.
pub fn single_order_share() -> Outcome {
    timed(7, || {
        let runs = peak_runs();
        let lower = runs.iter().filter(|r| r.scdn.single_order_share < r.ruled.single_order_share).count();
        let cells: Vec<String> = runs
            .iter()
            .map(|r| format!("seed {}: {:.3} -> {:.3}", r.seed, r.ruled.single_order_share, r.scdn.single_order_share))
            .collect();
        (lower == runs.len(), format!("lower on {lower}/{} instances; {}", runs.len(), cells.join(", ")))
    })
}

/// Coverage restored by cold-start estimates after hiding 40% of the
/// trained FUs.
pub fn cold_start() -> Outcome {
    timed(8, || {
        let mut cells = Vec::new();
        let mut ok = true;
        for seed in 0..3u64 {
            let s = generate_city(&ScenarioConfig {
                rng_seed: seed,
                history_days: 3,
                ..Default::default()
            })
            .expect("city");
            let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
            let net = build_network(&s, &h, &NetworkConfig::default()).expect("network");
            let mut nodes = net.graph.nodes().to_vec();
            nodes.shuffle(&mut rng(seed));
            let removed: HashSet<FuId> = nodes[..nodes.len() * 2 / 5].iter().copied().collect();
            let cfg = EatneConfig {
                base_dim: 16,
                max_epochs: 3,
                ..Default::default()
            };
            let mut table = train(&net.graph.without_nodes(&removed), &cfg, seed).expect("training");
            table.attach_catalog(&s.catalog);
            let units: Vec<FlowUnit> = s.catalog.iter().copied().collect();
            let extended = build_extended_network(&units, &s.centroids, NetworkConfig::default().extended_threshold_m);
            let after = estimate_cold_start(&table, &extended);
            let learned: Vec<&FlowUnit> = units.iter().filter(|u| table.provenance(u.id) == Provenance::Learned).collect();
            let eligible: Vec<FuId> = removed
                .iter()
                .copied()
                .filter(|f| {
                    let u = s.catalog.get(*f).expect("catalog FU");
                    learned.iter().any(|l| l.id != u.id && l.pickup_aoi == u.pickup_aoi && l.scenario == u.scenario)
                })
                .collect();
            let restored = eligible.iter().filter(|f| after.provenance(**f) == Provenance::Estimated).count();
            let removed_covered = removed.iter().filter(|f| after.covered(**f).is_some()).count();
            let (b, a) = (table.coverage_ratio(), after.coverage_ratio());
            ok &= restored == eligible.len() && a > b;
            cells.push(format!(
                "seed {seed}: {restored}/{} eligible hidden FUs restored ({removed_covered}/{} hidden), coverage {:.1}% -> {:.1}%",
                eligible.len(),
                removed.len(),
                100.0 * b,
                100.0 * a
            ));
        }
        (ok, cells.join("; "))
    })
}

/// Hotspot mode against the city-average baseline on planted hotspots.
pub fn hotspot_mode() -> Outcome {
    timed(9, || {
        let mut wins = 0;
        let mut cells = Vec::new();
        for seed in 0..5u64 {
            let s = generate_city(&ScenarioConfig {
                rng_seed: seed,
                ..Default::default()
            })
            .expect("city");
            let parts: Vec<Vec<FuId>> = s.truth.sehs.iter().map(|h| h.fus.clone()).collect();
            let r = evaluate_seh_mode(&s, &parts, DispatchConfig::default(), &SehModeConfig::default()).expect("evaluation");
            let (b, m) = (&r.baseline, &r.seh_mode);
            if m.mean_incremental_pickup_secs < b.mean_incremental_pickup_secs && m.mean_orders_per_hour > b.mean_orders_per_hour {
                wins += 1;
            }
            cells.push(format!(
                "seed {seed}: pickup {:.0}s -> {:.0}s, orders/h {:.2} -> {:.2}",
                b.mean_incremental_pickup_secs, m.mean_incremental_pickup_secs, b.mean_orders_per_hour, m.mean_orders_per_hour
            ));
        }
        (wins >= 4, format!("better on both on {wins}/5 seeds; {}", cells.join("; ")))
    })
}

fn run_property<S: Strategy>(name: &str, cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<String, String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, test)
        .map(|_| format!("{name} ({cases})"))
        .map_err(|e| format!("{name}: {e}"))
}

fn hpp_symmetry_and_range(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let dim = r.random_range(1..8);
    let n = r.random_range(2..16u32);
    let mut t = EmbeddingTable::new(dim);
    for k in 0..n {
        match r.random_range(0..6) {
            0 => t.insert_absent(FuId(k)),
            1 => t.insert_learned(FuId(k), &vec![0.0; dim], &vec![0.0; dim]).unwrap(),
            _ => {
                let v: Vec<f64> = (0..dim).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
                let w: Vec<f64> = (0..dim).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
                t.insert_learned(FuId(k), &v, &w).unwrap();
            }
        }
    }
    let h = HppIndex::new(&t);
    for i in 0..n + 1 {
        for j in 0..n + 1 {
            let (a, b) = (h.hpp(FuId(i), FuId(j)), h.hpp(FuId(j), FuId(i)));
            prop_assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
            let covered = |k: u32| t.covered(FuId(k)).is_some();
            prop_assert_eq!(a.is_some(), covered(i) && covered(j));
            if let Some(p) = a {
                prop_assert!((-1.0..=1.0).contains(&p));
                if i == j {
                    prop_assert_eq!(p, 1.0);
                }
            }
        }
    }
    Ok(())
}

fn fei_normalization(seed: u64) -> Result<(), TestCaseError> {
    let mut r = rng(seed);
    let ctx = random_context(&mut r);
    let mut units: Vec<FlowUnit> = ctx.catalog.iter().copied().collect();
    units.shuffle(&mut r);
    units.truncate(r.random_range(2..40));
    let hpp = ctx.hpp.as_ref().unwrap();
    let volumes: std::collections::HashMap<FuId, f64> = units
        .iter()
        .map(|u| (u.id, if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..50.0) }))
        .collect();
    let hoods = neighborhoods(&units, &ctx.centroids, r.random_range(300.0..2500.0));
    let fei = fei_table(&hoods, hpp, &volumes).unwrap();
    let raws: Vec<f64> = fei.entries.values().map(|e| e.raw).collect();
    let (lo, hi) = raws.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    for (fu, e) in &fei.entries {
        prop_assert!((0.0..=1.0).contains(&e.normalized));
        if hi > lo {
            prop_assert!((e.normalized - (e.raw - lo) / (hi - lo)).abs() < 1e-12);
        }
        let known: Vec<FuId> = hoods[fu].iter().copied().filter(|j| hpp.hpp(*fu, *j).is_some()).collect();
        let total: f64 = known.iter().map(|j| volumes[j]).sum();
        let want: f64 = known
            .iter()
            .map(|j| hpp.hpp_or_zero(*fu, *j) * if total > 0.0 { volumes[j] / total } else { 1.0 / known.len() as f64 })
            .sum();
        prop_assert!((e.raw - want).abs() < 1e-9, "raw {} vs {}", e.raw, want);
    }
    if hi > lo {
        let norm: Vec<f64> = fei.entries.values().map(|e| e.normalized).collect();
        prop_assert!(norm.iter().any(|&x| x == 0.0) && norm.iter().any(|&x| (x - 1.0).abs() < 1e-12));
    }
    Ok(())
}

fn route_precedence_holds(seed: u64) -> Result<(), TestCaseError> {
    let inst = random_moa(seed, 8, 4);
    let mut r = rng(seed);
    for c in &inst.couriers {
        let mut os: Vec<&Order> = inst.orders.iter().collect();
        os.shuffle(&mut r);
        os.truncate(r.random_range(0..=c.spare()));
        let planned = plan_route_insertion(c, &os, inst.now, &inst.ctx.centroids, &inst.config).expect("within capacity");
        let picked: BTreeSet<u64> = c.on_hand.iter().filter(|h| h.picked_up).map(|h| h.order.id.0).collect();
        route_precedence(&planned.route, &picked).map_err(TestCaseError::fail)?;
        // Existing tasks keep their relative order.
        let base = base_route(c, &inst.ctx.centroids);
        let mut it = planned.route.tasks.iter();
        prop_assert!(base.iter().all(|t| it.any(|x| x == t)));
        let covered: BTreeSet<OrderId> = planned.route.tasks.iter().map(|t| t.order).collect();
        prop_assert!(os.iter().all(|o| covered.contains(&o.id)));
    }
    Ok(())
}

fn assignment_exactly_once(seed: u64) -> Result<(), TestCaseError> {
    let inst = random_moa(seed, 14, 6);
    for mode in [BundlingMode::Ruled, BundlingMode::Scdn, BundlingMode::None] {
        let (a, _) = solve_moa_iterative(&inst, mode).expect("solve");
        let mut seen: BTreeMap<OrderId, usize> = BTreeMap::new();
        for id in a.entities.iter().flat_map(|e| e.orders.iter()).chain(&a.unassigned) {
            *seen.entry(*id).or_default() += 1;
        }
        prop_assert_eq!(seen.len(), inst.orders.len());
        prop_assert!(seen.values().all(|&c| c == 1));
        prop_assert!(inst.orders.iter().all(|o| seen.contains_key(&o.id)));
        for (cid, orders) in a.by_courier() {
            let c = inst.couriers.iter().find(|c| c.id == cid).expect("known courier");
            prop_assert!(c.on_hand.len() + orders.len() <= c.capacity);
            prop_assert!(orders.len() <= inst.config.max_new_per_courier);
        }
    }
    Ok(())
}

fn combine_disjoint_above_threshold(seed: u64) -> Result<(), TestCaseError> {
    let mut inst = random_moa(seed, 6, 2);
    let mut r = rng(seed);
    for k in 0..r.random_range(0..12) {
        let mut o = inst.orders[k % inst.orders.len()].clone();
        o.id = OrderId(100 + k as u64);
        if r.random_bool(0.5) {
            let (p, d) = (o.pickup_aoi, scdn_core::geo::AoiId(r.random_range(0..GRID * GRID)));
            o.delivery_aoi = d;
            o.fu = crate::instances::fu_of(p, d);
        }
        inst.orders.push(o);
    }
    let p1 = r.random_range(0.0..1.0);
    let c = combine_orders(&inst.orders, &inst.ctx, p1);
    let hpp = |a: usize, b: usize| inst.ctx.hpp(Some(inst.orders[a].fu), Some(inst.orders[b].fu));
    let mut used = BTreeSet::new();
    for &(a, b) in &c.bundles {
        prop_assert!(a != b && used.insert(a) && used.insert(b), "orders reused");
        prop_assert!(hpp(a, b) >= p1);
    }
    for &s in &c.singles {
        prop_assert!(used.insert(s), "single also bundled");
    }
    prop_assert_eq!(used.len(), inst.orders.len());
    for (k, &a) in c.singles.iter().enumerate() {
        for &b in &c.singles[k + 1..] {
            prop_assert!(hpp(a, b) < p1, "two singles could still pair");
        }
    }
    Ok(())
}

fn recall_literal(seed: u64) -> Result<(), TestCaseError> {
    let mut inst = random_moa(seed, 6, 6);
    let mut r = rng(seed);
    // More on-hands, including two per courier.
    let extra: Vec<Order> = inst.orders.clone();
    for (k, c) in inst.couriers.iter_mut().enumerate() {
        if r.random_bool(0.5) {
            let mut o = extra[k % extra.len()].clone();
            o.id = OrderId(5000 + k as u64);
            c.on_hand.push(scdn_core::dispatch::OnHand {
                order: o,
                picked_up: r.random_bool(0.3),
            });
        }
    }
    let p2 = r.random_range(0.0..1.0);
    let candidates: Vec<usize> = (0..inst.couriers.len()).collect();
    let size = r.random_range(1..=2.min(inst.orders.len()));
    let entity: Vec<&Order> = inst.orders.iter().take(size).collect();
    let got = recall_couriers(&entity, &candidates, &inst.couriers, &inst.ctx, p2);
    let want = recall_reference(&entity, &candidates, &inst.couriers, &inst.ctx, p2);
    prop_assert_eq!(got, want);
    Ok(())
}

fn small_city(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        rng_seed: seed,
        history_days: 1,
        ..Default::default()
    }
}

/// City, history, embeddings and one dispatch cycle, twice from one seed.
fn end_to_end(seed: u64) -> (Vec<Order>, scdn_core::simgen::History, EmbeddingTable, scdn_core::dispatch::Assignment) {
    let s = generate_city(&small_city(seed)).expect("city");
    let h = generate_sc_trajectories(&s, &ScPolicy::default()).expect("trajectories");
    let cfg = EatneConfig {
        base_dim: 8,
        max_epochs: 2,
        walks_per_node: 4,
        ..Default::default()
    };
    let m = learn_embeddings(&s, &h, &NetworkConfig::default(), &cfg, seed).expect("embeddings");
    let ctx = Arc::new(dispatch_context(&s, Some(&m.table)));
    let inst = peak_instance(&s, ctx, DispatchConfig::default(), 60, 120, seed);
    let (a, _) = solve_moa_iterative(&inst, BundlingMode::Scdn).expect("solve");
    (s.orders, h, m.table, a)
}

fn seed_determinism(seed: u64) -> Result<(), TestCaseError> {
    let (o1, h1, t1, a1) = end_to_end(seed);
    let (o2, h2, t2, a2) = end_to_end(seed);
    prop_assert!(o1 == o2, "order streams differ");
    prop_assert!(h1 == h2, "histories differ");
    prop_assert!(t1 == t2, "embedding tables differ");
    prop_assert!(a1 == a2, "assignments differ");
    Ok(())
}

/// Property suite over the indices, routing, matching and pipeline.
pub fn invariants() -> Outcome {
    timed(10, || {
        let results = [
            run_property("hpp symmetry and range", 64, any::<u64>(), hpp_symmetry_and_range),
            run_property("fei normalization", 48, any::<u64>(), fei_normalization),
            run_property("route precedence", 48, any::<u64>(), route_precedence_holds),
            run_property("assignment exactly once", 48, any::<u64>(), assignment_exactly_once),
            run_property("combine disjoint and above threshold", 64, any::<u64>(), combine_disjoint_above_threshold),
            run_property("recall literal conditions", 64, any::<u64>(), recall_literal),
            run_property("seed determinism end to end", 3, 0u64..1000, seed_determinism),
        ];
        let failed: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
        let passed: Vec<&String> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        if failed.is_empty() {
            (
                true,
                format!(
                    "all properties hold: {}",
                    passed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                ),
            )
        } else {
            (false, failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "))
        }
    })
}
