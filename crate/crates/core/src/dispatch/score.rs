use serde::{Deserialize, Serialize};

use super::route::{plan_from_base, TaskKind};
use super::{Courier, DispatchConfig, DispatchContext, OnHand, Order};
use crate::network::FuId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdBreakdown {
    /// Weighted score; `+inf` when the courier cannot take the orders.
    pub total: f64,
    pub incremental_m: f64,
    /// Share of the route's orders predicted to miss their deadline.
    pub overtime_fraction: f64,
    /// Mean HPP between the new orders and the courier's on-hands (1 without on-hands).
    pub willingness: f64,
}

impl MdBreakdown {
    pub fn infeasible() -> Self {
        MdBreakdown {
            total: f64::INFINITY,
            incremental_m: f64::INFINITY,
            overtime_fraction: 1.0,
            willingness: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.total.is_finite()
    }
}

/// FU representing an on-hand order for HPP purposes: its own FU before
/// pickup, afterwards the FU from the courier's current AOI to its
/// delivery AOI (which may not exist).
pub fn on_hand_fu(courier: &Courier, h: &OnHand, ctx: &DispatchContext) -> Option<FuId> {
    if h.picked_up {
        ctx.fu_for(courier.current_aoi, h.order.delivery_aoi)
    } else {
        Some(h.order.fu)
    }
}

/// Mean HPP of one order with the courier's on-hands; `None` without on-hands.
pub(crate) fn on_hand_affinity(courier: &Courier, order: &Order, ctx: &DispatchContext) -> Option<f64> {
    if courier.on_hand.is_empty() {
        return None;
    }
    let sum: f64 = courier
        .on_hand
        .iter()
        .map(|h| ctx.hpp(Some(order.fu), on_hand_fu(courier, h, ctx)))
        .sum();
    Some(sum / courier.on_hand.len() as f64)
}

pub(crate) fn willingness(courier: &Courier, orders: &[&Order], ctx: &DispatchContext) -> f64 {
    if courier.on_hand.is_empty() || orders.is_empty() || ctx.hpp.is_none() {
        return 1.0;
    }
    orders
        .iter()
        .map(|o| on_hand_affinity(courier, o, ctx).unwrap_or(1.0))
        .sum::<f64>()
        / orders.len() as f64
}

/// Matching-degree cost of giving `orders` to `courier`. Lower is better.
pub fn md_score(courier: &Courier, orders: &[&Order], now: i64, ctx: &DispatchContext, cfg: &DispatchConfig) -> MdBreakdown {
    let base = super::route::base_route(courier, &ctx.centroids);
    md_with_base(courier, &base, orders, now, ctx, cfg)
}

pub(crate) fn md_with_base(
    courier: &Courier,
    base: &[super::Task],
    orders: &[&Order],
    now: i64,
    ctx: &DispatchContext,
    cfg: &DispatchConfig,
) -> MdBreakdown {
    let planned = match plan_from_base(courier, base, orders, now, &ctx.centroids, cfg) {
        Ok(p) => p,
        Err(_) => return MdBreakdown::infeasible(),
    };
    let route = &planned.route;
    let mut total = 0usize;
    let mut late = 0usize;
    for (task, &t) in route.tasks.iter().zip(&route.times) {
        if task.kind != TaskKind::Delivery {
            continue;
        }
        total += 1;
        let deadline = orders
            .iter()
            .map(|o| (o.id, o.deadline))
            .chain(courier.on_hand.iter().map(|h| (h.order.id, h.order.deadline)))
            .find(|(id, _)| *id == task.order)
            .map(|(_, d)| d);
        if deadline.is_some_and(|d| t > d as f64) {
            late += 1;
        }
    }
    let overtime_fraction = if total == 0 { 0.0 } else { late as f64 / total as f64 };
    let w = willingness(courier, orders, ctx);
    let total = cfg.weights.efficiency * planned.incremental_m / cfg.scale_m
        + cfg.weights.overtime * overtime_fraction
        + cfg.weights.acceptance * (1.0 - w);
    MdBreakdown {
        total,
        incremental_m: planned.incremental_m,
        overtime_fraction,
        willingness: w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::route::tests::{line, order};
    use crate::dispatch::MdWeights;
    use crate::geo::AoiId;
    use crate::network::CourierId;

    fn ctx() -> DispatchContext {
        DispatchContext::new(line(6))
    }

    #[test]
    fn all_terms_vanish() {
        let c = Courier::idle(CourierId(0), AoiId(2), 3);
        let o = order(1, 2, 2);
        let s = md_score(&c, &[&o], 0, &ctx(), &DispatchConfig::default());
        assert_eq!(s.total, 0.0);
    }

    #[test]
    fn efficiency_only_unit_cost() {
        let cfg = DispatchConfig {
            weights: MdWeights {
                efficiency: 1.0,
                overtime: 0.0,
                acceptance: 0.0,
            },
            ..Default::default()
        };
        let ctx = ctx();
        let c = Courier::idle(CourierId(0), AoiId(1), 3);
        let o = order(1, 1, 2);
        let s = md_score(&c, &[&o], 0, &ctx, &cfg);
        let want = ctx.centroids.dist(AoiId(1), AoiId(2)) / 1000.0;
        assert!((s.total - want).abs() < 1e-9);
        assert!((s.total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn bundles_are_not_additive() {
        let ctx = ctx();
        let cfg = DispatchConfig::default();
        let c = Courier::idle(CourierId(0), AoiId(0), 3);
        let (a, b) = (order(1, 1, 3), order(2, 1, 3));
        let sa = md_score(&c, &[&a], 0, &ctx, &cfg).total;
        let sb = md_score(&c, &[&b], 0, &ctx, &cfg).total;
        let sab = md_score(&c, &[&a, &b], 0, &ctx, &cfg).total;
        assert!((sab - (sa + sb)).abs() > 0.1, "{sab} vs {sa} + {sb}");
    }

    #[test]
    fn overtime_counts_late_orders() {
        let ctx = ctx();
        let cfg = DispatchConfig::default();
        let c = Courier::idle(CourierId(0), AoiId(0), 3);
        let mut o = order(1, 0, 5);
        o.deadline = 100;
        let s = md_score(&c, &[&o], 0, &ctx, &cfg);
        assert_eq!(s.overtime_fraction, 1.0);
    }

    #[test]
    fn capacity_gives_infinity() {
        let c = Courier::idle(CourierId(0), AoiId(0), 0);
        let s = md_score(&c, &[&order(1, 0, 1)], 0, &ctx(), &DispatchConfig::default());
        assert!(!s.is_feasible());
    }
}
