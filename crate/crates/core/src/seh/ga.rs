use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, fitness, BpInstance, SehPartition};
use crate::error::Result;

const DISSOLVE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability; `None` means `1 / |F|`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
    pub tournament: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 100,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 2,
            tournament: 2,
            seed: 0,
        }
    }
}

#[derive(Clone)]
struct Individual {
    genes: Vec<usize>,
    fit: f64,
    feasible: bool,
}

impl Individual {
    fn new(genes: Vec<usize>, inst: &BpInstance) -> Self {
        let (fit, feasible) = fitness(&genes, inst);
        Individual { genes, fit, feasible }
    }
}

/// Genetic search over per-FU group labels with penalized fitness.
/// Returns the best feasible labeling seen in any generation, or the best
/// penalized one (flagged infeasible) if none was feasible.
pub fn solve_ga(inst: &BpInstance, p: &GaParams) -> Result<SehPartition> {
    inst.validate()?;
    let n = inst.len();
    let lo = inst.min_label();
    let hi = inst.groups;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    if n == 0 {
        let mut out = SehPartition::from_labels(&[], inst, "ga");
        out.seed = Some(p.seed);
        return Ok(out);
    }
    let mutation = p.mutation_rate.unwrap_or(1.0 / n as f64);
    let pop_size = p.population.max(2);
    // With the unassigned label available, genes are drawn assigned only at
    // the density that filling every group to its mean size would need.
    let density = if inst.relaxed {
        (inst.groups as f64 * (inst.min_size + inst.max_size) as f64 / 2.0 / n as f64).min(1.0)
    } else {
        1.0
    };
    let draw = |rng: &mut ChaCha8Rng| {
        if density < 1.0 && rng.random::<f64>() >= density {
            0
        } else {
            rng.random_range(lo.max(1)..=hi)
        }
    };
    let mut pop: Vec<Individual> = (0..pop_size)
        .map(|_| Individual::new((0..n).map(|_| draw(&mut rng)).collect(), inst))
        .collect();
    if inst.relaxed {
        pop[0] = Individual::new(greedy_labels(inst), inst);
    }
    let better = |a: &Individual, b: &Individual| a.fit > b.fit;
    let mut best_feasible: Option<Individual> = None;
    let mut best_any = pop[0].clone();
    let mut trace = Vec::with_capacity(p.generations);
    for _ in 0..p.generations {
        pop.sort_by(|a, b| b.fit.total_cmp(&a.fit));
        for ind in &pop {
            if ind.feasible && best_feasible.as_ref().is_none_or(|b| better(ind, b)) {
                best_feasible = Some(ind.clone());
            }
        }
        if better(&pop[0], &best_any) {
            best_any = pop[0].clone();
        }
        trace.push(pop[0].fit);
        let mut next: Vec<Individual> = pop.iter().take(p.elitism.min(pop_size)).cloned().collect();
        let pick = |rng: &mut ChaCha8Rng| -> usize {
            let mut w = rng.random_range(0..pop_size);
            for _ in 1..p.tournament.max(1) {
                let c = rng.random_range(0..pop_size);
                // Population is sorted, so a lower index is fitter.
                w = w.min(c);
            }
            w
        };
        while next.len() < pop_size {
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let (mut c1, mut c2) = (pop[a].genes.clone(), pop[b].genes.clone());
            if n > 1 && rng.random::<f64>() < p.crossover_rate {
                let cut = rng.random_range(1..n);
                c1[cut..].copy_from_slice(&pop[b].genes[cut..]);
                c2[cut..].copy_from_slice(&pop[a].genes[cut..]);
            }
            for c in [&mut c1, &mut c2] {
                for g in c.iter_mut() {
                    if rng.random::<f64>() < mutation {
                        *g = draw(&mut rng);
                    }
                }
                // Relaxed mode may leave groups empty; dissolving a whole
                // violating group is the move single-gene mutation almost
                // never makes.
                if inst.relaxed && rng.random::<f64>() < DISSOLVE_RATE {
                    let bad: Vec<usize> = check_labels(c, inst).violations.iter().filter_map(|v| v.group).collect();
                    if let Some(&k) = bad.choose(&mut rng) {
                        c.iter_mut().filter(|g| **g == k).for_each(|g| *g = 0);
                    }
                }
            }
            next.push(Individual::new(c1, inst));
            if next.len() < pop_size {
                next.push(Individual::new(c2, inst));
            }
        }
        pop = next;
    }
    for ind in &pop {
        if ind.feasible && best_feasible.as_ref().is_none_or(|b| better(ind, b)) {
            best_feasible = Some(ind.clone());
        }
    }
    let chosen = best_feasible.unwrap_or(best_any);
    let mut out = SehPartition::from_labels(&chosen.genes, inst, "ga");
    out.seed = Some(p.seed);
    out.trace = trace;
    Ok(out)
}

/// Builds groups one at a time from the highest-volume free FU, adding the
/// highest-volume free FU that keeps the group's mean HPP at the floor
/// until volume and size bounds are met. Seeds that cannot reach them stay
/// unassigned.
fn greedy_labels(inst: &BpInstance) -> Vec<usize> {
    let n = inst.len();
    let mut labels = vec![0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| inst.volumes[b].total_cmp(&inst.volumes[a]).then(a.cmp(&b)));
    let mut tried = vec![false; n];
    let mut k = 1;
    for &seed in &order {
        if k > inst.groups {
            break;
        }
        if labels[seed] != 0 || tried[seed] {
            continue;
        }
        tried[seed] = true;
        let mut members = vec![seed];
        let (mut volume, mut pair_sum) = (inst.volumes[seed], 0.0);
        while members.len() < inst.max_size && (volume < inst.volume_floor || members.len() < inst.min_size) {
            let pairs = (members.len() * (members.len() + 1) / 2) as f64;
            let next = order
                .iter()
                .copied()
                .filter(|&a| labels[a] == 0 && !members.contains(&a))
                .map(|a| (a, pair_sum + members.iter().map(|&m| inst.hpp[a][m]).sum::<f64>()))
                .find(|&(_, sum)| sum >= inst.hpp_floor * pairs);
            let Some((a, sum)) = next else { break };
            members.push(a);
            volume += inst.volumes[a];
            pair_sum = sum;
        }
        if volume >= inst.volume_floor && members.len() >= inst.min_size {
            for &m in &members {
                labels[m] = k;
            }
            k += 1;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FuId;
    use crate::seh::{check_feasibility, solve_exact};

    fn clusters() -> BpInstance {
        let n = 8;
        let mut m = vec![vec![0.05; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a == b || (a < 4) == (b < 4) {
                    m[a][b] = 0.85;
                }
            }
        }
        BpInstance::new((0..n as u32).map(FuId).collect(), m, vec![15.0; n], 2, (2, 6), 50.0, 0.5, false).unwrap()
    }

    #[test]
    fn recovers_obvious_clusters() {
        let inst = clusters();
        let ga = solve_ga(&inst, &GaParams { generations: 200, ..Default::default() }).unwrap();
        let ex = solve_exact(&inst).unwrap();
        assert!(ga.feasible);
        assert!((ga.objective - ex.objective).abs() < 1e-9);
        assert!(check_feasibility(&ga, &inst).feasible);
    }

    #[test]
    fn seed_determinism() {
        let inst = clusters();
        let p = GaParams { generations: 50, seed: 9, ..Default::default() };
        assert_eq!(solve_ga(&inst, &p).unwrap(), solve_ga(&inst, &p).unwrap());
    }

    #[test]
    fn never_exceeds_exact() {
        let inst = clusters();
        let ex = solve_exact(&inst).unwrap();
        for seed in 0..3 {
            let ga = solve_ga(&inst, &GaParams { generations: 30, seed, ..Default::default() }).unwrap();
            if ga.feasible {
                assert!(ga.objective <= ex.objective + 1e-9);
            }
        }
    }
}
