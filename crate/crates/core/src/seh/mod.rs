//! Scale-effect hotspot identification: partition high-FEI flow units into
//! groups maximizing the sum of within-group mean HPP, subject to size,
//! volume and similarity floors.

mod exact;
mod ga;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::{FeiTable, HppIndex};
use crate::network::FuId;
use crate::registry::Registry;

pub use exact::{solve_exact, EXACT_MAX_FUS};
pub use ga::{solve_ga, GaParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpInstance {
    pub fus: Vec<FuId>,
    /// Symmetric HPP matrix aligned with `fus`; unknown pairs hold 0.
    pub hpp: Vec<Vec<f64>>,
    pub volumes: Vec<f64>,
    pub groups: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Minimum total order volume per group.
    pub volume_floor: f64,
    /// Minimum mean pairwise HPP per group.
    pub hpp_floor: f64,
    /// Allow FUs to stay unassigned (label 0).
    #[serde(default)]
    pub relaxed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    /// Number of groups; `None` means `ceil(total volume / (2 * volume_floor))`.
    pub groups: Option<usize>,
    pub min_size: usize,
    pub max_size: usize,
    pub volume_floor: f64,
    pub hpp_floor: f64,
    /// Candidate FUs need a normalized FEI above this.
    pub fei_threshold: f64,
    pub relaxed: bool,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            groups: None,
            min_size: 2,
            max_size: 12,
            volume_floor: 50.0,
            hpp_floor: 0.5,
            fei_threshold: 0.6,
            relaxed: false,
        }
    }
}

impl BpInstance {
    pub fn new(
        fus: Vec<FuId>,
        hpp: Vec<Vec<f64>>,
        volumes: Vec<f64>,
        groups: usize,
        (min_size, max_size): (usize, usize),
        volume_floor: f64,
        hpp_floor: f64,
        relaxed: bool,
    ) -> Result<Self> {
        let inst = BpInstance {
            fus,
            hpp,
            volumes,
            groups,
            min_size,
            max_size,
            volume_floor,
            hpp_floor,
            relaxed,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builds the instance over FUs whose FEI exceeds the threshold.
    pub fn from_indices(fei: &FeiTable, hpp: &HppIndex, volumes: &HashMap<FuId, f64>, cfg: &InstanceConfig) -> Result<Self> {
        let fus = fei.above(cfg.fei_threshold);
        let n = fus.len();
        let mut m = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                m[a][b] = if a == b { 1.0 } else { hpp.hpp_or_zero(fus[a], fus[b]) };
            }
        }
        let vols: Vec<f64> = fus.iter().map(|f| volumes.get(f).copied().unwrap_or(0.0)).collect();
        let groups = cfg
            .groups
            .unwrap_or_else(|| default_group_count(vols.iter().sum(), cfg.volume_floor))
            .max(1);
        BpInstance::new(
            fus,
            m,
            vols,
            groups,
            (cfg.min_size, cfg.max_size),
            cfg.volume_floor,
            cfg.hpp_floor,
            cfg.relaxed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.fus.len();
        if self.hpp.len() != n || self.hpp.iter().any(|r| r.len() != n) || self.volumes.len() != n {
            return Err(Error::validation("instance matrix and volume sizes must match the FU list"));
        }
        for a in 0..n {
            for b in 0..n {
                if self.hpp[a][b] != self.hpp[b][a] || !self.hpp[a][b].is_finite() {
                    return Err(Error::validation(format!("hpp matrix not symmetric and finite at ({a}, {b})")));
                }
            }
        }
        if self.volumes.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::validation("volumes must be non-negative"));
        }
        if self.min_size > self.max_size {
            return Err(Error::validation("min_size exceeds max_size"));
        }
        if self.groups == 0 {
            return Err(Error::validation("need at least one group"));
        }
        if HashSet::<&FuId>::from_iter(&self.fus).len() != n {
            return Err(Error::validation("duplicate FU in instance"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.fus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fus.is_empty()
    }

    /// Smallest label a gene may take.
    pub(crate) fn min_label(&self) -> usize {
        if self.relaxed {
            0
        } else {
            1
        }
    }

    /// Scale of the objective (one unit of mean HPP per group).
    pub(crate) fn objective_scale(&self) -> f64 {
        self.groups as f64
    }
}

pub fn default_group_count(total_volume: f64, volume_floor: f64) -> usize {
    if volume_floor <= 0.0 {
        return 1;
    }
    ((total_volume / (2.0 * volume_floor)).ceil() as usize).max(1)
}

/// Per-group mean of pairwise HPP, summed over groups. Labels are
/// `0` (unassigned) or `1..=groups`.
pub fn objective_of_labels(labels: &[usize], inst: &BpInstance) -> f64 {
    let stats = group_stats(labels, inst);
    stats.iter().map(|g| g.mean_hpp()).sum()
}

#[derive(Debug, Clone, Default)]
pub(crate) struct GroupStats {
    pub size: usize,
    pub volume: f64,
    pub pair_sum: f64,
    pub pairs: usize,
}

impl GroupStats {
    pub fn mean_hpp(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.pair_sum / self.pairs as f64
        }
    }
}

pub(crate) fn group_stats(labels: &[usize], inst: &BpInstance) -> Vec<GroupStats> {
    let mut g = vec![GroupStats::default(); inst.groups];
    for (a, &la) in labels.iter().enumerate() {
        if la == 0 {
            continue;
        }
        let s = &mut g[la - 1];
        s.size += 1;
        s.volume += inst.volumes[a];
        for b in a + 1..labels.len() {
            if labels[b] == la {
                s.pair_sum += inst.hpp[a][b];
                s.pairs += 1;
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Each FU in exactly one group.
    Assignment,
    Size,
    Volume,
    Similarity,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Assignment => "assignment",
            Constraint::Size => "size",
            Constraint::Volume => "volume",
            Constraint::Similarity => "similarity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: Constraint,
    /// Group label (1-based) the violation belongs to, if any.
    pub group: Option<usize>,
    pub detail: String,
    /// Normalized violation amount used by penalized solvers.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn violates(&self, c: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }
}

/// Constraint check of a labeling. Empty groups are exempt in relaxed mode.
pub(crate) fn check_labels(labels: &[usize], inst: &BpInstance) -> FeasibilityReport {
    let mut v = Vec::new();
    if !inst.relaxed {
        let un = labels.iter().filter(|&&l| l == 0).count();
        if un > 0 {
            v.push(ConstraintViolation {
                constraint: Constraint::Assignment,
                group: None,
                detail: format!("{un} FUs unassigned"),
                amount: un as f64,
            });
        }
    }
    for (k, g) in group_stats(labels, inst).iter().enumerate() {
        let label = k + 1;
        if g.size == 0 && inst.relaxed {
            continue;
        }
        if g.size < inst.min_size || g.size > inst.max_size {
            let dev = if g.size < inst.min_size { inst.min_size - g.size } else { g.size - inst.max_size };
            v.push(ConstraintViolation {
                constraint: Constraint::Size,
                group: Some(label),
                detail: format!("size {} outside [{}, {}]", g.size, inst.min_size, inst.max_size),
                amount: dev as f64,
            });
        }
        if g.volume < inst.volume_floor {
            v.push(ConstraintViolation {
                constraint: Constraint::Volume,
                group: Some(label),
                detail: format!("volume {} below {}", g.volume, inst.volume_floor),
                amount: (inst.volume_floor - g.volume) / inst.volume_floor.max(1.0),
            });
        }
        if g.pairs > 0 && g.pair_sum - inst.hpp_floor * (g.pairs as f64) < -1e-12 {
            v.push(ConstraintViolation {
                constraint: Constraint::Similarity,
                group: Some(label),
                detail: format!("mean hpp {:.4} below {}", g.mean_hpp(), inst.hpp_floor),
                amount: inst.hpp_floor - g.mean_hpp(),
            });
        }
    }
    FeasibilityReport {
        feasible: v.is_empty(),
        violations: v,
    }
}

/// Penalized fitness: objective minus 10x the objective scale per unit of
/// violation (each violated clause counts at least one unit).
pub(crate) fn fitness(labels: &[usize], inst: &BpInstance) -> (f64, bool) {
    let report = check_labels(labels, inst);
    let penalty: f64 = report.violations.iter().map(|v| 1.0 + v.amount).sum();
    (
        objective_of_labels(labels, inst) - 10.0 * inst.objective_scale() * penalty,
        report.feasible,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SehPartition {
    /// Group `k` holds the FUs labeled `k + 1`.
    pub groups: Vec<Vec<FuId>>,
    pub unassigned: Vec<FuId>,
    pub objective: f64,
    pub feasible: bool,
    pub report: FeasibilityReport,
    pub solver: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Best penalized fitness per generation (heuristic solvers).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl SehPartition {
    pub(crate) fn from_labels(labels: &[usize], inst: &BpInstance, solver: &str) -> Self {
        let mut groups = vec![Vec::new(); inst.groups];
        let mut unassigned = Vec::new();
        for (a, &l) in labels.iter().enumerate() {
            if l == 0 {
                unassigned.push(inst.fus[a]);
            } else {
                groups[l - 1].push(inst.fus[a]);
            }
        }
        let report = check_labels(labels, inst);
        SehPartition {
            groups,
            unassigned,
            objective: objective_of_labels(labels, inst),
            feasible: report.feasible,
            report,
            solver: solver.to_string(),
            seed: None,
            trace: Vec::new(),
        }
    }

    /// Non-empty groups.
    pub fn hotspots(&self) -> impl Iterator<Item = &Vec<FuId>> {
        self.groups.iter().filter(|g| !g.is_empty())
    }

    /// Group label per FU (`0` unassigned).
    pub fn labels(&self, inst: &BpInstance) -> Vec<usize> {
        let pos: HashMap<FuId, usize> = inst.fus.iter().enumerate().map(|(k, f)| (*f, k)).collect();
        let mut labels = vec![0; inst.len()];
        for (k, g) in self.groups.iter().enumerate() {
            for f in g {
                if let Some(&p) = pos.get(f) {
                    labels[p] = k + 1;
                }
            }
        }
        labels
    }
}

/// Sum over groups of the mean pairwise HPP.
pub fn objective(partition: &SehPartition, inst: &BpInstance) -> f64 {
    objective_of_labels(&partition.labels(inst), inst)
}

/// Checks the partition against every constraint, including that no FU is
/// listed twice or outside the instance.
pub fn check_feasibility(partition: &SehPartition, inst: &BpInstance) -> FeasibilityReport {
    let known: HashSet<FuId> = inst.fus.iter().copied().collect();
    let mut seen = HashMap::<FuId, usize>::new();
    for f in partition.groups.iter().flatten().chain(&partition.unassigned) {
        *seen.entry(*f).or_default() += 1;
    }
    let mut extra = Vec::new();
    for (f, &c) in &seen {
        if c > 1 {
            extra.push(format!("{f} listed {c} times"));
        }
        if !known.contains(f) {
            extra.push(format!("{f} not in instance"));
        }
    }
    for f in &inst.fus {
        if !seen.contains_key(f) {
            extra.push(format!("{f} missing"));
        }
    }
    if partition.groups.len() > inst.groups {
        extra.push(format!("{} groups exceed {}", partition.groups.len(), inst.groups));
    }
    let mut report = check_labels(&partition.labels(inst), inst);
    extra.sort();
    for detail in extra {
        report.violations.insert(
            0,
            ConstraintViolation {
                constraint: Constraint::Assignment,
                group: None,
                detail,
                amount: 1.0,
            },
        );
    }
    report.feasible = report.violations.is_empty();
    report
}

pub trait SehSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, inst: &BpInstance) -> Result<SehPartition>;
}

struct GaSolver(GaParams);

impl SehSolver for GaSolver {
    fn name(&self) -> &'static str {
        "ga"
    }

    fn solve(&self, inst: &BpInstance) -> Result<SehPartition> {
        solve_ga(inst, &self.0)
    }
}

struct ExactSolver;

impl SehSolver for ExactSolver {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn solve(&self, inst: &BpInstance) -> Result<SehPartition> {
        solve_exact(inst)
    }
}

pub fn solver_registry() -> Registry<dyn SehSolver, GaParams> {
    let mut r: Registry<dyn SehSolver, GaParams> = Registry::new("hotspot solver");
    r.register("ga", |p: &GaParams| Box::new(GaSolver(p.clone())));
    r.register("exact", |_: &GaParams| Box::new(ExactSolver));
    r
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn instance(hpp: &[&[f64]], volumes: &[f64], groups: usize, relaxed: bool) -> BpInstance {
        let n = volumes.len();
        let mut m = vec![vec![1.0; n]; n];
        let mut k = 0;
        for a in 0..n {
            for b in a + 1..n {
                m[a][b] = hpp[k][0];
                m[b][a] = hpp[k][0];
                k += 1;
            }
        }
        BpInstance::new((0..n as u32).map(FuId).collect(), m, volumes.to_vec(), groups, (1, n), 10.0, 0.5, relaxed)
            .unwrap()
    }

    #[test]
    fn single_pair_objective() {
        let inst = instance(&[&[0.65]], &[10.0, 10.0], 1, false);
        assert!((objective_of_labels(&[1, 1], &inst) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn sum_of_group_means_and_singletons() {
        // Pairs: 01 02 03 12 13 23
        let inst = instance(&[&[0.6], &[0.0], &[0.0], &[0.0], &[0.0], &[0.8]], &[10.0; 4], 3, true);
        assert!((objective_of_labels(&[1, 1, 2, 2], &inst) - 1.4).abs() < 1e-12);
        assert_eq!(objective_of_labels(&[1, 2, 0, 0], &inst), 0.0);
    }

    #[test]
    fn objective_invariant_under_relabeling() {
        let inst = instance(&[&[0.6], &[0.1], &[0.2], &[0.3], &[0.4], &[0.8]], &[10.0; 4], 2, false);
        assert_eq!(objective_of_labels(&[1, 1, 2, 2], &inst), objective_of_labels(&[2, 2, 1, 1], &inst));
    }

    #[test]
    fn feasibility_clauses() {
        let mut inst = instance(&[&[0.55]], &[20.0, 20.0], 1, false);
        inst.volume_floor = 50.0;
        let r = check_labels(&[1, 1], &inst);
        assert!(r.violates(Constraint::Volume));
        assert!(!r.violates(Constraint::Similarity));
        let mut p = SehPartition::from_labels(&[1, 1], &inst, "test");
        p.groups[0].push(FuId(0));
        assert!(check_feasibility(&p, &inst).violates(Constraint::Assignment));
        assert!(check_labels(&[0, 1], &inst).violates(Constraint::Assignment));
    }

    #[test]
    fn default_group_count_rounds_up() {
        assert_eq!(default_group_count(210.0, 50.0), 3);
        assert_eq!(default_group_count(0.0, 50.0), 1);
    }

    #[test]
    fn registry_lists_solvers() {
        assert_eq!(solver_registry().names(), vec!["exact", "ga"]);
    }

    #[test]
    fn json_round_trip() {
        let inst = instance(&[&[0.7]], &[30.0, 30.0], 1, false);
        let s = serde_json::to_string(&inst).unwrap();
        assert_eq!(serde_json::from_str::<BpInstance>(&s).unwrap(), inst);
        let p = SehPartition::from_labels(&[1, 1], &inst, "exact");
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<SehPartition>(&s).unwrap(), p);
    }
}
