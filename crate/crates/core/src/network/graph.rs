use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Action, FuId, Session};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Pickup,
    Delivery,
}

impl EdgeType {
    pub const ALL: [EdgeType; 2] = [EdgeType::Pickup, EdgeType::Delivery];

    pub fn index(self) -> usize {
        match self {
            EdgeType::Pickup => 0,
            EdgeType::Delivery => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub u32);

/// Pickup-ordered and delivery-ordered FU sequences of one session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuSequences {
    pub pickup: Vec<FuId>,
    pub delivery: Vec<FuId>,
}

/// Extracts the typed FU sequences of a session; consecutive repeats of
/// the same FU collapse to one occurrence.
pub fn build_fu_sequences(session: &Session) -> FuSequences {
    let mut seqs = FuSequences::default();
    for e in &session.events {
        let seq = match e.action {
            Action::Pickup => &mut seqs.pickup,
            Action::Delivery => &mut seqs.delivery,
        };
        if seq.last() != Some(&e.fu) {
            seq.push(e.fu);
        }
    }
    seqs
}

/// Undirected co-occurrence counts over node indices, stored as `(i, j)`
/// with `i < j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeSet {
    counts: BTreeMap<(usize, usize), u32>,
    adjacency: Vec<Vec<(usize, u32)>>,
}

impl EdgeSet {
    fn from_counts(n: usize, counts: BTreeMap<(usize, usize), u32>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &c) in &counts {
            adjacency[i].push((j, c));
            adjacency[j].push((i, c));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        EdgeSet { counts, adjacency }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.count(i, j) > 0
    }

    /// `(i, j, count)` triples in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.counts.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, u32)] {
        &self.adjacency[i]
    }

    /// Nodes within `max_hops` of `start` (including `start`).
    pub fn within_hops(&self, start: usize, max_hops: usize) -> HashSet<usize> {
        let mut seen = HashSet::from([start]);
        let mut frontier = vec![start];
        for _ in 0..max_hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &(v, _) in &self.adjacency[u] {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        seen
    }
}

/// Attributed multiplex heterogeneous network over flow units.
///
/// Nodes are kept sorted by `FuId`; attribute vectors, region labels and
/// adjacency lists are indexed by node position. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Amhen {
    nodes: Vec<FuId>,
    index: HashMap<FuId, usize>,
    attrs: Vec<Vec<f64>>,
    attr_dim: usize,
    regions: Vec<RegionId>,
    edges: [EdgeSet; 2],
}

impl Amhen {
    fn from_parts(
        nodes: Vec<FuId>,
        attrs: Vec<Vec<f64>>,
        regions: Option<Vec<RegionId>>,
        pickup: BTreeMap<(usize, usize), u32>,
        delivery: BTreeMap<(usize, usize), u32>,
    ) -> Result<Self> {
        let n = nodes.len();
        let attr_dim = attrs.first().map_or(0, Vec::len);
        for a in &attrs {
            if a.len() != attr_dim {
                return Err(Error::DimensionMismatch {
                    expected: attr_dim,
                    found: a.len(),
                });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation("non-finite attribute value"));
            }
        }
        for &(i, j) in pickup.keys().chain(delivery.keys()) {
            if i >= n || j >= n || i >= j {
                return Err(Error::validation(format!("edge ({i}, {j}) references unknown node")));
            }
        }
        let index = nodes.iter().enumerate().map(|(i, &f)| (f, i)).collect();
        let mut g = Amhen {
            nodes,
            index,
            attrs,
            attr_dim,
            regions: Vec::new(),
            edges: [EdgeSet::from_counts(n, pickup), EdgeSet::from_counts(n, delivery)],
        };
        g.regions = match regions {
            Some(r) => r,
            None => connected_components(&g),
        };
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[FuId] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> FuId {
        self.nodes[i]
    }

    pub fn index_of(&self, fu: FuId) -> Option<usize> {
        self.index.get(&fu).copied()
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    pub fn attrs(&self, i: usize) -> &[f64] {
        &self.attrs[i]
    }

    pub fn region(&self, i: usize) -> RegionId {
        self.regions[i]
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn edges(&self, t: EdgeType) -> &EdgeSet {
        &self.edges[t.index()]
    }

    pub fn neighbors(&self, t: EdgeType, i: usize) -> &[(usize, u32)] {
        self.edges[t.index()].neighbors(i)
    }

    /// Replaces attribute vectors, keeping topology and regions.
    pub fn with_attributes(&self, attrs: &BTreeMap<FuId, Vec<f64>>) -> Result<Amhen> {
        let vectors = self
            .nodes
            .iter()
            .map(|f| {
                attrs
                    .get(f)
                    .cloned()
                    .ok_or_else(|| Error::validation(format!("no attributes for {f}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Amhen::from_parts(
            self.nodes.clone(),
            vectors,
            Some(self.regions.clone()),
            self.edges[0].counts.clone(),
            self.edges[1].counts.clone(),
        )
    }

    /// Same graph with every edge of type `t` removed. Regions are kept.
    pub fn without_edge_type(&self, t: EdgeType) -> Amhen {
        let mut counts = [self.edges[0].counts.clone(), self.edges[1].counts.clone()];
        counts[t.index()].clear();
        let [p, d] = counts;
        Amhen::from_parts(self.nodes.clone(), self.attrs.clone(), Some(self.regions.clone()), p, d)
            .expect("subgraph of a valid graph is valid")
    }

    /// Same graph minus the listed `(i, j)` edges per type. Regions are kept.
    pub fn without_edges(&self, removed: &[(EdgeType, usize, usize)]) -> Amhen {
        let mut counts = [self.edges[0].counts.clone(), self.edges[1].counts.clone()];
        for &(t, i, j) in removed {
            let key = if i < j { (i, j) } else { (j, i) };
            counts[t.index()].remove(&key);
        }
        let [p, d] = counts;
        Amhen::from_parts(self.nodes.clone(), self.attrs.clone(), Some(self.regions.clone()), p, d)
            .expect("subgraph of a valid graph is valid")
    }

    /// Induced subgraph on all nodes except `excluded`; region labels of the
    /// surviving nodes are kept.
    pub fn without_nodes(&self, excluded: &HashSet<FuId>) -> Amhen {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !excluded.contains(&self.nodes[i]))
            .collect();
        let remap: HashMap<usize, usize> = keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let sub = |t: usize| {
            self.edges[t]
                .counts
                .iter()
                .filter_map(|(&(i, j), &c)| Some(((*remap.get(&i)?, *remap.get(&j)?), c)))
                .collect::<BTreeMap<_, _>>()
        };
        Amhen::from_parts(
            keep.iter().map(|&i| self.nodes[i]).collect(),
            keep.iter().map(|&i| self.attrs[i].clone()).collect(),
            Some(keep.iter().map(|&i| self.regions[i]).collect()),
            sub(0),
            sub(1),
        )
        .expect("subgraph of a valid graph is valid")
    }

    /// Node indices grouped by region.
    pub fn region_members(&self) -> BTreeMap<RegionId, Vec<usize>> {
        let mut out: BTreeMap<RegionId, Vec<usize>> = BTreeMap::new();
        for (i, &r) in self.regions.iter().enumerate() {
            out.entry(r).or_default().push(i);
        }
        out
    }

    pub fn to_document(&self) -> GraphDocument {
        let edges = |t: EdgeType| {
            self.edges(t)
                .iter()
                .map(|(i, j, c)| [self.nodes[i].0, self.nodes[j].0, c])
                .collect()
        };
        GraphDocument {
            version: GraphDocument::VERSION,
            nodes: (0..self.len())
                .map(|i| GraphNode {
                    fu: self.nodes[i],
                    attrs: self.attrs[i].clone(),
                    region: self.regions[i],
                })
                .collect(),
            edges_pickup: edges(EdgeType::Pickup),
            edges_delivery: edges(EdgeType::Delivery),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Amhen> {
        if doc.version != GraphDocument::VERSION {
            return Err(Error::format(
                "graph document",
                format!("unsupported version {}", doc.version),
            ));
        }
        let mut nodes: Vec<&GraphNode> = doc.nodes.iter().collect();
        nodes.sort_by_key(|n| n.fu);
        let ids: Vec<FuId> = nodes.iter().map(|n| n.fu).collect();
        let index: HashMap<FuId, usize> = ids.iter().enumerate().map(|(i, &f)| (f, i)).collect();
        if index.len() != ids.len() {
            return Err(Error::format("graph document", "duplicate node"));
        }
        let edges = |list: &[[u32; 3]]| -> Result<BTreeMap<(usize, usize), u32>> {
            let mut out = BTreeMap::new();
            for &[a, b, c] in list {
                let (Some(&i), Some(&j)) = (index.get(&FuId(a)), index.get(&FuId(b))) else {
                    return Err(Error::format("graph document", "edge endpoint not in node set"));
                };
                if c == 0 || i == j {
                    return Err(Error::format("graph document", "invalid edge"));
                }
                out.insert((i.min(j), i.max(j)), c);
            }
            Ok(out)
        };
        Amhen::from_parts(
            ids,
            nodes.iter().map(|n| n.attrs.clone()).collect(),
            Some(nodes.iter().map(|n| n.region).collect()),
            edges(&doc.edges_pickup)?,
            edges(&doc.edges_delivery)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub fu: FuId,
    pub attrs: Vec<f64>,
    pub region: RegionId,
}

/// Versioned JSON form of an [`Amhen`]; edges are `[fu_i, fu_j, count]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    pub nodes: Vec<GraphNode>,
    pub edges_pickup: Vec<[u32; 3]>,
    pub edges_delivery: Vec<[u32; 3]>,
}

impl GraphDocument {
    pub const VERSION: u32 = 1;
}

/// Merges typed FU sequences into an AMHEN. Every adjacent pair in a pickup
/// (delivery) sequence adds one to the pickup (delivery) edge count; self
/// pairs are skipped. All nodes must have attribute vectors of one dimension.
pub fn build_amhen(
    sequences: &[FuSequences],
    attributes: &BTreeMap<FuId, Vec<f64>>,
) -> Result<Amhen> {
    let node_set: BTreeSet<FuId> = sequences
        .iter()
        .flat_map(|s| s.pickup.iter().chain(s.delivery.iter()).copied())
        .collect();
    let nodes: Vec<FuId> = node_set.into_iter().collect();
    let index: HashMap<FuId, usize> = nodes.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut attrs = Vec::with_capacity(nodes.len());
    let mut dim = None;
    for f in &nodes {
        let a = attributes
            .get(f)
            .ok_or_else(|| Error::validation(format!("no attribute vector for {f}")))?;
        match dim {
            None => dim = Some(a.len()),
            Some(d) if d != a.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.len(),
                })
            }
            _ => {}
        }
        attrs.push(a.clone());
    }
    let mut counts = [BTreeMap::new(), BTreeMap::new()];
    for s in sequences {
        for (t, seq) in [(0, &s.pickup), (1, &s.delivery)] {
            for w in seq.windows(2) {
                let (i, j) = (index[&w[0]], index[&w[1]]);
                if i != j {
                    *counts[t].entry((i.min(j), i.max(j))).or_insert(0u32) += 1;
                }
            }
        }
    }
    let [p, d] = counts;
    Amhen::from_parts(nodes, attrs, None, p, d)
}

fn connected_components(g: &Amhen) -> Vec<RegionId> {
    let n = g.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for t in EdgeType::ALL {
        for (i, j, _) in g.edges(t).iter() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                // Root at the smaller index so the root is the smallest FuId.
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            RegionId(g.nodes[root].0)
        })
        .collect()
}

/// Connected components over the union of both edge types, labeled by the
/// smallest FU id they contain.
pub fn partition_regions(amhen: &Amhen) -> BTreeMap<FuId, RegionId> {
    connected_components(amhen)
        .into_iter()
        .enumerate()
        .map(|(i, r)| (amhen.node(i), r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{CourierId, OrderId, TrajectoryEvent};

    pub(crate) fn seq(p: &[u32], d: &[u32]) -> FuSequences {
        FuSequences {
            pickup: p.iter().map(|&x| FuId(x)).collect(),
            delivery: d.iter().map(|&x| FuId(x)).collect(),
        }
    }

    fn attrs_for(ids: &[u32], dim: usize) -> BTreeMap<FuId, Vec<f64>> {
        ids.iter().map(|&i| (FuId(i), vec![i as f64; dim])).collect()
    }

    // FU labels for the two-session construction example.
    const DE: u32 = 1;
    const FB: u32 = 2;
    const FC: u32 = 3;

    fn event(order: u64, fu: u32, action: Action, t: i64) -> TrajectoryEvent {
        TrajectoryEvent {
            courier_id: CourierId(1),
            order_id: OrderId(order),
            fu: FuId(fu),
            action,
            timestamp: t,
        }
    }

    fn session_a() -> Session {
        // Picks DE, FC, FB then delivers DE, FB, FC.
        Session {
            courier_id: CourierId(1),
            events: vec![
                event(1, DE, Action::Pickup, 0),
                event(3, FC, Action::Pickup, 60),
                event(2, FB, Action::Pickup, 120),
                event(1, DE, Action::Delivery, 600),
                event(2, FB, Action::Delivery, 700),
                event(3, FC, Action::Delivery, 800),
            ],
        }
    }

    #[test]
    fn session_a_sequences() {
        let s = build_fu_sequences(&session_a());
        assert_eq!(s, seq(&[DE, FC, FB], &[DE, FB, FC]));
    }

    #[test]
    fn single_order_session() {
        let s = Session {
            courier_id: CourierId(1),
            events: vec![event(1, 7, Action::Pickup, 0), event(1, 7, Action::Delivery, 10)],
        };
        assert_eq!(build_fu_sequences(&s), seq(&[7], &[7]));
    }

    #[test]
    fn consecutive_duplicates_collapse() {
        let s = Session {
            courier_id: CourierId(1),
            events: vec![event(1, 7, Action::Pickup, 0), event(2, 7, Action::Pickup, 10)],
        };
        assert_eq!(build_fu_sequences(&s).pickup, vec![FuId(7)]);
    }

    #[test]
    fn session_a_edges() {
        let seqs = vec![build_fu_sequences(&session_a())];
        let g = build_amhen(&seqs, &attrs_for(&[DE, FB, FC], 2)).unwrap();
        let ix = |f| g.index_of(FuId(f)).unwrap();
        let p = g.edges(EdgeType::Pickup);
        let d = g.edges(EdgeType::Delivery);
        assert_eq!(p.len(), 2);
        assert!(p.contains(ix(DE), ix(FC)) && p.contains(ix(FC), ix(FB)));
        assert_eq!(d.len(), 2);
        assert!(d.contains(ix(DE), ix(FB)) && d.contains(ix(FB), ix(FC)));
    }

    #[test]
    fn repeated_pairs_accumulate() {
        let seqs = vec![seq(&[1, 2], &[]), seq(&[2, 1], &[]), seq(&[1, 2, 1], &[])];
        let g = build_amhen(&seqs, &attrs_for(&[1, 2], 1)).unwrap();
        // 1-2 appears once, once, twice.
        assert_eq!(g.edges(EdgeType::Pickup).count(0, 1), 4);
        let seqs = vec![seq(&[1, 2], &[]); 3];
        let g = build_amhen(&seqs, &attrs_for(&[1, 2], 1)).unwrap();
        assert_eq!(g.edges(EdgeType::Pickup).count(0, 1), 3);
    }

    #[test]
    fn empty_input_gives_empty_graph() {
        let g = build_amhen(&[], &BTreeMap::new()).unwrap();
        assert!(g.is_empty());
        assert!(partition_regions(&g).is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut attrs = attrs_for(&[1, 2], 2);
        attrs.insert(FuId(2), vec![0.0; 3]);
        let err = build_amhen(&[seq(&[1, 2], &[])], &attrs).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(build_amhen(&[seq(&[1, 9], &[])], &attrs).is_err());
    }

    #[test]
    fn regions_are_components_labeled_by_smallest_id() {
        let seqs = vec![seq(&[5, 6, 7], &[]), seq(&[], &[1, 3]), seq(&[3, 2], &[]), seq(&[9], &[])];
        let g = build_amhen(&seqs, &attrs_for(&[1, 2, 3, 5, 6, 7, 9], 1)).unwrap();
        let r = partition_regions(&g);
        assert_eq!(r[&FuId(2)], RegionId(1));
        assert_eq!(r[&FuId(3)], RegionId(1));
        assert_eq!(r[&FuId(7)], RegionId(5));
        assert_eq!(r[&FuId(9)], RegionId(9));
        let distinct: BTreeSet<_> = r.values().collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn fully_connected_graph_is_one_region() {
        let g = build_amhen(&[seq(&[1, 2, 3, 1], &[2, 4])], &attrs_for(&[1, 2, 3, 4], 1)).unwrap();
        let r = partition_regions(&g);
        assert!(r.values().all(|&x| x == RegionId(1)));
    }

    #[test]
    fn document_round_trip_and_determinism() {
        let seqs = vec![build_fu_sequences(&session_a()), seq(&[4, 1], &[4, 2])];
        let attrs = attrs_for(&[1, 2, 3, 4], 3);
        let g1 = build_amhen(&seqs, &attrs).unwrap();
        let g2 = build_amhen(&seqs, &attrs).unwrap();
        let j1 = serde_json::to_string(&g1.to_document()).unwrap();
        assert_eq!(j1, serde_json::to_string(&g2.to_document()).unwrap());
        let back = Amhen::from_document(&serde_json::from_str(&j1).unwrap()).unwrap();
        assert_eq!(back, g1);
    }

    #[test]
    fn within_hops_on_path() {
        let g = build_amhen(&[seq(&[1, 2, 3, 4], &[])], &attrs_for(&[1, 2, 3, 4], 1)).unwrap();
        let h = g.edges(EdgeType::Pickup).within_hops(0, 2);
        assert_eq!(h, HashSet::from([0, 1, 2]));
    }
}
