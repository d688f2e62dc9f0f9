//! Model parameters, forward pass and hand-derived backward pass.
//!
//! For node `i` and edge type `t`:
//!
//! ```text
//! u_t      = G_t z_{i,t} + c_t                  (z = K-level mean of neighbor attributes)
//! a_t      = softmax_k( w_t . tanh(W_t u_k) )   over k in {pickup, delivery}
//! v_{i,t}  = H x_i + b + alpha_t M_t^T (sum_k a_t[k] u_k) + beta_t D_t x_i
//! ```
//!
//! Mean aggregation commutes with the affine edge map (mean weights sum to
//! one), so the K aggregation levels are applied once to the attributes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::linalg::{axpy, dot, matvec_acc, matvec_t_acc, outer_acc};
use crate::network::{Amhen, EdgeType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub attr: usize,
    pub base: usize,
    pub edge: usize,
    pub attention: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    base_w: Block,
    base_b: Block,
    edge_w: [Block; 2],
    edge_b: [Block; 2],
    att_w: [Block; 2],
    att_v: [Block; 2],
    proj: [Block; 2],
    attr_proj: [Block; 2],
    total: usize,
}

impl Layout {
    fn new(d: Dims) -> Self {
        let mut offset = 0;
        let mut block = |rows, cols| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let base_w = block(d.base, d.attr);
        let base_b = block(d.base, 1);
        let edge_w = [block(d.edge, d.attr), block(d.edge, d.attr)];
        let edge_b = [block(d.edge, 1), block(d.edge, 1)];
        let att_w = [block(d.attention, d.edge), block(d.attention, d.edge)];
        let att_v = [block(d.attention, 1), block(d.attention, 1)];
        let proj = [block(d.edge, d.base), block(d.edge, d.base)];
        let attr_proj = [block(d.base, d.attr), block(d.base, d.attr)];
        Layout {
            base_w,
            base_b,
            edge_w,
            edge_b,
            att_w,
            att_v,
            proj,
            attr_proj,
            total: offset,
        }
    }
}

/// All trainable weights in one flat vector, plus the fixed mixing scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    layout: Layout,
    pub theta: Vec<f64>,
    /// Edge-embedding importance per type (pickup, delivery).
    pub alpha: [f64; 2],
    /// Attribute-term importance per type.
    pub beta: [f64; 2],
    pub aggregation_levels: usize,
}

impl ModelParams {
    pub fn init(dims: Dims, alpha: [f64; 2], beta: [f64; 2], levels: usize, rng: &mut ChaCha8Rng) -> Self {
        let layout = Layout::new(dims);
        let mut theta = vec![0.0; layout.total];
        let mut fill = |b: Block, fan_in: usize, rng: &mut ChaCha8Rng| {
            let normal = Normal::new(0.0, (1.0 / fan_in.max(1) as f64).sqrt()).unwrap();
            for x in &mut theta[b.range()] {
                *x = normal.sample(rng);
            }
        };
        fill(layout.base_w, dims.attr, rng);
        for t in 0..2 {
            fill(layout.edge_w[t], dims.attr, rng);
            fill(layout.att_w[t], dims.edge, rng);
            fill(layout.att_v[t], dims.attention, rng);
            fill(layout.proj[t], dims.edge, rng);
            fill(layout.attr_proj[t], dims.attr, rng);
        }
        // Small random biases so that zero attribute vectors still embed.
        for b in [layout.base_b, layout.edge_b[0], layout.edge_b[1]] {
            for x in &mut theta[b.range()] {
                *x = 0.1 * (rng.random::<f64>() - 0.5);
            }
        }
        ModelParams {
            dims,
            layout,
            theta,
            alpha,
            beta,
            aggregation_levels: levels,
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.theta.len()]
    }

    fn slice(&self, b: Block) -> &[f64] {
        &self.theta[b.range()]
    }

    /// Forward pass for one node; both typed embeddings are produced.
    pub fn forward(&self, prop: &Propagated, i: usize) -> NodeCache {
        let d = self.dims;
        let l = &self.layout;
        let x = &prop.x[i];
        let mut base = self.slice(l.base_b).to_vec();
        matvec_acc(self.slice(l.base_w), d.base, d.attr, x, &mut base);

        let mut u = [vec![0.0; d.edge], vec![0.0; d.edge]];
        for k in 0..2 {
            u[k].copy_from_slice(self.slice(l.edge_b[k]));
            matvec_acc(self.slice(l.edge_w[k]), d.edge, d.attr, &prop.z[k][i], &mut u[k]);
        }

        let mut typed: [TypedCache; 2] = Default::default();
        for (t, cache) in typed.iter_mut().enumerate() {
            let mut tanh_h = [vec![0.0; d.attention], vec![0.0; d.attention]];
            let mut scores = [0.0; 2];
            for k in 0..2 {
                matvec_acc(self.slice(l.att_w[t]), d.attention, d.edge, &u[k], &mut tanh_h[k]);
                for h in tanh_h[k].iter_mut() {
                    *h = h.tanh();
                }
                scores[k] = dot(self.slice(l.att_v[t]), &tanh_h[k]);
            }
            let m = scores[0].max(scores[1]);
            let e = [(scores[0] - m).exp(), (scores[1] - m).exp()];
            let weights = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
            let mut mixed = vec![0.0; d.edge];
            axpy(&mut mixed, weights[0], &u[0]);
            axpy(&mut mixed, weights[1], &u[1]);

            let mut v = base.clone();
            let mut proj = vec![0.0; d.base];
            matvec_t_acc(self.slice(l.proj[t]), d.edge, d.base, &mixed, &mut proj);
            axpy(&mut v, self.alpha[t], &proj);
            let mut attr_term = vec![0.0; d.base];
            matvec_acc(self.slice(l.attr_proj[t]), d.base, d.attr, x, &mut attr_term);
            axpy(&mut v, self.beta[t], &attr_term);

            *cache = TypedCache {
                tanh_h,
                weights,
                mixed,
                v,
            };
        }
        NodeCache { node: i, u, typed }
    }

    /// Accumulates into `grad` the parameter gradient given `dv[t]`, the
    /// loss gradient with respect to the node's typed embeddings.
    pub fn backward(&self, prop: &Propagated, cache: &NodeCache, dv: &[Vec<f64>; 2], grad: &mut [f64]) {
        let d = self.dims;
        let l = &self.layout;
        let i = cache.node;
        let x = &prop.x[i];
        let mut du = [vec![0.0; d.edge], vec![0.0; d.edge]];

        for t in 0..2 {
            let gv = &dv[t];
            if gv.iter().all(|&g| g == 0.0) {
                continue;
            }
            let tc = &cache.typed[t];
            outer_acc(&mut grad[l.base_w.range()], gv, x, 1.0);
            axpy(&mut grad[l.base_b.range()], 1.0, gv);
            outer_acc(&mut grad[l.attr_proj[t].range()], gv, x, self.beta[t]);

            // v += alpha * M^T mixed  =>  dM = alpha * mixed gv^T, dmixed = alpha * M gv
            outer_acc(&mut grad[l.proj[t].range()], &tc.mixed, gv, self.alpha[t]);
            let mut dmixed = vec![0.0; d.edge];
            matvec_acc(self.slice(l.proj[t]), d.edge, d.base, gv, &mut dmixed);
            for g in &mut dmixed {
                *g *= self.alpha[t];
            }

            // mixed = sum_k a[k] u_k
            let da = [dot(&cache.u[0], &dmixed), dot(&cache.u[1], &dmixed)];
            axpy(&mut du[0], tc.weights[0], &dmixed);
            axpy(&mut du[1], tc.weights[1], &dmixed);

            // softmax backward
            let a = tc.weights;
            let avg = a[0] * da[0] + a[1] * da[1];
            let dscore = [a[0] * (da[0] - avg), a[1] * (da[1] - avg)];

            for k in 0..2 {
                // score_k = w . tanh(W u_k)
                axpy(&mut grad[l.att_v[t].range()], dscore[k], &tc.tanh_h[k]);
                let wv = self.slice(l.att_v[t]);
                let dpre: Vec<f64> = tc.tanh_h[k]
                    .iter()
                    .zip(wv)
                    .map(|(&h, &w)| dscore[k] * w * (1.0 - h * h))
                    .collect();
                outer_acc(&mut grad[l.att_w[t].range()], &dpre, &cache.u[k], 1.0);
                matvec_t_acc(self.slice(l.att_w[t]), d.attention, d.edge, &dpre, &mut du[k]);
            }
        }

        for k in 0..2 {
            outer_acc(&mut grad[l.edge_w[k].range()], &du[k], &prop.z[k][i], 1.0);
            axpy(&mut grad[l.edge_b[k].range()], 1.0, &du[k]);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TypedCache {
    tanh_h: [Vec<f64>; 2],
    /// Attention weights over (pickup, delivery) edge embeddings.
    pub weights: [f64; 2],
    mixed: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NodeCache {
    pub node: usize,
    /// K-level edge embeddings (pickup, delivery).
    pub u: [Vec<f64>; 2],
    pub typed: [TypedCache; 2],
}

impl NodeCache {
    pub fn embedding(&self, t: EdgeType) -> &[f64] {
        &self.typed[t.index()].v
    }
}

/// Node attributes and their K-level neighbor means per edge type.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub x: Vec<Vec<f64>>,
    pub z: [Vec<Vec<f64>>; 2],
}

impl Propagated {
    pub fn new(graph: &Amhen, levels: usize) -> Self {
        let x: Vec<Vec<f64>> = (0..graph.len()).map(|i| graph.attrs(i).to_vec()).collect();
        let z = EdgeType::ALL.map(|t| {
            let mut cur = x.clone();
            for _ in 0..levels {
                cur = (0..graph.len())
                    .map(|i| {
                        let nb = graph.neighbors(t, i);
                        if nb.is_empty() {
                            return cur[i].clone();
                        }
                        let mut acc = vec![0.0; graph.attr_dim()];
                        for &(j, _) in nb {
                            axpy(&mut acc, 1.0, &cur[j]);
                        }
                        let inv = 1.0 / nb.len() as f64;
                        acc.iter_mut().for_each(|a| *a *= inv);
                        acc
                    })
                    .collect();
            }
            cur
        });
        Propagated { x, z }
    }
}

/// Typed embeddings `(v_p, v_d)` of a single node.
pub fn forward(graph: &Amhen, params: &ModelParams, node: usize) -> (Vec<f64>, Vec<f64>) {
    let prop = Propagated::new(graph, params.aggregation_levels);
    let c = params.forward(&prop, node);
    let [p, d] = c.typed;
    (p.v, d.v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_amhen, FuId, FuSequences};
    use rand::SeedableRng;
    use std::collections::BTreeMap;

    fn toy_graph() -> Amhen {
        // Pickup: 0-1, 1-2, 2-3 ; delivery: 0-2. Node 3 has no delivery edges.
        let seqs = vec![
            FuSequences {
                pickup: vec![FuId(0), FuId(1), FuId(2), FuId(3)],
                delivery: vec![FuId(0), FuId(2)],
            },
        ];
        let attrs: BTreeMap<_, _> = (0..4)
            .map(|i| (FuId(i), vec![i as f64, 1.0 - i as f64 * 0.5, (i * i) as f64 * 0.1]))
            .collect();
        build_amhen(&seqs, &attrs).unwrap()
    }

    fn dims() -> Dims {
        Dims {
            attr: 3,
            base: 8,
            edge: 4,
            attention: 3,
        }
    }

    #[test]
    fn output_dimension_is_base_dimension() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dims { attr: 3, base: 200, edge: 20, attention: 20 };
        let p = ModelParams::init(d, [1.0; 2], [1.0; 2], 2, &mut rng);
        let (vp, vd) = forward(&g, &p, 0);
        assert_eq!(vp.len(), 200);
        assert_eq!(vd.len(), 200);
    }

    #[test]
    fn zero_mixing_scalars_leave_base_embedding() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(dims(), [0.0; 2], [0.0; 2], 2, &mut rng);
        let (vp, vd) = forward(&g, &p, 1);
        let mut base = p.slice(p.layout.base_b).to_vec();
        matvec_acc(p.slice(p.layout.base_w), 8, 3, g.attrs(1), &mut base);
        assert_eq!(vp, base);
        assert_eq!(vd, base);
    }

    #[test]
    fn single_neighbor_one_level_copies_its_edge_embedding() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(dims(), [1.0; 2], [1.0; 2], 1, &mut rng);
        let prop = Propagated::new(&g, 1);
        // Node 3's only pickup neighbor is node 2.
        let c = p.forward(&prop, 3);
        let mut expect = p.slice(p.layout.edge_b[0]).to_vec();
        matvec_acc(p.slice(p.layout.edge_w[0]), 4, 3, g.attrs(2), &mut expect);
        for (a, b) in c.u[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_aggregation_matches_manual_two_levels() {
        // Aggregate edge embeddings level by level exactly as written
        // (mean of neighbors' previous-level embeddings; self if none).
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(dims(), [1.0; 2], [1.0; 2], 2, &mut rng);
        let prop = Propagated::new(&g, 2);
        for t in EdgeType::ALL {
            let k = t.index();
            let g0: Vec<Vec<f64>> = (0..4)
                .map(|i| {
                    let mut u = p.slice(p.layout.edge_b[k]).to_vec();
                    matvec_acc(p.slice(p.layout.edge_w[k]), 4, 3, g.attrs(i), &mut u);
                    u
                })
                .collect();
            let step = |prev: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..4)
                    .map(|i| {
                        let nb = g.neighbors(t, i);
                        if nb.is_empty() {
                            return prev[i].clone();
                        }
                        let mut acc = vec![0.0; 4];
                        for &(j, _) in nb {
                            for q in 0..4 {
                                acc[q] += prev[j][q] / nb.len() as f64;
                            }
                        }
                        acc
                    })
                    .collect()
            };
            let manual = step(&step(&g0));
            for i in 0..4 {
                let c = p.forward(&prop, i);
                for q in 0..4 {
                    assert!((c.u[k][q] - manual[i][q]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_weights_form_a_distribution() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::init(dims(), [1.0; 2], [1.0; 2], 2, &mut rng);
        let prop = Propagated::new(&g, 2);
        for i in 0..4 {
            let c = p.forward(&prop, i);
            for t in &c.typed {
                assert!(t.weights.iter().all(|&w| w >= 0.0));
                assert!((t.weights[0] + t.weights[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_of_linear_probe() {
        // L = r_p . v_p + r_d . v_d for fixed random r; checks every block.
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ModelParams::init(dims(), [0.7, 1.3], [0.9, 1.1], 2, &mut rng);
        let prop = Propagated::new(&g, 2);
        let r: [Vec<f64>; 2] = [
            (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
            (0..8).map(|_| rng.random::<f64>() - 0.5).collect(),
        ];
        let probe = |p: &ModelParams| {
            let c = p.forward(&prop, 2);
            dot(&r[0], &c.typed[0].v) + dot(&r[1], &c.typed[1].v)
        };
        let mut grad = p.zeros_like();
        let c = p.forward(&prop, 2);
        p.backward(&prop, &c, &r, &mut grad);
        for k in 0..p.len() {
            let orig = p.theta[k];
            p.theta[k] = orig + 1e-6;
            let up = probe(&p);
            p.theta[k] = orig - 1e-6;
            let dn = probe(&p);
            p.theta[k] = orig;
            let fd = (up - dn) / 2e-6;
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
