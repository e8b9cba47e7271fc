//! Reverse-mode automatic differentiation over matrices.
//!
//! A fresh tape is built per training step: leaves are inserted for
//! parameters and constants, operations record their inputs and enough
//! saved state to run the local backward rule, and `backward` walks the
//! tape once in reverse insertion order (which is a valid reverse
//! topological order, since every operation refers only to earlier nodes).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::matrix::{leaky, leaky_grad, lex_row_order, Matrix};

/// Per-node neighbor lists with aggregation weights, in a canonical order
/// (sorted by weight, ties by the initial feature rows) fixed at graph
/// build time. Iterating them gives relabeling-stable float reductions.
#[derive(Debug, Clone)]
pub struct AggregationPlan {
    pub per_node: Vec<Vec<(usize, f64)>>,
}

impl AggregationPlan {
    pub fn num_nodes(&self) -> usize {
        self.per_node.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    HadamardConst(NodeId, Matrix),
    LeakyRelu(NodeId, f64),
    Transpose(NodeId),
    NarrowCols(NodeId, usize, usize),
    SumAll(NodeId),
    RowMax(NodeId, Vec<usize>),
    GatherCol(NodeId, usize),
    SubConst(NodeId),
    CrossEntropyLogits(NodeId, usize),
    PoolMeanRows(NodeId),
    Aggregate(NodeId, Arc<AggregationPlan>),
    Attention {
        h: NodeId,
        u: NodeId,
        v: NodeId,
        slope: f64,
        // saved per node: (neighbor idx, attention weight, pre-activation score u_i+v_j)
        saved: Vec<Vec<(usize, f64, f64)>>,
        // saved pre-activation of the aggregated output
        pre_out: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Matrix>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target w.r.t. node `id`.
    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].value.sub(&self.nodes[b.0].value)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.hadamard(&self.nodes[a.0].value).expect("same shape");
        self.push(v, Op::Square(a))
    }

    pub fn hadamard_const(&mut self, a: NodeId, mask: Matrix) -> Result<NodeId> {
        let v = self.nodes[a.0].value.hadamard(&mask)?;
        Ok(self.push(v, Op::HadamardConst(a, mask)))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.nodes[a.0].value.leaky_relu(slope);
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn narrow_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let src = &self.nodes[a.0].value;
        if start + len > src.cols() {
            return Err(Error::invalid("narrow_cols out of range"));
        }
        let mut v = Matrix::zeros(src.rows(), len);
        for i in 0..src.rows() {
            for j in 0..len {
                v.set(i, j, src.get(i, start + j));
            }
        }
        Ok(self.push(v, Op::NarrowCols(a, start, len)))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        let v = Matrix::from_raw(1, 1, vec![s]);
        self.push(v, Op::SumAll(a))
    }

    /// Per-row maximum, ties resolved to the lowest column index.
    pub fn row_max(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a.0].value;
        let mut argmaxes = Vec::with_capacity(src.rows());
        let mut vals = Vec::with_capacity(src.rows());
        for i in 0..src.rows() {
            let row = src.row(i);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            argmaxes.push(best);
            vals.push(row[best]);
        }
        let v = Matrix::from_raw(src.rows(), 1, vals);
        self.push(v, Op::RowMax(a, argmaxes))
    }

    pub fn gather_col(&mut self, a: NodeId, col: usize) -> Result<NodeId> {
        let src = &self.nodes[a.0].value;
        if col >= src.cols() {
            return Err(Error::invalid("gather_col out of range"));
        }
        let vals: Vec<f64> = (0..src.rows()).map(|i| src.get(i, col)).collect();
        let v = Matrix::from_raw(src.rows(), 1, vals);
        Ok(self.push(v, Op::GatherCol(a, col)))
    }

    pub fn sub_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let src = &self.nodes[a.0].value;
        let v = Matrix::from_raw(
            src.rows(),
            src.cols(),
            src.data().iter().map(|x| x - c).collect(),
        );
        self.push(v, Op::SubConst(a))
    }

    /// Cross-entropy of a 1 x c logit row against a class index:
    /// -log softmax(logits)[label], computed via log-sum-exp.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let src = &self.nodes[logits.0].value;
        if src.rows() != 1 || label >= src.cols() {
            return Err(Error::invalid(format!(
                "cross_entropy_logits wants a 1 x c row with label < c, got {}x{} label {}",
                src.rows(),
                src.cols(),
                label
            )));
        }
        let row = src.row(0);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - row[label];
        let v = Matrix::from_raw(1, 1, vec![loss]);
        Ok(self.push(v, Op::CrossEntropyLogits(logits, label)))
    }

    /// Column mean over rows (global average pooling). Rows are summed in
    /// lexicographic order so pooled values survive node relabeling bitwise.
    pub fn pool_mean_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.pool_mean_rows();
        self.push(v, Op::PoolMeanRows(a))
    }

    /// Weighted neighbor sum: out(i) = sum over plan[i] of w * features(j).
    pub fn aggregate(&mut self, features: NodeId, plan: Arc<AggregationPlan>) -> Result<NodeId> {
        let src = &self.nodes[features.0].value;
        if plan.num_nodes() != src.rows() {
            return Err(Error::invalid("aggregation plan does not match node count"));
        }
        let v = aggregate_forward(src, &plan);
        Ok(self.push(v, Op::Aggregate(features, plan)))
    }

    /// Single-head attention aggregation over the plan's neighborhoods.
    ///
    /// Scores are s_ij = leaky(u_i + v_j) for j in N(i) (self included in the
    /// plan), attention is a softmax of the scores within each neighborhood,
    /// and the output is leaky(sum_j attn_ij * h_j).
    pub fn attention(
        &mut self,
        h: NodeId,
        u: NodeId,
        v: NodeId,
        plan: Arc<AggregationPlan>,
        slope: f64,
    ) -> Result<NodeId> {
        let hm = &self.nodes[h.0].value;
        let um = &self.nodes[u.0].value;
        let vm = &self.nodes[v.0].value;
        let n = hm.rows();
        if um.rows() != n || um.cols() != 1 || vm.rows() != n || vm.cols() != 1 {
            return Err(Error::invalid("attention score vectors must be n x 1"));
        }
        if plan.num_nodes() != n {
            return Err(Error::invalid("attention plan does not match node count"));
        }
        let d = hm.cols();
        let mut saved: Vec<Vec<(usize, f64, f64)>> = Vec::with_capacity(n);
        let mut pre_out = Matrix::zeros(n, d);
        for i in 0..n {
            let neigh = &plan.per_node[i];
            if neigh.is_empty() {
                return Err(Error::invalid(format!("node {i} has an empty neighborhood")));
            }
            // scores in canonical (value-sorted) order for stable softmax sums
            let mut scored: Vec<(usize, f64)> = neigh
                .iter()
                .map(|&(j, _)| (j, leaky(um.get(i, 0) + vm.get(j, 0), slope)))
                .collect();
            scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_rows(hm, a.0, b.0)));
            let max = scored
                .iter()
                .map(|&(_, s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            let mut exps: Vec<(usize, f64, f64)> = Vec::with_capacity(scored.len());
            for &(j, s) in &scored {
                let e = (s - max).exp();
                denom += e;
                exps.push((j, e, um.get(i, 0) + vm.get(j, 0)));
            }
            let mut entry: Vec<(usize, f64, f64)> = exps
                .into_iter()
                .map(|(j, e, pre)| (j, e / denom, pre))
                .collect();
            // weighted sum in (attention, feature-row) canonical order
            entry.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_rows(hm, a.0, b.0)));
            {
                let acc = pre_out.row_mut(i);
                for &(j, a, _) in &entry {
                    for (o, &x) in acc.iter_mut().zip(hm.row(j)) {
                        *o += a * x;
                    }
                }
            }
            saved.push(entry);
        }
        let out = pre_out.leaky_relu(slope);
        Ok(self.push(
            out,
            Op::Attention {
                h,
                u,
                v,
                slope,
                saved,
                pre_out,
            },
        ))
    }

    /// Runs the backward pass from `out`, which must be a 1 x 1 scalar.
    /// Gradients for every node are then available through `grad`.
    pub fn backward(&mut self, out: NodeId) -> Result<()> {
        let outv = &self.nodes[out.0].value;
        if outv.rows() != 1 || outv.cols() != 1 {
            return Err(Error::invalid("backward target must be a 1x1 scalar"));
        }
        if !outv.get(0, 0).is_finite() {
            return Err(Error::NonFinite("backward target".into()));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows(), n.value.cols()))
            .collect();
        self.grads[out.0].set(0, 0, 1.0);

        for idx in (0..=out.0).rev() {
            let g = std::mem::replace(&mut self.grads[idx], Matrix::zeros(0, 0));
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = g.matmul(&self.nodes[b.0].value.transpose())?;
                    let db = self.nodes[a.0].value.transpose().matmul(&g)?;
                    accumulate(&mut self.grads[a.0], &da);
                    accumulate(&mut self.grads[b.0], &db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.grads[a.0], &g);
                    accumulate(&mut self.grads[b.0], &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.grads[a.0], &g);
                    let neg = g.scale(-1.0);
                    accumulate(&mut self.grads[b.0], &neg);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let da = g.scale(c);
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::Square(a) => {
                    let a = *a;
                    let da = self.nodes[a.0].value.scale(2.0).hadamard(&g)?;
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::HadamardConst(a, mask) => {
                    let a = *a;
                    let da = g.hadamard(mask)?;
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::LeakyRelu(a, slope) => {
                    let (a, slope) = (*a, *slope);
                    let src = &self.nodes[a.0].value;
                    let mut da = g.clone();
                    for (dv, &x) in da.data_mut().iter_mut().zip(src.data()) {
                        *dv *= leaky_grad(x, slope);
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let da = g.transpose();
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::NarrowCols(a, start, len) => {
                    let (a, start, len) = (*a, *start, *len);
                    let src_shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let mut da = Matrix::zeros(src_shape.0, src_shape.1);
                    for i in 0..g.rows() {
                        for j in 0..len {
                            da.set(i, start + j, g.get(i, j));
                        }
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let gv = g.get(0, 0);
                    let shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let da = Matrix::from_raw(shape.0, shape.1, vec![gv; shape.0 * shape.1]);
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::RowMax(a, argmaxes) => {
                    let a = *a;
                    let shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let mut da = Matrix::zeros(shape.0, shape.1);
                    for (i, &j) in argmaxes.iter().enumerate() {
                        da.set(i, j, g.get(i, 0));
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::GatherCol(a, col) => {
                    let (a, col) = (*a, *col);
                    let shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let mut da = Matrix::zeros(shape.0, shape.1);
                    for i in 0..shape.0 {
                        da.set(i, col, g.get(i, 0));
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::SubConst(a) => {
                    let a = *a;
                    accumulate(&mut self.grads[a.0], &g);
                }
                Op::CrossEntropyLogits(a, label) => {
                    let (a, label) = (*a, *label);
                    let logits = &self.nodes[a.0].value;
                    let probs = logits.softmax_row()?;
                    let gv = g.get(0, 0);
                    let mut da = probs;
                    let x = da.get(0, label) - 1.0;
                    da.set(0, label, x);
                    let da = da.scale(gv);
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::PoolMeanRows(a) => {
                    let a = *a;
                    let shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let inv = 1.0 / shape.0 as f64;
                    let mut da = Matrix::zeros(shape.0, shape.1);
                    for i in 0..shape.0 {
                        for j in 0..shape.1 {
                            da.set(i, j, g.get(0, j) * inv);
                        }
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::Aggregate(a, plan) => {
                    let a = *a;
                    let plan = Arc::clone(plan);
                    let shape = (self.nodes[a.0].value.rows(), self.nodes[a.0].value.cols());
                    let mut da = Matrix::zeros(shape.0, shape.1);
                    for (i, neigh) in plan.per_node.iter().enumerate() {
                        let grow = g.row(i).to_vec();
                        for &(j, w) in neigh {
                            for (o, &gv) in da.row_mut(j).iter_mut().zip(&grow) {
                                *o += w * gv;
                            }
                        }
                    }
                    accumulate(&mut self.grads[a.0], &da);
                }
                Op::Attention {
                    h,
                    u,
                    v,
                    slope,
                    saved,
                    pre_out,
                    ..
                } => {
                    let (h, u, v, slope) = (*h, *u, *v, *slope);
                    let n = pre_out.rows();
                    let d = pre_out.cols();
                    let hm = self.nodes[h.0].value.clone();
                    let mut dh = Matrix::zeros(n, d);
                    let mut du = Matrix::zeros(n, 1);
                    let mut dv = Matrix::zeros(n, 1);
                    for i in 0..n {
                        // through the output nonlinearity
                        let mut gm = vec![0.0; d];
                        for (jj, gv) in gm.iter_mut().enumerate() {
                            *gv = g.get(i, jj) * leaky_grad(pre_out.get(i, jj), slope);
                        }
                        let entry = &saved[i];
                        // d attn_ij = gm . h_j ; softmax backward within the neighborhood
                        let dattn: Vec<f64> = entry
                            .iter()
                            .map(|&(j, _, _)| dot(&gm, hm.row(j)))
                            .collect();
                        let inner: f64 = entry
                            .iter()
                            .zip(&dattn)
                            .map(|(&(_, a, _), &da)| a * da)
                            .sum();
                        for (&(j, a, pre_score), &da_j) in entry.iter().zip(&dattn) {
                            let ds = a * (da_j - inner);
                            let dc = ds * leaky_grad(pre_score, slope);
                            du.set(i, 0, du.get(i, 0) + dc);
                            dv.set(j, 0, dv.get(j, 0) + dc);
                            for (o, &gv) in dh.row_mut(j).iter_mut().zip(&gm) {
                                *o += a * gv;
                            }
                        }
                    }
                    accumulate(&mut self.grads[h.0], &dh);
                    accumulate(&mut self.grads[u.0], &du);
                    accumulate(&mut self.grads[v.0], &dv);
                }
            }
            self.grads[idx] = g;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cmp_rows(m: &Matrix, a: usize, b: usize) -> std::cmp::Ordering {
    for (x, y) in m.row(a).iter().zip(m.row(b)) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            ord => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

fn accumulate(into: &mut Matrix, from: &Matrix) {
    debug_assert!(into.same_shape(from));
    for (o, &v) in into.data_mut().iter_mut().zip(from.data()) {
        *o += v;
    }
}

/// Plain (non-tape) forward of the aggregation, shared with inference paths.
pub fn aggregate_forward(features: &Matrix, plan: &AggregationPlan) -> Matrix {
    let mut out = Matrix::zeros(plan.num_nodes(), features.cols());
    for (i, neigh) in plan.per_node.iter().enumerate() {
        let orow = out.row_mut(i);
        for &(j, w) in neigh {
            for (o, &x) in orow.iter_mut().zip(features.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

/// Plain attention forward, returning the output features and per-node
/// attention weights (used by inference and tests).
pub fn attention_forward(
    h: &Matrix,
    u: &Matrix,
    v: &Matrix,
    plan: &AggregationPlan,
    slope: f64,
) -> (Matrix, Vec<Vec<(usize, f64)>>) {
    let n = h.rows();
    let d = h.cols();
    let mut out = Matrix::zeros(n, d);
    let mut attn_all = Vec::with_capacity(n);
    for i in 0..n {
        let mut scored: Vec<(usize, f64)> = plan.per_node[i]
            .iter()
            .map(|&(j, _)| (j, leaky(u.get(i, 0) + v.get(j, 0), slope)))
            .collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_rows(h, a.0, b.0)));
        let max = scored
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = scored.iter().map(|&(_, s)| (s - max).exp()).sum();
        let mut entry: Vec<(usize, f64)> = scored
            .into_iter()
            .map(|(j, s)| (j, (s - max).exp() / denom))
            .collect();
        entry.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| cmp_rows(h, a.0, b.0)));
        {
            let orow = out.row_mut(i);
            for &(j, a) in &entry {
                for (o, &x) in orow.iter_mut().zip(h.row(j)) {
                    *o += a * x;
                }
            }
        }
        attn_all.push(entry);
    }
    (out.leaky_relu(slope), attn_all)
}

/// Row order helper re-exported for inference-side pooling.
pub fn canonical_row_order(m: &Matrix) -> Vec<usize> {
    lex_row_order(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::finite_diff_check;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn matmul_values() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::identity(2));
        let b = t.leaf(Matrix::from_rows(&[vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).row(0), &[2.0, 3.0]);
        assert_eq!(t.value(c).row(1), &[4.0, 5.0]);
    }

    #[test]
    fn matmul_gradient_is_ones_times_b_transpose() {
        let mut rng = stream_rng(2, Stream::Synthetic);
        let a0 = Matrix::glorot(3, 4, &mut rng);
        let b0 = Matrix::glorot(4, 2, &mut rng);

        let mut t = Tape::new();
        let a = t.leaf(a0.clone());
        let b = t.leaf(b0.clone());
        let c = t.matmul(a, b).unwrap();
        let s = t.sum_all(c);
        t.backward(s).unwrap();

        // analytic closed form: ones x B^T
        let ones = Matrix::new(3, 2, vec![1.0; 6]).unwrap();
        let expect = ones.matmul(&b0.transpose()).unwrap();
        for (g, e) in t.grad(a).data().iter().zip(expect.data()) {
            assert!((g - e).abs() < 1e-12);
        }

        // and against central finite differences
        let err = finite_diff_check(&[a0, b0], |t, leaves| {
            let c = t.matmul(leaves[0], leaves[1])?;
            Ok(t.sum_all(c))
        })
        .unwrap();
        assert!(err < 1e-6, "fd error {err}");
    }

    #[test]
    fn cross_entropy_values() {
        let mut t = Tape::new();
        let uniform = t.leaf(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap());
        let l = t.cross_entropy_logits(uniform, 0).unwrap();
        assert!((t.value(l).get(0, 0) - 2.0_f64.ln()).abs() < 1e-15);

        let saturated = t.leaf(Matrix::from_rows(&[vec![10.0, -10.0]]).unwrap());
        let l = t.cross_entropy_logits(saturated, 0).unwrap();
        assert!(t.value(l).get(0, 0) < 1e-8);
    }

    #[test]
    fn cross_entropy_gradient_matches_fd() {
        let mut rng = stream_rng(4, Stream::Synthetic);
        let e = Matrix::glorot(1, 5, &mut rng);
        let err = finite_diff_check(&[e], |t, leaves| t.cross_entropy_logits(leaves[0], 2))
            .unwrap();
        assert!(err < 1e-7, "fd error {err}");
    }

    #[test]
    fn attention_gradient_matches_fd() {
        let mut rng = stream_rng(6, Stream::Synthetic);
        let n = 4;
        let plan = Arc::new(AggregationPlan {
            per_node: vec![
                vec![(0, 1.0), (1, 1.0)],
                vec![(1, 1.0), (0, 1.0), (2, 1.0)],
                vec![(2, 1.0), (1, 1.0), (3, 1.0)],
                vec![(3, 1.0), (2, 1.0)],
            ],
        });
        let h0 = Matrix::glorot(n, 3, &mut rng);
        let u0 = Matrix::glorot(n, 1, &mut rng);
        let v0 = Matrix::glorot(n, 1, &mut rng);
        let err = finite_diff_check(&[h0, u0, v0], |t, leaves| {
            let att = t.attention(leaves[0], leaves[1], leaves[2], Arc::clone(&plan), 0.2)?;
            let pooled = t.pool_mean_rows(att);
            t.cross_entropy_logits(pooled, 1)
        })
        .unwrap();
        assert!(err < 1e-6, "fd error {err}");
    }

    #[test]
    fn row_max_ties_to_lowest_index() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_rows(&[vec![0.5, 0.5, 0.1]]).unwrap());
        let m = t.row_max(a);
        let s = t.sum_all(m);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_nonscalar() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 2));
        assert!(t.backward(a).is_err());
    }
}
