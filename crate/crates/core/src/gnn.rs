//! GCN and single-head GAT with a parameter-sharing mechanism: one b-layer
//! model serves any truncated depth j <= b, with a classifier shared across
//! depths. Global mean pooling and a softmax cross-entropy head sit on top.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netbuild::{BuiltGraph, InputMode};
use crate::numerics::adam::AdamState;
use crate::numerics::matrix::{dropout_mask, softmax_slice, Matrix};
use crate::numerics::tape::{aggregate_forward, attention_forward, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GnnKind {
    Gcn,
    Gat,
}

impl std::fmt::Display for GnnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GnnKind::Gcn => write!(f, "gcn"),
            GnnKind::Gat => write!(f, "gat"),
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    transform: Matrix,
    attention: Option<Matrix>,
}

/// A b-layer GNN whose first j layers serve any depth-j forward pass.
#[derive(Debug, Clone)]
pub struct GnnModel {
    pub kind: GnnKind,
    pub b: usize,
    pub d: usize,
    pub n: usize,
    pub num_classes: usize,
    pub residual: bool,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    layers: Vec<Layer>,
    classifier: Matrix,
}

impl GnnModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: GnnKind,
        n: usize,
        b: usize,
        d: usize,
        num_classes: usize,
        residual: bool,
        dropout_rate: f64,
        leaky_slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if b < 1 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(b);
        for l in 0..b {
            let in_dim = if l == 0 { n } else { d };
            let transform = Matrix::glorot(in_dim, d, rng);
            let attention = match kind {
                GnnKind::Gat => Some(Matrix::glorot(1, 2 * d, rng)),
                GnnKind::Gcn => None,
            };
            layers.push(Layer {
                transform,
                attention,
            });
        }
        let classifier = Matrix::glorot(d, num_classes, rng);
        Ok(Self {
            kind,
            b,
            d,
            n,
            num_classes,
            residual,
            dropout_rate,
            leaky_slope,
            layers,
            classifier,
        })
    }

    /// Slot layout: per layer the transform (and for GAT the attention
    /// vector), classifier last. Stable across save/load.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        for layer in &self.layers {
            shapes.push((layer.transform.rows(), layer.transform.cols()));
            if let Some(q) = &layer.attention {
                shapes.push((q.rows(), q.cols()));
            }
        }
        shapes.push((self.classifier.rows(), self.classifier.cols()));
        shapes
    }

    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{}.transform", l + 1), &layer.transform));
            if let Some(q) = &layer.attention {
                out.push((format!("layer{}.attention", l + 1), q));
            }
        }
        out.push(("classifier".to_string(), &self.classifier));
        out
    }

    pub fn set_param(&mut self, name: &str, value: Matrix) -> Result<()> {
        let slot = self
            .named_params()
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let current = self.param_shapes()[slot];
        if (value.rows(), value.cols()) != current {
            return Err(Error::Checkpoint(format!(
                "parameter {name} has shape {}x{}, expected {}x{}",
                value.rows(),
                value.cols(),
                current.0,
                current.1
            )));
        }
        *self.param_mut(slot) = value;
        Ok(())
    }

    fn param_mut(&mut self, slot: usize) -> &mut Matrix {
        let per_layer = match self.kind {
            GnnKind::Gcn => 1,
            GnnKind::Gat => 2,
        };
        let layer_slots = per_layer * self.b;
        if slot < layer_slots {
            let layer = &mut self.layers[slot / per_layer];
            if slot % per_layer == 0 {
                &mut layer.transform
            } else {
                layer.attention.as_mut().expect("gat layer has attention")
            }
        } else {
            &mut self.classifier
        }
    }

    pub fn param(&self, slot: usize) -> &Matrix {
        let per_layer = match self.kind {
            GnnKind::Gcn => 1,
            GnnKind::Gat => 2,
        };
        let layer_slots = per_layer * self.b;
        if slot < layer_slots {
            let layer = &self.layers[slot / per_layer];
            if slot % per_layer == 0 {
                &layer.transform
            } else {
                layer.attention.as_ref().expect("gat layer has attention")
            }
        } else {
            &self.classifier
        }
    }

    pub fn num_slots(&self) -> usize {
        self.param_shapes().len()
    }

    /// Slots read by a depth-`depth` forward pass: layers 1..=depth plus the
    /// shared classifier.
    pub fn touched_slots(&self, depth: usize) -> Vec<usize> {
        let per_layer = match self.kind {
            GnnKind::Gcn => 1,
            GnnKind::Gat => 2,
        };
        let mut slots: Vec<usize> = (0..depth * per_layer).collect();
        slots.push(self.b * per_layer);
        slots
    }

    fn check_depth(&self, depth: usize) -> Result<()> {
        if depth < 1 || depth > self.b {
            return Err(Error::invalid(format!(
                "depth {depth} outside 1..={}",
                self.b
            )));
        }
        Ok(())
    }

    /// Builds the node-feature forward pass on a tape. Returns the output
    /// features node and the tape leaves for every touched parameter slot.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
        training: bool,
        rng: Option<&mut ChaCha8Rng>,
        leaves: &ParamLeaves,
    ) -> Result<NodeId> {
        self.check_depth(depth)?;
        let plan = g.aggregation_plan(mode);
        let attn_plan = g.attention_plan(mode);
        let mut rng = rng;
        let mut x = tape.leaf(g.f0.clone());
        for l in 0..depth {
            let t_leaf = leaves.layer_transform(self.kind, l);
            let h = tape.matmul(x, t_leaf)?;
            let out = match self.kind {
                GnnKind::Gcn => {
                    let agg = tape.aggregate(h, plan.clone())?;
                    tape.leaky_relu(agg, self.leaky_slope)
                }
                GnnKind::Gat => {
                    let q_leaf = leaves.layer_attention(l);
                    let q_left = tape.narrow_cols(q_leaf, 0, self.d)?;
                    let q_right = tape.narrow_cols(q_leaf, self.d, self.d)?;
                    let q_left_t = tape.transpose(q_left);
                    let q_right_t = tape.transpose(q_right);
                    let u = tape.matmul(h, q_left_t)?;
                    let v = tape.matmul(h, q_right_t)?;
                    tape.attention(h, u, v, attn_plan.clone(), self.leaky_slope)?
                }
            };
            let out = if self.residual && l > 0 {
                tape.add(out, x)?
            } else {
                out
            };
            x = if training && self.dropout_rate > 0.0 && l + 1 < depth {
                let rng = rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::invalid("training forward needs an rng"))?;
                let mask = dropout_mask(
                    tape.value(out).rows(),
                    tape.value(out).cols(),
                    self.dropout_rate,
                    rng,
                )?;
                tape.hadamard_const(out, mask)?
            } else {
                out
            };
        }
        Ok(x)
    }

    /// Full classification loss on a tape: pooling, shared classifier,
    /// softmax cross-entropy against the label.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_tape(
        &self,
        tape: &mut Tape,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
        label: usize,
        training: bool,
        rng: Option<&mut ChaCha8Rng>,
        leaves: &ParamLeaves,
    ) -> Result<NodeId> {
        if label >= self.num_classes {
            return Err(Error::invalid(format!(
                "label {label} outside {} classes",
                self.num_classes
            )));
        }
        let features = self.forward_tape(tape, g, depth, mode, training, rng, leaves)?;
        let pooled = tape.pool_mean_rows(features);
        let logits = tape.matmul(pooled, leaves.classifier)?;
        tape.cross_entropy_logits(logits, label)
    }

    /// Inserts leaves for layers 1..=max_depth plus the classifier.
    pub fn insert_leaves(&self, tape: &mut Tape, max_depth: usize) -> ParamLeaves {
        let mut transforms = Vec::new();
        let mut attentions = Vec::new();
        for l in 0..max_depth {
            transforms.push(tape.leaf(self.layers[l].transform.clone()));
            if let Some(q) = &self.layers[l].attention {
                attentions.push(tape.leaf(q.clone()));
            }
        }
        let classifier = tape.leaf(self.classifier.clone());
        ParamLeaves {
            transforms,
            attentions,
            classifier,
        }
    }

    /// One optimizer step on a single instance at the given depth.
    pub fn train_step(
        &mut self,
        adam: &mut AdamState,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
        label: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        self.train_step_many(adam, &[(g, depth, label)], mode, rng)
    }

    /// One optimizer step on the summed loss over several instances.
    pub fn train_step_many(
        &mut self,
        adam: &mut AdamState,
        items: &[(&BuiltGraph, usize, usize)],
        mode: InputMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if items.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let max_depth = items.iter().map(|&(_, depth, _)| depth).max().unwrap();
        self.check_depth(max_depth)?;
        let mut tape = Tape::new();
        let leaves = self.insert_leaves(&mut tape, max_depth);
        let mut total: Option<NodeId> = None;
        for &(g, depth, label) in items {
            let loss =
                self.loss_tape(&mut tape, g, depth, mode, label, true, Some(rng), &leaves)?;
            total = Some(match total {
                Some(t) => tape.add(t, loss)?,
                None => loss,
            });
        }
        let total = total.unwrap();
        let loss_value = tape.value(total).get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("gnn training loss".into()));
        }
        tape.backward(total)?;

        let slots = self.touched_slots(max_depth);
        let grads: Vec<Matrix> = slots
            .iter()
            .map(|&slot| tape.grad(leaves.slot_node(self.kind, self.b, slot)).clone())
            .collect();
        let grad_refs: Vec<&Matrix> = grads.iter().collect();
        // Split borrows: collect owned copies, update, write back.
        let mut params: Vec<Matrix> = slots.iter().map(|&s| self.param(s).clone()).collect();
        {
            let mut param_refs: Vec<&mut Matrix> = params.iter_mut().collect();
            adam.step(&slots, &mut param_refs, &grad_refs)?;
        }
        for (&slot, updated) in slots.iter().zip(params) {
            *self.param_mut(slot) = updated;
        }
        Ok(loss_value)
    }

    /// Inference forward pass (dropout disabled).
    pub fn forward_plain(&self, g: &BuiltGraph, depth: usize, mode: InputMode) -> Result<Matrix> {
        self.check_depth(depth)?;
        let plan = g.aggregation_plan(mode);
        let attn_plan = g.attention_plan(mode);
        let mut x = g.f0.clone();
        for l in 0..depth {
            let h = x.matmul(&self.layers[l].transform)?;
            let out = match self.kind {
                GnnKind::Gcn => aggregate_forward(&h, &plan).leaky_relu(self.leaky_slope),
                GnnKind::Gat => {
                    let (u, v) = self.attention_scores(&h, l)?;
                    attention_forward(&h, &u, &v, &attn_plan, self.leaky_slope).0
                }
            };
            x = if self.residual && l > 0 {
                out.add(&x)?
            } else {
                out
            };
        }
        Ok(x)
    }

    fn attention_scores(&self, h: &Matrix, layer: usize) -> Result<(Matrix, Matrix)> {
        let q = self.layers[layer]
            .attention
            .as_ref()
            .ok_or_else(|| Error::invalid("gcn model has no attention vectors"))?;
        let n = h.rows();
        let mut u = Matrix::zeros(n, 1);
        let mut v = Matrix::zeros(n, 1);
        for i in 0..n {
            let mut us = 0.0;
            let mut vs = 0.0;
            for j in 0..self.d {
                us += h.get(i, j) * q.get(0, j);
                vs += h.get(i, j) * q.get(0, self.d + j);
            }
            u.set(i, 0, us);
            v.set(i, 0, vs);
        }
        Ok((u, v))
    }

    /// Attention weights of the given layer during a depth-`depth` forward
    /// pass (GAT only; inference mode).
    pub fn attention_weights(
        &self,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
    ) -> Result<Vec<Vec<(usize, f64)>>> {
        self.check_depth(depth)?;
        if self.kind != GnnKind::Gat {
            return Err(Error::invalid("attention weights exist only for gat"));
        }
        let attn_plan = g.attention_plan(mode);
        let mut x = g.f0.clone();
        let mut last = Vec::new();
        for l in 0..depth {
            let h = x.matmul(&self.layers[l].transform)?;
            let (u, v) = self.attention_scores(&h, l)?;
            let (out, attn) = attention_forward(&h, &u, &v, &attn_plan, self.leaky_slope);
            last = attn;
            x = if self.residual && l > 0 { out.add(&x)? } else { out };
        }
        Ok(last)
    }

    pub fn pooled(&self, g: &BuiltGraph, depth: usize, mode: InputMode) -> Result<Matrix> {
        Ok(self.forward_plain(g, depth, mode)?.pool_mean_rows())
    }

    pub fn logits(&self, g: &BuiltGraph, depth: usize, mode: InputMode) -> Result<Matrix> {
        self.pooled(g, depth, mode)?.matmul(&self.classifier)
    }

    /// Predicted class (ties to the lower index) and class probabilities.
    pub fn predict(
        &self,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
    ) -> Result<(usize, Vec<f64>)> {
        let logits = self.logits(g, depth, mode)?;
        let probs = class_probabilities(logits.row(0));
        Ok((argmax_tie_low(&probs), probs))
    }

    /// Inference loss (dropout disabled), for validation curves.
    pub fn loss_plain(
        &self,
        g: &BuiltGraph,
        depth: usize,
        mode: InputMode,
        label: usize,
    ) -> Result<f64> {
        let logits = self.logits(g, depth, mode)?;
        let row = logits.row(0);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        Ok(lse - row[label])
    }
}

/// Tape leaves for the parameters touched by a forward pass.
pub struct ParamLeaves {
    transforms: Vec<NodeId>,
    attentions: Vec<NodeId>,
    pub classifier: NodeId,
}

impl ParamLeaves {
    fn layer_transform(&self, _kind: GnnKind, layer: usize) -> NodeId {
        self.transforms[layer]
    }

    fn layer_attention(&self, layer: usize) -> NodeId {
        self.attentions[layer]
    }

    /// Maps a model slot index to its tape leaf.
    fn slot_node(&self, kind: GnnKind, b: usize, slot: usize) -> NodeId {
        let per_layer = match kind {
            GnnKind::Gcn => 1,
            GnnKind::Gat => 2,
        };
        if slot == b * per_layer {
            self.classifier
        } else if per_layer == 1 {
            self.transforms[slot]
        } else if slot % 2 == 0 {
            self.transforms[slot / 2]
        } else {
            self.attentions[slot / 2]
        }
    }
}

pub fn class_probabilities(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_slice(logits, &mut out);
    out
}

pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::WeightedGraph;
    use crate::rng::{stream_rng, Stream};

    fn built(w: Matrix, k: usize) -> BuiltGraph {
        BuiltGraph::build(&WeightedGraph::new("g", w, 0).unwrap(), k).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        stream_rng(42, Stream::ModelInit)
    }

    #[test]
    fn gcn_identity_transform_fixture() {
        // identical feature rows -> confidences 1 -> Ahat = [[.5,.5],[.5,.5]];
        // with F0 = I and T = I the depth-1 output is leaky(Ahat) = Ahat.
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f0 = Matrix::identity(2);
        let g = BuiltGraph::from_adjacency("fixture", 0, a, f0).unwrap();
        let mut model = GnnModel::new(GnnKind::Gcn, 2, 1, 2, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        model
            .set_param("layer1.transform", Matrix::identity(2))
            .unwrap();
        let out = model.forward_plain(&g, 1, InputMode::Normalized).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(out.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn gcn_null_transform_gives_zero() {
        let g = built(Matrix::from_rows(&[
            vec![0.0, 0.3, 0.8],
            vec![0.3, 0.0, 0.5],
            vec![0.8, 0.5, 0.0],
        ]).unwrap(), 1);
        let mut model = GnnModel::new(GnnKind::Gcn, 3, 1, 4, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        model
            .set_param("layer1.transform", Matrix::zeros(3, 4))
            .unwrap();
        let out = model.forward_plain(&g, 1, InputMode::Normalized).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_depth_two_matches_hand_unrolled_oracle() {
        let mut r = stream_rng(9, Stream::Synthetic);
        let w = Matrix::glorot(5, 5, &mut r);
        let g = built(w, 2);
        let model = GnnModel::new(GnnKind::Gcn, 5, 2, 3, 2, false, 0.0, 0.2, &mut rng()).unwrap();

        // explicit loop oracle: dense Ahat multiplications
        let t1 = model.param(0);
        let t2 = model.param(1);
        let step = |x: &Matrix, t: &Matrix| {
            g.ahat
                .matmul(&x.matmul(t).unwrap())
                .unwrap()
                .leaky_relu(0.2)
        };
        let expect = step(&step(&g.f0, t1), t2);
        let got = model.forward_plain(&g, 2, InputMode::Normalized).unwrap();
        for (e, o) in expect.data().iter().zip(got.data()) {
            assert!((e - o).abs() < 1e-12, "{e} vs {o}");
        }
    }

    #[test]
    fn gat_singleton_neighborhood() {
        // empty adjacency: each node attends only to itself
        let a = Matrix::zeros(2, 2);
        let f0 = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]]).unwrap();
        let g = BuiltGraph::from_adjacency("solo", 0, a, f0.clone()).unwrap();
        let model = GnnModel::new(GnnKind::Gat, 2, 1, 3, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        let attn = model
            .attention_weights(&g, 1, InputMode::Normalized)
            .unwrap();
        for (i, row) in attn.iter().enumerate() {
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].0, i);
            assert_eq!(row[0].1, 1.0);
        }
        let out = model.forward_plain(&g, 1, InputMode::Normalized).unwrap();
        let h = f0.matmul(model.param(0)).unwrap().leaky_relu(0.2);
        for (e, o) in h.data().iter().zip(out.data()) {
            assert!((e - o).abs() < 1e-12);
        }
    }

    #[test]
    fn gat_zero_attention_vector_is_uniform() {
        let mut r = stream_rng(10, Stream::Synthetic);
        let w = Matrix::glorot(5, 5, &mut r);
        let g = built(w, 2);
        let mut model = GnnModel::new(GnnKind::Gat, 5, 1, 3, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        model
            .set_param("layer1.attention", Matrix::zeros(1, 6))
            .unwrap();
        let attn = model
            .attention_weights(&g, 1, InputMode::Normalized)
            .unwrap();
        for row in attn {
            let count = row.len() as f64;
            for (_, weight) in row {
                assert!((weight - 1.0 / count).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_attention_rows_sum_to_one() {
        let mut r = stream_rng(11, Stream::Synthetic);
        let w = Matrix::glorot(6, 6, &mut r);
        let g = built(w, 2);
        let model = GnnModel::new(GnnKind::Gat, 6, 2, 4, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        for depth in 1..=2 {
            let attn = model
                .attention_weights(&g, depth, InputMode::Normalized)
                .unwrap();
            for row in attn {
                let total: f64 = row.iter().map(|&(_, a)| a).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_mean_examples() {
        let m = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(m.pool_mean_rows().row(0), &[2.0, 4.0]);
        let single = Matrix::from_rows(&[vec![7.0, -1.0]]).unwrap();
        assert_eq!(single.pool_mean_rows().row(0), &[7.0, -1.0]);
    }

    #[test]
    fn classify_loss_values() {
        let mut t = Tape::new();
        let uniform = t.leaf(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap());
        for label in 0..2 {
            let l = t.cross_entropy_logits(uniform, label).unwrap();
            assert!((t.value(l).get(0, 0) - 2.0_f64.ln()).abs() < 1e-15);
        }
        let sat = t.leaf(Matrix::from_rows(&[vec![10.0, -10.0]]).unwrap());
        let l = t.cross_entropy_logits(sat, 0).unwrap();
        assert!(t.value(l).get(0, 0) < 3e-9);
    }

    #[test]
    fn predict_contract() {
        let probs = class_probabilities(&[3.0, 1.0]);
        assert!((probs[0] - 0.8808).abs() < 1e-4);
        assert!((probs[1] - 0.1192).abs() < 1e-4);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(argmax_tie_low(&probs), 0);
        // tied logits resolve to the lower class
        assert_eq!(argmax_tie_low(&[0.5, 0.5]), 0);
    }

    #[test]
    fn skip_zeroed_upper_layers_propagate_input() {
        let mut r = stream_rng(13, Stream::Synthetic);
        let w = Matrix::glorot(5, 5, &mut r);
        let g = built(w, 2);
        let mut model = GnnModel::new(GnnKind::Gcn, 5, 3, 4, 2, true, 0.0, 0.2, &mut rng()).unwrap();
        model
            .set_param("layer2.transform", Matrix::zeros(4, 4))
            .unwrap();
        model
            .set_param("layer3.transform", Matrix::zeros(4, 4))
            .unwrap();
        let one = model.forward_plain(&g, 1, InputMode::Normalized).unwrap();
        let three = model.forward_plain(&g, 3, InputMode::Normalized).unwrap();
        for (a, b) in one.data().iter().zip(three.data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn skip_equals_plain_with_residual_subtracted() {
        let mut r = stream_rng(14, Stream::Synthetic);
        let w = Matrix::glorot(5, 5, &mut r);
        let g = built(w, 2);
        let mut seed = rng();
        let skip = GnnModel::new(GnnKind::Gcn, 5, 2, 4, 2, true, 0.0, 0.2, &mut seed).unwrap();
        let mut plain = GnnModel::new(GnnKind::Gcn, 5, 2, 4, 2, false, 0.0, 0.2, &mut rng()).unwrap();
        for (name, value) in skip.named_params() {
            plain.set_param(&name, value.clone()).unwrap();
        }
        let x1 = skip.forward_plain(&g, 1, InputMode::Normalized).unwrap();
        let with_skip = skip.forward_plain(&g, 2, InputMode::Normalized).unwrap();
        let without = plain.forward_plain(&g, 2, InputMode::Normalized).unwrap();
        let diff = with_skip.sub(&x1).unwrap();
        for (a, b) in diff.data().iter().zip(without.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncated_step_leaves_deeper_layers_bit_identical() {
        let mut r = stream_rng(15, Stream::Synthetic);
        let w = Matrix::glorot(6, 6, &mut r);
        let g = built(w, 2);
        for kind in [GnnKind::Gcn, GnnKind::Gat] {
            let mut model = GnnModel::new(kind, 6, 3, 4, 2, false, 0.3, 0.2, &mut rng()).unwrap();
            let before: Vec<(String, Matrix)> = model
                .named_params()
                .iter()
                .map(|(n, m)| (n.clone(), (*m).clone()))
                .collect();
            let mut adam = AdamState::new(0.005, &model.param_shapes());
            let mut train_rng = stream_rng(42, Stream::Gnn1Train);
            model
                .train_step(&mut adam, &g, 2, InputMode::Normalized, 0, &mut train_rng)
                .unwrap();
            for (name, old) in &before {
                let now = model
                    .named_params()
                    .into_iter()
                    .find(|(n, _)| n == name)
                    .unwrap()
                    .1
                    .clone();
                if name.starts_with("layer3") {
                    assert_eq!(&now, old, "{name} changed by a depth-2 step");
                } else if name.starts_with("layer1") || name == "classifier" {
                    assert_ne!(&now, old, "{name} should have moved");
                }
            }
        }
    }
}
