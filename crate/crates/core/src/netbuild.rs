//! Graph construction: KNN sparsification with confidence weights, symmetric
//! normalization, and the coarse subject graph used for state transitions.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::tape::AggregationPlan;

/// One instance's raw weighted matrix plus its class label.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub id: String,
    pub w: Matrix,
    pub label: usize,
}

impl WeightedGraph {
    pub fn new(id: impl Into<String>, w: Matrix, label: usize) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::invalid(format!(
                "weighted matrix must be square, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        Ok(Self {
            id: id.into(),
            w,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.w.rows()
    }
}

/// Which matrix feeds the GNN's aggregation structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InputMode {
    /// The raw weighted matrix itself.
    Raw,
    /// The degree matrix of the self-loop form (diagonal; no neighbor mixing).
    Degree,
    /// The symmetrically normalized adjacency.
    Normalized,
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputMode::Raw => write!(f, "raw"),
            InputMode::Degree => write!(f, "degree"),
            InputMode::Normalized => write!(f, "normalized"),
        }
    }
}

/// K nearest distinct neighbors per node by Euclidean distance between
/// feature rows, ties broken by lower index.
pub fn knn_neighbors(f0: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = f0.rows();
    if k < 1 || k >= n {
        return Err(Error::invalid(format!(
            "knn wants 1 <= k < n, got k={k} with n={n}"
        )));
    }
    let mut neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (f0.row_distance(i, j), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        neighbors.push(cand.iter().take(k).map(|&(_, j)| j).collect());
    }
    Ok(neighbors)
}

/// KNN adjacency with edge confidences exp(-||F0(i) - F0(j)||), symmetrized
/// by the OR rule, zero diagonal.
pub fn build_adjacency(f0: &Matrix, k: usize) -> Result<Matrix> {
    let neighbors = knn_neighbors(f0, k)?;
    Ok(adjacency_from_neighbors(f0, &neighbors))
}

fn adjacency_from_neighbors(f0: &Matrix, neighbors: &[Vec<usize>]) -> Matrix {
    let n = f0.rows();
    let mut a = Matrix::zeros(n, n);
    for (i, neigh) in neighbors.iter().enumerate() {
        for &j in neigh {
            let conf = (-f0.row_distance(i, j)).exp();
            a.set(i, j, conf);
            a.set(j, i, conf);
        }
    }
    a
}

/// Symmetric normalization of the self-loop form: with A~ = A + I and
/// D~ its diagonal row-sum matrix, Ahat(i,j) = A~(i,j) / sqrt(d_i * d_j).
pub fn normalize(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut degrees = vec![0.0; n];
    for (i, d) in degrees.iter_mut().enumerate() {
        *d = a.row(i).iter().sum::<f64>() + 1.0;
    }
    let mut ahat = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let tilde = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
            if tilde != 0.0 {
                ahat.set(i, j, tilde / (degrees[i] * degrees[j]).sqrt());
            }
        }
    }
    ahat
}

/// A fully built instance graph: confidences, normalization, features,
/// neighbor lists, and precomputed aggregation plans.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub id: String,
    pub label: usize,
    pub a: Matrix,
    pub ahat: Matrix,
    pub f0: Matrix,
    pub neighbors: Vec<Vec<usize>>,
    pub degrees: Vec<f64>,
    plan_normalized: Arc<AggregationPlan>,
    plan_raw: Arc<AggregationPlan>,
    plan_degree: Arc<AggregationPlan>,
    attn_normalized: Arc<AggregationPlan>,
    attn_raw: Arc<AggregationPlan>,
    attn_degree: Arc<AggregationPlan>,
}

impl BuiltGraph {
    pub fn build(graph: &WeightedGraph, k: usize) -> Result<Self> {
        let f0 = graph.w.clone();
        let neighbors = knn_neighbors(&f0, k)?;
        let a = adjacency_from_neighbors(&f0, &neighbors);
        let ahat = normalize(&a);
        let n = f0.rows();
        let degrees: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().sum::<f64>() + 1.0)
            .collect();

        let mut degree_mat = Matrix::zeros(n, n);
        for (i, &d) in degrees.iter().enumerate() {
            degree_mat.set(i, i, d);
        }

        let plan_normalized = Arc::new(matrix_plan(&ahat, &f0, false));
        let plan_raw = Arc::new(matrix_plan(&graph.w, &f0, false));
        let plan_degree = Arc::new(matrix_plan(&degree_mat, &f0, false));
        let attn_normalized = Arc::new(matrix_plan(&ahat, &f0, true));
        let attn_raw = Arc::new(matrix_plan(&graph.w, &f0, true));
        let attn_degree = Arc::new(matrix_plan(&degree_mat, &f0, true));

        Ok(Self {
            id: graph.id.clone(),
            label: graph.label,
            a,
            ahat,
            f0,
            neighbors,
            degrees,
            plan_normalized,
            plan_raw,
            plan_degree,
            attn_normalized,
            attn_raw,
            attn_degree,
        })
    }

    /// Builds from an explicit adjacency instead of running KNN; used for
    /// fixtures and for re-assembling graphs whose adjacency is stored.
    pub fn from_adjacency(
        id: impl Into<String>,
        label: usize,
        a: Matrix,
        f0: Matrix,
    ) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() != f0.rows() {
            return Err(Error::invalid("adjacency and features disagree on node count"));
        }
        let n = a.rows();
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| a.get(i, j) > 0.0 && j != i).collect())
            .collect();
        let ahat = normalize(&a);
        let degrees: Vec<f64> = (0..n)
            .map(|i| a.row(i).iter().sum::<f64>() + 1.0)
            .collect();
        let mut degree_mat = Matrix::zeros(n, n);
        for (i, &d) in degrees.iter().enumerate() {
            degree_mat.set(i, i, d);
        }
        let plan_normalized = Arc::new(matrix_plan(&ahat, &f0, false));
        let plan_raw = Arc::new(matrix_plan(&f0, &f0, false));
        let plan_degree = Arc::new(matrix_plan(&degree_mat, &f0, false));
        let attn_normalized = Arc::new(matrix_plan(&ahat, &f0, true));
        let attn_raw = Arc::new(matrix_plan(&f0, &f0, true));
        let attn_degree = Arc::new(matrix_plan(&degree_mat, &f0, true));
        Ok(Self {
            id: id.into(),
            label,
            a,
            ahat,
            f0,
            neighbors,
            degrees,
            plan_normalized,
            plan_raw,
            plan_degree,
            attn_normalized,
            attn_raw,
            attn_degree,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.f0.rows()
    }

    /// Flattened normalized adjacency: the meta-policy's state payload.
    pub fn state_payload(&self) -> Vec<f64> {
        self.ahat.data().to_vec()
    }

    /// Row sums of the normalized adjacency: the compact state payload for
    /// very large n.
    pub fn state_row_sums(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| self.ahat.row(i).iter().sum())
            .collect()
    }

    pub fn aggregation_plan(&self, mode: InputMode) -> Arc<AggregationPlan> {
        match mode {
            InputMode::Normalized => Arc::clone(&self.plan_normalized),
            InputMode::Raw => Arc::clone(&self.plan_raw),
            InputMode::Degree => Arc::clone(&self.plan_degree),
        }
    }

    /// Neighborhoods for attention: support of the mode's matrix with the
    /// node itself always included.
    pub fn attention_plan(&self, mode: InputMode) -> Arc<AggregationPlan> {
        match mode {
            InputMode::Normalized => Arc::clone(&self.attn_normalized),
            InputMode::Raw => Arc::clone(&self.attn_raw),
            InputMode::Degree => Arc::clone(&self.attn_degree),
        }
    }
}

/// Per-node support lists of `m`, self included when `ensure_self`, in a
/// canonical order: sorted by weight, then by the feature row of the
/// neighbor. The order is a function of values only, so relabeled graphs
/// replay identical float reductions.
fn matrix_plan(m: &Matrix, f0: &Matrix, ensure_self: bool) -> AggregationPlan {
    let n = m.rows();
    let mut per_node = Vec::with_capacity(n);
    for i in 0..n {
        let mut entries: Vec<(usize, f64)> = m
            .row(i)
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(j, &w)| (j, w))
            .collect();
        if ensure_self && !entries.iter().any(|&(j, _)| j == i) {
            entries.push((i, m.get(i, i)));
        }
        entries.sort_by(|a, b| {
            a.1.total_cmp(&b.1).then_with(|| {
                for (x, y) in f0.row(a.0).iter().zip(f0.row(b.0)) {
                    match x.total_cmp(y) {
                        std::cmp::Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                std::cmp::Ordering::Equal
            })
        });
        per_node.push(entries);
    }
    AggregationPlan { per_node }
}

/// Coarse graph over whole subjects: nodes are instances, features are the
/// flattened weighted matrices, edges come from the same KNN construction.
#[derive(Debug, Clone)]
pub struct SubjectGraph {
    pub ids: Vec<String>,
    pub adjacency: Matrix,
    pub neighbors: Vec<Vec<usize>>,
}

impl SubjectGraph {
    pub fn num_subjects(&self) -> usize {
        self.ids.len()
    }

    /// Indices at BFS distance exactly `h` from `from`.
    pub fn hop_frontier(&self, from: usize, h: usize) -> Vec<usize> {
        let n = self.num_subjects();
        let mut dist = vec![usize::MAX; n];
        dist[from] = 0;
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            if dist[u] >= h {
                continue;
            }
            for j in 0..n {
                if self.adjacency.get(u, j) > 0.0 && dist[j] == usize::MAX {
                    dist[j] = dist[u] + 1;
                    queue.push_back(j);
                }
            }
        }
        (0..n).filter(|&j| dist[j] == h && j != from).collect()
    }
}

/// Builds the subject graph from a set of instances (training + validation
/// only; the meta-policy must never walk onto test subjects).
pub fn build_subject_graph(graphs: &[&WeightedGraph], k: usize) -> Result<SubjectGraph> {
    if graphs.len() < 2 {
        return Err(Error::invalid(format!(
            "subject graph needs at least 2 instances, got {}",
            graphs.len()
        )));
    }
    let n = graphs[0].num_nodes();
    if graphs.iter().any(|g| g.num_nodes() != n) {
        return Err(Error::invalid("instances disagree on node count"));
    }
    let m = graphs.len();
    let flat_len = n * n;
    let mut features = Matrix::zeros(m, flat_len);
    for (i, g) in graphs.iter().enumerate() {
        features.row_mut(i).copy_from_slice(g.w.data());
    }
    let k = k.min(m - 1).max(1);
    let neighbors = knn_neighbors(&features, k)?;
    let adjacency = adjacency_from_neighbors(&features, &neighbors);
    Ok(SubjectGraph {
        ids: graphs.iter().map(|g| g.id.clone()).collect(),
        adjacency,
        neighbors,
    })
}
