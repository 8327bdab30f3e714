//! Hop ablation: how far embedding propagation helps a linear probe on synthetic
//! graphs with planted labels.

use std::io::Write;

use nalgebra::DMatrix;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::edges::normalize_adjacency;
use crate::embed::propagate;
use crate::error::{GwmError, Result};
use crate::graph::{AdjacencyWeighting, Edge, EdgeKind, GraphOptions, GraphState, MultiModalNode};

/// Ridge penalty of the default probe.
pub const RIDGE_LAMBDA: f64 = 1e-3;

fn default_train_fraction() -> f64 {
    0.5
}

/// Synthetic graph with features and planted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticGraphSpec {
    /// No edges; the label is the sign of feature 0.
    OwnSign {
        nodes: usize,
        dim: usize,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    /// A 3-regular circulant graph joining `i` to `i ± 1` and `i + nodes/2`. Every node
    /// has a latent sign written into feature 0 with Gaussian noise; its label is the
    /// majority sign of its three neighbours, so its own features carry no signal.
    NeighborhoodMajority {
        nodes: usize,
        dim: usize,
        noise: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

/// A generated instance: node `i` of `state` owns feature row `i` and label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    pub state: GraphState,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SyntheticGraphSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticGraphSpec::OwnSign { .. } => "own_sign",
            SyntheticGraphSpec::NeighborhoodMajority { .. } => "neighborhood_majority",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SyntheticFixture> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nodes, dim, train_fraction) = match *self {
            SyntheticGraphSpec::OwnSign { nodes, dim, train_fraction } => (nodes, dim, train_fraction),
            SyntheticGraphSpec::NeighborhoodMajority { nodes, dim, train_fraction, .. } => (nodes, dim, train_fraction),
        };
        if dim == 0 || nodes < 4 || !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(GwmError::InvalidArgument(format!("unusable fixture parameters {self:?}")));
        }
        let mut features = Array2::<f64>::zeros((nodes, dim));
        features.mapv_inplace(|_| rng.sample(StandardNormal));
        let mut edit = GraphState::new(GraphOptions::default()).edit();
        for i in 0..nodes {
            let id = format!("v{i:04}");
            edit.add_node(MultiModalNode::text_node(id.as_str(), id.as_str()))?;
        }
        let labels: Vec<usize> = match *self {
            SyntheticGraphSpec::OwnSign { .. } => features.column(0).iter().map(|&x| usize::from(x > 0.0)).collect(),
            SyntheticGraphSpec::NeighborhoodMajority { noise, .. } => {
                if nodes % 4 != 0 {
                    // n/2 must be even, otherwise the circulant graph is bipartite
                    return Err(GwmError::InvalidArgument("neighborhood fixture needs a node count divisible by 4".into()));
                }
                let latent: Vec<bool> = (0..nodes).map(|_| rng.random_bool(0.5)).collect();
                let neighbours = |i: usize| [(i + 1) % nodes, (i + nodes - 1) % nodes, (i + nodes / 2) % nodes];
                for i in 0..nodes {
                    features[[i, 0]] = if latent[i] { 1.0 } else { -1.0 } + noise * features[[i, 0]];
                    for j in 1..dim {
                        features[[i, j]] *= noise;
                    }
                    for j in neighbours(i) {
                        if i < j {
                            edit.add_edge(Edge::explicit(format!("v{i:04}"), format!("v{j:04}")))?;
                        }
                    }
                }
                (0..nodes)
                    .map(|i| usize::from(neighbours(i).iter().filter(|&&j| latent[j]).count() >= 2))
                    .collect()
            }
        };
        let mut order: Vec<usize> = (0..nodes).collect();
        order.shuffle(&mut rng);
        let cut = ((nodes as f64) * train_fraction).round() as usize;
        let (mut train, mut test) = (order[..cut].to_vec(), order[cut..].to_vec());
        train.sort_unstable();
        test.sort_unstable();
        Ok(SyntheticFixture { state: edit.commit(), features, labels, train, test })
    }
}

/// Trains on labelled rows and predicts class indices for unlabelled rows.
pub trait LinearProbe {
    fn fit_predict(&self, train_x: ArrayView2<'_, f64>, train_y: &[usize], classes: usize, test_x: ArrayView2<'_, f64>) -> Result<Vec<usize>>;
}

/// Least squares on one-hot targets with an intercept column, closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeProbe {
    pub lambda: f64,
}

impl Default for RidgeProbe {
    fn default() -> Self {
        Self { lambda: RIDGE_LAMBDA }
    }
}

fn with_intercept(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |i, j| if j == x.ncols() { 1.0 } else { x[[i, j]] })
}

/// `W = (FᵀF + λI)⁻¹ FᵀY`.
pub fn ridge_fit(f: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let p = f.ncols();
    let gram = f.transpose() * f + DMatrix::<f64>::identity(p, p) * lambda;
    let rhs = f.transpose() * y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| GwmError::InvalidArgument("ridge system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

impl LinearProbe for RidgeProbe {
    fn fit_predict(&self, train_x: ArrayView2<'_, f64>, train_y: &[usize], classes: usize, test_x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let f = with_intercept(train_x);
        let y = DMatrix::from_fn(train_y.len(), classes, |i, c| if train_y[i] == c { 1.0 } else { 0.0 });
        let w = ridge_fit(&f, &y, self.lambda)?;
        let scores = with_intercept(test_x) * w;
        Ok((0..scores.nrows()).map(|i| scores.row(i).transpose().argmax().0).collect())
    }
}

/// One line of the ablation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub task: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

impl AblationRow {
    /// Writes rows as CSV with header `task,L,metric,value,seed`.
    pub fn write_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            w.serialize(r).map_err(|e| GwmError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Held-out probe accuracy on `[X, ÃX, …, Ã^L X]` for every `L` in `hops`.
pub fn hop_ablation(spec: &SyntheticGraphSpec, hops: &[usize], probe: &dyn LinearProbe, seed: u64) -> Result<Vec<AblationRow>> {
    let max = *hops.iter().max().ok_or_else(|| GwmError::InvalidArgument("no hop counts given".into()))?;
    let fx = spec.generate(seed)?;
    let classes = fx.labels.iter().max().map_or(0, |m| m + 1);
    let train_y: Vec<usize> = fx.train.iter().map(|&i| fx.labels[i]).collect();
    let distinct = |ys: &[usize]| ys.iter().collect::<std::collections::BTreeSet<_>>().len();
    if distinct(&fx.labels) < 2 || distinct(&train_y) < 2 {
        return Err(GwmError::DegenerateFixture(format!("{} seed {seed} has a single class", spec.name())));
    }
    let adj = fx.state.adjacency::<f64>(&EdgeKind::ALL, None, AdjacencyWeighting::Binary)?;
    let stack = propagate(fx.features.view(), &normalize_adjacency(&adj)?, max)?;
    hops.iter()
        .map(|&l| {
            let views: Vec<_> = stack.hops()[..=l].iter().map(|h| h.view()).collect();
            let feats = concatenate(Axis(1), &views).expect("hop matrices share a row count");
            let pred = probe.fit_predict(
                select_rows(&feats, &fx.train).view(),
                &train_y,
                classes,
                select_rows(&feats, &fx.test).view(),
            )?;
            let correct = pred.iter().zip(&fx.test).filter(|(p, &i)| **p == fx.labels[i]).count();
            Ok(AblationRow {
                task: spec.name().to_string(),
                l,
                metric: "accuracy".to_string(),
                value: correct as f64 / fx.test.len() as f64,
                seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_recovers_exact_linear_map() {
        let f = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let w_true = DMatrix::from_row_slice(2, 1, &[3.0, -2.0]);
        let w = ridge_fit(&f, &(&f * &w_true), 0.0).unwrap();
        assert!((w - w_true).abs().max() < 1e-12);
    }

    #[test]
    fn majority_labels_follow_neighbours() {
        let spec = SyntheticGraphSpec::NeighborhoodMajority { nodes: 16, dim: 2, noise: 0.0, train_fraction: 0.5 };
        let fx = spec.generate(3).unwrap();
        assert_eq!(fx.state.edge_count(), 24);
        let n = fx.state.neighbor_lists();
        for (i, nb) in n.iter().enumerate() {
            let pos = nb.iter().filter(|&&j| fx.features[[j, 0]] > 0.0).count();
            assert_eq!(fx.labels[i], usize::from(pos >= 2));
        }
    }

    #[test]
    fn csv_header() {
        let rows = vec![AblationRow { task: "t".into(), l: 2, metric: "accuracy".into(), value: 0.5, seed: 7 }];
        let mut out = Vec::new();
        AblationRow::write_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "task,L,metric,value,seed\nt,2,accuracy,0.5,7\n");
    }
}
