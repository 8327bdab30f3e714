use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::propagate::{HeteroHopStack, HopStack};
use crate::error::{GwmError, Result};
use crate::graph::NodeId;
use crate::scalar::Scalar;

/// Elementwise nonlinearity applied after each affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = σ(z)`.
    pub fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Identity => T::one(),
        }
    }
}

/// `x ↦ W x + b` with `W: d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Per-hop cross-modal fusion projector: one affine map per hop index `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T> {
    layers: Vec<AffineMap<T>>,
    activation: Activation,
}

impl<T: Scalar> Projector<T> {
    pub fn new(layers: Vec<AffineMap<T>>, activation: Activation) -> Result<Self> {
        let first = layers.first().ok_or_else(|| GwmError::ShapeMismatch("projector has no layers".into()))?;
        let (d_out, d_in) = first.weight.dim();
        if d_out == 0 || d_in == 0 {
            return Err(GwmError::ShapeMismatch("projector dimensions must be positive".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weight.dim() != (d_out, d_in) || layer.bias.len() != d_out {
                return Err(GwmError::ShapeMismatch(format!("layer {l} does not match {d_out}x{d_in}")));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(GwmError::InvalidArgument(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn zeros(hops: usize, d_in: usize, d_out: usize, activation: Activation) -> Self {
        let layers = (0..=hops)
            .map(|_| AffineMap { weight: Array2::zeros((d_out, d_in)), bias: Array1::zeros(d_out) })
            .collect();
        Self { layers, activation }
    }

    /// Uniform Glorot initialization from a ChaCha8 stream; biases start at zero.
    pub fn random(hops: usize, d_in: usize, d_out: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (6.0 / (d_in + d_out) as f64).sqrt();
        let layers = (0..=hops)
            .map(|_| AffineMap {
                weight: Array2::from_shape_simple_fn((d_out, d_in), || T::of(rng.random_range(-bound..bound))),
                bias: Array1::zeros(d_out),
            })
            .collect();
        Self { layers, activation }
    }

    pub fn layers(&self) -> &[AffineMap<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [AffineMap<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of hops `L`; there are `L + 1` maps.
    pub fn hops(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.len() * (self.d_out() * self.d_in() + self.d_out())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// `σ(W_l x + b_l)`.
    pub fn forward(&self, hop: usize, x: &Array1<T>) -> Array1<T> {
        let layer = &self.layers[hop];
        let act = self.activation;
        (layer.weight.dot(x) + &layer.bias).mapv(|z| act.apply(z))
    }
}

/// Node set of a graph-level scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphTargets {
    All,
    Nodes(Vec<NodeId>),
}

/// What a set of graph tokens describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScope {
    Node(NodeId),
    /// Both endpoints; tokens of the first endpoint precede those of the second.
    Edge(NodeId, NodeId),
    /// Rows are mean-pooled per hop before projection.
    Graph(GraphTargets),
}

/// Fused decoder-space tokens `X_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTokens<T> {
    pub tokens: Vec<Array1<T>>,
    pub d_out: usize,
}

impl<T: Scalar> GraphTokens<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Wire form: one `f32` array per token.
    pub fn to_f32(&self) -> Vec<Vec<f32>> {
        self.tokens.iter().map(|t| t.iter().map(|v| v.to_f32_lossy()).collect()).collect()
    }
}

fn resolve(stack: &HopStack<impl Scalar>, id: &NodeId) -> Result<usize> {
    stack
        .index_of(id.as_str())
        .ok_or_else(|| GwmError::ScopeUnresolved(format!("node `{id}` is not in the hop stack")))
}

/// Projector inputs for a scope as `(hop index, input row)` in token order.
pub fn scope_inputs<T: Scalar>(stack: &HopStack<T>, scope: &TargetScope) -> Result<Vec<(usize, Array1<T>)>> {
    let per_node = |i: usize| -> Vec<(usize, Array1<T>)> {
        stack.hops().iter().enumerate().map(|(l, h)| (l, h.row(i).to_owned())).collect()
    };
    match scope {
        TargetScope::Node(id) => Ok(per_node(resolve(stack, id)?)),
        TargetScope::Edge(a, b) => {
            let (i, j) = (resolve(stack, a)?, resolve(stack, b)?);
            let mut out = per_node(i);
            out.extend(per_node(j));
            Ok(out)
        }
        TargetScope::Graph(targets) => {
            let rows: Vec<usize> = match targets {
                GraphTargets::All => (0..stack.len()).collect(),
                GraphTargets::Nodes(ids) => ids.iter().map(|id| resolve(stack, id)).collect::<Result<_>>()?,
            };
            if rows.is_empty() {
                return Err(GwmError::ScopeUnresolved("graph scope selects no nodes".into()));
            }
            let count = T::of(rows.len() as f64);
            Ok(stack
                .hops()
                .iter()
                .enumerate()
                .map(|(l, h)| {
                    let mut sum = Array1::<T>::zeros(h.ncols());
                    for &r in &rows {
                        sum = sum + h.row(r);
                    }
                    (l, sum.mapv(|v| v / count))
                })
                .collect())
        }
    }
}

fn check_dims<T: Scalar>(stack: &HopStack<T>, projector: &Projector<T>) -> Result<()> {
    if stack.dim() != projector.d_in() {
        return Err(GwmError::ShapeMismatch(format!(
            "hop stack width {} but projector input {}",
            stack.dim(),
            projector.d_in()
        )));
    }
    if stack.depth() > projector.hops() {
        return Err(GwmError::ShapeMismatch(format!(
            "hop stack has {} hops but projector only {}",
            stack.depth(),
            projector.hops()
        )));
    }
    Ok(())
}

/// `X_c^(l) = σ(W_l · x^(l) + b_l)` for every hop of the scope.
pub fn fuse<T: Scalar>(stack: &HopStack<T>, projector: &Projector<T>, scope: &TargetScope) -> Result<GraphTokens<T>> {
    check_dims(stack, projector)?;
    let tokens = scope_inputs(stack, scope)?
        .into_iter()
        .map(|(l, x)| projector.forward(l, &x))
        .collect();
    Ok(GraphTokens { tokens, d_out: projector.d_out() })
}

/// Fuses each edge type separately and flattens the tokens into one sequence.
pub fn fuse_heterogeneous<T: Scalar>(
    stack: &HeteroHopStack<T>,
    projector: &Projector<T>,
    scope: &TargetScope,
) -> Result<GraphTokens<T>> {
    let mut tokens = Vec::new();
    for (_, s) in &stack.per_type {
        tokens.extend(fuse(s, projector, scope)?.tokens);
    }
    Ok(GraphTokens { tokens, d_out: projector.d_out() })
}
