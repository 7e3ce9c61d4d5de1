//! Finite quotient graphs with transition probabilities and group-valued
//! voltages.
//!
//! A [`VoltageGraph`] stores oriented edges together with the index of their
//! reverse edge. Traversing an edge multiplies the running deck element by the
//! edge voltage, which is how the infinite covering graph is represented
//! without ever being built.

mod presets;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_algebra::{AlgebraError, GroupElement, StratifiedAlgebra};

pub use presets::{heisenberg_cayley, hexagonal, z1_biased, z1_subdivided, zd_lattice, zd_weighted};

/// Tolerance on row sums of the transition kernel.
const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on `γ(ē) = γ(e)⁻¹`.
const VOLTAGE_TOL: f64 = 1e-12;
/// Graphs up to this many vertices get a dense stationary solve.
const DENSE_LIMIT: usize = 512;
const POWER_TOL: f64 = 1e-14;
const POWER_MAX_ITER: usize = 10_000_000;
/// Threshold of `max |m̃(e) − m̃(ē)|` for m-symmetry.
pub const SYMMETRY_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("edge {edge}: {reason}")]
    MalformedEdge { edge: usize, reason: String },
    #[error("transition probabilities at vertex {vertex}: {reason}")]
    StochasticityViolation { vertex: usize, reason: String },
    #[error("edge {edge}: inverse pairing is not a fixpoint-free involution reversing endpoints")]
    InvolutionViolation { edge: usize },
    #[error("edge {edge}: voltage of the inverse edge is not the group inverse")]
    VoltageInverseViolation { edge: usize },
    #[error("vertex {vertex} is not mutually reachable from vertex 0")]
    NotStronglyConnected { vertex: usize },
    #[error("linear system is singular: {0}")]
    SingularSystem(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// An oriented edge `e` of the quotient graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Origin `o(e)`.
    pub o: usize,
    /// Terminus `t(e)`.
    pub t: usize,
    /// Index of the reverse edge `ē`.
    pub inv: usize,
    /// Transition probability `p(e)`.
    pub p: f64,
    /// Voltage `γ(e)` in log-coordinates.
    pub voltage: GroupElement,
}

/// A finite graph `X₀` whose Γ-covering is encoded by edge voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageGraph {
    algebra: StratifiedAlgebra,
    vertices: usize,
    edges: Vec<Edge>,
    /// Outgoing edge indices per vertex, ascending.
    out_edges: Vec<Vec<usize>>,
}

impl VoltageGraph {
    /// Builds and validates a graph.
    pub fn new(
        algebra: StratifiedAlgebra,
        vertices: usize,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        if vertices == 0 {
            return Err(GraphError::Empty);
        }
        for (i, e) in edges.iter().enumerate() {
            if e.o >= vertices || e.t >= vertices {
                return Err(GraphError::MalformedEdge {
                    edge: i,
                    reason: format!("endpoint out of range for {vertices} vertices"),
                });
            }
            if e.inv >= edges.len() {
                return Err(GraphError::InvolutionViolation { edge: i });
            }
            if e.voltage.len() != algebra.dim() {
                return Err(GraphError::MalformedEdge {
                    edge: i,
                    reason: format!(
                        "voltage has {} coordinates, algebra dimension is {}",
                        e.voltage.len(),
                        algebra.dim()
                    ),
                });
            }
        }
        let mut out_edges = vec![Vec::new(); vertices];
        for (i, e) in edges.iter().enumerate() {
            out_edges[e.o].push(i);
        }
        let graph = VoltageGraph {
            algebra,
            vertices,
            edges,
            out_edges,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Checks every structural invariant, naming the first offending vertex
    /// or edge.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (x, out) in self.out_edges.iter().enumerate() {
            if out.is_empty() {
                return Err(GraphError::StochasticityViolation {
                    vertex: x,
                    reason: "no outgoing edges".into(),
                });
            }
            let mut sum = 0.0;
            for &i in out {
                let p = self.edges[i].p;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(GraphError::StochasticityViolation {
                        vertex: x,
                        reason: format!("edge {i} has probability {p} outside (0, 1]"),
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(GraphError::StochasticityViolation {
                    vertex: x,
                    reason: format!("outgoing probabilities sum to {sum}"),
                });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let r = &self.edges[e.inv];
            if e.inv == i || r.inv != i || r.o != e.t || r.t != e.o {
                return Err(GraphError::InvolutionViolation { edge: i });
            }
            let defect = e
                .voltage
                .coords()
                .iter()
                .zip(r.voltage.coords())
                .map(|(a, b)| (a + b).abs())
                .fold(0.0, f64::max);
            if defect > VOLTAGE_TOL {
                return Err(GraphError::VoltageInverseViolation { edge: i });
            }
        }
        let forward = self.reachable_from_zero(false);
        let backward = self.reachable_from_zero(true);
        if let Some(x) = (0..self.vertices).find(|&x| !forward[x] || !backward[x]) {
            return Err(GraphError::NotStronglyConnected { vertex: x });
        }
        Ok(())
    }

    fn reachable_from_zero(&self, reversed: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.vertices];
        for e in &self.edges {
            if reversed {
                adj[e.t].push(e.o);
            } else {
                adj[e.o].push(e.t);
            }
        }
        let mut seen = vec![false; self.vertices];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    pub fn algebra(&self) -> &StratifiedAlgebra {
        &self.algebra
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    /// Outgoing edges of `x` in ascending index order.
    pub fn out_edges(&self, x: usize) -> &[usize] {
        &self.out_edges[x]
    }

    /// Indices of one edge per inverse pair (the one with the smaller index).
    pub fn representative_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(i, e)| *i < e.inv)
            .map(|(i, _)| i)
    }

    /// First Betti number `|E₀|/2 − |V₀| + 1`.
    pub fn betti_number(&self) -> usize {
        self.edges.len() / 2 + 1 - self.vertices
    }

    /// Vertex transition matrix `P[x][y] = Σ_{o(e)=x, t(e)=y} p(e)`.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.vertices;
        let mut p = DMatrix::zeros(n, n);
        for e in &self.edges {
            p[(e.o, e.t)] += e.p;
        }
        p
    }

    /// The same graph with vertices renamed by `perm[old] = new`; edge order
    /// is kept.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                o: perm[e.o],
                t: perm[e.t],
                ..e.clone()
            })
            .collect();
        VoltageGraph::new(self.algebra.clone(), self.vertices, edges)
    }
}

/// Stationary distribution `m` and edge measure `m̃(e) = p(e) m(o(e))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasure {
    pub m: Vec<f64>,
    pub m_tilde: Vec<f64>,
}

/// The unique stationary distribution of the quotient chain.
pub fn invariant_measure(graph: &VoltageGraph) -> Result<InvariantMeasure, GraphError> {
    let n = graph.vertex_count();
    let m = if n <= DENSE_LIMIT {
        stationary_dense(graph)?
    } else {
        stationary_power(graph)?
    };
    let m_tilde = graph.edges().iter().map(|e| e.p * m[e.o]).collect();
    Ok(InvariantMeasure { m, m_tilde })
}

/// Solves `(Pᵀ − I) m = 0` with the last equation replaced by `Σ m = 1`.
fn stationary_dense(graph: &VoltageGraph) -> Result<Vec<f64>, GraphError> {
    let n = graph.vertex_count();
    let p = graph.transition_matrix();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let m = a
        .lu()
        .solve(&b)
        .ok_or_else(|| GraphError::SingularSystem("stationary equations".into()))?;
    if m.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(GraphError::SingularSystem(
            "stationary solution is not positive".into(),
        ));
    }
    Ok(m.iter().copied().collect())
}

/// Power iteration on the lazy chain `(I + P)/2`, which has the same
/// stationary law and is aperiodic.
fn stationary_power(graph: &VoltageGraph) -> Result<Vec<f64>, GraphError> {
    let n = graph.vertex_count();
    let mut m = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITER {
        next.iter_mut().zip(&m).for_each(|(a, b)| *a = 0.5 * b);
        for e in graph.edges() {
            next[e.t] += 0.5 * e.p * m[e.o];
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&m).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut m, &mut next);
        if change <= POWER_TOL {
            return Ok(m);
        }
    }
    Err(GraphError::SingularSystem(
        "power iteration did not converge".into(),
    ))
}

/// A real 1-chain, one coefficient per oriented edge, antisymmetric under
/// reversal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneChain {
    pub coeff: Vec<f64>,
}

impl OneChain {
    /// Net flux into each vertex, counting each inverse pair once.
    pub fn boundary(&self, graph: &VoltageGraph) -> Vec<f64> {
        let mut b = vec![0.0; graph.vertex_count()];
        for i in graph.representative_edges() {
            let e = graph.edge(i);
            b[e.t] += self.coeff[i];
            b[e.o] -= self.coeff[i];
        }
        b
    }

    pub fn max_abs(&self) -> f64 {
        self.coeff.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// The homological direction `γₚ = Σ m̃(e) e`, written antisymmetrically as
/// `coeff(e) = m̃(e) − m̃(ē)`.
pub fn homological_direction(graph: &VoltageGraph, meas: &InvariantMeasure) -> OneChain {
    let coeff = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| meas.m_tilde[i] - meas.m_tilde[e.inv])
        .collect();
    OneChain { coeff }
}

/// Whether `m̃(e) = m̃(ē)` on every edge, up to [`SYMMETRY_TOL`].
pub fn is_symmetric(graph: &VoltageGraph, meas: &InvariantMeasure) -> bool {
    graph
        .edges()
        .iter()
        .enumerate()
        .all(|(i, e)| (meas.m_tilde[i] - meas.m_tilde[e.inv]).abs() <= SYMMETRY_TOL)
}

/// A spanning tree and the fundamental cycles of the remaining edge pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomologyBasis {
    /// Tree edges, each oriented away from vertex 0.
    pub spanning_tree: Vec<usize>,
    /// Integer 1-cycles, antisymmetric, one coefficient per oriented edge.
    pub cycles: Vec<Vec<i64>>,
}

impl HomologyBasis {
    pub fn dimension(&self) -> usize {
        self.cycles.len()
    }
}

/// Boundary of an integer chain, counting each inverse pair once.
pub fn integer_boundary(graph: &VoltageGraph, chain: &[i64]) -> Vec<i64> {
    let mut b = vec![0; graph.vertex_count()];
    for i in graph.representative_edges() {
        let e = graph.edge(i);
        b[e.t] += chain[i];
        b[e.o] -= chain[i];
    }
    b
}

/// Breadth-first spanning tree from vertex 0, scanning edges by ascending
/// index, and one fundamental cycle per non-tree edge pair.
pub fn cycle_basis(graph: &VoltageGraph) -> HomologyBasis {
    let n = graph.vertex_count();
    let mut parent_edge: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut in_tree = vec![false; graph.edges().len()];
    let mut spanning_tree = Vec::with_capacity(n.saturating_sub(1));
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(x) = queue.pop_front() {
        for &i in graph.out_edges(x) {
            let e = graph.edge(i);
            if !seen[e.t] {
                seen[e.t] = true;
                parent_edge[e.t] = Some(i);
                in_tree[i] = true;
                in_tree[e.inv] = true;
                spanning_tree.push(i);
                queue.push_back(e.t);
            }
        }
    }

    let add = |chain: &mut Vec<i64>, i: usize, c: i64| {
        chain[i] += c;
        chain[graph.edge(i).inv] -= c;
    };
    let mut cycles = Vec::new();
    for i in graph.representative_edges() {
        if in_tree[i] {
            continue;
        }
        let e = graph.edge(i);
        let mut chain = vec![0; graph.edges().len()];
        add(&mut chain, i, 1);
        // t(e) back to the root, then the root out to o(e)
        let mut v = e.t;
        while let Some(pe) = parent_edge[v] {
            add(&mut chain, pe, -1);
            v = graph.edge(pe).o;
        }
        let mut v = e.o;
        while let Some(pe) = parent_edge[v] {
            add(&mut chain, pe, 1);
            v = graph.edge(pe).o;
        }
        cycles.push(chain);
    }
    HomologyBasis {
        spanning_tree,
        cycles,
    }
}

/// Samples outgoing edges by inverting cumulative probability tables.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    edges: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl TransitionSampler {
    pub fn new(graph: &VoltageGraph) -> Self {
        let edges: Vec<Vec<usize>> = (0..graph.vertex_count())
            .map(|x| graph.out_edges(x).to_vec())
            .collect();
        let cumulative = edges
            .iter()
            .map(|out| {
                let mut acc = 0.0;
                out.iter()
                    .map(|&i| {
                        acc += graph.edge(i).p;
                        acc
                    })
                    .collect()
            })
            .collect();
        TransitionSampler { edges, cumulative }
    }

    /// The edge leaving `x` selected by a uniform draw `u ∈ [0, 1)`.
    #[inline]
    pub fn pick(&self, x: usize, u: f64) -> usize {
        let cum = &self.cumulative[x];
        let out = &self.edges[x];
        for (k, &c) in cum.iter().enumerate() {
            if u < c {
                return out[k];
            }
        }
        out[out.len() - 1]
    }
}
