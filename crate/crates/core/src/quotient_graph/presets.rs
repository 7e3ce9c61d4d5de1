//! Standard quotient graphs.

use super::{Edge, GraphError, VoltageGraph};
use crate::group_algebra::{GroupElement, StratifiedAlgebra};

/// Appends the pair `e`, `ē` with the given probabilities.
fn push_pair(
    edges: &mut Vec<Edge>,
    alg: &StratifiedAlgebra,
    (o, t): (usize, usize),
    voltage: GroupElement,
    p: f64,
    p_inv: f64,
) {
    let i = edges.len();
    let inv = alg.group_inverse(&voltage);
    edges.push(Edge { o, t, inv: i + 1, p, voltage });
    edges.push(Edge { o: t, t: o, inv: i, p: p_inv, voltage: inv });
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

/// `ℤᵈ` on one vertex with loop pairs `±eᵢ` taken with probabilities
/// `probs[i] = (p(+eᵢ), p(−eᵢ))`.
pub fn zd_weighted(probs: &[(f64, f64)]) -> Result<VoltageGraph, GraphError> {
    let d = probs.len();
    let alg = StratifiedAlgebra::abelian(d)?;
    let mut edges = Vec::with_capacity(2 * d);
    for (i, &(plus, minus)) in probs.iter().enumerate() {
        let g = alg.horizontal(&unit(d, i))?;
        push_pair(&mut edges, &alg, (0, 0), g, plus, minus);
    }
    VoltageGraph::new(alg, 1, edges)
}

/// Simple random walk on `ℤᵈ`.
pub fn zd_lattice(d: usize) -> Result<VoltageGraph, GraphError> {
    let p = 1.0 / (2 * d) as f64;
    zd_weighted(&vec![(p, p); d])
}

/// Walk on `ℤ` stepping `+1` with probability `q` and `−1` otherwise.
pub fn z1_biased(q: f64) -> Result<VoltageGraph, GraphError> {
    zd_weighted(&[(q, 1.0 - q)])
}

/// Hexagonal lattice: two vertices joined by three edges whose voltages are
/// `(1,0)`, `(0,1)`, `(−1,−1)`, all with probability 1/3.
pub fn hexagonal() -> VoltageGraph {
    let alg = StratifiedAlgebra::abelian(2).expect("nonempty layer");
    let mut edges = Vec::with_capacity(6);
    let third = 1.0 / 3.0;
    for v in [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]] {
        let g = alg.horizontal(&v).expect("first-layer vector");
        push_pair(&mut edges, &alg, (0, 1), g, third, third);
    }
    // push_pair interleaves e and ē; reorder so A→B edges come first
    let order = [0, 2, 4, 1, 3, 5];
    let mut position = [0; 6];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let edges = order
        .iter()
        .map(|&old| {
            let e = &edges[old];
            Edge { inv: position[e.inv], ..e.clone() }
        })
        .collect();
    VoltageGraph::new(alg, 2, edges).expect("valid preset")
}

/// Simple random walk on the Cayley graph of the discrete Heisenberg group
/// with generators `exp(±X)`, `exp(±Y)`.
pub fn heisenberg_cayley() -> VoltageGraph {
    let alg = StratifiedAlgebra::heisenberg();
    let mut edges = Vec::with_capacity(4);
    for i in 0..2 {
        let g = alg.horizontal(&unit(2, i)).expect("first-layer vector");
        push_pair(&mut edges, &alg, (0, 0), g, 0.25, 0.25);
    }
    VoltageGraph::new(alg, 1, edges).expect("valid preset")
}

/// `ℤ` with every unit interval subdivided: vertices `A = 0`, `B = 1`, an
/// edge `A→B` with trivial voltage and an edge `B→A` with voltage `+1`, all
/// probabilities ½.
pub fn z1_subdivided() -> VoltageGraph {
    let alg = StratifiedAlgebra::abelian(1).expect("nonempty layer");
    let mut edges = Vec::with_capacity(4);
    push_pair(&mut edges, &alg, (0, 1), alg.identity(), 0.5, 0.5);
    let one = alg.horizontal(&[1.0]).expect("first-layer vector");
    push_pair(&mut edges, &alg, (1, 0), one, 0.5, 0.5);
    VoltageGraph::new(alg, 2, edges).expect("valid preset")
}
