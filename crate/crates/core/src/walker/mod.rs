//! Simulation of the lifted walk and its rescaled path processes.
//!
//! The walk state is a quotient vertex together with the running deck
//! element. Crossing edge `e` multiplies the deck element on the right by
//! `γ(e)`; the realized position is
//! `ξₙ = Φ(w₀)⁻¹ · deck · Φ(wₙ)`, normalized so that `ξ₀` is the identity.

mod scaling;

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::albanese::Realization;
use crate::group_algebra::{AlgebraError, GroupElement, GroupLaw, Scratch, StratifiedAlgebra};
use crate::quotient_graph::{TransitionSampler, VoltageGraph};
use crate::rate_functions::PiecewisePath;
use crate::streams::{install, stream_rng};

pub use scaling::{ScalingKind, ScalingSequence, LIL_MIN_N};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("scaling sequence {kind} is defined for n >= {min}, got n = {n}")]
    ScalingDomain { kind: String, n: u64, min: u64 },
    #[error("invalid scaling sequence: {0}")]
    InvalidScaling(String),
    #[error("start vertex {vertex} out of range for {count} vertices")]
    StartVertex { vertex: usize, count: usize },
    #[error("realization or direction does not match the graph: {0}")]
    Mismatch(String),
    #[error("time {0} is outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Precomputed per-edge and per-vertex data shared by all walkers on one
/// graph.
#[derive(Debug, Clone)]
pub struct WalkModel {
    alg: StratifiedAlgebra,
    sampler: TransitionSampler,
    /// `t(e)` per edge.
    terminus: Vec<usize>,
    /// Full log-coordinates of `γ(e)`.
    voltage: Vec<Vec<f64>>,
    /// `log(γ(e))|₁`.
    voltage1: Vec<Vec<f64>>,
    positions: Vec<GroupElement>,
    rho: Vec<f64>,
    /// Whether any higher layer can become nonzero along a walk.
    nonabelian: bool,
}

impl WalkModel {
    pub fn new(graph: &VoltageGraph, phi: &Realization, rho: &[f64]) -> Result<Self, WalkError> {
        let alg = graph.algebra().clone();
        if phi.positions.len() != graph.vertex_count()
            || phi.positions.iter().any(|p| p.len() != alg.dim())
        {
            return Err(WalkError::Mismatch("realization".into()));
        }
        if rho.len() != alg.first_layer_dim() {
            return Err(WalkError::Mismatch("asymptotic direction".into()));
        }
        alg.check_step()?;
        let d1 = alg.first_layer_dim();
        let voltage: Vec<Vec<f64>> = graph
            .edges()
            .iter()
            .map(|e| e.voltage.coords().to_vec())
            .collect();
        let voltage1 = voltage.iter().map(|v| v[..d1].to_vec()).collect();
        Ok(WalkModel {
            nonabelian: !alg.is_abelian(),
            sampler: TransitionSampler::new(graph),
            terminus: graph.edges().iter().map(|e| e.t).collect(),
            voltage,
            voltage1,
            positions: phi.positions.clone(),
            rho: rho.to_vec(),
            alg,
        })
    }

    pub fn algebra(&self) -> &StratifiedAlgebra {
        &self.alg
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    fn check_start(&self, start: usize) -> Result<(), WalkError> {
        if start >= self.vertex_count() {
            return Err(WalkError::StartVertex {
                vertex: start,
                count: self.vertex_count(),
            });
        }
        Ok(())
    }
}

/// A single walk advanced step by step without storing its history.
pub struct Walker<'m> {
    model: &'m WalkModel,
    rng: ChaCha8Rng,
    start: usize,
    vertex: usize,
    steps: u64,
    /// Running deck element; only its first layer is kept up to date when
    /// `full` is false.
    deck: Vec<f64>,
    full: bool,
    next: Vec<f64>,
    scratch: Scratch,
}

impl<'m> Walker<'m> {
    /// A walker tracking the full deck element.
    pub fn new(model: &'m WalkModel, start: usize, rng: ChaCha8Rng) -> Self {
        Self::build(model, start, rng, true)
    }

    /// A walker tracking first-layer data only; enough for `Ξₙ` and `Ξ̄ₙ`.
    pub fn first_layer_only(model: &'m WalkModel, start: usize, rng: ChaCha8Rng) -> Self {
        Self::build(model, start, rng, false)
    }

    fn build(model: &'m WalkModel, start: usize, rng: ChaCha8Rng, full: bool) -> Self {
        let dim = model.alg.dim();
        Walker {
            model,
            rng,
            start,
            vertex: start,
            steps: 0,
            deck: vec![0.0; dim],
            full: full && model.nonabelian,
            next: vec![0.0; dim],
            scratch: Scratch::new(dim),
        }
    }

    /// Takes one step and returns the traversed edge.
    #[inline]
    pub fn step(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let e = self.model.sampler.pick(self.vertex, u);
        if self.full {
            self.model.alg.product_into(
                GroupLaw::Original,
                &self.deck,
                &self.model.voltage[e],
                &mut self.next,
                &mut self.scratch,
            );
            std::mem::swap(&mut self.deck, &mut self.next);
        } else {
            for (d, g) in self.deck.iter_mut().zip(&self.model.voltage1[e]) {
                *d += g;
            }
        }
        self.vertex = self.model.terminus[e];
        self.steps += 1;
        e
    }

    pub fn advance(&mut self, k: u64) {
        for _ in 0..k {
            self.step();
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn vertex(&self) -> usize {
        self.vertex
    }

    /// The deck element accumulated so far.
    pub fn deck(&self) -> GroupElement {
        GroupElement::from_coords(self.deck.clone())
    }

    /// `Ξₙ = log(ξₙ)|₁`, computed in the same order as the first layer of the
    /// group product `Φ(w₀)⁻¹ · deck · Φ(wₙ)`.
    pub fn xi_first_layer(&self) -> Vec<f64> {
        let alg = &self.model.alg;
        let p0 = self.model.positions[self.start].first_layer(alg);
        let pn = self.model.positions[self.vertex].first_layer(alg);
        (0..alg.first_layer_dim())
            .map(|i| (-p0[i] + self.deck[i]) + pn[i])
            .collect()
    }

    /// `Ξ̄ₙ = Ξₙ − nρ`.
    pub fn xi_bar_first_layer(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.model.rho.len()];
        self.xi_bar_first_layer_into(&mut out);
        out
    }

    /// [`xi_bar_first_layer`](Self::xi_bar_first_layer) without allocating.
    #[inline]
    pub fn xi_bar_first_layer_into(&self, out: &mut [f64]) {
        let alg = &self.model.alg;
        let p0 = self.model.positions[self.start].first_layer(alg);
        let pn = self.model.positions[self.vertex].first_layer(alg);
        let n = self.steps as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o = ((-p0[i] + self.deck[i]) + pn[i]) - n * self.model.rho[i];
        }
    }

    /// `ξₙ` as a group element. Requires a walker built with [`Walker::new`]
    /// on nonabelian algebras.
    pub fn xi(&self) -> GroupElement {
        let alg = &self.model.alg;
        let p0 = alg.group_inverse(&self.model.positions[self.start]);
        let pn = &self.model.positions[self.vertex];
        let deck = self.deck();
        alg.product_of(GroupLaw::Original, [&p0, &deck, pn])
            .expect("dimensions checked by WalkModel")
    }

    /// `ξ̄ₙ = ξₙ · exp(−nρ)`.
    pub fn xi_bar(&self) -> GroupElement {
        centered(&self.model.alg, &self.xi(), &self.model.rho, self.steps)
    }
}

fn centered(alg: &StratifiedAlgebra, xi: &GroupElement, rho: &[f64], n: u64) -> GroupElement {
    let drift: Vec<f64> = rho.iter().map(|r| -(n as f64 * r)).collect();
    let drift = alg.horizontal(&drift).expect("first-layer length");
    alg.bch_product(xi, &drift).expect("dimensions checked")
}

/// A sampled trajectory of `n` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPath {
    /// Quotient vertices `w₀, …, wₙ`.
    pub quotient_vertices: Vec<usize>,
    /// Traversed edges, one per step.
    pub edges: Vec<usize>,
    /// Deck element after `n` steps.
    pub deck: GroupElement,
    /// `ξₙ`.
    pub xi: GroupElement,
    /// `ρ` used for centering.
    pub rho: Vec<f64>,
    /// Cumulative `Ξ̄ₖ`, `k = 0..=n`, each of length `d₁`.
    pub xi_bar: Vec<Vec<f64>>,
}

impl WalkPath {
    pub fn steps(&self) -> u64 {
        self.edges.len() as u64
    }

    /// `W̄ₖ = Ξ̄ₖ − Ξ̄ₖ₋₁` for `k = 1..=n`.
    pub fn increment(&self, k: usize) -> Vec<f64> {
        self.xi_bar[k]
            .iter()
            .zip(&self.xi_bar[k - 1])
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn increments(&self) -> Vec<Vec<f64>> {
        (1..self.xi_bar.len()).map(|k| self.increment(k)).collect()
    }

    /// `Ξ̄ₙ`.
    pub fn xi_bar_end(&self) -> &[f64] {
        &self.xi_bar[self.xi_bar.len() - 1]
    }

    /// `ξ̄ₙ = ξₙ · exp(−nρ)`.
    pub fn xi_bar_element(&self, alg: &StratifiedAlgebra) -> GroupElement {
        centered(alg, &self.xi, &self.rho, self.steps())
    }
}

/// Samples `n` steps from vertex 0 using stream 0 of `seed`.
pub fn sample_path(model: &WalkModel, n: u64, seed: u64) -> Result<WalkPath, WalkError> {
    sample_path_from(model, 0, n, stream_rng(seed, 0))
}

pub fn sample_path_from(
    model: &WalkModel,
    start: usize,
    n: u64,
    rng: ChaCha8Rng,
) -> Result<WalkPath, WalkError> {
    model.check_start(start)?;
    let mut w = Walker::new(model, start, rng);
    let mut quotient_vertices = Vec::with_capacity(n as usize + 1);
    let mut edges = Vec::with_capacity(n as usize);
    let mut xi_bar = Vec::with_capacity(n as usize + 1);
    quotient_vertices.push(start);
    xi_bar.push(w.xi_bar_first_layer());
    for _ in 0..n {
        edges.push(w.step());
        quotient_vertices.push(w.vertex());
        xi_bar.push(w.xi_bar_first_layer());
    }
    Ok(WalkPath {
        quotient_vertices,
        edges,
        deck: w.deck(),
        xi: w.xi(),
        rho: model.rho.clone(),
        xi_bar,
    })
}

/// The path `Z⁽ⁿ⁾(t)`: linear interpolation of `Ξ̄_{[nt]} / aₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedPath {
    pub n: u64,
    pub a_n: f64,
    inv_a: f64,
    xi_bar: Vec<Vec<f64>>,
}

pub fn interpolate(path: &WalkPath, scaling: &ScalingSequence) -> Result<InterpolatedPath, WalkError> {
    let n = path.steps();
    let a_n = scaling.value(n)?;
    Ok(InterpolatedPath {
        n,
        a_n,
        inv_a: 1.0 / a_n,
        xi_bar: path.xi_bar.clone(),
    })
}

impl InterpolatedPath {
    /// `Z⁽ⁿ⁾(t)` for `t ∈ [0, 1]`.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>, WalkError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(WalkError::TimeOutOfRange(t));
        }
        let nt = self.n as f64 * t;
        let k = (nt.floor() as usize).min(self.n as usize);
        let frac = nt - k as f64;
        let base = &self.xi_bar[k];
        if k == self.n as usize || frac == 0.0 {
            return Ok(base.iter().map(|x| x * self.inv_a).collect());
        }
        let next = &self.xi_bar[k + 1];
        Ok(base
            .iter()
            .zip(next)
            .map(|(a, b)| (a + frac * (b - a)) * self.inv_a)
            .collect())
    }

    /// The same path as knots `k/n` with values `Ξ̄ₖ/aₙ`.
    pub fn to_piecewise(&self) -> PiecewisePath {
        let n = self.n as usize;
        let knots = (0..=n).map(|k| k as f64 / n.max(1) as f64).collect();
        let values = self
            .xi_bar
            .iter()
            .map(|v| v.iter().map(|x| x * self.inv_a).collect())
            .collect();
        PiecewisePath::new_unchecked(knots, values)
    }
}

/// `τ_{1/aₙ}(φ(ξ̄ₙ))`.
pub fn scaled_endpoint(
    alg: &StratifiedAlgebra,
    path: &WalkPath,
    scaling: &ScalingSequence,
) -> Result<GroupElement, WalkError> {
    let a_n = scaling.value(path.steps())?;
    let g = alg.phi_map(&path.xi_bar_element(alg));
    Ok(alg.dilate_tau(1.0 / a_n, &g)?)
}

/// Scaled endpoints of `samples` independent walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointBatch {
    pub n: u64,
    pub a_n: f64,
    pub endpoints: Vec<GroupElement>,
    /// Raw `Ξ̄ₙ` per sample.
    pub xi_bar: Vec<Vec<f64>>,
}

impl EndpointBatch {
    /// First-layer coordinates of the scaled endpoints.
    pub fn first_layer_marginals(&self, alg: &StratifiedAlgebra) -> Vec<Vec<f64>> {
        self.endpoints
            .iter()
            .map(|g| g.first_layer(alg).to_vec())
            .collect()
    }

    /// One row per sample: `sample_id, n`, the log-coordinates of the scaled
    /// endpoint, then `Ξ̄ₙ`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let dim = self.endpoints.first().map_or(0, |g| g.len());
        let d1 = self.xi_bar.first().map_or(0, |v| v.len());
        write!(out, "sample_id,n")?;
        for i in 0..dim {
            write!(out, ",z{i}")?;
        }
        for i in 0..d1 {
            write!(out, ",xi_bar{i}")?;
        }
        writeln!(out)?;
        for (s, (g, xb)) in self.endpoints.iter().zip(&self.xi_bar).enumerate() {
            write!(out, "{s},{}", self.n)?;
            for x in g.coords().iter().chain(xb) {
                write!(out, ",{}", fmt_float(*x))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// 17 significant digits, the shortest width that round-trips binary64.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// Endpoints `τ_{1/aₙ}(φ(ξ̄ₙ))` for `samples` walks from vertex `start`;
/// sample `s` uses stream `s` of `seed`.
pub fn batch_endpoints(
    model: &WalkModel,
    start: usize,
    scaling: &ScalingSequence,
    n: u64,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<EndpointBatch, WalkError> {
    model.check_start(start)?;
    let a_n = scaling.value(n)?;
    let alg = &model.alg;
    let eps = 1.0 / a_n;
    let results: Vec<(GroupElement, Vec<f64>)> = install(workers, || {
        (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut w = Walker::new(model, start, stream_rng(seed, s as u64));
                w.advance(n);
                let g = alg.phi_map(&w.xi_bar());
                let end = alg.dilate_tau(eps, &g).expect("eps is positive");
                (end, w.xi_bar_first_layer())
            })
            .collect()
    });
    let (endpoints, xi_bar) = results.into_iter().unzip();
    Ok(EndpointBatch {
        n,
        a_n,
        endpoints,
        xi_bar,
    })
}
