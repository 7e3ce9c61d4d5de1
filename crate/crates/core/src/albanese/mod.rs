//! Asymptotic direction, modified harmonic realization and the Albanese
//! matrix `Σ` of a periodic random walk.
//!
//! Only first-layer data enters: every quantity here is built from the
//! first-layer edge increments `w(e) = log(γ(e))|₁ + φ₁(t(e)) − φ₁(o(e))` of a
//! periodic realization `φ`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group_algebra::{GroupElement, StratifiedAlgebra};
use crate::quotient_graph::{invariant_measure, GraphError, InvariantMeasure, VoltageGraph};
use crate::streams::{install, stream_rng};
use crate::walker::{WalkModel, Walker};

/// Largest harmonicity defect accepted from the linear solve.
pub const HARMONIC_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlbaneseError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("harmonic realization: {0}")]
    SingularSystem(String),
    #[error(
        "Σ is not positive definite (smallest eigenvalue {min_eigenvalue:e}); \
         the first-layer voltages do not span the first layer"
    )]
    SingularSigma { min_eigenvalue: f64 },
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Positions of the fundamental-domain lifts of the quotient vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Realization {
    pub positions: Vec<GroupElement>,
}

impl Realization {
    /// Every vertex placed at the identity.
    pub fn trivial(graph: &VoltageGraph) -> Self {
        Realization {
            positions: vec![graph.algebra().identity(); graph.vertex_count()],
        }
    }

    /// A realization with the given first-layer coordinates and zero higher
    /// layers.
    pub fn from_first_layer(
        alg: &StratifiedAlgebra,
        phi1: &[Vec<f64>],
    ) -> Result<Self, AlbaneseError> {
        let positions = phi1
            .iter()
            .map(|v| alg.horizontal(v))
            .collect::<Result<_, _>>()
            .map_err(GraphError::from)?;
        Ok(Realization { positions })
    }

    /// `φ₁(v) = log(position(v))|₁`.
    pub fn first_layer<'a>(&'a self, alg: &StratifiedAlgebra, v: usize) -> &'a [f64] {
        self.positions[v].first_layer(alg)
    }

    fn check(&self, graph: &VoltageGraph) -> Result<(), AlbaneseError> {
        if self.positions.len() != graph.vertex_count() {
            return Err(AlbaneseError::DimensionMismatch {
                what: "realization",
                expected: graph.vertex_count(),
                found: self.positions.len(),
            });
        }
        let dim = graph.algebra().dim();
        if let Some(p) = self.positions.iter().find(|p| p.len() != dim) {
            return Err(AlbaneseError::DimensionMismatch {
                what: "vertex position",
                expected: dim,
                found: p.len(),
            });
        }
        Ok(())
    }
}

/// First-layer increments `w(e)` of a realization, one vector per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstLayerForm {
    pub w: Vec<Vec<f64>>,
}

pub fn first_layer_form(graph: &VoltageGraph, phi: &Realization) -> FirstLayerForm {
    let alg = graph.algebra();
    let w = graph
        .edges()
        .iter()
        .map(|e| {
            let g = e.voltage.first_layer(alg);
            let (pt, po) = (phi.first_layer(alg, e.t), phi.first_layer(alg, e.o));
            (0..g.len()).map(|i| g[i] + pt[i] - po[i]).collect()
        })
        .collect();
    FirstLayerForm { w }
}

/// `ρ = Σₑ m̃(e) log(γ(e))|₁`.
pub fn asymptotic_direction(graph: &VoltageGraph, meas: &InvariantMeasure) -> Vec<f64> {
    let alg = graph.algebra();
    let mut rho = vec![0.0; alg.first_layer_dim()];
    for (e, mt) in graph.edges().iter().zip(&meas.m_tilde) {
        for (r, g) in rho.iter_mut().zip(e.voltage.first_layer(alg)) {
            *r += mt * g;
        }
    }
    rho
}

/// `Σₑ m̃(e) w(e)` for an arbitrary realization; equals
/// [`asymptotic_direction`] up to rounding because the position terms cancel
/// under stationarity.
pub fn asymptotic_direction_via(
    graph: &VoltageGraph,
    meas: &InvariantMeasure,
    phi: &Realization,
) -> Vec<f64> {
    let form = first_layer_form(graph, phi);
    let mut rho = vec![0.0; graph.algebra().first_layer_dim()];
    for (w, mt) in form.w.iter().zip(&meas.m_tilde) {
        for (r, wi) in rho.iter_mut().zip(w) {
            *r += mt * wi;
        }
    }
    rho
}

/// `maxₓ ‖Σ_{e ∈ Eₓ} p(e) w(e) − ρ‖` (Euclidean).
pub fn harmonicity_residual(graph: &VoltageGraph, phi: &Realization, rho: &[f64]) -> f64 {
    let form = first_layer_form(graph, phi);
    (0..graph.vertex_count())
        .map(|x| {
            let mut mean = vec![0.0; rho.len()];
            for &i in graph.out_edges(x) {
                let p = graph.edge(i).p;
                for (m, w) in mean.iter_mut().zip(&form.w[i]) {
                    *m += p * w;
                }
            }
            mean.iter()
                .zip(rho)
                .map(|(m, r)| (m - r) * (m - r))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Solves `Σ_{e ∈ Eₓ} p(e) w(e) = ρ` at every vertex with `φ₁(0) = 0`.
///
/// Writing the equations as `(P − I) φ₁ = ρ − Σ p γ₁`, the row and column of
/// vertex 0 are dropped; the remaining block is `Q − I` for the chain killed
/// at vertex 0, which is invertible for an irreducible kernel. The dropped
/// equation holds automatically since both sides have zero `m`-average.
pub fn modified_harmonic_realization(
    graph: &VoltageGraph,
    rho: &[f64],
) -> Result<Realization, AlbaneseError> {
    let alg = graph.algebra();
    let d = alg.first_layer_dim();
    if rho.len() != d {
        return Err(AlbaneseError::DimensionMismatch {
            what: "asymptotic direction",
            expected: d,
            found: rho.len(),
        });
    }
    let n = graph.vertex_count();
    let mut phi1 = vec![vec![0.0; d]; n];
    if n > 1 {
        let k = n - 1;
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DMatrix::<f64>::zeros(k, d);
        for x in 1..n {
            a[(x - 1, x - 1)] -= 1.0;
            for i in 0..d {
                b[(x - 1, i)] = rho[i];
            }
            for &ei in graph.out_edges(x) {
                let e = graph.edge(ei);
                if e.t != 0 {
                    a[(x - 1, e.t - 1)] += e.p;
                }
                for (i, g) in e.voltage.first_layer(alg).iter().enumerate() {
                    b[(x - 1, i)] -= e.p * g;
                }
            }
        }
        let sol = a
            .lu()
            .solve(&b)
            .ok_or_else(|| AlbaneseError::SingularSystem("reduced Laplacian is singular".into()))?;
        for x in 1..n {
            for i in 0..d {
                phi1[x][i] = sol[(x - 1, i)];
            }
        }
    }
    let phi = Realization::from_first_layer(alg, &phi1)?;
    let residual = harmonicity_residual(graph, &phi, rho);
    if !(residual <= HARMONIC_TOL) {
        return Err(AlbaneseError::SingularSystem(format!(
            "harmonicity residual {residual:e} exceeds {HARMONIC_TOL:e}"
        )));
    }
    Ok(phi)
}

/// `Ψ(x) = log Φ(x)|₁ − log Φ₀(x)|₁` on the quotient vertices.
pub fn corrector(alg: &StratifiedAlgebra, phi: &Realization, phi0: &Realization) -> Vec<Vec<f64>> {
    phi.positions
        .iter()
        .zip(&phi0.positions)
        .map(|(a, b)| {
            a.first_layer(alg)
                .iter()
                .zip(b.first_layer(alg))
                .map(|(x, y)| x - y)
                .collect()
        })
        .collect()
}

/// Output of the Albanese pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlbaneseData {
    pub rho: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_inv: Vec<Vec<f64>>,
    pub residual: f64,
    pub harmonic: Realization,
}

impl AlbaneseData {
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.sigma)
    }

    pub fn sigma_inv_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.sigma_inv)
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `Σᵢⱼ = Σₑ m̃(e) w₀ⁱ(e) w₀ʲ(e) − ρⁱρʲ` and its inverse.
pub fn albanese_matrix(
    graph: &VoltageGraph,
    meas: &InvariantMeasure,
    phi0: &Realization,
    rho: &[f64],
) -> Result<AlbaneseData, AlbaneseError> {
    phi0.check(graph)?;
    let d = graph.algebra().first_layer_dim();
    let form = first_layer_form(graph, phi0);
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for (w, mt) in form.w.iter().zip(&meas.m_tilde) {
        for i in 0..d {
            for j in 0..d {
                sigma[(i, j)] += mt * w[i] * w[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            sigma[(i, j)] -= rho[i] * rho[j];
        }
    }
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let eig = sigma.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if !(min_eigenvalue > 1e-12 * scale) {
        return Err(AlbaneseError::SingularSigma { min_eigenvalue });
    }
    let sigma_inv = sigma
        .clone()
        .cholesky()
        .ok_or(AlbaneseError::SingularSigma { min_eigenvalue })?
        .inverse();
    let sigma_inv = (&sigma_inv + sigma_inv.transpose()) * 0.5;
    Ok(AlbaneseData {
        rho: rho.to_vec(),
        sigma: to_rows(&sigma),
        sigma_inv: to_rows(&sigma_inv),
        residual: harmonicity_residual(graph, phi0, rho),
        harmonic: phi0.clone(),
    })
}

/// Measure, direction, harmonic realization and `Σ` in one call.
pub fn albanese(graph: &VoltageGraph) -> Result<AlbaneseData, AlbaneseError> {
    let meas = invariant_measure(graph)?;
    let rho = asymptotic_direction(graph, &meas);
    let phi0 = modified_harmonic_realization(graph, &rho)?;
    albanese_matrix(graph, &meas, &phi0, &rho)
}

/// Monte Carlo estimate of `(1/N) E[Ξ̄_N ⊗ Ξ̄_N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub steps: u64,
    pub samples: usize,
    pub estimate: Vec<Vec<f64>>,
    /// Per-entry standard errors of `estimate`.
    pub standard_error: Vec<Vec<f64>>,
}

/// Runs `samples` independent walks of `steps` steps from vertex 0 under the
/// realization `phi` and averages `Ξ̄_N Ξ̄_Nᵀ / N`.
///
/// Sample `s` uses random stream `s` of `seed`; per-sample products are
/// collected in order and summed sequentially, so the result does not depend
/// on `workers`.
pub fn clt_covariance_oracle(
    graph: &VoltageGraph,
    phi: &Realization,
    rho: &[f64],
    steps: u64,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<CovarianceEstimate, AlbaneseError> {
    phi.check(graph)?;
    let model = WalkModel::new(graph, phi, rho).map_err(|e| {
        AlbaneseError::SingularSystem(format!("walk model: {e}"))
    })?;
    let d = rho.len();
    let nf = steps as f64;
    let products: Vec<Vec<f64>> = install(workers, || {
        (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut w = Walker::first_layer_only(&model, 0, stream_rng(seed, s as u64));
                w.advance(steps);
                let xb = w.xi_bar_first_layer();
                let mut out = Vec::with_capacity(d * d);
                for i in 0..d {
                    for j in 0..d {
                        out.push(xb[i] * xb[j] / nf);
                    }
                }
                out
            })
            .collect()
    });
    let sf = samples as f64;
    let mut mean = vec![0.0; d * d];
    for p in &products {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= sf);
    let mut var = vec![0.0; d * d];
    for p in &products {
        var.iter_mut()
            .zip(p.iter().zip(&mean))
            .for_each(|(v, (x, m))| *v += (x - m) * (x - m));
    }
    let denom = (sf - 1.0).max(1.0);
    let se: Vec<f64> = var.iter().map(|v| (v / denom / sf).sqrt()).collect();
    let grid = |v: &[f64]| v.chunks(d).map(|c| c.to_vec()).collect();
    Ok(CovarianceEstimate {
        steps,
        samples,
        estimate: grid(&mean),
        standard_error: grid(&se),
    })
}
