//! Exact distributions of abelian single-vertex walks on ℤ and ℤ².
//!
//! [`ExactLatticeDistribution`] convolves the step law `n` times on a dense
//! array. For nearest-neighbour walks on ℤ² the array grows as `n²`, so
//! [`AxisMixture`] computes Euclidean tails exactly by conditioning on the
//! number of horizontal moves, which only needs one-dimensional binomials.

use super::ExperimentError;
use crate::quotient_graph::VoltageGraph;

/// Upper bound on `n · sites · |steps|` for the dense convolution.
pub const DP_BUDGET: f64 = 2e10;

/// Relative slack on the tail radius so that lattice points that sit on the
/// sphere `‖x − c‖ = r` up to rounding are counted as inside the tail.
const RADIUS_SLACK: f64 = 1e-12;

fn unavailable(reason: impl Into<String>) -> ExperimentError {
    ExperimentError::OracleUnavailable(reason.into())
}

/// Integer step law `(offset, probability)` of an abelian single-vertex
/// quotient with `d ≤ 2` and integer voltages.
pub fn lattice_steps(graph: &VoltageGraph) -> Result<Vec<(Vec<i64>, f64)>, ExperimentError> {
    let alg = graph.algebra();
    if !alg.is_abelian() {
        return Err(unavailable("exact enumeration needs an abelian deck group"));
    }
    if graph.vertex_count() != 1 {
        return Err(unavailable("exact enumeration needs a single-vertex quotient"));
    }
    let d = alg.first_layer_dim();
    if !(1..=2).contains(&d) {
        return Err(unavailable(format!("lattice dimension {d} is not 1 or 2")));
    }
    let mut steps: Vec<(Vec<i64>, f64)> = Vec::new();
    for (i, e) in graph.edges().iter().enumerate() {
        let v = e.voltage.first_layer(alg);
        let offset: Vec<i64> = v.iter().map(|x| x.round() as i64).collect();
        if v.iter().zip(&offset).any(|(x, o)| (x - *o as f64).abs() > 1e-12) {
            return Err(unavailable(format!("edge {i} has a non-integer voltage")));
        }
        match steps.iter_mut().find(|(o, _)| *o == offset) {
            Some((_, p)) => *p += e.p,
            None => steps.push((offset, e.p)),
        }
    }
    Ok(steps)
}

/// Law of `Ξₙ` on `ℤᵈ`, `d ∈ {1, 2}`, stored on the box `[−R, R]ᵈ` with
/// `R = n · max |step coordinate|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLatticeDistribution {
    pub dim: usize,
    pub n: u64,
    pub radius: i64,
    /// Row-major over the box, first coordinate slowest.
    pub prob: Vec<f64>,
}

impl ExactLatticeDistribution {
    pub fn new(graph: &VoltageGraph, n: u64) -> Result<Self, ExperimentError> {
        let steps = lattice_steps(graph)?;
        let dim = graph.algebra().first_layer_dim();
        let reach = steps
            .iter()
            .flat_map(|(o, _)| o.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0);
        let radius = reach * n as i64;
        let side = (2 * radius + 1) as usize;
        let sites = side.pow(dim as u32);
        let work = n as f64 * sites as f64 * steps.len() as f64;
        if work > DP_BUDGET {
            return Err(unavailable(format!(
                "dense convolution needs {work:.3e} operations (budget {DP_BUDGET:.0e})"
            )));
        }
        let mut prob = vec![0.0; sites];
        let mut next = vec![0.0; sites];
        let index = |x: &[i64]| -> usize {
            x.iter()
                .fold(0usize, |acc, &c| acc * side + (c + radius) as usize)
        };
        prob[index(&vec![0; dim])] = 1.0;
        // after k steps the support lies in [−k·reach, k·reach]ᵈ
        for k in 0..n as i64 {
            let r = k * reach;
            next.iter_mut().for_each(|x| *x = 0.0);
            match dim {
                1 => {
                    for x in -r..=r {
                        let px = prob[index(&[x])];
                        if px == 0.0 {
                            continue;
                        }
                        for (o, p) in &steps {
                            next[index(&[x + o[0]])] += px * p;
                        }
                    }
                }
                _ => {
                    for x in -r..=r {
                        for y in -r..=r {
                            let pxy = prob[index(&[x, y])];
                            if pxy == 0.0 {
                                continue;
                            }
                            for (o, p) in &steps {
                                next[index(&[x + o[0], y + o[1]])] += pxy * p;
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut prob, &mut next);
        }
        Ok(ExactLatticeDistribution {
            dim,
            n,
            radius,
            prob,
        })
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum()
    }

    /// Lattice point of a flat index.
    pub fn site(&self, idx: usize) -> Vec<i64> {
        let side = (2 * self.radius + 1) as usize;
        let mut out = vec![0; self.dim];
        let mut rest = idx;
        for c in out.iter_mut().rev() {
            *c = (rest % side) as i64 - self.radius;
            rest /= side;
        }
        out
    }

    /// `P(‖Ξₙ − center‖ ≥ r)`.
    pub fn tail(&self, center: &[f64], r: f64) -> f64 {
        let r2 = (r * (1.0 - RADIUS_SLACK)).powi(2);
        // summing small terms first keeps deep tails accurate
        let mut terms: Vec<f64> = self
            .prob
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .filter(|(i, _)| {
                let x = self.site(*i);
                let d2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (*a as f64 - c).powi(2))
                    .sum();
                d2 >= r2
            })
            .map(|(_, p)| *p)
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    }
}

/// `ln k!` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial pmf of `Bin(m, q)` on `0..=m`.
fn binomial_pmf(m: usize, q: f64, lf: &[f64]) -> Vec<f64> {
    if q <= 0.0 || q >= 1.0 {
        let mut out = vec![0.0; m + 1];
        out[if q <= 0.0 { 0 } else { m }] = 1.0;
        return out;
    }
    let (lq, lr) = (q.ln(), (1.0 - q).ln());
    (0..=m)
        .map(|j| (lf[m] - lf[j] - lf[m - j] + j as f64 * lq + (m - j) as f64 * lr).exp())
        .collect()
}

/// A nearest-neighbour walk on ℤ² with probabilities
/// `(x+, x−, y+, y−)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMixture {
    pub probs: [f64; 4],
}

impl AxisMixture {
    /// Recognizes an axis walk among abelian single-vertex quotients on ℤ².
    pub fn from_graph(graph: &VoltageGraph) -> Result<Self, ExperimentError> {
        let steps = lattice_steps(graph)?;
        if graph.algebra().first_layer_dim() != 2 {
            return Err(unavailable("axis mixture needs ℤ²"));
        }
        let mut probs = [0.0; 4];
        for (o, p) in steps {
            let slot = match (o[0], o[1]) {
                (1, 0) => 0,
                (-1, 0) => 1,
                (0, 1) => 2,
                (0, -1) => 3,
                _ => return Err(unavailable(format!("step {o:?} is not a unit axis step"))),
            };
            probs[slot] += p;
        }
        Ok(AxisMixture { probs })
    }

    /// `P(‖Ξₙ − center‖ ≥ r)` for every `r` in `radii`.
    ///
    /// With `k` horizontal moves out of `n`, `X = 2J − k` and `Y = 2L − (n−k)`
    /// with independent binomial `J` and `L`; the tail is an exact finite sum
    /// over `(k, J)` of `P(k) P(J) P(|Y − c_y| ≥ √(r² − (X − c_x)²))`.
    pub fn tails(&self, n: u64, center: &[f64], radii: &[f64]) -> Vec<f64> {
        let n = n as usize;
        let lf = ln_factorials(n);
        let [xp, xm, yp, ym] = self.probs;
        let px = xp + xm;
        let qx = if px > 0.0 { xp / px } else { 0.5 };
        let qy = if yp + ym > 0.0 { yp / (yp + ym) } else { 0.5 };
        let pk = binomial_pmf(n, px, &lf);
        let r2: Vec<f64> = radii
            .iter()
            .map(|r| (r * (1.0 - RADIUS_SLACK)).powi(2))
            .collect();
        let mut terms: Vec<Vec<f64>> = vec![Vec::new(); radii.len()];
        for k in 0..=n {
            if pk[k] == 0.0 {
                continue;
            }
            let m = n - k;
            let pj = binomial_pmf(k, qx, &lf);
            let pl = binomial_pmf(m, qy, &lf);
            // prefix[i] = P(L < i), suffix[i] = P(L ≥ i), each summed from its small end
            let mut prefix = vec![0.0; m + 2];
            for i in 0..=m {
                prefix[i + 1] = prefix[i] + pl[i];
            }
            let mut suffix = vec![0.0; m + 2];
            for i in (0..=m).rev() {
                suffix[i] = suffix[i + 1] + pl[i];
            }
            let y_tail = |s2: f64| -> f64 {
                if s2 <= 0.0 {
                    return 1.0;
                }
                let s = s2.sqrt();
                // Y ≥ c + s  ⇔  L ≥ (c + s + m)/2 ;  Y ≤ c − s  ⇔  L ≤ (c − s + m)/2
                let hi = ((center[1] + s + m as f64) / 2.0).ceil();
                let lo = ((center[1] - s + m as f64) / 2.0).floor();
                let upper = if hi <= 0.0 {
                    1.0
                } else if hi > m as f64 {
                    0.0
                } else {
                    suffix[hi as usize]
                };
                let lower = if lo < 0.0 {
                    0.0
                } else if lo >= m as f64 {
                    1.0
                } else {
                    prefix[lo as usize + 1]
                };
                (upper + lower).min(1.0)
            };
            for (j, &pjj) in pj.iter().enumerate() {
                let w = pk[k] * pjj;
                if w == 0.0 {
                    continue;
                }
                let dx = (2 * j) as f64 - k as f64 - center[0];
                for (slot, &rr) in r2.iter().enumerate() {
                    let t = y_tail(rr - dx * dx);
                    if t > 0.0 {
                        terms[slot].push(w * t);
                    }
                }
            }
        }
        terms
            .into_iter()
            .map(|mut t| {
                t.sort_by(f64::total_cmp);
                t.iter().sum()
            })
            .collect()
    }
}
