//! Upper bounds on `I(g) = inf{I′(h) : F(h) = g}` over piecewise linear paths
//! with uniform knots.
//!
//! With `K` uniform segments and increments `U₁, …, U_K`, the path rate is
//! `K Σ α*(Uₖ)` and the constraint is `log(exp(U₁)⋯exp(U_K)) = log g`. The
//! start point is first projected onto the constraint set by Gauss–Newton
//! steps with the minimum-norm correction. The constraint is then enforced by
//! a quadratic penalty with relative weights `10⁰ … 10⁸`, each stage minimized
//! by BFGS from the previous stage's point, and the result is projected again.
//!
//! When `K` is even the solution for `K/2` is split in halves and used as a
//! warm start. A split path develops to the same endpoint with the same rate,
//! so the bound never increases along `K, 2K, 4K, …`.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PiecewisePath, QuadraticForms, RateError};
use crate::group_algebra::{GroupElement, GroupLaw, Scratch, StratifiedAlgebra};
use crate::optim::{bfgs, BfgsOptions};
use crate::streams::stream_rng;

/// Largest constraint violation accepted for a reported bound.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Target violation of the Gauss–Newton polish, relative to `1 + ‖log g‖`.
const POLISH_TOL: f64 = 1e-13;
const POLISH_MAX_ITER: usize = 60;
const JACOBIAN_STEP: f64 = 1e-7;
const PENALTY_WEIGHTS: [f64; 9] = [1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    /// Number of uniform segments `K`.
    pub knots: usize,
    /// Optimizer runs per segment count.
    pub restarts: usize,
    pub seed: u64,
    pub bfgs: BfgsSettings,
}

/// Serializable subset of [`BfgsOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsSettings {
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            knots: 8,
            restarts: 8,
            seed: 0,
            bfgs: BfgsSettings {
                max_iter: 300,
                fd_step: 1e-6,
            },
        }
    }
}

/// An upper bound on a rate, with the path that attains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBound {
    pub value: f64,
    pub constraint_violation: f64,
    pub knots: usize,
    pub restarts_used: usize,
    #[serde(skip)]
    pub increments: Vec<Vec<f64>>,
}

impl RateBound {
    /// The minimizing path.
    pub fn path(&self) -> Result<PiecewisePath, RateError> {
        PiecewisePath::from_increments(&self.increments)
    }
}

/// Smallest admissible `K`: the increments must be able to generate every
/// layer, which takes at least `step` segments.
pub fn min_knots(alg: &StratifiedAlgebra) -> usize {
    alg.step().max(1)
}

/// Upper bound on `I(g)` using the original group law.
pub fn endpoint_rate(
    alg: &StratifiedAlgebra,
    forms: &QuadraticForms,
    g: &GroupElement,
    opts: &RateOptions,
) -> Result<RateBound, RateError> {
    bound(alg, forms, g, opts, GroupLaw::Original)
}

/// Upper bound on `I∞(g) = I(φ⁻¹(g))`, developing paths in the limit group.
pub fn limit_rate(
    alg: &StratifiedAlgebra,
    forms: &QuadraticForms,
    g_infinity: &GroupElement,
    opts: &RateOptions,
) -> Result<RateBound, RateError> {
    bound(alg, forms, &alg.phi_inverse(g_infinity), opts, GroupLaw::Limit)
}

/// Whether the limit-rate bound at `g` is at most `level + tol`.
///
/// Since the bound is an upper bound, `true` certifies membership in
/// `{I∞ ≤ level + tol}`; `false` may be a loose optimizer.
pub fn lil_ball_contains(
    alg: &StratifiedAlgebra,
    forms: &QuadraticForms,
    g: &GroupElement,
    level: f64,
    tol: f64,
    opts: &RateOptions,
) -> Result<bool, RateError> {
    if !(level > 0.0) {
        return Err(RateError::InvalidLevel(level));
    }
    Ok(limit_rate(alg, forms, g, opts)?.value <= level + tol)
}

fn bound(
    alg: &StratifiedAlgebra,
    forms: &QuadraticForms,
    g: &GroupElement,
    opts: &RateOptions,
    law: GroupLaw,
) -> Result<RateBound, RateError> {
    alg.check_step()?;
    alg.check_len(g.len())?;
    if forms.dim() != alg.first_layer_dim() {
        return Err(RateError::DimensionMismatch {
            what: "quadratic form",
            expected: alg.first_layer_dim(),
            found: forms.dim(),
        });
    }
    let min = min_knots(alg);
    if opts.knots < min {
        return Err(RateError::TooFewKnots {
            knots: opts.knots,
            step: alg.step(),
            min,
        });
    }
    let d1 = alg.first_layer_dim();
    if g.is_identity() {
        return Ok(RateBound {
            value: 0.0,
            constraint_violation: 0.0,
            knots: opts.knots,
            restarts_used: 0,
            increments: vec![vec![0.0; d1]; opts.knots],
        });
    }
    let problem = Problem { alg, forms, target: g.coords(), law, d1 };
    let best = problem.solve(opts.knots, min, opts);
    let increments = best.x.chunks(d1).map(|c| c.to_vec()).collect();
    if !(best.violation <= FEASIBILITY_TOL) {
        return Err(RateError::InfeasibleReported {
            violation: best.violation,
        });
    }
    Ok(RateBound {
        value: best.value,
        constraint_violation: best.violation,
        knots: opts.knots,
        restarts_used: opts.restarts.max(1),
        increments,
    })
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    value: f64,
    violation: f64,
}

impl Candidate {
    fn feasible(&self) -> bool {
        self.violation <= FEASIBILITY_TOL
    }

    /// Feasible beats infeasible; then lower value; then lower violation.
    fn better_than(&self, other: &Candidate) -> bool {
        match (self.feasible(), other.feasible()) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.value < other.value,
            (false, false) => self.violation < other.violation,
        }
    }
}

struct Problem<'a> {
    alg: &'a StratifiedAlgebra,
    forms: &'a QuadraticForms,
    target: &'a [f64],
    law: GroupLaw,
    d1: usize,
}

struct Workspace {
    acc: Vec<f64>,
    next: Vec<f64>,
    step: Vec<f64>,
    scratch: Scratch,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Workspace {
            acc: vec![0.0; dim],
            next: vec![0.0; dim],
            step: vec![0.0; dim],
            scratch: Scratch::new(dim),
        }
    }
}

impl Problem<'_> {
    /// `K Σ α*(Uₖ)` for `K = x.len() / d₁`.
    fn rate(&self, x: &[f64]) -> f64 {
        let k = (x.len() / self.d1) as f64;
        k * x
            .chunks(self.d1)
            .map(|u| self.forms.alpha_star_unchecked(u))
            .sum::<f64>()
    }

    /// `log(exp(U₁)⋯exp(U_K)) − log g`, written into `out`.
    fn residual_into(&self, x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        ws.acc.iter_mut().for_each(|v| *v = 0.0);
        for u in x.chunks(self.d1) {
            ws.step[..self.d1].copy_from_slice(u);
            self.alg
                .product_into(self.law, &ws.acc, &ws.step, &mut ws.next, &mut ws.scratch);
            std::mem::swap(&mut ws.acc, &mut ws.next);
        }
        for ((o, a), t) in out.iter_mut().zip(&ws.acc).zip(self.target) {
            *o = a - t;
        }
    }

    fn violation(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let mut r = vec![0.0; self.target.len()];
        self.residual_into(x, ws, &mut r);
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn candidate(&self, x: Vec<f64>) -> Candidate {
        let mut ws = Workspace::new(self.target.len());
        let violation = self.violation(&x, &mut ws);
        Candidate {
            value: self.rate(&x),
            violation,
            x,
        }
    }

    fn straight(&self, k: usize) -> Vec<f64> {
        let v = &self.target[..self.d1];
        (0..k).flat_map(|_| v.iter().map(move |c| c / k as f64)).collect()
    }

    /// Typical increment size of a path reaching the target in `k` segments.
    fn perturbation_scale(&self, k: usize) -> f64 {
        let size: f64 = (1..=self.alg.step())
            .map(|layer| {
                let n = self.target[self.alg.layer_range(layer)]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt();
                n.powf(1.0 / layer as f64)
            })
            .sum();
        (size + 1e-3) / k as f64
    }

    fn solve(&self, k: usize, min: usize, opts: &RateOptions) -> Candidate {
        let mut warm: Option<Candidate> = None;
        if k % 2 == 0 && k / 2 >= min {
            let sub = self.solve(k / 2, min, opts);
            if sub.feasible() {
                let split: Vec<f64> = sub
                    .x
                    .chunks(self.d1)
                    .flat_map(|u| {
                        let h: Vec<f64> = u.iter().map(|c| 0.5 * c).collect();
                        [h.clone(), h]
                    })
                    .flatten()
                    .collect();
                warm = Some(self.candidate(split));
            }
        }
        let straight = self.straight(k);
        let scale = self.perturbation_scale(k);
        let restarts = opts.restarts.max(1);
        let runs: Vec<Candidate> = (0..restarts)
            .into_par_iter()
            .map(|r| {
                let base = match (&warm, r % 2) {
                    (Some(w), 0) => &w.x,
                    _ => &straight,
                };
                // without a warm start, restart 1 would repeat restart 0
                let exact_start = r == 0 || (r == 1 && warm.is_some());
                let x0 = if exact_start {
                    base.clone()
                } else {
                    let mut rng = stream_rng(opts.seed, ((k as u64) << 32) | r as u64);
                    base.iter()
                        .map(|c| c + scale * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                };
                self.run(x0, opts)
            })
            .collect();
        let mut best = warm.unwrap_or_else(|| self.candidate(straight));
        for c in runs {
            if c.better_than(&best) {
                best = c;
            }
        }
        best
    }

    /// Projection of the start point onto the constraint set, penalty
    /// continuation, then the feasibility polish.
    ///
    /// Penalty weights are `μ·w` with `w = rate(x₀)/ν²` and
    /// `ν = 0.1 (1 + ‖log g‖)`: at `μ = 1` a violation of size `ν` already
    /// costs as much as the whole starting rate, which keeps the early stages
    /// from shrinking the path onto the zero path.
    fn run(&self, x0: Vec<f64>, opts: &RateOptions) -> Candidate {
        let dim = self.target.len();
        let ws = RefCell::new(Workspace::new(dim));
        let r = RefCell::new(vec![0.0; dim]);
        let bfgs_opts = BfgsOptions {
            max_iter: opts.bfgs.max_iter,
            fd_step: opts.bfgs.fd_step,
            ..BfgsOptions::default()
        };
        let projected = self.candidate(self.polish(x0, &mut ws.borrow_mut()));
        let nu = 0.1 * (1.0 + norm(self.target));
        let w = self.rate(&projected.x).max(1e-12) / (nu * nu);
        let mut x = projected.x.clone();
        for &mu in &PENALTY_WEIGHTS {
            let weight = mu * w;
            let objective = |y: &[f64]| {
                let mut r = r.borrow_mut();
                self.residual_into(y, &mut ws.borrow_mut(), &mut r);
                self.rate(y) + weight * r.iter().map(|v| v * v).sum::<f64>()
            };
            x = bfgs(objective, &x, bfgs_opts).x;
        }
        let x = self.polish(x, &mut ws.borrow_mut());
        let finished = self.candidate(x);
        if finished.better_than(&projected) {
            finished
        } else {
            projected
        }
    }

    /// Gauss–Newton with the minimum-norm step `δ = −J⁺ r`, accepted only when
    /// it reduces the violation.
    fn polish(&self, mut x: Vec<f64>, ws: &mut Workspace) -> Vec<f64> {
        let m = self.target.len();
        let n = x.len();
        let target_norm = self.target.iter().map(|v| v * v).sum::<f64>().sqrt();
        let goal = POLISH_TOL * (1.0 + target_norm);
        let mut r = vec![0.0; m];
        let mut rp = vec![0.0; m];
        let mut rm = vec![0.0; m];
        self.residual_into(&x, ws, &mut r);
        let mut viol = norm(&r);
        for _ in 0..POLISH_MAX_ITER {
            if viol <= goal {
                break;
            }
            let mut jac = DMatrix::<f64>::zeros(m, n);
            for j in 0..n {
                let xj = x[j];
                let h = JACOBIAN_STEP * xj.abs().max(1.0);
                x[j] = xj + h;
                self.residual_into(&x, ws, &mut rp);
                x[j] = xj - h;
                self.residual_into(&x, ws, &mut rm);
                x[j] = xj;
                for i in 0..m {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let Ok(delta) = svd.solve(&DVector::from_column_slice(&r), 1e-12 * smax.max(1e-300))
            else {
                break;
            };
            let mut t = 1.0;
            let mut improved = false;
            let mut trial = x.clone();
            for _ in 0..30 {
                for j in 0..n {
                    trial[j] = x[j] - t * delta[j];
                }
                self.residual_into(&trial, ws, &mut rp);
                let v = norm(&rp);
                if v < viol {
                    x.copy_from_slice(&trial);
                    r.copy_from_slice(&rp);
                    viol = v;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        x
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_free() {
        let alg = StratifiedAlgebra::heisenberg();
        let f = QuadraticForms::isotropic(2, 0.5).unwrap();
        let b = endpoint_rate(&alg, &f, &alg.identity(), &RateOptions::default()).unwrap();
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn abelian_is_straight() {
        let alg = StratifiedAlgebra::abelian(2).unwrap();
        let f = QuadraticForms::new(DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 0.5])).unwrap();
        let v = [0.8, -1.3];
        let g = alg.horizontal(&v).unwrap();
        let b = endpoint_rate(&alg, &f, &g, &RateOptions::default()).unwrap();
        assert!((b.value - f.alpha_star(&v).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn horizontal_heisenberg() {
        let alg = StratifiedAlgebra::heisenberg();
        let f = QuadraticForms::isotropic(2, 0.5).unwrap();
        let g = alg.horizontal(&[1.0, 1.0]).unwrap();
        let b = endpoint_rate(&alg, &f, &g, &RateOptions::default()).unwrap();
        assert!(b.value >= 2.0 - 1e-9 && b.value <= 2.0 + 1e-4, "{}", b.value);
    }

    #[test]
    fn too_few_knots() {
        let alg = StratifiedAlgebra::heisenberg();
        let f = QuadraticForms::isotropic(2, 0.5).unwrap();
        let g = alg.horizontal(&[1.0, 0.0]).unwrap();
        let opts = RateOptions { knots: 1, ..RateOptions::default() };
        assert!(matches!(
            endpoint_rate(&alg, &f, &g, &opts),
            Err(RateError::TooFewKnots { min: 2, .. })
        ));
    }

    #[test]
    fn lil_ball_on_the_line() {
        let alg = StratifiedAlgebra::abelian(1).unwrap();
        let f = QuadraticForms::isotropic(1, 1.0).unwrap();
        let opts = RateOptions { knots: 1, restarts: 2, ..RateOptions::default() };
        let edge = alg.horizontal(&[2f64.sqrt()]).unwrap();
        let b = limit_rate(&alg, &f, &edge, &opts).unwrap();
        assert!((b.value - 1.0).abs() < 1e-12);
        let far = alg.horizontal(&[2.0]).unwrap();
        assert!(!lil_ball_contains(&alg, &f, &far, 1.0, 1e-9, &opts).unwrap());
        assert!(lil_ball_contains(&alg, &f, &alg.identity(), 1.0, 0.0, &opts).unwrap());
    }
}
