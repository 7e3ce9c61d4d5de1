//! Upper bounds on the left-invariant Finsler distance
//! `d(x, y) = inf ∫ ‖ḣ‖_g dt` over absolutely continuous paths from `x` to `y`.
//!
//! The infimum is taken over paths that are products of `segments`
//! exponentials with constant algebra velocity. Such a path has length
//! `Σ ‖U_k‖_g` where `exp(U_1)⋯exp(U_s) = x⁻¹y`; the last increment is solved
//! from the others so the search is unconstrained.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{AlgebraError, GroupElement, GroupLaw, StratifiedAlgebra};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::streams::stream_rng;

#[derive(Debug, Clone, Copy)]
pub struct FinslerOptions {
    /// Optimizer runs per segment count, the first from the warm start.
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for FinslerOptions {
    fn default() -> Self {
        FinslerOptions {
            starts: 4,
            seed: 0x5eed_f1a5,
            nelder_mead: NelderMeadOptions {
                max_iter: 40_000,
                f_tol: 1e-14,
                x_tol: 1e-12,
                initial_step: 0.1,
            },
        }
    }
}

pub fn finsler_distance(
    alg: &StratifiedAlgebra,
    x: &GroupElement,
    y: &GroupElement,
    segments: usize,
) -> Result<f64, AlgebraError> {
    finsler_distance_with(alg, x, y, segments, &FinslerOptions::default())
}

/// Upper bound on `d_Fin(x, y)`; non-increasing along `s, 2s, 4s, …` and
/// symmetric in `x, y`.
pub fn finsler_distance_with(
    alg: &StratifiedAlgebra,
    x: &GroupElement,
    y: &GroupElement,
    segments: usize,
    opts: &FinslerOptions,
) -> Result<f64, AlgebraError> {
    if segments == 0 {
        return Err(AlgebraError::OptimizerFailure(
            "at least one segment is required".into(),
        ));
    }
    alg.check_step()?;
    alg.check_len(x.len())?;
    alg.check_len(y.len())?;
    if x == y {
        return Ok(0.0);
    }
    let forward = alg.bch_product(&alg.group_inverse(x), y)?;
    let backward = alg.bch_product(&alg.group_inverse(y), x)?;
    let (a, _) = bound(alg, &forward, segments, opts)?;
    let (b, _) = bound(alg, &backward, segments, opts)?;
    Ok(a.min(b))
}

/// Best length found with `s` segments, with its increments.
fn bound(
    alg: &StratifiedAlgebra,
    target: &GroupElement,
    s: usize,
    opts: &FinslerOptions,
) -> Result<(f64, Vec<Vec<f64>>), AlgebraError> {
    let dim = alg.dim();
    if s == 1 {
        let u = target.coords().to_vec();
        return Ok((alg.g_norm_unchecked(&u), vec![u]));
    }
    let (mut best, mut best_u) = if s % 2 == 0 {
        let (v, u) = bound(alg, target, s / 2, opts)?;
        let halves = u
            .iter()
            .flat_map(|uk| {
                let h: Vec<f64> = uk.iter().map(|c| 0.5 * c).collect();
                [h.clone(), h]
            })
            .collect();
        (v, halves)
    } else {
        let u: Vec<f64> = target.coords().iter().map(|c| c / s as f64).collect();
        (alg.g_norm_unchecked(target.coords()), vec![u; s])
    };

    let last_increment = |free: &[f64]| -> Result<Vec<f64>, AlgebraError> {
        let elems: Vec<GroupElement> = free
            .chunks(dim)
            .map(|c| GroupElement::exp(super::AlgebraVector(c.to_vec())))
            .collect();
        let head = alg.product_of(GroupLaw::Original, &elems)?;
        Ok(alg
            .bch_product(&alg.group_inverse(&head), target)?
            .coords()
            .to_vec())
    };
    let objective = |free: &[f64]| -> f64 {
        match last_increment(free) {
            Ok(last) => {
                free.chunks(dim)
                    .map(|c| alg.g_norm_unchecked(c))
                    .sum::<f64>()
                    + alg.g_norm_unchecked(&last)
            }
            Err(_) => f64::NAN,
        }
    };

    let warm: Vec<f64> = best_u[..s - 1].iter().flatten().copied().collect();
    let scale = 0.3 * (alg.g_norm_unchecked(target.coords()) / s as f64 + 1e-3);
    let mut rng = stream_rng(opts.seed, s as u64);
    for start in 0..opts.starts.max(1) {
        let x0: Vec<f64> = if start == 0 {
            warm.clone()
        } else {
            warm.iter()
                .map(|w| w + scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let m = nelder_mead(objective, &x0, opts.nelder_mead);
        if !m.value.is_finite() {
            return Err(AlgebraError::OptimizerFailure(format!(
                "non-finite length {} with {s} segments",
                m.value
            )));
        }
        if m.value < best {
            best = m.value;
            let mut u: Vec<Vec<f64>> = m.x.chunks(dim).map(|c| c.to_vec()).collect();
            u.push(last_increment(&m.x)?);
            best_u = u;
        }
    }
    Ok((best, best_u))
}
