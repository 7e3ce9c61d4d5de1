//! Rate functions of the moderate deviation principle.
//!
//! `α(χ) = ½⟨Σχ, χ⟩` and its convex conjugate `α*(λ) = ½⟨Σ⁻¹λ, λ⟩` give the
//! path rate `I′(h) = ∫₀¹ α*(ḣ) dt`, which is evaluated exactly on piecewise
//! linear paths. The group rate `I(g) = inf{I′(h) : F(h) = g}` is bounded
//! from above by constrained minimization over such paths, where the
//! development `F` of a piecewise linear path is the product of the
//! exponentials of its increments.

mod endpoint;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::albanese::{to_matrix, AlbaneseData};
use crate::group_algebra::{AlgebraError, GroupElement, GroupLaw, StratifiedAlgebra};

pub use endpoint::{endpoint_rate, limit_rate, lil_ball_contains, min_knots, RateBound, RateOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("{what}: expected dimension {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("times must be strictly increasing in (0, 1]; violated at index {index}")]
    NonIncreasingTimes { index: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid quadratic form: {0}")]
    InvalidForm(String),
    #[error("{knots} knots are too few for a step-{step} algebra (need at least {min})")]
    TooFewKnots { knots: usize, step: usize, min: usize },
    #[error("no feasible path found: best constraint violation {violation:e}")]
    InfeasibleReported { violation: f64 },
    #[error("level must be positive, got {0}")]
    InvalidLevel(f64),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// The pair `Σ`, `Σ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForms {
    sigma: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
}

impl QuadraticForms {
    /// Takes `Σ` and computes `Σ⁻¹`; `Σ` must be symmetric positive definite.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self, RateError> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(RateError::InvalidForm("Σ must be a nonempty square matrix".into()));
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-12 * sigma.amax() {
            return Err(RateError::InvalidForm(format!("Σ is not symmetric ({asym:e})")));
        }
        let sigma_inv = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| RateError::InvalidForm("Σ is not positive definite".into()))?
            .inverse();
        Ok(QuadraticForms { sigma, sigma_inv })
    }

    pub fn from_albanese(data: &AlbaneseData) -> Self {
        QuadraticForms {
            sigma: to_matrix(&data.sigma),
            sigma_inv: to_matrix(&data.sigma_inv),
        }
    }

    /// `Σ = c·I_d`.
    pub fn isotropic(d: usize, c: f64) -> Result<Self, RateError> {
        Self::new(DMatrix::identity(d, d) * c)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    fn check(&self, v: &[f64]) -> Result<(), RateError> {
        if v.len() != self.dim() {
            return Err(RateError::DimensionMismatch {
                what: "first-layer vector",
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `α(χ) = ½ χᵀΣχ`.
    pub fn alpha(&self, chi: &[f64]) -> Result<f64, RateError> {
        self.check(chi)?;
        Ok(half_form(&self.sigma, chi))
    }

    /// `α*(λ) = ½ λᵀΣ⁻¹λ`.
    pub fn alpha_star(&self, lam: &[f64]) -> Result<f64, RateError> {
        self.check(lam)?;
        Ok(self.alpha_star_unchecked(lam))
    }

    #[inline]
    pub(crate) fn alpha_star_unchecked(&self, lam: &[f64]) -> f64 {
        half_form(&self.sigma_inv, lam)
    }

    /// The section `α*ᵢ(t) = α*(t Xᵢ) = ½ t² (Σ⁻¹)ᵢᵢ`.
    pub fn alpha_star_section(&self, i: usize, t: f64) -> f64 {
        0.5 * t * t * self.sigma_inv[(i, i)]
    }
}

fn half_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[(i, j)] * v[j];
        }
        s += v[i] * row;
    }
    0.5 * s
}

/// A piecewise linear path in the first layer through `(tₖ, h(tₖ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePath {
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewisePath {
    /// Knots must run strictly from 0 to 1 and the path must start at 0.
    pub fn new(knots: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, RateError> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(RateError::InvalidPath(format!(
                "{} knots and {} values; need matching counts of at least 2",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(RateError::InvalidPath("knots must start at 0 and end at 1".into()));
        }
        if let Some(i) = (1..knots.len()).find(|&i| !(knots[i] > knots[i - 1])) {
            return Err(RateError::NonIncreasingTimes { index: i });
        }
        let d = values[0].len();
        if values.iter().any(|v| v.len() != d) {
            return Err(RateError::InvalidPath("values have differing dimensions".into()));
        }
        if values[0].iter().any(|x| *x != 0.0) {
            return Err(RateError::InvalidPath("path must start at 0".into()));
        }
        Ok(PiecewisePath { knots, values })
    }

    pub(crate) fn new_unchecked(knots: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        PiecewisePath { knots, values }
    }

    /// The path with `increments.len()` uniform segments and the given
    /// increments.
    pub fn from_increments(increments: &[Vec<f64>]) -> Result<Self, RateError> {
        let k = increments.len();
        if k == 0 {
            return Err(RateError::InvalidPath("at least one segment is required".into()));
        }
        let d = increments[0].len();
        let mut values = Vec::with_capacity(k + 1);
        let mut acc = vec![0.0; d];
        values.push(acc.clone());
        for u in increments {
            if u.len() != d {
                return Err(RateError::InvalidPath("increments have differing dimensions".into()));
            }
            acc.iter_mut().zip(u).for_each(|(a, x)| *a += x);
            values.push(acc.clone());
        }
        let knots = (0..=k).map(|i| i as f64 / k as f64).collect();
        Ok(PiecewisePath { knots, values })
    }

    /// The straight path `t ↦ t·v`.
    pub fn straight(v: &[f64]) -> Self {
        PiecewisePath {
            knots: vec![0.0, 1.0],
            values: vec![vec![0.0; v.len()], v.to_vec()],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    /// `h(1)`.
    pub fn end(&self) -> &[f64] {
        &self.values[self.values.len() - 1]
    }

    /// `Δhₖ = h(tₖ) − h(tₖ₋₁)`.
    pub fn increments(&self) -> Vec<Vec<f64>> {
        self.values
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect()
    }

    /// Inserts a knot at `t` on the segment containing it, keeping the path
    /// geometry.
    pub fn insert_knot(&self, t: f64) -> Result<Self, RateError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(RateError::InvalidPath(format!("knot {t} is not interior")));
        }
        let k = self.knots.partition_point(|&s| s < t);
        if self.knots[k] == t {
            return Ok(self.clone());
        }
        let (t0, t1) = (self.knots[k - 1], self.knots[k]);
        let a = (t - t0) / (t1 - t0);
        let v: Vec<f64> = self.values[k - 1]
            .iter()
            .zip(&self.values[k])
            .map(|(x, y)| x + a * (y - x))
            .collect();
        let mut out = self.clone();
        out.knots.insert(k, t);
        out.values.insert(k, v);
        Ok(out)
    }
}

/// `I′(h) = Σₖ (tₖ − tₖ₋₁) α*(Δhₖ / (tₖ − tₖ₋₁))`.
pub fn path_rate(forms: &QuadraticForms, h: &PiecewisePath) -> Result<f64, RateError> {
    forms.check(h.end())?;
    Ok(h.increments()
        .iter()
        .zip(h.knots.windows(2))
        .map(|(dh, w)| {
            let dt = w[1] - w[0];
            let slope: Vec<f64> = dh.iter().map(|x| x / dt).collect();
            dt * forms.alpha_star_unchecked(&slope)
        })
        .sum())
}

/// `I_j(λ)` for times `0 < t₁ < … < t_J ≤ 1` and values `λ₁, …, λ_J`, with
/// `λ₀ = 0` at `t₀ = 0`.
pub fn finite_dim_rate(
    forms: &QuadraticForms,
    times: &[f64],
    lam: &[Vec<f64>],
) -> Result<f64, RateError> {
    if times.len() != lam.len() || times.is_empty() {
        return Err(RateError::InvalidPath(format!(
            "{} times and {} values",
            times.len(),
            lam.len()
        )));
    }
    let mut prev_t = 0.0;
    let mut prev = vec![0.0; forms.dim()];
    let mut total = 0.0;
    for (k, (&t, l)) in times.iter().zip(lam).enumerate() {
        if !(t > prev_t && t <= 1.0) {
            return Err(RateError::NonIncreasingTimes { index: k });
        }
        forms.check(l)?;
        let dt = t - prev_t;
        let slope: Vec<f64> = l.iter().zip(&prev).map(|(a, b)| (a - b) / dt).collect();
        total += dt * forms.alpha_star_unchecked(&slope);
        prev_t = t;
        prev.copy_from_slice(l);
    }
    Ok(total)
}

/// The development `F(h) = Πₖ exp(Δhₖ)` under the chosen group law.
pub fn develop(alg: &StratifiedAlgebra, h: &PiecewisePath, law: GroupLaw) -> Result<GroupElement, RateError> {
    if h.dim() != alg.first_layer_dim() {
        return Err(RateError::DimensionMismatch {
            what: "path",
            expected: alg.first_layer_dim(),
            found: h.dim(),
        });
    }
    let steps: Vec<GroupElement> = h
        .increments()
        .iter()
        .map(|u| alg.horizontal(u))
        .collect::<Result<_, _>>()?;
    Ok(alg.product_of(law, &steps)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> QuadraticForms {
        QuadraticForms::isotropic(2, 0.5).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let f = half();
        assert_eq!(f.alpha(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f.alpha(&[2.0, 0.0]).unwrap(), 1.0);
        assert_eq!(f.alpha(&[-1.5, 0.3]).unwrap(), f.alpha(&[1.5, -0.3]).unwrap());
        assert!((f.alpha_star(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((f.alpha_star_section(1, 3.0) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn path_rate_examples() {
        let f = half();
        let h = PiecewisePath::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        assert!((path_rate(&f, &h).unwrap() - 2.0).abs() < 1e-15);
        let j = finite_dim_rate(&f, &[0.5, 1.0], &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(j, path_rate(&f, &h).unwrap());
        let line = PiecewisePath::straight(&[0.7, -0.2]);
        assert_eq!(path_rate(&f, &line).unwrap(), f.alpha_star(&[0.7, -0.2]).unwrap());
    }

    #[test]
    fn bad_times() {
        let f = half();
        let err = finite_dim_rate(&f, &[0.5, 0.5], &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap_err();
        assert_eq!(err, RateError::NonIncreasingTimes { index: 1 });
        assert!(PiecewisePath::new(vec![0.0, 0.6, 0.4, 1.0], vec![vec![0.0]; 4]).is_err());
    }

    #[test]
    fn develop_heisenberg() {
        let alg = StratifiedAlgebra::heisenberg();
        let h = PiecewisePath::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let g = develop(&alg, &h, GroupLaw::Original).unwrap();
        assert_eq!(g.coords(), &[1.0, 1.0, 0.5]);
        let h = PiecewisePath::new(
            vec![0.0, 0.5, 1.0],
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let g = develop(&alg, &h, GroupLaw::Original).unwrap();
        assert_eq!(g.coords(), &[1.0, 1.0, -0.5]);
    }
}
