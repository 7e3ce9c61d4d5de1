//! Scaling sequences `aₙ` between `√n` and `n`.

use std::fmt;
use std::sync::Arc;

use super::WalkError;

/// First `n` with `log log n > 0`, rounded up.
pub const LIL_MIN_N: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingKind {
    /// `aₙ = n^θ` with `θ ∈ (½, 1)`.
    Power { theta: f64 },
    /// `bₙ = √(n log log n)`, `n ≥ 16`.
    Lil,
    Custom,
}

#[derive(Clone)]
pub struct ScalingSequence {
    kind: ScalingKind,
    min_n: u64,
    custom: Option<Arc<dyn Fn(u64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for ScalingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalingSequence")
            .field("kind", &self.kind)
            .field("min_n", &self.min_n)
            .finish()
    }
}

impl ScalingSequence {
    pub fn power(theta: f64) -> Result<Self, WalkError> {
        if !(theta > 0.5 && theta < 1.0) {
            return Err(WalkError::InvalidScaling(format!(
                "exponent {theta} is outside (1/2, 1)"
            )));
        }
        Ok(ScalingSequence {
            kind: ScalingKind::Power { theta },
            min_n: 1,
            custom: None,
        })
    }

    pub fn lil() -> Self {
        ScalingSequence {
            kind: ScalingKind::Lil,
            min_n: LIL_MIN_N,
            custom: None,
        }
    }

    /// A user-supplied sequence defined for `n ≥ min_n`, checked on a
    /// logarithmic grid with [`check_window`](Self::check_window).
    pub fn custom<F>(min_n: u64, f: F) -> Result<Self, WalkError>
    where
        F: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        let s = ScalingSequence {
            kind: ScalingKind::Custom,
            min_n: min_n.max(1),
            custom: Some(Arc::new(f)),
        };
        s.check_window()?;
        Ok(s)
    }

    pub fn kind(&self) -> ScalingKind {
        self.kind
    }

    pub fn min_n(&self) -> u64 {
        self.min_n
    }

    fn name(&self) -> String {
        match self.kind {
            ScalingKind::Power { theta } => format!("n^{theta}"),
            ScalingKind::Lil => "sqrt(n log log n)".into(),
            ScalingKind::Custom => "custom".into(),
        }
    }

    /// `aₙ`.
    pub fn value(&self, n: u64) -> Result<f64, WalkError> {
        if n < self.min_n {
            return Err(WalkError::ScalingDomain {
                kind: self.name(),
                n,
                min: self.min_n,
            });
        }
        let nf = n as f64;
        Ok(match (&self.kind, &self.custom) {
            (ScalingKind::Power { theta }, _) => nf.powf(*theta),
            (ScalingKind::Lil, _) => (nf * nf.ln().ln()).sqrt(),
            (ScalingKind::Custom, Some(f)) => f(n),
            (ScalingKind::Custom, None) => unreachable!("custom sequences carry a closure"),
        })
    }

    /// Checks positivity, monotonicity, and the growth window
    /// `aₙ/√n → ∞`, `aₙ/n → 0` on the grid `n = min_n · 2^k` up to `2^60`.
    ///
    /// The limits are probed as trends: over the grid `aₙ/√n` must grow and
    /// `aₙ/n` must shrink, each by at least 10%.
    pub fn check_window(&self) -> Result<(), WalkError> {
        let mut grid = Vec::new();
        let mut n = self.min_n.max(1);
        while n <= 1 << 60 {
            grid.push(n);
            n *= 2;
        }
        let values: Vec<f64> = grid
            .iter()
            .map(|&n| self.value(n))
            .collect::<Result<_, _>>()?;
        if let Some(i) = values.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(WalkError::InvalidScaling(format!(
                "a_n = {} at n = {}",
                values[i], grid[i]
            )));
        }
        if let Some(i) = (1..values.len()).find(|&i| values[i] <= values[i - 1]) {
            return Err(WalkError::InvalidScaling(format!(
                "not increasing between n = {} and n = {}",
                grid[i - 1],
                grid[i]
            )));
        }
        let (first, last) = (0, values.len() - 1);
        let ratio = |i: usize, p: f64| values[i] / (grid[i] as f64).powf(p);
        if ratio(last, 0.5) < 1.1 * ratio(first, 0.5) {
            return Err(WalkError::InvalidScaling("a_n / sqrt(n) does not grow".into()));
        }
        if ratio(last, 1.0) > ratio(first, 1.0) / 1.1 {
            return Err(WalkError::InvalidScaling("a_n / n does not decay".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_kinds_are_in_the_window() {
        for theta in [0.51, 0.6, 0.75, 0.9, 0.99] {
            ScalingSequence::power(theta).unwrap().check_window().unwrap();
        }
        ScalingSequence::lil().check_window().unwrap();
    }

    #[test]
    fn rejects_out_of_window() {
        assert!(ScalingSequence::power(0.5).is_err());
        assert!(ScalingSequence::power(1.0).is_err());
        assert!(ScalingSequence::custom(1, |n| n as f64).is_err());
        assert!(ScalingSequence::custom(1, |n| (n as f64).sqrt()).is_err());
        assert!(ScalingSequence::custom(1, |n| (n as f64).powf(0.7)).is_ok());
    }

    #[test]
    fn lil_values() {
        let s = ScalingSequence::lil();
        assert!(s.value(15).is_err());
        let b = s.value(1_000_000).unwrap();
        let want = (1e6_f64 * (1e6_f64).ln().ln()).sqrt();
        assert_eq!(b, want);
    }
}
