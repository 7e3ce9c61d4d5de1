//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Product of 3×3 upper unitriangular matrices `[[1,a,c],[0,1,b],[0,0,1]]`,
/// stored as `(a, b, c)`.
pub fn unipotent_mul(x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [x[0] + y[0], x[1] + y[1], x[2] + y[2] + x[0] * y[1]]
}

/// Matrix exponential of `[[0,x,z],[0,0,y],[0,0,0]]` as `(a, b, c)`.
pub fn unipotent_exp(v: [f64; 3]) -> [f64; 3] {
    [v[0], v[1], v[2] + 0.5 * v[0] * v[1]]
}

/// Matrix logarithm of a unitriangular matrix `(a, b, c)`:
/// `log(I + N) = N − N²/2` since `N³ = 0`.
pub fn unipotent_log(m: [f64; 3]) -> [f64; 3] {
    [m[0], m[1], m[2] - 0.5 * m[0] * m[1]]
}

/// Exact `I(g)` on the Heisenberg group for `Σ = ½I`, where
/// `α*(λ) = |λ|²` and the rate is the squared sub-Riemannian length with the
/// Euclidean norm on the first layer.
///
/// Length minimizers project to circular arcs. An arc over a chord of length
/// `r` with turning angle `θ` encloses signed area `A` with
/// `A/r² = (θ − sin θ)/(8 sin²(θ/2))` and has length `rθ/(2 sin(θ/2))`.
/// In exponential coordinates the third coordinate is exactly that area.
pub fn heisenberg_rate_isotropic_half(g: [f64; 3]) -> f64 {
    let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
    let a = g[2].abs();
    if a == 0.0 {
        return r * r;
    }
    if r == 0.0 {
        let len = 2.0 * (std::f64::consts::PI * a).sqrt();
        return len * len;
    }
    let target = a / (r * r);
    let ratio = |t: f64| (t - t.sin()) / (8.0 * (t / 2.0).sin().powi(2));
    let (mut lo, mut hi) = (0.0_f64, 2.0 * std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if ratio(mid.max(1e-300)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let len = r * t / (2.0 * (t / 2.0).sin());
    len * len
}

/// `sup_χ (λ·χ − ½χᵀΣχ)` over `χ ∈ [−10, 10]²` for a 2×2 `Σ`: a grid of
/// step `1e−3` in `χ₁` with the inner maximum over `χ₂` taken exactly (the
/// objective is a concave parabola in `χ₂`, clipped to the box).
pub fn fenchel_grid_sup(sigma: [[f64; 2]; 2], lam: [f64; 2]) -> f64 {
    let [[s11, s12], [_, s22]] = sigma;
    let f = |x: f64, y: f64| lam[0] * x + lam[1] * y - 0.5 * (s11 * x * x + 2.0 * s12 * x * y + s22 * y * y);
    let mut best = f64::NEG_INFINITY;
    for k in 0..=20_000 {
        let x = -10.0 + k as f64 * 1e-3;
        let y = ((lam[1] - s12 * x) / s22).clamp(-10.0, 10.0);
        best = best.max(f(x, y));
    }
    best
}

/// Truncated tensor algebra over `ℝ²` up to degree `depth`: the free
/// associative algebra in which free nilpotent Lie groups embed faithfully.
/// Degree-`k` coefficients are indexed by words read as base-2 numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub depth: usize,
    pub levels: Vec<Vec<f64>>,
}

impl Tensor {
    pub fn zero(depth: usize) -> Self {
        Tensor {
            depth,
            levels: (0..=depth).map(|k| vec![0.0; 1 << k]).collect(),
        }
    }

    pub fn letter(depth: usize, i: usize) -> Self {
        let mut t = Self::zero(depth);
        t.levels[1][i] = 1.0;
        t
    }

    pub fn add(&self, o: &Tensor) -> Tensor {
        let mut out = self.clone();
        for (a, b) in out.levels.iter_mut().zip(&o.levels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let mut out = self.clone();
        out.levels.iter_mut().flatten().for_each(|x| *x *= c);
        out
    }

    pub fn mul(&self, o: &Tensor) -> Tensor {
        let mut out = Self::zero(self.depth);
        for p in 0..=self.depth {
            for q in 0..=self.depth - p {
                for (i, a) in self.levels[p].iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    for (j, b) in o.levels[q].iter().enumerate() {
                        out.levels[p + q][(i << q) | j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn bracket(&self, o: &Tensor) -> Tensor {
        self.mul(o).add(&o.mul(self).scale(-1.0))
    }

    /// `exp(x) = Σ xᵏ/k!` for `x` without constant term.
    pub fn exp(&self) -> Tensor {
        let mut out = Self::zero(self.depth);
        out.levels[0][0] = 1.0;
        let mut power = out.clone();
        for k in 1..=self.depth {
            power = power.mul(self).scale(1.0 / k as f64);
            out = out.add(&power);
        }
        out
    }

    /// `log(1 + y) = Σ (−1)^{k+1} yᵏ/k` for `x = 1 + y`.
    pub fn log(&self) -> Tensor {
        let mut y = self.clone();
        y.levels[0][0] -= 1.0;
        let mut out = Self::zero(self.depth);
        let mut power = y.clone();
        for k in 1..=self.depth {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out = out.add(&power.scale(sign / k as f64));
            power = power.mul(&y);
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.levels.iter().flatten().copied().collect()
    }
}

/// Rank-2 free nilpotent Lie algebra of step 3 or 4 realized inside the
/// tensor algebra, with a Hall-type basis
/// `X₀, X₁, X₂ = [X₀,X₁], X₃ = [X₀,X₂], X₄ = [X₁,X₂]` and for step 4
/// `X₅ = [X₀,X₃], X₆ = [X₁,X₃], X₇ = [X₁,X₄]`.
pub struct FreeNilpotent {
    pub depth: usize,
    pub layer_dims: Vec<usize>,
    pub basis: Vec<Tensor>,
}

impl FreeNilpotent {
    pub fn new(depth: usize) -> Self {
        let x0 = Tensor::letter(depth, 0);
        let x1 = Tensor::letter(depth, 1);
        let x2 = x0.bracket(&x1);
        let x3 = x0.bracket(&x2);
        let x4 = x1.bracket(&x2);
        let mut basis = vec![x0.clone(), x1.clone(), x2, x3.clone(), x4.clone()];
        let mut layer_dims = vec![2, 1, 2];
        if depth == 4 {
            basis.extend([x0.bracket(&x3), x1.bracket(&x3), x1.bracket(&x4)]);
            layer_dims.push(3);
        }
        assert!(depth == 3 || depth == 4);
        FreeNilpotent { depth, layer_dims, basis }
    }

    pub fn embed(&self, coords: &[f64]) -> Tensor {
        coords
            .iter()
            .zip(&self.basis)
            .fold(Tensor::zero(self.depth), |acc, (c, b)| acc.add(&b.scale(*c)))
    }

    /// Least-squares coordinates of a tensor in the basis, with the residual
    /// norm (zero for Lie elements).
    pub fn project(&self, t: &Tensor) -> (Vec<f64>, f64) {
        let rows = t.flat().len();
        let a = nalgebra::DMatrix::from_fn(rows, self.basis.len(), |r, c| self.basis[c].flat()[r]);
        let b = nalgebra::DVector::from_vec(t.flat());
        let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let residual = (&a * &x - &b).norm();
        (x.iter().copied().collect(), residual)
    }

    /// Structure constants `(i, j, k, c)` with `i < j` read off the tensor
    /// brackets of basis elements.
    pub fn structure_constants(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.basis.len() {
            for j in i + 1..self.basis.len() {
                let (c, res) = self.project(&self.basis[i].bracket(&self.basis[j]));
                assert!(res < 1e-12);
                for (k, v) in c.iter().enumerate() {
                    if v.abs() > 1e-12 {
                        out.push((i, j, k, v.round()));
                    }
                }
            }
        }
        out
    }

    /// `log(exp a · exp b)` computed in the tensor algebra.
    pub fn bch(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let prod = self.embed(a).exp().mul(&self.embed(b).exp()).log();
        let (c, res) = self.project(&prod);
        assert!(res < 1e-10, "product left the Lie algebra: {res}");
        c
    }
}
