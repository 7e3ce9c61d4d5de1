//! Nilpotent Lie algebras with a layered basis, and the simply connected group
//! they integrate to, realized in exponential coordinates of the first kind.
//!
//! A group element `g = exp(Z)` is stored as its log-coordinate vector `Z`, so
//! `exp` and `log` are coordinate identities and the first-layer projection
//! `log(g)|_{g^(1)}` is an exact slice. The group law is the
//! Baker–Campbell–Hausdorff series, which terminates for nilpotent algebras.
//!
//! Two bracket tables are carried side by side: the original one, which only
//! has to respect the filtration (`[layer a, layer b] ⊂ layers ≥ a+b`), and its
//! graded part, which is the bracket of the limit algebra. Both group laws
//! (the original product and the limit product) are evaluated with the same
//! series code.

mod bch;
mod finsler;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bch::MAX_SUPPORTED_STEP;
pub(crate) use bch::Scratch;
pub use finsler::{finsler_distance, finsler_distance_with, FinslerOptions};

/// Relative tolerance used when checking antisymmetry and Jacobi at construction.
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("an algebra needs at least one layer")]
    NoLayers,
    #[error("layer {layer} has dimension zero")]
    EmptyLayer { layer: usize },
    #[error("bracket entry ({i}, {j}, {k}) is outside the basis of dimension {dim}")]
    IndexOutOfRange { i: usize, j: usize, k: usize, dim: usize },
    #[error("bracket entry ({i}, {i}, {k}) is nonzero; [X, X] must vanish")]
    DiagonalBracket { i: usize, k: usize },
    #[error("bracket entries for ({i}, {j}, {k}) are not antisymmetric")]
    AntisymmetryViolation { i: usize, j: usize, k: usize },
    #[error(
        "[X_{i}, X_{j}] has a component on X_{k}, below layer {min_layer}; \
         the bracket must respect the layer filtration"
    )]
    FiltrationViolation { i: usize, j: usize, k: usize, min_layer: usize },
    #[error("Jacobi identity fails on basis triple ({i}, {j}, {l}) by {defect:e}")]
    JacobiViolation { i: usize, j: usize, l: usize, defect: f64 },
    #[error("group law is implemented for step <= {max}, algebra has step {step}", max = MAX_SUPPORTED_STEP)]
    UnsupportedStep { step: usize },
    #[error("vector has length {found}, algebra dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dilation parameter must be nonnegative, got {0}")]
    NegativeEps(f64),
    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),
}

/// Which bracket (and hence which group law) to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLaw {
    /// The bracket table as given.
    #[default]
    Original,
    /// The graded part of the bracket table: the limit algebra.
    Limit,
}

/// Structure constants `c[i][j][k]` with `[X_i, X_j] = sum_k c[i][j][k] X_k`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BracketTable {
    dim: usize,
    dense: Vec<f64>,
    /// Nonzero entries `(i, j, k, c)` with `i < j`; the table is antisymmetric.
    terms: Vec<(usize, usize, usize, f64)>,
}

impl BracketTable {
    fn zero(dim: usize) -> Self {
        BracketTable {
            dim,
            dense: vec![0.0; dim * dim * dim],
            terms: Vec::new(),
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.dense[self.idx(i, j, k)]
    }

    fn rebuild_terms(&mut self) {
        let d = self.dim;
        self.terms.clear();
        for i in 0..d {
            for j in (i + 1)..d {
                for k in 0..d {
                    let c = self.get(i, j, k);
                    if c != 0.0 {
                        self.terms.push((i, j, k, c));
                    }
                }
            }
        }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `out = [a, b]`. Each pair is evaluated as `c (aᵢbⱼ − aⱼbᵢ)`, so the
    /// result is exactly antisymmetric in `a, b`.
    #[inline]
    pub(crate) fn bracket_into(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(i, j, k, c) in &self.terms {
            out[k] += c * (a[i] * b[j] - a[j] * b[i]);
        }
    }

    fn bracket(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.bracket_into(a, b, &mut out);
        out
    }
}

/// A nilpotent Lie algebra `g = g^(1) ⊕ … ⊕ g^(r)` with a fixed layered basis.
///
/// Basis vectors are numbered layer by layer, starting from the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedAlgebra {
    layer_dims: Vec<usize>,
    offsets: Vec<usize>,
    /// 1-based layer of each basis vector.
    layer_of: Vec<usize>,
    table: BracketTable,
    graded: BracketTable,
}

impl StratifiedAlgebra {
    /// Builds an algebra from layer dimensions and bracket entries `(i, j, k, c)`
    /// meaning `c` is the `X_k` coefficient of `[X_i, X_j]`.
    ///
    /// The `(j, i, k)` entries are filled in by antisymmetry; supplying both is
    /// allowed as long as they agree. The table must respect the filtration and
    /// satisfy Jacobi.
    pub fn new(
        layer_dims: Vec<usize>,
        brackets: &[(usize, usize, usize, f64)],
    ) -> Result<Self, AlgebraError> {
        if layer_dims.is_empty() {
            return Err(AlgebraError::NoLayers);
        }
        if let Some(layer) = layer_dims.iter().position(|&d| d == 0) {
            return Err(AlgebraError::EmptyLayer { layer: layer + 1 });
        }
        let mut offsets = Vec::with_capacity(layer_dims.len() + 1);
        let mut layer_of = Vec::new();
        offsets.push(0);
        for (l, &d) in layer_dims.iter().enumerate() {
            offsets.push(offsets[l] + d);
            layer_of.extend(std::iter::repeat(l + 1).take(d));
        }
        let dim = *offsets.last().unwrap();

        let mut table = BracketTable::zero(dim);
        let mut given = vec![false; dim * dim * dim];
        for &(i, j, k, c) in brackets {
            if i >= dim || j >= dim || k >= dim {
                return Err(AlgebraError::IndexOutOfRange { i, j, k, dim });
            }
            if i == j {
                if c != 0.0 {
                    return Err(AlgebraError::DiagonalBracket { i, k });
                }
                continue;
            }
            let scale = c.abs().max(1.0);
            for (a, b, v) in [(i, j, c), (j, i, -c)] {
                let at = table.idx(a, b, k);
                if given[at] && (table.dense[at] - v).abs() > STRUCTURE_TOL * scale {
                    return Err(AlgebraError::AntisymmetryViolation { i, j, k });
                }
                table.dense[at] = v;
                given[at] = true;
            }
        }
        table.rebuild_terms();

        for &(i, j, k, _) in &table.terms {
            let min_layer = layer_of[i] + layer_of[j];
            if layer_of[k] < min_layer {
                return Err(AlgebraError::FiltrationViolation { i, j, k, min_layer });
            }
        }

        let mut graded = table.clone();
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    if layer_of[k] != layer_of[i] + layer_of[j] {
                        let at = graded.idx(i, j, k);
                        graded.dense[at] = 0.0;
                    }
                }
            }
        }
        graded.rebuild_terms();

        let alg = StratifiedAlgebra {
            layer_dims,
            offsets,
            layer_of,
            table,
            graded,
        };
        alg.check_jacobi()?;
        Ok(alg)
    }

    /// `ℝ^d` as a one-layer abelian algebra.
    pub fn abelian(d: usize) -> Result<Self, AlgebraError> {
        Self::new(vec![d], &[])
    }

    /// The three-dimensional Heisenberg algebra: `[X, Y] = Z`, layers (2, 1).
    pub fn heisenberg() -> Self {
        Self::new(vec![2, 1], &[(0, 1, 2, 1.0)]).expect("heisenberg table is valid")
    }

    fn check_jacobi(&self) -> Result<(), AlgebraError> {
        let d = self.dim();
        let scale = self
            .table
            .terms
            .iter()
            .fold(1.0_f64, |m, t| m.max(t.3.abs()));
        let tol = STRUCTURE_TOL * scale * scale;
        let unit = |i: usize| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        };
        for i in 0..d {
            for j in (i + 1)..d {
                for l in (j + 1)..d {
                    let (xi, xj, xl) = (unit(i), unit(j), unit(l));
                    let a = self.table.bracket(&xi, &self.table.bracket(&xj, &xl));
                    let b = self.table.bracket(&xj, &self.table.bracket(&xl, &xi));
                    let c = self.table.bracket(&xl, &self.table.bracket(&xi, &xj));
                    let defect = (0..d)
                        .map(|k| (a[k] + b[k] + c[k]).abs())
                        .fold(0.0, f64::max);
                    if defect > tol {
                        return Err(AlgebraError::JacobiViolation { i, j, l, defect });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }

    /// Number of layers `r`.
    pub fn step(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Dimension of the generating layer `g^(1)`.
    pub fn first_layer_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Index range of layer `k` (1-based) in the full basis.
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k - 1]..self.offsets[k]
    }

    /// 1-based layer of basis vector `i`.
    pub fn layer_of(&self, i: usize) -> usize {
        self.layer_of[i]
    }

    /// True when every bracket vanishes.
    pub fn is_abelian(&self) -> bool {
        self.table.is_zero()
    }

    /// Structure constant `c[i][j][k]` of the original bracket.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.table.get(i, j, k)
    }

    /// Structure constant of the limit (graded) bracket.
    pub fn limit_structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.graded.get(i, j, k)
    }

    /// Nonzero entries `(i, j, k, c)` with `i < j`, the compact form used by the
    /// graph JSON schema.
    pub fn bracket_entries(&self) -> Vec<(usize, usize, usize, f64)> {
        self.table.terms.clone()
    }

    pub(crate) fn table(&self, law: GroupLaw) -> &BracketTable {
        match law {
            GroupLaw::Original => &self.table,
            GroupLaw::Limit => &self.graded,
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<(), AlgebraError> {
        if len != self.dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_step(&self) -> Result<(), AlgebraError> {
        if self.step() > MAX_SUPPORTED_STEP {
            return Err(AlgebraError::UnsupportedStep { step: self.step() });
        }
        Ok(())
    }

    pub fn zero_vector(&self) -> AlgebraVector {
        AlgebraVector(vec![0.0; self.dim()])
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(self.zero_vector())
    }

    /// Checked construction of an algebra vector.
    pub fn vector(&self, coords: Vec<f64>) -> Result<AlgebraVector, AlgebraError> {
        self.check_len(coords.len())?;
        Ok(AlgebraVector(coords))
    }

    /// Checked construction of a group element from log-coordinates.
    pub fn element(&self, log_coords: Vec<f64>) -> Result<GroupElement, AlgebraError> {
        Ok(GroupElement(self.vector(log_coords)?))
    }

    /// The element `exp(v)` for `v` in the first layer.
    pub fn horizontal(&self, v: &[f64]) -> Result<GroupElement, AlgebraError> {
        if v.len() != self.first_layer_dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.first_layer_dim(),
                found: v.len(),
            });
        }
        let mut z = vec![0.0; self.dim()];
        z[..v.len()].copy_from_slice(v);
        Ok(GroupElement(AlgebraVector(z)))
    }

    /// The original Lie bracket `[Z1, Z2]`.
    pub fn bracket(
        &self,
        z1: &AlgebraVector,
        z2: &AlgebraVector,
    ) -> Result<AlgebraVector, AlgebraError> {
        self.check_len(z1.len())?;
        self.check_len(z2.len())?;
        Ok(AlgebraVector(self.table.bracket(&z1.0, &z2.0)))
    }

    /// The limit bracket `[[Z1, Z2]] = lim_{ε→0} T_ε [T_{1/ε} Z1, T_{1/ε} Z2]`,
    /// read off the graded part of the table.
    pub fn limit_bracket(
        &self,
        z1: &AlgebraVector,
        z2: &AlgebraVector,
    ) -> Result<AlgebraVector, AlgebraError> {
        self.check_len(z1.len())?;
        self.check_len(z2.len())?;
        Ok(AlgebraVector(self.graded.bracket(&z1.0, &z2.0)))
    }

    /// `T_ε [T_{1/ε} Z1, T_{1/ε} Z2]` at a fixed `ε > 0`; tends to
    /// [`limit_bracket`](Self::limit_bracket) with error `O(ε)`.
    pub fn scaled_bracket(
        &self,
        eps: f64,
        z1: &AlgebraVector,
        z2: &AlgebraVector,
    ) -> Result<AlgebraVector, AlgebraError> {
        if eps <= 0.0 {
            return Err(AlgebraError::NegativeEps(eps));
        }
        let a = self.dilate_t(1.0 / eps, z1)?;
        let b = self.dilate_t(1.0 / eps, z2)?;
        let c = self.bracket(&a, &b)?;
        self.dilate_t(eps, &c)
    }

    /// `T_ε(Z) = ε Z^(1) + ε² Z^(2) + … + ε^r Z^(r)`.
    pub fn dilate_t(&self, eps: f64, z: &AlgebraVector) -> Result<AlgebraVector, AlgebraError> {
        if eps < 0.0 || eps.is_nan() {
            return Err(AlgebraError::NegativeEps(eps));
        }
        self.check_len(z.len())?;
        let mut out = z.clone();
        let mut factor = 1.0;
        for k in 1..=self.step() {
            factor *= eps;
            for x in &mut out.0[self.layer_range(k)] {
                *x *= factor;
            }
        }
        Ok(out)
    }

    /// Dilation `τ_ε(g) = exp(T_ε(log g))`.
    pub fn dilate_tau(&self, eps: f64, g: &GroupElement) -> Result<GroupElement, AlgebraError> {
        Ok(GroupElement(self.dilate_t(eps, &g.0)?))
    }

    /// `exp(a) · exp(b)` via the Baker–Campbell–Hausdorff series.
    pub fn bch_product(
        &self,
        a: &GroupElement,
        b: &GroupElement,
    ) -> Result<GroupElement, AlgebraError> {
        self.product(GroupLaw::Original, a, b)
    }

    /// The limit-group product `g ∗ h`.
    pub fn limit_product(
        &self,
        g: &GroupElement,
        h: &GroupElement,
    ) -> Result<GroupElement, AlgebraError> {
        self.product(GroupLaw::Limit, g, h)
    }

    pub fn product(
        &self,
        law: GroupLaw,
        a: &GroupElement,
        b: &GroupElement,
    ) -> Result<GroupElement, AlgebraError> {
        self.check_step()?;
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        let mut out = vec![0.0; self.dim()];
        let mut scratch = bch::Scratch::new(self.dim());
        bch::bch_into(
            self.table(law),
            self.step(),
            a.coords(),
            b.coords(),
            &mut out,
            &mut scratch,
        );
        Ok(GroupElement(AlgebraVector(out)))
    }

    /// Left-to-right product of a sequence of elements.
    pub fn product_of<'a, I>(&self, law: GroupLaw, elems: I) -> Result<GroupElement, AlgebraError>
    where
        I: IntoIterator<Item = &'a GroupElement>,
    {
        self.check_step()?;
        let mut acc = vec![0.0; self.dim()];
        let mut next = vec![0.0; self.dim()];
        let mut scratch = bch::Scratch::new(self.dim());
        for g in elems {
            self.check_len(g.len())?;
            bch::bch_into(self.table(law), self.step(), &acc, g.coords(), &mut next, &mut scratch);
            std::mem::swap(&mut acc, &mut next);
        }
        Ok(GroupElement(AlgebraVector(acc)))
    }

    /// Allocation-free product on raw coordinates; the caller has already
    /// checked lengths and step. `out` must not alias `a` or `b`.
    #[inline]
    pub(crate) fn product_into(
        &self,
        law: GroupLaw,
        a: &[f64],
        b: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
    ) {
        bch::bch_into(self.table(law), self.step(), a, b, out, scratch);
    }

    /// Inverse element; in exponential coordinates this is negation.
    pub fn group_inverse(&self, a: &GroupElement) -> GroupElement {
        GroupElement(AlgebraVector(a.coords().iter().map(|x| -x).collect()))
    }

    /// The canonical diffeomorphism `φ : G → G_∞`. In exponential coordinates
    /// the linear identification `ι` is the identity on coordinates.
    pub fn phi_map(&self, g: &GroupElement) -> GroupElement {
        g.clone()
    }

    /// `φ^{-1} : G_∞ → G`.
    pub fn phi_inverse(&self, g: &GroupElement) -> GroupElement {
        g.clone()
    }

    /// `‖Z‖_g = ‖Z^(1)‖ + Σ_{k≥2} ‖Z^(k)‖`, every layer with its Euclidean norm.
    pub fn g_norm(&self, z: &AlgebraVector) -> Result<f64, AlgebraError> {
        self.check_len(z.len())?;
        Ok(self.g_norm_unchecked(z.as_slice()))
    }

    pub(crate) fn g_norm_unchecked(&self, z: &[f64]) -> f64 {
        (1..=self.step())
            .map(|k| {
                z[self.layer_range(k)]
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

/// A vector of the Lie algebra in the layered basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlgebraVector(Vec<f64>);

impl AlgebraVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// The `Z^(k)` slice for 1-based layer `k`.
    pub fn layer<'a>(&'a self, alg: &StratifiedAlgebra, k: usize) -> &'a [f64] {
        &self.0[alg.layer_range(k)]
    }

    pub fn max_abs_diff(&self, other: &AlgebraVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A group element `exp(Z)`, stored as its log-coordinates `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(AlgebraVector);

impl GroupElement {
    pub fn log(&self) -> &AlgebraVector {
        &self.0
    }

    pub fn exp(z: AlgebraVector) -> Self {
        GroupElement(z)
    }

    pub(crate) fn from_coords(coords: Vec<f64>) -> Self {
        GroupElement(AlgebraVector(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0 .0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `log(g)|_{g^(1)}`.
    pub fn first_layer<'a>(&'a self, alg: &StratifiedAlgebra) -> &'a [f64] {
        self.0.layer(alg, 1)
    }

    pub fn is_identity(&self) -> bool {
        self.coords().iter().all(|&x| x == 0.0)
    }

    pub fn max_abs_diff(&self, other: &GroupElement) -> f64 {
        self.0.max_abs_diff(&other.0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp(")?;
        for (i, x) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}
