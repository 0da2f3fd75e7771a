//! Block-Toeplitz operators, matrix pseudo-polynomials and unit-circle
//! quadrature.
//!
//! A [`BlockRow`] `(Y₀, Y₁, …, Yₙ)` is the first block row of a symmetric
//! block-Toeplitz matrix. A [`PseudoPoly`] stores the coefficients of
//! `C₀ + Σⱼ (e^{-ijθ} Cⱼ + e^{ijθ} Cⱼᵀ)`, which is Hermitian at every
//! frequency. The shift operator `Δ(θ) = [I, e^{iθ}I, …, e^{inθ}I]` links the
//! two: `Δ X Δ*` is the pseudo-polynomial with `C₀ = D₀(X)` and
//! `Cⱼ = ½ Dⱼ(X)`, where `D` is the adjoint of the Toeplitz map.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, herm_eigenvalues, symmetrize, CMatrix};

/// Relative asymmetry accepted (and silently removed) in `Y₀`.
const SYMMETRY_TOL: f64 = 1e-8;

/// First block row of a symmetric block-Toeplitz matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRow {
    m: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl BlockRow {
    /// Builds a block row, symmetrizing `Y₀`. Asymmetry above `1e-8`
    /// (relative to the largest entry of `Y₀`, floored at one) is rejected.
    pub fn new(mut blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Dimension("block row needs at least Y0".into()))?;
        let m = first.nrows();
        for (j, b) in blocks.iter().enumerate() {
            if b.nrows() != m || b.ncols() != m {
                return Err(Error::Dimension(format!(
                    "block {j} is {}x{}, expected {m}x{m}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let scale = blocks[0].iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let asym = asymmetry(&blocks[0]);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Asymmetric { asymmetry: asym });
        }
        symmetrize(&mut blocks[0]);
        Ok(Self { m, blocks })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            blocks: vec![DMatrix::zeros(m, m); n + 1],
        }
    }

    /// `(I, 0, …, 0)`.
    pub fn identity(m: usize, n: usize) -> Self {
        let mut out = Self::zeros(m, n);
        out.blocks[0] = DMatrix::identity(m, m);
        out
    }

    /// Splits an `m × m(n+1)` matrix `[Y₀ … Yₙ]` into blocks.
    pub fn from_wide(wide: &DMatrix<f64>) -> Result<Self> {
        let m = wide.nrows();
        if m == 0 || wide.ncols() % m != 0 {
            return Err(Error::Dimension(format!(
                "{}x{} is not a row of square blocks",
                wide.nrows(),
                wide.ncols()
            )));
        }
        let blocks = (0..wide.ncols() / m)
            .map(|j| wide.columns(j * m, m).into_owned())
            .collect();
        Self::new(blocks)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Order `n` (number of blocks minus one).
    pub fn n(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &DMatrix<f64> {
        &self.blocks[j]
    }

    /// `[Y₀ Y₁ … Yₙ]` as one `m × m(n+1)` matrix.
    pub fn to_wide(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m * self.blocks.len());
        for (j, b) in self.blocks.iter().enumerate() {
            out.view_mut((0, j * self.m), (self.m, self.m)).copy_from(b);
        }
        out
    }

    /// Inner product `tr(Y Zᵀ)` of the block rows viewed as wide matrices.
    pub fn inner(&self, other: &BlockRow) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| crate::linalg::frob_inner(a, b))
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .fold(0.0f64, |acc, b| acc.max(crate::linalg::max_abs(b)))
    }

    pub fn scaled(&self, s: f64) -> BlockRow {
        BlockRow {
            m: self.m,
            blocks: self.blocks.iter().map(|b| b * s).collect(),
        }
    }

    pub fn try_add(&self, other: &BlockRow) -> Result<BlockRow> {
        self.check_same_shape(other)?;
        Ok(BlockRow {
            m: self.m,
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn try_sub(&self, other: &BlockRow) -> Result<BlockRow> {
        self.try_add(&other.scaled(-1.0))
    }

    /// Keeps only the first `order + 1` blocks.
    pub fn truncated(&self, order: usize) -> BlockRow {
        BlockRow {
            m: self.m,
            blocks: self.blocks[..=order.min(self.n())].to_vec(),
        }
    }

    fn check_same_shape(&self, other: &BlockRow) -> Result<()> {
        if self.m != other.m || self.blocks.len() != other.blocks.len() {
            return Err(Error::Dimension(format!(
                "block rows ({}, n={}) and ({}, n={}) differ",
                self.m,
                self.n(),
                other.m,
                other.n()
            )));
        }
        Ok(())
    }
}

/// Matrix trigonometric pseudo-polynomial `C₀ + Σⱼ (e^{-ijθ}Cⱼ + e^{ijθ}Cⱼᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPoly {
    coeffs: BlockRow,
}

impl PseudoPoly {
    pub fn new(coeffs: BlockRow) -> Self {
        Self { coeffs }
    }

    pub fn constant(c0: DMatrix<f64>) -> Result<Self> {
        Ok(Self::new(BlockRow::new(vec![c0])?))
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self::new(BlockRow::zeros(m, n))
    }

    pub fn coeffs(&self) -> &BlockRow {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> &DMatrix<f64> {
        self.coeffs.block(j)
    }

    pub fn m(&self) -> usize {
        self.coeffs.m()
    }

    pub fn n(&self) -> usize {
        self.coeffs.n()
    }

    /// Value at frequency `theta`.
    pub fn value(&self, theta: f64) -> CMatrix {
        let m = self.m();
        let mut out: CMatrix = self.coeff(0).map(|v| Complex::new(v, 0.0));
        for j in 1..=self.n() {
            let e = Complex::from_polar(1.0, -(j as f64) * theta);
            let c = self.coeff(j);
            for r in 0..m {
                for s in 0..m {
                    out[(r, s)] += e * c[(r, s)] + e.conj() * c[(s, r)];
                }
            }
        }
        out
    }

    pub fn try_add(&self, other: &PseudoPoly) -> Result<PseudoPoly> {
        Ok(PseudoPoly::new(self.coeffs.try_add(&other.coeffs)?))
    }

    pub fn try_sub(&self, other: &PseudoPoly) -> Result<PseudoPoly> {
        Ok(PseudoPoly::new(self.coeffs.try_sub(&other.coeffs)?))
    }

    pub fn scaled(&self, s: f64) -> PseudoPoly {
        PseudoPoly::new(self.coeffs.scaled(s))
    }
}

/// Undirected edge set over `m` variables. The diagonal is always present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeSet {
    m: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    /// Diagonal-only edge set.
    pub fn empty(m: usize) -> Self {
        Self {
            m,
            pairs: BTreeSet::new(),
        }
    }

    pub fn complete(m: usize) -> Self {
        let mut e = Self::empty(m);
        for k in 0..m {
            for h in (k + 1)..m {
                e.pairs.insert((k, h));
            }
        }
        e
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(m: usize, pairs: I) -> Result<Self> {
        let mut e = Self::empty(m);
        for (k, h) in pairs {
            if k >= m || h >= m {
                return Err(Error::Dimension(format!("edge ({k},{h}) outside 0..{m}")));
            }
            e.insert(k, h);
        }
        Ok(e)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Adds `{k, h}`; diagonal pairs are ignored.
    pub fn insert(&mut self, k: usize, h: usize) {
        if k != h {
            self.pairs.insert((k.min(h), k.max(h)));
        }
    }

    pub fn contains(&self, k: usize, h: usize) -> bool {
        k == h || self.pairs.contains(&(k.min(h), k.max(h)))
    }

    /// Number of unordered off-diagonal pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Off-diagonal pairs `(k, h)` with `k < h`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Off-diagonal pairs not in the set.
    pub fn complement(&self) -> EdgeSet {
        let mut c = EdgeSet::empty(self.m);
        for k in 0..self.m {
            for h in (k + 1)..self.m {
                if !self.pairs.contains(&(k, h)) {
                    c.pairs.insert((k, h));
                }
            }
        }
        c
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }

    /// Pairs in exactly one of the two sets.
    pub fn symmetric_difference(&self, other: &EdgeSet) -> Vec<(usize, usize)> {
        self.pairs
            .symmetric_difference(&other.pairs)
            .copied()
            .collect()
    }
}

/// Uniform grid `θₖ = 2πk/N_f − π`, `k = 0 … N_f−1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqGrid {
    n_f: usize,
}

impl FreqGrid {
    pub const DEFAULT_POINTS: usize = 512;

    pub fn new(n_f: usize) -> Result<Self> {
        if n_f < 2 {
            return Err(Error::InvalidParameter(format!(
                "frequency grid needs at least 2 points, got {n_f}"
            )));
        }
        Ok(Self { n_f })
    }

    pub fn len(&self) -> usize {
        self.n_f
    }

    pub fn is_empty(&self) -> bool {
        self.n_f == 0
    }

    pub fn theta(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_f as f64 - PI
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.n_f).map(|k| self.theta(k)).collect()
    }

    /// Whether trapezoidal quadrature is exact for pseudo-polynomials of
    /// order `n` multiplied by another of order `n` (degree `2n`).
    pub fn supports_order(&self, n: usize) -> bool {
        self.n_f >= 2 * n + 2
    }
}

impl Default for FreqGrid {
    fn default() -> Self {
        Self {
            n_f: Self::DEFAULT_POINTS,
        }
    }
}

/// Symmetric block-Toeplitz matrix with first block row `y`.
pub fn toeplitz(y: &BlockRow) -> DMatrix<f64> {
    let m = y.m();
    let nb = y.n() + 1;
    let mut t = DMatrix::zeros(m * nb, m * nb);
    for i in 0..nb {
        for j in 0..nb {
            let block = if j >= i {
                y.block(j - i).clone()
            } else {
                y.block(i - j).transpose()
            };
            t.view_mut((i * m, j * m), (m, m)).copy_from(&block);
        }
    }
    // Y₀ is symmetric, so the result is exactly symmetric; enforce bitwise.
    symmetrize(&mut t);
    t
}

fn block_count(x: &DMatrix<f64>, m: usize) -> Result<usize> {
    if m == 0 || x.nrows() != x.ncols() || x.nrows() % m != 0 {
        return Err(Error::Dimension(format!(
            "{}x{} cannot be partitioned into {m}x{m} blocks",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(x.nrows() / m)
}

/// Adjoint of [`toeplitz`]: `D₀(X) = Σₕ Xₕₕ`, `Dⱼ(X) = 2 Σₕ Xₕ,ₕ₊ⱼ`.
pub fn adjoint_d(x: &DMatrix<f64>, m: usize) -> Result<BlockRow> {
    let nb = block_count(x, m)?;
    let mut blocks = vec![DMatrix::zeros(m, m); nb];
    for (j, out) in blocks.iter_mut().enumerate() {
        let scale = if j == 0 { 1.0 } else { 2.0 };
        for h in 0..(nb - j) {
            *out += x.view((h * m, (h + j) * m), (m, m)) * scale;
        }
    }
    symmetrize(&mut blocks[0]);
    Ok(BlockRow { m, blocks })
}

/// The pseudo-polynomial `Δ X Δ*`.
pub fn delta_quadratic(x: &DMatrix<f64>, m: usize) -> Result<PseudoPoly> {
    let d = adjoint_d(x, m)?;
    let blocks = d
        .blocks
        .into_iter()
        .enumerate()
        .map(|(j, b)| if j == 0 { b } else { b * 0.5 })
        .collect();
    Ok(PseudoPoly::new(BlockRow { m, blocks }))
}

/// A symmetric `X` with `delta_quadratic(X) = p`: `C₀` and `Cⱼ` placed in the
/// first block row (and column) of an otherwise zero matrix.
pub fn lift_pseudo_poly(p: &PseudoPoly) -> DMatrix<f64> {
    let m = p.m();
    let nb = p.n() + 1;
    let mut x = DMatrix::zeros(m * nb, m * nb);
    x.view_mut((0, 0), (m, m)).copy_from(p.coeff(0));
    for j in 1..nb {
        x.view_mut((0, j * m), (m, m)).copy_from(p.coeff(j));
        x.view_mut((j * m, 0), (m, m))
            .copy_from(&p.coeff(j).transpose());
    }
    x
}

/// Shift operator `Δ(θ) = [I, e^{iθ}I, …, e^{inθ}I]` (`m × m(n+1)`).
pub fn shift_operator(theta: f64, m: usize, n: usize) -> CMatrix {
    let mut d = CMatrix::zeros(m, m * (n + 1));
    for j in 0..=n {
        let e = Complex::from_polar(1.0, j as f64 * theta);
        for r in 0..m {
            d[(r, j * m + r)] = e;
        }
    }
    d
}

/// Which entries a projection onto an edge set keeps.
fn keep_entry(e: &EdgeSet, r: usize, s: usize, keep_complement: bool) -> bool {
    if keep_complement {
        !e.contains(r, s)
    } else {
        e.contains(r, s)
    }
}

/// Blockwise projection `P_E` (or `P_{E^c}` when `keep_complement`).
pub fn project_edges(y: &BlockRow, e: &EdgeSet, keep_complement: bool) -> Result<BlockRow> {
    if e.m() != y.m() {
        return Err(Error::Dimension(format!(
            "edge set over {} variables applied to {}x{} blocks",
            e.m(),
            y.m(),
            y.m()
        )));
    }
    let blocks = y
        .blocks()
        .iter()
        .map(|b| {
            let mut out = b.clone();
            for r in 0..y.m() {
                for s in 0..y.m() {
                    if !keep_entry(e, r, s, keep_complement) {
                        out[(r, s)] = 0.0;
                    }
                }
            }
            out
        })
        .collect();
    Ok(BlockRow { m: y.m(), blocks })
}

/// [`project_edges`] applied to pseudo-polynomial coefficients.
pub fn project_edges_poly(
    p: &PseudoPoly,
    e: &EdgeSet,
    keep_complement: bool,
) -> Result<PseudoPoly> {
    Ok(PseudoPoly::new(project_edges(
        p.coeffs(),
        e,
        keep_complement,
    )?))
}

/// Values of `p` at every grid point.
pub fn eval(p: &PseudoPoly, grid: &FreqGrid) -> Vec<CMatrix> {
    (0..grid.len()).map(|k| p.value(grid.theta(k))).collect()
}

/// Normalized integral over the circle: the grid mean.
pub fn integrate(values: &[CMatrix]) -> CMatrix {
    let first = values.first().expect("integrate needs at least one sample");
    let mut acc = CMatrix::zeros(first.nrows(), first.ncols());
    for v in values {
        acc += v;
    }
    acc / Complex::new(values.len() as f64, 0.0)
}

pub fn integrate_scalar(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Lags `∫ e^{ijθ} Φ(θ)`, `j = 0 … order`, of a spectrum sampled on `grid`.
pub fn spectrum_lags(values: &[CMatrix], grid: &FreqGrid, order: usize) -> Result<BlockRow> {
    let thetas = grid.thetas();
    let blocks = (0..=order)
        .map(|j| {
            let shifted: Vec<CMatrix> = values
                .iter()
                .zip(&thetas)
                .map(|(p, t)| p * Complex::from_polar(1.0, j as f64 * t))
                .collect();
            integrate(&shifted).map(|c| c.re)
        })
        .collect();
    BlockRow::new(blocks)
}

/// Result of a positivity check on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub psd: bool,
    pub min_eigenvalue: f64,
}

/// Whether `p(θₖ) ⪰ −tol·I` at every grid point, with the worst eigenvalue.
pub fn is_psd_on_grid(p: &PseudoPoly, grid: &FreqGrid, tol: f64) -> PsdCheck {
    let min_eigenvalue = (0..grid.len())
        .map(|k| herm_eigenvalues(&p.value(grid.theta(k)))[0])
        .fold(f64::INFINITY, f64::min);
    PsdCheck {
        psd: min_eigenvalue >= -tol,
        min_eigenvalue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block_row(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BlockRow {
        let mut blocks: Vec<DMatrix<f64>> = (0..=n)
            .map(|_| DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        symmetrize(&mut blocks[0]);
        BlockRow::new(blocks).unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let mut x = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&mut x);
        x
    }

    #[test]
    fn toeplitz_scalar_example() {
        let y = BlockRow::new(vec![
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
        ])
        .unwrap();
        let t = toeplitz(&y);
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn toeplitz_of_identity_row_is_identity() {
        let t = toeplitz(&BlockRow::identity(3, 2));
        assert_eq!(t, DMatrix::identity(9, 9));
    }

    #[test]
    fn toeplitz_is_symmetric_and_has_transposed_lower_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_block_row(&mut rng, 2, 2);
        let t = toeplitz(&y);
        assert_eq!(t, t.transpose());
        assert_eq!(t.view((4, 0), (2, 2)).into_owned(), y.block(2).transpose());
        assert_eq!(t.view((0, 2), (2, 2)).into_owned(), *y.block(1));
    }

    #[test]
    fn adjoint_examples() {
        let d = adjoint_d(&DMatrix::identity(2, 2), 1).unwrap();
        assert_eq!(d.block(0)[(0, 0)], 2.0);
        assert_eq!(d.block(1)[(0, 0)], 0.0);
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let d = adjoint_d(&x, 1).unwrap();
        assert_eq!(d.block(0)[(0, 0)], 0.0);
        assert_eq!(d.block(1)[(0, 0)], 2.0);
    }

    #[test]
    fn adjoint_rejects_bad_partition() {
        assert!(adjoint_d(&DMatrix::identity(5, 5), 2).is_err());
    }

    #[test]
    fn adjointness_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(0..=3);
            let y = random_block_row(&mut rng, m, n);
            let x = random_sym(&mut rng, m * (n + 1));
            let lhs = frob_inner(&toeplitz(&y), &x);
            let rhs = y.inner(&adjoint_d(&x, m).unwrap());
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn delta_quadratic_examples() {
        let p = delta_quadratic(&DMatrix::identity(2, 2), 1).unwrap();
        for theta in [-2.0, 0.0, 1.3] {
            let v = p.value(theta)[(0, 0)];
            assert!((v.re - 2.0).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        // X = [[1, .5], [.5, 1]] gives 2 + cos θ.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = delta_quadratic(&x, 1).unwrap();
        for theta in [-3.0, -1.0, 0.0, 0.4, 2.5] {
            let v = p.value(theta)[(0, 0)];
            assert!((v.re - (2.0 + theta.cos())).abs() < 1e-14);
            assert!(v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn delta_quadratic_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (3, 2);
        let x = random_sym(&mut rng, m * (n + 1));
        let p = delta_quadratic(&x, m).unwrap();
        let grid = FreqGrid::new(64).unwrap();
        let xc = crate::linalg::to_complex(&x);
        for k in 0..grid.len() {
            let d = shift_operator(grid.theta(k), m, n);
            let direct = &d * &xc * d.adjoint();
            assert!(crate::linalg::cmax_abs(&(direct - p.value(grid.theta(k)))) < 1e-12);
        }
    }

    #[test]
    fn lift_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = PseudoPoly::new(random_block_row(&mut rng, 3, 2));
        let back = delta_quadratic(&lift_pseudo_poly(&p), 3).unwrap();
        assert!(back.coeffs().try_sub(p.coeffs()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_block_row(&mut rng, 3, 1);
        assert_eq!(project_edges(&y, &EdgeSet::complete(3), false).unwrap(), y);

        let off = project_edges(&y, &EdgeSet::empty(3), true).unwrap();
        for b in off.blocks() {
            for i in 0..3 {
                assert_eq!(b[(i, i)], 0.0);
            }
        }
        assert_eq!(off.block(1)[(0, 2)], y.block(1)[(0, 2)]);

        let e = EdgeSet::from_pairs(3, [(1, 2)]).unwrap();
        let kept = project_edges(&y, &e, false).unwrap();
        for (b, orig) in kept.blocks().iter().zip(y.blocks()) {
            for r in 0..3 {
                for s in 0..3 {
                    let expect = if r == s || (r.min(s), r.max(s)) == (1, 2) {
                        orig[(r, s)]
                    } else {
                        0.0
                    };
                    assert_eq!(b[(r, s)], expect);
                }
            }
        }
    }

    #[test]
    fn eval_constant_and_conjugate_symmetry() {
        let c = PseudoPoly::constant(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let grid = FreqGrid::new(16).unwrap();
        let vals = eval(&c, &grid);
        assert!(vals.windows(2).all(|w| w[0] == w[1]));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = PseudoPoly::new(random_block_row(&mut rng, 2, 3));
        for theta in [0.3, 1.1, 2.9] {
            let a = p.value(theta);
            let b = p.value(-theta);
            assert!(crate::linalg::cmax_abs(&(a.clone() - a.adjoint())) < 1e-14);
            assert!(crate::linalg::cmax_abs(&(a - b.conjugate())) < 1e-14);
        }
    }

    #[test]
    fn eval_matches_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = PseudoPoly::new(random_block_row(&mut rng, 2, 2));
        let grid = FreqGrid::new(32).unwrap();
        for (k, v) in eval(&p, &grid).iter().enumerate() {
            let theta = grid.theta(k);
            // Σ_{j=-n}^{n} e^{-ijθ} R_j with R_{-j} = R_jᵀ.
            let mut direct = CMatrix::zeros(2, 2);
            for j in -(2i64)..=2 {
                let r = if j >= 0 {
                    p.coeff(j as usize).clone()
                } else {
                    p.coeff((-j) as usize).transpose()
                };
                direct +=
                    crate::linalg::to_complex(&r) * Complex::from_polar(1.0, -(j as f64) * theta);
            }
            assert!(crate::linalg::cmax_abs(&(direct - v)) < 1e-12);
        }
    }

    #[test]
    fn integral_of_exponentials() {
        let grid = FreqGrid::new(8).unwrap();
        for j in -3i64..=3 {
            let vals: Vec<CMatrix> = grid
                .thetas()
                .iter()
                .map(|t| CMatrix::from_element(1, 1, Complex::from_polar(1.0, j as f64 * t)))
                .collect();
            let v = integrate(&vals)[(0, 0)];
            let expect = if j == 0 { 1.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn integral_returns_constant_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PseudoPoly::new(random_block_row(&mut rng, 3, 3));
        let grid = FreqGrid::new(8).unwrap();
        assert!(grid.supports_order(3));
        let i = integrate(&eval(&p, &grid));
        assert!((i.map(|c| c.re) - p.coeff(0)).abs().max() < 1e-13);
        assert!(i.map(|c| c.im).abs().max() < 1e-13);
    }

    #[test]
    fn psd_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let l = c.transpose() * c;
        let grid = FreqGrid::default();
        assert!(is_psd_on_grid(&delta_quadratic(&l, 3).unwrap(), &grid, 1e-12).psd);
        let neg = PseudoPoly::constant(-DMatrix::identity(2, 2)).unwrap();
        let chk = is_psd_on_grid(&neg, &grid, 1e-12);
        assert!(!chk.psd);
        assert!((chk.min_eigenvalue + 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_row_rejects_asymmetric_y0() {
        let y0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            BlockRow::new(vec![y0]),
            Err(Error::Asymmetric { .. })
        ));
        let y0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-12, 1.0]);
        let y = BlockRow::new(vec![y0]).unwrap();
        assert_eq!(y.block(0)[(0, 1)], y.block(0)[(1, 0)]);
    }

    #[test]
    fn edge_set_basics() {
        let mut e = EdgeSet::empty(4);
        e.insert(2, 1);
        e.insert(3, 3);
        assert!(e.contains(1, 2) && e.contains(2, 1) && e.contains(0, 0));
        assert_eq!(e.len(), 1);
        assert_eq!(e.complement().len(), 5);
        assert_eq!(EdgeSet::complete(15).len(), 105);
    }
}
