//! Ground-truth AR latent-variable models: spectral factorization,
//! random model generation and trajectory sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{herm_eigenvalues, log_det_pd, max_abs};
use crate::specpoly::{
    delta_quadratic, eval, is_psd_on_grid, spectrum_lags, BlockRow, EdgeSet, FreqGrid, PseudoPoly,
};

/// Round-trip tolerance for the spectral factor.
const FACTOR_TOL: f64 = 1e-11;
const FACTOR_MAX_BLOCKS: usize = 1 << 16;

/// Minimum-phase factor `A = [A₀ … Aₙ]` with `ΔAᵀAΔ* = P`, computed from
/// the block Cholesky factor of the banded Toeplitz matrix of `P`: the last
/// block row of that factor converges to the outer spectral factor as the
/// truncation grows. The size is doubled until the round trip holds to
/// `1e-11` relative to the largest coefficient.
pub fn spectral_factor(p: &PseudoPoly) -> Result<DMatrix<f64>> {
    let m = p.m();
    let n = p.n();
    let coeff = |k: usize| -> Option<&DMatrix<f64>> { (k <= n).then(|| p.coeff(k)) };
    let scale = p.coeffs().max_abs().max(f64::MIN_POSITIVE);

    // rows[i][r] = L(i, i − r) for r = 0..=n.
    let mut rows: Vec<Vec<DMatrix<f64>>> = Vec::new();
    let mut checkpoint = 2 * (n + 1);
    let mut i = 0usize;
    loop {
        let mut row = vec![DMatrix::zeros(m, m); n + 1];
        for r in (1..=n.min(i)).rev() {
            let j = i - r;
            // T(i, j) = C_{i−j}ᵀ.
            let mut acc = coeff(r).unwrap().transpose();
            for k in j.saturating_sub(n).max(i.saturating_sub(n))..j {
                acc -= &row[i - k] * rows[j][j - k].transpose();
            }
            let ljj = &rows[j][0];
            // acc · L(j,j)⁻ᵀ
            let sol = ljj
                .clone()
                .solve_lower_triangular(&acc.transpose())
                .ok_or_else(|| Error::Factorization("singular diagonal block".into()))?;
            row[r] = sol.transpose();
        }
        let mut diag = coeff(0).unwrap().clone();
        for r in 1..=n.min(i) {
            diag -= &row[r] * row[r].transpose();
        }
        crate::linalg::symmetrize(&mut diag);
        let chol = diag.cholesky().ok_or_else(|| {
            Error::Factorization(format!("Toeplitz matrix lost definiteness at block {i}"))
        })?;
        row[0] = chol.l();
        rows.push(row);
        i += 1;

        if i == checkpoint {
            let last = rows.last().unwrap();
            let mut a = DMatrix::zeros(m, m * (n + 1));
            for r in 0..=n {
                a.view_mut((0, r * m), (m, m))
                    .copy_from(&last[r].transpose());
            }
            let back = delta_quadratic(&(a.transpose() * &a), m)?;
            let err = back.coeffs().try_sub(p.coeffs())?.max_abs();
            if err <= FACTOR_TOL * scale {
                return Ok(a);
            }
            if checkpoint >= FACTOR_MAX_BLOCKS {
                return Err(Error::Factorization(format!(
                    "round-trip error {err:.3e} after {checkpoint} blocks"
                )));
            }
            checkpoint *= 2;
            // Only the last n+1 rows are needed going forward.
            if rows.len() > 4 * (n + 1) {
                let keep = rows.len() - (n + 1);
                let tail = rows.split_off(keep);
                let pad = keep;
                rows = (0..pad).map(|_| Vec::new()).chain(tail).collect();
            }
        }
    }
}

/// Companion matrix of `Σⱼ Aⱼ x(t−j) = e(t)`.
pub fn companion(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let n = a.ncols() / d - 1;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let a0 = a.view((0, 0), (d, d)).into_owned();
    let a0_inv = a0
        .try_inverse()
        .ok_or_else(|| Error::Singular("A0 is not invertible".into()))?;
    let mut c = DMatrix::zeros(d * n, d * n);
    for j in 1..=n {
        let blk = -(&a0_inv * a.view((0, j * d), (d, d)));
        c.view_mut((0, (j - 1) * d), (d, d)).copy_from(&blk);
    }
    for j in 1..n {
        c.view_mut((j * d, (j - 1) * d), (d, d))
            .fill_with_identity();
    }
    Ok(c)
}

/// Spectral radius of the companion matrix (0 for `n = 0`).
pub fn companion_radius(a: &DMatrix<f64>) -> Result<f64> {
    let c = companion(a)?;
    if c.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(c.complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm())))
}

/// Principal sub-block `[start, start+size)` of every coefficient.
pub fn principal_block(p: &PseudoPoly, start: usize, size: usize) -> PseudoPoly {
    let blocks = p
        .coeffs()
        .blocks()
        .iter()
        .map(|b| b.view((start, start), (size, size)).into_owned())
        .collect();
    PseudoPoly::new(BlockRow::new(blocks).expect("principal block of a symmetric C0 is symmetric"))
}

/// A joint AR model over `m` manifest and `l` latent variables.
#[derive(Clone, Debug)]
pub struct TrueModel {
    m: usize,
    l: usize,
    n: usize,
    a: DMatrix<f64>,
    seed: u64,
    sigma: PseudoPoly,
    lambda: PseudoPoly,
    g: DMatrix<f64>,
    edges: EdgeSet,
    radius: f64,
}

/// JSON form of a [`TrueModel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrueModelJson {
    pub m: usize,
    pub l: usize,
    pub n: usize,
    /// Rows of `[A₀ … Aₙ]`.
    pub a: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub seed: u64,
}

impl TrueModel {
    /// Builds a model from joint coefficients with `A₀` invertible. The
    /// latent block of the joint inverse spectrum must be constant, so that
    /// the Schur complement `Λ` is a pseudo-polynomial of order `n`.
    pub fn from_coefficients(m: usize, l: usize, a: DMatrix<f64>, seed: u64) -> Result<Self> {
        let d = m + l;
        if a.nrows() != d || a.ncols() % d != 0 || a.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "coefficients are {}x{}, expected {d} rows and a multiple of {d} columns",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.ncols() / d - 1;
        let radius = companion_radius(&a)?;
        if !(radius < 1.0) {
            return Err(Error::Generation(format!(
                "companion spectral radius {radius:.4} ≥ 1"
            )));
        }
        let joint = delta_quadratic(&(a.transpose() * &a), d)?;
        let sigma = principal_block(&joint, 0, m);
        let scale = joint.coeffs().max_abs();
        let (g, lambda) = if l == 0 {
            (DMatrix::zeros(0, m * (n + 1)), PseudoPoly::zeros(m, n))
        } else {
            let k = joint.coeff(0).view((m, m), (l, l)).into_owned();
            for j in 1..=n {
                let kj = joint.coeff(j).view((m, m), (l, l)).into_owned();
                if max_abs(&kj) > 1e-7 * scale {
                    return Err(Error::Generation(
                        "latent block of the joint spectrum is not constant".into(),
                    ));
                }
                let ml = joint.coeff(j).view((0, m), (m, l)).into_owned();
                if max_abs(&ml) > 1e-7 * scale {
                    return Err(Error::Generation(
                        "manifest-latent coupling has a negative-lag component".into(),
                    ));
                }
            }
            // Υ_lm(θ) = Σⱼ e^{-ijθ} Bⱼ with Bⱼ the latent-manifest block of Cⱼ.
            let mut b = DMatrix::zeros(l, m * (n + 1));
            for j in 0..=n {
                b.view_mut((0, j * m), (l, m))
                    .copy_from(&joint.coeff(j).view((m, 0), (l, m)));
            }
            let kinv_sqrt = crate::linalg::sym_sqrt_psd(
                &k.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Generation("latent block is singular".into()))?,
            );
            let g = kinv_sqrt * b;
            let lambda = delta_quadratic(&(g.transpose() * &g), m)?;
            (g, lambda)
        };
        let thresh = 1e-6 * sigma.coeffs().max_abs();
        let mut edges = EdgeSet::empty(m);
        for k in 0..m {
            for h in (k + 1)..m {
                if sigma
                    .coeffs()
                    .blocks()
                    .iter()
                    .any(|c| c[(k, h)].abs() > thresh || c[(h, k)].abs() > thresh)
                {
                    edges.insert(k, h);
                }
            }
        }
        Ok(Self {
            m,
            l,
            n,
            a,
            seed,
            sigma,
            lambda,
            g,
            edges,
            radius,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Joint coefficients `[A₀ … Aₙ]`.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Sparse part `Σ` of the manifest inverse spectrum.
    pub fn sigma(&self) -> &PseudoPoly {
        &self.sigma
    }

    /// Low-rank part `Λ = ΔGᵀGΔ*`.
    pub fn lambda(&self) -> &PseudoPoly {
        &self.lambda
    }

    /// Latent factor `G` with `Λ = ΔGᵀGΔ*`.
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn companion_radius(&self) -> f64 {
        self.radius
    }

    /// Manifest inverse spectrum `Σ − Λ`.
    pub fn inverse_spectrum(&self) -> PseudoPoly {
        self.sigma.try_sub(&self.lambda).expect("same shape")
    }

    /// Manifest variances, with the quadrature grid doubled until they agree to `1e-10`.
    pub fn manifest_variances(&self) -> Result<DVector<f64>> {
        let mut n_f = 512;
        let mut prev = self
            .manifest_lags(0, &FreqGrid::new(n_f)?)?
            .block(0)
            .diagonal();
        loop {
            n_f *= 2;
            let next = self
                .manifest_lags(0, &FreqGrid::new(n_f)?)?
                .block(0)
                .diagonal();
            let change = (&next - &prev).amax();
            if change <= 1e-10 * next.amax() || n_f >= 1 << 18 {
                return Ok(next);
            }
            prev = next;
        }
    }

    /// Manifest lags `∫ e^{ijθ} Φ_m(θ)`, `j = 0 … order`, by quadrature.
    pub fn manifest_lags(&self, order: usize, grid: &FreqGrid) -> Result<BlockRow> {
        let inv = eval(&self.inverse_spectrum(), grid);
        let mut phis = Vec::with_capacity(inv.len());
        for v in inv {
            phis.push(
                v.try_inverse()
                    .ok_or_else(|| Error::Singular("manifest spectrum is singular".into()))?,
            );
        }
        spectrum_lags(&phis, grid, order)
    }

    /// Default burn-in `10 (n+1) ⌈1/(1−ρ)⌉`.
    pub fn default_burn_in(&self) -> usize {
        10 * (self.n + 1) * (1.0 / (1.0 - self.radius)).ceil() as usize
    }

    pub fn to_json(&self) -> TrueModelJson {
        TrueModelJson {
            m: self.m,
            l: self.l,
            n: self.n,
            a: crate::io::matrix_to_rows(&self.a),
            edges: self.edges.pairs().collect(),
            seed: self.seed,
        }
    }

    pub fn from_json(j: &TrueModelJson) -> Result<Self> {
        let a = crate::io::rows_to_matrix(&j.a)?;
        let model = Self::from_coefficients(j.m, j.l, a, j.seed)?;
        if model.n != j.n {
            return Err(Error::Dimension(format!(
                "order {} stored, {} implied",
                j.n, model.n
            )));
        }
        Ok(model)
    }
}

/// Generator settings; [`gen_model`] uses the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub m: usize,
    pub l: usize,
    pub n: usize,
    pub edge_density: f64,
    pub seed: u64,
    /// Range of the root moduli of each variable's own AR polynomial.
    pub own_root_range: (f64, f64),
    /// Range of the coefficient magnitudes of each edge.
    pub edge_strength: (f64, f64),
    /// Range of the relative loading magnitudes of each manifest variable on the latents.
    pub latent_strength: (f64, f64),
    /// Fraction in `(0, 1)` of the largest latent scale keeping `Σ − Λ` positive definite.
    pub latent_share: f64,
    /// Variance of every manifest variable after rescaling.
    pub variance: f64,
    pub max_attempts: usize,
}

impl GenConfig {
    pub fn new(m: usize, l: usize, n: usize, edge_density: f64, seed: u64) -> Self {
        Self {
            m,
            l,
            n,
            edge_density,
            seed,
            own_root_range: (0.6, 0.95),
            edge_strength: (0.8, 1.2),
            latent_strength: (0.4, 0.8),
            latent_share: 0.99,
            variance: 1.0,
            max_attempts: 100,
        }
    }
}

fn signed_uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let mag = if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Random sparse-plus-latent AR model.
///
/// A tall generator `Ã` is drawn with one row per manifest variable (its own
/// AR polynomial) and one row per drawn edge (coupling the two endpoints),
/// so that `Σ = ΔÃᵀÃΔ*` has support exactly the drawn edges. Each latent
/// loads on every variable through that variable's own polynomial, giving
/// `Λ = t ΔGᵀGΔ*` with `t` the configured share of the largest scale keeping
/// `Σ − Λ` positive definite. The joint inverse spectrum has an identity
/// latent block; each manifest variable is rescaled to the configured
/// variance and the result is factored into a square minimum-phase `A`.
pub fn gen_model_with(cfg: &GenConfig) -> Result<TrueModel> {
    let (m, l, n) = (cfg.m, cfg.l, cfg.n);
    if m == 0
        || l > m
        || !(0.0..=1.0).contains(&cfg.edge_density)
        || !(cfg.latent_share > 0.0 && cfg.latent_share < 1.0)
    {
        return Err(Error::InvalidParameter(format!(
            "need m > 0, l ≤ m, edge density in [0, 1] and latent share in (0, 1); got m={m}, l={l}, density={}, share={}",
            cfg.edge_density, cfg.latent_share
        )));
    }
    let d = m + l;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut last_err = None;
    for _ in 0..cfg.max_attempts.max(1) {
        let mut drawn = EdgeSet::empty(m);
        for k in 0..m {
            for h in (k + 1)..m {
                if rng.random_bool(cfg.edge_density) {
                    drawn.insert(k, h);
                }
            }
        }
        let mut gen = DMatrix::zeros(m + drawn.len(), m * (n + 1));
        let mut g = DMatrix::zeros(l, m * (n + 1));
        for i in 0..m {
            // Π (1 − r z) with real roots of modulus below one.
            let mut poly = vec![1.0];
            for _ in 0..n {
                let r = signed_uniform(&mut rng, cfg.own_root_range);
                let mut next = vec![0.0; poly.len() + 1];
                for (k, c) in poly.iter().enumerate() {
                    next[k] += c;
                    next[k + 1] -= r * c;
                }
                poly = next;
            }
            for (j, c) in poly.iter().enumerate() {
                gen[(i, j * m + i)] = *c;
            }
            for c in 0..l {
                let b = signed_uniform(&mut rng, cfg.latent_strength);
                for (j, q) in poly.iter().enumerate() {
                    g[(c, j * m + i)] = b * q;
                }
            }
        }
        for (e, (k, h)) in drawn.pairs().enumerate() {
            let row = m + e;
            gen[(row, k)] = signed_uniform(&mut rng, cfg.edge_strength);
            gen[(row, h)] = signed_uniform(&mut rng, cfg.edge_strength);
            for j in 1..=n {
                if rng.random_bool(0.5) {
                    gen[(row, j * m + k)] = 0.5 * signed_uniform(&mut rng, cfg.edge_strength);
                }
                if rng.random_bool(0.5) {
                    gen[(row, j * m + h)] = 0.5 * signed_uniform(&mut rng, cfg.edge_strength);
                }
            }
        }

        let attempt = (|| -> Result<TrueModel> {
            let sigma = delta_quadratic(&(gen.transpose() * &gen), m)?;
            let grid = FreqGrid::new(128)?;
            let t = if l == 0 {
                0.0
            } else {
                let lam = delta_quadratic(&(g.transpose() * &g), m)?;
                cfg.latent_share / max_generalized_eigenvalue(&lam, &sigma, &grid)?
            };
            let joint = |s: &[f64]| -> Result<PseudoPoly> {
                let blocks = (0..=n)
                    .map(|j| {
                        let mut c = DMatrix::zeros(d, d);
                        let mut sj = sigma.coeff(j).clone();
                        for a in 0..m {
                            for b in 0..m {
                                sj[(a, b)] *= s[a] * s[b];
                            }
                        }
                        c.view_mut((0, 0), (m, m)).copy_from(&sj);
                        let mut gj = g.view((0, j * m), (l, m)) * (-t.sqrt());
                        for a in 0..m {
                            gj.column_mut(a).scale_mut(s[a]);
                        }
                        c.view_mut((m, 0), (l, m)).copy_from(&gj);
                        if j == 0 {
                            c.view_mut((0, m), (m, l)).copy_from(&gj.transpose());
                            c.view_mut((m, m), (l, l)).fill_with_identity();
                        }
                        c
                    })
                    .collect();
                Ok(PseudoPoly::new(BlockRow::new(blocks)?))
            };
            let unit = vec![1.0; m];
            let probe_joint = joint(&unit)?;
            let chk = is_psd_on_grid(&probe_joint, &grid, 0.0);
            if !(chk.min_eigenvalue > 1e-6) {
                return Err(Error::Generation(format!(
                    "joint inverse spectrum nearly singular (min eigenvalue {:.3e})",
                    chk.min_eigenvalue
                )));
            }
            let probe =
                TrueModel::from_coefficients(m, l, spectral_factor(&probe_joint)?, cfg.seed)?;
            let var = probe.manifest_variances()?;
            // Scaling variable i of the inverse spectrum by s scales its variance by 1/s².
            let s: Vec<f64> = var.iter().map(|v| (v / cfg.variance).sqrt()).collect();
            let model =
                TrueModel::from_coefficients(m, l, spectral_factor(&joint(&s)?)?, cfg.seed)?;
            if model.edges != drawn {
                return Err(Error::Generation(
                    "realized edge set differs from the drawn one".into(),
                ));
            }
            Ok(model)
        })();
        match attempt {
            Ok(model) => return Ok(model),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Generation(format!(
        "no admissible model after {} attempts: {}",
        cfg.max_attempts,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Largest generalized eigenvalue of `(A(θ), B(θ))` over `grid`, with `B` positive definite.
fn max_generalized_eigenvalue(a: &PseudoPoly, b: &PseudoPoly, grid: &FreqGrid) -> Result<f64> {
    let mut best = 0.0f64;
    for (va, vb) in eval(a, grid).into_iter().zip(eval(b, grid)) {
        let chol = vb
            .cholesky()
            .ok_or_else(|| Error::Generation("sparse part is not positive definite".into()))?;
        let l = chol.l();
        let x = l
            .solve_lower_triangular(&va)
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        let y = l
            .solve_lower_triangular(&x.adjoint())
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        best = best.max(herm_eigenvalues(&y).into_iter().fold(f64::MIN, f64::max));
    }
    if !(best > 0.0) {
        return Err(Error::Generation("latent part vanishes".into()));
    }
    Ok(best)
}

/// [`gen_model_with`] using the default strengths.
pub fn gen_model(m: usize, l: usize, n: usize, edge_density: f64, seed: u64) -> Result<TrueModel> {
    gen_model_with(&GenConfig::new(m, l, n, edge_density, seed))
}

/// Simulates the joint recursion with standard Gaussian innovations and
/// returns `n_samples` rows of the manifest coordinates.
pub fn sample(
    model: &TrueModel,
    n_samples: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> Result<DataMatrix> {
    let d = model.m + model.l;
    let n = model.n;
    let a = &model.a;
    let a0 = a.view((0, 0), (d, d)).into_owned();
    let lu = a0.lu();
    let burn = burn_in.unwrap_or_else(|| model.default_burn_in());
    let total = burn + n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist: Vec<DVector<f64>> = vec![DVector::zeros(d); n];
    let mut out = DMatrix::zeros(n_samples, model.m);
    for t in 0..total {
        let mut rhs = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        for j in 1..=n {
            rhs -= a.view((0, j * d), (d, d)) * &hist[j - 1];
        }
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("A0 is not invertible".into()))?;
        if n > 0 {
            hist.rotate_right(1);
            hist[0] = x.clone();
        }
        if t >= burn {
            out.row_mut(t - burn)
                .copy_from(&x.rows(0, model.m).transpose());
        }
    }
    let names = (0..model.m).map(|i| format!("x{i}")).collect();
    DataMatrix::new(out, Some(names))
}

/// `∫ log det P` on the grid.
pub fn log_det_integral(p: &PseudoPoly, grid: &FreqGrid) -> Result<f64> {
    let vals = eval(p, grid);
    let mut acc = Vec::with_capacity(vals.len());
    for v in &vals {
        acc.push(
            crate::linalg::log_det_hpd(v).ok_or(Error::NotPositiveDefinite {
                what: "pseudo-polynomial on the grid",
                min_eig: crate::linalg::herm_eigenvalues(v)[0],
            })?,
        );
    }
    Ok(crate::specpoly::integrate_scalar(&acc))
}

/// `log det(A₀ᵀA₀)`.
pub fn jensen_value(a: &DMatrix<f64>) -> Option<f64> {
    let m = a.nrows();
    let a0 = a.view((0, 0), (m, m)).into_owned();
    log_det_pd(&(a0.transpose() * a0))
}
