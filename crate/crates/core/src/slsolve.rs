//! Sparse-plus-low-rank subspace estimation.
//!
//! The regularized program
//!
//! ```text
//! min −log det X₀₀ + ⟨T(R̂), X⟩ + λγ h∞(D(X+L)) + λ tr L    s.t. X ⪰ 0, L ⪰ 0
//! ```
//!
//! is solved through its smooth dual
//!
//! ```text
//! max log det W + m   s.t.  T(R̂)+T(Z) ⪰ diag(W, 0),  diag(Zⱼ) = 0,
//!                          Σⱼ |(Zⱼ)ₖₕ| + |(Zⱼ)ₕₖ| ≤ λγ,  λI + T(Z) ⪰ 0,
//! ```
//!
//! after which `X°` follows from a Yule-Walker system, the latent factor `G`
//! spans the nullspace of `V° = λI + T(Z°)`, and the scaling `H` solves the
//! sparsity equations on the pairs whose group constraint is inactive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CovSequence;
use crate::error::{Error, Result};
use crate::linalg::{
    frob_inner, log_det_pd, max_abs, min_eigenvalue, numerical_rank, sym_eigen_sorted,
};
use crate::lmi::{AbsGroup, AffineSym, Barrier, BarrierProblem};
use crate::specpoly::{
    adjoint_d, delta_quadratic, is_psd_on_grid, toeplitz, BlockRow, EdgeSet, FreqGrid,
};

/// Regularization weights `λ` (rank) and `γ` (sparsity versus rank).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    lambda: f64,
    gamma: f64,
}

impl RegParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0 && gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda and gamma must be positive and finite, got ({lambda}, {gamma})"
            )));
        }
        Ok(Self { lambda, gamma })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda_gamma(&self) -> f64 {
        self.lambda * self.gamma
    }
}

/// Tolerances and barrier schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target for the duality gap (relative to `1 + |objective|`) and the
    /// complementary-slackness products.
    pub tol: f64,
    pub mu_init: f64,
    pub mu_factor: f64,
    /// Barrier parameter below which certification is attempted.
    pub mu_target: f64,
    /// Smallest barrier parameter tried before giving up on certification.
    pub mu_floor: f64,
    pub max_newton_per_stage: usize,
    /// Eigenvalues of `V°` at most `rank_tol·λ` span the latent nullspace.
    pub rank_tol: f64,
    /// Entries of `D(X°+L°)` at most `zero_tol·max|D(X°+L°)|` are zero.
    pub zero_tol: f64,
    /// A pair is inactive when its group slack exceeds `inactive_tol·λγ`.
    pub inactive_tol: f64,
    /// Keep the `λI + T(Z) ⪰ 0` constraint; without it `L = 0`.
    pub latent: bool,
    pub grid_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            mu_init: 1.0,
            mu_factor: 0.1,
            mu_target: 1e-8,
            mu_floor: 1e-14,
            max_newton_per_stage: 200,
            rank_tol: 1e-5,
            zero_tol: 1e-5,
            inactive_tol: 1e-5,
            latent: true,
            grid_points: FreqGrid::DEFAULT_POINTS,
        }
    }
}

/// Dual point `(W, Z)` together with the barrier multiplier estimates.
#[derive(Clone, Debug)]
pub struct SLDual {
    pub w: DMatrix<f64>,
    pub z: BlockRow,
    /// `log det W + m`.
    pub objective: f64,
    /// Barrier parameter at which the point was computed.
    pub mu: f64,
    /// Multiplier estimate for `λI + T(Z) ⪰ 0`, i.e. an approximation of `L°`.
    pub barrier_l: Option<DMatrix<f64>>,
    pub newton_steps: usize,
}

/// Variable layout: `W` upper triangle, then `Z₀` upper off-diagonal
/// entries, then `Zⱼ` off-diagonal entries for `j ≥ 1`.
struct Layout {
    m: usize,
    n: usize,
}

impl Layout {
    fn n_w(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    fn w_var(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        i * self.m - i * (i + 1) / 2 + j
    }

    fn z0_var(&self, k: usize, h: usize) -> usize {
        let (k, h) = (k.min(h), k.max(h));
        let off = k * (self.m - 1) - k * (k + 1) / 2 + (h - 1);
        self.n_w() + off
    }

    fn zj_var(&self, j: usize, k: usize, h: usize) -> usize {
        let m = self.m;
        let base = self.n_w() + m * (m - 1) / 2 + (j - 1) * m * (m - 1);
        base + k * (m - 1) + if h > k { h - 1 } else { h }
    }

    fn n_vars(&self) -> usize {
        self.n_w() + self.m * (self.m - 1) / 2 + self.n * self.m * (self.m - 1)
    }

    /// Adds `±T(Z)` terms (sign `s`) to an affine matrix of size `m(n+1)`.
    fn add_toeplitz_z(&self, a: &mut AffineSym, s: f64) {
        let (m, n) = (self.m, self.n);
        for k in 0..m {
            for h in 0..m {
                if k == h {
                    continue;
                }
                if k < h {
                    let v = self.z0_var(k, h);
                    for i in 0..=n {
                        a.add_sym(v, i * m + k, i * m + h, s);
                    }
                }
                for j in 1..=n {
                    let v = self.zj_var(j, k, h);
                    for i in 0..=(n - j) {
                        a.add_sym(v, i * m + k, (i + j) * m + h, s);
                    }
                }
            }
        }
    }

    fn groups(&self, bound: f64) -> Vec<AbsGroup> {
        let mut out = Vec::new();
        for k in 0..self.m {
            for h in (k + 1)..self.m {
                let mut members = vec![(self.z0_var(k, h), 2.0)];
                for j in 1..=self.n {
                    members.push((self.zj_var(j, k, h), 1.0));
                    members.push((self.zj_var(j, h, k), 1.0));
                }
                out.push(AbsGroup { members, bound });
            }
        }
        out
    }

    fn z_from_x(&self, x: &DVector<f64>) -> BlockRow {
        let (m, n) = (self.m, self.n);
        let mut blocks = vec![DMatrix::zeros(m, m); n + 1];
        for k in 0..m {
            for h in 0..m {
                if k == h {
                    continue;
                }
                blocks[0][(k, h)] = x[self.z0_var(k, h)];
                for (j, b) in blocks.iter_mut().enumerate().skip(1) {
                    b[(k, h)] = x[self.zj_var(j, k, h)];
                }
            }
        }
        BlockRow::new(blocks).expect("Z₀ is symmetric by construction")
    }
}

/// `h∞(Y) = Σ_{k>h} max_j {|(Y₀)ₖₕ|, |(Yⱼ)ₖₕ|, |(Yⱼ)ₕₖ|}`.
pub fn h_inf(y: &BlockRow) -> f64 {
    let m = y.m();
    let mut total = 0.0;
    for k in 0..m {
        for h in 0..k {
            total += group_max(y, k, h);
        }
    }
    total
}

fn group_max(y: &BlockRow, k: usize, h: usize) -> f64 {
    y.blocks().iter().fold(0.0f64, |acc, b| {
        acc.max(b[(k, h)].abs()).max(b[(h, k)].abs())
    })
}

/// Group usage `Σⱼ |(Zⱼ)ₖₕ| + |(Zⱼ)ₕₖ|` (a `Z₀` entry counts twice).
fn group_usage(z: &BlockRow, k: usize, h: usize) -> f64 {
    z.blocks()
        .iter()
        .map(|b| b[(k, h)].abs() + b[(h, k)].abs())
        .sum()
}

/// `φ*(ΔLΔ*) = tr L` for `L ⪰ 0`.
pub fn phi_star(l: &DMatrix<f64>) -> Result<f64> {
    let scale = max_abs(l).max(1.0);
    let min_eig = min_eigenvalue(l);
    if min_eig < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite {
            what: "latent matrix L",
            min_eig,
        });
    }
    Ok(l.trace())
}

/// Builds the barrier problem for the dual program.
fn dual_problem(cov: &CovSequence, reg: &RegParams, latent: bool) -> (Layout, BarrierProblem) {
    let layout = Layout {
        m: cov.m(),
        n: cov.n(),
    };
    let (m, n) = (layout.m, layout.n);
    let dim = m * (n + 1);

    let mut obj = AffineSym::new(DMatrix::zeros(m, m));
    let mut lmi1 = AffineSym::new(toeplitz(cov.lags()));
    for i in 0..m {
        for j in i..m {
            let v = layout.w_var(i, j);
            obj.add_sym(v, i, j, 1.0);
            lmi1.add_sym(v, i, j, -1.0);
        }
    }
    layout.add_toeplitz_z(&mut lmi1, 1.0);
    let mut lmis = vec![lmi1];
    if latent {
        let mut lmi2 = AffineSym::new(DMatrix::identity(dim, dim) * reg.lambda());
        layout.add_toeplitz_z(&mut lmi2, 1.0);
        lmis.push(lmi2);
    }
    let prob = BarrierProblem {
        n_vars: layout.n_vars(),
        objective: vec![obj],
        lmis,
        groups: layout.groups(reg.lambda_gamma()),
    };
    (layout, prob)
}

/// Yule-Walker solution `B = [I, B₁, …, Bₙ]` of `M Bᵀ = [W; 0]` together
/// with the implied `W = M₀₀ + M₀,rest B_restᵀ`.
pub fn yule_walker(m_mat: &DMatrix<f64>, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = m_mat.nrows();
    let rest = dim - m;
    let mut b = DMatrix::zeros(m, dim);
    b.view_mut((0, 0), (m, m)).fill_with_identity();
    let mut w = m_mat.view((0, 0), (m, m)).into_owned();
    if rest > 0 {
        let m11 = m_mat.view((m, m), (rest, rest)).into_owned();
        let m10 = m_mat.view((m, 0), (rest, m)).into_owned();
        let chol = m11.cholesky().ok_or_else(|| {
            Error::Singular("Yule-Walker system T(R)+T(Z) is not positive definite".into())
        })?;
        let brest_t = -chol.solve(&m10);
        w += m_mat.view((0, m), (m, rest)) * &brest_t;
        b.view_mut((0, m), (m, rest))
            .copy_from(&brest_t.transpose());
    }
    crate::linalg::symmetrize(&mut w);
    Ok((b, w))
}

/// Solves the dual program to barrier parameter `opts.mu_target`.
pub fn solve_sl_dual(cov: &CovSequence, reg: &RegParams, opts: &SolverOptions) -> Result<SLDual> {
    let (layout, prob) = dual_problem(cov, reg, opts.latent);
    let mut barrier = start_barrier(cov, &layout, &prob)?;
    let mut mu = opts.mu_init;
    loop {
        barrier.center(mu, opts.max_newton_per_stage, "sl dual")?;
        if mu <= opts.mu_target {
            return dual_point(cov, &layout, &barrier);
        }
        mu *= opts.mu_factor;
    }
}

fn start_barrier<'a>(
    cov: &CovSequence,
    layout: &Layout,
    prob: &'a BarrierProblem,
) -> Result<Barrier<'a>> {
    let mut x0 = DVector::zeros(prob.n_vars);
    let w0 = 0.5 * cov.toeplitz_min_eigenvalue();
    for i in 0..layout.m {
        x0[layout.w_var(i, i)] = w0;
    }
    Barrier::new(prob, x0)
}

fn dual_point(cov: &CovSequence, layout: &Layout, barrier: &Barrier<'_>) -> Result<SLDual> {
    let z = layout.z_from_x(barrier.x());
    let m_mat = toeplitz(&cov.lags().try_add(&z)?);
    let (_, w) = yule_walker(&m_mat, layout.m)?;
    let objective = log_det_pd(&w).ok_or(Error::NotPositiveDefinite {
        what: "dual W",
        min_eig: min_eigenvalue(&w),
    })? + layout.m as f64;
    let mult = barrier.multipliers();
    Ok(SLDual {
        w,
        z,
        objective,
        mu: barrier.mu(),
        barrier_l: mult.get(1).cloned(),
        newton_steps: barrier.newton_steps(),
    })
}

/// `U° = T(R̂) + T(Z°) − diag(W°, 0)`.
pub fn u_slack(dual: &SLDual, cov: &CovSequence) -> Result<DMatrix<f64>> {
    let mut u = toeplitz(&cov.lags().try_add(&dual.z)?);
    let m = dual.w.nrows();
    let mut top = u.view_mut((0, 0), (m, m));
    top -= &dual.w;
    Ok(u)
}

/// `V° = λI + T(Z°)`.
pub fn v_slack(dual: &SLDual, reg: &RegParams) -> DMatrix<f64> {
    let t = toeplitz(&dual.z);
    let dim = t.nrows();
    t + DMatrix::identity(dim, dim) * reg.lambda()
}

/// `X° = Bᵀ W⁻¹ B` from the Yule-Walker equations at `Z°`.
pub fn recover_x(dual: &SLDual, cov: &CovSequence) -> Result<DMatrix<f64>> {
    let m = cov.m();
    let m_mat = toeplitz(&cov.lags().try_add(&dual.z)?);
    let (b, w) = yule_walker(&m_mat, m)?;
    let w_chol = w.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        what: "Yule-Walker innovation covariance",
        min_eig: min_eigenvalue(&w),
    })?;
    let x = b.transpose() * w_chol.solve(&b);
    Ok(crate::linalg::symmetrized(&x))
}

/// Identified subspaces: edge set, latent factor and its scaling.
#[derive(Clone, Debug)]
pub struct LatentStructure {
    pub edges: EdgeSet,
    /// `l × m(n+1)` with orthonormal rows.
    pub g: DMatrix<f64>,
    /// `l × l` positive semidefinite.
    pub h: DMatrix<f64>,
    /// Whether the linear system for `H` has full column rank.
    pub unique: bool,
}

impl LatentStructure {
    /// Structure with no latent variables.
    pub fn sparse_only(edges: EdgeSet, n: usize) -> Self {
        let dim = edges.m() * (n + 1);
        Self {
            edges,
            g: DMatrix::zeros(0, dim),
            h: DMatrix::zeros(0, 0),
            unique: true,
        }
    }

    pub fn l(&self) -> usize {
        self.g.nrows()
    }

    pub fn m(&self) -> usize {
        self.edges.m()
    }

    /// `L = Gᵀ H G`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        if self.l() == 0 {
            let d = self.g.ncols();
            return DMatrix::zeros(d, d);
        }
        self.g.transpose() * &self.h * &self.g
    }
}

/// Latent factor and edge recovery output.
#[derive(Clone, Debug)]
pub struct LatentRecovery {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub unique: bool,
    /// Pairs `(k, h)`, `k < h`, whose group constraint is inactive.
    pub inactive: Vec<(usize, usize)>,
    /// Residual norm of the least-squares system for `H`.
    pub residual: f64,
    /// Most negative eigenvalue of `H` before projection onto the PSD cone.
    pub h_min_eig: f64,
}

/// Inactive pairs: group slack above `inactive_tol·λγ`.
pub fn inactive_pairs(z: &BlockRow, reg: &RegParams, inactive_tol: f64) -> Vec<(usize, usize)> {
    let m = z.m();
    let lg = reg.lambda_gamma();
    let mut out = Vec::new();
    for k in 0..m {
        for h in (k + 1)..m {
            if lg - group_usage(z, k, h) > inactive_tol * lg {
                out.push((k, h));
            }
        }
    }
    out
}

/// Index of the symmetric basis element `(a, b)`, `a ≤ b`, of `l × l` matrices.
pub(crate) fn vech_index(l: usize, a: usize, b: usize) -> usize {
    a * l - a * (a + 1) / 2 + b
}

/// `(rows, rhs)` selection of `(Dⱼ(·))ₖₕ` entries constrained over `pairs`.
pub(crate) fn constrained_entries(
    pairs: &[(usize, usize)],
    n: usize,
) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for &(k, h) in pairs {
        out.push((0, k, h));
        for j in 1..=n {
            out.push((j, k, h));
            out.push((j, h, k));
        }
    }
    out
}

/// Matrix of the linear map `vech(H) ↦ ((Dⱼ(GᵀHG))ₖₕ)` over the given entries.
pub(crate) fn latent_system(
    g: &DMatrix<f64>,
    m: usize,
    n: usize,
    entries: &[(usize, usize, usize)],
) -> DMatrix<f64> {
    let l = g.nrows();
    let nu = l * (l + 1) / 2;
    let mut a = DMatrix::zeros(entries.len(), nu);
    for (row, &(j, k, h)) in entries.iter().enumerate() {
        let scale = if j == 0 { 1.0 } else { 2.0 };
        for i in 0..=(n - j) {
            let p = i * m + k;
            let q = (i + j) * m + h;
            for ia in 0..l {
                for ib in ia..l {
                    let v = if ia == ib {
                        g[(ia, p)] * g[(ia, q)]
                    } else {
                        g[(ia, p)] * g[(ib, q)] + g[(ib, p)] * g[(ia, q)]
                    };
                    a[(row, vech_index(l, ia, ib))] += scale * v;
                }
            }
        }
    }
    a
}

const SYSTEM_RANK_TOL: f64 = 1e-9;

pub(crate) fn full_column_rank(a: &DMatrix<f64>) -> bool {
    a.ncols() == 0 || (a.nrows() >= a.ncols() && numerical_rank(a, SYSTEM_RANK_TOL) == a.ncols())
}

/// Whether the sparsity equations determine `H` uniquely: the sufficient
/// condition for the two subspaces to intersect only at zero.
pub fn transversality(edges: &EdgeSet, g: &DMatrix<f64>, n: usize) -> bool {
    if g.nrows() == 0 {
        return true;
    }
    let pairs: Vec<_> = edges.complement().pairs().collect();
    let a = latent_system(g, edges.m(), n, &constrained_entries(&pairs, n));
    full_column_rank(&a)
}

/// Projects `H` onto the PSD cone, rejecting violations beyond round-off.
pub(crate) fn psd_project(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (vals, vecs) = sym_eigen_sorted(h);
    let min = vals.first().copied().unwrap_or(0.0);
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if min < -1e-8 * scale {
        return Err(Error::StructureRecovery(format!(
            "latent scaling H has eigenvalue {min:.3e}"
        )));
    }
    let clipped = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0)));
    Ok((
        &vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose(),
        min,
    ))
}

/// Recovers `G` from the nullspace of `V°` and `H` from the sparsity
/// equations on the inactive pairs.
pub fn recover_latent(
    dual: &SLDual,
    x: &DMatrix<f64>,
    reg: &RegParams,
    opts: &SolverOptions,
) -> Result<LatentRecovery> {
    let m = dual.z.m();
    let n = dual.z.n();
    let inactive = inactive_pairs(&dual.z, reg, opts.inactive_tol);
    let dim = m * (n + 1);
    if !opts.latent {
        return Ok(LatentRecovery {
            g: DMatrix::zeros(0, dim),
            h: DMatrix::zeros(0, 0),
            unique: true,
            inactive,
            residual: 0.0,
            h_min_eig: 0.0,
        });
    }
    let v = v_slack(dual, reg);
    let (vals, vecs) = sym_eigen_sorted(&v);
    let l = vals
        .iter()
        .filter(|&&e| e <= opts.rank_tol * reg.lambda())
        .count();
    let g = vecs.columns(0, l).transpose();
    if l == 0 {
        return Ok(LatentRecovery {
            g,
            h: DMatrix::zeros(0, 0),
            unique: true,
            inactive,
            residual: 0.0,
            h_min_eig: 0.0,
        });
    }

    let entries = constrained_entries(&inactive, n);
    let a = latent_system(&g, m, n, &entries);
    let unique = full_column_rank(&a);
    let dx = adjoint_d(x, m)?;
    let rhs = DVector::from_iterator(
        entries.len(),
        entries.iter().map(|&(j, k, h)| -dx.block(j)[(k, h)]),
    );

    let h_raw = if unique {
        let sol = a
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Singular(format!("latent scaling system: {e}")))?;
        let mut h = DMatrix::zeros(l, l);
        for ia in 0..l {
            for ib in ia..l {
                let val = sol[vech_index(l, ia, ib)];
                h[(ia, ib)] = val;
                h[(ib, ia)] = val;
            }
        }
        h
    } else {
        let lb = dual.barrier_l.as_ref().ok_or_else(|| {
            Error::StructureRecovery("no multiplier estimate for the latent constraint".into())
        })?;
        crate::linalg::symmetrized(&(&g * lb * g.transpose()))
    };
    let residual = if entries.is_empty() {
        0.0
    } else {
        let mut hv = DVector::zeros(a.ncols());
        for ia in 0..l {
            for ib in ia..l {
                hv[vech_index(l, ia, ib)] = h_raw[(ia, ib)];
            }
        }
        (&a * hv - &rhs).norm()
    };
    let (h, h_min_eig) = psd_project(&h_raw)?;
    Ok(LatentRecovery {
        g,
        h,
        unique,
        inactive,
        residual,
        h_min_eig,
    })
}

/// Support of `D(X°+L°)`: a pair is an edge when any lag entry exceeds
/// `zero_tol` times the largest entry.
pub fn support_edges(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    m: usize,
    zero_tol: f64,
) -> Result<EdgeSet> {
    let y = adjoint_d(&(x + l), m)?;
    let thresh = zero_tol * y.max_abs();
    let mut e = EdgeSet::empty(m);
    for k in 0..m {
        for h in (k + 1)..m {
            if group_max(&y, k, h) > thresh {
                e.insert(k, h);
            }
        }
    }
    Ok(e)
}

/// Optimality report for a recovered primal-dual pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SLCertificate {
    pub dual_objective: f64,
    pub primal_objective: f64,
    /// `primal − dual`.
    pub gap: f64,
    /// `⟨U°, X°⟩`.
    pub ux: f64,
    /// `⟨V°, L°⟩`.
    pub vl: f64,
    pub rank_x: usize,
    /// Smallest eigenvalue of `ΔX°Δ*` on the grid.
    pub min_eig_x_spectrum: f64,
    pub min_eig_u: f64,
    /// Absent when the latent constraint is disabled.
    pub min_eig_v: Option<f64>,
    /// Largest `Σⱼ|(Zⱼ)ₖₕ|+|(Zⱼ)ₕₖ| − λγ` over pairs.
    pub group_excess: f64,
    pub mu: f64,
    /// Pairs on which the thresholded support and the active set disagree.
    pub support_disagreement: usize,
    pub certified: bool,
}

/// Full output of the subspace-estimation stage.
#[derive(Clone, Debug)]
pub struct SLSolution {
    pub dual: SLDual,
    pub x: DMatrix<f64>,
    pub latent: LatentRecovery,
    pub structure: LatentStructure,
    pub certificate: SLCertificate,
}

/// Primal objective `−log det X₀₀ + ⟨T(R̂),X⟩ + λγ h∞(D(X+L)) + λ tr L`.
pub fn primal_objective(
    x: &DMatrix<f64>,
    l: &DMatrix<f64>,
    cov: &CovSequence,
    reg: &RegParams,
) -> Result<f64> {
    let m = cov.m();
    let x00 = x.view((0, 0), (m, m)).into_owned();
    let ld = log_det_pd(&x00).ok_or(Error::NotPositiveDefinite {
        what: "X00",
        min_eig: min_eigenvalue(&x00),
    })?;
    let y = adjoint_d(&(x + l), m)?;
    Ok(-ld
        + frob_inner(&toeplitz(cov.lags()), x)
        + reg.lambda_gamma() * h_inf(&y)
        + reg.lambda() * l.trace())
}

/// Rank with eigenvalue threshold `1e-7·‖X‖`.
pub fn x_rank(x: &DMatrix<f64>) -> usize {
    let (vals, _) = sym_eigen_sorted(x);
    let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    vals.iter().filter(|v| **v > 1e-7 * top).count()
}

/// Recovers the primal pair and subspaces from a dual point and certifies it.
pub fn recover(
    dual: SLDual,
    cov: &CovSequence,
    reg: &RegParams,
    opts: &SolverOptions,
) -> Result<SLSolution> {
    let m = cov.m();
    let x = recover_x(&dual, cov)?;
    let latent = recover_latent(&dual, &x, reg, opts)?;
    let l_mat = if latent.g.nrows() == 0 {
        DMatrix::zeros(x.nrows(), x.ncols())
    } else {
        latent.g.transpose() * &latent.h * &latent.g
    };
    let edges = support_edges(&x, &l_mat, m, opts.zero_tol)?;
    let inactive_edges = EdgeSet::from_pairs(m, latent.inactive.iter().copied())?.complement();
    let support_disagreement = edges.symmetric_difference(&inactive_edges).len();

    let u = u_slack(&dual, cov)?;
    let v = v_slack(&dual, reg);
    let ux = frob_inner(&u, &x);
    let vl = if opts.latent {
        frob_inner(&v, &l_mat)
    } else {
        0.0
    };
    let primal = primal_objective(&x, &l_mat, cov, reg)?;
    let gap = primal - dual.objective;
    let grid = FreqGrid::new(opts.grid_points)?;
    let min_eig_x_spectrum = is_psd_on_grid(&delta_quadratic(&x, m)?, &grid, 0.0).min_eigenvalue;
    let group_excess = (0..m)
        .flat_map(|k| ((k + 1)..m).map(move |h| (k, h)))
        .map(|(k, h)| group_usage(&dual.z, k, h) - reg.lambda_gamma())
        .fold(f64::NEG_INFINITY, f64::max);
    let rank_x = x_rank(&x);
    let tol = opts.tol;
    let certified = gap.abs() <= tol * (1.0 + dual.objective.abs())
        && ux <= tol
        && vl <= tol
        && rank_x == m
        && min_eig_x_spectrum > 0.0;
    let certificate = SLCertificate {
        dual_objective: dual.objective,
        primal_objective: primal,
        gap,
        ux,
        vl,
        rank_x,
        min_eig_x_spectrum,
        min_eig_u: min_eigenvalue(&u),
        min_eig_v: opts.latent.then(|| min_eigenvalue(&v)),
        group_excess: if m > 1 { group_excess } else { 0.0 },
        mu: dual.mu,
        support_disagreement,
        certified,
    };
    let structure = LatentStructure {
        edges,
        g: latent.g.clone(),
        h: latent.h.clone(),
        unique: latent.unique,
    };
    Ok(SLSolution {
        dual,
        x,
        latent,
        structure,
        certificate,
    })
}

/// Solves the regularized program and recovers the subspaces, lowering the
/// barrier parameter below `mu_target` until the recovered pair is certified
/// or `mu_floor` is reached.
pub fn solve_sl(cov: &CovSequence, reg: &RegParams, opts: &SolverOptions) -> Result<SLSolution> {
    let (layout, prob) = dual_problem(cov, reg, opts.latent);
    let mut barrier = start_barrier(cov, &layout, &prob)?;
    let mut mu = opts.mu_init;
    let mut best: Option<SLSolution> = None;
    let mut last_err = None;
    loop {
        if let Err(e) = barrier.center(mu, opts.max_newton_per_stage, "sl dual") {
            return match best {
                Some(sol) => {
                    log::debug!("stopping at mu={mu:.1e}: {e}");
                    Ok(sol)
                }
                None => Err(e),
            };
        }
        if mu <= opts.mu_target {
            match dual_point(cov, &layout, &barrier).and_then(|d| recover(d, cov, reg, opts)) {
                Ok(sol) => {
                    log::debug!(
                        "sl: lambda={:.3e} gamma={:.3e} mu={:.1e} gap={:.3e} ux={:.3e} vl={:.3e} l={} edges={}",
                        reg.lambda(),
                        reg.gamma(),
                        mu,
                        sol.certificate.gap,
                        sol.certificate.ux,
                        sol.certificate.vl,
                        sol.structure.l(),
                        sol.structure.edges.len()
                    );
                    if sol.certificate.certified {
                        return Ok(sol);
                    }
                    best = Some(sol);
                }
                Err(e) => {
                    log::debug!("recovery at mu={mu:.1e} failed: {e}");
                    last_err = Some(e);
                }
            }
        }
        let next = mu * opts.mu_factor;
        if next < opts.mu_floor {
            return match (best, last_err) {
                (Some(sol), _) => Ok(sol),
                (None, Some(e)) => Err(e),
                (None, None) => Err(Error::IterationLimit {
                    stage: "sl certification",
                    iterations: barrier.newton_steps(),
                }),
            };
        }
        mu = next;
    }
}
