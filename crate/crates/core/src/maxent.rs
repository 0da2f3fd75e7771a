//! Fixed-structure AR identification: the maximum-entropy program restricted
//! to a given edge set and latent factor, and its covariance-extension
//! certificate.
//!
//! The program is solved through its dual
//!
//! ```text
//! max log det W + m   s.t.  T(R̂) + T(Z) ⪰ diag(W, 0),   G T(Z) Gᵀ ⪰ 0,
//! ```
//!
//! with `Z` supported on the lag entries of the pairs outside `E`. The
//! primal `X°` is then read off the Yule-Walker equations at `Z°`, which
//! makes the moment match on `E` exact, and `H°` solves the sparsity
//! equations on the complement of `E`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CovSequence;
use crate::error::{Error, Result};
use crate::linalg::{
    herm_eigenvalues, log_det_hpd, log_det_pd, max_abs, min_eigenvalue, numerical_rank,
    symmetrized, CMatrix,
};
use crate::lmi::{AffineSym, Barrier, BarrierProblem};
use crate::slsolve::{
    constrained_entries, full_column_rank, latent_system, psd_project, vech_index, yule_walker,
    LatentStructure,
};
use crate::specpoly::{
    adjoint_d, delta_quadratic, eval, integrate_scalar, is_psd_on_grid, spectrum_lags, toeplitz,
    BlockRow, EdgeSet, FreqGrid, PseudoPoly,
};

/// Barrier schedule and acceptance tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedOptions {
    pub tol: f64,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub mu_target: f64,
    pub mu_floor: f64,
    pub max_newton_per_stage: usize,
    pub grid_points: usize,
}

impl Default for FixedOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            mu_init: 1.0,
            mu_factor: 0.1,
            mu_target: 1e-9,
            mu_floor: 1e-14,
            max_newton_per_stage: 200,
            grid_points: FreqGrid::DEFAULT_POINTS,
        }
    }
}

/// Solution `(X°, H°)` of the fixed-structure program.
#[derive(Clone, Debug)]
pub struct FixedStructureSolution {
    pub m: usize,
    pub n: usize,
    pub edges: EdgeSet,
    /// `l × m(n+1)` latent factor.
    pub g: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Dual variables at the returned point.
    pub w: DMatrix<f64>,
    pub z: BlockRow,
    /// `log det W + m`.
    pub dual_objective: f64,
    /// Largest `|Dⱼ(X°+GᵀH°G)ₖₕ|` over pairs outside `E`.
    pub sparsity_residual: f64,
    /// Whether the sparsity equations determine `H°` uniquely.
    pub h_unique: bool,
    pub mu: f64,
    pub newton_steps: usize,
}

impl FixedStructureSolution {
    pub fn l(&self) -> usize {
        self.g.nrows()
    }

    /// `GᵀH°G`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        if self.l() == 0 {
            DMatrix::zeros(self.x.nrows(), self.x.ncols())
        } else {
            self.g.transpose() * &self.h * &self.g
        }
    }

    /// `Σ° = ΔGᵀH°GΔ* + ΔX°Δ*`.
    pub fn sigma(&self) -> PseudoPoly {
        delta_quadratic(&(&self.x + self.l_matrix()), self.m).expect("square of size m(n+1)")
    }

    /// `Λ° = ΔGᵀH°GΔ*`.
    pub fn lambda(&self) -> PseudoPoly {
        delta_quadratic(&self.l_matrix(), self.m).expect("square of size m(n+1)")
    }

    /// `Σ° − Λ° = ΔX°Δ*`.
    pub fn inverse_spectrum(&self) -> PseudoPoly {
        delta_quadratic(&self.x, self.m).expect("square of size m(n+1)")
    }

    /// `Φ̂°_m = (Σ° − Λ°)⁻¹` on the grid.
    pub fn spectrum(&self, grid: &FreqGrid) -> Result<Vec<CMatrix>> {
        invert_on_grid(&self.inverse_spectrum(), grid)
    }
}

pub(crate) fn invert_on_grid(p: &PseudoPoly, grid: &FreqGrid) -> Result<Vec<CMatrix>> {
    eval(p, grid)
        .into_iter()
        .map(|v| {
            v.clone()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite {
                    what: "inverse spectrum on the grid",
                    min_eig: herm_eigenvalues(&v)[0],
                })
        })
        .collect()
}

/// Dual variables: `W` upper triangle, then one variable per constrained
/// lag entry of a pair outside `E`.
struct FixedLayout {
    m: usize,
    n: usize,
    entries: Vec<(usize, usize, usize)>,
}

impl FixedLayout {
    fn new(edges: &EdgeSet, n: usize) -> Self {
        let pairs: Vec<_> = edges.complement().pairs().collect();
        Self {
            m: edges.m(),
            n,
            entries: constrained_entries(&pairs, n),
        }
    }

    fn n_w(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    fn w_var(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        i * self.m - i * (i + 1) / 2 + j
    }

    fn n_vars(&self) -> usize {
        self.n_w() + self.entries.len()
    }

    /// Block-row entries `(row, col)` of `T(E_v)` in the upper triangle.
    fn toeplitz_pattern(&self, e: usize) -> Vec<(usize, usize)> {
        let (j, k, h) = self.entries[e];
        let m = self.m;
        (0..=(self.n - j))
            .map(|i| (i * m + k, (i + j) * m + h))
            .collect()
    }

    fn z_from_x(&self, x: &DVector<f64>) -> BlockRow {
        let mut blocks = vec![DMatrix::zeros(self.m, self.m); self.n + 1];
        for (e, &(j, k, h)) in self.entries.iter().enumerate() {
            let v = x[self.n_w() + e];
            blocks[j][(k, h)] = v;
            if j == 0 {
                blocks[0][(h, k)] = v;
            }
        }
        BlockRow::new(blocks).expect("Z₀ is symmetric by construction")
    }

    /// `G F Gᵀ` for the symmetric pattern of entry `e`.
    fn latent_term(&self, g: &DMatrix<f64>, e: usize) -> DMatrix<f64> {
        let l = g.nrows();
        let mut out = DMatrix::zeros(l, l);
        for (p, q) in self.toeplitz_pattern(e) {
            let gp = g.column(p);
            let gq = g.column(q);
            out += gp * gq.transpose() + gq * gp.transpose();
        }
        out
    }
}

fn build_problem(
    cov: &CovSequence,
    layout: &FixedLayout,
    g: &DMatrix<f64>,
    with_latent: bool,
) -> BarrierProblem {
    let m = layout.m;
    let mut obj = AffineSym::new(DMatrix::zeros(m, m));
    let mut lmi1 = AffineSym::new(toeplitz(cov.lags()));
    for i in 0..m {
        for j in i..m {
            let v = layout.w_var(i, j);
            obj.add_sym(v, i, j, 1.0);
            lmi1.add_sym(v, i, j, -1.0);
        }
    }
    for e in 0..layout.entries.len() {
        let v = layout.n_w() + e;
        for (p, q) in layout.toeplitz_pattern(e) {
            lmi1.add_sym(v, p, q, 1.0);
        }
    }
    let mut lmis = vec![lmi1];
    if with_latent {
        let l = g.nrows();
        let mut lmi2 = AffineSym::new(DMatrix::zeros(l, l));
        for e in 0..layout.entries.len() {
            let t = layout.latent_term(g, e);
            for a in 0..l {
                for b in a..l {
                    lmi2.add_sym(layout.n_w() + e, a, b, t[(a, b)]);
                }
            }
        }
        lmis.push(lmi2);
    }
    BarrierProblem {
        n_vars: layout.n_vars(),
        objective: vec![obj],
        lmis,
        groups: Vec::new(),
    }
}

/// Matrix of `z ↦ vech(G T(z) Gᵀ)`.
fn latent_map(layout: &FixedLayout, g: &DMatrix<f64>) -> DMatrix<f64> {
    let l = g.nrows();
    let mut a = DMatrix::zeros(l * (l + 1) / 2, layout.entries.len());
    for e in 0..layout.entries.len() {
        let t = layout.latent_term(g, e);
        for ia in 0..l {
            for ib in ia..l {
                a[(vech_index(l, ia, ib), e)] = t[(ia, ib)];
            }
        }
    }
    a
}

/// Strictly feasible start: a least-norm `z` with `G T(z) Gᵀ = I`, scaled so
/// that `T(R̂) + T(z)` stays positive definite, and `W` at half its margin.
fn start_point(
    cov: &CovSequence,
    layout: &FixedLayout,
    g: &DMatrix<f64>,
    with_latent: bool,
) -> Result<DVector<f64>> {
    let mut x0 = DVector::zeros(layout.n_vars());
    let base = toeplitz(cov.lags());
    if with_latent {
        let l = g.nrows();
        let a = latent_map(layout, g);
        let mut target = DVector::zeros(a.nrows());
        for i in 0..l {
            target[vech_index(l, i, i)] = 1.0;
        }
        let z = a
            .clone()
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| Error::Infeasible(format!("latent constraint: {e}")))?;
        if (&a * &z - &target).norm() > 1e-8 {
            return Err(Error::Infeasible(
                "no Z outside E makes G T(Z) Gᵀ positive definite".into(),
            ));
        }
        let mut tz = DMatrix::<f64>::zeros(base.nrows(), base.ncols());
        for (e, &v) in z.iter().enumerate() {
            for (p, q) in layout.toeplitz_pattern(e) {
                tz[(p, q)] += v;
                if p != q {
                    tz[(q, p)] += v;
                }
            }
        }
        let norm = tz
            .clone()
            .symmetric_eigenvalues()
            .amax()
            .max(f64::MIN_POSITIVE);
        let alpha = 0.5 * cov.toeplitz_min_eigenvalue() / norm;
        for (e, &v) in z.iter().enumerate() {
            x0[layout.n_w() + e] = alpha * v;
        }
    }
    let z = layout.z_from_x(&x0);
    let margin = min_eigenvalue(&toeplitz(&cov.lags().try_add(&z)?));
    for i in 0..layout.m {
        x0[layout.w_var(i, i)] = 0.5 * margin;
    }
    Ok(x0)
}

/// Whether `z ↦ G T(z) Gᵀ` vanishes identically, in which case the latent
/// constraint is void and `H` does not enter the program.
fn latent_map_vanishes(layout: &FixedLayout, g: &DMatrix<f64>) -> bool {
    g.nrows() == 0
        || layout.entries.is_empty()
        || numerical_rank(&latent_map(layout, g), 1e-12) == 0
}

fn dual_point_solution(
    cov: &CovSequence,
    structure: &LatentStructure,
    layout: &FixedLayout,
    barrier: &Barrier<'_>,
    with_latent: bool,
) -> Result<FixedStructureSolution> {
    let m = layout.m;
    let n = layout.n;
    let z = layout.z_from_x(barrier.x());
    let m_mat = toeplitz(&cov.lags().try_add(&z)?);
    let (b, w) = yule_walker(&m_mat, m)?;
    let dual_objective = log_det_pd(&w).ok_or(Error::NotPositiveDefinite {
        what: "dual W",
        min_eig: min_eigenvalue(&w),
    })? + m as f64;
    let w_chol = w.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        what: "Yule-Walker innovation covariance",
        min_eig: min_eigenvalue(&w),
    })?;
    let x = symmetrized(&(b.transpose() * w_chol.solve(&b)));

    let g = structure.g.clone();
    let l = g.nrows();
    let dx = adjoint_d(&x, m)?;
    let (h, h_unique) = if l == 0 {
        (DMatrix::zeros(0, 0), true)
    } else if !with_latent {
        (DMatrix::zeros(l, l), false)
    } else {
        let a = latent_system(&g, m, n, &layout.entries);
        let unique = full_column_rank(&a);
        let h_raw = if unique {
            let rhs = DVector::from_iterator(
                layout.entries.len(),
                layout.entries.iter().map(|&(j, k, h)| -dx.block(j)[(k, h)]),
            );
            let sol = a
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::Singular(format!("latent scaling system: {e}")))?;
            let mut h = DMatrix::zeros(l, l);
            for ia in 0..l {
                for ib in ia..l {
                    let v = sol[vech_index(l, ia, ib)];
                    h[(ia, ib)] = v;
                    h[(ib, ia)] = v;
                }
            }
            h
        } else {
            barrier.multipliers()[1].clone()
        };
        (psd_project(&h_raw)?.0, unique)
    };
    let mut sol = FixedStructureSolution {
        m,
        n,
        edges: structure.edges.clone(),
        g,
        x,
        h,
        w,
        z,
        dual_objective,
        sparsity_residual: 0.0,
        h_unique,
        mu: barrier.mu(),
        newton_steps: barrier.newton_steps(),
    };
    sol.sparsity_residual = sparsity_residual(&sol)?;
    Ok(sol)
}

/// Largest `|Dⱼ(X°+GᵀH°G)ₖₕ|` over lag entries of pairs outside `E`.
pub fn sparsity_residual(sol: &FixedStructureSolution) -> Result<f64> {
    let y = adjoint_d(&(&sol.x + sol.l_matrix()), sol.m)?;
    let pairs: Vec<_> = sol.edges.complement().pairs().collect();
    Ok(constrained_entries(&pairs, sol.n)
        .into_iter()
        .fold(0.0f64, |acc, (j, k, h)| acc.max(y.block(j)[(k, h)].abs())))
}

/// Solves the fixed-structure program, lowering the barrier parameter past
/// `mu_target` until the sparsity residual and the extension certificate
/// are within `tol` or `mu_floor` is reached.
pub fn solve_fixed(
    cov: &CovSequence,
    structure: &LatentStructure,
    opts: &FixedOptions,
) -> Result<FixedStructureSolution> {
    let m = cov.m();
    let n = cov.n();
    let expected = m * (n + 1);
    if structure.edges.m() != m || structure.g.ncols() != expected {
        return Err(Error::Dimension(format!(
            "structure is for m={} with G of width {}, data has m={m}, n={n}",
            structure.edges.m(),
            structure.g.ncols()
        )));
    }
    if structure.g.nrows() > 0 && numerical_rank(&structure.g, 1e-10) < structure.g.nrows() {
        return Err(Error::InvalidParameter(
            "latent factor G must have full row rank".into(),
        ));
    }
    let layout = FixedLayout::new(&structure.edges, n);
    let with_latent = !latent_map_vanishes(&layout, &structure.g);
    let prob = build_problem(cov, &layout, &structure.g, with_latent);
    let x0 = start_point(cov, &layout, &structure.g, with_latent)?;
    let mut barrier = Barrier::new(&prob, x0)?;
    let grid = FreqGrid::new(opts.grid_points)?;

    let mut mu = opts.mu_init;
    let mut best: Option<FixedStructureSolution> = None;
    loop {
        if let Err(e) = barrier.center(mu, opts.max_newton_per_stage, "fixed dual") {
            return match best {
                Some(sol) => {
                    log::debug!("fixed: stopping at mu={mu:.1e}: {e}");
                    Ok(sol)
                }
                None => Err(e),
            };
        }
        if mu <= opts.mu_target {
            let sol = dual_point_solution(cov, structure, &layout, &barrier, with_latent)?;
            let cert = certify_extension(&sol, cov, &grid)?;
            let done = sol.sparsity_residual <= opts.tol && cert.certified(opts.tol);
            log::debug!(
                "fixed: mu={mu:.1e} residual={:.3e} moments={:.3e} lmi={:?}",
                sol.sparsity_residual,
                cert.moment_residual,
                cert.lmi_min_eigenvalue
            );
            let better = best
                .as_ref()
                .is_none_or(|b| sol.sparsity_residual <= b.sparsity_residual);
            if done {
                return Ok(sol);
            }
            if better {
                best = Some(sol);
            }
        }
        let next = mu * opts.mu_factor;
        if next < opts.mu_floor {
            return best.ok_or(Error::IterationLimit {
                stage: "fixed-structure certification",
                iterations: barrier.newton_steps(),
            });
        }
        mu = next;
    }
}

/// Covariance-extension certificate of a fixed-structure solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCertificate {
    /// `max |(∫ΔΦ̂°Δ* − R̂)ⱼ|` over entries of pairs in `E` (diagonal included).
    pub moment_residual: f64,
    /// Smallest eigenvalue of `∫GΔ*Φ̂°ΔGᵀ − G T(R̂) Gᵀ`; absent without latents.
    pub lmi_min_eigenvalue: Option<f64>,
    /// `∫ log det Φ̂°`.
    pub entropy: f64,
    /// Largest `|Dⱼ(X°+GᵀH°G)ₖₕ|` outside `E`.
    pub sparsity_residual: f64,
    /// Smallest eigenvalue of `ΔX°Δ*` on the grid.
    pub min_eig_inverse_spectrum: f64,
}

impl ExtensionCertificate {
    pub fn certified(&self, tol: f64) -> bool {
        self.moment_residual <= tol
            && self.lmi_min_eigenvalue.is_none_or(|e| e >= -tol)
            && self.min_eig_inverse_spectrum > 0.0
    }
}

/// Verifies moment matching on `E` and the latent inequality from the
/// spectrum itself, by quadrature on `grid`.
pub fn certify_extension(
    sol: &FixedStructureSolution,
    cov: &CovSequence,
    grid: &FreqGrid,
) -> Result<ExtensionCertificate> {
    let m = sol.m;
    let n = sol.n;
    let inv = sol.inverse_spectrum();
    let min_eig_inverse_spectrum = is_psd_on_grid(&inv, grid, 0.0).min_eigenvalue;
    let vals = eval(&inv, grid);
    let mut phis = Vec::with_capacity(vals.len());
    let mut logdets = Vec::with_capacity(vals.len());
    for v in &vals {
        logdets.push(-log_det_hpd(v).ok_or(Error::NotPositiveDefinite {
            what: "inverse spectrum on the grid",
            min_eig: herm_eigenvalues(v)[0],
        })?);
        phis.push(
            v.clone()
                .try_inverse()
                .ok_or(Error::Singular("inverse spectrum".into()))?,
        );
    }
    let lags = spectrum_lags(&phis, grid, n)?;
    let diff = lags.try_sub(cov.lags())?;
    let mut moment_residual = 0.0f64;
    for (j, blk) in diff.blocks().iter().enumerate() {
        for k in 0..m {
            for h in 0..m {
                if sol.edges.contains(k, h) && (j > 0 || k <= h) {
                    moment_residual = moment_residual.max(blk[(k, h)].abs());
                }
            }
        }
    }
    let lmi_min_eigenvalue = (sol.l() > 0).then(|| {
        let gap = toeplitz(&diff);
        min_eigenvalue(&symmetrized(&(&sol.g * gap * sol.g.transpose())))
    });
    Ok(ExtensionCertificate {
        moment_residual,
        lmi_min_eigenvalue,
        entropy: integrate_scalar(&logdets),
        sparsity_residual: sparsity_residual(sol)?,
        min_eig_inverse_spectrum,
    })
}

/// Largest entry of `X` in absolute value, used to scale tolerances.
pub fn solution_scale(sol: &FixedStructureSolution) -> f64 {
    max_abs(&sol.x).max(1.0)
}
