//! Model scoring and regularization-path sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{bartlett_correlogram, default_bartlett_window, estimate_lags, DataMatrix};
use crate::error::{Error, Result};
use crate::io::{matrix_to_rows, rows_to_matrix};
use crate::linalg::{herm_eigenvalues, log_det_hpd, CMatrix};
use crate::maxent::{
    certify_extension, solve_fixed, ExtensionCertificate, FixedOptions, FixedStructureSolution,
};
use crate::slsolve::{solve_sl, LatentStructure, RegParams, SLCertificate, SolverOptions};
use crate::specpoly::{delta_quadratic, eval, integrate_scalar, EdgeSet, FreqGrid, PseudoPoly};

/// `½(∫ log det(Φ_C⁻¹Φ°) + tr(Φ_C Φ°⁻¹) − m)` from grid values of `Φ_C`
/// and of the inverse model spectrum `Φ°⁻¹`.
pub fn relative_entropy_rate_inv(phi_c: &[CMatrix], phi_o_inv: &[CMatrix]) -> Result<f64> {
    if phi_c.len() != phi_o_inv.len() || phi_c.is_empty() {
        return Err(Error::Dimension(
            "spectra must be sampled on the same non-empty grid".into(),
        ));
    }
    let m = phi_c[0].nrows();
    let mut vals = Vec::with_capacity(phi_c.len());
    for (c, oi) in phi_c.iter().zip(phi_o_inv) {
        if c.nrows() != oi.nrows() {
            return Err(Error::Dimension(format!(
                "{}x{} against {}x{}",
                c.nrows(),
                c.ncols(),
                oi.nrows(),
                oi.ncols()
            )));
        }
        let ld_c = log_det_hpd(c).ok_or(Error::NotPositiveDefinite {
            what: "reference spectrum",
            min_eig: herm_eigenvalues(c)[0],
        })?;
        let ld_oi = log_det_hpd(oi).ok_or(Error::NotPositiveDefinite {
            what: "model inverse spectrum",
            min_eig: herm_eigenvalues(oi)[0],
        })?;
        let tr = (c * oi).trace().re;
        vals.push(-ld_c - ld_oi + tr);
    }
    Ok(0.5 * (integrate_scalar(&vals) - m as f64))
}

/// Relative entropy rate from grid values of both spectra.
pub fn relative_entropy_rate(phi_c: &[CMatrix], phi_o: &[CMatrix]) -> Result<f64> {
    let inv: Vec<CMatrix> = phi_o
        .iter()
        .map(|p| {
            p.clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular("model spectrum is singular".into()))
        })
        .collect::<Result<_>>()?;
    relative_entropy_rate_inv(phi_c, &inv)
}

/// Unordered off-diagonal edges plus `m·l`.
pub fn complexity(edges: &EdgeSet, l: usize, m: usize) -> usize {
    edges.len() + m * l
}

/// How `D` and `p` combine into the score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ScoreRule {
    /// `f = D·p`.
    Product,
    /// `f = D + α p`; `α = 1/N` when unset.
    Additive { alpha: Option<f64> },
}

impl Default for ScoreRule {
    fn default() -> Self {
        ScoreRule::Product
    }
}

impl ScoreRule {
    pub fn score(&self, d: f64, p: usize, n_samples: usize) -> f64 {
        match *self {
            ScoreRule::Product => d * p as f64,
            ScoreRule::Additive { alpha } => d + alpha.unwrap_or(1.0 / n_samples as f64) * p as f64,
        }
    }
}

/// Ordered `(λ, γ)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegPath {
    points: Vec<RegParams>,
}

fn log_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

impl RegPath {
    pub fn new(points: Vec<RegParams>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter(
                "regularization path is empty".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Cartesian log grid, `λ` outer, `γ` inner.
    pub fn log_grid(
        lambda: (f64, f64),
        k_lambda: usize,
        gamma: (f64, f64),
        k_gamma: usize,
    ) -> Result<Self> {
        if k_lambda == 0
            || k_gamma == 0
            || !(lambda.0 > 0.0 && lambda.1 >= lambda.0 && gamma.0 > 0.0 && gamma.1 >= gamma.0)
        {
            return Err(Error::InvalidParameter(
                "log grid needs positive, ordered ranges and sizes".into(),
            ));
        }
        let mut points = Vec::with_capacity(k_lambda * k_gamma);
        for l in log_space(lambda.0, lambda.1, k_lambda) {
            for g in log_space(gamma.0, gamma.1, k_gamma) {
                points.push(RegParams::new(l, g)?);
            }
        }
        Self::new(points)
    }

    /// Log grid over `λ` and the product `λγ`.
    pub fn log_grid_lambda_gamma(
        lambda: (f64, f64),
        k_lambda: usize,
        lambda_gamma: (f64, f64),
        k_lg: usize,
    ) -> Result<Self> {
        if k_lambda == 0
            || k_lg == 0
            || !(lambda.0 > 0.0
                && lambda.1 >= lambda.0
                && lambda_gamma.0 > 0.0
                && lambda_gamma.1 >= lambda_gamma.0)
        {
            return Err(Error::InvalidParameter(
                "log grid needs positive, ordered ranges and sizes".into(),
            ));
        }
        let mut points = Vec::with_capacity(k_lambda * k_lg);
        for l in log_space(lambda.0, lambda.1, k_lambda) {
            for lg in log_space(lambda_gamma.0, lambda_gamma.1, k_lg) {
                points.push(RegParams::new(l, lg / l)?);
            }
        }
        Self::new(points)
    }

    /// Default 5×5 grid over `[0.1, 10]²`.
    pub fn default_grid() -> Self {
        Self::log_grid((0.1, 10.0), 5, (0.1, 10.0), 5).expect("valid default grid")
    }

    pub fn points(&self) -> &[RegParams] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// AR order.
    pub n: usize,
    pub solver: SolverOptions,
    pub fixed: FixedOptions,
    pub rule: ScoreRule,
    /// Bartlett window; `⌈N^{1/3}⌉` when unset.
    pub window: Option<usize>,
    pub demean: bool,
    /// Worker threads; the global pool when unset.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            solver: SolverOptions::default(),
            fixed: FixedOptions::default(),
            rule: ScoreRule::default(),
            window: None,
            demean: true,
            threads: None,
        }
    }
}

/// An identified and scored model.
#[derive(Clone, Debug)]
pub struct ScoredModel {
    pub reg: RegParams,
    pub structure: LatentStructure,
    pub solution: FixedStructureSolution,
    pub sl_certificate: SLCertificate,
    pub extension: ExtensionCertificate,
    /// Relative entropy rate against the smoothed correlogram.
    pub d: f64,
    pub p: usize,
    pub f: f64,
}

impl ScoredModel {
    pub fn l(&self) -> usize {
        self.solution.l()
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.solution.edges
    }
}

/// Reference spectrum `Φ̂_C` on the grid, ridged if nearly singular.
#[derive(Clone, Debug)]
pub struct Reference {
    pub correlogram: PseudoPoly,
    pub values: Vec<CMatrix>,
    pub ridge: f64,
    pub n_samples: usize,
}

pub fn reference_spectrum(
    data: &DataMatrix,
    window: Option<usize>,
    demean: bool,
    grid: &FreqGrid,
) -> Result<Reference> {
    let window = window.unwrap_or_else(|| default_bartlett_window(data.n_samples()));
    let correlogram = bartlett_correlogram(data, window, demean)?;
    let m = data.m();
    let level = 1e-8 * correlogram.coeff(0).trace() / m as f64;
    let mut values = eval(&correlogram, grid);
    let min_eig = values
        .iter()
        .map(|v| herm_eigenvalues(v)[0])
        .fold(f64::INFINITY, f64::min);
    let ridge = if min_eig < level { level } else { 0.0 };
    if ridge > 0.0 {
        for v in &mut values {
            for i in 0..m {
                v[(i, i)].re += ridge;
            }
        }
    }
    Ok(Reference {
        correlogram,
        values,
        ridge,
        n_samples: data.n_samples(),
    })
}

/// `(D, p, f)` of a fixed-structure solution against a reference.
pub fn score_solution(
    sol: &FixedStructureSolution,
    reference: &Reference,
    grid: &FreqGrid,
    rule: ScoreRule,
) -> Result<(f64, usize, f64)> {
    let inv = eval(&sol.inverse_spectrum(), grid);
    let d = relative_entropy_rate_inv(&reference.values, &inv)?;
    let p = complexity(&sol.edges, sol.l(), sol.m);
    Ok((d, p, rule.score(d, p, reference.n_samples)))
}

/// Result of a path sweep, in path order.
#[derive(Debug)]
pub struct Sweep {
    pub outcomes: Vec<Result<ScoredModel>>,
    pub selected: usize,
    pub reference_ridge: f64,
}

impl Sweep {
    pub fn selected_model(&self) -> &ScoredModel {
        self.outcomes[self.selected]
            .as_ref()
            .expect("selection points at a successful model")
    }
}

/// Minimum score; ties go to smaller `p`, then smaller `l`, then the first index.
pub fn select(models: &[Option<(f64, usize, usize)>]) -> Option<usize> {
    models
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|(f, p, l)| (f, p, l, i)))
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        })
        .map(|t| t.3)
}

fn identify(
    cov: &crate::covariance::CovSequence,
    reg: RegParams,
    reference: &Reference,
    grid: &FreqGrid,
    cfg: &SweepConfig,
) -> Result<ScoredModel> {
    let sl = solve_sl(cov, &reg, &cfg.solver)?;
    let solution = solve_fixed(cov, &sl.structure, &cfg.fixed)?;
    let extension = certify_extension(&solution, cov, grid)?;
    let (d, p, f) = score_solution(&solution, reference, grid, cfg.rule)?;
    log::debug!(
        "path point lambda={:.4e} gamma={:.4e}: edges={} l={} D={d:.6e} p={p} f={f:.6e}",
        reg.lambda(),
        reg.gamma(),
        solution.edges.len(),
        solution.l()
    );
    Ok(ScoredModel {
        reg,
        structure: sl.structure,
        solution,
        sl_certificate: sl.certificate,
        extension,
        d,
        p,
        f,
    })
}

/// Identifies and scores one model per path point in parallel and selects
/// the minimum score.
pub fn sweep(data: &DataMatrix, path: &RegPath, cfg: &SweepConfig) -> Result<Sweep> {
    let cov = estimate_lags(data, cfg.n, cfg.demean)?;
    let grid = FreqGrid::new(cfg.solver.grid_points)?;
    let reference = reference_spectrum(data, cfg.window, cfg.demean, &grid)?;
    let run = || -> Vec<Result<ScoredModel>> {
        path.points()
            .par_iter()
            .map(|reg| identify(&cov, *reg, &reference, &grid, cfg))
            .collect()
    };
    let outcomes = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    for (reg, o) in path.points().iter().zip(&outcomes) {
        if let Err(e) = o {
            log::warn!(
                "path point lambda={:.4e} gamma={:.4e} failed: {e}",
                reg.lambda(),
                reg.gamma()
            );
        }
    }
    let keys: Vec<_> = outcomes
        .iter()
        .map(|o| o.as_ref().ok().map(|s| (s.f, s.p, s.l())))
        .collect();
    let selected = select(&keys).ok_or(Error::AllPathPointsFailed)?;
    Ok(Sweep {
        outcomes,
        selected,
        reference_ridge: reference.ridge,
    })
}

/// One path point in the sweep report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub lambda: f64,
    pub gamma: f64,
    pub edges: Vec<(usize, usize)>,
    pub l: Option<usize>,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    pub p: Option<usize>,
    pub f: Option<f64>,
    pub certified: Option<bool>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<PointReport>,
    pub selected: usize,
}

pub fn sweep_report(path: &RegPath, sweep: &Sweep) -> SweepReport {
    let points = path
        .points()
        .iter()
        .zip(&sweep.outcomes)
        .map(|(reg, o)| match o {
            Ok(s) => PointReport {
                lambda: reg.lambda(),
                gamma: reg.gamma(),
                edges: s.edges().pairs().collect(),
                l: Some(s.l()),
                d: Some(s.d),
                p: Some(s.p),
                f: Some(s.f),
                certified: Some(s.sl_certificate.certified),
                status: "ok".into(),
            },
            Err(e) => PointReport {
                lambda: reg.lambda(),
                gamma: reg.gamma(),
                edges: Vec::new(),
                l: None,
                d: None,
                p: None,
                f: None,
                certified: None,
                status: format!("error: {e}"),
            },
        })
        .collect();
    SweepReport {
        points,
        selected: sweep.selected,
    }
}

/// Serializable summary of an identified model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub edges: Vec<(usize, usize)>,
    /// `X°`, rows of the `m(n+1)` square matrix.
    pub x: Vec<Vec<f64>>,
    /// Latent factor `G`, `l × m(n+1)`.
    pub g: Vec<Vec<f64>>,
    /// Latent scaling `H°`, `l × l`.
    pub h: Vec<Vec<f64>>,
    pub d: f64,
    pub p: usize,
    pub f: f64,
    pub sl_certificate: SLCertificate,
    pub extension: ExtensionCertificate,
}

pub fn model_report(model: &ScoredModel) -> ModelReport {
    let sol = &model.solution;
    ModelReport {
        m: sol.m,
        n: sol.n,
        l: sol.l(),
        lambda: model.reg.lambda(),
        gamma: model.reg.gamma(),
        edges: model.edges().pairs().collect(),
        x: matrix_to_rows(&sol.x),
        g: matrix_to_rows(&sol.g),
        h: matrix_to_rows(&sol.h),
        d: model.d,
        p: model.p,
        f: model.f,
        sl_certificate: model.sl_certificate.clone(),
        extension: model.extension.clone(),
    }
}

/// `(D, p, f)` of a stored model against data, scored as in [`sweep`].
pub fn rescore(
    report: &ModelReport,
    data: &DataMatrix,
    cfg: &SweepConfig,
) -> Result<(f64, usize, f64)> {
    if data.m() != report.m {
        return Err(Error::Dimension(format!(
            "model has {} manifest variables, data has {}",
            report.m,
            data.m()
        )));
    }
    let x = rows_to_matrix(&report.x)?;
    if x.nrows() != report.m * (report.n + 1) || x.ncols() != x.nrows() {
        return Err(Error::Dimension(format!(
            "X is {}×{}, expected {}×{}",
            x.nrows(),
            x.ncols(),
            report.m * (report.n + 1),
            report.m * (report.n + 1)
        )));
    }
    let edges = EdgeSet::from_pairs(report.m, report.edges.iter().copied())?;
    let grid = FreqGrid::new(cfg.solver.grid_points)?;
    let reference = reference_spectrum(data, cfg.window, cfg.demean, &grid)?;
    let inv = eval(&delta_quadratic(&x, report.m)?, &grid);
    let d = relative_entropy_rate_inv(&reference.values, &inv)?;
    let p = complexity(&edges, report.l, report.m);
    Ok((d, p, cfg.rule.score(d, p, reference.n_samples)))
}
