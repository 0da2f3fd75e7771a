//! Joint manifest-latent spectra, partial coherence and spectral error
//! curves.

use std::path::Path;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{
    herm_eigenvalues, herm_spectral_norm, hermitian_part, sym_eigen_sorted, CMatrix,
};
use crate::maxent::FixedStructureSolution;
use crate::specpoly::{eval, shift_operator, FreqGrid, PseudoPoly};

/// Relative eigenvalue threshold below which a latent direction of `H°`
/// carries no power and is dropped.
const LATENT_POWER_TOL: f64 = 1e-10;

/// Joint inverse spectrum `[[Σ°, Υ*], [Υ, I]]` with `Υ(θ) = H^{1/2} G Δ(θ)*`.
#[derive(Clone, Debug)]
pub struct JointSpectrum {
    m: usize,
    n: usize,
    sigma: PseudoPoly,
    /// `H^{1/2} G`, `l × m(n+1)`.
    loading: DMatrix<f64>,
    /// Latent directions dropped for lack of power.
    dropped: usize,
}

impl JointSpectrum {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.loading.nrows()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn sigma(&self) -> &PseudoPoly {
        &self.sigma
    }

    pub fn loading(&self) -> &DMatrix<f64> {
        &self.loading
    }

    /// `Υ(θ) = Σⱼ e^{-ijθ} (H^{1/2}G)ⱼ`.
    pub fn upsilon_lm(&self, theta: f64) -> CMatrix {
        let loading = self.loading.map(|v| Complex::new(v, 0.0));
        loading * shift_operator(theta, self.m, self.n).adjoint()
    }

    /// `Φ̂⁻¹(θ)` of size `m + l`.
    pub fn inverse_at(&self, theta: f64) -> CMatrix {
        let (m, l) = (self.m, self.l());
        let mut k = CMatrix::identity(m + l, m + l);
        k.view_mut((0, 0), (m, m))
            .copy_from(&self.sigma.value(theta));
        if l > 0 {
            let u = self.upsilon_lm(theta);
            k.view_mut((m, 0), (l, m)).copy_from(&u);
            k.view_mut((0, m), (m, l)).copy_from(&u.adjoint());
        }
        k
    }

    pub fn inverse_on_grid(&self, grid: &FreqGrid) -> Vec<CMatrix> {
        grid.thetas()
            .into_iter()
            .map(|t| self.inverse_at(t))
            .collect()
    }

    /// `Φ̂(θ)` on the grid.
    pub fn spectrum_on_grid(&self, grid: &FreqGrid) -> Result<Vec<CMatrix>> {
        self.inverse_on_grid(grid)
            .into_iter()
            .map(|k| {
                k.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::NotPositiveDefinite {
                        what: "joint inverse spectrum",
                        min_eig: herm_eigenvalues(&k)[0],
                    })
            })
            .collect()
    }
}

/// Assembles the joint spectrum with `Υ_l = I`. Null directions of `H°`
/// are dropped and counted in [`JointSpectrum::dropped`].
pub fn assemble_joint(sol: &FixedStructureSolution) -> Result<JointSpectrum> {
    let l = sol.l();
    let dim = sol.m * (sol.n + 1);
    let (loading, dropped) = if l == 0 {
        (DMatrix::zeros(0, dim), 0)
    } else {
        let (vals, vecs) = sym_eigen_sorted(&sol.h);
        let top = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if vals[0] < -1e-8 * top.max(1.0) {
            return Err(Error::NotPositiveDefinite {
                what: "latent scaling H",
                min_eig: vals[0],
            });
        }
        let keep: Vec<usize> = (0..l)
            .filter(|&i| vals[i] > LATENT_POWER_TOL * top)
            .collect();
        let mut loading = DMatrix::zeros(keep.len(), dim);
        for (r, &i) in keep.iter().enumerate() {
            let row = vecs.column(i).transpose() * &sol.g * vals[i].sqrt();
            loading.row_mut(r).copy_from(&row);
        }
        (loading, l - keep.len())
    };
    if dropped > 0 {
        log::info!("dropped {dropped} latent direction(s) with no power");
    }
    Ok(JointSpectrum {
        m: sol.m,
        n: sol.n,
        sigma: sol.sigma(),
        loading,
        dropped,
    })
}

/// `diag(K)^{-1/2} K diag(K)^{-1/2}` with unit diagonal.
pub fn normalize_inverse(k: &CMatrix) -> Result<CMatrix> {
    let d = k.nrows();
    let mut scale = Vec::with_capacity(d);
    for i in 0..d {
        let v = k[(i, i)].re;
        if !(v > 0.0) {
            return Err(Error::Singular(format!(
                "diagonal entry {i} of the inverse spectrum is {v:.3e}"
            )));
        }
        scale.push(1.0 / v.sqrt());
    }
    let mut out = CMatrix::from_fn(d, d, |r, c| k[(r, c)] * scale[r] * scale[c]);
    for i in 0..d {
        out[(i, i)] = Complex::new(1.0, 0.0);
    }
    Ok(out)
}

/// Partial coherence of the joint process on the grid.
pub fn partial_coherence(joint: &JointSpectrum, grid: &FreqGrid) -> Result<Vec<CMatrix>> {
    joint
        .inverse_on_grid(grid)
        .iter()
        .map(normalize_inverse)
        .collect()
}

/// Partial coherence from spectrum values (inverted first).
pub fn partial_coherence_of_spectrum(values: &[CMatrix]) -> Result<Vec<CMatrix>> {
    values
        .iter()
        .map(|p| {
            let k = p
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Singular("spectrum is singular".into()))?;
            normalize_inverse(&hermitian_part(&k))
        })
        .collect()
}

/// Frequency average of the coherence magnitudes.
pub fn mean_abs_coherence(pc: &[CMatrix]) -> DMatrix<f64> {
    let d = pc.first().map_or(0, |c| c.nrows());
    let mut out = DMatrix::zeros(d, d);
    for c in pc {
        out += c.map(|z| z.norm());
    }
    if !pc.is_empty() {
        out /= pc.len() as f64;
    }
    out
}

/// Normalized error curves `‖X(θ) − X°(θ)‖₂ / sup_θ ‖X(θ)‖₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralErrors {
    pub theta: Vec<f64>,
    /// Absent when the true `Σ` vanishes on the grid.
    pub sigma: Option<Vec<f64>>,
    /// Absent when the true `Λ` vanishes on the grid.
    pub lambda: Option<Vec<f64>>,
}

fn error_curve(truth: &PseudoPoly, est: &PseudoPoly, grid: &FreqGrid) -> Result<Option<Vec<f64>>> {
    if truth.m() != est.m() {
        return Err(Error::Dimension(format!(
            "truth has m={}, estimate m={}",
            truth.m(),
            est.m()
        )));
    }
    let t = eval(truth, grid);
    let e = eval(est, grid);
    let norm = t.iter().map(herm_spectral_norm).fold(0.0f64, f64::max);
    if norm == 0.0 {
        return Ok(None);
    }
    Ok(Some(
        t.iter()
            .zip(&e)
            .map(|(a, b)| herm_spectral_norm(&hermitian_part(&(a - b))) / norm)
            .collect(),
    ))
}

pub fn spectral_errors(
    truth: (&PseudoPoly, &PseudoPoly),
    est: (&PseudoPoly, &PseudoPoly),
    grid: &FreqGrid,
) -> Result<SpectralErrors> {
    Ok(SpectralErrors {
        theta: grid.thetas(),
        sigma: error_curve(truth.0, est.0, grid)?,
        lambda: error_curve(truth.1, est.1, grid)?,
    })
}

/// `theta,e_sigma,e_lambda` (absent curves omitted).
pub fn write_errors_csv<P: AsRef<Path>>(path: P, errs: &SpectralErrors) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["theta".to_string()];
    if errs.sigma.is_some() {
        header.push("e_sigma".into());
    }
    if errs.lambda.is_some() {
        header.push("e_lambda".into());
    }
    w.write_record(&header)?;
    for (i, t) in errs.theta.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        for c in [&errs.sigma, &errs.lambda].into_iter().flatten() {
            rec.push(fmt_f64(c[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `theta` column plus one `|coherence|` column per unordered pair `a|b`.
pub fn write_coherence_csv<P: AsRef<Path>>(
    path: P,
    grid: &FreqGrid,
    pc: &[CMatrix],
    labels: &[String],
) -> Result<()> {
    let d = labels.len();
    if pc.iter().any(|c| c.nrows() != d) || pc.len() != grid.len() {
        return Err(Error::Dimension(
            "coherence values do not match labels or grid".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["theta".to_string()];
    for a in 0..d {
        for b in (a + 1)..d {
            header.push(format!("{}|{}", labels[a], labels[b]));
        }
    }
    w.write_record(&header)?;
    for (k, c) in pc.iter().enumerate() {
        let mut rec = vec![fmt_f64(grid.theta(k))];
        for a in 0..d {
            for b in (a + 1)..d {
                rec.push(fmt_f64(c[(a, b)].norm()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Square table of frequency-averaged coherence magnitudes.
pub fn write_mean_coherence_csv<P: AsRef<Path>>(
    path: P,
    table: &DMatrix<f64>,
    labels: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (r, name) in labels.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..labels.len()).map(|c| fmt_f64(table[(r, c)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
