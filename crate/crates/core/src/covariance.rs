//! Sample covariance lags, correlograms and price-to-return conversion.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::specpoly::{toeplitz, BlockRow, PseudoPoly};

/// `N × m` observations, one row per time point.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    samples: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(samples: DMatrix<f64>, names: Option<Vec<String>>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::InvalidData("no variables".into()));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % samples.nrows(), pos / samples.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        if let Some(n) = &names {
            if n.len() != samples.ncols() {
                return Err(Error::Dimension(format!(
                    "{} names for {} columns",
                    n.len(),
                    samples.ncols()
                )));
            }
        }
        Ok(Self { samples, names })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Column labels, falling back to `x0, x1, …`.
    pub fn labels(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None => (0..self.m()).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn m(&self) -> usize {
        self.samples.ncols()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            samples: &self.samples * c,
            names: self.names.clone(),
        }
    }

    /// Reads CSV with an optional header row. A first row that does not
    /// parse as numbers is taken as variable names.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut names = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if line == 0 => {
                    names = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
                }
                Err(_) => {
                    let bad = record
                        .iter()
                        .position(|c| c.parse::<f64>().is_err())
                        .unwrap_or(0);
                    return Err(Error::InvalidData(format!(
                        "row {}: cell {} ({:?}) is not a number",
                        line + 1,
                        bad + 1,
                        record.get(bad).unwrap_or("")
                    )));
                }
            }
        }
        let m = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidData("no data rows".into()))?;
        if let Some(r) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidData(format!(
                "data row {} has {} cells, expected {m}",
                r + 1,
                rows[r].len()
            )));
        }
        let samples = DMatrix::from_fn(rows.len(), m, |r, c| rows[r][c]);
        Self::new(samples, names)
    }

    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.labels())?;
        for r in 0..self.n_samples() {
            w.write_record(self.samples.row(r).iter().map(|v| crate::io::fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Covariance lags `R̂₀ … R̂ₙ` together with the sample count behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct CovSequence {
    lags: BlockRow,
    n_samples: usize,
    toeplitz_min_eig: f64,
}

impl CovSequence {
    /// Wraps given lags, checking that `T(R̂) ≻ 0`.
    pub fn new(lags: BlockRow, n_samples: usize) -> Result<Self> {
        let toeplitz_min_eig = min_eigenvalue(&toeplitz(&lags));
        let scale = lags
            .block(0)
            .diagonal()
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if !(toeplitz_min_eig > 1e-12 * scale) {
            return Err(Error::NotPositiveDefinite {
                what: "Toeplitz covariance T(R)",
                min_eig: toeplitz_min_eig,
            });
        }
        Ok(Self {
            lags,
            n_samples,
            toeplitz_min_eig,
        })
    }

    pub fn lags(&self) -> &BlockRow {
        &self.lags
    }

    pub fn m(&self) -> usize {
        self.lags.m()
    }

    pub fn n(&self) -> usize {
        self.lags.n()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Smallest eigenvalue of `T(R̂)`.
    pub fn toeplitz_min_eigenvalue(&self) -> f64 {
        self.toeplitz_min_eig
    }

    /// First `order + 1` lags.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        Self::new(self.lags.truncated(order), self.n_samples)
    }
}

fn centered(data: &DataMatrix, demean: bool) -> DMatrix<f64> {
    let mut x = data.samples().clone();
    if demean {
        let n = x.nrows() as f64;
        for mut col in x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
    }
    x
}

/// Biased lag estimates `R̂ⱼ = (1/N) Σₜ x(t+j) x(t)ᵀ` without a definiteness check.
fn raw_lags(x: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
    let big_n = x.nrows();
    (0..=n)
        .map(|j| {
            let later = x.rows(j, big_n - j);
            let earlier = x.rows(0, big_n - j);
            later.transpose() * earlier / big_n as f64
        })
        .collect()
}

/// Sample covariance lags up to order `n`, optionally after removing the
/// sample mean. Fails when `T(R̂)` is not positive definite.
pub fn estimate_lags(data: &DataMatrix, n: usize, demean: bool) -> Result<CovSequence> {
    if n >= data.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "order {n} must be below the sample count {}",
            data.n_samples()
        )));
    }
    let x = centered(data, demean);
    CovSequence::new(BlockRow::new(raw_lags(&x, n))?, data.n_samples())
}

/// Windowed correlogram `Σ_{|j|≤n} e^{-ijθ} R̂ⱼ`.
pub fn correlogram(cov: &CovSequence) -> PseudoPoly {
    PseudoPoly::new(cov.lags().clone())
}

/// Default Bartlett window length `⌈N^{1/3}⌉`.
pub fn default_bartlett_window(n_samples: usize) -> usize {
    let mut m = 0usize;
    while m.pow(3) < n_samples {
        m += 1;
    }
    m
}

/// Bartlett-smoothed correlogram `Σ_{|j|≤M} (1 − |j|/(M+1)) e^{-ijθ} R̂ⱼ`.
pub fn bartlett_correlogram(data: &DataMatrix, window: usize, demean: bool) -> Result<PseudoPoly> {
    if window >= data.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "Bartlett window {window} must be below the sample count {}",
            data.n_samples()
        )));
    }
    let x = centered(data, demean);
    let blocks = raw_lags(&x, window)
        .into_iter()
        .enumerate()
        .map(|(j, r)| r * (1.0 - j as f64 / (window + 1) as f64))
        .collect();
    Ok(PseudoPoly::new(BlockRow::new(blocks)?))
}

/// Percentage log returns `100 (log pₜ − log pₜ₋₁)`.
pub fn log_returns(prices: &DataMatrix) -> Result<DataMatrix> {
    let p = prices.samples();
    if let Some(pos) = p.iter().position(|v| *v <= 0.0) {
        let (r, c) = (pos % p.nrows(), pos / p.nrows());
        return Err(Error::InvalidData(format!(
            "non-positive price {} at row {r}, column {c}",
            p[(r, c)]
        )));
    }
    let logs = p.map(f64::ln);
    let returns = DMatrix::from_fn(p.nrows() - 1, p.ncols(), |r, c| {
        if p[(r + 1, c)] == p[(r, c)] {
            0.0
        } else {
            100.0 * (logs[(r + 1, c)] - logs[(r, c)])
        }
    });
    if returns.nrows() < 2 {
        return Err(Error::InvalidData(
            "need at least 3 prices for 2 returns".into(),
        ));
    }
    DataMatrix::new(returns, prices.names.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specpoly::{eval, is_psd_on_grid, shift_operator, FreqGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn white(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DataMatrix {
        DataMatrix::new(
            DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng)),
            None,
        )
        .unwrap()
    }

    fn ar1(rng: &mut ChaCha8Rng, n: usize, a: f64) -> DataMatrix {
        let mut x = 0.0;
        for _ in 0..500 {
            x = a * x + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
        let v: Vec<f64> = (0..n)
            .map(|_| {
                x = a * x + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                x
            })
            .collect();
        DataMatrix::new(DMatrix::from_column_slice(n, 1, &v), None).unwrap()
    }

    #[test]
    fn zero_data_is_rejected() {
        let d = DataMatrix::new(DMatrix::zeros(10, 2), None).unwrap();
        assert!(matches!(
            estimate_lags(&d, 1, true),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn white_noise_lags() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = white(&mut rng, 500, 2);
        let cov = estimate_lags(&d, 1, true).unwrap();
        assert!((cov.lags().block(0) - DMatrix::identity(2, 2)).norm() <= 0.3);
        assert!(cov.lags().block(1).norm() <= 0.2);
    }

    #[test]
    fn ar1_lag_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = 0.6;
        let d = ar1(&mut rng, 5000, a);
        let cov = estimate_lags(&d, 1, true).unwrap();
        let ratio = cov.lags().block(1)[(0, 0)] / cov.lags().block(0)[(0, 0)];
        // Standard error of the lag-1 autocorrelation is about sqrt((1-a²)/N).
        assert!((ratio - a).abs() < 4.0 * ((1.0 - a * a) / 5000.0f64).sqrt());
    }

    #[test]
    fn lag_formula_small_case() {
        let d = DataMatrix::new(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]), None).unwrap();
        let cov = estimate_lags(&d, 1, false).unwrap();
        assert!((cov.lags().block(0)[(0, 0)] - 14.0 / 3.0).abs() < 1e-14);
        assert!((cov.lags().block(1)[(0, 0)] - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn correlogram_examples() {
        let cov = CovSequence::new(BlockRow::identity(2, 1), 10).unwrap();
        let p = correlogram(&cov);
        let vals = eval(&p, &FreqGrid::new(8).unwrap());
        for v in vals {
            assert!(
                crate::linalg::cmax_abs(&(v - crate::linalg::to_complex(&DMatrix::identity(2, 2))))
                    < 1e-15
            );
        }

        let lags = BlockRow::new(vec![
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.9),
        ])
        .unwrap();
        let p = PseudoPoly::new(lags);
        for theta in [0.0, 1.0, 2.0, 3.1] {
            assert!((p.value(theta)[(0, 0)].re - (1.0 + 1.8 * f64::cos(theta))).abs() < 1e-14);
        }
        assert!(p.value(std::f64::consts::PI)[(0, 0)].re < 0.0);
    }

    #[test]
    fn correlogram_toeplitz_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = white(&mut rng, 200, 3);
        let cov = estimate_lags(&d, 2, true).unwrap();
        let p = correlogram(&cov);
        let grid = FreqGrid::default();
        let (m, n) = (3, 2);
        let mut acc = crate::linalg::CMatrix::zeros(m * (n + 1), m * (n + 1));
        for k in 0..grid.len() {
            let th = grid.theta(k);
            let d = shift_operator(th, m, n);
            acc += d.adjoint() * p.value(th) * d;
        }
        let acc = acc / nalgebra::Complex::new(grid.len() as f64, 0.0);
        let t = toeplitz(cov.lags());
        assert!((acc.map(|c| c.re) - t).abs().max() < 1e-10);
        assert!(acc.map(|c| c.im).abs().max() < 1e-10);
    }

    #[test]
    fn bartlett_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = white(&mut rng, 300, 3);
        let p0 = bartlett_correlogram(&d, 0, true).unwrap();
        let cov = estimate_lags(&d, 0, true).unwrap();
        assert_eq!(p0.coeff(0), cov.lags().block(0));
        let p = bartlett_correlogram(&d, 10, true).unwrap();
        assert!(is_psd_on_grid(&p, &FreqGrid::default(), 1e-9).psd);
    }

    #[test]
    fn bartlett_tracks_ar1_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = 0.5;
        let n = 5000;
        let d = ar1(&mut rng, n, a);
        let win = default_bartlett_window(n);
        assert_eq!(win, 18);
        let p = bartlett_correlogram(&d, win, true).unwrap();
        let grid = FreqGrid::default();
        for k in 0..grid.len() {
            let th = grid.theta(k);
            let truth = 1.0 / (1.0 - 2.0 * a * th.cos() + a * a);
            let est = p.value(th)[(0, 0)].re;
            assert!(
                (est - truth).abs() <= 0.2 * truth,
                "θ={th}: {est} vs {truth}"
            );
        }
    }

    #[test]
    fn window_length_uses_exact_cube_root() {
        assert_eq!(default_bartlett_window(1000), 10);
        assert_eq!(default_bartlett_window(1001), 11);
        assert_eq!(default_bartlett_window(500), 8);
        assert_eq!(default_bartlett_window(518), 9);
    }

    #[test]
    fn log_return_examples() {
        let p = DataMatrix::new(
            DMatrix::from_column_slice(3, 1, &[1.0, std::f64::consts::E, std::f64::consts::E]),
            None,
        )
        .unwrap();
        let r = log_returns(&p).unwrap();
        assert!((r.samples()[(0, 0)] - 100.0).abs() < 1e-12);
        assert_eq!(r.samples()[(1, 0)], 0.0);

        let flat = DataMatrix::new(DMatrix::from_element(5, 2, 37.5), None).unwrap();
        assert!(log_returns(&flat)
            .unwrap()
            .samples()
            .iter()
            .all(|v| *v == 0.0));

        let bad =
            DataMatrix::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 2.0]), None).unwrap();
        assert!(log_returns(&bad).is_err());
    }

    #[test]
    fn log_returns_round_trip() {
        let p0 = [10.0, 20.0];
        let prices =
            DMatrix::from_row_slice(4, 2, &[10.0, 20.0, 11.0, 19.0, 10.5, 19.5, 12.0, 19.5]);
        let r = log_returns(&DataMatrix::new(prices.clone(), None).unwrap()).unwrap();
        for c in 0..2 {
            let mut acc = p0[c];
            for t in 0..3 {
                acc *= (r.samples()[(t, c)] / 100.0).exp();
                assert!((acc - prices[(t + 1, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_with_and_without_header() {
        let d = DataMatrix::from_csv_reader("a,b\n1,2\n3,4\n5,6\n".as_bytes()).unwrap();
        assert_eq!(d.names().unwrap(), ["a", "b"]);
        assert_eq!(d.samples()[(2, 1)], 6.0);
        let d = DataMatrix::from_csv_reader("1,2\n3,4\n".as_bytes()).unwrap();
        assert!(d.names().is_none());
        assert!(DataMatrix::from_csv_reader("a,b\n1,2\n3,\n".as_bytes()).is_err());
        assert!(DataMatrix::from_csv_reader("a,b\n1,2\n3\n".as_bytes()).is_err());

        let mut buf = Vec::new();
        let d = DataMatrix::from_csv_reader("a,b\n1.5,2\n3,4\n".as_bytes()).unwrap();
        d.write_csv(&mut buf).unwrap();
        let back = DataMatrix::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
