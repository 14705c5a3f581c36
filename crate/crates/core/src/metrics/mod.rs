//! Evaluation measurements: subspace distance, RMSE, PSNR, Procrustes
//! alignment, correlation-pattern distances, separability of covariance,
//! normality diagnostics and varimax rotation.

mod normality;
mod varimax;

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{LoadingPair, MatrixSeries};

pub use normality::{
    normality_diagnostic, sample_covariance, shapiro_wilk, NormalityReport, ShapiroWilk,
    MIN_DIAGNOSTIC_SAMPLES,
};
pub use varimax::{varimax, varimax_criterion, varimax_with, VarimaxOptions, VarimaxResult};

/// Orthonormal basis of the column space of a full-column-rank matrix.
fn orthonormal_basis(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let gram = linalg::symmetrize(a.t().dot(&a).view());
    let w = linalg::sym_inv_sqrt(gram.view())
        .map_err(|_| Error::numerical("matrix is not of full column rank"))?;
    Ok(a.dot(&w))
}

/// `‖A(AᵀA)⁻¹Aᵀ − B(BᵀB)⁻¹Bᵀ‖₂`: spectral distance between the column-space
/// projectors. Lies in `[0, 1]` and is invariant to any invertible
/// recombination of the columns.
///
/// ```
/// use ndarray::array;
/// let d = tedfam::metrics::space_distance(array![[1.0], [0.0]].view(), array![[0.0], [1.0]].view()).unwrap();
/// assert!((d - 1.0).abs() < 1e-12);
/// ```
pub fn space_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::dimension(format!(
            "space distance between {}-row and {}-row matrices",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_basis(a)?;
    let qb = orthonormal_basis(b)?;
    let diff = qa.dot(&qa.t()) - qb.dot(&qb.t());
    linalg::spectral_norm_sym(linalg::symmetrize(diff.view()).view())
}

/// `√( Σ_t ‖Â_t − A_t‖_F² / (T p1 p2) )`.
///
/// With the true signal as `truth` this is the signal RMSE; with the
/// observations it is the reconstruction RMSE.
pub fn rmse_signal(estimated: &MatrixSeries, truth: &MatrixSeries) -> Result<f64> {
    estimated.same_shape(truth)?;
    let n = estimated.as_slice().len() as f64;
    let ss: f64 = estimated
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / n).sqrt())
}

/// Mean squared entry difference of two equally shaped matrices.
pub fn mse(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(Error::validation(format!(
            "shapes differ: {:?} vs {:?}",
            x.dim(),
            x_hat.dim()
        )));
    }
    let n = x.len() as f64;
    Ok(x.iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// A PSNR value; exact reconstructions have infinite PSNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn value(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

/// `10 log10( max|x|² / MSE(x, x̂) )`.
///
/// ```
/// use ndarray::array;
/// use tedfam::metrics::{psnr, Psnr};
/// let x = array![[1.0, 0.0], [0.0, 0.0]];
/// let Psnr::Finite(v) = psnr(x.view(), ndarray::Array2::zeros((2, 2)).view()).unwrap() else { panic!() };
/// assert!((v - 6.0206).abs() < 1e-3);
/// assert_eq!(psnr(x.view(), x.view()).unwrap(), Psnr::Infinite);
/// ```
pub fn psnr(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<Psnr> {
    let err = mse(x, x_hat)?;
    let peak = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::degenerate(
            "PSNR peak is undefined for an all-zero matrix",
        ));
    }
    if err == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(10.0 * (peak * peak / err).log10()))
}

/// Per-observation PSNR of a reconstruction against the observations.
pub fn psnr_series(
    observations: &MatrixSeries,
    reconstruction: &MatrixSeries,
) -> Result<Vec<Psnr>> {
    observations.same_shape(reconstruction)?;
    observations
        .iter()
        .zip(reconstruction.iter())
        .map(|(x, s)| psnr(x, s))
        .collect()
}

/// Mean of per-observation PSNRs; infinite if any term is.
pub fn mean_psnr(values: &[Psnr]) -> Psnr {
    if values.iter().any(|v| v.is_infinite()) {
        return Psnr::Infinite;
    }
    Psnr::Finite(values.iter().map(|v| v.value()).sum::<f64>() / values.len() as f64)
}

/// Orthogonal `H` minimizing `‖estimate − truth·H‖_F`: the polar factor of
/// `truthᵀ·estimate / p`.
pub fn procrustes_align(estimate: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<Array2<f64>> {
    if estimate.dim() != truth.dim() {
        return Err(Error::dimension(format!(
            "Procrustes between {:?} and {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let cross = truth.t().dot(&estimate) / estimate.nrows() as f64;
    linalg::polar_factor(cross.view())
}

/// Which sample correlation matrix [`correlation_matrix`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMode {
    /// `p1 × p1`: rows as variables, pooled over `t` and columns.
    Row,
    /// `p2 × p2`: columns as variables, pooled over `t` and rows.
    Column,
    /// `p1p2 × p1p2`: entries of `vec(X_t)` (column-major) as variables over `t`.
    Vectorized,
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(CorrelationMode::Row),
            "column" | "col" => Ok(CorrelationMode::Column),
            "vectorized" | "vec" => Ok(CorrelationMode::Vectorized),
            other => Err(Error::validation(format!(
                "unknown correlation mode '{other}'"
            ))),
        }
    }
}

/// Sample correlation matrix of a series in the given mode.
pub fn correlation_matrix(series: &MatrixSeries, mode: CorrelationMode) -> Result<Array2<f64>> {
    let (t_len, p1, p2) = series.dims();
    if t_len < 2 {
        return Err(Error::validation(
            "correlation needs at least 2 observations",
        ));
    }
    // Rows of `vars` are variables, columns are their paired observations.
    let (vars, label): (Array2<f64>, fn(usize, usize) -> String) = match mode {
        CorrelationMode::Row => {
            let mut v = Array2::zeros((p1, t_len * p2));
            for (t, x) in series.iter().enumerate() {
                v.slice_mut(ndarray::s![.., t * p2..(t + 1) * p2])
                    .assign(&x);
            }
            (v, |i, _| format!("row {i}"))
        }
        CorrelationMode::Column => {
            let mut v = Array2::zeros((p2, t_len * p1));
            for (t, x) in series.iter().enumerate() {
                v.slice_mut(ndarray::s![.., t * p1..(t + 1) * p1])
                    .assign(&x.t());
            }
            (v, |j, _| format!("column {j}"))
        }
        CorrelationMode::Vectorized => {
            let mut v = Array2::zeros((p1 * p2, t_len));
            for (t, x) in series.iter().enumerate() {
                for j in 0..p2 {
                    for i in 0..p1 {
                        v[[j * p1 + i, t]] = x[[i, j]];
                    }
                }
            }
            (v, |idx, p1| format!("entry ({}, {})", idx % p1, idx / p1))
        }
    };
    let mean = vars.mean_axis(Axis(1)).expect("non-empty");
    let centered = &vars - &mean.insert_axis(Axis(1));
    let cov = centered.dot(&centered.t());
    let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    let scale = cov.diag().iter().fold(0.0_f64, |a, v| a.max(*v));
    for (i, &v) in cov.diag().iter().enumerate() {
        if !(v > 1e-28 * scale) {
            return Err(Error::degenerate(format!(
                "zero variance in {}",
                label(i, p1)
            )));
        }
    }
    Ok(Array2::from_shape_fn(cov.dim(), |(i, j)| {
        if i == j {
            1.0
        } else {
            cov[[i, j]] / (sd[i] * sd[j])
        }
    }))
}

/// Frobenius norm of the difference between the correlation matrices of two
/// series.
pub fn correlation_distance(
    a: &MatrixSeries,
    b: &MatrixSeries,
    mode: CorrelationMode,
) -> Result<f64> {
    a.same_shape(b)?;
    let ca = correlation_matrix(a, mode)?;
    let cb = correlation_matrix(b, mode)?;
    Ok(linalg::frobenius_norm((&ca - &cb).view()))
}

/// Sample covariance of `vec(X_t)` (column-major), `p1p2 × p1p2`.
pub fn vec_covariance(series: &MatrixSeries) -> Array2<f64> {
    let (t_len, p1, p2) = series.dims();
    let mut rows = Array2::zeros((t_len, p1 * p2));
    for (t, x) in series.iter().enumerate() {
        for j in 0..p2 {
            for i in 0..p1 {
                rows[[t, j * p1 + i]] = x[[i, j]];
            }
        }
    }
    sample_covariance(rows.view())
}

/// Share of `‖Σ‖_F²` captured by the nearest Kronecker product `B ⊗ A`
/// (`B` is `p2 × p2`, `A` is `p1 × p1`) to a covariance of column-major
/// `vec(X)`.
///
/// Uses the rearrangement under which `B ⊗ A` becomes the rank-one matrix
/// `vec(B) vec(A)ᵀ`; the share is the top squared singular value over the
/// total squared Frobenius norm.
pub fn kronecker_fraction(cov: ArrayView2<f64>, p1: usize, p2: usize) -> Result<f64> {
    let n = p1 * p2;
    if cov.dim() != (n, n) {
        return Err(Error::dimension(format!(
            "covariance is {:?}, expected {n}x{n}",
            cov.dim()
        )));
    }
    let mut re = Array2::<f64>::zeros((p2 * p2, p1 * p1));
    for j1 in 0..p2 {
        for j2 in 0..p2 {
            for i1 in 0..p1 {
                for i2 in 0..p1 {
                    re[[j1 * p2 + j2, i1 * p1 + i2]] = cov[[j1 * p1 + i1, j2 * p1 + i2]];
                }
            }
        }
    }
    let total = linalg::frobenius_norm_sq(cov);
    if total == 0.0 {
        return Err(Error::degenerate("zero covariance"));
    }
    let gram = linalg::symmetrize(re.t().dot(&re).view());
    let (top, _) = linalg::symmetric_eig_descending(gram.view(), 1)?;
    Ok(top[0] / total)
}

/// Named metric values for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    /// In insertion order.
    pub metrics: Vec<(String, f64)>,
    pub per_observation_psnr: Vec<Psnr>,
}

impl EvalReport {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            k1: None,
            k2: None,
            metrics: Vec::new(),
            per_observation_psnr: Vec::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.metrics.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.metrics.push((name.to_string(), value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Inputs for [`evaluate`]; optional pieces enable the corresponding metrics.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub observations: &'a MatrixSeries,
    pub signal: &'a MatrixSeries,
    pub truth_signal: Option<&'a MatrixSeries>,
    pub loadings: Option<&'a LoadingPair>,
    pub truth_loadings: Option<&'a LoadingPair>,
}

/// Which groups of metrics [`evaluate`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub distance: bool,
    pub rmse_signal: bool,
    pub rmse_x: bool,
    pub psnr: bool,
    pub correlation: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self {
            distance: true,
            rmse_signal: true,
            rmse_x: true,
            psnr: true,
            correlation: false,
        }
    }
}

/// Compute every requested metric that the inputs allow.
///
/// Metric names: `dist_R`, `dist_C`, `rmse_signal`, `rmse_x`, `psnr_mean`,
/// `corr_row`, `corr_col`, `corr_vec`. Correlation distances compare the
/// signal with the observations.
pub fn evaluate(method: &str, inputs: EvalInputs<'_>, which: MetricSet) -> Result<EvalReport> {
    let mut report = EvalReport::new(method);
    if let Some(l) = inputs.loadings {
        report.k1 = Some(l.k1());
        report.k2 = Some(l.k2());
    }
    if which.distance {
        if let (Some(est), Some(truth)) = (inputs.loadings, inputs.truth_loadings) {
            report.set("dist_R", space_distance(est.r.view(), truth.r.view())?);
            report.set("dist_C", space_distance(est.c.view(), truth.c.view())?);
        }
    }
    if which.rmse_signal {
        if let Some(truth) = inputs.truth_signal {
            report.set("rmse_signal", rmse_signal(inputs.signal, truth)?);
        }
    }
    if which.rmse_x {
        report.set("rmse_x", rmse_signal(inputs.signal, inputs.observations)?);
    }
    if which.psnr {
        let per = psnr_series(inputs.observations, inputs.signal)?;
        report.set("psnr_mean", mean_psnr(&per).value());
        report.per_observation_psnr = per;
    }
    if which.correlation {
        for (name, mode) in [
            ("corr_row", CorrelationMode::Row),
            ("corr_col", CorrelationMode::Column),
            ("corr_vec", CorrelationMode::Vectorized),
        ] {
            report.set(
                name,
                correlation_distance(inputs.signal, inputs.observations, mode)?,
            );
        }
    }
    Ok(report)
}
