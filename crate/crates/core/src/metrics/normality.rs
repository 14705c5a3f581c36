//! Shapiro–Wilk normality test and the multivariate standardization check
//! used for asymptotic-normality experiments.
//!
//! The W statistic and its p-value follow Royston's approximation (AS R94),
//! valid for `3 ≤ n ≤ 5000`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest sample accepted by [`normality_diagnostic`].
pub const MIN_DIAGNOSTIC_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro–Wilk W and p-value for a univariate sample.
pub fn shapiro_wilk(sample: ArrayView1<f64>) -> Result<ShapiroWilk> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(Error::validation(format!(
            "Shapiro-Wilk needs 3 <= n <= 5000, got {n}"
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("sample has non-finite values"));
    }
    let mut x: Vec<f64> = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    if !(range > 0.0) {
        return Err(Error::degenerate("sample is constant"));
    }

    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let an = n as f64;
    let half = n / 2;

    // Antisymmetric coefficients: a[i] pairs x[n-1-i] - x[i].
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let m: Vec<f64> = (1..=half)
            .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = x.iter().sum::<f64>() / an;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p_value = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let w1 = (1.0 - w).ln();
        let (y, mean, sd) = if n <= 11 {
            let gamma = poly(&G, an);
            if w1 >= gamma {
                return Ok(ShapiroWilk { w, p_value: 1e-99 });
            }
            (-(gamma - w1).ln(), poly(&C3, an), poly(&C4, an).exp())
        } else {
            let ln_n = an.ln();
            (w1, poly(&C5, ln_n), poly(&C6, ln_n).exp())
        };
        1.0 - Normal::new(mean, sd).expect("positive sd").cdf(y)
    };
    Ok(ShapiroWilk { w, p_value })
}

/// Outcome of [`normality_diagnostic`].
#[derive(Debug, Clone)]
pub struct NormalityReport {
    /// Samples multiplied by `expected_cov^{-1/2}`.
    pub standardized: Array2<f64>,
    /// Sample covariance of the standardized samples (ideally the identity).
    pub standardized_cov: Array2<f64>,
    /// Largest `|diag − 1|` of `standardized_cov`.
    pub max_diag_error: f64,
    /// Largest `|off-diagonal|` of `standardized_cov`.
    pub max_offdiag: f64,
    /// True when some coordinate has zero sample variance; no normality
    /// statistics are computed then.
    pub degenerate: bool,
    /// Shapiro–Wilk per standardized coordinate.
    pub per_coordinate: Vec<Option<ShapiroWilk>>,
}

/// Compare `n` sample vectors (rows of `samples`) with a zero-mean Gaussian of
/// covariance `expected_cov`.
pub fn normality_diagnostic(
    samples: ArrayView2<f64>,
    expected_cov: ArrayView2<f64>,
) -> Result<NormalityReport> {
    let (n, k) = samples.dim();
    if n < MIN_DIAGNOSTIC_SAMPLES {
        return Err(Error::validation(format!(
            "normality diagnostic needs at least {MIN_DIAGNOSTIC_SAMPLES} samples, got {n}"
        )));
    }
    if expected_cov.dim() != (k, k) {
        return Err(Error::dimension(format!(
            "expected covariance is {:?} for {k}-dimensional samples",
            expected_cov.dim()
        )));
    }
    let whiten = linalg::sym_inv_sqrt(expected_cov)?;
    let standardized = samples.dot(&whiten);
    let cov = sample_covariance(standardized.view());

    let degenerate = cov.diag().iter().any(|&v| !(v > 1e-300));
    let mut max_diag_error = 0.0_f64;
    let mut max_offdiag = 0.0_f64;
    for ((i, j), v) in cov.indexed_iter() {
        if i == j {
            max_diag_error = max_diag_error.max((v - 1.0).abs());
        } else {
            max_offdiag = max_offdiag.max(v.abs());
        }
    }
    let per_coordinate = if degenerate {
        vec![None; k]
    } else {
        standardized
            .axis_iter(Axis(1))
            .map(|col| shapiro_wilk(col).ok())
            .collect()
    };
    Ok(NormalityReport {
        standardized,
        standardized_cov: cov,
        max_diag_error,
        max_offdiag,
        degenerate,
        per_coordinate,
    })
}

/// Mean-centered sample covariance (divisor `n − 1`) of the rows.
pub fn sample_covariance(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &mean.insert_axis(Axis(0));
    centered.t().dot(&centered) / (n.max(2) - 1) as f64
}
