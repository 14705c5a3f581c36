//! The sPCA pipeline: second-order moments, loading estimation, closed-form
//! factor scores, three-term signal reconstruction and ratio-based rank
//! selection.
//!
//! With `P_R = R̂R̂ᵀ/p1` and `P_C = ĈĈᵀ/p2`, the reconstructed signal of an
//! observation `X` is `P_R X + X P_C − P_R X P_C`: everything in `X` that lies
//! in the row-factor space, the column-factor space, or both.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{FactorScores, LoadingPair, MatrixSeries, MomentPair};

/// Observations per accumulation chunk. Fixed so that the reduction tree, and
/// therefore every bit of the moment matrices, does not depend on the number
/// of worker threads.
const MOMENT_CHUNK: usize = 16;

/// Denominator floor of the eigenvalue ratio, relative to the top eigenvalue.
const RATIO_FLOOR: f64 = 1e-12;

/// Relative tolerance under which two eigenvalue ratios count as tied.
const RATIO_TIE_RTOL: f64 = 1e-12;

/// Second-order sample moments
/// `M1 = Σ_t X_t X_tᵀ / (T p1 p2)` and `M2 = Σ_t X_tᵀ X_t / (T p1 p2)`.
///
/// Chunks of consecutive observations are accumulated in ascending `t` and
/// the chunk sums are added in chunk order, so the result is bit-identical
/// for any thread count.
pub fn compute_moments(series: &MatrixSeries) -> Result<MomentPair> {
    let (t_len, p1, p2) = series.dims();
    let data = series.data();

    let partials: Vec<(Array2<f64>, Array2<f64>)> = (0..t_len)
        .step_by(MOMENT_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + MOMENT_CHUNK).min(t_len);
            let mut m1 = Array2::<f64>::zeros((p1, p1));
            let mut m2 = Array2::<f64>::zeros((p2, p2));
            for t in start..end {
                let x = data.index_axis(Axis(0), t);
                ndarray::linalg::general_mat_mul(1.0, &x, &x.t(), 1.0, &mut m1);
                ndarray::linalg::general_mat_mul(1.0, &x.t(), &x, 1.0, &mut m2);
            }
            (m1, m2)
        })
        .collect();

    let mut m1 = Array2::<f64>::zeros((p1, p1));
    let mut m2 = Array2::<f64>::zeros((p2, p2));
    for (a, b) in &partials {
        m1 += a;
        m2 += b;
    }
    let scale = 1.0 / (t_len as f64 * p1 as f64 * p2 as f64);
    m1 *= scale;
    m2 *= scale;
    MomentPair::symmetrized(m1, m2)
}

/// sPCA loadings: `R̂ = √p1 · eig(M1, k1)`, `Ĉ = √p2 · eig(M2, k2)`.
///
/// ```
/// use ndarray::array;
/// use tedfam::{estimator, types::MomentPair};
///
/// let m = MomentPair::new(array![[2.0, 1.0], [1.0, 2.0]], array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
/// let l = estimator::estimate_loadings(&m, 1, 1).unwrap();
/// assert!((l.r[[0, 0]] - 1.0).abs() < 1e-12 && (l.r[[1, 0]] - 1.0).abs() < 1e-12);
/// ```
pub fn estimate_loadings(moments: &MomentPair, k1: usize, k2: usize) -> Result<LoadingPair> {
    Ok(estimate_loadings_with_spectra(moments, k1, k2)?.0)
}

/// Full descending spectra of both moment matrices, clamped at zero.
pub fn moment_spectra(moments: &MomentPair) -> Result<(Array1<f64>, Array1<f64>)> {
    let row = linalg::symmetric_eig(moments.m1())?
        .values
        .mapv(|x| x.max(0.0));
    let col = linalg::symmetric_eig(moments.m2())?
        .values
        .mapv(|x| x.max(0.0));
    Ok((row, col))
}

fn estimate_loadings_with_spectra(
    moments: &MomentPair,
    k1: usize,
    k2: usize,
) -> Result<(LoadingPair, Array1<f64>, Array1<f64>)> {
    let (r, row_spectrum) = scaled_top_eigvecs(moments.m1(), k1, "k1")?;
    let (c, col_spectrum) = scaled_top_eigvecs(moments.m2(), k2, "k2")?;
    let eig_row = row_spectrum.slice(s![..k1]).to_owned();
    let eig_col = col_spectrum.slice(s![..k2]).to_owned();
    let pair = LoadingPair::new(r, c, eig_row, eig_col)?;
    Ok((pair, row_spectrum, col_spectrum))
}

fn scaled_top_eigvecs(
    m: ArrayView2<f64>,
    k: usize,
    name: &str,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let p = m.nrows();
    if k == 0 || k >= p {
        return Err(Error::dimension(format!(
            "{name} = {k} is out of range for p = {p}; need 1 <= {name} < p"
        )));
    }
    let eig = linalg::symmetric_eig(m)?;
    let loading = eig.vectors.slice(s![.., ..k]).to_owned() * (p as f64).sqrt();
    // Round-off can leave the smallest eigenvalues of a Gram sum slightly negative.
    Ok((loading, eig.values.mapv(|x| x.max(0.0))))
}

/// Closed-form factor scores for every observation:
/// `F̂_t = X_t Ĉ / p2`, `Ê_t = X_tᵀ R̂ / p1`, `Ẑ_t = −R̂ᵀ X_t Ĉ / (p1 p2)`.
pub fn estimate_scores(series: &MatrixSeries, loadings: &LoadingPair) -> Result<FactorScores> {
    loadings.check_series(series)?;
    let (t_len, p1, p2) = series.dims();
    let (k1, k2) = (loadings.k1(), loadings.k2());
    let (p1f, p2f) = (p1 as f64, p2 as f64);

    let mut z = Array3::<f64>::zeros((t_len, k1, k2));
    let mut e = Array3::<f64>::zeros((t_len, p2, k1));
    let mut f = Array3::<f64>::zeros((t_len, p1, k2));
    for (t, x) in series.iter().enumerate() {
        let xc = x.dot(&loadings.c);
        z.index_axis_mut(Axis(0), t)
            .assign(&(loadings.r.t().dot(&xc) * (-1.0 / (p1f * p2f))));
        e.index_axis_mut(Axis(0), t)
            .assign(&(x.t().dot(&loadings.r) / p1f));
        f.index_axis_mut(Axis(0), t).assign(&(xc / p2f));
    }
    FactorScores::new(z, e, f)
}

/// Reconstructed signal `Ŝ_t = P_R X_t + X_t P_C − P_R X_t P_C` for every
/// observation.
pub fn reconstruct_signal(series: &MatrixSeries, loadings: &LoadingPair) -> Result<MatrixSeries> {
    loadings.check_series(series)?;
    series.map_obs(|x| signal_of(x, loadings))
}

pub(crate) fn signal_of(x: ArrayView2<f64>, loadings: &LoadingPair) -> Array2<f64> {
    let (p1f, p2f) = (loadings.p1() as f64, loadings.p2() as f64);
    let r = &loadings.r;
    let c = &loadings.c;
    let rtx = r.t().dot(&x); // k1 x p2
    let xc = x.dot(c); // p1 x k2
    let core = rtx.dot(c); // k1 x k2
    let mut out = r.dot(&rtx) / p1f;
    out += &(xc.dot(&c.t()) / p2f);
    out -= &(r.dot(&core).dot(&c.t()) / (p1f * p2f));
    out
}

/// The signal written term by term as
/// `−R̂R̂ᵀ X Ĉ Ĉᵀ/(p1p2) + R̂R̂ᵀ X/p1 + X ĈĈᵀ/p2`, with the full `p × p` outer
/// products formed explicitly. Slower than [`reconstruct_signal`]; kept for
/// cross-checking it.
pub fn reconstruct_signal_expanded(
    series: &MatrixSeries,
    loadings: &LoadingPair,
) -> Result<MatrixSeries> {
    loadings.check_series(series)?;
    let (p1f, p2f) = (loadings.p1() as f64, loadings.p2() as f64);
    let rr = loadings.r.dot(&loadings.r.t());
    let cc = loadings.c.dot(&loadings.c.t());
    series.map_obs(|x| {
        let rrx = rr.dot(&x);
        let global = rrx.dot(&cc) / (p1f * p2f);
        let row = &rrx / p1f;
        let col = x.dot(&cc) / p2f;
        row + col - global
    })
}

/// Options for [`fit_with`].
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Subtract the per-entry temporal mean before estimating.
    pub center: bool,
    /// Compute and store the reconstructed signal.
    pub materialize_signal: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            center: false,
            materialize_signal: true,
        }
    }
}

/// Everything produced by one sPCA fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub loadings: LoadingPair,
    pub scores: FactorScores,
    /// Reconstructed signal of the fitted (possibly centered) series.
    pub signal: Option<MatrixSeries>,
    pub k1: usize,
    pub k2: usize,
    /// Full spectrum of `M1`, descending.
    pub all_eigvals_row: Array1<f64>,
    /// Full spectrum of `M2`, descending.
    pub all_eigvals_col: Array1<f64>,
    /// Temporal mean that was subtracted, when centering was requested.
    pub mean: Option<Array2<f64>>,
}

/// Run the full pipeline with default options (no centering).
///
/// ```
/// use ndarray::array;
/// use tedfam::{estimator, MatrixSeries};
///
/// let x = MatrixSeries::from_blocks(&[array![[1.0, 0.0], [0.0, 0.0]]]).unwrap();
/// let fit = estimator::fit(&x, 1, 1).unwrap();
/// assert!((fit.loadings.r[[0, 0]] - 2f64.sqrt()).abs() < 1e-12);
/// assert!((fit.scores.z[[0, 0, 0]] + 0.5).abs() < 1e-12);
/// let s = fit.signal.unwrap();
/// assert!((&s.obs(0) - &x.obs(0)).iter().all(|d| d.abs() < 1e-12));
/// ```
pub fn fit(series: &MatrixSeries, k1: usize, k2: usize) -> Result<FitResult> {
    fit_with(series, k1, k2, &FitOptions::default())
}

pub fn fit_with(
    series: &MatrixSeries,
    k1: usize,
    k2: usize,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (work, mean) = prepare(series, opts.center);
    let moments = compute_moments(&work)?;
    let (loadings, all_eigvals_row, all_eigvals_col) =
        estimate_loadings_with_spectra(&moments, k1, k2)?;
    let scores = estimate_scores(&work, &loadings)?;
    let signal = if opts.materialize_signal {
        Some(reconstruct_signal(&work, &loadings)?)
    } else {
        None
    };
    Ok(FitResult {
        loadings,
        scores,
        signal,
        k1,
        k2,
        all_eigvals_row,
        all_eigvals_col,
        mean,
    })
}

fn prepare(series: &MatrixSeries, center: bool) -> (MatrixSeries, Option<Array2<f64>>) {
    if center {
        let mean = series
            .data()
            .mean_axis(Axis(0))
            .expect("series has at least one observation");
        (series.centered(), Some(mean))
    } else {
        (series.clone(), None)
    }
}

/// Eigenvalue-ratio rank estimate: the smallest `j ∈ [1, k_max]` maximizing
/// `λ_j / λ_{j+1}`.
///
/// Denominators are floored at `λ_1 · 1e-12`; ratios within a relative
/// `1e-12` of the maximum count as ties.
///
/// ```
/// assert_eq!(tedfam::estimator::estimate_rank(&[10.0, 5.0, 1.0, 0.5], 3).unwrap(), 2);
/// ```
pub fn estimate_rank(spectrum: &[f64], k_max: usize) -> Result<usize> {
    if k_max == 0 || k_max >= spectrum.len() {
        return Err(Error::dimension(format!(
            "k_max = {k_max} needs 1 <= k_max < spectrum length {}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::validation("spectrum must be finite and nonnegative"));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::validation(
            "spectrum must be sorted in descending order",
        ));
    }
    let top = spectrum[0];
    if top == 0.0 {
        return Err(Error::degenerate("all-zero spectrum"));
    }
    let floor = top * RATIO_FLOOR;
    let ratios: Vec<f64> = (0..k_max)
        .map(|j| spectrum[j] / spectrum[j + 1].max(floor))
        .collect();
    let best = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pick = ratios
        .iter()
        .position(|&r| r >= best * (1.0 - RATIO_TIE_RTOL))
        .expect("at least one ratio");
    Ok(pick + 1)
}

/// Default upper bound for rank search on a `p`-dimensional mode:
/// `min(20, ⌊p/2⌋, p − 1)`, never below 1.
pub fn default_k_max(p: usize) -> usize {
    20.min(p / 2).min(p.saturating_sub(1)).max(1)
}

/// Estimate `(k1, k2)` from the moment spectra of a series.
///
/// `None` bounds fall back to [`default_k_max`]. Returns the two ranks and the
/// two full spectra.
pub fn select_ranks(
    series: &MatrixSeries,
    k_max_row: Option<usize>,
    k_max_col: Option<usize>,
    center: bool,
) -> Result<RankSelection> {
    let (work, _) = prepare(series, center);
    let moments = compute_moments(&work)?;
    let (row, col) = moment_spectra(&moments)?;
    let kr = k_max_row.unwrap_or_else(|| default_k_max(work.rows()));
    let kc = k_max_col.unwrap_or_else(|| default_k_max(work.cols()));
    let k1 = estimate_rank(row.as_slice().expect("contiguous"), kr)?;
    let k2 = estimate_rank(col.as_slice().expect("contiguous"), kc)?;
    Ok(RankSelection {
        k1,
        k2,
        spectrum_row: row,
        spectrum_col: col,
    })
}

#[derive(Debug, Clone)]
pub struct RankSelection {
    pub k1: usize,
    pub k2: usize,
    pub spectrum_row: Array1<f64>,
    pub spectrum_col: Array1<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one(x: Array2<f64>) -> MatrixSeries {
        MatrixSeries::from_blocks(&[x]).unwrap()
    }

    fn e1_loadings() -> LoadingPair {
        let s2 = std::f64::consts::SQRT_2;
        LoadingPair::from_matrices(array![[s2], [0.0]], array![[s2], [0.0]]).unwrap()
    }

    #[test]
    fn moments_hand_example() {
        let m = compute_moments(&one(array![[1.0, 0.0], [0.0, 0.0]])).unwrap();
        assert_eq!(m.m1(), array![[0.25, 0.0], [0.0, 0.0]]);
        assert_eq!(m.m2(), array![[0.25, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn moments_zero_and_duplicated() {
        let m = compute_moments(&one(Array2::zeros((3, 4)))).unwrap();
        assert!(m.m1().iter().all(|&x| x == 0.0) && m.m2().iter().all(|&x| x == 0.0));
        assert_eq!(m.m1().dim(), (3, 3));
        assert_eq!(m.m2().dim(), (4, 4));

        let x = array![[1.0, 0.0], [0.0, 0.0]];
        let twice = MatrixSeries::from_blocks(&[x.clone(), x.clone()]).unwrap();
        assert_eq!(
            compute_moments(&twice).unwrap(),
            compute_moments(&one(x)).unwrap()
        );
    }

    #[test]
    fn loadings_hand_examples() {
        let s2 = std::f64::consts::SQRT_2;
        let m = MomentPair::new(
            array![[0.25, 0.0], [0.0, 0.0]],
            array![[0.25, 0.0], [0.0, 0.0]],
        )
        .unwrap();
        let l = estimate_loadings(&m, 1, 1).unwrap();
        assert!((l.r[[0, 0]] - s2).abs() < 1e-15 && l.r[[1, 0]] == 0.0);
        assert_eq!(l.eigvals_row, array![0.25]);

        let d = MomentPair::new(
            array![[4.0, 0.0], [0.0, 1.0]],
            array![[4.0, 0.0], [0.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            estimate_loadings(&d, 2, 1),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            estimate_loadings(&d, 1, 0),
            Err(Error::Dimension(_))
        ));

        let c = MomentPair::new(
            array![[2.0, 1.0], [1.0, 2.0]],
            array![[2.0, 1.0], [1.0, 2.0]],
        )
        .unwrap();
        let l = estimate_loadings(&c, 1, 1).unwrap();
        assert!((l.r[[0, 0]] - 1.0).abs() < 1e-14 && (l.r[[1, 0]] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scores_hand_examples() {
        let h = std::f64::consts::SQRT_2 / 2.0;
        let l = e1_loadings();

        let s = estimate_scores(&one(array![[1.0, 0.0], [0.0, 0.0]]), &l).unwrap();
        assert!((s.z[[0, 0, 0]] + 0.5).abs() < 1e-15);
        assert!((s.f[[0, 0, 0]] - h).abs() < 1e-15 && s.f[[0, 1, 0]] == 0.0);
        assert!((s.e[[0, 0, 0]] - h).abs() < 1e-15 && s.e[[0, 1, 0]] == 0.0);

        let s = estimate_scores(&one(array![[0.0, 1.0], [1.0, 0.0]]), &l).unwrap();
        assert_eq!(s.z[[0, 0, 0]], 0.0);
        assert!(s.f[[0, 0, 0]] == 0.0 && (s.f[[0, 1, 0]] - h).abs() < 1e-15);
        assert!(s.e[[0, 0, 0]] == 0.0 && (s.e[[0, 1, 0]] - h).abs() < 1e-15);

        let s = estimate_scores(&one(Array2::zeros((2, 2))), &l).unwrap();
        assert!(s
            .z
            .iter()
            .chain(s.e.iter())
            .chain(s.f.iter())
            .all(|&x| x == 0.0));
    }

    #[test]
    fn signal_hand_examples() {
        let l = e1_loadings();
        for x in [
            array![[1.0, 0.0], [0.0, 0.0]],
            array![[0.0, 1.0], [1.0, 0.0]],
            Array2::zeros((2, 2)),
        ] {
            let s = reconstruct_signal(&one(x.clone()), &l).unwrap();
            assert!((&s.obs(0) - &x).iter().all(|d| d.abs() < 1e-15), "{x}");
            let lit = reconstruct_signal_expanded(&one(x.clone()), &l).unwrap();
            assert!((&lit.obs(0) - &x).iter().all(|d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn mismatched_loadings_rejected() {
        let l = e1_loadings();
        let x = one(Array2::zeros((3, 2)));
        assert!(matches!(estimate_scores(&x, &l), Err(Error::Validation(_))));
        assert!(matches!(
            reconstruct_signal(&x, &l),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(estimate_rank(&[10.0, 5.0, 1.0, 0.5], 3).unwrap(), 2);
        let geo: Vec<f64> = (0..8).map(|i| 3.0 * 0.7f64.powi(i)).collect();
        assert_eq!(estimate_rank(&geo, 6).unwrap(), 1);
        assert_eq!(
            estimate_rank(&[9.0, 3.0, 1.0, 0.0, 0.0, 0.0], 3).unwrap(),
            3
        );
    }

    #[test]
    fn rank_errors() {
        assert!(matches!(
            estimate_rank(&[3.0, 2.0, 1.0], 3),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            estimate_rank(&[3.0, 2.0, 1.0], 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            estimate_rank(&[0.0, 0.0, 0.0], 2),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            estimate_rank(&[1.0, 2.0, 0.0], 2),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn default_bounds() {
        assert_eq!(default_k_max(2), 1);
        assert_eq!(default_k_max(10), 5);
        assert_eq!(default_k_max(100), 20);
    }

    #[test]
    fn centering_is_recorded() {
        let x = MatrixSeries::from_blocks(&[
            array![[1.0, 2.0], [3.0, 5.0]],
            array![[3.0, 2.0], [1.0, 1.0]],
            array![[2.0, 5.0], [2.0, 0.0]],
        ])
        .unwrap();
        let opts = FitOptions {
            center: true,
            ..FitOptions::default()
        };
        let fit = fit_with(&x, 1, 1, &opts).unwrap();
        assert_eq!(fit.mean.unwrap(), array![[2.0, 3.0], [2.0, 2.0]]);
        let plain = super::fit(&x, 1, 1).unwrap();
        assert!(plain.mean.is_none());
    }
}
