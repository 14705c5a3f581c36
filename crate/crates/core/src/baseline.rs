//! Bilinear reconstruction `R̂ Z̃_t Ĉᵀ` on the same sPCA loadings.
//!
//! The bilinear signal keeps only the part of `X_t` lying in both factor
//! spaces at once, `P_R X_t P_C`, which is itself the cross-projection of the
//! three-term signal. Since both reconstructions are orthogonal projections of
//! `X_t` onto nested subspaces, the three-term residual can never be larger.

use ndarray::{Array2, Array3, Axis};

use crate::error::Result;
use crate::types::{LoadingPair, MatrixSeries};

/// Bilinear scores and signal computed on shared loadings.
#[derive(Debug, Clone)]
pub struct BilinearFit {
    pub loadings: LoadingPair,
    /// `Z̃_t`, stacked `(T, k1, k2)`.
    pub z_tilde: Array3<f64>,
    pub signal: MatrixSeries,
}

/// `Z̃_t = R̂ᵀ X_t Ĉ / (p1 p2)` for every observation.
pub fn bilinear_scores(series: &MatrixSeries, loadings: &LoadingPair) -> Result<Array3<f64>> {
    loadings.check_series(series)?;
    let scale = 1.0 / (loadings.p1() as f64 * loadings.p2() as f64);
    let mut out = Array3::zeros((series.num_obs(), loadings.k1(), loadings.k2()));
    for (t, x) in series.iter().enumerate() {
        let z = loadings.r.t().dot(&x.dot(&loadings.c)) * scale;
        out.index_axis_mut(Axis(0), t).assign(&z);
    }
    Ok(out)
}

/// `S̃_t = R̂R̂ᵀ X_t ĈĈᵀ / (p1 p2)`.
pub fn bilinear_signal(series: &MatrixSeries, loadings: &LoadingPair) -> Result<MatrixSeries> {
    loadings.check_series(series)?;
    let scale = 1.0 / (loadings.p1() as f64 * loadings.p2() as f64);
    series.map_obs(|x| {
        let core: Array2<f64> = loadings.r.t().dot(&x).dot(&loadings.c);
        loadings.r.dot(&core).dot(&loadings.c.t()) * scale
    })
}

pub fn bilinear_fit(series: &MatrixSeries, loadings: &LoadingPair) -> Result<BilinearFit> {
    Ok(BilinearFit {
        loadings: loadings.clone(),
        z_tilde: bilinear_scores(series, loadings)?,
        signal: bilinear_signal(series, loadings)?,
    })
}
