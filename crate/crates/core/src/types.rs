//! Domain types shared by every module.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `(1/p)·LᵀL = I` for loading matrices.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// `T` observations of `p1 × p2` real matrices stored contiguously,
/// row-major within each block.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    data: Array3<f64>,
}

impl MatrixSeries {
    /// Wrap a `(T, p1, p2)` array. Requires `T ≥ 1`, `p1, p2 ≥ 2` and finite
    /// values.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (t, p1, p2) = data.dim();
        if t == 0 {
            return Err(Error::validation("matrix series has no observations"));
        }
        if p1 < 2 || p2 < 2 {
            return Err(Error::validation(format!(
                "observations must be at least 2x2, got {p1}x{p2}"
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let block = pos / (p1 * p2);
            return Err(Error::validation(format!(
                "non-finite value in observation {block}"
            )));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data })
    }

    pub fn from_blocks(blocks: &[Array2<f64>]) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::validation("matrix series has no observations"))?;
        let (p1, p2) = first.dim();
        let mut data = Array3::zeros((blocks.len(), p1, p2));
        for (t, b) in blocks.iter().enumerate() {
            if b.dim() != (p1, p2) {
                return Err(Error::validation(format!(
                    "observation {t} is {}x{}, expected {p1}x{p2}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            data.index_axis_mut(Axis(0), t).assign(b);
        }
        Self::new(data)
    }

    pub fn num_obs(&self) -> usize {
        self.data.dim().0
    }

    pub fn rows(&self) -> usize {
        self.data.dim().1
    }

    pub fn cols(&self) -> usize {
        self.data.dim().2
    }

    /// `(T, p1, p2)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn obs(&self, t: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), t)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = ArrayView2<'_, f64>> {
        self.data.axis_iter(Axis(0))
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    /// Contiguous row-major values, block after block.
    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("series storage is kept in standard layout")
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.data * c)
    }

    /// Subtract the per-entry mean over `t`.
    pub fn centered(&self) -> Self {
        let mean = self
            .data
            .mean_axis(Axis(0))
            .expect("series has at least one observation");
        Self {
            data: &self.data - &mean.insert_axis(Axis(0)),
        }
    }

    /// Apply `f` to every observation, producing a series of the same length.
    pub fn map_obs<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(ArrayView2<f64>) -> Array2<f64>,
    {
        let blocks: Vec<Array2<f64>> = self.iter().map(f).collect();
        Self::from_blocks(&blocks)
    }

    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::validation(format!(
                "series shapes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// Estimated (or true) loading matrices `R` (`p1 × k1`) and `C` (`p2 × k2`),
/// each normalized so that `(1/p)·LᵀL = I`.
///
/// `eigvals_row` / `eigvals_col` hold the retained eigenvalues of the moment
/// matrices when the loadings come from an eigendecomposition, and are empty
/// otherwise (for example, simulated ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingPair {
    pub r: Array2<f64>,
    pub c: Array2<f64>,
    pub eigvals_row: Array1<f64>,
    pub eigvals_col: Array1<f64>,
}

impl LoadingPair {
    pub fn new(
        r: Array2<f64>,
        c: Array2<f64>,
        eigvals_row: Array1<f64>,
        eigvals_col: Array1<f64>,
    ) -> Result<Self> {
        check_loading("R", r.view())?;
        check_loading("C", c.view())?;
        check_eigvals("row", &eigvals_row, r.ncols())?;
        check_eigvals("column", &eigvals_col, c.ncols())?;
        Ok(Self {
            r,
            c,
            eigvals_row,
            eigvals_col,
        })
    }

    /// Loadings without eigenvalue information.
    pub fn from_matrices(r: Array2<f64>, c: Array2<f64>) -> Result<Self> {
        Self::new(r, c, Array1::zeros(0), Array1::zeros(0))
    }

    pub fn p1(&self) -> usize {
        self.r.nrows()
    }

    pub fn p2(&self) -> usize {
        self.c.nrows()
    }

    pub fn k1(&self) -> usize {
        self.r.ncols()
    }

    pub fn k2(&self) -> usize {
        self.c.ncols()
    }

    /// `R Rᵀ / p1`, the orthogonal projector onto the row-factor space.
    pub fn row_projector(&self) -> Array2<f64> {
        self.r.dot(&self.r.t()) / self.p1() as f64
    }

    /// `C Cᵀ / p2`.
    pub fn col_projector(&self) -> Array2<f64> {
        self.c.dot(&self.c.t()) / self.p2() as f64
    }

    pub(crate) fn check_series(&self, series: &MatrixSeries) -> Result<()> {
        if series.rows() != self.p1() || series.cols() != self.p2() {
            return Err(Error::validation(format!(
                "loadings are for {}x{} observations but the series holds {}x{}",
                self.p1(),
                self.p2(),
                series.rows(),
                series.cols()
            )));
        }
        Ok(())
    }
}

fn check_loading(name: &str, l: ArrayView2<f64>) -> Result<()> {
    let (p, k) = l.dim();
    if k == 0 || k >= p {
        return Err(Error::dimension(format!(
            "loading {name} is {p}x{k}; need 1 <= k < p"
        )));
    }
    if l.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(format!(
            "loading {name} has non-finite entries"
        )));
    }
    let gram = l.t().dot(&l) / p as f64;
    for ((i, j), g) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        if (g - target).abs() > ORTHONORMALITY_TOL {
            return Err(Error::validation(format!(
                "loading {name} violates (1/p)·LᵀL = I at ({i},{j}): {g}"
            )));
        }
    }
    Ok(())
}

fn check_eigvals(which: &str, vals: &Array1<f64>, k: usize) -> Result<()> {
    if vals.is_empty() {
        return Ok(());
    }
    if vals.len() != k {
        return Err(Error::dimension(format!(
            "{} {which} eigenvalues for {k} factors",
            vals.len()
        )));
    }
    if vals.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::validation(format!(
            "{which} eigenvalues must be nonnegative"
        )));
    }
    if vals.windows(2).into_iter().any(|w| w[0] < w[1]) {
        return Err(Error::validation(format!(
            "{which} eigenvalues must be descending"
        )));
    }
    Ok(())
}

/// Per-observation factor scores: `Z_t` (`k1 × k2`), `E_t` (`p2 × k1`),
/// `F_t` (`p1 × k2`), each stacked along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorScores {
    pub z: Array3<f64>,
    pub e: Array3<f64>,
    pub f: Array3<f64>,
}

impl FactorScores {
    pub fn new(z: Array3<f64>, e: Array3<f64>, f: Array3<f64>) -> Result<Self> {
        let t = z.dim().0;
        if e.dim().0 != t || f.dim().0 != t {
            return Err(Error::validation(format!(
                "score block counts differ: Z {t}, E {}, F {}",
                e.dim().0,
                f.dim().0
            )));
        }
        if z.iter()
            .chain(e.iter())
            .chain(f.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::validation("factor scores contain non-finite values"));
        }
        Ok(Self { z, e, f })
    }

    pub fn num_obs(&self) -> usize {
        self.z.dim().0
    }

    pub fn z(&self, t: usize) -> ArrayView2<'_, f64> {
        self.z.index_axis(Axis(0), t)
    }

    pub fn e(&self, t: usize) -> ArrayView2<'_, f64> {
        self.e.index_axis(Axis(0), t)
    }

    pub fn f(&self, t: usize) -> ArrayView2<'_, f64> {
        self.f.index_axis(Axis(0), t)
    }
}

/// Second-order sample moments `M1` (`p1 × p1`) and `M2` (`p2 × p2`).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    m1: Array2<f64>,
    m2: Array2<f64>,
}

impl MomentPair {
    /// Symmetrize both matrices and check positive semidefiniteness
    /// (smallest eigenvalue ≥ `-1e-10` × largest).
    pub fn new(m1: Array2<f64>, m2: Array2<f64>) -> Result<Self> {
        let pair = Self::symmetrized(m1, m2)?;
        for (name, m) in [("M1", &pair.m1), ("M2", &pair.m2)] {
            let eig = linalg::symmetric_eig(m.view())?;
            let top = eig.values[0];
            let low = eig.values[eig.values.len() - 1];
            if low < -1e-10 * top.abs() {
                return Err(Error::validation(format!(
                    "{name} is not positive semidefinite (eigenvalues span [{low:e}, {top:e}])"
                )));
            }
        }
        Ok(pair)
    }

    /// Symmetrize without the semidefiniteness check; for matrices that are
    /// sums of Gram matrices by construction.
    pub(crate) fn symmetrized(m1: Array2<f64>, m2: Array2<f64>) -> Result<Self> {
        for (name, m) in [("M1", &m1), ("M2", &m2)] {
            if m.nrows() != m.ncols() {
                return Err(Error::validation(format!("{name} is not square")));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self {
            m1: linalg::symmetrize(m1.view()),
            m2: linalg::symmetrize(m2.view()),
        })
    }

    pub fn m1(&self) -> ArrayView2<'_, f64> {
        self.m1.view()
    }

    pub fn m2(&self) -> ArrayView2<'_, f64> {
        self.m2.view()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn series_rejects_bad_shapes_and_values() {
        assert!(MatrixSeries::new(Array3::zeros((0, 2, 2))).is_err());
        assert!(MatrixSeries::new(Array3::zeros((3, 1, 2))).is_err());
        let mut d = Array3::zeros((2, 2, 2));
        d[[1, 0, 1]] = f64::NAN;
        let err = MatrixSeries::new(d).unwrap_err();
        assert!(err.to_string().contains("observation 1"));
    }

    #[test]
    fn centering_removes_temporal_mean() {
        let s = MatrixSeries::from_blocks(&[
            array![[1.0, 2.0], [3.0, 4.0]],
            array![[3.0, 2.0], [1.0, 0.0]],
        ])
        .unwrap();
        let c = s.centered();
        assert_eq!(c.obs(0), array![[-1.0, 0.0], [1.0, 2.0]]);
        assert_eq!(c.obs(1), array![[1.0, 0.0], [-1.0, -2.0]]);
    }

    #[test]
    fn loading_checks() {
        let s2 = std::f64::consts::SQRT_2;
        let ok = LoadingPair::from_matrices(array![[s2], [0.0]], array![[s2], [0.0]]);
        assert!(ok.is_ok());
        // k == p
        let sq = LoadingPair::from_matrices(Array2::eye(2), array![[s2], [0.0]]);
        assert!(matches!(sq, Err(Error::Dimension(_))));
        // not scaled by sqrt(p)
        let bad = LoadingPair::from_matrices(array![[1.0], [0.0]], array![[s2], [0.0]]);
        assert!(matches!(bad, Err(Error::Validation(_))));
        // ascending eigenvalues
        let r = array![[s2, 0.0], [0.0, s2], [0.0, 0.0]] * (1.5f64).sqrt();
        let asc = LoadingPair::new(r, array![[s2], [0.0]], array![1.0, 2.0], array![1.0]);
        assert!(asc.is_err());
    }

    #[test]
    fn moments_must_be_psd() {
        let m2 = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(MomentPair::new(array![[1.0, 0.0], [0.0, -1.0]], m2.clone()).is_err());
        let m = MomentPair::new(array![[1.0, 0.5], [0.5, 1.0]], m2).unwrap();
        assert_eq!(m.m1(), m.m1().t());
    }
}
