//! Dense symmetric eigensolver and the small matrix utilities built on it.
//!
//! The eigensolver is the classical two-stage method: Householder reduction to
//! tridiagonal form followed by the implicit QL algorithm with Wilkinson-style
//! shifts. Everything else in this module (square roots, polar factors, thin
//! singular vectors, spectral norms) is expressed through it.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Maximum QL iterations spent on any single eigenvalue.
pub const QL_ITERATION_CAP: usize = 64;

/// Relative magnitude within which column entries count as tied for the sign
/// convention.
const SIGN_TIE_RTOL: f64 = 1e-12;

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Array2<f64>,
}

/// Top-`k` eigenpairs of a symmetric matrix.
///
/// Eigenvalues are returned in descending order together with unit-norm,
/// mutually orthogonal eigenvectors (as columns). Every column is sign-fixed
/// so that its largest-magnitude entry is positive; see [`fix_column_signs`].
///
/// ```
/// use ndarray::array;
/// let m = array![[2.0, 1.0], [1.0, 2.0]];
/// let (vals, vecs) = tedfam::linalg::symmetric_eig_descending(m.view(), 2).unwrap();
/// assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
/// let h = std::f64::consts::FRAC_1_SQRT_2;
/// assert!((vecs[[0, 1]] - h).abs() < 1e-12 && (vecs[[1, 1]] + h).abs() < 1e-12);
/// ```
pub fn symmetric_eig_descending(
    m: ArrayView2<f64>,
    k: usize,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let p = m.nrows();
    if k == 0 || k > p {
        return Err(Error::dimension(format!(
            "requested {k} eigenpairs of a {p}x{p} matrix"
        )));
    }
    let eig = symmetric_eig(m)?;
    let values = eig.values.slice(ndarray::s![..k]).to_owned();
    let vectors = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    Ok((values, vectors))
}

/// Full eigendecomposition, descending, sign-fixed.
pub fn symmetric_eig(m: ArrayView2<f64>) -> Result<SymmetricEigen> {
    check_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::dimension("empty matrix"));
    }

    // Row-major working copy; v[i * n + j].
    let mut v: Vec<f64> = m.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;

    // Descending order; stable so equal eigenvalues keep solver order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));

    let values = Array1::from_iter(order.iter().map(|&j| d[j]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[[i, dst]] = v[i * n + src];
        }
    }
    fix_column_signs(&mut vectors);
    Ok(SymmetricEigen { values, vectors })
}

fn check_symmetric(m: ArrayView2<f64>) -> Result<()> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::validation(format!("matrix is {r}x{c}, not square")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("matrix has non-finite entries"));
    }
    let scale = m.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    for i in 0..r {
        for j in (i + 1)..r {
            let gap = (m[[i, j]] - m[[j, i]]).abs();
            if gap > 1e-12 * scale {
                return Err(Error::validation(format!(
                    "matrix is not symmetric: |m[{i},{j}] - m[{j},{i}]| = {gap:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// On exit `d` holds the diagonal, `e[1..]` the subdiagonal, and `v` the
/// accumulated orthogonal transformation.
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal matrix (d, e), rotating `v`.
fn ql_implicit(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let at = |i: usize, j: usize| i * n + j;

    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n here.

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_ITERATION_CAP {
                    return Err(Error::numerical(format!(
                        "symmetric eigensolver did not converge within {QL_ITERATION_CAP} QL iterations for eigenvalue {l}"
                    )));
                }

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        let vk1 = v[at(k, i + 1)];
                        let vk = v[at(k, i)];
                        v[at(k, i + 1)] = s * vk + c * vk1;
                        v[at(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Flip column signs so each column's largest-magnitude entry is positive.
///
/// Entries within a relative `1e-12` of the column maximum count as tied, and
/// the lowest such index decides. Applying this twice is a no-op.
pub fn fix_column_signs(m: &mut Array2<f64>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let peak = col.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if peak == 0.0 {
            continue;
        }
        let lead = col
            .iter()
            .copied()
            .find(|x| x.abs() >= peak * (1.0 - SIGN_TIE_RTOL))
            .unwrap_or(0.0);
        if lead < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Apply `f` to the eigenvalues of a symmetric matrix: `V f(Λ) Vᵀ`.
pub fn symmetric_map(m: ArrayView2<f64>, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let eig = symmetric_eig(m)?;
    let scaled = &eig.vectors * &eig.values.mapv(f);
    Ok(scaled.dot(&eig.vectors.t()))
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Fails when the smallest eigenvalue is below `-1e-10` times the largest.
pub fn sym_sqrt(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = symmetric_eig(m)?;
    let top = eig.values[0].abs().max(f64::MIN_POSITIVE);
    if let Some(&low) = eig.values.iter().last() {
        if low < -1e-10 * top {
            return Err(Error::numerical(format!(
                "matrix is not positive semidefinite (smallest eigenvalue {low:e})"
            )));
        }
    }
    let scaled = &eig.vectors * &eig.values.mapv(|x| x.max(0.0).sqrt());
    Ok(scaled.dot(&eig.vectors.t()))
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn sym_inv_sqrt(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let eig = symmetric_eig(m)?;
    let top = eig.values[0].abs();
    let low = eig.values[eig.values.len() - 1];
    if !(low > 1e-12 * top) || top == 0.0 {
        return Err(Error::numerical(format!(
            "matrix is not positive definite (eigenvalues span [{low:e}, {top:e}])"
        )));
    }
    let scaled = &eig.vectors * &eig.values.mapv(|x| 1.0 / x.sqrt());
    Ok(scaled.dot(&eig.vectors.t()))
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm_sym(m: ArrayView2<f64>) -> Result<f64> {
    let eig = symmetric_eig(m)?;
    Ok(eig.values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
}

/// Orthogonal polar factor `M (MᵀM)^{-1/2}` of a square matrix.
pub fn polar_factor(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::dimension(format!(
            "polar factor of a {r}x{c} matrix"
        )));
    }
    let gram = symmetrize(m.t().dot(&m).view());
    let inv_sqrt = sym_inv_sqrt(gram.view()).map_err(|_| {
        Error::numerical("cross product is rank deficient; no unique orthogonal alignment")
    })?;
    Ok(m.dot(&inv_sqrt))
}

/// Orthonormal basis of the top-`k` left singular subspace of a tall matrix,
/// sign-fixed.
///
/// Computed from the eigendecomposition of the small Gram matrix `AᵀA` and
/// finished with one modified Gram-Schmidt pass so the columns are orthonormal
/// to working precision.
pub fn left_singular_vectors(a: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let (p, q) = a.dim();
    if k == 0 || k > q || k > p {
        return Err(Error::dimension(format!(
            "{k} left singular vectors of a {p}x{q} matrix"
        )));
    }
    let gram = symmetrize(a.t().dot(&a).view());
    let (vals, vecs) = symmetric_eig_descending(gram.view(), k)?;
    if !(vals[k - 1] > 1e-24 * vals[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::numerical("matrix is rank deficient"));
    }
    let mut u = a.dot(&vecs);
    for (j, mut col) in u.axis_iter_mut(Axis(1)).enumerate() {
        col /= vals[j].sqrt();
    }
    gram_schmidt(&mut u)?;
    fix_column_signs(&mut u);
    Ok(u)
}

/// In-place modified Gram-Schmidt on the columns.
pub fn gram_schmidt(u: &mut Array2<f64>) -> Result<()> {
    let k = u.ncols();
    for j in 0..k {
        for i in 0..j {
            let proj = u.column(i).dot(&u.column(j));
            let qi = u.column(i).to_owned();
            u.column_mut(j).scaled_add(-proj, &qi);
        }
        let norm = u.column(j).dot(&u.column(j)).sqrt();
        if !(norm > 0.0) {
            return Err(Error::numerical(
                "column space collapsed during orthonormalization",
            ));
        }
        u.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: ArrayView2<f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    out += &m.t();
    out *= 0.5;
    out
}

pub fn frobenius_norm_sq(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn frobenius_norm(m: ArrayView2<f64>) -> f64 {
    frobenius_norm_sq(m).sqrt()
}
