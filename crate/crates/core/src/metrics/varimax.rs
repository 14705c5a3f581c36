//! Varimax rotation by pairwise planar sweeps.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct VarimaxOptions {
    /// Kaiser row normalization: rotate the row-normalized loadings and scale
    /// the rows back afterwards.
    pub normalize: bool,
    pub max_sweeps: usize,
    /// Stop once a full sweep improves the criterion by less than this.
    pub tol: f64,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        Self {
            normalize: false,
            max_sweeps: 1000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    pub rotated: Array2<f64>,
    /// Orthogonal `k × k` matrix with `rotated = loading · rotation`.
    pub rotation: Array2<f64>,
    pub sweeps: usize,
}

/// Raw varimax criterion `Σ_j [ mean_i(λ_ij⁴) − mean_i(λ_ij²)² ]`.
pub fn varimax_criterion(loading: ArrayView2<f64>) -> f64 {
    let p = loading.nrows() as f64;
    loading
        .axis_iter(Axis(1))
        .map(|col| {
            let m2 = col.iter().map(|x| x * x).sum::<f64>() / p;
            let m4 = col.iter().map(|x| x.powi(4)).sum::<f64>() / p;
            m4 - m2 * m2
        })
        .sum()
}

pub fn varimax(loading: ArrayView2<f64>) -> Result<VarimaxResult> {
    varimax_with(loading, &VarimaxOptions::default())
}

pub fn varimax_with(loading: ArrayView2<f64>, opts: &VarimaxOptions) -> Result<VarimaxResult> {
    let (p, k) = loading.dim();
    if p == 0 || k == 0 {
        return Err(Error::dimension(format!("varimax on a {p}x{k} loading")));
    }
    if loading.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("loading has non-finite entries"));
    }

    let row_norms: Array1<f64> = if opts.normalize {
        loading
            .axis_iter(Axis(0))
            .map(|r| {
                let n = r.dot(&r).sqrt();
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        Array1::ones(p)
    };
    let mut work = &loading / &row_norms.view().insert_axis(Axis(1));
    let mut rotation = Array2::<f64>::eye(k);

    let mut crit = varimax_criterion(work.view());
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps && k > 1 {
        sweeps += 1;
        for a in 0..k - 1 {
            for b in a + 1..k {
                let angle = pair_angle(&work, a, b);
                if angle != 0.0 {
                    rotate_pair(&mut work, a, b, angle);
                    rotate_pair(&mut rotation, a, b, angle);
                }
            }
        }
        let next = varimax_criterion(work.view());
        let gain = next - crit;
        crit = next;
        if gain < opts.tol {
            break;
        }
    }

    let rotated = work * row_norms.view().insert_axis(Axis(1));
    Ok(VarimaxResult {
        rotated,
        rotation,
        sweeps,
    })
}

/// Optimal planar angle for columns `a`, `b` (Kaiser's closed form).
fn pair_angle(m: &Array2<f64>, a: usize, b: usize) -> f64 {
    let p = m.nrows() as f64;
    let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
    for row in m.axis_iter(Axis(0)) {
        let (x, y) = (row[a], row[b]);
        let u = x * x - y * y;
        let v = 2.0 * x * y;
        sa += u;
        sb += v;
        sc += u * u - v * v;
        sd += 2.0 * u * v;
    }
    let num = sd - 2.0 * sa * sb / p;
    let den = sc - (sa * sa - sb * sb) / p;
    if num == 0.0 && den >= 0.0 {
        return 0.0;
    }
    0.25 * num.atan2(den)
}

fn rotate_pair(m: &mut Array2<f64>, a: usize, b: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    for mut row in m.axis_iter_mut(Axis(0)) {
        let (x, y) = (row[a], row[b]);
        row[a] = c * x + s * y;
        row[b] = -s * x + c * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::space_distance;
    use crate::rng::RngStream;
    use ndarray::array;

    fn orthogonality_error(h: &Array2<f64>) -> f64 {
        let k = h.nrows();
        (&h.t().dot(h) - &Array2::<f64>::eye(k))
            .iter()
            .fold(0.0_f64, |a, x| a.max(x.abs()))
    }

    #[test]
    fn single_factor_is_untouched() {
        let l = array![[0.5], [-1.0], [2.0]];
        let out = varimax(l.view()).unwrap();
        assert_eq!(out.rotation, array![[1.0]]);
        assert_eq!(out.rotated, l);
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let l = array![[1.0, 0.0], [0.8, 0.0], [0.0, 1.2], [0.0, -0.7]];
        let before = varimax_criterion(l.view());
        let out = varimax(l.view()).unwrap();
        let after = varimax_criterion(out.rotated.view());
        assert!((after - before).abs() < 1e-8);
        // rotation is a signed permutation
        for v in out.rotation.iter() {
            assert!(
                v.abs() < 1e-8 || (v.abs() - 1.0).abs() < 1e-8,
                "{}",
                out.rotation
            );
        }
    }

    #[test]
    fn random_inputs_improve_and_keep_span() {
        let mut rng = RngStream::new(99);
        for _ in 0..10 {
            let mut buf = vec![0.0; 30];
            rng.fill_standard_normal(&mut buf);
            let l = Array2::from_shape_vec((10, 3), buf).unwrap();
            for normalize in [false, true] {
                let opts = VarimaxOptions {
                    normalize,
                    ..VarimaxOptions::default()
                };
                let out = varimax_with(l.view(), &opts).unwrap();
                assert!(orthogonality_error(&out.rotation) < 1e-10);
                let rebuilt = l.dot(&out.rotation);
                assert!((&rebuilt - &out.rotated).iter().all(|d| d.abs() < 1e-10));
                assert!(space_distance(out.rotated.view(), l.view()).unwrap() < 1e-10);
                if !normalize {
                    assert!(
                        varimax_criterion(out.rotated.view())
                            >= varimax_criterion(l.view()) - 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn rotation_recovers_hidden_simple_structure() {
        let simple = array![
            [1.0, 0.0],
            [0.9, 0.0],
            [1.1, 0.0],
            [0.0, 1.0],
            [0.0, 0.8],
            [0.0, 1.2]
        ];
        let th: f64 = 0.5;
        let q = array![[th.cos(), th.sin()], [-th.sin(), th.cos()]];
        let mixed = simple.dot(&q);
        let out = varimax(mixed.view()).unwrap();
        let crit = varimax_criterion(out.rotated.view());
        assert!((crit - varimax_criterion(simple.view())).abs() < 1e-8);
    }
}
