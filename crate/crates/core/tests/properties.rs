mod common;

use ndarray::Array2;
use proptest::prelude::*;
use tedfam::baseline::{bilinear_scores, bilinear_signal};
use tedfam::estimator::{self, reconstruct_signal};
use tedfam::io;
use tedfam::rng::RngStream;
use tedfam::{LoadingPair, MatrixSeries};

use common::gaussian_series;

#[derive(Debug, Clone)]
struct Case {
    t: usize,
    p1: usize,
    p2: usize,
    k1: usize,
    k2: usize,
    seed: u64,
}

fn cases() -> impl Strategy<Value = Case> {
    (1usize..12, 2usize..12, 2usize..12, any::<u64>())
        .prop_flat_map(|(t, p1, p2, seed)| (Just(t), Just(p1), Just(p2), 1..p1, 1..p2, Just(seed)))
        .prop_map(|(t, p1, p2, k1, k2, seed)| Case {
            t,
            p1,
            p2,
            k1,
            k2,
            seed,
        })
}

fn series(c: &Case) -> MatrixSeries {
    gaussian_series(c.t, c.p1, c.p2, &mut RngStream::new(c.seed))
}

fn max_abs_diff(a: &MatrixSeries, b: &MatrixSeries) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projectors_are_idempotent(c in cases()) {
        let fit = estimator::fit(&series(&c), c.k1, c.k2).unwrap();
        for p in [fit.loadings.row_projector(), fit.loadings.col_projector()] {
            prop_assert!(max_abs(&(p.dot(&p) - &p)) < 1e-10);
            prop_assert!(max_abs(&(&p - &p.t())) < 1e-12);
        }
    }

    #[test]
    fn signal_reconstruction_is_idempotent(c in cases()) {
        let x = series(&c);
        let fit = estimator::fit(&x, c.k1, c.k2).unwrap();
        let s = fit.signal.unwrap();
        let again = reconstruct_signal(&s, &fit.loadings).unwrap();
        prop_assert!(max_abs_diff(&s, &again) < 1e-10);
    }

    #[test]
    fn scaling_the_data_scales_the_signal(c in cases(), scale in 0.01f64..100.0) {
        let x = series(&c);
        let a = estimator::fit(&x, c.k1, c.k2).unwrap();
        let b = estimator::fit(&x.scaled(scale).unwrap(), c.k1, c.k2).unwrap();
        let sa = a.signal.unwrap().scaled(scale).unwrap();
        let sb = b.signal.unwrap();
        let norm = sa.as_slice().iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        // Subspaces are only identified up to gaps in the spectrum; compare
        // when the relevant eigenvalue gaps are clear.
        let gap = |v: &ndarray::Array1<f64>, k: usize| (v[k - 1] - v[k]) / v[0].max(1e-300);
        if gap(&a.all_eigvals_row, c.k1) > 1e-6 && gap(&a.all_eigvals_col, c.k2) > 1e-6 {
            prop_assert!(max_abs_diff(&sa, &sb) < 1e-8 * norm);
        }
    }

    #[test]
    fn core_scores_negate_bilinear_scores(c in cases()) {
        let x = series(&c);
        let fit = estimator::fit(&x, c.k1, c.k2).unwrap();
        prop_assert_eq!(fit.scores.z, -bilinear_scores(&x, &fit.loadings).unwrap());
    }

    #[test]
    fn three_term_signal_never_fits_worse(c in cases(), other_seed in any::<u64>()) {
        let x = series(&c);
        let fitted = estimator::fit(&x, c.k1, c.k2).unwrap().loadings;
        // Any valid loading pair, not just the fitted one.
        let foreign = estimator::fit(
            &gaussian_series(3, c.p1, c.p2, &mut RngStream::new(other_seed)),
            c.k1,
            c.k2,
        )
        .unwrap()
        .loadings;
        for l in [&fitted, &foreign] {
            let ted = reconstruct_signal(&x, l).unwrap();
            let bil = bilinear_signal(&x, l).unwrap();
            for t in 0..c.t {
                let xt = x.obs(t);
                let ss = |s: &MatrixSeries| (&xt - &s.obs(t)).iter().map(|d| d * d).sum::<f64>();
                let tol = 1e-12 * xt.iter().map(|v| v * v).sum::<f64>();
                prop_assert!(ss(&ted) <= ss(&bil) + tol);
            }
        }
    }

    #[test]
    fn bilinear_signal_is_the_cross_projection_of_the_signal(c in cases()) {
        let x = series(&c);
        let l = estimator::fit(&x, c.k1, c.k2).unwrap().loadings;
        let ted = reconstruct_signal(&x, &l).unwrap();
        let bil = bilinear_signal(&x, &l).unwrap();
        let (pr, pc) = (l.row_projector(), l.col_projector());
        let nested = ted.map_obs(|s| pr.dot(&s).dot(&pc)).unwrap();
        prop_assert!(max_abs_diff(&nested, &bil) < 1e-10);
    }

    #[test]
    fn rank_selection_ignores_scale(c in cases(), scale in 0.001f64..1000.0) {
        prop_assume!(c.p1 >= 3 && c.p2 >= 3);
        let x = series(&c);
        let a = estimator::select_ranks(&x, None, None, false);
        let b = estimator::select_ranks(&x.scaled(scale).unwrap(), None, None, false);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!((a.k1, a.k2), (b.k1, b.k2)),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn series_files_round_trip(c in cases(), exp in -300i32..300) {
        let x = series(&c).scaled(10f64.powi(exp)).unwrap();
        let text = io::series_to_string(&x);
        let back = io::series_from_str(&text, "p.mser".as_ref()).unwrap();
        prop_assert!(x.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(io::series_to_string(&back), text);
    }

    #[test]
    fn loadings_pass_their_own_validation(c in cases()) {
        let l = estimator::fit(&series(&c), c.k1, c.k2).unwrap().loadings;
        prop_assert!(LoadingPair::new(l.r.clone(), l.c.clone(), l.eigvals_row.clone(), l.eigvals_col.clone()).is_ok());
    }
}
