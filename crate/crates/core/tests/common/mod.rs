#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array3;
use tedfam::rng::RngStream;
use tedfam::MatrixSeries;

pub fn gaussian_series(t: usize, p1: usize, p2: usize, rng: &mut RngStream) -> MatrixSeries {
    let mut buf = vec![0.0; t * p1 * p2];
    rng.fill_standard_normal(&mut buf);
    MatrixSeries::new(Array3::from_shape_vec((t, p1, p2), buf).unwrap()).unwrap()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn tedfam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tedfam"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Every regular file in `dir`, sorted by name, with its bytes.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}
