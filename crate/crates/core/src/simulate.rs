//! Data-generating processes for the four simulation scenarios.
//!
//! Every scenario draws orthonormal loadings, vector-autoregressive factor
//! series and matrix-normal noise, then assembles `X_t = S_t + e_t`:
//!
//! | scenario | factors            | signal                          |
//! |----------|--------------------|---------------------------------|
//! | I        | uncorrelated       | `R Z_t Cᵀ + R E_tᵀ + F_t Cᵀ`    |
//! | II       | uncorrelated       | `R Z_t Cᵀ`                      |
//! | III      | AR(1) (0.6,0.8,0.8)| `R Z_t Cᵀ + R E_tᵀ + F_t Cᵀ`    |
//! | IV       | AR(1) (0.6,0.8,0.8)| `R Z_t Cᵀ`                      |
//!
//! Draw order from the seeded stream is fixed: `R`, `C`, the `Z` series, the
//! `F` series, the `E` series, then the noise. Factor vectors are reshaped to
//! matrices column-major, which is the convention under which
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView1, Axis, ShapeBuilder};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;
use crate::types::{FactorScores, MatrixSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    I,
    II,
    III,
    IV,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::I, Scenario::II, Scenario::III, Scenario::IV];

    /// Whether the signal includes the row and column factor terms.
    pub fn has_mode_factors(self) -> bool {
        matches!(self, Scenario::I | Scenario::III)
    }

    /// Default `(φ, ψ, γ)`.
    pub fn default_ar(self) -> (f64, f64, f64) {
        match self {
            Scenario::I | Scenario::II => (0.0, 0.0, 0.0),
            Scenario::III | Scenario::IV => (0.6, 0.8, 0.8),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            "III" | "3" => Ok(Scenario::III),
            "IV" | "4" => Ok(Scenario::IV),
            other => Err(Error::validation(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Parameters of one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub t: usize,
    pub p1: usize,
    pub p2: usize,
    pub k1: usize,
    pub k2: usize,
    /// AR coefficient of `vec(Z_t)`.
    pub phi: f64,
    /// AR coefficient of `vec(F_t)`.
    pub psi: f64,
    /// AR coefficient of `vec(E_t)`.
    pub gamma: f64,
    pub seed: u64,
    /// Add matrix-normal noise. Turning this off leaves `X_t = S_t`.
    pub noise: bool,
}

impl ScenarioConfig {
    /// Scenario defaults: `k1 = k2 = 3`, scenario AR coefficients, noise on.
    pub fn new(scenario: Scenario, t: usize, p1: usize, p2: usize, seed: u64) -> Self {
        let (phi, psi, gamma) = scenario.default_ar();
        Self {
            scenario,
            t,
            p1,
            p2,
            k1: 3,
            k2: 3,
            phi,
            psi,
            gamma,
            seed,
            noise: true,
        }
    }

    pub fn with_factors(mut self, k1: usize, k2: usize) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn with_ar(mut self, phi: f64, psi: f64, gamma: f64) -> Self {
        self.phi = phi;
        self.psi = psi;
        self.gamma = gamma;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::validation("T must be positive"));
        }
        if self.p1 < 2 || self.p2 < 2 {
            return Err(Error::validation("p1 and p2 must be at least 2"));
        }
        if self.k1 == 0 || self.k1 >= self.p1 || self.k2 == 0 || self.k2 >= self.p2 {
            return Err(Error::dimension(format!(
                "need 1 <= k1 < p1 and 1 <= k2 < p2, got k=({}, {}) p=({}, {})",
                self.k1, self.k2, self.p1, self.p2
            )));
        }
        for (name, v) in [("phi", self.phi), ("psi", self.psi), ("gamma", self.gamma)] {
            if !(v.abs() < 1.0) {
                return Err(Error::validation(format!(
                    "{name} = {v} must lie in (-1, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Observations together with every piece of ground truth used to build them.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub config: ScenarioConfig,
    pub observations: MatrixSeries,
    pub truth_signal: MatrixSeries,
    pub noise: Array3<f64>,
    pub truth_r: Array2<f64>,
    pub truth_c: Array2<f64>,
    /// Population factors; `E` and `F` are zero in the bilinear scenarios.
    pub truth_factors: FactorScores,
}

/// `√p` times the top-`k` left singular vectors of a `p × k` standard-normal
/// matrix (drawn row-major).
pub fn generate_loadings(p: usize, k: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    if k == 0 || k >= p {
        return Err(Error::dimension(format!(
            "loading needs 1 <= k < p, got k={k}, p={p}"
        )));
    }
    let mut buf = vec![0.0; p * k];
    rng.fill_standard_normal(&mut buf);
    let g = Array2::from_shape_vec((p, k), buf).expect("shape matches buffer");
    let u = linalg::left_singular_vectors(g.view(), k)?;
    Ok(u * (p as f64).sqrt())
}

/// `T` draws of the stationary VAR(1) `u_t = ρ u_{t−1} + √(1−ρ²) ε_t`, started
/// from a standard-normal `u_1`. Returned as a `(T, dim)` array, one row per
/// time point.
pub fn generate_factor_series(
    dim: usize,
    t: usize,
    rho: f64,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::validation(format!(
            "AR coefficient {rho} must lie in (-1, 1)"
        )));
    }
    let innov = (1.0 - rho * rho).sqrt();
    let mut out = Array2::<f64>::zeros((t, dim));
    let mut eps = vec![0.0; dim];
    for s in 0..t {
        rng.fill_standard_normal(&mut eps);
        if s == 0 {
            out.row_mut(0).assign(&ArrayView1::from(&eps[..]));
        } else {
            for j in 0..dim {
                out[[s, j]] = rho * out[[s - 1, j]] + innov * eps[j];
            }
        }
    }
    Ok(out)
}

/// Row and column covariances of the noise: ones on the diagonal, `1/p` off it.
pub fn noise_covariance(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| if i == j { 1.0 } else { 1.0 / p as f64 })
}

/// `T` draws of `e_t = U^{1/2} G_t V^{1/2}` with `G_t` standard normal
/// (row-major draw order), i.e. `e_t ~ MN(0; U, V)`.
pub fn generate_noise(p1: usize, p2: usize, t: usize, rng: &mut RngStream) -> Result<MatrixSeries> {
    MatrixSeries::new(generate_noise_array(p1, p2, t, rng)?)
}

fn generate_noise_array(
    p1: usize,
    p2: usize,
    t: usize,
    rng: &mut RngStream,
) -> Result<Array3<f64>> {
    if p1 < 2 || p2 < 2 {
        return Err(Error::validation("noise dimensions must be at least 2"));
    }
    let u_half = linalg::sym_sqrt(noise_covariance(p1).view())?;
    let v_half = linalg::sym_sqrt(noise_covariance(p2).view())?;
    let mut out = Array3::<f64>::zeros((t, p1, p2));
    let mut buf = vec![0.0; p1 * p2];
    for mut block in out.axis_iter_mut(Axis(0)) {
        rng.fill_standard_normal(&mut buf);
        let g = ndarray::ArrayView2::from_shape((p1, p2), &buf).expect("shape matches buffer");
        block.assign(&u_half.dot(&g).dot(&v_half));
    }
    Ok(out)
}

/// Column-major reshape of a vector into a `rows × cols` matrix.
pub fn unvec(v: ArrayView1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    Array2::from_shape_vec((rows, cols).f(), v.to_vec()).expect("length checked")
}

/// Column-major vectorization.
pub fn vec_col_major(m: ndarray::ArrayView2<f64>) -> ndarray::Array1<f64> {
    m.t().iter().copied().collect()
}

/// Generate one dataset.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let ScenarioConfig {
        scenario,
        t,
        p1,
        p2,
        k1,
        k2,
        ..
    } = *config;
    let mut rng = RngStream::new(config.seed);

    let r = generate_loadings(p1, k1, &mut rng)?;
    let c = generate_loadings(p2, k2, &mut rng)?;

    let zs = generate_factor_series(k1 * k2, t, config.phi, &mut rng)?;
    let (fs, es) = if scenario.has_mode_factors() {
        (
            Some(generate_factor_series(p1 * k2, t, config.psi, &mut rng)?),
            Some(generate_factor_series(p2 * k1, t, config.gamma, &mut rng)?),
        )
    } else {
        (None, None)
    };

    let mut z = Array3::<f64>::zeros((t, k1, k2));
    let mut e = Array3::<f64>::zeros((t, p2, k1));
    let mut f = Array3::<f64>::zeros((t, p1, k2));
    let mut signal = Array3::<f64>::zeros((t, p1, p2));
    for s in 0..t {
        let zt = unvec(zs.row(s), k1, k2);
        let mut st = r.dot(&zt).dot(&c.t());
        if let (Some(fs), Some(es)) = (&fs, &es) {
            let ft = unvec(fs.row(s), p1, k2);
            let et = unvec(es.row(s), p2, k1);
            st += &r.dot(&et.t());
            st += &ft.dot(&c.t());
            f.index_axis_mut(Axis(0), s).assign(&ft);
            e.index_axis_mut(Axis(0), s).assign(&et);
        }
        z.index_axis_mut(Axis(0), s).assign(&zt);
        signal.index_axis_mut(Axis(0), s).assign(&st);
    }

    let noise = if config.noise {
        generate_noise_array(p1, p2, t, &mut rng)?
    } else {
        Array3::zeros((t, p1, p2))
    };
    let observations = MatrixSeries::new(&signal + &noise)?;
    let truth_signal = MatrixSeries::new(signal)?;

    let diff = &observations.data() - &truth_signal.data() - &noise;
    let scale = noise
        .iter()
        .chain(truth_signal.as_slice())
        .fold(1.0_f64, |a, x| a.max(x.abs()));
    if diff.iter().any(|d| d.abs() > 1e-12 * scale) {
        return Err(Error::numerical(
            "observation != signal + noise after assembly",
        ));
    }

    Ok(SimulatedDataset {
        config: config.clone(),
        observations,
        truth_signal,
        noise,
        truth_r: r,
        truth_c: c,
        truth_factors: FactorScores::new(z, e, f)?,
    })
}
