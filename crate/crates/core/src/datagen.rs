//! Synthetic regression designs with AR(1) Gaussian covariates.
//!
//! Two response models are supported:
//!
//! - homoscedastic: `y = xᵀβ + ε`
//! - heteroscedastic: `y = xᵀβ + (1 + 0.4·x₁)·ε`
//!
//! with `ε` drawn i.i.d. from a standard normal, Student t with 3 degrees of
//! freedom, or standard Cauchy law.
//!
//! # Ground truth at level τ
//!
//! With `q = F_ε⁻¹(τ)`, the conditional τ-quantile of the homoscedastic model
//! is `xᵀβ + q`, so only the intercept moves. For the heteroscedastic model,
//! wherever `1 + 0.4·x₁ > 0`,
//!
//! ```text
//! Q_τ(y | x) = xᵀβ + (1 + 0.4·x₁)·q = (β₀ + q) + (β₁ + 0.4·q)·x₁ + Σ_{j≥2} β_j x_j
//! ```
//!
//! so the intercept shifts by `q` and the first slope by `0.4·q`. The scale
//! factor is applied literally, including the rare rows where it is negative.
//!
//! # Randomness
//!
//! All draws come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`. Covariate rows are produced in blocks of
//! [`ROW_CHUNK`](crate::par::ROW_CHUNK) rows; block `k` uses stream `k + 16`.
//! Noise uses stream 1 and the shard permutation stream 2. Normal covariates
//! use the ziggurat sampler from `rand_distr`; noise is drawn by inverse CDF
//! from open-interval uniforms so that sampling and [`noise_quantile`] share
//! one inversion routine.

use ndarray::{s, Array1, Array2, Axis};
use rand::{seq::SliceRandom, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coeffs::CoefficientVector;
use crate::error::{DhsqrError, Result};
use crate::par::{self, Execution};

pub const NOISE_STREAM: u64 = 1;
pub const SHARD_STREAM: u64 = 2;
const COVARIATE_STREAM_BASE: u64 = 16;

/// Name of the generator recorded in experiment metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64; covariate block k -> stream 16+k, noise -> stream 1, sharding -> stream 2)";

/// Heteroscedastic scale slope on `x₁`.
pub const HETERO_SLOPE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Homoscedastic,
    Heteroscedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseLaw {
    Normal,
    StudentT3,
    Cauchy,
}

impl NoiseLaw {
    /// Inverse CDF of the standard form of the law.
    pub fn quantile(self, tau: f64) -> Result<f64> {
        noise_quantile(self, tau)
    }

    fn sample<R: RngCore>(self, rng: &mut R) -> f64 {
        let u = open_uniform(rng);
        // u lies strictly inside (0, 1), so inversion cannot fail.
        noise_quantile(self, u).expect("open uniform")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelKind,
    pub p: usize,
    pub beta_base: CoefficientVector,
    pub noise: NoiseLaw,
    pub ar_rho: f64,
    /// Multiplies every noise draw. `0.0` gives noiseless responses.
    pub noise_scale: f64,
}

impl ModelSpec {
    /// `β = (1, 1, 2, 3, 4, 5, 0, …, 0)` with `ρ = 0.5`.
    pub fn simulation_default(model: ModelKind, noise: NoiseLaw, p: usize) -> Self {
        ModelSpec {
            model,
            p,
            beta_base: default_beta(p),
            noise,
            ar_rho: 0.5,
            noise_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(DhsqrError::Config("p must be at least 1".into()));
        }
        check_rho(self.ar_rho)?;
        if self.beta_base.len() != self.p + 1 {
            return Err(DhsqrError::Config(format!(
                "beta_base has length {}, expected p+1 = {}",
                self.beta_base.len(),
                self.p + 1
            )));
        }
        if !self.beta_base.is_finite() || !self.noise_scale.is_finite() {
            return Err(DhsqrError::Config("non-finite model parameters".into()));
        }
        Ok(())
    }
}

/// `(1, 1, 2, 3, 4, 5, 0_{p−5})`, truncated when `p < 5`.
pub fn default_beta(p: usize) -> CoefficientVector {
    let head = [1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let mut beta = vec![0.0; p + 1];
    for (dst, src) in beta.iter_mut().zip(head) {
        *dst = src;
    }
    CoefficientVector::from_vec(beta)
}

/// A full design held in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    /// Rows `start..end` as a new dataset.
    pub fn slice_rows(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            x: self.x.slice(s![start..end, ..]).to_owned(),
            y: self.y.slice(s![start..end]).to_owned(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }

    pub fn into_shard(self, shard_id: usize) -> DatasetShard {
        DatasetShard {
            shard_id,
            x: self.x,
            y: self.y,
        }
    }
}

/// One machine's block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub shard_id: usize,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl DatasetShard {
    pub fn new(shard_id: usize, x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(DhsqrError::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if x.nrows() == 0 || x.ncols() < 2 {
            return Err(DhsqrError::Config(
                "shard needs at least one row and one covariate".into(),
            ));
        }
        Ok(DatasetShard { shard_id, x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn as_dataset(&self) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(DhsqrError::Config(format!(
            "ar_rho must lie in (0, 1), got {rho}"
        )))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(DhsqrError::Domain(format!(
            "quantile level must lie in (0, 1), got {tau}"
        )))
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `F⁻¹(τ)` for the standard normal, t₃, or standard Cauchy law.
pub fn noise_quantile(noise: NoiseLaw, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(match noise {
        NoiseLaw::Normal => Normal::standard().inverse_cdf(tau),
        NoiseLaw::StudentT3 => t3_quantile(tau),
        NoiseLaw::Cauchy => (std::f64::consts::PI * (tau - 0.5)).tan(),
    })
}

fn t3_cdf(t: f64) -> f64 {
    let r3 = 3f64.sqrt();
    0.5 + ((t / r3).atan() + r3 * t / (3.0 + t * t)) / std::f64::consts::PI
}

fn t3_pdf(t: f64) -> f64 {
    let d = 3.0 + t * t;
    6.0 * 3f64.sqrt() / (std::f64::consts::PI * d * d)
}

// Safeguarded Newton on the closed-form t₃ CDF.
fn t3_quantile(tau: f64) -> f64 {
    if tau == 0.5 {
        return 0.0;
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t3_cdf(lo) > tau {
        lo *= 2.0;
    }
    while t3_cdf(hi) < tau {
        hi *= 2.0;
    }
    // The Cauchy quantile is a decent starting guess with the right tails.
    let mut t = (std::f64::consts::PI * (tau - 0.5)).tan().clamp(lo, hi);
    for _ in 0..200 {
        let f = t3_cdf(t) - tau;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let mut next = t - f / t3_pdf(t);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            return next;
        }
        t = next;
    }
    t
}

/// Design matrix with a leading column of ones and AR(1) Gaussian covariates,
/// `Cov(x_i, x_j) = ρ^{|i−j|}`.
pub fn gen_covariates(n: usize, p: usize, ar_rho: f64, seed: u64) -> Result<Array2<f64>> {
    gen_covariates_with(n, p, ar_rho, seed, Execution::default())
}

pub fn gen_covariates_with(
    n: usize,
    p: usize,
    ar_rho: f64,
    seed: u64,
    exec: Execution,
) -> Result<Array2<f64>> {
    if n == 0 || p == 0 {
        return Err(DhsqrError::Config(format!(
            "invalid design size n={n}, p={p}"
        )));
    }
    check_rho(ar_rho)?;
    let innov = (1.0 - ar_rho * ar_rho).sqrt();
    let chunks = par::row_chunks(n);
    let blocks = par::map_range(exec, chunks.len(), |k| {
        let (start, end) = chunks[k];
        let mut rng = stream_rng(seed, COVARIATE_STREAM_BASE + k as u64);
        let mut block = Array2::<f64>::zeros((end - start, p + 1));
        for mut row in block.rows_mut() {
            row[0] = 1.0;
            let mut prev: f64 = rng.sample(StandardNormal);
            row[1] = prev;
            for j in 2..=p {
                let z: f64 = rng.sample(StandardNormal);
                prev = ar_rho * prev + innov * z;
                row[j] = prev;
            }
        }
        block
    });
    let mut x = Array2::<f64>::zeros((n, p + 1));
    for ((start, end), block) in chunks.iter().zip(blocks) {
        x.slice_mut(s![*start..*end, ..]).assign(&block);
    }
    Ok(x)
}

/// The coefficient vector whose linear predictor is the conditional τ-quantile.
pub fn true_quantile_coeffs(spec: &ModelSpec, tau: f64) -> Result<CoefficientVector> {
    spec.validate()?;
    let q = spec.noise_scale * noise_quantile(spec.noise, tau)?;
    let mut beta = spec.beta_base.clone();
    beta[0] += q;
    if spec.model == ModelKind::Heteroscedastic {
        beta[1] += HETERO_SLOPE * q;
    }
    for j in 0..=1 {
        if spec.beta_base[j] != 0.0 && beta[j] == 0.0 {
            return Err(DhsqrError::Config(format!(
                "quantile shift cancels coefficient {j} exactly at tau={tau}"
            )));
        }
    }
    Ok(beta)
}

/// Draws `n_total` rows from the model.
pub fn gen_dataset(spec: &ModelSpec, n_total: usize, seed: u64) -> Result<Dataset> {
    gen_dataset_with(spec, n_total, seed, Execution::default())
}

pub fn gen_dataset_with(
    spec: &ModelSpec,
    n_total: usize,
    seed: u64,
    exec: Execution,
) -> Result<Dataset> {
    spec.validate()?;
    if n_total == 0 {
        return Err(DhsqrError::Config("n_total must be at least 1".into()));
    }
    let x = gen_covariates_with(n_total, spec.p, spec.ar_rho, seed, exec)?;
    let mut y = x.dot(spec.beta_base.as_array());
    let mut rng = stream_rng(seed, NOISE_STREAM);
    for (i, yi) in y.iter_mut().enumerate() {
        let eps = spec.noise_scale * spec.noise.sample(&mut rng);
        let scale = match spec.model {
            ModelKind::Homoscedastic => 1.0,
            ModelKind::Heteroscedastic => 1.0 + HETERO_SLOPE * x[[i, 1]],
        };
        *yi += scale * eps;
    }
    Ok(Dataset { x, y })
}

/// Randomly permutes rows and cuts them into `m` equal contiguous blocks.
/// Shard 0 is the central machine.
pub fn shard_dataset(data: &Dataset, m: usize, seed: u64) -> Result<Vec<DatasetShard>> {
    let n_total = data.n();
    if m == 0 || !n_total.is_multiple_of(m) {
        return Err(DhsqrError::Config(format!(
            "machine count {m} must divide the sample size {n_total}"
        )));
    }
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(&mut stream_rng(seed, SHARD_STREAM));
    let n = n_total / m;
    Ok(order
        .chunks(n)
        .enumerate()
        .map(|(k, rows)| data.select_rows(rows).into_shard(k))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{Cauchy, ContinuousCDF};

    fn bisect(cdf: impl Fn(f64) -> f64, target: f64) -> f64 {
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn covariates_have_ar1_structure() {
        let x = gen_covariates(100_000, 4, 0.5, 7).unwrap();
        assert!(x.column(0).iter().all(|&v| v == 1.0));
        let c1: Vec<f64> = x.column(1).to_vec();
        let var = c1.iter().map(|v| v * v).sum::<f64>() / c1.len() as f64
            - (c1.iter().sum::<f64>() / c1.len() as f64).powi(2);
        assert_abs_diff_eq!(var, 1.0, epsilon = 0.02);
        let c2: Vec<f64> = x.column(2).to_vec();
        let c4: Vec<f64> = x.column(4).to_vec();
        assert_abs_diff_eq!(corr(&c1, &c2), 0.5, epsilon = 0.02);
        assert_abs_diff_eq!(corr(&c1, &c4), 0.125, epsilon = 0.02);
    }

    #[test]
    fn p_one_has_unit_variance() {
        let x = gen_covariates(100_000, 1, 0.5, 3).unwrap();
        let c: Vec<f64> = x.column(1).to_vec();
        let m = c.iter().sum::<f64>() / c.len() as f64;
        let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64;
        assert_abs_diff_eq!(var, 1.0, epsilon = 0.02);
    }

    #[test]
    fn covariates_reject_bad_config() {
        assert!(gen_covariates(0, 3, 0.5, 1).is_err());
        assert!(gen_covariates(3, 0, 0.5, 1).is_err());
        assert!(gen_covariates(3, 3, 1.0, 1).is_err());
        assert!(gen_covariates(3, 3, 0.0, 1).is_err());
    }

    #[test]
    fn covariates_identical_across_execution_modes() {
        let a = gen_covariates_with(1000, 6, 0.5, 11, Execution::Sequential).unwrap();
        let b = gen_covariates_with(1000, 6, 0.5, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantiles_match_cdf_inversion() {
        assert_eq!(noise_quantile(NoiseLaw::Normal, 0.5).unwrap(), 0.0);
        let normal = Normal::standard();
        let q = noise_quantile(NoiseLaw::Normal, 0.7).unwrap();
        assert_abs_diff_eq!(q, bisect(|t| normal.cdf(t), 0.7), epsilon = 1e-9);
        assert_abs_diff_eq!(q, 0.52440, epsilon = 1e-5);

        let cauchy = Cauchy::new(0.0, 1.0).unwrap();
        let qc = noise_quantile(NoiseLaw::Cauchy, 0.3).unwrap();
        assert_abs_diff_eq!(qc, bisect(|t| cauchy.cdf(t), 0.3), epsilon = 1e-9);
        assert_abs_diff_eq!(qc, -0.72654, epsilon = 1e-5);

        // closed form for three degrees of freedom
        let t3_cdf = |t: f64| {
            let r = t / 3f64.sqrt();
            0.5 + (r / (1.0 + r * r) + r.atan()) / std::f64::consts::PI
        };
        for tau in [0.01, 0.1, 0.3, 0.5, 0.7, 0.95, 0.999] {
            let qt = noise_quantile(NoiseLaw::StudentT3, tau).unwrap();
            assert_abs_diff_eq!(qt, bisect(t3_cdf, tau), epsilon = 1e-8);
        }
    }

    #[test]
    fn quantile_rejects_tau_outside_unit_interval() {
        for tau in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                noise_quantile(NoiseLaw::Normal, tau),
                Err(DhsqrError::Domain(_))
            ));
        }
    }

    #[test]
    fn ground_truth_shifts() {
        let m1 = ModelSpec::simulation_default(ModelKind::Homoscedastic, NoiseLaw::Normal, 10);
        assert_eq!(true_quantile_coeffs(&m1, 0.5).unwrap(), m1.beta_base);

        let m2 = ModelSpec::simulation_default(ModelKind::Heteroscedastic, NoiseLaw::Normal, 10);
        let b = true_quantile_coeffs(&m2, 0.7).unwrap();
        assert_abs_diff_eq!(b[0], 1.52440, epsilon = 1e-5);
        assert_abs_diff_eq!(b[1], 1.20976, epsilon = 1e-5);
        for j in 2..=10 {
            assert_eq!(b[j], m2.beta_base[j]);
        }

        let m2c = ModelSpec::simulation_default(ModelKind::Heteroscedastic, NoiseLaw::Cauchy, 10);
        assert_eq!(true_quantile_coeffs(&m2c, 0.5).unwrap(), m2c.beta_base);
    }

    #[test]
    fn ground_truth_support_is_fixed() {
        for model in [ModelKind::Homoscedastic, ModelKind::Heteroscedastic] {
            for noise in [NoiseLaw::Normal, NoiseLaw::StudentT3, NoiseLaw::Cauchy] {
                let spec = ModelSpec::simulation_default(model, noise, 20);
                for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
                    let b = true_quantile_coeffs(&spec, tau).unwrap();
                    assert_eq!(b.support(0.0), vec![1, 2, 3, 4, 5]);
                }
            }
        }
    }

    #[test]
    fn exact_cancellation_is_rejected() {
        let mut spec =
            ModelSpec::simulation_default(ModelKind::Heteroscedastic, NoiseLaw::Cauchy, 5);
        // β₁ + 0.4·q = 0 with q = tan(π(τ − ½)) = −2.5.
        let tau = 0.5 + (-2.5f64).atan() / std::f64::consts::PI;
        let q = noise_quantile(NoiseLaw::Cauchy, tau).unwrap();
        spec.beta_base[1] = -HETERO_SLOPE * q;
        assert!(matches!(
            true_quantile_coeffs(&spec, tau),
            Err(DhsqrError::Config(_))
        ));
    }

    #[test]
    fn noiseless_model_is_exact() {
        let mut spec = ModelSpec::simulation_default(ModelKind::Homoscedastic, NoiseLaw::Normal, 8);
        spec.noise_scale = 0.0;
        let d = gen_dataset(&spec, 50, 5).unwrap();
        assert_eq!(d.y, d.x.dot(spec.beta_base.as_array()));
    }

    #[test]
    fn heteroscedastic_scale_grows_with_x1() {
        let spec = ModelSpec::simulation_default(ModelKind::Heteroscedastic, NoiseLaw::Normal, 3);
        let d = gen_dataset(&spec, 200_000, 21).unwrap();
        let resid = &d.y - &d.x.dot(spec.beta_base.as_array());
        for c in [-1.0, 0.0, 1.0, 1.5] {
            let vals: Vec<f64> = (0..d.n())
                .filter(|&i| (d.x[[i, 1]] - c).abs() < 0.05)
                .map(|i| resid[i])
                .collect();
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            let expected = 1.0 + HETERO_SLOPE * c;
            assert!(
                (sd / expected - 1.0).abs() < 0.05,
                "c={c}: sd={sd}, expected {expected}"
            );
        }
    }

    #[test]
    fn sharding_is_an_equal_partition() {
        let spec = ModelSpec::simulation_default(ModelKind::Homoscedastic, NoiseLaw::Normal, 3);
        let mut d = gen_dataset(&spec, 20, 1).unwrap();
        // Tag rows so the partition can be recovered.
        for i in 0..20 {
            d.y[i] = i as f64;
        }
        let shards = shard_dataset(&d, 4, 9).unwrap();
        assert_eq!(shards.len(), 4);
        let mut seen: Vec<usize> = Vec::new();
        for (k, s) in shards.iter().enumerate() {
            assert_eq!(s.shard_id, k);
            assert_eq!(s.n(), 5);
            seen.extend(s.y.iter().map(|v| *v as usize));
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
        assert_eq!(shards, shard_dataset(&d, 4, 9).unwrap());
        assert!(shard_dataset(&d, 3, 9).is_err());

        let single = shard_dataset(&d, 1, 2).unwrap();
        let mut ys = single[0].y.to_vec();
        ys.sort_by(f64::total_cmp);
        assert_eq!(ys, d.y.to_vec());
    }
}
