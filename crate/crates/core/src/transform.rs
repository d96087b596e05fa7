//! Pseudo covariates and responses.
//!
//! Around a current estimate `β`, each row `(x, y)` with residual
//! `e = y − xᵀβ` maps to
//!
//! ```text
//! x̃ = √K_h(e) · x
//! ỹ = x̃ᵀβ − (1{e ≤ 0} − τ) / √K_h(e)
//! ```
//!
//! Regressing `ỹ` on `x̃` by least squares reproduces one Newton-type step
//! for the check loss. Workers only ever need the averages `(1/n)Σ x̃ỹ` and
//! `(1/n)Σ x̃(x̃ᵀβ)`, and substituting the definitions gives
//!
//! ```text
//! x̃ỹ       = K_h(e)·x·(xᵀβ) − x·(1{e ≤ 0} − τ)
//! x̃(x̃ᵀβ)   = K_h(e)·x·(xᵀβ)
//! ```
//!
//! which never takes a square root or a reciprocal of the kernel weight.
//! [`shard_aggregates`] uses this form; [`pseudo_pair`] exists for checking it.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::coeffs::CoefficientVector;
use crate::datagen::DatasetShard;
use crate::error::{ensure_len, DhsqrError, Result};
use crate::kernel::{check_bandwidth, Gaussian, Kernel};
use crate::par::{self, Execution};

/// Kernel weights below this make [`pseudo_pair`] refuse to divide.
pub const KERNEL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAggregates {
    /// `(1/n) Σ x̃_i ỹ_i`
    pub z: Array1<f64>,
    /// `(1/n) Σ x̃_i (x̃_iᵀ β)`
    pub g: Array1<f64>,
    /// `(1/n) Σ x̃_i x̃_iᵀ`, only when requested.
    pub gram: Option<Array2<f64>>,
    pub n: usize,
}

#[inline]
fn indicator_minus_tau(e: f64, tau: f64) -> f64 {
    if e <= 0.0 {
        1.0 - tau
    } else {
        -tau
    }
}

/// Transformed row `(x̃, ỹ)`.
pub fn pseudo_pair(
    x: ArrayView1<f64>,
    y: f64,
    beta: &CoefficientVector,
    tau: f64,
    h: f64,
) -> Result<(Array1<f64>, f64)> {
    check_bandwidth(h)?;
    ensure_len(beta.len(), x.len())?;
    let e = y - x.dot(beta.as_array());
    let w = Gaussian.scaled(e, h);
    if w < KERNEL_FLOOR {
        return Err(DhsqrError::KernelUnderflow {
            weight: w,
            floor: KERNEL_FLOOR,
        });
    }
    let root = w.sqrt();
    let x_tilde = x.mapv(|v| root * v);
    let y_tilde = x_tilde.dot(beta.as_array()) - indicator_minus_tau(e, tau) / root;
    Ok((x_tilde, y_tilde))
}

struct ChunkSums {
    z: Array1<f64>,
    g: Array1<f64>,
    gram: Option<Array2<f64>>,
}

/// Division-free shard statistics at bandwidth `h`.
///
/// Rows are processed in fixed blocks of [`par::ROW_CHUNK`]; block partial
/// sums are added in block order, so the result does not depend on `exec`.
pub fn shard_aggregates(
    shard: &DatasetShard,
    beta: &CoefficientVector,
    tau: f64,
    h: f64,
    with_gram: bool,
) -> Result<PseudoAggregates> {
    shard_aggregates_with(shard, beta, tau, h, with_gram, Execution::default())
}

pub fn shard_aggregates_with(
    shard: &DatasetShard,
    beta: &CoefficientVector,
    tau: f64,
    h: f64,
    with_gram: bool,
    exec: Execution,
) -> Result<PseudoAggregates> {
    check_bandwidth(h)?;
    let d = shard.x.ncols();
    ensure_len(d, beta.len())?;
    let chunks = par::row_chunks(shard.n());
    let partials = par::map_slice(exec, &chunks, |&(start, end)| {
        let xc = shard.x.slice(s![start..end, ..]);
        let yc = shard.y.slice(s![start..end]);
        let fitted = xc.dot(beta.as_array());
        let weights: Array1<f64> = yc
            .iter()
            .zip(fitted.iter())
            .map(|(&y, &f)| Gaussian.scaled(y - f, h))
            .collect();
        let wf = &weights * &fitted;
        let c: Array1<f64> = yc
            .iter()
            .zip(fitted.iter())
            .zip(wf.iter())
            .map(|((&y, &f), &kf)| kf - indicator_minus_tau(y - f, tau))
            .collect();
        let z = xc.t().dot(&c);
        let g = xc.t().dot(&wf);
        let gram = with_gram.then(|| {
            let weighted = &xc * &weights.view().insert_axis(Axis(1));
            weighted.t().dot(&xc)
        });
        ChunkSums { z, g, gram }
    });

    let mut z = Array1::<f64>::zeros(d);
    let mut g = Array1::<f64>::zeros(d);
    let mut gram = with_gram.then(|| Array2::<f64>::zeros((d, d)));
    for part in partials {
        z += &part.z;
        g += &part.g;
        if let (Some(acc), Some(pg)) = (gram.as_mut(), part.gram.as_ref()) {
            *acc += pg;
        }
    }
    let inv_n = 1.0 / shard.n() as f64;
    z *= inv_n;
    g *= inv_n;
    let gram = gram.map(|mut m| {
        m *= inv_n;
        symmetrize(&mut m);
        m
    });
    if !(z.iter().all(|v| v.is_finite()) && g.iter().all(|v| v.is_finite())) {
        return Err(DhsqrError::NumericalFailure(
            "non-finite shard aggregate".into(),
        ));
    }
    Ok(PseudoAggregates {
        z,
        g,
        gram,
        n: shard.n(),
    })
}

/// `(1/n) Σ K_h(e_i) x_i x_iᵀ` alone, symmetrized.
pub fn kernel_gram_with(
    shard: &DatasetShard,
    beta: &CoefficientVector,
    h: f64,
    exec: Execution,
) -> Result<Array2<f64>> {
    check_bandwidth(h)?;
    let d = shard.x.ncols();
    ensure_len(d, beta.len())?;
    let chunks = par::row_chunks(shard.n());
    let partials = par::map_slice(exec, &chunks, |&(start, end)| {
        let xc = shard.x.slice(s![start..end, ..]);
        let yc = shard.y.slice(s![start..end]);
        let fitted = xc.dot(beta.as_array());
        let weights: Array1<f64> = yc
            .iter()
            .zip(fitted.iter())
            .map(|(&y, &f)| Gaussian.scaled(y - f, h))
            .collect();
        let weighted = &xc * &weights.view().insert_axis(Axis(1));
        weighted.t().dot(&xc)
    });
    let mut gram = Array2::<f64>::zeros((d, d));
    for part in partials {
        gram += &part;
    }
    gram *= 1.0 / shard.n() as f64;
    symmetrize(&mut gram);
    if !gram.iter().all(|v| v.is_finite()) {
        return Err(DhsqrError::NumericalFailure(
            "non-finite kernel Gram".into(),
        ));
    }
    Ok(gram)
}

fn symmetrize(m: &mut Array2<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

/// `vᵀ G v`.
pub fn gram_quadratic_form(gram: &Array2<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if gram.nrows() != gram.ncols() {
        return Err(DhsqrError::DimensionMismatch {
            expected: gram.nrows(),
            found: gram.ncols(),
        });
    }
    ensure_len(gram.nrows(), v.len())?;
    Ok(v.dot(&gram.dot(&v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gaussian_kernel;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn shard_from(x: Array2<f64>, y: Array1<f64>) -> DatasetShard {
        DatasetShard::new(0, x, y).unwrap()
    }

    #[test]
    fn pseudo_pair_worked_example() {
        let beta = CoefficientVector::zeros(2);
        let (xt, yt) = pseudo_pair(array![1.0, 2.0].view(), 0.5, &beta, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(xt[0], 0.59336, epsilon = 1e-5);
        assert_abs_diff_eq!(xt[1], 2.0 * xt[0], epsilon = 1e-15);
        let root = ((-0.125f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).sqrt();
        assert_abs_diff_eq!(xt[0], root, epsilon = 1e-14);
        assert_abs_diff_eq!(yt, 0.5 / root, epsilon = 1e-14);
        assert_abs_diff_eq!(yt, 0.84267, epsilon = 1e-5);
    }

    #[test]
    fn pseudo_pair_at_zero_residual() {
        let beta = CoefficientVector::from_vec(vec![0.5, 1.0]);
        let x = array![1.0, 2.0];
        let y = 2.5;
        let tau = 0.3;
        let h = 0.7;
        let (xt, yt) = pseudo_pair(x.view(), y, &beta, tau, h).unwrap();
        let root = (gaussian_kernel(0.0) / h).sqrt();
        assert_abs_diff_eq!(
            yt,
            xt.dot(beta.as_array()) - (1.0 - tau) / root,
            epsilon = 1e-14
        );
    }

    #[test]
    fn pseudo_pair_underflow() {
        let beta = CoefficientVector::zeros(2);
        let err = pseudo_pair(array![1.0, 1.0].view(), 100.0, &beta, 0.5, 1.0).unwrap_err();
        assert!(matches!(err, DhsqrError::KernelUnderflow { .. }));
    }

    #[test]
    fn zero_beta_kills_kernel_terms() {
        let x = array![[1.0, 0.3], [1.0, -1.2], [1.0, 2.0]];
        let y = array![0.5, -0.1, 0.0];
        let tau = 0.3;
        let agg = shard_aggregates(
            &shard_from(x.clone(), y.clone()),
            &CoefficientVector::zeros(2),
            tau,
            0.8,
            false,
        )
        .unwrap();
        assert!(agg.g.iter().all(|&v| v == 0.0));
        let mut expected = Array1::<f64>::zeros(2);
        for i in 0..3 {
            let ind = if y[i] <= 0.0 { 1.0 } else { 0.0 };
            expected.scaled_add(-(ind - tau) / 3.0, &x.row(i));
        }
        for j in 0..2 {
            assert_abs_diff_eq!(agg.z[j], expected[j], epsilon = 1e-15);
        }
        assert!(agg.gram.is_none());
    }

    #[test]
    fn one_row_matches_pseudo_pair() {
        let x = array![[1.0, 0.7, -0.4]];
        let y = array![1.3];
        let beta = CoefficientVector::from_vec(vec![0.2, 0.9, 0.1]);
        let (tau, h) = (0.6, 0.9);
        let agg = shard_aggregates(&shard_from(x.clone(), y.clone()), &beta, tau, h, true).unwrap();
        let (xt, yt) = pseudo_pair(x.row(0), y[0], &beta, tau, h).unwrap();
        let xtb = xt.dot(beta.as_array());
        for j in 0..3 {
            assert_abs_diff_eq!(agg.z[j], xt[j] * yt, epsilon = 1e-10);
            assert_abs_diff_eq!(agg.g[j], xt[j] * xtb, epsilon = 1e-10);
            for k in 0..3 {
                assert_abs_diff_eq!(
                    agg.gram.as_ref().unwrap()[[j, k]],
                    xt[j] * xt[k],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn quadratic_form_basics() {
        let eye = Array2::<f64>::eye(2);
        assert_eq!(
            gram_quadratic_form(&eye, array![0.0, 0.0].view()).unwrap(),
            0.0
        );
        assert_eq!(
            gram_quadratic_form(&eye, array![3.0, 4.0].view()).unwrap(),
            25.0
        );
        assert!(gram_quadratic_form(&eye, array![1.0].view()).is_err());
        assert!(gram_quadratic_form(&Array2::zeros((2, 3)), array![1.0, 1.0].view()).is_err());
    }

    #[test]
    fn bad_bandwidth_rejected() {
        let s = shard_from(array![[1.0, 0.0]], array![0.0]);
        assert!(shard_aggregates(&s, &CoefficientVector::zeros(2), 0.5, 0.0, false).is_err());
        assert!(shard_aggregates(&s, &CoefficientVector::zeros(3), 0.5, 1.0, false).is_err());
    }
}
