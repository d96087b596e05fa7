//! Smoothing kernels and bandwidth schedules.

use crate::error::{DhsqrError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A symmetric, non-negative density on ℝ that integrates to one.
pub trait Kernel: Send + Sync {
    fn density(&self, u: f64) -> f64;

    /// `K(u/h)/h`. The caller guarantees `h > 0`.
    fn scaled(&self, u: f64, h: f64) -> f64 {
        self.density(u / h) / h
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Gaussian;

impl Kernel for Gaussian {
    #[inline]
    fn density(&self, u: f64) -> f64 {
        gaussian_kernel(u)
    }
}

#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `K_h(u) = K(u/h)/h` for the Gaussian kernel.
pub fn scaled_kernel(u: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    Ok(Gaussian.scaled(u, h))
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(DhsqrError::Domain(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

/// Which denominator the global bandwidth uses.
///
/// `Simulation` computes `h = c_h·(s·ln N / n)^{1/3}`, the default for
/// finite-sample work; `Theorem` computes the asymptotic rate
/// `h = c_h·(s·ln N / N)^{1/3}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BandwidthRule {
    #[default]
    Simulation,
    Theorem,
}

/// Global bandwidth `h` (gradient side) and local bandwidth `b` (the central
/// machine's Hessian surrogate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPlan {
    pub c_h: f64,
    pub c_b: f64,
    pub s_eff: usize,
    pub n_total: usize,
    pub n_local: usize,
    pub rule: BandwidthRule,
    /// Use `b = h`. Set for the pooled single-machine estimator.
    pub tie_local_to_global: bool,
}

impl BandwidthPlan {
    pub const DEFAULT_C_H: f64 = 5.0;
    pub const DEFAULT_C_B: f64 = 0.53;

    pub fn new(s_eff: usize, n_total: usize, n_local: usize) -> Self {
        BandwidthPlan {
            c_h: Self::DEFAULT_C_H,
            c_b: Self::DEFAULT_C_B,
            s_eff,
            n_total,
            n_local,
            rule: BandwidthRule::Simulation,
            tie_local_to_global: false,
        }
    }

    pub fn with_constants(mut self, c_h: f64, c_b: f64) -> Self {
        self.c_h = c_h;
        self.c_b = c_b;
        self
    }

    pub fn with_rule(mut self, rule: BandwidthRule) -> Self {
        self.rule = rule;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.c_h > 0.0 && self.c_b > 0.0 && self.c_h.is_finite() && self.c_b.is_finite()) {
            return Err(DhsqrError::Config(
                "bandwidth constants must be positive".into(),
            ));
        }
        if self.s_eff == 0 {
            return Err(DhsqrError::Config(
                "effective sparsity must be at least 1".into(),
            ));
        }
        if self.n_local < 2 || self.n_total < self.n_local {
            return Err(DhsqrError::Config(format!(
                "need n >= 2 and N >= n, got N={}, n={}",
                self.n_total, self.n_local
            )));
        }
        Ok(())
    }

    pub fn global_bandwidth(&self) -> Result<f64> {
        self.validate()?;
        let s = self.s_eff as f64;
        let big_n = self.n_total as f64;
        let denom = match self.rule {
            BandwidthRule::Simulation => self.n_local as f64,
            BandwidthRule::Theorem => big_n,
        };
        Ok(self.c_h * (s * big_n.ln() / denom).cbrt())
    }

    pub fn local_bandwidth(&self) -> Result<f64> {
        if self.tie_local_to_global {
            return self.global_bandwidth();
        }
        self.validate()?;
        let s = self.s_eff as f64;
        let n = self.n_local as f64;
        Ok(self.c_b * (s * n.ln() / n).cbrt())
    }

    /// Both bandwidths; logs a warning when `b < h`.
    pub fn resolve(&self) -> Result<(f64, f64)> {
        let h = self.global_bandwidth()?;
        let b = self.local_bandwidth()?;
        if b < h {
            log::debug!("local bandwidth b={b:.4} is below global bandwidth h={h:.4}");
        }
        Ok((h, b))
    }
}

/// Support size of an estimate, floored at one, for use as `s_eff` when the
/// true sparsity is unknown.
pub fn sparsity_estimate(beta: &crate::CoefficientVector, zero_tol: f64) -> usize {
    beta.support(zero_tol).len().max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_values() {
        assert_abs_diff_eq!(gaussian_kernel(0.0), 0.398_942_280_4, epsilon = 1e-10);
        assert_eq!(gaussian_kernel(1.3), gaussian_kernel(-1.3));
        assert!(gaussian_kernel(40.0) >= 0.0);
        assert!(gaussian_kernel(1e300).is_finite());
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let step = 1e-3;
        let n = 16_000;
        let mut total = 0.0;
        for i in 0..=n {
            let u = -8.0 + i as f64 * step;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * gaussian_kernel(u);
        }
        assert_abs_diff_eq!(total * step, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn scaled_values() {
        assert_abs_diff_eq!(
            scaled_kernel(0.0, 2.0).unwrap(),
            0.199_471_14,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            scaled_kernel(1.0, 0.5).unwrap(),
            0.107_981_93,
            epsilon = 1e-8
        );
        for u in [-3.0, -0.2, 0.0, 1.7] {
            assert_eq!(scaled_kernel(u, 1.0).unwrap(), gaussian_kernel(u));
        }
        assert!(scaled_kernel(1.0, 0.0).is_err());
        assert!(scaled_kernel(1.0, -1.0).is_err());
    }

    #[test]
    fn bandwidths_follow_formulas() {
        let plan = BandwidthPlan::new(5, 20_000, 500);
        let h = plan.global_bandwidth().unwrap();
        let b = plan.local_bandwidth().unwrap();
        assert_abs_diff_eq!(
            h,
            5.0 * (5.0 * 20_000f64.ln() / 500.0).cbrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(h, 2.3133, epsilon = 1e-3);
        assert_abs_diff_eq!(b, 0.2100, epsilon = 1e-3);

        let thm = plan
            .with_rule(BandwidthRule::Theorem)
            .global_bandwidth()
            .unwrap();
        assert_abs_diff_eq!(
            thm,
            5.0 * (5.0 * 20_000f64.ln() / 20_000.0).cbrt(),
            epsilon = 1e-12
        );

        let same = BandwidthPlan::new(3, 800, 800).with_constants(2.0, 2.0);
        let ratio = same.global_bandwidth().unwrap() / same.local_bandwidth().unwrap();
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-15);
        let odd = BandwidthPlan::new(3, 800, 800).with_constants(3.0, 1.5);
        let ratio = odd.global_bandwidth().unwrap() / odd.local_bandwidth().unwrap();
        assert_abs_diff_eq!(ratio, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn bandwidths_decrease_in_n() {
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for n in [3usize, 5, 10, 50, 100, 500, 1000, 5000] {
            let plan = BandwidthPlan::new(5, 10_000, n);
            let cur = (
                plan.global_bandwidth().unwrap(),
                plan.local_bandwidth().unwrap(),
            );
            assert!(cur.0 < prev.0 && cur.1 < prev.1, "n={n}");
            prev = cur;
        }
    }

    #[test]
    fn bandwidth_config_errors() {
        assert!(BandwidthPlan::new(0, 100, 10).global_bandwidth().is_err());
        assert!(BandwidthPlan::new(1, 100, 1).global_bandwidth().is_err());
        assert!(BandwidthPlan::new(1, 10, 100).local_bandwidth().is_err());
        assert!(BandwidthPlan::new(1, 100, 10)
            .with_constants(0.0, 1.0)
            .global_bandwidth()
            .is_err());
    }

    #[test]
    fn tied_plan_reuses_global() {
        let mut plan = BandwidthPlan::new(5, 2000, 2000);
        plan.tie_local_to_global = true;
        let (h, b) = plan.resolve().unwrap();
        assert_eq!(h, b);
    }
}
