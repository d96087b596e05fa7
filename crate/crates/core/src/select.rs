//! Picking a grid point from held-out check losses.

use ndarray::Array1;

/// Per-row validation losses of one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationScore {
    pub losses: Array1<f64>,
    pub mean: f64,
    pub std_err: f64,
}

impl ValidationScore {
    pub fn from_losses(losses: Array1<f64>) -> Self {
        let (mean, std_err) = mean_and_se(losses.iter().copied());
        ValidationScore {
            losses,
            mean,
            std_err,
        }
    }

    /// Stand-in for a candidate that failed; never preferred.
    pub fn failed() -> Self {
        ValidationScore {
            losses: Array1::zeros(0),
            mean: f64::INFINITY,
            std_err: 0.0,
        }
    }

    fn usable(&self) -> bool {
        self.mean.is_finite()
    }

    /// Whether the per-row loss differences to `other` have mean within one
    /// standard error of zero (or below it).
    pub fn not_worse_than(&self, other: &ValidationScore) -> bool {
        if !self.usable() || self.losses.len() != other.losses.len() {
            return false;
        }
        let (d, se) = mean_and_se(
            self.losses
                .iter()
                .zip(other.losses.iter())
                .map(|(x, y)| x - y),
        );
        d <= se
    }
}

fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Index of the lowest mean loss; ties go to the earlier (larger λ) entry.
pub fn best_mean(scores: &[ValidationScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if !s.usable() {
            continue;
        }
        if best.is_none_or(|b| s.mean < scores[b].mean) {
            best = Some(i);
        }
    }
    best
}

/// How a grid point is picked from validation scores.
///
/// Scores are ordered from the largest λ to the smallest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// Lowest mean loss.
    #[default]
    MinLoss,
    /// Largest λ within one standard error of the best mean.
    OneStdErr,
    /// Largest λ whose per-row loss difference to the best candidate
    /// has mean within one standard error of zero.
    PairedStdErr,
}

impl SelectionRule {
    pub fn pick(self, scores: &[ValidationScore]) -> Option<usize> {
        let best = best_mean(scores)?;
        let b = &scores[best];
        match self {
            SelectionRule::MinLoss => Some(best),
            SelectionRule::OneStdErr => scores
                .iter()
                .position(|s| s.usable() && s.mean <= b.mean + b.std_err),
            SelectionRule::PairedStdErr => scores[..best]
                .iter()
                .position(|s| s.not_worse_than(b))
                .or(Some(best)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sc(v: Array1<f64>) -> ValidationScore {
        ValidationScore::from_losses(v)
    }

    #[test]
    fn mean_and_standard_error() {
        let s = sc(array![1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.std_err, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert_eq!(sc(array![7.0]).std_err, 0.0);
    }

    #[test]
    fn rules() {
        let s = [
            sc(array![3.0, 3.0]),
            sc(array![1.2, 1.2]),
            sc(array![1.0, 1.0]),
            sc(array![1.0, 1.0]),
        ];
        assert_eq!(SelectionRule::MinLoss.pick(&s), Some(2));
        assert_eq!(SelectionRule::OneStdErr.pick(&s), Some(2));
        assert_eq!(SelectionRule::PairedStdErr.pick(&s), Some(2));

        // noisy rows: marginal SE is wide, paired SE is not
        let s = [
            sc(array![0.0, 10.2]),
            sc(array![0.1, 9.8]),
            sc(array![-0.1, 9.9]),
        ];
        assert_eq!(SelectionRule::MinLoss.pick(&s), Some(2));
        assert_eq!(SelectionRule::OneStdErr.pick(&s), Some(0));
        assert_eq!(SelectionRule::PairedStdErr.pick(&s), Some(1));

        assert_eq!(SelectionRule::MinLoss.pick(&[]), None);
        assert_eq!(
            SelectionRule::PairedStdErr.pick(&[ValidationScore::failed(), sc(array![1.0])]),
            Some(1)
        );
    }
}
