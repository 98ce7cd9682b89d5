//! Evaluation arithmetic: mean identification rates, relative improvement,
//! the two-sample t statistic with its pooled standard deviation, and
//! Cohen's kappa.

use std::fmt;

use crate::{Error, Result};

/// One-sided critical value at the 0.05 level (large-sample normal limit).
pub const T_CRITICAL_005: f64 = 1.645;

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("mean of no values".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument("standard deviation needs at least two values".into()));
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

/// Mean percentage rounded to two decimals.
pub fn mean_performance(values: &[f64]) -> Result<f64> {
    mean(values).map(round2)
}

/// `100 (biased - unbiased) / unbiased`, rounded to two decimals.
pub fn relative_improvement(biased_pct: f64, unbiased_pct: f64) -> Result<f64> {
    if unbiased_pct.is_nan() || unbiased_pct <= 0.0 {
        return Err(Error::InvalidArgument(format!("baseline {unbiased_pct} must be positive")));
    }
    Ok(round2(100.0 * (biased_pct - unbiased_pct) / unbiased_pct))
}

/// Means and standard deviations of two equally sized samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSampleSummary {
    pub mean1: f64,
    pub sd1: f64,
    pub mean2: f64,
    pub sd2: f64,
    pub n: usize,
}

impl TwoSampleSummary {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample size n is zero".into()));
        }
        if self.n < 2 || self.sd1.is_nan() || self.sd2.is_nan() || self.sd1 < 0.0 || self.sd2 < 0.0 {
            return Err(Error::InvalidArgument(format!("need n >= 2 and nonnegative SDs: {self:?}")));
        }
        Ok(())
    }

    pub fn swapped(&self) -> Self {
        TwoSampleSummary {
            mean1: self.mean2,
            sd1: self.sd2,
            mean2: self.mean1,
            sd2: self.sd1,
            n: self.n,
        }
    }
}

/// `sqrt((SD₁² + SD₂²) / n)`: both variances combined, then divided once by
/// the common sample size.
pub fn pooled_sd(s: &TwoSampleSummary) -> Result<f64> {
    s.validate()?;
    Ok(((s.sd1 * s.sd1 + s.sd2 * s.sd2) / s.n as f64).sqrt())
}

/// Textbook standard error of a difference of means with a pooled variance,
/// `sqrt(((n-1)SD₁² + (n-1)SD₂²) / (2n-2) · 2/n)`, for comparison with
/// [`pooled_sd`].
pub fn conventional_standard_error(s: &TwoSampleSummary) -> Result<f64> {
    s.validate()?;
    let n = s.n as f64;
    let pooled_var = ((n - 1.0) * s.sd1 * s.sd1 + (n - 1.0) * s.sd2 * s.sd2) / (2.0 * n - 2.0);
    Ok((pooled_var * 2.0 / n).sqrt())
}

pub fn t_statistic(s: &TwoSampleSummary) -> Result<f64> {
    let sd = pooled_sd(s)?;
    if sd == 0.0 {
        return Err(Error::Undefined("t statistic with zero pooled standard deviation".into()));
    }
    Ok((s.mean1 - s.mean2) / sd)
}

/// One-sided test `t > 1.645`.
pub fn significant_at_005(t: f64) -> bool {
    t > T_CRITICAL_005
}

/// Square count matrix; rows are reference labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion matrix must be square and nonempty".into()));
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(Error::InvalidArgument("confusion matrix has no counts".into()));
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Tallies paired labels in `0..labels`.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, labels: usize) -> Result<Self> {
        let mut counts = vec![vec![0u64; labels]; labels];
        for (r, p) in pairs {
            if r >= labels || p >= labels {
                return Err(Error::InvalidArgument(format!("label pair ({r}, {p}) outside 0..{labels}")));
            }
            counts[r][p] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// `κ = (p_o - p_e) / (1 - p_e)`.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total() as f64;
    let k = cm.counts.len();
    let trace: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
    let p_o = trace as f64 / total;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: u64 = cm.counts[i].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
            row as f64 * col as f64
        })
        .sum::<f64>()
        / (total * total);
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::Undefined("kappa with chance agreement 1".into()));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Landis-Koch agreement bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    pub fn label(self) -> &'static str {
        match self {
            KappaBand::Poor => "poor",
            KappaBand::Slight => "slight",
            KappaBand::Fair => "fair",
            KappaBand::Moderate => "moderate",
            KappaBand::Substantial => "substantial",
            KappaBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn kappa_band(kappa: f64) -> KappaBand {
    match kappa {
        k if k <= 0.0 => KappaBand::Poor,
        k if k <= 0.20 => KappaBand::Slight,
        k if k <= 0.40 => KappaBand::Fair,
        k if k <= 0.60 => KappaBand::Moderate,
        k if k <= 0.80 => KappaBand::Substantial,
        _ => KappaBand::AlmostPerfect,
    }
}

/// Note attached to kappa values in 0.30..=0.41, which some emotional-speech
/// literature calls "moderate" although Landis-Koch bands them as fair.
pub fn kappa_band_note(kappa: f64) -> Option<&'static str> {
    (0.30..=0.41)
        .contains(&kappa)
        .then_some("Landis-Koch: fair; values 0.30-0.41 are sometimes reported as moderate agreement")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn means() {
        assert_eq!(mean_performance(&[86.5, 64.5, 69.0, 73.0, 72.5, 73.0]).unwrap(), 73.08);
        assert_eq!(mean_performance(&[87.5, 77.0, 69.5, 75.5, 75.0, 76.0]).unwrap(), 76.75);
        assert_eq!(mean_performance(&[42.25]).unwrap(), 42.25);
        assert!(mean_performance(&[]).is_err());
    }

    #[test]
    fn improvements() {
        assert_eq!(relative_improvement(77.0, 64.5).unwrap(), 19.38);
        assert_eq!(relative_improvement(80.5, 69.0).unwrap(), 16.67);
        assert_eq!(relative_improvement(85.0, 72.5).unwrap(), 17.24);
        assert_eq!(relative_improvement(84.0, 73.0).unwrap(), 15.07);
        assert_eq!(relative_improvement(84.5, 73.0).unwrap(), 15.75);
        assert!(relative_improvement(50.0, 0.0).is_err());
    }

    fn summary(m1: f64, s1: f64, m2: f64, s2: f64, n: usize) -> TwoSampleSummary {
        TwoSampleSummary {
            mean1: m1,
            sd1: s1,
            mean2: m2,
            sd2: s2,
            n,
        }
    }

    #[test]
    fn pooled_sd_values() {
        assert_eq!(pooled_sd(&summary(1.0, 0.0, 1.0, 0.0, 10)).unwrap(), 0.0);
        assert!((pooled_sd(&summary(0.0, 3.0, 0.0, 4.0, 25)).unwrap() - 1.0).abs() < 1e-15);
        let oracle = ((7.36f64 * 7.36 + 8.25 * 8.25) / 180.0).sqrt();
        let got = pooled_sd(&summary(73.08, 7.36, 66.33, 8.25, 180)).unwrap();
        assert_eq!(got, oracle);
        assert!((got - 0.8241).abs() < 5e-5);
        assert!(pooled_sd(&summary(0.0, 1.0, 0.0, 1.0, 0)).is_err());
    }

    #[test]
    fn t_values() {
        let s = summary(73.08, 7.36, 66.33, 8.25, 180);
        let t = t_statistic(&s).unwrap();
        assert!((t - 8.191).abs() < 0.01, "{t}");
        assert_eq!(t_statistic(&s.swapped()).unwrap(), -t);
        assert_eq!(t_statistic(&summary(5.0, 1.0, 5.0, 2.0, 10)).unwrap(), 0.0);
        assert!(t_statistic(&summary(5.0, 0.0, 4.0, 0.0, 10)).is_err());
        assert!(conventional_standard_error(&s).unwrap() > 0.0);
    }

    #[test]
    fn significance() {
        assert!(significant_at_005(8.191));
        assert!(!significant_at_005(1.645));
        for t in [8.312, 8.911, 8.433, 8.001, 8.453] {
            assert!(significant_at_005(t));
        }
    }

    #[test]
    fn kappa_cases() {
        let cm = ConfusionMatrix::new(vec![vec![20, 5], vec![10, 15]]).unwrap();
        assert!((cohen_kappa(&cm).unwrap() - 0.4).abs() < 1e-12);
        let diag = ConfusionMatrix::new(vec![vec![7, 0, 0], vec![0, 3, 0], vec![0, 0, 9]]).unwrap();
        assert_eq!(cohen_kappa(&diag).unwrap(), 1.0);
        // Rows (2, 3) x columns (4, 1): products of marginals.
        let indep = ConfusionMatrix::new(vec![vec![8, 2], vec![12, 3]]).unwrap();
        assert!(cohen_kappa(&indep).unwrap().abs() < 1e-12);
        let one_cell = ConfusionMatrix::new(vec![vec![5, 0], vec![0, 0]]).unwrap();
        assert!(matches!(cohen_kappa(&one_cell), Err(Error::Undefined(_))));
        assert!(ConfusionMatrix::new(vec![vec![0, 0], vec![0, 0]]).is_err());
        assert!(ConfusionMatrix::from_pairs([(0, 2)], 2).is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(kappa_band(0.50), KappaBand::Moderate);
        assert_eq!(kappa_band(0.35), KappaBand::Fair);
        assert!(kappa_band_note(0.35).is_some());
        assert!(kappa_band_note(0.50).is_none());
        assert_eq!(kappa_band(1.0), KappaBand::AlmostPerfect);
        assert_eq!(kappa_band(-0.2), KappaBand::Poor);
        assert_eq!(kappa_band(0.2), KappaBand::Slight);
    }

    #[test]
    fn table_spreads_match_printed_sds() {
        let sphmm = [86.5, 64.5, 69.0, 73.0, 72.5, 73.0];
        let hmm = [81.5, 57.5, 61.0, 65.5, 67.5, 65.0];
        assert_eq!(round2(sample_sd(&sphmm).unwrap()), 7.36);
        assert_eq!(round2(sample_sd(&hmm).unwrap()), 8.25);
    }

    proptest! {
        #[test]
        fn pooled_sd_scaling(s1 in 0.0f64..50.0, s2 in 0.0f64..50.0, n in 2usize..500, c in 0.01f64..100.0) {
            let base = pooled_sd(&summary(0.0, s1, 0.0, s2, n)).unwrap();
            let scaled = pooled_sd(&summary(0.0, c * s1, 0.0, c * s2, n)).unwrap();
            prop_assert!((scaled - c * base).abs() <= 1e-9 * (1.0 + c * base));
            let quad = pooled_sd(&summary(0.0, s1, 0.0, s2, 4 * n)).unwrap();
            prop_assert!((quad - base / 2.0).abs() <= 1e-12 * (1.0 + base));
        }

        #[test]
        fn t_antisymmetric_and_monotone(m1 in 0.0f64..100.0, m2 in 0.0f64..100.0, s1 in 0.1f64..20.0, s2 in 0.1f64..20.0, n in 2usize..400, bump in 0.0f64..10.0) {
            let s = summary(m1, s1, m2, s2, n);
            let t = t_statistic(&s).unwrap();
            prop_assert_eq!(t_statistic(&s.swapped()).unwrap(), -t);
            let higher = t_statistic(&summary(m1 + bump, s1, m2, s2, n)).unwrap();
            prop_assert!(higher >= t);
            prop_assert!(significant_at_005(higher) >= significant_at_005(t));
        }

        #[test]
        fn kappa_range(counts in proptest::collection::vec(0u64..50, 9)) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let cm = ConfusionMatrix::new(counts.chunks(3).map(<[u64]>::to_vec).collect()).unwrap();
            if let Ok(k) = cohen_kappa(&cm) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
                let off: u64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| counts[i * 3 + j]).sum();
                prop_assert_eq!((k - 1.0).abs() < 1e-12, off == 0);
            }
        }
    }
}
