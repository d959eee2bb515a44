//! Statistical checks over estimator outputs: residual extraction, normality
//! tests, and noise/correctness summaries.
//!
//! The fusion step treats the group-normalized reward and the noise-derived
//! prior as two Gaussian measurements of the same latent quality. Whether that
//! treatment is defensible on real data is an empirical question, so this
//! module provides the machinery to ask it: pool the disagreement residuals
//! between the signals, test them for normality, and tabulate how correctness
//! varies with injected noise.

use crate::advantage::{AdvantageReport, EstimatorMode, RewardedGroup};
use crate::error::{Error, Result};
use crate::group_stats::{normalize, ScalarGroup};
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Which disagreement signal to pool out of a batch of advantage reports.
///
/// `ObsMinusPrior` is the gap between what the rewards say and what the noise
/// levels predicted. `PostMinusObs` is the correction the fusion applied on
/// top of the observed rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    ObsMinusPrior,
    PostMinusObs,
}

impl ResidualKind {
    pub fn label(&self) -> &'static str {
        match self {
            ResidualKind::ObsMinusPrior => "obs_minus_prior",
            ResidualKind::PostMinusObs => "post_minus_obs",
        }
    }
}

/// Where a residual pool came from, so exported tables stay traceable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub run_id: String,
    pub first_iteration: usize,
    pub last_iteration: usize,
}

/// A flat pool of residuals gathered across groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub kind: ResidualKind,
    pub values: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl ResidualSet {
    pub fn with_provenance(
        mut self,
        run_id: impl Into<String>,
        first_iteration: usize,
        last_iteration: usize,
    ) -> Self {
        self.provenance = Some(Provenance {
            run_id: run_id.into(),
            first_iteration,
            last_iteration,
        });
        self
    }
}

/// Pools entrywise residuals from a batch of advantage reports.
///
/// Vanilla reports carry no prior signal, so their presence is an input
/// error rather than a silent skip.
pub fn collect_residuals(reports: &[AdvantageReport], kind: ResidualKind) -> Result<ResidualSet> {
    if reports.is_empty() {
        return Err(Error::invalid("residual pooling needs at least one report"));
    }
    let mut values = Vec::new();
    for (index, report) in reports.iter().enumerate() {
        if report.mode == EstimatorMode::VanillaGrpo {
            return Err(Error::invalid(format!(
                "report {index} comes from a vanilla run, which records no prior signal"
            )));
        }
        match kind {
            ResidualKind::ObsMinusPrior => {
                for (obs, prior) in report.obs_normed.iter().zip(&report.prior_normed) {
                    values.push(obs - prior);
                }
            }
            ResidualKind::PostMinusObs => {
                for (post, obs) in report.posterior.iter().zip(&report.obs_normed) {
                    values.push(post - obs);
                }
            }
        }
    }
    Ok(ResidualSet {
        kind,
        values,
        provenance: None,
    })
}

const SHAPIRO_MAX_N: usize = 5000;

/// Shapiro-Wilk normality test via Royston's approximation, valid for
/// 3 <= n <= 5000. Returns (W, p).
pub fn shapiro_wilk(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if !(3..=SHAPIRO_MAX_N).contains(&n) {
        return Err(Error::invalid(format!(
            "Shapiro-Wilk needs between 3 and {SHAPIRO_MAX_N} values, got {n}"
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample value {bad}")));
    }
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    if x[n - 1] == x[0] {
        return Err(Error::invalid(
            "Shapiro-Wilk is undefined for a constant sample",
        ));
    }

    let std_normal = Normal::standard();
    let nf = n as f64;
    let m: Vec<f64> = (1..=n)
        .map(|i| std_normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let m_sum_sq: f64 = m.iter().map(|v| v * v).sum();

    let mut a = vec![0.0; n];
    if n == 3 {
        let c = 0.5_f64.sqrt();
        a[0] = -c;
        a[2] = c;
    } else {
        // Royston's polynomial corrections to the two (or one) extreme
        // expected-order-statistic weights, in 1/sqrt(n).
        let u = 1.0 / nf.sqrt();
        let root = m_sum_sq.sqrt();
        let a_last = -2.706056 * u.powi(5) + 4.434685 * u.powi(4) - 2.071190 * u.powi(3)
            - 0.147981 * u.powi(2)
            + 0.221157 * u
            + m[n - 1] / root;
        if n > 5 {
            let a_second = -3.582633 * u.powi(5) + 5.682633 * u.powi(4)
                - 1.752461 * u.powi(3)
                - 0.293762 * u.powi(2)
                + 0.042981 * u
                + m[n - 2] / root;
            let phi = (m_sum_sq
                - 2.0 * m[n - 1] * m[n - 1]
                - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * a_last * a_last - 2.0 * a_second * a_second);
            let scale = phi.sqrt();
            for i in 2..n - 2 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = a_last;
            a[0] = -a_last;
            a[n - 2] = a_second;
            a[1] = -a_second;
        } else {
            let phi = (m_sum_sq - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_last * a_last);
            let scale = phi.sqrt();
            for i in 1..n - 1 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = a_last;
            a[0] = -a_last;
        }
    }

    let mean = x.iter().sum::<f64>() / nf;
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let num = a
        .iter()
        .zip(&x)
        .map(|(ai, xi)| ai * xi)
        .sum::<f64>()
        .powi(2);
    let w = (num / denom).min(1.0);

    let p = if n == 3 {
        let pi = std::f64::consts::PI;
        ((6.0 / pi) * (w.sqrt().asin() - pi / 3.0)).clamp(0.0, 1.0)
    } else if n <= 11 {
        let gamma = -2.273 + 0.459 * nf;
        let arg = gamma - (1.0 - w).ln();
        if arg <= 0.0 {
            0.0
        } else {
            let w1 = -arg.ln();
            let mu = 0.5440 - 0.39978 * nf + 0.025054 * nf * nf - 0.0006714 * nf * nf * nf;
            let sigma = (1.3822 - 0.77857 * nf + 0.062767 * nf * nf - 0.0020322 * nf * nf * nf).exp();
            (1.0 - std_normal.cdf((w1 - mu) / sigma)).clamp(0.0, 1.0)
        }
    } else {
        let ln_n = nf.ln();
        let w1 = (1.0 - w).ln();
        let mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n + 0.0038915 * ln_n * ln_n * ln_n;
        let sigma = (-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n).exp();
        (1.0 - std_normal.cdf((w1 - mu) / sigma)).clamp(0.0, 1.0)
    };

    Ok((w, p))
}

/// Shapiro-Wilk over pools of any size: samples above the statistic's 5000
/// value ceiling are thinned to it by a seeded draw without replacement.
pub fn shapiro_wilk_capped(values: &[f64], seed: u64) -> Result<(f64, f64)> {
    if values.len() <= SHAPIRO_MAX_N {
        return shapiro_wilk(values);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index_sample(&mut rng, values.len(), SHAPIRO_MAX_N);
    let subsample: Vec<f64> = picked.iter().map(|i| values[i]).collect();
    shapiro_wilk(&subsample)
}

/// One-sample Kolmogorov-Smirnov test of a sample against a Gaussian
/// reference. Returns (D, p) with D the exact supremum distance between the
/// empirical CDF and the reference CDF, evaluated on both sides of every
/// step, and p from the asymptotic Kolmogorov distribution.
pub fn kolmogorov_smirnov(values: &[f64], mean: f64, variance: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("Kolmogorov-Smirnov needs at least one value"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample value {bad}")));
    }
    if !mean.is_finite() {
        return Err(Error::invalid(format!("non-finite reference mean {mean}")));
    }
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(format!(
            "reference variance must be positive and finite, got {variance}"
        )));
    }
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let reference = Normal::new(mean, variance.sqrt()).expect("validated parameters");

    let mut d = 0.0_f64;
    for (i, xi) in x.iter().enumerate() {
        let f = reference.cdf(*xi);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok((d, kolmogorov_survival(n.sqrt() * d)))
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
///
/// Uses the theta-series form of the CDF for small lambda (where the
/// alternating tail series converges too slowly) and the alternating series
/// otherwise; the branch point keeps both sides accurate to ~1e-15.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let pi = std::f64::consts::PI;
    if lambda < 1.18 {
        let t = -pi * pi / (8.0 * lambda * lambda);
        let mut cdf_sum = 0.0;
        for j in 1..=20_u32 {
            let odd = (2 * j - 1) as f64;
            let term = (t * odd * odd).exp();
            cdf_sum += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * pi).sqrt() / lambda * cdf_sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100_u32 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            sum += sign * term;
            sign = -sign;
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Per-decile means of raw and group-normalized rewards, keyed by the noise
/// level each rollout was generated under. Only populated deciles appear.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCorrectnessBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_raw: f64,
    pub mean_normalized: f64,
}

pub fn noise_correctness_summary(groups: &[RewardedGroup]) -> Result<Vec<NoiseCorrectnessBin>> {
    if groups.is_empty() {
        return Err(Error::invalid("summary needs at least one group"));
    }
    let mut counts = [0usize; 10];
    let mut raw_sums = [0.0f64; 10];
    let mut norm_sums = [0.0f64; 10];
    for group in groups {
        let scalar = ScalarGroup::new(group.semantic_rewards().to_vec())
            .expect("group invariants already guarantee a valid scalar group");
        let normalized = normalize(&scalar);
        for ((level, raw), norm) in group
            .noise_levels()
            .iter()
            .zip(group.semantic_rewards())
            .zip(normalized.values())
        {
            let bin = ((level * 10.0).floor() as usize).min(9);
            counts[bin] += 1;
            raw_sums[bin] += raw;
            norm_sums[bin] += norm;
        }
    }
    Ok((0..10)
        .filter(|&b| counts[b] > 0)
        .map(|b| NoiseCorrectnessBin {
            lo: b as f64 / 10.0,
            hi: (b + 1) as f64 / 10.0,
            count: counts[b],
            mean_raw: raw_sums[b] / counts[b] as f64,
            mean_normalized: norm_sums[b] / counts[b] as f64,
        })
        .collect())
}

/// Sorted (theoretical standard-normal quantile, sample quantile) pairs for
/// Q-Q export, using Blom plotting positions.
pub fn qq_pairs(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::invalid("Q-Q pairing needs at least one value"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample value {bad}")));
    }
    let mut x = values.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    let n = x.len() as f64;
    let std_normal = Normal::standard();
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| {
            let position = (i as f64 + 1.0 - 0.375) / (n + 0.25);
            (std_normal.inverse_cdf(position), *xi)
        })
        .collect())
}

/// Equal-width histogram over the sample range; the top bin is closed so the
/// maximum lands inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub fn histogram(values: &[f64], num_bins: usize) -> Result<Vec<HistogramBin>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram needs at least one value"));
    }
    if num_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample value {bad}")));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / num_bins as f64;
    let mut counts = vec![0usize; num_bins];
    for v in values {
        let idx = if width == 0.0 {
            0
        } else {
            (((v - lo) / width).floor() as usize).min(num_bins - 1)
        };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == num_bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count,
        })
        .collect())
}
