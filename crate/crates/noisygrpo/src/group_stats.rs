//! Group-wise normalization primitives shared by every advantage estimator.
//!
//! Two conventions are fixed here and relied on throughout the crate:
//! the standard deviation is the population form (divide by the group size),
//! and a group whose spread falls below [`DEGENERATE_STD`] normalizes to the
//! all-zero group instead of dividing by a vanishing denominator.

use crate::error::{Error, Result};

/// Spread threshold below which a group counts as constant.
pub const DEGENERATE_STD: f64 = 1e-8;

/// An ordered group of finite scalars. Groups always hold at least two
/// entries; the length never changes after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGroup {
    values: Vec<f64>,
}

impl ScalarGroup {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a group needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite group entry {bad}")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Arithmetic mean of the group.
pub fn group_mean(g: &ScalarGroup) -> f64 {
    mean_of(&g.values)
}

/// Population standard deviation of the group.
pub fn group_std(g: &ScalarGroup) -> f64 {
    let m = mean_of(&g.values);
    let var = g.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / g.values.len() as f64;
    var.sqrt()
}

/// Maps each entry to `(x - mean) / std`. A group with spread below
/// [`DEGENERATE_STD`] maps to all zeros.
///
/// The input is centered twice before scaling, which keeps the output mean
/// pinned near zero even when entries are large relative to their spread.
pub fn normalize(g: &ScalarGroup) -> ScalarGroup {
    let m = mean_of(&g.values);
    let mut centered: Vec<f64> = g.values.iter().map(|v| v - m).collect();
    let residual_mean = mean_of(&centered);
    for v in &mut centered {
        *v -= residual_mean;
    }
    let std = (centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64).sqrt();
    if std < DEGENERATE_STD {
        return ScalarGroup {
            values: vec![0.0; g.values.len()],
        };
    }
    for v in &mut centered {
        *v /= std;
    }
    ScalarGroup { values: centered }
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(values: &[f64]) -> ScalarGroup {
        ScalarGroup::new(values.to_vec()).unwrap()
    }

    #[test]
    fn mean_of_small_groups() {
        assert_eq!(group_mean(&group(&[1.0, 2.0, 3.0])), 2.0);
        assert_eq!(group_mean(&group(&[0.5, 0.5, 0.5, 0.5])), 0.5);
        assert_eq!(group_mean(&group(&[0.9, 0.6, 0.4, 0.1])), 0.5);
    }

    #[test]
    fn std_of_small_groups() {
        assert_eq!(group_std(&group(&[0.5, 0.5, 0.5, 0.5])), 0.0);
        assert!((group_std(&group(&[0.9, 0.6, 0.4, 0.1])) - 0.29154759474226505).abs() < 1e-12);
        assert!((group_std(&group(&[0.9, 0.7, 0.3, 0.1])) - 0.31622776601683794).abs() < 1e-12);
    }

    #[test]
    fn std_below_threshold_counts_as_degenerate() {
        let g = group(&[1.0, 1.0, 1.0 + 4e-9]);
        assert!(group_std(&g) < DEGENERATE_STD);
        assert_eq!(normalize(&g).values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_known_values() {
        let out = normalize(&group(&[1.0, 2.0, 3.0]));
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (got, want) in out.values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }

        let out = normalize(&group(&[0.9, 0.6, 0.4, 0.1]));
        let expect = [
            1.3719886811400706,
            0.3429971702850176,
            -0.3429971702850176,
            -1.3719886811400706,
        ];
        for (got, want) in out.values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn constant_groups_normalize_to_zero() {
        for c in [-3.5, 0.0, 0.25, 1e6] {
            let out = normalize(&group(&[c, c, c, c]));
            assert_eq!(out.values(), &[0.0; 4]);
        }
    }

    #[test]
    fn rejects_underfull_and_non_finite_groups() {
        assert!(ScalarGroup::new(vec![]).is_err());
        assert!(ScalarGroup::new(vec![1.0]).is_err());
        assert!(ScalarGroup::new(vec![1.0, f64::NAN]).is_err());
        assert!(ScalarGroup::new(vec![1.0, f64::INFINITY]).is_err());
    }

    proptest! {
        #[test]
        fn normalized_output_has_zero_mean_unit_std(
            values in proptest::collection::vec(-1e6f64..1e6, 2..40)
        ) {
            let g = ScalarGroup::new(values).unwrap();
            let out = normalize(&g);
            prop_assert!(group_mean(&out).abs() < 1e-9);
            if group_std(&g) >= DEGENERATE_STD {
                prop_assert!((group_std(&out) - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(out.values().iter().all(|v| *v == 0.0));
            }
        }

        #[test]
        fn normalize_is_idempotent(
            values in proptest::collection::vec(-1e3f64..1e3, 2..20)
        ) {
            let g = ScalarGroup::new(values).unwrap();
            let once = normalize(&g);
            let twice = normalize(&once);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn normalize_is_affine_invariant(
            values in proptest::collection::vec(-100.0f64..100.0, 2..20),
            a in 0.01f64..50.0,
            b in -50.0f64..50.0,
        ) {
            let g = ScalarGroup::new(values.clone()).unwrap();
            let shifted = ScalarGroup::new(values.iter().map(|v| a * v + b).collect()).unwrap();
            let lhs = normalize(&shifted);
            let rhs = normalize(&g);
            // The affine map can move a barely non-degenerate group across the
            // spread threshold; skip those borderline draws.
            prop_assume!(group_std(&g) > 10.0 * DEGENERATE_STD);
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn normalize_preserves_order(
            values in proptest::collection::vec(-100.0f64..100.0, 2..20)
        ) {
            let g = ScalarGroup::new(values.clone()).unwrap();
            let out = normalize(&g);
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(out.values()[i] <= out.values()[j]);
                    }
                }
            }
        }
    }
}
