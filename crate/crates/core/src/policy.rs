//! Per-iteration interventions on agents' consumption rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Agents below a fraction of mean wealth have their consumption rate cut.
    CompulsorySaving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub wealth_threshold_frac: f64,
    pub consumption_cut_frac: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("wealth threshold fraction must lie in (0, 1), got {0}")]
    Threshold(f64),
    #[error("consumption cut fraction must lie in (0, 1), got {0}")]
    Cut(f64),
}

impl PolicySpec {
    pub fn compulsory_saving(wealth_threshold_frac: f64, consumption_cut_frac: f64) -> Self {
        PolicySpec {
            kind: PolicyKind::CompulsorySaving,
            wealth_threshold_frac,
            consumption_cut_frac,
        }
    }

    /// The 90% threshold / 20% cut rule.
    pub fn standard_compulsory_saving() -> Self {
        Self::compulsory_saving(0.9, 0.2)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.wealth_threshold_frac) {
            return Err(PolicyError::Threshold(self.wealth_threshold_frac));
        }
        if !open_unit(self.consumption_cut_frac) {
            return Err(PolicyError::Cut(self.consumption_cut_frac));
        }
        Ok(())
    }
}

/// Consumption rate actually used by an agent this iteration.
///
/// `mean_wealth` is the population mean at the start of the iteration and
/// `omega_i` the rate already drawn for the agent; the cut is applied fresh
/// each iteration and never compounds.
pub fn apply_policy(spec: &PolicySpec, w_i: f64, mean_wealth: f64, omega_i: f64) -> f64 {
    match spec.kind {
        PolicyKind::CompulsorySaving => {
            if w_i < spec.wealth_threshold_frac * mean_wealth {
                omega_i * (1.0 - spec.consumption_cut_frac)
            } else {
                omega_i
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn poor_agent_cuts_consumption() {
        let p = PolicySpec::standard_compulsory_saving();
        let got = apply_policy(&p, 500.0, 1000.0, 0.20);
        assert!((got - 0.16).abs() < 1e-15);
    }

    #[test]
    fn average_agent_unchanged() {
        let p = PolicySpec::standard_compulsory_saving();
        assert_eq!(apply_policy(&p, 1000.0, 1000.0, 0.20), 0.20);
    }

    #[test]
    fn threshold_is_strict() {
        let p = PolicySpec::standard_compulsory_saving();
        // 0.9 * 1000 is exactly representable as 900
        assert_eq!(apply_policy(&p, 900.0, 1000.0, 0.20), 0.20);
        assert!(apply_policy(&p, 899.999, 1000.0, 0.20) < 0.20);
    }

    #[test]
    fn validation() {
        assert!(PolicySpec::standard_compulsory_saving().validate().is_ok());
        assert_eq!(
            PolicySpec::compulsory_saving(1.0, 0.2).validate(),
            Err(PolicyError::Threshold(1.0))
        );
        assert_eq!(
            PolicySpec::compulsory_saving(0.5, 0.0).validate(),
            Err(PolicyError::Cut(0.0))
        );
    }

    proptest! {
        #[test]
        fn never_increases_consumption(
            w in 0.0f64..1e6, mean in 1e-3f64..1e6, omega in 1e-6f64..1.0,
            thr in 0.01f64..0.99, cut in 0.01f64..0.99,
        ) {
            let p = PolicySpec::compulsory_saving(thr, cut);
            prop_assert!(apply_policy(&p, w, mean, omega) <= omega);
        }
    }
}
