use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-constant multiplier on the auxiliary losses. `initial` holds
/// for `t < breakpoints[0].step`; each breakpoint switches the value from
/// its step onward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub initial: f64,
    pub breakpoints: Vec<Breakpoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    pub step: u64,
    pub value: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            initial: 0.008,
            breakpoints: vec![
                Breakpoint {
                    step: 5000,
                    value: 0.025,
                },
                Breakpoint {
                    step: 15000,
                    value: 0.08,
                },
            ],
        }
    }
}

impl Schedule {
    pub fn alpha(&self, step: u64) -> f64 {
        self.breakpoints
            .iter()
            .take_while(|b| b.step <= step)
            .last()
            .map_or(self.initial, |b| b.value)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial.is_finite() || self.initial < 0.0 {
            return Err(Error::Config("schedule values must be finite and >= 0".into()));
        }
        for w in self.breakpoints.windows(2) {
            if w[0].step >= w[1].step {
                return Err(Error::Config(
                    "schedule breakpoints must have increasing steps".into(),
                ));
            }
        }
        if self
            .breakpoints
            .iter()
            .any(|b| !b.value.is_finite() || b.value < 0.0)
        {
            return Err(Error::Config("schedule values must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values_at_boundaries() {
        let s = Schedule::default();
        assert_eq!(s.alpha(0), 0.008);
        assert_eq!(s.alpha(4999), 0.008);
        assert_eq!(s.alpha(5000), 0.025);
        assert_eq!(s.alpha(14999), 0.025);
        assert_eq!(s.alpha(15000), 0.08);
        assert_eq!(s.alpha(150_000), 0.08);
    }

    #[test]
    fn unordered_breakpoints_rejected() {
        let mut s = Schedule::default();
        s.breakpoints.reverse();
        assert!(s.validate().is_err());
    }
}
