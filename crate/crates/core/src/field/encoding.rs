use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sinusoidal coordinate encoding applied at two coordinate scales, one per
/// network branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    pub num_frequencies: usize,
    pub scales: Vec<f64>,
    pub include_input: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            num_frequencies: 10,
            scales: vec![1.0, 2.0],
            include_input: true,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.len() != 2 {
            return Err(Error::Config(format!(
                "encoding needs exactly two scales, got {:?}",
                self.scales
            )));
        }
        if self.scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Config(format!(
                "encoding scales must be positive, got {:?}",
                self.scales
            )));
        }
        Ok(())
    }

    /// Encoded width for one scale of a 3-vector.
    pub fn dim(&self) -> usize {
        encoded_dim(self.num_frequencies, self.include_input)
    }

    /// The two scale blocks for `position`, in branch order.
    pub fn encode(&self, position: [f64; 3]) -> [Vec<f64>; 2] {
        [
            encode(position, self.num_frequencies, self.scales[0], self.include_input),
            encode(position, self.num_frequencies, self.scales[1], self.include_input),
        ]
    }
}

pub fn encoded_dim(num_frequencies: usize, include_input: bool) -> usize {
    3 * usize::from(include_input) + 6 * num_frequencies
}

/// `[x·s, sin(2^0 π x s), cos(2^0 π x s), …, sin(2^{L-1} π x s), cos(…)]`,
/// each entry a 3-vector.
pub fn encode(x: [f64; 3], num_frequencies: usize, scale: f64, include_input: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_dim(num_frequencies, include_input));
    encode_into(x, num_frequencies, scale, include_input, &mut out);
    out
}

pub(crate) fn encode_into(
    x: [f64; 3],
    num_frequencies: usize,
    scale: f64,
    include_input: bool,
    out: &mut Vec<f64>,
) {
    let xs = x.map(|c| c * scale);
    if include_input {
        out.extend_from_slice(&xs);
    }
    if num_frequencies == 0 {
        return;
    }
    // Octave k+1 from octave k by the double-angle identities.
    let mut sin = xs.map(|c| (PI * c).sin());
    let mut cos = xs.map(|c| (PI * c).cos());
    for k in 0..num_frequencies {
        if k > 0 {
            for c in 0..3 {
                let (s, co) = (sin[c], cos[c]);
                sin[c] = 2.0 * s * co;
                cos[c] = (co - s) * (co + s);
            }
        }
        out.extend_from_slice(&sin);
        out.extend_from_slice(&cos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encodes_to_zero_sines_and_unit_cosines() {
        let e = encode([0.0; 3], 10, 1.0, false);
        for k in 0..10 {
            assert!(e[6 * k..6 * k + 3].iter().all(|&v| v == 0.0));
            assert!(e[6 * k + 3..6 * k + 6].iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn single_frequency_layout() {
        let x = [0.25, -0.5, 0.1];
        let e = encode(x, 1, 1.0, true);
        assert_eq!(e.len(), 9);
        for c in 0..3 {
            assert_eq!(e[c], x[c]);
            assert_eq!(e[3 + c], (PI * x[c]).sin());
            assert_eq!(e[6 + c], (PI * x[c]).cos());
        }
    }

    #[test]
    fn matches_direct_evaluation() {
        let x = [0.731, -1.29, 1.4999];
        let e = encode(x, 10, 2.0, false);
        for k in 0..10 {
            let f = PI * 2f64.powi(k as i32) * 2.0;
            for c in 0..3 {
                assert!((e[6 * k + c] - (f * x[c]).sin()).abs() < 1e-11);
                assert!((e[6 * k + 3 + c] - (f * x[c]).cos()).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn dimension_for_ten_frequencies() {
        assert_eq!(encoded_dim(10, true), 3 + 3 * 2 * 10);
        assert_eq!(encode([0.3, 0.2, 0.1], 10, 1.0, true).len(), 63);
    }

    #[test]
    fn second_scale_doubles_the_coordinate() {
        let cfg = EncodingConfig::default();
        let [a, b] = cfg.encode([0.1, 0.2, 0.3]);
        assert_eq!(b[..3], [0.2, 0.4, 0.6]);
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn rejects_wrong_scale_count() {
        let cfg = EncodingConfig {
            scales: vec![1.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
