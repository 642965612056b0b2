use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Scalar excitation signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    /// Schroeder-phased multisine: `(A/√K) Σ_k cos(2πkt/T₀ + φ_k)`, `φ_k = −πk(k−1)/K`.
    Schroeder { amplitude: f64, harmonics: u32, period: f64 },
    /// `A · sin³(ωt)`.
    ValidationCube { amplitude: f64, angular_frequency: f64 },
    Constant { value: f64 },
    Sine { amplitude: f64, angular_frequency: f64, phase: f64 },
    /// Piecewise-linear interpolation through `(times, values)`, held constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Signal {
    pub fn schroeder(amplitude: f64, harmonics: u32, period: f64) -> Result<Self> {
        let s = Signal::Schroeder { amplitude, harmonics, period };
        s.validate()?;
        Ok(s)
    }

    /// `5 sin³(30 t)`.
    pub fn validation_cube() -> Self {
        Signal::ValidationCube { amplitude: 5.0, angular_frequency: 30.0 }
    }

    pub fn table(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let s = Signal::Table { times, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Signal::Schroeder { harmonics, period, .. } => {
                if *harmonics < 1 {
                    return Err(invalid("Schroeder signal needs at least one harmonic"));
                }
                if !(*period > 0.0) {
                    return Err(invalid("Schroeder period must be positive"));
                }
            }
            Signal::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(invalid("table signal needs equally many (non-zero) times and values"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("table times must be strictly increasing"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Signal::Schroeder { amplitude, harmonics, period } => {
                let k_h = *harmonics as f64;
                let sum: f64 = (1..=*harmonics)
                    .map(|k| {
                        let k = k as f64;
                        let phase = -PI * k * (k - 1.0) / k_h;
                        (2.0 * PI * k * t / period + phase).cos()
                    })
                    .sum();
                amplitude / k_h.sqrt() * sum
            }
            Signal::ValidationCube { amplitude, angular_frequency } => amplitude * (angular_frequency * t).sin().powi(3),
            Signal::Constant { value } => *value,
            Signal::Sine { amplitude, angular_frequency, phase } => amplitude * (angular_frequency * t + phase).sin(),
            Signal::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }
}

/// A source of the input vector `u(t)`.
pub trait InputSource {
    fn dim(&self) -> usize;
    fn input(&self, t: f64, u: &mut [f64]);
}

impl InputSource for Signal {
    fn dim(&self) -> usize {
        1
    }

    fn input(&self, t: f64, u: &mut [f64]) {
        u[0] = self.value(t);
    }
}

impl InputSource for [Signal] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn input(&self, t: f64, u: &mut [f64]) {
        for (s, v) in self.iter().zip(u.iter_mut()) {
            *v = s.value(t);
        }
    }
}

/// No inputs.
impl InputSource for () {
    fn dim(&self) -> usize {
        0
    }

    fn input(&self, _t: f64, _u: &mut [f64]) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crest(values: &[f64]) -> f64 {
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
        peak / rms
    }

    #[test]
    fn single_harmonic_is_cosine() {
        let s = Signal::schroeder(3.0, 1, 2.0).unwrap();
        for t in [0.0, 0.3, 1.1] {
            assert!((s.value(t) - 3.0 * (PI * t).cos()).abs() < 1e-12);
        }
        assert!(Signal::schroeder(1.0, 0, 1.0).is_err());
    }

    #[test]
    fn validation_cube_peak() {
        assert!((Signal::validation_cube().value(PI / 60.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn schroeder_crest_factor_beats_zero_phase() {
        let k = 16u32;
        let n = 20_000;
        let s = Signal::schroeder(1.0, k, 1.0).unwrap();
        let sch: Vec<f64> = (0..n).map(|i| s.value(i as f64 / n as f64)).collect();
        let zero: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (1..=k).map(|h| (2.0 * PI * h as f64 * t).cos()).sum::<f64>()
            })
            .collect();
        assert!(crest(&sch) < crest(&zero));
    }

    #[test]
    fn table_interpolates() {
        let s = Signal::table(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert_eq!(s.value(-1.0), 0.0);
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(2.0), 0.0);
        assert_eq!(s.value(9.0), -2.0);
        assert!(Signal::table(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
