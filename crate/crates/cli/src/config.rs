//! On-disk run configuration: oscillator constants plus exactly one way of
//! specifying the dissipation coefficients.

use damposc::params::{self, LindbladMicroParams, OscillatorParams, ValidationReport};
use damposc::Result;
use num_complex::Complex64;
use serde::Deserialize;

fn one() -> f64 {
    1.0
}

/// How the diffusion coefficients and friction rate are supplied.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSource {
    /// All four numbers given directly.
    Inline { lambda: f64, d_pp: f64, d_qq: f64, d_pq: f64 },
    /// Coefficients of a bath at temperature k_t (same units as hbar*omega).
    Thermal { lambda: f64, k_t: f64 },
    /// Complex coupling amplitudes as [re, im]; the friction rate is derived.
    Micro { a1: [f64; 2], b1: [f64; 2], a2: [f64; 2], b2: [f64; 2] },
}

/// Physics block of a run; scenario settings come from the command line.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    pub omega: f64,
    #[serde(default)]
    pub mu: f64,
    pub coefficients: CoefficientSource,
}

fn as_complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl FileConfig {
    /// Resolve the source down to (lambda, d_pp, d_qq, d_pq) without running
    /// the constraint checks, so a failing set can still be reported on.
    pub fn raw_coefficients(&self) -> Result<(f64, f64, f64, f64)> {
        match &self.coefficients {
            CoefficientSource::Inline { lambda, d_pp, d_qq, d_pq } => {
                Ok((*lambda, *d_pp, *d_qq, *d_pq))
            }
            CoefficientSource::Thermal { lambda, k_t } => {
                let (d_pp, d_qq, d_pq) = params::thermal_coefficients(
                    *lambda, self.mu, self.mass, self.omega, self.hbar, *k_t,
                )?;
                Ok((*lambda, d_pp, d_qq, d_pq))
            }
            CoefficientSource::Micro { a1, b1, a2, b2 } => {
                let micro = LindbladMicroParams {
                    a1: as_complex(*a1),
                    b1: as_complex(*b1),
                    a2: as_complex(*a2),
                    b2: as_complex(*b2),
                };
                let (d_pp, d_qq, d_pq, lambda) = params::from_micro(&micro, self.hbar)?;
                Ok((lambda, d_pp, d_qq, d_pq))
            }
        }
    }

    pub fn check(&self) -> Result<ValidationReport> {
        let (lambda, d_pp, d_qq, d_pq) = self.raw_coefficients()?;
        params::check_coefficients(self.hbar, lambda, d_pp, d_qq, d_pq)
    }

    pub fn params(&self) -> Result<OscillatorParams> {
        let (lambda, d_pp, d_qq, d_pq) = self.raw_coefficients()?;
        OscillatorParams::new(
            self.hbar, self.mass, self.omega, lambda, self.mu, d_pp, d_qq, d_pq,
        )
    }
}
