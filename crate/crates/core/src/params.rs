//! Physical parameters of the damped oscillator, derived rate coefficients,
//! and the positivity constraints that gate every other module.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative slack absorbing rounding when derived coefficients are checked
/// against the uncertainty-product bound.
const CONSTRAINT_SLACK: f64 = 1e-12;

/// Outcome of a single inequality check. `margin` is the amount by which the
/// inequality holds (negative when violated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub passed: bool,
    pub margin: f64,
}

/// Per-constraint pass/fail breakdown for a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// d_pp > 0
    pub momentum_diffusion_positive: ConstraintCheck,
    /// d_qq > 0
    pub position_diffusion_positive: ConstraintCheck,
    /// d_pp d_qq - d_pq^2 >= lambda^2 hbar^2 / 4
    pub uncertainty_product: ConstraintCheck,
    /// lambda > 0
    pub friction_positive: ConstraintCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.momentum_diffusion_positive.passed
            && self.position_diffusion_positive.passed
            && self.uncertainty_product.passed
            && self.friction_positive.passed
    }

    /// Names of the violated constraints, for error messages.
    pub fn violated(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.momentum_diffusion_positive.passed {
            out.push("momentum diffusion must be positive");
        }
        if !self.position_diffusion_positive.passed {
            out.push("position diffusion must be positive");
        }
        if !self.uncertainty_product.passed {
            out.push("diffusion product minus cross term must dominate (lambda hbar / 2)^2");
        }
        if !self.friction_positive.passed {
            out.push("friction must be positive");
        }
        out
    }
}

/// Check the diffusion/friction inequalities on raw coefficient values.
/// This is usable before an `OscillatorParams` exists, so rejected inputs can
/// still be reported constraint by constraint.
pub fn check_coefficients(
    hbar: f64,
    lambda: f64,
    d_pp: f64,
    d_qq: f64,
    d_pq: f64,
) -> Result<ValidationReport> {
    for (name, v) in [
        ("hbar", hbar),
        ("lambda", lambda),
        ("d_pp", d_pp),
        ("d_qq", d_qq),
        ("d_pq", d_pq),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} is not finite: {v}")));
        }
    }
    let product = d_pp * d_qq - d_pq * d_pq;
    let bound = 0.25 * lambda * lambda * hbar * hbar;
    let slack = CONSTRAINT_SLACK * product.abs().max(bound.abs()).max(f64::MIN_POSITIVE);
    Ok(ValidationReport {
        momentum_diffusion_positive: ConstraintCheck { passed: d_pp > 0.0, margin: d_pp },
        position_diffusion_positive: ConstraintCheck { passed: d_qq > 0.0, margin: d_qq },
        uncertainty_product: ConstraintCheck {
            passed: product - bound >= -slack,
            margin: product - bound,
        },
        friction_positive: ConstraintCheck { passed: lambda > 0.0, margin: lambda },
    })
}

/// All physical constants and rates of the model. Construction enforces the
/// constraints; instances are immutable afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    hbar: f64,
    mass: f64,
    omega: f64,
    lambda: f64,
    mu: f64,
    d_pp: f64,
    d_qq: f64,
    d_pq: f64,
}

impl OscillatorParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hbar: f64,
        mass: f64,
        omega: f64,
        lambda: f64,
        mu: f64,
        d_pp: f64,
        d_qq: f64,
        d_pq: f64,
    ) -> Result<Self> {
        for (name, v) in [("mass", mass), ("omega", omega), ("mu", mu)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} is not finite: {v}")));
            }
        }
        if hbar.is_finite() && hbar <= 0.0 {
            return Err(Error::InvalidInput(format!("hbar must be positive, got {hbar}")));
        }
        if mass <= 0.0 {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        if omega <= 0.0 {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        if mu < 0.0 {
            return Err(Error::InvalidInput(format!("mu must be nonnegative, got {mu}")));
        }
        let report = check_coefficients(hbar, lambda, d_pp, d_qq, d_pq)?;
        if !report.passed() {
            return Err(Error::InvalidInput(format!(
                "constraints violated: {}",
                report.violated().join("; ")
            )));
        }
        Ok(Self { hbar, mass, omega, lambda, mu, d_pp, d_qq, d_pq })
    }

    /// Parameters whose asymptotic state is the thermal equilibrium state at
    /// temperature `k_t` (Boltzmann constant folded into `k_t`).
    pub fn thermal(hbar: f64, mass: f64, omega: f64, lambda: f64, mu: f64, k_t: f64) -> Result<Self> {
        let (d_pp, d_qq, d_pq) = thermal_coefficients(lambda, mu, mass, omega, hbar, k_t)?;
        Self::new(hbar, mass, omega, lambda, mu, d_pp, d_qq, d_pq)
    }

    /// Parameters built from explicit environment-coupling amplitudes; the
    /// friction rate is derived, not supplied.
    pub fn with_micro(
        hbar: f64,
        mass: f64,
        omega: f64,
        mu: f64,
        micro: &LindbladMicroParams,
    ) -> Result<Self> {
        let (d_pp, d_qq, d_pq, lambda) = from_micro(micro, hbar)?;
        Self::new(hbar, mass, omega, lambda, mu, d_pp, d_qq, d_pq)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn d_pp(&self) -> f64 {
        self.d_pp
    }

    pub fn d_qq(&self) -> f64 {
        self.d_qq
    }

    pub fn d_pq(&self) -> f64 {
        self.d_pq
    }

    /// lambda^2 + omega^2 - mu^2; positive iff the first-moment drift is
    /// asymptotically stable together with lambda > 0.
    pub fn stability_discriminant(&self) -> f64 {
        self.lambda * self.lambda + self.omega * self.omega - self.mu * self.mu
    }
}

/// Re-run the constraint checks on an already-constructed instance (always
/// passing; exposes the margins).
pub fn validate(params: &OscillatorParams) -> ValidationReport {
    check_coefficients(params.hbar, params.lambda, params.d_pp, params.d_qq, params.d_pq)
        .expect("constructed params are finite")
}

pub(crate) fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Diffusion coefficients that make the thermal state stationary:
/// d_pp = (lambda+mu)/2 * hbar m omega coth(hbar omega / 2 kT),
/// d_qq = (lambda-mu)/2 * hbar/(m omega) coth(hbar omega / 2 kT), d_pq = 0.
pub fn thermal_coefficients(
    lambda: f64,
    mu: f64,
    mass: f64,
    omega: f64,
    hbar: f64,
    k_t: f64,
) -> Result<(f64, f64, f64)> {
    for (name, v) in [
        ("lambda", lambda),
        ("mu", mu),
        ("mass", mass),
        ("omega", omega),
        ("hbar", hbar),
        ("k_t", k_t),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("{name} is not finite: {v}")));
        }
    }
    if k_t <= 0.0 {
        return Err(Error::InvalidInput(format!("k_t must be positive, got {k_t}")));
    }
    if mu < 0.0 {
        return Err(Error::InvalidInput(format!("mu must be nonnegative, got {mu}")));
    }
    if lambda <= mu {
        return Err(Error::InvalidRegime(format!(
            "thermal coefficients need lambda > mu (got lambda={lambda}, mu={mu}); \
             otherwise the position diffusion is not positive"
        )));
    }
    let c = coth(hbar * omega / (2.0 * k_t));
    let d_pp = 0.5 * (lambda + mu) * hbar * mass * omega * c;
    let d_qq = 0.5 * (lambda - mu) * hbar / (mass * omega) * c;
    Ok((d_pp, d_qq, 0.0))
}

/// Complex amplitudes of the two environment coupling operators, each of the
/// form (amplitude_a * p + amplitude_b * q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladMicroParams {
    pub a1: Complex64,
    pub b1: Complex64,
    pub a2: Complex64,
    pub b2: Complex64,
}

/// Diffusion coefficients and friction implied by coupling amplitudes:
/// d_qq = hbar/2 sum |a_j|^2, d_pp = hbar/2 sum |b_j|^2,
/// d_pq = -hbar/2 Re sum a_j* b_j, lambda = -Im sum a_j* b_j.
pub fn from_micro(micro: &LindbladMicroParams, hbar: f64) -> Result<(f64, f64, f64, f64)> {
    let amps = [micro.a1, micro.b1, micro.a2, micro.b2];
    if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("coupling amplitudes must be finite".into()));
    }
    if amps.iter().all(|z| *z == Complex64::ZERO) {
        return Err(Error::DegenerateInput("all coupling amplitudes are zero".into()));
    }
    let cross = micro.a1.conj() * micro.b1 + micro.a2.conj() * micro.b2;
    let d_qq = 0.5 * hbar * (micro.a1.norm_sqr() + micro.a2.norm_sqr());
    let d_pp = 0.5 * hbar * (micro.b1.norm_sqr() + micro.b2.norm_sqr());
    let d_pq = -0.5 * hbar * cross.re;
    let lambda = -cross.im;
    if lambda <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "coupling amplitudes give friction {lambda:.6e} <= 0"
        )));
    }
    Ok((d_pp, d_qq, d_pq, lambda))
}

/// Damping classification of the drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// mu > omega; hyperbolic relaxation at rate nu = sqrt(mu^2 - omega^2).
    Overdamped { nu: f64 },
    /// mu < omega; oscillation at frequency big_omega = sqrt(omega^2 - mu^2).
    Underdamped { big_omega: f64 },
    /// |mu - omega| below the tolerance band; polynomial-in-t limit forms.
    Critical,
}

impl Regime {
    pub fn nu(&self) -> Option<f64> {
        match self {
            Regime::Overdamped { nu } => Some(*nu),
            _ => None,
        }
    }

    pub fn big_omega(&self) -> Option<f64> {
        match self {
            Regime::Underdamped { big_omega } => Some(*big_omega),
            _ => None,
        }
    }
}

/// Rates entering every closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedCoefficients {
    /// Complex combination (m omega d_qq - d_pp/(m omega) + 2i d_pq) / hbar.
    pub d1: Complex64,
    /// Real combination (m omega d_qq + d_pp/(m omega)) / hbar.
    pub d2: f64,
    /// Source constant of the second-moment dynamics:
    /// ((lambda+mu) m omega d_qq - (lambda-mu) d_pp/(m omega) + 2 omega d_pq) / hbar.
    pub d_const: f64,
    pub regime: Regime,
}

/// Width of the band around mu = omega treated as critically damped. Below
/// this the oscillatory forms lose about half of double precision.
pub fn critical_band(omega: f64) -> f64 {
    1e-9 * omega
}

pub fn derive(params: &OscillatorParams) -> DerivedCoefficients {
    let m_omega = params.mass() * params.omega();
    let hbar = params.hbar();
    let d1 = Complex64::new(
        (m_omega * params.d_qq() - params.d_pp() / m_omega) / hbar,
        2.0 * params.d_pq() / hbar,
    );
    let d2 = (m_omega * params.d_qq() + params.d_pp() / m_omega) / hbar;
    let d_const = ((params.lambda() + params.mu()) * m_omega * params.d_qq()
        - (params.lambda() - params.mu()) * params.d_pp() / m_omega
        + 2.0 * params.omega() * params.d_pq())
        / hbar;
    let gap = params.mu() - params.omega();
    let regime = if gap.abs() <= critical_band(params.omega()) {
        Regime::Critical
    } else if gap > 0.0 {
        Regime::Overdamped { nu: (params.mu() * params.mu() - params.omega() * params.omega()).sqrt() }
    } else {
        Regime::Underdamped {
            big_omega: (params.omega() * params.omega() - params.mu() * params.mu()).sqrt(),
        }
    };
    DerivedCoefficients { d1, d2, d_const, regime }
}
