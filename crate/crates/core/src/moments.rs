//! Closed-form time evolution of the first and second moments of the ladder
//! operators, and position/momentum statistics derived from them.

use ndarray::{array, Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::solve_complex;
use crate::params::{derive, OscillatorParams, Regime};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// First and second moments of a, a-dagger at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub exp_a: Complex64,
    pub exp_adag: Complex64,
    pub exp_a2: Complex64,
    pub exp_adag2: Complex64,
    /// Number expectation; real and >= 0 for physical states.
    pub exp_n: f64,
    pub time: f64,
}

impl MomentState {
    /// Build a state from the independent entries; the conjugate entries are
    /// filled in, keeping the conjugation invariants exact.
    pub fn new(exp_a: Complex64, exp_a2: Complex64, exp_n: f64, time: f64) -> Result<Self> {
        if !exp_a.is_finite() || !exp_a2.is_finite() || !exp_n.is_finite() || !time.is_finite() {
            return Err(Error::InvalidInput("moment entries must be finite".into()));
        }
        if exp_n < -1e-12 {
            return Err(Error::InvalidInput(format!(
                "number expectation must be >= 0, got {exp_n}"
            )));
        }
        if time < 0.0 {
            return Err(Error::InvalidInput(format!("time must be >= 0, got {time}")));
        }
        Ok(Self {
            exp_a,
            exp_adag: exp_a.conj(),
            exp_a2,
            exp_adag2: exp_a2.conj(),
            exp_n,
            time,
        })
    }

    /// Moments of the coherent state with amplitude `alpha0` at t = 0.
    pub fn coherent(alpha0: Complex64) -> Self {
        Self::new(alpha0, alpha0 * alpha0, alpha0.norm_sqr(), 0.0).expect("coherent moments are physical")
    }

    pub fn vacuum() -> Self {
        Self::coherent(Complex64::ZERO)
    }

    /// Moments of the thermal state with mean occupation `nbar`.
    pub fn thermal(nbar: f64) -> Result<Self> {
        Self::new(Complex64::ZERO, Complex64::ZERO, nbar, 0.0)
    }
}

/// Flow coefficients of the linear first-moment system: returns (b11, b12)
/// with <a>(t) = b11 <a>(0) + b12 <a+>(0) and the conjugate row implied.
pub(crate) fn first_flow(t: f64, params: &OscillatorParams) -> (Complex64, Complex64) {
    let lambda = params.lambda();
    let omega = params.omega();
    let mu = params.mu();
    let decay = (-lambda * t).exp();
    match derive(params).regime {
        Regime::Underdamped { big_omega } => {
            let (s, c) = (big_omega * t).sin_cos();
            (
                decay * Complex64::new(c, -omega / big_omega * s),
                Complex64::new(decay * mu / big_omega * s, 0.0),
            )
        }
        Regime::Overdamped { nu } => {
            let ch = (nu * t).cosh();
            let sh = (nu * t).sinh();
            (
                decay * Complex64::new(ch, -omega / nu * sh),
                Complex64::new(decay * mu / nu * sh, 0.0),
            )
        }
        Regime::Critical => (
            decay * Complex64::new(1.0, -omega * t),
            Complex64::new(decay * mu * t, 0.0),
        ),
    }
}

/// Propagate the first moments by `t`.
pub fn evolve_first(
    exp_a0: Complex64,
    exp_adag0: Complex64,
    t: f64,
    params: &OscillatorParams,
) -> (Complex64, Complex64) {
    let (b11, b12) = first_flow(t, params);
    (
        b11 * exp_a0 + b12 * exp_adag0,
        b12 * exp_a0 + b11.conj() * exp_adag0,
    )
}

/// Integration constants of the second-moment closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConstants {
    pub c1: Complex64,
    pub c2: Complex64,
    pub c3: Complex64,
}

/// Stationary offsets of the second-moment solutions: the constant parts of
/// <a^2> and <a+ a>. Finite whenever lambda^2 + omega^2 - mu^2 != 0.
pub(crate) fn stationary_offsets(params: &OscillatorParams) -> Result<(Complex64, f64)> {
    let d = derive(params);
    let lambda = params.lambda();
    let s = params.stability_discriminant();
    if s.abs() < 1e-14 * (params.lambda().powi(2) + params.omega().powi(2)).max(1.0) {
        return Err(Error::DegenerateRegime(
            "lambda^2 + omega^2 - mu^2 vanishes; no constant second-moment offset".into(),
        ));
    }
    let p_inf = d.d_const * Complex64::new(lambda, -params.omega()) / (2.0 * lambda * s)
        + I * params.d_pq() / (params.hbar() * lambda);
    let n_inf = (d.d_const * params.mu() / s + d.d2 - lambda) / (2.0 * lambda);
    Ok((p_inf, n_inf))
}

/// Determine the integration constants from moments at t = 0 by solving the
/// 3x3 linear system read off the closed forms.
pub fn solve_constants(
    initial: &MomentState,
    params: &OscillatorParams,
) -> Result<IntegrationConstants> {
    if initial.time != 0.0 {
        return Err(Error::InvalidInput(format!(
            "constants are defined at t = 0, got a state at t = {}",
            initial.time
        )));
    }
    let (p_inf, n_inf) = stationary_offsets(params)?;
    let omega = params.omega();
    let mu = params.mu();
    let one = Complex64::ONE;
    let rows: [Complex64; 9] = match derive(params).regime {
        Regime::Underdamped { big_omega } => [
            one,
            I * omega / big_omega,
            -I * mu / omega,
            one,
            -I * omega / big_omega,
            I * mu / omega,
            Complex64::ZERO,
            Complex64::new(-mu / big_omega, 0.0),
            one,
        ],
        Regime::Overdamped { nu } => [
            Complex64::new(1.0, -omega / nu),
            Complex64::new(1.0, omega / nu),
            -I * mu / omega,
            Complex64::new(1.0, omega / nu),
            Complex64::new(1.0, -omega / nu),
            I * mu / omega,
            Complex64::new(mu / nu, 0.0),
            Complex64::new(-mu / nu, 0.0),
            one,
        ],
        Regime::Critical => {
            return Err(Error::DegenerateRegime(
                "the oscillatory/hyperbolic constant split is singular at critical damping".into(),
            ))
        }
    };
    let a = Array2::from_shape_vec((3, 3), rows.to_vec()).expect("3x3 shape");
    let b: Array1<Complex64> = array![
        initial.exp_a2 - p_inf,
        initial.exp_adag2 - p_inf.conj(),
        Complex64::new(initial.exp_n, 0.0) - Complex64::new(n_inf, 0.0),
    ];
    let x = solve_complex(&a, &b)?;
    Ok(IntegrationConstants { c1: x[0], c2: x[1], c3: x[2] })
}

/// Evaluate the second-moment closed forms, keeping the (ideally vanishing)
/// imaginary residue of the number expectation.
pub fn evolve_second_complex(
    constants: &IntegrationConstants,
    t: f64,
    params: &OscillatorParams,
) -> Result<(Complex64, Complex64, Complex64)> {
    let (p_inf, n_inf) = stationary_offsets(params)?;
    let omega = params.omega();
    let mu = params.mu();
    let decay = Complex64::new((-2.0 * params.lambda() * t).exp(), 0.0);
    let (c1, c2, c3) = (constants.c1, constants.c2, constants.c3);
    let (a2h, adag2h, nh) = match derive(params).regime {
        Regime::Underdamped { big_omega } => {
            let (s2, c2t) = (2.0 * big_omega * t).sin_cos();
            let r = omega / big_omega;
            (
                (c1 + I * c2 * r) * c2t + (c2 - I * c1 * r) * s2 - I * mu / omega * c3,
                (c1 - I * c2 * r) * c2t + (c2 + I * c1 * r) * s2 + I * mu / omega * c3,
                (c1 * s2 - c2 * c2t) * (mu / big_omega) + c3,
            )
        }
        Regime::Overdamped { nu } => {
            let ep = Complex64::new((2.0 * nu * t).exp(), 0.0);
            let em = Complex64::new((-2.0 * nu * t).exp(), 0.0);
            let r = omega / nu;
            (
                Complex64::new(1.0, -r) * c1 * ep + Complex64::new(1.0, r) * c2 * em
                    - I * mu / omega * c3,
                Complex64::new(1.0, r) * c1 * ep + Complex64::new(1.0, -r) * c2 * em
                    + I * mu / omega * c3,
                (c1 * ep - c2 * em) * (mu / nu) + c3,
            )
        }
        Regime::Critical => {
            return Err(Error::DegenerateRegime(
                "closed-form constants are not defined at critical damping".into(),
            ))
        }
    };
    Ok((
        decay * a2h + p_inf,
        decay * adag2h + p_inf.conj(),
        decay * nh + Complex64::new(n_inf, 0.0),
    ))
}

/// Evaluate the second-moment closed forms at time `t`.
pub fn evolve_second(
    constants: &IntegrationConstants,
    t: f64,
    params: &OscillatorParams,
) -> Result<(Complex64, Complex64, f64)> {
    let (a2, adag2, n) = evolve_second_complex(constants, t, params)?;
    Ok((a2, adag2, n.re))
}

/// Second-moment evolution at exact critical damping: the sum/difference
/// system has a triple eigenvalue there, handled by its (nilpotent)
/// polynomial exponential instead of the oscillatory constants.
fn critical_second(
    initial: &MomentState,
    t: f64,
    params: &OscillatorParams,
) -> Result<(Complex64, Complex64, f64)> {
    let d = derive(params);
    let lambda = params.lambda();
    let omega = params.omega();
    let mu = params.mu();
    let two = 2.0;
    let m = Array2::from_shape_vec(
        (3, 3),
        vec![
            Complex64::new(-two * lambda, -two * omega),
            Complex64::ZERO,
            Complex64::new(two * mu, 0.0),
            Complex64::ZERO,
            Complex64::new(-two * lambda, two * omega),
            Complex64::new(two * mu, 0.0),
            Complex64::new(mu, 0.0),
            Complex64::new(mu, 0.0),
            Complex64::new(-two * lambda, 0.0),
        ],
    )
    .expect("3x3 shape");
    let source = array![
        d.d1 + mu,
        d.d1.conj() + mu,
        Complex64::new(d.d2 - lambda, 0.0),
    ];
    let x_inf = solve_complex(&m, &source.mapv(|z| -z))?;
    let x0 = array![
        initial.exp_a2,
        initial.exp_adag2,
        Complex64::new(initial.exp_n, 0.0),
    ];
    let dx = &x0 - &x_inf;
    // nilpotent part of the drift after factoring out exp(-2 lambda t)
    let n_mat = &m + &(Array2::eye(3).mapv(|v: f64| Complex64::new(2.0 * lambda * v, 0.0)));
    let n_dx = n_mat.dot(&dx);
    let n2_dx = n_mat.dot(&n_dx);
    let decay = Complex64::new((-2.0 * lambda * t).exp(), 0.0);
    let evolved = &x_inf
        + &((&dx + &(n_dx.mapv(|z| z * t)) + &(n2_dx.mapv(|z| z * (0.5 * t * t)))).mapv(|z| z * decay));
    Ok((evolved[0], evolved[1], evolved[2].re))
}

/// Propagate a full moment state by duration `t` (closed forms in every
/// regime, including critical damping).
pub fn evolve(initial: &MomentState, t: f64, params: &OscillatorParams) -> Result<MomentState> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("duration must be >= 0, got {t}")));
    }
    let (exp_a, exp_adag) = evolve_first(initial.exp_a, initial.exp_adag, t, params);
    let (exp_a2, exp_adag2, exp_n) = match derive(params).regime {
        Regime::Critical => critical_second(initial, t, params)?,
        _ => {
            let at_zero = MomentState { time: 0.0, ..*initial };
            let constants = solve_constants(&at_zero, params)?;
            evolve_second(&constants, t, params)?
        }
    };
    Ok(MomentState {
        exp_a,
        exp_adag,
        exp_a2,
        exp_adag2,
        exp_n,
        time: initial.time + t,
    })
}

/// Stationary number expectation.
pub fn asymptotic_number(params: &OscillatorParams) -> Result<f64> {
    let s = params.stability_discriminant();
    if s <= 0.0 {
        return Err(Error::NoStationaryState { discriminant: s });
    }
    let d = derive(params);
    Ok((d.d_const * params.mu() / s + d.d2 - params.lambda()) / (2.0 * params.lambda()))
}

/// Position/momentum statistics of a moment state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureStats {
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_q: f64,
    pub var_p: f64,
    pub cov_qp: f64,
}

/// Means, variances and the symmetrized covariance of position and momentum.
///
/// Conventions fixed once here: q = sqrt(hbar/2 m omega)(a+ + a) and
/// p = i sqrt(hbar m omega / 2)(a+ - a), so
/// <q> = sqrt(hbar/2 m omega) 2 Re<a>, <p> = sqrt(hbar m omega/2) 2 Im<a>,
/// var q = (hbar/2 m omega)(2 Re<a^2> + 2<n> + 1) - <q>^2,
/// var p = (hbar m omega/2)(-2 Re<a^2> + 2<n> + 1) - <p>^2,
/// cov = hbar Im<a^2> - <q><p>.
pub fn quadratures(state: &MomentState, params: &OscillatorParams) -> QuadratureStats {
    let q_unit = (params.hbar() / (2.0 * params.mass() * params.omega())).sqrt();
    let p_unit = (params.hbar() * params.mass() * params.omega() / 2.0).sqrt();
    let mean_q = q_unit * 2.0 * state.exp_a.re;
    let mean_p = p_unit * 2.0 * state.exp_a.im;
    let sym = 2.0 * state.exp_n + 1.0;
    let var_q = q_unit * q_unit * (2.0 * state.exp_a2.re + sym) - mean_q * mean_q;
    let var_p = p_unit * p_unit * (-2.0 * state.exp_a2.re + sym) - mean_p * mean_p;
    let cov_qp = params.hbar() * state.exp_a2.im - mean_q * mean_p;
    QuadratureStats { mean_q, mean_p, var_q, var_p, cov_qp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::validate;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(lambda: f64, mu: f64, omega: f64) -> OscillatorParams {
        OscillatorParams::new(1.0, 1.0, omega, lambda, mu, 1.0, 1.0, 0.2).unwrap()
    }

    fn gibbs(lambda: f64, mu: f64, omega: f64, u: f64) -> OscillatorParams {
        // u = hbar*omega/(2 kT)
        let k_t = omega / (2.0 * u);
        OscillatorParams::thermal(1.0, 1.0, omega, lambda, mu, k_t).unwrap()
    }

    /// Fixed-step RK4 for a small complex linear system x' = f(x).
    fn rk4<Fun: Fn(&[Complex64]) -> Vec<Complex64>>(
        f: Fun,
        mut x: Vec<Complex64>,
        t: f64,
        steps: usize,
    ) -> Vec<Complex64> {
        let h = t / steps as f64;
        for _ in 0..steps {
            let k1 = f(&x);
            let x2: Vec<_> = x.iter().zip(&k1).map(|(a, k)| a + k * (0.5 * h)).collect();
            let k2 = f(&x2);
            let x3: Vec<_> = x.iter().zip(&k2).map(|(a, k)| a + k * (0.5 * h)).collect();
            let k3 = f(&x3);
            let x4: Vec<_> = x.iter().zip(&k3).map(|(a, k)| a + k * h).collect();
            let k4 = f(&x4);
            for i in 0..x.len() {
                x[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        x
    }

    fn first_rhs(p: &OscillatorParams) -> impl Fn(&[Complex64]) -> Vec<Complex64> + '_ {
        move |x| {
            vec![
                -Complex64::new(p.lambda(), p.omega()) * x[0] + p.mu() * x[1],
                -Complex64::new(p.lambda(), -p.omega()) * x[1] + p.mu() * x[0],
            ]
        }
    }

    fn second_rhs<'a>(
        p: &'a OscillatorParams,
    ) -> impl Fn(&[Complex64]) -> Vec<Complex64> + 'a {
        let d = derive(p);
        move |x| {
            let mu = p.mu();
            vec![
                -2.0 * Complex64::new(p.lambda(), p.omega()) * x[0] + 2.0 * mu * x[2] + d.d1 + mu,
                -2.0 * Complex64::new(p.lambda(), -p.omega()) * x[1]
                    + 2.0 * mu * x[2]
                    + d.d1.conj()
                    + mu,
                -2.0 * p.lambda() * x[2]
                    + mu * (x[0] + x[1])
                    + Complex64::new(d.d2 - p.lambda(), 0.0),
            ]
        }
    }

    #[test]
    fn first_identity_at_zero() {
        let p = params(1.0, 0.5, 1.0);
        let a0 = Complex64::new(0.3, -0.7);
        let (a, adag) = evolve_first(a0, a0.conj(), 0.0, &p);
        assert_eq!(a, a0);
        assert_eq!(adag, a0.conj());
    }

    #[test]
    fn first_decouples_without_drift_asymmetry() {
        let p = OscillatorParams::new(1.0, 1.0, 1.3, 0.8, 0.0, 1.0, 1.0, 0.0).unwrap();
        let a0 = Complex64::new(1.0, 0.4);
        let t = 2.3;
        let (a, _) = evolve_first(a0, a0.conj(), t, &p);
        let expected = a0 * (-Complex64::new(0.8, 1.3) * t).exp();
        assert_abs_diff_eq!((a - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn first_matches_ode_integration_underdamped() {
        let p = params(1.0, 0.5, 1.0);
        let a0 = Complex64::new(1.0, 0.0);
        for &t in &[0.5, 2.0, 5.0, 10.0] {
            let exact = evolve_first(a0, a0.conj(), t, &p).0;
            let num = rk4(first_rhs(&p), vec![a0, a0.conj()], t, (t * 2000.0) as usize)[0];
            assert!((exact - num).norm() < 1e-8, "t={t}: {exact} vs {num}");
        }
    }

    #[test]
    fn first_matches_ode_integration_overdamped() {
        let p = params(1.0, 1.5, 1.0);
        let a0 = Complex64::new(0.4, 0.6);
        for &t in &[0.5, 2.0, 6.0] {
            let exact = evolve_first(a0, a0.conj(), t, &p).0;
            let num = rk4(first_rhs(&p), vec![a0, a0.conj()], t, (t * 2000.0) as usize)[0];
            assert!((exact - num).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn first_semigroup_property() {
        let p = params(0.7, 0.4, 1.2);
        let a0 = Complex64::new(0.9, -0.2);
        for &(t1, t2) in &[(0.3, 0.9), (1.0, 2.5), (0.05, 4.0)] {
            let (mid_a, mid_ad) = evolve_first(a0, a0.conj(), t1, &p);
            let two_step = evolve_first(mid_a, mid_ad, t2, &p).0;
            let one_step = evolve_first(a0, a0.conj(), t1 + t2, &p).0;
            assert!(
                (two_step - one_step).norm() <= 1e-10 * one_step.norm().max(1.0),
                "t1={t1} t2={t2}"
            );
        }
    }

    #[test]
    fn first_ode_residual_by_central_difference() {
        let p = params(1.1, 0.6, 0.9);
        let a0 = Complex64::new(0.5, 0.5);
        let h = 1e-5;
        for &t in &[0.4, 1.7, 3.0] {
            let plus = evolve_first(a0, a0.conj(), t + h, &p);
            let minus = evolve_first(a0, a0.conj(), t - h, &p);
            let deriv = (plus.0 - minus.0) / (2.0 * h);
            let here = evolve_first(a0, a0.conj(), t, &p);
            let rhs = -Complex64::new(p.lambda(), p.omega()) * here.0 + p.mu() * here.1;
            assert!((deriv - rhs).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn first_moment_satisfies_second_order_equation() {
        // d^2/dt^2 <a> + 2 lambda d/dt <a> + (lambda^2+omega^2-mu^2) <a> = 0
        let p = params(0.9, 0.5, 1.4);
        let a0 = Complex64::new(0.8, 0.1);
        let h = 1e-4;
        for &t in &[0.5, 2.0] {
            let f = |tt: f64| evolve_first(a0, a0.conj(), tt, &p).0;
            let second = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
            let first = (f(t + h) - f(t - h)) / (2.0 * h);
            let residual = second + 2.0 * p.lambda() * first + p.stability_discriminant() * f(t);
            assert!(residual.norm() < 1e-5, "t={t} residual {residual}");
        }
    }

    #[test]
    fn constants_roundtrip_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..40 {
            let mu = if case % 2 == 0 { 0.5 } else { 1.6 };
            let p = params(1.0, mu, 1.0);
            let initial = MomentState::new(
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                rng.random_range(0.0..2.0),
                0.0,
            )
            .unwrap();
            let c = solve_constants(&initial, &p).unwrap();
            let (a2, adag2, n) = evolve_second(&c, 0.0, &p).unwrap();
            assert!((a2 - initial.exp_a2).norm() < 1e-12);
            assert!((adag2 - initial.exp_adag2).norm() < 1e-12);
            assert!((n - initial.exp_n).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_imaginary_parts_vanish_for_physical_input() {
        let p = params(1.0, 0.5, 1.0);
        let initial = MomentState::coherent(Complex64::new(0.7, -0.3));
        let c = solve_constants(&initial, &p).unwrap();
        assert!(c.c1.im.abs() < 1e-12);
        assert!(c.c2.im.abs() < 1e-12);
        assert!(c.c3.im.abs() < 1e-12);
    }

    #[test]
    fn constants_rejected_at_critical_damping() {
        let p = params(1.0, 1.0, 1.0);
        let initial = MomentState::vacuum();
        assert!(matches!(
            solve_constants(&initial, &p),
            Err(Error::DegenerateRegime(_))
        ));
    }

    #[test]
    fn second_matches_ode_integration_underdamped() {
        let p = params(1.0, 0.3, 1.0);
        assert!(validate(&p).passed());
        let initial = MomentState::coherent(Complex64::new(0.7, 0.0));
        let c = solve_constants(&initial, &p).unwrap();
        let x0 = vec![
            initial.exp_a2,
            initial.exp_adag2,
            Complex64::new(initial.exp_n, 0.0),
        ];
        for &t in &[0.3, 1.0, 4.0, 8.0] {
            let (a2, _, n) = evolve_second(&c, t, &p).unwrap();
            let num = rk4(second_rhs(&p), x0.clone(), t, (t * 4000.0) as usize);
            assert!((a2 - num[0]).norm() < 1e-8, "t={t}");
            assert!((n - num[2].re).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn second_matches_ode_integration_overdamped() {
        let p = params(0.8, 1.7, 1.0);
        let initial = MomentState::new(
            Complex64::new(0.2, 0.1),
            Complex64::new(-0.3, 0.25),
            0.9,
            0.0,
        )
        .unwrap();
        let c = solve_constants(&initial, &p).unwrap();
        let x0 = vec![
            initial.exp_a2,
            initial.exp_adag2,
            Complex64::new(initial.exp_n, 0.0),
        ];
        for &t in &[0.5, 2.0, 5.0] {
            let (a2, adag2, n) = evolve_second(&c, t, &p).unwrap();
            let num = rk4(second_rhs(&p), x0.clone(), t, (t * 4000.0) as usize);
            assert!((a2 - num[0]).norm() < 1e-8, "t={t}");
            assert!((adag2 - num[1]).norm() < 1e-8, "t={t}");
            assert!((n - num[2].re).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn critical_closed_form_matches_ode_integration() {
        let p = params(1.0, 1.0, 1.0);
        let initial = MomentState::coherent(Complex64::new(0.6, 0.2));
        let x0 = vec![
            initial.exp_a2,
            initial.exp_adag2,
            Complex64::new(initial.exp_n, 0.0),
        ];
        for &t in &[0.4, 1.5, 6.0] {
            let state = evolve(&initial, t, &p).unwrap();
            let num_first = rk4(
                first_rhs(&p),
                vec![initial.exp_a, initial.exp_adag],
                t,
                (t * 4000.0) as usize,
            );
            let num_second = rk4(second_rhs(&p), x0.clone(), t, (t * 4000.0) as usize);
            assert!((state.exp_a - num_first[0]).norm() < 1e-8, "t={t}");
            assert!((state.exp_a2 - num_second[0]).norm() < 1e-8, "t={t}");
            assert!((state.exp_n - num_second[2].re).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn regime_branches_agree_near_critical() {
        // parameters just off the critical band against the critical forms
        let initial = MomentState::coherent(Complex64::new(0.5, 0.5));
        let t = 2.0;
        let crit = evolve(&initial, t, &params(1.0, 1.0, 1.0)).unwrap();
        for mu in [1.0 - 1e-6, 1.0 + 1e-6] {
            let near = evolve(&initial, t, &params(1.0, mu, 1.0)).unwrap();
            assert!(
                (near.exp_a - crit.exp_a).norm() <= 1e-4 * crit.exp_a.norm().max(1.0),
                "mu={mu}"
            );
            assert!(
                (near.exp_a2 - crit.exp_a2).norm() <= 1e-4 * crit.exp_a2.norm().max(1.0),
                "mu={mu}"
            );
            assert!((near.exp_n - crit.exp_n).abs() <= 1e-4 * crit.exp_n.abs().max(1.0), "mu={mu}");
        }
    }

    #[test]
    fn conjugation_symmetry_along_the_flow() {
        let p = params(0.9, 0.6, 1.1);
        let initial = MomentState::coherent(Complex64::new(0.8, -0.4));
        for &t in &[0.0, 0.7, 3.3, 9.0] {
            let s = evolve(&initial, t, &p).unwrap();
            assert!((s.exp_adag - s.exp_a.conj()).norm() < 1e-12);
            assert!((s.exp_adag2 - s.exp_a2.conj()).norm() < 1e-12);
        }
        // the imaginary residue of <n> stays at rounding level
        let c = solve_constants(&initial, &p).unwrap();
        for &t in &[0.5, 2.0, 7.0] {
            let (_, _, n) = evolve_second_complex(&c, t, &p).unwrap();
            assert!(n.im.abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn stationary_offset_solves_the_stationary_system() {
        // 2(lambda + i omega) P = 2 mu N + D1 + mu at the fixed point
        for p in [params(1.0, 0.5, 1.0), params(0.8, 1.9, 1.0), gibbs(1.0, 0.3, 1.0, 1.0)] {
            let d = derive(&p);
            let (p_inf, n_inf) = stationary_offsets(&p).unwrap();
            let lhs = 2.0 * Complex64::new(p.lambda(), p.omega()) * p_inf;
            let rhs = 2.0 * p.mu() * n_inf + d.d1 + p.mu();
            assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn long_time_number_is_the_bose_value_for_gibbs() {
        // hbar*omega/kT = 1 so u = 0.5 and <n>_inf = 1/(e - 1)
        let p = gibbs(1.0, 0.4, 1.0, 0.5);
        let bose = 1.0 / (1f64.exp() - 1.0);
        assert_abs_diff_eq!(asymptotic_number(&p).unwrap(), bose, epsilon = 1e-12);
        let initial = MomentState::coherent(Complex64::new(0.9, 0.3));
        let c = solve_constants(&initial, &p).unwrap();
        let (_, _, n) = evolve_second(&c, 30.0, &p).unwrap();
        assert_abs_diff_eq!(n, bose, epsilon = 1e-10);
    }

    #[test]
    fn asymptotic_number_matches_long_time_limit_generic() {
        let p = params(1.0, 0.5, 1.0); // non-thermal: d_pq != 0
        let initial = MomentState::thermal(0.7).unwrap();
        let c = solve_constants(&initial, &p).unwrap();
        let (_, _, n) = evolve_second(&c, 50.0, &p).unwrap();
        assert_abs_diff_eq!(n, asymptotic_number(&p).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn asymptotic_number_needs_stable_drift() {
        let p = OscillatorParams::new(1.0, 1.0, 1.0, 0.5, 1.2, 1.0, 1.0, 0.0).unwrap();
        assert!(p.stability_discriminant() < 0.0);
        assert!(matches!(
            asymptotic_number(&p),
            Err(Error::NoStationaryState { .. })
        ));
    }

    #[test]
    fn quadratures_of_vacuum_and_coherent() {
        let p = OscillatorParams::new(2.0, 1.5, 0.8, 1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let q_unit = p.hbar() / (2.0 * p.mass() * p.omega());
        let p_unit = p.hbar() * p.mass() * p.omega() / 2.0;
        let vac = quadratures(&MomentState::vacuum(), &p);
        assert_abs_diff_eq!(vac.var_q, q_unit, epsilon = 1e-14);
        assert_abs_diff_eq!(vac.var_p, p_unit, epsilon = 1e-14);
        assert_abs_diff_eq!(vac.cov_qp, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vac.mean_q, 0.0);

        let alpha = Complex64::new(0.6, -1.1);
        let coh = quadratures(&MomentState::coherent(alpha), &p);
        assert_abs_diff_eq!(coh.var_q, vac.var_q, epsilon = 1e-12);
        assert_abs_diff_eq!(coh.var_p, vac.var_p, epsilon = 1e-12);
        assert_abs_diff_eq!(coh.cov_qp, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coh.mean_q, q_unit.sqrt() * 2.0 * alpha.re, epsilon = 1e-14);
        assert_abs_diff_eq!(coh.mean_p, p_unit.sqrt() * 2.0 * alpha.im, epsilon = 1e-14);
    }

    #[test]
    fn quadratures_of_thermal_state() {
        let p = OscillatorParams::new(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let nbar = 1.7;
        let th = quadratures(&MomentState::thermal(nbar).unwrap(), &p);
        assert_abs_diff_eq!(th.var_q, 0.5 * (2.0 * nbar + 1.0), epsilon = 1e-13);
        assert_abs_diff_eq!(th.var_p, 0.5 * (2.0 * nbar + 1.0), epsilon = 1e-13);
    }

    #[test]
    fn moment_state_rejects_unphysical_number() {
        assert!(MomentState::new(Complex64::ZERO, Complex64::ZERO, -0.1, 0.0).is_err());
    }
}
