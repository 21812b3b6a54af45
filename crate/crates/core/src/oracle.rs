//! Brute-force verification route: the master equation integrated directly
//! in a truncated Fock basis. Everything here is deliberately independent of
//! the closed-form modules so the two sides can check each other.

use ndarray::Array2;
use num_complex::Complex64;

use crate::density_matrix::{p_green, propagator, sigma_t, FockDensityMatrix};
use crate::error::{Error, Result};
use crate::linalg::ln_factorial;
use crate::moments::MomentState;
use crate::params::{derive, OscillatorParams};

/// Ladder operators and Hamiltonians as dense matrices on `dim` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperators {
    pub dim: usize,
    pub annihilate: Array2<Complex64>,
    pub create: Array2<Complex64>,
}

impl FockOperators {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 levels, got {dim}")));
        }
        let mut annihilate = Array2::zeros((dim, dim));
        for i in 0..dim - 1 {
            annihilate[[i, i + 1]] = Complex64::new(((i + 1) as f64).sqrt(), 0.0);
        }
        let create = annihilate.t().mapv(|z| z.conj());
        Ok(Self { dim, annihilate, create })
    }

    pub fn number(&self) -> Array2<Complex64> {
        Array2::from_diag(&ndarray::Array1::from_iter(
            (0..self.dim).map(|i| Complex64::new(i as f64, 0.0)),
        ))
    }

    /// Free Hamiltonian hbar omega (N + 1/2).
    pub fn hamiltonian_free(&self, params: &OscillatorParams) -> Array2<Complex64> {
        let w = params.hbar() * params.omega();
        Array2::from_diag(&ndarray::Array1::from_iter(
            (0..self.dim).map(|i| Complex64::new(w * (i as f64 + 0.5), 0.0)),
        ))
    }

    /// Full Hamiltonian including the symmetrized position-momentum coupling,
    /// which in ladder form is (i hbar mu / 2)(a+^2 - a^2).
    pub fn hamiltonian(&self, params: &OscillatorParams) -> Array2<Complex64> {
        let mut h = self.hamiltonian_free(params);
        let g = Complex64::new(0.0, 0.5 * params.hbar() * params.mu());
        let a2 = self.annihilate.dot(&self.annihilate);
        let adag2 = self.create.dot(&self.create);
        h = h + adag2.mapv(|z| g * z) - a2.mapv(|z| g * z);
        h
    }

    pub fn position(&self, params: &OscillatorParams) -> Array2<Complex64> {
        let u = (params.hbar() / (2.0 * params.mass() * params.omega())).sqrt();
        (&self.create + &self.annihilate).mapv(|z| u * z)
    }

    pub fn momentum(&self, params: &OscillatorParams) -> Array2<Complex64> {
        let u = Complex64::new(0.0, (params.hbar() * params.mass() * params.omega() / 2.0).sqrt());
        (&self.create - &self.annihilate).mapv(|z| u * z)
    }
}

/// Initial density matrices available to the integrator. All are truncated
/// to the requested dimension without renormalization, so the reported trace
/// deficit measures the truncation quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Coherent(Complex64),
    Thermal(f64),
    Fock(usize),
    PoissonDiagonal(f64),
}

impl InitialState {
    pub fn density_matrix(&self, dim: usize) -> Result<Array2<Complex64>> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 levels, got {dim}")));
        }
        let mut rho = Array2::zeros((dim, dim));
        match *self {
            InitialState::Coherent(alpha) => {
                let ln_r = if alpha.norm() > 0.0 { alpha.norm().ln() } else { f64::NEG_INFINITY };
                let arg = alpha.arg();
                let amp: Vec<Complex64> = (0..dim)
                    .map(|m| {
                        if m == 0 {
                            // keep 0 * ln 0 out of the exponent
                            return Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
                        }
                        if ln_r == f64::NEG_INFINITY {
                            return Complex64::ZERO;
                        }
                        let ln_mag = m as f64 * ln_r - 0.5 * ln_factorial(m)
                            - 0.5 * alpha.norm_sqr();
                        Complex64::from_polar(ln_mag.exp(), m as f64 * arg)
                    })
                    .collect();
                for m in 0..dim {
                    for n in 0..dim {
                        rho[[m, n]] = amp[m] * amp[n].conj();
                    }
                }
            }
            InitialState::Thermal(nbar) => {
                if nbar < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "thermal occupation must be >= 0, got {nbar}"
                    )));
                }
                let ratio = nbar / (1.0 + nbar);
                let mut w = 1.0 / (1.0 + nbar);
                for m in 0..dim {
                    rho[[m, m]] = Complex64::new(w, 0.0);
                    w *= ratio;
                }
            }
            InitialState::Fock(s) => {
                if s >= dim {
                    return Err(Error::InvalidInput(format!(
                        "level {s} does not fit in {dim} levels"
                    )));
                }
                rho[[s, s]] = Complex64::ONE;
            }
            InitialState::PoissonDiagonal(mean) => {
                if mean < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "Poisson mean must be >= 0, got {mean}"
                    )));
                }
                for m in 0..dim {
                    let ln_w = if mean > 0.0 {
                        m as f64 * mean.ln() - mean - ln_factorial(m)
                    } else if m == 0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    };
                    rho[[m, m]] = Complex64::new(ln_w.exp(), 0.0);
                }
            }
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub dim: usize,
    pub method: Method,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, dim: usize, params: &OscillatorParams) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 || !t_final.is_finite() || t_final < 0.0 {
            return Err(Error::InvalidInput(format!(
                "need dt > 0 and t_final >= 0, got dt = {dt}, t_final = {t_final}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 levels, got {dim}")));
        }
        let d2 = derive(params).d2;
        let rate = params.lambda() + params.omega() + d2;
        if dt * rate >= 0.1 {
            return Err(Error::InvalidInput(format!(
                "dt {dt} too large for rate scale {rate:.3}; need dt * rate < 0.1"
            )));
        }
        Ok(Self { dt, t_final, dim, method: Method::Rk4 })
    }

    /// Default step choice: conservative in the system rates and kept inside
    /// the stability region of the truncated generator at this dimension.
    pub fn for_params(params: &OscillatorParams, t_final: f64, dim: usize) -> Result<Self> {
        let d2 = derive(params).d2;
        let rate_dt = 1e-3 / params.omega().max(params.lambda()).max(d2);
        let spectral = 2.0 * dim as f64 * (params.omega() + d2 + params.lambda() + params.mu());
        let dt = rate_dt.min(2.2 / spectral);
        Self::new(dt, t_final, dim, params)
    }
}

/// Coefficients of the master-equation stencil, precomputed per apply.
struct Stencil {
    hop_down: Complex64,  // a rho a+
    hop_up: Complex64,    // a+ rho a
    cross_up: Complex64,  // a+ rho a+
    cross_down: Complex64, // a rho a
    left_up2: Complex64,  // a+^2 rho
    right_up2: Complex64, // rho a+^2
    left_down2: Complex64, // a^2 rho
    right_down2: Complex64, // rho a^2
    diag_nl: Complex64,   // a+ a rho
    diag_nr: Complex64,   // rho a+ a
    diag_ml: Complex64,   // a a+ rho
    diag_mr: Complex64,   // rho a a+
}

impl Stencil {
    fn new(params: &OscillatorParams) -> Self {
        let d = derive(params);
        let d1 = d.d1;
        let d1c = d.d1.conj();
        let d2 = d.d2;
        let lambda = params.lambda();
        let omega = params.omega();
        let mu = params.mu();
        let half = 0.5;
        Self {
            hop_down: Complex64::new(d2 + lambda, 0.0),
            hop_up: Complex64::new(d2 - lambda, 0.0),
            cross_up: -d1,
            cross_down: -d1c,
            left_up2: half * (d1 + mu),
            right_up2: half * (d1 - mu),
            left_down2: half * (d1c - mu),
            right_down2: half * (d1c + mu),
            diag_nl: -half * Complex64::new(d2 + lambda, omega),
            diag_nr: -half * Complex64::new(d2 + lambda, -omega),
            diag_ml: -half * Complex64::new(d2 - lambda, omega),
            diag_mr: -half * Complex64::new(d2 - lambda, -omega),
        }
    }
}

/// Writes the right side of the master equation into `out`. The index guards
/// reproduce the truncated-matrix products exactly, so the result is
/// traceless to rounding and matches the dense operator composition.
fn apply_liouvillian(
    rho: &Array2<Complex64>,
    st: &Stencil,
    sq: &[f64],
    out: &mut Array2<Complex64>,
) {
    let dim = rho.nrows();
    let top = dim - 1;
    for i in 0..dim {
        let ni = i as f64;
        let mi = if i < top { (i + 1) as f64 } else { 0.0 };
        for j in 0..dim {
            let nj = j as f64;
            let mj = if j < top { (j + 1) as f64 } else { 0.0 };
            let mut acc = (st.diag_nl * ni + st.diag_nr * nj + st.diag_ml * mi + st.diag_mr * mj)
                * rho[[i, j]];
            if i < top && j < top {
                acc += st.hop_down * (sq[i + 1] * sq[j + 1]) * rho[[i + 1, j + 1]];
            }
            if i > 0 && j > 0 {
                acc += st.hop_up * (sq[i] * sq[j]) * rho[[i - 1, j - 1]];
            }
            if i > 0 && j < top {
                acc += st.cross_up * (sq[i] * sq[j + 1]) * rho[[i - 1, j + 1]];
            }
            if i < top && j > 0 {
                acc += st.cross_down * (sq[i + 1] * sq[j]) * rho[[i + 1, j - 1]];
            }
            if i >= 2 {
                acc += st.left_up2 * (sq[i] * sq[i - 1]) * rho[[i - 2, j]];
            }
            if j + 2 <= top {
                acc += st.right_up2 * (sq[j + 1] * sq[j + 2]) * rho[[i, j + 2]];
            }
            if i + 2 <= top {
                acc += st.left_down2 * (sq[i + 1] * sq[i + 2]) * rho[[i + 2, j]];
            }
            if j >= 2 {
                acc += st.right_down2 * (sq[j] * sq[j - 1]) * rho[[i, j - 2]];
            }
            out[[i, j]] = acc;
        }
    }
}

/// Time derivative of a density matrix under the master equation.
pub fn liouvillian_apply(rho: &FockDensityMatrix, params: &OscillatorParams) -> FockDensityMatrix {
    let st = Stencil::new(params);
    let sq: Vec<f64> = (0..=rho.dim).map(|k| (k as f64).sqrt()).collect();
    let mut out = Array2::zeros((rho.dim, rho.dim));
    apply_liouvillian(&rho.elements, &st, &sq, &mut out);
    FockDensityMatrix { dim: rho.dim, elements: out, time: rho.time }
}

/// Ladder-operator moments read off a Fock-basis matrix by trace sums.
pub fn expectations(rho: &Array2<Complex64>, time: f64) -> MomentState {
    let dim = rho.nrows();
    let mut exp_a = Complex64::ZERO;
    let mut exp_a2 = Complex64::ZERO;
    let mut exp_n = 0.0;
    for k in 0..dim {
        let kf = k as f64;
        exp_n += kf * rho[[k, k]].re;
        if k >= 1 {
            exp_a += kf.sqrt() * rho[[k, k - 1]];
        }
        if k >= 2 {
            exp_a2 += (kf * (kf - 1.0)).sqrt() * rho[[k, k - 2]];
        }
    }
    MomentState {
        exp_a,
        exp_adag: exp_a.conj(),
        exp_a2,
        exp_adag2: exp_a2.conj(),
        exp_n,
        time,
    }
}

/// One integration run: recorded moments plus integrator health figures.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub moments: Vec<MomentState>,
    pub final_rho: FockDensityMatrix,
    /// Largest |trace(t) - trace(0)| seen during the run.
    pub trace_drift: f64,
    /// Largest entrywise Hermiticity residual before each symmetrization.
    pub hermiticity_residual: f64,
    /// Largest top-level occupation seen; a truncation-quality indicator.
    pub tail_occupancy: f64,
}

impl Trajectory {
    /// Moment state closest to the requested time.
    pub fn at(&self, t: f64) -> &MomentState {
        let mut best = 0;
        let mut gap = f64::INFINITY;
        for (k, &tk) in self.times.iter().enumerate() {
            let g = (tk - t).abs();
            if g < gap {
                gap = g;
                best = k;
            }
        }
        &self.moments[best]
    }
}

const TRACE_DRIFT_LIMIT: f64 = 1e-6;
const TAIL_LIMIT: f64 = 1e-5;

/// Integrate the master equation with fixed-step RK4, symmetrizing each step
/// and watching the integrator health.
///
/// The truncated generator conserves the trace exactly (its edge rules close
/// the hierarchy), so an inadequate basis shows up as population reaching the
/// top level rather than as probability loss; both indicators are monitored
/// and either one past its limit aborts the run.
pub fn evolve(
    initial: &InitialState,
    cfg: &IntegratorConfig,
    params: &OscillatorParams,
) -> Result<Trajectory> {
    let dim = cfg.dim;
    let mut rho = initial.density_matrix(dim)?;
    let steps = if cfg.t_final == 0.0 {
        0
    } else {
        (cfg.t_final / cfg.dt).round().max(1.0) as usize
    };
    let dt = if steps > 0 { cfg.t_final / steps as f64 } else { cfg.dt };

    let st = Stencil::new(params);
    let sq: Vec<f64> = (0..=dim).map(|k| (k as f64).sqrt()).collect();
    let trace =
        |m: &Array2<Complex64>| -> f64 { (0..dim).map(|k| m[[k, k]].re).sum() };
    let trace0 = trace(&rho);

    let mut k1 = Array2::zeros((dim, dim));
    let mut k2 = Array2::zeros((dim, dim));
    let mut k3 = Array2::zeros((dim, dim));
    let mut k4 = Array2::zeros((dim, dim));
    let mut stage = Array2::zeros((dim, dim));

    let mut times = Vec::with_capacity(steps + 1);
    let mut moments = Vec::with_capacity(steps + 1);
    times.push(0.0);
    moments.push(expectations(&rho, 0.0));
    let mut trace_drift: f64 = 0.0;
    let mut herm_residual: f64 = 0.0;
    let mut tail: f64 = rho[[dim - 1, dim - 1]].re;
    if tail > TAIL_LIMIT {
        return Err(Error::TruncationBreach { drift: tail, dim });
    }

    for step in 0..steps {
        apply_liouvillian(&rho, &st, &sq, &mut k1);
        stage.assign(&rho);
        stage.scaled_add(Complex64::new(0.5 * dt, 0.0), &k1);
        apply_liouvillian(&stage, &st, &sq, &mut k2);
        stage.assign(&rho);
        stage.scaled_add(Complex64::new(0.5 * dt, 0.0), &k2);
        apply_liouvillian(&stage, &st, &sq, &mut k3);
        stage.assign(&rho);
        stage.scaled_add(Complex64::new(dt, 0.0), &k3);
        apply_liouvillian(&stage, &st, &sq, &mut k4);

        let w = dt / 6.0;
        for i in 0..dim {
            for j in 0..dim {
                rho[[i, j]] +=
                    w * (k1[[i, j]] + 2.0 * k2[[i, j]] + 2.0 * k3[[i, j]] + k4[[i, j]]);
            }
        }

        // symmetrize, recording how far the step wandered off Hermitian
        let mut step_resid: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                let u = rho[[i, j]];
                let v = rho[[j, i]];
                step_resid = step_resid.max((u - v.conj()).norm());
                let avg = 0.5 * (u + v.conj());
                rho[[i, j]] = avg;
                rho[[j, i]] = avg.conj();
            }
        }
        herm_residual = herm_residual.max(step_resid);

        let t = (step + 1) as f64 * dt;
        let drift = (trace(&rho) - trace0).abs();
        trace_drift = trace_drift.max(drift);
        if !drift.is_finite() || drift > TRACE_DRIFT_LIMIT {
            return Err(Error::TruncationBreach { drift, dim });
        }
        let top = rho[[dim - 1, dim - 1]].re;
        tail = tail.max(top);
        if top > TAIL_LIMIT {
            return Err(Error::TruncationBreach { drift: top, dim });
        }
        times.push(t);
        moments.push(expectations(&rho, t));
    }

    Ok(Trajectory {
        times,
        moments,
        final_rho: FockDensityMatrix { dim, elements: rho, time: cfg.t_final },
        trace_drift,
        hermiticity_residual: herm_residual,
        tail_occupancy: tail,
    })
}

/// `evolve` with automatic dimension escalation after a truncation breach.
pub fn evolve_auto(
    initial: &InitialState,
    cfg: &IntegratorConfig,
    params: &OscillatorParams,
) -> Result<Trajectory> {
    let mut dim = cfg.dim;
    let mut last = None;
    for _ in 0..4 {
        let attempt = IntegratorConfig::for_params(params, cfg.t_final, dim)
            .map(|auto| IntegratorConfig { dt: cfg.dt.min(auto.dt), ..auto })?;
        match evolve(initial, &attempt, params) {
            Err(Error::TruncationBreach { drift, dim: d }) => {
                last = Some(Error::TruncationBreach { drift, dim: d });
                dim = dim * 3 / 2 + 4;
            }
            other => return other,
        }
    }
    Err(last.expect("loop ran at least once"))
}

/// Density matrix reassembled by quadrature over the phase-space Green
/// function; a slow independent check of the closed-form matrix elements.
pub fn rho_from_p_quadrature(
    t: f64,
    alpha0: Complex64,
    params: &OscillatorParams,
    dim: usize,
) -> Result<FockDensityMatrix> {
    if dim < 1 {
        return Err(Error::InvalidInput("dim must be >= 1".into()));
    }
    let sigma = sigma_t(t, params)?;
    let mean = propagator(t, params).apply(alpha0);
    // probe the distribution once so availability errors surface first
    p_green(mean, t, alpha0, params)?;

    let spread = (sigma.s12 + sigma.s11.norm()).sqrt();
    let half_width = 7.0 * spread;
    let n_grid = 400usize;
    let step = 2.0 * half_width / n_grid as f64;
    let mut elements: Array2<Complex64> = Array2::zeros((dim, dim));
    let mut amp = vec![Complex64::ZERO; dim];
    for ix in 0..=n_grid {
        for iy in 0..=n_grid {
            let alpha = Complex64::new(
                mean.re - half_width + ix as f64 * step,
                mean.im - half_width + iy as f64 * step,
            );
            let weight = p_green(alpha, t, alpha0, params)? * step * step;
            if weight == 0.0 {
                continue;
            }
            // amp[m] = alpha^m exp(-|alpha|^2/2) / sqrt(m!)
            let mut a = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
            for (m, slot) in amp.iter_mut().enumerate() {
                *slot = a;
                a = a * alpha / ((m + 1) as f64).sqrt();
            }
            for m in 0..dim {
                for n in 0..dim {
                    elements[[m, n]] += weight * amp[m] * amp[n].conj();
                }
            }
        }
    }
    FockDensityMatrix::new(elements, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_matrix::rho_element;
    use crate::moments;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gibbs(lambda: f64, mu: f64, omega: f64, k_t: f64) -> OscillatorParams {
        OscillatorParams::thermal(1.0, 1.0, omega, lambda, mu, k_t).unwrap()
    }

    fn random_hermitian(dim: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in i..dim {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if i == j {
                    m[[i, j]] = Complex64::new(z.re, 0.0);
                } else {
                    m[[i, j]] = z;
                    m[[j, i]] = z.conj();
                }
            }
        }
        m
    }

    fn apply(rho: &Array2<Complex64>, p: &OscillatorParams) -> Array2<Complex64> {
        let st = Stencil::new(p);
        let sq: Vec<f64> = (0..=rho.nrows()).map(|k| (k as f64).sqrt()).collect();
        let mut out = Array2::zeros(rho.dim());
        apply_liouvillian(rho, &st, &sq, &mut out);
        out
    }

    fn trace(m: &Array2<Complex64>) -> Complex64 {
        (0..m.nrows()).map(|k| m[[k, k]]).sum()
    }

    #[test]
    fn ladder_commutator_off_the_edge() {
        let ops = FockOperators::new(12).unwrap();
        let comm = ops.annihilate.dot(&ops.create) - ops.create.dot(&ops.annihilate);
        for i in 0..11 {
            for j in 0..11 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((comm[[i, j]] - expect).norm() < 1e-14);
            }
        }
        assert!((comm[[11, 11]] + 11.0).norm() < 1e-12);
    }

    #[test]
    fn coherent_vacuum_matches_the_ground_level() {
        let a = InitialState::Coherent(Complex64::ZERO).density_matrix(8).unwrap();
        let b = InitialState::Fock(0).density_matrix(8).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-15);
        }
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let cfg = IntegratorConfig::for_params(&p, 0.5, 24).unwrap();
        let traj = evolve(&InitialState::Coherent(Complex64::ZERO), &cfg, &p).unwrap();
        let end = traj.moments.last().unwrap();
        assert!(end.exp_n.is_finite() && end.exp_n > 0.0);
        assert!(end.exp_a.norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_reduces_at_zero_coupling() {
        let p = gibbs(1.0, 0.4, 1.3, 1.0);
        let ops = FockOperators::new(10).unwrap();
        let h = ops.hamiltonian(&p);
        for i in 0..10 {
            for j in 0..10 {
                assert!((h[[i, j]] - h[[j, i]].conj()).norm() < 1e-12);
            }
        }
        let free = OscillatorParams::new(1.0, 1.0, 1.3, 1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let h0 = ops.hamiltonian(&free);
        assert!((h0[[3, 3]] - Complex64::new(1.3 * 3.5, 0.0)).norm() < 1e-14);
        assert!((&h0 - &ops.hamiltonian_free(&free)).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn initial_states_have_the_advertised_occupations() {
        let dim = 40;
        let fock = InitialState::Fock(2).density_matrix(dim).unwrap();
        assert_abs_diff_eq!(expectations(&fock, 0.0).exp_n, 2.0, epsilon = 1e-14);

        let th = InitialState::Thermal(0.5).density_matrix(dim).unwrap();
        assert_abs_diff_eq!(expectations(&th, 0.0).exp_n, 0.5, epsilon = 1e-10);
        assert!(trace(&th).re <= 1.0);

        let po = InitialState::PoissonDiagonal(1.5).density_matrix(dim).unwrap();
        assert_abs_diff_eq!(expectations(&po, 0.0).exp_n, 1.5, epsilon = 1e-10);

        let alpha = Complex64::new(0.8, -0.3);
        let co = InitialState::Coherent(alpha).density_matrix(dim).unwrap();
        let m = expectations(&co, 0.0);
        assert!((m.exp_a - alpha).norm() < 1e-10);
        assert!((m.exp_a2 - alpha * alpha).norm() < 1e-10);
        assert_abs_diff_eq!(m.exp_n, alpha.norm_sqr(), epsilon = 1e-10);

        assert!(InitialState::Fock(40).density_matrix(dim).is_err());
    }

    #[test]
    fn stencil_matches_dense_operator_composition() {
        let p = OscillatorParams::new(1.0, 1.0, 1.1, 0.9, 0.6, 1.2, 0.8, 0.15).unwrap();
        let d = derive(&p);
        let dim = 14;
        let ops = FockOperators::new(dim).unwrap();
        let rho = random_hermitian(dim, 3);
        let a = &ops.annihilate;
        let adag = &ops.create;
        let n_op = adag.dot(a);
        let m_op = a.dot(adag);
        let lam = p.lambda();
        let om = p.omega();
        let mu = p.mu();
        let c = |z: Complex64, m: Array2<Complex64>| m.mapv(|v| z * v);
        let dense = c(Complex64::new(d.d2 + lam, 0.0), a.dot(&rho).dot(adag))
            + c(Complex64::new(d.d2 - lam, 0.0), adag.dot(&rho).dot(a))
            + c(-d.d1, adag.dot(&rho).dot(adag))
            + c(-d.d1.conj(), a.dot(&rho).dot(a))
            + c(0.5 * (d.d1 + mu), adag.dot(adag).dot(&rho))
            + c(0.5 * (d.d1 - mu), rho.dot(adag).dot(adag))
            + c(0.5 * (d.d1.conj() - mu), a.dot(a).dot(&rho))
            + c(0.5 * (d.d1.conj() + mu), rho.dot(a).dot(a))
            + c(-0.5 * Complex64::new(d.d2 + lam, om), n_op.dot(&rho))
            + c(-0.5 * Complex64::new(d.d2 + lam, -om), rho.dot(&n_op))
            + c(-0.5 * Complex64::new(d.d2 - lam, om), m_op.dot(&rho))
            + c(-0.5 * Complex64::new(d.d2 - lam, -om), rho.dot(&m_op));
        let fused = apply(&rho, &p);
        for i in 0..dim {
            for j in 0..dim {
                assert!(
                    (dense[[i, j]] - fused[[i, j]]).norm() < 1e-13,
                    "mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn liouvillian_is_traceless() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let dim = 16;
        let mixed = Array2::from_diag(&ndarray::Array1::from_vec(vec![
            Complex64::new(1.0 / dim as f64, 0.0);
            dim
        ]));
        assert!(trace(&apply(&mixed, &p)).norm() < 1e-14);
        let rho = random_hermitian(dim, 9);
        assert!(trace(&apply(&rho, &p)).norm() < 1e-13);
    }

    #[test]
    fn liouvillian_drives_moments_by_the_closed_equations() {
        // Tr[L(rho) X] identities for X = a, a^2, a+ a on random input
        let p = OscillatorParams::new(1.0, 1.0, 1.0, 1.0, 0.5, 1.1, 0.9, 0.1).unwrap();
        let d = derive(&p);
        let dim = 18;
        // zero the outermost band so truncation edge effects stay out of the sums
        let mut rho = random_hermitian(dim, 5);
        for k in 0..dim {
            rho[[dim - 1, k]] = Complex64::ZERO;
            rho[[k, dim - 1]] = Complex64::ZERO;
            rho[[dim - 2, k]] = Complex64::ZERO;
            rho[[k, dim - 2]] = Complex64::ZERO;
        }
        let m0 = expectations(&rho, 0.0);
        let md = expectations(&apply(&rho, &p), 0.0);
        // trace sums on a non-density input: exp_adag entries below are
        // conjugates of trace sums, valid because rho is Hermitian
        let rhs_a = -Complex64::new(p.lambda(), p.omega()) * m0.exp_a + p.mu() * m0.exp_adag;
        assert!((md.exp_a - rhs_a).norm() < 1e-12);
        let tr = trace(&rho);
        let rhs_a2 = -2.0 * Complex64::new(p.lambda(), p.omega()) * m0.exp_a2
            + 2.0 * p.mu() * m0.exp_n
            + (d.d1 + p.mu()) * tr;
        assert!((md.exp_a2 - rhs_a2).norm() < 1e-12);
        let rhs_n = -2.0 * p.lambda() * m0.exp_n
            + p.mu() * (m0.exp_a2 + m0.exp_adag2).re
            + (d.d2 - p.lambda()) * tr.re;
        assert!((md.exp_n - rhs_n).abs() < 1e-12);
    }

    #[test]
    fn gibbs_state_is_stationary() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let nbar = moments::asymptotic_number(&p).unwrap();
        let norm_at = |dim: usize| -> f64 {
            let rho = InitialState::Thermal(nbar).density_matrix(dim).unwrap();
            apply(&rho, &p).iter().map(|z| z.norm()).fold(0.0, f64::max)
        };
        let coarse = norm_at(20);
        let fine = norm_at(40);
        assert!(fine <= coarse);
        assert!(fine < 1e-8, "residual {fine}");
    }

    #[test]
    fn config_enforces_the_step_heuristic() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        assert!(IntegratorConfig::new(0.05, 1.0, 30, &p).is_err());
        assert!(IntegratorConfig::new(0.002, 1.0, 30, &p).is_ok());
        let auto = IntegratorConfig::for_params(&p, 1.0, 60).unwrap();
        assert!(auto.dt > 0.0 && auto.dt < 0.01);
    }

    #[test]
    fn trajectory_matches_the_closed_form_moments() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let alpha0 = Complex64::new(0.8, 0.0);
        let cfg = IntegratorConfig::new(2.5e-3, 5.0, 50, &p).unwrap();
        let traj = evolve(&InitialState::Coherent(alpha0), &cfg, &p).unwrap();
        assert!(traj.trace_drift < 1e-8, "drift {}", traj.trace_drift);
        assert!(traj.hermiticity_residual < 1e-10);

        let initial = MomentState::coherent(alpha0);
        for &t in &[0.5, 2.0, 5.0] {
            let numeric = traj.at(t);
            let exact = moments::evolve(&initial, t, &p).unwrap();
            assert!((numeric.exp_a - exact.exp_a).norm() < 1e-6, "t={t}");
            assert!((numeric.exp_a2 - exact.exp_a2).norm() < 1e-6, "t={t}");
            assert!((numeric.exp_n - exact.exp_n).abs() < 1e-6, "t={t}");
        }
        assert!(traj.final_rho.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn trajectory_moments_satisfy_the_ode_by_finite_difference() {
        let p = gibbs(0.8, 0.2, 1.0, 1.2);
        let cfg = IntegratorConfig::new(2e-3, 1.0, 30, &p).unwrap();
        let traj = evolve(&InitialState::Coherent(Complex64::new(0.5, 0.3)), &cfg, &p).unwrap();
        let d = derive(&p);
        let k = traj.times.len() / 2;
        let dt = traj.times[1] - traj.times[0];
        let (prev, here, next) = (&traj.moments[k - 1], &traj.moments[k], &traj.moments[k + 1]);
        let da = (next.exp_a - prev.exp_a) / (2.0 * dt);
        let rhs_a = -Complex64::new(p.lambda(), p.omega()) * here.exp_a + p.mu() * here.exp_adag;
        assert!((da - rhs_a).norm() < 1e-6);
        let dn = (next.exp_n - prev.exp_n) / (2.0 * dt);
        let rhs_n = -2.0 * p.lambda() * here.exp_n
            + p.mu() * (here.exp_a2 + here.exp_adag2).re
            + d.d2
            - p.lambda();
        assert!((dn - rhs_n).abs() < 1e-6);
    }

    #[test]
    fn near_closed_system_keeps_its_energy_for_one_period() {
        let p = OscillatorParams::new(1.0, 1.0, 1.0, 1e-6, 0.0, 1e-6, 1e-6, 0.0).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let cfg = IntegratorConfig::new(2e-3, period, 16, &p).unwrap();
        let traj = evolve(&InitialState::Fock(2), &cfg, &p).unwrap();
        assert_abs_diff_eq!(traj.moments[0].exp_n, 2.0, epsilon = 1e-12);
        let last = traj.moments.last().unwrap();
        assert!((last.exp_n - 2.0).abs() < 1e-4, "drifted to {}", last.exp_n);
    }

    #[test]
    fn heating_bath_in_a_tight_basis_breaches_truncation() {
        let p = gibbs(0.6, 0.0, 1.0, 4.0);
        let cfg = IntegratorConfig::new(2e-3, 4.0, 8, &p).unwrap();
        let out = evolve(&InitialState::PoissonDiagonal(3.0), &cfg, &p);
        assert!(matches!(out, Err(Error::TruncationBreach { .. })), "got {out:?}");
    }

    #[test]
    fn escalation_recovers_from_a_breach() {
        let p = gibbs(0.6, 0.0, 1.0, 4.0);
        let cfg = IntegratorConfig::new(2e-3, 4.0, 8, &p).unwrap();
        let traj = evolve_auto(&InitialState::PoissonDiagonal(3.0), &cfg, &p).unwrap();
        assert!(traj.final_rho.dim > 8);
        let nbar = moments::asymptotic_number(&p).unwrap();
        let last = traj.moments.last().unwrap();
        assert!((last.exp_n - nbar).abs() < 0.1 * nbar, "{} vs {nbar}", last.exp_n);
    }

    #[test]
    fn quadrature_rho_agrees_with_the_closed_form() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let alpha0 = Complex64::new(0.8, 0.0);
        let t = 0.5;
        let rho = rho_from_p_quadrature(t, alpha0, &p, 7).unwrap();
        assert!(rho.hermiticity_residual() < 1e-8);
        for m in 0..7 {
            for n in 0..7 {
                let closed = rho_element(m, n, t, alpha0, &p).unwrap();
                assert!(
                    (rho.elements[[m, n]] - closed).norm() < 1e-5,
                    "m={m} n={n}: {} vs {closed}",
                    rho.elements[[m, n]]
                );
            }
        }
    }

    #[test]
    fn quadrature_ground_population_reaches_the_thermal_value() {
        let p = gibbs(1.0, 0.3, 1.0, 1.0);
        let nbar = moments::asymptotic_number(&p).unwrap();
        let rho = rho_from_p_quadrature(25.0, Complex64::new(0.6, 0.2), &p, 4).unwrap();
        assert_abs_diff_eq!(rho.elements[[0, 0]].re, 1.0 / (1.0 + nbar), epsilon = 1e-6);
    }
}
