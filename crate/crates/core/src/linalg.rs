//! Small dense helpers: linear solves, Hermitian eigenvalues, stable sums.
//!
//! Everything here is sized for matrices of a few dozen rows at most, so the
//! plain O(n^3) algorithms are used without blocking or iterative refinement.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gaussian elimination with partial pivoting for a square complex system.
pub fn solve_complex(a: &Array2<Complex64>, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::InvalidInput(format!(
            "solve_complex: shape mismatch {}x{} vs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale: f64 = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, m[[r, col]].norm()))
            .fold((col, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pivot_abs < 1e-14 * scale {
            return Err(Error::DegenerateRegime(format!(
                "singular linear system (pivot {pivot_abs:.3e} in column {col})"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap([col, k], [pivot_row, k]);
            }
            rhs.swap(col, pivot_row);
        }
        let inv = m[[col, col]].finv();
        for r in col + 1..n {
            let factor = m[[r, col]] * inv;
            if factor == Complex64::ZERO {
                continue;
            }
            for k in col..n {
                let sub = factor * m[[col, k]];
                m[[r, k]] -= sub;
            }
            let sub = factor * rhs[col];
            rhs[r] -= sub;
        }
    }
    let mut x = Array1::<Complex64>::zeros(n);
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for k in r + 1..n {
            acc -= m[[r, k]] * x[k];
        }
        x[r] = acc * m[[r, r]].finv();
    }
    Ok(x)
}

pub fn solve_real(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let ac = a.mapv(|v| Complex64::new(v, 0.0));
    let bc = b.mapv(|v| Complex64::new(v, 0.0));
    let x = solve_complex(&ac, &bc)?;
    Ok(x.mapv(|z| z.re))
}

/// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi rotations.
/// Returns them sorted ascending.
pub fn hermitian_eigenvalues(input: &Array2<Complex64>) -> Vec<f64> {
    let n = input.nrows();
    assert_eq!(n, input.ncols(), "hermitian_eigenvalues: square matrix required");
    if n == 0 {
        return Vec::new();
    }
    let mut a = input.clone();
    let scale: f64 = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let gamma = a[[p, q]];
                let gabs = gamma.norm();
                if gabs <= 1e-300 {
                    continue;
                }
                let phase = gamma / gabs;
                let alpha = a[[p, p]].re;
                let beta = a[[q, q]].re;
                let tau = (beta - alpha) / (2.0 * gabs);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sigma = phase * s;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    let new_kp = akp * c - akq * sigma.conj();
                    let new_kq = akp * sigma + akq * c;
                    a[[k, p]] = new_kp;
                    a[[k, q]] = new_kq;
                    a[[p, k]] = new_kp.conj();
                    a[[q, k]] = new_kq.conj();
                }
                let shift = 2.0 * c * s * gabs;
                a[[p, p]] = Complex64::new(c * c * alpha + s * s * beta - shift, 0.0);
                a[[q, q]] = Complex64::new(s * s * alpha + c * c * beta + shift, 0.0);
                a[[p, q]] = Complex64::ZERO;
                a[[q, p]] = Complex64::ZERO;
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Eigenvalues of a real symmetric 2x2 matrix, ascending.
pub fn sym2_eigenvalues(a11: f64, a12: f64, a22: f64) -> (f64, f64) {
    let mean = 0.5 * (a11 + a22);
    let radius = (0.25 * (a11 - a22) * (a11 - a22) + a12 * a12).sqrt();
    (mean - radius, mean + radius)
}

const LN_FACTORIAL_LEN: usize = 4096;

/// ln(n!) from a lazily built table; n is capped well above any basis size
/// used in this crate.
pub fn ln_factorial(n: usize) -> f64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_LEN);
        t.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..LN_FACTORIAL_LEN {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    table[n]
}

/// Compensated (Kahan) accumulator for f64.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated accumulator for complex terms (separate real/imag carries).
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    pub fn add(&mut self, value: Complex64) {
        self.re.add(value.re);
        self.im.add(value.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn solve_complex_roundtrip() {
        let a = array![
            [Complex64::new(2.0, 1.0), Complex64::new(0.5, -0.3), Complex64::new(0.0, 1.0)],
            [Complex64::new(-1.0, 0.0), Complex64::new(3.0, 0.2), Complex64::new(0.7, 0.0)],
            [Complex64::new(0.1, 0.4), Complex64::new(0.0, -2.0), Complex64::new(1.5, 1.5)],
        ];
        let x_true = array![
            Complex64::new(1.0, -1.0),
            Complex64::new(0.25, 2.0),
            Complex64::new(-0.75, 0.5),
        ];
        let b = a.dot(&x_true);
        let x = solve_complex(&a, &b).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(x[i].re, x_true[i].re, epsilon = 1e-12);
            assert_abs_diff_eq!(x[i].im, x_true[i].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_complex_rejects_singular() {
        let a = array![
            [Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)],
            [Complex64::new(2.0, 0.0), Complex64::new(4.0, 0.0)],
        ];
        let b = array![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)];
        assert!(solve_complex(&a, &b).is_err());
    }

    #[test]
    fn jacobi_matches_closed_form_2x2() {
        let a = array![
            [Complex64::new(2.0, 0.0), Complex64::new(0.3, -0.4)],
            [Complex64::new(0.3, 0.4), Complex64::new(-1.0, 0.0)],
        ];
        let eig = hermitian_eigenvalues(&a);
        // roots of x^2 - tr x + det with det = -2 - 0.25
        let tr = 1.0f64;
        let det = -2.0f64 - 0.25;
        let disc = (tr * tr - 4.0 * det).sqrt();
        assert_abs_diff_eq!(eig[0], 0.5 * (tr - disc), epsilon = 1e-12);
        assert_abs_diff_eq!(eig[1], 0.5 * (tr + disc), epsilon = 1e-12);
    }

    #[test]
    fn jacobi_diagonal_passthrough() {
        let a = array![
            [Complex64::new(3.0, 0.0), Complex64::ZERO],
            [Complex64::ZERO, Complex64::new(-5.0, 0.0)],
        ];
        let eig = hermitian_eigenvalues(&a);
        assert_eq!(eig, vec![-5.0, 3.0]);
    }

    #[test]
    fn ln_factorial_values() {
        assert_abs_diff_eq!(ln_factorial(0), 0.0);
        assert_abs_diff_eq!(ln_factorial(1), 0.0);
        assert_abs_diff_eq!(ln_factorial(5), 120f64.ln(), epsilon = 1e-13);
        let direct: f64 = (1..=170).map(|k| (k as f64).ln()).sum();
        assert_abs_diff_eq!(ln_factorial(170), direct, epsilon = 1e-9);
    }

    #[test]
    fn kahan_beats_naive_on_adversarial_sum() {
        let mut k = KahanSum::default();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        assert_abs_diff_eq!(k.value(), 1.0 + 1e-10, epsilon = 1e-14);
    }
}
