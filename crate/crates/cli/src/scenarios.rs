//! One function per subcommand; each returns the rendered data artifact plus
//! warning counts, and leaves all I/O to the caller.

use damposc::params::{ConstraintCheck, Regime};
use damposc::{density_matrix, moments, oracle, params, wigner, Error};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::FileConfig;

/// What went wrong, bucketed by exit code.
pub enum Failure {
    /// Unreadable or malformed configuration (exit 2).
    Config(String),
    /// Coefficient constraints violated (exit 3), with the offenders named.
    Constraints(Vec<&'static str>),
    /// Library error; exit 3 for domain problems, 4 for numerical breaches.
    Domain(Error),
    /// Filesystem trouble while writing results (exit 1).
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Wavepacket,
    Delta,
    Steady,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Quantity {
    A,
    A2,
    N,
    All,
}

#[derive(Default)]
pub struct Warnings {
    pub low_precision: usize,
    pub truncation_breach: usize,
    pub p_representation_unavailable: usize,
}

pub struct ScenarioOutput {
    pub data: String,
    /// Metadata document that travels next to a CSV artifact.
    pub sidecar: Option<String>,
    pub warnings: Warnings,
}

impl ScenarioOutput {
    fn plain(data: String) -> Self {
        Self { data, sidecar: None, warnings: Warnings::default() }
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn sig(v: f64) -> String {
    format!("{v:.16e}")
}

struct SigFormatter;

impl serde_json::ser::Formatter for SigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: std::io::Write + ?Sized,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Single-line JSON with every float at 17 significant digits.
pub fn render_json(v: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigFormatter);
    v.serialize(&mut ser).expect("in-memory serialization cannot fail");
    String::from_utf8(out).expect("serializer emits utf-8")
}

fn cj(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn run_validate(cfg: &FileConfig, format: Format) -> Result<ScenarioOutput, Failure> {
    let report = cfg.check()?;
    if !report.passed() {
        return Err(Failure::Constraints(report.violated()));
    }
    let p = cfg.params()?;
    let d = params::derive(&p);
    let (regime, rate) = match d.regime {
        Regime::Underdamped { big_omega } => ("underdamped", big_omega),
        Regime::Overdamped { nu } => ("overdamped", nu),
        Regime::Critical => ("critical", 0.0),
    };
    let named = [
        ("momentum_diffusion_positive", report.momentum_diffusion_positive),
        ("position_diffusion_positive", report.position_diffusion_positive),
        ("uncertainty_product", report.uncertainty_product),
        ("friction_positive", report.friction_positive),
    ];
    let data = match format {
        Format::Json => {
            let ck = |c: ConstraintCheck| json!({ "passed": c.passed, "margin": c.margin });
            let constraints: serde_json::Map<String, Value> =
                named.iter().map(|(n, c)| (n.to_string(), ck(*c))).collect();
            render_json(&json!({
                "scenario": "validate",
                "parameters": {
                    "hbar": p.hbar(), "mass": p.mass(), "omega": p.omega(),
                    "lambda": p.lambda(), "mu": p.mu(),
                    "d_pp": p.d_pp(), "d_qq": p.d_qq(), "d_pq": p.d_pq(),
                },
                "constraints": constraints,
                "derived": {
                    "d1": cj(d.d1), "d2": d.d2, "source_constant": d.d_const,
                    "regime": regime, "regime_rate": rate,
                },
                "stability_discriminant": p.stability_discriminant(),
                "asymptotic_number": moments::asymptotic_number(&p).ok(),
            }))
        }
        Format::Csv => {
            let mut s = String::from("constraint,passed,margin\n");
            for (name, c) in named {
                s.push_str(&format!("{name},{},{}\n", c.passed, sig(c.margin)));
            }
            s
        }
    };
    Ok(ScenarioOutput::plain(data))
}

const MOMENT_COLUMNS: [&str; 11] = [
    "t", "re_a", "im_a", "re_a2", "im_a2", "n", "mean_q", "mean_p", "var_q", "var_p", "cov_qp",
];

pub fn run_moments(
    cfg: &FileConfig,
    t1: f64,
    steps: usize,
    alpha0: Complex64,
    format: Format,
) -> Result<ScenarioOutput, Failure> {
    let p = cfg.params()?;
    let initial = moments::MomentState::coherent(alpha0);
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = t1 * k as f64 / steps as f64;
        let s = moments::evolve(&initial, t, &p)?;
        let q = moments::quadratures(&s, &p);
        rows.push([
            t,
            s.exp_a.re,
            s.exp_a.im,
            s.exp_a2.re,
            s.exp_a2.im,
            s.exp_n,
            q.mean_q,
            q.mean_p,
            q.var_q,
            q.var_p,
            q.cov_qp,
        ]);
    }
    let data = match format {
        Format::Csv => {
            let mut s = MOMENT_COLUMNS.join(",");
            s.push('\n');
            for row in &rows {
                let line: Vec<String> = row.iter().map(|v| sig(*v)).collect();
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s
        }
        Format::Json => render_json(&json!({
            "scenario": "moments",
            "alpha0": cj(alpha0),
            "t1": t1,
            "steps": steps,
            "columns": MOMENT_COLUMNS,
            "rows": rows,
        })),
    };
    Ok(ScenarioOutput::plain(data))
}

pub fn run_rho(
    cfg: &FileConfig,
    t1: f64,
    dim: usize,
    alpha0: Complex64,
    format: Format,
) -> Result<ScenarioOutput, Failure> {
    let p = cfg.params()?;
    let mut elements: Array2<Complex64> = Array2::zeros((dim, dim));
    let mut low_precision = 0usize;
    for m in 0..dim {
        for n in 0..dim {
            let (v, diag) = density_matrix::rho_element_detailed(
                m,
                n,
                t1,
                alpha0,
                &p,
                density_matrix::CrossTermVariant::Symmetric,
            )?;
            if diag.low_precision {
                low_precision += 1;
            }
            elements[[m, n]] = v;
        }
    }
    let rho = density_matrix::FockDensityMatrix::new(elements, t1)?;
    let data = match format {
        Format::Csv => {
            let mut s = String::from("m,n,re,im\n");
            for m in 0..dim {
                for n in 0..dim {
                    let z = rho.elements[[m, n]];
                    s.push_str(&format!("{m},{n},{},{}\n", sig(z.re), sig(z.im)));
                }
            }
            s
        }
        Format::Json => {
            let rows: Vec<Vec<[f64; 2]>> = (0..dim)
                .map(|m| (0..dim).map(|n| [rho.elements[[m, n]].re, rho.elements[[m, n]].im]).collect())
                .collect();
            render_json(&json!({
                "scenario": "rho",
                "dim": dim,
                "time": t1,
                "alpha0": cj(alpha0),
                "elements": rows,
                "trace": rho.trace(),
                "trace_deficit": rho.trace_deficit(),
                "hermiticity_residual": rho.hermiticity_residual(),
                "low_precision_count": low_precision,
            }))
        }
    };
    Ok(ScenarioOutput {
        data,
        sidecar: None,
        warnings: Warnings { low_precision, ..Warnings::default() },
    })
}

pub fn run_wigner(
    cfg: &FileConfig,
    kind: Kind,
    t1: Option<f64>,
    x10: f64,
    x20: f64,
    grid: &wigner::GridSpec,
    format: Format,
) -> Result<ScenarioOutput, Failure> {
    let p = cfg.params()?;
    let need_t1 = || {
        t1.ok_or_else(|| Failure::Config("--t1 is required for this solution kind".into()))
    };
    let (w, kind_name, time) = match kind {
        Kind::Wavepacket => {
            let t = need_t1()?;
            (wigner::wavepacket_solution(x10, x20, t, &p)?, "wavepacket", json!(t))
        }
        Kind::Delta => {
            let t = need_t1()?;
            (wigner::delta_solution(x10, x20, t, &p)?, "delta", json!(t))
        }
        Kind::Steady => (wigner::steady_state(&p)?.1, "steady", Value::Null),
    };
    let (values, grid_mass) = wigner::evaluate_grid(&w, grid)?;
    let norm_est = wigner::normalization_estimate(&w)?;
    let mut meta = json!({
        "scenario": "wigner",
        "kind": kind_name,
        "time": time,
        "mean": [w.mean_x1, w.mean_x2],
        "covariance": w.covariance(),
        "quadratic_form": {
            "phi": cj(w.phi), "psi": cj(w.psi), "chi": cj(w.chi), "b_norm": w.b_norm,
        },
        "normalization_constant": w.normalization_constant(),
        "normalization_estimate": norm_est,
        "grid_mass": grid_mass,
        "grid": {
            "x1_min": grid.x1_min, "x1_max": grid.x1_max,
            "x2_min": grid.x2_min, "x2_max": grid.x2_max,
            "n1": grid.n1, "n2": grid.n2,
        },
    });
    let out = match format {
        Format::Csv => {
            let h1 = (grid.x1_max - grid.x1_min) / (grid.n1 - 1) as f64;
            let h2 = (grid.x2_max - grid.x2_min) / (grid.n2 - 1) as f64;
            let mut s = String::from("x1,x2,w\n");
            for i in 0..grid.n1 {
                let x1 = grid.x1_min + h1 * i as f64;
                for j in 0..grid.n2 {
                    let x2 = grid.x2_min + h2 * j as f64;
                    s.push_str(&format!("{},{},{}\n", sig(x1), sig(x2), sig(values[[i, j]])));
                }
            }
            ScenarioOutput {
                data: s,
                sidecar: Some(render_json(&meta)),
                warnings: Warnings::default(),
            }
        }
        Format::Json => {
            let rows: Vec<Vec<f64>> = values.outer_iter().map(|r| r.to_vec()).collect();
            meta.as_object_mut()
                .expect("meta is an object")
                .insert("values".into(), json!(rows));
            ScenarioOutput::plain(render_json(&meta))
        }
    };
    Ok(out)
}

pub fn run_steady(cfg: &FileConfig, format: Format) -> Result<ScenarioOutput, Failure> {
    let p = cfg.params()?;
    let (cov, w) = wigner::steady_state(&p)?;
    let nbar = moments::asymptotic_number(&p)?;
    let det = cov.s11 * cov.s22 - cov.s12 * cov.s12;
    let data = match format {
        Format::Json => render_json(&json!({
            "scenario": "steady",
            "covariance": { "s11": cov.s11, "s22": cov.s22, "s12": cov.s12 },
            "det": det,
            "asymptotic_number": nbar,
            "quadratic_form": {
                "phi": cj(w.phi), "psi": cj(w.psi), "chi": cj(w.chi), "b_norm": w.b_norm,
            },
            "normalization_constant": w.normalization_constant(),
        })),
        Format::Csv => {
            let mut s = String::from("s11,s22,s12,det,asymptotic_number\n");
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                sig(cov.s11),
                sig(cov.s22),
                sig(cov.s12),
                sig(det),
                sig(nbar)
            ));
            s
        }
    };
    Ok(ScenarioOutput::plain(data))
}

/// Basis size that keeps the truncation tail irrelevant for the expected
/// excitation level; the escalating integrator covers estimation misses.
fn auto_dim(p: &damposc::params::OscillatorParams, alpha0: Complex64) -> usize {
    let envelope = moments::asymptotic_number(p)
        .unwrap_or(0.0)
        .max(alpha0.norm_sqr());
    ((6.0 * envelope + 26.0).ceil() as usize).clamp(24, 120)
}

pub fn run_oracle_compare(
    cfg: &FileConfig,
    t1: f64,
    samples: usize,
    dim: Option<usize>,
    alpha0: Complex64,
    quantity: Quantity,
    format: Format,
) -> Result<ScenarioOutput, Failure> {
    let p = cfg.params()?;
    let seed_dim = dim.unwrap_or_else(|| auto_dim(&p, alpha0));
    let icfg = oracle::IntegratorConfig::for_params(&p, t1, seed_dim)?;
    let initial_state = oracle::InitialState::Coherent(alpha0);
    let traj = if dim.is_some() {
        oracle::evolve(&initial_state, &icfg, &p)?
    } else {
        oracle::evolve_auto(&initial_state, &icfg, &p)?
    };
    let final_dim = traj.final_rho.dim;
    let mut escalations = 0usize;
    let mut d = seed_dim;
    while d != final_dim && escalations < 4 {
        d = d * 3 / 2 + 4;
        escalations += 1;
    }

    let initial = moments::MomentState::coherent(alpha0);
    let last = traj.times.len() - 1;
    let mut rows = Vec::with_capacity(samples + 1);
    let mut max_a = 0.0f64;
    let mut max_a2 = 0.0f64;
    let mut max_n = 0.0f64;
    for k in 0..=samples {
        let idx = k * last / samples;
        let t = traj.times[idx];
        let o = &traj.moments[idx];
        let a = moments::evolve(&initial, t, &p)?;
        let dev_a = (o.exp_a - a.exp_a).norm();
        let dev_a2 = (o.exp_a2 - a.exp_a2).norm();
        let dev_n = (o.exp_n - a.exp_n).abs();
        max_a = max_a.max(dev_a);
        max_a2 = max_a2.max(dev_a2);
        max_n = max_n.max(dev_n);
        rows.push([t, dev_a, dev_a2, dev_n]);
    }
    let dt_actual = if last > 0 { traj.times[1] - traj.times[0] } else { icfg.dt };

    let keep = |q: Quantity| quantity == Quantity::All || quantity == q;
    let mut deviation = serde_json::Map::new();
    if keep(Quantity::A) {
        deviation.insert("a".into(), json!(max_a));
    }
    if keep(Quantity::A2) {
        deviation.insert("a2".into(), json!(max_a2));
    }
    if keep(Quantity::N) {
        deviation.insert("n".into(), json!(max_n));
    }

    let data = match format {
        Format::Json => render_json(&json!({
            "scenario": "oracle-compare",
            "quantity": match quantity {
                Quantity::A => "a",
                Quantity::A2 => "a2",
                Quantity::N => "n",
                Quantity::All => "all",
            },
            "alpha0": cj(alpha0),
            "t1": t1,
            "samples": samples,
            "dim": final_dim,
            "dt": dt_actual,
            "max_deviation": deviation,
            "health": {
                "trace_drift": traj.trace_drift,
                "hermiticity_residual": traj.hermiticity_residual,
                "tail_occupancy": traj.tail_occupancy,
            },
        })),
        Format::Csv => {
            let mut cols = vec!["t"];
            let mut pick = Vec::new();
            for (q, name, col) in [
                (Quantity::A, "dev_a", 1),
                (Quantity::A2, "dev_a2", 2),
                (Quantity::N, "dev_n", 3),
            ] {
                if keep(q) {
                    cols.push(name);
                    pick.push(col);
                }
            }
            let mut s = cols.join(",");
            s.push('\n');
            for row in &rows {
                let mut line = vec![sig(row[0])];
                line.extend(pick.iter().map(|&c| sig(row[c])));
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s
        }
    };
    Ok(ScenarioOutput {
        data,
        sidecar: None,
        warnings: Warnings { truncation_breach: escalations, ..Warnings::default() },
    })
}
