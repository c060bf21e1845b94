//! Finite-difference, complex-step and hyper-dual checks of the analytic
//! derivative.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{reduced_objective, solve, Problem};
use crate::levelset::{classify_node, lift, perturb, symmetric_difference_area, NodeClass};
use crate::scalar::{ComplexScalar, HyperDual, Scalar};
use crate::sensitivity::{area_derivative, ts_derivative};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fd,
    Cs,
    Hd,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fd, Method::Cs, Method::Hd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fd => "fd",
            Method::Cs => "cs",
            Method::Hd => "hd",
        }
    }

    /// Steps used when none are configured.
    pub fn default_steps(self) -> Vec<f64> {
        match self {
            Method::Fd => half_decades(1, 8),
            Method::Cs => half_decades(1, 10),
            Method::Hd => (0..=6).map(|e| 10f64.powi(-e)).collect(),
        }
    }
}

/// `10^{-a}, 10^{-a-1/2}, …, 10^{-b}`.
pub fn half_decades(a: i32, b: i32) -> Vec<f64> {
    (2 * a..=2 * b).map(|e| 10f64.powf(-0.5 * e as f64)).collect()
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "fd" => Ok(Method::Fd),
            "cs" => Ok(Method::Cs),
            "hd" => Ok(Method::Hd),
            other => Err(Error::InvalidParams(format!("unknown verification method `{other}`"))),
        }
    }
}

/// `d_k ã` at node `k`, rejecting a vanishing rate.
fn area_rate(problem: &Problem, phi: &[f64], k: usize) -> Result<f64> {
    let total = area_derivative(problem, phi, k)?.total;
    if total == 0.0 {
        Err(Error::DegenerateDenominator { node: k })
    } else {
        Ok(total)
    }
}

/// Negativity pattern of every element around `k` under a perturbation.
fn local_pattern<S: Scalar>(problem: &Problem, phi: &[S], k: usize) -> Vec<[bool; 3]> {
    let mesh = problem.mesh();
    mesh.node_elements(k)
        .iter()
        .map(|&l| {
            let [a, b, c] = mesh.element(l);
            [phi[a].is_negative(), phi[b].is_negative(), phi[c].is_negative()]
        })
        .collect()
}

fn real_perturbation(phi: &[f64], k: usize, eps: f64, class: NodeClass) -> Vec<f64> {
    perturb(phi, k, eps, class.perturbation())
}

/// True when the real perturbation at `eps` and `eps/2` produces the same
/// local cut configuration as the infinitesimal one.
pub fn fd_step_is_stable(problem: &Problem, phi: &[f64], k: usize, eps: f64) -> bool {
    let class = classify_node(problem.mesh(), phi, k);
    let hd = perturb(&lift::<HyperDual>(phi), k, HyperDual::new(0.0, 1.0, 1.0, 0.0), class.perturbation());
    let limit = local_pattern(problem, &hd, k);
    [eps, 0.5 * eps]
        .iter()
        .all(|&e| local_pattern(problem, &real_perturbation(phi, k, e, class), k) == limit)
}

fn fd_with_base(problem: &Problem, phi: &[f64], k: usize, eps: f64, base: f64) -> Result<f64> {
    let class = classify_node(problem.mesh(), phi, k);
    let pert = real_perturbation(phi, k, eps, class);
    let area = symmetric_difference_area(problem.mesh(), phi, &pert)?;
    if area == 0.0 {
        return Err(Error::DegenerateDenominator { node: k });
    }
    Ok((reduced_objective(problem, &pert)? - base) / area)
}

/// `(ℛ(O_{k,ε}φ) − ℛ(φ)) / |Ω(O_{k,ε}φ) △ Ω(φ)|` with a full re-solve.
///
/// Fails with [`Error::UnstableStep`] when `ε` changes the local cut
/// configuration relative to the limit `ε → 0⁺`.
pub fn fd_quotient(problem: &Problem, phi: &[f64], k: usize, eps: f64) -> Result<f64> {
    check_len(problem.mesh().num_nodes(), phi.len())?;
    if !fd_step_is_stable(problem, phi, k, eps) {
        return Err(Error::UnstableStep { node: k, step: eps });
    }
    fd_with_base(problem, phi, k, eps, reduced_objective(problem, phi)?)
}

fn cs_with_base(problem: &Problem, phi: &[f64], k: usize, h: f64, base: f64) -> Result<f64> {
    let class = classify_node(problem.mesh(), phi, k);
    let rate = area_rate(problem, phi, k)?;
    let pert = perturb(&lift::<ComplexScalar>(phi), k, ComplexScalar::new(0.0, h), class.perturbation());
    let r = reduced_objective(problem, &pert)?;
    Ok(match class {
        NodeClass::Shape => r.im / (h * rate),
        _ => (r.re - base) / (-h * h * rate),
    })
}

/// Complex-step derivative: `Im ℛ(S_{k,ih}φ)/(h d_k ã)` at shape nodes and
/// `Re(ℛ(T_{k,ih}φ) − ℛ(φ))/(−h² d_k ã)` at topological nodes.
pub fn cs_derivative(problem: &Problem, phi: &[f64], k: usize, h: f64) -> Result<f64> {
    check_len(problem.mesh().num_nodes(), phi.len())?;
    cs_with_base(problem, phi, k, h, reduced_objective(problem, phi)?)
}

/// Hyper-dual derivative with `ε = hE₁ + hE₂`: the `E₁` part over
/// `h d_k ã` at shape nodes, the `E₁E₂` part over `2h² d_k ã` otherwise.
pub fn hd_derivative(problem: &Problem, phi: &[f64], k: usize, h: f64) -> Result<f64> {
    check_len(problem.mesh().num_nodes(), phi.len())?;
    let class = classify_node(problem.mesh(), phi, k);
    let rate = area_rate(problem, phi, k)?;
    let pert = perturb(&lift::<HyperDual>(phi), k, HyperDual::new(0.0, h, h, 0.0), class.perturbation());
    let r = reduced_objective(problem, &pert)?;
    Ok(match class {
        NodeClass::Shape => r.e1 / (h * rate),
        _ => r.e12 / (2.0 * h * h * rate),
    })
}

/// Summed errors at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub step: f64,
    pub e_s: f64,
    pub e_t: f64,
    /// Nodes skipped because the step changed their cut configuration or
    /// left no measurable symmetric difference.
    pub unstable: usize,
}

/// Node with the largest error at the best step of a method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstNode {
    pub node: usize,
    pub step: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub rows: Vec<ErrorRow>,
    /// Per-node estimate at every step, `estimates[step][node]`; `NaN`
    /// marks a skipped node.
    #[serde(skip)]
    pub estimates: Vec<Vec<f64>>,
    pub worst: Option<WorstNode>,
    pub slope_s: Option<f64>,
    pub slope_t: Option<f64>,
}

impl MethodReport {
    /// Per-node estimate at the step where it is closest to `analytic`.
    pub fn best_estimate(&self, node: usize, analytic: f64) -> f64 {
        self.estimates
            .iter()
            .map(|e| e[node])
            .filter(|v| v.is_finite())
            .min_by(|a, b| (a - analytic).abs().total_cmp(&(b - analytic).abs()))
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRow {
    pub node: usize,
    pub class: NodeClass,
    pub analytic: f64,
    pub fd_best: f64,
    pub cs_best: f64,
    pub hd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub analytic: Vec<f64>,
    pub classes: Vec<NodeClass>,
    pub methods: Vec<MethodReport>,
}

impl VerificationReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    /// Largest relative HD deviation `|dJ − hd| / max(1, |dJ|)` over all
    /// steps and nodes.
    pub fn hd_max_relative_error(&self) -> Option<f64> {
        let hd = self.method(Method::Hd)?;
        Some(
            hd.estimates
                .iter()
                .flat_map(|e| e.iter().zip(&self.analytic))
                .map(|(v, a)| {
                    let d = (v - a).abs() / a.abs().max(1.0);
                    if d.is_nan() { f64::INFINITY } else { d }
                })
                .fold(0.0, f64::max),
        )
    }

    pub fn node_rows(&self) -> Vec<NodeRow> {
        let best = |m: Method, k: usize| self.method(m).map_or(f64::NAN, |r| r.best_estimate(k, self.analytic[k]));
        (0..self.analytic.len())
            .map(|k| NodeRow {
                node: k,
                class: self.classes[k],
                analytic: self.analytic[k],
                fd_best: best(Method::Fd, k),
                cs_best: best(Method::Cs, k),
                hd: self
                    .method(Method::Hd)
                    .and_then(|r| r.estimates.first())
                    .map_or(f64::NAN, |e| e[k]),
            })
            .collect()
    }

    /// `method,step,e_S,e_T` for every method and step.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("method,step,e_S,e_T\n");
        for m in &self.methods {
            for r in &m.rows {
                out.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", m.method, r.step, r.e_s, r.e_t));
            }
        }
        out
    }

    /// `node,class,analytic,fd_best,cs_best,hd`.
    pub fn nodes_csv(&self) -> String {
        let mut out = String::from("node,class,analytic,fd_best,cs_best,hd\n");
        for r in self.node_rows() {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.node,
                r.class.label(),
                r.analytic,
                r.fd_best,
                r.cs_best,
                r.hd
            ));
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Steps above the error floor.
///
/// When the smallest error occurs before the smallest step, that step and
/// all smaller ones are dropped since truncation and roundoff are of equal
/// size there; otherwise every step is kept.
pub fn pre_floor_window(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let Some(best) = pts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
    else {
        return pts;
    };
    if best + 1 < pts.len() {
        pts.truncate(best);
    }
    pts
}

fn estimate(problem: &Problem, phi: &[f64], k: usize, step: f64, method: Method, base: f64) -> Result<Option<f64>> {
    match method {
        Method::Fd => {
            if !fd_step_is_stable(problem, phi, k, step) {
                return Ok(None);
            }
            match fd_with_base(problem, phi, k, step, base) {
                Err(Error::DegenerateDenominator { .. }) => Ok(None),
                other => other.map(Some),
            }
        }
        Method::Cs => cs_with_base(problem, phi, k, step, base).map(Some),
        Method::Hd => hd_derivative(problem, phi, k, step).map(Some),
    }
}

/// Nodes with a nonzero area rate; others carry no derivative to check.
fn checked_nodes(problem: &Problem, phi: &[f64]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for k in 0..phi.len() {
        if area_derivative(problem, phi, k)?.total > 0.0 {
            out.push(k);
        }
    }
    Ok(out)
}

/// Runs one method over a list of steps.
pub fn run_method(problem: &Problem, phi: &[f64], analytic: &[f64], method: Method, steps: &[f64]) -> Result<MethodReport> {
    let n = phi.len();
    let base = reduced_objective(problem, phi)?;
    let nodes = checked_nodes(problem, phi)?;
    let classes: Vec<NodeClass> = (0..n).map(|k| classify_node(problem.mesh(), phi, k)).collect();
    let mut rows = Vec::with_capacity(steps.len());
    let mut estimates = Vec::with_capacity(steps.len());
    for &step in steps {
        let vals: Vec<Option<f64>> = nodes
            .par_iter()
            .map(|&k| estimate(problem, phi, k, step, method, base))
            .collect::<Result<_>>()?;
        let mut est = vec![f64::NAN; n];
        let (mut s, mut t, mut unstable) = (0.0, 0.0, 0);
        for (&k, v) in nodes.iter().zip(vals) {
            match v {
                Some(v) => {
                    est[k] = v;
                    let d = (v - analytic[k]).powi(2);
                    if classes[k] == NodeClass::Shape {
                        s += d;
                    } else {
                        t += d;
                    }
                }
                None => unstable += 1,
            }
        }
        rows.push(ErrorRow {
            step,
            e_s: s.sqrt(),
            e_t: t.sqrt(),
            unstable,
        });
        estimates.push(est);
    }
    let worst = rows
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.e_s + a.1.e_t).total_cmp(&(b.1.e_s + b.1.e_t)))
        .and_then(|(i, row)| {
            nodes
                .iter()
                .filter(|&&k| estimates[i][k].is_finite())
                .map(|&k| WorstNode {
                    node: k,
                    step: row.step,
                    error: (estimates[i][k] - analytic[k]).abs(),
                })
                .max_by(|a, b| a.error.total_cmp(&b.error))
        });
    let (slope_s, slope_t) = match method {
        Method::Hd => (None, None),
        Method::Cs => {
            let s: Vec<(f64, f64)> = rows.iter().filter(|r| r.step >= 1e-4).map(|r| (r.step, r.e_s)).collect();
            let t: Vec<(f64, f64)> = rows.iter().map(|r| (r.step, r.e_t)).collect();
            (loglog_slope(&pre_floor_window(&s)), loglog_slope(&pre_floor_window(&t)))
        }
        Method::Fd => {
            let s: Vec<(f64, f64)> = rows.iter().map(|r| (r.step, r.e_s)).collect();
            let t: Vec<(f64, f64)> = rows.iter().map(|r| (r.step, r.e_t)).collect();
            (loglog_slope(&pre_floor_window(&s)), loglog_slope(&pre_floor_window(&t)))
        }
    };
    Ok(MethodReport {
        method,
        rows,
        estimates,
        worst,
        slope_s,
        slope_t,
    })
}

/// Runs the requested methods against the analytic derivative at `φ`.
pub fn run_verification(problem: &Problem, phi: &[f64], methods: &[(Method, Vec<f64>)]) -> Result<VerificationReport> {
    check_len(problem.mesh().num_nodes(), phi.len())?;
    let sol = solve(problem, phi)?;
    let field = ts_derivative(problem, phi, &sol.u, &sol.p)?;
    let reports = methods
        .iter()
        .map(|(m, steps)| run_method(problem, phi, &field.dj, *m, steps))
        .collect::<Result<_>>()?;
    Ok(VerificationReport {
        analytic: field.dj,
        classes: field.classification.labels,
        methods: reports,
    })
}
