//! Level-set descent with spherical linear interpolation along the
//! generalized derivative.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::experiment::initial_phi;
use crate::fem::{reduced_objective, solve, Problem, Solution};
use crate::levelset::{classify_node, NodeClass};
use crate::mesh::Mesh;
use crate::sensitivity::{ts_derivative, SensitivityField};

/// `(a, b)_{L²(D)}` of two P1 functions on the whole mesh.
pub fn l2_inner(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    (0..mesh.num_elements())
        .map(|l| {
            let [i, j, k] = mesh.element(l);
            let (x, y) = ([a[i], a[j], a[k]], [b[i], b[j], b[k]]);
            let diag: f64 = (0..3).map(|m| x[m] * y[m]).sum();
            let cross = (x[0] + x[1] + x[2]) * (y[0] + y[1] + y[2]);
            mesh.det_jacobian(l).abs() / 24.0 * (diag + cross)
        })
        .sum()
}

pub fn l2_norm(mesh: &Mesh, a: &[f64]) -> f64 {
    l2_inner(mesh, a, a).max(0.0).sqrt()
}

/// Angle between `φ` and the unit direction `ĝ`, with the cosine clamped.
pub fn slerp_angle(mesh: &Mesh, phi: &[f64], g_unit: &[f64]) -> f64 {
    let norm = l2_norm(mesh, phi);
    (l2_inner(mesh, phi, g_unit) / norm).clamp(-1.0, 1.0).acos()
}

/// `[sin((1−κ)θ)φ + sin(κθ)‖φ‖ĝ]/sin θ` for a unit direction `ĝ`.
///
/// Returns the angle used together with the new level set. Fails with
/// [`Error::DegenerateAngle`] when `θ` is within `tol` of 0 or π.
pub fn slerp_update(mesh: &Mesh, phi: &[f64], g_unit: &[f64], kappa: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    check_len(phi.len(), g_unit.len())?;
    let norm = l2_norm(mesh, phi);
    let theta = slerp_angle(mesh, phi, g_unit);
    if theta < tol || theta > std::f64::consts::PI - tol {
        return Err(Error::DegenerateAngle { theta });
    }
    let (a, b) = (((1.0 - kappa) * theta).sin(), (kappa * theta).sin() * norm);
    let s = theta.sin();
    let out = phi.iter().zip(g_unit).map(|(p, g)| (a * p + b * g) / s).collect();
    Ok((out, theta))
}

/// One-ring average at the topological nodes of `ψ`; shape nodes are kept.
pub fn smooth(mesh: &Mesh, psi: &[f64]) -> Vec<f64> {
    (0..psi.len())
        .map(|k| {
            if classify_node(mesh, psi, k) == NodeClass::Shape {
                psi[k]
            } else {
                let ring = mesh.one_ring(k);
                ring.iter().map(|&i| psi[i]).sum::<f64>() / ring.len() as f64
            }
        })
        .collect()
}

/// Acceptance rule along the sequence `κ, shrink·κ, shrink²·κ, …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Accept the first candidate that decreases `J`.
    FirstDecrease,
    /// After the first decrease keep shrinking while `J` still improves.
    BestDecrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub kappa_init: f64,
    pub kappa_min: f64,
    pub kappa_growth: f64,
    pub kappa_shrink: f64,
    pub smoothing: bool,
    pub line_search: LineSearch,
    pub theta_tol: f64,
    /// Iterations between snapshots; 0 disables them.
    pub snapshot_cadence: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 800,
            kappa_init: 1.0,
            kappa_min: 1e-9,
            kappa_growth: 2.0,
            kappa_shrink: 0.5,
            smoothing: true,
            line_search: LineSearch::BestDecrease,
            theta_tol: 1e-8,
            snapshot_cadence: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa_min > 0.0
            && self.kappa_min < self.kappa_init
            && self.kappa_init <= 1.0
            && self.kappa_growth >= 1.0
            && self.kappa_shrink > 0.0
            && self.kappa_shrink < 1.0
            && self.theta_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("inconsistent line-search settings: {self:?}")))
        }
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "normG")]
    pub norm_g: f64,
    /// Step accepted to reach this iterate (0 for the initial design).
    pub kappa: f64,
    pub theta: f64,
    #[serde(rename = "nTminus")]
    pub n_tminus: usize,
    #[serde(rename = "nTplus")]
    pub n_tplus: usize,
    #[serde(rename = "nS")]
    pub n_s: usize,
    #[serde(skip)]
    pub stalled: bool,
    /// `|‖ψ‖ − ‖φ_i‖|` of the accepted slerp step before smoothing.
    #[serde(skip)]
    pub psi_norm_deviation: f64,
    /// Nodes that changed sign although their derivative was not negative.
    #[serde(skip)]
    pub descent_violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    /// `G_φ` vanished: the iterate satisfies the optimality condition.
    Stationary,
    /// `φ` and `G_φ` are aligned or opposite.
    Aligned,
    /// The line search found no decrease down to `kappa_min`.
    Stalled,
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub records: Vec<IterationRecord>,
}

impl History {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Ratio of the final to the initial objective.
    pub fn reduction(&self) -> Option<f64> {
        let (first, last) = (self.records.first()?, self.records.last()?);
        Some(last.j / first.j)
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].j <= w[0].j)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,J,normG,kappa,theta,nTminus,nTplus,nS\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}\n",
                r.iter, r.j, r.norm_g, r.kappa, r.theta, r.n_tminus, r.n_tplus, r.n_s
            ));
        }
        out
    }
}

/// Current iterate with its state, adjoint and sensitivities.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub phi: Vec<f64>,
    pub solution: Solution<f64>,
    pub field: SensitivityField,
    pub norm_g: f64,
}

impl Iterate {
    pub fn new(problem: &Problem, phi: Vec<f64>) -> Result<Iterate> {
        let solution = solve(problem, &phi)?;
        let field = ts_derivative(problem, &phi, &solution.u, &solution.p)?;
        let norm_g = l2_norm(problem.mesh(), &field.g);
        Ok(Iterate {
            phi,
            solution,
            field,
            norm_g,
        })
    }

    pub fn objective(&self) -> f64 {
        self.solution.objective
    }
}

/// Result of one line search.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: Option<Iterate>,
    pub kappa: f64,
    pub theta: f64,
    pub psi_norm_deviation: f64,
    pub termination: Option<Termination>,
}

/// One descent step from `current` starting the line search at `kappa`.
pub fn step(problem: &Problem, config: &OptimizerConfig, current: &Iterate, kappa: f64) -> Result<StepOutcome> {
    let mesh = problem.mesh();
    let stop = |t| StepOutcome {
        next: None,
        kappa: 0.0,
        theta: 0.0,
        psi_norm_deviation: 0.0,
        termination: Some(t),
    };
    if current.norm_g <= 1e-12 {
        return Ok(stop(Termination::Stationary));
    }
    let g_unit: Vec<f64> = current.field.g.iter().map(|g| g / current.norm_g).collect();
    let norm = l2_norm(mesh, &current.phi);
    let j0 = current.objective();
    let candidate_at = |kappa: f64| -> Result<Option<(Vec<f64>, f64, f64, f64)>> {
        let (psi, theta) = match slerp_update(mesh, &current.phi, &g_unit, kappa, config.theta_tol) {
            Ok(v) => v,
            Err(Error::DegenerateAngle { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let dev = (l2_norm(mesh, &psi) - norm).abs();
        let psi_hat = if config.smoothing { smooth(mesh, &psi) } else { psi };
        let n_hat = l2_norm(mesh, &psi_hat);
        let candidate: Vec<f64> = psi_hat.iter().map(|v| v / n_hat).collect();
        let j = reduced_objective(problem, &candidate)?;
        Ok(Some((candidate, j, theta, dev)))
    };
    let mut kappa = kappa;
    let mut best: Option<(Vec<f64>, f64, f64, f64, f64)> = None;
    while kappa >= config.kappa_min {
        let Some((candidate, j, theta, dev)) = candidate_at(kappa)? else {
            if best.is_some() {
                break;
            }
            return Ok(stop(Termination::Aligned));
        };
        match &best {
            None if j < j0 => {
                best = Some((candidate, j, theta, dev, kappa));
                if config.line_search == LineSearch::FirstDecrease {
                    break;
                }
            }
            Some(b) if j < b.1 => best = Some((candidate, j, theta, dev, kappa)),
            Some(_) => break,
            None => {}
        }
        kappa *= config.kappa_shrink;
    }
    match best {
        Some((candidate, _, theta, dev, kappa)) => Ok(StepOutcome {
            next: Some(Iterate::new(problem, candidate)?),
            kappa,
            theta,
            psi_norm_deviation: dev,
            termination: None,
        }),
        None => Ok(stop(Termination::Stalled)),
    }
}

/// Nodes whose sign changes from `before` to `after` without a negative
/// derivative.
pub fn descent_violations(before: &Iterate, after: &[f64]) -> usize {
    before
        .field
        .classification
        .labels
        .iter()
        .enumerate()
        .filter(|&(k, &c)| {
            let flipped = match c {
                NodeClass::TPlus => after[k] < 0.0,
                NodeClass::TMinus => after[k] > 0.0,
                NodeClass::Shape => false,
            };
            flipped && before.field.dj[k] >= 0.0
        })
        .count()
}

fn record(iter: usize, it: &Iterate, kappa: f64, theta: f64) -> IterationRecord {
    let (n_tminus, n_tplus, n_s) = it.field.classification.counts();
    IterationRecord {
        iter,
        j: it.objective(),
        norm_g: it.norm_g,
        kappa,
        theta,
        n_tminus,
        n_tplus,
        n_s,
        stalled: false,
        psi_norm_deviation: 0.0,
        descent_violations: 0,
    }
}

/// Outcome of a full optimization run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub history: History,
    pub final_iterate: Iterate,
    pub termination: Termination,
}

/// Runs the descent from `φ₀ = 1/‖1‖`, calling `observer` on every iterate
/// including the initial one.
pub fn run(
    problem: &Problem,
    config: &OptimizerConfig,
    mut observer: impl FnMut(&IterationRecord, &Iterate) -> Result<()>,
) -> Result<RunResult> {
    config.validate()?;
    run_from(problem, config, initial_phi(problem.mesh()), &mut observer)
}

/// Runs the descent from a given level set.
pub fn run_from(
    problem: &Problem,
    config: &OptimizerConfig,
    phi0: Vec<f64>,
    observer: &mut dyn FnMut(&IterationRecord, &Iterate) -> Result<()>,
) -> Result<RunResult> {
    let mut current = Iterate::new(problem, phi0)?;
    let mut history = History::default();
    let first = record(0, &current, 0.0, 0.0);
    observer(&first, &current)?;
    history.records.push(first);
    let mut kappa = config.kappa_init;
    let mut termination = Termination::MaxIterations;
    for iter in 1..=config.max_iter {
        let out = step(problem, config, &current, kappa)?;
        let Some(next) = out.next else {
            termination = out.termination.unwrap_or(Termination::Stalled);
            if termination == Termination::Stalled {
                if let Some(r) = history.records.last_mut() {
                    r.stalled = true;
                }
            }
            break;
        };
        let mut rec = record(iter, &next, out.kappa, out.theta);
        rec.psi_norm_deviation = out.psi_norm_deviation;
        rec.descent_violations = descent_violations(&current, &next.phi);
        observer(&rec, &next)?;
        history.records.push(rec);
        kappa = (out.kappa * config.kappa_growth).min(1.0);
        current = next;
    }
    Ok(RunResult {
        history,
        final_iterate: current,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::target_problem;
    use crate::fem::ProblemParams;
    use crate::mesh::generate_crossed_mesh;
    use proptest::prelude::*;

    #[test]
    fn inner_product_basics() {
        let mesh = generate_crossed_mesh(16);
        let one = vec![1.0; mesh.num_nodes()];
        assert!((l2_inner(&mesh, &one, &one) - 1.0).abs() < 1e-14);
        let x = mesh.interpolate(|x, _| x);
        assert!((l2_inner(&mesh, &x, &x) - 1.0 / 3.0).abs() < 1e-3);
        // linear functions are integrated exactly against constants
        assert!((l2_inner(&mesh, &x, &one) - 0.5).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_bilinear(
            a in prop::collection::vec(-1.0f64..1.0, 41),
            b in prop::collection::vec(-1.0f64..1.0, 41),
            s in -3.0f64..3.0,
        ) {
            let mesh = generate_crossed_mesh(4);
            let ab = l2_inner(&mesh, &a, &b);
            prop_assert!((ab - l2_inner(&mesh, &b, &a)).abs() < 1e-14);
            let sa: Vec<f64> = a.iter().map(|v| s * v).collect();
            prop_assert!((l2_inner(&mesh, &sa, &b) - s * ab).abs() < 1e-13);
            prop_assert!(l2_inner(&mesh, &a, &a) >= 0.0);
        }

        #[test]
        fn slerp_preserves_unit_norm(
            a in prop::collection::vec(-1.0f64..1.0, 41),
            b in prop::collection::vec(-1.0f64..1.0, 41),
            kappa in 0.0f64..1.0,
        ) {
            let mesh = generate_crossed_mesh(4);
            let (na, nb) = (l2_norm(&mesh, &a), l2_norm(&mesh, &b));
            prop_assume!(na > 1e-3 && nb > 1e-3);
            let a: Vec<f64> = a.iter().map(|v| v / na).collect();
            let b: Vec<f64> = b.iter().map(|v| v / nb).collect();
            if let Ok((psi, _)) = slerp_update(&mesh, &a, &b, kappa, 1e-8) {
                prop_assert!((l2_norm(&mesh, &psi) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let mesh = generate_crossed_mesh(4);
        let one = vec![1.0; mesh.num_nodes()];
        let x = mesh.interpolate(|x, _| x - 0.5);
        let nx = l2_norm(&mesh, &x);
        let g: Vec<f64> = x.iter().map(|v| v / nx).collect();
        let (p0, theta) = slerp_update(&mesh, &one, &g, 0.0, 1e-8).unwrap();
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        for (a, b) in p0.iter().zip(&one) {
            assert!((a - b).abs() < 1e-15);
        }
        let (p1, _) = slerp_update(&mesh, &one, &g, 1.0, 1e-8).unwrap();
        for (a, b) in p1.iter().zip(&g) {
            assert!((a - b).abs() < 1e-14);
        }
        let (ph, _) = slerp_update(&mesh, &one, &g, 0.5, 1e-8).unwrap();
        for k in 0..one.len() {
            assert!((ph[k] - (one[k] + g[k]) / 2f64.sqrt()).abs() < 1e-14);
        }
        assert!(matches!(slerp_update(&mesh, &one, &one, 0.5, 1e-8), Err(Error::DegenerateAngle { .. })));
    }

    #[test]
    fn smoothing_rules() {
        let mesh = generate_crossed_mesh(1);
        let centre = (0..5).find(|&k| mesh.node(k) == [0.5, 0.5]).unwrap();
        let mut psi = vec![1.0; 5];
        psi[centre] = 5.0;
        let s = smooth(&mesh, &psi);
        assert!((s[centre] - 9.0 / 5.0).abs() < 1e-15);
        for k in (0..5).filter(|&k| k != centre) {
            assert!((s[k] - 8.0 / 4.0).abs() < 1e-15);
        }
        assert_eq!(smooth(&mesh, &[2.0; 5]), vec![2.0; 5]);
        let mixed = mesh.interpolate(|x, y| x + y - 0.9);
        let sm = smooth(&mesh, &mixed);
        for k in 0..5 {
            if classify_node(&mesh, &mixed, k) == NodeClass::Shape {
                assert_eq!(sm[k], mixed[k]);
            }
        }
    }

    #[test]
    fn short_run_is_monotone_and_norm_preserving() {
        let mesh = generate_crossed_mesh(8);
        let (problem, _) = target_problem(&mesh, ProblemParams::default()).unwrap();
        let config = OptimizerConfig { max_iter: 25, ..OptimizerConfig::default() };
        let res = run(&problem, &config, |_, _| Ok(())).unwrap();
        assert!(res.history.is_monotone());
        for r in &res.history.records {
            assert!(r.psi_norm_deviation <= 1e-12);
            assert_eq!(r.descent_violations, 0);
        }
        assert!(res.history.reduction().unwrap() < 1.0);
    }

    /// Vanishing `G` at a node certifies its local optimality condition.
    fn assert_certificate(it: &Iterate) {
        let f = &it.field;
        for (k, (&g, &dj)) in f.g.iter().zip(&f.dj).enumerate() {
            if g.abs() > 1e-12 {
                continue;
            }
            match f.classification.get(k) {
                NodeClass::Shape => assert!(dj.abs() <= 1e-12, "node {k}: {dj}"),
                _ => assert!(dj >= -1e-12, "node {k}: {dj}"),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn zero_generalized_derivative_certifies_optimality(
            phi in prop::collection::vec(prop_oneof![-1.0f64..-0.05, 0.05f64..1.0], 41),
        ) {
            let mesh = generate_crossed_mesh(4);
            let (problem, _) = target_problem(&mesh, ProblemParams::default()).unwrap();
            assert_certificate(&Iterate::new(&problem, phi).unwrap());
        }
    }

    #[test]
    fn final_iterate_satisfies_certificate() {
        let mesh = generate_crossed_mesh(8);
        let (problem, _) = target_problem(&mesh, ProblemParams::default()).unwrap();
        let config = OptimizerConfig { max_iter: 60, ..OptimizerConfig::default() };
        assert_certificate(&run(&problem, &config, |_, _| Ok(())).unwrap().final_iterate);
    }

    #[test]
    fn target_is_a_fixed_point() {
        let mesh = generate_crossed_mesh(8);
        let (problem, phi_d) = target_problem(&mesh, ProblemParams::default()).unwrap();
        let nd = l2_norm(&mesh, &phi_d);
        let it = Iterate::new(&problem, phi_d.iter().map(|v| v / nd).collect()).unwrap();
        assert!(it.objective().abs() < 1e-20);
        assert!(it.norm_g < 1e-10);
        let out = step(&problem, &OptimizerConfig::default(), &it, 1.0).unwrap();
        assert!(out.next.is_none());
    }

    #[test]
    fn zero_iterations_keep_initial_state() {
        let mesh = generate_crossed_mesh(4);
        let (problem, _) = target_problem(&mesh, ProblemParams::default()).unwrap();
        let config = OptimizerConfig { max_iter: 0, ..OptimizerConfig::default() };
        let res = run(&problem, &config, |_, _| Ok(())).unwrap();
        assert_eq!(res.history.records.len(), 1);
        assert_eq!(res.final_iterate.phi, initial_phi(&mesh));
    }
}
