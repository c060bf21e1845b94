//! Acceptance criteria, one test per criterion. Each prints a single
//! PASS/FAIL line with the measured quantities.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsd_core::experiment::{components, default_verification, target_phi, target_problem, verification_problem, TARGET_CIRCLES};
use tsd_core::fem::solve;
use tsd_core::levelset::{classify_node, lift, negative_moments, perturb, subdomain_area, symmetric_difference_area, CutTag};
use tsd_core::optimize::{run, OptimizerConfig, RunResult};
use tsd_core::sensitivity::{
    area_derivative, continuous_sd_discretized, cut_matrices, gradient_normal_correction, shape_area_rate, ts_derivative,
    volume_derivative,
};
use tsd_core::verify::{hd_derivative, loglog_slope, pre_floor_window, run_verification, Method, VerificationReport};
use tsd_core::{generate_crossed_mesh, HyperDual, NodeClass, Problem, ProblemParams};

fn report(id: u32, name: &str, pass: bool, detail: String) -> bool {
    println!("[{}] criterion {id} ({name}): {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn criterion_1_hyper_dual_oracle() -> bool {
    let mesh = generate_crossed_mesh(8);
    assert_eq!(mesh.num_nodes(), 145);
    let (problem, _) = verification_problem(&mesh, ProblemParams::default()).unwrap();
    let phi = target_phi(&mesh);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let worst = pool.install(|| {
        let sol = solve(&problem, &phi).unwrap();
        let field = ts_derivative(&problem, &phi, &sol.u, &sol.p).unwrap();
        (0..mesh.num_nodes())
            .map(|k| {
                let hd = hd_derivative(&problem, &phi, k, 1.0).unwrap();
                (field.dj[k] - hd).abs() / field.dj[k].abs().max(1.0)
            })
            .fold(0.0, f64::max)
    });
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "hyper-dual oracle equivalence",
        worst <= 1e-10 && secs < 60.0,
        format!("max relative deviation {worst:.3e} over 145 nodes in {secs:.2} s single-threaded"),
    )
}

fn verification_report() -> &'static VerificationReport {
    static REPORT: OnceLock<VerificationReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let (problem, phi) = default_verification().unwrap();
        let mut cs_steps = Method::Cs.default_steps();
        cs_steps.extend([3.16e-11, 1e-11]);
        run_verification(
            &problem,
            &phi,
            &[(Method::Fd, Method::Fd.default_steps()), (Method::Cs, cs_steps)],
        )
        .unwrap()
    })
}

fn criterion_2_complex_step_convergence() -> bool {
    let cs = verification_report().method(Method::Cs).unwrap();
    let window: Vec<(f64, f64)> = cs
        .rows
        .iter()
        .filter(|r| r.step >= 1e-4 * (1.0 - 1e-9) && r.step <= 1e-1 * (1.0 + 1e-9))
        .map(|r| (r.step, r.e_s))
        .collect();
    let slope_s = loglog_slope(&window).unwrap();
    let min_s = cs.rows.iter().map(|r| r.e_s).fold(f64::INFINITY, f64::min);
    let t: Vec<(f64, f64)> = cs.rows.iter().map(|r| (r.step, r.e_t)).collect();
    let t_window = pre_floor_window(&t);
    let slope_t = loglog_slope(&t_window).unwrap();
    report(
        2,
        "complex-step convergence",
        (slope_s - 2.0).abs() <= 0.2 && min_s <= 1e-11 && (slope_t - 2.0).abs() <= 0.3,
        format!(
            "e_S slope {slope_s:.4} on h in [1e-4, 1e-1], min e_S {min_s:.3e}, e_T slope {slope_t:.4} on {} pre-floor steps",
            t_window.len()
        ),
    )
}

fn criterion_3_finite_difference_convergence() -> bool {
    let fd = verification_report().method(Method::Fd).unwrap();
    let s: Vec<(f64, f64)> = fd.rows.iter().map(|r| (r.step, r.e_s)).collect();
    let t: Vec<(f64, f64)> = fd.rows.iter().map(|r| (r.step, r.e_t)).collect();
    let (ws, wt) = (pre_floor_window(&s), pre_floor_window(&t));
    let (slope_s, slope_t) = (loglog_slope(&ws).unwrap(), loglog_slope(&wt).unwrap());
    let unstable: usize = fd.rows.iter().map(|r| r.unstable).sum();
    report(
        3,
        "finite-difference convergence",
        (slope_s - 1.0).abs() <= 0.2 && (slope_t - 1.0).abs() <= 0.2,
        format!(
            "e_S slope {slope_s:.4} over {} steps, e_T slope {slope_t:.4} over {} steps, {unstable} unstable node-steps",
            ws.len(),
            wt.len()
        ),
    )
}

fn criterion_4_volume_derivative_exactness() -> bool {
    let mesh = generate_crossed_mesh(8);
    let problem = Problem::new(&mesh, ProblemParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let phi: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vol = volume_derivative(&problem, &phi).unwrap();
        for (k, v) in vol.iter().enumerate() {
            let expect = if classify_node(&mesh, &phi, k) == NodeClass::TPlus { 1.0 } else { -1.0 };
            worst = worst.max((v - expect).abs());
        }
    }
    report(
        4,
        "volume-derivative exactness",
        worst <= 1e-12,
        format!("max deviation from -1 on S and T-, +1 on T+ over 100 level sets: {worst:.3e}"),
    )
}

const CUT_TAGS: [(CutTag, [f64; 3]); 6] = [
    (CutTag::APlus, [1.0, -1.0, -1.0]),
    (CutTag::AMinus, [-1.0, 1.0, 1.0]),
    (CutTag::BPlus, [-1.0, 1.0, -1.0]),
    (CutTag::BMinus, [1.0, -1.0, 1.0]),
    (CutTag::CPlus, [-1.0, -1.0, 1.0]),
    (CutTag::CMinus, [1.0, 1.0, -1.0]),
];

/// Area, first and second moments of the negative part as a flat vector.
fn moment_vector(v: [f64; 3]) -> Vec<f64> {
    let m = negative_moments(v, 0).unwrap();
    let mut out = vec![m.area];
    out.extend(m.first);
    out.extend(m.second.iter().flatten());
    out
}

fn criterion_5_area_derivative_oracle() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 1e-6;
    let (mut fd_worst, mut hd_worst): (f64, f64) = (0.0, 0.0);
    for (tag, pattern) in CUT_TAGS {
        for _ in 0..200 {
            let r: [f64; 3] = std::array::from_fn(|i| pattern[i] * rng.gen_range(0.2..2.0));
            let rate = shape_area_rate(tag, r, 1.0, 0).unwrap();
            let cm = cut_matrices(tag, r, 1.0, 0).unwrap();
            let mut closed = vec![rate];
            closed.extend(cm.df);
            closed.extend(cm.dm.iter().flatten());
            let scale = closed.iter().fold(0.0f64, |a, b| a.max(b.abs()));

            let base = moment_vector(r);
            let shifted = moment_vector([r[0] + eps, r[1], r[2]]);
            let hd = {
                let m = negative_moments([HyperDual::new(r[0], 1.0, 0.0, 0.0), HyperDual::real(r[1]), HyperDual::real(r[2])], 0)
                    .unwrap();
                let mut out = vec![m.area.e1];
                out.extend(m.first.iter().map(|v| v.e1));
                out.extend(m.second.iter().flatten().map(|v| v.e1));
                out
            };
            for i in 0..closed.len() {
                let fd = (shifted[i] - base[i]) / eps;
                fd_worst = fd_worst.max((fd - closed[i]).abs() / scale);
                hd_worst = hd_worst.max((hd[i] - closed[i]).abs() / scale);
            }
        }
    }
    // topological rates at T nodes of random mesh level sets
    let mesh = generate_crossed_mesh(4);
    let problem = Problem::new(&mesh, ProblemParams::default()).unwrap();
    let mut topo = 0;
    for _ in 0..200 {
        let phi: Vec<f64> = (0..mesh.num_nodes())
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.2..2.0))
            .collect();
        for k in 0..mesh.num_nodes() {
            let class = classify_node(&mesh, &phi, k);
            if class == NodeClass::Shape {
                continue;
            }
            topo += 1;
            let rate = area_derivative(&problem, &phi, k).unwrap().signed;
            let sign = if class == NodeClass::TMinus { -1.0 } else { 1.0 };
            let pert = perturb(&phi, k, eps, class.perturbation());
            let fd = sign * symmetric_difference_area(&mesh, &phi, &pert).unwrap() / (eps * eps);
            let hd = subdomain_area(&mesh, &perturb(&lift::<HyperDual>(&phi), k, HyperDual::step(1.0), class.perturbation()))
                .unwrap()
                .e12
                / 2.0;
            fd_worst = fd_worst.max((fd - rate).abs() / rate.abs());
            hd_worst = hd_worst.max((hd - rate).abs() / rate.abs());
        }
    }
    report(
        5,
        "area-derivative oracle",
        fd_worst <= 1e-4 && hd_worst <= 1e-10,
        format!("1200 cut configurations and {topo} topological nodes: finite differences {fd_worst:.3e}, hyper-dual {hd_worst:.3e} relative"),
    )
}

fn criterion_6_discretized_continuous_identity() -> bool {
    let (problem, phi) = default_verification().unwrap();
    let sol = solve(&problem, &phi).unwrap();
    let field = ts_derivative(&problem, &phi, &sol.u, &sol.p).unwrap();
    let (mut worst, mut count): (f64, usize) = (0.0, 0);
    for k in 0..phi.len() {
        if field.classification.get(k) != NodeClass::Shape {
            continue;
        }
        let g = continuous_sd_discretized(&problem, &phi, &sol.u, &sol.p, k).unwrap();
        let corr = gradient_normal_correction(&problem, &phi, &sol.u, &sol.p, k).unwrap();
        worst = worst.max((g - field.dj[k] - corr).abs());
        count += 1;
    }
    report(
        6,
        "discretized-continuous identity",
        count > 0 && worst <= 1e-12,
        format!("max identity residual {worst:.3e} over {count} shape nodes"),
    )
}

struct OptimizationRun {
    result: RunResult,
    seconds: f64,
    cell: f64,
    centroids: Vec<[f64; 2]>,
}

fn optimization_run() -> &'static OptimizationRun {
    static RUN: OnceLock<OptimizationRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mesh = generate_crossed_mesh(16);
        let (problem, _) = target_problem(&mesh, ProblemParams::default()).unwrap();
        let start = Instant::now();
        let config = OptimizerConfig { snapshot_cadence: 0, ..OptimizerConfig::default() };
        let result = run(&problem, &config, |_, _| Ok(())).unwrap();
        let seconds = start.elapsed().as_secs_f64();
        let centroids = components(&mesh, &result.final_iterate.phi)
            .unwrap()
            .iter()
            .map(|c| c.centroid)
            .collect();
        OptimizationRun {
            result,
            seconds,
            cell: mesh.cell_width(),
            centroids,
        }
    })
}

fn criterion_7_desk_scale_optimization() -> bool {
    let run = optimization_run();
    let h = &run.result.history;
    let first = h.records[0];
    let last = *h.last().unwrap();
    let reduction = last.j / first.j;
    let g_drop = last.norm_g / first.norm_g;
    let mut dist = Vec::new();
    let located = run.centroids.len() == 2
        && TARGET_CIRCLES.iter().all(|&(c, _)| {
            let d = run
                .centroids
                .iter()
                .map(|p| (p[0] - c[0]).hypot(p[1] - c[1]))
                .fold(f64::INFINITY, f64::min);
            dist.push(d);
            d <= 2.0 * run.cell
        });
    report(
        7,
        "desk-scale optimization",
        last.iter <= 800 && reduction <= 1e-4 && g_drop <= 1e-2 && located && run.seconds < 600.0,
        format!(
            "{} iterations in {:.1} s, J ratio {reduction:.3e}, normG ratio {g_drop:.3e}, {} components, centroid distances {:?} (limit {:.4})",
            last.iter,
            run.seconds,
            run.centroids.len(),
            dist.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>(),
            2.0 * run.cell
        ),
    )
}

fn criterion_8_norm_preservation_and_monotone_objective() -> bool {
    let run = optimization_run();
    let h = &run.result.history;
    let dev = h.records.iter().map(|r| r.psi_norm_deviation).fold(0.0, f64::max);
    let violations: usize = h.records.iter().map(|r| r.descent_violations).sum();
    report(
        8,
        "slerp norm preservation and monotone J",
        dev <= 1e-12 && h.is_monotone() && violations == 0,
        format!(
            "max |‖ψ‖-‖φ‖| {dev:.3e}, monotone {}, descent-direction violations {violations}",
            h.is_monotone()
        ),
    )
}

fn criterion_9_discrete_perimeter() -> bool {
    let mesh = generate_crossed_mesh(64);
    let problem = Problem::new(&mesh, ProblemParams::default()).unwrap();
    let r = 0.25;
    let phi = mesh.interpolate(|x, y| (x - 0.5).hypot(y - 0.5) - r);
    let eps = 1e-6;
    let shifted: Vec<f64> = phi.iter().map(|v| v + eps).collect();
    let rate = symmetric_difference_area(&mesh, &phi, &shifted).unwrap() / eps;
    let summed: f64 = (0..mesh.num_nodes())
        .filter(|&k| classify_node(&mesh, &phi, k) == NodeClass::Shape)
        .map(|k| area_derivative(&problem, &phi, k).unwrap().total)
        .sum();
    let exact = 2.0 * std::f64::consts::PI * r;
    let (e1, e2) = ((rate - exact).abs() / exact, (summed - exact).abs() / exact);
    report(
        9,
        "discrete perimeter",
        e1 <= 0.05 && e2 <= 0.05,
        format!("uniform-shift rate {rate:.6}, summed nodal rates {summed:.6}, 2πr {exact:.6}; relative errors {e1:.3e}, {e2:.3e}"),
    )
}

fn main() {
    let criteria: [fn() -> bool; 9] = [
        criterion_1_hyper_dual_oracle,
        criterion_2_complex_step_convergence,
        criterion_3_finite_difference_convergence,
        criterion_4_volume_derivative_exactness,
        criterion_5_area_derivative_oracle,
        criterion_6_discretized_continuous_identity,
        criterion_7_desk_scale_optimization,
        criterion_8_norm_preservation_and_monotone_objective,
        criterion_9_discrete_perimeter,
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(c) {
            Ok(true) => {}
            Ok(false) => failed += 1,
            Err(_) => {
                println!("[FAIL] criterion {}: panicked", i + 1);
                failed += 1;
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
