//! Acceptance suite: one test per headline requirement, each printing a
//! PASS/FAIL line with the measured numbers (run with `--nocapture` to see
//! them as they complete).
//!
//! The first four criteria share one 2000-step MTSI run at the base
//! resolution. Its seed perturbation is 0.2 cell widths: large enough that
//! the physical panel terms sit well above the f64 noise floor of the
//! deposited moments (~3e-13 in absolute terms for these parameters), small
//! enough that the run stays deep in the linear regime. All tolerances below
//! are fixed; none are calibrated at run time.

use ecpic::bspline::{self, Centering, ShapeOrder};
use ecpic::grid::{FaceField, Mesh1D};
use ecpic::identities::{
    check_chain_rule_scalar, check_darwin_field_balance, check_magnetic_telescoping,
    check_tensor_chain_rule, project_divergence_free, Field2D, Mesh2D, StaggeredVector2D,
};
use ecpic::output::fit_growth_rate;
use ecpic::particles::{gather_e, orbit_average, ImposedB, Particle, PushConfig};
use ecpic::scenario::{self, preset_mtsi, RunOutputs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

/// Seed amplitude (cell widths) of the shared criterion run.
const BASE_AMPLITUDE: f64 = 0.2;

fn base_config(picard_tol: f64) -> scenario::Config {
    let mut cfg = preset_mtsi();
    cfg.n_steps = 2000;
    cfg.output_every = 1;
    cfg.picard_tol = picard_tol;
    cfg.perturbation.amplitude_cells = BASE_AMPLITUDE;
    cfg
}

fn base_run() -> &'static RunOutputs {
    static RUN: OnceLock<RunOutputs> = OnceLock::new();
    RUN.get_or_init(|| scenario::run(&base_config(1e-13), None).expect("base MTSI run"))
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_local_energy_balance_closes_to_roundoff() {
    let out = base_run();
    assert_eq!(out.probes.len(), 2000, "need a probe for every step");
    let mut worst = 0.0f64;
    let mut worst_step = 0;
    for p in &out.probes {
        let ratio = p.max_residue / p.panel_max.max(f64::MIN_POSITIVE);
        if ratio > worst {
            worst = ratio;
            worst_step = p.step as usize;
        }
    }
    report(
        "1 (local balance)",
        worst <= 1e-10,
        &format!("worst max|residue| / max panel = {worst:.3e} (step {worst_step}, bound 1e-10)"),
    );
}

#[test]
fn criterion_2_numerical_source_is_zero_sum() {
    let out = base_run();
    let mut worst = 0.0f64;
    for p in &out.probes {
        worst = worst.max(p.sum_d.abs() / p.max_d.max(f64::MIN_POSITIVE));
    }
    report(
        "2 (zero-sum source)",
        worst <= 1e-12,
        &format!("worst |sum D| / max|D| = {worst:.3e} (bound 1e-12)"),
    );
}

#[test]
fn criterion_3_local_charge_conservation() {
    let out = base_run();
    let mut worst = 0.0f64;
    for p in &out.probes {
        worst = worst.max(p.max_charge_residual / p.charge_scale.max(f64::MIN_POSITIVE));
    }
    report(
        "3 (charge conservation)",
        worst <= 1e-12,
        &format!("worst max|charge residual| / (max|rho|/dt) = {worst:.3e} (bound 1e-12)"),
    );
}

#[test]
fn criterion_4_energy_drift_bounded_and_tolerance_scaled() {
    let out = base_run();
    let drift_13 = out
        .rows
        .iter()
        .map(|r| r.drift.abs())
        .fold(0.0f64, f64::max);
    report(
        "4a (drift bound)",
        drift_13 <= 1e-9,
        &format!("max |relative energy drift| = {drift_13:.3e} over 2000 steps (bound 1e-9)"),
    );

    // Drift follows the Picard tolerance: least-squares slope of
    // log(drift) vs log(tol) within a factor of five of one.
    let mut points = vec![(1e-13f64, drift_13)];
    for tol in [1e-10f64, 1e-8] {
        let out = scenario::run(&base_config(tol), None).expect("tolerance-scan run");
        let drift = out
            .rows
            .iter()
            .map(|r| r.drift.abs())
            .fold(0.0f64, f64::max);
        points.push((tol, drift));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(tol, d)| (tol.log10(), d.max(f64::MIN_POSITIVE).log10()))
        .collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let cov: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = cov / var;
    report(
        "4b (drift scales with tolerance)",
        (0.2..=5.0).contains(&slope),
        &format!(
            "drift(1e-8) = {:.2e}, drift(1e-10) = {:.2e}, drift(1e-13) = {:.2e}; log-log slope {slope:.2} (bounds [0.2, 5])",
            points[2].1, points[1].1, points[0].1
        ),
    );
}

#[test]
fn criterion_5_mtsi_growth_rate() {
    // Default preset (seed amplitude 1e-4 cells) through the linear phase.
    let mut cfg = preset_mtsi();
    cfg.n_steps = 75_000;
    cfg.output_every = 10;
    let out = scenario::run(&cfg, None).expect("growth run");
    let series: Vec<(f64, f64)> = out.rows.iter().map(|r| (r.t, r.field_energy)).collect();
    // The first ~10 ion times are a multi-branch transient of the sinusoidal
    // seed; the window sits in the clean exponential stretch after it.
    let gamma = fit_growth_rate(&series, 11.0, 20.0).expect("growth fit");
    let expected = 0.4992;
    let rel = (gamma - expected).abs() / expected;
    report(
        "5 (MTSI growth rate)",
        rel <= 0.10,
        &format!("fitted gamma = {gamma:.4}, published 0.4992, deviation {:.1}%", rel * 100.0),
    );
}

#[test]
fn criterion_6_error_term_convergence() {
    // Coarse vs fine at the snapshot omega_ce t = 2000, with the same
    // physical seed displacement (the amplitude is specified in cell widths,
    // so the fine mesh uses twice the number).
    let mut coarse = preset_mtsi();
    coarse.n_steps = 10_000;
    coarse.output_every = 500;
    coarse.perturbation.amplitude_cells = 0.1;
    let out_c = scenario::run(&coarse, None).expect("coarse convergence run");

    let mut fine = preset_mtsi();
    fine.set("n_cells", "64").unwrap();
    fine.set("n_ppc", "1600").unwrap();
    fine.set("dt_wce", "0.1").unwrap();
    fine.n_steps = 20_000;
    fine.output_every = 1000;
    fine.perturbation.amplitude_cells = 0.2;
    let out_f = scenario::run(&fine, None).expect("fine convergence run");

    let err_c = out_c.probes.last().unwrap().err_norm;
    let err_f = out_f.probes.last().unwrap().err_norm;
    let ratio = err_c / err_f;
    report(
        "6 (error convergence)",
        (3.3..=4.6).contains(&ratio),
        &format!("err_c = {err_c:.3e}, err_f = {err_f:.3e}, ratio {ratio:.2} (band [3.3, 4.6])"),
    );
}

#[test]
fn criterion_7_identity_kernels() {
    let meshes = [
        Mesh2D::new(8, 8, 0.37, 0.52).unwrap(),
        Mesh2D::new(16, 12, 0.29, 0.41).unwrap(),
    ];
    let mut worst = [0.0f64; 4];
    let mut control = f64::INFINITY;
    for mesh in &meshes {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
            let rand_field =
                |rng: &mut ChaCha8Rng| Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let phi_n = rand_field(&mut rng);
            let phi_np1 = rand_field(&mut rng);
            let a_raw_n = StaggeredVector2D {
                x: rand_field(&mut rng),
                y: rand_field(&mut rng),
                z: rand_field(&mut rng),
            };
            let a_raw_np1 = StaggeredVector2D {
                x: rand_field(&mut rng),
                y: rand_field(&mut rng),
                z: rand_field(&mut rng),
            };
            let dt = 0.05;
            worst[0] = worst[0].max(check_chain_rule_scalar(&a_raw_n, &phi_n, mesh).relative());
            worst[1] =
                worst[1].max(check_tensor_chain_rule(&a_raw_n, &a_raw_np1, dt, mesh).relative());
            worst[2] =
                worst[2].max(check_magnetic_telescoping(&a_raw_n, &a_raw_np1, dt, mesh).relative());
            let a_n = project_divergence_free(&a_raw_n, mesh).expect("projection");
            let a_np1 = project_divergence_free(&a_raw_np1, mesh).expect("projection");
            worst[3] = worst[3].max(
                check_darwin_field_balance(&phi_n, &phi_np1, &a_n, &a_np1, dt, mesh).relative(),
            );
            control = control.min(
                check_darwin_field_balance(&phi_n, &phi_np1, &a_raw_n, &a_raw_np1, dt, mesh)
                    .relative(),
            );
        }
    }
    let pass = worst[0] <= 1e-13
        && worst[1] <= 1e-13
        && worst[2] <= 1e-13
        && worst[3] <= 1e-12
        && control >= 1e-6;
    report(
        "7 (identity kernels)",
        pass,
        &format!(
            "chain rule {:.2e}, tensor {:.2e}, telescoping {:.2e} (bounds 1e-13); darwin {:.2e} (bound 1e-12); unprojected control {control:.2e} (>= 1e-6)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

#[test]
fn criterion_8_property_suites() {
    // Partition of unity at 1e-15 for both centerings and all orders.
    let mesh = Mesh1D::new(32, 1.8229).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_pu = 0.0f64;
    for _ in 0..10_000 {
        let xp = rng.gen::<f64>() * mesh.length();
        for l in [ShapeOrder::TOP_HAT, ShapeOrder::LINEAR, ShapeOrder::QUADRATIC] {
            for centering in [Centering::Cell, Centering::Face] {
                let sum = bspline::stencil(l, xp, &mesh, centering).weight_sum();
                worst_pu = worst_pu.max((sum - 1.0).abs());
            }
        }
    }

    // Derivative relation at 1e-8 with a 1e-6 centered difference.
    let mut worst_deriv = 0.0f64;
    let h = 1e-6;
    let mut checked = 0;
    while checked < 5000 {
        let delta = rng.gen::<f64>() * 4.0 - 2.0;
        let frac = (delta * 2.0).fract().abs();
        if !(2e-3..=1.0 - 2e-3).contains(&frac) {
            continue;
        }
        for l in [ShapeOrder::LINEAR, ShapeOrder::QUADRATIC] {
            let fd = (bspline::shape(l, delta + h) - bspline::shape(l, delta - h)) / (2.0 * h);
            let lower = l.lower();
            let faces = bspline::shape(lower, delta + 0.5) - bspline::shape(lower, delta - 0.5);
            worst_deriv = worst_deriv.max((fd - faces).abs());
        }
        checked += 1;
    }

    // Magnetic no-work and face-stopping on random magnetized orbits.
    let e = FaceField::from_vec((0..32).map(|_| rng.gen::<f64>() - 0.5).collect());
    let b = ImposedB([0.05, 0.7, 0.2]);
    let cfg = PushConfig::default();
    let mut worst_work = 0.0f64;
    let mut face_violations = 0usize;
    for _ in 0..500 {
        let p = Particle {
            x: rng.gen::<f64>() * mesh.length(),
            v: [
                rng.gen::<f64>() * 6.0 - 3.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            ],
            q: if rng.gen::<bool>() { 1.0 } else { -1.0 },
            m: 0.5,
            species: 0,
        };
        let (_, recs) = orbit_average(&p, &e, &b, 0.05, &mesh, &cfg).expect("orbit");
        for rec in recs {
            let n2 = |v: [f64; 3]| v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let dke = 0.5 * rec.m * (n2(rec.v_new) - n2(rec.v_old));
            let work = rec.q * gather_e(&e, rec.x_mid, &mesh) * rec.v_mid[0] * rec.dtau;
            let scale = (rec.m * n2(rec.v_old)).max(1.0);
            worst_work = worst_work.max((dke - work).abs() / scale);
            // No face strictly inside the open segment.
            let half = 0.5 * rec.dx_seg();
            let (lo, hi) = if half >= 0.0 {
                (rec.x_mid - half, rec.x_mid + half)
            } else {
                (rec.x_mid + half, rec.x_mid - half)
            };
            let mut f = (lo / mesh.dx()).ceil() * mesh.dx();
            let eps = 4.0 * f64::EPSILON * mesh.length();
            while f < hi {
                if f > lo + eps && f < hi - eps {
                    face_violations += 1;
                }
                f += mesh.dx();
            }
        }
    }

    // Bitwise reproducibility of a short scenario run.
    let mut cfg_run = base_config(1e-13);
    cfg_run.n_steps = 25;
    let a = scenario::run(&cfg_run, None).expect("run A");
    let c = scenario::run(&cfg_run, None).expect("run B");
    let bitwise = a.rows == c.rows
        && a.final_state.e == c.final_state.e
        && a.final_state
            .particles
            .iter()
            .zip(&c.final_state.particles)
            .all(|(p, q)| p.x == q.x && p.v == q.v);

    let pass = worst_pu <= 1e-15
        && worst_deriv <= 1e-8
        && worst_work <= 1e-13
        && face_violations == 0
        && bitwise;
    report(
        "8 (property suites)",
        pass,
        &format!(
            "partition of unity {worst_pu:.2e} (<= 1e-15); derivative relation {worst_deriv:.2e} (<= 1e-8); substep no-work {worst_work:.2e} (<= 1e-13); interior faces {face_violations} (= 0); bitwise reruns {bitwise}"
        ),
    );
}
