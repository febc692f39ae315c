//! Per-cell energy ledger of one converged implicit step: every term of the
//! discrete balance and the round-off-level residue.

use ecpic::ledger;
use ecpic::scenario::{initial_field, load_particles, preset_mtsi};
use ecpic::solver::{advance_step, SystemState};

fn main() {
    let mut cfg = preset_mtsi();
    cfg.perturbation.amplitude_cells = 0.2;
    let mesh = cfg.mesh().unwrap();
    let particles = load_particles(&cfg, &mesh);
    let e = initial_field(&particles, &mesh);
    let mut state = SystemState { particles, e, time: 0.0, step_index: 0 };

    // A few steps in, assemble the full ledger for one step.
    let scfg = cfg.solver_config();
    let b = cfg.imposed_b();
    for _ in 0..9 {
        state = advance_step(&state, &scfg, &b, &mesh).unwrap().0;
    }
    let (next, diag) = advance_step(&state, &scfg, &b, &mesh).unwrap();
    let led = ledger::assemble(
        &state.e, &next.e, &diag.records, &diag.jbar, diag.jmean, &mesh, cfg.dt,
        cfg.spline_order,
    )
    .unwrap();

    println!(
        "{:>4} {:>13} {:>13} {:>13} {:>13} {:>13} {:>10}",
        "cell", "dek_dt", "deps_dt", "div gamma", "div gamma_E", "D", "residue"
    );
    for i in 0..mesh.n_cells() {
        println!(
            "{:4} {:13.5e} {:13.5e} {:13.5e} {:13.5e} {:13.5e} {:10.2e}",
            i, led.dek_dt[i], led.deps_dt[i], led.div_gamma[i], led.div_gamma_e[i], led.d[i],
            led.residue[i]
        );
    }
    println!(
        "\nmax residue {:.3e} vs panel scale {:.3e} (ratio {:.2e})",
        led.max_residue(),
        led.panel_max(),
        led.max_residue() / led.panel_max()
    );
    println!("sum of the numerical source D: {:.3e} (max |D| = {:.3e})", led.sum_d, led.d.max_abs());
}
