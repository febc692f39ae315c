//! Thin command-line front end over the library: scenario runs, growth-rate
//! fitting of a produced time series, and the staggered-mesh identity
//! checks. The optional `THREADS` environment variable sizes the worker
//! pool; results are bitwise independent of it.

use clap::{Parser, Subcommand};
use ecpic::identities::{
    check_chain_rule_scalar, check_darwin_field_balance, check_magnetic_telescoping,
    check_tensor_chain_rule, project_divergence_free, Field2D, Mesh2D, StaggeredVector2D,
};
use ecpic::output;
use ecpic::scenario::{self, Config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ecpic", about = "Implicit energy-conserving electrostatic PIC in 1D-3V")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write timeseries.csv, ledger snapshots and
    /// run_meta.txt to the output directory.
    Run {
        /// Scenario preset: `mtsi` or `two-stream`.
        #[arg(long)]
        preset: String,
        /// Override a configuration key, e.g. `--set n_cells=64`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// RNG seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Step-count override.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Fit the exponential growth rate of the field energy in a time series.
    FitGrowth {
        /// Path to a timeseries.csv produced by `run`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Fit window `t_start,t_end` in simulation time units.
        #[arg(long)]
        window: String,
    },
    /// Run the staggered-mesh identity kernels over random fields.
    CheckIdentities {
        /// Number of random seeds per mesh.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
}

fn init_threads() {
    if let Ok(t) = std::env::var("THREADS") {
        if let Ok(n) = t.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn build_config(preset: &str, set: &[String], seed: Option<u64>, steps: Option<u64>) -> Result<Config, String> {
    let mut cfg = match preset {
        "mtsi" => scenario::preset_mtsi(),
        "two-stream" => scenario::preset_two_stream(),
        other => return Err(format!("unknown preset {other:?} (expected mtsi or two-stream)")),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(n) = steps {
        cfg.n_steps = n;
    }
    for kv in set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v).map_err(|e| e.to_string())?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn cmd_run(preset: &str, set: &[String], out: &Path, seed: Option<u64>, steps: Option<u64>) -> ExitCode {
    let cfg = match build_config(preset, set, seed, steps) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match scenario::run(&cfg, Some(out)) {
        Ok(outputs) => {
            let worst_residue = outputs
                .probes
                .iter()
                .map(|p| p.max_residue / p.panel_max.max(f64::MIN_POSITIVE))
                .fold(0.0f64, f64::max);
            let worst_sum_d = outputs
                .probes
                .iter()
                .map(|p| p.sum_d.abs() / p.max_d.max(f64::MIN_POSITIVE))
                .fold(0.0f64, f64::max);
            if let Some(last) = outputs.rows.last() {
                println!(
                    "completed {} steps to t = {}: kinetic {:.6e}, field {:.6e}, drift {:.3e}",
                    cfg.n_steps, last.t, last.kinetic, last.field_energy, last.drift
                );
            } else {
                println!("completed {} steps", cfg.n_steps);
            }
            println!(
                "worst residue/panel {:.3e}, worst |sum D|/max|D| {:.3e}",
                worst_residue, worst_sum_d
            );
            if let Some(p) = outputs.probes.last() {
                println!(
                    "final-step ledger: err = mean|D| = {:.6e}, max residue {:.3e}",
                    p.err_norm, p.max_residue
                );
            }
            // A broken conservation structure is an error exit even though
            // the files were written.
            if worst_sum_d > 1e-12 {
                eprintln!("error: zero-sum invariant breached");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_fit_growth(input: &Path, window: &str) -> ExitCode {
    let rows = match output::read_timeseries(input) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let Some((a, b)) = window.split_once(',') else {
        eprintln!("error: --window expects t_start,t_end");
        return ExitCode::FAILURE;
    };
    let (Ok(t0), Ok(t1)) = (a.trim().parse::<f64>(), b.trim().parse::<f64>()) else {
        eprintln!("error: cannot parse window bounds {window:?}");
        return ExitCode::FAILURE;
    };
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.field_energy)).collect();
    match output::fit_growth_rate(&series, t0, t1) {
        Ok(gamma) => {
            println!("gamma = {gamma}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn random_vector(mesh: &Mesh2D, rng: &mut ChaCha8Rng) -> StaggeredVector2D {
    StaggeredVector2D {
        x: Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0),
        y: Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0),
        z: Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0),
    }
}

fn cmd_check_identities(seeds: u64) -> ExitCode {
    let meshes = [
        Mesh2D::new(8, 8, 0.37, 0.52).unwrap(),
        Mesh2D::new(16, 12, 0.29, 0.41).unwrap(),
    ];
    let mut ok = true;
    for mesh in &meshes {
        let mut worst = [0.0f64; 4];
        let mut neg_control = f64::INFINITY;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let phi_n = Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let phi_np1 = Field2D::from_fn(mesh, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let a_raw_n = random_vector(mesh, &mut rng);
            let a_raw_np1 = random_vector(mesh, &mut rng);
            let dt = 0.05;

            worst[0] = worst[0].max(check_chain_rule_scalar(&a_raw_n, &phi_n, mesh).relative());
            worst[1] =
                worst[1].max(check_tensor_chain_rule(&a_raw_n, &a_raw_np1, dt, mesh).relative());
            worst[2] =
                worst[2].max(check_magnetic_telescoping(&a_raw_n, &a_raw_np1, dt, mesh).relative());
            let a_n = match project_divergence_free(&a_raw_n, mesh) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let a_np1 = match project_divergence_free(&a_raw_np1, mesh) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            worst[3] = worst[3]
                .max(check_darwin_field_balance(&phi_n, &phi_np1, &a_n, &a_np1, dt, mesh).relative());
            neg_control = neg_control.min(
                check_darwin_field_balance(&phi_n, &phi_np1, &a_raw_n, &a_raw_np1, dt, mesh)
                    .relative(),
            );
        }
        println!(
            "{}x{} (dx={}, dy={}): chain rule {:.2e}, tensor {:.2e}, telescoping {:.2e}, darwin {:.2e}, unprojected control {:.2e}",
            mesh.nx, mesh.ny, mesh.dx, mesh.dy, worst[0], worst[1], worst[2], worst[3], neg_control
        );
        let pass = worst[0] <= 1e-13
            && worst[1] <= 1e-13
            && worst[2] <= 1e-13
            && worst[3] <= 1e-12
            && neg_control >= 1e-6;
        if !pass {
            ok = false;
        }
    }
    if ok {
        println!("all identity kernels within tolerance");
        ExitCode::SUCCESS
    } else {
        eprintln!("error: identity kernel outside tolerance");
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            preset,
            set,
            out,
            seed,
            steps,
        } => cmd_run(&preset, &set, &out, seed, steps),
        Command::FitGrowth { input, window } => cmd_fit_growth(&input, &window),
        Command::CheckIdentities { seeds } => cmd_check_identities(seeds),
    }
}
