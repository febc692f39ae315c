//! Run configuration, scenario presets, deterministic particle loading, and
//! the run driver.
//!
//! Units are chosen per scenario. The `mtsi` preset works in ion units: the
//! ion plasma frequency and the ion Debye length are both one, so the box
//! length, velocities and times are dimensionless multiples of those scales.

use crate::bspline::ShapeOrder;
use crate::grid::{FaceField, Mesh1D};
use crate::kahan::KahanSum;
use crate::ledger::{self, EnergyReport};
use crate::output::{self, TimeseriesRow, TimeseriesWriter};
use crate::particles::{scatter_density, ImposedB, Particle, PushConfig};
use crate::solver::{advance_step, SolverConfig, SolverError, SystemState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("cannot parse value {value:?} for key {key:?}")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step}: {source}")]
    Solver {
        step: u64,
        #[source]
        source: SolverError,
    },
    #[error("step {step}: ledger assembly failed: {source}")]
    Ledger {
        step: u64,
        #[source]
        source: crate::grid::GridError,
    },
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// One particle species of a run.
#[derive(Debug, Clone, Copy)]
pub struct SpeciesConfig {
    pub q: f64,
    pub m: f64,
    /// Physical number density in code units; macro weights are
    /// `density * length / count`.
    pub density: f64,
    pub count_per_cell: usize,
    pub drift: [f64; 3],
    pub thermal: [f64; 3],
}

/// Seed perturbation: a sinusoidal position displacement of one species.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationConfig {
    pub mode: usize,
    /// Displacement amplitude in cell widths.
    pub amplitude_cells: f64,
    /// Index of the perturbed species.
    pub species: usize,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub n_cells: usize,
    pub length: f64,
    pub dt: f64,
    pub n_steps: u64,
    pub species: Vec<SpeciesConfig>,
    pub b: [f64; 3],
    pub picard_tol: f64,
    pub max_picard: usize,
    pub substep_tol: f64,
    pub max_inner: usize,
    pub max_substeps: usize,
    pub gyro_substep_fraction: Option<f64>,
    pub spline_order: ShapeOrder,
    /// Time-series row cadence (in steps).
    pub output_every: u64,
    /// Per-cell ledger snapshot cadence; zero disables snapshots.
    pub ledger_every: u64,
    pub rng_seed: u64,
    pub perturbation: PerturbationConfig,
    /// Sub-lattice position jitter as a fraction of the loading pitch.
    pub jitter: f64,
}

impl Config {
    pub fn mesh(&self) -> Result<Mesh1D, ScenarioError> {
        Mesh1D::new(self.n_cells, self.length).ok_or_else(|| {
            ScenarioError::InvalidConfig(format!(
                "mesh needs n_cells >= 4 and positive length, got {} and {}",
                self.n_cells, self.length
            ))
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            picard_tol: self.picard_tol,
            max_picard: self.max_picard,
            dt: self.dt,
            push: PushConfig {
                substep_tol: self.substep_tol,
                max_inner: self.max_inner,
                max_substeps: self.max_substeps,
                gyro_substep_fraction: self.gyro_substep_fraction,
                // The l = 1 cell shape has breakpoints at cell centers, so
                // segments must stop there too for the ledger to telescope.
                half_cell_stops: self.spline_order == ShapeOrder::LINEAR,
                crossing_time_tol: 1e-14,
            },
            n_chunks: 64,
        }
    }

    pub fn imposed_b(&self) -> ImposedB {
        ImposedB(self.b)
    }

    /// Largest cyclotron frequency over the species, `max |q| |B| / m`.
    pub fn omega_c_max(&self) -> f64 {
        let bmag = self.imposed_b().magnitude();
        self.species
            .iter()
            .map(|s| (s.q / s.m).abs() * bmag)
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.mesh()?;
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(ScenarioError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.picard_tol.is_nan() || self.picard_tol <= 0.0 || self.picard_tol >= 1.0 {
            return Err(ScenarioError::InvalidConfig(format!(
                "picard_tol must lie in (0, 1), got {}",
                self.picard_tol
            )));
        }
        for (k, s) in self.species.iter().enumerate() {
            if s.m.is_nan() || s.m <= 0.0 || s.density.is_nan() || s.density < 0.0 {
                return Err(ScenarioError::InvalidConfig(format!(
                    "species {k} needs positive mass and nonnegative density"
                )));
            }
        }
        if self.perturbation.species >= self.species.len() && !self.species.is_empty() {
            return Err(ScenarioError::InvalidConfig(format!(
                "perturbation species {} out of range",
                self.perturbation.species
            )));
        }
        Ok(())
    }

    /// Apply one `key=value` override. Keys mirror the flat metadata file;
    /// `n_ppc` sets every species, `dt_wce` sets `dt` as a fraction of the
    /// inverse cyclotron frequency of the current field and species table.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let bad = |key: &str, value: &str| ScenarioError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        macro_rules! parse {
            ($t:ty) => {
                value.parse::<$t>().map_err(|_| bad(key, value))?
            };
        }
        match key {
            "n_cells" => self.n_cells = parse!(usize),
            "length" => self.length = parse!(f64),
            "dt" => self.dt = parse!(f64),
            "dt_wce" => {
                let omega = self.omega_c_max();
                if omega <= 0.0 {
                    return Err(ScenarioError::InvalidConfig(
                        "dt_wce needs a nonzero magnetic field".into(),
                    ));
                }
                self.dt = parse!(f64) / omega;
            }
            "n_steps" => self.n_steps = parse!(u64),
            "output_every" => self.output_every = parse!(u64).max(1),
            "ledger_every" => self.ledger_every = parse!(u64),
            "picard_tol" => self.picard_tol = parse!(f64),
            "max_picard" => self.max_picard = parse!(usize),
            "substep_tol" => self.substep_tol = parse!(f64),
            "max_inner" => self.max_inner = parse!(usize),
            "max_substeps" => self.max_substeps = parse!(usize),
            "gyro_fraction" => {
                self.gyro_substep_fraction = if value == "off" {
                    None
                } else {
                    Some(parse!(f64))
                };
            }
            "spline_order" => {
                self.spline_order = ShapeOrder::new(parse!(u8))
                    .filter(|l| l.value() >= 1)
                    .ok_or_else(|| bad(key, value))?;
            }
            "seed" => self.rng_seed = parse!(u64),
            "jitter" => self.jitter = parse!(f64),
            "perturb_mode" => self.perturbation.mode = parse!(usize),
            "perturb_amplitude" => self.perturbation.amplitude_cells = parse!(f64),
            "perturb_species" => self.perturbation.species = parse!(usize),
            "n_ppc" => {
                let ppc = parse!(usize);
                for s in &mut self.species {
                    s.count_per_cell = ppc;
                }
            }
            "bx" => self.b[0] = parse!(f64),
            "by" => self.b[1] = parse!(f64),
            "bz" => self.b[2] = parse!(f64),
            _ => return Err(ScenarioError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Resolved configuration as flat key=value pairs for the metadata file.
    pub fn meta_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("n_cells".into(), self.n_cells.to_string()),
            ("length".into(), self.length.to_string()),
            ("dx".into(), (self.length / self.n_cells as f64).to_string()),
            ("dt".into(), self.dt.to_string()),
            ("n_steps".into(), self.n_steps.to_string()),
            ("bx".into(), self.b[0].to_string()),
            ("by".into(), self.b[1].to_string()),
            ("bz".into(), self.b[2].to_string()),
            ("picard_tol".into(), self.picard_tol.to_string()),
            ("max_picard".into(), self.max_picard.to_string()),
            ("substep_tol".into(), self.substep_tol.to_string()),
            ("max_inner".into(), self.max_inner.to_string()),
            ("max_substeps".into(), self.max_substeps.to_string()),
            (
                "gyro_fraction".into(),
                self.gyro_substep_fraction
                    .map_or("off".into(), |f| f.to_string()),
            ),
            ("spline_order".into(), self.spline_order.value().to_string()),
            ("output_every".into(), self.output_every.to_string()),
            ("ledger_every".into(), self.ledger_every.to_string()),
            ("seed".into(), self.rng_seed.to_string()),
            ("jitter".into(), self.jitter.to_string()),
            ("perturb_mode".into(), self.perturbation.mode.to_string()),
            (
                "perturb_amplitude".into(),
                self.perturbation.amplitude_cells.to_string(),
            ),
            (
                "perturb_species".into(),
                self.perturbation.species.to_string(),
            ),
            ("omega_c_max".into(), self.omega_c_max().to_string()),
        ];
        for (k, s) in self.species.iter().enumerate() {
            out.push((format!("species{k}_q"), s.q.to_string()));
            out.push((format!("species{k}_m"), s.m.to_string()));
            out.push((format!("species{k}_density"), s.density.to_string()));
            out.push((format!("species{k}_ppc"), s.count_per_cell.to_string()));
            out.push((
                format!("species{k}_drift"),
                format!("{},{},{}", s.drift[0], s.drift[1], s.drift[2]),
            ));
            out.push((
                format!("species{k}_thermal"),
                format!("{},{},{}", s.thermal[0], s.thermal[1], s.thermal[2]),
            ));
        }
        out
    }
}

/// Modified two-stream instability setup in ion units: unit ion mass and
/// plasma frequency, mass ratio 5000, a magnetic field of magnitude
/// `1/sqrt(50)` tilted so that `Bx/B = sqrt(m_e/m_i)`, a cross-field ion
/// drift of 0.5, cold loading, 32 cells over 1.8229 ion Debye lengths, and a
/// timestep of 0.2 inverse electron cyclotron frequencies.
pub fn preset_mtsi() -> Config {
    let mass_ratio: f64 = 5000.0;
    let m_e = 1.0 / mass_ratio;
    let b_mag = 1.0 / 50.0f64.sqrt();
    let sin_theta = (1.0 / mass_ratio).sqrt();
    let cos_theta = (1.0 - 1.0 / mass_ratio).sqrt();
    let omega_ce = b_mag / m_e;
    Config {
        n_cells: 32,
        length: 1.8229,
        dt: 0.2 / omega_ce,
        n_steps: 2000,
        species: vec![
            SpeciesConfig {
                q: 1.0,
                m: 1.0,
                density: 1.0,
                count_per_cell: 100,
                drift: [0.5, 0.0, 0.0],
                thermal: [0.0; 3],
            },
            SpeciesConfig {
                q: -1.0,
                m: m_e,
                density: 1.0,
                count_per_cell: 100,
                drift: [0.0; 3],
                thermal: [0.0; 3],
            },
        ],
        b: [b_mag * sin_theta, b_mag * cos_theta, 0.0],
        picard_tol: 1e-13,
        max_picard: 200,
        substep_tol: 1e-14,
        max_inner: 50,
        max_substeps: 50_000,
        gyro_substep_fraction: Some(0.1),
        spline_order: ShapeOrder::QUADRATIC,
        output_every: 1,
        ledger_every: 0,
        rng_seed: 7_040_920,
        perturbation: PerturbationConfig {
            mode: 1,
            amplitude_cells: 1e-4,
            species: 0,
        },
        jitter: 0.0,
    }
}

/// Classic cold two-stream instability: two counter-streaming beams over a
/// neutralizing ion background, box sized so mode one sits at the fastest
/// growing wavenumber, no magnetic field.
pub fn preset_two_stream() -> Config {
    let v0 = 1.0;
    // Fastest growth of two symmetric cold beams at k v0 = sqrt(3/8) w_pe.
    let k = (3.0f64 / 8.0).sqrt() / v0;
    Config {
        n_cells: 64,
        length: 2.0 * std::f64::consts::PI / k,
        dt: 0.05,
        n_steps: 2000,
        species: vec![
            SpeciesConfig {
                q: -1.0,
                m: 1.0,
                density: 0.5,
                count_per_cell: 100,
                drift: [v0, 0.0, 0.0],
                thermal: [0.0; 3],
            },
            SpeciesConfig {
                q: -1.0,
                m: 1.0,
                density: 0.5,
                count_per_cell: 100,
                drift: [-v0, 0.0, 0.0],
                thermal: [0.0; 3],
            },
            SpeciesConfig {
                q: 1.0,
                m: 1836.0,
                density: 1.0,
                count_per_cell: 100,
                drift: [0.0; 3],
                thermal: [0.0; 3],
            },
        ],
        b: [0.0; 3],
        picard_tol: 1e-13,
        max_picard: 200,
        substep_tol: 1e-14,
        max_inner: 50,
        max_substeps: 50_000,
        gyro_substep_fraction: Some(0.1),
        spline_order: ShapeOrder::QUADRATIC,
        output_every: 1,
        ledger_every: 0,
        rng_seed: 7_040_920,
        perturbation: PerturbationConfig {
            mode: 1,
            amplitude_cells: 1e-3,
            species: 0,
        },
        jitter: 0.0,
    }
}

/// Deterministic particle loading: stratified equispaced positions per
/// species (optionally jittered inside the loading pitch), exact drift
/// velocities plus an optional seeded thermal spread, and the configured
/// sinusoidal position perturbation of one species.
pub fn load_particles(cfg: &Config, mesh: &Mesh1D) -> Vec<Particle> {
    let mut out = Vec::new();
    let l = mesh.length();
    for (s_idx, sp) in cfg.species.iter().enumerate() {
        let count = sp.count_per_cell * cfg.n_cells;
        if count == 0 || sp.density == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ (s_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let weight = sp.density * l / count as f64;
        let pitch = l / count as f64;
        let thermal_on = sp.thermal.iter().any(|&t| t > 0.0);
        for p in 0..count {
            let mut x = (p as f64 + 0.5) * pitch;
            if cfg.jitter > 0.0 {
                x += cfg.jitter * pitch * (rng.gen::<f64>() - 0.5);
            }
            if s_idx == cfg.perturbation.species && cfg.perturbation.amplitude_cells != 0.0 {
                let k = 2.0 * std::f64::consts::PI * cfg.perturbation.mode as f64 / l;
                x += cfg.perturbation.amplitude_cells * mesh.dx() * (k * x).sin();
            }
            let mut v = sp.drift;
            if thermal_on {
                for (c, sigma) in sp.thermal.iter().enumerate() {
                    if *sigma > 0.0 {
                        let n: f64 = rng.sample(StandardNormal);
                        v[c] += sigma * n;
                    }
                }
            }
            out.push(Particle {
                x: mesh.wrap_position(x),
                v,
                q: sp.q * weight,
                m: sp.m * weight,
                species: s_idx as u32,
            });
        }
    }
    out
}

/// Initial electric field satisfying the discrete Gauss law of the loaded
/// charge, with the mean field removed.
pub fn initial_field(particles: &[Particle], mesh: &Mesh1D) -> FaceField {
    let rho = scatter_density(particles, mesh);
    let mean_rho = rho.mean();
    let n = mesh.n_cells();
    let mut e = FaceField::zeros(n);
    let mut acc = KahanSum::new();
    for i in 0..n {
        acc.add(mesh.dx() * (rho[i] - mean_rho));
        e[i] = acc.total();
    }
    let mean = e.mean();
    e.map(|v| v - mean)
}

/// Extra per-step probes kept in memory for diagnostics and acceptance
/// checks (the CSV carries only the contract columns).
#[derive(Debug, Clone, Copy)]
pub struct StepProbe {
    pub step: u64,
    pub t: f64,
    pub panel_max: f64,
    pub max_d: f64,
    pub err_norm: f64,
    pub max_residue: f64,
    pub sum_d: f64,
    pub max_charge_residual: f64,
    pub charge_scale: f64,
    pub picard_iters: u64,
    pub final_residual: f64,
}

#[derive(Debug)]
pub struct RunOutputs {
    pub rows: Vec<TimeseriesRow>,
    pub probes: Vec<StepProbe>,
    pub final_state: SystemState,
    /// Energy injected by the mean current against the mean field, already
    /// subtracted from the reported drift.
    pub injected_energy: f64,
}

/// Step the solver `n_steps` times, assembling the energy ledger and the
/// conservation probes on every output step (and always on the final step),
/// writing files if `out_dir` is given, and aborting cleanly with partial
/// outputs flushed on solver failure.
pub fn run(cfg: &Config, out_dir: Option<&Path>) -> Result<RunOutputs, RunError> {
    cfg.validate()?;
    let mesh = cfg.mesh()?;
    let solver_cfg = cfg.solver_config();
    let b = cfg.imposed_b();
    let l = cfg.spline_order;

    let particles = load_particles(cfg, &mesh);
    let e0 = initial_field(&particles, &mesh);
    let mut state = SystemState {
        particles,
        e: e0,
        time: 0.0,
        step_index: 0,
    };

    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            output::write_meta(&dir.join("run_meta.txt"), &cfg.meta_entries())?;
            Some(TimeseriesWriter::create(&dir.join("timeseries.csv"))?)
        }
        None => None,
    };

    let report0 = EnergyReport::compute(&state.particles, &state.e, &mesh, l);
    let total0 = report0.total;
    let mut injected = KahanSum::new();
    let mut rows = Vec::new();
    let mut probes = Vec::new();

    let flush = |writer: &mut Option<TimeseriesWriter>| -> Result<(), RunError> {
        if let Some(w) = writer {
            w.flush()?;
        }
        Ok(())
    };

    for step in 0..cfg.n_steps {
        let (next, diag) = match advance_step(&state, &solver_cfg, &b, &mesh) {
            Ok(ok) => ok,
            Err(source) => {
                flush(&mut writer)?;
                return Err(RunError::Solver { step, source });
            }
        };

        // Mean-current work against the mean field; zero for a zero-mean
        // initial field but tracked for completeness.
        let mean_e_half = 0.5 * (state.e.mean() + next.e.mean());
        injected.add(cfg.dt * diag.jmean * mean_e_half * mesh.length());

        // The ledger and the charge/energy probes are assembled on output
        // steps, on ledger-snapshot steps, and always on the final step.
        let want_row = step % cfg.output_every == 0;
        let want_snapshot = cfg.ledger_every > 0 && step % cfg.ledger_every == 0;
        if want_row || want_snapshot || step + 1 == cfg.n_steps {
            let led = match ledger::assemble(
                &state.e,
                &next.e,
                &diag.records,
                &diag.jbar,
                diag.jmean,
                &mesh,
                cfg.dt,
                l,
            ) {
                Ok(ok) => ok,
                Err(source) => {
                    flush(&mut writer)?;
                    return Err(RunError::Ledger { step, source });
                }
            };
            let rho_n = scatter_density(&state.particles, &mesh);
            let rho_np1 = scatter_density(&next.particles, &mesh);
            let charge_res =
                ledger::charge_residual(&rho_n, &rho_np1, &diag.jbar, cfg.dt, &mesh).max_abs();
            let charge_scale = rho_n.max_abs().max(rho_np1.max_abs()) / cfg.dt;
            let report = EnergyReport::compute(&next.particles, &next.e, &mesh, l);
            let drift =
                (report.total - total0 - injected.total()) / total0.abs().max(f64::MIN_POSITIVE);

            let t = next.time;
            probes.push(StepProbe {
                step,
                t,
                panel_max: led.panel_max(),
                max_d: led.d.max_abs(),
                err_norm: led.error_norm(),
                max_residue: led.max_residue(),
                sum_d: led.sum_d,
                max_charge_residual: charge_res,
                charge_scale,
                picard_iters: diag.picard_iterations as u64,
                final_residual: diag.final_residual,
            });

            if want_row {
                let row = TimeseriesRow {
                    t,
                    kinetic: report.kinetic,
                    field_energy: report.field,
                    total: report.total,
                    drift,
                    picard_iters: diag.picard_iterations as u64,
                    max_residue: led.max_residue(),
                    sum_d: led.sum_d,
                    max_charge_residual: charge_res,
                };
                if let Some(w) = &mut writer {
                    w.write_row(&row)?;
                }
                rows.push(row);
            }
            if want_snapshot {
                if let Some(dir) = out_dir {
                    output::write_ledger_csv(&dir.join(format!("ledger_{step}.csv")), &led, &mesh)?;
                }
            }
        }

        state = next;
    }

    flush(&mut writer)?;
    Ok(RunOutputs {
        rows,
        probes,
        final_state: state,
        injected_energy: injected.total(),
    })
}
