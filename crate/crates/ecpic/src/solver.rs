//! Outer Picard iteration coupling orbit-averaged particles to the implicit
//! Ampere field update. One call advances the full system from `t^n` to
//! `t^{n+1}`.
//!
//! Each iteration re-pushes every particle from the saved `n`-state under the
//! frozen half-time field iterate, scatters the orbit-averaged current, and
//! updates `E^{n+1}` from Ampere's law with the mean current subtracted. The
//! substep records handed back in [`StepDiagnostics`] come from the final
//! iterate, so the energy-ledger identities hold for the converged system.
//!
//! Particles are pushed in fixed contiguous chunks whose accumulators merge
//! in chunk order, so results are bitwise reproducible for any thread count.

use crate::grid::{FaceField, Mesh1D};
use crate::kahan::KahanArray;
use crate::particles::{
    orbit_average_into, scatter_current_into, ImposedB, Particle, ParticleError, PushConfig,
    SubStepRecord,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Picard iteration did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.1e})")]
    PicardNonConvergence {
        residual: f64,
        iterations: usize,
        tol: f64,
    },
    #[error(transparent)]
    Particle(#[from] ParticleError),
}

/// Full system state at an integer time level.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub particles: Vec<Particle>,
    pub e: FaceField,
    pub time: f64,
    pub step_index: u64,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Convergence tolerance on the max-norm change of `E^{n+1}` between
    /// Picard iterates, relative to `max(1, max|E|)`.
    pub picard_tol: f64,
    pub max_picard: usize,
    pub dt: f64,
    pub push: PushConfig,
    /// Number of fixed particle chunks; the merge order is the chunk order,
    /// independent of how many threads execute them.
    pub n_chunks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            picard_tol: 1e-13,
            max_picard: 200,
            dt: 1e-2,
            push: PushConfig::default(),
            n_chunks: 64,
        }
    }
}

/// Per-step solver output retained for diagnostics and the energy ledger.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub picard_iterations: usize,
    pub final_residual: f64,
    /// Orbit-averaged current of the final iterate.
    pub jbar: FaceField,
    /// Domain-averaged current `<j>`.
    pub jmean: f64,
    /// Substep records of the final iterate, in deterministic particle order.
    pub records: Vec<SubStepRecord>,
}

/// Arithmetic mean of the face current (the `<j>` of a periodic system).
pub fn mean_current(jbar: &FaceField) -> f64 {
    jbar.mean()
}

/// Ampere update: `E^{n+1} = E^n - dt (jbar - <j>)` face by face. Subtracting
/// the mean current preserves the mean electric field exactly.
pub fn ampere_update(e_n: &FaceField, jbar: &FaceField, jmean: f64, dt: f64) -> FaceField {
    e_n.zip_with(jbar, |e, j| e - dt * (j - jmean))
}

struct ChunkBuffers {
    particles: Vec<Particle>,
    records: Vec<SubStepRecord>,
    jbar: KahanArray,
}

/// Push every particle from the saved `n`-state under `e_half` into the
/// per-chunk buffers (reused across Picard iterations), and return the merged
/// orbit-averaged current. The merge runs in chunk order, so the result is
/// independent of how the chunks were scheduled.
fn push_all(
    particles: &[Particle],
    chunk_size: usize,
    e_half: &FaceField,
    b: &ImposedB,
    mesh: &Mesh1D,
    cfg: &SolverConfig,
    bufs: &mut [ChunkBuffers],
) -> Result<FaceField, ParticleError> {
    particles
        .par_chunks(chunk_size)
        .zip(bufs.par_iter_mut())
        .try_for_each(|(chunk, buf)| {
            buf.particles.clear();
            buf.records.clear();
            buf.jbar.reset();
            for p in chunk {
                let moved = orbit_average_into(p, e_half, b, cfg.dt, mesh, &cfg.push, &mut buf.records)?;
                buf.particles.push(moved);
            }
            scatter_current_into(&buf.records, mesh, cfg.dt, &mut buf.jbar);
            Ok(())
        })?;

    let mut jbar = KahanArray::zeros(mesh.n_cells());
    for buf in bufs.iter() {
        jbar.merge(&buf.jbar);
    }
    Ok(FaceField::from_vec(jbar.to_vec()))
}

/// Advance the system one full implicit step.
///
/// The Picard loop freezes `E^{n+1/2} = (E^n + E^{n+1,k})/2`, orbit-averages
/// all particles from the saved `n`-state, scatters the current, applies the
/// Ampere update, and converges when the max-norm change of `E^{n+1}` drops
/// below `picard_tol * max(1, max|E|)`. On non-convergence the input state is
/// left untouched and the error reports the residual.
pub fn advance_step(
    state: &SystemState,
    cfg: &SolverConfig,
    b: &ImposedB,
    mesh: &Mesh1D,
) -> Result<(SystemState, StepDiagnostics), SolverError> {
    let e_n = &state.e;
    let n_particles = state.particles.len();
    let chunk_size = if n_particles == 0 {
        1
    } else {
        n_particles.div_ceil(cfg.n_chunks.clamp(1, n_particles))
    };
    let n_chunks = if n_particles == 0 {
        0
    } else {
        n_particles.div_ceil(chunk_size)
    };
    let mut bufs: Vec<ChunkBuffers> = (0..n_chunks)
        .map(|_| ChunkBuffers {
            particles: Vec::with_capacity(chunk_size),
            records: Vec::with_capacity(chunk_size + chunk_size / 4),
            jbar: KahanArray::zeros(mesh.n_cells()),
        })
        .collect();

    let mut e_next = e_n.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    loop {
        iterations += 1;
        if iterations > cfg.max_picard {
            return Err(SolverError::PicardNonConvergence {
                residual,
                iterations: cfg.max_picard,
                tol: cfg.picard_tol,
            });
        }
        let e_half = e_n.zip_with(&e_next, |a, b| 0.5 * (a + b));
        let jbar = push_all(
            &state.particles,
            chunk_size,
            &e_half,
            b,
            mesh,
            cfg,
            &mut bufs,
        )?;
        let jmean = mean_current(&jbar);
        let e_new = ampere_update(e_n, &jbar, jmean, cfg.dt);
        residual = e_new
            .iter()
            .zip(e_next.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        e_next = e_new;
        if residual <= cfg.picard_tol * e_next.max_abs().max(1.0) {
            let mut moved = Vec::with_capacity(n_particles);
            let mut records = Vec::with_capacity(bufs.iter().map(|b| b.records.len()).sum());
            for buf in &bufs {
                moved.extend_from_slice(&buf.particles);
                records.extend_from_slice(&buf.records);
            }
            let next = SystemState {
                particles: moved,
                e: e_next,
                time: state.time + cfg.dt,
                step_index: state.step_index + 1,
            };
            let diag = StepDiagnostics {
                picard_iterations: iterations,
                final_residual: residual,
                jbar,
                jmean,
                records,
            };
            return Ok((next, diag));
        }
    }
}
