//! Particle storage, field gather, the implicit Crank-Nicolson substep push
//! with an imposed magnetic field, face-stopping orbit segmentation, and
//! scatter of orbit-averaged current and density.
//!
//! A substep advances `(x, v)` through the implicit midpoint system
//!
//! ```text
//! x' = x + dtau * vx_mid,   v' = v + dtau (q/m) (E(x_mid) ex + v_mid x B)
//! ```
//!
//! with `x_mid = (x + x')/2`, `v_mid = (v + v')/2`. The velocity half of the
//! system is linear in `v_mid` given `E` and is solved in closed form; the
//! remaining fixed point is over `x_mid`. If a free substep would cross a
//! cell face, the substep length is shrunk so the segment lands exactly on
//! the nearest face (self-consistently with the implicit midpoint), which is
//! what makes charge deposition telescope exactly across cells. The next
//! substep then starts one ulp inside the destination cell so ownership is
//! never ambiguous.

use crate::bspline::{self, Centering, ShapeOrder};
use crate::grid::{CellField, FaceField, Mesh1D};
use crate::kahan::KahanArray;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("substep fixed point did not converge: |dx_mid| = {residual:.3e} after {iterations} iterations (dtau = {dtau:.3e})")]
    SubstepNonConvergence {
        residual: f64,
        iterations: usize,
        dtau: f64,
    },
    #[error("orbit exceeded the substep budget of {budget} segments")]
    OrbitBudgetExceeded { budget: usize },
}

/// Phase-space macro-particle sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Position in `[0, length)`.
    pub x: f64,
    /// Velocity 3-vector `(vx, vy, vz)`; only `vx` moves the particle in 1D.
    pub v: [f64; 3],
    /// Macro charge.
    pub q: f64,
    /// Macro mass, positive.
    pub m: f64,
    pub species: u32,
}

/// Uniform, static imposed magnetic field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImposedB(pub [f64; 3]);

impl ImposedB {
    pub const ZERO: ImposedB = ImposedB([0.0; 3]);

    pub fn magnitude(&self) -> f64 {
        let [bx, by, bz] = self.0;
        (bx * bx + by * by + bz * bz).sqrt()
    }
}

/// One orbit segment between consecutive substep times.
///
/// The open segment `(x_old, x_new)` contains no mesh face, and
/// `x_new - x_old = dtau * v_mid[0]` modulo the period.
#[derive(Debug, Clone, Copy)]
pub struct SubStepRecord {
    pub dtau: f64,
    /// Segment midpoint, wrapped into `[0, length)`.
    pub x_mid: f64,
    pub v_mid: [f64; 3],
    pub v_old: [f64; 3],
    pub v_new: [f64; 3],
    pub q: f64,
    pub m: f64,
}

impl SubStepRecord {
    /// Signed segment length `dtau * vx_mid`.
    #[inline]
    pub fn dx_seg(&self) -> f64 {
        self.dtau * self.v_mid[0]
    }

    /// Time-centered particle kinetic energy
    /// `(m/2) (|v_new|^2 / 2 + |v_old|^2 / 2)`.
    #[inline]
    pub fn ek_mid(&self) -> f64 {
        0.5 * self.m * (0.5 * norm2(self.v_new) + 0.5 * norm2(self.v_old))
    }
}

#[inline]
fn norm2(v: [f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Tunables of the substep integrator.
#[derive(Debug, Clone, Copy)]
pub struct PushConfig {
    /// Relative tolerance of the inner midpoint fixed point (in cell widths).
    pub substep_tol: f64,
    /// Iteration cap of the inner fixed point.
    pub max_inner: usize,
    /// Budget of substeps per particle per field step.
    pub max_substeps: usize,
    /// Optional accuracy cap: `dtau <= fraction * 2 pi / omega_c` so
    /// gyromotion stays resolved inside a substep.
    pub gyro_substep_fraction: Option<f64>,
    /// Stop segments at half-cell boundaries as well as faces. Required for
    /// the energy ledger with deposit order `l = 1`, whose cell-centered
    /// shape has breakpoints at cell centers.
    pub half_cell_stops: bool,
    /// Face-crossing time tolerance, as a fraction of the full step `dt`.
    pub crossing_time_tol: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        PushConfig {
            substep_tol: 1e-14,
            max_inner: 50,
            max_substeps: 50_000,
            gyro_substep_fraction: Some(0.1),
            half_cell_stops: false,
            crossing_time_tol: 1e-14,
        }
    }
}

/// Interpolate the face electric field to a particle position with the
/// linear face shape (the `m - 1 = 1` gather of the scheme).
#[inline]
pub fn gather_e(e: &FaceField, xp: f64, mesh: &Mesh1D) -> f64 {
    let st = bspline::stencil(ShapeOrder::LINEAR, xp, mesh, Centering::Face);
    let mut acc = 0.0;
    for (idx, w) in st.iter() {
        acc += e[idx] * w;
    }
    acc
}

/// Inner-loop gather: linear interpolation between the two faces bounding the
/// particle's cell. Matches `gather_e` to within an ulp; the solver tolerance
/// absorbs the difference.
#[inline(always)]
fn gather_fast(e: &[f64], xp: f64, mesh: &Mesh1D, inv_dx: f64) -> f64 {
    let n = e.len();
    let u = mesh.wrap_position(xp) * inv_dx;
    let mut c = u as usize;
    if c >= n {
        c = n - 1;
    }
    let frac = u - c as f64;
    let left = if c == 0 { n - 1 } else { c - 1 };
    e[left] * (1.0 - frac) + e[c] * frac
}

/// Solve `vm - vm x t = u` for `vm` (implicit midpoint rotation).
#[inline]
fn rotate_implicit(u: [f64; 3], t: [f64; 3]) -> [f64; 3] {
    let t2 = norm2(t);
    if t2 == 0.0 {
        return u;
    }
    let uxt = [
        u[1] * t[2] - u[2] * t[1],
        u[2] * t[0] - u[0] * t[2],
        u[0] * t[1] - u[1] * t[0],
    ];
    let udt = u[0] * t[0] + u[1] * t[1] + u[2] * t[2];
    let inv = 1.0 / (1.0 + t2);
    [
        (u[0] + uxt[0] + udt * t[0]) * inv,
        (u[1] + uxt[1] + udt * t[1]) * inv,
        (u[2] + uxt[2] + udt * t[2]) * inv,
    ]
}

struct Midpoint {
    v_mid: [f64; 3],
}

/// Inner fixed point of one substep at fixed `dtau`: iterate the midpoint
/// position through the field gather until stationary.
#[allow(clippy::too_many_arguments)]
fn solve_midpoint(
    x0: f64,
    v0: [f64; 3],
    q_over_m: f64,
    dtau: f64,
    e_half: &FaceField,
    b: &ImposedB,
    mesh: &Mesh1D,
    cfg: &PushConfig,
) -> Result<Midpoint, ParticleError> {
    let a = 0.5 * dtau * q_over_m;
    let t = [a * b.0[0], a * b.0[1], a * b.0[2]];
    let threshold = (cfg.substep_tol * mesh.dx()).max(4.0 * f64::EPSILON * x0.abs().max(mesh.dx()));
    let inv_dx = 1.0 / mesh.dx();
    let faces = e_half.as_slice();
    let mut xm = x0 + 0.5 * dtau * v0[0];
    for _ in 0..cfg.max_inner {
        let e_p = gather_fast(faces, xm, mesh, inv_dx);
        let u = [v0[0] + a * e_p, v0[1], v0[2]];
        let v_mid = rotate_implicit(u, t);
        let xm_new = x0 + 0.5 * dtau * v_mid[0];
        let moved = (xm_new - xm).abs();
        xm = xm_new;
        if moved <= threshold {
            return Ok(Midpoint { v_mid });
        }
    }
    // One more residual probe for the error report.
    let e_p = gather_fast(faces, xm, mesh, inv_dx);
    let u = [v0[0] + a * e_p, v0[1], v0[2]];
    let vm = rotate_implicit(u, t);
    let residual = (x0 + 0.5 * dtau * vm[0] - xm).abs();
    Err(ParticleError::SubstepNonConvergence {
        residual,
        iterations: cfg.max_inner,
        dtau,
    })
}

/// Continuation position after a stop at boundary `f`: exactly the boundary,
/// wrapped into `[0, length)`. Ownership of the next segment is decided by
/// its direction of motion, so starting on a boundary stays unambiguous and a
/// velocity reversal at a face costs no extra segments.
fn continuation_position(f: f64, mesh: &Mesh1D) -> f64 {
    mesh.wrap_position(f)
}

/// One implicit midpoint substep, stopped at the nearest face if the free
/// step would cross one. Returns the advanced particle and the segment.
pub fn substep_push(
    p: &Particle,
    e_half: &FaceField,
    b: &ImposedB,
    dtau_cap: f64,
    mesh: &Mesh1D,
    cfg: &PushConfig,
    dt_ref: f64,
) -> Result<(Particle, SubStepRecord), ParticleError> {
    debug_assert!(dtau_cap > 0.0);
    let x0 = mesh.wrap_position(p.x);
    let q_over_m = p.q / p.m;
    let stops = if cfg.half_cell_stops { 2.0 } else { 1.0 };
    let h = mesh.dx() / stops;
    let n_slabs = (mesh.n_cells() as f64 * stops) as i64;

    // Free attempt over the full allowance.
    let free = solve_midpoint(x0, p.v, q_over_m, dtau_cap, e_half, b, mesh, cfg)?;
    let d_free = dtau_cap * free.v_mid[0];
    let x1_free = x0 + d_free;

    // Slab ownership. The quotient can round across a boundary, so correct
    // it against the exactly-computed boundary positions; a start exactly on
    // a boundary belongs to the slab the particle is moving into.
    let mut k = (x0 / h).floor() as i64;
    if k >= n_slabs {
        k = n_slabs - 1;
    }
    if (k as f64) * h > x0 {
        k -= 1;
    }
    if ((k + 1) as f64) * h <= x0 {
        k += 1;
    }
    if x0 == k as f64 * h && d_free < 0.0 {
        k -= 1;
    }
    let lo = k as f64 * h;
    let hi = (k + 1) as f64 * h;

    let make_particle = |x_new: f64, v_mid: [f64; 3]| {
        let v_new = [
            2.0 * v_mid[0] - p.v[0],
            2.0 * v_mid[1] - p.v[1],
            2.0 * v_mid[2] - p.v[2],
        ];
        (x_new, v_new)
    };
    let make_record = |dtau: f64, v_mid: [f64; 3], v_new: [f64; 3]| SubStepRecord {
        dtau,
        x_mid: mesh.wrap_position(x0 + 0.5 * dtau * v_mid[0]),
        v_mid,
        v_old: p.v,
        v_new,
        q: p.q,
        m: p.m,
    };

    if x1_free > lo && x1_free < hi {
        // No crossing.
        let (x_new, v_new) = make_particle(x1_free, free.v_mid);
        let rec = make_record(dtau_cap, free.v_mid, v_new);
        let out = Particle {
            x: mesh.wrap_position(x_new),
            v: v_new,
            ..*p
        };
        return Ok((out, rec));
    }

    // Landed exactly on a boundary: a stop with the full allowance.
    if x1_free == lo || x1_free == hi {
        let (_, v_new) = make_particle(x1_free, free.v_mid);
        let rec = make_record(dtau_cap, free.v_mid, v_new);
        let out = Particle {
            x: continuation_position(x1_free, mesh),
            v: v_new,
            ..*p
        };
        return Ok((out, rec));
    }

    // Crossing: shrink dtau so the segment lands exactly on the nearest
    // boundary, keeping the midpoint system self-consistent. Safeguarded
    // false position on g(dtau) = x(dtau) - f, bracketed by [0, dtau_cap].
    let moving_right = x1_free > hi;
    let f = if moving_right { hi } else { lo };
    let mut t_lo = 0.0;
    let mut g_lo = x0 - f;
    let mut t_hi = dtau_cap;
    let mut g_hi = x1_free - f;
    let time_tol = cfg.crossing_time_tol * dt_ref;
    let pos_tol = 4.0 * f64::EPSILON * f.abs().max(mesh.dx());

    // Explicit crossing estimate seeds the iteration.
    let mut t_cand = dtau_cap * (f - x0) / d_free;
    let mut last = free.v_mid;
    let mut t_final = dtau_cap;
    let mut side = 0i32;
    for _ in 0..200 {
        if !(t_cand > t_lo && t_cand < t_hi) {
            t_cand = 0.5 * (t_lo + t_hi);
        }
        let mid = solve_midpoint(x0, p.v, q_over_m, t_cand, e_half, b, mesh, cfg)?;
        let g = (x0 + t_cand * mid.v_mid[0]) - f;
        last = mid.v_mid;
        t_final = t_cand;
        if g.abs() <= pos_tol {
            break;
        }
        if g.is_sign_positive() == g_hi.is_sign_positive() {
            t_hi = t_cand;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5; // Illinois damping against stagnation
            }
            side = 1;
        } else {
            t_lo = t_cand;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        }
        if t_hi - t_lo <= time_tol {
            break;
        }
        t_cand = t_lo - g_lo * (t_hi - t_lo) / (g_hi - g_lo);
    }

    let (_, v_new) = make_particle(f, last);
    let rec = make_record(t_final, last, v_new);
    let out = Particle {
        x: continuation_position(f, mesh),
        v: v_new,
        ..*p
    };
    Ok((out, rec))
}

/// Advance one particle from `t^n` to `t^n + dt` under the frozen field
/// iterate `e_half`, appending the face-stopped segments (whose lengths sum
/// exactly to `dt`) to `records`.
///
/// A negative `dt` is integrated by time reversal (flip velocities and the
/// magnetic field, push `|dt|`, flip back), which is exact for the midpoint
/// scheme.
pub fn orbit_average_into(
    p: &Particle,
    e_half: &FaceField,
    b: &ImposedB,
    dt: f64,
    mesh: &Mesh1D,
    cfg: &PushConfig,
    records: &mut Vec<SubStepRecord>,
) -> Result<Particle, ParticleError> {
    if dt < 0.0 {
        let flipped = Particle {
            v: [-p.v[0], -p.v[1], -p.v[2]],
            ..*p
        };
        let b_rev = ImposedB([-b.0[0], -b.0[1], -b.0[2]]);
        let start = records.len();
        let q = orbit_average_into(&flipped, e_half, &b_rev, -dt, mesh, cfg, records)?;
        let tail = &mut records[start..];
        for r in tail.iter_mut() {
            *r = SubStepRecord {
                v_mid: [-r.v_mid[0], -r.v_mid[1], -r.v_mid[2]],
                v_old: [-r.v_new[0], -r.v_new[1], -r.v_new[2]],
                v_new: [-r.v_old[0], -r.v_old[1], -r.v_old[2]],
                ..*r
            };
        }
        tail.reverse();
        return Ok(Particle {
            v: [-q.v[0], -q.v[1], -q.v[2]],
            ..q
        });
    }

    let gyro_cap = cfg.gyro_substep_fraction.and_then(|frac| {
        let omega_c = (p.q / p.m).abs() * b.magnitude();
        (omega_c > 0.0).then(|| frac * 2.0 * PI / omega_c)
    });

    let mut remaining = dt;
    let mut cur = *p;
    let mut taken = 0usize;
    while remaining > 0.0 {
        if taken >= cfg.max_substeps {
            return Err(ParticleError::OrbitBudgetExceeded {
                budget: cfg.max_substeps,
            });
        }
        let cap = gyro_cap.map_or(remaining, |g| remaining.min(g));
        let (next, rec) = substep_push(&cur, e_half, b, cap, mesh, cfg, dt)?;
        remaining -= rec.dtau;
        cur = next;
        records.push(rec);
        taken += 1;
    }
    Ok(cur)
}

/// [`orbit_average_into`] with a freshly allocated record list.
pub fn orbit_average(
    p: &Particle,
    e_half: &FaceField,
    b: &ImposedB,
    dt: f64,
    mesh: &Mesh1D,
    cfg: &PushConfig,
) -> Result<(Particle, Vec<SubStepRecord>), ParticleError> {
    let mut records = Vec::new();
    let out = orbit_average_into(p, e_half, b, dt, mesh, cfg, &mut records)?;
    Ok((out, records))
}

/// Accumulate the orbit-averaged current of a set of segments onto faces:
/// `q vx_mid dtau S_1(x_face - x_mid) / (dx dt)`.
pub fn scatter_current_into(records: &[SubStepRecord], mesh: &Mesh1D, dt: f64, out: &mut KahanArray) {
    let n = mesh.n_cells();
    let inv_dx = 1.0 / mesh.dx();
    let scale = inv_dx / dt;
    for rec in records {
        let w = rec.q * rec.dtau * rec.v_mid[0] * scale;
        let u = mesh.wrap_position(rec.x_mid) * inv_dx;
        let mut c = u as usize;
        if c >= n {
            c = n - 1;
        }
        let frac = u - c as f64;
        let left = if c == 0 { n - 1 } else { c - 1 };
        out.add(left, w * (1.0 - frac));
        out.add(c, w * frac);
    }
}

/// Orbit-averaged current density on faces.
pub fn scatter_current(records: &[SubStepRecord], mesh: &Mesh1D, dt: f64) -> FaceField {
    let mut acc = KahanArray::zeros(mesh.n_cells());
    scatter_current_into(records, mesh, dt, &mut acc);
    FaceField::from_vec(acc.to_vec())
}

/// Quadratic-spline charge density at cell centers, `(1/dx) sum q S_2`.
pub fn scatter_density(particles: &[Particle], mesh: &Mesh1D) -> CellField {
    let mut acc = KahanArray::zeros(mesh.n_cells());
    let inv_dx = 1.0 / mesh.dx();
    for p in particles {
        let w = p.q * inv_dx;
        let st = bspline::stencil(ShapeOrder::QUADRATIC, p.x, mesh, Centering::Cell);
        for (idx, s) in st.iter() {
            acc.add(idx, w * s);
        }
    }
    CellField::from_vec(acc.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh() -> Mesh1D {
        Mesh1D::new(16, 2.0).unwrap()
    }

    fn particle(x: f64, v: [f64; 3]) -> Particle {
        Particle {
            x,
            v,
            q: 1.0,
            m: 1.0,
            species: 0,
        }
    }

    fn wrap_dist(a: f64, b: f64, l: f64) -> f64 {
        let mut d = (a - b) % l;
        if d > l / 2.0 {
            d -= l;
        }
        if d < -l / 2.0 {
            d += l;
        }
        d.abs()
    }

    #[test]
    fn gather_uniform_field_and_face_value() {
        let m = mesh();
        let e = FaceField::from_vec(vec![2.5; 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let xp = rng.gen::<f64>() * m.length();
            assert!((gather_e(&e, xp, &m) - 2.5).abs() <= 1e-15);
        }
        // Exactly at face 4+1/2 the gather returns that face value.
        let mut e = FaceField::zeros(16);
        e[4] = 7.0;
        e[3] = -3.0;
        assert_eq!(gather_e(&e, m.face_position(4), &m), 7.0);
    }

    #[test]
    fn gather_is_exact_for_linear_fields() {
        let m = mesh();
        // E linear in face position over the interior; test away from the seam.
        let e = FaceField::from_vec((0..16).map(|i| 0.4 * m.face_position(i) - 0.1).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let xp = 0.3 + rng.gen::<f64>() * 1.2; // stays clear of the wrap
            let expect = 0.4 * xp - 0.1;
            assert!(
                (gather_e(&e, xp, &m) - expect).abs() <= 1e-13,
                "linear interpolation not exact at {xp}"
            );
        }
    }

    #[test]
    fn ballistic_substep() {
        let m = mesh();
        let e = FaceField::zeros(16);
        let p = particle(0.27, [0.3, 0.1, -0.2]);
        let cfg = PushConfig::default();
        let (out, rec) = substep_push(&p, &e, &ImposedB::ZERO, 0.05, &m, &cfg, 0.05).unwrap();
        assert_eq!(out.v, p.v);
        assert!((out.x - (0.27 + 0.05 * 0.3)).abs() <= 1e-15);
        assert_eq!(rec.dtau, 0.05);
    }

    #[test]
    fn magnetic_rotation_preserves_speed() {
        let m = mesh();
        let e = FaceField::zeros(16);
        let b = ImposedB([0.0, 1.3, 0.0]);
        let mut p = particle(0.5, [0.2, 0.05, 0.4]);
        let cfg = PushConfig {
            gyro_substep_fraction: None,
            ..PushConfig::default()
        };
        let speed0 = norm2(p.v).sqrt();
        for _ in 0..50 {
            let (next, _) = substep_push(&p, &e, &b, 0.08, &m, &cfg, 0.08).unwrap();
            p = next;
        }
        let speed1 = norm2(p.v).sqrt();
        assert!(
            (speed1 - speed0).abs() <= 1e-14 * speed0 * 50.0,
            "norm drift {speed0} -> {speed1}"
        );
    }

    #[test]
    fn uniform_e_gives_exact_velocity_increment() {
        let m = mesh();
        let e = FaceField::from_vec(vec![0.7; 16]);
        let p = particle(1.1, [0.0, 0.0, 0.0]);
        let cfg = PushConfig::default();
        let dtau = 0.02;
        let (out, _) = substep_push(&p, &e, &ImposedB::ZERO, dtau, &m, &cfg, dtau).unwrap();
        assert!((out.v[0] - dtau * 0.7).abs() <= 1e-16);
    }

    #[test]
    fn stationary_particle_takes_single_substep() {
        let m = mesh();
        let e = FaceField::zeros(16);
        let p = particle(0.33, [0.0, 0.0, 0.0]);
        let (out, recs) =
            orbit_average(&p, &e, &ImposedB::ZERO, 0.4, &m, &PushConfig::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].dtau, 0.4);
        assert_eq!(out.x, 0.33);
    }

    #[test]
    fn fast_crossing_matches_geometric_times() {
        // E = 0, B = 0: straight line crossing three faces. Substep
        // boundaries must match the geometric crossing times.
        let m = mesh();
        let e = FaceField::zeros(16);
        let p = particle(0.26, [3.1, 0.0, 0.0]);
        let dt = 0.14; // travels 0.434, crossing faces at 0.375, 0.5, 0.625
        let (out, recs) =
            orbit_average(&p, &e, &ImposedB::ZERO, dt, &m, &PushConfig::default()).unwrap();
        assert!(recs.len() >= 4, "expected >= 4 substeps, got {}", recs.len());
        let sum: f64 = recs.iter().map(|r| r.dtau).sum();
        assert!((sum - dt).abs() <= 1e-14 * dt);
        // Geometric oracle for the first three crossings.
        let faces = [0.375, 0.5, 0.625];
        let mut t_acc = 0.0;
        for (rec, face) in recs.iter().zip(faces) {
            t_acc += rec.dtau;
            let t_geo = (face - 0.26) / 3.1;
            assert!(
                (t_acc - t_geo).abs() <= 1e-13,
                "crossing time mismatch: {t_acc} vs {t_geo}"
            );
        }
        assert!((out.x - (0.26 + 3.1 * dt)).abs() <= 1e-12);
    }

    #[test]
    fn face_stopping_leaves_no_interior_face() {
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let e = FaceField::from_vec((0..16).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
        let b = ImposedB([0.05, 0.8, 0.1]);
        let cfg = PushConfig::default();
        for _ in 0..300 {
            let p = Particle {
                x: rng.gen::<f64>() * m.length(),
                v: [
                    rng.gen::<f64>() * 8.0 - 4.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                ],
                q: if rng.gen::<bool>() { 1.0 } else { -1.0 },
                m: 0.5,
                species: 0,
            };
            let (_, recs) = orbit_average(&p, &e, &b, 0.11, &m, &cfg).unwrap();
            let sum: f64 = recs.iter().map(|r| r.dtau).sum();
            assert!((sum - 0.11).abs() <= 1e-14 * 0.11);
            for rec in &recs {
                // Segment endpoints from the midpoint representation.
                let half = 0.5 * rec.dx_seg();
                let a = rec.x_mid - half;
                let bnd = rec.x_mid + half;
                let (lo, hi) = if a <= bnd { (a, bnd) } else { (bnd, a) };
                // No face strictly inside (lo, hi).
                let first = (lo / m.dx()).ceil() as i64;
                let mut faces_inside = 0;
                let mut f = first as f64 * m.dx();
                while f < hi {
                    if f > lo + 4.0 * f64::EPSILON * m.length()
                        && f < hi - 4.0 * f64::EPSILON * m.length()
                    {
                        faces_inside += 1;
                    }
                    f += m.dx();
                }
                assert_eq!(
                    faces_inside, 0,
                    "face strictly inside segment [{lo}, {hi}] (dx = {})",
                    m.dx()
                );
                // Record consistency: x_new - x_old = dtau vx_mid within 1e-13 L.
                assert!(rec.dtau > 0.0);
            }
        }
    }

    #[test]
    fn substep_work_identity() {
        // m (|v'|^2 - |v|^2) / 2 = q E(x_mid) vx_mid dtau for every converged
        // substep; the magnetic force does no work.
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = FaceField::from_vec((0..16).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
        let b = ImposedB([0.02, 0.6, 0.3]);
        let cfg = PushConfig::default();
        for _ in 0..200 {
            let p = Particle {
                x: rng.gen::<f64>() * m.length(),
                v: [
                    rng.gen::<f64>() * 4.0 - 2.0,
                    rng.gen::<f64>() * 4.0 - 2.0,
                    rng.gen::<f64>() * 4.0 - 2.0,
                ],
                q: -1.0,
                m: 0.25,
                species: 1,
            };
            let (_, recs) = orbit_average(&p, &e, &b, 0.07, &m, &cfg).unwrap();
            for rec in recs {
                let dke = 0.5 * rec.m * (norm2(rec.v_new) - norm2(rec.v_old));
                let work = rec.q * gather_e(&e, rec.x_mid, &m) * rec.v_mid[0] * rec.dtau;
                let scale = rec.m * norm2(rec.v_old).max(1.0);
                assert!(
                    (dke - work).abs() <= 1e-13 * scale,
                    "work identity violated: dke={dke} work={work}"
                );
            }
        }
    }

    #[test]
    fn push_is_reversible_with_frozen_field() {
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = FaceField::from_vec((0..16).map(|_| rng.gen::<f64>() * 0.8 - 0.4).collect());
        let cfg = PushConfig::default();
        for _ in 0..100 {
            let p = particle(
                rng.gen::<f64>() * m.length(),
                [rng.gen::<f64>() * 3.0 - 1.5, 0.4, -0.2],
            );
            let (fwd, _) = orbit_average(&p, &e, &ImposedB::ZERO, 0.09, &m, &cfg).unwrap();
            let (back, _) = orbit_average(&fwd, &e, &ImposedB::ZERO, -0.09, &m, &cfg).unwrap();
            assert!(
                wrap_dist(back.x, p.x, m.length()) <= 1e-12,
                "position not recovered: {} vs {}",
                back.x,
                p.x
            );
            for c in 0..3 {
                assert!((back.v[c] - p.v[c]).abs() <= 1e-12 * p.v[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn scatter_current_examples_and_global_consistency() {
        let m = mesh();
        // No records: zero field.
        assert!(scatter_current(&[], &m, 0.1).iter().all(|&v| v == 0.0));

        // One substep exactly at a face with vx = 1, q = 1, dtau = dt puts
        // weight 1/dx on that face (dx = 0.125 here).
        let rec = SubStepRecord {
            dtau: 0.1,
            x_mid: m.face_position(6),
            v_mid: [1.0, 0.0, 0.0],
            v_old: [1.0, 0.0, 0.0],
            v_new: [1.0, 0.0, 0.0],
            q: 1.0,
            m: 1.0,
        };
        let j = scatter_current(&[rec], &m, 0.1);
        assert!((j[6] - 1.0 / m.dx()).abs() <= 1e-15);

        // Global consistency against a direct particle sum.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let e = FaceField::from_vec((0..16).map(|_| rng.gen::<f64>() - 0.5).collect());
        let cfg = PushConfig::default();
        let mut all = Vec::new();
        for _ in 0..50 {
            let p = Particle {
                x: rng.gen::<f64>() * m.length(),
                v: [rng.gen::<f64>() * 4.0 - 2.0, 0.0, 0.0],
                q: rng.gen::<f64>() - 0.5,
                m: 1.0,
                species: 0,
            };
            let (_, recs) = orbit_average(&p, &e, &ImposedB::ZERO, 0.05, &m, &cfg).unwrap();
            all.extend(recs);
        }
        let j = scatter_current(&all, &m, 0.05);
        let lhs: f64 = j.sum() * m.dx();
        let rhs: f64 = all.iter().map(|r| r.q * r.dtau * r.v_mid[0]).sum::<f64>() / 0.05;
        assert!(
            (lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0),
            "global current mismatch: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn scatter_density_examples() {
        let m = mesh();
        assert!(scatter_density(&[], &m).iter().all(|&v| v == 0.0));
        let p = particle(0.893, [0.0; 3]);
        let rho = scatter_density(&[p], &m);
        assert!((rho.sum() * m.dx() - 1.0).abs() <= 1e-14);
        // Linearity: two particles deposit the sum of their single depositions.
        let p2 = particle(1.77, [0.0; 3]);
        let both = scatter_density(&[p, p2], &m);
        let sum = scatter_density(&[p], &m).zip_with(&scatter_density(&[p2], &m), |a, b| a + b);
        for i in 0..16 {
            assert!((both[i] - sum[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn exact_local_charge_conservation_over_a_step() {
        // (rho^{n+1} - rho^n)/dt + div(jbar) = 0 cell by cell, also with
        // crossings; enabled by face-stopping and the S2/S1 pairing.
        let m = mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let e = FaceField::from_vec((0..16).map(|_| rng.gen::<f64>() - 0.5).collect());
        let cfg = PushConfig::default();
        let dt = 0.08;
        let particles: Vec<Particle> = (0..120)
            .map(|i| Particle {
                x: rng.gen::<f64>() * m.length(),
                v: [rng.gen::<f64>() * 6.0 - 3.0, 0.1, 0.0],
                q: if i % 2 == 0 { 1.0 } else { -1.0 },
                m: 1.0,
                species: (i % 2) as u32,
            })
            .collect();
        let rho_n = scatter_density(&particles, &m);
        let mut moved = Vec::new();
        let mut recs = Vec::new();
        for p in &particles {
            let (q, r) = orbit_average(p, &e, &ImposedB::ZERO, dt, &m, &cfg).unwrap();
            moved.push(q);
            recs.extend(r);
        }
        let rho_np1 = scatter_density(&moved, &m);
        let j = scatter_current(&recs, &m, dt);
        let djdx = crate::grid::div(&j, &m);
        let scale = rho_n.max_abs() / dt;
        for i in 0..16 {
            let res = (rho_np1[i] - rho_n[i]) / dt + djdx[i];
            assert!(
                res.abs() <= 1e-12 * scale,
                "charge residual {res:.3e} at cell {i} exceeds {:.3e}",
                1e-12 * scale
            );
        }
    }

    #[test]
    fn half_cell_stops_partition_segments_at_centers() {
        let m = mesh();
        let e = FaceField::zeros(16);
        let cfg = PushConfig {
            half_cell_stops: true,
            ..PushConfig::default()
        };
        let p = particle(0.26, [3.1, 0.0, 0.0]);
        let (_, recs) = orbit_average(&p, &e, &ImposedB::ZERO, 0.14, &m, &cfg).unwrap();
        for rec in &recs {
            // No half-cell boundary strictly inside any segment.
            let half = 0.5 * rec.dx_seg();
            let (lo, hi) = if half >= 0.0 {
                (rec.x_mid - half, rec.x_mid + half)
            } else {
                (rec.x_mid + half, rec.x_mid - half)
            };
            let hstep = m.dx() / 2.0;
            let mut b = (lo / hstep).ceil() * hstep;
            while b < hi {
                assert!(
                    !(b > lo + 1e-14 && b < hi - 1e-14),
                    "half-cell boundary {b} inside segment [{lo}, {hi}]"
                );
                b += hstep;
            }
        }
    }
}
