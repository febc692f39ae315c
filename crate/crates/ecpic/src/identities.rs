//! Field-only verification kernels for the staggered-mesh algebra behind the
//! multi-dimensional and Darwin energy balances, on small periodic 2D meshes
//! with synthetic data. No particles are involved: the current is defined
//! directly from the discrete Ampere relation, for which the field-side
//! balance holds identically.
//!
//! Staggering convention for the kernels: the x component of a vector lives
//! on x faces `(i+1/2, j)`, the y component on y faces `(i, j+1/2)`, and the
//! z component on cell centers (no z derivatives exist in 2D). Array slot
//! `(i, j)` of a face component refers to the face on the positive side of
//! cell `(i, j)`.
//!
//! The magnetic energy measure used by the composite balance is the
//! face/edge-averaged `(1/2) sum_{c,d} (d_d A^c)^2`, the discrete analog of
//! `|grad A|^2 / 2`; for divergence-free `A` this is the continuum magnetic
//! energy `(curl A)^2 / 2` up to a pure divergence. The transpose-form
//! telescoping identity of the curl-based measure is verified separately by
//! [`check_magnetic_telescoping`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("divergence cleaning failed: residual divergence {residual:.3e} exceeds {tol:.1e} x field scale {scale:.3e}")]
    ProjectionFailure { residual: f64, tol: f64, scale: f64 },
}

/// Periodic 2D mesh with independent (and possibly unequal) spacings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Option<Mesh2D> {
        (nx >= 4 && ny >= 4 && dx > 0.0 && dy > 0.0).then_some(Mesh2D { nx, ny, dx, dy })
    }

    pub fn n_points(&self) -> usize {
        self.nx * self.ny
    }
}

/// Scalar samples on a periodic 2D lattice; the staggering is carried by the
/// caller's interpretation of slot `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Field2D {
    pub fn zeros(mesh: &Mesh2D) -> Field2D {
        Field2D {
            nx: mesh.nx,
            ny: mesh.ny,
            data: vec![0.0; mesh.n_points()],
        }
    }

    pub fn from_fn(mesh: &Mesh2D, mut f: impl FnMut(usize, usize) -> f64) -> Field2D {
        let mut out = Field2D::zeros(mesh);
        for j in 0..mesh.ny {
            for i in 0..mesh.nx {
                out.data[j * mesh.nx + i] = f(i, j);
            }
        }
        out
    }

    /// Wrap-indexed access.
    #[inline]
    pub fn at(&self, i: i64, j: i64) -> f64 {
        let i = i.rem_euclid(self.nx as i64) as usize;
        let j = j.rem_euclid(self.ny as i64) as usize;
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nx + i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn zip_with(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Field2D {
        Field2D {
            nx: self.nx,
            ny: self.ny,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Vector field on the staggered lattice: x on x faces, y on y faces, z on
/// cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredVector2D {
    pub x: Field2D,
    pub y: Field2D,
    pub z: Field2D,
}

impl StaggeredVector2D {
    pub fn zeros(mesh: &Mesh2D) -> StaggeredVector2D {
        StaggeredVector2D {
            x: Field2D::zeros(mesh),
            y: Field2D::zeros(mesh),
            z: Field2D::zeros(mesh),
        }
    }

    pub fn zip_with(&self, other: &StaggeredVector2D, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        StaggeredVector2D {
            x: self.x.zip_with(&other.x, f),
            y: self.y.zip_with(&other.y, f),
            z: self.z.zip_with(&other.z, f),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs()).max(self.z.max_abs())
    }
}

/// Outcome of one identity kernel: the worst cell discrepancy and the scale
/// of the terms entering it.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    pub max_error: f64,
    pub scale: f64,
}

impl IdentityCheck {
    pub fn relative(&self) -> f64 {
        if self.max_error == 0.0 {
            0.0
        } else {
            self.max_error / self.scale.max(f64::MIN_POSITIVE)
        }
    }
}

/// Divergence of a face vector at cells.
fn div_faces(a: &StaggeredVector2D, mesh: &Mesh2D) -> Field2D {
    Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (a.x.at(i, j) - a.x.at(i - 1, j)) / mesh.dx + (a.y.at(i, j) - a.y.at(i, j - 1)) / mesh.dy
    })
}

/// Five-point periodic Laplacian on any of the shifted lattices.
fn laplacian(f: &Field2D, mesh: &Mesh2D) -> Field2D {
    Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j)) / (mesh.dx * mesh.dx)
            + (f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1)) / (mesh.dy * mesh.dy)
    })
}

/// The exact discrete chain rule, dimension by dimension: for a cell scalar
/// `phi` and face vector `A`,
///
/// ```text
/// (1/2)[A_{g+1/2} grad(phi)_g + A_{g-1/2} grad(phi)_{g-1}]
///   = div(avg(phi) A)_g - phi_g div(A)_g
/// ```
///
/// Returns the worst cell mismatch of the two sides.
pub fn check_chain_rule_scalar(
    a: &StaggeredVector2D,
    phi: &Field2D,
    mesh: &Mesh2D,
) -> IdentityCheck {
    let mut max_error = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..mesh.ny as i64 {
        for i in 0..mesh.nx as i64 {
            // x part
            let gx_r = (phi.at(i + 1, j) - phi.at(i, j)) / mesh.dx;
            let gx_l = (phi.at(i, j) - phi.at(i - 1, j)) / mesh.dx;
            let lhs_x = 0.5 * (a.x.at(i, j) * gx_r + a.x.at(i - 1, j) * gx_l);
            let flux_r = 0.5 * (phi.at(i + 1, j) + phi.at(i, j)) * a.x.at(i, j);
            let flux_l = 0.5 * (phi.at(i, j) + phi.at(i - 1, j)) * a.x.at(i - 1, j);
            let rhs_x = (flux_r - flux_l) / mesh.dx
                - phi.at(i, j) * (a.x.at(i, j) - a.x.at(i - 1, j)) / mesh.dx;
            // y part
            let gy_u = (phi.at(i, j + 1) - phi.at(i, j)) / mesh.dy;
            let gy_d = (phi.at(i, j) - phi.at(i, j - 1)) / mesh.dy;
            let lhs_y = 0.5 * (a.y.at(i, j) * gy_u + a.y.at(i, j - 1) * gy_d);
            let flux_u = 0.5 * (phi.at(i, j + 1) + phi.at(i, j)) * a.y.at(i, j);
            let flux_d = 0.5 * (phi.at(i, j) + phi.at(i, j - 1)) * a.y.at(i, j - 1);
            let rhs_y = (flux_u - flux_d) / mesh.dy
                - phi.at(i, j) * (a.y.at(i, j) - a.y.at(i, j - 1)) / mesh.dy;

            let lhs = lhs_x + lhs_y;
            let rhs = rhs_x + rhs_y;
            max_error = max_error.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs()).max(rhs.abs());
        }
    }
    IdentityCheck { max_error, scale }
}

/// Cell-centered gradient tensor `(d_d A^c)` of a staggered vector, using the
/// native difference where the staggering provides one and averaged central
/// differences otherwise. Rows are `d` in `{x, y, z}` (the z row vanishes in
/// 2D), columns `c` in `{x, y, z}`.
fn grad_tensor_at_cells(a: &StaggeredVector2D, mesh: &Mesh2D) -> Vec<[[f64; 3]; 3]> {
    let mut out = vec![[[0.0; 3]; 3]; mesh.n_points()];
    let avg_x_to_cell = |f: &Field2D, i: i64, j: i64| 0.5 * (f.at(i, j) + f.at(i - 1, j));
    let avg_y_to_cell = |f: &Field2D, i: i64, j: i64| 0.5 * (f.at(i, j) + f.at(i, j - 1));
    for j in 0..mesh.ny as i64 {
        for i in 0..mesh.nx as i64 {
            let t = &mut out[(j as usize) * mesh.nx + i as usize];
            // column x: A^x on x faces
            t[0][0] = (a.x.at(i, j) - a.x.at(i - 1, j)) / mesh.dx;
            t[1][0] =
                (avg_x_to_cell(&a.x, i, j + 1) - avg_x_to_cell(&a.x, i, j - 1)) / (2.0 * mesh.dy);
            // column y: A^y on y faces
            t[0][1] =
                (avg_y_to_cell(&a.y, i + 1, j) - avg_y_to_cell(&a.y, i - 1, j)) / (2.0 * mesh.dx);
            t[1][1] = (a.y.at(i, j) - a.y.at(i, j - 1)) / mesh.dy;
            // column z: A^z on cells
            t[0][2] = (a.z.at(i + 1, j) - a.z.at(i - 1, j)) / (2.0 * mesh.dx);
            t[1][2] = (a.z.at(i, j + 1) - a.z.at(i, j - 1)) / (2.0 * mesh.dy);
        }
    }
    out
}

/// Tensor chain rule with `C = (A^{n+1} - A^n)/dt`: for every component the
/// scalar chain rule applied to its cell-centered derivative, summed over
/// dimensions. Both sides are evaluated independently; returns the worst
/// cell/component mismatch.
pub fn check_tensor_chain_rule(
    a_n: &StaggeredVector2D,
    a_np1: &StaggeredVector2D,
    dt: f64,
    mesh: &Mesh2D,
) -> IdentityCheck {
    let c = a_np1.zip_with(a_n, |new, old| (new - old) / dt);
    let a_mid = a_np1.zip_with(a_n, |new, old| 0.5 * (new + old));
    let grad_mid = grad_tensor_at_cells(&a_mid, mesh);

    // Face images of every component of C.
    let cx_on_y = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        0.25 * (c.x.at(i, j) + c.x.at(i - 1, j) + c.x.at(i, j + 1) + c.x.at(i - 1, j + 1))
    });
    let cy_on_x = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        0.25 * (c.y.at(i, j) + c.y.at(i, j - 1) + c.y.at(i + 1, j) + c.y.at(i + 1, j - 1))
    });
    let cz_on_x = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        0.5 * (c.z.at(i, j) + c.z.at(i + 1, j))
    });
    let cz_on_y = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        0.5 * (c.z.at(i, j) + c.z.at(i, j + 1))
    });

    let mut max_error = 0.0f64;
    let mut scale = 0.0f64;
    let idx = |ii: i64, jj: i64| {
        (jj.rem_euclid(mesh.ny as i64) as usize) * mesh.nx + ii.rem_euclid(mesh.nx as i64) as usize
    };
    let faces: [(&Field2D, &Field2D); 3] = [(&c.x, &cx_on_y), (&cy_on_x, &c.y), (&cz_on_x, &cz_on_y)];
    for j in 0..mesh.ny as i64 {
        for i in 0..mesh.nx as i64 {
            for (comp, (c_x, c_y)) in faces.iter().enumerate() {
                // x dimension: phi = d_x A^comp at cells, face field = C^comp
                // on x faces.
                let px = |ii: i64, jj: i64| grad_mid[idx(ii, jj)][0][comp];
                let lhs_x = 0.5
                    * (c_x.at(i, j) * (px(i + 1, j) - px(i, j)) / mesh.dx
                        + c_x.at(i - 1, j) * (px(i, j) - px(i - 1, j)) / mesh.dx);
                let rhs_x = (0.5 * (px(i + 1, j) + px(i, j)) * c_x.at(i, j)
                    - 0.5 * (px(i, j) + px(i - 1, j)) * c_x.at(i - 1, j))
                    / mesh.dx
                    - px(i, j) * (c_x.at(i, j) - c_x.at(i - 1, j)) / mesh.dx;
                // y dimension.
                let py = |ii: i64, jj: i64| grad_mid[idx(ii, jj)][1][comp];
                let lhs_y = 0.5
                    * (c_y.at(i, j) * (py(i, j + 1) - py(i, j)) / mesh.dy
                        + c_y.at(i, j - 1) * (py(i, j) - py(i, j - 1)) / mesh.dy);
                let rhs_y = (0.5 * (py(i, j + 1) + py(i, j)) * c_y.at(i, j)
                    - 0.5 * (py(i, j) + py(i, j - 1)) * c_y.at(i, j - 1))
                    / mesh.dy
                    - py(i, j) * (c_y.at(i, j) - c_y.at(i, j - 1)) / mesh.dy;

                let lhs = lhs_x + lhs_y;
                let rhs = rhs_x + rhs_y;
                max_error = max_error.max((lhs - rhs).abs());
                scale = scale.max(lhs.abs()).max(rhs.abs());
            }
        }
    }
    IdentityCheck { max_error, scale }
}

/// Pointwise magnetic telescoping identity of the transpose (curl) energy
/// measure: with `T = grad A` collocated at cells and `C = (A' - A)/dt`,
///
/// ```text
/// (T_mid - T_mid^t) : grad C = [M(A') - M(A)] / dt,
/// M = (1/2) T : (T - T^t).
/// ```
pub fn check_magnetic_telescoping(
    a_n: &StaggeredVector2D,
    a_np1: &StaggeredVector2D,
    dt: f64,
    mesh: &Mesh2D,
) -> IdentityCheck {
    let t_n = grad_tensor_at_cells(a_n, mesh);
    let t_np1 = grad_tensor_at_cells(a_np1, mesh);
    let m_of = |t: &[[f64; 3]; 3]| {
        let mut m = 0.0;
        for (d, row) in t.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m += 0.5 * v * (v - t[c][d]);
            }
        }
        m
    };
    let mut max_error = 0.0f64;
    let mut scale = 0.0f64;
    for idx in 0..mesh.n_points() {
        let tn = &t_n[idx];
        let tp = &t_np1[idx];
        let mut lhs = 0.0;
        for d in 0..3 {
            for c in 0..3 {
                let mid = 0.5 * (tn[d][c] + tp[d][c]);
                let mid_t = 0.5 * (tn[c][d] + tp[c][d]);
                let rate = (tp[d][c] - tn[d][c]) / dt;
                lhs += (mid - mid_t) * rate;
            }
        }
        let rhs = (m_of(tp) - m_of(tn)) / dt;
        max_error = max_error.max((lhs - rhs).abs());
        scale = scale.max(lhs.abs()).max(rhs.abs());
    }
    IdentityCheck { max_error, scale }
}

/// Remove the discrete gradient part of the in-plane components of `A`:
/// returns `A - grad(psi)` with `psi` solving the periodic five-point Poisson
/// problem `lap(psi) = div(A)`. The z component is untouched (2D has no z
/// derivatives). Fails if the cleaned divergence is not at round-off.
pub fn project_divergence_free(
    a: &StaggeredVector2D,
    mesh: &Mesh2D,
) -> Result<StaggeredVector2D, IdentityError> {
    let d = div_faces(a, mesh);
    let n = mesh.n_points();
    let (nx, ny) = (mesh.nx, mesh.ny);
    let idx = |i: usize, j: usize| j * nx + i;

    // Dense periodic Poisson matrix with a rank-one shift that pins the mean
    // of psi (the periodic Laplacian is singular on constants; the shift is
    // harmless because div(A) has zero sum on a periodic mesh).
    let wx = 1.0 / (mesh.dx * mesh.dx);
    let wy = 1.0 / (mesh.dy * mesh.dy);
    let shift = (2.0 * wx + 2.0 * wy) / n as f64;
    let mut mat = DMatrix::from_element(n, n, shift);
    for j in 0..ny {
        for i in 0..nx {
            let r = idx(i, j);
            mat[(r, r)] += -2.0 * wx - 2.0 * wy;
            mat[(r, idx((i + 1) % nx, j))] += wx;
            mat[(r, idx((i + nx - 1) % nx, j))] += wx;
            mat[(r, idx(i, (j + 1) % ny))] += wy;
            mat[(r, idx(i, (j + ny - 1) % ny))] += wy;
        }
    }
    let rhs = DVector::from_fn(n, |r, _| d.at((r % nx) as i64, (r / nx) as i64));
    let psi_vec = mat
        .lu()
        .solve(&rhs)
        .expect("rank-one shifted Laplacian is regular");
    let psi = Field2D::from_fn(mesh, |i, j| psi_vec[idx(i, j)]);

    let cleaned = StaggeredVector2D {
        x: Field2D::from_fn(mesh, |i, j| {
            let (i, j) = (i as i64, j as i64);
            a.x.at(i, j) - (psi.at(i + 1, j) - psi.at(i, j)) / mesh.dx
        }),
        y: Field2D::from_fn(mesh, |i, j| {
            let (i, j) = (i as i64, j as i64);
            a.y.at(i, j) - (psi.at(i, j + 1) - psi.at(i, j)) / mesh.dy
        }),
        z: a.z.clone(),
    };
    let residual = div_faces(&cleaned, mesh).max_abs();
    let scale = a.max_abs().max(1.0) / mesh.dx.min(mesh.dy);
    if residual > 1e-12 * scale {
        return Err(IdentityError::ProjectionFailure {
            residual,
            tol: 1e-12,
            scale,
        });
    }
    Ok(cleaned)
}

/// Full electromagnetic flux balance of the field-side Darwin step on
/// synthetic potentials: with `jbar` defined from the discrete Ampere
/// relation and `E` from the field definition,
///
/// ```text
/// (M' - M)/dt + (eps' - eps)/dt
///   = div(Gamma_E + Gamma_M + Gamma_M2) - (1/2)[E.jbar]_{face pair avg}
/// ```
///
/// closes to round-off when `A^n` and `A^{n+1}` are divergence free, and
/// fails by many orders when the gauge projection is skipped.
pub fn check_darwin_field_balance(
    phi_n: &Field2D,
    phi_np1: &Field2D,
    a_n: &StaggeredVector2D,
    a_np1: &StaggeredVector2D,
    dt: f64,
    mesh: &Mesh2D,
) -> IdentityCheck {
    let phi_mid = phi_np1.zip_with(phi_n, |a, b| 0.5 * (a + b));
    let dphi = phi_np1.zip_with(phi_n, |a, b| (a - b) / dt);
    let a_mid = a_np1.zip_with(a_n, |new, old| 0.5 * (new + old));
    let c = a_np1.zip_with(a_n, |new, old| (new - old) / dt);

    let lap_ax = laplacian(&a_mid.x, mesh);
    let lap_ay = laplacian(&a_mid.y, mesh);
    let lap_az = laplacian(&a_mid.z, mesh);

    // jbar from the Ampere relation; E from the field definition.
    let jx = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (dphi.at(i + 1, j) - dphi.at(i, j)) / mesh.dx - lap_ax.at(i, j)
    });
    let jy = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (dphi.at(i, j + 1) - dphi.at(i, j)) / mesh.dy - lap_ay.at(i, j)
    });
    let jz = Field2D::from_fn(mesh, |i, j| -lap_az.at(i as i64, j as i64));
    let ex = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        -(phi_mid.at(i + 1, j) - phi_mid.at(i, j)) / mesh.dx - c.x.at(i, j)
    });
    let ey = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        -(phi_mid.at(i, j + 1) - phi_mid.at(i, j)) / mesh.dy - c.y.at(i, j)
    });
    let ez = Field2D::from_fn(mesh, |i, j| -c.z.at(i as i64, j as i64));

    // Electrostatic energy density of a potential snapshot.
    let eps_of = |phi: &Field2D| {
        Field2D::from_fn(mesh, |i, j| {
            let (i, j) = (i as i64, j as i64);
            let exr = -(phi.at(i + 1, j) - phi.at(i, j)) / mesh.dx;
            let exl = -(phi.at(i, j) - phi.at(i - 1, j)) / mesh.dx;
            let eyu = -(phi.at(i, j + 1) - phi.at(i, j)) / mesh.dy;
            let eyd = -(phi.at(i, j) - phi.at(i, j - 1)) / mesh.dy;
            0.25 * (exr * exr + exl * exl + eyu * eyu + eyd * eyd)
        })
    };
    let eps_n = eps_of(phi_n);
    let eps_np1 = eps_of(phi_np1);

    // Magnetic energy density of a snapshot: the face/edge-averaged
    // (1/2) (d A)^2 measure whose rate telescopes exactly against the fluxes
    // below.
    let m_of = |a: &StaggeredVector2D| {
        Field2D::from_fn(mesh, |i, j| {
            let (i, j) = (i as i64, j as i64);
            let dxax = |i: i64, j: i64| (a.x.at(i, j) - a.x.at(i - 1, j)) / mesh.dx; // cell
            let dyax = |i: i64, j: i64| (a.x.at(i, j + 1) - a.x.at(i, j)) / mesh.dy; // edge (i+1/2, j+1/2)
            let dyay = |i: i64, j: i64| (a.y.at(i, j) - a.y.at(i, j - 1)) / mesh.dy; // cell
            let dxay = |i: i64, j: i64| (a.y.at(i + 1, j) - a.y.at(i, j)) / mesh.dx; // edge (i+1/2, j+1/2)
            let dxaz = |i: i64, j: i64| (a.z.at(i + 1, j) - a.z.at(i, j)) / mesh.dx; // x face
            let dyaz = |i: i64, j: i64| (a.z.at(i, j + 1) - a.z.at(i, j)) / mesh.dy; // y face
            let sq = |v: f64| v * v;
            0.5 * sq(dxax(i, j))
                + 0.125
                    * (sq(dyax(i, j))
                        + sq(dyax(i - 1, j))
                        + sq(dyax(i, j - 1))
                        + sq(dyax(i - 1, j - 1)))
                + 0.5 * sq(dyay(i, j))
                + 0.125
                    * (sq(dxay(i, j))
                        + sq(dxay(i - 1, j))
                        + sq(dxay(i, j - 1))
                        + sq(dxay(i - 1, j - 1)))
                + 0.25 * (sq(dxaz(i, j)) + sq(dxaz(i - 1, j)))
                + 0.25 * (sq(dyaz(i, j)) + sq(dyaz(i, j - 1)))
        })
    };
    let m_n = m_of(a_n);
    let m_np1 = m_of(a_np1);

    // Fluxes.
    let dxax_mid = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (a_mid.x.at(i, j) - a_mid.x.at(i - 1, j)) / mesh.dx
    });
    let dyay_mid = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        (a_mid.y.at(i, j) - a_mid.y.at(i, j - 1)) / mesh.dy
    });
    let gamma_x = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        let phi_bar = 0.5 * (phi_mid.at(i + 1, j) + phi_mid.at(i, j));
        let gamma_e = phi_bar * lap_ax.at(i, j);
        // component x, derivative x
        let f_xx = 0.5 * (dxax_mid.at(i + 1, j) + dxax_mid.at(i, j)) * c.x.at(i, j);
        // component y, derivative x: edge-averaged (C^y bar)(d_x A^y)
        let edge = |i: i64, j: i64| {
            let cbar = 0.5 * (c.y.at(i, j) + c.y.at(i + 1, j));
            let da = (a_mid.y.at(i + 1, j) - a_mid.y.at(i, j)) / mesh.dx;
            cbar * da
        };
        let f_yx = 0.5 * (edge(i, j) + edge(i, j - 1));
        // component z, derivative x
        let f_zx = 0.5
            * (c.z.at(i, j) + c.z.at(i + 1, j))
            * ((a_mid.z.at(i + 1, j) - a_mid.z.at(i, j)) / mesh.dx);
        let gamma_m2 = -0.5 * (dphi.at(i, j) + dphi.at(i + 1, j)) * c.x.at(i, j);
        gamma_e + f_xx + f_yx + f_zx + gamma_m2
    });
    let gamma_y = Field2D::from_fn(mesh, |i, j| {
        let (i, j) = (i as i64, j as i64);
        let phi_bar = 0.5 * (phi_mid.at(i, j + 1) + phi_mid.at(i, j));
        let gamma_e = phi_bar * lap_ay.at(i, j);
        let f_yy = 0.5 * (dyay_mid.at(i, j + 1) + dyay_mid.at(i, j)) * c.y.at(i, j);
        // component x, derivative y: edge-averaged (C^x bar)(d_y A^x)
        let edge = |i: i64, j: i64| {
            let cbar = 0.5 * (c.x.at(i, j) + c.x.at(i, j + 1));
            let da = (a_mid.x.at(i, j + 1) - a_mid.x.at(i, j)) / mesh.dy;
            cbar * da
        };
        let f_xy = 0.5 * (edge(i, j) + edge(i - 1, j));
        let f_zy = 0.5
            * (c.z.at(i, j) + c.z.at(i, j + 1))
            * ((a_mid.z.at(i, j + 1) - a_mid.z.at(i, j)) / mesh.dy);
        let gamma_m2 = -0.5 * (dphi.at(i, j) + dphi.at(i, j + 1)) * c.y.at(i, j);
        gamma_e + f_yy + f_xy + f_zy + gamma_m2
    });

    let mut max_error = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..mesh.ny as i64 {
        for i in 0..mesh.nx as i64 {
            let lhs =
                (m_np1.at(i, j) - m_n.at(i, j)) / dt + (eps_np1.at(i, j) - eps_n.at(i, j)) / dt;
            let div_flux = (gamma_x.at(i, j) - gamma_x.at(i - 1, j)) / mesh.dx
                + (gamma_y.at(i, j) - gamma_y.at(i, j - 1)) / mesh.dy;
            let ej = 0.5 * (ex.at(i, j) * jx.at(i, j) + ex.at(i - 1, j) * jx.at(i - 1, j))
                + 0.5 * (ey.at(i, j) * jy.at(i, j) + ey.at(i, j - 1) * jy.at(i, j - 1))
                + ez.at(i, j) * jz.at(i, j);
            let rhs = div_flux - ej;
            max_error = max_error.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs()).max(rhs.abs()).max(ej.abs());
        }
    }
    IdentityCheck { max_error, scale }
}
