//! Centered B-spline shape functions of orders 0-2 and their mesh stencils.
//!
//! Offsets are measured in cell units, `delta = (x_grid - x_p) / dx`, which
//! makes the shapes mesh independent; any `1/dx^2` scaling of second
//! derivatives is applied at the call site. The time-corrected shape
//! `shape_tilde` adds the piecewise second derivative weighted by the substep
//! length and streaming velocity, and remains a partition of unity because
//! the second-derivative stencil sums to zero exactly.

use crate::grid::Mesh1D;

/// B-spline interpolation order, restricted to 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeOrder(u8);

impl ShapeOrder {
    pub const TOP_HAT: ShapeOrder = ShapeOrder(0);
    pub const LINEAR: ShapeOrder = ShapeOrder(1);
    pub const QUADRATIC: ShapeOrder = ShapeOrder(2);

    pub fn new(order: u8) -> Option<ShapeOrder> {
        (order <= 2).then_some(ShapeOrder(order))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Order used for the paired face deposit, `l - 1`.
    pub fn lower(self) -> ShapeOrder {
        assert!(self.0 >= 1, "order 0 has no lower shape");
        ShapeOrder(self.0 - 1)
    }

    /// Half-width of the support in cell units, `(l + 1) / 2`.
    pub fn support_half_width(self) -> f64 {
        (self.0 as f64 + 1.0) / 2.0
    }

    /// Number of nonzero stencil points, `l + 1`.
    pub fn stencil_len(self) -> usize {
        self.0 as usize + 1
    }
}

/// Whether a stencil targets cell centers or faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    Cell,
    Face,
}

/// Centered B-spline value at offset `delta` (cell units).
///
/// Order 0 is the unit top-hat, order 1 the tent of width 2, order 2 the
/// quadratic of width 3. Zero outside the support.
#[inline]
pub fn shape(l: ShapeOrder, delta: f64) -> f64 {
    let a = delta.abs();
    match l.0 {
        0 => {
            // Ties resolved as the limit from larger particle position,
            // consistent with `shape_dd` below.
            if delta > -0.5 && delta <= 0.5 {
                1.0
            } else {
                0.0
            }
        }
        1 => {
            if a < 1.0 {
                1.0 - a
            } else {
                0.0
            }
        }
        _ => {
            if a < 0.5 {
                0.75 - delta * delta
            } else if a < 1.5 {
                let w = 1.5 - a;
                0.5 * w * w
            } else {
                0.0
            }
        }
    }
}

/// Piecewise second derivative of `shape` with respect to the particle
/// position, without the `1/dx^2` scale (values are -2, 1 or 0 for order 2).
///
/// At piece breakpoints the value is the limit from larger particle position
/// (smaller `delta`), so a stencil evaluated with the particle exactly on a
/// face still sums to zero exactly.
#[inline]
pub fn shape_dd_unit(l: ShapeOrder, delta: f64) -> f64 {
    match l.0 {
        2 => {
            if delta > -0.5 && delta <= 0.5 {
                -2.0
            } else if (delta > 0.5 && delta <= 1.5) || (delta > -1.5 && delta <= -0.5) {
                1.0
            } else {
                0.0
            }
        }
        // Orders 0 and 1 are piecewise linear at most: zero away from breakpoints.
        _ => 0.0,
    }
}

/// Second derivative of `shape` with respect to particle position, `1/dx^2`.
#[inline]
pub fn shape_dd(l: ShapeOrder, delta: f64, dx: f64) -> f64 {
    shape_dd_unit(l, delta) / (dx * dx)
}

/// Time-corrected shape used by the energy ledger:
/// `S~_l = S_l + (d^2 S_l / dx_p^2) (dtau^2 / 8) vx^2`.
///
/// Remains a partition of unity for any `(vx, dtau)` because the
/// second-derivative stencil sums to zero.
#[inline]
pub fn shape_tilde(l: ShapeOrder, delta: f64, vx: f64, dtau: f64, dx: f64) -> f64 {
    shape(l, delta) + shape_dd(l, delta, dx) * (dtau * dtau / 8.0) * (vx * vx)
}

/// Mesh stencil of a shape function: wrapped base index plus weights for
/// `l + 1` consecutive cells or faces.
#[derive(Debug, Clone, Copy)]
pub struct StencilWeights {
    base_index: usize,
    weights: [f64; 3],
    len: usize,
    n: usize,
}

impl StencilWeights {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    /// Iterate `(wrapped_mesh_index, weight)` pairs.
    #[inline]
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| {
            let mut idx = self.base_index + k;
            if idx >= self.n {
                idx -= self.n;
            }
            (idx, self.weights[k])
        })
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights[..self.len].iter().sum()
    }
}

/// Grid-point offsets (cell units) for the stencil of shape order `l` around
/// position `xp`, with periodic wraparound.
///
/// Face `i + 1/2` lives at `(i + 1) dx`; cell `i` is centered at `(i + 1/2) dx`.
pub fn stencil(l: ShapeOrder, xp: f64, mesh: &Mesh1D, centering: Centering) -> StencilWeights {
    let n = mesh.n_cells();
    let u = mesh.wrap_position(xp) / mesh.dx();
    // Grid points sit at u = j + s in cell units.
    let s = match centering {
        Centering::Cell => 0.5,
        Centering::Face => 1.0,
    };
    let half = l.support_half_width();
    // Smallest j with (j + s) - u > -half.
    let j0 = (u - s - half).floor() as i64 + 1;
    let len = l.stencil_len();
    let mut weights = [0.0; 3];
    for (k, w) in weights.iter_mut().enumerate().take(len) {
        let delta = (j0 + k as i64) as f64 + s - u;
        *w = shape(l, delta);
    }
    // j0 lies within one period of [0, n) for wrapped positions.
    let n_i = n as i64;
    let mut base = j0;
    if base < 0 {
        base += n_i;
        if base < 0 {
            base = base.rem_euclid(n_i);
        }
    } else if base >= n_i {
        base -= n_i;
        if base >= n_i {
            base = base.rem_euclid(n_i);
        }
    }
    StencilWeights {
        base_index: base as usize,
        weights,
        len,
        n,
    }
}

/// Offset (cell units) of grid point `index` relative to `xp`, matching the
/// convention used by `stencil`. Wrap-aware: returns the nearest image.
#[inline]
pub fn offset_of(index: usize, s: f64, xp: f64, mesh: &Mesh1D) -> f64 {
    let u = mesh.wrap_position(xp) / mesh.dx();
    let mut d = index as f64 + s - u;
    let n = mesh.n_cells() as f64;
    if d > n / 2.0 {
        d -= n;
    } else if d < -n / 2.0 {
        d += n;
    }
    d
}
