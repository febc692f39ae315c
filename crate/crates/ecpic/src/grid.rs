//! Periodic staggered 1D mesh and its discrete operators.
//!
//! Cell `i` spans `[i dx, (i+1) dx)` with center at `(i + 1/2) dx`; face
//! `i + 1/2` sits at `(i + 1) dx` and is stored at slot `i` of a
//! [`FaceField`]. With that layout
//!
//! ```text
//! div(f)_i  = (f[i] - f[i-1]) / dx          (periodic)
//! grad(c)_i = (c[i+1] - c[i]) / dx          (lives on face i+1/2)
//! ```
//!
//! Prefix sums (`potential_from_e`, `antiderivative`) use compensated
//! accumulation so the periodic closure stays at round-off even for large
//! meshes.

use crate::kahan::{self, KahanSum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    /// The source handed to `antiderivative` does not sum to zero; upstream
    /// this signals a broken partition of unity in a deposit.
    #[error("source is not zero-sum: |sum| = {sum:.3e} exceeds {tol:.1e} x max|d| = {bound:.3e}")]
    ZeroSumViolation { sum: f64, tol: f64, bound: f64 },
}

/// Uniform periodic 1D mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    n_cells: usize,
    dx: f64,
    length: f64,
}

impl Mesh1D {
    /// Build a mesh with `n_cells >= 4` cells spanning `[0, length)`.
    pub fn new(n_cells: usize, length: f64) -> Option<Mesh1D> {
        if n_cells < 4 || length.is_nan() || length <= 0.0 || !length.is_finite() {
            return None;
        }
        Some(Mesh1D {
            n_cells,
            dx: length / n_cells as f64,
            length,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position of cell center `i`.
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Position of face `i + 1/2` (slot `i` of a `FaceField`).
    pub fn face_position(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.dx
    }

    /// Wrap a position into `[0, length)`. Single-period wraps are exact in
    /// floating point (Sterbenz); larger excursions fall back to remainder.
    #[inline]
    pub fn wrap_position(&self, x: f64) -> f64 {
        let l = self.length;
        let mut x = x;
        if x >= l {
            x -= l;
            if x >= l {
                x = x.rem_euclid(l);
            }
        } else if x < 0.0 {
            x += l;
            if x < 0.0 {
                x = x.rem_euclid(l);
            }
        }
        // rem_euclid can return exactly l for tiny negative inputs.
        if x >= l {
            x = 0.0;
        }
        x
    }

    /// Index of the cell owning position `x` (wrapped).
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let u = (self.wrap_position(x) / self.dx) as usize;
        u.min(self.n_cells - 1)
    }
}

macro_rules! field_type {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            values: Vec<f64>,
        }

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self {
                    values: vec![0.0; n],
                }
            }

            pub fn from_vec(values: Vec<f64>) -> Self {
                Self { values }
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.values
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn iter(&self) -> std::slice::Iter<'_, f64> {
                self.values.iter()
            }

            pub fn mean(&self) -> f64 {
                kahan::mean(&self.values)
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            /// Compensated sum of all entries.
            pub fn sum(&self) -> f64 {
                kahan::sum(&self.values)
            }

            /// Elementwise binary map against another field of the same length.
            pub fn zip_with(&self, other: &$name, f: impl Fn(f64, f64) -> f64) -> $name {
                assert_eq!(self.len(), other.len());
                $name {
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(&a, &b)| f(a, b))
                        .collect(),
                }
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> $name {
                $name {
                    values: self.values.iter().map(|&a| f(a)).collect(),
                }
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.values[i]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.values[i]
            }
        }
    };
}

field_type!(CellField, "Values at cell centers of a periodic 1D mesh.");
field_type!(FaceField, "Values at faces `i + 1/2` of a periodic 1D mesh.");

/// Discrete divergence: `(f_{i+1/2} - f_{i-1/2}) / dx` at cell `i`.
pub fn div(f: &FaceField, mesh: &Mesh1D) -> CellField {
    let n = mesh.n_cells();
    assert_eq!(f.len(), n);
    let mut out = CellField::zeros(n);
    for i in 0..n {
        let left = if i == 0 { n - 1 } else { i - 1 };
        out[i] = (f[i] - f[left]) / mesh.dx();
    }
    out
}

/// Discrete gradient: `(c_{i+1} - c_i) / dx` at face `i + 1/2`.
pub fn grad(c: &CellField, mesh: &Mesh1D) -> FaceField {
    let n = mesh.n_cells();
    assert_eq!(c.len(), n);
    let mut out = FaceField::zeros(n);
    for i in 0..n {
        let right = if i + 1 == n { 0 } else { i + 1 };
        out[i] = (c[right] - c[i]) / mesh.dx();
    }
    out
}

/// Average of adjacent cell values onto face `i + 1/2`.
pub fn face_avg(c: &CellField) -> FaceField {
    let n = c.len();
    let mut out = FaceField::zeros(n);
    for i in 0..n {
        let right = if i + 1 == n { 0 } else { i + 1 };
        out[i] = 0.5 * (c[i] + c[right]);
    }
    out
}

/// Electrostatic potential of the zero-mean part of `e`: the unique periodic
/// `phi` with `grad(phi) = -(e - mean(e))` and gauge `phi_0 = 0`.
///
/// The uniform (zero-wavenumber) part of `e` has no single-valued periodic
/// potential and is excluded by construction.
pub fn potential_from_e(e: &FaceField, mesh: &Mesh1D) -> CellField {
    let n = mesh.n_cells();
    assert_eq!(e.len(), n);
    let mean = e.mean();
    let mut out = CellField::zeros(n);
    let mut acc = KahanSum::new();
    for i in 0..n.saturating_sub(1) {
        // phi_{i+1} = phi_i - dx * (E_{i+1/2} - <E>)
        acc.add(-mesh.dx() * (e[i] - mean));
        out[i + 1] = acc.total();
    }
    out
}

/// Flux `G` with `div(G) = d` and gauge `G_{-1/2} = 0`, built by prefix sum.
///
/// Requires the source to be zero-sum: `|sum d| <= tol * max|d|`. Periodic
/// consistency of the prefix sum follows from that precondition.
pub fn antiderivative(d: &CellField, mesh: &Mesh1D, tol: f64) -> Result<FaceField, GridError> {
    let n = mesh.n_cells();
    assert_eq!(d.len(), n);
    let sum = d.sum();
    let max = d.max_abs();
    let bound = tol * max;
    if sum.abs() > bound && max > 0.0 {
        return Err(GridError::ZeroSumViolation { sum, tol, bound });
    }
    let mut out = FaceField::zeros(n);
    let mut acc = KahanSum::new();
    // G_{-1/2} = G_{n-1/2} = 0 gauge; fill faces 1/2 .. (n-3/2).
    for i in 0..n.saturating_sub(1) {
        acc.add(mesh.dx() * d[i]);
        out[i] = acc.total();
    }
    out[n - 1] = 0.0;
    Ok(out)
}
