//! Exact pure-state simulation over qudit registers.
//!
//! States are sparse maps from basis tuples to amplitudes. Every register has
//! dimension `p` except the eavesdropper register [`RegisterId::Eve`], whose
//! dimension is set by the attack. Basis tuples and dense indices follow the
//! layout order, first register most significant.

mod density;
mod state;

pub use density::{trace_distance_bound, trace_norm_hermitian, DensityMatrix};
pub use state::{BasisAmplitude, MeasureMode, Measurement, SparseState};

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Amplitudes below this modulus are dropped after every operation.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegisterId {
    /// Reference system purifying the first input.
    Ref1,
    /// Reference system purifying the second input.
    Ref2,
    /// The system travelling on edge `e(i)`.
    H(u8),
    /// The eavesdropper's kept system.
    Eve,
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegisterId::Ref1 => f.write_str("ref1"),
            RegisterId::Ref2 => f.write_str("ref2"),
            RegisterId::H(i) => write!(f, "H{i}"),
            RegisterId::Eve => f.write_str("E"),
        }
    }
}

impl Serialize for RegisterId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Register {
    pub id: RegisterId,
    pub dim: usize,
}

impl Register {
    pub fn new(id: RegisterId, dim: usize) -> Self {
        Self { id, dim }
    }
}

pub(crate) fn position(layout: &[Register], id: RegisterId) -> Result<usize> {
    layout
        .iter()
        .position(|r| r.id == id)
        .ok_or(Error::UnknownRegister(id))
}

pub(crate) fn check_unique(layout: &[Register]) -> Result<()> {
    for (i, r) in layout.iter().enumerate() {
        if layout[..i].iter().any(|q| q.id == r.id) {
            return Err(Error::DuplicateRegister(r.id));
        }
    }
    Ok(())
}

pub(crate) fn total_dim(layout: &[Register]) -> usize {
    layout.iter().map(|r| r.dim).product()
}

/// Mixed-radix index of a basis tuple, first register most significant.
pub(crate) fn flat_index(layout: &[Register], tuple: &[u32]) -> usize {
    layout
        .iter()
        .zip(tuple)
        .fold(0, |acc, (r, &v)| acc * r.dim + v as usize)
}

pub(crate) fn unflatten(layout: &[Register], mut index: usize) -> Vec<u32> {
    let mut out = vec![0u32; layout.len()];
    for (slot, r) in out.iter_mut().zip(layout).rev() {
        *slot = (index % r.dim) as u32;
        index /= r.dim;
    }
    out
}

/// `omega^j` for `j = 0..p` with `omega = exp(2 pi i / p)`.
pub fn omega_table(p: usize) -> Vec<Complex64> {
    (0..p)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / p as f64))
        .collect()
}

/// A linear isometry from a `system_dim`-dimensional register into
/// `(env_dim) ⊗ (system_dim)`. Row `e * system_dim + x` is the amplitude on
/// `|e>_E |x>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Isometry {
    system_dim: usize,
    env_dim: usize,
    matrix: DMatrix<Complex64>,
}

impl Isometry {
    pub fn new(env_dim: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let system_dim = matrix.ncols();
        if env_dim == 0 || system_dim == 0 || matrix.nrows() != env_dim * system_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("({}*{system_dim}) x {system_dim}", env_dim),
                found: format!("{} x {}", matrix.nrows(), matrix.ncols()),
            });
        }
        let iso = Self {
            system_dim,
            env_dim,
            matrix,
        };
        let dev = iso.deviation();
        if dev > crate::TOLERANCE {
            return Err(Error::NotIsometry(dev));
        }
        Ok(iso)
    }

    /// Largest entry of `|V†V - I|`.
    pub fn deviation(&self) -> f64 {
        let gram = self.matrix.adjoint() * &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..self.system_dim {
            for j in 0..self.system_dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Amplitude `<e|_E <x| V |a>`.
    pub fn amplitude(&self, env: usize, out: usize, input: usize) -> Complex64 {
        self.matrix[(env * self.system_dim + out, input)]
    }
}
