use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{check_unique, flat_index, position, total_dim, unflatten, Register, RegisterId, SparseState};
use crate::{Error, Result};

/// A dense density matrix over an ordered set of registers.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    layout: Vec<Register>,
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(layout: Vec<Register>, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_unique(&layout)?;
        let d = total_dim(&layout);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} x {d}"),
                found: format!("{} x {}", matrix.nrows(), matrix.ncols()),
            });
        }
        Ok(Self { layout, matrix })
    }

    pub fn maximally_mixed(layout: Vec<Register>) -> Self {
        let d = total_dim(&layout);
        let matrix = DMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0);
        Self { layout, matrix }
    }

    pub fn layout(&self) -> &[Register] {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Rescales to unit trace.
    pub fn normalized(mut self) -> Self {
        let t = self.trace().re;
        if t > 0.0 {
            self.matrix /= Complex64::new(t, 0.0);
        }
        self
    }

    /// Hermitian within `1e-12`, unit trace within `tol`, eigenvalues at
    /// least `-tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let herm = (&self.matrix - self.matrix.adjoint()).camax() <= 1e-12;
        let tr = (self.trace() - Complex64::new(1.0, 0.0)).norm() <= tol;
        herm && tr && hermitian_eigenvalues(&self.matrix).iter().all(|&l| l >= -tol)
    }

    /// Reduced state on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[RegisterId]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let kept_pos: Vec<usize> = keep
            .iter()
            .map(|&id| position(&self.layout, id))
            .collect::<Result<_>>()?;
        let kept_layout: Vec<Register> = kept_pos.iter().map(|&i| self.layout[i]).collect();
        check_unique(&kept_layout)?;
        let traced_pos: Vec<usize> = (0..self.layout.len())
            .filter(|i| !kept_pos.contains(i))
            .collect();
        let traced_layout: Vec<Register> = traced_pos.iter().map(|&i| self.layout[i]).collect();
        let dk = total_dim(&kept_layout);
        let dt = total_dim(&traced_layout);
        let full = |k: &[u32], t: &[u32]| {
            let mut tuple = vec![0u32; self.layout.len()];
            for (&pos, &v) in kept_pos.iter().zip(k) {
                tuple[pos] = v;
            }
            for (&pos, &v) in traced_pos.iter().zip(t) {
                tuple[pos] = v;
            }
            flat_index(&self.layout, &tuple)
        };
        // index[k][t] -> row of the full matrix
        let index: Vec<Vec<usize>> = (0..dk)
            .map(|k| {
                let kt = unflatten(&kept_layout, k);
                (0..dt)
                    .map(|t| full(&kt, &unflatten(&traced_layout, t)))
                    .collect()
            })
            .collect();
        let mut out = DMatrix::<Complex64>::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..dt {
                    acc += self.matrix[(index[i][t], index[j][t])];
                }
                out[(i, j)] = acc;
            }
        }
        DensityMatrix::new(kept_layout, out)
    }

    /// `self ⊗ other`, layouts concatenated.
    pub fn kron(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let mut layout = self.layout.clone();
        layout.extend_from_slice(&other.layout);
        DensityMatrix::new(layout, self.matrix.kronecker(&other.matrix))
    }

    /// Same operator with registers permuted into `order`.
    pub fn reorder(&self, order: &[RegisterId]) -> Result<DensityMatrix> {
        if order.len() != self.layout.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} registers", self.layout.len()),
                found: format!("{} registers", order.len()),
            });
        }
        let pos: Vec<usize> = order
            .iter()
            .map(|&id| position(&self.layout, id))
            .collect::<Result<_>>()?;
        let new_layout: Vec<Register> = pos.iter().map(|&i| self.layout[i]).collect();
        check_unique(&new_layout)?;
        let d = self.dim();
        let map: Vec<usize> = (0..d)
            .map(|n| {
                let nt = unflatten(&new_layout, n);
                let mut old = vec![0u32; nt.len()];
                for (slot, &v) in pos.iter().zip(&nt) {
                    old[*slot] = v;
                }
                flat_index(&self.layout, &old)
            })
            .collect();
        let m = DMatrix::from_fn(d, d, |i, j| self.matrix[(map[i], map[j])]);
        DensityMatrix::new(new_layout, m)
    }

    fn aligned<'a>(&self, other: &'a DensityMatrix) -> Result<std::borrow::Cow<'a, DensityMatrix>> {
        if self.layout == other.layout {
            return Ok(std::borrow::Cow::Borrowed(other));
        }
        let ids: Vec<RegisterId> = self.layout.iter().map(|r| r.id).collect();
        let r = other.reorder(&ids).map_err(|_| Error::ShapeMismatch {
            expected: format!("{:?}", self.layout),
            found: format!("{:?}", other.layout),
        })?;
        if r.layout != self.layout {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.layout),
                found: format!("{:?}", other.layout),
            });
        }
        Ok(std::borrow::Cow::Owned(r))
    }

    /// `(1/2) ||self - other||_1`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        let other = self.aligned(other)?;
        Ok(0.5 * trace_norm_hermitian(&(&self.matrix - &other.matrix)))
    }

    /// `<psi| rho |psi>` for a pure state on the same registers.
    pub fn fidelity_with_pure(&self, psi: &SparseState) -> Result<f64> {
        let ids: Vec<RegisterId> = self.layout.iter().map(|r| r.id).collect();
        if psi.layout().len() != ids.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.layout),
                found: format!("{:?}", psi.layout()),
            });
        }
        let pos: Vec<usize> = ids
            .iter()
            .map(|&id| psi.position(id))
            .collect::<Result<_>>()?;
        let mut v = nalgebra::DVector::<Complex64>::zeros(self.dim());
        for (tuple, amp) in psi.iter() {
            let reordered: Vec<u32> = pos.iter().map(|&i| tuple[i]).collect();
            for (r, &x) in self.layout.iter().zip(&reordered) {
                if x as usize >= r.dim {
                    return Err(Error::DimensionMismatch {
                        register: r.id,
                        expected: r.dim,
                        found: x as usize + 1,
                    });
                }
            }
            v[flat_index(&self.layout, &reordered)] = amp;
        }
        Ok((v.adjoint() * &self.matrix * &v)[(0, 0)].re)
    }

    /// Trace distance to the product of the marginals on `part` and its
    /// complement.
    pub fn product_deviation(&self, part: &[RegisterId]) -> Result<f64> {
        let rest: Vec<RegisterId> = self
            .layout
            .iter()
            .map(|r| r.id)
            .filter(|id| !part.contains(id))
            .collect();
        if rest.is_empty() {
            return Err(Error::InvalidConfig(
                "bipartition needs registers on both sides".into(),
            ));
        }
        let a = self.partial_trace(part)?;
        let b = self.partial_trace(&rest)?;
        let product = a.kron(&b)?;
        self.trace_distance(&product)
    }
}

/// Real eigenvalues of a Hermitian matrix.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().copied().collect()
}

/// `||m||_1` for Hermitian `m`: the sum of absolute eigenvalues.
pub fn trace_norm_hermitian(m: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|l| l.abs()).sum()
}

/// Upper bound on the trace distance, `(1/2) sqrt(d) ||a - b||_F`, cheap
/// enough to screen thousands of branches before an eigendecomposition.
pub fn trace_distance_bound(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let d = a.nrows() as f64;
    let frob: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    0.5 * d.sqrt() * frob
}
