//! Dense state-vector reference implementation used to cross-check the
//! sparse engine. Everything here is deliberately naive.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Dense {
    pub dims: Vec<usize>,
    pub amps: DVector<Complex64>,
}

fn omega(p: usize, e: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (e % p) as f64 / p as f64)
}

impl Dense {
    pub fn new(dims: Vec<usize>, amps: DVector<Complex64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), amps.len());
        Self { dims, amps }
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&x, &d)| acc * d + x)
    }

    /// `|t> -> |t + sum c_i x_i + k>` on register `target`, modulo `p`.
    pub fn adder(&mut self, p: usize, target: usize, controls: &[(usize, usize)], k: usize) {
        let mut out = DVector::zeros(self.amps.len());
        for i in 0..self.amps.len() {
            let mut d = self.digits(i);
            let shift = controls.iter().map(|&(r, c)| c * d[r]).sum::<usize>() + k;
            d[target] = (d[target] + shift) % p;
            out[self.index(&d)] += self.amps[i];
        }
        self.amps = out;
    }

    pub fn phase(&mut self, p: usize, target: usize, k: usize) {
        for i in 0..self.amps.len() {
            let a = self.digits(i)[target];
            self.amps[i] *= omega(p, k * a);
        }
    }

    /// Applies `V` (rows `e * dim + out`) to `target` and appends `E` last.
    pub fn isometry(&mut self, target: usize, v: &DMatrix<Complex64>) {
        let dim = self.dims[target];
        let env = v.nrows() / dim;
        let mut dims = self.dims.clone();
        dims.push(env);
        let mut next = Dense::new(dims.clone(), DVector::zeros(self.amps.len() * env));
        for i in 0..self.amps.len() {
            let d = self.digits(i);
            for e in 0..env {
                for out in 0..dim {
                    let mut nd = d.clone();
                    nd[target] = out;
                    nd.push(e);
                    let j = next.index(&nd);
                    next.amps[j] += v[(e * dim + out, d[target])] * self.amps[i];
                }
            }
        }
        *self = next;
    }

    /// Projects `target` onto `p^{-1/2} sum_a omega^{ka} |a>` and removes it.
    /// Returns the probability; the state is renormalized when it is positive.
    pub fn project_fourier(&mut self, p: usize, target: usize, k: usize) -> f64 {
        let mut dims = self.dims.clone();
        dims.remove(target);
        let mut next = Dense::new(dims, DVector::zeros(self.amps.len() / p));
        for i in 0..self.amps.len() {
            let mut d = self.digits(i);
            let a = d.remove(target);
            // <phi_k|a> = omega^{-ka} / sqrt(p)
            let w = omega(p, (p - k % p) * a) / (p as f64).sqrt();
            let j = next.index(&d);
            next.amps[j] += w * self.amps[i];
        }
        let prob = next.amps.norm_squared();
        if prob > 0.0 {
            next.amps /= Complex64::new(prob.sqrt(), 0.0);
        }
        *self = next;
        prob
    }

    /// Reduced density matrix on the registers in `keep` (in that order).
    pub fn reduce(&self, keep: &[usize]) -> DMatrix<Complex64> {
        let kd: usize = keep.iter().map(|&r| self.dims[r]).product();
        let rest: Vec<usize> = (0..self.dims.len()).filter(|r| !keep.contains(r)).collect();
        let key = |d: &[usize], regs: &[usize]| regs.iter().fold(0, |acc, &r| acc * self.dims[r] + d[r]);
        let mut m = DMatrix::zeros(kd, kd);
        for i in 0..self.amps.len() {
            let di = self.digits(i);
            for j in 0..self.amps.len() {
                let dj = self.digits(j);
                if rest.iter().all(|&r| di[r] == dj[r]) {
                    m[(key(&di, keep), key(&dj, keep))] += self.amps[i] * self.amps[j].conj();
                }
            }
        }
        m
    }
}

/// Trace norm of a Hermitian matrix through its eigenvalues.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let diff = a - b;
    0.5 * diff.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}
