use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::Serialize;

use super::{
    check_unique, flat_index, omega_table, position, total_dim, DensityMatrix, Isometry, Register,
    RegisterId, PRUNE_THRESHOLD,
};
use crate::field::{Fp, Prime};
use crate::{Error, Result};

/// How [`SparseState::measure_x_basis`] picks an outcome.
pub enum MeasureMode<'a> {
    /// Draw an outcome from the Born distribution.
    Sample(&'a mut dyn RngCore),
    /// Force outcome `k`. With `allow_zero`, a zero-probability branch is
    /// returned as an empty state instead of an error.
    Branch { outcome: u32, allow_zero: bool },
}

/// Result of measuring one register in the Fourier basis.
#[derive(Clone, Debug)]
pub struct Measurement {
    /// Index `k` of the basis vector `|phi_k> = p^{-1/2} sum_a omega^{ak} |a>`.
    pub outcome: u32,
    pub probability: f64,
    /// Post-measurement state with the measured register removed. Normalized
    /// unless `probability` is zero.
    pub state: SparseState,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasisAmplitude {
    pub index: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

/// A pure state stored as a map from basis tuples to amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    p: Prime,
    layout: Vec<Register>,
    amps: BTreeMap<Vec<u32>, Complex64>,
}

impl SparseState {
    fn check_layout(p: Prime, layout: &[Register]) -> Result<()> {
        check_unique(layout)?;
        for r in layout {
            let ok = match r.id {
                RegisterId::Eve => r.dim >= 1,
                _ => r.dim == p.as_usize(),
            };
            if !ok {
                return Err(Error::DimensionMismatch {
                    register: r.id,
                    expected: p.as_usize(),
                    found: r.dim,
                });
            }
        }
        Ok(())
    }

    /// Builds a state from explicit amplitudes. The result must be normalized.
    pub fn from_amplitudes(
        p: Prime,
        layout: Vec<Register>,
        amplitudes: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
    ) -> Result<Self> {
        Self::check_layout(p, &layout)?;
        let mut amps = BTreeMap::new();
        for (tuple, amp) in amplitudes {
            if tuple.len() != layout.len()
                || tuple.iter().zip(&layout).any(|(&v, r)| v as usize >= r.dim)
            {
                return Err(Error::ShapeMismatch {
                    expected: format!("basis tuple within {} registers", layout.len()),
                    found: format!("{tuple:?}"),
                });
            }
            *amps.entry(tuple).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        let mut state = Self { p, layout, amps };
        state.prune();
        let n = state.norm_sqr();
        if (n - 1.0).abs() > crate::TOLERANCE {
            return Err(Error::NotNormalized(n));
        }
        Ok(state)
    }

    /// A computational basis state.
    pub fn basis(p: Prime, layout: Vec<Register>, values: &[u32]) -> Result<Self> {
        Self::from_amplitudes(p, layout, [(values.to_vec(), Complex64::new(1.0, 0.0))])
    }

    /// `|0...0>` on dimension-`p` registers.
    pub fn zeros(p: Prime, ids: &[RegisterId]) -> Result<Self> {
        let layout = ids.iter().map(|&id| Register::new(id, p.as_usize())).collect();
        Self::basis(p, layout, &vec![0; ids.len()])
    }

    /// `|Phi> = p^{-1/2} sum_a |a, a>`.
    pub fn maximally_entangled(p: Prime, first: RegisterId, second: RegisterId) -> Result<Self> {
        let d = p.as_usize();
        let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
        Self::from_amplitudes(
            p,
            vec![Register::new(first, d), Register::new(second, d)],
            (0..d as u32).map(|a| (vec![a, a], amp)),
        )
    }

    /// A single-register state from a dense vector of length `p`.
    pub fn single(p: Prime, id: RegisterId, vector: &[Complex64]) -> Result<Self> {
        if vector.len() != p.as_usize() {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {p}"),
                found: format!("length {}", vector.len()),
            });
        }
        Self::from_amplitudes(
            p,
            vec![Register::new(id, p.as_usize())],
            vector.iter().enumerate().map(|(a, &c)| (vec![a as u32], c)),
        )
    }

    /// Tensor product; `other`'s registers are appended.
    pub fn tensor(&self, other: &SparseState) -> Result<SparseState> {
        if self.p != other.p {
            return Err(Error::ModulusMismatch {
                left: self.p.get(),
                right: other.p.get(),
            });
        }
        let mut layout = self.layout.clone();
        layout.extend_from_slice(&other.layout);
        check_unique(&layout)?;
        let mut amps = BTreeMap::new();
        for (t1, a1) in &self.amps {
            for (t2, a2) in &other.amps {
                let mut t = t1.clone();
                t.extend_from_slice(t2);
                amps.insert(t, a1 * a2);
            }
        }
        let mut s = SparseState {
            p: self.p,
            layout,
            amps,
        };
        s.prune();
        Ok(s)
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn layout(&self) -> &[Register] {
        &self.layout
    }

    pub fn register_ids(&self) -> Vec<RegisterId> {
        self.layout.iter().map(|r| r.id).collect()
    }

    pub fn has_register(&self, id: RegisterId) -> bool {
        self.layout.iter().any(|r| r.id == id)
    }

    pub fn position(&self, id: RegisterId) -> Result<usize> {
        position(&self.layout, id)
    }

    pub fn support_len(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitude(&self, tuple: &[u32]) -> Complex64 {
        self.amps
            .get(tuple)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], Complex64)> + '_ {
        self.amps.iter().map(|(t, &a)| (t.as_slice(), a))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    }

    fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in self.amps.values_mut() {
                *a /= n;
            }
        }
    }

    fn require_p_dim(&self, pos: usize) -> Result<()> {
        let r = self.layout[pos];
        if r.dim != self.p.as_usize() {
            return Err(Error::DimensionMismatch {
                register: r.id,
                expected: self.p.as_usize(),
                found: r.dim,
            });
        }
        Ok(())
    }

    /// `|.., t, ..> -> |.., t + sum(c_i x_i) + constant, ..>` on `target`.
    pub fn apply_affine_adder(
        &mut self,
        target: RegisterId,
        controls: &[(RegisterId, Fp)],
        constant: Fp,
    ) -> Result<()> {
        let t = self.position(target)?;
        self.require_p_dim(t)?;
        let p = u64::from(self.p.get());
        let mut ctrl = Vec::with_capacity(controls.len());
        for &(id, coeff) in controls {
            if id == target {
                return Err(Error::TargetIsControl(id));
            }
            let pos = self.position(id)?;
            self.require_p_dim(pos)?;
            if coeff.modulus() != self.p.get() {
                return Err(Error::ModulusMismatch {
                    left: self.p.get(),
                    right: coeff.modulus(),
                });
            }
            ctrl.push((pos, u64::from(coeff.value())));
        }
        if constant.modulus() != self.p.get() {
            return Err(Error::ModulusMismatch {
                left: self.p.get(),
                right: constant.modulus(),
            });
        }
        let old = std::mem::take(&mut self.amps);
        for (mut tuple, amp) in old {
            let shift = ctrl
                .iter()
                .fold(u64::from(constant.value()), |acc, &(pos, c)| {
                    (acc + c * u64::from(tuple[pos])) % p
                });
            tuple[t] = ((u64::from(tuple[t]) + shift) % p) as u32;
            self.amps.insert(tuple, amp);
        }
        Ok(())
    }

    /// Applies the phase operator `X^k = sum_a omega^{k a} |a><a|`.
    pub fn apply_phase_power(&mut self, register: RegisterId, k: i64) -> Result<()> {
        let pos = self.position(register)?;
        self.require_p_dim(pos)?;
        let p = i64::from(self.p.get());
        let table = omega_table(p as usize);
        let k = k.rem_euclid(p);
        for (tuple, amp) in self.amps.iter_mut() {
            let e = (k * i64::from(tuple[pos])) % p;
            *amp *= table[e as usize];
        }
        Ok(())
    }

    /// Applies `V` to `register`, appending the environment as the
    /// [`RegisterId::Eve`] register.
    pub fn apply_isometry(&mut self, register: RegisterId, iso: &Isometry) -> Result<()> {
        if self.has_register(RegisterId::Eve) {
            return Err(Error::EveAlreadyAttached);
        }
        let pos = self.position(register)?;
        let dim = self.layout[pos].dim;
        if iso.system_dim() != dim {
            return Err(Error::DimensionMismatch {
                register,
                expected: dim,
                found: iso.system_dim(),
            });
        }
        let old = std::mem::take(&mut self.amps);
        for (tuple, amp) in old {
            let a = tuple[pos] as usize;
            for e in 0..iso.env_dim() {
                for x in 0..dim {
                    let v = iso.amplitude(e, x, a);
                    if v.norm() < PRUNE_THRESHOLD {
                        continue;
                    }
                    let mut t = tuple.clone();
                    t[pos] = x as u32;
                    t.push(e as u32);
                    *self.amps.entry(t).or_insert(Complex64::new(0.0, 0.0)) += amp * v;
                }
            }
        }
        self.layout.push(Register::new(RegisterId::Eve, iso.env_dim()));
        self.prune();
        Ok(())
    }

    /// Unnormalized projection onto `|phi_k>` of `register`, which is removed.
    fn project_x(&self, pos: usize, k: u32, table: &[Complex64]) -> SparseState {
        let p = self.p.get() as u64;
        let scale = 1.0 / (p as f64).sqrt();
        let mut layout = self.layout.clone();
        layout.remove(pos);
        let mut amps: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (tuple, &amp) in &self.amps {
            // <phi_k | a> = omega^{-k a} / sqrt(p)
            let e = (p - (u64::from(k) * u64::from(tuple[pos])) % p) % p;
            let mut rest = tuple.clone();
            rest.remove(pos);
            *amps.entry(rest).or_insert(Complex64::new(0.0, 0.0)) += amp * table[e as usize] * scale;
        }
        let mut s = SparseState {
            p: self.p,
            layout,
            amps,
        };
        s.prune();
        s
    }

    /// Measures `register` in the Fourier basis `{|phi_k>}` and removes it.
    pub fn measure_x_basis(&self, register: RegisterId, mode: MeasureMode<'_>) -> Result<Measurement> {
        let pos = self.position(register)?;
        self.require_p_dim(pos)?;
        let table = omega_table(self.p.as_usize());
        match mode {
            MeasureMode::Branch {
                outcome,
                allow_zero,
            } => {
                if outcome >= self.p.get() {
                    return Err(Error::ShapeMismatch {
                        expected: format!("outcome below {}", self.p),
                        found: outcome.to_string(),
                    });
                }
                let mut state = self.project_x(pos, outcome, &table);
                let probability = state.norm_sqr();
                if probability < PRUNE_THRESHOLD * PRUNE_THRESHOLD {
                    if !allow_zero {
                        return Err(Error::ZeroProbabilityBranch { register, outcome });
                    }
                    state.amps.clear();
                    return Ok(Measurement {
                        outcome,
                        probability: 0.0,
                        state,
                    });
                }
                state.normalize();
                Ok(Measurement {
                    outcome,
                    probability,
                    state,
                })
            }
            MeasureMode::Sample(rng) => {
                let branches: Vec<SparseState> = (0..self.p.get())
                    .map(|k| self.project_x(pos, k, &table))
                    .collect();
                let probs: Vec<f64> = branches.iter().map(SparseState::norm_sqr).collect();
                let total: f64 = probs.iter().sum();
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = probs.iter().rposition(|&q| q > 0.0).unwrap_or(0);
                for (k, &q) in probs.iter().enumerate() {
                    acc += q;
                    if u < acc && q > 0.0 {
                        chosen = k;
                        break;
                    }
                }
                let mut state = branches.into_iter().nth(chosen).expect("outcome in range");
                state.normalize();
                Ok(Measurement {
                    outcome: chosen as u32,
                    probability: probs[chosen],
                    state,
                })
            }
        }
    }

    /// Born probabilities of every Fourier-basis outcome on `register`.
    pub fn x_basis_probabilities(&self, register: RegisterId) -> Result<Vec<f64>> {
        let pos = self.position(register)?;
        self.require_p_dim(pos)?;
        let table = omega_table(self.p.as_usize());
        Ok((0..self.p.get())
            .map(|k| self.project_x(pos, k, &table).norm_sqr())
            .collect())
    }

    /// Reduced density matrix on `keep`, in the order given.
    pub fn partial_trace(&self, keep: &[RegisterId]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyKeep);
        }
        let kept_pos: Vec<usize> = keep
            .iter()
            .map(|&id| self.position(id))
            .collect::<Result<_>>()?;
        let kept_layout: Vec<Register> = kept_pos.iter().map(|&i| self.layout[i]).collect();
        check_unique(&kept_layout)?;
        let traced_pos: Vec<usize> = (0..self.layout.len())
            .filter(|i| !kept_pos.contains(i))
            .collect();
        let mut groups: BTreeMap<Vec<u32>, Vec<(usize, Complex64)>> = BTreeMap::new();
        for (tuple, &amp) in &self.amps {
            let traced: Vec<u32> = traced_pos.iter().map(|&i| tuple[i]).collect();
            let kept: Vec<u32> = kept_pos.iter().map(|&i| tuple[i]).collect();
            groups
                .entry(traced)
                .or_default()
                .push((flat_index(&kept_layout, &kept), amp));
        }
        let dim = total_dim(&kept_layout);
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        for members in groups.values() {
            for &(i, ai) in members {
                for &(j, aj) in members {
                    rho[(i, j)] += ai * aj.conj();
                }
            }
        }
        DensityMatrix::new(kept_layout, rho)
    }

    /// `<target| Tr_rest(|psi><psi|) |target>` where `target` lives on a
    /// subset of this state's registers. Global phases drop out.
    pub fn fidelity_with(&self, target: &SparseState) -> Result<f64> {
        let kept_pos: Vec<usize> = target
            .layout
            .iter()
            .map(|r| {
                let pos = self.position(r.id)?;
                if self.layout[pos].dim != r.dim {
                    return Err(Error::DimensionMismatch {
                        register: r.id,
                        expected: self.layout[pos].dim,
                        found: r.dim,
                    });
                }
                Ok(pos)
            })
            .collect::<Result<_>>()?;
        let traced_pos: Vec<usize> = (0..self.layout.len())
            .filter(|i| !kept_pos.contains(i))
            .collect();
        let mut overlaps: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (tuple, &amp) in &self.amps {
            let kept: Vec<u32> = kept_pos.iter().map(|&i| tuple[i]).collect();
            let t = target.amplitude(&kept);
            if t.norm() == 0.0 {
                continue;
            }
            let traced: Vec<u32> = traced_pos.iter().map(|&i| tuple[i]).collect();
            *overlaps.entry(traced).or_insert(Complex64::new(0.0, 0.0)) += t.conj() * amp;
        }
        Ok(overlaps.values().map(|c| c.norm_sqr()).sum())
    }

    /// Dense amplitude vector in layout order.
    pub fn to_dense(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(total_dim(&self.layout));
        for (t, &a) in &self.amps {
            v[flat_index(&self.layout, t)] = a;
        }
        v
    }

    /// Debug dump of the support, in basis order.
    pub fn dump(&self) -> Vec<BasisAmplitude> {
        self.amps
            .iter()
            .map(|(t, a)| BasisAmplitude {
                index: t.clone(),
                re: a.re,
                im: a.im,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-12;

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn h(i: u8) -> RegisterId {
        RegisterId::H(i)
    }

    fn phi(p: Prime, b: u32) -> Vec<Complex64> {
        let w = omega_table(p.as_usize());
        let n = p.get();
        let s = 1.0 / f64::from(n).sqrt();
        (0..n).map(|a| w[((a * b) % n) as usize] * s).collect()
    }

    #[test]
    fn adder_u5_example() {
        let p = p3();
        let layout = vec![Register::new(h(1), 3), Register::new(h(5), 3)];
        let mut s = SparseState::basis(p, layout, &[1, 0]).unwrap();
        s.apply_affine_adder(h(5), &[(h(1), p.elem(2))], p.zero()).unwrap();
        assert_eq!(s.amplitude(&[1, 2]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn adder_u12_example() {
        let p = p3();
        let layout = vec![
            Register::new(h(8), 3),
            Register::new(h(11), 3),
            Register::new(h(12), 3),
        ];
        let mut s = SparseState::basis(p, layout, &[2, 1, 0]).unwrap();
        s.apply_affine_adder(h(12), &[(h(11), p.half()), (h(8), -p.one())], p.zero())
            .unwrap();
        assert_eq!(s.amplitude(&[2, 1, 0]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn adder_identity_and_errors() {
        let p = p3();
        let mut s = SparseState::maximally_entangled(p, h(1), h(2)).unwrap();
        let before = s.clone();
        s.apply_affine_adder(h(2), &[(h(1), p.zero())], p.zero()).unwrap();
        assert_eq!(s, before);
        assert!(matches!(
            s.apply_affine_adder(h(2), &[(h(2), p.one())], p.zero()),
            Err(Error::TargetIsControl(_))
        ));
        assert!(matches!(
            s.apply_affine_adder(h(9), &[], p.zero()),
            Err(Error::UnknownRegister(_))
        ));
    }

    #[test]
    fn phase_power() {
        let p = p3();
        let mut s = SparseState::basis(p, vec![Register::new(h(1), 3)], &[1]).unwrap();
        s.apply_phase_power(h(1), 1).unwrap();
        let w = omega_table(3)[1];
        assert!((s.amplitude(&[1]) - w).norm() < TOL);
        s.apply_phase_power(h(1), -1).unwrap();
        assert!((s.amplitude(&[1]) - Complex64::new(1.0, 0.0)).norm() < TOL);
        let before = s.clone();
        s.apply_phase_power(h(1), 0).unwrap();
        assert_eq!(s, before);
        s.apply_phase_power(h(1), 3).unwrap();
        assert!((s.amplitude(&[1]) - Complex64::new(1.0, 0.0)).norm() < TOL);
    }

    #[test]
    fn isometry_trivial_environment() {
        let p = p3();
        let mut s = SparseState::maximally_entangled(p, h(1), h(2)).unwrap();
        let iso = Isometry::new(1, DMatrix::identity(3, 3)).unwrap();
        s.apply_isometry(h(2), &iso).unwrap();
        assert_eq!(s.layout().last().unwrap().id, RegisterId::Eve);
        for a in 0..3 {
            assert!((s.amplitude(&[a, a, 0]).re - 1.0 / 3f64.sqrt()).abs() < TOL);
        }
        assert!(matches!(
            s.apply_isometry(h(1), &iso),
            Err(Error::EveAlreadyAttached)
        ));
    }

    #[test]
    fn isometry_keep_and_resend_phi0() {
        let p = p3();
        let s0 = SparseState::maximally_entangled(p, h(1), h(2)).unwrap();
        let mut m = DMatrix::zeros(9, 3);
        for a in 0..3 {
            for x in 0..3 {
                m[(a * 3 + x, a)] = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
            }
        }
        let iso = Isometry::new(3, m).unwrap();
        let mut s = s0.clone();
        s.apply_isometry(h(2), &iso).unwrap();
        assert_eq!(s.support_len(), s0.support_len() * 3);
        for (_, a) in s.iter() {
            assert!((a.norm() - 1.0 / 3.0).abs() < TOL);
        }
        assert!((s.norm_sqr() - 1.0).abs() < TOL);
    }

    #[test]
    fn measure_fourier_eigenstates() {
        for n in [3u64, 5, 7] {
            let p = Prime::new(n).unwrap();
            for k in 0..p.get() {
                let s = SparseState::single(p, h(1), &phi(p, k)).unwrap();
                let probs = s.x_basis_probabilities(h(1)).unwrap();
                for (j, q) in probs.iter().enumerate() {
                    let expect = if j as u32 == k { 1.0 } else { 0.0 };
                    assert!((q - expect).abs() < 1e-10, "p={n} k={k} j={j}");
                }
                let m = s
                    .measure_x_basis(h(1), MeasureMode::Branch { outcome: k, allow_zero: false })
                    .unwrap();
                assert!((m.probability - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn measure_computational_state_uniform() {
        let p = p3();
        let s = SparseState::basis(p, vec![Register::new(h(1), 3)], &[0]).unwrap();
        for q in s.x_basis_probabilities(h(1)).unwrap() {
            assert!((q - 1.0 / 3.0).abs() < TOL);
        }
    }

    #[test]
    fn collapsed_phase_convention() {
        // Measuring |1> (alongside a spectator) leaves phase omega^{-k}
        // relative to the k = 0 branch.
        let p = p3();
        let layout = vec![Register::new(h(1), 3), Register::new(h(2), 3)];
        let s = SparseState::basis(p, layout, &[1, 2]).unwrap();
        let w = omega_table(3);
        for k in 0..3u32 {
            let m = s
                .measure_x_basis(h(1), MeasureMode::Branch { outcome: k, allow_zero: false })
                .unwrap();
            let amp = m.state.amplitude(&[2]);
            assert!((amp - w[((3 - k) % 3) as usize]).norm() < TOL, "k={k}");
        }
    }

    #[test]
    fn zero_probability_branch() {
        let p = p3();
        let s = SparseState::single(p, h(1), &phi(p, 2)).unwrap();
        assert!(matches!(
            s.measure_x_basis(h(1), MeasureMode::Branch { outcome: 0, allow_zero: false }),
            Err(Error::ZeroProbabilityBranch { outcome: 0, .. })
        ));
        let m = s
            .measure_x_basis(h(1), MeasureMode::Branch { outcome: 0, allow_zero: true })
            .unwrap();
        assert_eq!(m.probability, 0.0);
        assert_eq!(m.state.support_len(), 0);
    }

    #[test]
    fn sampling_follows_distribution() {
        let p = p3();
        let s = SparseState::single(p, h(1), &phi(p, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let m = s.measure_x_basis(h(1), MeasureMode::Sample(&mut rng)).unwrap();
            assert_eq!(m.outcome, 1);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let p = p3();
        let bell = SparseState::maximally_entangled(p, h(1), h(2)).unwrap();
        let rho = bell.partial_trace(&[h(1)]).unwrap();
        let mixed = DensityMatrix::maximally_mixed(rho.layout().to_vec());
        assert!(rho.trace_distance(&mixed).unwrap() < TOL);

        let a = SparseState::single(p, h(5), &phi(p, 2)).unwrap();
        let prod = a.tensor(&bell).unwrap();
        let ra = prod.partial_trace(&[h(5)]).unwrap();
        let pure_a = a.partial_trace(&[h(5)]).unwrap();
        assert!(ra.trace_distance(&pure_a).unwrap() < TOL);
        assert!(matches!(bell.partial_trace(&[]), Err(Error::EmptyKeep)));
    }

    #[test]
    fn fidelity_ignores_global_phase() {
        let p = p3();
        let bell = SparseState::maximally_entangled(p, h(1), h(2)).unwrap();
        let mut rotated = bell.clone();
        rotated.apply_phase_power(h(1), 1).unwrap();
        rotated.apply_phase_power(h(2), -1).unwrap();
        assert!((rotated.fidelity_with(&bell).unwrap() - 1.0).abs() < TOL);
        let mut off = bell.clone();
        off.apply_phase_power(h(1), 1).unwrap();
        assert!(off.fidelity_with(&bell).unwrap() < 1e-10);
    }

    #[test]
    fn from_amplitudes_checks_norm() {
        let p = p3();
        let r = SparseState::from_amplitudes(
            p,
            vec![Register::new(h(1), 3)],
            [(vec![0], Complex64::new(0.5, 0.0))],
        );
        assert!(matches!(r, Err(Error::NotNormalized(_))));
        let r = SparseState::from_amplitudes(
            p,
            vec![Register::new(h(1), 4)],
            [(vec![0], Complex64::new(1.0, 0.0))],
        );
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
