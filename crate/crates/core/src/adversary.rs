//! Single-edge eavesdropping attacks.
//!
//! Every attack is a Stinespring isometry `V: H_j -> H_E ⊗ H_j`; Eve keeps
//! `H_E` and forwards `H_j`. Any channel on the edge is covered this way
//! because the environment is folded into Eve's register.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::code::check_attackable;
use crate::engine::{omega_table, Isometry};
use crate::field::Prime;
use crate::{Error, Result};

const HAAR_RETRIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ResendBasis {
    Z,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Keep the edge system, forward `|phi_0>`.
    KeepAndSendPhi0,
    /// Haar-random isometry.
    RandomIsometry,
    /// Coherently record a measurement in the given basis and resend the
    /// post-measurement state.
    MeasureAndResend(ResendBasis),
    /// Forward the system untouched (trivial environment).
    IdentityForward,
    /// Caller-supplied isometry.
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    p: Prime,
    edge: u8,
    kind: AttackKind,
    label: String,
    seed: Option<u64>,
    isometry: Isometry,
}

impl AttackSpec {
    pub fn from_isometry(p: Prime, edge: u8, isometry: Isometry, label: impl Into<String>) -> Result<Self> {
        check_attackable(edge)?;
        if isometry.system_dim() != p.as_usize() {
            return Err(Error::ShapeMismatch {
                expected: format!("isometry on dimension {p}"),
                found: format!("dimension {}", isometry.system_dim()),
            });
        }
        Ok(Self {
            p,
            edge,
            kind: AttackKind::Explicit,
            label: label.into(),
            seed: None,
            isometry,
        })
    }

    fn build(
        p: Prime,
        edge: u8,
        kind: AttackKind,
        label: String,
        seed: Option<u64>,
        env_dim: usize,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self> {
        check_attackable(edge)?;
        Ok(Self {
            p,
            edge,
            kind,
            label,
            seed,
            isometry: Isometry::new(env_dim, matrix)?,
        })
    }

    /// `|a> -> |a>_E ⊗ |phi_0>`.
    pub fn keep_and_send_phi0(p: Prime, edge: u8) -> Result<Self> {
        let d = p.as_usize();
        let s = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
        let mut m = DMatrix::zeros(d * d, d);
        for a in 0..d {
            for x in 0..d {
                m[(a * d + x, a)] = s;
            }
        }
        Self::build(p, edge, AttackKind::KeepAndSendPhi0, "keep-phi0".into(), None, d, m)
    }

    pub fn identity_forward(p: Prime, edge: u8) -> Result<Self> {
        let d = p.as_usize();
        Self::build(
            p,
            edge,
            AttackKind::IdentityForward,
            "identity".into(),
            None,
            1,
            DMatrix::identity(d, d),
        )
    }

    /// `|a> -> sum_k <b_k|a> |k>_E ⊗ |b_k>` for the basis `{|b_k>}`.
    pub fn measure_and_resend(p: Prime, edge: u8, basis: ResendBasis) -> Result<Self> {
        let d = p.as_usize();
        let mut m = DMatrix::zeros(d * d, d);
        match basis {
            ResendBasis::Z => {
                for a in 0..d {
                    m[(a * d + a, a)] = Complex64::new(1.0, 0.0);
                }
            }
            ResendBasis::X => {
                let w = omega_table(d);
                let s = 1.0 / d as f64;
                for k in 0..d {
                    for x in 0..d {
                        for a in 0..d {
                            // <phi_k|a> <x|phi_k> = omega^{k(x - a)} / p
                            let e = (k * (x + d - a)) % d;
                            m[(k * d + x, a)] = w[e] * s;
                        }
                    }
                }
            }
        }
        let label = match basis {
            ResendBasis::Z => "measure-z",
            ResendBasis::X => "measure-x",
        };
        Self::build(
            p,
            edge,
            AttackKind::MeasureAndResend(basis),
            label.into(),
            None,
            d,
            m,
        )
    }

    /// Haar-distributed isometry from the QR factorization of a seeded
    /// complex Gaussian `(d_E p) x p` matrix, with the phases of `R`'s
    /// diagonal moved into `Q`.
    pub fn random_isometry(p: Prime, edge: u8, env_dim: usize, seed: u64) -> Result<Self> {
        if env_dim == 0 {
            return Err(Error::InvalidConfig("eavesdropper dimension must be at least 1".into()));
        }
        let d = p.as_usize();
        let n = env_dim * d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..HAAR_RETRIES {
            let g = DMatrix::from_fn(n, d, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            });
            let qr = g.qr();
            let r = qr.r();
            if (0..d).any(|i| r[(i, i)].norm() < 1e-10) {
                continue;
            }
            let mut q = qr.q();
            for j in 0..d {
                let phase = r[(j, j)] / r[(j, j)].norm();
                for i in 0..n {
                    q[(i, j)] *= phase;
                }
            }
            return Self::build(
                p,
                edge,
                AttackKind::RandomIsometry,
                format!("random-d{env_dim}-s{seed}"),
                Some(seed),
                env_dim,
                q,
            );
        }
        Err(Error::InvalidConfig(format!(
            "degenerate Gaussian sample after {HAAR_RETRIES} draws"
        )))
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn edge(&self) -> u8 {
        self.edge
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn env_dim(&self) -> usize {
        self.isometry.env_dim()
    }

    pub fn isometry(&self) -> &Isometry {
        &self.isometry
    }

    /// Same attack moved to another edge.
    pub fn on_edge(&self, edge: u8) -> Result<Self> {
        check_attackable(edge)?;
        Ok(Self {
            edge,
            ..self.clone()
        })
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.p.as_usize() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("index below {}", self.p),
                found: i.to_string(),
            })
        }
    }

    /// `Λ_E(|a><b|)` on `H_E ⊗ H_j`, rows indexed `e * p + x`.
    pub fn channel_output(&self, a: usize, b: usize) -> Result<DMatrix<Complex64>> {
        self.check_index(a)?;
        self.check_index(b)?;
        let m = self.isometry.matrix();
        Ok(m.column(a) * m.column(b).adjoint())
    }

    /// `λ(a,b,x,y) = (I ⊗ <x|) Λ_E(|a><b|) (I ⊗ |y>)`, a `d_E x d_E` block.
    pub fn lambda_op(&self, a: usize, b: usize, x: usize, y: usize) -> Result<DMatrix<Complex64>> {
        for i in [a, b, x, y] {
            self.check_index(i)?;
        }
        let de = self.env_dim();
        let iso = &self.isometry;
        Ok(DMatrix::from_fn(de, de, |e, f| {
            iso.amplitude(e, x, a) * iso.amplitude(f, y, b).conj()
        }))
    }

    /// `σ_b = sum_a λ(a, a, b, b)`.
    pub fn sigma(&self, b: usize) -> Result<DMatrix<Complex64>> {
        self.check_index(b)?;
        let de = self.env_dim();
        let mut acc = DMatrix::zeros(de, de);
        for a in 0..self.p.as_usize() {
            acc += self.lambda_op(a, a, b, b)?;
        }
        Ok(acc)
    }

    /// `sum_b σ_b / p`: the normalized state Eve should hold after the
    /// protocol.
    pub fn eve_target_state(&self) -> DMatrix<Complex64> {
        let de = self.env_dim();
        let mut acc = DMatrix::zeros(de, de);
        for b in 0..self.p.as_usize() {
            acc += self.sigma(b).expect("index in range");
        }
        let tr = acc.trace().re;
        acc / Complex64::new(tr, 0.0)
    }
}

#[derive(Serialize)]
struct AttackJson<'a> {
    edge: u8,
    #[serde(rename = "d_E")]
    d_e: usize,
    label: &'a str,
    kind: AttackKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Row-major `[re, im]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<[f64; 2]>>>,
}

impl Serialize for AttackSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let matrix = self.seed.is_none().then(|| {
            let m = self.isometry.matrix();
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect()
        });
        AttackJson {
            edge: self.edge,
            d_e: self.env_dim(),
            label: &self.label,
            kind: self.kind,
            seed: self.seed,
            matrix,
        }
        .serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn p3() -> Prime {
        Prime::new(3).unwrap()
    }

    fn close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).camax() <= tol
    }

    fn all_attacks(p: Prime, edge: u8) -> Vec<AttackSpec> {
        let mut v = vec![
            AttackSpec::keep_and_send_phi0(p, edge).unwrap(),
            AttackSpec::identity_forward(p, edge).unwrap(),
            AttackSpec::measure_and_resend(p, edge, ResendBasis::Z).unwrap(),
            AttackSpec::measure_and_resend(p, edge, ResendBasis::X).unwrap(),
        ];
        for (i, de) in [1, 3, 9].into_iter().enumerate() {
            v.push(AttackSpec::random_isometry(p, edge, de, 100 + i as u64).unwrap());
        }
        v
    }

    #[test]
    fn keep_phi0_structure() {
        let p = p3();
        let atk = AttackSpec::keep_and_send_phi0(p, 11).unwrap();
        assert_eq!(atk.env_dim(), 3);
        let m = atk.isometry().matrix();
        for a in 0..3 {
            assert!((m.column(a).norm() - 1.0).abs() < TOL);
        }
        // V|2> = |2>_E ⊗ (|0> + |1> + |2>)/sqrt(3)
        for e in 0..3 {
            for x in 0..3 {
                let expect = if e == 2 { 1.0 / 3f64.sqrt() } else { 0.0 };
                assert!((atk.isometry().amplitude(e, x, 2).re - expect).abs() < TOL);
            }
        }
        // Λ(|a><b|) = |a><b|_E ⊗ |phi0><phi0|
        for a in 0..3 {
            for b in 0..3 {
                let out = atk.channel_output(a, b).unwrap();
                let mut eab = DMatrix::zeros(3, 3);
                eab[(a, b)] = Complex64::new(1.0, 0.0);
                let phi0 = DMatrix::from_element(3, 3, Complex64::new(1.0 / 3.0, 0.0));
                assert!(close(&out, &eab.kronecker(&phi0), TOL));
                for x in 0..3 {
                    for y in 0..3 {
                        let lam = atk.lambda_op(a, b, x, y).unwrap();
                        assert!(close(&lam, &(&eab / Complex64::new(3.0, 0.0)), TOL));
                    }
                }
            }
        }
        for b in 0..3 {
            let expect = DMatrix::identity(3, 3) / Complex64::new(3.0, 0.0);
            assert!(close(&atk.sigma(b).unwrap(), &expect, TOL));
        }
    }

    #[test]
    fn identity_forward_lambda() {
        let p = p3();
        let atk = AttackSpec::identity_forward(p, 5).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                for x in 0..3 {
                    for y in 0..3 {
                        let lam = atk.lambda_op(a, b, x, y).unwrap();
                        let expect = if a == x && b == y { 1.0 } else { 0.0 };
                        assert!((lam[(0, 0)].re - expect).abs() < TOL);
                    }
                }
            }
            assert!((atk.sigma(a).unwrap()[(0, 0)].re - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn measure_and_resend_bases() {
        let p = p3();
        let z = AttackSpec::measure_and_resend(p, 7, ResendBasis::Z).unwrap();
        for a in 0..3 {
            assert!((z.isometry().amplitude(a, a, a).re - 1.0).abs() < TOL);
        }
        let x = AttackSpec::measure_and_resend(p, 7, ResendBasis::X).unwrap();
        let w = omega_table(3);
        // X-basis on |0>: (1/sqrt p) sum_k |k>_E |phi_k>
        for k in 0..3 {
            for out in 0..3 {
                let expect = w[(k * out) % 3] / 3.0;
                assert!((x.isometry().amplitude(k, out, 0) - expect).norm() < TOL);
            }
        }
        assert!(z.isometry().deviation() < 1e-10 && x.isometry().deviation() < 1e-10);
    }

    #[test]
    fn random_isometries_are_isometric_and_seeded() {
        let p = p3();
        for seed in 0..100 {
            let atk = AttackSpec::random_isometry(p, 9, 9, seed).unwrap();
            assert!(atk.isometry().deviation() < 1e-10, "seed {seed}");
        }
        let a = AttackSpec::random_isometry(p, 9, 9, 1).unwrap();
        let again = AttackSpec::random_isometry(p, 9, 9, 1).unwrap();
        let b = AttackSpec::random_isometry(p, 9, 9, 2).unwrap();
        assert_eq!(a, again);
        assert!((a.isometry().matrix() - b.isometry().matrix()).camax() > 1e-3);
        let unitary = AttackSpec::random_isometry(p, 5, 1, 3).unwrap();
        assert_eq!(unitary.isometry().matrix().shape(), (3, 3));
        assert!(AttackSpec::random_isometry(p, 5, 0, 3).is_err());
    }

    #[test]
    fn rejects_non_quantum_edges() {
        let p = p3();
        for e in [3, 4, 12, 13, 14] {
            assert!(matches!(
                AttackSpec::keep_and_send_phi0(p, e),
                Err(Error::EdgeOutOfRange(_))
            ));
        }
    }

    #[test]
    fn lambda_reconstructs_channel() {
        let p = p3();
        for atk in all_attacks(p, 6) {
            let de = atk.env_dim();
            for a in 0..3 {
                for b in 0..3 {
                    let direct = atk.channel_output(a, b).unwrap();
                    let mut rebuilt = DMatrix::zeros(de * 3, de * 3);
                    for x in 0..3 {
                        for y in 0..3 {
                            let lam = atk.lambda_op(a, b, x, y).unwrap();
                            let mut xy = DMatrix::zeros(3, 3);
                            xy[(x, y)] = Complex64::new(1.0, 0.0);
                            rebuilt += lam.kronecker(&xy);
                        }
                    }
                    assert!(close(&direct, &rebuilt, TOL), "{}", atk.label());
                }
            }
        }
    }

    #[test]
    fn sigma_is_positive_and_trace_preserving() {
        let p = p3();
        for atk in all_attacks(p, 8) {
            let mut total = 0.0;
            for b in 0..3 {
                let s = atk.sigma(b).unwrap();
                let eig = nalgebra::SymmetricEigen::new(s.clone()).eigenvalues;
                assert!(eig.iter().all(|&l| l >= -1e-10), "{}", atk.label());
                total += s.trace().re;
            }
            assert!((total - 3.0).abs() < 1e-10, "{}", atk.label());
        }
    }

    #[test]
    fn json_shape() {
        let p = p3();
        let atk = AttackSpec::random_isometry(p, 7, 3, 42).unwrap();
        let v = serde_json::to_value(&atk).unwrap();
        assert_eq!(v["edge"], 7);
        assert_eq!(v["d_E"], 3);
        assert_eq!(v["seed"], 42);
        assert!(v.get("matrix").is_none());
        let keep = serde_json::to_value(AttackSpec::keep_and_send_phi0(p, 11).unwrap()).unwrap();
        assert_eq!(keep["matrix"].as_array().unwrap().len(), 9);
    }
}
