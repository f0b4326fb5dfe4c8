//! The four-step transmission protocol.
//!
//! 1. Inputs on `H1`, `H2`; every edge system `H5..H13` starts in `|0>`.
//! 2. At time `i = 5..13` the tail node of `e(i)` applies `U_i`, the affine
//!    adder for the code rule of `e(i)` with the key `B1` as constant.
//! 3. `H1, H2, H5..H11` are measured in the Fourier basis. The outcomes go
//!    out on the public channel; `C10` and `C11` are exchanged between the
//!    sinks one-time-padded with `B2`.
//! 4. Each sink removes the outcome-dependent phase from its output with a
//!    power of the phase operator.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversary::AttackSpec;
use crate::code::{check_attackable, CoefficientMatrix, Node, NetworkCode, topology_edge};
use crate::engine::{MeasureMode, Register, RegisterId, SparseState};
use crate::field::{Fp, Prime};
use crate::{Error, Result};

/// Edges whose systems are measured in Step 3, in measurement order.
pub const MEASURED_EDGES: [u8; 9] = [1, 2, 5, 6, 7, 8, 9, 10, 11];

/// Outcomes the sinks exchange under the pad.
pub const SINK_EXCHANGED_EDGES: [u8; 2] = [10, 11];

/// Registers holding the delivered halves.
pub const OUTPUT_EDGES: [u8; 2] = [12, 13];

pub const DEFAULT_BRANCH_CAP: u128 = 59_049; // 3^10

#[derive(Clone, Debug, PartialEq)]
pub enum InputMode {
    /// Halves of `|Phi>_{ref1,H1} ⊗ |Phi>_{ref2,H2}`.
    EntangledHalves,
    /// Explicit pure inputs for `H1`, `H2`; no reference systems.
    GivenStates(Vec<Complex64>, Vec<Complex64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PadVariant {
    /// `B2 ∈ F_p^2` hides both `C10` and `C11`.
    FullPad,
    /// Only `C11` is padded; `C10` is public.
    WeakPadC11Only,
}

impl PadVariant {
    /// Outcomes visible to the eavesdropper, in measurement order.
    pub fn eve_visible_edges(self) -> &'static [u8] {
        match self {
            PadVariant::FullPad => &[1, 2, 5, 6, 7, 8, 9],
            PadVariant::WeakPadC11Only => &[1, 2, 5, 6, 7, 8, 9, 10],
        }
    }

    pub fn padded_edges(self) -> &'static [u8] {
        match self {
            PadVariant::FullPad => &[10, 11],
            PadVariant::WeakPadC11Only => &[11],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub p: Prime,
    pub b1: Fp,
    pub b2: (Fp, Fp),
    pub seed: u64,
    pub input: InputMode,
    pub attack: Option<AttackSpec>,
    pub variant: PadVariant,
}

impl ProtocolConfig {
    /// Entangled inputs, zero keys, no attack, full pad.
    pub fn new(p: Prime) -> Self {
        Self {
            p,
            b1: p.zero(),
            b2: (p.zero(), p.zero()),
            seed: 0,
            input: InputMode::EntangledHalves,
            attack: None,
            variant: PadVariant::FullPad,
        }
    }

    pub fn with_b1(mut self, b1: Fp) -> Self {
        self.b1 = b1;
        self
    }

    pub fn with_b2(mut self, b2: (Fp, Fp)) -> Self {
        self.b2 = b2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_input(mut self, input: InputMode) -> Self {
        self.input = input;
        self
    }

    pub fn with_attack(mut self, attack: AttackSpec) -> Self {
        self.attack = Some(attack);
        self
    }

    pub fn with_variant(mut self, variant: PadVariant) -> Self {
        self.variant = variant;
        self
    }

    fn validate(&self) -> Result<()> {
        for x in [self.b1, self.b2.0, self.b2.1] {
            if x.modulus() != self.p.get() {
                return Err(Error::ModulusMismatch {
                    left: self.p.get(),
                    right: x.modulus(),
                });
            }
        }
        if let Some(attack) = &self.attack {
            check_attackable(attack.edge())?;
            if attack.prime() != self.p {
                return Err(Error::ModulusMismatch {
                    left: self.p.get(),
                    right: attack.prime().get(),
                });
            }
        }
        Ok(())
    }
}

/// One step-2 gate: `target += sum(coeff * control) + key_coeff * B1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gate {
    pub time: u8,
    pub node: Node,
    pub target: RegisterId,
    pub controls: Vec<(RegisterId, Fp)>,
    pub key_coeff: Fp,
}

/// The unitaries `U5..U13` derived from the code rules.
pub fn transmission_schedule(code: &NetworkCode) -> Vec<Gate> {
    let p = code.prime();
    code.rules()
        .iter()
        .map(|rule| {
            let mut controls = Vec::new();
            let mut key_coeff = p.zero();
            for &(input, coeff) in &rule.terms {
                match input {
                    3 | 4 => key_coeff = key_coeff + coeff,
                    e => controls.push((RegisterId::H(e), coeff)),
                }
            }
            Gate {
                time: rule.edge,
                node: topology_edge(rule.edge).expect("rule edge in topology").tail,
                target: RegisterId::H(rule.edge),
                controls,
                key_coeff,
            }
        })
        .collect()
}

/// Public-channel record of Step 3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transcript {
    /// All outcomes `C_k`, as held by the measuring nodes.
    pub outcomes: BTreeMap<u8, Fp>,
    /// Outcomes broadcast in the clear.
    pub public_plain: Vec<(u8, Fp)>,
    /// Padded outcomes `C_k + B2^(i)`.
    pub public_padded: Vec<(u8, Fp)>,
    /// What the eavesdropper learns.
    pub eve_record: Vec<(u8, Fp)>,
}

impl Transcript {
    pub fn new(outcomes: BTreeMap<u8, Fp>, b2: (Fp, Fp), variant: PadVariant) -> Result<Self> {
        for e in MEASURED_EDGES {
            if !outcomes.contains_key(&e) {
                return Err(Error::MissingOutcome(e));
            }
        }
        let padded = variant.padded_edges();
        let public_plain: Vec<(u8, Fp)> = MEASURED_EDGES
            .iter()
            .filter(|e| !padded.contains(e))
            .map(|&e| (e, outcomes[&e]))
            .collect();
        let public_padded = padded
            .iter()
            .map(|&e| (e, outcomes[&e] + pad_for(e, b2)))
            .collect();
        let eve_record = public_plain.clone();
        Ok(Self {
            outcomes,
            public_plain,
            public_padded,
            eve_record,
        })
    }

    /// Outcomes as reconstructed by a sink holding `b2`.
    pub fn decode_at_sinks(&self, b2: (Fp, Fp)) -> BTreeMap<u8, Fp> {
        let mut out: BTreeMap<u8, Fp> = self.public_plain.iter().copied().collect();
        for &(e, c) in &self.public_padded {
            out.insert(e, c - pad_for(e, b2));
        }
        out
    }
}

fn pad_for(edge: u8, b2: (Fp, Fp)) -> Fp {
    if edge == 10 {
        b2.0
    } else {
        b2.1
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub p: Prime,
    pub b1: Fp,
    pub b2: (Fp, Fp),
    pub seed: u64,
    pub variant: PadVariant,
    pub attack: Option<AttackSpec>,
    /// State on `ref1, ref2, H12, H13` (and `E` under attack).
    pub final_state: SparseState,
    pub transcript: Transcript,
    pub branch_probability: f64,
}

impl RunResult {
    /// Fidelity of the delivered halves with `|Phi>_{ref1,H12} |Phi>_{ref2,H13}`.
    pub fn fidelity(&self) -> Result<f64> {
        self.final_state.fidelity_with(&target_state(self.p)?)
    }
}

impl Serialize for RunResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Json<'a> {
            p: Prime,
            b1: Fp,
            b2: [Fp; 2],
            seed: u64,
            variant: PadVariant,
            attack: Option<&'a AttackSpec>,
            outcomes: &'a BTreeMap<u8, Fp>,
            branch_probability: f64,
            fidelity: Option<f64>,
        }
        Json {
            p: self.p,
            b1: self.b1,
            b2: [self.b2.0, self.b2.1],
            seed: self.seed,
            variant: self.variant,
            attack: self.attack.as_ref(),
            outcomes: &self.transcript.outcomes,
            branch_probability: self.branch_probability,
            fidelity: self.fidelity().ok(),
        }
        .serialize(s)
    }
}

/// `|Phi>_{ref1,H12} ⊗ |Phi>_{ref2,H13}`.
pub fn target_state(p: Prime) -> Result<SparseState> {
    SparseState::maximally_entangled(p, RegisterId::Ref1, RegisterId::H(12))?
        .tensor(&SparseState::maximally_entangled(p, RegisterId::Ref2, RegisterId::H(13))?)
}

fn edge_registers() -> impl Iterator<Item = RegisterId> {
    (5..=13).map(RegisterId::H)
}

/// Step 1. Layout: `ref1, ref2, H1, H2, H5..H13` (references only for
/// entangled inputs).
pub fn step1_initialize(config: &ProtocolConfig) -> Result<SparseState> {
    config.validate()?;
    let p = config.p;
    let d = p.as_usize();
    match &config.input {
        InputMode::EntangledHalves => {
            let mut layout = vec![
                Register::new(RegisterId::Ref1, d),
                Register::new(RegisterId::Ref2, d),
                Register::new(RegisterId::H(1), d),
                Register::new(RegisterId::H(2), d),
            ];
            layout.extend(edge_registers().map(|id| Register::new(id, d)));
            let amp = Complex64::new(1.0 / d as f64, 0.0);
            let tuples = (0..d as u32).flat_map(|a1| {
                (0..d as u32).map(move |a2| {
                    let mut t = vec![a1, a2, a1, a2];
                    t.extend(std::iter::repeat_n(0, 9));
                    (t, amp)
                })
            });
            SparseState::from_amplitudes(p, layout, tuples)
        }
        InputMode::GivenStates(psi1, psi2) => {
            let s1 = SparseState::single(p, RegisterId::H(1), psi1)?;
            let s2 = SparseState::single(p, RegisterId::H(2), psi2)?;
            let ids: Vec<RegisterId> = edge_registers().collect();
            s1.tensor(&s2)?.tensor(&SparseState::zeros(p, &ids)?)
        }
    }
}

/// Step 2. An attack on `e(j)` acts right after `U_j`, on the wire.
pub fn step2_transmit(
    mut state: SparseState,
    code: &NetworkCode,
    b1: Fp,
    attack: Option<&AttackSpec>,
) -> Result<SparseState> {
    if let Some(a) = attack {
        check_attackable(a.edge())?;
    }
    for gate in transmission_schedule(code) {
        state.apply_affine_adder(gate.target, &gate.controls, gate.key_coeff * b1)?;
        if let Some(a) = attack.filter(|a| a.edge() == gate.time) {
            state.apply_isometry(gate.target, a.isometry())?;
        }
    }
    Ok(state)
}

/// Where Step-3 outcomes come from.
pub enum OutcomeSource<'a> {
    Sample(&'a mut dyn RngCore),
    /// Published labels `C_k`, one per entry of [`MEASURED_EDGES`].
    Forced(&'a [Fp]),
}

#[derive(Clone, Debug)]
pub struct MeasuredState {
    pub state: SparseState,
    pub transcript: Transcript,
    pub probability: f64,
}

/// Engine outcome `k` (projection onto `|phi_k>`) is published as
/// `C = -k`, so that the branch carries `omega^{+sum C_k Z_k}`.
fn label_from_outcome(p: Prime, k: u32) -> Fp {
    -p.elem(i64::from(k))
}

fn outcome_from_label(c: Fp) -> u32 {
    (-c).value()
}

/// Step 3.
pub fn step3_measure(
    mut state: SparseState,
    config: &ProtocolConfig,
    source: OutcomeSource<'_>,
) -> Result<MeasuredState> {
    let p = config.p;
    let mut outcomes = BTreeMap::new();
    let mut probability = 1.0;
    match source {
        OutcomeSource::Sample(rng) => {
            for e in MEASURED_EDGES {
                let m = state.measure_x_basis(RegisterId::H(e), MeasureMode::Sample(&mut *rng))?;
                outcomes.insert(e, label_from_outcome(p, m.outcome));
                probability *= m.probability;
                state = m.state;
            }
        }
        OutcomeSource::Forced(labels) => {
            if labels.len() != MEASURED_EDGES.len() {
                return Err(Error::MissingOutcome(MEASURED_EDGES[labels.len().min(8)]));
            }
            for (&e, &c) in MEASURED_EDGES.iter().zip(labels) {
                let m = state.measure_x_basis(
                    RegisterId::H(e),
                    MeasureMode::Branch {
                        outcome: outcome_from_label(c),
                        allow_zero: false,
                    },
                )?;
                outcomes.insert(e, c);
                probability *= m.probability;
                state = m.state;
            }
        }
    }
    let transcript = Transcript::new(outcomes, config.b2, config.variant)?;
    Ok(MeasuredState {
        state,
        transcript,
        probability,
    })
}

/// Step-4 exponents `(-sum C_k m_{k,1}, -sum C_k m_{k,2})` for `H12`, `H13`.
pub fn recovery_exponents(outcomes: &BTreeMap<u8, Fp>, m: &CoefficientMatrix) -> Result<(Fp, Fp)> {
    let p = outcomes
        .values()
        .next()
        .map(|c| c.prime())
        .ok_or(Error::MissingOutcome(MEASURED_EDGES[0]))?;
    let mut s1 = p.zero();
    let mut s2 = p.zero();
    for e in MEASURED_EDGES {
        let c = *outcomes.get(&e).ok_or(Error::MissingOutcome(e))?;
        let row = m.row(e).expect("measured edge has a matrix row");
        s1 = s1 + c * row[0];
        s2 = s2 + c * row[1];
    }
    Ok((-s1, -s2))
}

/// Step 4: the sinks decode the padded outcomes with `b2` and correct their
/// outputs.
pub fn step4_recover(
    mut state: SparseState,
    transcript: &Transcript,
    b2: (Fp, Fp),
    m: &CoefficientMatrix,
) -> Result<SparseState> {
    let outcomes = transcript.decode_at_sinks(b2);
    let (e12, e13) = recovery_exponents(&outcomes, m)?;
    state.apply_phase_power(RegisterId::H(12), i64::from(e12.value()))?;
    state.apply_phase_power(RegisterId::H(13), i64::from(e13.value()))?;
    Ok(state)
}

/// State after Steps 1 and 2.
pub fn prepare(config: &ProtocolConfig, code: &NetworkCode) -> Result<SparseState> {
    let s = step1_initialize(config)?;
    step2_transmit(s, code, config.b1, config.attack.as_ref())
}

fn finish(config: &ProtocolConfig, measured: MeasuredState, m: &CoefficientMatrix) -> Result<RunResult> {
    let final_state = step4_recover(measured.state, &measured.transcript, config.b2, m)?;
    Ok(RunResult {
        p: config.p,
        b1: config.b1,
        b2: config.b2,
        seed: config.seed,
        variant: config.variant,
        attack: config.attack.clone(),
        final_state,
        transcript: measured.transcript,
        branch_probability: measured.probability,
    })
}

/// Runs Steps 1-4 with outcomes sampled from `config.seed`.
pub fn run(config: &ProtocolConfig) -> Result<RunResult> {
    let code = NetworkCode::butterfly(config.p);
    let m = code.coefficient_matrix();
    let state = prepare(config, &code)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let measured = step3_measure(state, config, OutcomeSource::Sample(&mut rng))?;
    finish(config, measured, &m)
}

/// Runs Steps 1-4 on one forced outcome branch.
pub fn run_branch(config: &ProtocolConfig, labels: &[Fp]) -> Result<RunResult> {
    let code = NetworkCode::butterfly(config.p);
    let m = code.coefficient_matrix();
    let state = prepare(config, &code)?;
    let measured = step3_measure(state, config, OutcomeSource::Forced(labels))?;
    finish(config, measured, &m)
}

struct Frame {
    state: SparseState,
    depth: usize,
    labels: Vec<Fp>,
    probability: f64,
}

/// Depth-first walk over Step-3 outcome branches. Registers listed for
/// enumeration branch on every nonzero-probability outcome; the rest are
/// sampled from the config seed. `branch_probability` is the probability of
/// the enumerated outcomes, so the yielded values sum to one.
pub struct BranchIter {
    config: ProtocolConfig,
    matrix: CoefficientMatrix,
    enumerate: Vec<bool>,
    rng: ChaCha8Rng,
    stack: Vec<Frame>,
}

impl Iterator for BranchIter {
    type Item = Result<RunResult>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let frame = self.stack.pop()?;
            if frame.depth == MEASURED_EDGES.len() {
                let outcomes = MEASURED_EDGES.iter().copied().zip(frame.labels).collect();
                let measured = Transcript::new(outcomes, self.config.b2, self.config.variant)
                    .map(|transcript| MeasuredState {
                        state: frame.state,
                        transcript,
                        probability: frame.probability,
                    });
                return Some(measured.and_then(|m| finish(&self.config, m, &self.matrix)));
            }
            let reg = RegisterId::H(MEASURED_EDGES[frame.depth]);
            if self.enumerate[frame.depth] {
                for k in (0..self.config.p.get()).rev() {
                    let m = match frame.state.measure_x_basis(
                        reg,
                        MeasureMode::Branch {
                            outcome: k,
                            allow_zero: true,
                        },
                    ) {
                        Ok(m) => m,
                        Err(e) => return Some(Err(e)),
                    };
                    if m.probability == 0.0 {
                        continue;
                    }
                    let mut labels = frame.labels.clone();
                    labels.push(label_from_outcome(self.config.p, k));
                    self.stack.push(Frame {
                        state: m.state,
                        depth: frame.depth + 1,
                        labels,
                        probability: frame.probability * m.probability,
                    });
                }
            } else {
                let m = match frame
                    .state
                    .measure_x_basis(reg, MeasureMode::Sample(&mut self.rng))
                {
                    Ok(m) => m,
                    Err(e) => return Some(Err(e)),
                };
                let mut labels = frame.labels;
                labels.push(label_from_outcome(self.config.p, m.outcome));
                self.stack.push(Frame {
                    state: m.state,
                    depth: frame.depth + 1,
                    labels,
                    probability: frame.probability,
                });
            }
        }
    }
}

/// Enumerates the Step-3 branches over `registers` (a subset of the measured
/// registers). Fails when `p^|registers|` exceeds `cap`.
pub fn enumerate_branches(
    config: &ProtocolConfig,
    registers: &[RegisterId],
    cap: u128,
) -> Result<BranchIter> {
    for r in registers {
        if !MEASURED_EDGES.iter().any(|&e| RegisterId::H(e) == *r) {
            return Err(Error::UnknownRegister(*r));
        }
    }
    let branches = u128::from(config.p.get()).pow(registers.len() as u32);
    if branches > cap {
        return Err(Error::EnumerationCapExceeded { branches, cap });
    }
    let code = NetworkCode::butterfly(config.p);
    let state = prepare(config, &code)?;
    Ok(BranchIter {
        config: config.clone(),
        matrix: code.coefficient_matrix(),
        enumerate: MEASURED_EDGES
            .iter()
            .map(|&e| registers.contains(&RegisterId::H(e)))
            .collect(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        stack: vec![Frame {
            state,
            depth: 0,
            labels: Vec::new(),
            probability: 1.0,
        }],
    })
}

/// All measured registers, for full enumeration.
pub fn measured_registers() -> Vec<RegisterId> {
    MEASURED_EDGES.iter().map(|&e| RegisterId::H(e)).collect()
}
