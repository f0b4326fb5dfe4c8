//! The eavesdropper's view after the protocol and independence certificates.
//!
//! Eve holds her register `E` and the public outcomes (her record `C`). The
//! key `B1` is unknown to her, so her state is averaged over it; outcomes
//! hidden by the pad are marginalized, which is the same as tracing their
//! registers out. The sinks' outputs `H12`, `H13` are traced out as well.
//! For each record value this module builds the conditional state on
//! `ref1 ⊗ ref2 ⊗ E` and measures how far it is from
//! `(I / p^2) ⊗ ρ_E`, where `ρ_E = sum_b σ_b / p` depends on the attack only.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::AttackSpec;
use crate::code::{CoefficientMatrix, NetworkCode};
use crate::engine::{
    omega_table, trace_distance_bound, trace_norm_hermitian, DensityMatrix, Register, RegisterId,
    SparseState,
};
use crate::field::{Fp, Prime};
use crate::protocol::{
    prepare, recovery_exponents, InputMode, PadVariant, ProtocolConfig, DEFAULT_BRANCH_CAP,
    MEASURED_EDGES, OUTPUT_EDGES,
};
use crate::{Error, Result};

/// Records per parallel work unit. Fixed so reductions do not depend on the
/// thread count.
const CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    /// Largest record space enumerated exhaustively.
    pub cap: u128,
    /// Number of uniformly sampled records when the record space exceeds
    /// `cap`. `None` makes that case an error.
    pub sample: Option<usize>,
    /// Apply the sinks' Step-4 correction before discarding their outputs.
    /// Needs the hidden outcomes, so they are enumerated instead of traced.
    pub with_recovery: bool,
    /// Distribution of `B1`; uniform when `None`.
    pub key_weights: Option<Vec<f64>>,
    /// Deviations whose Frobenius screen is at or below this value are
    /// reported as the screen (a certified upper bound); larger ones are
    /// computed exactly.
    pub exact_above: f64,
    /// Keep every conditional state in the report.
    pub retain_states: bool,
    /// Also compute the average post-recovery fidelity under the attack.
    pub with_fidelity: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_BRANCH_CAP,
            sample: None,
            with_recovery: false,
            key_weights: None,
            exact_above: 1e-7,
            retain_states: false,
            with_fidelity: false,
        }
    }
}

/// One amplitude of the post-Step-2 state, regrouped for projection.
#[derive(Clone, Debug)]
struct Cell {
    /// Values of the projected registers.
    proj: Vec<u32>,
    /// Index into the traced registers (used for grouping only).
    traced: usize,
    /// Index into `ref1 ⊗ ref2 ⊗ E`.
    kept: usize,
    amp: Complex64,
    out12: u32,
    out13: u32,
}

/// Eve's view of one attack: conditional states on `ref1 ⊗ ref2 ⊗ E` for
/// each value of her record.
#[derive(Clone, Debug)]
pub struct EveView {
    p: Prime,
    variant: PadVariant,
    attack: AttackSpec,
    visible: Vec<u8>,
    hidden: Vec<u8>,
    with_recovery: bool,
    matrix: CoefficientMatrix,
    /// Cells sorted by traced index, and group boundaries.
    cells: Vec<Cell>,
    groups: Vec<(usize, usize)>,
    kept_layout: Vec<Register>,
    omega: Vec<Complex64>,
}

impl EveView {
    pub fn new(config: &ProtocolConfig, with_recovery: bool, key_weights: Option<&[f64]>) -> Result<Self> {
        let attack = config
            .attack
            .clone()
            .ok_or_else(|| Error::InvalidConfig("security analysis needs an attack".into()))?;
        if config.input != InputMode::EntangledHalves {
            return Err(Error::InvalidConfig(
                "security analysis needs entangled inputs".into(),
            ));
        }
        let p = config.p;
        let d = p.as_usize();
        let weights: Vec<f64> = match key_weights {
            None => vec![1.0 / d as f64; d],
            Some(w) => {
                let total: f64 = w.iter().sum();
                if w.len() != d || w.iter().any(|&x| x < 0.0) || total <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "key weights must be {d} non-negative numbers"
                    )));
                }
                w.iter().map(|x| x / total).collect()
            }
        };
        let visible = config.variant.eve_visible_edges().to_vec();
        let hidden: Vec<u8> = MEASURED_EDGES
            .iter()
            .copied()
            .filter(|e| !visible.contains(e))
            .collect();
        let projected: Vec<RegisterId> = visible
            .iter()
            .chain(if with_recovery { hidden.iter() } else { [].iter() })
            .map(|&e| RegisterId::H(e))
            .collect();
        let kept = [RegisterId::Ref1, RegisterId::Ref2, RegisterId::Eve];
        let code = NetworkCode::butterfly(p);

        let mut cells = Vec::new();
        let mut traced_ids: BTreeMap<(usize, Vec<u32>), usize> = BTreeMap::new();
        let mut kept_layout = Vec::new();
        for (b1, &w) in p.elements().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            let cfg = config.clone().with_b1(b1);
            let state = prepare(&cfg, &code)?;
            let proj_pos: Vec<usize> = projected
                .iter()
                .map(|&id| state.position(id))
                .collect::<Result<_>>()?;
            let kept_pos: Vec<usize> = kept
                .iter()
                .map(|&id| state.position(id))
                .collect::<Result<_>>()?;
            let traced_pos: Vec<usize> = (0..state.layout().len())
                .filter(|i| !proj_pos.contains(i) && !kept_pos.contains(i))
                .collect();
            let p12 = state.position(RegisterId::H(OUTPUT_EDGES[0]))?;
            let p13 = state.position(RegisterId::H(OUTPUT_EDGES[1]))?;
            kept_layout = kept_pos.iter().map(|&i| state.layout()[i]).collect();
            let scale = w.sqrt();
            for (tuple, amp) in state.iter() {
                let key: Vec<u32> = traced_pos.iter().map(|&i| tuple[i]).collect();
                let n = traced_ids.len();
                // Different keys never interfere: group per (b1, traced values).
                let traced = *traced_ids.entry((b1.value() as usize, key)).or_insert(n);
                let kept_idx = kept_pos
                    .iter()
                    .zip(&kept_layout)
                    .fold(0, |acc, (&i, r)| acc * r.dim + tuple[i] as usize);
                cells.push(Cell {
                    proj: proj_pos.iter().map(|&i| tuple[i]).collect(),
                    traced,
                    kept: kept_idx,
                    amp: amp * scale,
                    out12: tuple[p12],
                    out13: tuple[p13],
                });
            }
        }
        cells.sort_by_key(|c| c.traced);
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=cells.len() {
            if i == cells.len() || cells[i].traced != cells[start].traced {
                groups.push((start, i));
                start = i;
            }
        }
        Ok(Self {
            p,
            variant: config.variant,
            attack,
            visible,
            hidden,
            with_recovery,
            matrix: code.coefficient_matrix(),
            cells,
            groups,
            kept_layout,
            omega: omega_table(d),
        })
    }

    pub fn visible_edges(&self) -> &[u8] {
        &self.visible
    }

    pub fn record_count(&self) -> u128 {
        u128::from(self.p.get()).pow(self.visible.len() as u32)
    }

    pub fn kept_layout(&self) -> &[Register] {
        &self.kept_layout
    }

    pub fn kept_dim(&self) -> usize {
        self.kept_layout.iter().map(|r| r.dim).product()
    }

    /// Record with the given index, first visible edge most significant.
    pub fn record_at(&self, mut index: u128) -> Vec<Fp> {
        let p = u128::from(self.p.get());
        let mut out = vec![self.p.zero(); self.visible.len()];
        for slot in out.iter_mut().rev() {
            *slot = self.p.elem((index % p) as i64);
            index /= p;
        }
        out
    }

    /// Unnormalized conditional state `P(C) ρ_C` on `ref1 ⊗ ref2 ⊗ E`; its
    /// trace is the probability of `record`.
    pub fn conditional_unnormalized(&self, record: &[Fp]) -> Result<DMatrix<Complex64>> {
        if record.len() != self.visible.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("record of {} outcomes", self.visible.len()),
                found: format!("{} outcomes", record.len()),
            });
        }
        let p = self.p.get() as u64;
        let kd = self.kept_dim();
        let mut rho = DMatrix::<Complex64>::zeros(kd, kd);
        let mut scratch = vec![Complex64::new(0.0, 0.0); kd];
        let mut touched: Vec<usize> = Vec::with_capacity(kd);

        let hidden_count = if self.with_recovery {
            self.p.as_usize().pow(self.hidden.len() as u32)
        } else {
            1
        };
        let mut labels: Vec<u64> = record.iter().map(|c| u64::from(c.value())).collect();
        labels.resize(labels.len() + if self.with_recovery { self.hidden.len() } else { 0 }, 0);
        for h in 0..hidden_count {
            let mut rest = h;
            for slot in labels[self.visible.len()..].iter_mut().rev() {
                *slot = (rest % self.p.as_usize()) as u64;
                rest /= self.p.as_usize();
            }
            let (e12, e13) = if self.with_recovery {
                let outcomes: BTreeMap<u8, Fp> = self
                    .visible
                    .iter()
                    .chain(&self.hidden)
                    .zip(&labels)
                    .map(|(&e, &c)| (e, self.p.elem(c as i64)))
                    .collect();
                let (a, b) = recovery_exponents(&outcomes, &self.matrix)?;
                (u64::from(a.value()), u64::from(b.value()))
            } else {
                (0, 0)
            };
            for &(start, end) in &self.groups {
                for cell in &self.cells[start..end] {
                    // <phi_{-C}|v> = omega^{C v} / sqrt(p); the 1/sqrt(p)
                    // factors are applied once at the end.
                    let mut e = cell
                        .proj
                        .iter()
                        .zip(&labels)
                        .fold(0u64, |acc, (&v, &c)| acc + u64::from(v) * c);
                    e += e12 * u64::from(cell.out12) + e13 * u64::from(cell.out13);
                    let w = self.omega[(e % p) as usize];
                    if scratch[cell.kept] == Complex64::new(0.0, 0.0) {
                        touched.push(cell.kept);
                    }
                    scratch[cell.kept] += cell.amp * w;
                }
                for &i in &touched {
                    let ai = scratch[i];
                    for &j in &touched {
                        rho[(i, j)] += ai * scratch[j].conj();
                    }
                }
                for &i in &touched {
                    scratch[i] = Complex64::new(0.0, 0.0);
                }
                touched.clear();
            }
        }
        let projected = self.visible.len() + if self.with_recovery { self.hidden.len() } else { 0 };
        let norm = (self.p.get() as f64).powi(projected as i32);
        Ok(rho / Complex64::new(norm, 0.0))
    }

    /// `(P(C), ρ_C)` for one record.
    pub fn conditional_state(&self, record: &[Fp]) -> Result<(f64, DensityMatrix)> {
        let m = self.conditional_unnormalized(record)?;
        let prob = m.trace().re;
        let rho = DensityMatrix::new(self.kept_layout.clone(), m)?;
        Ok((prob, if prob > 0.0 { rho.normalized() } else { rho }))
    }
}

/// Per-record summary. Deviations are trace distances, or certified upper
/// bounds when below [`AnalysisOptions::exact_above`].
#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub record: Vec<Fp>,
    pub probability: f64,
    /// `ρ_ref|C` vs `I / p^2`.
    pub reference_deviation: f64,
    /// `ρ_C` vs `(I / p^2) ⊗ (sum_b σ_b / p)`.
    pub target_deviation: f64,
    /// `ρ_C` vs `ρ_ref|C ⊗ ρ_E|C`.
    pub product_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecurityReport {
    pub p: Prime,
    pub attack: AttackSpec,
    pub variant: PadVariant,
    pub with_recovery: bool,
    pub visible_edges: Vec<u8>,
    pub records_total: u128,
    pub records_evaluated: usize,
    pub sampled: bool,
    pub probability_total: f64,
    /// Total-variation distance of the record distribution from uniform
    /// (estimated from the sample when sampled).
    pub record_tv_distance: f64,
    /// Product deviation of the classical-quantum state on
    /// `ref ⊗ (E, record)`: `sum_C P(C) D(ρ_C, ρ_ref|C ⊗ ρ_E|C)`.
    pub product_deviation: f64,
    pub reference_deviation_from_maximally_mixed: f64,
    pub worst_target_deviation: f64,
    /// Distance between Eve's averaged state and `sum_b σ_b / p`.
    pub sigma_sum_match: f64,
    pub output_fidelity_under_attack: Option<f64>,
    pub per_branch: Vec<BranchSummary>,
    /// `sum_C P(C) ρ_C` on `ref1 ⊗ ref2 ⊗ E`.
    #[serde(skip)]
    pub aggregate_state: DensityMatrix,
    #[serde(skip)]
    pub eve_target: DMatrix<Complex64>,
    #[serde(skip)]
    pub retained_states: Vec<DensityMatrix>,
}

fn screened_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, exact_above: f64) -> f64 {
    let bound = trace_distance_bound(a, b);
    if bound <= exact_above {
        bound
    } else {
        0.5 * trace_norm_hermitian(&(a - b))
    }
}

/// Marginals of a matrix on `A ⊗ B` with `dim(B) = db`.
fn marginals(m: &DMatrix<Complex64>, db: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let da = m.nrows() / db;
    let mut ra = DMatrix::zeros(da, da);
    let mut rb = DMatrix::zeros(db, db);
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                ra[(i, j)] += m[(i * db + k, j * db + k)];
            }
        }
    }
    for k in 0..db {
        for l in 0..db {
            for i in 0..da {
                rb[(k, l)] += m[(i * db + k, i * db + l)];
            }
        }
    }
    (ra, rb)
}

struct ChunkResult {
    summaries: Vec<BranchSummary>,
    aggregate: DMatrix<Complex64>,
    retained: Vec<DensityMatrix>,
}

/// Builds Eve's view for `config.attack` and certifies each record.
pub fn analyze(config: &ProtocolConfig, opts: &AnalysisOptions) -> Result<SecurityReport> {
    let view = EveView::new(config, opts.with_recovery, opts.key_weights.as_deref())?;
    let attack = view.attack.clone();
    let p = view.p;
    let d2 = p.as_usize() * p.as_usize();
    let de = attack.env_dim();
    let kd = view.kept_dim();

    let total = view.record_count();
    let (indices, sampled): (Vec<u128>, bool) = if total <= opts.cap {
        ((0..total).collect(), false)
    } else if let Some(n) = opts.sample {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        ((0..n).map(|_| rng.random_range(0..total)).collect(), true)
    } else {
        return Err(Error::EnumerationCapExceeded {
            branches: total,
            cap: opts.cap,
        });
    };

    let eve_target = attack.eve_target_state();
    let maximally_mixed_ref = DMatrix::<Complex64>::identity(d2, d2) / Complex64::new(d2 as f64, 0.0);
    let target = maximally_mixed_ref.kronecker(&eve_target);

    let chunks: Vec<Result<ChunkResult>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = ChunkResult {
                summaries: Vec::with_capacity(chunk.len()),
                aggregate: DMatrix::zeros(kd, kd),
                retained: Vec::new(),
            };
            for &index in chunk {
                let record = view.record_at(index);
                let un = view.conditional_unnormalized(&record)?;
                let prob = un.trace().re;
                out.aggregate += &un;
                let (reference_deviation, target_deviation, product_deviation) = if prob > 0.0 {
                    let rho = &un / Complex64::new(prob, 0.0);
                    let (r_ref, r_eve) = marginals(&rho, de);
                    (
                        screened_distance(&r_ref, &maximally_mixed_ref, opts.exact_above),
                        screened_distance(&rho, &target, opts.exact_above),
                        screened_distance(&rho, &r_ref.kronecker(&r_eve), opts.exact_above),
                    )
                } else {
                    (0.0, 0.0, 0.0)
                };
                if opts.retain_states {
                    out.retained
                        .push(DensityMatrix::new(view.kept_layout.clone(), un.clone())?.normalized());
                }
                out.summaries.push(BranchSummary {
                    record,
                    probability: prob,
                    reference_deviation,
                    target_deviation,
                    product_deviation,
                });
            }
            Ok(out)
        })
        .collect();

    let mut per_branch = Vec::with_capacity(indices.len());
    let mut aggregate = DMatrix::<Complex64>::zeros(kd, kd);
    let mut retained_states = Vec::new();
    for c in chunks {
        let c = c?;
        per_branch.extend(c.summaries);
        aggregate += c.aggregate;
        retained_states.extend(c.retained);
    }

    let probability_total: f64 = per_branch.iter().map(|b| b.probability).sum();
    let uniform = 1.0 / total as f64;
    let record_tv_distance = if sampled {
        let mean_abs: f64 = per_branch
            .iter()
            .map(|b| (b.probability - uniform).abs())
            .sum::<f64>()
            / per_branch.len().max(1) as f64;
        0.5 * mean_abs * total as f64
    } else {
        0.5 * per_branch
            .iter()
            .map(|b| (b.probability - uniform).abs())
            .sum::<f64>()
    };
    let product_deviation = per_branch
        .iter()
        .map(|b| b.probability * b.product_deviation)
        .sum::<f64>()
        / probability_total;
    let reference_deviation_from_maximally_mixed = per_branch
        .iter()
        .map(|b| b.reference_deviation)
        .fold(0.0, f64::max);
    let worst_target_deviation = per_branch
        .iter()
        .map(|b| b.target_deviation)
        .fold(0.0, f64::max);

    let aggregate = aggregate / Complex64::new(probability_total, 0.0);
    let (_, eve_avg) = marginals(&aggregate, de);
    let sigma_sum_match = 0.5 * trace_norm_hermitian(&(&eve_avg - &eve_target));

    let output_fidelity_under_attack = if opts.with_fidelity {
        let mut acc = 0.0;
        for b1 in p.elements() {
            acc += attacked_fidelity(&config.clone().with_b1(b1), opts.cap)?;
        }
        Some(acc / p.get() as f64)
    } else {
        None
    };

    Ok(SecurityReport {
        p,
        attack,
        variant: view.variant,
        with_recovery: opts.with_recovery,
        visible_edges: view.visible.clone(),
        records_total: total,
        records_evaluated: per_branch.len(),
        sampled,
        probability_total,
        record_tv_distance,
        product_deviation,
        reference_deviation_from_maximally_mixed,
        worst_target_deviation,
        sigma_sum_match,
        output_fidelity_under_attack,
        per_branch,
        aggregate_state: DensityMatrix::new(view.kept_layout.clone(), aggregate)?,
        eve_target,
        retained_states,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceVerdict {
    pub independent: bool,
    pub reference_maximally_mixed: bool,
    pub eve_state_matches_target: bool,
    pub record_uniform: bool,
    /// Record with the largest deviation, and that deviation.
    pub worst_record: Option<Vec<Fp>>,
    pub worst_deviation: f64,
}

/// Checks that, for every record, the reference is maximally mixed, the
/// joint state is `(I / p^2) ⊗ (sum_b σ_b / p)`, and that the records are
/// uniform, each within `tol`.
pub fn verify_independence(report: &SecurityReport, tol: f64) -> IndependenceVerdict {
    let worst = report
        .per_branch
        .iter()
        .map(|b| (b, b.reference_deviation.max(b.target_deviation)))
        .max_by(|x, y| x.1.total_cmp(&y.1));
    let reference_maximally_mixed = report.reference_deviation_from_maximally_mixed <= tol;
    let eve_state_matches_target = report.worst_target_deviation <= tol;
    let record_uniform = report.record_tv_distance <= tol;
    IndependenceVerdict {
        independent: reference_maximally_mixed && eve_state_matches_target && record_uniform,
        reference_maximally_mixed,
        eve_state_matches_target,
        record_uniform,
        worst_record: worst.map(|(b, _)| b.record.clone()),
        worst_deviation: worst.map(|(_, d)| d).unwrap_or(0.0),
    }
}

/// Average fidelity of the post-recovery outputs with
/// `|Phi>_{ref1,H12} |Phi>_{ref2,H13}` over all Step-3 branches, at the
/// config's `b1`.
pub fn attacked_fidelity(config: &ProtocolConfig, cap: u128) -> Result<f64> {
    if config.input != InputMode::EntangledHalves {
        return Err(Error::InvalidConfig("fidelity needs entangled inputs".into()));
    }
    let p = config.p;
    let d = p.as_usize();
    let branches = u128::from(p.get()).pow(MEASURED_EDGES.len() as u32);
    if branches > cap {
        return Err(Error::EnumerationCapExceeded { branches, cap });
    }
    let code = NetworkCode::butterfly(p);
    let matrix = code.coefficient_matrix();
    let state: SparseState = prepare(config, &code)?;
    let pos = |id| state.position(id);
    let meas: Vec<usize> = MEASURED_EDGES
        .iter()
        .map(|&e| pos(RegisterId::H(e)))
        .collect::<Result<_>>()?;
    let (r1, r2) = (pos(RegisterId::Ref1)?, pos(RegisterId::Ref2)?);
    let (o12, o13) = (pos(RegisterId::H(12))?, pos(RegisterId::H(13))?);
    let eve = state.position(RegisterId::Eve).ok();
    let env_dim = eve.map(|i| state.layout()[i].dim).unwrap_or(1);

    // Only support points where the outputs mirror the references overlap
    // with the target; each carries target amplitude 1/p.
    struct Term {
        proj: Vec<u32>,
        env: usize,
        amp: Complex64,
        out12: u32,
        out13: u32,
    }
    let terms: Vec<Term> = state
        .iter()
        .filter(|(t, _)| t[r1] == t[o12] && t[r2] == t[o13])
        .map(|(t, a)| Term {
            proj: meas.iter().map(|&i| t[i]).collect(),
            env: eve.map(|i| t[i] as usize).unwrap_or(0),
            amp: a / d as f64,
            out12: t[o12],
            out13: t[o13],
        })
        .collect();
    let omega = omega_table(d);
    let pu = p.get() as u64;
    let norm = (d as f64).powi(MEASURED_EDGES.len() as i32);

    let total: f64 = (0..branches as usize)
        .into_par_iter()
        .with_min_len(256)
        .map(|index| {
            let mut rest = index as u64;
            let mut labels = vec![0u64; MEASURED_EDGES.len()];
            for slot in labels.iter_mut().rev() {
                *slot = rest % pu;
                rest /= pu;
            }
            let outcomes: BTreeMap<u8, Fp> = MEASURED_EDGES
                .iter()
                .zip(&labels)
                .map(|(&e, &c)| (e, p.elem(c as i64)))
                .collect();
            let (e12, e13) = recovery_exponents(&outcomes, &matrix).expect("complete outcomes");
            let (e12, e13) = (u64::from(e12.value()), u64::from(e13.value()));
            let mut overlap = vec![Complex64::new(0.0, 0.0); env_dim];
            for t in &terms {
                let mut e = t
                    .proj
                    .iter()
                    .zip(&labels)
                    .fold(0u64, |acc, (&v, &c)| acc + u64::from(v) * c);
                e += e12 * u64::from(t.out12) + e13 * u64::from(t.out13);
                overlap[t.env] += t.amp * omega[(e % pu) as usize];
            }
            overlap.iter().map(|c| c.norm_sqr()).sum::<f64>() / norm
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}
