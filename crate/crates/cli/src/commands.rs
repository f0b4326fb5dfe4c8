use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use qnc_core::code::{KeyMode, NetworkCode, ATTACKABLE_EDGES};
use qnc_core::protocol::run;
use qnc_core::security::{analyze, verify_independence};
use qnc_core::{
    AnalysisOptions, AttackSpec, Fp, IndependenceVerdict, PadVariant, Prime, ProtocolConfig,
    ResendBasis, SecurityReport, Transcript,
};

use crate::output::{fmt_float, to_value, CliError, Sink};
use crate::{
    AttackArgs, AttackChoice, ClassicalArgs, Expectation, Format, HonestArgs, SweepArgs,
    VariantChoice,
};

type CmdResult = Result<ExitCode, CliError>;

fn variant(v: VariantChoice) -> PadVariant {
    match v {
        VariantChoice::FullPad => PadVariant::FullPad,
        VariantChoice::WeakPad => PadVariant::WeakPadC11Only,
    }
}

fn variant_name(v: PadVariant) -> &'static str {
    match v {
        PadVariant::FullPad => "full-pad",
        PadVariant::WeakPadC11Only => "weak-pad",
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

fn record_string(record: &Option<Vec<Fp>>) -> String {
    record
        .as_ref()
        .map(|r| r.iter().map(|x| x.value().to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

#[derive(Serialize)]
struct Trial {
    trial: u64,
    seed: u64,
    b1: Fp,
    b2: [Fp; 2],
    fidelity: f64,
    /// Largest amplitude difference of the output across all keys `B2`.
    b2_max_deviation: f64,
    b2_independent: bool,
    transcript: Transcript,
}

pub fn honest(a: &HonestArgs, sink: &Sink) -> CmdResult {
    let p = a.p;
    if let Some(b) = a.b1 {
        if b >= p.get() {
            return Err(CliError::usage(format!("--b1 must be below p = {p}")));
        }
    }
    let mut master = ChaCha8Rng::seed_from_u64(a.seed);
    let draw = |rng: &mut ChaCha8Rng| p.elem(i64::from(rng.random_range(0..p.get())));
    let plans: Vec<(u64, u64, Fp, (Fp, Fp))> = (0..a.trials)
        .map(|t| {
            let b1 = a.b1.map(|b| p.elem(i64::from(b))).unwrap_or_else(|| draw(&mut master));
            let b2 = (draw(&mut master), draw(&mut master));
            (t, master.random(), b1, b2)
        })
        .collect();
    let trials: Vec<Trial> = plans
        .par_iter()
        .map(|&(trial, seed, b1, b2)| {
            let base = ProtocolConfig::new(p).with_b1(b1).with_seed(seed);
            let r = run(&base.clone().with_b2(b2))?;
            let fidelity = r.fidelity()?;
            let reference = r.final_state.to_dense();
            let mut dev = 0.0f64;
            for k0 in p.elements() {
                for k1 in p.elements() {
                    let other = run(&base.clone().with_b2((k0, k1)))?;
                    let diff = if other.final_state.layout() == r.final_state.layout() {
                        (other.final_state.to_dense() - &reference).camax()
                    } else {
                        f64::INFINITY
                    };
                    dev = dev.max(diff);
                }
            }
            Ok(Trial {
                trial,
                seed,
                b1,
                b2: [b2.0, b2.1],
                fidelity,
                b2_max_deviation: dev,
                b2_independent: dev <= 1e-12,
                transcript: r.transcript,
            })
        })
        .collect::<Result<_, qnc_core::Error>>()?;

    let all_unit = trials.iter().all(|t| (t.fidelity - 1.0).abs() <= a.tol);
    let b2_independent = trials.iter().all(|t| t.b2_independent);
    match sink.format {
        Format::Json => {
            let max_err = trials.iter().map(|t| (t.fidelity - 1.0).abs()).fold(0.0, f64::max);
            sink.json(object(json!({
                "command": "honest",
                "p": p,
                "seed": a.seed,
                "trials": a.trials,
                "tol": a.tol,
                "all_unit_fidelity": all_unit,
                "b2_independent": b2_independent,
                "max_fidelity_error": max_err,
                "results": to_value(&trials),
            })))?
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = trials
                .iter()
                .map(|t| {
                    vec![
                        t.trial.to_string(),
                        t.seed.to_string(),
                        t.b1.to_string(),
                        t.b2[0].to_string(),
                        t.b2[1].to_string(),
                        fmt_float(t.fidelity),
                        t.b2_independent.to_string(),
                    ]
                })
                .collect();
            sink.csv(&["trial", "seed", "b1", "b2_1", "b2_2", "fidelity", "b2_independent"], &rows)?
        }
    }
    Ok(if all_unit { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn build_attack(p: Prime, edge: u8, choice: AttackChoice, d_e: usize, seed: u64) -> Result<AttackSpec, CliError> {
    Ok(match choice {
        AttackChoice::Random => AttackSpec::random_isometry(p, edge, d_e, seed)?,
        AttackChoice::KeepPhi0 => AttackSpec::keep_and_send_phi0(p, edge)?,
        AttackChoice::MeasureZ => AttackSpec::measure_and_resend(p, edge, ResendBasis::Z)?,
        AttackChoice::MeasureX => AttackSpec::measure_and_resend(p, edge, ResendBasis::X)?,
        AttackChoice::Identity => AttackSpec::identity_forward(p, edge)?,
    })
}

fn verdict_label(v: &IndependenceVerdict) -> &'static str {
    if v.independent {
        "secure"
    } else {
        "insecure"
    }
}

pub fn attack(a: &AttackArgs, sink: &Sink) -> CmdResult {
    let spec = build_attack(a.p, a.edge, a.attack, a.d_e as usize, a.seed)?;
    let cfg = ProtocolConfig::new(a.p)
        .with_seed(a.seed)
        .with_variant(variant(a.variant))
        .with_attack(spec);
    let opts = AnalysisOptions {
        sample: a.sample,
        with_recovery: a.with_recovery,
        with_fidelity: a.fidelity,
        ..Default::default()
    };
    let mut report = analyze(&cfg, &opts)?;
    let verdict = verify_independence(&report, a.tol);
    let label = verdict_label(&verdict);
    let matches = a.expect.map(|e| (e == Expectation::Secure) == verdict.independent);
    match sink.format {
        Format::Json => {
            if a.no_branches {
                report.per_branch.clear();
            }
            sink.json(object(json!({
                "command": "attack",
                "tol": a.tol,
                "verdict": label,
                "expect": a.expect.map(|e| if e == Expectation::Secure { "secure" } else { "insecure" }),
                "matches_expectation": matches,
                "independence": to_value(&verdict),
                "report": to_value(&report),
            })))?
        }
        Format::Csv => sink.csv(&SWEEP_HEADER, &[attack_row("attack", &report, &verdict)])?,
    }
    Ok(match matches {
        Some(false) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

const SWEEP_HEADER: [&str; 11] = [
    "row_type",
    "edge",
    "attack",
    "d_e",
    "seed",
    "variant",
    "product_deviation",
    "worst_deviation",
    "record_tv_distance",
    "verdict",
    "worst_record",
];

fn attack_row(kind: &str, r: &SecurityReport, v: &IndependenceVerdict) -> Vec<String> {
    vec![
        kind.to_string(),
        r.attack.edge().to_string(),
        r.attack.label().to_string(),
        r.attack.env_dim().to_string(),
        r.attack.seed().map(|s| s.to_string()).unwrap_or_default(),
        variant_name(r.variant).to_string(),
        fmt_float(r.product_deviation),
        fmt_float(v.worst_deviation),
        fmt_float(r.record_tv_distance),
        verdict_label(v).to_string(),
        record_string(&v.worst_record),
    ]
}

#[derive(Serialize)]
struct SweepRow {
    edge: u8,
    attack: String,
    d_e: usize,
    seed: Option<u64>,
    product_deviation: f64,
    worst_deviation: f64,
    record_tv_distance: f64,
    verdict: &'static str,
    worst_record: Option<Vec<Fp>>,
}

#[derive(Serialize)]
struct SweepSummary {
    edge: u8,
    attacks: usize,
    max_product_deviation: f64,
    max_worst_deviation: f64,
    verdict: &'static str,
    worst_attack: String,
}

/// Seed of the `i`-th random attack on `edge`.
fn sweep_seed(base: u64, edge: u8, i: u64) -> u64 {
    base.wrapping_add(1000 * u64::from(edge) + i)
}

pub fn sweep(a: &SweepArgs, sink: &Sink) -> CmdResult {
    if a.d_e.is_empty() || a.d_e.contains(&0) {
        return Err(CliError::usage("--d-e needs positive dimensions"));
    }
    let mut specs = Vec::new();
    for edge in ATTACKABLE_EDGES {
        for i in 0..a.attacks {
            let de = a.d_e[i as usize % a.d_e.len()];
            specs.push(build_attack(a.p, edge, AttackChoice::Random, de, sweep_seed(a.seed, edge, i))?);
        }
        if a.include_canonical {
            for c in [AttackChoice::KeepPhi0, AttackChoice::MeasureZ, AttackChoice::MeasureX] {
                specs.push(build_attack(a.p, edge, c, 1, 0)?);
            }
        }
    }
    let opts = AnalysisOptions {
        sample: a.sample,
        ..Default::default()
    };
    let pad = variant(a.variant);
    let results: Vec<(SecurityReport, IndependenceVerdict)> = specs
        .into_par_iter()
        .map(|spec| {
            let cfg = ProtocolConfig::new(a.p).with_seed(a.seed).with_variant(pad).with_attack(spec);
            let r = analyze(&cfg, &opts)?;
            let v = verify_independence(&r, a.tol);
            Ok((r, v))
        })
        .collect::<Result<_, qnc_core::Error>>()?;

    let mut summaries = Vec::new();
    for edge in ATTACKABLE_EDGES {
        let on_edge: Vec<_> = results.iter().filter(|(r, _)| r.attack.edge() == edge).collect();
        let Some(worst) = on_edge
            .iter()
            .max_by(|x, y| x.0.product_deviation.total_cmp(&y.0.product_deviation))
        else {
            continue;
        };
        summaries.push(SweepSummary {
            edge,
            attacks: on_edge.len(),
            max_product_deviation: worst.0.product_deviation,
            max_worst_deviation: on_edge.iter().map(|(_, v)| v.worst_deviation).fold(0.0, f64::max),
            verdict: if on_edge.iter().all(|(_, v)| v.independent) { "secure" } else { "insecure" },
            worst_attack: worst.0.attack.label().to_string(),
        });
    }
    let all_secure = results.iter().all(|(_, v)| v.independent);

    match sink.format {
        Format::Json => {
            let rows: Vec<SweepRow> = results
                .iter()
                .map(|(r, v)| SweepRow {
                    edge: r.attack.edge(),
                    attack: r.attack.label().to_string(),
                    d_e: r.attack.env_dim(),
                    seed: r.attack.seed(),
                    product_deviation: r.product_deviation,
                    worst_deviation: v.worst_deviation,
                    record_tv_distance: r.record_tv_distance,
                    verdict: verdict_label(v),
                    worst_record: v.worst_record.clone(),
                })
                .collect();
            sink.json(object(json!({
                "command": "sweep",
                "p": a.p,
                "variant": variant_name(pad),
                "attacks_per_edge": a.attacks,
                "include_canonical": a.include_canonical,
                "tol": a.tol,
                "all_secure": all_secure,
                "rows": to_value(&rows),
                "summaries": to_value(&summaries),
            })))?
        }
        Format::Csv => {
            let mut rows: Vec<Vec<String>> =
                results.iter().map(|(r, v)| attack_row("attack", r, v)).collect();
            for s in &summaries {
                rows.push(vec![
                    "summary".into(),
                    s.edge.to_string(),
                    s.worst_attack.clone(),
                    String::new(),
                    String::new(),
                    variant_name(pad).into(),
                    fmt_float(s.max_product_deviation),
                    fmt_float(s.max_worst_deviation),
                    String::new(),
                    s.verdict.into(),
                    String::new(),
                ]);
            }
            sink.csv(&SWEEP_HEADER, &rows)?
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn classical(a: &ClassicalArgs, sink: &Sink) -> CmdResult {
    let p = a.p;
    let code = NetworkCode::butterfly(p);
    let recovery = code.recovery_check();
    let m = code.coefficient_matrix();
    let mut secrecy = Vec::new();
    let mut attacked = Map::new();
    let mut reduced = Map::new();
    for edge in ATTACKABLE_EDGES {
        let mi = code.secrecy_check(edge, KeyMode::Uniform)?;
        let coeff = m.eve_vector(edge).map(|v| v[2]).unwrap_or(p.zero());
        secrecy.push((edge, mi, coeff));
        let ma = code.attacked_coefficient_matrix(edge)?;
        attacked.insert(edge.to_string(), to_value(&ma));
        reduced.insert(edge.to_string(), to_value(&ma.reduced()));
    }
    match sink.format {
        Format::Json => {
            let table: Vec<Value> = secrecy
                .iter()
                .map(|(e, mi, c)| json!({"edge": e, "mutual_information_bits": mi, "key_coefficient": c}))
                .collect();
            sink.json(object(json!({
                "command": "classical",
                "p": p,
                "recovery": recovery,
                "secrecy": table,
                "matrices": {
                    "honest": to_value(&m),
                    "attacked": attacked,
                    "attacked_reduced": reduced,
                },
            })))?
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = secrecy
                .iter()
                .map(|(e, mi, c)| vec![e.to_string(), fmt_float(*mi), c.to_string(), recovery.to_string()])
                .collect();
            sink.csv(&["edge", "mutual_information_bits", "key_coefficient", "recovery"], &rows)?
        }
    }
    Ok(if recovery && secrecy.iter().all(|s| s.1 == 0.0) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
