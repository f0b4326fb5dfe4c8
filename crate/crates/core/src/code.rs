//! The classical secure network code on the butterfly network.
//!
//! Every edge value `Z_i` is a linear function of the source messages
//! `A1`, `A2` and the source key `B1`. The same rules drive the quantum
//! protocol: each rule becomes a controlled affine adder.

use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::field::{Fp, Prime};
use crate::{Error, Result};

/// Edges that carry a quantum system between two inner nodes and may be
/// wiretapped.
pub const ATTACKABLE_EDGES: RangeInclusive<u8> = 5..=11;

/// Row order of every coefficient matrix: `Z1, Z2, Z5, ..., Z13`.
pub const ROW_EDGES: [u8; 11] = [1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 13];

/// Rows kept in the reduced matrix `M''` (rows 10 through 13 dropped).
pub const REDUCED_ROW_EDGES: [u8; 7] = [1, 2, 5, 6, 7, 8, 9];

pub fn check_attackable(edge: u8) -> Result<()> {
    if ATTACKABLE_EDGES.contains(&edge) {
        Ok(())
    } else {
        Err(Error::EdgeOutOfRange(edge))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Node {
    I1,
    I2,
    S1,
    S2,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
    O1,
    O2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Quantum,
    Classical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub index: u8,
    pub tail: Node,
    pub head: Node,
    pub channel: Channel,
}

const fn edge(index: u8, tail: Node, head: Node, channel: Channel) -> Edge {
    Edge {
        index,
        tail,
        head,
        channel,
    }
}

/// The butterfly network with input, output and key-source vertices. Edge
/// numbers double as transmission times.
pub const BUTTERFLY_TOPOLOGY: [Edge; 15] = {
    use Channel::*;
    use Node::*;
    [
        edge(1, I1, V1, Quantum),
        edge(2, I2, V2, Quantum),
        edge(3, S1, V1, Classical),
        edge(4, S1, V2, Classical),
        edge(5, V1, V3, Quantum),
        edge(6, V2, V3, Quantum),
        edge(7, V1, V5, Quantum),
        edge(8, V2, V6, Quantum),
        edge(9, V3, V4, Quantum),
        edge(10, V4, V5, Quantum),
        edge(11, V4, V6, Quantum),
        edge(12, V6, O1, Quantum),
        edge(13, V5, O2, Quantum),
        edge(14, S2, V5, Classical),
        edge(15, S2, V6, Classical),
    ]
};

pub fn topology_edge(index: u8) -> Option<&'static Edge> {
    BUTTERFLY_TOPOLOGY.iter().find(|e| e.index == index)
}

/// `Z_edge := sum(coeff * Z_input)` over earlier edges. Inputs 3 and 4 refer
/// to the key `B1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingRule {
    pub edge: u8,
    pub terms: Vec<(u8, Fp)>,
}

/// Distribution of the source key `B1` used by the secrecy check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyMode {
    Uniform,
    /// Randomness disabled: `B1` pinned to one value.
    Fixed(Fp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Column {
    A1,
    A2,
    B1,
    E1,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Values that can flow along the network: concrete field elements, or
/// linear forms over `(A1, A2, B1, E1)`.
trait FlowValue: Copy {
    fn zero(p: Prime) -> Self;
    fn plus(self, other: Self) -> Self;
    fn scaled(self, c: Fp) -> Self;
}

impl FlowValue for Fp {
    fn zero(p: Prime) -> Self {
        p.zero()
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn scaled(self, c: Fp) -> Self {
        self * c
    }
}

#[derive(Clone, Copy)]
struct LinearForm([Fp; 4]);

impl LinearForm {
    fn unit(p: Prime, column: usize) -> Self {
        let mut c = [p.zero(); 4];
        c[column] = p.one();
        Self(c)
    }
}

impl FlowValue for LinearForm {
    fn zero(p: Prime) -> Self {
        Self([p.zero(); 4])
    }
    fn plus(self, other: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] + other.0[i]))
    }
    fn scaled(self, c: Fp) -> Self {
        Self(self.0.map(|x| x * c))
    }
}

/// Edge values for one input `(A1, A2, B1, B2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowAssignment {
    pub a1: Fp,
    pub a2: Fp,
    pub b1: Fp,
    pub b2: (Fp, Fp),
    /// `Z_1..Z_13`, index 0 unused.
    #[serde(skip)]
    z: [Fp; 14],
}

impl FlowAssignment {
    /// `Z_edge` for edges 1..=13. Edges 14 and 15 carry the pair `B2`; see
    /// [`FlowAssignment::key_pair`].
    pub fn z(&self, edge: u8) -> Option<Fp> {
        (1..=13).contains(&edge).then(|| self.z[edge as usize])
    }

    pub fn key_pair(&self, edge: u8) -> Option<(Fp, Fp)> {
        matches!(edge, 14 | 15).then_some(self.b2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkCode {
    p: Prime,
    rules: Vec<EncodingRule>,
}

impl NetworkCode {
    /// The code used by the protocol:
    ///
    /// ```text
    /// V1: Z5 = 2 Z1 + Z3,  Z7 = Z1 + Z3
    /// V2: Z6 = 2 Z2 + Z4,  Z8 = Z2 + Z4
    /// V3: Z9 = Z5 + Z6
    /// V4: Z10 = Z9,        Z11 = Z9
    /// V5: Z13 = Z10/2 - Z7
    /// V6: Z12 = Z11/2 - Z8
    /// ```
    pub fn butterfly(p: Prime) -> Self {
        let one = p.one();
        let two = p.elem(2);
        let half = p.half();
        let minus_one = -one;
        let rule = |edge, terms: &[(u8, Fp)]| EncodingRule {
            edge,
            terms: terms.to_vec(),
        };
        Self {
            p,
            rules: vec![
                rule(5, &[(1, two), (3, one)]),
                rule(6, &[(2, two), (4, one)]),
                rule(7, &[(1, one), (3, one)]),
                rule(8, &[(2, one), (4, one)]),
                rule(9, &[(5, one), (6, one)]),
                rule(10, &[(9, one)]),
                rule(11, &[(9, one)]),
                rule(12, &[(11, half), (8, minus_one)]),
                rule(13, &[(10, half), (7, minus_one)]),
            ],
        }
    }

    /// Replaces the rule for `rule.edge`.
    pub fn with_rule(mut self, rule: EncodingRule) -> Self {
        match self.rules.iter_mut().find(|r| r.edge == rule.edge) {
            Some(slot) => *slot = rule,
            None => panic!("no rule for edge {}", rule.edge),
        }
        self
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    /// Rules in transmission order.
    pub fn rules(&self) -> &[EncodingRule] {
        &self.rules
    }

    fn propagate<T: FlowValue>(&self, a1: T, a2: T, b1: T, substitute: Option<(u8, T)>) -> [T; 14] {
        let mut z = [T::zero(self.p); 14];
        z[1] = a1;
        z[2] = a2;
        z[3] = b1;
        z[4] = b1;
        for rule in &self.rules {
            let mut acc = T::zero(self.p);
            for &(input, coeff) in &rule.terms {
                acc = acc.plus(z[input as usize].scaled(coeff));
            }
            z[rule.edge as usize] = acc;
            // The eavesdropper swaps the channel content after it is encoded.
            if let Some((edge, value)) = substitute {
                if edge == rule.edge {
                    z[rule.edge as usize] = value;
                }
            }
        }
        z
    }

    pub fn evaluate_flow(&self, a1: Fp, a2: Fp, b1: Fp, b2: (Fp, Fp)) -> FlowAssignment {
        FlowAssignment {
            a1,
            a2,
            b1,
            b2,
            z: self.propagate(a1, a2, b1, None),
        }
    }

    /// Flow when the content of `edge` is replaced by `e1` in transit.
    pub fn evaluate_attacked_flow(
        &self,
        edge: u8,
        a1: Fp,
        a2: Fp,
        b1: Fp,
        e1: Fp,
    ) -> Result<FlowAssignment> {
        check_attackable(edge)?;
        Ok(FlowAssignment {
            a1,
            a2,
            b1,
            b2: (self.p.zero(), self.p.zero()),
            z: self.propagate(a1, a2, b1, Some((edge, e1))),
        })
    }

    fn symbolic(&self, attacked: Option<u8>) -> [LinearForm; 14] {
        let p = self.p;
        self.propagate(
            LinearForm::unit(p, 0),
            LinearForm::unit(p, 1),
            LinearForm::unit(p, 2),
            attacked.map(|e| (e, LinearForm::unit(p, 3))),
        )
    }

    /// The honest matrix `M` with columns `(A1, A2, B1)`.
    pub fn coefficient_matrix(&self) -> CoefficientMatrix {
        let forms = self.symbolic(None);
        CoefficientMatrix {
            p: self.p,
            rows: ROW_EDGES.to_vec(),
            columns: vec![Column::A1, Column::A2, Column::B1],
            entries: ROW_EDGES
                .iter()
                .map(|&e| forms[e as usize].0[..3].to_vec())
                .collect(),
            attacked_edge: None,
        }
    }

    /// The attacked matrix `M'` with columns `(A1, A2, B1, E1)`.
    pub fn attacked_coefficient_matrix(&self, edge: u8) -> Result<CoefficientMatrix> {
        check_attackable(edge)?;
        let forms = self.symbolic(Some(edge));
        Ok(CoefficientMatrix {
            p: self.p,
            rows: ROW_EDGES.to_vec(),
            columns: vec![Column::A1, Column::A2, Column::B1, Column::E1],
            entries: ROW_EDGES
                .iter()
                .map(|&e| forms[e as usize].0.to_vec())
                .collect(),
            attacked_edge: Some(edge),
        })
    }

    /// True iff `Z12 = A1` and `Z13 = A2` for every input in `F_p^3`.
    pub fn recovery_check(&self) -> bool {
        let p = self.p;
        let b2 = (p.zero(), p.zero());
        p.elements().all(|a1| {
            p.elements().all(|a2| {
                p.elements().all(|b1| {
                    let flow = self.evaluate_flow(a1, a2, b1, b2);
                    flow.z(12) == Some(a1) && flow.z(13) == Some(a2)
                })
            })
        })
    }

    /// Exact mutual information `I(Z_edge ; (A1, A2))` in bits, with the
    /// messages uniform and `B1` distributed per `key`.
    pub fn secrecy_check(&self, edge: u8, key: KeyMode) -> Result<f64> {
        check_attackable(edge)?;
        if self.p.get() > 13 {
            return Err(Error::InvalidConfig(format!(
                "exhaustive secrecy check limited to p <= 13 (got {})",
                self.p
            )));
        }
        let p = self.p;
        let keys: Vec<Fp> = match key {
            KeyMode::Uniform => p.elements().collect(),
            KeyMode::Fixed(b1) => vec![b1],
        };
        let b2 = (p.zero(), p.zero());
        let mut joint: HashMap<(u32, u32, u32), u64> = HashMap::new();
        let mut z_marg: HashMap<u32, u64> = HashMap::new();
        let mut a_marg: HashMap<(u32, u32), u64> = HashMap::new();
        let mut total = 0u64;
        for a1 in p.elements() {
            for a2 in p.elements() {
                for &b1 in &keys {
                    let z = self.evaluate_flow(a1, a2, b1, b2).z(edge).expect("edge in range");
                    *joint.entry((z.value(), a1.value(), a2.value())).or_default() += 1;
                    *z_marg.entry(z.value()).or_default() += 1;
                    *a_marg.entry((a1.value(), a2.value())).or_default() += 1;
                    total += 1;
                }
            }
        }
        // Each log ratio is formed from integer counts, so an independent pair
        // contributes exactly log2(1) = 0.
        let mut info = 0.0;
        let mut terms: Vec<_> = joint.into_iter().collect();
        terms.sort_unstable();
        for ((z, a1, a2), n) in terms {
            let num = u128::from(n) * u128::from(total);
            let den = u128::from(z_marg[&z]) * u128::from(a_marg[&(a1, a2)]);
            if num != den {
                info += (n as f64 / total as f64) * (num as f64 / den as f64).log2();
            }
        }
        Ok(info)
    }
}

/// A coefficient matrix with rows `Z1, Z2, Z5..Z13`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientMatrix {
    p: Prime,
    rows: Vec<u8>,
    columns: Vec<Column>,
    entries: Vec<Vec<Fp>>,
    attacked_edge: Option<u8>,
}

impl CoefficientMatrix {
    pub fn rows(&self) -> &[u8] {
        &self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn attacked_edge(&self) -> Option<u8> {
        self.attacked_edge
    }

    pub fn row(&self, edge: u8) -> Option<&[Fp]> {
        self.rows
            .iter()
            .position(|&r| r == edge)
            .map(|i| self.entries[i].as_slice())
    }

    pub fn entry(&self, edge: u8, column: Column) -> Option<Fp> {
        let c = self.columns.iter().position(|&x| x == column)?;
        self.row(edge).map(|r| r[c])
    }

    /// Matrix-vector product; `input` is ordered like [`Self::columns`].
    pub fn apply(&self, input: &[Fp]) -> Vec<Fp> {
        assert_eq!(input.len(), self.columns.len(), "input length");
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .zip(input)
                    .fold(self.p.zero(), |acc, (&m, &x)| acc + m * x)
            })
            .collect()
    }

    /// `M''`: drops the rows for `Z10..Z13`.
    pub fn reduced(&self) -> CoefficientMatrix {
        let keep: Vec<usize> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, &r)| REDUCED_ROW_EDGES.contains(&r))
            .map(|(i, _)| i)
            .collect();
        CoefficientMatrix {
            p: self.p,
            rows: keep.iter().map(|&i| self.rows[i]).collect(),
            columns: self.columns.clone(),
            entries: keep.iter().map(|&i| self.entries[i].clone()).collect(),
            attacked_edge: self.attacked_edge,
        }
    }

    /// `(m_{j,1}, m_{j,2}, m_{j,3})` for the wiretapped edge `j`.
    pub fn eve_vector(&self, edge: u8) -> Option<[Fp; 3]> {
        let row = self.row(edge)?;
        Some([row[0], row[1], row[2]])
    }
}

impl Serialize for CoefficientMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<String> = self.rows.iter().map(|r| format!("Z{r}")).collect();
        let columns: Vec<String> = self.columns.iter().map(|c| c.to_string()).collect();
        let data: Vec<Vec<u32>> = self
            .entries
            .iter()
            .map(|r| r.iter().map(|x| x.value()).collect())
            .collect();
        let mut st = s.serialize_struct("CoefficientMatrix", 5)?;
        st.serialize_field("p", &self.p)?;
        st.serialize_field("rows", &rows)?;
        st.serialize_field("columns", &columns)?;
        st.serialize_field("data", &data)?;
        st.serialize_field("attacked_edge", &self.attacked_edge)?;
        st.end()
    }
}
