//! Circuit description: network blocks, line segments, couplers and
//! impedance expansions, with a strict JSON reader and a validator.
//!
//! All quantities are stored in SI units. Disconnection limits are exact:
//! an absent inductive coupler is `f64::INFINITY`, never a large number.

use crate::units::{self, Dimension, UnitError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Anharmonic potential of a block, carried through untouched.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Potential {
    /// Free tag such as `"josephson"` or `"none"`.
    pub kind: String,
    /// Parameters in joule.
    pub params: Vec<f64>,
}

/// Finite lumped network, already reduced to the variables coupled to lines.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBlock {
    /// Capacitance matrix A, F.
    pub cap_matrix: DMatrix<f64>,
    /// Inverse inductance matrix B⁻¹, 1/H.
    pub ind_inv_matrix: DMatrix<f64>,
    /// Capacitive coupling vector a.
    pub cap_coupling: DVector<f64>,
    /// Inductive coupling vector b.
    pub ind_coupling: DVector<f64>,
    pub potential: Potential,
}

impl NetworkBlock {
    /// Single node with capacitance `c_node` to ground, coupled with weight 1.
    pub fn single_node(c_node: f64) -> Self {
        NetworkBlock {
            cap_matrix: DMatrix::from_element(1, 1, c_node),
            ind_inv_matrix: DMatrix::zeros(1, 1),
            cap_coupling: DVector::from_element(1, 1.0),
            ind_coupling: DVector::from_element(1, 1.0),
            potential: Potential {
                kind: "josephson".into(),
                params: vec![],
            },
        }
    }

    pub fn order(&self) -> usize {
        self.cap_matrix.nrows()
    }
}

/// Line length, with the infinite cases spelled out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Length {
    Finite(f64),
    SemiInfinite,
    Infinite,
}

impl Length {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Length::Finite(l) => Some(*l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FarEnd {
    Short,
    Open,
}

/// Homogeneous transmission line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    /// Capacitance per unit length, F/m.
    pub c: f64,
    /// Inductance per unit length, H/m.
    pub l: f64,
    pub length: Length,
    pub far_end: FarEnd,
}

impl LineSegment {
    pub fn shorted(c: f64, l: f64, length: f64) -> Self {
        LineSegment {
            c,
            l,
            length: Length::Finite(length),
            far_end: FarEnd::Short,
        }
    }

    pub fn open(c: f64, l: f64, length: f64) -> Self {
        LineSegment {
            c,
            l,
            length: Length::Finite(length),
            far_end: FarEnd::Open,
        }
    }

    /// Phase velocity 1/√(lc), m/s.
    pub fn phase_velocity(&self) -> f64 {
        1.0 / (self.l * self.c).sqrt()
    }

    /// Characteristic impedance √(l/c), ohm.
    pub fn impedance(&self) -> f64 {
        (self.l / self.c).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    Point,
    Galvanic,
}

/// Connection between a block and a line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerSpec {
    pub block: usize,
    pub line: usize,
    /// Coupling capacitance, F. Zero disconnects.
    pub c_g: f64,
    /// Coupling inductance, H. Infinite disconnects.
    pub l_g: f64,
    /// Attachment point along the line, m.
    pub position: f64,
    pub mode: CouplingMode,
    /// Network capacitance across a galvanic insertion, F.
    pub c_a: f64,
    /// Network inductance across a galvanic insertion, H.
    pub l_b: f64,
}

/// Form of a lumped impedance expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FosterForm {
    Foster1,
    Foster2,
    Multiport,
}

/// Stage table of a lumped impedance expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosterExpansion {
    pub form: FosterForm,
    /// Stage capacitances, F.
    pub stage_caps: Vec<f64>,
    /// Stage inductances, H; infinite for a pure capacitor stage.
    #[serde(with = "inf_as_null")]
    pub stage_inds: Vec<f64>,
    /// Turn-ratio row per stage, one entry per port.
    pub turn_ratios: Vec<Vec<f64>>,
    pub port_count: usize,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let o: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        o.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let o: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(o.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CircuitSpec {
    pub blocks: Vec<NetworkBlock>,
    pub lines: Vec<LineSegment>,
    pub couplers: Vec<CouplerSpec>,
    pub impedances: Vec<FosterExpansion>,
    pub metadata: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown element kind `{0}`")]
    UnknownKind(String),
    #[error("{context}: {source}")]
    Unit {
        context: String,
        #[source]
        source: UnitError,
    },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
    #[error("coupler {coupler} references {what} {index}, but only {available} exist")]
    DanglingReference {
        coupler: usize,
        what: &'static str,
        index: usize,
        available: usize,
    },
}

// Raw document layout ---------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(default)]
    blocks: Vec<RawBlock>,
    #[serde(default)]
    lines: Vec<RawLine>,
    #[serde(default)]
    couplers: Vec<RawCoupler>,
    #[serde(default)]
    impedances: Vec<RawImpedance>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    metadata: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    rows: Vec<Vec<f64>>,
    unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVectorQ {
    values: Vec<Value>,
    unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantity {
    value: Value,
    unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: String,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(default = "joule")]
    unit: String,
}

fn joule() -> String {
    "J".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    cap_matrix: RawMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ind_inv_matrix: Option<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap_coupling: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ind_coupling: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    potential: Option<RawPotential>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    c: RawQuantity,
    l: RawQuantity,
    length: RawQuantity,
    #[serde(default = "short")]
    far_end: String,
}

fn short() -> String {
    "short".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupler {
    block: usize,
    line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_g: Option<RawQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l_g: Option<RawQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<RawQuantity>,
    #[serde(default = "point")]
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_a: Option<RawQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l_b: Option<RawQuantity>,
}

fn point() -> String {
    "point".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpedance {
    form: String,
    stage_caps: RawVectorQ,
    stage_inds: RawVectorQ,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turn_ratios: Option<Vec<Vec<f64>>>,
}

// Conversion ------------------------------------------------------------

fn unit_err(context: String) -> impl FnOnce(UnitError) -> ParseError {
    move |source| ParseError::Unit { context, source }
}

fn invalid(context: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Invalid {
        context: context.into(),
        message: message.into(),
    }
}

/// Numeric value or one of the literals "inf" / "semi-inf".
enum Scalar {
    Number(f64),
    Inf,
    SemiInf,
}

fn scalar(v: &Value, context: &str) -> Result<Scalar, ParseError> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .map(Scalar::Number)
            .ok_or_else(|| invalid(context, "not a finite number")),
        Value::String(s) => match s.as_str() {
            "inf" => Ok(Scalar::Inf),
            "semi-inf" => Ok(Scalar::SemiInf),
            other => Err(invalid(
                context,
                format!("expected a number, \"inf\" or \"semi-inf\", got \"{other}\""),
            )),
        },
        _ => Err(invalid(context, "expected a number or string literal")),
    }
}

fn quantity(q: &RawQuantity, dim: Dimension, context: &str) -> Result<f64, ParseError> {
    match scalar(&q.value, context)? {
        Scalar::Number(x) => units::to_si(x, &q.unit, dim).map_err(unit_err(context.into())),
        Scalar::Inf => {
            units::parse_unit(&q.unit).map_err(unit_err(context.into()))?;
            Ok(f64::INFINITY)
        }
        Scalar::SemiInf => Err(invalid(
            context,
            "\"semi-inf\" is only meaningful for line lengths",
        )),
    }
}

fn matrix(m: &RawMatrix, dim: Dimension, context: &str) -> Result<DMatrix<f64>, ParseError> {
    let n = m.rows.len();
    if m.rows.iter().any(|r| r.len() != n) {
        return Err(invalid(context, "matrix must be square"));
    }
    let scale = units::to_si(1.0, &m.unit, dim).map_err(unit_err(context.into()))?;
    Ok(DMatrix::from_fn(n, n, |i, j| m.rows[i][j] * scale))
}

fn parse_block(raw: &RawBlock, idx: usize) -> Result<NetworkBlock, ParseError> {
    let ctx = format!("blocks[{idx}]");
    let cap = matrix(
        &raw.cap_matrix,
        Dimension::Capacitance,
        &format!("{ctx}.cap_matrix"),
    )?;
    let n = cap.nrows();
    let ind = match &raw.ind_inv_matrix {
        Some(m) => matrix(
            m,
            Dimension::InverseInductance,
            &format!("{ctx}.ind_inv_matrix"),
        )?,
        None => DMatrix::zeros(n, n),
    };
    if ind.nrows() != n {
        return Err(invalid(
            &ctx,
            "ind_inv_matrix order differs from cap_matrix",
        ));
    }
    let vec_or_unit = |v: &Option<Vec<f64>>, name: &str| -> Result<DVector<f64>, ParseError> {
        match v {
            Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            Some(_) => Err(invalid(
                format!("{ctx}.{name}"),
                "length differs from block order",
            )),
            None => {
                let mut e = DVector::zeros(n);
                if n > 0 {
                    e[0] = 1.0;
                }
                Ok(e)
            }
        }
    };
    let potential = match &raw.potential {
        Some(p) => {
            let scale = units::to_si(1.0, &p.unit, Dimension::Energy)
                .map_err(unit_err(format!("{ctx}.potential")))?;
            Potential {
                kind: p.kind.clone(),
                params: p.params.iter().map(|x| x * scale).collect(),
            }
        }
        None => Potential {
            kind: "none".into(),
            params: vec![],
        },
    };
    Ok(NetworkBlock {
        cap_coupling: vec_or_unit(&raw.cap_coupling, "cap_coupling")?,
        ind_coupling: vec_or_unit(&raw.ind_coupling, "ind_coupling")?,
        cap_matrix: cap,
        ind_inv_matrix: ind,
        potential,
    })
}

fn parse_line(raw: &RawLine, idx: usize) -> Result<LineSegment, ParseError> {
    let ctx = format!("lines[{idx}]");
    let c = quantity(&raw.c, Dimension::CapacitancePerLength, &format!("{ctx}.c"))?;
    let l = quantity(&raw.l, Dimension::InductancePerLength, &format!("{ctx}.l"))?;
    let lctx = format!("{ctx}.length");
    let length = match scalar(&raw.length.value, &lctx)? {
        Scalar::Number(x) => Length::Finite(
            units::to_si(x, &raw.length.unit, Dimension::Length).map_err(unit_err(lctx))?,
        ),
        Scalar::Inf => Length::Infinite,
        Scalar::SemiInf => Length::SemiInfinite,
    };
    let far_end = match raw.far_end.as_str() {
        "short" => FarEnd::Short,
        "open" => FarEnd::Open,
        other => return Err(ParseError::UnknownKind(other.to_string())),
    };
    Ok(LineSegment {
        c,
        l,
        length,
        far_end,
    })
}

fn parse_coupler(raw: &RawCoupler, idx: usize) -> Result<CouplerSpec, ParseError> {
    let ctx = format!("couplers[{idx}]");
    let c_g = match &raw.c_g {
        Some(q) => quantity(q, Dimension::Capacitance, &format!("{ctx}.c_g"))?,
        None => 0.0,
    };
    let l_g = match &raw.l_g {
        Some(q) => quantity(q, Dimension::Inductance, &format!("{ctx}.l_g"))?,
        None => f64::INFINITY,
    };
    let position = match &raw.position {
        Some(q) => quantity(q, Dimension::Length, &format!("{ctx}.position"))?,
        None => 0.0,
    };
    let mode = match raw.mode.as_str() {
        "point" => CouplingMode::Point,
        "galvanic" => CouplingMode::Galvanic,
        other => return Err(ParseError::UnknownKind(other.to_string())),
    };
    let c_a = match &raw.c_a {
        Some(q) => quantity(q, Dimension::Capacitance, &format!("{ctx}.c_a"))?,
        None => 0.0,
    };
    let l_b = match &raw.l_b {
        Some(q) => quantity(q, Dimension::Inductance, &format!("{ctx}.l_b"))?,
        None => f64::INFINITY,
    };
    Ok(CouplerSpec {
        block: raw.block,
        line: raw.line,
        c_g,
        l_g,
        position,
        mode,
        c_a,
        l_b,
    })
}

fn parse_impedance(raw: &RawImpedance, idx: usize) -> Result<FosterExpansion, ParseError> {
    let ctx = format!("impedances[{idx}]");
    let form = match raw.form.as_str() {
        "foster1" => FosterForm::Foster1,
        "foster2" => FosterForm::Foster2,
        "multiport" => FosterForm::Multiport,
        other => return Err(ParseError::UnknownKind(other.to_string())),
    };
    let cs = units::to_si(1.0, &raw.stage_caps.unit, Dimension::Capacitance)
        .map_err(unit_err(format!("{ctx}.stage_caps")))?;
    let ls = units::to_si(1.0, &raw.stage_inds.unit, Dimension::Inductance)
        .map_err(unit_err(format!("{ctx}.stage_inds")))?;
    let values = |v: &[Value], scale: f64, name: &str| -> Result<Vec<f64>, ParseError> {
        v.iter()
            .map(|x| match scalar(x, &format!("{ctx}.{name}"))? {
                Scalar::Number(x) => Ok(x * scale),
                Scalar::Inf => Ok(f64::INFINITY),
                Scalar::SemiInf => Err(invalid(
                    format!("{ctx}.{name}"),
                    "\"semi-inf\" is not a stage value",
                )),
            })
            .collect()
    };
    let stage_caps = values(&raw.stage_caps.values, cs, "stage_caps")?;
    let stage_inds = values(&raw.stage_inds.values, ls, "stage_inds")?;
    if stage_caps.len() != stage_inds.len() {
        return Err(invalid(ctx, "stage_caps and stage_inds differ in length"));
    }
    let turn_ratios = raw
        .turn_ratios
        .clone()
        .unwrap_or_else(|| vec![vec![1.0]; stage_caps.len()]);
    if turn_ratios.len() != stage_caps.len() {
        return Err(invalid(ctx, "one turn-ratio row per stage expected"));
    }
    let port_count = turn_ratios.first().map_or(1, |r| r.len());
    if turn_ratios.iter().any(|r| r.len() != port_count) {
        return Err(invalid(ctx, "turn-ratio rows differ in length"));
    }
    Ok(FosterExpansion {
        form,
        stage_caps,
        stage_inds,
        turn_ratios,
        port_count,
    })
}

/// Parse a circuit description document.
pub fn parse_circuit(text: &str) -> Result<CircuitSpec, ParseError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        // serde reports unknown variants and fields as data errors
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message,
        }
    })?;
    let blocks = raw
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| parse_block(b, i))
        .collect::<Result<Vec<_>, _>>()?;
    let lines = raw
        .lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_line(l, i))
        .collect::<Result<Vec<_>, _>>()?;
    let couplers = raw
        .couplers
        .iter()
        .enumerate()
        .map(|(i, c)| parse_coupler(c, i))
        .collect::<Result<Vec<_>, _>>()?;
    let impedances = raw
        .impedances
        .iter()
        .enumerate()
        .map(|(i, z)| parse_impedance(z, i))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, c) in couplers.iter().enumerate() {
        if c.block >= blocks.len() {
            return Err(ParseError::DanglingReference {
                coupler: i,
                what: "block",
                index: c.block,
                available: blocks.len(),
            });
        }
        if c.line >= lines.len() {
            return Err(ParseError::DanglingReference {
                coupler: i,
                what: "line",
                index: c.line,
                available: lines.len(),
            });
        }
    }
    Ok(CircuitSpec {
        blocks,
        lines,
        couplers,
        impedances,
        metadata: raw.metadata,
    })
}

fn json_number(x: f64) -> Value {
    if x.is_infinite() {
        Value::String("inf".into())
    } else {
        serde_json::json!(x)
    }
}

fn si_quantity(x: f64, dim: Dimension) -> RawQuantity {
    RawQuantity {
        value: json_number(x),
        unit: units::si_name(dim).into(),
    }
}

fn si_matrix(m: &DMatrix<f64>, dim: Dimension) -> RawMatrix {
    RawMatrix {
        rows: (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect(),
        unit: units::si_name(dim).into(),
    }
}

/// Serialise to the description format with every quantity in SI units.
pub fn serialize_circuit(spec: &CircuitSpec) -> String {
    let doc = RawDocument {
        blocks: spec
            .blocks
            .iter()
            .map(|b| RawBlock {
                cap_matrix: si_matrix(&b.cap_matrix, Dimension::Capacitance),
                ind_inv_matrix: Some(si_matrix(&b.ind_inv_matrix, Dimension::InverseInductance)),
                cap_coupling: Some(b.cap_coupling.iter().copied().collect()),
                ind_coupling: Some(b.ind_coupling.iter().copied().collect()),
                potential: Some(RawPotential {
                    kind: b.potential.kind.clone(),
                    params: b.potential.params.clone(),
                    unit: "J".into(),
                }),
            })
            .collect(),
        lines: spec
            .lines
            .iter()
            .map(|l| RawLine {
                c: si_quantity(l.c, Dimension::CapacitancePerLength),
                l: si_quantity(l.l, Dimension::InductancePerLength),
                length: match l.length {
                    Length::Finite(x) => si_quantity(x, Dimension::Length),
                    Length::Infinite => RawQuantity {
                        value: Value::String("inf".into()),
                        unit: "m".into(),
                    },
                    Length::SemiInfinite => RawQuantity {
                        value: Value::String("semi-inf".into()),
                        unit: "m".into(),
                    },
                },
                far_end: match l.far_end {
                    FarEnd::Short => "short".into(),
                    FarEnd::Open => "open".into(),
                },
            })
            .collect(),
        couplers: spec
            .couplers
            .iter()
            .map(|c| RawCoupler {
                block: c.block,
                line: c.line,
                c_g: Some(si_quantity(c.c_g, Dimension::Capacitance)),
                l_g: Some(si_quantity(c.l_g, Dimension::Inductance)),
                position: Some(si_quantity(c.position, Dimension::Length)),
                mode: match c.mode {
                    CouplingMode::Point => "point".into(),
                    CouplingMode::Galvanic => "galvanic".into(),
                },
                c_a: (c.mode == CouplingMode::Galvanic)
                    .then(|| si_quantity(c.c_a, Dimension::Capacitance)),
                l_b: (c.mode == CouplingMode::Galvanic)
                    .then(|| si_quantity(c.l_b, Dimension::Inductance)),
            })
            .collect(),
        impedances: spec
            .impedances
            .iter()
            .map(|z| RawImpedance {
                form: match z.form {
                    FosterForm::Foster1 => "foster1".into(),
                    FosterForm::Foster2 => "foster2".into(),
                    FosterForm::Multiport => "multiport".into(),
                },
                stage_caps: RawVectorQ {
                    values: z.stage_caps.iter().map(|&x| json_number(x)).collect(),
                    unit: "F".into(),
                },
                stage_inds: RawVectorQ {
                    values: z.stage_inds.iter().map(|&x| json_number(x)).collect(),
                    unit: "H".into(),
                },
                turn_ratios: Some(z.turn_ratios.clone()),
            })
            .collect(),
        metadata: spec.metadata.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data always serialises")
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    NotSymmetric {
        block: usize,
        asymmetry: f64,
    },
    NotPositiveDefinite {
        block: usize,
        min_eigenvalue: f64,
    },
    InductanceNotPositiveSemidefinite {
        block: usize,
        min_eigenvalue: f64,
    },
    CouplingLength {
        block: usize,
    },
    InvalidLine {
        line: usize,
        reason: String,
    },
    InvalidCoupler {
        coupler: usize,
        reason: String,
    },
    AttachOutOfRange {
        coupler: usize,
        position: f64,
    },
    OverlappingAttach {
        line: usize,
        couplers: (usize, usize),
        position: f64,
    },
    DanglingReference {
        coupler: usize,
    },
    InvalidImpedance {
        impedance: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Check every structural invariant of a parsed circuit.
pub fn validate_circuit(spec: &CircuitSpec) -> ValidationReport {
    let mut findings = Vec::new();
    for (i, b) in spec.blocks.iter().enumerate() {
        let a = &b.cap_matrix;
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let asym = (a - a.transpose()).amax();
        if asym > 1e-12 * scale {
            findings.push(Finding::NotSymmetric {
                block: i,
                asymmetry: asym,
            });
        }
        let min = min_symmetric_eigenvalue(a);
        if !(min > 0.0) {
            findings.push(Finding::NotPositiveDefinite {
                block: i,
                min_eigenvalue: min,
            });
        }
        let binv = &b.ind_inv_matrix;
        let bmin = min_symmetric_eigenvalue(binv);
        if bmin < -1e-12 * binv.amax() {
            findings.push(Finding::InductanceNotPositiveSemidefinite {
                block: i,
                min_eigenvalue: bmin,
            });
        }
        if b.cap_coupling.len() != a.nrows() || b.ind_coupling.len() != a.nrows() {
            findings.push(Finding::CouplingLength { block: i });
        }
    }
    for (i, l) in spec.lines.iter().enumerate() {
        if !(l.c > 0.0 && l.c.is_finite()) || !(l.l > 0.0 && l.l.is_finite()) {
            findings.push(Finding::InvalidLine {
                line: i,
                reason: "c and l must be positive and finite".into(),
            });
        }
        if let Length::Finite(x) = l.length {
            if !(x > 0.0 && x.is_finite()) {
                findings.push(Finding::InvalidLine {
                    line: i,
                    reason: "finite length must be positive".into(),
                });
            }
        }
    }
    for (i, c) in spec.couplers.iter().enumerate() {
        if c.block >= spec.blocks.len() || c.line >= spec.lines.len() {
            findings.push(Finding::DanglingReference { coupler: i });
            continue;
        }
        if !(c.c_g >= 0.0 && c.c_g.is_finite()) {
            findings.push(Finding::InvalidCoupler {
                coupler: i,
                reason: "C_g must be finite and non-negative".into(),
            });
        }
        if !(c.l_g > 0.0) {
            findings.push(Finding::InvalidCoupler {
                coupler: i,
                reason: "L_g must be positive or infinite".into(),
            });
        }
        if c.mode == CouplingMode::Galvanic && !(c.c_a >= 0.0 && c.c_a.is_finite() && c.l_b > 0.0) {
            findings.push(Finding::InvalidCoupler {
                coupler: i,
                reason: "C_A must be non-negative and L_B positive".into(),
            });
        }
        if let Length::Finite(len) = spec.lines[c.line].length {
            if !(c.position >= 0.0 && c.position <= len) {
                findings.push(Finding::AttachOutOfRange {
                    coupler: i,
                    position: c.position,
                });
            }
        }
    }
    // pairwise scan of attachment points on each line
    for i in 0..spec.couplers.len() {
        for j in i + 1..spec.couplers.len() {
            let (p, q) = (&spec.couplers[i], &spec.couplers[j]);
            if p.line == q.line && p.position == q.position && p.block != q.block {
                findings.push(Finding::OverlappingAttach {
                    line: p.line,
                    couplers: (i, j),
                    position: p.position,
                });
            }
        }
    }
    for (i, z) in spec.impedances.iter().enumerate() {
        if z.stage_caps.iter().any(|c| !(*c > 0.0)) {
            findings.push(Finding::InvalidImpedance {
                impedance: i,
                reason: "stage capacitances must be positive".into(),
            });
        }
        if z.stage_inds.iter().any(|l| !(*l > 0.0)) {
            findings.push(Finding::InvalidImpedance {
                impedance: i,
                reason: "stage inductances must be positive or infinite".into(),
            });
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "blocks": [{"cap_matrix": {"rows": [[5.13]], "unit": "fF"}}],
        "lines": [{"c": {"value": 249, "unit": "pF/m"}, "l": {"value": 623, "unit": "nH/m"},
                   "length": {"value": 4.7, "unit": "mm"}}],
        "couplers": [{"block": 0, "line": 0, "c_g": {"value": 40.3, "unit": "fF"},
                      "l_g": {"value": "inf", "unit": "H"}}]
    }"#;

    #[test]
    fn minimal_document() {
        let spec = parse_circuit(MINIMAL).unwrap();
        assert_eq!(spec.blocks.len(), 1);
        assert_eq!(spec.lines.len(), 1);
        assert!((spec.blocks[0].cap_matrix[(0, 0)] - 5.13e-15).abs() < 1e-27);
        assert_eq!(spec.lines[0].length, Length::Finite(4.7e-3));
        assert!(spec.couplers[0].l_g.is_infinite());
        assert!(validate_circuit(&spec).is_valid());
    }

    #[test]
    fn bare_resonator() {
        let doc = r#"{"blocks": [], "lines": [{"c": {"value": 1, "unit": "pF/m"},
            "l": {"value": 1, "unit": "nH/m"}, "length": {"value": "semi-inf", "unit": "m"}}]}"#;
        let spec = parse_circuit(doc).unwrap();
        assert!(spec.blocks.is_empty());
        assert_eq!(spec.lines[0].length, Length::SemiInfinite);
    }

    #[test]
    fn dangling_reference() {
        let doc = MINIMAL.replace("\"block\": 0", "\"block\": 3");
        assert!(matches!(
            parse_circuit(&doc),
            Err(ParseError::DanglingReference { index: 3, .. })
        ));
    }

    #[test]
    fn syntax_and_unknown_keys() {
        assert!(matches!(
            parse_circuit("{\"blocks\": [}"),
            Err(ParseError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_circuit("{\"wires\": []}"),
            Err(ParseError::Syntax { .. })
        ));
        let doc = MINIMAL.replace("\"unit\": \"fF\"}}]", "\"unit\": \"fF\"}, \"colour\": 1}]");
        assert!(parse_circuit(&doc).is_err());
    }

    #[test]
    fn unit_mismatch() {
        let doc = MINIMAL.replace("\"pF/m\"", "\"nH\"");
        assert!(matches!(parse_circuit(&doc), Err(ParseError::Unit { .. })));
    }

    #[test]
    fn unknown_kind() {
        let doc = MINIMAL.replace("\"l_g\"", "\"mode\": \"wireless\", \"l_g\"");
        assert!(matches!(
            parse_circuit(&doc),
            Err(ParseError::UnknownKind(_))
        ));
    }

    #[test]
    fn negative_capacitance_flagged() {
        let mut spec = parse_circuit(MINIMAL).unwrap();
        spec.blocks[0].cap_matrix = DMatrix::from_row_slice(2, 2, &[1e-15, 0.0, 0.0, -1e-15]);
        spec.blocks[0].ind_inv_matrix = DMatrix::zeros(2, 2);
        spec.blocks[0].cap_coupling = DVector::from_vec(vec![1.0, 0.0]);
        spec.blocks[0].ind_coupling = DVector::from_vec(vec![1.0, 0.0]);
        let report = validate_circuit(&spec);
        assert!(report
            .findings
            .iter()
            .any(|f| matches!(f, Finding::NotPositiveDefinite { .. })));
    }

    #[test]
    fn overlapping_attach_flagged() {
        let mut spec = parse_circuit(MINIMAL).unwrap();
        spec.blocks.push(spec.blocks[0].clone());
        let mut c = spec.couplers[0];
        c.block = 1;
        spec.couplers.push(c);
        let report = validate_circuit(&spec);
        assert!(report
            .findings
            .iter()
            .any(|f| matches!(f, Finding::OverlappingAttach { .. })));
        spec.couplers[1].position = 1e-3;
        assert!(validate_circuit(&spec).is_valid());
    }

    #[test]
    fn serialize_round_trip() {
        let mut spec = parse_circuit(MINIMAL).unwrap();
        spec.impedances.push(FosterExpansion {
            form: FosterForm::Multiport,
            stage_caps: vec![1e-12, 2e-12],
            stage_inds: vec![1e-9, f64::INFINITY],
            turn_ratios: vec![vec![1.0, -1.0], vec![1.0, 1.0]],
            port_count: 2,
        });
        spec.metadata = "round trip".into();
        let text = serialize_circuit(&spec);
        let back = parse_circuit(&text).unwrap();
        assert_eq!(back, spec);
    }
}
