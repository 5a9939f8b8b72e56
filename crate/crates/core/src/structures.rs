//! The nine binary structures, their parameters, and validation.
//!
//! Every structure has a collider `C` with two marginally independent parents
//! (except [`StructureKind::Nabla`], where the exposure also causes the
//! outcome). The parents are called *left* and *right*: the left parent is `X`
//! or `A`, the right parent is `Y` or `B`. All collider probabilities are
//! indexed `(left, right)`, so the JSON key `"01"` means left = 0, right = 1.
//!
//! Parameters arrive as a [`StructureParams`] (the raw, serializable shape)
//! and are turned into a [`ValidatedParams`] by [`validate`]. There are two
//! tiers: lenient validation accepts any probability in `[0, 1]`, strict
//! validation additionally requires `(0, 1)` and non-degenerate strata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level of a binary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Level {
    Zero,
    One,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::Zero, Level::One];

    pub fn flip(self) -> Level {
        match self {
            Level::Zero => Level::One,
            Level::One => Level::Zero,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_one(self) -> bool {
        self == Level::One
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Level {
    type Error = Error;

    fn try_from(v: u8) -> Result<Level> {
        match v {
            0 => Ok(Level::Zero),
            1 => Ok(Level::One),
            other => Err(Error::Parse(format!("level must be 0 or 1, got {other}"))),
        }
    }
}

impl From<bool> for Level {
    fn from(b: bool) -> Level {
        if b {
            Level::One
        } else {
            Level::Zero
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// A variable name. Not every structure contains every variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    A,
    B,
    X,
    Y,
    C,
    D,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Var::A => "A",
            Var::B => "B",
            Var::X => "X",
            Var::Y => "Y",
            Var::C => "C",
            Var::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Var> {
        match s.trim() {
            "A" | "a" => Ok(Var::A),
            "B" | "b" => Ok(Var::B),
            "X" | "x" => Ok(Var::X),
            "Y" | "y" => Ok(Var::Y),
            "C" | "c" => Ok(Var::C),
            "D" | "d" => Ok(Var::D),
            other => Err(Error::Parse(format!("unknown variable `{other}`"))),
        }
    }
}

/// The nine structure topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StructureKind {
    V,
    Nabla,
    Y,
    M,
    LeftM,
    RightM,
    LongM,
    LeftLongM,
    RightLongM,
}

impl StructureKind {
    pub const ALL: [StructureKind; 9] = [
        StructureKind::V,
        StructureKind::Nabla,
        StructureKind::Y,
        StructureKind::M,
        StructureKind::LeftM,
        StructureKind::RightM,
        StructureKind::LongM,
        StructureKind::LeftLongM,
        StructureKind::RightLongM,
    ];

    /// `C` has a child `D`, and bias is taken conditioning on `D`.
    pub fn has_child_d(self) -> bool {
        matches!(
            self,
            StructureKind::Y
                | StructureKind::LongM
                | StructureKind::LeftLongM
                | StructureKind::RightLongM
        )
    }

    /// The left parent of `C` is `A`, a cause of `X`.
    pub fn has_left_a(self) -> bool {
        matches!(
            self,
            StructureKind::M
                | StructureKind::LeftM
                | StructureKind::LongM
                | StructureKind::LeftLongM
        )
    }

    /// The right parent of `C` is `B`, a cause of `Y`.
    pub fn has_right_b(self) -> bool {
        matches!(
            self,
            StructureKind::M
                | StructureKind::RightM
                | StructureKind::LongM
                | StructureKind::RightLongM
        )
    }

    /// Structures built by extending a V or Y core with `A` and/or `B`.
    pub fn is_extended(self) -> bool {
        self.has_left_a() || self.has_right_b()
    }

    /// The variable the analysis conditions on (or adjusts for).
    pub fn conditioning_var(self) -> Var {
        if self.has_child_d() {
            Var::D
        } else {
            Var::C
        }
    }

    pub fn left_parent(self) -> Var {
        if self.has_left_a() {
            Var::A
        } else {
            Var::X
        }
    }

    pub fn right_parent(self) -> Var {
        if self.has_right_b() {
            Var::B
        } else {
            Var::Y
        }
    }

    /// Variables in topological order.
    pub fn variables(self) -> Vec<Var> {
        variable_roles(self).entries.iter().map(|e| e.var).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::V => "V",
            StructureKind::Nabla => "Nabla",
            StructureKind::Y => "Y",
            StructureKind::M => "M",
            StructureKind::LeftM => "LeftM",
            StructureKind::RightM => "RightM",
            StructureKind::LongM => "LongM",
            StructureKind::LeftLongM => "LeftLongM",
            StructureKind::RightLongM => "RightLongM",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<StructureKind> {
        let wanted = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        StructureKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == wanted)
            .ok_or_else(|| Error::Parse(format!("unknown structure kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Exposure,
    Outcome,
    Collider,
    ColliderChild,
    LeftCause,
    RightCause,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleEntry {
    pub var: Var,
    pub role: Role,
    pub parents: Vec<Var>,
}

/// Roles and parent lists of every variable in a structure, in topological
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub kind: StructureKind,
    pub entries: Vec<RoleEntry>,
}

impl RoleMap {
    pub fn get(&self, var: Var) -> Option<&RoleEntry> {
        self.entries.iter().find(|e| e.var == var)
    }

    pub fn parents(&self, var: Var) -> &[Var] {
        self.get(var).map(|e| e.parents.as_slice()).unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = (Var, Var)> + '_ {
        self.entries
            .iter()
            .flat_map(|e| e.parents.iter().map(move |&p| (p, e.var)))
    }
}

/// Returns the DAG of `kind`.
///
/// In the Nabla structure `X` is also a parent of `Y`; its `p_y_given_b`
/// parameter slot holds `P(Y=1 | X=x)`.
pub fn variable_roles(kind: StructureKind) -> RoleMap {
    let entry = |var, role, parents: &[Var]| RoleEntry {
        var,
        role,
        parents: parents.to_vec(),
    };
    let mut entries = Vec::with_capacity(6);
    if kind.has_left_a() {
        entries.push(entry(Var::A, Role::LeftCause, &[]));
    }
    if kind.has_right_b() {
        entries.push(entry(Var::B, Role::RightCause, &[]));
    }
    entries.push(entry(
        Var::X,
        Role::Exposure,
        if kind.has_left_a() { &[Var::A] } else { &[] },
    ));
    let y_parents: &[Var] = match kind {
        StructureKind::Nabla => &[Var::X],
        k if k.has_right_b() => &[Var::B],
        _ => &[],
    };
    entries.push(entry(Var::Y, Role::Outcome, y_parents));
    entries.push(entry(
        Var::C,
        Role::Collider,
        &[kind.left_parent(), kind.right_parent()],
    ));
    if kind.has_child_d() {
        entries.push(entry(Var::D, Role::ColliderChild, &[Var::C]));
    }
    RoleMap { kind, entries }
}

/// `P(C=1 | left, right)` for the four parent configurations.
///
/// The same type also holds `P(C=0 | left, right)` once flipped with
/// [`ColliderTable::for_level`]; the formulas are written against whichever
/// level is being conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColliderTable {
    #[serde(rename = "00")]
    pub p00: f64,
    #[serde(rename = "01")]
    pub p01: f64,
    #[serde(rename = "10")]
    pub p10: f64,
    #[serde(rename = "11")]
    pub p11: f64,
}

impl ColliderTable {
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Self {
        ColliderTable { p00, p01, p10, p11 }
    }

    pub fn uniform(p: f64) -> Self {
        ColliderTable::new(p, p, p, p)
    }

    pub fn get(&self, left: Level, right: Level) -> f64 {
        match (left, right) {
            (Level::Zero, Level::Zero) => self.p00,
            (Level::Zero, Level::One) => self.p01,
            (Level::One, Level::Zero) => self.p10,
            (Level::One, Level::One) => self.p11,
        }
    }

    /// The table of `P(C=c | left, right)`; identity for `c = 1`.
    pub fn for_level(&self, c: Level) -> ColliderTable {
        match c {
            Level::One => *self,
            Level::Zero => ColliderTable::new(
                1.0 - self.p00,
                1.0 - self.p01,
                1.0 - self.p10,
                1.0 - self.p11,
            ),
        }
    }

    fn fields(&self) -> [(&'static str, f64); 4] {
        [
            ("00", self.p00),
            ("01", self.p01),
            ("10", self.p10),
            ("11", self.p11),
        ]
    }
}

/// `P(child=1 | parent=0)` and `P(child=1 | parent=1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryConditional {
    #[serde(rename = "0")]
    pub p0: f64,
    #[serde(rename = "1")]
    pub p1: f64,
}

impl BinaryConditional {
    pub fn new(p0: f64, p1: f64) -> Self {
        BinaryConditional { p0, p1 }
    }

    pub fn given(&self, parent: Level) -> f64 {
        match parent {
            Level::Zero => self.p0,
            Level::One => self.p1,
        }
    }

    /// `P(child=level | parent)` as a conditional pair.
    pub fn for_level(&self, level: Level) -> BinaryConditional {
        match level {
            Level::One => *self,
            Level::Zero => BinaryConditional::new(1.0 - self.p0, 1.0 - self.p1),
        }
    }

    /// Risk difference of the child comparing parent levels.
    pub fn effect(&self) -> f64 {
        self.p1 - self.p0
    }
}

/// Raw parameter set; see the module docs for the indexing convention.
///
/// `p_right` is the marginal of the collider's right parent. It is absent for
/// [`StructureKind::Nabla`], where `P(Y=1)` follows from `p_left` and
/// `p_y_given_b` (which then holds `P(Y=1 | X=x)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureParams {
    pub kind: StructureKind,
    pub p_left: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_right: Option<f64>,
    pub p_c_given: ColliderTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_x_given_a: Option<BinaryConditional>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_y_given_b: Option<BinaryConditional>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_d_given_c: Option<BinaryConditional>,
}

impl StructureParams {
    /// A parameter set with every probability equal to `p`.
    pub fn uniform(kind: StructureKind, p: f64) -> Self {
        let pair = BinaryConditional::new(p, p);
        StructureParams {
            kind,
            p_left: p,
            p_right: (kind != StructureKind::Nabla).then_some(p),
            p_c_given: ColliderTable::uniform(p),
            p_x_given_a: kind.has_left_a().then_some(pair),
            p_y_given_b: (kind.has_right_b() || kind == StructureKind::Nabla).then_some(pair),
            p_d_given_c: kind.has_child_d().then_some(pair),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn validate(self, strict: bool) -> Result<ValidatedParams> {
        validate(self, strict)
    }
}

/// Checks a parameter set against its kind.
///
/// Lenient mode accepts probabilities in `[0, 1]`. Strict mode also requires
/// `P(C=c) > 0` for both levels (and `P(D=d) > 0` when the structure has
/// `D`), then requires every probability to lie in `(0, 1)`.
pub fn validate(params: StructureParams, strict: bool) -> Result<ValidatedParams> {
    let kind = params.kind;
    let missing = |f: &str| Error::MissingField {
        kind,
        field: f.to_string(),
    };
    let extra = |f: &str| Error::ExtraField {
        kind,
        field: f.to_string(),
    };

    let needs_right = kind != StructureKind::Nabla;
    let needs_y_link = kind.has_right_b() || kind == StructureKind::Nabla;
    for (name, present, needed) in [
        ("p_right", params.p_right.is_some(), needs_right),
        (
            "p_x_given_a",
            params.p_x_given_a.is_some(),
            kind.has_left_a(),
        ),
        ("p_y_given_b", params.p_y_given_b.is_some(), needs_y_link),
        (
            "p_d_given_c",
            params.p_d_given_c.is_some(),
            kind.has_child_d(),
        ),
    ] {
        match (present, needed) {
            (false, true) => return Err(missing(name)),
            (true, false) => return Err(extra(name)),
            _ => {}
        }
    }

    let probs = probability_fields(&params);
    for (field, value) in &probs {
        if !(0.0..=1.0).contains(value) {
            return Err(Error::OutOfRange {
                field: field.clone(),
                value: *value,
                range: "[0, 1]",
            });
        }
    }

    let validated = ValidatedParams {
        params,
        strict: false,
    };
    if !strict {
        return Ok(validated);
    }

    let p_c1 = validated.p_collider(Level::One);
    for level in [Level::One, Level::Zero] {
        let mass = if level.is_one() { p_c1 } else { 1.0 - p_c1 };
        if mass <= 0.0 {
            return Err(Error::DegenerateStratum { var: Var::C, level });
        }
    }
    if kind.has_child_d() {
        let p_d1 = validated.p_child(Level::One).expect("kind has D");
        for level in [Level::One, Level::Zero] {
            let mass = if level.is_one() { p_d1 } else { 1.0 - p_d1 };
            if mass <= 0.0 {
                return Err(Error::DegenerateStratum { var: Var::D, level });
            }
        }
    }
    for (field, value) in probs {
        if value <= 0.0 || value >= 1.0 {
            return Err(Error::OutOfRange {
                field,
                value,
                range: "(0, 1)",
            });
        }
    }
    Ok(ValidatedParams {
        strict: true,
        ..validated
    })
}

fn probability_fields(p: &StructureParams) -> Vec<(String, f64)> {
    let mut out = vec![("p_left".to_string(), p.p_left)];
    if let Some(r) = p.p_right {
        out.push(("p_right".to_string(), r));
    }
    for (k, v) in p.p_c_given.fields() {
        out.push((format!("p_c_given.{k}"), v));
    }
    for (name, pair) in [
        ("p_x_given_a", p.p_x_given_a),
        ("p_y_given_b", p.p_y_given_b),
        ("p_d_given_c", p.p_d_given_c),
    ] {
        if let Some(pair) = pair {
            out.push((format!("{name}.0"), pair.p0));
            out.push((format!("{name}.1"), pair.p1));
        }
    }
    out
}

/// A parameter set that passed [`validate`]. Immutable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedParams {
    params: StructureParams,
    strict: bool,
}

impl ValidatedParams {
    pub fn kind(&self) -> StructureKind {
        self.params.kind
    }

    pub fn raw(&self) -> &StructureParams {
        &self.params
    }

    pub fn into_raw(self) -> StructureParams {
        self.params
    }

    /// Whether this set passed strict validation.
    pub fn is_strict(&self) -> bool {
        self.strict
    }

    /// Re-validate in strict mode.
    pub fn to_strict(&self) -> Result<ValidatedParams> {
        if self.strict {
            Ok(self.clone())
        } else {
            validate(self.params.clone(), true)
        }
    }

    /// `P(left parent = 1)`: `p_X` or `p_A`.
    pub fn p_left(&self) -> f64 {
        self.params.p_left
    }

    /// `P(right parent = 1)`: `p_Y` or `p_B`. For Nabla this is the implied
    /// marginal of `Y`.
    pub fn p_right(&self) -> f64 {
        match self.params.p_right {
            Some(p) => p,
            None => {
                let y = self.y_given_x().expect("validated Nabla has p_y_given_b");
                self.params.p_left * y.p1 + (1.0 - self.params.p_left) * y.p0
            }
        }
    }

    pub fn collider(&self) -> &ColliderTable {
        &self.params.p_c_given
    }

    /// `P(X=1 | A=a)` (kinds with `A`).
    pub fn x_given_a(&self) -> Option<BinaryConditional> {
        self.params.p_x_given_a
    }

    /// `P(Y=1 | B=b)` (kinds with `B`).
    pub fn y_given_b(&self) -> Option<BinaryConditional> {
        if self.kind().has_right_b() {
            self.params.p_y_given_b
        } else {
            None
        }
    }

    /// `P(Y=1 | X=x)` (Nabla only).
    pub fn y_given_x(&self) -> Option<BinaryConditional> {
        if self.kind() == StructureKind::Nabla {
            self.params.p_y_given_b
        } else {
            None
        }
    }

    /// `P(D=1 | C=c)` (kinds with `D`).
    pub fn d_given_c(&self) -> Option<BinaryConditional> {
        self.params.p_d_given_c
    }

    /// Effect of `A` on `X`, or 1 when the left parent is `X` itself.
    pub fn rd_left(&self) -> f64 {
        self.x_given_a().map_or(1.0, |p| p.effect())
    }

    /// Effect of `B` on `Y`, or 1 when the right parent is `Y` itself.
    pub fn rd_right(&self) -> f64 {
        self.y_given_b().map_or(1.0, |p| p.effect())
    }

    /// Effect of `C` on `D`, or 1 when there is no `D`.
    pub fn rd_child(&self) -> f64 {
        self.d_given_c().map_or(1.0, |p| p.effect())
    }

    /// `P(C=c)` summed over the factorization.
    pub fn p_collider(&self, c: Level) -> f64 {
        let table = self.collider().for_level(c);
        let pl = self.p_left();
        let mut total = 0.0;
        for l in Level::BOTH {
            let w_l = if l.is_one() { pl } else { 1.0 - pl };
            let pr = match self.y_given_x() {
                Some(y) => y.given(l),
                None => self.p_right(),
            };
            for r in Level::BOTH {
                let w_r = if r.is_one() { pr } else { 1.0 - pr };
                total += w_l * w_r * table.get(l, r);
            }
        }
        total
    }

    /// `P(D=d)`, or `None` when the structure has no `D`.
    pub fn p_child(&self, d: Level) -> Option<f64> {
        self.d_given_c().map(|dc| {
            let dc = dc.for_level(d);
            dc.p1 * self.p_collider(Level::One) + dc.p0 * self.p_collider(Level::Zero)
        })
    }

    /// The embedded V (or Y) core: the collider, its two parents, and `D`.
    ///
    /// For extended kinds this renames `A` to the left parent and `B` to the
    /// right parent, so the V and Y formulas apply unchanged.
    pub fn core(&self) -> CoreParams {
        CoreParams {
            p_left: self.p_left(),
            p_right: self.p_right(),
            collider: *self.collider(),
            child: self.d_given_c(),
        }
    }
}

/// The embedded V or Y structure: independent parents with marginals
/// `p_left`, `p_right`, the collider table, and optionally `P(D=1 | C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreParams {
    pub p_left: f64,
    pub p_right: f64,
    pub collider: ColliderTable,
    pub child: Option<BinaryConditional>,
}

impl CoreParams {
    /// `P(C=c)`.
    pub fn p_collider(&self, c: Level) -> f64 {
        let q = self.collider.for_level(c);
        let (pl, pr) = (self.p_left, self.p_right);
        pl * pr * q.p11
            + pl * (1.0 - pr) * q.p10
            + (1.0 - pl) * pr * q.p01
            + (1.0 - pl) * (1.0 - pr) * q.p00
    }
}

/// Effect scale of a bias measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Cov,
    Rd,
    Rr,
    Or,
    /// Coefficient of `X` in the linear model `Y ~ 1 + X + G`.
    LmCoef,
}

impl Scale {
    /// Ratio scales measure bias as conditional / marginal.
    pub fn is_ratio(self) -> bool {
        matches!(self, Scale::Rr | Scale::Or)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scale::Cov => "cov",
            Scale::Rd => "rd",
            Scale::Rr => "rr",
            Scale::Or => "or",
            Scale::LmCoef => "lm",
        };
        f.write_str(s)
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scale> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cov" => Ok(Scale::Cov),
            "rd" => Ok(Scale::Rd),
            "rr" => Ok(Scale::Rr),
            "or" => Ok(Scale::Or),
            "lm" | "lmcoef" | "lm_coef" => Ok(Scale::LmCoef),
            other => Err(Error::Parse(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// Restrict to `var = level`.
    Stratum { var: Var, level: Level },
    /// Linear regression adjustment for the structure's conditioning variable.
    LinearModel,
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::Stratum { var, level } => write!(f, "{var}={level}"),
            Conditioning::LinearModel => f.write_str("lm"),
        }
    }
}

/// Which bias to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BiasQuery {
    pub conditioning: Conditioning,
    pub scale: Scale,
}

impl BiasQuery {
    pub fn stratum(var: Var, level: Level, scale: Scale) -> Self {
        BiasQuery {
            conditioning: Conditioning::Stratum { var, level },
            scale,
        }
    }

    pub fn linear_model() -> Self {
        BiasQuery {
            conditioning: Conditioning::LinearModel,
            scale: Scale::LmCoef,
        }
    }

    /// Checks the query is meaningful for `kind`: kinds with `D` condition
    /// on `D`, the others on `C`.
    pub fn check(&self, kind: StructureKind) -> Result<()> {
        match self.conditioning {
            Conditioning::LinearModel => {
                if self.scale != Scale::LmCoef {
                    return Err(Error::Unsupported(format!(
                        "linear-model adjustment uses the lm scale, not {}",
                        self.scale
                    )));
                }
            }
            Conditioning::Stratum { var, .. } => {
                if self.scale == Scale::LmCoef {
                    return Err(Error::Unsupported(
                        "the lm scale requires linear-model conditioning".into(),
                    ));
                }
                let expected = kind.conditioning_var();
                if var != expected {
                    return Err(Error::Unsupported(format!(
                        "structure {kind} is analysed conditioning on {expected}, not {var}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_v_is_valid() {
        let p = StructureParams::uniform(StructureKind::V, 0.5);
        assert!(validate(p.clone(), false).is_ok());
        assert!(validate(p, true).unwrap().is_strict());
    }

    #[test]
    fn out_of_range_collider_entry() {
        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_c_given.p11 = 1.2;
        match validate(p, false) {
            Err(Error::OutOfRange { field, .. }) => assert_eq!(field, "p_c_given.11"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_is_out_of_range() {
        let mut p = StructureParams::uniform(StructureKind::M, 0.5);
        p.p_x_given_a = Some(BinaryConditional::new(f64::NAN, 0.5));
        assert!(matches!(validate(p, false), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn degenerate_collider_in_y_strict() {
        let mut p = StructureParams::uniform(StructureKind::Y, 0.5);
        p.p_c_given = ColliderTable::uniform(0.0);
        assert!(validate(p.clone(), false).is_ok());
        assert_eq!(
            validate(p, true).unwrap_err(),
            Error::DegenerateStratum {
                var: Var::C,
                level: Level::One
            }
        );
    }

    #[test]
    fn degenerate_child_strict() {
        let mut p = StructureParams::uniform(StructureKind::LongM, 0.5);
        p.p_d_given_c = Some(BinaryConditional::new(1.0, 1.0));
        assert_eq!(
            validate(p, true).unwrap_err(),
            Error::DegenerateStratum {
                var: Var::D,
                level: Level::Zero
            }
        );
    }

    #[test]
    fn strict_rejects_boundary_probability() {
        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_c_given.p00 = 0.0;
        assert!(validate(p.clone(), false).is_ok());
        assert!(matches!(
            validate(p, true),
            Err(Error::OutOfRange {
                range: "(0, 1)",
                ..
            })
        ));
    }

    #[test]
    fn missing_and_extra_fields() {
        let mut p = StructureParams::uniform(StructureKind::LeftM, 0.5);
        p.p_x_given_a = None;
        assert!(matches!(
            validate(p, false),
            Err(Error::MissingField { field, .. }) if field == "p_x_given_a"
        ));

        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_d_given_c = Some(BinaryConditional::new(0.2, 0.8));
        assert!(matches!(
            validate(p, false),
            Err(Error::ExtraField { field, .. }) if field == "p_d_given_c"
        ));

        let mut p = StructureParams::uniform(StructureKind::Nabla, 0.5);
        p.p_right = Some(0.5);
        assert!(matches!(
            validate(p, false),
            Err(Error::ExtraField { field, .. }) if field == "p_right"
        ));
    }

    #[test]
    fn role_maps_match_topologies() {
        let v = variable_roles(StructureKind::V);
        assert_eq!(v.parents(Var::C), &[Var::X, Var::Y]);
        assert!(v.get(Var::D).is_none());

        let llm = variable_roles(StructureKind::LeftLongM);
        assert_eq!(llm.parents(Var::X), &[Var::A]);
        assert_eq!(llm.parents(Var::C), &[Var::A, Var::Y]);
        assert_eq!(llm.parents(Var::D), &[Var::C]);

        let nabla = variable_roles(StructureKind::Nabla);
        assert_eq!(nabla.parents(Var::Y), &[Var::X]);
        assert_eq!(nabla.parents(Var::C), &[Var::X, Var::Y]);
    }

    #[test]
    fn variable_sets() {
        use StructureKind::*;
        let expect: [(StructureKind, &[Var]); 9] = [
            (V, &[Var::X, Var::Y, Var::C]),
            (Nabla, &[Var::X, Var::Y, Var::C]),
            (Y, &[Var::X, Var::Y, Var::C, Var::D]),
            (M, &[Var::A, Var::B, Var::X, Var::Y, Var::C]),
            (LeftM, &[Var::A, Var::X, Var::Y, Var::C]),
            (RightM, &[Var::B, Var::X, Var::Y, Var::C]),
            (LongM, &[Var::A, Var::B, Var::X, Var::Y, Var::C, Var::D]),
            (LeftLongM, &[Var::A, Var::X, Var::Y, Var::C, Var::D]),
            (RightLongM, &[Var::B, Var::X, Var::Y, Var::C, Var::D]),
        ];
        for (kind, vars) in expect {
            assert_eq!(kind.variables(), vars, "{kind}");
        }
    }

    #[test]
    fn topological_order_respects_edges() {
        for kind in StructureKind::ALL {
            let map = variable_roles(kind);
            let pos = |v: Var| map.entries.iter().position(|e| e.var == v).unwrap();
            for (from, to) in map.edges() {
                assert!(pos(from) < pos(to), "{kind}: {from} -> {to}");
            }
        }
    }

    #[test]
    fn kind_parsing() {
        for kind in StructureKind::ALL {
            assert_eq!(kind.name().parse::<StructureKind>().unwrap(), kind);
        }
        assert_eq!(
            "left-long-m".parse::<StructureKind>().unwrap(),
            StructureKind::LeftLongM
        );
        assert!("W".parse::<StructureKind>().is_err());
    }

    #[test]
    fn json_schema_keys() {
        let json = r#"{"kind":"V","p_left":0.5,"p_right":0.5,
            "p_c_given":{"00":0.15,"01":0.25,"10":0.35,"11":0.75}}"#;
        let p = StructureParams::from_json(json).unwrap();
        assert_eq!(p.p_c_given.get(Level::Zero, Level::One), 0.25);
        assert_eq!(p.p_c_given.get(Level::One, Level::Zero), 0.35);
        assert!(StructureParams::from_json(r#"{"kind":"V","p_left":0.5}"#).is_err());
    }

    #[test]
    fn query_checks() {
        let q = BiasQuery::stratum(Var::D, Level::One, Scale::Cov);
        assert!(q.check(StructureKind::Y).is_ok());
        assert!(q.check(StructureKind::V).is_err());
        let q = BiasQuery::stratum(Var::C, Level::Zero, Scale::Or);
        assert!(q.check(StructureKind::M).is_ok());
        assert!(q.check(StructureKind::LongM).is_err());
        assert!(BiasQuery::linear_model()
            .check(StructureKind::Nabla)
            .is_ok());
    }

    #[test]
    fn nabla_implied_outcome_marginal() {
        let mut p = StructureParams::uniform(StructureKind::Nabla, 0.5);
        p.p_left = 0.25;
        p.p_y_given_b = Some(BinaryConditional::new(0.2, 0.6));
        let v = validate(p, true).unwrap();
        assert!((v.p_right() - (0.25 * 0.6 + 0.75 * 0.2)).abs() < 1e-15);
    }
}
