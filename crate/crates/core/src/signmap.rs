//! Sign of collider bias without computing its size.
//!
//! The sign of stratum bias in a V structure is the sign of `g(c)`; in a Y
//! structure it follows from `g(1)`, `g(0)` and the effect of `C` on `D`;
//! extended structures multiply in the signs of their extension paths; and
//! regression bias has the sign of `h`.
//!
//! [`emit_grid`] sweeps `(P(C=1|1,0), P(C=1|0,1))` over the unit square with
//! the other two collider probabilities fixed, producing sign maps for
//! stratum V-bias ([`GridFamily::Fig3`]), stratum Y-bias
//! ([`GridFamily::Fig4`]) and regression V-bias ([`GridFamily::Fig5`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::closedform::{g, h_core, Sign, ABS_TOL};
use crate::error::{Error, Result};
use crate::structures::{
    BinaryConditional, ColliderTable, Conditioning, CoreParams, Level, StructureKind,
    ValidatedParams, Var,
};

/// How the two parents act on `P(C=1)`, read from the four conditional
/// effects `X: 00->10, 01->11` and `Y: 00->01, 10->11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Both parents raise `P(C=1)` at both levels of the other.
    BothPositive,
    /// Both parents lower `P(C=1)` at both levels of the other.
    BothNegative,
    /// One parent raises and the other lowers `P(C=1)`, at every level.
    OppositeSigns,
    /// The effect of `X` changes sign with `Y`; that of `Y` does not.
    QualitativeInX,
    /// The effect of `Y` changes sign with `X`; that of `X` does not.
    QualitativeInY,
    QualitativeInBoth,
    /// One of the four effects is zero.
    DegenerateTie,
}

impl Pattern {
    pub fn is_qualitative(self) -> bool {
        matches!(
            self,
            Pattern::QualitativeInX | Pattern::QualitativeInY | Pattern::QualitativeInBoth
        )
    }

    pub fn is_same_direction(self) -> bool {
        matches!(self, Pattern::BothPositive | Pattern::BothNegative)
    }
}

/// Signs of the parents' interaction on `C = c` for the canonical level `c`
/// (the level with `P(C=c|1,1) >= P(C=c|0,0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interactions {
    pub rr_c: Sign,
    pub rr_not_c: Sign,
    pub or: Sign,
    pub rd: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectPattern {
    pub pattern: Pattern,
    pub canonical_level: Level,
    pub interaction: Interactions,
}

/// Classifies the collider table.
///
/// ```
/// use collider_bias::closedform::Sign;
/// use collider_bias::signmap::{classify_effects, Pattern};
/// use collider_bias::structures::ColliderTable;
///
/// let e = classify_effects(&ColliderTable::new(0.15, 0.25, 0.25, 0.75));
/// assert_eq!(e.pattern, Pattern::BothPositive);
/// assert_eq!(e.interaction.rr_c, Sign::Positive);
/// ```
pub fn classify_effects(table: &ColliderTable) -> EffectPattern {
    let t = table;
    let x0 = Sign::of(t.p10 - t.p00, ABS_TOL);
    let x1 = Sign::of(t.p11 - t.p01, ABS_TOL);
    let y0 = Sign::of(t.p01 - t.p00, ABS_TOL);
    let y1 = Sign::of(t.p11 - t.p10, ABS_TOL);

    let pattern = if [x0, x1, y0, y1].contains(&Sign::Zero) {
        Pattern::DegenerateTie
    } else {
        match (x0 != x1, y0 != y1) {
            (true, true) => Pattern::QualitativeInBoth,
            (true, false) => Pattern::QualitativeInX,
            (false, true) => Pattern::QualitativeInY,
            (false, false) => match (x0, y0) {
                (Sign::Positive, Sign::Positive) => Pattern::BothPositive,
                (Sign::Negative, Sign::Negative) => Pattern::BothNegative,
                _ => Pattern::OppositeSigns,
            },
        }
    };

    let c = Level::from(t.p11 >= t.p00);
    let q = t.for_level(c);
    let or_gap = q.p11 * q.p00 * (1.0 - q.p10) * (1.0 - q.p01)
        - q.p10 * q.p01 * (1.0 - q.p11) * (1.0 - q.p00);
    EffectPattern {
        pattern,
        canonical_level: c,
        interaction: Interactions {
            rr_c: Sign::of(g(t, c), ABS_TOL),
            rr_not_c: Sign::of(g(t, c.flip()), ABS_TOL),
            or: Sign::of(or_gap, ABS_TOL),
            rd: Sign::of(q.p11 - q.p10 - q.p01 + q.p00, ABS_TOL),
        },
    }
}

/// Sign of V-bias in stratum `C = c`: the sign of `g(c)`.
pub fn sign_v_stratum(table: &ColliderTable, c: Level) -> Sign {
    Sign::of(g(table, c), ABS_TOL)
}

/// Sign of Y-bias in stratum `D = d`, by cases on the signs of `g(1)` and
/// `g(0)`:
///
/// - `g(1) >= 0 >= g(0)`: the sign of the effect of `C` on `P(D=d)`;
/// - `g(1) <= 0 <= g(0)`: the opposite sign;
/// - both negative: positive when `P(D=d|C=1)/P(D=d|C=0)` lies strictly
///   between `g(0)/g(1)` and 1, zero at `g(0)/g(1)`, negative outside;
/// - both positive: the reverse.
///
/// Fails with `DegenerateStratum` when `g(1) = g(0) = 0` and `C` affects `D`.
pub fn sign_y_stratum(table: &ColliderTable, child: &BinaryConditional, d: Level) -> Result<Sign> {
    let dd = child.for_level(d);
    let (pd1, pd0) = (dd.p1, dd.p0);
    let effect = Sign::of(pd1 - pd0, ABS_TOL);
    if effect == Sign::Zero {
        return Ok(Sign::Zero);
    }
    let (g1, g0) = (g(table, Level::One), g(table, Level::Zero));
    let (s1, s0) = (Sign::of(g1, ABS_TOL), Sign::of(g0, ABS_TOL));
    use Sign::*;
    let sign = match (s1, s0) {
        (Zero, Zero) => {
            return Err(Error::DegenerateStratum {
                var: Var::C,
                level: Level::One,
            })
        }
        (Positive | Zero, Negative | Zero) => effect,
        (Negative | Zero, Positive | Zero) => effect.flip(),
        (Negative, Negative) | (Positive, Positive) => {
            if pd0 <= 0.0 {
                return Err(Error::UndefinedRatio("P(D=d | C=0) is zero".into()));
            }
            let r = pd1 / pd0;
            let t = g0 / g1;
            let at_threshold = Sign::of(r - t, ABS_TOL * t.abs().max(1.0));
            let between = if at_threshold == Zero {
                Zero
            } else if (r > t.min(1.0)) && (r < t.max(1.0)) {
                Positive
            } else {
                Negative
            };
            if s1 == Negative {
                between
            } else {
                between.flip()
            }
        }
    };
    debug_assert!(
        {
            let direct = (pd1 - pd0) * (pd1 * g1 - pd0 * g0);
            direct.abs() < 1e-9 || Sign::of(direct, 0.0) == sign
        },
        "case rule disagrees with the sign of the Y-bias formula"
    );
    Ok(sign)
}

/// Sign of regression V-bias: the sign of `h`, opposite to the sign of the
/// product of the parents' average effects on `C`.
pub fn sign_lm_v(params: &ValidatedParams) -> Result<Sign> {
    if params.kind() != StructureKind::V {
        return Err(Error::Unsupported(format!(
            "regression V-bias sign for structure {}",
            params.kind()
        )));
    }
    Ok(sign_lm_core(&params.core()))
}

fn sign_lm_core(core: &CoreParams) -> Sign {
    let sign = Sign::of(h_core(core), ABS_TOL);
    debug_assert!(
        match classify_effects(&core.collider).pattern {
            Pattern::BothPositive | Pattern::BothNegative =>
                sign == Sign::Negative || h_core(core).abs() < 1e-9,
            Pattern::OppositeSigns => sign == Sign::Positive || h_core(core).abs() < 1e-9,
            _ => true,
        },
        "regression bias sign contradicts the parents' effect directions"
    );
    sign
}

/// Sign of bias for any structure and conditioning.
///
/// Stratum bias: sign of the embedded V- or Y-bias times the signs of the
/// extension-path effects. Regression bias: sign of `h` times the same path
/// signs; the direction of the `C -> D` effect does not matter, but a null
/// `C -> D` effect gives zero. For Nabla only stratum conditioning is
/// meaningful, and the sign is that of the odds-ratio bias factor.
pub fn sign_extended(params: &ValidatedParams, conditioning: Conditioning) -> Result<Sign> {
    let kind = params.kind();
    let core = params.core();
    let paths = Sign::of(params.rd_left(), ABS_TOL) * Sign::of(params.rd_right(), ABS_TOL);
    match conditioning {
        Conditioning::Stratum { var, level } => {
            if var != kind.conditioning_var() {
                return Err(Error::Unsupported(format!(
                    "structure {kind} is analysed conditioning on {}, not {var}",
                    kind.conditioning_var()
                )));
            }
            let embedded = match core.child {
                Some(child) => sign_y_stratum(&core.collider, &child, level)?,
                None => sign_v_stratum(&core.collider, level),
            };
            Ok(embedded * paths)
        }
        Conditioning::LinearModel => {
            if kind == StructureKind::Nabla {
                return Err(Error::Unsupported(
                    "no regression bias sign rule for Nabla".into(),
                ));
            }
            let child = Sign::of(params.rd_child(), ABS_TOL);
            Ok(sign_lm_core(&core) * paths * child * child)
        }
    }
}

/// Signs at both strata for a V table, as the corollaries constrain them.
pub fn v_stratum_signs(table: &ColliderTable) -> (Sign, Sign) {
    (
        sign_v_stratum(table, Level::One),
        sign_v_stratum(table, Level::Zero),
    )
}

/// Whether the two stratum signs satisfy what the effect pattern implies:
/// same-direction effects give a negative stratum, opposite effects a
/// positive stratum, qualitative interaction strictly opposite signs.
/// `None` when the pattern carries no claim.
pub fn corollary_consistent(table: &ColliderTable) -> Option<bool> {
    let (s1, s0) = v_stratum_signs(table);
    match classify_effects(table).pattern {
        p if p.is_same_direction() => Some(s1 == Sign::Negative || s0 == Sign::Negative),
        Pattern::OppositeSigns => Some(s1 == Sign::Positive || s0 == Sign::Positive),
        p if p.is_qualitative() => Some(s1 != Sign::Zero && s1 == s0.flip()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFamily {
    /// Stratum V-bias at both levels of `C`.
    Fig3,
    /// Stratum Y-bias at both levels of `D`.
    Fig4,
    /// Regression V-bias.
    Fig5,
}

impl GridFamily {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            GridFamily::Fig3 => &["sign_c1", "sign_c0"],
            GridFamily::Fig4 => &["sign_d1", "sign_d0"],
            GridFamily::Fig5 => &["sign_lm"],
        }
    }
}

impl fmt::Display for GridFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridFamily::Fig3 => "fig3",
            GridFamily::Fig4 => "fig4",
            GridFamily::Fig5 => "fig5",
        })
    }
}

impl FromStr for GridFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fig3" => Ok(GridFamily::Fig3),
            "fig4" => Ok(GridFamily::Fig4),
            "fig5" => Ok(GridFamily::Fig5),
            other => Err(Error::Parse(format!("unknown grid family `{other}`"))),
        }
    }
}

/// Values held fixed across a grid. `p00` and `p11` are `P(C=1|0,0)` and
/// `P(C=1|1,1)` with `p11 >= p00`, so level 1 is the canonical level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFixed {
    pub p00: f64,
    pub p11: f64,
    #[serde(default = "half")]
    pub p_left: f64,
    #[serde(default = "half")]
    pub p_right: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_d_given_c: Option<BinaryConditional>,
}

fn half() -> f64 {
    0.5
}

impl GridFixed {
    pub fn new(p00: f64, p11: f64) -> Self {
        GridFixed {
            p00,
            p11,
            p_left: 0.5,
            p_right: 0.5,
            p_d_given_c: None,
        }
    }

    fn check(&self, family: GridFamily) -> Result<()> {
        let mut fields = vec![
            ("p00", self.p00),
            ("p11", self.p11),
            ("p_left", self.p_left),
            ("p_right", self.p_right),
        ];
        if let Some(d) = self.p_d_given_c {
            fields.push(("p_d_given_c.0", d.p0));
            fields.push(("p_d_given_c.1", d.p1));
        }
        for (field, value) in fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange {
                    field: field.into(),
                    value,
                    range: "[0, 1]",
                });
            }
        }
        if self.p11 < self.p00 {
            return Err(Error::OutOfRange {
                field: "p11".into(),
                value: self.p11,
                range: "[p00, 1]",
            });
        }
        if family == GridFamily::Fig4 && self.p_d_given_c.is_none() {
            return Err(Error::MissingField {
                kind: StructureKind::Y,
                field: "p_d_given_c".into(),
            });
        }
        Ok(())
    }
}

/// An analytic curve on which some sign in the grid is zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroLocus {
    pub name: String,
    pub equation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p10: f64,
    pub p01: f64,
    pub signs: Vec<Sign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignGrid {
    pub family: GridFamily,
    pub resolution: usize,
    pub fixed: GridFixed,
    pub columns: Vec<String>,
    pub zero_loci: Vec<ZeroLocus>,
    pub cells: Vec<GridCell>,
}

fn zero_loci(family: GridFamily, f: &GridFixed) -> Vec<ZeroLocus> {
    let locus = |name: &str, equation: String| ZeroLocus {
        name: name.into(),
        equation,
    };
    let (a, b) = (f.p00, f.p11);
    let rr_c = locus("rr_c", format!("p10*p01 = {}", a * b));
    let rr_not_c = locus(
        "rr_not_c",
        format!("(1-p10)*(1-p01) = {}", (1.0 - a) * (1.0 - b)),
    );
    let rd = locus("rd", format!("p10 + p01 = {}", a + b));
    match family {
        GridFamily::Fig3 => vec![
            rr_c,
            rr_not_c,
            rd,
            locus(
                "or",
                format!(
                    "p10*p01 / ((1-p10)*(1-p01)) = {}",
                    a * b / ((1.0 - a) * (1.0 - b))
                ),
            ),
        ],
        GridFamily::Fig4 => {
            let d = f.p_d_given_c.expect("checked");
            vec![
                rr_c,
                rr_not_c,
                rd,
                locus("y_d1", format!("{} * g(1) = {} * g(0)", d.p1, d.p0)),
                locus(
                    "y_d0",
                    format!("{} * g(1) = {} * g(0)", 1.0 - d.p1, 1.0 - d.p0),
                ),
            ]
        }
        GridFamily::Fig5 => {
            let (px, py) = (f.p_left, f.p_right);
            vec![
                locus(
                    "x_indep_c",
                    format!("p01 = {a} + {} * (p10 - {b})", px / (1.0 - px)),
                ),
                locus(
                    "y_indep_c",
                    format!("p01 = {b} + {} * (p10 - {a})", (1.0 - py) / py),
                ),
            ]
        }
    }
}

/// Sweeps `(p10, p01)` over the cell centres `(k + 1/2) / resolution` of the
/// unit square, `p01` in the outer loop, and records the signs of the
/// family's bias measures at each cell.
///
/// Cells where the Y-bias sign rule is degenerate (`g(1) = g(0) = 0`) are
/// reported as zero, which is the value of the bias there.
pub fn emit_grid(family: GridFamily, fixed: &GridFixed, resolution: usize) -> Result<SignGrid> {
    if resolution < 2 {
        return Err(Error::InvalidResolution(resolution));
    }
    fixed.check(family)?;
    let n = resolution as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let p01 = (j as f64 + 0.5) / n;
        for i in 0..resolution {
            let p10 = (i as f64 + 0.5) / n;
            let table = ColliderTable::new(fixed.p00, p01, p10, fixed.p11);
            let signs = match family {
                GridFamily::Fig3 => {
                    let (s1, s0) = v_stratum_signs(&table);
                    vec![s1, s0]
                }
                GridFamily::Fig4 => {
                    let d = fixed.p_d_given_c.expect("checked");
                    Level::BOTH
                        .iter()
                        .rev()
                        .map(|&l| match sign_y_stratum(&table, &d, l) {
                            Err(Error::DegenerateStratum { .. }) => Ok(Sign::Zero),
                            other => other,
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                GridFamily::Fig5 => {
                    let core = CoreParams {
                        p_left: fixed.p_left,
                        p_right: fixed.p_right,
                        collider: table,
                        child: None,
                    };
                    vec![Sign::of(h_core(&core), ABS_TOL)]
                }
            };
            cells.push(GridCell { p10, p01, signs });
        }
    }
    Ok(SignGrid {
        family,
        resolution,
        fixed: *fixed,
        columns: family.columns().iter().map(|s| s.to_string()).collect(),
        zero_loci: zero_loci(family, fixed),
        cells,
    })
}

impl SignGrid {
    /// CSV with `#`-prefixed metadata lines, then one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let f = &self.fixed;
        out.push_str("# collider-bias sign grid\n");
        out.push_str(&format!("# family={}\n", self.family));
        out.push_str(&format!("# resolution={}\n", self.resolution));
        out.push_str(&format!("# fixed.p00={}\n", f.p00));
        out.push_str(&format!("# fixed.p11={}\n", f.p11));
        out.push_str(&format!("# fixed.p_left={}\n", f.p_left));
        out.push_str(&format!("# fixed.p_right={}\n", f.p_right));
        if let Some(d) = f.p_d_given_c {
            out.push_str(&format!("# fixed.p_d_given_c={},{}\n", d.p0, d.p1));
        }
        for l in &self.zero_loci {
            out.push_str(&format!("# locus.{}={}\n", l.name, l.equation));
        }
        out.push_str("p10,p01");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for cell in &self.cells {
            out.push_str(&format!("{},{}", cell.p10, cell.p01));
            for s in &cell.signs {
                out.push_str(&format!(",{}", s.as_i8()));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`SignGrid::to_csv`].
    pub fn from_csv(text: &str) -> Result<SignGrid> {
        let bad = |msg: String| Error::Parse(msg);
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("`{s}`: {e}")))
        };
        let mut family = None;
        let mut resolution = None;
        let mut fixed = GridFixed::new(f64::NAN, f64::NAN);
        let mut zero_loci = Vec::new();
        let mut columns = None;
        let mut cells = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.trim().split_once('=') else {
                    continue;
                };
                match key {
                    "family" => family = Some(value.parse::<GridFamily>()?),
                    "resolution" => {
                        resolution = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?)
                    }
                    "fixed.p00" => fixed.p00 = num(value)?,
                    "fixed.p11" => fixed.p11 = num(value)?,
                    "fixed.p_left" => fixed.p_left = num(value)?,
                    "fixed.p_right" => fixed.p_right = num(value)?,
                    "fixed.p_d_given_c" => {
                        let (a, b) = value
                            .split_once(',')
                            .ok_or_else(|| bad(format!("bad p_d_given_c `{value}`")))?;
                        fixed.p_d_given_c = Some(BinaryConditional::new(num(a)?, num(b)?));
                    }
                    k => {
                        if let Some(name) = k.strip_prefix("locus.") {
                            zero_loci.push(ZeroLocus {
                                name: name.into(),
                                equation: value.into(),
                            });
                        }
                    }
                }
            } else if columns.is_none() {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() < 3 || cols[0] != "p10" || cols[1] != "p01" {
                    return Err(bad(format!("bad header `{line}`")));
                }
                columns = Some(cols[2..].iter().map(|s| s.to_string()).collect::<Vec<_>>());
            } else {
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() < 3 {
                    return Err(bad(format!("bad row `{line}`")));
                }
                let signs = parts[2..]
                    .iter()
                    .map(|s| {
                        s.trim()
                            .parse::<i8>()
                            .ok()
                            .and_then(Sign::from_i8)
                            .ok_or_else(|| bad(format!("bad sign `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                cells.push(GridCell {
                    p10: num(parts[0])?,
                    p01: num(parts[1])?,
                    signs,
                });
            }
        }
        Ok(SignGrid {
            family: family.ok_or_else(|| bad("missing family".into()))?,
            resolution: resolution.ok_or_else(|| bad("missing resolution".into()))?,
            fixed,
            columns: columns.ok_or_else(|| bad("missing header".into()))?,
            zero_loci,
            cells,
        })
    }

    /// The cell whose centre is nearest to `(p10, p01)`.
    pub fn cell_at(&self, p10: f64, p01: f64) -> Option<&GridCell> {
        let n = self.resolution as f64;
        let idx = |p: f64| ((p * n).floor() as usize).min(self.resolution - 1);
        self.cells.get(idx(p01) * self.resolution + idx(p10))
    }
}
