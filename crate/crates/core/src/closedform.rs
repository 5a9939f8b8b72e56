//! Closed-form collider bias.
//!
//! Stratum-specific bias for the V and Y structures, the odds-ratio bias
//! factor of the Nabla structure, the factorization of extended structures
//! into an embedded V/Y bias times extension-path effects, and linear
//! regression bias for all structures except Nabla.
//!
//! Extended structures are handled by evaluating the embedded core (see
//! [`ValidatedParams::core`]) with the V or Y formulas and multiplying in the
//! risk differences of the `A -> X` and `B -> Y` edges.
//!
//! [`compute`] routes a [`BiasQuery`] to the right closed form, falling back
//! to the joint-table oracle where no closed form exists (risk ratios, odds
//! ratios of extended structures, Nabla on difference scales).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{self, build_joint, JointTable};
use crate::structures::{
    BiasQuery, ColliderTable, Conditioning, CoreParams, Level, Scale, StructureKind,
    ValidatedParams, Var,
};

/// Absolute tolerance for values on the covariance, RD, and LM scales.
pub const ABS_TOL: f64 = 1e-12;
/// Relative tolerance for odds ratios.
pub const OR_REL_TOL: f64 = 1e-10;
/// Distance from 1 within which an odds ratio counts as null.
pub const OR_NULL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    /// Sign of `v`, treating `|v| <= tol` as zero.
    pub fn of(v: f64, tol: f64) -> Sign {
        if v > tol {
            Sign::Positive
        } else if v < -tol {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    /// Sign of a bias value on `scale` (ratio scales compare against 1).
    pub fn of_bias(value: f64, scale: Scale) -> Sign {
        if scale.is_ratio() {
            Sign::of(value - 1.0, OR_NULL_TOL)
        } else {
            Sign::of(value, ABS_TOL)
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Zero => 0,
            Sign::Positive => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            -1 => Some(Sign::Negative),
            0 => Some(Sign::Zero),
            1 => Some(Sign::Positive),
            _ => None,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        Sign::from_i8(self.as_i8() * rhs.as_i8()).expect("product of signs")
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Negative => "negative",
            Sign::Zero => "zero",
            Sign::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClosedForm,
    Oracle,
}

/// A computed bias with the terms it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub value: f64,
    pub scale: Scale,
    pub conditioning: Conditioning,
    pub sign: Sign,
    pub factors: BTreeMap<String, f64>,
    pub source: Source,
}

impl BiasReport {
    fn new(value: f64, scale: Scale, conditioning: Conditioning, factors: Factors) -> Self {
        debug_assert!(
            factors.0.values().all(|v| v.is_finite()),
            "non-finite factor in {factors:?}"
        );
        BiasReport {
            value,
            scale,
            conditioning,
            sign: Sign::of_bias(value, scale),
            factors: factors.0,
            source: Source::ClosedForm,
        }
    }

    pub fn factor(&self, name: &str) -> Option<f64> {
        self.factors.get(name).copied()
    }
}

#[derive(Debug, Default, Clone)]
struct Factors(BTreeMap<String, f64>);

impl Factors {
    fn with(mut self, name: &str, v: f64) -> Self {
        self.0.insert(name.to_string(), v);
        self
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn stratum(var: Var, level: Level) -> Conditioning {
    Conditioning::Stratum { var, level }
}

fn require_kind(params: &ValidatedParams, allowed: &[StructureKind], what: &str) -> Result<()> {
    if allowed.contains(&params.kind()) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "{what} does not apply to structure {}",
            params.kind()
        )))
    }
}

fn require_mass(var: Var, level: Level, mass: f64) -> Result<()> {
    if mass > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateStratum { var, level })
    }
}

fn nonzero(v: f64, what: &str) -> Result<f64> {
    if v != 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::UndefinedRatio(format!("{what} is zero")))
    }
}

/// `g(c) = p_{c|00} p_{c|11} - p_{c|10} p_{c|01}`, where `p_{c|lr}` is
/// `P(C=c | left=l, right=r)`.
///
/// Its sign is the sign of V-bias in stratum `C = c`.
///
/// ```
/// use collider_bias::closedform::g;
/// use collider_bias::structures::{ColliderTable, Level};
///
/// let t = ColliderTable::new(0.15, 0.25, 0.25, 0.75);
/// assert!((g(&t, Level::One) - 0.05).abs() < 1e-15);
/// ```
pub fn g(table: &ColliderTable, c: Level) -> f64 {
    let q = table.for_level(c);
    q.p00 * q.p11 - q.p10 * q.p01
}

/// Effect of the left parent on `P(C=1)`, averaged over the right parent.
pub(crate) fn left_bracket(core: &CoreParams) -> f64 {
    let t = &core.collider;
    core.p_left * (t.p11 - t.p10) + (1.0 - core.p_left) * (t.p01 - t.p00)
}

/// Effect of the right parent on `P(C=1)`, averaged over the left parent.
pub(crate) fn right_bracket(core: &CoreParams) -> f64 {
    let t = &core.collider;
    core.p_right * (t.p11 - t.p01) + (1.0 - core.p_right) * (t.p10 - t.p00)
}

/// `h` for an embedded core: minus the product of the two marginal effects
/// of the collider's parents on `P(C=1)`.
pub fn h_core(core: &CoreParams) -> f64 {
    let h = -left_bracket(core) * right_bracket(core);
    debug_assert!(
        {
            let p1 = core.p_collider(Level::One);
            let alt =
                (1.0 - p1) * g(&core.collider, Level::One) + p1 * g(&core.collider, Level::Zero);
            (h - alt).abs() <= 1e-12
        },
        "h disagrees with P(C=0)g(1) + P(C=1)g(0)"
    );
    h
}

/// `h` of the structure: sign-determining factor of linear regression bias.
/// Equals `P(C=0) g(1) + P(C=1) g(0)`.
pub fn h(params: &ValidatedParams) -> Result<f64> {
    if params.kind() == StructureKind::Nabla {
        return Err(Error::Unsupported(
            "h needs marginally independent collider parents".into(),
        ));
    }
    Ok(h_core(&params.core()))
}

fn v_core_stratum(core: &CoreParams, c: Level, scale: Scale) -> Result<(f64, Factors)> {
    let q = core.collider.for_level(c);
    let (px, py) = (core.p_left, core.p_right);
    let gc = g(&core.collider, c);
    let mass = core.p_collider(c);
    let factors = Factors::default()
        .with(&format!("g{c}"), gc)
        .with("p_stratum", mass);
    let value = match scale {
        Scale::Cov => {
            require_mass(Var::C, c, mass)?;
            px * (1.0 - px) * py * (1.0 - py) * gc / (mass * mass)
        }
        Scale::Rd => {
            let den = (py * q.p11 + (1.0 - py) * q.p10) * (py * q.p01 + (1.0 - py) * q.p00);
            py * (1.0 - py) * gc / nonzero(den, "RD denominator")?
        }
        Scale::Or => q.p00 * q.p11 / nonzero(q.p10 * q.p01, "p_{c|10} p_{c|01}")?,
        other => {
            return Err(Error::Unsupported(format!(
                "no closed form for V-bias on the {other} scale"
            )))
        }
    };
    Ok((value, factors))
}

/// V-bias in stratum `C = c` on the covariance, RD, or OR scale.
///
/// ```
/// use collider_bias::closedform::v_bias_stratum;
/// use collider_bias::structures::{ColliderTable, Level, Scale, StructureKind, StructureParams};
///
/// let mut p = StructureParams::uniform(StructureKind::V, 0.5);
/// p.p_c_given = ColliderTable::new(0.15, 0.25, 0.25, 0.75);
/// let p = p.validate(true).unwrap();
/// let or = v_bias_stratum(&p, Level::One, Scale::Or).unwrap();
/// assert!((or.value - 1.8).abs() < 1e-12);
/// ```
pub fn v_bias_stratum(params: &ValidatedParams, c: Level, scale: Scale) -> Result<BiasReport> {
    require_kind(params, &[StructureKind::V], "V-bias")?;
    let (value, factors) = v_core_stratum(&params.core(), c, scale)?;
    Ok(BiasReport::new(value, scale, stratum(Var::C, c), factors))
}

fn strict_unless_cov(params: &ValidatedParams, scale: Scale) -> Result<ValidatedParams> {
    if scale == Scale::Cov {
        Ok(params.clone())
    } else {
        params.to_strict()
    }
}

/// Odds-ratio bias factor in stratum `C = c` of the Nabla structure: the
/// conditional OR of `X` and `Y` divided by their marginal OR.
pub fn nabla_bias_or(params: &ValidatedParams, c: Level) -> Result<BiasReport> {
    require_kind(params, &[StructureKind::Nabla], "the Nabla OR factor")?;
    let q = params.collider().for_level(c);
    let factor = q.p00 * q.p11 / nonzero(q.p10 * q.p01, "p_{c|10} p_{c|01}")?;
    let y = params.y_given_x().expect("Nabla has P(Y|X)");
    let marginal_or = y.p1 * (1.0 - y.p0) / nonzero(y.p0 * (1.0 - y.p1), "marginal odds")?;
    debug_assert!(
        {
            let table = build_joint(params);
            match joint::cond_measure(&table, Scale::Or, Some(stratum(Var::C, c))) {
                Ok(cond) => close(cond.value, marginal_or * factor, 1e-9),
                Err(_) => true,
            }
        },
        "Nabla OR factor disagrees with the oracle"
    );
    let factors = Factors::default()
        .with(&format!("g{c}"), g(params.collider(), c))
        .with("marginal_or", marginal_or);
    Ok(BiasReport::new(
        factor,
        Scale::Or,
        stratum(Var::C, c),
        factors,
    ))
}

fn y_core_stratum(core: &CoreParams, d: Level, scale: Scale) -> Result<(f64, Factors)> {
    let child = core
        .child
        .ok_or_else(|| Error::Unsupported("Y-bias needs D".into()))?;
    let dd = child.for_level(d);
    let (pd1, pd0) = (dd.p1, dd.p0);
    let c1 = core.collider;
    let c0 = c1.for_level(Level::Zero);
    let (px, py) = (core.p_left, core.p_right);
    let (g1, g0) = (g(&c1, Level::One), g(&c1, Level::Zero));
    let sign_term = (pd1 - pd0) * (pd1 * g1 - pd0 * g0);
    let p_d = pd1 * core.p_collider(Level::One) + pd0 * core.p_collider(Level::Zero);
    let factors = Factors::default()
        .with("g1", g1)
        .with("g0", g0)
        .with("child_effect", pd1 - pd0)
        .with("p_stratum", p_d);
    let value = match scale {
        Scale::Cov => {
            require_mass(Var::D, d, p_d)?;
            px * (1.0 - px) * py * (1.0 - py) / (p_d * p_d) * sign_term
        }
        Scale::Rd => {
            let den1 =
                py * (c1.p11 * pd1 + c0.p11 * pd0) + (1.0 - py) * (c1.p10 * pd1 + c0.p10 * pd0);
            let den2 =
                py * (c1.p01 * pd1 + c0.p01 * pd0) + (1.0 - py) * (c1.p00 * pd1 + c0.p00 * pd0);
            py * (1.0 - py) / nonzero(den1 * den2, "RD denominator")? * sign_term
        }
        Scale::Or => {
            let num = (pd1 - pd0) * (pd1 * c1.p00 * c1.p11 - pd0 * c0.p00 * c0.p11) + pd1 * pd0;
            let den = (pd1 - pd0) * (pd1 * c1.p10 * c1.p01 - pd0 * c0.p10 * c0.p01) + pd1 * pd0;
            num / nonzero(den, "OR denominator")?
        }
        other => {
            return Err(Error::Unsupported(format!(
                "no closed form for Y-bias on the {other} scale"
            )))
        }
    };
    Ok((value, factors))
}

/// Y-bias in stratum `D = d` on the covariance, RD, or OR scale.
pub fn y_bias_stratum(params: &ValidatedParams, d: Level, scale: Scale) -> Result<BiasReport> {
    require_kind(params, &[StructureKind::Y], "Y-bias")?;
    let (value, factors) = y_core_stratum(&params.core(), d, scale)?;
    Ok(BiasReport::new(value, scale, stratum(Var::D, d), factors))
}

fn y_embedded_core(core: &CoreParams, d: Level) -> Result<f64> {
    let child = core
        .child
        .ok_or_else(|| Error::Unsupported("Y-bias needs D".into()))?;
    let dd = child.for_level(d);
    let (pd1, pd0) = (dd.p1, dd.p0);
    let (m1, m0) = (core.p_collider(Level::One), core.p_collider(Level::Zero));
    let p_d = pd1 * m1 + pd0 * m0;
    require_mass(Var::D, d, p_d)?;
    let v_core = CoreParams {
        child: None,
        ..*core
    };
    // A zero-mass stratum contributes nothing: P(C=c)^2 times a bounded bias.
    let weighted = |c: Level, m: f64| -> Result<f64> {
        if m > 0.0 {
            Ok(m * m * v_core_stratum(&v_core, c, Scale::Cov)?.0)
        } else {
            Ok(0.0)
        }
    };
    Ok((pd1 - pd0) / (p_d * p_d)
        * (pd1 * weighted(Level::One, m1)? - pd0 * weighted(Level::Zero, m0)?))
}

/// Y-bias on the covariance scale written through the embedded V-bias:
/// a combination of the embedded bias in `C = 1` and minus that in `C = 0`.
pub fn y_embedded_relation(params: &ValidatedParams, d: Level) -> Result<f64> {
    require_kind(params, &[StructureKind::Y], "the embedded-V relation")?;
    let value = y_embedded_core(&params.core(), d)?;
    debug_assert!(
        {
            let direct = y_core_stratum(&params.core(), d, Scale::Cov).expect("D stratum has mass");
            (value - direct.0).abs() <= 1e-12
        },
        "embedded-V relation disagrees with the Y-bias formula"
    );
    Ok(value)
}

/// Closed-form `var(A | G=g) / var(X | G=g)` for kinds with `A`; 1 otherwise.
/// `G` is `C` or `D` per the kind.
pub fn variance_ratio(params: &ValidatedParams, level: Level) -> f64 {
    let Some(xa) = params.x_given_a() else {
        return 1.0;
    };
    let pa = params.p_left();
    let pr = params.p_right();
    let c1 = *params.collider();
    let (q1, q0) = match params.d_given_c() {
        None => {
            let q = c1.for_level(level);
            (
                pr * q.p11 + (1.0 - pr) * q.p10,
                pr * q.p01 + (1.0 - pr) * q.p00,
            )
        }
        Some(dc) => {
            let dd = dc.for_level(level);
            let c0 = c1.for_level(Level::Zero);
            (
                dd.p1 * (c1.p11 * pr + c1.p10 * (1.0 - pr))
                    + dd.p0 * (c0.p11 * pr + c0.p10 * (1.0 - pr)),
                dd.p1 * (c1.p01 * pr + c1.p00 * (1.0 - pr))
                    + dd.p0 * (c0.p01 * pr + c0.p00 * (1.0 - pr)),
            )
        }
    };
    let num = pa * q1 * (1.0 - pa) * q0;
    let den = (xa.p1 * pa * q1 + xa.p0 * (1.0 - pa) * q0)
        * ((1.0 - xa.p1) * pa * q1 + (1.0 - xa.p0) * (1.0 - pa) * q0);
    num / den
}

/// Stratum bias of an extended structure on the covariance or RD scale:
/// `RD_left * embedded * RD_right`, times the variance ratio on the RD scale.
///
/// Like the other evaluators this accepts leniently validated parameters and
/// fails only when a stratum is empty or a denominator vanishes; [`compute`]
/// is where strict validation is enforced.
pub fn extended_bias_stratum(
    params: &ValidatedParams,
    level: Level,
    scale: Scale,
) -> Result<BiasReport> {
    let kind = params.kind();
    if !kind.is_extended() {
        return Err(Error::Unsupported(format!(
            "structure {kind} has no extension path"
        )));
    }
    if !matches!(scale, Scale::Cov | Scale::Rd) {
        return Err(Error::Unsupported(format!(
            "no closed form for extended-structure bias on the {scale} scale"
        )));
    }
    let core = params.core();
    let var = kind.conditioning_var();
    let (embedded, inner) = if kind.has_child_d() {
        y_core_stratum(&core, level, scale)?
    } else {
        v_core_stratum(&core, level, scale)?
    };
    let (rd_left, rd_right) = (params.rd_left(), params.rd_right());
    let vr = if scale == Scale::Rd {
        nonzero(variance_ratio(params, level), "variance ratio")?
    } else {
        1.0
    };
    let value = rd_left * embedded * rd_right * vr;
    let factors = inner
        .with("embedded", embedded)
        .with("rd_left", rd_left)
        .with("rd_right", rd_right)
        .with("vr", vr);
    Ok(BiasReport::new(value, scale, stratum(var, level), factors))
}

/// Linear regression V-bias: the coefficient of `X` after adjusting for `C`.
///
/// Equals the weighted average of the two stratum RD biases, with weights
/// proportional to `var(X | C=c) P(C=c)`.
pub fn v_bias_lm(params: &ValidatedParams) -> Result<BiasReport> {
    require_kind(params, &[StructureKind::V], "V-bias")?;
    let core = params.core();
    let c = core.collider;
    let cb = c.for_level(Level::Zero);
    let (px, py) = (core.p_left, core.p_right);
    let hv = h_core(&core);
    let num = hv * py * (1.0 - py);
    let den = px * (c.p11 * py + c.p10 * (1.0 - py)) * (cb.p11 * py + cb.p10 * (1.0 - py))
        + (1.0 - px) * (c.p01 * py + c.p00 * (1.0 - py)) * (cb.p01 * py + cb.p00 * (1.0 - py));
    let value = num / nonzero(den, "regression denominator")?;

    let (w1, w0) = v_lm_weights(&core);
    debug_assert!(
        {
            let rd1 = v_core_stratum(&core, Level::One, Scale::Rd);
            let rd0 = v_core_stratum(&core, Level::Zero, Scale::Rd);
            match (rd1, rd0) {
                (Ok((rd1, _)), Ok((rd0, _))) => (value - (w1 * rd1 + w0 * rd0)).abs() <= 1e-12,
                _ => true,
            }
        },
        "regression bias is not the weighted average of stratum biases"
    );
    let factors = Factors::default()
        .with("h", hv)
        .with("w1", w1)
        .with("w0", w0)
        .with("g1", g(&c, Level::One))
        .with("g0", g(&c, Level::Zero));
    Ok(BiasReport::new(
        value,
        Scale::LmCoef,
        Conditioning::LinearModel,
        factors,
    ))
}

/// Regression weights `(w_{C=1}, w_{C=0})` of the V structure.
fn v_lm_weights(core: &CoreParams) -> (f64, f64) {
    let px = core.p_left;
    let py = core.p_right;
    let joint_xc = |x: Level, c: Level| {
        let q = core.collider.for_level(c);
        let (w, a, b) = match x {
            Level::One => (px, q.p11, q.p10),
            Level::Zero => (1.0 - px, q.p01, q.p00),
        };
        w * (py * a + (1.0 - py) * b)
    };
    let (m1, m0) = (core.p_collider(Level::One), core.p_collider(Level::Zero));
    let t1 = m0 * joint_xc(Level::One, Level::One) * joint_xc(Level::Zero, Level::One);
    let t0 = m1 * joint_xc(Level::One, Level::Zero) * joint_xc(Level::Zero, Level::Zero);
    (t1 / (t1 + t0), t0 / (t1 + t0))
}

/// Closed-form `phi`, the normalizer of the regression weights:
/// `P(G=0)P(G=1,X=1)P(G=1,X=0) + P(G=1)P(G=0,X=1)P(G=0,X=0)` with `G` the
/// adjustment variable.
pub fn phi_closed(params: &ValidatedParams) -> Result<f64> {
    let kind = params.kind();
    if kind == StructureKind::Nabla {
        return Err(Error::Unsupported("phi is not defined for Nabla".into()));
    }
    let pl = params.p_left();
    let pr = params.p_right();
    let c = *params.collider();
    let cb = c.for_level(Level::Zero);
    let d = params.d_given_c();

    let Some(xa) = params.x_given_a() else {
        // X is the left parent.
        let px = pl;
        return Ok(match d {
            None => {
                px * (1.0 - px)
                    * (px * (pr * c.p11 + (1.0 - pr) * c.p10) * (pr * cb.p11 + (1.0 - pr) * cb.p10)
                        + (1.0 - px)
                            * (pr * c.p01 + (1.0 - pr) * c.p00)
                            * (pr * cb.p01 + (1.0 - pr) * cb.p00))
            }
            Some(dc) => {
                let db = dc.for_level(Level::Zero);
                // P(D=dl | X=x) expanded over the right parent and C.
                let s = |x: Level, dl: Level| {
                    let dd = if dl.is_one() { dc } else { db };
                    let (hi, lo) = match x {
                        Level::One => ((c.p11, cb.p11), (c.p10, cb.p10)),
                        Level::Zero => ((c.p01, cb.p01), (c.p00, cb.p00)),
                    };
                    pr * hi.0 * dd.p1
                        + pr * hi.1 * dd.p0
                        + (1.0 - pr) * lo.0 * dd.p1
                        + (1.0 - pr) * lo.1 * dd.p0
                };
                px * (1.0 - px)
                    * (px * s(Level::One, Level::One) * s(Level::One, Level::Zero)
                        + (1.0 - px) * s(Level::Zero, Level::One) * s(Level::Zero, Level::Zero))
            }
        });
    };

    // A is the left parent.
    let pa = pl;
    let prefix =
        (pa * xa.p1 + (1.0 - pa) * xa.p0) * (pa * (1.0 - xa.p1) + (1.0 - pa) * (1.0 - xa.p0));
    let s = |t: &ColliderTable| {
        pa * pr * t.p11
            + pa * (1.0 - pr) * t.p10
            + (1.0 - pa) * pr * t.p01
            + (1.0 - pa) * (1.0 - pr) * t.p00
    };
    let (s1, s0) = (s(&c), s(&cb));
    let a_effect = pr * (c.p11 - c.p01) + (1.0 - pr) * (c.p10 - c.p00);
    let rd_left = xa.effect();
    let correction = pa * pa * (1.0 - pa) * (1.0 - pa) * rd_left * rd_left * a_effect * a_effect;
    Ok(match d {
        None => prefix * s1 * s0 - correction,
        Some(dc) => {
            let rd_child = dc.effect();
            prefix * (dc.p1 * s1 + dc.p0 * s0) * ((1.0 - dc.p1) * s1 + (1.0 - dc.p0) * s0)
                - correction * rd_child * rd_child
        }
    })
}

/// `phi` from the joint table, in its defining form.
pub fn phi_definitional(table: &JointTable) -> Result<f64> {
    table.triple_product_sum(Var::X, table.kind.conditioning_var())
}

/// Linear regression bias for every kind except Nabla:
/// `h * RD_left * RD_right * RD_child^2 * VAR_left * VAR_right / phi`.
pub fn general_lm_bias(params: &ValidatedParams) -> Result<BiasReport> {
    let kind = params.kind();
    if kind == StructureKind::Nabla {
        return Err(Error::Unsupported(
            "no closed-form regression bias for Nabla".into(),
        ));
    }
    let core = params.core();
    let hv = h_core(&core);
    let (rd_left, rd_right, rd_child) = (params.rd_left(), params.rd_right(), params.rd_child());
    let var_left = core.p_left * (1.0 - core.p_left);
    let var_right = core.p_right * (1.0 - core.p_right);
    let phi = phi_closed(params)?;
    debug_assert!(
        {
            let def = phi_definitional(&build_joint(params)).expect("phi from joint");
            (phi - def).abs() <= 1e-12
        },
        "closed-form phi disagrees with its definition"
    );
    let value =
        hv * rd_left * rd_right * rd_child * rd_child * var_left * var_right / nonzero(phi, "phi")?;
    let factors = Factors::default()
        .with("h", hv)
        .with("rd_left", rd_left)
        .with("rd_right", rd_right)
        .with("rd_child", rd_child)
        .with("var_left", var_left)
        .with("var_right", var_right)
        .with("phi", phi);
    Ok(BiasReport::new(
        value,
        Scale::LmCoef,
        Conditioning::LinearModel,
        factors,
    ))
}

/// Bias computed by the joint-table oracle, wrapped as a report.
pub fn oracle_report(params: &ValidatedParams, query: &BiasQuery) -> Result<BiasReport> {
    query.check(params.kind())?;
    let table = build_joint(params);
    let m = joint::bias(&table, query.conditioning, query.scale)?;
    Ok(BiasReport {
        value: m.value,
        scale: m.scale,
        conditioning: query.conditioning,
        sign: Sign::of_bias(m.value, m.scale),
        factors: BTreeMap::new(),
        source: Source::Oracle,
    })
}

/// Computes the bias asked for by `query`, using a closed form when one
/// exists and the oracle otherwise. Scales other than covariance require
/// parameters that pass strict validation.
pub fn compute(params: &ValidatedParams, query: &BiasQuery) -> Result<BiasReport> {
    let kind = params.kind();
    query.check(kind)?;
    let params = strict_unless_cov(params, query.scale)?;
    let params = &params;
    match query.conditioning {
        Conditioning::LinearModel => match kind {
            StructureKind::Nabla => oracle_report(params, query),
            StructureKind::V => v_bias_lm(params),
            _ => general_lm_bias(params),
        },
        Conditioning::Stratum { level, .. } => {
            let scale = query.scale;
            match (kind, scale) {
                (_, Scale::Rr) => oracle_report(params, query),
                (StructureKind::V, _) => v_bias_stratum(params, level, scale),
                (StructureKind::Y, _) => y_bias_stratum(params, level, scale),
                (StructureKind::Nabla, Scale::Or) => nabla_bias_or(params, level),
                (StructureKind::Nabla, _) => oracle_report(params, query),
                (_, Scale::Or) => oracle_report(params, query),
                _ => extended_bias_stratum(params, level, scale),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{BinaryConditional, StructureParams};

    fn fig2(kind: StructureKind) -> StructureParams {
        let mut p = StructureParams::uniform(kind, 0.5);
        p.p_c_given = ColliderTable::new(0.15, 0.25, 0.25, 0.75);
        p
    }

    fn strict(p: StructureParams) -> ValidatedParams {
        p.validate(true).unwrap()
    }

    #[test]
    fn g_values() {
        assert_eq!(g(&ColliderTable::uniform(0.5), Level::One), 0.0);
        assert!((g(&ColliderTable::new(0.15, 0.25, 0.25, 0.75), Level::One) - 0.05).abs() < 1e-15);
        assert!(g(&ColliderTable::new(0.2, 0.4, 0.4, 0.8), Level::One).abs() < 1e-15);
    }

    #[test]
    fn fig2_point_stratum_values() {
        let p = strict(fig2(StructureKind::V));
        let cov = v_bias_stratum(&p, Level::One, Scale::Cov).unwrap();
        assert!((cov.value - 5.0 / 196.0).abs() < 1e-15);
        assert_eq!(cov.sign, Sign::Positive);
        let rd = v_bias_stratum(&p, Level::One, Scale::Rd).unwrap();
        assert!((rd.value - 0.125).abs() < 1e-15);
        let or = v_bias_stratum(&p, Level::One, Scale::Or).unwrap();
        assert!((or.value - 1.8).abs() < 1e-12);
        assert_eq!(or.sign, Sign::Positive);
        let cov0 = v_bias_stratum(&p, Level::Zero, Scale::Cov).unwrap();
        assert!((cov0.value + 35.0 / 676.0).abs() < 1e-15);
        let or0 = v_bias_stratum(&p, Level::Zero, Scale::Or).unwrap();
        assert!((or0.value - 17.0 / 45.0).abs() < 1e-12);
    }

    #[test]
    fn fig2_point_h_and_lm() {
        let p = strict(fig2(StructureKind::V));
        assert!((h(&p).unwrap() + 0.09).abs() < 1e-15);
        let lm = v_bias_lm(&p).unwrap();
        assert!((lm.value + 9.0 / 82.0).abs() < 1e-15);
        assert_eq!(lm.sign, Sign::Negative);
        let general = general_lm_bias(&p).unwrap();
        assert!((general.value - lm.value).abs() < 1e-15);
    }

    #[test]
    fn uniform_has_no_bias() {
        let p = strict(StructureParams::uniform(StructureKind::V, 0.5));
        for c in Level::BOTH {
            assert_eq!(v_bias_stratum(&p, c, Scale::Cov).unwrap().value, 0.0);
            assert_eq!(v_bias_stratum(&p, c, Scale::Or).unwrap().value, 1.0);
        }
        assert_eq!(v_bias_lm(&p).unwrap().sign, Sign::Zero);
    }

    #[test]
    fn nabla_factor_ignores_the_direct_edge() {
        let mut p = fig2(StructureKind::Nabla);
        p.p_y_given_b = Some(BinaryConditional::new(0.3, 0.7));
        let r = nabla_bias_or(&strict(p), Level::One).unwrap();
        assert!((r.value - 1.8).abs() < 1e-12);
    }

    #[test]
    fn y_with_perfect_proxy_matches_v() {
        let mut p = fig2(StructureKind::Y);
        p.p_right = Some(0.3);
        p.p_d_given_c = Some(BinaryConditional::new(0.0, 1.0));
        let y = p.validate(false).unwrap();
        let mut vp = fig2(StructureKind::V);
        vp.p_right = Some(0.3);
        let v = strict(vp);
        let yc = y_bias_stratum(&y, Level::One, Scale::Cov).unwrap().value;
        let vc = v_bias_stratum(&v, Level::One, Scale::Cov).unwrap().value;
        assert!((yc - vc).abs() < 1e-15);
        assert!((y_embedded_relation(&y, Level::One).unwrap() - vc).abs() < 1e-15);
    }

    #[test]
    fn y_with_uninformative_child() {
        let mut p = fig2(StructureKind::Y);
        p.p_d_given_c = Some(BinaryConditional::new(0.4, 0.4));
        let p = strict(p);
        for d in Level::BOTH {
            assert_eq!(y_bias_stratum(&p, d, Scale::Cov).unwrap().sign, Sign::Zero);
            assert_eq!(y_bias_stratum(&p, d, Scale::Rd).unwrap().sign, Sign::Zero);
            assert!((y_bias_stratum(&p, d, Scale::Or).unwrap().value - 1.0).abs() < 1e-15);
            assert_eq!(y_embedded_relation(&p, d).unwrap(), 0.0);
        }
    }

    #[test]
    fn broken_left_path_gives_zero() {
        let mut p = fig2(StructureKind::LeftM);
        p.p_x_given_a = Some(BinaryConditional::new(0.4, 0.4));
        let p = strict(p);
        for s in [Scale::Cov, Scale::Rd] {
            assert_eq!(extended_bias_stratum(&p, Level::One, s).unwrap().value, 0.0);
        }
    }

    #[test]
    fn right_cause_copying_outcome_is_plain_v() {
        let mut p = fig2(StructureKind::RightM);
        p.p_y_given_b = Some(BinaryConditional::new(0.0, 1.0));
        let p = p.validate(false).unwrap();
        let core = p.core();
        for s in [Scale::Cov, Scale::Rd] {
            let ext = extended_bias_stratum(&p, Level::One, s).unwrap();
            let (em, _) = v_core_stratum(&core, Level::One, s).unwrap();
            assert_eq!(ext.value, em);
            let oracle = joint::bias(&build_joint(&p), stratum(Var::C, Level::One), s).unwrap();
            assert!((em - oracle.value).abs() < 1e-15);
        }
    }

    #[test]
    fn long_m_without_child_effect() {
        let mut p = fig2(StructureKind::LongM);
        p.p_x_given_a = Some(BinaryConditional::new(0.2, 0.7));
        p.p_d_given_c = Some(BinaryConditional::new(0.35, 0.35));
        assert_eq!(general_lm_bias(&strict(p)).unwrap().value, 0.0);
    }

    #[test]
    fn routing() {
        let p = strict(fig2(StructureKind::M));
        let q = BiasQuery::stratum(Var::C, Level::One, Scale::Or);
        assert_eq!(compute(&p, &q).unwrap().source, Source::Oracle);
        let q = BiasQuery::stratum(Var::C, Level::One, Scale::Rd);
        assert_eq!(compute(&p, &q).unwrap().source, Source::ClosedForm);
        let q = BiasQuery::stratum(Var::C, Level::One, Scale::Rr);
        assert_eq!(compute(&p, &q).unwrap().source, Source::Oracle);
    }

    #[test]
    fn degenerate_or_query() {
        let mut p = fig2(StructureKind::V);
        p.p_c_given = ColliderTable::uniform(0.0);
        let p = p.validate(false).unwrap();
        let q = BiasQuery::stratum(Var::C, Level::One, Scale::Or);
        assert!(matches!(
            compute(&p, &q),
            Err(Error::DegenerateStratum { .. })
        ));
    }

    #[test]
    fn sign_products() {
        assert_eq!(Sign::Negative * Sign::Negative, Sign::Positive);
        assert_eq!(Sign::Zero * Sign::Negative, Sign::Zero);
        assert_eq!(Sign::of_bias(1.0 + 1e-12, Scale::Or), Sign::Zero);
        assert_eq!(Sign::of_bias(-2e-12, Scale::Cov), Sign::Negative);
    }
}
