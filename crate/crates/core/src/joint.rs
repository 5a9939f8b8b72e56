//! Brute-force oracle over the full joint distribution.
//!
//! A [`JointTable`] lists the probability of every assignment of the
//! structure's binary variables, built by multiplying the factors of the DAG.
//! Everything here is computed from those cells alone; none of the closed-form
//! results are used, so the two can be checked against each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structures::{
    variable_roles, Conditioning, Level, Scale, StructureKind, ValidatedParams, Var,
};

/// Exact joint distribution. Cell `i` assigns `order[k]` the value of bit `k`
/// of `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub kind: StructureKind,
    pub order: Vec<Var>,
    pub mass: Vec<f64>,
}

/// A value measured by the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMeasure {
    pub value: f64,
    pub scale: Scale,
    /// `None` for the marginal association.
    pub conditioning: Option<Conditioning>,
}

/// Probability that `var` takes the value 1 given the values already drawn
/// for its parents.
fn factor_p1(params: &ValidatedParams, var: Var, value_of: impl Fn(Var) -> Level) -> f64 {
    let kind = params.kind();
    match var {
        Var::A => params.p_left(),
        Var::B => params.p_right(),
        Var::X => match params.x_given_a() {
            Some(xa) => xa.given(value_of(Var::A)),
            None => params.p_left(),
        },
        Var::Y => match (params.y_given_x(), params.y_given_b()) {
            (Some(yx), _) => yx.given(value_of(Var::X)),
            (None, Some(yb)) => yb.given(value_of(Var::B)),
            (None, None) => params.p_right(),
        },
        Var::C => params
            .collider()
            .get(value_of(kind.left_parent()), value_of(kind.right_parent())),
        Var::D => params
            .d_given_c()
            .expect("D only exists in kinds with p_d_given_c")
            .given(value_of(Var::C)),
    }
}

fn bernoulli(p1: f64, level: Level) -> f64 {
    if level.is_one() {
        p1
    } else {
        1.0 - p1
    }
}

/// Builds the joint table by factorizing along the DAG.
pub fn build_joint(params: &ValidatedParams) -> JointTable {
    let kind = params.kind();
    let order = variable_roles(kind)
        .entries
        .iter()
        .map(|e| e.var)
        .collect::<Vec<_>>();
    let n = order.len();
    let mut mass = Vec::with_capacity(1 << n);
    for cell in 0..(1usize << n) {
        let value_of = |v: Var| {
            let k = order.iter().position(|&o| o == v).expect("parent in order");
            Level::from(cell >> k & 1 == 1)
        };
        let p = order
            .iter()
            .map(|&v| bernoulli(factor_p1(params, v, value_of), value_of(v)))
            .product::<f64>();
        mass.push(p);
    }
    JointTable { kind, order, mass }
}

impl JointTable {
    fn bit(&self, var: Var) -> Result<usize> {
        self.order
            .iter()
            .position(|&v| v == var)
            .ok_or(Error::UnknownVariable {
                kind: self.kind,
                var,
            })
    }

    pub fn contains(&self, var: Var) -> bool {
        self.order.contains(&var)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Probability of a conjunction of assignments; the empty event has
    /// probability 1.
    pub fn prob(&self, event: &[(Var, Level)]) -> Result<f64> {
        let mut mask = 0usize;
        let mut want = 0usize;
        for &(var, level) in event {
            let b = 1 << self.bit(var)?;
            if mask & b != 0 && (want & b != 0) != level.is_one() {
                return Ok(0.0);
            }
            mask |= b;
            if level.is_one() {
                want |= b;
            }
        }
        Ok(self
            .mass
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, m)| m)
            .sum())
    }

    fn p(&self, event: &[(Var, Level)]) -> f64 {
        self.prob(event).expect("variables checked by caller")
    }

    /// `E[f]` over the cells, with `f` given the value lookup for a cell.
    fn expect(&self, f: impl Fn(&dyn Fn(Var) -> f64) -> f64) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(cell, &m)| {
                let value = |v: Var| {
                    let k = self.order.iter().position(|&o| o == v).expect("known var");
                    (cell >> k & 1) as f64
                };
                m * f(&value)
            })
            .sum()
    }

    /// Conditional covariance of `e` and `f` within `g = level`, from moments.
    pub fn cov_given(&self, e: Var, f: Var, given: Option<(Var, Level)>) -> Result<f64> {
        for v in [e, f] {
            self.bit(v)?;
        }
        let (mass, restrict) = self.stratum(given)?;
        let pe = self.p(&with(&restrict, (e, Level::One))) / mass;
        let pf = self.p(&with(&restrict, (f, Level::One))) / mass;
        let mut ev = restrict.clone();
        ev.push((e, Level::One));
        ev.push((f, Level::One));
        let pef = self.p(&ev) / mass;
        Ok(pef - pe * pf)
    }

    /// The four-cell cross-product form of the conditional covariance.
    pub fn cov_cross_product(&self, e: Var, f: Var, g: Var, level: Level) -> Result<f64> {
        let mass = self.prob(&[(g, level)])?;
        if mass <= 0.0 {
            return Err(Error::DegenerateStratum { var: g, level });
        }
        let cell = |a: Level, b: Level| self.prob(&[(e, a), (f, b), (g, level)]);
        let (one, zero) = (Level::One, Level::Zero);
        let num = cell(one, one)? * cell(zero, zero)? - cell(one, zero)? * cell(zero, one)?;
        Ok(num / (mass * mass))
    }

    /// `var(v | g = level)` (or the marginal variance).
    pub fn var_given(&self, v: Var, given: Option<(Var, Level)>) -> Result<f64> {
        let (mass, restrict) = self.stratum(given)?;
        self.bit(v)?;
        let p = self.p(&with(&restrict, (v, Level::One))) / mass;
        Ok(p * (1.0 - p))
    }

    /// `P(G=0)P(G=1,F=1)P(G=1,F=0) + P(G=1)P(G=0,F=1)P(G=0,F=0)`.
    ///
    /// With `F = X` and `G` the adjustment variable this is the normalizer of
    /// the regression weights.
    pub fn triple_product_sum(&self, f: Var, g: Var) -> Result<f64> {
        let (one, zero) = (Level::One, Level::Zero);
        Ok(self.prob(&[(g, zero)])?
            * self.prob(&[(g, one), (f, one)])?
            * self.prob(&[(g, one), (f, zero)])?
            + self.prob(&[(g, one)])?
                * self.prob(&[(g, zero), (f, one)])?
                * self.prob(&[(g, zero), (f, zero)])?)
    }

    /// Regression weight of stratum `G = level` when adjusting the `X`
    /// coefficient for `G`.
    pub fn lm_weight(&self, g: Var, level: Level) -> Result<f64> {
        let phi = self.triple_product_sum(Var::X, g)?;
        if phi <= 0.0 {
            return Err(Error::SingularDesign(g));
        }
        Ok(self.prob(&[(g, level.flip())])?
            * self.prob(&[(Var::X, Level::One), (g, level)])?
            * self.prob(&[(Var::X, Level::Zero), (g, level)])?
            / phi)
    }

    fn stratum(&self, given: Option<(Var, Level)>) -> Result<(f64, Vec<(Var, Level)>)> {
        match given {
            None => Ok((1.0, Vec::new())),
            Some((var, level)) => {
                let mass = self.prob(&[(var, level)])?;
                if mass <= 0.0 {
                    return Err(Error::DegenerateStratum { var, level });
                }
                Ok((mass, vec![(var, level)]))
            }
        }
    }
}

fn with(restrict: &[(Var, Level)], extra: (Var, Level)) -> Vec<(Var, Level)> {
    let mut v = restrict.to_vec();
    v.push(extra);
    v
}

/// The `X`–`Y` association on `scale`, either marginal (`None`), within a
/// stratum, or adjusted by linear regression for the structure's
/// conditioning variable.
pub fn cond_measure(
    table: &JointTable,
    scale: Scale,
    conditioning: Option<Conditioning>,
) -> Result<OracleMeasure> {
    let value = match (conditioning, scale) {
        (Some(Conditioning::LinearModel), Scale::LmCoef) => {
            lm_coefficient(table, table.kind.conditioning_var())?
        }
        (Some(Conditioning::LinearModel), other) => {
            return Err(Error::Unsupported(format!(
                "linear-model adjustment has no {other} scale"
            )))
        }
        (Some(Conditioning::Stratum { var, level }), Scale::LmCoef) => {
            return Err(Error::Unsupported(format!(
                "the lm scale does not apply within stratum {var}={level}"
            )))
        }
        (Some(Conditioning::Stratum { var, level }), s) => {
            stratum_measure(table, s, Some((var, level)))?
        }
        // The unadjusted regression slope of Y on X is the marginal RD.
        (None, Scale::LmCoef) => stratum_measure(table, Scale::Rd, None)?,
        (None, s) => stratum_measure(table, s, None)?,
    };
    Ok(OracleMeasure {
        value,
        scale,
        conditioning,
    })
}

fn stratum_measure(table: &JointTable, scale: Scale, given: Option<(Var, Level)>) -> Result<f64> {
    if scale == Scale::Cov {
        return table.cov_given(Var::X, Var::Y, given);
    }
    let (_, restrict) = table.stratum(given)?;
    let cell = |x: Level, y: Level| {
        let mut ev = restrict.clone();
        ev.push((Var::X, x));
        ev.push((Var::Y, y));
        table.p(&ev)
    };
    let (one, zero) = (Level::One, Level::Zero);
    let (n11, n10, n01, n00) = (
        cell(one, one),
        cell(one, zero),
        cell(zero, one),
        cell(zero, zero),
    );
    let undefined = |what: &str| {
        let at = given.map_or("marginally".to_string(), |(v, l)| {
            format!("in stratum {v}={l}")
        });
        Error::UndefinedRatio(format!("{what} {at}"))
    };
    if n11 + n10 <= 0.0 || n01 + n00 <= 0.0 {
        let level = if n11 + n10 <= 0.0 { one } else { zero };
        return Err(Error::DegenerateStratum { var: Var::X, level });
    }
    let risk1 = n11 / (n11 + n10);
    let risk0 = n01 / (n01 + n00);
    match scale {
        Scale::Rd => Ok(risk1 - risk0),
        Scale::Rr => {
            if risk0 <= 0.0 || risk1 <= 0.0 {
                return Err(undefined("risk ratio has a zero risk"));
            }
            Ok(risk1 / risk0)
        }
        Scale::Or => {
            if n11 * n00 <= 0.0 || n10 * n01 <= 0.0 {
                return Err(undefined("odds ratio has an empty cell"));
            }
            Ok(n11 * n00 / (n10 * n01))
        }
        Scale::Cov | Scale::LmCoef => unreachable!("handled above"),
    }
}

/// Least-squares coefficient of `X` in the population regression of `Y` on
/// `1, X, G`, from the 2x2 normal equations.
pub fn lm_coefficient(table: &JointTable, g: Var) -> Result<f64> {
    table.bit(g)?;
    let ex = table.expect(|v| v(Var::X));
    let ey = table.expect(|v| v(Var::Y));
    let eg = table.expect(|v| v(g));
    let cxy = table.expect(|v| v(Var::X) * v(Var::Y)) - ex * ey;
    let cxg = table.expect(|v| v(Var::X) * v(g)) - ex * eg;
    let cgy = table.expect(|v| v(g) * v(Var::Y)) - eg * ey;
    let vx = ex * (1.0 - ex);
    let vg = eg * (1.0 - eg);
    let det = vx * vg - cxg * cxg;
    if vx <= 0.0 || vg <= 0.0 || det <= 1e-12 * vx * vg {
        return Err(Error::SingularDesign(g));
    }
    Ok((cxy * vg - cxg * cgy) / det)
}

/// Bias of the query: conditional minus marginal on difference scales,
/// conditional over marginal on ratio scales.
pub fn bias(table: &JointTable, conditioning: Conditioning, scale: Scale) -> Result<OracleMeasure> {
    let cond = cond_measure(table, scale, Some(conditioning))?;
    let marg = cond_measure(table, scale, None)?;
    if table.kind != StructureKind::Nabla {
        let null = if scale.is_ratio() { 1.0 } else { 0.0 };
        debug_assert!(
            (marg.value - null).abs() <= 1e-12,
            "{}: marginal {} association is {} but X and Y are independent",
            table.kind,
            scale,
            marg.value
        );
    }
    let value = if scale.is_ratio() {
        cond.value / marg.value
    } else {
        cond.value - marg.value
    };
    Ok(OracleMeasure {
        value,
        scale,
        conditioning: Some(conditioning),
    })
}

/// Empirical cell counts from forward sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTable {
    pub kind: StructureKind,
    pub order: Vec<Var>,
    pub n: u64,
    pub seed: u64,
    pub counts: Vec<u64>,
}

impl SampleTable {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.n as f64)
            .collect()
    }

    /// Largest absolute gap between empirical frequency and exact mass.
    pub fn max_deviation(&self, table: &JointTable) -> f64 {
        self.frequencies()
            .iter()
            .zip(&table.mass)
            .map(|(f, m)| (f - m).abs())
            .fold(0.0, f64::max)
    }
}

/// Draws `n` forward samples.
///
/// The generator is `ChaCha8Rng::seed_from_u64(seed)`. Each sample visits the
/// variables in topological order and consumes one `f64` uniform on `[0, 1)`
/// per variable; the variable is 1 when the uniform falls below its
/// conditional probability. Cells are indexed as in [`JointTable`].
pub fn sample(params: &ValidatedParams, n: u64, seed: u64) -> Result<SampleTable> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let kind = params.kind();
    let order = kind.variables();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; 1 << order.len()];
    for _ in 0..n {
        let mut cell = 0usize;
        for (k, &var) in order.iter().enumerate() {
            let value_of = |v: Var| {
                let j = order.iter().position(|&o| o == v).expect("parent in order");
                Level::from(cell >> j & 1 == 1)
            };
            let p1 = factor_p1(params, var, value_of);
            if rng.random::<f64>() < p1 {
                cell |= 1 << k;
            }
        }
        counts[cell] += 1;
    }
    Ok(SampleTable {
        kind,
        order,
        n,
        seed,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::{validate, BinaryConditional, ColliderTable, StructureParams};

    fn fig2_v() -> ValidatedParams {
        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_c_given = ColliderTable::new(0.15, 0.25, 0.25, 0.75);
        validate(p, true).unwrap()
    }

    #[test]
    fn uniform_v_cells() {
        let t =
            build_joint(&validate(StructureParams::uniform(StructureKind::V, 0.5), true).unwrap());
        assert_eq!(t.mass.len(), 8);
        assert!(t.mass.iter().all(|&m| m == 0.125));
        assert_eq!(t.prob(&[]).unwrap(), 1.0);
        assert_eq!(
            t.prob(&[(Var::X, Level::One), (Var::C, Level::One)])
                .unwrap(),
            0.25
        );
    }

    #[test]
    fn fig2_point_collider_mass() {
        let t = build_joint(&fig2_v());
        assert!((t.prob(&[(Var::C, Level::One)]).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn long_m_normalizes() {
        let mut p = StructureParams::uniform(StructureKind::LongM, 0.3);
        p.p_c_given = ColliderTable::new(0.1, 0.7, 0.4, 0.9);
        p.p_x_given_a = Some(BinaryConditional::new(0.2, 0.6));
        let t = build_joint(&validate(p, true).unwrap());
        assert_eq!(t.mass.len(), 64);
        assert!((t.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_variable() {
        let t = build_joint(&fig2_v());
        assert!(matches!(
            t.prob(&[(Var::D, Level::One)]),
            Err(Error::UnknownVariable { var: Var::D, .. })
        ));
    }

    #[test]
    fn fig2_point_measures() {
        let t = build_joint(&fig2_v());
        let c1 = Conditioning::Stratum {
            var: Var::C,
            level: Level::One,
        };
        let cov = bias(&t, c1, Scale::Cov).unwrap().value;
        assert!((cov - 5.0 / 196.0).abs() < 1e-15);
        let or = bias(&t, c1, Scale::Or).unwrap().value;
        assert!((or - 1.8).abs() < 1e-12);
        let rd = bias(&t, c1, Scale::Rd).unwrap().value;
        assert!((rd - 0.125).abs() < 1e-15);
        let lm = bias(&t, Conditioning::LinearModel, Scale::LmCoef)
            .unwrap()
            .value;
        assert!((lm + 9.0 / 82.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_v_has_no_bias() {
        let t =
            build_joint(&validate(StructureParams::uniform(StructureKind::V, 0.5), true).unwrap());
        let c1 = Conditioning::Stratum {
            var: Var::C,
            level: Level::One,
        };
        assert!(bias(&t, c1, Scale::Cov).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn uninformative_child_gives_no_bias() {
        let mut p = StructureParams::uniform(StructureKind::Y, 0.4);
        p.p_c_given = ColliderTable::new(0.1, 0.5, 0.3, 0.8);
        p.p_d_given_c = Some(BinaryConditional::new(0.3, 0.3));
        let t = build_joint(&validate(p, true).unwrap());
        for level in Level::BOTH {
            let q = Conditioning::Stratum { var: Var::D, level };
            for s in [Scale::Cov, Scale::Rd] {
                assert!(bias(&t, q, s).unwrap().value.abs() < 1e-14);
            }
            for s in [Scale::Rr, Scale::Or] {
                assert!((bias(&t, q, s).unwrap().value - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_stratum_is_an_error() {
        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_c_given = ColliderTable::uniform(0.0);
        let t = build_joint(&validate(p, false).unwrap());
        let q = Conditioning::Stratum {
            var: Var::C,
            level: Level::One,
        };
        assert_eq!(
            cond_measure(&t, Scale::Cov, Some(q)).unwrap_err(),
            Error::DegenerateStratum {
                var: Var::C,
                level: Level::One
            }
        );
    }

    #[test]
    fn collinear_adjustment_is_singular() {
        // C copies X exactly.
        let mut p = StructureParams::uniform(StructureKind::V, 0.5);
        p.p_c_given = ColliderTable::new(0.0, 0.0, 1.0, 1.0);
        let t = build_joint(&validate(p, false).unwrap());
        assert_eq!(
            lm_coefficient(&t, Var::C).unwrap_err(),
            Error::SingularDesign(Var::C)
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = fig2_v();
        assert_eq!(sample(&p, 1000, 3).unwrap(), sample(&p, 1000, 3).unwrap());
        assert_ne!(
            sample(&p, 1000, 3).unwrap().counts,
            sample(&p, 1000, 4).unwrap().counts
        );
        assert_eq!(sample(&p, 0, 3).unwrap_err(), Error::EmptySample);
    }
}
