//! Randomized cross-checks of the closed forms against the oracle.
//!
//! Each draw picks every probability of a structure independently and
//! uniformly from `[0.05, 0.95]`, using `ChaCha8Rng::seed_from_u64(seed)` with
//! the stream set to the structure's position in [`StructureKind::ALL`].
//! The draws are consumed in this order: `p_left`, `p_right` (absent for
//! Nabla), `p_c_given` `00, 01, 10, 11`, then `p_x_given_a`, `p_y_given_b`,
//! `p_d_given_c` (each `0, 1`) when the structure has them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closedform::{
    self, g, general_lm_bias, phi_closed, phi_definitional, variance_ratio, Sign, ABS_TOL,
    OR_REL_TOL,
};
use crate::joint::{self, build_joint, JointTable};
use crate::signmap::{self, classify_effects, Pattern};
use crate::structures::{
    BinaryConditional, ColliderTable, Conditioning, Level, Scale, StructureKind, StructureParams,
    ValidatedParams, Var,
};

const LOW: f64 = 0.05;
const HIGH: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Covariance, RD, regression coefficients, identities.
    pub abs: f64,
    /// Odds ratios, relative.
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            abs: ABS_TOL,
            rel: OR_REL_TOL,
        }
    }
}

/// Largest discrepancy seen for one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub evaluations: usize,
    pub failures: usize,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
struct Check {
    name: String,
    tolerance: f64,
    evaluations: usize,
    failures: usize,
    max: f64,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            tolerance,
            evaluations: 0,
            failures: 0,
            max: 0.0,
        }
    }

    fn record(&mut self, discrepancy: f64) {
        self.evaluations += 1;
        if discrepancy.is_nan() || discrepancy > self.tolerance {
            self.failures += 1;
        }
        if discrepancy.is_nan() || discrepancy > self.max {
            self.max = discrepancy;
        }
    }

    fn record_bool(&mut self, ok: bool) {
        self.record(if ok { 0.0 } else { 1.0 });
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            passed: self.failures == 0,
            name: self.name,
            evaluations: self.evaluations,
            failures: self.failures,
            max_discrepancy: self.max,
            tolerance: self.tolerance,
        }
    }
}

/// Named checks kept in first-use order.
#[derive(Debug, Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn get(&mut self, name: &str, tolerance: f64) -> &mut Check {
        let i = match self.0.iter().position(|c| c.name == name) {
            Some(i) => i,
            None => {
                self.0.push(Check::new(name, tolerance));
                self.0.len() - 1
            }
        };
        &mut self.0[i]
    }

    fn record(&mut self, name: &str, tolerance: f64, discrepancy: f64) {
        self.get(name, tolerance).record(discrepancy);
    }

    fn record_bool(&mut self, name: &str, ok: bool) {
        self.get(name, 0.0).record_bool(ok);
    }

    fn finish(self) -> Vec<CheckResult> {
        self.0.into_iter().map(Check::finish).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: StructureKind,
    pub draws: usize,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub draws: usize,
    pub tolerances: Tolerances,
    pub kinds: Vec<KindSummary>,
    pub corollaries: Vec<CheckResult>,
    pub passed: bool,
}

impl VerifySummary {
    pub fn failed_checks(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in &self.kinds {
            for c in k.checks.iter().filter(|c| !c.passed) {
                out.push(format!("{}: {}", k.kind, c.name));
            }
        }
        for c in self.corollaries.iter().filter(|c| !c.passed) {
            out.push(c.name.clone());
        }
        out
    }
}

/// Random generator for the draws of one structure.
pub fn kind_rng(kind: StructureKind, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = StructureKind::ALL
        .iter()
        .position(|&k| k == kind)
        .expect("kind listed") as u64;
    rng.set_stream(stream);
    rng
}

fn unit(rng: &mut impl Rng) -> f64 {
    LOW + (HIGH - LOW) * rng.random::<f64>()
}

fn pair(rng: &mut impl Rng) -> BinaryConditional {
    let p0 = unit(rng);
    BinaryConditional::new(p0, unit(rng))
}

/// One strict parameter set for `kind`, in the draw order documented on the
/// module.
pub fn random_params(kind: StructureKind, rng: &mut impl Rng) -> ValidatedParams {
    let p_left = unit(rng);
    let p_right = (kind != StructureKind::Nabla).then(|| unit(rng));
    let p00 = unit(rng);
    let p01 = unit(rng);
    let p10 = unit(rng);
    let p11 = unit(rng);
    let p_x_given_a = kind.has_left_a().then(|| pair(rng));
    let p_y_given_b = (kind.has_right_b() || kind == StructureKind::Nabla).then(|| pair(rng));
    let p_d_given_c = kind.has_child_d().then(|| pair(rng));
    StructureParams {
        kind,
        p_left,
        p_right,
        p_c_given: ColliderTable::new(p00, p01, p10, p11),
        p_x_given_a,
        p_y_given_b,
        p_d_given_c,
    }
    .validate(true)
    .expect("draws in [0.05, 0.95] are strict")
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn stratum(var: Var, level: Level) -> Conditioning {
    Conditioning::Stratum { var, level }
}

fn oracle(table: &JointTable, conditioning: Conditioning, scale: Scale) -> f64 {
    joint::bias(table, conditioning, scale)
        .expect("strict draws have defined measures")
        .value
}

/// The embedded V (or Y) structure of an extended structure, as its own
/// parameter set.
fn embedded_params(params: &ValidatedParams) -> ValidatedParams {
    let core = params.core();
    let kind = if core.child.is_some() {
        StructureKind::Y
    } else {
        StructureKind::V
    };
    StructureParams {
        kind,
        p_left: core.p_left,
        p_right: Some(core.p_right),
        p_c_given: core.collider,
        p_x_given_a: None,
        p_y_given_b: None,
        p_d_given_c: core.child,
    }
    .validate(true)
    .expect("embedded core of strict params is strict")
}

fn check_draw(params: &ValidatedParams, tol: &Tolerances, checks: &mut Checks) {
    let kind = params.kind();
    let table = build_joint(params);
    let gvar = kind.conditioning_var();
    let (abs, rel) = (tol.abs, tol.rel);

    checks.record("normalization", 1e-14, (table.total() - 1.0).abs());
    let min_mass = table.mass.iter().cloned().fold(f64::INFINITY, f64::min);
    checks.record("nonnegativity", 0.0, (-min_mass).max(0.0));

    if kind != StructureKind::Nabla {
        let (l, r) = (kind.left_parent(), kind.right_parent());
        let parents = table.cov_given(l, r, None).expect("parents present");
        let xy = table.cov_given(Var::X, Var::Y, None).expect("X, Y present");
        checks.record("marginal_independence", 1e-14, parents.abs().max(xy.abs()));
    }

    // Cross-product covariance and RD = cov / var in every stratum of C (and D).
    for g_var in [Var::C, Var::D].into_iter().filter(|&v| table.contains(v)) {
        for level in Level::BOTH {
            let given = Some((g_var, level));
            let cov = table.cov_given(Var::X, Var::Y, given).expect("stratum");
            let cross = table
                .cov_cross_product(Var::X, Var::Y, g_var, level)
                .expect("stratum");
            checks.record("cov_cross_product", abs, (cov - cross).abs());
            let rd = joint::cond_measure(&table, Scale::Rd, Some(stratum(g_var, level)))
                .expect("stratum")
                .value;
            let var_x = table.var_given(Var::X, given).expect("stratum");
            checks.record("rd_cov_ratio", abs, (rd - cov / var_x).abs());
        }
    }

    // The regression coefficient is a weighted average of stratum RDs.
    let lm = joint::lm_coefficient(&table, gvar).expect("non-singular");
    let averaged: f64 = Level::BOTH
        .iter()
        .map(|&level| {
            let w = table.lm_weight(gvar, level).expect("weights");
            let rd = joint::cond_measure(&table, Scale::Rd, Some(stratum(gvar, level)))
                .expect("stratum")
                .value;
            w * rd
        })
        .sum();
    checks.record("lm_weighted_average", abs, (lm - averaged).abs());

    // Weight normaliser symmetric in its two variables.
    let mut asymmetry: f64 = 0.0;
    for &f in &table.order {
        for &gv in table.order.iter().filter(|&&v| v != f) {
            let a = table.triple_product_sum(f, gv).expect("vars present");
            let b = table.triple_product_sum(gv, f).expect("vars present");
            asymmetry = asymmetry.max((a - b).abs());
        }
    }
    checks.record("triple_sum_symmetry", abs, asymmetry);

    let lm_oracle = oracle(&table, Conditioning::LinearModel, Scale::LmCoef);

    match kind {
        StructureKind::Nabla => {
            for c in Level::BOTH {
                let closed = closedform::nabla_bias_or(params, c).expect("strict").value;
                let orc = oracle(&table, stratum(Var::C, c), Scale::Or);
                checks.record("closed_vs_oracle.nabla_or", rel, rel_diff(closed, orc));
                let sign = signmap::sign_extended(params, stratum(Var::C, c)).expect("stratum");
                if (orc - 1.0).abs() > 1e-9 {
                    checks.record_bool("sign_rule.stratum", sign == Sign::of(orc - 1.0, 0.0));
                }
            }
        }
        _ => {
            for level in Level::BOTH {
                let cond = stratum(gvar, level);
                let mut oracle_values = Vec::new();
                for scale in [Scale::Cov, Scale::Rd, Scale::Or] {
                    let orc = oracle(&table, cond, scale);
                    oracle_values.push(if scale == Scale::Or { orc.ln() } else { orc });
                    let closed = match kind {
                        StructureKind::V => Some(closedform::v_bias_stratum(params, level, scale)),
                        StructureKind::Y => Some(closedform::y_bias_stratum(params, level, scale)),
                        _ if scale != Scale::Or => {
                            Some(closedform::extended_bias_stratum(params, level, scale))
                        }
                        _ => None,
                    };
                    if let Some(closed) = closed {
                        let closed = closed.expect("strict").value;
                        match scale {
                            Scale::Or => {
                                checks.record("closed_vs_oracle.or", rel, rel_diff(closed, orc))
                            }
                            Scale::Cov => {
                                checks.record("closed_vs_oracle.cov", abs, (closed - orc).abs())
                            }
                            _ => checks.record("closed_vs_oracle.rd", abs, (closed - orc).abs()),
                        }
                    }
                }
                // Same sign on every scale.
                let smallest = oracle_values
                    .iter()
                    .map(|v| v.abs())
                    .fold(f64::INFINITY, f64::min);
                if smallest > abs {
                    let signs: Vec<Sign> =
                        oracle_values.iter().map(|&v| Sign::of(v, 0.0)).collect();
                    checks.record_bool(
                        "sign_scale_invariance",
                        signs.windows(2).all(|w| w[0] == w[1]),
                    );
                }
                let sign = signmap::sign_extended(params, cond).expect("stratum");
                if oracle_values[0].abs() > 1e-9 {
                    checks
                        .record_bool("sign_rule.stratum", sign == Sign::of(oracle_values[0], 0.0));
                }
            }

            if kind == StructureKind::V {
                let v_lm = closedform::v_bias_lm(params).expect("strict").value;
                checks.record("closed_vs_oracle.lm_v", abs, (v_lm - lm_oracle).abs());
            }
            let general = general_lm_bias(params).expect("strict").value;
            checks.record("closed_vs_oracle.lm", abs, (general - lm_oracle).abs());
            if lm_oracle.abs() > 1e-9 {
                let sign = signmap::sign_extended(params, Conditioning::LinearModel).expect("lm");
                checks.record_bool("sign_rule.lm", sign == Sign::of(lm_oracle, 0.0));
            }

            let p_c1 = table.prob(&[(Var::C, Level::One)]).expect("C present");
            let collider = params.collider();
            let h_alt = (1.0 - p_c1) * g(collider, Level::One) + p_c1 * g(collider, Level::Zero);
            checks.record(
                "h_identity",
                abs,
                (closedform::h(params).expect("not Nabla") - h_alt).abs(),
            );

            let phi = phi_closed(params).expect("not Nabla");
            checks.record(
                "phi_closed_vs_definition",
                abs,
                (phi - phi_definitional(&table).expect("phi")).abs(),
            );
        }
    }

    if kind.has_left_a() {
        for level in Level::BOTH {
            let given = Some((gvar, level));
            let vr_joint = table.var_given(Var::A, given).expect("A present")
                / table.var_given(Var::X, given).expect("stratum");
            checks.record(
                "variance_ratio",
                abs,
                (variance_ratio(params, level) - vr_joint).abs(),
            );
        }
    }

    if kind.is_extended() {
        // Extended bias from the oracle against embedded bias from the oracle
        // times the extension factors.
        let embedded = build_joint(&embedded_params(params));
        for level in Level::BOTH {
            let cond = stratum(gvar, level);
            let given = Some((gvar, level));
            let vr = if kind.has_left_a() {
                table.var_given(Var::A, given).expect("A")
                    / table.var_given(Var::X, given).expect("stratum")
            } else {
                1.0
            };
            let paths = params.rd_left() * params.rd_right();
            for (scale, extra) in [(Scale::Cov, 1.0), (Scale::Rd, vr)] {
                let ext = oracle(&table, cond, scale);
                let em = oracle(&embedded, cond, scale);
                checks.record(
                    "extension_factorization",
                    abs,
                    (ext - paths * em * extra).abs(),
                );
            }
        }
    }

    if let Some(child) = params.d_given_c() {
        let (g1, g0) = (
            g(params.collider(), Level::One),
            g(params.collider(), Level::Zero),
        );
        for d in Level::BOTH {
            let dd = child.for_level(d);
            let direct = (dd.p1 - dd.p0) * (dd.p1 * g1 - dd.p0 * g0);
            let rule =
                signmap::sign_y_stratum(params.collider(), &child, d).expect("g not both zero");
            if direct.abs() > 1e-9 {
                checks.record_bool("y_case_rule", rule == Sign::of(direct, 0.0));
            }
        }
    }

    if kind == StructureKind::Y {
        for d in Level::BOTH {
            let relation = closedform::y_embedded_relation(params, d).expect("stratum");
            let orc = oracle(&table, stratum(Var::D, d), Scale::Cov);
            checks.record("y_embedded_relation", abs, (relation - orc).abs());
        }
    }

    if kind == StructureKind::V {
        check_v_corollaries(params.collider(), &table, lm_oracle, checks);
    }
}

fn check_v_corollaries(collider: &ColliderTable, table: &JointTable, lm: f64, checks: &mut Checks) {
    let s = |c: Level| Sign::of(oracle(table, stratum(Var::C, c), Scale::Cov), ABS_TOL);
    let (s1, s0) = (s(Level::One), s(Level::Zero));
    match classify_effects(collider).pattern {
        Pattern::BothPositive | Pattern::BothNegative => {
            checks.record_bool(
                "same_direction_negative_stratum",
                s1 == Sign::Negative || s0 == Sign::Negative,
            );
            checks.record_bool("same_direction_lm_negative", lm < 0.0);
        }
        Pattern::OppositeSigns => {
            checks.record_bool(
                "opposite_direction_positive_stratum",
                s1 == Sign::Positive || s0 == Sign::Positive,
            );
            checks.record_bool("opposite_direction_lm_positive", lm > 0.0);
        }
        p if p.is_qualitative() => {
            checks.record_bool(
                "qualitative_opposite_strata",
                s1 != Sign::Zero && s1 == s0.flip(),
            );
        }
        _ => {}
    }
}

/// Runs every applicable check on `draws` random strict draws of `kind`.
pub fn verify_kind(kind: StructureKind, draws: usize, seed: u64, tol: &Tolerances) -> KindSummary {
    let mut rng = kind_rng(kind, seed);
    let mut checks = Checks::default();
    for _ in 0..draws {
        let params = random_params(kind, &mut rng);
        check_draw(&params, tol, &mut checks);
    }
    let checks = checks.finish();
    KindSummary {
        kind,
        draws,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

/// Draws V parameters until the collider table has a pattern accepted by
/// `premise`.
fn draw_v_with(rng: &mut impl Rng, premise: impl Fn(Pattern) -> bool) -> ValidatedParams {
    loop {
        let p = random_params(StructureKind::V, rng);
        if premise(classify_effects(p.collider()).pattern) {
            return p;
        }
    }
}

/// The corollaries, each on `draws` draws built to satisfy its premise.
pub fn corollary_suite(draws: usize, seed: u64, tol: &Tolerances) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(StructureKind::ALL.len() as u64);
    let mut checks = Checks::default();
    let signs = |p: &ValidatedParams| {
        let t = build_joint(p);
        let s = |c: Level| Sign::of(oracle(&t, stratum(Var::C, c), Scale::Cov), ABS_TOL);
        (
            s(Level::One),
            s(Level::Zero),
            oracle(&t, Conditioning::LinearModel, Scale::LmCoef),
        )
    };
    for _ in 0..draws {
        let p = draw_v_with(&mut rng, Pattern::is_same_direction);
        let (s1, s0, _) = signs(&p);
        checks.record_bool(
            "same_direction_negative_stratum",
            s1 == Sign::Negative || s0 == Sign::Negative,
        );
    }
    for _ in 0..draws {
        let p = draw_v_with(&mut rng, |pat| pat == Pattern::OppositeSigns);
        let (s1, s0, _) = signs(&p);
        checks.record_bool(
            "opposite_direction_positive_stratum",
            s1 == Sign::Positive || s0 == Sign::Positive,
        );
    }
    for _ in 0..draws {
        let p = draw_v_with(&mut rng, Pattern::is_qualitative);
        let (s1, s0, _) = signs(&p);
        checks.record_bool(
            "qualitative_opposite_strata",
            s1 != Sign::Zero && s1 == s0.flip(),
        );
    }
    for _ in 0..draws {
        let p = random_params(StructureKind::Y, &mut rng);
        let t = build_joint(&p);
        for d in Level::BOTH {
            let relation = closedform::y_embedded_relation(&p, d).expect("stratum");
            let orc = oracle(&t, stratum(Var::D, d), Scale::Cov);
            checks.record("y_embedded_relation", tol.abs, (relation - orc).abs());
        }
    }
    for _ in 0..draws {
        let p = draw_v_with(&mut rng, |pat| {
            pat.is_same_direction() || pat == Pattern::OppositeSigns
        });
        let (_, _, lm) = signs(&p);
        let expected = if classify_effects(p.collider()).pattern == Pattern::OppositeSigns {
            Sign::Positive
        } else {
            Sign::Negative
        };
        checks.record_bool("lm_sign_by_direction", Sign::of(lm, 0.0) == expected);
    }
    checks.finish()
}

/// For `0 < a' < a <= b < b'` with `a' b' = a b`: `a' + b' > a + b`.
/// Checked on `n` random quadruples; returns the smallest margin
/// `(a' + b') - (a + b)` seen.
pub fn spread_sum_min_margin(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_margin = f64::INFINITY;
    for _ in 0..n {
        let mut v = [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ];
        v.sort_by(f64::total_cmp);
        let [a_lo, a, b] = v;
        if a_lo <= 0.0 || a_lo >= a {
            continue;
        }
        let b_hi = a * b / a_lo;
        min_margin = min_margin.min((a_lo + b_hi) - (a + b));
    }
    min_margin
}

/// Runs [`verify_kind`] for each kind and the corollary suite.
pub fn verify(kinds: &[StructureKind], draws: usize, seed: u64, tol: Tolerances) -> VerifySummary {
    let kinds: Vec<KindSummary> = kinds
        .iter()
        .map(|&k| {
            log::info!("verifying {k} on {draws} draws");
            verify_kind(k, draws, seed, &tol)
        })
        .collect();
    let mut corollaries = corollary_suite(draws, seed, &tol);
    let margin = spread_sum_min_margin(draws.max(1) * 10, seed);
    corollaries.push(CheckResult {
        name: "spread_sum_inequality".into(),
        evaluations: draws.max(1) * 10,
        failures: usize::from(margin <= 0.0),
        max_discrepancy: (-margin).max(0.0),
        tolerance: 0.0,
        passed: margin > 0.0,
    });
    VerifySummary {
        seed,
        draws,
        tolerances: tol,
        passed: kinds.iter().all(|k| k.passed) && corollaries.iter().all(|c| c.passed),
        kinds,
        corollaries,
    }
}
