//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always show in `cargo test` output.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use collider_bias::closedform::{self, g, Sign, ABS_TOL, OR_REL_TOL};
use collider_bias::joint::{build_joint, sample};
use collider_bias::signmap::{classify_effects, Pattern};
use collider_bias::structures::{
    BiasQuery, ColliderTable, Level, Scale, StructureKind, StructureParams, ValidatedParams, Var,
};
use collider_bias::verify::{self, CheckResult, KindSummary, Tolerances};

const SEED: u64 = 20_240_917;
const DRAWS: usize = 1000;

type Outcome = Result<String, String>;

fn check(name: &str, results: &[(&KindSummary, &CheckResult)]) -> Result<(), String> {
    for (k, c) in results {
        if !c.passed {
            return Err(format!(
                "{} {name}: {} failures, max {:e} > {:e}",
                k.kind, c.failures, c.max_discrepancy, c.tolerance
            ));
        }
        if c.evaluations == 0 {
            return Err(format!("{} {name}: never evaluated", k.kind));
        }
    }
    Ok(())
}

fn find<'a>(kinds: &'a [KindSummary], kind: StructureKind, name: &str) -> Option<&'a CheckResult> {
    kinds
        .iter()
        .find(|k| k.kind == kind)
        .and_then(|k| k.checks.iter().find(|c| c.name == name))
}

fn require(kinds: &[KindSummary], pairs: &[(StructureKind, &str)]) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for &(kind, name) in pairs {
        let c = find(kinds, kind, name).ok_or_else(|| format!("{kind}: `{name}` not run"))?;
        let k = kinds.iter().find(|k| k.kind == kind).unwrap();
        check(name, &[(k, c)])?;
        worst = worst.max(c.max_discrepancy);
    }
    Ok(worst)
}

fn oracle_equivalence(kinds: &[KindSummary], elapsed: Duration) -> Outcome {
    use StructureKind::*;
    let mut pairs = Vec::new();
    for s in ["cov", "rd", "or", "lm_v", "lm"] {
        pairs.push((V, format!("closed_vs_oracle.{s}")));
    }
    pairs.push((Nabla, "closed_vs_oracle.nabla_or".to_string()));
    for s in ["cov", "rd", "or", "lm"] {
        pairs.push((Y, format!("closed_vs_oracle.{s}")));
    }
    for k in [M, LeftM, RightM, LongM, LeftLongM, RightLongM] {
        for s in ["cov", "rd", "lm"] {
            pairs.push((k, format!("closed_vs_oracle.{s}")));
        }
    }
    let pairs: Vec<(StructureKind, &str)> = pairs.iter().map(|(k, s)| (*k, s.as_str())).collect();
    let worst = require(kinds, &pairs)?;
    if kinds.iter().any(|k| k.draws != DRAWS) {
        return Err("wrong draw count".into());
    }
    if elapsed > Duration::from_secs(30) {
        return Err(format!("took {elapsed:?}, limit 30 s"));
    }
    Ok(format!(
        "9 kinds x {DRAWS} draws, {} closed forms, worst discrepancy {worst:.1e}, {:.1} s",
        pairs.len(),
        elapsed.as_secs_f64()
    ))
}

fn identity_suite(kinds: &[KindSummary]) -> Outcome {
    let mut worst: f64 = 0.0;
    for k in kinds {
        for name in [
            "cov_cross_product",
            "rd_cov_ratio",
            "lm_weighted_average",
            "triple_sum_symmetry",
        ] {
            worst = worst.max(require(kinds, &[(k.kind, name)])?);
        }
    }
    let margin = verify::spread_sum_min_margin(10_000, SEED);
    if margin.is_nan() || margin <= 0.0 {
        return Err(format!("spread-sum margin {margin:e}"));
    }
    Ok(format!(
        "covariance, RD, regression and normaliser identities worst {worst:.1e} on every draw; spread-sum inequality on 10^4 quadruples, min margin {margin:.1e}"
    ))
}

fn corollary_suite() -> Outcome {
    let results = verify::corollary_suite(DRAWS, SEED, &Tolerances::default());
    let expected = [
        ("same_direction_negative_stratum", DRAWS),
        ("opposite_direction_positive_stratum", DRAWS),
        ("qualitative_opposite_strata", DRAWS),
        ("y_embedded_relation", 2 * DRAWS),
        ("lm_sign_by_direction", DRAWS),
    ];
    for (name, n) in expected {
        let c = results
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| format!("`{name}` not run"))?;
        if !c.passed || c.evaluations != n {
            return Err(format!("{name}: {c:?}"));
        }
    }
    if results.iter().any(|c| !c.passed) {
        return Err("a corollary failed".into());
    }
    Ok(format!(
        "{} corollaries on {DRAWS} targeted draws each",
        expected.len()
    ))
}

fn auxiliary_forms(kinds: &[KindSummary]) -> Outcome {
    use StructureKind::*;
    let mut pairs = Vec::new();
    for k in StructureKind::ALL.into_iter().filter(|&k| k != Nabla) {
        pairs.push((k, "phi_closed_vs_definition"));
    }
    for k in StructureKind::ALL.into_iter().filter(|k| k.has_left_a()) {
        pairs.push((k, "variance_ratio"));
    }
    let worst = require(kinds, &pairs)?;
    Ok(format!(
        "phi for 8 kinds and VR for 3 kinds, worst {worst:.1e}"
    ))
}

fn fig2_point() -> ValidatedParams {
    StructureParams {
        kind: StructureKind::V,
        p_left: 0.5,
        p_right: Some(0.5),
        p_c_given: ColliderTable::new(0.15, 0.25, 0.25, 0.75),
        p_x_given_a: None,
        p_y_given_b: None,
        p_d_given_c: None,
    }
    .validate(true)
    .expect("strict")
}

fn reference_point() -> Outcome {
    let p = fig2_point();
    let g1 = g(p.collider(), Level::One);
    if (g1 - 0.05).abs() > ABS_TOL {
        return Err(format!("g(1) = {g1}"));
    }
    let or = closedform::compute(&p, &BiasQuery::stratum(Var::C, Level::One, Scale::Or))
        .map_err(|e| e.to_string())?;
    if (or.value - 1.8).abs() / 1.8 > OR_REL_TOL {
        return Err(format!("OR factor {}", or.value));
    }
    for scale in [Scale::Cov, Scale::Rd, Scale::Rr, Scale::Or] {
        let r = closedform::compute(&p, &BiasQuery::stratum(Var::C, Level::One, scale))
            .map_err(|e| e.to_string())?;
        if r.sign != Sign::Positive {
            return Err(format!("C=1 sign on {scale} is {}", r.sign));
        }
    }
    let lm = closedform::compute(&p, &BiasQuery::linear_model()).map_err(|e| e.to_string())?;
    let h = closedform::h(&p).map_err(|e| e.to_string())?;
    if lm.sign != Sign::Negative || Sign::of(h, ABS_TOL) != Sign::Negative {
        return Err(format!("lm {} h {h}", lm.value));
    }
    if (h + 0.09).abs() > ABS_TOL || (lm.value + 9.0 / 82.0).abs() > ABS_TOL {
        return Err(format!("h = {h}, lm = {}", lm.value));
    }
    Ok(format!(
        "g(1) = {g1:.4}, OR = {:.4}, h = {h:.4}, lm = {:.6}",
        or.value, lm.value
    ))
}

fn containment() -> Outcome {
    let (a, b) = (0.15, 0.75);
    let n = 200;
    let step = (b - a) / n as f64;
    let near = |x: f64, y: f64| {
        [(a, b), (b, a)]
            .iter()
            .any(|&(u, v)| (x - u).abs() <= step && (y - v).abs() <= step)
    };
    let (mut premise, mut zeros) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            let p10 = a + (i as f64 + 0.5) * step;
            let p01 = a + (j as f64 + 0.5) * step;
            let e = classify_effects(&ColliderTable::new(a, p01, p10, b));
            if e.pattern != Pattern::BothPositive || e.canonical_level != Level::One {
                return Err(format!("({p10}, {p01}) classified {:?}", e.pattern));
            }
            let i = e.interaction;
            if i.or == Sign::Positive && i.rd == Sign::Positive {
                continue;
            }
            premise += 1;
            match i.rr_c {
                Sign::Positive => return Err(format!("RR(c) positive at ({p10}, {p01})")),
                Sign::Zero if !near(p10, p01) => {
                    return Err(format!(
                        "RR(c) zero away from the intersections at ({p10}, {p01})"
                    ))
                }
                Sign::Zero => zeros += 1,
                Sign::Negative => {}
            }
        }
    }
    if premise == 0 {
        return Err("no cell has a non-positive OR or RD interaction".into());
    }
    Ok(format!(
        "{premise} of {} cells meet the premise, all with RR(c) <= 0 ({zeros} zero)",
        n * n
    ))
}

fn monte_carlo() -> Outcome {
    let p = fig2_point();
    let start = Instant::now();
    let s = sample(&p, 1_000_000, SEED).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let dev = s.max_deviation(&build_joint(&p));
    if dev > 0.005 {
        return Err(format!("max deviation {dev}"));
    }
    if elapsed > Duration::from_secs(10) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "10^6 samples, max cell deviation {dev:.5}, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn run_bin(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_collider-bias"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let verify = [
        "verify", "--kind", "LongM", "--draws", "1000", "--seed", "7", "--format", "json",
    ];
    let grid = [
        "grid",
        "--family",
        "fig3",
        "--p00",
        "0.15",
        "--p11",
        "0.75",
        "--resolution",
        "200",
    ];
    for args in [&verify[..], &grid[..]] {
        let first = run_bin(args)?;
        let second = run_bin(args)?;
        if first != second || first.is_empty() {
            return Err(format!("{} output differs between runs", args[0]));
        }
    }
    Ok("verify and grid outputs byte-identical across runs".into())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let kinds: Vec<KindSummary> = StructureKind::ALL
        .iter()
        .map(|&k| verify::verify_kind(k, DRAWS, SEED, &Tolerances::default()))
        .collect();
    let elapsed = start.elapsed();

    let outcomes: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence(&kinds, elapsed)),
        ("identity suite", identity_suite(&kinds)),
        ("corollary suite", corollary_suite()),
        ("auxiliary closed forms", auxiliary_forms(&kinds)),
        ("reference-point regression", reference_point()),
        ("containment grid", containment()),
        ("monte carlo smoke", monte_carlo()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in outcomes.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
