//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a check or tolerance failed, 2 bad input.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::closedform::{self, BiasReport, Sign, ABS_TOL, OR_REL_TOL};
use crate::error::{Error, Result};
use crate::joint::{self, build_joint};
use crate::signmap::{self, classify_effects, EffectPattern, GridFamily, GridFixed, SignGrid};
use crate::structures::{
    BiasQuery, BinaryConditional, ColliderTable, Conditioning, Level, Scale, StructureKind,
    StructureParams, ValidatedParams, Var,
};
use crate::verify::{self, Tolerances, VerifySummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "collider-bias",
    version,
    about = "Exact collider bias for binary causal structures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bias on one scale, checked against the oracle.
    Compute(ComputeArgs),
    /// Sign of the bias from the sign rules, checked against the oracle.
    Sign(ComputeArgs),
    /// Randomized closed-form versus oracle checks.
    Verify(VerifyArgs),
    /// Forward Monte Carlo sample of a structure.
    Sample(SampleArgs),
    /// Sign map over (P(C=1|1,0), P(C=1|0,1)).
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub kind: Option<StructureKind>,
    /// JSON parameter file; flags override its fields.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long)]
    pub p_left: Option<f64>,
    #[arg(long)]
    pub p_right: Option<f64>,
    /// P(C=1 | left, right) as `p00,p01,p10,p11`.
    #[arg(long, value_parser = parse_table)]
    pub p_c: Option<ColliderTable>,
    /// `p0,p1`.
    #[arg(long, value_parser = parse_pair)]
    pub p_x_given_a: Option<BinaryConditional>,
    /// `p0,p1`.
    #[arg(long, value_parser = parse_pair)]
    pub p_y_given_b: Option<BinaryConditional>,
    /// `p0,p1`.
    #[arg(long, value_parser = parse_pair)]
    pub p_d_given_c: Option<BinaryConditional>,
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = "cov")]
    pub scale: Scale,
    /// `C=1`, `D=0`, ... Defaults to level 1 of the structure's
    /// conditioning variable.
    #[arg(long, value_parser = parse_stratum, conflicts_with = "lm")]
    pub stratum: Option<(Var, Level)>,
    /// Linear-model adjustment instead of stratification.
    #[arg(long)]
    pub lm: bool,
    #[arg(long, value_parser = parse_tolerance)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    pub kind: Option<StructureKind>,
    /// Every structure.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_tolerance)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of samples.
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail when some cell frequency is further than this from its mass.
    #[arg(long, value_parser = parse_tolerance)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub family: GridFamily,
    /// P(C=1|0,0).
    #[arg(long)]
    pub p00: f64,
    /// P(C=1|1,1); at least `p00`.
    #[arg(long)]
    pub p11: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_left: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_right: f64,
    /// `p0,p1`; required for fig4.
    #[arg(long, value_parser = parse_pair)]
    pub p_d_given_c: Option<BinaryConditional>,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated numbers, got {}",
            v.len()
        ));
    }
    Ok(v)
}

pub fn parse_pair(s: &str) -> std::result::Result<BinaryConditional, String> {
    let v = parse_floats(s, 2)?;
    Ok(BinaryConditional::new(v[0], v[1]))
}

pub fn parse_table(s: &str) -> std::result::Result<ColliderTable, String> {
    let v = parse_floats(s, 4)?;
    Ok(ColliderTable::new(v[0], v[1], v[2], v[3]))
}

pub fn parse_tolerance(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(t) if t.is_finite() && t >= 0.0 => Ok(t),
        Ok(t) => Err(format!(
            "tolerance must be finite and non-negative, got {t}"
        )),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_stratum(s: &str) -> std::result::Result<(Var, Level), String> {
    let (var, level) = s
        .split_once('=')
        .ok_or_else(|| format!("expected VAR=LEVEL, got `{s}`"))?;
    let var: Var = var.parse().map_err(|e: Error| e.to_string())?;
    let level = match level.trim() {
        "0" => Level::Zero,
        "1" => Level::One,
        other => return Err(format!("level must be 0 or 1, got `{other}`")),
    };
    Ok((var, level))
}

impl ParamArgs {
    /// File contents (if any) with the flags laid over them.
    pub fn resolve(&self) -> Result<StructureParams> {
        let mut base = match &self.file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                Some(StructureParams::from_json(&text)?)
            }
            None => None,
        };
        let kind = self
            .kind
            .or(base.as_ref().map(|b| b.kind))
            .ok_or_else(|| Error::Parse("`--kind` or `--file` is required".into()))?;
        let mut p = match base.take() {
            Some(mut b) => {
                b.kind = kind;
                b
            }
            None => StructureParams {
                kind,
                p_left: self.p_left.ok_or_else(|| Error::MissingField {
                    kind,
                    field: "p_left".into(),
                })?,
                p_right: None,
                p_c_given: self.p_c.ok_or_else(|| Error::MissingField {
                    kind,
                    field: "p_c_given".into(),
                })?,
                p_x_given_a: None,
                p_y_given_b: None,
                p_d_given_c: None,
            },
        };
        if let Some(v) = self.p_left {
            p.p_left = v;
        }
        if let Some(v) = self.p_right {
            p.p_right = Some(v);
        }
        if let Some(v) = self.p_c {
            p.p_c_given = v;
        }
        if let Some(v) = self.p_x_given_a {
            p.p_x_given_a = Some(v);
        }
        if let Some(v) = self.p_y_given_b {
            p.p_y_given_b = Some(v);
        }
        if let Some(v) = self.p_d_given_c {
            p.p_d_given_c = Some(v);
        }
        Ok(p)
    }
}

impl ComputeArgs {
    fn query(&self, kind: StructureKind) -> BiasQuery {
        if self.lm {
            return BiasQuery::linear_model();
        }
        let (var, level) = self
            .stratum
            .unwrap_or((kind.conditioning_var(), Level::One));
        BiasQuery::stratum(var, level, self.scale)
    }
}

fn tolerances(tolerance: Option<f64>) -> Tolerances {
    match tolerance {
        Some(t) => Tolerances { abs: t, rel: t },
        None => Tolerances {
            abs: ABS_TOL,
            rel: OR_REL_TOL,
        },
    }
}

/// Output of `compute`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeDocument {
    pub kind: StructureKind,
    pub report: BiasReport,
    pub oracle: f64,
    pub abs_discrepancy: f64,
    pub rel_discrepancy: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Output of `sign`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignDocument {
    pub kind: StructureKind,
    pub conditioning: Conditioning,
    pub scale: Scale,
    /// From the sign rules; absent when no rule covers the query.
    pub rule: Option<Sign>,
    pub oracle: Sign,
    pub oracle_value: f64,
    pub agree: bool,
    pub effects: EffectPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCell {
    /// One `0`/`1` per variable of `order`.
    pub values: Vec<Level>,
    pub count: u64,
    pub frequency: f64,
    pub exact: f64,
}

/// Output of `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDocument {
    pub kind: StructureKind,
    pub n: u64,
    pub seed: u64,
    pub order: Vec<Var>,
    pub cells: Vec<SampleCell>,
    pub max_deviation: f64,
}

pub fn run_compute(args: &ComputeArgs) -> Result<ComputeDocument> {
    let raw = args.params.resolve()?;
    let params = raw.validate(false)?;
    let query = args.query(params.kind());
    let report = closedform::compute(&params, &query)?;
    let oracle = closedform::oracle_report(&params, &query)?.value;
    let abs_discrepancy = (report.value - oracle).abs();
    let rel_discrepancy =
        abs_discrepancy / report.value.abs().max(oracle.abs()).max(f64::MIN_POSITIVE);
    let tol = tolerances(args.tolerance);
    let (tolerance, within_tolerance) = if query.scale.is_ratio() {
        (tol.rel, rel_discrepancy <= tol.rel)
    } else {
        (tol.abs, abs_discrepancy <= tol.abs)
    };
    Ok(ComputeDocument {
        kind: params.kind(),
        report,
        oracle,
        abs_discrepancy,
        rel_discrepancy,
        tolerance,
        within_tolerance,
    })
}

pub fn run_sign(args: &ComputeArgs) -> Result<SignDocument> {
    let params = args.params.resolve()?.validate(false)?;
    let query = args.query(params.kind());
    query.check(params.kind())?;
    // The Nabla rule is the sign of its odds-ratio factor.
    let has_rule = params.kind() != StructureKind::Nabla || query.scale == Scale::Or;
    let rule = match signmap::sign_extended(&params, query.conditioning) {
        Ok(s) if has_rule => Some(s),
        Ok(_) => None,
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let oracle = closedform::oracle_report(&params, &query)?;
    let agree = rule.is_none_or(|s| s == oracle.sign);
    Ok(SignDocument {
        kind: params.kind(),
        conditioning: query.conditioning,
        scale: query.scale,
        rule,
        oracle: oracle.sign,
        oracle_value: oracle.value,
        agree,
        effects: classify_effects(params.collider()),
    })
}

pub fn run_verify(args: &VerifyArgs) -> VerifySummary {
    let kinds: Vec<StructureKind> = match args.kind {
        Some(k) if !args.all => vec![k],
        _ => StructureKind::ALL.to_vec(),
    };
    verify::verify(&kinds, args.draws, args.seed, tolerances(args.tolerance))
}

pub fn run_sample(args: &SampleArgs) -> Result<SampleDocument> {
    let params: ValidatedParams = args.params.resolve()?.validate(false)?;
    let table = build_joint(&params);
    let s = joint::sample(&params, args.draws, args.seed)?;
    let freqs = s.frequencies();
    let cells = (0..s.counts.len())
        .map(|cell| SampleCell {
            values: (0..s.order.len())
                .map(|k| Level::from(cell >> k & 1 == 1))
                .collect(),
            count: s.counts[cell],
            frequency: freqs[cell],
            exact: table.mass[cell],
        })
        .collect();
    Ok(SampleDocument {
        kind: s.kind,
        n: s.n,
        seed: s.seed,
        max_deviation: s.max_deviation(&table),
        order: s.order,
        cells,
    })
}

pub fn run_grid(args: &GridArgs) -> Result<SignGrid> {
    let fixed = GridFixed {
        p00: args.p00,
        p11: args.p11,
        p_left: args.p_left,
        p_right: args.p_right,
        p_d_given_c: args.p_d_given_c,
    };
    signmap::emit_grid(args.family, &fixed, args.resolution)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn render_compute(doc: &ComputeDocument, format: Format) -> String {
    let r = &doc.report;
    match format {
        Format::Json => json(doc),
        Format::Csv => format!(
            "kind,conditioning,scale,value,sign,source,oracle,abs_discrepancy,rel_discrepancy,within_tolerance\n\
             {},{},{},{},{},{},{},{},{},{}\n",
            doc.kind,
            r.conditioning,
            r.scale,
            r.value,
            r.sign,
            source_name(r),
            doc.oracle,
            doc.abs_discrepancy,
            doc.rel_discrepancy,
            doc.within_tolerance
        ),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "structure   {}", doc.kind);
            let _ = writeln!(s, "bias        {} on {} scale", r.conditioning, r.scale);
            let _ = writeln!(s, "value       {}", r.value);
            let _ = writeln!(s, "sign        {}", r.sign);
            let _ = writeln!(s, "source      {}", source_name(r));
            for (name, v) in &r.factors {
                let _ = writeln!(s, "  {name:<12}{v}");
            }
            let _ = writeln!(s, "oracle      {}", doc.oracle);
            let _ = writeln!(
                s,
                "discrepancy {:e} abs, {:e} rel ({})",
                doc.abs_discrepancy,
                doc.rel_discrepancy,
                if doc.within_tolerance { "ok" } else { "FAILED" }
            );
            s
        }
    }
}

fn source_name(r: &BiasReport) -> &'static str {
    match r.source {
        closedform::Source::ClosedForm => "closed_form",
        closedform::Source::Oracle => "oracle",
    }
}

fn sign_name(s: Option<Sign>) -> String {
    s.map_or_else(|| "none".into(), |s| s.as_i8().to_string())
}

pub fn render_sign(doc: &SignDocument, format: Format) -> String {
    match format {
        Format::Json => json(doc),
        Format::Csv => format!(
            "kind,conditioning,scale,rule,oracle,oracle_value,agree,pattern\n{},{},{},{},{},{},{},{}\n",
            doc.kind,
            doc.conditioning,
            doc.scale,
            sign_name(doc.rule),
            doc.oracle.as_i8(),
            doc.oracle_value,
            doc.agree,
            serde_json::to_value(doc.effects.pattern)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        ),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "structure   {}", doc.kind);
            let _ = writeln!(s, "bias        {} on {} scale", doc.conditioning, doc.scale);
            let _ = writeln!(
                s,
                "rule        {}",
                doc.rule.map_or_else(|| "none".into(), |s| s.to_string())
            );
            let _ = writeln!(s, "oracle      {} ({})", doc.oracle, doc.oracle_value);
            let _ = writeln!(s, "pattern     {:?}", doc.effects.pattern);
            let _ = writeln!(s, "agree       {}", doc.agree);
            s
        }
    }
}

pub fn render_verify(summary: &VerifySummary, format: Format) -> String {
    match format {
        Format::Json => json(summary),
        Format::Csv => {
            let mut s =
                String::from("kind,check,evaluations,failures,max_discrepancy,tolerance,passed\n");
            for k in &summary.kinds {
                for c in &k.checks {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        k.kind,
                        c.name,
                        c.evaluations,
                        c.failures,
                        c.max_discrepancy,
                        c.tolerance,
                        c.passed
                    );
                }
            }
            for c in &summary.corollaries {
                let _ = writeln!(
                    s,
                    "-,{},{},{},{},{},{}",
                    c.name, c.evaluations, c.failures, c.max_discrepancy, c.tolerance, c.passed
                );
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "seed {} draws {}", summary.seed, summary.draws);
            let mut line = |kind: &str, c: &verify::CheckResult| {
                let _ = writeln!(
                    s,
                    "{} {:<6} {:<32} max {:.3e} (tol {:.0e}, {} evaluations)",
                    if c.passed { "ok  " } else { "FAIL" },
                    kind,
                    c.name,
                    c.max_discrepancy,
                    c.tolerance,
                    c.evaluations
                );
            };
            for k in &summary.kinds {
                for c in &k.checks {
                    line(k.kind.name(), c);
                }
            }
            for c in &summary.corollaries {
                line("-", c);
            }
            let _ = writeln!(
                s,
                "{}",
                if summary.passed {
                    "all checks passed"
                } else {
                    "some checks FAILED"
                }
            );
            s
        }
    }
}

pub fn render_sample(doc: &SampleDocument, format: Format) -> String {
    match format {
        Format::Json => json(doc),
        Format::Csv | Format::Text => {
            let mut s = String::new();
            if format == Format::Csv {
                let _ = writeln!(s, "# kind={}", doc.kind);
                let _ = writeln!(s, "# n={}", doc.n);
                let _ = writeln!(s, "# seed={}", doc.seed);
            } else {
                let _ = writeln!(s, "{} samples of {} (seed {})", doc.n, doc.kind, doc.seed);
            }
            let names: Vec<String> = doc.order.iter().map(Var::to_string).collect();
            let _ = writeln!(s, "{},count,frequency,exact", names.join(","));
            for c in &doc.cells {
                let vals: Vec<String> = c.values.iter().map(Level::to_string).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    vals.join(","),
                    c.count,
                    c.frequency,
                    c.exact
                );
            }
            if format == Format::Text {
                let _ = writeln!(s, "max deviation {}", doc.max_deviation);
            }
            s
        }
    }
}

pub fn render_grid(grid: &SignGrid, format: Format) -> String {
    match format {
        Format::Json => json(grid),
        Format::Csv | Format::Text => grid.to_csv(),
    }
}

fn emit(output: &OutputArgs, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Compute(a) => run_compute(a).and_then(|doc| {
            emit(
                &a.output,
                &render_compute(&doc, a.output.format.unwrap_or(Format::Text)),
            )?;
            Ok(doc.within_tolerance)
        }),
        Command::Sign(a) => run_sign(a).and_then(|doc| {
            emit(
                &a.output,
                &render_sign(&doc, a.output.format.unwrap_or(Format::Text)),
            )?;
            Ok(doc.agree)
        }),
        Command::Verify(a) => {
            let summary = run_verify(a);
            for f in summary.failed_checks() {
                log::warn!("check failed: {f}");
            }
            emit(
                &a.output,
                &render_verify(&summary, a.output.format.unwrap_or(Format::Text)),
            )
            .map(|_| summary.passed)
        }
        Command::Sample(a) => run_sample(a).and_then(|doc| {
            emit(
                &a.output,
                &render_sample(&doc, a.output.format.unwrap_or(Format::Text)),
            )?;
            Ok(a.tolerance.is_none_or(|t| doc.max_deviation <= t))
        }),
        Command::Grid(a) => run_grid(a).and_then(|grid| {
            emit(
                &a.output,
                &render_grid(&grid, a.output.format.unwrap_or(Format::Csv)),
            )?;
            Ok(true)
        }),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
