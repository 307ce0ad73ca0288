use num_rational::BigRational;
use num_traits::Zero;
use qwishart::fluctuations::{
    centered_moment_finite, centered_moment_limit, conditional_variance_check, statistic_limit_moments,
    FluctuationError, PolynomialStatistic,
};
use qwishart::montecarlo::{estimate_monomial, float_colors, McError, SamplerConfig};
use qwishart::mp::{verify_t3, MpError};
use qwishart::pairings::{enumerate_all, enumerate_color_preserving, PairingError};
use qwishart::polynomials::{format_rational, rational_from_json};
use qwishart::moments::{brute_force_q_moment, parse_pairs, q_wishart_moment, real_wishart_moment, table1};
use qwishart::{
    Coloring, EngineOptions, MatrixBindings, MomentError, MomentPolynomial, MomentValue, MonomialSpec, PairPartition,
    QParam,
};
use serde_json::{json, Value};

use crate::output::{poly_table, Report, Table};
use crate::{BindingArgs, Command, GlobalOpts};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad user input; the message names the offending flag.
    #[error("invalid {field}: {message}")]
    Input { field: String, message: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn input(field: &str, message: impl ToString) -> Self {
        CliError::Input { field: field.to_string(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Internal(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses an inline JSON argument, or the contents of a file for `@path`.
fn read_json(field: &str, raw: &str) -> Result<Value> {
    let text = match raw.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::input(field, format!("{path}: {e}")))?,
        None => raw.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::input(field, format!("not valid JSON: {e}")))
}

fn moment_error(e: MomentError, matrices_field: &str) -> CliError {
    use MomentError::*;
    if let Pairing(PairingError::TooLarge { .. }) = &e {
        return too_large("--spec", e);
    }
    let field = match &e {
        InvalidSpec(_) | ShapeViolation | Pairing(_) | GuardExceeded { .. } => "--spec",
        MissingColor(_) | NonSymmetricShape(_) | InvalidScale { .. } | Dimension(_) | InvalidMatrices(_)
        | Linalg(_) | SymbolicInFloat => matrices_field,
        NeedsNumericQ => "--q",
        Poly(_) => return CliError::Internal(e.to_string()),
    };
    CliError::input(field, e)
}

fn too_large(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::input(field, format!("{e} (pass --allow-large-n)"))
}

fn fluctuation_error(e: FluctuationError, stat_field: &str, order_field: &str) -> CliError {
    match e {
        FluctuationError::Moment(m) => moment_error(m, "--spec"),
        FluctuationError::BoundExceeded { .. } | FluctuationError::Pairing(PairingError::TooLarge { .. }) => {
            too_large(order_field, e)
        }
        FluctuationError::InvalidStatistic(_) | FluctuationError::Pairing(_) => CliError::input(stat_field, e),
        FluctuationError::Poly(_) | FluctuationError::NegativeGenus(_) | FluctuationError::ResidualN => {
            CliError::Internal(e.to_string())
        }
    }
}

fn parse_spec(raw: &str) -> Result<MonomialSpec> {
    MonomialSpec::from_json(&read_json("--spec", raw)?).map_err(|e| CliError::input("--spec", e))
}

fn parse_q(raw: &str) -> Result<QParam> {
    QParam::parse(raw).ok_or_else(|| CliError::input("--q", format!("expected a rational or \"sym\", got {raw:?}")))
}

fn parse_stat(raw: &str) -> Result<PolynomialStatistic> {
    PolynomialStatistic::from_json(&read_json("--Q", raw)?).map_err(|e| CliError::input("--Q", e))
}

fn options(g: &GlobalOpts) -> Result<EngineOptions> {
    if g.threads == 0 {
        return Err(CliError::input("--threads", "must be at least 1"));
    }
    Ok(EngineOptions { allow_large_n: g.allow_large_n, threads: g.threads })
}

/// Bindings plus the flag to blame for binding errors.
fn bindings(args: &BindingArgs, colors: usize) -> Result<(MatrixBindings, &'static str, &'static str)> {
    if let Some(raw) = &args.matrices {
        let b = MatrixBindings::from_json(&read_json("--matrices", raw)?).map_err(|e| CliError::input("--matrices", e))?;
        return Ok((b, "--matrices", "matrices"));
    }
    if args.identity {
        let sizes: Vec<MomentPolynomial> = match &args.sizes {
            Some(raw) => {
                let v = read_json("--sizes", raw)?;
                let list: Option<Vec<u64>> = v.as_array().map(|a| a.iter().map(Value::as_u64).collect()).unwrap_or(None);
                let list = list.ok_or_else(|| CliError::input("--sizes", "expected a JSON list of positive integers"))?;
                if list.contains(&0) {
                    return Err(CliError::input("--sizes", "sizes must be positive"));
                }
                list.into_iter().map(|m| MomentPolynomial::int(m as i64)).collect()
            }
            None => (1..=colors).map(|j| MomentPolynomial::m(j as u16)).collect(),
        };
        let n = match args.n_dim {
            Some(0) => return Err(CliError::input("--N", "must be positive")),
            Some(n) => MomentPolynomial::int(n as i64),
            None => MomentPolynomial::n(),
        };
        let c = vec![BigRational::from_integer(1.into()); sizes.len()];
        return Ok((MatrixBindings::scalar(sizes, n, c), "--sizes", "identity"));
    }
    Ok((MatrixBindings::symbolic(), "--spec", "symbolic"))
}

fn value_json(v: &MomentValue) -> (Value, String) {
    (v.to_json(), v.to_string())
}

fn value_table(item: &str, v: &MomentValue) -> Table {
    match v {
        MomentValue::Exact(p) => poly_table(&[(item.to_string(), p)]),
        MomentValue::Float(x) => {
            let mut t = Table::new(&["item", "value"]);
            t.push(vec![item.to_string(), x.to_string()]);
            t
        }
    }
}

pub fn run(command: &Command, g: &GlobalOpts) -> Result<Report> {
    let opts = options(g)?;
    match command {
        Command::Enumerate { n, coloring, plus_only, noncrossing, input } => {
            enumerate(*n, coloring.as_deref(), *plus_only, *noncrossing, input.as_deref(), &opts)
        }
        Command::Moment { spec, bindings: b, input } => match input {
            Some(raw) => {
                let p = MomentPolynomial::from_json(&read_json("--input", raw)?).map_err(|e| CliError::input("--input", e))?;
                let json = json!({ "value": p.to_json(), "text": p.to_string() });
                Ok(Report::new(json, poly_table(&[("value".into(), &p)])))
            }
            None => {
                let spec = parse_spec(spec.as_deref().expect("required unless --input"))?;
                let (bindings, field, mode) = bindings(b, spec.colors())?;
                let v = real_wishart_moment(&spec, &bindings, &opts).map_err(|e| moment_error(e, field))?;
                let (value, text) = value_json(&v);
                let json = json!({ "spec": spec.to_json(), "bindings": mode, "value": value, "text": text });
                Ok(Report::new(json, value_table("moment", &v)))
            }
        },
        Command::QMoment { spec, q, bindings: b, brute_force } => {
            let spec = parse_spec(spec)?;
            let q = parse_q(q)?;
            let (bindings, field, mode) = bindings(b, spec.colors())?;
            let v = if *brute_force {
                brute_force_q_moment(&spec, &bindings, &q)
            } else {
                q_wishart_moment(&spec, &bindings, &q, &opts)
            }
            .map_err(|e| moment_error(e, field))?;
            let (value, text) = value_json(&v);
            let method = if *brute_force { "brute-force" } else { "pair-partitions" };
            let json = json!({ "spec": spec.to_json(), "bindings": mode, "method": method, "value": value, "text": text });
            Ok(Report::new(json, value_table("q-moment", &v)))
        }
        Command::FluctuationLimit { stat, orders, spec, finite, q } => {
            let q = parse_q(q)?;
            if let Some(raw) = stat {
                let st = parse_stat(raw)?;
                if *orders < 2 {
                    return Err(CliError::input("--orders", "must be at least 2"));
                }
                let ms = statistic_limit_moments(&st, *orders, &q, &opts)
                    .map_err(|e| fluctuation_error(e, "--Q", "--orders"))?;
                let items: Vec<(String, &MomentPolynomial)> = ms.iter().map(|(m, v)| (m.to_string(), &v.value)).collect();
                let list: Vec<Value> = ms
                    .iter()
                    .map(|(m, v)| json!({ "order": m, "value": v.value.to_json(), "text": v.value.to_string() }))
                    .collect();
                let json = json!({ "Q": st.to_json(), "moments": list });
                return Ok(Report::new(json, poly_table(&items)));
            }
            let spec = parse_spec(spec.as_deref().expect("required unless --Q"))?;
            let value = if *finite {
                centered_moment_finite(&spec, &MomentPolynomial::m(0), &MomentPolynomial::n(), &q, &opts)
            } else {
                centered_moment_limit(&spec, &q, &opts).map(|l| l.value)
            }
            .map_err(|e| fluctuation_error(e, "--spec", "--spec"))?;
            let kind = if *finite { "finite" } else { "limit" };
            let json = json!({ "spec": spec.to_json(), "kind": kind, "value": value.to_json(), "text": value.to_string() });
            Ok(Report::new(json, poly_table(&[(kind.to_string(), &value)])))
        }
        Command::T5Check { stat, m, q } => {
            let st = parse_stat(stat)?;
            let q = parse_q(q)?;
            let mut checks = Vec::new();
            let mut values = Vec::new();
            for &mm in m {
                let v = conditional_variance_check(&st, mm, &q, &opts).map_err(|e| fluctuation_error(e, "--Q", "--m"))?;
                checks.push(json!({ "m": mm, "value": v.to_json(), "text": v.to_string(), "zero": v.is_zero() }));
                values.push((mm.to_string(), v));
            }
            let all_zero = values.iter().all(|(_, v)| v.is_zero());
            let mut table = Table::new(&["m", "zero", "value"]);
            for (mm, v) in &values {
                table.push(vec![mm.clone(), v.is_zero().to_string(), v.to_string()]);
            }
            let mut report = Report::new(json!({ "Q": st.to_json(), "checks": checks, "all_zero": all_zero }), table);
            if !all_zero {
                report.failed = Some("conditional variance identity is not the zero polynomial".into());
            }
            Ok(report)
        }
        Command::MpCheck { eigenvalues, b, n_dim, n_max, input } => mp_check(eigenvalues.as_deref(), b.as_deref(), *n_dim, *n_max, input.as_deref()),
        Command::McValidate { spec, config, matrices, seed, samples, partitions } => {
            let spec = parse_spec(spec)?;
            let cfg = match config {
                Some(raw) => SamplerConfig::from_json(&read_json("--config", raw)?).map_err(|e| mc_error(e, "--config"))?,
                None => {
                    let raw = matrices.as_deref().expect("required unless --config");
                    let b = MatrixBindings::from_json(&read_json("--matrices", raw)?)
                        .map_err(|e| CliError::input("--matrices", e))?;
                    let colors = float_colors(&b).map_err(|e| mc_error(e, "--matrices"))?;
                    SamplerConfig::new(*seed, *samples, colors)
                        .map_err(|e| mc_error(e, "--samples"))?
                        .with_partitions(*partitions)
                        .map_err(|e| mc_error(e, "--partitions"))?
                }
            };
            let r = estimate_monomial(&spec, &cfg).map_err(|e| mc_error(e, "--matrices"))?;
            let json = json!({
                "spec": spec.to_json(),
                "seed": cfg.seed,
                "partitions": cfg.partitions,
                "report": r.to_json(),
                "within_4_stderr": r.z <= 4.0,
            });
            let mut table = Table::new(&["mean", "stderr", "samples", "exact", "z"]);
            table.push(vec![r.mean.to_string(), r.stderr.to_string(), r.samples.to_string(), r.exact.to_string(), r.z.to_string()]);
            Ok(Report::new(json, table))
        }
        Command::Table1 => {
            let rows = table1();
            let mut table = Table::new(&["row", "gamma", "cr", "pi_gamma", "pi_sigma_gamma", "induced_coloring", "contribution"]);
            for (k, r) in rows.iter().enumerate() {
                let colors: Vec<String> = r.induced.as_slice().iter().map(|c| c.to_string()).collect();
                table.push(vec![
                    (k + 1).to_string(),
                    r.gamma.to_string(),
                    r.crossings.to_string(),
                    r.pi_gamma.to_string(),
                    r.pi_product.to_string(),
                    colors.join(" "),
                    r.contribution.to_string(),
                ]);
            }
            let json = json!({ "spec": {"cycle_words": [[1, 2], [1, 2]]}, "rows": rows.iter().map(|r| r.to_json()).collect::<Vec<_>>() });
            Ok(Report::new(json, table))
        }
    }
}

fn mc_error(e: McError, field: &str) -> CliError {
    match e {
        McError::Moment(m) => moment_error(m, "--matrices"),
        McError::Linalg(_) => CliError::input("--matrices", e),
        McError::InvalidConfig(_) => CliError::input(field, e),
    }
}

fn partition_record(g: &PairPartition) -> Value {
    let t = g.traverse();
    json!({
        "pairs": g.pairs(),
        "cr": g.crossings(),
        "pi": t.perm.to_string(),
        "plus": g.is_plus(),
        "noncrossing": g.is_noncrossing(),
    })
}

fn enumerate(
    n: Option<usize>,
    coloring: Option<&str>,
    plus_only: bool,
    noncrossing: bool,
    input: Option<&str>,
    opts: &EngineOptions,
) -> Result<Report> {
    let partitions: Vec<PairPartition> = if let Some(raw) = input {
        let v = read_json("--input", raw)?;
        let pairs_value = v.get("pairs").unwrap_or(&v);
        let pairs = parse_pairs(pairs_value).ok_or_else(|| CliError::input("--input", "expected [[a,b],...] or {\"pairs\":[[a,b],...]}"))?;
        let size = pairs.iter().map(|&(a, b)| a.unsigned_abs().max(b.unsigned_abs())).max().unwrap_or(0) as usize;
        vec![PairPartition::from_pairs(size, &pairs).map_err(|e| CliError::input("--input", e))?]
    } else {
        let iter = match coloring {
            Some(raw) => {
                let v = read_json("--coloring", raw)?;
                let colors: Option<Vec<usize>> =
                    v.as_array().map(|a| a.iter().map(|x| x.as_u64().map(|x| x as usize)).collect()).unwrap_or(None);
                let colors = colors.ok_or_else(|| CliError::input("--coloring", "expected a JSON list of positive integers"))?;
                if let Some(n) = n {
                    if n != colors.len() {
                        return Err(CliError::input("--n", format!("coloring has {} entries", colors.len())));
                    }
                }
                let t = Coloring::from_assignment(colors).map_err(|e| CliError::input("--coloring", e))?;
                enumerate_color_preserving(&t, opts.allow_large_n).map_err(|e| too_large("--coloring", e))?
            }
            None => {
                let n = n.ok_or_else(|| CliError::input("--n", "give --n, --coloring or --input"))?;
                enumerate_all(n, opts.allow_large_n).map_err(|e| too_large("--n", e))?
            }
        };
        iter.filter(|g| (!plus_only || g.is_plus()) && (!noncrossing || g.is_noncrossing())).collect()
    };
    let records: Vec<Value> = partitions.iter().map(partition_record).collect();
    let mut table = Table::new(&["index", "pairs", "cr", "pi", "plus", "noncrossing"]);
    for (k, g) in partitions.iter().enumerate() {
        table.push(vec![
            (k + 1).to_string(),
            g.to_string(),
            g.crossings().to_string(),
            g.traverse().perm.to_string(),
            g.is_plus().to_string(),
            g.is_noncrossing().to_string(),
        ]);
    }
    let size = partitions.first().map(PairPartition::n).unwrap_or(0);
    Ok(Report::new(json!({ "n": size, "count": records.len(), "partitions": records }), table))
}

fn rationals(field: &str, v: &Value) -> Result<Vec<BigRational>> {
    let list = v.as_array().ok_or_else(|| CliError::input(field, "expected a JSON list of rationals"))?;
    list.iter()
        .map(|x| rational_from_json(x).ok_or_else(|| CliError::input(field, format!("not a rational: {x}"))))
        .collect()
}

fn mp_check(
    eigenvalues: Option<&str>,
    b: Option<&str>,
    n_dim: Option<usize>,
    n_max: usize,
    input: Option<&str>,
) -> Result<Report> {
    let (eigs, n_dim, n_max) = if let Some(raw) = input {
        let v = read_json("--input", raw)?;
        let e = v.get("eigenvalues").ok_or_else(|| CliError::input("--input", "missing \"eigenvalues\""))?;
        let eigs = rationals("--input", e)?;
        let n = v.get("N").and_then(Value::as_u64).ok_or_else(|| CliError::input("--input", "missing positive integer \"N\""))?;
        let k = v.get("n_max").and_then(Value::as_u64).unwrap_or(n_max as u64);
        (eigs, n as usize, k as usize)
    } else {
        let eigs = match (eigenvalues, b) {
            (Some(raw), _) => rationals("--eigenvalues", &read_json("--eigenvalues", raw)?)?,
            (None, Some(raw)) => {
                let v = read_json("--B", raw)?;
                let rows = v.as_array().ok_or_else(|| CliError::input("--B", "expected a square JSON matrix"))?;
                let mut diag = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    let row = rationals("--B", row)?;
                    if row.len() != rows.len() {
                        return Err(CliError::input("--B", "matrix is not square"));
                    }
                    if row.iter().enumerate().any(|(j, x)| j != i && !x.is_zero()) {
                        return Err(CliError::input("--B", "matrix must be diagonal; pass --eigenvalues otherwise"));
                    }
                    diag.push(row[i].clone());
                }
                diag
            }
            (None, None) => return Err(CliError::input("--eigenvalues", "give --eigenvalues, --B or --input")),
        };
        let n = n_dim.ok_or_else(|| CliError::input("--N", "required"))?;
        (eigs, n, n_max)
    };
    if n_dim == 0 {
        return Err(CliError::input("--N", "must be positive"));
    }
    let report = verify_t3(&eigs, n_dim, n_max).map_err(|e| match e {
        MpError::OutOfRange(_) => CliError::input("--n-max", e),
        MpError::NonPositiveEigenvalue | MpError::InvalidMeasure | MpError::NotAPartition(_) => {
            CliError::input("--eigenvalues", e)
        }
        MpError::Moment(m) => moment_error(m, "--eigenvalues"),
    })?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "n": r.n,
                "wishart": format_rational(&r.wishart),
                "compound_mp": format_rational(&r.compound_mp),
                "equal": r.equal(),
            })
        })
        .collect();
    let mut table = Table::new(&["n", "wishart", "compound_mp", "equal"]);
    for r in &report.rows {
        table.push(vec![r.n.to_string(), format_rational(&r.wishart), format_rational(&r.compound_mp), r.equal().to_string()]);
    }
    let json = json!({
        "M": report.m,
        "N": report.n_dim,
        "lambda": format_rational(&report.lambda),
        "rows": rows,
        "equal": report.all_equal(),
    });
    let mut out = Report::new(json, table);
    if let Some(n) = report.first_mismatch() {
        out.failed = Some(format!("moments differ at n = {n}"));
    }
    Ok(out)
}
