//! Pipeline behind the `momineq` binary: load a model file, run positivity
//! and moment checks across an r grid, emit a JSON report or CSV table.
//!
//! Reports are reproducible: the `report` object depends only on the file
//! bytes, flags, and seeds (keys sorted, timestamps quarantined in a
//! separate `meta` object), and the model digest is a SHA-256 of the
//! canonicalized file, so reformatting a file does not change its digest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use momineq::error::Error;
use momineq::model::{Model, RExponent, Regime};
use momineq::modelfile::{parse_model_file_bytes, MethodChoice, ModelFile, ModelKind};
use momineq::moments::{delta_parts, DeltaMethod, DeltaParts};
use momineq::positivity::{
    check_psd_discrete, probe_density_positivity, PositivityReport, Verdict, DEFAULT_PSD_TOL,
};
use momineq::representation::{truncated_delta_channels, TruncationWindow};

pub const DEFAULT_R_GRID: [f64; 6] = [0.25, 0.5, 1.0, 1.5, 1.9, 2.0];
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_MC_N: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalityVerdict {
    Holds,
    Fails,
    Inconclusive,
}

impl InequalityVerdict {
    fn as_str(self) -> &'static str {
        match self {
            InequalityVerdict::Holds => "holds",
            InequalityVerdict::Fails => "fails",
            InequalityVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// holds iff delta >= -(combined error bound); fails iff conclusively
/// below it; inconclusive for NaN or unbounded-error estimates.
fn classify(delta_value: f64, bound: f64) -> InequalityVerdict {
    if delta_value.is_nan() {
        return InequalityVerdict::Inconclusive;
    }
    if delta_value == f64::NEG_INFINITY {
        return InequalityVerdict::Fails;
    }
    if delta_value == f64::INFINITY {
        return InequalityVerdict::Holds;
    }
    if !bound.is_finite() {
        return InequalityVerdict::Inconclusive;
    }
    if delta_value < -bound {
        InequalityVerdict::Fails
    } else {
        InequalityVerdict::Holds
    }
}

/// What the theorem says this record should do, when it says anything:
/// the r > 2 counterexample kinds and the negative-r remark expect failure,
/// positivity-respecting models with 0 < r <= 2 expect the inequality.
fn expected_verdict(
    kind: ModelKind,
    rv: f64,
    positivity: &PositivityReport<f64>,
) -> Option<InequalityVerdict> {
    if rv < 0.0 && kind == ModelKind::UniformRemark {
        return Some(InequalityVerdict::Fails);
    }
    if rv > 2.0 && matches!(kind, ModelKind::TwoPoint | ModelKind::Smoothed) {
        return Some(InequalityVerdict::Fails);
    }
    if rv > 0.0
        && rv <= 2.0
        && matches!(positivity.verdict, Verdict::Certified | Verdict::NotFalsified)
    {
        return Some(InequalityVerdict::Holds);
    }
    None
}

pub struct VerifyConfig {
    pub file: PathBuf,
    pub r_list: Option<Vec<f64>>,
    pub method: Option<MethodChoice>,
    pub mc_n: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub rel_tol: Option<f64>,
    /// Attach the truncated-window representation cross-check to each
    /// eligible record.
    pub channels: bool,
    pub out: Option<PathBuf>,
}

struct LoadedModel {
    file: ModelFile,
    model: Model<f64>,
    digest: String,
}

fn load(path: &Path) -> Result<LoadedModel, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::SchemaError {
        path: ".".into(),
        detail: format!("cannot read {}: {e}", path.display()),
    })?;
    let file = parse_model_file_bytes(&bytes)?;
    let model = file.build()?;
    // canonical form: sorted keys, no whitespace
    let value: Value = serde_json::from_slice(&bytes).expect("validated above");
    let canonical = serde_json::to_string(&value).expect("canonical serialization");
    let digest = format!("sha256:{:x}", Sha256::digest(canonical.as_bytes()));
    Ok(LoadedModel {
        file,
        model,
        digest,
    })
}

fn positivity_for(model: &Model<f64>) -> Result<PositivityReport<f64>, Error> {
    match model {
        Model::Discrete(m) => Ok(check_psd_discrete(m, DEFAULT_PSD_TOL)),
        Model::Density(m) => {
            let probes = vec![
                momineq::expr::parse_expr("1").expect("constant probe"),
                momineq::expr::parse_expr("x").expect("identity probe"),
            ];
            probe_density_positivity(m, &probes, 128, 1e-9)
        }
    }
}

fn method_for(model: &Model<f64>, choice: Option<MethodChoice>) -> MethodChoice {
    choice.unwrap_or(match model {
        Model::Discrete(_) => MethodChoice::Exact,
        Model::Density(_) => MethodChoice::Quadrature,
    })
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn fail(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    2
}

/// `verify`: full pipeline per r value, JSON report, exit 0 when every
/// verdict matches its expectation, 1 on any unexpected verdict, 2 on
/// errors.
pub fn cmd_verify(config: &VerifyConfig) -> u8 {
    let loaded = match load(&config.file) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let r_list = config
        .r_list
        .clone()
        .filter(|l| !l.is_empty())
        .or_else(|| {
            if loaded.file.r_values.is_empty() {
                None
            } else {
                Some(loaded.file.r_values.clone())
            }
        })
        .or_else(|| loaded.file.intrinsic_r())
        .unwrap_or_else(|| DEFAULT_R_GRID.to_vec());

    let method = method_for(&loaded.model, config.method.or(loaded.file.options.method));
    let rel_tol = config
        .rel_tol
        .or(loaded.file.options.rel_tol)
        .unwrap_or(DEFAULT_REL_TOL);
    let mc_n = config.mc_n.or(loaded.file.options.mc_n).unwrap_or(DEFAULT_MC_N);
    let seed = config.seed.or(loaded.file.options.seed).unwrap_or(0);
    let workers = config.workers.or(loaded.file.options.workers).unwrap_or(1);

    let positivity = match positivity_for(&loaded.model) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };

    let mut records = Vec::new();
    let mut wall_times = Vec::new();
    let mut all_expected = true;

    for &rv in &r_list {
        let started = Instant::now();
        let r = match RExponent::new(rv) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        let delta_method = match method {
            MethodChoice::Exact => DeltaMethod::Exact,
            MethodChoice::Quadrature => DeltaMethod::Quadrature { rel_tol },
            MethodChoice::MonteCarlo => DeltaMethod::MonteCarlo {
                n: mc_n,
                seed,
                workers,
            },
        };
        let parts: DeltaParts<f64> = match delta_parts(&loaded.model, r, &delta_method) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let verdict = classify(parts.delta.value, parts.delta.abs_error_bound);
        let expected = expected_verdict(loaded.file.kind, rv, &positivity);
        if let Some(exp) = expected {
            if exp != verdict {
                all_expected = false;
            }
        }

        let channels = if config.channels {
            representation_channels(&loaded.model, r)
        } else {
            None
        };

        let mut record = json!({
            "r": rv,
            "regime": Regime::name(r.regime()),
            "positivity": serde_json::to_value(&positivity).expect("positivity serializes"),
            "e_plus": serde_json::to_value(parts.e_plus).expect("estimate serializes"),
            "e_minus": serde_json::to_value(parts.e_minus).expect("estimate serializes"),
            "delta": serde_json::to_value(parts.delta).expect("estimate serializes"),
            "verdict": verdict.as_str(),
            "expected_verdict": expected.map(InequalityVerdict::as_str),
        });
        if let Some(ch) = channels {
            record["channels"] = ch;
        }
        records.push(record);
        wall_times.push(started.elapsed().as_secs_f64() * 1e3);
    }

    let report = json!({
        "report": {
            "tool_version": env!("CARGO_PKG_VERSION"),
            "model_digest": loaded.digest,
            "model_kind": loaded.file.kind.as_str(),
            "method": match method {
                MethodChoice::Exact => "exact",
                MethodChoice::Quadrature => "quadrature",
                MethodChoice::MonteCarlo => "mc",
            },
            "records": records,
        },
        "meta": {
            "timestamp_unix_ms": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            "wall_time_ms": wall_times,
        },
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    if let Err(msg) = write_output(&config.out, &text) {
        return fail(msg);
    }
    if all_expected {
        0
    } else {
        1
    }
}

fn representation_channels(model: &Model<f64>, r: RExponent<f64>) -> Option<Value> {
    let discrete = model.as_discrete()?;
    let rv = r.value();
    if !(0.05..2.0).contains(&rv) {
        return None;
    }
    let window = TruncationWindow::new(100).ok()?;
    match truncated_delta_channels(discrete, r, window, 1e-6) {
        Ok(td) => Some(json!({
            "n": 100,
            "integral_channel": td.integral_channel,
            "expectation_channel": td.expectation_channel,
            "mismatch": (td.integral_channel - td.expectation_channel).abs(),
        })),
        Err(e) => Some(json!({ "error": e.to_string() })),
    }
}

/// `representation`: truncated-delta convergence table as CSV
/// (n, integral channel, expectation channel, exact delta, gap).
pub fn cmd_representation(file: &Path, rv: f64, n_list: &[u32], out: &Option<PathBuf>) -> u8 {
    let loaded = match load(file) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let discrete = match loaded.model.as_discrete() {
        Some(d) => d,
        None => {
            return fail(Error::RegimeError {
                r: rv,
                expected: "a discrete model (densities have no finite-sum sin form)",
            })
        }
    };
    if n_list.is_empty() {
        return fail("representation needs at least one --n value");
    }
    let r = match RExponent::new(rv) {
        Ok(r) if rv > 0.0 && rv < 2.0 => r,
        _ => {
            return fail(Error::RegimeError {
                r: rv,
                expected: "0 < r < 2",
            })
        }
    };
    let exact = match delta_parts(&loaded.model, r, &DeltaMethod::Exact) {
        Ok(p) => p.delta.value,
        Err(e) => return fail(e),
    };
    let mut csv = String::from("n,integral_channel,expectation_channel,exact_delta,gap\n");
    for &n in n_list {
        let window = match TruncationWindow::new(n) {
            Ok(w) => w,
            Err(e) => return fail(e),
        };
        let td = match truncated_delta_channels(discrete, r, window, 1e-8) {
            Ok(td) => td,
            Err(e) => return fail(e),
        };
        let gap = (td.integral_channel - exact).abs();
        csv.push_str(&format!(
            "{n},{},{},{exact},{gap}\n",
            td.integral_channel, td.expectation_channel
        ));
    }
    if let Err(msg) = write_output(out, &csv) {
        return fail(msg);
    }
    0
}

/// A `lo:hi:steps` grid specification.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("range `{spec}` must be lo:hi:steps"));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| format!("bad range low `{}`", parts[0]))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| format!("bad range high `{}`", parts[1]))?;
    let steps: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad range steps `{}`", parts[2]))?;
    if steps == 0 {
        return Err("range steps must be positive".into());
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(format!("range `{spec}` must have finite lo <= hi"));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect())
}

/// `sweep`: exact delta over a lattice of two-point product laws, CSV of
/// the failures. An empty table is a result, not an error.
pub fn cmd_sweep(rv: f64, a_spec: &str, p_spec: &str, out: &Option<PathBuf>) -> u8 {
    let a_grid = match parse_range(a_spec) {
        Ok(g) => g,
        Err(msg) => return fail(msg),
    };
    let p_grid = match parse_range(p_spec) {
        Ok(g) => g,
        Err(msg) => return fail(msg),
    };
    if p_grid.iter().any(|&p| p <= 0.0 || p >= 1.0) {
        return fail("p range must stay inside (0, 1)");
    }
    let r = match RExponent::new(rv) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let hits = match momineq::counterexample::search_two_point(r, &a_grid, &p_grid) {
        Ok(h) => h,
        Err(e) => return fail(e),
    };
    let mut csv = String::from("a,p,delta\n");
    for hit in &hits {
        csv.push_str(&format!("{},{},{}\n", hit.a, hit.p, hit.delta));
    }
    if let Err(msg) = write_output(out, &csv) {
        return fail(msg);
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_rules() {
        assert_eq!(classify(1.0, 1e-10), InequalityVerdict::Holds);
        assert_eq!(classify(-1e-12, 1e-10), InequalityVerdict::Holds);
        assert_eq!(classify(-1.0, 1e-10), InequalityVerdict::Fails);
        assert_eq!(classify(f64::NEG_INFINITY, f64::INFINITY), InequalityVerdict::Fails);
        assert_eq!(classify(f64::NAN, 1e-10), InequalityVerdict::Inconclusive);
        assert_eq!(classify(0.5, f64::INFINITY), InequalityVerdict::Inconclusive);
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_range("2:2:1").unwrap(), vec![2.0]);
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("1:0:5").is_err());
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("a:1:2").is_err());
    }
}
