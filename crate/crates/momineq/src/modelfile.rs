//! The model-file format: one JSON object
//! `{"kind": <tag>, "params": {...}, "r": [..], "options": {...}}`.
//!
//! The schema is strict: unknown fields are errors, not warnings, because a
//! silently ignored typo would invalidate a verification claim. Every error
//! carries the JSON path it was found at. Expressions are parsed here, so a
//! loaded file is ready for the constructors without further validation.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, ExprAST};
use crate::model::{
    build_cauchy_discrete, build_counterexample, build_general_discrete, build_smoothed,
    build_uniform_remark, DensityModel, MarginalSegment, Model, RExponent, UniformComponent,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    CauchyDiscrete,
    GeneralDiscrete,
    CauchyDensity,
    ProductDensity,
    MixtureDensity,
    TwoPoint,
    Smoothed,
    UniformRemark,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::CauchyDiscrete => "cauchy-discrete",
            ModelKind::GeneralDiscrete => "general-discrete",
            ModelKind::CauchyDensity => "cauchy-density",
            ModelKind::ProductDensity => "product-density",
            ModelKind::MixtureDensity => "mixture-density",
            ModelKind::TwoPoint => "two-point",
            ModelKind::Smoothed => "smoothed",
            ModelKind::UniformRemark => "uniform-remark",
        }
    }

    fn from_tag(tag: &str, path: &str) -> Result<Self> {
        Ok(match tag {
            "cauchy-discrete" => ModelKind::CauchyDiscrete,
            "general-discrete" => ModelKind::GeneralDiscrete,
            "cauchy-density" => ModelKind::CauchyDensity,
            "product-density" => ModelKind::ProductDensity,
            "mixture-density" => ModelKind::MixtureDensity,
            "two-point" => ModelKind::TwoPoint,
            "smoothed" => ModelKind::Smoothed,
            "uniform-remark" => ModelKind::UniformRemark,
            other => {
                return Err(Error::SchemaError {
                    path: path.to_string(),
                    detail: format!("unknown model kind `{other}`"),
                })
            }
        })
    }
}

/// Kind-specific parameters, expressions pre-parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    CauchyDiscrete {
        atoms: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
        normalize: bool,
    },
    GeneralDiscrete {
        atoms: Vec<f64>,
        weights: Vec<Vec<f64>>,
    },
    CauchyDensity {
        c: ExprAST,
        d: ExprAST,
        domain: Vec<(f64, f64)>,
    },
    ProductDensity {
        segments: Vec<(f64, f64, f64)>,
    },
    MixtureDensity {
        components: Vec<(f64, f64, f64)>,
    },
    TwoPoint {
        r: f64,
    },
    Smoothed {
        r: f64,
        epsilon: f64,
    },
    UniformRemark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Exact,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelOptions {
    pub method: Option<MethodChoice>,
    pub rel_tol: Option<f64>,
    pub mc_n: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    /// r values listed in the file, empty when absent.
    pub r_values: Vec<f64>,
    pub options: ModelOptions,
}

impl ModelFile {
    /// Instantiate the model the file describes.
    pub fn build(&self) -> Result<Model<f64>> {
        match &self.spec {
            ModelSpec::CauchyDiscrete {
                atoms,
                c,
                d,
                normalize,
            } => Ok(Model::Discrete(build_cauchy_discrete(
                atoms, c, d, *normalize,
            )?)),
            ModelSpec::GeneralDiscrete { atoms, weights } => {
                Ok(Model::Discrete(build_general_discrete(atoms, weights)?))
            }
            ModelSpec::CauchyDensity { c, d, domain } => Ok(Model::Density(DensityModel::cauchy(
                domain.clone(),
                c.clone(),
                d.clone(),
            )?)),
            ModelSpec::ProductDensity { segments } => {
                let segs = segments
                    .iter()
                    .map(|&(lo, hi, height)| MarginalSegment { lo, hi, height })
                    .collect();
                Ok(Model::Density(DensityModel::product(segs)?))
            }
            ModelSpec::MixtureDensity { components } => {
                let comps = components
                    .iter()
                    .map(|&(center, halfwidth, mass)| UniformComponent {
                        center,
                        halfwidth,
                        mass,
                    })
                    .collect();
                Ok(Model::Density(DensityModel::mixture(comps)?))
            }
            ModelSpec::TwoPoint { r } => {
                let law = build_counterexample(RExponent::new(*r)?)?;
                Ok(Model::Discrete(law.to_discrete()))
            }
            ModelSpec::Smoothed { r, epsilon } => {
                let law = build_counterexample(RExponent::new(*r)?)?;
                Ok(Model::Density(build_smoothed(&law, *epsilon)?))
            }
            ModelSpec::UniformRemark => Ok(Model::Density(build_uniform_remark())),
        }
    }

    /// The r grid this file implies when neither the command line nor the
    /// file supplies one: counterexample kinds verify at their generating
    /// exponent.
    pub fn intrinsic_r(&self) -> Option<Vec<f64>> {
        match &self.spec {
            ModelSpec::TwoPoint { r } | ModelSpec::Smoothed { r, .. } => Some(vec![*r]),
            _ => None,
        }
    }
}

pub fn parse_model_file(document: &str) -> Result<ModelFile> {
    parse_model_file_bytes(document.as_bytes())
}

pub fn parse_model_file_bytes(document: &[u8]) -> Result<ModelFile> {
    let value: Value = serde_json::from_slice(document).map_err(|e| Error::SchemaError {
        path: ".".to_string(),
        detail: format!("invalid JSON: {e}"),
    })?;
    let root = as_object(&value, ".")?;
    known_fields(root, &["kind", "params", "r", "options"], ".")?;

    let kind_tag = as_str(field(root, "kind", ".")?, ".kind")?;
    let kind = ModelKind::from_tag(kind_tag, ".kind")?;
    let params = as_object(field(root, "params", ".")?, ".params")?;
    let spec = parse_params(kind, params)?;

    let r_values = match root.get("r") {
        None => Vec::new(),
        Some(v) => {
            let arr = as_array(v, ".r")?;
            if arr.is_empty() {
                return Err(Error::SchemaError {
                    path: ".r".to_string(),
                    detail: "r list must not be empty when present".to_string(),
                });
            }
            arr.iter()
                .enumerate()
                .map(|(i, v)| as_f64(v, &format!(".r[{i}]")))
                .collect::<Result<Vec<f64>>>()?
        }
    };

    let options = match root.get("options") {
        None => ModelOptions::default(),
        Some(v) => parse_options(as_object(v, ".options")?)?,
    };

    Ok(ModelFile {
        kind,
        spec,
        r_values,
        options,
    })
}

fn parse_params(kind: ModelKind, params: &Map<String, Value>) -> Result<ModelSpec> {
    let p = ".params";
    match kind {
        ModelKind::CauchyDiscrete => {
            known_fields(params, &["atoms", "c", "d", "normalize"], p)?;
            Ok(ModelSpec::CauchyDiscrete {
                atoms: num_vec(field(params, "atoms", p)?, ".params.atoms")?,
                c: num_vec(field(params, "c", p)?, ".params.c")?,
                d: num_vec(field(params, "d", p)?, ".params.d")?,
                normalize: as_bool(field(params, "normalize", p)?, ".params.normalize")?,
            })
        }
        ModelKind::GeneralDiscrete => {
            known_fields(params, &["atoms", "weights"], p)?;
            let wpath = ".params.weights";
            let rows = as_array(field(params, "weights", p)?, wpath)?;
            let weights = rows
                .iter()
                .enumerate()
                .map(|(i, row)| num_vec(row, &format!("{wpath}[{i}]")))
                .collect::<Result<Vec<Vec<f64>>>>()?;
            Ok(ModelSpec::GeneralDiscrete {
                atoms: num_vec(field(params, "atoms", p)?, ".params.atoms")?,
                weights,
            })
        }
        ModelKind::CauchyDensity => {
            known_fields(params, &["c", "d", "domain"], p)?;
            Ok(ModelSpec::CauchyDensity {
                c: expr_field(field(params, "c", p)?, ".params.c")?,
                d: expr_field(field(params, "d", p)?, ".params.d")?,
                domain: interval_list(field(params, "domain", p)?, ".params.domain")?,
            })
        }
        ModelKind::ProductDensity => {
            known_fields(params, &["segments"], p)?;
            let spath = ".params.segments";
            let rows = as_array(field(params, "segments", p)?, spath)?;
            let segments = rows
                .iter()
                .enumerate()
                .map(|(i, row)| triple(row, &format!("{spath}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelSpec::ProductDensity { segments })
        }
        ModelKind::MixtureDensity => {
            known_fields(params, &["components"], p)?;
            let cpath = ".params.components";
            let rows = as_array(field(params, "components", p)?, cpath)?;
            let components = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let path = format!("{cpath}[{i}]");
                    let obj = as_object(row, &path)?;
                    known_fields(obj, &["center", "halfwidth", "mass"], &path)?;
                    Ok((
                        as_f64(field(obj, "center", &path)?, &format!("{path}.center"))?,
                        as_f64(
                            field(obj, "halfwidth", &path)?,
                            &format!("{path}.halfwidth"),
                        )?,
                        as_f64(field(obj, "mass", &path)?, &format!("{path}.mass"))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelSpec::MixtureDensity { components })
        }
        ModelKind::TwoPoint => {
            known_fields(params, &["r"], p)?;
            Ok(ModelSpec::TwoPoint {
                r: as_f64(field(params, "r", p)?, ".params.r")?,
            })
        }
        ModelKind::Smoothed => {
            known_fields(params, &["r", "epsilon"], p)?;
            Ok(ModelSpec::Smoothed {
                r: as_f64(field(params, "r", p)?, ".params.r")?,
                epsilon: as_f64(field(params, "epsilon", p)?, ".params.epsilon")?,
            })
        }
        ModelKind::UniformRemark => {
            known_fields(params, &[], p)?;
            Ok(ModelSpec::UniformRemark)
        }
    }
}

fn parse_options(obj: &Map<String, Value>) -> Result<ModelOptions> {
    let p = ".options";
    known_fields(obj, &["method", "rel_tol", "mc_n", "seed", "workers"], p)?;
    let method = match obj.get("method") {
        None => None,
        Some(v) => Some(match as_str(v, ".options.method")? {
            "exact" => MethodChoice::Exact,
            "quadrature" => MethodChoice::Quadrature,
            "mc" => MethodChoice::MonteCarlo,
            other => {
                return Err(Error::SchemaError {
                    path: ".options.method".to_string(),
                    detail: format!("expected exact|quadrature|mc, got `{other}`"),
                })
            }
        }),
    };
    Ok(ModelOptions {
        method,
        rel_tol: obj
            .get("rel_tol")
            .map(|v| as_f64(v, ".options.rel_tol"))
            .transpose()?,
        mc_n: obj
            .get("mc_n")
            .map(|v| as_u64(v, ".options.mc_n"))
            .transpose()?,
        seed: obj
            .get("seed")
            .map(|v| as_u64(v, ".options.seed"))
            .transpose()?,
        workers: obj
            .get("workers")
            .map(|v| as_u64(v, ".options.workers").map(|w| w as usize))
            .transpose()?,
    })
}

// --- JSON walking helpers, all carrying the field path -----------------------

fn schema(path: &str, detail: impl Into<String>) -> Error {
    Error::SchemaError {
        path: path.to_string(),
        detail: detail.into(),
    }
}

fn as_object<'v>(v: &'v Value, path: &str) -> Result<&'v Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(path, "expected object"))
}

fn as_array<'v>(v: &'v Value, path: &str) -> Result<&'v Vec<Value>> {
    v.as_array().ok_or_else(|| schema(path, "expected array"))
}

fn as_str<'v>(v: &'v Value, path: &str) -> Result<&'v str> {
    v.as_str().ok_or_else(|| schema(path, "expected string"))
}

fn as_bool(v: &Value, path: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| schema(path, "expected boolean"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| schema(path, "expected finite number"))
}

fn as_u64(v: &Value, path: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| schema(path, "expected non-negative integer"))
}

fn field<'v>(map: &'v Map<String, Value>, key: &str, parent: &str) -> Result<&'v Value> {
    map.get(key).ok_or_else(|| {
        schema(
            &join(parent, key),
            format!("missing required field `{key}`"),
        )
    })
}

fn known_fields(map: &Map<String, Value>, allowed: &[&str], parent: &str) -> Result<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(&join(parent, key), "unknown field"));
        }
    }
    Ok(())
}

fn join(parent: &str, key: &str) -> String {
    if parent == "." {
        format!(".{key}")
    } else {
        format!("{parent}.{key}")
    }
}

fn num_vec(v: &Value, path: &str) -> Result<Vec<f64>> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, v)| as_f64(v, &format!("{path}[{i}]")))
        .collect()
}

fn expr_field(v: &Value, path: &str) -> Result<ExprAST> {
    let text = as_str(v, path)?;
    parse_expr(text).map_err(|e| schema(path, format!("{e}")))
}

fn interval_list(v: &Value, path: &str) -> Result<Vec<(f64, f64)>> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let ipath = format!("{path}[{i}]");
            let arr = as_array(pair, &ipath)?;
            if arr.len() != 2 {
                return Err(schema(&ipath, "expected [lo, hi]"));
            }
            Ok((
                as_f64(&arr[0], &format!("{ipath}[0]"))?,
                as_f64(&arr[1], &format!("{ipath}[1]"))?,
            ))
        })
        .collect()
}

fn triple(v: &Value, path: &str) -> Result<(f64, f64, f64)> {
    let arr = as_array(v, path)?;
    if arr.len() != 3 {
        return Err(schema(path, "expected [lo, hi, height]"));
    }
    Ok((
        as_f64(&arr[0], &format!("{path}[0]"))?,
        as_f64(&arr[1], &format!("{path}[1]"))?,
        as_f64(&arr[2], &format!("{path}[2]"))?,
    ))
}
