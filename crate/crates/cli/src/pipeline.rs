//! Per-layer work: fit, design (shared across layers), encode, measure.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use dfq_core::baselines::{baseline_spec, BaselineMethod};
use dfq_core::codec::{decode, empirical_mse, encode, QuantizedTensor, Tensor};
use dfq_core::format::json_f64;
use dfq_core::quantizer::{self, OptimizeOptions, QuantizerSpec};
use dfq_core::{select_distribution, DistributionModel, FitReport, ModelKind, QuantizerTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Optimal,
    Uniform,
    Apot,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Optimal, Method::Uniform, Method::Apot];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Optimal => "optimal",
            Method::Uniform => "uniform",
            Method::Apot => "apot",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of a comparison or quantization report. MSE values are in the
/// tensor's own units squared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub layer: String,
    pub bits: u32,
    pub method: Method,
    pub fitted_kind: ModelKind,
    #[serde(serialize_with = "json_f64::one")]
    pub ks_gaussian: f64,
    #[serde(serialize_with = "json_f64::one")]
    pub ks_laplace: f64,
    #[serde(serialize_with = "json_f64::one")]
    pub analytic_mse: f64,
    #[serde(serialize_with = "json_f64::one")]
    pub empirical_mse: f64,
}

impl ReportRow {
    pub const HEADER: [&'static str; 8] = [
        "layer",
        "bits",
        "method",
        "fitted_kind",
        "ks_gaussian",
        "ks_laplace",
        "analytic_mse",
        "empirical_mse",
    ];

    pub fn csv_record(&self) -> [String; 8] {
        use crate::output::sig9;
        [
            self.layer.clone(),
            self.bits.to_string(),
            self.method.to_string(),
            self.fitted_kind.to_string(),
            sig9(self.ks_gaussian),
            sig9(self.ks_laplace),
            sig9(self.analytic_mse),
            sig9(self.empirical_mse),
        ]
    }
}

/// A per-layer (or per-cell) failure kept in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub layer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub error: String,
}

impl Failure {
    pub fn layer(layer: &str, error: impl ToString) -> Self {
        Self {
            layer: layer.to_string(),
            bits: None,
            method: None,
            error: error.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedLayer {
    pub tensor: Tensor,
    pub fit: FitReport,
}

pub fn fit_tensor(tensor: Tensor) -> dfq_core::Result<FittedLayer> {
    let fit = select_distribution(&tensor.values_f64())?;
    Ok(FittedLayer { tensor, fit })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DesignSettings {
    pub optimize: OptimizeOptions,
}

/// A standardized quantizer and its analytic distortion under the standard
/// model of its kind.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: QuantizerSpec,
    pub distortion: f64,
}

pub type DesignKey = (Method, ModelKind, u32);

/// Designs shared by every layer with the same (method, kind, bits).
/// Optimal designs can be seeded from a precomputed table.
#[derive(Debug, Default)]
pub struct DesignBank {
    settings: DesignSettings,
    designs: BTreeMap<DesignKey, Result<Design, String>>,
}

fn design(key: DesignKey, settings: &DesignSettings) -> dfq_core::Result<Design> {
    let (method, kind, bits) = key;
    let model = DistributionModel::standard(kind);
    match method {
        Method::Optimal => {
            let (spec, trace) = quantizer::optimize_with(&model, bits, &settings.optimize)?;
            log::info!("optimal {kind} M={bits}: {} iterations", trace.iteration_count);
            Ok(Design {
                distortion: trace.final_distortion(),
                spec,
            })
        }
        Method::Uniform | Method::Apot => {
            let base = if method == Method::Uniform {
                BaselineMethod::Uniform
            } else {
                BaselineMethod::Apot
            };
            let b = baseline_spec(base, &model, bits)?;
            Ok(Design {
                distortion: b.realized_distortion(&model).total,
                spec: b.quantizer(),
            })
        }
    }
}

impl DesignBank {
    pub fn new(settings: DesignSettings) -> Self {
        Self {
            settings,
            designs: BTreeMap::new(),
        }
    }

    /// Preload optimal designs from a table computed with the same tolerance.
    pub fn seed_from_table(&mut self, table: &QuantizerTable) -> dfq_core::Result<()> {
        for e in &table.entries {
            if e.tol != self.settings.optimize.tol {
                log::warn!("table entry {} M={} has tol {}; recomputing", e.model_kind, e.bits, e.tol);
                continue;
            }
            let design = Design {
                spec: e.spec()?,
                distortion: e.distortion,
            };
            self.designs.insert((Method::Optimal, e.model_kind, e.bits), Ok(design));
        }
        Ok(())
    }

    /// Compute every missing design, in parallel.
    pub fn ensure(&mut self, keys: impl IntoIterator<Item = DesignKey>) {
        let missing: BTreeSet<DesignKey> = keys.into_iter().filter(|k| !self.designs.contains_key(k)).collect();
        let settings = self.settings;
        let fresh: Vec<_> = missing
            .into_par_iter()
            .map(|k| (k, design(k, &settings).map_err(|e| e.to_string())))
            .collect();
        self.designs.extend(fresh);
    }

    pub fn get(&self, key: DesignKey) -> Result<&Design, String> {
        match self.designs.get(&key) {
            Some(Ok(d)) => Ok(d),
            Some(Err(e)) => Err(e.clone()),
            None => Err(format!("no design for {} {} M={}", key.0, key.1, key.2)),
        }
    }
}

/// Encode one fitted layer with a prepared design and measure its error.
pub fn quantize_layer(
    layer: &FittedLayer,
    method: Method,
    bits: u32,
    bank: &DesignBank,
) -> Result<(ReportRow, QuantizedTensor), String> {
    let model = layer.fit.selected_model();
    let design = bank.get((method, model.kind, bits))?;
    let spec = design.spec.clone().with_affine(model.location, model.scale);
    let q = encode(&layer.tensor, &spec).map_err(|e| e.to_string())?;
    let rec = decode(&q).map_err(|e| e.to_string())?;
    let empirical = empirical_mse(&layer.tensor, &rec).map_err(|e| e.to_string())?;
    let row = ReportRow {
        layer: layer.tensor.name.clone(),
        bits,
        method,
        fitted_kind: model.kind,
        ks_gaussian: layer.fit.ks_gaussian,
        ks_laplace: layer.fit.ks_laplace,
        analytic_mse: design.distortion * model.scale * model.scale,
        empirical_mse: empirical,
    };
    Ok((row, q))
}

/// Keys needed to quantize `layers` with every method and width given.
pub fn keys_for<'a>(
    layers: impl IntoIterator<Item = &'a FittedLayer>,
    methods: &'a [Method],
    bits: &'a [u32],
) -> BTreeSet<DesignKey> {
    let mut keys = BTreeSet::new();
    for l in layers {
        for &m in methods {
            for &b in bits {
                keys.insert((m, l.fit.selected, b));
            }
        }
    }
    keys
}
