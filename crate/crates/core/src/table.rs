//! Precomputed quantizers for the standard models, stored as JSON.
//!
//! Numbers are written with 17 significant digits so a table reloads to
//! bit-identical specs.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionModel, ModelKind};
use crate::error::{Error, Result};
use crate::format::json_f64;
use crate::quantizer::{self, midpoint_boundaries, OptimizeOptions, QuantizerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub model_kind: ModelKind,
    pub bits: u32,
    #[serde(serialize_with = "json_f64::many")]
    pub levels: Vec<f64>,
    #[serde(serialize_with = "json_f64::many")]
    pub interior_boundaries: Vec<f64>,
    #[serde(serialize_with = "json_f64::one")]
    pub tol: f64,
    pub iterations: usize,
    #[serde(serialize_with = "json_f64::one")]
    pub distortion: f64,
}

impl TableEntry {
    /// Optimize the standard `kind` model at `bits`.
    pub fn compute(kind: ModelKind, bits: u32, opts: &OptimizeOptions) -> Result<Self> {
        let model = DistributionModel::standard(kind);
        let (spec, trace) = quantizer::optimize_with(&model, bits, opts)?;
        Ok(Self {
            model_kind: kind,
            bits,
            interior_boundaries: spec.interior_boundaries().to_vec(),
            levels: spec.levels,
            tol: opts.tol,
            iterations: trace.iteration_count,
            distortion: trace.final_distortion(),
        })
    }

    /// The stored quantizer, in standardized coordinates.
    pub fn spec(&self) -> Result<QuantizerSpec> {
        let k = self.levels.len();
        if self.interior_boundaries.len() + 1 != k {
            return Err(Error::format(
                "quantizer table",
                format!("{k} levels need {} interior boundaries", k.saturating_sub(1)),
            ));
        }
        let mut boundaries = Vec::with_capacity(k + 1);
        boundaries.push(f64::NEG_INFINITY);
        boundaries.extend_from_slice(&self.interior_boundaries);
        boundaries.push(f64::INFINITY);
        QuantizerSpec::from_parts(self.bits, self.levels.clone(), boundaries, self.model_kind, 0.0, 1.0)
    }

    /// Largest gap between a stored interior boundary and the midpoint of
    /// its neighbouring levels.
    pub fn midpoint_gap(&self) -> f64 {
        let mids = midpoint_boundaries(&self.levels);
        mids[1..mids.len() - 1]
            .iter()
            .zip(&self.interior_boundaries)
            .map(|(m, b)| (m - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantizerTable {
    pub entries: Vec<TableEntry>,
}

impl QuantizerTable {
    /// Entries for every kind in `kinds` and every width in `bits`, kind-major.
    pub fn compute(kinds: &[ModelKind], bits: &[u32], opts: &OptimizeOptions) -> Result<Self> {
        let mut entries = Vec::with_capacity(kinds.len() * bits.len());
        for &kind in kinds {
            for &b in bits {
                entries.push(TableEntry::compute(kind, b, opts)?);
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, kind: ModelKind, bits: u32) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.model_kind == kind && e.bits == bits)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        for e in &table.entries {
            e.spec()?;
        }
        Ok(table)
    }
}
