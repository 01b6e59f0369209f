//! The `dfq` subcommands as library calls.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use dfq_core::codec::Tensor;
use dfq_core::format;
use dfq_core::quantizer::OptimizeOptions;
use dfq_core::synth;
use dfq_core::{DistributionModel, FitReport, ModelKind, QuantizerTable, TableEntry};

use crate::error::{CliError, Result};
use crate::manifest::{self, LoadedManifest, Manifest};
use crate::output::{write_atomic, write_json};
use crate::pipeline::{fit_tensor, keys_for, quantize_layer, DesignBank, Failure, FittedLayer, Method, ReportRow};

/// Counts behind the exit status of a per-layer command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTally {
    pub layers: usize,
    pub failed: usize,
}

impl LayerTally {
    /// Fails only when there were layers and none of them succeeded.
    pub fn check(&self) -> Result<()> {
        if self.layers > 0 && self.failed == self.layers {
            Err(CliError::AllLayersFailed(self.layers))
        } else {
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- tables

/// Optimize both standard models at every width and write the table.
pub fn tables(bits: &[u32], opts: &OptimizeOptions, out: &Path) -> Result<QuantizerTable> {
    let cells: Vec<(ModelKind, u32)> = ModelKind::ALL
        .iter()
        .flat_map(|&k| bits.iter().map(move |&b| (k, b)))
        .collect();
    let entries = cells
        .into_par_iter()
        .map(|(k, b)| TableEntry::compute(k, b, opts))
        .collect::<dfq_core::Result<Vec<_>>>()?;
    let table = QuantizerTable { entries };
    write_atomic(out, table.to_json()?.as_bytes())?;
    Ok(table)
}

pub fn read_table(path: &Path) -> Result<QuantizerTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    QuantizerTable::from_json(&text).map_err(|e| CliError::bad_input(path, e))
}

// ---------------------------------------------------------------- fit

/// Load and fit every tensor of a manifest, in manifest order.
pub fn load_layers(m: &LoadedManifest) -> Vec<std::result::Result<FittedLayer, Failure>> {
    m.manifest
        .tensors
        .par_iter()
        .map(|entry| {
            let tensor = m.load_tensor(entry).map_err(|e| Failure::layer(&entry.name, e))?;
            fit_tensor(tensor).map_err(|e| Failure::layer(&entry.name, e))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRow {
    pub layer: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub model_name: String,
    pub layers: Vec<FitRow>,
}

pub fn fit(manifest_path: &Path, out: &Path) -> Result<(FitOutput, LayerTally)> {
    let m = Manifest::load(manifest_path)?;
    let layers: Vec<FitRow> = load_layers(&m)
        .into_iter()
        .zip(&m.manifest.tensors)
        .map(|(r, entry)| match r {
            Ok(l) => FitRow {
                layer: entry.name.clone(),
                fit: Some(l.fit),
                error: None,
            },
            Err(f) => {
                log::warn!("layer {}: {}", f.layer, f.error);
                FitRow {
                    layer: entry.name.clone(),
                    fit: None,
                    error: Some(f.error),
                }
            }
        })
        .collect();
    let tally = LayerTally {
        layers: layers.len(),
        failed: layers.iter().filter(|l| l.error.is_some()).count(),
    };
    let output = FitOutput {
        model_name: m.manifest.model_name.clone(),
        layers,
    };
    write_json(out, &output)?;
    Ok((output, tally))
}

// ---------------------------------------------------------------- quantize

#[derive(Debug, Clone, Serialize)]
pub struct QuantizedFile {
    #[serde(flatten)]
    pub row: ReportRow,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantizeOutput {
    pub model_name: String,
    pub bits: u32,
    pub method: Method,
    pub layers: Vec<QuantizedFile>,
    pub failures: Vec<Failure>,
}

pub const QUANTIZE_REPORT: &str = "quantize_report.json";

/// Quantize every layer with one method and width. Each layer is written
/// to `out_dir` as a QDFQ file; the report goes to `out_dir/quantize_report.json`.
pub fn quantize(
    manifest_path: &Path,
    bits: u32,
    method: Method,
    out_dir: &Path,
    bank: &mut DesignBank,
) -> Result<(QuantizeOutput, LayerTally)> {
    dfq_core::quantizer::check_bits(bits)?;
    if method == Method::Apot {
        check_apot_bits(bits)?;
    }
    let m = Manifest::load(manifest_path)?;
    let loaded = load_layers(&m);
    let fitted: Vec<&FittedLayer> = loaded.iter().filter_map(|r| r.as_ref().ok()).collect();
    bank.ensure(keys_for(fitted.iter().copied(), &[method], &[bits]));
    let stems = unique_stems(&m.manifest);

    let results: Vec<std::result::Result<QuantizedFile, Failure>> = loaded
        .par_iter()
        .zip(&stems)
        .map(|(r, stem)| {
            let layer = r.as_ref().map_err(Clone::clone)?;
            let name = &layer.tensor.name;
            let (row, q) = quantize_layer(layer, method, bits, bank).map_err(|e| Failure::layer(name, e))?;
            let file = format!("{stem}.qdfq");
            let bytes = format::quantized_to_bytes(&q).map_err(|e| Failure::layer(name, e))?;
            write_atomic(&out_dir.join(&file), &bytes).map_err(|e| Failure::layer(name, e))?;
            Ok(QuantizedFile { row, file })
        })
        .collect();

    let mut layers = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => layers.push(f),
            Err(f) => {
                log::warn!("layer {}: {}", f.layer, f.error);
                failures.push(f);
            }
        }
    }
    let tally = LayerTally {
        layers: m.manifest.tensors.len(),
        failed: failures.len(),
    };
    let output = QuantizeOutput {
        model_name: m.manifest.model_name.clone(),
        bits,
        method,
        layers,
        failures,
    };
    write_json(&out_dir.join(QUANTIZE_REPORT), &output)?;
    Ok((output, tally))
}

fn check_apot_bits(bits: u32) -> Result<()> {
    use dfq_core::baselines::{APOT_MAX_BITS, APOT_MIN_BITS};
    if (APOT_MIN_BITS..=APOT_MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(dfq_core::Error::InvalidBitWidth(bits, APOT_MIN_BITS, APOT_MAX_BITS).into())
    }
}

/// File stems for the manifest's tensors, made distinct.
fn unique_stems(m: &Manifest) -> Vec<String> {
    let mut used = std::collections::HashSet::new();
    m.tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut stem = manifest::file_stem(&t.name);
            if !used.insert(stem.clone()) {
                stem = format!("{stem}-{i}");
                used.insert(stem.clone());
            }
            stem
        })
        .collect()
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, Serialize)]
pub struct CompareOutput {
    pub model_name: String,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<Failure>,
}

impl CompareOutput {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
        w.write_record(ReportRow::HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.csv_record()).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))
    }
}

/// Cross every layer with every width and method. Writes the CSV to `out`
/// and a JSON twin next to it (same stem, `.json`).
pub fn compare(manifest_path: &Path, bits: &[u32], out: &Path, bank: &mut DesignBank) -> Result<(CompareOutput, LayerTally)> {
    let m = Manifest::load(manifest_path)?;
    let loaded = load_layers(&m);
    let fitted: Vec<&FittedLayer> = loaded.iter().filter_map(|r| r.as_ref().ok()).collect();
    bank.ensure(keys_for(fitted.iter().copied(), &Method::ALL, bits));

    let per_layer: Vec<(Vec<ReportRow>, Vec<Failure>)> = loaded
        .par_iter()
        .map(|r| {
            let layer = match r {
                Ok(l) => l,
                Err(f) => return (Vec::new(), vec![f.clone()]),
            };
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for &b in bits {
                for method in Method::ALL {
                    match quantize_layer(layer, method, b, bank) {
                        Ok((row, _)) => rows.push(row),
                        Err(e) => failures.push(Failure {
                            layer: layer.tensor.name.clone(),
                            bits: Some(b),
                            method: Some(method),
                            error: e,
                        }),
                    }
                }
            }
            (rows, failures)
        })
        .collect();

    let tally = LayerTally {
        layers: per_layer.len(),
        failed: per_layer.iter().filter(|(rows, _)| rows.is_empty()).count(),
    };
    let mut output = CompareOutput {
        model_name: m.manifest.model_name.clone(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for (rows, failures) in per_layer {
        for f in &failures {
            log::warn!("layer {}: {}", f.layer, f.error);
        }
        output.rows.extend(rows);
        output.failures.extend(failures);
    }
    write_atomic(out, &output.to_csv()?)?;
    write_json(&json_twin(out), &output)?;
    Ok((output, tally))
}

pub fn json_twin(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKinds {
    /// Alternate Gaussian and Laplace layers.
    Mixed,
    Gaussian,
    Laplace,
}

/// Write `layers` random tensors of `size` values and their manifest.
/// Every layer gets its own location, scale and sample seed drawn from
/// `seed`, so the output is a pure function of the arguments.
pub fn synth(out_dir: &Path, layers: usize, size: usize, seed: u64, kinds: SynthKinds) -> Result<PathBuf> {
    let mut rng = synth::rng(seed);
    let tensors = (0..layers)
        .map(|i| {
            let kind = match kinds {
                SynthKinds::Gaussian => ModelKind::Gaussian,
                SynthKinds::Laplace => ModelKind::Laplace,
                SynthKinds::Mixed if i % 2 == 0 => ModelKind::Gaussian,
                SynthKinds::Mixed => ModelKind::Laplace,
            };
            let location = rng.random_range(-0.01..0.01);
            let scale = rng.random_range(0.01..0.1);
            let layer_seed: u64 = rng.random();
            let model = DistributionModel::new(kind, location, scale)?;
            let name = format!("layer{i}.weight");
            Ok(Tensor::vector(name, synth::sample_f32(&model, size, layer_seed))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let label = format!("synthetic-{}-seed{seed}", format!("{kinds:?}").to_lowercase());
    manifest::write_tensors(out_dir, &label, &tensors)
}
