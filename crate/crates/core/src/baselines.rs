//! Reference quantizers to compare the optimal design against.
//!
//! Both baselines are built for a standardized model and pick their single
//! free parameter (the clip point) with a golden-section search.
//!
//! * Uniform: `K` equal intervals on `[-clip, clip]` with midpoint levels.
//!   The clip minimizes the clipped distortion, where values beyond the clip
//!   point are charged their distance to it.
//! * APoT: levels are sums of one power of two from each of two term sets,
//!   scaled so the largest level sits at the clip point.

use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionModel, ModelKind};
use crate::error::{Error, Result};
use crate::quantizer::{self, check_bits, midpoint_boundaries, DistortionReport, QuantizerSpec};

/// Search bracket for the clip point, in standard deviations / diversities.
pub const CLIP_SEARCH_MAX: f64 = 20.0;
pub const CLIP_SEARCH_TOL: f64 = 1e-6;

pub const APOT_MIN_BITS: u32 = 2;
pub const APOT_MAX_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Uniform,
    Apot,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 2] = [BaselineMethod::Uniform, BaselineMethod::Apot];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::Uniform => "uniform",
            BaselineMethod::Apot => "apot",
        }
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A baseline quantizer in standardized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub bits: u32,
    pub model_kind: ModelKind,
    pub levels: Vec<f64>,
    /// `K + 1` boundaries with finite outer entries `-clip` and `clip`.
    pub boundaries: Vec<f64>,
    pub clip: f64,
    /// APoT only: the distinct positive sums kept, before scaling, in
    /// increasing order. Level `K/2 + i` equals `clip * magnitudes[i] / max`.
    pub magnitudes: Vec<f64>,
}

impl BaselineSpec {
    /// The equivalent quantizer spec, keeping the finite clip boundaries.
    pub fn quantizer(&self) -> QuantizerSpec {
        QuantizerSpec {
            bits: self.bits,
            levels: self.levels.clone(),
            boundaries: self.boundaries.clone(),
            location_offset: 0.0,
            scale_factor: 1.0,
            model_kind: self.model_kind,
        }
    }

    /// Clipped distortion: values outside `[-clip, clip]` are charged their
    /// distance to the clip point.
    pub fn clipped_distortion(&self, model: &DistributionModel) -> DistortionReport {
        quantizer::distortion(&self.quantizer(), model)
    }

    /// Distortion of nearest-interval encoding with these levels, which is
    /// what the codec actually achieves.
    pub fn realized_distortion(&self, model: &DistributionModel) -> DistortionReport {
        quantizer::realized_distortion(&self.quantizer(), model)
    }
}

/// Minimize a unimodal `f` on `[lo, hi]`; returns `(x, f(x))`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn warn_if_at_edge(method: &str, kind: ModelKind, bits: u32, clip: f64) {
    if clip > CLIP_SEARCH_MAX - 10.0 * CLIP_SEARCH_TOL {
        log::warn!("{method} {kind} M={bits}: clip search stopped at the bracket edge {CLIP_SEARCH_MAX}");
    }
}

fn uniform_parts(bits: u32, clip: f64) -> (Vec<f64>, Vec<f64>) {
    let k = 1usize << bits;
    let width = 2.0 * clip / k as f64;
    let boundaries = (0..=k)
        .map(|i| if i == k { clip } else { -clip + width * i as f64 })
        .collect();
    let levels = (0..k).map(|i| -clip + width * (i as f64 + 0.5)).collect();
    (levels, boundaries)
}

fn uniform_with_clip(kind: ModelKind, bits: u32, clip: f64) -> BaselineSpec {
    let (levels, boundaries) = uniform_parts(bits, clip);
    BaselineSpec {
        method: BaselineMethod::Uniform,
        bits,
        model_kind: kind,
        levels,
        boundaries,
        clip,
        magnitudes: Vec::new(),
    }
}

/// Uniform quantizer for the standardized `model` with the clip chosen to
/// minimize the clipped distortion.
pub fn uniform_spec(model: &DistributionModel, bits: u32) -> Result<BaselineSpec> {
    check_bits(bits)?;
    let std_model = DistributionModel::standard(model.kind);
    let objective = |clip: f64| uniform_with_clip(model.kind, bits, clip).clipped_distortion(&std_model).total;
    let (clip, _) = golden_section_min(objective, 0.0, CLIP_SEARCH_MAX, CLIP_SEARCH_TOL);
    warn_if_at_edge("uniform", model.kind, bits, clip);
    Ok(uniform_with_clip(model.kind, bits, clip))
}

/// Uniform quantizer with an explicit clip.
pub fn uniform_spec_with_clip(kind: ModelKind, bits: u32, clip: f64) -> Result<BaselineSpec> {
    check_bits(bits)?;
    if !(clip > 0.0 && clip.is_finite()) {
        return Err(Error::InvalidArgument(format!("clip must be positive, got {clip}")));
    }
    Ok(uniform_with_clip(kind, bits, clip))
}

/// Bits given to each of the two APoT terms. Odd widths give the extra bit
/// to the first term.
pub fn apot_bit_split(bits: u32) -> (u32, u32) {
    (bits.div_ceil(2), bits / 2)
}

/// The two APoT term sets: term `j` with `n` bits holds 0 and
/// `2^-(2i + j)` for `i = 0 .. 2^n - 2`, so the terms interleave exponents.
pub fn apot_term_sets(bits: u32) -> [Vec<f64>; 2] {
    let (n0, n1) = apot_bit_split(bits);
    let set = |n: u32, j: i32| {
        let mut s = vec![0.0];
        s.extend((0..(1i32 << n) - 1).map(|i| 2f64.powi(-(2 * i + j))));
        s
    };
    [set(n0, 0), set(n1, 1)]
}

/// The `K/2` smallest distinct positive sums `p0 + p1`, increasing.
pub fn apot_magnitudes(bits: u32) -> Vec<f64> {
    let [t0, t1] = apot_term_sets(bits);
    let mut sums: Vec<f64> = t0
        .iter()
        .flat_map(|&p| t1.iter().map(move |&q| p + q))
        .filter(|&s| s > 0.0)
        .collect();
    sums.sort_by(f64::total_cmp);
    sums.dedup();
    sums.truncate(1 << (bits - 1));
    sums
}

fn apot_with_clip(kind: ModelKind, bits: u32, magnitudes: &[f64], clip: f64) -> BaselineSpec {
    let top = magnitudes[magnitudes.len() - 1];
    let positive: Vec<f64> = magnitudes.iter().map(|&m| clip * m / top).collect();
    let mut levels: Vec<f64> = positive.iter().rev().map(|&y| -y).collect();
    levels.extend_from_slice(&positive);
    let mut boundaries = midpoint_boundaries(&levels);
    let last = boundaries.len() - 1;
    boundaries[0] = -clip;
    boundaries[last] = clip;
    BaselineSpec {
        method: BaselineMethod::Apot,
        bits,
        model_kind: kind,
        levels,
        boundaries,
        clip,
        magnitudes: magnitudes.to_vec(),
    }
}

/// Two-term additive-powers-of-two quantizer for the standardized `model`.
pub fn apot_spec(model: &DistributionModel, bits: u32) -> Result<BaselineSpec> {
    if !(APOT_MIN_BITS..=APOT_MAX_BITS).contains(&bits) {
        return Err(Error::InvalidBitWidth(bits, APOT_MIN_BITS, APOT_MAX_BITS));
    }
    if bits % 2 == 1 {
        let (n0, n1) = apot_bit_split(bits);
        log::warn!("apot with odd bit width {bits}: splitting terms {n0}+{n1} bits");
    }
    let magnitudes = apot_magnitudes(bits);
    let std_model = DistributionModel::standard(model.kind);
    let objective = |clip: f64| apot_with_clip(model.kind, bits, &magnitudes, clip).clipped_distortion(&std_model).total;
    let (clip, _) = golden_section_min(objective, 0.0, CLIP_SEARCH_MAX, CLIP_SEARCH_TOL);
    warn_if_at_edge("apot", model.kind, bits, clip);
    Ok(apot_with_clip(model.kind, bits, &magnitudes, clip))
}

/// Build a baseline of either kind.
pub fn baseline_spec(method: BaselineMethod, model: &DistributionModel, bits: u32) -> Result<BaselineSpec> {
    match method {
        BaselineMethod::Uniform => uniform_spec(model, bits),
        BaselineMethod::Apot => apot_spec(model, bits),
    }
}
