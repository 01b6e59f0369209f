//! MSE-optimal K-level scalar quantizer design.
//!
//! The optimum satisfies two coupled conditions: every level is the
//! conditional mean of its interval, and every interior boundary is the
//! midpoint of its two neighbouring levels. [`optimize`] alternates the two
//! updates until the levels stop moving. Each half-step can only lower the
//! expected squared error, so the recorded distortion sequence is
//! non-increasing.
//!
//! Specs live in standardized coordinates; `location_offset` and
//! `scale_factor` map them back to weight units.

use crate::distributions::{self, DistributionModel, ModelKind};
use crate::error::{Error, Result};
use crate::special::NeumaierSum;

pub const MIN_BITS: u32 = 1;
pub const MAX_BITS: u32 = 16;

pub const DEFAULT_TOL: f64 = 1e-9;
/// Enough for both standard models up to 8 bits, which need roughly 90k
/// iterations from the symmetric start.
pub const DEFAULT_MAX_ITER: usize = 200_000;

/// Intervals holding less than this share of the probability abort the
/// iteration: two levels have collapsed onto each other.
const COLLAPSE_MASS: f64 = 1e-12;

pub fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidBitWidth(bits, MIN_BITS, MAX_BITS))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    pub bits: u32,
    /// `K = 2^bits` reconstruction levels, strictly increasing.
    pub levels: Vec<f64>,
    /// `K + 1` boundaries; the outer two are usually infinite.
    pub boundaries: Vec<f64>,
    pub location_offset: f64,
    pub scale_factor: f64,
    pub model_kind: ModelKind,
}

impl QuantizerSpec {
    /// Build a spec from explicit levels and boundaries, checking structure.
    pub fn from_parts(
        bits: u32,
        levels: Vec<f64>,
        boundaries: Vec<f64>,
        model_kind: ModelKind,
        location_offset: f64,
        scale_factor: f64,
    ) -> Result<Self> {
        let spec = Self {
            bits,
            levels,
            boundaries,
            location_offset,
            scale_factor,
            model_kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Levels with midpoint boundaries and infinite outer boundaries.
    pub fn from_levels(bits: u32, levels: Vec<f64>, model_kind: ModelKind) -> Result<Self> {
        let boundaries = midpoint_boundaries(&levels);
        Self::from_parts(bits, levels, boundaries, model_kind, 0.0, 1.0)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn interior_boundaries(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        let k = 1usize << self.bits;
        let bad = |reason: String| Err(Error::format("quantizer spec", reason));
        if self.levels.len() != k {
            return bad(format!("expected {k} levels, found {}", self.levels.len()));
        }
        if self.boundaries.len() != k + 1 {
            return bad(format!("expected {} boundaries, found {}", k + 1, self.boundaries.len()));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) || !self.location_offset.is_finite() {
            return bad("offset must be finite and scale positive".into());
        }
        if self.levels.iter().any(|y| !y.is_finite()) {
            return bad("levels must be finite".into());
        }
        if self.boundaries.iter().any(|x| x.is_nan()) || self.interior_boundaries().iter().any(|x| !x.is_finite()) {
            return bad("interior boundaries must be finite".into());
        }
        if self.levels.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("levels must be strictly increasing".into());
        }
        for (i, &y) in self.levels.iter().enumerate() {
            let (lo, hi) = (self.boundaries[i], self.boundaries[i + 1]);
            // Finite outer boundaries may coincide with the outer level
            // (a level placed on the clip point).
            let inside_lo = lo < y || (i == 0 && lo == y);
            let inside_hi = y < hi || (i + 1 == k && hi == y);
            if !(inside_lo && inside_hi) {
                return bad(format!("level {y} is outside its interval [{lo}, {hi})"));
            }
        }
        Ok(())
    }

    /// Same levels and boundaries, re-targeted at `model`'s location and scale.
    pub fn with_affine(mut self, location_offset: f64, scale_factor: f64) -> Self {
        self.location_offset = location_offset;
        self.scale_factor = scale_factor;
        self
    }

    pub fn to_original(&self, z: f64) -> f64 {
        self.location_offset + self.scale_factor * z
    }

    pub fn to_standardized(&self, x: f64) -> f64 {
        (x - self.location_offset) / self.scale_factor
    }

    /// Levels in weight units.
    pub fn original_levels(&self) -> Vec<f64> {
        self.levels.iter().map(|&y| self.to_original(y)).collect()
    }

    /// Index of the interval holding the standardized value `z`.
    /// A value exactly on a boundary belongs to the interval on its right.
    #[inline]
    pub fn interval_of(&self, z: f64) -> usize {
        self.interior_boundaries().partition_point(|&b| b <= z)
    }

    /// Is every outer boundary infinite (no explicit clipping)?
    pub fn is_unclipped(&self) -> bool {
        self.boundaries[0] == f64::NEG_INFINITY && self.boundaries[self.boundaries.len() - 1] == f64::INFINITY
    }

    /// The model as seen in this spec's standardized coordinates.
    fn model_in_spec_coordinates(&self, model: &DistributionModel) -> DistributionModel {
        DistributionModel {
            kind: model.kind,
            location: (model.location - self.location_offset) / self.scale_factor,
            scale: model.scale / self.scale_factor,
        }
    }
}

/// Interior midpoints with infinite outer boundaries.
pub fn midpoint_boundaries(levels: &[f64]) -> Vec<f64> {
    let mut b = Vec::with_capacity(levels.len() + 1);
    b.push(f64::NEG_INFINITY);
    b.extend(levels.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    b.push(f64::INFINITY);
    b
}

/// Starting point for the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    /// `y_i = 2 (i - (K + 1) / 2) / K`: step `2/K`, centred on zero.
    #[default]
    Symmetric,
    /// `y_i = 2 i / K`, all positive.
    Positive,
}

pub fn init_spec(bits: u32, model_kind: ModelKind) -> Result<QuantizerSpec> {
    init_spec_with(bits, model_kind, Initialization::Symmetric)
}

pub fn init_spec_with(bits: u32, model_kind: ModelKind, init: Initialization) -> Result<QuantizerSpec> {
    check_bits(bits)?;
    let k = 1usize << bits;
    let kf = k as f64;
    let levels: Vec<f64> = (1..=k)
        .map(|i| match init {
            Initialization::Symmetric => 2.0 * (i as f64 - (kf + 1.0) / 2.0) / kf,
            Initialization::Positive => 2.0 * i as f64 / kf,
        })
        .collect();
    QuantizerSpec::from_levels(bits, levels, model_kind)
}

/// Conditional-mean levels for fixed boundaries.
fn conditional_means(boundaries: &[f64], model: &DistributionModel) -> Result<Vec<f64>> {
    boundaries.windows(2).map(|w| model.truncated_mean(w[0], w[1])).collect()
}

/// Replace every level by the conditional mean of its interval.
pub fn update_levels(spec: &QuantizerSpec, model: &DistributionModel) -> Result<QuantizerSpec> {
    let local = spec.model_in_spec_coordinates(model);
    let levels = conditional_means(&spec.boundaries, &local)?;
    Ok(QuantizerSpec {
        levels,
        ..spec.clone()
    })
}

/// Move every interior boundary to the midpoint of its neighbouring levels.
/// The outer boundaries become infinite.
pub fn update_boundaries(spec: &QuantizerSpec) -> QuantizerSpec {
    QuantizerSpec {
        boundaries: midpoint_boundaries(&spec.levels),
        ..spec.clone()
    }
}

/// Expected squared error split into clipping and in-range parts.
/// Values are in the spec's standardized units; multiply by
/// `scale_factor^2` for weight units.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub clipping_error: f64,
    pub quantization_error: f64,
    pub total: f64,
    pub per_interval: Vec<f64>,
}

impl DistortionReport {
    pub fn in_original_units(&self, scale_factor: f64) -> f64 {
        self.total * scale_factor * scale_factor
    }
}

/// Analytic distortion of `spec` under `model`.
///
/// Each interval contributes `integral (x - y_i)^2 f(x)` over `[x_{i-1}, x_i)`.
/// Finite outer boundaries add the clipping error: everything below `x_0` is
/// charged its squared distance to `x_0`, likewise above `x_K`.
pub fn distortion(spec: &QuantizerSpec, model: &DistributionModel) -> DistortionReport {
    let local = spec.model_in_spec_coordinates(model);
    let per_interval: Vec<f64> = spec
        .boundaries
        .windows(2)
        .zip(&spec.levels)
        .map(|(w, &y)| local.truncated_second_moment(w[0], w[1], y))
        .collect();
    let quantization_error = per_interval.iter().copied().collect::<NeumaierSum>().total();
    let lo = spec.boundaries[0];
    let hi = spec.boundaries[spec.boundaries.len() - 1];
    let mut clipping_error = 0.0;
    if lo.is_finite() {
        clipping_error += local.truncated_second_moment(f64::NEG_INFINITY, lo, lo);
    }
    if hi.is_finite() {
        clipping_error += local.truncated_second_moment(hi, f64::INFINITY, hi);
    }
    DistortionReport {
        clipping_error,
        quantization_error,
        total: clipping_error + quantization_error,
        per_interval,
    }
}

/// Distortion of the quantizer actually realized by nearest-interval
/// encoding: the outer intervals extend to infinity, so inputs beyond a
/// finite clip point land on the outermost level.
pub fn realized_distortion(spec: &QuantizerSpec, model: &DistributionModel) -> DistortionReport {
    if spec.is_unclipped() {
        return distortion(spec, model);
    }
    let mut open = spec.clone();
    let last = open.boundaries.len() - 1;
    open.boundaries[0] = f64::NEG_INFINITY;
    open.boundaries[last] = f64::INFINITY;
    distortion(&open, model)
}

/// Distance from the two optimality conditions:
/// `(max_i |y_i - E[X | interval i]|, max_i |x_i - (y_i + y_{i+1}) / 2|)`.
pub fn residuals(spec: &QuantizerSpec, model: &DistributionModel) -> Result<(f64, f64)> {
    let local = spec.model_in_spec_coordinates(model);
    let means = conditional_means(&spec.boundaries, &local)?;
    let level = spec
        .levels
        .iter()
        .zip(&means)
        .map(|(y, m)| (y - m).abs())
        .fold(0.0, f64::max);
    let boundary = spec
        .interior_boundaries()
        .iter()
        .zip(spec.levels.windows(2))
        .map(|(x, w)| (x - 0.5 * (w[0] + w[1])).abs())
        .fold(0.0, f64::max);
    Ok((level, boundary))
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Stop once no level moves by this much in one iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Initialization,
    /// Keep a copy of levels and boundaries after every iteration.
    pub record_snapshots: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: Initialization::Symmetric,
            record_snapshots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub levels: Vec<f64>,
    pub boundaries: Vec<f64>,
}

#[derive(Clone, PartialEq, Default)]
pub struct IterationTrace {
    /// Distortion of the starting spec followed by one entry per iteration.
    pub distortions: Vec<f64>,
    /// Largest level movement in each iteration.
    pub level_changes: Vec<f64>,
    /// Exact distortion decrease of each iteration, summed from the closed
    /// forms of the two half-steps. Unlike differences of `distortions`,
    /// these stay resolvable after the decrease drops below one ulp of the
    /// distortion itself.
    pub improvements: Vec<f64>,
    /// Filled only with [`OptimizeOptions::record_snapshots`].
    pub snapshots: Vec<Snapshot>,
    pub iteration_count: usize,
    pub converged: bool,
    pub final_residual: f64,
}

impl std::fmt::Debug for IterationTrace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IterationTrace")
            .field("iteration_count", &self.iteration_count)
            .field("converged", &self.converged)
            .field("final_residual", &self.final_residual)
            .field("total_improvement", &self.improvements.iter().sum::<f64>())
            .field("initial_distortion", &self.distortions.first())
            .field("final_distortion", &self.distortions.last())
            .field("snapshots", &self.snapshots.len())
            .finish()
    }
}

impl IterationTrace {
    pub fn final_distortion(&self) -> f64 {
        *self.distortions.last().expect("trace always holds the initial distortion")
    }

    /// Iterations (1-based) before the converging one whose exact
    /// improvement is not strictly positive. The converging iteration is
    /// exempt: at an exact fixed point it legitimately changes nothing.
    pub fn decrease_violations(&self) -> Vec<usize> {
        let checked = if self.converged {
            self.iteration_count.saturating_sub(1)
        } else {
            self.iteration_count
        };
        self.improvements[..checked]
            .iter()
            .enumerate()
            .filter(|(_, &g)| !(g > 0.0))
            .map(|(k, _)| k + 1)
            .collect()
    }

    /// Largest rise of the recomputed distortion between consecutive
    /// iterations, relative to the distortion (0 when it never rises).
    pub fn max_relative_rise(&self) -> f64 {
        self.distortions
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .fold(0.0, f64::max)
    }

    /// Iterations (1-based) whose recomputed distortion is not strictly
    /// below the previous one even though the exact improvement exceeds
    /// `resolution * distortion`.
    pub fn resolvable_stalls(&self, resolution: f64) -> Vec<usize> {
        self.distortions
            .windows(2)
            .zip(&self.improvements)
            .enumerate()
            .filter(|(_, (w, &g))| g > resolution * w[0] && !(w[1] < w[0]))
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Design the optimal quantizer for `model` with `bits` bits.
pub fn optimize(model: &DistributionModel, bits: u32, tol: f64, max_iter: usize) -> Result<(QuantizerSpec, IterationTrace)> {
    optimize_with(
        model,
        bits,
        &OptimizeOptions {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

/// [`optimize`] with full control over the options.
///
/// The iteration runs on the standard model; the returned spec carries the
/// model's location and scale so [`QuantizerSpec::original_levels`] gives
/// levels in weight units. On [`Error::NoConvergence`] the last spec and the
/// trace are still available inside the error.
pub fn optimize_with(model: &DistributionModel, bits: u32, opts: &OptimizeOptions) -> Result<(QuantizerSpec, IterationTrace)> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let standard = DistributionModel::standard(model.kind);
    let mut spec = init_spec_with(bits, model.kind, opts.init)?;
    let mut trace = IterationTrace {
        distortions: vec![distortion(&spec, &standard).total],
        ..Default::default()
    };
    if opts.record_snapshots {
        trace.snapshots.push(Snapshot {
            levels: spec.levels.clone(),
            boundaries: spec.boundaries.clone(),
        });
    }

    let mut collapsed = false;
    for iteration in 1..=opts.max_iter {
        let stats: Option<Vec<(f64, f64)>> = spec
            .boundaries
            .windows(2)
            .map(|w| distributions::std_interval(model.kind, w[0], w[1]))
            .collect();
        let Some(stats) = stats.filter(|s| s.iter().all(|&(mass, _)| mass >= COLLAPSE_MASS)) else {
            collapsed = true;
            break;
        };

        // Level step: moving y to the conditional mean m saves P (y - m)^2.
        let mut gain = NeumaierSum::default();
        let mut change = 0.0f64;
        for (y, &(mass, mean)) in spec.levels.iter_mut().zip(&stats) {
            let delta = *y - mean;
            gain.add(mass * delta * delta);
            change = change.max(delta.abs());
            *y = mean;
        }
        // Boundary step: moving x from t to the midpoint m of (y_i, y_{i+1})
        // saves 2 (y_{i+1} - y_i) * integral |x - m| f between t and m.
        let boundaries = midpoint_boundaries(&spec.levels);
        for (i, (&old, &new)) in spec.boundaries.iter().zip(&boundaries).enumerate().skip(1).take(spec.levels.len() - 1) {
            let gap = spec.levels[i] - spec.levels[i - 1];
            gain.add(2.0 * gap * distributions::std_abs_moment_between(model.kind, new, old));
        }
        spec.boundaries = boundaries;

        trace.iteration_count = iteration;
        trace.level_changes.push(change);
        trace.improvements.push(gain.total());
        trace.distortions.push(distortion(&spec, &standard).total);
        trace.final_residual = change;
        if opts.record_snapshots {
            trace.snapshots.push(Snapshot {
                levels: spec.levels.clone(),
                boundaries: spec.boundaries.clone(),
            });
        }
        if change < opts.tol {
            trace.converged = true;
            break;
        }
    }

    let spec = spec.with_affine(model.location, model.scale);
    if trace.converged {
        Ok((spec, trace))
    } else {
        if collapsed {
            log::warn!("quantizer iteration collapsed an interval below mass {COLLAPSE_MASS}");
        }
        Err(Error::NoConvergence(Box::new((spec, trace))))
    }
}

/// Like [`optimize_with`], but an exhausted iteration budget yields the last
/// spec (with a warning) instead of an error.
pub fn optimize_lenient(model: &DistributionModel, bits: u32, opts: &OptimizeOptions) -> Result<(QuantizerSpec, IterationTrace)> {
    match optimize_with(model, bits, opts) {
        Err(Error::NoConvergence(inner)) => {
            let (spec, trace) = *inner;
            log::warn!(
                "{} {}-bit quantizer stopped after {} iterations (last level change {:.3e})",
                model.kind,
                bits,
                trace.iteration_count,
                trace.final_residual
            );
            Ok((spec, trace))
        }
        other => other,
    }
}
