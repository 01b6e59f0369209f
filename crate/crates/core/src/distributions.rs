//! Gaussian and Laplace weight models.
//!
//! Everything is evaluated in standardized coordinates `z = (x - location) / scale`
//! and mapped back, so the closed forms only ever see the unit-scale densities.
//! Conditional means use the closed forms directly:
//!
//! * Gaussian: `E[Z | a < Z < b] = (phi(a) - phi(b)) / (Phi(b) - Phi(a))`
//! * Laplace, `0 <= a < b`: `((a + 1) e^-a - (b + 1) e^-b) / (e^-a - e^-b)`,
//!   extended to negative intervals by odd symmetry and to intervals that
//!   straddle zero by mass-weighting the two sign-pure halves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gauss_legendre, norm_cdf, norm_mass, norm_pdf, norm_sf};

/// Intervals with less probability than this are treated as empty.
pub const MASS_FLOOR: f64 = 1e-300;

/// Finite intervals narrower than this (in standardized units) get their
/// Gaussian conditional mean by quadrature instead of the closed form,
/// which loses digits to cancellation there.
const NARROW_INTERVAL: f64 = 1e-2;

/// Panel width for the composite Gauss-Legendre rule on finite intervals.
const GL_PANEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    Laplace,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Gaussian, ModelKind::Laplace];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Laplace => "laplace",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ModelKind::Gaussian),
            "laplace" | "laplacian" => Ok(ModelKind::Laplace),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A location/scale density. `scale` is the standard deviation for the
/// Gaussian and the diversity `b` for the Laplace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionModel {
    pub kind: ModelKind,
    pub location: f64,
    pub scale: f64,
}

impl DistributionModel {
    pub fn new(kind: ModelKind, location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::InvalidArgument(format!("location must be finite, got {location}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be positive and finite, got {scale}")));
        }
        Ok(Self { kind, location, scale })
    }

    pub fn standard(kind: ModelKind) -> Self {
        Self {
            kind,
            location: 0.0,
            scale: 1.0,
        }
    }

    pub fn gaussian(mean: f64, std_dev: f64) -> Result<Self> {
        Self::new(ModelKind::Gaussian, mean, std_dev)
    }

    pub fn laplace(location: f64, diversity: f64) -> Result<Self> {
        Self::new(ModelKind::Laplace, location, diversity)
    }

    pub fn is_standard(&self) -> bool {
        self.location == 0.0 && self.scale == 1.0
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            ModelKind::Gaussian => self.scale * self.scale,
            ModelKind::Laplace => 2.0 * self.scale * self.scale,
        }
    }

    #[inline]
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.location) / self.scale
    }

    #[inline]
    pub fn destandardize(&self, z: f64) -> f64 {
        self.location + self.scale * z
    }

    pub fn pdf(&self, x: f64) -> f64 {
        std_pdf(self.kind, self.standardize(x)) / self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_cdf(self.kind, self.standardize(x))
    }

    /// `P(a < X < b)`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        std_mass(self.kind, self.standardize(a), self.standardize(b))
    }

    /// `E[X | a < X < b]`.
    pub fn truncated_mean(&self, a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Err(Error::InvalidArgument(format!("empty interval ({a}, {b})")));
        }
        let za = self.standardize(a);
        let zb = self.standardize(b);
        std_truncated_mean(self.kind, za, zb)
            .map(|m| self.destandardize(m))
            .ok_or(Error::ZeroMassInterval { a, b })
    }

    /// `integral over (a, b) of (x - y)^2 f(x) dx`, not normalized by the
    /// interval mass.
    pub fn truncated_second_moment(&self, a: f64, b: f64, y: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        let s = self.scale;
        s * s * std_second_moment(self.kind, self.standardize(a), self.standardize(b), self.standardize(y))
    }
}

// --- standardized densities -------------------------------------------------

pub(crate) fn std_pdf(kind: ModelKind, z: f64) -> f64 {
    match kind {
        ModelKind::Gaussian => norm_pdf(z),
        ModelKind::Laplace => 0.5 * (-z.abs()).exp(),
    }
}

pub(crate) fn std_cdf(kind: ModelKind, z: f64) -> f64 {
    match kind {
        ModelKind::Gaussian => norm_cdf(z),
        ModelKind::Laplace => {
            if z < 0.0 {
                0.5 * z.exp()
            } else {
                1.0 - 0.5 * (-z).exp()
            }
        }
    }
}

/// Laplace mass of `[a, b]` with `0 <= a < b <= inf`.
fn laplace_mass_pos(a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        0.5 * (-a).exp()
    } else {
        -0.5 * (-a).exp() * (-(b - a)).exp_m1()
    }
}

pub(crate) fn std_mass(kind: ModelKind, a: f64, b: f64) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    match kind {
        ModelKind::Gaussian => norm_mass(a, b),
        ModelKind::Laplace => {
            if a >= 0.0 {
                laplace_mass_pos(a, b)
            } else if b <= 0.0 {
                laplace_mass_pos(-b, -a)
            } else {
                -0.5 * a.exp_m1() - 0.5 * (-b).exp_m1()
            }
        }
    }
}

/// Conditional mean of the standard Laplace on `[a, b]`, `0 <= a < b`.
fn laplace_mean_pos(a: f64, b: f64) -> f64 {
    let d = b - a;
    if d.is_infinite() {
        return a + 1.0;
    }
    // a + 1 - d / (e^d - 1), with a series where the subtraction cancels.
    if d < 1e-3 {
        let d2 = d * d;
        a + d / 2.0 - d2 / 12.0 + d2 * d2 / 720.0
    } else {
        a + 1.0 - d / d.exp_m1()
    }
}

/// `E[Z | a < Z < b]` for the standardized model, `None` below the mass floor.
pub(crate) fn std_truncated_mean(kind: ModelKind, a: f64, b: f64) -> Option<f64> {
    std_interval(kind, a, b).map(|(_, mean)| mean)
}

/// `(P(a < Z < b), E[Z | a < Z < b])`, `None` below the mass floor.
pub(crate) fn std_interval(kind: ModelKind, a: f64, b: f64) -> Option<(f64, f64)> {
    let mass = std_mass(kind, a, b);
    if !(mass >= MASS_FLOOR) {
        return None;
    }
    let mean = match kind {
        ModelKind::Gaussian => {
            if a.is_finite() && b.is_finite() && b - a < NARROW_INTERVAL {
                let mid = 0.5 * (a + b);
                let num = gauss_legendre(|x| (x - mid) * norm_pdf(x), a, b, GL_PANEL);
                let den = gauss_legendre(norm_pdf, a, b, GL_PANEL);
                mid + num / den
            } else {
                (norm_pdf(a) - norm_pdf(b)) / mass
            }
        }
        ModelKind::Laplace => {
            if a >= 0.0 {
                laplace_mean_pos(a, b)
            } else if b <= 0.0 {
                -laplace_mean_pos(-b, -a)
            } else {
                let neg_mass = laplace_mass_pos(0.0, -a);
                let pos_mass = laplace_mass_pos(0.0, b);
                let neg_mean = -laplace_mean_pos(0.0, -a);
                let pos_mean = laplace_mean_pos(0.0, b);
                (neg_mass * neg_mean + pos_mass * pos_mean) / (neg_mass + pos_mass)
            }
        }
    };
    Some((mass, mean))
}

/// `integral |z - m| f(z) dz` over the segment between `m` and `t` (either
/// order, both finite). This is the squared-error saving per unit level gap
/// when a boundary moves from `t` to the midpoint `m`.
pub(crate) fn std_abs_moment_between(kind: ModelKind, m: f64, t: f64) -> f64 {
    let (lo, hi) = if m <= t { (m, t) } else { (t, m) };
    if lo == hi {
        return 0.0;
    }
    let f = |z: f64| (z - m).abs() * std_pdf(kind, z);
    if kind == ModelKind::Laplace && lo < 0.0 && hi > 0.0 {
        gauss_legendre(f, lo, 0.0, GL_PANEL) + gauss_legendre(f, 0.0, hi, GL_PANEL)
    } else {
        gauss_legendre(f, lo, hi, GL_PANEL)
    }
}

/// `integral_a^b (z - y)^2 e^-z / 2 dz` for `0 <= a < b <= inf`.
fn laplace_second_moment_pos(a: f64, b: f64, y: f64) -> f64 {
    let g = |u: f64| u * u + 2.0 * u + 2.0;
    if b.is_infinite() {
        0.5 * (-a).exp() * g(a - y)
    } else {
        gauss_legendre(|z| (z - y) * (z - y) * 0.5 * (-z).exp(), a, b, GL_PANEL)
    }
}

/// `integral_a^inf (z - y)^2 phi(z) dz`.
fn gaussian_upper_tail_second_moment(a: f64, y: f64) -> f64 {
    (1.0 + y * y) * norm_sf(a) + (a - 2.0 * y) * norm_pdf(a)
}

pub(crate) fn std_second_moment(kind: ModelKind, a: f64, b: f64, y: f64) -> f64 {
    if !(a < b) {
        return 0.0;
    }
    match kind {
        ModelKind::Gaussian => match (a.is_finite(), b.is_finite()) {
            (true, true) => gauss_legendre(|z| (z - y) * (z - y) * norm_pdf(z), a, b, GL_PANEL),
            (true, false) => gaussian_upper_tail_second_moment(a, y),
            (false, true) => gaussian_upper_tail_second_moment(-b, -y),
            (false, false) => 1.0 + y * y,
        },
        ModelKind::Laplace => {
            let mut total = 0.0;
            if b > 0.0 {
                total += laplace_second_moment_pos(a.max(0.0), b, y);
            }
            if a < 0.0 {
                total += laplace_second_moment_pos((-b).max(0.0), -a, -y);
            }
            total
        }
    }
}

// --- fitting ----------------------------------------------------------------

fn check_fit_input(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::DegenerateData("at least two samples are required"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateData("samples must be finite"));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::DegenerateData("all samples are identical"));
    }
    Ok(())
}

fn mean(samples: &[f64]) -> f64 {
    let sum: crate::special::NeumaierSum = samples.iter().copied().collect();
    sum.total() / samples.len() as f64
}

/// Maximum-likelihood Gaussian fit: sample mean and population (1/n)
/// standard deviation.
pub fn fit_gaussian_mle(samples: &[f64]) -> Result<DistributionModel> {
    check_fit_input(samples)?;
    let mu = mean(samples);
    let ss: crate::special::NeumaierSum = samples.iter().map(|&x| (x - mu) * (x - mu)).collect();
    let sigma = (ss.total() / samples.len() as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::DegenerateData("zero spread"));
    }
    DistributionModel::gaussian(mu, sigma)
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Maximum-likelihood Laplace fit: median and mean absolute deviation from it.
pub fn fit_laplace_mle(samples: &[f64]) -> Result<DistributionModel> {
    check_fit_input(samples)?;
    let sorted = sorted_copy(samples);
    laplace_from_sorted(&sorted)
}

fn laplace_from_sorted(sorted: &[f64]) -> Result<DistributionModel> {
    let mu = median_of_sorted(sorted);
    let b = mean(&sorted.iter().map(|&x| (x - mu).abs()).collect::<Vec<_>>());
    if !(b > 0.0) {
        return Err(Error::DegenerateData("zero spread"));
    }
    DistributionModel::laplace(mu, b)
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic.
///
/// The empirical CDF is compared on both sides of every jump, so the result
/// is the exact supremum distance.
pub fn ks_statistic(samples: &[f64], model: &DistributionModel) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    ks_sorted(&sorted_copy(samples), model)
}

fn ks_sorted(sorted: &[f64], model: &DistributionModel) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = model.cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.abs().max(below.abs())
        })
        .fold(0.0, f64::max)
        .min(1.0)
}

/// Result of fitting both families and comparing their K-S distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub gaussian: DistributionModel,
    pub laplace: DistributionModel,
    pub ks_gaussian: f64,
    pub ks_laplace: f64,
    pub selected: ModelKind,
}

impl FitReport {
    pub fn selected_model(&self) -> DistributionModel {
        match self.selected {
            ModelKind::Gaussian => self.gaussian,
            ModelKind::Laplace => self.laplace,
        }
    }

    pub fn selected_ks(&self) -> f64 {
        match self.selected {
            ModelKind::Gaussian => self.ks_gaussian,
            ModelKind::Laplace => self.ks_laplace,
        }
    }
}

/// Fit both families and pick the one with the smaller K-S statistic.
/// An exact tie goes to the Gaussian.
pub fn select_distribution(samples: &[f64]) -> Result<FitReport> {
    check_fit_input(samples)?;
    let sorted = sorted_copy(samples);
    let gaussian = fit_gaussian_mle(&sorted)?;
    let laplace = laplace_from_sorted(&sorted)?;
    let ks_gaussian = ks_sorted(&sorted, &gaussian);
    let ks_laplace = ks_sorted(&sorted, &laplace);
    let selected = if ks_gaussian <= ks_laplace {
        ModelKind::Gaussian
    } else {
        ModelKind::Laplace
    };
    Ok(FitReport {
        gaussian,
        laplace,
        ks_gaussian,
        ks_laplace,
        selected,
    })
}
