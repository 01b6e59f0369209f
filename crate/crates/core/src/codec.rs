//! Tensor encoding with a [`QuantizerSpec`], code packing and reconstruction.

use crate::error::{Error, Result};
use crate::quantizer::{check_bits, QuantizerSpec};

/// A named f32 tensor stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Element count implied by `shape`; `None` on overflow.
pub fn shape_len(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn check_shape(shape: &[usize], found: usize) -> Result<()> {
    match shape_len(shape) {
        Some(expected) if expected == found => Ok(()),
        Some(expected) => Err(Error::ShapeMismatch { expected, found }),
        None => Err(Error::InvalidArgument(format!("shape {shape:?} overflows"))),
    }
}

impl Tensor {
    /// Checks that `values` matches `shape` and holds no NaN or infinity.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        check_shape(&shape, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self {
            name: name.into(),
            shape,
            values,
        })
    }

    /// A rank-1 tensor.
    pub fn vector(name: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        let n = values.len();
        Self::new(name, vec![n], values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub bits: u32,
    pub codes: Vec<u32>,
    /// `2^bits` reconstruction values in weight units, strictly increasing.
    pub codebook: Vec<f64>,
}

impl QuantizedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, bits: u32, codes: Vec<u32>, codebook: Vec<f64>) -> Result<Self> {
        let q = Self {
            name: name.into(),
            shape,
            bits,
            codes,
            codebook,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        check_shape(&self.shape, self.codes.len())?;
        let k = 1usize << self.bits;
        if self.codebook.len() != k {
            return Err(Error::format(
                "quantized tensor",
                format!("expected {k} codebook entries, found {}", self.codebook.len()),
            ));
        }
        if self.codebook.iter().any(|c| !c.is_finite()) || self.codebook.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::format("quantized tensor", "codebook must be finite and strictly increasing"));
        }
        check_codes(&self.codes, self.bits)
    }
}

fn check_codes(codes: &[u32], bits: u32) -> Result<()> {
    let limit = 1u64 << bits;
    match codes.iter().find(|&&c| u64::from(c) >= limit) {
        Some(&code) => Err(Error::CodeOutOfRange { code, bits }),
        None => Ok(()),
    }
}

/// Code for one value in weight units: the interval holding its
/// standardized image.
#[inline]
pub fn encode_value(spec: &QuantizerSpec, v: f64) -> u32 {
    spec.interval_of(spec.to_standardized(v)) as u32
}

/// Map every value to the interval holding it in the spec's standardized
/// coordinates. A value exactly on a boundary goes to the right interval.
pub fn encode(tensor: &Tensor, spec: &QuantizerSpec) -> Result<QuantizedTensor> {
    check_shape(&tensor.shape, tensor.values.len())?;
    if let Some(i) = tensor.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(i));
    }
    let codes = tensor.values.iter().map(|&v| encode_value(spec, f64::from(v))).collect();
    Ok(QuantizedTensor {
        name: tensor.name.clone(),
        shape: tensor.shape.clone(),
        bits: spec.bits,
        codes,
        codebook: spec.original_levels(),
    })
}

/// Look every code up in the codebook.
pub fn decode(q: &QuantizedTensor) -> Result<Tensor> {
    let k = q.codebook.len();
    let values = q
        .codes
        .iter()
        .map(|&c| match q.codebook.get(c as usize) {
            Some(&y) if (c as usize) < k => Ok(y as f32),
            _ => Err(Error::CodeOutOfRange { code: c, bits: q.bits }),
        })
        .collect::<Result<Vec<f32>>>()?;
    Ok(Tensor {
        name: q.name.clone(),
        shape: q.shape.clone(),
        values,
    })
}

/// Mean squared elementwise difference, accumulated in f64. Zero for
/// empty tensors.
pub fn empirical_mse(original: &Tensor, reconstructed: &Tensor) -> Result<f64> {
    if original.shape != reconstructed.shape || original.values.len() != reconstructed.values.len() {
        return Err(Error::ShapeMismatch {
            expected: original.values.len(),
            found: reconstructed.values.len(),
        });
    }
    if original.values.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = original
        .values
        .iter()
        .zip(&reconstructed.values)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / original.values.len() as f64)
}

/// Number of bytes holding `n` codes of `bits` bits.
pub fn packed_len(n: usize, bits: u32) -> usize {
    (n * bits as usize).div_ceil(8)
}

/// Pack codes into a little-endian bit stream, `bits` bits each, first code
/// in the lowest bits. The final byte is zero-padded.
pub fn pack_codes(codes: &[u32], bits: u32) -> Result<Vec<u8>> {
    check_bits(bits)?;
    check_codes(codes, bits)?;
    let mut out = Vec::with_capacity(packed_len(codes.len(), bits));
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &c in codes {
        acc |= u64::from(c) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(out)
}

/// Inverse of [`pack_codes`] for `n` codes.
pub fn unpack_codes(bytes: &[u8], bits: u32, n: usize) -> Result<Vec<u32>> {
    check_bits(bits)?;
    let need = packed_len(n, bits);
    if bytes.len() != need {
        return Err(Error::format(
            "packed codes",
            format!("{n} codes of {bits} bits need {need} bytes, found {}", bytes.len()),
        ));
    }
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(n);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut input = bytes.iter();
    for _ in 0..n {
        while filled < bits {
            // `need` bytes are always enough.
            acc |= u64::from(*input.next().expect("length checked")) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        filled -= bits;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{DistributionModel, ModelKind};
    use crate::quantizer::{distortion, optimize, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use crate::synth;
    use proptest::prelude::*;
    use rand::Rng;

    fn optimal(kind: ModelKind, bits: u32) -> QuantizerSpec {
        optimize(&DistributionModel::standard(kind), bits, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap()
            .0
    }

    fn nearest(codebook: &[f64], v: f64) -> usize {
        // Ties go to the larger index, matching the right-interval rule.
        let mut best = 0;
        for (i, &c) in codebook.iter().enumerate() {
            if (v - c).abs() <= (v - codebook[best]).abs() {
                best = i;
            }
        }
        best
    }

    #[test]
    fn one_bit_example() {
        let spec = optimal(ModelKind::Gaussian, 1);
        let t = Tensor::vector("w", vec![0.3]).unwrap();
        let q = encode(&t, &spec).unwrap();
        assert_eq!(q.codes, vec![1]);
        let d = decode(&q).unwrap();
        assert!((f64::from(d.values[0]) - 0.797_884_560_802_865_4).abs() < 1e-6);
        let zero = encode(&Tensor::vector("w", vec![0.0]).unwrap(), &spec).unwrap();
        assert_eq!(zero.codes, vec![1]);
    }

    #[test]
    fn codebook_values_are_fixed_points() {
        let spec = optimal(ModelKind::Laplace, 3).with_affine(0.25, 0.5);
        let book: Vec<f32> = spec.original_levels().iter().map(|&y| y as f32).collect();
        let t = Tensor::vector("w", book.clone()).unwrap();
        let q = encode(&t, &spec).unwrap();
        assert_eq!(q.codes, (0..8).collect::<Vec<u32>>());
        assert_eq!(decode(&q).unwrap().values, book);
    }

    #[test]
    fn decode_lookup_and_empty() {
        let q = QuantizedTensor::new("w", vec![2], 1, vec![0, 1], vec![-0.8, 0.8]).unwrap();
        assert_eq!(decode(&q).unwrap().values, vec![-0.8f32, 0.8]);
        let empty = QuantizedTensor::new("e", vec![0], 1, vec![], vec![-0.8, 0.8]).unwrap();
        let d = decode(&empty).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.shape, vec![0]);
    }

    #[test]
    fn decode_rejects_bad_codes() {
        let q = QuantizedTensor {
            name: "w".into(),
            shape: vec![1],
            bits: 1,
            codes: vec![2],
            codebook: vec![-1.0, 1.0],
        };
        assert!(matches!(decode(&q), Err(Error::CodeOutOfRange { code: 2, bits: 1 })));
        assert!(q.validate().is_err());
    }

    #[test]
    fn tensor_validation() {
        assert!(matches!(
            Tensor::new("w", vec![2, 2], vec![0.0; 3]),
            Err(Error::ShapeMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(
            Tensor::new("w", vec![2], vec![0.0, f32::NAN]),
            Err(Error::NonFiniteValue(1))
        ));
        assert!(matches!(
            Tensor::new("w", vec![1], vec![f32::INFINITY]),
            Err(Error::NonFiniteValue(0))
        ));
    }

    #[test]
    fn re_encoding_is_stable() {
        let spec = optimal(ModelKind::Gaussian, 4).with_affine(-0.1, 0.02);
        let model = DistributionModel::gaussian(-0.1, 0.02).unwrap();
        let t = Tensor::vector("w", synth::sample_f32(&model, 10_000, 7)).unwrap();
        let q = encode(&t, &spec).unwrap();
        let again = encode(&decode(&q).unwrap(), &spec).unwrap();
        assert_eq!(q.codes, again.codes);
    }

    #[test]
    fn mse_basics() {
        let a = Tensor::vector("a", vec![0.0, 0.0]).unwrap();
        let b = Tensor::vector("b", vec![1.0, 1.0]).unwrap();
        assert_eq!(empirical_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(empirical_mse(&a, &b).unwrap(), 1.0);
        let c = Tensor::vector("c", vec![1.0]).unwrap();
        assert!(matches!(empirical_mse(&a, &c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn empirical_mse_matches_analytic_at_one_million() {
        for kind in ModelKind::ALL {
            let model = DistributionModel::standard(kind);
            let spec = optimal(kind, 1);
            let t = Tensor::vector("w", synth::sample_f32(&model, 1_000_000, 42)).unwrap();
            let q = encode(&t, &spec).unwrap();
            let mse = empirical_mse(&t, &decode(&q).unwrap()).unwrap();
            let d = distortion(&spec, &model).total;
            assert!((mse - d).abs() <= 0.01 * d, "{kind}: {mse} vs {d}");
        }
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack_codes(&[1, 2], 4).unwrap(), vec![0x21]);
        assert_eq!(pack_codes(&[255], 8).unwrap(), vec![0xFF]);
        assert_eq!(pack_codes(&[1, 0, 1], 1).unwrap(), vec![0b101]);
        assert_eq!(pack_codes(&[0x1234], 16).unwrap(), vec![0x34, 0x12]);
        assert!(pack_codes(&[], 3).unwrap().is_empty());
        assert!(matches!(pack_codes(&[16], 4), Err(Error::CodeOutOfRange { code: 16, bits: 4 })));
        assert!(unpack_codes(&[0x21, 0], 4, 2).is_err());
    }

    #[test]
    fn pack_round_trip_large() {
        let mut rng = synth::rng(3);
        for bits in 1..=16 {
            let codes: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..1u32 << bits)).collect();
            let bytes = pack_codes(&codes, bits).unwrap();
            assert_eq!(bytes.len(), packed_len(codes.len(), bits));
            assert_eq!(unpack_codes(&bytes, bits, codes.len()).unwrap(), codes);
        }
    }

    fn spec_strategy() -> impl Strategy<Value = QuantizerSpec> {
        (prop::sample::select(ModelKind::ALL.to_vec()), 1u32..=5).prop_map(|(kind, bits)| optimal(kind, bits))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn interval_code_is_nearest_level(spec in spec_strategy(), vals in prop::collection::vec(-8.0f32..8.0, 1..200)) {
            let t = Tensor::vector("w", vals.clone()).unwrap();
            let q = encode(&t, &spec).unwrap();
            for (&v, &c) in vals.iter().zip(&q.codes) {
                let z = f64::from(v);
                let n = nearest(&spec.levels, z);
                if n != c as usize {
                    // Only a value on the midpoint itself may differ, and
                    // only by rounding of the midpoint.
                    let x = spec.boundaries[c.max(n as u32) as usize];
                    prop_assert!((z - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0), "v={v} code={c} nearest={n}");
                }
            }
        }

        #[test]
        fn reconstruction_error_bound(spec in spec_strategy(), vals in prop::collection::vec(-8.0f32..8.0, 1..200)) {
            let t = Tensor::vector("w", vals.clone()).unwrap();
            let q = encode(&t, &spec).unwrap();
            let book = &q.codebook;
            let half_gap = book.windows(2).map(|w| (w[1] - w[0]) / 2.0).fold(0.0, f64::max);
            for (&v, &c) in vals.iter().zip(&q.codes) {
                let v = f64::from(v);
                let err = (v - book[c as usize]).abs();
                let tail = (book[0] - v).max(v - book[book.len() - 1]).max(0.0);
                prop_assert!(err <= half_gap + tail + 1e-12);
                if v >= book[0] && v <= book[book.len() - 1] {
                    prop_assert!(err <= half_gap + 1e-12);
                }
            }
        }

        #[test]
        fn affine_codes_are_identical(
            spec in spec_strategy(),
            ints in prop::collection::vec(-4096i32..4096, 1..200),
            scale_pow in -6i32..6,
            shift in -64i32..64,
        ) {
            // Dyadic values keep both transforms exact in f32.
            let xs: Vec<f32> = ints.iter().map(|&i| i as f32 / 1024.0).collect();
            let a = 2f32.powi(scale_pow);
            let c = shift as f32 / 8.0;
            let ys: Vec<f32> = xs.iter().map(|&x| a * x + c).collect();
            let base = encode(&Tensor::vector("x", xs).unwrap(), &spec).unwrap();
            let moved = spec.clone().with_affine(f64::from(c), f64::from(a));
            let q = encode(&Tensor::vector("y", ys).unwrap(), &moved).unwrap();
            prop_assert_eq!(base.codes, q.codes);
        }

        #[test]
        fn pack_round_trip(bits in 1u32..=16, raw in prop::collection::vec(any::<u32>(), 0..300)) {
            let codes: Vec<u32> = raw.iter().map(|&c| c & ((1 << bits) - 1)).collect();
            let bytes = pack_codes(&codes, bits).unwrap();
            prop_assert_eq!(unpack_codes(&bytes, bits, codes.len()).unwrap(), codes);
        }
    }
}
