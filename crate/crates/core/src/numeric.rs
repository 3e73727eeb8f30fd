//! Complex signals, the unitary DFT, and seeded sampling.
//!
//! The forward transform is `F_{jk} = n^{-1/2} exp(-2πi jk / n)`. Every
//! transform in the crate goes through [`Fourier`], which wraps `rustfft`
//! plans and applies the `1/√n` scaling on both directions so that `F` is
//! unitary and `F⁻¹ = F*`.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Layout of a signal: a line (`rows == 1`) or a row-major 2D grid.
///
/// Every axis longer than one must have even length, so that the band
/// `⟦-f_c, f_c⟧` is well defined on the re-indexed frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    rows: usize,
    cols: usize,
}

impl Shape {
    pub fn line(n: usize) -> Result<Self> {
        Self::validate_axis(n, "n")?;
        Ok(Shape { rows: 1, cols: n })
    }

    pub fn grid(height: usize, width: usize) -> Result<Self> {
        Self::validate_axis(height, "height")?;
        Self::validate_axis(width, "width")?;
        Ok(Shape {
            rows: height,
            cols: width,
        })
    }

    fn validate_axis(len: usize, name: &str) -> Result<()> {
        if len < 2 || len % 2 != 0 {
            return Err(Error::param(format!(
                "{name} must be even and at least 2, got {len}"
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_line(&self) -> bool {
        self.rows == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_line() {
            write!(f, "{}", self.cols)
        } else {
            write!(f, "{}x{}", self.rows, self.cols)
        }
    }
}

/// A length-`n` complex vector, `n` even and at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    data: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(data: Vec<Complex64>) -> Result<Self> {
        Shape::validate_axis(data.len(), "signal length")?;
        Ok(ComplexSignal { data })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Unit vector `e_k`.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        let mut s = Self::zeros(n)?;
        if k >= n {
            return Err(Error::param(format!("basis index {k} out of range for n = {n}")));
        }
        s.data[k] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    // Internal constructor for buffers whose length is already known valid.
    pub(crate) fn from_vec_unchecked(data: Vec<Complex64>) -> Self {
        debug_assert!(data.len() >= 2 && data.len() % 2 == 0);
        ComplexSignal { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = Σ conj(self_k) other_k`.
    pub fn inner(&self, other: &ComplexSignal) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, factor: Complex64) -> ComplexSignal {
        ComplexSignal {
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn conj(&self) -> ComplexSignal {
        ComplexSignal {
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Returns `self / ‖self‖`, or an error for the zero vector.
    pub fn normalized(&self) -> Result<ComplexSignal> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("cannot normalize a zero or non-finite vector"));
        }
        Ok(self.scaled(Complex64::new(1.0 / norm, 0.0)))
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.len(),
            });
        }
        Ok(())
    }

    /// Errors unless `|‖self‖ − 1| ≤ tol`.
    pub fn check_unit(&self, tol: f64) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() > tol {
            return Err(Error::NotUnitNorm { norm });
        }
        Ok(())
    }

    pub fn distance(&self, other: &ComplexSignal) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for ComplexSignal {
    type Output = Complex64;

    fn index(&self, k: usize) -> &Complex64 {
        &self.data[k]
    }
}

impl IndexMut<usize> for ComplexSignal {
    fn index_mut(&mut self, k: usize) -> &mut Complex64 {
        &mut self.data[k]
    }
}

/// Unitary DFT plans for one [`Shape`].
///
/// 2D transforms are separable: every row, then every column.
#[derive(Clone)]
pub struct Fourier {
    shape: Shape,
    scale: f64,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Option<Arc<dyn Fft<f64>>>,
    col_inv: Option<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("shape", &self.shape).finish()
    }
}

impl Fourier {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        let (col_fwd, col_inv) = if shape.is_line() {
            (None, None)
        } else {
            (
                Some(planner.plan_fft_forward(shape.rows)),
                Some(planner.plan_fft_inverse(shape.rows)),
            )
        };
        Fourier {
            shape,
            scale: 1.0 / (shape.len() as f64).sqrt(),
            row_fwd: planner.plan_fft_forward(shape.cols),
            row_inv: planner.plan_fft_inverse(shape.cols),
            col_fwd,
            col_inv,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, self.col_fwd.as_ref());
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, self.col_inv.as_ref());
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: Option<&Arc<dyn Fft<f64>>>) {
        assert_eq!(buf.len(), self.shape.len(), "buffer length does not match plan");
        rows.process(buf);
        if let Some(cols) = cols {
            let (h, w) = (self.shape.rows, self.shape.cols);
            let mut column = vec![Complex64::new(0.0, 0.0); h];
            for c in 0..w {
                for r in 0..h {
                    column[r] = buf[r * w + c];
                }
                cols.process(&mut column);
                for r in 0..h {
                    buf[r * w + c] = column[r];
                }
            }
        }
        for z in buf.iter_mut() {
            *z *= self.scale;
        }
    }

    pub fn forward(&self, u: &ComplexSignal) -> ComplexSignal {
        let mut out = u.clone();
        self.forward_in_place(out.as_mut_slice());
        out
    }

    pub fn inverse(&self, u: &ComplexSignal) -> ComplexSignal {
        let mut out = u.clone();
        self.inverse_in_place(out.as_mut_slice());
        out
    }
}

/// Unitary 1D DFT.
pub fn dft(u: &ComplexSignal) -> ComplexSignal {
    Fourier::new(Shape { rows: 1, cols: u.len() }).forward(u)
}

/// Inverse (adjoint) of [`dft`].
pub fn idft(u: &ComplexSignal) -> ComplexSignal {
    Fourier::new(Shape { rows: 1, cols: u.len() }).inverse(u)
}

fn grid_plan(plane: &ComplexSignal, height: usize, width: usize) -> Result<Fourier> {
    let shape = Shape::grid(height, width)?;
    plane.check_len(shape.len())?;
    Ok(Fourier::new(shape))
}

/// Unitary 2D DFT of a row-major `height × width` plane.
pub fn dft2(plane: &ComplexSignal, height: usize, width: usize) -> Result<ComplexSignal> {
    Ok(grid_plan(plane, height, width)?.forward(plane))
}

pub fn idft2(plane: &ComplexSignal, height: usize, width: usize) -> Result<ComplexSignal> {
    Ok(grid_plan(plane, height, width)?.inverse(plane))
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` of `seed`: `splitmix64(seed ^ splitmix64(tag))`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Seeded ChaCha8 stream. Child streams come from [`RandomSource::derive`],
/// so concurrent tasks never share a generator.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by a path of tags. Does not advance `self`.
    pub fn derive(&self, tags: &[u64]) -> RandomSource {
        let seed = tags.iter().fold(self.seed, |s, &t| derive_seed(s, t));
        RandomSource::new(seed)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `(0, 1]`, safe to pass to `ln`.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.rng.gen::<f64>()
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Exponential with unit mean, by inversion.
    pub fn exp1(&mut self) -> f64 {
        -self.open_unit().ln()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Entries i.i.d. `N(0, 1/2) + i N(0, 1/2)`, so `E|w_j|² = 1`.
pub fn sample_complex_gaussian(n: usize, rng: &mut RandomSource) -> Result<ComplexSignal> {
    Shape::validate_axis(n, "n")?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..n)
        .map(|_| {
            let re = rng.standard_normal();
            let im = rng.standard_normal();
            Complex64::new(re * s, im * s)
        })
        .collect();
    Ok(ComplexSignal { data })
}

/// Real 0/1 mask, each entry 1 with probability `p`.
pub fn sample_bernoulli_mask(n: usize, p: f64, rng: &mut RandomSource) -> Result<ComplexSignal> {
    Shape::validate_axis(n, "n")?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("Bernoulli p must lie in (0, 1), got {p}")));
    }
    let data = (0..n)
        .map(|_| Complex64::new(if rng.uniform() < p { 1.0 } else { 0.0 }, 0.0))
        .collect();
    Ok(ComplexSignal { data })
}

/// Unit-norm real Gaussian vector, used as a synthetic ground truth.
pub fn sample_unit_signal(n: usize, rng: &mut RandomSource) -> Result<ComplexSignal> {
    Shape::validate_axis(n, "n")?;
    let data: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.standard_normal(), 0.0))
        .collect();
    ComplexSignal { data }.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(u: &[Complex64]) -> Vec<Complex64> {
        let n = u.len();
        let s = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| {
                        let phase = -2.0 * PI * (j * k) as f64 / n as f64;
                        u[k] * Complex64::from_polar(s, phase)
                    })
                    .sum()
            })
            .collect()
    }

    fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn delta_transforms_to_constant() {
        let d = ComplexSignal::basis(4, 0).unwrap();
        let f = dft(&d);
        for z in f.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let back = idft(&f);
        assert!(back.distance(&d) < 1e-15);
    }

    #[test]
    fn ones_transform_to_scaled_delta() {
        let ones = ComplexSignal::from_real(&[1.0; 4]).unwrap();
        let f = dft(&ones);
        assert!((f[0] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        for k in 1..4 {
            assert!(f[k].norm() < 1e-15);
        }
    }

    #[test]
    fn dft_matches_naive_sum() {
        let mut rng = RandomSource::new(11);
        for n in [4, 8, 16, 64] {
            let u = sample_complex_gaussian(n, &mut rng).unwrap();
            let fast = dft(&u);
            let slow = naive_dft(u.as_slice());
            assert!(max_rel(fast.as_slice(), &slow) < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = RandomSource::new(3);
        for n in [4, 16, 32, 256, 1024] {
            let u = sample_complex_gaussian(n, &mut rng).unwrap();
            let f = dft(&u);
            assert!((f.norm() - u.norm()).abs() <= 1e-10 * u.norm());
            assert!((idft(&u).norm() - u.norm()).abs() <= 1e-10 * u.norm());
            assert!(idft(&f).distance(&u) <= 1e-10 * u.norm());
        }
    }

    #[test]
    fn dft2_matches_naive_2d_sum() {
        let (h, w) = (4, 6);
        let mut rng = RandomSource::new(5);
        let u = sample_complex_gaussian(h * w, &mut rng).unwrap();
        let fast = dft2(&u, h, w).unwrap();
        let s = 1.0 / ((h * w) as f64).sqrt();
        for a in 0..h {
            for b in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..h {
                    for d in 0..w {
                        let phase = -2.0 * PI * ((a * c) as f64 / h as f64 + (b * d) as f64 / w as f64);
                        acc += u[c * w + d] * Complex64::from_polar(s, phase);
                    }
                }
                assert!((fast[a * w + b] - acc).norm() < 1e-12);
            }
        }
        let back = idft2(&fast, h, w).unwrap();
        assert!(back.distance(&u) < 1e-12);
    }

    #[test]
    fn dft2_delta_and_odd_dimension() {
        let d = ComplexSignal::basis(16, 0).unwrap();
        let f = dft2(&d, 4, 4).unwrap();
        assert!(f.iter().all(|z| (z - Complex64::new(0.25, 0.0)).norm() < 1e-15));
        assert!(dft2(&ComplexSignal::zeros(12).unwrap(), 3, 4).is_err());
    }

    #[test]
    fn odd_or_tiny_lengths_rejected() {
        assert!(ComplexSignal::zeros(3).is_err());
        assert!(ComplexSignal::zeros(0).is_err());
        assert!(Shape::line(1).is_err());
        assert!(Shape::grid(4, 5).is_err());
    }

    #[test]
    fn complex_gaussian_moments() {
        let mut rng = RandomSource::new(2024);
        let w = sample_complex_gaussian(1_000_000, &mut rng).unwrap();
        let n = w.len() as f64;
        let power = w.norm_sqr() / n;
        let mean: Complex64 = w.iter().sum::<Complex64>() / n;
        let pseudo: Complex64 = w.iter().map(|z| z * z).sum::<Complex64>() / n;
        assert!((power - 1.0).abs() < 0.01, "E|w|^2 = {power}");
        assert!(mean.re.abs() < 0.01 && mean.im.abs() < 0.01);
        assert!(pseudo.norm() < 0.01, "E[w^2] = {pseudo}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_complex_gaussian(64, &mut RandomSource::new(9)).unwrap();
        let b = sample_complex_gaussian(64, &mut RandomSource::new(9)).unwrap();
        assert_eq!(a, b);
        let m1 = sample_bernoulli_mask(64, 0.3, &mut RandomSource::new(9)).unwrap();
        let m2 = sample_bernoulli_mask(64, 0.3, &mut RandomSource::new(9)).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn bernoulli_fraction() {
        let mut rng = RandomSource::new(8);
        let m = sample_bernoulli_mask(1_000_000, 0.8, &mut rng).unwrap();
        let ones = m.iter().filter(|z| z.re == 1.0).count() as f64 / m.len() as f64;
        assert!((ones - 0.8).abs() < 0.002, "fraction = {ones}");
        assert!(m.iter().all(|z| z.im == 0.0 && (z.re == 0.0 || z.re == 1.0)));
    }

    #[test]
    fn bernoulli_rejects_boundary_p() {
        let mut rng = RandomSource::new(1);
        for p in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(sample_bernoulli_mask(8, p, &mut rng).is_err());
        }
    }

    #[test]
    fn derived_streams_differ_and_repeat() {
        let root = RandomSource::new(42);
        let mut a = root.derive(&[1, 2]);
        let mut b = root.derive(&[1, 2]);
        let mut c = root.derive(&[2, 1]);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
