//! Forward simulation of coded diffraction patterns and the pairwise
//! one-bit quantizer.
//!
//! Intensities are stored on the unitary-DFT scale, `|F Diag(w) x0|²`, whose
//! entries have mean `1/n` under Gaussian masks. Observation models act on
//! the normalized intensity `s = n·b` (unit mean) and the result is scaled
//! back by `1/n`, so model parameters keep the same meaning at every `n`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{
    derive_seed, sample_bernoulli_mask, sample_complex_gaussian, ComplexSignal, Fourier,
    RandomSource, Shape,
};

/// Tolerance on `‖x0‖ − 1` accepted by the forward model.
pub const UNIT_TOL: f64 = 1e-6;

/// Point-spread-function magnitudes `|ĥ_k|²` inside the pass band.
#[derive(Debug, Clone, PartialEq)]
pub enum Psf {
    /// `|ĥ_k|² = 1` on the band.
    Flat,
    /// Box (moving-average) filter of `width` taps along every axis.
    Average { width: usize },
    /// Explicit per-index magnitudes, one per flat index; out-of-band entries are ignored.
    Custom(Vec<f64>),
    /// Fresh magnitudes in `[0.05, 1]` for every mask pair, derived from `seed` and the
    /// pair index. Both patterns of a pair share the same PSF.
    PerPair { seed: u64 },
}

/// Diffraction-limited acquisition: circulant filtering, diagonal in the DFT basis.
///
/// On an axis of length `m`, frequency `k ∈ ⟦-f_c, f_c⟧` sits at array index
/// `k mod m`, i.e. indices `{0, …, f_c} ∪ {m − f_c, …, m − 1}`. On a grid the
/// band is the product of the per-axis bands.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    pub cutoff: usize,
    pub psf: Psf,
}

impl LowPass {
    pub fn new(cutoff: usize, psf: Psf) -> Self {
        LowPass { cutoff, psf }
    }

    /// Largest cut-off whose super-resolution factor is at least `srf`.
    pub fn cutoff_for_srf(axis_len: usize, srf: f64) -> Result<usize> {
        if !(srf >= 1.0) {
            return Err(Error::param(format!("SRF must be >= 1, got {srf}")));
        }
        let raw = ((axis_len as f64 / srf - 1.0) / 2.0).floor();
        Ok((raw.max(0.0) as usize).min(axis_len / 2 - 1))
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        let axes = axes(shape);
        for &m in &axes {
            if self.cutoff > m / 2 - 1 {
                return Err(Error::param(format!(
                    "cut-off {} out of range 0..={} for axis length {m}",
                    self.cutoff,
                    m / 2 - 1
                )));
            }
        }
        match &self.psf {
            Psf::Average { width } => {
                if *width == 0 {
                    return Err(Error::param("average PSF width must be positive"));
                }
                for &m in &axes {
                    if width * self.cutoff >= m {
                        return Err(Error::param(format!(
                            "average PSF of width {width} vanishes inside the band f_c = {}",
                            self.cutoff
                        )));
                    }
                }
            }
            Psf::Custom(mags) => {
                if mags.len() != shape.len() {
                    return Err(Error::DimensionMismatch {
                        expected: shape.len(),
                        got: mags.len(),
                    });
                }
                let band = self.band(shape);
                if mags
                    .iter()
                    .zip(&band)
                    .any(|(&m, &inside)| inside && !(m > 0.0 && m.is_finite()))
                {
                    return Err(Error::param("PSF magnitudes must be strictly positive in band"));
                }
            }
            Psf::Flat | Psf::PerPair { .. } => {}
        }
        Ok(())
    }

    /// In-band indicator per flat index.
    pub fn band(&self, shape: Shape) -> Vec<bool> {
        let (h, w) = (shape.rows(), shape.cols());
        let on_axis = |j: usize, m: usize| m == 1 || j <= self.cutoff || j >= m - self.cutoff;
        (0..h)
            .flat_map(|a| (0..w).map(move |b| (a, b)))
            .map(|(a, b)| on_axis(a, h) && on_axis(b, w))
            .collect()
    }

    /// Number of in-band frequencies.
    pub fn band_size(&self, shape: Shape) -> usize {
        axes(shape).iter().map(|_| 2 * self.cutoff + 1).product()
    }

    /// `n / |band|`.
    pub fn srf(&self, shape: Shape) -> f64 {
        shape.len() as f64 / self.band_size(shape) as f64
    }

    /// `|ĥ_k|²` per flat index for mask pair `pair`; zero outside the band.
    pub fn magnitudes(&self, shape: Shape, pair: usize) -> Result<Vec<f64>> {
        self.validate(shape)?;
        let band = self.band(shape);
        let mut mags = match &self.psf {
            Psf::Flat => vec![1.0; shape.len()],
            Psf::Custom(m) => m.clone(),
            Psf::Average { width } => {
                let axis = |j: usize, m: usize| -> f64 {
                    if m == 1 || j == 0 {
                        return 1.0;
                    }
                    let t = PI * j as f64 / m as f64;
                    let g = (t * *width as f64).sin() / (*width as f64 * t.sin());
                    g * g
                };
                let (h, w) = (shape.rows(), shape.cols());
                (0..h)
                    .flat_map(|a| (0..w).map(move |b| axis(a, h) * axis(b, w)))
                    .collect()
            }
            Psf::PerPair { seed } => {
                let mut rng = RandomSource::new(derive_seed(*seed, pair as u64));
                (0..shape.len()).map(|_| 0.05 + 0.95 * rng.open_unit()).collect()
            }
        };
        for (m, inside) in mags.iter_mut().zip(&band) {
            if !inside {
                *m = 0.0;
            }
        }
        Ok(mags)
    }
}

fn axes(shape: Shape) -> Vec<usize> {
    if shape.is_line() {
        vec![shape.cols()]
    } else {
        vec![shape.rows(), shape.cols()]
    }
}

/// The perturbation θ applied to intensities.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    Identity,
    /// Additive `Exp(γ)` noise with variance `σ = 1/γ²` on normalized intensities.
    ExpNoise { sigma: f64 },
    /// `η · Poisson(s / η)` on normalized intensities.
    PoissonNoise { eta: f64 },
    /// `tanh(α s)` on normalized intensities.
    TanhDistortion { alpha: f64 },
    LowPass(LowPass),
}

impl ObservationModel {
    /// Noise rate `γ = 1/√σ`; infinite when `σ = 0`.
    pub fn exp_rate(&self) -> Option<f64> {
        match self {
            ObservationModel::ExpNoise { sigma } => Some(1.0 / sigma.sqrt()),
            _ => None,
        }
    }

    pub fn validate(&self, shape: Shape) -> Result<()> {
        match self {
            ObservationModel::Identity => Ok(()),
            ObservationModel::ExpNoise { sigma } if *sigma >= 0.0 && sigma.is_finite() => Ok(()),
            ObservationModel::ExpNoise { sigma } => {
                Err(Error::param(format!("noise variance must be >= 0, got {sigma}")))
            }
            ObservationModel::PoissonNoise { eta } if *eta > 0.0 && eta.is_finite() => Ok(()),
            ObservationModel::PoissonNoise { eta } => {
                Err(Error::param(format!("Poisson scale must be > 0, got {eta}")))
            }
            ObservationModel::TanhDistortion { alpha } if *alpha > 0.0 && alpha.is_finite() => {
                Ok(())
            }
            ObservationModel::TanhDistortion { alpha } => {
                Err(Error::param(format!("clipping level must be > 0, got {alpha}")))
            }
            ObservationModel::LowPass(lp) => lp.validate(shape),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            ObservationModel::ExpNoise { .. } | ObservationModel::PoissonNoise { .. }
        )
    }

    pub fn has_dead_band(&self) -> bool {
        matches!(self, ObservationModel::LowPass(_))
    }

    /// Short name used in file headers and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            ObservationModel::Identity => "identity",
            ObservationModel::ExpNoise { .. } => "exp-noise",
            ObservationModel::PoissonNoise { .. } => "poisson",
            ObservationModel::TanhDistortion { .. } => "tanh",
            ObservationModel::LowPass(_) => "lowpass",
        }
    }

    /// The model's scalar parameter (σ, η, α or f_c), 0 for the identity.
    pub fn parameter(&self) -> f64 {
        match self {
            ObservationModel::Identity => 0.0,
            ObservationModel::ExpNoise { sigma } => *sigma,
            ObservationModel::PoissonNoise { eta } => *eta,
            ObservationModel::TanhDistortion { alpha } => *alpha,
            ObservationModel::LowPass(lp) => lp.cutoff as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    Gaussian,
    Bernoulli { p: f64 },
}

impl MaskKind {
    pub fn sample(&self, n: usize, rng: &mut RandomSource) -> Result<ComplexSignal> {
        match self {
            MaskKind::Gaussian => sample_complex_gaussian(n, rng),
            MaskKind::Bernoulli { p } => sample_bernoulli_mask(n, *p, rng),
        }
    }
}

/// Nonnegative intensities `b = θ(|F Diag(w) x0|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedDiffractionPattern {
    pub values: Vec<f64>,
}

impl CodedDiffractionPattern {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(format!(
                "intensity at index {k} is negative or not finite"
            )));
        }
        Ok(CodedDiffractionPattern { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Entries in `{-1, 0, +1}`; 0 only where both intensities are exactly zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneBitPattern {
    pub signs: Vec<i8>,
}

impl OneBitPattern {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// `sign(b1 − b2)` with ties at zero intensity mapped to 0 and all other ties to +1.
pub fn quantize(
    b1: &CodedDiffractionPattern,
    b2: &CodedDiffractionPattern,
) -> Result<OneBitPattern> {
    if b1.len() != b2.len() {
        return Err(Error::DimensionMismatch {
            expected: b1.len(),
            got: b2.len(),
        });
    }
    let signs = b1
        .values
        .iter()
        .zip(&b2.values)
        .map(|(&a, &b)| {
            if a > b {
                1
            } else if a < b {
                -1
            } else if a == 0.0 {
                0
            } else {
                1
            }
        })
        .collect();
    Ok(OneBitPattern { signs })
}

/// Multiplies a clean power spectrum by `|ĥ_k|²` on the band and zeroes it elsewhere.
pub fn apply_lowpass(
    spectrum: &CodedDiffractionPattern,
    lowpass: &LowPass,
    shape: Shape,
) -> Result<CodedDiffractionPattern> {
    apply_lowpass_for_pair(spectrum, lowpass, shape, 0)
}

pub fn apply_lowpass_for_pair(
    spectrum: &CodedDiffractionPattern,
    lowpass: &LowPass,
    shape: Shape,
    pair: usize,
) -> Result<CodedDiffractionPattern> {
    if spectrum.len() != shape.len() {
        return Err(Error::DimensionMismatch {
            expected: shape.len(),
            got: spectrum.len(),
        });
    }
    let mags = lowpass.magnitudes(shape, pair)?;
    Ok(CodedDiffractionPattern {
        values: spectrum.values.iter().zip(&mags).map(|(v, m)| v * m).collect(),
    })
}

/// Clean power spectrum `|F Diag(w) x|²` on the unitary scale.
pub fn power_spectrum(fourier: &Fourier, x: &ComplexSignal, w: &ComplexSignal) -> Vec<f64> {
    let mut buf: Vec<Complex64> = x.iter().zip(w.iter()).map(|(a, b)| a * b).collect();
    fourier.forward_in_place(&mut buf);
    buf.iter().map(|z| z.norm_sqr()).collect()
}

/// Poisson sampler: inversion below mean 30, `rand_distr` above.
fn sample_poisson(mean: f64, rng: &mut RandomSource) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < 30.0 {
        let u = rng.uniform();
        let mut k = 0u32;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng)
    }
}

fn apply_model(
    spectrum: Vec<f64>,
    model: &ObservationModel,
    shape: Shape,
    pair: usize,
    rng: &mut RandomSource,
) -> Result<Vec<f64>> {
    let n = shape.len() as f64;
    let out = match model {
        ObservationModel::Identity => spectrum,
        ObservationModel::ExpNoise { sigma } => {
            let mean = sigma.sqrt();
            spectrum.into_iter().map(|z| z + mean * rng.exp1() / n).collect()
        }
        ObservationModel::PoissonNoise { eta } => spectrum
            .into_iter()
            .map(|z| eta * sample_poisson(n * z / eta, rng) / n)
            .collect(),
        ObservationModel::TanhDistortion { alpha } => spectrum
            .into_iter()
            .map(|z| (alpha * n * z).tanh() / n)
            .collect(),
        ObservationModel::LowPass(lp) => {
            let mags = lp.magnitudes(shape, pair)?;
            spectrum.iter().zip(&mags).map(|(z, m)| z * m).collect()
        }
    };
    Ok(out)
}

fn check_signal(x0: &ComplexSignal, w: &ComplexSignal, shape: Shape) -> Result<()> {
    x0.check_len(shape.len())?;
    w.check_len(shape.len())?;
    x0.check_unit(UNIT_TOL)
}

/// `θ(|F Diag(w) x0|²)` for a 1D signal. Stochastic models consume `rng`.
pub fn forward_cdp(
    x0: &ComplexSignal,
    w: &ComplexSignal,
    model: &ObservationModel,
    rng: &mut RandomSource,
) -> Result<CodedDiffractionPattern> {
    let shape = Shape::line(x0.len())?;
    forward_cdp_shaped(&Fourier::new(shape), x0, w, model, 0, rng)
}

/// Forward model on any shape; `pair` selects per-pair PSF magnitudes.
pub fn forward_cdp_shaped(
    fourier: &Fourier,
    x0: &ComplexSignal,
    w: &ComplexSignal,
    model: &ObservationModel,
    pair: usize,
    rng: &mut RandomSource,
) -> Result<CodedDiffractionPattern> {
    let shape = fourier.shape();
    check_signal(x0, w, shape)?;
    model.validate(shape)?;
    let spectrum = power_spectrum(fourier, x0, w);
    Ok(CodedDiffractionPattern {
        values: apply_model(spectrum, model, shape, pair, rng)?,
    })
}

/// One mask pair with its one-bit pattern and, optionally, the raw intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub w1: ComplexSignal,
    pub w2: ComplexSignal,
    pub y: OneBitPattern,
    pub intensities: Option<(CodedDiffractionPattern, CodedDiffractionPattern)>,
}

/// `r` mask pairs sharing one shape and observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub shape: Shape,
    pub model: ObservationModel,
    pub mask: MaskKind,
    pub seed: u64,
    pub pairs: Vec<MaskPair>,
    pub truth: Option<ComplexSignal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    pub pairs: usize,
    pub model: ObservationModel,
    pub mask: MaskKind,
    pub keep_intensities: bool,
}

impl MeasurementSet {
    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn r(&self) -> usize {
        self.pairs.len()
    }

    pub fn has_intensities(&self) -> bool {
        !self.pairs.is_empty() && self.pairs.iter().all(|p| p.intensities.is_some())
    }

    /// All `2r` (mask, intensity) patterns, pairs flattened in order.
    pub fn patterns(
        &self,
    ) -> Result<Vec<(&ComplexSignal, &CodedDiffractionPattern)>> {
        let mut out = Vec::with_capacity(2 * self.r());
        for pair in &self.pairs {
            let (b1, b2) = pair.intensities.as_ref().ok_or(Error::MissingIntensities)?;
            out.push((&pair.w1, b1));
            out.push((&pair.w2, b2));
        }
        Ok(out)
    }

    /// Consistency checks used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.pairs.is_empty() {
            return Err(Error::param("measurement set needs at least one pair"));
        }
        self.model.validate(self.shape)?;
        for pair in &self.pairs {
            pair.w1.check_len(n)?;
            pair.w2.check_len(n)?;
            if pair.y.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: pair.y.len(),
                });
            }
            if let Some((b1, b2)) = &pair.intensities {
                for b in [b1, b2] {
                    if b.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: b.len(),
                        });
                    }
                }
            }
        }
        if let Some(t) = &self.truth {
            t.check_len(n)?;
        }
        Ok(())
    }
}

/// Draws `2r` independent masks, simulates each pattern with its own noise
/// stream, and quantizes every pair.
///
/// Stream layout for pair `i`: masks from `rng.derive([i, 0])` (`w1` then
/// `w2`), noise for `b1` from `[i, 1]`, noise for `b2` from `[i, 2]`. Masks
/// therefore do not depend on the observation model.
pub fn build_measurement_set(
    x0: &ComplexSignal,
    shape: Shape,
    cfg: &AcquisitionConfig,
    rng: &RandomSource,
) -> Result<MeasurementSet> {
    if cfg.pairs == 0 {
        return Err(Error::param("number of pairs must be at least 1"));
    }
    x0.check_len(shape.len())?;
    x0.check_unit(UNIT_TOL)?;
    cfg.model.validate(shape)?;
    let fourier = Fourier::new(shape);
    let pairs = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| -> Result<MaskPair> {
            let i64_ = i as u64;
            let mut mask_rng = rng.derive(&[i64_, 0]);
            let w1 = cfg.mask.sample(shape.len(), &mut mask_rng)?;
            let w2 = cfg.mask.sample(shape.len(), &mut mask_rng)?;
            let b1 = forward_cdp_shaped(&fourier, x0, &w1, &cfg.model, i, &mut rng.derive(&[i64_, 1]))?;
            let b2 = forward_cdp_shaped(&fourier, x0, &w2, &cfg.model, i, &mut rng.derive(&[i64_, 2]))?;
            let y = quantize(&b1, &b2)?;
            Ok(MaskPair {
                w1,
                w2,
                y,
                intensities: cfg.keep_intensities.then_some((b1, b2)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet {
        shape,
        model: cfg.model.clone(),
        mask: cfg.mask,
        seed: rng.seed(),
        pairs,
        truth: None,
    })
}
