//! Per-channel image recovery on 2D grids, plus binary PGM/PPM I/O.
//!
//! Every channel is normalized to a unit vector, measured with 2D masks and
//! the 2D DFT, and recovered independently. The complex estimate is rotated
//! to maximize its real correlation with the all-ones image, its real part is
//! taken, and the channel norm is restored.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bench::{initial_recovery, InitKind};
use crate::error::{Error, Result};
use crate::measurement::{build_measurement_set, AcquisitionConfig, LowPass, MaskKind, ObservationModel, Psf};
use crate::numeric::{derive_seed, ComplexSignal, RandomSource, Shape};
use crate::solvers::{alignment_phase, alt_min, err, AmConfig, PowerConfig, RecoveryResult};

/// An 8-bit-derived image with values in `[0, 1]`, stored row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub height: usize,
    pub width: usize,
    /// One (grayscale) or three (RGB) channels of `height · width` values.
    pub channels: Vec<Vec<f64>>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param("image dimensions must be positive"));
        }
        if height % 2 != 0 || width % 2 != 0 {
            return Err(Error::param(format!(
                "image dimensions must be even, got {width}x{height}"
            )));
        }
        if channels.len() != 1 && channels.len() != 3 {
            return Err(Error::param(format!(
                "images have 1 or 3 channels, got {}",
                channels.len()
            )));
        }
        for c in &channels {
            if c.len() != height * width {
                return Err(Error::DimensionMismatch {
                    expected: height * width,
                    got: c.len(),
                });
            }
        }
        Ok(ImagePlane {
            height,
            width,
            channels,
        })
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::grid(self.height, self.width)
    }

    /// Unit-norm complex signal of channel `c` and the norm that restores it.
    pub fn normalized_channel(&self, c: usize) -> Result<(ComplexSignal, f64)> {
        let x = ComplexSignal::from_real(&self.channels[c])?;
        let scale = x.norm();
        if !(scale > 0.0) {
            return Err(Error::param(format!("channel {c} is identically zero")));
        }
        Ok((x.normalized()?, scale))
    }

    /// Pixel bytes as written to disk (clamped and rounded), interleaved across channels.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(n * self.channels.len());
        for k in 0..n {
            for c in &self.channels {
                out.push((c[k].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }
}

fn skip_space_and_comments(buf: &[u8], pos: &mut usize) {
    while *pos < buf.len() {
        match buf[*pos] {
            b'#' => {
                while *pos < buf.len() && buf[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b' ' | b'\t' | b'\n' | b'\r' => *pos += 1,
            _ => break,
        }
    }
}

fn header_number(buf: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    skip_space_and_comments(buf, pos);
    let start = *pos;
    while *pos < buf.len() && buf[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start, format!("expected {what}")));
    }
    std::str::from_utf8(&buf[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(start, format!("{what} out of range")))
}

/// Parses binary PGM (P5) or PPM (P6) with maxval 255.
pub fn decode_pnm(buf: &[u8]) -> Result<ImagePlane> {
    if buf.len() < 2 {
        return Err(Error::format(buf.len(), "truncated magic"));
    }
    let channels = match &buf[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::format(0, "expected P5 or P6 magic")),
    };
    let mut pos = 2;
    let width = header_number(buf, &mut pos, "width")?;
    let height = header_number(buf, &mut pos, "height")?;
    skip_space_and_comments(buf, &mut pos);
    let maxval_at = pos;
    let maxval = header_number(buf, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(maxval_at, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(maxval_at, "zero image dimension"));
    }
    match buf.get(pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => pos += 1,
        Some(_) => return Err(Error::format(pos, "expected whitespace after maxval")),
        None => return Err(Error::format(pos, "truncated header")),
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::format(maxval_at, "image too large"))?;
    let payload = &buf[pos..];
    if payload.len() < n {
        return Err(Error::format(
            buf.len(),
            format!("truncated pixel data: expected {n} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > n {
        return Err(Error::format(pos + n, "trailing bytes after pixel data"));
    }
    let planes = (0..channels)
        .map(|c| {
            (0..width * height)
                .map(|k| payload[k * channels + c] as f64 / 255.0)
                .collect()
        })
        .collect();
    ImagePlane::new(height, width, planes)
}

pub fn encode_pnm(img: &ImagePlane) -> Vec<u8> {
    let magic = if img.channels.len() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn load_image(path: &Path) -> Result<ImagePlane> {
    decode_pnm(&fs::read(path)?)
}

pub fn save_image(img: &ImagePlane, path: &Path) -> Result<()> {
    fs::write(path, encode_pnm(img))?;
    Ok(())
}

/// Peak signal-to-noise ratio in dB on the `[0, 1]` scale, over all channels.
pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    if a.channels.len() != b.channels.len() || a.height != b.height || a.width != b.width {
        return Err(Error::param("images differ in shape"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in a.channels.iter().zip(&b.channels) {
        for (u, v) in x.iter().zip(y) {
            sum += (u - v) * (u - v);
            count += 1;
        }
    }
    let mse = sum / count as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Low-pass model on a grid whose SRF is at least `srf`; the per-axis factor is `√srf`.
pub fn lowpass_for_srf(shape: Shape, srf: f64, psf: Psf) -> Result<ObservationModel> {
    if !(srf >= 1.0) {
        return Err(Error::param(format!("SRF must be >= 1, got {srf}")));
    }
    let cutoff = if shape.is_line() {
        LowPass::cutoff_for_srf(shape.cols(), srf)?
    } else {
        let axis = srf.sqrt();
        LowPass::cutoff_for_srf(shape.rows(), axis)?.min(LowPass::cutoff_for_srf(shape.cols(), axis)?)
    };
    let model = ObservationModel::LowPass(LowPass::new(cutoff, psf));
    model.validate(shape)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    pub pairs: usize,
    pub model: ObservationModel,
    pub mask: MaskKind,
    pub init: InitKind,
    pub refine: Option<AmConfig>,
    pub power: PowerConfig,
    pub seed: u64,
}

impl ImagingConfig {
    pub fn new(pairs: usize, model: ObservationModel, seed: u64) -> Self {
        ImagingConfig {
            pairs,
            model,
            mask: MaskKind::Gaussian,
            init: InitKind::OneBit,
            refine: None,
            power: PowerConfig::default(),
            seed,
        }
    }

    /// Seed of channel `c`.
    pub fn channel_seed(&self, c: usize) -> u64 {
        derive_seed(self.seed, c as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecovery {
    pub result: RecoveryResult,
    /// `err` against the normalized input channel.
    pub err: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecovery {
    pub image: ImagePlane,
    pub channels: Vec<ChannelRecovery>,
}

impl ImageRecovery {
    /// `key=value` metadata, one per line.
    pub fn metadata(&self, cfg: &ImagingConfig, original: &ImagePlane) -> String {
        use crate::bench::format_sig6;
        let mut lines = vec![
            format!("seed={}", cfg.seed),
            format!("r={}", cfg.pairs),
            format!("model={}", cfg.model.name()),
            format!("param={}", format_sig6(cfg.model.parameter())),
            format!(
                "mask={}",
                match cfg.mask {
                    MaskKind::Gaussian => "gaussian".to_string(),
                    MaskKind::Bernoulli { p } => format!("bernoulli:{}", format_sig6(p)),
                }
            ),
            format!("init={}", cfg.init.label()),
            format!(
                "refine={}",
                cfg.refine.map_or("none".to_string(), |am| format!("am:{}", am.t0))
            ),
            format!("height={}", self.image.height),
            format!("width={}", self.image.width),
            "projection=real-part-after-phase-alignment-to-ones".to_string(),
        ];
        for (c, ch) in self.channels.iter().enumerate() {
            lines.push(format!("channel{c}.err={}", format_sig6(ch.err)));
            lines.push(format!("channel{c}.iterations={}", ch.result.iterations));
            lines.push(format!("channel{c}.lambda_hat={}", format_sig6(ch.result.lambda_hat)));
        }
        if let Ok(p) = psnr(&self.image, original) {
            lines.push(format!("psnr_db={}", format_sig6(p)));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Recovers every channel with seeds derived from `cfg.seed`.
pub fn recover_image(img: &ImagePlane, cfg: &ImagingConfig) -> Result<ImageRecovery> {
    let seeds: Vec<u64> = (0..img.channels.len()).map(|c| cfg.channel_seed(c)).collect();
    recover_image_with_seeds(img, cfg, &seeds)
}

/// Recovers channel `c` with `seeds[c]`; channels run in parallel.
pub fn recover_image_with_seeds(
    img: &ImagePlane,
    cfg: &ImagingConfig,
    seeds: &[u64],
) -> Result<ImageRecovery> {
    if seeds.len() != img.channels.len() {
        return Err(Error::DimensionMismatch {
            expected: img.channels.len(),
            got: seeds.len(),
        });
    }
    if cfg.refine.is_some() && cfg.model.has_dead_band() {
        return Err(Error::DeadBand);
    }
    let shape = img.shape()?;
    cfg.model.validate(shape)?;
    let outputs = (0..img.channels.len())
        .into_par_iter()
        .map(|c| recover_channel(img, c, shape, cfg, seeds[c]))
        .collect::<Result<Vec<_>>>()?;
    let (planes, channels) = outputs.into_iter().unzip();
    Ok(ImageRecovery {
        image: ImagePlane::new(img.height, img.width, planes)?,
        channels,
    })
}

fn recover_channel(
    img: &ImagePlane,
    c: usize,
    shape: Shape,
    cfg: &ImagingConfig,
    seed: u64,
) -> Result<(Vec<f64>, ChannelRecovery)> {
    let (x0, scale) = img.normalized_channel(c)?;
    let rng = RandomSource::new(seed);
    let acq = AcquisitionConfig {
        pairs: cfg.pairs,
        model: cfg.model.clone(),
        mask: cfg.mask,
        keep_intensities: cfg.refine.is_some() || cfg.init == InitKind::SubExp,
    };
    let set = build_measurement_set(&x0, shape, &acq, &rng.derive(&[1]))?;
    let init = initial_recovery(&set, cfg.init, &cfg.power, &rng)?;
    let result = match cfg.refine {
        Some(am) => {
            let mut res = alt_min(&set, &init.x_hat, &am)?;
            res.iterations += init.iterations;
            res
        }
        None => init,
    };
    let e = err(&result.x_hat, &x0)?;
    let ones = ComplexSignal::from_real(&vec![1.0; shape.len()])?;
    let aligned = result.x_hat.scaled(alignment_phase(&result.x_hat, &ones));
    let plane = aligned
        .iter()
        .map(|z: &Complex64| z.re * scale)
        .collect();
    Ok((
        plane,
        ChannelRecovery {
            result,
            err: e,
            scale,
        },
    ))
}
