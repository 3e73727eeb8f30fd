//! Binary containers for measurement sets and recovery results.
//!
//! All integers and floats are little-endian; complex vectors are stored as
//! interleaved `(re, im)` f64 pairs. The full layout is described in
//! `FORMAT.md` at the repository root.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measurement::{
    CodedDiffractionPattern, LowPass, MaskKind, MaskPair, MeasurementSet, ObservationModel,
    OneBitPattern, Psf,
};
use crate::numeric::{ComplexSignal, Shape};

pub const MEASUREMENT_MAGIC: &[u8; 8] = b"OBCDPMS\x01";
pub const RESULT_MAGIC: &[u8; 8] = b"OBCDPRS\x01";

const FLAG_INTENSITIES: u8 = 1;
const FLAG_TRUTH: u8 = 2;

/// Recovery method recorded in a result file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OneBit,
    SubExp,
    AltMin,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::OneBit => "onebit",
            Method::SubExp => "subexp",
            Method::AltMin => "am",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Method::OneBit => 0,
            Method::SubExp => 1,
            Method::AltMin => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Method::OneBit),
            1 => Some(Method::SubExp),
            2 => Some(Method::AltMin),
            _ => None,
        }
    }
}

/// Contents of a recovery result file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryFile {
    pub shape: Shape,
    pub method: Method,
    pub x_hat: ComplexSignal,
    pub lambda_hat: f64,
    pub iterations: u64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn complex(&mut self, x: &ComplexSignal) {
        for z in x.iter() {
            self.f64(z.re);
            self.f64(z.im);
        }
    }
    fn reals(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(Error::format(
                self.buf.len(),
                format!("truncated: needed {len} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn complex(&mut self, n: usize) -> Result<ComplexSignal> {
        let at = self.pos;
        let v = (0..n)
            .map(|_| Ok(Complex64::new(self.f64()?, self.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        ComplexSignal::new(v).map_err(|e| Error::format(at, e.to_string()))
    }
    fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(Error::format(0, "bad magic"));
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

fn write_shape(w: &mut Writer, shape: Shape) {
    w.u32(shape.rows() as u32);
    w.u32(shape.cols() as u32);
}

fn read_shape(r: &mut Reader<'_>) -> Result<Shape> {
    let at = r.pos;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let shape = if rows == 1 {
        Shape::line(cols)
    } else {
        Shape::grid(rows, cols)
    };
    shape.map_err(|e| Error::format(at, e.to_string()))
}

fn write_model(w: &mut Writer, model: &ObservationModel) {
    match model {
        ObservationModel::Identity => {
            w.u8(0);
            w.f64(0.0);
        }
        ObservationModel::ExpNoise { sigma } => {
            w.u8(1);
            w.f64(*sigma);
        }
        ObservationModel::PoissonNoise { eta } => {
            w.u8(2);
            w.f64(*eta);
        }
        ObservationModel::TanhDistortion { alpha } => {
            w.u8(3);
            w.f64(*alpha);
        }
        ObservationModel::LowPass(lp) => {
            w.u8(4);
            w.f64(lp.cutoff as f64);
            match &lp.psf {
                Psf::Flat => w.u8(0),
                Psf::Average { width } => {
                    w.u8(1);
                    w.u64(*width as u64);
                }
                Psf::Custom(values) => {
                    w.u8(2);
                    w.u64(values.len() as u64);
                    w.reals(values);
                }
                Psf::PerPair { seed } => {
                    w.u8(3);
                    w.u64(*seed);
                }
            }
        }
    }
}

fn read_model(r: &mut Reader<'_>) -> Result<ObservationModel> {
    let at = r.pos;
    let tag = r.u8()?;
    let param = r.f64()?;
    Ok(match tag {
        0 => ObservationModel::Identity,
        1 => ObservationModel::ExpNoise { sigma: param },
        2 => ObservationModel::PoissonNoise { eta: param },
        3 => ObservationModel::TanhDistortion { alpha: param },
        4 => {
            if param < 0.0 || param.fract() != 0.0 {
                return Err(Error::format(at + 1, format!("bad cut-off {param}")));
            }
            let psf_at = r.pos;
            let psf = match r.u8()? {
                0 => Psf::Flat,
                1 => Psf::Average {
                    width: r.u64()? as usize,
                },
                2 => {
                    let len = r.u64()? as usize;
                    if len > r.buf.len() {
                        return Err(Error::format(psf_at + 1, "PSF length exceeds file size"));
                    }
                    Psf::Custom(r.reals(len)?)
                }
                3 => Psf::PerPair { seed: r.u64()? },
                t => return Err(Error::format(psf_at, format!("unknown PSF tag {t}"))),
            };
            ObservationModel::LowPass(LowPass::new(param as usize, psf))
        }
        t => return Err(Error::format(at, format!("unknown model tag {t}"))),
    })
}

fn sign_byte(s: i8) -> u8 {
    match s {
        -1 => 0xFF,
        0 => 0x00,
        _ => 0x01,
    }
}

/// Serializes a measurement set.
pub fn encode_measurement_set(set: &MeasurementSet) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MEASUREMENT_MAGIC);
    write_shape(&mut w, set.shape);
    w.u32(set.r() as u32);
    write_model(&mut w, &set.model);
    match set.mask {
        MaskKind::Gaussian => {
            w.u8(0);
            w.f64(0.0);
        }
        MaskKind::Bernoulli { p } => {
            w.u8(1);
            w.f64(p);
        }
    }
    w.u64(set.seed);
    let mut flags = 0;
    if set.has_intensities() {
        flags |= FLAG_INTENSITIES;
    }
    if set.truth.is_some() {
        flags |= FLAG_TRUTH;
    }
    w.u8(flags);
    for pair in &set.pairs {
        w.complex(&pair.w1);
        w.complex(&pair.w2);
        w.0.extend(pair.y.signs.iter().map(|&s| sign_byte(s)));
        if flags & FLAG_INTENSITIES != 0 {
            let (b1, b2) = pair.intensities.as_ref().expect("intensities present");
            w.reals(&b1.values);
            w.reals(&b2.values);
        }
    }
    if let Some(t) = &set.truth {
        w.complex(t);
    }
    w.0
}

/// Parses and validates a measurement set.
pub fn decode_measurement_set(bytes: &[u8]) -> Result<MeasurementSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(MEASUREMENT_MAGIC)?;
    let shape = read_shape(&mut r)?;
    let n = shape.len();
    let count_at = r.pos;
    let pairs = r.u32()? as usize;
    if pairs == 0 {
        return Err(Error::format(count_at, "pair count must be positive"));
    }
    let model = read_model(&mut r)?;
    let mask_at = r.pos;
    let mask_tag = r.u8()?;
    let p = r.f64()?;
    let mask = match mask_tag {
        0 => MaskKind::Gaussian,
        1 => MaskKind::Bernoulli { p },
        t => return Err(Error::format(mask_at, format!("unknown mask tag {t}"))),
    };
    let seed = r.u64()?;
    let flags_at = r.pos;
    let flags = r.u8()?;
    if flags & !(FLAG_INTENSITIES | FLAG_TRUTH) != 0 {
        return Err(Error::format(flags_at, format!("unknown flags {flags:#04x}")));
    }
    let mut list = Vec::with_capacity(pairs.min(bytes.len() / n.max(1)));
    for _ in 0..pairs {
        let w1 = r.complex(n)?;
        let w2 = r.complex(n)?;
        let signs_at = r.pos;
        let signs = r
            .take(n)?
            .iter()
            .enumerate()
            .map(|(k, &b)| match b {
                0xFF => Ok(-1),
                0x00 => Ok(0),
                0x01 => Ok(1),
                _ => Err(Error::format(signs_at + k, format!("bad sign byte {b:#04x}"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        let intensities = if flags & FLAG_INTENSITIES != 0 {
            let at = r.pos;
            let b1 = CodedDiffractionPattern::new(r.reals(n)?)
                .map_err(|e| Error::format(at, e.to_string()))?;
            let b2 = CodedDiffractionPattern::new(r.reals(n)?)
                .map_err(|e| Error::format(at, e.to_string()))?;
            Some((b1, b2))
        } else {
            None
        };
        list.push(MaskPair {
            w1,
            w2,
            y: OneBitPattern { signs },
            intensities,
        });
    }
    let truth = if flags & FLAG_TRUTH != 0 {
        Some(r.complex(n)?)
    } else {
        None
    };
    r.finish()?;
    let set = MeasurementSet {
        shape,
        model,
        mask,
        seed,
        pairs: list,
        truth,
    };
    set.validate().map_err(|e| match e {
        Error::Format { .. } => e,
        other => Error::format(0, other.to_string()),
    })?;
    Ok(set)
}

pub fn save_measurement_set(set: &MeasurementSet, path: &Path) -> Result<()> {
    fs::write(path, encode_measurement_set(set))?;
    Ok(())
}

pub fn load_measurement_set(path: &Path) -> Result<MeasurementSet> {
    decode_measurement_set(&fs::read(path)?)
}

pub fn encode_recovery(file: &RecoveryFile) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(RESULT_MAGIC);
    write_shape(&mut w, file.shape);
    w.u8(file.method.tag());
    w.f64(file.lambda_hat);
    w.u64(file.iterations);
    w.u8(file.converged as u8);
    w.u32(file.residual_history.len() as u32);
    w.reals(&file.residual_history);
    w.complex(&file.x_hat);
    w.0
}

pub fn decode_recovery(bytes: &[u8]) -> Result<RecoveryFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(RESULT_MAGIC)?;
    let shape = read_shape(&mut r)?;
    let method_at = r.pos;
    let method = Method::from_tag(r.u8()?)
        .ok_or_else(|| Error::format(method_at, "unknown method tag"))?;
    let lambda_hat = r.f64()?;
    let iterations = r.u64()?;
    let converged_at = r.pos;
    let converged = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::format(converged_at, format!("bad flag {b}"))),
    };
    let len_at = r.pos;
    let len = r.u32()? as usize;
    if len.saturating_mul(8) > bytes.len() {
        return Err(Error::format(len_at, "history length exceeds file size"));
    }
    let residual_history = r.reals(len)?;
    let x_hat = r.complex(shape.len())?;
    r.finish()?;
    Ok(RecoveryFile {
        shape,
        method,
        x_hat,
        lambda_hat,
        iterations,
        converged,
        residual_history,
    })
}

pub fn save_recovery(file: &RecoveryFile, path: &Path) -> Result<()> {
    fs::write(path, encode_recovery(file))?;
    Ok(())
}

pub fn load_recovery(path: &Path) -> Result<RecoveryFile> {
    decode_recovery(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_measurement_set, AcquisitionConfig};
    use crate::numeric::{sample_unit_signal, RandomSource};

    fn sample_set(model: ObservationModel, keep: bool) -> MeasurementSet {
        let x0 = sample_unit_signal(8, &mut RandomSource::new(1)).unwrap();
        let cfg = AcquisitionConfig {
            pairs: 3,
            model,
            mask: MaskKind::Gaussian,
            keep_intensities: keep,
        };
        let mut set = build_measurement_set(&x0, Shape::line(8).unwrap(), &cfg, &RandomSource::new(2)).unwrap();
        set.truth = Some(x0);
        set
    }

    #[test]
    fn measurement_round_trip() {
        for (model, keep) in [
            (ObservationModel::Identity, false),
            (ObservationModel::ExpNoise { sigma: 0.4 }, true),
            (ObservationModel::LowPass(LowPass::new(1, Psf::Average { width: 2 })), true),
            (ObservationModel::LowPass(LowPass::new(2, Psf::PerPair { seed: 9 })), false),
        ] {
            let set = sample_set(model, keep);
            let bytes = encode_measurement_set(&set);
            let back = decode_measurement_set(&bytes).unwrap();
            assert_eq!(back, set);
            assert_eq!(encode_measurement_set(&back), bytes);
        }
    }

    #[test]
    fn sign_bytes() {
        let mut set = sample_set(ObservationModel::Identity, false);
        set.truth = None;
        set.pairs[0].y.signs[..3].copy_from_slice(&[-1, 0, 1]);
        let bytes = encode_measurement_set(&set);
        let header = 8 + 8 + 4 + 9 + 9 + 8 + 1;
        let at = header + 2 * 8 * 16;
        assert_eq!(&bytes[at..at + 3], &[0xFF, 0x00, 0x01]);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_measurement_set(&sample_set(ObservationModel::Identity, true));
        for cut in [0, 5, 12, 30, bytes.len() - 1] {
            match decode_measurement_set(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset, cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupt_fields_are_rejected() {
        let bytes = encode_measurement_set(&sample_set(ObservationModel::Identity, false));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_measurement_set(&bad), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(decode_measurement_set(&bad), Err(Error::Format { .. })));
        let mut bad = bytes;
        let at = 8 + 8 + 4 + 9 + 9 + 8 + 1 + 2 * 8 * 16;
        bad[at] = 0x07;
        match decode_measurement_set(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, at),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recovery_round_trip() {
        let file = RecoveryFile {
            shape: Shape::grid(2, 4).unwrap(),
            method: Method::AltMin,
            x_hat: sample_unit_signal(8, &mut RandomSource::new(3)).unwrap(),
            lambda_hat: 0.98,
            iterations: 50,
            converged: true,
            residual_history: vec![1.0, 0.5, 0.25],
        };
        let bytes = encode_recovery(&file);
        assert_eq!(decode_recovery(&bytes).unwrap(), file);
        assert!(decode_recovery(&bytes[..bytes.len() - 3]).is_err());
    }
}
