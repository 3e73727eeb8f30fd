//! Phase retrieval from one-bit coded diffraction patterns.
//!
//! A signal `x0` is modulated by random masks, Fourier transformed, and only
//! the sign of the difference between two such power spectra is kept. The
//! leading eigenvector of an FFT-applied Hermitian operator built from those
//! signs estimates `x0` up to a global phase; alternating minimization on the
//! raw intensities can refine it.

pub mod bench;
pub mod error;
pub mod format;
pub mod imaging;
pub mod measurement;
pub mod numeric;
pub mod operator;
pub mod snr;
pub mod solvers;

pub use error::{Error, Result};
pub use measurement::{
    apply_lowpass, build_measurement_set, forward_cdp, quantize, AcquisitionConfig,
    CodedDiffractionPattern, LowPass, MaskKind, MaskPair, MeasurementSet, ObservationModel,
    OneBitPattern, Psf,
};
pub use numeric::{dft, dft2, idft, idft2, ComplexSignal, Fourier, RandomSource, Shape};
pub use operator::{HermitianOperator, OneBitOperator, SubExpOperator};
pub use solvers::{alt_min, err, phase_of, power_method, AmConfig, PowerConfig, RecoveryResult};
