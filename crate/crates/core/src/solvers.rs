//! Spectral recovery by power iteration and alternating-minimization refinement.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::numeric::{sample_complex_gaussian, ComplexSignal, Fourier, RandomSource};
use crate::operator::HermitianOperator;

/// Norm tolerance for inputs of [`err`].
pub const ERR_UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    /// Stop once the phase-aligned step `min_φ ‖x_j − e^{iφ} x_{j−1}‖` is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmConfig {
    pub t0: usize,
}

impl Default for AmConfig {
    fn default() -> Self {
        AmConfig { t0: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// Unit-norm estimate.
    pub x_hat: ComplexSignal,
    /// Power method: `‖op x_{j−1}‖` at the last step. AM: norm of the final unnormalized iterate.
    pub lambda_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Power method: phase-aligned step lengths. AM: residual `R(x_t, u_t)` per iteration.
    pub residual_history: Vec<f64>,
    /// `Re(x̂* op x̂)`; NaN for AM.
    pub rayleigh: f64,
}

impl RecoveryResult {
    /// True when plain power iteration locked onto a negative eigenvalue.
    pub fn negative_dominant(&self) -> bool {
        self.rayleigh < 0.0
    }
}

/// `e^{iφ}` maximizing `Re⟨reference, e^{iφ} x⟩`.
pub fn alignment_phase(x: &ComplexSignal, reference: &ComplexSignal) -> Complex64 {
    let c = x.inner(reference);
    if c.norm() > 0.0 {
        c / c.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Power iteration from a random complex Gaussian start.
pub fn power_method(
    op: &dyn HermitianOperator,
    cfg: &PowerConfig,
    rng: &mut RandomSource,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let n = op.dim();
    let mut x = sample_complex_gaussian(n, rng)?.normalized()?;
    let mut history = Vec::new();
    let mut lambda_hat = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let u = op.apply(&x)?;
        lambda_hat = u.norm();
        if !(lambda_hat > 0.0) || !lambda_hat.is_finite() {
            return Err(Error::DegenerateOperator);
        }
        let next = u.scaled(Complex64::new(1.0 / lambda_hat, 0.0));
        let step = next.distance(&x.scaled(alignment_phase(&x, &next)));
        history.push(step);
        x = next;
        if step <= cfg.tol {
            converged = true;
            break;
        }
    }
    let rayleigh = x.inner(&op.apply(&x)?).re;
    Ok(RecoveryResult {
        x_hat: x,
        lambda_hat,
        iterations,
        converged,
        residual_history: history,
        rayleigh,
    })
}

/// Entrywise `z_k / |z_k|`, with 0 mapped to 1.
pub fn phase_of(z: &ComplexSignal) -> ComplexSignal {
    let mut out = z.clone();
    phase_in_place(out.as_mut_slice());
    out
}

fn phase_in_place(z: &mut [Complex64]) {
    for v in z.iter_mut() {
        let m = v.norm();
        *v = if m > 0.0 {
            *v / m
        } else {
            Complex64::new(1.0, 0.0)
        };
    }
}

/// `1 − |⟨x, x0⟩|²` for unit vectors, clamped at 0.
pub fn err(x: &ComplexSignal, x0: &ComplexSignal) -> Result<f64> {
    x.check_len(x0.len())?;
    x.check_unit(ERR_UNIT_TOL)?;
    x0.check_unit(ERR_UNIT_TOL)?;
    Ok((1.0 - x.inner(x0).norm_sqr()).clamp(0.0, 1.0))
}

/// `‖x x* − x0 x0*‖_F`, computed from the norms and the overlap.
pub fn projector_distance(x: &ComplexSignal, x0: &ComplexSignal) -> f64 {
    let (a, b) = (x.norm_sqr(), x0.norm_sqr());
    (a * a + b * b - 2.0 * x.inner(x0).norm_sqr()).max(0.0).sqrt()
}

/// Alternating minimization on the `2r` raw intensity patterns.
pub fn alt_min(
    set: &MeasurementSet,
    x_init: &ComplexSignal,
    cfg: &AmConfig,
) -> Result<RecoveryResult> {
    alt_min_observed(set, x_init, cfg, |_, _| {})
}

/// [`alt_min`] with a callback receiving `(t, x_t)` after every x-step.
pub fn alt_min_observed<F>(
    set: &MeasurementSet,
    x_init: &ComplexSignal,
    cfg: &AmConfig,
    mut observer: F,
) -> Result<RecoveryResult>
where
    F: FnMut(usize, &ComplexSignal),
{
    if cfg.t0 == 0 {
        return Err(Error::param("t0 must be at least 1"));
    }
    if set.model.has_dead_band() {
        return Err(Error::DeadBand);
    }
    let n = set.n();
    x_init.check_len(n)?;
    let patterns = set.patterns()?;
    let fourier = Fourier::new(set.shape);

    let mut denom = vec![0.0; n];
    for (w, _) in &patterns {
        for (d, wk) in denom.iter_mut().zip(w.iter()) {
            *d += wk.norm_sqr();
        }
    }
    let dead: Vec<usize> = (0..n).filter(|&k| denom[k] == 0.0).collect();
    if !dead.is_empty() {
        return Err(Error::SingularStep { indices: dead });
    }
    let amplitudes: Vec<Vec<f64>> = patterns
        .iter()
        .map(|(_, b)| b.values.iter().map(|v| v.sqrt()).collect())
        .collect();

    let transform = |x: &ComplexSignal| -> Vec<Vec<Complex64>> {
        patterns
            .par_iter()
            .map(|(w, _)| {
                let mut buf: Vec<Complex64> = w.iter().zip(x.iter()).map(|(a, b)| a * b).collect();
                fourier.forward_in_place(&mut buf);
                buf
            })
            .collect()
    };

    let mut x = x_init.clone();
    let mut spectra = transform(&x);
    let mut history = Vec::with_capacity(cfg.t0);
    for t in 1..=cfg.t0 {
        // u-step: phases of the current spectra; targets √b ⊙ u.
        let targets: Vec<Vec<Complex64>> = spectra
            .into_par_iter()
            .zip(amplitudes.par_iter())
            .map(|(mut s, amp)| {
                phase_in_place(&mut s);
                for (z, a) in s.iter_mut().zip(amp) {
                    *z *= a;
                }
                s
            })
            .collect();
        // x-step: exact least squares, diagonal because F is unitary.
        let back: Vec<Vec<Complex64>> = targets
            .par_iter()
            .zip(patterns.par_iter())
            .map(|(target, (w, _))| {
                let mut buf = target.clone();
                fourier.inverse_in_place(&mut buf);
                for (z, wk) in buf.iter_mut().zip(w.iter()) {
                    *z *= wk.conj();
                }
                buf
            })
            .collect();
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for term in &back {
            for (a, z) in next.iter_mut().zip(term) {
                *a += z;
            }
        }
        for (a, d) in next.iter_mut().zip(&denom) {
            *a /= d;
        }
        x = ComplexSignal::from_vec_unchecked(next);
        spectra = transform(&x);
        let residual: f64 = targets
            .iter()
            .zip(&spectra)
            .map(|(tg, s)| tg.iter().zip(s).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
            .sum();
        history.push(residual);
        observer(t, &x);
    }
    let scale = x.norm();
    let x_hat = x.normalized().map_err(|_| Error::DegenerateOperator)?;
    Ok(RecoveryResult {
        x_hat,
        lambda_hat: scale,
        iterations: cfg.t0,
        converged: true,
        residual_history: history,
        rayleigh: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{build_measurement_set, AcquisitionConfig, MaskKind, ObservationModel};
    use crate::numeric::{sample_unit_signal, Shape};
    use crate::operator::DenseOperator;

    #[test]
    fn rank_one_fixed_point() {
        let x0 = sample_unit_signal(16, &mut RandomSource::new(1)).unwrap();
        let op = DenseOperator::rank_one(&x0, 0.7);
        let res = power_method(&op, &PowerConfig::default(), &mut RandomSource::new(2)).unwrap();
        assert!((res.lambda_hat - 0.7).abs() < 1e-8);
        assert!(err(&res.x_hat, &x0).unwrap() <= 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn diagonal_spectrum() {
        let mut diag = vec![1.0; 8];
        diag[0] = 3.0;
        diag[3] = 0.5;
        let op = DenseOperator::diagonal(&diag);
        let res = power_method(&op, &PowerConfig::default(), &mut RandomSource::new(3)).unwrap();
        assert!((res.lambda_hat - 3.0).abs() < 1e-8);
        let e0 = ComplexSignal::basis(8, 0).unwrap();
        assert!(err(&res.x_hat, &e0).unwrap() < 1e-12);
        assert!((res.rayleigh - res.lambda_hat).abs() <= 10.0 * 1e-8);
        assert!((res.x_hat.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn negative_dominant_is_reported() {
        let op = DenseOperator::diagonal(&[-2.0, 1.0, 0.5, 0.1]);
        let res = power_method(&op, &PowerConfig::default(), &mut RandomSource::new(4)).unwrap();
        assert!(res.converged);
        assert!(res.negative_dominant());
        assert!((res.rayleigh + 2.0).abs() < 1e-7);
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let op = DenseOperator::diagonal(&[0.0; 4]);
        let out = power_method(&op, &PowerConfig::default(), &mut RandomSource::new(5));
        assert!(matches!(out, Err(Error::DegenerateOperator)));
    }

    #[test]
    fn bad_power_config() {
        let op = DenseOperator::diagonal(&[1.0; 4]);
        let cfg = PowerConfig { tol: 0.0, max_iter: 10 };
        assert!(power_method(&op, &cfg, &mut RandomSource::new(1)).is_err());
    }

    #[test]
    fn phase_of_examples() {
        let z = ComplexSignal::new(vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]).unwrap();
        let p = phase_of(&z);
        assert!((p[0] - Complex64::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(p[1], Complex64::new(1.0, 0.0));
        assert!(p.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn err_examples() {
        let mut rng = RandomSource::new(6);
        let x0 = sample_unit_signal(8, &mut rng).unwrap();
        let rotated = x0.scaled(Complex64::from_polar(1.0, 1.234));
        assert!(err(&rotated, &x0).unwrap() < 1e-15);
        let e0 = ComplexSignal::basis(8, 0).unwrap();
        let e1 = ComplexSignal::basis(8, 1).unwrap();
        assert_eq!(err(&e0, &e1).unwrap(), 1.0);
        let y = sample_unit_signal(8, &mut rng).unwrap();
        let e = err(&y, &x0).unwrap();
        let frob = projector_distance(&y, &x0);
        assert!((0.5 * frob * frob - e).abs() < 1e-12);
        let not_unit = x0.scaled(Complex64::new(2.0, 0.0));
        assert!(err(&not_unit, &x0).is_err());
    }

    fn am_set(n: usize, r: usize, model: ObservationModel, seed: u64) -> (MeasurementSet, ComplexSignal) {
        let rng = RandomSource::new(seed);
        let x0 = sample_unit_signal(n, &mut rng.derive(&[u64::MAX])).unwrap();
        let cfg = AcquisitionConfig {
            pairs: r,
            model,
            mask: MaskKind::Gaussian,
            keep_intensities: true,
        };
        let set = build_measurement_set(&x0, Shape::line(n).unwrap(), &cfg, &rng).unwrap();
        (set, x0)
    }

    #[test]
    fn am_truth_is_fixed_point() {
        let (set, x0) = am_set(32, 3, ObservationModel::Identity, 7);
        let res = alt_min(&set, &x0, &AmConfig { t0: 10 }).unwrap();
        assert!(res.residual_history.iter().all(|r| *r < 1e-24));
        assert!(err(&res.x_hat, &x0).unwrap() < 1e-14);
    }

    #[test]
    fn am_rejects_lowpass_and_sign_only() {
        use crate::measurement::{LowPass, Psf};
        let (set, x0) = am_set(16, 2, ObservationModel::LowPass(LowPass::new(3, Psf::Flat)), 8);
        assert!(matches!(alt_min(&set, &x0, &AmConfig::default()), Err(Error::DeadBand)));
        let (mut set, x0) = am_set(16, 2, ObservationModel::Identity, 8);
        set.pairs[1].intensities = None;
        assert!(matches!(
            alt_min(&set, &x0, &AmConfig::default()),
            Err(Error::MissingIntensities)
        ));
    }

    #[test]
    fn am_dead_index_is_singular() {
        let (mut set, x0) = am_set(8, 1, ObservationModel::Identity, 9);
        for pair in set.pairs.iter_mut() {
            pair.w1[5] = Complex64::new(0.0, 0.0);
            pair.w2[5] = Complex64::new(0.0, 0.0);
        }
        match alt_min(&set, &x0, &AmConfig::default()) {
            Err(Error::SingularStep { indices }) => assert_eq!(indices, vec![5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn am_residual_is_monotone() {
        for (k, model) in [
            ObservationModel::Identity,
            ObservationModel::ExpNoise { sigma: 0.4 },
            ObservationModel::PoissonNoise { eta: 0.1 },
        ]
        .into_iter()
        .enumerate()
        {
            let (set, _) = am_set(64, 3, model, 20 + k as u64);
            let init = sample_unit_signal(64, &mut RandomSource::new(k as u64)).unwrap();
            let res = alt_min(&set, &init, &AmConfig { t0: 30 }).unwrap();
            for w in res.residual_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", w);
            }
        }
    }

    #[test]
    fn x_step_matches_normal_equations() {
        use crate::operator::dft_matrix;
        use nalgebra::{DMatrix, DVector};
        let (set, _) = am_set(8, 2, ObservationModel::Identity, 11);
        let init = sample_unit_signal(8, &mut RandomSource::new(12)).unwrap();
        let mut first = None;
        alt_min_observed(&set, &init, &AmConfig { t0: 1 }, |_, x| first = Some(x.clone())).unwrap();
        let first = first.unwrap();

        // Stack A_s = F Diag(w_s) and targets √b_s ⊙ Ph(A_s x_init), then solve (A*A) x = A* c.
        let f = dft_matrix(set.shape);
        let patterns = set.patterns().unwrap();
        let rows = 8 * patterns.len();
        let mut a = DMatrix::<Complex64>::zeros(rows, 8);
        let mut c = DVector::<Complex64>::zeros(rows);
        let x_init = DVector::from_column_slice(init.as_slice());
        for (s, (w, b)) in patterns.iter().enumerate() {
            let block = DMatrix::from_fn(8, 8, |l, k| f[(l, k)] * w[k]);
            let ax = &block * &x_init;
            for l in 0..8 {
                let z = ax[l];
                let ph = if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) };
                c[s * 8 + l] = ph * b.values[l].sqrt();
                for k in 0..8 {
                    a[(s * 8 + l, k)] = block[(l, k)];
                }
            }
        }
        let normal = a.adjoint() * &a;
        let rhs = a.adjoint() * c;
        let solution = normal.lu().solve(&rhs).unwrap();
        let scale = solution.norm();
        for k in 0..8 {
            assert!((solution[k] - first[k]).norm() <= 1e-10 * scale);
        }
    }
}
