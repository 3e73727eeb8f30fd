//! The signal-to-noise constant `λ = E⟨sign(θ(E₁) − θ(E₂)), E₁ − E₂⟩`
//! for i.i.d. unit-mean exponentials `E₁, E₂`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::{LowPass, ObservationModel};
use crate::numeric::{RandomSource, Shape};

/// Minimum Monte-Carlo sample count.
pub const MIN_SAMPLES: usize = 1000;

const BATCH: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaSource {
    ClosedForm,
    MonteCarlo,
    /// Monte Carlo of an operational definition with no closed form to compare against
    /// (Poisson noise).
    Empirical,
}

impl LambdaSource {
    pub fn label(&self) -> &'static str {
        match self {
            LambdaSource::ClosedForm => "closed-form",
            LambdaSource::MonteCarlo => "monte-carlo",
            LambdaSource::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub value: f64,
    /// 0 for closed forms.
    pub stderr: f64,
    pub samples: usize,
    pub source: LambdaSource,
}

/// Closed form where one exists: identity → 1, exponential noise →
/// `(1 + 2√σ)/(1 + √σ)²`, low-pass → `|band| / n = 1/SRF`.
/// Tanh and Poisson return `None`.
pub fn lambda_closed_form(model: &ObservationModel, shape: Shape) -> Result<Option<LambdaEstimate>> {
    model.validate(shape)?;
    let value = match model {
        ObservationModel::Identity => 1.0,
        ObservationModel::ExpNoise { sigma } => {
            let s = sigma.sqrt();
            (1.0 + 2.0 * s) / ((1.0 + s) * (1.0 + s))
        }
        ObservationModel::LowPass(lp) => lp.band_size(shape) as f64 / shape.len() as f64,
        ObservationModel::TanhDistortion { .. } | ObservationModel::PoissonNoise { .. } => {
            return Ok(None)
        }
    };
    Ok(Some(LambdaEstimate {
        value,
        stderr: 0.0,
        samples: 0,
        source: LambdaSource::ClosedForm,
    }))
}

/// Same tie rules as the quantizer.
fn compare(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a < b {
        -1.0
    } else if a == 0.0 {
        0.0
    } else {
        1.0
    }
}

struct LowPassTable {
    band: Vec<bool>,
    mags: Vec<f64>,
}

impl LowPassTable {
    fn new(lp: &LowPass, shape: Shape) -> Result<Self> {
        Ok(LowPassTable {
            band: lp.band(shape),
            mags: lp.magnitudes(shape, 0)?,
        })
    }
}

fn poisson_draw(mean: f64, rng: &mut RandomSource) -> f64 {
    use rand_distr::{Distribution, Poisson};
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng)
    }
}

/// Monte-Carlo estimate of λ.
///
/// Deterministic models draw only `(E₁, E₂)` per sample, so calls with the
/// same seed share random numbers across parameter values. For the low-pass
/// model the frequency index cycles through all `n` positions, which mixes
/// in-band and out-of-band samples in the exact proportion `|band| / n`.
pub fn lambda_monte_carlo(
    model: &ObservationModel,
    shape: Shape,
    samples: usize,
    rng: &RandomSource,
) -> Result<LambdaEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::param(format!(
            "at least {MIN_SAMPLES} samples are required, got {samples}"
        )));
    }
    model.validate(shape)?;
    let table = match model {
        ObservationModel::LowPass(lp) => Some(LowPassTable::new(lp, shape)?),
        _ => None,
    };
    let n = shape.len();
    let batches = samples.div_ceil(BATCH);
    let sums: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng.derive(&[b as u64]);
            let start = b * BATCH;
            let end = (start + BATCH).min(samples);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for s in start..end {
                let e1 = rng.exp1();
                let e2 = rng.exp1();
                let (t1, t2) = match model {
                    ObservationModel::Identity => (e1, e2),
                    ObservationModel::ExpNoise { sigma } => {
                        let m = sigma.sqrt();
                        (e1 + m * rng.exp1(), e2 + m * rng.exp1())
                    }
                    ObservationModel::PoissonNoise { eta } => (
                        eta * poisson_draw(e1 / eta, &mut rng),
                        eta * poisson_draw(e2 / eta, &mut rng),
                    ),
                    ObservationModel::TanhDistortion { alpha } => {
                        ((alpha * e1).tanh(), (alpha * e2).tanh())
                    }
                    ObservationModel::LowPass(_) => {
                        let t = table.as_ref().expect("low-pass table");
                        let k = s % n;
                        if t.band[k] {
                            (t.mags[k] * e1, t.mags[k] * e2)
                        } else {
                            (0.0, 0.0)
                        }
                    }
                };
                let c = compare(t1, t2) * (e1 - e2);
                sum += c;
                sum_sq += c * c;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = sums
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let count = samples as f64;
    let mean = sum / count;
    let var = ((sum_sq / count) - mean * mean).max(0.0) * count / (count - 1.0);
    let source = if matches!(model, ObservationModel::PoissonNoise { .. }) {
        LambdaSource::Empirical
    } else {
        LambdaSource::MonteCarlo
    };
    Ok(LambdaEstimate {
        value: mean,
        stderr: (var / count).sqrt(),
        samples,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Psf;

    fn line(n: usize) -> Shape {
        Shape::line(n).unwrap()
    }

    #[test]
    fn closed_forms() {
        let s = line(16);
        let id = lambda_closed_form(&ObservationModel::Identity, s).unwrap().unwrap();
        assert_eq!(id.value, 1.0);
        let noisy = lambda_closed_form(&ObservationModel::ExpNoise { sigma: 1.0 }, s)
            .unwrap()
            .unwrap();
        assert!((noisy.value - 0.75).abs() < 1e-15);
        let lp = ObservationModel::LowPass(LowPass::new(3, Psf::Flat));
        assert_eq!(lambda_closed_form(&lp, s).unwrap().unwrap().value, 0.4375);
        assert!(lambda_closed_form(&ObservationModel::TanhDistortion { alpha: 1.0 }, s)
            .unwrap()
            .is_none());
        assert!(lambda_closed_form(&ObservationModel::PoissonNoise { eta: 1.0 }, s)
            .unwrap()
            .is_none());
    }

    #[test]
    fn exp_noise_closed_form_decreasing() {
        let s = line(8);
        let mut prev = 1.0 + 1e-12;
        for sigma in [0.0, 1e-6, 0.01, 0.25, 1.0, 4.0, 100.0] {
            let v = lambda_closed_form(&ObservationModel::ExpNoise { sigma }, s)
                .unwrap()
                .unwrap()
                .value;
            assert!(v < prev, "sigma {sigma}");
            assert!(v > 0.0 && v <= 1.0);
            prev = v;
        }
        let tiny = lambda_closed_form(&ObservationModel::ExpNoise { sigma: 1e-12 }, s)
            .unwrap()
            .unwrap()
            .value;
        assert!((tiny - 1.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_samples() {
        let r = lambda_monte_carlo(&ObservationModel::Identity, line(8), 10, &RandomSource::new(1));
        assert!(r.is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_closed_forms() {
        let s = line(16);
        let mut models = vec![ObservationModel::Identity];
        for sigma in [0.0, 0.25, 1.0, 4.0] {
            models.push(ObservationModel::ExpNoise { sigma });
        }
        for fc in [7, 3, 1] {
            models.push(ObservationModel::LowPass(LowPass::new(fc, Psf::Flat)));
        }
        for (i, model) in models.iter().enumerate() {
            let exact = lambda_closed_form(model, s).unwrap().unwrap().value;
            let mc = lambda_monte_carlo(model, s, 200_000, &RandomSource::new(100 + i as u64)).unwrap();
            assert!(
                (mc.value - exact).abs() <= 3.0 * mc.stderr,
                "{model:?}: {} vs {exact} (se {})",
                mc.value,
                mc.stderr
            );
        }
    }

    #[test]
    fn lowpass_lambda_ignores_psf_values() {
        let s = line(16);
        let rng = RandomSource::new(5);
        let flat = lambda_monte_carlo(&ObservationModel::LowPass(LowPass::new(3, Psf::Flat)), s, 50_000, &rng).unwrap();
        let shaped = lambda_monte_carlo(
            &ObservationModel::LowPass(LowPass::new(3, Psf::Average { width: 2 })),
            s,
            50_000,
            &rng,
        )
        .unwrap();
        assert_eq!(flat.value, shaped.value);
    }

    #[test]
    fn tanh_lambda_non_increasing() {
        let s = line(8);
        let rng = RandomSource::new(9);
        let values: Vec<f64> = [0.1, 1.0, 10.0, 30.0]
            .iter()
            .map(|&alpha| {
                lambda_monte_carlo(&ObservationModel::TanhDistortion { alpha }, s, 100_000, &rng)
                    .unwrap()
                    .value
            })
            .collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(values.iter().all(|v| *v > 0.0 && *v <= 1.0 + 0.02));
        assert!(values[2] < values[1]);
    }

    #[test]
    fn poisson_is_labelled_empirical() {
        let est = lambda_monte_carlo(
            &ObservationModel::PoissonNoise { eta: 0.5 },
            line(8),
            20_000,
            &RandomSource::new(2),
        )
        .unwrap();
        assert_eq!(est.source, LambdaSource::Empirical);
        assert!(est.value > 0.0 && est.value < 1.0);
    }
}
