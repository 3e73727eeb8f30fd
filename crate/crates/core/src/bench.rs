//! Desk-scale experiment protocols: phase transitions, robustness sweeps and
//! alternating-minimization error decay.
//!
//! Trial `t` of a cell with `r` pairs draws everything from
//! `RandomSource::new(seed).derive(&[r, t])`: the ground truth from child
//! `[0]`, the measurement set from `[1]`, the power-method start from `[2]`
//! and random AM starts from `[3]`. Cells are therefore re-runnable in
//! isolation, and a sweep over a model parameter reuses the same masks,
//! truths and noise draws for every parameter value.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::{
    build_measurement_set, AcquisitionConfig, LowPass, MaskKind, MeasurementSet,
    ObservationModel, Psf,
};
use crate::numeric::{sample_complex_gaussian, sample_unit_signal, ComplexSignal, RandomSource, Shape};
use crate::operator::{OneBitOperator, SubExpOperator};
use crate::solvers::{alt_min_observed, err, power_method, AmConfig, PowerConfig, RecoveryResult};

/// Success threshold on `1 − |⟨x̂, x0⟩|²` for spectral recovery.
pub const DEFAULT_TAU: f64 = 0.07;
/// `‖x̂x̂* − x0x0*‖_F` below which noiseless AM counts as exact.
pub const AM_EXACT_FROBENIUS: f64 = 1e-5;
/// `‖x̂x̂* − x0x0*‖_F` below which noisy AM counts as a success.
pub const AM_NOISY_FROBENIUS: f64 = 0.03;

/// CSV header shared by every bench table.
pub const CSV_HEADER: &str = "r,init,param,success_prob,median_err,mean_iters,wall_ms";

/// How the starting point of a trial is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitKind {
    /// Power method on the one-bit operator.
    OneBit,
    /// Power method on the SubExp operator.
    SubExp,
    /// A random unit vector.
    Random,
}

impl InitKind {
    pub fn label(&self) -> &'static str {
        match self {
            InitKind::OneBit => "onebit",
            InitKind::SubExp => "subexp",
            InitKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "onebit" => Some(InitKind::OneBit),
            "subexp" => Some(InitKind::SubExp),
            "random" => Some(InitKind::Random),
            _ => None,
        }
    }
}

/// Spectral initialization of one trial.
pub fn initialize(
    set: &MeasurementSet,
    kind: InitKind,
    power: &PowerConfig,
    trial: &RandomSource,
) -> Result<(ComplexSignal, usize)> {
    let res = initial_recovery(set, kind, power, trial)?;
    Ok((res.x_hat, res.iterations))
}

/// Like [`initialize`], keeping the full power-method result. A random start has
/// NaN `lambda_hat` and `rayleigh`.
pub fn initial_recovery(
    set: &MeasurementSet,
    kind: InitKind,
    power: &PowerConfig,
    trial: &RandomSource,
) -> Result<RecoveryResult> {
    match kind {
        InitKind::OneBit => power_method(&OneBitOperator::new(set), power, &mut trial.derive(&[2])),
        InitKind::SubExp => power_method(&SubExpOperator::new(set)?, power, &mut trial.derive(&[2])),
        InitKind::Random => Ok(RecoveryResult {
            x_hat: sample_complex_gaussian(set.n(), &mut trial.derive(&[3]))?.normalized()?,
            lambda_hat: f64::NAN,
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
            rayleigh: f64::NAN,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialGrid {
    pub n: usize,
    pub r_values: Vec<usize>,
    pub model: ObservationModel,
    pub mask: MaskKind,
    pub trials: usize,
    pub tau: f64,
    pub seed: u64,
    pub inits: Vec<InitKind>,
    /// When set, every initialization is refined by AM.
    pub refine: Option<AmConfig>,
    pub power: PowerConfig,
    /// Record wall-clock time; otherwise `wall_ms` is written as 0.
    pub timing: bool,
}

impl TrialGrid {
    pub fn new(n: usize, r_values: Vec<usize>, model: ObservationModel, trials: usize, seed: u64) -> Self {
        TrialGrid {
            n,
            r_values,
            model,
            mask: MaskKind::Gaussian,
            trials,
            tau: DEFAULT_TAU,
            seed,
            inits: vec![InitKind::OneBit],
            refine: None,
            power: PowerConfig::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Shape::line(self.n)?;
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(Error::param("r values must be non-empty and positive"));
        }
        if self.inits.is_empty() {
            return Err(Error::param("at least one init kind is required"));
        }
        self.power.validate()?;
        self.model.validate(Shape::line(self.n)?)
    }

    fn label(&self, kind: InitKind) -> String {
        match self.refine {
            Some(_) => format!("am+{}", kind.label()),
            None => kind.label().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub r: usize,
    pub init: String,
    pub param: f64,
    pub success_prob: f64,
    pub median_err: f64,
    pub mean_iters: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn find(&self, r: usize, init: &str, param: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|row| row.r == r && row.init == init && row.param == param)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.r,
                row.init,
                format_sig6(row.param),
                format_sig6(row.success_prob),
                format_sig6(row.median_err),
                format_sig6(row.mean_iters),
                format_sig6(row.wall_ms)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let mut offset = 0;
        let header = lines.next().unwrap_or("");
        if header != CSV_HEADER {
            return Err(Error::format(0, format!("unexpected CSV header {header:?}")));
        }
        offset += header.len() + 1;
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                offset += 1;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::format(offset, format!("expected 7 fields, got {}", fields.len())));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|_| Error::format(offset, format!("bad number {:?}", fields[i])))
            };
            rows.push(ResultRow {
                r: fields[0]
                    .parse()
                    .map_err(|_| Error::format(offset, format!("bad r {:?}", fields[0])))?,
                init: fields[1].to_string(),
                param: num(2)?,
                success_prob: num(3)?,
                median_err: num(4)?,
                mean_iters: num(5)?,
                wall_ms: num(6)?,
            });
            offset += line.len() + 1;
        }
        Ok(ResultTable { rows })
    }
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..6).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Outcome of one init kind in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// 1.0 for failed runs.
    pub err: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub ok: bool,
}

fn failed() -> TrialOutcome {
    TrialOutcome {
        err: 1.0,
        iterations: 0,
        wall_ms: 0.0,
        ok: false,
    }
}

/// Runs one end-to-end trial for every init kind, sharing truth and masks.
pub fn run_trial(
    n: usize,
    r: usize,
    model: &ObservationModel,
    mask: MaskKind,
    inits: &[InitKind],
    refine: Option<AmConfig>,
    power: &PowerConfig,
    trial: &RandomSource,
) -> Vec<TrialOutcome> {
    let prepare = || -> Result<(ComplexSignal, MeasurementSet)> {
        let shape = Shape::line(n)?;
        let x0 = sample_unit_signal(n, &mut trial.derive(&[0]))?;
        let keep = refine.is_some() || inits.contains(&InitKind::SubExp);
        let cfg = AcquisitionConfig {
            pairs: r,
            model: model.clone(),
            mask,
            keep_intensities: keep,
        };
        let set = build_measurement_set(&x0, shape, &cfg, &trial.derive(&[1]))?;
        Ok((x0, set))
    };
    let (x0, set) = match prepare() {
        Ok(v) => v,
        Err(_) => return vec![failed(); inits.len()],
    };
    inits
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let run = || -> Result<(f64, usize)> {
                let (x, mut iters) = initialize(&set, kind, power, trial)?;
                let x = match refine {
                    Some(am) => {
                        let res = alt_min_observed(&set, &x, &am, |_, _| {})?;
                        iters += res.iterations;
                        res.x_hat
                    }
                    None => x,
                };
                Ok((err(&x, &x0)?, iters))
            };
            match run() {
                Ok((e, iterations)) => TrialOutcome {
                    err: e,
                    iterations,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    ok: true,
                },
                Err(_) => failed(),
            }
        })
        .collect()
}

fn summarize(r: usize, init: String, param: f64, outcomes: &[TrialOutcome], tau: f64, timing: bool) -> ResultRow {
    let trials = outcomes.len() as f64;
    let errs: Vec<f64> = outcomes.iter().map(|o| o.err).collect();
    ResultRow {
        r,
        init,
        param,
        success_prob: outcomes.iter().filter(|o| o.ok && o.err < tau).count() as f64 / trials,
        median_err: median(&errs),
        mean_iters: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>() / trials,
        wall_ms: if timing {
            outcomes.iter().map(|o| o.wall_ms).sum::<f64>() / trials
        } else {
            0.0
        },
    }
}

/// Runs `grid.trials` recoveries per `(r, init)` cell. Rows are ordered by `r`,
/// then by the order of `grid.inits`.
pub fn phase_transition(grid: &TrialGrid) -> Result<ResultTable> {
    grid.validate()?;
    let root = RandomSource::new(grid.seed);
    let jobs: Vec<(usize, usize)> = grid
        .r_values
        .iter()
        .flat_map(|&r| (0..grid.trials).map(move |t| (r, t)))
        .collect();
    let outcomes: Vec<Vec<TrialOutcome>> = jobs
        .par_iter()
        .map(|&(r, t)| {
            run_trial(
                grid.n,
                r,
                &grid.model,
                grid.mask,
                &grid.inits,
                grid.refine,
                &grid.power,
                &root.derive(&[r as u64, t as u64]),
            )
        })
        .collect();
    let mut rows = Vec::new();
    for (ri, &r) in grid.r_values.iter().enumerate() {
        let cell = &outcomes[ri * grid.trials..(ri + 1) * grid.trials];
        for (k, &kind) in grid.inits.iter().enumerate() {
            let per_init: Vec<TrialOutcome> = cell.iter().map(|o| o[k]).collect();
            rows.push(summarize(
                r,
                grid.label(kind),
                grid.model.parameter(),
                &per_init,
                grid.tau,
                grid.timing,
            ));
        }
    }
    Ok(ResultTable { rows })
}

/// Parameter swept by [`robustness_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub enum SweepParameter {
    /// Exponential-noise variance σ.
    Sigma,
    /// Tanh clipping level α.
    Alpha,
    /// Poisson scale η.
    Eta,
    /// Super-resolution factor; the cut-off is the largest with SRF at least this value.
    Srf { psf: Psf, scale_r: bool },
}

impl SweepParameter {
    pub fn model(&self, value: f64, n: usize) -> Result<ObservationModel> {
        Ok(match self {
            SweepParameter::Sigma => ObservationModel::ExpNoise { sigma: value },
            SweepParameter::Alpha => ObservationModel::TanhDistortion { alpha: value },
            SweepParameter::Eta => ObservationModel::PoissonNoise { eta: value },
            SweepParameter::Srf { psf, .. } => ObservationModel::LowPass(LowPass::new(
                LowPass::cutoff_for_srf(n, value)?,
                psf.clone(),
            )),
        })
    }

    /// Effective number of pairs: `r · round(SRF²)` when scaling is requested.
    pub fn pairs(&self, r: usize, value: f64) -> usize {
        match self {
            SweepParameter::Srf { scale_r: true, .. } => r * (value * value).round().max(1.0) as usize,
            _ => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub n: usize,
    pub r_values: Vec<usize>,
    pub trials: usize,
    pub tau: f64,
    pub seed: u64,
    pub power: PowerConfig,
    pub timing: bool,
}

/// One-bit recovery error across a parameter grid. Rows are ordered by
/// parameter value, then by `r`; `r` in each row is the effective pair count.
pub fn robustness_sweep(spec: &SweepSpec) -> Result<ResultTable> {
    if spec.values.is_empty() || spec.r_values.is_empty() || spec.trials == 0 {
        return Err(Error::param("sweep needs values, r values and at least one trial"));
    }
    let shape = Shape::line(spec.n)?;
    let mut cells = Vec::new();
    for &value in &spec.values {
        let model = spec.parameter.model(value, spec.n)?;
        model.validate(shape)?;
        for &r in &spec.r_values {
            if r == 0 {
                return Err(Error::param("r values must be positive"));
            }
            cells.push((value, model.clone(), r, spec.parameter.pairs(r, value)));
        }
    }
    let root = RandomSource::new(spec.seed);
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (_, model, _, pairs) = &cells[c];
            run_trial(
                spec.n,
                *pairs,
                model,
                MaskKind::Gaussian,
                &[InitKind::OneBit],
                None,
                &spec.power,
                &root.derive(&[*pairs as u64, t as u64]),
            )[0]
        })
        .collect();
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, (value, _, _, pairs))| {
            let cell = &outcomes[c * spec.trials..(c + 1) * spec.trials];
            summarize(*pairs, InitKind::OneBit.label().to_string(), *value, cell, spec.tau, spec.timing)
        })
        .collect();
    Ok(ResultTable { rows })
}

/// Per-iteration error traces of AM for one init kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    pub init: InitKind,
    /// `errs[trial][t]` for `t = 0..=t0`; `t = 0` is the initialization.
    pub errs: Vec<Vec<f64>>,
    /// Residual `R(x_t, u_t)` per trial.
    pub residuals: Vec<Vec<f64>>,
}

impl DecayTrace {
    pub fn median_trace(&self) -> Vec<f64> {
        let len = self.errs.first().map_or(0, Vec::len);
        (0..len)
            .map(|t| median(&self.errs.iter().map(|e| e[t]).collect::<Vec<_>>()))
            .collect()
    }

    /// True when every residual history is non-increasing up to `slack`.
    pub fn residuals_monotone(&self, slack: f64) -> bool {
        self.residuals
            .iter()
            .all(|h| h.windows(2).all(|w| w[1] <= w[0] + slack))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySpec {
    pub n: usize,
    pub r: usize,
    pub model: ObservationModel,
    pub mask: MaskKind,
    pub inits: Vec<InitKind>,
    pub t0: usize,
    pub trials: usize,
    pub seed: u64,
    pub power: PowerConfig,
}

/// Runs AM from each init kind on shared measurement sets and records
/// `err(x_t, x0)` after every iteration. Trials that fail record `err = 1`.
pub fn am_error_decay(spec: &DecaySpec) -> Result<Vec<DecayTrace>> {
    if spec.trials == 0 || spec.t0 == 0 || spec.inits.is_empty() {
        return Err(Error::param("decay needs trials, t0 and init kinds"));
    }
    if spec.model.has_dead_band() {
        return Err(Error::DeadBand);
    }
    let shape = Shape::line(spec.n)?;
    spec.model.validate(shape)?;
    let root = RandomSource::new(spec.seed);
    let am = AmConfig { t0: spec.t0 };
    let per_trial: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let trial = root.derive(&[spec.r as u64, t as u64]);
            let fail = (vec![1.0; spec.t0 + 1], Vec::new());
            let prepared = (|| -> Result<(ComplexSignal, MeasurementSet)> {
                let x0 = sample_unit_signal(spec.n, &mut trial.derive(&[0]))?;
                let cfg = AcquisitionConfig {
                    pairs: spec.r,
                    model: spec.model.clone(),
                    mask: spec.mask,
                    keep_intensities: true,
                };
                let set = build_measurement_set(&x0, shape, &cfg, &trial.derive(&[1]))?;
                Ok((x0, set))
            })();
            let Ok((x0, set)) = prepared else {
                return vec![fail; spec.inits.len()];
            };
            spec.inits
                .iter()
                .map(|&kind| {
                    let run = || -> Result<(Vec<f64>, Vec<f64>)> {
                        let (x, _) = initialize(&set, kind, &spec.power, &trial)?;
                        let mut errs = vec![err(&x, &x0)?];
                        let res = alt_min_observed(&set, &x, &am, |_, xt| {
                            let e = xt
                                .normalized()
                                .ok()
                                .and_then(|u| err(&u, &x0).ok())
                                .unwrap_or(1.0);
                            errs.push(e);
                        })?;
                        Ok((errs, res.residual_history))
                    };
                    run().unwrap_or_else(|_| fail.clone())
                })
                .collect()
        })
        .collect();
    Ok(spec
        .inits
        .iter()
        .enumerate()
        .map(|(k, &init)| DecayTrace {
            init,
            errs: per_trial.iter().map(|t| t[k].0.clone()).collect(),
            residuals: per_trial.iter().map(|t| t[k].1.clone()).collect(),
        })
        .collect())
}

/// CSV rows for decay traces: `param` is the iteration `t`, `success_prob` the
/// fraction of trials with `err < tau` at `t`.
pub fn decay_table(r: usize, traces: &[DecayTrace], tau: f64) -> ResultTable {
    let mut rows = Vec::new();
    for trace in traces {
        let median = trace.median_trace();
        for (t, m) in median.iter().enumerate() {
            let hits = trace.errs.iter().filter(|e| e[t] < tau).count();
            rows.push(ResultRow {
                r,
                init: format!("am+{}", trace.init.label()),
                param: t as f64,
                success_prob: hits as f64 / trace.errs.len() as f64,
                median_err: *m,
                mean_iters: t as f64,
                wall_ms: 0.0,
            });
        }
    }
    ResultTable { rows }
}
