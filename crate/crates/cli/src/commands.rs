use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use onebit_cdp::bench::{
    am_error_decay, decay_table, format_sig6, initialize, phase_transition, robustness_sweep,
    DecaySpec, InitKind, SweepParameter, SweepSpec, TrialGrid,
};
use onebit_cdp::format::{load_measurement_set, save_measurement_set, save_recovery, Method, RecoveryFile};
use onebit_cdp::imaging::{load_image, lowpass_for_srf, recover_image, save_image, ImagingConfig};
use onebit_cdp::numeric::{derive_seed, sample_unit_signal};
use onebit_cdp::snr::{lambda_closed_form, lambda_monte_carlo};
use onebit_cdp::{
    build_measurement_set, err, power_method, AcquisitionConfig, AmConfig, LowPass, MaskKind,
    ObservationModel, OneBitOperator, PowerConfig, Psf, RandomSource, Shape, SubExpOperator,
};

use crate::args::*;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_IO: u8 = 5;

const PSF_SEED_TAG: u64 = 0x7073_66;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] onebit_cdp::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(onebit_cdp::Error::Io(e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Recover(a) => recover(a),
        Command::Lambda(a) => lambda(a),
        Command::Bench(BenchCommand::Transition(a)) => transition(a),
        Command::Bench(BenchCommand::Robustness(a)) => robustness(a),
        Command::Bench(BenchCommand::AmDecay(a)) => am_decay(a),
        Command::Image(a) => image(a),
    }
}

fn psf(kind: PsfKind, width: usize, vary: bool, seed: u64) -> Psf {
    if vary {
        return Psf::PerPair {
            seed: derive_seed(seed, PSF_SEED_TAG),
        };
    }
    match kind {
        PsfKind::Flat => Psf::Flat,
        PsfKind::Average => Psf::Average { width },
    }
}

fn build_model(m: &ModelArgs, shape: Shape, seed: u64) -> Result<ObservationModel> {
    let given = [
        ("--sigma", m.sigma.is_some(), ModelKind::ExpNoise),
        ("--eta", m.eta.is_some(), ModelKind::Poisson),
        ("--alpha", m.alpha.is_some(), ModelKind::Tanh),
        ("--cutoff", m.cutoff.is_some(), ModelKind::Lowpass),
        ("--srf", m.srf.is_some(), ModelKind::Lowpass),
        ("--vary-psf", m.vary_psf, ModelKind::Lowpass),
    ];
    for (flag, present, kind) in given {
        if present && kind != m.model {
            return Err(usage(format!("{flag} does not apply to the selected --model")));
        }
    }
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| usage(format!("{flag} is required for this --model")));
    let model = match m.model {
        ModelKind::Identity => ObservationModel::Identity,
        ModelKind::ExpNoise => ObservationModel::ExpNoise {
            sigma: need(m.sigma, "--sigma")?,
        },
        ModelKind::Poisson => ObservationModel::PoissonNoise {
            eta: need(m.eta, "--eta")?,
        },
        ModelKind::Tanh => ObservationModel::TanhDistortion {
            alpha: need(m.alpha, "--alpha")?,
        },
        ModelKind::Lowpass => {
            let psf = psf(m.psf, m.psf_width, m.vary_psf, seed);
            match (m.cutoff, m.srf) {
                (Some(fc), None) => ObservationModel::LowPass(LowPass::new(fc, psf)),
                (None, Some(srf)) => lowpass_for_srf(shape, srf, psf)?,
                _ => return Err(usage("--model lowpass needs exactly one of --cutoff or --srf")),
            }
        }
    };
    model.validate(shape)?;
    Ok(model)
}

fn build_mask(m: &MaskArgs) -> Result<MaskKind> {
    Ok(match m.mask {
        MaskArg::Gaussian => MaskKind::Gaussian,
        MaskArg::Bernoulli => {
            if !(m.p > 0.0 && m.p < 1.0) {
                return Err(usage(format!("--p must lie in (0, 1), got {}", m.p)));
            }
            MaskKind::Bernoulli { p: m.p }
        }
    })
}

fn power_config(s: &SolverArgs) -> Result<PowerConfig> {
    let cfg = PowerConfig {
        tol: s.tol,
        max_iter: s.max_iter,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn am_config(s: &SolverArgs) -> Result<AmConfig> {
    if s.t0 == 0 {
        return Err(usage("--t0 must be at least 1"));
    }
    Ok(AmConfig { t0: s.t0 })
}

fn init_kind(i: InitArg) -> InitKind {
    match i {
        InitArg::Onebit => InitKind::OneBit,
        InitArg::Subexp => InitKind::SubExp,
        InitArg::Random => InitKind::Random,
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let shape = match (a.n, a.height, a.width) {
        (Some(n), None, None) => Shape::line(n)?,
        (None, Some(h), Some(w)) => Shape::grid(h, w)?,
        _ => return Err(usage("give either --n or both --height and --width")),
    };
    let model = build_model(&a.model, shape, a.seed)?;
    let root = RandomSource::new(a.seed);
    let x0 = sample_unit_signal(shape.len(), &mut root.derive(&[0]))?;
    let cfg = AcquisitionConfig {
        pairs: a.pairs,
        model,
        mask: build_mask(&a.mask)?,
        keep_intensities: a.keep_intensities,
    };
    let mut set = build_measurement_set(&x0, shape, &cfg, &root.derive(&[1]))?;
    if a.save_truth {
        set.truth = Some(x0);
    }
    save_measurement_set(&set, &a.out)?;
    println!(
        "n={} shape={} r={} model={} param={} intensities={} truth={}",
        set.n(),
        set.shape,
        set.r(),
        set.model.name(),
        format_sig6(set.model.parameter()),
        set.has_intensities(),
        set.truth.is_some()
    );
    Ok(())
}

fn recover(a: RecoverArgs) -> Result<()> {
    let set = load_measurement_set(&a.input)?;
    let power = power_config(&a.solver)?;
    let root = RandomSource::new(a.seed);
    let (method, result) = match a.method {
        MethodArg::Onebit => (
            Method::OneBit,
            power_method(&OneBitOperator::new(&set), &power, &mut root.derive(&[2]))?,
        ),
        MethodArg::Subexp => (
            Method::SubExp,
            power_method(&SubExpOperator::new(&set)?, &power, &mut root.derive(&[2]))?,
        ),
        MethodArg::Am => {
            let am = am_config(&a.solver)?;
            if !set.has_intensities() {
                return Err(onebit_cdp::Error::MissingIntensities.into());
            }
            if set.model.has_dead_band() {
                return Err(onebit_cdp::Error::DeadBand.into());
            }
            let (x, iters) = initialize(&set, init_kind(a.init), &power, &root)?;
            let mut res = onebit_cdp::alt_min(&set, &x, &am)?;
            res.iterations += iters;
            (Method::AltMin, res)
        }
    };
    let file = RecoveryFile {
        shape: set.shape,
        method,
        x_hat: result.x_hat.clone(),
        lambda_hat: result.lambda_hat,
        iterations: result.iterations as u64,
        converged: result.converged,
        residual_history: result.residual_history.clone(),
    };
    save_recovery(&file, &a.out)?;
    let mut line = format!(
        "method={} iterations={} converged={} lambda_hat={}",
        method.label(),
        result.iterations,
        result.converged,
        format_sig6(result.lambda_hat)
    );
    if result.negative_dominant() {
        line.push_str(" warning=negative-dominant");
    }
    if let Some(truth) = &set.truth {
        line.push_str(&format!(" err={}", format_sig6(err(&result.x_hat, truth)?)));
    }
    println!("{line}");
    Ok(())
}

fn lambda(a: LambdaArgs) -> Result<()> {
    let shape = Shape::line(a.n)?;
    let model = build_model(&a.model, shape, a.seed)?;
    let closed = lambda_closed_form(&model, shape)?;
    let mc = lambda_monte_carlo(&model, shape, a.samples, &RandomSource::new(a.seed))?;
    let closed = closed.map_or("NA".to_string(), |c| format!("{:.6}", c.value));
    println!(
        "closed_form={closed} mc={}±{} samples={} source={}",
        format_sig6(mc.value),
        format_sig6(mc.stderr),
        mc.samples,
        mc.source.label()
    );
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn transition(a: TransitionArgs) -> Result<()> {
    let shape = Shape::line(a.grid.n)?;
    let grid = TrialGrid {
        n: a.grid.n,
        r_values: a.r.clone(),
        model: build_model(&a.model, shape, a.grid.seed)?,
        mask: build_mask(&a.mask)?,
        trials: a.grid.trials,
        tau: a.grid.tau,
        seed: a.grid.seed,
        inits: a.inits.iter().map(|&i| init_kind(i)).collect(),
        refine: if a.refine_am {
            Some(am_config(&a.grid.solver)?)
        } else {
            None
        },
        power: power_config(&a.grid.solver)?,
        timing: a.grid.timestamp,
    };
    let table = phase_transition(&grid)?;
    write_text(&a.grid.out, &table.to_csv())?;
    println!("rows={} out={}", table.rows.len(), a.grid.out.display());
    Ok(())
}

fn robustness(a: RobustnessArgs) -> Result<()> {
    let parameter = match a.param {
        SweepArg::Sigma => SweepParameter::Sigma,
        SweepArg::Alpha => SweepParameter::Alpha,
        SweepArg::Eta => SweepParameter::Eta,
        SweepArg::Srf => SweepParameter::Srf {
            psf: psf(a.psf, a.psf_width, false, a.grid.seed),
            scale_r: a.scale_r,
        },
    };
    if a.scale_r && a.param != SweepArg::Srf {
        return Err(usage("--scale-r only applies to --param srf"));
    }
    let spec = SweepSpec {
        parameter,
        values: a.values.clone(),
        n: a.grid.n,
        r_values: a.r.clone(),
        trials: a.grid.trials,
        tau: a.grid.tau,
        seed: a.grid.seed,
        power: power_config(&a.grid.solver)?,
        timing: a.grid.timestamp,
    };
    let table = robustness_sweep(&spec)?;
    write_text(&a.grid.out, &table.to_csv())?;
    println!("rows={} out={}", table.rows.len(), a.grid.out.display());
    Ok(())
}

fn am_decay(a: DecayArgs) -> Result<()> {
    let shape = Shape::line(a.grid.n)?;
    let spec = DecaySpec {
        n: a.grid.n,
        r: a.r,
        model: build_model(&a.model, shape, a.grid.seed)?,
        mask: build_mask(&a.mask)?,
        inits: a.inits.iter().map(|&i| init_kind(i)).collect(),
        t0: am_config(&a.grid.solver)?.t0,
        trials: a.grid.trials,
        seed: a.grid.seed,
        power: power_config(&a.grid.solver)?,
    };
    let traces = am_error_decay(&spec)?;
    let table = decay_table(a.r, &traces, a.grid.tau);
    write_text(&a.grid.out, &table.to_csv())?;
    println!("rows={} out={}", table.rows.len(), a.grid.out.display());
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(".meta");
    PathBuf::from(s)
}

fn image(a: ImageArgs) -> Result<()> {
    if a.init == InitArg::Random {
        return Err(usage("--init must be onebit or subexp for images"));
    }
    let img = load_image(&a.input)?;
    let shape = img.shape()?;
    let cfg = ImagingConfig {
        pairs: a.pairs,
        model: build_model(&a.model, shape, a.seed)?,
        mask: build_mask(&a.mask)?,
        init: init_kind(a.init),
        refine: if a.refine_am {
            Some(am_config(&a.solver)?)
        } else {
            None
        },
        power: power_config(&a.solver)?,
        seed: a.seed,
    };
    let rec = recover_image(&img, &cfg)?;
    save_image(&rec.image, &a.out)?;
    let mut meta = rec.metadata(&cfg, &img);
    if a.timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        meta.push_str(&format!("timestamp={secs}\n"));
    }
    let meta_path = a.metadata.clone().unwrap_or_else(|| sidecar_path(&a.out));
    write_text(&meta_path, &meta)?;
    for (c, ch) in rec.channels.iter().enumerate() {
        println!("channel={c} err={}", format_sig6(ch.err));
    }
    Ok(())
}
