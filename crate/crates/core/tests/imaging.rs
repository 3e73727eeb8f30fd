use onebit_cdp::imaging::{
    decode_pnm, encode_pnm, load_image, lowpass_for_srf, recover_image, recover_image_with_seeds,
    save_image, ImagePlane, ImagingConfig,
};
use onebit_cdp::{dft2, idft2, ComplexSignal, Error, LowPass, ObservationModel, Psf};
use num_complex::Complex64;

/// Smooth ramp with a bright disk, quantized to 8 bits.
fn synthetic(size: usize, channels: usize) -> ImagePlane {
    let planes = (0..channels)
        .map(|c| {
            (0..size * size)
                .map(|i| {
                    let (y, x) = ((i / size) as f64, (i % size) as f64);
                    let ramp = 0.2 + 0.5 * (x + (c as f64 + 1.0) * y) / (3.0 * size as f64);
                    let (dy, dx) = (y - size as f64 * 0.4, x - size as f64 * (0.3 + 0.2 * c as f64));
                    let disk = if dy * dy + dx * dx < (size as f64 / 5.0).powi(2) { 0.3 } else { 0.0 };
                    ((ramp + disk).min(1.0) * 255.0).round() / 255.0
                })
                .collect()
        })
        .collect();
    ImagePlane::new(size, size, planes).unwrap()
}

fn max_err(img: &ImagePlane, cfg: &ImagingConfig) -> f64 {
    recover_image(img, cfg)
        .unwrap()
        .channels
        .iter()
        .map(|c| c.err)
        .fold(0.0, f64::max)
}

#[test]
fn noiseless_grayscale_recovery() {
    let img = synthetic(32, 1);
    let e = max_err(&img, &ImagingConfig::new(24, ObservationModel::Identity, 1));
    assert!(e <= 0.05, "err {e}");
}

#[test]
fn severe_distortion_recovery() {
    let img = synthetic(32, 1);
    for alpha in [0.001, 0.1] {
        let e = max_err(&img, &ImagingConfig::new(24, ObservationModel::TanhDistortion { alpha }, 2));
        assert!(e <= 0.1, "alpha {alpha}: err {e}");
    }
}

#[test]
fn blind_super_resolution_recovery() {
    let img = synthetic(32, 1);
    let model = lowpass_for_srf(img.shape().unwrap(), 2.0, Psf::Average { width: 3 }).unwrap();
    let e = max_err(&img, &ImagingConfig::new(96, model, 3));
    assert!(e <= 0.1, "err {e}");
}

#[test]
fn psf_magnitudes_do_not_change_recovery() {
    let img = synthetic(16, 1);
    let shape = img.shape().unwrap();
    let ObservationModel::LowPass(flat) = lowpass_for_srf(shape, 2.0, Psf::Flat).unwrap() else {
        unreachable!()
    };
    let custom: Vec<f64> = (0..shape.len()).map(|k| 0.1 + (k % 7) as f64 / 7.0).collect();
    let psfs = [
        Psf::Flat,
        Psf::Average { width: 3 },
        Psf::Custom(custom),
        Psf::PerPair { seed: 9 },
    ];
    let runs: Vec<_> = psfs
        .into_iter()
        .map(|psf| {
            let model = ObservationModel::LowPass(LowPass::new(flat.cutoff, psf));
            recover_image(&img, &ImagingConfig::new(8, model, 4)).unwrap()
        })
        .collect();
    for run in &runs[1..] {
        assert_eq!(run.image, runs[0].image);
        assert_eq!(run.channels, runs[0].channels);
    }
}

#[test]
fn channel_permutation_commutes() {
    let img = synthetic(16, 3);
    let cfg = ImagingConfig::new(12, ObservationModel::ExpNoise { sigma: 0.1 }, 5);
    let seeds = [11, 22, 33];
    let base = recover_image_with_seeds(&img, &cfg, &seeds).unwrap();
    let perm = [2, 0, 1];
    let shuffled = ImagePlane::new(16, 16, perm.iter().map(|&c| img.channels[c].clone()).collect()).unwrap();
    let shuffled_seeds: Vec<u64> = perm.iter().map(|&c| seeds[c]).collect();
    let out = recover_image_with_seeds(&shuffled, &cfg, &shuffled_seeds).unwrap();
    for (i, &c) in perm.iter().enumerate() {
        assert_eq!(out.image.channels[i], base.image.channels[c]);
        assert_eq!(out.channels[i], base.channels[c]);
    }
}

#[test]
fn refinement_rejects_dead_band() {
    let img = synthetic(16, 1);
    let model = lowpass_for_srf(img.shape().unwrap(), 2.0, Psf::Flat).unwrap();
    let mut cfg = ImagingConfig::new(8, model, 6);
    cfg.refine = Some(onebit_cdp::AmConfig { t0: 5 });
    assert!(matches!(recover_image(&img, &cfg), Err(Error::DeadBand)));
}

#[test]
fn metadata_names_projection() {
    let img = synthetic(16, 1);
    let cfg = ImagingConfig::new(8, ObservationModel::Identity, 7);
    let meta = recover_image(&img, &cfg).unwrap().metadata(&cfg, &img);
    assert!(meta.contains("seed=7\n"));
    assert!(meta.contains("r=8\n"));
    assert!(meta.contains("projection=real-part-after-phase-alignment-to-ones\n"));
    assert!(meta.contains("channel0.err="));
}

#[test]
fn pnm_save_load_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (name, channels) in [("a.pgm", 1), ("b.ppm", 3)] {
        let img = synthetic(8, channels);
        let path = dir.path().join(name);
        save_image(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_pnm(&back), bytes);
    }
}

#[test]
fn pnm_header_and_errors() {
    let img = decode_pnm(b"P5\n# comment\n2 2\n255\n\x00\xff\x80\x40").unwrap();
    assert_eq!(img.channels[0], vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    match decode_pnm(b"P5\n2 2\n255\n\x00\xff") {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 13),
        other => panic!("{other:?}"),
    }
    assert!(decode_pnm(b"P5\n2 2\n65535\n").is_err());
    assert!(decode_pnm(b"P4\n2 2\n").is_err());
    assert!(decode_pnm(b"P5\n3 2\n255\n\x00\x00\x00\x00\x00\x00").is_err());
}

fn naive_dft2(x: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    (0..rows * cols)
        .map(|k| {
            let (u, v) = (k / cols, k % cols);
            (0..rows * cols)
                .map(|j| {
                    let (a, b) = (j / cols, j % cols);
                    let phase = -std::f64::consts::TAU
                        * ((u * a) as f64 / rows as f64 + (v * b) as f64 / cols as f64);
                    x[j] * Complex64::from_polar(1.0, phase)
                })
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

#[test]
fn dft2_matches_direct_sum() {
    let (rows, cols) = (4, 6);
    let x: Vec<Complex64> = (0..rows * cols)
        .map(|j| Complex64::new((j as f64 * 0.7).sin(), (j as f64 * 1.3).cos()))
        .collect();
    let signal = ComplexSignal::new(x.clone()).unwrap();
    let fast = dft2(&signal, rows, cols).unwrap();
    for (a, b) in fast.iter().zip(naive_dft2(&x, rows, cols)) {
        assert!((a - b).norm() < 1e-12);
    }
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    let spectral: f64 = fast.iter().map(|v| v.norm_sqr()).sum();
    assert!((energy - spectral).abs() < 1e-10);
    let back = idft2(&fast, rows, cols).unwrap();
    for (a, b) in back.iter().zip(&x) {
        assert!((a - b).norm() < 1e-12);
    }
}
