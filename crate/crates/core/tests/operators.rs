use num_complex::Complex64;
use onebit_cdp::numeric::{sample_complex_gaussian, sample_unit_signal};
use onebit_cdp::operator::{dense_onebit, dense_subexp, empirical_risk, quadratic_form};
use onebit_cdp::{
    build_measurement_set, AcquisitionConfig, ComplexSignal, HermitianOperator, MaskKind,
    MeasurementSet, ObservationModel, OneBitOperator, RandomSource, Shape, SubExpOperator,
};
use proptest::prelude::*;

fn acquire(x0: &ComplexSignal, r: usize, rng: &RandomSource) -> MeasurementSet {
    let cfg = AcquisitionConfig {
        pairs: r,
        model: ObservationModel::Identity,
        mask: MaskKind::Gaussian,
        keep_intensities: true,
    };
    build_measurement_set(x0, Shape::line(x0.len()).unwrap(), &cfg, rng).unwrap()
}

fn rel(a: &ComplexSignal, b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn fft_operators_match_dense_assembly() {
    for n in [4usize, 8, 16] {
        for r in [1usize, 2, 5] {
            for t in 0..20 {
                let rng = RandomSource::new(t).derive(&[n as u64, r as u64]);
                let x0 = sample_unit_signal(n, &mut rng.derive(&[0])).unwrap();
                let set = acquire(&x0, r, &rng.derive(&[1]));
                let u = sample_complex_gaussian(n, &mut rng.derive(&[2])).unwrap();
                let dense = dense_onebit(&set).unwrap();
                let expect: Vec<Complex64> = (&dense * nalgebra::DVector::from_column_slice(u.as_slice())).iter().copied().collect();
                assert!(rel(&OneBitOperator::new(&set).apply(&u).unwrap(), &expect) < 1e-10);
                let dense = dense_subexp(&set).unwrap();
                let expect: Vec<Complex64> = (&dense * nalgebra::DVector::from_column_slice(u.as_slice())).iter().copied().collect();
                assert!(rel(&SubExpOperator::new(&set).unwrap().apply(&u).unwrap(), &expect) < 1e-10);
            }
        }
    }
}

fn orthogonal_unit(x0: &ComplexSignal, seed: u64) -> ComplexSignal {
    let v = sample_complex_gaussian(x0.len(), &mut RandomSource::new(seed)).unwrap();
    let c = x0.inner(&v);
    let proj: Vec<Complex64> = v.iter().zip(x0.iter()).map(|(a, b)| a - c * b).collect();
    ComplexSignal::new(proj).unwrap().normalized().unwrap()
}

#[test]
fn onebit_quadratic_forms_concentrate() {
    let x0 = sample_unit_signal(16, &mut RandomSource::new(1)).unwrap();
    let set = acquire(&x0, 2000, &RandomSource::new(2));
    let op = OneBitOperator::new(&set);
    let along = quadratic_form(&op, &x0).unwrap();
    assert!((along.re - 1.0).abs() <= 0.05, "{along}");
    assert!(along.im.abs() < 1e-9);
    let perp = orthogonal_unit(&x0, 3);
    assert!(quadratic_form(&op, &perp).unwrap().re.abs() <= 0.05);
}

#[test]
fn subexp_quadratic_forms_concentrate() {
    let x0 = sample_unit_signal(16, &mut RandomSource::new(4)).unwrap();
    let set = acquire(&x0, 2000, &RandomSource::new(5));
    let op = SubExpOperator::new(&set).unwrap();
    assert!((quadratic_form(&op, &x0).unwrap().re - 2.0).abs() <= 0.1);
    let perp = orthogonal_unit(&x0, 6);
    assert!((quadratic_form(&op, &perp).unwrap().re - 1.0).abs() <= 0.1);
}

#[test]
fn empirical_risk_expectation() {
    let n = 16;
    let x0 = sample_unit_signal(n, &mut RandomSource::new(7)).unwrap();
    let perp = orthogonal_unit(&x0, 8);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let half: Vec<Complex64> = x0.iter().zip(perp.iter()).map(|(a, b)| (a + b) * s).collect();
    let half = ComplexSignal::new(half).unwrap();
    assert!((x0.inner(&half).norm_sqr() - 0.5).abs() < 1e-12);
    let sets = 100;
    let (mut at_half, mut at_perp) = (0.0, 0.0);
    for k in 0..sets {
        let set = acquire(&x0, 625, &RandomSource::new(9).derive(&[k]));
        let op = OneBitOperator::new(&set);
        at_half += empirical_risk(&op, &half).unwrap() / sets as f64;
        at_perp += empirical_risk(&op, &perp).unwrap() / sets as f64;
    }
    assert!((at_half - 0.5).abs() <= 0.02, "{at_half}");
    assert!(at_perp.abs() <= 0.02, "{at_perp}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn operators_are_linear_and_hermitian(seed in any::<u64>(), half_n in 2usize..9, r in 1usize..4, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let n = 2 * half_n;
        let rng = RandomSource::new(seed);
        let x0 = sample_unit_signal(n, &mut rng.derive(&[0])).unwrap();
        let set = acquire(&x0, r, &rng.derive(&[1]));
        let u = sample_complex_gaussian(n, &mut rng.derive(&[2])).unwrap();
        let v = sample_complex_gaussian(n, &mut rng.derive(&[3])).unwrap();
        let alpha = Complex64::new(a, b);
        let combo: Vec<Complex64> = u.iter().zip(v.iter()).map(|(x, y)| alpha * x + y).collect();
        let combo = ComplexSignal::new(combo).unwrap();
        let onebit = OneBitOperator::new(&set);
        let subexp = SubExpOperator::new(&set).unwrap();
        let ops: [&dyn HermitianOperator; 2] = [&onebit, &subexp];
        for op in ops {
            let (ou, ov, oc) = (op.apply(&u).unwrap(), op.apply(&v).unwrap(), op.apply(&combo).unwrap());
            let expect: Vec<Complex64> = ou.iter().zip(ov.iter()).map(|(x, y)| alpha * x + y).collect();
            prop_assert!(rel(&oc, &expect) < 1e-10);
            let lhs = v.inner(&ou);
            let rhs = ov.inner(&u);
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
        }
    }
}
