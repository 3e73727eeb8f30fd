//! Matrix-free Hermitian operators built from a [`MeasurementSet`].
//!
//! With `A = F Diag(w)` the one-bit operator is
//! `Ĉ_r = (1/r) Σ_i (A¹_i* Diag(y_i) A¹_i − A²_i* Diag(y_i) A²_i)`,
//! applied as `conj(w) ⊙ idft(y ⊙ dft(w ⊙ u))` per branch, so a matvec costs
//! `O(r n log n)`. The SubExp operator sums `A* Diag(n·b) A` over all `2r`
//! patterns; its expectation is `x0 x0* + I`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::numeric::{ComplexSignal, Fourier, Shape};

/// Largest dimension accepted by the dense assemblies.
pub const DENSE_MAX_N: usize = 256;

/// A Hermitian linear map on `C^n`.
pub trait HermitianOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, u: &ComplexSignal) -> Result<ComplexSignal>;
}

/// `conj(w) ⊙ F*( weights ⊙ F(w ⊙ u) )`, i.e. `A* Diag(weights) A u`.
fn sandwich<W: Copy + Into<f64>>(
    fourier: &Fourier,
    w: &ComplexSignal,
    weights: &[W],
    u: &ComplexSignal,
    out: &mut [Complex64],
) {
    let mut buf: Vec<Complex64> = w.iter().zip(u.iter()).map(|(a, b)| a * b).collect();
    fourier.forward_in_place(&mut buf);
    for (z, &c) in buf.iter_mut().zip(weights) {
        *z *= c.into();
    }
    fourier.inverse_in_place(&mut buf);
    for ((o, z), wk) in out.iter_mut().zip(&buf).zip(w.iter()) {
        *o = wk.conj() * z;
    }
}

// Per-term results are gathered in order and summed sequentially, so the
// output does not depend on the thread count.
fn ordered_sum(terms: Vec<Vec<Complex64>>, n: usize, scale: f64) -> ComplexSignal {
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    for term in terms {
        for (a, t) in acc.iter_mut().zip(term) {
            *a += t;
        }
    }
    for a in acc.iter_mut() {
        *a *= scale;
    }
    ComplexSignal::from_vec_unchecked(acc)
}

/// The one-bit operator `Ĉ_r`.
#[derive(Debug, Clone)]
pub struct OneBitOperator<'a> {
    set: &'a MeasurementSet,
    fourier: Fourier,
}

impl<'a> OneBitOperator<'a> {
    pub fn new(set: &'a MeasurementSet) -> Self {
        OneBitOperator {
            set,
            fourier: Fourier::new(set.shape),
        }
    }

    pub fn set(&self) -> &MeasurementSet {
        self.set
    }
}

impl HermitianOperator for OneBitOperator<'_> {
    fn dim(&self) -> usize {
        self.set.n()
    }

    fn apply(&self, u: &ComplexSignal) -> Result<ComplexSignal> {
        let n = self.dim();
        u.check_len(n)?;
        let terms: Vec<Vec<Complex64>> = self
            .set
            .pairs
            .par_iter()
            .map(|pair| {
                let mut t1 = vec![Complex64::new(0.0, 0.0); n];
                let mut t2 = vec![Complex64::new(0.0, 0.0); n];
                let y: Vec<f64> = pair.y.signs.iter().map(|&s| s as f64).collect();
                sandwich(&self.fourier, &pair.w1, &y, u, &mut t1);
                sandwich(&self.fourier, &pair.w2, &y, u, &mut t2);
                t1.iter_mut().zip(&t2).for_each(|(a, b)| *a -= b);
                t1
            })
            .collect();
        Ok(ordered_sum(terms, n, 1.0 / self.set.r() as f64))
    }
}

/// The SubExp operator `Ĉ_L` over all `L = 2r` raw intensity patterns.
#[derive(Debug, Clone)]
pub struct SubExpOperator<'a> {
    set: &'a MeasurementSet,
    fourier: Fourier,
}

impl<'a> SubExpOperator<'a> {
    /// Fails with [`Error::MissingIntensities`] on sign-only sets.
    pub fn new(set: &'a MeasurementSet) -> Result<Self> {
        if !set.has_intensities() {
            return Err(Error::MissingIntensities);
        }
        Ok(SubExpOperator {
            set,
            fourier: Fourier::new(set.shape),
        })
    }
}

impl HermitianOperator for SubExpOperator<'_> {
    fn dim(&self) -> usize {
        self.set.n()
    }

    fn apply(&self, u: &ComplexSignal) -> Result<ComplexSignal> {
        let n = self.dim();
        u.check_len(n)?;
        let patterns = self.set.patterns()?;
        let scale = n as f64;
        let terms: Vec<Vec<Complex64>> = patterns
            .par_iter()
            .map(|(w, b)| {
                let weights: Vec<f64> = b.values.iter().map(|v| v * scale).collect();
                let mut t = vec![Complex64::new(0.0, 0.0); n];
                sandwich(&self.fourier, w, &weights, u, &mut t);
                t
            })
            .collect();
        Ok(ordered_sum(terms, n, 1.0 / patterns.len() as f64))
    }
}

/// An explicit Hermitian matrix viewed as an operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(DenseOperator { matrix })
    }

    /// `λ x x*`.
    pub fn rank_one(x: &ComplexSignal, lambda: f64) -> Self {
        let n = x.len();
        let matrix =
            DMatrix::from_fn(n, n, |j, k| x[j] * x[k].conj() * Complex64::new(lambda, 0.0));
        DenseOperator { matrix }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let matrix = DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                Complex64::new(values[j], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        DenseOperator { matrix }
    }
}

impl HermitianOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, u: &ComplexSignal) -> Result<ComplexSignal> {
        u.check_len(self.dim())?;
        let v = nalgebra::DVector::from_column_slice(u.as_slice());
        let out = &self.matrix * v;
        ComplexSignal::new(out.as_slice().to_vec())
    }
}

/// Explicit unitary DFT matrix for `shape` (row-major flattening on grids).
pub fn dft_matrix(shape: Shape) -> DMatrix<Complex64> {
    let (h, w) = (shape.rows(), shape.cols());
    let n = shape.len();
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |j, k| {
        let (a, b) = (j / w, j % w);
        let (c, d) = (k / w, k % w);
        let phase = -2.0
            * std::f64::consts::PI
            * (((a * c) % h) as f64 / h as f64 + ((b * d) % w) as f64 / w as f64);
        Complex64::from_polar(s, phase)
    })
}

fn guard(n: usize) -> Result<()> {
    if n > DENSE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: DENSE_MAX_N,
        });
    }
    Ok(())
}

/// `weight · A* Diag(d) A` added into `acc`, where `A = F Diag(w)`.
fn accumulate_branch(
    acc: &mut DMatrix<Complex64>,
    f: &DMatrix<Complex64>,
    w: &ComplexSignal,
    d: &[f64],
    weight: f64,
) {
    let n = w.len();
    let a = DMatrix::from_fn(n, n, |l, k| f[(l, k)] * w[k]);
    let scaled = DMatrix::from_fn(n, n, |l, k| a[(l, k)] * d[l]);
    *acc += a.adjoint() * scaled * Complex64::new(weight, 0.0);
}

/// Dense `Ĉ_r`, assembled from the explicit DFT matrix. Testing oracle.
pub fn dense_onebit(set: &MeasurementSet) -> Result<DMatrix<Complex64>> {
    let n = set.n();
    guard(n)?;
    let f = dft_matrix(set.shape);
    let mut acc = DMatrix::zeros(n, n);
    let weight = 1.0 / set.r() as f64;
    for pair in &set.pairs {
        let y: Vec<f64> = pair.y.signs.iter().map(|&s| s as f64).collect();
        accumulate_branch(&mut acc, &f, &pair.w1, &y, weight);
        accumulate_branch(&mut acc, &f, &pair.w2, &y, -weight);
    }
    Ok(acc)
}

/// Dense `Ĉ_L`. Testing oracle.
pub fn dense_subexp(set: &MeasurementSet) -> Result<DMatrix<Complex64>> {
    let n = set.n();
    guard(n)?;
    let patterns = set.patterns()?;
    let f = dft_matrix(set.shape);
    let mut acc = DMatrix::zeros(n, n);
    let weight = 1.0 / patterns.len() as f64;
    for (w, b) in patterns {
        let d: Vec<f64> = b.values.iter().map(|v| v * n as f64).collect();
        accumulate_branch(&mut acc, &f, w, &d, weight);
    }
    Ok(acc)
}

/// `x* op x`, complex so callers can inspect the imaginary residual.
pub fn quadratic_form(op: &dyn HermitianOperator, x: &ComplexSignal) -> Result<Complex64> {
    Ok(x.inner(&op.apply(x)?))
}

/// Empirical risk `Re(x* Ĉ_r x)` for a unit vector `x`.
pub fn empirical_risk(op: &OneBitOperator<'_>, x: &ComplexSignal) -> Result<f64> {
    x.check_unit(1e-9)?;
    Ok(quadratic_form(op, x)?.re)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut values: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm(m: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(m)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}
