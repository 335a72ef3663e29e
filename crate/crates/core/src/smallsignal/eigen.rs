use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use super::SmallSignalError;

const SCHUR_MAX_ITERATIONS: usize = 10_000;
const INVERSE_ITERATIONS: usize = 4;
const RESIDUAL_TOLERANCE: f64 = 1e-8;
const PAIRING_TOLERANCE: f64 = 1e-9;

/// Eigenvalues with right eigenvectors (columns of `right`) and left
/// eigenvectors (columns of `left`), scaled so that `leftᵀ·right = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub right: DMatrix<Complex64>,
    pub left: DMatrix<Complex64>,
}

fn start_vector(n: usize) -> DVector<Complex64> {
    DVector::from_iterator(
        n,
        (0..n).map(|k| {
            Complex64::new(
                1.0 + 0.3 * (1.7 * k as f64).sin(),
                0.2 * (0.9 * k as f64 + 0.4).cos(),
            )
        }),
    )
}

fn normalize(v: &mut DVector<Complex64>) {
    // Unit 2-norm, largest entry real and positive.
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or_default();
    let phase = if big.norm() > 0.0 {
        big.conj() / big.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        *v *= phase / norm;
    }
}

/// Eigen-decomposition of a real square matrix. Eigenvalues come from a
/// real Schur form; right eigenvectors from shifted inverse iteration,
/// left eigenvectors from the inverse of the right-vector matrix.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<EigenDecomposition, SmallSignalError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(SmallSignalError::EigenFailed(format!(
            "matrix is {}x{}",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SmallSignalError::EigenFailed("non-finite entry".into()));
    }
    let scale = a.abs().row_sum().max().max(1.0);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITERATIONS)
        .ok_or_else(|| SmallSignalError::EigenFailed("Schur iteration did not converge".into()))?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    // Clean tiny imaginary parts from real eigenvalues.
    for v in values.iter_mut() {
        if v.im.abs() < 1e-14 * scale {
            v.im = 0.0;
        }
    }
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));

    check_pairing(&values, scale)?;

    let ac = a.map(|v| Complex64::new(v, 0.0));
    let mut right = DMatrix::<Complex64>::zeros(n, n);
    let mut done = vec![false; n];
    for k in 0..n {
        if done[k] {
            continue;
        }
        let lambda = values[k];
        let shift = lambda + Complex64::new(1e-11 * scale, 1e-11 * scale);
        let m = &ac - DMatrix::<Complex64>::identity(n, n) * shift;
        let lu = m.lu();
        // Earlier vectors of a cluster are projected out so repeated
        // eigenvalues still get independent vectors.
        let cluster: Vec<usize> = (0..k)
            .filter(|&j| (values[j] - lambda).norm() < 1e-8 * scale)
            .collect();
        let mut v = start_vector(n);
        for _ in 0..INVERSE_ITERATIONS {
            for &j in &cluster {
                let u = right.column(j).clone_owned();
                let proj = u.dotc(&v);
                v -= u * proj;
            }
            v = lu.solve(&v).ok_or_else(|| {
                SmallSignalError::EigenFailed(format!("singular shift at {lambda}"))
            })?;
            normalize(&mut v);
        }
        let resid = (&ac * &v - &v * lambda).camax() / scale;
        if !(resid < RESIDUAL_TOLERANCE) {
            return Err(SmallSignalError::EigenFailed(format!(
                "eigenvector residual {resid:.2e} at {lambda}"
            )));
        }
        right.set_column(k, &v);
        done[k] = true;
        if lambda.im > 0.0 {
            // The partner is the next unpaired conjugate.
            if let Some(j) = (0..n).find(|&j| {
                !done[j] && (values[j] - lambda.conj()).norm() < PAIRING_TOLERANCE * scale
            }) {
                values[j] = lambda.conj();
                right.set_column(j, &v.conjugate());
                done[j] = true;
            }
        }
    }
    let inv = right
        .clone()
        .try_inverse()
        .ok_or_else(|| SmallSignalError::EigenFailed("eigenvectors are not independent".into()))?;
    let left = inv.transpose();
    if left.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(SmallSignalError::EigenFailed(
            "eigenvector matrix is defective".into(),
        ));
    }
    Ok(EigenDecomposition {
        values,
        right,
        left,
    })
}

fn check_pairing(values: &[Complex64], scale: f64) -> Result<(), SmallSignalError> {
    let mut used = vec![false; values.len()];
    for (k, v) in values.iter().enumerate() {
        if v.im <= 0.0 || used[k] {
            continue;
        }
        let partner = values
            .iter()
            .enumerate()
            .filter(|(j, w)| !used[*j] && w.im < 0.0)
            .min_by(|a, b| (a.1 - v.conj()).norm().total_cmp(&(b.1 - v.conj()).norm()));
        match partner {
            Some((j, w)) if (w - v.conj()).norm() < PAIRING_TOLERANCE * scale => {
                used[j] = true;
                used[k] = true;
            }
            _ => {
                return Err(SmallSignalError::EigenFailed(format!(
                    "{v} has no conjugate partner"
                )));
            }
        }
    }
    Ok(())
}
