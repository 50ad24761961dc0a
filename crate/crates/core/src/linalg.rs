//! Small dense least-squares solver (Householder QR) used by the DOF model
//! fit and the GLM's IRLS steps.

use crate::error::{Error, Result};

/// Relative size below which a pivot is taken as a linear dependency.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    /// `(X' W X)^{-1}`, row-major `p x p`.
    pub covariance: Vec<f64>,
    pub residual_ss: f64,
}

impl LeastSquaresFit {
    pub fn std_errors(&self) -> Vec<f64> {
        let p = self.coefficients.len();
        (0..p).map(|j| self.covariance[j * p + j].max(0.0).sqrt()).collect()
    }
}

/// Minimises `sum w_i (y_i - x_i' b)^2` for a row-major `n x p` design.
///
/// Columns are scaled to unit norm before factorisation. A column whose
/// remaining norm after projection falls below `RANK_TOL` is reported, along
/// with every earlier column it overlaps, as a singular fit.
pub fn weighted_least_squares(
    design: &[f64],
    n: usize,
    p: usize,
    y: &[f64],
    weights: Option<&[f64]>,
    names: &[&str],
) -> Result<LeastSquaresFit> {
    assert_eq!(design.len(), n * p);
    assert_eq!(y.len(), n);
    assert_eq!(names.len(), p);
    if n < p {
        return Err(Error::FitFailed(format!("{n} observations for {p} coefficients")));
    }
    let sw: Vec<f64> = match weights {
        Some(w) => {
            assert_eq!(w.len(), n);
            w.iter().map(|v| v.max(0.0).sqrt()).collect()
        }
        None => vec![1.0; n],
    };

    // column-major working copy of sqrt(W) X, columns normalised
    let mut a = vec![0.0; n * p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = &mut a[j * n..(j + 1) * n];
        for i in 0..n {
            col[i] = sw[i] * design[i * p + j];
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::FitFailed(format!("non-finite values in feature {}", names[j])));
        }
        if norm == 0.0 {
            return Err(Error::SingularFit {
                features: vec![names[j].to_string()],
            });
        }
        scale[j] = norm;
        col.iter_mut().for_each(|v| *v /= norm);
    }
    let mut b: Vec<f64> = (0..n).map(|i| sw[i] * y[i]).collect();

    let mut diag = vec![0.0; p];
    for j in 0..p {
        let rest = &mut a[j * n..];
        let col = &mut rest[..n];
        let norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < RANK_TOL {
            // the earlier columns with large loadings on this one
            let mut features: Vec<String> = (0..j)
                .filter(|&k| col[k].abs() > 1e-6)
                .map(|k| names[k].to_string())
                .collect();
            features.push(names[j].to_string());
            return Err(Error::SingularFit { features });
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        // v = x - alpha e_j, stored in col[j..]
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 > 0.0 {
            let v = col[j..].to_vec();
            for k in j + 1..p {
                let other = &mut rest[(k - j) * n + j..(k - j) * n + n];
                let dot: f64 = v.iter().zip(other.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                other.iter_mut().zip(&v).for_each(|(o, vi)| *o -= f * vi);
            }
            let dot: f64 = v.iter().zip(&b[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            b[j..].iter_mut().zip(&v).for_each(|(o, vi)| *o -= f * vi);
        }
    }

    // R is upper triangular: R[i][j] = a[j*n + i] for i < j, diag on the diagonal
    let r = |i: usize, j: usize| if i == j { diag[i] } else { a[j * n + i] };
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in i + 1..p {
            s -= r(i, j) * beta[j];
        }
        beta[i] = s / r(i, i);
    }
    let residual_ss: f64 = b[p..].iter().map(|v| v * v).sum();

    // R^{-1} by back substitution, then (R'R)^{-1} = R^{-1} R^{-T}
    let mut rinv = vec![0.0; p * p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for j in i + 1..=c {
                s -= r(i, j) * rinv[j * p + c];
            }
            rinv[i * p + c] = s / r(i, i);
        }
    }
    let mut covariance = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let s: f64 = (i.max(j)..p).map(|k| rinv[i * p + k] * rinv[j * p + k]).sum();
            covariance[i * p + j] = s / (scale[i] * scale[j]);
        }
    }
    let coefficients = beta.iter().zip(&scale).map(|(b, s)| b / s).collect();
    Ok(LeastSquaresFit {
        coefficients,
        covariance,
        residual_ss,
    })
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
