use nalgebra::{DMatrix, DVector};

/// Least-squares polynomial coefficients (lowest order first) for samples
/// `(x, y)`. Returns `None` when the design matrix is rank-deficient.
///
/// Abscissae are rescaled to `[0, 1]`-ish before solving and the coefficients
/// mapped back, which keeps the Vandermonde matrix conditioned for the short
/// windows the tracker uses.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    let n = xs.len();
    let cols = degree + 1;
    if n < cols || ys.len() != n {
        return None;
    }
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let a = DMatrix::from_fn(n, cols, |i, j| (xs[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin / smax < 1e-12 {
        return None;
    }
    let qr = a.qr();
    let sol = qr.r().solve_upper_triangular(&(qr.q().transpose() * b))?;
    Some((0..cols).map(|j| sol[j] / scale.powi(j as i32)).collect())
}

/// Horner evaluation, lowest order first.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_quadratic() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 160.0).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 3.0 + 0.5 * t - 4.905 * t * t).collect();
        let c = polyfit(&xs, &ys, 2).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-9 && (c[1] - 0.5).abs() < 1e-9 && (c[2] + 4.905).abs() < 1e-9);
        assert!((polyval(&c, 0.02) - (3.0 + 0.01 - 4.905 * 4e-4)).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_is_none() {
        assert!(polyfit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 2).is_none());
        assert!(polyfit(&[1.0, 2.0], &[1.0, 2.0], 2).is_none());
    }
}
