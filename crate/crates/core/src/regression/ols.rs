//! Least squares with an intercept.

use crate::error::{domain, Error, Result};

/// Coefficient of determination of the least-squares fit of `y` on an
/// intercept and `columns`, computed by Householder QR.
pub fn ols_r2(y: &[f64], columns: &[&[f64]]) -> Result<f64> {
    let n = y.len();
    let p = columns.len() + 1;
    if n <= p {
        return Err(domain(format!("{n} observations cannot identify {p} coefficients")));
    }
    if let Some(c) = columns.iter().position(|c| c.len() != n) {
        return Err(domain(format!("column {c} has {} rows, outcome has {n}", columns[c].len())));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(domain("outcome has no variation"));
    }
    // Column-major design matrix with the intercept first.
    let mut a: Vec<Vec<f64>> = std::iter::once(vec![1.0; n]).chain(columns.iter().map(|c| c.to_vec())).collect();
    let scale = a.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let mut r = y.to_vec();
    for j in 0..p {
        let alpha = norm(&a[j][j..]);
        if alpha <= 1e-12 * scale {
            return Err(Error::RankDeficient { column: j });
        }
        let alpha = if a[j][j] > 0.0 { -alpha } else { alpha };
        let mut v = a[j][j..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(j) {
            reflect(&v, vv, &mut col[j..]);
        }
        reflect(&v, vv, &mut r[j..]);
    }
    let ssr: f64 = r[p..].iter().map(|x| x * x).sum();
    Ok((1.0 - ssr / sst).clamp(0.0, 1.0))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn reflect(v: &[f64], vv: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let s = 2.0 * dot / vv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// R² from the normal equations, solved by Gaussian elimination.
    fn normal_equations_r2(y: &[f64], cols: &[Vec<f64>]) -> f64 {
        let n = y.len();
        let x: Vec<Vec<f64>> = std::iter::once(vec![1.0; n]).chain(cols.iter().cloned()).collect();
        let p = x.len();
        let mut m = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                m[i][j] = (0..n).map(|k| x[i][k] * x[j][k]).sum();
            }
            m[i][p] = (0..n).map(|k| x[i][k] * y[k]).sum();
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=p {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..p).map(|i| m[i][p] / m[i][i]).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ssr: f64 = (0..n)
            .map(|k| {
                let fit: f64 = (0..p).map(|i| beta[i] * x[i][k]).sum();
                (y[k] - fit).powi(2)
            })
            .sum();
        1.0 - ssr / sst
    }

    #[test]
    fn exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = normal_vec(&mut rng, 20);
        let z = normal_vec(&mut rng, 20);
        assert!((ols_r2(&x, &[&x, &z]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_outcome() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| normal_vec(&mut rng, 20)).collect();
        let y = normal_vec(&mut rng, 20);
        // Residual of y on the intercept and the columns.
        let x: Vec<Vec<f64>> = std::iter::once(vec![1.0; 20]).chain(cols.iter().cloned()).collect();
        let mut resid = y.clone();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for c in &x {
            let mut u = c.clone();
            for b in &basis {
                let d: f64 = u.iter().zip(b).map(|(a, b)| a * b).sum();
                u.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
            }
            let nrm = norm(&u);
            u.iter_mut().for_each(|a| *a /= nrm);
            basis.push(u);
        }
        for b in &basis {
            let d: f64 = resid.iter().zip(b).map(|(a, b)| a * b).sum();
            resid.iter_mut().zip(b).for_each(|(a, b)| *a -= d * b);
        }
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        assert!(ols_r2(&resid, &refs).unwrap() < 1e-12);
    }

    #[test]
    fn agrees_with_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let cols: Vec<Vec<f64>> = (0..3).map(|_| normal_vec(&mut rng, 20)).collect();
            let y: Vec<f64> =
                (0..20).map(|k| cols[0][k] - 0.5 * cols[2][k] + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            let qr = ols_r2(&y, &refs).unwrap();
            assert!((qr - normal_equations_r2(&y, &cols)).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficiency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = normal_vec(&mut rng, 20);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let y = normal_vec(&mut rng, 20);
        assert!(matches!(ols_r2(&y, &[&x, &twice]), Err(Error::RankDeficient { column: 2 })));
        assert!(ols_r2(&[1.0, 2.0], &[&[0.0, 1.0]]).is_err());
        assert!(ols_r2(&[1.0; 10], &[&y[..10]]).is_err());
    }
}
