use candle_core::{Tensor, D};

use crate::{Error, Result};

const TOL: f64 = 1e-6;

fn check_distribution(p: &[f64], what: &str, strictly_positive: bool) -> Result<()> {
    let sum: f64 = p.iter().sum();
    let bad = p.iter().any(|&x| !x.is_finite() || x < 0.0 || (strictly_positive && x <= 0.0));
    if bad || (sum - 1.0).abs() > TOL {
        return Err(Error::InvalidDistribution(format!("{what} {p:?} (sum {sum})")));
    }
    Ok(())
}

/// KL between the batch-averaged posterior and the prior, summed over variables.
///
/// `posteriors[b][m]` is the K-way distribution of variable `m` for example
/// `b`; `prior[m]` is the prior of variable `m`.
pub fn bpr_kl(posteriors: &[Vec<Vec<f64>>], prior: &[Vec<f64>]) -> Result<f64> {
    if posteriors.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = prior.len();
    for (i, p) in prior.iter().enumerate() {
        check_distribution(p, &format!("prior of variable {i}"), true)?;
    }
    for (b, row) in posteriors.iter().enumerate() {
        if row.len() != m {
            return Err(Error::InvalidDistribution(format!(
                "example {b} has {} variables, prior has {m}",
                row.len()
            )));
        }
        for (i, q) in row.iter().enumerate() {
            if q.len() != prior[i].len() {
                return Err(Error::InvalidDistribution(format!("example {b} variable {i} has wrong arity")));
            }
            check_distribution(q, &format!("posterior {b}/{i}"), false)?;
        }
    }
    let n = posteriors.len() as f64;
    let mut kl = 0.0;
    for (i, p) in prior.iter().enumerate() {
        for (k, &pk) in p.iter().enumerate() {
            let q: f64 = posteriors.iter().map(|row| row[i][k]).sum::<f64>() / n;
            if q > 0.0 {
                kl += q * (q / pk).ln();
            }
        }
    }
    Ok(kl.max(0.0))
}

/// Differentiable BPR against a uniform prior for probabilities shaped `(B, M, K)`.
pub fn bpr_kl_tensor(probs: &Tensor) -> candle_core::Result<Tensor> {
    let (b, m, k) = probs.dims3()?;
    if b < 8 {
        log::warn!("batch prior regularization over only {b} examples");
    }
    let q = probs.mean(0)?;
    let log_q = q.clamp(1e-30, 1.0)?.log()?;
    // sum q ln q + M ln K
    q.mul(&log_q)?.sum_all()? + (m as f64) * (k as f64).ln()
}

/// Analytic KL of `N(mu, exp(logvar))` from `N(0, I)`, averaged over the batch.
pub fn vae_kl(mu: &Tensor, logvar: &Tensor) -> candle_core::Result<Tensor> {
    let per = ((mu.sqr()? + logvar.exp()?)? - 1.0)?.sub(logvar)?;
    per.sum(D::Minus1)?.mean(0)? * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn uniform_posterior_has_zero_kl() {
        let q = vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]];
        assert_eq!(bpr_kl(&q, &[vec![0.5, 0.5]]).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_gives_ln2() {
        let kl = bpr_kl(&[vec![vec![1.0, 0.0]]], &[vec![0.5, 0.5]]).unwrap();
        assert!((kl - 2f64.ln()).abs() < 1e-12);
        assert!((kl - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn batch_mean_example() {
        let q = vec![vec![vec![0.8, 0.2]], vec![vec![0.4, 0.6]]];
        let kl = bpr_kl(&q, &[vec![0.5, 0.5]]).unwrap();
        let expected = 0.6 * 1.2f64.ln() + 0.4 * 0.8f64.ln();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.020136).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(bpr_kl(&[], &[vec![0.5, 0.5]]), Err(Error::EmptyBatch)));
        assert!(matches!(
            bpr_kl(&[vec![vec![0.7, 0.7]]], &[vec![0.5, 0.5]]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            bpr_kl(&[vec![vec![1.0, 0.0]]], &[vec![1.0, 0.0]]),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn tensor_version_matches() {
        let data = vec![0.8, 0.2, 0.1, 0.9, 0.4, 0.6, 0.5, 0.5];
        let t = Tensor::from_vec(data.clone(), (2, 2, 2), &Device::Cpu).unwrap();
        let got = bpr_kl_tensor(&t).unwrap().to_scalar::<f64>().unwrap();
        let q: Vec<Vec<Vec<f64>>> = data
            .chunks(4)
            .map(|b| b.chunks(2).map(|v| v.to_vec()).collect())
            .collect();
        let want = bpr_kl(&q, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn vae_kl_values() {
        let z = Tensor::zeros((1, 1), DType::F64, &Device::Cpu).unwrap();
        let one = Tensor::ones((1, 1), DType::F64, &Device::Cpu).unwrap();
        assert_eq!(vae_kl(&z, &z).unwrap().to_scalar::<f64>().unwrap(), 0.0);
        // sigma = 1 means logvar = 0.
        assert!((vae_kl(&one, &z).unwrap().to_scalar::<f64>().unwrap() - 0.5).abs() < 1e-12);
    }
}
