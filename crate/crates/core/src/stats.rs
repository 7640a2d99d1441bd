//! One-sided paired tests used to compare evaluation runs on matched seeds.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedBinary {
    /// Pairs where only `a` succeeded.
    pub only_a: u64,
    /// Pairs where only `b` succeeded.
    pub only_b: u64,
}

impl PairedBinary {
    pub fn from_pairs(a: &[bool], b: &[bool]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Usage(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
        }
        let only_a = a.iter().zip(b).filter(|(&x, &y)| x && !y).count() as u64;
        let only_b = a.iter().zip(b).filter(|(&x, &y)| !x && y).count() as u64;
        Ok(Self { only_a, only_b })
    }
}

/// Exact one-sided McNemar test of H1: P(a succeeds) > P(b succeeds).
/// Returns 1 when there are no discordant pairs.
pub fn mcnemar_greater(a: &[bool], b: &[bool]) -> Result<f64> {
    let PairedBinary { only_a, only_b } = PairedBinary::from_pairs(a, b)?;
    let n = only_a + only_b;
    if n == 0 {
        return Ok(1.0);
    }
    if only_a == 0 {
        return Ok(1.0);
    }
    let dist = Binomial::new(0.5, n).map_err(|e| Error::Numerical(e.to_string()))?;
    // P(X >= only_a)
    Ok(dist.sf(only_a - 1))
}

/// One-sided paired t-test of H1: mean(a - b) > 0.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Usage("paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(1.0 - dist.cdf(t))
}
