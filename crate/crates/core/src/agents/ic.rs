//! Cross-sectional information coefficients.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::AlphaSeries;
use crate::market::is_missing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMethod {
    #[default]
    Pearson,
    Rank,
}

impl std::str::FromStr for IcMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pearson" => Ok(IcMethod::Pearson),
            "rank" | "spearman" => Ok(IcMethod::Rank),
            other => Err(format!("unknown IC method {other:?}")),
        }
    }
}

impl std::fmt::Display for IcMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IcMethod::Pearson => "pearson",
            IcMethod::Rank => "rank",
        })
    }
}

/// Why an IC could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IcUndefined {
    #[error("only {0} paired observations")]
    TooFewPairs(usize),
    #[error("zero variance")]
    ZeroVariance,
}

pub const MIN_IC_PAIRS: usize = 3;

/// Correlation between predicted and realized values over pairs where both are present.
pub fn information_coefficient(predicted: &[f64], realized: &[f64], method: IcMethod) -> Result<f64, IcUndefined> {
    let (mut x, mut y): (Vec<f64>, Vec<f64>) = predicted
        .iter()
        .zip(realized)
        .filter(|(a, b)| !is_missing(**a) && !is_missing(**b))
        .map(|(a, b)| (*a, *b))
        .unzip();
    if x.len() < MIN_IC_PAIRS {
        return Err(IcUndefined::TooFewPairs(x.len()));
    }
    if method == IcMethod::Rank {
        x = average_ranks(&x);
        y = average_ranks(&y);
    }
    pearson(&x, &y)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, IcUndefined> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(IcUndefined::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Daily cross-sectional ICs of one alpha against realized forward returns.
#[derive(Debug, Clone, PartialEq)]
pub struct IcHistory {
    pub dates: Vec<NaiveDate>,
    pub ics: Vec<Result<f64, IcUndefined>>,
}

#[derive(Debug, Error, PartialEq)]
#[error("alpha and return series are not aligned")]
pub struct AlignmentError;

impl IcHistory {
    pub fn compute(alpha: &AlphaSeries, returns: &AlphaSeries, method: IcMethod) -> Result<IcHistory, AlignmentError> {
        if !alpha.aligned_with(returns) {
            return Err(AlignmentError);
        }
        let ics = (0..alpha.n_dates())
            .map(|t| information_coefficient(&alpha.column(t), &returns.column(t), method))
            .collect();
        Ok(IcHistory { dates: alpha.dates.clone(), ics })
    }

    /// Defined ICs with their dates.
    pub fn defined(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().zip(&self.ics).filter_map(|(d, ic)| ic.ok().map(|v| (*d, v)))
    }

    /// Mean of the defined ICs, if any.
    pub fn mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.defined().map(|(_, ic)| ic).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_negation() {
        let x = [1.0, 3.0, 2.0, 5.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(information_coefficient(&x, &x, IcMethod::Pearson), Ok(1.0));
        assert_eq!(information_coefficient(&x, &neg, IcMethod::Pearson), Ok(-1.0));
        assert_eq!(information_coefficient(&x, &neg, IcMethod::Rank), Ok(-1.0));
    }

    #[test]
    fn undefined_cases_are_typed() {
        let nan = f64::NAN;
        assert_eq!(
            information_coefficient(&[1.0, 2.0, nan], &[1.0, 2.0, 3.0], IcMethod::Pearson),
            Err(IcUndefined::TooFewPairs(2))
        );
        assert_eq!(
            information_coefficient(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], IcMethod::Rank),
            Err(IcUndefined::ZeroVariance)
        );
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }
}
