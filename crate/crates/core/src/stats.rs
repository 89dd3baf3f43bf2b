//! Small statistical helpers for the randomized checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn upper_tail(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Goodness of fit of `observed` counts against `expected` probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells: usize = 0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let dof = cells.saturating_sub(1);
    ChiSquare {
        statistic: stat,
        dof,
        p_value: upper_tail(stat, dof),
    }
}

pub fn chi_square_uniform(observed: &[u64]) -> ChiSquare {
    let p = 1.0 / observed.len() as f64;
    chi_square_gof(observed, &vec![p; observed.len()])
}

/// Pearson independence test on a contingency table. Empty rows and columns
/// are dropped before counting degrees of freedom.
pub fn chi_square_independence(table: &[Vec<u64>]) -> ChiSquare {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let width = rows.first().map_or(0, |r| r.len());
    let col_sums: Vec<u64> = (0..width).map(|c| rows.iter().map(|r| r[c]).sum()).collect();
    let cols: Vec<usize> = (0..width).filter(|&c| col_sums[c] > 0).collect();
    let total: u64 = col_sums.iter().sum();
    let mut stat = 0.0;
    for r in &rows {
        let rs: u64 = r.iter().sum();
        for &c in &cols {
            let e = rs as f64 * col_sums[c] as f64 / total as f64;
            stat += (r[c] as f64 - e).powi(2) / e;
        }
    }
    let dof = rows.len().saturating_sub(1) * cols.len().saturating_sub(1);
    ChiSquare {
        statistic: stat,
        dof,
        p_value: upper_tail(stat, dof),
    }
}

/// Total variation distance between two distributions given as weights.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let len = a.len().max(b.len());
    let at = |v: &[f64], i: usize, s: f64| v.get(i).copied().unwrap_or(0.0) / s;
    0.5 * (0..len).map(|i| (at(a, i, sa) - at(b, i, sb)).abs()).sum::<f64>()
}
