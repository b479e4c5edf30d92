use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Combo, DoseGrid};
use crate::pocrm::{run_trial, PocrmDesign};
use crate::rng;
use crate::scenario::ToxScenario;

/// Monte Carlo estimate of the probability of correct selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsResult {
    pub pcs: f64,
    pub mc_se: f64,
    pub replicates: usize,
    pub n_patients: usize,
    /// selection frequency of each combination, by row-major index
    pub per_combo_selection: Vec<f64>,
}

impl PcsResult {
    fn from_picks(grid: DoseGrid, scenario: &ToxScenario, picks: &[Combo], n_patients: usize) -> Self {
        let reps = picks.len();
        let mut counts = vec![0usize; grid.k()];
        for &c in picks {
            counts[grid.index(c)] += 1;
        }
        let hits: usize = scenario.mtc_set().iter().map(|&c| counts[grid.index(c)]).sum();
        let pcs = hits as f64 / reps as f64;
        PcsResult {
            pcs,
            mc_se: (pcs * (1.0 - pcs) / reps as f64).sqrt(),
            replicates: reps,
            n_patients,
            per_combo_selection: counts.iter().map(|&c| c as f64 / reps as f64).collect(),
        }
    }
}

fn check_reps(replicates: usize, n_patients: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("at least one replicate is needed".into()));
    }
    if n_patients == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    Ok(())
}

/// Seed of trial `replicate` under base seed `seed`.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    rng::derive_seed(seed, &[replicate as u64])
}

/// PCS of a design over independent simulated trials, run in parallel on
/// the current rayon pool. The result does not depend on the pool size.
pub fn estimate_pcs(
    design: &PocrmDesign,
    scenario: &ToxScenario,
    n_patients: usize,
    replicates: usize,
    seed: u64,
) -> Result<PcsResult> {
    check_reps(replicates, n_patients)?;
    if scenario.mtc_set().is_empty() {
        return Err(Error::NoMtc);
    }
    let picks = (0..replicates)
        .into_par_iter()
        .map(|r| run_trial(design, scenario, n_patients, replicate_seed(seed, r)).map(|t| t.recommended))
        .collect::<Result<Vec<_>>>()?;
    Ok(PcsResult::from_picks(design.grid(), scenario, &picks, n_patients))
}

/// One PCS estimate per sample size; replicate `r` uses the same seed at
/// every size.
pub fn pcs_curve(
    design: &PocrmDesign,
    scenario: &ToxScenario,
    n_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<PcsResult>> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sample sizes must be nonempty and strictly increasing".into()));
    }
    n_grid.iter().map(|&n| estimate_pcs(design, scenario, n, replicates, seed)).collect()
}

/// Complete-information benchmark: each patient carries one latent
/// uniform and would be toxic at every combination whose probability
/// exceeds it. Observed rates are projected onto matrices non-decreasing
/// along both agents and the rate closest to the target wins, ties going
/// to the lower row-major index.
pub fn po_benchmark(
    scenario: &ToxScenario,
    n_patients: usize,
    replicates: usize,
    theta0: f64,
    seed: u64,
) -> Result<PcsResult> {
    check_reps(replicates, n_patients)?;
    if scenario.mtc_set().is_empty() {
        return Err(Error::NoMtc);
    }
    let grid = scenario.grid();
    let tox = scenario.tox_by_index();
    let picks: Vec<Combo> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(replicate_seed(seed, r), &[2]);
            let mut hits = vec![0u32; grid.k()];
            for _ in 0..n_patients {
                let u: f64 = g.random();
                for (h, &p) in hits.iter_mut().zip(tox) {
                    *h += (u <= p) as u32;
                }
            }
            let rates: Vec<f64> = hits.iter().map(|&h| h as f64 / n_patients as f64).collect();
            let fit = isotonic_2d(&rates, grid.n_a(), grid.n_b());
            let mut best = 0;
            for x in 1..fit.len() {
                if (fit[x] - theta0).abs() < (fit[best] - theta0).abs() - 1e-12 {
                    best = x;
                }
            }
            grid.combo(best)
        })
        .collect();
    Ok(PcsResult::from_picks(grid, scenario, &picks, n_patients))
}

/// Least-squares projection of a row-major `n_b x n_a` matrix onto the
/// matrices non-decreasing along rows and columns, by Dykstra's
/// alternating projections with row and column pool-adjacent-violators.
pub fn isotonic_2d(values: &[f64], n_a: usize, n_b: usize) -> Vec<f64> {
    assert_eq!(values.len(), n_a * n_b, "matrix size");
    let k = values.len();
    let mut x = values.to_vec();
    let mut p = vec![0.0; k];
    let mut q = vec![0.0; k];
    for _ in 0..100_000 {
        let prev = x.clone();
        let mut y: Vec<f64> = (0..k).map(|i| x[i] + p[i]).collect();
        for r in 0..n_b {
            pava(&mut y[r * n_a..(r + 1) * n_a]);
        }
        for i in 0..k {
            p[i] += x[i] - y[i];
        }
        let mut z: Vec<f64> = (0..k).map(|i| y[i] + q[i]).collect();
        let mut col = vec![0.0; n_b];
        for c in 0..n_a {
            for r in 0..n_b {
                col[r] = z[r * n_a + c];
            }
            pava(&mut col);
            for r in 0..n_b {
                z[r * n_a + c] = col[r];
            }
        }
        for i in 0..k {
            q[i] += y[i] - z[i];
        }
        // a stalled iterate is not enough: the row and column fits must agree
        let gap = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = z;
        let change = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < 1e-12 && gap < 1e-10 {
            break;
        }
    }
    x
}

/// In-place non-decreasing least-squares fit with equal weights.
fn pava(v: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    let mut i = 0;
    for (m, n) in blocks {
        for _ in 0..n {
            v[i] = m;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_pools_violators() {
        let mut v = [1.0, 3.0, 2.0, 4.0, 0.0];
        pava(&mut v);
        assert_eq!(v, [1.0, 2.25, 2.25, 2.25, 2.25]);
    }

    #[test]
    fn monotone_input_is_fixed() {
        let v = [0.1, 0.2, 0.3, 0.2, 0.4, 0.5];
        assert_eq!(isotonic_2d(&v, 3, 2), v.to_vec());
    }

    #[test]
    fn projection_is_monotone_and_mean_preserving() {
        let v = [0.5, 0.1, 0.3, 0.0, 0.6, 0.2, 0.1, 0.9, 0.4];
        let x = isotonic_2d(&v, 3, 3);
        for r in 0..3 {
            for c in 0..3 {
                if c + 1 < 3 {
                    assert!(x[r * 3 + c] <= x[r * 3 + c + 1] + 1e-7);
                }
                if r + 1 < 3 {
                    assert!(x[r * 3 + c] <= x[(r + 1) * 3 + c] + 1e-7);
                }
            }
        }
        let s: f64 = v.iter().sum::<f64>() - x.iter().sum::<f64>();
        assert!(s.abs() < 1e-6);
    }
}
