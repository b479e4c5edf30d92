//! Independent oracles shared by the property tests and the acceptance run.
//! Each check returns the number of instances it verified.
#![allow(dead_code)]

use pocrm_core::consistency::{amend_skeleton, converged_mle_incorrect, correct_group, f_m, relabel, AmendOptions};
use pocrm_core::crm::{check_crm_consistency, log_likelihood, mle, recommend, DoseData, ParamDomain, Skeleton};
use pocrm_core::grid::{enumerate_orderings, Combo, DoseGrid, Ordering};
use pocrm_core::pocrm::{run_trial, PocrmDesign};
use pocrm_core::rng;
use pocrm_core::scenario::ToxScenario;
use pocrm_core::selector::coverage_scenarios;
use pocrm_core::sim::{scenario_library, SKELETON_BASE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<usize, String>;

pub fn all33() -> Vec<Ordering> {
    enumerate_orderings(DoseGrid::new(3, 3).unwrap()).unwrap()
}

/// Best point of a log-spaced grid over `[lo, hi]`, with the grid step on
/// the log scale.
pub fn grid_argmax(data: &DoseData, alpha: &[f64], lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let step = (lhi - llo) / (points - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..points {
        let a = (llo + step * i as f64).exp();
        let v = log_likelihood(data, alpha, a);
        if v > best.0 {
            best = (v, a);
        }
    }
    (best.1, step)
}

pub fn golden_argmax(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-10 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    0.5 * (lo + hi)
}

/// Single-agent CRM along `order`, written against the CRM primitives only.
/// Stage 1 climbs the ordering one patient at a time until both outcomes
/// have been seen.
pub fn crm_trial(alpha: &[f64], order: &Ordering, tox: &ToxScenario, n: usize, seed: u64) -> (Combo, Vec<usize>) {
    let k = alpha.len();
    let mut nn = vec![0u32; k];
    let mut yy = vec![0u32; k];
    let mut out = rng::stream(seed, &[0]);
    let mut path = Vec::new();
    let mut stage1 = 0;
    let next = |nn: &[u32], yy: &[u32], stage1: usize| -> (usize, bool) {
        let d = DoseData::new(nn.to_vec(), yy.to_vec()).unwrap();
        if d.is_heterogeneous() {
            (recommend(alpha, mle(&d, alpha, ParamDomain::default()).unwrap(), 0.3), true)
        } else {
            (stage1.min(k - 1), false)
        }
    };
    for _ in 0..n {
        let (p, hetero) = next(&nn, &yy, stage1);
        if !hetero {
            stage1 += 1;
        }
        let dlt = out.random::<f64>() < tox.tox(order.at(p));
        nn[p] += 1;
        yy[p] += dlt as u32;
        path.push(p);
    }
    (order.at(next(&nn, &yy, stage1).0), path)
}

/// POCRM with one ordering against [`crm_trial`] on identical seeds.
pub fn crm_reduction(ordering_step: usize, seeds: u64) -> Check {
    let lib = scenario_library();
    let grid = DoseGrid::new(3, 3).unwrap();
    let mut n = 0;
    for (oi, o) in all33().iter().enumerate().step_by(ordering_step) {
        let d = PocrmDesign::builder(grid, Skeleton::new(SKELETON_BASE.to_vec()).unwrap(), vec![o.clone()], 0.3)
            .and_then(|d| d.stage1_sequence(o.seq().to_vec()))
            .map_err(|e| e.to_string())?;
        for (si, s) in lib.iter().take(9).enumerate() {
            for seed in 0..seeds {
                let t = run_trial(&d, s, 40, seed).map_err(|e| e.to_string())?;
                let (rec, path) = crm_trial(&SKELETON_BASE, o, s, 40, seed);
                let got: Vec<usize> = t.state.history.iter().map(|r| o.position(r.combo)).collect();
                if t.recommended != rec || got != path {
                    return Err(format!("ordering {}, scenario {}, seed {seed}", oi + 1, si + 1));
                }
                n += 1;
            }
        }
    }
    Ok(n)
}

/// MLE against a `points`-point log grid, within one grid step.
pub fn mle_grid(cases: usize, points: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let al = [0.1, 0.25, 0.4, 0.55];
    let (lo, hi) = (0.05, 20.0);
    let dom = ParamDomain::new(lo, hi).unwrap();
    let mut n = 0;
    while n < cases {
        let nn: Vec<u32> = (0..4).map(|_| rng.random_range(0..8)).collect();
        let yy: Vec<u32> = nn.iter().map(|&c| rng.random_range(0..=c)).collect();
        let d = DoseData::new(nn, yy).unwrap();
        if !d.is_heterogeneous() {
            continue;
        }
        let a = mle(&d, &al, dom).map_err(|e| e.to_string())?;
        let (g, step) = grid_argmax(&d, &al, lo, hi, points);
        if (a.ln() - g.ln()).abs() > step * 1.01 {
            return Err(format!("mle {a} grid {g} for {d:?}"));
        }
        n += 1;
    }
    Ok(n)
}

/// Limiting estimate against a golden-section maximum of the weighted
/// expected log-likelihood. Only interior roots are counted.
pub fn converged_vs_argmax(instances: usize, tol: f64, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = ParamDomain::default();
    let mut n = 0;
    let mut tries = 0;
    while n < instances {
        tries += 1;
        if tries > 20 * instances {
            return Err(format!("only {n} interior instances"));
        }
        let k = rng.random_range(2..=6);
        let mut alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.03..0.9)).collect();
        alpha.sort_by(f64::total_cmp);
        let tox: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..0.9)).collect();
        let eta: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.8) { rng.random::<f64>() } else { 0.0 }).collect();
        if eta.iter().all(|&e| e == 0.0) {
            continue;
        }
        let got = converged_mle_incorrect(&alpha, &tox, &eta, d);
        if got.at_boundary {
            continue;
        }
        // searched on ln a
        let ell = |u: f64| (0..k).map(|x| eta[x] * f_m(alpha[x], tox[x], u.exp())).sum::<f64>();
        let want = golden_argmax(ell, d.lo().ln(), d.hi().ln()).exp();
        if (got.a - want).abs() > tol * want.max(1.0) {
            return Err(format!("root {} vs argmax {want}", got.a));
        }
        n += 1;
    }
    Ok(n)
}

pub fn random_skeleton(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..9).map(|_| (rng.random_range(0.02..0.85f64) * 100.0).round() / 100.0).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[0] < w[1]) {
            return v;
        }
    }
}

/// Amendment on random (skeleton, scenario) pairs: every solved instance
/// must be strictly increasing and CRM-consistent on the correct group.
/// Returns the number of instances tried; infeasible ones are skipped but
/// at least half must solve.
pub fn amend_monotone(instances: usize, seed: u64) -> Check {
    let lib = scenario_library();
    let os = all33();
    let d = ParamDomain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solved = 0;
    for trial in 0..instances {
        let s = &lib[trial % 9];
        let group: Vec<Ordering> = correct_group(s, &os).unwrap().into_iter().map(|m| os[m].clone()).collect();
        let start = random_skeleton(&mut rng);
        let Ok(out) = amend_skeleton(&Skeleton::new(start).unwrap(), s, &group, d, &AmendOptions::default()) else {
            continue;
        };
        solved += 1;
        let v = out.skeleton.values();
        if !v.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!("instance {trial}: {v:?} not increasing"));
        }
        let nu = relabel(s).unwrap()[0].nu;
        for t in &group {
            let r: Vec<f64> = t.seq().iter().map(|&c| s.tox(c)).collect();
            let c = check_crm_consistency(&out.skeleton, &r, nu, s.theta0(), d).map_err(|e| e.to_string())?;
            if !c.consistent {
                return Err(format!("instance {trial}: ordering {t} still inconsistent"));
            }
        }
    }
    if 2 * solved < instances {
        return Err(format!("only {solved} of {instances} instances solved"));
    }
    Ok(instances)
}

/// Strictly increasing map of (0, 1) onto itself fixing the target.
pub fn warp(rng: &mut ChaCha8Rng, theta0: f64) -> impl Fn(f64) -> f64 {
    let lo = rng.random_range(0.3..3.0);
    let hi = rng.random_range(0.3..3.0);
    move |x: f64| {
        if x < theta0 {
            theta0 * (x / theta0).powf(lo)
        } else {
            1.0 - (1.0 - theta0) * ((1.0 - x) / (1.0 - theta0)).powf(hi)
        }
    }
}

/// Correct groups of the library under rank-preserving perturbations.
pub fn rank_invariance(perturbations: usize, seed: u64) -> Check {
    let os = all33();
    let lib = scenario_library();
    let base = coverage_scenarios(&os, &lib).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in 0..perturbations {
        let f = warp(&mut rng, 0.3);
        let moved = lib
            .iter()
            .map(|s| {
                let t: Vec<f64> = s.tox_by_index().iter().map(|&x| if (x - 0.3).abs() < 1e-12 { 0.3 } else { f(x) }).collect();
                ToxScenario::new(s.grid(), t, 0.3)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if coverage_scenarios(&os, &moved).map_err(|e| e.to_string())?.cells != base.cells {
            return Err(format!("perturbation {p} changed a correct group"));
        }
    }
    Ok(perturbations)
}
