//! Sufficient-condition check of POCRM consistency for one scenario.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::converged::{converged_mle_correct, f_m, solve_cells};
use super::labels::{in_correct_group, relabel, w_sets, Labelling};
use crate::crm::{check_crm_consistency, Cell, CrmConsistency, ParamDomain, Skeleton};
use crate::error::{Error, Result};
use crate::grid::{Combo, Ordering};
use crate::rng;
use crate::scenario::ToxScenario;

/// Which combinations receive allocation weight in the sampled `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetRule {
    /// the MTC with its neighbours in the correct ordering, and the W-set
    /// with its neighbours in the incorrect ordering
    #[default]
    Neighbours,
    /// the MTC and the W-set with their neighbours in both orderings
    NeighboursBoth,
    /// every combination
    All,
}

/// Allocation weights are drawn uniformly over the part of the simplex on
/// the chosen subset where the MTC holds at least `mtc_share`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampler {
    pub n_draws: usize,
    #[serde(default)]
    pub subset: SubsetRule,
    #[serde(default)]
    pub seed: u64,
    /// lower bound on the weight of the MTC in every draw, in `[0, 1)`
    #[serde(default = "default_mtc_share")]
    pub mtc_share: f64,
}

fn default_mtc_share() -> f64 {
    0.99
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler { n_draws: 50_000, subset: SubsetRule::Neighbours, seed: 0, mtc_share: default_mtc_share() }
    }
}

/// A failing `(m, t, w)` triple: the correct ordering `t` fits `w` worse
/// than the incorrect ordering `m` for at least one sampled `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eq2Violation {
    /// index of the incorrect ordering
    pub m: usize,
    /// index of the correct ordering
    pub t: usize,
    pub w: Combo,
    /// first failing draw
    pub draw: usize,
    /// weights of that draw
    pub eta: Vec<(Combo, f64)>,
    /// fit of `w` under `t`
    pub lhs: f64,
    /// fit of `w` under `m`
    pub rhs: f64,
    /// number of failing draws
    pub failures: usize,
    /// largest shortfall `rhs - lhs` over the failing draws
    pub worst_gap: f64,
    pub draws: usize,
}

/// Result for one labelling version (one designated MTC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionReport {
    pub mtc: Combo,
    /// 0-based label of the MTC
    pub nu: usize,
    pub group: Vec<usize>,
    /// converged estimate shared by the correct group
    pub a_correct: f64,
    pub crm: Vec<(usize, CrmConsistency)>,
    pub eq2_violations: Vec<Eq2Violation>,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// union of the correct groups over all MTC versions
    pub group: Vec<usize>,
    pub versions: Vec<VersionReport>,
    pub verdict: bool,
}

impl ConsistencyReport {
    pub fn crm_ok(&self) -> bool {
        self.versions.iter().any(|v| !v.group.is_empty() && v.crm.iter().all(|(_, c)| c.consistent))
    }

    pub fn eq2_violations(&self) -> impl Iterator<Item = &Eq2Violation> {
        self.versions.iter().flat_map(|v| v.eq2_violations.iter())
    }
}

/// Checks the sufficient conditions for POCRM consistency: a nonempty
/// correct group, CRM consistency of every ordering in it, and for every
/// other ordering `m` some correct ordering whose limiting fit of each
/// W-set combination is at least as good as that of `m`, for all sampled
/// allocation weights. With several MTCs the scenario passes if any
/// version does.
pub fn check_pocrm_consistency(
    skeleton: &Skeleton,
    orderings: &[Ordering],
    scenario: &ToxScenario,
    domain: ParamDomain,
    sampler: &Sampler,
) -> Result<ConsistencyReport> {
    if skeleton.len() != scenario.grid().k() {
        return Err(Error::SizeMismatch { expected: scenario.grid().k(), got: skeleton.len() });
    }
    if sampler.n_draws == 0 || !(0.0..1.0).contains(&sampler.mtc_share) {
        return Err(Error::InvalidArgument(format!(
            "sampler needs n_draws >= 1 and mtc_share in [0, 1), got {} and {}",
            sampler.n_draws, sampler.mtc_share
        )));
    }
    if let Some(o) = orderings.iter().find(|o| o.grid() != scenario.grid()) {
        return Err(Error::InvalidOrdering(format!("ordering {o} is not on the scenario grid")));
    }
    let versions = relabel(scenario)?
        .iter()
        .enumerate()
        .map(|(v, lab)| check_version(skeleton, orderings, scenario, lab, domain, sampler, v as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut group: Vec<usize> = versions.iter().flat_map(|v| v.group.iter().copied()).collect();
    group.sort_unstable();
    group.dedup();
    let verdict = versions.iter().any(|v| v.verdict);
    Ok(ConsistencyReport { group, versions, verdict })
}

fn check_version(
    skeleton: &Skeleton,
    orderings: &[Ordering],
    scenario: &ToxScenario,
    lab: &Labelling,
    domain: ParamDomain,
    sampler: &Sampler,
    version: u64,
) -> Result<VersionReport> {
    let theta0 = scenario.theta0();
    let alpha = skeleton.values();
    let group: Vec<usize> = (0..orderings.len()).filter(|&m| in_correct_group(&orderings[m], lab)).collect();
    let a_correct = converged_mle_correct(alpha[lab.nu], theta0);
    if group.is_empty() {
        return Ok(VersionReport {
            mtc: lab.mtc,
            nu: lab.nu,
            group,
            a_correct,
            crm: Vec::new(),
            eq2_violations: Vec::new(),
            verdict: false,
        });
    }
    let crm = group
        .iter()
        .map(|&t| {
            let r: Vec<f64> = orderings[t].seq().iter().map(|&c| scenario.tox(c)).collect();
            check_crm_consistency(skeleton, &r, lab.nu, theta0, domain).map(|c| (t, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let others: Vec<usize> = (0..orderings.len()).filter(|m| !group.contains(m)).collect();
    let eq2_violations: Vec<Eq2Violation> = others
        .par_iter()
        .map(|&m| eq2_for(m, &group, orderings, scenario, lab, alpha, a_correct, domain, sampler, version))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        // m is ruled out as soon as one correct ordering beats it everywhere
        .filter(|v: &Vec<Eq2Violation>| {
            let mut ts: Vec<usize> = v.iter().map(|x| x.t).collect();
            ts.dedup();
            ts.len() == group.len()
        })
        .flatten()
        .collect();
    let verdict = crm.iter().all(|(_, c)| c.consistent) && eq2_violations.is_empty();
    Ok(VersionReport { mtc: lab.mtc, nu: lab.nu, group, a_correct, crm, eq2_violations, verdict })
}

fn neighbours(o: &Ordering, c: Combo, out: &mut Vec<Combo>) {
    let p = o.position(c);
    if p > 0 {
        out.push(o.at(p - 1));
    }
    if p + 1 < o.len() {
        out.push(o.at(p + 1));
    }
}

fn subset(rule: SubsetRule, mtc: Combo, w: &[Combo], t: &Ordering, m: &Ordering) -> Vec<Combo> {
    let mut s = vec![mtc];
    s.extend_from_slice(w);
    match rule {
        SubsetRule::All => s = m.seq().to_vec(),
        SubsetRule::Neighbours => {
            neighbours(t, mtc, &mut s);
            for &c in w {
                neighbours(m, c, &mut s);
            }
        }
        SubsetRule::NeighboursBoth => {
            for &c in std::iter::once(&mtc).chain(w) {
                neighbours(t, c, &mut s);
                neighbours(m, c, &mut s);
            }
        }
    }
    let g = m.grid();
    s.sort_by_key(|&c| g.index(c));
    s.dedup();
    s
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn eq2_for(
    m: usize,
    group: &[usize],
    orderings: &[Ordering],
    scenario: &ToxScenario,
    lab: &Labelling,
    alpha: &[f64],
    a_correct: f64,
    domain: ParamDomain,
    sampler: &Sampler,
    version: u64,
) -> Result<Vec<Eq2Violation>> {
    let om = &orderings[m];
    let g = om.grid();
    let w = w_sets(om, lab)?.w;
    // correct orderings sharing a subset share the sampled weights
    let mut classes: BTreeMap<Vec<Combo>, Vec<usize>> = BTreeMap::new();
    for &t in group {
        classes.entry(subset(sampler.subset, lab.mtc, &w, &orderings[t], om)).or_default().push(t);
    }
    let mut out = Vec::new();
    for (set, ts) in classes {
        let mask = set.iter().fold(0u64, |acc, &c| acc | 1 << g.index(c));
        let mut rng = rng::stream(sampler.seed, &[version, m as u64, mask]);
        let alpha_m: Vec<f64> = set.iter().map(|&c| alpha[om.position(c)]).collect();
        let tox: Vec<f64> = set.iter().map(|&c| scenario.tox(c)).collect();
        // fit of each w under each t does not depend on eta
        let lhs: Vec<Vec<f64>> = ts
            .iter()
            .map(|&t| w.iter().map(|&c| f_m(alpha[orderings[t].position(c)], scenario.tox(c), a_correct)).collect())
            .collect();
        let mut found: Vec<Vec<Option<Eq2Violation>>> = vec![vec![None; w.len()]; ts.len()];
        let mut cells: Vec<Cell> = alpha_m.iter().map(|&al| Cell { n: 0.0, y: 0.0, ln_alpha: al.ln() }).collect();
        let mut eta = vec![0.0; set.len()];
        let mi = set.iter().position(|&c| c == lab.mtc).expect("MTC in subset");
        let floor = sampler.mtc_share;
        for draw in 0..sampler.n_draws {
            // uniform on the face of the simplex where the MTC share is at least `floor`
            let mut sum = 0.0;
            for e in eta.iter_mut() {
                *e = rng.sample::<f64, _>(Exp1);
                sum += *e;
            }
            for (i, ((cell, e), &r)) in cells.iter_mut().zip(eta.iter_mut()).zip(&tox).enumerate() {
                *e = (1.0 - floor) * *e / sum + if i == mi { floor } else { 0.0 };
                cell.n = *e;
                cell.y = *e * r;
            }
            let a_m = solve_cells(&cells, domain).a;
            for (wi, &c) in w.iter().enumerate() {
                let rhs = f_m(alpha[om.position(c)], scenario.tox(c), a_m);
                for (ti, &t) in ts.iter().enumerate() {
                    if lhs[ti][wi] >= rhs {
                        continue;
                    }
                    match &mut found[ti][wi] {
                        Some(v) => {
                            v.failures += 1;
                            v.worst_gap = v.worst_gap.max(rhs - lhs[ti][wi]);
                        }
                        slot @ None => {
                            *slot = Some(Eq2Violation {
                                m,
                                t,
                                w: c,
                                draw,
                                eta: set.iter().copied().zip(eta.iter().copied()).collect(),
                                lhs: lhs[ti][wi],
                                rhs,
                                failures: 1,
                                worst_gap: rhs - lhs[ti][wi],
                                draws: sampler.n_draws,
                            })
                        }
                    }
                }
            }
        }
        out.extend(found.into_iter().flatten().flatten());
    }
    out.sort_by_key(|v| (v.t, g.index(v.w)));
    Ok(out)
}
