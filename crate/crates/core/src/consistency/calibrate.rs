//! Iterative skeleton calibration across several scenarios.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::amend::{amend_skeleton, AmendOptions};
use super::check::{check_pocrm_consistency, eq2_for, ConsistencyReport, Eq2Violation, Sampler};
use super::converged::converged_mle_correct;
use super::labels::{correct_group, relabel};
use crate::crm::{ParamDomain, Skeleton};
use crate::error::{Error, Result};
use crate::grid::Ordering;
use crate::scenario::ToxScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateOptions {
    /// sampler for the final verdicts
    pub sampler: Sampler,
    /// cheaper sampler used to rank candidate moves
    pub search: Sampler,
    pub amend: AmendOptions,
    pub max_iter: usize,
    /// failing comparisons tried per iteration
    #[serde(default = "default_candidates")]
    pub candidates: usize,
}

fn default_candidates() -> usize {
    4
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            sampler: Sampler::default(),
            search: Sampler { n_draws: 2000, ..Sampler::default() },
            amend: AmendOptions::default(),
            max_iter: 50,
            candidates: default_candidates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub skeleton: Skeleton,
    /// every scenario passed with the final skeleton under `sampler`
    pub passed: bool,
    pub iterations: usize,
    /// indices of scenarios still failing
    pub failing: Vec<usize>,
    /// final reports, one per scenario
    pub reports: Vec<ConsistencyReport>,
    /// skeleton after each accepted move
    pub trace: Vec<Skeleton>,
}

/// Amends the skeleton for CRM consistency over every scenario's correct
/// group, then repeatedly moves single entries to repair failing fit
/// comparisons until every scenario passes or no move helps.
pub fn calibrate_skeleton(
    initial: &Skeleton,
    scenarios: &[ToxScenario],
    orderings: &[Ordering],
    domain: ParamDomain,
    opts: &CalibrateOptions,
) -> Result<Calibration> {
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("no scenarios to calibrate against".into()));
    }
    let groups = scenarios
        .iter()
        .map(|s| Ok(correct_group(s, orderings)?.into_iter().map(|i| orderings[i].clone()).collect()))
        .collect::<Result<Vec<Vec<Ordering>>>>()?;
    let ctx = Ctx { scenarios, orderings, groups: &groups, domain, opts };
    let mut sk = ctx.amend_all(initial)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let finish = |sk: Skeleton, iterations, trace| -> Result<Calibration> {
        let reports = ctx.reports(&sk, &opts.sampler)?;
        let failing: Vec<usize> = (0..scenarios.len()).filter(|&i| !reports[i].verdict).collect();
        Ok(Calibration { skeleton: sk, passed: failing.is_empty(), iterations, failing, reports, trace })
    };
    let mut reports = ctx.reports(&sk, &opts.search)?;
    while iterations < opts.max_iter {
        let score = total_score(&reports);
        if score == 0.0 {
            let done = finish(sk.clone(), iterations, trace.clone())?;
            if done.passed {
                return Ok(done);
            }
            // the finer sampler found witnesses the search sampler missed
            reports = done.reports;
        }
        iterations += 1;
        let Some((next, next_reports)) = ctx.best_move(&sk, &reports, score)? else {
            break;
        };
        sk = next;
        reports = next_reports;
        trace.push(sk.clone());
    }
    finish(sk, iterations, trace)
}

struct Ctx<'a> {
    scenarios: &'a [ToxScenario],
    orderings: &'a [Ordering],
    groups: &'a [Vec<Ordering>],
    domain: ParamDomain,
    opts: &'a CalibrateOptions,
}

/// A failing comparison of `w` between incorrect `m` and correct `t`.
struct Target<'v> {
    scenario: usize,
    version: usize,
    v: &'v Eq2Violation,
    weight: f64,
}

impl Ctx<'_> {
    fn amend_all(&self, sk: &Skeleton) -> Result<Skeleton> {
        let mut sk = sk.clone();
        // amendments for one scenario can undo bounds of another
        for _ in 0..10 {
            let before = sk.clone();
            for (s, g) in self.scenarios.iter().zip(self.groups) {
                if !g.is_empty() {
                    sk = amend_skeleton(&sk, s, g, self.domain, &self.opts.amend)?.skeleton;
                }
            }
            if sk == before {
                break;
            }
        }
        Ok(sk)
    }

    fn reports(&self, sk: &Skeleton, sampler: &Sampler) -> Result<Vec<ConsistencyReport>> {
        self.scenarios
            .iter()
            .map(|s| check_pocrm_consistency(sk, self.orderings, s, self.domain, sampler))
            .collect()
    }

    fn best_move(
        &self,
        sk: &Skeleton,
        reports: &[ConsistencyReport],
        score: f64,
    ) -> Result<Option<(Skeleton, Vec<ConsistencyReport>)>> {
        let mut targets = Vec::new();
        for (si, r) in reports.iter().enumerate() {
            for (vi, v) in r.versions.iter().enumerate() {
                targets.extend(easiest_per_m(&v.eq2_violations).into_iter().map(|(v, weight)| Target {
                    scenario: si,
                    version: vi,
                    v,
                    weight,
                }));
            }
        }
        targets.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.scenario.cmp(&b.scenario)).then(a.v.m.cmp(&b.v.m)));
        let mut proposals: Vec<Vec<f64>> = Vec::new();
        for t in targets.iter().take(self.opts.candidates) {
            for p in self.proposals(sk, t)? {
                if !proposals.contains(&p) {
                    proposals.push(p);
                }
            }
        }
        let unit = self.opts.amend.step.unwrap_or(0.01);
        for p in 0..sk.len() {
            for d in [1.0, -1.0, 2.0, -2.0, 4.0, -4.0] {
                let mut v = sk.values().to_vec();
                v[p] = ((v[p] + d * unit) * 1e10).round() / 1e10;
                if !proposals.contains(&v) {
                    proposals.push(v);
                }
            }
        }
        let mut best: Option<(f64, Skeleton, Vec<ConsistencyReport>)> = None;
        for p in proposals {
            let Ok(cand) = Skeleton::new(p).and_then(|s| self.amend_all(&s)) else {
                continue;
            };
            if &cand == sk {
                continue;
            }
            let rs = self.reports(&cand, &self.opts.search)?;
            let sc = total_score(&rs);
            if sc < score && best.as_ref().is_none_or(|b| sc < b.0) {
                best = Some((sc, cand, rs));
            }
        }
        Ok(best.map(|(_, s, r)| (s, r)))
    }

    /// Single-entry moves aimed at one comparison: the entry of `w` under
    /// the correct ordering toward its exact fit, and the entry of `w`
    /// under the incorrect ordering in either direction. Each move is the
    /// smallest one, found by bisection, that clears the comparison, or
    /// the largest allowed move if none does.
    fn proposals(&self, sk: &Skeleton, target: &Target) -> Result<Vec<Vec<f64>>> {
        let scenario = &self.scenarios[target.scenario];
        let lab = &relabel(scenario)?[target.version];
        let v = target.v;
        let al = sk.values();
        let k = al.len();
        let eps = self.opts.amend.epsilon;
        let theta0 = scenario.theta0();
        let clears = |trial: &[f64]| -> Result<bool> {
            let a_t = converged_mle_correct(trial[lab.nu], theta0);
            let viol = eq2_for(
                v.m,
                &[v.t],
                self.orderings,
                scenario,
                lab,
                trial,
                a_t,
                self.domain,
                &self.opts.search,
                target.version as u64,
            )?;
            Ok(!viol.iter().any(|u| u.w == v.w))
        };
        let bounds = |p: usize| {
            let lo = if p == 0 { eps } else { al[p - 1] + eps };
            let hi = if p + 1 == k { 1.0 - eps } else { al[p + 1] - eps };
            (lo, hi)
        };
        let mut ends = Vec::new();
        let pt = self.orderings[v.t].position(v.w);
        if pt != lab.nu {
            let a_t = converged_mle_correct(al[lab.nu], theta0);
            let (lo, hi) = bounds(pt);
            ends.push((pt, scenario.tox(v.w).powf(1.0 / a_t).clamp(lo, hi)));
        }
        let pm = self.orderings[v.m].position(v.w);
        let (lo, hi) = bounds(pm);
        ends.push((pm, lo));
        ends.push((pm, hi));
        let mut out = Vec::new();
        for (p, end) in ends {
            if (end - al[p]).abs() < 1e-9 {
                continue;
            }
            let at = |x: f64| {
                let mut trial = al.to_vec();
                trial[p] = x;
                trial
            };
            let mut x = end;
            if clears(&at(end))? {
                let (mut near, mut far) = (al[p], end);
                for _ in 0..30 {
                    let mid = 0.5 * (near + far);
                    if clears(&at(mid))? {
                        far = mid;
                    } else {
                        near = mid;
                    }
                }
                x = far;
            }
            if let Some(s) = self.opts.amend.step {
                let q = x / s;
                let q = if x > al[p] { q.ceil() } else { q.floor() };
                let (lo, hi) = bounds(p);
                x = ((q * s * 1e10).round() / 1e10).clamp(lo, hi);
            }
            out.push(at(x));
        }
        Ok(out)
    }
}

/// For each incorrect ordering, the correct ordering it is closest to
/// losing against, with that ordering's worst comparison and the summed
/// shortfall over its comparisons.
fn easiest_per_m(viol: &[Eq2Violation]) -> Vec<(&Eq2Violation, f64)> {
    let mut by_mt: BTreeMap<(usize, usize), Vec<&Eq2Violation>> = BTreeMap::new();
    for v in viol {
        by_mt.entry((v.m, v.t)).or_default().push(v);
    }
    let mut best: BTreeMap<usize, (&Eq2Violation, f64)> = BTreeMap::new();
    for ((m, _), vs) in by_mt {
        let total: f64 = vs.iter().map(|v| v.worst_gap).sum();
        let worst = *vs.iter().max_by(|a, b| a.worst_gap.total_cmp(&b.worst_gap)).expect("nonempty");
        if best.get(&m).is_none_or(|b| total < b.1) {
            best.insert(m, (worst, total));
        }
    }
    best.into_values().collect()
}

/// Zero exactly when every scenario passes. A missing correct group or a
/// CRM failure outweighs any sum of fit shortfalls.
fn total_score(reports: &[ConsistencyReport]) -> f64 {
    const HEAVY: f64 = 1e3;
    reports
        .iter()
        .map(|r| {
            r.versions
                .iter()
                .map(|v| {
                    if v.group.is_empty() {
                        return HEAVY * 100.0;
                    }
                    let crm = v.crm.iter().filter(|(_, c)| !c.consistent).count() as f64 * HEAVY;
                    let eq2: f64 = easiest_per_m(&v.eq2_violations).iter().map(|x| x.1).sum();
                    crm + eq2
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}
