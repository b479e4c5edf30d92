//! Skeleton amendment that makes the CRM consistent under every ordering of
//! a correct group, and the multi-scenario necessary condition.

use serde::{Deserialize, Serialize};

use super::labels::{in_correct_group, relabel};
use crate::crm::{boundary, check_crm_consistency, BoundKind, ParamDomain, Skeleton};
use crate::error::{Error, Result};
use crate::grid::Ordering;
use crate::numeric;
use crate::scenario::ToxScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmendOptions {
    /// margin beyond each solved bound
    pub epsilon: f64,
    /// when set, moved entries are rounded outward to multiples of `step`
    #[serde(default)]
    pub step: Option<f64>,
}

impl Default for AmendOptions {
    fn default() -> Self {
        AmendOptions { epsilon: 1e-4, step: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    /// 0-based skeleton entry
    pub position: usize,
    pub from: f64,
    pub to: f64,
    /// index into the group that triggered the move
    pub ordering: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amended {
    pub skeleton: Skeleton,
    pub adjustments: Vec<Adjustment>,
}

/// Skeleton value `x` at which `ln r / ln x` equals the boundary between `x`
/// and its neighbour, i.e. the edge of the feasible range for the entry.
fn solve_edge(r: f64, neighbour: f64, below: bool, theta0: f64, domain: ParamDomain, lo: f64, hi: f64) -> Result<f64> {
    let g = |x: f64| {
        let b = if below {
            boundary(x, neighbour, theta0, domain)
        } else {
            boundary(neighbour, x, theta0, domain)
        };
        match b {
            Ok(b) => r.ln() / x.ln() - b,
            Err(_) => f64::NAN,
        }
    };
    numeric::bisect(g, lo, hi, 1e-12).ok_or_else(|| {
        Error::Infeasible(format!("no skeleton value in ({lo}, {hi}) fits true toxicity {r} next to {neighbour}"))
    })
}

fn round_out(x: f64, step: Option<f64>, up: bool) -> f64 {
    match step {
        None => x,
        Some(s) => {
            let q = x / s;
            // guard against representation noise such as 0.21 / 0.01 = 20.999...
            let q = if (q - q.round()).abs() < 1e-9 { q.round() } else if up { q.ceil() } else { q.floor() };
            (q * s * 1e10).round() / 1e10
        }
    }
}

/// MTC position of `t` under the labelling version that puts it in the
/// correct group.
fn group_nu(t: &Ordering, scenario: &ToxScenario) -> Result<usize> {
    relabel(scenario)?
        .iter()
        .find(|lab| in_correct_group(t, lab))
        .map(|lab| lab.nu)
        .ok_or_else(|| Error::InvalidArgument(format!("ordering {t} is not in the correct group")))
}

/// Moves skeleton entries the least amount (plus a margin) so that the CRM
/// is consistent under every ordering in `group`. Entries below the MTC
/// position are raised and entries above it lowered, position by position
/// outward from the MTC, until no condition fires.
pub fn amend_skeleton(
    skeleton: &Skeleton,
    scenario: &ToxScenario,
    group: &[Ordering],
    domain: ParamDomain,
    opts: &AmendOptions,
) -> Result<Amended> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("empty correct group".into()));
    }
    let k = skeleton.len();
    if k != scenario.grid().k() {
        return Err(Error::SizeMismatch { expected: scenario.grid().k(), got: k });
    }
    let theta0 = scenario.theta0();
    let nus = group.iter().map(|t| group_nu(t, scenario)).collect::<Result<Vec<_>>>()?;
    let mut al = skeleton.values().to_vec();
    let mut adjustments = Vec::new();
    for _pass in 0..100 {
        let before = adjustments.len();
        for (gi, (t, &nu)) in group.iter().zip(&nus).enumerate() {
            let r: Vec<f64> = t.seq().iter().map(|&c| scenario.tox(c)).collect();
            for p in (0..nu).rev() {
                let b = boundary(al[p], al[p + 1], theta0, domain)?;
                if r[p].ln() / al[p].ln() > b {
                    continue;
                }
                let x = solve_edge(r[p], al[p + 1], true, theta0, domain, al[p], al[p + 1])?;
                let to = round_out(x + opts.epsilon, opts.step, true);
                if to >= al[p + 1] {
                    return Err(Error::Infeasible(format!(
                        "entry {} would have to reach {to}, not below entry {} = {}",
                        p + 1,
                        p + 2,
                        al[p + 1]
                    )));
                }
                adjustments.push(Adjustment { position: p, from: al[p], to, ordering: gi });
                al[p] = to;
            }
            for p in nu + 1..k {
                let b = boundary(al[p - 1], al[p], theta0, domain)?;
                if r[p].ln() / al[p].ln() < b {
                    continue;
                }
                let x = solve_edge(r[p], al[p - 1], false, theta0, domain, al[p - 1], al[p])?;
                let to = round_out(x - opts.epsilon, opts.step, false);
                if to <= al[p - 1] {
                    return Err(Error::Infeasible(format!(
                        "entry {} would have to fall to {to}, not above entry {} = {}",
                        p + 1,
                        p,
                        al[p - 1]
                    )));
                }
                adjustments.push(Adjustment { position: p, from: al[p], to, ordering: gi });
                al[p] = to;
            }
        }
        if adjustments.len() == before {
            break;
        }
    }
    let out = Skeleton::new(al)?;
    for (t, &nu) in group.iter().zip(&nus) {
        let r: Vec<f64> = t.seq().iter().map(|&c| scenario.tox(c)).collect();
        let c = check_crm_consistency(&out, &r, nu, theta0, domain)?;
        if !c.consistent {
            return Err(Error::Infeasible(format!("ordering {t} stays inconsistent: {:?}", c.violations)));
        }
    }
    Ok(Amended { skeleton: out, adjustments })
}

/// One failed inequality of the multi-scenario condition: at `position` of
/// the scenario's toxicity-sorted order the true toxicity must lie on the
/// stated side of `alpha[position]^b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViolation {
    /// index into the supplied scenarios
    pub scenario: usize,
    /// 0-based MTC label of that scenario
    pub slot: usize,
    pub position: usize,
    pub tox: f64,
    /// `alpha[position]^b` at the relevant boundary
    pub threshold: f64,
    /// `Above`: need `tox > threshold`; `Below`: need `tox < threshold`
    pub kind: BoundKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScenarioReport {
    /// 0-based MTC labels, one entry per scenario and MTC
    pub slots: Vec<(usize, usize)>,
    /// labels no scenario occupies; their inequalities cannot be checked
    pub uncheckable: Vec<usize>,
    pub violations: Vec<MultiViolation>,
}

impl MultiScenarioReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Necessary condition for consistency under several scenarios at once:
/// with scenarios placed by the label of their MTC, every toxicity below a
/// scenario's MTC label must sit under `alpha[l]^b[l+1]` and every toxicity
/// above it over `alpha[l]^b[l]`, with one shared set of boundaries.
pub fn check_multi_scenario(
    skeleton: &Skeleton,
    scenarios: &[ToxScenario],
    domain: ParamDomain,
) -> Result<MultiScenarioReport> {
    let k = skeleton.len();
    let al = skeleton.values();
    let mut slots = Vec::new();
    let mut violations = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        if s.grid().k() != k {
            return Err(Error::SizeMismatch { expected: k, got: s.grid().k() });
        }
        for lab in relabel(s)? {
            slots.push((si, lab.nu));
            let sorted: Vec<f64> = lab.combos.iter().map(|&c| s.tox(c)).collect();
            for v in check_crm_consistency(skeleton, &sorted, lab.nu, s.theta0(), domain)?.violations {
                let p = v.position;
                let threshold = al[p].powf(v.bound);
                // a > b  <=>  R < alpha^b
                let kind = match v.kind {
                    BoundKind::Above => BoundKind::Below,
                    BoundKind::Below => BoundKind::Above,
                };
                violations.push(MultiViolation { scenario: si, slot: lab.nu, position: p, tox: sorted[p], threshold, kind });
            }
        }
    }
    let uncheckable = (0..k).filter(|l| !slots.iter().any(|&(_, s)| s == *l)).collect();
    Ok(MultiScenarioReport { slots, uncheckable, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::correct_group;
    use crate::grid::enumerate_orderings;
    use crate::sim::scenario_library;

    const A0: [f64; 9] = [0.10, 0.20, 0.30, 0.40, 0.45, 0.50, 0.54, 0.59, 0.64];
    const A1: [f64; 9] = [0.10, 0.27, 0.32, 0.37, 0.45, 0.50, 0.54, 0.59, 0.64];
    const A2: [f64; 9] = [0.25, 0.28, 0.34, 0.36, 0.40, 0.44, 0.47, 0.53, 0.55];

    fn sk(v: &[f64]) -> Skeleton {
        Skeleton::new(v.to_vec()).unwrap()
    }

    fn group_of(s: &ToxScenario) -> Vec<Ordering> {
        let os = enumerate_orderings(s.grid()).unwrap();
        correct_group(s, &os).unwrap().into_iter().map(|i| os[i].clone()).collect()
    }

    #[test]
    fn first_step_for_scenario5() {
        let s5 = &scenario_library()[4];
        let g = group_of(s5);
        let opts = AmendOptions { step: Some(0.01), ..AmendOptions::default() };
        let out = amend_skeleton(&sk(&A0), s5, &g, ParamDomain::default(), &opts).unwrap();
        assert_eq!(out.skeleton.values()[1], 0.21);
        assert!(out.adjustments.iter().all(|a| a.position == 1));
        let raw = amend_skeleton(&sk(&A0), s5, &g, ParamDomain::default(), &AmendOptions::default()).unwrap();
        let x = raw.skeleton.values()[1];
        assert!(x > 0.20 && x < 0.21);
    }

    #[test]
    fn bound_matches_closed_form() {
        // below the MTC: alpha^b = R and alpha_next^b = 2 theta0 - R
        let (r, next, theta0): (f64, f64, f64) = (0.25, 0.30, 0.3);
        let b = (2.0 * theta0 - r).ln() / f64::ln(next);
        let closed = r.powf(1.0 / b);
        let x = solve_edge(r, next, true, theta0, ParamDomain::default(), 0.01, next).unwrap();
        assert!((x - closed).abs() < 1e-8);
        // above the MTC
        let (r, prev): (f64, f64) = (0.4, 0.3);
        let b = (2.0 * theta0 - r).ln() / f64::ln(prev);
        let closed = r.powf(1.0 / b);
        let x = solve_edge(r, prev, false, theta0, ParamDomain::default(), prev, 0.99).unwrap();
        assert!((x - closed).abs() < 1e-8);
    }

    #[test]
    fn consistent_input_is_unchanged() {
        let s5 = &scenario_library()[4];
        let g = group_of(s5);
        let once = amend_skeleton(&sk(&A0), s5, &g, ParamDomain::default(), &AmendOptions::default()).unwrap();
        let twice = amend_skeleton(&once.skeleton, s5, &g, ParamDomain::default(), &AmendOptions::default()).unwrap();
        assert_eq!(twice.skeleton, once.skeleton);
        assert!(twice.adjustments.is_empty());
    }

    #[test]
    fn rejects_orderings_outside_the_group() {
        let s5 = &scenario_library()[4];
        let os = enumerate_orderings(s5.grid()).unwrap();
        let e = amend_skeleton(&sk(&A0), s5, &os[..1], ParamDomain::default(), &AmendOptions::default());
        assert!(matches!(e, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn multi_scenario_violations_under_alpha1() {
        let lib = scenario_library();
        let rep = check_multi_scenario(&sk(&A1), &lib[..9], ParamDomain::default()).unwrap();
        let got: Vec<(usize, usize, f64, f64)> =
            rep.violations.iter().map(|v| (v.scenario + 1, v.position + 1, v.tox, v.threshold)).collect();
        assert_eq!(got.len(), 3, "{got:?}");
        let s1 = got.iter().find(|g| g.0 == 1).unwrap();
        assert_eq!(s1.2, 0.35);
        assert!((s1.3 - 0.40).abs() < 0.005);
        let s2 = got.iter().find(|g| g.0 == 2).unwrap();
        assert_eq!(s2.2, 0.25);
        assert!((s2.3 - 0.20).abs() < 0.005);
        let s4 = got.iter().find(|g| g.0 == 4).unwrap();
        assert_eq!(s4.2, 0.20);
        assert!(s4.3 < 0.20);
        assert!(rep.uncheckable.is_empty());
    }

    #[test]
    fn multi_scenario_passes_under_alpha2() {
        let lib = scenario_library();
        let rep = check_multi_scenario(&sk(&A2), &lib[..9], ParamDomain::default()).unwrap();
        assert!(rep.ok(), "{:?}", rep.violations);
    }

    #[test]
    fn rounding_goes_outward() {
        assert_eq!(round_out(0.2034, Some(0.01), true), 0.21);
        assert_eq!(round_out(0.2034, Some(0.01), false), 0.2);
        assert_eq!(round_out(0.21, Some(0.01), true), 0.21);
        assert_eq!(round_out(0.2034, None, true), 0.2034);
    }
}
