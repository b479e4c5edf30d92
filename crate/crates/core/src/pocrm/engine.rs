//! Incremental trial simulation.
//!
//! Orderings that agree on the skeleton values of every visited
//! combination have identical likelihoods and are fitted once as a group.
//! Each group keeps its log-likelihood, score and curvature at the last
//! solved estimate, updated per patient in constant time. Because the
//! log-likelihood is concave in `a` with curvature decreasing in `a`, these
//! give an upper bound on the group's maximum, and only groups whose bound
//! can compete with the leader are refitted.

use std::collections::BTreeMap;

use rand::Rng;

use super::{
    break_tie, check_run, crm_allocation, stage1_allocation, tied, PocrmDesign, Stage, TrialResult, TrialState,
};
use crate::crm::{cells_log_likelihood, mle_cells, Cell};
use crate::error::Result;
use crate::grid::Combo;
use crate::rng;
use crate::scenario::ToxScenario;

/// Relative width, in `a`, of the window the curvature bound covers.
const WINDOW: f64 = 0.4;

struct Group {
    members: Vec<usize>,
    /// log skeleton value by row-major index
    ln_alpha: Vec<f64>,
    best_ln_prior: f64,
    a0: f64,
    a_plus: f64,
    a_minus: f64,
    /// per combination: ln(1 - u), score and curvature increments of a
    /// non-DLT at `a0`, curvature increment at `a_plus`
    ln_miss: Vec<f64>,
    d_miss: Vec<f64>,
    c_miss: Vec<f64>,
    c_miss_plus: Vec<f64>,
    ll: f64,
    score: f64,
    curv: f64,
    curv_plus: f64,
    exact: bool,
}

impl Group {
    fn new(members: Vec<usize>, ln_alpha: Vec<f64>, best_ln_prior: f64, a0: f64) -> Self {
        let k = ln_alpha.len();
        Group {
            members,
            ln_alpha,
            best_ln_prior,
            a0,
            a_plus: a0,
            a_minus: a0,
            ln_miss: vec![0.0; k],
            d_miss: vec![0.0; k],
            c_miss: vec![0.0; k],
            c_miss_plus: vec![0.0; k],
            ll: 0.0,
            score: 0.0,
            curv: 0.0,
            curv_plus: 0.0,
            exact: false,
        }
    }

    fn solve(&mut self, state: &TrialState, design: &PocrmDesign) {
        let cells: Vec<Cell> = (0..state.n.len())
            .filter(|&x| state.n[x] > 0)
            .map(|x| Cell { n: state.n[x] as f64, y: state.y[x] as f64, ln_alpha: self.ln_alpha[x] })
            .collect();
        let a = mle_cells(&cells, design.param_domain(), self.a0);
        self.a0 = a;
        self.a_plus = a * WINDOW.exp();
        self.a_minus = a * (-WINDOW).exp();
        for (x, &la) in self.ln_alpha.iter().enumerate() {
            let u = (a * la).exp();
            let odds = u / (1.0 - u);
            self.ln_miss[x] = (-u).ln_1p();
            self.d_miss[x] = la * odds;
            self.c_miss[x] = la * la * odds / (1.0 - u);
            let up = (self.a_plus * la).exp();
            self.c_miss_plus[x] = la * la * up / ((1.0 - up) * (1.0 - up));
        }
        self.ll = cells_log_likelihood(&cells, a);
        self.score = 0.0;
        self.curv = 0.0;
        self.curv_plus = 0.0;
        for (x, c) in (0..state.n.len()).filter(|&x| state.n[x] > 0).zip(&cells) {
            let miss = c.n - c.y;
            self.score += c.y * c.ln_alpha - miss * self.d_miss[x];
            self.curv += miss * self.c_miss[x];
            self.curv_plus += miss * self.c_miss_plus[x];
        }
        self.exact = true;
    }

    fn add(&mut self, x: usize, dlt: bool) {
        if dlt {
            self.ll += self.a0 * self.ln_alpha[x];
            self.score += self.ln_alpha[x];
        } else {
            self.ll += self.ln_miss[x];
            self.score -= self.d_miss[x];
            self.curv += self.c_miss[x];
            self.curv_plus += self.c_miss_plus[x];
        }
        self.exact = false;
    }

    /// Upper bound on the maximized log-likelihood and an interval holding
    /// the maximizer; `None` when the maximum may lie outside the window.
    fn bound(&self) -> Option<(f64, f64, f64)> {
        if self.exact {
            return Some((self.ll, self.a0, self.a0));
        }
        let (kappa, width) = if self.score >= 0.0 {
            (self.curv_plus, self.a_plus - self.a0)
        } else {
            (self.curv, self.a0 - self.a_minus)
        };
        if kappa > 0.0 && self.score.abs() <= kappa * width {
            let step = self.score / kappa;
            let (lo, hi) = if step >= 0.0 { (self.a0, self.a0 + step) } else { (self.a0 + step, self.a0) };
            Some((self.ll + self.score * step / 2.0, lo, hi))
        } else {
            None
        }
    }

    fn upper(&self) -> f64 {
        self.bound().map_or(f64::INFINITY, |b| b.0)
    }
}

struct Engine<'d> {
    design: &'d PocrmDesign,
    visited: Vec<bool>,
    groups: Vec<Group>,
}

impl<'d> Engine<'d> {
    fn new(design: &'d PocrmDesign) -> Self {
        Engine { design, visited: vec![false; design.grid().k()], groups: Vec::new() }
    }

    fn regroup(&mut self, state: &TrialState) {
        let d = self.design;
        let alpha = d.skeleton().values();
        let k = d.grid().k();
        let mut warm = vec![1.0; d.orderings().len()];
        for g in &self.groups {
            for &m in &g.members {
                warm[m] = g.a0;
            }
        }
        let mut by_sig: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (m, o) in d.orderings().iter().enumerate() {
            let sig = (0..k).filter(|&x| self.visited[x]).map(|x| o.position_of_index(x)).collect();
            by_sig.entry(sig).or_default().push(m);
        }
        let mut groups: Vec<Group> = by_sig
            .into_values()
            .map(|members| {
                let o = &d.orderings()[members[0]];
                let ln_alpha = (0..k).map(|x| alpha[o.position_of_index(x)].ln()).collect();
                let best = members.iter().map(|&m| d.ln_priors[m]).fold(f64::NEG_INFINITY, f64::max);
                let a0 = warm[members[0]];
                Group::new(members, ln_alpha, best, a0)
            })
            .collect();
        for g in &mut groups {
            g.solve(state, d);
        }
        self.groups = groups;
    }

    fn add(&mut self, state: &TrialState, x: usize, dlt: bool) {
        if !self.visited[x] {
            self.visited[x] = true;
            if !self.groups.is_empty() {
                self.regroup(state);
                return;
            }
        }
        for g in &mut self.groups {
            g.add(x, dlt);
        }
    }

    /// Key of group `g` for the best prior among its members, evaluated at
    /// log-likelihood `ll`.
    fn group_key(&self, g: &Group, ll: f64) -> f64 {
        self.design.transform(ll) + g.best_ln_prior
    }

    fn select(&mut self, state: &TrialState) -> (Combo, usize) {
        if self.groups.is_empty() {
            self.regroup(state);
        }
        loop {
            let uppers: Vec<f64> = self.groups.iter().map(|g| self.group_key(g, g.upper())).collect();
            let lead = (0..uppers.len()).fold(0, |b, i| if uppers[i] > uppers[b] { i } else { b });
            if !self.groups[lead].exact {
                if let Some(pick) = self.settle_without_refit(state, lead, &uppers) {
                    return pick;
                }
                self.groups[lead].solve(state, self.design);
                continue;
            }
            let best = uppers[lead];
            let mut refit = false;
            for i in 0..self.groups.len() {
                if i != lead && !self.groups[i].exact && tied(uppers[i], best) {
                    self.groups[i].solve(state, self.design);
                    refit = true;
                }
            }
            if refit {
                continue;
            }
            let mut ties: Vec<(usize, usize)> = Vec::new();
            for (gi, g) in self.groups.iter().enumerate() {
                if !(g.exact && tied(uppers[gi], best)) {
                    continue;
                }
                for &m in &g.members {
                    if tied(self.design.weight_key(g.ll, m), best) {
                        ties.push((m, gi));
                    }
                }
            }
            ties.sort_unstable();
            let ms: Vec<usize> = ties.iter().map(|t| t.0).collect();
            let m = break_tie(&ms, self.design.ties(), state);
            let gi = ties.iter().find(|t| t.0 == m).expect("chosen among ties").1;
            let a = self.groups[gi].a0;
            return (crm_allocation(state, self.design, m, a), m);
        }
    }
}

impl Engine<'_> {
    /// Selection and allocation when the stale fit of the leading group
    /// already beats every other group's bound and the allocation is the
    /// same at both ends of the interval holding its estimate. The
    /// recommended position is monotone in `a`, so the ends decide it.
    fn settle_without_refit(&self, state: &TrialState, lead: usize, uppers: &[f64]) -> Option<(Combo, usize)> {
        let g = &self.groups[lead];
        let (_, lo, hi) = g.bound()?;
        let low = self.group_key(g, g.ll);
        let clear = (0..uppers.len()).all(|i| i == lead || !tied(uppers[i], low));
        if !clear {
            return None;
        }
        let ms: Vec<usize> =
            g.members.iter().copied().filter(|&m| tied(self.design.weight_key(g.ll, m), low)).collect();
        let m = break_tie(&ms, self.design.ties(), state);
        let d = self.design.param_domain();
        let at_lo = crm_allocation(state, self.design, m, lo.clamp(d.lo(), d.hi()));
        let at_hi = crm_allocation(state, self.design, m, hi.clamp(d.lo(), d.hi()));
        (at_lo == at_hi).then_some((at_lo, m))
    }
}

/// Simulates one trial of `n_patients` under `scenario`. Outcomes are
/// Bernoulli draws from a stream determined by `seed`; the recommendation
/// is the allocation that would follow the last cohort.
pub fn run_trial(design: &PocrmDesign, scenario: &ToxScenario, n_patients: usize, seed: u64) -> Result<TrialResult> {
    check_run(design, scenario, n_patients)?;
    let grid = design.grid();
    let mut state = TrialState::new(grid, seed);
    let mut out = rng::stream(seed, &[0]);
    let mut engine = Engine::new(design);
    let next = |state: &mut TrialState, engine: &mut Engine| -> (Combo, Option<usize>, Stage) {
        match state.stage() {
            Stage::One => (stage1_allocation(state, design), None, Stage::One),
            Stage::Two => {
                let (x, m) = engine.select(state);
                (x, Some(m), Stage::Two)
            }
        }
    };
    while state.patients() < n_patients {
        let (x, m, stage) = next(&mut state, &mut engine);
        if stage == Stage::One {
            state.stage1_cohorts += 1;
        }
        let r = scenario.tox(x);
        let xi = grid.index(x);
        for _ in 0..design.cohort().min(n_patients - state.patients()) {
            let dlt = out.random::<f64>() < r;
            state.record(grid, x, dlt, m, stage);
            engine.add(&state, xi, dlt);
        }
    }
    let recommended = next(&mut state, &mut engine).0;
    Ok(TrialResult { recommended, state })
}
