//! The POCRM design: ordering selection by posterior model probability
//! followed by the CRM under the selected ordering.

mod engine;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crm::{cells_log_likelihood, mle_cells, recommend_among, Cell, ParamDomain, Skeleton};
use crate::error::{Error, Result};
use crate::grid::{Combo, DoseGrid, Ordering};
use crate::rng;
use crate::scenario::ToxScenario;

pub use engine::run_trial;

/// How a tie for the largest posterior is broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    Random,
    LowestIndex,
}

/// An immutable POCRM design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesign", into = "RawDesign")]
pub struct PocrmDesign {
    grid: DoseGrid,
    skeleton: Skeleton,
    orderings: Vec<Ordering>,
    priors: Vec<f64>,
    theta0: f64,
    domain: ParamDomain,
    cohort_size: usize,
    stage1: Vec<Combo>,
    tie_rule: TieRule,
    eq1_literal: bool,
    no_skip: bool,
    ln_priors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    rows: usize,
    cols: usize,
    skeleton: Vec<f64>,
    orderings: Vec<Vec<Combo>>,
    #[serde(default)]
    priors: Option<Vec<f64>>,
    theta0: f64,
    #[serde(default)]
    domain: Option<ParamDomain>,
    #[serde(default = "one")]
    cohort_size: usize,
    #[serde(default)]
    stage1_sequence: Option<Vec<Combo>>,
    #[serde(default)]
    tie_rule: TieRule,
    #[serde(default)]
    eq1_literal: bool,
    #[serde(default)]
    no_skip: bool,
}

fn one() -> usize {
    1
}

impl TryFrom<RawDesign> for PocrmDesign {
    type Error = Error;
    fn try_from(r: RawDesign) -> Result<Self> {
        let grid = DoseGrid::new(r.rows, r.cols)?;
        let orderings =
            r.orderings.into_iter().map(|s| Ordering::new(grid, s)).collect::<Result<Vec<_>>>()?;
        let mut b = PocrmDesign::builder(grid, Skeleton::new(r.skeleton)?, orderings, r.theta0)?
            .cohort_size(r.cohort_size)?
            .tie_rule(r.tie_rule)
            .eq1_literal(r.eq1_literal)
            .no_skip(r.no_skip)
            .domain(r.domain.unwrap_or_default());
        if let Some(p) = r.priors {
            b = b.priors(p)?;
        }
        if let Some(s) = r.stage1_sequence {
            b = b.stage1_sequence(s)?;
        }
        Ok(b)
    }
}

impl From<PocrmDesign> for RawDesign {
    fn from(d: PocrmDesign) -> Self {
        RawDesign {
            rows: d.grid.rows(),
            cols: d.grid.cols(),
            skeleton: d.skeleton.values().to_vec(),
            orderings: d.orderings.iter().map(|o| o.seq().to_vec()).collect(),
            priors: Some(d.priors),
            theta0: d.theta0,
            domain: Some(d.domain),
            cohort_size: d.cohort_size,
            stage1_sequence: Some(d.stage1),
            tie_rule: d.tie_rule,
            eq1_literal: d.eq1_literal,
            no_skip: d.no_skip,
        }
    }
}

impl PocrmDesign {
    /// A design with uniform priors, cohorts of one, the first ordering as
    /// the stage-1 path and random tie breaking. Refine with the setters.
    pub fn builder(grid: DoseGrid, skeleton: Skeleton, orderings: Vec<Ordering>, theta0: f64) -> Result<Self> {
        if orderings.is_empty() {
            return Err(Error::InvalidDesign("no orderings".into()));
        }
        if skeleton.len() != grid.k() {
            return Err(Error::SizeMismatch { expected: grid.k(), got: skeleton.len() });
        }
        if let Some(o) = orderings.iter().find(|o| o.grid() != grid) {
            return Err(Error::InvalidDesign(format!("ordering {o} is on another grid")));
        }
        if !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(Error::InvalidDesign(format!("target {theta0} not in (0, 1)")));
        }
        let m = orderings.len();
        let stage1 = orderings[0].seq().to_vec();
        Ok(PocrmDesign {
            grid,
            skeleton,
            orderings,
            priors: vec![1.0 / m as f64; m],
            theta0,
            domain: ParamDomain::default(),
            cohort_size: 1,
            stage1,
            tie_rule: TieRule::Random,
            eq1_literal: false,
            no_skip: false,
            ln_priors: vec![-(m as f64).ln(); m],
        })
    }

    /// Strictly positive prior weights; they are normalized here.
    pub fn priors(mut self, p: Vec<f64>) -> Result<Self> {
        if p.len() != self.orderings.len() {
            return Err(Error::SizeMismatch { expected: self.orderings.len(), got: p.len() });
        }
        if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidDesign("priors must be positive".into()));
        }
        let s: f64 = p.iter().sum();
        self.priors = p.iter().map(|x| x / s).collect();
        self.ln_priors = self.priors.iter().map(|x| x.ln()).collect();
        Ok(self)
    }

    pub fn cohort_size(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDesign("cohort size must be positive".into()));
        }
        self.cohort_size = n;
        Ok(self)
    }

    /// The stage-1 path must start at `(1,1)`, stay on the grid and never
    /// step to a combination it already passed through or one dominated by
    /// the current combination.
    pub fn stage1_sequence(mut self, seq: Vec<Combo>) -> Result<Self> {
        if seq.first() != Some(&Combo::new(1, 1)) {
            return Err(Error::InvalidDesign("stage-1 path must start at (1,1)".into()));
        }
        for c in &seq {
            self.grid.check(*c)?;
        }
        for w in seq.windows(2) {
            if w[1] != w[0] && w[1].dominates(w[0]) {
                return Err(Error::InvalidDesign(format!("stage-1 path steps down from {} to {}", w[0], w[1])));
            }
        }
        self.stage1 = seq;
        Ok(self)
    }

    pub fn tie_rule(mut self, t: TieRule) -> Self {
        self.tie_rule = t;
        self
    }

    /// Weight orderings by `exp(likelihood)` rather than by the likelihood.
    pub fn eq1_literal(mut self, on: bool) -> Self {
        self.eq1_literal = on;
        self
    }

    /// Restrict stage-2 allocations to at most one position above the
    /// highest position tried under the selected ordering.
    pub fn no_skip(mut self, on: bool) -> Self {
        self.no_skip = on;
        self
    }

    pub fn domain(mut self, d: ParamDomain) -> Self {
        self.domain = d;
        self
    }

    pub fn grid(&self) -> DoseGrid {
        self.grid
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn orderings(&self) -> &[Ordering] {
        &self.orderings
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.priors
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn param_domain(&self) -> ParamDomain {
        self.domain
    }

    pub fn cohort(&self) -> usize {
        self.cohort_size
    }

    pub fn stage1(&self) -> &[Combo] {
        &self.stage1
    }

    pub fn ties(&self) -> TieRule {
        self.tie_rule
    }

    /// Monotone transform applied to the maximized log-likelihood before the
    /// log prior is added.
    pub(crate) fn weight_key(&self, ll: f64, m: usize) -> f64 {
        self.transform(ll) + self.ln_priors[m]
    }

    fn transform(&self, ll: f64) -> f64 {
        if self.eq1_literal {
            ll.exp()
        } else {
            ll
        }
    }
}

/// Skeleton value of every combination under an ordering, by row-major
/// index: the combination at position `l` receives `alpha[l]`.
pub fn reorder_skeleton(skeleton: &Skeleton, ordering: &Ordering) -> Result<Vec<f64>> {
    let g = ordering.grid();
    if skeleton.len() != g.k() {
        return Err(Error::SizeMismatch { expected: g.k(), got: skeleton.len() });
    }
    Ok((0..g.k()).map(|x| skeleton.get(ordering.position_of_index(x))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

/// One treated patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    /// 1-based
    pub patient: usize,
    pub combo: Combo,
    pub dlt: bool,
    /// ordering used for the allocation, absent in stage 1
    pub ordering: Option<usize>,
    pub stage: Stage,
}

/// Accumulated trial data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialState {
    /// patients per combination, by row-major index
    pub n: Vec<u32>,
    /// DLTs per combination, by row-major index
    pub y: Vec<u32>,
    pub history: Vec<PatientRecord>,
    /// cohorts allocated so far in stage 1
    pub stage1_cohorts: usize,
    pub rng_seed: u64,
}

impl TrialState {
    pub fn new(grid: DoseGrid, rng_seed: u64) -> Self {
        TrialState {
            n: vec![0; grid.k()],
            y: vec![0; grid.k()],
            history: Vec::new(),
            stage1_cohorts: 0,
            rng_seed,
        }
    }

    pub fn stage(&self) -> Stage {
        let n: u32 = self.n.iter().sum();
        let y: u32 = self.y.iter().sum();
        if y > 0 && y < n {
            Stage::Two
        } else {
            Stage::One
        }
    }

    pub fn patients(&self) -> usize {
        self.history.len()
    }

    /// Records one outcome at `combo`.
    pub fn record(&mut self, grid: DoseGrid, combo: Combo, dlt: bool, ordering: Option<usize>, stage: Stage) {
        let x = grid.index(combo);
        self.n[x] += 1;
        self.y[x] += dlt as u32;
        let patient = self.history.len() + 1;
        self.history.push(PatientRecord { patient, combo, dlt, ordering, stage });
    }

    /// Trial history as CSV with header
    /// `patient,combo_i,combo_j,outcome,selected_ordering,stage`; the
    /// ordering column is 1-based and empty in stage 1.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("patient,combo_i,combo_j,outcome,selected_ordering,stage\n");
        for r in &self.history {
            let o = r.ordering.map(|m| (m + 1).to_string()).unwrap_or_default();
            let st = match r.stage {
                Stage::One => 1,
                Stage::Two => 2,
            };
            s.push_str(&format!("{},{},{},{},{},{}\n", r.patient, r.combo.i, r.combo.j, r.dlt as u8, o, st));
        }
        s
    }
}

/// Maximized log-likelihood and estimate under one ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingFit {
    pub a_hat: f64,
    pub log_lik: f64,
}

pub(crate) fn cells_for(state: &TrialState, alpha_by_pos: &[f64], o: &Ordering) -> Vec<Cell> {
    (0..state.n.len())
        .filter(|&x| state.n[x] > 0)
        .map(|x| Cell { n: state.n[x] as f64, y: state.y[x] as f64, ln_alpha: alpha_by_pos[o.position_of_index(x)].ln() })
        .collect()
}

/// Fit of every ordering to the current data, each solved from `a = 1`.
pub fn fit_orderings(state: &TrialState, design: &PocrmDesign) -> Result<Vec<OrderingFit>> {
    if state.stage() != Stage::Two {
        return Err(Error::NotHeterogeneous);
    }
    let alpha = design.skeleton.values();
    Ok(design
        .orderings
        .iter()
        .map(|o| {
            let cells = cells_for(state, alpha, o);
            let a_hat = mle_cells(&cells, design.domain, 1.0);
            OrderingFit { a_hat, log_lik: cells_log_likelihood(&cells, a_hat) }
        })
        .collect())
}

/// Posterior probability of each ordering given heterogeneous data.
pub fn ordering_posteriors(state: &TrialState, design: &PocrmDesign) -> Result<Vec<f64>> {
    let fits = fit_orderings(state, design)?;
    let keys: Vec<f64> = fits.iter().enumerate().map(|(m, f)| design.weight_key(f.log_lik, m)).collect();
    let top = keys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = keys.iter().map(|k| (k - top).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Two keys count as tied within this relative tolerance.
pub(crate) fn tied(a: f64, best: f64) -> bool {
    a >= best - 1e-9 * (1.0 + best.abs())
}

/// Picks among tied orderings (given in increasing index order).
pub(crate) fn break_tie(tied: &[usize], rule: TieRule, state: &TrialState) -> usize {
    match rule {
        TieRule::LowestIndex => tied[0],
        TieRule::Random if tied.len() == 1 => tied[0],
        TieRule::Random => {
            let mut r = rng::stream(state.rng_seed, &[1, state.history.len() as u64]);
            tied[r.random_range(0..tied.len())]
        }
    }
}

/// CRM allocation under ordering `m` with estimate `a_hat`.
pub(crate) fn crm_allocation(state: &TrialState, design: &PocrmDesign, m: usize, a_hat: f64) -> Combo {
    let o = &design.orderings[m];
    let alpha = design.skeleton.values();
    let p = if design.no_skip {
        let top = (0..state.n.len()).filter(|&x| state.n[x] > 0).map(|x| o.position_of_index(x)).max().unwrap_or(0);
        recommend_among(alpha, a_hat, design.theta0, |l| l <= top + 1)
    } else {
        recommend_among(alpha, a_hat, design.theta0, |_| true)
    };
    o.at(p)
}

/// The stage-1 combination for the next cohort; the path's last element
/// repeats once it is exhausted.
pub(crate) fn stage1_allocation(state: &TrialState, design: &PocrmDesign) -> Combo {
    design.stage1[state.stage1_cohorts.min(design.stage1.len() - 1)]
}

/// Allocation for the next cohort together with the selected ordering
/// (none in stage 1). Every ordering is refitted from scratch.
pub fn select_and_allocate(state: &TrialState, design: &PocrmDesign) -> (Combo, Option<usize>) {
    if state.stage() == Stage::One {
        return (stage1_allocation(state, design), None);
    }
    let fits = fit_orderings(state, design).expect("stage 2 data");
    let keys: Vec<f64> = fits.iter().enumerate().map(|(m, f)| design.weight_key(f.log_lik, m)).collect();
    let best = keys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..keys.len()).filter(|&m| tied(keys[m], best)).collect();
    let m = break_tie(&ties, design.tie_rule, state);
    (crm_allocation(state, design, m, fits[m].a_hat), Some(m))
}

/// Combination for the next cohort.
pub fn next_allocation(state: &TrialState, design: &PocrmDesign) -> Combo {
    select_and_allocate(state, design).0
}

/// Outcome of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub recommended: Combo,
    pub state: TrialState,
}

/// Reference trial simulation refitting every ordering at every step;
/// [`run_trial`] returns the same result faster.
pub fn run_trial_reference(design: &PocrmDesign, scenario: &ToxScenario, n_patients: usize, seed: u64) -> Result<TrialResult> {
    check_run(design, scenario, n_patients)?;
    let mut state = TrialState::new(design.grid, seed);
    let mut out = rng::stream(seed, &[0]);
    while state.patients() < n_patients {
        let stage = state.stage();
        let (x, m) = select_and_allocate(&state, design);
        if stage == Stage::One {
            state.stage1_cohorts += 1;
        }
        let r = scenario.tox(x);
        for _ in 0..design.cohort_size.min(n_patients - state.patients()) {
            let dlt = out.random::<f64>() < r;
            state.record(design.grid, x, dlt, m, stage);
        }
    }
    let recommended = next_allocation(&state, design);
    Ok(TrialResult { recommended, state })
}

pub(crate) fn check_run(design: &PocrmDesign, scenario: &ToxScenario, n_patients: usize) -> Result<()> {
    if scenario.grid() != design.grid {
        return Err(Error::InvalidArgument("scenario and design grids differ".into()));
    }
    if n_patients < design.cohort_size {
        return Err(Error::InvalidArgument(format!(
            "{n_patients} patients is fewer than one cohort of {}",
            design.cohort_size
        )));
    }
    Ok(())
}
