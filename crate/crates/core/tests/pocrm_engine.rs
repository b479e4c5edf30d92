mod common;

use pocrm_core::crm::Skeleton;
use pocrm_core::grid::{enumerate_orderings, wages_orderings, Combo, DoseGrid, Ordering};
use pocrm_core::pocrm::{
    ordering_posteriors, reorder_skeleton, run_trial, run_trial_reference, PocrmDesign, Stage, TieRule, TrialState,
};
use pocrm_core::scenario::ToxScenario;
use pocrm_core::sim::{scenario_library, SKELETON_BASE, SKELETON_CALIBRATED};

fn g33() -> DoseGrid {
    DoseGrid::new(3, 3).unwrap()
}

fn design(sk: &[f64], orderings: Vec<Ordering>) -> PocrmDesign {
    PocrmDesign::builder(g33(), Skeleton::new(sk.to_vec()).unwrap(), orderings, 0.3).unwrap()
}

#[test]
fn fast_engine_matches_reference() {
    let lib = scenario_library();
    let all = enumerate_orderings(g33()).unwrap();
    let designs = [
        design(&SKELETON_BASE, all.clone()),
        design(&SKELETON_CALIBRATED, wages_orderings(g33()).unwrap()),
        design(&SKELETON_BASE, all.clone()).tie_rule(TieRule::LowestIndex).cohort_size(3).unwrap(),
        design(&SKELETON_BASE, all[..10].to_vec()).no_skip(true),
    ];
    for (di, d) in designs.iter().enumerate() {
        for (si, s) in lib.iter().enumerate().step_by(3) {
            for seed in 0..6u64 {
                let a = run_trial(d, s, 45, seed).unwrap();
                let b = run_trial_reference(d, s, 45, seed).unwrap();
                assert_eq!(a, b, "design {di}, scenario {}, seed {seed}", si + 1);
            }
        }
    }
}

#[test]
fn single_ordering_reduces_to_crm() {
    let n = common::crm_reduction(5, 4).unwrap();
    assert_eq!(n, 9 * 9 * 4);
    let o = &enumerate_orderings(g33()).unwrap()[7];
    let by_index = reorder_skeleton(&Skeleton::new(SKELETON_BASE.to_vec()).unwrap(), o).unwrap();
    for (l, c) in o.seq().iter().enumerate() {
        assert_eq!(by_index[g33().index(*c)], SKELETON_BASE[l]);
    }
}

#[test]
fn posteriors_are_normalized_and_favor_fitting_orderings() {
    let g = g33();
    let all = enumerate_orderings(g).unwrap();
    let d = design(&SKELETON_BASE, all.clone());
    let mut st = TrialState::new(g, 3);
    let obs = [((1, 1), false), ((2, 1), false), ((1, 2), true), ((2, 1), false), ((3, 1), false), ((3, 1), false)];
    for ((i, j), dlt) in obs {
        st.record(g, Combo::new(i, j), dlt, None, Stage::One);
    }
    let p = ordering_posteriors(&st, &d).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // (1,2) toxic while (3,1) is not: orderings placing (1,2) late fit better
    let c = Combo::new(1, 2);
    let late = (0..all.len()).max_by_key(|&m| all[m].position(c)).unwrap();
    let early = (0..all.len()).min_by_key(|&m| all[m].position(c)).unwrap();
    assert!(p[late] > p[early]);
}

#[test]
fn history_and_stage_bookkeeping() {
    let lib = scenario_library();
    let d = design(&SKELETON_BASE, wages_orderings(g33()).unwrap());
    let t = run_trial(&d, &lib[4], 30, 11).unwrap();
    assert_eq!(t.state.patients(), 30);
    let csv = t.state.history_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "patient,combo_i,combo_j,outcome,selected_ordering,stage");
    assert_eq!(lines.count(), 30);
    let first_two = t.state.history.iter().position(|r| r.stage == Stage::Two);
    if let Some(p) = first_two {
        assert!(t.state.history[..p].iter().all(|r| r.ordering.is_none()));
        assert!(t.state.history[p..].iter().all(|r| r.stage == Stage::Two && r.ordering.is_some()));
    }
    // stage 1 climbs the first ordering
    let o = &d.orderings()[0];
    for (q, r) in t.state.history.iter().take_while(|r| r.stage == Stage::One).enumerate() {
        assert_eq!(r.combo, o.at(q.min(8)));
    }
}

#[test]
fn design_round_trips_through_json() {
    let d = design(&SKELETON_BASE, wages_orderings(g33()).unwrap()).priors(vec![1.0, 2.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
    let js = serde_json::to_string(&d).unwrap();
    let back: PocrmDesign = serde_json::from_str(&js).unwrap();
    assert_eq!(back.orderings(), d.orderings());
    assert_eq!(back.skeleton(), d.skeleton());
    assert_eq!(back.stage1(), d.stage1());
    for (a, b) in back.prior_weights().iter().zip(d.prior_weights()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((d.prior_weights()[1] - 2.0 / 7.0).abs() < 1e-12);
    let bad = js.replace("\"theta0\"", "\"theta_zero\"");
    assert!(serde_json::from_str::<PocrmDesign>(&bad).is_err());
}

#[test]
fn builder_validation() {
    let all = enumerate_orderings(g33()).unwrap();
    let sk = Skeleton::new(SKELETON_BASE.to_vec()).unwrap();
    assert!(PocrmDesign::builder(g33(), sk.clone(), vec![], 0.3).is_err());
    assert!(PocrmDesign::builder(g33(), sk.clone(), all.clone(), 1.3).is_err());
    let d = PocrmDesign::builder(g33(), sk.clone(), all.clone(), 0.3).unwrap();
    assert!(d.clone().priors(vec![1.0; 41]).is_err());
    assert!(d.clone().priors(vec![0.0; 42]).is_err());
    assert!(d.clone().cohort_size(0).is_err());
    // stage 1 must start at the lowest combination and never step down
    assert!(d.clone().stage1_sequence(vec![Combo::new(2, 1)]).is_err());
    assert!(d.clone().stage1_sequence(vec![Combo::new(1, 1), Combo::new(2, 1), Combo::new(1, 1)]).is_err());
    assert!(d.stage1_sequence(vec![Combo::new(1, 1), Combo::new(1, 2), Combo::new(2, 2)]).is_ok());
    let small = PocrmDesign::builder(DoseGrid::new(2, 2).unwrap(), Skeleton::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        enumerate_orderings(DoseGrid::new(2, 2).unwrap()).unwrap(), 0.3).unwrap();
    assert!(run_trial(&small, &scenario_library()[0], 10, 0).is_err());
}

#[test]
fn certain_scenario_selects_its_only_candidate() {
    // every combination but (1,1) is far above the target
    let s = ToxScenario::from_rows(&[&[0.3, 0.9, 0.95], &[0.9, 0.95, 0.97], &[0.95, 0.97, 0.99]], 0.3).unwrap();
    let d = design(&SKELETON_BASE, enumerate_orderings(g33()).unwrap());
    let hits = (0..40).filter(|&seed| run_trial(&d, &s, 60, seed).unwrap().recommended == Combo::new(1, 1)).count();
    assert!(hits >= 32, "{hits}");
}
