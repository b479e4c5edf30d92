//! Subcommand bodies.

use std::path::PathBuf;

use anyhow::bail;
use pocrm_core::consistency::{calibrate_skeleton, check_pocrm_consistency, CalibrateOptions, ConsistencyReport};
use pocrm_core::grid::{enumerate_orderings, DoseGrid, Ordering};
use pocrm_core::scenario::ToxScenario;
use pocrm_core::selector::{
    coverage_order_scenarios, coverage_scenarios, enumerate_order_scenarios, select_scenario_specific, Selection,
};
use pocrm_core::sim::{estimate_pcs, pcs_curve, po_benchmark, PcsResult};
use serde_json::json;

use crate::config::{config_err, RunConfig};
use crate::output::{f, Output};
use crate::{Common, Mode};

/// Loads the config and applies command-line and environment overrides.
pub fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Ok(s) = std::env::var("POCRM_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| config_err(format!("POCRM_SEED: not an integer: {s:?}")))?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if let Some(n) = common.n {
        cfg.n_patients = n;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn enumerate(rows: usize, cols: usize, out: Option<PathBuf>) -> anyhow::Result<()> {
    let grid = DoseGrid::new(rows, cols).map_err(|e| config_err(format!("rows/cols: {e}")))?;
    let all = enumerate_orderings(grid)?;
    println!("{}", all.len());
    if let Some(dir) = out {
        let mut o = Output::create(&dir)?;
        write_orderings(&mut o, &all)?;
        o.finish("orders enumerate", json!({ "rows": rows, "cols": cols }), 0)?;
    }
    Ok(())
}

pub fn write_orderings(o: &mut Output, all: &[Ordering]) -> anyhow::Result<()> {
    let rows: Vec<Vec<String>> = all.iter().enumerate().map(|(m, x)| vec![(m + 1).to_string(), x.to_string()]).collect();
    o.csv("orderings.csv", &["ordering".into(), "sequence".into()], &rows)
}

pub fn selections_rows(sel: &[Selection], cols: &[usize]) -> Vec<Vec<String>> {
    sel.iter()
        .enumerate()
        .map(|(r, s)| {
            let ids: Vec<String> = s.columns.iter().map(|&c| (cols[c] + 1).to_string()).collect();
            vec![(r + 1).to_string(), s.columns.len().to_string(), f(s.n_consis), ids.join(" ")]
        })
        .collect()
}

pub const SELECTION_HEADER: [&str; 4] = ["rank", "size", "n_consis", "orderings"];

pub fn select(common: &Common, mode: Mode, budget: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = resolve(common)?;
    if budget.is_some() {
        cfg.budget = budget;
    }
    let grid = cfg.grid()?;
    let all = enumerate_orderings(grid)?;
    let scen: Vec<ToxScenario> = cfg.scenarios()?.into_iter().map(|(_, s)| s).collect();
    let by_scenario = coverage_scenarios(&all, &scen)?;
    let mut o = Output::create(&cfg.out_dir)?;
    o.text("coverage_scenarios.csv", &by_scenario.to_csv())?;
    let picks = match mode {
        Mode::Specific => select_scenario_specific(&by_scenario, cfg.budget)?,
        Mode::Agnostic => {
            let rows = enumerate_order_scenarios(grid)?;
            let m = coverage_order_scenarios(&all, &rows);
            o.text("coverage_order_scenarios.csv", &m.to_csv())?;
            pocrm_core::selector::select_scenario_agnostic(grid, &all, cfg.budget, Some(&by_scenario))?
        }
    };
    let header: Vec<String> = SELECTION_HEADER.iter().map(|s| s.to_string()).collect();
    o.csv("selections.csv", &header, &selections_rows(&picks, &by_scenario.columns))?;
    let best = &picks[0];
    println!(
        "{} covers of size {}; best: orderings {} (n.consis {:.3})",
        picks.len(),
        best.columns.len(),
        best.columns.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(" "),
        best.n_consis
    );
    let mode = match mode {
        Mode::Agnostic => "agnostic",
        Mode::Specific => "specific",
    };
    o.finish("orders select", json!({ "config": config_json(&cfg), "mode": mode }), cfg.seed)
}

pub fn report_rows(ids: &[usize], reports: &[ConsistencyReport]) -> Vec<Vec<String>> {
    ids.iter()
        .zip(reports)
        .map(|(id, r)| {
            vec![
                id.to_string(),
                r.verdict.to_string(),
                r.crm_ok().to_string(),
                r.group.len().to_string(),
                r.eq2_violations().count().to_string(),
            ]
        })
        .collect()
}

pub const REPORT_HEADER: [&str; 5] = ["scenario_id", "verdict", "crm_ok", "group_size", "eq2_violations"];

pub fn check(common: &Common, assert: bool) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let sk = cfg.skeleton()?;
    let ords = cfg.orderings()?;
    let scen = cfg.scenarios()?;
    let mut sampler = cfg.sampler;
    if common.seed.is_some() || std::env::var("POCRM_SEED").is_ok() {
        sampler.seed = cfg.seed;
    }
    let mut reports = Vec::new();
    for (id, s) in &scen {
        let r = check_pocrm_consistency(&sk, &ords, s, cfg.domain, &sampler)?;
        println!(
            "scenario {id}: {} (correct group {}, {} failing comparisons)",
            if r.verdict { "consistent" } else { "inconsistent" },
            r.group.len(),
            r.eq2_violations().count()
        );
        reports.push(r);
    }
    let ids: Vec<usize> = scen.iter().map(|(i, _)| *i).collect();
    let mut o = Output::create(&cfg.out_dir)?;
    let header: Vec<String> = REPORT_HEADER.iter().map(|s| s.to_string()).collect();
    o.csv("consistency.csv", &header, &report_rows(&ids, &reports))?;
    o.json("consistency.json", &reports)?;
    o.finish("consistency check", json!({ "config": config_json(&cfg), "sampler": sampler }), sampler.seed)?;
    if assert && reports.iter().any(|r| !r.verdict) {
        bail!("inconsistent under at least one scenario");
    }
    Ok(())
}

pub fn calibrate(common: &Common, max_iter: Option<usize>, step: Option<f64>) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let sk = cfg.skeleton()?;
    let ords = cfg.orderings()?;
    let scen: Vec<ToxScenario> = cfg.scenarios()?.into_iter().map(|(_, s)| s).collect();
    let mut opts = CalibrateOptions { sampler: cfg.sampler, ..CalibrateOptions::default() };
    opts.search.seed = cfg.sampler.seed;
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    if let Some(s) = step {
        if !(s > 0.0 && s < 0.5) {
            return Err(config_err("--step: must lie in (0, 0.5)"));
        }
        opts.amend.step = Some(s);
    }
    let cal = calibrate_skeleton(&sk, &scen, &ords, cfg.domain, &opts)?;
    let vals: Vec<String> = cal.skeleton.values().iter().map(|v| format!("{v:.4}")).collect();
    println!("skeleton ({}): {}", if cal.passed { "consistent" } else { "not consistent" }, vals.join(", "));
    let mut o = Output::create(&cfg.out_dir)?;
    o.json("calibration.json", &cal)?;
    o.finish("skeleton calibrate", json!({ "config": config_json(&cfg), "options": opts }), cfg.sampler.seed)
}

pub fn pcs_header(k_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> =
        ["scenario_id", "design_id", "N", "replicates", "pcs", "mc_se"].iter().map(|s| s.to_string()).collect();
    h.extend(k_names.iter().map(|n| format!("sel_{n}")));
    h
}

pub fn combo_names(grid: DoseGrid) -> Vec<String> {
    grid.combos().map(|c| format!("{}_{}", c.i, c.j)).collect()
}

pub fn pcs_row(id: usize, design: &str, r: &PcsResult) -> Vec<String> {
    let mut row =
        vec![id.to_string(), design.to_string(), r.n_patients.to_string(), r.replicates.to_string(), f(r.pcs), f(r.mc_se)];
    row.extend(r.per_combo_selection.iter().map(|&x| f(x)));
    row
}

pub fn pcs(common: &Common) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let d = cfg.design()?;
    let mut rows = Vec::new();
    for (id, s) in cfg.scenarios()? {
        let r = estimate_pcs(&d, &s, cfg.n_patients, cfg.replicates, cfg.seed)?;
        println!("scenario {id}: PCS {:.1}% (se {:.1})", 100.0 * r.pcs, 100.0 * r.mc_se);
        rows.push(pcs_row(id, "config", &r));
    }
    let mut o = Output::create(&cfg.out_dir)?;
    o.csv("pcs.csv", &pcs_header(&combo_names(cfg.grid()?)), &rows)?;
    o.finish("simulate pcs", json!({ "config": config_json(&cfg) }), cfg.seed)
}

pub fn curve(common: &Common, n_grid: Option<Vec<usize>>) -> anyhow::Result<()> {
    let mut cfg = resolve(common)?;
    if n_grid.is_some() {
        cfg.n_grid = n_grid;
        cfg.validate()?;
    }
    let grid_n = cfg.n_grid.clone().ok_or_else(|| config_err("n_grid: required by simulate curve"))?;
    let d = cfg.design()?;
    let mut rows = Vec::new();
    for (id, s) in cfg.scenarios()? {
        for r in pcs_curve(&d, &s, &grid_n, cfg.replicates, cfg.seed)? {
            println!("scenario {id}, N = {}: PCS {:.1}%", r.n_patients, 100.0 * r.pcs);
            rows.push(pcs_row(id, "config", &r));
        }
    }
    let mut o = Output::create(&cfg.out_dir)?;
    o.csv("curve.csv", &pcs_header(&combo_names(cfg.grid()?)), &rows)?;
    o.finish("simulate curve", json!({ "config": config_json(&cfg) }), cfg.seed)
}

pub fn benchmark(common: &Common) -> anyhow::Result<()> {
    let cfg = resolve(common)?;
    let mut rows = Vec::new();
    for (id, s) in cfg.scenarios()? {
        let r = po_benchmark(&s, cfg.n_patients, cfg.replicates, s.theta0(), cfg.seed)?;
        println!("scenario {id}: benchmark PCS {:.1}%", 100.0 * r.pcs);
        rows.push(pcs_row(id, "benchmark", &r));
    }
    let mut o = Output::create(&cfg.out_dir)?;
    o.csv("benchmark.csv", &pcs_header(&combo_names(cfg.grid()?)), &rows)?;
    o.finish("benchmark", json!({ "config": config_json(&cfg) }), cfg.seed)
}
