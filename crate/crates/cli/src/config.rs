//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use pocrm_core::consistency::Sampler;
use pocrm_core::crm::{ParamDomain, Skeleton};
use pocrm_core::grid::{enumerate_orderings, wages_orderings, Combo, DoseGrid, Ordering};
use pocrm_core::pocrm::{PocrmDesign, TieRule};
use pocrm_core::scenario::ToxScenario;
use pocrm_core::selector::{coverage_scenarios, select_scenario_agnostic, select_scenario_specific};
use pocrm_core::sim::scenario_library;
use serde::{Deserialize, Serialize};

/// Invalid or missing configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderingSpec {
    /// `all`, `wages6`, `select:agnostic` or `select:specific`
    Named(String),
    /// 1-based positions in the enumeration of all orderings
    Indices(Vec<usize>),
    Explicit(Vec<Vec<Combo>>),
}

impl Default for OrderingSpec {
    fn default() -> Self {
        OrderingSpec::Named("all".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "three")]
    pub rows: usize,
    #[serde(default = "three")]
    pub cols: usize,
    #[serde(default = "theta0")]
    pub theta0: f64,
    #[serde(default)]
    pub skeleton: Option<Vec<f64>>,
    #[serde(default)]
    pub orderings: OrderingSpec,
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub cohort_size: usize,
    #[serde(default)]
    pub stage1: Option<Vec<Combo>>,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default)]
    pub domain: ParamDomain,
    #[serde(default = "n_patients")]
    pub n_patients: usize,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default = "replicates")]
    pub replicates: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// built-in scenario ids; all of them when neither this nor
    /// `scenario_csv` is given
    #[serde(default)]
    pub scenarios: Option<Vec<usize>>,
    #[serde(default)]
    pub scenario_csv: Option<PathBuf>,
    #[serde(default)]
    pub sampler: Sampler,
    /// cover size for `orders select`
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "out_dir")]
    pub out_dir: PathBuf,
}

fn three() -> usize {
    3
}
fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn theta0() -> f64 {
    0.3
}
fn n_patients() -> usize {
    60
}
fn replicates() -> usize {
    2000
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.grid()?;
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(config_err(format!("theta0: {} is not in (0, 1)", self.theta0)));
        }
        if let Some(s) = &self.skeleton {
            Skeleton::new(s.clone()).map_err(|e| config_err(format!("skeleton: {e}")))?;
        }
        if self.cohort_size == 0 {
            return Err(config_err("cohort_size: must be at least 1"));
        }
        if self.n_patients == 0 {
            return Err(config_err("n_patients: must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(config_err("replicates: must be at least 1"));
        }
        if let Some(g) = &self.n_grid {
            if g.is_empty() || g[0] == 0 || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(config_err("n_grid: must be nonempty, positive and strictly increasing"));
            }
        }
        if self.sampler.n_draws == 0 || !(0.0..1.0).contains(&self.sampler.mtc_share) {
            return Err(config_err("sampler: n_draws must be positive and mtc_share in [0, 1)"));
        }
        if let Some(ids) = &self.scenarios {
            if let Some(&bad) = ids.iter().find(|&&i| i == 0 || i > scenario_library().len()) {
                return Err(config_err(format!("scenarios: no built-in scenario {bad}")));
            }
        }
        if let Some(p) = &self.scenario_csv {
            if !p.exists() {
                return Err(config_err(format!("scenario_csv: {} does not exist", p.display())));
            }
        }
        if let OrderingSpec::Named(n) = &self.orderings {
            if !["all", "wages6", "select:agnostic", "select:specific"].contains(&n.as_str()) {
                return Err(config_err(format!("orderings: unknown set {n:?}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> anyhow::Result<DoseGrid> {
        DoseGrid::new(self.rows, self.cols).map_err(|e| config_err(format!("rows/cols: {e}")))
    }

    pub fn skeleton(&self) -> anyhow::Result<Skeleton> {
        let s = self.skeleton.clone().ok_or_else(|| config_err("skeleton: required by this command"))?;
        let sk = Skeleton::new(s).map_err(|e| config_err(format!("skeleton: {e}")))?;
        let k = self.grid()?.k();
        if sk.len() != k {
            return Err(config_err(format!("skeleton: expected {k} values, got {}", sk.len())));
        }
        Ok(sk)
    }

    /// Scenarios paired with their ids.
    pub fn scenarios(&self) -> anyhow::Result<Vec<(usize, ToxScenario)>> {
        let grid = self.grid()?;
        if let Some(p) = &self.scenario_csv {
            return read_scenarios(p, grid);
        }
        let lib = scenario_library();
        let ids: Vec<usize> = self.scenarios.clone().unwrap_or_else(|| (1..=lib.len()).collect());
        let out: Vec<(usize, ToxScenario)> = ids.iter().map(|&i| (i, lib[i - 1].clone())).collect();
        if out.iter().any(|(_, s)| s.grid() != grid) {
            return Err(config_err("scenarios: built-in scenarios are 3x3; use scenario_csv for other grids"));
        }
        Ok(out)
    }

    /// The whole enumeration plus the chosen subset of it (or the explicit
    /// list).
    pub fn orderings(&self) -> anyhow::Result<Vec<Ordering>> {
        let grid = self.grid()?;
        let all = || enumerate_orderings(grid).map_err(anyhow::Error::from);
        Ok(match &self.orderings {
            OrderingSpec::Named(n) => match n.as_str() {
                "all" => all()?,
                "wages6" => wages_orderings(grid).map_err(|e| config_err(format!("orderings: {e}")))?,
                "select:agnostic" | "select:specific" => {
                    let all = all()?;
                    let scen: Vec<ToxScenario> = self.scenarios()?.into_iter().map(|(_, s)| s).collect();
                    let m = coverage_scenarios(&all, &scen)?;
                    let pick = if n == "select:agnostic" {
                        select_scenario_agnostic(grid, &all, None, Some(&m))?
                    } else {
                        select_scenario_specific(&m, None)?
                    };
                    pick[0].columns.iter().map(|&c| all[c].clone()).collect()
                }
                _ => unreachable!("validated"),
            },
            OrderingSpec::Indices(ix) => {
                let all = all()?;
                ix.iter()
                    .map(|&i| {
                        all.get(i.wrapping_sub(1))
                            .cloned()
                            .ok_or_else(|| config_err(format!("orderings: no ordering {i} among {}", all.len())))
                    })
                    .collect::<anyhow::Result<_>>()?
            }
            OrderingSpec::Explicit(list) => list
                .iter()
                .map(|s| Ordering::new(grid, s.clone()).map_err(|e| config_err(format!("orderings: {e}"))))
                .collect::<anyhow::Result<_>>()?,
        })
    }

    pub fn design(&self) -> anyhow::Result<PocrmDesign> {
        self.design_with(self.skeleton()?, self.orderings()?)
    }

    pub fn design_with(&self, skeleton: Skeleton, orderings: Vec<Ordering>) -> anyhow::Result<PocrmDesign> {
        let mut d = PocrmDesign::builder(self.grid()?, skeleton, orderings, self.theta0)
            .map_err(|e| config_err(format!("design: {e}")))?
            .cohort_size(self.cohort_size)?
            .tie_rule(self.tie_rule)
            .domain(self.domain);
        if let Some(p) = &self.priors {
            d = d.priors(p.clone()).map_err(|e| config_err(format!("priors: {e}")))?;
        }
        if let Some(s) = &self.stage1 {
            d = d.stage1_sequence(s.clone()).map_err(|e| config_err(format!("stage1: {e}")))?;
        }
        Ok(d)
    }
}

/// One scenario per record: `id,theta0` then the toxicities in row-major
/// order (agent A fastest). A header line is expected.
pub fn read_scenarios(path: &Path, grid: DoseGrid) -> anyhow::Result<Vec<(usize, ToxScenario)>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| config_err(format!("scenario_csv: {e}")))?;
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| config_err(format!("scenario_csv: {e}")))?;
        let bad = |what: &str| config_err(format!("scenario_csv record {}: {what}", line + 1));
        if rec.len() != grid.k() + 2 {
            return Err(bad(&format!("expected {} fields, got {}", grid.k() + 2, rec.len())));
        }
        let nums: Vec<f64> = rec.iter().map(|f| f.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| bad(&e.to_string()))?;
        let id = nums[0] as usize;
        let s = ToxScenario::new(grid, nums[2..].to_vec(), nums[1]).map_err(|e| bad(&e.to_string()))?;
        out.push((id, s));
    }
    if out.is_empty() {
        return Err(config_err("scenario_csv: no scenarios"));
    }
    Ok(out)
}
