//! True toxicity scenarios over a dose grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Combo, DoseGrid};

/// Tolerance used to decide whether a toxicity equals the target level.
pub const TARGET_TOL: f64 = 1e-9;

/// True DLT probabilities per combination plus the target toxicity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct ToxScenario {
    grid: DoseGrid,
    /// by row-major combination index
    tox: Vec<f64>,
    theta0: f64,
    mtc: Vec<Combo>,
}

/// JSON form: `rows` lists agent-B levels bottom-up, each row holding the
/// agent-A levels left to right.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    theta0: f64,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<RawScenario> for ToxScenario {
    type Error = Error;
    fn try_from(r: RawScenario) -> Result<Self> {
        let refs: Vec<&[f64]> = r.rows.iter().map(|v| v.as_slice()).collect();
        ToxScenario::from_rows(&refs, r.theta0)
    }
}

impl From<ToxScenario> for RawScenario {
    fn from(s: ToxScenario) -> Self {
        RawScenario { theta0: s.theta0, rows: s.rows() }
    }
}

impl ToxScenario {
    /// `tox` is indexed by row-major combination index.
    pub fn new(grid: DoseGrid, tox: Vec<f64>, theta0: f64) -> Result<Self> {
        if tox.len() != grid.k() {
            return Err(Error::SizeMismatch { expected: grid.k(), got: tox.len() });
        }
        if !(theta0 > 0.0 && theta0 < 1.0) {
            return Err(Error::InvalidScenario(format!("target {theta0} not in (0, 1)")));
        }
        if let Some(x) = tox.iter().position(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::InvalidScenario(format!(
                "toxicity at {} = {} not in (0, 1)",
                grid.combo(x),
                tox[x]
            )));
        }
        for a in grid.combos() {
            for b in grid.combos() {
                if a.dominates(b) && tox[grid.index(a)] > tox[grid.index(b)] {
                    return Err(Error::InvalidScenario(format!(
                        "not monotone: R{a} = {} > R{b} = {}",
                        tox[grid.index(a)],
                        tox[grid.index(b)]
                    )));
                }
            }
        }
        let mtc = grid
            .combos()
            .filter(|&c| (tox[grid.index(c)] - theta0).abs() <= TARGET_TOL)
            .collect();
        Ok(ToxScenario { grid, tox, theta0, mtc })
    }

    /// Rows are agent-B levels from the lowest up; each row lists agent-A
    /// levels from the lowest.
    pub fn from_rows(rows: &[&[f64]], theta0: f64) -> Result<Self> {
        let n_b = rows.len();
        let n_a = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_a) {
            return Err(Error::InvalidScenario("ragged toxicity matrix".into()));
        }
        let grid = DoseGrid::new(n_b, n_a)?;
        ToxScenario::new(grid, rows.concat(), theta0)
    }

    pub fn grid(&self) -> DoseGrid {
        self.grid
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn tox(&self, c: Combo) -> f64 {
        self.tox[self.grid.index(c)]
    }

    pub fn tox_by_index(&self) -> &[f64] {
        &self.tox
    }

    /// Combinations whose toxicity equals the target, row-major.
    pub fn mtc_set(&self) -> &[Combo] {
        &self.mtc
    }

    pub fn is_mtc(&self, c: Combo) -> bool {
        self.mtc.contains(&c)
    }

    /// Bottom-up rows, as accepted by [`ToxScenario::from_rows`].
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.tox.chunks(self.grid.n_a()).map(|r| r.to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone() {
        let e = ToxScenario::from_rows(&[&[0.1, 0.05], &[0.3, 0.4]], 0.3).unwrap_err();
        assert!(matches!(e, Error::InvalidScenario(_)));
    }

    #[test]
    fn mtc_set_and_json() {
        let s = ToxScenario::from_rows(&[&[0.1, 0.3], &[0.3, 0.5]], 0.3).unwrap();
        assert_eq!(s.mtc_set(), &[Combo::new(2, 1), Combo::new(1, 2)]);
        let js = serde_json::to_string(&s).unwrap();
        let back: ToxScenario = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
    }
}
