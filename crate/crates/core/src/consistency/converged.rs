//! Limits of the maximum-likelihood estimates as the sample size grows.

use serde::{Deserialize, Serialize};

use crate::crm::{self, Cell, ParamDomain};

/// Converged estimate under an ordering of the correct group:
/// `ln theta0 / ln alpha_nu`, where `alpha_nu` is the skeleton value at the
/// MTC's label.
pub fn converged_mle_correct(alpha_nu: f64, theta0: f64) -> f64 {
    theta0.ln() / alpha_nu.ln()
}

/// Expected log-likelihood contribution `R ln p + (1 - R) ln(1 - p)` of a
/// combination with true toxicity `r` fitted at `p = alpha_at^a_hat`.
pub fn f_m(alpha_at: f64, r: f64, a_hat: f64) -> f64 {
    let ln_p = a_hat * alpha_at.ln();
    r * ln_p + (1.0 - r) * (-ln_p.exp()).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergedMle {
    pub a: f64,
    /// no interior root; `a` is the maximizing domain end
    pub at_boundary: bool,
}

/// Root of the allocation-weighted limiting score equation
/// `sum eta (1-R) ln alpha (R/(1-R) - alpha^a/(1-alpha^a)) = 0`, i.e. the
/// maximizer of the weighted expected log-likelihood. The three slices are
/// aligned per combination: reordered skeleton value, true toxicity, weight.
pub fn converged_mle_incorrect(alpha: &[f64], tox: &[f64], eta: &[f64], domain: ParamDomain) -> ConvergedMle {
    let cells: Vec<Cell> = alpha
        .iter()
        .zip(tox)
        .zip(eta)
        .filter(|(_, &e)| e > 0.0)
        .map(|((&al, &r), &e)| Cell { n: e, y: e * r, ln_alpha: al.ln() })
        .collect();
    solve_cells(&cells, domain)
}

pub(crate) fn solve_cells(cells: &[Cell], domain: ParamDomain) -> ConvergedMle {
    let (s_lo, _) = crm::score(cells, domain.lo());
    if s_lo <= 0.0 {
        return ConvergedMle { a: domain.lo(), at_boundary: true };
    }
    let (s_hi, _) = crm::score(cells, domain.hi());
    if s_hi >= 0.0 {
        return ConvergedMle { a: domain.hi(), at_boundary: true };
    }
    ConvergedMle { a: crm::mle_cells(cells, domain, 1.0), at_boundary: false }
}
