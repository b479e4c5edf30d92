//! Single-ordering CRM with the one-parameter power model `p = alpha^a`:
//! likelihood, maximum-likelihood estimation, dose recommendation and the
//! asymptotic consistency condition expressed through boundary values `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Prior toxicity guesses, strictly increasing inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Skeleton(Vec<f64>);

impl Skeleton {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidSkeleton("empty skeleton".into()));
        }
        for (l, &v) in alpha.iter().enumerate() {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "entry {} = {v} is outside (0, 1)",
                    l + 1
                )));
            }
            if l > 0 && v <= alpha[l - 1] {
                return Err(Error::InvalidSkeleton(format!(
                    "not strictly increasing at entry {} ({} <= {})",
                    l + 1,
                    v,
                    alpha[l - 1]
                )));
            }
        }
        Ok(Skeleton(alpha))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, l: usize) -> f64 {
        self.0[l]
    }
}

impl TryFrom<Vec<f64>> for Skeleton {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Skeleton::new(v)
    }
}

impl From<Skeleton> for Vec<f64> {
    fn from(s: Skeleton) -> Self {
        s.0
    }
}

/// The finite interval the model parameter `a` is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct ParamDomain {
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lo: f64,
    hi: f64,
}

impl TryFrom<RawDomain> for ParamDomain {
    type Error = Error;
    fn try_from(r: RawDomain) -> Result<Self> {
        ParamDomain::new(r.lo, r.hi)
    }
}

impl From<ParamDomain> for RawDomain {
    fn from(d: ParamDomain) -> Self {
        RawDomain { lo: d.lo, hi: d.hi }
    }
}

impl ParamDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo > 0.0 && hi > lo && hi.is_finite() {
            Ok(ParamDomain { lo, hi })
        } else {
            Err(Error::InvalidDomain { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

impl Default for ParamDomain {
    fn default() -> Self {
        ParamDomain { lo: 1e-3, hi: 1e3 }
    }
}

/// Patients and DLTs per position of a (reordered) skeleton.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DoseData {
    pub n: Vec<u32>,
    pub y: Vec<u32>,
}

impl DoseData {
    pub fn new(n: Vec<u32>, y: Vec<u32>) -> Result<Self> {
        if n.len() != y.len() {
            return Err(Error::SizeMismatch { expected: n.len(), got: y.len() });
        }
        if let Some(l) = (0..n.len()).find(|&l| y[l] > n[l]) {
            return Err(Error::InvalidArgument(format!(
                "position {}: {} DLTs among {} patients",
                l + 1,
                y[l],
                n[l]
            )));
        }
        Ok(DoseData { n, y })
    }

    pub fn empty(k: usize) -> Self {
        DoseData { n: vec![0; k], y: vec![0; k] }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.n.iter().sum()
    }

    pub fn total_dlt(&self) -> u32 {
        self.y.iter().sum()
    }

    /// At least one DLT and at least one non-DLT.
    pub fn is_heterogeneous(&self) -> bool {
        let y = self.total_dlt();
        y > 0 && y < self.total()
    }

    /// Proportion of patients at each position.
    pub fn eta(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.n.iter().map(|&n| if t > 0.0 { n as f64 / t } else { 0.0 }).collect()
    }
}

/// `alpha_at ^ a`.
pub fn tox_prob(alpha_at: f64, a: f64) -> Result<f64> {
    if !(alpha_at > 0.0 && alpha_at < 1.0) || !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("tox_prob({alpha_at}, {a})")));
    }
    Ok(alpha_at.powf(a))
}

/// Binomial log-likelihood (without the combinatorial constant).
pub fn log_likelihood(data: &DoseData, alpha: &[f64], a: f64) -> f64 {
    data.n
        .iter()
        .zip(&data.y)
        .zip(alpha)
        .filter(|((&n, _), _)| n > 0)
        .map(|((&n, &y), &al)| {
            let ln_p = a * al.ln();
            let mut v = 0.0;
            if y > 0 {
                v += y as f64 * ln_p;
            }
            if n > y {
                v += (n - y) as f64 * (-ln_p.exp()).ln_1p();
            }
            v
        })
        .sum()
}

/// Sufficient statistics of one position for score evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell {
    pub n: f64,
    pub y: f64,
    pub ln_alpha: f64,
}

/// Score `d l / d a` and its derivative; the log-likelihood is concave in `a`.
#[inline]
pub(crate) fn score(cells: &[Cell], a: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut ds = 0.0;
    for c in cells {
        let u = (a * c.ln_alpha).exp();
        let miss = c.n - c.y;
        let odds = u / (1.0 - u);
        s += c.y * c.ln_alpha - miss * c.ln_alpha * odds;
        ds -= miss * c.ln_alpha * c.ln_alpha * odds / (1.0 - u);
    }
    (s, ds)
}

#[inline]
pub(crate) fn cells_log_likelihood(cells: &[Cell], a: f64) -> f64 {
    cells
        .iter()
        .map(|c| {
            let ln_p = a * c.ln_alpha;
            let mut v = c.y * ln_p;
            if c.n > c.y {
                v += (c.n - c.y) * (-ln_p.exp()).ln_1p();
            }
            v
        })
        .sum()
}

/// Maximizer of the concave log-likelihood over the domain, by a safeguarded
/// Newton iteration on `ln a` started from `start`.
pub(crate) fn mle_cells(cells: &[Cell], domain: ParamDomain, start: f64) -> f64 {
    let (lo, hi) = (domain.lo.ln(), domain.hi.ln());
    let x = numeric::decreasing_root(
        |x| {
            let a = x.exp();
            let (s, ds) = score(cells, a);
            (s, ds * a)
        },
        lo,
        hi,
        start.clamp(domain.lo, domain.hi).ln(),
        1e-12,
    );
    x.exp().clamp(domain.lo, domain.hi)
}

pub(crate) fn to_cells(data: &DoseData, alpha: &[f64]) -> Vec<Cell> {
    data.n
        .iter()
        .zip(&data.y)
        .zip(alpha)
        .filter(|((&n, _), _)| n > 0)
        .map(|((&n, &y), &al)| Cell { n: n as f64, y: y as f64, ln_alpha: al.ln() })
        .collect()
}

/// Maximum-likelihood estimate of `a` for data recorded by position under a
/// skeleton `alpha` (already reordered to the positions of `data`).
pub fn mle(data: &DoseData, alpha: &[f64], domain: ParamDomain) -> Result<f64> {
    if data.len() != alpha.len() {
        return Err(Error::SizeMismatch { expected: alpha.len(), got: data.len() });
    }
    if !data.is_heterogeneous() {
        return Err(Error::NotHeterogeneous);
    }
    Ok(mle_cells(&to_cells(data, alpha), domain, 1.0))
}

/// Position whose fitted toxicity `alpha[l]^a_hat` is closest to `theta0`;
/// ties go to the lower position.
pub fn recommend(alpha: &[f64], a_hat: f64, theta0: f64) -> usize {
    recommend_among(alpha, a_hat, theta0, |_| true)
}

pub(crate) fn recommend_among<F: Fn(usize) -> bool>(alpha: &[f64], a_hat: f64, theta0: f64, allowed: F) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (l, &al) in alpha.iter().enumerate() {
        if !allowed(l) {
            continue;
        }
        let d = (al.powf(a_hat) - theta0).abs();
        if d < best_d - 1e-12 {
            best = l;
            best_d = d;
        }
    }
    if best == usize::MAX {
        0
    } else {
        best
    }
}

/// Boundary values `b[0..=k]`: `b[0] = lo`, `b[k] = hi`, and for
/// `1 <= t < k`, `b[t]` solves `alpha[t-1]^b + alpha[t]^b = 2 theta0`.
/// Position `p` owns the cell `(b[p], b[p+1])`.
pub fn crm_boundaries(skeleton: &Skeleton, theta0: f64, domain: ParamDomain) -> Result<Vec<f64>> {
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::Domain(format!("theta0 = {theta0}")));
    }
    let al = skeleton.values();
    let k = al.len();
    let mut b = Vec::with_capacity(k + 1);
    b.push(domain.lo);
    for t in 1..k {
        b.push(boundary(al[t - 1], al[t], theta0, domain)?);
    }
    b.push(domain.hi);
    Ok(b)
}

/// Root in `b` of `lower^b + upper^b = 2 theta0`.
pub fn boundary(lower: f64, upper: f64, theta0: f64, domain: ParamDomain) -> Result<f64> {
    let (lo, hi) = (domain.lo.ln(), domain.hi.ln());
    let g = |x: f64| {
        let b = x.exp();
        lower.powf(b) + upper.powf(b) - 2.0 * theta0
    };
    numeric::bisect(g, lo, hi, 1e-13)
        .map(f64::exp)
        .ok_or_else(|| Error::RootNotBracketed {
            what: format!("{lower}^b + {upper}^b = {}", 2.0 * theta0),
            lo: domain.lo,
            hi: domain.hi,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// need `a > bound`
    Above,
    /// need `a < bound`
    Below,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmViolation {
    /// 0-based position in the ordering
    pub position: usize,
    pub a: f64,
    pub bound: f64,
    pub kind: BoundKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmConsistency {
    pub consistent: bool,
    pub violations: Vec<CrmViolation>,
    /// set when the true toxicities are not strictly increasing along the
    /// ordering; the bounds are still evaluated
    pub non_monotone: bool,
}

/// Checks the CRM consistency condition for true toxicities `r_ordered`
/// laid out along an ordering, with the MTC at 0-based `mtc_pos`. With
/// `a_p = ln R[p] / ln alpha[p]` the condition is `b[q] < a_q < b[q+1]` at the
/// MTC, `a_p > b[p+1]` below it and `a_p < b[p]` above it.
pub fn check_crm_consistency(
    skeleton: &Skeleton,
    r_ordered: &[f64],
    mtc_pos: usize,
    theta0: f64,
    domain: ParamDomain,
) -> Result<CrmConsistency> {
    let k = skeleton.len();
    if r_ordered.len() != k {
        return Err(Error::SizeMismatch { expected: k, got: r_ordered.len() });
    }
    if mtc_pos >= k {
        return Err(Error::InvalidArgument(format!("MTC position {} outside 1..={k}", mtc_pos + 1)));
    }
    if let Some(p) = r_ordered.iter().position(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Domain(format!("true toxicity at position {} not in (0, 1)", p + 1)));
    }
    if (r_ordered[mtc_pos] - theta0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "toxicity {} at the MTC differs from the target {theta0}",
            r_ordered[mtc_pos]
        )));
    }
    let b = crm_boundaries(skeleton, theta0, domain)?;
    let non_monotone = r_ordered.windows(2).any(|w| w[0] >= w[1]);
    let mut violations = Vec::new();
    for p in 0..k {
        let a = r_ordered[p].ln() / skeleton.get(p).ln();
        let mut need = |bound: f64, kind: BoundKind, ok: bool| {
            if !ok {
                violations.push(CrmViolation { position: p, a, bound, kind });
            }
        };
        if p == mtc_pos {
            let lower_ok = if p == 0 { a >= b[0] } else { a > b[p] };
            let upper_ok = if p + 1 == k { a <= b[k] } else { a < b[p + 1] };
            need(b[p], BoundKind::Above, lower_ok);
            need(b[p + 1], BoundKind::Below, upper_ok);
        } else if p < mtc_pos {
            need(b[p + 1], BoundKind::Above, a > b[p + 1]);
            need(domain.hi, BoundKind::Below, a <= domain.hi);
        } else {
            need(b[p], BoundKind::Below, a < b[p]);
            need(domain.lo, BoundKind::Above, a >= domain.lo);
        }
    }
    Ok(CrmConsistency { consistent: violations.is_empty(), violations, non_monotone })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha0() -> Skeleton {
        Skeleton::new(vec![0.10, 0.20, 0.30, 0.40, 0.45, 0.50, 0.54, 0.59, 0.64]).unwrap()
    }

    fn alpha1() -> Skeleton {
        Skeleton::new(vec![0.10, 0.27, 0.32, 0.37, 0.45, 0.50, 0.54, 0.59, 0.64]).unwrap()
    }

    #[test]
    fn skeleton_validation_names_offending_entry() {
        let e = Skeleton::new(vec![0.1, 0.3, 0.2]).unwrap_err();
        assert!(e.to_string().contains("entry 3"), "{e}");
        assert!(Skeleton::new(vec![0.1, 1.0]).is_err());
        assert!(Skeleton::new(vec![]).is_err());
    }

    #[test]
    fn tox_prob_examples() {
        assert_eq!(tox_prob(0.3, 1.0).unwrap(), 0.3);
        assert!((tox_prob(0.4, 1.314).unwrap() - 0.3).abs() < 1e-3);
        assert!((tox_prob(0.5, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(tox_prob(1.2, 1.0).is_err());
        assert!(tox_prob(0.5, 0.0).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let d = DoseData::new(vec![1], vec![1]).unwrap();
        assert!((log_likelihood(&d, &[0.3], 1.0) - (-1.203_972_804)).abs() < 1e-8);
        let d = DoseData::new(vec![2], vec![1]).unwrap();
        assert!((log_likelihood(&d, &[0.3], 1.0) - (-1.560_647_748)).abs() < 1e-8);
        assert_eq!(log_likelihood(&DoseData::empty(3), &[0.1, 0.2, 0.3], 1.0), 0.0);
    }

    #[test]
    fn mle_closed_forms() {
        let d = DoseData::new(vec![2], vec![1]).unwrap();
        let a = mle(&d, &[0.3], ParamDomain::default()).unwrap();
        assert!((a - 0.5f64.ln() / 0.3f64.ln()).abs() < 1e-8);
        let d = DoseData::new(vec![10], vec![3]).unwrap();
        let a = mle(&d, &[0.3], ParamDomain::default()).unwrap();
        assert!((a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mle_errors() {
        let d = DoseData::new(vec![3, 2], vec![0, 0]).unwrap();
        assert_eq!(mle(&d, &[0.1, 0.2], ParamDomain::default()), Err(Error::NotHeterogeneous));
        assert!(ParamDomain::new(2.0, 1.0).is_err());
        assert!(DoseData::new(vec![1], vec![2]).is_err());
    }

    #[test]
    fn recommend_examples() {
        let a0 = alpha0();
        assert_eq!(recommend(a0.values(), 1.0, 0.3), 2);
        assert_eq!(recommend(a0.values(), 1.0, 0.35), 2);
        assert_eq!(recommend(a0.values(), 50.0, 0.3), 8);
    }

    #[test]
    fn boundaries_of_alpha1() {
        let b = crm_boundaries(&alpha1(), 0.3, ParamDomain::default()).unwrap();
        let expected = [0.70, 0.99, 1.13, 1.35, 1.62, 1.84, 2.11, 2.48];
        assert_eq!(b.len(), 10);
        assert_eq!(b[0], 1e-3);
        assert_eq!(b[9], 1e3);
        for (got, want) in b[1..9].iter().zip(expected) {
            assert!((got - want).abs() <= 0.01, "{got} vs {want}");
        }
        assert!((0.10f64.powf(0.70) + 0.27f64.powf(0.70) - 0.6).abs() < 0.01);
        for w in b.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn boundary_at_target() {
        let b = boundary(0.3, 0.3, 0.3, ParamDomain::default()).unwrap();
        assert!((b - 1.0).abs() < 1e-10);
        // 0.9^b + 0.95^b cannot reach 2*0.3 within a <= 1
        assert!(boundary(0.9, 0.95, 0.3, ParamDomain::new(0.01, 1.0).unwrap()).is_err());
    }

    #[test]
    fn crm_consistent_when_truth_is_skeleton() {
        let s = alpha0();
        let r = s.values().to_vec();
        let rep = check_crm_consistency(&s, &r, 2, 0.3, ParamDomain::default()).unwrap();
        assert!(rep.consistent, "{:?}", rep.violations);
    }

    #[test]
    fn scenario5_second_position_violation() {
        // correct-group ordering placing (1,2) second under scenario 5
        let r = [0.15, 0.25, 0.20, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55];
        let rep = check_crm_consistency(&alpha0(), &r, 3, 0.3, ParamDomain::default()).unwrap();
        assert!(!rep.consistent);
        assert!(rep.non_monotone);
        assert!(rep
            .violations
            .iter()
            .any(|v| v.position == 1 && v.kind == BoundKind::Above));
        let mut bumped = alpha0().values().to_vec();
        bumped[1] = 0.21;
        let rep = check_crm_consistency(&Skeleton::new(bumped).unwrap(), &r, 3, 0.3, ParamDomain::default()).unwrap();
        assert!(!rep.violations.iter().any(|v| v.position == 1));
    }

    #[test]
    fn crm_check_input_errors() {
        let s = alpha0();
        let mut r = s.values().to_vec();
        assert!(check_crm_consistency(&s, &r, 0, 0.3, ParamDomain::default()).is_err());
        r[0] = 0.0;
        assert!(check_crm_consistency(&s, &r, 2, 0.3, ParamDomain::default()).is_err());
    }
}
