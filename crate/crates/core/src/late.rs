//! Potential-outcome analysis of a binary instrument, treatment and
//! outcome: compliance-type shares, the local average treatment effect,
//! the testable inequalities implied by exclusion plus monotonicity, and
//! the natural bounds on the population average effect.

use serde::Serialize;

use crate::data::BinaryIVTable;
use crate::error::{IvError, Result};
use crate::interval::IntervalSet;
use crate::report::{EstimateReport, Estimand};

/// Population shares of always-takers, never-takers and compliers.
///
/// `pi_c` is the remainder `1 − pi_a − pi_n`; a negative value is reported
/// through `monotonicity_violated` rather than as an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplianceShares {
    pub pi_a: f64,
    pub pi_n: f64,
    pub pi_c: f64,
    pub se_a: f64,
    pub se_n: f64,
    pub se_c: f64,
    pub monotonicity_violated: bool,
}

pub fn compliance_shares(t: &BinaryIVTable) -> ComplianceShares {
    let (n0, n1) = (t.n_z(0) as f64, t.n_z(1) as f64);
    let pi_a = t.treated_share(0);
    let pi_n = 1.0 - t.treated_share(1);
    let pi_c = 1.0 - pi_a - pi_n;
    let se_a = (pi_a * (1.0 - pi_a) / n0).sqrt();
    let se_n = (pi_n * (1.0 - pi_n) / n1).sqrt();
    ComplianceShares {
        pi_a,
        pi_n,
        pi_c,
        se_a,
        se_n,
        se_c: se_a.hypot(se_n),
        monotonicity_violated: pi_c < 0.0,
    }
}

/// Intention-to-treat effects of the instrument on outcome and on
/// treatment receipt, with independent-binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IttEffects {
    pub itt_y: f64,
    pub se_itt_y: f64,
    pub itt_x: f64,
    pub se_itt_x: f64,
}

pub fn itt_effects(t: &BinaryIVTable) -> IttEffects {
    let (n0, n1) = (t.n_z(0) as f64, t.n_z(1) as f64);
    let (y0, y1) = (t.outcome_share(0), t.outcome_share(1));
    let (x0, x1) = (t.treated_share(0), t.treated_share(1));
    IttEffects {
        itt_y: y1 - y0,
        se_itt_y: (y1 * (1.0 - y1) / n1 + y0 * (1.0 - y0) / n0).sqrt(),
        itt_x: x1 - x0,
        se_itt_x: (x1 * (1.0 - x1) / n1 + x0 * (1.0 - x0) / n0).sqrt(),
    }
}

/// `ITT_Y / ITT_X` with a delta-method standard error.
///
/// The variance of the ratio uses the within-arm multinomial variances of
/// `Y` and `X` and their within-arm covariance; arms are independent.
pub fn late(t: &BinaryIVTable) -> Result<EstimateReport> {
    let itt = itt_effects(t);
    if !(itt.itt_x > 0.0) {
        return Err(IvError::NonPositiveCompliance { itt_x: itt.itt_x });
    }
    let tau = itt.itt_y / itt.itt_x;
    let cov_arm = |z: usize| {
        let n = t.n_z(z) as f64;
        (t.prob(1, 1, z) - t.outcome_share(z) * t.treated_share(z)) / n
    };
    let cov = cov_arm(0) + cov_arm(1);
    let var = (itt.se_itt_y.powi(2) - 2.0 * tau * cov + tau * tau * itt.se_itt_x.powi(2))
        / itt.itt_x.powi(2);
    Ok(
        EstimateReport::new(Estimand::Late, tau, Some(var.max(0.0).sqrt()), t.total() as usize)
            .with_detail("itt_y", itt.itt_y)
            .with_detail("se_itt_y", itt.se_itt_y)
            .with_detail("itt_x", itt.itt_x)
            .with_detail("se_itt_x", itt.se_itt_x),
    )
}

/// What the IV ratio estimates when defiers are present: a weighted
/// combination of complier and defier effects with weights
/// `pi_c/(pi_c − pi_d)` and `−pi_d/(pi_c − pi_d)`.
pub fn late_with_defiers(pi_c: f64, pi_d: f64, effect_c: f64, effect_d: f64) -> Result<f64> {
    let denom = pi_c - pi_d;
    if denom == 0.0 {
        return Err(IvError::Undefined(
            "complier and defier shares are equal; the IV ratio has no estimand".into(),
        ));
    }
    Ok(pi_c / denom * effect_c - pi_d / denom * effect_d)
}

/// One of the four inequalities `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Restriction {
    pub y: u8,
    /// Treatment level whose cells are compared across arms. `x = 0` bounds
    /// never-takers (`Z = 1` side smaller), `x = 1` always-takers (`Z = 0`
    /// side smaller).
    pub x: u8,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub restrictions: Vec<Restriction>,
}

impl InequalityReport {
    pub fn any_violated(&self) -> bool {
        self.restrictions.iter().any(|r| r.violated)
    }

    pub fn get(&self, y: u8, x: u8) -> &Restriction {
        self.restrictions
            .iter()
            .find(|r| r.y == y && r.x == x)
            .expect("all four restrictions present")
    }
}

/// For `y ∈ {0, 1}`:
/// `P(Y=y, X=0 | Z=1) ≤ P(Y=y, X=0 | Z=0)` and
/// `P(Y=y, X=1 | Z=0) ≤ P(Y=y, X=1 | Z=1)`.
pub fn exclusion_tests(t: &BinaryIVTable) -> InequalityReport {
    let mut restrictions = Vec::with_capacity(4);
    for y in 0..2u8 {
        for x in 0..2u8 {
            let (small, large) = if x == 0 { (1, 0) } else { (0, 1) };
            let lhs = t.prob(y as usize, x as usize, small);
            let rhs = t.prob(y as usize, x as usize, large);
            let slack = rhs - lhs;
            restrictions.push(Restriction {
                y,
                x,
                lhs,
                rhs,
                slack,
                violated: slack < 0.0,
            });
        }
    }
    InequalityReport { restrictions }
}

/// `share · E[Y | Z=z, X=x]`, taking the product as 0 when the cell is
/// empty and its share is zero.
fn weighted_mean(t: &BinaryIVTable, share: f64, x: usize, z: usize) -> Result<f64> {
    let cell = t.count(0, x, z) + t.count(1, x, z);
    if cell == 0 {
        if share == 0.0 {
            return Ok(0.0);
        }
        return Err(IvError::Undefined(format!(
            "E[Y | Z={z}, X={x}] has no observations but weight {share}"
        )));
    }
    Ok(share * t.count(1, x, z) as f64 / cell as f64)
}

/// Sharp bounds on `E[Y(1) − Y(0)]` for a binary outcome under random
/// assignment, exclusion and monotonicity.
///
/// Width is always `1 − pi_c`.
pub fn natural_bounds(t: &BinaryIVTable) -> Result<IntervalSet> {
    let itt_y = t.outcome_share(1) - t.outcome_share(0);
    let untreated_z1 = 1.0 - t.treated_share(1);
    let treated_z0 = t.treated_share(0);
    let ny1 = weighted_mean(t, untreated_z1, 0, 1)?;
    let ay1 = weighted_mean(t, treated_z0, 1, 0)?;
    let lower = -ny1 + itt_y + ay1 - treated_z0;
    let upper = untreated_z1 - ny1 + itt_y + ay1;
    Ok(IntervalSet::closed(lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::flu_table;

    #[test]
    fn flu_shares() {
        let s = compliance_shares(&flu_table());
        assert!((s.pi_a - 263.0 / 1389.0).abs() < 1e-12);
        assert!((s.pi_n - 1019.0 / 1472.0).abs() < 1e-12);
        assert_eq!(s.pi_a + s.pi_n + s.pi_c, 1.0);
        assert!(!s.monotonicity_violated);
    }

    #[test]
    fn one_sided_noncompliance() {
        let t = BinaryIVTable::from_arms([40, 10, 0, 0], [20, 5, 20, 5]).unwrap();
        assert_eq!(compliance_shares(&t).pi_a, 0.0);
    }

    #[test]
    fn defier_heavy_table_flags() {
        let t = BinaryIVTable::from_arms([5, 5, 20, 20], [20, 20, 5, 5]).unwrap();
        let s = compliance_shares(&t);
        assert!(s.pi_c < 0.0 && s.monotonicity_violated);
        assert!(matches!(late(&t), Err(IvError::NonPositiveCompliance { .. })));
    }

    #[test]
    fn flu_late() {
        let r = late(&flu_table()).unwrap();
        assert!((r.point - (-0.12455748282599632)).abs() < 1e-12);
        assert!((r.std_error.unwrap() - 0.090).abs() < 0.0005);
    }

    #[test]
    fn null_itt_gives_zero_late() {
        // Y rate 1/4 in both arms; treatment moves.
        let t = BinaryIVTable::from_arms([30, 10, 30, 10], [15, 5, 45, 15]).unwrap();
        assert_eq!(late(&t).unwrap().point, 0.0);
    }

    #[test]
    fn defier_weights() {
        assert_eq!(late_with_defiers(0.4, 0.0, 0.7, -3.0).unwrap(), 0.7);
        assert!((late_with_defiers(0.3, 0.1, 0.25, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((late_with_defiers(0.3, 0.1, 0.2, -0.4).unwrap() - 0.5).abs() < 1e-12);
        assert!(late_with_defiers(0.2, 0.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn flu_always_taker_violation() {
        let rep = exclusion_tests(&flu_table());
        let r = rep.get(1, 1);
        assert!((r.lhs - 30.0 / 1389.0).abs() < 1e-15);
        assert!((r.rhs - 31.0 / 1472.0).abs() < 1e-15);
        assert!(r.violated);
        assert!((r.slack + 0.00054).abs() < 1e-5);
        assert_eq!(rep.restrictions.iter().filter(|r| r.violated).count(), 1);
    }

    #[test]
    fn degenerate_table_no_violation() {
        let t = BinaryIVTable::from_arms([10, 0, 0, 0], [7, 0, 0, 0]).unwrap();
        let rep = exclusion_tests(&t);
        assert!(rep.restrictions.iter().all(|r| r.slack == 0.0 && !r.violated));
    }

    #[test]
    fn flu_bounds() {
        let b = natural_bounds(&flu_table()).unwrap();
        let i = b.intervals()[0];
        assert!((i.lo - (-0.2396)).abs() < 5e-5);
        assert!((i.hi - 0.6420).abs() < 5e-5);
    }

    #[test]
    fn perfect_compliance_bounds_collapse() {
        let t = BinaryIVTable::from_arms([30, 10, 0, 0], [0, 0, 25, 15]).unwrap();
        let i = natural_bounds(&t).unwrap().intervals()[0];
        let itt = itt_effects(&t).itt_y;
        assert!((i.lo - itt).abs() < 1e-15 && (i.hi - itt).abs() < 1e-15);
    }
}
