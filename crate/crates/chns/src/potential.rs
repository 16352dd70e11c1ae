//! Double-well free-energy density `Psi = Psi0 - (theta0/2) r^2`: the
//! singular logarithmic (Flory-Huggins) form confined to (-1, 1) and the
//! quartic polynomial alternative, with derivatives, safeguarded evaluation
//! near the pure states, and a numerical validator for the structural
//! assumptions the solver relies on (convexity of `Psi0`, tail monotonicity,
//! exponential growth bound on `Psi0''`).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PotentialError {
    #[error("argument {r} outside the potential domain [-1, 1]")]
    OutsideDomain { r: f64 },
    #[error("argument {r} is a pure state; derivative diverges")]
    SingularAt { r: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("need at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{check} violated at r = {r}: {detail}")]
    Violation {
        check: &'static str,
        r: f64,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Logarithmic,
    Quartic,
}

/// Double-well potential with convex/concave split.
///
/// Logarithmic: `Psi(r) = (theta/2)[(1-r)ln(1-r) + (1+r)ln(1+r)] + (theta0/2)(1-r^2)`
/// with `Psi0 = (theta/2)[...] + theta0/2`, so `Psi0'' = theta/(1-r^2) >= theta`.
///
/// Quartic: `Psi(r) = (1/4)(1-r^2)^2` with `Psi0 = r^4/4 + 1/4` and `theta0 = 1`,
/// defined on all of R (no separation guarantee).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub kind: PotentialKind,
    pub theta: f64,
    pub theta0: f64,
    /// Evaluation guard near +-1: derivative requests closer than this are
    /// clamped and flagged instead of returning infinities.
    pub eps_barrier: f64,
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl Potential {
    pub fn logarithmic(theta: f64, theta0: f64) -> Self {
        assert!(theta > 0.0, "theta must be strictly positive");
        Self {
            kind: PotentialKind::Logarithmic,
            theta,
            theta0,
            eps_barrier: 1e-12,
        }
    }

    pub fn quartic() -> Self {
        Self {
            kind: PotentialKind::Quartic,
            theta: 1.0,
            theta0: 1.0,
            eps_barrier: 1e-12,
        }
    }

    pub fn with_barrier(mut self, eps: f64) -> Self {
        assert!(eps > 0.0 && eps <= 1e-6, "barrier must lie in (0, 1e-6]");
        self.eps_barrier = eps;
        self
    }

    pub fn is_singular(&self) -> bool {
        self.kind == PotentialKind::Logarithmic
    }

    /// `Psi(r)`; continuous up to the endpoints for the logarithmic kind
    /// (convention `0 ln 0 = 0`).
    pub fn psi(&self, r: f64) -> Result<f64, PotentialError> {
        match self.kind {
            PotentialKind::Logarithmic => {
                if r.abs() > 1.0 || !r.is_finite() {
                    return Err(PotentialError::OutsideDomain { r });
                }
                Ok(0.5 * self.theta * (xlnx(1.0 - r) + xlnx(1.0 + r))
                    + 0.5 * self.theta0 * (1.0 - r * r))
            }
            PotentialKind::Quartic => {
                let q = 1.0 - r * r;
                Ok(0.25 * q * q)
            }
        }
    }

    /// Convex part `Psi0(r) = Psi(r) + (theta0/2) r^2`.
    pub fn psi0(&self, r: f64) -> Result<f64, PotentialError> {
        Ok(self.psi(r)? + 0.5 * self.theta0 * r * r)
    }

    pub fn psi0_prime(&self, r: f64) -> Result<f64, PotentialError> {
        match self.kind {
            PotentialKind::Logarithmic => {
                if r.abs() >= 1.0 || !r.is_finite() {
                    return Err(PotentialError::SingularAt { r });
                }
                Ok(self.theta * r.atanh())
            }
            PotentialKind::Quartic => Ok(r * r * r),
        }
    }

    pub fn psi0_second(&self, r: f64) -> Result<f64, PotentialError> {
        match self.kind {
            PotentialKind::Logarithmic => {
                if r.abs() >= 1.0 || !r.is_finite() {
                    return Err(PotentialError::SingularAt { r });
                }
                Ok(self.theta / (1.0 - r * r))
            }
            PotentialKind::Quartic => Ok(3.0 * r * r),
        }
    }

    pub fn psi0_third(&self, r: f64) -> Result<f64, PotentialError> {
        match self.kind {
            PotentialKind::Logarithmic => {
                if r.abs() >= 1.0 || !r.is_finite() {
                    return Err(PotentialError::SingularAt { r });
                }
                let q = 1.0 - r * r;
                Ok(2.0 * self.theta * r / (q * q))
            }
            PotentialKind::Quartic => Ok(6.0 * r),
        }
    }

    /// `Psi'(r) = Psi0'(r) - theta0 r`.
    pub fn psi_prime(&self, r: f64) -> Result<f64, PotentialError> {
        Ok(self.psi0_prime(r)? - self.theta0 * r)
    }

    /// Pull `r` inside the barrier for the singular kind. Returns the
    /// admissible point and whether clamping occurred.
    #[inline]
    pub fn clamp_into_domain(&self, r: f64) -> (f64, bool) {
        if self.is_singular() {
            let lim = 1.0 - self.eps_barrier;
            if r.abs() >= lim {
                return (r.clamp(-lim, lim), true);
            }
        }
        (r, false)
    }

    /// Safeguarded `Psi0'` for hot loops: evaluates at the clamped point when
    /// the argument is within `eps_barrier` of a pure state, bumping the
    /// event counter instead of erroring.
    #[inline]
    pub fn psi0_prime_clamped(&self, r: f64, clamp_events: &mut u64) -> f64 {
        let (rc, clamped) = self.clamp_into_domain(r);
        if clamped {
            *clamp_events += 1;
        }
        match self.kind {
            PotentialKind::Logarithmic => self.theta * rc.atanh(),
            PotentialKind::Quartic => rc * rc * rc,
        }
    }

    /// Safeguarded `Psi0''`; see [`Self::psi0_prime_clamped`].
    #[inline]
    pub fn psi0_second_clamped(&self, r: f64, clamp_events: &mut u64) -> f64 {
        let (rc, clamped) = self.clamp_into_domain(r);
        if clamped {
            *clamp_events += 1;
        }
        match self.kind {
            PotentialKind::Logarithmic => self.theta / (1.0 - rc * rc),
            PotentialKind::Quartic => 3.0 * rc * rc,
        }
    }

    /// Safeguarded `Psi` (clamps like the derivatives; `Psi` itself is finite
    /// at the endpoints so this only guards against |r| > 1 drift).
    #[inline]
    pub fn psi_clamped(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Logarithmic => {
                let rc = r.clamp(-1.0, 1.0);
                0.5 * self.theta * (xlnx(1.0 - rc) + xlnx(1.0 + rc))
                    + 0.5 * self.theta0 * (1.0 - rc * rc)
            }
            PotentialKind::Quartic => {
                let q = 1.0 - r * r;
                0.25 * q * q
            }
        }
    }

    /// Minimum of `Psi` over [-1, 1] (exact up to bisection tolerance),
    /// used for explicit energy lower bounds.
    pub fn min_value(&self) -> f64 {
        match self.kind {
            PotentialKind::Quartic => 0.0,
            PotentialKind::Logarithmic => {
                if self.theta >= self.theta0 {
                    // Psi is convex; the only critical point is r = 0.
                    return self.psi(0.0).unwrap();
                }
                // Double well: bisect Psi'(r) = theta atanh(r) - theta0 r
                // on (0, 1) for the positive minimum location.
                let pp = |r: f64| self.theta * r.atanh() - self.theta0 * r;
                let (mut lo, mut hi) = (1e-14, 1.0 - 1e-14);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if pp(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                self.psi(0.5 * (lo + hi)).unwrap()
            }
        }
    }
}

/// Result of hypothesis validation over sampled arguments.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub n_samples: usize,
    /// Smallest sampled `Psi0''`.
    pub min_second_derivative: f64,
    /// `Psi0'' >= theta` on all samples (checked for the singular kind only).
    pub convexity_ok: bool,
    /// `Psi0''` nondecreasing on the sampled tail `[1 - eps0, 1)`.
    pub tail_monotone_ok: bool,
    /// Smallest admissible growth constant with
    /// `Psi0''(r) <= C exp(C |Psi0'(r)|)` on all samples.
    pub growth_constant: f64,
    pub warnings: Vec<String>,
}

/// Validate the structural assumptions on a potential by dense sampling of
/// `(-1 + 1e-8, 1 - 1e-8)`. Any violation is an error naming the offending
/// sample.
pub fn validate_hypotheses(p: &Potential, n_samples: usize) -> Result<HypothesisReport, ValidationError> {
    let f_prime = |r: f64| p.psi0_prime(r).unwrap_or(f64::INFINITY);
    let f_second = |r: f64| p.psi0_second(r).unwrap_or(f64::INFINITY);
    let mut report = validate_hypotheses_with(f_prime, f_second, p.theta, p.is_singular(), n_samples)?;
    if p.is_singular() && p.theta >= p.theta0 {
        report.warnings.push(format!(
            "theta = {} >= theta0 = {}: potential has no double-well structure",
            p.theta, p.theta0
        ));
    }
    Ok(report)
}

/// Validator core over injectable derivative callbacks (used for fault
/// injection in tests).
pub fn validate_hypotheses_with(
    psi0_prime: impl Fn(f64) -> f64,
    psi0_second: impl Fn(f64) -> f64,
    theta: f64,
    singular: bool,
    n_samples: usize,
) -> Result<HypothesisReport, ValidationError> {
    if n_samples < 100 {
        return Err(ValidationError::TooFewSamples(n_samples));
    }
    let lo = -1.0 + 1e-8;
    let hi = 1.0 - 1e-8;
    let samples: Vec<f64> = (0..n_samples)
        .map(|k| lo + (hi - lo) * k as f64 / (n_samples - 1) as f64)
        .collect();

    let mut min_dd = f64::INFINITY;
    for &r in &samples {
        let dd = psi0_second(r);
        min_dd = min_dd.min(dd);
        if singular && dd < theta * (1.0 - 1e-12) {
            return Err(ValidationError::Violation {
                check: "convexity lower bound psi0'' >= theta",
                r,
                detail: format!("psi0''({r}) = {dd} < theta = {theta}"),
            });
        }
    }

    // Tail monotonicity on [1 - eps0, 1) with eps0 = 1/2.
    let eps0 = 0.5;
    let mut prev: Option<(f64, f64)> = None;
    for &r in samples.iter().filter(|&&r| r >= 1.0 - eps0) {
        let dd = psi0_second(r);
        if let Some((rp, ddp)) = prev {
            if dd < ddp * (1.0 - 1e-12) {
                return Err(ValidationError::Violation {
                    check: "tail monotonicity of psi0''",
                    r,
                    detail: format!("psi0'' decreases from {ddp} at {rp} to {dd} at {r}"),
                });
            }
        }
        prev = Some((r, dd));
    }

    // Growth bound: smallest C in (0, c_max] with psi0'' <= C exp(C |psi0'|)
    // on all samples. The admissibility predicate is monotone in C.
    let c_max = (2.0 / theta).max(theta).max(1.0);
    let admissible = |c: f64| {
        samples
            .iter()
            .all(|&r| psi0_second(r) <= c * (c * psi0_prime(r).abs()).exp())
    };
    if !admissible(c_max) {
        let worst = samples
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let ga = psi0_second(a) - c_max * (c_max * psi0_prime(a).abs()).exp();
                let gb = psi0_second(b) - c_max * (c_max * psi0_prime(b).abs()).exp();
                ga.partial_cmp(&gb).unwrap()
            })
            .unwrap();
        return Err(ValidationError::Violation {
            check: "exponential growth bound on psi0''",
            r: worst,
            detail: format!("no admissible constant below {c_max}"),
        });
    }
    let (mut clo, mut chi) = (0.0, c_max);
    for _ in 0..60 {
        let mid = 0.5 * (clo + chi);
        if admissible(mid) {
            chi = mid;
        } else {
            clo = mid;
        }
    }

    Ok(HypothesisReport {
        n_samples,
        min_second_derivative: min_dd,
        convexity_ok: true,
        tail_monotone_ok: true,
        growth_constant: chi,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn psi_at_zero_is_half_theta0() {
        let p = Potential::logarithmic(0.8, 1.0);
        assert!((p.psi(0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psi_at_endpoint_uses_continuous_extension() {
        let p = Potential::logarithmic(0.8, 1.0);
        // (1+r)ln(1+r) -> 2 ln 2 and (1-r)ln(1-r) -> 0 at r = 1.
        assert!((p.psi(1.0).unwrap() - 0.8 * LN2).abs() < 1e-14);
        assert!((p.psi(-1.0).unwrap() - 0.8 * LN2).abs() < 1e-14);
    }

    #[test]
    fn psi_is_even_psi_prime_is_odd() {
        let p = Potential::logarithmic(0.8, 1.6);
        for k in 0..100 {
            let r = -0.999 + 1.998 * (k as f64 + 0.37) / 100.0;
            let r = r.clamp(-0.999, 0.999);
            assert!((p.psi(r).unwrap() - p.psi(-r).unwrap()).abs() < 1e-14);
            assert!((p.psi_prime(r).unwrap() + p.psi_prime(-r).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn psi0_prime_closed_form_value() {
        let p = Potential::logarithmic(1.0, 2.0);
        // (1/2) ln(1.8/0.2) = ln 3
        assert!((p.psi0_prime(0.8).unwrap() - 3.0f64.ln()).abs() < 1e-14);
        assert_eq!(p.psi_prime(0.0).unwrap(), 0.0);
        assert!((p.psi0_second(0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Potential::logarithmic(0.8, 1.6);
        let h = 1e-5;
        for k in 0..200 {
            let r = -0.99 + 1.98 * k as f64 / 199.0;
            let fd1 = (p.psi(r + h).unwrap() - p.psi(r - h).unwrap()) / (2.0 * h);
            let an1 = p.psi_prime(r).unwrap();
            assert!(
                (fd1 - an1).abs() <= 1e-6 * (1.0 + an1.abs()),
                "psi' mismatch at r={r}: fd={fd1} analytic={an1}"
            );
            let fd2 = (p.psi0_prime(r + h).unwrap() - p.psi0_prime(r - h).unwrap()) / (2.0 * h);
            let an2 = p.psi0_second(r).unwrap();
            assert!(
                (fd2 - an2).abs() <= 1e-6 * (1.0 + an2.abs()),
                "psi0'' mismatch at r={r}"
            );
            let fd3 = (p.psi0_second(r + h).unwrap() - p.psi0_second(r - h).unwrap()) / (2.0 * h);
            let an3 = p.psi0_third(r).unwrap();
            assert!(
                (fd3 - an3).abs() <= 1e-5 * (1.0 + an3.abs()),
                "psi0''' mismatch at r={r}"
            );
        }
    }

    #[test]
    fn quartic_split_reproduces_double_well() {
        let p = Potential::quartic();
        for k in 0..50 {
            let r = -1.4 + 2.8 * k as f64 / 49.0;
            let direct = 0.25 * (1.0 - r * r) * (1.0 - r * r);
            let split = p.psi0(r).unwrap() - 0.5 * p.theta0 * r * r;
            assert!((direct - split).abs() < 1e-14);
        }
        assert_eq!(p.min_value(), 0.0);
    }

    #[test]
    fn convexity_lower_bound_holds_on_samples() {
        let p = Potential::logarithmic(0.8, 1.6);
        for k in 0..1000 {
            let r = -0.9999 + 1.9998 * k as f64 / 999.0;
            assert!(p.psi0_second(r).unwrap() >= p.theta);
        }
    }

    #[test]
    fn domain_errors_are_reported() {
        let p = Potential::logarithmic(0.8, 1.6);
        assert!(matches!(p.psi(1.5), Err(PotentialError::OutsideDomain { .. })));
        assert!(matches!(p.psi0_prime(1.0), Err(PotentialError::SingularAt { .. })));
        assert!(matches!(p.psi0_second(-1.0), Err(PotentialError::SingularAt { .. })));
        // Quartic is defined everywhere.
        assert!(Potential::quartic().psi(2.0).is_ok());
    }

    #[test]
    fn clamped_evaluation_flags_barrier_hits() {
        let p = Potential::logarithmic(0.8, 1.6).with_barrier(1e-9);
        let mut events = 0;
        let inside = p.psi0_prime_clamped(0.5, &mut events);
        assert_eq!(events, 0);
        assert!((inside - 0.8 * 0.5f64.atanh()).abs() < 1e-15);
        let near = p.psi0_prime_clamped(1.0 - 1e-12, &mut events);
        assert_eq!(events, 1);
        assert!(near.is_finite());
        let exact = p.psi0_prime_clamped(-1.0, &mut events);
        assert_eq!(events, 2);
        assert!(exact.is_finite() && exact < 0.0);
    }

    #[test]
    fn validator_passes_logarithmic_potential() {
        let p = Potential::logarithmic(0.8, 1.6);
        let rep = validate_hypotheses(&p, 2001).unwrap();
        assert!(rep.convexity_ok && rep.tail_monotone_ok);
        assert!((rep.min_second_derivative - 0.8).abs() < 1e-6);
        assert!(rep.growth_constant <= 2.0 / 0.8 + 1e-9);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn validator_passes_quartic_trivially() {
        let rep = validate_hypotheses(&Potential::quartic(), 500).unwrap();
        assert!(rep.min_second_derivative >= 0.0);
        assert!(rep.growth_constant.is_finite());
    }

    #[test]
    fn validator_warns_without_double_well() {
        let p = Potential::logarithmic(1.2, 1.0);
        let rep = validate_hypotheses(&p, 500).unwrap();
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn validator_rejects_corrupted_second_derivative() {
        let p = Potential::logarithmic(1.0, 2.0);
        let corrupt = |r: f64| {
            if (r - 0.5).abs() < 5e-3 {
                0.5 * p.theta
            } else {
                p.psi0_second(r).unwrap()
            }
        };
        let err = validate_hypotheses_with(
            |r| p.psi0_prime(r).unwrap(),
            corrupt,
            p.theta,
            true,
            2001,
        )
        .unwrap_err();
        match err {
            ValidationError::Violation { check, r, .. } => {
                assert!(check.contains("convexity"));
                assert!((r - 0.5).abs() < 6e-3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validator_requires_enough_samples() {
        let p = Potential::logarithmic(0.8, 1.6);
        assert!(matches!(
            validate_hypotheses(&p, 99),
            Err(ValidationError::TooFewSamples(99))
        ));
    }

    #[test]
    fn min_value_is_attained_inside_for_double_well() {
        let p = Potential::logarithmic(0.8, 1.6);
        let m = p.min_value();
        assert!(m < p.psi(0.0).unwrap());
        for k in 0..=1000 {
            let r = -1.0 + 2.0 * k as f64 / 1000.0;
            assert!(p.psi(r).unwrap() >= m - 1e-12);
        }
    }
}
