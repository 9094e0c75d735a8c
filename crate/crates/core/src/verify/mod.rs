//! Certification harness. Each check evaluates one family of deterministic
//! inequalities on trained objects and reports the most negative
//! normalized margin observed.

mod approx;
mod catalogue;
mod gd;
mod mirror;
mod suite;
mod sweep;

pub use approx::{
    brute_force_approx_error, check_reg_trafo, continuum_approx_error, AnalyticLsProblem, ApproxEstimate,
    CoefficientGrid, GridTable,
};
pub use catalogue::{
    check_clipping_risk, check_duality_algebra, check_geometric_grids, check_loss_catalogue, check_match_accuracy,
    check_rerm_closed_form, check_rerm_minimality, check_rerm_paths,
};
pub use gd::{
    check_fejer, check_gd_risk_monotone, check_norm_bound_four, check_risk_matching_17,
    check_self_regularization_from, check_self_regularization_gd, check_telescoping, fejer_and_telescoping,
    matched_comparators, random_comparators, Comparator,
};
pub use mirror::{
    check_bregman_contraction, check_key_recursion, check_mirror_loss_monotone, check_p2_equivalence,
    level_set_comparators, MirrorInstance,
};
pub use suite::{mirror_checks, reference_approx_problem, reg_trafo_checks, run_default_suite, suite_csv, SuiteConfig};
pub use sweep::{run_gd_sweep, sweep_instance, SweepConfig, SweepInstance};

/// Algebraic identities.
pub const TOL_ALGEBRAIC: f64 = 1e-8;
/// Inequalities involving RERM solutions.
pub const TOL_SOLVER: f64 = 1e-6;
const MAX_DETAILS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct Detail {
    pub instance: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `(rhs - lhs) / scale`.
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Most negative `(rhs - lhs) / scale` over all instances.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Violating instances, capped.
    pub details: Vec<Detail>,
    pub worst: Option<Detail>,
    /// Instances left out, with the reason.
    pub skipped: Vec<String>,
    /// Named diagnostic value, e.g. a maximal observed ratio.
    pub diagnostic: Option<(String, f64)>,
}

impl CheckResult {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            tolerance,
            passed: false,
            details: Vec::new(),
            worst: None,
            skipped: Vec::new(),
            diagnostic: None,
        }
    }

    /// Records `lhs <= rhs` with slack normalized by `scale`.
    pub fn record(&mut self, instance: impl FnOnce() -> String, lhs: f64, rhs: f64, scale: f64) {
        let slack = if lhs.is_nan() || rhs.is_nan() { f64::NEG_INFINITY } else { (rhs - lhs) / scale.max(f64::MIN_POSITIVE) };
        self.instances += 1;
        let violated = !(slack >= -self.tolerance);
        if violated {
            self.violations += 1;
        }
        if violated || slack < self.worst_slack {
            let detail = Detail { instance: instance(), lhs, rhs, slack };
            if violated && self.details.len() < MAX_DETAILS {
                self.details.push(detail.clone());
            }
            if slack < self.worst_slack {
                self.worst_slack = slack;
                self.worst = Some(detail);
            }
        }
        self.refresh();
    }

    pub fn skip(&mut self, reason: String) {
        self.skipped.push(reason);
    }

    pub fn note_max(&mut self, label: &str, value: f64) {
        match &mut self.diagnostic {
            Some((_, v)) if *v >= value => {}
            _ => self.diagnostic = Some((label.to_string(), value)),
        }
    }

    fn refresh(&mut self) {
        self.passed = self.instances > 0 && self.violations == 0;
    }

    /// Folds another result of the same check into this one, prefixing its
    /// instance ids.
    pub fn merge(&mut self, other: CheckResult, prefix: &str) {
        self.instances += other.instances;
        self.violations += other.violations;
        if other.worst_slack < self.worst_slack {
            self.worst_slack = other.worst_slack;
            self.worst = other.worst.map(|mut d| {
                d.instance = format!("{prefix}/{}", d.instance);
                d
            });
        }
        for mut d in other.details {
            if self.details.len() < MAX_DETAILS {
                d.instance = format!("{prefix}/{}", d.instance);
                self.details.push(d);
            }
        }
        self.skipped.extend(other.skipped.into_iter().map(|s| format!("{prefix}/{s}")));
        if let Some((label, v)) = other.diagnostic {
            self.note_max(&label, v);
        }
        self.refresh();
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} {}: {} instances, {} violations, worst slack {:.3e} (tol {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.violations,
            self.worst_slack,
            self.tolerance
        );
        if let Some((label, v)) = &self.diagnostic {
            s.push_str(&format!(", {label} {v:.6}"));
        }
        if !self.skipped.is_empty() {
            s.push_str(&format!(", {} skipped", self.skipped.len()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_and_merge() {
        let mut a = CheckResult::new("x", 1e-6);
        assert!(!a.passed);
        a.record(|| "i0".into(), 1.0, 2.0, 1.0);
        assert!(a.passed);
        assert_eq!(a.worst_slack, 1.0);
        let mut b = CheckResult::new("x", 1e-6);
        b.record(|| "i1".into(), 3.0, 2.0, 2.0);
        b.skip("i2: out of range".into());
        a.merge(b, "s");
        assert!(!a.passed);
        assert_eq!((a.instances, a.violations), (2, 1));
        assert_eq!(a.worst_slack, -0.5);
        assert_eq!(a.details[0].instance, "s/i1");
        assert_eq!(a.skipped, vec!["s/i2: out of range".to_string()]);
        let mut c = CheckResult::new("nan", 1e-6);
        c.record(|| "n".into(), f64::NAN, 1.0, 1.0);
        assert!(!c.passed);
    }
}
