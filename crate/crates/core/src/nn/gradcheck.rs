//! Central finite-difference gradient checking.

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-3;

/// Denominator floor for relative errors; below it both gradients count as zero.
pub const REL_FLOOR: f64 = 1e-8;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`; 0 when both are zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Max relative error over one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub probes: usize,
    /// Candidate coordinates rejected because a perturbation crossed a ReLU kink.
    pub rejected: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GroupReport {
    pub fn passed(&self) -> bool {
        self.probes > 0 && self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.groups.is_empty() && self.groups.iter().all(GroupReport::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_error))
    }

    pub fn push(&mut self, group: GroupReport) {
        self.groups.push(group);
    }
}

/// Compares `analytic[idx]` with a central difference for candidate indices
/// until `wanted` probes are accepted.
///
/// `loss_at(idx, delta)` evaluates the loss with coordinate `idx` shifted by
/// `delta`, returning `None` if that point is not differentiable (e.g. a ReLU
/// input changed sign); such candidates are skipped and counted as rejected.
pub fn check_group(
    name: &str,
    analytic: &[f64],
    candidates: impl IntoIterator<Item = usize>,
    wanted: usize,
    tolerance: f64,
    step: f64,
    mut loss_at: impl FnMut(usize, f64) -> Option<f64>,
) -> GroupReport {
    let mut report = GroupReport {
        name: name.to_string(),
        probes: 0,
        rejected: 0,
        max_rel_error: 0.0,
        tolerance,
    };
    for idx in candidates {
        if report.probes >= wanted {
            break;
        }
        let (Some(plus), Some(minus)) = (loss_at(idx, step), loss_at(idx, -step)) else {
            report.rejected += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * step);
        report.max_rel_error = report.max_rel_error.max(relative_error(analytic[idx], numeric));
        report.probes += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_zero_is_zero_error() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        let x = [0.5, -1.5, 2.0];
        let analytic: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let report = check_group("quad", &analytic, 0..3, 3, 1e-9, FD_STEP, |i, d| {
            let mut y = x;
            y[i] += d;
            Some(y.iter().map(|v| v * v).sum())
        });
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.probes, 3);
    }

    #[test]
    fn rejected_candidates_are_skipped() {
        let report = check_group("kink", &[1.0, 1.0], 0..2, 1, 1e-6, FD_STEP, |i, d| {
            if i == 0 {
                None
            } else {
                Some(d)
            }
        });
        assert_eq!(report.rejected, 1);
        assert_eq!(report.probes, 1);
        assert!(report.passed());
    }
}
