//! Central finite-difference verification of analytic gradients.

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub h: f64,
    pub tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { h: 1e-6, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Element index where `max_rel_error` occurred.
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Elements the probe declined to evaluate (e.g. a ReLU kink inside `±h`).
    pub skipped: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= self.tol
    }

    /// Folds another report into this one, keeping the worst element.
    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_index = other.worst_index;
            self.worst_analytic = other.worst_analytic;
            self.worst_numeric = other.worst_numeric;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
    }

    pub fn empty(tol: f64) -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            worst_index: None,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            checked: 0,
            skipped: 0,
            tol,
        }
    }
}

impl GradCheck {
    /// Checks every element of `x` by central differences of `f`.
    pub fn check_all(&self, x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradCheckReport {
        self.check(x, analytic, 0..x.len(), |v| Some(f(v)))
    }

    /// Central differences of `f` at the listed elements. `f` returns
    /// `None` when the perturbed point is not comparable (the element is
    /// then counted as skipped).
    pub fn check(
        &self,
        x: &[f64],
        analytic: &[f64],
        indices: impl IntoIterator<Item = usize>,
        mut f: impl FnMut(&[f64]) -> Option<f64>,
    ) -> GradCheckReport {
        assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
        let mut probe = x.to_vec();
        self.compare(analytic, indices, |i| {
            let orig = probe[i];
            let (hi, lo) = (orig + self.h, orig - self.h);
            probe[i] = hi;
            let plus = f(&probe);
            probe[i] = lo;
            let minus = f(&probe);
            probe[i] = orig;
            // Divide by the step actually taken after rounding `orig ± h`.
            Some((plus? - minus?) / (hi - lo))
        })
    }

    /// Compares `analytic` against externally computed numeric derivatives.
    /// `numeric(i)` returns `None` to skip element `i`.
    pub fn compare(
        &self,
        analytic: &[f64],
        indices: impl IntoIterator<Item = usize>,
        mut numeric: impl FnMut(usize) -> Option<f64>,
    ) -> GradCheckReport {
        let mut report = GradCheckReport::empty(self.tol);
        for i in indices {
            let Some(n) = numeric(i) else {
                report.skipped += 1;
                continue;
            };
            let err = rel_error(analytic[i], n);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_index.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst_index = Some(i);
                report.worst_analytic = analytic[i];
                report.worst_numeric = n;
            }
        }
        report
    }
}
