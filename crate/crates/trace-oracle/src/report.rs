//! Confusion-matrix evaluation reports.
//!
//! FAIL is the positive class throughout: a true positive is a failing trace
//! classified FAIL. Ratio metrics are absent (`None`) when their denominator
//! is zero — a report over an all-passing test set has no recall, rather
//! than a fake zero — and absent metrics serialize as empty CSV cells.

use serde::{Deserialize, Serialize};

use crate::trace::Verdict;

/// Counts of (predicted, actual) verdict pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Predicted FAIL, actually FAIL.
    pub tp: u64,
    /// Predicted FAIL, actually PASS.
    pub fp: u64,
    /// Predicted PASS, actually PASS.
    pub tn: u64,
    /// Predicted PASS, actually FAIL.
    pub r#fn: u64,
}

impl EvalReport {
    /// Tallies (predicted, actual) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Verdict, Verdict)>) -> Self {
        let mut r = EvalReport::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (Verdict::Fail, Verdict::Fail) => r.tp += 1,
                (Verdict::Fail, Verdict::Pass) => r.fp += 1,
                (Verdict::Pass, Verdict::Pass) => r.tn += 1,
                (Verdict::Pass, Verdict::Fail) => r.r#fn += 1,
            }
        }
        r
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.r#fn
    }

    /// tp / (tp + fp); absent when nothing was predicted FAIL.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// tp / (tp + fn); absent when nothing actually failed.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.r#fn)
    }

    /// tn / (tn + fp); absent when nothing actually passed.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// Harmonic mean of precision and recall; absent when either is absent
    /// or both are zero.
    pub fn f1(&self) -> Option<f64> {
        let p = self.precision()?;
        let r = self.recall()?;
        if p + r == 0.0 {
            None
        } else {
            Some(2.0 * p * r / (p + r))
        }
    }

    /// Header matching [`EvalReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed"
    }

    /// One CSV row; `epochs` and `seed` record the run that produced the
    /// evaluated model.
    pub fn csv_row(&self, epochs: usize, seed: u64) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.tp,
            self.fp,
            self.tn,
            self.r#fn,
            cell(self.precision()),
            cell(self.recall()),
            cell(self.specificity()),
            cell(self.f1()),
            epochs,
            seed
        )
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(tp: u64, fp: u64, tn: u64, fn_: u64) -> EvalReport {
        EvalReport { tp, fp, tn, r#fn: fn_ }
    }

    #[test]
    fn metrics_match_hand_arithmetic() {
        let r = report(8, 2, 9, 1);
        assert_eq!(r.total(), 20);
        assert_eq!(r.precision(), Some(8.0 / 10.0));
        assert_eq!(r.recall(), Some(8.0 / 9.0));
        assert_eq!(r.specificity(), Some(9.0 / 11.0));
        let p = 8.0 / 10.0;
        let rec = 8.0 / 9.0;
        assert_eq!(r.f1(), Some(2.0 * p * rec / (p + rec)));
    }

    #[test]
    fn from_pairs_routes_every_combination() {
        use Verdict::*;
        let pairs = vec![
            (Fail, Fail),
            (Fail, Fail),
            (Fail, Pass),
            (Pass, Pass),
            (Pass, Pass),
            (Pass, Pass),
            (Pass, Fail),
        ];
        assert_eq!(EvalReport::from_pairs(pairs), report(2, 1, 3, 1));
        assert_eq!(EvalReport::from_pairs(std::iter::empty()), report(0, 0, 0, 0));
    }

    #[test]
    fn zero_denominators_yield_absent_metrics_not_zero() {
        // Nothing predicted FAIL: precision is absent, recall is 0.
        let r = report(0, 0, 5, 3);
        assert_eq!(r.precision(), None);
        assert_eq!(r.recall(), Some(0.0));
        assert_eq!(r.f1(), None);

        // Nothing actually failed: recall absent.
        let r = report(0, 2, 5, 0);
        assert_eq!(r.recall(), None);
        assert_eq!(r.precision(), Some(0.0));
        assert_eq!(r.f1(), None);

        // Nothing actually passed: specificity absent.
        let r = report(3, 0, 0, 1);
        assert_eq!(r.specificity(), None);

        // Both precision and recall present but zero: F1 absent.
        let r = report(0, 1, 1, 1);
        assert_eq!(r.precision(), Some(0.0));
        assert_eq!(r.recall(), Some(0.0));
        assert_eq!(r.f1(), None);

        // Empty report has no metrics at all.
        let r = report(0, 0, 0, 0);
        assert_eq!(r.precision(), None);
        assert_eq!(r.recall(), None);
        assert_eq!(r.specificity(), None);
        assert_eq!(r.f1(), None);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let r = report(10, 0, 10, 0);
        assert_eq!(r.precision(), Some(1.0));
        assert_eq!(r.recall(), Some(1.0));
        assert_eq!(r.specificity(), Some(1.0));
        assert_eq!(r.f1(), Some(1.0));
    }

    #[test]
    fn csv_row_spells_out_counts_and_blanks_absent_metrics() {
        let r = report(8, 2, 9, 1);
        assert_eq!(EvalReport::csv_header(), "tp,fp,tn,fn,precision,recall,specificity,f1,epochs,seed");
        assert_eq!(
            r.csv_row(17, 42),
            "8,2,9,1,0.8,0.8888888888888888,0.8181818181818182,0.8421052631578948,17,42"
        );
        let empty = report(0, 0, 0, 0);
        assert_eq!(empty.csv_row(0, 7), "0,0,0,0,,,,,0,7");
    }
}
