use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, Dataset, LearnError};

pub const EVAL_BOOTSTRAP_REPLICATES: usize = 2000;

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs(classes: &[String], actual: &[usize], predicted: &[usize]) -> Self {
        let k = classes.len();
        let mut counts = vec![vec![0; k]; k];
        for (&a, &p) in actual.iter().zip(predicted) {
            counts[a][p] += 1;
        }
        Self { classes: classes.to_vec(), counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }

    /// Cohen's kappa. When chance agreement is total (both marginals on one
    /// class) the observed agreement is total too and kappa is taken as 1.
    pub fn kappa(&self) -> f64 {
        // (n * diag - sum(row * col)) / (n^2 - sum(row * col)) in exact
        // integer arithmetic, with a single rounding at the division.
        let n = self.total() as u128;
        let k = self.counts.len();
        let diag: u128 = (0..k).map(|i| self.counts[i][i] as u128).sum();
        let chance: u128 = (0..k)
            .map(|i| {
                let row: u64 = self.counts[i].iter().sum();
                let col: u64 = self.counts.iter().map(|r| r[i]).sum();
                row as u128 * col as u128
            })
            .sum();
        if chance >= n * n {
            return 1.0;
        }
        ((n * diag) as i128 - chance as i128) as f64 / (n * n - chance) as f64
    }

    /// One-vs-rest F1 of class `c`; zero when precision + recall is zero.
    pub fn f1(&self, c: usize) -> f64 {
        let tp = self.counts[c][c] as f64;
        let predicted: u64 = self.counts.iter().map(|r| r[c]).sum();
        let actual: u64 = self.counts[c].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (0..self.counts.len()).map(|c| self.f1(c)).sum::<f64>() / self.counts.len() as f64
    }
}

/// Landis and Koch agreement band.
pub fn kappa_band(kappa: f64) -> &'static str {
    if kappa < 0.0 {
        "poor"
    } else if kappa <= 0.20 {
        "slight"
    } else if kappa <= 0.40 {
        "fair"
    } else if kappa <= 0.60 {
        "moderate"
    } else if kappa <= 0.80 {
        "substantial"
    } else {
        "almost_perfect"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub class: String,
    pub f1: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub target: crate::features::Target,
    pub n_test: usize,
    pub accuracy: Estimate,
    pub kappa: Estimate,
    pub kappa_band: String,
    pub f1: Vec<ClassF1>,
    pub macro_f1: Estimate,
    /// F1 of the positive class for binary targets.
    pub positive_f1: Option<Estimate>,
    pub confusion: ConfusionMatrix,
    pub interval_method: String,
    pub n_bootstrap: usize,
    pub seed: u64,
}

fn percentile_half_width(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let lo = crate::stats::quantile_sorted(&values, 0.025);
    let hi = crate::stats::quantile_sorted(&values, 0.975);
    (hi - lo) / 2.0
}

/// Score `model` on `test`.
///
/// Accuracy carries a 95% normal-approximation binomial half-width. Kappa and
/// F1 carry half the width of a 95% percentile interval from resampling the
/// test rows `EVAL_BOOTSTRAP_REPLICATES` times.
pub fn evaluate(model: &dyn Classifier, test: &Dataset, seed: u64) -> Result<EvalReport, LearnError> {
    if test.is_empty() {
        return Err(LearnError::EmptyTest);
    }
    if test.n_features() != model.feature_names().len() {
        return Err(LearnError::Dimension { expected: model.feature_names().len(), got: test.n_features() });
    }
    let predicted: Vec<usize> = test.x.par_iter().map(|x| model.predict(x)).collect();
    let classes = model.classes().to_vec();
    let confusion = ConfusionMatrix::from_pairs(&classes, &test.y, &predicted);
    let n = test.len();
    let k = classes.len();

    let replicates: Vec<(f64, Vec<f64>, f64)> = (0..EVAL_BOOTSTRAP_REPLICATES)
        .into_par_iter()
        .map(|b| {
            let mut rng = crate::seed::rng(seed, "eval-bootstrap", b as u64);
            let mut m = vec![vec![0u64; k]; k];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                m[test.y[i]][predicted[i]] += 1;
            }
            let cm = ConfusionMatrix { classes: Vec::new(), counts: m };
            (cm.kappa(), (0..k).map(|c| cm.f1(c)).collect(), cm.macro_f1())
        })
        .collect();

    let acc = confusion.accuracy();
    let kappa = confusion.kappa();
    let f1: Vec<ClassF1> = (0..k)
        .map(|c| ClassF1 {
            class: classes[c].clone(),
            f1: Estimate {
                value: confusion.f1(c),
                half_width: percentile_half_width(replicates.iter().map(|r| r.1[c]).collect()),
            },
        })
        .collect();
    let positive_f1 = test
        .target
        .positive_class()
        .and_then(|p| f1.iter().find(|c| c.class == p))
        .map(|c| c.f1);
    Ok(EvalReport {
        schema_version: crate::SCHEMA_VERSION,
        target: test.target,
        n_test: n,
        accuracy: Estimate { value: acc, half_width: 1.96 * (acc * (1.0 - acc) / n as f64).sqrt() },
        kappa: Estimate { value: kappa, half_width: percentile_half_width(replicates.iter().map(|r| r.0).collect()) },
        kappa_band: kappa_band(kappa).to_owned(),
        f1,
        macro_f1: Estimate {
            value: confusion.macro_f1(),
            half_width: percentile_half_width(replicates.iter().map(|r| r.2).collect()),
        },
        positive_f1,
        confusion,
        interval_method: format!(
            "accuracy: 95% normal-approximation binomial; kappa and F1: 95% percentile bootstrap over test rows ({EVAL_BOOTSTRAP_REPLICATES} replicates)"
        ),
        n_bootstrap: EVAL_BOOTSTRAP_REPLICATES,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let classes = (0..counts.len()).map(|i| format!("c{i}")).collect();
        ConfusionMatrix { classes, counts }
    }

    #[test]
    fn hand_computed_two_class_case() {
        let m = cm(vec![vec![20, 5], vec![10, 15]]);
        assert_eq!(m.accuracy(), 0.7);
        assert_eq!(m.kappa(), 0.4);
        assert_eq!(kappa_band(0.60), "moderate");
        assert_eq!(kappa_band(0.61), "substantial");
        assert_eq!(kappa_band(0.2), "slight");
        assert_eq!(kappa_band(-0.1), "poor");
    }

    #[test]
    fn perfect_predictions() {
        let m = cm(vec![vec![4, 0, 0], vec![0, 3, 0], vec![0, 0, 7]]);
        assert_eq!((m.accuracy(), m.kappa()), (1.0, 1.0));
        assert!((0..3).all(|c| m.f1(c) == 1.0));
    }

    #[test]
    fn f1_is_zero_without_hits() {
        let m = cm(vec![vec![0, 3], vec![0, 5]]);
        assert_eq!(m.f1(0), 0.0);
    }
}
