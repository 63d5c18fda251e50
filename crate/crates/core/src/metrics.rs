//! Binary classification metrics. Class 1 ("diseased") is the positive class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_binary(labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| l > 1) {
        Some(l) => Err(Error::invalid(format!("binary label expected, got {l}"))),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    check_binary(y_true)?;
    check_binary(y_pred)?;
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub mcc: f64,
    pub kappa: f64,
    /// Names of metrics whose denominator was zero; those report 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Accuracy, recall, precision, F1, MCC and Cohen's kappa in their
/// closed binary forms:
///
/// ```text
/// MCC = (TP·TN − FP·FN) / √((TP+FP)(TN+FP)(TP+FN)(TN+FN))
/// κ   = 2(TP·TN − FP·FN) / ((TP+FP)(TN+FP) + (TP+FN)(TN+FN))
/// ```
pub fn scalar_metrics(c: &ConfusionCounts) -> Result<ScalarMetrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::invalid("no samples to evaluate"));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den == 0.0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let accuracy = (tp + tn) / (tp + tn + fp + fn_);
    let recall = ratio("recall", tp, tp + fn_);
    let precision = ratio("precision", tp, tp + fp);
    let f1 = ratio("f1", 2.0 * precision * recall, precision + recall);
    let mcc = ratio(
        "mcc",
        tp * tn - fp * fn_,
        ((tp + fp) * (tn + fp) * (tp + fn_) * (tn + fn_)).sqrt(),
    );
    let kappa = ratio(
        "kappa",
        2.0 * (tp * tn - fp * fn_),
        (tp + fp) * (tn + fp) + (tp + fn_) * (tn + fn_),
    );
    Ok(ScalarMetrics {
        accuracy,
        recall,
        precision,
        f1,
        mcc,
        kappa,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub area: f64,
}

impl CurvePoints {
    /// CSV with a `# kind=… area=…` comment line and an `x,y` header.
    pub fn to_csv(&self) -> String {
        let (kind, xs, ys) = match self.kind {
            CurveKind::Roc => ("roc", "fpr", "tpr"),
            CurveKind::Pr => ("pr", "recall", "precision"),
        };
        let mut out = format!("# kind={kind} area={}\n{xs},{ys}\n", self.area);
        for (x, y) in &self.points {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Cumulative `(tp, fp)` after each group of tied scores, highest scores
/// first.
fn threshold_steps(scores: &[f64], y_true: &[usize]) -> Result<Vec<(u64, u64)>> {
    if scores.len() != y_true.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: y_true.len(),
        });
    }
    check_binary(y_true)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if y_true[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        steps.push((tp, fp));
    }
    Ok(steps)
}

/// ROC curve over the distinct scores; tied scores form a single step, so the
/// trapezoid area equals the Mann–Whitney statistic with half credit for
/// ties.
pub fn roc_curve(scores: &[f64], y_true: &[usize]) -> Result<CurvePoints> {
    let steps = threshold_steps(scores, y_true)?;
    let (p, n) = steps.last().copied().unwrap_or((0, 0));
    if p == 0 {
        return Err(Error::SingleClass(0));
    }
    if n == 0 {
        return Err(Error::SingleClass(1));
    }
    let mut points = vec![(0.0, 0.0)];
    // twice the area, in units of 1 / (P·N)
    let mut doubled: u128 = 0;
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    for &(tp, fp) in &steps {
        doubled += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
        prev_tp = tp;
        prev_fp = fp;
    }
    let area = doubled as f64 / (2.0 * p as f64 * n as f64);
    Ok(CurvePoints {
        kind: CurveKind::Roc,
        points,
        area,
    })
}

/// Precision–recall curve starting at `(0, 1)`; the area is average
/// precision, `Σ (R_k − R_{k−1}) · P_k` over the distinct thresholds.
pub fn pr_curve(scores: &[f64], y_true: &[usize]) -> Result<CurvePoints> {
    let steps = threshold_steps(scores, y_true)?;
    let p = steps.last().map_or(0, |s| s.0);
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let mut points = vec![(0.0, 1.0)];
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &(tp, fp) in &steps {
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(CurvePoints {
        kind: CurveKind::Pr,
        points,
        area,
    })
}

/// Everything reported for one set of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub kappa: f64,
    pub mcc: f64,
    pub average_precision: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Scores are positive-class probabilities; predictions threshold at 0.5.
/// AUC and AP are reported as 0 (and flagged) when only one class is
/// present.
pub fn evaluate(scores: &[f64], y_true: &[usize]) -> Result<EvalReport> {
    let y_pred: Vec<usize> = scores.iter().map(|&s| usize::from(s >= 0.5)).collect();
    let c = confusion(y_true, &y_pred)?;
    let s = scalar_metrics(&c)?;
    let mut degenerate = s.degenerate.clone();
    let auc = match roc_curve(scores, y_true) {
        Ok(curve) => curve.area,
        Err(Error::SingleClass(_)) => {
            degenerate.push("auc".into());
            0.0
        }
        Err(e) => return Err(e),
    };
    let average_precision = match pr_curve(scores, y_true) {
        Ok(curve) => curve.area,
        Err(Error::NoPositives) => {
            degenerate.push("average_precision".into());
            0.0
        }
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        confusion: c,
        accuracy: s.accuracy,
        auc,
        f1: s.f1,
        recall: s.recall,
        precision: s.precision,
        kappa: s.kappa,
        mcc: s.mcc,
        average_precision,
        degenerate,
    })
}
