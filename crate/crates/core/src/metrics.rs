//! Multi-class classification metrics and the edibility projection.
//!
//! Rows of a confusion matrix are true classes, columns predicted classes.
//! Classes with no true samples are left out of macro averages and reported in
//! `excluded_classes`; any other zero denominator yields 0 and is recorded in
//! `flags`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix {
            n: n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.n + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|j| self.get(c, j)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Simultaneous relabelling of rows and columns: class `c` becomes `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut out = ConfusionMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.counts[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        Ok(out)
    }

    /// Class-name header row followed by one row of counts per true class.
    pub fn to_csv(&self, class_names: &[String]) -> Result<String> {
        if class_names.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} class names for {} classes",
                class_names.len(),
                self.n
            )));
        }
        let mut s = class_names.join(",");
        s.push('\n');
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        Ok(s)
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Index(format!(
                "class pair ({t}, {p}) outside {n_classes} classes"
            )));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

/// One-vs-rest rates of a single class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRates {
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasicMetrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassRates>,
    pub precision_macro: f64,
    pub precision_weighted: f64,
    pub recall_macro: f64,
    pub recall_weighted: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub specificity_macro: f64,
    pub specificity_weighted: f64,
    pub balanced_accuracy_macro: f64,
    pub balanced_accuracy_weighted: f64,
    pub excluded_classes: Vec<usize>,
    pub flags: Vec<String>,
}

fn ratio(num: u64, den: u64, what: &str, c: usize, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(format!("class {c}: {what} undefined, reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn basic_metrics(cm: &ConfusionMatrix) -> Result<BasicMetrics> {
    let n = cm.n_classes();
    let total = cm.total();
    if total == 0 {
        return Err(Error::Degenerate("no samples to score".into()));
    }
    let mut flags = Vec::new();
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.get(c, c);
        let support = cm.row_sum(c);
        let predicted = cm.col_sum(c);
        let fp = predicted - tp;
        let fn_ = support - tp;
        let tn = total - tp - fp - fn_;
        let mut local = Vec::new();
        let precision = ratio(tp, predicted, "precision", c, &mut local);
        let recall = ratio(tp, support, "recall", c, &mut local);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_, "F1", c, &mut local);
        let specificity = ratio(tn, tn + fp, "specificity", c, &mut local);
        if support > 0 {
            flags.extend(local);
        }
        per_class.push(ClassRates {
            support,
            precision,
            recall,
            f1,
            specificity,
            balanced_accuracy: (recall + specificity) / 2.0,
        });
    }
    let included: Vec<usize> = (0..n).filter(|&c| per_class[c].support > 0).collect();
    let excluded: Vec<usize> = (0..n).filter(|&c| per_class[c].support == 0).collect();
    for &c in &excluded {
        flags.push(format!("class {c}: no true samples, excluded from macro averages"));
    }
    let macro_avg = |f: &dyn Fn(&ClassRates) -> f64| {
        included.iter().map(|&c| f(&per_class[c])).sum::<f64>() / included.len() as f64
    };
    let weighted = |f: &dyn Fn(&ClassRates) -> f64| {
        per_class
            .iter()
            .map(|r| f(r) * r.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(BasicMetrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision_macro: macro_avg(&|r| r.precision),
        precision_weighted: weighted(&|r| r.precision),
        recall_macro: macro_avg(&|r| r.recall),
        recall_weighted: weighted(&|r| r.recall),
        f1_macro: macro_avg(&|r| r.f1),
        f1_weighted: weighted(&|r| r.f1),
        specificity_macro: macro_avg(&|r| r.specificity),
        specificity_weighted: weighted(&|r| r.specificity),
        balanced_accuracy_macro: macro_avg(&|r| r.balanced_accuracy),
        balanced_accuracy_weighted: weighted(&|r| r.balanced_accuracy),
        per_class,
        excluded_classes: excluded,
        flags,
    })
}

/// Covariance-form multi-class Matthews correlation.
///
/// A vanishing denominator gives 1 for a perfect matrix and 0 otherwise.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let n = cm.n_classes();
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let t: Vec<f64> = (0..n).map(|k| cm.row_sum(k) as f64).collect();
    let p: Vec<f64> = (0..n).map(|k| cm.col_sum(k) as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let tt: f64 = t.iter().map(|a| a * a).sum();
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den == 0.0 {
        return if cm.trace() == cm.total() && cm.total() > 0 { 1.0 } else { 0.0 };
    }
    ((c * s - pt) / den).clamp(-1.0, 1.0)
}

/// Class probabilities for one sample plus its true class.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPrediction {
    pub probs: Vec<f64>,
    pub label: usize,
}

impl ScoredPrediction {
    pub fn new(probs: Vec<f64>, label: usize) -> Result<Self> {
        if label >= probs.len() {
            return Err(Error::Index(format!("label {label} for {} classes", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Numeric("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric(format!("probabilities sum to {sum}")));
        }
        Ok(ScoredPrediction { probs, label })
    }

    /// Highest probability, ties to the lowest class id.
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `(fpr, tpr, precision, recall)` after each tie group, highest score first.
fn sweep(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64, f64, f64)>> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension("scores and labels differ in length".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("curve needs both positive and negative samples".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((
            fp as f64 / n_neg as f64,
            tp as f64 / n_pos as f64,
            tp as f64 / (tp + fp) as f64,
            tp as f64 / n_pos as f64,
        ));
    }
    Ok(points)
}

/// Trapezoidal ROC area over the tie-grouped threshold sweep.
pub fn roc_auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let pts = sweep(scores, positive)?;
    let (mut area, mut x0, mut y0) = (0.0, 0.0, 0.0);
    for &(x, y, _, _) in &pts {
        area += (x - x0) * (y + y0) / 2.0;
        x0 = x;
        y0 = y;
    }
    Ok(area)
}

/// Trapezoidal precision-recall area, anchored at recall 0 with the first
/// point's precision.
pub fn pr_auc_binary(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let pts = sweep(scores, positive)?;
    let (mut area, mut r0, mut p0) = (0.0, 0.0, pts[0].2);
    for &(_, _, p, r) in &pts {
        area += (r - r0) * (p + p0) / 2.0;
        r0 = r;
        p0 = p;
    }
    Ok(area)
}

fn one_vs_rest(scored: &[ScoredPrediction], c: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut s = Vec::with_capacity(scored.len());
    let mut y = Vec::with_capacity(scored.len());
    for sp in scored {
        let p = *sp
            .probs
            .get(c)
            .ok_or_else(|| Error::Index(format!("class {c} outside {} probabilities", sp.probs.len())))?;
        s.push(p);
        y.push(sp.label == c);
    }
    Ok((s, y))
}

pub fn roc_auc(scored: &[ScoredPrediction], c: usize) -> Result<f64> {
    let (s, y) = one_vs_rest(scored, c)?;
    roc_auc_binary(&s, &y)
}

pub fn pr_auc(scored: &[ScoredPrediction], c: usize) -> Result<f64> {
    let (s, y) = one_vs_rest(scored, c)?;
    pr_auc_binary(&s, &y)
}

/// Macro one-vs-rest mean over classes where the curve is defined, plus the
/// classes that were skipped. `None` when no class qualifies.
pub fn macro_auc(
    scored: &[ScoredPrediction],
    n_classes: usize,
    f: fn(&[ScoredPrediction], usize) -> Result<f64>,
) -> Result<(Option<f64>, Vec<usize>)> {
    let mut vals = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..n_classes {
        match f(scored, c) {
            Ok(v) => vals.push(v),
            Err(Error::Degenerate(_)) => skipped.push(c),
            Err(e) => return Err(e),
        }
    }
    let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    Ok((mean, skipped))
}

/// Everything reported for one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub n_samples: u64,
    pub basic: BasicMetrics,
    pub mcc: f64,
    pub roc_auc_macro: Option<f64>,
    pub pr_auc_macro: Option<f64>,
    pub flags: Vec<String>,
}

impl MetricReport {
    pub fn from_confusion(cm: &ConfusionMatrix, scored: Option<&[ScoredPrediction]>) -> Result<Self> {
        let basic = basic_metrics(cm)?;
        let mut flags = basic.flags.clone();
        let (mut roc, mut pr) = (None, None);
        if let Some(s) = scored {
            let (r, skipped) = macro_auc(s, cm.n_classes(), roc_auc)?;
            let (p, _) = macro_auc(s, cm.n_classes(), pr_auc)?;
            for c in skipped {
                flags.push(format!("class {c}: curve undefined, excluded from AUC averages"));
            }
            roc = r;
            pr = p;
        }
        Ok(MetricReport {
            n_samples: cm.total(),
            mcc: mcc(cm),
            basic,
            roc_auc_macro: roc,
            pr_auc_macro: pr,
            flags,
        })
    }

    pub fn from_scored(scored: &[ScoredPrediction], n_classes: usize) -> Result<Self> {
        let preds: Vec<usize> = scored.iter().map(ScoredPrediction::predicted).collect();
        let labels: Vec<usize> = scored.iter().map(|s| s.label).collect();
        Self::from_confusion(&confusion(&preds, &labels, n_classes)?, Some(scored))
    }

    pub fn accuracy(&self) -> f64 {
        self.basic.accuracy
    }

    /// Named real values; undefined curve areas are omitted.
    pub fn values(&self) -> BTreeMap<&'static str, f64> {
        let b = &self.basic;
        let mut m = BTreeMap::new();
        m.insert("n_samples", self.n_samples as f64);
        m.insert("accuracy", b.accuracy);
        m.insert("precision_macro", b.precision_macro);
        m.insert("precision_weighted", b.precision_weighted);
        m.insert("recall_macro", b.recall_macro);
        m.insert("recall_weighted", b.recall_weighted);
        m.insert("f1_macro", b.f1_macro);
        m.insert("f1_weighted", b.f1_weighted);
        m.insert("specificity_macro", b.specificity_macro);
        m.insert("specificity_weighted", b.specificity_weighted);
        m.insert("balanced_accuracy_macro", b.balanced_accuracy_macro);
        m.insert("balanced_accuracy_weighted", b.balanced_accuracy_weighted);
        m.insert("mcc", self.mcc);
        m.insert("excluded_classes", b.excluded_classes.len() as f64);
        if let Some(v) = self.roc_auc_macro {
            m.insert("roc_auc_macro", v);
        }
        if let Some(v) = self.pr_auc_macro {
            m.insert("pr_auc_macro", v);
        }
        m
    }

    pub fn to_json(&self) -> String {
        to_json_object(&self.values())
    }
}

/// Flat JSON object with keys in the map's order; floats keep full precision.
pub fn to_json_object(values: &BTreeMap<&'static str, f64>) -> String {
    let mut s = String::from("{\n");
    let n = values.len();
    for (i, (k, v)) in values.iter().enumerate() {
        let num = serde_json::Number::from_f64(*v)
            .map(|x| x.to_string())
            .unwrap_or_else(|| "null".into());
        let _ = write!(s, "  \"{k}\": {num}");
        s.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    s.push('}');
    s.push('\n');
    s
}

/// Binary view with class 1 = edible, class 0 = toxic.
#[derive(Clone, Debug, PartialEq)]
pub struct EdibilityReport {
    pub report: MetricReport,
    pub confusion: ConfusionMatrix,
    /// Toxic samples predicted edible.
    pub false_negative_toxic: u64,
}

impl EdibilityReport {
    pub fn to_json(&self) -> String {
        let mut v = self.report.values();
        v.insert("false_negative_toxic", self.false_negative_toxic as f64);
        to_json_object(&v)
    }
}

fn edible_of(c: usize, map: &[bool]) -> Result<bool> {
    map.get(c)
        .copied()
        .ok_or_else(|| Error::Index(format!("species {c} missing from edibility map")))
}

/// Projects species predictions through the edibility map and rescores.
pub fn edibility_collapse(preds: &[usize], labels: &[usize], edible: &[bool]) -> Result<EdibilityReport> {
    collapse(preds, labels, edible, None)
}

/// As [`edibility_collapse`], with curve areas from the summed edible
/// probability mass.
pub fn edibility_collapse_scored(scored: &[ScoredPrediction], edible: &[bool]) -> Result<EdibilityReport> {
    let preds: Vec<usize> = scored.iter().map(ScoredPrediction::predicted).collect();
    let labels: Vec<usize> = scored.iter().map(|s| s.label).collect();
    let mut binary = Vec::with_capacity(scored.len());
    for s in scored {
        let mut pe = 0.0;
        for (c, p) in s.probs.iter().enumerate() {
            if edible_of(c, edible)? {
                pe += p;
            }
        }
        let pe = pe.clamp(0.0, 1.0);
        binary.push(ScoredPrediction {
            probs: vec![1.0 - pe, pe],
            label: usize::from(edible_of(s.label, edible)?),
        });
    }
    collapse(&preds, &labels, edible, Some(&binary))
}

fn collapse(
    preds: &[usize],
    labels: &[usize],
    edible: &[bool],
    binary_scores: Option<&[ScoredPrediction]>,
) -> Result<EdibilityReport> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension("predictions and labels differ in length".into()));
    }
    let mut cm = ConfusionMatrix::zeros(2);
    let mut fnt = 0;
    for (&p, &t) in preds.iter().zip(labels) {
        let (pe, te) = (edible_of(p, edible)?, edible_of(t, edible)?);
        cm.add(usize::from(te), usize::from(pe));
        if !te && pe {
            fnt += 1;
        }
    }
    Ok(EdibilityReport {
        report: MetricReport::from_confusion(&cm, binary_scores)?,
        confusion: cm,
        false_negative_toxic: fnt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_example() {
        let cm = ConfusionMatrix::from_rows(&[vec![50, 10], vec![5, 35]]).unwrap();
        let m = basic_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 85.0 / 100.0);
        assert_eq!(m.per_class[0].recall, 50.0 / 60.0);
        assert_eq!(m.per_class[0].precision, 50.0 / 55.0);
    }

    #[test]
    fn perfect_matrix_scores_one() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 2]]).unwrap();
        let m = basic_metrics(&cm).unwrap();
        for v in [
            m.accuracy,
            m.precision_macro,
            m.recall_macro,
            m.f1_macro,
            m.specificity_macro,
            m.balanced_accuracy_macro,
            m.precision_weighted,
            m.f1_weighted,
        ] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(mcc(&cm), 1.0);
        assert!(m.flags.is_empty());
    }

    #[test]
    fn mcc_examples() {
        let swapped = ConfusionMatrix::from_rows(&[vec![0, 4], vec![6, 0]]).unwrap();
        assert_eq!(mcc(&swapped), -1.0);
        let one_col = ConfusionMatrix::from_rows(&[vec![4, 0], vec![6, 0]]).unwrap();
        assert_eq!(mcc(&one_col), 0.0);
        let uniform = ConfusionMatrix::from_rows(&vec![vec![7; 4]; 4]).unwrap();
        assert_eq!(mcc(&uniform), 0.0);
    }

    #[test]
    fn mcc_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<u64>> = (0..4).map(|_| (0..4).map(|_| rng.random_range(0..20)).collect()).collect();
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        let p = cm.permuted(&[2, 0, 3, 1]).unwrap();
        assert!((mcc(&cm) - mcc(&p)).abs() < 1e-15);
    }

    #[test]
    fn zero_support_class_excluded() {
        let cm = ConfusionMatrix::from_rows(&[vec![2, 0, 1], vec![0, 0, 0], vec![1, 0, 3]]).unwrap();
        let m = basic_metrics(&cm).unwrap();
        assert_eq!(m.excluded_classes, vec![1]);
        assert_eq!(m.recall_macro, (2.0 / 3.0 + 3.0 / 4.0) / 2.0);
        assert!(!m.flags.is_empty());
    }

    #[test]
    fn auc_examples() {
        let pos = [true, true, false, false];
        assert_eq!(roc_auc_binary(&[0.9, 0.8, 0.3, 0.1], &pos).unwrap(), 1.0);
        assert_eq!(roc_auc_binary(&[0.5; 4], &pos).unwrap(), 0.5);
        assert_eq!(pr_auc_binary(&[0.9, 0.8, 0.3, 0.1], &pos).unwrap(), 1.0);
        assert!(roc_auc_binary(&[0.2, 0.1], &[true, true]).is_err());
    }

    #[test]
    fn edibility_examples() {
        let edible = [true, true, false];
        let r = edibility_collapse(&[1, 0, 2], &[0, 1, 2], &edible).unwrap();
        assert_eq!(r.report.accuracy(), 1.0);
        let r = edibility_collapse(&[0, 2], &[2, 0], &edible).unwrap();
        assert_eq!(r.false_negative_toxic, 1);
        assert_eq!(r.report.accuracy(), 0.0);
    }

    #[test]
    fn csv_and_json() {
        let cm = ConfusionMatrix::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap();
        let csv = cm.to_csv(&["a".into(), "b".into()]).unwrap();
        assert_eq!(csv, "a,b\n1,2\n3,4\n");
        let json = MetricReport::from_confusion(&cm, None).unwrap().to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["accuracy"].as_f64().unwrap(), 0.5);
    }
}
