//! Group fairness gaps, one group against the rest.
//!
//! Every gap is `rate(g) − rate(rest)` where both rates are ratios of exact
//! integer counts. A rate with an empty denominator makes the gap undefined
//! (`None`); it is never replaced by 0.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Confusion counts for one set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn actual_positive(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_negative(&self) -> u64 {
        self.fp + self.tn
    }

    /// P(Ŷ = 1).
    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.predicted_positive(), self.total())
    }

    /// P(Ŷ = 1 | Y = 1).
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.actual_positive())
    }

    /// P(Ŷ = 1 | Y = 0).
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.actual_negative())
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    fn add(&self, o: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }

    fn sub(&self, o: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp - o.tp,
            fp: self.fp - o.fp,
            tn: self.tn - o.tn,
            fn_: self.fn_ - o.fn_,
        }
    }
}

fn check(y: &[u8], yhat: &[u8], groups: &[usize]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InvalidInput("no rows to evaluate".into()));
    }
    if y.len() != yhat.len() || y.len() != groups.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} labels, {} predictions, {} groups",
            y.len(),
            yhat.len(),
            groups.len()
        )));
    }
    if y.iter().chain(yhat).any(|&v| v > 1) {
        return Err(Error::InvalidInput("labels and predictions must be 0 or 1".into()));
    }
    Ok(())
}

/// Confusion counts per group index; the result has `n_groups` entries
/// (at least one more than the largest index seen).
pub fn confusion_by_group(y: &[u8], yhat: &[u8], groups: &[usize], n_groups: usize) -> Result<Vec<Confusion>> {
    check(y, yhat, groups)?;
    let k = n_groups.max(groups.iter().max().map_or(0, |g| g + 1));
    let mut out = vec![Confusion::default(); k];
    for ((&t, &p), &g) in y.iter().zip(yhat).zip(groups) {
        let c = &mut out[g];
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(out)
}

/// Splits the per-group counts into (group `g`, everyone else).
fn versus_rest(counts: &[Confusion], g: usize) -> (Confusion, Confusion) {
    let total = counts.iter().fold(Confusion::default(), |a, c| a.add(c));
    let inside = counts.get(g).copied().unwrap_or_default();
    (inside, total.sub(&inside))
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// SP gap from group sizes and predicted-positive counts alone.
pub fn statistical_parity_from_counts(sizes: &[u64], positives: &[u64], g: usize) -> Option<f64> {
    let counts: Vec<Confusion> = sizes
        .iter()
        .zip(positives)
        .map(|(&n, &p)| Confusion {
            fp: p,
            tn: n - p,
            ..Default::default()
        })
        .collect();
    let (inside, rest) = versus_rest(&counts, g);
    gap(inside.positive_rate(), rest.positive_rate())
}

/// P(Ŷ=1 | S=g) − P(Ŷ=1 | S≠g).
pub fn statistical_parity(yhat: &[u8], groups: &[usize], g: usize) -> Result<Option<f64>> {
    let c = confusion_by_group(yhat, yhat, groups, 0)?;
    let (inside, rest) = versus_rest(&c, g);
    Ok(gap(inside.positive_rate(), rest.positive_rate()))
}

/// TPR(g) − TPR(rest).
pub fn equal_opportunity(y: &[u8], yhat: &[u8], groups: &[usize], g: usize) -> Result<Option<f64>> {
    let c = confusion_by_group(y, yhat, groups, 0)?;
    let (inside, rest) = versus_rest(&c, g);
    Ok(gap(inside.tpr(), rest.tpr()))
}

/// FPR(g) − FPR(rest).
pub fn predictive_equality(y: &[u8], yhat: &[u8], groups: &[usize], g: usize) -> Result<Option<f64>> {
    let c = confusion_by_group(y, yhat, groups, 0)?;
    let (inside, rest) = versus_rest(&c, g);
    Ok(gap(inside.fpr(), rest.fpr()))
}

/// Equalized-odds components and their scalar summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualizedOdds {
    pub tpr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    /// max(|tpr_gap|, |fpr_gap|); undefined if either part is.
    pub scalar: Option<f64>,
}

impl EqualizedOdds {
    pub fn new(tpr_gap: Option<f64>, fpr_gap: Option<f64>) -> Self {
        let scalar = match (tpr_gap, fpr_gap) {
            (Some(a), Some(b)) => Some(a.abs().max(b.abs())),
            _ => None,
        };
        EqualizedOdds { tpr_gap, fpr_gap, scalar }
    }
}

pub fn equalized_odds(y: &[u8], yhat: &[u8], groups: &[usize], g: usize) -> Result<EqualizedOdds> {
    Ok(EqualizedOdds::new(
        equal_opportunity(y, yhat, groups, g)?,
        predictive_equality(y, yhat, groups, g)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Notion {
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "EoP")]
    EoP,
    #[serde(rename = "PE")]
    Pe,
    #[serde(rename = "EO-tpr")]
    EoTpr,
    #[serde(rename = "EO-fpr")]
    EoFpr,
    #[serde(rename = "EO-scalar")]
    EoScalar,
    #[serde(rename = "ACC-gap")]
    AccGap,
}

impl Notion {
    pub const ALL: [Notion; 7] = [
        Notion::Sp,
        Notion::EoP,
        Notion::Pe,
        Notion::EoTpr,
        Notion::EoFpr,
        Notion::EoScalar,
        Notion::AccGap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Notion::Sp => "SP",
            Notion::EoP => "EoP",
            Notion::Pe => "PE",
            Notion::EoTpr => "EO-tpr",
            Notion::EoFpr => "EO-fpr",
            Notion::EoScalar => "EO-scalar",
            Notion::AccGap => "ACC-gap",
        }
    }

    pub fn parse(s: &str) -> Option<Notion> {
        Notion::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub group: String,
    pub metric: Notion,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub rows: Vec<ReportRow>,
    /// Per-group confusion counts in group order.
    pub confusion: Vec<Confusion>,
}

impl FairnessReport {
    pub fn get(&self, group: &str, metric: Notion) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.metric == metric)
            .and_then(|r| r.value)
    }

    /// Long-format CSV: `group,metric,value,defined`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "metric", "value", "defined"])?;
        for r in &self.rows {
            let value = r.value.map(|v| v.to_string()).unwrap_or_default();
            let defined = if r.value.is_some() { "true" } else { "false" };
            w.write_record([r.group.as_str(), r.metric.as_str(), &value, defined])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All notions for every group against the rest, groups in the order of
/// `group_names`, notions in [`Notion::ALL`] order.
pub fn one_vs_rest_report(y: &[u8], yhat: &[u8], groups: &[usize], group_names: &[String]) -> Result<FairnessReport> {
    let counts = confusion_by_group(y, yhat, groups, group_names.len())?;
    if counts.len() > group_names.len() {
        return Err(Error::InvalidInput(format!(
            "group index {} has no name",
            counts.len() - 1
        )));
    }
    let mut rows = Vec::with_capacity(group_names.len() * Notion::ALL.len());
    for (g, name) in group_names.iter().enumerate() {
        let (inside, rest) = versus_rest(&counts, g);
        let eo = EqualizedOdds::new(gap(inside.tpr(), rest.tpr()), gap(inside.fpr(), rest.fpr()));
        for notion in Notion::ALL {
            let value = match notion {
                Notion::Sp => gap(inside.positive_rate(), rest.positive_rate()),
                Notion::EoP | Notion::EoTpr => eo.tpr_gap,
                Notion::Pe | Notion::EoFpr => eo.fpr_gap,
                Notion::EoScalar => eo.scalar,
                Notion::AccGap => gap(inside.accuracy(), rest.accuracy()),
            };
            rows.push(ReportRow {
                group: name.clone(),
                metric: notion,
                value,
            });
        }
    }
    Ok(FairnessReport { rows, confusion: counts })
}
