//! Nonparametric repeated-measures statistics.
//!
//! Friedman omnibus, Wilcoxon signed-rank post-hoc (exact or normal),
//! Benjamini-Hochberg adjustment, r effect sizes, Hodges-Lehmann intervals
//! and quartile descriptives, plus a driver over tidy
//! `subject,condition,outcome,value` tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptySet,
    #[error("need at least {needed} pairs, have {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("friedman needs n >= 2 subjects and k >= 3 conditions, got {n}x{k}")]
    DegenerateMatrix { n: usize, k: usize },
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("non-finite value")]
    NonFinite,
    #[error("unknown condition '{0}'")]
    UnknownCondition(String),
    #[error("duplicate observation for subject '{subject}', condition '{condition}', outcome '{outcome}'")]
    DuplicateObservation { subject: String, condition: String, outcome: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn check_finite(v: &[f64]) -> Result<(), StatsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn rank_average(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups in `v`.
fn tie_groups(v: &[f64]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

// ----------------------------------------------------------------------------
// descriptives

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub quantile_method: String,
}

/// Quantile by linear interpolation between order statistics
/// (position `p·(n−1)` in the sorted data).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySet);
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, 0.5))
}

pub fn descriptives(values: &[f64]) -> Result<Descriptives, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySet);
    }
    check_finite(values)?;
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    Ok(Descriptives {
        n: s.len(),
        median: quantile_sorted(&s, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        quantile_method: "linear interpolation, h = p(n-1)".into(),
    })
}

// ----------------------------------------------------------------------------
// friedman

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub n: usize,
    pub k: usize,
}

pub fn chi2_survival(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("df >= 1");
    d.sf(x)
}

/// Rows are subjects, columns conditions.
pub fn friedman(matrix: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, |r| r.len());
    if n < 2 || k < 3 || matrix.iter().any(|r| r.len() != k) {
        return Err(StatsError::DegenerateMatrix { n, k });
    }
    let mut col_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in matrix {
        check_finite(row)?;
        for (s, r) in col_sums.iter_mut().zip(rank_average(row)) {
            *s += r;
        }
        tie_term += tie_groups(row).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * col_sums.iter().map(|r| r * r).sum::<f64>()
        - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_term / (nf * (kf * kf * kf - kf));
    let chi2 = if correction <= 1e-12 { 0.0 } else { (raw / correction).max(0.0) };
    Ok(FriedmanResult { chi2, df: k - 1, p: chi2_survival(chi2, k - 1), n, k })
}

// ----------------------------------------------------------------------------
// wilcoxon signed-rank

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMode {
    Exact,
    Normal,
    /// Exact for n <= 25, normal above.
    #[default]
    Auto,
}

pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub z: f64,
    pub p: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n: usize,
    pub n_zero_dropped: usize,
    pub exact: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Probability mass of the doubled signed-rank sum under random signs:
/// entry `s` is P(Σ 2·rank over positives = s).
fn signed_rank_distribution(doubled_ranks: &[u32]) -> Vec<f64> {
    let total: u32 = doubled_ranks.iter().sum();
    let mut dist = vec![0.0; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let v = dist[s] * 0.5;
            dist[s] = v;
            dist[s + r] += v;
        }
        reach += r;
    }
    dist
}

/// Wilcoxon signed-rank test on the differences `d`.
pub fn wilcoxon_differences(d: &[f64], mode: WilcoxonMode) -> Result<WilcoxonResult, StatsError> {
    check_finite(d)?;
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let dropped = d.len() - nz.len();
    if nz.is_empty() {
        if d.is_empty() {
            return Err(StatsError::TooFewPairs { needed: 2, got: 0 });
        }
        return Err(StatsError::AllZeroDifferences);
    }
    let n = nz.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs { needed: 2, got: n });
    }
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    let ranks = rank_average(&abs);
    // float sums start at -0.0; adding +0.0 keeps an empty sum printing as 0
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum::<f64>() + 0.0;

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let ties: f64 = tie_groups(&abs).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = if var > 0.0 { (w_plus - mean) / var.sqrt() } else { 0.0 };

    let exact = match mode {
        WilcoxonMode::Exact => true,
        WilcoxonMode::Normal => false,
        WilcoxonMode::Auto => n <= EXACT_MAX_N,
    };
    let p = if exact {
        let doubled: Vec<u32> = ranks.iter().map(|r| (2.0 * r).round() as u32).collect();
        let total: i64 = doubled.iter().map(|&r| r as i64).sum();
        let obs = (2.0 * w_plus).round() as i64;
        let dev = (2 * obs - total).abs();
        signed_rank_distribution(&doubled)
            .iter()
            .enumerate()
            .filter(|(s, _)| (2 * *s as i64 - total).abs() >= dev)
            .map(|(_, p)| p)
            .sum::<f64>()
            .min(1.0)
    } else {
        (2.0 * std_normal().cdf(-z.abs())).min(1.0)
    };
    Ok(WilcoxonResult { w_plus, z, p, n, n_zero_dropped: dropped, exact })
}

/// Paired test on `y − x`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], mode: WilcoxonMode) -> Result<WilcoxonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    wilcoxon_differences(&d, mode)
}

// ----------------------------------------------------------------------------
// multiplicity and effect size

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(StatsError::InvalidP(bad));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adj = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adj[i] = running.min(1.0);
    }
    Ok(adj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NConvention {
    /// N = 2 · pairs.
    #[default]
    TotalObservations,
    /// N = pairs.
    Pairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(r: f64) -> Magnitude {
        let a = r.abs();
        if a >= 0.5 {
            Magnitude::Large
        } else if a >= 0.3 {
            Magnitude::Medium
        } else if a >= 0.1 {
            Magnitude::Small
        } else {
            Magnitude::Negligible
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub r: f64,
    pub magnitude: Magnitude,
}

pub fn effect_size_r(z: f64, n_pairs: usize, convention: NConvention) -> EffectSize {
    let big_n = match convention {
        NConvention::TotalObservations => 2 * n_pairs,
        NConvention::Pairs => n_pairs,
    } as f64;
    let r = if big_n > 0.0 { (z / big_n.sqrt()).clamp(-1.0, 1.0) } else { 0.0 };
    EffectSize { r, magnitude: Magnitude::of(r) }
}

// ----------------------------------------------------------------------------
// hodges-lehmann

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlInterval {
    /// Median of the Walsh averages.
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
    /// Set when n is too small for the requested level; the bounds are then the data range.
    pub low_power: bool,
    /// Exact coverage of the returned interval (NaN when `low_power`).
    pub achieved_level: f64,
}

pub fn walsh_averages(d: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(d.len() * (d.len() + 1) / 2);
    for i in 0..d.len() {
        for j in i..d.len() {
            w.push(0.5 * (d[i] + d[j]));
        }
    }
    w.sort_by(f64::total_cmp);
    w
}

/// Largest C with P(T <= C−1) <= alpha/2 under the untied signed-rank null,
/// and the coverage 1 − 2·P(T <= C−1).
fn hl_critical(n: usize, alpha: f64) -> (usize, f64) {
    let dist = signed_rank_distribution(&(1..=n as u32).map(|r| 2 * r).collect::<Vec<_>>());
    // dist is indexed by the doubled statistic; only even entries carry mass
    let mut cdf = 0.0;
    let mut c = 0;
    for t in 0..=n * (n + 1) / 2 {
        let next = cdf + dist[2 * t];
        if next > alpha / 2.0 + 1e-12 {
            break;
        }
        cdf = next;
        c = t + 1;
    }
    (c, 1.0 - 2.0 * cdf)
}

pub fn hl_ci(d: &[f64], level: f64) -> Result<HlInterval, StatsError> {
    if d.is_empty() {
        return Err(StatsError::TooFewPairs { needed: 1, got: 0 });
    }
    check_finite(d)?;
    let w = walsh_averages(d);
    let m = w.len();
    let estimate = quantile_sorted(&w, 0.5);
    let range = || {
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        HlInterval { estimate, low: lo, high: hi, low_power: true, achieved_level: f64::NAN }
    };
    let n = d.len();
    if n < 4 {
        return Ok(range());
    }
    let alpha = 1.0 - level;
    let (c, achieved) = if n <= EXACT_MAX_N {
        hl_critical(n, alpha)
    } else {
        let nf = n as f64;
        let zc = std_normal().inverse_cdf(1.0 - alpha / 2.0);
        let c = (nf * (nf + 1.0) / 4.0 - zc * (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt()).floor();
        (c.max(0.0) as usize, level)
    };
    if c < 1 {
        return Ok(range());
    }
    Ok(HlInterval { estimate, low: w[c - 1], high: w[m - c], low_power: false, achieved_level: achieved })
}

// ----------------------------------------------------------------------------
// paired comparison record

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub outcome: String,
    pub reference: String,
    pub condition: String,
    /// Sample median of `condition − reference`.
    pub median_delta: f64,
    pub hl_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_low_power: bool,
    pub statistic: f64,
    pub z_value: f64,
    pub p_raw: f64,
    pub p_fdr: f64,
    pub effect_r: f64,
    pub magnitude: Magnitude,
    pub n: usize,
    pub n_zero_dropped: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub mode: WilcoxonMode,
    pub convention: NConvention,
    pub level: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { mode: WilcoxonMode::Auto, convention: NConvention::TotalObservations, level: 0.95 }
    }
}

/// Full post-hoc record for `condition − reference`; `p_fdr` is left equal to `p_raw`.
pub fn compare_paired(
    outcome: &str,
    reference: (&str, &[f64]),
    condition: (&str, &[f64]),
    opts: CompareOptions,
) -> Result<TestResult, StatsError> {
    let (rname, x) = reference;
    let (cname, y) = condition;
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    let w = wilcoxon_differences(&d, opts.mode)?;
    let ci = hl_ci(&d, opts.level)?;
    let es = effect_size_r(w.z, w.n, opts.convention);
    Ok(TestResult {
        outcome: outcome.to_string(),
        reference: rname.to_string(),
        condition: cname.to_string(),
        median_delta: median(&d)?,
        hl_estimate: ci.estimate,
        ci_low: ci.low,
        ci_high: ci.high,
        ci_low_power: ci.low_power,
        statistic: w.w_plus,
        z_value: w.z,
        p_raw: w.p,
        p_fdr: w.p,
        effect_r: es.r,
        magnitude: es.magnitude,
        n: w.n,
        n_zero_dropped: w.n_zero_dropped,
        exact: w.exact,
    })
}

// ----------------------------------------------------------------------------
// tidy tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub subject: String,
    pub condition: String,
    pub outcome: String,
    pub value: f64,
}

pub fn read_tidy<R: Read>(r: R) -> Result<Vec<TidyRow>, StatsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<Result<Vec<TidyRow>, _>>()?;
    Ok(rows)
}

pub fn write_tidy<W: Write>(w: W, rows: &[TidyRow]) -> Result<(), StatsError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub descriptives: Descriptives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeAnalysis {
    pub outcome: String,
    pub conditions: Vec<String>,
    /// Subjects with a value in every analyzed condition.
    pub subjects: Vec<String>,
    pub excluded_subjects: Vec<String>,
    pub summaries: Vec<ConditionSummary>,
    pub friedman: Option<FriedmanResult>,
    pub comparisons: Vec<TestResult>,
}

/// Analyzes one outcome.
///
/// `conditions` fixes order and membership (default: first-appearance order).
/// `comparisons` lists `(reference, condition)` pairs (default: every pair in
/// order). Subjects missing any analyzed condition are excluded. BH adjustment
/// runs across the comparisons of this outcome.
pub fn analyze_outcome(
    rows: &[TidyRow],
    outcome: &str,
    conditions: Option<&[&str]>,
    comparisons: Option<&[(&str, &str)]>,
    opts: CompareOptions,
) -> Result<OutcomeAnalysis, StatsError> {
    let rows: Vec<&TidyRow> = rows.iter().filter(|r| r.outcome == outcome).collect();
    let mut conds: Vec<String> = match conditions {
        Some(c) => c.iter().map(|s| s.to_string()).collect(),
        None => Vec::new(),
    };
    if conditions.is_none() {
        for r in &rows {
            if !conds.contains(&r.condition) {
                conds.push(r.condition.clone());
            }
        }
    }
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in &rows {
        if !conds.contains(&r.condition) {
            continue;
        }
        check_finite(&[r.value])?;
        if table.entry(&r.subject).or_default().insert(&r.condition, r.value).is_some() {
            return Err(StatsError::DuplicateObservation {
                subject: r.subject.clone(),
                condition: r.condition.clone(),
                outcome: outcome.to_string(),
            });
        }
    }
    let all_subjects: BTreeSet<&str> = rows.iter().map(|r| r.subject.as_str()).collect();
    let subjects: Vec<String> = table
        .iter()
        .filter(|(_, m)| conds.iter().all(|c| m.contains_key(c.as_str())))
        .map(|(s, _)| s.to_string())
        .collect();
    let excluded: Vec<String> =
        all_subjects.iter().filter(|s| !subjects.iter().any(|k| k == *s)).map(|s| s.to_string()).collect();
    if subjects.is_empty() {
        return Err(StatsError::EmptySet);
    }
    let column = |c: &str| -> Vec<f64> { subjects.iter().map(|s| table[s.as_str()][c]).collect() };

    let summaries = conds
        .iter()
        .map(|c| Ok(ConditionSummary { condition: c.clone(), descriptives: descriptives(&column(c))? }))
        .collect::<Result<Vec<_>, StatsError>>()?;

    let friedman = if conds.len() >= 3 && subjects.len() >= 2 {
        let m: Vec<Vec<f64>> = subjects
            .iter()
            .map(|s| conds.iter().map(|c| table[s.as_str()][c.as_str()]).collect())
            .collect();
        Some(friedman(&m)?)
    } else {
        None
    };

    let pairs: Vec<(String, String)> = match comparisons {
        Some(p) => p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        None => {
            let mut v = Vec::new();
            for i in 0..conds.len() {
                for j in i + 1..conds.len() {
                    v.push((conds[i].clone(), conds[j].clone()));
                }
            }
            v
        }
    };
    let mut comps = Vec::new();
    for (a, b) in &pairs {
        for c in [a, b] {
            if !conds.contains(c) {
                return Err(StatsError::UnknownCondition(c.clone()));
            }
        }
        comps.push(compare_paired(outcome, (a, &column(a)), (b, &column(b)), opts)?);
    }
    let adj = bh_adjust(&comps.iter().map(|c| c.p_raw).collect::<Vec<_>>())?;
    for (c, p) in comps.iter_mut().zip(adj) {
        c.p_fdr = p;
    }
    Ok(OutcomeAnalysis {
        outcome: outcome.to_string(),
        conditions: conds,
        subjects,
        excluded_subjects: excluded,
        summaries,
        friedman,
        comparisons: comps,
    })
}

/// Every outcome in first-appearance order with default conditions and comparisons.
pub fn analyze_tidy(rows: &[TidyRow], opts: CompareOptions) -> Result<Vec<OutcomeAnalysis>, StatsError> {
    let mut outcomes: Vec<&str> = Vec::new();
    for r in rows {
        if !outcomes.contains(&r.outcome.as_str()) {
            outcomes.push(&r.outcome);
        }
    }
    outcomes.into_iter().map(|o| analyze_outcome(rows, o, None, None, opts)).collect()
}

pub const RESULTS_HEADER: [&str; 18] = [
    "outcome",
    "reference",
    "condition",
    "median_delta",
    "ci_low",
    "ci_high",
    "hl_estimate",
    "w_plus",
    "z",
    "p_raw",
    "p_fdr",
    "r",
    "magnitude",
    "n",
    "n_zero_dropped",
    "method",
    "friedman_chi2",
    "friedman_p",
];

pub fn write_results_csv<W: Write>(w: W, analyses: &[OutcomeAnalysis]) -> Result<(), StatsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for a in analyses {
        let (fc, fp) = a
            .friedman
            .as_ref()
            .map_or((String::new(), String::new()), |f| (format!("{:.4}", f.chi2), format!("{:.6}", f.p)));
        for c in &a.comparisons {
            wr.write_record(&[
                c.outcome.clone(),
                c.reference.clone(),
                c.condition.clone(),
                format!("{:.4}", c.median_delta),
                format!("{:.4}", c.ci_low),
                format!("{:.4}", c.ci_high),
                format!("{:.4}", c.hl_estimate),
                format!("{:.1}", c.statistic),
                format!("{:.4}", c.z_value),
                format!("{:.6}", c.p_raw),
                format!("{:.6}", c.p_fdr),
                format!("{:.3}", c.effect_r),
                c.magnitude.name().to_string(),
                c.n.to_string(),
                c.n_zero_dropped.to_string(),
                if c.exact { "exact" } else { "normal" }.to_string(),
                fc.clone(),
                fp.clone(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_descriptives_csv<W: Write>(w: W, analyses: &[OutcomeAnalysis]) -> Result<(), StatsError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["outcome", "condition", "n", "median", "q1", "q3", "iqr"])?;
    for a in analyses {
        for s in &a.summaries {
            let d = &s.descriptives;
            wr.write_record(&[
                a.outcome.clone(),
                s.condition.clone(),
                d.n.to_string(),
                format!("{:.4}", d.median),
                format!("{:.4}", d.q1),
                format!("{:.4}", d.q3),
                format!("{:.4}", d.iqr),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided p by listing every sign pattern.
    fn brute_p(d: &[f64]) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
        let ranks = rank_average(&nz.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let n = nz.len();
        let mean = ranks.iter().sum::<f64>() / 2.0;
        let obs: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let mut hit = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if (w - mean).abs() >= (obs - mean).abs() - 1e-9 {
                hit += 1;
            }
        }
        hit as f64 / (1u64 << n) as f64
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(rank_average(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn descriptive_cases() {
        let d = descriptives(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((d.median, d.q1, d.q3), (3.0, 2.0, 4.0));
        assert_eq!(descriptives(&[7.0; 6]).unwrap().iqr, 0.0);
        assert!(matches!(descriptives(&[]), Err(StatsError::EmptySet)));

        let v = [12.0, 3.5, 8.0, 1.0, 9.5, 4.0, 15.0, 6.0];
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        // h = p(n-1): q1 at 1.75, q3 at 5.25
        let q1 = s[1] + 0.75 * (s[2] - s[1]);
        let q3 = s[5] + 0.25 * (s[6] - s[5]);
        let d = descriptives(&v).unwrap();
        assert_eq!((d.q1, d.q3, d.median), (q1, q3, (s[3] + s[4]) / 2.0));
    }

    #[test]
    fn friedman_anchors() {
        let cols = vec![vec![1.0, 1.0, 1.0]; 8];
        let f = friedman(&cols).unwrap();
        assert_eq!((f.chi2, f.p), (0.0, 1.0));

        let ordered: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 10.0 + i as f64, 30.0 - i as f64]).collect();
        let f = friedman(&ordered).unwrap();
        assert!((f.chi2 - 16.0).abs() < 1e-12);
        assert!((f.p - (-8.0f64).exp()).abs() < 1e-12);
        assert!(matches!(friedman(&ordered[..1]), Err(StatsError::DegenerateMatrix { .. })));
    }

    #[test]
    fn friedman_with_ties_matches_hand_value() {
        // rows ranked: (1,2.5,2.5) (1,2,3) (1,2,3) (2,1,3); R = (5, 7.5, 11.5)
        let m = vec![vec![1.0, 2.0, 2.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 3.0]];
        let raw = 12.0 / (4.0 * 3.0 * 4.0) * (25.0 + 56.25 + 132.25) - 3.0 * 4.0 * 4.0;
        let c = 1.0 - 6.0 / (4.0 * 24.0);
        assert!((friedman(&m).unwrap().chi2 - raw / c).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_exact_anchors() {
        let d: Vec<f64> = (1..=8).map(|i| i as f64 * 1.5).collect();
        let w = wilcoxon_differences(&d, WilcoxonMode::Exact).unwrap();
        assert_eq!(w.w_plus, 36.0);
        assert_eq!(w.p, 2.0 / 256.0);
        assert_eq!(brute_p(&d), 2.0 / 256.0);
        let mut d2 = d.clone();
        d2[0] = -d2[0];
        let w2 = wilcoxon_differences(&d2, WilcoxonMode::Exact).unwrap();
        assert_eq!(w2.w_plus, 35.0);
        assert_eq!(w2.p, 4.0 / 256.0);
    }

    #[test]
    fn wilcoxon_matches_enumeration_with_ties_and_zeros() {
        let d = [0.0, 1.0, -1.0, 2.0, 2.0, 3.0, -4.0, 5.0, 5.0, 0.0, 6.0, 7.0];
        let w = wilcoxon_differences(&d, WilcoxonMode::Exact).unwrap();
        assert_eq!(w.n, 10);
        assert_eq!(w.n_zero_dropped, 2);
        assert!((w.p - brute_p(&d)).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_errors() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], WilcoxonMode::Auto),
            Err(StatsError::AllZeroDifferences)
        ));
        assert!(matches!(wilcoxon_differences(&[0.0, 1.0], WilcoxonMode::Auto), Err(StatsError::TooFewPairs { .. })));
    }

    #[test]
    fn normal_z_and_r() {
        let d: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let w = wilcoxon_differences(&d, WilcoxonMode::Normal).unwrap();
        assert!((w.z - 18.0 / 51f64.sqrt()).abs() < 1e-12);
        assert!((w.z - 2.5205).abs() < 1e-4);
        let e = effect_size_r(w.z, 8, NConvention::TotalObservations);
        assert!((e.r - 0.630).abs() < 0.005);
        assert_eq!(e.magnitude, Magnitude::Large);
        assert!((effect_size_r(w.z, 8, NConvention::Pairs).r - 18.0 / 51f64.sqrt() / 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(effect_size_r(0.0, 8, NConvention::default()).r, 0.0);
        assert_eq!(Magnitude::of(0.35), Magnitude::Medium);
    }

    #[test]
    fn bh_cases() {
        let a = bh_adjust(&[0.0078125, 0.0078125, 0.9]).unwrap();
        assert!((a[0] - 0.0117).abs() < 1e-4 && (a[1] - 0.0117).abs() < 1e-4);
        assert_eq!(a[2], 0.9);
        let b = bh_adjust(&[0.0078125, 0.3, 0.5]).unwrap();
        assert!((b[0] - 0.0234).abs() < 1e-4);
        assert!((b[1] - 0.45).abs() < 1e-12 && b[2] == 0.5);
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        assert!(matches!(bh_adjust(&[1.2]), Err(StatsError::InvalidP(_))));
    }

    #[test]
    fn hl_cases() {
        let c = hl_ci(&[2.5; 8], 0.95).unwrap();
        assert_eq!((c.low, c.high, c.estimate), (2.5, 2.5, 2.5));

        let sym = [-3.0, -1.0, 0.5, 2.0, 4.0, 5.5, 7.0, 9.0];
        let m = 3.0;
        let sym: Vec<f64> = sym.iter().flat_map(|v| [m + (v - m), m - (v - m)]).take(10).collect();
        let c = hl_ci(&sym, 0.95).unwrap();
        assert!(((c.low + c.high) / 2.0 - m).abs() < 1e-9);

        let small = hl_ci(&[1.0, 5.0, 3.0], 0.95).unwrap();
        assert!(small.low_power && small.low == 1.0 && small.high == 5.0);
    }

    #[test]
    fn hl_n8_against_enumeration() {
        let d = [4.1, 12.0, -2.5, 30.2, 18.7, 9.9, 25.0, 6.3];
        // oracle: Walsh averages by double loop, critical rank from 2^8 sign enumeration
        let mut w = Vec::new();
        for i in 0..8 {
            for j in i..8 {
                w.push((d[i] + d[j]) / 2.0);
            }
        }
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut counts = vec![0u32; 37];
        for mask in 0u32..256 {
            let t: u32 = (0..8).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).sum();
            counts[t as usize] += 1;
        }
        let mut cum = 0;
        let mut c = 0;
        for (t, k) in counts.iter().enumerate() {
            if (cum + k) as f64 / 256.0 > 0.025 {
                break;
            }
            cum += k;
            c = t + 1;
        }
        assert_eq!(c, 4);
        let ci = hl_ci(&d, 0.95).unwrap();
        assert_eq!((ci.low, ci.high), (w[c - 1], w[36 - c]));
        assert!((ci.achieved_level - (1.0 - 2.0 * cum as f64 / 256.0)).abs() < 1e-12);
    }

    #[test]
    fn tidy_pipeline() {
        let mut rows = Vec::new();
        for s in 0..8 {
            for (c, v) in [("off", 10.0), ("v1", 20.0), ("v2", 30.0)] {
                rows.push(TidyRow {
                    subject: format!("S{s}"),
                    condition: c.into(),
                    outcome: "endurance_s".into(),
                    value: v + s as f64 * (1.0 + if c == "off" { 0.0 } else { 0.1 * (s as f64 + 1.0) }),
                });
            }
        }
        rows.push(TidyRow { subject: "S9".into(), condition: "off".into(), outcome: "endurance_s".into(), value: 1.0 });
        let a = analyze_tidy(&rows, CompareOptions::default()).unwrap();
        assert_eq!(a.len(), 1);
        let a = &a[0];
        assert_eq!(a.subjects.len(), 8);
        assert_eq!(a.excluded_subjects, vec!["S9".to_string()]);
        assert!((a.friedman.as_ref().unwrap().chi2 - 16.0).abs() < 1e-12);
        assert_eq!(a.comparisons.len(), 3);
        for c in &a.comparisons {
            assert_eq!(c.p_raw, 0.0078125);
            assert!((c.p_fdr - 0.0078125).abs() < 1e-15);
        }
        let mut buf = Vec::new();
        write_results_csv(&mut buf, std::slice::from_ref(a)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("outcome,reference,condition,median_delta"));
        assert_eq!(text.lines().count(), 4);
    }
}
