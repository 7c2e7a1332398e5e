//! Exact and Monte Carlo randomization distributions of the five estimators.
//!
//! Ranks are processed in fixed-size chunks whose boundaries do not depend on
//! the thread count. Each chunk accumulates compensated sums; chunk results are
//! merged by a fixed pairwise tree in rank order, so the serial and parallel
//! paths produce bit-identical summaries.

use super::{rng_for, AssignmentSpace};
use crate::design::{realize, ExperimentData, PotentialOutcomeTable};
use crate::error::{Error, Result};
use crate::estimators::{Analysis, BiasConstants, EstimatorOptions};
use crate::variance::{
    critical_value, hc_variance, hc_variance_bc, satterthwaite_df, DesignKind, DfMode, FitContext,
    HcType, Interval, VarianceFlavor, VarianceOptions,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Version of the JSON layout of [`DistributionSummary`].
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Unadjusted,
    OlsNi,
    OlsI,
    DebiasedNi,
    DebiasedI,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Unadjusted,
        EstimatorKind::OlsNi,
        EstimatorKind::OlsI,
        EstimatorKind::DebiasedNi,
        EstimatorKind::DebiasedI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Unadjusted => "unadjusted",
            EstimatorKind::OlsNi => "ols-ni",
            EstimatorKind::OlsI => "ols-i",
            EstimatorKind::DebiasedNi => "debiased-ni",
            EstimatorKind::DebiasedI => "debiased-i",
        }
    }

    /// The regression whose residuals feed this estimator's standard errors.
    pub fn design(self) -> DesignKind {
        match self {
            EstimatorKind::Unadjusted => DesignKind::Unadjusted,
            EstimatorKind::OlsNi | EstimatorKind::DebiasedNi => DesignKind::NonInteracted,
            EstimatorKind::OlsI | EstimatorKind::DebiasedI => DesignKind::Interacted,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator {s:?}")))
    }
}

/// One confidence-interval recipe: a variance flavor and a reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CiSpec {
    pub flavor: VarianceFlavor,
    pub mode: DfMode,
}

impl CiSpec {
    pub fn new(flavor: VarianceFlavor, mode: DfMode) -> Self {
        Self { flavor, mode }
    }

    /// Every flavor crossed with every mode.
    pub fn grid(flavors: &[VarianceFlavor], modes: &[DfMode]) -> Vec<CiSpec> {
        flavors
            .iter()
            .flat_map(|&f| modes.iter().map(move |&m| CiSpec::new(f, m)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub estimator: EstimatorOptions,
    pub variance: VarianceOptions,
    pub cis: Vec<CiSpec>,
    /// Exact mode refuses spaces larger than this.
    pub budget: u64,
    /// Drop assignments whose fits are singular instead of aborting.
    pub skip_singular: bool,
    /// `Some(1)` forces the serial path; `None` uses the global thread pool.
    pub threads: Option<usize>,
    /// Ranks per work unit. Part of the summation order, so fixed by default.
    pub chunk_size: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorOptions::default(),
            variance: VarianceOptions::default(),
            cis: CiSpec::grid(
                &[VarianceFlavor::Hc2, VarianceFlavor::BcHc2],
                &[DfMode::T, DfMode::Satterthwaite],
            ),
            budget: 10_000_000,
            skip_singular: false,
            threads: None,
            chunk_size: 4096,
        }
    }
}

/// Everything computed for one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Indexed by [`EstimatorKind::ALL`] order.
    pub estimates: [f64; 5],
    /// `intervals[e * cis.len() + c]` for estimator `e` and spec `c`.
    pub intervals: Vec<Interval>,
}

impl Evaluation {
    pub fn estimate(&self, kind: EstimatorKind) -> f64 {
        self.estimates[kind.index()]
    }
}

/// Per-run cache of quantities that do not change between assignments.
struct Evaluator<'a> {
    cfg: &'a EngineConfig,
    constants: BiasConstants,
    crit_z: f64,
    /// Student-t critical value per design, indexed like [`DesignKind`] order.
    crit_t: [f64; 3],
    need_design: [bool; 3],
    need_satt: bool,
}

fn design_index(d: DesignKind) -> usize {
    match d {
        DesignKind::Unadjusted => 0,
        DesignKind::NonInteracted => 1,
        DesignKind::Interacted => 2,
    }
}

const DESIGNS: [DesignKind; 3] = [
    DesignKind::Unadjusted,
    DesignKind::NonInteracted,
    DesignKind::Interacted,
];

impl<'a> Evaluator<'a> {
    fn new(cfg: &'a EngineConfig, n: usize, n_a: usize, k: usize) -> Result<Self> {
        let level = cfg.variance.level;
        let mut crit_t = [0.0; 3];
        for d in DESIGNS {
            let df = match cfg.variance.student_df {
                crate::variance::StudentDf::NMinusOne => (n - 1) as f64,
                crate::variance::StudentDf::ResidualRank => (n - d.columns(k)) as f64,
            };
            crit_t[design_index(d)] = critical_value(level, df)?;
        }
        let need_any = !cfg.cis.is_empty();
        Ok(Self {
            cfg,
            constants: BiasConstants::new(n, n_a)?,
            crit_z: critical_value(level, f64::INFINITY)?,
            crit_t,
            need_design: [need_any; 3],
            need_satt: cfg.cis.iter().any(|c| c.mode == DfMode::Satterthwaite),
        })
    }

    fn evaluate(&self, data: &ExperimentData) -> Result<Evaluation> {
        let est = Analysis::new(data, self.cfg.estimator)?.point_estimates(&self.constants)?;
        let estimates = [
            est.unadjusted,
            est.ols_ni,
            est.ols_i,
            est.debiased_ni,
            est.debiased_i,
        ];
        let cis = &self.cfg.cis;
        if cis.is_empty() {
            return Ok(Evaluation {
                estimates,
                intervals: Vec::new(),
            });
        }

        // Fits, plain standard errors and Satterthwaite critical values per design.
        let mut fits: [Option<FitContext>; 3] = [None, None, None];
        let mut se_plain = [[f64::NAN; 2]; 3];
        let mut crit_satt = [[f64::NAN; 2]; 3];
        let hc_types = [HcType::Hc2, HcType::Hc3];
        for d in DESIGNS {
            let di = design_index(d);
            if !self.need_design[di] {
                continue;
            }
            let ctx = FitContext::for_data(data, d, self.cfg.variance.rel_tol)?;
            for (hi, &hc) in hc_types.iter().enumerate() {
                if !cis.iter().any(|c| c.flavor.hc_type() == hc) {
                    continue;
                }
                se_plain[di][hi] = hc_variance(&ctx, hc)?.sqrt();
                if self.need_satt {
                    let df = satterthwaite_df(&ctx, hc)?;
                    crit_satt[di][hi] = critical_value(self.cfg.variance.level, df)?;
                }
            }
            fits[di] = Some(ctx);
        }

        let mut intervals = Vec::with_capacity(EstimatorKind::ALL.len() * cis.len());
        for kind in EstimatorKind::ALL {
            let di = design_index(kind.design());
            let ctx = fits[di].as_ref().expect("fit computed");
            let estimate = estimates[kind.index()];
            for spec in cis {
                let hc = spec.flavor.hc_type();
                let hi = usize::from(hc == HcType::Hc3);
                let se = if spec.flavor.is_bias_corrected() {
                    hc_variance_bc(ctx, hc, estimate)?.sqrt()
                } else {
                    se_plain[di][hi]
                };
                let crit = match spec.mode {
                    DfMode::Z => self.crit_z,
                    DfMode::T => self.crit_t[di],
                    DfMode::Satterthwaite => crit_satt[di][hi],
                };
                intervals.push(Interval {
                    lower: estimate - crit * se,
                    upper: estimate + crit * se,
                });
            }
        }
        Ok(Evaluation {
            estimates,
            intervals,
        })
    }
}

/// Point estimates and intervals for one dataset, as the engine computes them.
pub fn evaluate(data: &ExperimentData, cfg: &EngineConfig) -> Result<Evaluation> {
    Evaluator::new(cfg, data.n(), data.n_treated(), data.k())?.evaluate(data)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompSum {
    sum: f64,
    comp: f64,
}

impl CompSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &CompSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Powers 1..4 of deviations from the true ATE.
#[derive(Debug, Clone, Copy, Default)]
struct Moments([CompSum; 4]);

impl Moments {
    fn add(&mut self, d: f64) {
        let d2 = d * d;
        self.0[0].add(d);
        self.0[1].add(d2);
        self.0[2].add(d2 * d);
        self.0[3].add(d2 * d2);
    }

    fn merge(&mut self, other: &Moments) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.merge(b);
        }
    }
}

#[derive(Debug, Clone, Default)]
struct CiAccum {
    covered: u64,
    width: CompSum,
    widths: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Accum {
    count: u64,
    skipped: u64,
    moments: [Moments; 5],
    cis: Vec<CiAccum>,
    max_correction_ni: f64,
    max_correction_i: f64,
}

impl Accum {
    fn new(n_intervals: usize) -> Self {
        Self {
            count: 0,
            skipped: 0,
            moments: [Moments::default(); 5],
            cis: vec![CiAccum::default(); n_intervals],
            max_correction_ni: 0.0,
            max_correction_i: 0.0,
        }
    }

    fn push(&mut self, ev: &Evaluation, truth: f64) {
        self.count += 1;
        for (m, x) in self.moments.iter_mut().zip(ev.estimates) {
            m.add(x - truth);
        }
        for (acc, iv) in self.cis.iter_mut().zip(&ev.intervals) {
            if iv.contains(truth) {
                acc.covered += 1;
            }
            let w = iv.width();
            acc.width.add(w);
            acc.widths.push(w);
        }
        let corr_ni = (ev.estimates[3] - ev.estimates[1]).abs();
        let corr_i = (ev.estimates[4] - ev.estimates[2]).abs();
        self.max_correction_ni = self.max_correction_ni.max(corr_ni);
        self.max_correction_i = self.max_correction_i.max(corr_i);
    }

    fn merge(mut self, other: Accum) -> Accum {
        self.count += other.count;
        self.skipped += other.skipped;
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
        for (a, b) in self.cis.iter_mut().zip(other.cis) {
            a.covered += b.covered;
            a.width.merge(&b.width);
            a.widths.extend(b.widths);
        }
        self.max_correction_ni = self.max_correction_ni.max(other.max_correction_ni);
        self.max_correction_i = self.max_correction_i.max(other.max_correction_i);
        self
    }
}

/// Merges in a fixed pairwise tree: (0,1), (2,3), ... then recursively.
fn tree_merge(mut parts: Vec<Accum>, n_intervals: usize) -> Accum {
    if parts.is_empty() {
        return Accum::new(n_intervals);
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("non-empty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Monte Carlo standard error of `bias` (absent for exact runs).
    pub mc_se_bias: Option<f64>,
    /// Delta-method Monte Carlo standard error of `sd`.
    pub mc_se_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub estimator: EstimatorKind,
    pub flavor: VarianceFlavor,
    pub mode: DfMode,
    pub coverage: f64,
    pub mean_width: f64,
    /// Lower median for even counts.
    pub median_width: f64,
    pub mc_se_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub schema_version: u32,
    /// `"exact"` or `"monte-carlo"`.
    pub mode: String,
    pub n: usize,
    pub n_treated: usize,
    /// Size of the assignment space, in decimal (it may exceed 64 bits).
    pub space_size: String,
    pub evaluated: u64,
    pub skipped: u64,
    pub seed: Option<u64>,
    pub true_ate: f64,
    pub estimators: Vec<EstimatorSummary>,
    pub intervals: Vec<CiSummary>,
    /// Largest `|debiased - OLS|` seen, non-interacted.
    pub max_abs_correction_ni: f64,
    pub max_abs_correction_i: f64,
}

impl DistributionSummary {
    pub fn estimator(&self, kind: EstimatorKind) -> &EstimatorSummary {
        self.estimators
            .iter()
            .find(|e| e.estimator == kind)
            .expect("all estimators summarized")
    }

    pub fn interval(
        &self,
        kind: EstimatorKind,
        flavor: VarianceFlavor,
        mode: DfMode,
    ) -> Option<&CiSummary> {
        self.intervals
            .iter()
            .find(|c| c.estimator == kind && c.flavor == flavor && c.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn lower_median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

fn summarize(
    mut acc: Accum,
    cfg: &EngineConfig,
    space: &AssignmentSpace,
    truth: f64,
    seed: Option<u64>,
) -> Result<DistributionSummary> {
    if acc.count == 0 {
        return Err(Error::InvalidInput(
            "no assignment could be evaluated".into(),
        ));
    }
    let count = acc.count as f64;
    let mc = seed.is_some();
    let estimators = EstimatorKind::ALL
        .iter()
        .zip(&acc.moments)
        .map(|(&kind, m)| {
            let m1 = m.0[0].value() / count;
            let m2 = m.0[1].value() / count;
            let var = (m2 - m1 * m1).max(0.0);
            let sd = var.sqrt();
            let (mc_se_bias, mc_se_sd) = if mc {
                // Central fourth moment from raw moments about the truth.
                let m3 = m.0[2].value() / count;
                let m4 = m.0[3].value() / count;
                let mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
                let se_sd = if sd > 0.0 {
                    ((mu4 - var * var).max(0.0) / count).sqrt() / (2.0 * sd)
                } else {
                    0.0
                };
                (Some(sd / count.sqrt()), Some(se_sd))
            } else {
                (None, None)
            };
            EstimatorSummary {
                estimator: kind,
                mean: truth + m1,
                bias: m1,
                sd,
                rmse: m2.sqrt(),
                mc_se_bias,
                mc_se_sd,
            }
        })
        .collect();
    let n_specs = cfg.cis.len();
    let mut intervals = Vec::with_capacity(acc.cis.len());
    for (idx, ci) in acc.cis.iter_mut().enumerate() {
        let kind = EstimatorKind::ALL[idx / n_specs];
        let spec = cfg.cis[idx % n_specs];
        let coverage = ci.covered as f64 / count;
        intervals.push(CiSummary {
            estimator: kind,
            flavor: spec.flavor,
            mode: spec.mode,
            coverage,
            mean_width: ci.width.value() / count,
            median_width: lower_median(&mut ci.widths),
            mc_se_coverage: mc.then(|| (coverage * (1.0 - coverage) / count).sqrt()),
        });
    }
    Ok(DistributionSummary {
        schema_version: SCHEMA_VERSION,
        mode: if mc { "monte-carlo" } else { "exact" }.into(),
        n: space.n(),
        n_treated: space.n_treated(),
        space_size: space.total_big().to_string(),
        evaluated: acc.count,
        skipped: acc.skipped,
        seed,
        true_ate: truth,
        estimators,
        intervals,
        max_abs_correction_ni: acc.max_correction_ni,
        max_abs_correction_i: acc.max_correction_i,
    })
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::SingularMatrix { .. } | Error::LeverageOne { .. })
}

/// Receives `(id, evaluation)` for every evaluated assignment, in id order.
pub type DumpSink<'s> = dyn FnMut(u64, &Evaluation) -> Result<()> + 's;

struct ChunkResult {
    accum: Accum,
    rows: Vec<(u64, Evaluation)>,
}

/// Shared driver: `items(chunk)` yields the `(id, data)` pairs of one work unit.
#[allow(clippy::too_many_arguments)]
fn run<F>(
    n_chunks: u64,
    cfg: &EngineConfig,
    evaluator: &Evaluator<'_>,
    truth: f64,
    keep_rows: bool,
    items: F,
    mut sink: Option<&mut DumpSink<'_>>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Accum>
where
    F: Fn(u64) -> Result<Vec<(u64, ExperimentData)>> + Sync,
{
    let n_intervals = EstimatorKind::ALL.len() * cfg.cis.len();
    let process = |chunk: u64| -> Result<ChunkResult> {
        let mut accum = Accum::new(n_intervals);
        let mut rows = Vec::new();
        for (id, data) in items(chunk)? {
            match evaluator.evaluate(&data) {
                Ok(ev) => {
                    accum.push(&ev, truth);
                    if keep_rows {
                        rows.push((id, ev));
                    }
                }
                Err(e) if cfg.skip_singular && is_skippable(&e) => accum.skipped += 1,
                Err(e) => {
                    return Err(Error::AtAssignment {
                        rank: id,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(ChunkResult { accum, rows })
    };

    // Batches bound the memory held by per-assignment rows awaiting the sink.
    let batch = 64u64;
    let mut parts = Vec::with_capacity(n_chunks as usize);
    let mut start = 0u64;
    while start < n_chunks {
        let end = (start + batch).min(n_chunks);
        let results: Vec<Result<ChunkResult>> = match (cfg.threads, pool) {
            (Some(1), _) => (start..end).map(process).collect(),
            (_, Some(pool)) => pool.install(|| (start..end).into_par_iter().map(process).collect()),
            (_, None) => (start..end).into_par_iter().map(process).collect(),
        };
        for r in results {
            let ChunkResult { accum, rows } = r?;
            if let Some(s) = sink.as_mut() {
                for (id, ev) in &rows {
                    s(*id, ev)?;
                }
            }
            parts.push(accum);
        }
        start = end;
    }
    Ok(tree_merge(parts, n_intervals))
}

fn build_pool(threads: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match threads {
        Some(t) if t > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(Some)
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}"))),
        _ => Ok(None),
    }
}

fn check_table(table: &PotentialOutcomeTable, space: &AssignmentSpace) -> Result<()> {
    if table.n() != space.n() {
        return Err(Error::SizeMismatch(format!(
            "table has {} units, assignment space has {}",
            table.n(),
            space.n()
        )));
    }
    Ok(())
}

/// Exact randomization distribution over every assignment in `space`.
pub fn exact_distribution(
    table: &PotentialOutcomeTable,
    space: &AssignmentSpace,
    cfg: &EngineConfig,
) -> Result<DistributionSummary> {
    exact_distribution_with_dump(table, space, cfg, None)
}

pub fn exact_distribution_with_dump(
    table: &PotentialOutcomeTable,
    space: &AssignmentSpace,
    cfg: &EngineConfig,
    sink: Option<&mut DumpSink<'_>>,
) -> Result<DistributionSummary> {
    check_table(table, space)?;
    let total = space.total()?;
    if total > cfg.budget {
        return Err(Error::BudgetExceeded {
            total,
            budget: cfg.budget,
        });
    }
    let chunk = cfg.chunk_size.max(1);
    let n_chunks = total.div_ceil(chunk);
    let truth = table.true_ate();
    let evaluator = Evaluator::new(cfg, space.n(), space.n_treated(), table.z.k())?;
    let keep_rows = sink.is_some();
    let items = |c: u64| -> Result<Vec<(u64, ExperimentData)>> {
        let start = c * chunk;
        space
            .enumerate_range(start, start + chunk)?
            .enumerate()
            .map(|(off, asn)| Ok((start + off as u64, realize(table, &asn)?)))
            .collect()
    };
    let pool = build_pool(cfg.threads)?;
    let accum = run(
        n_chunks,
        cfg,
        &evaluator,
        truth,
        keep_rows,
        items,
        sink,
        pool.as_ref(),
    )?;
    summarize(accum, cfg, space, truth, None)
}

/// Randomization distribution estimated from `reps` seeded uniform draws.
///
/// Draw `j` of chunk `c` comes from the ChaCha8 stream `c` of `seed`, so results
/// depend only on `(seed, reps, chunk_size)`.
pub fn monte_carlo_distribution(
    table: &PotentialOutcomeTable,
    space: &AssignmentSpace,
    seed: u64,
    reps: u64,
    cfg: &EngineConfig,
) -> Result<DistributionSummary> {
    monte_carlo_distribution_with_dump(table, space, seed, reps, cfg, None)
}

pub fn monte_carlo_distribution_with_dump(
    table: &PotentialOutcomeTable,
    space: &AssignmentSpace,
    seed: u64,
    reps: u64,
    cfg: &EngineConfig,
    sink: Option<&mut DumpSink<'_>>,
) -> Result<DistributionSummary> {
    check_table(table, space)?;
    if reps < 2 {
        return Err(Error::InvalidInput(format!(
            "reps must be at least 2, got {reps}"
        )));
    }
    let chunk = cfg.chunk_size.max(1);
    let n_chunks = reps.div_ceil(chunk);
    let truth = table.true_ate();
    let evaluator = Evaluator::new(cfg, space.n(), space.n_treated(), table.z.k())?;
    let keep_rows = sink.is_some();
    let items = |c: u64| -> Result<Vec<(u64, ExperimentData)>> {
        let start = c * chunk;
        let end = (start + chunk).min(reps);
        let mut rng = rng_for(seed, c);
        (start..end)
            .map(|id| Ok((id, realize(table, &space.draw(&mut rng)?)?)))
            .collect()
    };
    let pool = build_pool(cfg.threads)?;
    let accum = run(
        n_chunks,
        cfg,
        &evaluator,
        truth,
        keep_rows,
        items,
        sink,
        pool.as_ref(),
    )?;
    summarize(accum, cfg, space, truth, Some(seed))
}

/// Column names for a per-assignment CSV dump.
pub fn dump_header(cfg: &EngineConfig) -> Vec<String> {
    let mut h = vec!["rank".to_string()];
    h.extend(EstimatorKind::ALL.iter().map(|e| e.label().to_string()));
    for e in EstimatorKind::ALL {
        for spec in &cfg.cis {
            for side in ["lower", "upper"] {
                h.push(format!(
                    "{}:{}:{}:{}",
                    e.label(),
                    spec.flavor,
                    spec.mode,
                    side
                ));
            }
        }
    }
    h
}

pub fn dump_record(id: u64, ev: &Evaluation) -> Vec<String> {
    let mut r = vec![id.to_string()];
    r.extend(ev.estimates.iter().map(f64::to_string));
    for iv in &ev.intervals {
        r.push(iv.lower.to_string());
        r.push(iv.upper.to_string());
    }
    r
}
