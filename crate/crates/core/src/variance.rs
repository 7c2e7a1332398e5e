//! Heteroskedasticity-robust variance for the treatment coefficient.
//!
//! HC2 and HC3 sandwiches, the bias-corrected ("BC") variants that recompute
//! residuals after substituting a debiased treatment coefficient, Student-t and
//! Bell-McCaffrey Satterthwaite degrees of freedom, and confidence intervals.

use crate::design::ExperimentData;
use crate::error::{Error, Result};
use crate::linalg::{dot, SymMatrix, DEFAULT_REL_TOL};
use crate::special::{normal_quantile, student_t_quantile};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Hat values at or above `1 - LEVERAGE_EPS` are treated as perfect fits.
pub const LEVERAGE_EPS: f64 = 1e-12;

/// Which regression the fit comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// `y ~ 1 + t`
    Unadjusted,
    /// `y ~ 1 + t + z`
    NonInteracted,
    /// `y ~ 1 + t + z + t·z` with centered `z`.
    Interacted,
}

impl DesignKind {
    pub fn columns(self, k: usize) -> usize {
        match self {
            DesignKind::Unadjusted => 2,
            DesignKind::NonInteracted => 2 + k,
            DesignKind::Interacted => 2 + 2 * k,
        }
    }

    /// Writes row `i` of the design matrix into `out`.
    pub fn fill_row(self, data: &ExperimentData, i: usize, out: &mut [f64]) {
        let t = if data.t[i] { 1.0 } else { 0.0 };
        out[0] = 1.0;
        out[1] = t;
        if self == DesignKind::Unadjusted {
            return;
        }
        let z = data.z.row(i);
        let k = z.len();
        out[2..2 + k].copy_from_slice(z);
        if self == DesignKind::Interacted {
            for j in 0..k {
                out[2 + k + j] = t * z[j];
            }
        }
    }
}

/// A least-squares fit with everything the sandwich formulas need.
///
/// The treatment coefficient is always column 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitContext {
    pub n: usize,
    pub p: usize,
    /// Design matrix, row-major `n x p`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xtx_inv: SymMatrix,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    pub hat: Vec<f64>,
    /// `(XᵀX)⁻¹ c` with `c` selecting the treatment coefficient.
    pub contrast_row: Vec<f64>,
}

pub const TREATMENT_COLUMN: usize = 1;

impl FitContext {
    pub fn fit(y: &[f64], x: Vec<f64>, p: usize, rel_tol: f64) -> Result<Self> {
        let n = y.len();
        if x.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: x.len(),
            });
        }
        if n <= p {
            return Err(Error::InvalidInput(format!(
                "{n} observations cannot fit {p} coefficients"
            )));
        }
        let mut xtx = SymMatrix::zeros(p);
        let mut xty = vec![0.0; p];
        for (row, yi) in x.chunks(p).zip(y) {
            xtx.rank_one_update(1.0, row);
            for (acc, v) in xty.iter_mut().zip(row) {
                *acc += v * yi;
            }
        }
        let xtx_inv = xtx.invert_spd(rel_tol).map_err(|e| e.named("X'X"))?;
        let beta = xtx_inv.mul_vec(&xty)?;
        let contrast_row: Vec<f64> = (0..p).map(|j| xtx_inv.get(TREATMENT_COLUMN, j)).collect();
        let mut residuals = Vec::with_capacity(n);
        let mut hat = Vec::with_capacity(n);
        let mut tmp = vec![0.0; p];
        for (row, yi) in x.chunks(p).zip(y) {
            residuals.push(yi - dot(row, &beta));
            for (t, m_row) in tmp.iter_mut().zip(xtx_inv.entries().chunks(p)) {
                *t = dot(m_row, row);
            }
            hat.push(dot(row, &tmp));
        }
        Ok(Self {
            n,
            p,
            x,
            y: y.to_vec(),
            xtx_inv,
            beta,
            residuals,
            hat,
            contrast_row,
        })
    }

    /// Fits one of the three standard regressions to `data`.
    pub fn for_data(data: &ExperimentData, kind: DesignKind, rel_tol: f64) -> Result<Self> {
        let p = kind.columns(data.k());
        let n = data.n();
        let mut x = vec![0.0; n * p];
        for (i, row) in x.chunks_mut(p).enumerate() {
            kind.fill_row(data, i, row);
        }
        Self::fit(&data.y, x, p, rel_tol)
    }

    pub fn treatment_coef(&self) -> f64 {
        self.beta[TREATMENT_COLUMN]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// `cᵀ(XᵀX)⁻¹x_i`, the influence of unit `i` on the treatment coefficient.
    pub fn influence(&self, i: usize) -> f64 {
        dot(&self.contrast_row, self.row(i))
    }

    /// Largest `|Xβ̂ + e - y|`.
    pub fn fit_residual(&self) -> f64 {
        (0..self.n)
            .map(|i| (dot(self.row(i), &self.beta) + self.residuals[i] - self.y[i]).abs())
            .fold(0.0, f64::max)
    }

    fn check_leverage(&self) -> Result<()> {
        match self.hat.iter().position(|&h| h >= 1.0 - LEVERAGE_EPS) {
            Some(index) => Err(Error::LeverageOne {
                index,
                leverage: self.hat[index],
            }),
            None => Ok(()),
        }
    }
}

/// Residual reweighting of the sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HcType {
    Hc2,
    Hc3,
}

impl HcType {
    fn weight(self, h: f64) -> f64 {
        match self {
            HcType::Hc2 => 1.0 / (1.0 - h),
            HcType::Hc3 => 1.0 / ((1.0 - h) * (1.0 - h)),
        }
    }
}

/// The four reported variance flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceFlavor {
    #[serde(rename = "hc2")]
    Hc2,
    #[serde(rename = "hc3")]
    Hc3,
    #[serde(rename = "bc-hc2")]
    BcHc2,
    #[serde(rename = "bc-hc3")]
    BcHc3,
}

impl VarianceFlavor {
    pub const ALL: [VarianceFlavor; 4] = [
        VarianceFlavor::Hc2,
        VarianceFlavor::Hc3,
        VarianceFlavor::BcHc2,
        VarianceFlavor::BcHc3,
    ];

    pub fn hc_type(self) -> HcType {
        match self {
            VarianceFlavor::Hc2 | VarianceFlavor::BcHc2 => HcType::Hc2,
            VarianceFlavor::Hc3 | VarianceFlavor::BcHc3 => HcType::Hc3,
        }
    }

    /// Whether residuals are recomputed with the debiased coefficient.
    pub fn is_bias_corrected(self) -> bool {
        matches!(self, VarianceFlavor::BcHc2 | VarianceFlavor::BcHc3)
    }

    pub fn label(self) -> &'static str {
        match self {
            VarianceFlavor::Hc2 => "hc2",
            VarianceFlavor::Hc3 => "hc3",
            VarianceFlavor::BcHc2 => "bc-hc2",
            VarianceFlavor::BcHc3 => "bc-hc3",
        }
    }
}

impl fmt::Display for VarianceFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for VarianceFlavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown variance flavor {s:?}")))
    }
}

/// Sandwich variance of the treatment coefficient using the residuals stored in `ctx`.
pub fn hc_variance(ctx: &FitContext, hc: HcType) -> Result<f64> {
    ctx.check_leverage()?;
    let mut v = 0.0;
    for i in 0..ctx.n {
        let a = ctx.influence(i);
        let e = ctx.residuals[i];
        v += a * a * e * e * hc.weight(ctx.hat[i]);
    }
    Ok(v)
}

/// [`hc_variance`] of the residuals [`bc_residuals`] would produce, without copying the fit.
pub fn hc_variance_bc(ctx: &FitContext, hc: HcType, debiased: f64) -> Result<f64> {
    ctx.check_leverage()?;
    let delta = debiased - ctx.treatment_coef();
    let mut v = 0.0;
    for i in 0..ctx.n {
        let a = ctx.influence(i);
        let e = ctx.residuals[i] - delta * ctx.row(i)[TREATMENT_COLUMN];
        v += a * a * e * e * hc.weight(ctx.hat[i]);
    }
    Ok(v)
}

/// Replaces the treatment coefficient by `debiased` and recomputes residuals.
pub fn bc_residuals(ctx: &FitContext, debiased: f64) -> FitContext {
    let mut out = ctx.clone();
    let delta = debiased - ctx.treatment_coef();
    out.beta[TREATMENT_COLUMN] = debiased;
    for i in 0..ctx.n {
        out.residuals[i] = ctx.residuals[i] - delta * ctx.row(i)[TREATMENT_COLUMN];
    }
    out
}

/// Bell-McCaffrey degrees of freedom for the `hc`-weighted variance estimator.
///
/// Writes the estimator as `eᵀW²e` with `W = diag(a_i·√weight_i)`. Under a
/// homoskedastic working model `e = (I-H)ε`, so the estimator is a quadratic
/// form in `ε` with matrix `B = W(I-H)W` and `df = tr(B)² / tr(B²)`.
pub fn satterthwaite_df(ctx: &FitContext, hc: HcType) -> Result<f64> {
    ctx.check_leverage()?;
    let p = ctx.p;
    let mut tr_b = 0.0;
    let mut diag_part = 0.0;
    let mut g = SymMatrix::zeros(p);
    for i in 0..ctx.n {
        let a = ctx.influence(i);
        let h = ctx.hat[i];
        let w2 = a * a * hc.weight(h);
        tr_b += w2 * (1.0 - h);
        diag_part += w2 * w2 * (1.0 - 2.0 * h);
        g.rank_one_update(w2, ctx.row(i));
    }
    // Σ_ij w_i² w_j² H_ij² = tr(G M G M) with G = XᵀW²X and M = (XᵀX)⁻¹.
    let gm = g.matmul(&ctx.xtx_inv)?;
    let mut cross = 0.0;
    for i in 0..p {
        for j in 0..p {
            cross += gm[i * p + j] * gm[j * p + i];
        }
    }
    let tr_b2 = diag_part + cross;
    if !(tr_b2 > 0.0) || !(tr_b > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(tr_b * tr_b / tr_b2)
}

/// Residual degrees of freedom convention for Student-t intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudentDf {
    /// `n - 1`, the "naive-t" convention of common small-sample software.
    #[default]
    NMinusOne,
    /// `n - rank(X)`.
    ResidualRank,
}

impl StudentDf {
    pub fn df(self, ctx: &FitContext) -> f64 {
        match self {
            StudentDf::NMinusOne => (ctx.n - 1) as f64,
            StudentDf::ResidualRank => (ctx.n - ctx.p) as f64,
        }
    }
}

/// Reference distribution for interval critical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfMode {
    Z,
    T,
    Satterthwaite,
}

impl DfMode {
    pub const ALL: [DfMode; 3] = [DfMode::Z, DfMode::T, DfMode::Satterthwaite];

    pub fn label(self) -> &'static str {
        match self {
            DfMode::Z => "z",
            DfMode::T => "t",
            DfMode::Satterthwaite => "satterthwaite",
        }
    }
}

impl fmt::Display for DfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DfMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" | "normal" => Ok(DfMode::Z),
            "t" | "student" | "student-t" => Ok(DfMode::T),
            "satterthwaite" | "satt" => Ok(DfMode::Satterthwaite),
            _ => Err(Error::InvalidInput(format!("unknown CI mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Two-sided critical value at `level`; `df = ∞` gives the normal quantile.
pub fn critical_value(level: f64, df: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain {
            value: level,
            domain: "(0, 1)",
        });
    }
    let p = 0.5 + level / 2.0;
    if df.is_infinite() {
        normal_quantile(p)
    } else {
        student_t_quantile(p, df)
    }
}

/// `estimate ± crit·se`.
pub fn confidence_interval(estimate: f64, se: f64, crit: f64) -> Interval {
    Interval {
        lower: estimate - crit * se,
        upper: estimate + crit * se,
    }
}

/// One flavor's standard error, degrees of freedom and intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub flavor: VarianceFlavor,
    pub se: f64,
    pub df_t: f64,
    pub df_satt: f64,
    pub ci_z: Interval,
    pub ci_t: Interval,
    pub ci_satt: Interval,
}

impl VarianceReport {
    pub fn interval(&self, mode: DfMode) -> Interval {
        match mode {
            DfMode::Z => self.ci_z,
            DfMode::T => self.ci_t,
            DfMode::Satterthwaite => self.ci_satt,
        }
    }
}

/// Options shared by variance computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceOptions {
    pub level: f64,
    pub student_df: StudentDf,
    pub rel_tol: f64,
}

impl Default for VarianceOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            student_df: StudentDf::default(),
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// Builds the report for `estimate` using `ctx` (the OLS fit the estimate adjusts).
///
/// Non-BC flavors use the OLS residuals as they are; BC flavors first replace the
/// treatment coefficient by `estimate`. The Satterthwaite df depends only on the
/// design, so it is shared by a flavor and its BC counterpart.
pub fn variance_report(
    ctx: &FitContext,
    estimate: f64,
    flavor: VarianceFlavor,
    opts: &VarianceOptions,
) -> Result<VarianceReport> {
    let hc = flavor.hc_type();
    let var = if flavor.is_bias_corrected() {
        hc_variance_bc(ctx, hc, estimate)?
    } else {
        hc_variance(ctx, hc)?
    };
    let se = var.sqrt();
    let df_t = opts.student_df.df(ctx);
    let df_satt = satterthwaite_df(ctx, hc)?;
    Ok(VarianceReport {
        flavor,
        se,
        df_t,
        df_satt,
        ci_z: confidence_interval(estimate, se, critical_value(opts.level, f64::INFINITY)?),
        ci_t: confidence_interval(estimate, se, critical_value(opts.level, df_t)?),
        ci_satt: confidence_interval(estimate, se, critical_value(opts.level, df_satt)?),
    })
}
