//! Point estimators of the average treatment effect.
//!
//! Covers the difference in means, the non-interacted and interacted
//! regression-adjusted estimators, the closed-form unbiased estimates of their
//! finite-sample bias, and the resulting debiased estimators. All formulas work
//! on arm-wise means of centered covariates, so no regression is solved here;
//! [`crate::variance`] fits the equivalent least-squares models when residuals
//! are needed.

mod constants;
mod decomposition;

pub use constants::{BiasConstants, ConstantName};
pub use decomposition::{decompose_bias_oracle, BiasDecomposition};

use crate::design::{check_arms, group_stats, ExperimentData, GroupStats};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, dot, InverseMode, SymMatrix, DEFAULT_REL_TOL};
use serde::{Deserialize, Serialize};

/// Numerical options shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub rel_tol: f64,
    pub inverse_mode: InverseMode,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            inverse_mode: InverseMode::Strict,
        }
    }
}

impl EstimatorOptions {
    fn invert(&self, m: &SymMatrix, name: &str) -> Result<SymMatrix> {
        m.inverse(self.inverse_mode, self.rel_tol)
            .map_err(|e| e.named(name))
    }
}

/// Moment matrices and coefficient vectors behind both adjusted estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionComponents {
    /// `D = mean(z zᵀ)`.
    pub d: SymMatrix,
    pub d_inv: SymMatrix,
    /// `D̂ = D - p_A z̄_A z̄_Aᵀ - p_B z̄_B z̄_Bᵀ`.
    pub d_hat: SymMatrix,
    pub d_hat_inv: SymMatrix,
    /// `N̂ = p_A N̂_A + p_B N̂_B`.
    pub n_hat: Vec<f64>,
    /// Within-arm covariance of covariates, arm A.
    pub d_hat_a: SymMatrix,
    pub d_hat_a_inv: SymMatrix,
    pub d_hat_b: SymMatrix,
    pub d_hat_b_inv: SymMatrix,
    /// Within-arm covariance of outcome and covariates, arm A.
    pub n_hat_a: Vec<f64>,
    pub n_hat_b: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub q_hat_a: Vec<f64>,
    pub q_hat_b: Vec<f64>,
}

/// Pooled pieces needed by the non-interacted estimator only.
struct PooledComponents {
    d_inv: SymMatrix,
    d_hat_inv: SymMatrix,
    n_hat: Vec<f64>,
    q_hat: Vec<f64>,
}

/// Within-arm pieces needed by the interacted estimator only.
struct ArmComponents {
    d_hat: SymMatrix,
    d_hat_inv: SymMatrix,
    n_hat: Vec<f64>,
    q_hat: Vec<f64>,
}

/// Per-unit rescaled leverages `h_i = z_iᵀ D⁻¹ z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leverages {
    pub h: Vec<f64>,
}

impl Leverages {
    pub fn mean(&self) -> f64 {
        self.h.iter().sum::<f64>() / self.h.len() as f64
    }
}

/// Signed summands of the non-interacted bias estimate; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiBiasTerms {
    /// `(1/n)·n_B/(n_B-1)·cov_B(h, y)`
    pub control_leverage: f64,
    /// `-(1/n)·n_A/(n_A-1)·cov_A(h, y)`
    pub treated_leverage: f64,
    /// `(z̄_B - z̄_A)ᵀ (D̂⁻¹ - D⁻¹) N̂`
    pub observable: f64,
    /// `C_{A,NI}/n_A · Σ_A (z_i - z̄_A)ᵀD⁻¹(z_i - z̄_A)(y_i - ȳ_A)`
    pub treated_third_moment: f64,
    /// `-C_{B,NI}/n_B · Σ_B (z_i - z̄_B)ᵀD⁻¹(z_i - z̄_B)(y_i - ȳ_B)`
    pub control_third_moment: f64,
    pub total: f64,
}

/// Signed summands of the interacted bias estimate; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IBiasTerms {
    /// `(1/n)·n_A/(n_B-1)·cov_B(h, y)`
    pub control_leverage: f64,
    /// `z̄_Bᵀ (D̂_B⁻¹ - D⁻¹) N̂_B`
    pub control_observable: f64,
    /// `-C_{B,I}/n_B · Σ_B (z_i - z̄_B)ᵀD⁻¹(z_i - z̄_B)(y_i - ȳ_B)`
    pub control_third_moment: f64,
    /// `-(1/n)·n_B/(n_A-1)·cov_A(h, y)`
    pub treated_leverage: f64,
    /// `-z̄_Aᵀ (D̂_A⁻¹ - D⁻¹) N̂_A`
    pub treated_observable: f64,
    /// `C_{A,I}/n_A · Σ_A (z_i - z̄_A)ᵀD⁻¹(z_i - z̄_A)(y_i - ȳ_A)`
    pub treated_third_moment: f64,
    pub total: f64,
}

/// Every point estimate for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub unadjusted: f64,
    pub ols_ni: f64,
    pub ols_i: f64,
    pub debiased_ni: f64,
    pub debiased_i: f64,
    pub bias_ni: NiBiasTerms,
    pub bias_i: IBiasTerms,
}

/// Arm summaries that involve the leverages.
struct LeverageMoments {
    /// `mean_arm(h·y) - h̄_arm·ȳ_arm`, computed in centered form.
    cov: f64,
    /// `Σ_arm (z_i - z̄)ᵀ D⁻¹ (z_i - z̄) (y_i - ȳ)`.
    third: f64,
}

fn leverage_moments(
    data: &ExperimentData,
    treated: bool,
    mean_y: f64,
    mean_z: &[f64],
    d_inv: &SymMatrix,
    h: &[f64],
) -> LeverageMoments {
    let k = data.k();
    let mut centered = vec![0.0; k];
    let (mut cov, mut third, mut count) = (0.0, 0.0, 0usize);
    for i in (0..data.n()).filter(|&i| data.t[i] == treated) {
        let dy = data.y[i] - mean_y;
        for (c, (z, m)) in centered.iter_mut().zip(data.z.row(i).iter().zip(mean_z)) {
            *c = z - m;
        }
        cov += h[i] * dy;
        third += bilinear(&centered, d_inv, &centered) * dy;
        count += 1;
    }
    LeverageMoments {
        cov: cov / count as f64,
        third,
    }
}

/// `(1/m) Σ_arm (y_i - ȳ) z_i`.
fn centered_cross_moment(data: &ExperimentData, treated: bool, mean_y: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.k()];
    let mut count = 0usize;
    for i in (0..data.n()).filter(|&i| data.t[i] == treated) {
        let dy = data.y[i] - mean_y;
        for (o, z) in out.iter_mut().zip(data.z.row(i)) {
            *o += dy * z;
        }
        count += 1;
    }
    out.iter_mut().for_each(|o| *o /= count as f64);
    out
}

fn outer_sub(m: &SymMatrix, alpha: f64, v: &[f64]) -> SymMatrix {
    let mut out = m.clone();
    out.rank_one_update(-alpha, v);
    out
}

fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// All estimator inputs for one dataset, computed once and shared.
pub struct Analysis<'a> {
    data: &'a ExperimentData,
    opts: EstimatorOptions,
    pub stats: GroupStats,
    pub d_inv: SymMatrix,
    pub leverages: Leverages,
    n_hat_a: Vec<f64>,
    n_hat_b: Vec<f64>,
}

impl<'a> Analysis<'a> {
    pub fn new(data: &'a ExperimentData, opts: EstimatorOptions) -> Result<Self> {
        let stats = group_stats(data)?;
        let d_inv = opts.invert(&stats.mean_zz, "D")?;
        let h = (0..data.n())
            .map(|i| {
                let z = data.z.row(i);
                bilinear(z, &d_inv, z)
            })
            .collect();
        let n_hat_a = centered_cross_moment(data, true, stats.mean_y_a);
        let n_hat_b = centered_cross_moment(data, false, stats.mean_y_b);
        Ok(Self {
            data,
            opts,
            stats,
            d_inv,
            leverages: Leverages { h },
            n_hat_a,
            n_hat_b,
        })
    }

    pub fn data(&self) -> &ExperimentData {
        self.data
    }

    pub fn diff_in_means(&self) -> f64 {
        self.stats.mean_y_a - self.stats.mean_y_b
    }

    fn pooled(&self) -> Result<PooledComponents> {
        let s = &self.stats;
        let mut d_hat = outer_sub(&s.mean_zz, s.p_a, &s.mean_z_a);
        d_hat.rank_one_update(-s.p_b, &s.mean_z_b);
        let d_hat_inv = self.opts.invert(&d_hat, "D_hat")?;
        let n_hat: Vec<f64> = self
            .n_hat_a
            .iter()
            .zip(&self.n_hat_b)
            .map(|(a, b)| s.p_a * a + s.p_b * b)
            .collect();
        let q_hat = d_hat_inv.mul_vec(&n_hat)?;
        Ok(PooledComponents {
            d_inv: self.d_inv.clone(),
            d_hat_inv,
            n_hat,
            q_hat,
        })
    }

    fn arm(&self, treated: bool) -> Result<ArmComponents> {
        let s = &self.stats;
        let (zz, z, n_hat, name) = if treated {
            (&s.mean_zz_a, &s.mean_z_a, &self.n_hat_a, "D_hat_A")
        } else {
            (&s.mean_zz_b, &s.mean_z_b, &self.n_hat_b, "D_hat_B")
        };
        let d_hat = outer_sub(zz, 1.0, z);
        let d_hat_inv = self.opts.invert(&d_hat, name)?;
        let q_hat = d_hat_inv.mul_vec(n_hat)?;
        Ok(ArmComponents {
            d_hat,
            d_hat_inv,
            n_hat: n_hat.clone(),
            q_hat,
        })
    }

    pub fn components(&self) -> Result<RegressionComponents> {
        let s = &self.stats;
        let mut d_hat = outer_sub(&s.mean_zz, s.p_a, &s.mean_z_a);
        d_hat.rank_one_update(-s.p_b, &s.mean_z_b);
        let pooled = self.pooled()?;
        let a = self.arm(true)?;
        let b = self.arm(false)?;
        Ok(RegressionComponents {
            d: s.mean_zz.clone(),
            d_inv: pooled.d_inv,
            d_hat,
            d_hat_inv: pooled.d_hat_inv,
            n_hat: pooled.n_hat,
            d_hat_a: a.d_hat,
            d_hat_a_inv: a.d_hat_inv,
            d_hat_b: b.d_hat,
            d_hat_b_inv: b.d_hat_inv,
            n_hat_a: a.n_hat,
            n_hat_b: b.n_hat,
            q_hat: pooled.q_hat,
            q_hat_a: a.q_hat,
            q_hat_b: b.q_hat,
        })
    }

    /// `ȳ_A - ȳ_B - (z̄_A - z̄_B)ᵀ Q̂`.
    pub fn ate_noninteracted(&self) -> Result<f64> {
        let pooled = self.pooled()?;
        Ok(self.ni_from(&pooled))
    }

    fn ni_from(&self, pooled: &PooledComponents) -> f64 {
        let s = &self.stats;
        let diff = vec_sub(&s.mean_z_a, &s.mean_z_b);
        self.diff_in_means() - dot(&diff, &pooled.q_hat)
    }

    /// `ȳ_A - ȳ_B - (z̄_Aᵀ Q̂_A - z̄_Bᵀ Q̂_B)`.
    pub fn ate_interacted(&self) -> Result<f64> {
        check_arms(self.stats.n_a, self.stats.n_b, self.data.k() + 2)?;
        let a = self.arm(true)?;
        let b = self.arm(false)?;
        Ok(self.i_from(&a, &b))
    }

    fn i_from(&self, a: &ArmComponents, b: &ArmComponents) -> f64 {
        let s = &self.stats;
        self.diff_in_means() - (dot(&s.mean_z_a, &a.q_hat) - dot(&s.mean_z_b, &b.q_hat))
    }

    fn moments(&self) -> (LeverageMoments, LeverageMoments) {
        let s = &self.stats;
        let h = &self.leverages.h;
        (
            leverage_moments(self.data, true, s.mean_y_a, &s.mean_z_a, &self.d_inv, h),
            leverage_moments(self.data, false, s.mean_y_b, &s.mean_z_b, &self.d_inv, h),
        )
    }

    fn check_bias_arms(&self, constants: &BiasConstants) -> Result<()> {
        let s = &self.stats;
        if s.n_a < 3 {
            return Err(Error::ArmTooSmall {
                arm: 'A',
                size: s.n_a,
            });
        }
        if s.n_b < 3 {
            return Err(Error::ArmTooSmall {
                arm: 'B',
                size: s.n_b,
            });
        }
        if constants.n != self.data.n() || constants.n_a != s.n_a {
            return Err(Error::SizeMismatch(format!(
                "constants for (n={}, n_A={}) applied to data with (n={}, n_A={})",
                constants.n,
                constants.n_a,
                self.data.n(),
                s.n_a
            )));
        }
        Ok(())
    }

    pub fn bias_estimate_ni(&self, constants: &BiasConstants) -> Result<NiBiasTerms> {
        self.check_bias_arms(constants)?;
        let pooled = self.pooled()?;
        let (ma, mb) = self.moments();
        Ok(self.ni_terms(constants, &pooled, &ma, &mb))
    }

    fn ni_terms(
        &self,
        c: &BiasConstants,
        pooled: &PooledComponents,
        ma: &LeverageMoments,
        mb: &LeverageMoments,
    ) -> NiBiasTerms {
        let s = &self.stats;
        let n = self.data.n() as f64;
        let (fa, fb) = (s.n_a as f64, s.n_b as f64);
        let diff = vec_sub(&s.mean_z_b, &s.mean_z_a);
        let delta = pooled
            .d_hat_inv
            .sub(&pooled.d_inv)
            .expect("matching dimensions");
        let control_leverage = (1.0 / n) * fb / (fb - 1.0) * mb.cov;
        let treated_leverage = -(1.0 / n) * fa / (fa - 1.0) * ma.cov;
        let observable = bilinear(&diff, &delta, &pooled.n_hat);
        let treated_third_moment = c.c_a_ni / fa * ma.third;
        let control_third_moment = -c.c_b_ni / fb * mb.third;
        NiBiasTerms {
            control_leverage,
            treated_leverage,
            observable,
            treated_third_moment,
            control_third_moment,
            total: control_leverage
                + treated_leverage
                + observable
                + treated_third_moment
                + control_third_moment,
        }
    }

    pub fn bias_estimate_i(&self, constants: &BiasConstants) -> Result<IBiasTerms> {
        self.check_bias_arms(constants)?;
        let a = self.arm(true)?;
        let b = self.arm(false)?;
        let (ma, mb) = self.moments();
        Ok(self.i_terms(constants, &a, &b, &ma, &mb))
    }

    fn i_terms(
        &self,
        c: &BiasConstants,
        a: &ArmComponents,
        b: &ArmComponents,
        ma: &LeverageMoments,
        mb: &LeverageMoments,
    ) -> IBiasTerms {
        let s = &self.stats;
        let n = self.data.n() as f64;
        let (fa, fb) = (s.n_a as f64, s.n_b as f64);
        let delta_a = a.d_hat_inv.sub(&self.d_inv).expect("matching dimensions");
        let delta_b = b.d_hat_inv.sub(&self.d_inv).expect("matching dimensions");
        let control_leverage = (1.0 / n) * fa / (fb - 1.0) * mb.cov;
        let control_observable = bilinear(&s.mean_z_b, &delta_b, &b.n_hat);
        let control_third_moment = -c.c_b_i / fb * mb.third;
        let treated_leverage = -(1.0 / n) * fb / (fa - 1.0) * ma.cov;
        let treated_observable = -bilinear(&s.mean_z_a, &delta_a, &a.n_hat);
        let treated_third_moment = c.c_a_i / fa * ma.third;
        IBiasTerms {
            control_leverage,
            control_observable,
            control_third_moment,
            treated_leverage,
            treated_observable,
            treated_third_moment,
            total: control_leverage
                + control_observable
                + control_third_moment
                + treated_leverage
                + treated_observable
                + treated_third_moment,
        }
    }

    /// All five point estimates plus both bias decompositions, sharing intermediate work.
    pub fn point_estimates(&self, constants: &BiasConstants) -> Result<PointEstimates> {
        self.check_bias_arms(constants)?;
        check_arms(self.stats.n_a, self.stats.n_b, self.data.k() + 2)?;
        let pooled = self.pooled()?;
        let a = self.arm(true)?;
        let b = self.arm(false)?;
        let (ma, mb) = self.moments();
        let ols_ni = self.ni_from(&pooled);
        let ols_i = self.i_from(&a, &b);
        let bias_ni = self.ni_terms(constants, &pooled, &ma, &mb);
        let bias_i = self.i_terms(constants, &a, &b, &ma, &mb);
        Ok(PointEstimates {
            unadjusted: self.diff_in_means(),
            ols_ni,
            ols_i,
            debiased_ni: ols_ni - bias_ni.total,
            debiased_i: ols_i - bias_i.total,
            bias_ni,
            bias_i,
        })
    }
}

fn constants_for(data: &ExperimentData) -> Result<BiasConstants> {
    BiasConstants::new(data.n(), data.n_treated())
}

/// `ȳ_A - ȳ_B`.
pub fn diff_in_means(data: &ExperimentData) -> Result<f64> {
    let g = group_stats(data)?;
    Ok(g.mean_y_a - g.mean_y_b)
}

pub fn regression_components(
    data: &ExperimentData,
    opts: EstimatorOptions,
) -> Result<RegressionComponents> {
    Analysis::new(data, opts)?.components()
}

pub fn ate_noninteracted(data: &ExperimentData, opts: EstimatorOptions) -> Result<f64> {
    Analysis::new(data, opts)?.ate_noninteracted()
}

pub fn ate_interacted(data: &ExperimentData, opts: EstimatorOptions) -> Result<f64> {
    Analysis::new(data, opts)?.ate_interacted()
}

pub fn leverages(data: &ExperimentData, opts: EstimatorOptions) -> Result<Leverages> {
    Ok(Analysis::new(data, opts)?.leverages)
}

pub fn bias_constants(n: usize, n_a: usize) -> Result<BiasConstants> {
    BiasConstants::new(n, n_a)
}

pub fn bias_estimate_ni(
    data: &ExperimentData,
    constants: &BiasConstants,
    opts: EstimatorOptions,
) -> Result<NiBiasTerms> {
    Analysis::new(data, opts)?.bias_estimate_ni(constants)
}

pub fn bias_estimate_i(
    data: &ExperimentData,
    constants: &BiasConstants,
    opts: EstimatorOptions,
) -> Result<IBiasTerms> {
    Analysis::new(data, opts)?.bias_estimate_i(constants)
}

pub fn ate_debiased_ni(data: &ExperimentData, opts: EstimatorOptions) -> Result<f64> {
    let analysis = Analysis::new(data, opts)?;
    let c = constants_for(data)?;
    Ok(analysis.ate_noninteracted()? - analysis.bias_estimate_ni(&c)?.total)
}

pub fn ate_debiased_i(data: &ExperimentData, opts: EstimatorOptions) -> Result<f64> {
    let analysis = Analysis::new(data, opts)?;
    let c = constants_for(data)?;
    Ok(analysis.ate_interacted()? - analysis.bias_estimate_i(&c)?.total)
}

/// Convenience wrapper computing every point estimate for `data`.
pub fn point_estimates(data: &ExperimentData, opts: EstimatorOptions) -> Result<PointEstimates> {
    let c = constants_for(data)?;
    Analysis::new(data, opts)?.point_estimates(&c)
}
