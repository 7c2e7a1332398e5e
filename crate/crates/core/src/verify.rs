//! Self-checks of the exact identities the estimators rely on.
//!
//! Every check enumerates a small assignment space completely, so a pass means
//! the identity holds up to floating-point rounding, not up to sampling error.
//! The constants are compared with an exact rational evaluation.

use crate::design::{realize, Covariates, PotentialOutcomeTable};
use crate::error::Result;
use crate::estimators::{
    decompose_bias_oracle, Analysis, BiasConstants, ConstantName, EstimatorOptions,
};
use crate::randomization::{rng_for, AssignmentSpace};
use crate::variance::{DesignKind, FitContext};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Population sizes for the unbiasedness and decomposition checks.
    pub sizes: Vec<usize>,
    /// Random populations per size.
    pub tables_per_size: usize,
    /// Random centered triples per design for the moment lemmas.
    pub triples: usize,
    pub seed: u64,
    /// Multiplies one constant by the given factor before any check runs.
    pub inject: Option<(ConstantName, f64)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            sizes: vec![8, 10, 12],
            tables_per_size: 2,
            triples: 20,
            seed: 20240601,
            inject: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    fn push(&mut self, name: String, residual: f64, tolerance: f64) {
        self.checks.push(Check {
            name,
            residual,
            tolerance,
            passed: residual <= tolerance,
        });
    }
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// All nine constants in exact rational arithmetic, in [`ConstantName::ALL`] order.
pub fn rational_constants(n: usize, n_a: usize) -> [BigRational; 9] {
    let (n, a) = (n as i64, n_a as i64);
    let b = n - a;
    // Inclusion probabilities of 1, 2 and 3 given units in arm `m`.
    let pis = |m: i64| {
        (
            ratio(m, n),
            ratio(m * (m - 1), n * (n - 1)),
            ratio(m * (m - 1) * (m - 2), n * (n - 1) * (n - 2)),
        )
    };
    let three = ratio(3, 1);
    let two = ratio(2, 1);
    let same_arm = |m: i64| {
        let (p1, p2, p3) = pis(m);
        ratio(n, m * m * m) * (p1 - &three * p2 + &two * p3)
    };
    let adjust =
        |m: i64| ratio(n * (n - 1) * (n - 2), (m - 1) * (m - 2) * m) * ratio(m * m * m, n * n * n);
    let n_aaa = same_arm(a);
    let n_bbb = same_arm(b);
    let (p1, p2, p3) = pis(a);
    let n_aab = ratio(n, a * a * b) * (-p1 + &three * p2 - &two * p3);
    let n_adj_a = adjust(a);
    let n_adj_b = adjust(b);
    let r = ratio(a, b);
    [
        n_aaa.clone(),
        n_bbb.clone(),
        n_aab.clone(),
        n_adj_a.clone(),
        n_adj_b.clone(),
        &r * &n_aaa * &n_adj_a,
        &r * &n_aab * &n_adj_b,
        &n_aaa * &n_adj_a,
        &n_bbb * &n_adj_b,
    ]
}

fn constants_with(n: usize, n_a: usize, opts: &VerifyOptions) -> Result<BiasConstants> {
    let mut c = BiasConstants::new(n, n_a)?;
    if let Some((name, factor)) = opts.inject {
        c.set(name, c.get(name) * factor);
    }
    Ok(c)
}

fn check_constants(report: &mut VerifyReport, opts: &VerifyOptions) -> Result<()> {
    let mut designs = vec![(24, 8), (12, 4), (8, 3)];
    for &n in &opts.sizes {
        designs.push((n, n / 2));
    }
    for (n, n_a) in designs {
        let c = constants_with(n, n_a, opts)?;
        let exact = rational_constants(n, n_a);
        for (name, q) in ConstantName::ALL.iter().zip(&exact) {
            let target = q.to_f64().unwrap_or(f64::NAN);
            // Equal arms make N_AAA and N_BBB vanish, so small targets are compared on the n⁻² scale.
            let scale = target.abs().max(1.0 / (n * n) as f64);
            let rel = (c.get(*name) - target).abs() / scale;
            report.push(
                format!("constant {} at (n={n}, n_A={n_a})", name.label()),
                rel,
                1e-14,
            );
        }
    }
    Ok(())
}

fn centered(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - m).collect()
}

fn mean_of(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| v[i]).sum::<f64>() / idx.len() as f64
}

fn check_lemmas(report: &mut VerifyReport, opts: &VerifyOptions) -> Result<()> {
    for (n, n_a) in [(8usize, 3usize), (9, 4)] {
        let c = constants_with(n, n_a, opts)?;
        let space = AssignmentSpace::new(n, n_a)?;
        let total = space.total()? as f64;
        let mut rng = rng_for(opts.seed, (n * 100 + n_a) as u64);
        let (mut worst_aaa, mut worst_bbb, mut worst_aab, mut worst_adj_a, mut worst_adj_b) =
            (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for _ in 0..opts.triples {
            let mut draw = || centered((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
            let (x, y, z) = (draw(), draw(), draw());
            let m = (0..n).map(|i| x[i] * y[i] * z[i]).sum::<f64>() / n as f64;
            let (mut aaa, mut bbb, mut aab, mut third_a, mut third_b) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for asn in space.enumerate()? {
                let arm_a = asn.treated();
                let t = asn.indicator();
                let arm_b: Vec<usize> = (0..n).filter(|&i| !t[i]).collect();
                let (xa, ya, za) = (mean_of(&x, arm_a), mean_of(&y, arm_a), mean_of(&z, arm_a));
                let (xb, yb, zb) = (
                    mean_of(&x, &arm_b),
                    mean_of(&y, &arm_b),
                    mean_of(&z, &arm_b),
                );
                aaa += xa * ya * za;
                bbb += xb * yb * zb;
                aab += xa * ya * zb;
                third_a += arm_a
                    .iter()
                    .map(|&i| (x[i] - xa) * (y[i] - ya) * (z[i] - za))
                    .sum::<f64>()
                    / n_a as f64;
                third_b += arm_b
                    .iter()
                    .map(|&i| (x[i] - xb) * (y[i] - yb) * (z[i] - zb))
                    .sum::<f64>()
                    / (n - n_a) as f64;
            }
            let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            worst_aaa = worst_aaa.max(rel(aaa / total, c.n_aaa * m));
            worst_bbb = worst_bbb.max(rel(bbb / total, c.n_bbb * m));
            worst_aab = worst_aab.max(rel(aab / total, c.n_aab * m));
            worst_adj_a = worst_adj_a.max(rel(c.n_adj_a * third_a / total, m));
            worst_adj_b = worst_adj_b.max(rel(c.n_adj_b * third_b / total, m));
        }
        let tag = format!("(n={n}, n_A={n_a})");
        report.push(
            format!("triple-product moment N_AAA {tag}"),
            worst_aaa,
            1e-10,
        );
        report.push(
            format!("triple-product moment N_BBB {tag}"),
            worst_bbb,
            1e-10,
        );
        report.push(
            format!("triple-product moment N_AAB {tag}"),
            worst_aab,
            1e-10,
        );
        report.push(
            format!("third-moment adjustment N_Adj,A {tag}"),
            worst_adj_a,
            1e-10,
        );
        report.push(
            format!("third-moment adjustment N_Adj,B {tag}"),
            worst_adj_b,
            1e-10,
        );
    }
    Ok(())
}

/// A random population with two covariates and heterogeneous effects.
pub fn random_table(n: usize, seed: u64, stream: u64) -> Result<PotentialOutcomeTable> {
    let mut rng = rng_for(seed, stream);
    let z1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z2: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..2.0_f64).powi(2))
        .collect();
    let a: Vec<f64> = (0..n)
        .map(|i| 1.0 + z1[i] * z2[i] + 0.5 * z1[i].powi(2) + rng.random_range(-0.5..0.5))
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|i| z2[i] - z1[i].powi(3) + rng.random_range(-0.5..0.5))
        .collect();
    PotentialOutcomeTable::new(a, b, Covariates::from_columns(&[z1, z2])?)
}

fn check_unbiasedness(report: &mut VerifyReport, opts: &VerifyOptions) -> Result<()> {
    let est_opts = EstimatorOptions::default();
    for &n in &opts.sizes {
        let n_a = n / 2;
        let c = constants_with(n, n_a, opts)?;
        let space = AssignmentSpace::new(n, n_a)?;
        let total = space.total()? as f64;
        let (mut worst_ni, mut worst_i, mut worst_dec_ni, mut worst_dec_i) =
            (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        let mut worst_fwl = 0.0_f64;
        let mut worst_recon = 0.0_f64;
        for rep in 0..opts.tables_per_size {
            let table = random_table(n, opts.seed, (n * 1000 + rep) as u64)?;
            let truth = table.true_ate();
            let (mut sum_ni, mut sum_i, mut sum_ols_ni, mut sum_ols_i) = (0.0, 0.0, 0.0, 0.0);
            let (mut sum_err_ni, mut sum_err_i) = (0.0, 0.0);
            for (rank, asn) in space.enumerate()?.enumerate() {
                let data = realize(&table, &asn)?;
                let est = Analysis::new(&data, est_opts)?.point_estimates(&c)?;
                sum_ni += est.debiased_ni;
                sum_i += est.debiased_i;
                sum_ols_ni += est.ols_ni;
                sum_ols_i += est.ols_i;
                let dec = decompose_bias_oracle(&table, &asn, est_opts)?;
                sum_err_ni += dec.ni_error;
                sum_err_i += dec.i_error;
                worst_recon = worst_recon.max(dec.reconstruction_residual());
                if rank % 37 == 0 {
                    let ni = FitContext::for_data(&data, DesignKind::NonInteracted, 1e-12)?;
                    let i = FitContext::for_data(&data, DesignKind::Interacted, 1e-12)?;
                    worst_fwl = worst_fwl
                        .max((ni.treatment_coef() - est.ols_ni).abs())
                        .max((i.treatment_coef() - est.ols_i).abs());
                }
            }
            worst_ni = worst_ni.max((sum_ni / total - truth).abs());
            worst_i = worst_i.max((sum_i / total - truth).abs());
            worst_dec_ni =
                worst_dec_ni.max((sum_err_ni / total - (sum_ols_ni / total - truth)).abs());
            worst_dec_i = worst_dec_i.max((sum_err_i / total - (sum_ols_i / total - truth)).abs());
        }
        let tag = format!("(n={n}, n_A={n_a})");
        report.push(
            format!("unbiased debiased non-interacted {tag}"),
            worst_ni,
            1e-9,
        );
        report.push(format!("unbiased debiased interacted {tag}"), worst_i, 1e-9);
        report.push(
            format!("bias decomposition non-interacted {tag}"),
            worst_dec_ni,
            1e-10,
        );
        report.push(
            format!("bias decomposition interacted {tag}"),
            worst_dec_i,
            1e-10,
        );
        report.push(
            format!("coefficient reconstruction {tag}"),
            worst_recon,
            1e-10,
        );
        report.push(format!("regression equivalence {tag}"), worst_fwl, 1e-9);
    }
    Ok(())
}

/// Runs every check and collects the results; the caller decides how to report failures.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport { checks: Vec::new() };
    check_constants(&mut report, opts)?;
    check_lemmas(&mut report, opts)?;
    check_unbiasedness(&mut report, opts)?;
    Ok(report)
}
