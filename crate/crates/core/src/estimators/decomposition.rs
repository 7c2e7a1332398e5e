//! Coefficient decompositions that need both potential outcomes.
//!
//! `Q̂ = Q + ν1 + ν2 + ν3` for the pooled fit and `Q̂_A = Q_A + ν1A + ν2A`
//! (likewise for B) for the interacted fit. The population targets `Q`, `Q_A`
//! and `Q_B` depend on outcomes nobody observes, so this module is only an
//! oracle for tests and the verification suite.

use super::{Analysis, EstimatorOptions};
use crate::design::{realize, Assignment, PotentialOutcomeTable};
use crate::error::Result;
use crate::linalg::dot;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    /// `N = p_A·mean(a* z) + p_B·mean(b* z)`.
    pub n_pop: Vec<f64>,
    pub q: Vec<f64>,
    pub q_a: Vec<f64>,
    pub q_b: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub q_hat_a: Vec<f64>,
    pub q_hat_b: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub nu3: Vec<f64>,
    pub nu1_a: Vec<f64>,
    pub nu2_a: Vec<f64>,
    pub nu1_b: Vec<f64>,
    pub nu2_b: Vec<f64>,
    /// `(z̄_B - z̄_A)ᵀ(ν1 + ν2 + ν3)`; its expectation is the bias of the pooled estimator.
    pub ni_error: f64,
    /// `z̄_Bᵀ(ν1B + ν2B) - z̄_Aᵀ(ν1A + ν2A)`; its expectation is the bias of the interacted estimator.
    pub i_error: f64,
}

impl BiasDecomposition {
    /// Largest absolute residual of the three reconstruction identities.
    pub fn reconstruction_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.q.len() {
            let pooled = self.q[j] + self.nu1[j] + self.nu2[j] + self.nu3[j] - self.q_hat[j];
            let a = self.q_a[j] + self.nu1_a[j] + self.nu2_a[j] - self.q_hat_a[j];
            let b = self.q_b[j] + self.nu1_b[j] + self.nu2_b[j] - self.q_hat_b[j];
            worst = worst.max(pooled.abs()).max(a.abs()).max(b.abs());
        }
        worst
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Population-weighted mean of `w_i z_i`.
fn weighted_mean(
    w: &[f64],
    rows: impl Fn(usize) -> Vec<f64>,
    k: usize,
    index: &[usize],
) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for &i in index {
        for (o, z) in out.iter_mut().zip(rows(i)) {
            *o += w[i] * z;
        }
    }
    out.iter_mut().for_each(|o| *o /= index.len() as f64);
    out
}

pub fn decompose_bias_oracle(
    table: &PotentialOutcomeTable,
    asn: &Assignment,
    opts: EstimatorOptions,
) -> Result<BiasDecomposition> {
    let data = realize(table, asn)?;
    let analysis = Analysis::new(&data, opts)?;
    let comps = analysis.components()?;
    let s = &analysis.stats;
    let n = data.n();
    let k = data.k();
    let z = |i: usize| data.z.row(i).to_vec();

    let mean_a = table.a.iter().sum::<f64>() / n as f64;
    let mean_b = table.b.iter().sum::<f64>() / n as f64;
    let a_star: Vec<f64> = table.a.iter().map(|v| v - mean_a).collect();
    let b_star: Vec<f64> = table.b.iter().map(|v| v - mean_b).collect();

    let all: Vec<usize> = (0..n).collect();
    let t = asn.indicator();
    let arm_a: Vec<usize> = all.iter().copied().filter(|&i| t[i]).collect();
    let arm_b: Vec<usize> = all.iter().copied().filter(|&i| !t[i]).collect();

    let az = weighted_mean(&a_star, z, k, &all);
    let bz = weighted_mean(&b_star, z, k, &all);
    let az_a = weighted_mean(&a_star, z, k, &arm_a);
    let bz_b = weighted_mean(&b_star, z, k, &arm_b);
    let a_star_a = arm_a.iter().map(|&i| a_star[i]).sum::<f64>() / arm_a.len() as f64;
    let b_star_b = arm_b.iter().map(|&i| b_star[i]).sum::<f64>() / arm_b.len() as f64;

    // With centered z, mean(a z) = mean(a* z).
    let n_pop = add(
        &az.iter().map(|v| s.p_a * v).collect::<Vec<_>>(),
        &bz.iter().map(|v| s.p_b * v).collect::<Vec<_>>(),
    );
    let d_inv = &comps.d_inv;
    let q = d_inv.mul_vec(&n_pop)?;
    let q_a = d_inv.mul_vec(&az)?;
    let q_b = d_inv.mul_vec(&bz)?;

    let inner: Vec<f64> = (0..k)
        .map(|j| s.p_a * (az_a[j] - az[j]) + s.p_b * (bz_b[j] - bz[j]))
        .collect();
    let nu1 = d_inv.mul_vec(&inner)?;
    let nu2 = comps.d_hat_inv.sub(d_inv)?.mul_vec(&comps.n_hat)?;
    let third: Vec<f64> = (0..k)
        .map(|j| -(s.p_a * a_star_a * s.mean_z_a[j] + s.p_b * b_star_b * s.mean_z_b[j]))
        .collect();
    let nu3 = d_inv.mul_vec(&third)?;

    let nu1_a = comps.d_hat_a_inv.sub(d_inv)?.mul_vec(&comps.n_hat_a)?;
    let nu2_a = d_inv.mul_vec(&sub(&comps.n_hat_a, &az))?;
    let nu1_b = comps.d_hat_b_inv.sub(d_inv)?.mul_vec(&comps.n_hat_b)?;
    let nu2_b = d_inv.mul_vec(&sub(&comps.n_hat_b, &bz))?;

    let nu_sum = add(&add(&nu1, &nu2), &nu3);
    let ni_error = dot(&sub(&s.mean_z_b, &s.mean_z_a), &nu_sum);
    let i_error = dot(&s.mean_z_b, &add(&nu1_b, &nu2_b)) - dot(&s.mean_z_a, &add(&nu1_a, &nu2_a));

    Ok(BiasDecomposition {
        n_pop,
        q,
        q_a,
        q_b,
        q_hat: comps.q_hat,
        q_hat_a: comps.q_hat_a,
        q_hat_b: comps.q_hat_b,
        nu1,
        nu2,
        nu3,
        nu1_a,
        nu2_a,
        nu1_b,
        nu2_b,
        ni_error,
        i_error,
    })
}
