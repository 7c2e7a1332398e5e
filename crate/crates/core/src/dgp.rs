//! Simulation populations built from quantile-spaced covariates.
//!
//! Unit `i` (1-based) gets `X1(i) = F1⁻¹(i/(n+1))` and `X2(i) = F2⁻¹(i/(n+1))`.
//! Outcomes are driven by the studentized leverage `h_i` of `(X1, X2)`: variant 1
//! sets `(Y0, Y1) = (0, 2h)`, variant 2 `(-h, h)` and variant 3 `(h, h)`, so every
//! population has a true effect of exactly zero.

use crate::design::{Covariates, PotentialOutcomeTable};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, SymMatrix, DEFAULT_REL_TOL};
use crate::special::{inv_reg_inc_beta_bisect, normal_quantile};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

/// Bisection tolerance for Beta(2, 5) quantiles.
pub const BETA_QUANTILE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// Beta(0.5, 0.5), the arcsine law.
    BetaHalfHalf,
    BetaTwoFive,
    /// Symmetric triangular on [0, 1] with mode 1/2.
    Triangular,
    Normal,
    Uniform,
    /// `U²` for uniform `U`.
    UniformSquared,
    /// `U²` read in descending order, so the first unit gets the largest value.
    UniformSquaredReversed,
}

impl Distribution {
    pub fn label(self) -> &'static str {
        match self {
            Distribution::BetaHalfHalf => "Beta(0.5,0.5)",
            Distribution::BetaTwoFive => "Beta(2,5)",
            Distribution::Triangular => "Triangular(0,1)",
            Distribution::Normal => "Normal(0,1)",
            Distribution::Uniform => "Uniform(0,1)",
            Distribution::UniformSquared => "Uniform^2",
            Distribution::UniformSquaredReversed => "Uniform^2 reversed",
        }
    }
}

/// Inverse CDF at `p`. For the reversed column this is the value assigned at
/// position `p`, i.e. `(1 - p)²`.
pub fn quantile(dist: Distribution, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(match dist {
        Distribution::BetaHalfHalf => (FRAC_PI_2 * p).sin().powi(2),
        Distribution::BetaTwoFive => inv_reg_inc_beta_bisect(2.0, 5.0, p, BETA_QUANTILE_TOL),
        Distribution::Triangular => {
            if p < 0.5 {
                (p / 2.0).sqrt()
            } else {
                1.0 - ((1.0 - p) / 2.0).sqrt()
            }
        }
        Distribution::Normal => normal_quantile(p)?,
        Distribution::Uniform => p,
        Distribution::UniformSquared => p * p,
        Distribution::UniformSquaredReversed => (1.0 - p) * (1.0 - p),
    })
}

/// A simulation design: covariate scheme, outcome variant and population size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: u8,
    pub variant: u8,
    pub n: usize,
}

impl SchemeSpec {
    pub fn new(scheme: u8, variant: u8, n: usize) -> Result<Self> {
        if !(1..=4).contains(&scheme) {
            return Err(Error::InvalidInput(format!(
                "scheme must be 1-4, got {scheme}"
            )));
        }
        if !(1..=3).contains(&variant) {
            return Err(Error::InvalidInput(format!(
                "variant must be 1-3, got {variant}"
            )));
        }
        if n < 5 {
            return Err(Error::InvalidInput(format!(
                "population size must be at least 5, got {n}"
            )));
        }
        Ok(Self { scheme, variant, n })
    }

    pub fn distributions(&self) -> (Distribution, Distribution) {
        match self.scheme {
            1 => (Distribution::BetaHalfHalf, Distribution::Triangular),
            2 => (Distribution::BetaTwoFive, Distribution::Normal),
            3 => (Distribution::Uniform, Distribution::UniformSquaredReversed),
            _ => (Distribution::Uniform, Distribution::UniformSquared),
        }
    }

    /// Short name such as `DGP1.2`.
    pub fn name(&self) -> String {
        format!("DGP{}.{}", self.scheme, self.variant)
    }
}

pub fn build_covariates(spec: &SchemeSpec) -> Result<Covariates> {
    let (d1, d2) = spec.distributions();
    let denom = (spec.n + 1) as f64;
    let rows = (1..=spec.n)
        .map(|i| {
            let p = i as f64 / denom;
            Ok(vec![quantile(d1, p)?, quantile(d2, p)?])
        })
        .collect::<Result<Vec<_>>>()?;
    Covariates::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentizedLeverage {
    /// `v_i = x_iᵀ(Σ_j x_j x_jᵀ)⁻¹x_i` on the raw covariates.
    pub v: Vec<f64>,
    /// `(v_i - v̄) / sd(v)` with divisor `n - 1`.
    pub h: Vec<f64>,
}

pub fn studentized_leverage(x: &Covariates) -> Result<StudentizedLeverage> {
    let n = x.n();
    let mut s = SymMatrix::zeros(x.k());
    for i in 0..n {
        s.rank_one_update(1.0, x.row(i));
    }
    let s_inv = s.invert_spd(DEFAULT_REL_TOL).map_err(|e| e.named("X'X"))?;
    let v: Vec<f64> = (0..n)
        .map(|i| bilinear(x.row(i), &s_inv, x.row(i)))
        .collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::InvalidInput("all leverages are equal".into()));
    }
    let sd = var.sqrt();
    let h = v.iter().map(|x| (x - mean) / sd).collect();
    Ok(StudentizedLeverage { v, h })
}

/// The full potential-outcome population for `spec`, with its leverages.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPopulation {
    pub spec: SchemeSpec,
    pub leverage: StudentizedLeverage,
    pub table: PotentialOutcomeTable,
}

impl GeneratedPopulation {
    /// Writes `i, x1, x2, v, h, y0, y1` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["i", "x1", "x2", "v", "h", "y0", "y1"])?;
        let z = &self.table.z;
        for i in 0..z.n() {
            let row = z.row(i);
            w.write_record([
                (i + 1).to_string(),
                row[0].to_string(),
                row[1].to_string(),
                self.leverage.v[i].to_string(),
                self.leverage.h[i].to_string(),
                self.table.b[i].to_string(),
                self.table.a[i].to_string(),
            ])?;
        }
        Ok(())
    }
}

pub fn generate(spec: &SchemeSpec) -> Result<GeneratedPopulation> {
    let x = build_covariates(spec)?;
    let leverage = studentized_leverage(&x)?;
    let h = &leverage.h;
    let (b, a): (Vec<f64>, Vec<f64>) = match spec.variant {
        1 => (vec![0.0; spec.n], h.iter().map(|v| 2.0 * v).collect()),
        2 => (h.iter().map(|v| -v).collect(), h.clone()),
        _ => (h.clone(), h.clone()),
    };
    let table = PotentialOutcomeTable::new(a, b, x)?;
    Ok(GeneratedPopulation {
        spec: *spec,
        leverage,
        table,
    })
}

pub fn build_table(spec: &SchemeSpec) -> Result<PotentialOutcomeTable> {
    Ok(generate(spec)?.table)
}
