//! Finite-population constants for the unbiased bias estimators.
//!
//! `n_aaa`, `n_bbb` and `n_aab` convert population third moments of centered
//! variables into expectations of products of arm means under complete
//! randomization; `n_adj_a` and `n_adj_b` turn an arm's within-arm third-moment
//! estimator into an unbiased estimator of the population third moment.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The nine scalar constants for a design with `n` units and `n_a` treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConstants {
    pub n: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// `E[x̄_A ȳ_A z̄_A] = n_aaa · mean(xyz)` for centered x, y, z.
    pub n_aaa: f64,
    /// `E[x̄_B ȳ_B z̄_B] = n_bbb · mean(xyz)`.
    pub n_bbb: f64,
    /// `E[x̄_A ȳ_A z̄_B] = n_aab · mean(xyz)`.
    pub n_aab: f64,
    /// Rescales arm A's centered third moment to be unbiased for the population one.
    pub n_adj_a: f64,
    pub n_adj_b: f64,
    pub c_a_ni: f64,
    pub c_b_ni: f64,
    pub c_a_i: f64,
    pub c_b_i: f64,
}

/// Names of the individual constants, used by the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstantName {
    NAaa,
    NBbb,
    NAab,
    NAdjA,
    NAdjB,
    CANi,
    CBNi,
    CAI,
    CBI,
}

impl ConstantName {
    pub const ALL: [ConstantName; 9] = [
        ConstantName::NAaa,
        ConstantName::NBbb,
        ConstantName::NAab,
        ConstantName::NAdjA,
        ConstantName::NAdjB,
        ConstantName::CANi,
        ConstantName::CBNi,
        ConstantName::CAI,
        ConstantName::CBI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConstantName::NAaa => "N_AAA",
            ConstantName::NBbb => "N_BBB",
            ConstantName::NAab => "N_AAB",
            ConstantName::NAdjA => "N_Adj,A",
            ConstantName::NAdjB => "N_Adj,B",
            ConstantName::CANi => "C_{A,NI}",
            ConstantName::CBNi => "C_{B,NI}",
            ConstantName::CAI => "C_{A,I}",
            ConstantName::CBI => "C_{B,I}",
        }
    }
}

impl BiasConstants {
    pub fn new(n: usize, n_a: usize) -> Result<Self> {
        if n_a < 3 {
            return Err(Error::ArmTooSmall {
                arm: 'A',
                size: n_a,
            });
        }
        if n < n_a + 3 {
            return Err(Error::ArmTooSmall {
                arm: 'B',
                size: n.saturating_sub(n_a),
            });
        }
        let n_b = n - n_a;
        let nf = n as f64;
        let (fa, fb) = (n_a as f64, n_b as f64);

        // n/m³ · (m/n - 3m(m-1)/(n(n-1)) + 2m(m-1)(m-2)/(n(n-1)(n-2))), with the
        // common factor m/n cancelled.
        let same_arm = |m: f64| {
            (1.0 - 3.0 * (m - 1.0) / (nf - 1.0)
                + 2.0 * ((m - 1.0) / (nf - 1.0)) * ((m - 2.0) / (nf - 2.0)))
                / (m * m)
        };
        // n(n-1)(n-2) / ((m-1)(m-2)m) · m³/n³
        let adjust =
            |m: f64| ((nf - 1.0) / nf) * ((nf - 2.0) / nf) * (m / (m - 1.0)) * (m / (m - 2.0));

        let n_aaa = same_arm(fa);
        let n_bbb = same_arm(fb);
        // z̄_B = -(n_A/n_B) z̄_A when z is centered.
        let n_aab = -(fa / fb) * n_aaa;
        let n_adj_a = adjust(fa);
        let n_adj_b = adjust(fb);
        let ratio = fa / fb;
        Ok(Self {
            n,
            n_a,
            n_b,
            n_aaa,
            n_bbb,
            n_aab,
            n_adj_a,
            n_adj_b,
            c_a_ni: ratio * n_aaa * n_adj_a,
            c_b_ni: ratio * n_aab * n_adj_b,
            c_a_i: n_aaa * n_adj_a,
            c_b_i: n_bbb * n_adj_b,
        })
    }

    pub fn get(&self, name: ConstantName) -> f64 {
        match name {
            ConstantName::NAaa => self.n_aaa,
            ConstantName::NBbb => self.n_bbb,
            ConstantName::NAab => self.n_aab,
            ConstantName::NAdjA => self.n_adj_a,
            ConstantName::NAdjB => self.n_adj_b,
            ConstantName::CANi => self.c_a_ni,
            ConstantName::CBNi => self.c_b_ni,
            ConstantName::CAI => self.c_a_i,
            ConstantName::CBI => self.c_b_i,
        }
    }

    pub fn set(&mut self, name: ConstantName, value: f64) {
        let slot = match name {
            ConstantName::NAaa => &mut self.n_aaa,
            ConstantName::NBbb => &mut self.n_bbb,
            ConstantName::NAab => &mut self.n_aab,
            ConstantName::NAdjA => &mut self.n_adj_a,
            ConstantName::NAdjB => &mut self.n_adj_b,
            ConstantName::CANi => &mut self.c_a_ni,
            ConstantName::CBNi => &mut self.c_b_ni,
            ConstantName::CAI => &mut self.c_a_i,
            ConstantName::CBI => &mut self.c_b_i,
        };
        *slot = value;
    }
}
