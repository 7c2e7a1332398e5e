//! The complete-randomization assignment space.
//!
//! Subsets are ordered lexicographically by their sorted index lists, so rank 0
//! is `{0, .., n_A-1}` and the last rank is `{n-n_A, .., n-1}`. Unranking lets
//! the exact engine split the space into independent rank ranges, and seeded
//! sampling draws uniform ranks and unranks them.

mod engine;

pub use engine::{
    dump_header, dump_record, evaluate, exact_distribution, exact_distribution_with_dump,
    monte_carlo_distribution, monte_carlo_distribution_with_dump, CiSpec, CiSummary,
    DistributionSummary, DumpSink, EngineConfig, EstimatorKind, EstimatorSummary, Evaluation,
    SCHEMA_VERSION,
};

use crate::design::Assignment;
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact `C(n, k)` as a big integer.
pub fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // Each partial product C(n, i+1) is an integer, so the division is exact.
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `C(n, k)` if it fits in 64 bits.
pub fn binomial(n: usize, k: usize) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return Err(Error::Overflow { n, k });
        }
    }
    Ok(acc as u64)
}

/// All `n_A`-subsets of `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSpace {
    n: usize,
    n_a: usize,
    total: BigUint,
    /// Pascal table `C(m, j)` for `m ≤ n`, `j ≤ n_A`, present when the total fits in 64 bits.
    table: Option<Vec<u64>>,
}

impl AssignmentSpace {
    pub fn new(n: usize, n_a: usize) -> Result<Self> {
        if n_a < 2 || n_a + 2 > n {
            return Err(Error::InvalidInput(format!(
                "need 2 <= n_A <= n - 2, got n = {n}, n_A = {n_a}"
            )));
        }
        let total = binomial_big(n, n_a);
        let table = total.to_u64().map(|_| {
            let w = n_a + 1;
            let mut t = vec![0u64; (n + 1) * w];
            for m in 0..=n {
                t[m * w] = 1;
                for j in 1..=n_a.min(m) {
                    // Entries not needed by unranking may saturate.
                    t[m * w + j] = t[(m - 1) * w + j - 1].saturating_add(if j < m {
                        t[(m - 1) * w + j]
                    } else {
                        0
                    });
                }
            }
            t
        });
        Ok(Self {
            n,
            n_a,
            total,
            table,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_treated(&self) -> usize {
        self.n_a
    }

    pub fn total_big(&self) -> &BigUint {
        &self.total
    }

    pub fn total(&self) -> Result<u64> {
        self.total.to_u64().ok_or(Error::Overflow {
            n: self.n,
            k: self.n_a,
        })
    }

    fn choose(&self, m: usize, j: usize) -> u64 {
        let t = self.table.as_ref().expect("small space");
        if j > m {
            0
        } else {
            t[m * (self.n_a + 1) + j]
        }
    }

    /// The `index`-th subset in lexicographic order.
    pub fn unrank(&self, index: u64) -> Result<Assignment> {
        let total = self.total()?;
        if index >= total {
            return Err(Error::IndexOutOfRange { index, total });
        }
        let mut rest = index;
        let mut treated = Vec::with_capacity(self.n_a);
        let mut x = 0usize;
        for slot in 0..self.n_a {
            loop {
                // Subsets whose next element is x.
                let count = self.choose(self.n - x - 1, self.n_a - slot - 1);
                if rest < count {
                    break;
                }
                rest -= count;
                x += 1;
            }
            treated.push(x);
            x += 1;
        }
        Ok(Assignment::from_sorted_unchecked(self.n, treated))
    }

    /// Unranking with arbitrary-precision ranks, for spaces beyond 64 bits.
    pub fn unrank_big(&self, index: &BigUint) -> Result<Assignment> {
        if index >= &self.total {
            return Err(Error::IndexOutOfRange {
                index: index.to_u64().unwrap_or(u64::MAX),
                total: self.total.to_u64().unwrap_or(u64::MAX),
            });
        }
        let mut rest = index.clone();
        let mut treated = Vec::with_capacity(self.n_a);
        let mut x = 0usize;
        for slot in 0..self.n_a {
            loop {
                let count = binomial_big(self.n - x - 1, self.n_a - slot - 1);
                if rest < count {
                    break;
                }
                rest -= count;
                x += 1;
            }
            treated.push(x);
            x += 1;
        }
        Ok(Assignment::from_sorted_unchecked(self.n, treated))
    }

    /// Lexicographic iterator over the whole space.
    pub fn enumerate(&self) -> Result<Enumerate> {
        self.enumerate_range(0, self.total()?)
    }

    /// Iterator over ranks `start..end`.
    pub fn enumerate_range(&self, start: u64, end: u64) -> Result<Enumerate> {
        let total = self.total()?;
        let end = end.min(total);
        let current = if start < end {
            Some(self.unrank(start)?.treated().to_vec())
        } else {
            None
        };
        Ok(Enumerate {
            n: self.n,
            current,
            remaining: end.saturating_sub(start),
        })
    }

    /// `count` independent uniform draws, reproducible from `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<Assignment>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    /// One uniform draw: a uniform rank, unranked.
    pub fn draw<R: RngCore>(&self, rng: &mut R) -> Result<Assignment> {
        match self.total.to_u64() {
            Some(total) => self.unrank(rng.random_range(0..total)),
            None => {
                // 64 surplus random bits make the modulo bias below 2^-64.
                let bits = self.total.bits() + 64;
                let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
                rng.fill_bytes(&mut bytes);
                let rank = BigUint::from_bytes_le(&bytes) % &self.total;
                self.unrank_big(&rank)
            }
        }
    }
}

/// Lexicographic successor stream produced by [`AssignmentSpace::enumerate`].
pub struct Enumerate {
    n: usize,
    current: Option<Vec<usize>>,
    remaining: u64,
}

impl Enumerate {
    /// Advances `c` to its lexicographic successor; false at the last subset.
    fn advance(n: usize, c: &mut [usize]) -> bool {
        let k = c.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if c[i] < n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for Enumerate {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.remaining == 0 {
            return None;
        }
        let c = self.current.as_mut()?;
        let out = c.clone();
        self.remaining -= 1;
        if self.remaining > 0 {
            Self::advance(self.n, c);
        }
        Some(Assignment::from_sorted_unchecked(self.n, out))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (r, Some(r))
    }
}

/// Seeded generator used everywhere a reproducible stream is needed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
