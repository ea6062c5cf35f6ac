//! Nested interval candidates `I_0 ⊂ I_1 ⊂ … ⊂ I_K` ending at a common
//! endpoint, and the change-point locations tested inside each of them.

use crate::error::{Error, Result};
use crate::likelihood::Interval;
use crate::volmodel::Family;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalGrid {
    lengths: Vec<usize>,
    /// Optional margins `m′`, `m″`: breaks are only tested at
    /// `t₀ + m′ ≤ τ ≤ n − m″`.
    pub margin_start: usize,
    pub margin_end: usize,
}

/// How the candidate set of one step came about.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CandidateSet {
    /// The default range, possibly clamped into the feasible region.
    Locations(Vec<usize>),
    /// `I_k` is too short to be split into two estimable segments.
    Untestable,
}

impl IntervalGrid {
    pub fn from_lengths(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths[0] == 0 {
            return Err(Error::input("grid needs at least one positive length"));
        }
        if lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input(format!(
                "grid lengths must increase strictly: {lengths:?}"
            )));
        }
        Ok(IntervalGrid {
            lengths,
            margin_start: 0,
            margin_end: 0,
        })
    }

    /// `m_k = round(m0·a^k)` for `k = 0..=steps`, with duplicates removed.
    pub fn geometric(m0: usize, a: f64, steps: usize) -> Result<Self> {
        if !(a > 1.0) || m0 == 0 {
            return Err(Error::input(format!(
                "geometric grid needs m0 ≥ 1 and a > 1 (m0={m0}, a={a})"
            )));
        }
        let mut lengths: Vec<usize> = (0..=steps)
            .map(|k| (m0 as f64 * a.powi(k as i32)).round() as usize)
            .collect();
        lengths.dedup();
        Self::from_lengths(lengths)
    }

    /// Geometric grid from `m0` to exactly `m_max`: the number of steps is
    /// `round(log(m_max/m0) / log a)` and the multiplier is adjusted so the
    /// last length equals `m_max`.
    pub fn spanning(m0: usize, a: f64, m_max: usize) -> Result<Self> {
        if !(a > 1.0) || m0 == 0 || m_max < m0 {
            return Err(Error::input(format!(
                "grid needs 1 ≤ m0 ≤ mK and a > 1 (m0={m0}, a={a}, mK={m_max})"
            )));
        }
        if m_max == m0 {
            return Self::from_lengths(vec![m0]);
        }
        let ratio = m_max as f64 / m0 as f64;
        let steps = ((ratio.ln() / a.ln()).round() as usize).max(1);
        let mut lengths: Vec<usize> = (0..=steps)
            .map(|k| (m0 as f64 * ratio.powf(k as f64 / steps as f64)).round() as usize)
            .collect();
        lengths[steps] = m_max;
        lengths.dedup();
        Self::from_lengths(lengths)
    }

    pub fn with_margins(mut self, margin_start: usize, margin_end: usize) -> Self {
        self.margin_start = margin_start;
        self.margin_end = margin_end;
        self
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn m0(&self) -> usize {
        self.lengths[0]
    }

    /// Number of test steps `K`.
    pub fn steps(&self) -> usize {
        self.lengths.len() - 1
    }

    pub fn length(&self, k: usize) -> usize {
        self.lengths[k]
    }

    pub fn max_length(&self) -> usize {
        *self.lengths.last().expect("grid is nonempty")
    }

    /// The grid restricted to lengths not exceeding `available`.
    pub fn truncated(&self, available: usize) -> Option<Self> {
        let lengths: Vec<usize> = self.lengths.iter().copied().take_while(|&m| m <= available).collect();
        if lengths.is_empty() {
            return None;
        }
        Some(IntervalGrid {
            lengths,
            ..self.clone()
        })
    }

    /// `I_k = [n − m_k + 1, n]`.
    pub fn interval(&self, endpoint: usize, k: usize) -> Result<Interval> {
        Interval::ending_at(endpoint, self.lengths[k])
    }

    /// Break locations `τ` (last index of the left segment) tested in `I_k`,
    /// `k ≥ 1`: `[n − m_{k−1} + 1, n − m_{k−2}]`, and for `k = 1`
    /// `[n − m_0 + 1, n − ⌈m_0/2⌉]`. A range without feasible locations is
    /// clamped into the feasible region.
    pub fn candidates(&self, family: Family, endpoint: usize, k: usize) -> Result<CandidateSet> {
        assert!(k >= 1 && k <= self.steps(), "step {k} outside 1..={}", self.steps());
        let interval = self.interval(endpoint, k)?;
        let n = endpoint as isize;
        let prev = self.lengths[k - 1] as isize;
        let prev2 = if k >= 2 {
            self.lengths[k - 2] as isize
        } else {
            (self.lengths[0] as isize + 1) / 2
        };
        let mut lo = n - prev + 1;
        let mut hi = n - prev2;
        lo = lo.max(interval.start as isize + self.margin_start as isize);
        hi = hi.min(n - self.margin_end as isize);

        let min = family.min_observations() as isize;
        let feasible_lo = interval.start as isize + min - 1;
        let feasible_hi = n - min;
        if feasible_lo > feasible_hi {
            return Ok(CandidateSet::Untestable);
        }
        if hi < lo {
            // Margins removed everything; fall back to the nearest location.
            hi = lo;
        }
        let lo = lo.clamp(feasible_lo, feasible_hi);
        let hi = hi.clamp(feasible_lo, feasible_hi);
        Ok(CandidateSet::Locations((lo..=hi).map(|t| t as usize).collect()))
    }
}
