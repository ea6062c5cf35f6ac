//! Piecewise-parameter volatility processes.
//!
//! A scenario is a list of `(length, θ)` segments. Only the parameters jump at
//! a break; the variance recursion carries its state through, so
//! `σ²_t = ω(t) + α(t) Y²_{t−1} + β(t) σ²_{t−1}` everywhere after the first
//! observation.
//!
//! Scenario files hold one `key=value` pair per line:
//!
//! ```text
//! # low GARCH effect
//! family=garch11
//! segment=500,1,0.2,0.1
//! segment=100,4,0.2,0.1
//! ```
//!
//! where a segment is `length,ω,α,β`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::volmodel::{Family, InitRule, ModelSpec, ParamVector, ReturnSeries, VolatilityPath};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ModelSpec,
    segments: Vec<(usize, ParamVector)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaperScenario {
    LowGarchEffect,
    HighGarchEffect,
}

impl FromStr for PaperScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low-garch" => Ok(PaperScenario::LowGarchEffect),
            "high-garch" => Ok(PaperScenario::HighGarchEffect),
            other => Err(Error::input(format!(
                "unknown scenario `{other}` (expected low-garch or high-garch)"
            ))),
        }
    }
}

/// A simulated scenario path.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub returns: ReturnSeries,
    pub sigma2: VolatilityPath,
    /// Index of the first observation of every segment after the first.
    pub breaks: Vec<usize>,
    /// Segment number of every observation.
    pub regime: Vec<usize>,
}

/// Default ω path: levels 1, 4, 1, 2.5, 1 over 500, 100, 75, 75 and 250
/// observations.
pub const DEFAULT_OMEGA_PATH: [(usize, f64); 5] = [(500, 1.0), (100, 4.0), (75, 1.0), (75, 2.5), (250, 1.0)];

impl Scenario {
    pub fn new(spec: ModelSpec, segments: Vec<(usize, ParamVector)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::input("a scenario needs at least one segment"));
        }
        for (i, (len, theta)) in segments.iter().enumerate() {
            if *len == 0 {
                return Err(Error::input(format!("segment {} has zero length", i + 1)));
            }
            spec.validate(theta)?;
        }
        Ok(Scenario { spec, segments })
    }

    /// Segments with fixed `(α, β)` and jumps in ω only.
    pub fn paper(kind: PaperScenario) -> Self {
        let (alpha, beta) = match kind {
            PaperScenario::LowGarchEffect => (0.2, 0.1),
            PaperScenario::HighGarchEffect => (0.2, 0.7),
        };
        let segments = DEFAULT_OMEGA_PATH
            .iter()
            .map(|&(len, omega)| (len, ParamVector::new(omega, alpha, beta)))
            .collect();
        Scenario::new(ModelSpec::garch11(), segments).expect("default scenario is valid")
    }

    pub fn segments(&self) -> &[(usize, ParamVector)] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.0).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn break_indices(&self) -> Vec<usize> {
        self.segments
            .iter()
            .scan(0, |acc, (len, _)| {
                *acc += len;
                Some(*acc)
            })
            .take(self.segments.len() - 1)
            .collect()
    }

    pub fn concat(&self, other: &Scenario) -> Result<Scenario> {
        if self.spec != other.spec {
            return Err(Error::input("cannot concatenate scenarios with different model specs"));
        }
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().copied());
        Scenario::new(self.spec, segments)
    }

    /// Draws one path. A single-segment scenario reproduces
    /// [`crate::volmodel::simulate_path`] for the same seed.
    pub fn generate(&self, seed: u64) -> Result<Simulated> {
        let n = self.len();
        let mut rng = seed::rng(seed);
        let mut ys = Vec::with_capacity(n);
        let mut s2s = Vec::with_capacity(n);
        let mut regime = Vec::with_capacity(n);
        let mut s2 = InitRule::Unconditional.initial_variance(&self.segments[0].1, &[]);
        for (seg, (len, theta)) in self.segments.iter().enumerate() {
            for _ in 0..*len {
                if let Some(&prev) = ys.last() {
                    let prev: f64 = prev;
                    s2 = theta.omega + theta.alpha * prev * prev + theta.beta * s2;
                }
                let eps: f64 = StandardNormal.sample(&mut rng);
                ys.push(s2.sqrt() * eps);
                s2s.push(s2);
                regime.push(seg);
            }
        }
        Ok(Simulated {
            returns: ReturnSeries::new(ys)?,
            sigma2: VolatilityPath::new(s2s)?,
            breaks: self.break_indices(),
            regime,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut family = None;
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key=value, got `{line}`")))?;
            match key.trim() {
                "family" => family = Some(value.trim().parse::<Family>().map_err(|e| perr(e.to_string()))?),
                "segment" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 4 {
                        return Err(perr(format!(
                            "segment needs length,omega,alpha,beta, got `{}`",
                            value.trim()
                        )));
                    }
                    let len: usize = parts[0]
                        .parse()
                        .map_err(|e| perr(format!("bad segment length `{}`: {e}", parts[0])))?;
                    let theta: ParamVector = parts[1..].join(",").parse().map_err(|e: Error| perr(e.to_string()))?;
                    if len == 0 {
                        return Err(perr("segment length must be positive".into()));
                    }
                    segments.push((i + 1, len, theta));
                }
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        let family = family.ok_or(Error::Parse {
            line: 0,
            msg: "missing key `family`".into(),
        })?;
        if segments.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "no segments".into(),
            });
        }
        let spec = ModelSpec::new(family);
        for (line, _, theta) in &segments {
            spec.validate(theta).map_err(|e| Error::Parse {
                line: *line,
                msg: e.to_string(),
            })?;
        }
        Scenario::new(spec, segments.into_iter().map(|(_, len, theta)| (len, theta)).collect())
    }

    /// Stable 64-bit FNV-1a hash of the canonical text form.
    pub fn hash(&self) -> u64 {
        self.to_string().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "family={}", self.spec.family)?;
        for (len, theta) in &self.segments {
            writeln!(f, "segment={len},{theta}")?;
        }
        Ok(())
    }
}
