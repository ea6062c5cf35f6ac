//! Critical-value schedules `z_k = C + D·log m_k` and their flat key-value
//! file format.
//!
//! ```text
//! # comment lines start with '#'
//! format=1
//! family=constant
//! lengths=10,12,16,...
//! margins=0,0
//! C=21.2
//! D=-2.47
//! z=15.5,...
//! theta0=1,0,0
//! r=1
//! rho=1
//! mc_reps=1000
//! seed=42
//! sources=...
//! ```
//!
//! Floats are written with Rust's shortest round-trip representation, so a
//! schedule reloads bit-exactly. `C` and `D` are absent for composites built
//! by taking pointwise maxima.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::volmodel::{Family, ParamVector};

/// How a schedule was produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScheduleMeta {
    pub theta0: Vec<ParamVector>,
    pub r: Option<f64>,
    pub rho: Option<f64>,
    pub mc_reps: Option<usize>,
    pub seed: Option<u64>,
    /// Provenance of composite schedules, one entry per input.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueSchedule {
    pub family: Family,
    pub grid: IntervalGrid,
    pub c: Option<f64>,
    pub d: Option<f64>,
    /// `z[k]` is the value at length `m_k`, `k = 0..=K`. Only `k ≥ 1` is
    /// used for testing; `z[0]` is reported as `z(m_0)`.
    z: Vec<f64>,
    pub meta: ScheduleMeta,
}

impl CriticalValueSchedule {
    /// `z_k = C + D·log m_k` for `k = 1..=K`.
    pub fn linear(family: Family, grid: IntervalGrid, c: f64, d: f64, meta: ScheduleMeta) -> Result<Self> {
        if !c.is_finite() || !d.is_finite() {
            return Err(Error::domain(format!(
                "schedule coefficients must be finite (C={c}, D={d})"
            )));
        }
        let z = grid.lengths().iter().map(|&m| c + d * (m as f64).ln()).collect();
        Ok(CriticalValueSchedule {
            family,
            grid,
            c: Some(c),
            d: Some(d),
            z,
            meta,
        })
    }

    /// Arbitrary values, one per grid length (including `m_0`), e.g. `+∞`
    /// everywhere to disable testing.
    pub fn from_values(family: Family, grid: IntervalGrid, z: Vec<f64>, meta: ScheduleMeta) -> Result<Self> {
        if z.len() != grid.lengths().len() {
            return Err(Error::ScheduleMismatch(format!(
                "{} critical values for {} grid lengths",
                z.len(),
                grid.lengths().len()
            )));
        }
        if z.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("critical values must not be NaN"));
        }
        Ok(CriticalValueSchedule {
            family,
            grid,
            c: None,
            d: None,
            z,
            meta,
        })
    }

    pub fn constant_value(family: Family, grid: IntervalGrid, value: f64) -> Result<Self> {
        let z = vec![value; grid.lengths().len()];
        Self::from_values(family, grid, z, ScheduleMeta::default())
    }

    /// Critical value at grid index `k`.
    pub fn z(&self, k: usize) -> f64 {
        self.z[k]
    }

    /// Values for `k = 0..=K`.
    pub fn values(&self) -> &[f64] {
        &self.z
    }

    /// `z(m)`: `C + D·log m` for linear schedules, otherwise the tabulated
    /// value when `m` is a grid length.
    pub fn z_at_length(&self, m: usize) -> Option<f64> {
        if let (Some(c), Some(d)) = (self.c, self.d) {
            return Some(c + d * (m as f64).ln());
        }
        self.grid.lengths().iter().position(|&l| l == m).map(|i| self.z[i])
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join_f = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let join_u = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "# adaptive-vol critical value schedule");
        let _ = writeln!(s, "format=1");
        let _ = writeln!(s, "family={}", self.family);
        let _ = writeln!(s, "lengths={}", join_u(self.grid.lengths()));
        let _ = writeln!(s, "margins={},{}", self.grid.margin_start, self.grid.margin_end);
        if let Some(c) = self.c {
            let _ = writeln!(s, "C={c}");
        }
        if let Some(d) = self.d {
            let _ = writeln!(s, "D={d}");
        }
        let _ = writeln!(s, "z={}", join_f(&self.z));
        if !self.meta.theta0.is_empty() {
            let t: Vec<String> = self.meta.theta0.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(s, "theta0={}", t.join(";"));
        }
        if let Some(r) = self.meta.r {
            let _ = writeln!(s, "r={r}");
        }
        if let Some(rho) = self.meta.rho {
            let _ = writeln!(s, "rho={rho}");
        }
        if let Some(n) = self.meta.mc_reps {
            let _ = writeln!(s, "mc_reps={n}");
        }
        if let Some(seed) = self.meta.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        if !self.meta.sources.is_empty() {
            let _ = writeln!(s, "sources={}", self.meta.sources.join(";"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut family = None;
        let mut lengths = None;
        let mut margins = (0, 0);
        let (mut c, mut d, mut z) = (None, None, None);
        let mut meta = ScheduleMeta::default();

        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            let float = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| perr(format!("bad number `{v}`: {e}")))
            };
            let uint = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| perr(format!("bad integer `{v}`: {e}")))
            };
            match key.trim() {
                "format" => {
                    if value != "1" {
                        return Err(perr(format!("unsupported format version {value}")));
                    }
                }
                "family" => family = Some(value.parse::<Family>().map_err(|e| perr(e.to_string()))?),
                "lengths" => lengths = Some(value.split(',').map(uint).collect::<Result<Vec<_>>>()?),
                "margins" => {
                    let m: Vec<usize> = value.split(',').map(uint).collect::<Result<_>>()?;
                    if m.len() != 2 {
                        return Err(perr("margins needs two values".into()));
                    }
                    margins = (m[0], m[1]);
                }
                "C" => c = Some(float(value)?),
                "D" => d = Some(float(value)?),
                "z" => z = Some(value.split(',').map(float).collect::<Result<Vec<_>>>()?),
                "theta0" => {
                    meta.theta0 = value
                        .split(';')
                        .map(|t| t.parse::<ParamVector>().map_err(|e| perr(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "r" => meta.r = Some(float(value)?),
                "rho" => meta.rho = Some(float(value)?),
                "mc_reps" => meta.mc_reps = Some(uint(value)?),
                "seed" => meta.seed = Some(value.parse().map_err(|e| perr(format!("bad seed: {e}")))?),
                "sources" => meta.sources = value.split(';').map(str::to_owned).collect(),
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Parse {
            line: 0,
            msg: format!("missing key `{k}`"),
        };
        let family = family.ok_or_else(|| missing("family"))?;
        let grid =
            IntervalGrid::from_lengths(lengths.ok_or_else(|| missing("lengths"))?)?.with_margins(margins.0, margins.1);
        let z = z.ok_or_else(|| missing("z"))?;
        let mut schedule = Self::from_values(family, grid, z, meta)?;
        schedule.c = c;
        schedule.d = d;
        Ok(schedule)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> IntervalGrid {
        IntervalGrid::spanning(10, 1.25, 570).unwrap()
    }

    #[test]
    fn linear_values() {
        let s = CriticalValueSchedule::linear(Family::Constant, grid(), 20.0, -2.0, ScheduleMeta::default()).unwrap();
        assert_eq!(s.values().len(), 19);
        assert_eq!(s.z(1), 20.0 - 2.0 * (s.grid.length(1) as f64).ln());
        assert_eq!(s.z_at_length(10).unwrap(), 20.0 - 2.0 * 10f64.ln());
        assert!(s.values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn infinite_schedule_round_trips() {
        let s = CriticalValueSchedule::constant_value(Family::Garch11, grid(), f64::INFINITY).unwrap();
        let back = CriticalValueSchedule::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = CriticalValueSchedule::from_text("format=1\nfamily=constant\nlengths=10,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(CriticalValueSchedule::from_text("family=constant\n").is_err());
        assert!(CriticalValueSchedule::from_text("family=constant\nlengths=10,12\nz=1,2,3\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(c in -50.0f64..150.0, d in -20.0f64..0.0, r in 0.1f64..2.0, seed in any::<u64>()) {
            let meta = ScheduleMeta {
                theta0: vec![ParamVector::new(1.0, 0.1, 0.8)],
                r: Some(r),
                rho: Some(1.0),
                mc_reps: Some(400),
                seed: Some(seed),
                sources: vec![],
            };
            let s = CriticalValueSchedule::linear(Family::Garch11, grid().with_margins(1, 2), c, d, meta).unwrap();
            let back = CriticalValueSchedule::from_text(&s.to_text()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.to_text(), s.to_text());
        }
    }
}
