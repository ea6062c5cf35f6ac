//! CSV data files.
//!
//! A header row is required. `y` holds the returns; `t` (an opaque label),
//! `sigma2_true` and `regime` are optional. Lines starting with `#` are
//! comments, which is how every file written by this crate records the
//! command that produced it.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::volmodel::ReturnSeries;

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::input(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub returns: ReturnSeries,
    pub sigma2: Option<Vec<f64>>,
    pub regime: Option<Vec<usize>>,
}

impl DataSet {
    /// Label of observation `i`: its `t` value if present, else the index.
    pub fn label(&self, i: usize) -> String {
        match self.returns.timestamps() {
            Some(ts) => ts[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let y_col = col("y").ok_or(Error::Parse {
            line: 1,
            msg: "missing required column `y`".into(),
        })?;
        let (t_col, s_col, r_col) = (col("t"), col("sigma2_true"), col("regime"));

        let mut ys = Vec::new();
        let mut ts = Vec::new();
        let mut s2 = Vec::new();
        let mut regimes = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::Parse {
                    line,
                    msg: format!("malformed row: {e}"),
                }
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |c: usize, name: &str| -> Result<&str> {
                record.get(c).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("column `{name}` missing"),
                })
            };
            let number = |c: usize, name: &str| -> Result<f64> {
                let raw = field(c, name)?;
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Parse {
                        line,
                        msg: format!("column `{name}`: `{raw}` is not a finite number"),
                    }),
                }
            };
            ys.push(number(y_col, "y")?);
            if let Some(c) = t_col {
                ts.push(field(c, "t")?.to_owned());
            }
            if let Some(c) = s_col {
                let v = number(c, "sigma2_true")?;
                if v <= 0.0 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("column `sigma2_true`: `{v}` is not positive"),
                    });
                }
                s2.push(v);
            }
            if let Some(c) = r_col {
                let raw = field(c, "regime")?;
                regimes.push(raw.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column `regime`: `{raw}` is not a nonnegative integer"),
                })?);
            }
        }
        if ys.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "no data rows".into(),
            });
        }
        let mut returns = ReturnSeries::new(ys)?;
        if t_col.is_some() {
            returns = returns.with_timestamps(ts)?;
        }
        Ok(DataSet {
            returns,
            sigma2: s_col.map(|_| s2),
            regime: r_col.map(|_| regimes),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Writes `comments` as `#` lines, then `t,y[,sigma2_true][,regime]`.
    pub fn write<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "y"];
        if self.sigma2.is_some() {
            header.push("sigma2_true");
        }
        if self.regime.is_some() {
            header.push("regime");
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, y) in self.returns.values().iter().enumerate() {
            let mut row = vec![self.label(i), y.to_string()];
            if let Some(s) = &self.sigma2 {
                row.push(s[i].to_string());
            }
            if let Some(r) = &self.regime {
                row.push(r[i].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data = DataSet {
            returns: ReturnSeries::new(vec![0.5, -1.25, 3.0]).unwrap(),
            sigma2: Some(vec![1.0, 1.5, 2.0]),
            regime: Some(vec![0, 0, 1]),
        };
        let mut buf = Vec::new();
        data.write(&mut buf, &["made by a test".into()]).unwrap();
        let back = DataSet::read(buf.as_slice()).unwrap();
        assert_eq!(back.returns.values(), data.returns.values());
        assert_eq!(back.sigma2, data.sigma2);
        assert_eq!(back.regime, data.regime);
        assert_eq!(back.label(2), "2");
    }

    #[test]
    fn schema_errors_name_column_and_row() {
        let err = DataSet::read("t,x\n0,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
        let err = DataSet::read("# c\nt,y\n0,1\n1,abc\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("`y`"));
            }
            other => panic!("{other}"),
        }
        assert!(DataSet::read("t,y,sigma2_true\n0,1,-1\n".as_bytes()).is_err());
        assert!(DataSet::read("t,y\n".as_bytes()).is_err());
    }

    #[test]
    fn optional_columns() {
        let d = DataSet::read("y\n1\n2\n".as_bytes()).unwrap();
        assert!(d.sigma2.is_none() && d.returns.timestamps().is_none());
        let d = DataSet::read("t,y\n2024-01-02,1\n2024-01-03,2\n".as_bytes()).unwrap();
        assert_eq!(d.label(1), "2024-01-03");
    }
}
