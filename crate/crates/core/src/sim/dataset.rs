//! Measured experiments and their CSV form.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Hidden simulation state, kept for oracle checks only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub nu: Vec<[f64; 3]>,
    pub eta: Vec<[f64; 3]>,
    /// Inertial current `[NS, EW]`.
    pub current: Vec<[f64; 2]>,
    /// Inertial wind `[NS, EW]`.
    pub wind: Vec<[f64; 2]>,
}

/// One experiment: inputs `u(k)` and measurements at samples `k = 0..N_D`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Experiment {
    pub u: Vec<[f64; 3]>,
    pub y: Vec<[f64; 3]>,
    pub y_psi: Vec<f64>,
    pub y_aux: Option<Vec<[f64; 3]>>,
    pub truth: Option<Truth>,
}

impl Experiment {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Copy without the hidden truth.
    pub fn measured(&self) -> Experiment {
        Experiment {
            truth: None,
            ..self.clone()
        }
    }

    /// Measured rotation entries `(cos y_psi, sin y_psi)`, i.e. the first row of
    /// `J^-1(y_psi)` restricted to the horizontal plane.
    pub fn rotation_entries(&self, k: usize) -> (f64, f64) {
        let (s, c) = self.y_psi[k].sin_cos();
        (c, s)
    }

    /// Full measured `Y_R(k)`: the horizontal block of `J^-1(y_psi)`, 3x2.
    pub fn y_r(&self, k: usize) -> nalgebra::Matrix3x2<f64> {
        let (c, s) = self.rotation_entries(k);
        nalgebra::Matrix3x2::new(c, s, -s, c, 0.0, 0.0)
    }

    /// First `n` samples.
    pub fn prefix(&self, n: usize) -> Experiment {
        let n = n.min(self.len());
        Experiment {
            u: self.u[..n].to_vec(),
            y: self.y[..n].to_vec(),
            y_psi: self.y_psi[..n].to_vec(),
            y_aux: self.y_aux.as_ref().map(|a| a[..n].to_vec()),
            truth: self.truth.as_ref().map(|t| Truth {
                nu: t.nu[..n].to_vec(),
                eta: t.eta[..n].to_vec(),
                current: t.current[..n].to_vec(),
                wind: t.wind[..n].to_vec(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let check = |what: &'static str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    axis: what,
                    expected: n,
                    found: len,
                })
            }
        };
        check("input series", self.u.len())?;
        check("heading series", self.y_psi.len())?;
        if let Some(a) = &self.y_aux {
            check("auxiliary series", a.len())?;
        }
        if let Some(t) = &self.truth {
            check("truth velocity", t.nu.len())?;
            check("truth pose", t.eta.len())?;
            check("truth current", t.current.len())?;
            check("truth wind", t.wind.len())?;
        }
        Ok(())
    }

    /// Writes one row per sample, `{:.16e}` formatting (17 significant digits).
    pub fn write_csv<W: Write>(&self, writer: W, include_truth: bool) -> Result<()> {
        let truth = if include_truth {
            self.truth.as_ref()
        } else {
            None
        };
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = vec!["k", "u1", "u2", "u3", "y1", "y2", "y3", "y_psi"];
        if self.y_aux.is_some() {
            header.extend(["yaux1", "yaux2", "yaux3"]);
        }
        if truth.is_some() {
            header.extend(TRUTH_COLUMNS);
        }
        w.write_record(&header).map_err(csv_err)?;
        let f = |v: f64| format!("{v:.16e}");
        for k in 0..self.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.u[k].iter().map(|&v| f(v)));
            row.extend(self.y[k].iter().map(|&v| f(v)));
            row.push(f(self.y_psi[k]));
            if let Some(a) = &self.y_aux {
                row.extend(a[k].iter().map(|&v| f(v)));
            }
            if let Some(t) = truth {
                row.extend(t.nu[k].iter().map(|&v| f(v)));
                row.extend(t.eta[k].iter().map(|&v| f(v)));
                row.extend(t.current[k].iter().map(|&v| f(v)));
                row.extend(t.wind[k].iter().map(|&v| f(v)));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Experiment> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let need =
            |name: &str| col(name).ok_or_else(|| Error::Parse(format!("missing column `{name}`")));
        let ui = [need("u1")?, need("u2")?, need("u3")?];
        let yi = [need("y1")?, need("y2")?, need("y3")?];
        let psi = need("y_psi")?;
        let aux = match (col("yaux1"), col("yaux2"), col("yaux3")) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        let truth_cols: Option<Vec<usize>> = TRUTH_COLUMNS.iter().map(|c| col(c)).collect();

        let mut e = Experiment {
            y_aux: aux.map(|_| Vec::new()),
            truth: truth_cols.as_ref().map(|_| Truth::default()),
            ..Default::default()
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Parse(format!("row {line}: missing field {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|err| Error::Parse(format!("row {line}: {err}")))
            };
            let triple = |idx: [usize; 3]| -> Result<[f64; 3]> {
                Ok([get(idx[0])?, get(idx[1])?, get(idx[2])?])
            };
            e.u.push(triple(ui)?);
            e.y.push(triple(yi)?);
            e.y_psi.push(get(psi)?);
            if let (Some(idx), Some(a)) = (aux, e.y_aux.as_mut()) {
                a.push(triple(idx)?);
            }
            if let (Some(tc), Some(t)) = (&truth_cols, e.truth.as_mut()) {
                t.nu.push([get(tc[0])?, get(tc[1])?, get(tc[2])?]);
                t.eta.push([get(tc[3])?, get(tc[4])?, get(tc[5])?]);
                t.current.push([get(tc[6])?, get(tc[7])?]);
                t.wind.push([get(tc[8])?, get(tc[9])?]);
            }
        }
        e.validate()?;
        Ok(e)
    }
}

const TRUTH_COLUMNS: [&str; 10] = [
    "nu1",
    "nu2",
    "nu3",
    "eta1",
    "eta2",
    "psi",
    "current_ns",
    "current_ew",
    "wind_ns",
    "wind_ew",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Experiments gathered under a common configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub experiments: Vec<Experiment>,
    pub seed: u64,
}

impl Dataset {
    pub fn measured(&self) -> Dataset {
        Dataset {
            experiments: self.experiments.iter().map(Experiment::measured).collect(),
            seed: self.seed,
        }
    }

    /// Total number of samples over all experiments.
    pub fn total_samples(&self) -> usize {
        self.experiments.iter().map(Experiment::len).sum()
    }

    pub fn prefix(&self, n_per_experiment: usize) -> Dataset {
        Dataset {
            experiments: self
                .experiments
                .iter()
                .map(|e| e.prefix(n_per_experiment))
                .collect(),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Experiment {
        Experiment {
            u: vec![[1.0, 2.0, 3.0], [0.1, 0.2, 1.0 / 3.0]],
            y: vec![[0.5, -0.25, 1e-9], [std::f64::consts::PI, 2.0, -7.5]],
            y_psi: vec![0.0, 1.2345678901234567],
            y_aux: Some(vec![[0.0; 3], [1.0, -1.0, 0.1]]),
            truth: Some(Truth {
                nu: vec![[1.0; 3], [2.0; 3]],
                eta: vec![[0.0; 3], [0.3; 3]],
                current: vec![[0.2, 0.2], [0.21, 0.19]],
                wind: vec![[1.0, 1.0], [0.9, 1.1]],
            }),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let e = sample();
        let mut buf = Vec::new();
        e.write_csv(&mut buf, true).unwrap();
        assert_eq!(Experiment::read_csv(buf.as_slice()).unwrap(), e);

        let mut buf = Vec::new();
        e.write_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,u1,u2,u3,y1,y2,y3,y_psi,yaux1,yaux2,yaux3\n"));
        assert_eq!(Experiment::read_csv(buf.as_slice()).unwrap(), e.measured());
    }

    #[test]
    fn missing_column_is_an_error() {
        let text = "k,u1,u2,y1,y2,y3,y_psi\n0,1,2,3,4,5,6\n";
        assert!(matches!(
            Experiment::read_csv(text.as_bytes()),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn measured_rotation_is_orthogonal() {
        let e = sample();
        let r = e.y_r(1);
        let g = r.transpose() * r;
        assert!((g - nalgebra::Matrix2::identity()).amax() < 1e-15);
    }
}
