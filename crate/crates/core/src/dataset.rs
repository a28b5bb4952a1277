//! Labeled samples `(x, u, y)` and their CSV form.
//!
//! The CSV header is `u,y,x1,...,xp`; prediction inputs may omit the `y` column.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Result, VcldaError};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub u: Array1<f64>,
    pub y: Vec<u8>,
}

/// Features and exposures, with labels when the source had them.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub x: Array2<f64>,
    pub u: Array1<f64>,
    pub y: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, u: Array1<f64>, y: Vec<u8>) -> Result<Self> {
        if x.nrows() != u.len() || u.len() != y.len() {
            return Err(VcldaError::DimensionMismatch(format!(
                "x has {} rows, u has {}, y has {}",
                x.nrows(),
                u.len(),
                y.len()
            )));
        }
        crate::meanfit::check_labels(&y)?;
        Ok(Dataset { x, u, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_count(&self, label: u8) -> usize {
        self.y.iter().filter(|&&l| l == label).count()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            u: self.u.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.x, &self.u, Some(&self.y))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let obs = Observations::read_csv(input)?;
        let y = obs
            .y
            .ok_or_else(|| VcldaError::Format("missing 'y' column".into()))?;
        Dataset::new(obs.x, obs.u, y)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

impl Observations {
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| VcldaError::Format(format!("header: {e}")))?
            .clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names.first() != Some(&"u") {
            return Err(VcldaError::Format("first column must be 'u'".into()));
        }
        let has_y = names.get(1) == Some(&"y");
        let first_x = if has_y { 2 } else { 1 };
        for (k, name) in names[first_x..].iter().enumerate() {
            if *name != format!("x{}", k + 1) {
                return Err(VcldaError::Format(format!(
                    "column {} is '{name}', expected 'x{}'",
                    first_x + k + 1,
                    k + 1
                )));
            }
        }
        let p = names.len() - first_x;

        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut ys = Vec::new();
        for (r, record) in reader.records().enumerate() {
            // data rows are numbered from 1; the header is row 0
            let row = r + 1;
            let record = record.map_err(|e| VcldaError::Parse {
                row,
                column: 0,
                message: e.to_string(),
            })?;
            if record.len() != names.len() {
                return Err(VcldaError::Parse {
                    row,
                    column: record.len().min(names.len()) + 1,
                    message: format!("expected {} fields, found {}", names.len(), record.len()),
                });
            }
            let num = |c: usize| -> Result<f64> {
                let cell = record[c].trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| VcldaError::Parse {
                        row,
                        column: c + 1,
                        message: format!("'{cell}' is not a finite number"),
                    })
            };
            us.push(num(0)?);
            if has_y {
                let cell = record[1].trim();
                let label = match cell {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(VcldaError::Parse {
                            row,
                            column: 2,
                            message: format!("label '{cell}' is not 0 or 1"),
                        })
                    }
                };
                ys.push(label);
            }
            for c in first_x..names.len() {
                xs.push(num(c)?);
            }
        }
        let n = us.len();
        let x = Array2::from_shape_vec((n, p), xs).expect("row lengths checked");
        Ok(Observations {
            x,
            u: Array1::from(us),
            y: has_y.then_some(ys),
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn write_rows<W: Write>(out: W, x: &Array2<f64>, u: &Array1<f64>, y: Option<&[u8]>) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let p = x.ncols();
    let mut header = String::from("u");
    if y.is_some() {
        header.push_str(",y");
    }
    for j in 1..=p {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(w, "{header}")?;
    for i in 0..x.nrows() {
        // `{}` on f64 prints the shortest string that parses back to the same value
        write!(w, "{}", u[i])?;
        if let Some(y) = y {
            write!(w, ",{}", y[i])?;
        }
        for j in 0..p {
            write!(w, ",{}", x[[i, j]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(
            array![[0.1, -2.5e-17], [1.0 / 3.0, 7.0]],
            array![0.25, 0.987654321012345],
            vec![1, 0],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u,y,x1,x2\n"));
        assert!(!text.contains('\r'));
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let text = "u,y,x1,x2\n0.5,1,1.0,2.0\n0.2,0,abc,1.0\n";
        match Dataset::read_csv(text.as_bytes()) {
            Err(VcldaError::Parse { row, column, .. }) => assert_eq!((row, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unlabeled_input() {
        let text = "u,x1\n0.5,1.0\n";
        let obs = Observations::read_csv(text.as_bytes()).unwrap();
        assert!(obs.y.is_none());
        assert!(Dataset::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn bad_label_and_header() {
        assert!(matches!(
            Dataset::read_csv("u,y,x1\n0.5,2,1.0\n".as_bytes()),
            Err(VcldaError::Parse { column: 2, .. })
        ));
        assert!(Dataset::read_csv("u,y,z1\n0.5,1,1.0\n".as_bytes()).is_err());
    }
}
