//! CSV dataset files.
//!
//! Header: `trajectory_id,t,x,y,z,wind_x,wind_y`. Positions are read as
//! consistent abstract units (meters assumed on a local tangent plane), time
//! in seconds and wind in knots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{Dataset, Record, SortReport};
use crate::error::{Error, Result};
use crate::metric::{Point4, WindVector};

pub const HEADER: [&str; 7] = ["trajectory_id", "t", "x", "y", "z", "wind_x", "wind_y"];

/// Largest tolerated fraction of rows with non-finite fields.
pub const MAX_REJECTED_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    pub rejected: usize,
    pub trajectories: usize,
    pub reordered: bool,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Dataset, LoadReport)> {
    read_dataset(BufReader::new(File::open(path)?))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header `{}`, got `{}`", HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut records = Vec::new();
    let mut rejected = 0usize;
    let mut total = 0usize;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        total += 1;
        if row.len() != HEADER.len() {
            return Err(Error::Malformed {
                line,
                message: format!("expected {} fields, got {}", HEADER.len(), row.len()),
            });
        }
        let mut vals = [0.0f64; 6];
        for (slot, (field, name)) in vals.iter_mut().zip(row.iter().skip(1).zip(&HEADER[1..])) {
            *slot = field.parse().map_err(|_| Error::Malformed {
                line,
                message: format!("cannot parse {name} `{field}`"),
            })?;
        }
        if vals.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            continue;
        }
        let id = &row[0];
        if id.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty trajectory_id".into(),
            });
        }
        records.push(Record::new(
            id,
            Point4::new(vals[1], vals[2], vals[3], vals[0]),
            WindVector::new(vals[4], vals[5]),
        ));
    }
    if total > 0 && rejected as f64 > MAX_REJECTED_FRACTION * total as f64 {
        return Err(Error::TooManyRejected { rejected, total });
    }
    let (ds, SortReport { trajectories, reordered, .. }) = Dataset::from_records(records);
    Ok((
        ds,
        LoadReport {
            rows: total,
            rejected,
            trajectories,
            reordered,
        },
    ))
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in dataset.records() {
        w.write_record([
            r.trajectory_id,
            r.point.t.to_string(),
            r.point.x.to_string(),
            r.point.y.to_string(),
            r.point.z.to_string(),
            r.wind.sx.to_string(),
            r.wind.sy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "trajectory_id,t,x,y,z,wind_x,wind_y\n\
        AF12,0,10,20,9000,5.5,-1\n\
        AF12,4,11,21,9001,5.6,-1.1\n\
        AF12,8,12,22,9002,5.7,-1.2\n";

    #[test]
    fn header_only() {
        let (ds, rep) = read_dataset("trajectory_id,t,x,y,z,wind_x,wind_y\n".as_bytes()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(rep.rows, 0);
    }

    #[test]
    fn three_rows() {
        let (ds, rep) = read_dataset(FIXTURE.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(rep.trajectories, 1);
        assert!(!rep.reordered);
        assert_eq!(ds.point(1), Point4::new(11.0, 21.0, 9001.0, 4.0));
        assert_eq!(ds.wind(2), WindVector::new(5.7, -1.2));
    }

    #[test]
    fn malformed_line_number() {
        let bad = "trajectory_id,t,x,y,z,wind_x,wind_y\nA,0,1,2,3,4,5\nA,1,oops,2,3,4,5\n";
        match read_dataset(bad.as_bytes()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "trajectory_id,t,x,y,z,wind_x,wind_y\nA,0,1,2\n";
        assert!(matches!(read_dataset(short.as_bytes()), Err(Error::Malformed { line: 2, .. })));
        assert!(read_dataset("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn nan_rows_rejected() {
        let mut s = String::from("trajectory_id,t,x,y,z,wind_x,wind_y\n");
        for i in 0..2000 {
            s.push_str(&format!("A,{i},1,2,3,4,5\n"));
        }
        s.push_str("A,5000,NaN,2,3,4,5\n");
        let (ds, rep) = read_dataset(s.as_bytes()).unwrap();
        assert_eq!((ds.len(), rep.rejected), (2000, 1));
        s.push_str("A,5001,1,2,3,inf,5\nA,5002,1,2,3,4,NaN\n");
        assert!(matches!(read_dataset(s.as_bytes()), Err(Error::TooManyRejected { rejected: 3, .. })));
    }
}
