//! Dataset CSV files.
//!
//! Spectral: `x,y,f1,f2,f3,f4,f5,f6,f7,f8,nir,clear,origin`
//! RSSI: `x,y,ap1,ap2,ap3,ap4,ap5,ap6,origin`
//!
//! Floats are written in shortest round-trip form, so reading a written
//! file reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Coordinate, Dataset, Extent, Fingerprint, LabeledSample, Modality, Origin};
use crate::error::{Error, Result};

pub fn header(modality: Modality) -> String {
    let mut cols = vec!["x", "y"];
    cols.extend_from_slice(modality.columns());
    cols.push("origin");
    cols.join(",")
}

pub fn write_dataset_to<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", header(data.modality()))?;
    for s in data.samples() {
        write!(w, "{},{}", s.location.x, s.location.y)?;
        for v in s.fingerprint.values() {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", s.origin)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(data, File::create(path)?)
}

/// Reads a dataset. The extent is the bounding box `[0, max x] x [0, max y]`
/// of the real samples; use [`Dataset::with_extent`] to set a known room.
pub fn read_dataset_from<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let head = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let head: Vec<&str> = head.iter().collect();
    let modality = [Modality::Spectral, Modality::Rssi]
        .into_iter()
        .find(|m| head.join(",") == header(*m))
        .ok_or_else(|| parse_err(1, format!("unrecognized header `{}`", head.join(","))))?;
    let width = modality.dim() + 3;

    let mut samples = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let mut nums = Vec::with_capacity(width - 1);
        for (k, field) in rec.iter().take(width - 1).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {} is not a number: `{field}`", k + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {} is not finite", k + 1)));
            }
            nums.push(v);
        }
        let origin: Origin = rec[width - 1]
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        let fingerprint = Fingerprint::from_values(modality, &nums[2..])
            .map_err(|e| parse_err(line, e.to_string()))?;
        samples.push(LabeledSample {
            fingerprint,
            location: Coordinate::new(nums[0], nums[1]),
            origin,
        });
    }

    let real = samples.iter().filter(|s| s.origin == Origin::Real);
    let (w, h) = real.fold((0.0f64, 0.0f64), |(w, h), s| {
        (w.max(s.location.x), h.max(s.location.y))
    });
    if samples
        .iter()
        .any(|s| s.origin == Origin::Real && (s.location.x < 0.0 || s.location.y < 0.0))
    {
        return Err(Error::Contract("real sample with negative coordinate".into()));
    }
    Dataset::new(modality, Extent::new(w, h), samples)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset_from(File::open(path)?)
}

fn parse_err(line: u64, message: String) -> Error {
    Error::Parse { line, message }
}
