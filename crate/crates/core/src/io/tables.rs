//! CSV tables. A header row is required; errors carry the 1-based line number.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdi::{outcome_index, OUTCOMES};
use crate::sim::{fringe_visibility, FringeScan};
use crate::tomography::{IntensityTable, PhaseScan, ScanSample};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Rows of a CSV with exactly the given header, each tagged with its line.
fn parse_rows<T: DeserializeOwned>(text: &str, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if found.is_empty() {
        return Err(parse_err(1, format!("missing header, expected `{}`", header.join(","))));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            1,
            format!("header is `{}`, expected `{}`", found.iter().collect::<Vec<_>>().join(","), header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize(Some(&found)).map_err(|e| parse_err(line, e.to_string()))?;
        rows.push((line, row));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV output is UTF-8")
}

fn finite(line: u64, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("{name} is not finite")))
    }
}

#[derive(Serialize, Deserialize)]
struct IntensityRow {
    output: usize,
    input: usize,
    intensity: f64,
    error: f64,
}

pub fn parse_intensity_csv(text: &str) -> Result<IntensityTable> {
    let rows: Vec<(u64, IntensityRow)> = parse_rows(text, &["output", "input", "intensity", "error"])?;
    let n = rows.iter().map(|(_, r)| r.output.max(r.input)).max().unwrap_or(0) + 1;
    let mut values = DMatrix::from_element(n, n, f64::NAN);
    let mut errors = DMatrix::zeros(n, n);
    for (line, r) in &rows {
        let v = finite(*line, "intensity", r.intensity)?;
        let e = finite(*line, "error", r.error)?;
        if v < 0.0 || e < 0.0 {
            return Err(parse_err(*line, "intensity and error must be non-negative"));
        }
        if !values[(r.output, r.input)].is_nan() {
            return Err(parse_err(*line, format!("duplicate entry (output {}, input {})", r.output, r.input)));
        }
        values[(r.output, r.input)] = v;
        errors[(r.output, r.input)] = e;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!("intensity table is missing (output {}, input {})", i % n, i / n)));
    }
    IntensityTable::new(values, errors)
}

pub fn read_intensity_csv(path: &Path) -> Result<IntensityTable> {
    parse_intensity_csv(&fs::read_to_string(path)?)
}

pub fn intensity_csv(table: &IntensityTable) -> String {
    let n = table.dim();
    write_rows((0..n).flat_map(|input| {
        (0..n).map(move |output| IntensityRow {
            output,
            input,
            intensity: table.values()[(output, input)],
            error: table.errors()[(output, input)],
        })
    }))
}

#[derive(Serialize, Deserialize)]
struct ScanRow {
    pair: usize,
    output: usize,
    phase: f64,
    probability: f64,
    error: f64,
}

/// Scans grouped by `(pair, output)` in order of first appearance.
pub fn parse_scans_csv(text: &str) -> Result<Vec<PhaseScan>> {
    let rows: Vec<(u64, ScanRow)> = parse_rows(text, &["pair", "output", "phase", "probability", "error"])?;
    let mut scans: Vec<(u64, PhaseScan)> = Vec::new();
    for (line, r) in rows {
        let sample = ScanSample {
            phase: finite(line, "phase", r.phase)?,
            probability: finite(line, "probability", r.probability)?,
            error: finite(line, "error", r.error)?,
        };
        match scans.iter_mut().find(|(_, s)| s.pair == r.pair && s.output == r.output) {
            Some((_, s)) => s.samples.push(sample),
            None => scans.push((
                line,
                PhaseScan {
                    pair: r.pair,
                    output: r.output,
                    samples: vec![sample],
                },
            )),
        }
    }
    for (line, s) in &scans {
        s.validate()
            .map_err(|e| parse_err(*line, format!("scan (pair {}, output {}) starting here: {e}", s.pair, s.output)))?;
    }
    Ok(scans.into_iter().map(|(_, s)| s).collect())
}

pub fn read_scans_csv(path: &Path) -> Result<Vec<PhaseScan>> {
    parse_scans_csv(&fs::read_to_string(path)?)
}

pub fn scans_csv(scans: &[PhaseScan]) -> String {
    write_rows(scans.iter().flat_map(|s| {
        s.samples.iter().map(|p| ScanRow {
            pair: s.pair,
            output: s.output,
            phase: p.phase,
            probability: p.probability,
            error: p.error,
        })
    }))
}

#[derive(Deserialize)]
struct FrequencyRowIn {
    x: usize,
    a: String,
    count: u64,
}

#[derive(Serialize)]
struct FrequencyRowOut {
    x: usize,
    a: usize,
    count: u64,
}

fn parse_outcome(s: &str) -> Option<usize> {
    if let Ok(a) = s.parse::<usize>() {
        return (a < OUTCOMES).then_some(a);
    }
    // labels such as D2 or D0D3
    let rest = s.strip_prefix('D')?;
    let clicks: Option<Vec<usize>> = rest.split('D').map(|d| d.parse().ok()).collect();
    outcome_index(&clicks?)
}

/// Outcome-by-input counts. `a` is an outcome index or label (`D1`, `D0D2`).
/// Tables whose outcomes all lie in `0..4` are single-click tables with four
/// rows; otherwise the full ten-outcome alphabet is used.
pub fn parse_frequency_csv(text: &str) -> Result<DMatrix<u64>> {
    let rows: Vec<(u64, FrequencyRowIn)> = parse_rows(text, &["x", "a", "count"])?;
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let a = parse_outcome(&r.a).ok_or_else(|| parse_err(line, format!("unknown outcome `{}`", r.a)))?;
        parsed.push((line, r.x, a, r.count));
    }
    let inputs = parsed.iter().map(|p| p.1).max().unwrap_or(0) + 1;
    let outcomes = if parsed.iter().all(|p| p.2 < 4) { 4 } else { OUTCOMES };
    let mut counts = DMatrix::zeros(outcomes, inputs);
    let mut seen = DMatrix::from_element(outcomes, inputs, false);
    for (line, x, a, c) in parsed {
        if seen[(a, x)] {
            return Err(parse_err(line, format!("duplicate entry (x {x}, a {a})")));
        }
        seen[(a, x)] = true;
        counts[(a, x)] = c;
    }
    Ok(counts)
}

pub fn read_frequency_csv(path: &Path) -> Result<DMatrix<u64>> {
    parse_frequency_csv(&fs::read_to_string(path)?)
}

/// Every `(x, a)` cell, zeros included.
pub fn frequency_csv(counts: &DMatrix<u64>) -> String {
    write_rows((0..counts.ncols()).flat_map(|x| (0..counts.nrows()).map(move |a| FrequencyRowOut { x, a, count: counts[(a, x)] })))
}

#[derive(Serialize, Deserialize)]
struct FringeRow {
    pattern: usize,
    phase: f64,
    #[serde(rename = "D0")]
    d0: f64,
    #[serde(rename = "D1")]
    d1: f64,
    #[serde(rename = "D2")]
    d2: f64,
    #[serde(rename = "D3")]
    d3: f64,
}

pub fn fringe_csv(scan: &FringeScan) -> String {
    write_rows(scan.counts.iter().enumerate().flat_map(|(pattern, series)| {
        series.iter().zip(&scan.phases).map(move |(c, &phase)| FringeRow {
            pattern,
            phase,
            d0: c[0],
            d1: c[1],
            d2: c[2],
            d3: c[3],
        })
    }))
}

/// Reads a fringe scan back and refits its visibilities.
pub fn read_fringe_csv(path: &Path) -> Result<FringeScan> {
    let rows: Vec<(u64, FringeRow)> = parse_rows(&fs::read_to_string(path)?, &["pattern", "phase", "D0", "D1", "D2", "D3"])?;
    let mut phases = Vec::new();
    let mut counts: Vec<Vec<[f64; 4]>> = Vec::new();
    for (line, r) in rows {
        if r.pattern == counts.len() {
            counts.push(Vec::new());
        } else if r.pattern + 1 != counts.len() {
            return Err(parse_err(line, format!("pattern {} out of order", r.pattern)));
        }
        let series = counts.last_mut().expect("pattern pushed");
        let i = series.len();
        if r.pattern == 0 {
            phases.push(r.phase);
        } else if phases.get(i) != Some(&r.phase) {
            return Err(parse_err(line, "phase grid differs from pattern 0"));
        }
        series.push([r.d0, r.d1, r.d2, r.d3]);
    }
    if counts.iter().any(|s| s.len() != phases.len()) {
        return Err(Error::invalid("fringe patterns have different lengths"));
    }
    let visibilities = counts
        .iter()
        .map(|series| {
            let mut v = [0.0; 4];
            for a in 0..4 {
                let y: Vec<f64> = series.iter().map(|c| c[a]).collect();
                v[a] = fringe_visibility(&phases, &y)?;
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    Ok(FringeScan {
        phases,
        counts,
        visibilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::symmetric_bs_4;
    use crate::tomography::synthesize_measurements;
    use proptest::prelude::*;

    fn line_of(e: Error) -> u64 {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn tomography_tables_round_trip() {
        let (table, scans) = synthesize_measurements(symmetric_bs_4(0.0).matrix(), 16).unwrap();
        assert_eq!(parse_intensity_csv(&intensity_csv(&table)).unwrap(), table);
        assert_eq!(parse_scans_csv(&scans_csv(&scans)).unwrap(), scans);
    }

    #[test]
    fn malformed_tables_report_lines() {
        assert_eq!(line_of(parse_intensity_csv("").unwrap_err()), 1);
        assert_eq!(line_of(parse_intensity_csv("output,input,intensity,error\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_intensity_csv("output,input,value,error\n0,0,1,0\n").unwrap_err()), 1);
        let bad = "output,input,intensity,error\n0,0,0.5,0\n0,1,oops,0\n";
        assert_eq!(line_of(parse_intensity_csv(bad).unwrap_err()), 3);
        let dup = "output,input,intensity,error\n0,0,0.5,0\n1,0,0.5,0\n0,0,0.5,0\n";
        assert_eq!(line_of(parse_intensity_csv(dup).unwrap_err()), 4);
        let neg = "x,a,count\n0,0,5\n0,1,-2\n";
        assert_eq!(line_of(parse_frequency_csv(neg).unwrap_err()), 3);
        let label = "x,a,count\n0,D0,5\n0,D9,1\n";
        assert_eq!(line_of(parse_frequency_csv(label).unwrap_err()), 3);
        let short = "x,a,count\n0,0,5\n0,1\n";
        assert_eq!(line_of(parse_frequency_csv(short).unwrap_err()), 3);
    }

    #[test]
    fn scans_must_span_a_period() {
        let text = "pair,output,phase,probability,error\n1,0,0,0.5,0\n1,0,1,0.5,0\n";
        assert_eq!(line_of(parse_scans_csv(text).unwrap_err()), 2);
    }

    #[test]
    fn frequency_labels_and_alphabets() {
        let single = parse_frequency_csv("x,a,count\n0,D0,3\n1,D1,4\n").unwrap();
        assert_eq!(single.shape(), (4, 2));
        let full = parse_frequency_csv("x,a,count\n0,D0,3\n0,D1D2,1\n").unwrap();
        assert_eq!(full.shape(), (OUTCOMES, 1));
        assert_eq!(full[(outcome_index(&[1, 2]).unwrap(), 0)], 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn frequency_csv_round_trips(cells in proptest::collection::vec(0u64..1_000_000, OUTCOMES * 5)) {
            let counts = DMatrix::from_vec(OUTCOMES, 5, cells);
            let mut counts = counts;
            counts[(OUTCOMES - 1, 0)] += 1; // keep the full alphabet
            prop_assert_eq!(parse_frequency_csv(&frequency_csv(&counts)).unwrap(), counts);
        }

        #[test]
        fn intensity_csv_round_trips(vals in proptest::collection::vec(0.0f64..1.0, 9), errs in proptest::collection::vec(0.0f64..0.1, 9)) {
            let t = IntensityTable::new(DMatrix::from_vec(3, 3, vals), DMatrix::from_vec(3, 3, errs)).unwrap();
            prop_assert_eq!(parse_intensity_csv(&intensity_csv(&t)).unwrap(), t);
        }
    }
}
