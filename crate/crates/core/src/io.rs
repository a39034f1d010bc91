//! Flat-file formats: CSV tables and JSON documents for designs, sensitivity
//! grids, block designs and efficiency distributions.
//!
//! CSV floats use 17 significant digits in exponent form, so every value
//! survives a read and re-write unchanged.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{ContinuousDesign, EquivalenceReport, ExactDesign};
use crate::error::{Error, Result};
use crate::glm::ModelSpec;
use crate::glmm::BlockDesign;
use crate::priors::EcdfSummary;
use crate::region::DesignRegion;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, what: &'static str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(what, format!("cannot parse {s:?} as a number")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid("csv", e.to_string())
}

fn write_table(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Header and rows, all cells trimmed.
fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

fn x_header(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("x_{j}")).collect()
}

fn expect_header(what: &'static str, got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        return Err(Error::invalid(what, format!("expected columns {}, got {}", want.join(","), got.join(","))));
    }
    Ok(())
}

/// Number of leading `x_j` columns.
fn count_x(header: &[String]) -> usize {
    header.iter().take_while(|h| h.starts_with("x_")).count()
}

/// Columns `x_1..x_k,weight`.
pub fn design_to_csv(d: &ContinuousDesign) -> String {
    let mut header = x_header(d.dim());
    header.push("weight".into());
    write_table(
        &header,
        d.iter().map(|(x, w)| x.iter().copied().chain([w]).map(fmt_f64).collect()),
    )
}

pub fn design_from_csv(text: &str) -> Result<ContinuousDesign> {
    let (header, rows) = read_table(text)?;
    let k = count_x(&header);
    let mut want = x_header(k);
    want.push("weight".into());
    expect_header("design csv", &header, &want)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for row in rows {
        let v = row.iter().map(|s| parse_f64(s, "design csv")).collect::<Result<Vec<_>>>()?;
        weights.push(v[k]);
        points.push(v[..k].to_vec());
    }
    ContinuousDesign::new(points, weights)
}

/// Columns `x_1..x_k,count`.
pub fn exact_to_csv(d: &ExactDesign) -> String {
    let k = d.points()[0].len();
    let mut header = x_header(k);
    header.push("count".into());
    write_table(
        &header,
        d.points()
            .iter()
            .zip(d.reps())
            .map(|(x, r)| x.iter().map(|&v| fmt_f64(v)).chain([r.to_string()]).collect()),
    )
}

pub fn exact_from_csv(text: &str) -> Result<ExactDesign> {
    let (header, rows) = read_table(text)?;
    let k = count_x(&header);
    let mut want = x_header(k);
    want.push("count".into());
    expect_header("exact design csv", &header, &want)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut reps = Vec::with_capacity(rows.len());
    for row in rows {
        points.push(row[..k].iter().map(|s| parse_f64(s, "exact design csv")).collect::<Result<Vec<_>>>()?);
        reps.push(
            row[k]
                .parse()
                .map_err(|_| Error::invalid("exact design csv", format!("bad count {:?}", row[k])))?,
        );
    }
    ExactDesign::new(points, reps)
}

/// Stable hash of a model's canonical JSON form.
pub fn model_fingerprint(model: &ModelSpec) -> String {
    let json = serde_json::to_string(model).expect("model serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// JSON form of a design together with where it lives and which model it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDocument {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub region: DesignRegion,
    pub model_fingerprint: String,
}

impl DesignDocument {
    pub fn new(design: &ContinuousDesign, model: &ModelSpec) -> Self {
        DesignDocument {
            points: design.points().to_vec(),
            weights: design.weights().to_vec(),
            region: model.region().clone(),
            model_fingerprint: model_fingerprint(model),
        }
    }

    pub fn design(&self) -> Result<ContinuousDesign> {
        let d = ContinuousDesign::new(self.points.clone(), self.weights.clone())?;
        d.check_region(&self.region)?;
        Ok(d)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, what: &'static str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::invalid(what, e.to_string()))
}

/// Columns `x_1..x_k,psi` over the scanned grid.
pub fn sensitivity_to_csv(report: &EquivalenceReport) -> String {
    let mut header = x_header(report.grid.dim);
    header.push("psi".into());
    write_table(
        &header,
        report
            .grid
            .iter()
            .zip(&report.psi)
            .map(|(x, &v)| x.iter().copied().chain([v]).map(fmt_f64).collect()),
    )
}

/// Columns `block_id,point_index,x_1..x_k,block_weight`, one row per unit.
pub fn block_to_csv(d: &BlockDesign) -> String {
    let mut header = vec!["block_id".to_string(), "point_index".to_string()];
    header.extend(x_header(d.k()));
    header.push("block_weight".into());
    let rows = d.blocks().iter().zip(d.weights()).enumerate().flat_map(|(b, (block, &w))| {
        block.iter().enumerate().map(move |(j, x)| {
            [b.to_string(), j.to_string()]
                .into_iter()
                .chain(x.iter().map(|&v| fmt_f64(v)))
                .chain([fmt_f64(w)])
                .collect()
        })
    });
    write_table(&header, rows)
}

pub fn block_from_csv(text: &str) -> Result<BlockDesign> {
    let (header, rows) = read_table(text)?;
    let k = count_x(&header[2.min(header.len())..]);
    let mut want = vec!["block_id".to_string(), "point_index".to_string()];
    want.extend(x_header(k));
    want.push("block_weight".into());
    expect_header("block csv", &header, &want)?;
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut weights = Vec::new();
    for row in rows {
        let id: usize = row[0]
            .parse()
            .map_err(|_| Error::invalid("block csv", format!("bad block_id {:?}", row[0])))?;
        if id == blocks.len() {
            blocks.push(Vec::new());
            weights.push(parse_f64(&row[k + 2], "block csv")?);
        } else if id + 1 != blocks.len() {
            return Err(Error::invalid("block csv", "rows must be grouped by consecutive block_id"));
        }
        let x = row[2..k + 2].iter().map(|s| parse_f64(s, "block csv")).collect::<Result<Vec<_>>>()?;
        blocks[id].push(x);
    }
    BlockDesign::new(blocks, weights)
}

/// Columns `draw,theta_1..theta_p,efficiency`.
pub fn ecdf_to_csv(summary: &EcdfSummary) -> String {
    let p = summary.samples.first().map_or(0, |s| s.theta.len());
    let mut header = vec!["draw".to_string()];
    header.extend((1..=p).map(|j| format!("theta_{j}")));
    header.push("efficiency".into());
    write_table(
        &header,
        summary.samples.iter().enumerate().map(|(i, s)| {
            std::iter::once(i.to_string())
                .chain(s.theta.iter().chain([&s.efficiency]).map(|&v| fmt_f64(v)))
                .collect()
        }),
    )
}

/// Draws and efficiencies from an ECDF CSV.
pub fn ecdf_from_csv(text: &str) -> Result<Vec<(Vec<f64>, f64)>> {
    let (header, rows) = read_table(text)?;
    let p = header.len().saturating_sub(2);
    let mut want = vec!["draw".to_string()];
    want.extend((1..=p).map(|j| format!("theta_{j}")));
    want.push("efficiency".into());
    expect_header("ecdf csv", &header, &want)?;
    rows.iter()
        .map(|row| {
            let v = row[1..].iter().map(|s| parse_f64(s, "ecdf csv")).collect::<Result<Vec<_>>>()?;
            Ok((v[..p].to_vec(), v[p]))
        })
        .collect()
}
