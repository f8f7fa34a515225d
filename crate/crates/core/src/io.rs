//! CSV and JSON file formats.
//!
//! * Configurations: `object_id,landmark_id,coord_1,…,coord_p`, one row per
//!   landmark, objects contiguous or interleaved, landmark order consistent
//!   across objects.
//! * Covariates: `object_id,z_1,…,z_d`.
//! * Chains: `draw,beta_{l}_{j}…,sigma_{a}_{b}…,loglik`.
//! * Matrices: headerless numeric CSV, one row per matrix row.
//! * Priors: JSON, either full `{nu, psi, m, v}` or abbreviated
//!   `{m_scalar, v_scale}` (with optional `nu`, `psi`).
//!
//! The inverse-Wishart scale is parameterized so that `E[Σ] = Ψ/(ν − k − 1)`.
//! Floats are written in shortest round-trip form, so write → read is exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::flatten_params;
use crate::error::{Error, Result, ResultExt};
use crate::geometry::{matrix_from_rows, matrix_to_rows, Rotation};
use crate::model::{ParamState, Priors};
use crate::sampler::Chain;
use crate::synthetic::{ScenarioSpec, Simulation};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(e).context(path.display().to_string()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(e).context(path.display().to_string()))
}

fn parse_f64(field: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: column {column}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("row {row}: column {column}: non-finite value {field:?}")));
    }
    Ok(v)
}

/// Landmark matrices keyed by object, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTable {
    pub object_ids: Vec<String>,
    pub landmark_ids: Vec<String>,
    pub matrices: Vec<DMatrix<f64>>,
}

pub fn read_configurations_from<R: Read>(reader: R) -> Result<ObjectTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "object_id" || &headers[1] != "landmark_id" {
        return Err(Error::Parse(
            "header must be object_id,landmark_id,coord_1,…,coord_p with p ≥ 2".into(),
        ));
    }
    let p = headers.len() - 2;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(String, Vec<f64>)>> = HashMap::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if record.len() != p + 2 {
            return Err(Error::Parse(format!("row {row}: expected {} fields, found {}", p + 2, record.len())));
        }
        let coords = (0..p)
            .map(|j| parse_f64(&record[j + 2], row, &headers[j + 2]))
            .collect::<Result<Vec<_>>>()?;
        let object = record[0].to_string();
        if !rows.contains_key(&object) {
            order.push(object.clone());
        }
        rows.entry(object).or_default().push((record[1].to_string(), coords));
    }
    let first = order.first().ok_or_else(|| Error::Parse("no data rows".into()))?;
    let landmark_ids: Vec<String> = rows[first].iter().map(|(l, _)| l.clone()).collect();
    let mut matrices = Vec::with_capacity(order.len());
    for object in &order {
        let lm = &rows[object];
        let ids: Vec<&String> = lm.iter().map(|(l, _)| l).collect();
        if ids.len() != landmark_ids.len() || ids.iter().zip(&landmark_ids).any(|(a, b)| *a != b) {
            return Err(Error::Parse(format!(
                "object {object:?}: landmark ids differ from those of object {first:?}"
            )));
        }
        matrices.push(DMatrix::from_fn(lm.len(), p, |r, c| lm[r].1[c]));
    }
    Ok(ObjectTable { object_ids: order, landmark_ids, matrices })
}

pub fn read_configurations(path: &Path) -> Result<ObjectTable> {
    read_configurations_from(open(path)?).with_context(|| path.display().to_string())
}

pub fn write_configurations_to<W: Write>(writer: W, table: &ObjectTable) -> Result<()> {
    let p = table.matrices.first().map_or(0, |m| m.ncols());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["object_id".to_string(), "landmark_id".to_string()];
    header.extend((1..=p).map(|j| format!("coord_{j}")));
    wtr.write_record(&header)?;
    for (object, m) in table.object_ids.iter().zip(&table.matrices) {
        for (r, landmark) in table.landmark_ids.iter().enumerate() {
            let mut rec = vec![object.clone(), landmark.clone()];
            rec.extend(m.row(r).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_configurations(path: &Path, table: &ObjectTable) -> Result<()> {
    write_configurations_to(create(path)?, table)
}

/// Default object and landmark labels for `n` objects of `rows` landmarks.
pub fn numbered_table(matrices: Vec<DMatrix<f64>>) -> ObjectTable {
    let rows = matrices.first().map_or(0, |m| m.nrows());
    ObjectTable {
        object_ids: (1..=matrices.len()).map(|i| i.to_string()).collect(),
        landmark_ids: (1..=rows).map(|j| j.to_string()).collect(),
        matrices,
    }
}

/// Covariates keyed by object id.
pub fn read_covariates(path: &Path) -> Result<HashMap<String, DVector<f64>>> {
    let inner = || -> Result<HashMap<String, DVector<f64>>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "object_id" {
            return Err(Error::Parse("header must be object_id,z_1,…,z_d".into()));
        }
        let mut out = HashMap::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 2;
            let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            let z = (1..headers.len())
                .map(|j| parse_f64(&record[j], row, &headers[j]))
                .collect::<Result<Vec<_>>>()?;
            if out.insert(record[0].to_string(), DVector::from_vec(z)).is_some() {
                return Err(Error::Parse(format!("row {row}: duplicate object id {:?}", &record[0])));
            }
        }
        Ok(out)
    };
    inner().with_context(|| path.display().to_string())
}

pub fn write_covariates(path: &Path, object_ids: &[String], zs: &[DVector<f64>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let d = zs.first().map_or(0, |z| z.len());
    let mut header = vec!["object_id".to_string()];
    header.extend((1..=d).map(|h| format!("z_{h}")));
    wtr.write_record(&header)?;
    for (id, z) in object_ids.iter().zip(zs) {
        let mut rec = vec![id.clone()];
        rec.extend(z.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Stored draws of a chain: `β`, `Σ` and the per-draw log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub draws: Vec<ParamState>,
    pub loglik: Vec<f64>,
}

pub fn write_chain_to<W: Write>(writer: W, chain: &Chain) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let first = chain
        .draws
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot write an empty chain".into()))?;
    let mut header = vec!["draw".to_string()];
    header.extend(flatten_params(first).into_iter().map(|(n, _)| n));
    header.push("loglik".into());
    wtr.write_record(&header)?;
    for (t, (draw, ll)) in chain.draws.iter().zip(&chain.loglik).enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(flatten_params(draw).into_iter().map(|(_, v)| v.to_string()));
        rec.push(ll.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    write_chain_to(create(path)?, chain)
}

fn parse_indices(name: &str, prefix: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix(prefix)?;
    let (a, b) = rest.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub fn read_chain_from<R: Read>(reader: R) -> Result<ChainTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut beta_cols = Vec::new();
    let mut sigma_cols = Vec::new();
    let mut loglik_col = None;
    for (c, h) in headers.iter().enumerate() {
        if let Some((l, j)) = parse_indices(h, "beta_") {
            beta_cols.push((c, l, j));
        } else if let Some((a, b)) = parse_indices(h, "sigma_") {
            sigma_cols.push((c, a, b));
        } else if h == "loglik" {
            loglik_col = Some(c);
        } else if h != "draw" {
            return Err(Error::Parse(format!("unexpected chain column {h:?}")));
        }
    }
    let p = beta_cols.iter().map(|x| x.1).max().unwrap_or(0);
    let kd = beta_cols.iter().map(|x| x.2).max().unwrap_or(0);
    let k = sigma_cols.iter().map(|x| x.1).max().unwrap_or(0);
    if p == 0 || k == 0 || kd % k != 0 || beta_cols.len() != p * kd || sigma_cols.len() != k * (k + 1) / 2 {
        return Err(Error::Parse("chain header does not describe complete β and Σ blocks".into()));
    }
    let mut table = ChainTable { draws: Vec::new(), loglik: Vec::new() };
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        let mut beta = vec![DVector::zeros(kd); p];
        for &(c, l, j) in &beta_cols {
            beta[l - 1][j - 1] = parse_f64(&record[c], row, &headers[c])?;
        }
        let mut sigma = DMatrix::zeros(k, k);
        for &(c, a, b) in &sigma_cols {
            let v = parse_f64(&record[c], row, &headers[c])?;
            sigma[(a - 1, b - 1)] = v;
            sigma[(b - 1, a - 1)] = v;
        }
        table.draws.push(ParamState { beta, sigma, rotations: Vec::new() });
        if let Some(c) = loglik_col {
            table.loglik.push(parse_f64(&record[c], row, "loglik")?);
        }
    }
    if table.draws.is_empty() {
        return Err(Error::Parse("chain has no draws".into()));
    }
    Ok(table)
}

pub fn read_chain(path: &Path) -> Result<ChainTable> {
    read_chain_from(open(path)?).with_context(|| path.display().to_string())
}

/// Headerless numeric matrix.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let inner = || -> Result<DMatrix<f64>> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(open(path)?);
        let mut rows = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let row = idx + 1;
            let record = record.map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            rows.push(
                record
                    .iter()
                    .enumerate()
                    .map(|(c, f)| parse_f64(f, row, &(c + 1).to_string()))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty matrix".into()));
        }
        matrix_from_rows(&rows).map_err(|e| Error::Parse(e.to_string()))
    };
    inner().with_context(|| path.display().to_string())
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for r in 0..m.nrows() {
        wtr.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Priors as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorsFile {
    Full {
        nu: f64,
        psi: Vec<Vec<f64>>,
        /// One prior mean per coefficient column.
        m: Vec<Vec<f64>>,
        /// One prior covariance per coefficient column.
        v: Vec<Vec<Vec<f64>>>,
    },
    Abbreviated {
        m_scalar: f64,
        v_scale: f64,
        #[serde(default)]
        nu: Option<f64>,
        #[serde(default)]
        psi: Option<Vec<Vec<f64>>>,
    },
}

impl PriorsFile {
    /// Builds priors for data of dimensions `(k, d, p)`.
    pub fn resolve(&self, k: usize, d: usize, p: usize) -> Result<Priors> {
        let priors = match self {
            PriorsFile::Full { nu, psi, m, v } => Priors::new(
                m.iter().map(|x| DVector::from_vec(x.clone())).collect(),
                v.iter().map(|x| matrix_from_rows(x)).collect::<Result<_>>()?,
                *nu,
                matrix_from_rows(psi)?,
            )?,
            PriorsFile::Abbreviated { m_scalar, v_scale, nu, psi } => {
                let psi = psi.as_ref().map(|x| matrix_from_rows(x)).transpose()?;
                Priors::isotropic(k, d, p, *m_scalar, *v_scale, *nu, psi)?
            }
        };
        if (priors.k(), priors.d(), priors.p()) != (k, d, p) {
            return Err(Error::InvalidArgument(format!(
                "priors are for (k, d, p) = ({}, {}, {}) but data has ({k}, {d}, {p})",
                priors.k(),
                priors.d(),
                priors.p()
            )));
        }
        Ok(priors)
    }
}

pub fn read_priors(path: &Path) -> Result<PriorsFile> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(e.to_string()).context(path.display().to_string()))
}

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: ScenarioSpec,
    /// Identified coefficient columns `β_l`.
    pub beta: Vec<Vec<f64>>,
    /// Coefficient columns as specified, before identification.
    pub beta_raw: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    /// Latent rotations `R_i` with `Y_i R_i = X_i`.
    pub rotations: Vec<Rotation>,
}

impl TruthFile {
    pub fn from_simulation(spec: &ScenarioSpec, sim: &Simulation) -> Self {
        let cols = |s: &ParamState| s.beta.iter().map(|b| b.iter().copied().collect()).collect();
        Self {
            scenario: spec.clone(),
            beta: cols(&sim.truth.identified),
            beta_raw: cols(&sim.truth.raw),
            sigma: matrix_to_rows(&sim.truth.raw.sigma),
            rotations: sim.truth.raw.rotations.clone(),
        }
    }

    /// Identified truth, without rotations.
    pub fn identified_state(&self) -> Result<ParamState> {
        Ok(ParamState {
            beta: self.beta.iter().map(|b| DVector::from_vec(b.clone())).collect(),
            sigma: matrix_from_rows(&self.sigma)?,
            rotations: Vec::new(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(e.to_string()).context(path.display().to_string()))
}
