//! CSV and JSON artifacts. Every file starts with a header naming the tool
//! version and the SHA-256 of the configuration that produced it; CSV
//! headers are `#` comment lines, JSON documents wrap the payload as
//! `{"header": …, "data": …}`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::measures::{MeasureSpec, SampleBatch};
use crate::spectral::{field_from_triples, SpectralField};

pub const TOOL_NAME: &str = "gbbm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
}

impl Header {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            tool: TOOL_NAME.to_owned(),
            version: TOOL_VERSION.to_owned(),
            config_hash: config_hash.into(),
        }
    }

    /// Header for the configuration `cfg`.
    pub fn for_config<T: Serialize>(cfg: &T) -> Result<Self> {
        Ok(Self::new(config_hash(cfg)?))
    }

    /// `#`-prefixed lines, valid as CSV preamble and TOML comments.
    pub fn comment_block(&self) -> String {
        format!(
            "# tool: {}\n# version: {}\n# config_sha256: {}\n",
            self.tool, self.version, self.config_hash
        )
    }
}

/// Hex SHA-256 of the compact JSON serialization of `cfg`.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let bytes = serde_json::to_vec(cfg).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub header: Header,
    pub data: T,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_json<T: Serialize>(path: &Path, header: &Header, data: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Document { header: header.clone(), data })
        .map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Document<T>> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes `rows` under `columns` after the header comment block.
pub fn write_csv<R: Serialize>(path: &Path, header: &Header, columns: &[&str], rows: &[R]) -> Result<()> {
    write_csv_annotated(path, header, &[], columns, rows)
}

/// [`write_csv`] with extra `# key: value` lines after the header.
pub fn write_csv_annotated<R: Serialize>(
    path: &Path,
    header: &Header,
    notes: &[(&str, String)],
    columns: &[&str],
    rows: &[R],
) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(header.comment_block().as_bytes())?;
    for (key, value) in notes {
        writeln!(w, "# {key}: {value}")?;
    }
    let mut c = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    c.write_record(columns).map_err(csv_err)?;
    for row in rows {
        c.serialize(row).map_err(csv_err)?;
    }
    c.flush()?;
    Ok(())
}

/// Header comment block and data rows of a CSV written by [`write_csv`].
pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<(Header, Vec<R>)> {
    let file = File::open(path)?;
    let mut meta = Vec::new();
    for line in BufReader::new(&file).lines() {
        let line = line?;
        match line.strip_prefix("# ") {
            Some(rest) => meta.push(rest.to_owned()),
            None => break,
        }
    }
    let value = |key: &str| {
        meta.iter()
            .find_map(|l| l.strip_prefix(key).and_then(|v| v.strip_prefix(": ")))
            .map(str::to_owned)
            .ok_or_else(|| Error::Parse(format!("{}: header lacks `{key}`", path.display())))
    };
    let header = Header {
        tool: value("tool")?,
        version: value("version")?,
        config_hash: value("config_sha256")?,
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(File::open(path)?);
    let rows = r.deserialize().collect::<std::result::Result<Vec<R>, _>>().map_err(csv_err)?;
    Ok((header, rows))
}

/// `(x, y)` pairs under two named columns.
pub fn write_xy_csv(path: &Path, header: &Header, names: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    write_csv(path, header, &[names.0, names.1], rows)
}

pub fn write_field_csv(path: &Path, header: &Header, u: &SpectralField) -> Result<()> {
    let rows: Vec<(usize, f64, f64)> = u.coeffs().iter().enumerate().map(|(i, c)| (i + 1, c.re, c.im)).collect();
    write_csv(path, header, &["n", "re", "im"], &rows)
}

pub fn read_field_csv(path: &Path) -> Result<SpectralField> {
    let (_, rows) = read_csv::<(usize, f64, f64)>(path)?;
    field_from_triples(&rows)
}

pub fn write_field_json(path: &Path, header: &Header, u: &SpectralField) -> Result<()> {
    write_json(path, header, u)
}

pub fn read_field_json(path: &Path) -> Result<SpectralField> {
    Ok(read_json::<SpectralField>(path)?.data)
}

/// Field from a `.json` or `.csv` file.
pub fn read_field(path: &Path) -> Result<SpectralField> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_field_json(path),
        Some("csv") => read_field_csv(path),
        _ => Err(Error::Parse(format!("{}: expected a .json or .csv field", path.display()))),
    }
}

/// Rows `t, conserved, energy, n, re, im, n, re, im, …` for every
/// `stride`-th logged state (the last one is always kept).
pub fn write_trajectory_csv(path: &Path, header: &Header, traj: &Trajectory, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let n = traj.params.n_modes;
    let mut columns = vec!["t".to_owned(), "conserved".to_owned(), "energy".to_owned()];
    for k in 1..=n {
        columns.extend([format!("n{k}"), format!("re{k}"), format!("im{k}")]);
    }
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let last = traj.len() - 1;
    let rows: Vec<Vec<f64>> = (0..traj.len())
        .filter(|&i| i % stride == 0 || i == last)
        .map(|i| {
            let mut row = vec![traj.times[i], traj.conserved_log[i], traj.energy_log[i]];
            for k in 1..=n {
                let c = traj.states[i].coeff(k);
                row.extend([k as f64, c.re, c.im]);
            }
            row
        })
        .collect();
    write_csv(path, header, &cols, &rows)
}

pub fn write_trajectory_json(path: &Path, header: &Header, traj: &Trajectory) -> Result<()> {
    write_json(path, header, traj)
}

pub fn read_trajectory_json(path: &Path) -> Result<Trajectory> {
    Ok(read_json::<Trajectory>(path)?.data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub spec: MeasureSpec,
    pub master_seed: u64,
    pub count: usize,
}

/// Long-format rows `sample, n, re, im`; the metadata is repeated in the
/// comment block.
pub fn write_batch_csv(path: &Path, header: &Header, batch: &SampleBatch) -> Result<()> {
    let rows: Vec<(usize, usize, f64, f64)> = batch
        .fields
        .iter()
        .enumerate()
        .flat_map(|(i, u)| u.coeffs().iter().enumerate().map(move |(k, c)| (i, k + 1, c.re, c.im)))
        .collect();
    let meta = BatchMetadata {
        spec: batch.spec,
        master_seed: batch.master_seed,
        count: batch.len(),
    };
    let meta = serde_json::to_string(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    write_csv_annotated(path, header, &[("batch", meta)], &["sample", "n", "re", "im"], &rows)
}

pub fn write_batch_json(path: &Path, header: &Header, batch: &SampleBatch) -> Result<()> {
    write_json(path, header, batch)
}

pub fn read_batch_json(path: &Path) -> Result<SampleBatch> {
    Ok(read_json::<SampleBatch>(path)?.data)
}

/// One scalar outcome of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub params: serde_json::Value,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct RecordRow<'a> {
    experiment: &'a str,
    params: String,
    value: f64,
    stderr: Option<f64>,
    n_samples: Option<usize>,
    seed: Option<u64>,
}

pub fn write_records_json(path: &Path, header: &Header, records: &[ResultRecord]) -> Result<()> {
    write_json(path, header, &records)
}

/// CSV mirror of the records; `params` is embedded as compact JSON.
pub fn write_records_csv(path: &Path, header: &Header, records: &[ResultRecord]) -> Result<()> {
    let rows: Vec<RecordRow> = records
        .iter()
        .map(|r| RecordRow {
            experiment: &r.experiment,
            params: r.params.to_string(),
            value: r.value,
            stderr: r.stderr,
            n_samples: r.n_samples,
            seed: r.seed,
        })
        .collect();
    write_csv(path, header, &["experiment", "params", "value", "stderr", "n_samples", "seed"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{integrate, GbbmParams};
    use crate::measures::sample_mu_s;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&("x", 1)).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&("x", 1)).unwrap());
        assert_ne!(a, config_hash(&("x", 2)).unwrap());
    }

    #[test]
    fn field_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MeasureSpec::new(1, 2.0, 12, None).unwrap();
        let u = sample_mu_s(&spec, 3);
        let h = Header::new("abc");
        let csv_path = dir.path().join("f.csv");
        write_field_csv(&csv_path, &h, &u).unwrap();
        assert_eq!(read_field(&csv_path).unwrap(), u);
        let (header, _) = read_csv::<(usize, f64, f64)>(&csv_path).unwrap();
        assert_eq!(header, h);
        let json_path = dir.path().join("nested/f.json");
        write_field_json(&json_path, &h, &u).unwrap();
        assert_eq!(read_field(&json_path).unwrap(), u);
        assert!(read_field(&dir.path().join("f.txt")).is_err());
    }

    #[test]
    fn trajectory_exports() {
        let dir = tempfile::tempdir().unwrap();
        let p = GbbmParams::new(2.0, 1, 3).unwrap();
        let spec = MeasureSpec::new(1, 2.0, 3, None).unwrap();
        let traj = integrate(&sample_mu_s(&spec, 1), &p, 0.1, 0.01).unwrap();
        let h = Header::new("t");
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&path, &h, &traj, 4).unwrap();
        let (_, rows) = read_csv::<Vec<f64>>(&path).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].len(), 3 + 3 * 3);
        assert_eq!(rows[3][0], traj.final_time());
        assert_eq!(rows[1][4], traj.states[4].coeff(1).re);
        let jp = dir.path().join("t.json");
        write_trajectory_json(&jp, &h, &traj).unwrap();
        assert_eq!(read_trajectory_json(&jp).unwrap(), traj);
    }

    #[test]
    fn batch_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MeasureSpec::new(1, 2.0, 2, Some(5.0)).unwrap();
        let batch = SampleBatch::generate(&spec, 9, 3);
        let h = Header::new("b");
        write_batch_csv(&dir.path().join("b.csv"), &h, &batch).unwrap();
        let text = fs::read_to_string(dir.path().join("b.csv")).unwrap();
        assert!(text.contains("# batch: {\"spec\""));
        let (_, rows) = read_csv::<(usize, usize, f64, f64)>(&dir.path().join("b.csv")).unwrap();
        assert_eq!(rows.len(), 6);
        write_batch_json(&dir.path().join("b.json"), &h, &batch).unwrap();
        assert_eq!(read_batch_json(&dir.path().join("b.json")).unwrap(), batch);

        let rec = ResultRecord {
            experiment: "transport".into(),
            params: serde_json::json!({"t": 0.5}),
            value: 0.25,
            stderr: Some(0.01),
            n_samples: Some(1000),
            seed: Some(4),
        };
        write_records_json(&dir.path().join("r.json"), &h, std::slice::from_ref(&rec)).unwrap();
        let doc: Document<Vec<ResultRecord>> = read_json(&dir.path().join("r.json")).unwrap();
        assert_eq!(doc.data, vec![rec.clone()]);
        write_records_csv(&dir.path().join("r.csv"), &h, &[rec]).unwrap();
        let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert!(text.contains("transport,\"{\"\"t\"\":0.5}\",0.25,0.01,1000,4"));
    }
}
