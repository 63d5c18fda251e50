use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::io::write_atomic;
use crate::matrix::DenseMatrix;
use crate::popgraph::{MeasureKind, PhenotypicMeasure};

pub const FEATURES_FILE: &str = "features.csv";
pub const PHENOTYPES_FILE: &str = "phenotypes.csv";
pub const SCHEMA_FILE: &str = "phenotypes.schema.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "bundle.json";

/// Imaging features, phenotypic measures and binary labels of one cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub subject_ids: Vec<String>,
    pub features: DenseMatrix,
    pub phenotypes: Vec<PhenotypicMeasure>,
    pub labels: Vec<usize>,
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.labels.len() != n || self.subject_ids.len() != n {
            return Err(Error::SchemaMismatch(format!(
                "{n} feature rows, {} labels, {} subject ids",
                self.labels.len(),
                self.subject_ids.len()
            )));
        }
        if let Some(m) = self.phenotypes.iter().find(|m| m.len() != n) {
            return Err(Error::SchemaMismatch(format!(
                "measure {} has {} values for {n} subjects",
                m.name(),
                m.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(Error::SchemaMismatch(format!("label {l} is not 0 or 1")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MeasureSchema {
    name: String,
    kind: SchemaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
}

#[derive(Serialize, Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum SchemaKind {
    Qualitative,
    Quantitative,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    name: String,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            column: 0,
            message: e.to_string(),
        },
    }
}

/// Writes the four bundle files plus a small manifest holding the name.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let io_err = |p: &Path, e: csv::Error| csv_err(p, e);

    let path = dir.join(FEATURES_FILE);
    let mut w = csv_writer();
    let mut header = vec!["subject_id".to_string()];
    header.extend((0..bundle.features.cols()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for (i, id) in bundle.subject_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(bundle.features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| io_err(&path, e))?;
    }
    finish(&path, w)?;

    let path = dir.join(PHENOTYPES_FILE);
    let mut w = csv_writer();
    let mut header = vec!["subject_id".to_string()];
    header.extend(bundle.phenotypes.iter().map(|m| m.name().to_string()));
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    for (i, id) in bundle.subject_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        for m in &bundle.phenotypes {
            rec.push(match m.kind() {
                MeasureKind::Qualitative(v) => v[i].clone(),
                MeasureKind::Quantitative { values, .. } => values[i].to_string(),
            });
        }
        w.write_record(&rec).map_err(|e| io_err(&path, e))?;
    }
    finish(&path, w)?;

    let schema: Vec<MeasureSchema> = bundle
        .phenotypes
        .iter()
        .map(|m| match m.kind() {
            MeasureKind::Qualitative(_) => MeasureSchema {
                name: m.name().to_string(),
                kind: SchemaKind::Qualitative,
                tau: None,
            },
            MeasureKind::Quantitative { tau, .. } => MeasureSchema {
                name: m.name().to_string(),
                kind: SchemaKind::Quantitative,
                tau: Some(*tau),
            },
        })
        .collect();
    crate::io::write_json(&dir.join(SCHEMA_FILE), &schema)?;

    let path = dir.join(LABELS_FILE);
    let mut w = csv_writer();
    w.write_record(["subject_id", "label"]).map_err(|e| io_err(&path, e))?;
    for (id, l) in bundle.subject_ids.iter().zip(&bundle.labels) {
        w.write_record([id.as_str(), &l.to_string()])
            .map_err(|e| io_err(&path, e))?;
    }
    finish(&path, w)?;

    crate::io::write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            name: bundle.name.clone(),
        },
    )
}

struct Table {
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table { header, rows })
}

fn parse_f64(path: &Path, line: u64, column: usize, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: format!("expected a finite number, found {field:?}"),
        })
}

fn expect_first_column(path: &Path, header: &[String]) -> Result<()> {
    if header.first().map(String::as_str) != Some("subject_id") {
        return Err(Error::SchemaMismatch(format!(
            "{}: first column must be subject_id",
            path.display()
        )));
    }
    Ok(())
}

/// Row positions keyed by subject id, checked against the feature order.
fn index_rows<'a>(path: &Path, table: &'a Table, ids: &[String]) -> Result<Vec<&'a (u64, csv::StringRecord)>> {
    let mut by_id: HashMap<&str, &(u64, csv::StringRecord)> = HashMap::new();
    for row in &table.rows {
        if by_id.insert(&row.1[0], row).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: row.0,
                column: 1,
                message: format!("duplicate subject id {:?}", &row.1[0]),
            });
        }
    }
    if by_id.len() != ids.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} lists {} subjects, features list {}",
            path.display(),
            by_id.len(),
            ids.len()
        )));
    }
    ids.iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::SchemaMismatch(format!("{} has no row for subject {id}", path.display()))
            })
        })
        .collect()
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let path = dir.join(FEATURES_FILE);
    let table = read_table(&path)?;
    expect_first_column(&path, &table.header)?;
    let f = table.header.len() - 1;
    let mut subject_ids = Vec::with_capacity(table.rows.len());
    let mut data = Vec::with_capacity(table.rows.len() * f);
    for (line, rec) in &table.rows {
        subject_ids.push(rec[0].to_string());
        for c in 1..=f {
            data.push(parse_f64(&path, *line, c + 1, &rec[c])?);
        }
    }
    let features = DenseMatrix::new(subject_ids.len(), f, data)?;

    let schema_path = dir.join(SCHEMA_FILE);
    let schema: Vec<MeasureSchema> = crate::io::read_json(&schema_path)?;
    let path = dir.join(PHENOTYPES_FILE);
    let table = read_table(&path)?;
    expect_first_column(&path, &table.header)?;
    let rows = index_rows(&path, &table, &subject_ids)?;
    let mut phenotypes = Vec::with_capacity(schema.len());
    for m in &schema {
        let col = table
            .header
            .iter()
            .position(|h| h == &m.name)
            .ok_or_else(|| {
                Error::SchemaMismatch(format!("{} is missing column {}", path.display(), m.name))
            })?;
        let measure = match m.kind {
            SchemaKind::Qualitative => PhenotypicMeasure::qualitative(
                m.name.clone(),
                rows.iter().map(|(_, r)| r[col].to_string()).collect(),
            ),
            SchemaKind::Quantitative => {
                let tau = m.tau.ok_or_else(|| {
                    Error::SchemaMismatch(format!("quantitative measure {} has no tau", m.name))
                })?;
                let values = rows
                    .iter()
                    .map(|(line, r)| parse_f64(&path, *line, col + 1, &r[col]))
                    .collect::<Result<Vec<_>>>()?;
                PhenotypicMeasure::quantitative(m.name.clone(), values, tau)
                    .map_err(|e| Error::SchemaMismatch(e.to_string()))?
            }
        };
        phenotypes.push(measure);
    }

    let path = dir.join(LABELS_FILE);
    let table = read_table(&path)?;
    if table.header != ["subject_id", "label"] {
        return Err(Error::SchemaMismatch(format!(
            "{} header must be subject_id,label",
            path.display()
        )));
    }
    let rows = index_rows(&path, &table, &subject_ids)?;
    let labels = rows
        .iter()
        .map(|(line, r)| match &r[1] {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::Parse {
                path: path.clone(),
                line: *line,
                column: 2,
                message: format!("label must be 0 or 1, found {other:?}"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = dir.join(MANIFEST_FILE);
    let name = if manifest.exists() {
        crate::io::read_json::<Manifest>(&manifest)?.name
    } else {
        dir.file_name()
            .map_or_else(|| "bundle".to_string(), |s| s.to_string_lossy().into_owned())
    };
    let bundle = DatasetBundle {
        name,
        subject_ids,
        features,
        phenotypes,
        labels,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// `i,j,weight` rows with `i < j`.
pub fn save_adjacency(g: &Graph, path: &Path) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["i", "j", "weight"]).map_err(|e| csv_err(path, e))?;
    for e in g.edges() {
        w.write_record([e.i.to_string(), e.j.to_string(), e.weight.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn load_adjacency(path: &Path, n: usize) -> Result<Graph> {
    let table = read_table(path)?;
    if table.header != ["i", "j", "weight"] {
        return Err(Error::SchemaMismatch(format!(
            "{} header must be i,j,weight",
            path.display()
        )));
    }
    let mut edges = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let idx = |c: usize| {
            rec[c].parse::<usize>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                column: c + 1,
                message: format!("expected a node index, found {:?}", &rec[c]),
            })
        };
        edges.push(Edge {
            i: idx(0)?,
            j: idx(1)?,
            weight: parse_f64(path, *line, 3, &rec[2])?,
        });
    }
    Graph::new(n, edges)
}
