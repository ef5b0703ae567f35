//! Tab-separated phenotype and genotype files.
//!
//! Phenotype file: header row, first column an individual ID, then numeric
//! columns. Genotype file: SNP-major, header `snp  pos  ID1 ID2 ...` with
//! IDs in phenotype-file order, cells in {0, 1, 2, NA}.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use eps_core::model::Genotype;

use crate::error::{AppError, AppResult, InputError};

pub const MISSING: &str = "NA";

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .from_reader(r)
}

/// A TSV writer with LF line endings.
pub fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(w)
}

fn open(path: &Path) -> AppResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| AppError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_error(file: &str, e: csv::Error) -> InputError {
    let line = e.position().map(|p| p.line());
    let mut err = InputError::new(file, e.to_string());
    err.line = line;
    err
}

/// Phenotype and covariate table, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenoTable {
    pub file: String,
    pub id_column: String,
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl PhenoTable {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    fn index(&self, name: &str) -> Result<usize, InputError> {
        self.names.iter().position(|c| c == name).ok_or_else(|| {
            InputError::new(
                &self.file,
                format!("no column named `{name}`; columns are {}", self.names.join(", ")),
            )
        })
    }

    /// Values of a column that must be fully observed.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, InputError> {
        let c = self.index(name)?;
        self.columns[c]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    InputError::new(&self.file, "missing value in a column the model needs")
                        .at(i as u64 + 2)
                        .column(name)
                })
            })
            .collect()
    }

    /// Integer labels `0..J` for the distinct values of a column, in
    /// increasing order of value.
    pub fn strata(&self, name: &str) -> Result<Vec<usize>, InputError> {
        let vals = self.numeric(name)?;
        let mut levels: Vec<f64> = vals.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        Ok(vals
            .iter()
            .map(|v| levels.binary_search_by(|l| l.total_cmp(v)).expect("present"))
            .collect())
    }
}

fn parse_number(cell: &str) -> Option<Option<f64>> {
    if cell == MISSING {
        return Some(None);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

pub fn read_phenotypes(path: &Path) -> AppResult<PhenoTable> {
    let file = path.display().to_string();
    parse_phenotypes(&file, open(path)?).map_err(AppError::from)
}

pub fn parse_phenotypes<R: Read>(file: &str, r: R) -> Result<PhenoTable, InputError> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    if header.len() < 2 {
        return Err(InputError::new(file, "header needs an ID column and at least one data column").at(1));
    }
    let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut seen = BTreeMap::new();
    for n in &names {
        if seen.insert(n.as_str(), ()).is_some() {
            return Err(InputError::new(file, "duplicate column name").at(1).column(n));
        }
    }
    let mut ids = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    let mut id_seen = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(
                InputError::new(file, format!("expected {} fields, found {}", header.len(), rec.len())).at(line),
            );
        }
        let id = rec[0].to_string();
        if let Some(first) = id_seen.insert(id.clone(), line) {
            return Err(
                InputError::new(file, format!("duplicate ID `{id}` (first on line {first})"))
                    .at(line)
                    .column(&header[0]),
            );
        }
        ids.push(id);
        for (c, cell) in rec.iter().skip(1).enumerate() {
            let v = parse_number(cell).ok_or_else(|| {
                InputError::new(file, format!("`{cell}` is not a number or {MISSING}"))
                    .at(line)
                    .column(&names[c])
            })?;
            columns[c].push(v);
        }
    }
    if ids.is_empty() {
        return Err(InputError::new(file, "no individuals"));
    }
    Ok(PhenoTable {
        file: file.to_string(),
        id_column: header[0].to_string(),
        ids,
        names,
        columns,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnpRecord {
    pub id: String,
    pub position: u64,
    pub genotypes: Vec<Genotype>,
}

fn parse_genotype(cell: &str) -> Option<Genotype> {
    match cell {
        "0" => Some(Genotype::Called(0)),
        "1" => Some(Genotype::Called(1)),
        "2" => Some(Genotype::Called(2)),
        MISSING => Some(Genotype::Missing),
        _ => None,
    }
}

/// Reads a genotype file whose individual columns must match `ids` in
/// order.
pub fn read_genotypes(path: &Path, ids: &[String]) -> AppResult<Vec<SnpRecord>> {
    let file = path.display().to_string();
    parse_genotypes(&file, open(path)?, ids).map_err(AppError::from)
}

pub fn parse_genotypes<R: Read>(file: &str, r: R, ids: &[String]) -> Result<Vec<SnpRecord>, InputError> {
    let mut rdr = reader(r);
    let header = rdr.headers().map_err(|e| csv_error(file, e))?.clone();
    if header.len() != ids.len() + 2 {
        return Err(InputError::new(
            file,
            format!(
                "header has {} individuals, phenotype file has {}",
                header.len().saturating_sub(2),
                ids.len()
            ),
        )
        .at(1));
    }
    for (k, (h, id)) in header.iter().skip(2).zip(ids).enumerate() {
        if h != id {
            return Err(InputError::new(
                file,
                format!("individual {} is `{h}` but the phenotype file has `{id}` there", k + 1),
            )
            .at(1)
            .column(h));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(
                InputError::new(file, format!("expected {} fields, found {}", header.len(), rec.len())).at(line),
            );
        }
        let position = rec[1].parse::<u64>().map_err(|_| {
            InputError::new(file, format!("position `{}` is not a non-negative integer", &rec[1]))
                .at(line)
                .column(&header[1])
        })?;
        let genotypes = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(k, cell)| {
                parse_genotype(cell).ok_or_else(|| {
                    InputError::new(file, format!("genotype `{cell}` is not 0, 1, 2 or {MISSING}"))
                        .at(line)
                        .column(&header[k + 2])
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(SnpRecord {
            id: rec[0].to_string(),
            position,
            genotypes,
        });
    }
    Ok(out)
}

/// Formats a float for output; non-finite values become `NA`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        MISSING.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), fmt_f64)
}

/// Writes to a file, or stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> AppResult<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, bytes).map_err(|source| AppError::Io {
            path: p.display().to_string(),
            source,
        }),
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).map_err(|source| AppError::Io {
                path: String::from("stdout"),
                source,
            })
        }
    }
}
