//! On-disk dataset formats.
//!
//! * `json`: one document `{format_version, items, viewpoints}`; each
//!   viewpoint is `{id, features, rows}` with rows mapping item ids to
//!   `[[feature_index, weight], ...]`.
//! * `triples`: a directory holding `items.csv` (`id,label`), one
//!   `<viewpoint>.triples.csv` (`item,feature,weight`) per viewpoint and
//!   `viewpoints.txt` giving the viewpoint order (alphabetical without it).
//! * site tables: CSV with `url,organization,geo_code,domain_codes,inlinks,
//!   outlinks,page_count`; list cells separated by `;`, links written as
//!   `url|count`; an empty cell means the table does not describe that field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{Link, PartialRecord, PartialTable};
use crate::error::{Error, Result};
use crate::viewpoint::{build_viewpoint_matrix, DataItem, Dataset, ViewpointMatrix};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Json,
    Triples,
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(DatasetFormat::Json),
            "triples" => Ok(DatasetFormat::Triples),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    format_version: u32,
    items: Vec<DataItem>,
    viewpoints: Vec<ViewpointMatrix>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

pub(crate) fn json_parse_error(path: &Path, e: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

fn json_error_with_offset(path: &Path, text: &str, e: &serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: format!(
            "line {}, column {} (byte offset {})",
            e.line(),
            e.column(),
            byte_offset(text, e.line(), e.column())
        ),
        message: e.to_string(),
    }
}

pub fn dataset_from_json(text: &str, path: &Path) -> Result<Dataset> {
    let doc: DatasetDocument = serde_json::from_str(text).map_err(|e| json_error_with_offset(path, text, &e))?;
    if doc.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: doc.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    Ok(Dataset::new(doc.items, doc.viewpoints))
}

pub fn dataset_to_json(ds: &Dataset) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DatasetDocument {
        format_version: DATASET_FORMAT_VERSION,
        items: ds.items.clone(),
        viewpoints: ds.viewpoints.clone(),
    })?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}, byte offset {}", p.line(), p.byte()))
        .unwrap_or_else(|| "unknown position".into());
    Error::Parse {
        path: path.to_path_buf(),
        location,
        message: e.to_string(),
    }
}

fn field_error(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {line}"),
        message,
    }
}

fn triples_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.triples.csv"))
}

fn load_triples(dir: &Path) -> Result<Dataset> {
    let manifest = dir.join("viewpoints.txt");
    let ids: Vec<String> = if manifest.exists() {
        read(&manifest)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    } else {
        let mut ids: Vec<String> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix(".triples.csv"))
                    .map(str::to_string)
            })
            .collect();
        ids.sort();
        ids
    };

    let mut viewpoints = Vec::new();
    for id in &ids {
        let path = triples_file(dir, id);
        let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut triples = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(&path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 3 {
                return Err(field_error(
                    &path,
                    line,
                    format!("expected 3 fields, got {}", rec.len()),
                ));
            }
            let weight: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|e| field_error(&path, line, format!("weight `{}`: {e}", &rec[2])))?;
            triples.push((rec[0].to_string(), rec[1].to_string(), weight));
        }
        viewpoints.push(build_viewpoint_matrix(id.clone(), triples)?);
    }

    let items_path = dir.join("items.csv");
    let items = if items_path.exists() {
        let mut reader = csv::Reader::from_path(&items_path).map_err(|e| csv_error(&items_path, e))?;
        let mut items = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(&items_path, e))?;
            let item = DataItem::new(rec.get(0).unwrap_or_default());
            items.push(match rec.get(1).filter(|l| !l.is_empty()) {
                Some(label) => item.with_label(label),
                None => item,
            });
        }
        items
    } else {
        let mut ids: Vec<&String> = viewpoints.iter().flat_map(|v| v.rows().keys()).collect();
        ids.sort();
        ids.dedup();
        ids.into_iter().map(DataItem::new).collect()
    };
    Ok(Dataset::new(items, viewpoints))
}

fn save_triples(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let items_path = dir.join("items.csv");
    let mut w = csv::Writer::from_path(&items_path).map_err(|e| csv_error(&items_path, e))?;
    w.write_record(["id", "label"]).map_err(|e| csv_error(&items_path, e))?;
    for item in &ds.items {
        w.write_record([item.id.as_str(), item.label.as_deref().unwrap_or("")])
            .map_err(|e| csv_error(&items_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&items_path, e))?;

    for v in &ds.viewpoints {
        let path = triples_file(dir, v.id());
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["item", "feature", "weight"])
            .map_err(|e| csv_error(&path, e))?;
        for (item, feature, weight) in v.triples() {
            w.write_record([item, feature, &weight.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let manifest = dir.join("viewpoints.txt");
    let ids: String = ds.viewpoints.iter().map(|v| format!("{}\n", v.id())).collect();
    fs::write(&manifest, ids).map_err(|e| Error::io(&manifest, e))
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::Json => dataset_from_json(&read(path)?, path),
        DatasetFormat::Triples => load_triples(path),
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::Json => fs::write(path, dataset_to_json(ds)?).map_err(|e| Error::io(path, e)),
        DatasetFormat::Triples => save_triples(ds, path),
    }
}

const SITE_COLUMNS: [&str; 7] = [
    "url",
    "organization",
    "geo_code",
    "domain_codes",
    "inlinks",
    "outlinks",
    "page_count",
];

fn parse_links(cell: &str) -> std::result::Result<Vec<Link>, String> {
    cell.split(';')
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (url, count) = s
                .rsplit_once('|')
                .ok_or_else(|| format!("link `{s}` is not `url|count`"))?;
            let count = count.parse().map_err(|e| format!("link count `{count}`: {e}"))?;
            Ok(Link::new(url, count))
        })
        .collect()
}

fn format_links(links: &[Link]) -> String {
    links
        .iter()
        .map(|l| format!("{}|{}", l.url, l.count))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn load_site_table(path: &Path) -> Result<PartialTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let url_col = col("url").ok_or_else(|| field_error(path, 1, "missing `url` column".into()))?;
    let cols: Vec<Option<usize>> = SITE_COLUMNS.iter().map(|c| col(c)).collect();

    let mut table = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize| cols[i].and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
        let links = |i: usize| {
            cell(i)
                .map(parse_links)
                .transpose()
                .map_err(|m| field_error(path, line, m))
        };
        table.push(PartialRecord {
            url: rec.get(url_col).unwrap_or_default().to_string(),
            organization: cell(1).map(str::to_string),
            geo_code: cell(2).map(str::to_string),
            domain_codes: cell(3).map(|s| s.split(';').map(str::to_string).collect()),
            inlinks: links(4)?,
            outlinks: links(5)?,
            page_count: cell(6)
                .map(|s| s.parse::<u64>())
                .transpose()
                .map_err(|e| field_error(path, line, format!("page_count: {e}")))?,
        });
    }
    Ok(table)
}

pub fn save_site_table(table: &PartialTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(SITE_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in table {
        w.write_record([
            r.url.clone(),
            r.organization.clone().unwrap_or_default(),
            r.geo_code.clone().unwrap_or_default(),
            r.domain_codes.as_ref().map(|c| c.join(";")).unwrap_or_default(),
            r.inlinks.as_deref().map(format_links).unwrap_or_default(),
            r.outlinks.as_deref().map(format_links).unwrap_or_default(),
            r.page_count.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
