//! Website description tables: merging, kernel selection, link restriction
//! and conversion into the four site viewpoints.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::viewpoint::{build_viewpoint_matrix, DataItem, Dataset};

pub const TOWNS: &str = "towns";
pub const SUBDOMAINS: &str = "subdomains";
pub const OUTLINKS: &str = "outlinks";
pub const INLINKS: &str = "inlinks";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub url: String,
    pub count: u64,
}

impl Link {
    pub fn new(url: impl Into<String>, count: u64) -> Self {
        Link { url: url.into(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SiteRecord {
    pub url: String,
    pub organization: String,
    pub geo_code: String,
    pub domain_codes: Vec<String>,
    pub inlinks: Vec<Link>,
    pub outlinks: Vec<Link>,
    pub page_count: u64,
}

/// One row of a partial description table. Absent fields are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartialRecord {
    pub url: String,
    #[serde(default)]
    pub organization: Option<String>,
    #[serde(default)]
    pub geo_code: Option<String>,
    #[serde(default)]
    pub domain_codes: Option<Vec<String>>,
    #[serde(default)]
    pub inlinks: Option<Vec<Link>>,
    #[serde(default)]
    pub outlinks: Option<Vec<Link>>,
    #[serde(default)]
    pub page_count: Option<u64>,
}

impl From<&SiteRecord> for PartialRecord {
    fn from(r: &SiteRecord) -> Self {
        PartialRecord {
            url: r.url.clone(),
            organization: Some(r.organization.clone()),
            geo_code: Some(r.geo_code.clone()),
            domain_codes: Some(r.domain_codes.clone()),
            inlinks: Some(r.inlinks.clone()),
            outlinks: Some(r.outlinks.clone()),
            page_count: Some(r.page_count),
        }
    }
}

pub type PartialTable = Vec<PartialRecord>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConflict {
    pub url: String,
    pub field: String,
    pub kept: String,
    pub replaced: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergedSites {
    /// One record per url, ascending by url.
    pub records: Vec<SiteRecord>,
    pub conflicts: Vec<FieldConflict>,
}

#[derive(Default)]
struct Accumulator {
    organization: Option<String>,
    geo_code: Option<String>,
    page_count: Option<u64>,
    domain_codes: Vec<String>,
    inlinks: BTreeMap<String, u64>,
    outlinks: BTreeMap<String, u64>,
}

fn set_scalar<T: Clone + PartialEq + std::fmt::Debug>(
    slot: &mut Option<T>,
    value: Option<&T>,
    url: &str,
    field: &str,
    conflicts: &mut Vec<FieldConflict>,
) {
    let Some(value) = value else { return };
    if let Some(old) = slot.as_ref() {
        if old != value {
            log::warn!("conflicting `{field}` for {url}: {old:?} replaced by {value:?}");
            conflicts.push(FieldConflict {
                url: url.to_string(),
                field: field.to_string(),
                kept: format!("{value:?}"),
                replaced: format!("{old:?}"),
            });
        }
    }
    *slot = Some(value.clone());
}

fn merge_links(
    into: &mut BTreeMap<String, u64>,
    links: Option<&Vec<Link>>,
    url: &str,
    field: &str,
    conflicts: &mut Vec<FieldConflict>,
) {
    for link in links.into_iter().flatten() {
        let mut slot = into.get(&link.url).copied();
        set_scalar(
            &mut slot,
            Some(&link.count),
            url,
            &format!("{field}[{}]", link.url),
            conflicts,
        );
        into.insert(link.url.clone(), link.count);
    }
}

/// Merges partial tables into one record per url. Lists are unioned;
/// conflicting scalars keep the value from the later table and are logged.
pub fn merge_site_tables(tables: &[PartialTable]) -> Result<MergedSites> {
    let mut acc: BTreeMap<String, Accumulator> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for (t, table) in tables.iter().enumerate() {
        for (row, rec) in table.iter().enumerate() {
            if rec.url.trim().is_empty() {
                return Err(Error::MissingUrl { table: t, row });
            }
            let url = rec.url.as_str();
            let a = acc.entry(rec.url.clone()).or_default();
            set_scalar(
                &mut a.organization,
                rec.organization.as_ref(),
                url,
                "organization",
                &mut conflicts,
            );
            set_scalar(&mut a.geo_code, rec.geo_code.as_ref(), url, "geo_code", &mut conflicts);
            set_scalar(
                &mut a.page_count,
                rec.page_count.as_ref(),
                url,
                "page_count",
                &mut conflicts,
            );
            for code in rec.domain_codes.iter().flatten() {
                if !a.domain_codes.contains(code) {
                    a.domain_codes.push(code.clone());
                }
            }
            merge_links(&mut a.inlinks, rec.inlinks.as_ref(), url, "inlinks", &mut conflicts);
            merge_links(&mut a.outlinks, rec.outlinks.as_ref(), url, "outlinks", &mut conflicts);
        }
    }
    let records = acc
        .into_iter()
        .map(|(url, a)| SiteRecord {
            url,
            organization: a.organization.unwrap_or_default(),
            geo_code: a.geo_code.unwrap_or_default(),
            domain_codes: a.domain_codes,
            inlinks: a.inlinks.into_iter().map(|(u, c)| Link::new(u, c)).collect(),
            outlinks: a.outlinks.into_iter().map(|(u, c)| Link::new(u, c)).collect(),
            page_count: a.page_count.unwrap_or_default(),
        })
        .collect();
    Ok(MergedSites { records, conflicts })
}

/// Keeps records carrying `domain_code` whose geo code starts with `geo_prefix`.
pub fn filter_kernel(records: &[SiteRecord], domain_code: &str, geo_prefix: &str) -> Vec<SiteRecord> {
    records
        .iter()
        .filter(|r| r.geo_code.starts_with(geo_prefix) && r.domain_codes.iter().any(|c| c == domain_code))
        .cloned()
        .collect()
}

/// Drops every link whose other end lies outside `universe`.
pub fn restrict_links(kernel: &[SiteRecord], universe: &BTreeSet<String>) -> Vec<SiteRecord> {
    kernel
        .iter()
        .map(|r| SiteRecord {
            inlinks: r
                .inlinks
                .iter()
                .filter(|l| universe.contains(&l.url))
                .cloned()
                .collect(),
            outlinks: r
                .outlinks
                .iter()
                .filter(|l| universe.contains(&l.url))
                .cloned()
                .collect(),
            ..r.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViewpointOptions {
    /// Count each linked site once, ignoring repeated links.
    #[serde(default)]
    pub dedup_links: bool,
}

/// Builds the towns, sub-domains, outlinks and inlinks viewpoints. Towns and
/// domain codes weigh 1 per occurrence, links weigh their counts.
pub fn records_to_viewpoints(records: &[SiteRecord], opts: ViewpointOptions) -> Result<Dataset> {
    let items = records
        .iter()
        .map(|r| {
            let item = DataItem::new(&r.url);
            if r.organization.is_empty() {
                item
            } else {
                item.with_label(&r.organization)
            }
        })
        .collect();

    let link_weight = |l: &Link| if opts.dedup_links { 1.0 } else { l.count as f64 };
    let towns = records
        .iter()
        .filter(|r| !r.geo_code.is_empty())
        .map(|r| (r.url.clone(), r.geo_code.clone(), 1.0));
    let domains = records
        .iter()
        .flat_map(|r| r.domain_codes.iter().map(move |c| (r.url.clone(), c.clone(), 1.0)));
    let outlinks = records.iter().flat_map(|r| {
        r.outlinks
            .iter()
            .filter(|l| l.count > 0)
            .map(move |l| (r.url.clone(), l.url.clone(), link_weight(l)))
    });
    let inlinks = records.iter().flat_map(|r| {
        r.inlinks
            .iter()
            .filter(|l| l.count > 0)
            .map(move |l| (r.url.clone(), l.url.clone(), link_weight(l)))
    });

    let candidates = [
        build_viewpoint_matrix(TOWNS, towns),
        build_viewpoint_matrix(SUBDOMAINS, domains),
        build_viewpoint_matrix(OUTLINKS, outlinks),
        build_viewpoint_matrix(INLINKS, inlinks),
    ];
    let mut viewpoints = Vec::new();
    for (id, built) in [TOWNS, SUBDOMAINS, OUTLINKS, INLINKS].into_iter().zip(candidates) {
        match built {
            Ok(m) => viewpoints.push(m),
            Err(Error::EmptyViewpoint(_)) => log::warn!("viewpoint `{id}` is empty, skipped"),
            Err(e) => return Err(e),
        }
    }
    if viewpoints.is_empty() {
        return Err(Error::EmptyViewpoint(None));
    }
    Ok(Dataset::new(items, viewpoints))
}

/// Kernel selection, link restriction to the merged universe and viewpoint
/// construction in one pass.
pub fn prepare_sites(
    tables: &[PartialTable],
    domain_code: &str,
    geo_prefix: &str,
    opts: ViewpointOptions,
) -> Result<Dataset> {
    let merged = merge_site_tables(tables)?;
    let universe: BTreeSet<String> = merged.records.iter().map(|r| r.url.clone()).collect();
    let kernel = filter_kernel(&merged.records, domain_code, geo_prefix);
    records_to_viewpoints(&restrict_links(&kernel, &universe), opts)
}
