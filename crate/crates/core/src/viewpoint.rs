//! Dataset and viewpoint data model.
//!
//! A [`Dataset`] is a set of items described under several viewpoints. Each
//! viewpoint is an independent item × feature matrix of non-negative weights;
//! items that carry no feature under a viewpoint are simply absent from its
//! rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl DataItem {
    pub fn new(id: impl Into<String>) -> Self {
        DataItem {
            id: id.into(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Sparse non-negative vector with strictly increasing feature indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::InvalidVector(format!(
                    "indices not strictly increasing at {}",
                    pair[1].0
                )));
            }
        }
        if let Some(&(idx, w)) = entries.iter().find(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidVector(format!(
                "weight {w} at index {idx} is not a positive finite number"
            )));
        }
        Ok(SparseVector { entries })
    }

    /// Builds a vector from a dense slice, keeping the strictly positive entries.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(i, &w)| (i, w))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest feature index, or 0 for an empty vector.
    pub fn min_dimension(&self) -> usize {
        self.entries.last().map_or(0, |&(i, _)| i + 1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, w)| w * dense.get(i).copied().unwrap_or(0.0))
            .sum()
    }

    /// Writes the vector into `out`, zeroing every other slot.
    pub fn densify_into(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(i, w) in &self.entries {
            out[i] = w;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim.max(self.min_dimension())];
        self.densify_into(&mut out);
        out
    }

    /// Returns a copy scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Result<SparseVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::DegenerateVector);
        }
        Ok(SparseVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w / n)).collect(),
        })
    }

    pub fn weight(&self, feature: usize) -> f64 {
        self.entries
            .binary_search_by_key(&feature, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }
}

impl TryFrom<Vec<(usize, f64)>> for SparseVector {
    type Error = Error;

    fn try_from(entries: Vec<(usize, f64)>) -> Result<Self> {
        SparseVector::new(entries)
    }
}

impl From<SparseVector> for Vec<(usize, f64)> {
    fn from(v: SparseVector) -> Self {
        v.entries
    }
}

/// Cosine of the angle between two non-negative sparse vectors.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(0.0, 1.0))
}

/// Cosine between a sparse row and a dense codebook; 0 when either has zero norm.
pub fn cosine_sparse_dense(a: &SparseVector, dense: &[f64]) -> f64 {
    let na = a.norm();
    let nd = dense.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nd == 0.0 {
        return 0.0;
    }
    (a.dot_dense(dense) / (na * nd)).clamp(0.0, 1.0)
}

/// One viewpoint: an item × feature weight matrix over a frozen feature list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct ViewpointMatrix {
    id: String,
    features: Vec<String>,
    rows: BTreeMap<String, SparseVector>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    id: String,
    features: Vec<String>,
    rows: BTreeMap<String, SparseVector>,
}

impl TryFrom<RawMatrix> for ViewpointMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        ViewpointMatrix::new(raw.id, raw.features, raw.rows)
    }
}

impl From<ViewpointMatrix> for RawMatrix {
    fn from(m: ViewpointMatrix) -> Self {
        RawMatrix {
            id: m.id,
            features: m.features,
            rows: m.rows,
        }
    }
}

impl ViewpointMatrix {
    pub fn new(id: impl Into<String>, features: Vec<String>, rows: BTreeMap<String, SparseVector>) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidMatrix {
            viewpoint: id.clone(),
            reason,
        };
        if rows.is_empty() {
            return Err(Error::EmptyViewpoint(Some(id)));
        }
        let unique: BTreeSet<&String> = features.iter().collect();
        if unique.len() != features.len() {
            return Err(invalid("duplicate feature names".into()));
        }
        for (item, row) in &rows {
            if row.min_dimension() > features.len() {
                return Err(invalid(format!(
                    "row `{item}` references feature {} beyond {} features",
                    row.min_dimension() - 1,
                    features.len()
                )));
            }
        }
        Ok(ViewpointMatrix { id, features, rows })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn dimension(&self) -> usize {
        self.features.len()
    }

    /// Rows keyed by item id, in ascending id order.
    pub fn rows(&self) -> &BTreeMap<String, SparseVector> {
        &self.rows
    }

    pub fn row(&self, item: &str) -> Option<&SparseVector> {
        self.rows.get(item)
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// (rows, features), the matrix size as reported for a viewpoint.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.features.len())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features
            .binary_search_by(|f| f.as_str().cmp(name))
            .ok()
            .or_else(|| {
                // features need not be sorted when built by hand
                self.features.iter().position(|f| f == name)
            })
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.values().map(SparseVector::total_weight).sum()
    }

    /// Iterates the matrix back out as (item, feature, weight) triples.
    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.rows.iter().flat_map(move |(item, row)| {
            row.entries()
                .iter()
                .map(move |&(f, w)| (item.as_str(), self.features[f].as_str(), w))
        })
    }
}

/// Builds a viewpoint matrix from raw (item, feature, weight) triples.
///
/// Duplicate (item, feature) pairs are summed, zero totals dropped and the
/// feature list sorted lexicographically. The result does not depend on the
/// order of the input triples.
pub fn build_viewpoint_matrix<I, S, T>(id: impl Into<String>, raw: I) -> Result<ViewpointMatrix>
where
    I: IntoIterator<Item = (S, T, f64)>,
    S: Into<String>,
    T: Into<String>,
{
    let id = id.into();
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for (item, feature, weight) in raw {
        let (item, feature) = (item.into(), feature.into());
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidWeight { item, feature, weight });
        }
        cells.entry((item, feature)).or_default().push(weight);
    }
    // Summing in sorted order keeps the totals independent of input order.
    let cells: Vec<((String, String), f64)> = cells
        .into_iter()
        .filter_map(|(key, mut ws)| {
            ws.sort_by(f64::total_cmp);
            let total: f64 = ws.iter().sum();
            (total > 0.0).then_some((key, total))
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyViewpoint(Some(id)));
    }

    let features: Vec<String> = cells
        .iter()
        .map(|((_, f), _)| f.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = features.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();

    let mut rows: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for ((item, feature), w) in &cells {
        rows.entry(item.clone())
            .or_default()
            .push((index[feature.as_str()], *w));
    }
    let rows = rows
        .into_iter()
        .map(|(item, mut entries)| {
            entries.sort_by_key(|&(i, _)| i);
            SparseVector::new(entries).map(|v| (item, v))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    ViewpointMatrix::new(id, features, rows)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<DataItem>,
    pub viewpoints: Vec<ViewpointMatrix>,
}

impl Dataset {
    pub fn new(items: Vec<DataItem>, viewpoints: Vec<ViewpointMatrix>) -> Self {
        Dataset { items, viewpoints }
    }

    pub fn viewpoint(&self, id: &str) -> Option<&ViewpointMatrix> {
        self.viewpoints.iter().find(|v| v.id() == id)
    }

    pub fn viewpoint_ids(&self) -> Vec<&str> {
        self.viewpoints.iter().map(ViewpointMatrix::id).collect()
    }

    pub fn item(&self, id: &str) -> Option<&DataItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    EmptyItemId { position: usize },
    DuplicateItemId { id: String },
    DuplicateViewpointId { id: String },
    UnknownRowId { viewpoint: String, item: String },
    EmptyRow { viewpoint: String, item: String },
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Issue::EmptyItemId { position } => write!(f, "empty item id at position {position}"),
            Issue::DuplicateItemId { id } => write!(f, "duplicate item id `{id}`"),
            Issue::DuplicateViewpointId { id } => write!(f, "duplicate viewpoint id `{id}`"),
            Issue::UnknownRowId { viewpoint, item } => {
                write!(f, "unknown row id `{item}` in viewpoint `{viewpoint}`")
            }
            Issue::EmptyRow { viewpoint, item } => {
                write!(f, "empty row `{item}` in viewpoint `{viewpoint}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    /// Number of rows present per viewpoint.
    pub coverage: BTreeMap<String, usize>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks a dataset for structural problems without modifying it.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for (position, item) in ds.items.iter().enumerate() {
        if item.id.is_empty() {
            report.issues.push(Issue::EmptyItemId { position });
        } else if !seen.insert(item.id.as_str()) {
            report.issues.push(Issue::DuplicateItemId { id: item.id.clone() });
        }
    }

    let mut seen_views = BTreeSet::new();
    for view in &ds.viewpoints {
        if !seen_views.insert(view.id()) {
            report.issues.push(Issue::DuplicateViewpointId {
                id: view.id().to_string(),
            });
        }
        for (item, row) in view.rows() {
            if !seen.contains(item.as_str()) {
                report.issues.push(Issue::UnknownRowId {
                    viewpoint: view.id().to_string(),
                    item: item.clone(),
                });
            }
            if row.is_empty() {
                report.issues.push(Issue::EmptyRow {
                    viewpoint: view.id().to_string(),
                    item: item.clone(),
                });
            }
        }
        *report.coverage.entry(view.id().to_string()).or_default() += view.row_count();
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(entries: &[(usize, f64)]) -> SparseVector {
        SparseVector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&sv(&[(0, 1.0)]), &sv(&[(0, 1.0)])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&sv(&[(0, 1.0)]), &sv(&[(1, 1.0)])).unwrap(), 0.0);
        let c = cosine_similarity(&sv(&[(0, 1.0), (1, 1.0)]), &sv(&[(0, 1.0)])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let empty = SparseVector::default();
        assert!(matches!(
            cosine_similarity(&empty, &sv(&[(0, 1.0)])),
            Err(Error::DegenerateVector)
        ));
    }

    #[test]
    fn sparse_vector_rejects_bad_entries() {
        assert!(SparseVector::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(0, 0.0)]).is_err());
        assert!(SparseVector::new(vec![(0, -1.0)]).is_err());
        assert!(SparseVector::new(vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn duplicates_are_summed() {
        let m = build_viewpoint_matrix("towns", [("w1", "munich", 1.0), ("w1", "munich", 2.0)]).unwrap();
        let idx = m.feature_index("munich").unwrap();
        assert_eq!(m.row("w1").unwrap().weight(idx), 3.0);
    }

    #[test]
    fn one_entry_per_row() {
        let m = build_viewpoint_matrix("v", [("w1", "a", 1.0), ("w2", "b", 1.0)]).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert!(m.rows().values().all(|r| r.len() == 1));
    }

    #[test]
    fn zero_weights_dropped_and_features_sorted() {
        let m = build_viewpoint_matrix("v", [("x", "zeta", 1.0), ("x", "alpha", 2.0), ("y", "unused", 0.0)]).unwrap();
        assert_eq!(m.features(), ["alpha", "zeta"]);
        assert!(m.row("y").is_none());
    }

    #[test]
    fn table_one_town_shape() {
        let raw: Vec<(String, String, f64)> = (0..438)
            .map(|i| (format!("site{i:03}"), format!("town{:02}", i % 96), 1.0))
            .collect();
        let m = build_viewpoint_matrix("towns", raw).unwrap();
        assert_eq!(m.shape(), (438, 96));
    }

    #[test]
    fn empty_and_negative_input_rejected() {
        let none: Vec<(String, String, f64)> = vec![];
        assert!(matches!(
            build_viewpoint_matrix("v", none),
            Err(Error::EmptyViewpoint(_))
        ));
        assert!(matches!(
            build_viewpoint_matrix("v", [("a", "b", -1.0)]),
            Err(Error::InvalidWeight { .. })
        ));
        assert!(matches!(
            build_viewpoint_matrix("v", [("a", "b", 0.0)]),
            Err(Error::EmptyViewpoint(_))
        ));
    }

    #[test]
    fn matrix_rejects_out_of_range_feature() {
        let rows = BTreeMap::from([("a".to_string(), sv(&[(3, 1.0)]))]);
        assert!(ViewpointMatrix::new("v", vec!["f".into()], rows).is_err());
    }

    fn small_dataset() -> Dataset {
        let items = (0..4).map(|i| DataItem::new(format!("w{i}"))).collect();
        let towns =
            build_viewpoint_matrix("towns", (0..4).map(|i| (format!("w{i}"), format!("t{}", i % 2), 1.0))).unwrap();
        let outlinks = build_viewpoint_matrix("outlinks", [("w0", "x", 2.0), ("w2", "y", 1.0)]).unwrap();
        Dataset::new(items, vec![towns, outlinks])
    }

    #[test]
    fn validation_of_well_formed_dataset() {
        let report = validate_dataset(&small_dataset());
        assert!(report.is_ok(), "{:?}", report.issues);
        assert_eq!(report.coverage["towns"], 4);
        assert_eq!(report.coverage["outlinks"], 2);
    }

    #[test]
    fn validation_flags_unknown_rows_and_duplicates() {
        let mut ds = small_dataset();
        ds.viewpoints[1] = build_viewpoint_matrix("outlinks", [("w0", "x", 2.0), ("ghost", "y", 1.0)]).unwrap();
        ds.items.push(DataItem::new("w1"));
        let before = ds.clone();
        let report = validate_dataset(&ds);
        assert_eq!(ds, before);
        assert!(report.issues.contains(&Issue::UnknownRowId {
            viewpoint: "outlinks".into(),
            item: "ghost".into()
        }));
        assert!(report.issues.contains(&Issue::DuplicateItemId { id: "w1".into() }));
        assert!(report.issues.iter().any(|i| i.to_string().contains("unknown row id")));
    }

    fn arb_vector() -> impl Strategy<Value = SparseVector> {
        proptest::collection::btree_map(0usize..12, 0.01f64..100.0, 1..8)
            .prop_map(|m| SparseVector::new(m.into_iter().collect()).unwrap())
    }

    proptest! {
        #[test]
        fn cosine_self_is_one(a in arb_vector()) {
            prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in arb_vector(), b in arb_vector()) {
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn cosine_scale_invariant(a in arb_vector(), b in arb_vector(), c in 0.001f64..1000.0) {
            let scaled = SparseVector::new(a.entries().iter().map(|&(i, w)| (i, w * c)).collect()).unwrap();
            let d = cosine_similarity(&scaled, &b).unwrap() - cosine_similarity(&a, &b).unwrap();
            prop_assert!(d.abs() < 1e-12);
        }

        #[test]
        fn build_is_order_independent(
            raw in proptest::collection::vec((0u8..6, 0u8..5, 0.0f64..10.0), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let triples: Vec<(String, String, f64)> = raw
                .iter()
                .map(|&(i, f, w)| (format!("i{i}"), format!("f{f}"), w))
                .collect();
            let mut shuffled = triples.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = build_viewpoint_matrix("v", triples);
            let b = build_viewpoint_matrix("v", shuffled);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one ordering failed"),
            }
        }
    }
}
