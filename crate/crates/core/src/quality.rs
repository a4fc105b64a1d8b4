//! Cluster quality for a trained map, and the square-grid size scan.
//!
//! For a feature `f` and a cluster (non-empty node) `c`, let `W(f, c)` be the
//! summed weight of `f` over the members of `c`. Feature recall
//! `W(f, c) / Σ_c' W(f, c')` is the share of `f` that `c` captures; a feature
//! is *peculiar* to every cluster that captures the largest share of it.
//! Local recall of a cluster averages feature recall over its peculiar
//! features, local precision averages `W(f, c) / Σ_f' W(f', c)` over the same
//! set. Map recall and precision average the local values over clusters that
//! own at least one peculiar feature; empty nodes are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterWeights;
use crate::error::{Error, Result};
use crate::som::{train_som, Projection, SomMap, TrainingParams};
use crate::viewpoint::ViewpointMatrix;

pub const DEFAULT_MIN_SIDE: usize = 3;
pub const DEFAULT_MAX_SIDE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub peculiar: BTreeSet<usize>,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
    pub clusters: BTreeMap<usize, ClusterQuality>,
}

/// Harmonic mean of recall and precision, 0 when both are 0.
pub fn f_measure(recall: f64, precision: f64) -> Result<f64> {
    for (name, v) in [("recall", recall), ("precision", precision)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!("{name} {v} not in [0,1]")));
        }
    }
    if recall + precision == 0.0 {
        return Ok(0.0);
    }
    // the harmonic mean of x with itself is x; skip the rounding of 2x²/2x
    if recall == precision {
        return Ok(recall);
    }
    Ok(2.0 * recall * precision / (recall + precision))
}

fn peculiar_from_weights(weights: &ClusterWeights) -> BTreeMap<usize, BTreeSet<usize>> {
    // argmax of feature recall over clusters equals argmax of W(f, c), since
    // the normaliser is shared by every cluster.
    let mut best: BTreeMap<usize, (f64, Vec<usize>)> = BTreeMap::new();
    for (&node, features) in &weights.by_node {
        for (&f, &w) in features {
            if w <= 0.0 {
                continue;
            }
            let slot = best.entry(f).or_insert((w, Vec::new()));
            if w > slot.0 {
                *slot = (w, vec![node]);
            } else if w == slot.0 {
                slot.1.push(node);
            }
        }
    }
    let mut out: BTreeMap<usize, BTreeSet<usize>> = weights.by_node.keys().map(|&n| (n, BTreeSet::new())).collect();
    for (f, (_, nodes)) in best {
        for n in nodes {
            out.entry(n).or_default().insert(f);
        }
    }
    out
}

/// Peculiar features of every non-empty cluster (possibly empty sets).
pub fn peculiar_features(
    map: &SomMap,
    matrix: &ViewpointMatrix,
    proj: &Projection,
) -> Result<BTreeMap<usize, BTreeSet<usize>>> {
    check_nodes(map, proj)?;
    Ok(peculiar_from_weights(&ClusterWeights::compute(matrix, proj)?))
}

fn check_nodes(map: &SomMap, proj: &Projection) -> Result<()> {
    let nodes = map.node_count();
    match proj.iter().find(|(_, a)| a.node >= nodes) {
        Some((_, a)) => Err(Error::NodeOutOfRange { node: a.node, nodes }),
        None => Ok(()),
    }
}

pub fn map_recall_precision(map: &SomMap, matrix: &ViewpointMatrix, proj: &Projection) -> Result<QualityReport> {
    check_nodes(map, proj)?;
    let weights = ClusterWeights::compute(matrix, proj)?;
    let totals = weights.feature_totals();
    let mut clusters = BTreeMap::new();
    for (node, peculiar) in peculiar_from_weights(&weights) {
        if peculiar.is_empty() {
            continue;
        }
        let node_total = weights.node_total(node);
        let n = peculiar.len() as f64;
        let recall = peculiar
            .iter()
            .map(|&f| weights.weight(node, f) / totals[&f])
            .sum::<f64>()
            / n;
        let precision = peculiar
            .iter()
            .map(|&f| weights.weight(node, f) / node_total)
            .sum::<f64>()
            / n;
        clusters.insert(
            node,
            ClusterQuality {
                peculiar,
                recall: recall.min(1.0),
                precision: precision.min(1.0),
            },
        );
    }
    if clusters.is_empty() {
        return Err(Error::DegenerateMap);
    }
    let n = clusters.len() as f64;
    let recall = (clusters.values().map(|c| c.recall).sum::<f64>() / n).min(1.0);
    let precision = (clusters.values().map(|c| c.precision).sum::<f64>() / n).min(1.0);
    Ok(QualityReport {
        recall,
        precision,
        f_measure: f_measure(recall, precision)?,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub side: usize,
    pub clusters: usize,
    pub quality: QualityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub viewpoint_id: String,
    pub entries: Vec<ScanEntry>,
    pub chosen_side: usize,
}

impl ScanResult {
    pub fn chosen(&self) -> &ScanEntry {
        self.entries
            .iter()
            .find(|e| e.side == self.chosen_side)
            .expect("chosen side is one of the entries")
    }

    /// Writes `side,nodes,clusters,recall,precision,f_measure` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Parse {
            path: "<scan report>".into(),
            location: "write".into(),
            message: e.to_string(),
        };
        w.write_record(["side", "nodes", "clusters", "recall", "precision", "f_measure"])
            .map_err(to_err)?;
        for e in &self.entries {
            w.write_record([
                e.side.to_string(),
                (e.side * e.side).to_string(),
                e.clusters.to_string(),
                e.quality.recall.to_string(),
                e.quality.precision.to_string(),
                e.quality.f_measure.to_string(),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<scan report>", e))
    }
}

/// Picks the side with the highest F-measure; ties go to the smaller side.
pub fn choose_side(entries: &[ScanEntry]) -> Option<usize> {
    let mut best: Option<&ScanEntry> = None;
    for e in entries {
        best = match best {
            Some(b)
                if b.quality.f_measure > e.quality.f_measure
                    || (b.quality.f_measure == e.quality.f_measure && b.side <= e.side) =>
            {
                Some(b)
            }
            _ => Some(e),
        };
    }
    best.map(|e| e.side)
}

/// One scanned size with the trained map and projection kept alongside.
pub struct ScannedMap {
    pub side: usize,
    pub map: SomMap,
    pub projection: Projection,
    pub quality: Result<QualityReport>,
}

/// Trains one square map per side in `min_side..=max_side` (in parallel,
/// all with the same seed) and evaluates each.
pub fn scan_maps(
    matrix: &ViewpointMatrix,
    min_side: usize,
    max_side: usize,
    params: &TrainingParams,
    seed: u64,
) -> Result<Vec<ScannedMap>> {
    if min_side == 0 || min_side > max_side {
        return Err(Error::InvalidScanRange {
            min: min_side,
            max: max_side,
        });
    }
    params.validate()?;
    (min_side..=max_side)
        .into_par_iter()
        .map(|side| {
            let map = train_som(matrix, side, side, params, seed)?;
            let projection = map.project(matrix)?;
            let quality = map_recall_precision(&map, matrix, &projection);
            Ok(ScannedMap {
                side,
                map,
                projection,
                quality,
            })
        })
        .collect()
}

pub fn scan_result(viewpoint_id: &str, scanned: &[ScannedMap]) -> Result<ScanResult> {
    let entries: Vec<ScanEntry> = scanned
        .iter()
        .filter_map(|s| {
            s.quality.as_ref().ok().map(|q| ScanEntry {
                side: s.side,
                clusters: s.projection.non_empty_nodes(),
                quality: q.clone(),
            })
        })
        .collect();
    let chosen_side = choose_side(&entries).ok_or(Error::DegenerateMap)?;
    Ok(ScanResult {
        viewpoint_id: viewpoint_id.to_string(),
        entries,
        chosen_side,
    })
}

pub fn scan_map_sizes(
    matrix: &ViewpointMatrix,
    min_side: usize,
    max_side: usize,
    params: &TrainingParams,
    seed: u64,
) -> Result<ScanResult> {
    scan_result(matrix.id(), &scan_maps(matrix, min_side, max_side, params, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::som::Grid;
    use crate::viewpoint::build_viewpoint_matrix;
    use proptest::prelude::*;

    fn dummy_map(nodes: usize) -> SomMap {
        SomMap {
            viewpoint_id: "v".into(),
            grid: Grid::new(nodes, 1).unwrap(),
            dimension: 0,
            params: TrainingParams::default(),
            seed: 0,
            codebooks: vec![vec![]; nodes],
        }
    }

    fn projection(assign: &[(&str, usize)]) -> Projection {
        let mut p = Projection::default();
        for &(item, node) in assign {
            p.insert(item, node, 1.0);
        }
        p
    }

    #[test]
    fn f_measure_examples() {
        for x in [0.0, 0.1, 0.37, 0.5, 1.0] {
            assert_eq!(f_measure(x, x).unwrap(), x);
        }
        assert_eq!(f_measure(1.0, 0.0).unwrap(), 0.0);
        assert!((f_measure(0.5, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(f_measure(1.5, 0.2).is_err());
        assert!(f_measure(f64::NAN, 0.2).is_err());
    }

    #[test]
    fn exclusive_feature_is_peculiar_to_its_cluster() {
        let m = build_viewpoint_matrix("v", [("a", "f", 1.0), ("a", "g", 1.0), ("b", "g", 3.0)]).unwrap();
        let f = m.feature_index("f").unwrap();
        let g = m.feature_index("g").unwrap();
        let p = peculiar_features(&dummy_map(2), &m, &projection(&[("a", 0), ("b", 1)])).unwrap();
        assert_eq!(p[&0], BTreeSet::from([f]));
        assert_eq!(p[&1], BTreeSet::from([g]));
    }

    #[test]
    fn split_feature_is_peculiar_to_both() {
        let m = build_viewpoint_matrix("v", [("a", "f", 2.0), ("b", "f", 2.0)]).unwrap();
        let p = peculiar_features(&dummy_map(2), &m, &projection(&[("a", 0), ("b", 1)])).unwrap();
        assert_eq!(p[&0], BTreeSet::from([0]));
        assert_eq!(p[&1], BTreeSet::from([0]));
    }

    #[test]
    fn disjoint_clusters_have_full_recall_and_precision() {
        let m = build_viewpoint_matrix(
            "v",
            [("a", "x", 1.0), ("b", "x", 2.0), ("c", "y", 1.0), ("c", "z", 1.0)],
        )
        .unwrap();
        let r = map_recall_precision(&dummy_map(3), &m, &projection(&[("a", 0), ("b", 0), ("c", 2)])).unwrap();
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.clusters[&0].precision, 1.0);
        // cluster 2 owns y and z at 1/2 of its mass each
        assert_eq!(r.clusters[&2].precision, 0.5);
        assert_eq!(r.precision, 0.75);
        assert!((r.f_measure - f_measure(1.0, 0.75).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn only_peculiar_features_gives_precision_one() {
        let m = build_viewpoint_matrix(
            "v",
            [("a", "x", 1.0), ("b", "x", 1.0), ("b", "y", 4.0), ("c", "y", 1.0)],
        )
        .unwrap();
        // node 0 = {a}: x only, x split 1 vs 1 with node 1 -> peculiar to both
        let r = map_recall_precision(&dummy_map(2), &m, &projection(&[("a", 0), ("b", 1), ("c", 1)])).unwrap();
        assert_eq!(r.clusters[&0].precision, 1.0);
        assert_eq!(r.clusters[&0].recall, 0.5);
    }

    #[test]
    fn node_outside_grid_is_rejected() {
        let m = build_viewpoint_matrix("v", [("a", "x", 1.0)]).unwrap();
        assert!(map_recall_precision(&dummy_map(1), &m, &projection(&[("a", 4)])).is_err());
    }

    fn entry(side: usize, f: f64) -> ScanEntry {
        ScanEntry {
            side,
            clusters: side,
            quality: QualityReport {
                recall: f,
                precision: f,
                f_measure: f,
                clusters: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn choose_side_breaks_ties_towards_smaller() {
        assert_eq!(choose_side(&[entry(5, 0.4), entry(3, 0.4), entry(4, 0.2)]), Some(3));
        assert_eq!(choose_side(&[entry(3, 0.1), entry(4, 0.9)]), Some(4));
        assert_eq!(choose_side(&[]), None);
    }

    #[test]
    fn scan_rejects_bad_range() {
        let m = build_viewpoint_matrix("v", [("a", "x", 1.0)]).unwrap();
        let p = TrainingParams::default();
        assert!(scan_map_sizes(&m, 4, 3, &p, 0).is_err());
        assert!(scan_map_sizes(&m, 0, 3, &p, 0).is_err());
    }

    #[test]
    fn scan_csv_layout() {
        let s = ScanResult {
            viewpoint_id: "v".into(),
            entries: vec![entry(3, 0.5)],
            chosen_side: 3,
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "side,nodes,clusters,recall,precision,f_measure\n3,9,3,0.5,0.5,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn f_measure_symmetric(r in 0.0f64..=1.0, p in 0.0f64..=1.0) {
            prop_assert_eq!(f_measure(r, p).unwrap(), f_measure(p, r).unwrap());
            let f = f_measure(r, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn feature_recall_sums_to_one(
            raw in proptest::collection::vec((0u8..12, 0u8..6, 0.1f64..5.0), 1..60),
            nodes in 1usize..6,
        ) {
            let m = build_viewpoint_matrix(
                "v",
                raw.iter().map(|&(i, f, w)| (format!("i{i}"), format!("f{f}"), w)),
            ).unwrap();
            let mut proj = Projection::default();
            for (k, id) in m.rows().keys().enumerate() {
                proj.insert(id.clone(), (k * 7 + 3) % nodes, 1.0);
            }
            let w = ClusterWeights::compute(&m, &proj).unwrap();
            for (f, total) in w.feature_totals() {
                let s: f64 = w.by_node.keys().map(|&c| w.weight(c, f) / total).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
            let r = map_recall_precision(&dummy_map(nodes), &m, &proj).unwrap();
            for v in [r.recall, r.precision, r.f_measure] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
