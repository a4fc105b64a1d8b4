//! Activity propagation between maps of different viewpoints.
//!
//! Items are the links between maps: an item projected onto an activated
//! source node carries activity, weighted by its cosine similarity to that
//! source node, to whatever node it occupies on the target map.
//!
//! Two target-side quantities are kept apart:
//!
//! * *activity*: each target node's share of the total carrier similarity
//!   mass. It sums to one over the target map and is what propagation
//!   consistency and chain focus use.
//! * *posterior*: for a target node, the similarity mass of its activated
//!   members over the similarity mass of all its members, both measured
//!   against the members' own source nodes. Members absent from the source
//!   viewpoint have no source node and are left out of both sums.
//!
//! Propagation consistency scores each non-empty source node by
//! `1 / (D + 1)`, where `D` is the mean pairwise grid distance between the
//! target nodes it activates (0 for a single node), and averages the scores.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::som::{Grid, Projection};
use crate::topology::InformationArea;

pub const DEFAULT_THETA: f64 = 0.1;

/// Tag carried by propagated activity. Only the tag differs between
/// modalities; the arithmetic is identical.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Active,
    Inactive,
}

/// A trained map as seen by propagation: its grid, the projection of its
/// viewpoint and (optionally) its zoning.
#[derive(Debug, Clone, Copy)]
pub struct MapRef<'a> {
    pub id: &'a str,
    pub grid: Grid,
    pub projection: &'a Projection,
    pub areas: &'a [InformationArea],
}

impl<'a> MapRef<'a> {
    pub fn new(id: &'a str, grid: Grid, projection: &'a Projection) -> Self {
        MapRef {
            id,
            grid,
            projection,
            areas: &[],
        }
    }

    pub fn with_areas(mut self, areas: &'a [InformationArea]) -> Self {
        self.areas = areas;
        self
    }

    pub fn area(&self, id: usize) -> Result<&'a InformationArea> {
        self.areas
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::UnknownArea {
                map: self.id.to_string(),
                area: id,
            })
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if self.grid.contains(node) {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node,
                nodes: self.grid.node_count(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Nodes(BTreeSet<usize>),
    Area(InformationArea),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub source_map: String,
    pub nodes: BTreeSet<usize>,
    pub modality: Modality,
    pub evidence: String,
}

/// Activates a node set, or every node of an information area, on a map.
pub fn activate(map_id: &str, grid: Grid, selection: &Selection) -> Result<Activation> {
    let nodes = match selection {
        Selection::Nodes(n) => n.clone(),
        Selection::Area(a) => a.nodes.clone(),
    };
    if nodes.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&bad) = nodes.iter().find(|&&n| !grid.contains(n)) {
        return Err(Error::NodeOutOfRange {
            node: bad,
            nodes: grid.node_count(),
        });
    }
    let evidence = format!(
        "{map_id}:{}",
        nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(Activation {
        source_map: map_id.to_string(),
        nodes,
        modality: Modality::Active,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub source_map: String,
    pub target_map: String,
    pub activated_nodes: BTreeSet<usize>,
    pub modality: Modality,
    pub evidence: String,
    /// Normalised activity per target node; only nodes with positive activity.
    pub activity: BTreeMap<usize, f64>,
    /// Posterior per non-empty target node.
    pub posterior: BTreeMap<usize, f64>,
    pub carriers: Vec<String>,
    pub no_carriers: bool,
    /// Every carrier had zero similarity, so carriers were counted instead.
    pub uniform_fallback: bool,
}

impl PropagationResult {
    pub fn activated_targets(&self) -> BTreeSet<usize> {
        self.activity.keys().copied().collect()
    }

    pub fn activity_sum(&self) -> f64 {
        self.activity.values().sum()
    }

    /// Target nodes whose activity reaches `theta`.
    pub fn focus(&self, theta: f64) -> BTreeSet<usize> {
        self.activity
            .iter()
            .filter(|(_, &a)| a >= theta)
            .map(|(&n, _)| n)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosterior {
    pub value: f64,
    /// The denominator was zero; `value` is then defined as 0.
    pub undefined: bool,
}

fn check_universe(source: &MapRef, target: &MapRef) -> Result<()> {
    let shared = source
        .projection
        .iter()
        .any(|(item, _)| target.projection.get(item).is_some());
    if shared || source.projection.is_empty() {
        Ok(())
    } else {
        Err(Error::UniverseMismatch(format!(
            "`{}` and `{}` share no item",
            source.id, target.id
        )))
    }
}

fn check_activation(act: &Activation, source: &MapRef) -> Result<()> {
    if act.source_map != source.id {
        return Err(Error::UniverseMismatch(format!(
            "activation on `{}` used with source map `{}`",
            act.source_map, source.id
        )));
    }
    if act.nodes.is_empty() {
        return Err(Error::EmptySelection);
    }
    act.nodes.iter().try_for_each(|&n| source.check_node(n))
}

/// Similarity mass per target node of the items sitting on `nodes` of the
/// source map, iterated in item order.
fn carrier_mass<'p>(
    nodes: &BTreeSet<usize>,
    source: &'p Projection,
    target: &Projection,
) -> (Vec<&'p str>, BTreeMap<usize, f64>, BTreeMap<usize, usize>) {
    let mut carriers = Vec::new();
    let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
    let mut count: BTreeMap<usize, usize> = BTreeMap::new();
    for (item, src) in source.iter() {
        if !nodes.contains(&src.node) {
            continue;
        }
        let Some(tgt) = target.get(item) else { continue };
        carriers.push(item);
        *mass.entry(tgt.node).or_default() += src.similarity;
        *count.entry(tgt.node).or_default() += 1;
    }
    (carriers, mass, count)
}

fn normalise(mass: BTreeMap<usize, f64>, count: BTreeMap<usize, usize>) -> (BTreeMap<usize, f64>, bool) {
    let total: f64 = mass.values().sum();
    if total > 0.0 {
        let activity = mass
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(n, m)| (n, m / total))
            .collect();
        (activity, false)
    } else {
        let n: usize = count.values().sum();
        let activity = count.into_iter().map(|(node, c)| (node, c as f64 / n as f64)).collect();
        (activity, true)
    }
}

fn posteriors(act: &Activation, source: &MapRef, target: &MapRef) -> BTreeMap<usize, f64> {
    let mut num: BTreeMap<usize, f64> = BTreeMap::new();
    let mut den: BTreeMap<usize, f64> = BTreeMap::new();
    for (item, tgt) in target.projection.iter() {
        let Some(src) = source.projection.get(item) else {
            continue;
        };
        *den.entry(tgt.node).or_default() += src.similarity;
        let n = num.entry(tgt.node).or_default();
        if act.nodes.contains(&src.node) {
            *n += src.similarity;
        }
    }
    den.into_iter()
        .map(|(node, d)| (node, if d > 0.0 { num[&node] / d } else { 0.0 }))
        .collect()
}

/// Posterior probability that target node `node` inherits the activated
/// modality.
pub fn node_posterior(node: usize, act: &Activation, source: &MapRef, target: &MapRef) -> Result<NodePosterior> {
    check_activation(act, source)?;
    target.check_node(node)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (item, tgt) in target.projection.iter() {
        if tgt.node != node {
            continue;
        }
        let Some(src) = source.projection.get(item) else {
            continue;
        };
        den += src.similarity;
        if act.nodes.contains(&src.node) {
            num += src.similarity;
        }
    }
    Ok(if den > 0.0 {
        NodePosterior {
            value: num / den,
            undefined: false,
        }
    } else {
        NodePosterior {
            value: 0.0,
            undefined: true,
        }
    })
}

pub fn propagate(act: &Activation, source: &MapRef, target: &MapRef) -> Result<PropagationResult> {
    check_activation(act, source)?;
    check_universe(source, target)?;
    let (carriers, mass, count) = carrier_mass(&act.nodes, source.projection, target.projection);
    let no_carriers = carriers.is_empty();
    let (activity, uniform_fallback) = if no_carriers {
        (BTreeMap::new(), false)
    } else {
        normalise(mass, count)
    };
    Ok(PropagationResult {
        source_map: source.id.to_string(),
        target_map: target.id.to_string(),
        activated_nodes: act.nodes.clone(),
        modality: act.modality,
        evidence: act.evidence.clone(),
        activity,
        posterior: posteriors(act, source, target),
        carriers: carriers.into_iter().map(str::to_string).collect(),
        no_carriers,
        uniform_fallback,
    })
}

/// Mean pairwise Euclidean distance between grid coordinates; 0 for a
/// single point.
pub fn dispersion(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Err(Error::EmptySelection);
    }
    if n == 1 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            sum += (dx * dx + dy * dy).sqrt();
        }
    }
    Ok(2.0 * sum / (n * (n - 1)) as f64)
}

pub fn grid_points(grid: Grid, nodes: impl IntoIterator<Item = usize>) -> Vec<(f64, f64)> {
    nodes
        .into_iter()
        .map(|n| {
            let (a, b) = grid.coords(n);
            (a as f64, b as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceNodeDetail {
    pub targets: Vec<usize>,
    pub target_coords: Vec<(usize, usize)>,
    pub dispersion: f64,
    pub activity_sum: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub source_map: String,
    pub target_map: String,
    pub pc: f64,
    pub per_source: BTreeMap<usize, SourceNodeDetail>,
    pub counted: BTreeSet<usize>,
    /// Non-empty source nodes none of whose members exist on the target.
    pub excluded: BTreeSet<usize>,
}

/// Focalisation of the activity each non-empty source node sends to the
/// target map, averaged over the source nodes that reach it.
pub fn propagation_consistency(source: &MapRef, target: &MapRef) -> Result<ConsistencyReport> {
    check_universe(source, target)?;
    let nodes: Vec<usize> = source.projection.members().into_keys().collect();
    let details: Vec<(usize, Option<SourceNodeDetail>)> = nodes
        .par_iter()
        .map(|&node| {
            let (carriers, mass, count) = carrier_mass(&BTreeSet::from([node]), source.projection, target.projection);
            if carriers.is_empty() {
                return Ok((node, None));
            }
            let (activity, _) = normalise(mass, count);
            let targets: Vec<usize> = activity.keys().copied().collect();
            let d = dispersion(&grid_points(target.grid, targets.iter().copied()))?;
            Ok((
                node,
                Some(SourceNodeDetail {
                    target_coords: targets.iter().map(|&t| target.grid.coords(t)).collect(),
                    targets,
                    dispersion: d,
                    activity_sum: activity.values().sum(),
                    // normalised activity sums to one by construction
                    term: 1.0 / (d + 1.0),
                }),
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = ConsistencyReport {
        source_map: source.id.to_string(),
        target_map: target.id.to_string(),
        pc: 0.0,
        per_source: BTreeMap::new(),
        counted: BTreeSet::new(),
        excluded: BTreeSet::new(),
    };
    for (node, detail) in details {
        match detail {
            Some(d) => {
                report.counted.insert(node);
                report.per_source.insert(node, d);
            }
            None => {
                report.excluded.insert(node);
            }
        }
    }
    if report.counted.is_empty() {
        return Err(Error::DisjointUniverses {
            source_map: source.id.to_string(),
            target: target.id.to_string(),
        });
    }
    report.pc = report.per_source.values().map(|d| d.term).sum::<f64>() / report.counted.len() as f64;
    Ok(report)
}

/// Square matrix of consistency values, read row (source) toward column
/// (target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMatrix {
    pub viewpoint_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ConsistencyMatrix {
    pub fn get(&self, source: &str, target: &str) -> Option<f64> {
        let i = self.viewpoint_ids.iter().position(|v| v == source)?;
        let j = self.viewpoint_ids.iter().position(|v| v == target)?;
        Some(self.values[i][j])
    }

    /// Delimited table; the corner cell reads `source\target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Parse {
            path: "<consistency matrix>".into(),
            location: "write".into(),
            message: e.to_string(),
        };
        let mut header = vec!["source\\target".to_string()];
        header.extend(self.viewpoint_ids.iter().cloned());
        w.write_record(&header).map_err(to_err)?;
        for (id, row) in self.viewpoint_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<consistency matrix>", e))
    }
}

pub fn consistency_matrix(maps: &[MapRef]) -> Result<ConsistencyMatrix> {
    if maps.len() < 2 {
        return Err(Error::TooFewMaps(maps.len()));
    }
    let pairs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|i| (0..maps.len()).map(move |j| (i, j)))
        .collect();
    let pcs: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| propagation_consistency(&maps[i], &maps[j]).map(|r| r.pc))
        .collect::<Result<_>>()?;
    Ok(ConsistencyMatrix {
        viewpoint_ids: maps.iter().map(|m| m.id.to_string()).collect(),
        values: pcs.chunks(maps.len()).map(<[f64]>::to_vec).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSource {
    Nodes(BTreeSet<usize>),
    Area(usize),
    /// Target nodes of the previous step with activity at or above theta.
    Focus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub source_map: String,
    pub source: StepSource,
    pub target_map: String,
}

fn find_map<'a, 'b>(maps: &'b [MapRef<'a>], id: &str) -> Result<&'b MapRef<'a>> {
    maps.iter()
        .find(|m| m.id == id)
        .ok_or_else(|| Error::UnknownMap(id.to_string()))
}

/// Runs propagation steps in order; a `Focus` step starts from the focus of
/// the step before it.
pub fn chain_propagation(steps: &[ChainStep], maps: &[MapRef], theta: f64) -> Result<Vec<PropagationResult>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::OutOfRange(format!("theta {theta} not in [0,1]")));
    }
    let mut results: Vec<PropagationResult> = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let step_no = i + 1;
        let at_step = |e: Error| Error::ChainStep {
            step: step_no,
            reason: e.to_string(),
        };
        let source = find_map(maps, &step.source_map).map_err(at_step)?;
        let target = find_map(maps, &step.target_map).map_err(at_step)?;
        let selection = match &step.source {
            StepSource::Nodes(n) => Selection::Nodes(n.clone()),
            StepSource::Area(a) => Selection::Area(source.area(*a).map_err(at_step)?.clone()),
            StepSource::Focus => {
                let prev = results.last().ok_or_else(|| Error::ChainStep {
                    step: step_no,
                    reason: "no previous step to take a focus from".into(),
                })?;
                if prev.target_map != step.source_map {
                    return Err(Error::ChainStep {
                        step: step_no,
                        reason: format!(
                            "focus lives on `{}`, step starts from `{}`",
                            prev.target_map, step.source_map
                        ),
                    });
                }
                let focus = prev.focus(theta);
                if focus.is_empty() {
                    return Err(Error::ChainStep {
                        step: step_no,
                        reason: format!("empty focus at theta {theta}"),
                    });
                }
                Selection::Nodes(focus)
            }
        };
        let act = activate(source.id, source.grid, &selection).map_err(at_step)?;
        results.push(propagate(&act, source, target).map_err(at_step)?);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj(entries: &[(&str, usize, f64)]) -> Projection {
        let mut p = Projection::default();
        for &(item, node, sim) in entries {
            p.insert(item, node, sim);
        }
        p
    }

    fn nodes(n: &[usize]) -> BTreeSet<usize> {
        n.iter().copied().collect()
    }

    #[test]
    fn activate_examples() {
        let grid = Grid::new(3, 3).unwrap();
        let a = activate("m", grid, &Selection::Nodes(nodes(&[5]))).unwrap();
        assert_eq!(a.nodes, nodes(&[5]));
        assert_eq!(a.modality, Modality::Active);
        let area = InformationArea {
            id: 0,
            label: "x".into(),
            nodes: nodes(&[1, 2, 5]),
            members: BTreeSet::new(),
        };
        let a = activate("m", grid, &Selection::Area(area)).unwrap();
        assert_eq!(a.nodes, nodes(&[1, 2, 5]));
        assert!(matches!(
            activate("m", grid, &Selection::Nodes(nodes(&[9]))),
            Err(Error::NodeOutOfRange { node: 9, .. })
        ));
        assert!(matches!(
            activate("m", grid, &Selection::Nodes(BTreeSet::new())),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn all_carriers_on_one_target() {
        let grid = Grid::new(2, 2).unwrap();
        let s = proj(&[("a", 0, 0.5), ("b", 0, 0.9), ("c", 1, 1.0)]);
        let t = proj(&[("a", 3, 1.0), ("b", 3, 1.0), ("c", 0, 1.0)]);
        let (src, tgt) = (MapRef::new("s", grid, &s), MapRef::new("t", grid, &t));
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let r = propagate(&act, &src, &tgt).unwrap();
        assert_eq!(r.activity, BTreeMap::from([(3, 1.0)]));
        assert_eq!(r.carriers, vec!["a", "b"]);
    }

    #[test]
    fn activity_is_similarity_share() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 0.8), ("b", 0, 0.2)]);
        let t = proj(&[("a", 0, 1.0), ("b", 1, 1.0)]);
        let (src, tgt) = (MapRef::new("s", grid, &s), MapRef::new("t", grid, &t));
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let r = propagate(&act, &src, &tgt).unwrap();
        assert!((r.activity[&0] - 0.8).abs() < 1e-15);
        assert!((r.activity[&1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn self_propagation_returns_to_activated_nodes() {
        let grid = Grid::new(3, 1).unwrap();
        let s = proj(&[("a", 0, 0.3), ("b", 1, 0.6), ("c", 2, 0.9)]);
        let m = MapRef::new("m", grid, &s);
        let act = activate("m", grid, &Selection::Nodes(nodes(&[0, 2]))).unwrap();
        let r = propagate(&act, &m, &m).unwrap();
        assert_eq!(r.activated_targets(), nodes(&[0, 2]));
        assert!((r.activity_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_carriers_are_flagged() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 1.0), ("b", 1, 1.0)]);
        let t = proj(&[("b", 1, 1.0)]);
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let r = propagate(&act, &MapRef::new("s", grid, &s), &MapRef::new("t", grid, &t)).unwrap();
        assert!(r.no_carriers);
        assert!(r.activity.is_empty());
    }

    #[test]
    fn disjoint_projections_are_rejected() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 1.0)]);
        let t = proj(&[("z", 0, 1.0)]);
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let (src, tgt) = (MapRef::new("s", grid, &s), MapRef::new("t", grid, &t));
        assert!(matches!(propagate(&act, &src, &tgt), Err(Error::UniverseMismatch(_))));
        assert!(propagation_consistency(&src, &tgt).is_err());
    }

    #[test]
    fn zero_similarity_carriers_fall_back_to_counts() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 0.0), ("b", 0, 0.0), ("c", 0, 0.0)]);
        let t = proj(&[("a", 0, 1.0), ("b", 1, 1.0), ("c", 1, 1.0)]);
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let r = propagate(&act, &MapRef::new("s", grid, &s), &MapRef::new("t", grid, &t)).unwrap();
        assert!(r.uniform_fallback);
        assert!((r.activity[&1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_examples() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 0.8), ("b", 1, 0.2), ("c", 1, 0.5)]);
        let t = proj(&[("a", 0, 1.0), ("b", 0, 1.0), ("c", 1, 1.0)]);
        let (src, tgt) = (MapRef::new("s", grid, &s), MapRef::new("t", grid, &t));
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let p = node_posterior(0, &act, &src, &tgt).unwrap();
        assert!((p.value - 0.8).abs() < 1e-15 && !p.undefined);
        assert_eq!(node_posterior(1, &act, &src, &tgt).unwrap().value, 0.0);

        let all = activate("s", grid, &Selection::Nodes(nodes(&[0, 1]))).unwrap();
        assert_eq!(node_posterior(0, &all, &src, &tgt).unwrap().value, 1.0);

        let r = propagate(&act, &src, &tgt).unwrap();
        assert_eq!(r.posterior[&0], node_posterior(0, &act, &src, &tgt).unwrap().value);
    }

    #[test]
    fn empty_target_node_posterior_is_flagged() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 1.0)]);
        let t = proj(&[("a", 0, 1.0)]);
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        let p = node_posterior(1, &act, &MapRef::new("s", grid, &s), &MapRef::new("t", grid, &t)).unwrap();
        assert_eq!(
            p,
            NodePosterior {
                value: 0.0,
                undefined: true
            }
        );
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(&[(2.0, 3.0)]).unwrap(), 0.0);
        assert_eq!(dispersion(&[(0.0, 0.0), (3.0, 4.0)]).unwrap(), 5.0);
        let d = dispersion(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert!((d - 1.13807).abs() < 1e-5);
        assert!(dispersion(&[]).is_err());
    }

    #[test]
    fn hand_laid_consistency() {
        // source 0 -> {a,b} lands on target {0,2}: D = 2, term 1/3
        // source 1 -> {c} lands on {1}, source 2 -> {d} lands on {1}: terms 1
        let grid = Grid::new(3, 1).unwrap();
        let s = proj(&[("a", 0, 0.9), ("b", 0, 0.4), ("c", 1, 1.0), ("d", 2, 0.7)]);
        let t = proj(&[("a", 0, 1.0), ("b", 2, 1.0), ("c", 1, 1.0), ("d", 1, 1.0)]);
        let r = propagation_consistency(&MapRef::new("s", grid, &s), &MapRef::new("t", grid, &t)).unwrap();
        assert!((r.pc - 7.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.per_source[&0].dispersion, 2.0);
        assert_eq!(r.counted, nodes(&[0, 1, 2]));
    }

    #[test]
    fn uncovered_source_nodes_are_excluded() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 1.0), ("b", 1, 1.0)]);
        let t = proj(&[("a", 1, 1.0)]);
        let r = propagation_consistency(&MapRef::new("s", grid, &s), &MapRef::new("t", grid, &t)).unwrap();
        assert_eq!(r.excluded, nodes(&[1]));
        assert_eq!(r.pc, 1.0);
    }

    #[test]
    fn matrix_needs_two_maps_and_has_unit_diagonal() {
        let grid = Grid::new(2, 2).unwrap();
        let p = proj(&[("a", 0, 1.0), ("b", 3, 0.5), ("c", 1, 0.2)]);
        let q = proj(&[("a", 0, 1.0), ("b", 0, 0.5), ("c", 3, 0.2)]);
        let m = MapRef::new("m", grid, &p);
        let n = MapRef::new("n", grid, &q);
        assert!(matches!(consistency_matrix(&[m]), Err(Error::TooFewMaps(1))));
        let cm = consistency_matrix(&[m, n]).unwrap();
        assert_eq!(cm.values[0][0], 1.0);
        assert_eq!(cm.values[1][1], 1.0);
        assert_eq!(cm.get("m", "n"), Some(cm.values[0][1]));
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("source\\target,m,n\n"));
    }

    #[test]
    fn chain_single_step_equals_propagate() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 0.8), ("b", 0, 0.2)]);
        let t = proj(&[("a", 0, 1.0), ("b", 1, 1.0)]);
        let maps = [MapRef::new("s", grid, &s), MapRef::new("t", grid, &t)];
        let step = ChainStep {
            source_map: "s".into(),
            source: StepSource::Nodes(nodes(&[0])),
            target_map: "t".into(),
        };
        let chain = chain_propagation(&[step], &maps, DEFAULT_THETA).unwrap();
        let act = activate("s", grid, &Selection::Nodes(nodes(&[0]))).unwrap();
        assert_eq!(chain, vec![propagate(&act, &maps[0], &maps[1]).unwrap()]);
    }

    #[test]
    fn chain_errors_name_the_step() {
        let grid = Grid::new(2, 1).unwrap();
        let s = proj(&[("a", 0, 0.8), ("b", 0, 0.2)]);
        let t = proj(&[("a", 0, 1.0), ("b", 1, 1.0)]);
        let maps = [MapRef::new("s", grid, &s), MapRef::new("t", grid, &t)];
        let steps = [
            ChainStep {
                source_map: "s".into(),
                source: StepSource::Nodes(nodes(&[0])),
                target_map: "t".into(),
            },
            ChainStep {
                source_map: "t".into(),
                source: StepSource::Focus,
                target_map: "s".into(),
            },
        ];
        assert!(matches!(
            chain_propagation(&steps, &maps, 1.0),
            Err(Error::ChainStep { step: 2, .. })
        ));
        let ok = chain_propagation(&steps, &maps, 0.5).unwrap();
        assert_eq!(ok[1].activated_nodes, nodes(&[0]));
        assert!(matches!(
            chain_propagation(&steps[1..], &maps, 0.5),
            Err(Error::ChainStep { step: 1, .. })
        ));
    }
}
