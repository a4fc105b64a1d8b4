//! Node labelling and zoning of a map into information areas.
//!
//! A node's label is the feature with the largest summed weight over its
//! member rows. Areas are the 4-connected components of equally labelled
//! nodes; empty nodes carry no label and belong to no area.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterWeights;
use crate::error::{Error, Result};
use crate::som::{Grid, Projection, SomMap};
use crate::viewpoint::ViewpointMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationArea {
    pub id: usize,
    pub label: String,
    pub nodes: BTreeSet<usize>,
    pub members: BTreeSet<String>,
}

/// Features of one node ranked by summed member weight, heaviest first,
/// ties by name.
pub fn node_feature_ranking(weights: &ClusterWeights, matrix: &ViewpointMatrix, node: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = weights
        .by_node
        .get(&node)
        .into_iter()
        .flatten()
        .filter(|(_, &w)| w > 0.0)
        .map(|(&f, &w)| (matrix.features()[f].clone(), w))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn dominant_label(
    map: &SomMap,
    proj: &Projection,
    matrix: &ViewpointMatrix,
    node: usize,
) -> Result<Option<String>> {
    if !map.grid.contains(node) {
        return Err(Error::NodeOutOfRange {
            node,
            nodes: map.node_count(),
        });
    }
    let weights = ClusterWeights::compute(matrix, proj)?;
    Ok(node_feature_ranking(&weights, matrix, node)
        .into_iter()
        .next()
        .map(|(f, _)| f))
}

/// Dominant label of every node, `None` for empty nodes.
pub fn label_nodes(map: &SomMap, proj: &Projection, matrix: &ViewpointMatrix) -> Result<Vec<Option<String>>> {
    let weights = ClusterWeights::compute(matrix, proj)?;
    Ok((0..map.node_count())
        .map(|n| {
            node_feature_ranking(&weights, matrix, n)
                .into_iter()
                .next()
                .map(|(f, _)| f)
        })
        .collect())
}

/// Connected components of equally labelled nodes. Area ids follow the
/// smallest node index each area contains.
pub fn zone_map(grid: Grid, labels: &[Option<String>], proj: &Projection) -> Result<Vec<InformationArea>> {
    if labels.len() != grid.node_count() {
        return Err(Error::InvalidGrid {
            width: grid.width,
            height: grid.height,
            reason: format!("{} labels for {} nodes", labels.len(), grid.node_count()),
        });
    }
    let members = proj.members();
    let mut area_of: Vec<Option<usize>> = vec![None; labels.len()];
    let mut areas = Vec::new();
    for start in 0..labels.len() {
        let Some(label) = &labels[start] else { continue };
        if area_of[start].is_some() {
            continue;
        }
        let id = areas.len();
        let mut nodes = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        area_of[start] = Some(id);
        while let Some(n) = queue.pop_front() {
            nodes.insert(n);
            for m in grid.neighbors4(n) {
                if area_of[m].is_none() && labels[m].as_ref() == Some(label) {
                    area_of[m] = Some(id);
                    queue.push_back(m);
                }
            }
        }
        let member_ids = nodes
            .iter()
            .filter_map(|n| members.get(n))
            .flatten()
            .map(|s| s.to_string())
            .collect();
        areas.push(InformationArea {
            id,
            label: label.clone(),
            nodes,
            members: member_ids,
        });
    }
    Ok(areas)
}

/// Area id per node, for rendering.
pub fn area_index(grid: Grid, areas: &[InformationArea]) -> Vec<Option<usize>> {
    let mut out = vec![None; grid.node_count()];
    for a in areas {
        for &n in &a.nodes {
            out[n] = Some(a.id);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaExport {
    pub id: usize,
    pub label: String,
    pub nodes: Vec<(usize, usize)>,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoningExport {
    pub map_id: String,
    pub width: usize,
    pub height: usize,
    pub areas: Vec<AreaExport>,
    /// Full per-node feature ranking, keyed by node index.
    pub rankings: BTreeMap<usize, Vec<(String, f64)>>,
}

pub fn zoning_export(
    map: &SomMap,
    matrix: &ViewpointMatrix,
    proj: &Projection,
    areas: &[InformationArea],
) -> Result<ZoningExport> {
    let weights = ClusterWeights::compute(matrix, proj)?;
    Ok(ZoningExport {
        map_id: map.viewpoint_id.clone(),
        width: map.grid.width,
        height: map.grid.height,
        areas: areas
            .iter()
            .map(|a| AreaExport {
                id: a.id,
                label: a.label.clone(),
                nodes: a.nodes.iter().map(|&n| map.grid.coords(n)).collect(),
                members: a.members.iter().cloned().collect(),
            })
            .collect(),
        rankings: weights
            .by_node
            .keys()
            .map(|&n| (n, node_feature_ranking(&weights, matrix, n)))
            .collect(),
    })
}
