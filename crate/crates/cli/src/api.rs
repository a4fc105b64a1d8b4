//! Read-only queries over a workspace bundle. The HTTP service and the
//! command line both answer through [`Api`], so a query returns the same
//! payload whichever way it is asked.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use mvsom::intermap::{Activation, ChainStep, ConsistencyMatrix, ConsistencyReport, Selection};
use mvsom::pipeline::{BundleMetadata, MapBundle};
use mvsom::quality::ScanResult;
use mvsom::topology::{zoning_export, ZoningExport};
use mvsom::{activate, chain_propagation, propagate, propagation_consistency, PropagationResult, WorkspaceBundle};
use serde::{Deserialize, Serialize};

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApiError::NotFound(m) => write!(f, "not found: {m}"),
            ApiError::BadRequest(m) => write!(f, "bad request: {m}"),
        }
    }
}

impl std::error::Error for ApiError {}

impl From<mvsom::Error> for ApiError {
    fn from(e: mvsom::Error) -> Self {
        match e {
            mvsom::Error::UnknownMap(_) | mvsom::Error::UnknownArea { .. } => ApiError::NotFound(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}

impl From<&ApiError> for ErrorBody {
    fn from(e: &ApiError) -> Self {
        let kind = match e {
            ApiError::NotFound(_) => "not_found",
            ApiError::BadRequest(_) => "bad_request",
        };
        ErrorBody {
            error: e.to_string(),
            kind: kind.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub items: usize,
    pub non_empty_nodes: usize,
    pub areas: usize,
    pub quantization_error: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub node: usize,
    pub x: usize,
    pub y: usize,
    pub label: Option<String>,
    pub area: Option<usize>,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDetail {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub quantization_error: f64,
    pub nodes: Vec<NodeInfo>,
    pub zoning: ZoningExport,
    pub scan: ScanResult,
}

/// One propagation query. Exactly one of `nodes` and `area` selects the
/// source activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateRequest {
    pub source_map: String,
    pub target_map: String,
    #[serde(default)]
    pub nodes: Option<BTreeSet<usize>>,
    #[serde(default)]
    pub area: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetNode {
    pub node: usize,
    pub x: usize,
    pub y: usize,
    pub activity: f64,
    pub posterior: f64,
    pub carriers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagateResponse {
    pub result: PropagationResult,
    pub theta: f64,
    /// Target nodes with activity at or above `theta`.
    pub focus: Vec<usize>,
    /// Every target node that received activity or has a defined posterior.
    pub nodes: Vec<TargetNode>,
    pub activity_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRequest {
    pub steps: Vec<ChainStep>,
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResponse {
    pub theta: f64,
    pub steps: Vec<PropagateResponse>,
}

#[derive(Debug, Clone)]
pub struct Api {
    bundle: Arc<WorkspaceBundle>,
}

impl Api {
    pub fn new(bundle: WorkspaceBundle) -> Self {
        Api {
            bundle: Arc::new(bundle),
        }
    }

    pub fn bundle(&self) -> &WorkspaceBundle {
        &self.bundle
    }

    fn map(&self, id: &str) -> Result<&MapBundle, ApiError> {
        self.bundle
            .map(id)
            .ok_or_else(|| ApiError::NotFound(format!("map `{id}`")))
    }

    fn theta(&self, theta: Option<f64>) -> Result<f64, ApiError> {
        let t = theta.unwrap_or(self.bundle.metadata.theta);
        if (0.0..=1.0).contains(&t) {
            Ok(t)
        } else {
            Err(ApiError::BadRequest(format!("theta {t} not in [0,1]")))
        }
    }

    pub fn metadata(&self) -> &BundleMetadata {
        &self.bundle.metadata
    }

    pub fn list_maps(&self) -> Vec<MapSummary> {
        self.bundle
            .maps
            .iter()
            .map(|m| MapSummary {
                id: m.id().to_string(),
                width: m.map.grid.width,
                height: m.map.grid.height,
                items: m.projection.len(),
                non_empty_nodes: m.projection.non_empty_nodes(),
                areas: m.areas.len(),
                quantization_error: m.quantization_error,
                f_measure: m.scan.chosen().quality.f_measure,
            })
            .collect()
    }

    pub fn map_detail(&self, id: &str) -> Result<MapDetail, ApiError> {
        let m = self.map(id)?;
        let matrix = self
            .bundle
            .dataset
            .viewpoint(id)
            .ok_or_else(|| ApiError::NotFound(format!("viewpoint `{id}` in dataset")))?;
        let grid = m.map.grid;
        let area_of = mvsom::topology::area_index(grid, &m.areas);
        let members = m.projection.members();
        let nodes = (0..grid.node_count())
            .map(|n| {
                let (x, y) = grid.coords(n);
                NodeInfo {
                    node: n,
                    x,
                    y,
                    label: m.labels[n].clone(),
                    area: area_of[n],
                    members: members
                        .get(&n)
                        .map(|v| v.iter().map(|s| s.to_string()).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        Ok(MapDetail {
            id: id.to_string(),
            width: grid.width,
            height: grid.height,
            quantization_error: m.quantization_error,
            nodes,
            zoning: zoning_export(&m.map, matrix, &m.projection, &m.areas)?,
            scan: m.scan.clone(),
        })
    }

    pub fn consistency(&self) -> &ConsistencyMatrix {
        &self.bundle.consistency
    }

    pub fn consistency_detail(&self, source: &str, target: &str) -> Result<ConsistencyReport, ApiError> {
        let s = self.map(source)?;
        let t = self.map(target)?;
        Ok(propagation_consistency(&s.as_ref(), &t.as_ref())?)
    }

    fn describe(&self, result: PropagationResult, theta: f64) -> Result<PropagateResponse, ApiError> {
        let target = self.map(&result.target_map)?;
        let grid = target.map.grid;
        let carriers: BTreeSet<&str> = result.carriers.iter().map(String::as_str).collect();
        let mut by_node: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (item, a) in target.projection.iter() {
            if carriers.contains(item) {
                by_node.entry(a.node).or_default().push(item.to_string());
            }
        }
        let touched: BTreeSet<usize> = result.activity.keys().chain(result.posterior.keys()).copied().collect();
        let nodes = touched
            .into_iter()
            .map(|n| {
                let (x, y) = grid.coords(n);
                TargetNode {
                    node: n,
                    x,
                    y,
                    activity: result.activity.get(&n).copied().unwrap_or(0.0),
                    posterior: result.posterior.get(&n).copied().unwrap_or(0.0),
                    carriers: by_node.remove(&n).unwrap_or_default(),
                }
            })
            .collect();
        Ok(PropagateResponse {
            focus: result.focus(theta).into_iter().collect(),
            activity_total: result.activity_sum(),
            nodes,
            theta,
            result,
        })
    }

    pub fn propagate(&self, req: &PropagateRequest) -> Result<PropagateResponse, ApiError> {
        let theta = self.theta(req.theta)?;
        let source = self.map(&req.source_map)?.as_ref();
        let target = self.map(&req.target_map)?.as_ref();
        let selection = match (&req.nodes, req.area) {
            (Some(nodes), None) => Selection::Nodes(nodes.clone()),
            (None, Some(area)) => Selection::Area(source.area(area)?.clone()),
            _ => return Err(ApiError::BadRequest("give exactly one of `nodes` and `area`".into())),
        };
        let act: Activation = activate(source.id, source.grid, &selection)?;
        let result = propagate(&act, &source, &target)?;
        self.describe(result, theta)
    }

    pub fn chain(&self, req: &ChainRequest) -> Result<ChainResponse, ApiError> {
        let theta = self.theta(req.theta)?;
        if req.steps.is_empty() {
            return Err(ApiError::BadRequest("chain has no steps".into()));
        }
        let refs = self.bundle.map_refs();
        let results = chain_propagation(&req.steps, &refs, theta).map_err(|e| match e {
            // unknown maps inside a step are still a client error, reported with the step
            e @ mvsom::Error::ChainStep { .. } => ApiError::BadRequest(e.to_string()),
            other => other.into(),
        })?;
        Ok(ChainResponse {
            theta,
            steps: results
                .into_iter()
                .map(|r| self.describe(r, theta))
                .collect::<Result<_, _>>()?,
        })
    }
}
