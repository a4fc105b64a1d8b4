//! End-to-end pipeline: ingest, per-viewpoint size scan and training,
//! zoning and the consistency matrix, collected into a self-contained
//! workspace bundle.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::synthetic::{fixture_site_tables, site_shape};
use crate::ingest::{
    generate_synthetic, load_dataset, load_site_table, prepare_sites, DatasetFormat, SyntheticSpec, ViewpointOptions,
};
use crate::intermap::{consistency_matrix, ConsistencyMatrix, MapRef, DEFAULT_THETA};
use crate::quality::{scan_maps, scan_result, ScanResult, DEFAULT_MAX_SIDE, DEFAULT_MIN_SIDE};
use crate::som::{Projection, SomMap, TrainingParams};
use crate::topology::{label_nodes, zone_map, InformationArea};
use crate::viewpoint::{validate_dataset, Dataset};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    Dataset {
        path: PathBuf,
        format: DatasetFormat,
    },
    Sites {
        tables: Vec<PathBuf>,
        #[serde(default = "default_domain_code")]
        domain_code: String,
        #[serde(default = "default_geo_prefix")]
        geo_prefix: String,
        #[serde(default)]
        dedup_links: bool,
    },
    Synthetic {
        spec: SyntheticSpec,
    },
    /// The built-in site fixture with the four-viewpoint shape.
    SiteFixture {
        seed: u64,
        #[serde(default)]
        dedup_links: bool,
    },
}

fn default_domain_code() -> String {
    site_shape::DOMAIN_CODE.to_string()
}

fn default_geo_prefix() -> String {
    site_shape::GEO_PREFIX.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanRange {
    pub min_side: usize,
    pub max_side: usize,
}

impl Default for ScanRange {
    fn default() -> Self {
        ScanRange {
            min_side: DEFAULT_MIN_SIDE,
            max_side: DEFAULT_MAX_SIDE,
        }
    }
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    /// Viewpoints to map; all of the dataset's when absent.
    #[serde(default)]
    pub viewpoints: Option<Vec<String>>,
    #[serde(default)]
    pub scan: ScanRange,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub training: TrainingParams,
}

impl PipelineConfig {
    pub fn new(input: InputSource) -> Self {
        PipelineConfig {
            input,
            viewpoints: None,
            scan: ScanRange::default(),
            seed: 0,
            theta: DEFAULT_THETA,
            training: TrainingParams::default(),
        }
    }

    /// Reads a TOML config; relative input paths resolve against the
    /// config file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: e
                .span()
                .map_or("unknown position".into(), |s| format!("byte offset {}", s.start)),
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.input {
            InputSource::Dataset { path, .. } => resolve(path),
            InputSource::Sites { tables, .. } => tables.iter_mut().for_each(resolve),
            _ => {}
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises to TOML")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub seed: u64,
    pub theta: f64,
    pub scan: ScanRange,
    pub training: TrainingParams,
    pub viewpoints: Vec<String>,
    pub input: InputSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBundle {
    pub map: SomMap,
    pub projection: Projection,
    pub labels: Vec<Option<String>>,
    pub areas: Vec<InformationArea>,
    pub scan: ScanResult,
    pub quantization_error: f64,
}

impl MapBundle {
    pub fn id(&self) -> &str {
        &self.map.viewpoint_id
    }

    pub fn as_ref(&self) -> MapRef<'_> {
        MapRef::new(&self.map.viewpoint_id, self.map.grid, &self.projection).with_areas(&self.areas)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceBundle {
    pub format_version: u32,
    pub metadata: BundleMetadata,
    pub dataset: Dataset,
    pub maps: Vec<MapBundle>,
    pub consistency: ConsistencyMatrix,
}

impl WorkspaceBundle {
    pub fn map(&self, id: &str) -> Option<&MapBundle> {
        self.maps.iter().find(|m| m.id() == id)
    }

    pub fn map_refs(&self) -> Vec<MapRef<'_>> {
        self.maps.iter().map(MapBundle::as_ref).collect()
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: WorkspaceBundle =
            serde_json::from_str(&text).map_err(|e| crate::ingest::formats::json_parse_error(path, &e))?;
        if bundle.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: bundle.format_version,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        Ok(bundle)
    }
}

pub fn load_input(input: &InputSource) -> Result<Dataset> {
    match input {
        InputSource::Dataset { path, format } => load_dataset(path, *format),
        InputSource::Sites {
            tables,
            domain_code,
            geo_prefix,
            dedup_links,
        } => {
            let tables = tables.iter().map(|p| load_site_table(p)).collect::<Result<Vec<_>>>()?;
            prepare_sites(
                &tables,
                domain_code,
                geo_prefix,
                ViewpointOptions {
                    dedup_links: *dedup_links,
                },
            )
        }
        InputSource::Synthetic { spec } => generate_synthetic(spec),
        InputSource::SiteFixture { seed, dedup_links } => prepare_sites(
            &fixture_site_tables(*seed),
            site_shape::DOMAIN_CODE,
            site_shape::GEO_PREFIX,
            ViewpointOptions {
                dedup_links: *dedup_links,
            },
        ),
    }
}

/// Scans, trains, projects and zones one viewpoint of a dataset.
pub fn build_map(
    dataset: &Dataset,
    viewpoint: &str,
    scan: ScanRange,
    params: &TrainingParams,
    seed: u64,
) -> Result<MapBundle> {
    let matrix = dataset
        .viewpoint(viewpoint)
        .ok_or_else(|| Error::UnknownViewpoint(viewpoint.to_string()))?;
    let scanned = scan_maps(matrix, scan.min_side, scan.max_side, params, seed).map_err(|e| e.in_stage("scan"))?;
    let result = scan_result(viewpoint, &scanned).map_err(|e| e.in_stage("scan"))?;
    // the scan trains every size with the same seed, so the chosen entry is
    // exactly the map a fresh training run would produce
    let chosen = scanned
        .into_iter()
        .find(|s| s.side == result.chosen_side)
        .expect("chosen side was scanned");
    let quantization_error = chosen.map.quantization_error(matrix).map_err(|e| e.in_stage("train"))?;
    let labels = label_nodes(&chosen.map, &chosen.projection, matrix).map_err(|e| e.in_stage("zone"))?;
    let areas = zone_map(chosen.map.grid, &labels, &chosen.projection).map_err(|e| e.in_stage("zone"))?;
    Ok(MapBundle {
        map: chosen.map,
        projection: chosen.projection,
        labels,
        areas,
        scan: result,
        quantization_error,
    })
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<WorkspaceBundle> {
    let dataset = load_input(&config.input).map_err(|e| e.in_stage("ingest"))?;
    let report = validate_dataset(&dataset);
    for issue in &report.issues {
        log::warn!("dataset: {issue}");
    }

    let viewpoints: Vec<String> = match &config.viewpoints {
        Some(v) => v.clone(),
        None => dataset.viewpoint_ids().into_iter().map(str::to_string).collect(),
    };
    if let Some(missing) = viewpoints.iter().find(|v| dataset.viewpoint(v).is_none()) {
        return Err(Error::UnknownViewpoint(missing.clone()).in_stage("config"));
    }
    config.training.validate().map_err(|e| e.in_stage("config"))?;
    if !(0.0..=1.0).contains(&config.theta) {
        return Err(Error::OutOfRange(format!("theta {}", config.theta)).in_stage("config"));
    }

    let maps = viewpoints
        .par_iter()
        .map(|v| build_map(&dataset, v, config.scan, &config.training, config.seed))
        .collect::<Result<Vec<_>>>()?;

    let refs: Vec<MapRef> = maps.iter().map(MapBundle::as_ref).collect();
    let consistency = if refs.len() >= 2 {
        consistency_matrix(&refs).map_err(|e| e.in_stage("consistency"))?
    } else {
        ConsistencyMatrix {
            viewpoint_ids: viewpoints.clone(),
            values: vec![vec![1.0]; refs.len()],
        }
    };

    Ok(WorkspaceBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        metadata: BundleMetadata {
            seed: config.seed,
            theta: config.theta,
            scan: config.scan,
            training: config.training.clone(),
            viewpoints,
            input: config.input.clone(),
        },
        dataset,
        maps,
        consistency,
    })
}

/// Runs the pipeline and writes the bundle to `out`.
pub fn run_pipeline_to(config: &PipelineConfig, out: &Path) -> Result<WorkspaceBundle> {
    let bundle = run_pipeline(config)?;
    bundle.save(out).map_err(|e| e.in_stage("persist"))?;
    Ok(bundle)
}

pub fn save_artifacts(bundle: &WorkspaceBundle, path: &Path) -> Result<()> {
    bundle.save(path)
}
