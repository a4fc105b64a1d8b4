//! Square-lattice self-organizing map: training, best-matching units and
//! projection of a viewpoint's rows onto the grid.
//!
//! Training follows the classic two-phase online schedule: a short ordering
//! phase with a wide neighborhood and a high learning rate, then a longer
//! tuning phase that shrinks the neighborhood to the winner alone. Both
//! learning rate and radius decay linearly inside each phase and the
//! neighborhood is Gaussian in grid distance.
//!
//! Randomness comes from a ChaCha8 generator seeded with `seed_from_u64`.
//! It is used to shuffle the rows that seed the codebooks and to draw one
//! training row (uniformly, with replacement) per iteration, in that order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::viewpoint::{cosine_sparse_dense, SparseVector, ViewpointMatrix};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rectangular grid geometry. Node `k` sits at `(k % width, k / width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let err = |reason: &str| Error::InvalidGrid {
            width,
            height,
            reason: reason.to_string(),
        };
        if width == 0 || height == 0 {
            return Err(err("dimensions must be positive"));
        }
        width.checked_mul(height).ok_or_else(|| err("node count overflows"))?;
        Ok(Grid { width, height })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        b * self.width + a
    }

    pub fn contains(&self, node: usize) -> bool {
        node < self.node_count()
    }

    pub fn grid_distance_sq(&self, n1: usize, n2: usize) -> f64 {
        let (a1, b1) = self.coords(n1);
        let (a2, b2) = self.coords(n2);
        let da = a1 as f64 - a2 as f64;
        let db = b1 as f64 - b2 as f64;
        da * da + db * db
    }

    /// 4-neighborhood of a node, in ascending index order.
    pub fn neighbors4(&self, node: usize) -> impl Iterator<Item = usize> {
        let (a, b) = self.coords(node);
        let (w, h) = (self.width, self.height);
        [
            (b > 0).then(|| node - w),
            (a > 0).then(|| node - 1),
            (a + 1 < w).then(|| node + 1),
            (b + 1 < h).then(|| node + w),
        ]
        .into_iter()
        .flatten()
    }
}

/// Schedule for one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Iterations in this phase, per grid node.
    pub iterations_per_node: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Starting radius; `None` means `max(width, height) / 2`.
    pub radius_start: Option<f64>,
    pub radius_end: f64,
}

impl PhaseParams {
    pub fn iterations(&self, grid: Grid) -> usize {
        self.iterations_per_node.saturating_mul(grid.node_count())
    }

    fn resolved_radius_start(&self, grid: Grid) -> f64 {
        self.radius_start
            .unwrap_or(grid.width.max(grid.height) as f64 / 2.0)
            .max(self.radius_end)
    }

    fn validate(&self, phase: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(format!("{phase} phase: {msg}")));
        if self.iterations_per_node == 0 {
            return bad("iterations must be positive".into());
        }
        for a in [self.alpha_start, self.alpha_end] {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("learning rate {a} outside (0,1)"));
            }
        }
        if self.alpha_start <= self.alpha_end {
            return bad("learning rate must decay".into());
        }
        if !(self.radius_end >= 0.0 && self.radius_end.is_finite()) {
            return bad(format!("radius {} must be non-negative", self.radius_end));
        }
        if let Some(r) = self.radius_start {
            if !(r.is_finite() && r >= self.radius_end) {
                return bad(format!("radius must not grow ({r} -> {})", self.radius_end));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub ordering: PhaseParams,
    pub tuning: PhaseParams,
    /// Scale every row to unit norm before training and projection.
    #[serde(default)]
    pub normalize_rows: bool,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            ordering: PhaseParams {
                iterations_per_node: 20,
                alpha_start: 0.5,
                alpha_end: 0.05,
                radius_start: None,
                radius_end: 1.0,
            },
            tuning: PhaseParams {
                iterations_per_node: 50,
                alpha_start: 0.05,
                alpha_end: 0.01,
                radius_start: Some(1.0),
                radius_end: 0.0,
            },
            normalize_rows: false,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        self.ordering.validate("ordering")?;
        self.tuning.validate("tuning")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomMap {
    pub viewpoint_id: String,
    pub grid: Grid,
    pub dimension: usize,
    pub params: TrainingParams,
    pub seed: u64,
    /// One dense vector per node, row-major over the grid.
    pub codebooks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub node: usize,
    pub similarity: f64,
}

/// Per-item node assignment, keyed by item id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Projection {
    pub assignments: BTreeMap<String, Assignment>,
}

impl Projection {
    pub fn get(&self, item: &str) -> Option<&Assignment> {
        self.assignments.get(item)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn insert(&mut self, item: impl Into<String>, node: usize, similarity: f64) {
        self.assignments.insert(item.into(), Assignment { node, similarity });
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Assignment)> {
        self.assignments.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Item ids grouped by node, each list in ascending id order.
    pub fn members(&self) -> BTreeMap<usize, Vec<&str>> {
        let mut out: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (item, a) in self.iter() {
            out.entry(a.node).or_default().push(item);
        }
        out
    }

    pub fn non_empty_nodes(&self) -> usize {
        self.members().len()
    }
}

fn squared_distance(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn nearest(codebooks: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in codebooks.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn prepared_rows(matrix: &ViewpointMatrix, normalize: bool) -> Result<Vec<(&str, SparseVector)>> {
    matrix
        .rows()
        .iter()
        .map(|(id, row)| {
            let row = if normalize { row.normalized()? } else { row.clone() };
            Ok((id.as_str(), row))
        })
        .collect()
}

fn linear(start: f64, end: f64, t: usize, total: usize) -> f64 {
    if total <= 1 {
        return start;
    }
    start + (end - start) * (t as f64 / (total - 1) as f64)
}

fn neighborhood(dist_sq: f64, radius: f64) -> f64 {
    if radius > 0.0 {
        (-dist_sq / (2.0 * radius * radius)).exp()
    } else if dist_sq == 0.0 {
        1.0
    } else {
        0.0
    }
}

impl SomMap {
    /// Seeds the codebooks with copies of data rows, drawn without
    /// replacement from a shuffled order and cycling when the grid has more
    /// nodes than there are rows.
    pub fn initialize(
        matrix: &ViewpointMatrix,
        width: usize,
        height: usize,
        params: &TrainingParams,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (map, _) = Self::initialize_with(matrix, width, height, params, seed, &mut rng)?;
        Ok(map)
    }

    fn initialize_with(
        matrix: &ViewpointMatrix,
        width: usize,
        height: usize,
        params: &TrainingParams,
        seed: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Self, Vec<Vec<f64>>)> {
        params.validate()?;
        let grid = Grid::new(width, height)?;
        let dim = matrix.dimension();
        grid.node_count().checked_mul(dim).ok_or_else(|| Error::InvalidGrid {
            width,
            height,
            reason: format!("codebook storage overflows for dimension {dim}"),
        })?;
        if matrix.row_count() == 0 || dim == 0 {
            return Err(Error::EmptyMatrix);
        }
        let rows = prepared_rows(matrix, params.normalize_rows)?;
        let dense: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.to_dense(dim)).collect();

        let mut order: Vec<usize> = (0..dense.len()).collect();
        order.shuffle(rng);
        let codebooks = (0..grid.node_count())
            .map(|k| dense[order[k % order.len()]].clone())
            .collect();
        let map = SomMap {
            viewpoint_id: matrix.id().to_string(),
            grid,
            dimension: dim,
            params: params.clone(),
            seed,
            codebooks,
        };
        Ok((map, dense))
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    fn run_phase(&mut self, phase: &PhaseParams, rows: &[Vec<f64>], rng: &mut ChaCha8Rng) {
        let grid = self.grid;
        let total = phase.iterations(grid);
        let r0 = phase.resolved_radius_start(grid);
        for t in 0..total {
            let alpha = linear(phase.alpha_start, phase.alpha_end, t, total);
            let radius = linear(r0, phase.radius_end, t, total);
            let x = &rows[rng.gen_range(0..rows.len())];
            let bmu = nearest(&self.codebooks, x);
            for (k, codebook) in self.codebooks.iter_mut().enumerate() {
                let h = neighborhood(grid.grid_distance_sq(k, bmu), radius);
                if h == 0.0 {
                    continue;
                }
                let rate = alpha * h;
                for (c, xi) in codebook.iter_mut().zip(x) {
                    *c += rate * (xi - *c);
                }
            }
        }
    }

    /// Index of the codebook nearest to `v` in Euclidean distance; ties go to
    /// the lowest index.
    pub fn best_matching_unit(&self, v: &SparseVector) -> Result<usize> {
        if v.min_dimension() > self.dimension {
            return Err(Error::FeatureSpaceMismatch(format!(
                "vector needs dimension {}, map has {}",
                v.min_dimension(),
                self.dimension
            )));
        }
        Ok(nearest(&self.codebooks, &v.to_dense(self.dimension)))
    }

    fn check_matrix(&self, matrix: &ViewpointMatrix) -> Result<()> {
        if matrix.dimension() != self.dimension || matrix.id() != self.viewpoint_id {
            return Err(Error::FeatureSpaceMismatch(format!(
                "map `{}` has dimension {}, matrix `{}` has {}",
                self.viewpoint_id,
                self.dimension,
                matrix.id(),
                matrix.dimension()
            )));
        }
        Ok(())
    }

    pub fn project(&self, matrix: &ViewpointMatrix) -> Result<Projection> {
        self.check_matrix(matrix)?;
        let mut proj = Projection::default();
        let mut buf = vec![0.0; self.dimension];
        for (id, row) in prepared_rows(matrix, self.params.normalize_rows)? {
            row.densify_into(&mut buf);
            let node = nearest(&self.codebooks, &buf);
            let similarity = cosine_sparse_dense(&row, &self.codebooks[node]);
            proj.insert(id, node, similarity);
        }
        Ok(proj)
    }

    pub fn quantization_error(&self, matrix: &ViewpointMatrix) -> Result<f64> {
        self.check_matrix(matrix)?;
        if matrix.row_count() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut buf = vec![0.0; self.dimension];
        let mut total = 0.0;
        let rows = prepared_rows(matrix, self.params.normalize_rows)?;
        for (_, row) in &rows {
            row.densify_into(&mut buf);
            let node = nearest(&self.codebooks, &buf);
            total += squared_distance(&buf, &self.codebooks[node]).sqrt();
        }
        Ok(total / rows.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            map: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let map = file.map;
        if map.codebooks.len() != map.grid.node_count()
            || map.codebooks.iter().any(|c| c.len() != map.dimension)
            || map.codebooks.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(Error::InvalidGrid {
                width: map.grid.width,
                height: map.grid.height,
                reason: "codebooks do not match grid and dimension".into(),
            });
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => crate::ingest::formats::json_parse_error(path, &j),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    map: SomMap,
}

/// Trains a map on one viewpoint. Identical inputs and seed give
/// bit-identical codebooks.
pub fn train_som(
    matrix: &ViewpointMatrix,
    width: usize,
    height: usize,
    params: &TrainingParams,
    seed: u64,
) -> Result<SomMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut map, rows) = SomMap::initialize_with(matrix, width, height, params, seed, &mut rng)?;
    map.run_phase(&params.ordering, &rows, &mut rng);
    map.run_phase(&params.tuning, &rows, &mut rng);
    Ok(map)
}

pub fn best_matching_unit(map: &SomMap, v: &SparseVector) -> Result<usize> {
    map.best_matching_unit(v)
}

pub fn project_data(map: &SomMap, matrix: &ViewpointMatrix) -> Result<Projection> {
    map.project(matrix)
}

pub fn quantization_error(map: &SomMap, matrix: &ViewpointMatrix) -> Result<f64> {
    map.quantization_error(matrix)
}
