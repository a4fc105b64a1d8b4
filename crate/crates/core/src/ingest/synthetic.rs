//! Seeded synthetic datasets with planted group structure.
//!
//! Every item gets a latent group. The first viewpoint always uses it; under
//! every other viewpoint an item keeps its latent group with probability
//! `coupling` and otherwise draws a fresh one, independently per viewpoint.
//! A viewpoint with fewer groups than the latent count merges consecutive
//! latent groups, so its grouping is refined by any viewpoint that keeps the
//! full count. Each viewpoint splits its features into one contiguous block
//! per group and items draw their features from their group's block.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::{Link, PartialRecord, PartialTable};
use crate::error::{Error, Result};
use crate::viewpoint::{build_viewpoint_matrix, DataItem, Dataset};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Binary,
    /// Integer counts in 1..=5.
    Counts,
}

fn default_features_per_item() -> usize {
    3
}

fn default_coverage() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticViewpoint {
    pub id: String,
    pub feature_count: usize,
    /// Groups seen by this viewpoint; defaults to the latent group count.
    #[serde(default)]
    pub group_count: Option<usize>,
    #[serde(default = "default_features_per_item")]
    pub features_per_item: usize,
    /// Probability that an item has a row in this viewpoint.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    #[serde(default)]
    pub weighting: Weighting,
}

impl SyntheticViewpoint {
    pub fn new(id: impl Into<String>, feature_count: usize) -> Self {
        SyntheticViewpoint {
            id: id.into(),
            feature_count,
            group_count: None,
            features_per_item: default_features_per_item(),
            coverage: default_coverage(),
            weighting: Weighting::Binary,
        }
    }

    pub fn groups(mut self, k: usize) -> Self {
        self.group_count = Some(k);
        self
    }

    pub fn per_item(mut self, n: usize) -> Self {
        self.features_per_item = n;
        self
    }

    pub fn counts(mut self) -> Self {
        self.weighting = Weighting::Counts;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub item_count: usize,
    pub group_count: usize,
    pub viewpoints: Vec<SyntheticViewpoint>,
    pub coupling: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Planted group of every item, per viewpoint (`None` when absent).
    pub groups: BTreeMap<String, Vec<Option<usize>>>,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.item_count == 0 {
            return bad("no items".into());
        }
        if self.group_count == 0 || self.group_count > self.item_count {
            return bad(format!("{} groups for {} items", self.group_count, self.item_count));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return bad(format!("coupling {} not in [0,1]", self.coupling));
        }
        if self.viewpoints.is_empty() {
            return bad("no viewpoints".into());
        }
        for (i, v) in self.viewpoints.iter().enumerate() {
            if self.viewpoints[..i].iter().any(|w| w.id == v.id) {
                return bad(format!("duplicate viewpoint `{}`", v.id));
            }
            let k = v.group_count.unwrap_or(self.group_count);
            if k == 0 || k > self.group_count {
                return bad(format!("viewpoint `{}`: {k} groups", v.id));
            }
            if v.feature_count < k {
                return bad(format!(
                    "viewpoint `{}`: {} features cannot cover {k} groups",
                    v.id, v.feature_count
                ));
            }
            if v.features_per_item == 0 {
                return bad(format!("viewpoint `{}`: zero features per item", v.id));
            }
            if !(v.coverage > 0.0 && v.coverage <= 1.0) {
                return bad(format!("viewpoint `{}`: coverage {}", v.id, v.coverage));
            }
        }
        Ok(())
    }
}

fn block(feature_count: usize, groups: usize, g: usize) -> std::ops::Range<usize> {
    g * feature_count / groups..(g + 1) * feature_count / groups
}

pub fn item_id(i: usize) -> String {
    format!("item{i:04}")
}

pub fn generate_synthetic_with_groups(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.item_count;
    let latent_count = spec.group_count;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut latent = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        latent[item] = pos * latent_count / n;
    }

    let items = (0..n).map(|i| DataItem::new(item_id(i))).collect();
    let mut viewpoints = Vec::new();
    let mut groups = BTreeMap::new();
    for (vi, v) in spec.viewpoints.iter().enumerate() {
        let k = v.group_count.unwrap_or(latent_count);
        let mut triples = Vec::new();
        let mut planted = vec![None; n];
        for (i, slot) in planted.iter_mut().enumerate() {
            // draw every variate unconditionally so the stream does not depend
            // on coupling or coverage
            let keep = rng.gen::<f64>() < spec.coupling || vi == 0;
            let fresh = rng.gen_range(0..latent_count);
            let present = rng.gen::<f64>() < v.coverage;
            let g = (if keep { latent[i] } else { fresh }) * k / latent_count;
            let range = block(v.feature_count, k, g);
            let take = v.features_per_item.min(range.len());
            let picks = index::sample(&mut rng, range.len(), take);
            let weights: Vec<f64> = (0..take)
                .map(|_| match v.weighting {
                    Weighting::Binary => 1.0,
                    Weighting::Counts => rng.gen_range(1..=5) as f64,
                })
                .collect();
            if !present {
                continue;
            }
            *slot = Some(g);
            for (p, w) in picks.iter().zip(weights) {
                triples.push((item_id(i), format!("{}-f{:04}", v.id, range.start + p), w));
            }
        }
        if triples.is_empty() {
            return Err(Error::InfeasibleSpec(format!("viewpoint `{}` received no rows", v.id)));
        }
        viewpoints.push(build_viewpoint_matrix(v.id.clone(), triples)?);
        groups.insert(v.id.clone(), planted);
    }
    Ok(SyntheticDataset {
        dataset: Dataset::new(items, viewpoints),
        groups,
    })
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    generate_synthetic_with_groups(spec).map(|s| s.dataset)
}

/// 200 items, one 30-feature viewpoint with six groups.
pub fn desk_fixture(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        item_count: 200,
        group_count: 6,
        viewpoints: vec![SyntheticViewpoint::new("desk", 30).per_item(4).counts()],
        coupling: 1.0,
        seed,
    }
}

/// Map side used with [`coupled_fixture`].
pub const COUPLED_SIDE: usize = 2;

/// Map side used with [`refinement_fixture`].
pub const REFINEMENT_SIDE: usize = 4;

/// Two viewpoints `a` and `b` over the same four latent groups.
///
/// Kept small (five items per node on a [`COUPLED_SIDE`] map) because a
/// single stray carrier already spreads a source node over every target
/// node; with larger nodes partial coupling is indistinguishable from none.
pub fn coupled_fixture(coupling: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        item_count: 20,
        group_count: 4,
        viewpoints: vec![
            SyntheticViewpoint::new("a", 12).per_item(3),
            SyntheticViewpoint::new("b", 12).per_item(3),
        ],
        coupling,
        seed,
    }
}

/// View `a` has eight groups that refine the two groups of view `b`. Items
/// of one `b` group share all of its features, so each `b` group lands on a
/// single node.
pub fn refinement_fixture(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        item_count: 160,
        group_count: 8,
        viewpoints: vec![
            SyntheticViewpoint::new("a", 48).per_item(3),
            SyntheticViewpoint::new("b", 8).groups(2).per_item(4),
        ],
        coupling: 1.0,
        seed,
    }
}

/// Sizes of the site fixture: kernel sites, towns, sub-domain codes,
/// outlink emitters and distinct targets, inlink receivers and distinct
/// sources.
pub mod site_shape {
    pub const KERNEL: usize = 438;
    pub const TOWNS: usize = 96;
    pub const DOMAINS: usize = 93;
    pub const OUT_EMITTERS: usize = 386;
    pub const OUT_TARGETS: usize = 2079;
    pub const IN_RECEIVERS: usize = 388;
    pub const IN_SOURCES: usize = 2839;
    pub const GROUPS: usize = 8;
    pub const OTHER_SITES: usize = 3000;
    pub const DOMAIN_CODE: &str = "1203";
    pub const GEO_PREFIX: &str = "DE";
}

fn kernel_url(i: usize) -> String {
    format!("http://lab{i:03}.uni.example.de")
}

fn other_url(j: usize) -> String {
    format!("http://inst{j:04}.example.eu")
}

fn add_links(
    rng: &mut ChaCha8Rng,
    owners: &[usize],
    pool: usize,
    group_of: &[usize],
    extern_prefix: &str,
) -> BTreeMap<usize, BTreeMap<String, u64>> {
    use site_shape::GROUPS;
    let mut links: BTreeMap<usize, BTreeMap<String, u64>> = owners.iter().map(|&o| (o, BTreeMap::new())).collect();
    let by_group: Vec<Vec<usize>> = (0..GROUPS)
        .map(|g| owners.iter().copied().filter(|&o| group_of[o] == g).collect())
        .collect();
    // every pool url is linked at least once, by an owner of its group
    let mut cursor = [0usize; site_shape::GROUPS];
    for j in 0..pool {
        let g = j * GROUPS / pool;
        let o = by_group[g][cursor[g] % by_group[g].len()];
        cursor[g] += 1;
        *links.get_mut(&o).unwrap().entry(other_url(j)).or_default() += rng.gen_range(1..=3);
    }
    for &o in owners {
        let g = group_of[o];
        for _ in 0..rng.gen_range(2..=5) {
            let j = if rng.gen::<f64>() < 0.8 {
                rng.gen_range(g * pool / GROUPS..(g + 1) * pool / GROUPS)
            } else {
                rng.gen_range(0..pool)
            };
            *links.get_mut(&o).unwrap().entry(other_url(j)).or_default() += rng.gen_range(1..=3);
        }
        for _ in 0..rng.gen_range(0..=2) {
            let url = format!("http://{extern_prefix}{}.example.com", rng.gen_range(0..500));
            *links.get_mut(&o).unwrap().entry(url).or_default() += 1;
        }
    }
    links
}

/// Three partial site tables (geography, sub-domains, links) whose kernel
/// reproduces the viewpoint shapes 438×96, 438×93, 386×2079 and 388×2839
/// after selection and link restriction, with more inlink than outlink
/// weight.
pub fn fixture_site_tables(seed: u64) -> Vec<PartialTable> {
    use site_shape::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_of: Vec<usize> = (0..KERNEL).map(|i| i % GROUPS).collect();

    let mut geo_table = Vec::new();
    let mut domain_table = Vec::new();
    let other_codes: Vec<String> = (0..DOMAINS - 1).map(|j| (1100 + j).to_string()).collect();
    for (i, &g) in group_of.iter().enumerate() {
        let m = i / GROUPS;
        let town_block = g * TOWNS / GROUPS..(g + 1) * TOWNS / GROUPS;
        let town = if m < town_block.len() {
            town_block.start + m
        } else {
            rng.gen_range(town_block.clone())
        };
        geo_table.push(PartialRecord {
            url: kernel_url(i),
            organization: Some(format!("Lab {i}")),
            geo_code: Some(format!("DE-town{town:02}")),
            page_count: Some(rng.gen_range(10..5000)),
            ..Default::default()
        });
        let code_block = g * other_codes.len() / GROUPS..(g + 1) * other_codes.len() / GROUPS;
        let mut codes = vec![DOMAIN_CODE.to_string()];
        if m < code_block.len() {
            codes.push(other_codes[code_block.start + m].clone());
        }
        for _ in 0..rng.gen_range(1..=2) {
            let c = &other_codes[rng.gen_range(code_block.clone())];
            if !codes.contains(c) {
                codes.push(c.clone());
            }
        }
        domain_table.push(PartialRecord {
            url: kernel_url(i),
            domain_codes: Some(codes),
            ..Default::default()
        });
    }

    const COUNTRIES: [&str; 6] = ["FR", "IT", "ES", "NL", "DE", "AT"];
    for j in 0..OTHER_SITES {
        let cc = COUNTRIES[rng.gen_range(0..COUNTRIES.len())];
        geo_table.push(PartialRecord {
            url: other_url(j),
            organization: Some(format!("Institute {j}")),
            geo_code: Some(format!("{cc}-city{:02}", rng.gen_range(0..40))),
            page_count: Some(rng.gen_range(10..5000)),
            ..Default::default()
        });
        // German non-kernel sites never carry the kernel code
        let code = if cc == "DE" {
            "1105"
        } else if rng.gen::<f64>() < 0.3 {
            DOMAIN_CODE
        } else {
            "2209"
        };
        domain_table.push(PartialRecord {
            url: other_url(j),
            domain_codes: Some(vec![code.to_string()]),
            ..Default::default()
        });
    }

    let mut emitters: Vec<usize> = (0..KERNEL).collect();
    emitters.shuffle(&mut rng);
    emitters.truncate(OUT_EMITTERS);
    emitters.sort_unstable();
    let mut receivers: Vec<usize> = (0..KERNEL).collect();
    receivers.shuffle(&mut rng);
    receivers.truncate(IN_RECEIVERS);
    receivers.sort_unstable();

    let out = add_links(&mut rng, &emitters, OUT_TARGETS, &group_of, "ext-target");
    let inl = add_links(&mut rng, &receivers, IN_SOURCES, &group_of, "ext-source");
    let to_links =
        |m: Option<&BTreeMap<String, u64>>| m.map(|m| m.iter().map(|(u, &c)| Link::new(u.clone(), c)).collect());
    let link_table = (0..KERNEL)
        .map(|i| PartialRecord {
            url: kernel_url(i),
            outlinks: to_links(out.get(&i)),
            inlinks: to_links(inl.get(&i)),
            ..Default::default()
        })
        .collect();
    vec![geo_table, domain_table, link_table]
}
