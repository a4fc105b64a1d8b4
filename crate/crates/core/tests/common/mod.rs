#![allow(dead_code)]

use mvsom::{build_viewpoint_matrix, Projection, ViewpointMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn item(i: usize) -> String {
    format!("i{i:03}")
}

/// Random matrix with integer weights in 1..=max_weight; every row gets at
/// least one entry.
pub fn random_matrix(
    rng: &mut ChaCha8Rng,
    id: &str,
    items: usize,
    features: usize,
    density: f64,
    max_weight: u32,
) -> ViewpointMatrix {
    let mut triples = Vec::new();
    for i in 0..items {
        let forced = rng.gen_range(0..features);
        for f in 0..features {
            if f == forced || rng.gen::<f64>() < density {
                let w = rng.gen_range(1..=max_weight) as f64;
                triples.push((item(i), format!("f{f:03}"), w));
            }
        }
    }
    build_viewpoint_matrix(id, triples).unwrap()
}

/// Assigns each of `items` to a random node with a random similarity;
/// `coverage` is the probability that an item appears at all.
pub fn random_projection(rng: &mut ChaCha8Rng, items: usize, nodes: usize, coverage: f64) -> Projection {
    let mut p = Projection::default();
    for i in 0..items {
        if rng.gen::<f64>() < coverage {
            let sim = rng.gen_range(0.0..=1.0);
            p.insert(item(i), rng.gen_range(0..nodes), sim);
        }
    }
    p
}
