use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FineGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subdomain {
    Background,
    Inclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Background/inclusion label of every fine cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMap {
    labels: Vec<Subdomain>,
    circles: Vec<Circle>,
}

impl SubdomainMap {
    pub fn uniform(n_cells: usize, label: Subdomain) -> Self {
        SubdomainMap { labels: vec![label; n_cells], circles: Vec::new() }
    }

    pub fn from_labels(labels: Vec<Subdomain>) -> Self {
        SubdomainMap { labels, circles: Vec::new() }
    }

    pub fn labels(&self) -> &[Subdomain] {
        &self.labels
    }

    pub fn label(&self, cell: usize) -> Subdomain {
        self.labels[cell]
    }

    pub fn circles(&self) -> &[Circle] {
        &self.circles
    }

    pub fn count(&self, label: Subdomain) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Labels a cell as inclusion iff its center lies in (or on) any circle.
pub fn mark_inclusions(grid: &FineGrid, circles: &[Circle]) -> SubdomainMap {
    let labels = grid
        .cell_centers()
        .iter()
        .map(|&c| {
            if circles.iter().any(|circle| circle.contains(c)) {
                Subdomain::Inclusion
            } else {
                Subdomain::Background
            }
        })
        .collect();
    SubdomainMap { labels, circles: circles.to_vec() }
}

pub const DEFAULT_CIRCLE_COUNT: usize = 40;
const MIN_RADIUS: f64 = 0.03;
const MAX_RADIUS: f64 = 0.06;
const MAX_ATTEMPTS: usize = 100_000;

/// Reproducible inclusion layout: up to [`DEFAULT_CIRCLE_COUNT`] non-overlapping circles
/// fully inside the domain, radii uniform in [0.03, 0.06] relative to the shorter side.
pub fn default_layout(extent: [f64; 2], seed: u64) -> Vec<Circle> {
    let scale = extent[0].min(extent[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut circles: Vec<Circle> = Vec::with_capacity(DEFAULT_CIRCLE_COUNT);
    for _ in 0..MAX_ATTEMPTS {
        if circles.len() == DEFAULT_CIRCLE_COUNT {
            break;
        }
        let radius = scale * rng.gen_range(MIN_RADIUS..MAX_RADIUS);
        let cx = rng.gen_range(radius..extent[0] - radius);
        let cy = rng.gen_range(radius..extent[1] - radius);
        let fits = circles.iter().all(|c| {
            let d = ((c.center[0] - cx).powi(2) + (c.center[1] - cy).powi(2)).sqrt();
            d > c.radius + radius
        });
        if fits {
            circles.push(Circle { center: [cx, cy], radius });
        }
    }
    circles
}
