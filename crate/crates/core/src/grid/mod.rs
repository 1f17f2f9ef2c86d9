//! Fine grid, inclusion labeling, coarse grid and partition of unity.

mod coarse;
mod fine;
mod subdomain;

pub use coarse::{build_coarse_grid, build_partition_of_unity, CoarseGrid, PartitionOfUnity};
pub use fine::{build_structured_grid, Face, FineGrid, Structure};
pub use subdomain::{default_layout, mark_inclusions, Circle, Subdomain, SubdomainMap, DEFAULT_CIRCLE_COUNT};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DEFAULT_LAYOUT_SEED: u64 = 20_230_712;

/// Geometry section of an experiment config.
///
/// ```json
/// {"domain": [1.0, 1.0], "fine": [160, 160], "coarse": [10, 10],
///  "circles": [[0.3, 0.4, 0.05]], "seed": 7}
/// ```
/// `seed` is only used when `circles` is omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "unit_square")]
    pub domain: [f64; 2],
    #[serde(default = "default_fine")]
    pub fine: [usize; 2],
    #[serde(default = "default_coarse")]
    pub coarse: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circles: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn unit_square() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_fine() -> [usize; 2] {
    [160, 160]
}

fn default_coarse() -> [usize; 2] {
    [10, 10]
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            domain: unit_square(),
            fine: default_fine(),
            coarse: default_coarse(),
            circles: None,
            seed: None,
        }
    }
}

/// Fine grid plus its inclusion labels.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub grid: FineGrid,
    pub subdomains: SubdomainMap,
}

impl GeometryConfig {
    pub fn with_fine(mut self, nx: usize, ny: usize) -> Self {
        self.fine = [nx, ny];
        self
    }

    pub fn with_coarse(mut self, kx: usize, ky: usize) -> Self {
        self.coarse = [kx, ky];
        self
    }

    pub fn circles(&self) -> Vec<Circle> {
        match &self.circles {
            Some(list) => list
                .iter()
                .map(|&[cx, cy, r]| Circle { center: [cx, cy], radius: r })
                .collect(),
            None => default_layout(self.domain, self.seed.unwrap_or(DEFAULT_LAYOUT_SEED)),
        }
    }

    pub fn build(&self) -> Result<Geometry> {
        let grid = build_structured_grid(self.fine[0], self.fine[1], self.domain[0], self.domain[1])?;
        let subdomains = mark_inclusions(&grid, &self.circles());
        Ok(Geometry { grid, subdomains })
    }

    pub fn build_coarse(&self, grid: &FineGrid) -> Result<(CoarseGrid, PartitionOfUnity)> {
        let coarse = build_coarse_grid(grid, self.coarse[0], self.coarse[1])?;
        let pou = build_partition_of_unity(&coarse, grid);
        Ok((coarse, pou))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_json() {
        let cfg: GeometryConfig = serde_json::from_str(
            r#"{"domain": [1.0, 2.0], "fine": [8, 16], "coarse": [2, 4], "circles": [[0.5, 1.0, 0.2]]}"#,
        )
        .unwrap();
        let geo = cfg.build().unwrap();
        assert_eq!(geo.grid.n_cells(), 128);
        assert!(geo.subdomains.count(Subdomain::Inclusion) > 0);
        let (coarse, _) = cfg.build_coarse(&geo.grid).unwrap();
        assert_eq!(coarse.n_nodes(), 15);
    }

    #[test]
    fn seed_only_used_without_circles() {
        let a = GeometryConfig { seed: Some(1), ..Default::default() }.with_fine(32, 32);
        let b = GeometryConfig { seed: Some(2), ..Default::default() }.with_fine(32, 32);
        assert_ne!(a.circles(), b.circles());
        let explicit = GeometryConfig { circles: Some(vec![]), seed: Some(1), ..Default::default() };
        assert!(explicit.circles().is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<GeometryConfig>(r#"{"fine": [4, 4], "bogus": 1}"#).is_err());
    }
}
