use super::FineGrid;
use crate::error::{Error, Result};

/// Structured `kx × ky` coarse grid aligned with a structured fine grid.
///
/// Nodes are numbered row-major: node `(a, b)` has index `b * (kx + 1) + a` and sits at
/// `(a·Hx, b·Hy)`. The local domain of a node is the union of the (up to four) coarse
/// cells touching it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    kx: usize,
    ky: usize,
    spacing: [f64; 2],
    nodes: Vec<[f64; 2]>,
    coarse_cell_of: Vec<usize>,
    patches: Vec<Vec<usize>>,
    local_cells: Vec<Vec<usize>>,
}

impl CoarseGrid {
    pub fn new(grid: &FineGrid, kx: usize, ky: usize) -> Result<Self> {
        let s = grid
            .structure()
            .ok_or_else(|| Error::invalid("coarse grids need a structured fine grid"))?;
        if kx == 0 || ky == 0 {
            return Err(Error::invalid("coarse grid needs at least one cell per direction"));
        }
        if s.nx % kx != 0 || s.ny % ky != 0 {
            return Err(Error::invalid(format!(
                "coarse grid {kx}x{ky} does not conform to fine grid {}x{}",
                s.nx, s.ny
            )));
        }
        let (rx, ry) = (s.nx / kx, s.ny / ky);
        let [lx, ly] = grid.extent();
        let spacing = [lx / kx as f64, ly / ky as f64];
        let mut nodes = Vec::with_capacity((kx + 1) * (ky + 1));
        for b in 0..=ky {
            for a in 0..=kx {
                nodes.push([a as f64 * spacing[0], b as f64 * spacing[1]]);
            }
        }
        let mut coarse_cell_of = Vec::with_capacity(grid.n_cells());
        for j in 0..s.ny {
            for i in 0..s.nx {
                coarse_cell_of.push((j / ry) * kx + i / rx);
            }
        }
        let mut patches = Vec::with_capacity(nodes.len());
        for b in 0..=ky {
            for a in 0..=kx {
                let mut patch = Vec::with_capacity(4);
                for cb in [b.wrapping_sub(1), b] {
                    for ca in [a.wrapping_sub(1), a] {
                        if ca < kx && cb < ky {
                            patch.push(cb * kx + ca);
                        }
                    }
                }
                patches.push(patch);
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); kx * ky];
        for (cell, &cc) in coarse_cell_of.iter().enumerate() {
            members[cc].push(cell);
        }
        let local_cells = patches
            .iter()
            .map(|patch| {
                let mut cells: Vec<usize> = patch.iter().flat_map(|&cc| members[cc].iter().copied()).collect();
                cells.sort_unstable();
                cells
            })
            .collect();
        Ok(CoarseGrid { kx, ky, spacing, nodes, coarse_cell_of, patches, local_cells })
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.kx, self.ky]
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_coarse_cells(&self) -> usize {
        self.kx * self.ky
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Coarse cell containing each fine cell.
    pub fn coarse_cell_of(&self, fine_cell: usize) -> usize {
        self.coarse_cell_of[fine_cell]
    }

    /// Coarse cells forming the local domain of `node`.
    pub fn patch(&self, node: usize) -> &[usize] {
        &self.patches[node]
    }

    /// Sorted fine-cell indices of the local domain of `node`.
    pub fn local_cells(&self, node: usize) -> &[usize] {
        &self.local_cells[node]
    }
}

pub fn build_coarse_grid(grid: &FineGrid, kx: usize, ky: usize) -> Result<CoarseGrid> {
    CoarseGrid::new(grid, kx, ky)
}

/// Bilinear coarse hat functions sampled at fine cell centers, stored per node over the
/// node's local domain (aligned with [`CoarseGrid::local_cells`]).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    weights: Vec<Vec<f64>>,
}

impl PartitionOfUnity {
    pub fn new(coarse: &CoarseGrid, grid: &FineGrid) -> Self {
        let [hx, hy] = coarse.spacing();
        let centers = grid.cell_centers();
        let weights = (0..coarse.n_nodes())
            .map(|node| {
                let [xn, yn] = coarse.nodes()[node];
                coarse
                    .local_cells(node)
                    .iter()
                    .map(|&c| {
                        let [x, y] = centers[c];
                        let wx = (1.0 - (x - xn).abs() / hx).max(0.0);
                        let wy = (1.0 - (y - yn).abs() / hy).max(0.0);
                        wx * wy
                    })
                    .collect()
            })
            .collect();
        PartitionOfUnity { weights }
    }

    /// Weights of `node` over its local cells.
    pub fn weights(&self, node: usize) -> &[f64] {
        &self.weights[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }
}

pub fn build_partition_of_unity(coarse: &CoarseGrid, grid: &FineGrid) -> PartitionOfUnity {
    PartitionOfUnity::new(coarse, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_structured_grid;

    #[test]
    fn ten_by_ten_has_121_nodes() {
        let g = build_structured_grid(40, 40, 1.0, 1.0).unwrap();
        let c = build_coarse_grid(&g, 10, 10).unwrap();
        assert_eq!(c.n_nodes(), 121);
        let sizes: Vec<usize> = (0..121).map(|i| c.patch(i).len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 4);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 4 * 9);
        assert_eq!(sizes.iter().filter(|&&s| s == 4).count(), 81);
    }

    #[test]
    fn single_coarse_cell() {
        let g = build_structured_grid(3, 3, 1.0, 1.0).unwrap();
        let c = build_coarse_grid(&g, 1, 1).unwrap();
        assert_eq!(c.n_nodes(), 4);
        for node in 0..4 {
            assert_eq!(c.patch(node), &[0]);
            assert_eq!(c.local_cells(node), (0..9).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn center_node_patch_on_four_by_four() {
        let g = build_structured_grid(4, 4, 1.0, 1.0).unwrap();
        let c = build_coarse_grid(&g, 2, 2).unwrap();
        // Node (1, 1) is index 4.
        assert_eq!(c.local_cells(4), (0..16).collect::<Vec<_>>().as_slice());
        // Corner node (0, 0) owns only the lower-left coarse cell.
        assert_eq!(c.local_cells(0), &[0, 1, 4, 5]);
    }

    #[test]
    fn non_conforming_ratio_rejected() {
        let g = build_structured_grid(10, 10, 1.0, 1.0).unwrap();
        assert!(matches!(build_coarse_grid(&g, 3, 5), Err(Error::InvalidArgument(_))));
        assert!(build_coarse_grid(&g, 0, 5).is_err());
    }

    #[test]
    fn corner_weight_matches_bilinear_formula() {
        let g = build_structured_grid(4, 4, 1.0, 1.0).unwrap();
        let c = build_coarse_grid(&g, 2, 2).unwrap();
        let pou = build_partition_of_unity(&c, &g);
        // Cell 0 has center (0.125, 0.125): (1 - 0.25)^2.
        assert_eq!(c.local_cells(0)[0], 0);
        assert!((pou.weights(0)[0] - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn coarse_cell_midpoint_gets_quarter_weights() {
        // 2x2 fine cells per coarse cell would put no center at a midpoint, so use 3x3.
        let g = build_structured_grid(3, 3, 1.0, 1.0).unwrap();
        let c = build_coarse_grid(&g, 1, 1).unwrap();
        let pou = build_partition_of_unity(&c, &g);
        for node in 0..4 {
            let k = c.local_cells(node).iter().position(|&x| x == 4).unwrap();
            assert!((pou.weights(node)[k] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_one_and_stay_in_range() {
        let g = build_structured_grid(24, 18, 2.0, 1.5).unwrap();
        let c = build_coarse_grid(&g, 4, 3).unwrap();
        let pou = build_partition_of_unity(&c, &g);
        let mut sums = vec![0.0; g.n_cells()];
        let mut covered = vec![false; g.n_cells()];
        for node in 0..c.n_nodes() {
            for (&cell, &w) in c.local_cells(node).iter().zip(pou.weights(node)) {
                assert!((0.0..=1.0).contains(&w));
                sums[cell] += w;
                covered[cell] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }
}
