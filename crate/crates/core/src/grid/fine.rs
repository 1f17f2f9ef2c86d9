use crate::error::{Error, Result};

/// An interior face shared by cells `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    /// Face length `|e_ab|`.
    pub length: f64,
    /// Distance between the two cell centers.
    pub distance: f64,
}

/// Row-major cell layout of a structured grid: cell `(i, j)` has index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    pub nx: usize,
    pub ny: usize,
}

/// Cell-centered finite-volume mesh described by cell volumes, centers and the
/// interior face list. Boundary faces are not stored; omitting them imposes the
/// zero-flux condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    cell_volumes: Vec<f64>,
    cell_centers: Vec<[f64; 2]>,
    faces: Vec<Face>,
    extent: [f64; 2],
    structure: Option<Structure>,
}

impl FineGrid {
    /// Uniform `nx × ny` rectangular grid on `[0, lx] × [0, ly]`.
    pub fn structured(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("grid needs at least one cell per direction, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::invalid(format!("domain lengths must be positive, got {lx} x {ly}")));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let n = nx * ny;
        let mut cell_centers = Vec::with_capacity(n);
        for j in 0..ny {
            for i in 0..nx {
                cell_centers.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]);
            }
        }
        let mut faces = Vec::with_capacity(2 * n);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if i + 1 < nx {
                    faces.push(Face { a: c, b: c + 1, length: hy, distance: hx });
                }
                if j + 1 < ny {
                    faces.push(Face { a: c, b: c + nx, length: hx, distance: hy });
                }
            }
        }
        Ok(FineGrid {
            cell_volumes: vec![hx * hy; n],
            cell_centers,
            faces,
            extent: [lx, ly],
            structure: Some(Structure { nx, ny }),
        })
    }

    /// Grid from explicit cell and face data (e.g. an external mesh reader).
    pub fn from_parts(
        cell_volumes: Vec<f64>,
        cell_centers: Vec<[f64; 2]>,
        faces: Vec<Face>,
        extent: [f64; 2],
    ) -> Result<Self> {
        let n = cell_volumes.len();
        if cell_centers.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: cell_centers.len() });
        }
        if cell_volumes.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("cell volumes must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &faces {
            if f.a >= n || f.b >= n || f.a == f.b {
                return Err(Error::invalid(format!("face ({}, {}) references invalid cells", f.a, f.b)));
            }
            if !(f.length > 0.0 && f.distance > 0.0) {
                return Err(Error::invalid(format!("face ({}, {}) has non-positive geometry", f.a, f.b)));
            }
            if !seen.insert((f.a.min(f.b), f.a.max(f.b))) {
                return Err(Error::invalid(format!("duplicate face ({}, {})", f.a, f.b)));
            }
        }
        Ok(FineGrid { cell_volumes, cell_centers, faces, extent, structure: None })
    }

    pub fn n_cells(&self) -> usize {
        self.cell_volumes.len()
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    pub fn cell_centers(&self) -> &[[f64; 2]] {
        &self.cell_centers
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn structure(&self) -> Option<Structure> {
        self.structure
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volumes.iter().sum()
    }
}

/// Free-function constructor matching the grid builder used by the experiment config.
pub fn build_structured_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<FineGrid> {
    FineGrid::structured(nx, ny, lx, ly)
}
