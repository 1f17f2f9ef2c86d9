//! Two-point flux finite-volume operators and the competition reaction term.
//!
//! For species `k` the semi-discrete system on cell `i` reads
//!
//! ```text
//! |K_i| du_i/dt + Σ_j T_ij (u_i − u_j) = |K_i| R(u_i^1, …, u_i^L)
//! T_ij = ε_ij |e_ij| / d_ij,   ε_ij = 2 / (1/ε_i + 1/ε_j)
//! R^k(u) = r^k u^k (1 − u^k) − Σ_{l≠k} α^{kl} u^k u^l
//! ```
//!
//! The volume factor is applied once, by the time steppers; [`eval_reaction`] returns
//! the pointwise rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FineGrid, Subdomain, SubdomainMap};
use crate::linalg::CsrMatrix;

/// A coefficient taking one value in the background and another in the inclusions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    pub background: f64,
    pub inclusion: f64,
}

impl Piecewise {
    pub const fn new(background: f64, inclusion: f64) -> Self {
        Piecewise { background, inclusion }
    }

    pub const fn uniform(value: f64) -> Self {
        Piecewise { background: value, inclusion: value }
    }

    pub fn at(&self, label: Subdomain) -> f64 {
        match label {
            Subdomain::Background => self.background,
            Subdomain::Inclusion => self.inclusion,
        }
    }

    fn values(&self) -> [f64; 2] {
        [self.background, self.inclusion]
    }
}

/// Per-species diffusion and growth, and pairwise competition coefficients.
///
/// `competition[k][l]` is `α^{kl}`, the effect of species `l` on species `k`; the
/// diagonal is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientField {
    pub diffusion: Vec<Piecewise>,
    pub growth: Vec<Piecewise>,
    pub competition: Vec<Vec<Piecewise>>,
}

impl CoefficientField {
    pub fn n_species(&self) -> usize {
        self.diffusion.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.diffusion.len();
        if l == 0 {
            return Err(Error::invalid("at least one species is required"));
        }
        if self.growth.len() != l || self.competition.len() != l || self.competition.iter().any(|row| row.len() != l) {
            return Err(Error::invalid(format!(
                "coefficient tables disagree on the species count ({l} diffusion entries)"
            )));
        }
        for (k, eps) in self.diffusion.iter().enumerate() {
            if eps.values().iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                return Err(Error::invalid(format!("diffusion of species {k} must be positive and finite")));
            }
        }
        for (k, r) in self.growth.iter().enumerate() {
            if r.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("growth rate of species {k} is not finite")));
            }
            if r.values().iter().any(|&v| v < 0.0) {
                log::warn!("species {k} has a negative growth rate {r:?}");
            }
        }
        for (k, row) in self.competition.iter().enumerate() {
            for (j, a) in row.iter().enumerate() {
                if a.values().iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("competition coefficient ({k}, {j}) is not finite")));
                }
                if k != j && a.values().iter().any(|&v| v < 0.0) {
                    log::warn!("competition coefficient ({k}, {j}) is negative: {a:?}");
                }
            }
        }
        Ok(())
    }

    /// Reaction coefficients of one subdomain.
    pub fn reaction_params(&self, label: Subdomain) -> ReactionParams {
        let l = self.n_species();
        ReactionParams {
            growth: self.growth.iter().map(|r| r.at(label)).collect(),
            competition: (0..l)
                .map(|k| (0..l).map(|j| if j == k { 0.0 } else { self.competition[k][j].at(label) }).collect())
                .collect(),
        }
    }

    /// Same diffusion, all reaction coefficients zeroed.
    pub fn without_reaction(&self) -> Self {
        let l = self.n_species();
        CoefficientField {
            diffusion: self.diffusion.clone(),
            growth: vec![Piecewise::uniform(0.0); l],
            competition: vec![vec![Piecewise::uniform(0.0); l]; l],
        }
    }
}

/// Growth rates and competition matrix at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionParams {
    pub growth: Vec<f64>,
    pub competition: Vec<Vec<f64>>,
}

impl ReactionParams {
    pub fn n_species(&self) -> usize {
        self.growth.len()
    }
}

/// Reaction parameters resolved for every cell through its subdomain label.
#[derive(Debug, Clone)]
pub struct ReactionField {
    by_label: [ReactionParams; 2],
    labels: Vec<Subdomain>,
}

impl ReactionField {
    pub fn new(coeff: &CoefficientField, subdomains: &SubdomainMap) -> Self {
        ReactionField {
            by_label: [
                coeff.reaction_params(Subdomain::Background),
                coeff.reaction_params(Subdomain::Inclusion),
            ],
            labels: subdomains.labels().to_vec(),
        }
    }

    pub fn at(&self, cell: usize) -> &ReactionParams {
        match self.labels[cell] {
            Subdomain::Background => &self.by_label[0],
            Subdomain::Inclusion => &self.by_label[1],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.labels.len()
    }

    /// Fills `out[k][i] = |K_i| R^k(u_i)` for every species and cell.
    pub fn volume_weighted_rates(&self, state: &SpeciesState, volumes: &[f64], out: &mut [Vec<f64>]) {
        let l = state.n_species();
        let mut local = vec![0.0; l];
        for (i, &vol) in volumes.iter().enumerate() {
            for (k, slot) in local.iter_mut().enumerate() {
                *slot = state.u[k][i];
            }
            let params = self.at(i);
            for (k, row) in out.iter_mut().enumerate() {
                row[i] = vol * eval_reaction(&local, params, k);
            }
        }
    }
}

/// `R^k(u)` at a point with species values `u`.
pub fn eval_reaction(u: &[f64], params: &ReactionParams, k: usize) -> f64 {
    let uk = u[k];
    let competition: f64 = params.competition[k]
        .iter()
        .zip(u)
        .enumerate()
        .filter(|&(l, _)| l != k)
        .map(|(_, (a, ul))| a * ul)
        .sum();
    params.growth[k] * uk * (1.0 - uk) - uk * competition
}

/// Row `k` of the reaction Jacobian, `∂R^k/∂u^j` for all `j`.
pub fn eval_reaction_jacobian(u: &[f64], params: &ReactionParams, k: usize) -> Vec<f64> {
    let mut row = vec![0.0; u.len()];
    reaction_jacobian_into(u, params, k, &mut row);
    row
}

pub fn reaction_jacobian_into(u: &[f64], params: &ReactionParams, k: usize, row: &mut [f64]) {
    let uk = u[k];
    let mut diag = params.growth[k] * (1.0 - 2.0 * uk);
    for (l, (&a, &ul)) in params.competition[k].iter().zip(u).enumerate() {
        if l == k {
            continue;
        }
        diag -= a * ul;
        row[l] = -a * uk;
    }
    row[k] = diag;
}

/// `2 / (1/a + 1/b)`.
pub fn harmonic_average(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("harmonic average needs positive inputs, got {a} and {b}")));
    }
    Ok(2.0 / (1.0 / a + 1.0 / b))
}

/// Face transmissibilities `T_ij = ε_ij |e_ij| / d_ij` of species `k`, in face order.
pub fn assemble_transmissibilities(
    grid: &FineGrid,
    subdomains: &SubdomainMap,
    coeff: &CoefficientField,
    k: usize,
) -> Result<Vec<f64>> {
    if subdomains.labels().len() != grid.n_cells() {
        return Err(Error::DimensionMismatch { expected: grid.n_cells(), found: subdomains.labels().len() });
    }
    let eps = coeff
        .diffusion
        .get(k)
        .ok_or_else(|| Error::invalid(format!("species {k} out of range")))?;
    grid.faces()
        .iter()
        .map(|f| {
            let e = harmonic_average(eps.at(subdomains.label(f.a)), eps.at(subdomains.label(f.b)))?;
            Ok(e * f.length / f.distance)
        })
        .collect()
}

/// Diffusion operator: `a_ii = Σ_j T_ij`, `a_ij = −T_ij`.
pub fn assemble_diffusion(grid: &FineGrid, transmissibilities: &[f64]) -> Result<CsrMatrix> {
    let faces = grid.faces();
    if transmissibilities.len() != faces.len() {
        return Err(Error::DimensionMismatch { expected: faces.len(), found: transmissibilities.len() });
    }
    let n = grid.n_cells();
    let mut triplets = Vec::with_capacity(n + 2 * faces.len());
    for i in 0..n {
        triplets.push((i, i, 0.0));
    }
    for (f, &t) in faces.iter().zip(transmissibilities) {
        triplets.push((f.a, f.a, t));
        triplets.push((f.b, f.b, t));
        triplets.push((f.a, f.b, -t));
        triplets.push((f.b, f.a, -t));
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Diagonal mass matrix `diag(|K_i|)`.
pub fn assemble_mass(grid: &FineGrid) -> CsrMatrix {
    CsrMatrix::from_diagonal(grid.cell_volumes())
}

/// Cell values of every species at one time level, `u[k][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesState {
    pub u: Vec<Vec<f64>>,
}

impl SpeciesState {
    pub fn new(u: Vec<Vec<f64>>) -> Result<Self> {
        let n = u.first().map_or(0, Vec::len);
        if u.is_empty() {
            return Err(Error::invalid("state needs at least one species"));
        }
        if let Some(bad) = u.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
        }
        Ok(SpeciesState { u })
    }

    /// Spatially constant initial data, one value per species.
    pub fn uniform(values: &[f64], n_cells: usize) -> Self {
        SpeciesState { u: values.iter().map(|&v| vec![v; n_cells]).collect() }
    }

    pub fn n_species(&self) -> usize {
        self.u.len()
    }

    pub fn n_cells(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    pub fn species(&self, k: usize) -> &[f64] {
        &self.u[k]
    }

    /// Errors on the first NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for (k, field) in self.u.iter().enumerate() {
            if let Some(cell) = field.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { species: k, cell });
            }
        }
        Ok(())
    }

    /// Species values at one cell.
    pub fn at_cell(&self, cell: usize) -> Vec<f64> {
        self.u.iter().map(|f| f[cell]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_structured_grid, mark_inclusions, Circle};
    use proptest::prelude::*;

    fn two_species(r1: f64, r2: f64, a12: f64, a21: f64) -> ReactionParams {
        ReactionParams { growth: vec![r1, r2], competition: vec![vec![0.0, a12], vec![a21, 0.0]] }
    }

    #[test]
    fn harmonic_average_examples() {
        assert_eq!(harmonic_average(0.3, 0.3).unwrap(), 0.3);
        assert!((harmonic_average(1e-4, 1e-2).unwrap() - 2.0 / 10100.0).abs() < 1e-18);
        assert!((harmonic_average(1e-4, 1e-2).unwrap() - 1.980198e-4).abs() < 1e-10);
        assert!((harmonic_average(1e-3, 1e-1).unwrap() - 1.980198e-3).abs() < 1e-9);
        assert!(harmonic_average(0.0, 1.0).is_err());
        assert!(harmonic_average(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn harmonic_average_is_symmetric_and_bounded(a in 1e-6f64..10.0, b in 1e-6f64..10.0) {
            let h = harmonic_average(a, b).unwrap();
            prop_assert_eq!(h, harmonic_average(b, a).unwrap());
            prop_assert!(h >= a.min(b) * (1.0 - 1e-15) && h <= a.max(b) * (1.0 + 1e-15));
        }
    }

    fn uniform_field(eps: f64) -> CoefficientField {
        CoefficientField {
            diffusion: vec![Piecewise::uniform(eps)],
            growth: vec![Piecewise::uniform(0.0)],
            competition: vec![vec![Piecewise::uniform(0.0)]],
        }
    }

    #[test]
    fn uniform_square_cells_give_eps_transmissibility() {
        let g = build_structured_grid(5, 5, 1.0, 1.0).unwrap();
        let s = SubdomainMap::uniform(25, Subdomain::Background);
        let t = assemble_transmissibilities(&g, &s, &uniform_field(0.7), 0).unwrap();
        assert!(t.iter().all(|&x| (x - 0.7).abs() < 1e-15));
        let g = build_structured_grid(2, 2, 1.0, 1.0).unwrap();
        let t = assemble_transmissibilities(&g, &SubdomainMap::uniform(4, Subdomain::Background), &uniform_field(1.0), 0).unwrap();
        assert!(t.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn contrast_face_transmissibility() {
        // 100x100 unit grid: |e| = d = 0.01, one cell of each kind across the face.
        let g = build_structured_grid(2, 1, 0.02, 0.01).unwrap();
        let s = SubdomainMap::from_labels(vec![Subdomain::Background, Subdomain::Inclusion]);
        let coeff = CoefficientField {
            diffusion: vec![Piecewise::new(1e-4, 1e-2)],
            ..uniform_field(1.0)
        };
        let t = assemble_transmissibilities(&g, &s, &coeff, 0).unwrap();
        assert_eq!(g.faces()[0].length, 0.01);
        assert!((t[0] - 1.980198e-4).abs() < 1e-10);
    }

    #[test]
    fn diffusion_operator_small_cases() {
        let g = build_structured_grid(1, 1, 1.0, 1.0).unwrap();
        let a = assemble_diffusion(&g, &[]).unwrap();
        assert_eq!(a.to_dense(), nalgebra::DMatrix::zeros(1, 1));

        let g = build_structured_grid(2, 1, 1.0, 1.0).unwrap();
        let a = assemble_diffusion(&g, &[0.8]).unwrap();
        assert_eq!(a.to_dense(), nalgebra::dmatrix![0.8, -0.8; -0.8, 0.8]);

        let g = build_structured_grid(2, 2, 1.0, 1.0).unwrap();
        let a = assemble_diffusion(&g, &[1.0; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(a.get(i, i), 2.0);
            let (cols, vals) = a.row(i);
            let off: Vec<f64> = cols.iter().zip(vals).filter(|(&c, _)| c != i).map(|(_, &v)| v).collect();
            assert_eq!(off, vec![-1.0, -1.0]);
        }
        assert_eq!(a.get(0, 3), 0.0);
        assert!(assemble_diffusion(&g, &[1.0; 3]).is_err());
    }

    #[test]
    fn mass_operator() {
        let g = build_structured_grid(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(assemble_mass(&g).diagonal(), vec![0.25; 4]);
        let g = build_structured_grid(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(assemble_mass(&g).diagonal(), vec![1.0]);
        let g = build_structured_grid(9, 4, 3.0, 0.7).unwrap();
        let tr: f64 = assemble_mass(&g).diagonal().iter().sum();
        assert!((tr - 2.1).abs() < 1e-12);
    }

    fn heterogeneous_operator() -> (FineGrid, CsrMatrix) {
        let g = build_structured_grid(12, 12, 1.0, 1.0).unwrap();
        let s = mark_inclusions(&g, &[Circle { center: [0.4, 0.6], radius: 0.25 }]);
        let coeff = CoefficientField { diffusion: vec![Piecewise::new(1e-4, 1e-2)], ..uniform_field(1.0) };
        let t = assemble_transmissibilities(&g, &s, &coeff, 0).unwrap();
        let a = assemble_diffusion(&g, &t).unwrap();
        (g, a)
    }

    #[test]
    fn diffusion_operator_is_symmetric_with_zero_row_sums() {
        let (g, a) = heterogeneous_operator();
        assert_eq!(a.symmetry_defect(), 0.0);
        let ones = vec![1.0; g.n_cells()];
        assert!(a.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-12));
        for i in 0..g.n_cells() {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c != i {
                    assert!(v <= 0.0);
                }
            }
        }
    }

    #[test]
    fn diffusion_operator_is_positive_semidefinite() {
        use rand::{Rng, SeedableRng};
        let (g, a) = heterogeneous_operator();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let av = a.spmv(&v).unwrap();
            let q: f64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            assert!(q >= -1e-12 * vv);
        }
    }

    proptest! {
        #[test]
        fn raising_diffusion_never_lowers_transmissibility(
            bg in 1e-5f64..1.0, inc in 1e-5f64..1.0, factor in 1.0f64..100.0, which in 0usize..2
        ) {
            let g = build_structured_grid(6, 6, 1.0, 1.0).unwrap();
            let s = mark_inclusions(&g, &[Circle { center: [0.5, 0.5], radius: 0.3 }]);
            let base = CoefficientField { diffusion: vec![Piecewise::new(bg, inc)], ..uniform_field(1.0) };
            let mut raised = base.clone();
            if which == 0 { raised.diffusion[0].background *= factor } else { raised.diffusion[0].inclusion *= factor }
            let t0 = assemble_transmissibilities(&g, &s, &base, 0).unwrap();
            let t1 = assemble_transmissibilities(&g, &s, &raised, 0).unwrap();
            for (a, b) in t0.iter().zip(&t1) {
                prop_assert!(b >= a);
            }
        }
    }

    #[test]
    fn reaction_examples() {
        let p = two_species(0.15, 0.1, 0.055, 0.05);
        assert_eq!(eval_reaction(&[0.0, 0.0], &p, 0), 0.0);
        assert_eq!(eval_reaction(&[0.0, 0.0], &p, 1), 0.0);
        let single = ReactionParams { growth: vec![0.4], competition: vec![vec![0.0]] };
        assert_eq!(eval_reaction(&[1.0], &single, 0), 0.0);
        assert!((eval_reaction(&[0.5, 0.5], &p, 0) - 0.02375).abs() < 1e-15);
    }

    #[test]
    fn jacobian_examples() {
        let p = two_species(0.15, 0.1, 0.055, 0.05);
        assert_eq!(eval_reaction_jacobian(&[0.0, 0.0], &p, 0), vec![0.15, 0.0]);
        assert_eq!(eval_reaction_jacobian(&[0.0, 0.0], &p, 1), vec![0.0, 0.1]);
        let row = eval_reaction_jacobian(&[0.5, 0.5], &p, 0);
        assert!((row[0] + 0.0275).abs() < 1e-15);
        assert!((row[1] + 0.0275).abs() < 1e-15);
    }

    fn central_difference(u: &[f64], p: &ReactionParams, k: usize, j: usize, h: f64) -> f64 {
        let mut plus = u.to_vec();
        let mut minus = u.to_vec();
        plus[j] += h;
        minus[j] -= h;
        (eval_reaction(&plus, p, k) - eval_reaction(&minus, p, k)) / (2.0 * h)
    }

    #[test]
    fn jacobian_matches_finite_differences_at_test_point() {
        let p = two_species(0.15, 0.1, 0.055, 0.05);
        let u = [0.5, 0.5];
        for k in 0..2 {
            let row = eval_reaction_jacobian(&u, &p, k);
            for j in 0..2 {
                assert!((row[j] - central_difference(&u, &p, k, j, 1e-6)).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(
            l in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = ReactionParams {
                growth: (0..l).map(|_| rng.gen_range(0.0..1.0)).collect(),
                competition: (0..l).map(|_| (0..l).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
            };
            let u: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
            for k in 0..l {
                let row = eval_reaction_jacobian(&u, &p, k);
                for j in 0..l {
                    let fd = central_difference(&u, &p, k, j, 1e-6);
                    prop_assert!((row[j] - fd).abs() <= 1e-6 * row[j].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn coefficient_validation() {
        let mut c = uniform_field(1.0);
        assert!(c.validate().is_ok());
        c.diffusion[0].inclusion = 0.0;
        assert!(c.validate().is_err());
        let mut c = uniform_field(1.0);
        c.growth.push(Piecewise::uniform(1.0));
        assert!(c.validate().is_err());
        let mut c = uniform_field(1.0);
        c.growth[0].background = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = uniform_field(1.0);
        c.growth[0].background = -0.1;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn state_finiteness_check() {
        let mut s = SpeciesState::uniform(&[0.5, 0.5], 4);
        assert!(s.check_finite().is_ok());
        s.u[1][2] = f64::INFINITY;
        assert!(matches!(s.check_finite(), Err(Error::NonFinite { species: 1, cell: 2 })));
        assert!(SpeciesState::new(vec![vec![0.0; 3], vec![0.0; 2]]).is_err());
    }
}
