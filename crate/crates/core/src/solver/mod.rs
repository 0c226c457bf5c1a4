//! Discrete energy form `L(u,v) = ∫⟨B∇u,∇v⟩`, Dirichlet solves and the structural checks
//! (maximum principle, Caccioppoli ratio).
//!
//! Nodal multilinear elements live on the node lattice: an element is the box spanned by `2^N`
//! adjacent nodes. `B` is frozen at the element midpoint and the gradient products are integrated
//! exactly. The stiffness is assembled over the whole box (natural boundary); rows are stored for
//! the nodes of `D` only, all of which are off the outer lattice layer.

mod element;
mod multigrid;

use std::collections::VecDeque;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::fields::{CoefficientMatrix, Mat};
use crate::geometry::{BoundingBox, GridDomain};
use crate::metric::{control_distance_multi, horizontal_gradient_norm};
use element::sym_pairs;
use multigrid::{Level, Multigrid};

/// Nodal values with the set of nodes they are meaningful on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub support: Vec<bool>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            support: vec![false; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop when `‖r‖ ≤ rtol ‖b‖` on the free block.
    pub rtol: f64,
    /// Defaults to `50 · sqrt(#unknowns)`.
    pub maxit: Option<usize>,
    /// Gauss–Seidel sweeps before and after each coarse correction.
    pub smoothing: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            maxit: None,
            smoothing: 2,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub unknowns: usize,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: ScalarField,
    pub stats: SolveStats,
}

/// Symmetric PSD stiffness of `B` over the grid, with a cached multigrid hierarchy.
#[derive(Debug)]
pub struct EnergyForm {
    domain: Arc<GridDomain>,
    coeff: CoefficientMatrix,
    b_const: Option<Vec<f64>>,
    level0: Level,
    coarse: OnceLock<Vec<Level>>,
}

fn upper(b: &Mat, n: usize, x: &[f64]) -> Result<Vec<f64>> {
    for i in 0..n {
        for j in i + 1..n {
            if b[i * n + j] != b[j * n + i] {
                return Err(Error::Assembly(format!(
                    "coefficient matrix is not symmetric at {x:?}: b[{i}][{j}] = {} but b[{j}][{i}] = {}",
                    b[i * n + j],
                    b[j * n + i]
                )));
            }
        }
    }
    if b[..n * n].iter().any(|v| !v.is_finite()) {
        return Err(Error::Assembly(format!("coefficient matrix is not finite at {x:?}")));
    }
    Ok(sym_pairs(n).iter().map(|&(i, j)| b[i * n + j]).collect())
}

impl EnergyForm {
    pub fn assemble(domain: Arc<GridDomain>, coeff: CoefficientMatrix) -> Result<Self> {
        let bbox = domain.bbox();
        let n = bbox.dim();
        if coeff.dim() != n {
            return config("coefficient matrix and grid dimensions differ");
        }
        let lat = bbox.lattice().clone();
        let h = bbox.h();
        let active = domain.mask_d().to_vec();
        let mut bm = [0.0; 9];
        let (level0, b_const) = if coeff.is_constant() {
            let x: Vec<f64> = (0..n).map(|d| 0.5 * (bbox.lo()[d] + bbox.hi()[d])).collect();
            coeff.evaluate_into(&x, &mut bm);
            let b = upper(&bm, n, &x)?;
            (Level::new_uniform(lat, h, &b, active), Some(b))
        } else {
            let ns = n * (n + 1) / 2;
            let mut elem = vec![0.0; lat.len() * ns];
            let mut c = [0usize; 3];
            let mut x = [0.0; 3];
            for e in 0..lat.len() {
                lat.coords(e, &mut c[..n]);
                if (0..n).any(|d| c[d] + 2 > lat.dims()[d]) {
                    continue;
                }
                bbox.node_center_into(e, &mut x[..n]);
                for v in x[..n].iter_mut() {
                    *v += 0.5 * h;
                }
                coeff.evaluate_into(&x[..n], &mut bm);
                let b = upper(&bm, n, &x[..n])?;
                elem[e * ns..(e + 1) * ns].copy_from_slice(&b);
            }
            (Level::new_variable(lat, h, elem, active), None)
        };
        Ok(Self {
            domain,
            coeff,
            b_const,
            level0,
            coarse: OnceLock::new(),
        })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn domain_arc(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.coeff
    }

    pub fn bbox(&self) -> &BoundingBox {
        self.domain.bbox()
    }

    /// Element and quadrature description for reports.
    pub fn quadrature(&self) -> &'static str {
        "nodal multilinear elements; coefficient frozen at the cell midpoint; exact gradient integrals"
    }

    fn levels(&self) -> Vec<&Level> {
        let coarse = self.coarse.get_or_init(|| {
            let mut v: Vec<Level> = Vec::new();
            loop {
                let last = v.last().unwrap_or(&self.level0);
                match last.coarsen() {
                    Some(l) => v.push(l),
                    None => break,
                }
            }
            v
        });
        std::iter::once(&self.level0).chain(coarse.iter()).collect()
    }

    /// 3^N stencil row of a node off the outer lattice layer.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let l = &self.level0;
        if l.active[i] {
            return l.row(i).to_vec();
        }
        assert!(l.lat.is_interior(i), "stiffness rows exist only off the outer lattice layer");
        match &l.uniform {
            Some(s) => s.clone(),
            None => {
                let mut out = vec![0.0; l.m];
                l.reference.row_from_elements(&l.elem_b, i, l.h, &mut out);
                out
            }
        }
    }

    /// `(S u)_i` for a node off the outer lattice layer.
    pub fn apply_row(&self, i: usize, u: &[f64]) -> f64 {
        let l = &self.level0;
        let dot = |row: &[f64]| (0..l.m).map(|k| row[k] * u[(i as isize + l.lin[k]) as usize]).sum::<f64>();
        if l.active[i] {
            dot(l.row(i))
        } else {
            dot(&self.row(i))
        }
    }

    /// `uᵀ S v`, summed element by element.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let l = &self.level0;
        let r = &l.reference;
        let n = l.lat.dim();
        let nc = r.corners;
        let kconst: Option<Vec<f64>> = self.b_const.as_ref().map(|b| {
            let mut k = vec![0.0; nc * nc];
            for a in 0..nc {
                for c in 0..nc {
                    k[a * nc + c] = r.entry(b, a, c);
                }
            }
            k
        });
        let mut ua = [0.0; 8];
        let mut va = [0.0; 8];
        let mut coords = [0usize; 3];
        let mut total = 0.0;
        for e in 0..l.lat.len() {
            l.lat.coords(e, &mut coords[..n]);
            if (0..n).any(|d| coords[d] + 2 > l.lat.dims()[d]) {
                continue;
            }
            let (mut nzu, mut nzv) = (false, false);
            for a in 0..nc {
                let j = (e as isize + r.corner_offsets[a]) as usize;
                ua[a] = u[j];
                va[a] = v[j];
                nzu |= ua[a] != 0.0;
                nzv |= va[a] != 0.0;
            }
            if !nzu || !nzv {
                continue;
            }
            let mut s = 0.0;
            match &kconst {
                Some(k) => {
                    for a in 0..nc {
                        for c in 0..nc {
                            s += ua[a] * k[a * nc + c] * va[c];
                        }
                    }
                }
                None => {
                    let b = &l.elem_b[e * r.ns..(e + 1) * r.ns];
                    for a in 0..nc {
                        for c in 0..nc {
                            s += ua[a] * r.entry(b, a, c) * va[c];
                        }
                    }
                }
            }
            total += s;
        }
        total * r.scale(l.h)
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.bilinear(u, u)
    }

    /// True when every stored row has nonpositive off-diagonal entries (discrete maximum
    /// principle holds exactly).
    pub fn is_m_matrix(&self) -> bool {
        let l = &self.level0;
        let ok = |row: &[f64]| {
            let d = row[l.centre];
            row.iter().enumerate().all(|(k, &v)| k == l.centre || v <= 1e-12 * d.abs())
        };
        match &l.uniform {
            Some(s) => ok(s),
            None => (0..l.lat.len()).filter(|&i| l.active[i]).all(|i| ok(l.row(i))),
        }
    }

    /// Slack allowed on the maximum principle: `1e-8` for M-matrix stiffness, otherwise
    /// `5e-3 · osc(g)`.
    pub fn mp_tolerance(&self, oscillation: f64) -> f64 {
        if self.is_m_matrix() {
            1e-8
        } else {
            5e-3 * oscillation
        }
    }

    /// `max_i Σ_k |S_ik u_k|` over the rows of `D`: the magnitude against which row residuals are
    /// judged.
    pub fn residual_scale(&self, u: &[f64]) -> f64 {
        let l = &self.level0;
        (0..u.len())
            .filter(|&i| l.active[i])
            .map(|i| {
                let row = l.row(i);
                (0..l.m).map(|k| (row[k] * u[(i as isize + l.lin[k]) as usize]).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Unknowns on `free`, prescribed values elsewhere, optional right-hand side on the free rows.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub free: Vec<bool>,
    pub values: Vec<f64>,
    pub source: Option<Vec<f64>>,
}

impl DirichletProblem {
    /// `L u = 0` in `Ω`, `u = g` on every other node.
    pub fn harmonic(domain: &GridDomain, g: impl Fn(&[f64]) -> f64) -> Self {
        let b = domain.bbox();
        let values = (0..b.node_count())
            .map(|i| if domain.in_omega(i) { 0.0 } else { g(&b.node_center(i)) })
            .collect();
        Self {
            free: domain.mask_omega().to_vec(),
            values,
            source: None,
        }
    }
}

fn neighbours_of_free(form: &EnergyForm, free: &[bool]) -> Vec<bool> {
    let lat = form.bbox().lattice();
    let mut reach = free.to_vec();
    for i in 0..free.len() {
        if free[i] {
            lat.for_each_neighbor(i, |j| reach[j] = true);
        }
    }
    reach
}

/// Minimizes the energy over fields matching the prescribed values off `free`.
pub fn solve_dirichlet(form: &EnergyForm, p: &DirichletProblem, opts: &SolverOptions) -> Result<Solution> {
    let l0 = &form.level0;
    let n = l0.lat.len();
    if p.free.len() != n || p.values.len() != n || p.source.as_ref().map_or(false, |s| s.len() != n) {
        return config("Dirichlet problem arrays do not match the grid");
    }
    if let Some(i) = (0..n).find(|&i| p.free[i] && !l0.active[i]) {
        return config(format!(
            "unknown at {:?} lies outside D",
            form.bbox().node_center(i)
        ));
    }
    let mut u = p.values.clone();
    let mut free_list = Vec::new();
    for i in 0..n {
        if p.free[i] {
            u[i] = 0.0;
            free_list.push(i as u32);
        }
    }
    let mut b = vec![0.0; n];
    for &i in &free_list {
        let i = i as usize;
        let row = l0.row(i);
        let mut acc = p.source.as_ref().map_or(0.0, |s| s[i]);
        for k in 0..l0.m {
            let j = (i as isize + l0.lin[k]) as usize;
            if !p.free[j] {
                if !u[j].is_finite() {
                    return config(format!("boundary value at {:?} is not finite", form.bbox().node_center(j)));
                }
                acc -= row[k] * u[j];
            }
        }
        if !acc.is_finite() {
            return config("right-hand side is not finite");
        }
        b[i] = acc;
    }
    let unknowns = free_list.len();
    let levels = form.levels();
    let mg = Multigrid::new(&levels, free_list, p.free.clone(), opts.smoothing);
    let maxit = opts
        .maxit
        .unwrap_or_else(|| ((50.0 * (unknowns as f64).sqrt()).ceil() as usize).max(50));
    let mut x = vec![0.0; n];
    let (iterations, residual, ok) = mg.pcg(&b, &mut x, opts.rtol, maxit);
    if !ok {
        return Err(Error::Solver {
            iterations,
            residual,
            floating: floating_nodes(form, &p.free),
        });
    }
    for i in 0..n {
        if p.free[i] {
            u[i] = x[i];
        }
    }
    log::debug!("dirichlet solve: {unknowns} unknowns, {iterations} iterations, residual {residual:.2e}");
    Ok(Solution {
        field: ScalarField {
            values: u,
            support: neighbours_of_free(form, &p.free),
        },
        stats: SolveStats {
            iterations,
            relative_residual: residual,
            unknowns,
            levels: mg.depth(),
        },
    })
}

/// Free nodes not connected, through nonzero stiffness couplings among free nodes, to any
/// prescribed node.
pub fn floating_nodes(form: &EnergyForm, free: &[bool]) -> Vec<usize> {
    let l0 = &form.level0;
    let n = free.len();
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if !free[i] {
            continue;
        }
        let row = l0.row(i);
        let anchored = (0..l0.m).any(|k| {
            let j = (i as isize + l0.lin[k]) as usize;
            k != l0.centre && !free[j] && row[k] != 0.0
        });
        if anchored {
            reached[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let row = l0.row(i);
        for k in 0..l0.m {
            let j = (i as isize + l0.lin[k]) as usize;
            if free[j] && !reached[j] && row[k] != 0.0 {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).filter(|&i| free[i] && !reached[i]).collect()
}

/// `max |(S u − f)_i|` over the free nodes.
pub fn interior_residual(form: &EnergyForm, free: &[bool], u: &[f64], source: Option<&[f64]>) -> f64 {
    (0..u.len())
        .filter(|&i| free[i])
        .map(|i| (form.apply_row(i, u) - source.map_or(0.0, |s| s[i])).abs())
        .fold(0.0, f64::max)
}

/// `max_free u − max_{prescribed neighbours of free} u`; positive values violate the maximum
/// principle.
pub fn max_principle_excess(form: &EnergyForm, free: &[bool], u: &[f64]) -> f64 {
    let reach = neighbours_of_free(form, free);
    let mut inner = f64::NEG_INFINITY;
    let mut outer = f64::NEG_INFINITY;
    for i in 0..u.len() {
        if free[i] {
            inner = inner.max(u[i]);
        } else if reach[i] {
            outer = outer.max(u[i]);
        }
    }
    inner - outer
}

/// `dist(K, ∂Ω) · ‖Xu‖_{L²(K)} / ‖u‖_{L²(Ω)}` for a solution of `L u = 0` in `Ω`.
/// The distance is the control distance from the `∂Ω` nodes.
pub fn caccioppoli_ratio(form: &EnergyForm, u: &[f64], k_nodes: &[usize]) -> Result<f64> {
    let dom = form.domain();
    let bbox = dom.bbox();
    let h = bbox.h();
    if k_nodes.is_empty() || k_nodes.iter().any(|&i| !dom.in_omega(i)) {
        return config("Caccioppoli set K must be a nonempty subset of Ω");
    }
    let scale = form.residual_scale(u);
    let res = interior_residual(form, dom.mask_omega(), u, None);
    if res > 1e-6 * scale {
        return Err(Error::Misuse(format!(
            "field is not a discrete solution in Ω (residual {res:.3e} vs scale {scale:.3e})"
        )));
    }
    let family = form.coefficients().family();
    let dist = control_distance_multi(family, bbox, dom.boundary_nodes(), None)?;
    let d = k_nodes.iter().map(|&i| dist.value(i)).fold(f64::INFINITY, f64::min);
    if !(d >= 4.0 * h * (1.0 - 1e-12)) {
        return config(format!("K is within {d:.3e} of ∂Ω; need at least four cells"));
    }
    let vol = h.powi(bbox.dim() as i32);
    let xu: f64 = k_nodes
        .iter()
        .map(|&i| horizontal_gradient_norm(family, bbox, u, i).powi(2))
        .sum::<f64>()
        * vol;
    let uu: f64 = (0..u.len()).filter(|&i| dom.in_omega(i)).map(|i| u[i] * u[i]).sum::<f64>() * vol;
    if uu == 0.0 {
        return Ok(0.0);
    }
    Ok(d * xu.sqrt() / uu.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldFamily, MatrixSpec};
    use crate::geometry::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk_domain(h: f64, r_omega: f64, r_d: f64) -> Arc<GridDomain> {
        let b = BoundingBox::around(&[0.0, 0.0], &[r_d + 3.0 * h, r_d + 3.0 * h], h, true).unwrap();
        let d = Shape::Ball { center: vec![0.0, 0.0], radius: r_d };
        let o = Shape::Ball { center: vec![0.0, 0.0], radius: r_omega };
        Arc::new(GridDomain::from_shapes(b, &d, &o).unwrap())
    }

    fn form(dom: &Arc<GridDomain>, fam: FieldFamily, spec: MatrixSpec) -> EnergyForm {
        let c = CoefficientMatrix::new(&fam, spec, dom.bbox()).unwrap();
        EnergyForm::assemble(dom.clone(), c).unwrap()
    }

    fn identity() -> MatrixSpec {
        MatrixSpec::Structure { scale: 1.0 }
    }

    #[test]
    fn constant_field_has_zero_rows() {
        let dom = disk_domain(0.05, 0.8, 0.9);
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        let one = vec![1.0; dom.bbox().node_count()];
        let worst = (0..one.len()).filter(|&i| dom.in_d(i)).map(|i| f.apply_row(i, &one).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-13);
        assert_eq!(f.row(dom.bbox().nearest_node(&[0.0, 0.0]).unwrap())[4], 8.0 / 3.0);
    }

    #[test]
    fn energy_of_linear_function_on_unit_square() {
        let n = 40;
        let b = BoundingBox::new(&[0.0, 0.0], &[1.0, 1.0], &[n, n]).unwrap();
        let d = Shape::Box { lo: vec![0.1, 0.1], hi: vec![0.9, 0.9] };
        let o = Shape::Box { lo: vec![0.2, 0.2], hi: vec![0.8, 0.8] };
        let dom = Arc::new(GridDomain::from_shapes(b.clone(), &d, &o).unwrap());
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        let u: Vec<f64> = (0..b.node_count()).map(|i| b.node_center(i)[0]).collect();
        // The node lattice spans [h/2, 1 − h/2]², so its elements cover (1 − h)² of area.
        let area = (1.0 - b.h()).powi(2);
        assert!((f.energy(&u) - area).abs() < 1e-10);
    }

    #[test]
    fn grushin_energy_of_vertical_coordinate() {
        let h = 1.0 / 128.0;
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], h, false).unwrap();
        let d = Shape::Ball { center: vec![0.0, 0.0], radius: 0.9 };
        let o = Shape::Ball { center: vec![0.0, 0.0], radius: 0.8 };
        let dom = Arc::new(GridDomain::from_shapes(b.clone(), &d, &o).unwrap());
        let f = form(&dom, FieldFamily::Grushin { alpha: 1.0 }, identity());
        let u: Vec<f64> = (0..b.node_count()).map(|i| b.node_center(i)[1]).collect();
        // Elements cover [lo + h/2, hi − h/2]²; ∫ x_1² over it.
        let (a, c) = (b.lo()[0] + h / 2.0, b.hi()[0] - h / 2.0);
        let exact = (c.powi(3) - a.powi(3)) / 3.0 * (c - a);
        assert!((f.energy(&u) / exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn bilinear_form_is_symmetric_and_matches_rows() {
        let dom = disk_domain(0.05, 0.8, 0.9);
        let r = crate::fields::random_symmetric(&[-0.9, 0.8], 4);
        let fam = FieldFamily::Grushin { alpha: 1.0 };
        let f = form(&dom, fam, MatrixSpec::Sandwich { c1: 1.0, c2: 0.5, r });
        let n = dom.bbox().node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rand_field = || -> Vec<f64> {
            (0..n).map(|i| if dom.in_d(i) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()
        };
        for _ in 0..3 {
            let (u, v) = (rand_field(), rand_field());
            let (a, b) = (f.bilinear(&u, &v), f.bilinear(&v, &u));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let rows: f64 = (0..n).filter(|&i| dom.in_d(i)).map(|i| u[i] * f.apply_row(i, &v)).sum();
            assert!((rows - a).abs() <= 1e-10 * a.abs().max(1.0));
            assert!(f.energy(&u) >= -1e-10);
        }
    }

    #[test]
    fn ellipticity_transfers_to_energies() {
        let dom = disk_domain(0.05, 0.8, 0.9);
        let fam = FieldFamily::Grushin { alpha: 1.0 };
        let sa = form(&dom, fam.clone(), identity());
        let r = crate::fields::random_symmetric(&[-1.0, 1.0], 2);
        let spec = MatrixSpec::Sandwich { c1: 1.0, c2: 0.3, r };
        let sb = form(&dom, fam, spec);
        let (lam, big) = (sb.coefficients().lambda(), sb.coefficients().big_lambda());
        let n = dom.bbox().node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let u: Vec<f64> = (0..n).map(|i| if dom.in_d(i) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            let (ea, eb) = (sa.energy(&u), sb.energy(&u));
            assert!(lam * ea <= eb * (1.0 + 1e-12) && eb <= big * ea * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let dom = disk_domain(1.0 / 64.0, 0.8, 0.9);
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        let p = DirichletProblem::harmonic(&dom, |_| 3.5);
        let s = solve_dirichlet(&f, &p, &SolverOptions::default()).unwrap();
        for i in 0..s.field.values.len() {
            if dom.in_omega(i) {
                assert!((s.field.values[i] - 3.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linear_data_is_reproduced() {
        let dom = disk_domain(1.0 / 128.0, 1.0, 1.05);
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        let p = DirichletProblem::harmonic(&dom, |x| x[0]);
        let s = solve_dirichlet(&f, &p, &SolverOptions::default()).unwrap();
        let b = dom.bbox();
        let err = (0..b.node_count())
            .filter(|&i| dom.in_omega(i))
            .map(|i| (s.field.values[i] - b.node_center(i)[0]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        assert!(s.stats.iterations < 40, "{:?}", s.stats);
        let res = interior_residual(&f, &p.free, &s.field.values, None);
        assert!(res <= 1e-9 * f.residual_scale(&s.field.values).max(1.0));
    }

    #[test]
    fn grushin_solve_converges() {
        let dom = disk_domain(1.0 / 128.0, 0.8, 0.9);
        let f = form(&dom, FieldFamily::Grushin { alpha: 1.0 }, identity());
        let p = DirichletProblem::harmonic(&dom, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let s = solve_dirichlet(&f, &p, &SolverOptions::default()).unwrap();
        assert!(s.stats.relative_residual <= 1e-9);
        assert!(max_principle_excess(&f, &p.free, &s.field.values) <= 1e-8);
    }

    #[test]
    fn mixed_matrix_is_not_monotone() {
        let dom = disk_domain(0.05, 0.8, 0.9);
        let m = vec![vec![1.0, 0.9], vec![0.9, 1.0]];
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, MatrixSpec::Constant { matrix: m });
        assert!(!f.is_m_matrix());
        assert_eq!(f.mp_tolerance(2.0), 1e-2);
        let g = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        assert!(g.is_m_matrix());
    }

    #[test]
    fn unsymmetric_matrix_is_an_assembly_error() {
        let dom = disk_domain(0.1, 0.6, 0.8);
        let m = vec![vec![1.0, 0.1], vec![0.0, 1.0]];
        let c = CoefficientMatrix::new(&FieldFamily::Euclidean { dim: 2 }, MatrixSpec::Constant { matrix: m }, dom.bbox());
        // The band check may already reject it; if not, assembly must.
        if let Ok(c) = c {
            assert!(matches!(EnergyForm::assemble(dom, c), Err(Error::Assembly(_))));
        }
    }

    #[test]
    fn decoupled_unknowns_are_reported_as_floating() {
        // Vanishing fields give a zero stiffness: nothing couples the unknowns to the data.
        use crate::fields::Profile;
        let dom = disk_domain(0.05, 0.8, 0.9);
        let fam = FieldFamily::Diagonal {
            factors: vec![Profile::Constant { value: 0.0 }, Profile::Constant { value: 0.0 }],
        };
        let c = CoefficientMatrix::new(&fam, identity(), dom.bbox()).unwrap();
        let f = EnergyForm::assemble(dom.clone(), c).unwrap();
        let mut p = DirichletProblem::harmonic(&dom, |x| x[0]);
        p.source = Some(p.free.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect());
        let omega = dom.mask_omega().iter().filter(|&&x| x).count();
        assert_eq!(floating_nodes(&f, &p.free).len(), omega);
        match solve_dirichlet(&f, &p, &SolverOptions::default()) {
            Err(Error::Solver { floating, .. }) => assert_eq!(floating.len(), omega),
            other => panic!("expected a solver error, got {other:?}"),
        }
        let g = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        assert!(floating_nodes(&g, &p.free).is_empty());
    }

    #[test]
    fn caccioppoli_for_linear_solution() {
        let h = 1.0 / 128.0;
        let dom = disk_domain(h, 1.0, 1.05);
        let f = form(&dom, FieldFamily::Euclidean { dim: 2 }, identity());
        let p = DirichletProblem::harmonic(&dom, |x| x[0]);
        let s = solve_dirichlet(&f, &p, &SolverOptions::default()).unwrap();
        let b = dom.bbox();
        let k: Vec<usize> = (0..b.node_count())
            .filter(|&i| {
                let x = b.node_center(i);
                x[0] * x[0] + x[1] * x[1] <= 0.25
            })
            .collect();
        let r = caccioppoli_ratio(&f, &s.field.values, &k).unwrap();
        // Graph distance overestimates the Euclidean 0.5 by at most the stencil factor.
        assert!(r > 0.5 * 0.97 && r < 0.5 * 1.09, "{r}");
        let zero = vec![0.0; b.node_count()];
        assert_eq!(caccioppoli_ratio(&f, &zero, &k).unwrap(), 0.0);
        let mut bad = s.field.values.clone();
        bad[k[k.len() / 2]] += 1.0;
        assert!(matches!(caccioppoli_ratio(&f, &bad, &k), Err(Error::Misuse(_))));
    }
}
