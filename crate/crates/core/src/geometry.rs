//! Bounding boxes, declarative shapes and their rasterization into node masks, and the
//! host/test domain pair `(D, Ω)` together with the obstacle sets `K_ρ`.
//!
//! Nodes sit at cell centres: node `i` of axis `d` is at `lo[d] + (i + 1/2) h`. A node belongs to
//! a shape iff its centre satisfies the shape predicate.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::lattice::Lattice;
use crate::metric::DistanceField;

/// Boolean value per node, row-major.
pub type Mask = Vec<bool>;

const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n_cells: Vec<usize>,
    h: f64,
    lattice: Lattice,
}

impl BoundingBox {
    pub fn new(lo: &[f64], hi: &[f64], n_cells: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || dim > MAX_DIM {
            return config(format!("dimension {dim} not supported (1..={MAX_DIM})"));
        }
        if hi.len() != dim || n_cells.len() != dim {
            return config("lo, hi and n_cells must have the same length");
        }
        for d in 0..dim {
            if !(hi[d] > lo[d]) || !lo[d].is_finite() || !hi[d].is_finite() {
                return config(format!("box axis {d}: need finite lo < hi"));
            }
            if n_cells[d] < 3 {
                return config(format!("box axis {d}: need at least 3 cells"));
            }
        }
        let h = (hi[0] - lo[0]) / n_cells[0] as f64;
        for d in 1..dim {
            let hd = (hi[d] - lo[d]) / n_cells[d] as f64;
            if ((hd - h) / h).abs() > 1e-12 {
                return config(format!(
                    "cell width differs between axes ({h} vs {hd}); cells must be cubes"
                ));
            }
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            n_cells: n_cells.to_vec(),
            h,
            lattice: Lattice::new(n_cells),
        })
    }

    /// Box with cell width `h` whose extent is the smallest covering `[center - half_width,
    /// center + half_width]` per axis. With `node_at_center` the cell count per axis is odd and a
    /// node sits exactly on `center`; otherwise it is even and `center` is a cell corner.
    pub fn around(center: &[f64], half_width: &[f64], h: f64, node_at_center: bool) -> Result<Self> {
        if center.len() != half_width.len() {
            return config("center and half_width must have the same length");
        }
        if !(h > 0.0) {
            return config("cell width must be positive");
        }
        let mut lo = Vec::with_capacity(center.len());
        let mut hi = Vec::with_capacity(center.len());
        let mut n = Vec::with_capacity(center.len());
        for (&c, &w) in center.iter().zip(half_width) {
            let mut k = (2.0 * w / h - 1e-9).ceil().max(3.0) as usize;
            if (k % 2 == 1) != node_at_center {
                k += 1;
            }
            lo.push(c - k as f64 * h / 2.0);
            hi.push(c + k as f64 * h / 2.0);
            n.push(k);
        }
        Self::new(&lo, &hi, &n)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn node_count(&self) -> usize {
        self.lattice.len()
    }

    pub fn node_center_into(&self, index: usize, out: &mut [f64]) {
        let mut c = [0usize; MAX_DIM];
        self.lattice.coords(index, &mut c[..self.dim()]);
        for d in 0..self.dim() {
            out[d] = self.lo[d] + (c[d] as f64 + 0.5) * self.h;
        }
    }

    pub fn node_center(&self, index: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.node_center_into(index, &mut p);
        p
    }

    /// Node whose cell contains `p` (clamped to the box), or `None` if `p` is outside the box.
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.dim() {
            return None;
        }
        let mut c = [0usize; MAX_DIM];
        for d in 0..self.dim() {
            if p[d] < self.lo[d] || p[d] > self.hi[d] {
                return None;
            }
            let i = ((p[d] - self.lo[d]) / self.h).floor() as isize;
            c[d] = i.clamp(0, self.n_cells[d] as isize - 1) as usize;
        }
        Some(self.lattice.index(&c[..self.dim()]))
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().enumerate().all(|(d, &x)| x >= self.lo[d] && x <= self.hi[d])
    }
}

/// Radius profile of a cusp around its axis, as a function of the height `t > 0` above the apex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CuspProfile {
    /// `r(t) = scale * t^exponent`.
    Power { exponent: f64, #[serde(default = "one")] scale: f64 },
    /// `r(t) = exp(-rate / t)`: the Lebesgue spine.
    Exponential { #[serde(default = "one")] rate: f64 },
}

fn one() -> f64 {
    1.0
}

impl CuspProfile {
    pub fn radius(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            CuspProfile::Power { exponent, scale } => scale * t.powf(exponent),
            CuspProfile::Exponential { rate } => (-rate / t).exp(),
        }
    }
}

/// Shape expression tree. Every variant is a closed set except where noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : <normal, x> >= offset}`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Solid of revolution `{apex + t·axis + w : 0 < t <= length, |w| <= r(t), w ⟂ axis}`.
    CuspSpine {
        apex: Vec<f64>,
        axis: Vec<f64>,
        profile: CuspProfile,
        #[serde(default)]
        length: Option<f64>,
    },
    /// Solid cone with vertex `apex`, symmetric about `axis`, of half-aperture `half_angle`.
    Cone { apex: Vec<f64>, axis: Vec<f64>, half_angle: f64 },
    /// The single grid cell containing `center`.
    PointCell { center: Vec<f64> },
    Union { of: Vec<Shape> },
    Intersection { of: Vec<Shape> },
    Complement { of: Box<Shape> },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_len(name: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return config(format!("{name} has length {} in a {dim}-dimensional box", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return config(format!("{name} has non-finite entries"));
    }
    Ok(())
}

impl Shape {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Shape::Ball { center, radius } => {
                check_len("ball center", center, dim)?;
                if !(*radius > 0.0) {
                    return config("ball radius must be positive");
                }
            }
            Shape::Box { lo, hi } => {
                check_len("box lo", lo, dim)?;
                check_len("box hi", hi, dim)?;
                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    return config("box needs lo <= hi");
                }
            }
            Shape::HalfSpace { normal, offset } => {
                check_len("half-space normal", normal, dim)?;
                if norm(normal) == 0.0 || !offset.is_finite() {
                    return config("half-space needs a nonzero normal and finite offset");
                }
            }
            Shape::CuspSpine { apex, axis, profile, length } => {
                check_len("spine apex", apex, dim)?;
                check_len("spine axis", axis, dim)?;
                if norm(axis) == 0.0 {
                    return config("spine axis must be nonzero");
                }
                if let Some(l) = length {
                    if !(*l > 0.0) {
                        return config("spine length must be positive");
                    }
                }
                match *profile {
                    CuspProfile::Power { exponent, scale } => {
                        if !(exponent > 0.0) || !(scale > 0.0) {
                            return config("power cusp needs positive exponent and scale");
                        }
                    }
                    CuspProfile::Exponential { rate } => {
                        if !(rate > 0.0) {
                            return config("exponential cusp needs a positive rate");
                        }
                    }
                }
            }
            Shape::Cone { apex, axis, half_angle } => {
                check_len("cone apex", apex, dim)?;
                check_len("cone axis", axis, dim)?;
                if norm(axis) == 0.0 {
                    return config("cone axis must be nonzero");
                }
                if !(*half_angle > 0.0 && *half_angle < std::f64::consts::PI) {
                    return config("cone half-angle must lie in (0, pi)");
                }
            }
            Shape::PointCell { center } => check_len("point-cell center", center, dim)?,
            Shape::Union { of } | Shape::Intersection { of } => {
                if of.is_empty() {
                    return config("union/intersection needs at least one operand");
                }
                for s in of {
                    s.validate(dim)?;
                }
            }
            Shape::Complement { of } => of.validate(dim)?,
        }
        Ok(())
    }

    /// Membership of the point `x`; `h` is the cell width (only `PointCell` depends on it).
    pub fn contains(&self, x: &[f64], h: f64) -> bool {
        match self {
            Shape::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() <= radius * radius
            }
            Shape::Box { lo, hi } => x.iter().enumerate().all(|(d, &v)| v >= lo[d] && v <= hi[d]),
            Shape::HalfSpace { normal, offset } => {
                x.iter().zip(normal).map(|(a, n)| a * n).sum::<f64>() >= *offset
            }
            Shape::CuspSpine { apex, axis, profile, length } => {
                let an = norm(axis);
                let t: f64 = x.iter().zip(apex).zip(axis).map(|((a, p), v)| (a - p) * v).sum::<f64>() / an;
                if t <= 0.0 || length.map_or(false, |l| t > l) {
                    return false;
                }
                let r2: f64 = x
                    .iter()
                    .zip(apex)
                    .zip(axis)
                    .map(|((a, p), v)| {
                        let w = a - p - t * v / an;
                        w * w
                    })
                    .sum();
                let r = profile.radius(t);
                r2 <= r * r
            }
            Shape::Cone { apex, axis, half_angle } => {
                let an = norm(axis);
                let w: Vec<f64> = x.iter().zip(apex).map(|(a, p)| a - p).collect();
                let wn = norm(&w);
                if wn == 0.0 {
                    return true;
                }
                let c: f64 = w.iter().zip(axis).map(|(a, v)| a * v).sum::<f64>() / (an * wn);
                c >= half_angle.cos() - 1e-12
            }
            Shape::PointCell { center } => x.iter().zip(center).all(|(a, c)| {
                let t = (a - c) / h;
                (-0.5 - 1e-9..0.5 - 1e-9).contains(&t)
            }),
            Shape::Union { of } => of.iter().any(|s| s.contains(x, h)),
            Shape::Intersection { of } => of.iter().all(|s| s.contains(x, h)),
            Shape::Complement { of } => !of.contains(x, h),
        }
    }
}

/// Marks every node whose cell centre satisfies the shape predicate.
pub fn rasterize(shape: &Shape, bbox: &BoundingBox) -> Result<Mask> {
    shape.validate(bbox.dim())?;
    let mut p = vec![0.0; bbox.dim()];
    Ok((0..bbox.node_count())
        .map(|i| {
            bbox.node_center_into(i, &mut p);
            shape.contains(&p, bbox.h())
        })
        .collect())
}

/// Host domain `D`, test domain `Ω ⊂⊂ D` and the nodes of `∂Ω`.
#[derive(Debug, Clone)]
pub struct GridDomain {
    bbox: BoundingBox,
    mask_d: Mask,
    mask_omega: Mask,
    boundary_nodes: Vec<usize>,
}

impl GridDomain {
    /// Checks that `D` keeps off the outer layer of the box and that every `Ω` node has its
    /// whole 3^N neighbourhood inside `D` (so `Ω` stays at least two cells from `∁D`).
    pub fn new(bbox: BoundingBox, mask_d: Mask, mask_omega: Mask) -> Result<Self> {
        let n = bbox.node_count();
        if mask_d.len() != n || mask_omega.len() != n {
            return config("mask sizes do not match the box");
        }
        let lat = bbox.lattice().clone();
        if let Some(i) = (0..n).find(|&i| mask_d[i] && !lat.is_interior(i)) {
            return config(format!(
                "D touches the edge of the bounding box at {:?}; enlarge the box",
                bbox.node_center(i)
            ));
        }
        for i in 0..n {
            if !mask_omega[i] {
                continue;
            }
            if !mask_d[i] {
                return config(format!("Ω is not contained in D at {:?}", bbox.node_center(i)));
            }
            let mut ok = true;
            lat.for_each_neighbor(i, |j| ok &= mask_d[j]);
            if !ok {
                return config(format!(
                    "Ω must be compactly contained in D: node {:?} is adjacent to the complement of D",
                    bbox.node_center(i)
                ));
            }
        }
        let mut boundary_nodes = Vec::new();
        for i in 0..n {
            if mask_omega[i] {
                continue;
            }
            let mut touches = false;
            lat.for_each_neighbor(i, |j| touches |= mask_omega[j]);
            if touches {
                boundary_nodes.push(i);
            }
        }
        Ok(Self {
            bbox,
            mask_d,
            mask_omega,
            boundary_nodes,
        })
    }

    pub fn from_shapes(bbox: BoundingBox, d: &Shape, omega: &Shape) -> Result<Self> {
        let mask_d = rasterize(d, &bbox)?;
        let mask_omega = rasterize(omega, &bbox)?;
        Self::new(bbox, mask_d, mask_omega)
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn mask_d(&self) -> &[bool] {
        &self.mask_d
    }

    pub fn mask_omega(&self) -> &[bool] {
        &self.mask_omega
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn in_d(&self, i: usize) -> bool {
        self.mask_d[i]
    }

    pub fn in_omega(&self, i: usize) -> bool {
        self.mask_omega[i]
    }

    /// True when the node and its whole 3^N neighbourhood lie in `D`.
    pub fn deep_in_d(&self, i: usize) -> bool {
        if !self.mask_d[i] {
            return false;
        }
        let mut ok = true;
        self.bbox.lattice().for_each_neighbor(i, |j| ok &= self.mask_d[j]);
        ok
    }

    /// Nearest `∂Ω` node to `y` (Euclidean, ties to the lower index). `y` must lie within one
    /// cell diagonal of that node.
    pub fn snap_to_boundary(&self, y: &[f64]) -> Result<usize> {
        if y.len() != self.bbox.dim() {
            return config("boundary point has the wrong dimension");
        }
        let mut best: Option<(f64, usize)> = None;
        let mut p = vec![0.0; y.len()];
        for &i in &self.boundary_nodes {
            self.bbox.node_center_into(i, &mut p);
            let d2: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, i));
            }
        }
        let (d2, node) = best.ok_or_else(|| Error::Geometry("∂Ω has no nodes".into()))?;
        let tol = self.bbox.h() * (y.len() as f64).sqrt() * (1.0 + 1e-9);
        if d2.sqrt() > tol {
            return Err(Error::Geometry(format!(
                "point {y:?} is {:.3e} away from the nearest boundary node (more than one cell)",
                d2.sqrt()
            )));
        }
        Ok(node)
    }
}

/// `K_ρ = closed d-ball of radius ρ about y, minus Ω`, as sorted node indices. The node `y` itself
/// (a `∂Ω` node) always belongs to it.
pub fn compact_obstacle(domain: &GridDomain, y_node: usize, rho: f64, dist: &DistanceField) -> Result<Vec<usize>> {
    let h = domain.bbox().h();
    if !(rho >= 2.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Radius(format!("ρ = {rho} is below two cells ({})", 2.0 * h)));
    }
    if domain.in_omega(y_node) {
        return Err(Error::Geometry(
            "obstacle centre lies inside Ω, so K_ρ cannot contain it".into(),
        ));
    }
    if dist.source_node() != Some(y_node) {
        return Err(Error::Misuse("distance field is not centred at the obstacle point".into()));
    }
    if !dist.covers(rho) {
        return Err(Error::Radius(format!("distance field was cut off before radius {rho}")));
    }
    let mut k = Vec::new();
    for &i in dist.closed_ball(rho) {
        let i = i as usize;
        if !domain.deep_in_d(i) {
            return Err(Error::Radius(format!(
                "the ball of radius {rho} about y reaches ∂D at {:?}",
                domain.bbox().node_center(i)
            )));
        }
        if !domain.in_omega(i) {
            k.push(i);
        }
    }
    if !k.contains(&y_node) {
        k.push(y_node);
    }
    k.sort_unstable();
    if k.is_empty() {
        return Err(Error::Geometry("K_ρ is empty although y ∈ ∂Ω".into()));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldFamily;
    use crate::metric::control_distance_from_node;

    fn square(h: f64) -> BoundingBox {
        BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], h, false).unwrap()
    }

    #[test]
    fn inconsistent_cell_widths_are_rejected() {
        assert!(BoundingBox::new(&[0.0, 0.0], &[1.0, 2.0], &[10, 10]).is_err());
        assert!(BoundingBox::new(&[0.0, 0.0], &[1.0, 2.0], &[10, 20]).is_ok());
        assert!(BoundingBox::new(&[1.0], &[0.0], &[10]).is_err());
    }

    #[test]
    fn around_places_centre_on_node_or_corner() {
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], 0.1, true).unwrap();
        let i = b.nearest_node(&[0.0, 0.0]).unwrap();
        assert!(b.node_center(i).iter().all(|x| x.abs() < 1e-12));
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], 0.1, false).unwrap();
        let i = b.nearest_node(&[0.0, 0.0]).unwrap();
        assert!(b.node_center(i).iter().all(|x| (x.abs() - 0.05).abs() < 1e-12));
    }

    #[test]
    fn disk_cell_count_matches_area() {
        let h = 0.01;
        let b = square(h);
        let m = rasterize(&Shape::Ball { center: vec![0.0, 0.0], radius: 0.5 }, &b).unwrap();
        let count = m.iter().filter(|&&x| x).count() as f64;
        let expected = std::f64::consts::PI * 0.25 / (h * h);
        assert!((count / expected - 1.0).abs() < 0.02, "{count} vs {expected}");
    }

    #[test]
    fn complement_of_half_space_is_left_half() {
        let b = square(0.05);
        let s = Shape::Intersection {
            of: vec![
                Shape::Complement { of: Box::new(Shape::HalfSpace { normal: vec![1.0, 0.0], offset: 0.0 }) },
                Shape::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] },
            ],
        };
        let m = rasterize(&s, &b).unwrap();
        for i in 0..b.node_count() {
            assert_eq!(m[i], b.node_center(i)[0] < 0.0);
        }
    }

    #[test]
    fn exponential_spine_is_subresolution_near_apex() {
        let h = 1.0 / 32.0;
        let b = BoundingBox::around(&[0.0, 0.0, 0.0], &[0.5, 0.5, 1.0], h, true).unwrap();
        let s = Shape::CuspSpine {
            apex: vec![0.0; 3],
            axis: vec![0.0, 0.0, 1.0],
            profile: CuspProfile::Exponential { rate: 1.0 },
            length: None,
        };
        let m = rasterize(&s, &b).unwrap();
        let cutoff = 1.0 / (1.0f64 / h).ln();
        let mut any = false;
        for i in 0..b.node_count() {
            if !m[i] {
                continue;
            }
            any = true;
            let p = b.node_center(i);
            assert!(p[2] > 0.0);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if p[2] < cutoff {
                assert!(r < h, "cell at {p:?} is wider than one cell below the cutoff");
            }
        }
        assert!(any);
    }

    #[test]
    fn point_cell_marks_exactly_one_node() {
        for node_at_center in [true, false] {
            let b = BoundingBox::around(&[0.0, 0.0], &[0.5, 0.5], 0.1, node_at_center).unwrap();
            let m = rasterize(&Shape::PointCell { center: vec![0.0, 0.0] }, &b).unwrap();
            assert_eq!(m.iter().filter(|&&x| x).count(), 1);
        }
    }

    #[test]
    fn malformed_shapes_are_configuration_errors() {
        let b = square(0.1);
        assert!(rasterize(&Shape::Union { of: vec![] }, &b).is_err());
        assert!(rasterize(&Shape::Ball { center: vec![0.0], radius: 1.0 }, &b).is_err());
        assert!(rasterize(&Shape::Ball { center: vec![0.0, 0.0], radius: -1.0 }, &b).is_err());
        let empty = rasterize(&Shape::Ball { center: vec![5.0, 5.0], radius: 0.1 }, &b).unwrap();
        assert!(empty.iter().all(|&x| !x));
    }

    fn disk_minus(b: &BoundingBox, hole: Shape) -> GridDomain {
        let d = Shape::Ball { center: vec![0.0, 0.0], radius: 0.9 };
        let omega = Shape::Intersection {
            of: vec![
                Shape::Ball { center: vec![0.0, 0.0], radius: 0.8 },
                Shape::Complement { of: Box::new(hole) },
            ],
        };
        GridDomain::from_shapes(b.clone(), &d, &omega).unwrap()
    }

    #[test]
    fn omega_equal_to_d_is_rejected() {
        let b = square(0.05);
        let d = Shape::Ball { center: vec![0.0, 0.0], radius: 0.9 };
        assert!(matches!(GridDomain::from_shapes(b, &d, &d), Err(Error::Config(_))));
    }

    #[test]
    fn puncture_obstacle_is_a_single_node() {
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], 0.05, true).unwrap();
        let dom = disk_minus(&b, Shape::PointCell { center: vec![0.0, 0.0] });
        let y = dom.snap_to_boundary(&[0.0, 0.0]).unwrap();
        let fam = FieldFamily::Euclidean { dim: 2 };
        let dist = control_distance_from_node(&fam, &b, y, Some(0.5)).unwrap();
        for rho in [0.1, 0.2, 0.4] {
            assert_eq!(compact_obstacle(&dom, y, rho, &dist).unwrap(), vec![y]);
        }
    }

    #[test]
    fn half_disk_obstacle_fills_half_the_ball_and_is_monotone() {
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], 0.005, true).unwrap();
        let dom = disk_minus(&b, Shape::HalfSpace { normal: vec![1.0, 0.0], offset: 0.0 });
        let y = dom.snap_to_boundary(&[0.0, 0.0]).unwrap();
        let fam = FieldFamily::Euclidean { dim: 2 };
        let dist = control_distance_from_node(&fam, &b, y, Some(0.3)).unwrap();
        let k = compact_obstacle(&dom, y, 0.1, &dist).unwrap();
        let ball = dist.closed_ball(0.1).len();
        let ratio = k.len() as f64 / ball as f64;
        assert!((ratio - 0.5).abs() < 0.05, "{ratio}");
        let radii = [0.02, 0.05, 0.1, 0.2];
        for w in radii.windows(2) {
            let small = compact_obstacle(&dom, y, w[0], &dist).unwrap();
            let big = compact_obstacle(&dom, y, w[1], &dist).unwrap();
            assert!(small.iter().all(|i| big.binary_search(i).is_ok()));
        }
    }

    #[test]
    fn ball_escaping_d_is_a_radius_error() {
        let b = BoundingBox::around(&[0.0, 0.0], &[1.0, 1.0], 0.05, true).unwrap();
        let dom = disk_minus(&b, Shape::HalfSpace { normal: vec![1.0, 0.0], offset: 0.0 });
        let y = dom.snap_to_boundary(&[0.0, 0.0]).unwrap();
        let fam = FieldFamily::Euclidean { dim: 2 };
        let dist = control_distance_from_node(&fam, &b, y, None).unwrap();
        assert!(matches!(compact_obstacle(&dom, y, 0.95, &dist), Err(Error::Radius(_))));
        assert!(matches!(compact_obstacle(&dom, y, 0.01, &dist), Err(Error::Radius(_))));
    }
}
