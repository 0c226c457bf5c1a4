//! Discrete control distance (shortest paths on the 3^N − 1 neighbour graph), metric balls, ball
//! volumes and the empirical doubling, reverse-doubling and Poincaré constants.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::fields::FieldFamily;
use crate::geometry::BoundingBox;

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances `d(source, ·)` with the settle order, so that every ball is a prefix of `order`.
#[derive(Debug, Clone)]
pub struct DistanceField {
    sources: Vec<usize>,
    values: Vec<f64>,
    order: Vec<u32>,
    cutoff: f64,
    box_reach: f64,
    h: f64,
    dim: usize,
}

impl DistanceField {
    /// `+∞` for nodes that are unreachable or beyond the cutoff.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn source_node(&self) -> Option<usize> {
        (self.sources.len() == 1).then(|| self.sources[0])
    }

    /// Settled nodes in nondecreasing distance.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// True when every node at distance `<= r` has been settled.
    pub fn covers(&self, r: f64) -> bool {
        r <= self.cutoff
    }

    /// Smallest distance at which a node of the outermost box layer is reached.
    pub fn box_reach(&self) -> f64 {
        self.box_reach
    }

    /// True when `B_r` may be cut by the box or by the cutoff.
    pub fn is_truncated(&self, r: f64) -> bool {
        !self.covers(r) || self.box_reach < r
    }

    /// Open ball `{d < r}`.
    pub fn ball(&self, r: f64) -> &[u32] {
        let k = self.order.partition_point(|&i| self.values[i as usize] < r);
        &self.order[..k]
    }

    /// Closed ball `{d <= r}` (with a relative slack of 1e-12 for rounding).
    pub fn closed_ball(&self, r: f64) -> &[u32] {
        let r = r * (1.0 + 1e-12);
        let k = self.order.partition_point(|&i| self.values[i as usize] <= r);
        &self.order[..k]
    }

    /// `|B_r| = #{d < r} · h^N`.
    pub fn ball_volume(&self, r: f64) -> f64 {
        self.ball(r).len() as f64 * self.h.powi(self.dim as i32)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Smallest distance over nodes where `mask` is false (e.g. `dist(x, ∁D)`).
    pub fn distance_to_complement(&self, mask: &[bool]) -> f64 {
        self.order
            .iter()
            .find(|&&i| !mask[i as usize])
            .map_or(f64::INFINITY, |&i| self.values[i as usize])
    }
}

/// Worst-case ratio of stencil path length to Euclidean length over all directions.
pub fn stencil_overestimate(dim: usize) -> f64 {
    let graph_norm = |v: &mut [f64]| -> f64 {
        for x in v.iter_mut() {
            *x = x.abs();
        }
        v.sort_by(|a, b| b.total_cmp(a));
        let mut s = 0.0;
        for k in 0..v.len() {
            let next = if k + 1 < v.len() { v[k + 1] } else { 0.0 };
            s += (v[k] - next) * ((k + 1) as f64).sqrt();
        }
        s
    };
    match dim {
        1 => 1.0,
        2 => (4.0 - 2.0 * 2f64.sqrt()).sqrt(),
        _ => {
            let steps = 400;
            let mut worst: f64 = 1.0;
            for a in 0..=steps {
                for b in 0..=steps {
                    let th = a as f64 / steps as f64 * std::f64::consts::FRAC_PI_2;
                    let ph = b as f64 / steps as f64 * std::f64::consts::FRAC_PI_2;
                    let mut v = [th.cos() * ph.sin(), th.sin() * ph.sin(), ph.cos()];
                    worst = worst.max(graph_norm(&mut v));
                }
            }
            worst
        }
    }
}

/// Midrange factor `(1 + f)/2` that centres the stencil metrication error.
pub fn path_length_correction(dim: usize) -> f64 {
    (1.0 + stencil_overestimate(dim)) / 2.0
}

/// Shortest-path distance from the node nearest to `source`.
pub fn control_distance(family: &FieldFamily, bbox: &BoundingBox, source: &[f64], cutoff: Option<f64>) -> Result<DistanceField> {
    let node = bbox
        .nearest_node(source)
        .ok_or_else(|| Error::Config(format!("distance source {source:?} lies outside the box")))?;
    control_distance_multi(family, bbox, &[node], cutoff)
}

pub fn control_distance_from_node(family: &FieldFamily, bbox: &BoundingBox, node: usize, cutoff: Option<f64>) -> Result<DistanceField> {
    control_distance_multi(family, bbox, &[node], cutoff)
}

/// Dijkstra from all `sources` at once. Edge cost between stencil neighbours is the travel time
/// of the straight move evaluated at the edge midpoint; degenerate directions cost `+∞`.
pub fn control_distance_multi(family: &FieldFamily, bbox: &BoundingBox, sources: &[usize], cutoff: Option<f64>) -> Result<DistanceField> {
    family.validate()?;
    let n = bbox.dim();
    if family.dim() != n {
        return config("field family and box dimensions differ");
    }
    let lat = bbox.lattice();
    if sources.is_empty() || sources.iter().any(|&s| s >= lat.len()) {
        return config("distance sources must be nodes of the box");
    }
    let h = bbox.h();
    let offsets = lat.stencil_offsets();
    let lin = lat.stencil_linear_offsets();
    let centre = offsets.len() / 2;
    let euclid: Vec<f64> = offsets
        .iter()
        .map(|o| h * (o.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt())
        .collect();
    let cutoff = cutoff.unwrap_or(f64::INFINITY);
    let uniform = family.is_euclidean();

    let mut values = vec![f64::INFINITY; lat.len()];
    let mut done = vec![false; lat.len()];
    let mut order = Vec::new();
    let mut heap = BinaryHeap::new();
    for &s in sources {
        values[s] = 0.0;
        heap.push(Item(0.0, s as u32));
    }
    let mut box_reach = f64::INFINITY;
    let mut c = [0usize; 3];
    let mut x = [0.0; 3];
    let mut mid = [0.0; 3];
    let mut e = [0.0; 3];
    while let Some(Item(d, i)) = heap.pop() {
        let i = i as usize;
        if done[i] || d > values[i] {
            continue;
        }
        if d > cutoff {
            break;
        }
        done[i] = true;
        order.push(i as u32);
        lat.coords(i, &mut c[..n]);
        let interior = (0..n).all(|a| c[a] > 0 && c[a] + 1 < lat.dims()[a]);
        if !interior && box_reach.is_infinite() {
            box_reach = d;
        }
        if !uniform {
            bbox.node_center_into(i, &mut x[..n]);
        }
        for (k, o) in offsets.iter().enumerate() {
            if k == centre {
                continue;
            }
            let j = if interior {
                (i as isize + lin[k]) as usize
            } else {
                match lat.shifted(&c[..n], o) {
                    Some(j) => j,
                    None => continue,
                }
            };
            if done[j] {
                continue;
            }
            let w = if uniform {
                euclid[k]
            } else {
                for a in 0..n {
                    e[a] = h * o[a] as f64;
                    mid[a] = x[a] + 0.5 * e[a];
                }
                family.edge_cost(&mid[..n], &e[..n])
            };
            let nd = d + w;
            if nd < values[j] {
                values[j] = nd;
                heap.push(Item(nd, j as u32));
            }
        }
    }
    // Tentative values beyond the cutoff are not distances.
    for (v, &s) in values.iter_mut().zip(&done) {
        if !s {
            *v = f64::INFINITY;
        }
    }
    if order.len() == sources.len() && lat.len() > sources.len() {
        log::warn!("control distance: no node is reachable from the sources");
    }
    Ok(DistanceField {
        sources: sources.to_vec(),
        values,
        order,
        cutoff,
        box_reach,
        h,
        dim: n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
    pub volumes_2r: Vec<f64>,
    pub doubling_ratios: Vec<f64>,
    pub truncated: Vec<bool>,
    pub a_est: f64,
    pub q_est: f64,
}

impl VolumeProfile {
    pub fn from_volumes(center: Vec<f64>, radii: Vec<f64>, volumes: Vec<f64>, volumes_2r: Vec<f64>, truncated: Vec<bool>) -> Self {
        let doubling_ratios: Vec<f64> = volumes.iter().zip(&volumes_2r).map(|(a, b)| b / a).collect();
        let a_est = doubling_ratios
            .iter()
            .zip(&truncated)
            .filter(|(_, &t)| !t)
            .map(|(r, _)| *r)
            .fold(f64::NAN, f64::max);
        Self {
            center,
            radii,
            volumes,
            volumes_2r,
            doubling_ratios,
            truncated,
            a_est,
            q_est: a_est.log2(),
        }
    }

    /// Rows `(r, |B_r|, |B_2r|/|B_r|, truncated)`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["r", "volume", "doubling_ratio", "truncated"])?;
        for k in 0..self.radii.len() {
            out.write_record([
                format!("{:.12e}", self.radii[k]),
                format!("{:.12e}", self.volumes[k]),
                format!("{:.12e}", self.doubling_ratios[k]),
                self.truncated[k].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `|B_r|`, `|B_2r|` and their ratio per radius. Radii whose doubled ball is cut by the box or the
/// cutoff are flagged and excluded from `A_est`.
pub fn volume_profile(dist: &DistanceField, bbox: &BoundingBox, radii: &[f64]) -> Result<VolumeProfile> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return config("volume profile needs positive radii");
    }
    let volumes: Vec<f64> = radii.iter().map(|&r| dist.ball_volume(r)).collect();
    let volumes_2r: Vec<f64> = radii.iter().map(|&r| dist.ball_volume(2.0 * r)).collect();
    let truncated: Vec<bool> = radii.iter().map(|&r| dist.is_truncated(2.0 * r)).collect();
    if truncated.iter().all(|&t| t) {
        return Err(Error::Truncated(format!("every doubled ball of {radii:?} reaches the box edge")));
    }
    let center = dist
        .source_node()
        .map(|s| bbox.node_center(s))
        .unwrap_or_default();
    Ok(VolumeProfile::from_volumes(center, radii.to_vec(), volumes, volumes_2r, truncated))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReverseDoubling {
    pub beta_est: f64,
    pub mu_est: f64,
    /// `β` is (numerically) 1: balls do not grow.
    pub violated: bool,
}

/// `β = max |B_ρ|/|B_2ρ|`, `μ = log₂(1/β)` over the untruncated radii.
pub fn reverse_doubling(profile: &VolumeProfile) -> Result<ReverseDoubling> {
    if profile.radii.len() < 3 {
        return config("reverse doubling needs at least three radii");
    }
    let beta = profile
        .volumes
        .iter()
        .zip(&profile.volumes_2r)
        .zip(&profile.truncated)
        .filter(|(_, &t)| !t)
        .map(|((a, b), _)| a / b)
        .fold(f64::NAN, f64::max);
    Ok(ReverseDoubling {
        beta_est: beta,
        mu_est: (1.0 / beta).log2(),
        violated: !(beta < 0.99),
    })
}

/// `∇u` at node `i` by centred differences (one-sided at the lattice edge).
pub fn nodal_gradient(bbox: &BoundingBox, u: &[f64], i: usize, out: &mut [f64]) {
    let lat = bbox.lattice();
    let n = lat.dim();
    let mut c = [0usize; 3];
    lat.coords(i, &mut c[..n]);
    for d in 0..n {
        let s = lat.strides()[d];
        let (lo, lo_w) = if c[d] > 0 { (i - s, 1.0) } else { (i, 0.0) };
        let (hi, hi_w) = if c[d] + 1 < lat.dims()[d] { (i + s, 1.0) } else { (i, 0.0) };
        let span = (lo_w + hi_w) * bbox.h();
        out[d] = if span > 0.0 { (u[hi] - u[lo]) / span } else { 0.0 };
    }
}

/// `|Xu|(x_i) = sqrt(∇uᵀ A ∇u)`.
pub fn horizontal_gradient_norm(family: &FieldFamily, bbox: &BoundingBox, u: &[f64], i: usize) -> f64 {
    let n = bbox.dim();
    let mut g = [0.0; 3];
    nodal_gradient(bbox, u, i, &mut g[..n]);
    let mut a = [0.0; 9];
    let mut x = [0.0; 3];
    bbox.node_center_into(i, &mut x[..n]);
    family.structure_into(&x[..n], &mut a);
    let mut q = 0.0;
    for p in 0..n {
        for r in 0..n {
            q += g[p] * a[p * n + r] * g[r];
        }
    }
    q.max(0.0).sqrt()
}

/// `mean_{B_r} |u − u_r| / (r · mean_{B_2r} |Xu|)`. Returns 0 when the numerator vanishes and
/// `+∞` when only the denominator does.
pub fn poincare_ratio(family: &FieldFamily, bbox: &BoundingBox, u: &[f64], ball_r: &[u32], ball_2r: &[u32], r: f64) -> Result<f64> {
    if ball_r.is_empty() || ball_2r.is_empty() {
        return config("Poincaré ratio needs nonempty balls");
    }
    let mean = ball_r.iter().map(|&i| u[i as usize]).sum::<f64>() / ball_r.len() as f64;
    let num = ball_r.iter().map(|&i| (u[i as usize] - mean).abs()).sum::<f64>() / ball_r.len() as f64;
    let den = ball_2r
        .iter()
        .map(|&i| horizontal_gradient_norm(family, bbox, u, i as usize))
        .sum::<f64>()
        / ball_2r.len() as f64;
    if num <= 1e-14 * mean.abs().max(1e-300) || num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / (r * den))
}

/// Number of connected components (3^N-neighbour adjacency) of the shell `r <= d < r + width`.
pub fn shell_components(dist: &DistanceField, bbox: &BoundingBox, r: f64, width: f64) -> usize {
    let lat = bbox.lattice();
    let inside = |i: usize| {
        let v = dist.values[i];
        v >= r && v < r + width
    };
    let mut seen = vec![false; lat.len()];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for &s in dist.ball(r + width) {
        let s = s as usize;
        if seen[s] || !inside(s) {
            continue;
        }
        comps += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            lat.for_each_neighbor(i, |j| {
                if !seen[j] && inside(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            });
        }
    }
    comps
}

/// Number of connected components of the discrete sphere of radius `r`: nodes with `d >= r` that
/// have a stencil neighbour with `d < r`. Unlike a fixed-width shell, this layer has no gaps where
/// `d` jumps by more than the shell width between neighbours (near a degeneracy locus).
pub fn sphere_components(dist: &DistanceField, bbox: &BoundingBox, r: f64) -> usize {
    let lat = bbox.lattice();
    let mut on_sphere = vec![false; lat.len()];
    let mut members = Vec::new();
    for &i in dist.ball(r) {
        lat.for_each_neighbor(i as usize, |j| {
            if !on_sphere[j] && !(dist.values[j] < r) {
                on_sphere[j] = true;
                members.push(j);
            }
        });
    }
    let mut seen = vec![false; lat.len()];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for &s in &members {
        if seen[s] {
            continue;
        }
        comps += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            lat.for_each_neighbor(i, |j| {
                if !seen[j] && on_sphere[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            });
        }
    }
    comps
}
