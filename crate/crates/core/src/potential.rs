//! Capacities, capacitary potentials and measures, Green columns, boundary-limit estimates of
//! the potentials, barriers, and the measure pairing between nested obstacles.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::geometry::{compact_obstacle, GridDomain};
use crate::metric::{control_distance_from_node, DistanceField};
use crate::solver::{solve_dirichlet, DirichletProblem, EnergyForm, ScalarField, SolveStats, SolverOptions};

/// Capacitary potential `u₀` of `K` in `D` with its energy and measure.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    /// Sorted node indices.
    pub k: Vec<usize>,
    pub potential: Option<ScalarField>,
    /// `u₀ᵀ S u₀`.
    pub capacity: f64,
    /// `(S u₀)_i` for each node of `k`, in the same order.
    pub measure: Vec<f64>,
    pub total_measure: f64,
    /// Number of `K` nodes carrying negative measure (possible for non-monotone stiffness).
    pub negative_measure: usize,
    pub stats: Option<SolveStats>,
}

impl CapacityResult {
    /// Measure of the node `i`, or 0 when `i ∉ K`.
    pub fn measure_at(&self, i: usize) -> f64 {
        self.k.binary_search(&i).map_or(0.0, |p| self.measure[p])
    }

    pub fn drop_potential(mut self) -> Self {
        self.potential = None;
        self
    }
}

/// Minimizes `L(u,u)` over `u = 1` on `K`, `u = 0` off `D`.
pub fn capacity(form: &EnergyForm, k: &[usize], opts: &SolverOptions) -> Result<CapacityResult> {
    let dom = form.domain();
    let n = dom.bbox().node_count();
    let mut k = k.to_vec();
    k.sort_unstable();
    k.dedup();
    if let Some(&i) = k.iter().find(|&&i| i >= n || !dom.deep_in_d(i)) {
        return config(format!(
            "obstacle node {:?} is not in the interior of D",
            dom.bbox().node_center(i.min(n - 1))
        ));
    }
    if k.is_empty() {
        return Ok(CapacityResult {
            k,
            potential: Some(ScalarField::zeros(n)),
            capacity: 0.0,
            measure: Vec::new(),
            total_measure: 0.0,
            negative_measure: 0,
            stats: None,
        });
    }
    let mut free = dom.mask_d().to_vec();
    let mut values = vec![0.0; n];
    for &i in &k {
        free[i] = false;
        values[i] = 1.0;
    }
    let sol = solve_dirichlet(form, &DirichletProblem { free, values, source: None }, opts)?;
    let u = &sol.field.values;
    let measure: Vec<f64> = k.iter().map(|&i| form.apply_row(i, u)).collect();
    let total_measure: f64 = measure.iter().sum();
    let capacity: f64 = (0..n)
        .filter(|&i| dom.in_d(i) && u[i] != 0.0)
        .map(|i| u[i] * form.apply_row(i, u))
        .sum();
    // Nodes deep inside K carry exact zeros up to rounding.
    let floor = -1e-9 * measure.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let negative_measure = measure.iter().filter(|&&m| m < floor).count();
    Ok(CapacityResult {
        k,
        potential: Some(sol.field),
        capacity,
        measure,
        total_measure,
        negative_measure,
        stats: Some(sol.stats),
    })
}

#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub pole: usize,
    pub values: ScalarField,
    pub stats: SolveStats,
}

/// Solves `S g = e_pole` with `g = 0` off `D`: the Green function with pole at the node, for a
/// unit point mass.
pub fn green_column(form: &EnergyForm, pole: usize, opts: &SolverOptions) -> Result<GreenColumn> {
    let dom = form.domain();
    let n = dom.bbox().node_count();
    if pole >= n || !dom.deep_in_d(pole) {
        return config("Green pole must lie in the interior of D");
    }
    let mut source = vec![0.0; n];
    source[pole] = 1.0;
    let p = DirichletProblem {
        free: dom.mask_d().to_vec(),
        values: vec![0.0; n],
        source: Some(source),
    };
    let sol = solve_dirichlet(form, &p, opts)?;
    Ok(GreenColumn {
        pole,
        values: sol.field,
        stats: sol.stats,
    })
}

/// `∫_a^b s / |B_s(x)| ds`, with `|B_s|` the cell-count volume of the open ball.
pub fn volume_kernel_integral(dist: &DistanceField, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let vol = dist.h().powi(dist.dim() as i32);
    let order = dist.order();
    let vals = dist.values();
    // Ball count on (s_prev, s] is the number of nodes with d < s, constant between distinct values.
    let mut count = order.partition_point(|&i| vals[i as usize] < a);
    // If a coincides with a node distance the count right above a includes those nodes.
    let mut s = a;
    let mut total = 0.0;
    while s < b {
        while count < order.len() && vals[order[count] as usize] <= s {
            count += 1;
        }
        let next = if count < order.len() { vals[order[count] as usize].min(b) } else { b };
        let c = count.max(1) as f64 * vol;
        total += (next * next - s * s) / (2.0 * c);
        s = next;
        if count >= order.len() {
            break;
        }
    }
    total
}

/// One sample of the two-sided Green estimate.
#[derive(Debug, Clone, Serialize)]
pub struct GreenSample {
    pub node: usize,
    pub distance: f64,
    pub green: f64,
    pub integral: f64,
    pub ratio: f64,
}

/// Ratios `g(x,y) / ∫_{d(x,y)}^{dist(x,∂D)} s/|B_s(x)| ds` for every node `y` of `D` with
/// `4h ≤ d(x,y) ≤ dist(x,∂D)/8`, where `x` is the pole.
pub fn green_band(form: &EnergyForm, pole: usize, opts: &SolverOptions) -> Result<Vec<GreenSample>> {
    let dom = form.domain();
    let bbox = dom.bbox();
    let g = green_column(form, pole, opts)?;
    let dist = control_distance_from_node(form.coefficients().family(), bbox, pole, None)?;
    let outer = dist.distance_to_complement(dom.mask_d());
    let lo = 4.0 * bbox.h();
    let hi = outer / 8.0;
    if !(hi >= lo) {
        return Err(Error::Radius(format!(
            "pole is only {outer:.3e} from ∂D; no pairs with 4h ≤ d ≤ dist/8"
        )));
    }
    let mut out = Vec::new();
    for &i in dist.order() {
        let i = i as usize;
        let d = dist.value(i);
        if d < lo {
            continue;
        }
        if d > hi {
            break;
        }
        let integral = volume_kernel_integral(&dist, d, outer);
        let green = g.values.values[i];
        out.push(GreenSample {
            node: i,
            distance: d,
            green,
            integral,
            ratio: green / integral,
        });
    }
    Ok(out)
}

/// Smallest `C ≥ 1` with every ratio in `[1/C, C]`.
pub fn band_constant(ratios: impl IntoIterator<Item = f64>) -> f64 {
    ratios
        .into_iter()
        .map(|r| if r > 0.0 { r.max(1.0 / r) } else { f64::INFINITY })
        .fold(1.0, f64::max)
}

/// Richardson-extrapolated limit of `u` approaching `y` along the axis directions into `Ω`,
/// from samples at 2, 4 and 8 cells: `(8u₂ − 6u₄ + u₈)/3`, clamped to `[0,1]`, minimized over
/// the directions whose three samples all lie in `Ω`.
pub fn limit_estimate(domain: &GridDomain, u: &[f64], y: usize) -> Result<f64> {
    let lat = domain.bbox().lattice();
    let n = lat.dim();
    let c = lat.coords_vec(y);
    let mut best: Option<f64> = None;
    for d in 0..n {
        for sign in [-1i64, 1] {
            let mut samples = [0.0; 3];
            let mut ok = true;
            for (s, m) in [2i64, 4, 8].iter().enumerate() {
                let mut off = vec![0i64; n];
                off[d] = sign * m;
                match lat.shifted(&c, &off) {
                    Some(j) if domain.in_omega(j) => samples[s] = u[j],
                    _ => ok = false,
                }
            }
            if ok {
                let l = ((8.0 * samples[0] - 6.0 * samples[1] + samples[2]) / 3.0).clamp(0.0, 1.0);
                best = Some(best.map_or(l, |b: f64| b.min(l)));
            }
        }
    }
    best.ok_or_else(|| {
        Error::Geometry(format!(
            "no axis direction from {:?} stays in Ω for eight cells",
            domain.bbox().node_center(y)
        ))
    })
}

/// One radius of a potential profile.
#[derive(Debug, Clone)]
pub struct ProfileLevel {
    pub rho: f64,
    pub result: CapacityResult,
    /// `|B_ρ(y)|` (open ball, cell count × h^N).
    pub ball_volume: f64,
    pub limit_est: f64,
    /// Number of nodes in `K_ρ`.
    pub k_cells: usize,
}

/// Capacitary potentials of `K_ρ` for each radius, solved concurrently.
pub fn potential_profile(
    form: &EnergyForm,
    y: usize,
    radii: &[f64],
    dist: &DistanceField,
    opts: &SolverOptions,
    keep_potentials: bool,
) -> Result<Vec<ProfileLevel>> {
    let dom = form.domain();
    let h = dom.bbox().h();
    if let Some(r) = radii.iter().find(|&&r| !(r >= 4.0 * h * (1.0 - 1e-12))) {
        return Err(Error::Radius(format!("radius {r} is below four cells")));
    }
    radii
        .par_iter()
        .map(|&rho| {
            let k = compact_obstacle(dom, y, rho, dist)?;
            let res = capacity(form, &k, opts)?;
            let u = &res.potential.as_ref().expect("potential present").values;
            let limit_est = limit_estimate(dom, u, y)?;
            let k_cells = res.k.len();
            let result = if keep_potentials { res } else { res.drop_potential() };
            Ok(ProfileLevel {
                rho,
                result,
                ball_volume: dist.ball_volume(rho),
                limit_est,
                k_cells,
            })
        })
        .collect()
}

/// Radii `ρ/k`, `k = 2, 3, …`, down to four cells.
pub fn barrier_radii(rho: f64, h: f64) -> Vec<(usize, f64)> {
    (2..)
        .map(|k| (k, rho / k as f64))
        .take_while(|&(_, r)| r >= 4.0 * h * (1.0 - 1e-12))
        .collect()
}

/// `V = Σ_k 2^{−k} (1 − u_k)` over the supplied `(k, u_k)`.
pub fn assemble_barrier(terms: &[(usize, &ScalarField)]) -> Result<ScalarField> {
    if terms.len() < 3 {
        return config("a barrier needs at least three potentials");
    }
    let n = terms[0].1.values.len();
    if terms.iter().any(|(_, u)| u.values.len() != n) {
        return config("barrier potentials live on different grids");
    }
    let mut v = ScalarField::zeros(n);
    for &(k, u) in terms {
        let w = 0.5f64.powi(k as i32);
        for i in 0..n {
            v.values[i] += w * (1.0 - u.values[i]);
            v.support[i] |= u.support[i];
        }
    }
    Ok(v)
}

/// Barrier at `y` built from the potentials of `K_{ρ/k}`.
pub fn barrier(form: &EnergyForm, y: usize, rho: f64, dist: &DistanceField, opts: &SolverOptions) -> Result<(ScalarField, Vec<ProfileLevel>)> {
    let h = form.bbox().h();
    let sched = barrier_radii(rho, h);
    let radii: Vec<f64> = sched.iter().map(|&(_, r)| r).collect();
    let levels = potential_profile(form, y, &radii, dist, opts, true)?;
    let terms: Vec<(usize, &ScalarField)> = sched
        .iter()
        .zip(&levels)
        .map(|(&(k, _), l)| (k, l.result.potential.as_ref().unwrap()))
        .collect();
    let v = assemble_barrier(&terms)?;
    Ok((v, levels))
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurePairing {
    /// `μ_ρ(K_r)`.
    pub mu_rho_on_kr: f64,
    pub cap_r: f64,
    /// `μ_ρ(K_r) ≤ cap(K_r) + 1e-7`.
    pub measure_bounded: bool,
    /// `cap(K_{r/4}) − μ_ρ(K_r)`, when `cap(K_{r/4})` is supplied.
    pub cap_deficit: Option<f64>,
    /// Smallest `C` with `cap(K_{r/4}) ≤ μ_ρ(K_r) + C cap(K_{r/4}) ℓ`, `ℓ` the limit estimate of `u_ρ`.
    pub fitted_c: Option<f64>,
    pub limit_est: f64,
}

/// Pairs the capacitary measure of `K_ρ` with the smaller compact `K_r ⊆ K_ρ`.
pub fn capmeasure_pairing(
    cap_r: &CapacityResult,
    cap_rho: &CapacityResult,
    cap_r4: Option<&CapacityResult>,
    limit_est_rho: f64,
) -> Result<MeasurePairing> {
    if let Some(i) = cap_r.k.iter().find(|i| cap_rho.k.binary_search(i).is_err()) {
        return Err(Error::Misuse(format!("K_r is not contained in K_ρ (node {i})")));
    }
    let mu: f64 = cap_r.k.iter().map(|&i| cap_rho.measure_at(i)).sum();
    let measure_bounded = mu <= cap_r.capacity + 1e-7;
    let (residual, fitted) = match cap_r4 {
        Some(c4) => {
            let res = c4.capacity - mu;
            let c = if res <= 0.0 {
                0.0
            } else if limit_est_rho > 0.0 && c4.capacity > 0.0 {
                res / (c4.capacity * limit_est_rho)
            } else {
                f64::INFINITY
            };
            (Some(res), Some(c))
        }
        None => (None, None),
    };
    Ok(MeasurePairing {
        mu_rho_on_kr: mu,
        cap_r: cap_r.capacity,
        measure_bounded,
        cap_deficit: residual,
        fitted_c: fitted,
        limit_est: limit_est_rho,
    })
}

/// Rows `(rho, cap, ball_volume, limit_est, mu_diag)` where `mu_diag` is
/// `|total_measure − cap| / cap`.
pub fn write_profile_csv<W: std::io::Write>(levels: &[ProfileLevel], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rho", "cap", "ball_volume", "limit_est", "mu_diag"])?;
    for l in levels {
        let c = l.result.capacity;
        let diag = if c > 0.0 { (l.result.total_measure - c).abs() / c } else { 0.0 };
        out.write_record([
            format!("{:.12e}", l.rho),
            format!("{:.12e}", c),
            format!("{:.12e}", l.ball_volume),
            format!("{:.12e}", l.limit_est),
            format!("{:.6e}", diag),
        ])?;
    }
    out.flush()?;
    Ok(())
}
