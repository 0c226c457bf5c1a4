//! Wiener profiles and their classification, the density (cone) test, and the
//! coefficient-invariance harness.
//!
//! Terms are `t_k = ρ_k² cap(K_{ρ_k}) / |B_{ρ_k}(y)|`, the dyadic samples of the integrand
//! `cap(K_ρ) ρ / |B_ρ(y)|` against `dρ/ρ`; so `Σ t_k ln(1/λ)` is the midpoint quadrature of the
//! Wiener integral over `[ρ_min, ρ₀]`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::fields::{check_x_ellipticity, CoefficientMatrix, FieldFamily, MatrixSpec};
use crate::geometry::GridDomain;
use crate::metric::{control_distance_from_node, DistanceField};
use crate::potential::potential_profile;
use crate::solver::{EnergyForm, SolverOptions};

fn half() -> f64 {
    0.5
}
fn six() -> usize {
    6
}
fn four() -> usize {
    4
}
fn eight() -> usize {
    8
}
fn regular_slope() -> f64 {
    -0.1
}
fn irregular_slope() -> f64 {
    -0.5
}
fn regular_limit() -> f64 {
    0.9
}
fn theta_min() -> f64 {
    0.1
}

/// Level schedule and classification thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerConfig {
    #[serde(default = "half")]
    pub lambda: f64,
    #[serde(default = "six")]
    pub levels: usize,
    /// Largest radius; defaults to the value putting the smallest radius at four cells.
    #[serde(default)]
    pub rho0: Option<f64>,
    /// Levels entering the slope fit (the last ones).
    #[serde(default = "four")]
    pub slope_window: usize,
    /// Levels whose compact has fewer nodes are flagged as under-resolved.
    #[serde(default = "eight")]
    pub min_cells: usize,
    #[serde(default = "regular_slope")]
    pub regular_slope: f64,
    #[serde(default = "irregular_slope")]
    pub irregular_slope: f64,
    #[serde(default = "regular_limit")]
    pub regular_limit: f64,
    #[serde(default = "theta_min")]
    pub theta_min: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            lambda: half(),
            levels: six(),
            rho0: None,
            slope_window: four(),
            min_cells: eight(),
            regular_slope: regular_slope(),
            irregular_slope: irregular_slope(),
            regular_limit: regular_limit(),
            theta_min: theta_min(),
        }
    }
}

impl WienerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.3..=0.7).contains(&self.lambda) {
            return config(format!("lambda = {} outside [0.3, 0.7]", self.lambda));
        }
        if self.levels < 4 {
            return config(format!("{} levels; at least 4 are needed", self.levels));
        }
        if self.slope_window < 2 || self.slope_window > self.levels {
            return config("slope window must lie in [2, levels]");
        }
        if self.irregular_slope >= self.regular_slope {
            return config("irregular slope threshold must be below the regular one");
        }
        if let Some(r) = self.rho0 {
            if !(r > 0.0) {
                return config("rho0 must be positive");
            }
        }
        Ok(())
    }

    /// `ρ_k = ρ₀ λ^k`, `k = 0..levels`.
    pub fn radii(&self, h: f64) -> Result<Vec<f64>> {
        self.validate()?;
        let last = self.lambda.powi(self.levels as i32 - 1);
        let rho0 = self.rho0.unwrap_or(4.0 * h / last);
        let radii: Vec<f64> = (0..self.levels).map(|k| rho0 * self.lambda.powi(k as i32)).collect();
        let min = radii[radii.len() - 1];
        if min < 4.0 * h * (1.0 - 1e-12) {
            return Err(Error::Radius(format!("smallest radius {min:.4e} is below four cells ({:.4e})", 4.0 * h)));
        }
        Ok(radii)
    }
}

/// One dyadic level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub k: usize,
    pub rho: f64,
    pub cap: f64,
    pub ball_volume: f64,
    pub limit_est: f64,
    pub k_cells: usize,
    pub ball_cells: usize,
    /// `|K_ρ| / |B̄_ρ(y)|` in cells.
    pub theta: f64,
    pub total_measure: f64,
    pub negative_measure: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityProfile {
    pub point: Vec<f64>,
    pub node: usize,
    pub h: f64,
    pub lambda: f64,
    pub levels: Vec<LevelRecord>,
    pub terms: Vec<f64>,
    /// `Σ t_k ln(1/λ)`.
    pub integral_estimate: f64,
}

impl CapacityProfile {
    /// Rows `k, rho, cap, ball_volume, term, limit_est, k_cells, theta`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "rho", "cap", "ball_volume", "term", "limit_est", "k_cells", "theta"])?;
        for (l, t) in self.levels.iter().zip(&self.terms) {
            out.write_record([
                l.k.to_string(),
                format!("{:.12e}", l.rho),
                format!("{:.12e}", l.cap),
                format!("{:.12e}", l.ball_volume),
                format!("{:.12e}", t),
                format!("{:.12e}", l.limit_est),
                l.k_cells.to_string(),
                format!("{:.6e}", l.theta),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Distance field from `y` reaching just past `rho`.
pub fn distance_for(form: &EnergyForm, y: usize, rho: f64) -> Result<DistanceField> {
    let h = form.bbox().h();
    control_distance_from_node(form.coefficients().family(), form.bbox(), y, Some(rho * 1.05 + 2.0 * h))
}

/// Capacities of `K_{ρ_k} = B̄_{ρ_k}(y) ∖ Ω` on the configured levels.
pub fn wiener_profile(form: &EnergyForm, y: usize, cfg: &WienerConfig, opts: &SolverOptions) -> Result<CapacityProfile> {
    let dom = form.domain();
    let bbox = dom.bbox();
    if dom.boundary_nodes().binary_search(&y).is_err() {
        return Err(Error::Geometry(format!("{:?} is not a boundary node of Ω", bbox.node_center(y))));
    }
    let radii = cfg.radii(bbox.h())?;
    let dist = distance_for(form, y, radii[0])?;
    let raw = potential_profile(form, y, &radii, &dist, opts, false)?;
    let levels: Vec<LevelRecord> = raw
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            let ball_cells = dist.closed_ball(l.rho).len();
            LevelRecord {
                k,
                rho: l.rho,
                cap: l.result.capacity,
                ball_volume: l.ball_volume,
                limit_est: l.limit_est,
                k_cells: l.k_cells,
                ball_cells,
                theta: l.k_cells as f64 / ball_cells as f64,
                total_measure: l.result.total_measure,
                negative_measure: l.result.negative_measure,
                iterations: l.result.stats.map_or(0, |s| s.iterations),
            }
        })
        .collect();
    let terms: Vec<f64> = levels.iter().map(|l| l.rho * l.rho * l.cap / l.ball_volume).collect();
    let integral_estimate = terms.iter().sum::<f64>() * (1.0 / cfg.lambda).ln();
    Ok(CapacityProfile {
        point: bbox.node_center(y),
        node: y,
        h: bbox.h(),
        lambda: cfg.lambda,
        levels,
        terms,
        integral_estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    Irregular,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Regular => "regular",
            Verdict::Irregular => "irregular",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityVerdict {
    pub point: Vec<f64>,
    pub verdict: Verdict,
    /// Least-squares slope of `log₂ t_k` against `k` over the slope window.
    pub slope: f64,
    pub limit_est_series: Vec<f64>,
    pub last_limit_est: f64,
    /// Least-squares slope of `limit_est` against `k`.
    pub limit_trend: f64,
    /// Smallest level density `|K_ρ| / |B̄_ρ|`.
    pub theta: f64,
    pub terms: Vec<f64>,
    pub integral_estimate: f64,
    pub flags: Vec<String>,
    pub config: WienerConfig,
}

fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Fuses the term decay with the potential limits:
/// regular when the windowed slope is at least `regular_slope` and the last limit estimate at
/// least `regular_limit`; irregular when the slope is at most `irregular_slope` and the limit
/// estimates decrease; inconclusive otherwise, or when every level is under-resolved.
pub fn classify(profile: &CapacityProfile, cfg: &WienerConfig) -> RegularityVerdict {
    let n = profile.levels.len();
    let mut flags = Vec::new();
    let w = cfg.slope_window.clamp(2, n.max(2));
    let logs: Vec<f64> = profile.terms[n.saturating_sub(w)..]
        .iter()
        .map(|t| if *t > 0.0 { t.log2() } else { f64::NEG_INFINITY })
        .collect();
    let slope = if logs.len() >= 2 && logs.iter().all(|x| x.is_finite()) {
        ls_slope(&logs)
    } else {
        f64::NAN
    };
    let limits: Vec<f64> = profile.levels.iter().map(|l| l.limit_est).collect();
    let last = limits.last().copied().unwrap_or(f64::NAN);
    let trend = if limits.len() >= 2 { ls_slope(&limits) } else { f64::NAN };
    let theta = profile.levels.iter().map(|l| l.theta).fold(f64::INFINITY, f64::min);
    let mut under = 0;
    for l in &profile.levels {
        if l.k_cells < cfg.min_cells {
            under += 1;
            flags.push(format!("level {}: K has {} cells (< {})", l.k, l.k_cells, cfg.min_cells));
        }
        if l.negative_measure > 0 {
            flags.push(format!("level {}: {} nodes carry negative measure", l.k, l.negative_measure));
        }
    }
    if n < 4 {
        flags.push(format!("only {n} levels"));
    }
    let verdict = if n < 4 || under == n || !slope.is_finite() {
        if under == n && n > 0 {
            flags.push("every level is under-resolved".into());
        }
        Verdict::Inconclusive
    } else if slope >= cfg.regular_slope && last >= cfg.regular_limit {
        Verdict::Regular
    } else if slope <= cfg.irregular_slope && trend < 0.0 {
        Verdict::Irregular
    } else {
        flags.push(format!("slope {slope:.4} with last limit estimate {last:.4} matches neither rule"));
        Verdict::Inconclusive
    };
    RegularityVerdict {
        point: profile.point.clone(),
        verdict,
        slope,
        limit_est_series: limits,
        last_limit_est: last,
        limit_trend: trend,
        theta,
        terms: profile.terms.clone(),
        integral_estimate: profile.integral_estimate,
        flags,
        config: cfg.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeCheck {
    pub radii: Vec<f64>,
    pub theta_per_r: Vec<f64>,
    pub min_theta: f64,
    pub theta_min: f64,
    pub pass: bool,
}

/// Densities `θ(r) = |B̄_r(y) ∖ Ω| / |B̄_r(y)|` in cells; passes when all are at least `theta_min`.
pub fn cone_check(domain: &GridDomain, dist: &DistanceField, radii: &[f64], theta_min: f64) -> Result<ConeCheck> {
    let h = domain.bbox().h();
    let mut thetas = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r > 4.0 * h * (1.0 - 1e-12)) {
            return Err(Error::Radius(format!("radius {r:.4e} is not above four cells")));
        }
        if !dist.covers(r) {
            return Err(Error::Radius(format!("radius {r:.4e} exceeds the computed or box-limited distance")));
        }
        let ball = dist.closed_ball(r);
        let outside = ball.iter().filter(|&&i| !domain.in_omega(i as usize)).count();
        thetas.push(outside as f64 / ball.len() as f64);
    }
    let min_theta = thetas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ConeCheck {
        radii: radii.to_vec(),
        theta_per_r: thetas,
        min_theta,
        theta_min,
        pass: min_theta >= theta_min,
    })
}

/// Per-matrix result of the invariance harness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceEntry {
    pub spec: MatrixSpec,
    pub lambda: f64,
    pub big_lambda: f64,
    pub caps: Vec<f64>,
    pub verdict: RegularityVerdict,
}

/// `cap_i / cap_j` on each level against `[λ_i/Λ_j, Λ_i/λ_j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparability {
    pub i: usize,
    pub j: usize,
    pub ratios: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub entries: Vec<InvarianceEntry>,
    pub comparability: Vec<Comparability>,
    pub inconclusive: Vec<usize>,
    pub agree: bool,
}

/// Relative slack on the comparability bounds, absorbing solver tolerance when a bound is tight.
pub const COMPARABILITY_SLACK: f64 = 1e-6;

/// Classifies `y` under each coefficient matrix; verdicts agree when all conclusive ones coincide.
pub fn invariance_harness(
    domain: &Arc<GridDomain>,
    y: usize,
    family: &FieldFamily,
    specs: &[MatrixSpec],
    cfg: &WienerConfig,
    opts: &SolverOptions,
    seed: u64,
) -> Result<InvarianceReport> {
    if specs.is_empty() {
        return config("no coefficient matrices to compare");
    }
    let bbox = domain.bbox();
    let sample: Vec<Vec<f64>> = {
        let n = bbox.node_count();
        let stride = (n / 512).max(1);
        (0..n).step_by(stride).filter(|&i| domain.in_d(i)).map(|i| bbox.node_center(i)).collect()
    };
    let mats: Vec<CoefficientMatrix> = specs
        .iter()
        .map(|s| {
            let m = CoefficientMatrix::new(family, s.clone(), bbox)?;
            check_x_ellipticity(&m, sample.iter().map(|p| p.as_slice()), 16, seed)?;
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<InvarianceEntry> = mats
        .into_par_iter()
        .map(|m| {
            let (lambda, big_lambda) = (m.lambda(), m.big_lambda());
            let spec = m.spec().clone();
            let form = EnergyForm::assemble(domain.clone(), m)?;
            let profile = wiener_profile(&form, y, cfg, opts)?;
            Ok(InvarianceEntry {
                spec,
                lambda,
                big_lambda,
                caps: profile.levels.iter().map(|l| l.cap).collect(),
                verdict: classify(&profile, cfg),
            })
        })
        .collect::<Result<_>>()?;
    let mut comparability = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, b) = (&entries[i], &entries[j]);
            let ratios: Vec<f64> = a.caps.iter().zip(&b.caps).map(|(x, y)| x / y).collect();
            let lower = a.lambda / b.big_lambda;
            let upper = a.big_lambda / b.lambda;
            let within = ratios
                .iter()
                .all(|&r| r >= lower * (1.0 - COMPARABILITY_SLACK) && r <= upper * (1.0 + COMPARABILITY_SLACK));
            comparability.push(Comparability { i, j, ratios, lower, upper, within });
        }
    }
    let inconclusive: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.verdict.verdict == Verdict::Inconclusive)
        .map(|(i, _)| i)
        .collect();
    let mut conclusive = entries.iter().map(|e| e.verdict.verdict).filter(|v| *v != Verdict::Inconclusive);
    let agree = match conclusive.next() {
        Some(first) => conclusive.all(|v| v == first),
        None => true,
    };
    Ok(InvarianceReport {
        entries,
        comparability,
        inconclusive,
        agree,
    })
}
