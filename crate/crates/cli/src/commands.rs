//! One pipeline per subcommand. Reports are deterministic: no timings, keys in fixed order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wiener_core::fields::{check_x_ellipticity, CoefficientMatrix};
use wiener_core::geometry::{rasterize, GridDomain};
use wiener_core::metric::{control_distance_from_node, control_distance_multi, poincare_ratio, reverse_doubling, volume_profile};
use wiener_core::potential::{band_constant, capacity, green_band, green_column};
use wiener_core::solver::{caccioppoli_ratio, max_principle_excess, solve_dirichlet, DirichletProblem, EnergyForm};
use wiener_core::wiener::{classify, cone_check, distance_for, invariance_harness, wiener_profile};
use wiener_core::{io, Error, Result};

use crate::scenario::Scenario;

pub struct Run {
    pub scenario: Scenario,
    pub out: PathBuf,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

impl Run {
    fn domain(&self) -> Result<Arc<GridDomain>> {
        let dom = Arc::new(self.scenario.domain()?);
        if self.scenario.outputs.dump_grids {
            io::write_mask(create(&self.out, "mask_d.bin")?, dom.bbox(), dom.mask_d())?;
            io::write_mask(create(&self.out, "mask_omega.bin")?, dom.bbox(), dom.mask_omega())?;
        }
        Ok(dom)
    }

    fn form(&self, dom: &Arc<GridDomain>) -> Result<EnergyForm> {
        let spec = self
            .scenario
            .matrices
            .first()
            .ok_or_else(|| Error::Config("no coefficient matrix given".into()))?;
        let c = CoefficientMatrix::new(&self.scenario.field, spec.clone(), dom.bbox())?;
        EnergyForm::assemble(dom.clone(), c)
    }

    fn points(&self) -> Result<&[Vec<f64>]> {
        if self.scenario.points.is_empty() {
            return Err(Error::Config("scenario lists no points".into()));
        }
        Ok(&self.scenario.points)
    }

    fn node(dom: &GridDomain, p: &[f64]) -> Result<usize> {
        dom.bbox()
            .nearest_node(p)
            .ok_or_else(|| Error::Geometry(format!("{p:?} lies outside the box")))
    }

    pub fn classify(&self) -> Result<()> {
        let dom = self.domain()?;
        let form = self.form(&dom)?;
        let cfg = &self.scenario.wiener;
        let mut verdicts = Vec::new();
        for (i, p) in self.points()?.iter().enumerate() {
            let y = dom.snap_to_boundary(p)?;
            let profile = wiener_profile(&form, y, cfg, &self.scenario.solver)?;
            profile.write_csv(create(&self.out, &format!("profile_{i}.csv"))?)?;
            let v = classify(&profile, cfg);
            println!(
                "{:?}: {} (slope {:.4}, last limit {:.4}, theta {:.4})",
                v.point,
                v.verdict.as_str(),
                v.slope,
                v.last_limit_est,
                v.theta
            );
            verdicts.push(v);
        }
        write_json(&self.out, "verdict.json", &verdicts)
    }

    pub fn capacity(&self) -> Result<()> {
        let spec = self
            .scenario
            .capacity
            .as_ref()
            .ok_or_else(|| Error::Config("capacity needs a [capacity] table".into()))?;
        let dom = self.domain()?;
        let form = self.form(&dom)?;
        let mask = rasterize(&spec.obstacle, dom.bbox())?;
        let k: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let res = capacity(&form, &k, &self.scenario.solver)?;
        let rel = spec.reference.map(|r| (res.capacity - r) / r);
        match (spec.reference, rel) {
            (Some(r), Some(e)) => println!("capacity {:.6}  reference {:.6}  relative error {:+.3e}", res.capacity, r, e),
            _ => println!("capacity {:.6}", res.capacity),
        }
        if self.scenario.outputs.dump_grids {
            if let Some(u) = &res.potential {
                io::write_field(create(&self.out, "potential.bin")?, dom.bbox(), &u.values)?;
            }
        }
        let stats = res.stats.unwrap_or_default();
        write_json(
            &self.out,
            "capacity.json",
            &json!({
                "capacity": res.capacity,
                "reference": spec.reference,
                "relative_error": rel,
                "total_measure": res.total_measure,
                "negative_measure": res.negative_measure,
                "k_cells": res.k.len(),
                "unknowns": stats.unknowns,
                "iterations": stats.iterations,
                "relative_residual": stats.relative_residual,
            }),
        )
    }

    pub fn distance(&self) -> Result<()> {
        let spec = self
            .scenario
            .distance
            .as_ref()
            .ok_or_else(|| Error::Config("distance needs a [distance] table".into()))?;
        let bbox = self.scenario.bbox()?;
        let p = &self.points()?[0];
        let node = bbox
            .nearest_node(p)
            .ok_or_else(|| Error::Geometry(format!("{p:?} lies outside the box")))?;
        let dist = control_distance_from_node(&self.scenario.field, &bbox, node, spec.cutoff)?;
        let vp = volume_profile(&dist, &bbox, &spec.radii)?;
        vp.write_csv(create(&self.out, "volume_profile.csv")?)?;
        let rd = if spec.radii.len() >= 3 { Some(reverse_doubling(&vp)?) } else { None };
        if self.scenario.outputs.dump_grids {
            io::write_field(create(&self.out, "distance.bin")?, &bbox, dist.values())?;
        }
        println!("A_est {:.4}  Q_est {:.4}", vp.a_est, vp.q_est);
        if let Some(r) = &rd {
            println!("beta_est {:.4}  mu_est {:.4}", r.beta_est, r.mu_est);
        }
        write_json(&self.out, "distance.json", &json!({ "volume_profile": vp, "reverse_doubling": rd }))
    }

    pub fn greens(&self) -> Result<()> {
        let dom = self.domain()?;
        let form = self.form(&dom)?;
        let mut poles = Vec::new();
        let mut overall: f64 = 1.0;
        for (i, p) in self.points()?.iter().enumerate() {
            let pole = Self::node(&dom, p)?;
            let samples = green_band(&form, pole, &self.scenario.solver)?;
            let mut w = csv::Writer::from_writer(create(&self.out, &format!("green_{i}.csv"))?);
            w.write_record(["distance", "green", "integral", "ratio"])?;
            for s in &samples {
                w.write_record([
                    format!("{:.12e}", s.distance),
                    format!("{:.12e}", s.green),
                    format!("{:.12e}", s.integral),
                    format!("{:.12e}", s.ratio),
                ])?;
            }
            w.flush()?;
            if self.scenario.outputs.dump_grids {
                let g = green_column(&form, pole, &self.scenario.solver)?;
                io::write_field(create(&self.out, &format!("green_{i}.bin"))?, dom.bbox(), &g.values.values)?;
            }
            let c = band_constant(samples.iter().map(|s| s.ratio));
            let lo = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
            println!("pole {:?}: {} pairs, ratios in [{lo:.4}, {hi:.4}], C = {c:.4}", dom.bbox().node_center(pole), samples.len());
            overall = overall.max(c);
            poles.push(json!({
                "point": dom.bbox().node_center(pole),
                "pairs": samples.len(),
                "min_ratio": lo,
                "max_ratio": hi,
                "band_constant": c,
            }));
        }
        write_json(&self.out, "greens.json", &json!({ "poles": poles, "band_constant": overall }))
    }

    pub fn cone(&self) -> Result<()> {
        let spec = self
            .scenario
            .cone
            .as_ref()
            .ok_or_else(|| Error::Config("cone needs a [cone] table".into()))?;
        let dom = self.domain()?;
        let form = self.form(&dom)?;
        let theta_min = spec.theta_min.unwrap_or(self.scenario.wiener.theta_min);
        let r_max = spec.radii.iter().copied().fold(0.0, f64::max);
        let mut out = Vec::new();
        for p in self.points()? {
            let y = dom.snap_to_boundary(p)?;
            let dist = distance_for(&form, y, r_max)?;
            let c = cone_check(&dom, &dist, &spec.radii, theta_min)?;
            println!(
                "{:?}: min theta {:.4} ({})",
                dom.bbox().node_center(y),
                c.min_theta,
                if c.pass { "pass" } else { "fail" }
            );
            out.push(json!({ "point": dom.bbox().node_center(y), "check": c }));
        }
        write_json(&self.out, "cone.json", &out)
    }

    pub fn invariance(&self) -> Result<()> {
        let dom = self.domain()?;
        let y = dom.snap_to_boundary(&self.points()?[0])?;
        let s = &self.scenario;
        let r = invariance_harness(&dom, y, &s.field, &s.matrices, &s.wiener, &s.solver, s.seed)?;
        for (i, e) in r.entries.iter().enumerate() {
            println!(
                "matrix {i}: band [{:.4}, {:.4}], {} (slope {:.4})",
                e.lambda,
                e.big_lambda,
                e.verdict.verdict.as_str(),
                e.verdict.slope
            );
        }
        println!("agree: {}", r.agree);
        write_json(&self.out, "invariance.json", &r)
    }

    pub fn validate(&self) -> Result<()> {
        let dom = self.domain()?;
        let form = self.form(&dom)?;
        let s = &self.scenario;
        let bbox = dom.bbox();
        let h = bbox.h();
        let mut rows: Vec<(String, String, bool)> = Vec::new();

        let sample: Vec<Vec<f64>> = {
            let stride = (bbox.node_count() / 512).max(1);
            (0..bbox.node_count()).step_by(stride).filter(|&i| dom.in_d(i)).map(|i| bbox.node_center(i)).collect()
        };
        for (i, spec) in s.matrices.iter().enumerate() {
            let row = CoefficientMatrix::new(&s.field, spec.clone(), bbox)
                .and_then(|m| check_x_ellipticity(&m, sample.iter().map(|p| p.as_slice()), 16, s.seed));
            rows.push(match row {
                Ok(r) => (format!("x-ellipticity[{i}]"), format!("ratios in [{:.4}, {:.4}]", r.min_ratio, r.max_ratio), r.passes),
                Err(e) => (format!("x-ellipticity[{i}]"), e.to_string(), false),
            });
        }

        let center = match s.points.first() {
            Some(p) => Self::node(&dom, p)?,
            None => Self::node(&dom, &bbox.lo().iter().zip(bbox.hi()).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<_>>())?,
        };
        let dist = control_distance_from_node(&s.field, bbox, center, None)?;
        let reach = dist.box_reach();
        let radii: Vec<f64> = [8.0, 4.0, 2.0].iter().map(|k| reach / k / 2.0).filter(|&r| r >= 2.0 * h).collect();
        let doubling = volume_profile(&dist, bbox, &radii).and_then(|vp| Ok((vp.clone(), reverse_doubling(&vp)?)));
        rows.push(match doubling {
            Ok((vp, rd)) => (
                "doubling".into(),
                format!("A_est {:.3}, Q_est {:.3}, mu_est {:.3}", vp.a_est, vp.q_est, rd.mu_est),
                vp.a_est.is_finite() && !rd.violated,
            ),
            Err(e) => ("doubling".into(), e.to_string(), false),
        });

        let r = s.validate.poincare_radius.unwrap_or(reach / 8.0);
        let x0: Vec<f64> = (0..bbox.node_count()).map(|i| bbox.node_center(i)[0]).collect();
        rows.push(match poincare_ratio(&s.field, bbox, &x0, dist.ball(r), dist.ball(2.0 * r), r) {
            Ok(p) => ("poincare".into(), format!("ratio {p:.4} at r = {r:.4}"), p.is_finite()),
            Err(e) => ("poincare".into(), e.to_string(), false),
        });

        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let free = dom.mask_omega().to_vec();
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut mp_ok = true;
        for _ in 0..s.validate.mp_trials {
            let values: Vec<f64> = (0..bbox.node_count()).map(|i| if free[i] { 0.0 } else { rng.gen::<f64>() }).collect();
            let p = DirichletProblem { free: free.clone(), values, source: None };
            let u = solve_dirichlet(&form, &p, &s.solver)?.field.values;
            let osc = dom
                .boundary_nodes()
                .iter()
                .map(|&i| u[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let excess = max_principle_excess(&form, &free, &u);
            let tol = form.mp_tolerance(osc.1 - osc.0);
            worst = worst.max(excess);
            mp_ok &= excess <= tol;
        }
        rows.push(("max-principle".into(), format!("worst excess {worst:.3e} over {} data sets", s.validate.mp_trials), mp_ok));

        let harmonic = DirichletProblem::harmonic(&dom, |x| x[0]);
        let u = solve_dirichlet(&form, &harmonic, &s.solver)?.field.values;
        let to_boundary = control_distance_multi(&s.field, bbox, dom.boundary_nodes(), None)?;
        let deep = (0..bbox.node_count())
            .filter(|&i| dom.in_omega(i))
            .map(|i| to_boundary.value(i))
            .fold(0.0, f64::max);
        let k: Vec<usize> = (0..bbox.node_count())
            .filter(|&i| dom.in_omega(i) && to_boundary.value(i) >= (0.5 * deep).max(4.0 * h))
            .collect();
        rows.push(match caccioppoli_ratio(&form, &u, &k) {
            Ok(c) => ("caccioppoli".into(), format!("ratio {c:.4} on {} nodes", k.len()), c.is_finite()),
            Err(e) => ("caccioppoli".into(), e.to_string(), false),
        });

        rows.push(match green_band(&form, center, &s.solver) {
            Ok(samples) => {
                let c = band_constant(samples.iter().map(|x| x.ratio));
                ("green-band".into(), format!("C = {c:.4} over {} pairs", samples.len()), c < 10.0)
            }
            Err(e) => ("green-band".into(), e.to_string(), false),
        });

        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        for (name, detail, ok) in &rows {
            println!("{:width$}  {}  {}", name, if *ok { "PASS" } else { "FAIL" }, detail);
        }
        let all = rows.iter().all(|r| r.2);
        let report: Vec<_> = rows
            .iter()
            .map(|(n, d, ok)| json!({ "check": n, "detail": d, "pass": ok }))
            .collect();
        write_json(&self.out, "validate.json", &json!({ "checks": report, "all_pass": all }))
    }
}
