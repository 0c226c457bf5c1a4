//! Geometric multigrid V-cycle used as a preconditioner for conjugate gradients on the free
//! block of the stiffness matrix.
//!
//! Coarse node `I` coincides with fine node `2I`. Transfers are multilinear prolongation and its
//! transpose. Coarse operators are rediscretized: the same constant stencil at `2h`, or the
//! average of the `2^N` child-element coefficients. Nodes that are not free carry zero corrections
//! on every level; a coarse node is free iff its fine counterpart is free and it is not on the
//! outer lattice layer.

use nalgebra::{DMatrix, DVector};

use super::element::RefElement;
use crate::lattice::Lattice;

/// Coarsest level size handled by a dense Cholesky factorization.
pub(crate) const DENSE_MAX: usize = 1000;

#[derive(Debug, Clone)]
pub(crate) struct Level {
    pub lat: Lattice,
    pub h: f64,
    pub reference: RefElement,
    pub lin: Vec<isize>,
    pub centre: usize,
    pub m: usize,
    /// Shared stencil when the coefficient is constant.
    pub uniform: Option<Vec<f64>>,
    /// Upper-triangle coefficient per element, indexed by lower-corner node (variable case).
    pub elem_b: Vec<f64>,
    /// Row slot of each active node (variable case), `u32::MAX` elsewhere.
    pub row_of: Vec<u32>,
    pub rows: Vec<f64>,
    /// Nodes whose rows are stored; always off the outer lattice layer.
    pub active: Vec<bool>,
}

impl Level {
    pub fn new_uniform(lat: Lattice, h: f64, b: &[f64], active: Vec<bool>) -> Self {
        let reference = RefElement::new(&lat);
        let st = reference.uniform_stencil(b, h);
        Self::with(lat, h, reference, Some(st), Vec::new(), active)
    }

    pub fn new_variable(lat: Lattice, h: f64, elem_b: Vec<f64>, active: Vec<bool>) -> Self {
        let reference = RefElement::new(&lat);
        Self::with(lat, h, reference, None, elem_b, active)
    }

    fn with(lat: Lattice, h: f64, reference: RefElement, uniform: Option<Vec<f64>>, elem_b: Vec<f64>, active: Vec<bool>) -> Self {
        let lin = lat.stencil_linear_offsets();
        let m = lin.len();
        let centre = m / 2;
        let mut level = Self {
            lat,
            h,
            reference,
            lin,
            centre,
            m,
            uniform,
            elem_b,
            row_of: Vec::new(),
            rows: Vec::new(),
            active,
        };
        if level.uniform.is_none() {
            let count = level.active.iter().filter(|&&a| a).count();
            let mut row_of = vec![u32::MAX; level.lat.len()];
            let mut rows = vec![0.0; count * m];
            let mut slot = 0usize;
            for i in 0..level.lat.len() {
                if level.active[i] {
                    row_of[i] = slot as u32;
                    level
                        .reference
                        .row_from_elements(&level.elem_b, i, h, &mut rows[slot * m..(slot + 1) * m]);
                    slot += 1;
                }
            }
            level.row_of = row_of;
            level.rows = rows;
        }
        level
    }

    /// Stencil row of an active node.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        match &self.uniform {
            Some(s) => s,
            None => {
                let r = self.row_of[i] as usize;
                &self.rows[r * self.m..(r + 1) * self.m]
            }
        }
    }

    /// Next coarser level, or `None` when the lattice is too small to coarsen.
    pub fn coarsen(&self) -> Option<Level> {
        let n = self.lat.dim();
        let dims: Vec<usize> = self.lat.dims().iter().map(|&d| (d + 1) / 2).collect();
        if dims.iter().any(|&d| d < 3) {
            return None;
        }
        let clat = Lattice::new(&dims);
        let mut active = vec![false; clat.len()];
        let mut c = [0usize; 3];
        let mut f = [0usize; 3];
        let mut any = false;
        for (i, a) in active.iter_mut().enumerate() {
            if !clat.is_interior(i) {
                continue;
            }
            clat.coords(i, &mut c[..n]);
            for d in 0..n {
                f[d] = 2 * c[d];
            }
            *a = self.active[self.lat.index(&f[..n])];
            any |= *a;
        }
        if !any {
            return None;
        }
        let h = 2.0 * self.h;
        match &self.uniform {
            Some(_) => {
                // The stencil scales as h^(N-2) for a fixed coefficient.
                let factor = 2f64.powi(n as i32 - 2);
                let st = self.uniform.as_ref().unwrap().iter().map(|v| v * factor).collect();
                Some(Level::with(clat.clone(), h, RefElement::new(&clat), Some(st), Vec::new(), active))
            }
            None => {
                let ns = self.reference.ns;
                let mut elem = vec![0.0; clat.len() * ns];
                let children = 1usize << n;
                for e in 0..clat.len() {
                    clat.coords(e, &mut c[..n]);
                    if (0..n).any(|d| c[d] + 2 > dims[d]) {
                        continue;
                    }
                    for d in 0..n {
                        f[d] = 2 * c[d];
                    }
                    let base = self.lat.index(&f[..n]);
                    for a in 0..children {
                        let child = (base as isize + self.reference.corner_offsets[a]) as usize;
                        for s in 0..ns {
                            elem[e * ns + s] += self.elem_b[child * ns + s] / children as f64;
                        }
                    }
                }
                Some(Level::new_variable(clat, h, elem, active))
            }
        }
    }
}

/// Per-solve state: the free sets of every level and the coarsest-level solver.
pub(crate) struct Multigrid<'a> {
    levels: Vec<&'a Level>,
    free: Vec<Vec<u32>>,
    is_free: Vec<Vec<bool>>,
    coarse: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    smoothing: usize,
}

struct Work {
    b: Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
    t1: Vec<f64>,
    t2: Vec<f64>,
}

/// Full-weighting restriction (`fine → coarse`, `restrict = true`) or multilinear prolongation
/// (`coarse → fine`), one axis at a time. Coarse node `c` sits on fine node `2c`; fine nodes past
/// the last coarse node take zero weight from beyond it.
fn transfer(src: &[f64], src_dims: &[usize], dst: &mut Vec<f64>, dst_dims: &[usize], t1: &mut Vec<f64>, t2: &mut Vec<f64>, restrict: bool) {
    let n = src_dims.len();
    let mut shape = src_dims.to_vec();
    let mut cur = std::mem::take(t1);
    let mut next = std::mem::take(t2);
    cur.clear();
    cur.extend_from_slice(src);
    for axis in 0..n {
        let len = shape[axis];
        let out_len = dst_dims[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        next.clear();
        next.resize(outer * out_len * inner, 0.0);
        for o in 0..outer {
            let sb = o * len * inner;
            let db = o * out_len * inner;
            let line = |k: usize| sb + k * inner..sb + (k + 1) * inner;
            for c in 0..out_len {
                let d = &mut next[db + c * inner..db + (c + 1) * inner];
                if restrict {
                    let f = 2 * c;
                    d.copy_from_slice(&cur[line(f)]);
                    if f >= 1 {
                        d.iter_mut().zip(&cur[line(f - 1)]).for_each(|(a, b)| *a += 0.5 * b);
                    }
                    if f + 1 < len {
                        d.iter_mut().zip(&cur[line(f + 1)]).for_each(|(a, b)| *a += 0.5 * b);
                    }
                } else {
                    let k = c / 2;
                    if c % 2 == 0 {
                        d.copy_from_slice(&cur[line(k)]);
                    } else {
                        d.iter_mut().zip(&cur[line(k)]).for_each(|(a, b)| *a = 0.5 * b);
                        if k + 1 < len {
                            d.iter_mut().zip(&cur[line(k + 1)]).for_each(|(a, b)| *a += 0.5 * b);
                        }
                    }
                }
            }
        }
        shape[axis] = out_len;
        std::mem::swap(&mut cur, &mut next);
    }
    std::mem::swap(dst, &mut cur);
    *t1 = cur;
    *t2 = next;
}

impl<'a> Multigrid<'a> {
    pub fn new(all: &[&'a Level], free0: Vec<u32>, is_free0: Vec<bool>, smoothing: usize) -> Self {
        let mut levels = vec![all[0]];
        let mut free = vec![free0];
        let mut is_free = vec![is_free0];
        while free.last().unwrap().len() > DENSE_MAX && levels.len() < all.len() {
            let l = levels.len() - 1;
            let (fine, coarse) = (all[l], all[l + 1]);
            let n = fine.lat.dim();
            let mut cf = Vec::new();
            let mut cis = vec![false; coarse.lat.len()];
            let mut c = [0usize; 3];
            for &i in &free[l] {
                fine.lat.coords(i as usize, &mut c[..n]);
                if c[..n].iter().any(|v| v % 2 == 1) {
                    continue;
                }
                for v in c[..n].iter_mut() {
                    *v /= 2;
                }
                let j = coarse.lat.index(&c[..n]);
                if coarse.lat.is_interior(j) && coarse.active[j] {
                    cis[j] = true;
                    cf.push(j as u32);
                }
            }
            if cf.is_empty() {
                break;
            }
            levels.push(coarse);
            free.push(cf);
            is_free.push(cis);
        }
        let mut mg = Self {
            levels,
            free,
            is_free,
            coarse: None,
            smoothing,
        };
        mg.factor_coarsest();
        mg
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    fn factor_coarsest(&mut self) {
        let l = self.levels.len() - 1;
        let free = &self.free[l];
        if free.len() > DENSE_MAX || free.is_empty() {
            return;
        }
        let lvl = self.levels[l];
        let mut pos = vec![u32::MAX; lvl.lat.len()];
        for (p, &i) in free.iter().enumerate() {
            pos[i as usize] = p as u32;
        }
        let n = free.len();
        let mut a = DMatrix::zeros(n, n);
        for (p, &i) in free.iter().enumerate() {
            let row = lvl.row(i as usize);
            for k in 0..lvl.m {
                let j = (i as isize + lvl.lin[k]) as usize;
                if pos[j] != u32::MAX {
                    a[(p, pos[j] as usize)] += row[k];
                }
            }
        }
        self.coarse = nalgebra::Cholesky::new(a);
    }

    /// `y = A x` on the free rows of level `l` (`x` vanishes off the free set).
    pub fn apply(&self, l: usize, x: &[f64], y: &mut [f64]) {
        let lvl = self.levels[l];
        for &i in &self.free[l] {
            let i = i as usize;
            let row = lvl.row(i);
            let mut acc = 0.0;
            for k in 0..lvl.m {
                acc += row[k] * x[(i as isize + lvl.lin[k]) as usize];
            }
            y[i] = acc;
        }
    }

    fn relax(&self, l: usize, b: &[f64], x: &mut [f64], forward: bool) {
        let lvl = self.levels[l];
        let c = lvl.centre;
        let mut step = |i: u32| {
            let i = i as usize;
            let row = lvl.row(i);
            let d = row[c];
            if d <= 0.0 {
                return;
            }
            let mut acc = b[i];
            for k in 0..lvl.m {
                if k != c {
                    acc -= row[k] * x[(i as isize + lvl.lin[k]) as usize];
                }
            }
            x[i] = acc / d;
        };
        if forward {
            self.free[l].iter().for_each(|&i| step(i));
        } else {
            self.free[l].iter().rev().for_each(|&i| step(i));
        }
    }

    fn vcycle(&self, l: usize, b: &[f64], x: &mut [f64], work: &mut [Work]) {
        for &i in &self.free[l] {
            x[i as usize] = 0.0;
        }
        let last = self.levels.len() - 1;
        if l == last {
            self.coarsest(b, x);
            return;
        }
        for _ in 0..self.smoothing {
            self.relax(l, b, x, true);
        }
        let (mine, rest) = work.split_first_mut().unwrap();
        self.apply(l, x, &mut mine.r);
        for (i, (v, &f)) in mine.r.iter_mut().zip(&self.is_free[l]).enumerate() {
            *v = if f { b[i] - *v } else { 0.0 };
        }
        let mut cb = std::mem::take(&mut rest[0].b);
        let mut cx = std::mem::take(&mut rest[0].x);
        let dims = self.levels[l].lat.dims();
        transfer(&mine.r, dims, &mut cb, self.levels[l + 1].lat.dims(), &mut mine.t1, &mut mine.t2, true);
        let cfree = &self.is_free[l + 1];
        for (v, &f) in cb.iter_mut().zip(cfree) {
            if !f {
                *v = 0.0;
            }
        }
        self.vcycle(l + 1, &cb, &mut cx, rest);
        for (v, &f) in cx.iter_mut().zip(cfree) {
            if !f {
                *v = 0.0;
            }
        }
        transfer(&cx, self.levels[l + 1].lat.dims(), &mut mine.r, dims, &mut mine.t1, &mut mine.t2, false);
        for &i in &self.free[l] {
            let i = i as usize;
            x[i] += mine.r[i];
        }
        rest[0].b = cb;
        rest[0].x = cx;
        for _ in 0..self.smoothing {
            self.relax(l, b, x, false);
        }
    }

    fn coarsest(&self, b: &[f64], x: &mut [f64]) {
        let l = self.levels.len() - 1;
        let free = &self.free[l];
        match &self.coarse {
            Some(ch) => {
                let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| b[i as usize]));
                let sol = ch.solve(&rhs);
                for (p, &i) in free.iter().enumerate() {
                    x[i as usize] = sol[p];
                }
            }
            None => {
                for _ in 0..20 {
                    self.relax(l, b, x, true);
                    self.relax(l, b, x, false);
                }
            }
        }
    }

    fn make_work(&self) -> Vec<Work> {
        self.levels
            .iter()
            .map(|lvl| Work {
                b: vec![0.0; lvl.lat.len()],
                x: vec![0.0; lvl.lat.len()],
                r: vec![0.0; lvl.lat.len()],
                t1: Vec::new(),
                t2: Vec::new(),
            })
            .collect()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.free[0].iter().map(|&i| a[i as usize] * b[i as usize]).sum()
    }

    /// Preconditioned CG for `A x = b` on the finest free set, starting from `x = 0`.
    /// Returns `(iterations, relative residual, converged)`.
    pub fn pcg(&self, b: &[f64], x: &mut [f64], rtol: f64, maxit: usize) -> (usize, f64, bool) {
        let n = b.len();
        let bnorm = self.dot(b, b).sqrt();
        for &i in &self.free[0] {
            x[i as usize] = 0.0;
        }
        if bnorm == 0.0 {
            return (0, 0.0, true);
        }
        let mut work = self.make_work();
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        let mut q = vec![0.0; n];
        self.vcycle(0, &r, &mut z, &mut work[..]);
        let mut p = z.clone();
        let mut rz = self.dot(&r, &z);
        let mut res = 1.0;
        for it in 1..=maxit {
            self.apply(0, &p, &mut q);
            let pq = self.dot(&p, &q);
            if !(pq > 0.0) || !(rz > 0.0) {
                return (it, res, false);
            }
            let alpha = rz / pq;
            for &i in &self.free[0] {
                let i = i as usize;
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            res = self.dot(&r, &r).sqrt() / bnorm;
            if res <= rtol {
                return (it, res, true);
            }
            self.vcycle(0, &r, &mut z, &mut work[..]);
            let rz_new = self.dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for &i in &self.free[0] {
                let i = i as usize;
                p[i] = z[i] + beta * p[i];
            }
        }
        (maxit, res, false)
    }
}
