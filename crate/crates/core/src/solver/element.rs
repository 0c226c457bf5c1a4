//! Reference multilinear element on `[0,1]^N`.
//!
//! The element matrix for a cell of width `h` with coefficient `B` is
//! `K[a][b] = h^(N-2) Σ_s B_s k[a][b][s]`, where `s` runs over the upper triangle of `B` and the
//! reference integrals `∫ ∂_d φ_a ∂_e φ_b` are exact (the quadrature only freezes `B`).

use crate::lattice::Lattice;

#[derive(Debug, Clone)]
pub(crate) struct RefElement {
    pub n: usize,
    /// Number of upper-triangle entries `N(N+1)/2`.
    pub ns: usize,
    /// `2^N` local corners `a ∈ {0,1}^N`, row-major.
    pub corners: usize,
    /// Linear lattice offset of each corner from the element's lower corner.
    pub corner_offsets: Vec<isize>,
    /// `k[(a * corners + b) * ns + s]`.
    pub k: Vec<f64>,
    /// Per stencil entry: local pairs `(a, b)` with `b − a` equal to that entry's offset.
    pub stencil_pairs: Vec<Vec<(usize, usize)>>,
}

pub(crate) fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for d in 0..n {
        for e in d..n {
            v.push((d, e));
        }
    }
    v
}

fn one_d(a: usize, b: usize, da: bool, db: bool) -> f64 {
    let s = |x: usize| if x == 1 { 1.0 } else { -1.0 };
    match (da, db) {
        (false, false) => {
            if a == b {
                1.0 / 3.0
            } else {
                1.0 / 6.0
            }
        }
        (true, false) => s(a) * 0.5,
        (false, true) => s(b) * 0.5,
        (true, true) => s(a) * s(b),
    }
}

impl RefElement {
    pub fn new(lat: &Lattice) -> Self {
        let n = lat.dim();
        let corners = 1usize << n;
        let bits = |a: usize| -> Vec<usize> { (0..n).map(|d| (a >> (n - 1 - d)) & 1).collect() };
        let corner_offsets = (0..corners)
            .map(|a| bits(a).iter().zip(lat.strides()).map(|(&x, &s)| (x * s) as isize).sum())
            .collect();
        let pairs = sym_pairs(n);
        let ns = pairs.len();
        let integral = |a: &[usize], b: &[usize], d: usize, e: usize| -> f64 {
            (0..n).map(|k| one_d(a[k], b[k], k == d, k == e)).product()
        };
        let mut k = vec![0.0; corners * corners * ns];
        for a in 0..corners {
            let ab = bits(a);
            for b in 0..corners {
                let bb = bits(b);
                for (s, &(d, e)) in pairs.iter().enumerate() {
                    let v = if d == e {
                        integral(&ab, &bb, d, d)
                    } else {
                        integral(&ab, &bb, d, e) + integral(&ab, &bb, e, d)
                    };
                    k[(a * corners + b) * ns + s] = v;
                }
            }
        }
        let offsets = lat.stencil_offsets();
        let stencil_pairs = offsets
            .iter()
            .map(|o| {
                let mut v = Vec::new();
                for a in 0..corners {
                    let ab = bits(a);
                    let bb: Vec<i64> = ab.iter().zip(o).map(|(&x, &y)| x as i64 + y).collect();
                    if bb.iter().all(|&x| x == 0 || x == 1) {
                        let b = bb.iter().fold(0usize, |acc, &x| (acc << 1) | x as usize);
                        v.push((a, b));
                    }
                }
                v
            })
            .collect();
        Self {
            n,
            ns,
            corners,
            corner_offsets,
            k,
            stencil_pairs,
        }
    }

    /// `h^(N-2)`.
    pub fn scale(&self, h: f64) -> f64 {
        h.powi(self.n as i32 - 2)
    }

    /// Element matrix entry for coefficient `b` (upper triangle).
    #[inline]
    pub fn entry(&self, b: &[f64], a: usize, c: usize) -> f64 {
        let base = (a * self.corners + c) * self.ns;
        let mut v = 0.0;
        for s in 0..self.ns {
            v += b[s] * self.k[base + s];
        }
        v
    }

    /// 3^N stencil of a node whose surrounding elements all carry the coefficient `b`.
    pub fn uniform_stencil(&self, b: &[f64], h: f64) -> Vec<f64> {
        let sc = self.scale(h);
        self.stencil_pairs
            .iter()
            .map(|pairs| sc * pairs.iter().map(|&(a, c)| self.entry(b, a, c)).sum::<f64>())
            .collect()
    }

    /// Stencil row of node `i`, reading each surrounding element's coefficient from `elem_b`
    /// (indexed by the element's lower-corner node).
    pub fn row_from_elements(&self, elem_b: &[f64], i: usize, h: f64, out: &mut [f64]) {
        let sc = self.scale(h);
        for (k, pairs) in self.stencil_pairs.iter().enumerate() {
            let mut v = 0.0;
            for &(a, c) in pairs {
                let e = (i as isize - self.corner_offsets[a]) as usize;
                v += self.entry(&elem_b[e * self.ns..(e + 1) * self.ns], a, c);
            }
            out[k] = sc * v;
        }
    }
}
