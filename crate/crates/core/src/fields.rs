//! Vector-field families `X = (X_1, …, X_m)`, their structure matrix `A = Σ X_j X_jᵀ`, and
//! X-elliptic coefficient matrices `B(x)` with `λ⟨Aξ,ξ⟩ ≤ ⟨Bξ,ξ⟩ ≤ Λ⟨Aξ,ξ⟩`.
//!
//! Small symmetric matrices are passed around as row-major `[f64; 9]` with the active block in the
//! top-left `N×N` corner.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::geometry::BoundingBox;

pub type Mat = [f64; 9];

/// Relative size below which an eigenvalue of `A` counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Scalar profile `φ` for a diagonal family `X_i = φ_i(x) ∂_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `scale · |x[axis]|^exponent`.
    AbsPower { axis: usize, exponent: f64, #[serde(default = "one")] scale: f64 },
    /// `1 - (1 - depth) · max(0, 1 - |x - center|²/radius²)²`, equal to `depth` at the centre and
    /// to 1 outside the ball.
    Bump { center: Vec<f64>, radius: f64, depth: f64 },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::AbsPower { axis, exponent, scale } => scale * x[*axis].abs().powf(*exponent),
            Profile::Bump { center, radius, depth } => {
                let s: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
                let w = (1.0 - s).max(0.0);
                1.0 - (1.0 - depth) * w * w
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Profile::Constant { value } if !value.is_finite() => config("constant profile must be finite"),
            Profile::AbsPower { axis, exponent, scale } => {
                if *axis >= dim {
                    return config(format!("profile axis {axis} out of range"));
                }
                if *exponent < 1.0 || !scale.is_finite() {
                    return config("abs-power profile needs exponent >= 1 (Lipschitz) and finite scale");
                }
                Ok(())
            }
            Profile::Bump { center, radius, depth } => {
                if center.len() != dim || !(*radius > 0.0) || !(*depth > 0.0 && *depth <= 1.0) {
                    return config("bump profile needs a centre of the right dimension, radius > 0, depth in (0,1]");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Lipschitz constant of the profile over `bbox`.
    fn lipschitz(&self, bbox: &BoundingBox) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::AbsPower { axis, exponent, scale } => {
                let m = bbox.lo()[*axis].abs().max(bbox.hi()[*axis].abs());
                scale.abs() * exponent * m.powf(exponent - 1.0)
            }
            // |d/dr (1-(1-δ)(1-r²/R²)²)| = 4(1-δ) r/R² (1-r²/R²) ≤ 8(1-δ)/(3√3 R)
            Profile::Bump { radius, depth, .. } => 8.0 * (1.0 - depth) / (3.0 * 3f64.sqrt() * radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FieldFamily {
    /// `X_j = ∂_j`, `j = 1..N`.
    Euclidean { dim: usize },
    /// `X_1 = ∂_1`, `X_2 = |x_1|^α ∂_2` on ℝ².
    Grushin { alpha: f64 },
    /// `X_1 = ∂_1 + 2x_2 ∂_3`, `X_2 = ∂_2 − 2x_1 ∂_3` on ℝ³.
    Heisenberg,
    /// `X_i = φ_i(x) ∂_i`.
    Diagonal { factors: Vec<Profile> },
}

impl FieldFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            FieldFamily::Euclidean { dim } if *dim == 0 || *dim > 3 => config("euclidean family supports 1..=3 dimensions"),
            FieldFamily::Grushin { alpha } if !(*alpha >= 1.0) => {
                config("grushin exponent must be >= 1 so the fields stay Lipschitz")
            }
            FieldFamily::Diagonal { factors } => {
                if factors.is_empty() || factors.len() > 3 {
                    return config("diagonal family supports 1..=3 dimensions");
                }
                factors.iter().try_for_each(|f| f.validate(factors.len()))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldFamily::Euclidean { dim } => *dim,
            FieldFamily::Grushin { .. } => 2,
            FieldFamily::Heisenberg => 3,
            FieldFamily::Diagonal { factors } => factors.len(),
        }
    }

    /// Number of fields `m`.
    pub fn count(&self) -> usize {
        match self {
            FieldFamily::Heisenberg => 2,
            _ => self.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FieldFamily::Euclidean { .. } => "euclidean",
            FieldFamily::Grushin { .. } => "grushin",
            FieldFamily::Heisenberg => "heisenberg",
            FieldFamily::Diagonal { .. } => "diagonal",
        }
    }

    /// True when `A(x)` is the identity everywhere.
    pub fn is_euclidean(&self) -> bool {
        matches!(self, FieldFamily::Euclidean { .. })
    }

    /// Diagonal entries of `A(x)` when `A` is diagonal for every `x`.
    fn diagonal_into(&self, x: &[f64], out: &mut [f64; 3]) -> bool {
        match self {
            FieldFamily::Euclidean { dim } => {
                out[..*dim].fill(1.0);
                true
            }
            FieldFamily::Grushin { alpha } => {
                out[0] = 1.0;
                out[1] = x[0].abs().powf(2.0 * alpha);
                true
            }
            FieldFamily::Diagonal { factors } => {
                for (o, f) in out.iter_mut().zip(factors) {
                    let v = f.value(x);
                    *o = v * v;
                }
                true
            }
            FieldFamily::Heisenberg => false,
        }
    }

    /// `X_j(x)`.
    pub fn evaluate(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert!(j < self.count(), "field index out of range");
        let mut v = vec![0.0; n];
        match self {
            FieldFamily::Euclidean { .. } => v[j] = 1.0,
            FieldFamily::Grushin { alpha } => v[j] = if j == 0 { 1.0 } else { x[0].abs().powf(*alpha) },
            FieldFamily::Heisenberg => {
                if j == 0 {
                    v = vec![1.0, 0.0, 2.0 * x[1]];
                } else {
                    v = vec![0.0, 1.0, -2.0 * x[0]];
                }
            }
            FieldFamily::Diagonal { factors } => v[j] = factors[j].value(x),
        }
        v
    }

    /// `A(x) = Σ_j X_j(x) X_j(x)ᵀ`, row-major in the top-left block of `out`.
    pub fn structure_into(&self, x: &[f64], out: &mut Mat) {
        let n = self.dim();
        *out = [0.0; 9];
        let mut d = [0.0; 3];
        if self.diagonal_into(x, &mut d) {
            for i in 0..n {
                out[i * n + i] = d[i];
            }
            return;
        }
        for j in 0..self.count() {
            let v = self.evaluate(j, x);
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += v[a] * v[b];
                }
            }
        }
    }

    pub fn structure_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = [0.0; 9];
        self.structure_into(x, &mut a);
        DMatrix::from_row_slice(n, n, &a[..n * n])
    }

    /// Travel time of the straight move `e` for a curve with velocity in the sub-unit set of `A(x)`:
    /// `sqrt(eᵀ A⁺ e)`, infinite when `e` leaves the range of `A(x)`.
    pub fn edge_cost(&self, x: &[f64], e: &[f64]) -> f64 {
        let n = self.dim();
        let e2: f64 = e.iter().map(|v| v * v).sum();
        let mut d = [0.0; 3];
        if self.diagonal_into(x, &mut d) {
            let amax = d[..n].iter().cloned().fold(0.0, f64::max);
            let mut c = 0.0;
            for i in 0..n {
                if e[i] == 0.0 {
                    continue;
                }
                if d[i] <= RANK_TOL * amax {
                    return f64::INFINITY;
                }
                c += e[i] * e[i] / d[i];
            }
            return c.sqrt();
        }
        let a = self.structure_matrix(x);
        let eig = SymmetricEigen::new(a);
        let amax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let ev = nalgebra::DVector::from_column_slice(e);
        let mut c = 0.0;
        for k in 0..n {
            let p = eig.eigenvectors.column(k).dot(&ev);
            let mu = eig.eigenvalues[k];
            if mu <= RANK_TOL * amax {
                if p * p > 1e-18 * e2 {
                    return f64::INFINITY;
                }
            } else {
                c += p * p / mu;
            }
        }
        c.sqrt()
    }

    /// Declared Lipschitz constant of the field components over `bbox`.
    pub fn lipschitz_bound(&self, bbox: &BoundingBox) -> f64 {
        match self {
            FieldFamily::Euclidean { .. } => 0.0,
            FieldFamily::Grushin { alpha } => {
                let m = bbox.lo()[0].abs().max(bbox.hi()[0].abs());
                alpha * m.powf(alpha - 1.0)
            }
            FieldFamily::Heisenberg => 2.0,
            FieldFamily::Diagonal { factors } => factors.iter().map(|f| f.lipschitz(bbox)).fold(0.0, f64::max),
        }
    }

    /// Largest Euclidean difference quotient of any field component over random nearby pairs.
    pub fn sampled_lipschitz(&self, bbox: &BoundingBox, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x: Vec<f64> = (0..n).map(|d| rng.gen_range(bbox.lo()[d]..bbox.hi()[d])).collect();
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(d, &v)| (v + rng.gen_range(-1.0..1.0) * bbox.h()).clamp(bbox.lo()[d], bbox.hi()[d]))
                .collect();
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist == 0.0 {
                continue;
            }
            for j in 0..self.count() {
                let (u, v) = (self.evaluate(j, &x), self.evaluate(j, &y));
                for (a, b) in u.iter().zip(&v) {
                    worst = worst.max((a - b).abs() / dist);
                }
            }
        }
        worst
    }
}

/// How `B(x)` is built from the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSpec {
    /// `B = scale · A`.
    Structure { #[serde(default = "one")] scale: f64 },
    /// `B = c1 A + c2 A R A` for a constant symmetric `R`.
    Sandwich { c1: f64, c2: f64, r: Vec<Vec<f64>> },
    /// Constant `B`; only meaningful for the Euclidean family.
    Constant { matrix: Vec<Vec<f64>> },
}

/// `B(x)` together with its X-ellipticity band `[λ, Λ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    family: FieldFamily,
    spec: MatrixSpec,
    r: Mat,
    lambda: f64,
    big_lambda: f64,
}

fn flat(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Mat> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return config(format!("{what} must be {n}x{n}"));
    }
    let mut m = [0.0; 9];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = rows[i][j];
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return config(format!("{what} has non-finite entries"));
    }
    Ok(m)
}

fn sym_eigen_range(m: &Mat, n: usize) -> (f64, f64) {
    let e = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &m[..n * n])).eigenvalues;
    (e.min(), e.max())
}

impl CoefficientMatrix {
    /// Builds `B` and derives its band over `bbox`. For `Sandwich` the band uses
    /// `sup_box ‖A‖`: `λ = c1 + c2·a_max·min(r_min, 0)`, `Λ = c1 + c2·a_max·max(r_max, 0)`
    /// (exact for the Euclidean family, where `a_max = 1` and the clamps are dropped).
    pub fn new(family: &FieldFamily, spec: MatrixSpec, bbox: &BoundingBox) -> Result<Self> {
        family.validate()?;
        let n = family.dim();
        if bbox.dim() != n {
            return config("coefficient matrix and box dimensions differ");
        }
        let (r, lambda, big_lambda) = match &spec {
            MatrixSpec::Structure { scale } => {
                if !(*scale > 0.0) {
                    return config("structure scale must be positive");
                }
                ([0.0; 9], *scale, *scale)
            }
            MatrixSpec::Sandwich { c1, c2, r } => {
                let r = flat(r, n, "sandwich R")?;
                if (0..n).any(|i| (0..n).any(|j| r[i * n + j] != r[j * n + i])) {
                    return config("sandwich R must be symmetric");
                }
                if !(*c2 >= 0.0) {
                    return config("sandwich c2 must be nonnegative");
                }
                let (rmin, rmax) = sym_eigen_range(&r, n);
                let (lo, hi) = if family.is_euclidean() {
                    (c1 + c2 * rmin, c1 + c2 * rmax)
                } else {
                    let amax = max_structure_norm(family, bbox);
                    (c1 + c2 * amax * rmin.min(0.0), c1 + c2 * amax * rmax.max(0.0))
                };
                (r, lo, hi)
            }
            MatrixSpec::Constant { matrix } => {
                if !family.is_euclidean() {
                    return config("a constant coefficient matrix is only X-elliptic for the euclidean family");
                }
                let m = flat(matrix, n, "constant matrix")?;
                let (lo, hi) = sym_eigen_range(&m, n);
                (m, lo, hi)
            }
        };
        if !(lambda > 0.0) || !(big_lambda >= lambda) {
            return config(format!("coefficient band [{lambda}, {big_lambda}] is not X-elliptic"));
        }
        Ok(Self {
            family: family.clone(),
            spec,
            r,
            lambda,
            big_lambda,
        })
    }

    pub fn family(&self) -> &FieldFamily {
        &self.family
    }

    pub fn spec(&self) -> &MatrixSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// True when `B` does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        matches!(self.spec, MatrixSpec::Constant { .. }) || self.family.is_euclidean()
    }

    /// True when `B(x)` is diagonal for every `x`.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        match &self.spec {
            MatrixSpec::Structure { .. } => !matches!(self.family, FieldFamily::Heisenberg),
            MatrixSpec::Sandwich { .. } => {
                !matches!(self.family, FieldFamily::Heisenberg)
                    && (0..n).all(|i| (0..n).all(|j| i == j || self.r[i * n + j] == 0.0))
            }
            MatrixSpec::Constant { .. } => (0..n).all(|i| (0..n).all(|j| i == j || self.r[i * n + j] == 0.0)),
        }
    }

    /// `B(x)` row-major into the top-left block of `out`. The upper triangle is computed and
    /// mirrored, except for user-supplied constant matrices which are returned verbatim.
    pub fn evaluate_into(&self, x: &[f64], out: &mut Mat) {
        let n = self.dim();
        match &self.spec {
            MatrixSpec::Structure { scale } => {
                self.family.structure_into(x, out);
                for v in out[..n * n].iter_mut() {
                    *v *= scale;
                }
            }
            MatrixSpec::Sandwich { c1, c2, .. } => {
                let mut a = [0.0; 9];
                self.family.structure_into(x, &mut a);
                let mut ra = [0.0; 9];
                for i in 0..n {
                    for j in 0..n {
                        ra[i * n + j] = (0..n).map(|k| self.r[i * n + k] * a[k * n + j]).sum();
                    }
                }
                *out = [0.0; 9];
                for i in 0..n {
                    for j in i..n {
                        let ara: f64 = (0..n).map(|k| a[i * n + k] * ra[k * n + j]).sum();
                        let v = c1 * a[i * n + j] + c2 * ara;
                        out[i * n + j] = v;
                        out[j * n + i] = v;
                    }
                }
            }
            MatrixSpec::Constant { .. } => *out = self.r,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut b = [0.0; 9];
        self.evaluate_into(x, &mut b);
        DMatrix::from_row_slice(n, n, &b[..n * n])
    }
}

fn max_structure_norm(family: &FieldFamily, bbox: &BoundingBox) -> f64 {
    // A's entries are monotone in |x_i| for the built-in families, so the box corners dominate;
    // a coarse interior sample covers the bump profile.
    let n = family.dim();
    let mut best: f64 = 0.0;
    let steps = 8usize;
    let total = (steps + 1).pow(n as u32);
    let mut x = vec![0.0; n];
    for k in 0..total {
        let mut rem = k;
        for d in 0..n {
            let t = (rem % (steps + 1)) as f64 / steps as f64;
            rem /= steps + 1;
            x[d] = bbox.lo()[d] + t * (bbox.hi()[d] - bbox.lo()[d]);
        }
        let a = family.structure_matrix(&x);
        best = best.max(SymmetricEigen::new(a).eigenvalues.max());
    }
    best
}

/// Extreme values of `⟨Bξ,ξ⟩/⟨Aξ,ξ⟩` over the sampled points and directions.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub points: usize,
    pub passes: bool,
}

/// Samples `samples` random directions at every point, plus the null space of `A` at each point.
/// Fails with an X-ellipticity error when `B` charges a direction that `A` annihilates.
pub fn check_x_ellipticity<'a>(
    b: &CoefficientMatrix,
    points: impl IntoIterator<Item = &'a [f64]>,
    samples: usize,
    seed: u64,
) -> Result<EllipticityReport> {
    if samples == 0 {
        return config("need at least one direction sample");
    }
    let n = b.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    let mut am = [0.0; 9];
    let mut bm = [0.0; 9];
    for x in points {
        count += 1;
        b.family().structure_into(x, &mut am);
        b.evaluate_into(x, &mut bm);
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &am[..n * n]));
        let amax = eig.eigenvalues.max().max(0.0);
        let bnorm = bm[..n * n].iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in 0..n {
            if eig.eigenvalues[k] > RANK_TOL * amax.max(1e-300) {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let q: f64 = (0..n).map(|i| (0..n).map(|j| v[i] * bm[i * n + j] * v[j]).sum::<f64>()).sum();
            if q > 1e-10 * bnorm.max(1e-300) {
                return Err(Error::XEllipticity {
                    point: x.to_vec(),
                    detail: format!("⟨Bξ,ξ⟩ = {q:.3e} > 0 in a null direction of A"),
                });
            }
        }
        for _ in 0..samples {
            let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let quad = |m: &Mat| -> f64 {
                (0..n).map(|i| (0..n).map(|j| xi[i] * m[i * n + j] * xi[j]).sum::<f64>()).sum()
            };
            let qa = quad(&am);
            if qa <= 1e-12 * amax {
                continue;
            }
            let r = quad(&bm) / qa;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let passes = lo >= b.lambda() * (1.0 - 1e-9) && hi <= b.big_lambda() * (1.0 + 1e-9);
    Ok(EllipticityReport {
        min_ratio: lo,
        max_ratio: hi,
        lambda: b.lambda(),
        big_lambda: b.big_lambda(),
        points: count,
        passes,
    })
}

/// Orthogonal matrix from the QR factor of a seeded random matrix.
pub fn random_rotation(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// `Q diag(eigs) Qᵀ` with `Q` from [`random_rotation`], symmetrized exactly.
pub fn random_symmetric(eigs: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let n = eigs.len();
    let q = random_rotation(n, seed);
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n).map(|k| q[(i, k)] * eigs[k] * q[(j, k)]).sum();
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}
