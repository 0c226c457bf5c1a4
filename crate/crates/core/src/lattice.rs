//! Row-major index arithmetic for regular node lattices and their 3^N neighbour stencils.

/// Shape of a regular lattice of nodes. Linear indices are row-major: the last axis is
/// contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1usize; dims.len()];
        for d in (0..dims.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * dims[d + 1];
        }
        Self {
            dims: dims.to_vec(),
            strides,
            len: dims.iter().product(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn coords(&self, mut index: usize, out: &mut [usize]) {
        for d in 0..self.dims.len() {
            out[d] = index / self.strides[d];
            index %= self.strides[d];
        }
    }

    pub fn coords_vec(&self, index: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        self.coords(index, &mut c);
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    /// Index of `coords + offset`, or `None` when it leaves the lattice.
    pub fn shifted(&self, coords: &[usize], offset: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for d in 0..self.dims.len() {
            let c = coords[d] as i64 + offset[d];
            if c < 0 || c >= self.dims[d] as i64 {
                return None;
            }
            idx += c as usize * self.strides[d];
        }
        Some(idx)
    }

    /// True when the node is not on the outermost layer, i.e. its full 3^N neighbourhood exists.
    pub fn is_interior(&self, index: usize) -> bool {
        let mut rem = index;
        for d in 0..self.dims.len() {
            let c = rem / self.strides[d];
            rem %= self.strides[d];
            if c == 0 || c + 1 >= self.dims[d] {
                return false;
            }
        }
        true
    }

    /// The 3^N stencil as per-axis offsets, enumerated lexicographically over {-1,0,1}^N.
    /// Entry `k` and entry `3^N - 1 - k` are opposite; the centre is `(3^N - 1) / 2`.
    pub fn stencil_offsets(&self) -> Vec<Vec<i64>> {
        stencil_offsets(self.dim())
    }

    /// Linear-index displacement of each stencil entry (valid for interior nodes).
    pub fn stencil_linear_offsets(&self) -> Vec<isize> {
        self.stencil_offsets()
            .iter()
            .map(|o| {
                o.iter()
                    .zip(&self.strides)
                    .map(|(&a, &s)| a as isize * s as isize)
                    .sum()
            })
            .collect()
    }

    /// Invokes `f` with the index of every existing 3^N neighbour (centre excluded).
    pub fn for_each_neighbor(&self, index: usize, mut f: impl FnMut(usize)) {
        let n = self.dim();
        let mut c = [0usize; 8];
        self.coords(index, &mut c[..n]);
        let total = 3usize.pow(n as u32);
        'outer: for k in 0..total {
            if k == total / 2 {
                continue;
            }
            let mut rem = k;
            let mut idx = 0usize;
            for d in (0..n).rev() {
                let o = (rem % 3) as i64 - 1;
                rem /= 3;
                let cd = c[d] as i64 + o;
                if cd < 0 || cd >= self.dims[d] as i64 {
                    continue 'outer;
                }
                idx += cd as usize * self.strides[d];
            }
            f(idx);
        }
    }
}

pub fn stencil_offsets(dim: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(dim as u32);
    (0..total)
        .map(|k| {
            let mut o = vec![0i64; dim];
            let mut rem = k;
            for d in (0..dim).rev() {
                o[d] = (rem % 3) as i64 - 1;
                rem /= 3;
            }
            o
        })
        .collect()
}
