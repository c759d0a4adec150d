//! Small dense rank-3 and rank-4 tensors in n <= 3 ambient dimensions.
//!
//! nalgebra covers vectors and matrices; curvature work also needs dg_ab/dx^c,
//! d2g and the Riemann tensor, which are rank 3 and 4. Sizes are tiny (n^3,
//! n^4 for n <= 3) so a flat Vec with manual indexing is the whole story.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Tensor3 { n, data: vec![0.0; n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }

    #[inline]
    pub fn add(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] += v;
    }

    /// Symmetrize over all three slots. Used to clean up finite-difference
    /// third derivatives, which are symmetric only up to truncation error.
    pub fn symmetrized(&self) -> Tensor3 {
        let n = self.n;
        let mut out = Tensor3::zeros(n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let s = self.get(a, b, c)
                        + self.get(a, c, b)
                        + self.get(b, a, c)
                        + self.get(b, c, a)
                        + self.get(c, a, b)
                        + self.get(c, b, a);
                    out.set(a, b, c, s / 6.0);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Tensor4 { n, data: vec![0.0; n * n * n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[((a * self.n + b) * self.n + c) * self.n + d]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        self.data[((a * self.n + b) * self.n + c) * self.n + d] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
