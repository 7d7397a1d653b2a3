//! Dense `(batch, channels, height, width)` tensors in row-major order.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Dimension {
                what: "tensor data",
                expected: (n * c * h * w, 1),
                found: (data.len(), 1),
            });
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements of one batch item.
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    pub fn item(&self, n: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let l = self.item_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    /// Copy of batch item `n` as a batch of one.
    pub fn select(&self, n: usize) -> Tensor {
        Tensor { n: 1, c: self.c, h: self.h, w: self.w, data: self.item(n).to_vec() }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::Argument("cannot stack an empty list".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut n = 0;
        for t in items {
            if [t.c, t.h, t.w] != [first.c, first.h, first.w] {
                return Err(Error::Dimension { what: "stacked tensor", expected: (first.h, first.w), found: (t.h, t.w) });
            }
            data.extend_from_slice(&t.data);
            n += t.n;
        }
        Ok(Tensor { n, c: first.c, h: first.h, w: first.w, data })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
