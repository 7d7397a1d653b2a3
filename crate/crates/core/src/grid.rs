//! Dense row-major 2D grids used for every image-like buffer in the crate.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type ScalarGrid = Grid<f64>;
pub type RgbGrid = Grid<Rgb>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension {
                what: "grid buffer",
                expected: (width, height),
                found: (data.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Grid<V>> {
        self.ensure_shape(other.shape(), "zip_map")?;
        Ok(Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_shape(&self, shape: (usize, usize), what: &'static str) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Dimension {
                what,
                expected: shape,
                found: self.shape(),
            });
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (x, y): (usize, usize)) -> &T {
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        &mut self.data[y * self.width + x]
    }
}

impl<T> Index<usize> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl RgbGrid {
    /// Bilinear lookup at continuous texel coordinates (texel centers at `i + 0.5`),
    /// clamped to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Rgb {
        let (x0, x1, fx) = bilinear_axis(u * self.width as f64, self.width);
        let (y0, y1, fy) = bilinear_axis(v * self.height as f64, self.height);
        let a = self[(x0, y0)];
        let b = self[(x1, y0)];
        let c = self[(x0, y1)];
        let d = self[(x1, y1)];
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bot = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bot - top) * fy;
        }
        out
    }
}

pub(crate) fn bilinear_axis(pos: f64, n: usize) -> (usize, usize, f64) {
    let p = (pos - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, p - i0 as f64)
}

/// Maps a UV coordinate in `[0,1]^2` to the texel containing it. V grows upward,
/// rows grow downward.
#[inline]
pub fn uv_to_texel(uv: [f64; 2], width: usize, height: usize) -> (usize, usize) {
    let x = ((uv[0] * width as f64).floor() as isize).clamp(0, width as isize - 1) as usize;
    let y = (((1.0 - uv[1]) * height as f64).floor() as isize).clamp(0, height as isize - 1) as usize;
    (x, y)
}

/// Continuous texel-space position of a UV coordinate (same convention as [`uv_to_texel`]).
#[inline]
pub fn uv_to_pixel_pos(uv: [f64; 2], width: usize, height: usize) -> (f64, f64) {
    (uv[0] * width as f64, (1.0 - uv[1]) * height as f64)
}

/// UV coordinate of a texel center.
#[inline]
pub fn texel_center_uv(x: usize, y: usize, width: usize, height: usize) -> [f64; 2] {
    [
        (x as f64 + 0.5) / width as f64,
        1.0 - (y as f64 + 0.5) / height as f64,
    ]
}
