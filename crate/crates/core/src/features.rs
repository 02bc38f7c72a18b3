//! Perceptual embeddings: imported tables and a built-in classical descriptor.

use std::collections::BTreeMap;
use std::path::Path;

use crate::scalar::{normalize_in_place, Scalar};
use crate::{io, Error, Result};

/// Side length of the descriptor's cell grid.
pub const GRID: usize = 4;
/// Length of the classical descriptor: three statistics per cell plus two
/// global terms.
pub const CLASSICAL_DIM: usize = GRID * GRID * 3 + 2;

/// Embeddings keyed by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    entries: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[T]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<T>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    /// L2-normalizes every vector; vectors with norm below 1e-12 are rejected.
    pub fn finalize(mut self) -> Result<Self> {
        let eps = T::lit(1e-12);
        for (id, v) in self.entries.iter_mut() {
            if !normalize_in_place(v, eps) {
                return Err(Error::ZeroNorm(id.clone()));
            }
        }
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&x| U::lit(x.as_f64())).collect()))
                .collect(),
        }
    }
}

/// Reads an embedding file (PSPE binary when the file starts with the PSPE
/// magic, CSV otherwise) and L2-normalizes every vector.
pub fn import_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingTable<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let table = if bytes.starts_with(&io::pspe::EMBEDDING_MAGIC) {
        io::pspe::decode_embeddings(&bytes)?.cast()
    } else {
        io::csv::read_embeddings_csv::<T, _>(bytes.as_slice())?
    };
    table.finalize()
}

/// Row-major luminance image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::UnsupportedFormat("image with zero extent".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                left: pixels.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    /// Central-difference gradient magnitude, replicating border pixels.
    fn gradient_magnitude(&self) -> Vec<T> {
        let (w, h) = (self.width, self.height);
        let half = T::lit(0.5);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let (ya, yb) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xa, xb) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let gx = (self.at(xb, y) - self.at(xa, y)) * half;
                let gy = (self.at(x, yb) - self.at(x, ya)) * half;
                out.push((gx * gx + gy * gy).sqrt());
            }
        }
        out
    }
}

/// Reads a binary PGM (P5) or PPM (P6) file as luminance.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<GrayImage<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    io::pnm::decode(&bytes)
}

fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::from_usize(xs.len()).expect("count fits scalar");
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

fn median<T: Scalar>(xs: &mut [T]) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) * T::lit(0.5)
    }
}

/// The classical descriptor before L2 normalization.
///
/// Layout: for each cell of a 4x4 grid in row-major order, `(mean, std,
/// mean gradient magnitude)`; then the variance of the 4-neighbour Laplacian
/// over interior pixels, then the median absolute deviation of the gradient
/// magnitude over the whole image.
pub fn describe_raw<T: Scalar>(image: &GrayImage<T>) -> Result<Vec<T>> {
    let (w, h) = (image.width, image.height);
    if w < 8 || h < 8 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let grad = image.gradient_magnitude();
    let mut out = Vec::with_capacity(CLASSICAL_DIM);
    let mut lum = Vec::new();
    let mut g = Vec::new();
    for cy in 0..GRID {
        let (y0, y1) = (cy * h / GRID, (cy + 1) * h / GRID);
        for cx in 0..GRID {
            let (x0, x1) = (cx * w / GRID, (cx + 1) * w / GRID);
            lum.clear();
            g.clear();
            for y in y0..y1 {
                for x in x0..x1 {
                    lum.push(image.at(x, y));
                    g.push(grad[y * w + x]);
                }
            }
            let (mean, std) = mean_std(&lum);
            let (gmean, _) = mean_std(&g);
            out.extend([mean, std, gmean]);
        }
    }

    let four = T::lit(4.0);
    let laplacian: Vec<T> = (1..h - 1)
        .flat_map(|y| (1..w - 1).map(move |x| (x, y)))
        .map(|(x, y)| {
            image.at(x - 1, y) + image.at(x + 1, y) + image.at(x, y - 1) + image.at(x, y + 1)
                - four * image.at(x, y)
        })
        .collect();
    let (_, lap_std) = mean_std(&laplacian);
    out.push(lap_std * lap_std);

    let mut gs = grad;
    let med = median(&mut gs);
    let mut dev: Vec<T> = gs.iter().map(|&x| (x - med).abs()).collect();
    out.push(median(&mut dev));

    debug_assert_eq!(out.len(), CLASSICAL_DIM);
    Ok(out)
}

/// Unit-norm classical descriptor of length [`CLASSICAL_DIM`]. An all-zero
/// descriptor becomes the first basis vector.
pub fn extract_classical<T: Scalar>(image: &GrayImage<T>) -> Result<Vec<T>> {
    let mut v = describe_raw(image)?;
    if !normalize_in_place(&mut v, T::lit(1e-12)) {
        v.iter_mut().for_each(|x| *x = T::zero());
        v[0] = T::one();
    }
    Ok(v)
}
