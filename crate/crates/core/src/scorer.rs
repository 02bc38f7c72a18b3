//! Pairwise residual scorer `S(x, x')`.
//!
//! `S(e, e_ref) = W3 . tanh(W2 . tanh(W1 . (e - e_ref)))` with no bias terms.
//! The network is an odd function of the embedding difference, so
//! `S(a, b) = -S(b, a)` and `S(a, a) = 0` hold for every parameter value.

use crate::dataset::Dataset;
use crate::nnindex::NeighborDictionary;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams<T> {
    d: usize,
    h: usize,
    /// `h x d`, row-major.
    w1: Vec<T>,
    /// `h x h`, row-major.
    w2: Vec<T>,
    w3: Vec<T>,
}

impl<T: Scalar> ScorerParams<T> {
    pub fn from_parts(d: usize, h: usize, w1: Vec<T>, w2: Vec<T>, w3: Vec<T>) -> Result<Self> {
        if w1.len() != h * d || w2.len() != h * h || w3.len() != h {
            return Err(Error::InvalidConfig(format!(
                "weight shapes {}/{}/{} do not match d={d}, h={h}",
                w1.len(),
                w2.len(),
                w3.len()
            )));
        }
        if w1.iter().chain(&w2).chain(&w3).any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
        Ok(Self { d, h, w1, w2, w3 })
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            d,
            h,
            w1: vec![T::zero(); h * d],
            w2: vec![T::zero(); h * h],
            w3: vec![T::zero(); h],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn w1(&self) -> &[T] {
        &self.w1
    }

    pub fn w2(&self) -> &[T] {
        &self.w2
    }

    pub fn w3(&self) -> &[T] {
        &self.w3
    }

    /// All weights in serialization order (W1, W2, W3).
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.w1.iter().chain(&self.w2).chain(&self.w3)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w1
            .iter_mut()
            .chain(self.w2.iter_mut())
            .chain(self.w3.iter_mut())
    }

    pub fn num_weights(&self) -> usize {
        self.w1.len() + self.w2.len() + self.w3.len()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|w| w.is_finite())
    }

    /// `self <- self - lr * grad`.
    pub fn descend(&mut self, grad: &Self, lr: T) {
        for (w, g) in self.iter_mut().zip(grad.iter()) {
            *w = *w - lr * *g;
        }
    }

    fn check_dims(&self, e: &[T], e_ref: &[T]) -> Result<()> {
        for len in [e.len(), e_ref.len()] {
            if len != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    got: len,
                });
            }
        }
        Ok(())
    }

    fn activations(&self, e: &[T], e_ref: &[T]) -> Activations<T> {
        let delta: Vec<T> = e.iter().zip(e_ref).map(|(&a, &b)| a - b).collect();
        let a1: Vec<T> = self
            .w1
            .chunks_exact(self.d)
            .map(|row| crate::scalar::dot(row, &delta).tanh())
            .collect();
        let a2: Vec<T> = self
            .w2
            .chunks_exact(self.h)
            .map(|row| crate::scalar::dot(row, &a1).tanh())
            .collect();
        let out = crate::scalar::dot(&self.w3, &a2);
        Activations { delta, a1, a2, out }
    }

    /// Residual `S(e, e_ref)`.
    pub fn forward(&self, e: &[T], e_ref: &[T]) -> Result<T> {
        self.check_dims(e, e_ref)?;
        Ok(self.activations(e, e_ref).out)
    }
}

struct Activations<T> {
    delta: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    out: T,
}

/// Xavier-uniform initialization: each weight uniform in `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`, drawn W1 row-major, then W2, then W3.
pub fn init_params<T: Scalar>(d: usize, h: usize, rng: &mut Rng) -> Result<ScorerParams<T>> {
    if d == 0 || h == 0 {
        return Err(Error::InvalidConfig(format!(
            "scorer needs d >= 1 and h >= 1, got d={d}, h={h}"
        )));
    }
    let mut draw = |n: usize, fan_in: usize, fan_out: usize| -> Vec<T> {
        let a = xavier_bound(fan_in, fan_out);
        (0..n).map(|_| T::lit(rng.uniform_in(-a, a))).collect()
    };
    loop {
        let w1 = draw(h * d, d, h);
        let w2 = draw(h * h, h, h);
        let w3 = draw(h, h, 1);
        let p = ScorerParams { d, h, w1, w2, w3 };
        if p.iter().any(|w| *w != T::zero()) {
            return Ok(p);
        }
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// One training example: label `y`, the item and reference embeddings, and
/// the reference's current score estimate (held constant under
/// differentiation).
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub y: T,
    pub e: &'a [T],
    pub e_ref: &'a [T],
    pub u_ref: T,
}

fn check_batch<T: Scalar>(params: &ScorerParams<T>, batch: &[Sample<'_, T>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    batch
        .iter()
        .try_for_each(|s| params.check_dims(s.e, s.e_ref))
}

/// Mean of `(y - (S(e, e_ref) + u_ref))^2` over the batch.
pub fn loss<T: Scalar>(params: &ScorerParams<T>, batch: &[Sample<'_, T>]) -> Result<T> {
    check_batch(params, batch)?;
    let n = T::from_usize(batch.len()).expect("batch size fits scalar");
    let total: T = batch
        .iter()
        .map(|s| {
            let r = s.y - (params.activations(s.e, s.e_ref).out + s.u_ref);
            r * r
        })
        .sum();
    Ok(total / n)
}

/// Analytic gradient of [`loss`] with respect to every weight. Per-sample
/// contributions are accumulated in batch order.
pub fn grad<T: Scalar>(params: &ScorerParams<T>, batch: &[Sample<'_, T>]) -> Result<ScorerParams<T>> {
    check_batch(params, batch)?;
    let (d, h) = (params.d, params.h);
    let n = T::from_usize(batch.len()).expect("batch size fits scalar");
    let two = T::lit(2.0);
    let mut g = ScorerParams::zeros(d, h);
    let mut dz2 = vec![T::zero(); h];
    let mut dz1 = vec![T::zero(); h];
    for s in batch {
        let act = params.activations(s.e, s.e_ref);
        // dL/dS for this sample
        let ds = -two * (s.y - act.out - s.u_ref) / n;
        for k in 0..h {
            g.w3[k] = g.w3[k] + ds * act.a2[k];
            dz2[k] = ds * params.w3[k] * (T::one() - act.a2[k] * act.a2[k]);
        }
        for k in 0..h {
            let row = &mut g.w2[k * h..(k + 1) * h];
            for (gw, &a) in row.iter_mut().zip(&act.a1) {
                *gw = *gw + dz2[k] * a;
            }
        }
        for j in 0..h {
            let back: T = (0..h).fold(T::zero(), |acc, k| acc + params.w2[k * h + j] * dz2[k]);
            dz1[j] = back * (T::one() - act.a1[j] * act.a1[j]);
        }
        for j in 0..h {
            let row = &mut g.w1[j * d..(j + 1) * d];
            for (gw, &x) in row.iter_mut().zip(&act.delta) {
                *gw = *gw + dz1[j] * x;
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch: 16,
            epochs: 10,
            hidden: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// One shuffled pass of minibatch SGD.
///
/// `labels[n]` is the raw label `y_n`; `references` holds the score
/// estimates looked up through the neighbour dictionary. Returns the updated
/// parameters and the size-weighted mean batch loss.
pub fn sgd_epoch<T: Scalar>(
    params: &ScorerParams<T>,
    dataset: &Dataset<T>,
    dict: &NeighborDictionary<T>,
    labels: &[T],
    references: &[T],
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<(ScorerParams<T>, T)> {
    let n = dataset.len();
    if labels.len() != n || references.len() != n || dict.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len().min(references.len()).min(dict.len()),
        });
    }
    let lr = T::lit(config.lr);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut p = params.clone();
    let mut loss_sum = T::zero();
    let mut batch = Vec::with_capacity(config.batch);
    for chunk in order.chunks(config.batch.max(1)) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| {
            let m = dict.neighbors()[i];
            Sample {
                y: labels[i],
                e: dataset.embedding(i),
                e_ref: dataset.embedding(m),
                u_ref: references[m],
            }
        }));
        let size = T::from_usize(chunk.len()).expect("batch size fits scalar");
        loss_sum = loss_sum + loss(&p, &batch)? * size;
        let g = grad(&p, &batch)?;
        p.descend(&g, lr);
    }
    let mean = loss_sum / T::from_usize(n.max(1)).expect("count fits scalar");
    Ok((p, mean))
}

/// Trains a fresh scorer for `config.epochs` epochs with fixed references.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    dict: &NeighborDictionary<T>,
    labels: &[T],
    references: &[T],
    config: &TrainConfig,
) -> Result<ScorerParams<T>> {
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let mut p = init_params(dataset.dim(), config.hidden, &mut rng)?;
    for _ in 0..config.epochs {
        p = sgd_epoch(&p, dataset, dict, labels, references, config, &mut rng)?.0;
    }
    Ok(p)
}
