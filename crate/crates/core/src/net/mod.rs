//! Fully connected ReLU network with exact backpropagation.
//!
//! The production Q-network is `Mlp<f32>` of shape `[32, 256, 128, 5]`; the
//! code is generic over the float type so gradient checks can run the very
//! same kernels in `f64`. Parameters live in one flat buffer, layer by layer:
//! the `in×out` row-major weight matrix followed by the `out` biases.

mod adam;
mod checkpoint;

use rand::Rng;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC};

use crate::error::{Error, Result};

/// Layer sizes of the Q-network.
pub const Q_NET_SIZES: [usize; 4] = [32, 256, 128, 5];

pub trait Scalar: num_traits::Float + Default + Send + Sync + std::fmt::Debug + 'static {
    /// `C ← α·A·B + β·C` with arbitrary strides (row-major when `cs = 1`).
    ///
    /// # Safety
    /// The strided views must lie within the respective buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerSlot {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
}

fn layout(sizes: &[usize]) -> (Vec<LayerSlot>, usize) {
    let mut slots = Vec::with_capacity(sizes.len() - 1);
    let mut off = 0;
    for pair in sizes.windows(2) {
        let (inp, out) = (pair[0], pair[1]);
        slots.push(LayerSlot { inp, out, w: off, b: off + inp * out });
        off += inp * out + out;
    }
    (slots, off)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    slots: Vec<LayerSlot>,
    params: Vec<T>,
    version: u64,
}

/// Reusable activation buffers for one batch size.
#[derive(Default)]
pub struct Workspace<T> {
    batch: usize,
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            batch: 0,
            acts: Vec::new(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    /// Output rows of the most recent forward pass.
    pub fn output(&self) -> &[T] {
        self.acts.last().map(|a| a.as_slice()).unwrap_or(&[])
    }

    fn ensure(&mut self, sizes: &[usize], batch: usize) {
        if self.batch == batch && self.acts.len() == sizes.len() - 1
            && self.acts.iter().zip(&sizes[1..]).all(|(a, &s)| a.len() == batch * s) {
                return;
            }
        self.batch = batch;
        self.acts = sizes[1..].iter().map(|&s| vec![T::zero(); batch * s]).collect();
        let widest = sizes.iter().copied().max().unwrap_or(0);
        self.delta = vec![T::zero(); batch * widest];
        self.delta_prev = vec![T::zero(); batch * widest];
    }
}

pub fn huber(r: f64) -> f64 {
    if r.abs() <= 1.0 {
        0.5 * r * r
    } else {
        r.abs() - 0.5
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Mlp<T> {
    /// He-uniform weights (`±sqrt(6/fan_in)`), zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for s in net.slots.clone() {
            let bound = (6.0 / s.inp as f64).sqrt();
            for w in &mut net.params[s.w..s.b] {
                *w = T::from(bound * (2.0 * rng.random::<f64>() - 1.0)).unwrap();
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let (slots, n) = layout(sizes);
        Self {
            sizes: sizes.to_vec(),
            slots,
            params: vec![T::zero(); n],
            version: 0,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>, version: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(Error::Format(format!(
                "shape {sizes:?} needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        net.version = version;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Weights of layer `l` (`in×out`, row-major) and its biases.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let s = self.slots[l];
        (&self.params[s.w..s.b], &self.params[s.b..s.b + s.out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let s = self.slots[l];
        let (w, rest) = self.params[s.w..s.b + s.out].split_at_mut(s.inp * s.out);
        (w, rest)
    }

    /// Hard copy of parameters and version (target-network sync).
    pub fn sync_from(&mut self, online: &Mlp<T>) {
        assert_eq!(self.sizes, online.sizes, "shape mismatch in sync");
        self.params.copy_from_slice(&online.params);
        self.version = online.version;
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// FNV-1a over the parameter bit patterns and version.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.to_f64().unwrap().to_bits());
        }
        eat(self.version);
        h
    }

    /// Batched forward pass; `x` holds `batch` rows of `input_dim` values.
    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let mut ws = Workspace::new();
        self.forward_ws(x, batch, &mut ws).to_vec()
    }

    pub fn forward_ws<'w>(&self, x: &[T], batch: usize, ws: &'w mut Workspace<T>) -> &'w [T] {
        assert_eq!(x.len(), batch * self.input_dim(), "input shape");
        ws.ensure(&self.sizes, batch);
        let last = self.slots.len() - 1;
        for (l, s) in self.slots.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l);
            let input: &[T] = if l == 0 { x } else { &before[l - 1] };
            let out = &mut after[0];
            let bias = &self.params[s.b..s.b + s.out];
            for row in out.chunks_exact_mut(s.out) {
                row.copy_from_slice(bias);
            }
            let w = &self.params[s.w..s.b];
            // out (batch×o) += input (batch×i) · W (i×o)
            unsafe {
                T::gemm(
                    batch,
                    s.inp,
                    s.out,
                    T::one(),
                    input.as_ptr(),
                    s.inp as isize,
                    1,
                    w.as_ptr(),
                    s.out as isize,
                    1,
                    T::one(),
                    out.as_mut_ptr(),
                    s.out as isize,
                    1,
                );
            }
            if l < last {
                for v in out.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
        }
        &ws.acts[last]
    }

    /// Mean Huber(δ=1) loss over `q[i, actions[i]] − targets[i]` and its exact
    /// gradient with respect to every parameter, written into `grad`.
    pub fn backward(
        &self,
        x: &[T],
        actions: &[usize],
        targets: &[T],
        ws: &mut Workspace<T>,
        grad: &mut [T],
    ) -> Result<f64> {
        let batch = actions.len();
        assert_eq!(targets.len(), batch, "targets length");
        assert_eq!(grad.len(), self.params.len(), "gradient length");
        let n_out = self.output_dim();
        self.forward_ws(x, batch, ws);
        let last = self.slots.len() - 1;

        let inv_b = 1.0 / batch as f64;
        let mut loss = 0.0;
        let delta = &mut ws.delta[..batch * n_out];
        delta.iter_mut().for_each(|d| *d = T::zero());
        for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            assert!(a < n_out, "action index {a} out of range");
            let r = (ws.acts[last][i * n_out + a] - y).to_f64().unwrap();
            loss += huber(r);
            delta[i * n_out + a] = T::from(r.clamp(-1.0, 1.0) * inv_b).unwrap();
        }
        loss *= inv_b;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss {loss}")));
        }

        for l in (0..=last).rev() {
            let s = self.slots[l];
            let input: &[T] = if l == 0 { x } else { &ws.acts[l - 1] };
            let delta = &ws.delta[..batch * s.out];
            // dW (i×o) = inputᵀ (i×batch) · delta (batch×o)
            unsafe {
                T::gemm(
                    s.inp,
                    batch,
                    s.out,
                    T::one(),
                    input.as_ptr(),
                    1,
                    s.inp as isize,
                    delta.as_ptr(),
                    s.out as isize,
                    1,
                    T::zero(),
                    grad[s.w..s.b].as_mut_ptr(),
                    s.out as isize,
                    1,
                );
            }
            let gb = &mut grad[s.b..s.b + s.out];
            gb.iter_mut().for_each(|g| *g = T::zero());
            for row in delta.chunks_exact(s.out) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            if l == 0 {
                break;
            }
            // delta_prev (batch×i) = delta (batch×o) · Wᵀ (o×i), masked by ReLU'.
            let w = &self.params[s.w..s.b];
            let dp = &mut ws.delta_prev[..batch * s.inp];
            unsafe {
                T::gemm(
                    batch,
                    s.out,
                    s.inp,
                    T::one(),
                    delta.as_ptr(),
                    s.out as isize,
                    1,
                    w.as_ptr(),
                    1,
                    s.out as isize,
                    T::zero(),
                    dp.as_mut_ptr(),
                    s.inp as isize,
                    1,
                );
            }
            for (d, &a) in dp.iter_mut().zip(&ws.acts[l - 1]) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
        Ok(loss)
    }

    /// Loss only; used by finite-difference checks.
    pub fn loss(&self, x: &[T], actions: &[usize], targets: &[T]) -> f64 {
        let q = self.forward(x, actions.len());
        let n = self.output_dim();
        actions
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (&a, &y))| huber((q[i * n + a] - y).to_f64().unwrap()))
            .sum::<f64>()
            / actions.len() as f64
    }
}
