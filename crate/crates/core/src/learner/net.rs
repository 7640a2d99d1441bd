//! Batch-normalized MLP with a dueling or plain Q head, stored in one flat parameter buffer.
//!
//! Trunk layer: `z = x W`, batch norm with learned scale/shift, then ReLU. The affine bias
//! is omitted in the trunk since batch norm cancels it. Weight matrices are row-major
//! `(fan_in, fan_out)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
    pub dueling: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl NetSpec {
    pub fn new(input: usize, hidden: Vec<usize>, actions: usize, dueling: bool) -> Self {
        Self {
            input,
            hidden,
            actions,
            dueling,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.actions == 0 || self.hidden.contains(&0) {
            return Err(Error::config("train.hidden", "all layer widths must be >= 1"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || !(self.bn_eps > 0.0) {
            return Err(Error::config("train.bn_momentum", "need 0 < momentum <= 1 and eps > 0"));
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        let mut off = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            out.push(Block { name, offset: off, rows, cols });
            off += rows * cols;
        };
        let mut fan_in = self.input;
        for (i, &h) in self.hidden.iter().enumerate() {
            add(format!("trunk{i}.w"), fan_in, h);
            add(format!("trunk{i}.gamma"), 1, h);
            add(format!("trunk{i}.beta"), 1, h);
            fan_in = h;
        }
        if self.dueling {
            add("value.w".into(), fan_in, 1);
            add("value.b".into(), 1, 1);
            add("adv.w".into(), fan_in, self.actions);
            add("adv.b".into(), 1, self.actions);
        } else {
            add("q.w".into(), fan_in, self.actions);
            add("q.b".into(), 1, self.actions);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.rows * b.cols).sum()
    }

    pub fn running_count(&self) -> usize {
        2 * self.hidden.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    name: String,
    offset: usize,
    rows: usize,
    cols: usize,
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet<T: Real> {
    spec: NetSpec,
    blocks: Vec<Block>,
    /// All trainable parameters.
    pub params: Vec<T>,
    /// Per trunk layer: running mean then running variance.
    pub running: Vec<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T: Real> {
    inputs: Vec<Array2<T>>,
    zhat: Vec<Array2<T>>,
    inv_std: Vec<Array1<T>>,
    pre_act: Vec<Array2<T>>,
    batch_mean: Vec<Array1<T>>,
    batch_var: Vec<Array1<T>>,
    head_in: Array2<T>,
}

impl<T: Real> DuelingNet<T> {
    /// He-uniform weights, unit BN scale, zero shifts and biases.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let blocks = spec.blocks();
        let mut params = vec![T::zero(); spec.param_count()];
        for b in &blocks {
            let slot = &mut params[b.range()];
            if b.name.ends_with(".w") {
                let limit = (6.0 / b.rows as f64).sqrt();
                for p in slot.iter_mut() {
                    *p = T::lit(rng.gen_range(-limit..limit));
                }
            } else if b.name.ends_with(".gamma") {
                slot.fill(T::one());
            }
        }
        let running = Self::fresh_running(&spec);
        Ok(Self { spec, blocks, params, running })
    }

    /// All-zero parameters (BN scale included); useful for hand-built nets.
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let blocks = spec.blocks();
        let params = vec![T::zero(); spec.param_count()];
        let running = Self::fresh_running(&spec);
        Ok(Self { spec, blocks, params, running })
    }

    pub fn from_parts(spec: NetSpec, params: Vec<T>, running: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() || running.len() != spec.running_count() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: expected {}/{}, got {}/{}",
                spec.param_count(),
                spec.running_count(),
                params.len(),
                running.len()
            )));
        }
        let blocks = spec.blocks();
        Ok(Self { spec, blocks, params, running })
    }

    fn fresh_running(spec: &NetSpec) -> Vec<T> {
        let mut r = Vec::with_capacity(spec.running_count());
        for &h in &spec.hidden {
            r.extend(std::iter::repeat_n(T::zero(), h));
            r.extend(std::iter::repeat_n(T::one(), h));
        }
        r
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_len(&self) -> usize {
        self.spec.input
    }

    pub fn action_count(&self) -> usize {
        self.spec.actions
    }

    /// Names of the parameter blocks, in buffer order.
    pub fn block_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.name.as_str()).collect()
    }

    fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Usage(format!("no parameter block `{name}`")))
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let r = self.block(name)?.range();
        Ok(&mut self.params[r])
    }

    fn mat(&self, idx: usize) -> ArrayView2<'_, T> {
        let b = &self.blocks[idx];
        ArrayView2::from_shape((b.rows, b.cols), &self.params[b.range()]).expect("block shape")
    }

    fn vec(&self, idx: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.params[self.blocks[idx].range()])
    }

    fn running_stats(&self, layer: usize) -> (ArrayView1<'_, T>, ArrayView1<'_, T>) {
        let off: usize = 2 * self.spec.hidden[..layer].iter().sum::<usize>();
        let h = self.spec.hidden[layer];
        (
            ArrayView1::from(&self.running[off..off + h]),
            ArrayView1::from(&self.running[off + h..off + 2 * h]),
        )
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.spec.input {
            return Err(Error::Usage(format!(
                "feature length {} does not match network input {}",
                x.ncols(),
                self.spec.input
            )));
        }
        Ok(())
    }

    /// Q values for a batch (rows are samples).
    pub fn forward(&self, x: ArrayView2<T>, mode: Mode) -> Result<Array2<T>> {
        Ok(self.forward_cached(x, mode)?.0)
    }

    /// Greedy-evaluation Q values for one state.
    pub fn q_values(&self, state: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row");
        Ok(self.forward(x, Mode::Eval)?.row(0).to_vec())
    }

    pub fn forward_cached(&self, x: ArrayView2<T>, mode: Mode) -> Result<(Array2<T>, Cache<T>)> {
        self.check_input(&x)?;
        let eps = T::lit(self.spec.bn_eps);
        let mut cache = Cache {
            inputs: Vec::new(),
            zhat: Vec::new(),
            inv_std: Vec::new(),
            pre_act: Vec::new(),
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
            head_in: Array2::zeros((0, 0)),
        };
        let mut h = x.to_owned();
        for l in 0..self.spec.hidden.len() {
            let z = h.dot(&self.mat(3 * l));
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                    (mean, var)
                }
                Mode::Eval => {
                    let (m, v) = self.running_stats(l);
                    (m.to_owned(), v.to_owned())
                }
            };
            let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
            let zhat = (&z - &mean) * &inv_std;
            let y = &zhat * &self.vec(3 * l + 1) + self.vec(3 * l + 2);
            let a = y.mapv(|v| if v > T::zero() { v } else { T::zero() });
            cache.inputs.push(h);
            cache.zhat.push(zhat);
            cache.inv_std.push(inv_std);
            cache.pre_act.push(y);
            cache.batch_mean.push(mean);
            cache.batch_var.push(var);
            h = a;
        }
        let base = 3 * self.spec.hidden.len();
        let q = if self.spec.dueling {
            let v = h.dot(&self.mat(base)) + self.vec(base + 1);
            let adv = h.dot(&self.mat(base + 2)) + self.vec(base + 3);
            let mean_adv = adv.mean_axis(Axis(1)).expect("actions >= 1").insert_axis(Axis(1));
            &adv - &mean_adv + &v
        } else {
            h.dot(&self.mat(base)) + self.vec(base + 1)
        };
        cache.head_in = h;
        Ok((q, cache))
    }

    /// Gradient of `sum(dq * Q)` with respect to the parameters, for a train-mode cache.
    pub fn backward(&self, cache: &Cache<T>, dq: ArrayView2<T>) -> Vec<T> {
        let mut grad = vec![T::zero(); self.params.len()];
        let put = |grad: &mut Vec<T>, idx: usize, g: &Array2<T>| {
            let r = self.blocks[idx].range();
            for (dst, src) in grad[r].iter_mut().zip(g.iter()) {
                *dst += *src;
            }
        };
        let put1 = |grad: &mut Vec<T>, idx: usize, g: &Array1<T>| {
            let r = self.blocks[idx].range();
            for (dst, src) in grad[r].iter_mut().zip(g.iter()) {
                *dst += *src;
            }
        };
        let h = &cache.head_in;
        let base = 3 * self.spec.hidden.len();
        let mut dh = if self.spec.dueling {
            let dv = dq.sum_axis(Axis(1)).insert_axis(Axis(1));
            let mean_dq = dq.mean_axis(Axis(1)).expect("actions >= 1").insert_axis(Axis(1));
            let da = &dq - &mean_dq;
            put(&mut grad, base, &h.t().dot(&dv));
            put1(&mut grad, base + 1, &dv.sum_axis(Axis(0)));
            put(&mut grad, base + 2, &h.t().dot(&da));
            put1(&mut grad, base + 3, &da.sum_axis(Axis(0)));
            dv.dot(&self.mat(base).t()) + da.dot(&self.mat(base + 2).t())
        } else {
            put(&mut grad, base, &h.t().dot(&dq));
            put1(&mut grad, base + 1, &dq.sum_axis(Axis(0)));
            dq.dot(&self.mat(base).t())
        };
        let n = T::lit(dq.nrows() as f64);
        for l in (0..self.spec.hidden.len()).rev() {
            let y = &cache.pre_act[l];
            let zhat = &cache.zhat[l];
            let dy = ndarray::Zip::from(&dh)
                .and(y)
                .map_collect(|&g, &v| if v > T::zero() { g } else { T::zero() });
            put1(&mut grad, 3 * l + 1, &(&dy * zhat).sum_axis(Axis(0)));
            put1(&mut grad, 3 * l + 2, &dy.sum_axis(Axis(0)));
            let dzhat = &dy * &self.vec(3 * l + 1);
            let sum_dzhat = dzhat.sum_axis(Axis(0));
            let sum_dzhat_zhat = (&dzhat * zhat).sum_axis(Axis(0));
            let dz = (&dzhat * n - &sum_dzhat - &(zhat * &sum_dzhat_zhat)) * &(&cache.inv_std[l] / n);
            put(&mut grad, 3 * l, &cache.inputs[l].t().dot(&dz));
            if l > 0 {
                dh = dz.dot(&self.mat(3 * l).t());
            }
        }
        grad
    }

    /// Mean squared TD error over the taken actions plus `l2 * |params|^2`, and its gradient.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<T>,
        actions: &[usize],
        targets: &[T],
        l2: T,
    ) -> Result<(T, Vec<T>, Cache<T>)> {
        let b = x.nrows();
        if actions.len() != b || targets.len() != b || b == 0 {
            return Err(Error::Usage("batch, actions and targets must align".into()));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.spec.actions) {
            return Err(Error::Usage(format!("action index {a} out of range")));
        }
        let (q, cache) = self.forward_cached(x, Mode::Train)?;
        let nb = T::lit(b as f64);
        let mut dq = Array2::zeros(q.raw_dim());
        let mut loss = T::zero();
        for i in 0..b {
            let err = q[(i, actions[i])] - targets[i];
            loss += err * err / nb;
            dq[(i, actions[i])] = (err + err) / nb;
        }
        let mut grad = self.backward(&cache, dq.view());
        if l2 > T::zero() {
            for (g, p) in grad.iter_mut().zip(&self.params) {
                loss += l2 * *p * *p;
                *g += (l2 + l2) * *p;
            }
        }
        Ok((loss, grad, cache))
    }

    /// Loss only (no side effects); used by finite-difference checks.
    pub fn loss(&self, x: ArrayView2<T>, actions: &[usize], targets: &[T], l2: T) -> Result<T> {
        Ok(self.loss_and_grad(x, actions, targets, l2)?.0)
    }

    /// Fold a train-mode cache's batch statistics into the running averages.
    pub fn update_running(&mut self, cache: &Cache<T>) {
        let m = T::lit(self.spec.bn_momentum);
        let mut off = 0;
        for l in 0..self.spec.hidden.len() {
            let h = self.spec.hidden[l];
            for k in 0..h {
                let rm = &mut self.running[off + k];
                *rm = (T::one() - m) * *rm + m * cache.batch_mean[l][k];
                let rv = &mut self.running[off + h + k];
                *rv = (T::one() - m) * *rv + m * cache.batch_var[l][k];
            }
            off += 2 * h;
        }
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.params.copy_from_slice(&other.params);
        self.running.copy_from_slice(&other.running);
    }

    pub fn cast<U: Real>(&self) -> DuelingNet<U> {
        DuelingNet {
            spec: self.spec.clone(),
            blocks: self.blocks.clone(),
            params: self.params.iter().map(|p| U::lit(p.to_f64_lossy())).collect(),
            running: self.running.iter().map(|p| U::lit(p.to_f64_lossy())).collect(),
        }
    }
}

/// Index of the largest value; ties and NaNs resolve to the lowest index.
pub fn argmax<T: Real>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate().skip(1) {
        if *v > q[best] {
            best = i;
        }
    }
    best
}
