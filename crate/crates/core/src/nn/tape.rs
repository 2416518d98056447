use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Dropout behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Leaf,
    Affine,
    Relu,
    Dropout,
    Conv1d,
    MaxOverTime,
    Lstm,
    SoftmaxCrossEntropy,
    Gather,
    Concat,
    AddN,
    Scale,
    Mul,
    Sum,
}

/// Multiplies the input gradients produced by one op kind. Test hook used to
/// show that the gradient checker catches broken backward passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradFault {
    pub op: OpKind,
    pub factor: f64,
}

#[derive(Debug)]
struct LstmCache {
    hidden: usize,
    steps: usize,
    /// Post-activation gates per step, laid out `[i, f, g, o]`.
    gates: Vec<Vec<f64>>,
    /// Cell states per step (`cells[0]` is `c0`).
    cells: Vec<Vec<f64>>,
    /// Hidden states per step (`hiddens[0]` is `h0`).
    hiddens: Vec<Vec<f64>>,
    tanh_cells: Vec<Vec<f64>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Dropout { x: Var, scale: Vec<f64> },
    Conv1d { seq: Var, filter: Var, bias: Var },
    MaxOverTime { x: Var, argmax: Vec<usize> },
    Lstm { seq: Var, wx: Var, wh: Var, b: Var, h0: Var, c0: Var, cache: Box<LstmCache> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    Concat { parts: Vec<Var> },
    AddN { parts: Vec<Var> },
    Scale { x: Var, factor: f64 },
    Mul { a: Var, b: Var },
    Sum { x: Var },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Affine { .. } => OpKind::Affine,
            Op::Relu { .. } => OpKind::Relu,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::MaxOverTime { .. } => OpKind::MaxOverTime,
            Op::Lstm { .. } => OpKind::Lstm,
            Op::SoftmaxXent { .. } => OpKind::SoftmaxCrossEntropy,
            Op::Gather { .. } => OpKind::Gather,
            Op::Concat { .. } => OpKind::Concat,
            Op::AddN { .. } => OpKind::AddN,
            Op::Scale { .. } => OpKind::Scale,
            Op::Mul { .. } => OpKind::Mul,
            Op::Sum { .. } => OpKind::Sum,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, which is already topological; the
/// backward pass walks them once from the loss down.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    branch: u64,
    fault: Option<GradFault>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four fixed lanes so the loop vectorizes; the summation order is still
    // fully determined by the length
    let n = a.len().min(b.len());
    let (a4, b4) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (x, y) in a4.zip(b4) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Loss `-ln p[label]` and the probabilities, computed without a tape.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let loss = -(logits[label] - max - log_total);
    Ok((loss, softmax(logits)))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fault(fault: GradFault) -> Self {
        Self { fault: Some(fault), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Fingerprint of every data-dependent branch taken so far (ReLU signs,
    /// max-pool winners). Two evaluations with equal fingerprints ran the
    /// same piecewise-smooth branch.
    pub fn branch_signature(&self) -> u64 {
        self.branch
    }

    fn note_branch(&mut self, bits: u64) {
        self.branch = (self.branch ^ bits).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(7);
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `x W + b` for `x` of shape `[B, I]` (or `[I]`), `W` `[I, O]`, `b` `[O]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        let (rows, inner) = match xs {
            [i] => (1, *i),
            [r, i] => (*r, *i),
            _ => return Err(shape_err("affine", format!("input must be 1-D or 2-D, got {xs:?}"))),
        };
        if ws.len() != 2 || ws[0] != inner || bs != [ws[1]] {
            return Err(shape_err("affine", format!("x {xs:?}, W {ws:?}, b {bs:?}")));
        }
        let out_dim = ws[1];
        let out_shape = if xs.len() == 1 { vec![out_dim] } else { vec![rows, out_dim] };
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut y = Vec::with_capacity(rows * out_dim);
        for r in 0..rows {
            y.extend_from_slice(bd);
            let yr = &mut y[r * out_dim..];
            for (i, &xv) in xd[r * inner..(r + 1) * inner].iter().enumerate() {
                if xv != 0.0 {
                    axpy(yr, xv, &wd[i * out_dim..(i + 1) * out_dim]);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(out_shape, y)?, Op::Affine { x, w, b }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let shape = src.shape().to_vec();
        let data: Vec<f64> = src.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let mut bits = 0u64;
        for (i, &v) in src.data().iter().enumerate() {
            if v > 0.0 {
                bits = bits.wrapping_mul(31).wrapping_add(i as u64 + 1);
            }
        }
        self.note_branch(bits);
        let needs = self.needs(x);
        self.push(Tensor::new(shape, data).expect("same shape"), Op::Relu { x }, needs)
    }

    /// Inverted dropout. Identity in [`Mode::Infer`] or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate must be in [0, 1), got {p}")));
        }
        if mode == Mode::Infer || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let src = self.value(x);
        let scale: Vec<f64> = (0..src.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let data = src.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout { x, scale }, needs))
    }

    /// Valid cross-correlation over time: `seq` `[T, D]`, `filter`
    /// `[w, D, F]`, `bias` `[F]` → `[T - w + 1, F]`.
    pub fn conv1d(&mut self, seq: Var, filter: Var, bias: Var) -> Result<Var> {
        let (ss, fs, bs) = (self.value(seq).shape(), self.value(filter).shape(), self.value(bias).shape());
        let ([t_len, dim], [width, fdim, maps]) = (ss, fs) else {
            return Err(shape_err("conv1d", format!("seq {ss:?}, filter {fs:?}")));
        };
        let (t_len, dim, width, maps) = (*t_len, *dim, *width, *maps);
        if *fdim != dim || bs != [maps] || width == 0 {
            return Err(shape_err("conv1d", format!("seq {ss:?}, filter {fs:?}, bias {bs:?}")));
        }
        if t_len < width {
            return Err(Error::InvalidArgument(format!(
                "sequence of length {t_len} is shorter than filter width {width}"
            )));
        }
        let out_len = t_len - width + 1;
        let (sd, fd, bd) = (self.value(seq).data(), self.value(filter).data(), self.value(bias).data());
        let span = width * dim;
        let mut out = Vec::with_capacity(out_len * maps);
        for t in 0..out_len {
            out.extend_from_slice(bd);
            let row = &mut out[t * maps..];
            for (k, &xv) in sd[t * dim..t * dim + span].iter().enumerate() {
                if xv != 0.0 {
                    axpy(row, xv, &fd[k * maps..(k + 1) * maps]);
                }
            }
        }
        let needs = self.needs(seq) || self.needs(filter) || self.needs(bias);
        Ok(self.push(Tensor::new(vec![out_len, maps], out)?, Op::Conv1d { seq, filter, bias }, needs))
    }

    /// One [`Tape::conv1d`] per `(filter, bias)` pair.
    pub fn conv1d_bank(&mut self, seq: Var, bank: &[(Var, Var)]) -> Result<Vec<Var>> {
        bank.iter().map(|&(f, b)| self.conv1d(seq, f, b)).collect()
    }

    /// Column-wise maximum of `[T, F]`; ties go to the lowest time index.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let [t_len, maps] = src.shape() else {
            return Err(shape_err("max_over_time", format!("expected 2-D, got {:?}", src.shape())));
        };
        let (t_len, maps) = (*t_len, *maps);
        if t_len == 0 {
            return Err(Error::InvalidArgument("max_over_time over an empty time axis".into()));
        }
        let d = src.data();
        let mut argmax = vec![0usize; maps];
        let mut best: Vec<f64> = d[..maps].to_vec();
        for t in 1..t_len {
            for f in 0..maps {
                let v = d[t * maps + f];
                if v > best[f] {
                    best[f] = v;
                    argmax[f] = t;
                }
            }
        }
        let bits = argmax.iter().fold(0u64, |h, &a| h.wrapping_mul(1_000_003).wrapping_add(a as u64));
        self.note_branch(bits);
        let needs = self.needs(x);
        Ok(self.push(Tensor::vector(best), Op::MaxOverTime { x, argmax }, needs))
    }

    /// Runs an LSTM over the first `true_length` rows of `seq` `[T, D]` and
    /// returns the last hidden state `[H]`. Gate weights are stacked
    /// `[i, f, g, o]`: `wx` `[D, 4H]`, `wh` `[H, 4H]`, `b` `[4H]`.
    #[allow(clippy::too_many_arguments)]
    pub fn lstm_sequence(
        &mut self,
        seq: Var,
        true_length: usize,
        wx: Var,
        wh: Var,
        b: Var,
        h0: Var,
        c0: Var,
    ) -> Result<Var> {
        let ss = self.value(seq).shape();
        let [t_len, dim] = ss else {
            return Err(shape_err("lstm", format!("sequence must be 2-D, got {ss:?}")));
        };
        let (t_len, dim) = (*t_len, *dim);
        let hidden = self.value(h0).len();
        let g4 = 4 * hidden;
        let shapes_ok = self.value(wx).shape() == [dim, g4]
            && self.value(wh).shape() == [hidden, g4]
            && self.value(b).shape() == [g4]
            && self.value(h0).shape() == [hidden]
            && self.value(c0).shape() == [hidden];
        if !shapes_ok {
            return Err(shape_err(
                "lstm",
                format!(
                    "seq {ss:?}, wx {:?}, wh {:?}, b {:?}, h0 {:?}, c0 {:?}",
                    self.value(wx).shape(),
                    self.value(wh).shape(),
                    self.value(b).shape(),
                    self.value(h0).shape(),
                    self.value(c0).shape()
                ),
            ));
        }
        if true_length == 0 || true_length > t_len {
            return Err(Error::InvalidArgument(format!(
                "true_length must be in 1..={t_len}, got {true_length}"
            )));
        }
        let (sd, wxd, whd, bd) =
            (self.value(seq).data(), self.value(wx).data(), self.value(wh).data(), self.value(b).data());
        let mut cache = LstmCache {
            hidden,
            steps: true_length,
            gates: Vec::with_capacity(true_length),
            cells: vec![self.value(c0).data().to_vec()],
            hiddens: vec![self.value(h0).data().to_vec()],
            tanh_cells: Vec::with_capacity(true_length),
        };
        for t in 0..true_length {
            let mut z = bd.to_vec();
            for (d, &xv) in sd[t * dim..(t + 1) * dim].iter().enumerate() {
                if xv != 0.0 {
                    axpy(&mut z, xv, &wxd[d * g4..(d + 1) * g4]);
                }
            }
            for (j, &hv) in cache.hiddens[t].iter().enumerate() {
                if hv != 0.0 {
                    axpy(&mut z, hv, &whd[j * g4..(j + 1) * g4]);
                }
            }
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = if (2 * hidden..3 * hidden).contains(&k) { zk.tanh() } else { sigmoid(*zk) };
            }
            let c_prev = &cache.cells[t];
            let mut c = vec![0.0; hidden];
            let mut tc = vec![0.0; hidden];
            let mut h = vec![0.0; hidden];
            for j in 0..hidden {
                let (i, f, g, o) = (z[j], z[hidden + j], z[2 * hidden + j], z[3 * hidden + j]);
                c[j] = f * c_prev[j] + i * g;
                tc[j] = c[j].tanh();
                h[j] = o * tc[j];
            }
            cache.gates.push(z);
            cache.cells.push(c);
            cache.tanh_cells.push(tc);
            cache.hiddens.push(h);
        }
        let out = Tensor::vector(cache.hiddens[true_length].clone());
        let needs = [seq, wx, wh, b, h0, c0].iter().any(|&v| self.needs(v));
        Ok(self.push(out, Op::Lstm { seq, wx, wh, b, h0, c0, cache: Box::new(cache) }, needs))
    }

    /// Scalar `-ln softmax(logits)[label]` for logits of shape `[C]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let shape = self.value(logits).shape().to_vec();
        let [classes] = shape[..] else {
            return Err(shape_err("softmax_cross_entropy", format!("expected 1-D logits, got {shape:?}")));
        };
        self.softmax_xent_rows(logits, 1, classes, vec![label])
    }

    /// Mean cross-entropy over the rows of `[B, C]` logits.
    pub fn softmax_cross_entropy_mean(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.value(logits).shape().to_vec();
        let [rows, classes] = shape[..] else {
            return Err(shape_err("softmax_cross_entropy", format!("expected 2-D logits, got {shape:?}")));
        };
        if rows != labels.len() || rows == 0 {
            return Err(shape_err("softmax_cross_entropy", format!("{rows} rows, {} labels", labels.len())));
        }
        self.softmax_xent_rows(logits, rows, classes, labels.to_vec())
    }

    fn softmax_xent_rows(&mut self, logits: Var, rows: usize, classes: usize, labels: Vec<usize>) -> Result<Var> {
        let data = self.value(logits).data();
        let mut probs = Vec::with_capacity(rows * classes);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let (loss, p) = softmax_cross_entropy(&data[r * classes..(r + 1) * classes], label)?;
            total += loss;
            probs.extend(p);
        }
        let needs = self.needs(logits);
        Ok(self.push(Tensor::scalar(total / rows as f64), Op::SoftmaxXent { logits, labels, probs }, needs))
    }

    /// Row lookup: `table` `[V, D]`, ids → `[n, D]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let src = self.value(table);
        let [rows, dim] = src.shape() else {
            return Err(shape_err("gather", format!("table must be 2-D, got {:?}", src.shape())));
        };
        let (rows, dim) = (*rows, *dim);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= rows {
                return Err(Error::InvalidArgument(format!("id {id} out of range for {rows} rows")));
            }
            out.extend_from_slice(src.row(id));
        }
        let needs = self.needs(table);
        Ok(self.push(Tensor::new(vec![ids.len(), dim], out)?, Op::Gather { table, ids: ids.to_vec() }, needs))
    }

    /// Flatten and join into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::vector(data), Op::Concat { parts: parts.to_vec() }, needs)
    }

    /// Elementwise sum of equally shaped values.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("add_n of nothing".into()));
        };
        let shape = self.value(first).shape().to_vec();
        let mut acc = vec![0.0; self.value(first).len()];
        for &p in parts {
            let v = self.value(p);
            if v.shape() != shape.as_slice() {
                return Err(shape_err("add_n", format!("{:?} vs {shape:?}", v.shape())));
            }
            axpy(&mut acc, 1.0, v.data());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(shape, acc)?, Op::AddN { parts: parts.to_vec() }, needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|v| v * factor).collect())
            .expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, factor }, needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let value = Tensor::new(va.shape().to_vec(), va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, needs)
    }

    /// Reverse-mode pass from the scalar `loss`. Every trainable leaf gets a
    /// gradient, zero if the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::InvalidArgument(format!("variable {} is not on this tape", loss.0)));
        };
        if node.value.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let factor = match self.fault {
                Some(f) if f.op == node.op.kind() => f.factor,
                _ => 1.0,
            };
            self.backprop(&node.op, &node.value, &g, factor, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(n, g)| match (&n.op, n.needs_grad) {
                (Op::Leaf, true) => Some(Tensor::new(
                    n.value.shape().to_vec(),
                    g.unwrap_or_else(|| vec![0.0; n.value.len()]),
                )
                .expect("gradient matches value shape")),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop(&self, op: &Op, out: &Tensor, g: &[f64], factor: f64, grads: &mut [Option<Vec<f64>>]) {
        macro_rules! with_grad {
            ($v:expr, |$buf:ident| $body:block) => {
                if let Some($buf) = self.grad_slot(grads, $v) {
                    $body
                }
            };
        }
        let val = |v: Var| self.nodes[v.0].value.data();

        match op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let ws = self.nodes[w.0].value.shape();
                let (inner, out_dim) = (ws[0], ws[1]);
                let rows = g.len() / out_dim;
                let (xd, wd) = (val(*x), val(*w));
                with_grad!(*w, |dw| {
                    for r in 0..rows {
                        let gr = &g[r * out_dim..(r + 1) * out_dim];
                        for (i, &xv) in xd[r * inner..(r + 1) * inner].iter().enumerate() {
                            if xv != 0.0 {
                                axpy(&mut dw[i * out_dim..(i + 1) * out_dim], factor * xv, gr);
                            }
                        }
                    }
                });
                with_grad!(*b, |db| {
                    for r in 0..rows {
                        axpy(db, factor, &g[r * out_dim..(r + 1) * out_dim]);
                    }
                });
                with_grad!(*x, |dx| {
                    for r in 0..rows {
                        let gr = &g[r * out_dim..(r + 1) * out_dim];
                        for i in 0..inner {
                            dx[r * inner + i] += factor * dot(&wd[i * out_dim..(i + 1) * out_dim], gr);
                        }
                    }
                });
            }
            Op::Relu { x } => {
                let xd = val(*x);
                with_grad!(*x, |dx| {
                    for ((d, &xv), &gv) in dx.iter_mut().zip(xd).zip(g) {
                        if xv > 0.0 {
                            *d += factor * gv;
                        }
                    }
                });
            }
            Op::Dropout { x, scale } => {
                with_grad!(*x, |dx| {
                    for ((d, s), gv) in dx.iter_mut().zip(scale).zip(g) {
                        *d += factor * s * gv;
                    }
                });
            }
            Op::Conv1d { seq, filter, bias } => {
                let fs = self.nodes[filter.0].value.shape();
                let (width, dim, maps) = (fs[0], fs[1], fs[2]);
                let span = width * dim;
                let out_len = out.shape()[0];
                let (sd, fd) = (val(*seq), val(*filter));
                with_grad!(*filter, |df| {
                    for t in 0..out_len {
                        let gt = &g[t * maps..(t + 1) * maps];
                        for (k, &xv) in sd[t * dim..t * dim + span].iter().enumerate() {
                            if xv != 0.0 {
                                axpy(&mut df[k * maps..(k + 1) * maps], factor * xv, gt);
                            }
                        }
                    }
                });
                with_grad!(*bias, |db| {
                    for t in 0..out_len {
                        axpy(db, factor, &g[t * maps..(t + 1) * maps]);
                    }
                });
                with_grad!(*seq, |ds| {
                    for t in 0..out_len {
                        let gt = &g[t * maps..(t + 1) * maps];
                        for k in 0..span {
                            ds[t * dim + k] += factor * dot(&fd[k * maps..(k + 1) * maps], gt);
                        }
                    }
                });
            }
            Op::MaxOverTime { x, argmax } => {
                let maps = argmax.len();
                with_grad!(*x, |dx| {
                    for (f, &t) in argmax.iter().enumerate() {
                        dx[t * maps + f] += factor * g[f];
                    }
                });
            }
            Op::Lstm { seq, wx, wh, b, h0, c0, cache } => {
                self.lstm_backward(cache, (*seq, *wx, *wh, *b, *h0, *c0), g, factor, grads);
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let rows = labels.len();
                let classes = probs.len() / rows;
                let scale = factor * g[0] / rows as f64;
                with_grad!(*logits, |dl| {
                    for (r, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            dl[r * classes + c] += scale * (probs[r * classes + c] - onehot);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let dim = self.nodes[table.0].value.shape()[1];
                with_grad!(*table, |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut dt[id * dim..(id + 1) * dim], factor, &g[r * dim..(r + 1) * dim]);
                    }
                });
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    with_grad!(p, |dp| {
                        axpy(dp, factor, &g[offset..offset + n]);
                    });
                    offset += n;
                }
            }
            Op::AddN { parts } => {
                for &p in parts {
                    with_grad!(p, |dp| {
                        axpy(dp, factor, g);
                    });
                }
            }
            Op::Scale { x, factor: s } => {
                with_grad!(*x, |dx| {
                    axpy(dx, factor * s, g);
                });
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (val(*a), val(*b));
                with_grad!(*a, |da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(bd) {
                        *d += factor * gv * bv;
                    }
                });
                with_grad!(*b, |db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(ad) {
                        *d += factor * gv * av;
                    }
                });
            }
            Op::Sum { x } => {
                with_grad!(*x, |dx| {
                    dx.iter_mut().for_each(|d| *d += factor * g[0]);
                });
            }
        }
    }

    /// Gradient buffer of `v`, created on first use; `None` for values
    /// that need no gradient.
    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }

    fn lstm_backward(
        &self,
        cache: &LstmCache,
        (seq, wx, wh, b, h0, c0): (Var, Var, Var, Var, Var, Var),
        g: &[f64],
        factor: f64,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let hidden = cache.hidden;
        let g4 = 4 * hidden;
        let dim = self.nodes[seq.0].value.shape()[1];
        let (sd, wxd, whd) = (
            self.nodes[seq.0].value.data(),
            self.nodes[wx.0].value.data(),
            self.nodes[wh.0].value.data(),
        );
        let need = |v: Var| self.nodes[v.0].needs_grad;
        let mut dwx = need(wx).then(|| vec![0.0; wxd.len()]);
        let mut dwh = need(wh).then(|| vec![0.0; whd.len()]);
        let mut db = need(b).then(|| vec![0.0; g4]);
        let mut dseq = need(seq).then(|| vec![0.0; sd.len()]);

        let mut dh: Vec<f64> = g.iter().map(|v| v * factor).collect();
        let mut dc = vec![0.0; hidden];
        let mut dz = vec![0.0; g4];
        for t in (0..cache.steps).rev() {
            let gates = &cache.gates[t];
            let tc = &cache.tanh_cells[t];
            let c_prev = &cache.cells[t];
            let h_prev = &cache.hiddens[t];
            for j in 0..hidden {
                let (i, f, gg, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
                let d_o = dh[j] * tc[j];
                let dcj = dc[j] + dh[j] * o * (1.0 - tc[j] * tc[j]);
                dz[j] = dcj * gg * i * (1.0 - i);
                dz[hidden + j] = dcj * c_prev[j] * f * (1.0 - f);
                dz[2 * hidden + j] = dcj * i * (1.0 - gg * gg);
                dz[3 * hidden + j] = d_o * o * (1.0 - o);
                dc[j] = dcj * f;
            }
            let x_t = &sd[t * dim..(t + 1) * dim];
            if let Some(dwx) = dwx.as_mut() {
                for (d, &xv) in x_t.iter().enumerate() {
                    if xv != 0.0 {
                        axpy(&mut dwx[d * g4..(d + 1) * g4], xv, &dz);
                    }
                }
            }
            if let Some(dwh) = dwh.as_mut() {
                for (j, &hv) in h_prev.iter().enumerate() {
                    if hv != 0.0 {
                        axpy(&mut dwh[j * g4..(j + 1) * g4], hv, &dz);
                    }
                }
            }
            if let Some(db) = db.as_mut() {
                axpy(db, 1.0, &dz);
            }
            if let Some(ds) = dseq.as_mut() {
                for d in 0..dim {
                    ds[t * dim + d] = dot(&wxd[d * g4..(d + 1) * g4], &dz);
                }
            }
            for (j, dhj) in dh.iter_mut().enumerate() {
                *dhj = dot(&whd[j * g4..(j + 1) * g4], &dz);
            }
        }

        let mut add = |v: Var, src: &[f64]| {
            if need(v) {
                let len = self.nodes[v.0].value.len();
                axpy(grads[v.0].get_or_insert_with(|| vec![0.0; len]), 1.0, src);
            }
        };
        for (v, buf) in [(wx, dwx), (wh, dwh), (b, db), (seq, dseq)] {
            if let Some(buf) = buf {
                add(v, &buf);
            }
        }
        add(h0, &dh);
        add(c0, &dc);
    }
}

/// Gradients of every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
