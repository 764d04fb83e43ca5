use super::rng::RngStream;
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// Primitive kinds recorded on the tape. Attribute payloads hold whatever the
/// backward pass needs beyond input and output values.
enum Op<S: Scalar> {
    Leaf,
    MatMul,
    Add,
    AddN,
    Scale(f64),
    Mul,
    MulRow,
    Relu,
    Tanh,
    Softmax,
    Conv1d {
        stride: usize,
        width: usize,
    },
    BatchNormTrain {
        mean: Vec<S>,
        inv_std: Vec<S>,
    },
    BatchNormEval {
        mean: Vec<S>,
        inv_std: Vec<S>,
    },
    /// Fused LSTM cell step. Saved gates are post-activation, laid out as
    /// [input; forget; cell; output], each of hidden size.
    LstmStep {
        gates: Vec<S>,
        tanh_c: Vec<S>,
    },
    Embed {
        index: usize,
    },
    CrossEntropy {
        target: usize,
    },
    Concat,
    StackRows,
    ConcatRows,
    SliceRows {
        start: usize,
    },
    Row {
        index: usize,
    },
    SumAll,
}

impl<S: Scalar> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::AddN => "addn",
            Op::Scale(_) => "scale",
            Op::Mul => "mul",
            Op::MulRow => "mul_row",
            Op::Relu => "relu",
            Op::Tanh => "tanh",
            Op::Softmax => "softmax",
            Op::Conv1d { .. } => "conv1d",
            Op::BatchNormTrain { .. } => "batchnorm_train",
            Op::BatchNormEval { .. } => "batchnorm_eval",
            Op::LstmStep { .. } => "lstm_step",
            Op::Embed { .. } => "embed",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Concat => "concat",
            Op::StackRows => "stack_rows",
            Op::ConcatRows => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::Row { .. } => "row",
            Op::SumAll => "sum_all",
        }
    }
}

struct Node<S: Scalar> {
    op: Op<S>,
    inputs: Vec<NodeId>,
    value: Tensor<S>,
}

/// Reverse-mode differentiation tape. Nodes are appended eagerly with their
/// forward values; `backward` replays the record in reverse. One tape holds
/// one training step's graph and is confined to a single thread.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Gradient of the most recent `backward` loss w.r.t. this node, if the
    /// node was reachable.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, op: Op<S>, inputs: Vec<NodeId>, value: Tensor<S>) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: op.name().to_string(),
                node: self.nodes.len(),
            });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, value });
        Ok(id)
    }

    /// Record a constant or parameter value. Gradients accumulate here and
    /// are harvested by the caller after `backward`.
    pub fn leaf(&mut self, value: Tensor<S>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            value,
        });
        id
    }

    /// Matrix product covering (m,k)x(k,n), (k,)x(k,n) and (m,k)x(k,).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let value = match (va.rank(), vb.rank()) {
            (2, 2) => {
                let (m, k) = (va.shape[0], va.shape[1]);
                let (k2, n) = (vb.shape[0], vb.shape[1]);
                if k != k2 {
                    return Err(Error::shape("matmul", format!("inner dims {} vs {}", k, k2)));
                }
                let mut out = vec![S::zero(); m * n];
                for i in 0..m {
                    let arow = &va.data[i * k..(i + 1) * k];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (l, &ail) in arow.iter().enumerate() {
                        let brow = &vb.data[l * n..(l + 1) * n];
                        for j in 0..n {
                            orow[j] += ail * brow[j];
                        }
                    }
                }
                Tensor::matrix(m, n, out)
            }
            (1, 2) => {
                let k = va.shape[0];
                let (k2, n) = (vb.shape[0], vb.shape[1]);
                if k != k2 {
                    return Err(Error::shape("matmul", format!("inner dims {} vs {}", k, k2)));
                }
                let mut out = vec![S::zero(); n];
                for (l, &al) in va.data.iter().enumerate() {
                    let brow = &vb.data[l * n..(l + 1) * n];
                    for j in 0..n {
                        out[j] += al * brow[j];
                    }
                }
                Tensor::vector(out)
            }
            (2, 1) => {
                let (m, k) = (va.shape[0], va.shape[1]);
                if k != vb.shape[0] {
                    return Err(Error::shape(
                        "matmul",
                        format!("inner dims {} vs {}", k, vb.shape[0]),
                    ));
                }
                let mut out = vec![S::zero(); m];
                for i in 0..m {
                    let arow = &va.data[i * k..(i + 1) * k];
                    let mut acc = S::zero();
                    for l in 0..k {
                        acc += arow[l] * vb.data[l];
                    }
                    out[i] = acc;
                }
                Tensor::vector(out)
            }
            (ra, rb) => {
                return Err(Error::shape("matmul", format!("unsupported ranks {} x {}", ra, rb)))
            }
        };
        self.push(Op::MatMul, vec![a, b], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape != vb.shape {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", va.shape, vb.shape),
            ));
        }
        let data = va
            .data
            .iter()
            .zip(vb.data.iter())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.push(Op::Add, vec![a, b], value)
    }

    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("addn", "no inputs".to_string()));
        }
        let shape = self.nodes[ids[0].0].value.shape.clone();
        for &id in ids {
            if self.nodes[id.0].value.shape != shape {
                return Err(Error::shape(
                    "addn",
                    format!("{:?} vs {:?}", self.nodes[id.0].value.shape, shape),
                ));
            }
        }
        let mut data = self.nodes[ids[0].0].value.data.clone();
        for &id in &ids[1..] {
            for (d, &s) in data.iter_mut().zip(self.nodes[id.0].value.data.iter()) {
                *d += s;
            }
        }
        self.push(Op::AddN, ids.to_vec(), Tensor::new(shape, data))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let cs = S::from_f64(c);
        let data = va.data.iter().map(|&x| x * cs).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.push(Op::Scale(c), vec![a], value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape != vb.shape {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", va.shape, vb.shape),
            ));
        }
        let data = va
            .data
            .iter()
            .zip(vb.data.iter())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.push(Op::Mul, vec![a, b], value)
    }

    /// Broadcast an (n,) vector across the rows of an (m,n) matrix,
    /// multiplying elementwise. Used for time-shared dropout masks.
    pub fn mul_row(&mut self, x: NodeId, r: NodeId) -> Result<NodeId> {
        let (vx, vr) = (&self.nodes[x.0].value, &self.nodes[r.0].value);
        if vx.rank() != 2 || vr.rank() != 1 || vx.shape[1] != vr.shape[0] {
            return Err(Error::shape(
                "mul_row",
                format!("{:?} vs {:?}", vx.shape, vr.shape),
            ));
        }
        let (m, n) = (vx.shape[0], vx.shape[1]);
        let mut data = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] = vx.data[i * n + j] * vr.data[j];
            }
        }
        self.push(Op::MulRow, vec![x, r], Tensor::matrix(m, n, data))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let z = S::zero();
        let data = va.data.iter().map(|&x| x.maxs(z)).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.push(Op::Relu, vec![a], value)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        let data = va.data.iter().map(|&x| x.tanh()).collect();
        let value = Tensor::new(va.shape.clone(), data);
        self.push(Op::Tanh, vec![a], value)
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        if va.rank() != 1 {
            return Err(Error::shape("softmax", format!("expected vector, got {:?}", va.shape)));
        }
        let value = Tensor::vector(softmax_slice(&va.data));
        self.push(Op::Softmax, vec![a], value)
    }

    /// Strided 1-D convolution over time with zero "same" padding and fused
    /// bias. x is (T, c_in); w is (c_out, width*c_in) with kernel position
    /// varying slower than input channel; b is (c_out,). Output length is
    /// ceil(T / stride).
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        if stride == 0 {
            return Err(Error::shape("conv1d", "stride must be >= 1".to_string()));
        }
        let (vx, vw, vb) = (
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[b.0].value,
        );
        if vx.rank() != 2 || vw.rank() != 2 || vb.rank() != 1 {
            return Err(Error::shape(
                "conv1d",
                format!("x {:?}, w {:?}, b {:?}", vx.shape, vw.shape, vb.shape),
            ));
        }
        let (t, c_in) = (vx.shape[0], vx.shape[1]);
        let c_out = vw.shape[0];
        if vw.shape[1] % c_in != 0 {
            return Err(Error::shape(
                "conv1d",
                format!("kernel width {} not a multiple of in channels {}", vw.shape[1], c_in),
            ));
        }
        let width = vw.shape[1] / c_in;
        if vb.shape[0] != c_out {
            return Err(Error::shape(
                "conv1d",
                format!("bias {} vs out channels {}", vb.shape[0], c_out),
            ));
        }
        let t_out = t.div_ceil(stride);
        let pad = (width - 1) / 2;
        let mut out = vec![S::zero(); t_out * c_out];
        for to in 0..t_out {
            let orow = &mut out[to * c_out..(to + 1) * c_out];
            orow.copy_from_slice(&vb.data);
            let center = to * stride;
            for k in 0..width {
                let p = center as isize - pad as isize + k as isize;
                if p < 0 || p >= t as isize {
                    continue;
                }
                let xrow = &vx.data[p as usize * c_in..(p as usize + 1) * c_in];
                for (co, o) in orow.iter_mut().enumerate() {
                    let wrow = &vw.data[co * width * c_in + k * c_in..co * width * c_in + (k + 1) * c_in];
                    let mut acc = S::zero();
                    for ci in 0..c_in {
                        acc += xrow[ci] * wrow[ci];
                    }
                    *o += acc;
                }
            }
        }
        self.push(
            Op::Conv1d { stride, width },
            vec![x, w, b],
            Tensor::matrix(t_out, c_out, out),
        )
    }

    /// Batch normalization over the rows of x (N, C) using batch statistics.
    /// Running mean and variance buffers are updated in place with the given
    /// momentum for later inference use.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut Tensor<S>,
        running_var: &mut Tensor<S>,
        momentum: f64,
        eps: f64,
    ) -> Result<NodeId> {
        let (vx, vg, vbt) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        let (n, c) = bn_check_shapes("batchnorm_train", vx, vg, vbt)?;
        if n == 0 {
            return Err(Error::shape("batchnorm_train", "empty batch".to_string()));
        }
        let inv_n = S::from_f64(1.0 / n as f64);
        let mut mean = vec![S::zero(); c];
        for i in 0..n {
            for j in 0..c {
                mean[j] += vx.data[i * c + j];
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_n;
        }
        let mut var = vec![S::zero(); c];
        for i in 0..n {
            for j in 0..c {
                let d = vx.data[i * c + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v *= inv_n;
        }
        let epss = S::from_f64(eps);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + epss).sqrt()).collect();
        let mom = S::from_f64(momentum);
        let one_m = S::one() - mom;
        for j in 0..c {
            running_mean.data[j] = mom * running_mean.data[j] + one_m * mean[j];
            running_var.data[j] = mom * running_var.data[j] + one_m * var[j];
        }
        let mut out = vec![S::zero(); n * c];
        for i in 0..n {
            for j in 0..c {
                let xhat = (vx.data[i * c + j] - mean[j]) * inv_std[j];
                out[i * c + j] = vg.data[j] * xhat + vbt.data[j];
            }
        }
        self.push(
            Op::BatchNormTrain { mean, inv_std },
            vec![x, gamma, beta],
            Tensor::matrix(n, c, out),
        )
    }

    /// Batch normalization with fixed statistics, for inference.
    pub fn batchnorm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &Tensor<S>,
        running_var: &Tensor<S>,
        eps: f64,
    ) -> Result<NodeId> {
        let (vx, vg, vbt) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        let (n, c) = bn_check_shapes("batchnorm_eval", vx, vg, vbt)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape(
                "batchnorm_eval",
                format!("running stats length {} vs channels {}", running_mean.len(), c),
            ));
        }
        let epss = S::from_f64(eps);
        let mean = running_mean.data.clone();
        let inv_std: Vec<S> = running_var
            .data
            .iter()
            .map(|&v| S::one() / (v + epss).sqrt())
            .collect();
        let mut out = vec![S::zero(); n * c];
        for i in 0..n {
            for j in 0..c {
                let xhat = (vx.data[i * c + j] - mean[j]) * inv_std[j];
                out[i * c + j] = vg.data[j] * xhat + vbt.data[j];
            }
        }
        self.push(
            Op::BatchNormEval { mean, inv_std },
            vec![x, gamma, beta],
            Tensor::matrix(n, c, out),
        )
    }

    /// One LSTM cell step. Inputs: x (d,), previous h and c (hidden,), packed
    /// weights w_x (4*hidden, d), w_h (4*hidden, hidden), bias (4*hidden,)
    /// with gate rows ordered [input; forget; cell; output]. The output is a
    /// (2, hidden) matrix whose rows are the new h and new c; extract them
    /// with `row`.
    pub fn lstm_step(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w_x: NodeId,
        w_h: NodeId,
        b: NodeId,
    ) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        let vh = &self.nodes[h.0].value;
        let vc = &self.nodes[c.0].value;
        let vwx = &self.nodes[w_x.0].value;
        let vwh = &self.nodes[w_h.0].value;
        let vb = &self.nodes[b.0].value;
        if vx.rank() != 1 || vh.rank() != 1 || vc.rank() != 1 {
            return Err(Error::shape(
                "lstm_step",
                format!("x {:?}, h {:?}, c {:?}", vx.shape, vh.shape, vc.shape),
            ));
        }
        let d = vx.shape[0];
        let hd = vh.shape[0];
        if vc.shape[0] != hd
            || vwx.shape != [4 * hd, d]
            || vwh.shape != [4 * hd, hd]
            || vb.shape != [4 * hd]
        {
            return Err(Error::shape(
                "lstm_step",
                format!(
                    "hidden {}, input {}, w_x {:?}, w_h {:?}, b {:?}",
                    hd, d, vwx.shape, vwh.shape, vb.shape
                ),
            ));
        }
        let mut z = vb.data.clone();
        for (r, zr) in z.iter_mut().enumerate() {
            let wxr = &vwx.data[r * d..(r + 1) * d];
            let mut acc = S::zero();
            for l in 0..d {
                acc += wxr[l] * vx.data[l];
            }
            let whr = &vwh.data[r * hd..(r + 1) * hd];
            for l in 0..hd {
                acc += whr[l] * vh.data[l];
            }
            *zr += acc;
        }
        let mut gates = vec![S::zero(); 4 * hd];
        for j in 0..hd {
            gates[j] = sigmoid(z[j]);
            gates[hd + j] = sigmoid(z[hd + j]);
            gates[2 * hd + j] = z[2 * hd + j].tanh();
            gates[3 * hd + j] = sigmoid(z[3 * hd + j]);
        }
        let mut out = vec![S::zero(); 2 * hd];
        let mut tanh_c = vec![S::zero(); hd];
        for j in 0..hd {
            let c_new = gates[hd + j] * vc.data[j] + gates[j] * gates[2 * hd + j];
            let tc = c_new.tanh();
            tanh_c[j] = tc;
            out[j] = gates[3 * hd + j] * tc;
            out[hd + j] = c_new;
        }
        self.push(
            Op::LstmStep { gates, tanh_c },
            vec![x, h, c, w_x, w_h, b],
            Tensor::matrix(2, hd, out),
        )
    }

    /// Embedding lookup: row `index` of the (V, d) table.
    pub fn embed(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let vt = &self.nodes[table.0].value;
        if vt.rank() != 2 {
            return Err(Error::shape("embed", format!("table {:?}", vt.shape)));
        }
        if index >= vt.shape[0] {
            return Err(Error::shape(
                "embed",
                format!("index {} out of {} rows", index, vt.shape[0]),
            ));
        }
        let value = Tensor::vector(vt.row(index).to_vec());
        self.push(Op::Embed { index }, vec![table], value)
    }

    /// Cross-entropy of a softmax over `logits` against a target class,
    /// fused for numerical stability: log-sum-exp(logits) - logits[target].
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let vl = &self.nodes[logits.0].value;
        if vl.rank() != 1 {
            return Err(Error::shape(
                "cross_entropy",
                format!("expected vector, got {:?}", vl.shape),
            ));
        }
        if target >= vl.shape[0] {
            return Err(Error::shape(
                "cross_entropy",
                format!("target {} out of {} classes", target, vl.shape[0]),
            ));
        }
        let m = vl
            .data
            .iter()
            .fold(S::from_f64(f64::NEG_INFINITY), |a, &b| a.maxs(b));
        let sum: S = vl.data.iter().map(|&x| (x - m).exp()).sum();
        let loss = m + sum.ln() - vl.data[target];
        self.push(Op::CrossEntropy { target }, vec![logits], Tensor::scalar(loss))
    }

    /// Concatenate vectors into one vector.
    pub fn concat(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("concat", "no inputs".to_string()));
        }
        let mut data = Vec::new();
        for &id in ids {
            let v = &self.nodes[id.0].value;
            if v.rank() != 1 {
                return Err(Error::shape("concat", format!("expected vector, got {:?}", v.shape)));
            }
            data.extend_from_slice(&v.data);
        }
        self.push(Op::Concat, ids.to_vec(), Tensor::vector(data))
    }

    /// Stack k equal-length vectors into a (k, n) matrix.
    pub fn stack_rows(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("stack_rows", "no inputs".to_string()));
        }
        let n = self.nodes[ids[0].0].value.len();
        let mut data = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            let v = &self.nodes[id.0].value;
            if v.rank() != 1 || v.len() != n {
                return Err(Error::shape(
                    "stack_rows",
                    format!("expected vectors of length {}, got {:?}", n, v.shape),
                ));
            }
            data.extend_from_slice(&v.data);
        }
        self.push(Op::StackRows, ids.to_vec(), Tensor::matrix(ids.len(), n, data))
    }

    /// Concatenate matrices with equal column counts along the row axis.
    pub fn concat_rows(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs".to_string()));
        }
        let c = self.nodes[ids[0].0].value.shape[1];
        let mut rows = 0;
        let mut data = Vec::new();
        for &id in ids {
            let v = &self.nodes[id.0].value;
            if v.rank() != 2 || v.shape[1] != c {
                return Err(Error::shape(
                    "concat_rows",
                    format!("expected matrices with {} cols, got {:?}", c, v.shape),
                ));
            }
            rows += v.shape[0];
            data.extend_from_slice(&v.data);
        }
        self.push(Op::ConcatRows, ids.to_vec(), Tensor::matrix(rows, c, data))
    }

    /// Rows [start, start+len) of a matrix.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        if vx.rank() != 2 || start + len > vx.shape[0] {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {}..{} of {:?}", start, start + len, vx.shape),
            ));
        }
        let c = vx.shape[1];
        let data = vx.data[start * c..(start + len) * c].to_vec();
        self.push(Op::SliceRows { start }, vec![x], Tensor::matrix(len, c, data))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        if vx.rank() != 2 || index >= vx.shape[0] {
            return Err(Error::shape(
                "row",
                format!("row {} of {:?}", index, vx.shape),
            ));
        }
        let value = Tensor::vector(vx.row(index).to_vec());
        self.push(Op::Row { index }, vec![x], value)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        let s: S = vx.data.iter().copied().sum();
        self.push(Op::SumAll, vec![x], Tensor::scalar(s))
    }

    /// Reverse sweep from a scalar loss. Gradients for every reachable node
    /// accumulate and stay readable via `grad` until the next backward call.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<S>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(S::one()));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            if !dy.all_finite() {
                return Err(Error::NonFinite {
                    op: format!("backward of {}", self.nodes[idx].op.name()),
                    node: idx,
                });
            }
            self.node_backward(idx, &dy, &mut grads)?;
            grads[idx] = Some(dy);
        }
        self.grads = grads;
        Ok(())
    }

    fn node_backward(
        &self,
        idx: usize,
        dy: &Tensor<S>,
        grads: &mut [Option<Tensor<S>>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        let ins = &node.inputs;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let va = &self.nodes[ins[0].0].value;
                let vb = &self.nodes[ins[1].0].value;
                let da = acc_slot(grads, ins[0], &va.shape);
                match (va.rank(), vb.rank()) {
                    (2, 2) => {
                        let (m, k) = (va.shape[0], va.shape[1]);
                        let n = vb.shape[1];
                        for i in 0..m {
                            let dyrow = &dy.data[i * n..(i + 1) * n];
                            let darow = &mut da.data[i * k..(i + 1) * k];
                            for l in 0..k {
                                let brow = &vb.data[l * n..(l + 1) * n];
                                let mut acc = S::zero();
                                for j in 0..n {
                                    acc += dyrow[j] * brow[j];
                                }
                                darow[l] += acc;
                            }
                        }
                        let db = acc_slot(grads, ins[1], &vb.shape);
                        for i in 0..m {
                            let arow = &va.data[i * k..(i + 1) * k];
                            let dyrow = &dy.data[i * n..(i + 1) * n];
                            for (l, &ail) in arow.iter().enumerate() {
                                let dbrow = &mut db.data[l * n..(l + 1) * n];
                                for j in 0..n {
                                    dbrow[j] += ail * dyrow[j];
                                }
                            }
                        }
                    }
                    (1, 2) => {
                        let k = va.shape[0];
                        let n = vb.shape[1];
                        for l in 0..k {
                            let brow = &vb.data[l * n..(l + 1) * n];
                            let mut acc = S::zero();
                            for j in 0..n {
                                acc += dy.data[j] * brow[j];
                            }
                            da.data[l] += acc;
                        }
                        let db = acc_slot(grads, ins[1], &vb.shape);
                        for l in 0..k {
                            let al = va.data[l];
                            let dbrow = &mut db.data[l * n..(l + 1) * n];
                            for j in 0..n {
                                dbrow[j] += al * dy.data[j];
                            }
                        }
                    }
                    (2, 1) => {
                        let (m, k) = (va.shape[0], va.shape[1]);
                        for i in 0..m {
                            let darow = &mut da.data[i * k..(i + 1) * k];
                            let dyi = dy.data[i];
                            for l in 0..k {
                                darow[l] += dyi * vb.data[l];
                            }
                        }
                        let db = acc_slot(grads, ins[1], &vb.shape);
                        for i in 0..m {
                            let arow = &va.data[i * k..(i + 1) * k];
                            let dyi = dy.data[i];
                            for l in 0..k {
                                db.data[l] += arow[l] * dyi;
                            }
                        }
                    }
                    _ => unreachable!("matmul forward validated ranks"),
                }
            }
            Op::Add => {
                for &input in ins {
                    let g = acc_slot(grads, input, &dy.shape);
                    for (gd, &d) in g.data.iter_mut().zip(dy.data.iter()) {
                        *gd += d;
                    }
                }
            }
            Op::AddN => {
                for &input in ins {
                    let g = acc_slot(grads, input, &dy.shape);
                    for (gd, &d) in g.data.iter_mut().zip(dy.data.iter()) {
                        *gd += d;
                    }
                }
            }
            Op::Scale(c) => {
                let cs = S::from_f64(*c);
                let g = acc_slot(grads, ins[0], &dy.shape);
                for (gd, &d) in g.data.iter_mut().zip(dy.data.iter()) {
                    *gd += cs * d;
                }
            }
            Op::Mul => {
                let va = self.nodes[ins[0].0].value.data.clone();
                let vb = &self.nodes[ins[1].0].value;
                let da = acc_slot(grads, ins[0], &dy.shape);
                for i in 0..dy.data.len() {
                    da.data[i] += dy.data[i] * vb.data[i];
                }
                let db = acc_slot(grads, ins[1], &dy.shape);
                for i in 0..dy.data.len() {
                    db.data[i] += dy.data[i] * va[i];
                }
            }
            Op::MulRow => {
                let vx = &self.nodes[ins[0].0].value;
                let vr = &self.nodes[ins[1].0].value;
                let (m, n) = (vx.shape[0], vx.shape[1]);
                {
                    let dx = acc_slot(grads, ins[0], &vx.shape);
                    for i in 0..m {
                        for j in 0..n {
                            dx.data[i * n + j] += dy.data[i * n + j] * vr.data[j];
                        }
                    }
                }
                let dr = acc_slot(grads, ins[1], &vr.shape);
                for i in 0..m {
                    for j in 0..n {
                        dr.data[j] += dy.data[i * n + j] * vx.data[i * n + j];
                    }
                }
            }
            Op::Relu => {
                let vx = &self.nodes[ins[0].0].value;
                let g = acc_slot(grads, ins[0], &dy.shape);
                let z = S::zero();
                for i in 0..dy.data.len() {
                    if vx.data[i] > z {
                        g.data[i] += dy.data[i];
                    }
                }
            }
            Op::Tanh => {
                let vy = &node.value;
                let g = acc_slot(grads, ins[0], &dy.shape);
                for i in 0..dy.data.len() {
                    g.data[i] += dy.data[i] * (S::one() - vy.data[i] * vy.data[i]);
                }
            }
            Op::Softmax => {
                let vy = &node.value;
                let mut s = S::zero();
                for i in 0..dy.data.len() {
                    s += dy.data[i] * vy.data[i];
                }
                let g = acc_slot(grads, ins[0], &dy.shape);
                for i in 0..dy.data.len() {
                    g.data[i] += vy.data[i] * (dy.data[i] - s);
                }
            }
            Op::Conv1d { stride, width } => {
                let vx = &self.nodes[ins[0].0].value;
                let vw = &self.nodes[ins[1].0].value;
                let (t, c_in) = (vx.shape[0], vx.shape[1]);
                let c_out = vw.shape[0];
                let t_out = node.value.shape[0];
                let pad = (width - 1) / 2;
                {
                    let dx = acc_slot(grads, ins[0], &vx.shape);
                    for to in 0..t_out {
                        let dyrow = &dy.data[to * c_out..(to + 1) * c_out];
                        let center = to * stride;
                        for k in 0..*width {
                            let p = center as isize - pad as isize + k as isize;
                            if p < 0 || p >= t as isize {
                                continue;
                            }
                            let dxrow = &mut dx.data[p as usize * c_in..(p as usize + 1) * c_in];
                            for (co, &dyv) in dyrow.iter().enumerate() {
                                let wrow = &vw.data
                                    [co * width * c_in + k * c_in..co * width * c_in + (k + 1) * c_in];
                                for ci in 0..c_in {
                                    dxrow[ci] += dyv * wrow[ci];
                                }
                            }
                        }
                    }
                }
                {
                    let dw = acc_slot(grads, ins[1], &vw.shape);
                    for to in 0..t_out {
                        let dyrow = &dy.data[to * c_out..(to + 1) * c_out];
                        let center = to * stride;
                        for k in 0..*width {
                            let p = center as isize - pad as isize + k as isize;
                            if p < 0 || p >= t as isize {
                                continue;
                            }
                            let xrow = &vx.data[p as usize * c_in..(p as usize + 1) * c_in];
                            for (co, &dyv) in dyrow.iter().enumerate() {
                                let dwrow = &mut dw.data
                                    [co * width * c_in + k * c_in..co * width * c_in + (k + 1) * c_in];
                                for ci in 0..c_in {
                                    dwrow[ci] += dyv * xrow[ci];
                                }
                            }
                        }
                    }
                }
                let db = acc_slot(grads, ins[2], &[c_out]);
                for to in 0..t_out {
                    for co in 0..c_out {
                        db.data[co] += dy.data[to * c_out + co];
                    }
                }
            }
            Op::BatchNormTrain { mean, inv_std } => {
                let vx = &self.nodes[ins[0].0].value;
                let vg = &self.nodes[ins[1].0].value;
                let (n, c) = (vx.shape[0], vx.shape[1]);
                let inv_n = S::from_f64(1.0 / n as f64);
                let mut dgamma = vec![S::zero(); c];
                let mut dbeta = vec![S::zero(); c];
                let mut sum_dxhat = vec![S::zero(); c];
                let mut sum_dxhat_xc = vec![S::zero(); c];
                for i in 0..n {
                    for j in 0..c {
                        let xc = vx.data[i * c + j] - mean[j];
                        let xhat = xc * inv_std[j];
                        let d = dy.data[i * c + j];
                        dgamma[j] += d * xhat;
                        dbeta[j] += d;
                        let dxhat = d * vg.data[j];
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xc[j] += dxhat * xc;
                    }
                }
                {
                    let dx = acc_slot(grads, ins[0], &vx.shape);
                    let half = S::from_f64(0.5);
                    let two = S::from_f64(2.0);
                    for j in 0..c {
                        let istd = inv_std[j];
                        let dvar = -half * istd * istd * istd * sum_dxhat_xc[j];
                        let dmean = -istd * sum_dxhat[j];
                        for i in 0..n {
                            let xc = vx.data[i * c + j] - mean[j];
                            let dxhat = dy.data[i * c + j] * vg.data[j];
                            dx.data[i * c + j] +=
                                dxhat * istd + (dvar * two * xc + dmean) * inv_n;
                        }
                    }
                }
                let dg = acc_slot(grads, ins[1], &[c]);
                for j in 0..c {
                    dg.data[j] += dgamma[j];
                }
                let db = acc_slot(grads, ins[2], &[c]);
                for j in 0..c {
                    db.data[j] += dbeta[j];
                }
            }
            Op::BatchNormEval { mean, inv_std } => {
                let vx = &self.nodes[ins[0].0].value;
                let vg = &self.nodes[ins[1].0].value;
                let (n, c) = (vx.shape[0], vx.shape[1]);
                {
                    let dx = acc_slot(grads, ins[0], &vx.shape);
                    for i in 0..n {
                        for j in 0..c {
                            dx.data[i * c + j] += dy.data[i * c + j] * vg.data[j] * inv_std[j];
                        }
                    }
                }
                {
                    let dg = acc_slot(grads, ins[1], &[c]);
                    for i in 0..n {
                        for j in 0..c {
                            let xhat = (vx.data[i * c + j] - mean[j]) * inv_std[j];
                            dg.data[j] += dy.data[i * c + j] * xhat;
                        }
                    }
                }
                let db = acc_slot(grads, ins[2], &[c]);
                for i in 0..n {
                    for j in 0..c {
                        db.data[j] += dy.data[i * c + j];
                    }
                }
            }
            Op::LstmStep { gates, tanh_c } => {
                let vx = &self.nodes[ins[0].0].value;
                let vh = &self.nodes[ins[1].0].value;
                let vc = &self.nodes[ins[2].0].value;
                let vwx = &self.nodes[ins[3].0].value;
                let vwh = &self.nodes[ins[4].0].value;
                let hd = vh.shape[0];
                let d = vx.shape[0];
                let one = S::one();
                let mut dz = vec![S::zero(); 4 * hd];
                {
                    let dc_prev = acc_slot(grads, ins[2], &vc.shape);
                    for j in 0..hd {
                        let dh_new = dy.data[j];
                        let dc_ext = dy.data[hd + j];
                        let i_g = gates[j];
                        let f_g = gates[hd + j];
                        let g_g = gates[2 * hd + j];
                        let o_g = gates[3 * hd + j];
                        let tc = tanh_c[j];
                        let dc_total = dc_ext + dh_new * o_g * (one - tc * tc);
                        let do_g = dh_new * tc;
                        let di = dc_total * g_g;
                        let dg = dc_total * i_g;
                        let df = dc_total * vc.data[j];
                        dc_prev.data[j] += dc_total * f_g;
                        dz[j] = di * i_g * (one - i_g);
                        dz[hd + j] = df * f_g * (one - f_g);
                        dz[2 * hd + j] = dg * (one - g_g * g_g);
                        dz[3 * hd + j] = do_g * o_g * (one - o_g);
                    }
                }
                {
                    let dx = acc_slot(grads, ins[0], &vx.shape);
                    for (r, &dzr) in dz.iter().enumerate() {
                        let wxr = &vwx.data[r * d..(r + 1) * d];
                        for l in 0..d {
                            dx.data[l] += wxr[l] * dzr;
                        }
                    }
                }
                {
                    let dh = acc_slot(grads, ins[1], &vh.shape);
                    for (r, &dzr) in dz.iter().enumerate() {
                        let whr = &vwh.data[r * hd..(r + 1) * hd];
                        for l in 0..hd {
                            dh.data[l] += whr[l] * dzr;
                        }
                    }
                }
                {
                    let dwx = acc_slot(grads, ins[3], &vwx.shape);
                    for (r, &dzr) in dz.iter().enumerate() {
                        let dwxr = &mut dwx.data[r * d..(r + 1) * d];
                        for l in 0..d {
                            dwxr[l] += dzr * vx.data[l];
                        }
                    }
                }
                {
                    let dwh = acc_slot(grads, ins[4], &vwh.shape);
                    for (r, &dzr) in dz.iter().enumerate() {
                        let dwhr = &mut dwh.data[r * hd..(r + 1) * hd];
                        for l in 0..hd {
                            dwhr[l] += dzr * vh.data[l];
                        }
                    }
                }
                let db = acc_slot(grads, ins[5], &[4 * hd]);
                for (r, &dzr) in dz.iter().enumerate() {
                    db.data[r] += dzr;
                }
            }
            Op::Embed { index } => {
                let vt = &self.nodes[ins[0].0].value;
                let c = vt.shape[1];
                let dt = acc_slot(grads, ins[0], &vt.shape);
                for j in 0..c {
                    dt.data[index * c + j] += dy.data[j];
                }
            }
            Op::CrossEntropy { target } => {
                let vl = &self.nodes[ins[0].0].value;
                let p = softmax_slice(&vl.data);
                let d = dy.data[0];
                let g = acc_slot(grads, ins[0], &vl.shape);
                for i in 0..p.len() {
                    let indicator = if i == *target { S::one() } else { S::zero() };
                    g.data[i] += d * (p[i] - indicator);
                }
            }
            Op::Concat => {
                let mut off = 0;
                for &input in ins {
                    let len = self.nodes[input.0].value.len();
                    let g = acc_slot(grads, input, &[len]);
                    for i in 0..len {
                        g.data[i] += dy.data[off + i];
                    }
                    off += len;
                }
            }
            Op::StackRows => {
                let n = node.value.shape[1];
                for (r, &input) in ins.iter().enumerate() {
                    let g = acc_slot(grads, input, &[n]);
                    for j in 0..n {
                        g.data[j] += dy.data[r * n + j];
                    }
                }
            }
            Op::ConcatRows => {
                let c = node.value.shape[1];
                let mut off = 0;
                for &input in ins {
                    let rows = self.nodes[input.0].value.shape[0];
                    let g = acc_slot(grads, input, &[rows, c]);
                    for i in 0..rows * c {
                        g.data[i] += dy.data[off * c + i];
                    }
                    off += rows;
                }
            }
            Op::SliceRows { start } => {
                let vx = &self.nodes[ins[0].0].value;
                let c = vx.shape[1];
                let g = acc_slot(grads, ins[0], &vx.shape);
                for i in 0..dy.data.len() {
                    g.data[start * c + i] += dy.data[i];
                }
            }
            Op::Row { index } => {
                let vx = &self.nodes[ins[0].0].value;
                let c = vx.shape[1];
                let g = acc_slot(grads, ins[0], &vx.shape);
                for j in 0..c {
                    g.data[index * c + j] += dy.data[j];
                }
            }
            Op::SumAll => {
                let vx = &self.nodes[ins[0].0].value;
                let d = dy.data[0];
                let g = acc_slot(grads, ins[0], &vx.shape);
                for gd in g.data.iter_mut() {
                    *gd += d;
                }
            }
        }
        Ok(())
    }
}

fn acc_slot<'a, S: Scalar>(
    grads: &'a mut [Option<Tensor<S>>],
    id: NodeId,
    shape: &[usize],
) -> &'a mut Tensor<S> {
    let slot = &mut grads[id.0];
    if slot.is_none() {
        *slot = Some(Tensor::zeros(shape));
    }
    slot.as_mut().unwrap()
}

fn sigmoid<S: Scalar>(x: S) -> S {
    let one = S::one();
    if x.to_f64() >= 0.0 {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

fn softmax_slice<S: Scalar>(xs: &[S]) -> Vec<S> {
    let m = xs
        .iter()
        .fold(S::from_f64(f64::NEG_INFINITY), |a, &b| a.maxs(b));
    let mut out: Vec<S> = xs.iter().map(|&x| (x - m).exp()).collect();
    let sum: S = out.iter().copied().sum();
    for o in out.iter_mut() {
        *o = *o / sum;
    }
    out
}

fn bn_check_shapes<S: Scalar>(
    op: &str,
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
) -> Result<(usize, usize)> {
    if x.rank() != 2 {
        return Err(Error::shape(op, format!("x must be a matrix, got {:?}", x.shape)));
    }
    let c = x.shape[1];
    if gamma.shape != [c] || beta.shape != [c] {
        return Err(Error::shape(
            op,
            format!("gamma {:?}, beta {:?} vs {} channels", gamma.shape, beta.shape, c),
        ));
    }
    Ok((x.shape[0], c))
}

/// Inverted-scaling dropout. In training mode, elements are zeroed with
/// probability `ratio` and survivors divided by 1 - ratio. With `variational`
/// set on a matrix input, a single mask over columns is shared by every row
/// (the time axis), following recurrent-dropout practice. Inference mode is
/// the identity.
pub fn dropout<S: Scalar>(
    tape: &mut Tape<S>,
    x: NodeId,
    ratio: f64,
    rng: &mut RngStream,
    training: bool,
    variational: bool,
) -> Result<NodeId> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Invalid(format!("dropout ratio {} outside [0, 1)", ratio)));
    }
    if !training || ratio == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - ratio;
    let inv = S::from_f64(1.0 / keep);
    let shape = tape.value(x).shape.clone();
    let mask_len = if variational && shape.len() == 2 {
        shape[1]
    } else {
        tape.value(x).len()
    };
    let mask: Vec<S> = (0..mask_len)
        .map(|_| if rng.flip(keep) { inv } else { S::zero() })
        .collect();
    if variational && shape.len() == 2 {
        let m = tape.leaf(Tensor::vector(mask));
        tape.mul_row(x, m)
    } else {
        let m = tape.leaf(Tensor::new(shape, mask));
        tape.mul(x, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 1.0, 1.0]));
        let y = t.softmax(x).unwrap();
        let v = t.value(y);
        for &p in &v.data {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let sum: f64 = v.data.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relu_definition() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::vector(vec![-2.5, 3.0]));
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).data, vec![0.0, 3.0]);
    }

    #[test]
    fn conv_output_length_is_ceil_t_over_stride() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::matrix(7, 1, vec![1.0; 7]));
        let w = t.leaf(Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]));
        let b = t.leaf(Tensor::vector(vec![0.0]));
        let y = t.conv1d(x, w, b, 2).unwrap();
        assert_eq!(t.value(y).shape, vec![4, 1]);
        assert_eq!(t.value(y).data, vec![1.0; 4]);
    }

    #[test]
    fn linear_loss_grad_is_input() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(Tensor::matrix(2, 3, vec![0.1; 6]));
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = t.matmul(w, x).unwrap();
        let loss = t.sum_all(y).unwrap();
        t.backward(loss).unwrap();
        let gw = t.grad(w).unwrap();
        assert_eq!(gw.data, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn unreachable_param_has_no_grad() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let p = t.leaf(Tensor::vector(vec![5.0]));
        let loss = t.sum_all(w).unwrap();
        t.backward(loss).unwrap();
        assert!(t.grad(p).is_none());
        assert!(t.grad(w).is_some());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::<f64>::new();
        let w = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(t.backward(w).is_err());
    }

    #[test]
    fn batchnorm_train_normalizes_batch() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::matrix(
            4,
            2,
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
        ));
        let g = t.leaf(Tensor::vector(vec![1.0, 1.0]));
        let b = t.leaf(Tensor::vector(vec![0.0, 0.0]));
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::full(&[2], 1.0);
        let y = t.batchnorm_train(x, g, b, &mut rm, &mut rv, 0.9, 1e-5).unwrap();
        let v = t.value(y);
        for j in 0..2 {
            let mean: f64 = (0..4).map(|i| v.at2(i, j)).sum::<f64>() / 4.0;
            let var: f64 = (0..4).map(|i| (v.at2(i, j) - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-5, "channel {} mean {}", j, mean);
            assert!((var - 1.0).abs() < 1e-4, "channel {} var {}", j, var);
        }
        assert!((rm.data[0] - 0.1 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let mut t = Tape::<f64>::new();
        let l = t.leaf(Tensor::vector(vec![0.5, 1.5, -0.5]));
        let ce = t.cross_entropy(l, 1).unwrap();
        let logits = [0.5f64, 1.5, -0.5];
        let lse = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((t.value(ce).item() - (lse - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut t = Tape::<f64>::new();
        let mut rng = RngStream::new(1, "dropout");
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = dropout(&mut t, x, 0.0, &mut rng, true, false).unwrap();
        assert_eq!(y, x);
        let z = dropout(&mut t, x, 0.7, &mut rng, false, false).unwrap();
        assert_eq!(z, x);
        assert!(dropout(&mut t, x, 1.0, &mut rng, true, false).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let n = 100_000;
        let mut t = Tape::<f64>::new();
        let mut rng = RngStream::new(9, "dropout");
        let x = t.leaf(Tensor::vector(vec![1.0; n]));
        let y = dropout(&mut t, x, 0.3, &mut rng, true, false).unwrap();
        let mean: f64 = t.value(y).data.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {}", mean);
    }

    #[test]
    fn variational_dropout_shares_mask_across_rows() {
        let mut t = Tape::<f64>::new();
        let mut rng = RngStream::new(5, "dropout");
        let x = t.leaf(Tensor::matrix(4, 8, vec![1.0; 32]));
        let y = dropout(&mut t, x, 0.5, &mut rng, true, true).unwrap();
        let v = t.value(y);
        for r in 1..4 {
            assert_eq!(v.row(0), v.row(r));
        }
    }
}
