//! Reverse-mode gradient tape.
//!
//! The model is a fixed small DAG, so a Wengert tape is the simplest correct
//! choice: forward methods record each primitive op with the node values it
//! needs, and [`Tape::backward`] replays the list in reverse, accumulating
//! vector-Jacobian products. Values are immutable once recorded; a tape is
//! confined to a single evaluation.

use crate::error::{Error, Result};
use crate::numerics::matrix::{matmul, matmul_transpose_a, matmul_transpose_b, Matrix};

/// Index of a node in a tape's arena.
pub type NodeId = usize;

const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    /// C = A·Bᵀ.
    MatMulTransB { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: f64 },
    Silu { a: NodeId },
    /// Per-row RMS normalization with a learnable 1×D gain.
    RmsNorm { a: NodeId, gain: NodeId, inv_rms: Vec<f64> },
    /// Rotates feature pair k of row i by the constant angle `angles[i][k]`.
    Rope { a: NodeId, angles: Matrix },
    /// Row softmax with an additive mask; -inf entries are hard exclusions.
    SoftmaxMasked { a: NodeId },
    ConcatRows { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    SliceRows { a: NodeId, start: usize },
    SliceCols { a: NodeId, start: usize },
    /// Rows gathered from an embedding table; backward scatter-adds.
    EmbedLookup { table: NodeId, ids: Vec<u32> },
    /// Mean negative log-likelihood over supervised positions.
    CrossEntropy { logits: NodeId, targets: Vec<u32>, mask: Vec<bool>, probs: Matrix },
    SumAll { a: NodeId },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive ops with enough saved state to run the
/// backward pass. One tape per evaluation; not shared across threads.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        id
    }

    /// Register a leaf value (input or parameter).
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    /// Gradient accumulated for `id` by the last [`Tape::backward`] call.
    /// `None` if no gradient flowed to the node.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id].as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn shape_err(&self, op: &'static str, a: NodeId, b: NodeId) -> Error {
        let (lr, lc) = self.nodes[a].value.shape();
        let (rr, rc) = self.nodes[b].value.shape();
        Error::Shape { op, lhs_rows: lr, lhs_cols: lc, rhs_rows: rr, rhs_cols: rc }
    }

    // ── Forward ops ─────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let c = matmul(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(c, Op::MatMul { a, b }))
    }

    pub fn matmul_transpose_b(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let c = matmul_transpose_b(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(c, Op::MatMulTransB { a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let c = self.nodes[a].value.add(&self.nodes[b].value)?;
        Ok(self.push(c, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(self.shape_err("mul", a, b));
        }
        let av = &self.nodes[a].value;
        let bv = &self.nodes[b].value;
        let mut c = av.clone();
        for (x, y) in c.data_mut().iter_mut().zip(bv.data()) {
            *x *= y;
        }
        Ok(self.push(c, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let c = self.nodes[a].value.scale(factor);
        self.push(c, Op::Scale { a, factor })
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let mut c = self.nodes[a].value.clone();
        for v in c.data_mut() {
            *v *= sigmoid(*v);
        }
        self.push(c, Op::Silu { a })
    }

    /// y[i][j] = gain[j] · x[i][j] / sqrt(mean_j(x[i][j]²) + eps).
    pub fn rms_norm(&mut self, a: NodeId, gain: NodeId) -> Result<NodeId> {
        let g = &self.nodes[gain].value;
        let x = &self.nodes[a].value;
        if g.rows() != 1 || g.cols() != x.cols() {
            return Err(self.shape_err("rms_norm", a, gain));
        }
        let n = x.cols() as f64;
        let mut inv_rms = Vec::with_capacity(x.rows());
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let row = x.row(i);
            let mut ss = 0.0;
            for v in row {
                ss += v * v;
            }
            let r_inv = 1.0 / (ss / n + RMS_EPS).sqrt();
            inv_rms.push(r_inv);
            let orow = out.row_mut(i);
            for j in 0..row.len() {
                orow[j] = g.get(0, j) * row[j] * r_inv;
            }
        }
        Ok(self.push(out, Op::RmsNorm { a, gain, inv_rms }))
    }

    /// Rotate feature pair k of every row by the constant `angles[row][k]`.
    /// `angles` has one column per feature pair.
    pub fn rope(&mut self, a: NodeId, angles: &Matrix) -> Result<NodeId> {
        let x = &self.nodes[a].value;
        if x.cols() % 2 != 0 || angles.rows() != x.rows() || angles.cols() != x.cols() / 2 {
            return Err(Error::Validation(format!(
                "rope: input {}x{} does not match angles {}x{}",
                x.rows(),
                x.cols(),
                angles.rows(),
                angles.cols()
            )));
        }
        let out = rotate_pairs(x, angles, 1.0);
        Ok(self.push(out, Op::Rope { a, angles: angles.clone() }))
    }

    /// Row-stochastic softmax of `logits + mask`; mask entries of -inf are
    /// hard exclusions whose outputs are exactly 0.0.
    pub fn softmax_masked(&mut self, a: NodeId, mask: &Matrix) -> Result<NodeId> {
        let out = softmax_masked(&self.nodes[a].value, mask)?;
        Ok(self.push(out, Op::SoftmaxMasked { a }))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Validation("concat_rows of zero parts".into()));
        }
        let cols = self.nodes[parts[0]].value.cols();
        let mut rows = 0;
        for &p in parts {
            if self.nodes[p].value.cols() != cols {
                return Err(self.shape_err("concat_rows", parts[0], p));
            }
            rows += self.nodes[p].value.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.nodes[p].value.data());
        }
        Ok(self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows { parts: parts.to_vec() }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Validation("concat_cols of zero parts".into()));
        }
        let rows = self.nodes[parts[0]].value.rows();
        let mut cols = 0;
        for &p in parts {
            if self.nodes[p].value.rows() != rows {
                return Err(self.shape_err("concat_cols", parts[0], p));
            }
            cols += self.nodes[p].value.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let orow = out.row_mut(i);
            let mut at = 0;
            for &p in parts {
                let prow = self.nodes[p].value.row(i);
                orow[at..at + prow.len()].copy_from_slice(prow);
                at += prow.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let x = &self.nodes[a].value;
        if start + len > x.rows() {
            return Err(Error::Validation(format!(
                "slice_rows [{start}, {}) out of {} rows",
                start + len,
                x.rows()
            )));
        }
        let out = Matrix::from_fn(len, x.cols(), |i, j| x.get(start + i, j));
        Ok(self.push(out, Op::SliceRows { a, start }))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let x = &self.nodes[a].value;
        if start + len > x.cols() {
            return Err(Error::Validation(format!(
                "slice_cols [{start}, {}) out of {} cols",
                start + len,
                x.cols()
            )));
        }
        let out = Matrix::from_fn(x.rows(), len, |i, j| x.get(i, start + j));
        Ok(self.push(out, Op::SliceCols { a, start }))
    }

    pub fn embed_lookup(&mut self, table: NodeId, ids: &[u32]) -> Result<NodeId> {
        let t = &self.nodes[table].value;
        for &id in ids {
            if id as usize >= t.rows() {
                return Err(Error::Validation(format!(
                    "token id {id} out of vocabulary of {}",
                    t.rows()
                )));
            }
        }
        let out = Matrix::from_fn(ids.len(), t.cols(), |i, j| t.get(ids[i] as usize, j));
        Ok(self.push(out, Op::EmbedLookup { table, ids: ids.to_vec() }))
    }

    /// Mean negative log-likelihood of `targets` over positions where `mask`
    /// is true; output is a 1×1 node.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32], mask: &[bool]) -> Result<NodeId> {
        let l = &self.nodes[logits].value;
        let (loss, probs) = cross_entropy_forward(l, targets, mask)?;
        let value = Matrix::from_vec(1, 1, vec![loss]);
        Ok(self.push(
            value,
            Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs },
        ))
    }

    /// Sum of all entries as a 1×1 node. Reduction order is row-major.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let mut acc = 0.0;
        for v in self.nodes[a].value.data() {
            acc += v;
        }
        self.push(Matrix::from_vec(1, 1, vec![acc]), Op::SumAll { a })
    }

    // ── Backward ────────────────────────────────────────────────────────

    fn accumulate(&mut self, id: NodeId, delta: &Matrix) {
        match &mut self.grads[id] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            None => self.grads[id] = Some(delta.clone()),
        }
    }

    /// Replay the tape in reverse from a scalar node, seeding its gradient
    /// with 1.0. Each op's rule fires exactly once, so every leaf gradient is
    /// accumulated exactly once per path.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss].value.shape() != (1, 1) {
            return Err(Error::Validation(format!(
                "backward seed must be scalar, got {}x{}",
                self.nodes[loss].value.rows(),
                self.nodes[loss].value.cols()
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for id in (0..self.nodes.len()).rev() {
            let Some(d_out) = self.grads[id].clone() else { continue };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let da = matmul_transpose_b(&d_out, &self.nodes[b].value)?;
                    let db = matmul_transpose_a(&self.nodes[a].value, &d_out)?;
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::MatMulTransB { a, b } => {
                    let da = matmul(&d_out, &self.nodes[b].value)?;
                    let db = matmul_transpose_a(&d_out, &self.nodes[a].value)?;
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Add { a, b } => {
                    self.accumulate(a, &d_out);
                    self.accumulate(b, &d_out);
                }
                Op::Mul { a, b } => {
                    let mut da = d_out.clone();
                    for (x, y) in da.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
                        *x *= y;
                    }
                    let mut db = d_out.clone();
                    for (x, y) in db.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        *x *= y;
                    }
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale { a, factor } => {
                    self.accumulate(a, &d_out.scale(factor));
                }
                Op::Silu { a } => {
                    let mut da = d_out.clone();
                    for (g, x) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                        let s = sigmoid(*x);
                        *g *= s * (1.0 + x * (1.0 - s));
                    }
                    self.accumulate(a, &da);
                }
                Op::RmsNorm { a, gain, inv_rms } => {
                    let x = &self.nodes[a].value;
                    let g = &self.nodes[gain].value;
                    let n = x.cols() as f64;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    let mut dgain = Matrix::zeros(1, x.cols());
                    for i in 0..x.rows() {
                        let r_inv = inv_rms[i];
                        let xrow = x.row(i);
                        let drow = d_out.row(i);
                        let mut dot = 0.0;
                        for j in 0..xrow.len() {
                            dot += drow[j] * g.get(0, j) * xrow[j];
                        }
                        let darow = da.row_mut(i);
                        for j in 0..xrow.len() {
                            darow[j] = drow[j] * g.get(0, j) * r_inv
                                - xrow[j] * r_inv * r_inv * r_inv * dot / n;
                        }
                        let grow = dgain.row_mut(0);
                        for j in 0..xrow.len() {
                            grow[j] += drow[j] * xrow[j] * r_inv;
                        }
                    }
                    self.accumulate(a, &da);
                    self.accumulate(gain, &dgain);
                }
                Op::Rope { a, angles } => {
                    // Rotation is orthogonal: the VJP rotates by -angle.
                    let da = rotate_pairs(&d_out, &angles, -1.0);
                    self.accumulate(a, &da);
                }
                Op::SoftmaxMasked { a } => {
                    let y = &self.nodes[id].value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let yrow = y.row(i);
                        let drow = d_out.row(i);
                        let mut s = 0.0;
                        for j in 0..yrow.len() {
                            s += drow[j] * yrow[j];
                        }
                        let darow = da.row_mut(i);
                        for j in 0..yrow.len() {
                            darow[j] = yrow[j] * (drow[j] - s);
                        }
                    }
                    self.accumulate(a, &da);
                }
                Op::ConcatRows { parts } => {
                    let mut at = 0;
                    for &p in &parts {
                        let rows = self.nodes[p].value.rows();
                        let cols = self.nodes[p].value.cols();
                        let part = Matrix::from_fn(rows, cols, |i, j| d_out.get(at + i, j));
                        self.accumulate(p, &part);
                        at += rows;
                    }
                }
                Op::ConcatCols { parts } => {
                    let mut at = 0;
                    for &p in &parts {
                        let rows = self.nodes[p].value.rows();
                        let cols = self.nodes[p].value.cols();
                        let part = Matrix::from_fn(rows, cols, |i, j| d_out.get(i, at + j));
                        self.accumulate(p, &part);
                        at += cols;
                    }
                }
                Op::SliceRows { a, start } => {
                    let (rows, cols) = self.nodes[a].value.shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for i in 0..d_out.rows() {
                        let src = d_out.row(i);
                        da.row_mut(start + i).copy_from_slice(src);
                    }
                    self.accumulate(a, &da);
                }
                Op::SliceCols { a, start } => {
                    let (rows, cols) = self.nodes[a].value.shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        let drow = d_out.row(i);
                        let darow = da.row_mut(i);
                        darow[start..start + drow.len()].copy_from_slice(drow);
                    }
                    self.accumulate(a, &da);
                }
                Op::EmbedLookup { table, ids } => {
                    let (rows, cols) = self.nodes[table].value.shape();
                    let mut dt = Matrix::zeros(rows, cols);
                    for (i, &id) in ids.iter().enumerate() {
                        let src = d_out.row(i);
                        let dst = dt.row_mut(id as usize);
                        for j in 0..cols {
                            dst[j] += src[j];
                        }
                    }
                    self.accumulate(table, &dt);
                }
                Op::CrossEntropy { logits, targets, mask, probs } => {
                    let seed = d_out.get(0, 0);
                    let n_masked = mask.iter().filter(|&&m| m).count() as f64;
                    let (rows, cols) = self.nodes[logits].value.shape();
                    let mut dl = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        if !mask[i] {
                            continue;
                        }
                        let prow = probs.row(i);
                        let drow = dl.row_mut(i);
                        for j in 0..cols {
                            let indicator = if j == targets[i] as usize { 1.0 } else { 0.0 };
                            drow[j] = seed * (prow[j] - indicator) / n_masked;
                        }
                    }
                    self.accumulate(logits, &dl);
                }
                Op::SumAll { a } => {
                    let seed = d_out.get(0, 0);
                    let (rows, cols) = self.nodes[a].value.shape();
                    let da = Matrix::from_fn(rows, cols, |_, _| seed);
                    self.accumulate(a, &da);
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Rotate feature pair k of each row by `direction * angles[row][k]`.
pub(crate) fn rotate_pairs(x: &Matrix, angles: &Matrix, direction: f64) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let xrow = x.row(i);
        let arow = angles.row(i);
        let orow = out.row_mut(i);
        for (k, &angle) in arow.iter().enumerate() {
            let theta = direction * angle;
            let (sin, cos) = theta.sin_cos();
            let u = xrow[2 * k];
            let v = xrow[2 * k + 1];
            orow[2 * k] = u * cos - v * sin;
            orow[2 * k + 1] = u * sin + v * cos;
        }
    }
    out
}

/// Row softmax of `logits + mask` with per-row max subtraction.
///
/// Mask entries of -inf are hard exclusions: they never enter the max or the
/// normalizing sum, and their outputs are exactly 0.0. Finite mask entries
/// are added to the logits. A fully-masked row is an invariant violation.
pub fn softmax_masked(logits: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if logits.shape() != mask.shape() {
        return Err(Error::Shape {
            op: "softmax_masked",
            lhs_rows: logits.rows(),
            lhs_cols: logits.cols(),
            rhs_rows: mask.rows(),
            rhs_cols: mask.cols(),
        });
    }
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let lrow = logits.row(i);
        let mrow = mask.row(i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..lrow.len() {
            if mrow[j] != f64::NEG_INFINITY {
                let v = lrow[j] + mrow[j];
                if v > max {
                    max = v;
                }
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::Invariant(format!("fully-masked softmax row {i}")));
        }
        let mut sum = 0.0;
        for j in 0..lrow.len() {
            if mrow[j] != f64::NEG_INFINITY {
                sum += (lrow[j] + mrow[j] - max).exp();
            }
        }
        let orow = out.row_mut(i);
        for j in 0..lrow.len() {
            orow[j] = if mrow[j] != f64::NEG_INFINITY {
                (lrow[j] + mrow[j] - max).exp() / sum
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

/// Loss plus the softmax rows saved for the backward rule.
fn cross_entropy_forward(logits: &Matrix, targets: &[u32], mask: &[bool]) -> Result<(f64, Matrix)> {
    if targets.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::Validation(format!(
            "cross_entropy: {} logit rows, {} targets, {} mask entries",
            logits.rows(),
            targets.len(),
            mask.len()
        )));
    }
    let n_masked = mask.iter().filter(|&&m| m).count();
    if n_masked == 0 {
        return Err(Error::EmptySupervision);
    }
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in 0..logits.rows() {
        if !mask[i] {
            continue;
        }
        let t = targets[i] as usize;
        if t >= logits.cols() {
            return Err(Error::Validation(format!(
                "cross_entropy: target {t} out of {} classes",
                logits.cols()
            )));
        }
        let row = logits.row(i);
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let prow = probs.row_mut(i);
        for j in 0..row.len() {
            prow[j] = (row[j] - max).exp() / sum;
        }
        loss += max + sum.ln() - row[t];
    }
    Ok((loss / n_masked as f64, probs))
}

/// Mean negative log-likelihood without tape recording.
pub fn cross_entropy_value(logits: &Matrix, targets: &[u32], mask: &[bool]) -> Result<f64> {
    cross_entropy_forward(logits, targets, mask).map(|(loss, _)| loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Matrix {
        Matrix::from_vec(1, values.len(), values.to_vec())
    }

    #[test]
    fn softmax_uniform_over_permitted() {
        let out = softmax_masked(&row(&[0.0, 0.0, 0.0]), &row(&[0.0, 0.0, 0.0])).unwrap();
        for j in 0..3 {
            assert!((out.get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_single_permitted_entry() {
        let out = softmax_masked(&row(&[5.0, 9.0]), &row(&[0.0, f64::NEG_INFINITY])).unwrap();
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(0, 1).to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn softmax_direct_evaluation() {
        let out = softmax_masked(&row(&[1.0, 2.0, 3.0]), &row(&[0.0, 0.0, 0.0])).unwrap();
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for j in 0..3 {
            assert!(
                (out.get(0, j) - expected[j]).abs() < 1e-8,
                "entry {j}: {} vs {}",
                out.get(0, j),
                expected[j]
            );
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_masked_are_exact_zero() {
        let logits = Matrix::from_rows(&[vec![3.0, -2.0, 0.5, 8.0], vec![1e3, 1e3, -1e3, 0.0]]);
        let mask = Matrix::from_rows(&[
            vec![0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
            vec![0.0, 0.0, 0.0, 0.0],
        ]);
        let out = softmax_masked(&logits, &mask).unwrap();
        for i in 0..2 {
            let sum: f64 = out.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
        assert_eq!(out.get(0, 1).to_bits(), 0.0f64.to_bits());
        assert_eq!(out.get(0, 3).to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn softmax_fully_masked_row_is_error() {
        let err = softmax_masked(
            &row(&[1.0, 2.0]),
            &row(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn cross_entropy_perfect_prediction_limit() {
        // A huge logit gap toward the target drives the loss to zero.
        let logits = row(&[500.0, 0.0, 0.0]);
        let loss = cross_entropy_value(&logits, &[0], &[true]).unwrap();
        assert!(loss.abs() < 1e-12, "loss = {loss}");
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        for v in [2, 3, 7, 16] {
            let logits = Matrix::zeros(1, v);
            let loss = cross_entropy_value(&logits, &[0], &[true]).unwrap();
            assert!((loss - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_direct_evaluation() {
        let loss = cross_entropy_value(&row(&[1.0, 2.0, 3.0]), &[2], &[true]).unwrap();
        assert!((loss - 0.40760596).abs() < 1e-8, "loss = {loss}");
    }

    #[test]
    fn cross_entropy_empty_supervision() {
        let err = cross_entropy_value(&row(&[1.0, 2.0]), &[0], &[false]).unwrap_err();
        assert!(matches!(err, Error::EmptySupervision));
        assert_eq!(err.to_string(), "empty supervision");
    }

    #[test]
    fn backward_through_matmul_chain() {
        // loss = sum(A·B) with A = [[1,2]], B = [[3],[4]]: dA = Bᵀ, dB = Aᵀ.
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0]]));
        let b = tape.leaf(Matrix::from_rows(&[vec![3.0], vec![4.0]]));
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum_all(c);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_accumulates_once_per_use() {
        // loss = sum(x ⊙ x): gradient 2x.
        let mut tape = Tape::new();
        let x = tape.leaf(row(&[1.0, -2.0, 0.5]));
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }
}
