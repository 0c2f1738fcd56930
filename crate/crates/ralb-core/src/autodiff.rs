//! Reverse-mode differentiation over a flat tape of f32 matrices.
//!
//! Every value is a row-major `Array2<f32>`; scalars are `(1, 1)`. Nodes are
//! appended in evaluation order and [`Tape::backward`] walks them in reverse,
//! accumulating gradients only into nodes reachable from a grad-requiring
//! leaf. The op set is exactly the computation vocabulary of the encoders
//! and losses: affine layers, GELU, row normalization, segment mean-pooling,
//! embedding gathers, log-softmax, and the attack margins.
//!
//! Ties inside the margin ops (argmax, top-k) break toward the lowest index
//! so gradients stay deterministic on degenerate logits.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// GELU (tanh approximation), the only activation in the reference encoders.
pub fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_56; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn gelu_grad(x: f32) -> f32 {
    const C: f32 = 0.797_884_56;
    let inner = C * (x + 0.044_715 * x * x * x);
    let t = inner.tanh();
    let dinner = C * (1.0 + 3.0 * 0.044_715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

enum Op {
    Leaf,
    /// (n,k)·(k,m)
    MatMul(usize, usize),
    /// (n,k)·(m,k)ᵀ
    MatMulTransB(usize, usize),
    /// (n,m) + broadcast (1,m)
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f32),
    /// (n,m) * broadcast (1,1)
    MulScalar(usize, usize),
    Exp(usize),
    Gelu(usize),
    /// Rows scaled to unit L2 norm.
    RowNormalize(usize),
    /// Mean over row ranges `(start, len)`; one output row per segment.
    MeanPoolSegments(usize, Vec<(usize, usize)>),
    /// Same data viewed as (rows, cols).
    Reshape(usize),
    /// out[i] = table[idx[i]]
    GatherRows(usize, Vec<usize>),
    LogSoftmaxRows(usize),
    /// out[i] = a[i, col[i]], shape (n,1)
    GatherRowCols(usize, Vec<usize>),
    SumAll(usize),
    /// out[i] = Σ_j a[i,j]², shape (n,1)
    SumSquaresRows(usize),
    /// Difference-of-logits-ratio per row, shape (n,1).
    DlrRows(usize, Vec<usize>),
    /// Margin max_{j≠y} z_j − z_y per row, shape (n,1).
    CwRows(usize, Vec<usize>),
}

struct Node {
    value: Array2<f32>,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation with forward values and, after `backward`, gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f32>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f32>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f32> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f32 {
        debug_assert_eq!(self.nodes[v.0].value.dim(), (1, 1));
        self.nodes[v.0].value[[0, 0]]
    }

    /// Gradient of the last `backward` output with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Array2<f32>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Array2<f32>, needs_grad: bool) -> Var {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn constant(&mut self, value: Array2<f32>) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar_leaf(&mut self, value: f32, needs_grad: bool) -> Var {
        self.leaf(Array2::from_elem((1, 1), value), needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::MatMul(a.0, b.0), ng)
    }

    pub fn matmul_transb(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::MatMulTransB(a.0, b.0), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.nodes[row.0].value.nrows(), 1);
        let v = &self.nodes[a.0].value + &self.nodes[row.0].value;
        let ng = self.needs(a.0) || self.needs(row.0);
        self.push(v, Op::AddRow(a.0, row.0), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::Add(a.0, b.0), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::Sub(a.0, b.0), ng)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        let ng = self.needs(a.0);
        self.push(v, Op::Scale(a.0, c), ng)
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        debug_assert_eq!(self.nodes[s.0].value.dim(), (1, 1));
        let sv = self.nodes[s.0].value[[0, 0]];
        let v = self.nodes[a.0].value.mapv(|x| x * sv);
        let ng = self.needs(a.0) || self.needs(s.0);
        self.push(v, Op::MulScalar(a.0, s.0), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(f32::exp);
        let ng = self.needs(a.0);
        self.push(v, Op::Exp(a.0), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.mapv(gelu);
        let ng = self.needs(a.0);
        self.push(v, Op::Gelu(a.0), ng)
    }

    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut v = self.nodes[a.0].value.clone();
        for mut row in v.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row.mapv_inplace(|x| x / n);
            }
        }
        let ng = self.needs(a.0);
        self.push(v, Op::RowNormalize(a.0), ng)
    }

    pub fn mean_pool_segments(&mut self, a: Var, segments: Vec<(usize, usize)>) -> Var {
        let src = &self.nodes[a.0].value;
        let cols = src.ncols();
        let mut v = Array2::<f32>::zeros((segments.len(), cols));
        for (s, &(start, len)) in segments.iter().enumerate() {
            debug_assert!(len > 0 && start + len <= src.nrows());
            for r in start..start + len {
                for c in 0..cols {
                    v[[s, c]] += src[[r, c]];
                }
            }
            let inv = 1.0 / len as f32;
            for c in 0..cols {
                v[[s, c]] *= inv;
            }
        }
        let ng = self.needs(a.0);
        self.push(v, Op::MeanPoolSegments(a.0, segments), ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = &self.nodes[a.0].value;
        debug_assert_eq!(src.len(), rows * cols);
        let data: Vec<f32> = src.iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), data).expect("reshape size");
        let ng = self.needs(a.0);
        self.push(v, Op::Reshape(a.0), ng)
    }

    pub fn gather_rows(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let src = &self.nodes[table.0].value;
        let mut v = Array2::<f32>::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&src.row(i));
        }
        let ng = self.needs(table.0);
        self.push(v, Op::GatherRows(table.0, idx), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].value;
        let mut v = src.clone();
        for mut row in v.rows_mut() {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f32>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let ng = self.needs(a.0);
        self.push(v, Op::LogSoftmaxRows(a.0), ng)
    }

    pub fn gather_row_cols(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let src = &self.nodes[a.0].value;
        debug_assert_eq!(cols.len(), src.nrows());
        let mut v = Array2::<f32>::zeros((src.nrows(), 1));
        for (r, &c) in cols.iter().enumerate() {
            v[[r, 0]] = src[[r, c]];
        }
        let ng = self.needs(a.0);
        self.push(v, Op::GatherRowCols(a.0, cols), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let ng = self.needs(a.0);
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a.0), ng)
    }

    pub fn sum_squares_rows(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].value;
        let v = src
            .map_axis(Axis(1), |row| row.dot(&row))
            .insert_axis(Axis(1));
        let ng = self.needs(a.0);
        self.push(v, Op::SumSquaresRows(a.0), ng)
    }

    /// DLR margin per row: −(z_y − max_{j≠y} z_j) / (z_(1) − z_(3)).
    /// Requires K ≥ 3 and a nonzero denominator.
    pub fn dlr_rows(&mut self, a: Var, labels: Vec<usize>) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if src.ncols() < 3 {
            return Err(Error::Unsupported(format!(
                "DLR needs at least 3 classes, got {}",
                src.ncols()
            )));
        }
        let mut v = Array2::<f32>::zeros((src.nrows(), 1));
        for (r, &y) in labels.iter().enumerate() {
            let row: Vec<f32> = src.row(r).to_vec();
            let (p1, _, p3) = top3(&row);
            let denom = row[p1] - row[p3];
            if denom == 0.0 {
                return Err(Error::Degenerate(
                    "DLR denominator is zero (top-1 equals top-3 logit)".into(),
                ));
            }
            let m = argmax_excluding(&row, y);
            v[[r, 0]] = -(row[y] - row[m]) / denom;
        }
        let ng = self.needs(a.0);
        Ok(self.push(v, Op::DlrRows(a.0, labels), ng))
    }

    /// CW margin per row: max_{j≠y} z_j − z_y.
    pub fn cw_rows(&mut self, a: Var, labels: Vec<usize>) -> Var {
        let src = &self.nodes[a.0].value;
        let mut v = Array2::<f32>::zeros((src.nrows(), 1));
        for (r, &y) in labels.iter().enumerate() {
            let row: Vec<f32> = src.row(r).to_vec();
            let m = argmax_excluding(&row, y);
            v[[r, 0]] = row[m] - row[y];
        }
        let ng = self.needs(a.0);
        self.push(v, Op::CwRows(a.0, labels), ng)
    }

    /// Backpropagate from a scalar output node.
    pub fn backward(&mut self, out: Var) {
        assert_eq!(self.nodes[out.0].value.dim(), (1, 1), "backward needs a scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[out.0] = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=out.0).rev() {
            if !self.nodes[i].needs_grad || self.grads[i].is_none() {
                continue;
            }
            let g = self.grads[i].take().unwrap();
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
    }

    fn accumulate(&mut self, target: usize, delta: Array2<f32>) {
        if !self.nodes[target].needs_grad {
            return;
        }
        match &mut self.grads[target] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, i: usize, g: &Array2<f32>) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let da = g.dot(&self.nodes[b].value.t());
                    self.accumulate(a, da);
                }
                if self.needs(b) {
                    let db = self.nodes[a].value.t().dot(g);
                    self.accumulate(b, db);
                }
            }
            Op::MatMulTransB(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    let da = g.dot(&self.nodes[b].value);
                    self.accumulate(a, da);
                }
                if self.needs(b) {
                    let db = g.t().dot(&self.nodes[a].value);
                    self.accumulate(b, db);
                }
            }
            Op::AddRow(a, row) => {
                let (a, row) = (*a, *row);
                if self.needs(a) {
                    self.accumulate(a, g.clone());
                }
                if self.needs(row) {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(row, dr);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    self.accumulate(a, g.clone());
                }
                if self.needs(b) {
                    self.accumulate(b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs(a) {
                    self.accumulate(a, g.clone());
                }
                if self.needs(b) {
                    self.accumulate(b, g.mapv(|x| -x));
                }
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                if self.needs(a) {
                    self.accumulate(a, g.mapv(|x| x * c));
                }
            }
            Op::MulScalar(a, s) => {
                let (a, s) = (*a, *s);
                let sv = self.nodes[s].value[[0, 0]];
                if self.needs(a) {
                    self.accumulate(a, g.mapv(|x| x * sv));
                }
                if self.needs(s) {
                    let ds = (g * &self.nodes[a].value).sum();
                    self.accumulate(s, Array2::from_elem((1, 1), ds));
                }
            }
            Op::Exp(a) => {
                let a = *a;
                if self.needs(a) {
                    let da = g * &self.nodes[i].value;
                    self.accumulate(a, da);
                }
            }
            Op::Gelu(a) => {
                let a = *a;
                if self.needs(a) {
                    let da = g * &self.nodes[a].value.mapv(gelu_grad);
                    self.accumulate(a, da);
                }
            }
            Op::RowNormalize(a) => {
                let a = *a;
                if self.needs(a) {
                    let x = &self.nodes[a].value;
                    let y = &self.nodes[i].value;
                    let mut da = Array2::<f32>::zeros(x.dim());
                    for r in 0..x.nrows() {
                        let xr = x.row(r);
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let norm = xr.dot(&xr).sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let proj = yr.dot(&gr);
                        for c in 0..x.ncols() {
                            da[[r, c]] = (gr[c] - yr[c] * proj) / norm;
                        }
                    }
                    self.accumulate(a, da);
                }
            }
            Op::MeanPoolSegments(a, segments) => {
                let a = *a;
                let segments = segments.clone();
                if self.needs(a) {
                    let mut da = Array2::<f32>::zeros(self.nodes[a].value.dim());
                    for (s, (start, len)) in segments.iter().enumerate() {
                        let inv = 1.0 / *len as f32;
                        for r in *start..start + len {
                            for c in 0..da.ncols() {
                                da[[r, c]] += g[[s, c]] * inv;
                            }
                        }
                    }
                    self.accumulate(a, da);
                }
            }
            Op::Reshape(a) => {
                let a = *a;
                if self.needs(a) {
                    let dim = self.nodes[a].value.dim();
                    let data: Vec<f32> = g.iter().copied().collect();
                    let da = Array2::from_shape_vec(dim, data).expect("reshape grad size");
                    self.accumulate(a, da);
                }
            }
            Op::GatherRows(table, idx) => {
                let table = *table;
                let idx = idx.clone();
                if self.needs(table) {
                    let mut da = Array2::<f32>::zeros(self.nodes[table].value.dim());
                    for (r, &ti) in idx.iter().enumerate() {
                        for c in 0..da.ncols() {
                            da[[ti, c]] += g[[r, c]];
                        }
                    }
                    self.accumulate(table, da);
                }
            }
            Op::LogSoftmaxRows(a) => {
                let a = *a;
                if self.needs(a) {
                    let y = &self.nodes[i].value;
                    let mut da = g.clone();
                    for r in 0..da.nrows() {
                        let gsum: f32 = g.row(r).sum();
                        for c in 0..da.ncols() {
                            da[[r, c]] -= y[[r, c]].exp() * gsum;
                        }
                    }
                    self.accumulate(a, da);
                }
            }
            Op::GatherRowCols(a, cols) => {
                let a = *a;
                let cols = cols.clone();
                if self.needs(a) {
                    let mut da = Array2::<f32>::zeros(self.nodes[a].value.dim());
                    for (r, &c) in cols.iter().enumerate() {
                        da[[r, c]] += g[[r, 0]];
                    }
                    self.accumulate(a, da);
                }
            }
            Op::SumAll(a) => {
                let a = *a;
                if self.needs(a) {
                    let gv = g[[0, 0]];
                    let da = Array2::from_elem(self.nodes[a].value.dim(), gv);
                    self.accumulate(a, da);
                }
            }
            Op::SumSquaresRows(a) => {
                let a = *a;
                if self.needs(a) {
                    let x = &self.nodes[a].value;
                    let mut da = Array2::<f32>::zeros(x.dim());
                    for r in 0..x.nrows() {
                        let gr = g[[r, 0]];
                        for c in 0..x.ncols() {
                            da[[r, c]] = 2.0 * x[[r, c]] * gr;
                        }
                    }
                    self.accumulate(a, da);
                }
            }
            Op::DlrRows(a, labels) => {
                let a = *a;
                let labels = labels.clone();
                if self.needs(a) {
                    let x = &self.nodes[a].value;
                    let mut da = Array2::<f32>::zeros(x.dim());
                    for (r, &y) in labels.iter().enumerate() {
                        let row: Vec<f32> = x.row(r).to_vec();
                        let (p1, _, p3) = top3(&row);
                        let m = argmax_excluding(&row, y);
                        let u = row[y] - row[m];
                        let v = row[p1] - row[p3];
                        let go = g[[r, 0]];
                        da[[r, y]] += go * (-1.0 / v);
                        da[[r, m]] += go * (1.0 / v);
                        da[[r, p1]] += go * (u / (v * v));
                        da[[r, p3]] += go * (-u / (v * v));
                    }
                    self.accumulate(a, da);
                }
            }
            Op::CwRows(a, labels) => {
                let a = *a;
                let labels = labels.clone();
                if self.needs(a) {
                    let x = &self.nodes[a].value;
                    let mut da = Array2::<f32>::zeros(x.dim());
                    for (r, &y) in labels.iter().enumerate() {
                        let row: Vec<f32> = x.row(r).to_vec();
                        let m = argmax_excluding(&row, y);
                        da[[r, m]] += g[[r, 0]];
                        da[[r, y]] -= g[[r, 0]];
                    }
                    self.accumulate(a, da);
                }
            }
        }
    }
}

/// Indices of the three largest values; ties break toward lower indices.
fn top3(row: &[f32]) -> (usize, usize, usize) {
    debug_assert!(row.len() >= 3);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    (idx[0], idx[1], idx[2])
}

/// Argmax over all indices except `skip`; ties break toward lower indices.
fn argmax_excluding(row: &[f32], skip: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f32::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if j != skip && v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_scalar(mut f: impl FnMut(f32) -> f32, x: f32, h: f32) -> f32 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn matmul_grad_matches_analytic() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0, 2.0], [3.0, 4.0]], true);
        let b = t.leaf(array![[0.5, -1.0], [2.0, 0.25]], true);
        let y = t.matmul(a, b);
        let s = t.sum_all(y);
        t.backward(s);
        // d(sum(AB))/dA = 1·Bᵀ row-summed
        let da = t.grad(a).unwrap();
        assert_eq!(da[[0, 0]], 0.5 - 1.0);
        assert_eq!(da[[0, 1]], 2.0 + 0.25);
        let db = t.grad(b).unwrap();
        assert_eq!(db[[0, 0]], 1.0 + 3.0);
        assert_eq!(db[[1, 1]], 2.0 + 4.0);
    }

    #[test]
    fn gelu_grad_matches_fd() {
        for &x in &[-2.0f32, -0.5, 0.0, 0.3, 1.7] {
            let fd = fd_scalar(gelu, x, 1e-3);
            assert!((gelu_grad(x) - fd).abs() < 1e-3, "x={x}");
        }
    }

    #[test]
    fn log_softmax_grad_sums_to_zero() {
        let mut t = Tape::new();
        let a = t.leaf(array![[0.3, -1.2, 2.0]], true);
        let ls = t.log_softmax_rows(a);
        let picked = t.gather_row_cols(ls, vec![1]);
        let s = t.sum_all(picked);
        t.backward(s);
        let g = t.grad(a).unwrap();
        let total: f32 = g.iter().sum();
        assert!(total.abs() < 1e-6);
        // d(-CE)/dz_y = 1 - softmax_y
        let m = 2.0f32;
        let z: Vec<f32> = vec![0.3, -1.2, 2.0];
        let denom: f32 = z.iter().map(|v| (v - m).exp()).sum();
        let p1 = (z[1] - m).exp() / denom;
        assert!((g[[0, 1]] - (1.0 - p1)).abs() < 1e-6);
    }

    #[test]
    fn row_normalize_grad_is_tangent() {
        let mut t = Tape::new();
        let a = t.leaf(array![[3.0, 4.0]], true);
        let n = t.row_normalize(a);
        let picked = t.gather_row_cols(n, vec![0]);
        let s = t.sum_all(picked);
        t.backward(s);
        let g = t.grad(a).unwrap();
        // Gradient of y0 = x0/||x|| at (3,4): ((16, -12))/125
        assert!((g[[0, 0]] - 16.0 / 125.0).abs() < 1e-6);
        assert!((g[[0, 1]] + 12.0 / 125.0).abs() < 1e-6);
    }

    #[test]
    fn dlr_values_and_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(array![[3.0, 2.0, 1.0], [3.0, 2.0, 1.0]], true);
        let d = t.dlr_rows(a, vec![0, 2]).unwrap();
        assert!((t.value(d)[[0, 0]] - (-0.5)).abs() < 1e-6);
        assert!((t.value(d)[[1, 0]] - 1.0).abs() < 1e-6);
        let s = t.sum_all(d);
        t.backward(s);
        assert!(t.grad(a).is_some());
    }

    #[test]
    fn dlr_needs_three_classes() {
        let mut t = Tape::new();
        let a = t.leaf(array![[3.0, 2.0]], true);
        assert!(t.dlr_rows(a, vec![0]).is_err());
    }

    #[test]
    fn dlr_zero_denominator_is_degenerate() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0, 1.0, 1.0]], true);
        assert!(matches!(
            t.dlr_rows(a, vec![0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cw_margin_values() {
        let mut t = Tape::new();
        let a = t.leaf(array![[3.0, 2.0, 1.0], [0.0, 4.0, 1.0]], false);
        let c = t.cw_rows(a, vec![0, 0]);
        assert_eq!(t.value(c)[[0, 0]], -1.0);
        assert_eq!(t.value(c)[[1, 0]], 4.0);
    }

    #[test]
    fn constant_subgraphs_get_no_grad() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0, 2.0]], true);
        let b = t.constant(array![[5.0, -1.0]]);
        let y = t.add(a, b);
        let s = t.sum_all(y);
        t.backward(s);
        assert!(t.grad(b).is_none());
        assert!(t.grad(a).is_some());
    }

    #[test]
    fn mean_pool_segments_forward_and_backward() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], true);
        let p = t.mean_pool_segments(a, vec![(0, 2), (2, 1)]);
        assert_eq!(t.value(p)[[0, 0]], 2.0);
        assert_eq!(t.value(p)[[1, 1]], 6.0);
        let s = t.sum_all(p);
        t.backward(s);
        let g = t.grad(a).unwrap();
        assert_eq!(g[[0, 0]], 0.5);
        assert_eq!(g[[2, 0]], 1.0);
    }
}
