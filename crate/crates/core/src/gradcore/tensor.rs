use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, FieldError, Result};

/// Dense row-major `f64` array.
///
/// Most of the crate works with 2-D tensors (`[rows, cols]`): batches of
/// states are `[batch, dim]`, weights are `[in, out]`, biases `[1, out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(shape_err(
                "new",
                format!("zero-sized dimension in {shape:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(
                "new",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![v],
        }
    }

    /// A `[1, n]` row vector.
    pub fn row(values: &[f64]) -> Self {
        Tensor {
            shape: vec![1, values.len().max(1)],
            data: if values.is_empty() {
                vec![0.0]
            } else {
                values.to_vec()
            },
        }
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Tensor::new(vec![n], values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(invalid("from_rows: no rows"));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(shape_err("from_rows", "ragged rows"));
        }
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Tensor::new(vec![r, c], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    /// Selects rows by index, producing a `[idx.len(), cols]` tensor.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= self.rows() {
                return Err(FieldError::OutOfRange {
                    index: i,
                    limit: self.rows(),
                });
            }
            data.extend_from_slice(self.row_slice(i));
        }
        Tensor::new(vec![idx.len(), c], data)
    }

    pub fn stack_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| invalid("stack_rows: empty"))?;
        let c = first.cols();
        let mut data = Vec::new();
        let mut r = 0;
        for p in parts {
            if p.cols() != c {
                return Err(shape_err("stack_rows", "column mismatch"));
            }
            r += p.rows();
            data.extend_from_slice(&p.data);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(self, op: &'static str) -> Result<Tensor> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(FieldError::NonFinite { op })
        }
    }

    fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(())
    }

    pub fn zip_map(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(shape_err(
                op,
                format!("expected 2-D tensor, got {:?}", self.shape),
            ));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self x other^T`: `[m,k] x [n,k]^T -> [m,n]`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul_nt")?;
        let (n, k2) = other.dims2("matmul_nt")?;
        if k != k2 {
            return Err(shape_err("matmul_nt", format!("[{m}x{k}] x [{n}x{k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self^T x other`: `[k,m]^T x [k,n] -> [m,n]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = self.dims2("matmul_tn")?;
        let (k2, n) = other.dims2("matmul_tn")?;
        if k != k2 {
            return Err(shape_err("matmul_tn", format!("[{k}x{m}]^T x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &other.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Adds a `[1,n]` row to every row of a `[m,n]` tensor.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2("add_row")?;
        if row.len() != n {
            return Err(shape_err(
                "add_row",
                format!("row of {} for width {n}", row.len()),
            ));
        }
        let mut out = self.data.clone();
        for i in 0..m {
            for (o, r) in out[i * n..(i + 1) * n].iter_mut().zip(&row.data) {
                *o += r;
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Column sums of a `[m,n]` tensor as `[1,n]`.
    pub fn sum_cols(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("sum_cols")?;
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, v) in out.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                *o += v;
            }
        }
        Tensor::new(vec![1, n], out)
    }

    /// Row sums of a `[m,n]` tensor as `[m,1]`.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("sum_rows")?;
        let out = (0..m)
            .map(|i| self.data[i * n..(i + 1) * n].iter().sum())
            .collect();
        Tensor::new(vec![m, 1], out)
    }

    /// Repeats a `[m,1]` column `n` times.
    pub fn broadcast_cols(&self, n: usize) -> Result<Tensor> {
        let (m, one) = self.dims2("broadcast_cols")?;
        if one != 1 {
            return Err(shape_err(
                "broadcast_cols",
                format!("expected [m,1], got {:?}", self.shape),
            ));
        }
        let mut out = Vec::with_capacity(m * n);
        for &v in &self.data {
            out.extend(std::iter::repeat_n(v, n));
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn concat_cols(&self, other: &Tensor) -> Result<Tensor> {
        let (m, a) = self.dims2("concat_cols")?;
        let (m2, b) = other.dims2("concat_cols")?;
        if m != m2 {
            return Err(shape_err("concat_cols", format!("{m} rows vs {m2} rows")));
        }
        let mut out = Vec::with_capacity(m * (a + b));
        for i in 0..m {
            out.extend_from_slice(&self.data[i * a..(i + 1) * a]);
            out.extend_from_slice(&other.data[i * b..(i + 1) * b]);
        }
        Tensor::new(vec![m, a + b], out)
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.dims2("slice_cols")?;
        if start >= end || end > n {
            return Err(shape_err(
                "slice_cols",
                format!("range {start}..{end} of width {n}"),
            ));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&self.data[i * n + start..i * n + end]);
        }
        Tensor::new(vec![m, w], out)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("log_softmax")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            for (o, v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn softmax(&self) -> Result<Tensor> {
        Ok(self.log_softmax()?.map(f64::exp))
    }

    /// Periodic neighbourhood gather: `[b, n] -> [b*n, 2r+1]` where output row
    /// `(s, i)` holds `u[s, i-r ..= i+r]` with wrap-around.
    pub fn neighbors(&self, radius: usize) -> Result<Tensor> {
        let (b, n) = self.dims2("neighbors")?;
        let w = 2 * radius + 1;
        let mut out = Vec::with_capacity(b * n * w);
        for s in 0..b {
            let row = &self.data[s * n..(s + 1) * n];
            for i in 0..n {
                for j in 0..w {
                    let idx = (i + n * w + j - radius) % n;
                    out.push(row[idx]);
                }
            }
        }
        Tensor::new(vec![b * n, w], out)
    }

    /// Adjoint of [`Tensor::neighbors`].
    pub(crate) fn neighbors_adjoint(
        g: &Tensor,
        b: usize,
        n: usize,
        radius: usize,
    ) -> Result<Tensor> {
        let w = 2 * radius + 1;
        let mut out = vec![0.0; b * n];
        for s in 0..b {
            for i in 0..n {
                for j in 0..w {
                    let idx = (i + n * w + j - radius) % n;
                    out[s * n + idx] += g.data[(s * n + i) * w + j];
                }
            }
        }
        Tensor::new(vec![b, n], out)
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        let c = self.cols();
        (0..self.rows())
            .map(|i| {
                let row = &self.data[i * c..(i + 1) * c];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}
