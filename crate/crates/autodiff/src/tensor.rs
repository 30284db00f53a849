//! Dense row-major f64 tensors and the value-level kernels the tape records.
//!
//! Tensors are immutable after construction; clones share storage. Shapes are
//! arbitrary rank, with numpy-style trailing broadcast alignment for binary
//! ops. A shape of `[]` is a scalar with one element.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![], data: Arc::new(vec![v]) }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: Arc::new(vec![0.0; n]) }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: Arc::new(vec![v; n]) }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { shape: vec![r, c], data: Arc::new(data) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor with {} elements", self.numel());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        Tensor { shape: self.shape.clone(), data: Arc::new(data) }
    }

    /// Maximum over the last axis, keepdim. Used for detached softmax shifts.
    pub fn max_lastdim_keep(&self) -> Tensor {
        let d = *self.shape.last().expect("max over scalar");
        let rows = self.numel() / d;
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &self.data[r * d..(r + 1) * d];
            out.push(row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = 1;
        Tensor { shape, data: Arc::new(out) }
    }
}

/// Shape of `a op b` under trailing broadcast alignment, or an error.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
        };
    }
    Ok(out)
}

fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    // Row-major strides, zeroed where the dim is broadcast.
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            strides[offset + i] = acc;
        }
        acc *= shape[i];
    }
    strides
}

pub fn binary(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape == b.shape {
        let data: Vec<f64> = a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor { shape: a.shape.clone(), data: Arc::new(data) });
    }
    if b.numel() == 1 {
        let y = b.data[0];
        return Ok(a.map(|x| f(x, y)));
    }
    if a.numel() == 1 {
        let x = a.data[0];
        return Ok(b.map(|y| f(x, y)));
    }
    let out_shape = broadcast_shape(op, &a.shape, &b.shape)?;
    // Fast path: (rows, d) op trailing (d,)
    let d = *out_shape.last().unwrap_or(&1);
    if b.shape.as_slice() == [d] && a.shape == out_shape {
        let mut data = Vec::with_capacity(a.numel());
        for chunk in a.data.chunks_exact(d) {
            data.extend(chunk.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)));
        }
        return Ok(Tensor { shape: out_shape, data: Arc::new(data) });
    }
    // Fast path: (rows, d) op (rows, 1) — per-row scalar on the right.
    if a.shape == out_shape
        && b.shape.len() == out_shape.len()
        && *b.shape.last().unwrap() == 1
        && b.shape[..b.shape.len() - 1] == out_shape[..out_shape.len() - 1]
    {
        let mut data = Vec::with_capacity(a.numel());
        for (r, chunk) in a.data.chunks_exact(d).enumerate() {
            let y = b.data[r];
            data.extend(chunk.iter().map(|&x| f(x, y)));
        }
        return Ok(Tensor { shape: out_shape, data: Arc::new(data) });
    }
    // General strided walk.
    let numel: usize = out_shape.iter().product();
    let sa = broadcast_strides(&a.shape, &out_shape);
    let sb = broadcast_strides(&b.shape, &out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(f(a.data[oa], b.data[ob]));
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
        }
    }
    Ok(Tensor { shape: out_shape, data: Arc::new(data) })
}

pub fn matmul2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch { op: "matmul", lhs: a.shape.clone(), rhs: b.shape.clone() });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0f64; m * n];
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.data.as_ptr(), k as isize, 1, b.data.as_ptr(), n as isize, 1, 0.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
    Ok(Tensor { shape: vec![m, n], data: Arc::new(out) })
}

pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 3 || b.shape.len() != 3 || a.shape[0] != b.shape[0] || a.shape[2] != b.shape[1] {
        return Err(Error::ShapeMismatch { op: "bmm", lhs: a.shape.clone(), rhs: b.shape.clone() });
    }
    let (bsz, m, k, n) = (a.shape[0], a.shape[1], a.shape[2], b.shape[2]);
    let mut out = vec![0.0f64; bsz * m * n];
    for i in 0..bsz {
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.data.as_ptr().add(i * m * k), k as isize, 1,
                b.data.as_ptr().add(i * k * n), n as isize, 1,
                0.0,
                out.as_mut_ptr().add(i * m * n), n as isize, 1,
            );
        }
    }
    Ok(Tensor { shape: vec![bsz, m, n], data: Arc::new(out) })
}

pub fn permute(a: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let rank = a.shape.len();
    if axes.len() != rank {
        return Err(Error::ShapeMismatch { op: "permute", lhs: a.shape.clone(), rhs: axes.to_vec() });
    }
    let mut seen = vec![false; rank];
    for &ax in axes {
        if ax >= rank || seen[ax] {
            return Err(Error::ShapeMismatch { op: "permute", lhs: a.shape.clone(), rhs: axes.to_vec() });
        }
        seen[ax] = true;
    }
    let out_shape: Vec<usize> = axes.iter().map(|&ax| a.shape[ax]).collect();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * a.shape[i + 1];
    }
    let walk: Vec<usize> = axes.iter().map(|&ax| in_strides[ax]).collect();
    let numel = a.numel();
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..numel {
        out.push(a.data[off]);
        for axi in (0..rank).rev() {
            idx[axi] += 1;
            off += walk[axi];
            if idx[axi] < out_shape[axi] {
                break;
            }
            idx[axi] = 0;
            off -= walk[axi] * out_shape[axi];
        }
    }
    Ok(Tensor { shape: out_shape, data: Arc::new(out) })
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != a.numel() {
        return Err(Error::ShapeMismatch { op: "reshape", lhs: a.shape.clone(), rhs: shape.to_vec() });
    }
    Ok(Tensor { shape: shape.to_vec(), data: Arc::clone(&a.data) })
}

pub fn broadcast_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if a.shape.as_slice() == shape {
        return Ok(a.clone());
    }
    let check = broadcast_shape("broadcast_to", &a.shape, shape)?;
    if check != shape {
        return Err(Error::ShapeMismatch { op: "broadcast_to", lhs: a.shape.clone(), rhs: shape.to_vec() });
    }
    let numel: usize = shape.iter().product();
    if a.numel() == 1 {
        return Ok(Tensor { shape: shape.to_vec(), data: Arc::new(vec![a.data[0]; numel]) });
    }
    let sa = broadcast_strides(&a.shape, shape);
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut out = Vec::with_capacity(numel);
    for _ in 0..numel {
        out.push(a.data[oa]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * shape[ax];
        }
    }
    Ok(Tensor { shape: shape.to_vec(), data: Arc::new(out) })
}

/// Sum `a` down to `shape` (the reverse of a broadcast from `shape`).
pub fn sum_to(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if a.shape.as_slice() == shape {
        return Ok(a.clone());
    }
    let check = broadcast_shape("sum_to", shape, &a.shape)?;
    if check != a.shape {
        return Err(Error::ShapeMismatch { op: "sum_to", lhs: a.shape.clone(), rhs: shape.to_vec() });
    }
    let numel_out: usize = shape.iter().product();
    let mut out = vec![0.0f64; numel_out];
    let st = broadcast_strides(shape, &a.shape);
    let rank = a.shape.len();
    let mut idx = vec![0usize; rank];
    let mut ot = 0usize;
    for i in 0..a.numel() {
        out[ot] += a.data[i];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ot += st[ax];
            if idx[ax] < a.shape[ax] {
                break;
            }
            idx[ax] = 0;
            ot -= st[ax] * a.shape[ax];
        }
    }
    Ok(Tensor { shape: shape.to_vec(), data: Arc::new(out) })
}

/// Sum over one axis, keeping it as size 1.
pub fn sum_axis_keep(a: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= a.shape.len() {
        return Err(Error::ShapeMismatch { op: "sum_axis", lhs: a.shape.clone(), rhs: vec![axis] });
    }
    let mut shape = a.shape.clone();
    shape[axis] = 1;
    sum_to(a, &shape)
}

pub fn sum_all(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum())
}

pub fn gather_rows(a: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let rows = *a.shape.first().ok_or(Error::ShapeMismatch {
        op: "gather_rows",
        lhs: a.shape.clone(),
        rhs: vec![],
    })?;
    let row_size = a.numel() / rows.max(1);
    let mut out = Vec::with_capacity(indices.len() * row_size);
    for &i in indices {
        if i >= rows {
            return Err(Error::Config(format!("gather_rows: index {i} out of {rows} rows")));
        }
        out.extend_from_slice(&a.data[i * row_size..(i + 1) * row_size]);
    }
    let mut shape = a.shape.clone();
    shape[0] = indices.len();
    Ok(Tensor { shape, data: Arc::new(out) })
}

pub fn scatter_add_rows(a: &Tensor, indices: &[usize], n_rows: usize) -> Result<Tensor> {
    let rows = a.shape[0];
    if rows != indices.len() {
        return Err(Error::ShapeMismatch { op: "scatter_add_rows", lhs: a.shape.clone(), rhs: vec![indices.len()] });
    }
    let row_size = a.numel() / rows.max(1);
    let mut out = vec![0.0f64; n_rows * row_size];
    for (r, &i) in indices.iter().enumerate() {
        let src = &a.data[r * row_size..(r + 1) * row_size];
        let dst = &mut out[i * row_size..(i + 1) * row_size];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    let mut shape = a.shape.clone();
    shape[0] = n_rows;
    Ok(Tensor { shape, data: Arc::new(out) })
}

pub fn concat(a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
    let rank = a.shape.len();
    if b.shape.len() != rank || axis >= rank {
        return Err(Error::ShapeMismatch { op: "concat", lhs: a.shape.clone(), rhs: b.shape.clone() });
    }
    for i in 0..rank {
        if i != axis && a.shape[i] != b.shape[i] {
            return Err(Error::ShapeMismatch { op: "concat", lhs: a.shape.clone(), rhs: b.shape.clone() });
        }
    }
    let inner: usize = a.shape[axis + 1..].iter().product();
    let outer: usize = a.shape[..axis].iter().product();
    let la = a.shape[axis] * inner;
    let lb = b.shape[axis] * inner;
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    for o in 0..outer {
        out.extend_from_slice(&a.data[o * la..(o + 1) * la]);
        out.extend_from_slice(&b.data[o * lb..(o + 1) * lb]);
    }
    let mut shape = a.shape.clone();
    shape[axis] += b.shape[axis];
    Ok(Tensor { shape, data: Arc::new(out) })
}

pub fn slice_axis(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let rank = a.shape.len();
    if axis >= rank || start + len > a.shape[axis] {
        return Err(Error::ShapeMismatch { op: "slice_axis", lhs: a.shape.clone(), rhs: vec![axis, start, len] });
    }
    let inner: usize = a.shape[axis + 1..].iter().product();
    let outer: usize = a.shape[..axis].iter().product();
    let stride = a.shape[axis] * inner;
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * stride + start * inner;
        out.extend_from_slice(&a.data[base..base + len * inner]);
    }
    let mut shape = a.shape.clone();
    shape[axis] = len;
    Ok(Tensor { shape, data: Arc::new(out) })
}

pub fn pad_axis(a: &Tensor, axis: usize, before: usize, after: usize) -> Result<Tensor> {
    let rank = a.shape.len();
    if axis >= rank {
        return Err(Error::ShapeMismatch { op: "pad_axis", lhs: a.shape.clone(), rhs: vec![axis] });
    }
    let inner: usize = a.shape[axis + 1..].iter().product();
    let outer: usize = a.shape[..axis].iter().product();
    let len = a.shape[axis];
    let new_len = before + len + after;
    let mut out = vec![0.0f64; outer * new_len * inner];
    for o in 0..outer {
        let src = &a.data[o * len * inner..(o + 1) * len * inner];
        let dst_base = o * new_len * inner + before * inner;
        out[dst_base..dst_base + len * inner].copy_from_slice(src);
    }
    let mut shape = a.shape.clone();
    shape[axis] = new_len;
    Ok(Tensor { shape, data: Arc::new(out) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_binary_shapes() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![3], vec![10., 20., 30.]).unwrap();
        let c = binary("add", &a, &b, |x, y| x + y).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[11., 22., 33., 14., 25., 36.]);
    }

    #[test]
    fn broadcast_rejects_incompatible() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        assert!(binary("add", &a, &b, |x, y| x + y).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![5., 6., 7., 8.]).unwrap();
        let c = matmul2(&a, &b).unwrap();
        assert_eq!(c.data(), &[19., 22., 43., 50.]);
    }

    #[test]
    fn permute_roundtrip() {
        let a = Tensor::new(vec![2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let p = permute(&a, &[2, 0, 1]).unwrap();
        let back = permute(&p, &[1, 2, 0]).unwrap();
        assert_eq!(back.data(), a.data());
        assert_eq!(p.shape(), &[4, 2, 3]);
    }

    #[test]
    fn sum_to_reverses_broadcast() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let s = sum_to(&a, &[3]).unwrap();
        assert_eq!(s.data(), &[5., 7., 9.]);
        let s2 = sum_to(&a, &[2, 1]).unwrap();
        assert_eq!(s2.data(), &[6., 15.]);
    }

    #[test]
    fn slice_pad_inverse() {
        let a = Tensor::new(vec![2, 4], (0..8).map(|v| v as f64).collect()).unwrap();
        let s = slice_axis(&a, 1, 1, 2).unwrap();
        assert_eq!(s.data(), &[1., 2., 5., 6.]);
        let p = pad_axis(&s, 1, 1, 1).unwrap();
        assert_eq!(p.shape(), &[2, 4]);
        assert_eq!(p.data(), &[0., 1., 2., 0., 0., 5., 6., 0.]);
    }

    #[test]
    fn gather_scatter_rows() {
        let a = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let g = gather_rows(&a, &[2, 0]).unwrap();
        assert_eq!(g.data(), &[5., 6., 1., 2.]);
        let s = scatter_add_rows(&g, &[2, 0], 3).unwrap();
        assert_eq!(s.data(), &[1., 2., 0., 0., 5., 6.]);
    }
}
