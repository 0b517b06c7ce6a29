use std::fmt;

use crate::error::{Error, Result};
use crate::par;

/// Dense row-major `f64` array. Values are immutable once built; the tape
/// shares them behind `Rc`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a 2-d tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    lhs: vec![cols],
                    rhs: vec![r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            data,
        })
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.rank());
        let mut off = 0;
        for (i, (&ix, &ext)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < ext, "index {ix} out of range on axis {i}");
            off = off * ext + ix;
        }
        self.data[off]
    }

    /// Row `r` of a 2-d tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        assert_eq!(self.rank(), 2);
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Tensor {
        let mut data = self.data.clone();
        par::for_each_chunk_mut(&mut data, 4096, |_, c| {
            for v in c {
                *v = f(*v);
            }
        });
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn sum_all(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) element counts.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::AxisOutOfRange {
            op,
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

/// Right-aligned broadcast of two shapes; extents must agree or be 1.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every element of `out_shape`, the linear offset into a tensor of
/// `src_shape` broadcast to it.
fn broadcast_offsets(src_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - src_shape.len();
    let mut src_strides = vec![0usize; rank];
    let mut stride = 1;
    for i in (0..src_shape.len()).rev() {
        src_strides[i + pad] = if src_shape[i] == 1 { 0 } else { stride };
        stride *= src_shape[i];
    }
    let n: usize = out_shape.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= src_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    offsets
}

/// Materializes `t` broadcast to `shape`.
pub fn expand(t: &Tensor, shape: &[usize]) -> Result<Tensor> {
    match broadcast_shape(t.shape(), shape) {
        Some(s) if s == shape => {
            let offs = broadcast_offsets(t.shape(), shape);
            Ok(Tensor::from_parts(
                shape.to_vec(),
                offs.iter().map(|&o| t.data[o]).collect(),
            ))
        }
        _ => Err(Error::ShapeMismatch {
            op: "expand",
            lhs: t.shape().to_vec(),
            rhs: shape.to_vec(),
        }),
    }
}

/// Applies `f` elementwise over the broadcast of `a` and `b`.
pub(crate) fn zip_broadcast(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64 + Sync + Send,
) -> Result<Tensor> {
    if a.shape == b.shape {
        let mut data = a.data.clone();
        let bd = &b.data;
        par::for_each_chunk_mut(&mut data, 4096, |ci, c| {
            let base = ci * 4096;
            for (i, v) in c.iter_mut().enumerate() {
                *v = f(*v, bd[base + i]);
            }
        });
        return Ok(Tensor::from_parts(a.shape.clone(), data));
    }
    let shape = broadcast_shape(&a.shape, &b.shape).ok_or_else(|| Error::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    })?;
    let oa = broadcast_offsets(&a.shape, &shape);
    let ob = broadcast_offsets(&b.shape, &shape);
    let data = oa
        .iter()
        .zip(&ob)
        .map(|(&i, &j)| f(a.data[i], b.data[j]))
        .collect();
    Ok(Tensor::from_parts(shape, data))
}

/// Sums a gradient of broadcast shape back down to `shape`.
pub(crate) fn reduce_to_shape(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape == shape {
        return g.clone();
    }
    let offs = broadcast_offsets(shape, &g.shape);
    let mut out = vec![0.0; shape.iter().product()];
    for (v, &o) in g.data.iter().zip(&offs) {
        out[o] += v;
    }
    Tensor::from_parts(shape.to_vec(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Prod,
    Max,
}

pub(crate) fn reduce_axis(t: &Tensor, axis: usize, kind: ReduceKind) -> Tensor {
    let (outer, ext, inner) = split_axis(&t.shape, axis);
    let mut shape = t.shape.clone();
    shape.remove(axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let vals = (0..ext).map(|a| t.data[(o * ext + a) * inner + i]);
            out[o * inner + i] = match kind {
                ReduceKind::Sum => vals.sum(),
                ReduceKind::Prod => vals.product(),
                ReduceKind::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            };
        }
    }
    Tensor::from_parts(shape, out)
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| {
        Error::InvalidArgument("concat needs at least one part".into())
    })?;
    check_axis("concat", first.shape(), axis)?;
    for p in &parts[1..] {
        let compatible = p.rank() == first.rank()
            && p.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return Err(Error::ShapeMismatch {
                op: "concat",
                lhs: first.shape.clone(),
                rhs: p.shape.clone(),
            });
        }
    }
    let (outer, _, inner) = split_axis(&first.shape, axis);
    let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
    let mut shape = first.shape.clone();
    shape[axis] = total;
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let w = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * w..(o + 1) * w]);
        }
    }
    Ok(Tensor::from_parts(shape, data))
}

/// Gathers `indices` along `axis`.
pub fn index_select(t: &Tensor, axis: usize, indices: &[usize]) -> Result<Tensor> {
    check_axis("index_select", t.shape(), axis)?;
    let (outer, ext, inner) = split_axis(&t.shape, axis);
    if let Some(&bad) = indices.iter().find(|&&i| i >= ext) {
        return Err(Error::IndexOutOfRange {
            op: "index_select",
            index: bad,
            extent: ext,
        });
    }
    let mut shape = t.shape.clone();
    shape[axis] = indices.len();
    let mut data = vec![0.0; outer * indices.len() * inner];
    par::for_each_chunk_mut(&mut data, indices.len() * inner, |o, row| {
        for (k, &ix) in indices.iter().enumerate() {
            let src = (o * ext + ix) * inner;
            row[k * inner..(k + 1) * inner].copy_from_slice(&t.data[src..src + inner]);
        }
    });
    Ok(Tensor::from_parts(shape, data))
}

/// Adds slice `i` along `axis` into output slot `segments[i]`; the output has
/// `segment_count` slots along that axis.
pub fn segment_sum(
    t: &Tensor,
    axis: usize,
    segments: &[usize],
    segment_count: usize,
) -> Result<Tensor> {
    check_axis("segment_sum", t.shape(), axis)?;
    let (outer, ext, inner) = split_axis(&t.shape, axis);
    if segments.len() != ext {
        return Err(Error::ShapeMismatch {
            op: "segment_sum",
            lhs: t.shape.clone(),
            rhs: vec![segments.len()],
        });
    }
    if let Some(&bad) = segments.iter().find(|&&s| s >= segment_count) {
        return Err(Error::IndexOutOfRange {
            op: "segment_sum",
            index: bad,
            extent: segment_count,
        });
    }
    let mut shape = t.shape.clone();
    shape[axis] = segment_count;
    let mut data = vec![0.0; outer * segment_count * inner];
    par::for_each_chunk_mut(&mut data, segment_count * inner, |o, row| {
        for (i, &s) in segments.iter().enumerate() {
            let src = (o * ext + i) * inner;
            for j in 0..inner {
                row[s * inner + j] += t.data[src + j];
            }
        }
    });
    Ok(Tensor::from_parts(shape, data))
}

/// `c = a · b` for row-major `a` (m×k) and `b` (k×n); either side may be
/// read transposed.
pub(crate) fn matmul(
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    // (row stride, col stride) of the logical m×k and k×n operands
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let rows_per_chunk = (par::MIN_PARALLEL_LEN / (k * n).max(1)).max(16);
    par::for_each_chunk_mut(&mut c, rows_per_chunk * n, |ci, chunk| {
        let r0 = ci * rows_per_chunk;
        let rows = chunk.len() / n;
        // SAFETY: the operand pointers and strides describe in-bounds views of
        // `a` (rows r0..r0+rows) and `b`; `chunk` is an exclusive rows×n block.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a.as_ptr().offset(r0 as isize * rsa),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                0.0,
                chunk.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    });
    c
}
