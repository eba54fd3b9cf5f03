use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

/// Dense row-major tensor with broadcastable dimensions.
///
/// A dimension of extent 1 is read as if it were repeated along that axis, so
/// a `[1, N+1, 1]` table answers every `(o, i, j)` query with its age entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Copy> Tensor<T> {
    pub fn filled(dims: &[usize], value: T) -> Self {
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Option<Self> {
        if dims.iter().product::<usize>() != data.len() {
            return None;
        }
        Some(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for axis in (0..dims.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (axis, &k) in idx.iter().enumerate() {
            let extent = self.dims[axis];
            let k = if extent == 1 { 0 } else { k };
            debug_assert!(k < extent, "index {k} out of range {extent}");
            off = off * extent + k;
        }
        off
    }

    /// Broadcasting read.
    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// True when every dimension either equals `full` or is a broadcast 1.
    pub fn broadcasts_to(&self, full: &[usize]) -> bool {
        self.dims.len() == full.len() && self.dims.iter().zip(full).all(|(&d, &f)| d == f || d == 1)
    }

    /// Materialize broadcast dimensions. Caller checks [`Self::broadcasts_to`].
    pub fn expand(&self, full: &[usize]) -> Self {
        if self.dims == full {
            return self.clone();
        }
        Self::from_fn(full, |idx| self.get(idx))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Position of the first element matching `pred`, as a multi-index.
    pub fn find(&self, pred: impl Fn(T) -> bool) -> Option<Vec<usize>> {
        let flat = self.data.iter().position(|&x| pred(x))?;
        let mut idx = vec![0; self.dims.len()];
        let mut rest = flat;
        for axis in (0..self.dims.len()).rev() {
            idx[axis] = rest % self.dims[axis];
            rest /= self.dims[axis];
        }
        Some(idx)
    }
}

impl<T> Index<[usize; 3]> for Tensor<T> {
    type Output = T;
    fn index(&self, [a, b, c]: [usize; 3]) -> &T {
        &self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }
}

impl<T> IndexMut<[usize; 3]> for Tensor<T> {
    fn index_mut(&mut self, [a, b, c]: [usize; 3]) -> &mut T {
        &mut self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }
}

impl<T> Index<[usize; 2]> for Tensor<T> {
    type Output = T;
    fn index(&self, [a, b]: [usize; 2]) -> &T {
        &self.data[a * self.dims[1] + b]
    }
}

impl<T> IndexMut<[usize; 2]> for Tensor<T> {
    fn index_mut(&mut self, [a, b]: [usize; 2]) -> &mut T {
        &mut self.data[a * self.dims[1] + b]
    }
}

impl<T> Index<usize> for Tensor<T> {
    type Output = T;
    fn index(&self, a: usize) -> &T {
        &self.data[a]
    }
}

impl<T> IndexMut<usize> for Tensor<T> {
    fn index_mut(&mut self, a: usize) -> &mut T {
        &mut self.data[a]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_read_and_expand() {
        let by_age = Tensor::from_vec(&[1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(by_age.get(&[4, 2, 7]), 3.0);
        assert!(by_age.broadcasts_to(&[2, 3, 4]));
        assert!(!by_age.broadcasts_to(&[2, 4, 4]));
        let full = by_age.expand(&[2, 3, 4]);
        assert_eq!(full.dims(), &[2, 3, 4]);
        assert_eq!(full[[1, 1, 3]], 2.0);
        assert_eq!(full.get(&[1, 1, 3]), by_age.get(&[1, 1, 3]));
    }

    #[test]
    fn find_returns_multi_index() {
        let mut t = Tensor::filled(&[2, 3, 4], 0i64);
        t[[1, 2, 0]] = -1;
        assert_eq!(t.find(|x| x < 0), Some(vec![1, 2, 0]));
    }
}
