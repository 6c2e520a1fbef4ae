use super::Matrix;
use crate::error::{Error, Result};

/// A collection of named trainable tensors. Gradients use the same type as
/// the parameters they belong to.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
    fn tensor_names(&self) -> Vec<String>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }
}

impl ParamSet for Matrix {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![self]
    }

    fn tensor_names(&self) -> Vec<String> {
        vec!["value".into()]
    }
}

impl ParamSet for Vec<Matrix> {
    fn tensors(&self) -> Vec<&Matrix> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.iter_mut().collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (0..self.len()).map(|i| format!("t{i}")).collect()
    }
}

pub(crate) fn check_same_shapes<P: ParamSet>(a: &P, b: &P) -> Result<()> {
    let (ta, tb) = (a.tensors(), b.tensors());
    if ta.len() != tb.len() {
        return Err(Error::Shape(format!("{} tensors vs {}", ta.len(), tb.len())));
    }
    for (x, y) in ta.iter().zip(&tb) {
        if x.shape() != y.shape() {
            return Err(Error::Shape(format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
    }
    Ok(())
}
