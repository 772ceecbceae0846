use super::Real;

/// Dense parameter (or value) storage with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<F: Real> {
    shape: Vec<usize>,
    values: Vec<F>,
    grad: Option<Vec<F>>,
    pub requires_grad: bool,
}

impl<F: Real> ParamTensor<F> {
    pub fn new(shape: Vec<usize>, values: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "values do not match shape {shape:?}"
        );
        Self {
            shape,
            values,
            grad: None,
            requires_grad: true,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![F::zero(); n])
    }

    pub fn constant(shape: Vec<usize>, values: Vec<F>) -> Self {
        let mut t = Self::new(shape, values);
        t.requires_grad = false;
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    /// Shape as seen by the tape: vectors become a single row.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            dims => {
                let c = *dims.last().unwrap();
                (self.len() / c.max(1), c)
            }
        }
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [F] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![F::zero(); n])
    }

    pub fn set_grad(&mut self, grad: Option<&[F]>) {
        match grad {
            Some(g) => {
                assert_eq!(g.len(), self.values.len());
                self.grad_mut().copy_from_slice(g);
            }
            None => {
                if let Some(g) = self.grad.as_mut() {
                    g.iter_mut().for_each(|x| *x = F::zero());
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.set_grad(None);
    }
}
