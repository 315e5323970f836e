use crate::error::Result;
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes the gradient where `x > 0`; the derivative at exactly zero is zero.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let mask = relu_mask(x);
    grad_out.mul(&mask)
}

fn relu_mask(x: &Tensor) -> Tensor {
    let mut m = x.clone();
    m.data_mut()
        .iter_mut()
        .for_each(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn kink_has_zero_derivative() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let g = Tensor::from_vec(&[3], vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn shape_mismatch() {
        let x = Tensor::zeros_of(&[3]).unwrap();
        assert!(relu_backward(&x, &Tensor::zeros_of(&[4]).unwrap()).is_err());
    }
}
