use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer with bias-corrected first and second moments.
#[derive(Clone, Debug)]
pub struct Adam {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(shapes: &[&Tensor]) -> Self {
        Adam {
            step: 0,
            m: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr`.
    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam",
                &[params.len(), grads.len()],
                &[self.m.len()],
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (i, p) in params.into_iter().enumerate() {
            let g = &grads[i];
            if g.shape() != p.shape() {
                return Err(Error::shape("adam", p.shape(), g.shape()));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * gj;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::vector(vec![3.0, -0.01, 0.0]).unwrap();
        let mut adam = Adam::new(&[&p]);
        adam.update(vec![&mut p], &[g], 0.1).unwrap();
        // m̂ = g and v̂ = g², so the step is lr·g/(|g|+ε).
        let expect = [
            1.0 - 0.1 * 3.0 / (3.0 + 1e-8),
            -2.0 + 0.1 * 0.01 / (0.01 + 1e-8),
            0.5,
        ];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Tensor::vector(vec![4.0, -3.0]).unwrap();
        let mut adam = Adam::new(&[&p]);
        for _ in 0..2000 {
            let g = p.scale(2.0);
            adam.update(vec![&mut p], &[g], 0.05).unwrap();
        }
        assert!(p.l2_norm() < 1e-3, "{:?}", p.data());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::vector(vec![1.0]).unwrap();
        let mut adam = Adam::new(&[&p]);
        let g = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            adam.update(vec![&mut p], &[g], 0.1),
            Err(Error::Shape { .. })
        ));
    }
}
