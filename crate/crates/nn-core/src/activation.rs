use crate::scalar::Scalar;

/// Element-wise activation applied to a layer's weighted input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
    /// Identity activation, mainly for tests and exact hand oracles.
    Linear,
}

impl ActivationKind {
    #[inline]
    pub fn value<T: Scalar>(self, net: T) -> T {
        match self {
            ActivationKind::Sigmoid => T::one() / (T::one() + (-net).exp()),
            ActivationKind::Tanh => net.tanh(),
            ActivationKind::Relu => {
                if net > T::zero() {
                    net
                } else {
                    T::zero()
                }
            }
            ActivationKind::Linear => net,
        }
    }

    /// Derivative f'(net) as a function of the weighted input.
    /// Relu takes derivative 0 at net = 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, net: T) -> T {
        match self {
            ActivationKind::Sigmoid => {
                let s = self.value(net);
                s * (T::one() - s)
            }
            ActivationKind::Tanh => {
                let t = net.tanh();
                T::one() - t * t
            }
            ActivationKind::Relu => {
                if net > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Linear => T::one(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // f' must match f analytically; checked by central differences away from
    // relu's kink.
    #[test]
    fn derivative_matches_finite_difference() {
        let kinds = [
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::Relu,
            ActivationKind::Linear,
        ];
        let h = 1e-6_f64;
        for kind in kinds {
            for i in 0..41 {
                let x = -2.0 + 0.1 * i as f64;
                if kind == ActivationKind::Relu && x.abs() < 1e-3 {
                    continue;
                }
                let fd = (kind.value(x + h) - kind.value(x - h)) / (2.0 * h);
                let an = kind.derivative(x);
                assert!(
                    (fd - an).abs() <= 1e-7 * fd.abs().max(an.abs()).max(1.0),
                    "{kind:?} at {x}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn works_for_f32_too() {
        let s: f32 = ActivationKind::Sigmoid.value(0.0);
        assert!((s - 0.5).abs() < 1e-7);
    }
}
