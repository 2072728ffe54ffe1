//! Fixed-step explicit integrators on flat state vectors.

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Forward Euler; identical to discrete gradient descent with learning rate `dt`.
    #[default]
    Euler,
    /// Classical fourth-order Runge–Kutta.
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(crate::error::invalid(format!("unknown integration method `{other}`"))),
        }
    }
}

/// Reusable scratch space for one integration.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    method: Method,
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub fn new(method: Method, dim: usize) -> Self {
        let (k, extra) = match method {
            Method::Euler => (dim, 0),
            Method::Rk4 => (dim, dim),
        };
        Stepper {
            method,
            k1: vec![T::zero(); k],
            k2: vec![T::zero(); extra],
            k3: vec![T::zero(); extra],
            k4: vec![T::zero(); extra],
            tmp: vec![T::zero(); extra],
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Advances `y` by `dt` under `y' = f(y)`.
    pub fn step(&mut self, y: &mut [T], dt: T, f: &mut impl FnMut(&[T], &mut [T])) {
        match self.method {
            Method::Euler => {
                f(y, &mut self.k1);
                for (yi, &k) in y.iter_mut().zip(&self.k1) {
                    *yi += dt * k;
                }
            }
            Method::Rk4 => {
                let half = dt * T::of(0.5);
                f(y, &mut self.k1);
                for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
                    *t = yi + half * k;
                }
                f(&self.tmp, &mut self.k2);
                for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
                    *t = yi + half * k;
                }
                f(&self.tmp, &mut self.k3);
                for ((t, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
                    *t = yi + dt * k;
                }
                f(&self.tmp, &mut self.k4);
                let sixth = dt / T::of(6.0);
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += sixth * (self.k1[i] + T::of(2.0) * (self.k2[i] + self.k3[i]) + self.k4[i]);
                }
            }
        }
    }
}
