//! Forward-mode automatic differentiation on dual numbers.
//!
//! First derivatives propagate a single tangent component alongside each
//! value; second and third derivatives come from nesting `Dual<Dual<..>>`.
//! Everything is exact to machine precision — no finite-difference
//! truncation error enters the metric, the Christoffel symbols or the
//! Eikonal residual.
//!
//! The engine differentiates with respect to *coordinates* only. Network
//! parameter gradients are handled by analytic backpropagation in
//! [`crate::network`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

/// Scalar arithmetic shared by `f64` and nested dual numbers.
///
/// Smooth maps are written once, generically over `T: Scalar`, and can then
/// be evaluated on plain floats or on dual numbers of any nesting depth.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn from_f64(c: f64) -> Self;
    /// Primal value with all tangent components stripped.
    fn value(&self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn acos(self) -> Self;

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            _ if n < 0 => Self::one() / self.powi(-n),
            _ => {
                let mut acc = self;
                for _ in 1..n {
                    acc = acc * self;
                }
                acc
            }
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn acos(self) -> Self {
        f64::acos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Dual number `val + dot·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T: Scalar> {
    pub val: T,
    pub dot: T,
}

impl<T: Scalar> Dual<T> {
    #[inline]
    pub fn new(val: T, dot: T) -> Self {
        Dual { val, dot }
    }

    /// Constant: zero tangent.
    #[inline]
    pub fn constant(val: T) -> Self {
        Dual {
            val,
            dot: T::zero(),
        }
    }

    /// Seed variable: unit tangent.
    #[inline]
    pub fn variable(val: T) -> Self {
        Dual { val, dot: T::one() }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.val + rhs.val, self.dot + rhs.dot)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.val - rhs.val, self.dot - rhs.dot)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual::new(
            self.val * rhs.val,
            self.val * rhs.dot + self.dot * rhs.val,
        )
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.val;
        let val = self.val * inv;
        Dual::new(val, (self.dot - val * rhs.dot) * inv)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.val, -self.dot)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn from_f64(c: f64) -> Self {
        Dual::constant(T::from_f64(c))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val.value()
    }
    #[inline]
    fn sin(self) -> Self {
        Dual::new(self.val.sin(), self.val.cos() * self.dot)
    }
    #[inline]
    fn cos(self) -> Self {
        Dual::new(self.val.cos(), -self.val.sin() * self.dot)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        Dual::new(e, e * self.dot)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.val.ln(), self.dot / self.val)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        Dual::new(s, self.dot / (s + s))
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        Dual::new(t, (T::one() - t * t) * self.dot)
    }
    #[inline]
    fn acos(self) -> Self {
        let d = (T::one() - self.val * self.val).sqrt();
        Dual::new(self.val.acos(), -self.dot / d)
    }
}

/// First-order dual over `f64`.
pub type Dual1 = Dual<f64>;
/// Second-order nesting, for second derivatives.
pub type Dual2 = Dual<Dual<f64>>;
/// Third-order nesting, for Christoffel partials (curvature).
pub type Dual3 = Dual<Dual<Dual<f64>>>;

/// A deterministic smooth vector function of a real vector, evaluable on any
/// scalar type. This is the hook by which immersions, distance oracles and
/// network outputs enter the differentiation engine.
pub trait SmoothMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Evaluate at `x` (length `in_dim`), writing into `out` (length
    /// `out_dim`).
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]);
}

impl<M: SmoothMap + ?Sized> SmoothMap for &M {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        (**self).eval(x, out)
    }
}

/// Values and first derivatives of `f` at `x`, generic over the base scalar.
/// Returns `(values, jac)` with `jac[a][j] = ∂f_a/∂x_j`.
pub fn jacobian_generic<T: Scalar, M: SmoothMap>(
    f: &M,
    x: &[T],
) -> (Vec<T>, Vec<Vec<T>>) {
    let n = f.in_dim();
    let m = f.out_dim();
    debug_assert_eq!(x.len(), n);
    let mut values = vec![T::zero(); m];
    let mut jac = vec![vec![T::zero(); n]; m];
    let mut input: Vec<Dual<T>> = x.iter().map(|&v| Dual::constant(v)).collect();
    let mut out = vec![Dual::<T>::constant(T::zero()); m];
    for j in 0..n {
        input[j].dot = T::one();
        f.eval(&input, &mut out);
        input[j].dot = T::zero();
        for a in 0..m {
            jac[a][j] = out[a].dot;
            if j == 0 {
                values[a] = out[a].val;
            }
        }
    }
    (values, jac)
}

/// Second derivatives of `f` at `x`, generic over the base scalar.
/// Returns `tensor[a][i][j] = ∂²f_a/∂x_i∂x_j`, exactly symmetric in `(i, j)`
/// because only the upper triangle is computed and mirrored.
pub fn second_derivative_generic<T: Scalar, M: SmoothMap>(
    f: &M,
    x: &[T],
) -> Vec<Vec<Vec<T>>> {
    let n = f.in_dim();
    let m = f.out_dim();
    debug_assert_eq!(x.len(), n);
    let mut tensor = vec![vec![vec![T::zero(); n]; n]; m];
    let mut input: Vec<Dual<Dual<T>>> = x
        .iter()
        .map(|&v| Dual::constant(Dual::constant(v)))
        .collect();
    let mut out = vec![Dual::<Dual<T>>::constant(Dual::constant(T::zero())); m];
    for i in 0..n {
        for j in i..n {
            // outer tangent seeds x_i, inner tangent seeds x_j
            input[i].dot.val = T::one();
            input[j].val.dot = T::one();
            f.eval(&input, &mut out);
            input[i].dot.val = T::zero();
            input[j].val.dot = T::zero();
            for a in 0..m {
                let d2 = out[a].dot.dot;
                tensor[a][i][j] = d2;
                tensor[a][j][i] = d2;
            }
        }
    }
    tensor
}

fn check_finite_matrix(rows: &[Vec<f64>], context: &'static str) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NumericalFault {
                    context,
                    indices: vec![i, j],
                });
            }
        }
    }
    Ok(())
}

/// Jacobian `∂f_a/∂x_j` as an `out_dim × in_dim` matrix, exact to machine
/// precision.
pub fn jacobian<M: SmoothMap>(f: &M, x: &[f64]) -> Result<Array2<f64>> {
    let (values, jac) = jacobian_generic::<f64, M>(f, x);
    for (a, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericalFault {
                context: "jacobian",
                indices: vec![a, 0],
            });
        }
    }
    check_finite_matrix(&jac, "jacobian")?;
    let m = f.out_dim();
    let n = f.in_dim();
    Ok(Array2::from_shape_fn((m, n), |(a, j)| jac[a][j]))
}

/// Rank-3 tensor of second derivatives, entry `(a, i, j) = ∂²f_a/∂x_i∂x_j`,
/// exactly symmetric in the last two indices.
pub fn second_derivative_tensor<M: SmoothMap>(f: &M, x: &[f64]) -> Result<Array3<f64>> {
    let t = second_derivative_generic::<f64, M>(f, x);
    let m = f.out_dim();
    let n = f.in_dim();
    for a in 0..m {
        for i in 0..n {
            for j in 0..n {
                if !t[a][i][j].is_finite() {
                    return Err(Error::NumericalFault {
                        context: "second_derivative_tensor",
                        indices: vec![a, i, j],
                    });
                }
            }
        }
    }
    Ok(Array3::from_shape_fn((m, n, n), |(a, i, j)| t[a][i][j]))
}

/// Gradient of a scalar-valued map (`out_dim == 1`).
pub fn gradient_of_scalar<M: SmoothMap>(f: &M, x: &[f64]) -> Result<Array1<f64>> {
    assert_eq!(f.out_dim(), 1, "gradient_of_scalar requires out_dim = 1");
    let jac = jacobian(f, x)?;
    Ok(jac.row(0).to_owned())
}
