use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate, if any coordinate was compared.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates left out because the perturbation crossed a kink.
    pub skipped: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error < tolerance
    }
}

/// Compares `analytic` (the gradient of the scalar function `f` at `input`)
/// with the central difference `(f(x + eps) - f(x - eps)) / 2 eps` on every
/// coordinate.
///
/// `crosses_kink(plus, minus)` may flag coordinates whose two perturbed
/// inputs fall on different sides of a non-differentiable point; those are
/// skipped and counted. The relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, floor)` with `floor = 1e-6 * max(1, |analytic|_inf)`
/// so that coordinates with a vanishing gradient are judged on an absolute scale.
pub fn finite_diff_check<T, F, K>(f: F, input: &Tensor<T>, analytic: &Tensor<T>, eps: f64, crosses_kink: K) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<f64>,
    K: Fn(&Tensor<T>, &Tensor<T>) -> Result<bool>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {eps}")));
    }
    input.expect_same_shape(analytic, "finite_diff_check")?;
    let floor = 1e-6 * analytic.max_abs().max(1.0);
    let mut result = GradCheck {
        max_relative_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped: 0,
    };
    for i in 0..input.len() {
        let x = input.get(i).wide();
        let plus = input.with_value(i, T::of(x + eps));
        let minus = input.with_value(i, T::of(x - eps));
        if crosses_kink(&plus, &minus)? {
            result.skipped += 1;
            continue;
        }
        // Divide by the step actually taken after rounding to T.
        let step = plus.get(i).wide() - minus.get(i).wide();
        let numeric = (f(&plus)? - f(&minus)?) / step;
        let a = analytic.get(i).wide();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        result.checked += 1;
        if result.worst_index.is_none() || err > result.max_relative_error {
            result.max_relative_error = err;
            result.worst_index = Some(i);
        }
    }
    Ok(result)
}

/// Kink predicate for smooth functions.
pub fn smooth<T>(_: &Tensor<T>, _: &Tensor<T>) -> Result<bool> {
    Ok(false)
}
