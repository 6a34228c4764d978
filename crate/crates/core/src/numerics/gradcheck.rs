//! Central finite-difference verification of analytic gradients.

use super::Parameterized;

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterCheck {
    pub name: String,
    /// `max|analytic − numeric| / (max|analytic| + max|numeric| + 1e-12)` over the tensor.
    pub relative_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub checks: Vec<ParameterCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ParameterCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().map(|c| c.relative_error).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients against central differences for every
/// trainable parameter of `model`.
///
/// `objective` must run the forward pass, accumulate gradients into the
/// model's parameters and return the scalar loss. Gradients are zeroed before
/// each call. Non-trainable parameters are skipped.
pub fn gradient_check<M, E>(
    model: &mut M,
    mut objective: impl FnMut(&mut M) -> Result<f64, E>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, E>
where
    M: Parameterized + ?Sized,
{
    model.zero_grad();
    objective(model)?;
    let analytic: Vec<Option<Vec<f64>>> = model
        .parameters()
        .iter()
        .map(|p| p.trainable.then(|| p.grad.data().to_vec()))
        .collect();

    let mut checks = Vec::new();
    for (k, analytic) in analytic.into_iter().enumerate() {
        let Some(analytic) = analytic else { continue };
        let mut numeric = vec![0.0; analytic.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let original = model.parameters()[k].value.data()[e];

            model.parameters_mut()[k].value.data_mut()[e] = original + step;
            model.zero_grad();
            let plus = objective(model)?;

            model.parameters_mut()[k].value.data_mut()[e] = original - step;
            model.zero_grad();
            let minus = objective(model)?;

            model.parameters_mut()[k].value.data_mut()[e] = original;
            *slot = (plus - minus) / (2.0 * step);
        }

        let max_diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        let max_a = analytic.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let max_n = numeric.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let relative_error = max_diff / (max_a + max_n + 1e-12);
        checks.push(ParameterCheck {
            name: model.parameters()[k].name.clone(),
            relative_error,
            max_abs_analytic: max_a,
            max_abs_numeric: max_n,
            passed: relative_error < tolerance,
        });
    }
    model.zero_grad();

    Ok(GradCheckReport {
        tolerance,
        step,
        checks,
    })
}
