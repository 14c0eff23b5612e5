use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares an analytic gradient against central differences.
///
/// `f` returns the function value and its analytic gradient at a point. The
/// error at each coordinate is `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    grad_check_detailed(f, point, step).map(|r| r.max_rel_error)
}

pub fn grad_check_detailed<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let (v0, analytic) = f(point);
    if !v0.is_finite() {
        return Err(Error::NonFinite {
            coordinate: 0,
            what: format!("function value {v0} at the base point"),
        });
    }
    if analytic.shape() != point.shape() {
        return Err(Error::Shape(format!(
            "gradient shape {:?} != point shape {:?}",
            analytic.shape(),
            point.shape()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = point.clone();
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let (fp, _) = f(&probe);
        probe.data_mut()[i] = orig - step;
        let (fm, _) = f(&probe);
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite {
                coordinate: i,
                what: format!("perturbed values {fp}, {fm}"),
            });
        }
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / numeric.abs().max(1.0);
        if i == 0 || err > report.max_rel_error {
            report = GradCheckReport {
                max_rel_error: err,
                worst_coordinate: i,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(report)
}
