use crate::error::{Error, Result};
use crate::numeric::params::{Gradient, ParamVector};
use crate::numeric::tape::{Tape, Var};

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_HVP_STEP: f64 = 1e-4;

/// A scalar loss built on a fresh tape from the tape's bound parameters.
pub trait Objective {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var>;
}

impl<F> Objective for F
where
    F: for<'t> Fn(&mut Tape<'t>) -> Result<Var>,
{
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        self(tape)
    }
}

/// Forward evaluation only.
pub fn evaluate<O: Objective + ?Sized>(loss: &O, params: &ParamVector) -> Result<f64> {
    let mut tape = Tape::new(params);
    let out = loss.build(&mut tape)?;
    tape.finite_scalar(out)
}

/// Loss value and exact reverse-mode gradient.
pub fn value_and_grad<O: Objective + ?Sized>(
    loss: &O,
    params: &ParamVector,
) -> Result<(f64, Gradient)> {
    let mut tape = Tape::new(params);
    let out = loss.build(&mut tape)?;
    let value = tape.finite_scalar(out)?;
    Ok((value, tape.backward(out)))
}

/// Central-difference gradient, one coordinate at a time.
pub fn finite_diff_grad<O: Objective + ?Sized>(
    loss: &O,
    params: &ParamVector,
    h: f64,
) -> Result<Gradient> {
    central_difference(params, |p| evaluate(loss, p), h)
}

/// Central-difference gradient of an arbitrary scalar function of the
/// parameters.
pub fn central_difference<F>(params: &ParamVector, mut f: F, h: f64) -> Result<Gradient>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = params.clone();
    let mut grad = Gradient::zeros(params.layout().clone());
    for i in 0..params.len() {
        let orig = params.values()[i];
        probe.values_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.values_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.values_mut()[i] = orig;
        grad.values_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `H·v` by central differences of reverse-mode gradients along `v/‖v‖`.
pub fn hessian_vector_product<O: Objective + ?Sized>(
    loss: &O,
    params: &ParamVector,
    v: &Gradient,
    h: f64,
) -> Result<Gradient> {
    assert!(h > 0.0, "finite difference step must be positive");
    if !params.same_layout(v.layout()) {
        return Err(Error::LayoutMismatch);
    }
    let len = v.norm();
    if len == 0.0 || !len.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    let unit = v.scaled(1.0 / len);
    let (_, g_plus) = value_and_grad(loss, &params.add_scaled(&unit, h)?)?;
    let (_, g_minus) = value_and_grad(loss, &params.add_scaled(&unit, -h)?)?;
    Ok(g_plus.add_scaled(&g_minus, -1.0)?.scaled(len / (2.0 * h)))
}

/// `max_i |a_i − b_i| / (1 + |a_i|)`.
pub fn max_relative_error(reference: &[f64], other: &[f64]) -> f64 {
    reference
        .iter()
        .zip(other)
        .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::matrix::Matrix;
    use crate::numeric::params::Layout;

    fn theta(values: Vec<f64>) -> ParamVector {
        let layout = Layout::new().push("theta", 1, values.len()).into_shared();
        ParamVector::from_values(layout, values).unwrap()
    }

    fn half_norm_sq(tape: &mut Tape<'_>) -> Result<Var> {
        let t = tape.param("theta")?;
        let sq = tape.square(t);
        let s = tape.sum(sq);
        Ok(tape.scale(s, 0.5))
    }

    fn sum_loss(tape: &mut Tape<'_>) -> Result<Var> {
        let t = tape.param("theta")?;
        Ok(tape.sum(t))
    }

    #[test]
    fn quadratic_value_and_grad() {
        let (v, g) = value_and_grad(&half_norm_sq, &theta(vec![1.0, 2.0])).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(g.values(), &[1.0, 2.0]);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let (_, g) = value_and_grad(&sum_loss, &theta(vec![0.3, -4.0, 7.0, 1e3])).unwrap();
        assert_eq!(g.values(), &[1.0; 4]);
    }

    #[test]
    fn finite_difference_on_quadratic() {
        let g = finite_diff_grad(&half_norm_sq, &theta(vec![1.0, 2.0]), 1e-5).unwrap();
        assert!((g.values()[0] - 1.0).abs() < 1e-9);
        assert!((g.values()[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_of_constant_is_zero() {
        let constant =
            |tape: &mut Tape<'_>| -> Result<Var> { Ok(tape.constant(Matrix::scalar(3.0))) };
        let g = finite_diff_grad(&constant, &theta(vec![1.0, 2.0, 3.0]), 1e-5).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hvp_identity_hessian() {
        let p = theta(vec![0.2, -0.7]);
        let v = Gradient::from_values(p.layout().clone(), vec![3.0, 4.0]).unwrap();
        let hv = hessian_vector_product(&half_norm_sq, &p, &v, 1e-4).unwrap();
        assert!((hv.values()[0] - 3.0).abs() < 1e-8);
        assert!((hv.values()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn hvp_of_linear_loss_is_zero() {
        let p = theta(vec![0.2, -0.7, 5.0]);
        let v = Gradient::from_values(p.layout().clone(), vec![1.0, -2.0, 0.5]).unwrap();
        let hv = hessian_vector_product(&sum_loss, &p, &v, 1e-4).unwrap();
        assert!(hv.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn hvp_rejects_zero_direction() {
        let p = theta(vec![1.0, 1.0]);
        let v = Gradient::zeros(p.layout().clone());
        assert!(matches!(
            hessian_vector_product(&half_norm_sq, &p, &v, 1e-4),
            Err(Error::DegenerateDirection)
        ));
    }

    #[test]
    fn non_finite_loss_surfaces_through_value_and_grad() {
        let bad = |tape: &mut Tape<'_>| -> Result<Var> {
            let t = tape.param("theta")?;
            let l = tape.log(t);
            Ok(tape.sum(l))
        };
        assert!(matches!(
            value_and_grad(&bad, &theta(vec![-1.0])),
            Err(Error::NonFiniteLoss { op: "log", .. })
        ));
        assert!(matches!(
            finite_diff_grad(&bad, &theta(vec![-1.0]), 1e-5),
            Err(Error::NonFiniteLoss { .. })
        ));
    }
}
