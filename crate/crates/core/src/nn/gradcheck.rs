use super::{GradFault, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of
    /// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±h perturbation crossed a ReLU or max-pool boundary.
    pub skipped: usize,
    /// `(input, coordinate)` of the worst error.
    pub worst: Option<(usize, usize)>,
    pub passed: bool,
}

/// Compare reverse-mode gradients of the scalar function `f` at `point`
/// against central differences with step `h`.
pub fn gradient_check<F>(f: F, point: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check(f, point, h, tol, None)
}

/// As [`gradient_check`], with one op's backward pass deliberately scaled.
pub fn gradient_check_with_fault<F>(f: F, point: &[Tensor], h: f64, tol: f64, fault: GradFault) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    check(f, point, h, tol, Some(fault))
}

fn evaluate<F>(f: &F, point: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::InvalidArgument(format!("function must be scalar, got shape {:?}", v.shape())));
    }
    Ok((v.item(), tape.branch_signature()))
}

fn check<F>(f: F, point: &[Tensor], h: f64, tol: f64, fault: Option<GradFault>) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = match fault {
        Some(fault) => Tape::with_fault(fault),
        None => Tape::new(),
    };
    let vars: Vec<Var> = point.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base_branch = tape.branch_signature();
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped: 0, worst: None, passed: false };
    let mut probe = point.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("every param leaf has a gradient");
        for i in 0..point[k].len() {
            let x = point[k].data()[i];
            probe[k].data_mut()[i] = x + h;
            let (fp, bp) = evaluate(&f, &probe)?;
            probe[k].data_mut()[i] = x - h;
            let (fm, bm) = evaluate(&f, &probe)?;
            probe[k].data_mut()[i] = x;
            if bp != base_branch || bm != base_branch {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((k, i));
            }
        }
    }
    report.passed = report.checked > 0 && report.max_rel_error <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OpKind;

    fn square(tape: &mut Tape, v: &[Var]) -> Result<Var> {
        let sq = tape.mul(v[0], v[0])?;
        Ok(tape.sum(sq))
    }

    #[test]
    fn square_at_three() {
        let r = gradient_check(square, &[Tensor::scalar(3.0)], 1e-6, 1e-9).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn doubled_gradient_is_flagged() {
        let fault = GradFault { op: OpKind::Mul, factor: 2.0 };
        let r = gradient_check_with_fault(square, &[Tensor::scalar(3.0)], 1e-6, 1e-6, fault).unwrap();
        assert!(!r.passed);
        assert!((r.max_rel_error - 0.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn kinks_are_skipped() {
        let relu_sum = |tape: &mut Tape, v: &[Var]| -> Result<Var> {
            let r = tape.relu(v[0]);
            Ok(tape.sum(r))
        };
        let r = gradient_check(relu_sum, &[Tensor::vector(vec![1e-7, 0.5, -0.5])], 1e-6, 1e-6).unwrap();
        assert_eq!((r.checked, r.skipped), (2, 1));
        assert!(r.passed);
    }
}
