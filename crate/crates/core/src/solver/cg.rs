//! Conjugate gradient on flat complex vectors for self-adjoint PSD operators.

use num_complex::Complex64;

/// What a CG run did: alpha-steps actually taken and the final residual norm
/// relative to `‖rhs‖` (0 when rhs is zero).
#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

fn dot_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().re
}

/// Standard CG from the warm start in `x`; stops after `iters` steps or when
/// the relative residual drops to `tol`. Always leaves the best iterate in
/// `x`. `each` runs after every completed step with (steps so far, iterate).
pub(crate) fn cg_solve_cb(
    mut apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    rhs: &[Complex64],
    x: &mut [Complex64],
    iters: usize,
    tol: f64,
    mut each: impl FnMut(usize, &[Complex64]),
) -> CgOutcome {
    let n = rhs.len();
    assert_eq!(x.len(), n, "cg warm start length mismatch");
    let rhs_norm = dot_re(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        x.fill(Complex64::ZERO);
        return CgOutcome { iterations: 0, residual: 0.0 };
    }
    let mut r: Vec<Complex64> = if x.iter().all(|v| *v == Complex64::ZERO) {
        rhs.to_vec()
    } else {
        let ax = apply(x);
        rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };
    let mut p = r.clone();
    let mut rs = dot_re(&r, &r);
    let mut steps = 0;
    for _ in 0..iters {
        if rs.sqrt() <= tol * rhs_norm {
            break;
        }
        let ap = apply(&p);
        let pap = dot_re(&p, &ap);
        if !(pap > 0.0) {
            // numerically singular direction; keep the current iterate
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot_re(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        steps += 1;
        each(steps, x);
    }
    CgOutcome { iterations: steps, residual: rs.sqrt() / rhs_norm }
}

pub fn cg_solve(
    apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    rhs: &[Complex64],
    x: &mut [Complex64],
    iters: usize,
    tol: f64,
) -> CgOutcome {
    cg_solve_cb(apply, rhs, x, iters, tol, |_, _| {})
}
