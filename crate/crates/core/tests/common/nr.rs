//! Newton-Raphson power flow on the bus admittance matrix, rectangular
//! coordinates. Independent of the sweep implementation: it shares only the
//! network data.

use gridvolt::network::NetworkModel;
use gridvolt::powerflow::InjectionSet;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub struct NrResult {
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
}

/// Solves `V_j·conj(I_j) = S_j` for all non-slack buses. A series source
/// `δ` on branch `b` (parent → child) enters as `I_b = (V_p − V_c − δ)/z`.
pub fn newton_raphson(model: &NetworkModel, inj: &InjectionSet, tap: i32, tol: f64) -> Option<NrResult> {
    let n = model.n_buses();
    let source = model.nominal_source();
    let z = model.branch_impedances(&source);
    let tap_branch = model.transformer().map(|t| t.branch);
    let delta = model.tap_step() * f64::from(tap);
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    // Constant current terms from the series source.
    let mut c = vec![Complex64::new(0.0, 0.0); n];
    for (b, br) in model.branches().iter().enumerate() {
        let (p, ch) = (br.from, br.to);
        if z[b].norm() == 0.0 {
            return None;
        }
        let yb = 1.0 / z[b];
        y[p][p] += yb;
        y[ch][ch] += yb;
        y[p][ch] -= yb;
        y[ch][p] -= yb;
        if Some(b) == tap_branch {
            c[p] -= yb * delta;
            c[ch] += yb * delta;
        }
    }
    let m = n - 1;
    let mut v = vec![source.v_source; n];
    for it in 0..50 {
        let current: Vec<Complex64> =
            (0..n).map(|j| (0..n).map(|k| y[j][k] * v[k]).sum::<Complex64>() + c[j]).collect();
        let mut f = DVector::zeros(2 * m);
        let mut worst: f64 = 0.0;
        for j in 1..n {
            let mis = v[j] * current[j].conj() - inj.power(j);
            f[2 * (j - 1)] = mis.re;
            f[2 * (j - 1) + 1] = mis.im;
            worst = worst.max(mis.norm());
        }
        if worst < tol {
            return Some(NrResult { voltages: v, iterations: it });
        }
        let i = Complex64::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for j in 1..n {
            for k in 1..n {
                let mut dx = v[j] * y[j][k].conj();
                let mut dy = -i * v[j] * y[j][k].conj();
                if j == k {
                    dx += current[j].conj();
                    dy += i * current[j].conj();
                }
                let (r, col) = (2 * (j - 1), 2 * (k - 1));
                jac[(r, col)] = dx.re;
                jac[(r + 1, col)] = dx.im;
                jac[(r, col + 1)] = dy.re;
                jac[(r + 1, col + 1)] = dy.im;
            }
        }
        let step = jac.lu().solve(&(-f))?;
        for j in 1..n {
            v[j] += Complex64::new(step[2 * (j - 1)], step[2 * (j - 1) + 1]);
        }
    }
    None
}
