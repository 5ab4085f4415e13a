//! Three-stage Radau IIA collocation (order 5) with simplified Newton.
//!
//! The stage system is solved in its untransformed `3N` form; the problems
//! here are at most four-dimensional so the dense LU is cheap. Error
//! estimation follows Hairer & Wanner's embedded formula.

use nalgebra::{DMatrix, DVector};

use super::trajectory::{RADAU_C1, RADAU_C2};
use super::{error_norm, Attempt, DenseStep, IntegratorConfig, OdeSystem, StepOutcome, Stepper};

const SQ6: f64 = 2.449_489_742_783_178;
const C: [f64; 3] = [RADAU_C1, RADAU_C2, 1.0];
const A: [[f64; 3]; 3] = [
    [
        (88.0 - 7.0 * SQ6) / 360.0,
        (296.0 - 169.0 * SQ6) / 1800.0,
        (-2.0 + 3.0 * SQ6) / 225.0,
    ],
    [
        (296.0 + 169.0 * SQ6) / 1800.0,
        (88.0 + 7.0 * SQ6) / 360.0,
        (-2.0 - 3.0 * SQ6) / 225.0,
    ],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];
/// Real eigenvalue of the inverse coefficient matrix.
const GAMMA0: f64 = 3.637_834_252_744_496;
const DD: [f64; 3] = [-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0];

const MAX_NEWTON: usize = 7;
const NEWTON_TOL: f64 = 0.03;
const SAFETY: f64 = 0.9;

struct PrevStep<const N: usize> {
    h: f64,
    y0: [f64; N],
    z: [[f64; N]; 3],
}

pub(crate) struct Radau5<const N: usize> {
    rtol: f64,
    atol: f64,
    prev: Option<PrevStep<N>>,
    last_rejected: bool,
    first: bool,
}

impl<const N: usize> Radau5<N> {
    pub fn new(cfg: &IntegratorConfig) -> Self {
        Self {
            rtol: cfg.rtol,
            atol: cfg.atol,
            prev: None,
            last_rejected: false,
            first: true,
        }
    }

    /// Stage guess from the previous collocation polynomial.
    fn initial_guess(&self, y: &[f64; N], h: f64) -> [[f64; N]; 3] {
        let mut z = [[0.0; N]; 3];
        let Some(p) = &self.prev else { return z };
        let (c1, c2) = (RADAU_C1, RADAU_C2);
        for (j, zj) in z.iter_mut().enumerate() {
            let s = 1.0 + C[j] * h / p.h;
            let l1 = s * (s - c2) * (s - 1.0) / (c1 * (c1 - c2) * (c1 - 1.0));
            let l2 = s * (s - c1) * (s - 1.0) / (c2 * (c2 - c1) * (c2 - 1.0));
            let l3 = s * (s - c1) * (s - c2) / ((1.0 - c1) * (1.0 - c2));
            for i in 0..N {
                let u = p.y0[i] + l1 * p.z[0][i] + l2 * p.z[1][i] + l3 * p.z[2][i];
                zj[i] = u - y[i];
            }
        }
        if z.iter().flatten().all(|v| v.is_finite()) {
            z
        } else {
            [[0.0; N]; 3]
        }
    }

    fn scaled_norm(&self, v: &[f64], y: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for (k, x) in v.iter().enumerate() {
            let i = k % N;
            let r = x / (self.atol + self.rtol * y[i].abs());
            acc += r * r;
        }
        (acc / v.len() as f64).sqrt()
    }
}

impl<const N: usize> Stepper<N> for Radau5<N> {
    fn attempt<S: OdeSystem<N>>(&mut self, sys: &S, t: f64, y: &[f64; N], h: f64) -> Attempt<N> {
        let jac = sys.jacobian(t, y);
        let n3 = 3 * N;
        let mut m = DMatrix::<f64>::identity(n3, n3);
        for a in 0..3 {
            for b in 0..3 {
                for i in 0..N {
                    for j in 0..N {
                        m[(a * N + i, b * N + j)] -= h * A[a][b] * jac[i][j];
                    }
                }
            }
        }
        let Some(lu) = Some(m.lu()).filter(|lu| lu.is_invertible()) else {
            self.last_rejected = true;
            return Attempt::Rejected { h_next: 0.5 * h };
        };

        let mut z = self.initial_guess(y, h);
        let mut dz_old = 0.0;
        let mut converged = false;
        let mut iters = 0;
        for it in 0..MAX_NEWTON {
            iters = it + 1;
            let mut f = [[0.0; N]; 3];
            for s in 0..3 {
                let mut ys = *y;
                for i in 0..N {
                    ys[i] += z[s][i];
                }
                f[s] = sys.rhs(t + C[s] * h, &ys);
            }
            let mut g = DVector::<f64>::zeros(n3);
            for a in 0..3 {
                for i in 0..N {
                    let mut acc = 0.0;
                    for b in 0..3 {
                        acc += A[a][b] * f[b][i];
                    }
                    g[a * N + i] = -(z[a][i] - h * acc);
                }
            }
            let Some(dz) = lu.solve(&g) else { break };
            if dz.iter().any(|v| !v.is_finite()) {
                break;
            }
            for a in 0..3 {
                for i in 0..N {
                    z[a][i] += dz[a * N + i];
                }
            }
            let dz_norm = self.scaled_norm(dz.as_slice(), y);
            if it == 0 {
                if dz_norm <= 1e-3 * NEWTON_TOL {
                    converged = true;
                    break;
                }
            } else {
                let theta = dz_norm / dz_old;
                if theta >= 0.99 {
                    break;
                }
                if theta / (1.0 - theta) * dz_norm <= NEWTON_TOL {
                    converged = true;
                    break;
                }
            }
            if dz_norm <= 1e-14 {
                converged = true;
                break;
            }
            dz_old = dz_norm;
        }
        if !converged {
            self.last_rejected = true;
            return Attempt::Rejected { h_next: 0.5 * h };
        }

        let mut y1 = *y;
        for i in 0..N {
            y1[i] += z[2][i];
        }

        // embedded error estimate
        let mut e_mat = DMatrix::<f64>::zeros(N, N);
        for i in 0..N {
            for j in 0..N {
                e_mat[(i, j)] = -jac[i][j];
            }
            e_mat[(i, i)] += GAMMA0 / h;
        }
        let e_lu = e_mat.lu();
        let f0 = sys.rhs(t, y);
        let mut zsum = [0.0; N];
        for i in 0..N {
            zsum[i] = (DD[0] * z[0][i] + DD[1] * z[1][i] + DD[2] * z[2][i]) / h;
        }
        let solve = |rhs: &[f64; N]| -> Option<[f64; N]> {
            let v = e_lu.solve(&DVector::from_column_slice(rhs))?;
            let mut out = [0.0; N];
            out.copy_from_slice(v.as_slice());
            Some(out)
        };
        let mut rhs = [0.0; N];
        for i in 0..N {
            rhs[i] = f0[i] + zsum[i];
        }
        let mut err = match solve(&rhs) {
            Some(e) => e,
            None => [f64::INFINITY; N],
        };
        let mut e = error_norm(&err, y, &y1, self.rtol, self.atol);
        if e >= 1.0 && (self.first || self.last_rejected) && e.is_finite() {
            let mut yp = *y;
            for i in 0..N {
                yp[i] += err[i];
            }
            let fp = sys.rhs(t, &yp);
            for i in 0..N {
                rhs[i] = fp[i] + zsum[i];
            }
            if let Some(e2) = solve(&rhs) {
                err = e2;
                e = error_norm(&err, y, &y1, self.rtol, self.atol);
            }
        }
        if !e.is_finite() {
            e = 1e10;
        }

        let safe = SAFETY * (2 * MAX_NEWTON + 1) as f64 / (2 * MAX_NEWTON + iters) as f64;
        let fac = (safe * e.max(1e-10).powf(-0.25)).clamp(0.2, 5.0);
        if e <= 1.0 {
            let mut h_next = h * fac;
            if self.last_rejected && h_next.abs() > h.abs() {
                h_next = h;
            }
            self.first = false;
            self.last_rejected = false;
            self.prev = Some(PrevStep { h, y0: *y, z });
            Attempt::Accepted {
                outcome: StepOutcome {
                    y_new: y1,
                    dense: DenseStep::Radau([z[0], z[1]]),
                },
                h_next,
            }
        } else {
            self.last_rejected = true;
            Attempt::Rejected {
                h_next: h * fac.min(0.9),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn collocation_output_matches_exponential() {
        let f = |_t: f64, x: &[f64; 1]| [x[0]];
        let cfg = IntegratorConfig {
            h_init: 0.05,
            h_max: 0.05,
            ..IntegratorConfig::default()
        }
        .stiff()
        .with_tolerance(1e-10);
        let tr = integrate(&f, [1.0], 0.0, 1.0, &cfg, &[]).unwrap();
        for k in 0..=40 {
            let t = k as f64 / 40.0;
            let y = tr.eval(t).unwrap()[0];
            assert!((y - t.exp()).abs() < 1e-8, "t={t}");
        }
        assert!((tr.y_end()[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_stiff_run_of_decaying_mode() {
        // backward in time y' = -y grows; Radau handles it like any other run
        let f = |_t: f64, x: &[f64; 1]| [-x[0]];
        let cfg = IntegratorConfig::default().stiff().backward();
        let tr = integrate(&f, [1.0], 0.0, -3.0, &cfg, &[]).unwrap();
        let exact = 3f64.exp();
        assert!((tr.y_end()[0] - exact).abs() / exact < 1e-10);
    }
}
