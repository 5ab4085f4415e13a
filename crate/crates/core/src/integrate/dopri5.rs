//! Dormand-Prince 5(4) with PI step control and Hairer's dense output.

use super::{error_norm, Attempt, DenseStep, IntegratorConfig, OdeSystem, StepOutcome, Stepper};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const MAX_GROWTH: f64 = 5.0;
const MAX_SHRINK: f64 = 0.2;

pub(crate) struct Dopri5<const N: usize> {
    rtol: f64,
    atol: f64,
    k1: [f64; N],
    err_old: f64,
    last_rejected: bool,
}

impl<const N: usize> Dopri5<N> {
    pub fn new<S: OdeSystem<N>>(sys: &S, t0: f64, y0: &[f64; N], cfg: &IntegratorConfig) -> Self {
        Self {
            rtol: cfg.rtol,
            atol: cfg.atol,
            k1: sys.rhs(t0, y0),
            err_old: 1e-4,
            last_rejected: false,
        }
    }
}

#[inline]
fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

impl<const N: usize> Stepper<N> for Dopri5<N> {
    fn attempt<S: OdeSystem<N>>(&mut self, sys: &S, t: f64, y: &[f64; N], h: f64) -> Attempt<N> {
        let k1 = self.k1;
        let k2 = sys.rhs(t + C2 * h, &comb(y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(t + C3 * h, &comb(y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(t + C4 * h, &comb(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = sys.rhs(
            t + C5 * h,
            &comb(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = sys.rhs(
            t + h,
            &comb(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = comb(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = sys.rhs(t + h, &y1);

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut e = error_norm(&err, y, &y1, self.rtol, self.atol);
        if !e.is_finite() {
            e = 1e10;
        }

        let fac11 = e.powf(EXPO);
        if e <= 1.0 {
            let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_GROWTH, 1.0 / MAX_SHRINK);
            let mut h_next = h / fac;
            if self.last_rejected {
                // no growth right after a rejection
                h_next = if h_next.abs() > h.abs() { h } else { h_next };
            }
            self.err_old = e.max(1e-4);
            self.last_rejected = false;

            let mut r = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r[0][i] = y[i];
                r[1][i] = ydiff;
                r[2][i] = bspl;
                r[3][i] = ydiff - h * k7[i] - bspl;
                r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            self.k1 = k7;
            Attempt::Accepted {
                outcome: StepOutcome {
                    y_new: y1,
                    dense: DenseStep::Dopri(r),
                },
                h_next,
            }
        } else {
            self.last_rejected = true;
            let fac = (fac11 / SAFETY).min(1.0 / MAX_SHRINK);
            Attempt::Rejected { h_next: h / fac }
        }
    }
}
