//! Adaptive ODE integration with dense output and event location.
//!
//! Two steppers share one driver: an explicit Dormand-Prince 5(4) pair with
//! its free fourth-order continuous extension, and the three-stage Radau IIA
//! collocation method (order 5) for stiff or backward-unstable problems.
//! Every accepted step keeps its interpolant, so a [`Trajectory`] can be
//! evaluated anywhere in its span and event functions are root-found on the
//! interpolant rather than on the discrete steps.

mod dopri5;
mod radau5;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use trajectory::{DenseStep, Event, Step, Trajectory};

/// Right-hand side of an autonomous or non-autonomous ODE of fixed dimension.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, x: &[f64; N]) -> [f64; N];

    /// Jacobian `d rhs / d x`, row-major. Defaults to central differences.
    fn jacobian(&self, t: f64, x: &[f64; N]) -> [[f64; N]; N] {
        let mut jac = [[0.0; N]; N];
        for j in 0..N {
            let step = 1e-7 * x[j].abs().max(1.0);
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += step;
            xm[j] -= step;
            let fp = self.rhs(t, &xp);
            let fm = self.rhs(t, &xm);
            for i in 0..N {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        jac
    }
}

impl<F, const N: usize> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, t: f64, x: &[f64; N]) -> [f64; N] {
        self(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExplicitAdaptive,
    ImplicitStiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub direction: Direction,
    pub method: Method,
    /// Keep every accepted step (needed for dense evaluation after the run).
    /// Event location works either way.
    pub store_steps: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            h_init: 1e-4,
            h_max: 1.0,
            max_steps: 50_000_000,
            direction: Direction::Forward,
            method: Method::ExplicitAdaptive,
            store_steps: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.rtol = tol;
        self.atol = tol;
        self
    }

    pub fn backward(mut self) -> Self {
        self.direction = Direction::Backward;
        self
    }

    pub fn forward(mut self) -> Self {
        self.direction = Direction::Forward;
        self
    }

    pub fn stiff(mut self) -> Self {
        self.method = Method::ImplicitStiff;
        self
    }

    pub fn without_steps(mut self) -> Self {
        self.store_steps = false;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.h_init > 0.0
            && self.h_max > 0.0
            && self.max_steps > 0
            && self.rtol.is_finite()
            && self.atol.is_finite()
            && self.h_init.is_finite();
        if ok {
            Ok(())
        } else {
            Err(IntegrateError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("step budget of {0} steps exceeded")]
    StepBudgetExceeded(usize),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("time {t} outside trajectory span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("integration span [{t0}, {t1}] does not match the configured direction")]
    DirectionMismatch { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    Rising,
    Falling,
    Any,
}

type EventFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a>;
type GuardFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> bool + Send + Sync + 'a>;

/// A scalar event function whose zeros are located along the trajectory.
///
/// `Rising`/`Falling` refer to the sign change in increasing physical time,
/// independent of the integration direction. A guard, when present, is
/// checked at the located root and rejected roots are neither recorded nor
/// counted toward termination.
pub struct EventSpec<'a, const N: usize> {
    pub id: String,
    pub func: EventFn<'a, N>,
    pub crossing: Crossing,
    /// Stop integration at the k-th accepted occurrence.
    pub terminal: Option<usize>,
    pub guard: Option<GuardFn<'a, N>>,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    pub fn new(
        id: impl Into<String>,
        crossing: Crossing,
        func: impl Fn(f64, &[f64; N]) -> f64 + Send + Sync + 'a,
    ) -> Self {
        Self {
            id: id.into(),
            func: Box::new(func),
            crossing,
            terminal: None,
            guard: None,
        }
    }

    pub fn terminal(self) -> Self {
        self.terminal_after(1)
    }

    pub fn terminal_after(mut self, count: usize) -> Self {
        self.terminal = Some(count.max(1));
        self
    }

    pub fn with_guard(mut self, guard: impl Fn(f64, &[f64; N]) -> bool + Send + Sync + 'a) -> Self {
        self.guard = Some(Box::new(guard));
        self
    }
}

/// Time accuracy of located events.
pub const EVENT_TIME_TOL: f64 = 1e-10;
const EVENT_MAX_ITER: usize = 80;

pub(crate) struct StepOutcome<const N: usize> {
    pub y_new: [f64; N],
    pub dense: DenseStep<N>,
}

pub(crate) enum Attempt<const N: usize> {
    Accepted { outcome: StepOutcome<N>, h_next: f64 },
    Rejected { h_next: f64 },
}

pub(crate) trait Stepper<const N: usize> {
    fn attempt<S: OdeSystem<N>>(&mut self, sys: &S, t: f64, y: &[f64; N], h: f64) -> Attempt<N>;
}

/// Mixed-tolerance RMS norm used by both steppers.
pub(crate) fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = atol + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / scale;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Integrate `sys` from `(t0, y0)` to `t1`, locating the zeros of `events`.
pub fn integrate<S, const N: usize>(
    sys: &S,
    y0: [f64; N],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[EventSpec<'_, N>],
) -> Result<Trajectory<N>, IntegrateError>
where
    S: OdeSystem<N>,
{
    cfg.validate()?;
    let sign = cfg.direction.sign();
    if !(t1 - t0).is_finite() || (t1 - t0) * sign <= 0.0 {
        return Err(IntegrateError::DirectionMismatch { t0, t1 });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteState(t0));
    }
    match cfg.method {
        Method::ExplicitAdaptive => {
            let mut stepper = dopri5::Dopri5::new(sys, t0, &y0, cfg);
            drive(sys, &mut stepper, y0, t0, t1, cfg, events)
        }
        Method::ImplicitStiff => {
            let mut stepper = radau5::Radau5::new(cfg);
            drive(sys, &mut stepper, y0, t0, t1, cfg, events)
        }
    }
}

fn drive<S, P, const N: usize>(
    sys: &S,
    stepper: &mut P,
    y0: [f64; N],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[EventSpec<'_, N>],
) -> Result<Trajectory<N>, IntegrateError>
where
    S: OdeSystem<N>,
    P: Stepper<N>,
{
    let sign = cfg.direction.sign();
    let span = (t1 - t0).abs();
    let h_min = 1e-14 * span;
    let mut traj = Trajectory::new(t0, y0);
    let mut t = t0;
    let mut y = y0;
    let mut h = sign * cfg.h_init.min(cfg.h_max).min(span);
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.func)(t0, &y0)).collect();
    let mut counts = vec![0usize; events.len()];

    loop {
        if traj.stats.accepted + traj.stats.rejected >= cfg.max_steps {
            return Err(IntegrateError::StepBudgetExceeded(cfg.max_steps));
        }
        let mut last = false;
        if (t + h - t1) * sign >= 0.0 {
            h = t1 - t;
            last = true;
        }
        match stepper.attempt(sys, t, &y, h) {
            Attempt::Rejected { h_next } => {
                traj.stats.rejected += 1;
                h = sign * h_next.abs().min(cfg.h_max);
                if h.abs() < h_min {
                    return Err(IntegrateError::StepSizeUnderflow { t, h });
                }
            }
            Attempt::Accepted { outcome, h_next } => {
                traj.stats.accepted += 1;
                let t_new = if last { t1 } else { t + h };
                if outcome.y_new.iter().any(|v| !v.is_finite()) {
                    return Err(IntegrateError::NonFiniteState(t_new));
                }
                let step = Step {
                    t0: t,
                    t1: t_new,
                    y0: y,
                    y1: outcome.y_new,
                    dense: outcome.dense,
                };
                let stop = locate_events(&step, events, &mut g_prev, &mut counts, &mut traj);
                let stop_at = stop.map(|ev| (ev.t, ev.state));
                traj.push_step(step, cfg.store_steps);
                if let Some((te, ye)) = stop_at {
                    traj.finish(te, ye, true);
                    return Ok(traj);
                }
                t = t_new;
                y = outcome.y_new;
                if last {
                    traj.finish(t, y, false);
                    return Ok(traj);
                }
                h = sign * h_next.abs().min(cfg.h_max);
                if h.abs() < h_min {
                    return Err(IntegrateError::StepSizeUnderflow { t, h });
                }
            }
        }
    }
}

/// Finds event roots inside one accepted step. Returns the terminating event if any.
fn locate_events<const N: usize>(
    step: &Step<N>,
    events: &[EventSpec<'_, N>],
    g_prev: &mut [f64],
    counts: &mut [usize],
    traj: &mut Trajectory<N>,
) -> Option<Event<N>> {
    if events.is_empty() {
        return None;
    }
    let forward = step.t1 > step.t0;
    let mut found: Vec<(f64, usize, [f64; N])> = Vec::new();
    for (idx, ev) in events.iter().enumerate() {
        let ga = g_prev[idx];
        let gb = (ev.func)(step.t1, &step.y1);
        g_prev[idx] = gb;
        // values ordered by increasing physical time
        let (g_lo, g_hi) = if forward { (ga, gb) } else { (gb, ga) };
        let rising = g_lo < 0.0 && g_hi >= 0.0;
        let falling = g_lo > 0.0 && g_hi <= 0.0;
        let hit = match ev.crossing {
            Crossing::Rising => rising,
            Crossing::Falling => falling,
            Crossing::Any => rising || falling,
        };
        if !hit {
            continue;
        }
        let (tr, yr) = find_root(step, |t, y| (ev.func)(t, y), ga, gb);
        if let Some(guard) = &ev.guard {
            if !guard(tr, &yr) {
                continue;
            }
        }
        found.push((tr, idx, yr));
    }
    if found.is_empty() {
        return None;
    }
    found.sort_by(|a, b| {
        let ord = a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal);
        if forward {
            ord
        } else {
            ord.reverse()
        }
    });
    for (tr, idx, yr) in found {
        counts[idx] += 1;
        let event = Event {
            id: events[idx].id.clone(),
            t: tr,
            state: yr,
        };
        traj.events.push(event.clone());
        if let Some(k) = events[idx].terminal {
            if counts[idx] >= k {
                return Some(event);
            }
        }
    }
    None
}

/// Safeguarded secant (Illinois) iteration on the step interpolant.
fn find_root<const N: usize>(step: &Step<N>, g: impl Fn(f64, &[f64; N]) -> f64, g0: f64, g1: f64) -> (f64, [f64; N]) {
    let (mut a, mut b) = (step.t0, step.t1);
    let (mut fa, mut fb) = (g0, g1);
    if fb == 0.0 {
        return (b, step.y1);
    }
    let mut side = 0i8;
    for iter in 0..EVENT_MAX_ITER {
        if (b - a).abs() <= EVENT_TIME_TOL {
            break;
        }
        // alternate secant and bisection so the bracket always shrinks
        let mut c = if iter % 3 == 2 || fa == fb {
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        let lo = a.min(b);
        let hi = a.max(b);
        if !(c > lo && c < hi) {
            c = 0.5 * (a + b);
        }
        let yc = step.eval(c);
        let fc = g(c, &yc);
        if fc == 0.0 {
            return (c, yc);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    // return the endpoint with the smaller residual
    let t = if fa.abs() < fb.abs() { a } else { b };
    (t, step.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sho(_t: f64, x: &[f64; 2]) -> [f64; 2] {
        [x[1], -x[0]]
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let cfg = IntegratorConfig::default();
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 2.0 * PI, &cfg, &[]).unwrap();
        let y = tr.y_end();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn falling_zero_of_position() {
        let cfg = IntegratorConfig::default();
        let ev = EventSpec::new("x0", Crossing::Falling, |_t, x: &[f64; 2]| x[0]).terminal();
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 10.0, &cfg, &[ev]).unwrap();
        assert_eq!(tr.events().len(), 1);
        assert!((tr.events()[0].t - PI / 2.0).abs() < 1e-10);
        assert!(tr.stopped_by_event());
        assert!((tr.t_end() - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn rising_filter_skips_falling_roots() {
        let cfg = IntegratorConfig::default().with_tolerance(1e-10);
        let ev = EventSpec::new("x0", Crossing::Rising, |_t, x: &[f64; 2]| x[0]);
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 4.0 * PI, &cfg, &[ev]).unwrap();
        let ts: Vec<f64> = tr.events().iter().map(|e| e.t).collect();
        assert_eq!(ts.len(), 2);
        assert!((ts[0] - 1.5 * PI).abs() < 1e-9);
        assert!((ts[1] - 3.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn guard_rejects_roots() {
        let cfg = IntegratorConfig::default().with_tolerance(1e-10);
        let ev = EventSpec::new("x0", Crossing::Any, |_t, x: &[f64; 2]| x[0]).with_guard(|t, _x| t > 2.0);
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 5.0, &cfg, &[ev]).unwrap();
        assert_eq!(tr.events().len(), 1);
        assert!((tr.events()[0].t - 1.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn terminal_after_counts_occurrences() {
        let cfg = IntegratorConfig::default();
        let ev = EventSpec::new("x0", Crossing::Any, |_t, x: &[f64; 2]| x[0]).terminal_after(3);
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 100.0, &cfg, &[ev]).unwrap();
        assert_eq!(tr.events().len(), 3);
        assert!((tr.t_end() - 2.5 * PI).abs() < 1e-10);
    }

    #[test]
    fn backward_event_direction_is_physical_time() {
        // going backward from t = pi, x = cos t crosses zero rising at t = pi/2? No:
        // cos decreases through zero at pi/2 in forward time, so it is Falling.
        let cfg = IntegratorConfig::default().backward();
        let y_pi = [-1.0, 0.0];
        let ev = EventSpec::new("x0", Crossing::Falling, |_t, x: &[f64; 2]| x[0]);
        let tr = integrate(&sho, y_pi, PI, 0.0, &cfg, &[ev]).unwrap();
        assert_eq!(tr.events().len(), 1);
        assert!((tr.events()[0].t - PI / 2.0).abs() < 1e-10);
        let y0 = tr.y_end();
        assert!((y0[0] - 1.0).abs() < 1e-9 && y0[1].abs() < 1e-9);
    }

    #[test]
    fn direction_mismatch_is_rejected() {
        let cfg = IntegratorConfig::default();
        let err = integrate(&sho, [1.0, 0.0], 1.0, 0.0, &cfg, &[]).unwrap_err();
        assert!(matches!(err, IntegrateError::DirectionMismatch { .. }));
    }

    #[test]
    fn step_budget_is_enforced() {
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..IntegratorConfig::default()
        };
        let err = integrate(&sho, [1.0, 0.0], 0.0, 100.0, &cfg, &[]).unwrap_err();
        assert_eq!(err, IntegrateError::StepBudgetExceeded(10));
    }

    #[test]
    fn blowup_reports_non_finite_or_underflow() {
        // x' = x^2 from x = 1 blows up at t = 1
        let f = |_t: f64, x: &[f64; 1]| [x[0] * x[0]];
        let err = integrate(&f, [1.0], 0.0, 2.0, &IntegratorConfig::default(), &[]).unwrap_err();
        assert!(matches!(
            err,
            IntegrateError::NonFiniteState(_) | IntegrateError::StepSizeUnderflow { .. }
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = IntegratorConfig {
            rtol: 0.0,
            ..IntegratorConfig::default()
        };
        assert!(matches!(
            integrate(&sho, [1.0, 0.0], 0.0, 1.0, &cfg, &[]),
            Err(IntegrateError::InvalidConfig(_))
        ));
    }

    #[test]
    fn stiff_method_on_oscillator() {
        let cfg = IntegratorConfig::default().stiff();
        let tr = integrate(&sho, [1.0, 0.0], 0.0, 2.0 * PI, &cfg, &[]).unwrap();
        let y = tr.y_end();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn stiff_method_handles_stiff_linear_decay() {
        // y' = -1e4 (y - cos t) ; explicit would need ~1e4 steps per unit time
        struct Stiff;
        impl OdeSystem<1> for Stiff {
            fn rhs(&self, t: f64, x: &[f64; 1]) -> [f64; 1] {
                [-1e4 * (x[0] - t.cos())]
            }
            fn jacobian(&self, _t: f64, _x: &[f64; 1]) -> [[f64; 1]; 1] {
                [[-1e4]]
            }
        }
        let cfg = IntegratorConfig::default().stiff().with_tolerance(1e-8);
        let tr = integrate(&Stiff, [1.0], 0.0, 1.0, &cfg, &[]).unwrap();
        // quasi-steady solution y ~ cos t + sin t / 1e4
        let exact = 1f64.cos() + 1f64.sin() / 1e4;
        assert!((tr.y_end()[0] - exact).abs() < 1e-7);
        assert!(tr.stats.accepted < 2000, "{:?}", tr.stats);
    }
}
