use super::IntegrateError;

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub enum DenseStep<const N: usize> {
    /// Dormand-Prince coefficients `r1..r5` of the fourth-order interpolant.
    Dopri([[f64; N]; 5]),
    /// Radau IIA stage increments at `c1`, `c2` (the third equals `y1 - y0`).
    Radau([[f64; N]; 2]),
}

#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub dense: DenseStep<N>,
}

const SQ6: f64 = 2.449_489_742_783_178;
pub(crate) const RADAU_C1: f64 = (4.0 - SQ6) / 10.0;
pub(crate) const RADAU_C2: f64 = (4.0 + SQ6) / 10.0;

impl<const N: usize> Step<N> {
    /// Evaluate the interpolant at `t` (assumed inside the step).
    pub fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t1 {
            return self.y1;
        }
        if t == self.t0 {
            return self.y0;
        }
        let s = (t - self.t0) / (self.t1 - self.t0);
        let mut out = [0.0; N];
        match &self.dense {
            DenseStep::Dopri(r) => {
                let s1 = 1.0 - s;
                for i in 0..N {
                    out[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
                }
            }
            DenseStep::Radau(z) => {
                // Lagrange basis through 0, c1, c2, 1 of the increment polynomial (zero at 0)
                let (c1, c2) = (RADAU_C1, RADAU_C2);
                let l1 = s * (s - c2) * (s - 1.0) / (c1 * (c1 - c2) * (c1 - 1.0));
                let l2 = s * (s - c1) * (s - 1.0) / (c2 * (c2 - c1) * (c2 - 1.0));
                let l3 = s * (s - c1) * (s - c2) / ((1.0 - c1) * (1.0 - c2));
                for i in 0..N {
                    let z3 = self.y1[i] - self.y0[i];
                    out[i] = self.y0[i] + l1 * z[0][i] + l2 * z[1][i] + l3 * z3;
                }
            }
        }
        out
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t1 >= self.t0 {
            (self.t0, self.t1)
        } else {
            (self.t1, self.t0)
        };
        t >= lo && t <= hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<const N: usize> {
    pub id: String,
    pub t: f64,
    pub state: [f64; N],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Result of an integration: accepted steps with their interpolants, located
/// events and the final state.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    steps: Vec<Step<N>>,
    pub(crate) events: Vec<Event<N>>,
    t_start: f64,
    y_start: [f64; N],
    t_end: f64,
    y_end: [f64; N],
    stopped_by_event: bool,
    pub stats: Stats,
}

impl<const N: usize> Trajectory<N> {
    pub(crate) fn new(t0: f64, y0: [f64; N]) -> Self {
        Self {
            steps: Vec::new(),
            events: Vec::new(),
            t_start: t0,
            y_start: y0,
            t_end: t0,
            y_end: y0,
            stopped_by_event: false,
            stats: Stats::default(),
        }
    }

    pub(crate) fn push_step(&mut self, step: Step<N>, store: bool) {
        if store {
            self.steps.push(step);
        }
    }

    pub(crate) fn finish(&mut self, t: f64, y: [f64; N], by_event: bool) {
        self.t_end = t;
        self.y_end = y;
        self.stopped_by_event = by_event;
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn y_start(&self) -> [f64; N] {
        self.y_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn y_end(&self) -> [f64; N] {
        self.y_end
    }

    pub fn stopped_by_event(&self) -> bool {
        self.stopped_by_event
    }

    pub fn steps(&self) -> &[Step<N>] {
        &self.steps
    }

    pub fn events(&self) -> &[Event<N>] {
        &self.events
    }

    pub fn events_with_id<'s>(&'s self, id: &'s str) -> impl Iterator<Item = &'s Event<N>> + 's {
        self.events.iter().filter(move |e| e.id == id)
    }

    fn span(&self) -> (f64, f64) {
        if self.t_end >= self.t_start {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        }
    }

    /// Evaluate the dense output at `t`.
    pub fn eval(&self, t: f64) -> Result<[f64; N], IntegrateError> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(IntegrateError::OutOfSpan { t, lo, hi });
        }
        if t == self.t_end {
            return Ok(self.y_end);
        }
        if self.steps.is_empty() {
            if t == self.t_start {
                return Ok(self.y_start);
            }
            return Err(IntegrateError::OutOfSpan {
                t,
                lo: self.t_start,
                hi: self.t_start,
            });
        }
        let forward = self.t_end >= self.t_start;
        // steps are ordered along the integration direction
        let idx = self
            .steps
            .partition_point(|s| if forward { s.t1 < t } else { s.t1 > t });
        let idx = idx.min(self.steps.len() - 1);
        let step = &self.steps[idx];
        debug_assert!(step.contains(t));
        Ok(step.eval(t))
    }

    /// `n` states sampled uniformly over the span, endpoints included.
    pub fn sample(&self, n: usize) -> Result<Vec<(f64, [f64; N])>, IntegrateError> {
        let n = n.max(2);
        (0..n)
            .map(|k| {
                let t = if k == n - 1 {
                    self.t_end
                } else {
                    self.t_start + (self.t_end - self.t_start) * k as f64 / (n - 1) as f64
                };
                self.eval(t).map(|y| (t, y))
            })
            .collect()
    }
}
