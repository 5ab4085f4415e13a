//! Hindmarsh-Rose full system, fast subsystem and synapse-augmented system.

use nalgebra::{Matrix2, Matrix3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::OdeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Invalid {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ParamError> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(ParamError::Invalid { name, value, reason })
    }
}

/// Hindmarsh-Rose constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Slow time-scale ratio.
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    /// Applied current.
    #[serde(rename = "I")]
    pub i_app: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 3.0,
            c: 1.0,
            d: 5.0,
            r: 0.001,
            sigma: 4.0,
            v0: -1.6,
            i_app: 2.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check("a", self.a, true, "must be finite")?;
        check("b", self.b, true, "must be finite")?;
        check("c", self.c, true, "must be finite")?;
        check("d", self.d, true, "must be finite")?;
        check("r", self.r, self.r > 0.0 && self.r <= 0.1, "must lie in (0, 0.1]")?;
        check("sigma", self.sigma, true, "must be finite")?;
        check("V0", self.v0, true, "must be finite")?;
        check("I", self.i_app, true, "must be finite")?;
        Ok(())
    }

    /// V-component shared by the full and fast systems.
    #[inline]
    fn dv(&self, v: f64, n: f64, h: f64) -> f64 {
        n - self.a * v * v * v + self.b * v * v - h + self.i_app
    }

    #[inline]
    fn dn(&self, v: f64, n: f64) -> f64 {
        self.c - self.d * v * v - n
    }

    #[inline]
    fn dh(&self, v: f64, h: f64) -> f64 {
        self.r * (self.sigma * (v - self.v0) - h)
    }

    /// Value of h at which `(V, c - dV^2)` is a fast-subsystem equilibrium.
    pub fn equilibrium_h_of_v(&self, v: f64) -> f64 {
        -self.a * v * v * v + (self.b - self.d) * v * v + self.c + self.i_app
    }

    /// n on the fast nullcline `n' = 0`.
    pub fn n_nullcline(&self, v: f64) -> f64 {
        self.c - self.d * v * v
    }
}

/// Synaptic coupling constants of the graded synapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynapseParams {
    pub gsyn: f64,
    #[serde(rename = "Vsyn")]
    pub vsyn: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Vp")]
    pub vp: f64,
}

pub const VSYN_EXCITATORY: f64 = 1.37;
pub const VSYN_INHIBITORY: f64 = -1.63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[serde(alias = "exc")]
    Excitatory,
    #[serde(alias = "inh")]
    Inhibitory,
}

impl Polarity {
    pub fn default_vsyn(self) -> f64 {
        match self {
            Polarity::Excitatory => VSYN_EXCITATORY,
            Polarity::Inhibitory => VSYN_INHIBITORY,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Polarity::Excitatory => "exc",
            Polarity::Inhibitory => "inh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exc" | "excitatory" => Some(Polarity::Excitatory),
            "inh" | "inhibitory" => Some(Polarity::Inhibitory),
            _ => None,
        }
    }
}

impl Default for SynapseParams {
    fn default() -> Self {
        Self::with_polarity(Polarity::Excitatory, 0.0)
    }
}

impl SynapseParams {
    pub fn with_polarity(polarity: Polarity, gsyn: f64) -> Self {
        Self {
            gsyn,
            vsyn: polarity.default_vsyn(),
            alpha: 9.304,
            beta: 0.9304,
            kp: 0.227,
            vp: 0.239,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check("gsyn", self.gsyn, self.gsyn >= 0.0, "must be >= 0")?;
        check("Vsyn", self.vsyn, true, "must be finite")?;
        check("alpha", self.alpha, self.alpha > 0.0, "must be > 0")?;
        check("beta", self.beta, self.beta > 0.0, "must be > 0")?;
        check("Kp", self.kp, self.kp > 0.0, "must be > 0")?;
        check("Vp", self.vp, true, "must be finite")?;
        Ok(())
    }

    /// Transmitter release sigmoid of the presynaptic voltage.
    pub fn t_inf(&self, v_pre: f64) -> f64 {
        1.0 / (1.0 + (-(v_pre - self.vp) / self.kp).exp())
    }

    /// Gating level at which `s' = 0` under a constant presynaptic voltage.
    pub fn steady_gate(&self, v_pre: f64) -> f64 {
        let at = self.alpha * self.t_inf(v_pre);
        at / (at + self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FullState {
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FastState {
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentedState {
    #[serde(rename = "V")]
    pub v: f64,
    pub n: f64,
    pub h: f64,
    pub s: f64,
}

impl FullState {
    pub fn new(v: f64, n: f64, h: f64) -> Self {
        Self { v, n, h }
    }
    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.n.is_finite() && self.h.is_finite()
    }
    pub fn fast(&self) -> FastState {
        FastState { v: self.v, n: self.n }
    }
}

impl FastState {
    pub fn new(v: f64, n: f64) -> Self {
        Self { v, n }
    }
    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.n.is_finite()
    }
}

impl AugmentedState {
    pub fn new(full: FullState, s: f64) -> Self {
        Self {
            v: full.v,
            n: full.n,
            h: full.h,
            s,
        }
    }
    pub fn full(&self) -> FullState {
        FullState {
            v: self.v,
            n: self.n,
            h: self.h,
        }
    }
}

impl From<[f64; 3]> for FullState {
    fn from(x: [f64; 3]) -> Self {
        Self {
            v: x[0],
            n: x[1],
            h: x[2],
        }
    }
}
impl From<FullState> for [f64; 3] {
    fn from(s: FullState) -> Self {
        [s.v, s.n, s.h]
    }
}
impl From<[f64; 2]> for FastState {
    fn from(x: [f64; 2]) -> Self {
        Self { v: x[0], n: x[1] }
    }
}
impl From<FastState> for [f64; 2] {
    fn from(s: FastState) -> Self {
        [s.v, s.n]
    }
}
impl From<[f64; 4]> for AugmentedState {
    fn from(x: [f64; 4]) -> Self {
        Self {
            v: x[0],
            n: x[1],
            h: x[2],
            s: x[3],
        }
    }
}
impl From<AugmentedState> for [f64; 4] {
    fn from(s: AugmentedState) -> Self {
        [s.v, s.n, s.h, s.s]
    }
}

pub fn full_rhs(x: &FullState, p: &ModelParams) -> FullState {
    FullState {
        v: p.dv(x.v, x.n, x.h),
        n: p.dn(x.v, x.n),
        h: p.dh(x.v, x.h),
    }
}

pub fn fast_rhs(x: &FastState, h: f64, p: &ModelParams) -> FastState {
    FastState {
        v: p.dv(x.v, x.n, h),
        n: p.dn(x.v, x.n),
    }
}

/// Rows and columns ordered (V, n, h).
pub fn full_jacobian(x: &FullState, p: &ModelParams) -> Matrix3<f64> {
    let dvv = -3.0 * p.a * x.v * x.v + 2.0 * p.b * x.v;
    Matrix3::new(dvv, 1.0, -1.0, -2.0 * p.d * x.v, -1.0, 0.0, p.r * p.sigma, 0.0, -p.r)
}

pub fn fast_jacobian(x: &FastState, _h: f64, p: &ModelParams) -> Matrix2<f64> {
    let dvv = -3.0 * p.a * x.v * x.v + 2.0 * p.b * x.v;
    Matrix2::new(dvv, 1.0, -2.0 * p.d * x.v, -1.0)
}

pub fn equilibrium_h_of_v(v: f64, p: &ModelParams) -> f64 {
    p.equilibrium_h_of_v(v)
}

/// Synapse-augmented vector field with conventional current sign: the
/// synaptic current pulls V toward `Vsyn`.
pub fn augmented_rhs(x: &AugmentedState, p: &ModelParams, sp: &SynapseParams, v_pre: f64) -> AugmentedState {
    AugmentedState {
        v: p.dv(x.v, x.n, x.h) - sp.gsyn * x.s * (x.v - sp.vsyn),
        n: p.dn(x.v, x.n),
        h: p.dh(x.v, x.h),
        s: sp.alpha * sp.t_inf(v_pre) * (1.0 - x.s) - sp.beta * x.s,
    }
}

/// Jacobian of [`augmented_rhs`] with respect to (V, n, h, s) at fixed `v_pre`.
pub fn augmented_jacobian(x: &AugmentedState, p: &ModelParams, sp: &SynapseParams, v_pre: f64) -> Matrix4<f64> {
    let dvv = -3.0 * p.a * x.v * x.v + 2.0 * p.b * x.v - sp.gsyn * x.s;
    Matrix4::new(
        dvv,
        1.0,
        -1.0,
        -sp.gsyn * (x.v - sp.vsyn),
        -2.0 * p.d * x.v,
        -1.0,
        0.0,
        0.0,
        p.r * p.sigma,
        0.0,
        -p.r,
        0.0,
        0.0,
        0.0,
        0.0,
        -sp.alpha * sp.t_inf(v_pre) - sp.beta,
    )
}

/// The full three-variable system as an integrable vector field.
#[derive(Debug, Clone, Copy)]
pub struct FullSystem {
    pub params: ModelParams,
}

impl OdeSystem<3> for FullSystem {
    fn rhs(&self, _t: f64, x: &[f64; 3]) -> [f64; 3] {
        let p = &self.params;
        [p.dv(x[0], x[1], x[2]), p.dn(x[0], x[1]), p.dh(x[0], x[2])]
    }

    fn jacobian(&self, _t: f64, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let j = full_jacobian(&FullState::from(*x), &self.params);
        [
            [j[(0, 0)], j[(0, 1)], j[(0, 2)]],
            [j[(1, 0)], j[(1, 1)], j[(1, 2)]],
            [j[(2, 0)], j[(2, 1)], j[(2, 2)]],
        ]
    }
}

/// The fast (V, n) subsystem with the slow variable frozen at `h`.
#[derive(Debug, Clone, Copy)]
pub struct FastSystem {
    pub params: ModelParams,
    pub h: f64,
}

impl OdeSystem<2> for FastSystem {
    fn rhs(&self, _t: f64, x: &[f64; 2]) -> [f64; 2] {
        let p = &self.params;
        [p.dv(x[0], x[1], self.h), p.dn(x[0], x[1])]
    }

    fn jacobian(&self, _t: f64, x: &[f64; 2]) -> [[f64; 2]; 2] {
        let j = fast_jacobian(&FastState::from(*x), self.h, &self.params);
        [[j[(0, 0)], j[(0, 1)]], [j[(1, 0)], j[(1, 1)]]]
    }
}

/// Augmented system driven by a presynaptic voltage waveform `v_pre(t)`.
pub struct AugmentedSystem<F: Fn(f64) -> f64> {
    pub params: ModelParams,
    pub synapse: SynapseParams,
    pub v_pre: F,
}

impl<F: Fn(f64) -> f64> OdeSystem<4> for AugmentedSystem<F> {
    fn rhs(&self, t: f64, x: &[f64; 4]) -> [f64; 4] {
        augmented_rhs(&AugmentedState::from(*x), &self.params, &self.synapse, (self.v_pre)(t)).into()
    }

    fn jacobian(&self, t: f64, x: &[f64; 4]) -> [[f64; 4]; 4] {
        let j = augmented_jacobian(&AugmentedState::from(*x), &self.params, &self.synapse, (self.v_pre)(t));
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = j[(i, k)];
            }
        }
        out
    }
}
