//! Run configuration: a JSON document whose every field defaults to the
//! model's reference values, so an empty object `{}` is a complete config.

use std::path::{Path, PathBuf};

use hrburst::adjoint::AdjointConfig;
use hrburst::bifurcation::{CycleStepControl, HomoclinicConfig};
use hrburst::direct::DirectConfig;
use hrburst::isochron::{default_phase_set, IsochronConfig};
use hrburst::{ModelParams, OrbitConfig, Polarity, SynapseParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BifurcationSettings {
    /// V interval swept for the equilibrium curve.
    pub v_range: (f64, f64),
    pub n_samples: usize,
    /// h interval for the spiking-cycle family.
    pub cycle_h_range: (f64, f64),
    pub cycles: CycleStepControl,
    pub homoclinic: HomoclinicConfig,
    /// Number of h slices in the slow-structure skeleton.
    pub skeleton_slices: usize,
    pub ring_samples: usize,
}

impl Default for BifurcationSettings {
    fn default() -> Self {
        Self {
            v_range: (-3.0, 3.0),
            n_samples: 2001,
            cycle_h_range: (1.7, 2.2),
            cycles: CycleStepControl::default(),
            homoclinic: HomoclinicConfig::default(),
            skeleton_slices: 41,
            ring_samples: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Conductances swept by `direct` and `snrc`.
    pub gsyn: Vec<f64>,
    pub polarity: Polarity,
    pub n_phases: usize,
    /// Onset phase for `perturb`.
    pub theta: f64,
    /// Spike of the reference burst used as the presynaptic waveform.
    pub template_spike: usize,
    pub direct: DirectConfig,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            gsyn: vec![1e-4],
            polarity: Polarity::Excitatory,
            n_phases: 500,
            theta: 0.176,
            template_spike: 3,
            direct: DirectConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsochronSettings {
    pub h: Vec<f64>,
    pub phases: Vec<f64>,
    /// Voltage displacement for the fast phase response.
    pub trace_eps: f64,
    pub trace_samples: usize,
    pub construction: IsochronConfig,
}

impl Default for IsochronSettings {
    fn default() -> Self {
        Self {
            h: vec![1.8, 1.95, 2.085],
            phases: default_phase_set(),
            trace_eps: 0.05,
            trace_samples: 200,
            construction: IsochronConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    /// Gate kinetics and default conductance; the reversal potential follows
    /// the sweep polarity.
    pub synapse: SynapseParams,
    pub orbit: OrbitConfig,
    pub bifurcation: BifurcationSettings,
    pub adjoint: AdjointConfig,
    pub sweep: SweepSettings,
    pub isochron: IsochronSettings,
    /// Recorded for reproducibility; every computation is deterministic.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            synapse: SynapseParams::default(),
            orbit: OrbitConfig::default(),
            bifurcation: BifurcationSettings::default(),
            adjoint: AdjointConfig::default(),
            sweep: SweepSettings::default(),
            isochron: IsochronSettings::default(),
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub gsyn: Option<f64>,
    pub polarity: Option<Polarity>,
    pub theta: Option<f64>,
    pub h: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Accepts a bare config or a run manifest carrying one under `config`.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let value = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(g) = o.gsyn {
            self.sweep.gsyn = vec![g];
        }
        if let Some(p) = o.polarity {
            self.sweep.polarity = p;
        }
        if let Some(t) = o.theta {
            self.sweep.theta = t;
        }
        if let Some(h) = o.h {
            self.isochron.h = vec![h];
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synapse.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.orbit
            .integrator
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.sweep.gsyn.is_empty() || self.sweep.gsyn.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return bad(format!(
                "sweep.gsyn must be a non-empty list of finite values >= 0, got {:?}",
                self.sweep.gsyn
            ));
        }
        if self.sweep.n_phases == 0 {
            return bad("sweep.n_phases must be positive".into());
        }
        if self.sweep.direct.n_orders == 0 {
            return bad("sweep.direct.n_orders must be positive".into());
        }
        if !self.sweep.theta.is_finite() || !(0.0..1.0).contains(&self.sweep.theta) {
            return bad(format!("theta must lie in [0, 1), got {}", self.sweep.theta));
        }
        if self.isochron.h.iter().any(|h| !h.is_finite()) {
            return bad("isochron.h values must be finite".into());
        }
        if self.isochron.phases.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("isochron.phases must lie in [0, 1)".into());
        }
        let (lo, hi) = self.isochron.construction.rel_phase_range;
        if !(lo > 0.0 && hi > lo) {
            return bad("isochron.construction.rel_phase_range must satisfy 0 < lo < hi".into());
        }
        let (vlo, vhi) = self.bifurcation.v_range;
        if !(vlo < vhi) || self.bifurcation.n_samples < 2 {
            return bad("bifurcation.v_range must be increasing with n_samples >= 2".into());
        }
        Ok(())
    }

    /// Synapse used for a given conductance under the configured polarity.
    pub fn synapse_for(&self, gsyn: f64) -> SynapseParams {
        SynapseParams {
            gsyn,
            vsyn: self.sweep.polarity.default_vsyn(),
            ..self.synapse
        }
    }

    pub fn direct_config(&self) -> DirectConfig {
        DirectConfig {
            kinetics: self.synapse,
            ..self.sweep.direct.clone()
        }
    }
}
