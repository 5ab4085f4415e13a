//! Python bindings: model parameters, the reference burst orbit, bifurcation
//! points, adjoint and direct phase response, and fast-subsystem isochrons.

use hrburst::adjoint::{adjoint_bprc, segment_decomposition, AdjointConfig};
use hrburst::bifurcation::{homoclinic_h, hopf_points, saddle_node_points, HomoclinicConfig};
use hrburst::direct::{direct_sweep, inject_and_measure, sweep_phases, DirectConfig, DirectError, PerturbationSpec};
use hrburst::isochron::{compute_isochron, IsochronConfig};
use hrburst::{extract_spike_template, find_burst_orbit, find_fast_orbit, OrbitConfig, Polarity};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn numerical(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn polarity(s: &str) -> PyResult<Polarity> {
    Polarity::parse(s).ok_or_else(|| PyValueError::new_err(format!("polarity must be 'exc' or 'inh', got {s:?}")))
}

/// Hindmarsh-Rose parameters; keyword arguments default to the reference set.
#[pyclass(name = "ModelParams", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    r: f64,
    sigma: f64,
    #[pyo3(name = "V0")]
    v0: f64,
    #[pyo3(name = "I")]
    i_app: f64,
}

impl PyModelParams {
    fn inner(&self) -> hrburst::ModelParams {
        hrburst::ModelParams {
            a: self.a,
            b: self.b,
            c: self.c,
            d: self.d,
            r: self.r,
            sigma: self.sigma,
            v0: self.v0,
            i_app: self.i_app,
        }
    }

    fn resolve(p: Option<&Self>) -> PyResult<hrburst::ModelParams> {
        let p = p.map(Self::inner).unwrap_or_default();
        p.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(p)
    }
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let d = hrburst::ModelParams::default();
        let mut p = Self {
            a: d.a,
            b: d.b,
            c: d.c,
            d: d.d,
            r: d.r,
            sigma: d.sigma,
            v0: d.v0,
            i_app: d.i_app,
        };
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let v: f64 = v.extract()?;
                match key.as_str() {
                    "a" => p.a = v,
                    "b" => p.b = v,
                    "c" => p.c = v,
                    "d" => p.d = v,
                    "r" => p.r = v,
                    "sigma" => p.sigma = v,
                    "V0" => p.v0 = v,
                    "I" => p.i_app = v,
                    other => return Err(PyValueError::new_err(format!("unknown parameter {other:?}"))),
                }
            }
        }
        Ok(p)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(a={}, b={}, c={}, d={}, r={}, sigma={}, V0={}, I={})",
            self.a, self.b, self.c, self.d, self.r, self.sigma, self.v0, self.i_app
        )
    }
}

/// Converged periodic burst of the full model.
#[pyclass(name = "BurstOrbit", frozen)]
struct PyBurstOrbit {
    inner: hrburst::BurstOrbit,
}

#[pymethods]
impl PyBurstOrbit {
    #[getter]
    fn period(&self) -> f64 {
        self.inner.period
    }

    #[getter]
    fn spike_count(&self) -> usize {
        self.inner.spike_count()
    }

    #[getter]
    fn spike_phases(&self) -> Vec<f64> {
        self.inner.markers.spike_phases.clone()
    }

    #[getter]
    fn hmax_phase(&self) -> Option<f64> {
        self.inner.markers.hmax_phase
    }

    #[getter]
    fn h_range(&self) -> (f64, f64) {
        self.inner.component_range(2)
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    /// (V, n, h) at phase `theta`.
    fn state_at_phase(&self, theta: f64) -> (f64, f64, f64) {
        let x = self.inner.state_at_phase(theta);
        (x[0], x[1], x[2])
    }

    /// Phase, V, n, h sample columns.
    fn samples(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.inner.samples;
        (
            s.iter().map(|x| x.theta).collect(),
            s.iter().map(|x| x.state[0]).collect(),
            s.iter().map(|x| x.state[1]).collect(),
            s.iter().map(|x| x.state[2]).collect(),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "BurstOrbit(period={:.6}, spikes={})",
            self.inner.period,
            self.inner.spike_count()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (params=None))]
fn burst_orbit(py: Python<'_>, params: Option<PyModelParams>) -> PyResult<PyBurstOrbit> {
    let p = PyModelParams::resolve(params.as_ref())?;
    let inner = py
        .detach(|| find_burst_orbit(&p, &OrbitConfig::default()))
        .map_err(numerical)?;
    Ok(PyBurstOrbit { inner })
}

/// Period of the fast-subsystem spiking cycle at frozen `h`.
#[pyfunction]
#[pyo3(signature = (h, params=None))]
fn fast_period(py: Python<'_>, h: f64, params: Option<PyModelParams>) -> PyResult<f64> {
    let p = PyModelParams::resolve(params.as_ref())?;
    py.detach(|| find_fast_orbit(h, &p, &OrbitConfig::default()))
        .map(|o| o.period)
        .map_err(numerical)
}

#[pyclass(name = "BifurcationPoint", get_all, frozen)]
struct PyBifurcationPoint {
    label: String,
    kind: String,
    h: f64,
    #[pyo3(name = "V")]
    v: f64,
    n: f64,
}

#[pymethods]
impl PyBifurcationPoint {
    fn __repr__(&self) -> String {
        format!("BifurcationPoint({} {} h={:.10})", self.label, self.kind, self.h)
    }
}

/// Saddle-node, Hopf and homoclinic points of the fast subsystem.
#[pyfunction]
#[pyo3(signature = (params=None))]
fn bifurcation_points(py: Python<'_>, params: Option<PyModelParams>) -> PyResult<Vec<PyBifurcationPoint>> {
    let p = PyModelParams::resolve(params.as_ref())?;
    let mut pts = saddle_node_points(&p);
    pts.extend(hopf_points(&p).map_err(numerical)?);
    pts.push(
        py.detach(|| homoclinic_h(&p, &HomoclinicConfig::default()))
            .map_err(numerical)?,
    );
    Ok(pts
        .into_iter()
        .map(|b| PyBifurcationPoint {
            label: b.label,
            kind: format!("{:?}", b.kind).to_lowercase(),
            h: b.h,
            v: b.v,
            n: b.n,
        })
        .collect())
}

/// Sampled burst phase response, positive = delay.
#[pyclass(name = "PhaseResponse", get_all, frozen)]
struct PyPhaseResponse {
    theta: Vec<f64>,
    dtheta: Vec<f64>,
    normalization_error: f64,
    /// (start, end) phases of the active, quiescent and pre-onset segments.
    segments: Vec<(f64, f64)>,
}

#[pyfunction]
#[pyo3(signature = (orbit, resolution=2500))]
fn adjoint_response(py: Python<'_>, orbit: &PyBurstOrbit, resolution: usize) -> PyResult<PyPhaseResponse> {
    let cfg = AdjointConfig {
        resolution,
        ..Default::default()
    };
    let (sol, prc) = py.detach(|| adjoint_bprc(&orbit.inner, &cfg)).map_err(numerical)?;
    let s = segment_decomposition(&prc, &orbit.inner);
    Ok(PyPhaseResponse {
        normalization_error: sol.normalization_error(&orbit.inner),
        theta: prc.theta,
        dtheta: prc.dtheta,
        segments: vec![s.active, s.quiescent, s.onset],
    })
}

#[pyclass(name = "Perturbation", get_all, frozen)]
struct PyPerturbation {
    theta: f64,
    dtheta: Vec<f64>,
    spike_counts: Vec<usize>,
    burst_starts: Vec<f64>,
    classification: String,
}

#[pymethods]
impl PyPerturbation {
    fn __repr__(&self) -> String {
        format!(
            "Perturbation(theta={}, {}, dtheta={:?}, spikes={:?})",
            self.theta, self.classification, self.dtheta, self.spike_counts
        )
    }
}

fn outcome(theta: f64, r: Result<hrburst::direct::PerturbationResult, DirectError>) -> PyResult<PyPerturbation> {
    match r {
        Ok(r) => Ok(PyPerturbation {
            theta: r.theta,
            dtheta: r.dtheta,
            spike_counts: r.spike_counts,
            burst_starts: r.burst_starts,
            classification: r.classification.as_str().into(),
        }),
        Err(DirectError::Silenced { .. }) => Ok(PyPerturbation {
            theta,
            dtheta: Vec::new(),
            spike_counts: Vec::new(),
            burst_starts: Vec::new(),
            classification: "silenced".into(),
        }),
        Err(e) => Err(numerical(e)),
    }
}

/// Inject one synaptic spike at phase `theta` and measure the burst response.
#[pyfunction]
#[pyo3(signature = (orbit, polarity, gsyn, theta, n_orders=3, template_spike=3))]
fn perturb(
    py: Python<'_>,
    orbit: &PyBurstOrbit,
    polarity: &str,
    gsyn: f64,
    theta: f64,
    n_orders: usize,
    template_spike: usize,
) -> PyResult<PyPerturbation> {
    let pol = self::polarity(polarity)?;
    if !(0.0..1.0).contains(&theta) || !(gsyn >= 0.0) || n_orders == 0 {
        return Err(PyValueError::new_err(
            "need 0 <= theta < 1, gsyn >= 0 and n_orders >= 1",
        ));
    }
    let tpl = extract_spike_template(&orbit.inner, template_spike).map_err(numerical)?;
    let cfg = DirectConfig {
        n_orders,
        ..Default::default()
    };
    let r = py.detach(|| inject_and_measure(&orbit.inner, &tpl, &PerturbationSpec::new(pol, gsyn, theta), &cfg));
    outcome(theta, r)
}

/// Direct phase response over `n_phases` onset phases.
#[pyfunction]
#[pyo3(signature = (orbit, polarity, gsyn, n_phases=100, n_orders=1, template_spike=3))]
fn sweep(
    py: Python<'_>,
    orbit: &PyBurstOrbit,
    polarity: &str,
    gsyn: f64,
    n_phases: usize,
    n_orders: usize,
    template_spike: usize,
) -> PyResult<Vec<PyPerturbation>> {
    let pol = self::polarity(polarity)?;
    if !(gsyn >= 0.0) || n_orders == 0 || n_phases == 0 {
        return Err(PyValueError::new_err("need gsyn >= 0, n_orders >= 1 and n_phases >= 1"));
    }
    let tpl = extract_spike_template(&orbit.inner, template_spike).map_err(numerical)?;
    let cfg = DirectConfig {
        n_orders,
        ..Default::default()
    };
    let phases = sweep_phases(&orbit.inner, n_phases);
    let sw = py.detach(|| direct_sweep(&orbit.inner, &tpl, pol, gsyn, &phases, &cfg));
    sw.points.into_iter().map(|p| outcome(p.theta, p.result)).collect()
}

#[pyclass(name = "Isochron", get_all, frozen)]
struct PyIsochron {
    theta: f64,
    h: f64,
    /// (V, n) points from the base outward.
    inner: Vec<(f64, f64)>,
    outer: Vec<(f64, f64)>,
    complete: bool,
    max_return_error: f64,
}

/// Isochron of phase `theta` on the fast-subsystem cycle at frozen `h`.
#[pyfunction]
#[pyo3(signature = (h, theta, seeds=40, max_points=200, params=None))]
fn isochron(
    py: Python<'_>,
    h: f64,
    theta: f64,
    seeds: usize,
    max_points: usize,
    params: Option<PyModelParams>,
) -> PyResult<PyIsochron> {
    let p = PyModelParams::resolve(params.as_ref())?;
    if !(0.0..1.0).contains(&theta) || seeds < 2 {
        return Err(PyValueError::new_err("need 0 <= theta < 1 and seeds >= 2"));
    }
    let cfg = IsochronConfig {
        seeds,
        max_points,
        ..Default::default()
    };
    let iso = py
        .detach(|| -> Result<_, String> {
            let orbit = find_fast_orbit(h, &p, &OrbitConfig::default()).map_err(|e| e.to_string())?;
            compute_isochron(&orbit, theta, &cfg).map_err(|e| e.to_string())
        })
        .map_err(numerical)?;
    let pts = |b: &[hrburst::isochron::IsochronPoint]| b.iter().map(|q| (q.v, q.n)).collect();
    Ok(PyIsochron {
        theta,
        h,
        inner: pts(&iso.inner),
        outer: pts(&iso.outer),
        complete: iso.complete,
        max_return_error: iso.retained().map(|q| q.return_error).fold(0.0, f64::max),
    })
}

#[pymodule]
#[pyo3(name = "hrburst")]
fn hrburst_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyBurstOrbit>()?;
    m.add_class::<PyBifurcationPoint>()?;
    m.add_class::<PyPhaseResponse>()?;
    m.add_class::<PyPerturbation>()?;
    m.add_class::<PyIsochron>()?;
    m.add_function(wrap_pyfunction!(burst_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(fast_period, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcation_points, m)?)?;
    m.add_function(wrap_pyfunction!(adjoint_response, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(isochron, m)?)?;
    Ok(())
}
