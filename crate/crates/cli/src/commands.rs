use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hrburst::adjoint::{adjoint_bprc, segment_decomposition};
use hrburst::bifurcation::{
    cycle_family, equilibrium_branches, export_skeleton, homoclinic_h, hopf_points, saddle_node_points,
    BifurcationPoint,
};
use hrburst::direct::{direct_sweep, inject_and_measure, sweep_phases, DirectError, DirectSweep, PerturbationSpec};
use hrburst::export::{
    adjoint_table, equilibrium_table, events_table, fmt_num, isochron_table, orbit_table, perturbation_table,
    plane_table, prc_table, skeleton_tables, sweep_table, template_table, write_json, OrbitSummary, Table,
};
use hrburst::isochron::{isochron_portrait, perturbation_trace, TraceStatus};
use hrburst::{extract_spike_template, find_burst_orbit, BurstOrbit, SpikeTemplate};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Overrides, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Orbit,
    Bifdiag,
    Adjoint,
    Direct,
    Snrc,
    Isochron,
    Perturb,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Bifdiag => "bifdiag",
            Command::Adjoint => "adjoint",
            Command::Direct => "direct",
            Command::Snrc => "snrc",
            Command::Isochron => "isochron",
            Command::Perturb => "perturb",
        }
    }
}

/// Console lines and the manifest of one run.
#[derive(Debug, Clone)]
pub struct Report {
    pub lines: Vec<String>,
    pub manifest: Value,
}

/// Collects outputs, timings and console lines while a command runs.
struct Run<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    outputs: Vec<String>,
    timings: BTreeMap<String, f64>,
    status: BTreeMap<String, usize>,
    lines: Vec<String>,
    summary: serde_json::Map<String, Value>,
}

impl<'a> Run<'a> {
    fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let v = f();
        self.timings.insert(label.into(), start.elapsed().as_secs_f64() * 1e3);
        v
    }

    fn path(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf, CliError> {
        let p = self.out.join(rel.as_ref());
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        self.outputs.push(rel.as_ref().to_string_lossy().replace('\\', "/"));
        Ok(p)
    }

    fn table(&mut self, rel: impl AsRef<Path>, t: &Table) -> Result<(), CliError> {
        let p = self.path(rel)?;
        t.write(p)?;
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: impl AsRef<Path>, v: &T) -> Result<(), CliError> {
        let p = self.path(rel)?;
        write_json(p, v)?;
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.lines.push(line);
    }

    fn note(&mut self, key: &str, v: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(v).expect("serializable summary"));
    }

    fn count(&mut self, status: &str) {
        *self.status.entry(status.into()).or_default() += 1;
    }

    fn reference(&mut self) -> Result<(BurstOrbit, SpikeTemplate), CliError> {
        let cfg = self.cfg;
        let orbit = self.timed("orbit", || find_burst_orbit(&cfg.model, &cfg.orbit))?;
        let tpl = extract_spike_template(&orbit, cfg.sweep.template_spike)?;
        Ok((orbit, tpl))
    }
}

/// Hex SHA-256 of the template waveform, identifying the presynaptic input.
pub fn template_hash(tpl: &SpikeTemplate) -> String {
    let mut h = Sha256::new();
    h.update(tpl.duration.to_le_bytes());
    for v in &tpl.voltage {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Conductance rendered for file names, e.g. `1e-4`.
fn gsyn_tag(g: f64) -> String {
    format!("{g:e}")
}

pub fn run(cmd: Command, cfg: &RunConfig, overrides: &Overrides) -> Result<Report, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", cfg.out.display())))?;
    let mut run = Run {
        cfg,
        out: cfg.out.clone(),
        outputs: Vec::new(),
        timings: BTreeMap::new(),
        status: BTreeMap::new(),
        lines: Vec::new(),
        summary: serde_json::Map::new(),
    };
    let start = Instant::now();
    match cmd {
        Command::Orbit => orbit(&mut run)?,
        Command::Bifdiag => bifdiag(&mut run)?,
        Command::Adjoint => adjoint(&mut run)?,
        Command::Direct => sweeps(&mut run, false)?,
        Command::Snrc => sweeps(&mut run, true)?,
        Command::Isochron => isochron(&mut run)?,
        Command::Perturb => perturb(&mut run)?,
    }
    run.timings.insert("total".into(), start.elapsed().as_secs_f64() * 1e3);
    run.json("config.json", cfg)?;
    let manifest = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "overrides": overrides,
        "config": cfg,
        "outputs": run.outputs,
        "timings_ms": run.timings,
        "status": run.status,
        "summary": run.summary,
    });
    write_json(cfg.out.join("manifest.json"), &manifest)?;
    Ok(Report {
        lines: run.lines,
        manifest,
    })
}

fn orbit(run: &mut Run) -> Result<(), CliError> {
    let (orbit, tpl) = run.reference()?;
    let summary = OrbitSummary::of(&orbit);
    run.table("orbit.csv", &orbit_table(&orbit, &["V", "n", "h"]))?;
    run.table("orbit_events.csv", &events_table(orbit.trajectory(), &["V", "n", "h"]))?;
    run.json("orbit_markers.json", &summary)?;
    run.table("template.csv", &template_table(&tpl))?;
    run.say(format!("period: {:.10}", orbit.period));
    run.say(format!("spikes: {}", orbit.spike_count()));
    run.say(format!("h-range: [{:.8}, {:.8}]", summary.h_range.0, summary.h_range.1));
    run.say(format!("residual: {:.3e}", orbit.residual));
    run.note("period", orbit.period);
    run.note("spikes", orbit.spike_count());
    run.note("h_range", summary.h_range);
    run.note("template_hash", template_hash(&tpl));
    Ok(())
}

fn bifdiag(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let b = &cfg.bifurcation;
    let p = &cfg.model;
    let branches = equilibrium_branches(p, b.v_range, b.n_samples);
    run.table("bifurcation.csv", &equilibrium_table(&branches))?;
    let mut points: Vec<BifurcationPoint> = saddle_node_points(p);
    points.extend(hopf_points(p)?);
    let hc = run.timed("homoclinic", || homoclinic_h(p, &b.homoclinic))?;
    points.push(hc);
    run.json("bifurcation_points.json", &points)?;
    for pt in &points {
        run.say(format!("{}: {:.10}", pt.label, pt.h));
    }
    run.note("points", &points);

    let family = run.timed("cycles", || {
        cycle_family(p, b.cycle_h_range.0, b.cycle_h_range.1, &b.cycles)
    })?;
    let mut t = Table::new(&["h", "V_min", "V_max", "period"]);
    for s in &family.samples {
        t.push_nums(&[s.h, s.v_min, s.v_max, s.period]);
    }
    run.table("cycles.csv", &t)?;
    run.note("cycle_family_end", family.terminal_h);

    let (orbit, _) = run.reference()?;
    let sk = run.timed("skeleton", || {
        export_skeleton(p, &orbit, b.skeleton_slices, b.ring_samples, &b.cycles)
    });
    for (name, t) in skeleton_tables(&sk) {
        run.table(format!("{name}.csv"), &t)?;
    }
    Ok(())
}

fn adjoint(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let (orbit, _) = run.reference()?;
    let (sol, prc) = run.timed("adjoint", || adjoint_bprc(&orbit, &cfg.adjoint))?;
    let segments = segment_decomposition(&prc, &orbit);
    let prc = if cfg.sweep.polarity == hrburst::Polarity::Excitatory {
        prc
    } else {
        sol.bprc_for(cfg.sweep.polarity)
    };
    let norm_err = sol.normalization_error(&orbit);
    run.table("adjoint.csv", &adjoint_table(&sol))?;
    run.table("bprc.csv", &prc_table(&prc))?;
    run.json("segments.json", &segments)?;
    run.say(format!("period: {:.10}", orbit.period));
    run.say(format!("periods integrated: {}", sol.periods_used));
    run.say(format!("normalization error: {norm_err:.3e}"));
    run.say(format!(
        "segments: active [{:.4}, {:.4}], quiescent [{:.4}, {:.4}], onset [{:.4}, {:.4}]",
        segments.active.0,
        segments.active.1,
        segments.quiescent.0,
        segments.quiescent.1,
        segments.onset.0,
        segments.onset.1
    ));
    run.note("normalization_error", norm_err);
    run.note("periods_used", sol.periods_used);
    run.note("segments", segments);
    run.note("max_abs", prc.max_abs());
    Ok(())
}

fn sweep_metadata(
    cfg: &RunConfig,
    sweep: &DirectSweep,
    tpl: &SpikeTemplate,
    status: &BTreeMap<String, usize>,
) -> Value {
    let dc = cfg.direct_config();
    json!({
        "gsyn": sweep.gsyn,
        "polarity": sweep.polarity,
        "Vsyn": cfg.synapse_for(sweep.gsyn).vsyn,
        "n_phases": sweep.points.len(),
        "n_orders": sweep.n_orders,
        "template_hash": template_hash(tpl),
        "template_spike": cfg.sweep.template_spike,
        "rtol": dc.integrator.rtol,
        "atol": dc.integrator.atol,
        "silence_periods": dc.silence_periods,
        "status": status,
    })
}

fn snrc_table(sweep: &DirectSweep) -> Table {
    let n = sweep.n_orders;
    let mut header: Vec<String> = vec!["theta".into()];
    header.extend((0..=n).map(|k| format!("spikes_{k}")));
    header.extend(["classification".into(), "status".into()]);
    let mut t = Table::new(&header);
    for p in &sweep.points {
        let mut row = vec![fmt_num(p.theta)];
        match &p.result {
            Ok(r) => {
                row.extend((0..=n).map(|k| r.spike_counts.get(k).map_or(String::new(), |c| c.to_string())));
                row.extend([r.classification.as_str().into(), "ok".into()]);
            }
            Err(e) => {
                row.extend((0..=n).map(|_| String::new()));
                let class = if matches!(e, DirectError::Silenced { .. }) {
                    "silenced"
                } else {
                    ""
                };
                row.extend([class.into(), e.code().into()]);
            }
        }
        t.push(row);
    }
    t
}

fn sweeps(run: &mut Run, snrc: bool) -> Result<(), CliError> {
    let cfg = run.cfg;
    let (orbit, tpl) = run.reference()?;
    let phases = sweep_phases(&orbit, cfg.sweep.n_phases);
    let dc = cfg.direct_config();
    let pol = cfg.sweep.polarity;
    let prefix = if snrc { "snrc" } else { "direct" };
    let mut results = Vec::new();
    for &g in &cfg.sweep.gsyn {
        let tag = format!("{}_g{}", pol.short(), gsyn_tag(g));
        let sweep = run.timed(&format!("sweep_{tag}"), || {
            direct_sweep(&orbit, &tpl, pol, g, &phases, &dc)
        });
        let mut status = BTreeMap::new();
        for p in &sweep.points {
            let s = match &p.result {
                Ok(_) => "ok",
                Err(e) => e.code(),
            };
            *status.entry(s.to_string()).or_insert(0usize) += 1;
            run.count(s);
        }
        if snrc {
            run.table(format!("snrc_{tag}.csv"), &snrc_table(&sweep))?;
        } else {
            run.table(format!("direct_{tag}.csv"), &sweep_table(&sweep))?;
        }
        run.json(
            format!("{prefix}_{tag}.json"),
            &sweep_metadata(cfg, &sweep, &tpl, &status),
        )?;
        let ok: Vec<_> = sweep.points.iter().filter_map(|p| p.result.as_ref().ok()).collect();
        let max_shift = ok
            .iter()
            .filter_map(|r| r.dtheta.first())
            .fold(0.0f64, |m, d| m.max(d.abs()));
        let silenced = status.get("silenced").copied().unwrap_or(0);
        let failed = sweep.points.len() - ok.len() - silenced;
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &ok {
            *counts.entry(r.spike_counts[0]).or_default() += 1;
        }
        run.say(format!(
            "gsyn {} {}: {} points, {} silenced, {} failed, max |dtheta_1| {:.6}",
            gsyn_tag(g),
            pol.short(),
            sweep.points.len(),
            silenced,
            failed,
            max_shift
        ));
        if snrc {
            let dist: Vec<String> = counts.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            run.say(format!("  spikes_0 distribution: {}", dist.join(" ")));
        }
        results.push(json!({"gsyn": g, "silenced": silenced, "failed": failed, "max_abs_dtheta_1": max_shift, "spikes_0": counts}));
    }
    run.note("sweeps", results);
    Ok(())
}

fn isochron(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let s = &cfg.isochron;
    let mut summaries = Vec::new();
    for &h in &s.h {
        let dir = format!("isochron_h{h}");
        let set = run.timed(&format!("portrait_h{h}"), || {
            isochron_portrait(h, &s.phases, &cfg.model, &cfg.orbit, &s.construction)
        })?;
        for iso in &set.isochrons {
            run.table(format!("{dir}/isochron_{:.4}.csv", iso.theta), &isochron_table(iso))?;
        }
        run.table(format!("{dir}/orbit.csv"), &orbit_table(&set.orbit, &["V", "n"]))?;
        run.json(format!("{dir}/equilibria.json"), &set.equilibria)?;
        run.table(format!("{dir}/v_nullcline.csv"), &plane_table(&set.v_nullcline))?;
        run.table(format!("{dir}/n_nullcline.csv"), &plane_table(&set.n_nullcline))?;
        let pass = set.return_pass_fraction(s.construction.return_tol, None);
        let mut summary = json!({
            "h": h,
            "period": set.orbit.period,
            "points": set.retained_points().count(),
            "return_pass_fraction": pass,
            "incomplete": set.isochrons.iter().filter(|i| !i.complete).map(|i| i.theta).collect::<Vec<_>>(),
            "diagnostics": set.isochrons.iter().map(|i| json!({"theta": i.theta, "diagnostics": i.diagnostics})).collect::<Vec<_>>(),
        });
        run.say(format!(
            "h {h}: period {:.6}, {} points, return pass {:.4}",
            set.orbit.period,
            set.retained_points().count(),
            pass
        ));
        if set.isochrons.len() >= hrburst::isochron::MIN_TRACE_ISOCHRONS {
            let prc = run.timed(&format!("trace_h{h}"), || {
                perturbation_trace(&set, s.trace_eps, s.trace_samples, &s.construction)
            })?;
            let mut t = Table::new(&["theta", "dtheta", "dtheta_direct", "status"]);
            for x in &prc.samples {
                let status = match x.status {
                    TraceStatus::Ok => "ok",
                    TraceStatus::OutsideBasin => "outside-basin",
                };
                run.count(status);
                t.push(vec![
                    fmt_num(x.theta),
                    fmt_num(x.dtheta.unwrap_or(f64::NAN)),
                    fmt_num(x.dtheta_direct.unwrap_or(f64::NAN)),
                    status.into(),
                ]);
            }
            run.table(format!("{dir}/fast_prc.csv"), &t)?;
            summary["fast_prc_max_abs"] = json!(prc.max_abs());
            summary["fast_prc_max_abs_direct"] = json!(prc.max_abs_direct());
            summary["outside_basin"] = json!(prc.outside_basin());
            run.say(format!(
                "  fast PRC (eps {}): max |dtheta| {:.6} (isochrons), {:.6} (forward), {} outside basin",
                s.trace_eps,
                prc.max_abs(),
                prc.max_abs_direct(),
                prc.outside_basin()
            ));
        }
        summaries.push(summary);
    }
    run.note("portraits", summaries);
    Ok(())
}

fn perturb(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let (orbit, tpl) = run.reference()?;
    let g = cfg.sweep.gsyn[0];
    let pol = cfg.sweep.polarity;
    let theta = cfg.sweep.theta;
    let spec = PerturbationSpec::new(pol, g, theta).with_kinetics(&cfg.synapse);
    let dc = hrburst::direct::DirectConfig {
        keep_trajectory: true,
        ..cfg.direct_config()
    };
    run.say(format!("perturbation: {} gsyn {} at theta {}", pol.short(), g, theta));
    match run.timed("perturb", || inject_and_measure(&orbit, &tpl, &spec, &dc)) {
        Ok(r) => {
            run.table("perturbation.csv", &perturbation_table(&orbit, &r))?;
            run.json("perturbation.json", &r)?;
            run.say(format!("classification: {}", r.classification.as_str()));
            let shifts: Vec<String> = r.dtheta.iter().map(|d| format!("{d:.8}")).collect();
            run.say(format!("dtheta: [{}]", shifts.join(", ")));
            run.say(format!("spikes: {:?}", r.spike_counts));
            run.count("ok");
            run.note("classification", r.classification);
            run.note("dtheta", &r.dtheta);
            run.note("spike_counts", &r.spike_counts);
        }
        Err(DirectError::Silenced { periods }) => {
            run.json(
                "perturbation.json",
                &json!({"theta": theta, "classification": "silenced", "periods": periods}),
            )?;
            run.say("classification: silenced".into());
            run.count("silenced");
            run.note("classification", "silenced");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
