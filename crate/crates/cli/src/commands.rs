//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use comvr::campaign::{
    aggregate, find_critical_loading, generate_scenarios, run_campaign, CampaignSetup, ScenarioConfig,
};
use comvr::com::{mass_diagram, mass_points, CenterOfMass};
use comvr::controller::{attach_fleet, centers_for, load_fleet, parse_fleet, regulate as run_regulation, DispatchMode, TraceEvent, VppActor};
use comvr::fixtures::{
    calibrate_main_segment_km, catalogue, write_fixtures, RHODES_FLEET_JSON, RHODES_MAIN_SEGMENT_KM,
    RHODES_NETWORK_JSON, RHODES_TARGET_CRITICAL_KW,
};
use comvr::network::{load_network, BusKind, NetworkModel};
use comvr::report::{emit_regulation, emit_report, format_stats, read_report_file, ReportInput};
use comvr::topology::{extract_main_body, MainBody};
use num_complex::Complex64;

use crate::config::RunConfig;

struct Feeder {
    model: NetworkModel,
    fleet: Vec<VppActor>,
    body: MainBody,
}

impl Feeder {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let (mut model, fleet) = match &cfg.network {
            None => {
                let model = NetworkModel::from_json(RHODES_NETWORK_JSON)?;
                let fleet = match &cfg.fleet {
                    Some(p) => load_fleet(p)?,
                    None => parse_fleet(RHODES_FLEET_JSON)?,
                };
                (model, fleet)
            }
            Some(p) => {
                let model = load_network(p)?;
                let fleet = match &cfg.fleet {
                    Some(f) => load_fleet(f)?,
                    None => Vec::new(),
                };
                (model, fleet)
            }
        };
        attach_fleet(&mut model, &fleet)?;
        let body = extract_main_body(&model);
        Ok(Self { model, fleet, body })
    }

    fn loads(&self, loading: f64) -> Vec<Complex64> {
        self.model.buses.iter().map(|b| b.base_load * loading).collect()
    }

    fn base_loads(&self) -> Vec<Complex64> {
        self.loads(1.0)
    }
}

fn check_loading(loading: f64) -> Result<()> {
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(crate::UsageError(format!("loading must be a non-negative number, got {loading}")).into());
    }
    Ok(())
}

fn kind_name(kind: BusKind) -> &'static str {
    match kind {
        BusKind::FeederHead => "feeder-head",
        BusKind::Junction => "junction",
        BusKind::Load => "load",
        BusKind::Pole => "pole",
    }
}

pub fn pf(cfg: &RunConfig, loading: f64, out: Option<&Path>) -> Result<()> {
    check_loading(loading)?;
    let feeder = Feeder::load(cfg)?;
    let (sol, _, _) = centers_for(
        &feeder.model,
        &feeder.body,
        &feeder.fleet,
        &feeder.loads(loading),
        cfg.centers(),
    )?;
    let mut csv = String::from("bus,kind,v_pu,angle_deg,p_kw,q_kvar\n");
    for (k, bus) in feeder.model.buses.iter().enumerate() {
        let s = sol.injections_kw[k];
        writeln!(
            csv,
            "{},{},{:.6},{:.4},{:.3},{:.3}",
            bus.id,
            kind_name(bus.kind),
            sol.magnitude(k),
            sol.angle(k).to_degrees(),
            s.re,
            s.im
        )?;
    }
    let (min_bus, min_v) = sol.min_voltage();
    log::info!("lowest voltage {min_v:.4} p.u. at bus {min_bus}, losses {:.1} kW", sol.losses_kw());
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

pub fn topology(cfg: &RunConfig) -> Result<()> {
    let feeder = Feeder::load(cfg)?;
    let body = &feeder.body;
    println!(
        "main body: {} buses, {} to {}, length {:.4} ohm",
        body.len(),
        body.chain.first().copied().unwrap_or_default(),
        body.chain.last().copied().unwrap_or_default(),
        body.total_length()
    );
    println!("{:>4} {:>6} {:>10}  branches", "pos", "bus", "coord_ohm");
    for (pos, bus) in body.chain.iter().enumerate() {
        let branches: Vec<String> = body.branches[pos].iter().map(|b| b.to_string()).collect();
        println!("{pos:>4} {bus:>6} {:>10.4}  {}", body.coords[pos], branches.join(" "));
    }
    Ok(())
}

fn fmt_center(c: &Option<CenterOfMass>) -> String {
    match c {
        Some(c) => format!("{:.4} ± {:.4} ohm (weight {:.4})", c.g, c.delta_g, c.total_weight),
        None => "none".to_string(),
    }
}

pub fn com(cfg: &RunConfig, loading: f64, diagram: bool) -> Result<()> {
    check_loading(loading)?;
    let feeder = Feeder::load(cfg)?;
    let opts = cfg.centers();
    let loads = feeder.loads(loading);
    let (sol, powers, centers) = centers_for(&feeder.model, &feeder.body, &feeder.fleet, &loads, opts)?;
    let (min_bus, min_v) = sol.min_voltage();
    println!("lowest voltage: {min_v:.4} p.u. at bus {min_bus}");
    println!("g_G : {}", fmt_center(&centers.g_g));
    println!("g_L : {}", fmt_center(&centers.g_l));
    println!("g_GL: {}", fmt_center(&centers.g_gl));
    if diagram {
        let points = mass_points(&feeder.model, &feeder.body, &sol, &powers, None, opts)?;
        print!("{}", mass_diagram(&feeder.body, &points, &centers));
    }
    Ok(())
}

fn scenario_config(cfg: &RunConfig) -> ScenarioConfig {
    ScenarioConfig {
        load_factor: cfg.load_factor,
        ..ScenarioConfig::default()
    }
}

fn critical_kw(feeder: &Feeder, cfg: &RunConfig) -> Result<f64> {
    let crit = find_critical_loading(&feeder.model, &feeder.base_loads(), cfg.regulation.v_min)?;
    log::info!(
        "critical loading {:.1} kW (lowest voltage {:.4} p.u.)",
        crit.total_load_kw,
        crit.min_v
    );
    Ok(crit.total_load_kw)
}

pub fn regulate(
    cfg: &RunConfig,
    mode: DispatchMode,
    step: f64,
    loading: Option<f64>,
    scenario: Option<usize>,
) -> Result<()> {
    if !(step > 0.0) {
        return Err(crate::UsageError(format!("step must be positive, got {step}")).into());
    }
    let feeder = Feeder::load(cfg)?;
    let (loads, actors, label) = match scenario {
        Some(n) => {
            let crit = critical_kw(&feeder, cfg)?;
            let all = generate_scenarios(
                &feeder.model,
                &feeder.fleet,
                crit,
                n + 1,
                cfg.seed,
                mode,
                &scenario_config(cfg),
            )?;
            let sc = &all[n];
            (sc.bus_loads(&feeder.model), sc.actors(&feeder.fleet), format!("scenario {n}, seed {}", cfg.seed))
        }
        None => {
            let l = loading.unwrap_or(1.0);
            check_loading(l)?;
            (feeder.loads(l), feeder.fleet.clone(), format!("loading {l}"))
        }
    };
    let mut reg = cfg.regulation;
    reg.record_profiles = true;
    let out = run_regulation(&feeder.model, &feeder.body, &actors, &loads, mode, step, &reg)?;

    let total: f64 = loads.iter().map(|l| l.re).sum();
    let accepted = out.trace.iter().filter(|t| t.event == TraceEvent::Accepted).count();
    println!("{} at step {step} kW, {label}, load {total:.1} kW", mode.as_str());
    println!(
        "result: {} after {} iterations ({} accepted, {} pass{})",
        if out.success { "success" } else { "failure" },
        out.iterations,
        accepted,
        out.passes,
        if out.passes == 1 { "" } else { "es" }
    );
    println!("lowest voltage: {:.4} -> {:.4} p.u.", out.initial_min_v, out.final_min_v);
    println!(
        "VPP power: {:.1} kW, change {:+.1} kW, IL shed {:.1} kW",
        out.initial_vpp_kw, out.vpp_change_kw, out.il_shed_kw
    );
    if let Some(why) = &out.failure {
        println!("reason: {why}");
    }
    let title = format!("{} {step} kW, {label}", mode.as_str());
    for p in emit_regulation(&out, &feeder.body.coords, reg.v_min, &title, &cfg.out_dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

pub fn campaign(cfg: &RunConfig) -> Result<()> {
    let feeder = Feeder::load(cfg)?;
    if feeder.fleet.is_empty() {
        return Err(crate::UsageError("a campaign needs a VPP fleet (--fleet)".into()).into());
    }
    let crit = critical_kw(&feeder, cfg)?;
    let scfg = scenario_config(cfg);
    let scenarios = cfg
        .modes
        .iter()
        .map(|&m| generate_scenarios(&feeder.model, &feeder.fleet, crit, cfg.count, cfg.seed, m, &scfg))
        .collect::<comvr::Result<Vec<_>>>()?;
    let setup = CampaignSetup {
        model: &feeder.model,
        body: &feeder.body,
        fleet: &feeder.fleet,
        modes: cfg.modes.clone(),
        steps_kw: cfg.steps_kw.clone(),
        regulation: cfg.regulation,
    };
    let started = std::time::Instant::now();
    let res = run_campaign(&setup, &scenarios, cfg.threads)?;
    log::info!("{} runs in {:.2?}", res.records.len(), started.elapsed());
    print!("{}", format_stats(&res.stats));
    for p in emit_report(&res.records, &res.stats, &cfg.out_dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn is_report_name(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()),
        Some("csv" | "json" | "svg" | "txt")
    )
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_report_name(f))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn report(paths: &[PathBuf]) -> Result<()> {
    for path in expand(paths)? {
        let shown = path.display();
        match read_report_file(&path)? {
            ReportInput::Outcomes(records) => {
                let stats = aggregate(&records);
                println!("{shown}: {} outcome records in {} cells", records.len(), stats.cells.len());
                for c in &stats.cells {
                    println!(
                        "  {} {} kW: {:.1} % success ({} runs)",
                        c.mode.as_str(),
                        c.step_kw,
                        c.success_rate,
                        c.runs
                    );
                }
            }
            ReportInput::Stats(stats) => {
                println!("{shown}: statistics of {} cells", stats.cells.len());
                print!("{}", format_stats(&stats));
            }
            ReportInput::Trace(trace) => {
                let accepted = trace.iter().filter(|t| t.event == TraceEvent::Accepted).count();
                println!("{shown}: regulation trace, {} records, {accepted} accepted steps", trace.len());
            }
            ReportInput::Regulation(out) => println!(
                "{shown}: regulation {} after {} iterations, lowest voltage {:.4} -> {:.4} p.u.",
                if out.success { "success" } else { "failure" },
                out.iterations,
                out.initial_min_v,
                out.final_min_v
            ),
            ReportInput::Plot(plot) => println!(
                "{shown}: voltage profile plot, {} profiles over {} buses",
                plot.profiles.len(),
                plot.coords.len()
            ),
            ReportInput::Tables(text) => println!("{shown}: campaign tables, {} lines", text.lines().count()),
        }
    }
    Ok(())
}

pub fn fixtures(regenerate: Option<&Path>, calibrate: bool) -> Result<()> {
    for (name, note) in catalogue() {
        println!("{name}\n    {note}");
    }
    if let Some(dir) = regenerate {
        let km = if calibrate {
            let km = calibrate_main_segment_km(RHODES_TARGET_CRITICAL_KW)?;
            eprintln!("calibrated main segment length: {km:.6} km");
            km
        } else {
            RHODES_MAIN_SEGMENT_KM
        };
        for p in write_fixtures(dir, km)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}
