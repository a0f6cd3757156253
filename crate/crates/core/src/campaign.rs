//! Monte-Carlo evaluation: critical loading, scenario generation, the
//! (mode × step) sweep and its statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{regulate, ActorKind, DispatchMode, RegulationConfig, RegulationOutcome, VppActor};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::powerflow::solve;
use crate::topology::MainBody;

/// Stopping band of the critical-loading bisection, p.u.
pub const CRITICAL_BAND: f64 = 0.0005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLoading {
    pub scale: f64,
    pub total_load_kw: f64,
    pub min_v: f64,
    /// Set when the flow diverged before the limit was reached; `scale` is
    /// then the last feasible one.
    pub diverged: bool,
}

/// Uniform scale on `base_loads_kw` (idle VPP) at which the lowest bus
/// voltage reaches `v_limit`.
pub fn find_critical_loading(
    model: &NetworkModel,
    base_loads_kw: &[Complex64],
    v_limit: f64,
) -> Result<CriticalLoading> {
    let min_v = |scale: f64| -> Option<f64> {
        let inj: Vec<Complex64> = base_loads_kw.iter().map(|l| -l * scale).collect();
        solve(model, &inj).ok().map(|s| s.min_voltage().1)
    };
    let total: f64 = base_loads_kw.iter().map(|l| l.re).sum();
    if total <= 0.0 {
        return Err(Error::Data("base profile carries no load".into()));
    }
    let mut lo = (0.0, 1.0);
    let mut hi = 1.0;
    // widen until the upper bracket violates or diverges
    loop {
        match min_v(hi) {
            Some(v) if v > v_limit => {
                lo = (hi, v);
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::Data("feeder never reaches the voltage limit".into()));
                }
            }
            _ => break,
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo.0 + hi);
        match min_v(mid) {
            Some(v) => {
                if (v - v_limit).abs() <= CRITICAL_BAND {
                    best = Some((mid, v));
                }
                if v > v_limit {
                    lo = (mid, v);
                } else {
                    hi = mid;
                }
                if (v - v_limit).abs() < 1e-9 {
                    break;
                }
            }
            None => hi = mid,
        }
        if hi - lo.0 < 1e-12 * hi {
            break;
        }
    }
    Ok(match best {
        Some((scale, v)) => CriticalLoading {
            scale,
            total_load_kw: scale * total,
            min_v: v,
            diverged: false,
        },
        None => {
            log::warn!("power flow diverges before {v_limit} p.u.; reporting last feasible loading");
            CriticalLoading {
                scale: lo.0,
                total_load_kw: lo.0 * total,
                min_v: lo.1,
                diverged: true,
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Mean total load as a multiple of the critical loading. The default puts
    /// the idle-VPP support need of the bundled feeder at about 1.1-1.2 MW.
    pub load_factor: f64,
    /// Std. dev. of the total load as a share of the critical loading.
    pub sigma_fraction: f64,
    pub multiplier_range: (f64, f64),
    /// Stochastic-DG availability is drawn uniformly in this range.
    pub availability_range: (f64, f64),
    /// Initial VPP schedule total (re-dispatch) is rescaled into this range, kW.
    pub schedule_range_kw: (f64, f64),
    /// Re-dispatch only: add the initial VPP generation to the drawn load,
    /// so the drawn total is the load net of the VPP schedule.
    pub net_of_schedule: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            load_factor: 1.25,
            sigma_fraction: 0.025,
            multiplier_range: (0.9, 1.1),
            availability_range: (0.3, 1.0),
            schedule_range_kw: (400.0, 1700.0),
            net_of_schedule: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub index: usize,
    pub seed: u64,
    pub total_load_kw: f64,
    /// Per-bus multiplier on the bus peak load (model bus order).
    pub multipliers: Vec<f64>,
    /// Initial setpoint per actor, kW.
    pub setpoints: Vec<f64>,
    /// Availability factor per actor.
    pub availability: Vec<f64>,
}

impl Scenario {
    pub fn bus_loads(&self, model: &NetworkModel) -> Vec<Complex64> {
        model
            .buses
            .iter()
            .zip(&self.multipliers)
            .map(|(b, m)| b.base_load * *m)
            .collect()
    }

    pub fn actors(&self, fleet: &[VppActor]) -> Vec<VppActor> {
        fleet
            .iter()
            .enumerate()
            .map(|(i, a)| VppActor {
                setpoint_kw: self.setpoints[i],
                availability: self.availability[i],
                ..a.clone()
            })
            .collect()
    }
}

fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Load draws are made first and identically in both modes, so the same
/// seed gives the same feeder loading for dispatch and re-dispatch.
pub fn generate_scenarios(
    model: &NetworkModel,
    fleet: &[VppActor],
    critical_kw: f64,
    count: usize,
    seed: u64,
    mode: DispatchMode,
    cfg: &ScenarioConfig,
) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::Config("scenario count must be at least 1".into()));
    }
    let mean = cfg.load_factor * critical_kw;
    let total_dist = Normal::new(mean, cfg.sigma_fraction * mean)
        .map_err(|e| Error::Config(e.to_string()))?;
    let (mlo, mhi) = cfg.multiplier_range;
    let (alo, ahi) = cfg.availability_range;
    let (slo, shi) = cfg.schedule_range_kw;
    let peaks: Vec<f64> = model.buses.iter().map(|b| b.base_load.re).collect();

    Ok((0..count)
        .map(|index| {
            let mut rng = scenario_rng(seed, index);
            let mut total = total_dist.sample(&mut rng).max(0.0);
            let raw: Vec<f64> = peaks
                .iter()
                .map(|&p| if p > 0.0 { rng.random_range(mlo..=mhi) } else { 0.0 })
                .collect();
            let weighted: f64 = raw.iter().zip(&peaks).map(|(u, p)| u * p).sum();
            let norm = if weighted > 0.0 { total / weighted } else { 0.0 };
            let mut multipliers: Vec<f64> = raw.iter().map(|u| u * norm).collect();

            let availability: Vec<f64> = fleet
                .iter()
                .map(|a| match a.kind {
                    ActorKind::StochasticDg => rng.random_range(alo..=ahi),
                    _ => a.availability,
                })
                .collect();
            let mut setpoints = vec![0.0; fleet.len()];
            if mode == DispatchMode::Redispatch {
                for (i, a) in fleet.iter().enumerate() {
                    if a.kind.is_generation() {
                        setpoints[i] = rng.random_range(0.0..=1.0) * availability[i] * a.rated_kw;
                    }
                }
                let sum: f64 = setpoints.iter().sum();
                let target = sum.clamp(slo, shi);
                if sum > 0.0 && target != sum {
                    let cap: f64 = fleet
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| a.kind.is_generation())
                        .map(|(i, a)| availability[i] * a.rated_kw)
                        .sum();
                    let target = target.min(cap);
                    // rescale toward the range, respecting each unit's limit
                    let mut factor = target / sum;
                    for _ in 0..20 {
                        let placed: f64 = fleet
                            .iter()
                            .enumerate()
                            .map(|(i, a)| (setpoints[i] * factor).min(availability[i] * a.rated_kw))
                            .sum();
                        if (placed - target).abs() < 1e-9 || placed <= 0.0 {
                            break;
                        }
                        factor *= target / placed;
                    }
                    for (i, a) in fleet.iter().enumerate() {
                        setpoints[i] = (setpoints[i] * factor).min(availability[i] * a.rated_kw);
                    }
                }
            }
            if mode == DispatchMode::Redispatch && cfg.net_of_schedule {
                let gen: f64 = setpoints.iter().sum();
                let gross = total + gen;
                if total > 0.0 {
                    multipliers.iter_mut().for_each(|m| *m *= gross / total);
                }
                total = gross;
            }
            Scenario {
                index,
                seed,
                total_load_kw: total,
                multipliers,
                setpoints,
                availability,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Success,
    Failure,
    /// Entry power flow diverged; excluded from statistics.
    Discarded,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Failure => "failure",
            RunStatus::Discarded => "discarded",
        }
    }
}

/// One row of `outcomes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub mode: DispatchMode,
    pub step_kw: f64,
    pub scenario: usize,
    pub status: RunStatus,
    pub initial_load_kw: f64,
    pub initial_vpp_kw: f64,
    pub vpp_change_kw: f64,
    pub il_shed_kw: f64,
    pub iterations: usize,
    pub loop_passes: usize,
    pub passes: u8,
    pub initial_min_v: f64,
    pub final_min_v: f64,
    pub final_max_v: f64,
}

impl OutcomeRecord {
    fn from_outcome(mode: DispatchMode, step: f64, sc: &Scenario, out: &RegulationOutcome) -> Self {
        Self {
            mode,
            step_kw: step,
            scenario: sc.index,
            status: if out.success {
                RunStatus::Success
            } else {
                RunStatus::Failure
            },
            initial_load_kw: sc.total_load_kw,
            initial_vpp_kw: out.initial_vpp_kw,
            vpp_change_kw: out.vpp_change_kw,
            il_shed_kw: out.il_shed_kw,
            iterations: out.iterations,
            loop_passes: out.loop_passes,
            passes: out.passes,
            initial_min_v: out.initial_min_v,
            final_min_v: out.final_min_v,
            final_max_v: out.final_max_v,
        }
    }

    fn discarded(mode: DispatchMode, step: f64, sc: &Scenario) -> Self {
        Self {
            mode,
            step_kw: step,
            scenario: sc.index,
            status: RunStatus::Discarded,
            initial_load_kw: sc.total_load_kw,
            initial_vpp_kw: sc.setpoints.iter().sum(),
            vpp_change_kw: 0.0,
            il_shed_kw: 0.0,
            iterations: 0,
            loop_passes: 0,
            passes: 0,
            initial_min_v: f64::NAN,
            final_min_v: f64::NAN,
            final_max_v: f64::NAN,
        }
    }

    /// Initial VPP power plus its change.
    pub fn total_vpp_kw(&self) -> f64 {
        self.initial_vpp_kw + self.vpp_change_kw
    }

    /// Scenario entered regulation with a violation.
    pub fn had_violation(&self) -> bool {
        self.iterations > 0 || self.loop_passes > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub max: Option<f64>,
    pub min: Option<f64>,
}

impl Summary {
    /// Population statistics in input order.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                mean: None,
                std: None,
                max: None,
                min: None,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            count: values.len(),
            mean: Some(mean.clamp(min, max)),
            std: Some(var.sqrt()),
            max: Some(max),
            min: Some(min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub initial_load_kw: Summary,
    pub initial_vpp_kw: Summary,
    pub vpp_change_kw: Summary,
    pub total_vpp_kw: Summary,
    pub il_shed_kw: Summary,
    pub iterations: Summary,
}

impl GroupStats {
    fn of(records: &[&OutcomeRecord]) -> Self {
        let col = |f: fn(&OutcomeRecord) -> f64| Summary::of(&records.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            initial_load_kw: col(|r| r.initial_load_kw),
            initial_vpp_kw: col(|r| r.initial_vpp_kw),
            vpp_change_kw: col(|r| r.vpp_change_kw),
            total_vpp_kw: col(|r| r.total_vpp_kw()),
            il_shed_kw: col(|r| r.il_shed_kw),
            iterations: col(|r| r.iterations as f64),
        }
    }
}

/// Changes below this are "zero VPP power change".
pub const ZERO_CHANGE_KW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mode: DispatchMode,
    pub step_kw: f64,
    pub runs: usize,
    pub successes: usize,
    pub failures: usize,
    pub discarded: usize,
    /// Runs that were already within limits at entry (counted as successes).
    pub no_violation: usize,
    /// Percent of non-discarded runs.
    pub success_rate: f64,
    /// Share of successes that took at least one step and left the net VPP
    /// power unchanged.
    pub zero_change_fraction: f64,
    pub success: GroupStats,
    pub failure: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub cells: Vec<CellStats>,
}

impl CampaignStats {
    pub fn cell(&self, mode: DispatchMode, step_kw: f64) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.mode == mode && c.step_kw == step_kw)
    }
}

/// Aggregates records per (mode, step) in first-appearance order.
pub fn aggregate(records: &[OutcomeRecord]) -> CampaignStats {
    let mut keys: Vec<(DispatchMode, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.mode && k.1 == r.step_kw) {
            keys.push((r.mode, r.step_kw));
        }
    }
    let cells = keys
        .into_iter()
        .map(|(mode, step)| {
            let cell: Vec<&OutcomeRecord> = records
                .iter()
                .filter(|r| r.mode == mode && r.step_kw == step)
                .collect();
            let ok: Vec<&OutcomeRecord> = cell.iter().copied().filter(|r| r.status == RunStatus::Success).collect();
            let bad: Vec<&OutcomeRecord> = cell.iter().copied().filter(|r| r.status == RunStatus::Failure).collect();
            let discarded = cell.len() - ok.len() - bad.len();
            let counted = ok.len() + bad.len();
            let acted: Vec<&&OutcomeRecord> = ok.iter().filter(|r| r.iterations > 0).collect();
            let zero = acted.iter().filter(|r| r.vpp_change_kw.abs() < ZERO_CHANGE_KW).count();
            CellStats {
                mode,
                step_kw: step,
                runs: cell.len(),
                successes: ok.len(),
                failures: bad.len(),
                discarded,
                no_violation: ok.iter().filter(|r| !r.had_violation()).count(),
                success_rate: if counted > 0 {
                    100.0 * ok.len() as f64 / counted as f64
                } else {
                    0.0
                },
                zero_change_fraction: if acted.is_empty() {
                    0.0
                } else {
                    zero as f64 / acted.len() as f64
                },
                success: GroupStats::of(&ok),
                failure: GroupStats::of(&bad),
            }
        })
        .collect();
    CampaignStats { cells }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub records: Vec<OutcomeRecord>,
    pub stats: CampaignStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSetup<'a> {
    pub model: &'a NetworkModel,
    pub body: &'a MainBody,
    pub fleet: &'a [VppActor],
    pub modes: Vec<DispatchMode>,
    pub steps_kw: Vec<f64>,
    pub regulation: RegulationConfig,
}

/// One regulation run of a scenario.
pub fn run_scenario(
    setup: &CampaignSetup<'_>,
    scenario: &Scenario,
    mode: DispatchMode,
    step_kw: f64,
    regulation: &RegulationConfig,
) -> Result<RegulationOutcome> {
    let loads = scenario.bus_loads(setup.model);
    let actors = scenario.actors(setup.fleet);
    regulate(setup.model, setup.body, &actors, &loads, mode, step_kw, regulation)
}

/// Runs every (mode, step, scenario) combination. `scenarios[i]` holds the
/// scenarios of `setup.modes[i]`. Records come out ordered by mode, step and
/// scenario index regardless of `threads`; `threads == Some(1)` runs serially.
pub fn run_campaign(
    setup: &CampaignSetup<'_>,
    scenarios: &[Vec<Scenario>],
    threads: Option<usize>,
) -> Result<CampaignResult> {
    if scenarios.len() != setup.modes.len() {
        return Err(Error::Config("one scenario list per mode is required".into()));
    }
    let mut jobs = Vec::new();
    for (mi, mode) in setup.modes.iter().enumerate() {
        for &step in &setup.steps_kw {
            for sc in &scenarios[mi] {
                jobs.push((*mode, step, sc));
            }
        }
    }
    let one = |&(mode, step, sc): &(DispatchMode, f64, &Scenario)| -> OutcomeRecord {
        match run_scenario(setup, sc, mode, step, &setup.regulation) {
            Ok(out) => OutcomeRecord::from_outcome(mode, step, sc, &out),
            Err(e) => {
                log::debug!("scenario {} discarded: {e}", sc.index);
                OutcomeRecord::discarded(mode, step, sc)
            }
        }
    };
    let records: Vec<OutcomeRecord> = match threads {
        Some(1) => jobs.iter().map(one).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| jobs.par_iter().map(one).collect()),
        None => jobs.par_iter().map(one).collect(),
    };
    let stats = aggregate(&records);
    Ok(CampaignResult { records, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_basic() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.min, Some(1.0));
        assert_eq!(s.max, Some(3.0));
        assert!((s.std.unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[]).mean, None);
    }
}
