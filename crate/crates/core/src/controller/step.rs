use serde::{Deserialize, Serialize};

use super::lists::{DispatchMode, PriorityList, VoltageMode};
use crate::com::Centers;
use crate::powerflow::VoltageSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub actor: usize,
    /// Signed change of the actor's net injection, kW.
    pub delta_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub actions: Vec<Action>,
    /// Step plus carried rest that this plan tried to place.
    pub demand_kw: f64,
    /// Power placed on the primary list (the one that relieves the violation).
    pub primary_kw: f64,
    /// Opposite-direction power taken from the other list.
    pub counter_kw: f64,
    /// Shortfall carried to the next iteration if the plan is executed.
    pub rest_kw: f64,
}

impl DispatchPlan {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Net change of VPP injection.
    pub fn net_kw(&self) -> f64 {
        self.actions.iter().map(|a| a.delta_kw).sum()
    }
}

fn take(list: &PriorityList, amount: f64, sign: f64, skip: &[usize], actions: &mut Vec<Action>) -> f64 {
    let mut left = amount;
    for e in &list.entries {
        if left <= 0.0 {
            break;
        }
        if skip.contains(&e.actor) {
            continue;
        }
        let moved = e.headroom_kw.min(left);
        actions.push(Action {
            actor: e.actor,
            delta_kw: sign * moved,
        });
        left -= moved;
    }
    amount - left.max(0.0)
}

/// Places `step + rest` on the primary list (spilling down the list), then
/// takes the same power off the counter list where it has headroom. An actor
/// moved by the primary list is skipped on the counter list. Dispatch mode
/// never uses the counter list.
pub fn apply_step(
    reduction: &PriorityList,
    increase: &PriorityList,
    step_kw: f64,
    rest_kw: f64,
    voltage: VoltageMode,
    dispatch: DispatchMode,
) -> DispatchPlan {
    let demand = step_kw + rest_kw;
    let (primary, counter, sign) = match voltage {
        VoltageMode::Undervoltage => (increase, reduction, 1.0),
        VoltageMode::Overvoltage => (reduction, increase, -1.0),
    };
    let mut actions = Vec::new();
    let placed = take(primary, demand, sign, &[], &mut actions);
    let moved: Vec<usize> = actions.iter().map(|a| a.actor).collect();
    let countered = match dispatch {
        DispatchMode::Dispatch => 0.0,
        DispatchMode::Redispatch => take(counter, placed, -sign, &moved, &mut actions),
    };
    DispatchPlan {
        actions,
        demand_kw: demand,
        primary_kw: placed,
        counter_kw: countered,
        rest_kw: demand - placed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageSummary {
    pub min_v: f64,
    pub max_v: f64,
    pub metric: f64,
}

impl VoltageSummary {
    pub fn of(sol: &VoltageSolution, v_sp: f64) -> Self {
        Self {
            min_v: sol.min_voltage().1,
            max_v: sol.max_voltage().1,
            metric: sol.voltage_profile_metric(v_sp),
        }
    }
}

/// A plan is kept when the post-plan flow converged (`after` is `Some`), the
/// extreme voltage on the violated side did not worsen, and either that
/// extreme or the profile metric strictly improved.
pub fn evaluate_step(before: &VoltageSummary, after: Option<&VoltageSummary>, mode: VoltageMode) -> bool {
    let Some(after) = after else {
        return false;
    };
    let metric_better = after.metric < before.metric;
    match mode {
        VoltageMode::Undervoltage => {
            after.min_v >= before.min_v && (after.min_v > before.min_v || metric_better)
        }
        VoltageMode::Overvoltage => {
            after.max_v <= before.max_v && (after.max_v < before.max_v || metric_better)
        }
    }
}

/// Doubles the step when the last accepted step recovered less than
/// `theta_small` of the voltage deficit it faced, never above `cap_kw`.
pub fn adapt_step(step_kw: f64, improvement: f64, deficit: f64, theta_small: f64, cap_kw: f64) -> f64 {
    if improvement < theta_small * deficit {
        (step_kw * 2.0).min(cap_kw).max(step_kw.min(cap_kw))
    } else {
        step_kw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Restriction {
    Segment(f64, f64),
    /// The lesser part would be shorter than the threshold or would not shrink.
    Exhausted,
}

/// Next lesser part of the line: `[g_L − Δg_L, end]` when `g_G > g_L`,
/// `[start, g_G + Δg_G]` when `g_G < g_L`.
pub fn restrict_lesser_part(segment: (f64, f64), centers: &Centers, min_length: f64) -> Restriction {
    let (Some(gen), Some(load)) = (centers.g_g, centers.g_l) else {
        return Restriction::Exhausted;
    };
    let (start, end) = segment;
    let (lo, hi) = if gen.g > load.g {
        ((load.g - load.delta_g).max(start), end)
    } else if gen.g < load.g {
        (start, (gen.g + gen.delta_g).min(end))
    } else {
        return Restriction::Exhausted;
    };
    let len = hi - lo;
    if len < min_length || len >= (end - start) * (1.0 - 1e-9) {
        Restriction::Exhausted
    } else {
        Restriction::Segment(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::com::{CenterOfMass, MassKind};
    use crate::controller::lists::{Direction, ListEntry};

    fn list(direction: Direction, headrooms: &[(usize, f64)]) -> PriorityList {
        PriorityList {
            direction,
            entries: headrooms
                .iter()
                .map(|&(actor, h)| ListEntry {
                    actor,
                    headroom_kw: h,
                    coord: 0.0,
                    distance: 0.0,
                    between: false,
                })
                .collect(),
        }
    }

    fn cm(g: f64, d: f64, kind: MassKind) -> Option<CenterOfMass> {
        Some(CenterOfMass {
            g,
            delta_g: d,
            total_weight: 1.0,
            kind,
        })
    }

    #[test]
    fn full_transfer_is_net_zero() {
        let minus = list(Direction::Reduce, &[(0, 500.0)]);
        let plus = list(Direction::Increase, &[(1, 400.0)]);
        let p = apply_step(&minus, &plus, 300.0, 0.0, VoltageMode::Undervoltage, DispatchMode::Redispatch);
        assert_eq!(p.primary_kw, 300.0);
        assert_eq!(p.counter_kw, 300.0);
        assert_eq!(p.net_kw(), 0.0);
        assert_eq!(p.rest_kw, 0.0);
    }

    #[test]
    fn spill_across_increase_list() {
        let minus = list(Direction::Reduce, &[]);
        let plus = list(Direction::Increase, &[(1, 100.0), (2, 250.0)]);
        let p = apply_step(&minus, &plus, 300.0, 0.0, VoltageMode::Undervoltage, DispatchMode::Redispatch);
        assert_eq!(p.actions, vec![
            Action { actor: 1, delta_kw: 100.0 },
            Action { actor: 2, delta_kw: 200.0 }
        ]);
        assert_eq!(p.net_kw(), 300.0);
        assert_eq!(p.rest_kw, 0.0);
    }

    #[test]
    fn shortfall_becomes_rest() {
        let minus = list(Direction::Reduce, &[(0, 1000.0)]);
        let plus = list(Direction::Increase, &[(1, 120.0)]);
        let p = apply_step(&minus, &plus, 300.0, 50.0, VoltageMode::Undervoltage, DispatchMode::Redispatch);
        assert_eq!(p.primary_kw, 120.0);
        assert_eq!(p.counter_kw, 120.0);
        assert_eq!(p.rest_kw, 230.0);
        let none = apply_step(&minus, &list(Direction::Increase, &[]), 300.0, 0.0, VoltageMode::Undervoltage, DispatchMode::Redispatch);
        assert!(none.is_empty());
        assert_eq!(none.rest_kw, 300.0);
    }

    #[test]
    fn actor_on_both_lists_moves_once() {
        let minus = list(Direction::Reduce, &[(1, 200.0), (0, 500.0)]);
        let plus = list(Direction::Increase, &[(1, 100.0), (2, 500.0)]);
        let p = apply_step(&minus, &plus, 300.0, 0.0, VoltageMode::Undervoltage, DispatchMode::Redispatch);
        assert_eq!(p.actions.iter().filter(|a| a.actor == 1).count(), 1);
        assert_eq!(p.counter_kw, 300.0);
        assert_eq!(p.net_kw(), 0.0);
    }

    #[test]
    fn dispatch_mode_skips_reductions() {
        let minus = list(Direction::Reduce, &[(0, 1000.0)]);
        let plus = list(Direction::Increase, &[(1, 1000.0)]);
        let p = apply_step(&minus, &plus, 300.0, 0.0, VoltageMode::Undervoltage, DispatchMode::Dispatch);
        assert_eq!(p.actions.len(), 1);
        assert_eq!(p.counter_kw, 0.0);
    }

    #[test]
    fn evaluation_rules() {
        let before = VoltageSummary { min_v: 0.89, max_v: 1.0, metric: 0.2 };
        let up = VoltageSummary { min_v: 0.891, max_v: 1.0, metric: 0.21 };
        let flat_better_metric = VoltageSummary { min_v: 0.89, max_v: 1.0, metric: 0.19 };
        let worse = VoltageSummary { min_v: 0.889, max_v: 1.0, metric: 0.1 };
        assert!(evaluate_step(&before, Some(&up), VoltageMode::Undervoltage));
        assert!(evaluate_step(&before, Some(&flat_better_metric), VoltageMode::Undervoltage));
        assert!(!evaluate_step(&before, Some(&worse), VoltageMode::Undervoltage));
        assert!(!evaluate_step(&before, Some(&before), VoltageMode::Undervoltage));
        assert!(!evaluate_step(&before, None, VoltageMode::Undervoltage));
    }

    #[test]
    fn step_doubling() {
        assert_eq!(adapt_step(300.0, 0.001, 0.05, 0.1, 3390.0), 600.0);
        assert_eq!(adapt_step(300.0, 0.02, 0.05, 0.1, 3390.0), 300.0);
        let mut s = 300.0;
        for _ in 0..200 {
            s = adapt_step(s, 0.0, 0.05, 0.1, 3390.0);
            assert!(s <= 3390.0);
        }
        assert_eq!(s, 3390.0);
    }

    #[test]
    fn lesser_part_rules() {
        let c = Centers {
            g_g: cm(0.8, 0.1, MassKind::Generation),
            g_l: cm(0.5, 0.1, MassKind::Load),
            g_gl: None,
        };
        match restrict_lesser_part((0.0, 1.2), &c, 0.18) {
            Restriction::Segment(a, b) => {
                assert!((a - 0.4).abs() < 1e-12);
                assert_eq!(b, 1.2);
            }
            other => panic!("{other:?}"),
        }
        let c = Centers {
            g_g: cm(0.3, 0.05, MassKind::Generation),
            g_l: cm(0.7, 0.1, MassKind::Load),
            g_gl: None,
        };
        match restrict_lesser_part((0.0, 1.2), &c, 0.18) {
            Restriction::Segment(a, b) => {
                assert_eq!(a, 0.0);
                assert!((b - 0.35).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(restrict_lesser_part((0.0, 1.2), &c, 0.5), Restriction::Exhausted);
    }
}
