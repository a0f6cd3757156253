//! Priority lists of (re-)dispatch actions.
//!
//! Undervoltage rules, with every distance measured along the main body:
//!
//! * the reduction list takes curtailable generation (and storage that can
//!   charge) inside `g_G ± Δg_G`, farthest from `g_L` first;
//! * the increase list takes DG headroom, load shedding and storage discharge
//!   inside `g_GL ± Δg_GL`, again farthest from `g_L` first;
//! * actors strictly between `g_G` and `g_L` go to the back of their list;
//! * actors where `g_G ± Δg_G` and `g_L ± Δg_L` overlap are dropped.
//!
//! Overvoltage swaps the roles of `g_G` and `g_L` and of the two directions.

use serde::{Deserialize, Serialize};

use super::actors::{ActorKind, ActorLimits, VppActor};
use crate::com::{CenterOfMass, Centers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoltageMode {
    Undervoltage,
    Overvoltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchMode {
    /// VPP initially idle; only increase actions are taken.
    Dispatch,
    /// VPP initially scheduled; power is transferred between actors.
    Redispatch,
}

impl DispatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DispatchMode::Dispatch => "dispatch",
            DispatchMode::Redispatch => "redispatch",
        }
    }
}

impl std::str::FromStr for DispatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dispatch" => Ok(DispatchMode::Dispatch),
            "redispatch" | "re-dispatch" => Ok(DispatchMode::Redispatch),
            other => Err(format!("unknown mode {other:?} (dispatch|redispatch)")),
        }
    }
}

/// Direction of the change in net VPP injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Reduce,
    Increase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub actor: usize,
    pub headroom_kw: f64,
    pub coord: f64,
    pub distance: f64,
    pub between: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityList {
    pub direction: Direction,
    pub entries: Vec<ListEntry>,
}

impl PriorityList {
    pub fn headroom_kw(&self) -> f64 {
        self.entries.iter().map(|e| e.headroom_kw).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn actor_order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.actor).collect()
    }
}

/// Headroom below 1 W is treated as none.
const MIN_HEADROOM_KW: f64 = 1e-3;

pub fn increase_headroom(actor: &VppActor, i: usize, limits: &ActorLimits) -> f64 {
    (limits.upper[i] - actor.setpoint_kw).max(0.0)
}

pub fn reduce_headroom(actor: &VppActor, i: usize, limits: &ActorLimits) -> f64 {
    match actor.kind {
        ActorKind::DispatchableDg | ActorKind::StochasticDg if !actor.curtailment_protected => {
            (actor.setpoint_kw - limits.lower[i]).max(0.0)
        }
        ActorKind::Storage => (actor.setpoint_kw - limits.lower[i]).max(0.0),
        _ => 0.0,
    }
}

fn strictly_between(x: f64, a: f64, b: f64) -> bool {
    x > a.min(b) && x < a.max(b)
}

/// Inputs shared by both lists.
pub struct ListContext<'a> {
    pub actors: &'a [VppActor],
    /// Main-body coordinate of each actor (coupling bus for branch actors).
    pub coords: &'a [f64],
    pub limits: &'a ActorLimits,
    /// Active lesser part of the line.
    pub segment: (f64, f64),
}

/// Returns `(reduction list, increase list)`.
pub fn populate_priority_lists(
    centers: &Centers,
    ctx: &ListContext<'_>,
    mode: VoltageMode,
) -> (PriorityList, PriorityList) {
    let empty = |direction| PriorityList {
        direction,
        entries: Vec::new(),
    };
    // Under: anchor is g_L, the counter-action window is g_G. Over: mirrored.
    let (anchor, opposite) = match mode {
        VoltageMode::Undervoltage => (centers.g_l, centers.g_g),
        VoltageMode::Overvoltage => (centers.g_g, centers.g_l),
    };
    let Some(anchor) = anchor else {
        return (empty(Direction::Reduce), empty(Direction::Increase));
    };
    let overlap = |c: f64| match (centers.g_g, centers.g_l) {
        (Some(g), Some(l)) => g.contains(c) && l.contains(c),
        _ => false,
    };
    let between = |c: f64| opposite.is_some_and(|o| strictly_between(c, o.g, anchor.g));
    let in_segment = |c: f64| c >= ctx.segment.0 - 1e-12 && c <= ctx.segment.1 + 1e-12;

    let build = |window: Option<CenterOfMass>, direction: Direction| {
        let Some(window) = window else {
            return empty(direction);
        };
        let mut entries: Vec<ListEntry> = ctx
            .actors
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let coord = ctx.coords[i];
                if !in_segment(coord) || !window.contains(coord) || overlap(coord) {
                    return None;
                }
                let headroom = match direction {
                    Direction::Increase => increase_headroom(a, i, ctx.limits),
                    Direction::Reduce => reduce_headroom(a, i, ctx.limits),
                };
                (headroom > MIN_HEADROOM_KW).then(|| ListEntry {
                    actor: i,
                    headroom_kw: headroom,
                    coord,
                    distance: (coord - anchor.g).abs(),
                    between: between(coord),
                })
            })
            .collect();
        entries.sort_by(|x, y| {
            x.between
                .cmp(&y.between)
                .then(y.distance.total_cmp(&x.distance))
                .then(y.headroom_kw.total_cmp(&x.headroom_kw))
                .then(ctx.actors[x.actor].bus.cmp(&ctx.actors[y.actor].bus))
                .then(ctx.actors[x.actor].id.cmp(&ctx.actors[y.actor].id))
        });
        PriorityList { direction, entries }
    };

    match mode {
        VoltageMode::Undervoltage => (
            build(centers.g_g, Direction::Reduce),
            build(centers.g_gl, Direction::Increase),
        ),
        VoltageMode::Overvoltage => (
            build(centers.g_gl, Direction::Reduce),
            build(centers.g_l, Direction::Increase),
        ),
    }
}
