//! Bundled fixture networks and fleets.
//!
//! The Rhodes R-26 (Gennadi) reconstruction keeps every published aggregate
//! (119 load buses numbered in 200–433, 8.1 MW total peak, CU-95 main line
//! with ACSR/AAAC/CU branches, the MV/LV transformer ratings and the VPP
//! fleet) and fills what is not published by rule:
//!
//! * Buses are numbered depth-first: branch buses take the ids right after
//!   their coupling bus. Twenty branches are placed, most longer than three
//!   nodes; their positions are judgement calls.
//! * The 84 distinct transformer ratings are used as given (a repeated block
//!   of rows in the source table is dropped). The 35 load buses missing from
//!   it all sit beyond node 371, where the table skips ids; each gets the
//!   smallest common rating, 50 kW.
//! * Peak loads are the ratings scaled to sum to 8100 kW, at 0.95 lagging.
//! * Main-line segments share one length, calibrated so the feeder reaches
//!   0.90 p.u. at about 4.0 MW; branch segments are 0.2 km.

use num_complex::Complex64;

use crate::controller::{parse_fleet, ActorKind, VppActor};
use crate::error::{Error, Result};
use crate::network::{Base, BusKind, BusRecord, NetworkFile, NetworkModel, SegmentRecord, DEFAULT_LOAD_POWER_FACTOR};

pub const RHODES_NETWORK_JSON: &str = include_str!("../data/rhodes_r26.json");
pub const RHODES_FLEET_JSON: &str = include_str!("../data/rhodes_vpp.json");
pub const TWO_BUS_JSON: &str = include_str!("../data/two_bus.json");
pub const Y_NETWORK_JSON: &str = include_str!("../data/y_network.json");

pub const RHODES_TOTAL_PEAK_KW: f64 = 8100.0;
pub const RHODES_TARGET_CRITICAL_KW: f64 = 4000.0;
pub const BRANCH_SEGMENT_KM: f64 = 0.2;
/// Output of [`calibrate_main_segment_km`], frozen into the bundled file.
pub const RHODES_MAIN_SEGMENT_KM: f64 = 0.632797;

/// Distinct (node, kW) pairs of the MV/LV transformer table.
pub const TRANSFORMER_RATINGS: [(u32, f64); 84] = [
    (204, 160.0), (207, 50.0), (211, 100.0), (212, 100.0), (213, 250.0), (216, 50.0), (218, 100.0),
    (220, 160.0), (222, 160.0), (224, 250.0), (226, 100.0), (227, 250.0), (229, 100.0), (231, 50.0),
    (233, 100.0), (235, 50.0), (237, 100.0), (239, 100.0), (241, 100.0), (243, 50.0), (245, 50.0),
    (248, 50.0), (249, 100.0), (251, 50.0), (253, 50.0), (256, 100.0), (258, 100.0), (259, 100.0),
    (261, 100.0), (263, 100.0), (265, 100.0), (266, 100.0), (268, 50.0), (270, 50.0), (272, 50.0),
    (273, 100.0), (275, 50.0), (277, 50.0), (279, 50.0), (281, 100.0), (283, 50.0), (285, 100.0),
    (288, 100.0), (291, 160.0), (292, 100.0), (294, 50.0), (297, 25.0), (299, 50.0), (301, 50.0),
    (303, 100.0), (305, 25.0), (307, 50.0), (308, 50.0), (314, 50.0), (316, 400.0), (318, 50.0),
    (320, 50.0), (322, 50.0), (324, 734.0), (325, 50.0), (328, 100.0), (330, 50.0), (332, 50.0),
    (334, 50.0), (336, 100.0), (337, 50.0), (342, 50.0), (344, 160.0), (346, 50.0), (347, 100.0),
    (349, 50.0), (351, 50.0), (353, 50.0), (355, 50.0), (356, 160.0), (358, 160.0), (364, 50.0),
    (366, 50.0), (368, 50.0), (369, 160.0), (371, 100.0), (389, 100.0), (411, 100.0), (418, 100.0),
];

pub const IMPUTED_LOAD_BUSES: [u32; 35] = [
    373, 374, 376, 378, 379, 380, 381, 383, 384, 386, 388, 391, 393, 394, 396, 398, 399, 401, 403, 404,
    406, 408, 409, 413, 414, 416, 419, 421, 423, 424, 426, 428, 429, 431, 433,
];
pub const IMPUTED_RATING_KW: f64 = 50.0;

pub struct BranchSpec {
    pub first: u32,
    pub last: u32,
    pub conductor: &'static str,
}

/// Branch id ranges; each hangs off the main-line bus just before `first`.
pub const BRANCHES: [BranchSpec; 20] = [
    BranchSpec { first: 205, last: 209, conductor: "ACSR-35" },
    BranchSpec { first: 214, last: 219, conductor: "ACSR-16" },
    BranchSpec { first: 225, last: 228, conductor: "AAAC-35" },
    BranchSpec { first: 232, last: 236, conductor: "ACSR-35" },
    BranchSpec { first: 242, last: 247, conductor: "ACSR-16" },
    BranchSpec { first: 252, last: 257, conductor: "CU-35" },
    BranchSpec { first: 262, last: 268, conductor: "ACSR-35" },
    BranchSpec { first: 274, last: 280, conductor: "AAAC-35" },
    BranchSpec { first: 286, last: 290, conductor: "CU-16" },
    BranchSpec { first: 295, last: 302, conductor: "ACSR-35" },
    BranchSpec { first: 309, last: 315, conductor: "ACSR-16" },
    BranchSpec { first: 326, last: 333, conductor: "AAAC-35" },
    BranchSpec { first: 338, last: 345, conductor: "CU-35" },
    BranchSpec { first: 350, last: 357, conductor: "ACSR-35" },
    BranchSpec { first: 359, last: 367, conductor: "CU-35" },
    BranchSpec { first: 372, last: 379, conductor: "AAAC-35" },
    BranchSpec { first: 385, last: 392, conductor: "CU-35" },
    BranchSpec { first: 395, last: 404, conductor: "CU-35" },
    BranchSpec { first: 407, last: 413, conductor: "CU-35" },
    BranchSpec { first: 419, last: 426, conductor: "CU-16" },
];

/// Sub-branch: `(first, last, attached to)`.
pub const NESTED_BRANCH: (u32, u32, u32) = (401, 404, 398);

pub const FIRST_BUS: u32 = 200;
pub const LAST_BUS: u32 = 433;

fn branch_of(id: u32) -> Option<&'static BranchSpec> {
    BRANCHES.iter().find(|b| (b.first..=b.last).contains(&id))
}

/// Main-line ids from the feeder head to the end of the line.
pub fn rhodes_main_line() -> Vec<u32> {
    (FIRST_BUS..=LAST_BUS).filter(|&id| branch_of(id).is_none()).collect()
}

/// Rating per bus (table values plus imputed ones).
pub fn rhodes_ratings() -> Vec<(u32, f64)> {
    let mut r: Vec<(u32, f64)> = TRANSFORMER_RATINGS.to_vec();
    r.extend(IMPUTED_LOAD_BUSES.iter().map(|&id| (id, IMPUTED_RATING_KW)));
    r.sort_by_key(|x| x.0);
    r
}

/// The reconstruction with a given main-line segment length.
pub fn rhodes_network_file(main_segment_km: f64) -> NetworkFile {
    let ratings = rhodes_ratings();
    let total: f64 = ratings.iter().map(|r| r.1).sum();
    let main = rhodes_main_line();
    let tan = (1.0 - DEFAULT_LOAD_POWER_FACTOR.powi(2)).sqrt() / DEFAULT_LOAD_POWER_FACTOR;

    let mut segments = Vec::new();
    for w in main.windows(2) {
        segments.push(SegmentRecord {
            from: w[0],
            to: w[1],
            length_km: Some(main_segment_km),
            conductor: Some("CU-95".into()),
            r_ohm: None,
            x_ohm: None,
        });
    }
    for b in &BRANCHES {
        let coupling = b.first - 1;
        for id in b.first..=b.last {
            let from = if id == NESTED_BRANCH.0 {
                NESTED_BRANCH.2
            } else if id == b.first {
                coupling
            } else {
                id - 1
            };
            segments.push(SegmentRecord {
                from,
                to: id,
                length_km: Some(BRANCH_SEGMENT_KM),
                conductor: Some(b.conductor.into()),
                r_ohm: None,
                x_ohm: None,
            });
        }
    }
    segments.sort_by_key(|s| (s.to, s.from));

    let branch_couplings: Vec<u32> = BRANCHES.iter().map(|b| b.first - 1).collect();
    let buses = (FIRST_BUS..=LAST_BUS)
        .map(|id| {
            let rating = ratings.iter().find(|r| r.0 == id).map(|r| r.1);
            let kind = if id == FIRST_BUS {
                BusKind::FeederHead
            } else if rating.is_some() {
                BusKind::Load
            } else if branch_couplings.contains(&id) || id == NESTED_BRANCH.2 {
                BusKind::Junction
            } else {
                BusKind::Pole
            };
            let p = rating.map_or(0.0, |r| r / total * RHODES_TOTAL_PEAK_KW);
            BusRecord {
                id,
                kind,
                p_kw: p,
                q_kvar: Some(p * tan),
                power_factor: None,
            }
        })
        .collect();

    NetworkFile {
        name: Some("Rhodes R-26 (Gennadi) reconstruction".into()),
        base: Some(Base { kv: 20.0, mva: 10.0 }),
        conductors: Vec::new(),
        buses,
        segments,
    }
}

/// The VPP fleet of the R-26 feeder: 2120 kW of DG and 1270 kW of
/// interruptible load.
pub fn rhodes_fleet() -> Vec<VppActor> {
    let dg = [
        (213, "Wind Park", 200.0),
        (224, "Photovoltaic-Hydro", 150.0),
        (316, "Wind Park", 220.0),
        (324, "Wind Park", 150.0),
        (324, "Biomass", 250.0),
        (324, "LPG Gen.", 150.0),
        (380, "Photovoltaic-Hydro", 300.0),
        (414, "Geothermal", 200.0),
        (376, "LPG Gen.", 150.0),
        (381, "Diesel", 150.0),
        (384, "Diesel", 200.0),
    ];
    let il = [
        (227, 150.0),
        (204, 120.0),
        (358, 120.0),
        (369, 120.0),
        (291, 120.0),
        (220, 120.0),
        (222, 120.0),
        (237, 80.0),
        (239, 80.0),
        (249, 80.0),
        (259, 80.0),
        (328, 80.0),
    ];
    let mut actors = Vec::new();
    for (bus, label, p) in dg {
        let stochastic = matches!(label, "Wind Park" | "Photovoltaic-Hydro");
        let tag: String = label.split([' ', '-', '.']).next().unwrap_or(label).to_lowercase();
        actors.push(VppActor {
            id: format!("{tag}-{bus}"),
            bus,
            kind: if stochastic {
                ActorKind::StochasticDg
            } else {
                ActorKind::DispatchableDg
            },
            rated_kw: p,
            setpoint_kw: 0.0,
            availability: 1.0,
            curtailment_protected: false,
            energy_kwh: None,
            power_factor: None,
            label: Some(label.to_string()),
        });
    }
    for (bus, p) in il {
        actors.push(VppActor {
            id: format!("il-{bus}"),
            bus,
            kind: ActorKind::InterruptibleLoad,
            rated_kw: p,
            setpoint_kw: 0.0,
            availability: 1.0,
            curtailment_protected: false,
            energy_kwh: None,
            power_factor: None,
            label: Some("IL".into()),
        });
    }
    actors
}

/// Bundled reconstruction and fleet, with the fleet attached to its buses.
pub fn build_rhodes_fixture() -> Result<(NetworkModel, Vec<VppActor>)> {
    let mut model = NetworkModel::from_json(RHODES_NETWORK_JSON)?;
    let fleet = parse_fleet(RHODES_FLEET_JSON)?;
    crate::controller::attach_fleet(&mut model, &fleet)?;
    Ok((model, fleet))
}

pub fn rhodes_model(main_segment_km: f64) -> Result<NetworkModel> {
    NetworkModel::from_file(rhodes_network_file(main_segment_km))
}

pub fn rhodes_network_json(main_segment_km: f64) -> Result<String> {
    Ok(rhodes_model(main_segment_km)?.to_json())
}

pub fn rhodes_fleet_json() -> String {
    let file = crate::controller::FleetFile {
        name: Some("Rhodes R-26 VPP".into()),
        actors: rhodes_fleet(),
    };
    serde_json::to_string_pretty(&file).expect("fleet serializes")
}

/// Writes every bundled fixture into `dir`, regenerating the Rhodes network
/// with `main_segment_km`. Returns the written paths.
pub fn write_fixtures(dir: &std::path::Path, main_segment_km: f64) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("rhodes_r26.json", rhodes_network_json(main_segment_km)?),
        ("rhodes_vpp.json", rhodes_fleet_json()),
        ("two_bus.json", TWO_BUS_JSON.to_string()),
        ("y_network.json", Y_NETWORK_JSON.to_string()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text.trim_end().to_string() + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Bisection on the main-line segment length until the critical loading of
/// the idle-VPP feeder is `target_kw` (within 0.1 kW).
pub fn calibrate_main_segment_km(target_kw: f64) -> Result<f64> {
    let critical = |len: f64| -> Result<f64> {
        let m = rhodes_model(len)?;
        let base: Vec<Complex64> = m.buses.iter().map(|b| b.base_load).collect();
        Ok(crate::campaign::find_critical_loading(&m, &base, 0.90)?.total_load_kw)
    };
    let (mut lo, mut hi) = (0.05, 5.0);
    if critical(lo)? < target_kw || critical(hi)? > target_kw {
        return Err(Error::Calibration(format!(
            "cannot reach a {target_kw} kW critical loading with main segments in [{lo}, {hi}] km"
        )));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let c = critical(mid)?;
        if (c - target_kw).abs() < 0.1 {
            return Ok(mid);
        }
        // longer line -> lower critical loading
        if c > target_kw {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fixture catalogue with provenance notes, for `comvr fixtures`.
pub fn catalogue() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "rhodes_r26.json",
            "Rhodes R-26 reconstruction: 234 buses (ids 200-433), 119 load buses, 8100 kW total peak \
             (published); 84 published transformer ratings plus 35 imputed at 50 kW; pf 0.95 lagging \
             (assumed); CU-95 main line and branch conductor types published, impedances from the \
             conductor table; main segment length calibrated to a 4.0 MW critical loading",
        ),
        (
            "rhodes_vpp.json",
            "R-26 VPP fleet: 11 DG units 2120 kW, 12 interruptible loads 1270 kW (published); \
             wind and PV-hydro stochastic, others dispatchable (assumed)",
        ),
        ("two_bus.json", "Head + one 100 kW load over Z = 0.1 + j0.1 ohm"),
        ("y_network.json", "Head -> A -> B with branch A -> C; path to B longer"),
    ]
}
