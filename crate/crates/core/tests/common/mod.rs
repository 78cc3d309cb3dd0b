//! Shared oracles and property suites for the integration targets.
#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

use wzopt::calib::{gaussian_boundary, quantify, QuantizationTable, StatusGaussian, TableEntry};
use wzopt::delay::{run_scenario, simulate, WorkZoneScenario};
use wzopt::feed::{aggregate_daily_profile, classify_rgb, ClassifierRules, Observation};
use wzopt::flow::{
    invert_practical, practical_speed, workzone_capacity, FlowModelParams, WorkZoneCapacityInputs,
    DEFAULT_X_MAX,
};
use wzopt::geo::{
    discretize, geo_to_tile, geo_to_world_pixel, haversine_m, tile_to_geo, GeoPoint, Polyline,
    ProviderProfile,
};
use wzopt::sweep::{sweep, SweepSpec};
use wzopt::TrafficStatus;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Per-vehicle FIFO bottleneck. `arrivals[i]` vehicles enter evenly
/// through step `i`, the first at the step start; each departs no earlier
/// than it arrives and at least `1/capacity` after its predecessor.
/// Returns the summed waiting time in vehicle-hours.
pub fn fifo_wait(arrivals: &[u32], capacity: f64, step_h: f64) -> f64 {
    let headway = 1.0 / capacity;
    let mut prev = f64::NEG_INFINITY;
    let mut total = 0.0;
    for (i, &n) in arrivals.iter().enumerate() {
        for k in 0..n {
            let arr = (i as f64 + f64::from(k) / f64::from(n)) * step_h;
            let dep = arr.max(prev + headway);
            total += dep - arr;
            prev = dep;
        }
    }
    total
}

pub fn scenario(
    demand: Vec<f64>,
    wz_cap: f64,
    normal_cap: f64,
    step_h: f64,
    duration_h: f64,
) -> WorkZoneScenario {
    WorkZoneScenario {
        v1_kmh: 80.0,
        v2_kmh: 40.0,
        a1_mps2: 1.0,
        a2_mps2: 1.0,
        length_km: 1.0,
        duration_h,
        workzone_capacity: wz_cap,
        normal_capacity: normal_cap,
        step_h,
        demand,
    }
}

/// Appends enough zero-demand steps for a bottleneck of `capacity` to
/// clear the queue left at the end of `demand`.
pub fn with_drain(mut demand: Vec<f64>, capacity: f64, step_h: f64) -> Vec<f64> {
    let queue = demand.iter().fold(0.0f64, |queue, q| {
        (queue + (q - capacity) * step_h).max(0.0)
    });
    let extra = (queue / (capacity * step_h)).ceil() as usize + 1;
    demand.extend(std::iter::repeat_n(0.0, extra));
    demand
}

fn check(
    name: &str,
    cases: u32,
    body: impl FnOnce(&mut TestRunner) -> Result<(), String>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    let mut runner = TestRunner::new_with_rng(config, rng);
    body(&mut runner).map_err(|e| format!("{name}: {e}"))
}

macro_rules! run {
    ($runner:expr, $strategy:expr, $body:expr) => {
        $runner.run(&$strategy, $body).map_err(|e| e.to_string())
    };
}

pub fn geo_round_trip() -> Result<(), String> {
    check("geo round trip", 512, |r| {
        let profiles = [ProviderProfile::slippy(), ProviderProfile::tms()];
        run!(
            r,
            (-85.0f64..85.0, -179.9f64..179.9, 0u8..=21, 0usize..2),
            |(lat, lng, z, pi)| {
                let prof = &profiles[pi];
                let p = GeoPoint::new(lat, lng).unwrap();
                let t = geo_to_tile(p, z, prof).unwrap();
                let back = tile_to_geo(t, prof).unwrap();
                let (x0, y0) = geo_to_world_pixel(p, z, prof).unwrap();
                // The last half pixel before the antimeridian or the southern
                // limit rounds past the edge and is clamped.
                let world = prof.world_size(z);
                prop_assume!(x0 < world - 0.5 && y0 < world - 0.5);
                let (x1, y1) = geo_to_world_pixel(back, z, prof).unwrap();
                prop_assert!((x0 - x1).abs() <= 0.5 + 1e-6, "x {x0} -> {x1}");
                prop_assert!((y0 - y1).abs() <= 0.5 + 1e-6, "y {y0} -> {y1}");
                let res = prof.ground_resolution(lat, z);
                prop_assert!(haversine_m(p, back) <= 0.5 * 2f64.sqrt() * res * 1.01 + 1e-6);
                Ok(())
            }
        )
    })
}

pub fn geo_monotone() -> Result<(), String> {
    check("geo monotonicity", 512, |r| {
        let prof = ProviderProfile::slippy();
        run!(
            r,
            (
                -85.0f64..85.0,
                -85.0f64..85.0,
                -180.0f64..180.0,
                -180.0f64..180.0,
                0u8..=23
            ),
            |(la1, la2, lo1, lo2, z)| {
                let a = geo_to_world_pixel(GeoPoint::new(la1, lo1).unwrap(), z, &prof).unwrap();
                let b = geo_to_world_pixel(GeoPoint::new(la2, lo2).unwrap(), z, &prof).unwrap();
                if lo1 < lo2 {
                    prop_assert!(a.0 <= b.0);
                }
                if la1 < la2 {
                    prop_assert!(a.1 >= b.1);
                }
                Ok(())
            }
        )
    })
}

fn polyline() -> impl Strategy<Value = Polyline> {
    (
        -60.0f64..60.0,
        -170.0f64..170.0,
        prop::collection::vec((-0.01f64..0.01, -0.01f64..0.01), 1..5),
    )
        .prop_filter_map("degenerate", |(lat, lng, steps)| {
            let mut pts = vec![GeoPoint::new(lat, lng).unwrap()];
            let (mut a, mut o) = (lat, lng);
            for (dl, dg) in steps {
                a += dl;
                o += dg;
                pts.push(GeoPoint::new(a, o).ok()?);
            }
            Polyline::new(pts).ok()
        })
}

pub fn discretization_spacing() -> Result<(), String> {
    check("discretization spacing", 256, |r| {
        run!(r, (polyline(), 1.0f64..400.0), |(line, s)| {
            let pts = discretize(&line, s).unwrap();
            let total = line.length_m();
            let eps = 1e-6 * s;
            let full = ((total + eps) / s).floor() as usize;
            let on_grid = (total - full as f64 * s).abs() <= eps;
            let want = full + 1 + usize::from(!on_grid);
            prop_assert_eq!(pts.len(), want.max(2));
            for (i, p) in pts.iter().enumerate().take(pts.len() - 1) {
                prop_assert!((p.chainage_m - i as f64 * s).abs() < 1e-9 * s.max(1.0));
            }
            prop_assert_eq!(pts.last().unwrap().chainage_m, total);
            for w in pts.windows(2) {
                let gap = w[1].chainage_m - w[0].chainage_m;
                prop_assert!(gap > 0.0 && gap <= s * (1.0 + 1e-9));
                // A chord never exceeds the arc it spans.
                prop_assert!(haversine_m(w[0].point, w[1].point) <= gap + 1e-6);
            }
            Ok(())
        })
    })
}

fn gaussian(mean: f64, std: f64) -> StatusGaussian {
    StatusGaussian {
        status: TrafficStatus::Slow,
        mean,
        std,
        n: 100,
    }
}

/// Pairs whose densities are ordered at both means, so a crossing between
/// them exists.
fn crossing_pair() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0f64..80.0, 0.5f64..40.0, 0.5f64..15.0, 0.5f64..15.0).prop_filter(
        "no crossing",
        |&(m1, d, s1, s2)| {
            let (g1, g2) = (gaussian(m1, s1), gaussian(m1 + d, s2));
            g1.density(m1) > g2.density(m1) && g2.density(m1 + d) > g1.density(m1 + d)
        },
    )
}

pub fn boundary_betweenness() -> Result<(), String> {
    check("gaussian boundary betweenness", 512, |r| {
        run!(r, crossing_pair(), |(m1, d, s1, s2)| {
            let (g1, g2) = (gaussian(m1, s1), gaussian(m1 + d, s2));
            let b = gaussian_boundary(&g1, &g2).unwrap();
            prop_assert!(b > m1 && b < m1 + d);
            let rel = (g1.density(b) - g2.density(b)).abs() / g1.density(b).max(1e-300);
            prop_assert!(rel < 1e-6, "densities differ by {rel}");
            Ok(())
        })
    })
}

pub fn boundary_equal_sigma() -> Result<(), String> {
    check("gaussian boundary equal-sigma midpoint", 512, |r| {
        run!(r, (0.0f64..100.0, 0.01f64..50.0, 0.1f64..20.0), |(
            m1,
            d,
            s,
        )| {
            let b = gaussian_boundary(&gaussian(m1, s), &gaussian(m1 + d, s)).unwrap();
            prop_assert!((b - (m1 + m1 + d) / 2.0).abs() <= 1e-9 * (m1 + d).max(1.0));
            Ok(())
        })
    })
}

pub fn boundary_affine() -> Result<(), String> {
    check("gaussian boundary affine equivariance", 512, |r| {
        run!(
            r,
            (crossing_pair(), 0.1f64..10.0, -50.0f64..50.0),
            |((m1, d, s1, s2), a, b)| {
                let x = gaussian_boundary(&gaussian(m1, s1), &gaussian(m1 + d, s2)).unwrap();
                let y = gaussian_boundary(
                    &gaussian(a * m1 + b, a * s1),
                    &gaussian(a * (m1 + d) + b, a * s2),
                )
                .unwrap();
                prop_assert!((y - (a * x + b)).abs() <= 1e-7 * (1.0 + (a * x + b).abs()));
                Ok(())
            }
        )
    })
}

pub fn quantify_in_range() -> Result<(), String> {
    check("quantify inside its range", 256, |r| {
        let widths = (0.5f64..20.0, 0.5f64..20.0, 0.5f64..20.0, 1.0f64..30.0);
        run!(
            r,
            (prop::collection::vec(0.05f64..0.95, 4), widths),
            |(f, (w1, w2, w3, top))| {
                let edges = [0.0, w1, w1 + w2, w1 + w2 + w3, w1 + w2 + w3 + top];
                let statuses = [
                    TrafficStatus::Severe,
                    TrafficStatus::Congested,
                    TrafficStatus::Slow,
                    TrafficStatus::Smooth,
                ];
                let entries: Vec<TableEntry> = statuses
                    .iter()
                    .enumerate()
                    .map(|(i, &status)| TableEntry {
                        status,
                        lo_kmh: edges[i],
                        hi_kmh: edges[i + 1],
                        rep_kmh: edges[i] + f[i] * (edges[i + 1] - edges[i]),
                    })
                    .collect();
                let table = QuantizationTable::new(entries).unwrap();
                for e in table.entries() {
                    let v = quantify(e.status, &table).unwrap();
                    prop_assert!(v >= e.lo_kmh && v <= e.hi_kmh);
                }
                prop_assert!(quantify(TrafficStatus::Unknown, &table).is_err());
                Ok(())
            }
        )
    })
}

fn factor() -> impl Strategy<Value = f64> {
    0.05f64..1.2
}

pub fn capacity_monotone() -> Result<(), String> {
    check("work-zone capacity monotonicity", 512, |r| {
        let strat = (
            500.0f64..2500.0,
            prop::array::uniform7(factor()),
            1u32..5,
            0usize..8,
            1.0f64..1.5,
        );
        run!(r, strat, |(c, f, lanes, which, bump)| {
            let mk = |f: [f64; 7], c: f64, lanes: u32| WorkZoneCapacityInputs {
                c_bs_pcu_h: c,
                f_n: f[0],
                f_lw: f[1],
                f_lc: f[2],
                f_hv: f[3],
                f_se: f[4],
                f_wi: f[5],
                f_ls: f[6],
                open_lanes: lanes,
            };
            let base = workzone_capacity(&mk(f, c, lanes)).unwrap();
            let (mut f2, mut c2) = (f, c);
            if which < 7 {
                f2[which] = (f2[which] * bump).min(1.2);
            } else {
                c2 *= bump;
            }
            let up = workzone_capacity(&mk(f2, c2, lanes)).unwrap();
            prop_assert!(up.total_pcu_h >= base.total_pcu_h);
            let more = workzone_capacity(&mk(f, c, lanes + 1)).unwrap();
            prop_assert!(more.total_pcu_h > base.total_pcu_h);
            prop_assert!(
                (base.total_pcu_h - base.per_lane_pcu_h * f64::from(lanes)).abs()
                    < 1e-9 * base.total_pcu_h
            );
            Ok(())
        })
    })
}

fn model() -> impl Strategy<Value = FlowModelParams> {
    (
        0.8f64..1.3,
        1.5f64..2.5,
        3.0f64..6.0,
        40.0f64..130.0,
        1000.0f64..2500.0,
    )
        .prop_map(|(a1, a2, a3, us, c)| FlowModelParams {
            alpha1: a1,
            alpha2: a2,
            alpha3: a3,
            us_kmh: us,
            capacity_pcu_h: c,
        })
}

pub fn speed_model_inversion() -> Result<(), String> {
    check("speed-flow inversion round trip", 512, |r| {
        run!(r, (model(), 0.0f64..1.0), |(p, frac)| {
            let lo = practical_speed(DEFAULT_X_MAX, &p).unwrap();
            let hi = p.alpha1 * p.us_kmh;
            let u = lo + frac * (hi - lo);
            prop_assume!(u > lo && u < hi);
            let v = invert_practical(u, &p, DEFAULT_X_MAX).unwrap();
            let back = practical_speed(v / p.capacity_pcu_h, &p).unwrap();
            prop_assert!((back - u).abs() <= 1e-6 * u);
            // Slower means busier.
            let slower = invert_practical(lo + 0.5 * frac * (hi - lo), &p, DEFAULT_X_MAX).unwrap();
            prop_assert!(slower >= v - 1e-9 * v.max(1.0));
            Ok(())
        })
    })
}

fn demand(max_len: usize, max_q: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..max_q, 4..max_len)
}

fn totals(sc: &WorkZoneScenario, flags: &[bool]) -> f64 {
    simulate(sc, flags).unwrap().iter().map(|s| s.dl).sum()
}

pub fn delay_non_negative_and_conserving() -> Result<(), String> {
    check("delay non-negativity and conservation", 256, |r| {
        run!(
            r,
            (demand(60, 4000.0), 500.0f64..2500.0, 0usize..20),
            |(q, c, start)| {
                let step = 0.25;
                let mut q = q;
                q.resize(q.len().max(start + 8), 0.0);
                let sc = scenario(q, c, c * 1.6, step, 2.0);
                let flags = sc.flags_from(start).unwrap();
                let steps = simulate(&sc, &flags).unwrap();
                let mut arrived = 0.0;
                let mut served = 0.0;
                for s in &steps {
                    for v in [s.d1, s.d2, s.d3, s.d4, s.big_d4, s.dl, s.queue_out] {
                        prop_assert!(v >= 0.0 && v.is_finite());
                    }
                    arrived += s.q * step;
                    served += s.served(step);
                    prop_assert!(s.served(step) <= s.capacity * step * (1.0 + 1e-12) + 1e-9);
                }
                let left = steps.last().unwrap().queue_out;
                prop_assert!((arrived - served - left).abs() <= 1e-9 * arrived.max(1.0));
                Ok(())
            }
        )
    })
}

pub fn delay_monotone() -> Result<(), String> {
    check("delay monotonicity in demand and capacity", 256, |r| {
        run!(
            r,
            (
                demand(48, 3000.0),
                0usize..48,
                0.0f64..1500.0,
                500.0f64..2500.0,
                1.0f64..1.5
            ),
            |(q, i, extra, c, bump)| {
                let step = 0.25;
                let base = with_drain(q, c, step);
                let i = i % base.len();
                let mut more = base.clone();
                more[i] += extra;
                let more = with_drain(more, c, step);
                let mut base = base;
                base.resize(more.len(), 0.0);
                let flags = vec![true; base.len()];
                let a = scenario(base.clone(), c, c * 2.0, step, 1.0);
                let b = scenario(more, c, c * 2.0, step, 1.0);
                prop_assert!(totals(&b, &flags) >= totals(&a, &flags) * (1.0 - 1e-12));
                let wider = scenario(base, c * bump, c * 2.0, step, 1.0);
                prop_assert!(totals(&wider, &flags) <= totals(&a, &flags) * (1.0 + 1e-12));
                Ok(())
            }
        )
    })
}

pub fn baseline_identity() -> Result<(), String> {
    check("baseline identity", 256, |r| {
        run!(r, (demand(48, 3000.0), 500.0f64..2500.0), |(q, c)| {
            let step = 0.25;
            // With the work zone identical to the open road, the work-zone
            // run differs from the baseline only by the per-vehicle terms.
            let mut sc = scenario(with_drain(q, c, step), c, c, step, step);
            sc.v2_kmh = sc.v1_kmh;
            let flags = sc.flags_from(0).unwrap();
            let res = run_scenario(&sc, &flags).unwrap();
            let base = simulate(&sc, &vec![false; flags.len()]).unwrap();
            let base_total: f64 = base.iter().map(|s| s.dl).sum();
            prop_assert_eq!(res.baseline_total, base_total);
            prop_assert!(res.added.abs() <= 1e-9 * base_total.max(1.0));
            Ok(())
        })
    })
}

pub fn flat_sweep_symmetry() -> Result<(), String> {
    check("flat-profile sweep symmetry", 48, |r| {
        run!(
            r,
            (
                0.0f64..2400.0,
                1u32..=12,
                prop::sample::select(vec![15u32, 30, 60])
            ),
            |(q, hours, grid)| {
                let step = 0.25;
                let template = scenario(vec![q; 96], 2574.0, 4500.0, step, f64::from(hours));
                let spec = SweepSpec::new(vec![q; 96], f64::from(hours), grid);
                let res = sweep(&spec, &template).unwrap();
                let vals: Vec<f64> = res
                    .curve
                    .iter()
                    .map(|c| *c.added.as_ref().unwrap())
                    .collect();
                for v in &vals {
                    prop_assert!((v - vals[0]).abs() <= 1e-9 * vals[0].abs().max(1.0));
                }
                prop_assert_eq!(res.window.len(), res.curve.len());
                Ok(())
            }
        )
    })
}

pub fn sweep_shift() -> Result<(), String> {
    check("sweep time-shift", 32, |r| {
        run!(
            r,
            (
                prop::collection::vec(0.0f64..4000.0, 24),
                1usize..24,
                1u32..10
            ),
            |(q, shift, hours)| {
                let step = 1.0;
                let template = scenario(q.clone(), 2574.0, 4500.0, step, f64::from(hours));
                let shifted: Vec<f64> = (0..24).map(|i| q[(i + 24 - shift) % 24]).collect();
                let a = sweep(&SweepSpec::new(q, f64::from(hours), 60), &template).unwrap();
                let b = sweep(&SweepSpec::new(shifted, f64::from(hours), 60), &template).unwrap();
                for i in 0..24 {
                    let j = (i + shift) % 24;
                    match (&a.curve[i].added, &b.curve[j].added) {
                        (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                        (Err(_), Err(_)) => {}
                        (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
                    }
                }
                let ai = a
                    .curve
                    .iter()
                    .position(|c| c.start_min == a.best[0])
                    .unwrap();
                prop_assert!(b.best.contains(&b.curve[(ai + shift) % 24].start_min));
                Ok(())
            }
        )
    })
}

pub fn classifier_totality() -> Result<(), String> {
    check("classifier totality", 4096, |r| {
        let rules = ClassifierRules::default();
        run!(r, any::<[u8; 3]>(), |[red, g, b]| {
            let spread = red.max(g).max(b) - red.min(g).min(b);
            let background = spread <= 16;
            let gb_equal = g.abs_diff(b) <= 8;
            let preds = [
                (background, TrafficStatus::Unknown),
                (
                    !background && !gb_equal && red <= 240,
                    TrafficStatus::Smooth,
                ),
                (!background && !gb_equal && red > 240, TrafficStatus::Slow),
                (
                    !background && gb_equal && red >= 200,
                    TrafficStatus::Congested,
                ),
                (!background && gb_equal && red < 200, TrafficStatus::Severe),
            ];
            let hits: Vec<TrafficStatus> = preds.iter().filter(|p| p.0).map(|p| p.1).collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(classify_rgb(red, g, b, &rules), hits[0]);
            Ok(())
        })
    })
}

pub fn aggregate_order_invariance() -> Result<(), String> {
    let table = QuantizationTable::read_csv(
        std::fs::File::open(data_dir().join("calibration/table_inner_ring.csv")).unwrap(),
    )
    .unwrap();
    check("aggregate order invariance", 128, |r| {
        let obs = prop::collection::vec((0i64..7 * 86_400, 0usize..5), 1..300);
        run!(
            r,
            (
                obs,
                any::<u64>(),
                prop::sample::select(vec![60u32, 900, 3600])
            ),
            |(raw, seed, bin)| {
                let all = [
                    TrafficStatus::Smooth,
                    TrafficStatus::Slow,
                    TrafficStatus::Congested,
                    TrafficStatus::Severe,
                    TrafficStatus::Unknown,
                ];
                let obs: Vec<Observation> = raw
                    .iter()
                    .map(|&(ts, s)| Observation {
                        point_id: "p".into(),
                        timestamp: ts,
                        status: all[s],
                        rgb: all[s].is_known().then_some([0, 0, 0]),
                        note: String::new(),
                    })
                    .collect();
                let mut shuffled = obs.clone();
                // Deterministic Fisher-Yates from the drawn seed.
                let mut x = seed | 1;
                for i in (1..shuffled.len()).rev() {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    shuffled.swap(i, (x % (i as u64 + 1)) as usize);
                }
                let a = aggregate_daily_profile(&obs, bin, &table, 28_800);
                let b = aggregate_daily_profile(&shuffled, bin, &table, 28_800);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                    (Err(_), Err(_)) => {}
                    _ => return Err(TestCaseError::fail("one ordering failed")),
                }
                Ok(())
            }
        )
    })
}

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("geo round trip", geo_round_trip),
    ("geo monotonicity", geo_monotone),
    ("discretization spacing", discretization_spacing),
    ("gaussian boundary betweenness", boundary_betweenness),
    (
        "gaussian boundary equal-sigma midpoint",
        boundary_equal_sigma,
    ),
    ("gaussian boundary affine equivariance", boundary_affine),
    ("quantify inside range", quantify_in_range),
    ("capacity monotonicity", capacity_monotone),
    ("speed-flow inversion", speed_model_inversion),
    (
        "delay non-negativity and conservation",
        delay_non_negative_and_conserving,
    ),
    ("delay monotonicity", delay_monotone),
    ("baseline identity", baseline_identity),
    ("flat-profile sweep symmetry", flat_sweep_symmetry),
    ("sweep time-shift", sweep_shift),
    ("classifier totality", classifier_totality),
    ("aggregate order invariance", aggregate_order_invariance),
];
