//! Built-in synthetic living room: 13 microphones in 5 synchronized groups and
//! 9 household scenes. Coordinates are metres in a 6 m × 5 m room. Each group
//! is a cluster of wired microphones spread 0.5 m around its centre.

use crate::graph::MicGraph;
use crate::sim::{Activity, Attenuation, Room, SceneSpec, SignalKind, Source};

pub const SAMPLE_RATE: u32 = 16_000;
pub const NOISE_FLOOR_DB: f64 = -60.0;

/// Device centres for groups I to V.
pub const GROUP_CENTRES: [[f64; 2]; 5] = [[1.0, 1.0], [5.0, 1.0], [3.0, 2.5], [1.0, 4.0], [5.0, 4.0]];
const GROUP_SIZES: [usize; 5] = [3, 3, 3, 2, 2];
const GROUP_RADIUS: f64 = 0.5;

pub fn groups() -> Vec<Vec<usize>> {
    let mut next = 0;
    GROUP_SIZES
        .iter()
        .map(|&s| {
            let g = (next..next + s).collect();
            next += s;
            g
        })
        .collect()
}

/// Three-mic groups are triangles, two-mic groups horizontal pairs.
pub fn mic_positions() -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for (c, &size) in GROUP_CENTRES.iter().zip(&GROUP_SIZES) {
        for k in 0..size {
            let a = if size == 2 {
                std::f64::consts::PI * k as f64
            } else {
                std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / size as f64
            };
            out.push([c[0] + GROUP_RADIUS * a.cos(), c[1] + GROUP_RADIUS * a.sin()]);
        }
    }
    out
}

pub fn graph(alpha: f64) -> MicGraph {
    MicGraph::new(13, groups(), alpha).expect("fixture graph is valid")
}

/// Six mics in three groups of sizes 1, 2 and 3.
pub fn small_graph(alpha: f64) -> MicGraph {
    MicGraph::new(6, vec![vec![0], vec![1, 2], vec![3, 4, 5]], alpha).expect("fixture graph is valid")
}

fn src(x: f64, y: f64, signal: SignalKind, level: f64, activity: Activity) -> Source {
    Source {
        position: [x, y],
        signal,
        level,
        activity,
    }
}

fn band(low_hz: f64, high_hz: f64) -> SignalKind {
    SignalKind::NoiseBand { low_hz, high_hz }
}

fn clicks(rate_hz: f64) -> SignalKind {
    SignalKind::ImpulseTrain { rate_hz }
}

fn bursts(rate_hz: f64, mean_len_s: f64) -> Activity {
    Activity::Bursts { rate_hz, mean_len_s }
}

const ON: Activity = Activity::Continuous;

/// The nine scenes, in label order.
pub fn scenes() -> Vec<SceneSpec> {
    let c = GROUP_CENTRES;
    let near = |g: usize, dx: f64, dy: f64| (c[g][0] + dx, c[g][1] + dy);
    let at = |(x, y): (f64, f64), signal, level, activity| src(x, y, signal, level, activity);
    let table: Vec<(&str, Vec<Source>)> = vec![
        (
            "chatting",
            vec![
                at(near(2, -0.5, 0.4), band(200.0, 3000.0), 0.08, bursts(2.0, 0.4)),
                at(near(2, 0.6, -0.3), band(150.0, 2500.0), 0.08, bursts(2.0, 0.4)),
            ],
        ),
        (
            "cooking",
            vec![
                at(near(1, 0.4, 0.3), band(1000.0, 6000.0), 0.04, ON),
                at(near(1, -0.3, 0.4), clicks(3.0), 0.15, ON),
            ],
        ),
        (
            "dishwashing",
            vec![
                at(near(1, -0.4, -0.3), clicks(6.0), 0.2, ON),
                at(near(1, -0.3, -0.4), band(500.0, 3000.0), 0.06, bursts(0.8, 0.8)),
            ],
        ),
        (
            "eating",
            vec![
                at(near(2, 0.3, 0.4), clicks(2.0), 0.15, ON),
                at(near(2, -0.4, -0.3), band(200.0, 2000.0), 0.05, bursts(1.0, 0.3)),
            ],
        ),
        (
            "laundry",
            vec![
                at(near(3, -0.4, 0.4), SignalKind::Tone { freq_hz: 60.0 }, 0.05, ON),
                at(near(3, -0.4, 0.4), band(100.0, 1500.0), 0.05, bursts(0.5, 1.0)),
            ],
        ),
        (
            "operating_pc",
            vec![
                at(near(0, 0.3, 0.35), clicks(8.0), 0.08, bursts(0.7, 1.0)),
                at(near(0, -0.4, -0.3), SignalKind::Tone { freq_hz: 120.0 }, 0.01, ON),
            ],
        ),
        (
            "reading_newspaper",
            vec![at(near(3, 0.4, -0.3), band(2000.0, 7000.0), 0.04, bursts(0.8, 0.3))],
        ),
        (
            "vacuuming",
            vec![at(near(0, 0.8, 0.6), band(100.0, 4000.0), 0.3, bursts(0.5, 1.5))],
        ),
        (
            "watching_tv",
            vec![
                at(near(4, 0.5, 0.4), band(200.0, 5000.0), 0.05, ON),
                at(near(4, 0.5, 0.4), band(300.0, 3000.0), 0.06, bursts(2.0, 0.3)),
            ],
        ),
    ];
    let mics = mic_positions();
    table
        .into_iter()
        .map(|(label, sources)| SceneSpec {
            scene_label: label.to_string(),
            sources,
            mic_positions: mics.clone(),
            room: Room {
                attenuation: Attenuation::InverseDistance,
                noise_floor_db: Some(NOISE_FLOOR_DB),
            },
        })
        .collect()
}
