//! Timed input scripts and headless simulation.
//!
//! A script is JSONL: one `{"message": <wire message>, "t_us": N}` object per
//! line, with non-decreasing `t_us` on the session clock. Simulation ticks at
//! multiples of the configured tick period and feeds each entry to the tick
//! at or after its time.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::geometry::{Side, Vec3};
use crate::protocol::{self, Body, Command, EventRecord, Message, Tool};
use crate::scene::{ItemKind, Slide, SlideDeck, SlideItem, StudentInfo};
use crate::session::{Input, Recorder, Session, TickOutput};
use crate::tracking::{Pose, Role};

#[derive(Debug, Error, PartialEq)]
#[error("script line {line}: {reason}")]
pub struct ScriptInvalid {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub t_us: i64,
    pub input: Input,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioScript {
    pub entries: Vec<ScriptEntry>,
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<ScenarioScript, ScriptInvalid> {
        let mut entries = Vec::new();
        let mut last_t = i64::MIN;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |reason: String| ScriptInvalid { line, reason };
            if raw.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            let Value::Object(mut obj) = value else {
                return Err(bad("entry is not a JSON object".into()));
            };
            let t_us = obj
                .get("t_us")
                .and_then(Value::as_i64)
                .ok_or_else(|| bad("t_us: expected an integer".into()))?;
            if t_us < last_t {
                return Err(bad(format!("t_us {t_us} is earlier than the previous entry")));
            }
            last_t = t_us;
            let message = obj.remove("message").ok_or_else(|| bad("message: missing field".into()))?;
            let msg = protocol::decode_value(message).map_err(|e| bad(e.to_string()))?;
            let input = Input::from_body(msg.body)
                .ok_or_else(|| bad("only pose_update and command messages can be scripted".into()))?;
            entries.push(ScriptEntry { t_us, input });
        }
        Ok(ScenarioScript { entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let msg = Message::new(i as u64 + 1, e.input.clone().into_body());
            let value = protocol::to_value(&msg).expect("scripted values are finite");
            let mut obj = Map::new();
            obj.insert("message".into(), value);
            obj.insert("t_us".into(), Value::from(e.t_us));
            out.push_str(&Value::Object(obj).to_string());
            out.push('\n');
        }
        out
    }

    pub fn end_us(&self) -> i64 {
        self.entries.last().map_or(0, |e| e.t_us)
    }

    fn push(&mut self, t_us: i64, input: Input) {
        self.entries.push(ScriptEntry { t_us, input });
    }

    fn command(&mut self, t_us: i64, c: Command) {
        self.push(t_us, Input::Command(c));
    }

    fn pose(&mut self, device: &str, role: Role, t_us: i64, position: Vec3) {
        self.push(t_us, Input::Pose(Pose::new(device, role, t_us, position)));
    }

    fn sort(&mut self) {
        self.entries.sort_by_key(|e| e.t_us);
    }
}

pub struct SimulationOutput {
    /// The session log (inputs, events and snapshots), one line each.
    pub log: Vec<u8>,
    pub events: Vec<EventRecord>,
    /// `(frame_id, digest)` per tick.
    pub digests: Vec<(u64, String)>,
    pub snapshots: Vec<Message>,
}

impl SimulationOutput {
    pub fn final_snapshot(&self) -> Option<&Message> {
        self.snapshots.last()
    }

    pub fn digest_lines(&self) -> String {
        self.digests.iter().map(|(f, d)| format!("{f} {d}\n")).collect()
    }
}

/// Number of ticks needed to apply every entry, at least one.
pub fn default_ticks(script: &ScenarioScript, cfg: &EngineConfig) -> u64 {
    let period = cfg.tick_period_us();
    (script.end_us().max(0) / period + 1) as u64
}

/// Runs the tick loop over `script` without sockets.
pub fn simulate(script: &ScenarioScript, cfg: &EngineConfig, deck: SlideDeck, ticks: Option<u64>) -> SimulationOutput {
    let ticks = ticks.unwrap_or_else(|| default_ticks(script, cfg));
    let period = cfg.tick_period_us();
    let mut session = Session::new(cfg.clone(), deck);
    let mut rec = Recorder::new(Vec::new());
    let mut out = SimulationOutput { log: Vec::new(), events: Vec::new(), digests: Vec::new(), snapshots: Vec::new() };
    let mut next = 0;
    for k in 1..=ticks {
        let now = k as i64 * period;
        while next < script.entries.len() && script.entries[next].t_us <= now {
            let input = script.entries[next].input.clone();
            rec.input(&input).expect("in-memory log");
            session.submit(input);
            next += 1;
        }
        let tick: TickOutput = session.tick(now);
        rec.tick(&tick).expect("in-memory log");
        if let Body::StateSnapshot(s) = &tick.snapshot.body {
            out.digests.push((s.frame_id, s.digest.clone()));
        }
        out.events.extend(tick.events);
        out.snapshots.push(tick.snapshot);
    }
    out.log = rec.into_inner();
    out
}

/// Names of the scenarios shipped with the engine.
pub const BUILTIN_SCENARIOS: [&str; 3] = ["presentation", "role_play_afterimage", "ball_handoff"];

pub fn builtin(name: &str, seed: u64) -> Option<ScenarioScript> {
    match name {
        "presentation" => Some(presentation(seed)),
        "role_play_afterimage" => Some(role_play_afterimage(seed)),
        "ball_handoff" => Some(ball_handoff(seed)),
        _ => None,
    }
}

const SAMPLE_US: i64 = 11_111; // ~90 Hz tracker stream

fn jitter(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
    )
}

/// Small deck used by the built-in scenarios and as the server default.
pub fn demo_deck() -> SlideDeck {
    let text = |y: f64, z: f64, s: &str| SlideItem {
        kind: ItemKind::Text,
        position: Vec3::new(0.0, y, z),
        size: [1.6, 0.2],
        text: Some(s.into()),
        sprite: None,
    };
    let sprite = |x: f64, z: f64, s: &str| SlideItem {
        kind: ItemKind::Sprite,
        position: Vec3::new(x, 0.0, z),
        size: [0.5, 0.5],
        text: None,
        sprite: Some(s.into()),
    };
    SlideDeck {
        title: "Solar system".into(),
        slides: vec![
            Slide { title: "Title".into(), items: vec![text(0.8, 0.0, "The solar system")] },
            Slide {
                title: "Planets".into(),
                items: vec![text(1.0, 0.0, "Inner planets"), sprite(-0.8, -0.5, "earth"), sprite(0.8, 0.3, "mars")],
            },
            Slide { title: "Orbits".into(), items: vec![text(1.0, 0.0, "Orbits"), sprite(0.0, -1.0, "sun")] },
        ],
        current_index: 0,
    }
}

/// Slides, back-side writing, media placeholder and dashboard praise.
pub fn presentation(seed: u64) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ScenarioScript::default();
    s.command(0, Command::LoadDeck { deck: demo_deck() });
    s.command(0, Command::AddPlaceholder { label: "camera".into(), center: [1.4, 1.0], width: 0.8, height: 0.45 });
    let students: Vec<StudentInfo> = (0..6)
        .map(|i| StudentInfo {
            id: format!("s{i:02}"),
            name: format!("Student {}", i + 1),
            head_pos: Vec3::new(-1.5 + 0.6 * i as f64 + rng.random_range(-0.05..0.05), 1.2, 2.0 + (i % 2) as f64),
            metrics: [("attention".to_string(), rng.random_range(0.3..1.0))].into_iter().collect(),
        })
        .collect();
    s.command(50_000, Command::SetStudents { students });
    s.command(200_000, Command::NextSlide);

    // The teacher writes a short underline from behind the board.
    s.command(300_000, Command::StrokeBegin { device_id: "pen".into(), side: Side::Back });
    let mut t = 300_000;
    for i in 0..45 {
        let x = -1.0 + i as f64 * 0.04;
        let y = -0.6 + 0.1 * (i as f64 * 0.3).sin();
        let p = Vec3::new(x, y, -0.02) + jitter(&mut rng, 0.002);
        s.pose("pen", Role::RightHand, t, p);
        t += SAMPLE_US;
    }
    s.command(t, Command::StrokeEnd { device_id: "pen".into() });

    s.command(900_000, Command::Praise { u: -0.15, v: 1.525 });
    s.command(950_000, Command::UpdateMetrics {
        student_id: "s02".into(),
        metrics: [("attention".to_string(), 0.95)].into_iter().collect(),
    });
    s.command(1_000_000, Command::NextSlide);
    s.command(1_100_000, Command::NextSlide);
    s.command(1_200_000, Command::PrevSlide);
    s.command(1_300_000, Command::MoveViewer { side: Side::Front, eye: Vec3::new(0.8, 1.3, 4.0) });
    s.sort();
    s
}

/// Six trackers drive the avatar through a raise-arms motion; afterimages are
/// frozen at three stages.
pub fn role_play_afterimage(seed: u64) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ScenarioScript::default();
    s.command(0, Command::RolePlay { active: true });
    let z = -0.8;
    let frames = 180; // two seconds at 90 Hz
    for f in 0..frames {
        let t = 20_000 + f * SAMPLE_US;
        let phase = (f as f64 / (frames - 1) as f64).min(1.0);
        // Arms swing from hanging down (0) to straight up (pi).
        let angle = phase * PI;
        let shoulder_y = 1.0 + 0.525;
        let reach = 0.58;
        let hand = |sign: f64| Vec3::new(sign * (0.18 + reach * angle.sin()), shoulder_y - reach * angle.cos(), z);
        let sway = 0.05 * (phase * 2.0 * PI).sin();
        let mut add = |device: &str, role: Role, p: Vec3, rng: &mut ChaCha8Rng| {
            s.pose(device, role, t, p + Vec3::new(sway, 0.0, 0.0) + jitter(rng, 0.001));
        };
        add("hmd", Role::Head, Vec3::new(0.0, 1.7, z), &mut rng);
        add("waist", Role::Waist, Vec3::new(0.0, 1.0, z), &mut rng);
        add("ctl-left", Role::LeftHand, hand(1.0), &mut rng);
        add("ctl-right", Role::RightHand, hand(-1.0), &mut rng);
        add("foot-left", Role::LeftFoot, Vec3::new(0.1, 0.1, z), &mut rng);
        add("foot-right", Role::RightFoot, Vec3::new(-0.1, 0.1, z), &mut rng);
        if f == 30 || f == 90 || f == 150 {
            s.command(t, Command::FreezeAfterimage);
        }
    }
    let end = 20_000 + frames * SAMPLE_US;
    s.command(end + 100_000, Command::ClearAfterimages);
    s.command(end + 200_000, Command::RolePlay { active: false });
    s.sort();
    s
}

/// A tracked ball thrown at the board, handed off to the virtual ball, hit by
/// a paddle behind the board, plus a short modeling push.
pub fn ball_handoff(seed: u64) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ScenarioScript::default();
    s.command(0, Command::SetTool { device_id: "paddle".into(), tool: Tool::Paddle, side: None });

    // Physical ball flies toward the board from the front at 3 m/s.
    let start = Vec3::new(0.2, 1.4, 1.2);
    let vel = Vec3::new(0.0, 0.0, -3.0);
    let mut t = 100_000;
    let mut contact_t = None;
    for i in 0..60 {
        let dt = i as f64 * SAMPLE_US as f64 * 1e-6;
        let p = start + vel * dt;
        s.pose("ball", Role::Ball, t, p + jitter(&mut rng, 0.0005));
        if contact_t.is_none() && p.z.abs() <= 0.05 {
            contact_t = Some((t, p));
        }
        if p.z < 0.0 {
            break;
        }
        t += SAMPLE_US;
    }
    // Hold the paddle where the virtual ball will be ~0.25 s after contact.
    let (ct, cp) = contact_t.expect("trajectory crosses the board");
    let flight = 0.25;
    let g = -9.81;
    let hit = Vec3::new(cp.x, cp.y + 0.5 * g * flight * flight, vel.z * flight);
    let mut pt = 0;
    while pt <= ct + 600_000 {
        s.pose("paddle", Role::LeftHand, pt, hit + Vec3::new(0.0, 0.0, -0.05));
        pt += 3 * SAMPLE_US;
    }

    // Modeling: push into the board from behind.
    let m0 = ct + 700_000;
    s.command(m0, Command::SetTool { device_id: "sculpt".into(), tool: Tool::Model, side: Some(Side::Back) });
    for i in 0..40 {
        let depth = 0.1 * (i as f64 * PI / 39.0).sin();
        let p = Vec3::new(-0.5 + 0.01 * i as f64, 0.3, depth - 0.005);
        s.pose("sculpt", Role::RightHand, m0 + (i + 1) * SAMPLE_US, p);
    }
    s.command(m0 + 50 * SAMPLE_US, Command::SetTool { device_id: "sculpt".into(), tool: Tool::None, side: None });
    s.command(m0 + 60 * SAMPLE_US, Command::ThrowBall {
        origin: Some(Vec3::new(0.0, 1.0, -1.0)),
        direction: Vec3::new(0.0, 1.0, 1.0),
        speed: 3.0,
    });
    s.sort();
    s
}
