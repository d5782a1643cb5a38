//! Acceptance suite: each criterion prints one PASS/FAIL line. Oracles are
//! computed here, independently of the library code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use holo_core::analytics::scoring::{score_test, AnswerKey, KnowledgeTestResponse, MAX_SCORE};
use holo_core::analytics::{
    build_report, cohen_kappa, generate, load_pair, mann_whitney_u, mann_whitney_u_with, short_time_energy,
    zero_crossing_rate, Dataset, Direction, LexiconProvider, PMethod, ReportOptions, SyntheticParams,
};
use holo_core::config::EngineConfig;
use holo_core::geometry::{mirror_u, project_point, Quat, ScreenGeometry, ScreenPoint, Side, Vec3, Viewer};
use holo_core::protocol::{
    self, Body, Command, ErrorPayload, Event, EventRecord, Hello, Message, Tool, PROTOCOL_VERSION,
};
use holo_core::scenario::{self, ScenarioScript, BUILTIN_SCENARIOS};
use holo_core::scene::SlideDeck;
use holo_core::techniques::{
    handoff_physical_to_virtual, paddle_hit, step_ballistic, BallState, Contact, Owner, Paddle, PhysicsConfig,
    PlayVolume, VirtualBall,
};
use holo_core::tracking::{solve_skeleton, Pose, Role, SkeletonConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Knowledge-test scorer

const SINGLE_OPTIONS: [&str; 4] = ["a", "b", "c", "d"];

fn subset(mask: u8) -> BTreeSet<String> {
    (0..4).filter(|i| mask & (1 << i) != 0).map(|i| SINGLE_OPTIONS[i].to_string()).collect()
}

/// Item-level oracle: points per item straight from the rubric.
fn rubric(resp: &KnowledgeTestResponse, key: &AnswerKey) -> u32 {
    let mut total = 0;
    for i in 0..4 {
        if resp.single_choice[i].as_deref() == Some(key.single_choice[i].as_str()) {
            total += 1;
        }
    }
    for i in 0..2 {
        if resp.multiple_choice[i] == key.multiple_choice[i] {
            total += 2;
        }
    }
    total + resp.open_ratings.iter().map(|&r| r as u32).sum::<u32>()
}

fn scorer() -> Outcome {
    let key = AnswerKey {
        single_choice: ["b".into(), "d".into(), "a".into(), "c".into()],
        multiple_choice: [subset(0b0101), subset(0b1110)],
    };
    let perfect = KnowledgeTestResponse {
        single_choice: key.single_choice.clone().map(Some),
        multiple_choice: key.multiple_choice.clone(),
        open_ratings: [5; 6],
    };
    let max = score_test(&perfect, &key).map_err(|e| e.to_string())?;
    ensure!(max == 38 && MAX_SCORE == 38, "maximum is {max}, constant {MAX_SCORE}");

    let mut r = rng(38);
    let mut perturbations = 0usize;
    for _ in 0..50 {
        let resp = KnowledgeTestResponse {
            single_choice: std::array::from_fn(|_| {
                let k = r.random_range(0..5);
                (k < 4).then(|| SINGLE_OPTIONS[k].to_string())
            }),
            multiple_choice: std::array::from_fn(|_| subset(r.random_range(0..16))),
            open_ratings: std::array::from_fn(|_| r.random_range(0..=5)),
        };
        let base = score_test(&resp, &key).map_err(|e| e.to_string())?;
        ensure!(base == rubric(&resp, &key), "score {base} disagrees with the rubric");
        ensure!(base <= 38, "score {base} above maximum");
        let mut check = |alt: KnowledgeTestResponse, item: &str| -> Result<(), String> {
            perturbations += 1;
            let s = score_test(&alt, &key).map_err(|e| e.to_string())?;
            let want = rubric(&alt, &key);
            ensure!(s == want, "{item}: score {s}, rubric {want}");
            // Monotone: improving one item's correctness never lowers the score.
            if want >= base {
                ensure!(s >= base, "{item}: score fell from {base} to {s}");
            }
            Ok(())
        };
        for i in 0..4 {
            for choice in SINGLE_OPTIONS.iter().map(|s| Some(s.to_string())).chain([None]) {
                let mut alt = resp.clone();
                alt.single_choice[i] = choice;
                check(alt, "single")?;
            }
        }
        for i in 0..2 {
            for mask in 0..16 {
                let mut alt = resp.clone();
                alt.multiple_choice[i] = subset(mask);
                check(alt, "multiple")?;
            }
        }
        for i in 0..6 {
            for rating in 0..=5 {
                let mut alt = resp.clone();
                alt.open_ratings[i] = rating;
                let up = rating >= resp.open_ratings[i];
                let s = score_test(&alt, &key).map_err(|e| e.to_string())?;
                ensure!(!up || s >= base, "raising open item {i} lowered the score");
                check(alt, "open")?;
            }
        }
    }
    Ok(format!("max=38, {perturbations} single-answer perturbations of 50 responses"))
}

// ---------------------------------------------------------------------------
// Mann-Whitney

/// U for `a` by direct pair counting (ties count one half).
fn u_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact p by enumerating every split of the pooled values.
fn mw_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let observed = u_pairs(a, b);
    let (mut lower, mut upper, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                x.push(*v);
            } else {
                y.push(*v);
            }
        }
        let u = u_pairs(&x, &y);
        total += 1;
        if u <= observed {
            lower += 1;
        }
        if u >= observed {
            upper += 1;
        }
    }
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

fn mann_whitney() -> Outcome {
    let start = Instant::now();
    let mut exhaustive = 0usize;
    let mut max_diff: f64 = 0.0;
    for n1 in 1..=4usize {
        for n2 in 1..=4usize {
            let n = n1 + n2;
            // Every assignment of the ranks 1..=n to the two groups.
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n1 {
                    continue;
                }
                let a: Vec<f64> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i as f64 + 1.0).collect();
                let b: Vec<f64> = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| i as f64 + 1.0).collect();
                let got = mann_whitney_u_with(&a, &b, PMethod::Exact).map_err(|e| e.to_string())?;
                let want = mw_enumeration_p(&a, &b);
                max_diff = max_diff.max((got.p_value - want).abs());
                ensure!((got.p_value - want).abs() <= 1e-12, "a={a:?} b={b:?}: p {} vs {want}", got.p_value);
                ensure!(got.statistic == u_pairs(&a, &b), "U mismatch for a={a:?} b={b:?}");
                exhaustive += 1;
            }
        }
    }
    let mut r = rng(12);
    for case in 0..1000 {
        let n = r.random_range(2..=12usize);
        let n1 = r.random_range(1..n);
        let mut values: Vec<i64> = (0..100).collect();
        values.shuffle(&mut r);
        let a: Vec<f64> = values[..n1].iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = values[n1..n].iter().map(|&v| v as f64).collect();
        let got = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
        ensure!(got.exact, "case {case}: tie-free n={n} should use the exact distribution");
        let want = mw_enumeration_p(&a, &b);
        max_diff = max_diff.max((got.p_value - want).abs());
        ensure!((got.p_value - want).abs() <= 1e-12, "case {case}: p {} vs {want}", got.p_value);
    }
    let mut complements = 0;
    for _ in 0..10_000 {
        let n1 = r.random_range(1..=30usize);
        let n2 = r.random_range(1..=30usize);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| r.random_range(0..20) as f64 / 2.0).collect() };
        let a = draw(n1);
        let b = draw(n2);
        let (ua, ub) = match (mann_whitney_u(&a, &b), mann_whitney_u(&b, &a)) {
            (Ok(x), Ok(y)) => (x.statistic, y.statistic),
            // All values equal: no U to compare.
            (Err(_), Err(_)) => continue,
            _ => return Err("asymmetric failure".into()),
        };
        ensure!(ua + ub == (n1 * n2) as f64, "U_a + U_b = {} for n1={n1} n2={n2}", ua + ub);
        complements += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{exhaustive} exhaustive + 1000 random exact cases, max |dp|={max_diff:.1e}; {complements} complement checks; {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// Cohen's kappa

fn kappa() -> Outcome {
    let mut r = rng(6);
    let mut max_diff: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let k = r.random_range(1..=6usize);
        let m: Vec<Vec<u64>> = (0..k).map(|_| (0..k).map(|_| r.random_range(0..40)).collect()).collect();
        let n: u64 = m.iter().flatten().sum();
        if n == 0 {
            continue;
        }
        let nf = n as f64;
        let p_o = (0..k).map(|i| m[i][i]).sum::<u64>() as f64 / nf;
        let p_e: f64 = (0..k)
            .map(|i| (m[i].iter().sum::<u64>() as f64 / nf) * ((0..k).map(|j| m[j][i]).sum::<u64>() as f64 / nf))
            .sum();
        if (1.0 - p_e).abs() < 1e-9 {
            continue;
        }
        let want = (p_o - p_e) / (1.0 - p_e);
        let got = cohen_kappa(&m).map_err(|e| e.to_string())?.statistic;
        max_diff = max_diff.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-12, "{m:?}: {got} vs {want}");
        checked += 1;
    }
    for k in 1..=6usize {
        for _ in 0..20 {
            let m: Vec<Vec<u64>> =
                (0..k).map(|i| (0..k).map(|j| if i == j { r.random_range(1..50) } else { 0 }).collect()).collect();
            let got = cohen_kappa(&m).map_err(|e| e.to_string())?.statistic;
            ensure!(got == 1.0, "diagonal {m:?} gave {got}");
        }
    }
    Ok(format!("1000 random matrices, max |dk|={max_diff:.1e}; 120 diagonal matrices exactly 1"))
}

// ---------------------------------------------------------------------------
// Acoustic features

fn acoustic() -> Outcome {
    let fs = 44_100.0;
    let (frame, hop) = (2205, 1102); // 50 ms frames, 25 ms hop
    let mut details = Vec::new();
    for f in [110.0, 440.0, 1760.0] {
        let sine: Vec<f64> = (0..44_100).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect();
        let z = zero_crossing_rate(&sine, frame, hop).map_err(|e| e.to_string())?;
        let mean_z = z.iter().sum::<f64>() / z.len() as f64;
        let want = 2.0 * f / fs;
        ensure!((mean_z - want).abs() <= 5e-4, "{f} Hz: zcr {mean_z} vs {want}");
        let e = short_time_energy(&sine, frame, hop).map_err(|e| e.to_string())?;
        let mean_e = e.iter().sum::<f64>() / e.len() as f64;
        ensure!((mean_e - 0.5).abs() <= 1e-6, "{f} Hz: energy {mean_e}");
        details.push(format!("{f} Hz dz={:.1e} de={:.1e}", (mean_z - want).abs(), (mean_e - 0.5).abs()));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------------------
// Projection

fn projection() -> Outcome {
    let screen = ScreenGeometry::default();
    let mut r = rng(100_000);
    let mut max_line: f64 = 0.0;
    let mut degenerate = 0;
    for _ in 0..100_000 {
        let side = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let eye = Vec3::new(r.random_range(-3.0..3.0), r.random_range(0.5..2.5), side * r.random_range(0.5..10.0));
        let p = Vec3::new(r.random_range(-3.0..3.0), r.random_range(-1.0..3.0), r.random_range(-3.0..3.0));
        let viewer = Viewer::at(eye).map_err(|e| e.to_string())?;
        match project_point(&viewer, p, &screen) {
            Ok(sp) => {
                ensure!(sp.u.is_finite() && sp.v.is_finite(), "non-finite projection");
                if (eye.z - p.z).abs() < 0.1 {
                    // Nearly parallel rays are legal but amplify rounding; only check finiteness.
                    continue;
                }
                // Distance from (u, v, 0) to the line through eye and p.
                let q = Vec3::new(sp.u, sp.v, 0.0);
                let d = p - eye;
                let w = q - eye;
                let cross = Vec3::new(w.y * d.z - w.z * d.y, w.z * d.x - w.x * d.z, w.x * d.y - w.y * d.x);
                let dist = (cross.x * cross.x + cross.y * cross.y + cross.z * cross.z).sqrt()
                    / (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
                max_line = max_line.max(dist);
                ensure!(dist <= 1e-9, "eye {eye:?} p {p:?}: {dist} m off the ray");

                let twice = mirror_u(mirror_u(sp));
                ensure!(
                    twice.u.to_bits() == sp.u.to_bits() && twice.v.to_bits() == sp.v.to_bits(),
                    "double mirror changed {sp:?}"
                );
            }
            Err(_) => {
                ensure!((eye.z - p.z).abs() < 1e-6, "rejected a regular pair eye {eye:?} p {p:?}");
            }
        }
        // The same eye depth as the point is always rejected.
        let flat = Vec3::new(p.x, p.y, eye.z);
        ensure!(project_point(&viewer, flat, &screen).is_err(), "degenerate pair accepted");
        degenerate += 1;
    }
    let nan = Vec3::new(f64::NAN, 0.0, 1.0);
    ensure!(
        project_point(&Viewer { eye: Vec3::new(0.0, 1.2, 5.0), side: Side::Front }, nan, &screen).is_err(),
        "NaN input accepted"
    );
    let sp = ScreenPoint { u: -0.0, v: 1.0, on_screen: true };
    ensure!(mirror_u(mirror_u(sp)).u.to_bits() == sp.u.to_bits(), "signed zero lost");
    Ok(format!("1e5 pairs, max distance to ray {max_line:.1e} m; {degenerate} degenerate pairs rejected"))
}

// ---------------------------------------------------------------------------
// Ballistics

fn ballistics() -> Outcome {
    let cfg = PhysicsConfig {
        dt: 1.0 / 1000.0,
        play_volume: PlayVolume { min: Vec3::new(-50.0, -50.0, -50.0), max: Vec3::new(50.0, 50.0, 50.0) },
        ..PhysicsConfig::default()
    };
    let speed = 3.0;
    let angle = std::f64::consts::FRAC_PI_4;
    let contact = Contact {
        point: ScreenGeometry::default().point(0.3, 0.2),
        velocity: Vec3::new(0.0, speed * angle.sin(), speed * angle.cos()),
        timestamp_us: 0,
    };
    let mut ball = handoff_physical_to_virtual(&contact);
    let p0 = ball.position;
    let v0 = ball.velocity;
    let g = cfg.gravity;
    let mut max_dev: f64 = 0.0;
    for k in 1..=1000 {
        ball = step_ballistic(&ball, &cfg);
        ensure!(ball.state == BallState::InPlay, "left the play volume");
        let t = k as f64 * cfg.dt;
        let want = Vec3::new(
            p0.x + v0.x * t + 0.5 * g.x * t * t,
            p0.y + v0.y * t + 0.5 * g.y * t * t,
            p0.z + v0.z * t + 0.5 * g.z * t * t,
        );
        let d = ball.position - want;
        max_dev = max_dev.max((d.x * d.x + d.y * d.y + d.z * d.z).sqrt());
    }
    ensure!(max_dev <= 5e-3, "deviation {max_dev} m");

    let elastic = PhysicsConfig { restitution: 1.0, ..PhysicsConfig::default() };
    let mut r = rng(10_000);
    let mut worst_rel: f64 = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let paddle_pos = Vec3::new(r.random_range(-1.5..1.5), r.random_range(0.5..2.5), r.random_range(-3.0..3.0));
        let paddle = Paddle { pose: Pose::new("p", Role::RightHand, 0, paddle_pos), radius: 0.2 };
        let n = loop {
            let c = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            let len = (c.x * c.x + c.y * c.y + c.z * c.z).sqrt();
            if len > 0.1 && len <= 1.0 {
                break c * (1.0 / len);
            }
        };
        let mut v = Vec3::new(r.random_range(-8.0..8.0), r.random_range(-8.0..8.0), r.random_range(-8.0..8.0));
        let along = v.x * n.x + v.y * n.y + v.z * n.z;
        if along >= 0.0 {
            v = v - n * (2.0 * along + 0.1);
        }
        let ball = VirtualBall {
            position: paddle_pos + n * (paddle.radius * r.random_range(0.2..1.0)),
            velocity: v,
            state: BallState::InPlay,
            owner_side: Owner::None,
        };
        let hit = paddle_hit(&ball, &paddle, &elastic).ok_or("approaching ball inside the paddle was not hit")?;
        let energy = |b: &VirtualBall| 0.5 * b.velocity.dot(b.velocity) - g.y * b.position.y;
        let (before, after) = (energy(&ball), energy(&hit));
        let rel = (after - before) / before.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        // A reflection preserves speed up to the last bits of a few roundings.
        ensure!(rel <= 1e-12, "energy rose by {rel:e} (relative)");
    }
    Ok(format!("max parabola deviation {max_dev:.3e} m; 1e4 elastic hits, max relative energy change {worst_rel:.1e}"))
}

// ---------------------------------------------------------------------------
// Inverse kinematics

fn unit(v: Vec3) -> Vec3 {
    let n = (v.x * v.x + v.y * v.y + v.z * v.z).sqrt();
    v * (1.0 / n)
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    let d = a - b;
    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
}

fn inverse_kinematics() -> Outcome {
    let sk = SkeletonConfig {
        upper_arm: Some(0.29),
        forearm: Some(0.25),
        thigh: Some(0.46),
        shin: Some(0.42),
        spine: Some(0.2),
        chest: Some(0.45),
        ..SkeletonConfig::default()
    };
    let (ua, fa, th, sh) = (0.29, 0.25, 0.46, 0.42);
    let mut r = rng(1_000);
    let mut max_len: f64 = 0.0;
    let mut max_angle: f64 = 0.0;
    let random_dir = |r: &mut ChaCha8Rng| loop {
        let c = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = (c.x * c.x + c.y * c.y + c.z * c.z).sqrt();
        if n > 0.1 && n <= 1.0 {
            return c * (1.0 / n);
        }
    };
    for i in 0..10_000 {
        let pelvis = Vec3::new(r.random_range(-1.0..1.0), r.random_range(0.8..1.1), r.random_range(-2.0..2.0));
        let yaw = r.random_range(-3.0..3.0);
        let orientation = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), yaw);
        let head = pelvis + Vec3::new(0.0, 0.7, 0.0);
        // Joint anchors from the body frame: up is world up, lateral is the waist x axis.
        let lateral = orientation.rotate(Vec3::new(1.0, 0.0, 0.0));
        let up = Vec3::new(0.0, 1.0, 0.0);
        let chest = pelvis + up * 0.45;
        let anchors = [
            chest + lateral * 0.18,
            chest - lateral * 0.18,
            pelvis + lateral * 0.1,
            pelvis - lateral * 0.1,
        ];
        let lengths = [(ua, fa), (ua, fa), (th, sh), (th, sh)];
        let targets: Vec<Vec3> = anchors
            .iter()
            .zip(lengths)
            .map(|(&a, (l1, l2))| {
                let lo: f64 = (l1 - l2 as f64).abs() + 1e-6;
                let hi = l1 + l2 - 1e-6;
                a + random_dir(&mut r) * r.random_range(lo..hi)
            })
            .collect();
        let mut poses = BTreeMap::new();
        let mut put = |role: Role, p: Vec3, q: Quat| {
            let mut pose = Pose::new(format!("{role:?}"), role, 0, p);
            pose.orientation = q;
            poses.insert(role, pose);
        };
        put(Role::Head, head, Quat::IDENTITY);
        put(Role::Waist, pelvis, orientation);
        put(Role::LeftHand, targets[0], Quat::IDENTITY);
        put(Role::RightHand, targets[1], Quat::IDENTITY);
        put(Role::LeftFoot, targets[2], Quat::IDENTITY);
        put(Role::RightFoot, targets[3], Quat::IDENTITY);
        let avatar = solve_skeleton(&poses, &sk, 0).map_err(|e| e.to_string())?;
        let limbs = [
            (avatar.left_shoulder, avatar.left_elbow, avatar.left_wrist),
            (avatar.right_shoulder, avatar.right_elbow, avatar.right_wrist),
            (avatar.left_hip, avatar.left_knee, avatar.left_ankle),
            (avatar.right_hip, avatar.right_knee, avatar.right_ankle),
        ];
        for (k, ((root, mid, end), (l1, l2))) in limbs.into_iter().zip(lengths).enumerate() {
            ensure!(dist(root, anchors[k]) < 1e-9, "case {i}: joint anchor moved");
            ensure!(dist(end, targets[k]) < 1e-9, "case {i}: end effector missed a reachable target");
            let e1 = (dist(root, mid) - l1).abs();
            let e2 = (dist(mid, end) - l2).abs();
            max_len = max_len.max(e1).max(e2);
            ensure!(e1 <= 1e-6 && e2 <= 1e-6, "case {i}: bone length error {e1:e}/{e2:e}");
            // Law of cosines on the configured lengths and the target distance.
            let d = dist(root, targets[k]);
            let oracle = ((l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)).clamp(-1.0, 1.0).acos();
            let (a, b) = (unit(root - mid), unit(end - mid));
            let cross = Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x);
            let solved = (cross.x * cross.x + cross.y * cross.y + cross.z * cross.z).sqrt().atan2(a.dot(b));
            max_angle = max_angle.max((solved - oracle).abs());
            ensure!((solved - oracle).abs() <= 1e-9, "case {i}: joint angle {solved} vs {oracle}");
        }
    }
    Ok(format!("1e4 random bodies (4e4 limbs), max bone error {max_len:.1e} m, max angle error {max_angle:.1e} rad"))
}

// ---------------------------------------------------------------------------
// Replay determinism

fn replay_determinism() -> Outcome {
    let cfg = EngineConfig::default();
    let deck = || scenario::demo_deck();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    for name in BUILTIN_SCENARIOS {
        let path = repo().join(format!("crates/core/scenarios/{name}.jsonl"));
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let script = ScenarioScript::parse(&text).map_err(|e| e.to_string())?;
        ensure!(!script.entries.is_empty(), "{name}: empty script");

        let t0 = Instant::now();
        let first = scenario::simulate(&script, &cfg, deck(), None).digest_lines();
        let in_process = t0.elapsed();
        let second = scenario::simulate(&script, &cfg, deck(), None).digest_lines();
        ensure!(first == second, "{name}: two in-process runs differ");

        let mut slowest = in_process;
        for run in 0..2 {
            let out = dir.path().join(format!("{name}-{run}"));
            let t = Instant::now();
            let status = Process::new(env!("CARGO_BIN_EXE_holoboard"))
                .args(["simulate", "--script"])
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .env("HOLO_LOG", "error")
                .output()
                .map_err(|e| e.to_string())?;
            slowest = slowest.max(t.elapsed());
            ensure!(status.status.success(), "{name}: simulate exited {:?}", status.status.code());
            let digests = std::fs::read_to_string(out.join("digests.txt")).map_err(|e| e.to_string())?;
            ensure!(digests == first, "{name}: process run {run} digests differ from in-process run");
        }
        ensure!(slowest < Duration::from_secs(5), "{name}: a run took {slowest:?}");
        details.push(format!("{name} {} frames, slowest {slowest:.2?}", first.lines().count()));
    }
    Ok(details.join("; "))
}

// ---------------------------------------------------------------------------
// Report pipeline

const INJECTED: [&str; 2] = ["close_posture", "loudness"];

fn check_report(label: &str, a: &Dataset, b: &Dataset, injected: bool) -> Result<usize, String> {
    let report =
        build_report(a, b, &ReportOptions::default(), &LexiconProvider::default()).map_err(|e| e.to_string())?;
    ensure!(report.rows.len() == 28, "{label}: {} rows", report.rows.len());
    for row in &report.rows {
        let name = row.variable.as_str();
        if injected {
            let expect = INJECTED.contains(&name);
            ensure!(row.significant(0.05) == expect, "{label}: {name} p={:?}", row.p_value);
            if expect {
                ensure!(row.direction == Direction::AGreater, "{label}: {name} direction {:?}", row.direction);
            }
        } else {
            ensure!(!row.significant(0.01), "{label}: {name} p={:?} in the null dataset", row.p_value);
        }
    }
    Ok(report.rows.len())
}

fn report_pipeline() -> Outcome {
    let params = SyntheticParams::default();
    ensure!(params.students == 18, "group size {}", params.students);
    ensure!(params.close_shift_s == 30.0 && params.loudness_factor == 1.5, "injection parameters changed");
    let pair = generate(&params).map_err(|e| e.to_string())?;
    check_report("generated", &pair.a, &pair.b, true)?;
    let null = generate(&SyntheticParams::null()).map_err(|e| e.to_string())?;
    check_report("null", &null.a, &null.b, false)?;
    let (a, b) = load_pair(&repo().join("data/synthetic")).map_err(|e| e.to_string())?;
    check_report("bundled", &a, &b, true)?;
    let (a, b) = load_pair(&repo().join("data/synthetic_null")).map_err(|e| e.to_string())?;
    check_report("bundled null", &a, &b, false)?;
    Ok("n=18 per group; only close_posture and loudness p<0.05 (a>b); null datasets have no p<0.01".into())
}

// ---------------------------------------------------------------------------
// Protocol

fn rand_f(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..6) {
        0 => 0.0,
        1 => -0.0,
        2 => r.random_range(-1e-300..1e-300),
        3 => r.random_range(-1e12..1e12),
        4 => f64::from_bits(r.random::<u64>() & !(0x7ffu64 << 52) | (r.random_range(1..0x7fe) << 52)),
        _ => r.random_range(-10.0..10.0),
    }
}

fn rand_vec(r: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rand_f(r), rand_f(r), rand_f(r))
}

fn rand_str(r: &mut ChaCha8Rng) -> String {
    const ALPHABET: [&str; 12] = ["a", "Z", "0", "_", " ", "\"", "\\", "\n", "\u{e9}", "\u{4e2d}", "\u{1f600}", "\u{0}"];
    (0..r.random_range(0..12)).map(|_| ALPHABET[r.random_range(0..ALPHABET.len())]).collect()
}

fn rand_side(r: &mut ChaCha8Rng) -> Side {
    if r.random_bool(0.5) {
        Side::Front
    } else {
        Side::Back
    }
}

fn rand_quat(r: &mut ChaCha8Rng) -> Quat {
    let axis = unit(Vec3::new(r.random_range(0.1..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
    Quat::from_axis_angle(axis, r.random_range(-3.1..3.1))
}

fn rand_command(r: &mut ChaCha8Rng) -> Command {
    match r.random_range(0..12) {
        0 => Command::NextSlide,
        1 => Command::PrevSlide,
        2 => Command::FreezeAfterimage,
        3 => Command::RolePlay { active: r.random_bool(0.5) },
        4 => Command::Praise { u: rand_f(r), v: rand_f(r) },
        5 => Command::SetTool {
            device_id: rand_str(r),
            tool: [Tool::None, Tool::Paddle, Tool::Model][r.random_range(0..3)],
            side: r.random_bool(0.5).then(|| rand_side(r)),
        },
        6 => Command::StrokeBegin { device_id: rand_str(r), side: rand_side(r) },
        7 => Command::ThrowBall {
            origin: r.random_bool(0.5).then(|| rand_vec(r)),
            direction: rand_vec(r),
            speed: rand_f(r),
        },
        8 => Command::MoveViewer { side: rand_side(r), eye: rand_vec(r) },
        9 => Command::UpdateMetrics {
            student_id: rand_str(r),
            metrics: (0..r.random_range(0..4)).map(|_| (rand_str(r), rand_f(r))).collect(),
        },
        10 => Command::AddPlaceholder {
            label: rand_str(r),
            center: [rand_f(r), rand_f(r)],
            width: rand_f(r),
            height: rand_f(r),
        },
        _ => Command::ClearStrokes,
    }
}

fn rand_event(r: &mut ChaCha8Rng) -> EventRecord {
    let event = match r.random_range(0..6) {
        0 => Event::SlideChanged { index: r.random_range(0..100) },
        1 => Event::Contact { device_id: rand_str(r), point: rand_vec(r), velocity: rand_vec(r) },
        2 => Event::SeqGap { expected: r.random(), got: r.random() },
        3 => Event::TriggerFired { trigger: rand_str(r), action: r.random_bool(0.5).then(|| rand_str(r)) },
        4 => Event::PraiseGiven { student_id: rand_str(r), praise_count: r.random() },
        _ => Event::InputError { message: rand_str(r) },
    };
    EventRecord { t_us: r.random(), frame_id: r.random(), event }
}

fn rand_message(r: &mut ChaCha8Rng, snapshots: &[Message]) -> Message {
    let seq = r.random_range(0..u64::MAX);
    let body = match r.random_range(0..6) {
        0 => {
            let roles = [Role::Head, Role::Waist, Role::LeftFoot, Role::RightFoot, Role::LeftHand, Role::RightHand, Role::Ball];
            let mut pose = Pose::new(rand_str(r), roles[r.random_range(0..roles.len())], r.random(), rand_vec(r));
            pose.orientation = rand_quat(r);
            Body::PoseUpdate(pose)
        }
        1 => Body::Command(rand_command(r)),
        2 => Body::Event(rand_event(r)),
        3 => Body::Hello(Hello {
            version: PROTOCOL_VERSION,
            client: r.random_bool(0.5).then(|| rand_str(r)),
            clock_us: r.random_bool(0.5).then(|| r.random()),
        }),
        4 => Body::Error(ErrorPayload {
            code: rand_str(r),
            message: rand_str(r),
            path: r.random_bool(0.5).then(|| rand_str(r)),
        }),
        _ => snapshots[r.random_range(0..snapshots.len())].body.clone(),
    };
    Message::new(seq, body)
}

fn mutate(r: &mut ChaCha8Rng, line: &[u8]) -> Vec<u8> {
    let mut out = line.to_vec();
    for _ in 0..r.random_range(1..4) {
        match r.random_range(0..5) {
            0 if !out.is_empty() => {
                let i = r.random_range(0..out.len());
                out[i] = r.random();
            }
            1 if !out.is_empty() => {
                let i = r.random_range(0..out.len());
                out.truncate(i);
            }
            2 => {
                let i = r.random_range(0..=out.len());
                let junk = [b'{', b'}', b'"', b'\n', b'\\', b'[', b':', b',', 0xff, b'1'];
                out.insert(i, junk[r.random_range(0..junk.len())]);
            }
            3 if out.len() > 2 => {
                let i = r.random_range(0..out.len() - 1);
                out.remove(i);
            }
            _ => out = (0..r.random_range(0..64)).map(|_| r.random()).collect(),
        }
    }
    out
}

fn protocol_round_trip() -> Outcome {
    let mut snapshots = Vec::new();
    for name in BUILTIN_SCENARIOS {
        let script = scenario::builtin(name, 1).ok_or("missing scenario")?;
        let out = scenario::simulate(&script, &EngineConfig::default(), SlideDeck::default_for_tests(), None);
        snapshots.extend(out.snapshots);
    }
    let mut r = rng(10_000);
    let mut bytes_total = 0usize;
    for i in 0..10_000 {
        let msg = rand_message(&mut r, &snapshots);
        let first = protocol::encode(&msg).map_err(|e| format!("message {i}: {e}"))?;
        let decoded = protocol::decode(&first).map_err(|e| format!("message {i}: {e}"))?;
        let second = protocol::encode(&decoded).map_err(|e| format!("message {i}: {e}"))?;
        ensure!(first == second, "message {i}: bytes changed on re-encode");
        ensure!(first.ends_with(b"\n") && !first[..first.len() - 1].contains(&b'\n'), "message {i}: not one line");
        bytes_total += first.len();
    }
    let mut rejected = 0usize;
    let mut fuzzed = 0usize;
    for _ in 0..20_000 {
        let msg = rand_message(&mut r, &snapshots);
        let line = protocol::encode(&msg).map_err(|e| e.to_string())?;
        let bad = mutate(&mut r, &line);
        let result = catch_unwind(AssertUnwindSafe(|| protocol::decode(&bad)));
        let decoded = result.map_err(|_| format!("decoder panicked on {:?}", String::from_utf8_lossy(&bad)))?;
        if decoded.is_err() {
            rejected += 1;
        }
        fuzzed += 1;
    }
    Ok(format!("1e4 messages ({bytes_total} bytes) byte-identical; {fuzzed} fuzzed lines, {rejected} rejected, no panic"))
}

// ---------------------------------------------------------------------------

trait DeckForTests {
    fn default_for_tests() -> SlideDeck;
}

impl DeckForTests for SlideDeck {
    fn default_for_tests() -> SlideDeck {
        scenario::demo_deck()
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("knowledge-test scorer", scorer),
        ("mann-whitney exact p and U complement", mann_whitney),
        ("cohen kappa closed form", kappa),
        ("zero-crossing rate and energy", acoustic),
        ("projection collinearity and mirror", projection),
        ("ballistics and elastic paddle hits", ballistics),
        ("two-bone inverse kinematics", inverse_kinematics),
        ("scenario replay determinism", replay_determinism),
        ("two-group report pipeline", report_pipeline),
        ("protocol round trip and fuzz", protocol_round_trip),
    ];
    // Keep panics from failing criteria out of the summary lines.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS  {name}: {detail} [{:.2?}]", t.elapsed()),
            Err(why) => {
                failed.push(name);
                format!("FAIL  {name}: {why} [{:.2?}]", t.elapsed())
            }
        };
        println!("{line}");
        lines.push(line);
    }
    let _ = std::panic::take_hook();
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
