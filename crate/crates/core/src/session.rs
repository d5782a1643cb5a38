//! The authoritative session: one ordered input queue, one tick.
//!
//! Everything that changes the board goes through [`Session::submit`] and is
//! applied on the next [`Session::tick`], so feeding the same inputs at the
//! same tick times always yields the same snapshots.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{self, Write};

use thiserror::Error;

use crate::config::EngineConfig;
use crate::geometry::{Side, Vec3, Viewer};
use crate::protocol::{self, Body, Command, Event, EventRecord, Message, ProtocolError, Snapshot, Tool};
use crate::scene::{
    compose_lenient, Board, Direction, ExtrudedCell, LayerPayload, SceneObject, SlideDeck, StudentInfo, ViewerPair,
    Visibility,
};
use crate::techniques::{
    detect_screen_contact, handoff_physical_to_virtual, paddle_hit, step_ballistic, BallState, ExtrusionField,
    ModelingTool, Owner, Paddle, VirtualBall,
};
use crate::tracking::{
    detect_pose_triggers, smooth_pose, solve_skeleton, BodyFrame, Pose, PoseHistory, Role, SkeletonConfig,
};

/// Where a thrown ball starts when the command gives no origin.
const DEFAULT_THROW_ORIGIN: Vec3 = Vec3 { x: 0.0, y: 1.5, z: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Pose(Pose),
    Command(Command),
}

impl Input {
    pub fn into_body(self) -> Body {
        match self {
            Input::Pose(p) => Body::PoseUpdate(p),
            Input::Command(c) => Body::Command(c),
        }
    }

    pub fn from_body(body: Body) -> Option<Input> {
        match body {
            Body::PoseUpdate(p) => Some(Input::Pose(p)),
            Body::Command(c) => Some(Input::Command(c)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ToolState {
    Paddle,
    Model(ModelingTool),
}

#[derive(Debug, Clone)]
pub struct TickOutput {
    pub snapshot: Message,
    pub events: Vec<EventRecord>,
}

#[derive(Debug)]
pub struct Session {
    cfg: EngineConfig,
    board: Board,
    viewers: ViewerPair,
    teacher: Viewer,
    histories: BTreeMap<String, PoseHistory>,
    latest_by_role: BTreeMap<Role, Pose>,
    skeleton: SkeletonConfig,
    tools: BTreeMap<String, ToolState>,
    ball: Option<VirtualBall>,
    ball_layer: Option<u64>,
    last_contact_us: Option<i64>,
    field: ExtrusionField,
    model_layer: Option<u64>,
    students: Vec<StudentInfo>,
    active_triggers: BTreeSet<String>,
    queue: VecDeque<Input>,
    physics_steps: u64,
    frame_id: u64,
    now_us: i64,
    pending: Vec<EventRecord>,
}

impl Session {
    pub fn new(cfg: EngineConfig, deck: SlideDeck) -> Session {
        let board = Board::new(cfg.screen, cfg.scene.clone(), deck);
        let viewers = ViewerPair { front: cfg.viewer(Side::Front), back: cfg.viewer(Side::Back) };
        let teacher = cfg.teacher_viewer();
        let field = ExtrusionField::new(&cfg.screen, &cfg.modeling);
        let skeleton = cfg.skeleton.clone();
        Session {
            cfg,
            board,
            viewers,
            teacher,
            histories: BTreeMap::new(),
            latest_by_role: BTreeMap::new(),
            skeleton,
            tools: BTreeMap::new(),
            ball: None,
            ball_layer: None,
            last_contact_us: None,
            field,
            model_layer: None,
            students: Vec::new(),
            active_triggers: BTreeSet::new(),
            queue: VecDeque::new(),
            physics_steps: 0,
            frame_id: 0,
            now_us: 0,
            pending: Vec::new(),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn now_us(&self) -> i64 {
        self.now_us
    }

    pub fn ball(&self) -> Option<&VirtualBall> {
        self.ball.as_ref()
    }

    pub fn skeleton(&self) -> &SkeletonConfig {
        &self.skeleton
    }

    /// Queues an input for the next tick.
    pub fn submit(&mut self, input: Input) {
        self.queue.push_back(input);
    }

    /// Records an event that did not come from applying an input (for
    /// example a sequence gap seen by a connection handler). It is emitted
    /// with the next tick's events.
    pub fn report(&mut self, event: Event) {
        self.pending.push(EventRecord { t_us: self.now_us, frame_id: self.frame_id + 1, event });
    }

    fn emit(&mut self, event: Event) {
        self.pending.push(EventRecord { t_us: self.now_us, frame_id: self.frame_id, event });
    }

    fn input_error(&mut self, message: impl Into<String>) {
        self.emit(Event::InputError { message: message.into() });
    }

    /// Advances the session to `now_us`: applies queued inputs in order,
    /// integrates physics, recomposes both display lists and emits a snapshot.
    pub fn tick(&mut self, now_us: i64) -> TickOutput {
        self.now_us = now_us.max(self.now_us);
        self.frame_id += 1;
        for e in &mut self.pending {
            e.frame_id = self.frame_id;
        }
        while let Some(input) = self.queue.pop_front() {
            match input {
                Input::Pose(p) => self.apply_pose(p),
                Input::Command(c) => self.apply_command(c),
            }
        }
        self.step_physics();
        self.update_role_play();
        self.sync_objects();

        self.board.frame_id = self.frame_id;
        let (display, errors) = compose_lenient(&self.board, &self.viewers);
        for e in errors {
            self.emit(Event::RenderError { message: e.to_string() });
        }
        let snapshot = Snapshot {
            frame_id: self.frame_id,
            now_us: self.now_us,
            slide_index: self.board.deck.current_index,
            slide_count: self.board.deck.len(),
            role_play: self.board.role_play,
            ball: self.ball,
            avatar: self.board.avatar().cloned(),
            tags: self.board.dashboard.tags.clone(),
            extruded_cells: self.field.nonzero().len(),
            digest: display.digest(),
            display,
        };
        TickOutput {
            snapshot: Message::new(self.frame_id, Body::StateSnapshot(Box::new(snapshot))),
            events: std::mem::take(&mut self.pending),
        }
    }

    fn apply_pose(&mut self, pose: Pose) {
        if !pose.is_valid() {
            return self.input_error(format!("pose from {} has non-finite position or non-unit orientation", pose.device_id));
        }
        let capacity = self.cfg.tracking.history_capacity;
        let history = self
            .histories
            .entry(pose.device_id.clone())
            .or_insert_with(|| PoseHistory::with_capacity(capacity));
        if let Err(p) = history.push(pose) {
            return self.input_error(format!("pose from {} at {} us is older than its last sample", p.device_id, p.timestamp_us));
        }
        let samples = history.samples();
        let latest = samples.last().expect("just pushed").clone();
        let effective = if latest.role.is_hand() {
            smooth_pose(samples, self.cfg.tracking.smoothing_alpha).unwrap_or_else(|_| latest.clone())
        } else {
            latest.clone()
        };
        self.latest_by_role.insert(effective.role, effective.clone());

        if self.board.is_writing(&effective.device_id) {
            if let Err(e) = self.board.add_stroke_point(&effective) {
                self.input_error(e.to_string());
            }
        }
        if let Some(ToolState::Model(mut tool)) = self.tools.get(&effective.device_id).copied() {
            if let Some(engaged) = self.field.extrude(&mut tool, &effective) {
                self.emit(Event::Extrusion { device_id: effective.device_id.clone(), engaged });
            }
            self.tools.insert(effective.device_id.clone(), ToolState::Model(tool));
        }
        if latest.role == Role::Ball {
            let history = self.histories[&latest.device_id].samples();
            if let Some(contact) =
                detect_screen_contact(history, &self.cfg.physics, &self.cfg.screen, self.last_contact_us)
            {
                self.last_contact_us = Some(contact.timestamp_us);
                let ball = handoff_physical_to_virtual(&contact);
                self.emit(Event::Contact {
                    device_id: latest.device_id.clone(),
                    point: Vec3::new(contact.point.u, contact.point.v, 0.0),
                    velocity: contact.velocity,
                });
                self.spawn_ball(ball);
            }
        }
    }

    fn spawn_ball(&mut self, ball: VirtualBall) {
        self.emit(Event::BallSpawned { position: ball.position, velocity: ball.velocity, owner: ball.owner_side });
        self.ball = Some(ball);
    }

    fn apply_command(&mut self, cmd: Command) {
        match cmd {
            Command::NextSlide => self.navigate(Direction::Next),
            Command::PrevSlide => self.navigate(Direction::Previous),
            Command::FreezeAfterimage => match self.board.avatar().cloned() {
                Some(avatar) => match self.board.freeze_afterimage(&avatar, self.now_us) {
                    Ok(layer_id) => self.emit(Event::AfterimageFrozen { layer_id }),
                    Err(e) => self.input_error(e.to_string()),
                },
                None => self.input_error("freeze_afterimage: no avatar is being driven"),
            },
            Command::ClearAfterimages => self.board.clear_afterimages(),
            Command::RolePlay { active } => {
                self.board.set_role_play(active);
                if !active {
                    self.active_triggers.clear();
                }
            }
            Command::Praise { u, v } => {
                let click = self.cfg.screen.point(u, v);
                if let Some(p) = self.board.apply_praise(click, self.cfg.praise_radius, self.now_us) {
                    self.emit(Event::PraiseGiven { student_id: p.student_id, praise_count: p.praise_count });
                }
            }
            Command::SetTool { device_id, tool, side } => match tool {
                Tool::None => {
                    self.tools.remove(&device_id);
                }
                Tool::Paddle => {
                    self.tools.insert(device_id, ToolState::Paddle);
                }
                Tool::Model => {
                    let side = side.unwrap_or_else(|| {
                        self.histories
                            .get(&device_id)
                            .and_then(PoseHistory::latest)
                            .map_or(Side::Back, |p| Side::of_z(p.position.z))
                    });
                    self.tools.insert(device_id, ToolState::Model(ModelingTool { side, engaged: false }));
                }
            },
            Command::StrokeBegin { device_id, side } => self.board.begin_stroke(&device_id, side),
            Command::StrokeEnd { device_id } => {
                if let Some(layer_id) = self.board.end_stroke(&device_id) {
                    let side = match self.board.layer(layer_id).map(|l| &l.payload) {
                        Some(LayerPayload::Stroke(s)) => s.author_side,
                        _ => Side::Back,
                    };
                    self.emit(Event::StrokeCommitted { layer_id, device_id, side });
                }
            }
            Command::ThrowBall { origin, direction, speed } => {
                let origin = origin.unwrap_or(DEFAULT_THROW_ORIGIN);
                match direction.normalized() {
                    Some(dir) if speed.is_finite() && origin.is_finite() => {
                        let owner = if origin.z == 0.0 { Owner::None } else { Side::of_z(origin.z).into() };
                        self.spawn_ball(VirtualBall {
                            position: origin,
                            velocity: dir * speed,
                            state: BallState::InPlay,
                            owner_side: owner,
                        });
                    }
                    _ => self.input_error("throw_ball: direction must be a non-zero finite vector"),
                }
            }
            Command::MoveViewer { side, eye } => match Viewer::new(eye, side) {
                Ok(v) => match side {
                    Side::Front => self.viewers.front = v,
                    Side::Back => self.viewers.back = v,
                },
                Err(e) => self.input_error(format!("move_viewer: {e}")),
            },
            Command::SetTeacherEye { eye } => match Viewer::new(eye, Side::Back) {
                Ok(v) => {
                    self.teacher = v;
                    self.refresh_dashboard();
                }
                Err(e) => self.input_error(format!("set_teacher_eye: {e}")),
            },
            Command::SetStudents { students } => {
                self.students = students;
                self.refresh_dashboard();
            }
            Command::UpdateMetrics { student_id, metrics } => {
                match self.students.iter_mut().find(|s| s.id == student_id) {
                    Some(s) => {
                        s.metrics.extend(metrics);
                        self.refresh_dashboard();
                    }
                    None => self.input_error(format!("update_metrics: unknown student {student_id}")),
                }
            }
            Command::ResetModel => self.field.reset(),
            Command::ClearStrokes => self.board.clear_strokes(),
            Command::LoadDeck { deck } => match deck.validate() {
                Ok(()) => {
                    self.board.deck = deck;
                    self.emit(Event::SlideChanged { index: self.board.deck.current_index });
                }
                Err(e) => self.input_error(e.to_string()),
            },
            Command::AddPlaceholder { label, center, width, height } => {
                if center.iter().all(|c| c.is_finite()) && width > 0.0 && height > 0.0 {
                    self.board.add_layer(LayerPayload::MediaPlaceholder { label, center, width, height }, Visibility::BOTH);
                } else {
                    self.input_error("add_placeholder: center must be finite and size positive");
                }
            }
            Command::RemoveBall => self.ball = None,
        }
    }

    fn navigate(&mut self, direction: Direction) {
        let nav = self.board.navigate(direction);
        if nav.boundary_hit {
            self.emit(Event::BoundaryHit { direction, index: nav.index });
        } else {
            self.emit(Event::SlideChanged { index: nav.index });
        }
    }

    fn refresh_dashboard(&mut self) {
        let students = std::mem::take(&mut self.students);
        if let Err(e) = self.board.update_dashboard(&students, &self.teacher) {
            self.input_error(e.to_string());
        }
        self.students = students;
    }

    /// Runs fixed physics steps until the step count catches up with `now_us`.
    fn step_physics(&mut self) {
        let dt = self.cfg.physics.dt;
        let target = (self.now_us as f64 * 1e-6 / dt).floor().max(0.0) as u64;
        let Some(mut ball) = self.ball.filter(|b| b.state == BallState::InPlay) else {
            self.physics_steps = self.physics_steps.max(target);
            return;
        };
        let paddles: Vec<(String, Paddle)> = self
            .tools
            .iter()
            .filter(|(_, t)| matches!(t, ToolState::Paddle))
            .filter_map(|(id, _)| {
                let pose = self.histories.get(id)?.latest()?.clone();
                Some((id.clone(), Paddle { pose, radius: self.cfg.physics.paddle_radius }))
            })
            .collect();
        while self.physics_steps < target {
            self.physics_steps += 1;
            ball = step_ballistic(&ball, &self.cfg.physics);
            for (id, paddle) in &paddles {
                if let Some(hit) = paddle_hit(&ball, paddle, &self.cfg.physics) {
                    ball = hit;
                    self.emit(Event::PaddleHit { device_id: id.clone(), side: paddle.side(), velocity: hit.velocity });
                }
            }
            if !self.cfg.physics.play_volume.contains(ball.position) {
                ball.state = BallState::OutOfBounds;
                self.emit(Event::BallOutOfBounds { position: ball.position });
                self.physics_steps = target;
                break;
            }
        }
        self.ball = Some(ball);
    }

    fn update_role_play(&mut self) {
        if !self.board.role_play {
            return;
        }
        if !self.skeleton.is_calibrated() {
            match BodyFrame::from_poses(&self.latest_by_role, self.now_us, self.skeleton.staleness_us) {
                Ok(frame) => {
                    self.skeleton = self.skeleton.calibrate(&frame);
                    let sk = &self.skeleton;
                    let len = |v: Option<f64>| v.unwrap_or(0.0);
                    self.emit(Event::Calibrated {
                        upper_arm: len(sk.upper_arm),
                        forearm: len(sk.forearm),
                        thigh: len(sk.thigh),
                        shin: len(sk.shin),
                        spine: len(sk.spine),
                        chest: len(sk.chest),
                    });
                }
                Err(_) => return,
            }
        }
        // A missing or stale tracker leaves the last solved avatar in place.
        let Ok(mut avatar) = solve_skeleton(&self.latest_by_role, &self.skeleton, self.now_us) else {
            return;
        };
        let active = detect_pose_triggers(&avatar, &self.cfg.triggers);
        let fired: Vec<_> = self
            .cfg
            .triggers
            .iter()
            .filter(|r| active.contains(&r.name) && !self.active_triggers.contains(&r.name))
            .cloned()
            .collect();
        avatar.trigger_state = active.clone();
        self.active_triggers = active;
        if let Err(e) = self.board.set_avatar(avatar) {
            self.input_error(e.to_string());
        }
        for rule in fired {
            self.emit(Event::TriggerFired { trigger: rule.name.clone(), action: rule.action.clone() });
            if let Some(action) = &rule.action {
                let parsed: Result<Command, _> = serde_json::from_value(serde_json::json!({ "name": action }));
                match parsed {
                    Ok(cmd) => self.apply_command(cmd),
                    Err(e) => self.input_error(format!("trigger {}: action {action:?}: {e}", rule.name)),
                }
            }
        }
    }

    fn sync_objects(&mut self) {
        let ball_obj = self
            .ball
            .filter(|b| b.state == BallState::InPlay)
            .map(|b| SceneObject::Ball { position: b.position, radius: self.cfg.physics.ball_radius });
        let mut slot = self.ball_layer;
        self.board.set_object(&mut slot, ball_obj);
        self.ball_layer = slot;

        let cells: Vec<ExtrudedCell> = self
            .field
            .nonzero()
            .into_iter()
            .map(|(c, r, depth)| {
                let (u, v) = self.field.cell_center(c, r);
                ExtrudedCell { u, v, depth }
            })
            .collect();
        let (cw, ch) = self.field.cell_size();
        let model_obj = (!cells.is_empty()).then(|| SceneObject::Extrusion {
            cells,
            cell_width: cw,
            cell_height: ch,
            max_depth: self.cfg.modeling.max_extrusion,
        });
        let mut slot = self.model_layer;
        self.board.set_object(&mut slot, model_obj);
        self.model_layer = slot;
    }
}

/// Writes a session log: every applied input, event and snapshot as one
/// protocol line, in the order they happened.
pub struct Recorder<W: Write> {
    out: W,
    seq: u64,
}

impl<W: Write> Recorder<W> {
    pub fn new(out: W) -> Recorder<W> {
        Recorder { out, seq: 0 }
    }

    fn line(&mut self, body: Body) -> io::Result<()> {
        self.seq += 1;
        let line = protocol::encode(&Message::new(self.seq, body)).map_err(io::Error::other)?;
        self.out.write_all(&line)
    }

    pub fn input(&mut self, input: &Input) -> io::Result<()> {
        self.line(input.clone().into_body())
    }

    pub fn tick(&mut self, out: &TickOutput) -> io::Result<()> {
        for e in &out.events {
            self.line(Body::Event(e.clone()))?;
        }
        self.line(out.snapshot.body.clone())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log line {line}: {source}")]
    Decode { line: usize, source: ProtocolError },
    #[error("log line {line}: snapshot differs from the recorded one")]
    Diverged { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaySummary {
    pub inputs: usize,
    pub snapshots: usize,
}

/// Feeds a recorded log back through a fresh session, ticking at each
/// recorded snapshot time and checking the snapshot payloads byte for byte.
pub fn replay(cfg: EngineConfig, deck: SlideDeck, log: &str) -> Result<ReplaySummary, ReplayError> {
    let mut session = Session::new(cfg, deck);
    let mut summary = ReplaySummary { inputs: 0, snapshots: 0 };
    for (i, raw) in log.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let msg = protocol::decode(raw.as_bytes()).map_err(|source| ReplayError::Decode { line: i + 1, source })?;
        match msg.body {
            Body::StateSnapshot(recorded) => {
                let out = session.tick(recorded.now_us);
                let Body::StateSnapshot(got) = out.snapshot.body else { unreachable!() };
                let same = protocol::encode_str(&Message::new(0, Body::StateSnapshot(got)))
                    .ok()
                    .zip(protocol::encode_str(&Message::new(0, Body::StateSnapshot(recorded))).ok())
                    .is_some_and(|(a, b)| a == b);
                if !same {
                    return Err(ReplayError::Diverged { line: i + 1 });
                }
                summary.snapshots += 1;
            }
            body => {
                if let Some(input) = Input::from_body(body) {
                    session.submit(input);
                    summary.inputs += 1;
                }
            }
        }
    }
    Ok(summary)
}
