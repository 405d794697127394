//! Synthetic tracking world: ground-truth trajectories, a challenge schedule,
//! two mock trackers of unequal robustness and response maps whose shape
//! tracks the true quality of the base tracker's prediction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::labeling::{assign_label, iou, BBox, DatasetStats, QualityLabel, WindowSet};
use crate::response::{ResponseMap, DEFAULT_CHANNELS, DEFAULT_EXTENT};
use crate::seeding::{stream, Purpose};

/// Response-map synthesis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseConfig {
    pub channels: usize,
    pub extent: usize,
    /// Arena pixels per response cell.
    pub cell_size: f64,
    /// Width of the target bump, in cells.
    pub peak_sigma: f64,
    /// Per-channel additive Gaussian noise.
    pub channel_noise: f64,
    /// Amplitude of the uniform clutter floor (scaled by `1 - quality`).
    pub floor_noise: f64,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            channels: DEFAULT_CHANNELS,
            extent: DEFAULT_EXTENT,
            cell_size: 8.0,
            peak_sigma: 1.5,
            channel_noise: 0.02,
            floor_noise: 0.3,
        }
    }
}

/// Channel scale factors, one per anchor; extra channels keep decreasing by 0.1.
fn channel_scale(ch: usize) -> f64 {
    (1.0 - 0.1 * ch as f64).max(0.1)
}

/// Everything that defines a synthetic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub arena_width: f64,
    pub arena_height: f64,
    pub box_width: f64,
    pub box_height: f64,
    /// Tracked frames per sequence (the initial frame is extra).
    pub frames: usize,
    /// Ground-truth random-walk step, px per axis per frame.
    pub motion_sigma: f64,
    /// Per-frame probability that a challenge event starts.
    pub challenge_rate: f64,
    pub challenge_duration: usize,
    pub base_noise: f64,
    pub correction_noise: f64,
    /// Per-frame probability that a locked base tracker starts drifting during a challenge.
    pub drift_prob: f64,
    /// Random-walk step of a drifting tracker, px per axis.
    pub drift_sigma: f64,
    /// Probability that the correction tracker locks onto the target when invoked.
    pub relock_prob: f64,
    /// A drifting base tracker re-locks outside challenges when its search
    /// center is this close to the target.
    pub capture_radius: f64,
    pub response: ResponseConfig,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            arena_width: 500.0,
            arena_height: 500.0,
            box_width: 40.0,
            box_height: 40.0,
            frames: 100,
            motion_sigma: 4.0,
            challenge_rate: 0.0008,
            challenge_duration: 12,
            base_noise: 3.0,
            correction_noise: 1.5,
            drift_prob: 0.3,
            drift_sigma: 8.0,
            relock_prob: 0.9,
            capture_radius: 10.0,
            response: ResponseConfig::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, window: usize) -> Result<()> {
        let positive = [
            ("arena_width", self.arena_width),
            ("arena_height", self.arena_height),
            ("box_width", self.box_width),
            ("box_height", self.box_height),
            ("cell_size", self.response.cell_size),
            ("peak_sigma", self.response.peak_sigma),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.box_width > self.arena_width || self.box_height > self.arena_height {
            return Err(Error::config("box does not fit in the arena"));
        }
        let non_negative = [
            ("motion_sigma", self.motion_sigma),
            ("base_noise", self.base_noise),
            ("correction_noise", self.correction_noise),
            ("drift_sigma", self.drift_sigma),
            ("capture_radius", self.capture_radius),
            ("channel_noise", self.response.channel_noise),
            ("floor_noise", self.response.floor_noise),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, p) in [
            ("challenge_rate", self.challenge_rate),
            ("drift_prob", self.drift_prob),
            ("relock_prob", self.relock_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be a probability, got {p}")));
            }
        }
        if self.response.channels == 0 || self.response.extent == 0 {
            return Err(Error::config("response maps need positive channels and extent"));
        }
        if self.frames < window {
            return Err(Error::config(format!(
                "sequences need at least K = {window} frames, got {}",
                self.frames
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "arena_width" => self.arena_width = parse(key, value)?,
            "arena_height" => self.arena_height = parse(key, value)?,
            "box_width" => self.box_width = parse(key, value)?,
            "box_height" => self.box_height = parse(key, value)?,
            "frames" => self.frames = parse(key, value)?,
            "motion_sigma" => self.motion_sigma = parse(key, value)?,
            "challenge_rate" => self.challenge_rate = parse(key, value)?,
            "challenge_duration" => self.challenge_duration = parse(key, value)?,
            "base_noise" => self.base_noise = parse(key, value)?,
            "correction_noise" => self.correction_noise = parse(key, value)?,
            "drift_prob" => self.drift_prob = parse(key, value)?,
            "drift_sigma" => self.drift_sigma = parse(key, value)?,
            "relock_prob" => self.relock_prob = parse(key, value)?,
            "capture_radius" => self.capture_radius = parse(key, value)?,
            "cell_size" => self.response.cell_size = parse(key, value)?,
            "peak_sigma" => self.response.peak_sigma = parse(key, value)?,
            "channel_noise" => self.response.channel_noise = parse(key, value)?,
            "floor_noise" => self.response.floor_noise = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown scenario key {key:?}"))),
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "arena_width",
        "arena_height",
        "box_width",
        "box_height",
        "frames",
        "motion_sigma",
        "challenge_rate",
        "challenge_duration",
        "base_noise",
        "correction_noise",
        "drift_prob",
        "drift_sigma",
        "relock_prob",
        "capture_radius",
        "cell_size",
        "peak_sigma",
        "channel_noise",
        "floor_noise",
        "seed",
    ];

    fn clamp_center(&self, x: f64, y: f64) -> (f64, f64) {
        let hw = self.box_width / 2.0;
        let hh = self.box_height / 2.0;
        (
            x.clamp(hw, self.arena_width - hw),
            y.clamp(hh, self.arena_height - hh),
        )
    }

    pub fn make_box(&self, center: (f64, f64)) -> BBox {
        BBox::new(center.0, center.1, self.box_width, self.box_height)
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated non-negative sigma")
}

/// Ground truth for frames `0..=frames`; frame 0 initializes the trackers.
pub fn gen_trajectory(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<BBox> {
    let hw = config.box_width / 2.0;
    let hh = config.box_height / 2.0;
    let start = (
        rng.random_range(hw..=config.arena_width - hw),
        rng.random_range(hh..=config.arena_height - hh),
    );
    let step = normal(config.motion_sigma);
    let mut center = start;
    let mut out = Vec::with_capacity(config.frames + 1);
    out.push(config.make_box(center));
    for _ in 0..config.frames {
        center = config.clamp_center(center.0 + step.sample(rng), center.1 + step.sample(rng));
        out.push(config.make_box(center));
    }
    out
}

/// Challenge flag for frames `0..=frames` (frame 0 is never a challenge).
pub fn gen_challenges(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut out = vec![false; config.frames + 1];
    let mut remaining = 0usize;
    for flag in out.iter_mut().skip(1) {
        if remaining == 0 && config.challenge_duration > 0 && rng.random_bool(config.challenge_rate) {
            remaining = config.challenge_duration;
        }
        if remaining > 0 {
            *flag = true;
            remaining -= 1;
        }
    }
    out
}

/// A mock tracker's view of the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockTrackerState {
    /// Search center, i.e. the previous output center.
    pub center: (f64, f64),
    pub locked: bool,
}

impl MockTrackerState {
    pub fn locked_at(center: (f64, f64)) -> Self {
        MockTrackerState {
            center,
            locked: true,
        }
    }
}

/// One base-tracker frame: a locked tracker reports the target with noise,
/// a drifting one random-walks away from its search center.
pub fn base_track_step(
    config: &ScenarioConfig,
    state: &MockTrackerState,
    truth: &BBox,
    in_challenge: bool,
    rng: &mut ChaCha8Rng,
) -> (BBox, MockTrackerState) {
    let mut locked = state.locked;
    let (sx, sy) = state.center;
    if locked {
        if in_challenge && rng.random_bool(config.drift_prob) {
            locked = false;
        }
    } else if !in_challenge && (sx - truth.cx).hypot(sy - truth.cy) < config.capture_radius {
        locked = true;
    }
    let center = if locked {
        let n = normal(config.base_noise);
        (truth.cx + n.sample(rng), truth.cy + n.sample(rng))
    } else {
        let n = normal(config.drift_sigma);
        (sx + n.sample(rng), sy + n.sample(rng))
    };
    let center = config.clamp_center(center.0, center.1);
    (config.make_box(center), MockTrackerState { center, locked })
}

/// The correction tracker, consulted only on a lost verdict: it locks onto the
/// target with probability `relock_prob`, otherwise it drifts like a lost tracker.
pub fn correction_track_step(
    config: &ScenarioConfig,
    state: &MockTrackerState,
    truth: &BBox,
    rng: &mut ChaCha8Rng,
) -> (BBox, MockTrackerState) {
    let locked = rng.random_bool(config.relock_prob);
    let (sx, sy) = state.center;
    let center = if locked {
        let n = normal(config.correction_noise);
        (truth.cx + n.sample(rng), truth.cy + n.sample(rng))
    } else {
        let n = normal(config.drift_sigma);
        (sx + n.sample(rng), sy + n.sample(rng))
    };
    let center = config.clamp_center(center.0, center.1);
    (config.make_box(center), MockTrackerState { center, locked })
}

fn add_bump(grid: &mut [f64], n: usize, row: f64, col: f64, sigma: f64, amplitude: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    for r in 0..n {
        let dr = r as f64 - row;
        let wr = (-dr * dr * inv).exp();
        for c in 0..n {
            let dc = c as f64 - col;
            grid[r * n + c] += amplitude * wr * (-dc * dc * inv).exp();
        }
    }
}

/// Synthesizes a response map: a target bump of height `quality` at the cell
/// `offset` (in cells, `(dx, dy)`) away from the window center, plus
/// `(1 - quality)`-scaled clutter of 3 to 6 random bumps over a uniform floor.
/// Channels are scaled copies with independent Gaussian noise.
pub fn synth_response(
    config: &ResponseConfig,
    offset: (f64, f64),
    quality: f64,
    rng: &mut ChaCha8Rng,
) -> ResponseMap {
    let n = config.extent;
    let quality = quality.clamp(0.0, 1.0);
    let center = (n / 2) as f64;
    let edge = (n - 1) as f64;
    let col = (center + offset.0).clamp(0.0, edge);
    let row = (center + offset.1).clamp(0.0, edge);

    let mut grid = vec![0.0; n * n];
    add_bump(&mut grid, n, row, col, config.peak_sigma, quality);

    // Draw every clutter variate regardless of quality so the stream advances
    // by the same amount each frame.
    let clutter = 1.0 - quality;
    let bumps = rng.random_range(3..=6);
    let pos = Uniform::new_inclusive(0.0, edge).expect("positive extent");
    for _ in 0..bumps {
        let (br, bc) = (pos.sample(rng), pos.sample(rng));
        let amp = rng.random_range(0.4..1.0);
        let sigma = rng.random_range(1.0..2.5);
        add_bump(&mut grid, n, br, bc, sigma, clutter * amp);
    }
    for v in grid.iter_mut() {
        *v += clutter * config.floor_noise * rng.random::<f64>();
    }

    let noise = normal(config.channel_noise);
    let mut scores = Vec::with_capacity(config.channels * n * n);
    for ch in 0..config.channels {
        let scale = channel_scale(ch);
        for &v in &grid {
            let e = if config.channel_noise > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            scores.push((scale * v + e) as f32);
        }
    }
    ResponseMap::new(config.channels, n, scores).expect("synthesized scores are finite")
}

/// Response-map offset (in cells) of a prediction relative to the search center.
pub fn response_offset(config: &ScenarioConfig, search: (f64, f64), predicted: &BBox) -> (f64, f64) {
    let half = (config.response.extent / 2) as f64;
    let clamp = |v: f64| v.clamp(-half, half);
    (
        clamp((predicted.cx - search.0) / config.response.cell_size),
        clamp((predicted.cy - search.1) / config.response.cell_size),
    )
}

/// One tracked frame of a base-tracker run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub truth: BBox,
    pub predicted: BBox,
    /// Raw (unshifted) base response map.
    pub response: ResponseMap,
    pub iou: f64,
    pub label: QualityLabel,
    pub in_challenge: bool,
}

/// The deterministic inputs of one scenario: truth, challenges and the
/// random streams the trackers and response synthesis draw from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: Vec<BBox>,
    pub challenges: Vec<bool>,
    pub base_rng: ChaCha8Rng,
    pub correction_rng: ChaCha8Rng,
    pub response_rng: ChaCha8Rng,
}

impl Scenario {
    /// Scenario `index` of the stream family rooted at `config.seed`.
    pub fn new(config: &ScenarioConfig, index: u64) -> Scenario {
        let seed = config.seed;
        let truth = gen_trajectory(config, &mut stream(seed, Purpose::Trajectory, index));
        let challenges = gen_challenges(config, &mut stream(seed, Purpose::Challenge, index));
        Scenario {
            truth,
            challenges,
            base_rng: stream(seed, Purpose::BaseTracker, index),
            correction_rng: stream(seed, Purpose::CorrectionTracker, index),
            response_rng: stream(seed, Purpose::Response, index),
        }
    }
}

/// Runs the base tracker alone over scenario `index` and records every tracked frame.
pub fn gen_sequence(config: &ScenarioConfig, index: u64) -> Vec<FrameRecord> {
    let mut sc = Scenario::new(config, index);
    let mut state = MockTrackerState::locked_at(sc.truth[0].center());
    let mut out = Vec::with_capacity(config.frames);
    for t in 1..=config.frames {
        let truth = sc.truth[t];
        let search = state.center;
        let (predicted, next) = base_track_step(config, &state, &truth, sc.challenges[t], &mut sc.base_rng);
        let quality = iou(&predicted, &truth);
        let response = synth_response(
            &config.response,
            response_offset(config, search, &predicted),
            quality,
            &mut sc.response_rng,
        );
        out.push(FrameRecord {
            truth,
            predicted,
            response,
            iou: quality,
            label: assign_label(quality).expect("iou is within [0, 1]"),
            in_challenge: sc.challenges[t],
        });
        state = next;
    }
    out
}

/// Generates `sequences` scenarios and cuts their circular-shifted response
/// maps into `window`-frame training samples.
pub fn generate_dataset(config: &ScenarioConfig, sequences: usize, window: usize) -> Result<WindowSet> {
    generate_range(config, 0..sequences as u64, window)
}

/// Like [`generate_dataset`] for the scenarios with indices in `range`.
pub fn generate_range(config: &ScenarioConfig, range: std::ops::Range<u64>, window: usize) -> Result<WindowSet> {
    config.validate(window)?;
    let mut set = WindowSet::new(window, config.response.channels, config.response.extent)?;
    for index in range {
        let records = gen_sequence(config, index);
        let maps: Vec<ResponseMap> = records
            .iter()
            .map(|r| r.response.circular_shift_to_corners())
            .collect();
        let labels: Vec<QualityLabel> = records.iter().map(|r| r.label).collect();
        set.push_sequence(&maps, &labels)?;
    }
    Ok(set)
}

/// Frame-label statistics of `sequences` scenarios without keeping any maps.
pub fn scenario_stats(config: &ScenarioConfig, sequences: usize) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for index in 0..sequences {
        let labels = gen_sequence(config, index as u64).into_iter().map(|r| r.label);
        stats.merge(&DatasetStats::from_labels(1, labels));
    }
    stats
}
