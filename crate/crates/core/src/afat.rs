//! The failure-aware tracking loop.
//!
//! Each frame the base tracker searches from the previous output center and
//! emits a box plus a response map. The map goes into a `K`-frame buffer;
//! once the buffer is full a [`QualityPredictor`] judges the window. A `lost`
//! verdict swaps in the correction tracker's box and empties the buffer.
//! Both trackers share one motion state: whatever box is output becomes the
//! next frame's search center for both.

use std::io::Write;

use crate::error::{Error, Result};
use crate::labeling::{assign_label, iou, BBox, QualityLabel};
use crate::metrics::{success_auc, TrackRun};
use crate::qpn::QpnModel;
use crate::response::{ResponseBuffer, ResponseMap};
use crate::simworld::{
    base_track_step, correction_track_step, gen_sequence, response_offset, synth_response, MockTrackerState, Scenario,
    ScenarioConfig,
};

/// What a predictor sees for one frame.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    /// 1-based frame index within the sequence.
    pub frame: usize,
    /// The last `K` circular-shifted maps, oldest first.
    pub window: &'a [&'a ResponseMap],
    /// True IOU of the base box. Only oracles may look at it.
    pub base_iou: f64,
}

/// Source of per-frame tracking-quality verdicts.
pub trait QualityPredictor {
    fn verdict(&mut self, query: &Query<'_>) -> Result<QualityLabel>;

    /// Window shape the predictor accepts, if it has one.
    fn expects(&self) -> Option<(usize, usize, usize)> {
        None
    }
}

impl QualityPredictor for QpnModel {
    fn verdict(&mut self, query: &Query<'_>) -> Result<QualityLabel> {
        self.predict(query.window)
    }

    fn expects(&self) -> Option<(usize, usize, usize)> {
        let a = self.arch();
        Some((a.window, a.channels, a.extent))
    }
}

/// Reads the true IOU: lost exactly when the frame would be labelled lost.
#[derive(Debug, Clone, Copy, Default)]
pub struct IouOracle;

impl QualityPredictor for IouOracle {
    fn verdict(&mut self, query: &Query<'_>) -> Result<QualityLabel> {
        Ok(match assign_label(query.base_iou)? {
            QualityLabel::Lost => QualityLabel::Lost,
            _ => QualityLabel::Success,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysSuccess;

impl QualityPredictor for AlwaysSuccess {
    fn verdict(&mut self, _: &Query<'_>) -> Result<QualityLabel> {
        Ok(QualityLabel::Success)
    }
}

/// Says lost on the listed frames, success otherwise. Records every frame it
/// was asked about.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    pub lost_frames: Vec<usize>,
    pub queried: Vec<usize>,
}

impl Scripted {
    pub fn new(lost_frames: impl Into<Vec<usize>>) -> Self {
        Scripted {
            lost_frames: lost_frames.into(),
            queried: Vec::new(),
        }
    }
}

impl QualityPredictor for Scripted {
    fn verdict(&mut self, query: &Query<'_>) -> Result<QualityLabel> {
        self.queried.push(query.frame);
        Ok(if self.lost_frames.contains(&query.frame) {
            QualityLabel::Lost
        } else {
            QualityLabel::Success
        })
    }
}

impl<P: QualityPredictor + ?Sized> QualityPredictor for &mut P {
    fn verdict(&mut self, query: &Query<'_>) -> Result<QualityLabel> {
        (**self).verdict(query)
    }

    fn expects(&self) -> Option<(usize, usize, usize)> {
        (**self).expects()
    }
}

#[derive(Debug, Clone)]
pub struct AfatState {
    /// Shared previous output center `p_{t-1}`.
    pub center: (f64, f64),
    /// Box size `w x h`; fixed by the scenario.
    pub size: (f64, f64),
    pub buffer: ResponseBuffer,
    pub base: MockTrackerState,
    pub correction: MockTrackerState,
    pub frames: u64,
    pub detections: u64,
}

/// Result of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub output: BBox,
    pub base: BBox,
    pub verdict: QualityLabel,
    /// Whether the predictor was consulted (false while warming up).
    pub queried: bool,
}

/// The per-frame state machine. Stepping before [`AfatTracker::init`] is a
/// contract error.
#[derive(Debug, Clone)]
pub struct AfatTracker {
    config: ScenarioConfig,
    window: usize,
    state: Option<AfatState>,
}

impl AfatTracker {
    pub fn new(config: ScenarioConfig, window: usize) -> Result<Self> {
        config.validate(window)?;
        Ok(AfatTracker {
            config,
            window,
            state: None,
        })
    }

    pub fn state(&self) -> Option<&AfatState> {
        self.state.as_ref()
    }

    /// Locks both trackers on the initial ground truth.
    pub fn init(&mut self, truth: &BBox) -> Result<()> {
        let valid = [truth.cx, truth.cy, truth.w, truth.h].iter().all(|v| v.is_finite()) && truth.w > 0.0 && truth.h > 0.0;
        if !valid {
            return Err(Error::contract(format!("invalid initial box {truth:?}")));
        }
        let r = &self.config.response;
        let center = truth.center();
        self.state = Some(AfatState {
            center,
            size: (truth.w, truth.h),
            buffer: ResponseBuffer::new(self.window, r.channels, r.extent)?,
            base: MockTrackerState::locked_at(center),
            correction: MockTrackerState::locked_at(center),
            frames: 0,
            detections: 0,
        });
        Ok(())
    }

    /// Processes frame `t` (1-based) of `scenario`.
    pub fn step(&mut self, scenario: &mut Scenario, t: usize, predictor: &mut dyn QualityPredictor) -> Result<StepOutput> {
        let config = &self.config;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::contract("AFAT stepped before init"))?;
        let truth = *scenario
            .truth
            .get(t)
            .ok_or_else(|| Error::contract(format!("frame {t} beyond the scenario")))?;
        let search = state.center;

        let mut base_state = state.base;
        base_state.center = search;
        let (base_box, base_next) = base_track_step(config, &base_state, &truth, scenario.challenges[t], &mut scenario.base_rng);
        let base_iou = iou(&base_box, &truth);
        let map = synth_response(
            &config.response,
            response_offset(config, search, &base_box),
            base_iou,
            &mut scenario.response_rng,
        );
        state.buffer.push(map.circular_shift_to_corners())?;
        state.base = base_next;
        state.frames += 1;

        let (verdict, queried) = match state.buffer.window() {
            None => (QualityLabel::Success, false),
            Some(window) => {
                let query = Query {
                    frame: t,
                    window: &window,
                    base_iou,
                };
                (predictor.verdict(&query)?, true)
            }
        };

        let output = if verdict == QualityLabel::Lost {
            let mut corr = state.correction;
            corr.center = search;
            let (corr_box, corr_next) = correction_track_step(config, &corr, &truth, &mut scenario.correction_rng);
            state.correction = corr_next;
            state.detections += 1;
            state.buffer.clear();
            corr_box
        } else {
            base_box
        };

        state.center = output.center();
        state.base.center = state.center;
        state.correction.center = state.center;
        Ok(StepOutput {
            output,
            base: base_box,
            verdict,
            queried,
        })
    }
}

/// One frame of a run report.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub sequence: u64,
    pub frame: usize,
    pub base_iou: f64,
    pub afat_iou: f64,
    pub verdict: QualityLabel,
}

/// Base-only versus AFAT over a set of scenarios.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub rows: Vec<FrameRow>,
    pub base: TrackRun,
    pub afat: TrackRun,
    pub detections: u64,
}

impl RunReport {
    pub fn frames(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn detection_rate(&self) -> f64 {
        detection_rate(self.detections, self.frames())
    }

    pub fn summary(&self) -> Result<RunSummary> {
        Ok(RunSummary {
            sequences: self.rows.iter().map(|r| r.sequence).collect::<std::collections::BTreeSet<_>>().len(),
            frames: self.frames(),
            mean_base_iou: self.base.mean_iou()?,
            mean_afat_iou: self.afat.mean_iou()?,
            base_auc: success_auc(&self.base)?,
            afat_auc: success_auc(&self.afat)?,
            detections: self.detections,
            detection_rate: self.detection_rate(),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sequence", "frame", "base_iou", "afat_iou", "verdict"])?;
        for r in &self.rows {
            w.write_record([
                r.sequence.to_string(),
                r.frame.to_string(),
                r.base_iou.to_string(),
                r.afat_iou.to_string(),
                r.verdict.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub sequences: usize,
    pub frames: u64,
    pub mean_base_iou: f64,
    pub mean_afat_iou: f64,
    pub base_auc: f64,
    pub afat_auc: f64,
    pub detections: u64,
    pub detection_rate: f64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "sequences: {}", self.sequences)?;
        writeln!(f, "frames: {}", self.frames)?;
        writeln!(f, "mean_base_iou: {:.6}", self.mean_base_iou)?;
        writeln!(f, "mean_afat_iou: {:.6}", self.mean_afat_iou)?;
        writeln!(f, "base_success_auc: {:.6}", self.base_auc)?;
        writeln!(f, "afat_success_auc: {:.6}", self.afat_auc)?;
        writeln!(f, "detections: {}", self.detections)?;
        write!(f, "detection_rate: {:.6}", self.detection_rate)
    }
}

/// Detections per processed frame; 0 for an empty run.
pub fn detection_rate(detections: u64, frames: u64) -> f64 {
    if frames == 0 {
        0.0
    } else {
        detections as f64 / frames as f64
    }
}

/// Runs base-only and AFAT on scenario `index` and appends both to `report`.
pub fn afat_run_sequence(
    config: &ScenarioConfig,
    window: usize,
    index: u64,
    predictor: &mut dyn QualityPredictor,
    report: &mut RunReport,
) -> Result<()> {
    let base_only = gen_sequence(config, index);
    let mut scenario = Scenario::new(config, index);
    let mut tracker = AfatTracker::new(config.clone(), window)?;
    tracker.init(&scenario.truth[0])?;
    for (t, base) in (1..=config.frames).zip(&base_only) {
        let step = tracker.step(&mut scenario, t, predictor)?;
        let truth = scenario.truth[t];
        report.rows.push(FrameRow {
            sequence: index,
            frame: t,
            base_iou: base.iou,
            afat_iou: iou(&step.output, &truth),
            verdict: step.verdict,
        });
        report.base.push(base.predicted, truth);
        report.afat.push(step.output, truth);
    }
    report.detections += tracker.state().map_or(0, |s| s.detections);
    Ok(())
}

/// Runs scenarios `0..sequences` of `config`.
pub fn afat_run(
    config: &ScenarioConfig,
    window: usize,
    sequences: usize,
    predictor: &mut dyn QualityPredictor,
) -> Result<RunReport> {
    config.validate(window)?;
    if let Some((k, c, n)) = predictor.expects() {
        if (k, c, n) != (window, config.response.channels, config.response.extent) {
            return Err(Error::contract(format!(
                "predictor expects {k}x{c}x{n}x{n} windows, scenario gives {window}x{c2}x{n2}x{n2}",
                c2 = config.response.channels,
                n2 = config.response.extent
            )));
        }
    }
    let mut report = RunReport::default();
    for index in 0..sequences {
        afat_run_sequence(config, window, index as u64, predictor, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(frames: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            frames,
            seed,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn init_locks_on_truth() {
        let mut tr = AfatTracker::new(ScenarioConfig::default(), 20).unwrap();
        assert!(tr.state().is_none());
        let b = BBox::new(120.0, 80.0, 40.0, 40.0);
        tr.init(&b).unwrap();
        let s = tr.state().unwrap();
        assert_eq!(s.center, (120.0, 80.0));
        assert!(s.buffer.is_empty());
        assert_eq!((s.frames, s.detections), (0, 0));
        assert!(s.base.locked && s.correction.locked);
    }

    #[test]
    fn bad_initial_box_is_rejected() {
        let mut tr = AfatTracker::new(ScenarioConfig::default(), 20).unwrap();
        assert!(matches!(tr.init(&BBox::new(1.0, 1.0, 0.0, 4.0)), Err(Error::Contract(_))));
        assert!(matches!(tr.init(&BBox::new(f64::NAN, 1.0, 2.0, 4.0)), Err(Error::Contract(_))));
    }

    #[test]
    fn step_before_init_is_a_contract_error() {
        let cfg = config(30, 0);
        let mut tr = AfatTracker::new(cfg.clone(), 20).unwrap();
        let mut sc = Scenario::new(&cfg, 0);
        let err = tr.step(&mut sc, 1, &mut AlwaysSuccess).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn always_success_is_the_base_tracker() {
        let cfg = config(200, 3);
        for index in 0..5 {
            let base = gen_sequence(&cfg, index);
            let mut sc = Scenario::new(&cfg, index);
            let mut tr = AfatTracker::new(cfg.clone(), 20).unwrap();
            tr.init(&sc.truth[0]).unwrap();
            for t in 1..=cfg.frames {
                let step = tr.step(&mut sc, t, &mut AlwaysSuccess).unwrap();
                assert_eq!(step.output, base[t - 1].predicted);
                assert_eq!(step.verdict, QualityLabel::Success);
            }
            assert_eq!(tr.state().unwrap().detections, 0);
        }
    }

    #[test]
    fn lost_verdict_empties_the_buffer() {
        let cfg = config(60, 1);
        let mut sc = Scenario::new(&cfg, 0);
        let mut tr = AfatTracker::new(cfg.clone(), 20).unwrap();
        tr.init(&sc.truth[0]).unwrap();
        let mut script = Scripted::new(vec![30, 31, 45]);
        for t in 1..=cfg.frames {
            let step = tr.step(&mut sc, t, &mut script).unwrap();
            let s = tr.state().unwrap();
            assert!(s.buffer.len() <= 20);
            if t == 30 {
                assert_eq!(step.verdict, QualityLabel::Lost);
                assert_ne!(step.output, step.base);
                assert_eq!(s.buffer.len(), 0);
            }
        }
        // queried 20..=30, then not again until the buffer refills at 50
        let want: Vec<usize> = (20..=30).chain(50..=60).collect();
        assert_eq!(script.queried, want);
        assert_eq!(tr.state().unwrap().detections, 1);
    }

    #[test]
    fn correction_is_lazy() {
        // without a lost verdict the correction stream is never touched
        let cfg = config(50, 2);
        let mut sc = Scenario::new(&cfg, 0);
        let fresh = Scenario::new(&cfg, 0).correction_rng;
        let mut tr = AfatTracker::new(cfg.clone(), 20).unwrap();
        tr.init(&sc.truth[0]).unwrap();
        for t in 1..=cfg.frames {
            tr.step(&mut sc, t, &mut AlwaysSuccess).unwrap();
        }
        assert_eq!(sc.correction_rng, fresh);
    }

    #[test]
    fn oracle_improves_on_the_base_tracker() {
        let cfg = config(200, 9);
        let report = afat_run(&cfg, 20, 20, &mut IouOracle).unwrap();
        let s = report.summary().unwrap();
        assert!(s.mean_afat_iou >= s.mean_base_iou, "{s}");
        assert!(s.detections > 0);
        assert_eq!(s.frames, 4000);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = config(80, 4);
        let a = afat_run(&cfg, 20, 3, &mut IouOracle).unwrap();
        let b = afat_run(&cfg, 20, 3, &mut IouOracle).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("sequence,frame,base_iou,afat_iou,verdict\n"));
    }

    #[test]
    fn model_shape_must_match_scenario() {
        let cfg = config(40, 0);
        let mut model = QpnModel::init(crate::qpn::QpnArch::default(), 0).unwrap();
        assert!(matches!(afat_run(&cfg, 10, 1, &mut model), Err(Error::Contract(_))));
    }

    #[test]
    fn rate_arithmetic() {
        assert!((detection_rate(6632, 21455) - 0.309).abs() < 5e-4);
        assert!((detection_rate(2881, 59035) - 0.0488).abs() < 5e-5);
        assert_eq!(detection_rate(2, 10), 0.2);
        assert_eq!(detection_rate(0, 0), 0.0);
    }
}
