//! Boxes and IOU, the success/lost/unassigned label rule, window extraction,
//! and the binary dataset format.
//!
//! Dataset file layout (little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `"QPND"` | 4 bytes |
//! | version (1) | u32 |
//! | sample count | u64 |
//! | K, C, N | u16 each |
//! | sequences, total frames, success, lost, unassigned frame counts | u64 each |
//! | per sample: label (0 success, 1 lost), then `K*C*N*N` scores | u8, f32 |

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::response::ResponseMap;

/// Axis-aligned box given by its center and extents (arena pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        debug_assert!(w >= 0.0 && h >= 0.0, "negative box extent");
        BBox { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn with_center(&self, cx: f64, cy: f64) -> BBox {
        BBox { cx, cy, ..*self }
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let overlap = |ca: f64, ea: f64, cb: f64, eb: f64| {
        let lo = (ca - ea / 2.0).max(cb - eb / 2.0);
        let hi = (ca + ea / 2.0).min(cb + eb / 2.0);
        (hi - lo).max(0.0)
    };
    // areas from the same corner arithmetic, so identical boxes give exactly 1
    let span = |c: f64, e: f64| (c + e / 2.0) - (c - e / 2.0);
    let inter = overlap(a.cx, a.w, b.cx, b.w) * overlap(a.cy, a.h, b.cy, b.h);
    let union = span(a.cx, a.w) * span(a.cy, a.h) + span(b.cx, b.w) * span(b.cy, b.h) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Per-frame tracking quality verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QualityLabel {
    Success,
    Lost,
    Unassigned,
}

impl QualityLabel {
    /// Network output class: success 0, lost 1.
    pub fn class_index(self) -> Option<usize> {
        match self {
            QualityLabel::Success => Some(0),
            QualityLabel::Lost => Some(1),
            QualityLabel::Unassigned => None,
        }
    }

    pub fn from_class(index: usize) -> Option<Self> {
        match index {
            0 => Some(QualityLabel::Success),
            1 => Some(QualityLabel::Lost),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Success => "success",
            QualityLabel::Lost => "lost",
            QualityLabel::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const SUCCESS_IOU: f64 = 0.5;
pub const LOST_IOU: f64 = 0.1;

/// Success iff IOU > 0.5, lost iff IOU < 0.1, unassigned otherwise.
pub fn assign_label(iou_value: f64) -> Result<QualityLabel> {
    if !(0.0..=1.0).contains(&iou_value) {
        return Err(Error::contract(format!("IOU {iou_value} outside [0, 1]")));
    }
    Ok(if iou_value > SUCCESS_IOU {
        QualityLabel::Success
    } else if iou_value < LOST_IOU {
        QualityLabel::Lost
    } else {
        QualityLabel::Unassigned
    })
}

/// `K` consecutive response maps and the label of the last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub maps: Vec<ResponseMap>,
    pub label: QualityLabel,
}

/// 0-based indices of the frames that close a stored window: every frame from
/// the `K`-th on whose label is assigned.
pub fn window_ends(labels: &[QualityLabel], window: usize) -> impl Iterator<Item = usize> + '_ {
    let start = window.max(1) - 1;
    (start..labels.len()).filter(|&t| labels[t] != QualityLabel::Unassigned)
}

/// One sample per frame `t >= K` (1-based) whose label is assigned.
pub fn make_windows(maps: &[ResponseMap], labels: &[QualityLabel], window: usize) -> Result<Vec<WindowSample>> {
    if maps.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} maps but {} labels",
            maps.len(),
            labels.len()
        )));
    }
    Ok(window_ends(labels, window)
        .map(|t| WindowSample {
            maps: maps[t + 1 - window..=t].to_vec(),
            label: labels[t],
        })
        .collect())
}

/// Frame bookkeeping in the style of a data-generation table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub sequences: u64,
    pub frames: u64,
    pub success: u64,
    pub lost: u64,
    pub unassigned: u64,
}

impl DatasetStats {
    pub fn from_labels(sequences: u64, labels: impl IntoIterator<Item = QualityLabel>) -> Self {
        let mut stats = DatasetStats {
            sequences,
            ..Default::default()
        };
        for label in labels {
            stats.count(label);
        }
        stats
    }

    pub fn count(&mut self, label: QualityLabel) {
        self.frames += 1;
        match label {
            QualityLabel::Success => self.success += 1,
            QualityLabel::Lost => self.lost += 1,
            QualityLabel::Unassigned => self.unassigned += 1,
        }
    }

    pub fn merge(&mut self, other: &DatasetStats) {
        self.sequences += other.sequences;
        self.frames += other.frames;
        self.success += other.success;
        self.lost += other.lost;
        self.unassigned += other.unassigned;
    }

    pub fn is_consistent(&self) -> bool {
        self.success + self.lost + self.unassigned == self.frames
    }

    pub fn lost_fraction(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.lost as f64 / self.frames as f64
        }
    }

    /// `label,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "count"])?;
        for (label, count) in [
            ("success", self.success),
            ("lost", self.lost),
            ("unassigned", self.unassigned),
        ] {
            w.write_record([label, &count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sequences {} | total frames {} | success {} | lost {} | unassigned {}",
            self.sequences, self.frames, self.success, self.lost, self.unassigned
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StoredWindow {
    first_frame: usize,
    label: QualityLabel,
}

/// Window samples backed by one shared frame store.
///
/// Windows cut from the same sequence reference overlapping frame ranges
/// instead of copying `K` maps each.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    window: usize,
    channels: usize,
    extent: usize,
    frames: Vec<f32>,
    samples: Vec<StoredWindow>,
    stats: DatasetStats,
}

impl WindowSet {
    pub fn new(window: usize, channels: usize, extent: usize) -> Result<Self> {
        if window == 0 || channels == 0 || extent == 0 {
            return Err(Error::config("window length and map shape must be positive"));
        }
        for (name, v) in [("K", window), ("C", channels), ("N", extent)] {
            if v > u16::MAX as usize {
                return Err(Error::config(format!("{name} = {v} exceeds the u16 file field")));
            }
        }
        Ok(WindowSet {
            window,
            channels,
            extent,
            frames: Vec::new(),
            samples: Vec::new(),
            stats: DatasetStats::default(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.extent * self.extent
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len() / self.frame_len()
    }

    pub fn label(&self, sample: usize) -> QualityLabel {
        self.samples[sample].label
    }

    pub fn labels(&self) -> impl Iterator<Item = QualityLabel> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Stored frame indices covered by a sample, oldest first.
    pub fn frame_range(&self, sample: usize) -> Range<usize> {
        let first = self.samples[sample].first_frame;
        first..first + self.window
    }

    pub fn frame_scores(&self, frame: usize) -> &[f32] {
        let n = self.frame_len();
        &self.frames[frame * n..(frame + 1) * n]
    }

    fn check_map(&self, map: &ResponseMap) -> Result<()> {
        if map.channels() != self.channels || map.extent() != self.extent {
            return Err(Error::shape(format!(
                "set holds {}x{n}x{n} maps, got {}x{m}x{m}",
                self.channels,
                map.channels(),
                n = self.extent,
                m = map.extent()
            )));
        }
        Ok(())
    }

    /// Adds one sequence's frames and every window [`make_windows`] would cut
    /// from it; returns the number of windows added.
    pub fn push_sequence(&mut self, maps: &[ResponseMap], labels: &[QualityLabel]) -> Result<usize> {
        if maps.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} maps but {} labels",
                maps.len(),
                labels.len()
            )));
        }
        for map in maps {
            self.check_map(map)?;
        }
        let base = self.frame_count();
        for map in maps {
            self.frames.extend_from_slice(map.scores());
        }
        let before = self.samples.len();
        for t in window_ends(labels, self.window) {
            self.samples.push(StoredWindow {
                first_frame: base + t + 1 - self.window,
                label: labels[t],
            });
        }
        self.stats.merge(&DatasetStats::from_labels(1, labels.iter().copied()));
        Ok(self.samples.len() - before)
    }

    /// Adds a standalone sample (its frames are copied, not shared).
    pub fn push_sample(&mut self, sample: &WindowSample) -> Result<()> {
        if sample.label.class_index().is_none() {
            return Err(Error::contract("unassigned windows are never stored"));
        }
        if sample.maps.len() != self.window {
            return Err(Error::shape(format!(
                "sample has {} maps, set window is {}",
                sample.maps.len(),
                self.window
            )));
        }
        for map in &sample.maps {
            self.check_map(map)?;
        }
        let first_frame = self.frame_count();
        for map in &sample.maps {
            self.frames.extend_from_slice(map.scores());
        }
        self.samples.push(StoredWindow {
            first_frame,
            label: sample.label,
        });
        Ok(())
    }

    /// Largest `m < K` such that the first `m` frames of `window` (a full
    /// window of scores) equal, bit for bit, the last `m` stored frames.
    fn tail_overlap(&self, window: &[f32]) -> usize {
        let fl = self.frame_len();
        let stored = self.frame_count();
        let same = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        (1..self.window.min(stored + 1))
            .rev()
            .find(|&m| same(&window[..m * fl], &self.frames[(stored - m) * fl..]))
            .unwrap_or(0)
    }

    pub fn set_stats(&mut self, stats: DatasetStats) {
        self.stats = stats;
    }

    pub fn sample(&self, index: usize) -> WindowSample {
        let maps = self
            .frame_range(index)
            .map(|f| {
                ResponseMap::new(self.channels, self.extent, self.frame_scores(f).to_vec())
                    .expect("stored frames are valid")
            })
            .collect();
        WindowSample {
            maps,
            label: self.samples[index].label,
        }
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let lost = self.labels().filter(|&l| l == QualityLabel::Lost).count();
        (self.len() - lost, lost)
    }

    /// A new set holding the samples at `indices` (frames copied per sample).
    pub fn subset(&self, indices: &[usize]) -> Result<WindowSet> {
        let mut out = WindowSet::new(self.window, self.channels, self.extent)?;
        for &i in indices {
            out.push_sample(&self.sample(i))?;
        }
        out.stats = DatasetStats::from_labels(0, out.labels().collect::<Vec<_>>());
        Ok(out)
    }
}

const MAGIC: &[u8; 4] = b"QPND";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 3 * 2 + 5 * 8;

pub fn dataset_write(path: &Path, set: &WindowSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: &mut W, set: &WindowSet) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    for v in [set.window, set.channels, set.extent] {
        w.write_all(&(v as u16).to_le_bytes())?;
    }
    let s = set.stats;
    for v in [s.sequences, s.frames, s.success, s.lost, s.unassigned] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(set.window * set.frame_len() * 4 + 1);
    for i in 0..set.len() {
        buf.clear();
        buf.push(set.label(i).class_index().expect("stored labels are assigned") as u8);
        for f in set.frame_range(i) {
            for v in set.frame_scores(f) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn dataset_read(path: &Path) -> Result<WindowSet> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    read_dataset(&mut BufReader::new(file), Some(len))
}

/// Reader wrapper that tracks the byte offset for error reports.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(Error::format(self.offset, format!("truncated while reading {what}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0; 2];
        self.exact(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0; 4];
        self.exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0; 8];
        self.exact(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }
}

/// Parses a dataset stream. `total_len`, when known, lets truncation be
/// reported before any sample is read.
pub fn read_dataset<R: Read>(r: &mut R, total_len: Option<u64>) -> Result<WindowSet> {
    let mut cur = Cursor { inner: r, offset: 0 };
    let mut magic = [0u8; 4];
    cur.exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"QPND\"")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported dataset version {version}")));
    }
    let count = cur.u64("sample count")?;
    let dims_at = cur.offset;
    let window = cur.u16("K")? as usize;
    let channels = cur.u16("C")? as usize;
    let extent = cur.u16("N")? as usize;
    if window == 0 || channels == 0 || extent == 0 {
        return Err(Error::format(dims_at, "zero K, C or N"));
    }
    let stats_at = cur.offset;
    let stats = DatasetStats {
        sequences: cur.u64("stats")?,
        frames: cur.u64("stats")?,
        success: cur.u64("stats")?,
        lost: cur.u64("stats")?,
        unassigned: cur.u64("stats")?,
    };
    if !stats.is_consistent() {
        return Err(Error::format(stats_at, format!("label counts do not sum to frames: {stats}")));
    }

    let mut set = WindowSet::new(window, channels, extent)?;
    let sample_bytes = 1 + (window * set.frame_len() * 4) as u64;
    if let Some(total) = total_len {
        let want = HEADER_LEN + count * sample_bytes;
        if total < want {
            let complete = (total.saturating_sub(HEADER_LEN)) / sample_bytes;
            return Err(Error::format(
                HEADER_LEN + complete * sample_bytes,
                format!("truncated: header declares {count} samples, file holds {complete}"),
            ));
        }
        if total > want {
            return Err(Error::format(want, "trailing bytes after last sample"));
        }
    }

    let values = window * set.frame_len();
    let mut raw = vec![0u8; values * 4];
    let mut scores = Vec::with_capacity(values);
    for _ in 0..count {
        let mut label = [0u8; 1];
        let label_at = cur.offset;
        cur.exact(&mut label, "sample label")?;
        let label = QualityLabel::from_class(label[0] as usize)
            .ok_or_else(|| Error::format(label_at, format!("invalid label byte {}", label[0])))?;
        let data_at = cur.offset;
        cur.exact(&mut raw, "sample scores")?;
        scores.clear();
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::format(data_at + 4 * i as u64, "non-finite score"));
            }
            scores.push(v);
        }
        // Windows of one sequence overlap; store the shared frames once.
        let overlap = set.tail_overlap(&scores);
        let first_frame = set.frame_count() - overlap;
        set.frames.extend_from_slice(&scores[overlap * set.frame_len()..]);
        set.samples.push(StoredWindow { first_frame, label });
    }

    let (success, lost) = set.label_counts();
    if success as u64 > stats.success || lost as u64 > stats.lost {
        return Err(Error::format(
            stats_at,
            format!("samples ({success} success, {lost} lost) exceed header frame counts: {stats}"),
        ));
    }
    set.stats = stats;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_fixtures() {
        let a = BBox::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let far = BBox::new(50.0, 50.0, 10.0, 10.0);
        assert_eq!(iou(&a, &far), 0.0);
        let shifted = BBox::new(10.0, 10.0, 10.0, 10.0);
        assert!((iou(&a, &shifted) - 1.0 / 7.0).abs() < 1e-12);
        let empty = BBox::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(iou(&empty, &empty), 0.0);
    }

    #[test]
    fn label_rule_with_strict_boundaries() {
        assert_eq!(assign_label(0.6).unwrap(), QualityLabel::Success);
        assert_eq!(assign_label(0.05).unwrap(), QualityLabel::Lost);
        assert_eq!(assign_label(0.5).unwrap(), QualityLabel::Unassigned);
        assert_eq!(assign_label(0.1).unwrap(), QualityLabel::Unassigned);
        assert!(assign_label(1.2).is_err());
        assert!(assign_label(-0.1).is_err());
        assert!(assign_label(f64::NAN).is_err());
    }

    fn maps(n: usize) -> Vec<ResponseMap> {
        (0..n)
            .map(|t| ResponseMap::new(1, 1, vec![t as f32]).unwrap())
            .collect()
    }

    #[test]
    fn window_counts() {
        use QualityLabel::*;
        let mut labels = vec![Success; 20];
        assert_eq!(make_windows(&maps(20), &labels, 20).unwrap().len(), 1);

        labels = vec![Success; 19];
        labels.extend([Success, Success, Lost, Unassigned, Success, Lost]);
        let windows = make_windows(&maps(25), &labels, 20).unwrap();
        assert_eq!(windows.len(), 5);
        assert_eq!(windows[2].label, Lost);
        // the third kept window ends at frame 22 (1-based)
        assert_eq!(windows[2].maps.last().unwrap().get(0, 0, 0), 21.0);
        assert_eq!(windows[2].maps[0].get(0, 0, 0), 2.0);

        assert!(make_windows(&maps(19), &vec![Success; 19], 20).unwrap().is_empty());
    }

    #[test]
    fn window_set_matches_make_windows() {
        use QualityLabel::*;
        let labels: Vec<_> = (0..30)
            .map(|t| match t % 7 {
                0 => Lost,
                3 => Unassigned,
                _ => Success,
            })
            .collect();
        let m = maps(30);
        let mut set = WindowSet::new(20, 1, 1).unwrap();
        let added = set.push_sequence(&m, &labels).unwrap();
        let direct = make_windows(&m, &labels, 20).unwrap();
        assert_eq!(added, direct.len());
        for (i, w) in direct.iter().enumerate() {
            assert_eq!(&set.sample(i), w);
        }
        assert_eq!(set.stats().frames, 30);
        assert!(set.stats().is_consistent());
    }

    #[test]
    fn table_style_stats() {
        let mut stats = DatasetStats {
            sequences: 50000,
            ..Default::default()
        };
        let labels = std::iter::repeat_n(QualityLabel::Success, 937_881)
            .chain(std::iter::repeat_n(QualityLabel::Lost, 14_494))
            .chain(std::iter::repeat_n(QualityLabel::Unassigned, 47_625));
        for l in labels {
            stats.count(l);
        }
        assert_eq!((stats.success, stats.lost, stats.unassigned), (937_881, 14_494, 47_625));
        assert_eq!(stats.frames, 1_000_000);
        let mut csv = Vec::new();
        stats.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "label,count\nsuccess,937881\nlost,14494\nunassigned,47625\n"
        );
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut set = WindowSet::new(2, 1, 2).unwrap();
        let m: Vec<_> = (0..3)
            .map(|t| ResponseMap::new(1, 2, vec![t as f32; 4]).unwrap())
            .collect();
        set.push_sequence(&m, &[QualityLabel::Success; 3]).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &set).unwrap();
        let back = read_dataset(&mut bytes.as_slice(), Some(bytes.len() as u64)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.sample(1), set.sample(1));

        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(matches!(
            read_dataset(&mut corrupt.as_slice(), None),
            Err(Error::Format { offset: 0, .. })
        ));

        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            read_dataset(&mut &cut[..], Some(cut.len() as u64)),
            Err(Error::Format { .. })
        ));
        assert!(matches!(read_dataset(&mut &cut[..], None), Err(Error::Format { .. })));

        let mut bad_label = bytes.clone();
        bad_label[HEADER_LEN as usize] = 7;
        assert!(matches!(
            read_dataset(&mut bad_label.as_slice(), None),
            Err(Error::Format { offset, .. }) if offset == HEADER_LEN
        ));
    }

    #[test]
    fn reading_shares_overlapping_frames() {
        let cfg = crate::simworld::ScenarioConfig {
            frames: 40,
            challenge_rate: 0.02,
            seed: 3,
            ..Default::default()
        };
        let set = crate::simworld::generate_dataset(&cfg, 3, 20).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &set).unwrap();
        let back = read_dataset(&mut bytes.as_slice(), Some(bytes.len() as u64)).unwrap();
        assert_eq!(back.len(), set.len());
        for i in 0..set.len() {
            assert_eq!(back.sample(i), set.sample(i));
        }
        assert_eq!(back.stats(), set.stats());
        assert!(back.frame_count() <= set.frame_count());
        assert!(back.frame_count() < set.len() * 20);

        let mut again = Vec::new();
        write_dataset(&mut again, &back).unwrap();
        assert_eq!(again, bytes);
    }
}
