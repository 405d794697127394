//! Response maps, the peak-to-corner circular shift, and the sliding K-frame buffer.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const DEFAULT_CHANNELS: usize = 5;
pub const DEFAULT_EXTENT: usize = 25;
pub const DEFAULT_WINDOW: usize = 20;

/// One frame's `C x N x N` grid of matching scores, channel-major.
///
/// Scores are stored as `f32`, the same precision as dataset files, so a map
/// read back from disk is identical to the one the simulator produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    channels: usize,
    extent: usize,
    scores: Vec<f32>,
}

impl ResponseMap {
    pub fn new(channels: usize, extent: usize, scores: Vec<f32>) -> Result<Self> {
        if channels == 0 || extent == 0 {
            return Err(Error::shape("response maps need C >= 1 and N >= 1"));
        }
        if scores.len() != channels * extent * extent {
            return Err(Error::shape(format!(
                "response map {channels}x{extent}x{extent} needs {} scores, got {}",
                channels * extent * extent,
                scores.len()
            )));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite response score at index {pos}")));
        }
        Ok(ResponseMap {
            channels,
            extent,
            scores,
        })
    }

    pub fn zeros(channels: usize, extent: usize) -> Self {
        ResponseMap::new(channels, extent, vec![0.0; channels * extent * extent])
            .expect("positive extents")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.scores[(channel * self.extent + row) * self.extent + col]
    }

    /// `(channel, row, col)` of the global maximum; the lowest linear index wins ties.
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0;
        for (i, &v) in self.scores.iter().enumerate() {
            if v > self.scores[best] {
                best = i;
            }
        }
        let plane = self.extent * self.extent;
        (best / plane, (best % plane) / self.extent, best % self.extent)
    }

    /// Peak value over the mean absolute score; large for a clean single peak.
    pub fn peak_to_clutter(&self) -> f64 {
        let (c, r, s) = self.argmax();
        let peak = f64::from(self.get(c, r, s));
        let mean = self.scores.iter().map(|v| f64::from(v.abs())).sum::<f64>() / self.scores.len() as f64;
        if mean == 0.0 {
            0.0
        } else {
            peak / mean
        }
    }

    /// Cyclically shifts every channel by the same `(-r*, -s*)`, where
    /// `(r*, s*)` is the spatial position of the cross-channel maximum, so the
    /// peak lands at `(0, 0)` and its neighbourhood wraps onto the corners.
    pub fn circular_shift_to_corners(&self) -> ResponseMap {
        let (_, pr, pc) = self.argmax();
        let n = self.extent;
        let mut out = vec![0.0f32; self.scores.len()];
        for ch in 0..self.channels {
            let src = &self.scores[ch * n * n..(ch + 1) * n * n];
            let dst = &mut out[ch * n * n..(ch + 1) * n * n];
            for r in 0..n {
                let sr = (r + pr) % n;
                for c in 0..n {
                    dst[r * n + c] = src[sr * n + (c + pc) % n];
                }
            }
        }
        ResponseMap {
            channels: self.channels,
            extent: n,
            scores: out,
        }
    }
}

/// FIFO of the most recent `K` response maps.
#[derive(Debug, Clone)]
pub struct ResponseBuffer {
    capacity: usize,
    channels: usize,
    extent: usize,
    maps: VecDeque<ResponseMap>,
}

impl ResponseBuffer {
    pub fn new(capacity: usize, channels: usize, extent: usize) -> Result<Self> {
        if capacity == 0 || channels == 0 || extent == 0 {
            return Err(Error::config("buffer capacity and map shape must be positive"));
        }
        Ok(ResponseBuffer {
            capacity,
            channels,
            extent,
            maps: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.maps.len() == self.capacity
    }

    /// Appends `map`, evicting the oldest entry once `K` are held.
    pub fn push(&mut self, map: ResponseMap) -> Result<()> {
        if map.channels != self.channels || map.extent != self.extent {
            return Err(Error::shape(format!(
                "buffer holds {}x{n}x{n} maps, got {}x{m}x{m}",
                self.channels,
                map.channels,
                n = self.extent,
                m = map.extent
            )));
        }
        if self.maps.len() == self.capacity {
            self.maps.pop_front();
        }
        self.maps.push_back(map);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.maps.clear();
    }

    /// All `K` maps oldest first, or `None` while warming up.
    pub fn window(&self) -> Option<Vec<&ResponseMap>> {
        self.is_full().then(|| self.maps.iter().collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResponseMap> {
        self.maps.iter()
    }
}
