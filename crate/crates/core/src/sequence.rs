//! In-memory frame, sequence and ground-truth containers.
//!
//! Pixel data is stored row-major with interleaved channels
//! (`(y * width + x) * channels + c`), values in `[0, 1]`.

use crate::error::{NumodError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub data: Vec<f64>,
    pub width: u32,
    pub height: u32,
    pub channels: usize,
}

impl Frame {
    /// Builds a frame, validating length and value range.
    pub fn new(data: Vec<f64>, width: u32, height: u32, channels: usize) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(NumodError::DimensionMismatch(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels;
        if data.len() != expected {
            return Err(NumodError::DimensionMismatch(format!(
                "frame data has {} elements, {width}x{height}x{channels} needs {expected}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NumodError::DimensionMismatch(format!(
                "frame value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            data,
            width,
            height,
            channels,
        })
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (u32, u32, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn is_rgb(&self) -> bool {
        self.channels == 3
    }

    /// Luminance (0.299 R + 0.587 G + 0.114 B); grayscale frames are returned as is.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    pub frame_ids: Vec<String>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>, frame_ids: Vec<String>) -> Result<Self> {
        if frames.len() != frame_ids.len() {
            return Err(NumodError::DimensionMismatch(format!(
                "{} frames but {} frame ids",
                frames.len(),
                frame_ids.len()
            )));
        }
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames
                .iter()
                .enumerate()
                .find(|(_, f)| f.dims() != first.dims())
            {
                return Err(NumodError::DimensionMismatch(format!(
                    "frame {} ({}) has dims {:?}, expected {:?}",
                    i,
                    frame_ids[i],
                    f.dims(),
                    first.dims()
                )));
            }
        }
        Ok(Self { frames, frame_ids })
    }

    /// Sequence with ids `000000`, `000001`, ...
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self> {
        let ids = (0..frames.len()).map(|i| format!("{i:06}")).collect();
        Self::new(frames, ids)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<(u32, u32, usize)> {
        self.frames.first().map(Frame::dims)
    }

    /// Frames `range` as a new sequence.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Sequence {
        Sequence {
            frames: self.frames[range.clone()].to_vec(),
            frame_ids: self.frame_ids[range].to_vec(),
        }
    }
}

/// Binary spatial map, `width * height` values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub data: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

impl Mask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            data: vec![0; width as usize * height as usize],
            width,
            height,
        }
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Self {
            data: vec![1; width as usize * height as usize],
            width,
            height,
        }
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    pub masks: Vec<Mask>,
    pub frame_ids: Vec<String>,
    /// Per-frame evaluation region; `None` evaluates every pixel.
    pub roi: Vec<Option<Mask>>,
}

impl MaskSequence {
    pub fn new(masks: Vec<Mask>, frame_ids: Vec<String>) -> Self {
        let roi = vec![None; masks.len()];
        Self {
            masks,
            frame_ids,
            roi,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}
