//! Synthetic sequences with known foreground.
//!
//! Per frame: background, multiplicative illumination events (all channels
//! scaled alike unless the gain is tinted), opaque moving objects, Gaussian
//! noise, clamping. Ground truth covers object pixels only; shadows and
//! illumination never enter the masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NumodError, Result};
use crate::sequence::{Frame, Mask, MaskSequence, Sequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Background {
    Flat {
        color: [f64; 3],
    },
    /// Horizontal blend from `left` to `right`.
    Gradient {
        left: [f64; 3],
        right: [f64; 3],
    },
    /// Smooth random texture: `base` plus a few seeded sinusoids per channel.
    Texture {
        seed: u64,
        base: [f64; 3],
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingObject {
    pub width: u32,
    pub height: u32,
    pub color: [f64; 3],
    /// Top-left corner at `first_frame`, in pixels.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub first_frame: usize,
    /// Last visible frame (inclusive); `None` keeps the object to the end.
    pub last_frame: Option<usize>,
}

impl MovingObject {
    pub fn visible(&self, frame: usize) -> bool {
        frame >= self.first_frame && self.last_frame.is_none_or(|l| frame <= l)
    }

    /// Integer top-left corner at `frame`.
    pub fn position(&self, frame: usize) -> (i64, i64) {
        let t = frame.saturating_sub(self.first_frame) as f64;
        (
            (self.start.0 + self.velocity.0 * t).round() as i64,
            (self.start.1 + self.velocity.1 * t).round() as i64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    /// Gain ramping linearly from `from` (first frame) to `to` (last frame).
    GlobalGain { from: f64, to: f64 },
    /// Per-channel gain ramp.
    TintedGain { from: [f64; 3], to: [f64; 3] },
    /// Constant gain on the left half of the frame.
    HalfFrameGain { gain: f64 },
    /// Elliptical shadow with a soft rim, moving linearly; darkness set by
    /// the config's `shadow_darkening`.
    SoftShadow {
        center: (f64, f64),
        velocity: (f64, f64),
        radii: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlluminationEvent {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub kind: EventKind,
}

impl IlluminationEvent {
    pub fn active(&self, frame: usize) -> bool {
        (self.start..=self.end).contains(&frame)
    }

    fn progress(&self, frame: usize) -> f64 {
        if self.end == self.start {
            0.0
        } else {
            (frame - self.start) as f64 / (self.end - self.start) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub n_frames: usize,
    pub background: Background,
    pub objects: Vec<MovingObject>,
    pub events: Vec<IlluminationEvent>,
    /// Multiplier at a shadow's core, in `(0, 1)`.
    pub shadow_darkening: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 64x64, 100 frames: one moving 8x8 object, a global gain ramp
    /// 0.6 -> 1.4 over frames 30..=70, one moving soft shadow, noise 0.01.
    pub fn standard_fixture(seed: u64) -> Self {
        Self {
            width: 64,
            height: 64,
            n_frames: 100,
            background: Background::Texture {
                seed,
                base: [0.42, 0.45, 0.38],
                amplitude: 0.12,
            },
            objects: vec![MovingObject {
                width: 8,
                height: 8,
                color: [0.85, 0.15, 0.2],
                start: (2.0, 6.0),
                velocity: (0.54, 0.45),
                first_frame: 0,
                last_frame: None,
            }],
            events: vec![
                IlluminationEvent {
                    start: 30,
                    end: 70,
                    kind: EventKind::GlobalGain { from: 0.6, to: 1.4 },
                },
                IlluminationEvent {
                    start: 0,
                    end: 99,
                    kind: EventKind::SoftShadow {
                        center: (12.0, 52.0),
                        velocity: (0.42, -0.3),
                        radii: (9.0, 6.0),
                    },
                },
            ],
            shadow_darkening: 0.7,
            noise_std: 0.01,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NumodError::InvalidConfig(m));
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return bad("synthetic sequence needs positive size and frame count".into());
        }
        if !(self.shadow_darkening > 0.0 && self.shadow_darkening < 1.0) {
            return bad(format!(
                "shadow darkening {} outside (0, 1)",
                self.shadow_darkening
            ));
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise std must be >= 0".into());
        }
        let colors_ok = |c: &[f64; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        match &self.background {
            Background::Flat { color } if !colors_ok(color) => {
                return bad("background color outside [0, 1]".into())
            }
            Background::Gradient { left, right } if !colors_ok(left) || !colors_ok(right) => {
                return bad("background color outside [0, 1]".into())
            }
            Background::Texture { amplitude, .. } if !(*amplitude >= 0.0) => {
                return bad("texture amplitude must be >= 0".into())
            }
            _ => {}
        }
        for (k, o) in self.objects.iter().enumerate() {
            if o.width == 0 || o.height == 0 || !colors_ok(&o.color) {
                return bad(format!("object {k}: empty size or color outside [0, 1]"));
            }
            for f in (0..self.n_frames).filter(|&f| o.visible(f)) {
                let (x, y) = o.position(f);
                if x < 0
                    || y < 0
                    || x + o.width as i64 > self.width as i64
                    || y + o.height as i64 > self.height as i64
                {
                    return bad(format!("object {k} leaves the frame at frame {f}"));
                }
            }
        }
        for (k, e) in self.events.iter().enumerate() {
            if e.end < e.start {
                return bad(format!("event {k}: end before start"));
            }
            let gains_ok = match &e.kind {
                EventKind::GlobalGain { from, to } => *from >= 0.0 && *to >= 0.0,
                EventKind::TintedGain { from, to } => from.iter().chain(to).all(|g| *g >= 0.0),
                EventKind::HalfFrameGain { gain } => *gain >= 0.0,
                EventKind::SoftShadow { radii, .. } => radii.0 > 0.0 && radii.1 > 0.0,
            };
            if !gains_ok {
                return bad(format!("event {k}: negative gain or non-positive radius"));
            }
        }
        Ok(())
    }
}

/// What happened to each frame, for reporting and for tests that need to
/// single out illumination-event frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<IlluminationEvent>,
    /// Indices of frames touched by a gain event (shadows excluded).
    pub gain_frames: Vec<usize>,
    /// Indices of frames touched by any event.
    pub event_frames: Vec<usize>,
    /// Mean multiplicative illumination over each frame (1.0 = unaffected).
    pub mean_illumination: Vec<f64>,
}

fn render_background(cfg: &SynthConfig) -> Vec<f64> {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut out = vec![0.0; w * h * 3];
    match &cfg.background {
        Background::Flat { color } => {
            for px in out.chunks_exact_mut(3) {
                px.copy_from_slice(color);
            }
        }
        Background::Gradient { left, right } => {
            for y in 0..h {
                for x in 0..w {
                    let a = if w > 1 {
                        x as f64 / (w - 1) as f64
                    } else {
                        0.0
                    };
                    for c in 0..3 {
                        out[(y * w + x) * 3 + c] = left[c] * (1.0 - a) + right[c] * a;
                    }
                }
            }
        }
        Background::Texture {
            seed,
            base,
            amplitude,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let waves: Vec<[f64; 4]> = (0..3 * 4)
                .map(|_| {
                    [
                        rng.random_range(-0.35..0.35),
                        rng.random_range(-0.35..0.35),
                        rng.random_range(0.0..std::f64::consts::TAU),
                        rng.random_range(0.3..1.0),
                    ]
                })
                .collect();
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        let v: f64 = waves[c * 4..c * 4 + 4]
                            .iter()
                            .map(|[fx, fy, ph, a]| a * (fx * x as f64 + fy * y as f64 + ph).sin())
                            .sum::<f64>()
                            / 4.0;
                        out[(y * w + x) * 3 + c] = (base[c] + amplitude * v).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    out
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Illumination multiplier for pixel `(x, y)` and channel `c` at `frame`.
fn illumination(cfg: &SynthConfig, frame: usize, x: usize, y: usize, c: usize) -> f64 {
    let mut g = 1.0;
    for e in cfg.events.iter().filter(|e| e.active(frame)) {
        let a = e.progress(frame);
        g *= match &e.kind {
            EventKind::GlobalGain { from, to } => from + (to - from) * a,
            EventKind::TintedGain { from, to } => from[c] + (to[c] - from[c]) * a,
            EventKind::HalfFrameGain { gain } => {
                if (x as u32) < cfg.width / 2 {
                    *gain
                } else {
                    1.0
                }
            }
            EventKind::SoftShadow {
                center,
                velocity,
                radii,
            } => {
                let t = (frame - e.start) as f64;
                let cx = center.0 + velocity.0 * t;
                let cy = center.1 + velocity.1 * t;
                let r = (((x as f64 + 0.5 - cx) / radii.0).powi(2)
                    + ((y as f64 + 0.5 - cy) / radii.1).powi(2))
                .sqrt();
                let core = 1.0 - smoothstep(0.5, 1.0, r);
                1.0 - (1.0 - cfg.shadow_darkening) * core
            }
        };
    }
    g
}

/// Renders the sequence, its ground-truth masks and the event log.
pub fn generate(cfg: &SynthConfig) -> Result<(Sequence, MaskSequence, EventLog)> {
    cfg.validate()?;
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let background = render_background(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_eed0_f5e9);
    let noise = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("std >= 0"));

    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut masks = Vec::with_capacity(cfg.n_frames);
    let mut mean_illumination = Vec::with_capacity(cfg.n_frames);
    for f in 0..cfg.n_frames {
        let mut data = background.clone();
        let mut illum_sum = 0.0;
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let g = illumination(cfg, f, x, y, c);
                    illum_sum += g;
                    data[(y * w + x) * 3 + c] *= g;
                }
            }
        }
        mean_illumination.push(illum_sum / (w * h * 3) as f64);

        let mut mask = Mask::zeros(cfg.width, cfg.height);
        for o in cfg.objects.iter().filter(|o| o.visible(f)) {
            let (x0, y0) = o.position(f);
            for y in y0 as usize..y0 as usize + o.height as usize {
                for x in x0 as usize..x0 as usize + o.width as usize {
                    data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&o.color);
                    mask.data[y * w + x] = 1;
                }
            }
        }
        if let Some(n) = &noise {
            for v in &mut data {
                *v += n.sample(&mut rng);
            }
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        frames.push(Frame::new(data, cfg.width, cfg.height, 3)?);
        masks.push(mask);
    }

    let is_gain = |e: &IlluminationEvent| !matches!(e.kind, EventKind::SoftShadow { .. });
    let gain_frames = (0..cfg.n_frames)
        .filter(|&f| cfg.events.iter().any(|e| is_gain(e) && e.active(f)))
        .collect();
    let event_frames = (0..cfg.n_frames)
        .filter(|&f| cfg.events.iter().any(|e| e.active(f)))
        .collect();
    let sequence = Sequence::from_frames(frames)?;
    let masks = MaskSequence::new(masks, sequence.frame_ids.clone());
    Ok((
        sequence,
        masks,
        EventLog {
            events: cfg.events.clone(),
            gain_frames,
            event_frames,
            mean_illumination,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(n: usize) -> SynthConfig {
        SynthConfig {
            width: 16,
            height: 12,
            n_frames: n,
            background: Background::Gradient {
                left: [0.2, 0.3, 0.4],
                right: [0.5, 0.4, 0.3],
            },
            objects: vec![],
            events: vec![],
            shadow_darkening: 0.5,
            noise_std: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn static_scene_is_constant() {
        let (seq, masks, _) = generate(&plain(5)).unwrap();
        for f in &seq.frames {
            assert_eq!(f.data, seq.frames[0].data);
        }
        assert!(masks.masks.iter().all(|m| m.count_ones() == 0));
    }

    #[test]
    fn object_mask_has_exact_area() {
        let mut cfg = plain(12);
        cfg.objects.push(MovingObject {
            width: 8,
            height: 8,
            color: [1.0, 0.0, 0.0],
            start: (1.0, 1.0),
            velocity: (0.3, 0.2),
            first_frame: 10,
            last_frame: Some(10),
        });
        let (_, masks, _) = generate(&cfg).unwrap();
        assert_eq!(masks.masks[10].count_ones(), 64);
        assert_eq!(masks.masks[9].count_ones(), 0);
        assert_eq!(masks.masks[11].count_ones(), 0);
    }

    #[test]
    fn global_gain_scales_frames() {
        let base = plain(4);
        let mut lit = base.clone();
        lit.events.push(IlluminationEvent {
            start: 2,
            end: 3,
            kind: EventKind::GlobalGain { from: 1.5, to: 1.5 },
        });
        let (a, _, _) = generate(&base).unwrap();
        let (b, _, log) = generate(&lit).unwrap();
        assert_eq!(log.gain_frames, vec![2, 3]);
        for (x, y) in a.frames[2].data.iter().zip(&b.frames[2].data) {
            assert!((1.5 * x - y).abs() < 1e-12);
        }
        assert_eq!(a.frames[1], b.frames[1]);
    }

    #[test]
    fn masks_ignore_illumination() {
        let mut cfg = plain(6);
        cfg.objects.push(MovingObject {
            width: 3,
            height: 2,
            color: [0.9, 0.9, 0.1],
            start: (0.0, 0.0),
            velocity: (1.0, 1.0),
            first_frame: 0,
            last_frame: None,
        });
        let (_, a, _) = generate(&cfg).unwrap();
        cfg.events.push(IlluminationEvent {
            start: 0,
            end: 5,
            kind: EventKind::SoftShadow {
                center: (4.0, 4.0),
                velocity: (1.0, 0.0),
                radii: (5.0, 3.0),
            },
        });
        cfg.events.push(IlluminationEvent {
            start: 1,
            end: 4,
            kind: EventKind::HalfFrameGain { gain: 0.3 },
        });
        let (_, b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_with_noise() {
        let cfg = SynthConfig::standard_fixture(3);
        let small = SynthConfig { n_frames: 5, ..cfg };
        let (a, _, _) = generate(&small).unwrap();
        let (b, _, _) = generate(&small).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_escaping_object() {
        let mut cfg = plain(30);
        cfg.objects.push(MovingObject {
            width: 4,
            height: 4,
            color: [0.5; 3],
            start: (0.0, 0.0),
            velocity: (1.0, 0.0),
            first_frame: 0,
            last_frame: None,
        });
        assert!(generate(&cfg).is_err());
        cfg.shadow_darkening = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn standard_fixture_is_valid() {
        assert!(SynthConfig::standard_fixture(0).validate().is_ok());
    }
}
