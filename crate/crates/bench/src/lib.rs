//! Shared fixtures for the criterion benchmarks in `benches/`.

use numod::invariant::psi_sequence;
use numod::synth::{generate, SynthConfig};
use numod::{InvariantFrame, InvariantModel, Sequence};

/// The first `frames` frames of the standard synthetic sequence, downscaled
/// to `side` x `side`, with their invariant images.
pub fn fixture(side: u32, frames: usize) -> (Sequence, Vec<InvariantFrame>) {
    let mut cfg = SynthConfig::standard_fixture(7);
    cfg.n_frames = frames.max(1);
    cfg.events.retain(|e| e.start < cfg.n_frames);
    for e in &mut cfg.events {
        e.end = e.end.min(cfg.n_frames - 1);
    }
    let (seq, _, _) = generate(&cfg).expect("standard fixture is valid");
    let seq = if side < cfg.width {
        let frames = seq
            .frames
            .iter()
            .map(|f| shrink(f, side))
            .collect::<Vec<_>>();
        Sequence::new(frames, seq.frame_ids.clone()).expect("same size frames")
    } else {
        seq
    };
    let inv = psi_sequence(&seq, &InvariantModel::default()).expect("rgb frames");
    (seq, inv)
}

fn shrink(f: &numod::Frame, side: u32) -> numod::Frame {
    let (w, h, c) = f.dims();
    let mut data = Vec::with_capacity(side as usize * side as usize * c);
    for y in 0..side {
        for x in 0..side {
            let (sx, sy) = ((x * w / side) as usize, (y * h / side) as usize);
            let at = (sy * w as usize + sx) * c;
            data.extend_from_slice(&f.data[at..at + c]);
        }
    }
    numod::Frame::new(data, side, side, c).expect("consistent buffer")
}
