//! Seeded stand-in for recorded speech.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const AR_POLE: f64 = 0.9;
const BACKGROUND_LEVEL: f64 = 0.2;

/// Nonstationary speech-like sequence: Hann-windowed tone bursts of random
/// length, pitch and loudness separated by pauses, riding on a low-level
/// unit-variance AR(1) background.
pub fn synthetic_speech(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation_std = (1.0 - AR_POLE * AR_POLE).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut ar = 0.0;
    let mut burst_left = 0usize;
    let mut burst_len = 0usize;
    let mut pause_left = rng.gen_range(20..120);
    let (mut freq, mut amp, mut phase) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..len {
        let z: f64 = rng.sample(StandardNormal);
        ar = AR_POLE * ar + innovation_std * z;
        let mut tone = 0.0;
        if burst_left > 0 {
            let pos = (burst_len - burst_left) as f64 / burst_len as f64;
            let envelope = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * pos).cos();
            tone = amp * envelope * phase.sin();
            phase += 2.0 * std::f64::consts::PI * freq;
            burst_left -= 1;
            if burst_left == 0 {
                pause_left = rng.gen_range(100..300);
            }
        } else if pause_left > 0 {
            pause_left -= 1;
        } else {
            burst_len = rng.gen_range(200..600);
            burst_left = burst_len;
            freq = rng.gen_range(0.01..0.08);
            amp = rng.gen_range(0.5..1.0);
            phase = rng.gen_range(0.0..std::f64::consts::TAU);
        }
        out.push(tone + BACKGROUND_LEVEL * ar);
    }
    out
}
