//! Analyze a speech-like signal, resynthesize it and report the
//! reconstruction error over the interior, the samples covered by every
//! overlapping frame, for each window and a range of hops.

use blockive::simulate::speech_surrogate;
use blockive::stft::{analyze, synthesize, StftConfig, WindowKind};

fn main() -> blockive::Result<()> {
    let x = speech_surrogate(32_000, 16_000, 7)?;
    println!(
        "{:<8} {:>6} {:>6} {:>8} {:>14}",
        "window", "fft", "hop", "frames", "max |err|"
    );
    for window in [WindowKind::Hamming, WindowKind::Hann, WindowKind::Rectangular] {
        for (fft_len, hop) in [(512, 128), (512, 256), (1024, 256)] {
            let cfg = StftConfig::new(fft_len, hop, window)?;
            let spec = analyze(&x, &cfg)?;
            let y = synthesize(&spec)?;
            let range = cfg.interior(x.len());
            let err = x.channel(0)[range.clone()]
                .iter()
                .zip(&y.channel(0)[range])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            println!(
                "{:<8} {:>6} {:>6} {:>8} {:>14.3e}",
                format!("{window:?}"),
                fft_len,
                hop,
                spec.frames(),
                err
            );
        }
    }
    Ok(())
}
