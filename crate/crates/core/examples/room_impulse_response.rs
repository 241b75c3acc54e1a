//! Image-method impulse responses in a shoebox room: direct-path delay,
//! gain and the reverberation time recovered from Schroeder integration.

use blockive::simulate::{image_method_rir, RoomSpec};

/// T30 estimate: fit the -5 dB to -35 dB span of the backward-integrated
/// energy decay and extrapolate to 60 dB.
fn schroeder_t60(h: &[f64], fs: f64) -> Option<f64> {
    let mut edc: Vec<f64> = h
        .iter()
        .rev()
        .scan(0.0, |acc, v| {
            *acc += v * v;
            Some(*acc)
        })
        .collect();
    edc.reverse();
    let total = edc[0];
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let t5 = db.iter().position(|v| *v <= -5.0)?;
    let t35 = db.iter().position(|v| *v <= -35.0)?;
    Some(2.0 * (t35 - t5) as f64 / fs)
}

fn main() -> blockive::Result<()> {
    let fs = 16_000.0;
    let src = [2.0, 3.0, 1.2];
    let mic = [4.5, 2.5, 1.5];
    let d = f64::hypot(src[0] - mic[0], src[1] - mic[1]).hypot(src[2] - mic[2]);
    println!(
        "source-microphone distance {d:.3} m, direct delay {:.2} samples",
        d / 343.0 * fs
    );
    println!("{:>8} {:>8} {:>10} {:>12}", "T60 set", "beta", "taps", "T30 est");
    for t60 in [0.2, 0.4, 0.6] {
        let room = RoomSpec::new([6.0, 5.0, 3.0], t60)?;
        let h = image_method_rir(&room, &src, &mic, fs, None)?;
        let est = schroeder_t60(&h, fs).map_or("n/a".to_string(), |t| format!("{t:.3} s"));
        println!(
            "{:>8.2} {:>8.3} {:>10} {:>12}",
            t60,
            room.reflection_coefficient(),
            h.len(),
            est
        );
    }
    Ok(())
}
