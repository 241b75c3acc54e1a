//! Instantaneous CSV mixture with known truth: every estimator starts from
//! the same unit vector and is scored by the distance of its normalized
//! separating vectors to the true ones and by iSINR.

use blockive::algorithms::{AlgoConfig, Init, Method};
use blockive::eval::spectral_isinr;
use blockive::simulate::{synthetic_csv_mixture, SyntheticSpec};
use blockive::SeparatingVectors;

fn distance(a: &SeparatingVectors, b: &SeparatingVectors) -> f64 {
    let (a, b) = (a.normalized_to(0), b.normalized_to(0));
    (0..a.bins())
        .map(|k| {
            a.get(k)
                .iter()
                .zip(b.get(k))
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn main() -> blockive::Result<()> {
    let spec = SyntheticSpec::new(8, 3, 4, 750);
    let m = synthetic_csv_mixture(&spec, 3)?;
    println!(
        "K = {}, d = {}, T = {}, N = {}",
        spec.bins,
        spec.channels,
        spec.blocks,
        spec.frames()
    );
    println!(
        "{:<14} {:>6} {:>12} {:>10} {:>9}",
        "method", "iters", "max dist", "iSINR dB", "time s"
    );
    for (method, max_iter) in [
        (Method::Overiva, 100),
        (Method::BlockAuxive, 100),
        (Method::OgiveW, 1000),
        (Method::BogiveW, 1000),
    ] {
        let cfg = AlgoConfig {
            blocks: spec.blocks,
            max_iter,
            step: 0.2,
            init: Init::UnitVector(0),
            ..AlgoConfig::default()
        };
        let r = method.run(&m.x, &cfg, None)?;
        let sinr = spectral_isinr(&r.state, 0, &m.soi_image, &m.background_image)?;
        println!(
            "{:<14} {:>6} {:>12.4} {:>10.2} {:>9.3}",
            format!("{method:?}"),
            r.iterations(),
            distance(&r.state.w, &m.w),
            sinr.block_mean.value,
            r.elapsed.as_secs_f64()
        );
    }
    Ok(())
}
