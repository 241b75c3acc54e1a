//! Steering the initialization towards the interferer invites extraction of
//! the wrong source; a pilot carrying the SOI frame energies counters it.
//! Compares unpiloted and piloted Block AuxIVE over a few seeds of the
//! `grid-move` scene and over a range of pilot weights.

use blockive::algorithms::{AlgoConfig, Init, Method};
use blockive::eval::spectral_isinr;
use blockive::pipeline::oracle_pilot;
use blockive::simulate::{grid_move, moving_mixture};
use blockive::stft::{analyze, StftConfig, WindowKind};

fn main() -> blockive::Result<()> {
    let stft = StftConfig::new(1024, 256, WindowKind::Hamming)?;
    println!("{:>5} {:>12} {:>10} {:>10}", "seed", "delta", "plain dB", "pilot dB");
    for seed in 0..3 {
        let scn = grid_move(seed);
        let scene = moving_mixture(&scn, seed)?;
        let x = analyze(&scene.mixture, &stft)?;
        let soi = analyze(&scene.truth.soi, &stft)?;
        let bg = analyze(&scene.truth.background(), &stft)?;
        let interferer = match &scn.interferers[0].path {
            blockive::simulate::PathSpec::Static(p) => *p,
            _ => unreachable!("grid-move interferers are static"),
        };
        let c = scn.array_centre();
        let azimuth = (interferer[1] - c[1]).atan2(interferer[0] - c[0]).to_degrees();
        let blocks = (x.frames() as f64 / 150.0).round().max(1.0) as usize;
        let cfg = AlgoConfig {
            blocks,
            max_iter: 150,
            init: Init::Steering {
                mic_positions: scn.mics.clone(),
                azimuth_deg: azimuth,
                elevation_deg: 0.0,
                speed_of_sound: 343.0,
            },
            ..AlgoConfig::default()
        };
        let plain = Method::BlockAuxive.run(&x, &cfg, None)?;
        let plain_db = spectral_isinr(&plain.state, 0, &soi, &bg)?.block_mean.value;
        let default_delta = x.bins() as f64 / blocks as f64;
        for delta in [default_delta, 10.0 * default_delta] {
            let pilot = oracle_pilot(&soi, 0, delta)?;
            let r = Method::PilotedBlockAuxive.run(&x, &cfg, Some(&pilot))?;
            let db = spectral_isinr(&r.state, 0, &soi, &bg)?.block_mean.value;
            println!("{seed:>5} {delta:>12.1} {plain_db:>10.2} {db:>10.2}");
        }
    }
    Ok(())
}
