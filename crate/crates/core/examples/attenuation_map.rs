//! Where does the extraction filter let sound through? Block AuxIVE on the
//! `room-4x4` scene, its block-averaged time-invariant filter probed with
//! white noise over the horizontal plane through the array, printed as a
//! coarse character map (darker is more attenuation) and saved as CSV
//! when a path is given.

use blockive::algorithms::{AlgoConfig, Init, Method};
use blockive::eval::{attenuation_map, GridSpec, ProbeSpec, SpatialFilter};
use blockive::simulate::{moving_mixture, room_4x4};
use blockive::stft::{analyze, StftConfig};

fn main() -> blockive::Result<()> {
    let out = std::env::args().nth(1);
    let scn = room_4x4();
    let scene = moving_mixture(&scn, 1)?;
    let x = analyze(&scene.mixture, &StftConfig::default())?;
    let cfg = AlgoConfig {
        blocks: 5,
        max_iter: 100,
        init: Init::Steering {
            mic_positions: scn.mics.clone(),
            azimuth_deg: 90.0,
            elevation_deg: 0.0,
            speed_of_sound: 343.0,
        },
        ..AlgoConfig::default()
    };
    let r = Method::BlockAuxive.run(&x, &cfg, None)?;
    let filter = SpatialFilter::from_state(&r.state, 0)?;
    let grid = GridSpec {
        min: [0.2, 0.2, 1.0],
        max: [3.8, 3.8, 1.0],
        spacing: 0.2,
    };
    let points = grid.points()?;
    let probe = ProbeSpec {
        duration: 0.25,
        ..ProbeSpec::default()
    };
    let map = attenuation_map(&filter, &scn.room, &scn.mics, &points, &probe)?;

    // points near the microphones are dropped from the map; draw them as `o`
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let nx = 19;
    for row in points.chunks(nx).rev() {
        let line: String = row
            .iter()
            .map(|p| match map.points.iter().position(|q| q == p) {
                Some(i) => shades[((-map.attenuation_db[i] / 3.0).clamp(0.0, 9.0)) as usize],
                None => 'o',
            })
            .collect();
        println!("|{line}|");
    }
    let (lo, hi) = map
        .attenuation_db
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    println!("attenuation from {lo:.1} dB to {hi:.1} dB, 3 dB per shade");
    if let Some(p) = out {
        std::fs::write(&p, map.to_csv()).map_err(|source| blockive::Error::Io { path: p.into(), source })?;
    }
    Ok(())
}
