//! A talker walking along an arc in a reverberant room next to a static
//! noise source: static OverIVA against Block AuxIVE, and optionally the
//! gradient estimators (`--gradient`). Pass a directory to save WAVs.
//!
//! `cargo run --release --example moving_speaker -- [--gradient] [out_dir]`

use std::path::PathBuf;

use blockive::algorithms::{extract_signal, AlgoConfig, Init, Method};
use blockive::eval::{isdr, spectral_isinr};
use blockive::simulate::{moving_mixture, room_4x4};
use blockive::stft::{analyze, StftConfig};
use blockive::wav::{write_wav, WavFormat};

fn main() -> blockive::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let gradient = args.iter().any(|a| a == "--gradient");
    let out = args.iter().find(|a| !a.starts_with("--")).map(PathBuf::from);

    let scn = room_4x4();
    let scene = moving_mixture(&scn, 1)?;
    let stft = StftConfig::default();
    let x = analyze(&scene.mixture, &stft)?;
    let soi = analyze(&scene.truth.soi, &stft)?;
    let bg = analyze(&scene.truth.background(), &stft)?;
    let blocks = (x.frames() as f64 / 250.0).round() as usize;
    println!("{} frames, {} blocks of about 250", x.frames(), blocks);

    let mut methods = vec![(Method::Overiva, 100), (Method::BlockAuxive, 100)];
    if gradient {
        methods.extend([(Method::OgiveW, 1000), (Method::BogiveW, 1000)]);
    }
    for (method, max_iter) in methods {
        let cfg = AlgoConfig {
            blocks,
            max_iter,
            init: Init::Steering {
                mic_positions: scn.mics.clone(),
                azimuth_deg: 90.0,
                elevation_deg: 0.0,
                speed_of_sound: 343.0,
            },
            ..AlgoConfig::default()
        };
        let r = method.run(&x, &cfg, None)?;
        let sinr = spectral_isinr(&r.state, 0, &soi, &bg)?;
        let y = extract_signal(&r, &x)?;
        let sdr = isdr(y.channel(0), scene.truth.soi.channel(0), scene.mixture.channel(0), 64)?;
        println!(
            "{:<12} iSINR {:6.2} dB  iSDR {:6.2} dB  {:5} iterations  {:6.2} s",
            format!("{method:?}"),
            sinr.block_mean.value,
            sdr.value,
            r.iterations(),
            r.elapsed.as_secs_f64()
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(|source| blockive::Error::Io {
                path: dir.clone(),
                source,
            })?;
            write_wav(
                dir.join(format!("{method:?}.wav").to_lowercase()),
                &y,
                WavFormat::Float32,
            )?;
        }
    }
    if let Some(dir) = &out {
        write_wav(dir.join("mixture.wav"), &scene.mixture, WavFormat::Float32)?;
    }
    Ok(())
}
