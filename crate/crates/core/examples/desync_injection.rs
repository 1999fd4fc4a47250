//! Shifts each synchronized group by a random clock offset and shows the
//! effect on the graph cepstrum.

use graphceps::audio::AudioClip;
use graphceps::dsp::{self, StftParams};
use graphceps::features;
use graphceps::fixture;
use graphceps::graph::GraphBasis;
use graphceps::sim::{self, DesyncSpec};

fn main() -> graphceps::Result<()> {
    let clip = sim::synthesize_scene(&fixture::scenes()[2], 2.0, fixture::SAMPLE_RATE, 3)?;
    let params = StftParams::for_rate(clip.sample_rate);
    let basis = GraphBasis::for_graph(&fixture::graph(0.01))?;
    let gc = |c: &AudioClip| -> graphceps::Result<_> {
        features::graph_cepstrum(&dsp::channel_log_vectors(&dsp::stft(c, &params)?), &basis, 13)
    };
    let clean = gc(&clip)?;
    for sigma_ms in [1.0, 10.0, 100.0] {
        let spec = DesyncSpec {
            groups: fixture::groups(),
            sigma_s: sigma_ms / 1000.0,
            seed: 7,
        };
        let shifted = sim::inject_desync(&clip, &spec)?;
        let f = gc(&shifted.clip)?;
        let dist = (&f.values - &clean.values).mapv(|v| v * v).mean().unwrap_or(0.0).sqrt();
        println!("sigma {sigma_ms:>5} ms: offsets {:?} samples, RMS feature change {dist:.3}", shifted.offsets);
    }
    Ok(())
}
