//! Synthesizes one scene and extracts GC, SC and CEP features from it.

use graphceps::dsp::{self, StftParams};
use graphceps::features::{self, DEFAULT_ORDER};
use graphceps::fixture;
use graphceps::graph::GraphBasis;
use graphceps::sim;

fn main() -> graphceps::Result<()> {
    let scene = &fixture::scenes()[0];
    let clip = sim::synthesize_scene(scene, 2.0, fixture::SAMPLE_RATE, 1)?;
    let params = StftParams::for_rate(clip.sample_rate);
    let tensor = dsp::stft(&clip, &params)?;
    println!(
        "{}: {} channels, {} bins x {} frames",
        scene.scene_label,
        tensor.n_channels(),
        tensor.n_bins(),
        tensor.n_frames()
    );

    let q = dsp::channel_log_vectors(&tensor);
    let p = dsp::freq_log_vectors(&tensor);
    let gc = features::graph_cepstrum(&q, &GraphBasis::for_graph(&fixture::graph(0.01))?, DEFAULT_ORDER)?;
    let sc = features::spatial_cepstrum(&q, &features::fit_pca_basis(&q, false)?, DEFAULT_ORDER)?;
    let cep = features::cepstrum(&p, DEFAULT_ORDER)?;
    for f in [&gc, &sc, &cep] {
        println!("{:>3} frame 0: {:.2}", f.kind, f.values.row(0));
    }
    Ok(())
}
