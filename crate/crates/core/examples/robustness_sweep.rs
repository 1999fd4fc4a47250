//! Accuracy of GC and SC under growing inter-group desync, on a reduced
//! synthetic dataset.

use graphceps::dsp::StftParams;
use graphceps::experiment::{self, ClipSource, FeatureSettings, Split, SweepConfig, SynthConfig, SynthSource, Transform};
use graphceps::features::FeatureKind;
use graphceps::fixture;
use graphceps::gmm::GmmConfig;
use graphceps::graph::GraphBasis;

fn main() -> graphceps::Result<()> {
    let cfg = SynthConfig {
        n_train: 72,
        n_test: 36,
        clip_s: 2.0,
        ..SynthConfig::default()
    };
    let src = SynthSource::new(fixture::scenes(), cfg, 0)?;
    let fs = FeatureSettings {
        stft: StftParams::for_rate(fixture::SAMPLE_RATE),
        order: 13,
        normalize: false,
    };
    let qs = experiment::channel_logs(&src, &src.indices(Split::Train), &fs.stft)?;
    let gc = Transform::Gc(GraphBasis::for_graph(&fixture::graph(0.01))?);
    let sc = Transform::Sc(experiment::fit_sc_basis(&qs, false)?);
    let models = experiment::train_models(&src, &[&gc, &sc], &fs, &GmmConfig::default())?;
    let pairs: Vec<_> = vec![gc, sc].into_iter().zip(models).collect();

    let sweep = SweepConfig {
        sigmas_ms: vec![0.0, 10.0, 50.0, 100.0],
        repetitions: 3,
    };
    let rows = experiment::sweep(&src, &fixture::groups(), &pairs, &fs, &sweep, 0)?;
    println!("sigma_ms      GC            SC");
    for &s in &sweep.sigmas_ms {
        let (g, gs) = experiment::mean_std(&experiment::accuracies(&rows, FeatureKind::Gc, s));
        let (c, cs) = experiment::mean_std(&experiment::accuracies(&rows, FeatureKind::Sc, s));
        println!("{s:>8}  {g:.3} ± {gs:.3}  {c:.3} ± {cs:.3}");
    }
    Ok(())
}
