//! Trains per-scene GMMs on synthetic data and reports test accuracy for
//! GC, SC and CEP features.

use graphceps::dsp::StftParams;
use graphceps::experiment::{self, ClipSource, FeatureSettings, Split, SynthConfig, SynthSource, Transform};
use graphceps::fixture;
use graphceps::gmm::{self, GmmConfig};
use graphceps::graph::GraphBasis;

fn main() -> graphceps::Result<()> {
    let cfg = SynthConfig {
        n_train: 54,
        n_test: 27,
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
    let transforms = [
        Transform::Gc(GraphBasis::for_graph(&fixture::graph(0.01))?),
        Transform::Sc(experiment::fit_sc_basis(&qs, false)?),
        Transform::Cep,
    ];
    let refs: Vec<&Transform> = transforms.iter().collect();
    let gmm_cfg = GmmConfig {
        components: 4,
        ..GmmConfig::default()
    };
    let models = experiment::train_models(&src, &refs, &fs, &gmm_cfg)?;

    let test = src.indices(Split::Test);
    let feats = experiment::features_for(&src, &test, &refs, &fs)?;
    for (t, (transform, model)) in transforms.iter().zip(&models).enumerate() {
        let set: Vec<_> = test
            .iter()
            .zip(&feats)
            .map(|(&i, f)| (f[t].clone(), src.clips()[i].scene.clone()))
            .collect();
        let eval = gmm::evaluate(model, &set)?;
        println!("{:>3}: {}/{} correct ({:.3})", transform.kind(), eval.correct, eval.total, eval.accuracy);
    }
    Ok(())
}
