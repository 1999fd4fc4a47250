//! Fits a spatial basis on synthetic training scenes and compares it with
//! the IGFT matrices of the fixture graph.

use graphceps::dsp::StftParams;
use graphceps::experiment::{self, ClipSource, Split, SynthConfig, SynthSource};
use graphceps::fixture;
use graphceps::graph::GraphBasis;
use graphceps::pipeline;

fn main() -> graphceps::Result<()> {
    let cfg = SynthConfig {
        n_train: 45,
        n_test: 1,
        ..SynthConfig::default()
    };
    let src = SynthSource::new(fixture::scenes(), cfg, 0)?;
    let qs = experiment::channel_logs(&src, &src.indices(Split::Train), &StftParams::for_rate(fixture::SAMPLE_RATE))?;
    let sc = experiment::fit_sc_basis(&qs, false)?;
    println!("SC eigenvalues: {:.2}", sc.eigvals);

    let mut named = Vec::new();
    for alpha in [1.0, 0.1, 0.01] {
        named.push((format!("alpha={alpha}"), GraphBasis::for_graph(&fixture::graph(alpha))?.u));
    }
    named.push(("SC".to_string(), sc.e_t));
    print!("{}", pipeline::similarity_table(&named)?.to_csv());
    Ok(())
}
