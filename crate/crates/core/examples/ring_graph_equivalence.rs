//! On a ring graph the Laplacian eigenspaces coincide with the DFT ones.

use graphceps::graph::{self, GraphBasis, MicGraph};
use graphceps::linalg;

fn main() -> graphceps::Result<()> {
    for n in [4, 7, 12] {
        let b = GraphBasis::for_graph(&MicGraph::ring(n))?;
        let ours = graph::eigenspace_projectors(&b, 1e-9);
        let dft = graph::ring_idft_projectors(n, 1e-9)?;
        let worst = ours
            .iter()
            .zip(&dft)
            .map(|(p, (_, q))| linalg::max_abs_diff(p, q))
            .fold(0.0, f64::max);
        println!("N = {n:2}: {} eigenspaces, max projector difference {worst:.2e}", ours.len());
        for (lam, _) in &dft {
            print!(" {lam:.3}");
        }
        println!();
    }
    Ok(())
}
