//! Builds the 13-microphone fixture graph and prints its IGFT basis for a few
//! inter-group weights.

use graphceps::fixture;
use graphceps::graph::{self, GraphBasis};
use graphceps::linalg;

fn main() -> graphceps::Result<()> {
    for alpha in [1.0, 0.1, 0.01] {
        let g = fixture::graph(alpha);
        let b = GraphBasis::for_graph(&g)?;
        let l = graph::laplacian(&g)?;
        let recon = b.u.t().dot(&ndarray::Array2::from_diag(&b.lambda)).dot(&b.u);
        println!("alpha = {alpha}");
        println!("  eigenvalues: {:.4}", b.lambda);
        println!("  orthonormality error {:.2e}", linalg::orthonormality_error(&b.u));
        println!("  reconstruction error {:.2e}", linalg::max_abs_diff(&recon, &l));
        println!("  first row: {:.3}", b.u.row(0));
        println!("  last row:  {:.3}", b.u.row(g.n - 1));
    }
    Ok(())
}
