//! Discretizes two Gaussians onto a planar grid and compares them.

use std::sync::Arc;

use freegate::prob::{discretize_gaussian, entropy, kl_divergence, Axis, Grid};

fn main() -> freegate::Result<()> {
    let grid = Arc::new(Grid::new(vec![Axis::new(-1.0, 1.0, 21)?, Axis::new(-1.0, 1.0, 21)?])?);
    let p = discretize_gaussian(grid.clone(), &[0.0, 0.0], &[0.05, 0.05], 1e-12)?;
    let q = discretize_gaussian(grid.clone(), &[0.3, -0.2], &[0.08, 0.08], 1e-12)?;

    println!("bins: {}", grid.flat_size());
    println!("p mean {:?}, mode at {:?}", p.mean(), grid.center(p.mode()));
    println!("q mean {:?}, mode at {:?}", q.mean(), grid.center(q.mode()));
    println!("H(p) = {:.4}  H(q) = {:.4}", entropy(p.probs()), entropy(q.probs()));
    println!("KL(p || q) = {:.4}", kl_divergence(&p, &q)?);
    println!("KL(q || p) = {:.4}", kl_divergence(&q, &p)?);

    // A mean far outside the grid still gives a full-support distribution.
    let edge = discretize_gaussian(grid.clone(), &[5.0, 0.0], &[0.01, 0.01], 1e-12)?;
    println!("far mean: mode at {:?}, smallest mass {:.1e}", grid.center(edge.mode()), edge.min_prob());
    Ok(())
}
