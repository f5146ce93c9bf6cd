//! Solves one gating problem and compares the mixture with each primitive alone.

use freegate::gating::{brute_force_oracle, objective, solve, SolverOptions, StepProblem};
use freegate::model::Weights;

fn main() -> freegate::Result<()> {
    // Three actions: go left, stay, go right. Staying is expensive, right is cheap.
    let left = vec![0.8, 0.15, 0.05];
    let right = vec![0.05, 0.15, 0.8];
    let cautious = vec![0.3, 0.4, 0.3];
    let reference = vec![1.0 / 3.0; 3];
    let score = vec![1.0, 2.0, 0.5];
    let sp = StepProblem::new(&[left, right, cautious], reference, score)?;

    let r = solve(&sp, &SolverOptions::default());
    println!("weights {:?}", r.weights.as_slice());
    println!("mixed policy {:?}", sp.mixture(r.weights.as_slice()));
    println!(
        "J(w*) = {:.6}  gap {:.1e}  iterations {}  converged {}",
        r.objective, r.fw_gap, r.iterations, r.converged
    );
    for (i, name) in ["left", "right", "cautious"].iter().enumerate() {
        println!("J({name} alone) = {:.6}", objective(&sp, &Weights::vertex(3, i)));
    }
    let (w, v) = brute_force_oracle(&sp, 0.01)?;
    println!("grid search (step 0.01): {:.6} at {:?}", v, w.as_slice());
    Ok(())
}
