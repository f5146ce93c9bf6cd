//! Exact finite-horizon planning on a random tabular model, checked against a
//! lattice enumeration.

use freegate::gating::SolverOptions;
use freegate::oracle::lattice_recursion;
use freegate::planner::backward_recursion;
use freegate::synthetic::random_model;

fn main() -> freegate::Result<()> {
    let horizon = 3;
    let model = random_model(3, 2, 2, 11, 1e-12);
    let plan = backward_recursion(&model, horizon, &SolverOptions::default())?;

    for k in 1..=horizon + 1 {
        println!("l_{k} = {:?}", plan.value_table.at(k));
    }
    for k in 1..=horizon {
        let w: Vec<_> = plan.policy_table.step(k).iter().map(|w| w.as_slice().to_vec()).collect();
        println!("w_{k} = {w:.4?}");
    }
    let total = plan.total_free_energy(model.generative.initial_prior())?;
    let (lattice, bound) = lattice_recursion(&model, horizon);
    println!("free energy {total:.9}");
    println!("lattice     {lattice:.9} (resolution bound {bound:.2e})");
    Ok(())
}
