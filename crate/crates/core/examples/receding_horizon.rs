//! Closed-loop rollouts on a tabular model: the exact plan against the greedy
//! receding-horizon controller.

use freegate::gating::SolverOptions;
use freegate::planner::{backward_recursion, LookaheadTable};
use freegate::sim::{rollout, GreedyController, InitialState, PlanController, PlantMode, RolloutConfig};
use freegate::synthetic::random_model;

fn main() -> freegate::Result<()> {
    let horizon = 20;
    let model = random_model(12, 4, 3, 5, 1e-12);
    let plan = backward_recursion(&model, horizon, &SolverOptions::default())?;
    let lookahead = LookaheadTable::build(&model, 1);
    let greedy = GreedyController::new(&lookahead);
    let planned = PlanController { plan: &plan };

    let mut totals = [0.0, 0.0];
    let runs = 200;
    for seed in 0..runs {
        let cfg = RolloutConfig {
            initial: InitialState::Distribution(model.generative.initial_prior().probs().to_vec()),
            max_steps: horizon,
            goal: None,
            dt: 1.0,
            seed,
            stream_id: 0,
            plant: PlantMode::Kernel,
        };
        for (slot, rec) in totals.iter_mut().zip([rollout(&model, &planned, &cfg)?, rollout(&model, &greedy, &cfg)?]) {
            *slot += rec.state_cost.iter().sum::<f64>() / runs as f64;
        }
    }
    println!("predicted free energy of the plan: {:.4}", plan.total_free_energy(model.generative.initial_prior())?);
    println!("mean accumulated state cost over {runs} rollouts of {horizon} steps");
    println!("  exact plan: {:.4}", totals[0]);
    println!("  greedy:     {:.4}", totals[1]);
    Ok(())
}
