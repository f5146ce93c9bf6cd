//! Each navigation primitive on its own just drives into its wall.

use freegate::nav::{build_scenario, NavScenarioConfig, PRIMITIVE_NAMES};
use freegate::sim::{rollout, FixedPrimitiveController, GoalRegion, InitialState, PlantMode, RolloutConfig};

fn main() -> freegate::Result<()> {
    let sc = build_scenario(&NavScenarioConfig::default())?;
    let start = sc.state_at([1.3, 0.0]);
    for (i, name) in PRIMITIVE_NAMES.iter().enumerate() {
        let alone = sc.with_single_primitive(i);
        let controller = FixedPrimitiveController { index: 0, lookahead: &alone.lookahead };
        let cfg = RolloutConfig {
            initial: InitialState::Index(start),
            max_steps: 3000,
            goal: Some(GoalRegion { point: sc.config.goal.to_vec(), radius: 0.08, idle_duration: 2.0 }),
            dt: sc.config.dt,
            seed: 0,
            stream_id: i as u64,
            plant: PlantMode::Integrator,
        };
        let rec = rollout(&alone.model, &controller, &cfg)?;
        let end = rec.positions.last().expect("initial position is recorded");
        println!("{name:>5}: {:?}, ends at ({:.2}, {:.2})", rec.status, end[0], end[1]);
    }
    Ok(())
}
