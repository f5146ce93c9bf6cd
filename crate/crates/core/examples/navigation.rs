//! The navigation scenario: four wall-seeking primitives, gated at every tick,
//! steer a robot to the goal and hold it there.
//!
//! Pass a directory to also write per-rollout trajectory and weight CSVs.

use std::path::PathBuf;
use std::time::Instant;

use freegate::cli::{trajectory_table, weight_timeline, RolloutSettings};
use freegate::nav::{build_scenario, NavScenarioConfig, PRIMITIVE_NAMES};
use freegate::sim::{batch_rollouts, GoalRegion, GreedyController, InitialState, RolloutConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let t0 = Instant::now();
    let sc = build_scenario(&NavScenarioConfig::default())?;
    println!("scenario built in {:.2?}", t0.elapsed());

    let settings = RolloutSettings::default();
    let template = RolloutConfig {
        initial: InitialState::Index(0),
        max_steps: settings.max_steps,
        goal: Some(GoalRegion { point: sc.config.goal.to_vec(), radius: settings.goal_radius, idle_duration: settings.idle_duration }),
        dt: sc.config.dt,
        seed: settings.seed,
        stream_id: 0,
        plant: settings.plant,
    };
    let starts: Vec<InitialState> = settings.starts.iter().map(|p| InitialState::Index(sc.state_at(*p))).collect();
    let controller = GreedyController::new(&sc.lookahead);
    let records = batch_rollouts(&sc.model, &controller, &starts, &template, true);

    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
    }
    for (i, (rec, start)) in records.into_iter().zip(&settings.starts).enumerate() {
        let rec = rec?;
        let closest = rec
            .positions
            .iter()
            .map(|p| sc.config.min_obstacle_distance([p[0], p[1]]))
            .fold(f64::INFINITY, f64::min);
        let last = rec.weights.last().map(|w| w.as_slice().to_vec()).unwrap_or_default();
        println!(
            "start {start:?}: {:?} after {} steps, closest obstacle {closest:.3} m, final weights {}",
            rec.status,
            rec.steps(),
            PRIMITIVE_NAMES.iter().zip(&last).map(|(n, w)| format!("{n}={w:.3}")).collect::<Vec<_>>().join(" ")
        );
        if let Some(dir) = &out {
            trajectory_table(&sc.model, &rec).write(&dir.join(format!("trajectory_{i}.csv")), true)?;
            weight_timeline(&sc.model, &rec).write(&dir.join(format!("weights_{i}.csv")), true)?;
        }
    }
    println!("total {:.2?}", t0.elapsed());
    Ok(())
}
