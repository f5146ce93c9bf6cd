//! Prints the navigation state cost as a coarse character map.

use freegate::nav::{build_scenario, NavScenarioConfig};

fn main() -> freegate::Result<()> {
    let sc = build_scenario(&NavScenarioConfig::default())?;
    let map = sc.cost_heatmap();
    let max = map.iter().flatten().copied().fold(0.0, f64::max);
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let goal = sc.position(sc.goal_state());
    let grid = sc.model.state_grid();
    let ny = map.len();
    for (r, row) in map.iter().enumerate() {
        let line: String = row
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                let (x, y) = (grid.axis_centers(0)[c], grid.axis_centers(1)[ny - 1 - r]);
                if (x - goal[0]).abs() < 1e-9 && (y - goal[1]).abs() < 1e-9 {
                    'G'
                } else {
                    shades[((v / max).sqrt() * (shades.len() - 1) as f64).round() as usize]
                }
            })
            .collect();
        println!("|{line}|");
    }
    println!("peak cost {max:.1}; G marks the goal");
    Ok(())
}
