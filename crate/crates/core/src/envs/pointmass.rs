use crate::error::{Error, Result};

pub const DT: f64 = 0.05;
pub const GOAL: [f64; 2] = [0.8, 0.8];
pub const GOAL_RADIUS: f64 = 0.05;
pub const HORIZON: usize = 200;

/// `(x, y, vx, vy)`.
pub type PointState = [f64; 4];

fn clip(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

pub fn distance_to_goal(x: f64, y: f64) -> f64 {
    ((x - GOAL[0]).powi(2) + (y - GOAL[1]).powi(2)).sqrt()
}

/// One semi-implicit Euler step. Inputs outside their bounds are clipped.
/// Returns `(next_state, reward, reached_goal)`.
pub fn pointmass_step(state: &PointState, action: &[f64; 2]) -> Result<(PointState, f64, bool)> {
    if state.iter().chain(action).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "point-mass step on non-finite input {state:?} / {action:?}"
        )));
    }
    let [x, y, vx, vy] = state.map(clip);
    let [ax, ay] = action.map(clip);
    let vx = clip(vx + DT * ax);
    let vy = clip(vy + DT * ay);
    let x = clip(x + DT * vx);
    let y = clip(y + DT * vy);
    let dist = distance_to_goal(x, y);
    Ok(([x, y, vx, vy], -dist, dist <= GOAL_RADIUS))
}

/// Scripted proportional-derivative controller toward the goal.
pub fn expert_action(state: &PointState) -> [f64; 2] {
    [
        clip(4.0 * (GOAL[0] - state[0]) - 2.0 * state[2]),
        clip(4.0 * (GOAL[1] - state[1]) - 2.0 * state[3]),
    ]
}
