use super::{GraspAction, PolicyError};
use crate::render::{project, CameraModel};
use crate::sim::WorldState;

/// Exact projection of the free corner on the robot's current side.
pub fn oracle_grasp(world: &WorldState, camera: &CameraModel) -> Result<GraspAction, PolicyError> {
    project(&world.corner_position(world.robot_side), camera).map_err(PolicyError::Supervisor)
}

/// 1 iff the current side's corner is within `radius` of its frame
/// corner (boundary inclusive).
pub fn oracle_transition(world: &WorldState, radius: f64) -> u8 {
    let side = world.robot_side;
    let d2 = (world.corner_position(side) - world.frame.target_corner(side)).norm_squared();
    (d2 <= radius * radius) as u8
}
