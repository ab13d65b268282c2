//! Forward physics of an oscillating dipole observed by a magnetometer array.

mod field;
mod frame;
mod magnet;
mod oscillator;
mod pose;
mod rotation;
mod sensors;
mod synth;

pub use field::{dipole_field, dipole_field_with_limit, magnetic_torque, DEFAULT_MIN_DISTANCE};
pub use frame::{SignalFrame, Units};
pub use magnet::MagnetSpec;
pub use oscillator::{deflection_angle, DampingLaw, OscillatorParams};
pub use pose::Pose;
pub use rotation::{quat_rotation_matrix, rot_y, Quat};
pub use sensors::{LayoutFile, SensorArray, SensorLayoutEntry, SensorSpec};
pub use synth::{
    magnet_state, sensor_reading, synthesize_signal, synthesize_trajectory, synthesize_window,
    MagnetState, SynthesisMode, BUFFER_TIME,
};
