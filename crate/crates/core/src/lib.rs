//! Shared autonomy for driving: natural-language plan abstraction,
//! uncertainty-triggered arbitration, grounded planning and a closed-loop
//! simulator to evaluate them.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod arbitration;
pub mod config;
pub mod evaluation;
pub mod geometry;
pub mod metrics;
pub mod mock_human;
pub mod planning;
pub mod road;
pub mod scenario;
pub mod sim;
pub mod uncertainty;
pub mod vehicle;

pub use abstraction::{ControlState, PlanLabel, Trajectory};
pub use arbitration::{Arbiter, ArbitrationDecision, ArbitrationRequest, Choice};
pub use config::GlobalConfig;
pub use scenario::Scenario;
pub use sim::episode::{
    Episode, EpisodeEvent, EpisodeOptions, EpisodeResult, HumanControls, HumanEvent, Mode, SimConfig,
};
