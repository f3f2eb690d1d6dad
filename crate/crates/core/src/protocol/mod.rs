//! The collaboration loop: transfer learning, then rounds of
//! communicate → aggregate → distribute → digest → revisit.

mod config;
mod networked;
mod party;
mod round;
mod server;
mod types;

pub use config::{CollaborationConfig, WEIGHT_SUM_TOLERANCE};
pub use networked::{coordinate, participate, run_fedmd_networked, run_fedmd_networked_logged, TransportKind};
pub use party::{PartyState, PublicData, RoundReports, TransferReports};
pub use round::{run_fedmd, run_fedmd_logged, run_round, transfer_all, Event, EventLog, RoundOutcome, Step};
pub use server::{aggregate, select_subset};
pub use types::{normalize_weights, ConsensusTargets, PartyMetrics, Phase, ScoreMatrix, SubsetSelection};
