use std::sync::{Arc, Mutex};

use super::config::CollaborationConfig;
use super::party::{PartyState, PublicData, RoundReports, TransferReports};
use super::server::{aggregate, select_subset};
use super::types::{PartyMetrics, ScoreMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiments::MetricsLog;
use crate::rng::subset_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    SubsetSelected,
    ScoresSent,
    ConsensusReady,
    DigestStart,
    RevisitStart,
    RevisitEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub round: usize,
    pub party: Option<usize>,
    pub step: Step,
}

/// Shared, append-only record of protocol steps in the order they happened.
#[derive(Debug, Clone, Default)]
pub struct EventLog(Arc<Mutex<Vec<Event>>>);

impl EventLog {
    pub fn record(&self, round: usize, party: Option<usize>, step: Step) {
        self.0.lock().expect("event log poisoned").push(Event { round, party, step });
    }

    pub fn events(&self) -> Vec<Event> {
        self.0.lock().expect("event log poisoned").clone()
    }
}

/// Per-party outcome of one collaboration round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub metrics: Vec<PartyMetrics>,
    pub reports: Vec<RoundReports>,
}

/// Run `f` for every party concurrently, returning results in party order.
fn for_each_party<T, F>(parties: &mut [PartyState], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut PartyState) -> Result<T> + Sync,
{
    std::thread::scope(|s| {
        let handles: Vec<_> = parties.iter_mut().map(|p| s.spawn(|| f(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::protocol(None, "worker", "party worker panicked"))))
            .collect()
    })
}

fn check_parties(parties: &[PartyState], config: &CollaborationConfig, public: &Dataset) -> Result<()> {
    config.validate()?;
    if parties.len() != config.parties {
        return Err(Error::Config(format!(
            "parties: config says {}, {} supplied",
            config.parties,
            parties.len()
        )));
    }
    for (k, p) in parties.iter().enumerate() {
        if p.id != k {
            return Err(Error::Config(format!("party at position {k} has id {}", p.id)));
        }
        if p.net.input_dim() != public.feature_dim() {
            return Err(Error::Config(format!(
                "party {k}: network input dim {} differs from public feature dim {}",
                p.net.input_dim(),
                public.feature_dim()
            )));
        }
        if p.net.output_dim() != parties[0].net.output_dim() {
            return Err(Error::Config(format!("party {k}: class count differs from party 0")));
        }
        if p.private.is_empty() {
            return Err(Error::Config(format!("party {k}: private dataset is empty")));
        }
    }
    if public.is_empty() {
        return Err(Error::Config("public dataset is empty".into()));
    }
    Ok(())
}

/// Transfer learning for every party, returning the baseline rows.
pub fn transfer_all(
    parties: &mut [PartyState],
    public: &PublicData,
    test: &Dataset,
    config: &CollaborationConfig,
) -> Result<Vec<(PartyMetrics, TransferReports)>> {
    check_parties(parties, config, &public.full)?;
    for_each_party(parties, |p| p.baseline(public, test, &config.transfer))
}

/// One round: select subset, score, aggregate, broadcast, digest, revisit, evaluate.
pub fn run_round(
    parties: &mut [PartyState],
    public: &Dataset,
    test: &Dataset,
    config: &CollaborationConfig,
    round: usize,
    events: &EventLog,
) -> Result<RoundOutcome> {
    let weights = config.resolved_weights()?;
    let size = config.effective_subset_size(public.len());
    let selection = select_subset(round, public.len(), size, &mut subset_stream(config.seed, round))?;
    events.record(round, None, Step::SubsetSelected);

    let reports: Vec<ScoreMatrix> = for_each_party(parties, |p| {
        let s = p.compute_scores(public, &selection)?;
        events.record(round, Some(p.id), Step::ScoresSent);
        Ok(s)
    })?;
    let consensus = aggregate(&reports, &weights)?;
    events.record(round, None, Step::ConsensusReady);

    let results = for_each_party(parties, |p| p.finish_round(public, test, &selection, &consensus, config, events))?;
    let (metrics, reports) = results.into_iter().unzip();
    Ok(RoundOutcome { metrics, reports })
}

/// Full protocol: transfer learning, then `config.rounds` collaboration rounds.
pub fn run_fedmd(
    config: &CollaborationConfig,
    parties: &mut [PartyState],
    public: &Dataset,
    test: &Dataset,
) -> Result<MetricsLog> {
    run_fedmd_logged(config, parties, public, test, &EventLog::default())
}

pub fn run_fedmd_logged(
    config: &CollaborationConfig,
    parties: &mut [PartyState],
    public: &Dataset,
    test: &Dataset,
    events: &EventLog,
) -> Result<MetricsLog> {
    check_parties(parties, config, public)?;
    let public = PublicData::split(public.clone(), config.public_validation_fraction, config.seed)?;
    let mut rows: Vec<PartyMetrics> = transfer_all(parties, &public, test, config)?
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    for round in 1..=config.rounds {
        rows.extend(run_round(parties, &public.full, test, config, round, events)?.metrics);
    }
    Ok(MetricsLog::new(rows, config.seed))
}
