//! The protocol driven over a [`Channel`]: a coordinator that only ever sees
//! score matrices and metrics, and participants that keep their models and
//! private data to themselves.

use std::net::SocketAddr;
use std::time::Duration;

use super::config::CollaborationConfig;
use super::party::{PartyState, PublicData};
use super::round::{EventLog, Step};
use super::server::{aggregate, select_subset};
use super::types::{PartyMetrics, Phase, ScoreMatrix, SubsetSelection};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiments::MetricsLog;
use crate::rng::subset_stream;
use crate::transport::{in_process_pair, Channel, Message, TcpChannel, TcpServer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// TCP on the given address; port 0 picks a free loopback port.
    Tcp(SocketAddr),
}

fn unexpected(party: Option<usize>, step: &'static str, got: &Message) -> Error {
    Error::protocol(party, step, format!("unexpected {} message", got.name()))
}

fn via<T>(party: Option<usize>, step: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Protocol { .. } => e,
        other => Error::protocol(party, step, other.to_string()),
    })
}

fn broadcast<C: Channel>(channels: &mut [C], msg: &Message, step: &'static str) -> Result<()> {
    for (k, ch) in channels.iter_mut().enumerate() {
        via(Some(k), step, ch.send(msg))?;
    }
    Ok(())
}

/// Server side. Channels may arrive in any order; each party is identified
/// by the id in its baseline report.
pub fn coordinate<C: Channel>(
    channels: Vec<C>,
    config: &CollaborationConfig,
    public_len: usize,
    events: &EventLog,
) -> Result<MetricsLog> {
    config.validate()?;
    let m = config.parties;
    if channels.len() != m {
        return Err(Error::Config(format!("{} connections for {m} parties", channels.len())));
    }
    let weights = config.resolved_weights()?;

    let mut slots: Vec<Option<(C, PartyMetrics)>> = (0..m).map(|_| None).collect();
    for mut ch in channels {
        let msg = via(None, "baseline", ch.recv())?;
        let Message::PartyMetrics(row @ PartyMetrics { phase: Phase::Baseline, .. }) = msg else {
            return Err(unexpected(None, "baseline", &msg));
        };
        let slot = slots
            .get_mut(row.party)
            .ok_or_else(|| Error::protocol(Some(row.party), "baseline", format!("party id out of range 0..{m}")))?;
        if slot.is_some() {
            return Err(Error::protocol(Some(row.party), "baseline", "party id claimed twice"));
        }
        *slot = Some((ch, row));
    }
    let (mut channels, mut rows): (Vec<C>, Vec<PartyMetrics>) = slots.into_iter().map(|s| s.expect("all slots filled")).unzip();

    if config.rounds == 0 {
        broadcast(&mut channels, &Message::RoundComplete { round: 0 }, "finish")?;
    }
    let size = config.effective_subset_size(public_len);
    for round in 1..=config.rounds {
        let selection = select_subset(round, public_len, size, &mut subset_stream(config.seed, round))?;
        events.record(round, None, Step::SubsetSelected);
        broadcast(&mut channels, &Message::SubsetAnnouncement(selection), "distribute subset")?;

        let mut reports: Vec<ScoreMatrix> = Vec::with_capacity(m);
        for (k, ch) in channels.iter_mut().enumerate() {
            match via(Some(k), "communicate", ch.recv())? {
                Message::ScoreReport(s) if s.party == k && s.round == round => reports.push(s),
                Message::ScoreReport(s) => {
                    return Err(Error::protocol(
                        Some(k),
                        "communicate",
                        format!("report claims party {} round {}", s.party, s.round),
                    ))
                }
                other => return Err(unexpected(Some(k), "communicate", &other)),
            }
        }
        let consensus = aggregate(&reports, &weights)?;
        events.record(round, None, Step::ConsensusReady);
        broadcast(&mut channels, &Message::ConsensusBroadcast(consensus), "distribute")?;

        for (k, ch) in channels.iter_mut().enumerate() {
            match via(Some(k), "collect metrics", ch.recv())? {
                Message::PartyMetrics(row) if row.party == k && row.phase == Phase::Round(round) => rows.push(row),
                other => return Err(unexpected(Some(k), "collect metrics", &other)),
            }
        }
        broadcast(&mut channels, &Message::RoundComplete { round }, "finish round")?;
    }
    Ok(MetricsLog::new(rows, config.seed))
}

/// Participant side: transfer learning, then react to server messages until
/// the final `RoundComplete`.
pub fn participate<C: Channel>(
    channel: &mut C,
    party: &mut PartyState,
    public: &PublicData,
    test: &Dataset,
    config: &CollaborationConfig,
    events: &EventLog,
) -> Result<()> {
    let id = Some(party.id);
    let (baseline, _) = party.baseline(public, test, &config.transfer)?;
    via(id, "baseline", channel.send(&Message::PartyMetrics(baseline)))?;

    let mut selection: Option<SubsetSelection> = None;
    loop {
        match via(id, "await server", channel.recv())? {
            Message::SubsetAnnouncement(sel) => {
                let scores = party.compute_scores(&public.full, &sel)?;
                events.record(sel.round, id, Step::ScoresSent);
                via(id, "communicate", channel.send(&Message::ScoreReport(scores)))?;
                selection = Some(sel);
            }
            Message::ConsensusBroadcast(consensus) => {
                let sel = selection
                    .take()
                    .ok_or_else(|| Error::protocol(id, "digest", "consensus arrived before a subset announcement"))?;
                let (metrics, _) = party.finish_round(&public.full, test, &sel, &consensus, config, events)?;
                via(id, "report metrics", channel.send(&Message::PartyMetrics(metrics)))?;
            }
            Message::RoundComplete { round } if round == config.rounds => return Ok(()),
            Message::RoundComplete { .. } => {}
            other => return Err(unexpected(id, "await server", &other)),
        }
    }
}

/// Run the protocol with every participant in its own thread, talking to the
/// coordinator over the chosen transport.
pub fn run_fedmd_networked(
    config: &CollaborationConfig,
    parties: &mut [PartyState],
    public: &Dataset,
    test: &Dataset,
    transport: TransportKind,
) -> Result<MetricsLog> {
    run_fedmd_networked_logged(config, parties, public, test, transport, &EventLog::default())
}

pub fn run_fedmd_networked_logged(
    config: &CollaborationConfig,
    parties: &mut [PartyState],
    public: &Dataset,
    test: &Dataset,
    transport: TransportKind,
    events: &EventLog,
) -> Result<MetricsLog> {
    config.validate()?;
    if parties.len() != config.parties {
        return Err(Error::Config(format!(
            "parties: config says {}, {} supplied",
            config.parties,
            parties.len()
        )));
    }
    let public_data = PublicData::split(public.clone(), config.public_validation_fraction, config.seed)?;
    match transport {
        TransportKind::InProcess => {
            let (server_ends, party_ends): (Vec<_>, Vec<_>) = parties.iter().map(|_| in_process_pair()).unzip();
            std::thread::scope(|s| {
                let workers: Vec<_> = parties
                    .iter_mut()
                    .zip(party_ends)
                    .map(|(p, mut ch)| {
                        let public_data = &public_data;
                        s.spawn(move || participate(&mut ch, p, public_data, test, config, events))
                    })
                    .collect();
                let log = coordinate(server_ends, config, public.len(), events);
                join_workers(log, workers)
            })
        }
        TransportKind::Tcp(addr) => {
            let server = TcpServer::bind(addr)?;
            let addr = server.local_addr()?;
            std::thread::scope(|s| {
                let workers: Vec<_> = parties
                    .iter_mut()
                    .map(|p| {
                        let (public_data, events) = (&public_data, events);
                        s.spawn(move || {
                            let mut ch = TcpChannel::connect(addr, Duration::from_secs(30))?;
                            participate(&mut ch, p, public_data, test, config, events)
                        })
                    })
                    .collect();
                let log = (0..config.parties)
                    .map(|_| server.accept())
                    .collect::<Result<Vec<_>>>()
                    .and_then(|channels| coordinate(channels, config, public.len(), events));
                join_workers(log, workers)
            })
        }
    }
}

fn join_workers(
    log: Result<MetricsLog>,
    workers: Vec<std::thread::ScopedJoinHandle<'_, Result<()>>>,
) -> Result<MetricsLog> {
    let mut errors = Vec::new();
    for w in workers {
        let r = w
            .join()
            .unwrap_or_else(|_| Err(Error::protocol(None, "worker", "participant thread panicked")));
        if let Err(e) = r {
            errors.push(e);
        }
    }
    let log = match log {
        Ok(log) if errors.is_empty() => return Ok(log),
        Ok(_) => None,
        Err(e) => Some(e),
    };
    // One failure makes every other endpoint see a hung-up peer; report the
    // failure itself, preferring a participant's over the coordinator's.
    let (consequences, causes): (Vec<Error>, Vec<Error>) = errors.into_iter().chain(log).partition(is_hang_up);
    Err(causes.into_iter().chain(consequences).next().expect("at least one error"))
}

fn is_hang_up(e: &Error) -> bool {
    match e {
        Error::Channel(_) => true,
        Error::Protocol { reason, .. } => reason.starts_with("channel error"),
        _ => false,
    }
}
