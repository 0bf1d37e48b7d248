//! Property verdicts over completed runs.
//!
//! Each protocol's safety and liveness obligations are evaluated from the
//! event log of a finished run: broadcast agreement/validity/totality,
//! gather core size and per-index agreement, election unanimity and binding,
//! agreement safety (including the commit sentinel), and key-generation
//! transcript identity. A verdict lists violations as human-readable
//! strings; an empty list means the run upheld every property checked.

use crate::crypto::{transcript_from_words, CryptoSuite};
use crate::msg::{Event, Protocol};
use crate::simnet::RunLog;
use crate::PartyId;
use serde::Serialize;

/// Everything the verdict needs to know about the run's construction.
pub struct CheckCtx<'a> {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub crypto: &'a CryptoSuite,
    pub honest: &'a [bool],
    /// Per-party input words, for protocols whose parties propose values.
    pub inputs: &'a [Vec<u64>],
    /// Broadcast dealer, for single-dealer protocols.
    pub dealer: Option<PartyId>,
}

#[derive(Debug, Default, Serialize)]
pub struct RunCheck {
    pub violations: Vec<String>,
    /// View the agreement decided in, when it decided.
    pub decided_view: Option<u64>,
    /// Whether every honest party elected the same value.
    pub unanimous: Option<bool>,
    /// Whether the unanimous election value was an honest input.
    pub honest_value: Option<bool>,
}

impl RunCheck {
    fn flag(&mut self, property: &str, detail: String) {
        self.violations.push(format!("{property}: {detail}"));
    }
}

pub fn check_run(ctx: &CheckCtx, log: &RunLog) -> RunCheck {
    let mut check = RunCheck::default();
    match ctx.protocol {
        Protocol::Rb | Protocol::Vrb => rb_checks(ctx, log, &mut check),
        Protocol::Gather => gather_checks(ctx, log, &mut check),
        Protocol::Pe => pe_checks(ctx, log, &mut check),
        Protocol::Nwh => {
            agreement_checks(ctx, log, &mut check);
            if let Some((_, value)) = first_decision(ctx, log) {
                if !ctx.inputs.contains(value) {
                    check.flag("validity", "decided value proposed by nobody".into());
                }
            }
        }
        Protocol::Adkg => {
            agreement_checks(ctx, log, &mut check);
            if let Some((_, value)) = first_decision(ctx, log) {
                match transcript_from_words(value) {
                    Some(t) if ctx.crypto.dkg_verify(&t) => {
                        if t.shares.len() < 2 * ctx.f + 1 {
                            check.flag(
                                "validity",
                                format!("transcript has {} contributors", t.shares.len()),
                            );
                        }
                    }
                    _ => check.flag("validity", "decided value is not a transcript".into()),
                }
            }
        }
    }
    check
}

fn honest_events<'a>(
    ctx: &'a CheckCtx<'a>,
    log: &'a RunLog,
) -> impl Iterator<Item = (u64, PartyId, &'a Event)> {
    log.events
        .iter()
        .filter(|e| ctx.honest.get(e.party.0).copied().unwrap_or(false))
        .map(|e| (e.seq, e.party, &e.event))
}

fn honest_count(ctx: &CheckCtx) -> usize {
    ctx.honest.iter().filter(|h| **h).count()
}

/// Broadcast: every honest delivery matches every other (agreement), matches
/// an honest dealer's message (validity), and in a drained run either all
/// honest parties delivered or none did (totality).
fn rb_checks(ctx: &CheckCtx, log: &RunLog, check: &mut RunCheck) {
    let mut deliveries: Vec<(PartyId, &Vec<u64>)> = Vec::new();
    for (_, party, event) in honest_events(ctx, log) {
        if let Event::RbDelivered { words } = event {
            deliveries.push((party, words));
        }
    }
    for pair in deliveries.windows(2) {
        if pair[0].1 != pair[1].1 {
            check.flag(
                "agreement",
                format!(
                    "parties {} and {} delivered differently",
                    pair[0].0, pair[1].0
                ),
            );
        }
    }
    let dealer_honest = ctx
        .dealer
        .map(|d| ctx.honest.get(d.0).copied().unwrap_or(false))
        .unwrap_or(false);
    if dealer_honest {
        let expect = &ctx.inputs[ctx.dealer.unwrap().0];
        for (party, words) in &deliveries {
            if words != &expect {
                check.flag("validity", format!("party {party} altered the message"));
            }
        }
    }
    if !log.metrics.budget_exhausted {
        let delivered = deliveries.len();
        if delivered > 0 && delivered < honest_count(ctx) {
            check.flag(
                "totality",
                format!("{delivered}/{} honest parties delivered", honest_count(ctx)),
            );
        }
        if dealer_honest && delivered == 0 {
            check.flag(
                "liveness",
                "honest dealer's broadcast never delivered".into(),
            );
        }
    }
}

/// Gather: outputs share a core of at least `n - f` indices, agree on every
/// common index, and never contain a value its party did not input.
type IndexedSets<'a> = Vec<(PartyId, &'a Vec<(PartyId, Vec<u64>)>)>;

fn gather_checks(ctx: &CheckCtx, log: &RunLog, check: &mut RunCheck) {
    let mut outputs: IndexedSets = Vec::new();
    let mut verified: IndexedSets = Vec::new();
    for (_, party, event) in honest_events(ctx, log) {
        match event {
            Event::GatherOutput { set } => outputs.push((party, set)),
            Event::GatherVerified { set, .. } => verified.push((party, set)),
            _ => {}
        }
    }
    if !log.metrics.budget_exhausted && outputs.len() < honest_count(ctx) {
        check.flag(
            "liveness",
            format!(
                "{}/{} honest parties produced output",
                outputs.len(),
                honest_count(ctx)
            ),
        );
    }
    for (party, set) in &outputs {
        for (k, words) in set.iter() {
            if ctx.honest.get(k.0).copied().unwrap_or(false) && words != &ctx.inputs[k.0] {
                check.flag(
                    "external-validity",
                    format!("party {party} holds a forged value for {k}"),
                );
            }
            if words.is_empty() {
                check.flag("external-validity", format!("empty value for {k}"));
            }
        }
    }
    if outputs.len() == honest_count(ctx) && !outputs.is_empty() {
        let mut core: Vec<PartyId> = outputs[0].1.iter().map(|(k, _)| *k).collect();
        for (_, set) in outputs[1..].iter().chain(&verified) {
            core.retain(|k| set.iter().any(|(j, _)| j == k));
        }
        if core.len() < ctx.n - ctx.f {
            check.flag("core", format!("common core has {} indices", core.len()));
        }
    }
    let mut by_index: Vec<(PartyId, &Vec<u64>)> = Vec::new();
    for (party, set) in outputs.iter().chain(&verified) {
        for (k, words) in set.iter() {
            match by_index.iter().find(|(j, _)| j == k) {
                Some((_, prev)) if *prev != words => {
                    check.flag(
                        "index-agreement",
                        format!("index {k} resolves differently at {party}"),
                    );
                }
                Some(_) => {}
                None => by_index.push((*k, words)),
            }
        }
    }
}

/// Election: probes must never verify; in unanimous runs every accepted
/// verification matches the common output.
fn pe_checks(ctx: &CheckCtx, log: &RunLog, check: &mut RunCheck) {
    let mut outputs: Vec<&Vec<u64>> = Vec::new();
    for (_, _, event) in honest_events(ctx, log) {
        if let Event::PeOutput { value, .. } = event {
            outputs.push(value);
        }
    }
    if !log.metrics.budget_exhausted && outputs.len() < honest_count(ctx) {
        check.flag(
            "liveness",
            format!(
                "{}/{} honest parties elected",
                outputs.len(),
                honest_count(ctx)
            ),
        );
    }
    let unanimous = outputs.len() == honest_count(ctx) && outputs.windows(2).all(|w| w[0] == w[1]);
    check.unanimous = Some(unanimous);
    if unanimous && !outputs.is_empty() {
        check.honest_value = Some(
            ctx.inputs
                .iter()
                .enumerate()
                .any(|(i, input)| ctx.honest[i] && input == outputs[0]),
        );
    } else {
        check.honest_value = Some(false);
    }
    for (_, party, event) in honest_events(ctx, log) {
        if let Event::PeVerified { value, probe, .. } = event {
            if *probe {
                check.flag("binding", format!("party {party} accepted a probe"));
            } else if unanimous && !outputs.is_empty() && value != outputs[0] {
                check.flag(
                    "binding",
                    format!("party {party} accepted a value nobody elected"),
                );
            }
        }
    }
}

fn first_decision<'a>(ctx: &'a CheckCtx<'a>, log: &'a RunLog) -> Option<(u64, &'a Vec<u64>)> {
    honest_events(ctx, log).find_map(|(_, _, event)| match event {
        Event::Decided { view, value } => Some((*view, value)),
        _ => None,
    })
}

/// Agreement: all honest decisions carry one (view, value) pair, every
/// honest party decides in a drained run, and after the first commit
/// certificate no honest party echo-signs a different value in that view or
/// later (the safety sentinel).
fn agreement_checks(ctx: &CheckCtx, log: &RunLog, check: &mut RunCheck) {
    let mut decisions: Vec<(PartyId, u64, &Vec<u64>)> = Vec::new();
    for (_, party, event) in honest_events(ctx, log) {
        if let Event::Decided { view, value } = event {
            decisions.push((party, *view, value));
        }
    }
    if !log.metrics.budget_exhausted && decisions.len() < honest_count(ctx) {
        check.flag(
            "liveness",
            format!(
                "{}/{} honest parties decided",
                decisions.len(),
                honest_count(ctx)
            ),
        );
    }
    for pair in decisions.windows(2) {
        if pair[0].1 != pair[1].1 || pair[0].2 != pair[1].2 {
            check.flag(
                "agreement",
                format!(
                    "parties {} and {} decided differently",
                    pair[0].0, pair[1].0
                ),
            );
        }
    }
    check.decided_view = decisions.first().map(|(_, view, _)| *view);

    let commit = honest_events(ctx, log).find_map(|(seq, _, event)| match event {
        Event::CommitFormed { view, value } => Some((seq, *view, value)),
        _ => None,
    });
    if let Some((commit_seq, commit_view, commit_value)) = commit {
        for (seq, party, event) in honest_events(ctx, log) {
            if let Event::EchoSigned { view, value } = event {
                if seq > commit_seq && *view >= commit_view && value != commit_value {
                    check.flag(
                        "sentinel",
                        format!("party {party} echoed a rival value in view {view}"),
                    );
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msg::InstanceTag;
    use crate::simnet::{EventRec, RunLog, RunMetrics};

    fn empty_log(done: bool) -> RunLog {
        RunLog {
            metrics: RunMetrics {
                protocol: "nwh".into(),
                n: 4,
                f: 1,
                seed: 0,
                sent: 0,
                delivered: 0,
                dropped: 0,
                words_total: 0,
                words_by_path: Default::default(),
                max_depth: 0,
                budget_exhausted: false,
                honest_done: done,
            },
            events: Vec::new(),
            trace: Vec::new(),
        }
    }

    fn push(log: &mut RunLog, party: usize, event: Event) {
        let seq = log.events.len() as u64;
        log.events.push(EventRec {
            seq,
            party: PartyId(party),
            event,
        });
    }

    fn ctx<'a>(
        crypto: &'a CryptoSuite,
        honest: &'a [bool],
        inputs: &'a [Vec<u64>],
        protocol: Protocol,
    ) -> CheckCtx<'a> {
        CheckCtx {
            protocol,
            n: 4,
            f: 1,
            crypto,
            honest,
            inputs,
            dealer: None,
        }
    }

    #[test]
    fn sentinel_catches_late_rival_echoes() {
        let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"checks").unwrap();
        let honest = [true; 4];
        let inputs: Vec<Vec<u64>> = (0..4).map(|i| vec![100 + i as u64]).collect();
        let _ = InstanceTag::root(Protocol::Nwh, 0);

        let mut log = empty_log(true);
        push(
            &mut log,
            0,
            Event::CommitFormed {
                view: 2,
                value: vec![100],
            },
        );
        push(
            &mut log,
            1,
            Event::EchoSigned {
                view: 2,
                value: vec![103],
            },
        );
        for p in 0..4 {
            push(
                &mut log,
                p,
                Event::Decided {
                    view: 2,
                    value: vec![100],
                },
            );
        }
        let check = check_run(&ctx(&crypto, &honest, &inputs, Protocol::Nwh), &log);
        assert_eq!(check.violations.len(), 1, "{:?}", check.violations);
        assert!(check.violations[0].starts_with("sentinel"));
        assert_eq!(check.decided_view, Some(2));
    }

    #[test]
    fn earlier_view_echoes_do_not_trip_the_sentinel() {
        let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"checks").unwrap();
        let honest = [true; 4];
        let inputs: Vec<Vec<u64>> = (0..4).map(|i| vec![100 + i as u64]).collect();

        let mut log = empty_log(true);
        push(
            &mut log,
            0,
            Event::CommitFormed {
                view: 3,
                value: vec![100],
            },
        );
        // A rival echo in an older view is allowed.
        push(
            &mut log,
            1,
            Event::EchoSigned {
                view: 2,
                value: vec![103],
            },
        );
        for p in 0..4 {
            push(
                &mut log,
                p,
                Event::Decided {
                    view: 3,
                    value: vec![100],
                },
            );
        }
        let check = check_run(&ctx(&crypto, &honest, &inputs, Protocol::Nwh), &log);
        assert!(check.violations.is_empty(), "{:?}", check.violations);
    }

    #[test]
    fn disagreement_and_foreign_values_are_flagged() {
        let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"checks").unwrap();
        let honest = [true; 4];
        let inputs: Vec<Vec<u64>> = (0..4).map(|i| vec![100 + i as u64]).collect();

        let mut log = empty_log(true);
        for p in 0..4 {
            push(
                &mut log,
                p,
                Event::Decided {
                    view: 1,
                    value: vec![if p == 3 { 999 } else { 100 }],
                },
            );
        }
        let check = check_run(&ctx(&crypto, &honest, &inputs, Protocol::Nwh), &log);
        assert!(check.violations.iter().any(|v| v.starts_with("agreement")));

        let mut log = empty_log(true);
        for p in 0..4 {
            push(
                &mut log,
                p,
                Event::Decided {
                    view: 1,
                    value: vec![999],
                },
            );
        }
        let check = check_run(&ctx(&crypto, &honest, &inputs, Protocol::Nwh), &log);
        assert!(check.violations.iter().any(|v| v.starts_with("validity")));
    }

    #[test]
    fn broadcast_totality_requires_all_or_none() {
        let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"checks").unwrap();
        let honest = [false, true, true, true];
        let inputs: Vec<Vec<u64>> = vec![vec![7; 3]; 4];
        let mut c = ctx(&crypto, &honest, &inputs, Protocol::Rb);
        c.dealer = Some(PartyId(0));

        let mut log = empty_log(false);
        push(&mut log, 1, Event::RbDelivered { words: vec![7; 3] });
        push(&mut log, 2, Event::RbDelivered { words: vec![7; 3] });
        let check = check_run(&c, &log);
        assert!(check.violations.iter().any(|v| v.starts_with("totality")));

        let mut log = empty_log(false);
        for p in 1..4 {
            push(&mut log, p, Event::RbDelivered { words: vec![7; 3] });
        }
        let check = check_run(&c, &log);
        assert!(check.violations.is_empty(), "{:?}", check.violations);
    }

    #[test]
    fn election_probe_acceptance_is_a_binding_violation() {
        let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"checks").unwrap();
        let honest = [true; 4];
        let inputs: Vec<Vec<u64>> = (0..4).map(|i| vec![100 + i as u64]).collect();

        let mut log = empty_log(true);
        for p in 0..4 {
            push(
                &mut log,
                p,
                Event::PeOutput {
                    value: vec![101],
                    indices: vec![PartyId(0)],
                },
            );
        }
        push(
            &mut log,
            2,
            Event::PeVerified {
                claimer: PartyId(1),
                value: vec![101],
                probe: true,
            },
        );
        let check = check_run(&ctx(&crypto, &honest, &inputs, Protocol::Pe), &log);
        assert_eq!(check.unanimous, Some(true));
        assert_eq!(check.honest_value, Some(true));
        assert!(check.violations.iter().any(|v| v.starts_with("binding")));
    }
}
