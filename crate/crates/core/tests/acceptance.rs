//! Acceptance gates for the full stack. Each test covers one release
//! criterion, prints a single pass/fail verdict line, and pins its
//! thresholds as constants next to the logic that enforces them.

use adkg_sim::adversary::AdversaryKind;
use adkg_sim::crypto::{
    transcript_from_words, vc_commit, vc_open_prove, vc_open_verify, CryptoSuite,
};
use adkg_sim::field::{self, chunk_len, encode_chunks, interpolate};
use adkg_sim::msg::Event;
use adkg_sim::scenario::{Scenario, ScenarioConfig};
use adkg_sim::stats::{log_log_slope, StatsError};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn verdict(name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {name}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{name}: {detail}");
}

fn base(protocol: &str, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        protocol: protocol.to_string(),
        n,
        f: None,
        lambda: None,
        budget: None,
        session: None,
        dealer: None,
        msg_words: None,
        inputs: None,
        adversary: None,
        corrupt: None,
        scheduler: None,
        scheduler_target: None,
        scheduler_weight: None,
    }
}

fn resolve(cfg: ScenarioConfig) -> Scenario {
    cfg.resolve().expect("acceptance scenario must be valid")
}

/// Broadcast safety: across committee sizes, dealer corruption, and silent
/// parties, agreement, validity, and totality never break.
#[test]
fn criterion_1_broadcast_suite_is_safe_under_dealer_and_silence() {
    const SEEDS: u64 = 200;
    const MAX_SECS: u64 = 120;
    let t0 = Instant::now();
    let mut runs = 0usize;
    let mut violations = Vec::new();
    for protocol in ["rb", "vrb"] {
        for n in [4usize, 7, 10] {
            let f = (n - 1) / 3;
            for mode in ["honest", "bad_dealer", "silent"] {
                let mut cfg = base(protocol, n);
                match mode {
                    "honest" => {}
                    "bad_dealer" => {
                        cfg.adversary = Some("bad_dealer".to_string());
                        cfg.corrupt = Some(vec![0]);
                    }
                    _ => {
                        cfg.adversary = Some("silent".to_string());
                        cfg.corrupt = Some((n - f..n).collect());
                    }
                }
                let scenario = resolve(cfg);
                for seed in 0..SEEDS {
                    let (_, check) = scenario.run(seed, false);
                    runs += 1;
                    for v in check.violations {
                        violations.push(format!("{protocol} n={n} {mode} seed {seed}: {v}"));
                    }
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs();
    verdict(
        "1 broadcast suite",
        violations.is_empty() && secs <= MAX_SECS,
        &format!(
            "{} runs, {} violations, {}s{}",
            runs,
            violations.len(),
            secs,
            violations
                .first()
                .map(|v| format!("; first: {v}"))
                .unwrap_or_default()
        ),
    );
}

/// Gather binding: honest outputs and every terminated verification share a
/// common core of at least `n - f` indices and agree on each common index.
#[test]
fn criterion_2_gather_outputs_share_a_binding_core() {
    const SEEDS: u64 = 50;
    const MIN_CORE: usize = 3;
    let mut violations = Vec::new();
    let mut min_core = usize::MAX;
    let mut runs = 0usize;
    for adversary in ["silent", "bad_dealer"] {
        let mut cfg = base("gather", 4);
        cfg.adversary = Some(adversary.to_string());
        cfg.corrupt = Some(vec![if adversary == "bad_dealer" { 0 } else { 3 }]);
        cfg.scheduler = Some("weighted".to_string());
        cfg.scheduler_target = Some(1);
        cfg.scheduler_weight = Some(0.05);
        let scenario = resolve(cfg);
        let honest = scenario.honest();
        for seed in 0..SEEDS {
            let (log, check) = scenario.run(seed, false);
            runs += 1;
            for v in check.violations {
                violations.push(format!("{adversary} seed {seed}: {v}"));
            }
            // Recompute the core directly: intersect every honest output
            // and every verification that terminated at an honest party.
            let mut sets: Vec<Vec<usize>> = Vec::new();
            for rec in &log.events {
                if !honest[rec.party.0] {
                    continue;
                }
                match &rec.event {
                    Event::GatherOutput { set } | Event::GatherVerified { set, .. } => {
                        sets.push(set.iter().map(|(k, _)| k.0).collect());
                    }
                    _ => {}
                }
            }
            if let Some((first, rest)) = sets.split_first() {
                let mut core = first.clone();
                for s in rest {
                    core.retain(|k| s.contains(k));
                }
                min_core = min_core.min(core.len());
            }
        }
    }
    verdict(
        "2 gather binding core",
        violations.is_empty() && min_core >= MIN_CORE,
        &format!(
            "{} runs, smallest core {}, {} violations",
            runs,
            min_core,
            violations.len()
        ),
    );
}

/// Election quality: under every adversary plugin the honest parties
/// unanimously elect an honest input at least 30% of the time, and no
/// verification ever accepts a value nobody elected.
#[test]
fn criterion_3_election_alpha_floor_and_binding() {
    const SEEDS: u64 = 1000;
    const ALPHA_FLOOR: f64 = 0.30;
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in AdversaryKind::all() {
        let mut cfg = base("pe", 4);
        cfg.adversary = Some(kind.name().to_string());
        cfg.corrupt = Some(vec![if kind == AdversaryKind::BadDealer {
            0
        } else {
            3
        }]);
        let scenario = resolve(cfg);
        let mut alpha_hits = 0usize;
        let mut violations = 0usize;
        for seed in 0..SEEDS {
            let (_, check) = scenario.run(seed, false);
            violations += check.violations.len();
            if check.unanimous == Some(true) && check.honest_value == Some(true) {
                alpha_hits += 1;
            }
        }
        let alpha = alpha_hits as f64 / SEEDS as f64;
        ok &= alpha >= ALPHA_FLOOR && violations == 0;
        detail.push(format!("{} α={:.3} v={}", kind.name(), alpha, violations));
    }
    verdict(
        "3 election alpha/binding",
        ok,
        &format!("floor {ALPHA_FLOOR}: {}", detail.join(", ")),
    );
}

/// Agreement suite: under every adversary plugin and two committee sizes,
/// no agreement, validity, or sentinel violation; views stay low.
#[test]
fn criterion_4_agreement_is_safe_and_fast_under_every_plugin() {
    const SEEDS: u64 = 500;
    const MEAN_VIEW_CAP: f64 = 4.3;
    const MAX_VIEW_CAP: u64 = 25;
    let mut violations = Vec::new();
    let mut views: Vec<u64> = Vec::new();
    let mut runs = 0usize;
    for n in [4usize, 7] {
        let f = (n - 1) / 3;
        for kind in AdversaryKind::all() {
            let mut cfg = base("nwh", n);
            cfg.adversary = Some(kind.name().to_string());
            cfg.corrupt = Some((n - f..n).collect());
            let scenario = resolve(cfg);
            for seed in 0..SEEDS {
                let (log, check) = scenario.run(seed, false);
                runs += 1;
                for v in check.violations {
                    violations.push(format!("{} n={n} seed {seed}: {v}", kind.name()));
                }
                if !log.metrics.budget_exhausted {
                    if let Some(view) = check.decided_view {
                        views.push(view);
                    }
                }
            }
        }
    }
    let mean = views.iter().sum::<u64>() as f64 / views.len().max(1) as f64;
    let max = views.iter().copied().max().unwrap_or(0);
    let ok = violations.is_empty() && mean <= MEAN_VIEW_CAP && max <= MAX_VIEW_CAP;
    verdict(
        "4 agreement suite",
        ok,
        &format!(
            "{} runs, {} violations, mean view {:.2} (cap {MEAN_VIEW_CAP}), max view {} (cap {MAX_VIEW_CAP}){}",
            runs,
            violations.len(),
            mean,
            max,
            violations
                .first()
                .map(|v| format!("; first: {v}"))
                .unwrap_or_default()
        ),
    );
}

/// Key generation end to end: every run ends with all parties holding one
/// identical verifying transcript with a contributor quorum.
#[test]
fn criterion_5_key_generation_converges_on_one_transcript() {
    const SEEDS: u64 = 200;
    let scenario = resolve(base("adkg", 4));
    let mut violations = Vec::new();
    let mut stalled = 0usize;
    let mut min_contributors = usize::MAX;
    for seed in 0..SEEDS {
        let (log, check) = scenario.run(seed, false);
        if !log.metrics.honest_done || log.metrics.budget_exhausted {
            stalled += 1;
        }
        for v in check.violations {
            violations.push(format!("seed {seed}: {v}"));
        }
        let decided = log.events.iter().find_map(|rec| match &rec.event {
            Event::Decided { value, .. } => Some(value.clone()),
            _ => None,
        });
        match decided.and_then(|words| transcript_from_words(&words)) {
            Some(t) => min_contributors = min_contributors.min(t.shares.len()),
            None => stalled += 1,
        }
    }
    let ok = violations.is_empty() && stalled == 0 && min_contributors >= 3;
    verdict(
        "5 key generation end-to-end",
        ok,
        &format!(
            "{} runs, {} stalled, min contributors {}, {} violations",
            SEEDS,
            stalled,
            min_contributors,
            violations.len()
        ),
    );
}

/// Complexity scaling: total word growth fits the expected power laws, and
/// a fit over a single size reports an error instead of a slope.
#[test]
fn criterion_6_word_complexity_scales_as_predicted() {
    const N_LIST: [usize; 4] = [4, 7, 10, 13];
    const SEEDS: u64 = 20;
    const ADKG_BAND: (f64, f64) = (2.6, 3.8);
    const RB_BAND: (f64, f64) = (1.7, 2.6);
    const MAX_SECS: u64 = 600;
    let t0 = Instant::now();
    let sweep = |protocol: &str| -> f64 {
        let mut points = Vec::new();
        for n in N_LIST {
            let scenario = resolve(base(protocol, n));
            for seed in 0..SEEDS {
                let (log, check) = scenario.run(seed, false);
                assert!(
                    check.violations.is_empty(),
                    "{protocol} n={n} seed {seed}: {:?}",
                    check.violations
                );
                points.push((n as f64, log.metrics.words_total as f64));
            }
        }
        log_log_slope(&points).expect("four sizes fitted")
    };
    let adkg_slope = sweep("adkg");
    let rb_slope = sweep("rb");
    let single: Vec<(f64, f64)> = (0..SEEDS).map(|s| (4.0, 1000.0 + s as f64)).collect();
    let single_n_errors = matches!(
        log_log_slope(&single),
        Err(StatsError::InsufficientPoints { needed: 3, got: 1 })
    );
    let secs = t0.elapsed().as_secs();
    let ok = (ADKG_BAND.0..=ADKG_BAND.1).contains(&adkg_slope)
        && (RB_BAND.0..=RB_BAND.1).contains(&rb_slope)
        && single_n_errors
        && secs <= MAX_SECS;
    verdict(
        "6 complexity scaling",
        ok,
        &format!(
            "adkg slope {:.2} in {:?}, rb slope {:.2} in {:?}, single-n errors: {}, {}s",
            adkg_slope, ADKG_BAND, rb_slope, RB_BAND, single_n_errors, secs
        ),
    );
}

/// Coding and commitment kernels: exact erasure decoding from any qualified
/// chunk subset, tamper-evident openings, and share-subset-independent
/// threshold evaluation.
#[test]
fn criterion_7_crypto_and_coding_kernels_hold() {
    const RS_PAIRS: usize = 1000;
    const VC_FLIPS: usize = 10_000;
    let mut rng = StdRng::seed_from_u64(0xACCE97);

    let mut rs_exact = 0usize;
    for _ in 0..RS_PAIRS {
        let n = *[4usize, 7, 10, 13].choose(&mut rng).unwrap();
        let f = (n - 1) / 3;
        let len = rng.gen_range(1..=48);
        let msg: Vec<u64> = (0..len).map(|_| rng.gen_range(0..field::P)).collect();
        let chunks = encode_chunks(&msg, n, f).unwrap();
        let c = chunk_len(len, f);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut points = Vec::new();
        for &j in order.iter().take(f + 1) {
            for (k, w) in chunks[j].iter().enumerate() {
                points.push(((j * c + k + 1) as u64, w.word()));
            }
        }
        points.shuffle(&mut rng);
        let poly = interpolate(&points, len - 1).unwrap();
        if poly.words_padded(len) == msg {
            rs_exact += 1;
        }
    }

    let mut vc_rejects = 0usize;
    let mut flips_done = 0usize;
    while flips_done < VC_FLIPS {
        let values: Vec<Vec<u8>> = (0..rng.gen_range(1..=12))
            .map(|_| (0..rng.gen_range(1..=24)).map(|_| rng.gen()).collect())
            .collect();
        let index = rng.gen_range(1..=values.len());
        let com = vc_commit(&values).unwrap();
        let proof = vc_open_prove(&values, index).unwrap();
        let value = values[index - 1].clone();
        assert!(
            vc_open_verify(&com, &value, index, &proof),
            "untampered opening must verify"
        );
        for _ in 0..20 {
            if flips_done == VC_FLIPS {
                break;
            }
            let proof_bits = proof.len() * 32 * 8;
            let bit = rng.gen_range(0..value.len() * 8 + proof_bits);
            let mut value = value.clone();
            let mut proof = proof.clone();
            if bit < value.len() * 8 {
                value[bit / 8] ^= 1 << (bit % 8);
            } else {
                let pbit = bit - value.len() * 8;
                proof[pbit / 256][(pbit / 8) % 32] ^= 1 << (pbit % 8);
            }
            if !vc_open_verify(&com, &value, index, &proof) {
                vc_rejects += 1;
            }
            flips_done += 1;
        }
    }

    let crypto = CryptoSuite::provider("sim-oracle", 4, 1, 128, b"kernel").unwrap();
    let keypairs: Vec<_> = (0..4)
        .map(|i| crypto.keypair(adkg_sim::PartyId(i)))
        .collect();
    let shares: Vec<_> = keypairs[..3]
        .iter()
        .map(|kp| crypto.dkg_sh(kp, &mut rng))
        .collect();
    let transcript = crypto.dkg_aggregate(&shares).unwrap();
    let mut subsets_equal = true;
    for trial in 0..20u64 {
        let domain = format!("domain-{trial}");
        let msg = format!("msg-{trial}");
        let evals: Vec<_> = keypairs
            .iter()
            .map(|kp| crypto.eval_sh(&transcript, kp, domain.as_bytes(), msg.as_bytes()))
            .collect();
        let mut reference = None;
        // Exhaustive over all share subsets of size >= f + 1 = 2.
        for mask in 0u32..16 {
            let subset: Vec<_> = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| evals[i].clone())
                .collect();
            if subset.len() < 2 {
                continue;
            }
            let evaluation = crypto
                .eval(&transcript, domain.as_bytes(), msg.as_bytes(), &subset)
                .unwrap();
            subsets_equal &=
                crypto.eval_verify(&transcript, domain.as_bytes(), msg.as_bytes(), &evaluation);
            match &reference {
                None => reference = Some(evaluation),
                Some(r) => subsets_equal &= *r == evaluation,
            }
        }
    }

    let ok = rs_exact == RS_PAIRS && vc_rejects == VC_FLIPS && subsets_equal;
    verdict(
        "7 crypto/coding kernels",
        ok,
        &format!(
            "erasure roundtrips {rs_exact}/{RS_PAIRS}, tamper rejects {vc_rejects}/{VC_FLIPS}, subset-independent: {subsets_equal}"
        ),
    );
}

/// Determinism: replaying any (scenario, seed) reproduces the trace,
/// events, and metrics byte for byte.
#[test]
fn criterion_8_replays_are_byte_identical() {
    let cases: Vec<(&str, Option<&str>, &str)> = vec![
        ("rb", None, "uniform"),
        ("vrb", Some("bad_dealer"), "uniform"),
        ("gather", Some("silent"), "weighted"),
        ("pe", Some("pe_withholder"), "uniform"),
        ("nwh", Some("nwh_equivocator"), "weighted"),
        ("adkg", Some("silent"), "uniform"),
    ];
    let mut compared = 0usize;
    for (protocol, adversary, scheduler) in cases {
        let mut cfg = base(protocol, 4);
        cfg.adversary = adversary.map(str::to_string);
        cfg.scheduler = Some(scheduler.to_string());
        cfg.scheduler_target = Some(2);
        cfg.scheduler_weight = Some(0.1);
        let scenario = resolve(cfg);
        for seed in [0u64, 17] {
            let (a, _) = scenario.run(seed, true);
            let (b, _) = scenario.run(seed, true);
            let bytes_a = serde_json::to_vec(&a).unwrap();
            let bytes_b = serde_json::to_vec(&b).unwrap();
            assert_eq!(bytes_a, bytes_b, "{protocol} seed {seed} replay diverged");
            compared += 1;
        }
    }
    verdict(
        "8 determinism",
        true,
        &format!("{compared} replays byte-identical"),
    );
}
