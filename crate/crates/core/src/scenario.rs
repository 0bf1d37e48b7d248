//! Declarative experiment descriptions.
//!
//! A [`ScenarioConfig`] is what the configuration file deserializes into:
//! every field except `protocol` and `n` is optional. [`ScenarioConfig::resolve`]
//! fills in defaults, validates the committee shape, and produces a
//! [`Scenario`] that can run any number of seeds. One seed is one fully
//! deterministic execution: parties, corruption wrappers, crypto setup, and
//! the network schedule all derive from it.

use crate::adkg::{AdkgConfig, AdkgMachine};
use crate::adversary::{AdversaryKind, CorruptMachine};
use crate::checks::{check_run, CheckCtx, RunCheck};
use crate::crypto::CryptoSuite;
use crate::field;
use crate::gather::{GatherConfig, GatherMachine};
use crate::msg::{InstanceTag, Protocol};
use crate::nwh::{NwhConfig, NwhMachine};
use crate::pe::{PeConfig, PeMachine};
use crate::rb::{RbConfig, RbMachine, MAX_MSG_WORDS};
use crate::simnet::{self, Machine, RunLog, SchedulerKind, DEFAULT_BUDGET};
use crate::validity::Validity;
use crate::PartyId;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown protocol `{0}` (expected rb, vrb, gather, pe, nwh, or adkg)")]
    UnknownProtocol(String),
    #[error("committee of {n} tolerates at most {} faults, got f = {f}", (n - 1) / 3)]
    CommitteeTooSmall { n: usize, f: usize },
    #[error("security parameter {lambda} below the floor {floor} for n = {n}")]
    LambdaTooSmall { lambda: u32, floor: u32, n: usize },
    #[error("crypto error: {0}")]
    Crypto(#[from] crate::crypto::CryptoError),
    #[error("dealer index {0} out of range")]
    DealerOutOfRange(usize),
    #[error("expected {n} input vectors, got {got}")]
    InputCount { n: usize, got: usize },
    #[error("input for party {0} is {1}")]
    BadInput(usize, String),
    #[error("unknown adversary `{0}` (expected silent, bad_dealer, pe_withholder, nwh_equivocator, or stale_blamer)")]
    UnknownAdversary(String),
    #[error("corrupt party {0} out of range")]
    CorruptOutOfRange(usize),
    #[error("{got} corrupt parties exceed the fault budget f = {f}")]
    TooManyCorrupt { got: usize, f: usize },
    #[error("corrupt list given without an adversary kind")]
    CorruptWithoutAdversary,
    #[error("unknown scheduler `{0}` (expected uniform, fifo, or weighted)")]
    UnknownScheduler(String),
    #[error("scheduler target {0} out of range")]
    SchedulerTargetOutOfRange(usize),
    #[error("scheduler weight {0} must be finite and non-negative")]
    BadSchedulerWeight(f64),
    #[error("configuration is not valid TOML: {0}")]
    Toml(String),
}

/// On-disk experiment description. Optional fields default in `resolve`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// One of `rb`, `vrb`, `gather`, `pe`, `nwh`, `adkg`.
    pub protocol: String,
    /// Committee size.
    pub n: usize,
    /// Fault tolerance; defaults to the maximum `(n - 1) / 3`.
    pub f: Option<usize>,
    /// Security parameter in bits; defaults to 128 and must stay at or
    /// above `3 * log2(n)`.
    pub lambda: Option<u32>,
    /// Delivery budget per run; exhausting it marks the run inconclusive.
    pub budget: Option<u64>,
    /// Session number folded into every instance tag.
    pub session: Option<u32>,
    /// Broadcasting party for `rb`/`vrb`; defaults to party 0.
    pub dealer: Option<usize>,
    /// Length of the generated broadcast payload when `inputs` is omitted.
    pub msg_words: Option<usize>,
    /// Per-party input words; defaults to small distinct values.
    pub inputs: Option<Vec<Vec<u64>>>,
    /// Adversary plugin applied to the corrupt parties.
    pub adversary: Option<String>,
    /// Corrupt party indices; defaults to the dealer for `bad_dealer` and
    /// to the highest index otherwise.
    pub corrupt: Option<Vec<usize>>,
    /// One of `uniform`, `fifo`, `weighted`.
    pub scheduler: Option<String>,
    /// Party whose deliveries the `weighted` scheduler deprioritizes.
    pub scheduler_target: Option<usize>,
    /// Selection weight for the target's envelopes; 0 starves it outright.
    pub scheduler_weight: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Toml(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// A complete configuration with every default written out.
    pub fn reference() -> ScenarioConfig {
        let n = 4;
        ScenarioConfig {
            protocol: "adkg".to_string(),
            n,
            f: Some((n - 1) / 3),
            lambda: Some(128),
            budget: Some(DEFAULT_BUDGET),
            session: Some(0),
            dealer: Some(0),
            msg_words: Some(8),
            inputs: Some(default_inputs(Protocol::Adkg, n, 8)),
            adversary: None,
            corrupt: None,
            scheduler: Some("uniform".to_string()),
            scheduler_target: Some(0),
            scheduler_weight: Some(0.25),
        }
    }

    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        let protocol = Protocol::parse(&self.protocol)
            .ok_or_else(|| ScenarioError::UnknownProtocol(self.protocol.clone()))?;
        let n = self.n;
        let f = self.f.unwrap_or(if n >= 4 { (n - 1) / 3 } else { 0 });
        if n < 3 * f + 1 || n == 0 {
            return Err(ScenarioError::CommitteeTooSmall { n, f });
        }
        let floor = lambda_floor(n);
        let lambda = self.lambda.unwrap_or_else(|| floor.max(128));
        if lambda < floor {
            return Err(ScenarioError::LambdaTooSmall { lambda, floor, n });
        }
        // Surface range errors (e.g. lambda > 256) at resolve time rather
        // than on the first run.
        CryptoSuite::provider("sim-oracle", n, f, lambda, b"probe")?;
        let dealer = self.dealer.unwrap_or(0);
        if dealer >= n {
            return Err(ScenarioError::DealerOutOfRange(dealer));
        }
        let msg_words = self.msg_words.unwrap_or(8).clamp(1, MAX_MSG_WORDS);
        let inputs = match &self.inputs {
            Some(given) => {
                if given.len() != n {
                    return Err(ScenarioError::InputCount {
                        n,
                        got: given.len(),
                    });
                }
                for (i, words) in given.iter().enumerate() {
                    if words.is_empty() {
                        return Err(ScenarioError::BadInput(i, "empty".to_string()));
                    }
                    if words.len() > MAX_MSG_WORDS {
                        return Err(ScenarioError::BadInput(i, "too long".to_string()));
                    }
                    if let Some(w) = words.iter().find(|w| **w >= field::P) {
                        return Err(ScenarioError::BadInput(
                            i,
                            format!("word {w} exceeds the field modulus"),
                        ));
                    }
                }
                given.clone()
            }
            None => default_inputs(protocol, n, msg_words),
        };
        let adversary = match &self.adversary {
            Some(name) => Some(
                AdversaryKind::parse(name)
                    .ok_or_else(|| ScenarioError::UnknownAdversary(name.clone()))?,
            ),
            None => None,
        };
        let corrupt: BTreeSet<usize> = match (&adversary, &self.corrupt) {
            (None, None) => BTreeSet::new(),
            (None, Some(list)) if list.is_empty() => BTreeSet::new(),
            (None, Some(_)) => return Err(ScenarioError::CorruptWithoutAdversary),
            (Some(kind), None) => match kind {
                AdversaryKind::BadDealer => [dealer].into(),
                _ => [n - 1].into(),
            },
            (Some(_), Some(list)) => list.iter().copied().collect(),
        };
        if let Some(&bad) = corrupt.iter().find(|i| **i >= n) {
            return Err(ScenarioError::CorruptOutOfRange(bad));
        }
        if corrupt.len() > f {
            return Err(ScenarioError::TooManyCorrupt {
                got: corrupt.len(),
                f,
            });
        }
        let scheduler = match self.scheduler.as_deref().unwrap_or("uniform") {
            "uniform" => SchedulerKind::Uniform,
            "fifo" => SchedulerKind::Fifo,
            "weighted" => {
                let target = self.scheduler_target.unwrap_or(0);
                if target >= n {
                    return Err(ScenarioError::SchedulerTargetOutOfRange(target));
                }
                let weight = self.scheduler_weight.unwrap_or(0.25);
                if !weight.is_finite() || weight < 0.0 {
                    return Err(ScenarioError::BadSchedulerWeight(weight));
                }
                SchedulerKind::DelayWeighted {
                    target: PartyId(target),
                    weight,
                }
            }
            other => return Err(ScenarioError::UnknownScheduler(other.to_string())),
        };
        Ok(Scenario {
            protocol,
            n,
            f,
            lambda,
            budget: self.budget.unwrap_or(DEFAULT_BUDGET),
            session: self.session.unwrap_or(0),
            dealer: PartyId(dealer),
            inputs,
            adversary,
            corrupt,
            scheduler,
        })
    }
}

/// Smallest admissible security parameter for a committee of `n`.
pub fn lambda_floor(n: usize) -> u32 {
    (3.0 * (n.max(2) as f64).log2()).ceil() as u32
}

fn default_inputs(protocol: Protocol, n: usize, msg_words: usize) -> Vec<Vec<u64>> {
    match protocol {
        Protocol::Rb | Protocol::Vrb => (0..n)
            .map(|i| (0..msg_words).map(|k| (100 + i + k) as u64).collect())
            .collect(),
        _ => (0..n).map(|i| vec![100 + i as u64]).collect(),
    }
}

/// A validated experiment, ready to run seeds.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub lambda: u32,
    pub budget: u64,
    pub session: u32,
    pub dealer: PartyId,
    pub inputs: Vec<Vec<u64>>,
    pub adversary: Option<AdversaryKind>,
    pub corrupt: BTreeSet<usize>,
    pub scheduler: SchedulerKind,
}

impl Scenario {
    pub fn honest(&self) -> Vec<bool> {
        (0..self.n).map(|i| !self.corrupt.contains(&i)).collect()
    }

    /// Executes one seed and evaluates every property check against it.
    pub fn run(&self, seed: u64, trace: bool) -> (RunLog, RunCheck) {
        let crypto = Rc::new(self.crypto(seed));
        let honest = self.honest();
        let mut machines: Vec<Box<dyn Machine>> = (0..self.n)
            .map(|i| self.build_party(PartyId(i), &crypto, seed))
            .collect();
        let log = simnet::run(
            self.protocol.name(),
            self.n,
            self.f,
            seed,
            &mut machines,
            &honest,
            self.scheduler,
            self.budget,
            trace,
        );
        let ctx = CheckCtx {
            protocol: self.protocol,
            n: self.n,
            f: self.f,
            crypto: &crypto,
            honest: &honest,
            inputs: &self.inputs,
            dealer: match self.protocol {
                Protocol::Rb | Protocol::Vrb => Some(self.dealer),
                _ => None,
            },
        };
        let check = check_run(&ctx, &log);
        (log, check)
    }

    fn crypto(&self, seed: u64) -> CryptoSuite {
        let mut setup = [0u8; 12];
        setup[..8].copy_from_slice(&seed.to_le_bytes());
        setup[8..].copy_from_slice(&self.session.to_le_bytes());
        CryptoSuite::provider("sim-oracle", self.n, self.f, self.lambda, &setup)
            .expect("validated at resolve time")
    }

    fn build_party(&self, me: PartyId, crypto: &Rc<CryptoSuite>, seed: u64) -> Box<dyn Machine> {
        let tag = InstanceTag::root(self.protocol, self.session);
        let kp = crypto.keypair(me);
        // Each party draws protocol randomness from its own stream; the
        // multiplier keeps streams apart across both party and seed.
        let rng = ChaCha20Rng::seed_from_u64(
            seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(me.0 as u64),
        );
        let inner: Box<dyn Machine> = match self.protocol {
            Protocol::Rb | Protocol::Vrb => {
                let validity = match self.protocol {
                    Protocol::Rb => Validity::MaxLen(MAX_MSG_WORDS),
                    _ => Validity::Any,
                };
                let input = (me == self.dealer).then(|| self.inputs[self.dealer.0].clone());
                Box::new(RbMachine::new(
                    RbConfig {
                        n: self.n,
                        f: self.f,
                        me,
                        dealer: self.dealer,
                        tag,
                    },
                    crypto.clone(),
                    validity,
                    input,
                ))
            }
            Protocol::Gather => Box::new(GatherMachine::new(
                crypto.clone(),
                GatherConfig {
                    n: self.n,
                    f: self.f,
                    me,
                    tag,
                },
                Validity::Any,
                self.inputs[me.0].clone(),
            )),
            Protocol::Pe => Box::new(PeMachine::new(
                PeConfig {
                    n: self.n,
                    f: self.f,
                    me,
                    tag,
                },
                crypto.clone(),
                kp.clone(),
                Validity::Any,
                self.inputs[me.0].clone(),
                rng,
            )),
            Protocol::Nwh => Box::new(NwhMachine::new(
                NwhConfig {
                    n: self.n,
                    f: self.f,
                    me,
                    tag,
                },
                crypto.clone(),
                kp.clone(),
                Validity::Any,
                self.inputs[me.0].clone(),
                rng,
            )),
            Protocol::Adkg => Box::new(AdkgMachine::new(
                AdkgConfig {
                    n: self.n,
                    f: self.f,
                    me,
                    tag,
                },
                crypto.clone(),
                kp.clone(),
                rng,
            )),
        };
        match (self.adversary, self.corrupt.contains(&me.0)) {
            (Some(kind), true) => Box::new(CorruptMachine::new(
                kind,
                crypto.clone(),
                kp,
                self.n,
                self.f,
                inner,
            )),
            _ => inner,
        }
    }
}
