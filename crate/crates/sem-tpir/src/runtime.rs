//! Simulated replicated servers: message storage, deterministic answering,
//! full-session orchestration, and collusion views.
//!
//! Servers are pure functions of (store, received slots); the passive
//! adversary of the privacy model is a post-hoc view extractor over the
//! sealed transcript. Nothing here ever reads the target index — answering
//! has no way to receive it, which enforces obliviousness by construction.

use crate::decode::decode_iterations;
use crate::document::{decimal_string, int_strings, rational_string};
use crate::gf::PrimeField;
use crate::params::{compute_plan, ProblemSpec, SubpacketPlan};
use crate::scheme::{
    allocate_mds, build_ledger, build_queries, build_script, draw_scramblers, DecodingScript,
    QuerySet, QuerySlot, ServerSlots, SessionSecrets,
};
use crate::{derive_seed, Error, Rat, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Seed namespace for message generation (disjoint from iteration salts).
const SALT_MESSAGE: u64 = 0x4d53_4721 << 24;
/// Seed namespace for per-iteration scrambler draws.
const SALT_ITERATION: u64 = 0x4954_4552 << 24;

/// The replicated database: one vector of field elements per message, in
/// sorted (descending-length) message order, identical at every server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageStore {
    field: PrimeField,
    messages: Vec<Vec<u64>>,
}

impl MessageStore {
    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn message(&self, i: usize) -> &[u64] {
        &self.messages[i]
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn lengths(&self) -> Vec<u64> {
        self.messages.iter().map(|m| m.len() as u64).collect()
    }
}

/// Fills the store with i.i.d. uniform field elements, deterministically
/// per seed. Each message has its own derived stream, so a message's
/// content does not depend on the lengths of the messages before it.
pub fn generate_messages(spec: &ProblemSpec, seed: u64) -> MessageStore {
    let field = *spec.field();
    let messages = spec
        .lengths()
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, SALT_MESSAGE | i as u64));
            (0..len).map(|_| field.sample(&mut rng)).collect()
        })
        .collect();
    MessageStore { field, messages }
}

/// Computes one server's answers: for every slot, the sum over member
/// messages of ⟨coefficients, message sub-block⟩, where the sub-block is
/// the iteration's slice of that message. Pure in (store, slots); the
/// target index is not an input.
pub fn answer_query(store: &MessageStore, slots: &ServerSlots) -> Result<Vec<u64>> {
    let field = &store.field;
    let mut out = Vec::with_capacity(slots.slots.len());
    for slot in &slots.slots {
        let mut acc = 0u64;
        for (m, coeffs) in &slot.coeffs {
            let message = store.messages.get(*m).ok_or_else(|| {
                Error::DimensionMismatch(format!("slot references unknown message {m}"))
            })?;
            let width = coeffs.len();
            let start = slots.iteration * width;
            let block = message.get(start..start + width).ok_or_else(|| {
                Error::DimensionMismatch(format!(
                    "iteration {} block {start}..{} exceeds message {m} length {}",
                    slots.iteration,
                    start + width,
                    message.len()
                ))
            })?;
            acc = field.add(acc, field.dot(coeffs, block));
        }
        out.push(acc);
    }
    Ok(out)
}

/// One iteration's sealed record: the queries every server received and
/// the answers each returned (indexed `[server][slot]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub queries: QuerySet,
    pub answers: Vec<Vec<u64>>,
}

/// Everything one retrieval session produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub spec: ProblemSpec,
    /// Sorted message index of the retrieval target.
    pub theta: usize,
    pub seed: u64,
    pub script: DecodingScript,
    pub iterations: Vec<IterationRecord>,
    /// The decoded target message, all `L_theta` symbols.
    pub recovered: Vec<u64>,
    /// Total downloaded symbols across the session (`alpha * D`).
    pub downloads: u64,
    /// Measured session rate `L_theta / downloads`, exact.
    pub rate: Rat,
}

/// The per-iteration scrambler secrets a session derives from its seed.
/// Exposed so decoders and audits can re-derive them without replaying the
/// whole session.
pub fn session_secrets(
    plan: &SubpacketPlan,
    theta: usize,
    seed: u64,
) -> Result<Vec<SessionSecrets>> {
    (0..plan.alpha)
        .map(|r| draw_scramblers(plan, theta, derive_seed(seed, SALT_ITERATION | r)))
        .collect()
}

/// Runs a complete session: plan, draw fresh secrets per iteration, query,
/// answer, decode, and seal the transcript.
///
/// `theta` is the sorted message index; `(spec, theta, seed)` fully
/// determine the transcript. The store is generated from the same seed, so
/// exactness can be checked externally via [`generate_messages`].
pub fn run_session(spec: &ProblemSpec, theta: usize, seed: u64) -> Result<Transcript> {
    let plan = compute_plan(spec)?;
    if theta >= spec.message_count() {
        return Err(Error::InvalidSpec(format!(
            "theta {theta} out of range for {} messages",
            spec.message_count()
        )));
    }
    let ledger = build_ledger(&plan, theta)?;
    let allocation = allocate_mds(&plan, &ledger)?;
    let script = build_script(&plan, &ledger)?;
    let store = generate_messages(spec, seed);
    let secrets = session_secrets(&plan, theta, seed)?;
    let mut iterations = Vec::with_capacity(plan.alpha as usize);
    let mut answer_sets = Vec::with_capacity(plan.alpha as usize);
    for (r, s) in secrets.iter().enumerate() {
        let queries = build_queries(&plan, &ledger, &allocation, s, r, None)?;
        let answers: Vec<Vec<u64>> = queries
            .servers
            .par_iter()
            .map(|sv| answer_query(&store, sv))
            .collect::<Result<_>>()?;
        answer_sets.push(answers.clone());
        iterations.push(IterationRecord {
            iteration: r,
            queries,
            answers,
        });
    }
    let recovered = decode_iterations(&plan, &script, &allocation, &secrets, &answer_sets)?;
    let downloads: u64 = iterations
        .iter()
        .flat_map(|it| it.answers.iter())
        .map(|a| a.len() as u64)
        .sum();
    if downloads != plan.session_download() {
        return Err(Error::Internal(format!(
            "session downloaded {downloads} symbols, plan says {}",
            plan.session_download()
        )));
    }
    let rate = Rat::new(spec.lengths()[theta].into(), downloads.into());
    Ok(Transcript {
        spec: spec.clone(),
        theta,
        seed,
        script,
        iterations,
        recovered: recovered.symbols,
        downloads,
        rate,
    })
}

/// What a coalition of exactly `T` servers jointly observes: the multiset
/// of received slots with full coefficient vectors, tagged by server and
/// iteration. Answers are excluded — they are functions of the queries and
/// the public store, so they add nothing to the query-privacy statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollusionView {
    pub coalition: Vec<usize>,
    /// `(server, iteration, slot)` in deterministic order.
    pub slots: Vec<(usize, usize, QuerySlot)>,
}

pub fn collude_view(transcript: &Transcript, coalition: &[usize]) -> Result<CollusionView> {
    let t = transcript.spec.collusion();
    let n = transcript.spec.servers();
    let mut sorted = coalition.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != coalition.len() || sorted.len() != t {
        return Err(Error::InvalidSpec(format!(
            "coalition must be {t} distinct servers, got {coalition:?}"
        )));
    }
    if sorted.iter().any(|&s| s >= n) {
        return Err(Error::InvalidSpec(format!(
            "coalition member out of range 0..{n}: {coalition:?}"
        )));
    }
    let mut slots = Vec::new();
    for it in &transcript.iterations {
        for sv in &it.queries.servers {
            if sorted.binary_search(&sv.server).is_ok() {
                for slot in &sv.slots {
                    slots.push((sv.server, it.iteration, slot.clone()));
                }
            }
        }
    }
    Ok(CollusionView {
        coalition: sorted,
        slots,
    })
}

fn slot_value(server: usize, slot: &QuerySlot) -> Value {
    json!({
        "server": server.to_string(),
        "subset": format!("{:?}", slot.subset),
        "coeffs": slot
            .coeffs
            .iter()
            .map(|(m, values)| {
                json!({
                    // 1-based to match the subset notation.
                    "message": (m + 1).to_string(),
                    "values": int_strings(values),
                })
            })
            .collect::<Vec<_>>(),
    })
}

/// Renders a transcript as a stable structured document: keys sorted,
/// every integer a decimal string, byte-identical across replays of the
/// same `(spec, theta, seed)`.
pub fn transcript_document(t: &Transcript) -> Value {
    let spec = &t.spec;
    // The spec is reported in canonical sorted order and theta as a
    // 1-based position within it.
    let iterations: Vec<Value> = t
        .iterations
        .iter()
        .map(|it| {
            json!({
                "iteration": it.iteration.to_string(),
                "slots": it
                    .queries
                    .servers
                    .iter()
                    .flat_map(|sv| sv.slots.iter().map(|s| slot_value(sv.server, s)))
                    .collect::<Vec<_>>(),
                "answers": it
                    .answers
                    .iter()
                    .map(|a| Value::Array(int_strings(a).into_iter().map(Value::String).collect()))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "spec": {
            "servers": spec.servers().to_string(),
            "collusion": spec.collusion().to_string(),
            "lengths": int_strings(spec.lengths()),
            "priors": spec.priors().iter().map(rational_string).collect::<Vec<_>>(),
            "field": spec.field().modulus().to_string(),
        },
        "theta": (t.theta + 1).to_string(),
        "seed": t.seed.to_string(),
        "iterations": iterations,
        "recovered": int_strings(&t.recovered),
        "downloads": t.downloads.to_string(),
        "rate": {
            "exact": rational_string(&t.rate),
            "decimal": decimal_string(&t.rate),
        },
    })
}
