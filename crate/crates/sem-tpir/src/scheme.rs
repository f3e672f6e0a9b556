//! Query synthesis for one retrieval session.
//!
//! For a fixed plan and target `theta` the scheme is organized around the
//! nonempty subsets `S` of message indices, visited in size-then-lex order:
//!
//! * every subset downloads `c_S = ((N-T)/T)^(|S|-1) * min(nu_S)` slots per
//!   server, a count that does not depend on `theta` — that invariance *is*
//!   the structural privacy property;
//! * a subset without `theta` is pure interference: each member contributes
//!   a fresh segment of its scrambled message, all members share one MDS
//!   generator (sums of same-generator codewords are again codewords, which
//!   is what the decoder later completes), and each slot downloads one
//!   coordinate of the summed codeword;
//! * a subset with `theta` pairs one fresh `W'_theta` symbol with one parity
//!   coordinate of the subset-minus-theta codeword, sized so the parities
//!   are consumed exactly.
//!
//! Coefficient rows visible to servers are always composites through the
//! per-message scramblers; raw generator rows never leave the user.

use crate::gf::{Matrix, PrimeField};
use crate::mds::{build_mds, MdsGenerator};
use crate::params::SubpacketPlan;
use crate::{derive_seed, Error, Int, Rat, Result};
use num::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A set of message indices, stored as a bitmask (at most 32 messages).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(u32);

impl Subset {
    pub fn empty() -> Self {
        Subset(0)
    }

    pub fn singleton(i: usize) -> Self {
        Subset(1 << i)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(&self, i: usize) -> Self {
        Subset(self.0 | 1 << i)
    }

    pub fn without(&self, i: usize) -> Self {
        Subset(self.0 & !(1 << i))
    }

    /// Number of members (the subset's level).
    pub fn level(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |&i| self.contains(i))
    }

    pub fn mask(&self) -> u32 {
        self.0
    }

    /// All nonempty subsets of `0..k` in canonical size-then-lex order.
    pub fn enumerate(k: usize) -> Vec<Subset> {
        let mut all: Vec<Subset> = (1u32..1 << k).map(Subset).collect();
        all.sort_by_key(|s| (s.level(), s.0));
        all
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based members, the convention of every user-facing surface.
        let ids: Vec<String> = self.members().map(|i| (i + 1).to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Test hooks that deliberately break the scheme; used by the audit to
/// prove it can detect a dishonest planner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutant {
    /// Downloads one extra `theta` singleton per server. Slot counts then
    /// depend on `theta`, which the structural check must catch.
    ExtraSingleton,
    /// Sends raw generator rows for interference messages instead of
    /// scrambler composites. Shape-invariant, but the coefficient
    /// distribution now depends on `theta`; the statistical check must
    /// catch it.
    UnscrambledInterference,
}

/// How one ledger entry sources its symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// `theta` not in S: fresh coded symbols of every member through a
    /// shared generator of shape `length x dimension`.
    Interference {
        dimension: usize,
        length: usize,
        /// `(message, start)` of each member's fresh range in its `W'`;
        /// every range is `dimension` symbols long.
        ranges: Vec<(usize, usize)>,
    },
    /// `theta` in S: fresh `W'_theta` symbols (a `N*c_S` range starting at
    /// `theta_start`), each summed with one parity coordinate of the
    /// subset-minus-theta codeword.
    Retrieval {
        theta_start: usize,
        /// `None` for the `theta` singleton (raw scrambled symbols).
        parity_source: Option<Subset>,
    },
}

/// One subset's row in the combination ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub subset: Subset,
    pub level: usize,
    /// Slots per server (`c_S`); entries with zero count are absent.
    pub per_server: u64,
    pub kind: EntryKind,
}

/// Complete per-iteration download layout for one `theta`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombinationLedger {
    pub theta: usize,
    pub servers: usize,
    pub entries: Vec<LedgerEntry>,
    /// Fresh `W'_theta` symbols per iteration; always equals `U_theta`.
    pub fresh_theta: usize,
}

impl CombinationLedger {
    pub fn entry(&self, subset: Subset) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.subset == subset)
    }

    /// `(subset, slots per server)` rows in canonical order.
    pub fn per_server_counts(&self) -> Vec<(Subset, u64)> {
        self.entries
            .iter()
            .map(|e| (e.subset, e.per_server))
            .collect()
    }

    /// Slots per server across all subsets (`D / N`).
    pub fn slots_per_server(&self) -> usize {
        self.entries.iter().map(|e| e.per_server as usize).sum()
    }
}

fn rat_u(v: u64) -> Rat {
    Rat::from_integer(Int::from(v))
}

/// `c_S` for every nonempty subset, exactly; fractional counts are the
/// plan-corruption case (possible only when gcd(N, T) > 1 and T does not
/// divide N — no lift can repair it because `nu` is scale-invariant).
fn subset_counts(plan: &SubpacketPlan) -> Result<BTreeMap<Subset, u64>> {
    let n = plan.spec.servers();
    let t = plan.spec.collusion();
    let k = plan.spec.message_count();
    let ratio = Rat::new(Int::from(n - t), Int::from(t));
    let mut counts = BTreeMap::new();
    for subset in Subset::enumerate(k) {
        let min_nu = subset.members().map(|i| plan.nu[i]).min().unwrap_or(0);
        let mut c = rat_u(min_nu);
        for _ in 1..subset.level() {
            c *= &ratio;
        }
        if !c.is_integer() {
            return Err(Error::PlanCorruption(format!(
                "subset {subset:?} wants {c} slots per server, which is not an integer \
                 (N={n}, T={t}, nu={:?})",
                plan.nu
            )));
        }
        let c = c
            .to_integer()
            .to_u64()
            .ok_or_else(|| Error::PlanCorruption(format!("slot count for {subset:?} overflows")))?;
        counts.insert(subset, c);
    }
    Ok(counts)
}

/// Builds the combination ledger for `theta` (a sorted message index).
pub fn build_ledger(plan: &SubpacketPlan, theta: usize) -> Result<CombinationLedger> {
    let k = plan.spec.message_count();
    if theta >= k {
        return Err(Error::InvalidSpec(format!(
            "theta {theta} out of range for {k} messages"
        )));
    }
    let n = plan.spec.servers();
    let counts = subset_counts(plan)?;
    let mut cursors = vec![0usize; k];
    let mut entries = Vec::new();
    for subset in Subset::enumerate(k) {
        let c = counts[&subset];
        if c == 0 {
            continue;
        }
        let slots = n * c as usize;
        let kind = if subset.contains(theta) {
            let theta_start = cursors[theta];
            cursors[theta] += slots;
            let source = subset.without(theta);
            EntryKind::Retrieval {
                theta_start,
                parity_source: (source != Subset::empty()).then_some(source),
            }
        } else {
            // Parities demanded by the subset-plus-theta retrieval entry.
            let parity = n * counts[&subset.with(theta)] as usize;
            let mut ranges = Vec::new();
            for m in subset.members() {
                ranges.push((m, cursors[m]));
                cursors[m] += slots;
            }
            EntryKind::Interference {
                dimension: slots,
                length: slots + parity,
                ranges,
            }
        };
        entries.push(LedgerEntry {
            subset,
            level: subset.level(),
            per_server: c,
            kind,
        });
    }
    // Interference may not overrun any message's sub-packet, and theta's
    // cursor must land exactly on U_theta; both are formula identities.
    for (m, &cursor) in cursors.iter().enumerate() {
        let budget = plan.u[m] as usize;
        if m == theta && cursor != budget {
            return Err(Error::Internal(format!(
                "theta cursor {cursor} != U_theta {budget}"
            )));
        }
        if m != theta && cursor > budget {
            return Err(Error::Internal(format!(
                "message {m} consumes {cursor} of only {budget} fresh symbols"
            )));
        }
    }
    let total: u64 = entries.iter().map(|e| n as u64 * e.per_server).sum();
    if total != plan.download {
        return Err(Error::Internal(format!(
            "ledger downloads {total} != plan download {}",
            plan.download
        )));
    }
    Ok(CombinationLedger {
        theta,
        servers: n,
        entries,
        fresh_theta: cursors[theta],
    })
}

/// One interference subset's shared generator plus member ranges.
#[derive(Clone, Debug)]
pub struct CodeAllocation {
    pub subset: Subset,
    pub level: usize,
    pub generator: Arc<MdsGenerator>,
    /// `(message, start)` fresh ranges, each `dimension` long.
    pub members: Vec<(usize, usize)>,
    /// The retrieval subset that consumes this code's parity coordinates.
    pub parity_consumer: Subset,
}

/// All MDS codes one `theta` needs, keyed by interference subset.
#[derive(Clone, Debug)]
pub struct MdsAllocation {
    pub theta: usize,
    pub codes: Vec<CodeAllocation>,
    index: BTreeMap<Subset, usize>,
}

impl MdsAllocation {
    pub fn code(&self, subset: Subset) -> Option<&CodeAllocation> {
        self.index.get(&subset).map(|&i| &self.codes[i])
    }

    /// Fresh symbols each (message, level) pair consumes; the counting
    /// audit reports these as consumed-versus-dimension figures.
    pub fn level_dimensions(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for code in &self.codes {
            for &(m, _) in &code.members {
                *out.entry((m, code.level)).or_insert(0) += code.generator.dimension();
            }
        }
        out
    }
}

/// Builds every generator the ledger references. Identical shapes reuse one
/// generator instance (construction is deterministic per shape anyway).
pub fn allocate_mds(plan: &SubpacketPlan, ledger: &CombinationLedger) -> Result<MdsAllocation> {
    let field = plan.spec.field();
    let mut cache: BTreeMap<(usize, usize), Arc<MdsGenerator>> = BTreeMap::new();
    let mut codes = Vec::new();
    let mut index = BTreeMap::new();
    for entry in &ledger.entries {
        let EntryKind::Interference {
            dimension,
            length,
            ref ranges,
        } = entry.kind
        else {
            continue;
        };
        let generator = match cache.get(&(length, dimension)) {
            Some(g) => Arc::clone(g),
            None => {
                let g = Arc::new(build_mds(length, dimension, field)?);
                cache.insert((length, dimension), Arc::clone(&g));
                g
            }
        };
        index.insert(entry.subset, codes.len());
        codes.push(CodeAllocation {
            subset: entry.subset,
            level: entry.level,
            generator,
            members: ranges.clone(),
            parity_consumer: entry.subset.with(ledger.theta),
        });
    }
    Ok(MdsAllocation {
        theta: ledger.theta,
        codes,
        index,
    })
}

/// Per-session randomness: one uniformly random invertible scrambler per
/// message, drawn by rejection so the distribution is exactly uniform over
/// the invertible group.
#[derive(Clone, Debug)]
pub struct SessionSecrets {
    pub theta: usize,
    pub seed: u64,
    /// `U_i x U_i` matrices, indexed by sorted message position.
    pub scramblers: Vec<Matrix>,
}

/// Retry cap for rejection sampling; exceeding it indicates a broken RNG or
/// field, not bad luck (failure probability is below 2^-64 for any p >= 2).
const SCRAMBLER_RETRY_CAP: usize = 64;

pub fn draw_scramblers(plan: &SubpacketPlan, theta: usize, seed: u64) -> Result<SessionSecrets> {
    let field = plan.spec.field();
    let mut scramblers = Vec::with_capacity(plan.u.len());
    for (i, &u) in plan.u.iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, i as u64));
        let dim = u as usize;
        let mut found = None;
        for _ in 0..SCRAMBLER_RETRY_CAP {
            let cand = Matrix::random(field, dim, dim, &mut rng);
            if cand.is_invertible(field) {
                found = Some(cand);
                break;
            }
        }
        scramblers.push(found.ok_or_else(|| {
            Error::Internal(format!(
                "no invertible {dim}x{dim} scrambler within {SCRAMBLER_RETRY_CAP} draws"
            ))
        })?);
    }
    Ok(SessionSecrets {
        theta,
        seed,
        scramblers,
    })
}

/// One download slot: the subset it belongs to and the coefficient row the
/// server applies to each member message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuerySlot {
    pub subset: Subset,
    /// `(message, coefficients)` pairs in ascending message order; each
    /// coefficient vector has length `U_message`.
    pub coeffs: Vec<(usize, Vec<u64>)>,
}

/// Everything sent to one server for one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerSlots {
    pub server: usize,
    pub iteration: usize,
    pub slots: Vec<QuerySlot>,
}

/// The queries of all servers for one iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuerySet {
    pub iteration: usize,
    pub servers: Vec<ServerSlots>,
}

/// Shape summary of a query set: slot count per (server, subset). Equal
/// digests across every `theta` is the structural privacy invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeDigest(Vec<(usize, u32, usize)>);

impl ShapeDigest {
    pub fn rows(&self) -> &[(usize, u32, usize)] {
        &self.0
    }
}

pub fn shape_digest(queries: &QuerySet) -> ShapeDigest {
    let mut counts: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    for server in &queries.servers {
        for slot in &server.slots {
            *counts
                .entry((server.server, slot.subset.mask()))
                .or_insert(0) += 1;
        }
    }
    ShapeDigest(counts.into_iter().map(|((s, m), c)| (s, m, c)).collect())
}

/// Reference to a slot in a query set (and to its answer).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotRef {
    pub server: usize,
    pub slot: usize,
}

/// One decoding action. Steps are topologically ordered: every parity a
/// `Peel` reads was completed by an earlier `Complete`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptStep {
    /// Solve the summed codeword of an interference subset from the listed
    /// `(coordinate, slot)` answers and retain all its coordinates.
    Complete {
        subset: Subset,
        known: Vec<(usize, SlotRef)>,
    },
    /// Recover `W'_theta[theta_index]` from a slot answer, subtracting the
    /// given coordinate of a completed codeword when a source is present.
    Peel {
        slot: SlotRef,
        theta_index: usize,
        source: Option<(Subset, usize)>,
    },
}

/// Iteration-independent decoding program for one `theta`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodingScript {
    pub theta: usize,
    /// Fresh `W'_theta` symbols per iteration (`U_theta`).
    pub fresh_per_iteration: usize,
    pub steps: Vec<ScriptStep>,
}

/// Slot index of `(entry, server, local slot)` given per-entry offsets.
fn slot_ref(offsets: &[usize], entry_idx: usize, per_server: u64, global: usize) -> SlotRef {
    let server = global / per_server as usize;
    SlotRef {
        server,
        slot: offsets[entry_idx] + (global % per_server as usize),
    }
}

/// Builds the decoding script implied by a ledger.
pub fn build_script(plan: &SubpacketPlan, ledger: &CombinationLedger) -> Result<DecodingScript> {
    // Offset of each entry's slots within any server's slot list.
    let mut offsets = Vec::with_capacity(ledger.entries.len());
    let mut acc = 0usize;
    for entry in &ledger.entries {
        offsets.push(acc);
        acc += entry.per_server as usize;
    }
    let dims: BTreeMap<Subset, usize> = ledger
        .entries
        .iter()
        .filter_map(|e| match e.kind {
            EntryKind::Interference { dimension, .. } => Some((e.subset, dimension)),
            _ => None,
        })
        .collect();
    let mut steps = Vec::new();
    let mut recovered = vec![false; plan.u[ledger.theta] as usize];
    for (idx, entry) in ledger.entries.iter().enumerate() {
        let slots = ledger.servers * entry.per_server as usize;
        match entry.kind {
            EntryKind::Interference { dimension, .. } => {
                let known = (0..dimension)
                    .map(|c| (c, slot_ref(&offsets, idx, entry.per_server, c)))
                    .collect();
                steps.push(ScriptStep::Complete {
                    subset: entry.subset,
                    known,
                });
            }
            EntryKind::Retrieval {
                theta_start,
                parity_source,
            } => {
                for g in 0..slots {
                    let theta_index = theta_start + g;
                    let flag = recovered.get_mut(theta_index).ok_or_else(|| {
                        Error::Internal(format!("theta index {theta_index} outside U_theta"))
                    })?;
                    if *flag {
                        return Err(Error::Internal(format!(
                            "theta index {theta_index} recovered twice"
                        )));
                    }
                    *flag = true;
                    let source = parity_source.map(|src| (src, dims[&src] + g));
                    steps.push(ScriptStep::Peel {
                        slot: slot_ref(&offsets, idx, entry.per_server, g),
                        theta_index,
                        source,
                    });
                }
            }
        }
    }
    if recovered.iter().any(|&r| !r) {
        return Err(Error::Internal(
            "script does not cover all of W'_theta".into(),
        ));
    }
    Ok(DecodingScript {
        theta: ledger.theta,
        fresh_per_iteration: recovered.len(),
        steps,
    })
}

/// Row-parallel exact matrix product (used for the parity composites, the
/// one genuinely heavy step of query synthesis).
fn par_matmul(a: &Matrix, b: &Matrix, field: &PrimeField) -> Matrix {
    debug_assert_eq!(a.cols(), b.rows());
    let rows: Vec<Vec<u64>> = (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0u64; b.cols()];
            for l in 0..a.cols() {
                let f = a.get(i, l);
                if f == 0 {
                    continue;
                }
                for (dst, &s) in acc.iter_mut().zip(b.row(l)) {
                    *dst = field.mul_add(*dst, f, s);
                }
            }
            acc
        })
        .collect();
    Matrix::from_rows(rows).expect("rows are uniform by construction")
}

/// Builds one iteration's queries for every server.
///
/// `mutant` deliberately mis-builds the queries for audit-detection tests;
/// honest callers pass `None`.
pub fn build_queries(
    plan: &SubpacketPlan,
    ledger: &CombinationLedger,
    allocation: &MdsAllocation,
    secrets: &SessionSecrets,
    iteration: usize,
    mutant: Option<Mutant>,
) -> Result<QuerySet> {
    let field = plan.spec.field();
    let n = ledger.servers;
    let theta = ledger.theta;
    if secrets.theta != theta {
        return Err(Error::Internal(
            "secrets drawn for a different theta".into(),
        ));
    }
    for (m, s) in secrets.scramblers.iter().enumerate() {
        if s.rows() != plan.u[m] as usize {
            return Err(Error::DimensionMismatch(format!(
                "scrambler {m} is {}x{}, plan wants {}",
                s.rows(),
                s.cols(),
                plan.u[m]
            )));
        }
    }
    let unscrambled = mutant == Some(Mutant::UnscrambledInterference);

    // Parity composites per (interference subset, member): rows are
    // generator parity rows pushed through the member's scrambler block.
    let mut parity_rows: BTreeMap<(Subset, usize), Matrix> = BTreeMap::new();
    let jobs: Vec<(&CodeAllocation, usize, usize)> = allocation
        .codes
        .iter()
        .flat_map(|code| {
            let gen = &code.generator;
            if gen.length() == gen.dimension() {
                return Vec::new();
            }
            code.members
                .iter()
                .map(|&(m, start)| (code, m, start))
                .collect::<Vec<_>>()
        })
        .collect();
    let built: Vec<((Subset, usize), Matrix)> = jobs
        .into_par_iter()
        .map(|(code, m, start)| {
            let gen = &code.generator;
            let k = gen.dimension();
            let parity = gen
                .matrix()
                .select_rows(&(k..gen.length()).collect::<Vec<_>>());
            let block = if unscrambled {
                // Mutant: scatter raw parity rows into the member's range.
                let mut wide = Matrix::zeros(parity.rows(), plan.u[m] as usize);
                for r in 0..parity.rows() {
                    for c in 0..k {
                        wide.set(r, start + c, parity.get(r, c));
                    }
                }
                wide
            } else {
                let rows: Vec<usize> = (start..start + k).collect();
                par_matmul(&parity, &secrets.scramblers[m].select_rows(&rows), field)
            };
            ((code.subset, m), block)
        })
        .collect();
    parity_rows.extend(built);

    let interference_row = |m: usize, start: usize, coord: usize| -> Vec<u64> {
        if unscrambled {
            let mut row = vec![0u64; plan.u[m] as usize];
            row[start + coord] = 1;
            row
        } else {
            // Coordinate < dimension of a systematic generator: the row is
            // the unit vector at `coord`, so the composite is one scrambler
            // row — no multiplication needed.
            secrets.scramblers[m].row(start + coord).to_vec()
        }
    };

    let mut servers: Vec<ServerSlots> = (0..n)
        .map(|s| ServerSlots {
            server: s,
            iteration,
            slots: Vec::new(),
        })
        .collect();
    for entry in &ledger.entries {
        let c = entry.per_server as usize;
        for (server, server_slots) in servers.iter_mut().enumerate() {
            for t in 0..c {
                let g = server * c + t;
                let coeffs = match entry.kind {
                    EntryKind::Interference { ref ranges, .. } => ranges
                        .iter()
                        .map(|&(m, start)| (m, interference_row(m, start, g)))
                        .collect(),
                    EntryKind::Retrieval {
                        theta_start,
                        parity_source,
                    } => {
                        let mut coeffs: Vec<(usize, Vec<u64>)> = Vec::new();
                        if let Some(src) = parity_source {
                            let code = allocation.code(src).ok_or_else(|| {
                                Error::Internal(format!("no code for source {src:?}"))
                            })?;
                            for &(m, _) in &code.members {
                                let rows = &parity_rows[&(src, m)];
                                coeffs.push((m, rows.row(g).to_vec()));
                            }
                        }
                        coeffs.push((
                            theta,
                            secrets.scramblers[theta].row(theta_start + g).to_vec(),
                        ));
                        coeffs.sort_by_key(|&(m, _)| m);
                        coeffs
                    }
                };
                server_slots.slots.push(QuerySlot {
                    subset: entry.subset,
                    coeffs,
                });
            }
        }
    }
    if mutant == Some(Mutant::ExtraSingleton) {
        // One duplicated theta-singleton slot per server, appended last so
        // legitimate slot indices (and the decoding script) stay valid.
        for server in &mut servers {
            let extra = server
                .slots
                .iter()
                .find(|s| s.subset == Subset::singleton(theta))
                .cloned()
                .ok_or_else(|| Error::Internal("no theta singleton slot".into()))?;
            server.slots.push(extra);
        }
    }
    Ok(QuerySet { iteration, servers })
}
