//! Operational privacy checks.
//!
//! Three layers of evidence, each weaker but broader than the last:
//!
//! 1. **Structure** — the slot layout (count per server per subset) must be
//!    identical for every retrieval target; deterministic and exact.
//! 2. **Counting** — for every MDS code, a coalition of `T` servers sees at
//!    most `dimension` of its coordinates, the condition under which a
//!    T-subset of coded symbols is an invertible image of fresh uniform
//!    symbols. Exact, per (coalition, message, level).
//! 3. **Statistics** — Monte-Carlo homogeneity tests that a coalition's
//!    pooled query view is distributed identically across targets, via
//!    low-dimensional projections (coefficient values, rank profiles,
//!    first-nonzero positions) and chi-square with Bonferroni correction.
//!
//! Full distribution equality over the view space is astronomically large
//! and untestable; the statistical layer is evidence, not proof, and says
//! so in its report.

use crate::gf::Matrix;
use crate::params::{compute_plan, ProblemSpec, SubpacketPlan};
use crate::scheme::{
    allocate_mds, build_ledger, build_queries, draw_scramblers, shape_digest, Mutant, QuerySet,
    QuerySlot, ShapeDigest, Subset,
};
use crate::{derive_seed, Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Builds one iteration's query set for a given target, deterministic in
/// `seed`; the shared sampling primitive of every audit layer.
fn sample_queries(
    plan: &SubpacketPlan,
    theta: usize,
    seed: u64,
    mutant: Option<Mutant>,
) -> Result<QuerySet> {
    let ledger = build_ledger(plan, theta)?;
    let allocation = allocate_mds(plan, &ledger)?;
    let secrets = draw_scramblers(plan, theta, seed)?;
    build_queries(plan, &ledger, &allocation, &secrets, 0, mutant)
}

/// Checks that the query layout is identical for every retrieval target.
/// Returns the finding (`true` = invariant holds); errors only on broken
/// inputs, never on a failed check.
pub fn check_structure(spec: &ProblemSpec, seed: u64) -> Result<bool> {
    check_structure_with(spec, seed, None)
}

/// [`check_structure`] with an optional planted defect, so tests and the
/// command line can demonstrate that the check has teeth.
pub fn check_structure_with(spec: &ProblemSpec, seed: u64, mutant: Option<Mutant>) -> Result<bool> {
    let plan = compute_plan(spec)?;
    let mut reference: Option<ShapeDigest> = None;
    for theta in 0..spec.message_count() {
        let queries = sample_queries(&plan, theta, derive_seed(seed, theta as u64), mutant)?;
        let digest = shape_digest(&queries);
        match &reference {
            None => reference = Some(digest),
            Some(r) if *r != digest => return Ok(false),
            Some(_) => {}
        }
    }
    Ok(true)
}

/// One code's visibility figure for one coalition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountingRow {
    pub coalition: Vec<usize>,
    /// The interference subset owning the code.
    pub subset: Subset,
    /// Member message contributing symbols through this code.
    pub message: usize,
    pub level: usize,
    /// Coordinates of this code the coalition sees per iteration:
    /// information coordinates from the subset's own slots plus parity
    /// coordinates inside the subset-plus-theta retrieval slots.
    pub visible: usize,
    /// Code dimension (`N * c_S`); privacy needs `visible <= dimension`.
    pub dimension: usize,
    /// Equality case — the proof's tight instance.
    pub tight: bool,
}

/// Counts, for every MDS code in the `theta` layout, how many of its
/// coordinates the coalition observes per iteration.
pub fn check_counting(
    spec: &ProblemSpec,
    theta: usize,
    coalition: &[usize],
) -> Result<Vec<CountingRow>> {
    let t = spec.collusion();
    let n = spec.servers();
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
    let plan = compute_plan(spec)?;
    let ledger = build_ledger(&plan, theta)?;
    let allocation = allocate_mds(&plan, &ledger)?;
    let mut rows = Vec::new();
    for code in &allocation.codes {
        let own = ledger
            .entry(code.subset)
            .map(|e| e.per_server as usize)
            .unwrap_or(0);
        let consumer = ledger
            .entry(code.parity_consumer)
            .map(|e| e.per_server as usize)
            .unwrap_or(0);
        // Each coalition server receives `own` information coordinates and
        // `consumer` parity coordinates of this code; coordinates are
        // distinct across servers by the slot layout.
        let visible = sorted.len() * (own + consumer);
        let dimension = code.generator.dimension();
        for &(message, _) in &code.members {
            rows.push(CountingRow {
                coalition: sorted.clone(),
                subset: code.subset,
                message,
                level: code.level,
                visible,
                dimension,
                tight: visible == dimension,
            });
        }
    }
    Ok(rows)
}

/// One chi-square homogeneity test between the two targets' samples of a
/// single scalar projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStat {
    pub theta_a: usize,
    pub theta_b: usize,
    pub coalition: Vec<usize>,
    /// Human-readable probe label, e.g. `coeff0[slot=3,msg=2]`.
    pub projection: String,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Outcome of the statistical layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    /// Sessions drawn per target per coalition.
    pub samples: usize,
    /// Family-wise significance level requested.
    pub significance: f64,
    /// Per-test threshold after Bonferroni correction.
    pub corrected_significance: f64,
    pub tests: Vec<ProjectionStat>,
    pub rejected: usize,
    pub pass: bool,
}

/// Minimum sessions per target; below this the chi-square cells are too
/// thin to mean anything, so the test refuses to run.
pub const MIN_SAMPLES: usize = 1000;
/// Minimum pooled expected count per (possibly merged) histogram bin.
const MIN_EXPECTED: f64 = 10.0;
/// At most this many coalitions are sampled statistically (they are
/// exchangeable by the layout's symmetry; more adds tests, not power).
const MAX_STAT_COALITIONS: usize = 3;

/// Per-trial scalar observables extracted from one coalition view.
struct TrialObservables {
    /// `coeffs[probe]` = coefficient value at position 0 of each
    /// (slot, member) pair, in pooled slot order.
    coeffs: Vec<u64>,
    /// `first_nonzero[probe]` = index of the first nonzero coefficient
    /// (width = all-zero sentinel) for the same probes.
    first_nonzero: Vec<usize>,
    /// Mixed-radix encoding of the per-message rank profile.
    rank_profile: usize,
}

/// Probe layout derived from one reference view; identical across targets
/// whenever the structural check passes.
struct ProbeSet {
    /// `(pooled slot index, subset, message)` per probe.
    probes: Vec<(usize, Subset, usize)>,
}

fn pooled_slots<'a>(queries: &'a QuerySet, coalition: &[usize]) -> Vec<&'a QuerySlot> {
    let mut out = Vec::new();
    for &server in coalition {
        out.extend(queries.servers[server].slots.iter());
    }
    out
}

fn probe_set(queries: &QuerySet, coalition: &[usize]) -> ProbeSet {
    let mut probes = Vec::new();
    for (i, slot) in pooled_slots(queries, coalition).iter().enumerate() {
        for (m, _) in &slot.coeffs {
            probes.push((i, slot.subset, *m));
        }
    }
    ProbeSet { probes }
}

fn observe(
    spec: &ProblemSpec,
    queries: &QuerySet,
    coalition: &[usize],
    probes: &ProbeSet,
) -> Result<TrialObservables> {
    let slots = pooled_slots(queries, coalition);
    let mut coeffs = Vec::with_capacity(probes.probes.len());
    let mut first_nonzero = Vec::with_capacity(probes.probes.len());
    let mut per_message_rows: Vec<Vec<Vec<u64>>> = vec![Vec::new(); spec.message_count()];
    for slot in &slots {
        for (m, row) in &slot.coeffs {
            per_message_rows[*m].push(row.clone());
        }
    }
    for &(slot_idx, subset, message) in &probes.probes {
        let slot = slots.get(slot_idx).ok_or_else(|| {
            Error::Inconsistent("view has fewer slots than the probe layout".into())
        })?;
        if slot.subset != subset {
            return Err(Error::Inconsistent(format!(
                "slot {slot_idx} is {:?}, probe layout expects {subset:?}",
                slot.subset
            )));
        }
        let row = slot
            .coeffs
            .iter()
            .find(|(m, _)| *m == message)
            .map(|(_, row)| row)
            .ok_or_else(|| {
                Error::Inconsistent(format!("slot {slot_idx} lacks message {message}"))
            })?;
        coeffs.push(row[0]);
        first_nonzero.push(row.iter().position(|&v| v != 0).unwrap_or(row.len()));
    }
    // Rank profile, encoded mixed-radix so it is one categorical value.
    let field = spec.field();
    let mut rank_profile = 0usize;
    for rows in per_message_rows {
        let (rank, width) = if rows.is_empty() {
            (0, 0)
        } else {
            let width = rows[0].len();
            (Matrix::from_rows(rows)?.rank(field), width)
        };
        rank_profile = rank_profile * (width + 2) + rank;
    }
    Ok(TrialObservables {
        coeffs,
        first_nonzero,
        rank_profile,
    })
}

/// Chi-square homogeneity between two samples of one categorical variable.
///
/// Categories are merged left-to-right (ascending key) until each merged
/// bin's pooled expectation reaches [`MIN_EXPECTED`]; a variable left with
/// fewer than two bins carries no information and yields `None`.
fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Option<(f64, usize)> {
    let mut keys: Vec<u64> = a.iter().chain(b).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let count = |sample: &[u64], key: u64| sample.iter().filter(|&&v| v == key).count();
    let pooled: Vec<(u64, usize, usize)> = keys
        .iter()
        .map(|&k| (k, count(a, k), count(b, k)))
        .collect();
    // Greedy merge into bins with enough pooled mass.
    let mut bins: Vec<(usize, usize)> = Vec::new();
    let mut acc = (0usize, 0usize);
    for &(_, ca, cb) in &pooled {
        acc.0 += ca;
        acc.1 += cb;
        if (acc.0 + acc.1) as f64 >= MIN_EXPECTED * 2.0 {
            bins.push(acc);
            acc = (0, 0);
        }
    }
    if acc != (0, 0) {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return None;
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let grand = na + nb;
    let mut stat = 0.0;
    for &(ca, cb) in &bins {
        let col = (ca + cb) as f64;
        let ea = col * na / grand;
        let eb = col * nb / grand;
        stat += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    Some((stat, bins.len() - 1))
}

fn p_value(stat: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    1.0 - dist.cdf(stat)
}

/// All size-`t` subsets of `0..n`, lexicographic.
fn coalitions(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(t);
    fn rec(start: usize, n: usize, t: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == t {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, t, current, out);
            current.pop();
        }
    }
    rec(0, n, t, &mut current, &mut out);
    out
}

/// Samples `m` observable sets for one target over one coalition.
#[allow(clippy::too_many_arguments)] // internal sampler: spec/plan/probes travel together
fn sample_observables(
    spec: &ProblemSpec,
    plan: &SubpacketPlan,
    theta: usize,
    coalition: &[usize],
    probes: &ProbeSet,
    m: usize,
    seed: u64,
    mutant: Option<Mutant>,
) -> Result<Vec<TrialObservables>> {
    (0..m)
        .into_par_iter()
        .map(|trial| {
            let s = derive_seed(seed, ((theta as u64) << 40) | trial as u64);
            let queries = sample_queries(plan, theta, s, mutant)?;
            observe(spec, &queries, coalition, probes)
        })
        .collect()
}

/// Runs the statistical privacy audit on an honest scheme.
pub fn stat_privacy_test(
    spec: &ProblemSpec,
    samples: usize,
    significance: f64,
    seed: u64,
) -> Result<StatsReport> {
    stat_privacy_test_with(spec, samples, significance, seed, None)
}

/// [`stat_privacy_test`] with an optional planted defect.
///
/// For every target pair and sampled coalition, draws `samples` fresh
/// single-iteration sessions per target and compares the two view samples
/// through every projection; `pass` means no test rejected at the
/// Bonferroni-corrected level.
pub fn stat_privacy_test_with(
    spec: &ProblemSpec,
    samples: usize,
    significance: f64,
    seed: u64,
    mutant: Option<Mutant>,
) -> Result<StatsReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            have: samples,
            need: MIN_SAMPLES,
        });
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "significance must be in (0,1), got {significance}"
        )));
    }
    let plan = compute_plan(spec)?;
    let k = spec.message_count();
    let coalition_list: Vec<Vec<usize>> = coalitions(spec.servers(), spec.collusion())
        .into_iter()
        .take(MAX_STAT_COALITIONS)
        .collect();
    let mut raw: Vec<(usize, usize, Vec<usize>, String, f64, usize)> = Vec::new();
    for ta in 0..k {
        for tb in ta + 1..k {
            for coalition in &coalition_list {
                // Reference layout from target `ta`; the observe step
                // verifies the `tb` views are probe-compatible.
                let reference = sample_queries(&plan, ta, derive_seed(seed, 0xFACE), mutant)?;
                let probes = probe_set(&reference, coalition);
                let sa =
                    sample_observables(spec, &plan, ta, coalition, &probes, samples, seed, mutant)?;
                let sb =
                    sample_observables(spec, &plan, tb, coalition, &probes, samples, seed, mutant)?;
                collect_projection_tests(&probes, &sa, &sb, |label, stat, dof| {
                    raw.push((ta, tb, coalition.clone(), label, stat, dof));
                });
            }
        }
    }
    let total = raw.len().max(1);
    let corrected = significance / total as f64;
    let mut tests = Vec::with_capacity(raw.len());
    let mut rejected = 0;
    for (ta, tb, coalition, label, stat, dof) in raw {
        let p = p_value(stat, dof);
        if p < corrected {
            rejected += 1;
        }
        tests.push(ProjectionStat {
            theta_a: ta,
            theta_b: tb,
            coalition,
            projection: label,
            statistic: stat,
            dof,
            p_value: p,
        });
    }
    Ok(StatsReport {
        samples,
        significance,
        corrected_significance: corrected,
        rejected,
        pass: rejected == 0,
        tests,
    })
}

/// Runs every projection over two observable samples and hands each
/// resulting (label, statistic, dof) to the sink.
fn collect_projection_tests(
    probes: &ProbeSet,
    sa: &[TrialObservables],
    sb: &[TrialObservables],
    mut sink: impl FnMut(String, f64, usize),
) {
    for (p, &(slot, subset, message)) in probes.probes.iter().enumerate() {
        let a: Vec<u64> = sa.iter().map(|t| t.coeffs[p]).collect();
        let b: Vec<u64> = sb.iter().map(|t| t.coeffs[p]).collect();
        if let Some((stat, dof)) = chi_square_homogeneity(&a, &b) {
            sink(
                format!("coeff0[slot={slot}:{subset:?},msg={}]", message + 1),
                stat,
                dof,
            );
        }
        let a: Vec<u64> = sa.iter().map(|t| t.first_nonzero[p] as u64).collect();
        let b: Vec<u64> = sb.iter().map(|t| t.first_nonzero[p] as u64).collect();
        if let Some((stat, dof)) = chi_square_homogeneity(&a, &b) {
            sink(
                format!("first-nonzero[slot={slot}:{subset:?},msg={}]", message + 1),
                stat,
                dof,
            );
        }
    }
    let a: Vec<u64> = sa.iter().map(|t| t.rank_profile as u64).collect();
    let b: Vec<u64> = sb.iter().map(|t| t.rank_profile as u64).collect();
    if let Some((stat, dof)) = chi_square_homogeneity(&a, &b) {
        sink("rank-profile".into(), stat, dof);
    }
}

/// Combined audit outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub structure_pass: bool,
    pub counting: Vec<CountingRow>,
    pub counting_pass: bool,
    /// At least one tight (equality) instance observed — the proof's
    /// boundary case is actually exercised.
    pub counting_tight_seen: bool,
    pub stats: Option<StatsReport>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.structure_pass && self.counting_pass && self.stats.as_ref().is_none_or(|s| s.pass)
    }
}

/// Runs the deterministic layers for every (target, coalition) pair, plus
/// the statistical layer when `samples` is given.
pub fn audit_report(
    spec: &ProblemSpec,
    seed: u64,
    samples: Option<usize>,
    significance: f64,
) -> Result<AuditReport> {
    audit_report_with(spec, seed, samples, significance, None)
}

/// [`audit_report`] with an optional planted defect in the query layer.
/// The counting layer reads the ledger, not queries, so it is unaffected;
/// structure and statistics see the defect.
pub fn audit_report_with(
    spec: &ProblemSpec,
    seed: u64,
    samples: Option<usize>,
    significance: f64,
    mutant: Option<Mutant>,
) -> Result<AuditReport> {
    let structure_pass = check_structure_with(spec, seed, mutant)?;
    let mut counting = Vec::new();
    for theta in 0..spec.message_count() {
        for coalition in coalitions(spec.servers(), spec.collusion()) {
            counting.extend(check_counting(spec, theta, &coalition)?);
        }
    }
    let counting_pass = counting.iter().all(|r| r.visible <= r.dimension);
    let counting_tight_seen = counting.iter().any(|r| r.tight);
    let stats = match samples {
        None => None,
        Some(m) => Some(stat_privacy_test_with(spec, m, significance, seed, mutant)?),
    };
    Ok(AuditReport {
        structure_pass,
        counting,
        counting_pass,
        counting_tight_seen,
        stats,
    })
}

/// Renders an audit report in the same stable structured-text convention
/// as transcripts: sorted keys, integers as decimal strings.
pub fn audit_document(report: &AuditReport) -> Value {
    let counting: Vec<Value> = report
        .counting
        .iter()
        .map(|r| {
            json!({
                "coalition": r.coalition.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "code_subset": format!("{:?}", r.subset),
                "message": (r.message + 1).to_string(),
                "level": r.level.to_string(),
                "visible": r.visible.to_string(),
                "dimension": r.dimension.to_string(),
                "tight": r.tight,
            })
        })
        .collect();
    let stats = report.stats.as_ref().map(|s| {
        json!({
            "samples": s.samples.to_string(),
            "significance": format!("{}", s.significance),
            "corrected_significance": format!("{:.3e}", s.corrected_significance),
            "tests_run": s.tests.len().to_string(),
            "rejected": s.rejected.to_string(),
            "pass": s.pass,
            "worst": s
                .tests
                .iter()
                .min_by(|x, y| x.p_value.total_cmp(&y.p_value))
                .map(|t| {
                    json!({
                        "projection": t.projection,
                        "theta_pair": format!("({},{})", t.theta_a + 1, t.theta_b + 1),
                        "p_value": format!("{:.3e}", t.p_value),
                    })
                })
                .unwrap_or(Value::Null),
        })
    });
    json!({
        "structure_pass": report.structure_pass,
        "counting_pass": report.counting_pass,
        "counting_tight_seen": report.counting_tight_seen,
        "counting": counting,
        "stats": stats,
        "pass": report.pass(),
        "note": "statistical layer is evidence against projections, not a proof of distributional equality",
    })
}
