//! Seeded request traces under static or piecewise-stationary Zipf popularity.
//!
//! A [`PopularityModel`] assigns every content a popularity rank; the content at
//! rank `r` is requested with probability `r^-s / H(N, s)`. Sampling walks the
//! precomputed cumulative vector with a binary search, so each request costs
//! `O(log N)` and draws exactly one uniform variate.
//!
//! Trace files are plain text:
//!
//! ```text
//! #cachegym-trace v1 N=<int> T=<int> seed=<int>
//! #change idx=<int> s=<float> perm=<hex digest>
//! <content id>
//! ...
//! ```
//!
//! Change lines sit immediately before the request at which they take effect.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Content identifier, always in `1..=N`.
pub type ContentId = u32;

const TRACE_MAGIC: &str = "#cachegym-trace";
const TRACE_VERSION: &str = "v1";

/// RNG stream used for request sampling. Model draws use a separate stream so a
/// dynamic trace without change events is request-for-request identical to a
/// static trace over its first model.
const SAMPLE_STREAM: u64 = 0;
const MODEL_STREAM: u64 = 1;

/// Zipf probabilities `p_i ∝ 1 / i^exponent` for ranks `1..=num_contents`.
pub fn zipf_probabilities(num_contents: usize, exponent: f64) -> Result<Vec<f64>> {
    if num_contents == 0 {
        return Err(Error::invalid("number of contents must be positive"));
    }
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::invalid(format!(
            "zipf exponent must be positive and finite, got {exponent}"
        )));
    }
    let weights: Vec<f64> = (1..=num_contents)
        .map(|rank| (rank as f64).powf(-exponent))
        .collect();
    // Sum smallest-first to keep the normalizer accurate for long tails.
    let norm: f64 = weights.iter().rev().sum();
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

/// Popularity of `N` contents: a Zipf law over ranks plus a content→rank bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    exponent: f64,
    /// `ranks[id - 1]` is the 1-based popularity rank of content `id`.
    ranks: Vec<u32>,
    /// `by_rank[r - 1]` is the content holding rank `r`.
    by_rank: Vec<ContentId>,
    /// Probability by rank.
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

impl PopularityModel {
    /// Model where content `i` has rank `i`.
    pub fn identity(num_contents: usize, exponent: f64) -> Result<Self> {
        let ranks = (1..=num_contents as u32).collect();
        Self::with_ranks(exponent, ranks)
    }

    /// Model with an explicit rank assignment; `ranks[id - 1]` is the rank of `id`.
    pub fn with_ranks(exponent: f64, ranks: Vec<u32>) -> Result<Self> {
        let n = ranks.len();
        let probabilities = zipf_probabilities(n, exponent)?;
        let mut by_rank = vec![0 as ContentId; n];
        for (idx, &rank) in ranks.iter().enumerate() {
            let slot = (rank as usize)
                .checked_sub(1)
                .filter(|&r| r < n)
                .ok_or_else(|| Error::invalid(format!("rank {rank} outside 1..={n}")))?;
            if by_rank[slot] != 0 {
                return Err(Error::invalid(format!("rank {rank} assigned twice")));
            }
            by_rank[slot] = idx as ContentId + 1;
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Guard the search against the last partial sum landing a hair below 1.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            exponent,
            ranks,
            by_rank,
            probabilities,
            cdf,
        })
    }

    /// Model with a uniformly random rank permutation drawn from `rng`.
    pub fn shuffled<R: Rng + ?Sized>(num_contents: usize, exponent: f64, rng: &mut R) -> Result<Self> {
        let mut ranks: Vec<u32> = (1..=num_contents as u32).collect();
        ranks.shuffle(rng);
        Self::with_ranks(exponent, ranks)
    }

    pub fn num_contents(&self) -> usize {
        self.ranks.len()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn rank_of(&self, content: ContentId) -> Option<u32> {
        self.ranks.get((content as usize).checked_sub(1)?).copied()
    }

    pub fn content_at_rank(&self, rank: u32) -> Option<ContentId> {
        self.by_rank.get((rank as usize).checked_sub(1)?).copied()
    }

    /// Request probability of `content`, zero for unknown IDs.
    pub fn probability(&self, content: ContentId) -> f64 {
        self.rank_of(content)
            .map_or(0.0, |r| self.probabilities[r as usize - 1])
    }

    /// Request probabilities indexed by content ID minus one.
    pub fn probabilities_by_content(&self) -> Vec<f64> {
        self.ranks
            .iter()
            .map(|&r| self.probabilities[r as usize - 1])
            .collect()
    }

    /// Total probability of the `count` most popular contents.
    pub fn top_mass(&self, count: usize) -> f64 {
        self.probabilities.iter().take(count).sum()
    }

    /// Short hex digest of the rank permutation.
    pub fn permutation_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for rank in &self.ranks {
            hasher.update(rank.to_le_bytes());
        }
        let digest = hasher.finalize();
        hex::encode(&digest[..8])
    }

    /// Draw one content ID.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ContentId {
        let u: f64 = rng.random();
        let rank = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.by_rank[rank]
    }

    fn change_event(&self, index: usize) -> ChangeEvent {
        ChangeEvent {
            index,
            exponent: self.exponent,
            digest: self.permutation_digest(),
        }
    }
}

/// A popularity regime taking effect at request `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeEvent {
    pub index: usize,
    pub exponent: f64,
    pub digest: String,
}

/// An ordered request sequence plus the metadata needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub num_contents: usize,
    pub seed: u64,
    pub requests: Vec<ContentId>,
    pub change_log: Vec<ChangeEvent>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Consumers that simulate over the trace need at least one request.
    pub fn require_nonempty(&self) -> Result<()> {
        if self.requests.is_empty() {
            Err(Error::invalid("trace has no requests"))
        } else {
            Ok(())
        }
    }

    pub fn distinct_contents(&self) -> usize {
        let mut seen = vec![false; self.num_contents + 1];
        let mut count = 0;
        for &id in &self.requests {
            let slot = &mut seen[id as usize];
            if !*slot {
                *slot = true;
                count += 1;
            }
        }
        count
    }
}

fn sample_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM);
    rng
}

/// I.i.d. requests from a fixed popularity model.
pub fn generate_static_trace(model: &PopularityModel, length: usize, seed: u64) -> Result<Trace> {
    if length == 0 {
        return Err(Error::invalid("trace length must be at least 1"));
    }
    let mut rng = sample_rng(seed);
    let requests = (0..length).map(|_| model.sample(&mut rng)).collect();
    Ok(Trace {
        num_contents: model.num_contents(),
        seed,
        requests,
        change_log: vec![model.change_event(0)],
    })
}

/// Parameters of a piecewise-stationary Zipf workload.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTraceParams {
    pub num_contents: usize,
    pub length: usize,
    pub change_interval: usize,
    pub exponent_range: (f64, f64),
}

impl DynamicTraceParams {
    /// Defaults: exponents uniform in `[0.8, 1.5]`, a new regime every `T / 5` requests.
    pub fn new(num_contents: usize, length: usize) -> Self {
        Self {
            num_contents,
            length,
            change_interval: (length / 5).max(1),
            exponent_range: (0.8, 1.5),
        }
    }
}

/// Every `change_interval` requests, draw a fresh exponent and rank permutation.
pub fn generate_dynamic_trace(params: &DynamicTraceParams, seed: u64) -> Result<Trace> {
    let (lo, hi) = params.exponent_range;
    if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "exponent range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    if params.change_interval == 0 {
        return Err(Error::invalid("change interval must be at least 1"));
    }
    if params.length == 0 {
        return Err(Error::invalid("trace length must be at least 1"));
    }
    if params.num_contents == 0 {
        return Err(Error::invalid("number of contents must be positive"));
    }

    let mut model_rng = ChaCha8Rng::seed_from_u64(seed);
    model_rng.set_stream(MODEL_STREAM);
    let mut rng = sample_rng(seed);

    let mut requests = Vec::with_capacity(params.length);
    let mut change_log = Vec::new();
    let mut model = None;
    for index in 0..params.length {
        if index % params.change_interval == 0 {
            let exponent = model_rng.random_range(lo..=hi);
            let next = PopularityModel::shuffled(params.num_contents, exponent, &mut model_rng)?;
            change_log.push(next.change_event(index));
            model = Some(next);
        }
        let current = model.as_ref().expect("model drawn at index 0");
        requests.push(current.sample(&mut rng));
    }
    Ok(Trace {
        num_contents: params.num_contents,
        seed,
        requests,
        change_log,
    })
}

/// Regenerate the popularity model of every segment of a dynamic trace.
///
/// Returns `(start index, model)` pairs in order; used by fit tests and by the
/// harness to report per-segment top-C mass.
pub fn dynamic_segment_models(params: &DynamicTraceParams, seed: u64) -> Result<Vec<(usize, PopularityModel)>> {
    let (lo, hi) = params.exponent_range;
    if !(lo > 0.0) || !(lo <= hi) || params.change_interval == 0 {
        return Err(Error::invalid("invalid dynamic trace parameters"));
    }
    let mut model_rng = ChaCha8Rng::seed_from_u64(seed);
    model_rng.set_stream(MODEL_STREAM);
    (0..params.length)
        .step_by(params.change_interval)
        .map(|index| {
            let exponent = model_rng.random_range(lo..=hi);
            PopularityModel::shuffled(params.num_contents, exponent, &mut model_rng).map(|m| (index, m))
        })
        .collect()
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "{TRACE_MAGIC} {TRACE_VERSION} N={} T={} seed={}",
        trace.num_contents,
        trace.requests.len(),
        trace.seed
    )?;
    let mut events = trace.change_log.iter().peekable();
    for (index, id) in trace.requests.iter().enumerate() {
        while let Some(event) = events.next_if(|e| e.index <= index) {
            write_change(&mut out, event)?;
        }
        writeln!(out, "{id}")?;
    }
    for event in events {
        write_change(&mut out, event)?;
    }
    out.flush()?;
    Ok(())
}

fn write_change(out: &mut impl Write, event: &ChangeEvent) -> std::io::Result<()> {
    writeln!(
        out,
        "#change idx={} s={} perm={}",
        event.index, event.exponent, event.digest
    )
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let text = fs::read_to_string(path)?;
    parse_trace(&text)
}

/// Parse the text trace format; errors carry 1-based line numbers.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines
        .next()
        .filter(|(_, l)| !l.is_empty())
        .ok_or_else(|| Error::parse(1, "missing trace header"))?;

    let mut fields = header.split_whitespace();
    if fields.next() != Some(TRACE_MAGIC) {
        return Err(Error::parse(1, "not a cachegym trace"));
    }
    if fields.next() != Some(TRACE_VERSION) {
        return Err(Error::parse(1, "unsupported trace version"));
    }
    let num_contents: usize = header_field(1, fields.next(), "N")?;
    let length: usize = header_field(1, fields.next(), "T")?;
    let seed: u64 = header_field(1, fields.next(), "seed")?;

    let mut requests = Vec::with_capacity(length);
    let mut change_log = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#change") {
            change_log.push(parse_change(line_no, rest)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let id: ContentId = line
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid content id {line:?}")))?;
        if id == 0 || id as usize > num_contents {
            return Err(Error::parse(line_no, format!("content id {id} outside 1..={num_contents}")));
        }
        requests.push(id);
    }
    if requests.len() != length {
        return Err(Error::parse(
            1,
            format!("header declares T={length} but file holds {} requests", requests.len()),
        ));
    }
    Ok(Trace {
        num_contents,
        seed,
        requests,
        change_log,
    })
}

fn header_field<T: std::str::FromStr>(line: usize, field: Option<&str>, key: &str) -> Result<T> {
    let field = field.ok_or_else(|| Error::parse(line, format!("missing {key}=")))?;
    field
        .strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(line, format!("malformed field {field:?}, expected {key}=<value>")))
}

fn parse_change(line: usize, rest: &str) -> Result<ChangeEvent> {
    let mut fields = rest.split_whitespace();
    let index = header_field(line, fields.next(), "idx")?;
    let exponent = header_field(line, fields.next(), "s")?;
    let digest: String = header_field(line, fields.next(), "perm")?;
    Ok(ChangeEvent {
        index,
        exponent,
        digest,
    })
}
