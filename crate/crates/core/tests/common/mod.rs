//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use cachegym::cache::{CacheEvent, CacheState, Policy, PolicyDecision, Request};
use cachegym::nn::Mlp;
use cachegym::trace::ContentId;
use cachegym::Result;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Lru,
    Lfu,
    Fifo,
}

#[derive(Debug, Clone, Copy, Default)]
struct Record {
    last: usize,
    count: u64,
    inserted: usize,
}

/// Wraps a policy and checks each of its decisions against a linear scan of
/// the cached slots under `criterion`, using bookkeeping of its own.
pub struct ScanOracle<P> {
    pub inner: P,
    criterion: Criterion,
    records: HashMap<ContentId, Record>,
    pub decisions: usize,
    pub mismatches: usize,
}

impl<P: Policy> ScanOracle<P> {
    pub fn new(inner: P, criterion: Criterion) -> Self {
        Self {
            inner,
            criterion,
            records: HashMap::new(),
            decisions: 0,
            mismatches: 0,
        }
    }

    fn expected(&self, cache: &CacheState) -> usize {
        let mut best: Option<((u64, usize), usize)> = None;
        for slot in 1..=cache.capacity() {
            let content = cache.at(slot).expect("full cache");
            let r = self.records[&content];
            let key = match self.criterion {
                Criterion::Lru => (r.last as u64, 0),
                Criterion::Lfu => (r.count, r.last),
                Criterion::Fifo => (r.inserted as u64, r.last),
            };
            if best.is_none_or(|(k, _)| key < k) {
                best = Some((key, slot));
            }
        }
        best.expect("non-empty cache").1
    }
}

impl<P: Policy> Policy for ScanOracle<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn on_request(&mut self, request: &Request, cache: &CacheState) -> Result<()> {
        self.inner.on_request(request, cache)
    }

    fn decide(&mut self, request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        let decision = self.inner.decide(request, cache)?;
        self.decisions += 1;
        if decision.action != self.expected(cache) {
            self.mismatches += 1;
        }
        Ok(decision)
    }

    fn on_update(&mut self, request: &Request, event: CacheEvent, cache: &CacheState) {
        let epoch = request.epoch;
        match event {
            CacheEvent::Hit => {
                let r = self.records.get_mut(&request.content).expect("hit on tracked content");
                r.last = epoch;
                r.count += 1;
            }
            CacheEvent::Admitted { .. } | CacheEvent::Replaced { .. } => {
                if let CacheEvent::Replaced { evicted, .. } = event {
                    self.records.remove(&evicted);
                }
                self.records.insert(
                    request.content,
                    Record {
                        last: epoch,
                        count: 1,
                        inserted: epoch,
                    },
                );
            }
            CacheEvent::Bypassed => {}
        }
        self.inner.on_update(request, event, cache);
    }
}

/// The `min(k, C+1)` actions of `0..=C` sorted by squared distance to `proto`,
/// ties to the smaller action.
pub fn brute_knn(proto: f64, k: usize, capacity: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..=capacity).collect();
    all.sort_by(|&a, &b| {
        let da = (a as f64 - proto).powi(2);
        let db = (b as f64 - proto).powi(2);
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    });
    all.truncate(k.min(capacity + 1));
    all
}

/// `Σ_j w_j · net(x)_j`.
pub fn weighted_output(net: &Mlp, input: &[f64], weights: &[f64]) -> f64 {
    net.forward(input)
        .unwrap()
        .iter()
        .zip(weights)
        .map(|(y, w)| y * w)
        .sum()
}

/// Central differences of `weighted_output` with respect to every parameter.
pub fn numeric_param_grad(net: &Mlp, input: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
    let base = net.flatten();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat(&p).unwrap();
        let up = weighted_output(&probe, input, weights);
        p[i] = base[i] - h;
        probe.set_flat(&p).unwrap();
        let down = weighted_output(&probe, input, weights);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Central differences of `weighted_output` with respect to the input.
pub fn numeric_input_grad(net: &Mlp, input: &[f64], weights: &[f64], h: f64) -> Vec<f64> {
    (0..input.len())
        .map(|i| {
            let mut x = input.to_vec();
            x[i] = input[i] + h;
            let up = weighted_output(net, &x, weights);
            x[i] = input[i] - h;
            let down = weighted_output(net, &x, weights);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`, maximized over entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Pearson chi-square goodness of fit. Cells are taken in the given order and
/// merged left to right until each expects at least five observations.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> (f64, usize, f64) {
    assert_eq!(observed.len(), probabilities.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        acc.0 += o as f64;
        acc.1 += p * n;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len() - 1;
    let p = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    (stat, df, p)
}
