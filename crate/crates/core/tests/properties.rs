mod common;

use std::collections::HashSet;

use cachegym::baselines::{Fifo, Lfu, Lru};
use cachegym::cache::{run_requests, CacheEvent, CacheState, Policy, PolicyDecision, Request, RunOptions};
use cachegym::nn::{soft_update, Activation, Mlp};
use cachegym::replay::ReplayBuffer;
use cachegym::trace::{generate_dynamic_trace, generate_static_trace, zipf_probabilities, DynamicTraceParams, PopularityModel};
use cachegym::wolpertinger::knn_expand;
use cachegym::Result;
use common::{brute_knn, Criterion, ScanOracle};
use proptest::prelude::*;

/// Checks the cache after every update.
struct Probe<P> {
    inner: P,
    violations: usize,
}

impl<P: Policy> Policy for Probe<P> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn on_request(&mut self, request: &Request, cache: &CacheState) -> Result<()> {
        self.inner.on_request(request, cache)
    }

    fn decide(&mut self, request: &Request, cache: &CacheState) -> Result<PolicyDecision> {
        self.inner.decide(request, cache)
    }

    fn on_update(&mut self, request: &Request, event: CacheEvent, cache: &CacheState) {
        let distinct: HashSet<_> = cache.contents().iter().collect();
        if cache.len() > cache.capacity() || distinct.len() != cache.len() || !cache.invariants_hold() {
            self.violations += 1;
        }
        self.inner.on_update(request, event, cache);
    }
}

fn trace_strategy() -> impl Strategy<Value = (usize, usize, f64, usize, u64)> {
    (2usize..40, 1usize..10, 0.3f64..2.0, 1usize..400, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chr_equals_outcome_recount_and_cache_stays_valid((n, c, s, len, seed) in trace_strategy()) {
        let model = PopularityModel::identity(n, s).unwrap();
        let trace = generate_static_trace(&model, len, seed).unwrap();
        let options = RunOptions { record_outcomes: true, window: 50, ..RunOptions::default() };
        let mut lru = Lru::new();
        let mut lfu = Lfu::new();
        let mut fifo = Fifo::new();
        let policies: [&mut dyn Policy; 3] = [&mut lru, &mut lfu, &mut fifo];
        for inner in policies {
            let mut probe = Probe { inner, violations: 0 };
            let report = run_requests(&trace.requests, c, &mut probe, options).unwrap();
            let hits = report.outcomes.iter().filter(|o| o.hit).count();
            prop_assert_eq!(report.outcomes.len(), len);
            prop_assert_eq!(report.chr(), hits as f64 / len as f64);
            prop_assert_eq!(probe.violations, 0);
        }
    }

    #[test]
    fn baseline_decisions_match_scan((n, c, s, len, seed) in trace_strategy()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let model = PopularityModel::shuffled(n, s, &mut rng).unwrap();
        let trace = generate_static_trace(&model, len, seed).unwrap();
        let options = RunOptions::default();
        let mut lru = ScanOracle::new(Lru::new(), Criterion::Lru);
        let mut lfu = ScanOracle::new(Lfu::new(), Criterion::Lfu);
        let mut fifo = ScanOracle::new(Fifo::new(), Criterion::Fifo);
        run_requests(&trace.requests, c, &mut lru, options).unwrap();
        run_requests(&trace.requests, c, &mut lfu, options).unwrap();
        run_requests(&trace.requests, c, &mut fifo, options).unwrap();
        prop_assert_eq!(lru.mismatches + lfu.mismatches + fifo.mismatches, 0);
    }

    #[test]
    fn knn_matches_sort(capacity in 1usize..300, k_raw in 1usize..400, t in 0.0f64..=1.0) {
        let proto = t * capacity as f64;
        prop_assert_eq!(knn_expand(proto, k_raw, capacity).unwrap(), brute_knn(proto, k_raw, capacity));
    }

    #[test]
    fn replay_keeps_newest(capacity in 1usize..200, extra in 0usize..300) {
        let mut buffer = ReplayBuffer::new(capacity);
        for i in 0..capacity + extra {
            buffer.push(i);
            prop_assert!(buffer.len() <= capacity);
        }
        let held: HashSet<usize> = buffer.iter().copied().collect();
        prop_assert_eq!(held, (extra..capacity + extra).collect::<HashSet<_>>());
    }

    #[test]
    fn generators_are_pure(n in 1usize..200, s in 0.3f64..2.0, len in 1usize..500, seed in any::<u64>()) {
        let model = PopularityModel::identity(n, s).unwrap();
        prop_assert_eq!(
            generate_static_trace(&model, len, seed).unwrap().requests,
            generate_static_trace(&model, len, seed).unwrap().requests
        );
        let params = DynamicTraceParams { num_contents: n, length: len, change_interval: 50, exponent_range: (0.8, 1.5) };
        let a = generate_dynamic_trace(&params, seed).unwrap();
        let b = generate_dynamic_trace(&params, seed).unwrap();
        prop_assert_eq!(a.requests, b.requests);
        prop_assert_eq!(a.change_log, b.change_log);
    }

    #[test]
    fn probabilities_normalize(n in 1usize..20_000, s in 0.1f64..3.0) {
        let p = zipf_probabilities(n, s).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn soft_update_contracts_distance(seed_a in any::<u64>(), seed_b in any::<u64>(), tau in 0.001f64..0.9) {
        let source = Mlp::new(&[4, 6, 2], Activation::Identity, seed_a).unwrap();
        let mut target = Mlp::new(&[4, 6, 2], Activation::Identity, seed_b).unwrap();
        let dist = |t: &Mlp| -> f64 {
            t.flatten().iter().zip(source.flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let mut before = dist(&target);
        for _ in 0..5 {
            soft_update(&mut target, &source, tau).unwrap();
            let after = dist(&target);
            prop_assert!((after - (1.0 - tau) * before).abs() <= 1e-9 * before.max(1e-12) + 1e-15);
            before = after;
        }
    }
}
