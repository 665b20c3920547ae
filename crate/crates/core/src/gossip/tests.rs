use super::*;
use crate::cmj::factorial;
use crate::rng::{stage, stream};

fn lineage(r: u64) -> SeedLineage {
    SeedLineage {
        master_seed: 7,
        replicate: r,
        stage: stage::FULL_RUN,
    }
}

fn fresh(d: usize, system_size: f64, r: u64) -> GossipState {
    let spec = TorusSpec::for_system_size(d, 1.0, system_size).unwrap();
    GossipState::new(spec, 1.0, stream(7, r, stage::FULL_RUN), lineage(r)).unwrap()
}

fn point(spec: &TorusSpec, c: &[f64]) -> TorusPoint {
    spec.point(c).unwrap()
}

fn child(
    spec: &TorusSpec,
    tau: f64,
    p: &[f64],
    k: usize,
    q: &[f64],
    kept: bool,
) -> TransmissionRecord {
    TransmissionRecord {
        tau,
        p: point(spec, p),
        k_source: Some(k),
        q_source: Some(point(spec, q)),
        kept,
        redundant: false,
    }
}

fn build(spec: TorusSpec, records: Vec<TransmissionRecord>, t_now: f64) -> GossipState {
    GossipState::from_records(
        spec,
        1.0,
        records,
        t_now,
        stream(1, 0, 0),
        SeedLineage::default(),
    )
    .unwrap()
}

fn single_term(d: usize, lambda: f64, tau: f64, v: f64) -> f64 {
    let x = lambda * (v - tau);
    (-lambda * v).exp()
        * (0..=d)
            .map(|l| x.powi(l as i32) / factorial(l))
            .sum::<f64>()
}

#[test]
fn first_transmission_is_always_kept() {
    for r in 0..50 {
        let mut s = fresh(2, 1000.0, r);
        let rec = *s.next_event().unwrap();
        assert_eq!(rec.k_source, Some(0));
        assert!(rec.kept);
        let q = rec.q_source.unwrap();
        assert!(s.spec().distance(&q, &s.records()[0].p).unwrap() <= rec.tau);
    }
}

#[test]
fn thinning_examples() {
    let spec = TorusSpec::new(2, 100.0).unwrap();
    let ancestor = TransmissionRecord::ancestor(point(&spec, &[0.0, 0.0]));
    // Record 1 is thinned and far away; record 2 is kept and its disc pokes
    // out of the ancestor's.
    let records = vec![
        ancestor,
        child(&spec, 1.0, &[40.0, 40.0], 0, &[0.5, 0.0], false),
        child(&spec, 1.5, &[3.5, 0.0], 0, &[0.2, 0.2], true),
    ];
    let s = build(spec, records, 3.0);
    let t = 3.0;
    // Source thinned, transmitter outside every kept disc.
    assert!(!s.thinning_verdict(1, &point(&spec, &[40.5, 40.0]), t));
    // Source is the ancestor: nothing earlier can cover.
    assert!(s.thinning_verdict(0, &point(&spec, &[1.0, 1.0]), t));
    // Transmitter in record 2's disc but also inside the ancestor's disc.
    assert!(!s.thinning_verdict(2, &point(&spec, &[2.5, 0.0]), t));
    // Transmitter only inside record 2's disc.
    assert!(s.thinning_verdict(2, &point(&spec, &[4.5, 0.0]), t));
}

#[test]
fn run_until_extends_monotonically() {
    let mut s = fresh(1, 1000.0, 3);
    s.run_until(4.0).unwrap();
    let before = s.records().to_vec();
    s.run_until(4.0).unwrap();
    assert_eq!(s.records(), &before[..]);
    s.run_until(6.0).unwrap();
    assert_eq!(&s.records()[..before.len()], &before[..]);
    assert!(s.records().windows(2).all(|w| w[1].tau > w[0].tau));
    assert!(s.run_until(5.0).is_err());
    let mut last = 0.0;
    let mut kept = 0;
    let times: Vec<f64> = (7..=12).map(f64::from).collect();
    s.run_with_checkpoints(&times, |st, t| {
        let len = st.coverage_exact(t)? * st.spec().side();
        assert!(len >= last);
        last = len;
        let n = st.records().iter().filter(|r| r.kept).count();
        assert!(n >= kept);
        kept = n;
        Ok(())
    })
    .unwrap();
}

#[test]
fn wrap_radius_is_enforced() {
    let mut s = fresh(1, 10.0, 0);
    let limit = s.spec().wrap_radius();
    assert!(matches!(
        s.run_until(limit + 1.0),
        Err(Error::WrapRadius { .. })
    ));
}

#[test]
fn snapshot_round_trip_and_continuations() {
    let mut s = fresh(2, 2000.0, 11);
    s.run_until(5.0).unwrap();
    let snap = s.snapshot();
    let restored = snap.restore().unwrap();
    assert_eq!(restored.snapshot().as_bytes(), snap.as_bytes());
    assert_eq!(snap.time(), 5.0);
    let again = Snapshot::from_bytes(snap.as_bytes().to_vec()).unwrap();
    assert_eq!(again, snap);

    let cont = |seed: u64| {
        let mut st = snap.restore().unwrap();
        st.reseed(stream(seed, 0, stage::CONTINUATION), lineage(seed));
        st.run_until(7.0).unwrap();
        st.records().to_vec()
    };
    let (a, b, c) = (cont(1), cont(1), cont(2));
    assert_eq!(a, b);
    let n0 = s.records().len();
    assert_eq!(&a[..n0], &c[..n0]);
    assert_ne!(a[n0..], c[n0..]);

    let mut corrupt = snap.as_bytes().to_vec();
    corrupt[60] ^= 1;
    assert!(matches!(
        Snapshot::from_bytes(corrupt),
        Err(Error::HashMismatch { .. })
    ));
    let mut wrong_version = snap.as_bytes().to_vec();
    wrong_version[4] = 9;
    assert!(matches!(
        Snapshot::from_bytes(wrong_version),
        Err(Error::Format(_))
    ));
}

#[test]
fn restored_state_continues_like_the_original() {
    let mut s = fresh(1, 500.0, 5);
    s.run_until(3.0).unwrap();
    let mut r = s.snapshot().restore().unwrap();
    s.run_until(6.0).unwrap();
    r.run_until(6.0).unwrap();
    // Same stream; the clocks agree up to rounding, so the event sequence
    // must match in structure and nearly in time.
    assert_eq!(s.records().len(), r.records().len());
    for (x, y) in s.records().iter().zip(r.records()) {
        assert_eq!(
            (x.k_source, x.kept, x.redundant),
            (y.k_source, y.kept, y.redundant)
        );
        assert!((x.tau - y.tau).abs() < 1e-9);
    }
}

#[test]
fn w_hat_examples() {
    let spec = TorusSpec::new(2, 100.0).unwrap();
    let ancestor = TransmissionRecord::ancestor(point(&spec, &[0.0, 0.0]));
    let v = 3.0;
    let alone = build(spec, vec![ancestor], v);
    let expect = single_term(2, 1.0, 0.0, v);
    assert!((alone.w_hat(v).unwrap() - expect).abs() < 1e-15);
    assert!((alone.w_star(v).unwrap() - expect).abs() < 1e-15);

    let touching = build(
        spec,
        vec![
            ancestor,
            child(&spec, 1.0, &[4.0, 0.0], 0, &[0.1, 0.0], true),
        ],
        v,
    );
    assert_eq!(touching.w_hat(v).unwrap(), 0.0);

    let apart = build(
        spec,
        vec![
            ancestor,
            child(&spec, 1.0, &[30.0, 30.0], 0, &[0.1, 0.0], true),
        ],
        v,
    );
    let sum = single_term(2, 1.0, 0.0, v) + single_term(2, 1.0, 1.0, v);
    assert!((apart.w_hat(v).unwrap() - sum).abs() < 1e-15);
    assert!((apart.w_star(v).unwrap() - apart.w_hat(v).unwrap()).abs() < 1e-15);
}

/// Brute-force isolated set over an arbitrary ordering of the discs.
fn isolated_brute(s: &GossipState, v: f64, order: &[usize]) -> Vec<usize> {
    let live: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&j| {
            let r = &s.records()[j];
            r.kept && !r.redundant && r.tau <= v
        })
        .collect();
    let mut out: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&a| {
            live.iter().all(|&b| {
                a == b
                    || !s
                        .spec()
                        .discs_intersect(&s.records()[a].disc(), &s.records()[b].disc(), v)
            })
        })
        .collect();
    out.sort_unstable();
    out
}

#[test]
fn isolated_set_matches_brute_force_in_any_order() {
    for d in 1..=3 {
        let mut s = fresh(d, 3000.0, 21 + d as u64);
        let v = 0.45 * 3000f64.ln();
        s.run_until(v).unwrap();
        let mut order: Vec<usize> = (0..s.records().len()).collect();
        order.reverse();
        let third = order.len() / 3;
        order.rotate_left(third);
        let brute = isolated_brute(&s, v, &order);
        assert_eq!(s.isolated_records(v).unwrap(), brute, "d = {d}");
        let by_brute = w_from_births(d, 1.0, brute.iter().map(|&j| s.records()[j].tau), v);
        assert_eq!(s.w_hat(v).unwrap(), by_brute);
    }
}

#[test]
fn coverage_examples() {
    let s = fresh(2, 1000.0, 0);
    let mut probes = stream(3, 0, stage::PROBES);
    assert_eq!(s.coverage_fraction(0.0, 1000, &mut probes).unwrap().0, 0.0);
    assert!(s.coverage_fraction(0.0, 0, &mut probes).is_err());

    let mut tiny = fresh(1, 10.0, 4);
    let t = tiny.spec().wrap_radius();
    tiny.run_until(t).unwrap();
    assert_eq!(tiny.coverage_exact(t).unwrap(), 1.0);
    assert_eq!(tiny.coverage_fraction(t, 2000, &mut probes).unwrap().0, 1.0);

    for r in 0..20 {
        let mut st = fresh(1, 300.0, 100 + r);
        let t = 300f64.ln();
        st.run_until(t).unwrap();
        let exact = st.coverage_exact(t).unwrap();
        let (est, se) = st.coverage_fraction(t, 4000, &mut probes).unwrap();
        assert!(
            (est - exact).abs() <= 4.0 * se.max(1.0 / 4000.0),
            "{est} vs {exact}"
        );
    }
}

#[test]
fn process_stats_examples() {
    let spec = TorusSpec::new(2, 50.0).unwrap();
    let s = build(
        spec,
        vec![TransmissionRecord::ancestor(point(&spec, &[1.0, 1.0]))],
        2.5,
    );
    let st = s.process_stats(2.5).unwrap();
    assert_eq!((st.n_kept, st.n_all), (1, 1));
    assert_eq!((st.m_kept, st.m_all), (6.25, 6.25));

    let mut run = fresh(2, 2000.0, 8);
    let t = 0.8 * 2000f64.ln();
    run.run_until(t).unwrap();
    let st = run.process_stats(t).unwrap();
    assert!(st.n_kept <= st.n_all && st.m_kept <= st.m_all);
    let h = run.clock.h_vector(t).unwrap();
    assert!((st.m_all / factorial(2) - h.h[2]).abs() < 1e-9 * h.h[2]);
}

#[test]
fn containment_and_redundancy() {
    let mut probes = stream(9, 0, stage::PROBES);
    let mut saw_thinned = false;
    for r in 0..5 {
        let mut s = fresh(2, 400.0, 40 + r);
        let t = 400f64.ln();
        s.run_until(t).unwrap();
        saw_thinned |= s.records().iter().any(|rec| !rec.kept);
        let all: Vec<Disc> = s.records().iter().map(|rec| rec.disc()).collect();
        for _ in 0..500 {
            let p = s.spec().uniform_point(&mut probes);
            if s.is_covered(&p, t).unwrap() {
                assert!(s.spec().coverage_time(&p, &all).unwrap() <= t);
            }
        }
        for (j, rec) in s
            .records()
            .iter()
            .enumerate()
            .filter(|(_, rec)| rec.redundant)
        {
            let covered = s.records()[..j]
                .iter()
                .any(|l| l.kept && s.spec().distance(&rec.p, &l.p).unwrap() <= rec.tau - l.tau);
            assert!(covered, "redundant record {j} not contained");
        }
    }
    assert!(saw_thinned);
}

#[test]
fn invalid_record_lists_are_rejected() {
    let spec = TorusSpec::new(1, 20.0).unwrap();
    let ancestor = TransmissionRecord::ancestor(point(&spec, &[0.0]));
    let bad_q = child(&spec, 1.0, &[5.0], 0, &[3.0], true);
    assert!(GossipState::from_records(
        spec,
        1.0,
        vec![ancestor, bad_q],
        2.0,
        stream(0, 0, 0),
        SeedLineage::default()
    )
    .is_err());
    let late = child(&spec, 3.0, &[5.0], 0, &[0.5], true);
    assert!(GossipState::from_records(
        spec,
        1.0,
        vec![ancestor, late],
        2.0,
        stream(0, 0, 0),
        SeedLineage::default()
    )
    .is_err());
    assert!(GossipState::from_records(
        spec,
        1.0,
        vec![],
        2.0,
        stream(0, 0, 0),
        SeedLineage::default()
    )
    .is_err());
}
