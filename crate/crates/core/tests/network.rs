mod common;

use common::*;
use proptest::prelude::*;
use wfqos::network::*;
use wfqos::*;

fn agent(tl: CapabilityTimeline, cat: ProfileCatalog) -> NetworkAgent {
    NetworkAgent::new(tl, cat, RecordingEnforcer::new(20), Stage2Config::default())
}

fn validity(env: &CapabilityEnvelope, m: u64) -> Vec<Interval> {
    env.entry(mbps(m)).unwrap().validity.intervals().to_vec()
}

#[test]
fn envelope_around_competitor() {
    let (_, env) = contended();
    assert_eq!(validity(&env, 30), vec![iv(0, 550), iv(800, 1870)]);
    assert_eq!(validity(&env, 10), vec![iv(0, 1870)]);
    assert_eq!(validity(&env, 1), vec![iv(0, 1870)]);
    assert_eq!(env.entries.len(), 3);
}

#[test]
fn envelope_of_empty_timeline() {
    let tl = testbed_timeline(1000);
    let env = derive_envelope(&tl, &testbed_catalog(), AgentId::new("a"));
    for e in &env.entries {
        assert_eq!(e.validity.intervals(), &[iv(0, 1000)]);
        assert_eq!(e.headroom, mbps(30));
    }
}

#[test]
fn envelope_with_constant_load() {
    let cat = catalog(&[1, 5, 10, 20, 30]);
    let mut tl = CapabilityTimeline::new(
        CapacitySchedule::constant(mbps(220)),
        PlanningWindow::new(0, 500).unwrap(),
    );
    tl.insert(flat("a", "a", 1, 0, 500, mbps(150)));
    tl.insert(flat("b", "b", 1, 0, 500, mbps(50)));
    let env = derive_envelope(&tl, &cat, AgentId::new("x"));
    assert_eq!(validity(&env, 20), vec![iv(0, 500)]);
    assert!(validity(&env, 30).is_empty());
    assert_eq!(env.entry(mbps(30)).unwrap().headroom, Kbps::ZERO);
    for t in 0..500 {
        assert_eq!(brute_active_residual(&tl, t), 20_000);
    }
}

#[test]
fn full_rate_inspection_conflicts_with_competitor() {
    let (tl, _) = contended();
    let cat = testbed_catalog();
    let mut t = flat("dtb", "dtb", 3, 470, 1570, mbps(30));
    t.phases[0].min_acceptable = mbps(10);
    let v = tl.assess_feasibility(&cat, &t).unwrap();
    assert_eq!(
        v,
        FeasibilityVerdict::Conflict(vec![ConflictEntry {
            interval: iv(550, 800),
            max_admissible: Some(mbps(10)),
        }])
    );
}

#[test]
fn minimal_demand_is_accepted() {
    let (tl, _) = contended();
    let t = flat("dtb", "dtb", 3, 0, 1870, mbps(1));
    assert!(tl.assess_feasibility(&testbed_catalog(), &t).unwrap().is_accept());
}

#[test]
fn second_tenant_sees_remaining_ten() {
    let mut tl = testbed_timeline(2000);
    let cat = testbed_catalog();
    tl.commit(&cat, flat("a", "a", 1, 0, 1000, mbps(20))).unwrap();
    let v = tl.assess_feasibility(&cat, &flat("b", "b", 1, 0, 1000, mbps(20))).unwrap();
    assert_eq!(
        v,
        FeasibilityVerdict::Conflict(vec![ConflictEntry {
            interval: iv(0, 1000),
            max_admissible: Some(mbps(10)),
        }])
    );
}

#[test]
fn conflict_without_any_admissible_profile() {
    let mut tl = testbed_timeline(2000);
    let cat = testbed_catalog();
    tl.commit(&cat, flat("a", "a", 1, 0, 100, mbps(30))).unwrap();
    let v = tl.assess_feasibility(&cat, &flat("b", "b", 1, 50, 150, mbps(1))).unwrap();
    assert_eq!(
        v,
        FeasibilityVerdict::Conflict(vec![ConflictEntry {
            interval: iv(50, 100),
            max_admissible: None,
        }])
    );
}

#[test]
fn malformed_trajectory_is_an_error() {
    let tl = testbed_timeline(2000);
    let mut t = flat("a", "a", 1, 0, 100, mbps(10));
    t.phases[0].duration = 99;
    assert!(matches!(
        tl.assess_feasibility(&testbed_catalog(), &t),
        Err(NetworkError::Malformed(_))
    ));
}

#[test]
fn committing_the_split_plan_exhausts_the_contended_span() {
    let (mut tl, _) = contended();
    let seq = tl.commit(&testbed_catalog(), dtb_split()).unwrap();
    assert!(tl.commitment(seq).unwrap().is_active());
    for t in 550..800 {
        assert_eq!(tl.residual_at(t), 0);
    }
    assert_eq!(tl.residual_at(500), 0);
    assert_eq!(tl.residual_at(900), 0);
    assert_eq!(tl.residual_at(1600), 29_000);
}

#[test]
fn commit_on_empty_timeline_subtracts_demand() {
    let mut tl = testbed_timeline(1870);
    let t = dtb_split();
    tl.commit(&testbed_catalog(), t.clone()).unwrap();
    for tick in 0..1900 {
        assert_eq!(tl.residual_at(tick), 30_000 - t.demand_at(tick).0 as i64);
    }
}

#[test]
fn two_small_commits_fit() {
    let mut tl = testbed_timeline(1000);
    let cat = testbed_catalog();
    let a = tl.commit(&cat, flat("a", "a", 1, 0, 500, mbps(10))).unwrap();
    let b = tl.commit(&cat, flat("b", "b", 1, 0, 500, mbps(10))).unwrap();
    assert!(b > a);
    assert_eq!(tl.residual_at(100), 10_000);
    assert_eq!(brute_active_residual(&tl, 100), 10_000);
}

#[test]
fn commit_of_conflicting_trajectory_is_refused() {
    let (mut tl, _) = contended();
    let r = tl.commit(&testbed_catalog(), flat("dtb", "dtb", 3, 470, 1570, mbps(30)));
    assert!(matches!(r, Err(NetworkError::PreconditionViolated(_))));
    assert_eq!(tl.active().count(), 1);
}

#[test]
fn accepted_m2_reaches_the_enforcer() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let (v, seq) = na.handle_m2(dtb_split(), 3).unwrap();
    assert!(v.is_accept());
    assert!(seq.is_some());
    let rec = &na.hook().records()[0];
    assert_eq!(rec.workflow_id, WorkflowId::new("dtb"));
    assert_eq!(rec.effective_at, 23);
    assert_eq!(rec.rate_at(600), mbps(10));
}

/// DTB admitted around the competitor, at the moment of the injected drop.
fn admitted_dtb() -> (NetworkAgent, u64) {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    na.register(AgentId::new("dtb"));
    let (_, seq) = na.handle_m2(dtb_split(), 3).unwrap();
    na.slide(1100);
    (na, seq.unwrap())
}

#[test]
fn drop_to_ten_notifies_the_inspection() {
    let (mut na, seq) = admitted_dtb();
    let dropped = na.timeline().schedule().replaced_from(1100, mbps(10));
    let out = na.on_capacity_change(dropped, 1100);
    assert_eq!(out.len(), 1);
    let n = &out[0];
    assert_eq!(n.admission_seq, seq);
    assert_eq!(n.notification.direction, Direction::Degradation);
    assert_eq!(
        n.notification.affected,
        vec![AffectedSegment {
            interval: iv(1100, 1570),
            alternatives: vec![mbps(10), mbps(1)],
        }]
    );
}

#[test]
fn recovery_offers_the_preferred_profile_back() {
    let (mut na, seq) = admitted_dtb();
    let dropped = na.timeline().schedule().replaced_from(1100, mbps(10));
    na.on_capacity_change(dropped, 1100);
    let mut lowered = na.timeline().commitment(seq).unwrap().trajectory.clone();
    lowered.rerate_over(&iv(1100, 1570), &testbed_catalog(), |_, _| mbps(10));
    let new_seq = match na.handle_m4(lowered, Some(seq), 1102).unwrap() {
        M4Outcome::Accepted(s) => s,
        other => panic!("{other:?}"),
    };
    na.slide(1300);
    let recovered = na.timeline().schedule().replaced_from(1300, mbps(30));
    let out = na.on_capacity_change(recovered, 1300);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].admission_seq, new_seq);
    assert_eq!(out[0].notification.direction, Direction::Improvement);
    assert_eq!(
        out[0].notification.affected,
        vec![AffectedSegment {
            interval: iv(1300, 1570),
            alternatives: vec![mbps(30)],
        }]
    );
}

#[test]
fn improvement_is_offered_once_per_epoch() {
    let (mut na, seq) = admitted_dtb();
    let mut lowered = na.timeline().commitment(seq).unwrap().trajectory.clone();
    lowered.rerate_over(&iv(1100, 1570), &testbed_catalog(), |_, _| mbps(10));
    na.handle_m4(lowered, Some(seq), 1100).unwrap();
    assert_eq!(na.improvements(1101).len(), 1);
    na.release(&WorkflowId::new("nobody"), 1102);
    assert!(na.improvements(1103).is_empty());
}

fn degradable(w: &str, prio: i32, rate: u64) -> DemandTrajectory {
    let mut t = flat(w, w, prio, 0, 1000, mbps(rate));
    t.phases[0].min_acceptable = mbps(1);
    t.permissions.allow_downgrade = true;
    t
}

#[test]
fn lower_priority_is_asked_first() {
    let cat = catalog(&[1, 10, 20]);
    let tl = CapabilityTimeline::new(
        CapacitySchedule::constant(mbps(40)),
        PlanningWindow::new(0, 2000).unwrap(),
    );
    let mut na = agent(tl, cat);
    na.handle_m2(degradable("high", 5, 20), 0).unwrap();
    na.handle_m2(degradable("low", 1, 20), 0).unwrap();
    let out = na.on_capacity_change(CapacitySchedule::constant(mbps(20)), 10);
    assert_eq!(out.len(), 1, "freeing the low one is enough");
    assert_eq!(out[0].agent_id, AgentId::new("low"));
    assert_eq!(out[0].priority, 1);
}

#[test]
fn equal_priorities_adapt_latest_first() {
    let cat = catalog(&[1, 10, 20]);
    let tl = CapabilityTimeline::new(
        CapacitySchedule::constant(mbps(40)),
        PlanningWindow::new(0, 2000).unwrap(),
    );
    let mut na = agent(tl, cat);
    na.handle_m2(degradable("first", 2, 20), 0).unwrap();
    na.handle_m2(degradable("second", 2, 20), 0).unwrap();
    let out = na.on_capacity_change(CapacitySchedule::constant(mbps(1)), 10);
    let names: Vec<&str> = out.iter().map(|n| n.agent_id.as_str()).collect();
    assert_eq!(names, vec!["second", "first"]);
}

#[test]
fn m4_after_conflict_is_accepted() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let out = na.handle_m4(dtb_split(), None, 3).unwrap();
    assert!(matches!(out, M4Outcome::Accepted(_)));
}

#[test]
fn identical_m4_replaces_idempotently() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let (_, seq) = na.handle_m2(dtb_split(), 3).unwrap();
    let seq = seq.unwrap();
    let before: Vec<i64> = (0..1870).map(|t| na.timeline().residual_at(t)).collect();
    let out = na.handle_m4(dtb_split(), Some(seq), 5).unwrap();
    let M4Outcome::Accepted(new) = out else { panic!("{out:?}") };
    assert_ne!(new, seq);
    assert_eq!(na.timeline().commitment(seq).unwrap().state, CommitmentState::Superseded);
    let after: Vec<i64> = (0..1870).map(|t| na.timeline().residual_at(t)).collect();
    assert_eq!(before, after);
}

#[test]
fn m4_beyond_residual_is_rejected_and_keeps_the_old_commitment() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let (_, seq) = na.handle_m2(dtb_split(), 3).unwrap();
    let seq = seq.unwrap();
    let greedy = {
        let mut t = dtb_split();
        t.rerate_over(&iv(470, 1570), &testbed_catalog(), |_, _| mbps(30));
        t
    };
    let out = na.handle_m4(greedy, Some(seq), 5).unwrap();
    match out {
        M4Outcome::Rejected(FeasibilityVerdict::Conflict(c)) => {
            assert_eq!(c, vec![ConflictEntry { interval: iv(550, 800), max_admissible: Some(mbps(10)) }]);
        }
        other => panic!("{other:?}"),
    }
    assert!(na.timeline().commitment(seq).unwrap().is_active());
}

#[test]
fn m4_for_unknown_commitment_is_an_error() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let r = na.handle_m4(dtb_split(), Some(99), 0);
    assert!(matches!(r, Err(NetworkError::UnknownCommitment { seq: 99, .. })));
    // The competitor's commitment belongs to another workflow.
    let r = na.handle_m4(dtb_split(), Some(1), 0);
    assert!(matches!(r, Err(NetworkError::UnknownCommitment { .. })));
}

#[test]
fn withdrawal_frees_the_commitment() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    let (_, seq) = na.handle_m2(dtb_split(), 3).unwrap();
    let w = DemandTrajectory::withdrawal(WorkflowId::new("dtb"), AgentId::new("dtb"), 3);
    assert_eq!(na.handle_m4(w, seq, 10).unwrap(), M4Outcome::Withdrawn);
    assert_eq!(na.timeline().residual_at(600), 10_000);
}

#[test]
fn zero_slide_keeps_envelopes() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    na.register(AgentId::new("dtb"));
    let a = na.advance_window(0);
    let b = na.advance_window(0);
    assert_eq!(a, b);
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].scope_agent_id, AgentId::new("dtb"));
}

#[test]
fn sliding_past_a_commitment_completes_it() {
    let (tl, _) = contended();
    let mut na = agent(tl, testbed_catalog());
    na.register(AgentId::new("dtb"));
    let before = na.advance_window(700)[0].clone();
    assert_eq!(validity(&before, 30)[0], iv(800, 2570));
    let done = na.advance_window(800);
    assert!(na.timeline().commitment(1).is_none_or(|c| c.state == CommitmentState::Completed));
    assert_eq!(validity(&done[0], 30), vec![iv(800, 2670)]);
}

#[test]
fn sliding_into_a_new_epoch_shows_its_capacity() {
    let cat = catalog(&[1, 10, 30]);
    let sched = CapacitySchedule::new(vec![(0, mbps(10)), (3000, mbps(30))]).unwrap();
    let tl = CapabilityTimeline::new(sched, PlanningWindow::new(0, 2000).unwrap());
    let mut na = agent(tl, cat);
    na.register(AgentId::new("a"));
    assert!(validity(&na.advance_window(0)[0], 30).is_empty());
    let env = &na.advance_window(1500)[0];
    assert_eq!(validity(env, 30), vec![iv(3000, 3500)]);
    assert_eq!(validity(env, 10), vec![iv(1500, 3500)]);
}

#[test]
fn baseline_admission_uses_the_instant_only() {
    let (tl, _) = contended();
    assert_eq!(baseline_admit(&tl, mbps(30), 470), BaselineDecision::Granted);
    assert_eq!(baseline_admit(&tl, mbps(30), 660), BaselineDecision::Rejected);
    assert_eq!(baseline_admit(&tl, mbps(10), 660), BaselineDecision::Granted);
}

#[test]
fn envelope_serialization_names_only_the_scope() {
    let mut tl = testbed_timeline(1000);
    for k in 0..3 {
        tl.insert(flat(&format!("secret-wf-{k}"), &format!("secret-agent-{k}"), 1, 100 * k, 100 * k + 50, mbps(5)));
    }
    let env = derive_envelope(&tl, &testbed_catalog(), AgentId::new("scope"));
    let json = serde_json::to_string(&env).unwrap();
    assert!(!json.contains("secret"), "{json}");
    assert!(json.contains("\"scope\""));
}

fn arb_timeline(h: Tick) -> impl Strategy<Value = (CapabilityTimeline, Vec<u64>, Tick)> {
    (arb_levels(), arb_schedule(h), 0..h / 2).prop_flat_map(move |(levels, sched, start)| {
        let ts = prop::collection::vec(arb_flat(h, levels.clone()), 0..=5);
        (Just(levels), Just(sched), Just(start), ts, 1..h)
    })
    .prop_map(|(levels, sched, start, ts, len)| {
        let mut tl = CapabilityTimeline::new(sched, PlanningWindow::new(start, len).unwrap());
        for (k, mut t) in ts.into_iter().enumerate() {
            t.workflow_id = WorkflowId::new(format!("w{k}"));
            tl.insert(t);
        }
        (tl, levels, start)
    })
}

#[derive(Clone, Debug)]
enum Op {
    M2(DemandTrajectory),
    M4(usize, DemandTrajectory),
    Slide(Tick),
    Release(usize),
}

fn arb_ops() -> impl Strategy<Value = (CapacitySchedule, Vec<Op>)> {
    let levels = vec![1, 5, 10, 20, 30];
    let op = prop_oneof![
        4 => arb_flat(500, levels.clone()).prop_map(Op::M2),
        3 => (0usize..8, arb_flat(500, levels)).prop_map(|(i, t)| Op::M4(i, t)),
        1 => (0u64..60).prop_map(Op::Slide),
        1 => (0usize..8).prop_map(Op::Release),
    ];
    (arb_schedule(500), prop::collection::vec(op, 1..25))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn envelope_equals_per_tick_oracle((tl, levels, _) in arb_timeline(500)) {
        let cat = catalog(&levels);
        let env = derive_envelope(&tl, &cat, AgentId::new("s"));
        prop_assert_eq!(env.entries.len(), levels.len());
        let w = tl.window().interval();
        for (e, m) in env.entries.iter().zip(&levels) {
            let want: Vec<Tick> = (w.start()..w.end())
                .filter(|&t| brute_active_residual(&tl, t) >= mbps(*m).0 as i64)
                .collect();
            prop_assert_eq!(ticks_of(&e.validity), want.clone());
            let head = want.iter().map(|&t| brute_active_residual(&tl, t)).min().unwrap_or(0);
            prop_assert_eq!(e.headroom.0 as i64, head);
        }
    }

    #[test]
    fn assessment_equals_per_tick_oracle(
        (tl, levels, _) in arb_timeline(400),
        probe in arb_flat(400, vec![1, 5, 10, 20, 30]),
    ) {
        let cat = catalog(&levels);
        let verdict = tl.assess_feasibility(&cat, &probe).unwrap();
        let w = tl.window().interval();
        let bad: Vec<Tick> = (w.start()..w.end())
            .filter(|&t| probe.demand_at(t).0 > 0)
            .filter(|&t| brute_active_residual(&tl, t) < probe.demand_at(t).0 as i64)
            .collect();
        match verdict {
            FeasibilityVerdict::Accept => prop_assert!(bad.is_empty()),
            FeasibilityVerdict::Conflict(c) => {
                let set = IntervalSet::from_intervals(c.iter().map(|e| e.interval));
                prop_assert_eq!(set.intervals().len(), c.len(), "maximal and disjoint");
                prop_assert_eq!(ticks_of(&set), bad);
                for e in &c {
                    let floor = (e.interval.start()..e.interval.end()).map(|t| brute_active_residual(&tl, t)).min().unwrap();
                    let want = levels.iter().rev().map(|m| mbps(*m)).find(|r| r.0 as i64 <= floor);
                    prop_assert_eq!(e.max_admissible, want);
                }
            }
        }
    }

    #[test]
    fn accepted_commit_never_overcommits(
        levels in arb_levels(),
        sched in arb_schedule(400),
        ts in prop::collection::vec(arb_flat(400, vec![1, 5, 10, 20, 30]), 1..8),
    ) {
        let cat = catalog(&levels);
        let mut tl = CapabilityTimeline::new(sched, PlanningWindow::new(0, 400).unwrap());
        for (k, mut t) in ts.into_iter().enumerate() {
            t.workflow_id = WorkflowId::new(format!("w{k}"));
            let ok = tl.assess_feasibility(&cat, &t).unwrap().is_accept();
            let before: Vec<i64> = (0..400).map(|x| brute_active_residual(&tl, x)).collect();
            if ok {
                tl.commit(&cat, t.clone()).unwrap();
                for x in 0..400 {
                    prop_assert!(brute_active_residual(&tl, x) >= 0);
                    prop_assert_eq!(brute_active_residual(&tl, x), before[x as usize] - t.demand_at(x).0 as i64);
                }
            } else {
                prop_assert!(tl.commit(&cat, t).is_err());
            }
        }
    }

    #[test]
    fn operation_sequences_keep_the_window_feasible((sched, ops) in arb_ops()) {
        let cat = catalog(&[1, 5, 10, 20, 30]);
        let tl = CapabilityTimeline::new(sched, PlanningWindow::new(0, 600).unwrap());
        let mut na = agent(tl, cat);
        let mut next = 0;
        let mut now = 0;
        for op in ops {
            let live: Vec<(u64, WorkflowId)> = na
                .timeline()
                .active()
                .map(|c| (c.admission_seq, c.trajectory.workflow_id.clone()))
                .collect();
            match op {
                Op::M2(mut t) => {
                    t.workflow_id = WorkflowId::new(format!("w{next}"));
                    next += 1;
                    na.handle_m2(t, now).unwrap();
                }
                Op::M4(i, mut t) if !live.is_empty() => {
                    let (seq, wf) = &live[i % live.len()];
                    t.workflow_id = wf.clone();
                    let before = na.timeline().commitment(*seq).unwrap().trajectory.clone();
                    match na.handle_m4(t, Some(*seq), now).unwrap() {
                        M4Outcome::Accepted(_) => {
                            prop_assert_eq!(na.timeline().commitment(*seq).unwrap().state, CommitmentState::Superseded);
                        }
                        M4Outcome::Rejected(_) => {
                            let c = na.timeline().commitment(*seq).unwrap();
                            prop_assert!(c.is_active());
                            prop_assert_eq!(&c.trajectory, &before);
                        }
                        M4Outcome::Withdrawn => unreachable!(),
                    }
                }
                Op::Slide(d) => {
                    now += d;
                    na.advance_window(now);
                }
                Op::Release(i) if !live.is_empty() => na.release(&live[i % live.len()].1, now),
                _ => {}
            }
            let w = na.timeline().window().interval();
            for t in w.start()..w.end() {
                prop_assert!(brute_active_residual(na.timeline(), t) >= 0, "overcommitted at {}", t);
            }
            let seqs: Vec<u64> = na.timeline().commitments().map(|c| c.admission_seq).collect();
            prop_assert!(seqs.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn notices_follow_importance_order(
        caps in (20u64..80, 0u64..40),
        loads in prop::collection::vec((0i32..4, 0usize..3, 0u64..300, 50u64..300), 1..7),
    ) {
        let levels = [1, 5, 10];
        let cat = catalog(&levels);
        let tl = CapabilityTimeline::new(CapacitySchedule::constant(mbps(caps.0)), PlanningWindow::new(0, 600).unwrap());
        let mut na = agent(tl, cat);
        for (k, (prio, li, a, len)) in loads.iter().enumerate() {
            let w = format!("w{k}");
            let mut t = flat(&w, &w, *prio, *a, a + len, mbps(levels[*li]));
            t.phases[0].min_acceptable = mbps(1);
            t.permissions.allow_downgrade = true;
            na.handle_m2(t, 0).unwrap();
        }
        let before: Vec<(u64, DemandTrajectory)> = na.timeline().active().map(|c| (c.admission_seq, c.trajectory.clone())).collect();
        let sched = CapacitySchedule::constant(mbps(caps.1));
        let out = na.on_capacity_change(sched.clone(), 0);
        for p in out.windows(2) {
            let ok = p[0].priority < p[1].priority
                || (p[0].priority == p[1].priority && p[0].admission_seq > p[1].admission_seq);
            prop_assert!(ok, "{:?} before {:?}", (p[0].priority, p[0].admission_seq), (p[1].priority, p[1].admission_seq));
        }
        // Each alternative fits once the notices issued before it are adopted.
        let mut adopted: Vec<(u64, DemandTrajectory)> = before.clone();
        let mut issue: Vec<&Notice> = out.iter().collect();
        issue.sort_by(|a, b| a.priority.cmp(&b.priority).then(b.admission_seq.cmp(&a.admission_seq)));
        for n in issue {
            prop_assert_eq!(n.notification.direction, Direction::Degradation);
            for a in &n.notification.affected {
                let room = (a.interval.start()..a.interval.end())
                    .map(|t| {
                        let others: Vec<&DemandTrajectory> = adopted.iter().filter(|(s, _)| *s != n.admission_seq).map(|(_, t)| t).collect();
                        brute_residual(&sched, &others, t)
                    })
                    .min()
                    .unwrap();
                for r in &a.alternatives {
                    prop_assert!(r.0 as i64 <= room, "alternative {} over room {}", r.0, room);
                }
                prop_assert!(a.alternatives.windows(2).all(|p| p[0] > p[1]));
            }
            let (_, t) = adopted.iter_mut().find(|(s, _)| *s == n.admission_seq).unwrap();
            for a in &n.notification.affected {
                let best = a.alternatives.first().copied().unwrap_or(Kbps::ZERO);
                let mut split = t.clone();
                split.segments = t
                    .segments
                    .iter()
                    .flat_map(|s| {
                        let mut parts = Vec::new();
                        match s.interval.intersect(&a.interval) {
                            None => parts.push(s.clone()),
                            Some(mid) => {
                                if s.interval.start() < mid.start() {
                                    parts.push(SegmentAssignment { interval: iv(s.interval.start(), mid.start()), ..s.clone() });
                                }
                                parts.push(SegmentAssignment { interval: mid, rate: s.rate.min(best), ..s.clone() });
                                if mid.end() < s.interval.end() {
                                    parts.push(SegmentAssignment { interval: iv(mid.end(), s.interval.end()), ..s.clone() });
                                }
                            }
                        }
                        parts
                    })
                    .collect();
                *t = split;
            }
        }
    }
}
