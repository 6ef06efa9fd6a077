//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use wfqos::industrial::{adapt, AdaptContext, AdaptOutcome, AdaptationPolicy};
use wfqos::network::*;
use wfqos::protocol::{decode, encode, Message};
use wfqos::sim::{self, Mode, RunMetrics, ScenarioConfig, WorkloadConfig};
use wfqos::*;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn testbed() -> ScenarioConfig {
    sim::bundled_config("testbed").unwrap()
}

fn gap(c: &RunMetrics, b: &RunMetrics) -> f64 {
    (c.completion_rate - b.completion_rate) * 100.0
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let r = sim::run_mode(&testbed(), Mode::Coordinated).map_err(|e| e.to_string())?;
    let wall = start.elapsed();
    let m = &r.metrics;
    ensure(m.stream_interruptions == 0, format!("{} interruptions", m.stream_interruptions))?;
    let triggers: Vec<Tick> = m.adaptation_rounds.iter().map(|a| a.trigger_tick).collect();
    ensure(triggers == [800, 1100, 1300], format!("rounds at {triggers:?}"))?;
    for a in &m.adaptation_rounds {
        let d = a.duration().ok_or(format!("round at {} never completed", a.trigger_tick))?;
        ensure(d.abs_diff(22) <= 1, format!("round at {} took {d} ticks", a.trigger_tick))?;
    }
    ensure(wall < Duration::from_secs(1), format!("took {wall:?}"))?;
    Ok(format!("0 interruptions, rounds {triggers:?} in {:?} ticks, {wall:.2?}", m.adaptation_times_ticks))
}

fn criterion_2() -> Check {
    let m = sim::run_mode(&testbed(), Mode::Baseline).map_err(|e| e.to_string())?.metrics;
    ensure(m.stream_interruptions == 1, format!("{} interruptions", m.stream_interruptions))?;
    let i = &m.interruptions[0];
    ensure(i.duration == 82, format!("interruption lasted {} ticks", i.duration))?;
    ensure(i.start.abs_diff(660) <= 1, format!("interruption started at {}", i.start))?;
    let tp = m.mean_active_throughput_mbps;
    ensure((tp - 10.5).abs() <= 0.5, format!("throughput {tp:.2} Mbps"))?;
    Ok(format!("1 interruption at {} for {} ticks, {tp:.2} Mbps", i.start, i.duration))
}

/// Hand integration of the coordinated schedule over patrol and inspection:
/// each upgrade lands one adaptation time after its trigger, the drop is
/// clamped by the cell at once.
fn ideal_coordinated_mbps(lag: Tick) -> f64 {
    let pieces: [(Tick, Tick, f64); 7] = [
        (100, 470, 10.0),
        (470, 550, 30.0),
        (550, 800 + lag, 10.0),
        (800 + lag, 1100, 30.0),
        (1100, 1300 + lag, 10.0),
        (1300 + lag, 1570, 30.0),
        (1570, 1570, 0.0),
    ];
    let bits: f64 = pieces.iter().map(|(a, b, r)| (b - a) as f64 * r).sum();
    bits / (1570 - 100) as f64
}

fn criterion_3() -> Check {
    let r = sim::replay_testbed(&testbed()).map_err(|e| e.to_string())?;
    let tp = &r.comparison.mean_active_throughput_mbps;
    let ideal = ideal_coordinated_mbps(22);
    ensure((tp.coordinated - ideal).abs() < 0.05, format!("coordinated {:.3} vs ideal {ideal:.3}", tp.coordinated))?;
    let ratio = tp.coordinated / tp.baseline;
    ensure(ratio >= 1.5, format!("ratio {ratio:.3}"))?;
    Ok(format!("{:.2} vs {:.2} Mbps, ratio {ratio:.2}", tp.coordinated, tp.baseline))
}

fn criterion_4() -> Check {
    let c = sim::bundled_config("heavy120").unwrap();
    let start = Instant::now();
    let co = sim::run_mode(&c, Mode::Coordinated).map_err(|e| e.to_string())?.metrics;
    let ba = sim::run_mode(&c, Mode::Baseline).map_err(|e| e.to_string())?.metrics;
    let wall = start.elapsed();
    let g = gap(&co, &ba);
    let summary = format!(
        "coordinated {:.3}, baseline {:.3}, gap {g:.1} pp, rejections {}/{} (baseline failed {}), {wall:.2?}",
        co.completion_rate, ba.completion_rate, co.hard_rejections, ba.hard_rejections, ba.failed
    );
    ensure(co.hard_rejections == 0, format!("coordinated rejections: {summary}"))?;
    ensure(ba.hard_rejections == ba.failed, format!("baseline rejections differ from failures: {summary}"))?;
    ensure(wall < Duration::from_secs(30), format!("slow: {summary}"))?;
    ensure(g >= 15.0, format!("gap below 15 pp: {summary}"))?;
    Ok(summary)
}

fn criterion_5() -> Check {
    let c = sim::bundled_config("sweep").unwrap();
    let counts: Vec<usize> = (50..=185).step_by(15).collect();
    let rows = sim::pressure_sweep(&c, &counts).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for p in rows.chunks(2) {
        let (co, ba) = (&p[0], &p[1]);
        ensure(co.mode == Mode::Coordinated && ba.mode == Mode::Baseline, "row order")?;
        ensure(
            co.completion_rate >= ba.completion_rate,
            format!("{} agents: coordinated {:.3} < baseline {:.3}", co.agents, co.completion_rate, ba.completion_rate),
        )?;
        gaps.push((co.completion_rate - ba.completion_rate) * 100.0);
    }
    let (first, last) = (gaps[0], *gaps.last().unwrap());
    ensure(last > first, format!("gap(185) {last:.1} pp <= gap(50) {first:.1} pp"))?;
    Ok(format!("gap(50) {first:.1} pp, gap(185) {last:.1} pp, coordinated ahead at all {} points", gaps.len()))
}

fn small_timeline(horizon: Tick) -> impl Strategy<Value = CapabilityTimeline> {
    (arb_schedule(horizon), prop::collection::vec(arb_flat(horizon, vec![1, 5, 10, 20]), 0..=4)).prop_map(
        move |(s, loads)| {
            let mut tl = CapabilityTimeline::new(s, PlanningWindow::new(0, horizon).unwrap());
            for (k, mut t) in loads.into_iter().enumerate() {
                t.workflow_id = WorkflowId::new(format!("x{k}"));
                tl.insert(t);
            }
            tl
        },
    )
}

fn small_scenario() -> impl Strategy<Value = ScenarioConfig> {
    (any::<u64>(), 0usize..6, 200u64..800, prop::collection::vec((1u64..800, 5u64..60), 0..2)).prop_map(
        |(seed, agents, duration, events)| {
            let mut c = sim::bundled_config("heavy120").unwrap();
            c.seed = seed;
            c.agent_count = agents;
            c.duration_ticks = duration;
            c.drain_ticks = 2000;
            c.capacity.epochs = vec![(0, 60.0)];
            c.capacity.events = events.into_iter().map(|(t, m)| (t, m as f64)).collect();
            if let WorkloadConfig::Poisson { mean_interarrival_ticks, phase_ticks, phases, .. } = &mut c.workload {
                *mean_interarrival_ticks = 300.0;
                *phase_ticks = (10, 150);
                *phases = (1, 3);
            }
            c
        },
    )
}

const CASES: u32 = 200;

fn suite<S: Strategy>(name: &str, s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&s, f).map_err(|e| format!("{name}: {e}"))
}

fn criterion_6() -> Check {
    let cat = catalog(&[1, 5, 10, 20]);
    suite("envelope soundness and maximality", small_timeline(200), |tl| {
        let env = derive_envelope(&tl, &cat, AgentId::new("a"));
        for e in &env.entries {
            for t in 0..200 {
                let valid = brute_active_residual(&tl, t) >= e.rate.0 as i64;
                prop_assert_eq!(e.validity.contains(t), valid, "rate {:?} tick {}", e.rate, t);
            }
        }
        Ok(())
    })?;
    suite(
        "no overcommitment after operation sequences",
        (arb_schedule(200), prop::collection::vec((arb_flat(200, vec![1, 5, 10, 20]), 0u8..3), 1..8)),
        |(s, ops)| {
            let tl = CapabilityTimeline::new(s.clone(), PlanningWindow::new(0, 200).unwrap());
            let mut na = NetworkAgent::new(tl, cat.clone(), RecordingEnforcer::new(0), Stage2Config::default());
            let mut seqs = Vec::new();
            for (k, (mut t, op)) in ops.into_iter().enumerate() {
                t.workflow_id = WorkflowId::new(format!("w{k}"));
                match (op, seqs.last().cloned()) {
                    (1, Some((seq, w))) => {
                        t.workflow_id = w;
                        let _ = na.handle_m4(t, Some(seq), 0);
                    }
                    (2, Some((_, w))) => na.release(&w, 0),
                    _ => {
                        let w = t.workflow_id.clone();
                        if let Ok((_, Some(seq))) = na.handle_m2(t, 0) {
                            seqs.push((seq, w));
                        }
                    }
                }
                for x in 0..200 {
                    prop_assert!(brute_active_residual(na.timeline(), x) >= 0, "overcommitted at {}", x);
                }
            }
            Ok(())
        },
    )?;
    suite("accept implies commit-safe", (small_timeline(200), arb_flat(200, vec![1, 5, 10, 20])), |(mut tl, t)| {
        if tl.assess_feasibility(&cat, &t).unwrap().is_accept() {
            let before: Vec<i64> = (0..200).map(|x| brute_active_residual(&tl, x)).collect();
            tl.commit(&cat, t.clone()).unwrap();
            for x in 0..200 {
                let after = brute_active_residual(&tl, x);
                if t.demand_at(x) > Kbps::ZERO {
                    prop_assert!(after >= 0, "tick {} left at {}", x, after);
                } else {
                    prop_assert_eq!(after, before[x as usize]);
                }
            }
        }
        Ok(())
    })?;
    let tcat = testbed_catalog();
    let (_, env) = contended();
    let st = state_with(dtb_spec(), dtb_split(), Some(2));
    suite(
        "adaptation within bounds",
        (470u64..1500, 1u64..300, prop::sample::subsequence(vec![30u64, 10, 1], 0..=3), 0u64..1100),
        |(a, len, alts, now)| {
            let n = CapabilityNotification {
                workflow_id: WorkflowId::new("dtb"),
                direction: Direction::Degradation,
                affected: vec![AffectedSegment { interval: iv(a, (a + len).min(1570)), alternatives: alts.into_iter().map(mbps).collect() }],
            };
            let ctx = AdaptContext { catalog: &tcat, envelope: &env, now, siblings: &[] };
            if let AdaptOutcome::Revised { trajectory: t, .. } = adapt(&st, &n, &AdaptationPolicy::default(), &ctx) {
                for s in &t.segments {
                    let p = t.phase(&s.phase_id).unwrap();
                    prop_assert!(s.rate >= p.min_acceptable && s.rate <= p.preferred);
                }
                for (i, p) in t.phases.iter().enumerate() {
                    prop_assert!(t.deferral_of(i) <= p.max_deferral);
                }
            }
            Ok(())
        },
    )?;
    suite("outcome conservation", small_scenario(), |c| {
        for mode in [Mode::Coordinated, Mode::Baseline] {
            let m = sim::run_mode(&c, mode).unwrap().metrics;
            prop_assert!(m.is_conserved());
        }
        Ok(())
    })?;
    suite("codec round trip", (arb_flat(500, vec![1, 5, 10]), any::<u64>(), "[a-z]{1,8}"), |(t, seq, who)| {
        let m = Message::trajectory(seq, who, t);
        let line = encode(&m);
        prop_assert_eq!(&decode(&line).unwrap(), &m);
        prop_assert_eq!(encode(&decode(&line).unwrap()), line);
        Ok(())
    })?;
    suite("determinism", small_scenario(), |c| {
        for mode in [Mode::Coordinated, Mode::Baseline] {
            prop_assert_eq!(sim::run_mode(&c, mode).unwrap().log, sim::run_mode(&c, mode).unwrap().log);
        }
        Ok(())
    })?;
    Ok(format!("7 suites x {CASES} cases"))
}

fn criterion_7() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let checked = std::cell::Cell::new(0usize);
    let s = (prop::collection::vec((0usize..3, 0u64..200, 10u64..200, 0usize..5), 1..5), 0u64..20);
    runner
        .run(&s, |(ws, slack)| {
            let mut c = testbed();
            c.external.clear();
            c.capacity.events.clear();
            c.agent_count = 3;
            c.overrun = None;
            let levels = [1.0, 10.0, 20.0, 30.0];
            let WorkloadConfig::Scripted { workflows } = &mut c.workload else { unreachable!() };
            let template = workflows[0].clone();
            workflows.clear();
            let mut peak = 0.0;
            for (i, (agent, release, ticks, li)) in ws.iter().enumerate() {
                let pref = levels[li % levels.len()];
                peak += pref;
                let mut w = template.clone();
                w.id = format!("w{i}");
                w.agent = *agent;
                w.release_tick = *release;
                w.phases.truncate(1);
                w.phases[0].ticks = *ticks;
                w.phases[0].preferred_mbps = pref;
                w.phases[0].min_mbps = pref;
                workflows.push(w);
            }
            c.profiles.retain(|p| levels.contains(&p.mbps));
            c.capacity.epochs = vec![(0, peak + slack as f64)];
            let co = sim::run_mode(&c, Mode::Coordinated).unwrap().metrics;
            let ba = sim::run_mode(&c, Mode::Baseline).unwrap().metrics;
            prop_assert_eq!(co.completed_optimal, co.total_workflows);
            prop_assert_eq!(
                (co.total_workflows, co.completed_optimal, co.completed_degraded, co.failed),
                (ba.total_workflows, ba.completed_optimal, ba.completed_degraded, ba.failed)
            );
            checked.set(checked.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{} constructed scenarios, all optimal in both modes", checked.get()))
}

fn main() {
    let checks: [Criterion; 7] = [
        (1, "testbed coordinated", criterion_1),
        (2, "testbed baseline", criterion_2),
        (3, "testbed throughput ratio", criterion_3),
        (4, "heavy-traffic gap", criterion_4),
        (5, "pressure sweep", criterion_5),
        (6, "property suites", criterion_6),
        (7, "equivalence under abundance", criterion_7),
    ];
    let mut failed = 0;
    for (n, name, f) in checks {
        let start = Instant::now();
        let out = f();
        let wall = start.elapsed();
        match out {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{wall:.2?}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{wall:.2?}] {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 7 criteria failed");
        std::process::exit(1);
    }
    println!("all 7 criteria passed");
}
