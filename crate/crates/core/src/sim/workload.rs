use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::config::{agent_name, scripted_spec, ClassMix, ScenarioConfig, WorkloadConfig};
use crate::model::{
    Kbps, PhaseId, PhaseSpec, ProfileCatalog, Tick, WorkflowClass, WorkflowId, WorkflowSpec,
};

/// Independent stream for agent `agent` under `seed`. Streams are fixed per
/// agent index, so adding agents never changes existing agents' workloads.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &ClassMix) -> WorkflowClass {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for c in WorkflowClass::ALL {
        acc += mix.get(c).share;
        if u < acc {
            return c;
        }
    }
    // Shares sum to 1 up to rounding.
    *WorkflowClass::ALL
        .iter()
        .rev()
        .find(|c| mix.get(**c).share > 0.0)
        .unwrap_or(&WorkflowClass::BackgroundSensing)
}

#[allow(clippy::too_many_arguments)]
fn generate_one(
    rng: &mut ChaCha8Rng,
    catalog: &ProfileCatalog,
    mix: &ClassMix,
    phases: (u32, u32),
    phase_ticks: (Tick, Tick),
    min_offset_levels: usize,
    id: WorkflowId,
    agent: usize,
    release_tick: Tick,
) -> WorkflowSpec {
    let class = pick_class(rng, mix);
    let cc = mix.get(class);
    let n = rng.random_range(phases.0..=phases.1);
    let phases = (0..n)
        .map(|k| {
            let duration = rng.random_range(phase_ticks.0..=phase_ticks.1);
            let preferred =
                Kbps::from_mbps_f64(cc.preferred_mbps[rng.random_range(0..cc.preferred_mbps.len())]);
            let min_acceptable = catalog
                .levels_below(preferred, min_offset_levels)
                .map_or(preferred, |p| p.rate);
            let deferrable = cc.deferrable_fraction > 0.0 && rng.random_bool(cc.deferrable_fraction);
            PhaseSpec {
                phase_id: PhaseId::new(format!("p{k}")),
                order_index: k,
                duration,
                preferred,
                min_acceptable,
                deferrable,
                max_deferral: if deferrable { cc.max_deferral_ticks } else { 0 },
                criticality: class.criticality(),
            }
        })
        .collect();
    WorkflowSpec {
        workflow_id: id,
        agent_id: agent_name(agent),
        class,
        priority: cc.priority,
        phases,
        release_tick,
    }
}

/// Every workflow of the scenario, ordered by (release tick, agent, index).
pub fn generate(config: &ScenarioConfig, catalog: &ProfileCatalog) -> Vec<WorkflowSpec> {
    let mut out = match &config.workload {
        WorkloadConfig::Scripted { workflows } => workflows
            .iter()
            .map(|w| scripted_spec(w).expect("validated config"))
            .collect(),
        WorkloadConfig::Poisson {
            mean_interarrival_ticks,
            phases,
            phase_ticks,
            min_offset_levels,
            classes,
        } => {
            let exp = Exp::new(1.0 / mean_interarrival_ticks).expect("validated mean");
            let mut v = Vec::new();
            for agent in 0..config.agent_count {
                let mut rng = agent_rng(config.seed, agent);
                let mut t = 0.0f64;
                let mut k = 0;
                loop {
                    t += exp.sample(&mut rng);
                    let release = t.floor() as Tick;
                    if release >= config.duration_ticks {
                        break;
                    }
                    v.push(generate_one(
                        &mut rng,
                        catalog,
                        classes,
                        *phases,
                        *phase_ticks,
                        *min_offset_levels,
                        WorkflowId::new(format!("{}-w{k}", agent_name(agent))),
                        agent,
                        release,
                    ));
                    k += 1;
                }
            }
            v
        }
    };
    out.sort_by(|a, b| {
        (a.release_tick, &a.agent_id, &a.workflow_id).cmp(&(b.release_tick, &b.agent_id, &b.workflow_id))
    });
    out
}
