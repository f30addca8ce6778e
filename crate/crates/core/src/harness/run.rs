use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use super::checkpoint;
use super::config::RunConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use crate::agent::{DqnAgent, NetworkSpec, QNetwork, TargetSync};
use crate::envs;
use crate::error::{Error, Result};
use crate::lcr::{self, Lcr, LcrReport};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::{self, Stream};

/// Hooks into a single run. All methods default to no-ops.
pub trait RunObserver {
    fn on_episode(&mut self, _row: &MetricsRow) {}
    /// Called just before an LCR invocation.
    fn before_lcr(&mut self, _net: &QNetwork) {}
    /// Called right after it, with its report when any window existed.
    fn after_lcr(&mut self, _net: &QNetwork, _report: Option<&LcrReport>) {}
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

/// Outcome of one seeded run.
pub struct RunResult {
    pub rows: Vec<MetricsRow>,
    pub agent: DqnAgent,
    /// LCR invocations; always 0 without an `lcr` table.
    pub lcr_calls: u64,
}

/// Execute run `run_id` of `cfg` to completion. Each run owns its
/// environment, agent, buffer and three random streams.
pub fn run_single(cfg: &RunConfig, run_id: usize, observer: &mut dyn RunObserver) -> Result<RunResult> {
    let seed = cfg.run_seed(run_id);
    let mut env_rng = rng::stream(seed, Stream::Environment);
    let mut agent_rng = rng::stream(seed, Stream::Agent);
    let mut lcr_rng = rng::stream(seed, Stream::Lcr);

    let mut env = envs::make(&cfg.env)?;
    let spec = cfg
        .agent
        .network
        .clone()
        .unwrap_or_else(|| NetworkSpec::default_for(env.observation_kind()));
    let net = QNetwork::build(&spec, &env.observation_shape(), env.num_actions(), &mut agent_rng)?;
    let mut agent = DqnAgent::new(cfg.agent.clone(), net)?;
    let mut buffer = ReplayBuffer::new(cfg.agent.max_buffer_size, cfg.agent.min_buffer_size)?;
    let mut lcr = cfg.lcr.clone().map(Lcr::new).transpose()?;

    let mut rows = Vec::with_capacity(cfg.episodes);
    let mut t: u64 = 0;
    for episode in 0..cfg.episodes {
        let epsilon = cfg.agent.epsilon(episode);
        let mut obs = env.reset(&mut env_rng);
        let (mut ret, mut td_sum, mut td_n) = (0.0, 0.0, 0usize);
        let mut lcr_losses = None;
        for step_index in 0.. {
            let action = agent.act(&obs, epsilon, &mut agent_rng)?;
            let sr = env.step(action)?;
            ret += sr.reward;
            let done = sr.done();
            buffer.push(Transition {
                state: obs,
                action,
                reward: sr.reward,
                next_state: sr.observation.clone(),
                terminated: sr.terminated,
                episode_id: episode as u64,
                step_index,
            });
            t += 1;
            if let Some(loss) = agent.train_step(&buffer, &mut agent_rng)? {
                td_sum += loss;
                td_n += 1;
            }
            if let TargetSync::Steps(n) = cfg.agent.copy_step {
                if t.is_multiple_of(n as u64) {
                    agent.sync_target();
                }
            }
            if let Some(l) = lcr.as_mut() {
                if lcr::should_trigger(t, l.config().batch_size) {
                    observer.before_lcr(agent.online());
                    let report = l.run(agent.online(), &buffer, &mut lcr_rng)?;
                    observer.after_lcr(agent.online(), report.as_ref());
                    if let Some(r) = report {
                        lcr_losses = Some((r.first_loss, r.last_loss));
                    }
                }
            }
            obs = sr.observation;
            if done {
                break;
            }
        }
        if let TargetSync::Episodes(n) = cfg.agent.copy_step {
            if (episode + 1) % n == 0 {
                agent.sync_target();
            }
        }
        let row = MetricsRow {
            run_id,
            seed,
            episode,
            total_env_steps: t,
            episode_return: ret,
            epsilon,
            mean_td_loss: (td_n > 0).then(|| td_sum / td_n as f64),
            lcr_loss_first: lcr_losses.map(|l| l.0),
            lcr_loss_last: lcr_losses.map(|l| l.1),
        };
        observer.on_episode(&row);
        rows.push(row);
    }
    Ok(RunResult {
        rows,
        agent,
        lcr_calls: lcr.map_or(0, |l| l.calls()),
    })
}

pub fn model_path(dir: &Path, run_id: usize) -> PathBuf {
    dir.join(format!("model_run{run_id}.bin"))
}

/// Run every seed of `cfg`, writing `out_dir/metrics.csv` and, when enabled,
/// one checkpoint per run. Returns the metrics path.
pub fn run_experiment(cfg: &RunConfig) -> Result<PathBuf> {
    let path = cfg.out_dir.join("metrics.csv");
    run_to(cfg, &path, &cfg.out_dir)?;
    Ok(path)
}

enum Msg {
    Row(MetricsRow),
    Done(usize, Result<()>),
}

/// Rows are written in `(run_id, episode)` order whatever the worker count,
/// so the file depends only on the config.
pub(super) fn run_to(cfg: &RunConfig, metrics: &Path, model_dir: &Path) -> Result<()> {
    cfg.validate()?;
    let mut writer = MetricsWriter::create(metrics)?;
    let workers = cfg.workers.min(cfg.runs);
    let (tx, rx) = mpsc::channel::<Msg>();
    let next_run = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|s| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next_run = &next_run;
            s.spawn(move || loop {
                let r = next_run.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if r >= cfg.runs {
                    break;
                }
                let res = (|| {
                    let mut fwd = Forward { tx: &tx };
                    let out = run_single(cfg, r, &mut fwd)?;
                    if cfg.save_models {
                        checkpoint::save(out.agent.online(), &model_path(model_dir, r))?;
                    }
                    Ok(())
                })();
                let failed = res.is_err();
                let _ = tx.send(Msg::Done(r, res));
                if failed {
                    break;
                }
            });
        }
        drop(tx);

        let mut current = 0;
        let mut pending: BTreeMap<usize, Vec<MetricsRow>> = BTreeMap::new();
        let mut finished: BTreeMap<usize, ()> = BTreeMap::new();
        let mut first_err = None;
        for msg in rx {
            match msg {
                Msg::Row(row) if row.run_id == current => writer.write(&row)?,
                Msg::Row(row) => pending.entry(row.run_id).or_default().push(row),
                Msg::Done(r, res) => {
                    if let Err(e) = res {
                        first_err.get_or_insert(e);
                        // stop handing out work
                        next_run.store(cfg.runs, std::sync::atomic::Ordering::SeqCst);
                    }
                    finished.insert(r, ());
                }
            }
            while finished.contains_key(&current) {
                current += 1;
                for row in pending.remove(&current).unwrap_or_default() {
                    writer.write(&row)?;
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None if current < cfg.runs => Err(Error::Usage("a worker stopped early".into())),
            None => Ok(()),
        }
    })
}

struct Forward<'a> {
    tx: &'a mpsc::Sender<Msg>,
}

impl RunObserver for Forward<'_> {
    fn on_episode(&mut self, row: &MetricsRow) {
        let _ = self.tx.send(Msg::Row(row.clone()));
    }
}
