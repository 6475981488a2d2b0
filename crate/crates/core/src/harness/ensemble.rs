use serde::{Deserialize, Serialize};

use crate::dynamics::{stream_rng, NoiseStream, StepOptions, Stepper, StreamPurpose};
use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, SweepConfig};
use crate::observables::{measure, ObservableRecord, ObservableSelection};
use crate::state::GaussianState;

/// How trajectories are distributed over threads. Results do not depend on
/// the choice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Parallel when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Auto,
    Sequential,
    /// Rayon worker pool; `threads = None` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel {
        threads: Option<usize>,
    },
}

fn map_units<T, R, F>(units: &[T], execution: Execution, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || units.par_iter().map(&f).collect::<Vec<R>>();
        match execution {
            Execution::Sequential => Ok(units.iter().map(&f).collect()),
            Execution::Auto | Execution::Parallel { threads: None } => Ok(run()),
            Execution::Parallel { threads: Some(n) } => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::param(format!("cannot build thread pool: {e}")))?;
                Ok(pool.install(run))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = execution;
        Ok(units.iter().map(&f).collect())
    }
}

/// Everything one trajectory needs besides its id.
#[derive(Clone, Debug)]
pub struct TrajectoryPlan {
    config: RunConfig,
    stepper: Stepper,
    selection: ObservableSelection,
    sample_steps: Vec<usize>,
}

impl TrajectoryPlan {
    pub fn new(config: &RunConfig, options: StepOptions) -> Result<Self> {
        config.validate()?;
        let params = config.model_params()?;
        Ok(Self {
            config: config.clone(),
            stepper: Stepper::with_options(params, options)?,
            selection: config.selection()?,
            sample_steps: config.sample_steps()?,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    /// Records at the sampling times of trajectory `id`. Deterministic in
    /// `(config, id)`.
    pub fn run(&self, id: u64) -> Result<Vec<ObservableRecord>> {
        let params = self.stepper.params();
        let seed = self.config.master_seed;
        let mut rng = stream_rng(seed, id, StreamPurpose::InitialState);
        let mut state = GaussianState::random_occupation_with(params, &mut rng)?;
        let mut noise = NoiseStream::new(seed, id, params);
        let qr = self.stepper.options().qr;
        let mut done = 0usize;
        let mut records = Vec::with_capacity(self.sample_steps.len());
        for &target in &self.sample_steps {
            self.stepper.evolve(&mut state, &mut noise, target - done)?;
            done = target;
            state.ensure_normalized(qr)?;
            records.push(measure(
                &state.correlation_matrix(),
                target as f64 * params.dt,
                &self.selection,
            )?);
        }
        Ok(records)
    }

    /// Time-window mean of trajectory `id`, or the reason it aborted.
    pub fn summarize(&self, id: u64) -> TrajectoryOutcome {
        match self.run(id) {
            Ok(records) => {
                TrajectoryOutcome::Completed(TrajectorySummary::from_records(id, &records))
            }
            Err(e) => TrajectoryOutcome::Aborted(AbortRecord {
                id,
                message: e.to_string(),
            }),
        }
    }
}

/// `run_trajectory` with default step options.
pub fn run_trajectory(config: &RunConfig, trajectory_id: u64) -> Result<Vec<ObservableRecord>> {
    TrajectoryPlan::new(config, StepOptions::default())?.run(trajectory_id)
}

/// Time-window averages of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub id: u64,
    pub samples: usize,
    #[serde(rename = "S_half")]
    pub s_half: f64,
    #[serde(rename = "C2_half")]
    pub c2_half: f64,
    #[serde(rename = "C4_half")]
    pub c4_half: f64,
    #[serde(rename = "G_AB")]
    pub g_ab: f64,
    #[serde(rename = "Cbar")]
    pub cbar: Vec<f64>,
    #[serde(rename = "Cq")]
    pub cq: Vec<f64>,
}

impl TrajectorySummary {
    pub fn from_records(id: u64, records: &[ObservableRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let avg = |f: &dyn Fn(&ObservableRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let vec_avg = |f: &dyn Fn(&ObservableRecord) -> &Vec<f64>| {
            let len = records.first().map_or(0, |r| f(r).len());
            let mut out = vec![0.0; len];
            for r in records {
                out.iter_mut().zip(f(r)).for_each(|(o, x)| *o += x);
            }
            out.iter_mut().for_each(|o| *o /= n);
            out
        };
        Self {
            id,
            samples: records.len(),
            s_half: avg(&|r| r.s_half),
            c2_half: avg(&|r| r.c2_half),
            c4_half: avg(&|r| r.c4_half),
            g_ab: avg(&|r| r.g_ab),
            cbar: vec_avg(&|r| &r.cbar),
            cq: vec_avg(&|r| &r.cq),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub id: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryOutcome {
    Completed(TrajectorySummary),
    Aborted(AbortRecord),
}

/// Mean and standard error over trajectories; `stderr` is `None` for a
/// single trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { mean, stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub step_options: StepOptions,
}

/// Ensemble averages of the time-window means of all trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: RunConfig,
    pub params: crate::params::ModelParams,
    pub n_traj: usize,
    pub samples_per_trajectory: usize,
    pub aborted: Vec<AbortRecord>,
    #[serde(rename = "S_half")]
    pub s_half: Option<Estimate>,
    #[serde(rename = "C2_half")]
    pub c2_half: Option<Estimate>,
    #[serde(rename = "C4_half")]
    pub c4_half: Option<Estimate>,
    #[serde(rename = "G_AB")]
    pub g_ab: Option<Estimate>,
    /// `mean(S_half) / mean(C2_half)` with a first-order error estimate.
    #[serde(rename = "S_over_C2")]
    pub s_over_c2: Option<Estimate>,
    #[serde(rename = "Cbar")]
    pub cbar: Vec<Estimate>,
    #[serde(rename = "Cq")]
    pub cq: Vec<Estimate>,
    pub trajectories: Option<Vec<TrajectorySummary>>,
    pub provenance: Provenance,
}

impl EnsembleResult {
    /// Aggregates trajectory outcomes in id order. Fails when more than 1%
    /// of the trajectories aborted.
    pub fn aggregate(
        config: &RunConfig,
        options: StepOptions,
        outcomes: Vec<TrajectoryOutcome>,
        keep_trajectories: bool,
    ) -> Result<Self> {
        let mut done = Vec::new();
        let mut aborted = Vec::new();
        for o in outcomes {
            match o {
                TrajectoryOutcome::Completed(s) => done.push(s),
                TrajectoryOutcome::Aborted(a) => aborted.push(a),
            }
        }
        done.sort_by_key(|s| s.id);
        aborted.sort_by_key(|a| a.id);
        let total = done.len() + aborted.len();
        if aborted.len() * 100 > total || done.is_empty() {
            let first = aborted
                .first()
                .map(|a| format!("trajectory {}: {}", a.id, a.message))
                .unwrap_or_default();
            return Err(Error::EnsembleAborted {
                aborted: aborted.len(),
                total,
                first,
            });
        }
        let sel = config.selection()?;
        let col = |f: fn(&TrajectorySummary) -> f64| {
            Estimate::from_samples(&done.iter().map(f).collect::<Vec<_>>())
        };
        let vec_col = |f: fn(&TrajectorySummary) -> &Vec<f64>| -> Vec<Estimate> {
            let len = f(&done[0]).len();
            (0..len)
                .map(|i| Estimate::from_samples(&done.iter().map(|s| f(s)[i]).collect::<Vec<_>>()))
                .collect()
        };
        let s_half = sel.entropy.then(|| col(|s| s.s_half));
        let c2_half = sel.cumulants.then(|| col(|s| s.c2_half));
        let s_over_c2 = match (s_half, c2_half) {
            (Some(s), Some(c)) if c.mean > 0.0 => Some(ratio_estimate(&done, s, c)),
            _ => None,
        };
        Ok(Self {
            config: config.clone(),
            params: config.model_params()?,
            n_traj: total,
            samples_per_trajectory: done[0].samples,
            aborted,
            s_half,
            c2_half,
            c4_half: sel.cumulants.then(|| col(|s| s.c4_half)),
            g_ab: sel.covariance.then(|| col(|s| s.g_ab)),
            s_over_c2,
            cbar: vec_col(|s| &s.cbar),
            cq: vec_col(|s| &s.cq),
            trajectories: keep_trajectories.then_some(done),
            provenance: Provenance {
                config_hash: config.hash(),
                master_seed: config.master_seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                step_options: options,
            },
        })
    }

    pub fn trajectory_count(&self) -> usize {
        self.n_traj - self.aborted.len()
    }
}

fn ratio_estimate(done: &[TrajectorySummary], s: Estimate, c: Estimate) -> Estimate {
    let r = s.mean / c.mean;
    let n = done.len();
    let stderr = (n > 1).then(|| {
        let var = done
            .iter()
            .map(|t| ((t.s_half - s.mean) - r * (t.c2_half - c.mean)).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt() / c.mean
    });
    Estimate { mean: r, stderr }
}

/// Runs and aggregates all `n_traj` trajectories of `config`.
pub fn run_ensemble(config: &RunConfig) -> Result<EnsembleResult> {
    run_ensemble_with(config, StepOptions::default(), Execution::Auto, false)
}

pub fn run_ensemble_with(
    config: &RunConfig,
    options: StepOptions,
    execution: Execution,
    keep_trajectories: bool,
) -> Result<EnsembleResult> {
    let plan = TrajectoryPlan::new(config, options)?;
    let ids: Vec<u64> = (0..config.n_traj as u64).collect();
    let outcomes = map_units(&ids, execution, |&id| plan.summarize(id))?;
    EnsembleResult::aggregate(config, options, outcomes, keep_trajectories)
}

/// Runs a trajectory-id range of `config`; outcomes of disjoint ranges can
/// be concatenated and passed to [`EnsembleResult::aggregate`].
pub fn run_trajectories(
    config: &RunConfig,
    options: StepOptions,
    ids: std::ops::Range<u64>,
    execution: Execution,
) -> Result<Vec<TrajectoryOutcome>> {
    let plan = TrajectoryPlan::new(config, options)?;
    let ids: Vec<u64> = ids.collect();
    map_units(&ids, execution, |&id| plan.summarize(id))
}

/// Runs every grid point of a sweep. All `(point, trajectory)` units share a
/// single work queue; results are merged per point in id order.
pub fn run_sweep(
    sweep: &SweepConfig,
    options: StepOptions,
    execution: Execution,
) -> Result<Vec<EnsembleResult>> {
    let points = sweep.points();
    let plans = points
        .iter()
        .map(|c| TrajectoryPlan::new(c, options))
        .collect::<Result<Vec<_>>>()?;
    let mut units: Vec<(usize, u64)> = Vec::new();
    for (p, c) in points.iter().enumerate() {
        units.extend((0..c.n_traj as u64).map(|id| (p, id)));
    }
    // largest systems first for better load balance
    units.sort_by_key(|&(p, id)| (std::cmp::Reverse(points[p].sites), p, id));
    let outcomes = map_units(&units, execution, |&(p, id)| (p, plans[p].summarize(id)))?;
    let mut grouped: Vec<Vec<TrajectoryOutcome>> = vec![Vec::new(); points.len()];
    for (p, o) in outcomes {
        grouped[p].push(o);
    }
    points
        .iter()
        .zip(grouped)
        .map(|(c, o)| EnsembleResult::aggregate(c, options, o, false))
        .collect()
}
