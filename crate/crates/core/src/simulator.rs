//! Wall-clock simulation of coded and uncoded federated training.
//!
//! Every client holds a label-sorted shard that is cut into contiguous local
//! batches; global batch `b` is the union of every client's batch `b`. Each
//! step samples one round-trip delay per client. The coded server stops
//! waiting at `t*` and fills the gap with its parity gradient; the uncoded
//! server waits for the slowest client.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, allocate_with_tolerance, LoadAllocation, RedundancyPolicy};
use crate::coding::{aggregate_parity, build_weights, encode_local, CompositeParity};
use crate::config::{Scheme, SimConfig};
use crate::data::{load_split, preprocess, shard_non_iid, ClientShards, LabeledDataset, Split};
use crate::delay::{cdf_total_delay, sample_round_trip, ClientProfile};
use crate::error::{Error, Result};
use crate::kernel::{embed, sample_rff_params};
use crate::random::{self, Purpose};
use crate::training::{
    accuracy, coded_gradient, combine, gradient_sum, loss_from_sum, update_model, ModelState,
};

/// One row of `trace.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    /// Zero-based epoch of the step that produced the record.
    pub epoch: usize,
    /// Number of model updates applied so far.
    pub step: usize,
    pub wall_clock_s: f64,
    pub test_accuracy: f64,
    /// Regularized loss on the step's global batch before the update.
    pub train_loss: f64,
}

/// Per-client link and compute capacities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientCapacity {
    pub comm_rate_bps: f64,
    pub mac_rate: f64,
    pub comm_rank: usize,
    pub mac_rank: usize,
    pub profile: ClientProfile,
}

/// How each random stream of a run is keyed: `(seed, purpose, index)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTable {
    pub seed: u64,
    pub kernel: String,
    pub permutation: String,
    pub sampling: String,
    pub encoding: String,
    pub delay: String,
}

impl SeedTable {
    fn new(seed: u64) -> Self {
        SeedTable {
            seed,
            kernel: "kernel/0".into(),
            permutation: "permutation/0 (links), permutation/1 (compute)".into(),
            sampling: "sampling/(batch * n_clients + client)".into(),
            encoding: "encoding/(batch * n_clients + client)".into(),
            delay: "delay/(step - 1), one round trip per client in client order".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub scheme: Scheme,
    pub config: SimConfig,
    pub seeds: SeedTable,
    pub clients: Vec<ClientCapacity>,
    /// One allocation per global batch index (coded runs only).
    pub allocations: Vec<LoadAllocation>,
    pub train_points: usize,
    pub test_points: usize,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<ConvergenceRecord>,
    pub step_times: Vec<f64>,
    pub manifest: RunManifest,
}

/// Capacities from explicit ranks: `r_j = max_rate k1^comm_rank[j]`,
/// `M_j = max_mac k2^mac_rank[j]`.
pub fn build_profiles_with_ranks(
    config: &SimConfig,
    comm_rank: &[usize],
    mac_rank: &[usize],
) -> Result<Vec<ClientCapacity>> {
    if comm_rank.len() != config.n_clients || mac_rank.len() != config.n_clients {
        return Err(Error::DimensionMismatch(format!(
            "{} clients but {} link ranks and {} compute ranks",
            config.n_clients,
            comm_rank.len(),
            mac_rank.len()
        )));
    }
    let payload = config.payload_bits();
    let macs = config.macs_per_point();
    comm_rank
        .iter()
        .zip(mac_rank)
        .map(|(&rc, &rm)| {
            let comm_rate_bps = config.max_comm_rate_bps * config.comm_rate_ratio.powi(rc as i32);
            let mac_rate = config.max_mac_rate * config.mac_rate_ratio.powi(rm as i32);
            let profile = ClientProfile::new(
                mac_rate / macs,
                config.alpha,
                payload / comm_rate_bps,
                config.p_err,
                config.local_batch_size(),
            )?;
            Ok(ClientCapacity {
                comm_rate_bps,
                mac_rate,
                comm_rank: rc,
                mac_rank: rm,
                profile,
            })
        })
        .collect()
}

/// Capacities under two independent seeded permutations of the rank ladders.
pub fn build_profiles(config: &SimConfig) -> Result<Vec<ClientCapacity>> {
    let n = config.n_clients;
    let comm = random::permutation(&mut random::stream(config.seed, Purpose::Permutation, 0), n);
    let mac = random::permutation(&mut random::stream(config.seed, Purpose::Permutation, 1), n);
    build_profiles_with_ranks(config, &comm, &mac)
}

/// Embedded, sharded data shared by every scheme run from one config.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train_features: Array2<f32>,
    pub train_labels: Array2<f32>,
    pub test_features: Array2<f32>,
    pub test_labels: Vec<u8>,
    pub shards: ClientShards,
    /// `batches[b][j]`: training rows of client `j` in global batch `b`.
    pub batches: Vec<Vec<Vec<usize>>>,
}

impl PreparedData {
    pub fn batch_rows(&self, b: usize) -> Vec<usize> {
        self.batches[b].iter().flatten().copied().collect()
    }
}

fn truncate(ds: LabeledDataset, limit: usize) -> LabeledDataset {
    if limit == 0 || limit >= ds.len() {
        return ds;
    }
    LabeledDataset {
        features: ds.features.slice_move(ndarray::s![..limit, ..]),
        labels_onehot: ds.labels_onehot.slice_move(ndarray::s![..limit, ..]),
        labels_raw: ds.labels_raw[..limit].to_vec(),
    }
}

/// Load both splits from `config.data_dir` and prepare them.
pub fn load_data(config: &SimConfig) -> Result<PreparedData> {
    let train = preprocess(&load_split(&config.data_dir, Split::Train)?, config.num_classes)?;
    let test = preprocess(&load_split(&config.data_dir, Split::Test)?, config.num_classes)?;
    prepare_data(config, train, test)
}

/// Embed both splits with the shared map, shard the training set and cut the
/// shards into local batches.
pub fn prepare_data(config: &SimConfig, train: LabeledDataset, test: LabeledDataset) -> Result<PreparedData> {
    config.validate()?;
    let train = truncate(train, config.train_limit);
    let test = truncate(test, config.test_limit);
    let d = train.features.ncols();
    if test.features.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "train rows have {d} features, test rows {}",
            test.features.ncols()
        )));
    }
    let shards = shard_non_iid(&train.labels_raw, config.n_clients)?;
    let shard_len = shards.shards[0].len();
    let local = config.local_batch_size();
    if shard_len % local != 0 {
        return Err(Error::invalid(format!(
            "shards of {shard_len} points cannot be cut into local batches of {local}"
        )));
    }
    let batches = (0..shard_len / local)
        .map(|b| {
            shards
                .shards
                .iter()
                .map(|s| s[b * local..(b + 1) * local].to_vec())
                .collect()
        })
        .collect();

    let map = sample_rff_params(config.seed, d, config.kernel_dim, config.kernel_sigma)?;
    let train_features = embed(&map, train.features.view())?;
    drop(train.features);
    let test_features = embed(&map, test.features.view())?;
    Ok(PreparedData {
        train_features,
        train_labels: train.labels_onehot,
        test_features,
        test_labels: test.labels_raw,
        shards,
        batches,
    })
}

/// Everything the coded server and clients fix before training for one
/// global batch index.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    pub allocation: LoadAllocation,
    /// `P(T_j <= t*)` at each client's integer load.
    pub p_return: Vec<f64>,
    /// Training rows each client processes every time this batch comes up.
    pub sampled_rows: Vec<Vec<usize>>,
    pub parity: CompositeParity,
}

/// Allocate loads and build the composite parity for every batch index.
pub fn plan_coded(config: &SimConfig, data: &PreparedData, profiles: &[ClientProfile]) -> Result<Vec<BatchPlan>> {
    let n = config.n_clients;
    let q = data.train_features.ncols();
    let c = data.train_labels.ncols();
    let mut plans = Vec::with_capacity(data.batches.len());
    for (b, clients) in data.batches.iter().enumerate() {
        let m: usize = clients.iter().map(Vec::len).sum();
        let u = config.coded_rows();
        let policy = RedundancyPolicy::Fixed { u };
        let allocation = match config.epsilon {
            Some(eps) => allocate_with_tolerance(profiles, m, &policy, eps)?,
            None => allocate(profiles, m, &policy)?,
        };
        let t_star = allocation.waiting_time;
        let mut p_return = Vec::with_capacity(n);
        let mut sampled_rows = Vec::with_capacity(n);
        let mut shards = Vec::with_capacity(n);
        for (j, rows) in clients.iter().enumerate() {
            let load = allocation.per_client_load[j];
            let p = if load == 0 {
                0.0
            } else {
                cdf_total_delay(&profiles[j], load as f64, t_star)
            };
            let key = (b * n + j) as u64;
            let weights = build_weights(
                rows.len(),
                load,
                p,
                &mut random::stream(config.seed, Purpose::Sampling, key),
            )?;
            if u > 0 {
                let x = data.train_features.select(Axis(0), rows);
                let y = data.train_labels.select(Axis(0), rows);
                shards.push(encode_local(
                    x.view(),
                    y.view(),
                    &weights,
                    u,
                    &mut random::stream(config.seed, Purpose::Encoding, key),
                )?);
            }
            sampled_rows.push(weights.sampled_indices.iter().map(|&k| rows[k]).collect());
            p_return.push(p);
        }
        let parity = if u > 0 {
            aggregate_parity(&shards)?
        } else {
            CompositeParity::empty(q, c)
        };
        plans.push(BatchPlan {
            allocation,
            p_return,
            sampled_rows,
            parity,
        });
    }
    Ok(plans)
}

/// Result of one simulated step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub wall_time: f64,
    pub model: ModelState,
    /// Clients whose gradient was used.
    pub returned: Vec<usize>,
    /// Regularized batch loss at the model the step started from.
    pub train_loss: f64,
}

/// Coded step: clients that beat `t*` contribute over their sampled rows,
/// the server adds the parity gradient, and the step lasts exactly `t*`.
pub fn run_step_coded<R: RngCore + ?Sized>(
    model: &ModelState,
    plan: &BatchPlan,
    data: &PreparedData,
    batch_index: usize,
    profiles: &[ClientProfile],
    config: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let t_star = plan.allocation.waiting_time;
    let features = data.train_features.view();
    let labels = data.train_labels.view();
    let mut returned = Vec::new();
    let mut contributions = Vec::new();
    for (j, profile) in profiles.iter().enumerate() {
        let load = plan.allocation.per_client_load[j];
        let delay = sample_round_trip(profile, load, rng)?;
        if load > 0 && delay.total <= t_star {
            let s = gradient_sum(features, labels, Some(&plan.sampled_rows[j]), &model.beta)?;
            contributions.push((load as f64, s.gradient / load as f64));
            returned.push(j);
        }
    }
    let rows = data.batch_rows(batch_index);
    let batch = gradient_sum(features, labels, Some(&rows), &model.beta)?;
    let train_loss = loss_from_sum(&batch, &model.beta, config.hyper.lambda);
    let g_c = coded_gradient(&plan.parity, &model.beta)?;
    let g = combine(&g_c, &contributions, rows.len())?;
    Ok(StepOutcome {
        wall_time: t_star,
        model: update_model(model, &g, &config.hyper)?,
        returned,
        train_loss,
    })
}

/// Uncoded step: every client processes its whole local batch and the server
/// waits for the slowest one.
pub fn run_step_uncoded<R: RngCore + ?Sized>(
    model: &ModelState,
    data: &PreparedData,
    batch_index: usize,
    profiles: &[ClientProfile],
    config: &SimConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let mut wall_time: f64 = 0.0;
    for (j, profile) in profiles.iter().enumerate() {
        let load = data.batches[batch_index][j].len();
        wall_time = wall_time.max(sample_round_trip(profile, load, rng)?.total);
    }
    let rows = data.batch_rows(batch_index);
    let batch = gradient_sum(data.train_features.view(), data.train_labels.view(), Some(&rows), &model.beta)?;
    let train_loss = loss_from_sum(&batch, &model.beta, config.hyper.lambda);
    let g = batch.gradient / rows.len() as f64;
    Ok(StepOutcome {
        wall_time,
        model: update_model(model, &g, &config.hyper)?,
        returned: (0..profiles.len()).collect(),
        train_loss,
    })
}

/// Test accuracy with ties broken toward the lowest class index.
pub fn evaluate_accuracy(model: &ModelState, test_features: ArrayView2<f32>, test_labels: &[u8]) -> Result<f64> {
    accuracy(test_features, test_labels, &model.beta)
}

/// Train one scheme on prepared data.
pub fn run_scheme(config: &SimConfig, data: &PreparedData, scheme: Scheme) -> Result<RunOutput> {
    let clients = build_profiles(config)?;
    let profiles: Vec<ClientProfile> = clients.iter().map(|c| c.profile).collect();
    let plans = match scheme {
        Scheme::Coded => plan_coded(config, data, &profiles)?,
        Scheme::Uncoded => Vec::new(),
    };

    let q = data.train_features.ncols();
    let c = data.train_labels.ncols();
    let mut model = ModelState::zeros(q, c);
    let first_rows = data.batch_rows(0);
    let init = gradient_sum(data.train_features.view(), data.train_labels.view(), Some(&first_rows), &model.beta)?;
    let mut records = vec![ConvergenceRecord {
        epoch: 0,
        step: 0,
        wall_clock_s: 0.0,
        test_accuracy: evaluate_accuracy(&model, data.test_features.view(), &data.test_labels)?,
        train_loss: loss_from_sum(&init, &model.beta, config.hyper.lambda),
    }];
    let mut step_times = Vec::new();
    let mut clock = 0.0;
    let mut step = 0usize;
    for epoch in 0..config.hyper.epochs_total {
        for b in 0..data.batches.len() {
            let mut rng = random::stream(config.seed, Purpose::Delay, step as u64);
            let outcome = match scheme {
                Scheme::Coded => run_step_coded(&model, &plans[b], data, b, &profiles, config, &mut rng)?,
                Scheme::Uncoded => run_step_uncoded(&model, data, b, &profiles, config, &mut rng)?,
            };
            model = outcome.model;
            step += 1;
            clock += outcome.wall_time;
            step_times.push(outcome.wall_time);
            records.push(ConvergenceRecord {
                epoch,
                step,
                wall_clock_s: clock,
                test_accuracy: evaluate_accuracy(&model, data.test_features.view(), &data.test_labels)?,
                train_loss: outcome.train_loss,
            });
        }
        model.next_epoch();
    }

    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        scheme,
        config: SimConfig {
            scheme,
            ..config.clone()
        },
        seeds: SeedTable::new(config.seed),
        clients,
        allocations: plans.into_iter().map(|p| p.allocation).collect(),
        train_points: data.train_features.nrows(),
        test_points: data.test_labels.len(),
        artifacts: vec!["trace.csv".into(), "manifest.json".into()],
    };
    Ok(RunOutput {
        records,
        step_times,
        manifest,
    })
}

/// Load the dataset named by the config and train `config.scheme`.
pub fn run_training(config: &SimConfig) -> Result<RunOutput> {
    let data = load_data(config)?;
    run_scheme(config, &data, config.scheme)
}

/// Write the records as CSV with header
/// `epoch,step,wall_clock_s,test_accuracy,train_loss`.
pub fn write_trace_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// First simulated time at which test accuracy reaches `gamma`.
pub fn time_to_accuracy(records: &[ConvergenceRecord], gamma: f64) -> Option<f64> {
    records.iter().find(|r| r.test_accuracy >= gamma).map(|r| r.wall_clock_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::PinnedRng;

    fn tiny_config() -> SimConfig {
        SimConfig {
            n_clients: 3,
            kernel_dim: 16,
            kernel_sigma: 1.0,
            num_classes: 2,
            redundancy: 0.25,
            hyper: crate::training::TrainingHyperparams {
                lr0: 0.5,
                epochs_total: 3,
                batch_size_global: 12,
                decay_epochs: vec![2],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tiny_dataset(rows: usize, seed: u64) -> LabeledDataset {
        let mut rng = random::stream(seed, Purpose::Auxiliary, 0);
        let labels: Vec<u8> = (0..rows).map(|_| random::below(&mut rng, 2) as u8).collect();
        let features = Array2::from_shape_fn((rows, 3), |(i, k)| {
            let centre = if labels[i] == 1 { 0.8 } else { 0.2 };
            (centre + 0.1 * (k as f64 - 1.0)) as f32
        });
        let mut onehot = Array2::zeros((rows, 2));
        for (i, &y) in labels.iter().enumerate() {
            onehot[[i, y as usize]] = 1.0;
        }
        LabeledDataset {
            features,
            labels_onehot: onehot,
            labels_raw: labels,
        }
    }

    #[test]
    fn identity_ranks_give_reference_profile() {
        let cfg = SimConfig::default();
        let ranks: Vec<usize> = (0..30).collect();
        let caps = build_profiles_with_ranks(&cfg, &ranks, &ranks).unwrap();
        assert!((caps[0].profile.tau - 2000.0 * 10.0 * 32.0 * 1.1 / 216_000.0).abs() < 1e-12);
        assert!((caps[0].profile.tau - 3.259).abs() < 1e-3);
        assert!((caps[0].profile.mu - 76.8).abs() < 1e-12);
        assert!(caps[1].profile.tau > caps[0].profile.tau);

        let flat = SimConfig {
            comm_rate_ratio: 1.0,
            mac_rate_ratio: 1.0,
            ..cfg.clone()
        };
        let caps = build_profiles(&flat).unwrap();
        assert!(caps.windows(2).all(|w| w[0].profile == w[1].profile));

        let perm = build_profiles(&cfg).unwrap();
        let mut seen: Vec<usize> = perm.iter().map(|c| c.comm_rank).collect();
        seen.sort_unstable();
        assert_eq!(seen, ranks);
    }

    #[test]
    fn batches_partition_shards() {
        let cfg = tiny_config();
        let data = prepare_data(&cfg, tiny_dataset(36, 1), tiny_dataset(10, 2)).unwrap();
        assert_eq!(data.batches.len(), 3);
        let mut all: Vec<usize> = (0..3).flat_map(|b| data.batch_rows(b)).collect();
        assert_eq!(data.batch_rows(0).len(), 12);
        all.sort_unstable();
        assert_eq!(all, (0..36).collect::<Vec<_>>());
        assert_eq!(data.train_features.dim(), (36, 16));
    }

    #[test]
    fn coded_step_takes_t_star_and_uncoded_matches_centralized() {
        let cfg = tiny_config();
        let data = prepare_data(&cfg, tiny_dataset(36, 3), tiny_dataset(10, 4)).unwrap();
        let profiles: Vec<ClientProfile> = build_profiles(&cfg).unwrap().iter().map(|c| c.profile).collect();
        let plans = plan_coded(&cfg, &data, &profiles).unwrap();
        let model = ModelState::zeros(16, 2);
        for seed in 0..5 {
            let mut rng = random::stream(seed, Purpose::Delay, 0);
            let out = run_step_coded(&model, &plans[1], &data, 1, &profiles, &cfg, &mut rng).unwrap();
            assert_eq!(out.wall_time, plans[1].allocation.waiting_time);
        }

        let mut rng = random::stream(0, Purpose::Delay, 0);
        let out = run_step_uncoded(&model, &data, 2, &profiles, &cfg, &mut rng).unwrap();
        let rows = data.batch_rows(2);
        let x = data.train_features.select(Axis(0), &rows);
        let y = data.train_labels.select(Axis(0), &rows);
        let g = crate::training::full_gradient(x.view(), y.view(), &model.beta).unwrap();
        let expect = update_model(&model, &g, &cfg.hyper).unwrap();
        assert_eq!(out.model.beta, expect.beta);
    }

    #[test]
    fn pinned_fast_clients_reduce_to_combine() {
        let cfg = SimConfig { p_err: 0.0, ..tiny_config() };
        let data = prepare_data(&cfg, tiny_dataset(36, 5), tiny_dataset(10, 6)).unwrap();
        let profiles: Vec<ClientProfile> = build_profiles(&cfg).unwrap().iter().map(|c| c.profile).collect();
        let plans = plan_coded(&cfg, &data, &profiles).unwrap();
        let model = ModelState::zeros(16, 2);
        let out = run_step_coded(&model, &plans[0], &data, 0, &profiles, &cfg, &mut PinnedRng).unwrap();
        let plan = &plans[0];
        let mut contributions = Vec::new();
        for j in 0..3 {
            let l = plan.allocation.per_client_load[j];
            if l > 0 {
                let s = gradient_sum(data.train_features.view(), data.train_labels.view(), Some(&plan.sampled_rows[j]), &model.beta)
                    .unwrap();
                contributions.push((l as f64, s.gradient / l as f64));
            }
        }
        assert_eq!(out.returned.len(), contributions.len());
        let g = combine(&coded_gradient(&plan.parity, &model.beta).unwrap(), &contributions, 12).unwrap();
        assert_eq!(out.model.beta, update_model(&model, &g, &cfg.hyper).unwrap().beta);
    }

    #[test]
    fn single_client_uncoded_wall_time_is_its_draw() {
        let cfg = SimConfig {
            n_clients: 1,
            hyper: crate::training::TrainingHyperparams {
                batch_size_global: 4,
                ..tiny_config().hyper
            },
            ..tiny_config()
        };
        let data = prepare_data(&cfg, tiny_dataset(8, 7), tiny_dataset(4, 8)).unwrap();
        let profiles: Vec<ClientProfile> = build_profiles(&cfg).unwrap().iter().map(|c| c.profile).collect();
        let model = ModelState::zeros(16, 2);
        let out = run_step_uncoded(&model, &data, 0, &profiles, &cfg, &mut random::stream(1, Purpose::Delay, 0)).unwrap();
        let draw = sample_round_trip(&profiles[0], 4, &mut random::stream(1, Purpose::Delay, 0)).unwrap();
        assert_eq!(out.wall_time, draw.total);
    }

    #[test]
    fn runs_are_replayable_and_additive() {
        let cfg = tiny_config();
        let data = prepare_data(&cfg, tiny_dataset(36, 9), tiny_dataset(10, 10)).unwrap();
        let a = run_scheme(&cfg, &data, Scheme::Coded).unwrap();
        let b = run_scheme(&cfg, &data, Scheme::Coded).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records.len(), 1 + 3 * 3);
        let total: f64 = a.step_times.iter().sum();
        assert_eq!(a.records.last().unwrap().wall_clock_s, total);
        assert!(a.records.windows(2).all(|w| w[1].wall_clock_s > w[0].wall_clock_s));
        for (t, alloc) in a.step_times.iter().zip(a.manifest.allocations.iter().cycle()) {
            assert_eq!(*t, alloc.waiting_time);
        }

        let u = run_scheme(&cfg, &data, Scheme::Uncoded).unwrap();
        assert_eq!(u.records[0], a.records[0]);
        assert!(u.manifest.allocations.is_empty());
    }

    #[test]
    fn trace_header_and_time_to_accuracy() {
        let recs = vec![
            ConvergenceRecord {
                epoch: 0,
                step: 0,
                wall_clock_s: 0.0,
                test_accuracy: 0.1,
                train_loss: 0.5,
            },
            ConvergenceRecord {
                epoch: 0,
                step: 1,
                wall_clock_s: 2.5,
                test_accuracy: 0.9,
                train_loss: 0.25,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        write_trace_csv(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epoch,step,wall_clock_s,test_accuracy,train_loss");
        assert_eq!(text.lines().count(), 3);
        assert_eq!(time_to_accuracy(&recs, 0.5), Some(2.5));
        assert_eq!(time_to_accuracy(&recs, 0.95), None);
    }
}
