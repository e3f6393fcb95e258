//! The pipeline stages. Each one reads the artifacts of the previous stage
//! from the output directory and refuses them if they came from another
//! configuration.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{build_fd, fd_fidelity_any, model_size, Sized};
use crate::bits::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{
    draw_samples, exact_expectation, local_estimator_on_samples, mutual_information_rbm, renyi2_exact, renyi2_swap,
    transverse_average_on_samples, xx_connected_exact, xx_connected_on_samples, Evaluation, LocalOperator, Method,
    Observable, ObservableResult, Source,
};
use crate::noise::corrupt_dataset;
use crate::quantum::lindblad::{evolve_disorder_averaged, fiducial_state, params_at};
use crate::quantum::{
    fidelity, mutual_information_exact, partial_trace, renyi_entropy, rydberg_ground_state, sample_measurements,
    QuantumState, StateData,
};
use crate::rbm::{RbmParams, MAX_EXACT_VISIBLE};
use crate::rng::derive_path;
use crate::training::{train, TrainReport};

use super::config::{ExperimentConfig, GenerateMode, Variant};
use super::files::{
    csv_field, read_dataset, read_json, write_bytes, write_dataset, write_json, ModelCheckpoint, Provenance, StateFile,
    MODEL_FORMAT,
};

pub const MANIFEST_FORMAT: &str = "rydtomo-manifest/1";
pub const OBSERVABLES_SCHEMA: &str = "observables/1";
pub const FIDELITY_SCHEMA: &str = "fidelity/1";

/// Labels separating the per-stage seed streams under the master seed.
mod seed {
    pub const DATA: u64 = 101;
    pub const NOISE: u64 = 102;
    pub const DISORDER: u64 = 103;
    pub const TRAIN: u64 = 104;
    pub const EVAL: u64 = 105;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub index: usize,
    pub t_us: Option<f64>,
    pub delta_mhz: f64,
    pub omega_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    pub mode: GenerateMode,
    pub n_sites: usize,
    pub checkpoints: Vec<CheckpointInfo>,
}

/// Paths of every artifact under one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn state(&self, k: usize) -> PathBuf {
        self.root.join("states").join(format!("cp{k:02}.json"))
    }
    pub fn dataset(&self, k: usize, noisy: bool, gzip: bool) -> PathBuf {
        let tag = if noisy { ".noisy" } else { "" };
        let ext = if gzip { "txt.gz" } else { "txt" };
        self.root.join("data").join(format!("cp{k:02}{tag}.{ext}"))
    }
    pub fn dataset_header(&self, k: usize, noisy: bool) -> PathBuf {
        let tag = if noisy { ".noisy" } else { "" };
        self.root.join("data").join(format!("cp{k:02}{tag}.json"))
    }
    pub fn model(&self, k: usize, v: Variant) -> PathBuf {
        self.root.join("models").join(format!("cp{k:02}.{}.json", v.as_str()))
    }
    pub fn train_report(&self, k: usize, v: Variant) -> PathBuf {
        self.root.join("models").join(format!("cp{k:02}.{}.report.json", v.as_str()))
    }
    pub fn curves(&self, k: usize, v: Variant) -> PathBuf {
        self.root.join("models").join(format!("cp{k:02}.{}.curves.csv", v.as_str()))
    }
    pub fn evaluation(&self, k: usize, v: Variant) -> PathBuf {
        self.root.join("eval").join(format!("cp{k:02}.{}.json", v.as_str()))
    }
    pub fn evaluation_csv(&self, k: usize, v: Variant) -> PathBuf {
        self.root.join("eval").join(format!("cp{k:02}.{}.csv", v.as_str()))
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        master_seed: cfg.seed,
    }
}

fn read_manifest(layout: &Layout, expected: Option<&Provenance>) -> Result<Manifest> {
    let path = layout.manifest();
    let m: Manifest = read_json(&path)?;
    if let Some(p) = expected {
        m.provenance.check(p, &path)?;
    }
    Ok(m)
}

/// Runs `f` over all items in parallel and returns the results in input order.
fn par_all<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    items.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

/// Evolves or diagonalizes, samples every checkpoint, writes dataset and state files.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let layout = Layout::new(out);
    let prov = provenance(cfg);
    let n = cfg.hamiltonian.n_sites;
    let sweep = cfg.sweep_profile()?;

    let states: Vec<(CheckpointInfo, QuantumState)> = match cfg.generate.mode {
        GenerateMode::Ground => {
            let points: Vec<(Option<f64>, f64)> = match &cfg.generate.deltas {
                Some(d) => d.iter().map(|&x| (None, x)).collect(),
                None => sweep.checkpoints.iter().map(|&t| (Some(t), sweep.delta.eval(t))).collect(),
            };
            let indexed: Vec<(usize, (Option<f64>, f64))> = points.into_iter().enumerate().collect();
            par_all(&indexed, |&(k, (t, delta))| {
                let hp = cfg.hamiltonian_params(delta);
                let gs = rydberg_ground_state(&hp)?;
                log::info!("checkpoint {k}: ground state at delta = {delta:.3} MHz, gap {:.3e}", gs.gap);
                Ok((
                    CheckpointInfo {
                        index: k,
                        t_us: t,
                        delta_mhz: delta,
                        omega_mhz: hp.omega,
                    },
                    gs.state,
                ))
            })?
        }
        GenerateMode::Lindblad => {
            let hp = cfg.hamiltonian_params(0.0);
            let lp = cfg.lindblad_params();
            log::info!("evolving {} disorder realizations over {} checkpoints", lp.n_disorder, sweep.checkpoints.len());
            let out = evolve_disorder_averaged(
                &fiducial_state(n)?,
                &sweep,
                &hp,
                &lp,
                derive_path(cfg.seed, &[seed::DISORDER]),
                &cfg.integrator(),
            )?;
            sweep
                .checkpoints
                .iter()
                .zip(out)
                .enumerate()
                .map(|(k, (&t, s))| {
                    let p = params_at(&hp, &sweep, t);
                    (
                        CheckpointInfo {
                            index: k,
                            t_us: Some(t),
                            delta_mhz: p.delta,
                            omega_mhz: p.omega,
                        },
                        s,
                    )
                })
                .collect()
        }
    };

    for (info, state) in &states {
        let k = info.index;
        let sf = StateFile::from_state(state, &prov, k, info.t_us, info.delta_mhz, info.omega_mhz);
        write_json(&layout.state(k), &sf)?;
        let mut d = sample_measurements(state, cfg.dataset.n_samples, derive_path(cfg.seed, &[seed::DATA, k as u64]))?;
        d.meta.sweep_time_us = info.t_us;
        d.meta.delta_mhz = Some(info.delta_mhz);
        d.meta.source = format!(
            "{} ({} mode, checkpoint {k})",
            d.meta.source,
            match cfg.generate.mode {
                GenerateMode::Ground => "ground-state",
                GenerateMode::Lindblad => "lindblad",
            }
        );
        write_dataset(&layout.dataset(k, false, cfg.dataset.gzip), &d, &prov, Some(k))?;
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        provenance: prov,
        mode: cfg.generate.mode,
        n_sites: n,
        checkpoints: states.into_iter().map(|(i, _)| i).collect(),
    };
    write_bytes(&layout.config(), cfg.to_toml().as_bytes())?;
    write_json(&layout.manifest(), &manifest)?;
    Ok(manifest)
}

fn load_dataset(path: &Path, prov: &Provenance) -> Result<Dataset> {
    let (d, header) = read_dataset(path)?;
    header.provenance.check(prov, path)?;
    Ok(d)
}

fn select(manifest: &Manifest, only: Option<usize>) -> Result<Vec<usize>> {
    match only {
        None => Ok(manifest.checkpoints.iter().map(|c| c.index).collect()),
        Some(k) if manifest.checkpoints.iter().any(|c| c.index == k) => Ok(vec![k]),
        Some(k) => Err(Error::argument(format!("checkpoint {k} is not in the manifest"))),
    }
}

/// Writes the corrupted record of every (or one) checkpoint.
pub fn cmd_corrupt(cfg: &ExperimentConfig, out: &Path, only: Option<usize>) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(out);
    let prov = provenance(cfg);
    let manifest = read_manifest(&layout, Some(&prov))?;
    let nm = cfg.noise_model()?;
    let ks = select(&manifest, only)?;
    par_all(&ks, |&k| {
        let d = load_dataset(&layout.dataset_header(k, false), &prov)?;
        let noisy = corrupt_dataset(&d, &nm, derive_path(cfg.seed, &[seed::NOISE, k as u64]));
        write_dataset(&layout.dataset(k, true, cfg.dataset.gzip), &noisy, &prov, Some(k))
    })
}

/// Fits every configured model variant at every (or one) checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, only: Option<usize>) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(out);
    let prov = provenance(cfg);
    let manifest = read_manifest(&layout, Some(&prov))?;
    let nm = cfg.noise_model()?;
    let tasks: Vec<(usize, Variant)> = select(&manifest, only)?
        .into_iter()
        .flat_map(|k| cfg.models.variants.iter().map(move |&v| (k, v)))
        .collect();
    par_all(&tasks, |&(k, v)| {
        let data_path = layout.dataset_header(k, v.uses_noisy_data());
        let d = load_dataset(&data_path, &prov)?;
        let mut tc = cfg.train.clone();
        tc.seed = derive_path(cfg.seed, &[seed::TRAIN, k as u64, v.id()]);
        tc.noise = (v == Variant::ThreeLayer).then_some(nm);
        log::info!("training checkpoint {k} ({}) on {} records", v.as_str(), d.len());
        let report = train(&d, &tc)?;
        let model = ModelCheckpoint {
            format: MODEL_FORMAT.into(),
            provenance: prov.clone(),
            checkpoint: Some(k),
            variant: v.as_str().into(),
            dataset: data_path.file_name().unwrap().to_string_lossy().into_owned(),
            train_seed: tc.seed,
            params: report.final_params.clone(),
        };
        write_json(&layout.model(k, v), &model)?;
        write_json(&layout.train_report(k, v), &TrainReportFile { provenance: prov.clone(), report: report.clone() })?;
        write_bytes(
            &layout.curves(k, v),
            format!("# config_hash={} seed={}\n{}", prov.config_hash, prov.master_seed, report.curves_csv()).as_bytes(),
        )?;
        Ok(layout.model(k, v))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReportFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub report: TrainReport,
}

/// One row of the tidy observable tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: usize,
    pub t_us: Option<f64>,
    pub delta_mhz: f64,
    /// `truth`, `data`, `fd` (with `_noisy` for the corrupted record), a model
    /// variant, or a variant with `+channel`.
    pub model: String,
    pub observable: String,
    /// 1-based sites, bond or distance the observable refers to.
    pub sites: String,
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub n_samples: usize,
    pub seed: u64,
}

pub const ROW_HEADER: &str = "checkpoint,t_us,delta_MHz,model,observable,sites,value,std_error,method,n_samples,seed";

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.10e},{:.10e},{},{},{}",
            self.checkpoint,
            self.t_us.map(|t| format!("{t}")).unwrap_or_default(),
            self.delta_mhz,
            csv_field(&self.model),
            csv_field(&self.observable),
            csv_field(&self.sites),
            self.value,
            self.std_error,
            self.method.as_str(),
            self.n_samples,
            self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation_ {
    pub checkpoint: usize,
    pub variant: String,
    pub rbm_fidelity: f64,
    pub rbm_params: usize,
    pub fd_fidelity: Option<f64>,
    /// The FD fidelity was taken against the positive-pure partner of a mixed truth.
    pub fd_against_partner: bool,
    pub fd_params: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub summary: Evaluation_,
    pub rows: Vec<EvalRow>,
}

/// Kind label and 1-based location of an observable.
pub fn label(obs: &Observable) -> (&'static str, String) {
    match *obs {
        Observable::Occupation { site } => ("n", format!("{}", site + 1)),
        Observable::Zz { i, j } => ("zz_c", format!("{}-{}", i + 1, j + 1)),
        Observable::ZzAvg { distance } => ("zz_avg", format!("{distance}")),
        Observable::X { site } => ("x", format!("{}", site + 1)),
        Observable::XAvg => ("x_avg", String::new()),
        Observable::XxConnected { bond } => ("xx_c", format!("{}-{}", bond + 1, bond + 2)),
        Observable::Renyi2 { start, end } => ("renyi2", format!("{}-{}", start + 1, end)),
        Observable::MutualInformation { bond } => ("i2", format!("{bond}")),
    }
}

/// `Tr(rho O)` for a real local operator.
fn state_expectation(state: &QuantumState, op: &LocalOperator) -> f64 {
    let n = state.n_sites();
    let mut total = 0.0;
    for x in 0..state.dim() {
        let s = crate::BitString::from_index(x as u64, n);
        let row = op.local_index(&s);
        for col in 0..op.matrix.ncols() {
            let m = op.matrix[(row, col)];
            if m == 0.0 {
                continue;
            }
            let y = op.with_local(&s, col).index() as usize;
            total += m * match state.data() {
                StateData::Pure(v) => (v[x].conj() * v[y]).re,
                StateData::Mixed(rho) => rho[(y, x)].re,
            };
        }
    }
    total
}

/// Exact value of an observable in a (pure or mixed) state.
pub fn state_observable(state: &QuantumState, obs: &Observable) -> Result<f64> {
    let n = state.n_sites();
    let p = state.probabilities();
    let z = |x: usize, i: usize| if (x >> (n - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 };
    let zz = |i: usize, j: usize| {
        let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
        for (x, &q) in p.iter().enumerate() {
            a += q * z(x, i);
            b += q * z(x, j);
            ab += q * z(x, i) * z(x, j);
        }
        ab - a * b
    };
    let xx = |i: usize| -> Result<f64> {
        let a = state_expectation(state, &LocalOperator::sigma_x(i));
        let b = state_expectation(state, &LocalOperator::sigma_x(i + 1));
        Ok(state_expectation(state, &LocalOperator::xx(i, i + 1)?) - a * b)
    };
    let check = |i: usize| {
        if i >= n {
            Err(Error::argument(format!("site {i} out of range")))
        } else {
            Ok(())
        }
    };
    Ok(match *obs {
        Observable::Occupation { site } => {
            check(site)?;
            p.iter().enumerate().filter(|(x, _)| z(*x, site) > 0.0).map(|(_, q)| q).sum()
        }
        Observable::Zz { i, j } => {
            check(i.max(j))?;
            zz(i, j)
        }
        Observable::ZzAvg { distance } => {
            if distance == 0 || distance >= n {
                return Err(Error::argument("distance out of range"));
            }
            (0..n - distance).map(|i| zz(i, i + distance)).sum::<f64>() / (n - distance) as f64
        }
        Observable::X { site } => {
            check(site)?;
            state_expectation(state, &LocalOperator::sigma_x(site))
        }
        Observable::XAvg => (0..n).map(|i| state_expectation(state, &LocalOperator::sigma_x(i))).sum::<f64>() / n as f64,
        Observable::XxConnected { bond } => {
            check(bond + 1)?;
            xx(bond)?
        }
        Observable::Renyi2 { start, end } => {
            let sites: Vec<usize> = (start..end).collect();
            if sites.len() == n {
                renyi_entropy(state, 2)?
            } else {
                renyi_entropy(&partial_trace(state, &sites)?, 2)?
            }
        }
        Observable::MutualInformation { bond } => mutual_information_exact(state, bond, 2)?,
    })
}

/// Monte Carlo estimate (and exact value when affordable) of one observable of an RBM.
fn rbm_observable(
    params: &RbmParams,
    obs: &Observable,
    samples: &[crate::BitString],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<ObservableResult>> {
    let exact_ok = cfg.evaluate.exact && params.n_visible <= MAX_EXACT_VISIBLE;
    let mut out = Vec::new();
    let mc = &cfg.evaluate.mc;
    match *obs {
        Observable::Occupation { .. } | Observable::Zz { .. } | Observable::ZzAvg { .. } => {
            out.push(obs.diagonal(Source::Samples(samples))?);
            if exact_ok {
                out.push(obs.diagonal(Source::Exact(params))?);
            }
        }
        Observable::X { site } => {
            let op = LocalOperator::sigma_x(site);
            out.push(local_estimator_on_samples(params, &op, samples)?);
            if exact_ok {
                out.push(exact_expectation(params, &op)?);
            }
        }
        Observable::XAvg => {
            out.push(transverse_average_on_samples(params, samples)?);
            if exact_ok {
                let n = params.n_visible;
                let mut v = 0.0;
                for i in 0..n {
                    v += exact_expectation(params, &LocalOperator::sigma_x(i))?.value;
                }
                let mut r = out[0].clone();
                r.value = v / n as f64;
                r.std_error = 0.0;
                r.n_samples = 0;
                r.method = Method::Exact;
                out.push(r);
            }
        }
        Observable::XxConnected { bond } => {
            out.push(xx_connected_on_samples(params, bond, samples)?);
            if exact_ok {
                out.push(xx_connected_exact(params, bond)?);
            }
        }
        Observable::Renyi2 { start, end } => {
            out.push(renyi2_swap(params, start..end, cfg.evaluate.n_mc, seed, mc)?);
            if exact_ok {
                out.push(renyi2_exact(params, start..end)?);
            }
        }
        Observable::MutualInformation { bond } => {
            out.push(mutual_information_rbm(
                params,
                bond,
                Evaluation::MonteCarlo {
                    n_mc: cfg.evaluate.n_mc,
                    seed,
                    mc: *mc,
                },
            )?);
            if exact_ok {
                out.push(mutual_information_rbm(params, bond, Evaluation::Exact)?);
            }
        }
    }
    Ok(out)
}

fn row(info: &CheckpointInfo, model: &str, obs: &Observable, r: &ObservableResult, seed: u64) -> EvalRow {
    let (kind, sites) = label(obs);
    EvalRow {
        checkpoint: info.index,
        t_us: info.t_us,
        delta_mhz: info.delta_mhz,
        model: model.into(),
        observable: kind.into(),
        sites,
        value: r.value,
        std_error: r.std_error,
        method: r.method,
        n_samples: r.n_samples,
        seed,
    }
}

fn exact_row(info: &CheckpointInfo, model: &str, obs: &Observable, value: f64) -> EvalRow {
    let (kind, sites) = label(obs);
    EvalRow {
        checkpoint: info.index,
        t_us: info.t_us,
        delta_mhz: info.delta_mhz,
        model: model.into(),
        observable: kind.into(),
        sites,
        value,
        std_error: 0.0,
        method: Method::Exact,
        n_samples: 0,
        seed: 0,
    }
}

fn evaluate_one(
    cfg: &ExperimentConfig,
    layout: &Layout,
    prov: &Provenance,
    info: &CheckpointInfo,
    v: Variant,
) -> Result<EvaluationFile> {
    let k = info.index;
    let model_path = layout.model(k, v);
    let model = ModelCheckpoint::read(&model_path)?;
    model.provenance.check(prov, &model_path)?;
    let state_path = layout.state(k);
    let sf: StateFile = read_json(&state_path)?;
    sf.provenance.check(prov, &state_path)?;
    let truth = sf.to_state()?;
    let params = &model.params;
    let seed = derive_path(cfg.seed, &[seed::EVAL, k as u64, v.id()]);
    let samples = draw_samples(params, cfg.evaluate.n_mc, seed, &cfg.evaluate.mc)?;
    let rbm = crate::estimators::rbm_state(params)?;
    let rbm_fidelity = fidelity(&rbm, &truth)?;

    let mut rows = Vec::new();
    let nm = cfg.noise_model()?;
    let suffix = if v.uses_noisy_data() { "_noisy" } else { "" };
    let (data_tag, fd_tag) = (format!("data{suffix}"), format!("fd{suffix}"));
    let d = load_dataset(&layout.dataset_header(k, v.uses_noisy_data()), prov)?;
    for obs in cfg.observables() {
        for r in rbm_observable(params, &obs, &samples, cfg, seed)? {
            rows.push(row(info, v.as_str(), &obs, &r, seed));
        }
        rows.push(exact_row(info, "truth", &obs, state_observable(&truth, &obs)?));
        if obs.is_diagonal() {
            rows.push(row(info, &data_tag, &obs, &obs.diagonal(Source::Dataset(&d))?, 0));
            if v.uses_noisy_data() {
                let r = crate::estimators::forward_noise(params, &nm, &obs, cfg.evaluate.n_mc, seed, &cfg.evaluate.mc)?;
                rows.push(row(info, &format!("{}+channel", v.as_str()), &obs, &r, seed));
            }
        }
    }

    let (mut fd_fidelity, mut fd_params, mut partner) = (None, None, false);
    if cfg.evaluate.fd {
        let fd = build_fd(&d)?;
        let (f, p) = fd_fidelity_any(&fd, &truth)?;
        fd_fidelity = Some(f);
        partner = p;
        fd_params = Some(model_size(Sized::Fd(&fd)));
        let amps: Vec<f64> = fd.probabilities_dense()?.into_iter().map(f64::sqrt).collect();
        let fd_state = QuantumState::pure_real(fd.n_sites, &amps)?;
        for obs in cfg.observables() {
            rows.push(exact_row(info, &fd_tag, &obs, state_observable(&fd_state, &obs)?));
        }
    }
    Ok(EvaluationFile {
        provenance: prov.clone(),
        summary: Evaluation_ {
            checkpoint: k,
            variant: v.as_str().into(),
            rbm_fidelity,
            rbm_params: model_size(Sized::Rbm(params)),
            fd_fidelity,
            fd_against_partner: partner,
            fd_params,
        },
        rows,
    })
}

fn rows_csv(prov: &Provenance, rows: &[EvalRow]) -> String {
    let mut s = format!(
        "# schema={OBSERVABLES_SCHEMA} config_hash={} seed={}\n{ROW_HEADER}\n",
        prov.config_hash, prov.master_seed
    );
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Observable tables and fidelities for every trained model.
pub fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path, only: Option<usize>) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(out);
    let prov = provenance(cfg);
    let manifest = read_manifest(&layout, Some(&prov))?;
    let ks = select(&manifest, only)?;
    let tasks: Vec<(CheckpointInfo, Variant)> = manifest
        .checkpoints
        .iter()
        .filter(|c| ks.contains(&c.index))
        .flat_map(|c| cfg.models.variants.iter().map(move |&v| (c.clone(), v)))
        .collect();
    par_all(&tasks, |(info, v)| {
        let e = evaluate_one(cfg, &layout, &prov, info, *v)?;
        write_json(&layout.evaluation(info.index, *v), &e)?;
        write_bytes(&layout.evaluation_csv(info.index, *v), rows_csv(&prov, &e.rows).as_bytes())?;
        log::info!(
            "checkpoint {} ({}): fidelity {:.4}, fd {:?}",
            info.index,
            v.as_str(),
            e.summary.rbm_fidelity,
            e.summary.fd_fidelity
        );
        Ok(layout.evaluation(info.index, *v))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub checkpoints: Vec<CheckpointInfo>,
    pub fidelities: Vec<Evaluation_>,
}

/// Merges all evaluations into tidy tables keyed by sweep time.
pub fn cmd_report(out: &Path, expected: Option<&Provenance>) -> Result<ReportSummary> {
    let layout = Layout::new(out);
    let manifest = read_manifest(&layout, expected)?;
    let prov = manifest.provenance.clone();
    let mut files: Vec<PathBuf> = std::fs::read_dir(layout.root.join("eval"))
        .map_err(|e| Error::io(layout.root.join("eval"), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::argument(format!("no evaluations under {}", layout.root.display())));
    }
    let mut rows = Vec::new();
    let mut fids = Vec::new();
    for f in &files {
        let e: EvaluationFile = read_json(f)?;
        e.provenance.check(&prov, f)?;
        fids.push(e.summary);
        rows.extend(e.rows);
    }
    // Truth, fd and data rows repeat for every variant; keep one copy.
    let mut seen = std::collections::HashSet::new();
    rows.retain(|r| {
        let shared = matches!(r.model.as_str(), "truth" | "fd" | "data" | "fd_noisy" | "data_noisy");
        !shared || seen.insert((r.checkpoint, r.model.clone(), r.observable.clone(), r.sites.clone()))
    });
    let t = |r: &EvalRow| r.t_us.unwrap_or(r.checkpoint as f64);
    rows.sort_by(|a, b| {
        t(a).total_cmp(&t(b))
            .then(a.checkpoint.cmp(&b.checkpoint))
            .then(a.observable.cmp(&b.observable))
            .then(a.sites.cmp(&b.sites))
            .then(a.model.cmp(&b.model))
            .then(a.method.as_str().cmp(b.method.as_str()))
    });
    fids.sort_by(|a, b| a.checkpoint.cmp(&b.checkpoint).then(a.variant.cmp(&b.variant)));
    let dir = layout.report_dir();
    write_bytes(&dir.join("observables.csv"), rows_csv(&prov, &rows).as_bytes())?;

    let mut s = format!(
        "# schema={FIDELITY_SCHEMA} config_hash={} seed={}\n\
         checkpoint,t_us,delta_MHz,model,rbm_fidelity,fd_fidelity,fd_against_partner,rbm_params,fd_params\n",
        prov.config_hash, prov.master_seed
    );
    for f in &fids {
        let info = manifest.checkpoints.iter().find(|c| c.index == f.checkpoint);
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{:.10e},{},{},{},{}\n",
            f.checkpoint,
            info.and_then(|i| i.t_us).map(|t| t.to_string()).unwrap_or_default(),
            info.map(|i| i.delta_mhz.to_string()).unwrap_or_default(),
            f.variant,
            f.rbm_fidelity,
            opt(f.fd_fidelity),
            f.fd_against_partner,
            f.rbm_params,
            f.fd_params.map(|x| x.to_string()).unwrap_or_default()
        ));
    }
    write_bytes(&dir.join("fidelity.csv"), s.as_bytes())?;
    let summary = ReportSummary {
        provenance: prov,
        checkpoints: manifest.checkpoints,
        fidelities: fids,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// The whole pipeline: generate, corrupt, train, evaluate, report.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<ReportSummary> {
    cmd_generate(cfg, out)?;
    if cfg.models.variants.iter().any(|v| v.uses_noisy_data()) {
        cmd_corrupt(cfg, out, None)?;
    }
    cmd_train(cfg, out, None)?;
    cmd_evaluate(cfg, out, None)?;
    cmd_report(out, Some(&provenance(cfg)))
}
