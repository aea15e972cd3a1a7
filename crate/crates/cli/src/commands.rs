use std::path::{Path, PathBuf};

use hula_core::diagnostics::{
    effective_sample_size, ess_ratio, naive_predictor, predictive_scores, probability_curve, EssReport,
};
use hula_core::mcmc::{run_exact_mcmc, run_oracle_gibbs, McmcConfig, MhConfig};
use hula_core::mnp::data::gaussian_design;
use hula_core::mnp::{
    default_preconditioner, sigma_from_angles, simulate_dataset, ChoiceDataset, InterceptLogPriceDesign, MnpModel,
    MnpParams, MnpSpec, PredictiveSampler,
};
use hula_core::rng::{stage_rng, ChainRng};
use hula_core::{
    run_hula, run_joint_ula, ChainOutput, Draws, HulaError, JointUlaOptions, LatentModel, LinearGaussianModel,
    ParameterVector, SamplerConfig, Subsample,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Design, ModelConfig, SamplerKind};
use crate::error::{CliError, CliResult};
use crate::io;
use crate::manifest::{RunManifest, Stopwatch};

const SIMULATE_STAGE: u64 = 1;
const REPORT_STAGE: u64 = 2;
const FIT_STAGE: u64 = 10;

/// Ground-truth parameters of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Truth {
    Mnp {
        alternatives: usize,
        factors: usize,
        regressors: usize,
        beta: Vec<f64>,
        kappa: Vec<f64>,
        sigma: Vec<Vec<f64>>,
    },
    LinearGaussian {
        theta: f64,
    },
}

fn manifest_path(out: &Path, command: &str, sampler: Option<SamplerKind>) -> PathBuf {
    match sampler {
        Some(s) => out.join(format!("manifest_{command}_{}.json", s.name())),
        None => out.join(format!("manifest_{command}.json")),
    }
}

fn probit_spec(config: &Config, regressors: usize) -> CliResult<MnpSpec> {
    let ModelConfig::Mnp { alternatives, factors } = config.model else {
        unreachable!("probit spec requested for a non-probit model")
    };
    MnpSpec::new(alternatives, factors, regressors).map_err(|e| CliError::Config(format!("model: {e}")))
}

pub fn simulate(config: &Config, out: &Path) -> CliResult<RunManifest> {
    let mut clock = Stopwatch::start();
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate: section missing".into()))?;
    let mut rng = stage_rng(config.seed, SIMULATE_STAGE);
    let (outputs, truth) = match &config.model {
        ModelConfig::Mnp { alternatives, .. } => {
            let j = *alternatives;
            let regressors = match sim.design {
                Design::InterceptLogPrice { .. } => j + 1,
                Design::Gaussian { regressors } => regressors,
            };
            let spec = probit_spec(config, regressors)?;
            let beta = match &sim.beta {
                Some(b) if b.len() != regressors => {
                    return Err(CliError::Config(format!(
                        "simulate.beta: expected {regressors} entries"
                    )))
                }
                Some(b) => b.clone(),
                None => (0..regressors).map(|_| rng.sample(StandardNormal)).collect(),
            };
            let kappa = match &sim.kappa {
                Some(k) if k.len() != spec.angle_dim() => {
                    return Err(CliError::Config(format!(
                        "simulate.kappa: expected {} entries",
                        spec.angle_dim()
                    )))
                }
                Some(k) => k.clone(),
                None => (0..spec.angle_dim())
                    .map(|_| rng.random_range(0.0..std::f64::consts::PI))
                    .collect(),
            };
            let x = match sim.design {
                Design::InterceptLogPrice { log_price_sd } => {
                    InterceptLogPriceDesign::new(j, log_price_sd).draw(sim.n, &mut rng)
                }
                Design::Gaussian { regressors } => gaussian_design(sim.n, j, regressors, &mut rng),
            };
            let params = MnpParams { beta, kappa };
            let (y, _) = simulate_dataset(&params, &spec, &x, &mut rng)?;
            clock.lap("simulate");
            let data = ChoiceDataset::new(j, regressors, y, x)?;
            let outputs = io::write_choice_dataset(out, &data)?;
            let sigma = sigma_from_angles(&params.kappa, &spec)?.sigma;
            let truth = Truth::Mnp {
                alternatives: j,
                factors: spec.factors,
                regressors,
                beta: params.beta,
                kappa: params.kappa,
                sigma: sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
            };
            (outputs, truth)
        }
        ModelConfig::LinearGaussian { sigma_z, sigma_y, .. } => {
            let theta = sim.theta.unwrap_or_else(|| rng.sample::<f64, _>(StandardNormal));
            let y = LinearGaussianModel::simulate(sim.n, theta, *sigma_z, *sigma_y, &mut rng);
            clock.lap("simulate");
            (vec![io::write_observations(out, &y)?], Truth::LinearGaussian { theta })
        }
    };
    let truth_path = out.join(io::TRUTH_FILE);
    io::write_json(&truth_path, &truth)?;
    clock.lap("write");
    let mut all = outputs;
    all.push(truth_path);
    let manifest = clock.manifest("simulate", config.hash(), config.seed, all);
    io::write_json(&manifest_path(out, "simulate", None), &manifest)?;
    Ok(manifest)
}

/// Seeded split of `0..n` into sorted training and test indices.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChainRng::seed_from_u64(seed));
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1.min(n), n);
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

enum LoadedModel {
    Mnp(MnpModel),
    Linear(LinearGaussianModel),
}

fn load_model(config: &Config, out: &Path) -> CliResult<LoadedModel> {
    let dir = config.data_dir(out);
    match &config.model {
        ModelConfig::Mnp { alternatives, .. } => {
            let full = io::read_choice_dataset(dir)?;
            if full.alternatives() != *alternatives {
                return Err(CliError::Config(format!(
                    "model.alternatives is {alternatives} but the dataset has {}",
                    full.alternatives()
                )));
            }
            let spec = probit_spec(config, full.regressors())?;
            let (train, _) = train_test_split(full.len(), config.split.train_fraction, config.split.seed);
            Ok(LoadedModel::Mnp(MnpModel::new(spec, full.select(&train))?))
        }
        ModelConfig::LinearGaussian {
            sigma_z,
            sigma_y,
            prior_mean,
            prior_var,
        } => {
            let y = io::read_observations(dir)?;
            let var = prior_var.unwrap_or(f64::INFINITY);
            Ok(LoadedModel::Linear(LinearGaussianModel::new(
                y,
                *sigma_z,
                *sigma_y,
                *prior_mean,
                var,
            )?))
        }
    }
}

fn thin_rows(draws: &Draws, thin: usize) -> Draws {
    let mut out = Draws::new(draws.dim());
    for row in draws.rows().skip(thin - 1).step_by(thin) {
        out.push(row).expect("same dimension");
    }
    out
}

struct FitResult {
    chain: ChainOutput,
    acceptance: Option<Vec<f64>>,
    diverged_at: Option<usize>,
}

fn langevin<M: LatentModel>(
    model: &M,
    kind: SamplerKind,
    cfg: &SamplerConfig,
    start: &ParameterVector,
    rng: &mut ChainRng,
) -> CliResult<FitResult> {
    let result = match kind {
        SamplerKind::JointUla => {
            let z0 = model.initial_latent(start)?;
            run_joint_ula(model, cfg, start, &z0, JointUlaOptions::default(), rng)
        }
        _ => run_hula(model, cfg, start, rng),
    };
    match result {
        Ok(chain) => Ok(FitResult {
            chain,
            acceptance: None,
            diverged_at: None,
        }),
        Err(HulaError::Divergence { iteration, partial }) => Ok(FitResult {
            chain: *partial,
            acceptance: None,
            diverged_at: Some(iteration),
        }),
        Err(e) => Err(e.into()),
    }
}

fn sampler_config(config: &Config, n: usize, precond: Vec<f64>) -> CliResult<SamplerConfig> {
    let fit = &config.fit;
    let subsample = match fit.sampler {
        SamplerKind::HulaSub => Subsample::Size(((n as f64 * fit.subsample).round() as usize).clamp(1, n.max(1))),
        _ => Subsample::Full,
    };
    let precond = match &fit.precond {
        Some(u) if u.len() != precond.len() => {
            return Err(CliError::Config(format!(
                "fit.precond: expected {} entries",
                precond.len()
            )))
        }
        Some(u) => u.clone(),
        None => precond,
    };
    Ok(SamplerConfig {
        tau: fit.tau.unwrap_or(1.0 / n.max(1) as f64),
        precond,
        draws_per_step: fit.draws_per_step,
        subsample,
        iterations: fit.iterations,
        burn_in: fit.burn_in,
        seed: config.seed,
        thin: fit.thin,
    })
}

pub fn fit(config: &Config, out: &Path) -> CliResult<RunManifest> {
    let mut clock = Stopwatch::start();
    let kind = config.fit.sampler;
    let loaded = load_model(config, out)?;
    clock.lap("load");
    let mut rng = stage_rng(config.seed, FIT_STAGE + kind as u64);
    let (names, result) = match &loaded {
        LoadedModel::Mnp(model) => {
            let spec = *model.spec();
            let names = io::probit_parameter_names(spec.regressors, spec.angle_dim());
            let start = ParameterVector::new(MnpParams::default_start(&spec).to_theta())?;
            let result = if kind == SamplerKind::Mcmc {
                let fit = &config.fit;
                let mcmc = McmcConfig {
                    iterations: fit.iterations,
                    burn_in: fit.burn_in,
                    thin: fit.thin,
                    seed: config.seed,
                    mh: MhConfig::contiguous(spec.angle_dim(), fit.proposal_sd, fit.burn_in),
                };
                let output = run_exact_mcmc(model, &mcmc, &start, &mut rng)?;
                FitResult {
                    chain: output.chain,
                    acceptance: Some(output.acceptance_rates),
                    diverged_at: None,
                }
            } else {
                let precond = default_preconditioner(model.data(), &spec)?;
                let cfg = sampler_config(config, model.data().len(), precond)?;
                langevin(model, kind, &cfg, &start, &mut rng)?
            };
            (names, result)
        }
        LoadedModel::Linear(model) => {
            let names = vec!["theta".to_string()];
            let start = ParameterVector::new(vec![model.prior_mean()])?;
            let result = if kind == SamplerKind::Mcmc {
                let fit = &config.fit;
                let mut chain = run_oracle_gibbs(model, fit.iterations, fit.burn_in, start[0], &mut rng)?;
                chain.draws = thin_rows(&chain.draws, fit.thin);
                FitResult {
                    chain,
                    acceptance: None,
                    diverged_at: None,
                }
            } else {
                let cfg = sampler_config(config, model.y().len(), vec![1.0])?;
                langevin(model, kind, &cfg, &start, &mut rng)?
            };
            (names, result)
        }
    };
    clock.lap("sample");

    let draws_path = io::draws_file(out, kind.name());
    io::write_draws(&draws_path, &names, &result.chain.draws)?;
    clock.lap("write");
    let mut manifest = clock.manifest("fit", config.hash(), config.seed, vec![draws_path.clone()]);
    manifest.sampler = Some(kind.name().into());
    manifest.iterations_run = Some(result.chain.iterations_run);
    manifest.seconds_per_iteration = Some(result.chain.wall_time_per_iteration);
    manifest.latent_seconds_per_iteration = Some(result.chain.latent_time_per_iteration);
    manifest.acceptance_rates = result.acceptance;
    if result.diverged_at.is_some() {
        manifest.status = "diverged".into();
    }
    io::write_json(&manifest_path(out, "fit", Some(kind)), &manifest)?;
    match result.diverged_at {
        Some(iteration) => Err(CliError::Diverged {
            iteration,
            draws: draws_path,
        }),
        None => Ok(manifest),
    }
}

fn evenly_spaced(draws: &Draws, max_rows: usize) -> Draws {
    let n = draws.n_rows();
    if n <= max_rows {
        return draws.clone();
    }
    let mut out = Draws::with_capacity(draws.dim(), max_rows);
    for k in 0..max_rows {
        out.push(draws.row(k * n / max_rows)).expect("same dimension");
    }
    out
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn report(config: &Config, out: &Path) -> CliResult<RunManifest> {
    let mut clock = Stopwatch::start();
    let rc = &config.report;
    let mut chains: Vec<(SamplerKind, Draws)> = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut kinds = rc.chains.clone();
    if let Some(r) = rc.reference {
        if !kinds.contains(&r) {
            kinds.push(r);
        }
    }
    for kind in kinds {
        let path = io::draws_file(out, kind.name());
        let (header, draws) = io::read_draws(&path)?;
        if draws.n_rows() < 2 {
            return Err(CliError::data(&path, "need at least two draws"));
        }
        match &names {
            Some(n) if *n != header => {
                return Err(CliError::data(&path, "parameter columns differ from the other chains"));
            }
            Some(_) => {}
            None => names = Some(header),
        }
        chains.push((kind, draws));
    }
    let names = names.expect("at least one chain");
    clock.lap("load");

    let mut outputs = Vec::new();
    for (kind, draws) in &chains {
        let path = out.join(format!("trace_{}.csv", kind.name()));
        let mut header = vec!["iteration".to_string()];
        header.extend(names.iter().cloned());
        let rows = draws.rows().enumerate().map(|(i, row)| {
            std::iter::once((i + 1).to_string())
                .chain(row.iter().map(|v| fmt(*v)))
                .collect::<Vec<_>>()
        });
        io::write_csv(&path, &header, rows)?;
        outputs.push(path);
    }

    let reports: Vec<(SamplerKind, EssReport)> = chains
        .iter()
        .map(|(kind, draws)| {
            let lag = rc.max_lag.min(draws.n_rows() - 1);
            Ok((*kind, effective_sample_size(draws, lag)?))
        })
        .collect::<CliResult<_>>()?;
    let ess_path = out.join("ess.csv");
    let mut header = vec!["parameter".to_string()];
    for (kind, _) in &reports {
        header.push(format!("{}_ess", kind.name()));
        header.push(format!("{}_ess_per_iteration", kind.name()));
        header.push(format!("{}_max_lag", kind.name()));
    }
    let rows = names.iter().enumerate().map(|(p, name)| {
        let mut row = vec![name.clone()];
        for (_, rep) in &reports {
            row.extend([
                fmt(rep.ess_per_parameter[p]),
                fmt(rep.ess_per_iteration[p]),
                rep.max_lag.to_string(),
            ]);
        }
        row
    });
    io::write_csv(&ess_path, &header, rows)?;
    outputs.push(ess_path);

    if let Some(reference) = rc.reference {
        let denom = &reports
            .iter()
            .find(|(k, _)| *k == reference)
            .expect("reference loaded")
            .1;
        let ratios: Vec<(SamplerKind, Vec<f64>)> = reports
            .iter()
            .filter(|(k, _)| rc.chains.contains(k))
            .map(|(k, rep)| Ok((*k, ess_ratio(rep, denom)?)))
            .collect::<CliResult<_>>()?;
        let path = out.join("ess_ratio.csv");
        let mut header = vec!["parameter".to_string()];
        header.extend(
            ratios
                .iter()
                .map(|(k, _)| format!("{}_over_{}", k.name(), reference.name())),
        );
        let rows = names.iter().enumerate().map(|(p, name)| {
            std::iter::once(name.clone())
                .chain(ratios.iter().map(|(_, r)| fmt(r[p])))
                .collect::<Vec<_>>()
        });
        io::write_csv(&path, &header, rows)?;
        outputs.push(path);
    }
    clock.lap("diagnostics");

    if let ModelConfig::Mnp { .. } = config.model {
        let full = io::read_choice_dataset(config.data_dir(out))?;
        let spec = probit_spec(config, full.regressors())?;
        if names.len() != spec.theta_dim() {
            return Err(CliError::Config(format!(
                "draws have {} columns but the model has {} parameters",
                names.len(),
                spec.theta_dim()
            )));
        }
        outputs.extend(predictive_report(config, out, &spec, &full, &chains)?);
        clock.lap("predictive");
    }

    let mut manifest = clock.manifest("report", config.hash(), config.seed, outputs);
    manifest.sampler = Some(rc.chains.iter().map(|k| k.name()).collect::<Vec<_>>().join(","));
    io::write_json(&manifest_path(out, "report", None), &manifest)?;
    Ok(manifest)
}

fn predictive_report(
    config: &Config,
    out: &Path,
    spec: &MnpSpec,
    full: &ChoiceDataset,
    chains: &[(SamplerKind, Draws)],
) -> CliResult<Vec<PathBuf>> {
    let rc = &config.report;
    let mut rng = stage_rng(config.seed, REPORT_STAGE);
    let (j, r) = (spec.alternatives, spec.regressors);
    let (train_idx, test_idx) = train_test_split(full.len(), config.split.train_fraction, config.split.seed);
    let train = full.select(&train_idx);
    let test = full.select(&test_idx);

    let price_column = rc.price_column.unwrap_or(r - 1);
    if price_column >= r {
        return Err(CliError::Config(format!("report.price_column: must be below {r}")));
    }
    let (lo, hi) = rc.price_range.unwrap_or_else(|| {
        let col = full.x().iter().skip(price_column).step_by(r);
        col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let grid: Vec<f64> = match rc.grid_points {
        1 => vec![0.5 * (lo + hi)],
        g => (0..g).map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64).collect(),
    };
    let base = train.mean_attributes();

    let naive = naive_predictor(train.y(), j + 1)?;
    let mut score_header = Vec::new();
    let mut score_row = Vec::new();
    let mut curve_rows = Vec::new();
    let score = |table: &[Vec<f64>], y: &[usize]| -> CliResult<(String, String)> {
        if y.is_empty() {
            return Ok(("NaN".into(), "NaN".into()));
        }
        let s = predictive_scores(table, y)?;
        Ok((fmt(s.log_score), fmt(s.hit_rate)))
    };
    let mut push_scores = |name: &str, tables: [(&str, CliResult<(String, String)>); 2]| -> CliResult<()> {
        for (split, result) in tables {
            let (ls, hr) = result?;
            score_header.push(format!("{name}_{split}_log_score"));
            score_header.push(format!("{name}_{split}_hit_rate"));
            score_row.extend([ls, hr]);
        }
        Ok(())
    };

    for (kind, draws) in chains {
        let predictive = PredictiveSampler::new(&evenly_spaced(draws, rc.predictive_draws), spec)?;
        for target in 1..=j {
            for point in probability_curve(&predictive, &base, r, &grid, target, price_column, &mut rng)? {
                let mut row = vec![kind.name().to_string(), target.to_string(), fmt(point.price)];
                row.extend(point.probabilities.iter().map(|p| fmt(*p)));
                curve_rows.push(row);
            }
        }
        let t_in = predictive.probability_table(&train, &mut rng)?;
        let t_out = predictive.probability_table(&test, &mut rng)?;
        push_scores(
            kind.name(),
            [("in", score(&t_in, train.y())), ("out", score(&t_out, test.y()))],
        )?;
    }
    push_scores(
        "naive",
        [
            ("in", score(&naive.table(train.len()), train.y())),
            ("out", score(&naive.table(test.len()), test.y())),
        ],
    )?;

    let curves_path = out.join("curves.csv");
    let mut header = vec![
        "sampler".to_string(),
        "target_alternative".to_string(),
        "price".to_string(),
    ];
    header.extend((0..=j).map(|c| format!("p_{c}")));
    io::write_csv(&curves_path, &header, curve_rows)?;
    let scores_path = out.join("scores.csv");
    io::write_csv(&scores_path, &score_header, [score_row])?;
    Ok(vec![curves_path, scores_path])
}
