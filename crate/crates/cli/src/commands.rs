use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kernelscore::postproc::{
    csgd_quantiles, estimate_correlation, fit_csgd, reorder, CopulaPlan, GridMode, TrainingCase, DEFAULT_GRID_CAP,
};
use kernelscore::simstudy::{run_experiment, ExperimentConfig, WeightKind};
use kernelscore::verification::{dm_test_with, multivariate_rank_histogram, rank_histogram, Direction};
use kernelscore::{score_dataset, Ensemble, ScoreValue};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{fmt_f64, write_forecasts_csv, EnsembleDataset};
use crate::error::{with_path, CliError, CliResult};

pub struct Common {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl Common {
    fn output(&self, name: &str) -> CliResult<PathBuf> {
        with_path(fs::create_dir_all(&self.out), &self.out)?;
        Ok(self.out.join(name))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = with_path(csv::Writer::from_path(path), path)?;
    with_path(w.write_record(header), path)?;
    for row in rows {
        with_path(w.write_record(&row), path)?;
    }
    with_path(w.flush(), path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    with_path(fs::write(path, text + "\n"), path)
}

fn validate_scores(common: &Common, dim: usize) -> CliResult<()> {
    for entry in common.config.score_entries(dim) {
        entry
            .request()
            .validate(dim)
            .map_err(|e| CliError::data(format!("score '{}' ({}): {e}", entry.label(), entry.mode())))?;
    }
    Ok(())
}

pub fn score(common: &Common, data: &EnsembleDataset) -> CliResult<()> {
    validate_scores(common, data.dim)?;
    let cases = data.forecast_cases()?;
    let ids = data.ids();
    let mut per_case = Vec::new();
    let mut aggregate = Vec::new();
    for entry in common.config.score_entries(data.dim) {
        let result = score_dataset(&entry.request(), &cases)?;
        let (label, mode) = (entry.label(), entry.mode().to_string());
        for (id, v) in ids.iter().zip(&result.per_case) {
            per_case.push(vec![label.clone(), mode.clone(), id.to_string(), fmt_opt(v.value())]);
        }
        aggregate.push(vec![
            label,
            mode,
            fmt_opt(result.mean),
            fmt_opt(result.std_error),
            result.n_undefined.to_string(),
        ]);
    }
    write_rows(&common.output("scores.csv")?, &["score", "mode", "case_id", "value"], per_case)?;
    write_rows(&common.output("aggregate.csv")?, &["score", "mode", "mean", "stderr", "n_undefined"], aggregate)
}

/// Aligns forecast B to the case order of A, taking observations from A when B has none.
fn align(a: &EnsembleDataset, b: &EnsembleDataset) -> CliResult<EnsembleDataset> {
    if a.dim != b.dim {
        return Err(CliError::data(format!("forecast dimensions differ: {} vs {}", a.dim, b.dim)));
    }
    let mut by_id: HashMap<&str, &crate::dataset::Case> = b.cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut missing = Vec::new();
    let mut cases = Vec::with_capacity(a.cases.len());
    for ca in &a.cases {
        match by_id.remove(ca.id.as_str()) {
            Some(cb) => {
                let mut c = cb.clone();
                if c.observation.is_none() {
                    c.observation = ca.observation.clone();
                }
                cases.push(c);
            }
            None => missing.push(ca.id.clone()),
        }
    }
    let mut extra: Vec<&str> = by_id.into_keys().collect();
    extra.sort_unstable();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::data(format!(
            "unmatched cases; only in A: [{}]; only in B: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    Ok(EnsembleDataset { cases, dim: a.dim })
}

fn direction_label(d: Direction) -> &'static str {
    match d {
        Direction::FavorsA => "favors_a",
        Direction::FavorsB => "favors_b",
        Direction::NoDecision => "no_decision",
    }
}

pub fn compare(common: &Common, a: &EnsembleDataset, b: &EnsembleDataset) -> CliResult<()> {
    validate_scores(common, a.dim)?;
    let b = align(a, b)?;
    let (cases_a, cases_b) = (a.forecast_cases()?, b.forecast_cases()?);
    if cases_a.iter().zip(&cases_b).any(|(x, y)| x.observation != y.observation) {
        return Err(CliError::data("forecasts A and B disagree on observations"));
    }
    let mut rows = Vec::new();
    for entry in common.config.score_entries(a.dim) {
        let req = entry.request();
        let sa: Vec<ScoreValue> = score_dataset(&req, &cases_a)?.per_case;
        let sb: Vec<ScoreValue> = score_dataset(&req, &cases_b)?.per_case;
        let r = dm_test_with(&sa, &sb, common.config.level, common.config.variance)
            .map_err(|e| CliError::data(format!("score '{}': {e}", entry.label())))?;
        rows.push(vec![
            entry.label(),
            entry.mode().to_string(),
            r.n.to_string(),
            fmt_opt(r.statistic),
            fmt_f64(r.p_value),
            direction_label(r.direction).to_string(),
        ]);
    }
    write_rows(&common.output("dm.csv")?, &["score", "mode", "n", "statistic", "p_value", "direction"], rows)
}

#[derive(Serialize)]
struct RankSummary<'a> {
    multivariate: bool,
    n: u64,
    counts: &'a [u64],
    chi_square: f64,
    p_value: f64,
}

pub fn rankhist(common: &Common, data: &EnsembleDataset) -> CliResult<()> {
    let cases = data.forecast_cases()?;
    let multivariate = data.dim > 1;
    let hist = if multivariate {
        multivariate_rank_histogram(&cases, common.seed)?
    } else {
        rank_histogram(&cases, common.seed)?
    };
    let (chi_square, p_value) = hist.chi_square_uniformity();
    let csv_path = common.output("rankhist.csv")?;
    with_path(fs::write(&csv_path, hist.to_csv()), &csv_path)?;
    write_json(
        &common.output("rankhist.json")?,
        &RankSummary { multivariate, n: hist.n, counts: &hist.counts, chi_square, p_value },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Univariate,
    Orthant,
    HalfSpace,
}

pub fn simulate(common: &Common, preset: Option<Preset>, dim: usize, reps: Option<usize>) -> CliResult<()> {
    let mut cfg: ExperimentConfig = match (preset, &common.config.simulate) {
        (Some(p), _) => {
            let (kind, d) = match p {
                Preset::Univariate => (WeightKind::Univariate, 1),
                Preset::Orthant => (WeightKind::Orthant, dim),
                Preset::HalfSpace => (WeightKind::HalfSpaceSum, dim),
            };
            ExperimentConfig::standard(kind, d, common.seed)
        }
        (None, Some(c)) => c.clone(),
        (None, None) => ExperimentConfig::standard(WeightKind::Univariate, 1, common.seed),
    };
    cfg.seed = common.seed;
    if let Some(r) = reps {
        cfg.repetitions = r;
    }
    let result = run_experiment(&cfg)?;
    let path = common.output("rejection_curves.csv")?;
    with_path(fs::write(&path, result.to_csv()), &path)?;
    for c in &result.curves {
        let dropped: usize = c.dropped.iter().sum();
        if dropped > 0 {
            eprintln!("{} {}: {dropped} repetition-threshold pairs dropped", c.score, c.mode);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CsgdOutput {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    xi: f64,
    log_likelihood: f64,
    n_train: usize,
}

fn read_table(path: &Path, columns: &[&str]) -> CliResult<Vec<(String, Vec<f64>)>> {
    let mut reader = with_path(csv::Reader::from_path(path), path)?;
    let headers = with_path(reader.headers(), path)?.clone();
    let positions: Vec<usize> = std::iter::once("case_id")
        .chain(columns.iter().copied())
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::data(format!("{}: line 1: missing column '{name}'", path.display())))
        })
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = with_path(record, path)?;
        let line = record.position().map_or(0, |p| p.line());
        let values = positions[1..]
            .iter()
            .map(|&i| {
                let field = record.get(i).unwrap_or("");
                field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::data(format!("{}: line {line}: '{field}' is not a finite number", path.display()))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push((record.get(positions[0]).unwrap_or("").to_string(), values));
    }
    Ok(rows)
}

pub fn fit_csgd_cmd(common: &Common, train: &Path, predict: Option<&Path>, members: usize) -> CliResult<()> {
    let cases: Vec<TrainingCase> = read_table(train, &["xbar", "s", "y"])?
        .into_iter()
        .map(|(_, v)| TrainingCase { xbar: v[0], s: v[1], y: v[2] })
        .collect();
    let fit = fit_csgd(&cases)?;
    let p = fit.params;
    write_json(
        &common.output("csgd_params.json")?,
        &CsgdOutput {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            delta: p.delta,
            xi: p.xi,
            log_likelihood: fit.log_likelihood,
            n_train: cases.len(),
        },
    )?;
    if let Some(path) = predict {
        if members == 0 {
            return Err(CliError::Usage("--members must be positive".into()));
        }
        let mut out = Vec::new();
        for (id, v) in read_table(path, &["xbar", "s"])? {
            let dist = p.predict(v[0], v[1]).map_err(|e| CliError::data(format!("case '{id}': {e}")))?;
            let q = csgd_quantiles(&dist, members)?;
            out.push((id, Ensemble::univariate(&q)?));
        }
        write_forecasts_csv(&common.output("csgd_quantiles.csv")?, 1, out.iter().map(|(id, e)| (id.as_str(), e)))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CopulaKind {
    Independence,
    Comonotonic,
    Ecc,
    Gaussian,
}

pub struct ReorderArgs<'a> {
    pub copula: CopulaKind,
    pub template: Option<&'a EnsembleDataset>,
    pub correlation: Option<Vec<f64>>,
    pub correlation_from: Option<&'a Path>,
    pub weight_mode: bool,
    pub cap: Option<u128>,
}

fn margins(ens: &Ensemble) -> Vec<Vec<f64>> {
    (0..ens.dim())
        .map(|j| {
            let mut c = ens.column(j);
            c.sort_by(f64::total_cmp);
            c
        })
        .collect()
}

pub fn reorder_cmd(common: &Common, data: &EnsembleDataset, args: &ReorderArgs) -> CliResult<()> {
    let correlation = match (args.copula, &args.correlation, args.correlation_from) {
        (CopulaKind::Gaussian, Some(r), _) => Some(r.clone()),
        (CopulaKind::Gaussian, None, Some(path)) => {
            let columns: Vec<String> = (1..=data.dim).map(|j| format!("dim_{j}")).collect();
            let names: Vec<&str> = columns.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = read_table(path, &names)?.into_iter().map(|(_, v)| v).collect();
            Some(estimate_correlation(&Ensemble::from_rows(&rows)?)?)
        }
        (CopulaKind::Gaussian, None, None) => {
            return Err(CliError::Usage("gaussian copula needs --correlation or --correlation-from".into()))
        }
        _ => None,
    };
    let templates: Option<HashMap<&str, &Ensemble>> =
        args.template.map(|t| t.cases.iter().map(|c| (c.id.as_str(), &c.ensemble)).collect());
    if args.copula == CopulaKind::Ecc && templates.is_none() {
        return Err(CliError::Usage("ecc needs --template".into()));
    }

    let mut reordered = Vec::with_capacity(data.cases.len());
    let mut weight_rows = Vec::new();
    for (i, case) in data.cases.iter().enumerate() {
        let plan = match args.copula {
            CopulaKind::Independence => CopulaPlan::Independence,
            CopulaKind::Comonotonic => CopulaPlan::Comonotonic,
            CopulaKind::Ecc => {
                let t = templates
                    .as_ref()
                    .and_then(|m| m.get(case.id.as_str()))
                    .ok_or_else(|| CliError::data(format!("no template for case '{}'", case.id)))?;
                CopulaPlan::Ecc { template: (*t).clone() }
            }
            CopulaKind::Gaussian => CopulaPlan::GaussianGrid {
                correlation: correlation.clone().unwrap_or_default(),
                mode: if args.weight_mode { GridMode::Weight } else { GridMode::Simulate },
                cap: args.cap.unwrap_or(DEFAULT_GRID_CAP),
            },
        };
        let r = reorder(&plan, &margins(&case.ensemble), common.seed.wrapping_add(i as u64))
            .map_err(|e| CliError::data(format!("case '{}': {e}", case.id)))?;
        if let Some(w) = &r.weights {
            weight_rows
                .extend(w.iter().enumerate().map(|(m, v)| vec![case.id.clone(), (m + 1).to_string(), fmt_f64(*v)]));
        }
        reordered.push((case.id.as_str(), r.ensemble));
    }
    write_forecasts_csv(&common.output("reordered.csv")?, data.dim, reordered.iter().map(|(id, e)| (*id, e)))?;
    if !weight_rows.is_empty() {
        write_rows(&common.output("weights.csv")?, &["case_id", "member", "weight"], weight_rows)?;
    }
    Ok(())
}
