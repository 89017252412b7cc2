//! Individual pipeline steps, each reading and writing files in the run
//! directory `<out>/<experiment>/`:
//!
//! - `generate` writes `data/{train,cal,test}.fcpd`,
//! - `fit` reads `data/train.fcpd` and writes `model.fcpm`,
//! - `calibrate` reads the model and `data/cal.fcpd` and writes
//!   `calibration.csv` and `scores.csv`,
//! - `evaluate` reads the model, `calibration.csv` and `data/test.fcpd` and
//!   writes `evaluation.csv`,
//! - `sweep` runs the resolution sweep and writes `sweep.csv` and
//!   `transport.csv`.
//!
//! Each step writes `manifest_<step>.toml`.

use std::path::Path;

use fcp_core::conformal::{calibrate as calibrate_scores, coverage, points_inside, ScoreNorm};
use fcp_core::intervals::adjust_quantile_bounds;
use fcp_core::surrogate::fit_quantile_triplet;
use fcp_core::transport::extrapolate_tau;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Problem};
use crate::data::{input_spec, ns_trajectories, problem_grid, split_ranges, static_splits, transitions};
use crate::dataset::read_dataset;
use crate::error::{io_err, HarnessError, Result, StageExt};
use crate::experiments::poisson::quantile_options;
use crate::experiments::superres::transport;
use crate::experiments::{fit_operator, predict_pairs, scores};
use crate::model::{read_model, Model};
use crate::report::{num, FileRecord, RunWriter, Table};

pub fn generate(cfg: &ExperimentConfig) -> Result<Vec<FileRecord>> {
    let mut w = RunWriter::create(&cfg.run_dir())?;
    if cfg.experiment.problem() == Problem::NavierStokes {
        let spec = input_spec(cfg, cfg.seed);
        for (name, range) in ["train", "cal", "test"].into_iter().zip(split_ranges(cfg)) {
            let pairs = transitions(&ns_trajectories(cfg, &spec, range)?);
            w.dataset(name, &pairs[0].0.grid().clone(), &pairs)?;
        }
    } else {
        let grid = problem_grid(cfg.experiment.problem(), cfg.data.geometry, cfg.data.resolution)?;
        let s = static_splits(cfg, cfg.seed, &grid)?;
        w.dataset("train", &grid, &s.train)?;
        w.dataset("cal", &grid, &s.cal)?;
        w.dataset("test", &grid, &s.test)?;
    }
    w.finish(cfg, "manifest_generate.toml")
}

fn data(cfg: &ExperimentConfig, split: &str) -> Result<Vec<(fcp_core::Field, fcp_core::Field)>> {
    Ok(read_dataset(&cfg.run_dir().join("data").join(format!("{split}.fcpd")))?.samples)
}

pub fn fit(cfg: &ExperimentConfig) -> Result<Vec<FileRecord>> {
    let train = data(cfg, "train")?;
    let model = if cfg.experiment == Experiment::PoissonQuantile {
        Model::Triplet(
            fit_quantile_triplet(&train, cfg.surrogate.modes, &quantile_options(cfg)).stage("fit quantile triplet")?,
        )
    } else {
        Model::Operator(fit_operator(cfg, &train)?)
    };
    let mut w = RunWriter::create(&cfg.run_dir())?;
    w.model("model", &model)?;
    w.finish(cfg, "manifest_fit.toml")
}

fn model(cfg: &ExperimentConfig) -> Result<Model> {
    read_model(&cfg.run_dir().join("model.fcpm"))
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<Vec<FileRecord>> {
    let m = model(cfg)?;
    let cal = predict_pairs(m.operator(), &data(cfg, "cal")?)?;
    let s = scores(&cal, ScoreNorm::Weighted)?;
    let c = calibrate_scores(&s, cfg.alpha).stage("calibrate")?;
    let mut t = Table::new("calibration", &["alpha", "n", "k", "tau", "conservative"]);
    t.push(vec![
        num(c.alpha()),
        c.n().to_string(),
        c.k_index().to_string(),
        num(c.tau()),
        c.conservative().to_string(),
    ]);
    let mut st = Table::new("scores", &["index", "score"]);
    for (i, v) in s.iter().enumerate() {
        st.push(vec![i.to_string(), num(*v)]);
    }
    let mut w = RunWriter::create(&cfg.run_dir())?;
    w.table(&t)?;
    w.table(&st)?;
    w.finish(cfg, "manifest_calibrate.toml")
}

/// Reads `tau` from a `calibration.csv`.
pub fn read_tau(path: &Path) -> Result<f64> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Config(format!("{}: {other:?}", path.display())),
    })?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "tau")
        .ok_or_else(|| HarnessError::Config(format!("{}: no tau column", path.display())))?;
    let rec = r
        .records()
        .next()
        .ok_or_else(|| HarnessError::Config(format!("{}: no rows", path.display())))??;
    let cell = rec.get(col).unwrap_or_default();
    cell.parse()
        .map_err(|_| HarnessError::Config(format!("{}: bad tau value {cell:?}", path.display())))
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<FileRecord>> {
    let m = model(cfg)?;
    let tau = read_tau(&cfg.run_dir().join("calibration.csv"))?;
    let test = data(cfg, "test")?;
    let pairs = predict_pairs(m.operator(), &test)?;
    let rep = coverage(&pairs, tau, cfg.alpha, None).stage("coverage")?;
    let pointwise = match &m {
        Model::Triplet(tp) => {
            let counts: Vec<usize> = test
                .par_iter()
                .map(|(x, y)| {
                    let (lo, mid, hi) = tp.predict(x, y.grid())?;
                    let (lo, hi) = adjust_quantile_bounds(&lo, &mid, &hi, tau)?;
                    points_inside(&lo, &hi, y)
                })
                .collect::<fcp_core::Result<_>>()
                .stage("quantile bounds")?;
            num(counts.iter().sum::<usize>() as f64 / rep.n_points as f64)
        }
        Model::Operator(_) => String::new(),
    };
    let mut t = Table::new(
        "evaluation",
        &["tau", "n_test", "functional", "pointwise", "tv_lower_bound"],
    );
    t.push(vec![
        num(tau),
        rep.n_functions.to_string(),
        num(rep.functional),
        pointwise,
        num(rep.tv_lower_bound),
    ]);
    let mut w = RunWriter::create(&cfg.run_dir())?;
    w.table(&t)?;
    w.finish(cfg, "manifest_evaluate.toml")
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<FileRecord>> {
    let tr = transport(cfg)?;
    let mut s = Table::new("sweep", &["resolution", "tau", "n_cal"]);
    for p in &tr.sweep {
        s.push(vec![p.resolution.to_string(), num(p.tau), p.n_cal.to_string()]);
    }
    let mut t = Table::new(
        "transport",
        &["resolution", "tau", "extrapolated", "slope", "intercept"],
    );
    for &r in &cfg.transport.target_resolutions {
        let e = extrapolate_tau(&tr.fit, r);
        t.push(vec![
            r.to_string(),
            num(e.tau),
            e.extrapolated.to_string(),
            num(tr.fit.slope),
            num(tr.fit.intercept),
        ]);
    }
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut w = RunWriter::create(&dir)?;
    w.table(&s)?;
    w.table(&t)?;
    w.finish(cfg, "manifest_sweep.toml")
}
