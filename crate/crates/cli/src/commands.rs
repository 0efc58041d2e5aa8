use std::collections::BTreeMap;

use romes::gpr::interval_half_width;
use romes::problems::FomProblem;
use romes::romes::{
    draw_parameters, error_metrics, offline_train, online_predict, pareto_study, validation_frequency, ErrorMetrics,
    FomSnapshots, OfflineInputs, OfflinePackage, ParetoMethod,
};
use romes::RomError;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{Cell, OutputFile, Outputs};
use crate::CliError;

pub const VERSION: &str = env!("ROMES_BUILD_VERSION");
const BAND: f64 = 0.99;
const CURVE_POINTS: usize = 101;

fn stage(name: &'static str) -> impl Fn(RomError) -> CliError {
    move |e| match e {
        RomError::Io(_) | RomError::Checkpoint(_) => CliError::Io(format!("{name}: {e}")),
        other => CliError::Numerical {
            stage: name,
            source: other,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub name: String,
    pub state_dim: usize,
    pub parameter_dim: usize,
}

impl ProblemInfo {
    fn of(p: &dyn FomProblem<f64>) -> Self {
        Self {
            name: p.name().to_string(),
            state_dim: p.dimension(),
            parameter_dim: p.parameter_box().dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFrequency {
    pub omega: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub index: usize,
    /// `None` when the test responses are constant.
    pub fvu: Option<f64>,
    pub validation: Vec<LevelFrequency>,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiSummary {
    pub label: String,
    pub e_q: f64,
    pub e_q_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub e_x: f64,
    pub e_x_par_tilde: f64,
    pub e_x_par: f64,
    pub e_x_full_tilde: f64,
    pub e_x_full: f64,
    pub coordinates: Vec<CoordinateSummary>,
    pub qoi: Vec<QoiSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub problem: ProblemInfo,
    pub online_points: usize,
    pub excluded_points: usize,
    pub metrics: MetricsSummary,
    pub files: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSummaryRecord {
    pub method: ParetoMethod,
    pub n: usize,
    pub n_perp: usize,
    pub n_p: Option<usize>,
    pub relative_error: f64,
    pub relative_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoSummary {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub problem: ProblemInfo,
    pub records: Vec<ParetoSummaryRecord>,
    /// Indices into `records`.
    pub fronts: BTreeMap<ParetoMethod, Vec<usize>>,
    pub files: Vec<OutputFile>,
}

fn frequencies(package: &OfflinePackage<f64>, m: &ErrorMetrics<f64>, omegas: &[f64]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::with_capacity(package.n_bar());
    for (i, model) in package.gp_models.iter().enumerate() {
        let rho: Vec<f64> = m.points.iter().map(|p| p.indicators[i]).collect();
        let truth: Vec<f64> = m.points.iter().map(|p| p.exact_coordinates[i]).collect();
        out.push(
            omegas
                .iter()
                .map(|&w| validation_frequency(model, &rho, &truth, w))
                .collect::<Result<Vec<_>, _>>()
                .map_err(stage("validation"))?,
        );
    }
    Ok(out)
}

fn band(mean: f64, var: f64) -> Result<(f64, f64), CliError> {
    let h = interval_half_width(var.max(0.0).sqrt(), BAND).map_err(stage("scatter"))?;
    Ok((mean - h, mean + h))
}

fn write_scatter(out: &mut Outputs, package: &OfflinePackage<f64>, m: &ErrorMetrics<f64>) -> Result<(), CliError> {
    let t = &package.training;
    for (i, model) in package.gp_models.iter().enumerate() {
        let header = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();

        let rows: Vec<Vec<Cell>> = (0..t.features.nrows())
            .map(|r| vec![t.features[(r, i)].into(), t.responses[(r, i)].into()])
            .collect();
        out.table(&format!("training_scatter_{i}.csv"), &header(&["rho", "delta"]), &rows)?;

        let mut rows = Vec::with_capacity(m.points.len());
        for p in &m.points {
            let (lo, hi) = band(p.means[i], p.variances[i])?;
            rows.push(vec![
                p.indicators[i].into(),
                p.exact_coordinates[i].into(),
                p.means[i].into(),
                lo.into(),
                hi.into(),
            ]);
        }
        out.table(
            &format!("online_scatter_{i}.csv"),
            &header(&["rho", "delta", "mean", "lower_99", "upper_99"]),
            &rows,
        )?;

        let col = t.features.column(i);
        let all = col.iter().copied().chain(m.points.iter().map(|p| p.indicators[i]));
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let mut rows = Vec::with_capacity(CURVE_POINTS);
        for k in 0..CURVE_POINTS {
            let rho = lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64;
            let (mean, var) = model.posterior(rho);
            let (a, b) = band(mean, var)?;
            rows.push(vec![rho.into(), mean.into(), a.into(), b.into()]);
        }
        out.table(
            &format!("gp_curve_{i}.csv"),
            &header(&["rho", "mean", "lower_99", "upper_99"]),
            &rows,
        )?;
    }
    Ok(())
}

fn omega_label(w: f64) -> String {
    format!("{w}")
}

fn write_metrics(
    out: &mut Outputs,
    m: &ErrorMetrics<f64>,
    freqs: &[Vec<f64>],
    omegas: &[f64],
) -> Result<(), CliError> {
    let mut header = Vec::new();
    let mut row: Vec<Cell> = Vec::new();
    for (i, c) in m.coordinates.iter().enumerate() {
        header.push(format!("fvu_{i}"));
        row.push(c.fvu.map_or(Cell::Empty, Cell::Num));
        for (j, &w) in omegas.iter().enumerate() {
            header.push(format!("nu_{}_{i}", omega_label(w)));
            row.push(freqs[i][j].into());
        }
        header.push(format!("ks_{i}"));
        row.push(c.ks.into());
    }
    for (name, v) in [
        ("e_x", m.e_x),
        ("e_x_par_tilde", m.e_x_par_tilde),
        ("e_x_par", m.e_x_par),
        ("e_x_full_tilde", m.e_x_full_tilde),
        ("e_x_full", m.e_x_full),
    ] {
        header.push(name.to_string());
        row.push(v.into());
    }
    for q in &m.qoi {
        header.push(format!("e_q_{}", q.label));
        row.push(q.e_q.into());
        header.push(format!("e_q_tilde_{}", q.label));
        row.push(q.e_q_tilde.into());
    }
    out.table("metrics.csv", &header, &[row])?;

    let Some(first) = m.points.first() else {
        return Ok(());
    };
    let d = first.mu.len();
    let n_bar = first.indicators.len();
    let mut header: Vec<String> = (0..d).map(|j| format!("mu_{j}")).collect();
    for prefix in ["rho", "delta", "mean", "variance"] {
        header.extend((0..n_bar).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(
        ["e_x", "e_x_par_tilde", "e_x_par", "e_x_full_tilde", "e_x_full", "rom_newton_iters"]
            .iter()
            .map(|s| s.to_string()),
    );
    let rows: Vec<Vec<Cell>> = m
        .points
        .iter()
        .map(|p| {
            let mut r: Vec<Cell> = p.mu.values().iter().map(|&v| v.into()).collect();
            for v in [&p.indicators, &p.exact_coordinates, &p.means, &p.variances] {
                r.extend(v.iter().map(|&x| Cell::from(x)));
            }
            let e = &p.errors;
            for v in [e.e_x, e.e_x_par_tilde, e.e_x_par, e.e_x_full_tilde, e.e_x_full] {
                r.push(v.into());
            }
            r.push(p.rom_newton_iters.into());
            r
        })
        .collect();
    out.table("points.csv", &header, &rows)
}

/// Offline stage, online evaluation on `D_online`, and all artifacts.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let problem = config.benchmark.build::<f64>(config.grid_m);
    let p = problem.as_ref();
    log::info!("{}: N = {}", p.name(), p.dimension());
    let package = offline_train(p, &config.model).map_err(stage("offline"))?;

    let online = draw_parameters(p.parameter_box(), config.online.size, config.online.seed);
    let metrics = error_metrics(p, &package, &online).map_err(stage("online"))?;
    log::info!(
        "e_x = {:.3e}, e_x_par_tilde = {:.3e}, e_x_full_tilde = {:.3e}",
        metrics.e_x,
        metrics.e_x_par_tilde,
        metrics.e_x_full_tilde
    );

    let mut out = Outputs::new(&config.output_dir)?;
    package.save(&out.root().join("package"), p).map_err(stage("checkpoint"))?;
    out.record("package", "checkpoint");
    write_scatter(&mut out, &package, &metrics)?;
    let freqs = frequencies(&package, &metrics, &config.omegas)?;
    write_metrics(&mut out, &metrics, &freqs, &config.omegas)?;

    let functionals = p.qoi_functionals();
    if !functionals.is_empty() {
        let mu = &metrics.points[0].mu;
        let pred = online_predict(p, &package, mu, &functionals, config.online.n_samples, config.online.seed)
            .map_err(stage("online"))?;
        let header: Vec<String> = functionals.iter().map(|f| f.label.clone()).collect();
        let rows: Vec<Vec<Cell>> = pred
            .qoi
            .samples
            .row_iter()
            .map(|r| r.iter().map(|&v| Cell::from(v)).collect())
            .collect();
        out.table("qoi_samples.csv", &header, &rows)?;
    }

    let summary = RunSummary {
        version: VERSION.to_string(),
        command: "run".into(),
        config: config.clone(),
        problem: ProblemInfo::of(p),
        online_points: metrics.points.len(),
        excluded_points: metrics.excluded,
        metrics: MetricsSummary {
            e_x: metrics.e_x,
            e_x_par_tilde: metrics.e_x_par_tilde,
            e_x_par: metrics.e_x_par,
            e_x_full_tilde: metrics.e_x_full_tilde,
            e_x_full: metrics.e_x_full,
            coordinates: metrics
                .coordinates
                .iter()
                .enumerate()
                .map(|(i, c)| CoordinateSummary {
                    index: i,
                    fvu: c.fvu,
                    validation: config
                        .omegas
                        .iter()
                        .zip(&freqs[i])
                        .map(|(&omega, &frequency)| LevelFrequency { omega, frequency })
                        .collect(),
                    ks: c.ks,
                })
                .collect(),
            qoi: metrics
                .qoi
                .iter()
                .map(|q| QoiSummary {
                    label: q.label.clone(),
                    e_q: q.e_q,
                    e_q_tilde: q.e_q_tilde,
                })
                .collect(),
        },
        files: out.files.clone(),
    };
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// Accuracy/cost study over the configured grid.
pub fn pareto(config: &ExperimentConfig) -> Result<ParetoSummary, CliError> {
    let problem = config.benchmark.build::<f64>(config.grid_m);
    let p = problem.as_ref();
    let grid = config.pareto.grid();
    if grid.is_empty() {
        return Err(CliError::Config("pareto grid is empty".into()));
    }
    log::info!("{}: N = {}, {} grid points", p.name(), p.dimension(), grid.len());
    let inputs = OfflineInputs::generate(p, &config.model).map_err(stage("offline"))?;
    let online = draw_parameters(p.parameter_box(), config.online.size, config.online.seed);
    let test = FomSnapshots::solve(p, online, &config.model.solver).map_err(stage("online"))?;
    let study = pareto_study(p, &config.model, &grid, &inputs, &test).map_err(stage("pareto"))?;

    let mut out = Outputs::new(&config.output_dir)?;
    let header: Vec<String> = [
        "method",
        "n",
        "n_perp",
        "n_p",
        "relative_error",
        "relative_cost",
        "relative_wall_time",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let row = |i: usize| {
        let r = &study.records[i];
        vec![
            Cell::from(r.method.as_str()),
            r.n.into(),
            r.n_perp.into(),
            r.n_p.into(),
            r.relative_error.into(),
            r.relative_cost.into(),
            r.relative_wall_time.into(),
        ]
    };
    let all: Vec<Vec<Cell>> = (0..study.records.len()).map(row).collect();
    out.table("pareto_points.csv", &header, &all)?;
    let front: Vec<Vec<Cell>> = study.fronts.values().flatten().map(|&i| row(i)).collect();
    out.table("pareto_front.csv", &header, &front)?;

    let summary = ParetoSummary {
        version: VERSION.to_string(),
        command: "pareto".into(),
        config: config.clone(),
        problem: ProblemInfo::of(p),
        records: study
            .records
            .iter()
            .map(|r| ParetoSummaryRecord {
                method: r.method,
                n: r.n,
                n_perp: r.n_perp,
                n_p: r.n_p,
                relative_error: r.relative_error,
                relative_cost: r.relative_cost,
            })
            .collect(),
        fronts: study.fronts.clone(),
        files: out.files.clone(),
    };
    out.json("summary.json", &summary)?;
    Ok(summary)
}
