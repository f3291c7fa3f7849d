//! Subcommand implementations. Each writes its outputs plus the resolved
//! config into the output directory.

use crate::config::{EnergyShape, ExperimentConfig, RESOLVED_CONFIG};
use crate::error::{CliError, CliResult};
use crate::output::{cell, points_csv, read_points, write_csv, write_file, Marker, Plot, Series};
use reglab::energy::FeatureExtractor;
use reglab::gaussian::{admissible_beta_interval, mse_closed_form, optimal_beta, sweep_with, SweepAxis};
use reglab::metrics::metric_report;
use reglab::nonparam::{solve_batch, weight_range, DensitySpec, EnergySpec1D, SolveOptions};
use reglab::toy::{auxiliary_sample, Perturbation, ToyDataset};
use reglab::trainer::{extractor_accuracy, pretrain_extractor, sample_generator, train_gan, train_sweep, TrainTrace};
use reglab::{weights, Exec};
use std::path::{Path, PathBuf};

pub const SWEEP_HEADER: &str = "axis_value,beta,lambda,mse_reg_cf,mse_mle_cf,mse_pre_cf,mse_reg_mc,stderr";
pub const DENSITY_HEADER: &str = "x,p_d,energy,weight,p_g_star";
pub const SUMMARY_HEADER: &str = "divergence,lambda,alpha_star,residual";
pub const TRACE_HEADER: &str = "step,d_loss,g_loss,energy_mean,mmd2,frechet";
pub const TRAIN_SUMMARY_HEADER: &str = "lambda,seed,step,mmd2,frechet";
pub const METRICS_HEADER: &str = "mmd2_unbiased,mmd2_biased,frechet,bandwidth,n_real,n_fake";

/// Creates the output directory and writes the resolved config into it.
pub fn prepare_output(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let out = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_file(&out.join(RESOLVED_CONFIG), &cfg.to_toml())?;
    Ok(out)
}

pub fn gaussian_sweep(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let g = &cfg.gaussian;
    let spec = g.spec()?;
    let (lo, hi) = admissible_beta_interval(&spec)?;
    let opt = optimal_beta(&spec)?;
    let axis = SweepAxis::from(g.axis);
    let rows = sweep_with(&spec, axis, &g.resolved_grid(), g.mc_trials, g.seed, Exec::Parallel)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                cell(Some(r.axis_value)),
                cell(Some(r.beta)),
                cell(Some(r.lambda)),
                cell(Some(r.point.mse_reg)),
                cell(Some(r.point.mse_mle)),
                cell(Some(r.point.mse_pre)),
                cell(r.mc.map(|m| m.mse_hat)),
                cell(r.mc.map(|m| m.stderr)),
            ]
        })
        .collect();
    write_csv(&out.join("gaussian_sweep.csv"), SWEEP_HEADER, &table)?;
    println!(
        "admissible beta interval ({lo}, {hi}); beta* = {}, lambda* = {}, MSE_min = {}",
        opt.beta_star, opt.lambda_star, opt.mse_min
    );

    if cfg.output.plot {
        let curve = |f: fn(&reglab::gaussian::TradeoffPoint) -> f64| -> Vec<(f64, f64)> {
            rows.iter().map(|r| (r.axis_value, f(&r.point))).collect()
        };
        let mut series = vec![
            Series { label: "REG".into(), points: curve(|p| p.mse_reg) },
            Series { label: "MLE".into(), points: curve(|p| p.mse_mle) },
            Series { label: "PRE".into(), points: curve(|p| p.mse_pre) },
        ];
        let mut markers = Vec::new();
        if axis == SweepAxis::Beta {
            for (label, b) in [("lo", lo), ("hi", hi), ("beta*", opt.beta_star)] {
                markers.push(Marker { label: label.into(), at: (b, mse_closed_form(&spec, b)?.mse_reg) });
            }
        }
        if let Some(mc) = rows.first().and_then(|r| r.mc).map(|_| rows.iter().map(|r| (r.axis_value, r.mc.map_or(f64::NAN, |m| m.mse_hat))).collect()) {
            series.push(Series { label: "REG (MC)".into(), points: mc });
        }
        let x_label = match axis {
            SweepAxis::Beta => "beta",
            SweepAxis::SampleSize => "m",
            SweepAxis::Bias => "bias",
        };
        let plot = Plot {
            title: "MSE of regularized vs MLE vs pre-trained estimates".into(),
            x_label: x_label.into(),
            y_label: "MSE".into(),
            log_x: axis == SweepAxis::SampleSize,
            series,
            markers,
        };
        write_file(&out.join("gaussian_sweep.svg"), &plot.render())?;
    }
    Ok(())
}

fn lambda_tag(l: f64) -> String {
    format!("{l}")
}

pub fn nonparam(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let n = &cfg.nonparam;
    let [a, b] = n.support;
    let spec = DensitySpec::uniform(a, b, n.quad_nodes)?;
    let energy = match n.energy {
        EnergyShape::Linear => EnergySpec1D::linear(n.slope, n.intercept, a, b)?,
        EnergyShape::Tabulated => EnergySpec1D::tabulated(n.energy_x.clone(), n.energy_y.clone(), a, b)?,
    };
    if n.lambdas.is_empty() {
        return Err(CliError::Config("nonparam.lambdas is empty".into()));
    }
    let jobs: Vec<_> = n.parsed_divergences()?.into_iter().flat_map(|d| n.lambdas.iter().map(move |&l| (d, l))).collect();
    let opts = SolveOptions { tol: n.tol, grid_points: n.grid_points, ..SolveOptions::default() };
    let results = solve_batch(&spec, &energy, &jobs, &opts, Exec::Parallel);

    let mut summary = Vec::new();
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (&(div, lambda), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => {
                let rows: Vec<Vec<String>> = r
                    .grid
                    .iter()
                    .map(|g| [g.x, g.p_d, g.energy, g.weight, g.p_g_star].iter().map(|&v| cell(Some(v))).collect())
                    .collect();
                write_csv(&out.join(format!("density_{div}_lambda_{}.csv", lambda_tag(lambda))), DENSITY_HEADER, &rows)?;
                summary.push(vec![div.to_string(), cell(Some(lambda)), cell(Some(r.alpha_star)), cell(Some(r.residual))]);
                let (_, _, ratio) = weight_range(&r);
                println!("{div} lambda={lambda}: alpha* = {}, residual = {:.3e}, weight ratio = {ratio}", r.alpha_star, r.residual);
                if series.is_empty() {
                    series.push(Series { label: "p_d".into(), points: r.grid.iter().map(|g| (g.x, g.p_d)).collect() });
                }
                series.push(Series {
                    label: format!("p_g* {div} λ={lambda}"),
                    points: r.grid.iter().map(|g| (g.x, g.p_g_star)).collect(),
                });
            }
            Err(e) => {
                eprintln!("{div} lambda={lambda}: {e}");
                failures.push(e);
            }
        }
    }
    write_csv(&out.join("nonparam_summary.csv"), SUMMARY_HEADER, &summary)?;
    if cfg.output.plot {
        let plot = Plot {
            title: "Optimal generator density under the energy regularizer".into(),
            x_label: "x".into(),
            y_label: "density".into(),
            log_x: false,
            series,
            markers: Vec::new(),
        };
        write_file(&out.join("nonparam.svg"), &plot.render())?;
    }
    partial(failures, jobs.len())
}

fn partial(mut failures: Vec<reglab::Error>, total: usize) -> CliResult<()> {
    match failures.len() {
        0 => Ok(()),
        failed => Err(CliError::Partial { failed, total, worst: Box::new(failures.swap_remove(0)) }),
    }
}

fn trace_rows(t: &TrainTrace) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend([r.d_loss, r.g_loss, r.energy_mean, r.mmd2, r.frechet].iter().map(|&v| cell(Some(v))));
            row
        })
        .collect()
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let t = &cfg.train;
    let data = ToyDataset::new(t.family()?, t.full_size, t.limited_m, t.data_seed)?;
    let tc = t.train_config()?;
    let sweep = !t.lambdas.is_empty();
    let lambdas = if sweep { t.lambdas.clone() } else { vec![tc.lambda] };
    let extractor = match &t.extractor_path {
        Some(p) if lambdas.iter().any(|&l| l > 0.0) => Some(FeatureExtractor::load(Path::new(p))?),
        None if lambdas.iter().any(|&l| l > 0.0) => {
            return Err(reglab::Error::InvalidInput("lambda > 0 requires train.extractor_path".into()).into())
        }
        _ => None,
    };

    if !sweep {
        let trace = train_gan(&data, &tc, extractor.as_ref())?;
        write_run(out, "", &trace, tc.n_eval, tc.seed)?;
        if cfg.output.plot {
            plot_traces(out, &[(tc.lambda, &trace)])?;
        }
        let last = trace.final_row();
        println!("step {}: mmd2 = {}, frechet = {}", last.step, last.mmd2, last.frechet);
        return Ok(());
    }

    let runs = train_sweep(&data, &tc, &lambdas, &[tc.seed], extractor.as_ref(), Exec::Parallel);
    let mut summary = Vec::new();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for run in &runs {
        match &run.trace {
            Ok(trace) => {
                write_run(out, &format!("_lambda_{}", lambda_tag(run.lambda)), trace, tc.n_eval, run.seed)?;
                let last = trace.final_row();
                summary.push(vec![
                    cell(Some(run.lambda)),
                    run.seed.to_string(),
                    last.step.to_string(),
                    cell(Some(last.mmd2)),
                    cell(Some(last.frechet)),
                ]);
                println!("lambda={}: mmd2 = {}, frechet = {}", run.lambda, last.mmd2, last.frechet);
                done.push((run.lambda, trace));
            }
            Err(e) => {
                eprintln!("lambda={}: {e}", run.lambda);
                failures.push(e.clone());
            }
        }
    }
    write_csv(&out.join("train_summary.csv"), TRAIN_SUMMARY_HEADER, &summary)?;
    if cfg.output.plot {
        plot_traces(out, &done)?;
    }
    partial(failures, runs.len())
}

fn write_run(out: &Path, suffix: &str, trace: &TrainTrace, n_eval: usize, seed: u64) -> CliResult<()> {
    write_csv(&out.join(format!("trace{suffix}.csv")), TRACE_HEADER, &trace_rows(trace))?;
    weights::save(&out.join(format!("generator{suffix}.txt")), &trace.generator, None)?;
    weights::save(&out.join(format!("discriminator{suffix}.txt")), &trace.discriminator, None)?;
    let samples = sample_generator(&trace.generator, n_eval, seed)?;
    write_csv(&out.join(format!("samples{suffix}.csv")), "x,y", &points_csv(&samples))
}

fn plot_traces(out: &Path, traces: &[(f64, &TrainTrace)]) -> CliResult<()> {
    let plot = Plot {
        title: "MMD² against the full dataset".into(),
        x_label: "step".into(),
        y_label: "MMD²".into(),
        log_x: false,
        series: traces
            .iter()
            .map(|(l, t)| Series { label: format!("λ={l}"), points: t.rows.iter().map(|r| (r.step as f64, r.mmd2)).collect() })
            .collect(),
        markers: Vec::new(),
    };
    write_file(&out.join("trace.svg"), &plot.render())
}

pub fn metrics(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let m = &cfg.metrics;
    let need = |p: &Option<String>, what: &str| p.clone().ok_or_else(|| CliError::Config(format!("metrics.{what} (or --{what}) is required")));
    let real = read_points(Path::new(&need(&m.real, "real")?))?;
    let fake = read_points(Path::new(&need(&m.fake, "fake")?))?;
    let r = metric_report(&real, &fake, m.bandwidth)?;
    let row = vec![
        cell(Some(r.mmd2_unbiased)),
        cell(Some(r.mmd2_biased)),
        cell(Some(r.frechet)),
        cell(Some(r.bandwidth)),
        r.n_real.to_string(),
        r.n_fake.to_string(),
    ];
    write_csv(&out.join("metrics.csv"), METRICS_HEADER, &[row])?;
    println!(
        "mmd2 unbiased = {}, biased = {}, frechet = {}, bandwidth = {}",
        r.mmd2_unbiased, r.mmd2_biased, r.frechet, r.bandwidth
    );
    Ok(())
}

pub fn pretrain(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let p = &cfg.pretrain;
    let family = p.family()?;
    let f = pretrain_extractor(family, &p.pretrain_config(), p.seed)?;
    let path = out.join("extractor.txt");
    f.save(&path)?;
    // Accuracy is only meaningful for the logit layer; report it when that is the feature layer.
    if f.dim_out() == family.num_classes() && p.feature_layer == p.hidden.len() + 1 {
        let (xs, ys) = auxiliary_sample(family, Perturbation::NONE, 2000, p.seed ^ 0xacc);
        println!("target-domain accuracy: {}", extractor_accuracy(&f, &xs, &ys)?);
    }
    println!("wrote {} ({} -> {} features)", path.display(), f.dim_in(), f.dim_out());
    Ok(())
}
