//! Drives the `experiment_cli` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_experiment_cli")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gaussian_defaults_show_the_optimum_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("g");
    let o = cli(&["gaussian-sweep", "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv(&out.join("gaussian_sweep.csv"));
    assert_eq!(header, "axis_value,beta,lambda,mse_reg_cf,mse_mle_cf,mse_pre_cf,mse_reg_mc,stderr");
    let row = rows.iter().find(|r| r[0] == "0.4").expect("beta = 0.4 row");
    assert!((num(&row[3]) - 0.004).abs() < 1e-15);
    assert!((num(&row[2]) - 2.0 / 3.0).abs() < 1e-15);
    assert!((num(&row[6]) - 0.004).abs() < 3.0 * num(&row[7]) + 1e-4);
    assert_eq!(rows.last().unwrap()[2], "inf");
    assert!(out.join("resolved_config.toml").exists());
    assert!(fs::read_to_string(out.join("gaussian_sweep.svg")).unwrap().contains("<circle"));
}

#[test]
fn zero_bias_is_a_degenerate_interval() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[gaussian]\nmu_pre = 0.0\n");
    let o = cli(&["gaussian-sweep", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("degenerate interval"), "{}", stderr(&o));
}

#[test]
fn disabled_monte_carlo_leaves_columns_empty() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[gaussian]\nmc_trials = 0\naxis = \"sample_size\"\ngrid = [10, 150, 1000]\n");
    let out = tmp.path().join("o");
    assert!(cli(&["gaussian-sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let (_, rows) = csv(&out.join("gaussian_sweep.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.len(), 8);
        assert!(r[6].is_empty() && r[7].is_empty());
        assert!(num(&r[3]) < num(&r[4]));
    }
    let ratio = |r: &Vec<String>| num(&r[3]) / num(&r[4]);
    assert!((ratio(&rows[1]) - 0.6).abs() < 1e-12);
}

#[test]
fn config_errors_report_lines_and_exit_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[gaussian]\nsigma2 = 1.0\n\n[train]\nstep = 10\n");
    let o = cli(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 5") && err.contains("unknown field `step`"), "{err}");

    let cfg = write_config(tmp.path(), "d.toml", "[gaussian]\nsigma2 = \"one\"\n");
    let o = cli(&["gaussian-sweep", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn nonparam_toy_matches_analytic_roots_and_widens_with_lambda() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[nonparam]\nlambdas = [0.1, 1, 10]\n");
    let out = tmp.path().join("o");
    let o = cli(&["nonparam", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv(&out.join("nonparam_summary.csv"));
    assert_eq!(header, "divergence,lambda,alpha_star,residual");
    let alpha = |d: &str, l: &str| num(&rows.iter().find(|r| r[0] == d && r[1] == l).unwrap()[2]);
    assert!((alpha("kl", "1") + 0.209496).abs() < 1e-6);
    assert!((alpha("js", "1") + 0.496814).abs() < 1e-6);
    for div in ["kl", "js"] {
        let mut ratios = Vec::new();
        for l in ["0.1", "1", "10"] {
            let (h, grid) = csv(&out.join(format!("density_{div}_lambda_{l}.csv")));
            assert_eq!(h, "x,p_d,energy,weight,p_g_star");
            let w: Vec<f64> = grid.iter().map(|r| num(&r[3])).collect();
            let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            ratios.push(hi / lo);
        }
        assert!(ratios.windows(2).all(|p| p[0] < p[1]), "{div}: {ratios:?}");
    }
    assert!(out.join("nonparam.svg").exists());
}

#[test]
fn infeasible_lambda_is_reported_without_aborting_the_batch() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "[nonparam]\nslope = 1000.0\nintercept = 0.0\nlambdas = [0.001, 1]\ndivergences = [\"kl\"]\n",
    );
    let out = tmp.path().join("o");
    let o = cli(&["nonparam", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("no feasible root"));
    let (_, rows) = csv(&out.join("nonparam_summary.csv"));
    assert_eq!(rows.len(), 1);
    assert!(out.join("density_kl_lambda_0.001.csv").exists());
}

fn all_csvs(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn training_is_deterministic_and_resolved_config_reproduces_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[train]\nsteps = 120\neval_every = 40\nn_eval = 100\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(cli(&["train", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(cli(&["train", "--config", &cfg, "--out", b.to_str().unwrap()]).status.success());
    let (header, rows) = csv(&a.join("trace.csv"));
    assert_eq!(header, "step,d_loss,g_loss,energy_mean,mmd2,frechet");
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["40", "80", "120"]);
    assert_eq!(all_csvs(&a), all_csvs(&b));

    let c = tmp.path().join("c");
    let resolved = a.join("resolved_config.toml").display().to_string();
    assert!(cli(&["train", "--config", &resolved, "--out", c.to_str().unwrap()]).status.success());
    assert_eq!(all_csvs(&a), all_csvs(&c));
    for f in ["generator.txt", "discriminator.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap());
    }

    let d = tmp.path().join("d");
    assert!(cli(&["train", "--config", &cfg, "--out", d.to_str().unwrap(), "--seed", "7"]).status.success());
    assert!(fs::read_to_string(d.join("resolved_config.toml")).unwrap().contains("seed = 7"));
    assert_ne!(all_csvs(&a), all_csvs(&d));
}

#[test]
fn regularized_training_needs_an_extractor() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[train]\nsteps = 10\nlambda = 0.5\n");
    let o = cli(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid input"), "{}", stderr(&o));
}

#[test]
fn lambda_sweep_writes_one_trace_per_lambda_and_a_summary() {
    let tmp = TempDir::new().unwrap();
    let ext = tmp.path().join("ext");
    let pre = write_config(tmp.path(), "p.toml", "[pretrain]\nsteps = 100\naux_size = 500\n");
    assert!(cli(&["pretrain-extractor", "--config", &pre, "--out", ext.to_str().unwrap()]).status.success());
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &format!(
            "[train]\nsteps = 60\neval_every = 30\nn_eval = 100\nlambdas = [0.0, 0.01, 1.0]\nextractor_path = \"{}\"\n",
            ext.join("extractor.txt").display()
        ),
    );
    let out = tmp.path().join("o");
    let o = cli(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2", "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for l in ["0", "0.01", "1"] {
        let (h, rows) = csv(&out.join(format!("trace_lambda_{l}.csv")));
        assert_eq!(h, "step,d_loss,g_loss,energy_mean,mmd2,frechet");
        assert_eq!(rows.len(), 2);
        assert!(out.join(format!("generator_lambda_{l}.txt")).exists());
    }
    let (h, rows) = csv(&out.join("train_summary.csv"));
    assert_eq!(h, "lambda,seed,step,mmd2,frechet");
    assert_eq!(rows.len(), 3);
    assert!(out.join("trace.svg").exists());

    // λ = 0 in a sweep equals a plain unregularized run.
    let plain = write_config(tmp.path(), "plain.toml", "[train]\nsteps = 60\neval_every = 30\nn_eval = 100\n");
    let p = tmp.path().join("plain");
    assert!(cli(&["train", "--config", &plain, "--out", p.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(p.join("trace.csv")).unwrap(), fs::read(out.join("trace_lambda_0.csv")).unwrap());
}

#[test]
fn metrics_subcommand_reads_point_files() {
    let tmp = TempDir::new().unwrap();
    let pts = "x,y\n0,0\n1,0\n0,1\n1,1\n";
    let real = write_config(tmp.path(), "real.csv", pts);
    let shifted = write_config(tmp.path(), "fake.csv", "2,0\n3,0\n2,1\n3,1\n");
    let out = tmp.path().join("o");
    assert!(cli(&["metrics", "--real", &real, "--fake", &real, "--out", out.to_str().unwrap()]).status.success());
    let (h, rows) = csv(&out.join("metrics.csv"));
    assert_eq!(h, "mmd2_unbiased,mmd2_biased,frechet,bandwidth,n_real,n_fake");
    assert_eq!(num(&rows[0][1]), 0.0);
    assert_eq!(num(&rows[0][2]), 0.0);

    assert!(cli(&["metrics", "--real", &real, "--fake", &shifted, "--bandwidth", "1", "--out", out.to_str().unwrap()]).status.success());
    let (_, rows) = csv(&out.join("metrics.csv"));
    assert!((num(&rows[0][2]) - 4.0).abs() < 1e-12);
    assert_eq!(rows[0][3], "1");
    assert!(fs::read_to_string(out.join("resolved_config.toml")).unwrap().contains("bandwidth = 1.0"));

    let bad = write_config(tmp.path(), "bad.csv", "x,y\n1,2\n3\n");
    let o = cli(&["metrics", "--real", &bad, "--fake", &real, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"));
}
