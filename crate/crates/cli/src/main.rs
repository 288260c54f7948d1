use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use eigensep_core::apps::{diffusion_map, fiedler, model_spectral_result, DiffusionConfig, FiedlerSource};
use eigensep_core::data::{gen_synthetic, gen_timeseries, load_csv, save_csv, save_matrix_csv, split};
use eigensep_core::eigen::{laplacian_eigenpairs, SpectralResult};
use eigensep_core::graph::build_graph;
use eigensep_core::metrics::{grassmann_distance, grassmann_score, knn_accuracy, pearson, sin2_matched};
use eigensep_core::numap::{embed_numap, load_numap, save_numap, train_baseline, train_numap};
use eigensep_core::specnet::timing::scaling_study;
use eigensep_core::specnet::{load_model, load_trained, save_model, save_trained, separate, train};
use eigensep_core::{Dataset, Error, ErrorKind, LaplacianKind, LaplacianMatrix, Result, SyntheticKind};

mod config;
mod manifest;

use config::RunConfig;
use manifest::{write_json, Manifest};

#[derive(Parser)]
#[command(name = "eigensep", version, about = "Spectral embeddings learned by a neural network")]
struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file with one `key = value` per line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen {
        /// moon, two_circles, tangent_spheres, cylinders, line or
        /// two_clusters_timeseries[:step].
        #[arg(long)]
        kind: SyntheticKind,
        #[arg(long)]
        n: usize,
        /// Ambient dimension; defaults to the intrinsic one.
        #[arg(long)]
        ambient: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Hold out this fraction of rows and write them to `--test-out`.
        #[arg(long, requires = "test_out")]
        test_frac: Option<f64>,
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// For the time-series kind: write every frame as `<stem>_stepNN.csv`.
        #[arg(long)]
        all_steps: bool,
    },
    /// Train a spectral network on a CSV dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Separate a trained network into individual eigenvectors.
    Separate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Overrides of the configuration stored with the trained network.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Embed points with a separated model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a separated model against exact eigenvectors.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fiedler vectors and diffusion maps.
    Apps {
        #[command(subcommand)]
        app: AppCommand,
    },
    /// Generalizable UMAP on top of a spectral embedding.
    Numap {
        #[command(subcommand)]
        cmd: NumapCommand,
    },
    /// Training time per sample across dataset sizes.
    Bench {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [2000usize, 8000, 32000])]
        sizes: Vec<usize>,
        /// Seeds per size: `seed, seed+1, ...`.
        #[arg(long, default_value_t = 5)]
        repeats: u64,
        /// Fixed epoch budget of every timed run.
        #[arg(long, default_value_t = 3)]
        epochs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Source {
    /// Separated model; without it the exact eigenvectors of the data graph
    /// are used.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Subcommand)]
enum AppCommand {
    /// Write the Fiedler vector and print the Fiedler value.
    Fiedler {
        #[command(flatten)]
        src: Source,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the diffusion map at time `t`; needs random-walk eigenpairs.
    Diffuse {
        #[command(flatten)]
        src: Source,
        /// Diffusion time.
        #[arg(long)]
        t: u32,
        /// Number of columns; defaults to every available one.
        #[arg(long)]
        k: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum NumapCommand {
    /// Train the spectral stage and the embedding network.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Train the embedding network on the raw coordinates instead.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Embed points with a trained model.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.set, seed)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: &Path, m: &mut Manifest) -> Result<Dataset> {
    m.input(path);
    load_csv(path)
}

fn names(prefix: &str, start: usize, count: usize) -> Vec<String> {
    (start..start + count).map(|i| format!("{prefix}{i}")).collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

/// Eigenpairs of the data graph, trivial pair included.
fn oracle(x: ArrayView2<f64>, k_nn: usize, kind: LaplacianKind, count: usize) -> Result<SpectralResult> {
    let lap = LaplacianMatrix::new(build_graph(x, k_nn)?, kind)?;
    lap.affinity().check_connected("data graph");
    laplacian_eigenpairs(&lap, count)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    kind: SyntheticKind,
    n: usize,
    ambient: Option<usize>,
    noise: f64,
    seed: u64,
    output: &Path,
    test: Option<(f64, PathBuf)>,
    all_steps: bool,
) -> Result<()> {
    let ambient = ambient.unwrap_or(kind.intrinsic_dim());
    let mut m = Manifest::new("gen", Default::default(), Some(seed));
    m.result("kind", kind.name());
    m.result("n", n);
    m.result("ambient", ambient);
    m.result("noise", noise);
    if all_steps {
        if !matches!(kind, SyntheticKind::TwoClustersTimeseries { .. }) {
            return Err(Error::InvalidArgument("--all-steps needs the time-series kind".into()));
        }
        for (t, frame) in gen_timeseries(n, noise, ambient, seed)?.iter().enumerate() {
            let p = with_suffix(output, &format!("_step{t:02}"));
            save_csv(frame, &p)?;
            m.output(&p);
        }
        m.write(output)?;
        return Ok(());
    }
    let ds = gen_synthetic(kind, n, noise, ambient, seed)?;
    match test {
        Some((frac, test_out)) => {
            let sp = split(&ds, 1.0 - frac, seed)?;
            save_csv(&sp.train, output)?;
            save_csv(&sp.test, &test_out)?;
            m.output(output);
            m.output(&test_out);
        }
        None => {
            save_csv(&ds, output)?;
            m.output(output);
        }
    }
    m.write(output)?;
    Ok(())
}

fn cmd_train(data: &Path, seed: u64, cfg: &ConfigArgs, output: &Path) -> Result<()> {
    let cfg = load_config(cfg, Some(seed))?;
    let mut m = Manifest::new("train", cfg.pairs(), Some(seed));
    let ds = load_data(data, &mut m)?;
    let trained = m.time("train", || train(ds.samples.view(), &cfg.train))?;
    save_trained(&trained, &cfg.train, output)?;
    m.output(output);
    m.result("epochs", trained.history.epochs);
    m.result("stop", trained.history.stop);
    m.result("ortho_violations", trained.history.ortho_violations);
    m.result("final_val_loss", trained.history.val_loss.last());
    m.write(output)?;
    Ok(())
}

fn cmd_separate(model: &Path, data: &Path, set: &[String], output: &Path) -> Result<()> {
    let (trained, stored) = load_trained(model)?;
    let mut cfg = RunConfig {
        train: stored,
        ..RunConfig::default()
    };
    for pair in set {
        cfg.assign(pair)?;
    }
    cfg.validate()?;
    let mut m = Manifest::new("separate", cfg.pairs(), Some(cfg.train.seed));
    m.input(model);
    let ds = load_data(data, &mut m)?;
    let sep = m.time("separate", || separate(trained, ds.samples.view(), &cfg.train))?;
    save_model(&sep, output)?;
    m.output(output);
    m.result("eigenvalues", sep.eigenvalues.to_vec());
    m.result("trivial_eigenvalue", sep.trivial_eigenvalue);
    m.write(output)?;
    Ok(())
}

fn cmd_embed(model: &Path, data: &Path, output: &Path) -> Result<()> {
    let sep = load_model(model)?;
    let mut m = Manifest::new("embed", Default::default(), Some(sep.config.seed));
    m.input(model);
    let ds = load_data(data, &mut m)?;
    let y = m.time("embed", || sep.embed(ds.samples.view()))?;
    save_matrix_csv(output, &names("v", 1, y.ncols()), y.view(), ds.labels.as_deref())?;
    m.output(output);
    m.write(output)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalReport {
    sin2_per_vector: Vec<f64>,
    sin2_per_vector_test: Option<Vec<f64>>,
    grassmann: f64,
    gs: f64,
    knn_acc: Option<f64>,
    pearson_eigs: Option<f64>,
}

fn cmd_eval(model: &Path, train_path: &Path, test_path: Option<&Path>, cfg: &ConfigArgs, output: &Path) -> Result<()> {
    let sep = load_model(model)?;
    let cfg = load_config(cfg, Some(sep.config.seed))?;
    let mut m = Manifest::new("eval", cfg.pairs(), Some(sep.config.seed));
    m.input(model);
    let tr = load_data(train_path, &mut m)?;
    let te = test_path.map(|p| load_data(p, &mut m)).transpose()?;
    let k = sep.k();
    let k_nn = sep.config.k_nn;
    let xtr = tr.samples.view();

    let exact = m.time("oracle_train", || oracle(xtr, k_nn, LaplacianKind::Unnormalized, k + 1))?;
    let values: Vec<f64> = exact.values.iter().skip(1).copied().collect();
    let emb_tr = sep.embed(xtr)?;
    let sin2_per_vector = sin2_matched(emb_tr.view(), exact.vectors.slice(s![.., 1..]), &values)?;
    let grassmann = grassmann_distance(sep.raw(xtr)?.view(), exact.vectors.view())?;

    let pearson_eigs = if k >= 2 {
        let variant = sep.config.separation_laplacian;
        let reference = if variant == LaplacianKind::Unnormalized {
            exact.clone()
        } else {
            m.time("oracle_variant", || oracle(xtr, k_nn, variant, k + 1))?
        };
        let truth: Vec<f64> = reference.values.iter().skip(1).copied().collect();
        Some(pearson(&sep.eigenvalues.to_vec(), &truth)?)
    } else {
        None
    };

    let (sin2_per_vector_test, gs, knn_acc) = match &te {
        Some(te) => {
            let xte = te.samples.view();
            let all = concatenate(Axis(0), &[xtr, xte])
                .map_err(|e| Error::DimensionMismatch(format!("train and test columns differ: {e}")))?;
            let joint = m.time("oracle_joint", || oracle(all.view(), k_nn, LaplacianKind::Unnormalized, k + 1))?;
            let test_rows = joint.vectors.slice(s![tr.n().., 1..]);
            let joint_values: Vec<f64> = joint.values.iter().skip(1).copied().collect();
            let emb_te = sep.embed(xte)?;
            let sin2 = sin2_matched(emb_te.view(), test_rows, &joint_values)?;
            let gs = grassmann_score(xte, emb_te.view(), &cfg.gs)?;
            let acc = match (&tr.labels, &te.labels) {
                (Some(a), Some(b)) => Some(knn_accuracy(emb_tr.view(), Some(a), emb_te.view(), Some(b), cfg.knn_eval)?),
                _ => None,
            };
            (Some(sin2), gs, acc)
        }
        None => {
            let gs = grassmann_score(xtr, emb_tr.view(), &cfg.gs)?;
            let acc = match &tr.labels {
                Some(l) => Some(knn_accuracy(emb_tr.view(), Some(l), emb_tr.view(), Some(l), cfg.knn_eval)?),
                None => None,
            };
            (None, gs, acc)
        }
    };
    let report = EvalReport {
        sin2_per_vector,
        sin2_per_vector_test,
        grassmann,
        gs,
        knn_acc,
        pearson_eigs,
    };
    write_json(output, &report)?;
    m.output(output);
    m.write(output)?;
    Ok(())
}

fn app_result(src: &Source, kind: LaplacianKind, count: usize, m: &mut Manifest) -> Result<(Dataset, SpectralResult)> {
    let cfg = load_config(&src.cfg, None)?;
    let ds = load_data(&src.data, m)?;
    let result = match &src.model {
        Some(path) => {
            m.input(path);
            let sep = load_model(path)?;
            model_spectral_result(&sep, ds.samples.view())?
        }
        None => {
            let k_nn = cfg.train.k_nn.min(ds.n() - 1);
            m.time("oracle", || oracle(ds.samples.view(), k_nn, kind, count.min(ds.n())))?
        }
    };
    Ok((ds, result))
}

fn cmd_fiedler(src: &Source, output: &Path) -> Result<()> {
    let mut m = Manifest::new("apps fiedler", Default::default(), None);
    let (ds, result) = app_result(src, LaplacianKind::Unnormalized, 2, &mut m)?;
    let f = fiedler(FiedlerSource::Oracle(&result))?;
    let col = f.vector.insert_axis(Axis(1));
    save_matrix_csv(output, &["fiedler".to_string()], col.view(), ds.labels.as_deref())?;
    m.output(output);
    m.result("fiedler_value", f.value);
    println!("fiedler value {:e}", f.value);
    m.write(output)?;
    Ok(())
}

fn cmd_diffuse(src: &Source, t: u32, k: Option<usize>, output: &Path) -> Result<()> {
    let mut m = Manifest::new("apps diffuse", Default::default(), None);
    let want = k.unwrap_or(load_config(&src.cfg, None)?.train.k);
    let (ds, result) = app_result(src, LaplacianKind::RandomWalk, want + 1, &mut m)?;
    let available = result.vectors.ncols() - usize::from(result.includes_trivial);
    let k = k.unwrap_or(available);
    let d: Array2<f64> = diffusion_map(&result, &DiffusionConfig { t, k })?;
    save_matrix_csv(output, &names("d", 1, k), d.view(), ds.labels.as_deref())?;
    m.output(output);
    m.result("t", t);
    m.write(output)?;
    Ok(())
}

fn cmd_numap_train(data: &Path, seed: u64, baseline: bool, cfg: &ConfigArgs, output: &Path) -> Result<()> {
    let cfg = load_config(cfg, Some(seed))?;
    let mut m = Manifest::new("numap train", cfg.pairs(), Some(seed));
    let ds = load_data(data, &mut m)?;
    let x = ds.samples.view();
    let model = if baseline {
        m.time("train", || train_baseline(x, &cfg.numap))?
    } else {
        m.time("train", || train_numap(x, &cfg.numap))?
    };
    save_numap(&model, output)?;
    m.output(output);
    m.result("final_loss", model.loss_history.last());
    m.write(output)?;
    Ok(())
}

fn cmd_numap_embed(model: &Path, data: &Path, output: &Path) -> Result<()> {
    let nm = load_numap(model)?;
    let mut m = Manifest::new("numap embed", Default::default(), Some(nm.config.seed));
    m.input(model);
    let ds = load_data(data, &mut m)?;
    let y = m.time("embed", || embed_numap(&nm, ds.samples.view()))?;
    let cols = if y.ncols() == 2 {
        vec!["x".to_string(), "y".to_string()]
    } else {
        names("e", 0, y.ncols())
    };
    save_matrix_csv(output, &cols, y.view(), ds.labels.as_deref())?;
    m.output(output);
    m.write(output)?;
    Ok(())
}

fn cmd_bench(seed: u64, sizes: &[usize], repeats: u64, epochs: usize, cfg: &ConfigArgs, output: &Path) -> Result<()> {
    let cfg = load_config(cfg, Some(seed))?;
    let mut m = Manifest::new("bench", cfg.pairs(), Some(seed));
    let seeds: Vec<u64> = (seed..seed + repeats).collect();
    let study = m.time("bench", || scaling_study(sizes, &seeds, epochs, &cfg.train))?;
    let ratio = study.ratio();
    for p in &study.points {
        println!(
            "n = {:>6}: {:.3e} ± {:.1e} s per sample per epoch",
            p.n, p.mean_per_sample, p.std_per_sample
        );
    }
    if let Some(r) = ratio {
        println!("largest / smallest: {r:.3}");
    }
    #[derive(serde::Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        study: &'a eigensep_core::specnet::timing::ScalingStudy,
        ratio_largest_to_smallest: Option<f64>,
    }
    write_json(output, &Out { study: &study, ratio_largest_to_smallest: ratio })?;
    m.output(output);
    m.write(output)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            n,
            ambient,
            noise,
            seed,
            output,
            test_frac,
            test_out,
            all_steps,
        } => {
            let test = match (test_frac, test_out) {
                (Some(f), Some(p)) => Some((f, p)),
                _ => None,
            };
            cmd_gen(kind, n, ambient, noise, seed, &output, test, all_steps)
        }
        Command::Train { data, seed, cfg, output } => cmd_train(&data, seed, &cfg, &output),
        Command::Separate { model, data, set, output } => cmd_separate(&model, &data, &set, &output),
        Command::Embed { model, data, output } => cmd_embed(&model, &data, &output),
        Command::Eval {
            model,
            train,
            test,
            cfg,
            output,
        } => cmd_eval(&model, &train, test.as_deref(), &cfg, &output),
        Command::Apps { app } => match app {
            AppCommand::Fiedler { src, output } => cmd_fiedler(&src, &output),
            AppCommand::Diffuse { src, t, k, output } => cmd_diffuse(&src, t, k, &output),
        },
        Command::Numap { cmd } => match cmd {
            NumapCommand::Train {
                data,
                seed,
                baseline,
                cfg,
                output,
            } => cmd_numap_train(&data, seed, baseline, &cfg, &output),
            NumapCommand::Embed { model, data, output } => cmd_numap_embed(&model, &data, &output),
        },
        Command::Bench {
            seed,
            sizes,
            repeats,
            epochs,
            cfg,
            output,
        } => cmd_bench(seed, &sizes, repeats, epochs, &cfg, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
