use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Axis;
use sha2::{Digest, Sha256};

use plab::attacks::{default_c_grid, AttackConfig, AttackMethod, Norm, PIXEL_BOX};
use plab::boundary::{angle_survey_modes, AngleMode, AngleSurvey, NormalConfig};
use plab::data::{
    default_mnist_dir, load_container, load_mnist, save_container, BundleWriter,
    DatasetContainer, LabeledDataset, MnistSplit,
};
use plab::experiments::{
    adversarial_angle_surveys, all_target_attacks, build_pmnist, evaluate_model, igsm_config,
    mnist_recipe, natural_pairs, path_profiles, persistence_study, pmnist_recipe,
    random_target_attacks, sample_correct, table1_row, train_recipe, AdversarialRecord,
    ModelCache, PersistenceStudy, PmnistSettings,
};
use plab::manifold::{explained_variance, CurveAttack, GradMode, PcaProjector};
use plab::nn::{
    accuracy, fit, load_checkpoint, save_checkpoint, CrossEntropy, MlpNetwork, Optimizer,

};
use plab::stability::{class_frequency_sweep, concentration_check, PersistenceConfig};


use crate::args::*;
use crate::report::{self, num, Table};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    dispatch(cli.command)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Rerun(a) => {
            let text = std::fs::read(&a.config)
                .with_context(|| format!("reading {}", a.config.display()))?;
            let mut cmd: Command = serde_json::from_slice(&text)
                .map_err(plab::Error::from)
                .context("parsing the recorded configuration")?;
            if let Some(out) = a.out {
                *common_mut(&mut cmd).context("nothing to rerun")? .out_mut() = out;
            }
            dispatch(cmd)
        }
        cmd => {
            let mut b = Bundle::new(&cmd)?;
            match &cmd {
                Command::Train(a) => train(a, &mut b),
                Command::Attack(a) => attack(a, &mut b),
                Command::Sweep(a) => sweep(a, &mut b),
                Command::Persist(a) => persist(a, &mut b),
                Command::PersistPath(a) => persist_path(a, &mut b),
                Command::Angles(a) => angles(a, &mut b),
                Command::Pca(a) => pca(a, &mut b),
                Command::MagTrain(a) => mag_train(a, &mut b),
                Command::RobustEval(a) => robust_eval(a, &mut b),
                Command::Concentration(a) => concentration(a, &mut b),
                Command::Table1(a) => table1(a, &mut b),
                Command::Rerun(_) => unreachable!(),
            }?;
            b.finish()
        }
    }
}

trait OutMut {
    fn out_mut(&mut self) -> &mut PathBuf;
}

impl OutMut for Common {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
}

fn common(cmd: &Command) -> Option<&Common> {
    Some(match cmd {
        Command::Train(a) => &a.common,
        Command::Attack(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Persist(a) => &a.common,
        Command::PersistPath(a) => &a.common,
        Command::Angles(a) => &a.common,
        Command::Pca(a) => &a.common,
        Command::MagTrain(a) => &a.common,
        Command::RobustEval(a) => &a.common,
        Command::Concentration(a) => &a.common,
        Command::Table1(a) => &a.common,
        Command::Rerun(_) => return None,
    })
}

fn common_mut(cmd: &mut Command) -> Option<&mut Common> {
    Some(match cmd {
        Command::Train(a) => &mut a.common,
        Command::Attack(a) => &mut a.common,
        Command::Sweep(a) => &mut a.common,
        Command::Persist(a) => &mut a.common,
        Command::PersistPath(a) => &mut a.common,
        Command::Angles(a) => &mut a.common,
        Command::Pca(a) => &mut a.common,
        Command::MagTrain(a) => &mut a.common,
        Command::RobustEval(a) => &mut a.common,
        Command::Concentration(a) => &mut a.common,
        Command::Table1(a) => &mut a.common,
        Command::Rerun(_) => return None,
    })
}

/// Output directory plus the inputs a run read, for the manifest.
struct Bundle {
    writer: BundleWriter,
    resolved: serde_json::Value,
    inputs: BTreeMap<String, String>,
    notes: Vec<String>,
}

impl Bundle {
    fn new(cmd: &Command) -> Result<Self> {
        let c = common(cmd).expect("runnable command");
        let resolved = serde_json::to_value(cmd).map_err(plab::Error::from)?;
        let mut writer = BundleWriter::create(&c.out, cmd.name(), serde_json::Value::Null)?;
        writer.add_file(
            "config.json",
            &serde_json::to_vec_pretty(&resolved).map_err(plab::Error::from)?,
        )?;
        Ok(Self {
            writer,
            resolved,
            inputs: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs
            .insert(name.into(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        Ok(self.writer.add_file(name, bytes)?)
    }

    /// Writes a table and the plot drawn from its CSV text.
    fn table(&mut self, name: &str, table: &Table) -> Result<Vec<u8>> {
        let csv = table.to_csv()?;
        self.file(name, &csv)?;
        Ok(csv)
    }

    fn finish(self) -> Result<()> {
        let Bundle {
            mut writer,
            resolved,
            inputs,
            notes,
        } = self;
        writer.set_config(serde_json::json!({
            "resolved": resolved,
            "inputs": inputs,
            "notes": notes,
        }));
        let dir = writer.dir().to_path_buf();
        let m = writer.finish()?;
        eprintln!("wrote {} files to {}", m.files.len() + 1, dir.display());
        Ok(())
    }
}

fn mnist_dir(c: &Common) -> PathBuf {
    c.mnist_dir.clone().unwrap_or_else(default_mnist_dir)
}

fn mnist(c: &Common, split: MnistSplit, b: &mut Bundle) -> Result<DatasetContainer> {
    let dir = mnist_dir(c);
    let data = load_mnist(&dir, split).with_context(|| {
        format!(
            "loading MNIST from {} (set --mnist-dir or PLAB_DATA_DIR)",
            dir.display()
        )
    })?;
    if let plab::data::Provenance::Files { sha256 } = &data.provenance {
        for (k, v) in sha256 {
            b.inputs.insert(k.clone(), v.clone());
        }
    }
    Ok(data)
}

fn container(path: &Path, b: &mut Bundle) -> Result<DatasetContainer> {
    b.input(&path.display().to_string(), path)?;
    Ok(load_container(path).with_context(|| format!("loading {}", path.display()))?)
}

fn load_model(m: &ModelArg, c: &Common, b: &mut Bundle) -> Result<MlpNetwork> {
    if let Some(tag) = m.model.strip_prefix("zoo:") {
        let recipe = mnist_recipe(tag, m.model_seed)?;
        let train = mnist(c, MnistSplit::Train, b)?;
        let net = ModelCache::new(&c.cache).get_or_train(&recipe, &train.data, None)?;
        b.notes.push(format!("model {tag} from the zoo (seed {})", m.model_seed));
        return Ok(net);
    }
    let path = PathBuf::from(&m.model);
    b.input(&m.model, &path)?;
    Ok(load_checkpoint(&path).with_context(|| format!("loading model {}", path.display()))?)
}

fn attack_config(o: &AttackOpts, seed: u64) -> AttackConfig {
    let (method, eps) = match o.method {
        Method::Fgsm => (AttackMethod::Fgsm, o.epsilon),
        Method::Rfgsm => (AttackMethod::Rfgsm, o.epsilon),
        Method::Bim | Method::Igsm => (AttackMethod::Bim, o.epsilon),
        Method::Mifgsm => (AttackMethod::Mifgsm, o.epsilon),
        Method::Pgd => (AttackMethod::Pgd, o.epsilon),
        Method::Penalty => (AttackMethod::Penalty, o.epsilon),
    };
    AttackConfig {
        method,
        epsilon: eps,
        step_size: o.step,
        iterations: o.iterations,
        target: None,
        norm: match o.norm {
            NormArg::L2 => Norm::L2,
            NormArg::Linf => Norm::Linf,
        },
        momentum_decay: o.momentum_decay,
        clip: if o.no_clip { None } else { PIXEL_BOX },
        seed,
        early_stop: true,
        c_grid: o.c_grid.clone().unwrap_or_else(default_c_grid),
    }
}

fn persistence_config(p: &PersistOpts, seed: u64) -> PersistenceConfig {
    PersistenceConfig {
        gamma: p.gamma,
        n_samples: p.n,
        max_steps: p.max_steps,
        precision: p.precision,
        seed,
        ..PersistenceConfig::default()
    }
}

fn run_attacks(
    net: &MlpNetwork,
    test: &LabeledDataset,
    ids: &[usize],
    targets: Targets,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<AdversarialRecord>> {
    Ok(match targets {
        Targets::All => all_target_attacks(net, test, ids, cfg)?,
        Targets::Random => random_target_attacks(net, test, ids, cfg, seed)?,
        Targets::None => {
            let xs = test.inputs().select(Axis(0), ids);
            let labels: Vec<usize> = ids.iter().map(|&i| test.labels()[i]).collect();
            plab::attacks::attack_batch(net, xs.view(), &labels, None, cfg)?
                .into_iter()
                .zip(ids)
                .map(|(result, &image_id)| AdversarialRecord {
                    image_id,
                    true_label: test.labels()[image_id],
                    target: None,
                    result,
                })
                .collect()
        }
    })
}

fn attack_table(records: &[AdversarialRecord], cfg: &AttackConfig) -> Table {
    let mut t = Table::new(&[
        "image_id",
        "true_label",
        "target",
        "method",
        "epsilon",
        "success",
        "distortion",
        "iterations_used",
    ]);
    for r in records {
        t.push(vec![
            r.image_id.to_string(),
            r.true_label.to_string(),
            r.target.map(|t| t.to_string()).unwrap_or_default(),
            cfg.method.name().into(),
            num(cfg.epsilon),
            r.result.success.to_string(),
            num(r.result.distortion),
            r.result.iterations_used.to_string(),
        ]);
    }
    t
}

fn train(a: &TrainArgs, b: &mut Bundle) -> Result<()> {
    let mut recipe = match (&a.tag, &a.sizes) {
        (Some(tag), _) => mnist_recipe(tag, a.seed)?,
        (None, Some(sizes)) => {
            let mut r = mnist_recipe("fc100-20", a.seed)?;
            r.tag = "custom".into();
            r.sizes = sizes.clone();
            r.reg_lambda = vec![0.0; sizes.len().saturating_sub(1)];
            r
        }
        (None, None) => bail!(plab::Error::InvalidConfig("give --tag or --sizes".into())),
    };
    if let Some(l) = &a.lambda {
        recipe.reg_lambda = match l.as_slice() {
            [one] => vec![*one; recipe.sizes.len() - 1],
            many => many.to_vec(),
        };
    }
    let t = &mut recipe.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    if let Some(mu) = a.momentum {
        t.optimizer = if mu == 0.0 {
            Optimizer::Sgd
        } else {
            Optimizer::Momentum { mu }
        };
    }
    let train_data = match &a.train_data {
        Some(p) => container(p, b)?,
        None => mnist(&a.common, MnistSplit::Train, b)?,
    };
    let test_data = match &a.test_data {
        Some(p) => Some(container(p, b)?),
        None if a.train_data.is_none() => Some(mnist(&a.common, MnistSplit::Test, b)?),
        None => None,
    };
    let mut net = MlpNetwork::init(&recipe.sizes, recipe.reg_lambda.clone(), recipe.init_seed)?;
    let report = fit(&mut net, &train_data.data, &recipe.train, &mut CrossEntropy)?;
    let train_acc = accuracy(&net, &train_data.data);
    let test_acc = test_data.as_ref().map(|t| accuracy(&net, &t.data));
    net.meta.accuracy = test_acc.or(Some(train_acc));
    let path = b.writer.dir().join("model.json");
    save_checkpoint(&net, &path)?;
    let bytes = std::fs::read(&path)?;
    b.file("model.json", &bytes)?;
    let metrics = serde_json::json!({
        "recipe": recipe,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "epoch_loss": report.epoch_loss,
    });
    b.file("metrics.json", &serde_json::to_vec_pretty(&metrics).map_err(plab::Error::from)?)?;
    println!(
        "train accuracy {train_acc:.4}{}",
        test_acc.map(|t| format!(", test accuracy {t:.4}")).unwrap_or_default()
    );
    Ok(())
}

fn attack(a: &AttackArgs, b: &mut Bundle) -> Result<()> {
    let net = load_model(&a.model, &a.common, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?.data;
    let cfg = attack_config(&a.attack, a.seed);
    cfg.validate()?;
    let ids = sample_correct(&net, &test, a.n_images, a.seed);
    let records = run_attacks(&net, &test, &ids, a.targets, &cfg, a.seed)?;
    if cfg.method == AttackMethod::Penalty {
        b.notes.push(penalty_note());
    }
    b.table("attacks.csv", &attack_table(&records, &cfg))?;
    let ok = records.iter().filter(|r| r.result.success).count();
    println!("{ok}/{} attacks succeeded", records.len());
    Ok(())
}

fn penalty_note() -> String {
    "adversarial examples come from a quadratic-penalty gradient attack standing in for box-constrained L-BFGS".into()
}

fn sweep(a: &SweepArgs, b: &mut Bundle) -> Result<()> {
    let net = load_model(&a.model, &a.common, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?.data;
    if a.image_id >= test.len() {
        bail!(plab::Error::InvalidConfig(format!("image id {} out of range", a.image_id)));
    }
    let mut x = test.input(a.image_id).to_owned();
    if let Some(t) = a.target {
        let r = plab::attacks::igsm_targeted(&net, x.view(), t, 0.01, 100, PIXEL_BOX)?;
        if !r.success {
            b.notes.push(format!("IGSM toward {t} did not succeed; sweeping its last iterate"));
        }
        x = r.x_adv;
    }
    let lo = a.sigma_max / a.grid as f64;
    let s = class_frequency_sweep(&net, x.view(), lo, a.sigma_max, a.grid, a.n, a.seed)?;
    let k = net.num_classes();
    let mut header = vec!["sigma".to_string()];
    header.extend((0..k).map(|c| format!("class_{c}_freq")));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for (i, &sigma) in s.sigma_grid.iter().enumerate() {
        let mut row = vec![num(sigma)];
        row.extend(s.frequencies.row(i).iter().map(|&f| num(f)));
        t.push(row);
    }
    let csv = b.table("sweep.csv", &t)?;
    let t = Table::from_csv(&csv)?;
    let sig: Vec<f64> = t.floats("sigma")?.into_iter().flatten().collect();
    let mut series = Vec::new();
    for c in 0..k {
        let f: Vec<f64> = t.floats(&format!("class_{c}_freq"))?.into_iter().flatten().collect();
        if f.iter().any(|&v| v > 0.0) {
            series.push((format!("class {c}"), sig.iter().copied().zip(f).collect()));
        }
    }
    let svg = report::line_plot("class frequency under Gaussian noise", "sigma", "frequency", &series);
    b.file("sweep.svg", svg.as_bytes())?;
    Ok(())
}

fn persistence_table(study: &PersistenceStudy) -> Table {
    let mut t = Table::new(&["image_id", "kind", "gamma", "sigma_star", "converged", "censored"]);
    for r in study.records() {
        t.push(vec![
            r.image_id.to_string(),
            r.kind.name().into(),
            num(r.result.gamma),
            r.result.display_value(),
            r.result.converged.to_string(),
            (r.result.censored != plab::stability::Censoring::None).to_string(),
        ]);
    }
    t
}

fn persistence_histogram(csv: &[u8]) -> Result<String> {
    let t = Table::from_csv(csv)?;
    let groups: Vec<(String, Vec<f64>)> = report::group_by(&t, "kind", "sigma_star")?
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().filter(|x| *x > 0.0).map(f64::log10).collect()))
        .collect();
    let lo = groups.iter().flat_map(|g| g.1.iter().copied()).fold(f64::INFINITY, f64::min);
    let hi = groups.iter().flat_map(|g| g.1.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let (edges, counts) = report::bin(&groups, lo, hi, 40);
    Ok(report::histogram_plot("gamma-persistence", "log10 sigma*", &edges, &counts))
}

fn persist(a: &PersistArgs, b: &mut Bundle) -> Result<()> {
    let net = load_model(&a.model, &a.common, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?.data;
    let acfg = attack_config(&a.attack, a.seed);
    acfg.validate()?;
    let pcfg = persistence_config(&a.persist, a.seed);
    pcfg.validate()?;
    let ids = sample_correct(&net, &test, a.n_images, a.seed);
    let attacks = run_attacks(&net, &test, &ids, a.targets, &acfg, a.seed)?;
    let study = persistence_study(&net, &test, &ids, attacks, &pcfg)?;
    b.table("attacks.csv", &attack_table(&study.attacks, &acfg))?;
    let csv = b.table("persistence.csv", &persistence_table(&study))?;
    b.file("persistence.svg", persistence_histogram(&csv)?.as_bytes())?;
    let med = |v: Vec<f64>| plab::experiments::median(&v);
    println!(
        "median persistence: natural {:.4} ({}), adversarial {:.4} ({})",
        med(study.natural_values()),
        study.natural.len(),
        med(study.adversarial_values()),
        study.adversarial.len()
    );
    Ok(())
}

fn persist_path(a: &PersistPathArgs, b: &mut Bundle) -> Result<()> {
    let net = load_model(&a.model, &a.common, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?.data;
    let pcfg = persistence_config(&a.persist, a.seed);
    pcfg.validate()?;
    let ids = sample_correct(&net, &test, a.n_paths, a.seed);
    let attacks = random_target_attacks(&net, &test, &ids, &igsm_config(), a.seed)?;
    let ok: Vec<AdversarialRecord> = attacks.into_iter().filter(|r| r.result.success).collect();
    let profiles = path_profiles(&net, &test, &ok, a.points, &pcfg)?;
    let mut t = Table::new(&["path_id", "image_id", "index", "t", "class", "sigma_star"]);
    for p in &profiles {
        for i in 0..p.t.len() {
            t.push(vec![
                p.path_id.to_string(),
                p.image_id.to_string(),
                i.to_string(),
                num(p.t[i]),
                p.class[i].to_string(),
                num(p.persistence[i]),
            ]);
        }
    }
    let csv = b.table("paths.csv", &t)?;
    let t = Table::from_csv(&csv)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = {
        let ids = t.strings("path_id")?;
        let ts = t.floats("t")?;
        let ss = t.floats("sigma_star")?;
        let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for ((id, tv), sv) in ids.into_iter().zip(ts).zip(ss) {
            let (Some(tv), Some(sv)) = (tv, sv) else { continue };
            match out.iter_mut().find(|(n, _)| *n == id) {
                Some((_, v)) => v.push((tv, sv)),
                None => out.push((id, vec![(tv, sv)])),
            }
        }
        out.truncate(6);
        out
    };
    let svg = report::line_plot("persistence along nat-to-adv segments", "t", "sigma*", &series);
    b.file("paths.svg", svg.as_bytes())?;
    let hits = profiles.iter().filter(|p| p.minimum_at_change(1)).count();
    println!(
        "minimum at the class change (±1 point) on {hits}/{} paths",
        profiles.len()
    );
    Ok(())
}

fn angles(a: &AnglesArgs, b: &mut Bundle) -> Result<()> {
    let net = load_model(&a.model, &a.common, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?.data;
    let ncfg = NormalConfig {
        n_samples: a.samples,
        sigma: a.sigma,
        seed: a.seed,
        ..NormalConfig::default()
    };
    b.notes.push(format!(
        "boundary samples projected by {}",
        plab::boundary::PROJECTION_METHOD
    ));
    let surveys: Vec<AngleSurvey> = match a.pairs {
        PairKind::Adversarial => {
            let ids = sample_correct(&net, &test, a.n_pairs, a.seed);
            let attacks = random_target_attacks(&net, &test, &ids, &igsm_config(), a.seed)?;
            adversarial_angle_surveys(
                &net,
                &test,
                &attacks,
                &[AngleMode::Interpolant, AngleMode::AdvGradient],
                &ncfg,
            )
        }
        PairKind::Natural => {
            let ids = sample_correct(&net, &test, 10 * a.n_pairs, a.seed);
            let pairs = natural_pairs(&test, &ids, a.n_pairs, a.seed);
            angle_survey_modes(
                &net,
                &pairs,
                &[AngleMode::Interpolant, AngleMode::TrainGradient],
                &ncfg,
            )
        }
    };
    let mut t = Table::new(&["pair_id", "mode", "angle_rad", "n_samples_used", "singular_gap", "residual"]);
    for s in &surveys {
        for r in &s.records {
            t.push(vec![
                r.pair_id.to_string(),
                s.mode.name().into(),
                r.angle.map(num).unwrap_or_default(),
                r.n_samples_used.to_string(),
                num(r.singular_gap),
                num(r.residual),
            ]);
        }
    }
    let csv = b.table("survey.csv", &t)?;
    let t = Table::from_csv(&csv)?;
    let groups = report::group_by(&t, "mode", "angle_rad")?;
    b.file("survey.svg", report::quarter_circle("angles with the boundary", &groups).as_bytes())?;
    let (edges, counts) = report::bin(&groups, 0.0, std::f64::consts::FRAC_PI_2, 30);
    b.file(
        "survey-hist.svg",
        report::histogram_plot("angles with the boundary", "angle (rad)", &edges, &counts).as_bytes(),
    )?;
    for s in &surveys {
        let v = s.angles();
        println!(
            "{}: median angle {:.4} rad over {} pairs",
            s.mode.name(),
            plab::experiments::median(&v),
            v.len()
        );
    }
    Ok(())
}

fn pca(a: &PcaArgs, b: &mut Bundle) -> Result<()> {
    let train = mnist(&a.common, MnistSplit::Train, b)?;
    let test = mnist(&a.common, MnistSplit::Test, b)?;
    let p = if a.centered {
        let projector = plab::manifold::fit_pca(&train.data, a.k, true)?;
        plab::experiments::Pmnist {
            train: project(&train, &projector, "train")?,
            test: project(&test, &projector, "test")?,
            projector,
        }
    } else {
        build_pmnist(&train, &test, a.k)?
    };
    b.file("projector.json", &serde_json::to_vec(&p.projector).map_err(plab::Error::from)?)?;
    for (name, c) in [("pmnist-train.plab", &p.train), ("pmnist-test.plab", &p.test)] {
        let path = b.writer.dir().join(name);
        save_container(c, &path)?;
        let bytes = std::fs::read(&path)?;
        b.file(name, &bytes)?;
    }
    let mut t = Table::new(&["component", "explained"]);
    for (i, v) in explained_variance(&train.data, &p.projector).iter().enumerate() {
        t.push(vec![i.to_string(), num(*v)]);
    }
    b.table("explained.csv", &t)?;
    println!("{} orthonormal components", p.projector.k);
    Ok(())
}

fn project(c: &DatasetContainer, p: &PcaProjector, split: &str) -> Result<DatasetContainer> {
    Ok(DatasetContainer {
        name: format!("pmnist-{split}"),
        data: plab::manifold::project_dataset(&c.data, p)?,
        provenance: plab::data::Provenance::Derived {
            parent: c.name.clone(),
            operation: "pca-projection".into(),
            params: serde_json::json!({ "k_per_class": p.k_per_class, "centered": p.centered }),
        },
    })
}

fn load_projector(dir: &Path, b: &mut Bundle) -> Result<PcaProjector> {
    let path = dir.join("projector.json");
    b.input("projector.json", &path)?;
    Ok(PcaProjector::load(&path)?)
}

fn mag_train(a: &MagTrainArgs, b: &mut Bundle) -> Result<()> {
    let projector = load_projector(&a.pmnist, b)?;
    let train = container(&a.pmnist.join("pmnist-train.plab"), b)?;
    let test = container(&a.pmnist.join("pmnist-test.plab"), b)?;
    let settings = PmnistSettings {
        hidden: a.hidden,
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        alpha: a.alpha,
        robust_epsilon: a.robust_epsilon,
        robust_step: a.robust_epsilon / 4.0,
        robust_iterations: a.robust_iterations,
    };
    let mut recipe = pmnist_recipe(a.kind.tag(), &settings, a.seed)?;
    if let Some(h) = a.fd_step {
        match &mut recipe.kind {
            plab::experiments::TrainingKind::Mag { mag }
            | plab::experiments::TrainingKind::MagAdversarial { mag, .. } => {
                mag.grad_mode = GradMode::FiniteDifference { h }
            }
            _ => {}
        }
    }
    let mut net = train_recipe(&recipe, &train.data, Some(&projector))?;
    let acc = accuracy(&net, &test.data);
    net.meta.accuracy = Some(acc);
    let path = b.writer.dir().join("model.json");
    save_checkpoint(&net, &path)?;
    let bytes = std::fs::read(&path)?;
    b.file("model.json", &bytes)?;
    let metrics = serde_json::json!({ "recipe": recipe, "test_accuracy": acc });
    b.file("metrics.json", &serde_json::to_vec_pretty(&metrics).map_err(plab::Error::from)?)?;
    println!("{}: test accuracy {acc:.4}", a.kind.tag());
    Ok(())
}

fn robust_eval(a: &RobustEvalArgs, b: &mut Bundle) -> Result<()> {
    let projector = load_projector(&a.pmnist, b)?;
    let mut test = container(&a.pmnist.join("pmnist-test.plab"), b)?.data;
    if let Some(n) = a.n_test {
        test = test.head(n);
    }
    let attacks = [
        CurveAttack::Fgsm {
            epsilons: a.fgsm_eps.clone(),
            clip: None,
        },
        CurveAttack::Penalty {
            epsilons: a.pgd_eps.clone(),
            c_grid: a.pgd_c_grid.clone(),
            iterations: a.pgd_iterations,
            step: a.pgd_step,
            clip: None,
        },
    ];
    let mut rob = Table::new(&["model_tag", "attack", "epsilon", "accuracy"]);
    let mut hist = Table::new(&["model_tag", "bin_lo", "bin_hi", "count"]);
    for spec in &a.models {
        let (tag, path) = spec
            .split_once('=')
            .with_context(|| format!("--model expects tag=checkpoint, got {spec:?}"))
            .map_err(|e| anyhow::anyhow!(plab::Error::InvalidConfig(e.to_string())))?;
        b.input(tag, Path::new(path))?;
        let net = load_checkpoint(path)?;
        let ev = evaluate_model(tag, &net, &test, &projector, &attacks, a.bins)?;
        for (attack, curve) in &ev.curves {
            for p in curve {
                rob.push(vec![tag.into(), attack.clone(), num(p.epsilon), num(p.accuracy)]);
            }
        }
        for (k, &c) in ev.alignment.counts.iter().enumerate() {
            hist.push(vec![
                tag.into(),
                num(ev.alignment.edges[k]),
                num(ev.alignment.edges[k + 1]),
                c.to_string(),
            ]);
        }
        println!(
            "{tag}: accuracy {:.4}, mean alignment {:.4}",
            ev.test_accuracy, ev.mean_alignment
        );
    }
    let csv = b.table("robustness.csv", &rob)?;
    let t = Table::from_csv(&csv)?;
    for attack in ["fgsm", "pgd"] {
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        let (tags, atts) = (t.strings("model_tag")?, t.strings("attack")?);
        let (eps, acc) = (t.floats("epsilon")?, t.floats("accuracy")?);
        for i in 0..tags.len() {
            if atts[i] != attack {
                continue;
            }
            let (Some(e), Some(y)) = (eps[i], acc[i]) else { continue };
            match series.iter_mut().find(|(n, _)| *n == tags[i]) {
                Some((_, v)) => v.push((e, y)),
                None => series.push((tags[i].clone(), vec![(e, y)])),
            }
        }
        let svg = report::line_plot(&format!("accuracy under {attack}"), "epsilon", "accuracy", &series);
        b.file(&format!("robustness-{attack}.svg"), svg.as_bytes())?;
    }
    let csv = b.table("alignment.csv", &hist)?;
    let t = Table::from_csv(&csv)?;
    let tags = t.strings("model_tag")?;
    let (lo, hi, cnt) = (t.floats("bin_lo")?, t.floats("bin_hi")?, t.floats("count")?);
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    let mut edges: Vec<f64> = Vec::new();
    for i in 0..tags.len() {
        let c = cnt[i].unwrap_or(0.0);
        match groups.iter_mut().find(|(n, _)| *n == tags[i]) {
            Some((_, v)) => v.push(c),
            None => {
                if groups.is_empty() {
                    edges.push(lo[i].unwrap_or(0.0));
                }
                groups.push((tags[i].clone(), vec![c]))
            }
        }
        if groups.len() == 1 {
            edges.push(hi[i].unwrap_or(1.0));
        }
    }
    let svg = report::histogram_plot("gradient alignment with the manifold", "cosine", &edges, &groups);
    b.file("alignment.svg", svg.as_bytes())?;
    Ok(())
}

fn concentration(a: &ConcentrationArgs, b: &mut Bundle) -> Result<()> {
    let r = a.r.unwrap_or(a.sigma * (a.n as f64).sqrt());
    let rep = concentration_check(a.n, a.sigma, r, a.count, &a.eps_grid, a.seed)?;
    let mut t = Table::new(&[
        "epsilon",
        "gaussian_empirical",
        "gaussian_bound",
        "ball_delta",
        "ball_empirical",
        "ball_bound",
    ]);
    for i in 0..rep.eps_grid.len() {
        t.push(vec![
            num(rep.eps_grid[i]),
            num(rep.gaussian_empirical[i]),
            num(rep.gaussian_lower_bound[i]),
            num(rep.ball_deltas[i]),
            num(rep.ball_empirical[i]),
            num(rep.ball_lower_bound[i]),
        ]);
    }
    b.table("concentration.csv", &t)?;
    let mut norms = Table::new(&["sampler", "norm"]);
    for &v in &rep.gaussian_norms {
        norms.push(vec!["gaussian".into(), num(v)]);
    }
    for &v in &rep.ball_norms {
        norms.push(vec!["ball".into(), num(v)]);
    }
    let csv = b.table("norms.csv", &norms)?;
    let t = Table::from_csv(&csv)?;
    let groups = report::group_by(&t, "sampler", "norm")?;
    let lo = groups.iter().flat_map(|g| g.1.iter().copied()).fold(f64::INFINITY, f64::min);
    let hi = groups.iter().flat_map(|g| g.1.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let (edges, counts) = report::bin(&groups, lo, hi, 60);
    b.file(
        "norms.svg",
        report::histogram_plot("sample norms", "norm", &edges, &counts).as_bytes(),
    )?;
    println!(
        "gaussian bound holds: {}, ball bound holds: {}, max ball norm {:.6} (r = {r})",
        rep.gaussian_bound_holds(),
        rep.ball_bound_holds(),
        rep.max_ball_norm
    );
    Ok(())
}

fn table1(a: &Table1Args, b: &mut Bundle) -> Result<()> {
    let mut t = Table::new(&["Network", "TestAcc", "AvgDist", "PersistNat", "PersistAdv"]);
    if !a.models.is_empty() {
        let test = mnist(&a.common, MnistSplit::Test, b)?.data;
        let attack = AttackConfig {
            method: AttackMethod::Penalty,
            step_size: a.attack_step,
            iterations: a.attack_iterations,
            c_grid: a.c_grid.clone().unwrap_or_else(default_c_grid),
            clip: PIXEL_BOX,
            seed: a.seed,
            ..AttackConfig::default()
        };
        attack.validate()?;
        let pcfg = persistence_config(&a.persist, a.seed);
        pcfg.validate()?;
        b.notes.push(penalty_note());
        for spec in &a.models {
            let (name, model) = spec
                .split_once('=')
                .map(|(n, m)| (n.to_string(), m.to_string()))
                .unwrap_or_else(|| (spec.trim_start_matches("zoo:").to_string(), spec.clone()));
            let m = ModelArg {
                model,
                model_seed: a.model_seed,
            };
            let net = load_model(&m, &a.common, b)?;
            let row = table1_row(&name, &net, &test, a.n_images, &attack, &pcfg, a.seed)?;
            println!(
                "{name}: acc {:.2}%, dist {:.4}, persist nat {:.4}, adv {:.4}",
                100.0 * row.test_accuracy,
                row.avg_distortion,
                row.persist_nat,
                row.persist_adv
            );
            t.push(vec![
                name,
                num(100.0 * row.test_accuracy),
                num(row.avg_distortion),
                num(row.persist_nat),
                num(row.persist_adv),
            ]);
        }
    }
    b.table("table1.csv", &t)?;
    Ok(())
}
