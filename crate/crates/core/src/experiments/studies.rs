use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{attack_batch, AttackConfig, AttackMethod, AttackResult, PIXEL_BOX};
use crate::boundary::{angle_survey_modes, AngleMode, AngleSurvey, NormalConfig, SurveyPair};
use crate::classifier::Classifier;
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::rng;
use crate::stability::{
    class_change_index, min_persistence_index, persistence_along_path, PersistenceConfig,
    PersistenceResult,
};

/// `n` test indices drawn by a seeded permutation among the examples the
/// model classifies correctly.
pub fn sample_correct<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    n: usize,
    seed: u64,
) -> Vec<usize> {
    let preds = net.predict_batch(data.inputs());
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    order
        .into_iter()
        .filter(|&i| preds[i] == data.labels()[i])
        .take(n)
        .collect()
}

/// The paper-scale IGSM setting: targeted sign steps of 0.01 for at most
/// 100 iterations, pixels kept in `[0, 1]`.
pub fn igsm_config() -> AttackConfig {
    AttackConfig {
        method: AttackMethod::Bim,
        epsilon: 0.0,
        step_size: 0.01,
        iterations: 100,
        clip: PIXEL_BOX,
        ..AttackConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Nat,
    Adv,
}

impl ImageKind {
    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Nat => "nat",
            ImageKind::Adv => "adv",
        }
    }
}

/// One adversarial example together with its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRecord {
    pub image_id: usize,
    pub true_label: usize,
    pub target: Option<usize>,
    pub result: AttackResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceRecord {
    pub image_id: usize,
    pub kind: ImageKind,
    pub result: PersistenceResult,
}

/// Every other class as a target for each image.
pub fn all_target_attacks<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    ids: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialRecord>> {
    let k = net.num_classes();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut targets = Vec::new();
    for &i in ids {
        for t in (0..k).filter(|&t| t != data.labels()[i]) {
            rows.push(i);
            labels.push(data.labels()[i]);
            targets.push(t);
        }
    }
    targeted_attacks(net, data, &rows, &labels, &targets, cfg)
}

/// One uniformly drawn wrong class per image as target.
pub fn random_target_attacks<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    ids: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<AdversarialRecord>> {
    let k = net.num_classes();
    let labels: Vec<usize> = ids.iter().map(|&i| data.labels()[i]).collect();
    let targets: Vec<usize> = ids
        .iter()
        .zip(&labels)
        .map(|(&i, &y)| {
            let r = (rng::derive_seed(seed, i as u64) % (k as u64 - 1)) as usize;
            if r >= y {
                r + 1
            } else {
                r
            }
        })
        .collect();
    targeted_attacks(net, data, ids, &labels, &targets, cfg)
}

fn targeted_attacks<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    rows: &[usize],
    labels: &[usize],
    targets: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<AdversarialRecord>> {
    const CHUNK: usize = 256;
    let xs = data.inputs().select(Axis(0), rows);
    let chunks: Vec<Result<Vec<AttackResult>>> = (0..rows.len())
        .step_by(CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| {
            let e = (s + CHUNK).min(rows.len());
            attack_batch(
                net,
                xs.slice(ndarray::s![s..e, ..]),
                &labels[s..e],
                Some(&targets[s..e]),
                cfg,
            )
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut k = 0;
    for chunk in chunks {
        for result in chunk? {
            out.push(AdversarialRecord {
                image_id: rows[k],
                true_label: labels[k],
                target: Some(targets[k]),
                result,
            });
            k += 1;
        }
    }
    Ok(out)
}

/// γ-persistence of every row; row `i` uses seed `derive_seed(cfg.seed, i)`.
pub fn persistence_of_rows<C: Classifier + Sync + ?Sized>(
    net: &C,
    xs: ArrayView2<f64>,
    cfg: &PersistenceConfig,
) -> Result<Vec<PersistenceResult>> {
    crate::stability::bracketing_batch(net, xs, cfg)
        .into_iter()
        .collect()
}

/// Natural images and their successful adversarial examples, measured
/// with one persistence configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceStudy {
    pub natural: Vec<PersistenceRecord>,
    pub adversarial: Vec<PersistenceRecord>,
    pub attacks: Vec<AdversarialRecord>,
}

impl PersistenceStudy {
    pub fn natural_values(&self) -> Vec<f64> {
        self.natural.iter().map(|r| r.result.sigma_star).collect()
    }

    pub fn adversarial_values(&self) -> Vec<f64> {
        self.adversarial.iter().map(|r| r.result.sigma_star).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &PersistenceRecord> {
        self.natural.iter().chain(&self.adversarial)
    }
}

pub fn persistence_study<C: Classifier + Sync + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    ids: &[usize],
    attacks: Vec<AdversarialRecord>,
    cfg: &PersistenceConfig,
) -> Result<PersistenceStudy> {
    let nat_x = data.inputs().select(Axis(0), ids);
    let nat = persistence_of_rows(net, nat_x.view(), cfg)?;
    let successes: Vec<&AdversarialRecord> = attacks.iter().filter(|a| a.result.success).collect();
    let mut adv_x = Array2::zeros((successes.len(), data.dim()));
    for (mut row, a) in adv_x.rows_mut().into_iter().zip(&successes) {
        row.assign(&a.result.x_adv);
    }
    let adv_cfg = PersistenceConfig {
        seed: rng::derive_seed(cfg.seed, 0xad),
        ..cfg.clone()
    };
    let adv = persistence_of_rows(net, adv_x.view(), &adv_cfg)?;
    Ok(PersistenceStudy {
        natural: ids
            .iter()
            .zip(nat)
            .map(|(&image_id, result)| PersistenceRecord {
                image_id,
                kind: ImageKind::Nat,
                result,
            })
            .collect(),
        adversarial: successes
            .iter()
            .zip(adv)
            .map(|(a, result)| PersistenceRecord {
                image_id: a.image_id,
                kind: ImageKind::Adv,
                result,
            })
            .collect(),
        attacks,
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Overlapping coefficient `Σ_b min(p_b, q_b)` of two samples, histogrammed
/// on `bins` equal-width bins of `log σ` spanning both samples.
pub fn log_histogram_overlap(a: &[f64], b: &[f64], bins: usize) -> f64 {
    if a.is_empty() || b.is_empty() || bins == 0 {
        return f64::NAN;
    }
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let lo = la.iter().chain(&lb).cloned().fold(f64::INFINITY, f64::min);
    let hi = la.iter().chain(&lb).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 1.0;
    }
    let hist = |xs: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in xs {
            let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            h[k.min(bins - 1)] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(&la), hist(&lb));
    ha.iter().zip(&hb).map(|(p, q)| p.min(*q)).sum()
}

/// One row of the persistence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub network: String,
    pub test_accuracy: f64,
    pub avg_distortion: f64,
    pub persist_nat: f64,
    pub persist_adv: f64,
    pub n_natural: usize,
    pub n_adversarial: usize,
    pub attack: String,
}

/// Accuracy, mean distortion of successful attacks and mean persistence of
/// natural and adversarial images.
pub fn table1_row<C: Classifier + Sync + ?Sized>(
    network: &str,
    net: &C,
    test: &LabeledDataset,
    n_images: usize,
    attack: &AttackConfig,
    pcfg: &PersistenceConfig,
    seed: u64,
) -> Result<Table1Row> {
    let acc = crate::nn::accuracy(net, test);
    let ids = sample_correct(net, test, n_images, seed);
    let attacks = random_target_attacks(net, test, &ids, attack, rng::derive_seed(seed, 1))?;
    let study = persistence_study(net, test, &ids, attacks, pcfg)?;
    let dists: Vec<f64> = study
        .attacks
        .iter()
        .filter(|a| a.result.success)
        .map(|a| a.result.distortion)
        .collect();
    Ok(Table1Row {
        network: network.into(),
        test_accuracy: acc,
        avg_distortion: mean(&dists),
        persist_nat: mean(&study.natural_values()),
        persist_adv: mean(&study.adversarial_values()),
        n_natural: study.natural.len(),
        n_adversarial: study.adversarial.len(),
        attack: attack.method.name().into(),
    })
}

/// Persistence profile along one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProfile {
    pub path_id: usize,
    pub image_id: usize,
    pub t: Vec<f64>,
    pub class: Vec<usize>,
    pub persistence: Vec<f64>,
    pub class_change_index: Option<usize>,
    pub min_persistence_index: Option<usize>,
}

impl PathProfile {
    /// Minimum within `tolerance` grid points of the first class change.
    pub fn minimum_at_change(&self, tolerance: usize) -> bool {
        match (self.class_change_index, self.min_persistence_index) {
            (Some(c), Some(m)) => c.abs_diff(m) <= tolerance,
            _ => false,
        }
    }
}

/// Persistence along natural→adversarial segments, in parallel over paths.
pub fn path_profiles<C: Classifier + Sync + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    attacks: &[AdversarialRecord],
    n_points: usize,
    cfg: &PersistenceConfig,
) -> Result<Vec<PathProfile>> {
    attacks
        .par_iter()
        .enumerate()
        .map(|(path_id, a)| {
            let c = PersistenceConfig {
                seed: rng::derive_seed(cfg.seed, path_id as u64),
                ..cfg.clone()
            };
            let pts = persistence_along_path(
                net,
                data.input(a.image_id),
                a.result.x_adv.view(),
                n_points,
                &c,
            )?;
            Ok(PathProfile {
                path_id,
                image_id: a.image_id,
                t: pts.iter().map(|p| p.t).collect(),
                class: pts.iter().map(|p| p.class).collect(),
                persistence: pts.iter().map(|p| p.persistence.sigma_star).collect(),
                class_change_index: class_change_index(&pts),
                min_persistence_index: min_persistence_index(&pts),
            })
        })
        .collect()
}

/// Pairs of test images with different labels, drawn by seed.
pub fn natural_pairs(data: &LabeledDataset, ids: &[usize], n: usize, seed: u64) -> Vec<SurveyPair> {
    let mut r = rng::stream(seed, 0);
    let mut out = Vec::with_capacity(n);
    let mut guard = 0;
    while out.len() < n && ids.len() > 1 && guard < 100 * n {
        guard += 1;
        let pick: Vec<&usize> = ids.choose_multiple(&mut r, 2).collect();
        let (a, b) = (*pick[0], *pick[1]);
        if data.labels()[a] != data.labels()[b] {
            out.push(SurveyPair {
                x0: data.input(a).to_owned(),
                x1: data.input(b).to_owned(),
                label0: data.labels()[a],
            });
        }
    }
    out
}

/// Angle surveys over natural→adversarial segments: the interpolant and
/// the adversarial gradient share each pair's normal.
pub fn adversarial_angle_surveys<C: Classifier + ?Sized>(
    net: &C,
    data: &LabeledDataset,
    attacks: &[AdversarialRecord],
    modes: &[AngleMode],
    cfg: &NormalConfig,
) -> Vec<AngleSurvey> {
    let pairs: Vec<SurveyPair> = attacks
        .iter()
        .filter(|a| a.result.success)
        .map(|a| SurveyPair {
            x0: data.input(a.image_id).to_owned(),
            x1: a.result.x_adv.clone(),
            label0: a.true_label,
        })
        .collect();
    angle_survey_modes(net, &pairs, modes, cfg)
}
