use std::f64::consts::{LN_2, PI};

use sparse_anomaly::data::{ColumnKind, RowSpan, WindowBatch};
use sparse_anomaly::error::ModelError;
use sparse_anomaly::models::{
    reparameterize, train, vae_err_loss, vae_md_loss, vae_prob_loss, vae_sl_loss, Dnn,
    LatentSample, LossWeights, ReconstructionHeads, TrainConfig, Trainable, Vae, VaeArchitecture,
    VaeKind,
};
use sparse_anomaly::nn::rng::{normal_vec, stream_rng};
use sparse_anomaly::nn::{Matrix, Tensor3};

fn m(rows: usize, cols: usize, v: Vec<f64>) -> Matrix {
    Matrix::from_vec(rows, cols, v).unwrap()
}

fn t3(b: usize, t: usize, f: usize, v: Vec<f64>) -> Tensor3 {
    Tensor3::from_vec(b, t, f, v).unwrap()
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    normal_vec(&mut stream_rng(seed, 0), n)
}

fn latent(rows: usize, z: usize, seed: u64) -> LatentSample {
    let mu = m(rows, z, random(rows * z, seed));
    let lv = m(rows, z, random(rows * z, seed + 1));
    reparameterize(&mu, &lv, &m(rows, z, random(rows * z, seed + 2))).unwrap()
}

fn batch(x: Tensor3, labels: Vec<Option<bool>>, metadata: Vec<Option<usize>>) -> WindowBatch {
    let (b, t, _) = x.shape();
    WindowBatch {
        x,
        labels,
        metadata,
        spans: (0..b)
            .map(|i| RowSpan {
                start: i * t,
                end: (i + 1) * t,
            })
            .collect(),
    }
}

fn no_kl() -> LossWeights {
    LossWeights {
        w_kl: 0.0,
        w_anomaly_class: Some(1.0),
        ..LossWeights::default()
    }
}

#[test]
fn reparameterize_examples() {
    let l = reparameterize(
        &m(1, 2, vec![0.3, -1.0]),
        &m(1, 2, vec![0.7, 2.0]),
        &Matrix::zeros(1, 2),
    )
    .unwrap();
    assert_eq!(l.sample, l.mu);
    let l = reparameterize(
        &Matrix::zeros(1, 2),
        &Matrix::zeros(1, 2),
        &m(1, 2, vec![1.0, -1.0]),
    )
    .unwrap();
    assert_eq!(l.sample.data(), &[1.0, -1.0]);
    let l = reparameterize(
        &m(1, 1, vec![2.0]),
        &m(1, 1, vec![2.0 * 3f64.ln()]),
        &m(1, 1, vec![1.0]),
    )
    .unwrap();
    assert!((l.sample.get(0, 0) - 5.0).abs() < 1e-12);
    assert!(reparameterize(
        &Matrix::zeros(1, 2),
        &Matrix::zeros(2, 1),
        &Matrix::zeros(1, 2)
    )
    .is_err());
}

#[test]
fn err_loss_examples() {
    let x = t3(1, 1, 2, vec![1.0, 0.0]);
    let std_normal = reparameterize(
        &Matrix::zeros(1, 1),
        &Matrix::zeros(1, 1),
        &Matrix::zeros(1, 1),
    )
    .unwrap();
    let l = vae_err_loss(&x, &x, &std_normal, &LossWeights::default()).unwrap();
    assert_eq!(l.total, 0.0);

    let recon = t3(1, 1, 2, vec![0.0, 0.0]);
    let lat = reparameterize(
        &m(1, 1, vec![1.0]),
        &Matrix::zeros(1, 1),
        &Matrix::zeros(1, 1),
    )
    .unwrap();
    let l = vae_err_loss(&x, &recon, &lat, &LossWeights::default()).unwrap();
    assert!((l.reconstruction - 0.5).abs() < 1e-15);
    assert!((l.kl - 0.5).abs() < 1e-15);
    assert!((l.total - 0.505).abs() < 1e-12);
    let l = vae_err_loss(&x, &recon, &lat, &no_kl()).unwrap();
    assert_eq!(l.total, l.reconstruction);
}

#[test]
fn prob_loss_with_unit_variance_matches_squared_error() {
    let (b, t, f) = (2, 3, 4);
    let x = t3(b, t, f, random(b * t * f, 1));
    let mean = t3(b, t, f, random(b * t * f, 2));
    let lat = latent(b * t, 2, 3);
    let heads = ReconstructionHeads {
        mean: mean.clone(),
        logvar: Some(Tensor3::zeros(b, t, f)),
        binary_mean: None,
    };
    let kinds = vec![ColumnKind::Continuous; f];
    let prob = vae_prob_loss(&x, &heads, &lat, &kinds, &no_kl()).unwrap();
    let err = vae_err_loss(&x, &mean, &lat, &no_kl()).unwrap();
    let expected = 0.5 * (2.0 * PI).ln() + 0.5 * err.reconstruction;
    assert!((prob.reconstruction - expected).abs() < 1e-9);
}

#[test]
fn prob_loss_single_binary_column() {
    let x = t3(1, 1, 1, vec![1.0]);
    let heads = ReconstructionHeads {
        mean: Tensor3::zeros(1, 1, 0),
        logvar: None,
        binary_mean: Some(t3(1, 1, 1, vec![0.5])),
    };
    let lat = reparameterize(
        &Matrix::zeros(1, 1),
        &Matrix::zeros(1, 1),
        &Matrix::zeros(1, 1),
    )
    .unwrap();
    let l = vae_prob_loss(&x, &heads, &lat, &[ColumnKind::Binary], &no_kl()).unwrap();
    assert!((l.total - LN_2).abs() < 1e-12);
    let bad = t3(1, 1, 1, vec![0.5]);
    assert!(matches!(
        vae_prob_loss(&bad, &heads, &lat, &[ColumnKind::Binary], &no_kl()),
        Err(ModelError::Data(_))
    ));
}

struct SlCase {
    x: Tensor3,
    heads: ReconstructionHeads,
    lat: LatentSample,
    kinds: Vec<ColumnKind>,
}

fn sl_case(b: usize, t: usize) -> SlCase {
    let f = 3;
    let mut x = random(b * t * f, 11);
    for r in 0..b * t {
        x[r * f + 2] = (r % 2) as f64;
    }
    let bin: Vec<f64> = random(b * t, 13)
        .iter()
        .map(|v| 1.0 / (1.0 + (-v).exp()))
        .collect();
    SlCase {
        x: t3(b, t, f, x),
        heads: ReconstructionHeads {
            mean: t3(b, t, 2, random(b * t * 2, 12)),
            logvar: Some(t3(b, t, 2, random(b * t * 2, 14))),
            binary_mean: Some(t3(b, t, 1, bin)),
        },
        lat: latent(b * t, 2, 15),
        kinds: vec![
            ColumnKind::Continuous,
            ColumnKind::Continuous,
            ColumnKind::Binary,
        ],
    }
}

fn softmax_rows(rows: usize, k: usize, seed: u64) -> Matrix {
    let v = random(rows * k, seed);
    let mut out = Vec::with_capacity(rows * k);
    for r in 0..rows {
        let e: Vec<f64> = v[r * k..(r + 1) * k].iter().map(|a| a.exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|a| a / s));
    }
    m(rows, k, out)
}

#[test]
fn sl_loss_masking_and_label_term() {
    let c = sl_case(1, 1);
    let w = LossWeights::default();
    let pi = softmax_rows(1, 2, 20);
    let absent = vae_sl_loss(&c.x, &c.heads, &c.lat, &pi, &[None], &c.kinds, &w).unwrap();
    let prob = vae_prob_loss(&c.x, &c.heads, &c.lat, &c.kinds, &w).unwrap();
    assert_eq!(absent.label, 0.0);
    assert_eq!(absent.total, prob.total);
    let anomalous = vae_sl_loss(&c.x, &c.heads, &c.lat, &pi, &[Some(true)], &c.kinds, &w).unwrap();
    assert_eq!(anomalous.reconstruction, 0.0);
    assert!(anomalous.label > 0.0);

    let half = m(1, 2, vec![0.5, 0.5]);
    let w1 = LossWeights {
        w_anomaly_class: Some(1.0),
        ..w
    };
    let normal = vae_sl_loss(&c.x, &c.heads, &c.lat, &half, &[Some(false)], &c.kinds, &w1).unwrap();
    assert!((normal.label - LN_2).abs() < 1e-12);
}

#[test]
fn swapping_label_columns_leaves_loss_unchanged() {
    let (b, t) = (3, 2);
    let c = sl_case(b, t);
    let w = LossWeights {
        w_anomaly_class: Some(1.0),
        ..LossWeights::default()
    };
    let pi = softmax_rows(b * t, 2, 21);
    let mut swapped = pi.clone();
    for r in 0..b * t {
        swapped.row_mut(r).swap(0, 1);
    }
    let labels = [Some(true), Some(false), None];
    let flipped: Vec<Option<bool>> = labels.iter().map(|l| l.map(|v| !v)).collect();
    // reconstruction masking follows the anomalous label, so compare label terms
    let a = vae_sl_loss(&c.x, &c.heads, &c.lat, &pi, &labels, &c.kinds, &w).unwrap();
    let s = vae_sl_loss(&c.x, &c.heads, &c.lat, &swapped, &flipped, &c.kinds, &w).unwrap();
    assert!((a.label - s.label).abs() < 1e-12);
    assert_eq!(a.kl, s.kl);
}

#[test]
fn md_loss_reduces_to_sl_loss() {
    let (b, t) = (2, 2);
    let c = sl_case(b, t);
    let w = LossWeights::default();
    let pi = softmax_rows(b * t, 2, 30);
    let md = softmax_rows(b * t, 3, 31);
    let labels = [Some(false), None];
    let sl = vae_sl_loss(&c.x, &c.heads, &c.lat, &pi, &labels, &c.kinds, &w).unwrap();
    let absent = vae_md_loss(
        &c.x,
        &c.heads,
        &c.lat,
        &pi,
        &md,
        &labels,
        &[None, None],
        &c.kinds,
        &w,
    )
    .unwrap();
    assert_eq!(absent.total, sl.total);
    assert_eq!(absent.metadata, 0.0);
    let zero = LossWeights {
        w_metadata: 0.0,
        ..w
    };
    let sl0 = vae_sl_loss(&c.x, &c.heads, &c.lat, &pi, &labels, &c.kinds, &zero).unwrap();
    let md0 = vae_md_loss(
        &c.x,
        &c.heads,
        &c.lat,
        &pi,
        &md,
        &labels,
        &[Some(1), Some(2)],
        &c.kinds,
        &zero,
    )
    .unwrap();
    assert_eq!(md0.total, sl0.total);

    let c1 = sl_case(1, 1);
    let third = m(1, 3, vec![1.0 / 3.0; 3]);
    let l = vae_md_loss(
        &c1.x,
        &c1.heads,
        &c1.lat,
        &softmax_rows(1, 2, 32),
        &third,
        &[None],
        &[Some(0)],
        &c1.kinds,
        &w,
    )
    .unwrap();
    assert!((l.metadata - 3f64.ln()).abs() < 1e-12);
    assert!(vae_md_loss(
        &c1.x,
        &c1.heads,
        &c1.lat,
        &softmax_rows(1, 2, 32),
        &third,
        &[None],
        &[Some(3)],
        &c1.kinds,
        &w
    )
    .is_err());
}

fn kinds(f: usize) -> Vec<ColumnKind> {
    let mut k = vec![ColumnKind::Continuous; f - 1];
    k.push(ColumnKind::Binary);
    k
}

fn small_input(b: usize, t: usize, f: usize) -> Tensor3 {
    let mut v = random(b * t * f, 40);
    for r in 0..b * t {
        v[r * f + f - 1] = (r % 3 == 0) as u8 as f64;
    }
    t3(b, t, f, v)
}

#[test]
fn heads_are_distributions_and_decoder_width_adds_up() {
    let arch = VaeArchitecture::for_input(4, 3);
    let z = arch.bottleneck_width;
    let x = small_input(2, 3, 4);
    let vae = Vae::new(
        VaeKind::Metadata,
        arch.clone(),
        &kinds(4),
        3,
        LossWeights::default(),
        1,
    )
    .unwrap();
    let out = vae.forward(&x, None).unwrap();
    assert_eq!(out.decoder_input_width, z + 2 + 3);
    for p in [out.pi.unwrap(), out.metadata.unwrap()] {
        for r in 0..p.rows() {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let sl = Vae::new(
        VaeKind::SparseLabels,
        arch.clone(),
        &kinds(4),
        0,
        LossWeights::default(),
        1,
    )
    .unwrap();
    assert_eq!(sl.decoder_input_width(), z + 2);
    let bin = sl.forward(&x, None).unwrap().heads.binary_mean.unwrap();
    assert!(bin.data().iter().all(|&p| p > 0.0 && p < 1.0));
    assert!(Vae::new(
        VaeKind::Metadata,
        arch,
        &kinds(4),
        1,
        LossWeights::default(),
        1
    )
    .is_err());
}

#[test]
fn decoder_depends_on_label_head() {
    let arch = VaeArchitecture::for_input(4, 3);
    let x = small_input(2, 3, 4);
    let mut vae = Vae::new(
        VaeKind::SparseLabels,
        arch,
        &kinds(4),
        0,
        LossWeights::default(),
        2,
    )
    .unwrap();
    let before = vae.forward(&x, None).unwrap().heads.mean;
    let (w, _) = vae.label_head_params().unwrap();
    let p = vae.params_mut().get_mut(w);
    let v = p.get(0, 0);
    p.set(0, 0, v + 0.5);
    let after = vae.forward(&x, None).unwrap().heads.mean;
    assert_ne!(before, after);
}

#[test]
fn checkpoint_round_trip() {
    let arch = VaeArchitecture::for_input(4, 3);
    let x = small_input(2, 3, 4);
    let vae = Vae::new(VaeKind::Prob, arch, &kinds(4), 0, LossWeights::default(), 3).unwrap();
    let json = serde_json::to_string(&vae.to_checkpoint()).unwrap();
    let back = Vae::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(
        vae.forward(&x, None).unwrap().heads,
        back.forward(&x, None).unwrap().heads
    );
}

#[test]
fn dnn_zero_output_layer_gives_half() {
    let mut dnn = Dnn::new(VaeArchitecture::for_input(3, 4), 5).unwrap();
    let (w, b) = dnn.output_params();
    for id in [w, b] {
        dnn.params_mut().get_mut(id).data_mut().fill(0.0);
    }
    let p = dnn.predict(&t3(3, 4, 3, random(36, 6))).unwrap();
    assert!(p.iter().all(|&v| v == 0.5));
}

fn separable(n: usize) -> WindowBatch {
    let (t, f) = (3, 2);
    let mut v = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let anomalous = i % 2 == 0;
        let level = if anomalous { 0.9 } else { 0.1 };
        for s in 0..t {
            v.push(level);
            v.push(0.5 + 0.01 * s as f64);
        }
        labels.push(Some(anomalous));
    }
    batch(t3(n, t, f, v), labels, vec![None; n])
}

#[test]
fn dnn_separates_separable_windows() {
    let data = separable(40);
    let mut arch = VaeArchitecture::for_input(2, 3);
    arch.batch_size = 8;
    let mut dnn = Dnn::new(arch, 7).unwrap();
    train(&mut dnn, &data, &data, &TrainConfig::new(150, 8, 7)).unwrap();
    let p = dnn.predict(&data.x).unwrap();
    let correct = p
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| (**p > 0.5) == l.unwrap())
        .count();
    assert_eq!(correct, data.len());
    // predictions do not depend on which other windows are in the call
    let single = dnn.predict(&data.x.select_batch(&[3])).unwrap();
    assert_eq!(single[0], p[3]);
}

fn constant_windows(n: usize) -> WindowBatch {
    let (t, f) = (3, 3);
    let row = [0.2, 0.7, 1.0];
    let v: Vec<f64> = (0..n * t).flat_map(|_| row).collect();
    batch(t3(n, t, f, v), vec![Some(false); n], vec![None; n])
}

#[test]
fn training_on_constant_data_decreases_and_is_deterministic() {
    let data = constant_windows(16);
    let arch = VaeArchitecture::for_input(3, 3);
    let fit = || {
        let mut vae = Vae::new(
            VaeKind::Err,
            arch.clone(),
            &kinds(3),
            0,
            LossWeights::default(),
            9,
        )
        .unwrap();
        let h = train(&mut vae, &data, &data, &TrainConfig::new(5, 4, 9)).unwrap();
        (h, vae)
    };
    let (h, vae) = fit();
    assert_eq!(h.train_loss.len(), 5);
    assert!(
        h.train_loss.windows(2).all(|w| w[1] < w[0]),
        "{:?}",
        h.train_loss
    );
    let (h2, vae2) = fit();
    assert_eq!(h.train_loss, h2.train_loss);
    assert_eq!(h.validation_loss, h2.validation_loss);
    assert_eq!(vae.to_checkpoint(), vae2.to_checkpoint());
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let data = constant_windows(4);
    let arch = VaeArchitecture::for_input(3, 3);
    let mut vae = Vae::new(VaeKind::Prob, arch, &kinds(3), 0, LossWeights::default(), 1).unwrap();
    let before = vae.to_checkpoint();
    let h = train(&mut vae, &data, &data, &TrainConfig::new(0, 4, 1)).unwrap();
    assert!(h.train_loss.is_empty() && h.validation_loss.is_empty());
    assert_eq!(before, vae.to_checkpoint());
}

#[test]
fn overflowing_loss_names_the_term() {
    let mut data = constant_windows(4);
    let v: Vec<f64> = data.x.data().iter().map(|_| 1e200).collect();
    data.x = t3(4, 3, 3, v);
    let arch = VaeArchitecture::for_input(3, 3);
    let mut vae = Vae::new(
        VaeKind::Err,
        arch,
        &[ColumnKind::Continuous; 3],
        0,
        LossWeights::default(),
        1,
    )
    .unwrap();
    let clean = constant_windows(4);
    let err = train(&mut vae, &data, &clean, &TrainConfig::new(1, 4, 1)).unwrap_err();
    assert!(
        matches!(
            err,
            ModelError::NonFinite {
                term: "reconstruction",
                ..
            }
        ),
        "{err:?}"
    );
}

#[test]
fn anomalous_validation_is_rejected_for_unsupervised_models() {
    let data = constant_windows(4);
    let mut val = constant_windows(4);
    val.labels[0] = Some(true);
    let arch = VaeArchitecture::for_input(3, 3);
    let mut vae = Vae::new(VaeKind::Err, arch, &kinds(3), 0, LossWeights::default(), 1).unwrap();
    assert!(train(&mut vae, &data, &val, &TrainConfig::new(1, 4, 1)).is_err());
}
