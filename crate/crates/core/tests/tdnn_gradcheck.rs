//! Backpropagation checked against central finite differences.

use parkvoice::frontend::FeatureMatrix;
use parkvoice::seed;
use parkvoice::tdnn::{batch_loss, init_weights, loss_and_grad, TdnnConfig, TdnnWeights};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const H: f64 = 1e-5;
/// Denominator floor: f64 loss differences carry ~1e-11 of roundoff.
const FLOOR: f64 = 1e-7;

fn segment(len: usize, k: usize, seed: u64) -> FeatureMatrix<f64> {
    let mut rng = seed::rng(seed);
    let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    FeatureMatrix::from_rows(&rows, 10.0).unwrap()
}

fn with_random_biases(cfg: &TdnnConfig, seed: u64) -> TdnnWeights<f64> {
    let mut w = init_weights(cfg, seed).unwrap();
    let mut rng = seed::rng(seed ^ 0xb1a5);
    for (name, t) in w.tensors_mut() {
        if name.ends_with("bias") {
            t.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    w
}

/// Worst relative error over the chosen `(tensor, index)` pairs.
fn worst_error(w: &mut TdnnWeights<f64>, batch: &[(FeatureMatrix<f64>, usize)], picks: &[(usize, usize)]) -> f64 {
    let (_, grad) = loss_and_grad(w, batch).unwrap();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    let mut worst = 0.0f64;
    for &(ti, i) in picks {
        let orig = w.tensors()[ti].1[i];
        w.tensors_mut()[ti].1[i] = orig + H;
        let up = batch_loss(w, batch).unwrap();
        w.tensors_mut()[ti].1[i] = orig - H;
        let down = batch_loss(w, batch).unwrap();
        w.tensors_mut()[ti].1[i] = orig;
        let fd = (up - down) / (2.0 * H);
        let a = analytic[ti][i];
        worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(FLOOR));
    }
    worst
}

#[test]
fn every_parameter_of_a_narrow_network() {
    let cfg = TdnnConfig::xvector(24, 2).with_widths([12, 12, 12, 12, 30], 12, 12);
    let mut w = with_random_biases(&cfg, 3);
    let batch = vec![(segment(30, 24, 1), 1)];
    let picks: Vec<(usize, usize)> = w.tensors().iter().enumerate().flat_map(|(ti, (_, t))| (0..t.len()).map(move |i| (ti, i))).collect();
    assert_eq!(picks.len(), cfg.n_params());
    let worst = worst_error(&mut w, &batch, &picks);
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn sampled_parameters_of_the_full_network() {
    let cfg = TdnnConfig::xvector(24, 2);
    let mut w = with_random_biases(&cfg, 5);
    let batch = vec![(segment(30, 24, 2), 0)];
    let mut rng = seed::rng(17);
    let picks: Vec<(usize, usize)> = w
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, t))| {
            let n = t.len();
            (0..3).map(|_| (ti, rng.random_range(0..n))).collect::<Vec<_>>()
        })
        .collect();
    let worst = worst_error(&mut w, &batch, &picks);
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn multi_item_batches_and_replicate_padding() {
    let cfg = TdnnConfig::xvector(5, 3).with_widths([6, 6, 6, 6, 8], 5, 5).with_padding(parkvoice::tdnn::Padding::Replicate);
    let mut w = with_random_biases(&cfg, 9);
    let batch = vec![(segment(15, 5, 1), 0), (segment(19, 5, 2), 2), (segment(26, 5, 3), 1)];
    let picks: Vec<(usize, usize)> = w.tensors().iter().enumerate().flat_map(|(ti, (_, t))| (0..t.len()).map(move |i| (ti, i))).collect();
    let worst = worst_error(&mut w, &batch, &picks);
    assert!(worst <= 1e-4, "worst relative error {worst}");
}
