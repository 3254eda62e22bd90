mod common;

use uhrseg::loss::LossWeights;
use uhrseg::toynet::{gen_scene, loss_and_grads, pixel_accuracy, train, ToyWsdNet, TrainConfig};
use uhrseg::wavelet::{packet_dwt_channels, packet_iwt_channels};
use uhrseg::{SeededRng, Tensor};

#[test]
fn parameter_gradients_match_finite_differences() {
    let checks = common::check_network_gradients(1, 20, 1e-2, 1e-2);
    let net = ToyWsdNet::<f32>::zeros(4).unwrap();
    for (gc, layer) in checks.iter().zip(&net.layers) {
        assert!(gc.failures.is_empty(), "{}: {:#?}", layer.name, gc.failures);
        assert_eq!(gc.accepted, 20, "{}: only {} usable probes", layer.name, gc.accepted);
    }
}

#[test]
fn overfits_one_scene() {
    let (image, labels) = gen_scene(&mut SeededRng::new(7), 64, 64, 4).unwrap();
    let mut net = ToyWsdNet::seeded(4, 7).unwrap();
    let cfg = TrainConfig {
        lr: 3e-2,
        iterations: 500,
        ..TrainConfig::default()
    };
    let out = train(&mut net, &[(image.clone(), labels.clone())], &cfg, |_, _| {}).unwrap();
    let (first, last) = (out.loss_history[0], *out.loss_history.last().unwrap());
    assert!(last < 0.2 * first, "loss went from {first} to {last}");
    assert!(pixel_accuracy(&net, &image, &labels).unwrap() > 0.9);
}

#[test]
fn forward_is_thread_count_invariant() {
    let (image, _) = gen_scene(&mut SeededRng::new(2), 64, 64, 4).unwrap();
    let net = ToyWsdNet::seeded(4, 3).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| net.forward(&image).unwrap())
    };
    let (a, b) = (run(1), run(8));
    assert_eq!(a.seg_logits, b.seg_logits);
    assert_eq!(a.aux_logits, b.aux_logits);
    assert_eq!(a.i_rec, b.i_rec);
}

#[test]
fn auxiliary_weights_do_not_touch_inference() {
    let (image, _) = gen_scene(&mut SeededRng::new(4), 32, 32, 3).unwrap();
    let net = ToyWsdNet::<f32>::seeded(3, 4).unwrap();
    let mut stripped = net.clone();
    for layer in [uhrseg::toynet::LAYER_COUNT - 2, uhrseg::toynet::LAYER_COUNT - 1] {
        stripped.layers[layer].weight.iter_mut().for_each(|w| *w = 0.0);
    }
    assert_eq!(net.infer(&image).unwrap(), stripped.infer(&image).unwrap());
}

#[test]
fn zero_auxiliary_weights_leave_segmentation_loss_only() {
    // With every auxiliary weight at zero the objective is the segmentation
    // loss alone and the aux and sr heads receive no gradient.
    let (image, labels) = gen_scene(&mut SeededRng::new(5), 32, 32, 3).unwrap();
    let net = ToyWsdNet::<f32>::seeded(3, 5).unwrap();
    let off = LossWeights {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        ..LossWeights::default()
    };
    let (report, grads) = loss_and_grads(&net, &image, &labels, &off).unwrap();
    assert_eq!(report.total, report.seg);
    let aux = uhrseg::toynet::LAYER_COUNT - 2;
    assert!(grads.layers[aux].0.iter().all(|&g| g == 0.0));
    assert!(grads.layers[aux + 1].0.iter().all(|&g| g == 0.0));
}

#[test]
fn iwt_gradient_is_dwt_of_upstream() {
    let mut rng = SeededRng::new(6);
    let x = Tensor::new(vec![64, 2, 2], (0..256).map(|_| rng.normal() as f64).collect()).unwrap();
    let g = Tensor::new(vec![4, 8, 8], (0..256).map(|_| rng.normal() as f64).collect()).unwrap();
    // d<IWT(x), g>/dx = DWT(g) because the packet transform is orthogonal.
    let lhs: f64 = packet_iwt_channels(&x, 2)
        .unwrap()
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| a * b)
        .sum();
    let rhs: f64 = x
        .data()
        .iter()
        .zip(packet_dwt_channels(&g, 2).unwrap().data())
        .map(|(a, b)| a * b)
        .sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
}
