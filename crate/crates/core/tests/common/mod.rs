//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use uhrseg::loss::{total_loss, LossWeights};
use uhrseg::toynet::{gen_scene, loss_and_grads, ToyWsdNet};
use uhrseg::wavelet::packet_decompose;
use uhrseg::{LabelMap, SeededRng, Tensor};

/// Loss of the f64 shadow together with the sign patterns of every kink
/// it passes through: ReLU activity and the sign of every detail coefficient
/// entering the L1 term.
pub fn shadow_loss(
    net: &ToyWsdNet<f64>,
    image: &Tensor<f64>,
    labels: &LabelMap,
    w: &LossWeights,
) -> (f64, Vec<i8>) {
    let out = net.forward(image).unwrap();
    let (report, _) = total_loss(&out.seg_logits, &out.aux_logits, labels, image, &out.i_rec, w).unwrap();
    let mut pattern: Vec<i8> = out.cache.relu_pattern().into_iter().map(i8::from).collect();
    let diff = out.i_rec.planes().unwrap();
    let orig = image.planes().unwrap();
    for (r, i) in diff.iter().zip(&orig) {
        let tree = packet_decompose(&r.sub(i), w.depth).unwrap();
        for level in 1..=w.depth {
            for (n, node) in tree.nodes(level).iter().enumerate() {
                if n % 4 != 0 {
                    pattern.extend(node.data().iter().map(|&v| v.signum() as i8));
                }
            }
        }
    }
    (report.total, pattern)
}

#[derive(Debug, Default, Clone)]
pub struct GradCheck {
    pub accepted: usize,
    pub skipped: usize,
    pub failures: Vec<String>,
    pub worst: f64,
}

/// Probes `per_layer` random weights or biases in every layer, comparing the
/// f32 analytic gradient against an f64 central difference with step `h`.
/// Probes whose ±h passes cross a kink are skipped, up to `max_tries` draws
/// per layer.
pub fn check_network_gradients(seed: u64, per_layer: usize, h: f64, rel_tol: f64) -> Vec<GradCheck> {
    let mut rng = SeededRng::new(seed);
    let (image, labels) = gen_scene(&mut rng, 32, 32, 4).unwrap();
    let net = ToyWsdNet::<f32>::seeded(4, seed).unwrap();
    let w = LossWeights::default();
    let (_, grads) = loss_and_grads(&net, &image, &labels, &w).unwrap();
    let shadow = net.cast::<f64>();
    let image64 = image.cast::<f64>();
    let max_tries = per_layer * 20;
    let mut out = Vec::new();
    for (li, layer) in net.layers.iter().enumerate() {
        let mut gc = GradCheck::default();
        let mut tries = 0;
        while gc.accepted + gc.failures.len() < per_layer && tries < max_tries {
            tries += 1;
            let total = layer.weight.len() + layer.bias.len();
            let k = rng.below(total as u64) as usize;
            let analytic = if k < layer.weight.len() {
                grads.layers[li].0[k]
            } else {
                grads.layers[li].1[k - layer.weight.len()]
            } as f64;
            let eval = |delta: f64| {
                let mut s = shadow.clone();
                let l = &mut s.layers[li];
                if k < l.weight.len() {
                    l.weight[k] += delta;
                } else {
                    l.bias[k - l.weight.len()] += delta;
                }
                shadow_loss(&s, &image64, &labels, &w)
            };
            let (lp, pp) = eval(h);
            let (lm, pm) = eval(-h);
            let (_, p0) = eval(0.0);
            if pp != p0 || pm != p0 {
                gc.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            gc.worst = gc.worst.max(rel);
            if rel <= rel_tol {
                gc.accepted += 1;
            } else {
                gc.failures.push(format!(
                    "{} param {k}: analytic {analytic:e}, numeric {numeric:e}, rel {rel:e}",
                    layer.name
                ));
            }
        }
        out.push(gc);
    }
    out
}

pub mod cli {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};
    use std::process::{Command, Output};

    use uhrseg::io::{write_label_png, write_plane_png, write_raw_tensor};
    use uhrseg::tiler::plan_tiles;
    use uhrseg::toynet::gen_scene;
    use uhrseg::{SeededRng, Tensor};

    pub fn bin() -> PathBuf {
        PathBuf::from(env!("CARGO_BIN_EXE_uhrseg"))
    }

    pub fn run(dir: &Path, args: &[&str]) -> Output {
        Command::new(bin()).current_dir(dir).args(args).output().expect("binary runs")
    }

    /// Runs and requires exit status 0.
    pub fn ok(dir: &Path, args: &[&str]) -> Output {
        let out = run(dir, args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    /// Writes the inputs used by [`run_suite`] into `dir`.
    pub fn write_fixtures(dir: &Path) {
        let mut rng = SeededRng::new(11);
        let (image, labels) = gen_scene(&mut rng, 96, 96, 4).unwrap();
        let (_, other) = gen_scene(&mut rng, 96, 96, 4).unwrap();
        let cropped: Vec<_> = image.planes().unwrap().iter().map(|p| p.crop(0, 0, 90, 77).unwrap()).collect();
        write_plane_png(dir.join("image.png"), &cropped).unwrap();
        std::fs::create_dir_all(dir.join("gt")).unwrap();
        std::fs::create_dir_all(dir.join("pred")).unwrap();
        write_label_png(dir.join("gt/a.png"), &labels).unwrap();
        write_label_png(dir.join("pred/a.png"), &other).unwrap();
        write_label_png(dir.join("gt/b.png"), &other).unwrap();
        write_label_png(dir.join("pred/b.png"), &other).unwrap();
        write_label_png(dir.join("labels.png"), &labels).unwrap();

        let plan = plan_tiles(96, 96, 40, 12).unwrap();
        std::fs::create_dir_all(dir.join("logits")).unwrap();
        for (i, win) in plan.windows.iter().enumerate() {
            let data = (0..3 * win.h * win.w).map(|_| rng.normal() as f32).collect();
            let t = Tensor::new(vec![3, win.h, win.w], data).unwrap();
            write_raw_tensor(&t, dir.join(format!("logits/patch_{i:04}.utsr"))).unwrap();
        }
        let a = Tensor::new(vec![2, 16, 16], (0..512).map(|_| rng.normal() as f32).collect()).unwrap();
        let b = Tensor::new(vec![2, 16, 16], (0..512).map(|_| rng.normal() as f32).collect()).unwrap();
        write_raw_tensor(&a, dir.join("a.utsr")).unwrap();
        write_raw_tensor(&b, dir.join("b.utsr")).unwrap();
    }

    /// Every subcommand once with `--threads threads`. Returns the bytes of
    /// every file under `dir` plus each command's standard output.
    pub fn run_suite(dir: &Path, threads: usize) -> BTreeMap<String, Vec<u8>> {
        write_fixtures(dir);
        let t = threads.to_string();
        let cmds: Vec<Vec<&str>> = vec![
            vec!["dwt", "--levels", "2", "--in", "image.png", "--out", "sub.utsr"],
            vec!["idwt", "--in", "sub.utsr", "--out", "back.utsr"],
            vec!["pyramid", "--in", "labels.png", "--out-dir", "pyr", "--levels", "3"],
            vec!["wsl", "--a", "a.utsr", "--b", "b.utsr", "--wsl-levels", "2"],
            vec!["richness", "--labels", "gt", "--region-size", "48", "--regions", "8", "--min-area", "4", "--seed", "3"],
            vec!["tile", "--in", "labels.png", "--out-dir", "tiles", "--patch", "40", "--overlap", "12"],
            vec!["merge", "--plan", "tiles/plan.json", "--patches", "tiles", "--kind", "labels", "--out", "merged.png"],
            vec!["merge", "--plan", "tiles/plan.json", "--patches", "logits", "--kind", "logits", "--out", "merged.utsr"],
            vec!["eval", "--pred", "pred", "--gt", "gt", "--num-categories", "4"],
            vec!["train-toy", "--out", "ck", "--iterations", "3", "--size", "32", "--scenes", "2", "--seed", "5"],
            vec!["infer-toy", "--checkpoint", "ck", "--in", "image.png", "--out", "seg.png"],
        ];
        let mut outputs = BTreeMap::new();
        for cmd in &cmds {
            let mut args = vec!["--threads", t.as_str()];
            args.extend(cmd);
            let out = ok(dir, &args);
            outputs.insert(format!("stdout:{}", cmd.join(" ")), out.stdout);
        }
        collect_files(dir, dir, &mut outputs);
        outputs
    }

    fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                collect_files(root, &path, out);
            } else {
                let key = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
}
