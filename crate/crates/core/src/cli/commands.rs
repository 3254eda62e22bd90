use std::ffi::OsString;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{event, DwtArgs, EvalArgs, IdwtArgs, InferToyArgs, MergeArgs, MergeKind, PyramidArgs};
use super::{RichnessArgs, TileArgs, TrainToyArgs, WslArgs};
use crate::error::{Error, Result};
use crate::io::{
    read_label_png, read_plane_png, read_png, read_raw_tensor, write_label_png, write_plane_png,
    write_png, write_raw_tensor,
};
use crate::labels::{LabelMap, IGNORE};
use crate::loss::wsl_value;
use crate::metrics::ConfusionMatrix;
use crate::plane::{Plane, Tensor};
use crate::pyramid::laplacian_residuals;
use crate::richness::{richness_score, sample_regions, RegionSampling};
use crate::rng::SeededRng;
use crate::tiler::{merge_labels, merge_logits, plan_tiles, TilePlan};
use crate::toynet::{checkpoint, gen_scene, pixel_accuracy, train, ToyWsdNet, TrainConfig, INPUT_MULTIPLE};
use crate::wavelet::{dwt_multilevel, iwt_multilevel, MallatDecomposition};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// `*.png` files of a directory, sorted by name.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && has_ext(&path, "png") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// A `C×H×W` tensor from a raw tensor (rank 2 or 3) or an 8-bit PNG.
fn read_tensor(path: &Path) -> Result<Tensor> {
    if has_ext(path, "utsr") {
        let t = read_raw_tensor(path)?;
        match t.rank() {
            2 => {
                let dims = vec![1, t.dims()[0], t.dims()[1]];
                Tensor::new(dims, t.into_data())
            }
            3 => Ok(t),
            r => Err(Error::shape(format!(
                "{}: expected a rank 2 or 3 tensor, got rank {r}",
                path.display()
            ))),
        }
    } else {
        Tensor::from_planes(&read_plane_png(path)?)
    }
}

fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    if has_ext(path, "png") {
        write_plane_png(path, &t.planes()?)
    } else {
        write_raw_tensor(t, path)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DwtSidecar {
    levels: usize,
    channels: usize,
    height: usize,
    width: usize,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = OsString::from(out.as_os_str());
    s.push(".json");
    PathBuf::from(s)
}

pub fn dwt(a: &DwtArgs) -> Result<()> {
    if a.levels == 0 {
        return Err(Error::invalid("levels must be at least 1"));
    }
    let t = read_tensor(&a.input)?;
    let (c, h, w) = t.chw()?;
    let m = 1usize << a.levels;
    let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let planes = t
        .planes()?
        .par_iter()
        .map(|p| Ok(dwt_multilevel(&p.pad_edge(hp, wp)?, a.levels)?.to_layout()))
        .collect::<Result<Vec<_>>>()?;
    write_raw_tensor(&Tensor::from_planes(&planes)?, &a.out)?;
    let sidecar = DwtSidecar {
        levels: a.levels,
        channels: c,
        height: h,
        width: w,
    };
    emit_json(Some(&sidecar_path(&a.out)), &sidecar)?;
    event(
        "dwt",
        json!({ "levels": a.levels, "channels": c, "height": h, "width": w, "padded": [hp, wp] }),
    );
    Ok(())
}

pub fn idwt(a: &IdwtArgs) -> Result<()> {
    let t = read_tensor(&a.input)?;
    let (c, hp, wp) = t.chw()?;
    let side = sidecar_path(&a.input);
    let (levels, h, w) = if side.exists() {
        let s: DwtSidecar = read_json(&side)?;
        if a.levels.is_some_and(|l| l != s.levels) {
            return Err(Error::invalid(format!(
                "--levels {} contradicts the sidecar's {}",
                a.levels.unwrap_or_default(),
                s.levels
            )));
        }
        if s.channels != c || s.height > hp || s.width > wp {
            return Err(Error::shape(format!(
                "sidecar describes {}x{}x{}, tensor is {c}x{hp}x{wp}",
                s.channels, s.height, s.width
            )));
        }
        (s.levels, s.height, s.width)
    } else {
        let levels = a
            .levels
            .ok_or_else(|| Error::invalid("no sidecar found; pass --levels"))?;
        (levels, hp, wp)
    };
    let planes = t
        .planes()?
        .par_iter()
        .map(|p| iwt_multilevel(&MallatDecomposition::from_layout(p, levels)?)?.crop(0, 0, h, w))
        .collect::<Result<Vec<_>>>()?;
    write_tensor(&Tensor::from_planes(&planes)?, &a.out)?;
    event("idwt", json!({ "levels": levels, "channels": c, "height": h, "width": w }));
    Ok(())
}

pub fn pyramid(a: &PyramidArgs) -> Result<()> {
    let t = read_tensor(&a.input)?;
    let stacks = t
        .planes()?
        .par_iter()
        .map(|p| laplacian_residuals(p, a.levels))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out_dir)?;
    let mut files = Vec::new();
    for i in 0..a.levels {
        let planes: Vec<Plane> = stacks.iter().map(|s| s.residuals[i].clone()).collect();
        let name = format!("h{i}.utsr");
        write_raw_tensor(&Tensor::from_planes(&planes)?, a.out_dir.join(&name))?;
        files.push(name);
    }
    let base: Vec<Plane> = stacks.iter().map(|s| s.base.clone()).collect();
    write_raw_tensor(&Tensor::from_planes(&base)?, a.out_dir.join("base.utsr"))?;
    files.push("base.utsr".into());
    event("pyramid", json!({ "levels": a.levels, "files": files }));
    Ok(())
}

pub fn wsl(a: &WslArgs) -> Result<()> {
    let i = read_tensor(&a.a)?;
    let i_rec = read_tensor(&a.b)?;
    let parts = wsl_value(&i, &i_rec, &a.loss.weights())?;
    for (part, value) in [("wsl_low", parts.low), ("wsl_high", parts.high), ("wsl", parts.total())] {
        println!("{}", json!({ "part": part, "value": value }));
    }
    Ok(())
}

pub fn richness(a: &RichnessArgs) -> Result<()> {
    let files = list_pngs(&a.labels)?;
    if files.is_empty() {
        return Err(Error::Empty("label directory"));
    }
    let maps = files
        .par_iter()
        .map(read_label_png)
        .collect::<Result<Vec<_>>>()?;
    let categories = match a.num_categories {
        Some(c) => c,
        None => {
            let max = maps
                .iter()
                .flat_map(|m| m.labels().iter().copied().filter(|&l| l != IGNORE))
                .max()
                .ok_or(Error::NoValidPixels)?;
            max as usize + 1
        }
    };
    let mut rng = SeededRng::new(a.seed);
    let mut stats = Vec::new();
    for (map, path) in maps.iter().zip(&files) {
        let sampling = RegionSampling {
            width: a.region_size.min(map.width()),
            height: a.region_size.min(map.height()),
            count: a.regions,
            min_area: a.min_area,
        };
        if (sampling.width, sampling.height) != (a.region_size, a.region_size) {
            event(
                "region_clamped",
                json!({ "file": path.display().to_string(), "width": sampling.width, "height": sampling.height }),
            );
        }
        stats.extend(sample_regions(map, &mut rng, &sampling, categories)?);
    }
    let report = richness_score(&stats, a.q)?;
    let out = json!({
        "R": report.richness,
        "q": report.q,
        "region_size": a.region_size,
        "regions_per_image": a.regions,
        "per_category": report.per_category,
    });
    emit_json(a.out.as_deref(), &out)?;
    event("richness", json!({ "images": maps.len(), "regions": report.regions, "categories": categories }));
    Ok(())
}

fn patch_name(i: usize, ext: &str) -> String {
    format!("patch_{i:04}.{ext}")
}

pub fn tile(a: &TileArgs) -> Result<()> {
    let raster = read_png(&a.input)?;
    let plan = plan_tiles(raster.width, raster.height, a.patch, a.overlap)?;
    create_dir(&a.out_dir)?;
    plan.windows
        .par_iter()
        .enumerate()
        .map(|(i, win)| {
            let crop = raster.crop(win.x0, win.y0, win.w, win.h)?;
            write_png(a.out_dir.join(patch_name(i, "png")), &crop)
        })
        .collect::<Result<Vec<_>>>()?;
    emit_json(Some(&a.out_dir.join("plan.json")), &plan)?;
    event("tile", json!({ "windows": plan.windows.len(), "width": raster.width, "height": raster.height }));
    Ok(())
}

pub fn merge(a: &MergeArgs) -> Result<()> {
    let plan: TilePlan = read_json(&a.plan)?;
    let n = plan.windows.len();
    match a.kind {
        MergeKind::Labels => {
            let patches = (0..n)
                .into_par_iter()
                .map(|i| read_label_png(a.patches.join(patch_name(i, "png"))))
                .collect::<Result<Vec<_>>>()?;
            write_label_png(&a.out, &merge_labels(&plan, &patches)?)?;
        }
        MergeKind::Logits => {
            let patches = (0..n)
                .into_par_iter()
                .map(|i| read_raw_tensor(a.patches.join(patch_name(i, "utsr"))))
                .collect::<Result<Vec<_>>>()?;
            write_raw_tensor(&merge_logits(&plan, &patches)?, &a.out)?;
        }
    }
    event("merge", json!({ "windows": n, "width": plan.image_w, "height": plan.image_h }));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let pred = list_pngs(&a.pred)?;
    let gt = list_pngs(&a.gt)?;
    let names = |v: &[PathBuf]| -> Vec<OsString> {
        v.iter().map(|p| p.file_name().unwrap_or_default().to_owned()).collect()
    };
    if names(&pred) != names(&gt) {
        return Err(Error::shape(format!(
            "prediction and ground-truth directories hold different file names ({} vs {} files)",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("prediction directory"));
    }
    let per_image = pred
        .par_iter()
        .zip(&gt)
        .map(|(p, g)| {
            let mut cm = ConfusionMatrix::new(a.num_categories)?;
            cm.accumulate(&read_label_png(p)?, &read_label_png(g)?)?;
            Ok(cm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ConfusionMatrix::new(a.num_categories)?;
    for cm in &per_image {
        total += cm;
    }
    emit_json(a.out.as_deref(), &total.report()?)?;
    event("eval", json!({ "images": pred.len(), "pixels": total.total() }));
    Ok(())
}

pub fn train_toy(a: &TrainToyArgs) -> Result<()> {
    if a.size == 0 || a.size % INPUT_MULTIPLE != 0 {
        return Err(Error::invalid(format!(
            "scene size must be a positive multiple of {INPUT_MULTIPLE}, got {}",
            a.size
        )));
    }
    if a.scenes == 0 {
        return Err(Error::Empty("training dataset"));
    }
    let mut rng = SeededRng::new(a.seed);
    let dataset = (0..a.scenes)
        .map(|_| gen_scene(&mut rng, a.size, a.size, a.num_categories))
        .collect::<Result<Vec<_>>>()?;
    let mut net = ToyWsdNet::seeded(a.num_categories, rng.next_u64())?;
    let cfg = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        iterations: a.iterations,
        batch_size: a.batch_size,
        seed: rng.next_u64(),
        weights: a.loss.weights(),
    };
    let outcome = train(&mut net, &dataset, &cfg, |step, report| {
        if a.log_every > 0 && (step + 1) % a.log_every == 0 {
            event("train_step", json!({ "iteration": step + 1, "loss": report }));
        }
    })?;
    checkpoint::save(&net, &a.out)?;
    let accuracy = dataset
        .iter()
        .map(|(image, labels)| pixel_accuracy(&net, image, labels))
        .collect::<Result<Vec<_>>>()?;
    for (i, (image, labels)) in dataset.iter().enumerate() {
        write_plane_png(a.out.join(format!("scene_{i:04}.png")), &image.planes()?)?;
        write_label_png(a.out.join(format!("scene_{i:04}_labels.png")), labels)?;
    }
    emit_json(
        Some(&a.out.join("history.json")),
        &json!({ "config": cfg, "loss_history": outcome.loss_history, "pixel_accuracy": accuracy }),
    )?;
    event(
        "trained",
        json!({ "iterations": a.iterations, "final_loss": outcome.last_report, "pixel_accuracy": accuracy }),
    );
    Ok(())
}

pub fn infer_toy(a: &InferToyArgs) -> Result<()> {
    let net = checkpoint::load(&a.checkpoint)?;
    let mut planes = read_plane_png(&a.input)?;
    if planes.len() == 1 {
        planes = vec![planes[0].clone(); 3];
    }
    let (h, w) = planes[0].dims();
    let m = INPUT_MULTIPLE;
    let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    let padded = planes
        .iter()
        .map(|p| p.pad_edge(hp, wp))
        .collect::<Result<Vec<_>>>()?;
    let labels: LabelMap = net.predict(&Tensor::from_planes(&padded)?)?.crop(0, 0, h, w)?;
    write_label_png(&a.out, &labels)?;
    event("infer", json!({ "height": h, "width": w, "categories": net.num_categories }));
    Ok(())
}
