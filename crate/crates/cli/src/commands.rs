use std::path::{Path, PathBuf};

use idan_core::data::{
    augment, load_png, read_dataset, save_gray_png, save_mask_png, save_rgb_png, split_every_k, synth_dataset,
    tile_counts, tile_pair, write_dataset, DatasetEntry, Origin, SamplePair, Split, TileSpec,
};
use idan_core::diffmap::{build_ed_map, build_fd_map, fd_map_from_features, load_feature_file, random_cnn_extractor};
use idan_core::imgproc::{minmax_normalize, BinaryMask, FloatImage, RgbImage};
use idan_core::model::{flop_count, load_checkpoint, IdanModel, UNetConfig};
use idan_core::tensor::{write_idtn, Tensor};
use idan_core::training::{evaluate, predict_masks, prepare, train_prepared};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExtractorSpec, RunConfig};
use crate::{CliError, DiffmapArgs, EvalArgs, FlopsArgs, InferArgs, SynthArgs, TileArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn sidecar(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Core(idan_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

pub fn tile(args: TileArgs) -> Result<()> {
    let base = load_config(args.config.as_deref())?.tile;
    let spec = TileSpec {
        window: args.window.unwrap_or(base.window),
        stride: args.stride.unwrap_or(base.stride),
        test_every_k: args.test_every.unwrap_or(base.test_every_k),
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if args.dry_run {
        let (w, h) = (args.width.unwrap_or(0), args.height.unwrap_or(0));
        let c = tile_counts(w, h, &spec)?;
        if c.tiles == 0 {
            log::warn!("raster {w}x{h} is smaller than the {} px window; no tiles produced", spec.window);
        }
        println!("tiles={} train={} test={}", c.tiles, c.train, c.test);
        return Ok(());
    }
    let need = |p: Option<PathBuf>, flag: &str| p.ok_or_else(|| CliError::Usage(format!("--{flag} is required")));
    let a = load_png(need(args.a, "a")?)?;
    let b = load_png(need(args.b, "b")?)?;
    let label = idan_core::data::load_mask_png(need(args.label, "label")?)?;
    let out = need(args.out, "out")?;
    let tiles = tile_pair(&a, &b, &label, &spec)?;
    let n = tiles.len();
    let (train, test) = split_every_k(tiles, spec.test_every_k)?;
    let (n_train, n_test) = (train.len(), test.len());
    let entry = |split: Split| {
        move |s: SamplePair| {
            let id = match s.origin {
                Origin::Tile { x, y } => format!("tile_{y:06}_{x:06}"),
                _ => unreachable!("tile_pair yields tile origins"),
            };
            DatasetEntry { id, split, sample: s }
        }
    };
    let mut entries: Vec<DatasetEntry> = train.into_iter().map(entry(Split::Train)).collect();
    entries.extend(test.into_iter().map(entry(Split::Test)));
    write_dataset(&out, &entries)?;
    println!("tiles={n} train={n_train} test={n_test}");
    Ok(())
}

/// Mean over channels of a `(C, h, w)` map.
fn channel_mean(t: &Tensor<f32>) -> Result<FloatImage> {
    let [c, h, w] = *t.shape() else {
        return Err(CliError::Core(idan_core::Error::InvalidArgument(format!(
            "expected a (C, h, w) map, got {:?}",
            t.shape()
        ))));
    };
    let plane = h * w;
    let mut acc = vec![0.0f32; plane];
    for ch in 0..c {
        for (a, &v) in acc.iter_mut().zip(&t.data()[ch * plane..(ch + 1) * plane]) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|v| *v /= c as f32);
    Ok(FloatImage::new(w, h, acc)?)
}

pub fn diffmap(args: DiffmapArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(e) = args.edge {
        cfg.diffmap.edge = e;
    }
    if let Some(x) = args.extractor {
        cfg.diffmap.extractor = x;
    }
    if let Some(k) = args.kernel {
        cfg.diffmap.kernel = k;
    }
    let extractor: ExtractorSpec = cfg.diffmap.extractor.parse()?;
    let kernel = cfg.kernel().map_err(usage)?;
    let edge = cfg.edge_operator().map_err(usage)?;

    let a = load_png(&args.a)?;
    let b = load_png(&args.b)?;
    let fd = match extractor {
        ExtractorSpec::Random { seed, channels } => {
            let ex = random_cnn_extractor(seed, channels).map_err(|e| CliError::Usage(e.to_string()))?;
            build_fd_map(&a, &b, &ex, &kernel)?
        }
        ExtractorSpec::Files(files) => {
            let (fa, fb) = match files.as_slice() {
                [both] => {
                    let t = idan_core::tensor::read_idtn(both)?;
                    match *t.shape() {
                        [2, _, _, _] => {
                            let mut parts = t.unstack();
                            let fb = parts.pop().expect("two entries");
                            (parts.pop().expect("two entries"), fb)
                        }
                        _ => {
                            return Err(CliError::Core(idan_core::Error::Data(format!(
                                "{both}: a single feature file must hold (2, C, h, w), got {:?}",
                                t.shape()
                            ))))
                        }
                    }
                }
                [fa, fb] => (load_feature_file(fa)?, load_feature_file(fb)?),
                _ => unreachable!("parser allows one or two files"),
            };
            fd_map_from_features(&fa, &fb, &kernel)?
        }
    };
    let ed = build_ed_map(&a, &b, &edge, &kernel)?;

    create_dir(&args.out)?;
    write_idtn(fd.tensor(), args.out.join("fd.idtn"))?;
    save_mask_png(ed.mask(), args.out.join("ed.png"))?;
    save_gray_png(&minmax_normalize(&channel_mean(fd.tensor())?), args.out.join("fd_vis.png"))?;
    println!(
        "fd={:?} ed_pixels={} out={}",
        fd.tensor().shape(),
        ed.mask().count_ones(),
        args.out.display()
    );
    Ok(())
}

fn usage(e: CliError) -> CliError {
    match e {
        CliError::Config(m) => CliError::Usage(m),
        other => other,
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    cfg.train.checkpoint = Some(args.out.clone());
    cfg.validate().map_err(usage)?;

    let entries = read_dataset(&args.data, None)?;
    let mut train_set: Vec<SamplePair> = Vec::new();
    let mut val_set: Vec<SamplePair> = Vec::new();
    for e in entries {
        match e.split {
            Split::Train => train_set.push(e.sample),
            Split::Val => val_set.push(e.sample),
            Split::Test => {}
        }
    }
    if train_set.is_empty() {
        return Err(CliError::Core(idan_core::Error::Data(format!(
            "{}: no training samples",
            args.data.display()
        ))));
    }
    if cfg.augment.copies > 0 {
        let params = cfg.augment.params();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let originals = train_set.clone();
        for s in &originals {
            for _ in 0..cfg.augment.copies {
                train_set.push(augment(s, &params, &mut rng)?);
            }
        }
    }

    let priors = cfg.prior_builder()?;
    let data = prepare(&train_set, priors.as_ref())?;
    let val = if val_set.is_empty() {
        None
    } else {
        Some(prepare(&val_set, priors.as_ref())?)
    };
    let mut model = IdanModel::<f32>::new(cfg.model_config()?, cfg.train.seed)?;
    train_prepared(&mut model, &data, &cfg.train, val.as_deref(), &mut |r| println!("{r}"))?;
    // the sidecar sits beside the checkpoint, so its path is not recorded
    cfg.train.checkpoint = None;
    let side = sidecar(&args.out);
    std::fs::write(&side, cfg.to_toml()).map_err(|e| CliError::Core(idan_core::Error::Io { path: side, source: e }))?;
    Ok(())
}

fn load_model(ckpt: &Path) -> Result<(RunConfig, IdanModel<f32>)> {
    let side = sidecar(ckpt);
    if !side.exists() {
        return Err(CliError::Config(format!("{}: missing run config beside the checkpoint", side.display())));
    }
    let cfg = RunConfig::load(&side)?;
    let model = IdanModel::from_named(cfg.model_config()?, load_checkpoint(ckpt)?)?;
    Ok((cfg, model))
}

fn threshold(cli: Option<f32>, cfg: &RunConfig) -> Result<f32> {
    let t = cli.unwrap_or(cfg.train.threshold);
    if !(t > 0.0 && t < 1.0) {
        return Err(CliError::Usage(format!("threshold {t} outside (0, 1)")));
    }
    Ok(t)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (cfg, model) = load_model(&args.ckpt)?;
    let t = threshold(args.threshold, &cfg)?;
    let test: Vec<SamplePair> = read_dataset(&args.data, Some(Split::Test))?
        .into_iter()
        .map(|e| e.sample)
        .collect();
    if test.is_empty() {
        return Err(CliError::Core(idan_core::Error::Data(format!(
            "{}: no test samples",
            args.data.display()
        ))));
    }
    let data = prepare(&test, cfg.prior_builder()?.as_ref())?;
    let report = evaluate(&model, &data, t, cfg.train.batch_size)?;
    println!("{report}");
    Ok(())
}

/// Changed pixels blended half-way towards red over the after image.
fn overlay(img: &RgbImage, mask: &BinaryMask) -> RgbImage {
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        if mask.get(x, y) {
            [0.5 * p[0] + 0.5, 0.5 * p[1], 0.5 * p[2]]
        } else {
            p
        }
    })
}

pub fn infer(args: InferArgs) -> Result<()> {
    let (cfg, model) = load_model(&args.ckpt)?;
    let t = threshold(args.threshold, &cfg)?;
    let a = load_png(&args.a)?;
    let b = load_png(&args.b)?;
    let empty = BinaryMask::zeros(a.width(), a.height());
    let pair = SamplePair::new(a, b, empty, Origin::File(args.a.display().to_string()))?;
    let data = prepare(std::slice::from_ref(&pair), cfg.prior_builder()?.as_ref())?;
    let mask = predict_masks(&model, &data, t, 1)?.pop().expect("one sample");
    save_mask_png(&mask, &args.out)?;
    let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let over = args.out.with_file_name(format!("{stem}_overlay.png"));
    save_rgb_png(&overlay(&pair.image_after, &mask), &over)?;
    println!("changed={} mask={} overlay={}", mask.count_ones(), args.out.display(), over.display());
    Ok(())
}

pub fn flops(args: FlopsArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let mut model = cfg.model_config()?;
    if args.full_scale {
        model.unet = UNetConfig::full_scale();
    }
    if args.no_modules {
        model.fda = false;
        model.ec = false;
    }
    let report = flop_count(&model, (args.height, args.width)).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{report}");
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(cfg.data.seed);
    let count = args.count.unwrap_or(cfg.data.count);
    let size = args.size.unwrap_or(cfg.data.size);
    let every = args.test_every.unwrap_or(cfg.tile.test_every_k);
    let samples = synth_dataset(seed, count, size).map_err(|e| CliError::Usage(e.to_string()))?;
    let indexed: Vec<(usize, SamplePair)> = samples.into_iter().enumerate().collect();
    let (train, test) = split_every_k(indexed, every).map_err(|e| CliError::Usage(e.to_string()))?;
    let (n_train, n_test) = (train.len(), test.len());
    let mut entries: Vec<DatasetEntry> = Vec::with_capacity(count);
    for (split, part) in [(Split::Train, train), (Split::Test, test)] {
        entries.extend(part.into_iter().map(|(i, sample)| DatasetEntry {
            id: format!("synth_{i:05}"),
            split,
            sample,
        }));
    }
    write_dataset(&args.out, &entries)?;
    println!("samples={count} train={n_train} test={n_test} out={}", args.out.display());
    Ok(())
}
