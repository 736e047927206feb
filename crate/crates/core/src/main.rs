use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stripfusion::balance::{
    kl_alignment, reliability, thermal_reliability_percentage, total_loss,
    visible_reliability_percentage,
};
use stripfusion::evaluation::{evaluate_matrix, FrameRecord, Split};
use stripfusion::fusion::{strip_fusion_forward, FusionConfig, FusionWeights};
use stripfusion::io::{
    self, format_detections, format_reports, parse_reports, read_annotations, read_detections,
    read_tensors, read_weights, write_tensors, write_weights, Manifest, ReportLine, RunConfig,
};
use stripfusion::postprocess::{run_strategy, FusionStrategy};
use stripfusion::tensor::NdArray;
use stripfusion::{BBox, Detection, Error, Modality, Result, Scale, Tensor4};

#[derive(Parser)]
#[command(name = "stripfusion", version, about = "Visible/thermal fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Post-process raw detections with one output strategy.
    Fuse {
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Miss-rate table over settings, day/night splits and strategies.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Raw visible/thermal detections.
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Reliabilities and KL alignment loss for one frame.
    KlLoss {
        /// Tensor file with `vis.<scale>` / `ir.<scale>` maps, or a single
        /// `vis` / `ir` pair used for `--scale`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Restrict detections to this frame.
        #[arg(long)]
        frame: Option<String>,
        #[arg(long, default_value = "s80")]
        scale: Scale,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Thermal reliability percentage.
    Reliability {
        /// Precomputed `frame scale r_v r_t overlap` lines.
        #[arg(long, conflicts_with_all = ["manifest", "detections"])]
        reports: Option<PathBuf>,
        #[arg(long, requires = "detections")]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        detections: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the fusion module on a `vis` / `ir` tensor file.
    Forward {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic random weights for a feature shape.
    GenWeights {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "3,8,16,16", value_parser = parse_shape)]
        shape: [usize; 4],
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic random `vis` / `ir` input tensors.
    GenInput {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "3,8,16,16", value_parser = parse_shape)]
        shape: [usize; 4],
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<FusionStrategy>,
    #[arg(long)]
    iou_thres: Option<f64>,
    #[arg(long)]
    conf_thres_v: Option<f64>,
    #[arg(long)]
    conf_thres_t: Option<f64>,
    #[arg(long)]
    nms_thres: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_top: Option<usize>,
    /// Comma-separated setting names.
    #[arg(long)]
    setting: Option<String>,
    /// Comma-separated splits: all, day, night.
    #[arg(long)]
    split: Option<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        let pp = &mut cfg.postprocess;
        if let Some(s) = self.strategy {
            pp.strategy = s;
        }
        if let Some(v) = self.iou_thres {
            pp.iou_thres = v;
        }
        if let Some(v) = self.conf_thres_v {
            pp.conf_threshold_v = v;
        }
        if let Some(v) = self.conf_thres_t {
            pp.conf_threshold_t = v;
        }
        if let Some(v) = self.nms_thres {
            pp.nms_threshold = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.n_top {
            cfg.n_top = v;
        }
        if let Some(s) = &self.setting {
            cfg.set("settings", s)?;
        }
        if let Some(s) = &self.split {
            cfg.set("splits", s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => io::write_bytes(p, text.as_bytes()),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad dimension `{t}`")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected four comma-separated dimensions F,C,H,W".to_string())
}

fn split_modalities(dets: &[Detection]) -> (Vec<Detection>, Vec<Detection>) {
    let vis = dets.iter().filter(|d| d.modality == Modality::Visible).cloned().collect();
    let ir = dets.iter().filter(|d| d.modality == Modality::Thermal).cloned().collect();
    (vis, ir)
}

fn by_scale(dets: &[Detection], scale: Scale) -> Vec<Detection> {
    dets.iter().filter(|d| d.scale == scale).cloned().collect()
}

fn required_boxes(gts: &[stripfusion::evaluation::GroundTruthBox]) -> Vec<BBox> {
    gts.iter().filter(|g| !g.ignore).map(|g| g.bbox).collect()
}

fn fuse(detections: &Path, run: &RunArgs) -> Result<()> {
    let cfg = run.load()?;
    let (vis, ir) = split_modalities(&read_detections(detections)?);
    let out = run_strategy(&vis, &ir, &cfg.postprocess)?;
    let mut text = format!("# stripfusion fuse\n{}", cfg.header());
    text.push_str(&format_detections(&out.detections));
    run.emit(&text)
}

fn eval(manifest: &Path, detections: &Path, run: &RunArgs) -> Result<()> {
    let cfg = run.load()?;
    let manifest = Manifest::read(manifest)?;
    let mut records = manifest.load_records()?;
    let (vis, ir) = split_modalities(&read_detections(detections)?);
    let strategies: Vec<FusionStrategy> = match run.strategy {
        Some(s) => vec![s],
        None => FusionStrategy::ALL.to_vec(),
    };
    for &strategy in &strategies {
        let mut pp = cfg.postprocess;
        pp.strategy = strategy;
        let out = run_strategy(&vis, &ir, &pp)?;
        let mut per_frame: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for d in out.detections {
            per_frame.entry(d.frame_id.clone()).or_default().push(d);
        }
        for r in records.iter_mut() {
            let dets = per_frame.remove(&r.frame_id).unwrap_or_default();
            r.detections.insert(strategy, dets);
        }
    }
    let table = evaluate_matrix(&records, &strategies, &cfg.eval_settings(), &cfg.splits)?;
    let (day, night) = count_splits(&records);
    let mut text = format!(
        "# stripfusion eval\n# frames_evaluated = {}\n# frames_day = {day}\n# frames_night = {night}\n# sequence_frames = {}\n# sequence_stride = {}\n",
        records.len(),
        manifest.frames,
        manifest.stride
    );
    text.push_str(&cfg.header());
    text.push_str(&table.to_tsv());
    run.emit(&text)
}

fn count_splits(records: &[FrameRecord]) -> (usize, usize) {
    let day = records.iter().filter(|r| Split::Day.includes(r.time_of_day)).count();
    (day, records.len() - day)
}

fn feature_pairs(path: &Path, fallback: Scale) -> Result<Vec<(Scale, Tensor4, Tensor4)>> {
    let mut named: BTreeMap<String, NdArray> = read_tensors(path)?.into_iter().collect();
    let mut take = |name: &str| -> Result<Option<Tensor4>> {
        named.remove(name).map(Tensor4::try_from).transpose()
    };
    let mut out = Vec::new();
    for s in Scale::ALL {
        if let (Some(v), Some(t)) = (take(&format!("vis.{s}"))?, take(&format!("ir.{s}"))?) {
            out.push((s, v, t));
        }
    }
    if out.is_empty() {
        match (take("vis")?, take("ir")?) {
            (Some(v), Some(t)) => out.push((fallback, v, t)),
            _ => return Err(Error::MissingWeight("vis / ir feature maps".into())),
        }
    }
    Ok(out)
}

fn kl(
    features: &Path,
    detections: &Path,
    annotations: &Path,
    frame: Option<&str>,
    scale: Scale,
    run: &RunArgs,
) -> Result<()> {
    let cfg = run.load()?;
    let mut dets = read_detections(detections)?;
    if let Some(f) = frame {
        dets.retain(|d| d.frame_id == f);
    }
    let (vis, ir) = split_modalities(&dets);
    let gts = required_boxes(&read_annotations(annotations, (1.0, 1.0))?);
    let mut text = format!("# stripfusion kl-loss\n{}", cfg.header());
    text.push_str("scale\tr_v\tr_t\treference\tn\tl_kl\n");
    let mut total = 0.0;
    for (s, fv, ft) in feature_pairs(features, scale)? {
        let o = kl_alignment(
            &by_scale(&vis, s),
            &by_scale(&ir, s),
            &gts,
            &fv,
            &ft,
            cfg.n_top,
            cfg.stride(s),
        )?;
        total += o.loss;
        text.push_str(&format!(
            "{s}\t{}\t{}\t{}\t{}\t{}\n",
            o.report.r_v,
            o.report.r_t,
            o.report.reference,
            o.report.n_used(),
            o.loss
        ));
    }
    text.push_str(&format!(
        "# l_kl = {total}\n# beta_l_kl = {}\n",
        total_loss(0.0, 0.0, 0.0, 0.0, total, cfg.beta)
    ));
    run.emit(&text)
}

fn reliability_cmd(
    reports: Option<&Path>,
    manifest: Option<&Path>,
    detections: Option<&Path>,
    run: &RunArgs,
) -> Result<()> {
    let cfg = run.load()?;
    let lines = match (reports, manifest, detections) {
        (Some(p), _, _) => parse_reports(&io::read_text(p)?, p)?,
        (None, Some(m), Some(d)) => {
            let records = Manifest::read(m)?.load_records()?;
            let (vis, ir) = split_modalities(&read_detections(d)?);
            let mut lines = Vec::new();
            for r in &records {
                let gts = required_boxes(&r.gts);
                if gts.is_empty() {
                    continue;
                }
                let fv: Vec<Detection> = vis.iter().filter(|d| d.frame_id == r.frame_id).cloned().collect();
                let ft: Vec<Detection> = ir.iter().filter(|d| d.frame_id == r.frame_id).cloned().collect();
                for s in Scale::ALL {
                    let rep = reliability(&by_scale(&fv, s), &by_scale(&ft, s), &gts, cfg.n_top)?;
                    lines.push(ReportLine {
                        frame_id: r.frame_id.clone(),
                        scale: s,
                        r_v: rep.r_v,
                        r_t: rep.r_t,
                        any_overlap: rep.any_overlap,
                    });
                }
            }
            lines
        }
        _ => {
            return Err(Error::InvalidConfig {
                key: "reliability".into(),
                message: "pass --reports, or --manifest with --detections".into(),
            })
        }
    };
    let reports: Vec<_> = lines.iter().map(ReportLine::report).collect();
    let thermal = thermal_reliability_percentage(reports.iter().map(Some))?;
    let mut text = format!(
        "# stripfusion reliability\n# instances = {}\n# thermal_percent = {thermal}\n# visible_percent = {}\n",
        lines.len(),
        visible_reliability_percentage(thermal)
    );
    text.push_str(&format_reports(&lines));
    run.emit(&text)
}

fn forward(input: &Path, weights: &Path, out: &Path) -> Result<()> {
    let weights = read_weights(weights)?;
    let mut named: BTreeMap<String, NdArray> = read_tensors(input)?.into_iter().collect();
    let mut take = |name: &str| -> Result<Tensor4> {
        let t = named
            .remove(name)
            .ok_or_else(|| Error::MissingWeight(name.into()))?;
        Tensor4::try_from(t)
    };
    let (vis, ir) = (take("vis")?, take("ir")?);
    let (v, t) = strip_fusion_forward(&vis, &ir, &weights)?;
    write_tensors(out, &[("vis".into(), v.into()), ("ir".into(), t.into())])
}

fn gen_weights(
    seed: u64,
    shape: [usize; 4],
    patch: Option<usize>,
    groups: Option<usize>,
    out: &Path,
) -> Result<()> {
    let [f, c, h, w] = shape;
    let mut cfg = FusionConfig::for_shape(f, c, h, w);
    if let Some(p) = patch {
        cfg.patch = p;
    }
    if let Some(g) = groups {
        cfg.cgsfmm_groups = g;
    }
    write_weights(out, &FusionWeights::seeded(&cfg, seed)?)
}

fn gen_input(seed: u64, shape: [usize; 4], out: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vis = Tensor4::random(shape, 1.0, &mut rng);
    let ir = Tensor4::random(shape, 1.0, &mut rng);
    write_tensors(out, &[("vis".into(), vis.into()), ("ir".into(), ir.into())])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse { detections, run } => fuse(&detections, &run),
        Command::Eval {
            manifest,
            detections,
            run,
        } => eval(&manifest, &detections, &run),
        Command::KlLoss {
            features,
            detections,
            annotations,
            frame,
            scale,
            run,
        } => kl(&features, &detections, &annotations, frame.as_deref(), scale, &run),
        Command::Reliability {
            reports,
            manifest,
            detections,
            run,
        } => reliability_cmd(reports.as_deref(), manifest.as_deref(), detections.as_deref(), &run),
        Command::Forward {
            input,
            weights,
            out,
        } => forward(&input, &weights, &out),
        Command::GenWeights {
            seed,
            shape,
            patch,
            groups,
            out,
        } => gen_weights(seed, shape, patch, groups, &out),
        Command::GenInput { seed, shape, out } => gen_input(seed, shape, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
