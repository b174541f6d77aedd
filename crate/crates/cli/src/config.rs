//! Run configuration: a plain `key = value` file with `[section]` headers,
//! `#` comments, documented defaults for every key, and rejection of
//! anything unrecognized. `RunConfig::echo` renders the canonical form,
//! which parses back to the identical configuration.

use std::path::PathBuf;

use padlab_core::border::PadKind;
use padlab_core::models::Task;
use padlab_core::synth::{CanvasColor, Pattern, ProbeImages};
use padlab_core::{Error, PaddingMode, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Probe,
    PadCompare,
    StageSweep,
    GridClassify,
    GridSegment,
    DistToBorder,
    RingRegion,
    Dimest,
    ReachMap,
    Report,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Probe,
        Experiment::PadCompare,
        Experiment::StageSweep,
        Experiment::GridClassify,
        Experiment::GridSegment,
        Experiment::DistToBorder,
        Experiment::RingRegion,
        Experiment::Dimest,
        Experiment::ReachMap,
        Experiment::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Probe => "probe",
            Experiment::PadCompare => "pad-compare",
            Experiment::StageSweep => "stage-sweep",
            Experiment::GridClassify => "grid-classify",
            Experiment::GridSegment => "grid-segment",
            Experiment::DistToBorder => "dist-to-border",
            Experiment::RingRegion => "ring-region",
            Experiment::Dimest => "dimest",
            Experiment::ReachMap => "reach-map",
            Experiment::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Result<Experiment> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
                Error::parse(format!(
                    "unknown experiment {s:?}, expected one of {}",
                    names.join("|")
                ))
            })
    }

    /// Probe-family runs train readouts; grid-family runs train task nets.
    fn default_epochs(self) -> usize {
        match self {
            Experiment::Probe | Experiment::PadCompare | Experiment::StageSweep => 15,
            _ => 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Cifar10,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Cifar10 => "cifar10",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    /// The probe reads the image directly.
    None,
    Vgg5,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::None => "none",
            BackboneKind::Vgg5 => "vgg5",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    Summary,
    RingDiff,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Summary => "summary",
            ReportKind::RingDiff => "ring-diff",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataCfg {
    pub source: DataSource,
    pub classes: usize,
    pub train_n: usize,
    pub val_n: usize,
    /// Patch side for grid composition and the patch dataset.
    pub patch: usize,
    /// Input side for backbone classification and probe images.
    pub image_side: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimCfg {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCfg {
    pub padding: PadKind,
    pub pad_amount: usize,
    pub batchnorm: bool,
    pub residual: bool,
    /// 0 disables the cutoff.
    pub rf_limit: usize,
}

impl ModelCfg {
    pub fn padding_mode(&self) -> PaddingMode {
        match self.padding {
            PadKind::None => PaddingMode::none(),
            kind => PaddingMode::new(kind, self.pad_amount),
        }
    }

    pub fn rf_limit_opt(&self) -> Option<usize> {
        (self.rf_limit > 0).then_some(self.rf_limit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeCfg {
    pub backbone: BackboneKind,
    /// Load instead of training when nonempty.
    pub backbone_ckpt: String,
    pub backbone_epochs: usize,
    pub pattern: Pattern,
    pub stripes: usize,
    /// 1-based backbone stages; ignored when backbone = none.
    pub taps: Vec<usize>,
    pub align: usize,
    /// Zero-padding amount of the readout conv.
    pub readout_pad: usize,
    pub images: ProbeImages,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCfg {
    pub k: usize,
    pub canvas: CanvasColor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimestCfg {
    pub pairs: usize,
    /// Grid-net checkpoint to analyze; trains fresh when empty.
    pub checkpoint: String,
    /// Task the analyzed net was (or will be) trained on.
    pub task: Task,
    pub canvases: Vec<CanvasColor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RingsCfg {
    /// Relative border-distance bands in percent, as (lo, hi] intervals.
    pub bands: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareCfg {
    pub modes: Vec<PadKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportCfg {
    pub kind: ReportKind,
    pub runs: Vec<PathBuf>,
    pub baseline: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataCfg,
    pub optim: OptimCfg,
    pub model: ModelCfg,
    pub probe: ProbeCfg,
    pub grid: GridCfg,
    pub dimest: DimestCfg,
    pub rings: RingsCfg,
    pub compare: CompareCfg,
    pub report: ReportCfg,
}

impl RunConfig {
    pub fn default_for(experiment: Experiment) -> RunConfig {
        RunConfig {
            experiment,
            seed: 0,
            out: PathBuf::from(format!("runs/{}", experiment.as_str())),
            data: DataCfg {
                source: DataSource::Synthetic,
                classes: 4,
                train_n: 384,
                val_n: 192,
                patch: 10,
                image_side: 56,
            },
            optim: OptimCfg {
                lr: 0.01,
                momentum: 0.9,
                weight_decay: 1e-4,
                batch: 8,
                epochs: experiment.default_epochs(),
            },
            model: ModelCfg {
                padding: PadKind::Zero,
                pad_amount: 1,
                batchnorm: true,
                residual: false,
                rf_limit: 0,
            },
            probe: ProbeCfg {
                backbone: BackboneKind::None,
                backbone_ckpt: String::new(),
                backbone_epochs: 3,
                pattern: Pattern::H,
                stripes: 4,
                taps: vec![1, 2, 3, 4],
                align: 28,
                readout_pad: 0,
                images: ProbeImages::Noise,
            },
            grid: GridCfg {
                k: 3,
                canvas: CanvasColor::Black,
            },
            dimest: DimestCfg {
                pairs: 2048,
                checkpoint: String::new(),
                task: Task::Classify,
                canvases: vec![CanvasColor::Black, CanvasColor::White, CanvasColor::Mean],
            },
            rings: RingsCfg {
                bands: vec![(0.0, 20.0), (20.0, 40.0), (40.0, 60.0), (60.0, 80.0), (80.0, 100.0)],
            },
            compare: CompareCfg {
                modes: vec![
                    PadKind::Zero,
                    PadKind::Partial,
                    PadKind::Circular,
                    PadKind::Replicate,
                    PadKind::Reflect,
                    PadKind::None,
                ],
            },
            report: ReportCfg {
                kind: ReportKind::Summary,
                runs: Vec::new(),
                baseline: None,
            },
        }
    }

    /// Canonical text form: every key, fixed order. Parsing it yields an
    /// identical configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let canvases = self
            .dimest
            .canvases
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join(",");
        let bands = self
            .rings
            .bands
            .iter()
            .map(|(lo, hi)| format!("{lo}-{hi}"))
            .collect::<Vec<_>>()
            .join(",");
        let modes = self
            .compare
            .modes
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>()
            .join(",");
        let taps = self
            .probe
            .taps
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let runs = self
            .report
            .runs
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        let baseline = self
            .report
            .baseline
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();

        use std::fmt::Write;
        let _ = write!(
            s,
            "[run]\n\
             experiment = {}\n\
             seed = {}\n\
             out = {}\n\
             \n\
             [data]\n\
             source = {}\n\
             classes = {}\n\
             train_n = {}\n\
             val_n = {}\n\
             patch = {}\n\
             image_side = {}\n\
             \n\
             [optim]\n\
             lr = {}\n\
             momentum = {}\n\
             weight_decay = {}\n\
             batch = {}\n\
             epochs = {}\n\
             \n\
             [model]\n\
             padding = {}\n\
             pad_amount = {}\n\
             batchnorm = {}\n\
             residual = {}\n\
             rf_limit = {}\n\
             \n\
             [probe]\n\
             backbone = {}\n\
             backbone_ckpt = {}\n\
             backbone_epochs = {}\n\
             pattern = {}\n\
             stripes = {}\n\
             taps = {}\n\
             align = {}\n\
             readout_pad = {}\n\
             images = {}\n\
             \n\
             [grid]\n\
             k = {}\n\
             canvas = {}\n\
             \n\
             [dimest]\n\
             pairs = {}\n\
             checkpoint = {}\n\
             task = {}\n\
             canvases = {}\n\
             \n\
             [rings]\n\
             bands = {}\n\
             \n\
             [compare]\n\
             modes = {}\n\
             \n\
             [report]\n\
             kind = {}\n\
             runs = {}\n\
             baseline = {}\n",
            self.experiment.as_str(),
            self.seed,
            self.out.display(),
            self.data.source.as_str(),
            self.data.classes,
            self.data.train_n,
            self.data.val_n,
            self.data.patch,
            self.data.image_side,
            self.optim.lr,
            self.optim.momentum,
            self.optim.weight_decay,
            self.optim.batch,
            self.optim.epochs,
            self.model.padding.as_str(),
            self.model.pad_amount,
            self.model.batchnorm,
            self.model.residual,
            self.model.rf_limit,
            self.probe.backbone.as_str(),
            self.probe.backbone_ckpt,
            self.probe.backbone_epochs,
            self.probe.pattern.as_str(),
            self.probe.stripes,
            taps,
            self.probe.align,
            self.probe.readout_pad,
            self.probe.images.as_str(),
            self.grid.k,
            self.grid.canvas.as_str(),
            self.dimest.pairs,
            self.dimest.checkpoint,
            self.dimest.task.as_str(),
            canvases,
            bands,
            modes,
            self.report.kind.as_str(),
            runs,
            baseline,
        );
        s
    }
}

/// Parse a config file. `cli_experiment` is the subcommand name; a file may
/// also name the experiment, and the two must agree.
pub fn parse_config(text: &str, cli_experiment: Experiment) -> Result<RunConfig> {
    let mut cfg = RunConfig::default_for(cli_experiment);
    let mut section = String::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = ln + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(format!("line {n}: unterminated section header")))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("line {n}: expected key = value")))?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, &section, key, value)
            .map_err(|e| Error::parse(format!("line {n}: {e}")))?;
    }
    if cfg.experiment != cli_experiment {
        return Err(Error::parse(format!(
            "config names experiment {} but {} was invoked",
            cfg.experiment.as_str(),
            cli_experiment.as_str()
        )));
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut RunConfig, section: &str, key: &str, value: &str) -> Result<()> {
    match (section, key) {
        ("run", "experiment") => cfg.experiment = Experiment::parse(value)?,
        ("run", "seed") => cfg.seed = num(value, "seed")?,
        ("run", "out") => cfg.out = PathBuf::from(value),
        ("data", "source") => {
            cfg.data.source = match value {
                "synthetic" => DataSource::Synthetic,
                "cifar10" => DataSource::Cifar10,
                other => {
                    return Err(Error::parse(format!(
                        "unknown source {other:?}, expected synthetic|cifar10"
                    )))
                }
            }
        }
        ("data", "classes") => cfg.data.classes = num(value, "classes")?,
        ("data", "train_n") => cfg.data.train_n = num(value, "train_n")?,
        ("data", "val_n") => cfg.data.val_n = num(value, "val_n")?,
        ("data", "patch") => cfg.data.patch = num(value, "patch")?,
        ("data", "image_side") => cfg.data.image_side = num(value, "image_side")?,
        ("optim", "lr") => cfg.optim.lr = float(value, "lr")?,
        ("optim", "momentum") => cfg.optim.momentum = float(value, "momentum")?,
        ("optim", "weight_decay") => cfg.optim.weight_decay = float(value, "weight_decay")?,
        ("optim", "batch") => cfg.optim.batch = num(value, "batch")?,
        ("optim", "epochs") => cfg.optim.epochs = num(value, "epochs")?,
        ("model", "padding") => cfg.model.padding = PadKind::parse(value)?,
        ("model", "pad_amount") => cfg.model.pad_amount = num(value, "pad_amount")?,
        ("model", "batchnorm") => cfg.model.batchnorm = boolean(value, "batchnorm")?,
        ("model", "residual") => cfg.model.residual = boolean(value, "residual")?,
        ("model", "rf_limit") => cfg.model.rf_limit = num(value, "rf_limit")?,
        ("probe", "backbone") => {
            cfg.probe.backbone = match value {
                "none" => BackboneKind::None,
                "vgg5" => BackboneKind::Vgg5,
                other => {
                    return Err(Error::parse(format!(
                        "unknown backbone {other:?}, expected none|vgg5"
                    )))
                }
            }
        }
        ("probe", "backbone_ckpt") => cfg.probe.backbone_ckpt = value.to_string(),
        ("probe", "backbone_epochs") => cfg.probe.backbone_epochs = num(value, "backbone_epochs")?,
        ("probe", "pattern") => cfg.probe.pattern = Pattern::parse(value)?,
        ("probe", "stripes") => cfg.probe.stripes = num(value, "stripes")?,
        ("probe", "taps") => cfg.probe.taps = num_list(value, "taps")?,
        ("probe", "align") => cfg.probe.align = num(value, "align")?,
        ("probe", "readout_pad") => cfg.probe.readout_pad = num(value, "readout_pad")?,
        ("probe", "images") => cfg.probe.images = ProbeImages::parse(value)?,
        ("grid", "k") => cfg.grid.k = num(value, "k")?,
        ("grid", "canvas") => cfg.grid.canvas = CanvasColor::parse(value)?,
        ("dimest", "pairs") => cfg.dimest.pairs = num(value, "pairs")?,
        ("dimest", "checkpoint") => cfg.dimest.checkpoint = value.to_string(),
        ("dimest", "task") => cfg.dimest.task = Task::parse(value)?,
        ("dimest", "canvases") => {
            let mut out = Vec::new();
            for part in split_list(value) {
                let c = CanvasColor::parse(part)?;
                if matches!(c, CanvasColor::Rgb(_)) {
                    return Err(Error::parse(
                        "canvases accepts named colors only (black|white|mean)".to_string(),
                    ));
                }
                out.push(c);
            }
            if out.is_empty() {
                return Err(Error::parse("canvases must not be empty".to_string()));
            }
            cfg.dimest.canvases = out;
        }
        ("rings", "bands") => {
            let mut bands = Vec::new();
            for part in split_list(value) {
                let (lo, hi) = part.split_once('-').ok_or_else(|| {
                    Error::parse(format!("band {part:?} must look like lo-hi"))
                })?;
                bands.push((float(lo.trim(), "band lo")?, float(hi.trim(), "band hi")?));
            }
            if bands.is_empty() {
                return Err(Error::parse("bands must not be empty".to_string()));
            }
            cfg.rings.bands = bands;
        }
        ("compare", "modes") => {
            let mut modes = Vec::new();
            for part in split_list(value) {
                modes.push(PadKind::parse(part)?);
            }
            if modes.is_empty() {
                return Err(Error::parse("modes must not be empty".to_string()));
            }
            cfg.compare.modes = modes;
        }
        ("report", "kind") => {
            cfg.report.kind = match value {
                "summary" => ReportKind::Summary,
                "ring-diff" => ReportKind::RingDiff,
                other => {
                    return Err(Error::parse(format!(
                        "unknown report kind {other:?}, expected summary|ring-diff"
                    )))
                }
            }
        }
        ("report", "runs") => {
            cfg.report.runs = split_list(value).map(PathBuf::from).collect();
        }
        ("report", "baseline") => {
            cfg.report.baseline = (!value.is_empty()).then(|| PathBuf::from(value));
        }
        ("", key) => {
            return Err(Error::parse(format!(
                "key {key:?} appears before any [section]"
            )))
        }
        (section, key) => {
            return Err(Error::parse(format!("unknown key {section}.{key}")));
        }
    }
    Ok(())
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(format!("{key} wants an integer, got {value:?}")))
}

fn float(value: &str, key: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::parse(format!("{key} wants a number, got {value:?}")))
}

fn boolean(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::parse(format!(
            "{key} wants true or false, got {value:?}"
        ))),
    }
}

fn num_list(value: &str, key: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in split_list(value) {
        out.push(num(part, key)?);
    }
    if out.is_empty() {
        return Err(Error::parse(format!("{key} must not be empty")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_and_round_trip() {
        for exp in Experiment::ALL {
            let cfg = RunConfig::default_for(exp);
            let echoed = cfg.echo();
            let back = parse_config(&echoed, exp).unwrap();
            assert_eq!(back, cfg, "{}", exp.as_str());
        }
    }

    #[test]
    fn overrides_round_trip_through_the_echo() {
        let text = "\
[run]
seed = 42
[data]
train_n = 16
[optim]
lr = 0.025
epochs = 2
[model]
padding = none
[grid]
k = 7
canvas = 0.25,0.5,0.75
[rings]
bands = 0-50,50-100
";
        let cfg = parse_config(text, Experiment::GridClassify).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.optim.lr, 0.025);
        assert_eq!(cfg.model.padding, PadKind::None);
        assert_eq!(cfg.grid.k, 7);
        assert_eq!(cfg.rings.bands, vec![(0.0, 50.0), (50.0, 100.0)]);
        let back = parse_config(&cfg.echo(), Experiment::GridClassify).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let err = parse_config("[data]\nbogus = 1\n", Experiment::Probe).unwrap_err();
        assert!(err.to_string().contains("data.bogus"), "{err}");
        let err = parse_config("[nosuch]\nx = 1\n", Experiment::Probe).unwrap_err();
        assert!(err.to_string().contains("nosuch.x"), "{err}");
        let err = parse_config("loose = 1\n", Experiment::Probe).unwrap_err();
        assert!(err.to_string().contains("before any"), "{err}");
    }

    #[test]
    fn experiment_mismatch_is_rejected() {
        let err = parse_config("[run]\nexperiment = probe\n", Experiment::Dimest).unwrap_err();
        assert!(err.to_string().contains("probe"), "{err}");
    }

    #[test]
    fn epochs_default_follows_the_family() {
        assert_eq!(RunConfig::default_for(Experiment::Probe).optim.epochs, 15);
        assert_eq!(RunConfig::default_for(Experiment::GridClassify).optim.epochs, 10);
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let err = parse_config("[run]\nseed whoops\n", Experiment::Probe).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
