//! Declarative project file and the objects it resolves to.

use std::path::{Path, PathBuf};

use flagtune_core::active::AlSettings;
use flagtune_core::executor::{Evaluator, ProcessExecutor, TargetSpec, VirtualExecutor, VirtualTarget};
use flagtune_core::featsel::LassoScaling;
use flagtune_core::flagspace::{parse_flag_dump, FlagDecl, FlagOverride, FlagSpace, GroupRule};
use flagtune_core::surrogate::Direction;
use flagtune_core::tuners::{Algorithm, TuneSettings};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagSource {
    /// `-XX:+PrintFlagsFinal` style dump.
    pub dump: Option<PathBuf>,
    /// Declarative flag-space document.
    pub declarative: Option<PathBuf>,
    /// Flags declared inline.
    #[serde(default)]
    pub flag: Vec<FlagDecl>,
    #[serde(default)]
    pub group_rules: Vec<GroupRule>,
    pub active_groups: Option<Vec<String>>,
    #[serde(default)]
    pub overrides: Vec<FlagOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomVirtual {
    pub relevant: usize,
    #[serde(default = "default_w_lo")]
    pub w_lo: f64,
    #[serde(default = "default_w_hi")]
    pub w_hi: f64,
    pub seed: u64,
}

fn default_w_lo() -> f64 {
    0.5
}

fn default_w_hi() -> f64 {
    2.0
}

fn default_base() -> f64 {
    1.0
}

/// Synthetic quadratic target over the flag encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualConfig {
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "default_base")]
    pub base: f64,
    pub relevant: Option<Vec<usize>>,
    pub centers: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub random: Option<RandomVirtual>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetConfig {
    Process(TargetSpec),
    Virtual(VirtualConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub metric: String,
    #[serde(default)]
    pub direction: Direction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub lambda: f64,
    /// When set, λ is chosen from this grid by cross-validation.
    pub grid: Option<Vec<f64>>,
    pub folds: usize,
    pub threshold: f64,
    pub scaling: LassoScaling,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { lambda: 0.01, grid: None, folds: 5, threshold: 0.0, scaling: LassoScaling::PerSample, tol: 1e-6, max_sweeps: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub algorithm: Algorithm,
    #[serde(flatten)]
    pub settings: TuneSettings,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { algorithm: Algorithm::Bo, settings: TuneSettings::default() }
    }
}

/// Contents of the project file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub flags: FlagSource,
    pub target: TargetConfig,
    pub objective: Objective,
    #[serde(default)]
    pub al: AlSettings,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub tune: TuneConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A loaded project: configuration with paths resolved and the flag space
/// built.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub space: FlagSpace,
    pub out_dir: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Project {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let config: ProjectConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(config, &base)
    }

    /// Builds a project from an already parsed configuration; relative
    /// paths are taken against `base`.
    pub fn from_config(mut config: ProjectConfig, base: &Path) -> Result<Self> {
        let space = build_space(&config.flags, base)?;
        if let TargetConfig::Process(spec) = &mut config.target {
            if let Some(dir) = &spec.working_dir {
                spec.working_dir = Some(resolve(base, dir));
            } else {
                spec.working_dir = Some(base.to_path_buf());
            }
            spec.validate()?;
            if !spec.probes.contains(&config.objective.metric) {
                return Err(CliError::Config(format!(
                    "metric `{}` is not among the target probes {:?}",
                    config.objective.metric, spec.probes
                )));
            }
        }
        config.al.budget.validate()?;
        config.tune.settings.validate()?;
        let out_dir = resolve(base, &config.out_dir);
        Ok(Self { config, space, out_dir })
    }

    pub fn metric(&self) -> &str {
        &self.config.objective.metric
    }

    pub fn direction(&self) -> Direction {
        self.config.objective.direction
    }

    /// Evaluator for the configured target. Process targets must resolve to
    /// an existing program.
    pub fn evaluator(&self) -> Result<Box<dyn Evaluator>> {
        match &self.config.target {
            TargetConfig::Process(spec) => {
                spec.resolve_program()?;
                Ok(Box::new(ProcessExecutor::new(spec.clone(), self.space.clone())?))
            }
            TargetConfig::Virtual(v) => {
                let vt = virtual_target(v, self.space.dim())?;
                Ok(Box::new(VirtualExecutor::new(vt, self.space.clone(), self.metric())?))
            }
        }
    }
}

fn virtual_target(v: &VirtualConfig, dim: usize) -> Result<VirtualTarget> {
    let vt = match (&v.random, &v.relevant, &v.centers, &v.weights) {
        (Some(r), None, None, None) => VirtualTarget::random(dim, r.relevant, r.w_lo, r.w_hi, v.noise_sd, v.base, r.seed)?,
        (None, Some(s), Some(o), Some(a)) => VirtualTarget::new(dim, s.clone(), o.clone(), a.clone(), v.noise_sd, v.base)?,
        _ => {
            return Err(CliError::Config(
                "virtual target needs either `random` or all of `relevant`, `centers`, `weights`".into(),
            ))
        }
    };
    Ok(vt)
}

fn build_space(src: &FlagSource, base: &Path) -> Result<FlagSpace> {
    let given = usize::from(src.dump.is_some()) + usize::from(src.declarative.is_some()) + usize::from(!src.flag.is_empty());
    if given != 1 {
        return Err(CliError::Config("flags: give exactly one of `dump`, `declarative` or inline `flag` entries".into()));
    }
    let mut space = if let Some(p) = &src.dump {
        let dump = parse_flag_dump(&read(&resolve(base, p))?, &src.group_rules)?;
        if dump.malformed > 0 {
            log::warn!("{} malformed lines skipped in {}", dump.malformed, p.display());
        }
        dump.space
    } else if let Some(p) = &src.declarative {
        FlagSpace::from_declarative(&read(&resolve(base, p))?)?
    } else {
        FlagSpace::new(src.flag.iter().map(FlagDecl::to_spec).collect::<flagtune_core::Result<Vec<_>>>()?)?
    };
    space.apply_overrides(&src.overrides)?;
    if let Some(groups) = &src.active_groups {
        space = space.with_active_groups(groups.iter().cloned());
    }
    if space.dim() == 0 {
        return Err(CliError::Config("no active flags to tune".into()));
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VIRTUAL: &str = r#"
seed = 1

[[flags.flag]]
name = "A"
kind = "continuous"
range = [0.0, 1.0]
default = 0.5

[[flags.flag]]
name = "B"
kind = "boolean"
default = false

[target]
kind = "virtual"
relevant = [0]
centers = [0.2]
weights = [1.0]

[objective]
metric = "time"
"#;

    fn parse(text: &str) -> Result<Project> {
        let cfg: ProjectConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Project::from_config(cfg, Path::new("/tmp"))
    }

    #[test]
    fn inline_virtual_project() {
        let p = parse(VIRTUAL).unwrap();
        assert_eq!(p.space.names(), vec!["A", "B"]);
        assert_eq!(p.out_dir, Path::new("/tmp/out"));
        assert_eq!(p.direction(), Direction::Minimize);
        let ev = p.evaluator().unwrap();
        assert!(ev.is_virtual());
    }

    #[test]
    fn seed_is_required() {
        let err = parse(&VIRTUAL.replace("seed = 1", "")).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn metric_must_be_probed() {
        let text = VIRTUAL.replace(
            "kind = \"virtual\"\nrelevant = [0]\ncenters = [0.2]\nweights = [1.0]",
            "kind = \"process\"\ncommand = [\"true\", \"{flags}\"]\nprobes = [\"heap\"]",
        );
        let err = parse(&text).unwrap_err();
        assert_eq!(err.kind(), "config");
        assert!(err.to_string().contains("`time`"));
    }

    #[test]
    fn referenced_files_must_exist() {
        let text = "seed = 1\n[flags]\ndump = \"no-such-dump.txt\"\n[target]\nkind = \"virtual\"\nrandom = { relevant = 1, seed = 0 }\n[objective]\nmetric = \"t\"\n";
        let err = parse(text).unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn one_flag_source_only() {
        let text = VIRTUAL.replace("seed = 1", "seed = 1\n[flags]\ndump = \"x\"");
        assert!(parse(&text).is_err());
        let text = VIRTUAL.replace("relevant = [0]\ncenters = [0.2]\nweights = [1.0]", "");
        assert_eq!(parse(&text).unwrap().evaluator().err().map(|e| e.kind()), Some("config"));
    }
}
