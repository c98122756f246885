//! Running the target under a configuration and collecting metrics.
//!
//! Two evaluators are provided: [`ProcessExecutor`] launches a real command
//! with the rendered flags injected, and [`VirtualExecutor`] evaluates a
//! synthetic quadratic target with a known optimum and known relevant flags.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::{Configuration, FlagSpace};
use crate::rng;

/// Placeholder in a command template replaced by the rendered flags.
pub const FLAGS_PLACEHOLDER: &str = "{flags}";
/// Placeholder in a heap sampler command replaced by the target's pid.
pub const PID_PLACEHOLDER: &str = "{pid}";
/// Probe name for mean wall-clock seconds.
pub const TIME_PROBE: &str = "time";
/// Probe name for mean heap usage percentage.
pub const HEAP_PROBE: &str = "heap";
/// Prefix of stdout lines carrying user-defined metrics: `FLAGTUNE_METRIC name=value`.
pub const METRIC_LINE_PREFIX: &str = "FLAGTUNE_METRIC";

// ---------------------------------------------------------------------------
// Heap usage
// ---------------------------------------------------------------------------

/// One row of `jstat -gc` output, all values in KB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct HeapSample {
    pub S0C: f64,
    pub S1C: f64,
    pub EC: f64,
    pub OC: f64,
    pub S0U: f64,
    pub S1U: f64,
    pub EU: f64,
    pub OU: f64,
}

impl HeapSample {
    pub fn check(&self) -> Result<()> {
        let pairs = [
            ("S0", self.S0U, self.S0C),
            ("S1", self.S1U, self.S1C),
            ("E", self.EU, self.EC),
            ("O", self.OU, self.OC),
        ];
        for (space, used, cap) in pairs {
            if !(used >= 0.0 && cap >= 0.0) || !used.is_finite() || !cap.is_finite() {
                return Err(Error::InvalidHeapSample(format!("{space} values must be finite and non-negative")));
            }
            if used > cap {
                return Err(Error::InvalidHeapSample(format!("{space}U {used} exceeds {space}C {cap}")));
            }
        }
        Ok(())
    }

    pub fn total_capacity(&self) -> f64 {
        self.S0C + self.S1C + self.EC + self.OC
    }

    pub fn total_used(&self) -> f64 {
        self.S0U + self.S1U + self.EU + self.OU
    }
}

/// Heap usage percentage: used survivor, eden and old space over their
/// committed capacity, times 100.
pub fn heap_usage_sample(s: &HeapSample) -> Result<f64> {
    s.check()?;
    let cap = s.total_capacity();
    if cap <= 0.0 {
        return Err(Error::InvalidHeapSample("total capacity is zero".into()));
    }
    Ok(s.total_used() / cap * 100.0)
}

/// Mean heap usage of one run.
pub fn aggregate_heap(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("heap samples"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Parsed `jstat -gc` stream.
#[derive(Debug, Clone, PartialEq)]
pub struct JstatSamples {
    pub samples: Vec<HeapSample>,
    pub skipped_rows: usize,
}

/// Parses `jstat -gc` output: a header naming the columns followed by one
/// row per sample. Extra columns are ignored; repeated headers (jstat
/// re-prints them with `-h`) are skipped.
pub fn parse_jstat_stream(text: &str) -> Result<JstatSamples> {
    const REQUIRED: [&str; 8] = ["S0C", "S1C", "S0U", "S1U", "EC", "EU", "OC", "OU"];
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or(Error::Empty("jstat output"))?.split_whitespace().collect();
    let mut idx = [0usize; 8];
    for (slot, col) in idx.iter_mut().zip(REQUIRED) {
        *slot = header
            .iter()
            .position(|h| *h == col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))?;
    }
    let mut samples = Vec::new();
    let mut skipped_rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells == header {
            continue;
        }
        let values: Option<Vec<f64>> = idx
            .iter()
            .map(|&i| cells.get(i).and_then(|c| c.parse::<f64>().ok()))
            .collect();
        let Some(v) = values else {
            skipped_rows += 1;
            continue;
        };
        let sample = HeapSample {
            S0C: v[0],
            S1C: v[1],
            S0U: v[2],
            S1U: v[3],
            EC: v[4],
            EU: v[5],
            OC: v[6],
            OU: v[7],
        };
        if sample.check().is_err() {
            skipped_rows += 1;
            continue;
        }
        samples.push(sample);
    }
    if skipped_rows > 0 {
        log::warn!("skipped {skipped_rows} unparseable jstat rows");
    }
    Ok(JstatSamples { samples, skipped_rows })
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Timeout,
    Crashed,
}

/// One execution of the target under a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: Configuration,
    pub metrics: BTreeMap<String, f64>,
    pub status: TrialStatus,
    /// Mean wall-clock seconds across repeats.
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub run_wall_clock_s: Vec<f64>,
    /// Unix milliseconds at launch; absent for virtual evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

impl TrialRecord {
    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Anything that can evaluate a full configuration of the target.
pub trait Evaluator: Sync {
    /// Space the configurations passed to [`evaluate`](Self::evaluate) live in.
    fn space(&self) -> &FlagSpace;

    /// Metric names this evaluator reports on success.
    fn metrics(&self) -> Vec<String>;

    fn evaluate(&self, config: &Configuration, seed: u64) -> Result<TrialRecord>;

    /// True when evaluation is a pure function without side effects.
    fn is_virtual(&self) -> bool {
        false
    }
}

/// Appends trial records as JSON lines.
pub struct TrialLog {
    path: PathBuf,
}

impl TrialLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn append(&self, record: &TrialRecord) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn read(path: &Path) -> Result<Vec<TrialRecord>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Real process execution
// ---------------------------------------------------------------------------

fn default_cadence() -> f64 {
    5.0
}

fn default_sampler() -> Vec<String> {
    vec!["jstat".into(), "-gc".into(), PID_PLACEHOLDER.into()]
}

/// Heap probing: the sampler command is run every `cadence_s` seconds
/// against the target's pid and its output parsed as `jstat -gc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeapProbe {
    #[serde(default = "default_cadence")]
    pub cadence_s: f64,
    #[serde(default = "default_sampler")]
    pub sampler: Vec<String>,
}

impl Default for HeapProbe {
    fn default() -> Self {
        Self { cadence_s: default_cadence(), sampler: default_sampler() }
    }
}

fn default_repeat() -> u32 {
    1
}

fn default_timeout() -> f64 {
    3600.0
}

/// How to launch the target program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Program and arguments; exactly one element equals `{flags}`.
    pub command: Vec<String>,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
    pub probes: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub heap: HeapProbe,
}

impl TargetSpec {
    pub fn new(command: Vec<String>, probes: Vec<String>) -> Self {
        Self {
            command,
            working_dir: None,
            timeout_s: default_timeout(),
            repeat: 1,
            probes,
            env: BTreeMap::new(),
            heap: HeapProbe::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.repeat < 1 {
            return Err(Error::Config("repeat must be at least 1".into()));
        }
        let placeholders = self.command.iter().filter(|a| *a == FLAGS_PLACEHOLDER).count();
        if placeholders != 1 {
            return Err(Error::Config(format!(
                "command must contain exactly one {FLAGS_PLACEHOLDER} placeholder, found {placeholders}"
            )));
        }
        if self.command.first().is_none_or(|c| c == FLAGS_PLACEHOLDER) {
            return Err(Error::Config("command must start with a program".into()));
        }
        if self.probes.is_empty() {
            return Err(Error::Config("at least one probe is required".into()));
        }
        if self.probes.iter().any(|p| p == HEAP_PROBE) && !(self.heap.cadence_s > 0.0) {
            return Err(Error::Config("heap cadence must be positive".into()));
        }
        Ok(())
    }

    /// Checks that the program can be found, either as a path or on `PATH`.
    pub fn resolve_program(&self) -> Result<PathBuf> {
        let prog = self.command.first().ok_or_else(|| Error::Config("empty command".into()))?;
        let base = self.working_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        if prog.contains('/') {
            let p = Path::new(prog);
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            return if p.is_file() { Ok(p) } else { Err(Error::TargetNotFound(prog.clone())) };
        }
        let path = std::env::var_os("PATH").unwrap_or_default();
        std::env::split_paths(&path)
            .map(|dir| dir.join(prog))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::TargetNotFound(prog.clone()))
    }

    fn argv(&self, flags: &[String]) -> Vec<String> {
        self.command
            .iter()
            .flat_map(|a| if a == FLAGS_PLACEHOLDER { flags.to_vec() } else { vec![a.clone()] })
            .collect()
    }
}

enum RunOutcome {
    Finished { success: bool, secs: f64, stdout: String, heap: Vec<f64> },
    TimedOut,
}

/// Executes a [`TargetSpec`] as a subprocess. Trials are serialized: at most
/// one run of the target is in flight at any time.
pub struct ProcessExecutor {
    spec: TargetSpec,
    space: FlagSpace,
    lock: Mutex<()>,
}

impl ProcessExecutor {
    pub fn new(spec: TargetSpec, space: FlagSpace) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, space, lock: Mutex::new(()) })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    fn run_once(&self, argv: &[String]) -> Result<RunOutcome> {
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .envs(&self.spec.env)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        if let Some(dir) = &self.spec.working_dir {
            cmd.current_dir(dir);
        }
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::TargetNotFound(argv[0].clone()),
            _ => Error::io(&argv[0], e),
        })?;
        let pid = child.id();
        let mut out = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = out.read_to_string(&mut s);
            s
        });

        let want_heap = self.spec.probes.iter().any(|p| p == HEAP_PROBE);
        let cadence = Duration::from_secs_f64(self.spec.heap.cadence_s);
        let timeout = Duration::from_secs_f64(self.spec.timeout_s);
        let mut next_sample = start + cadence;
        let mut heap = Vec::new();
        let status = loop {
            if let Some(status) = child.try_wait().map_err(|e| Error::io(&argv[0], e))? {
                break Some(status);
            }
            let now = Instant::now();
            if now.duration_since(start) >= timeout {
                kill_tree(&mut child);
                break None;
            }
            if want_heap && now >= next_sample {
                heap.extend(self.sample_heap(pid));
                next_sample += cadence;
            }
            thread::sleep(Duration::from_millis(5));
        };
        let secs = start.elapsed().as_secs_f64();
        let Some(status) = status else {
            // The reader may block on a pipe held by an orphaned grandchild.
            drop(reader);
            return Ok(RunOutcome::TimedOut);
        };
        let stdout = reader.join().unwrap_or_default();
        if want_heap && heap.is_empty() {
            // Shorter than one cadence: one end-of-run sample.
            heap.extend(self.sample_heap(pid));
        }
        Ok(RunOutcome::Finished { success: status.success(), secs, stdout, heap })
    }

    fn sample_heap(&self, pid: u32) -> Vec<f64> {
        let argv: Vec<String> = self
            .spec
            .heap
            .sampler
            .iter()
            .map(|a| a.replace(PID_PLACEHOLDER, &pid.to_string()))
            .collect();
        let Some((prog, args)) = argv.split_first() else { return Vec::new() };
        let output = Command::new(prog).args(args).stderr(Stdio::null()).output();
        let Ok(output) = output else { return Vec::new() };
        let text = String::from_utf8_lossy(&output.stdout);
        match parse_jstat_stream(&text) {
            Ok(parsed) => parsed.samples.iter().filter_map(|s| heap_usage_sample(s).ok()).collect(),
            Err(e) => {
                log::debug!("heap sample failed: {e}");
                Vec::new()
            }
        }
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Extracts `FLAGTUNE_METRIC name=value` lines from target output.
pub fn parse_metric_lines(stdout: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in BufReader::new(stdout.as_bytes()).lines().map_while(std::result::Result::ok) {
        let Some(rest) = line.trim().strip_prefix(METRIC_LINE_PREFIX) else { continue };
        if let Some((k, v)) = rest.trim().split_once('=') {
            if let Ok(v) = v.trim().parse::<f64>() {
                out.insert(k.trim().to_string(), v);
            }
        }
    }
    out
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Runs `config` on the target `repeat` times and averages the requested
/// metrics.
pub fn run_trial(executor: &ProcessExecutor, config: &Configuration) -> Result<TrialRecord> {
    let spec = &executor.spec;
    executor.space.validate(config)?;
    let flags = executor.space.render_cli_args(config);
    let argv = spec.argv(&flags);
    let _guard = executor.lock.lock().unwrap_or_else(|p| p.into_inner());
    let timestamp_ms = Some(now_ms());

    let mut runs = Vec::new();
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..spec.repeat {
        match executor.run_once(&argv)? {
            RunOutcome::TimedOut => {
                return Ok(TrialRecord {
                    config: config.clone(),
                    metrics: BTreeMap::new(),
                    status: TrialStatus::Timeout,
                    wall_clock_s: spec.timeout_s,
                    run_wall_clock_s: runs,
                    timestamp_ms,
                });
            }
            RunOutcome::Finished { success, secs, stdout, heap } => {
                runs.push(secs);
                let user = parse_metric_lines(&stdout);
                let mut metrics = BTreeMap::new();
                for probe in &spec.probes {
                    let v = match probe.as_str() {
                        TIME_PROBE => Some(secs),
                        HEAP_PROBE => aggregate_heap(&heap).ok(),
                        other => user.get(other).copied(),
                    };
                    if let Some(v) = v.filter(|v| v.is_finite()) {
                        metrics.insert(probe.clone(), v);
                    }
                }
                if !success || metrics.len() != spec.probes.len() {
                    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
                    return Ok(TrialRecord {
                        config: config.clone(),
                        metrics,
                        status: TrialStatus::Crashed,
                        wall_clock_s: mean,
                        run_wall_clock_s: runs,
                        timestamp_ms,
                    });
                }
                for (k, v) in metrics {
                    *sums.entry(k).or_default() += v;
                }
            }
        }
    }
    let r = f64::from(spec.repeat);
    Ok(TrialRecord {
        config: config.clone(),
        metrics: sums.into_iter().map(|(k, v)| (k, v / r)).collect(),
        status: TrialStatus::Ok,
        wall_clock_s: runs.iter().sum::<f64>() / r,
        run_wall_clock_s: runs,
        timestamp_ms,
    })
}

impl Evaluator for ProcessExecutor {
    fn space(&self) -> &FlagSpace {
        &self.space
    }

    fn metrics(&self) -> Vec<String> {
        self.spec.probes.clone()
    }

    fn evaluate(&self, config: &Configuration, _seed: u64) -> Result<TrialRecord> {
        run_trial(self, config)
    }
}

// ---------------------------------------------------------------------------
// Virtual targets
// ---------------------------------------------------------------------------

/// Synthetic objective `base + Σ_{i∈S} a_i (x_i − o_i)² + ε` over the unit
/// hypercube. Its minimum `base` and relevant set `S` are known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualTarget {
    pub dim: usize,
    pub relevant: Vec<usize>,
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
    pub noise_sd: f64,
    pub base: f64,
}

impl VirtualTarget {
    pub fn new(
        dim: usize,
        relevant: Vec<usize>,
        centers: Vec<f64>,
        weights: Vec<f64>,
        noise_sd: f64,
        base: f64,
    ) -> Result<Self> {
        let vt = Self { dim, relevant, centers, weights, noise_sd, base };
        vt.check()?;
        Ok(vt)
    }

    /// Random target with `k` relevant dimensions, centers in `[0.1, 0.9]`
    /// and weights in `[w_lo, w_hi]`.
    pub fn random(dim: usize, k: usize, w_lo: f64, w_hi: f64, noise_sd: f64, base: f64, seed: u64) -> Result<Self> {
        use rand::seq::index::sample;
        use rand::Rng as _;
        if k > dim {
            return Err(Error::Config(format!("{k} relevant dims exceed dimension {dim}")));
        }
        let mut r = rng::rng(seed);
        let mut relevant = sample(&mut r, dim, k).into_vec();
        relevant.sort_unstable();
        let centers = (0..k).map(|_| r.random_range(0.1..0.9)).collect();
        let weights = (0..k).map(|_| r.random_range(w_lo..=w_hi)).collect();
        Self::new(dim, relevant, centers, weights, noise_sd, base)
    }

    fn check(&self) -> Result<()> {
        let k = self.relevant.len();
        if k > self.dim || self.centers.len() != k || self.weights.len() != k {
            return Err(Error::Config("virtual target: inconsistent relevant set".into()));
        }
        if self.relevant.iter().any(|&i| i >= self.dim) {
            return Err(Error::Config("virtual target: relevant index out of range".into()));
        }
        if self.centers.iter().any(|o| !(0.0..=1.0).contains(o)) || self.weights.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("virtual target: centers must lie in [0,1], weights > 0".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.base > 0.0) {
            return Err(Error::Config("virtual target: noise_sd ≥ 0 and base > 0 required".into()));
        }
        Ok(())
    }

    /// Noise-free value at `x`.
    pub fn mean_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.base
            + self
                .relevant
                .iter()
                .zip(&self.centers)
                .zip(&self.weights)
                .map(|((&i, o), a)| a * (x[i] - o).powi(2))
                .sum::<f64>())
    }

    /// Minimizer of the noise-free objective with irrelevant dims set from `fill`.
    pub fn optimum(&self, fill: &[f64]) -> Vec<f64> {
        let mut x = fill.to_vec();
        for (&i, &o) in self.relevant.iter().zip(&self.centers) {
            x[i] = o;
        }
        x
    }
}

/// Evaluates a virtual target. Noise is a deterministic function of `seed`
/// and `x`.
pub fn synthetic_eval(vt: &VirtualTarget, x: &[f64], seed: u64) -> Result<f64> {
    let mean = vt.mean_value(x)?;
    if vt.noise_sd == 0.0 {
        return Ok(mean);
    }
    let mut r = rng::rng(rng::hash_point(seed, x));
    let noise = Normal::new(0.0, vt.noise_sd).expect("valid sd").sample(&mut r);
    Ok(mean + noise)
}

/// Evaluator backed by a [`VirtualTarget`] over the encoding of `space`.
pub struct VirtualExecutor {
    pub target: VirtualTarget,
    space: FlagSpace,
    metric: String,
}

impl VirtualExecutor {
    pub fn new(target: VirtualTarget, space: FlagSpace, metric: impl Into<String>) -> Result<Self> {
        if target.dim != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: target.dim });
        }
        Ok(Self { target, space, metric: metric.into() })
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }
}

impl Evaluator for VirtualExecutor {
    fn space(&self) -> &FlagSpace {
        &self.space
    }

    fn metrics(&self) -> Vec<String> {
        vec![self.metric.clone()]
    }

    fn evaluate(&self, config: &Configuration, seed: u64) -> Result<TrialRecord> {
        let x = self.space.encode(config)?;
        let v = synthetic_eval(&self.target, &x, seed)?;
        Ok(TrialRecord {
            config: config.clone(),
            metrics: BTreeMap::from([(self.metric.clone(), v)]),
            status: TrialStatus::Ok,
            wall_clock_s: 0.0,
            run_wall_clock_s: Vec::new(),
            timestamp_ms: None,
        })
    }

    fn is_virtual(&self) -> bool {
        true
    }
}
