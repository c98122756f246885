//! Tunable flag search space: typed flags, configurations, the bijection
//! with the unit hypercube, flag-dump import and command-line rendering.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Group assigned to dump flags that match no group rule.
pub const COMMON_GROUP: &str = "common";

/// A single flag value. Integers and reals are kept apart so integer flags
/// render without a decimal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlagValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl FlagValue {
    fn as_f64(&self) -> Option<f64> {
        match *self {
            FlagValue::Int(v) => Some(v as f64),
            FlagValue::Real(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for FlagValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlagValue::Bool(b) => write!(f, "{b}"),
            FlagValue::Int(v) => write!(f, "{v}"),
            FlagValue::Real(v) => write!(f, "{v}"),
            FlagValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagKind {
    Boolean,
    Integer,
    Continuous,
    Categorical,
}

/// Legal values of a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Boolean,
    Integer { lo: i64, hi: i64 },
    Continuous { lo: f64, hi: f64 },
    Categorical(Vec<String>),
}

impl Domain {
    pub fn kind(&self) -> FlagKind {
        match self {
            Domain::Boolean => FlagKind::Boolean,
            Domain::Integer { .. } => FlagKind::Integer,
            Domain::Continuous { .. } => FlagKind::Continuous,
            Domain::Categorical(_) => FlagKind::Categorical,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Domain::Boolean => Ok(()),
            Domain::Integer { lo, hi } if lo > hi => Err(format!("integer range [{lo}, {hi}] is empty")),
            Domain::Continuous { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(format!("continuous range [{lo}, {hi}] needs finite lo < hi"))
            }
            Domain::Categorical(values) if values.is_empty() => Err("categorical flag without values".into()),
            Domain::Categorical(values) => {
                let unique: HashSet<_> = values.iter().collect();
                if unique.len() != values.len() {
                    Err("duplicate categorical values".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Normalizes `value` into the canonical variant for this domain and
    /// checks that it lies in range.
    pub fn coerce(&self, value: &FlagValue) -> std::result::Result<FlagValue, String> {
        match (self, value) {
            (Domain::Boolean, FlagValue::Bool(b)) => Ok(FlagValue::Bool(*b)),
            (Domain::Integer { lo, hi }, v) => {
                let n = match *v {
                    FlagValue::Int(n) => n,
                    FlagValue::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e18 => r as i64,
                    _ => return Err(format!("expected an integer, got {v}")),
                };
                if n < *lo || n > *hi {
                    return Err(format!("value {n} outside [{lo}, {hi}]"));
                }
                Ok(FlagValue::Int(n))
            }
            (Domain::Continuous { lo, hi }, v) => {
                let r = v.as_f64().ok_or_else(|| format!("expected a number, got {v}"))?;
                if !(r >= *lo && r <= *hi) {
                    return Err(format!("value {r} outside [{lo}, {hi}]"));
                }
                Ok(FlagValue::Real(r))
            }
            (Domain::Categorical(values), FlagValue::Text(s)) => {
                if values.contains(s) {
                    Ok(value.clone())
                } else {
                    Err(format!("`{s}` is not one of {values:?}"))
                }
            }
            (d, v) => Err(format!("value {v} does not fit a {:?} flag", d.kind())),
        }
    }
}

/// How a flag is emitted on a command line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderStyle {
    /// `-XX:+Name`, `-XX:-Name`, `-XX:Name=value`.
    #[default]
    Jvm,
    /// `--name=value`.
    Gnu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSpec {
    pub name: String,
    pub domain: Domain,
    pub default: FlagValue,
    pub group: Option<String>,
    #[serde(default)]
    pub render: RenderStyle,
}

impl FlagSpec {
    pub fn new(name: impl Into<String>, domain: Domain, default: FlagValue) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidFlag { flag: name.clone(), reason };
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(invalid("name must be a non-empty identifier".into()));
        }
        domain.validate().map_err(invalid)?;
        let default = domain.coerce(&default).map_err(|r| invalid(format!("default: {r}")))?;
        Ok(Self { name, domain, default, group: None, render: RenderStyle::Jvm })
    }

    pub fn boolean(name: impl Into<String>, default: bool) -> Result<Self> {
        Self::new(name, Domain::Boolean, FlagValue::Bool(default))
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64, default: i64) -> Result<Self> {
        Self::new(name, Domain::Integer { lo, hi }, FlagValue::Int(default))
    }

    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64, default: f64) -> Result<Self> {
        Self::new(name, Domain::Continuous { lo, hi }, FlagValue::Real(default))
    }

    pub fn categorical(name: impl Into<String>, values: Vec<String>, default: &str) -> Result<Self> {
        Self::new(name, Domain::Categorical(values), FlagValue::Text(default.to_string()))
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn with_render(mut self, render: RenderStyle) -> Self {
        self.render = render;
        self
    }

    pub fn kind(&self) -> FlagKind {
        self.domain.kind()
    }

    fn encode_value(&self, value: &FlagValue) -> Result<f64> {
        let v = self.domain.coerce(value).map_err(|reason| Error::InvalidFlag {
            flag: self.name.clone(),
            reason,
        })?;
        Ok(match (&self.domain, &v) {
            (Domain::Boolean, FlagValue::Bool(b)) => f64::from(u8::from(*b)),
            (Domain::Integer { lo, hi }, FlagValue::Int(n)) => {
                if hi == lo {
                    0.0
                } else {
                    (*n - *lo) as f64 / (*hi - *lo) as f64
                }
            }
            (Domain::Continuous { lo, hi }, FlagValue::Real(r)) => ((r - lo) / (hi - lo)).clamp(0.0, 1.0),
            (Domain::Categorical(values), FlagValue::Text(s)) => {
                let idx = values.iter().position(|c| c == s).unwrap_or(0);
                if values.len() == 1 {
                    0.0
                } else {
                    idx as f64 / (values.len() - 1) as f64
                }
            }
            _ => unreachable!("coerce returns the domain's canonical variant"),
        })
    }

    fn decode_value(&self, t: f64) -> FlagValue {
        match &self.domain {
            Domain::Boolean => FlagValue::Bool(t >= 0.5),
            Domain::Integer { lo, hi } => {
                let span = (*hi - *lo) as f64;
                let off = (t * span).round().clamp(0.0, span) as i64;
                FlagValue::Int(lo + off)
            }
            Domain::Continuous { lo, hi } => FlagValue::Real((lo + t * (hi - lo)).clamp(*lo, *hi)),
            Domain::Categorical(values) => {
                let idx = (t * (values.len() - 1) as f64).round() as usize;
                FlagValue::Text(values[idx.min(values.len() - 1)].clone())
            }
        }
    }

    fn render(&self, value: &FlagValue) -> String {
        match (self.render, value) {
            (RenderStyle::Jvm, FlagValue::Bool(true)) => format!("-XX:+{}", self.name),
            (RenderStyle::Jvm, FlagValue::Bool(false)) => format!("-XX:-{}", self.name),
            (RenderStyle::Jvm, v) => format!("-XX:{}={v}", self.name),
            (RenderStyle::Gnu, v) => format!("--{}={v}", self.name),
        }
    }
}

/// One assignment of values to flags, keyed by flag name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, FlagValue>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: FlagValue) {
        self.0.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: FlagValue) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&FlagValue> {
        self.0.get(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FlagValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, FlagValue)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (String, FlagValue)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Ordered flags plus the set of groups currently being tuned. Flags without
/// a group are always active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSpace {
    flags: Vec<FlagSpec>,
    active_groups: BTreeSet<String>,
}

impl FlagSpace {
    /// Creates a space with every group active.
    pub fn new(flags: Vec<FlagSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &flags {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidFlag { flag: f.name.clone(), reason: "duplicate name".into() });
            }
        }
        let active_groups = flags.iter().filter_map(|f| f.group.clone()).collect();
        Ok(Self { flags, active_groups })
    }

    pub fn with_active_groups<I, S>(mut self, groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.active_groups = groups.into_iter().map(Into::into).collect();
        self
    }

    pub fn active_groups(&self) -> &BTreeSet<String> {
        &self.active_groups
    }

    pub fn all_flags(&self) -> &[FlagSpec] {
        &self.flags
    }

    pub fn is_active(&self, flag: &FlagSpec) -> bool {
        flag.group.as_ref().is_none_or(|g| self.active_groups.contains(g))
    }

    /// Active flags in encoding order.
    pub fn active(&self) -> impl Iterator<Item = &FlagSpec> {
        self.flags.iter().filter(|f| self.is_active(f))
    }

    pub fn names(&self) -> Vec<String> {
        self.active().map(|f| f.name.clone()).collect()
    }

    /// Encoding dimension.
    pub fn dim(&self) -> usize {
        self.active().count()
    }

    pub fn spec(&self, name: &str) -> Option<&FlagSpec> {
        self.flags.iter().find(|f| f.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.active().position(|f| f.name == name)
    }

    /// Sub-space holding only `names` (kept in this space's order).
    pub fn restrict<S: AsRef<str>>(&self, names: &[S]) -> Result<FlagSpace> {
        let wanted: HashSet<&str> = names.iter().map(AsRef::as_ref).collect();
        for n in &wanted {
            match self.spec(n) {
                Some(f) if self.is_active(f) => {}
                _ => return Err(Error::UnknownFlag(n.to_string())),
            }
        }
        let flags = self.active().filter(|f| wanted.contains(f.name.as_str())).cloned().collect();
        Ok(FlagSpace::new(flags)?.with_active_groups(self.active_groups.iter().cloned()))
    }

    pub fn default_config(&self) -> Configuration {
        self.active().map(|f| (f.name.clone(), f.default.clone())).collect()
    }

    /// Fills every active flag missing from `partial` with its default.
    /// Assignments for flags outside the space are rejected.
    pub fn complete(&self, partial: &Configuration) -> Result<Configuration> {
        let mut out = self.default_config();
        for (name, v) in partial.iter() {
            if out.get(name).is_none() {
                return Err(Error::UnknownFlag(name.to_string()));
            }
            out.set(name, v.clone());
        }
        Ok(out)
    }

    pub fn validate(&self, config: &Configuration) -> Result<()> {
        self.encode(config).map(|_| ())
    }

    /// Maps a configuration to the unit hypercube, one component per active flag.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        for (name, _) in config.iter() {
            match self.spec(name) {
                Some(f) if self.is_active(f) => {}
                _ => return Err(Error::UnknownFlag(name.to_string())),
            }
        }
        self.active()
            .map(|f| {
                let v = config.get(&f.name).ok_or_else(|| Error::MissingAssignment(f.name.clone()))?;
                f.encode_value(v)
            })
            .collect()
    }

    /// Inverse of [`encode`](Self::encode); integer and categorical
    /// components round to the nearest legal value.
    pub fn decode(&self, v: &[f64]) -> Result<Configuration> {
        let d = self.dim();
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, t)| !(**t >= 0.0 && **t <= 1.0)) {
            return Err(Error::OutOfUnitCube { index, value });
        }
        Ok(self.active().zip(v).map(|(f, &t)| (f.name.clone(), f.decode_value(t))).collect())
    }

    /// Command-line arguments for `config`, one per active flag in space order.
    pub fn render_cli_args(&self, config: &Configuration) -> Vec<String> {
        self.active()
            .filter_map(|f| config.get(&f.name).map(|v| f.render(v)))
            .collect()
    }

    /// Serializes boolean, integer and continuous flags in the flag-dump
    /// layout understood by [`parse_flag_dump`]. Categorical flags have no
    /// dump representation and are omitted.
    pub fn to_flag_dump(&self) -> String {
        let mut out = String::new();
        for f in &self.flags {
            let (ty, value) = match (&f.domain, &f.default) {
                (Domain::Boolean, v) => ("bool", v.to_string()),
                (Domain::Integer { lo, .. }, v) => (if *lo < 0 { "intx" } else { "uintx" }, v.to_string()),
                (Domain::Continuous { .. }, FlagValue::Real(r)) => ("double", format!("{r:?}")),
                _ => continue,
            };
            out.push_str(&format!("{ty:>9} {:<45} = {value:<40} {{product}}\n", f.name));
        }
        out
    }

    /// Applies per-flag overrides (range, default, group, render style).
    pub fn apply_overrides(&mut self, overrides: &[FlagOverride]) -> Result<()> {
        for o in overrides {
            let idx = self
                .flags
                .iter()
                .position(|f| f.name == o.name)
                .ok_or_else(|| Error::UnknownFlag(o.name.clone()))?;
            let cur = &self.flags[idx];
            let domain = match &o.range {
                Some(r) => domain_from_decl(&o.name, o.kind.unwrap_or(cur.kind()), Some(r), o.values.as_deref())?,
                None => match (o.kind, &o.values) {
                    (Some(k), vals) if k != cur.kind() => domain_from_decl(&o.name, k, None, vals.as_deref())?,
                    (_, Some(vals)) => Domain::Categorical(vals.clone()),
                    _ => cur.domain.clone(),
                },
            };
            let default = o.default.clone().unwrap_or_else(|| cur.default.clone());
            let mut spec = FlagSpec::new(o.name.clone(), domain, default)?;
            spec.group = o.group.clone().or_else(|| cur.group.clone());
            spec.render = o.render.unwrap_or(cur.render);
            self.flags[idx] = spec;
        }
        Ok(())
    }

    /// Parses a declarative flag-space document (TOML, `[[flag]]` tables).
    pub fn from_declarative(text: &str) -> Result<Self> {
        let file: FlagSpaceFile = toml::from_str(text)?;
        let flags = file
            .flag
            .iter()
            .map(FlagDecl::to_spec)
            .collect::<Result<Vec<_>>>()?;
        let space = FlagSpace::new(flags)?;
        Ok(match file.active_groups {
            Some(g) => space.with_active_groups(g),
            None => space,
        })
    }

    pub fn to_declarative(&self) -> String {
        let file = FlagSpaceFile {
            active_groups: Some(self.active_groups.iter().cloned().collect()),
            flag: self.flags.iter().map(FlagDecl::from_spec).collect(),
        };
        toml::to_string(&file).expect("flag space serializes")
    }
}

/// Maps a flag name to a group when `pattern` (a regular expression) matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRule {
    pub pattern: String,
    pub group: String,
}

impl GroupRule {
    pub fn new(pattern: impl Into<String>, group: impl Into<String>) -> Self {
        Self { pattern: pattern.into(), group: group.into() }
    }
}

/// Result of importing a flag dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagDump {
    pub space: FlagSpace,
    /// Lines that could not be parsed.
    pub malformed: usize,
    /// String-valued flags, which are never tunable.
    pub string_flags: usize,
}

/// Default numeric range for a dump-derived flag: `[0, 2·default]` for a
/// positive default, `[2·default, 0]` for a negative one, `[0, 1]` at zero.
fn dump_integer_range(default: i64, unsigned: bool) -> (i64, i64) {
    match default.signum() {
        1 => (0, default.saturating_mul(2)),
        -1 if !unsigned => (default.saturating_mul(2), 0),
        _ => (0, 1),
    }
}

fn dump_real_range(default: f64) -> (f64, f64) {
    if default > 0.0 {
        (0.0, (2.0 * default).min(f64::MAX))
    } else if default < 0.0 {
        ((2.0 * default).max(f64::MIN), 0.0)
    } else {
        (0.0, 1.0)
    }
}

/// Parses `-XX:+PrintFlagsFinal` style output:
/// `<type> <name> <= | :=> <value> {<category>}`.
pub fn parse_flag_dump(text: &str, group_rules: &[GroupRule]) -> Result<FlagDump> {
    let rules = group_rules
        .iter()
        .map(|r| {
            Regex::new(&r.pattern)
                .map(|re| (re, r.group.clone()))
                .map_err(|e| Error::Config(format!("bad group pattern `{}`: {e}", r.pattern)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut flags = Vec::new();
    let mut seen = HashSet::new();
    let mut malformed = 0;
    let mut string_flags = 0;

    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || (trimmed.starts_with('[') && trimmed.ends_with(']')) {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() < 3 || !matches!(tokens[2], "=" | ":=") {
            malformed += 1;
            continue;
        }
        let (ty, name) = (tokens[0], tokens[1]);
        if matches!(ty, "ccstr" | "ccstrlist") {
            string_flags += 1;
            continue;
        }
        let value = match tokens.get(3) {
            Some(v) if !v.starts_with('{') => *v,
            _ => {
                malformed += 1;
                continue;
            }
        };
        let spec = match ty {
            "bool" => match value {
                "true" => FlagSpec::boolean(name, true),
                "false" => FlagSpec::boolean(name, false),
                _ => {
                    malformed += 1;
                    continue;
                }
            },
            "intx" | "uintx" | "uint64_t" | "size_t" | "int" | "uint" => {
                let unsigned = ty != "intx" && ty != "int";
                match value.parse::<i64>() {
                    Ok(d) => {
                        let (lo, hi) = dump_integer_range(d, unsigned);
                        FlagSpec::integer(name, lo, hi, d)
                    }
                    // Unsigned values beyond i64 are not representable.
                    Err(_) => {
                        malformed += 1;
                        continue;
                    }
                }
            }
            "double" => match value.parse::<f64>() {
                Ok(d) if d.is_finite() => {
                    let (lo, hi) = dump_real_range(d);
                    FlagSpec::continuous(name, lo, hi, d)
                }
                _ => {
                    malformed += 1;
                    continue;
                }
            },
            _ => {
                malformed += 1;
                continue;
            }
        };
        let Ok(spec) = spec else {
            malformed += 1;
            continue;
        };
        if !seen.insert(name.to_string()) {
            malformed += 1;
            continue;
        }
        let group = rules
            .iter()
            .find(|(re, _)| re.is_match(name))
            .map_or(COMMON_GROUP.to_string(), |(_, g)| g.clone());
        flags.push(spec.with_group(group));
    }

    if malformed > 0 {
        log::warn!("skipped {malformed} malformed flag-dump lines");
    }
    if flags.is_empty() {
        return Err(Error::NoFlagsParsed);
    }
    Ok(FlagDump { space: FlagSpace::new(flags)?, malformed, string_flags })
}

#[derive(Debug, Serialize, Deserialize)]
struct FlagSpaceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active_groups: Option<Vec<String>>,
    #[serde(default)]
    flag: Vec<FlagDecl>,
}

/// Declarative description of one flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlagDecl {
    pub name: String,
    pub kind: FlagKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Vec<FlagValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    pub default: FlagValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default)]
    pub render: RenderStyle,
}

impl FlagDecl {
    pub fn to_spec(&self) -> Result<FlagSpec> {
        let domain = domain_from_decl(&self.name, self.kind, self.range.as_deref(), self.values.as_deref())?;
        let mut spec = FlagSpec::new(self.name.clone(), domain, self.default.clone())?;
        spec.group = self.group.clone();
        spec.render = self.render;
        Ok(spec)
    }

    fn from_spec(f: &FlagSpec) -> Self {
        let (range, values) = match &f.domain {
            Domain::Boolean => (None, None),
            Domain::Integer { lo, hi } => (Some(vec![FlagValue::Int(*lo), FlagValue::Int(*hi)]), None),
            Domain::Continuous { lo, hi } => (Some(vec![FlagValue::Real(*lo), FlagValue::Real(*hi)]), None),
            Domain::Categorical(v) => (None, Some(v.clone())),
        };
        Self {
            name: f.name.clone(),
            kind: f.kind(),
            range,
            values,
            default: f.default.clone(),
            group: f.group.clone(),
            render: f.render,
        }
    }
}

/// Per-flag adjustments applied on top of an imported space.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlagOverride {
    pub name: String,
    #[serde(default)]
    pub kind: Option<FlagKind>,
    #[serde(default)]
    pub range: Option<Vec<FlagValue>>,
    #[serde(default)]
    pub values: Option<Vec<String>>,
    #[serde(default)]
    pub default: Option<FlagValue>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub render: Option<RenderStyle>,
}

fn domain_from_decl(
    name: &str,
    kind: FlagKind,
    range: Option<&[FlagValue]>,
    values: Option<&[String]>,
) -> Result<Domain> {
    let invalid = |reason: &str| Error::InvalidFlag { flag: name.to_string(), reason: reason.to_string() };
    let pair = |r: Option<&[FlagValue]>| -> Result<(FlagValue, FlagValue)> {
        match r {
            Some([lo, hi]) => Ok((lo.clone(), hi.clone())),
            _ => Err(invalid("range must be [lo, hi]")),
        }
    };
    Ok(match kind {
        FlagKind::Boolean => Domain::Boolean,
        FlagKind::Integer => match pair(range)? {
            (FlagValue::Int(lo), FlagValue::Int(hi)) => Domain::Integer { lo, hi },
            _ => return Err(invalid("integer range bounds must be integers")),
        },
        FlagKind::Continuous => {
            let (lo, hi) = pair(range)?;
            match (lo.as_f64(), hi.as_f64()) {
                (Some(lo), Some(hi)) => Domain::Continuous { lo, hi },
                _ => return Err(invalid("continuous range bounds must be numbers")),
            }
        }
        FlagKind::Categorical => {
            let vals = match (values, range) {
                (Some(v), _) => v.to_vec(),
                (None, Some(r)) => r.iter().map(ToString::to_string).collect(),
                (None, None) => return Err(invalid("categorical flag needs `values`")),
            };
            Domain::Categorical(vals)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_space() -> FlagSpace {
        FlagSpace::new(vec![
            FlagSpec::boolean("UseG1GC", true).unwrap().with_group("G1GC"),
            FlagSpec::integer("InitiatingHeapOccupancyPercent", 0, 100, 45).unwrap().with_group("G1GC"),
            FlagSpec::continuous("Ratio", 0.0, 2.0, 0.5).unwrap(),
            FlagSpec::categorical("Mode", vec!["a".into(), "b".into(), "c".into()], "b").unwrap(),
            FlagSpec::integer("ParallelGCThreads", 1, 16, 8).unwrap().with_group("ParallelGC"),
        ])
        .unwrap()
    }

    #[test]
    fn parses_jdk8_lines() {
        let text = "[Global flags]\n     uintx InitiatingHeapOccupancyPercent            = 45                                  {product}\n\
                    bool UseG1GC := true {product}\n";
        let dump = parse_flag_dump(text, &[]).unwrap();
        let ihop = dump.space.spec("InitiatingHeapOccupancyPercent").unwrap();
        assert_eq!(ihop.kind(), FlagKind::Integer);
        assert_eq!(ihop.default, FlagValue::Int(45));
        assert_eq!(ihop.domain, Domain::Integer { lo: 0, hi: 90 });
        let g1 = dump.space.spec("UseG1GC").unwrap();
        assert_eq!(g1.kind(), FlagKind::Boolean);
        assert_eq!(g1.default, FlagValue::Bool(true));
        assert_eq!(g1.group.as_deref(), Some(COMMON_GROUP));
        assert_eq!(dump.malformed, 0);
    }

    #[test]
    fn empty_dump_is_an_error() {
        assert!(matches!(parse_flag_dump("", &[]), Err(Error::NoFlagsParsed)));
    }

    #[test]
    fn dump_skips_strings_and_counts_malformed() {
        let text = "ccstr AOTLibrary =  {product}\n\
                    ccstrlist OnError = {product}\n\
                    this is junk\n\
                    double MaxRAMFraction = 0.25 {product}\n\
                    intx Foo = abc {product}\n\
                    intx CICompilerCount = 0 {product}\n\
                    intx Negative = -3 {product}\n";
        let dump = parse_flag_dump(text, &[]).unwrap();
        assert_eq!(dump.string_flags, 2);
        assert_eq!(dump.malformed, 2);
        assert_eq!(
            dump.space.spec("MaxRAMFraction").unwrap().domain,
            Domain::Continuous { lo: 0.0, hi: 0.5 }
        );
        assert_eq!(dump.space.spec("CICompilerCount").unwrap().domain, Domain::Integer { lo: 0, hi: 1 });
        assert_eq!(dump.space.spec("Negative").unwrap().domain, Domain::Integer { lo: -6, hi: 0 });
    }

    #[test]
    fn huge_unsigned_default_saturates() {
        let dump = parse_flag_dump("uintx MaxHeapSize = 8589934592000000000 {product}", &[]).unwrap();
        assert_eq!(
            dump.space.spec("MaxHeapSize").unwrap().domain,
            Domain::Integer { lo: 0, hi: i64::MAX }
        );
    }

    #[test]
    fn group_rules_first_match_wins() {
        let rules = [GroupRule::new("^G1", "G1GC"), GroupRule::new("GC", "gc"), GroupRule::new("^G1Heap", "never")];
        let text = "uintx G1HeapRegionSize = 1048576 {product}\nbool UseParallelGC = false {product}\nbool Other = true {product}";
        let dump = parse_flag_dump(text, &rules).unwrap();
        let groups: Vec<_> = dump.space.all_flags().iter().map(|f| f.group.clone().unwrap()).collect();
        assert_eq!(groups, ["G1GC", "gc", "common"]);
    }

    #[test]
    fn dump_reparse_is_idempotent() {
        let text = "uintx A = 45 {product}\nbool B := false {product}\ndouble C = 0.1 {product}\nintx D = -1 {product}\n";
        let rules = [GroupRule::new("^A", "x")];
        let first = parse_flag_dump(text, &rules).unwrap().space;
        let second = parse_flag_dump(&first.to_flag_dump(), &rules).unwrap().space;
        assert_eq!(first, second);
    }

    #[test]
    fn encode_examples() {
        let space = FlagSpace::new(vec![
            FlagSpec::boolean("B", false).unwrap(),
            FlagSpec::integer("I", 0, 100, 45).unwrap(),
        ])
        .unwrap();
        let c = Configuration::new().with("B", FlagValue::Bool(true)).with("I", FlagValue::Int(45));
        assert_eq!(space.encode(&c).unwrap(), vec![1.0, 0.45]);
    }

    #[test]
    fn encode_rejects_out_of_range_naming_flag() {
        let space = FlagSpace::new(vec![FlagSpec::integer("I", 0, 100, 45).unwrap()]).unwrap();
        let c = Configuration::new().with("I", FlagValue::Int(101));
        match space.encode(&c) {
            Err(Error::InvalidFlag { flag, .. }) => assert_eq!(flag, "I"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_rounds_to_nearest_integer() {
        let space = FlagSpace::new(vec![FlagSpec::integer("I", 0, 10, 5).unwrap()]).unwrap();
        assert_eq!(space.decode(&[0.449]).unwrap().get("I"), Some(&FlagValue::Int(4)));
        assert_eq!(space.decode(&[0.451]).unwrap().get("I"), Some(&FlagValue::Int(5)));
    }

    #[test]
    fn decode_zero_vector_gives_lower_bounds() {
        let space = sample_space();
        let c = space.decode(&vec![0.0; space.dim()]).unwrap();
        assert_eq!(c.get("UseG1GC"), Some(&FlagValue::Bool(false)));
        assert_eq!(c.get("InitiatingHeapOccupancyPercent"), Some(&FlagValue::Int(0)));
        assert_eq!(c.get("Ratio"), Some(&FlagValue::Real(0.0)));
        assert_eq!(c.get("Mode"), Some(&FlagValue::Text("a".into())));
        assert_eq!(c.get("ParallelGCThreads"), Some(&FlagValue::Int(1)));
    }

    #[test]
    fn decode_rejects_bad_vectors() {
        let space = sample_space();
        assert!(matches!(space.decode(&[0.5]), Err(Error::DimensionMismatch { .. })));
        let mut v = vec![0.5; space.dim()];
        v[2] = 1.5;
        assert!(matches!(space.decode(&v), Err(Error::OutOfUnitCube { index: 2, .. })));
    }

    #[test]
    fn group_activation_controls_dimension() {
        let space = sample_space();
        assert_eq!(space.dim(), 5);
        let g1_only = space.clone().with_active_groups(["G1GC"]);
        assert_eq!(g1_only.dim(), 4);
        assert_eq!(g1_only.names(), ["UseG1GC", "InitiatingHeapOccupancyPercent", "Ratio", "Mode"]);
        assert!(g1_only.restrict(&["ParallelGCThreads"]).is_err());
    }

    #[test]
    fn render_jvm_convention() {
        let space = FlagSpace::new(vec![
            FlagSpec::boolean("UseG1GC", true).unwrap(),
            FlagSpec::integer("InitiatingHeapOccupancyPercent", 0, 100, 45).unwrap(),
            FlagSpec::boolean("UseNUMA", true).unwrap(),
        ])
        .unwrap();
        let cfg = Configuration::new()
            .with("UseG1GC", FlagValue::Bool(true))
            .with("InitiatingHeapOccupancyPercent", FlagValue::Int(45))
            .with("UseNUMA", FlagValue::Bool(false));
        assert_eq!(
            space.render_cli_args(&cfg),
            ["-XX:+UseG1GC", "-XX:InitiatingHeapOccupancyPercent=45", "-XX:-UseNUMA"]
        );
        assert!(space.render_cli_args(&Configuration::new()).is_empty());
    }

    #[test]
    fn render_gnu_style() {
        let space = FlagSpace::new(vec![FlagSpec::continuous("rate", 0.0, 1.0, 0.25)
            .unwrap()
            .with_render(RenderStyle::Gnu)])
        .unwrap();
        assert_eq!(space.render_cli_args(&space.default_config()), ["--rate=0.25"]);
    }

    #[test]
    fn declarative_roundtrip_and_overrides() {
        let text = r#"
            [[flag]]
            name = "InitiatingHeapOccupancyPercent"
            kind = "integer"
            range = [0, 100]
            default = 45
            group = "G1GC"

            [[flag]]
            name = "Mode"
            kind = "categorical"
            values = ["x", "y"]
            default = "y"

            [[flag]]
            name = "Ratio"
            kind = "continuous"
            range = [0, 1.5]
            default = 1
        "#;
        let mut space = FlagSpace::from_declarative(text).unwrap();
        assert_eq!(space.dim(), 3);
        assert_eq!(FlagSpace::from_declarative(&space.to_declarative()).unwrap(), space);
        space
            .apply_overrides(&[FlagOverride {
                name: "InitiatingHeapOccupancyPercent".into(),
                range: Some(vec![FlagValue::Int(20), FlagValue::Int(80)]),
                ..Default::default()
            }])
            .unwrap();
        assert_eq!(
            space.spec("InitiatingHeapOccupancyPercent").unwrap().domain,
            Domain::Integer { lo: 20, hi: 80 }
        );
        assert_eq!(space.spec("InitiatingHeapOccupancyPercent").unwrap().group.as_deref(), Some("G1GC"));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(FlagSpec::integer("x", 5, 1, 3).is_err());
        assert!(FlagSpec::continuous("x", 1.0, 1.0, 1.0).is_err());
        assert!(FlagSpec::integer("x", 0, 10, 11).is_err());
        assert!(FlagSpec::categorical("x", vec!["a".into()], "b").is_err());
        let dup = vec![FlagSpec::boolean("a", true).unwrap(), FlagSpec::boolean("a", false).unwrap()];
        assert!(FlagSpace::new(dup).is_err());
    }

    #[test]
    fn complete_fills_defaults() {
        let space = sample_space();
        let partial = Configuration::new().with("Ratio", FlagValue::Real(1.0));
        let full = space.complete(&partial).unwrap();
        assert_eq!(full.len(), 5);
        assert_eq!(full.get("Ratio"), Some(&FlagValue::Real(1.0)));
        assert_eq!(full.get("Mode"), Some(&FlagValue::Text("b".into())));
        assert!(space.complete(&Configuration::new().with("Nope", FlagValue::Int(1))).is_err());
    }
}
