//! Study configuration files.
//!
//! The format is line based:
//!
//! ```text
//! # global keys come first
//! output_dir = "results"
//!
//! [convergence]
//! kind = h_convergence
//! schemes = [inflow, stabilized]
//! n = [5, 10, 20, 40, 80]
//! regimes = [[1, 0], [1e-10, 0], [1e-10, 2]]
//! sigma_power = 3
//! ```
//!
//! Values are numbers, booleans, quoted strings, bare words or bracketed
//! lists (nesting allowed). `#` starts a comment outside of strings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::anisofield::CaseId;
use crate::exec::Exec;
use crate::fem::Family;
use crate::schemes::Scheme;
use crate::spectral::Mode;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn value(&mut self) -> Result<Value, ConfigError> {
        self.skip_ws();
        match self.peek() {
            None => err(self.line, "missing value"),
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {}
                        _ => return err(self.line, "expected ',' or ']' in list"),
                    }
                }
            }
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().is_some_and(|c| c != b'"') {
                    self.pos += 1;
                }
                if self.peek().is_none() {
                    return err(self.line, "unterminated string");
                }
                let text = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                self.pos += 1;
                Ok(Value::Str(text))
            }
            Some(_) => {
                let start = self.pos;
                while self.peek().is_some_and(|c| !matches!(c, b',' | b']' | b'[') && !(c as char).is_ascii_whitespace()) {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                if word.is_empty() {
                    return err(self.line, "unexpected character");
                }
                Ok(match word {
                    "true" => Value::Bool(true),
                    "false" => Value::Bool(false),
                    _ => match word.parse::<f64>() {
                        Ok(x) => Value::Num(x),
                        Err(_) => Value::Str(word.to_string()),
                    },
                })
            }
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Ordered key/value table with the line of each key, for error messages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub entries: BTreeMap<String, (usize, Value)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub global: Table,
    /// Sections in file order: `(name, header line, table)`.
    pub sections: Vec<(String, usize, Table)>,
}

pub fn parse_document(text: &str) -> Result<Document, ConfigError> {
    let mut doc = Document::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line, "section header must end with ']'");
            };
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return err(line, format!("bad section name '{name}'"));
            }
            if doc.sections.iter().any(|s| s.0 == name) {
                return err(line, format!("duplicate section '{name}'"));
            }
            doc.sections.push((name.to_string(), line, Table::default()));
            continue;
        }
        let Some((key, rest)) = body.split_once('=') else {
            return err(line, "expected 'key = value'");
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return err(line, format!("bad key '{key}'"));
        }
        let mut cur = Cursor { s: rest.as_bytes(), pos: 0, line };
        let value = cur.value()?;
        cur.skip_ws();
        if cur.pos != cur.s.len() {
            return err(line, "trailing characters after value");
        }
        let table = match doc.sections.last_mut() {
            Some(s) => &mut s.2,
            None => &mut doc.global,
        };
        if table.entries.insert(key.to_string(), (line, value)).is_some() {
            return err(line, format!("duplicate key '{key}'"));
        }
    }
    Ok(doc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StudyKind {
    SigmaSweep,
    HConvergence,
    EpsSweep,
    Conditioning,
    LowRegularity,
    OracleValidation,
    InfsupProbe,
    Remark3Check,
}

impl StudyKind {
    pub const ALL: [StudyKind; 8] = [
        StudyKind::SigmaSweep,
        StudyKind::HConvergence,
        StudyKind::EpsSweep,
        StudyKind::Conditioning,
        StudyKind::LowRegularity,
        StudyKind::OracleValidation,
        StudyKind::InfsupProbe,
        StudyKind::Remark3Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::SigmaSweep => "sigma_sweep",
            StudyKind::HConvergence => "h_convergence",
            StudyKind::EpsSweep => "eps_sweep",
            StudyKind::Conditioning => "conditioning",
            StudyKind::LowRegularity => "low_regularity",
            StudyKind::OracleValidation => "oracle_validation",
            StudyKind::InfsupProbe => "infsup_probe",
            StudyKind::Remark3Check => "remark3_check",
        }
    }

    pub fn parse(s: &str) -> Option<StudyKind> {
        StudyKind::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }

    pub fn summary(self) -> &'static str {
        match self {
            StudyKind::SigmaSweep => "error of the stabilized scheme as a function of sigma",
            StudyKind::HConvergence => "relative L2/H1 errors and orders under mesh refinement",
            StudyKind::EpsSweep => "absolute errors as a function of eps at fixed mesh",
            StudyKind::Conditioning => "cond1 of the block matrices versus mesh size",
            StudyKind::LowRegularity => "auxiliary variable norms for a solution with a log singularity",
            StudyKind::OracleValidation => "finite elements against the Fourier series solution",
            StudyKind::InfsupProbe => "coarse/fine ratio of the coupling supremum (mesh dependence)",
            StudyKind::Remark3Check => "discrete star norm against its closed form on sin(kx)(cos y - cos 2y)",
        }
    }
}

/// How σ is chosen for the stabilized scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaRule {
    Fixed(Vec<f64>),
    /// `σ = h^p`.
    Power(f64),
}

impl SigmaRule {
    pub fn values(&self, h: f64) -> Vec<f64> {
        match self {
            SigmaRule::Fixed(v) => v.clone(),
            SigmaRule::Power(p) => vec![h.powf(*p)],
        }
    }
}

/// One study section, with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub name: String,
    pub kind: StudyKind,
    pub schemes: Vec<Scheme>,
    pub family: Family,
    pub n: Vec<usize>,
    /// `(eps, alpha)` pairs, in grid order.
    pub regimes: Vec<(f64, f64)>,
    pub sigma: SigmaRule,
    pub case: CaseId,
    /// Right-hand side modes for the oracle study.
    pub modes: Vec<Mode>,
    /// Wave numbers for the star norm closed-form check.
    pub k: Vec<u32>,
    pub flip_second_row: bool,
    pub forbid_failures: bool,
    pub timing: bool,
    pub exec: Exec,
    /// CSV path; the plot script goes next to it.
    pub output: PathBuf,
}

const SIGMA_DECADES: [f64; 16] =
    [1e-15, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

const TABLE_REGIMES: [(f64, f64); 3] = [(1.0, 0.0), (1e-10, 0.0), (1e-10, 2.0)];

impl StudyConfig {
    /// The production parameters. `n` counts cells per
    /// side; the mesh size of a degree-k family is `h = 1/(k n)`.
    pub fn defaults(kind: StudyKind) -> StudyConfig {
        let both = vec![Scheme::InflowAp, Scheme::StabilizedAp];
        let mut c = StudyConfig {
            name: kind.name().to_string(),
            kind,
            schemes: both.clone(),
            family: Family::Q2,
            n: vec![5, 10, 20, 40, 80],
            regimes: TABLE_REGIMES.to_vec(),
            sigma: SigmaRule::Power(3.0),
            case: CaseId::Smooth,
            modes: Vec::new(),
            k: Vec::new(),
            flip_second_row: false,
            forbid_failures: false,
            timing: false,
            exec: Exec::Parallel,
            output: PathBuf::from(format!("{}.csv", kind.name())),
        };
        match kind {
            StudyKind::SigmaSweep => {
                c.schemes = vec![Scheme::StabilizedAp];
                c.n = vec![50];
                c.sigma = SigmaRule::Fixed(SIGMA_DECADES.to_vec());
            }
            StudyKind::HConvergence => {}
            StudyKind::EpsSweep => {
                c.n = vec![50];
                c.regimes = [1e-20, 1e-16, 1e-12, 1e-8, 1e-4, 1e-2, 1e-1, 1.0, 10.0].iter().map(|&e| (e, 2.0)).collect();
            }
            StudyKind::Conditioning => {
                c.n = vec![10, 20, 40, 80];
                c.regimes = vec![(1e-10, 2.0)];
            }
            StudyKind::LowRegularity => {
                c.family = Family::Q1;
                c.n = vec![16, 32, 64, 128];
                c.regimes = vec![(1e-10, 0.0), (1e-10, 2.0)];
                c.sigma = SigmaRule::Power(2.0);
                c.case = CaseId::LowReg;
            }
            StudyKind::OracleValidation => {
                // σ = 0 would leave ξ(x) undetermined for the stabilized scheme when b = e2
                c.n = vec![4, 8, 16, 32];
                c.regimes = vec![(1.0, 0.0), (1e-10, 0.0)];
                c.sigma = SigmaRule::Fixed(vec![1e-6]);
                c.modes = vec![Mode { k: 1, l: 1, coef: 1.0 }];
            }
            StudyKind::InfsupProbe => {
                c.schemes = Vec::new();
                c.family = Family::P1;
                c.n = vec![4, 8, 16, 32];
                c.regimes = Vec::new();
            }
            StudyKind::Remark3Check => {
                c.schemes = Vec::new();
                c.n = vec![128];
                c.regimes = Vec::new();
                c.k = vec![1, 2, 3, 4];
            }
        }
        c
    }
}

/// Global settings plus the studies, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub studies: Vec<StudyConfig>,
}

fn num(line: usize, key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Num(x) => Ok(*x),
        other => err(line, format!("{key}: expected number, found {}", other.describe())),
    }
}

fn boolean(line: usize, key: &str, v: &Value) -> Result<bool, ConfigError> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => err(line, format!("{key}: expected true/false, found {}", other.describe())),
    }
}

fn word<'a>(line: usize, key: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    match v {
        Value::Str(s) => Ok(s),
        other => err(line, format!("{key}: expected a word, found {}", other.describe())),
    }
}

/// Scalars are accepted where a list is expected.
fn list<'a>(v: &'a Value) -> &'a [Value] {
    match v {
        Value::List(items) => items,
        other => std::slice::from_ref(other),
    }
}

fn non_empty<T>(line: usize, key: &str, v: Vec<T>) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        return err(line, format!("{key}: grid must not be empty"));
    }
    Ok(v)
}

fn count(line: usize, key: &str, x: f64) -> Result<usize, ConfigError> {
    if x.fract() != 0.0 || !(1.0..=1e6).contains(&x) {
        return err(line, format!("{key}: {x} is not a positive integer"));
    }
    Ok(x as usize)
}

fn finite(line: usize, key: &str, x: f64) -> Result<f64, ConfigError> {
    if !x.is_finite() {
        return err(line, format!("{key}: value must be finite"));
    }
    Ok(x)
}

const STUDY_KEYS: [&str; 16] = [
    "kind", "schemes", "family", "n", "eps", "alpha", "regimes", "sigma", "sigma_power", "case", "modes", "k",
    "flip_second_row", "forbid_failures", "output", "parallel",
];

fn study_from_table(name: &str, header: usize, t: &Table, global: &Table) -> Result<StudyConfig, ConfigError> {
    for (key, (line, _)) in &t.entries {
        if !STUDY_KEYS.contains(&key.as_str()) {
            return err(*line, format!("unknown key '{key}' in section [{name}]"));
        }
    }
    let Some((kl, kv)) = t.entries.get("kind") else {
        return err(header, format!("section [{name}] needs a 'kind' key"));
    };
    let kind_word = word(*kl, "kind", kv)?;
    let kind = StudyKind::parse(kind_word).map_or_else(|| err(*kl, format!("unknown study kind '{kind_word}'")), Ok)?;
    let mut c = StudyConfig::defaults(kind);
    c.name = name.to_string();
    c.output = PathBuf::from(format!("{name}.csv"));

    if let Some((l, v)) = global.entries.get("timing") {
        c.timing = boolean(*l, "timing", v)?;
    }
    for table in [global, t] {
        if let Some((l, v)) = table.entries.get("parallel") {
            c.exec = if boolean(*l, "parallel", v)? { Exec::Parallel } else { Exec::Sequential };
        }
    }
    let get = |k: &str| t.entries.get(k).map(|(l, v)| (*l, v));

    if let Some((l, v)) = get("schemes") {
        let mut s = Vec::new();
        for item in list(v) {
            let w = word(l, "schemes", item)?;
            s.push(Scheme::parse(w).map_or_else(|| err(l, format!("unknown scheme '{w}'")), Ok)?);
        }
        c.schemes = non_empty(l, "schemes", s)?;
    }
    if let Some((l, v)) = get("family") {
        let w = word(l, "family", v)?;
        c.family = Family::parse(w).map_or_else(|| err(l, format!("unknown element family '{w}'")), Ok)?;
    }
    if let Some((l, v)) = get("n") {
        let ns = list(v).iter().map(|x| count(l, "n", num(l, "n", x)?)).collect::<Result<Vec<_>, _>>()?;
        c.n = non_empty(l, "n", ns)?;
    }
    if let Some((l, v)) = get("regimes") {
        if get("eps").is_some() || get("alpha").is_some() {
            return err(l, "give either 'regimes' or 'eps'/'alpha', not both");
        }
        let mut r = Vec::new();
        for item in list(v) {
            match list(item) {
                [e, a] => r.push((finite(l, "regimes", num(l, "regimes", e)?)?, finite(l, "regimes", num(l, "regimes", a)?)?)),
                _ => return err(l, "regimes: each entry must be [eps, alpha]"),
            }
        }
        c.regimes = non_empty(l, "regimes", r)?;
    } else if get("eps").is_some() || get("alpha").is_some() {
        let defaults_eps: Vec<f64> = dedup(c.regimes.iter().map(|r| r.0));
        let defaults_alpha: Vec<f64> = dedup(c.regimes.iter().map(|r| r.1));
        let grid = |key: &str, fallback: Vec<f64>| -> Result<Vec<f64>, ConfigError> {
            match get(key) {
                Some((l, v)) => non_empty(l, key, list(v).iter().map(|x| finite(l, key, num(l, key, x)?)).collect::<Result<_, _>>()?),
                None => Ok(fallback),
            }
        };
        let eps = grid("eps", defaults_eps)?;
        let alpha = grid("alpha", defaults_alpha)?;
        c.regimes = eps.iter().flat_map(|&e| alpha.iter().map(move |&a| (e, a))).collect();
    }
    match (get("sigma"), get("sigma_power")) {
        (Some((l, _)), Some(_)) => return err(l, "give either 'sigma' or 'sigma_power', not both"),
        (Some((l, v)), None) => {
            let s = list(v).iter().map(|x| finite(l, "sigma", num(l, "sigma", x)?)).collect::<Result<Vec<_>, _>>()?;
            if s.iter().any(|&x| x < 0.0) {
                return err(l, "sigma must be >= 0");
            }
            c.sigma = SigmaRule::Fixed(non_empty(l, "sigma", s)?);
        }
        (None, Some((l, v))) => c.sigma = SigmaRule::Power(finite(l, "sigma_power", num(l, "sigma_power", v)?)?),
        (None, None) => {}
    }
    if let Some((l, v)) = get("case") {
        c.case = match word(l, "case", v)?.to_ascii_lowercase().as_str() {
            "smooth" => CaseId::Smooth,
            "low_reg" => CaseId::LowReg,
            other => return err(l, format!("unknown case '{other}'")),
        };
    }
    if let Some((l, v)) = get("modes") {
        let mut modes = Vec::new();
        for item in list(v) {
            let parts = list(item).iter().map(|x| num(l, "modes", x)).collect::<Result<Vec<_>, _>>()?;
            let (k, lw, coef) = match parts[..] {
                [k, lw] => (k, lw, 1.0),
                [k, lw, c] => (k, lw, c),
                _ => return err(l, "modes: each entry must be [k, l] or [k, l, coef]"),
            };
            if k < 1.0 || lw < 0.0 || k.fract() != 0.0 || lw.fract() != 0.0 || k > 1e4 || lw > 1e4 || !coef.is_finite() {
                return err(l, format!("modes: bad mode [{k}, {lw}]"));
            }
            modes.push(Mode { k: k as u32, l: lw as u32, coef });
        }
        c.modes = non_empty(l, "modes", modes)?;
    }
    if let Some((l, v)) = get("k") {
        let ks = list(v).iter().map(|x| count(l, "k", num(l, "k", x)?).map(|k| k as u32)).collect::<Result<Vec<_>, _>>()?;
        c.k = non_empty(l, "k", ks)?;
    }
    for (key, slot) in [("flip_second_row", &mut c.flip_second_row), ("forbid_failures", &mut c.forbid_failures)] {
        if let Some((l, v)) = get(key) {
            *slot = boolean(l, key, v)?;
        }
    }
    if let Some((l, v)) = get("output") {
        c.output = PathBuf::from(word(l, "output", v)?);
    }
    validate(&c, header)?;
    Ok(c)
}

fn dedup(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Checks that do not depend on how the values were written.
pub fn validate(c: &StudyConfig, line: usize) -> Result<(), ConfigError> {
    if c.n.is_empty() {
        return err(line, "n grid is empty");
    }
    match c.kind {
        StudyKind::InfsupProbe => {
            if let Some(n) = c.n.iter().find(|&&n| n % 2 == 1) {
                return err(line, format!("infsup_probe needs even n, got {n}"));
            }
        }
        StudyKind::Remark3Check => {
            if c.k.is_empty() {
                return err(line, "remark3_check needs a non-empty k list");
            }
        }
        _ => {
            if c.schemes.is_empty() || c.regimes.is_empty() {
                return err(line, "schemes and regimes must not be empty");
            }
            if let Some(r) = c.regimes.iter().find(|r| r.0 < 0.0 || r.1 < 0.0) {
                return err(line, format!("negative eps or alpha in regime {r:?}"));
            }
        }
    }
    if c.kind == StudyKind::OracleValidation {
        if c.modes.is_empty() {
            return err(line, "oracle_validation needs modes");
        }
        if c.regimes.iter().any(|r| r.0 > 1.0) {
            return err(line, "oracle_validation needs eps <= 1");
        }
    }
    if c.kind == StudyKind::SigmaSweep && c.schemes != [Scheme::StabilizedAp] {
        return err(line, "sigma_sweep only runs the stabilized scheme");
    }
    Ok(())
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc = parse_document(text)?;
    for (key, (line, _)) in &doc.global.entries {
        if !["output_dir", "timing", "parallel"].contains(&key.as_str()) {
            return err(*line, format!("unknown global key '{key}'"));
        }
    }
    let output_dir = match doc.global.entries.get("output_dir") {
        Some((l, v)) => PathBuf::from(word(*l, "output_dir", v)?),
        None => PathBuf::from("."),
    };
    if doc.sections.is_empty() {
        return err(1, "no study sections");
    }
    let studies = doc
        .sections
        .iter()
        .map(|(name, line, t)| study_from_table(name, *line, t, &doc.global))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunConfig { output_dir, studies })
}
