use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::mean_and_sample_std;

use super::raw::RawTable;

/// Continuous-positive values below this are floored before the log transform.
pub const POSITIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VariableKind {
    /// Positive, right-tailed; encoded as a z-scored log value.
    ContinuousPositive,
    /// One-of-j encoded. An empty level list is inferred from the data when
    /// the schema is fitted.
    Categorical {
        #[serde(default)]
        levels: Vec<String>,
    },
    /// Encoded as `(sin, cos)` of `2 pi value / period`.
    Cyclical { period: f64 },
    /// `0/1`, `true/false` or `yes/no`.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    #[default]
    Explanatory,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
    #[serde(default)]
    pub role: Role,
}

impl VariableSpec {
    pub fn continuous(name: &str) -> Self {
        Self { name: name.into(), kind: VariableKind::ContinuousPositive, role: Role::Explanatory }
    }

    pub fn binary(name: &str) -> Self {
        Self { name: name.into(), kind: VariableKind::Binary, role: Role::Explanatory }
    }

    pub fn cyclical(name: &str, period: f64) -> Self {
        Self { name: name.into(), kind: VariableKind::Cyclical { period }, role: Role::Explanatory }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
            role: Role::Explanatory,
        }
    }

    pub fn choice(name: &str, levels: &[&str]) -> Self {
        Self { role: Role::Choice, ..Self::categorical(name, levels) }
    }

    fn encoded_width(&self) -> usize {
        match &self.kind {
            VariableKind::ContinuousPositive | VariableKind::Binary => 1,
            VariableKind::Categorical { levels } => levels.len(),
            VariableKind::Cyclical { .. } => 2,
        }
    }
}

/// Mean and standard deviation of the log-values of a continuous variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Continuous,
    Binary,
    Categorical,
    Cyclical,
}

/// Encoded columns `offset..offset + width` of one explanatory variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
    pub width: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

/// A value recovered by inverting the encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedValue {
    Level(String),
    Real(f64),
    Flag(bool),
}

impl std::fmt::Display for DecodedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodedValue::Level(s) => f.write_str(s),
            DecodedValue::Real(v) => write!(f, "{v}"),
            DecodedValue::Flag(b) => f.write_str(if *b { "1" } else { "0" }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    variables: Vec<VariableSpec>,
    continuous_stats: BTreeMap<String, LogStats>,
    encoded_width: usize,
    #[serde(default)]
    floored_counts: BTreeMap<String, usize>,
}

/// Fitted description of how raw variables map into model space.
///
/// Explanatory variables occupy encoded columns in declaration order; the
/// choice variable is kept apart as the alternative index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct EncodingSchema {
    variables: Vec<VariableSpec>,
    continuous_stats: BTreeMap<String, LogStats>,
    encoded_width: usize,
    floored_counts: BTreeMap<String, usize>,
    blocks: Vec<Block>,
    choice_index: usize,
}

impl TryFrom<SchemaRepr> for EncodingSchema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        let schema = Self::new(r.variables, r.continuous_stats)?;
        if schema.encoded_width != r.encoded_width {
            return Err(Error::Schema(format!(
                "encoded_width {} does not match variable widths (sum {})",
                r.encoded_width, schema.encoded_width
            )));
        }
        Ok(Self { floored_counts: r.floored_counts, ..schema })
    }
}

impl From<EncodingSchema> for SchemaRepr {
    fn from(s: EncodingSchema) -> Self {
        SchemaRepr {
            variables: s.variables,
            continuous_stats: s.continuous_stats,
            encoded_width: s.encoded_width,
            floored_counts: s.floored_counts,
        }
    }
}

fn validate_specs(specs: &[VariableSpec]) -> Result<usize> {
    let mut names = BTreeSet::new();
    let mut choice = None;
    for (i, spec) in specs.iter().enumerate() {
        if !names.insert(spec.name.as_str()) {
            return Err(Error::Schema(format!("duplicate variable name `{}`", spec.name)));
        }
        match &spec.kind {
            VariableKind::Categorical { levels } => {
                let unique: BTreeSet<_> = levels.iter().collect();
                if unique.len() != levels.len() {
                    return Err(Error::Schema(format!("variable `{}` has duplicate levels", spec.name)));
                }
            }
            VariableKind::Cyclical { period } if !(*period > 0.0 && period.is_finite()) => {
                return Err(Error::Schema(format!("variable `{}`: cyclical period must be > 0", spec.name)));
            }
            _ => {}
        }
        if spec.role == Role::Choice {
            if choice.is_some() {
                return Err(Error::Schema("more than one variable has role = choice".into()));
            }
            if !matches!(spec.kind, VariableKind::Categorical { .. }) {
                return Err(Error::Schema(format!("choice variable `{}` must be categorical", spec.name)));
            }
            choice = Some(i);
        }
    }
    choice.ok_or_else(|| Error::Schema("no variable has role = choice".into()))
}

impl EncodingSchema {
    /// Assembles a schema from fully specified variables (categorical levels
    /// present) and log statistics for every continuous variable.
    pub fn new(variables: Vec<VariableSpec>, continuous_stats: BTreeMap<String, LogStats>) -> Result<Self> {
        let choice_index = validate_specs(&variables)?;
        let mut blocks = Vec::new();
        let mut offset = 0;
        for spec in &variables {
            if let VariableKind::Categorical { levels } = &spec.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("variable `{}` has no levels", spec.name)));
                }
            }
            if spec.role == Role::Choice {
                continue;
            }
            let kind = match &spec.kind {
                VariableKind::ContinuousPositive => {
                    let stats = continuous_stats
                        .get(&spec.name)
                        .ok_or_else(|| Error::Schema(format!("missing log statistics for `{}`", spec.name)))?;
                    if !(stats.std > 0.0 && stats.std.is_finite() && stats.mean.is_finite()) {
                        return Err(Error::DegenerateVariable(spec.name.clone()));
                    }
                    BlockKind::Continuous
                }
                VariableKind::Binary => BlockKind::Binary,
                VariableKind::Categorical { .. } => BlockKind::Categorical,
                VariableKind::Cyclical { .. } => BlockKind::Cyclical,
            };
            let width = spec.encoded_width();
            blocks.push(Block { name: spec.name.clone(), kind, offset, width });
            offset += width;
        }
        if let VariableKind::Categorical { levels } = &variables[choice_index].kind {
            if levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "choice variable `{}` needs at least 2 alternatives",
                    variables[choice_index].name
                )));
            }
        }
        Ok(Self {
            variables,
            continuous_stats,
            encoded_width: offset,
            floored_counts: BTreeMap::new(),
            blocks,
            choice_index,
        })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn continuous_stats(&self) -> &BTreeMap<String, LogStats> {
        &self.continuous_stats
    }

    /// Number of continuous values that needed the positive floor at fit time.
    pub fn floored_counts(&self) -> &BTreeMap<String, usize> {
        &self.floored_counts
    }

    /// Total encoded explanatory width M.
    pub fn encoded_width(&self) -> usize {
        self.encoded_width
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn choice_spec(&self) -> &VariableSpec {
        &self.variables[self.choice_index]
    }

    pub fn choice_name(&self) -> &str {
        &self.choice_spec().name
    }

    pub fn alternatives(&self) -> &[String] {
        match &self.choice_spec().kind {
            VariableKind::Categorical { levels } => levels,
            _ => unreachable!("choice variable validated as categorical"),
        }
    }

    /// Alternative count J.
    pub fn n_alternatives(&self) -> usize {
        self.alternatives().len()
    }

    pub fn spec(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Human-readable label for every encoded column, in column order.
    pub fn column_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.encoded_width);
        for (spec, block) in self.explanatory().zip(&self.blocks) {
            match &spec.kind {
                VariableKind::Categorical { levels } => {
                    labels.extend(levels.iter().map(|l| format!("{}:{}", block.name, l)))
                }
                VariableKind::Cyclical { .. } => {
                    labels.push(format!("{}:sin", block.name));
                    labels.push(format!("{}:cos", block.name));
                }
                _ => labels.push(block.name.clone()),
            }
        }
        labels
    }

    fn explanatory(&self) -> impl Iterator<Item = &VariableSpec> {
        self.variables.iter().filter(|v| v.role == Role::Explanatory)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Encodes one explanatory value into `out` (length = block width).
    fn encode_value(&self, spec: &VariableSpec, raw: &str, row: &str, out: &mut [f64]) -> Result<()> {
        let ingestion = |message: String| Error::Ingestion { row: row.to_string(), variable: spec.name.clone(), message };
        match &spec.kind {
            VariableKind::ContinuousPositive => {
                let v = parse_real(raw).map_err(ingestion)?;
                let v = floor_positive(v).map_err(ingestion)?;
                let stats = self.continuous_stats[&spec.name];
                out[0] = (v.ln() - stats.mean) / stats.std;
            }
            VariableKind::Binary => out[0] = if parse_flag(raw).map_err(ingestion)? { 1.0 } else { 0.0 },
            VariableKind::Categorical { levels } => {
                let k = levels.iter().position(|l| l == raw).ok_or_else(|| Error::UnseenLevel {
                    row: row.to_string(),
                    variable: spec.name.clone(),
                    levels: vec![raw.to_string()],
                })?;
                out.fill(0.0);
                out[k] = 1.0;
            }
            VariableKind::Cyclical { period } => {
                let v = parse_real(raw).map_err(ingestion)?;
                let angle = 2.0 * PI * v.rem_euclid(*period) / period;
                out[0] = angle.sin();
                out[1] = angle.cos();
            }
        }
        Ok(())
    }

    /// Encodes one record given a lookup from variable name to raw text.
    /// Variables in `skip` are left at a neutral placeholder (zeros, or the
    /// first level / zero angle for blocks that must stay valid).
    pub(crate) fn encode_with<'a>(
        &self,
        lookup: impl Fn(&str) -> Option<&'a str>,
        row: &str,
        skip: &[&str],
        x: &mut [f64],
    ) -> Result<Option<usize>> {
        for (spec, block) in self.explanatory().zip(&self.blocks) {
            let out = &mut x[block.range()];
            if skip.contains(&spec.name.as_str()) {
                out.fill(0.0);
                match block.kind {
                    BlockKind::Categorical => out[0] = 1.0,
                    BlockKind::Cyclical => out[1] = 1.0,
                    _ => {}
                }
                continue;
            }
            let raw = lookup(&spec.name).ok_or_else(|| Error::MissingColumn(spec.name.clone()))?;
            self.encode_value(spec, raw, row, out)?;
        }
        let choice = self.choice_spec();
        if skip.contains(&choice.name.as_str()) {
            return Ok(None);
        }
        let raw = lookup(&choice.name).ok_or_else(|| Error::MissingColumn(choice.name.clone()))?;
        let j = self.alternatives().iter().position(|l| l == raw).ok_or_else(|| Error::UnseenLevel {
            row: row.to_string(),
            variable: choice.name.clone(),
            levels: vec![raw.to_string()],
        })?;
        Ok(Some(j))
    }

    /// Inverts the encoding for one row: explanatory variables in schema
    /// order followed by the choice.
    pub fn decode_row(&self, x: &[f64], choice: usize) -> Vec<(String, DecodedValue)> {
        let mut out = Vec::with_capacity(self.variables.len());
        for (spec, block) in self.explanatory().zip(&self.blocks) {
            let cols = &x[block.range()];
            let value = match &spec.kind {
                VariableKind::ContinuousPositive => {
                    let s = self.continuous_stats[&spec.name];
                    DecodedValue::Real((cols[0] * s.std + s.mean).exp())
                }
                VariableKind::Binary => DecodedValue::Flag(cols[0] >= 0.5),
                VariableKind::Categorical { levels } => {
                    let k = argmax(cols);
                    DecodedValue::Level(levels[k].clone())
                }
                VariableKind::Cyclical { period } => {
                    let angle = cols[0].atan2(cols[1]).rem_euclid(2.0 * PI);
                    DecodedValue::Real(angle / (2.0 * PI) * period)
                }
            };
            out.push((spec.name.clone(), value));
        }
        out.push((self.choice_name().to_string(), DecodedValue::Level(self.alternatives()[choice].clone())));
        out
    }

    /// Header order used by [`Self::decode_row`].
    pub fn decoded_headers(&self) -> Vec<String> {
        let mut h: Vec<String> = self.explanatory().map(|s| s.name.clone()).collect();
        h.push(self.choice_name().to_string());
        h
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn parse_real(raw: &str) -> std::result::Result<f64, String> {
    let v: f64 = raw.trim().parse().map_err(|_| format!("cannot parse `{raw}` as a number"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value `{raw}`"));
    }
    Ok(v)
}

fn floor_positive(v: f64) -> std::result::Result<f64, String> {
    if v < 0.0 {
        Err(format!("negative value {v} for a continuous-positive variable"))
    } else {
        Ok(v.max(POSITIVE_FLOOR))
    }
}

fn parse_flag(raw: &str) -> std::result::Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(format!("cannot parse `{raw}` as binary")),
    }
}

/// Fits the encoding on `raw` (the training partition): infers missing
/// categorical levels and computes log statistics of continuous variables.
pub fn fit_schema(raw: &RawTable, specs: &[VariableSpec]) -> Result<EncodingSchema> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a schema on an empty table".into()));
    }
    validate_specs(specs)?;
    let mut variables = specs.to_vec();
    let mut stats = BTreeMap::new();
    let mut floored = BTreeMap::new();
    for spec in &mut variables {
        let col = raw.column(&spec.name).ok_or_else(|| Error::MissingColumn(spec.name.clone()))?;
        match &mut spec.kind {
            VariableKind::Categorical { levels } if levels.is_empty() => {
                let seen: BTreeSet<&str> = (0..raw.len()).map(|r| raw.get(r, col)).collect();
                *levels = seen.into_iter().map(str::to_string).collect();
            }
            VariableKind::ContinuousPositive => {
                let mut logs = Vec::with_capacity(raw.len());
                let mut n_floored = 0;
                for r in 0..raw.len() {
                    let ingestion = |message: String| Error::Ingestion {
                        row: raw.ids()[r].clone(),
                        variable: spec.name.clone(),
                        message,
                    };
                    let v = parse_real(raw.get(r, col)).map_err(ingestion)?;
                    if (0.0..POSITIVE_FLOOR).contains(&v) {
                        n_floored += 1;
                    }
                    logs.push(floor_positive(v).map_err(ingestion)?.ln());
                }
                let (mean, std) = mean_and_sample_std(&logs);
                if std.is_nan() || std <= 0.0 {
                    return Err(Error::DegenerateVariable(spec.name.clone()));
                }
                stats.insert(spec.name.clone(), LogStats { mean, std });
                if n_floored > 0 {
                    floored.insert(spec.name.clone(), n_floored);
                }
            }
            _ => {}
        }
    }
    let schema = EncodingSchema::new(variables, stats)?;
    Ok(EncodingSchema { floored_counts: floored, ..schema })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable::new(
            headers.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_variance_continuous_is_degenerate() {
        let e = std::f64::consts::E.to_string();
        let t = table(&["dist", "mode"], &[&[&e, "a"], &[&e, "b"], &[&e, "a"]]);
        let specs = [VariableSpec::continuous("dist"), VariableSpec::choice("mode", &[])];
        let err = fit_schema(&t, &specs).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariable(ref v) if v == "dist"));
        assert!(err.to_string().contains("degenerate variable"));
    }

    #[test]
    fn widths_sum_per_variable() {
        // continuous 1 + categorical(5) 5 + cyclical 2 = 8 explanatory columns
        let t = table(
            &["dist", "act", "hour", "mode"],
            &[&["1.0", "a", "3", "x"], &["2.0", "b", "4", "y"], &["3.0", "c", "5", "x"], &["4.0", "d", "6", "y"], &["5.0", "e", "7", "x"]],
        );
        let specs = [
            VariableSpec::continuous("dist"),
            VariableSpec::categorical("act", &[]),
            VariableSpec::cyclical("hour", 24.0),
            VariableSpec::choice("mode", &[]),
        ];
        let s = fit_schema(&t, &specs).unwrap();
        assert_eq!(s.encoded_width(), 1 + 5 + 2);
        assert_eq!(s.blocks().iter().map(|b| b.offset).collect::<Vec<_>>(), vec![0, 1, 6]);
        assert_eq!(s.n_alternatives(), 2);
        assert_eq!(s.column_labels()[1], "act:a");
    }

    #[test]
    fn missing_column_is_named() {
        let t = table(&["mode"], &[&["a"], &["b"]]);
        let specs = [VariableSpec::continuous("speed"), VariableSpec::choice("mode", &[])];
        assert!(matches!(fit_schema(&t, &specs), Err(Error::MissingColumn(c)) if c == "speed"));
    }

    #[test]
    fn negative_continuous_reports_row() {
        let t = RawTable::new(
            vec!["id".into(), "d".into(), "m".into()],
            vec![vec!["r1".into(), "1".into(), "a".into()], vec!["r2".into(), "-2".into(), "b".into()]],
            Some("id"),
        )
        .unwrap();
        let err = fit_schema(&t, &[VariableSpec::continuous("d"), VariableSpec::choice("m", &[])]).unwrap_err();
        match err {
            Error::Ingestion { row, .. } => assert_eq!(row, "r2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zeros_are_floored_and_counted() {
        let t = table(&["d", "m"], &[&["0", "a"], &["1", "b"], &["2", "a"]]);
        let s = fit_schema(&t, &[VariableSpec::continuous("d"), VariableSpec::choice("m", &[])]).unwrap();
        assert_eq!(s.floored_counts()["d"], 1);
    }

    #[test]
    fn spec_invariants_enforced() {
        let dup = [VariableSpec::categorical("a", &["x", "x"]), VariableSpec::choice("m", &["p", "q"])];
        assert!(EncodingSchema::new(dup.to_vec(), BTreeMap::new()).is_err());
        let two_choices = [VariableSpec::choice("a", &["x", "y"]), VariableSpec::choice("m", &["p", "q"])];
        assert!(EncodingSchema::new(two_choices.to_vec(), BTreeMap::new()).is_err());
        let bad_period = [VariableSpec::cyclical("h", 0.0), VariableSpec::choice("m", &["p", "q"])];
        assert!(EncodingSchema::new(bad_period.to_vec(), BTreeMap::new()).is_err());
        let single_alt = [VariableSpec::choice("m", &["p"])];
        assert!(EncodingSchema::new(single_alt.to_vec(), BTreeMap::new()).is_err());
    }

    #[test]
    fn schema_json_roundtrip_revalidates() {
        let mut stats = BTreeMap::new();
        stats.insert("d".to_string(), LogStats { mean: 0.3, std: 1.2 });
        let s = EncodingSchema::new(
            vec![VariableSpec::continuous("d"), VariableSpec::cyclical("h", 7.0), VariableSpec::choice("m", &["a", "b", "c"])],
            stats,
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: EncodingSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
        let tampered = json.replace("\"encoded_width\":3", "\"encoded_width\":4");
        assert!(serde_json::from_str::<EncodingSchema>(&tampered).is_err());
    }
}
