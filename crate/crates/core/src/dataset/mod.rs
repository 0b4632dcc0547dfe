//! Patient manifests, label mapping, stratified splitting and dataset comparison.

mod compare;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use compare::{compare_datasets, ClassComparison, ComparisonReport, Computed};
pub use split::stratified_split;

pub const REQUIRED_COLUMNS: [&str; 5] = ["id", "audio_path", "pathology", "sex", "age"];
pub const PACKS_COLUMN: &str = "packs_per_day";
pub const DRINKS_COLUMN: &str = "drinks_per_day";
pub const MIN_AGE: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    /// 1 for Malignant (the positive class), 0 for Benign.
    pub fn as_index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malignant => 1,
        }
    }

    pub fn from_bool(malignant: bool) -> Self {
        if malignant {
            Label::Malignant
        } else {
            Label::Benign
        }
    }

    pub fn is_malignant(self) -> bool {
        self == Label::Malignant
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "Benign",
            Label::Malignant => "Malignant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    /// Numeric encoding used for the demographic block: Female = 0, Male = 1.
    pub fn encode(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            other => Err(format!("unknown sex value `{other}`")),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub audio_path: String,
    pub pathology: String,
    pub label: Label,
    pub sex: Sex,
    pub age: u32,
    /// Declared symptom columns; `None` is a missing value.
    pub symptoms: BTreeMap<String, Option<f64>>,
    pub packs_per_day: Option<f64>,
    pub drinks_per_day: Option<f64>,
    /// Undeclared columns, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

/// Maps pathology names to binary labels. Names not listed are Benign.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub malignant_names: BTreeSet<String>,
}

impl LabelMap {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            malignant_names: names.into_iter().map(|s| s.into().trim().to_string()).collect(),
        }
    }

    pub fn label(&self, pathology: &str) -> Label {
        Label::from_bool(self.malignant_names.contains(pathology.trim()))
    }

    /// Parses the label-map format: names one per line under a `[malignant]` heading.
    pub fn parse(text: &str) -> Self {
        let mut in_malignant = false;
        let mut names = BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                in_malignant = line[1..line.len() - 1].trim().eq_ignore_ascii_case("malignant");
                continue;
            }
            if in_malignant {
                names.insert(line.to_string());
            }
        }
        Self { malignant_names: names }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The two FEMH malignant categories.
    pub fn femh() -> Self {
        Self::new(["Laryngeal cancer", "Dysplasia"])
    }

    /// The eight malignant and pre-malignant SVD conditions.
    pub fn svd() -> Self {
        Self::new([
            "Vocal cord cancer",
            "Hypopharyngeal tumor",
            "Larynx tumor",
            "Epiglottic cancer",
            "Nesopharyngeal tumor",
            "Carcinoma in situ",
            "Dysplastic dysphonia",
            "Dysplastic larynx",
        ])
    }
}

/// Declares which manifest columns are symptom features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomSchema {
    pub columns: Vec<String>,
}

impl SymptomSchema {
    pub fn new<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
        }
    }

    /// One column name per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub records: Vec<PatientRecord>,
    /// Declared symptom columns in declaration order; empty when the dataset has none.
    pub symptom_columns: Vec<String>,
    /// Whether the smoking/drinking columns were present in the manifest.
    pub has_lifestyle: bool,
    pub source: Option<PathBuf>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn has_symptoms(&self) -> bool {
        !self.symptom_columns.is_empty() || self.has_lifestyle
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn prevalence(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.count(Label::Malignant) as f64 / self.records.len() as f64
    }

    /// Copy holding the given rows, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            symptom_columns: self.symptom_columns.clone(),
            has_lifestyle: self.has_lifestyle,
            source: self.source.clone(),
        }
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary::of(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: Label,
    pub sex: Sex,
    pub count: usize,
    pub age_min: Option<u32>,
    pub age_mean: Option<f64>,
    pub age_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub total: usize,
    pub groups: Vec<GroupSummary>,
    pub prevalence: f64,
}

impl DatasetSummary {
    pub fn of(ds: &LabeledDataset) -> Self {
        let mut groups = Vec::new();
        for label in [Label::Benign, Label::Malignant] {
            for sex in [Sex::Female, Sex::Male] {
                let ages: Vec<u32> = ds
                    .records
                    .iter()
                    .filter(|r| r.label == label && r.sex == sex)
                    .map(|r| r.age)
                    .collect();
                groups.push(GroupSummary {
                    label,
                    sex,
                    count: ages.len(),
                    age_min: ages.iter().copied().min(),
                    age_mean: (!ages.is_empty())
                        .then(|| ages.iter().map(|&a| a as f64).sum::<f64>() / ages.len() as f64),
                    age_max: ages.iter().copied().max(),
                });
            }
        }
        Self {
            name: ds.name.clone(),
            total: ds.len(),
            groups,
            prevalence: ds.prevalence(),
        }
    }
}

fn parse_optional_number(raw: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = t.parse().map_err(|_| Error::Row {
        row,
        message: format!("column `{column}`: cannot parse `{t}` as a number"),
    })?;
    if v.is_nan() {
        return Ok(None);
    }
    Ok(Some(v))
}

/// Loads a comma-separated manifest with a header row and labels every row.
///
/// Row indices in errors are zero-based data rows (the header is not counted).
pub fn load_manifest(
    path: &Path,
    label_map: &LabelMap,
    schema: Option<&SymptomSchema>,
) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let mut ds = read_manifest(file, label_map, schema, &name)?;
    ds.source = Some(path.to_path_buf());
    Ok(ds)
}

/// Same as [`load_manifest`] over any reader.
pub fn read_manifest<R: std::io::Read>(
    reader: R,
    label_map: &LabelMap,
    schema: Option<&SymptomSchema>,
    name: &str,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let [id_c, audio_c, path_c, sex_c, age_c] = required;
    let packs_c = col(PACKS_COLUMN);
    let drinks_c = col(DRINKS_COLUMN);
    let symptom_columns: Vec<String> = schema.map(|s| s.columns.clone()).unwrap_or_default();
    let mut symptom_idx = Vec::with_capacity(symptom_columns.len());
    for s in &symptom_columns {
        symptom_idx.push(col(s).ok_or_else(|| Error::MissingColumn(s.clone()))?);
    }
    let mut known: BTreeSet<usize> = required.iter().copied().collect();
    known.extend(packs_c);
    known.extend(drinks_c);
    known.extend(symptom_idx.iter().copied());

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let age_raw = field(age_c);
        let age: u32 = age_raw
            .parse::<u32>()
            .or_else(|_| {
                // tolerate "45.0"
                age_raw
                    .parse::<f64>()
                    .ok()
                    .filter(|a| a.fract() == 0.0 && *a >= 0.0)
                    .map(|a| a as u32)
                    .ok_or(())
            })
            .map_err(|_| Error::Row {
                row,
                message: format!("cannot parse age `{age_raw}`"),
            })?;
        if age < MIN_AGE {
            log::warn!("{name}: row {row} has age {age} < {MIN_AGE}");
        }
        let sex: Sex = field(sex_c)
            .parse()
            .map_err(|message| Error::Row { row, message })?;
        let pathology = field(path_c).to_string();
        let mut symptoms = BTreeMap::new();
        for (s, &c) in symptom_columns.iter().zip(&symptom_idx) {
            symptoms.insert(s.clone(), parse_optional_number(field(c), s, row)?);
        }
        let packs = match packs_c {
            Some(c) => parse_optional_number(field(c), PACKS_COLUMN, row)?,
            None => None,
        };
        let drinks = match drinks_c {
            Some(c) => parse_optional_number(field(c), DRINKS_COLUMN, row)?,
            None => None,
        };
        for (v, c) in [(packs, PACKS_COLUMN), (drinks, DRINKS_COLUMN)] {
            if v.is_some_and(|v| v < 0.0) {
                return Err(Error::Row {
                    row,
                    message: format!("`{c}` must be non-negative"),
                });
            }
        }
        let extra = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !known.contains(i))
            .map(|(i, h)| (h.to_string(), field(i).to_string()))
            .collect();
        records.push(PatientRecord {
            id: field(id_c).to_string(),
            audio_path: field(audio_c).to_string(),
            label: label_map.label(&pathology),
            pathology,
            sex,
            age,
            symptoms,
            packs_per_day: packs,
            drinks_per_day: drinks,
            extra,
        });
    }
    Ok(LabeledDataset {
        name: name.to_string(),
        records,
        symptom_columns,
        has_lifestyle: packs_c.is_some() || drinks_c.is_some(),
        source: None,
    })
}

/// Writes a dataset back out in manifest form (used by `split`).
pub fn write_manifest<W: std::io::Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let extra_cols: Vec<String> = ds
        .records
        .first()
        .map(|r| r.extra.keys().cloned().collect())
        .unwrap_or_default();
    let mut header: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
    if ds.has_lifestyle {
        header.push(PACKS_COLUMN.into());
        header.push(DRINKS_COLUMN.into());
    }
    header.extend(ds.symptom_columns.iter().cloned());
    header.extend(extra_cols.iter().cloned());
    w.write_record(&header)?;
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    for r in &ds.records {
        let mut row = vec![
            r.id.clone(),
            r.audio_path.clone(),
            r.pathology.clone(),
            r.sex.to_string(),
            r.age.to_string(),
        ];
        if ds.has_lifestyle {
            row.push(fmt_opt(r.packs_per_day));
            row.push(fmt_opt(r.drinks_per_day));
        }
        for s in &ds.symptom_columns {
            row.push(fmt_opt(r.symptoms.get(s).copied().flatten()));
        }
        for e in &extra_cols {
            row.push(r.extra.get(e).cloned().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<manifest writer>", e))?;
    Ok(())
}
