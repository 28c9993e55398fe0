//! Application datasets: loading from CSV or JSON, the permission
//! vocabulary, reputation filters and descriptive statistics.
//!
//! The default CSV layout is
//!
//! ```text
//! id,name,category,price,avg_rating,num_ratings,permissions
//! com.example.app,Example,Tools,0.99,4.2,1520,INTERNET;ACCESS_NETWORK_STATE
//! ```
//!
//! with permissions separated by `;`. JSON input is an array of objects with
//! the same keys, where `permissions` may also be an array of strings. Other
//! layouts (for example the published Android crawl) are read through a
//! [`ColumnMapping`] loaded from TOML.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::BinaryMatrix;

/// One application record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub id: String,
    pub name: String,
    pub category: String,
    /// Price in currency units; 0 for free applications.
    pub price: f64,
    /// Average user rating in `[1, 5]`, absent when nobody rated the app.
    pub avg_rating: Option<f64>,
    pub num_ratings: u64,
    /// The rating count was missing in the input and was read as 0.
    #[serde(default)]
    pub ratings_missing: bool,
    pub permissions: BTreeSet<String>,
}

impl Application {
    /// Application with no metadata besides its id and permissions.
    pub fn new<I, S>(id: impl Into<String>, permissions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Application {
            id: id.into(),
            name: String::new(),
            category: String::new(),
            price: 0.0,
            avg_rating: None,
            num_ratings: 0,
            ratings_missing: false,
            permissions: permissions.into_iter().map(Into::into).collect(),
        }
    }
}

/// A set of applications over a shared, sorted permission vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    apps: Vec<Application>,
    vocabulary: Vec<String>,
}

impl Dataset {
    /// Builds the vocabulary as the sorted union of all permission names.
    pub fn new(apps: Vec<Application>) -> Result<Self> {
        let vocabulary: BTreeSet<&String> = apps.iter().flat_map(|a| &a.permissions).collect();
        let vocabulary = vocabulary.into_iter().cloned().collect();
        Self::with_vocabulary(apps, vocabulary)
    }

    /// Uses a given vocabulary, which must be sorted, free of duplicates and
    /// cover every permission of every application.
    pub fn with_vocabulary(apps: Vec<Application>, vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("vocabulary must be sorted and unique".into()));
        }
        let mut seen = HashSet::with_capacity(apps.len());
        for app in &apps {
            if !seen.insert(app.id.as_str()) {
                return Err(Error::DuplicateId(app.id.clone()));
            }
            if let Some(p) = app
                .permissions
                .iter()
                .find(|p| vocabulary.binary_search(p).is_err())
            {
                return Err(Error::Config(format!(
                    "application `{}` requests `{p}`, which is not in the vocabulary",
                    app.id
                )));
            }
        }
        Ok(Dataset { apps, vocabulary })
    }

    pub fn apps(&self) -> &[Application] {
        &self.apps
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }

    /// Column index of a permission name.
    pub fn permission_index(&self, name: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|v| v.as_str().cmp(name)).ok()
    }

    /// Applications x permissions matrix labelled with ids and permission
    /// names.
    pub fn matrix(&self) -> BinaryMatrix {
        let rows: Vec<Vec<usize>> = self
            .apps
            .iter()
            .map(|a| {
                a.permissions
                    .iter()
                    .filter_map(|p| self.permission_index(p))
                    .collect()
            })
            .collect();
        let m = BinaryMatrix::from_row_indices(self.vocabulary.len(), &rows)
            .expect("permission indices come from the vocabulary");
        m.with_labels(
            Some(self.apps.iter().map(|a| a.id.clone()).collect()),
            Some(self.vocabulary.clone()),
        )
        .expect("one label per row and column")
    }

    pub fn categories(&self) -> Vec<String> {
        self.apps.iter().map(|a| a.category.clone()).collect()
    }

    /// Ids of applications whose rating count was missing in the input.
    pub fn missing_ratings(&self) -> Vec<&str> {
        self.apps
            .iter()
            .filter(|a| a.ratings_missing)
            .map(|a| a.id.as_str())
            .collect()
    }

    /// Applications named `app{i}` whose permissions are the ones of row `i`
    /// of `x`, named by the column labels of `x` or `perm{j}` without them.
    /// The vocabulary covers every column, including unrequested ones, in
    /// name order.
    pub fn from_matrix(x: &BinaryMatrix) -> Result<Self> {
        let names: Vec<String> = match x.col_labels() {
            Some(labels) => labels.to_vec(),
            None => {
                let width = x.cols().saturating_sub(1).to_string().len();
                (0..x.cols()).map(|j| format!("perm{j:0width$}")).collect()
            }
        };
        let width = x.rows().saturating_sub(1).to_string().len();
        let apps = (0..x.rows())
            .map(|i| {
                let id = match x.row_labels() {
                    Some(labels) => labels[i].clone(),
                    None => format!("app{i:0width$}"),
                };
                Application::new(id, x.row_ones(i).into_iter().map(|j| names[j].clone()))
            })
            .collect();
        let mut vocabulary = names;
        vocabulary.sort();
        Self::with_vocabulary(apps, vocabulary)
    }

    /// The dataset in the default CSV layout. A rating count that was
    /// missing in the input is written as an empty field.
    pub fn to_csv(&self) -> Result<String> {
        write_csv(
            &["id", "name", "category", "price", "avg_rating", "num_ratings", "permissions"],
            self.apps.iter().map(|a| {
                vec![
                    a.id.clone(),
                    a.name.clone(),
                    a.category.clone(),
                    a.price.to_string(),
                    a.avg_rating.map(|r| r.to_string()).unwrap_or_default(),
                    if a.ratings_missing {
                        String::new()
                    } else {
                        a.num_ratings.to_string()
                    },
                    a.permissions.iter().cloned().collect::<Vec<_>>().join(";"),
                ]
            }),
        )
    }

    /// The applications at `indices`, keeping this dataset's vocabulary so
    /// that matrices of subsets share columns.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            apps: indices.iter().map(|&i| self.apps[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }
}

/// Input file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// Maps input column names to application fields.
///
/// Only `id` and `permissions` must be present in the input; a missing
/// optional column leaves the field at its default (empty text, price 0,
/// no rating). Columns that are neither mapped nor listed in `ignore` are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub id: String,
    pub name: String,
    pub category: String,
    pub price: String,
    pub avg_rating: String,
    pub num_ratings: String,
    pub permissions: String,
    pub permission_separator: String,
    pub ignore: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: "id".into(),
            name: "name".into(),
            category: "category".into(),
            price: "price".into(),
            avg_rating: "avg_rating".into(),
            num_ratings: "num_ratings".into(),
            permissions: "permissions".into(),
            permission_separator: ";".into(),
            ignore: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Field {
    Id,
    Name,
    Category,
    Price,
    AvgRating,
    NumRatings,
    Permissions,
}

impl ColumnMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mapping: ColumnMapping =
            toml::from_str(text).map_err(|e| Error::Config(format!("column mapping: {e}")))?;
        if mapping.permission_separator.is_empty() {
            return Err(Error::Config("permission separator must not be empty".into()));
        }
        Ok(mapping)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn field(&self, column: &str) -> Option<Field> {
        [
            (&self.id, Field::Id),
            (&self.name, Field::Name),
            (&self.category, Field::Category),
            (&self.price, Field::Price),
            (&self.avg_rating, Field::AvgRating),
            (&self.num_ratings, Field::NumRatings),
            (&self.permissions, Field::Permissions),
        ]
        .into_iter()
        .find(|(name, _)| name.as_str() == column)
        .map(|(_, f)| f)
    }

    /// Resolves input columns to fields, rejecting unknown columns.
    fn resolve(&self, path: &Path, columns: &[String]) -> Result<HashMap<Field, usize>> {
        let mut fields = HashMap::new();
        for (i, column) in columns.iter().enumerate() {
            match self.field(column) {
                Some(f) => {
                    fields.insert(f, i);
                }
                None if self.ignore.iter().any(|c| c == column) => {}
                None => {
                    return Err(Error::UnknownColumn {
                        path: path.to_path_buf(),
                        column: column.clone(),
                    })
                }
            }
        }
        for (f, name) in [(Field::Id, &self.id), (Field::Permissions, &self.permissions)] {
            if !fields.contains_key(&f) {
                return Err(Error::Config(format!(
                    "{}: required column `{name}` is missing",
                    path.display()
                )));
            }
        }
        Ok(fields)
    }
}

/// Loads a dataset with the default column layout.
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    load_dataset_with(path, format, &ColumnMapping::default())
}

pub fn load_dataset_with(path: &Path, format: Format, mapping: &ColumnMapping) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let apps = match format {
        Format::Csv => parse_csv(path, &text, mapping)?,
        Format::Json => parse_json(path, &text, mapping)?,
    };
    Dataset::new(apps)
}

/// Raw text of one record, by field.
#[derive(Default)]
struct RawRecord<'a> {
    values: HashMap<Field, &'a str>,
    permission_list: Option<Vec<String>>,
}

fn parse_csv(path: &Path, text: &str, mapping: &ColumnMapping) -> Result<Vec<Application>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let fields = mapping.resolve(path, &headers)?;
    let mut apps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = RawRecord {
            values: fields
                .iter()
                .map(|(&f, &i)| (f, record.get(i).unwrap_or("")))
                .collect(),
            permission_list: None,
        };
        let app = build_application(&raw, mapping).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        apps.push(app);
    }
    Ok(apps)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn parse_json(path: &Path, text: &str, mapping: &ColumnMapping) -> Result<Vec<Application>> {
    let records: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
    let mut apps = Vec::with_capacity(records.len());
    for (index, object) in records.iter().enumerate() {
        let fail = |message: String| Error::Record {
            path: path.to_path_buf(),
            record: index,
            message,
        };
        let columns: Vec<String> = object.keys().cloned().collect();
        let fields = mapping.resolve(path, &columns)?;
        let mut raw = RawRecord::default();
        let mut owned: Vec<(Field, String)> = Vec::new();
        for (&f, &i) in &fields {
            match &object[&columns[i]] {
                serde_json::Value::Null => {}
                serde_json::Value::String(s) => owned.push((f, s.clone())),
                serde_json::Value::Number(n) => owned.push((f, n.to_string())),
                serde_json::Value::Array(items) if f == Field::Permissions => {
                    let names = items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| fail("permissions must be strings".into()))?;
                    raw.permission_list = Some(names);
                }
                other => {
                    return Err(fail(format!("unsupported value {other} for `{}`", columns[i])))
                }
            }
        }
        raw.values = owned.iter().map(|(f, s)| (*f, s.as_str())).collect();
        apps.push(build_application(&raw, mapping).map_err(fail)?);
    }
    Ok(apps)
}

fn build_application(raw: &RawRecord<'_>, mapping: &ColumnMapping) -> Result<Application, String> {
    let text = |f: Field| raw.values.get(&f).map(|s| s.trim()).unwrap_or("");
    let id = text(Field::Id);
    if id.is_empty() {
        return Err("empty application id".into());
    }
    let price = parse_price(text(Field::Price))?;
    let rating_text = text(Field::AvgRating);
    let count_text = text(Field::NumRatings);
    let ratings_missing = count_text.is_empty();
    let num_ratings = if ratings_missing {
        0
    } else {
        parse_count(count_text)?
    };
    let avg_rating = if rating_text.is_empty() {
        None
    } else {
        let v: f64 = rating_text
            .parse()
            .map_err(|_| format!("average rating `{rating_text}` is not a number"))?;
        // Crawlers commonly store unrated applications as rating 0.
        if v == 0.0 && num_ratings == 0 {
            None
        } else if (1.0..=5.0).contains(&v) {
            Some(v)
        } else {
            return Err(format!("average rating {v} outside [1, 5]"));
        }
    };
    let permissions = match &raw.permission_list {
        Some(list) => list
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect(),
        None => text(Field::Permissions)
            .split(mapping.permission_separator.as_str())
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect(),
    };
    Ok(Application {
        id: id.to_string(),
        name: text(Field::Name).to_string(),
        category: text(Field::Category).to_string(),
        price,
        avg_rating,
        num_ratings,
        ratings_missing,
        permissions,
    })
}

/// Accepts plain numbers, an optional leading currency sign, and `free`.
fn parse_price(s: &str) -> Result<f64, String> {
    if s.is_empty() || s.eq_ignore_ascii_case("free") {
        return Ok(0.0);
    }
    let digits = s.trim_start_matches(|c: char| !c.is_ascii_digit() && c != '.' && c != '-');
    match digits.replace(',', "").parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("price `{s}` is not a non-negative number")),
    }
}

/// Accepts integers, optionally with thousands separators or a trailing
/// `.0`.
fn parse_count(s: &str) -> Result<u64, String> {
    let cleaned = s.replace(',', "");
    if let Ok(v) = cleaned.parse::<u64>() {
        return Ok(v);
    }
    match cleaned.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("rating count `{s}` is not a non-negative integer")),
    }
}

/// Thresholds for the high- and low-reputation subsets and the held-out
/// test size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationCriteria {
    /// High reputation needs an average rating of at least this.
    pub min_rating: f64,
    /// High reputation needs at least this many ratings.
    pub min_count: u64,
    /// Low reputation means strictly fewer ratings than this.
    pub low_max_count: u64,
    /// High-reputation applications held out for testing.
    pub test_size: usize,
    pub seed: u64,
}

impl Default for ReputationCriteria {
    fn default() -> Self {
        ReputationCriteria {
            min_rating: 4.0,
            min_count: 100,
            low_max_count: 10,
            test_size: 2000,
            seed: 0,
        }
    }
}

impl ReputationCriteria {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ReputationCriteria =
            toml::from_str(text).map_err(|e| Error::Config(format!("reputation criteria: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Thresholds must be non-negative, and the low-reputation band must sit
    /// below the high-reputation count so the subsets cannot overlap.
    pub fn validate(&self) -> Result<()> {
        if !(self.min_rating >= 0.0 && self.min_rating.is_finite()) {
            return Err(Error::Config("minimum rating must be a non-negative number".into()));
        }
        if self.low_max_count > self.min_count {
            return Err(Error::Config(format!(
                "low-reputation bound {} exceeds the high-reputation count {}",
                self.low_max_count, self.min_count
            )));
        }
        Ok(())
    }

    pub fn is_high(&self, app: &Application) -> bool {
        app.num_ratings >= self.min_count && app.avg_rating.is_some_and(|r| r >= self.min_rating)
    }

    pub fn is_low(&self, app: &Application) -> bool {
        app.num_ratings < self.low_max_count
    }
}

/// Training set and the two test sets. All three share the source
/// vocabulary and keep the source order of applications.
#[derive(Clone, Debug, PartialEq)]
pub struct ReputationSplit {
    pub train: Dataset,
    pub test_high: Dataset,
    pub test_low: Dataset,
}

/// Splits high-reputation applications into training and held-out test
/// sets by seeded sampling, and collects low-reputation applications.
pub fn filter_reputation(ds: &Dataset, criteria: &ReputationCriteria) -> Result<ReputationSplit> {
    criteria.validate()?;
    let high: Vec<usize> = (0..ds.len()).filter(|&i| criteria.is_high(&ds.apps[i])).collect();
    if criteria.test_size > high.len() {
        return Err(Error::InsufficientPopulation {
            requested: criteria.test_size,
            available: high.len(),
        });
    }
    let mut shuffled = high.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(criteria.seed));
    let held: HashSet<usize> = shuffled[..criteria.test_size].iter().copied().collect();
    let (test, train): (Vec<usize>, Vec<usize>) = high.iter().partition(|i| held.contains(i));
    let low: Vec<usize> = (0..ds.len()).filter(|&i| criteria.is_low(&ds.apps[i])).collect();
    Ok(ReputationSplit {
        train: ds.subset(&train),
        test_high: ds.subset(&test),
        test_low: ds.subset(&low),
    })
}

/// Share of applications requesting one permission.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PermissionFrequency {
    pub permission: String,
    pub count: usize,
    pub fraction: f64,
}

/// Fraction of applications priced at or below `price`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PricePoint {
    pub price: f64,
    pub cumulative_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatedApp {
    pub id: String,
    pub avg_rating: f64,
    pub num_ratings: u64,
}

/// Histogram bin `[lower, upper)`; the last rating bin includes 5.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Descriptive statistics of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub applications: usize,
    pub permissions: usize,
    /// Most requested permissions, descending; ties by name.
    pub top_permissions: Vec<PermissionFrequency>,
    pub price_curve: Vec<PricePoint>,
    /// Applications with at least one rating.
    pub ratings: Vec<RatedApp>,
    /// Half-star bins from 1 to 5.
    pub rating_histogram: Vec<HistogramBin>,
    /// Decade bins `[1, 10)`, `[10, 100)`, ...
    pub count_histogram: Vec<HistogramBin>,
    pub missing_ratings: usize,
}

pub fn summary_stats(ds: &Dataset, top_n: usize) -> SummaryStats {
    let n = ds.len();
    let counts = ds.matrix().column_counts();
    let mut top: Vec<PermissionFrequency> = ds
        .vocabulary
        .iter()
        .zip(&counts)
        .map(|(p, &c)| PermissionFrequency {
            permission: p.clone(),
            count: c,
            fraction: if n == 0 { 0.0 } else { c as f64 / n as f64 },
        })
        .collect();
    top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.permission.cmp(&b.permission)));
    top.truncate(top_n);

    let mut prices: Vec<f64> = ds.apps.iter().map(|a| a.price).collect();
    prices.sort_by(f64::total_cmp);
    let mut price_curve: Vec<PricePoint> = Vec::new();
    for (i, &p) in prices.iter().enumerate() {
        let point = PricePoint {
            price: p,
            cumulative_fraction: (i + 1) as f64 / n as f64,
        };
        match price_curve.last_mut() {
            Some(last) if last.price == p => *last = point,
            _ => price_curve.push(point),
        }
    }

    let ratings: Vec<RatedApp> = ds
        .apps
        .iter()
        .filter(|a| a.num_ratings > 0)
        .filter_map(|a| {
            a.avg_rating.map(|r| RatedApp {
                id: a.id.clone(),
                avg_rating: r,
                num_ratings: a.num_ratings,
            })
        })
        .collect();

    let mut rating_histogram: Vec<HistogramBin> = (0..8)
        .map(|b| HistogramBin {
            lower: 1.0 + 0.5 * b as f64,
            upper: 1.5 + 0.5 * b as f64,
            count: 0,
        })
        .collect();
    let decades = ratings
        .iter()
        .map(|r| (r.num_ratings as f64).log10().floor() as usize)
        .max()
        .map_or(0, |d| d + 1);
    let mut count_histogram: Vec<HistogramBin> = (0..decades)
        .map(|d| HistogramBin {
            lower: 10f64.powi(d as i32),
            upper: 10f64.powi(d as i32 + 1),
            count: 0,
        })
        .collect();
    for r in &ratings {
        let bin = (((r.avg_rating - 1.0) / 0.5).floor() as usize).min(7);
        rating_histogram[bin].count += 1;
        count_histogram[(r.num_ratings as f64).log10().floor() as usize].count += 1;
    }

    SummaryStats {
        applications: n,
        permissions: ds.vocabulary.len(),
        top_permissions: top,
        price_curve,
        ratings,
        rating_histogram,
        count_histogram,
        missing_ratings: ds.missing_ratings().len(),
    }
}

impl SummaryStats {
    pub fn frequencies_csv(&self) -> Result<String> {
        write_csv(
            &["rank", "permission", "count", "fraction"],
            self.top_permissions.iter().enumerate().map(|(i, f)| {
                vec![
                    (i + 1).to_string(),
                    f.permission.clone(),
                    f.count.to_string(),
                    format!("{:.6}", f.fraction),
                ]
            }),
        )
    }

    pub fn price_csv(&self) -> Result<String> {
        write_csv(
            &["price", "cumulative_fraction"],
            self.price_curve
                .iter()
                .map(|p| vec![p.price.to_string(), format!("{:.6}", p.cumulative_fraction)]),
        )
    }

    pub fn ratings_csv(&self) -> Result<String> {
        write_csv(
            &["id", "avg_rating", "num_ratings"],
            self.ratings
                .iter()
                .map(|r| vec![r.id.clone(), r.avg_rating.to_string(), r.num_ratings.to_string()]),
        )
    }

    /// Both marginal histograms in one table, tagged by `axis`.
    pub fn histograms_csv(&self) -> Result<String> {
        let rows = self
            .rating_histogram
            .iter()
            .map(|b| ("avg_rating", b))
            .chain(self.count_histogram.iter().map(|b| ("num_ratings", b)))
            .map(|(axis, b)| {
                vec![
                    axis.to_string(),
                    b.lower.to_string(),
                    b.upper.to_string(),
                    b.count.to_string(),
                ]
            });
        write_csv(&["axis", "lower", "upper", "count"], rows)
    }
}

pub(crate) fn write_csv(
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::path::PathBuf;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let path = dir.path().join(name);
        fs::File::create(&path)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        path
    }

    const HEADER: &str = "id,name,category,price,avg_rating,num_ratings,permissions\n";

    #[test]
    fn matrix_round_trips_through_csv() {
        let x = BinaryMatrix::from_rows(&[
            vec![true, false, true],
            vec![false, false, false],
            vec![true, true, false],
        ])
        .unwrap();
        let ds = Dataset::from_matrix(&x).unwrap();
        assert_eq!(ds.vocabulary(), ["perm0", "perm1", "perm2"]);
        assert_eq!(ds.matrix().to_rows(), x.to_rows());

        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "apps.csv", &ds.to_csv().unwrap());
        let back = load_dataset(&path, Format::Csv).unwrap();
        assert_eq!(back.vocabulary(), ["perm0", "perm1", "perm2"]);
        assert_eq!(back.apps(), ds.apps());
    }

    #[test]
    fn two_apps_build_sorted_vocabulary_and_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,Tools,0,4.5,120,a\ny,Y,Games,0.99,3,5,b;a\n"));
        let ds = load_dataset(&path, Format::Csv).unwrap();
        assert_eq!(ds.vocabulary(), ["a", "b"]);
        assert_eq!(ds.matrix().to_rows(), vec![vec![true, false], vec![true, true]]);
        assert_eq!(ds.apps()[1].price, 0.99);
    }

    #[test]
    fn empty_permission_field_gives_zero_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,Tools,0,4,10,\ny,Y,Tools,0,4,10,a\n"));
        let ds = load_dataset(&path, Format::Csv).unwrap();
        assert_eq!(ds.matrix().row(0), vec![false]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,T,0,4,10,a\nx,Z,T,0,4,10,b\n"));
        match load_dataset(&path, Format::Csv) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "x"),
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,T,0,4,10,a\ny,Y,T,abc,4,10,a\n"));
        match load_dataset(&path, Format::Csv) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let path = write(&dir, "b.csv", &format!("{HEADER}x,X,T,0,4,10\n"));
        assert!(matches!(load_dataset(&path, Format::Csv), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn unknown_and_missing_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "id,permissions,downloads\nx,a,10\n");
        match load_dataset(&path, Format::Csv) {
            Err(Error::UnknownColumn { column, .. }) => assert_eq!(column, "downloads"),
            other => panic!("expected unknown column, got {other:?}"),
        }
        let mapping = ColumnMapping {
            ignore: vec!["downloads".into()],
            ..ColumnMapping::default()
        };
        assert_eq!(load_dataset_with(&path, Format::Csv, &mapping).unwrap().len(), 1);

        let path = write(&dir, "b.csv", "id,name\nx,X\n");
        assert!(matches!(load_dataset(&path, Format::Csv), Err(Error::Config(_))));
    }

    #[test]
    fn missing_ratings_are_flagged_as_zero_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,T,,,,a\ny,Y,T,free,0,0,a\n"));
        let ds = load_dataset(&path, Format::Csv).unwrap();
        assert_eq!(ds.apps()[0].num_ratings, 0);
        assert_eq!(ds.apps()[0].avg_rating, None);
        assert_eq!(ds.missing_ratings(), vec!["x"]);
        assert_eq!(ds.apps()[1].avg_rating, None);
        assert_eq!(ds.apps()[1].price, 0.0);
    }

    #[test]
    fn out_of_range_rating_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", &format!("{HEADER}x,X,T,0,7,10,a\n"));
        assert!(matches!(load_dataset(&path, Format::Csv), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn json_mirrors_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "a.json",
            r#"[{"id":"x","name":"X","category":"T","price":0,"avg_rating":4.5,"num_ratings":120,"permissions":["a"]},
                {"id":"y","name":"Y","category":"G","price":"0.99","avg_rating":3,"num_ratings":5,"permissions":"b;a"}]"#,
        );
        let ds = load_dataset(&path, Format::Json).unwrap();
        assert_eq!(ds.matrix().to_rows(), vec![vec![true, false], vec![true, true]]);
        assert_eq!(ds.apps()[0].avg_rating, Some(4.5));

        let path = write(&dir, "b.json", r#"[{"id":"x","permissions":[1]}]"#);
        assert!(matches!(load_dataset(&path, Format::Json), Err(Error::Record { record: 0, .. })));
        let path = write(&dir, "c.json", "[\n{\"id\": }\n]");
        assert!(matches!(load_dataset(&path, Format::Json), Err(Error::Parse { line: 2, .. })));
        let path = write(&dir, "d.json", r#"[{"id":"x","permissions":"a","extra":1}]"#);
        assert!(matches!(load_dataset(&path, Format::Json), Err(Error::UnknownColumn { .. })));
    }

    #[test]
    fn column_mapping_reads_other_layouts() {
        let mapping = ColumnMapping::from_toml(
            r#"
            id = "package"
            name = "title"
            permissions = "perms"
            permission_separator = "|"
            ignore = ["downloads"]
            "#,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "package,title,perms,downloads\np,P,full Internet access|view network state,5\n");
        let ds = load_dataset_with(&path, Format::Csv, &mapping).unwrap();
        assert_eq!(ds.vocabulary(), ["full Internet access", "view network state"]);
        assert!(ColumnMapping::from_toml("bogus = 1").is_err());
    }

    fn rated(id: &str, rating: Option<f64>, count: u64) -> Application {
        Application {
            avg_rating: rating,
            num_ratings: count,
            ..Application::new(id, ["a"])
        }
    }

    #[test]
    fn reputation_bounds_are_inclusive_and_bands_disjoint() {
        let c = ReputationCriteria {
            test_size: 1,
            ..ReputationCriteria::default()
        };
        assert!(c.is_high(&rated("a", Some(4.0), 100)));
        assert!(!c.is_high(&rated("b", Some(3.99), 100)));
        assert!(!c.is_high(&rated("c", Some(4.0), 99)));
        assert!(c.is_low(&rated("d", Some(5.0), 9)));
        let middle = rated("e", Some(3.5), 50);
        assert!(!c.is_high(&middle) && !c.is_low(&middle));

        let ds = Dataset::new(vec![
            rated("a", Some(4.0), 100),
            rated("b", Some(4.5), 500),
            rated("c", Some(5.0), 9),
            rated("d", Some(3.5), 50),
            rated("e", None, 0),
        ])
        .unwrap();
        let split = filter_reputation(&ds, &c).unwrap();
        assert_eq!(split.train.len() + split.test_high.len(), 2);
        assert_eq!(split.test_high.len(), 1);
        let low: Vec<&str> = split.test_low.apps().iter().map(|a| a.id.as_str()).collect();
        assert_eq!(low, ["c", "e"]);
        let again = filter_reputation(&ds, &c).unwrap();
        assert_eq!(again, split);

        let too_many = ReputationCriteria {
            test_size: 3,
            ..c.clone()
        };
        assert!(matches!(
            filter_reputation(&ds, &too_many),
            Err(Error::InsufficientPopulation { requested: 3, available: 2 })
        ));
        let overlapping = ReputationCriteria {
            low_max_count: 200,
            ..c
        };
        assert!(overlapping.validate().is_err());
    }

    #[test]
    fn criteria_from_toml() {
        let c = ReputationCriteria::from_toml("test_size = 5\nseed = 3\n").unwrap();
        assert_eq!((c.test_size, c.seed, c.min_count), (5, 3, 100));
        assert!(ReputationCriteria::from_toml("min_rating = -1").is_err());
    }

    #[test]
    fn summary_counts_and_curves() {
        let mut apps = vec![
            Application::new("x", ["a", "b"]),
            Application::new("y", ["a"]),
            Application::new("z", Vec::<String>::new()),
        ];
        apps[0].price = 0.99;
        apps[1].avg_rating = Some(4.2);
        apps[1].num_ratings = 150;
        apps[2].avg_rating = Some(5.0);
        apps[2].num_ratings = 3;
        let ds = Dataset::new(apps).unwrap();
        let s = summary_stats(&ds, 10);
        assert_eq!(s.top_permissions.len(), 2);
        assert_eq!(s.top_permissions[0].permission, "a");
        assert!((s.top_permissions[0].fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.price_curve.len(), 2);
        assert!((s.price_curve[0].cumulative_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.price_curve[1].cumulative_fraction, 1.0);
        assert_eq!(s.ratings.len(), 2);
        assert_eq!(s.rating_histogram[6].count, 1);
        assert_eq!(s.rating_histogram[7].count, 1);
        assert_eq!(s.count_histogram.len(), 3);
        assert_eq!(s.count_histogram[0].count, 1);
        assert_eq!(s.count_histogram[2].count, 1);
        assert!(s.frequencies_csv().unwrap().starts_with("rank,permission,count,fraction\n1,a,2,"));

        let both = Dataset::new(vec![Application::new("p", ["a"]), Application::new("q", ["a"])]).unwrap();
        assert_eq!(summary_stats(&both, 1).top_permissions[0].fraction, 1.0);
    }

    #[test]
    fn subsets_keep_vocabulary_and_rows() {
        let ds = Dataset::new(vec![Application::new("x", ["b"]), Application::new("y", ["a"])]).unwrap();
        let sub = ds.subset(&[0]);
        assert_eq!(sub.vocabulary(), ["a", "b"]);
        assert_eq!(sub.matrix().row(0), vec![false, true]);
        assert!(Dataset::with_vocabulary(vec![Application::new("x", ["c"])], vec!["a".into()]).is_err());
    }
}
