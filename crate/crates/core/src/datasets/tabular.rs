use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, TabularDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownCategoryPolicy {
    #[default]
    Error,
    /// Encode an unseen category as the all-zero one-hot vector.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical {
        categories: Vec<String>,
    },
    /// Class column. Values not listed map to `default_class` when set.
    Label {
        classes: Vec<String>,
        #[serde(default)]
        default_class: Option<String>,
    },
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn numeric(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical {
                categories: categories.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn label(name: &str, classes: &[&str], default_class: Option<&str>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Label {
                classes: classes.iter().map(|s| s.to_string()).collect(),
                default_class: default_class.map(str::to_string),
            },
        }
    }

    pub fn ignore(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Ignore,
        }
    }
}

/// Column layout of a CSV file. Feature columns appear in schema order with
/// categorical columns expanded in category order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub unknown_category: UnknownCategoryPolicy,
    pub columns: Vec<ColumnSpec>,
}

impl DatasetSchema {
    /// Reads a schema from TOML (`.toml`) or JSON (anything else).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let shown = path.display().to_string();
        let schema: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::config(&shown, e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(&shown, e.to_string()))?
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self
            .columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Label { .. }))
            .count();
        if labels != 1 {
            return Err(Error::config(
                "columns",
                format!("expected one label column, found {labels}"),
            ));
        }
        if self.feature_dim() == 0 {
            return Err(Error::config("columns", "schema has no feature columns"));
        }
        for (i, c) in self.columns.iter().enumerate() {
            let list = match &c.kind {
                ColumnKind::Categorical { categories } => categories,
                ColumnKind::Label {
                    classes,
                    default_class,
                } => {
                    if let Some(d) = default_class {
                        if !classes.contains(d) {
                            return Err(Error::config(
                                format!("columns[{i}].default_class"),
                                format!("{d:?} is not one of the listed classes"),
                            ));
                        }
                    }
                    classes
                }
                _ => continue,
            };
            if list.is_empty() {
                return Err(Error::config(
                    format!("columns[{i}]"),
                    format!("{} lists no values", c.name),
                ));
            }
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::config(
                    format!("columns[{i}]"),
                    format!("{} lists duplicates", c.name),
                ));
            }
        }
        Ok(())
    }

    /// Encoded feature count: numeric columns plus categorical arities.
    pub fn feature_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Numeric => 1,
                ColumnKind::Categorical { categories } => categories.len(),
                _ => 0,
            })
            .sum()
    }

    fn feature_layout(&self) -> (Vec<String>, Vec<FeatureKind>) {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for c in &self.columns {
            match &c.kind {
                ColumnKind::Numeric => {
                    names.push(c.name.clone());
                    kinds.push(FeatureKind::Numeric);
                }
                ColumnKind::Categorical { categories } => {
                    for cat in categories {
                        names.push(format!("{}={cat}", c.name));
                        kinds.push(FeatureKind::OneHot);
                    }
                }
                _ => {}
            }
        }
        (names, kinds)
    }
}

enum Encoder<'a> {
    Numeric,
    OneHot(HashMap<&'a str, usize>, usize),
    Label(HashMap<&'a str, usize>, Option<usize>),
    Ignore,
}

/// Parses a comma-separated file according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<TabularDataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    if schema.has_header {
        let header = reader.headers()?.clone();
        for (i, (got, spec)) in header.iter().zip(&schema.columns).enumerate() {
            if got != spec.name {
                return Err(Error::MalformedRow {
                    line: 1,
                    message: format!(
                        "header column {i} is {got:?}, schema expects {:?}",
                        spec.name
                    ),
                });
            }
        }
    }

    let encoders: Vec<Encoder> = schema
        .columns
        .iter()
        .map(|c| match &c.kind {
            ColumnKind::Numeric => Encoder::Numeric,
            ColumnKind::Categorical { categories } => Encoder::OneHot(
                categories
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i))
                    .collect(),
                categories.len(),
            ),
            ColumnKind::Label {
                classes,
                default_class,
            } => {
                let map: HashMap<&str, usize> = classes
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i))
                    .collect();
                let fallback = default_class.as_deref().map(|d| map[d]);
                Encoder::Label(map, fallback)
            }
            ColumnKind::Ignore => Encoder::Ignore,
        })
        .collect();
    let class_names = schema
        .columns
        .iter()
        .find_map(|c| match &c.kind {
            ColumnKind::Label { classes, .. } => Some(classes.clone()),
            _ => None,
        })
        .expect("validated schema has a label column");

    let d = schema.feature_dim();
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != schema.columns.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    schema.columns.len(),
                    record.len()
                ),
            });
        }
        let mut label = None;
        for ((field, enc), spec) in record.iter().zip(&encoders).zip(&schema.columns) {
            match enc {
                Encoder::Numeric => {
                    let x: f64 = field.parse().map_err(|_| Error::MalformedRow {
                        line,
                        message: format!("column {:?}: {field:?} is not a number", spec.name),
                    })?;
                    if !x.is_finite() {
                        return Err(Error::MalformedRow {
                            line,
                            message: format!("column {:?}: non-finite value", spec.name),
                        });
                    }
                    values.push(x);
                }
                Encoder::OneHot(map, arity) => {
                    let start = values.len();
                    values.resize(start + arity, 0.0);
                    match map.get(field) {
                        Some(&k) => values[start + k] = 1.0,
                        None if schema.unknown_category == UnknownCategoryPolicy::Zero => {}
                        None => {
                            return Err(Error::UnknownCategory {
                                line,
                                column: spec.name.clone(),
                                value: field.to_string(),
                            })
                        }
                    }
                }
                Encoder::Label(map, fallback) => {
                    label = Some(map.get(field).copied().or(*fallback).ok_or_else(|| {
                        Error::UnknownCategory {
                            line,
                            column: spec.name.clone(),
                            value: field.to_string(),
                        }
                    })?);
                }
                Encoder::Ignore => {}
            }
        }
        labels.push(label.expect("validated schema has a label column"));
    }
    if labels.is_empty() {
        return Err(Error::invalid("CSV file contains no data rows"));
    }
    let features = DMatrix::from_row_slice(labels.len(), d, &values);
    let (names, kinds) = schema.feature_layout();
    TabularDataset::new(features, labels, names, kinds, class_names)
}

/// Per-column min-max scaling of numeric features to `[0, 1]`. Constant
/// columns map to 0. One-hot columns are left untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
}

impl MinMaxScaler {
    pub fn fit(data: &TabularDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a scaler on an empty dataset"));
        }
        let min = data.features.column_iter().map(|c| c.min()).collect();
        let max = data.features.column_iter().map(|c| c.max()).collect();
        Ok(Self {
            min,
            max,
            kinds: data.feature_kinds.clone(),
        })
    }

    /// Applies the fitted statistics; values outside the fitted range land
    /// outside `[0, 1]`.
    pub fn transform(&self, data: &mut TabularDataset) -> Result<()> {
        if data.dim() != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                found: data.dim(),
            });
        }
        for (j, mut col) in data.features.column_iter_mut().enumerate() {
            if self.kinds[j] != FeatureKind::Numeric {
                continue;
            }
            let span = self.max[j] - self.min[j];
            for x in col.iter_mut() {
                *x = if span > 0.0 {
                    (*x - self.min[j]) / span
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }
}

const NSLKDD_PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];

const NSLKDD_SERVICES: [&str; 70] = [
    "aol",
    "auth",
    "bgp",
    "courier",
    "csnet_ns",
    "ctf",
    "daytime",
    "discard",
    "domain",
    "domain_u",
    "echo",
    "eco_i",
    "ecr_i",
    "efs",
    "exec",
    "finger",
    "ftp",
    "ftp_data",
    "gopher",
    "harvest",
    "hostnames",
    "http",
    "http_2784",
    "http_443",
    "http_8001",
    "imap4",
    "IRC",
    "iso_tsap",
    "klogin",
    "kshell",
    "ldap",
    "link",
    "login",
    "mtp",
    "name",
    "netbios_dgm",
    "netbios_ns",
    "netbios_ssn",
    "netstat",
    "nnsp",
    "nntp",
    "ntp_u",
    "other",
    "pm_dump",
    "pop_2",
    "pop_3",
    "printer",
    "private",
    "red_i",
    "remote_job",
    "rje",
    "shell",
    "smtp",
    "sql_net",
    "ssh",
    "sunrpc",
    "supdup",
    "systat",
    "telnet",
    "tftp_u",
    "tim_i",
    "time",
    "urh_i",
    "urp_i",
    "uucp",
    "uucp_path",
    "vmnet",
    "whois",
    "X11",
    "Z39_50",
];

const NSLKDD_FLAGS: [&str; 11] = [
    "OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH",
];

const NSLKDD_NUMERIC_TAIL: [&str; 37] = [
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

/// Schema for the headerless NSL-KDD `KDDTrain+`/`KDDTest+` files: 41 raw
/// features (three categorical), the attack label collapsed to
/// normal/attack, and the trailing difficulty score ignored.
pub fn nslkdd_schema() -> DatasetSchema {
    let mut columns = vec![
        ColumnSpec::numeric("duration"),
        ColumnSpec::categorical("protocol_type", &NSLKDD_PROTOCOLS),
        ColumnSpec::categorical("service", &NSLKDD_SERVICES),
        ColumnSpec::categorical("flag", &NSLKDD_FLAGS),
    ];
    columns.extend(NSLKDD_NUMERIC_TAIL.iter().map(|n| ColumnSpec::numeric(n)));
    columns.push(ColumnSpec::label(
        "label",
        &["normal", "attack"],
        Some("attack"),
    ));
    columns.push(ColumnSpec::ignore("difficulty"));
    DatasetSchema {
        has_header: false,
        unknown_category: UnknownCategoryPolicy::Error,
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn small_schema() -> DatasetSchema {
        DatasetSchema {
            has_header: false,
            unknown_category: UnknownCategoryPolicy::Error,
            columns: vec![
                ColumnSpec::numeric("x"),
                ColumnSpec::categorical("proto", &["tcp", "udp"]),
                ColumnSpec::label("y", &["no", "yes"], None),
            ],
        }
    }

    #[test]
    fn two_rows_encode_to_three_columns() {
        let f = write("1.5,udp,yes\n-2,tcp,no\n");
        let ds = load_csv(f.path(), &small_schema()).unwrap();
        assert_eq!(ds.features.shape(), (2, 3));
        assert_eq!(
            ds.features.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.5, 0.0, 1.0]
        );
        assert_eq!(
            ds.features.row(1).iter().copied().collect::<Vec<_>>(),
            vec![-2.0, 1.0, 0.0]
        );
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.feature_names, vec!["x", "proto=tcp", "proto=udp"]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write("");
        assert!(load_csv(f.path(), &small_schema()).is_err());
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write("1,tcp,no\n2,udp\n");
        match load_csv(f.path(), &small_schema()) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write("1,tcp,no\n2,udp,no\nabc,udp,no\n");
        assert!(matches!(
            load_csv(f.path(), &small_schema()),
            Err(Error::MalformedRow { line: 3, .. })
        ));
    }

    #[test]
    fn unknown_category_policies() {
        let f = write("1,icmp,no\n");
        let mut schema = small_schema();
        assert!(matches!(
            load_csv(f.path(), &schema),
            Err(Error::UnknownCategory { line: 1, .. })
        ));
        schema.unknown_category = UnknownCategoryPolicy::Zero;
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(
            ds.features.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn header_must_match_schema() {
        let mut schema = small_schema();
        schema.has_header = true;
        let ok = write("x,proto,y\n1,tcp,no\n");
        assert_eq!(load_csv(ok.path(), &schema).unwrap().len(), 1);
        let bad = write("z,proto,y\n1,tcp,no\n");
        assert!(load_csv(bad.path(), &schema).is_err());
    }

    #[test]
    fn schema_sidecar_round_trips() {
        let schema = small_schema();
        let toml_text = toml::to_string(&schema).unwrap();
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        f.write_all(toml_text.as_bytes()).unwrap();
        assert_eq!(DatasetSchema::from_file(f.path()).unwrap(), schema);

        let json = write(&serde_json::to_string(&schema).unwrap());
        assert_eq!(DatasetSchema::from_file(json.path()).unwrap(), schema);
    }

    #[test]
    fn nslkdd_dimension() {
        let schema = nslkdd_schema();
        schema.validate().unwrap();
        let raw = schema
            .columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical { .. }))
            .count();
        assert_eq!(raw, 41);
        assert_eq!(schema.feature_dim(), 38 + 3 + 70 + 11);
    }

    #[test]
    fn nslkdd_row_parses() {
        let row = "0,tcp,ftp_data,SF,491,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2,2,0.00,0.00,0.00,0.00,1.00,0.00,0.00,150,25,0.17,0.03,0.17,0.00,0.00,0.00,0.05,0.00,normal,20\n\
                   0,udp,other,SF,146,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,13,1,0.00,0.00,0.00,0.00,0.08,0.15,0.00,255,1,0.00,0.60,0.88,0.00,0.00,0.00,0.00,0.00,neptune,15\n";
        let f = write(row);
        let ds = load_csv(f.path(), &nslkdd_schema()).unwrap();
        assert_eq!(ds.dim(), 122);
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn scaler_maps_numeric_columns_to_unit_interval() {
        let f = write("1,tcp,no\n3,udp,yes\n5,udp,no\n");
        let mut ds = load_csv(f.path(), &small_schema()).unwrap();
        let scaler = MinMaxScaler::fit(&ds).unwrap();
        scaler.transform(&mut ds).unwrap();
        assert_eq!(
            ds.features.column(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            ds.features.column(2).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 1.0]
        );
    }
}
