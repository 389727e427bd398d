//! Trial data loading, validation, standardization and dummy coding.
//!
//! A [`TrialDataset`] owns the design the model sees: per-patient doses and
//! responses, a standardized/dummy-coded covariate matrix, and the partition
//! of columns into covariate groups. Groups matter because all dummy columns
//! of one categorical covariate share a single local shrinkage component, and
//! predictive shrinkage is shared between the Emax and ED50 effects of the
//! same covariate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

/// Whether a design column is a standardized continuous covariate or a 0/1
/// dummy column of a categorical covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    Dummy,
}

/// Per-column standardization bookkeeping; allows exact inverse transforms.
/// Dummy columns are recorded with `mean = 0, sd = 1` and are never rescaled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub mean: f64,
    pub sd: f64,
    pub kind: ColumnKind,
}

impl StandardizationRecord {
    /// Map a standardized value back to the original scale.
    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// One covariate group: a continuous covariate is a singleton group; a
/// categorical covariate with Z levels is a group of its Z-1 dummy columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateGroup {
    /// Name of the underlying covariate.
    pub name: String,
    /// Design-matrix column indices belonging to this group.
    pub columns: Vec<usize>,
}

/// Column roles for [`load_dataset`]: names of the dose and response columns
/// and which of the remaining columns are categorical. Every column that is
/// not dose, response or categorical is treated as a continuous covariate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub dose: String,
    pub response: String,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self { dose: "dose".into(), response: "response".into(), categorical: Vec::new() }
    }
}

/// Validated, immutable trial data. Covariates are stored row-major (n x p).
#[derive(Debug, Clone)]
pub struct TrialDataset {
    doses: Vec<f64>,
    responses: Vec<f64>,
    covariates: Vec<f64>,
    n: usize,
    p: usize,
    column_names: Vec<String>,
    groups: Vec<CovariateGroup>,
    column_group: Vec<usize>,
    dose_levels: Vec<f64>,
    standardization: Vec<StandardizationRecord>,
}

/// JSON-facing load summary: n, k, p, dose levels and the group map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub dose_levels: Vec<f64>,
    pub groups: BTreeMap<String, Vec<String>>,
}

impl TrialDataset {
    /// Assemble a dataset from raw continuous covariate columns (each becomes
    /// a singleton group and is standardized) and optional categorical columns
    /// given as level strings (dummy-coded against the lexicographically first
    /// level).
    pub fn new(
        doses: Vec<f64>,
        responses: Vec<f64>,
        continuous: Vec<(String, Vec<f64>)>,
        categorical: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        let n = doses.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if responses.len() != n {
            return Err(Error::Data(format!(
                "response column has {} rows, dose column has {}",
                responses.len(),
                n
            )));
        }
        for (i, &d) in doses.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Data(format!("row {}: invalid dose {}", i + 1, d)));
            }
        }
        for (i, &y) in responses.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Data(format!("row {}: non-finite response", i + 1)));
            }
        }

        let mut dose_levels: Vec<f64> = doses.clone();
        dose_levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dose_levels.dedup();
        if dose_levels.first() != Some(&0.0) {
            return Err(Error::Data("dose column has no placebo (0) level".into()));
        }
        if dose_levels.len() < 2 {
            return Err(Error::Data("no active dose: all doses are 0".into()));
        }

        let mut column_names = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut standardization = Vec::new();
        let mut groups: Vec<CovariateGroup> = Vec::new();

        for (name, raw) in continuous {
            if raw.len() != n {
                return Err(Error::Data(format!("column {name} has wrong length")));
            }
            if raw.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("column {name} contains non-numeric or NaN cells")));
            }
            let (col, rec) = standardize(&raw)
                .map_err(|e| Error::Data(format!("column {name}: {e}")))?;
            groups.push(CovariateGroup { name: name.clone(), columns: vec![columns.len()] });
            column_names.push(name);
            columns.push(col);
            standardization.push(rec);
        }

        for (name, raw) in categorical {
            if raw.len() != n {
                return Err(Error::Data(format!("column {name} has wrong length")));
            }
            if raw.iter().any(|s| s.is_empty()) {
                return Err(Error::Data(format!("column {name} contains empty cells")));
            }
            let mut levels: Vec<String> = raw.clone();
            levels.sort();
            levels.dedup();
            if levels.len() < 2 {
                return Err(Error::Data(format!(
                    "categorical column {name} has a single level"
                )));
            }
            // reference level = lexicographically first
            let mut group_cols = Vec::new();
            for level in &levels[1..] {
                let col: Vec<f64> =
                    raw.iter().map(|s| if s == level { 1.0 } else { 0.0 }).collect();
                group_cols.push(columns.len());
                column_names.push(format!("{name}_{level}"));
                columns.push(col);
                standardization.push(StandardizationRecord {
                    mean: 0.0,
                    sd: 1.0,
                    kind: ColumnKind::Dummy,
                });
            }
            groups.push(CovariateGroup { name, columns: group_cols });
        }

        let p = columns.len();
        let mut covariates = vec![0.0; n * p];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                covariates[i * p + j] = v;
            }
        }
        let mut column_group = vec![0usize; p];
        for (g, grp) in groups.iter().enumerate() {
            for &j in &grp.columns {
                column_group[j] = g;
            }
        }

        Ok(Self {
            doses,
            responses,
            covariates,
            n,
            p,
            column_names,
            groups,
            column_group,
            dose_levels,
            standardization,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of design-matrix columns (after dummy coding).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of covariate groups.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Row `i` of the standardized design matrix.
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn groups(&self) -> &[CovariateGroup] {
        &self.groups
    }

    /// Group index of design column `j`.
    pub fn group_of(&self, j: usize) -> usize {
        self.column_group[j]
    }

    /// Sorted distinct dose levels; `dose_levels()[0] == 0`.
    pub fn dose_levels(&self) -> &[f64] {
        &self.dose_levels
    }

    /// The active (non-placebo) dose levels.
    pub fn active_doses(&self) -> &[f64] {
        &self.dose_levels[1..]
    }

    pub fn d_max(&self) -> f64 {
        *self.dose_levels.last().unwrap()
    }

    pub fn standardization(&self) -> &[StandardizationRecord] {
        &self.standardization
    }

    /// Mean response among patients at the given dose level.
    pub fn mean_response_at(&self, dose: f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (d, y) in self.doses.iter().zip(&self.responses) {
            if *d == dose {
                sum += y;
                count += 1;
            }
        }
        sum / count.max(1) as f64
    }

    pub fn summary(&self) -> DatasetSummary {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                (g.name.clone(), g.columns.iter().map(|&j| self.column_names[j].clone()).collect())
            })
            .collect();
        DatasetSummary {
            n: self.n,
            k: self.k(),
            p: self.p,
            dose_levels: self.dose_levels.clone(),
            groups,
        }
    }

    /// Fingerprint of the numeric content; used by the simulation harness to
    /// confirm paired methods saw the identical dataset.
    pub fn content_hash(&self) -> u64 {
        stats::hash_f64s(&[&self.doses, &self.responses, &self.covariates])
    }
}

/// Center and scale a raw column to mean 0, sd 1 (sample sd, n-1 denominator).
pub fn standardize(raw: &[f64]) -> Result<(Vec<f64>, StandardizationRecord)> {
    if raw.len() < 2 {
        return Err(Error::Data("standardization needs at least 2 values".into()));
    }
    let mean = stats::mean(raw);
    let sd = stats::sample_sd(raw);
    if !(sd > 0.0) {
        return Err(Error::Data("constant column: zero standard deviation".into()));
    }
    let col = raw.iter().map(|x| (x - mean) / sd).collect();
    Ok((col, StandardizationRecord { mean, sd, kind: ColumnKind::Continuous }))
}

/// Load a CSV file (header row, one row per patient) under the given schema.
pub fn load_dataset<P: AsRef<Path>>(path: P, schema: &ColumnSchema) -> Result<TrialDataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}` in {}", path.display())))
    };
    let dose_idx = find(&schema.dose)?;
    let resp_idx = find(&schema.response)?;
    for c in &schema.categorical {
        find(c)?;
    }

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        raw_rows.push(record.iter().map(|s| s.trim().to_string()).collect());
    }
    if raw_rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let parse_numeric = |col: usize, what: &str| -> Result<Vec<f64>> {
        raw_rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row.get(col).map(String::as_str).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!("row {}: non-numeric {what} `{cell}`", i + 1))
                })?;
                if v.is_nan() {
                    return Err(Error::Data(format!("row {}: NaN {what}", i + 1)));
                }
                Ok(v)
            })
            .collect()
    };

    let doses = parse_numeric(dose_idx, "dose")?;
    let responses = parse_numeric(resp_idx, "response")?;

    let mut continuous = Vec::new();
    let mut categorical = Vec::new();
    for (j, name) in headers.iter().enumerate() {
        if j == dose_idx || j == resp_idx {
            continue;
        }
        if schema.categorical.iter().any(|c| c == name) {
            let col: Vec<String> = raw_rows.iter().map(|r| r[j].clone()).collect();
            categorical.push((name.clone(), col));
        } else {
            let col = parse_numeric(j, &format!("value in column `{name}`"))?;
            continuous.push((name.clone(), col));
        }
    }

    TrialDataset::new(doses, responses, continuous, categorical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn standardize_symmetric_column() {
        let (col, rec) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
        assert_eq!(rec.mean, 2.0);
        assert_eq!(rec.sd, 1.0);
    }

    #[test]
    fn standardize_constant_column_errors() {
        assert!(standardize(&[5.0, 5.0, 5.0]).is_err());
    }

    #[test]
    fn standardize_round_trip() {
        let raw = [1.3, -0.2, 4.7, 2.2, 9.1];
        let (col, rec) = standardize(&raw).unwrap();
        for (z, x) in col.iter().zip(&raw) {
            assert!((rec.invert(*z) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn four_row_example_standardization() {
        // doses {0,0,50,50}, covariate {1,2,3,4}: sample sd 1.29099, so the
        // standardized column is +-1.1619, +-0.3873.
        let f = write_csv("dose,response,x1\n0,1.0,1\n0,1.1,2\n50,1.4,3\n50,1.5,4\n");
        let ds = load_dataset(f.path(), &ColumnSchema::default()).unwrap();
        let col: Vec<f64> = (0..4).map(|i| ds.x_row(i)[0]).collect();
        let expect = [-1.161895, -0.387298, 0.387298, 1.161895];
        for (a, b) in col.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        assert!(stats::mean(&col).abs() < 1e-10);
        assert!((stats::sample_sd(&col) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn all_placebo_is_rejected() {
        let f = write_csv("dose,response,x1\n0,1.0,1\n0,1.1,2\n0,1.4,3\n");
        let err = load_dataset(f.path(), &ColumnSchema::default()).unwrap_err();
        assert!(err.to_string().contains("no active dose"), "{err}");
    }

    #[test]
    fn missing_placebo_is_rejected() {
        let f = write_csv("dose,response,x1\n10,1.0,1\n20,1.1,2\n30,1.4,3\n");
        let err = load_dataset(f.path(), &ColumnSchema::default()).unwrap_err();
        assert!(err.to_string().contains("placebo"), "{err}");
    }

    #[test]
    fn missing_column_is_rejected() {
        let f = write_csv("dosis,response\n0,1.0\n50,1.1\n");
        let err = load_dataset(f.path(), &ColumnSchema::default()).unwrap_err();
        assert!(err.to_string().contains("missing column `dose`"), "{err}");
    }

    #[test]
    fn non_numeric_dose_is_rejected() {
        let f = write_csv("dose,response\n0,1.0\nlow,1.1\n");
        let err = load_dataset(f.path(), &ColumnSchema::default()).unwrap_err();
        assert!(err.to_string().contains("non-numeric dose"), "{err}");
    }

    #[test]
    fn nan_cell_is_rejected() {
        let f = write_csv("dose,response,x1\n0,1.0,1\n50,NaN,2\n");
        assert!(load_dataset(f.path(), &ColumnSchema::default()).is_err());
    }

    #[test]
    fn three_level_categorical_gives_two_dummies_in_one_group() {
        let f = write_csv(
            "dose,response,region\n0,1.0,b\n0,1.2,a\n50,1.4,c\n50,1.5,a\n100,1.6,b\n100,1.7,c\n",
        );
        let schema = ColumnSchema {
            categorical: vec!["region".into()],
            ..ColumnSchema::default()
        };
        let ds = load_dataset(f.path(), &schema).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.k(), 1);
        assert_eq!(ds.groups()[0].columns, vec![0, 1]);
        // reference level is lexicographically first ("a")
        assert_eq!(ds.column_names(), &["region_b".to_string(), "region_c".to_string()]);
        // dummy rows sum to <= 1
        for i in 0..ds.n() {
            let s: f64 = ds.x_row(i).iter().sum();
            assert!(s <= 1.0 + 1e-12);
        }
        // rows with level "a" are all zeros
        assert_eq!(ds.x_row(1), &[0.0, 0.0]);
    }

    #[test]
    fn groups_partition_columns() {
        let f = write_csv(
            "dose,response,age,region\n0,1.0,30,b\n0,1.2,40,a\n50,1.4,50,c\n50,1.5,60,a\n",
        );
        let schema = ColumnSchema {
            categorical: vec!["region".into()],
            ..ColumnSchema::default()
        };
        let ds = load_dataset(f.path(), &schema).unwrap();
        let total: usize = ds.groups().iter().map(|g| g.columns.len()).sum();
        assert_eq!(total, ds.p());
        let mut seen = vec![false; ds.p()];
        for g in ds.groups() {
            for &j in &g.columns {
                assert!(!seen[j], "column {j} in two groups");
                seen[j] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        let summary = ds.summary();
        assert_eq!(summary.n, 4);
        assert_eq!(summary.k, 2);
        assert_eq!(summary.p, 3);
    }
}
