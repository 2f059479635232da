//! Loaders for benchmark corpora laid out on disk.
//!
//! ```text
//! NAB:  <root>/data/<category>/<name>.csv         (timestamp,value)
//!       <root>/labels/combined_windows.json       {"<category>/<name>.csv": [[start, end], …]}
//! NASA: <root>/train/<chan>.npy  <root>/test/<chan>.npy   (or headerless .csv)
//!       <root>/labeled_anomalies.csv              chan_id,spacecraft,anomaly_sequences,class,num_values
//! SMD:  <root>/train/<machine>.txt  <root>/test/<machine>.txt  <root>/test_label/<machine>.txt
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DVector;

use super::csv::{load_csv, parse_timestamp};
use super::npy::read_npy;
use super::series::default_names;
use super::LabeledSeries;
use crate::error::{Error, Result};

/// Fraction of each NAB series used for training.
pub const NAB_TRAIN_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetLayout {
    #[default]
    Csv,
    Nab,
    Nasa,
    Smd,
}

impl std::str::FromStr for DatasetLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetLayout::Csv),
            "nab" => Ok(DatasetLayout::Nab),
            "nasa" | "smap" | "msl" => Ok(DatasetLayout::Nasa),
            "smd" => Ok(DatasetLayout::Smd),
            other => Err(Error::Config(format!(
                "unknown dataset layout `{other}` (expected csv, nab, nasa or smd)"
            ))),
        }
    }
}

/// One entity of a corpus with its train and (labeled) test parts.
#[derive(Debug, Clone)]
pub struct BenchmarkSeries {
    pub name: String,
    pub train: LabeledSeries,
    pub test: LabeledSeries,
}

pub fn load_benchmark_layout(root: impl AsRef<Path>, layout: DatasetLayout) -> Result<Vec<BenchmarkSeries>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", root.display())));
    }
    match layout {
        DatasetLayout::Nab => load_nab(root),
        DatasetLayout::Nasa => load_nasa(root),
        DatasetLayout::Smd => load_smd(root),
        DatasetLayout::Csv => Err(Error::Config(
            "the csv layout is a single file, not a corpus directory".into(),
        )),
    }
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_nab(root: &Path) -> Result<Vec<BenchmarkSeries>> {
    let labels_path = root.join("labels").join("combined_windows.json");
    let windows: BTreeMap<String, Vec<(String, String)>> =
        serde_json::from_str(&std::fs::read_to_string(&labels_path).map_err(|e| {
            Error::Input(format!("cannot read {}: {e}", labels_path.display()))
        })?)?;
    let data = root.join("data");
    let mut categories: Vec<PathBuf> = std::fs::read_dir(&data)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", data.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    categories.sort();
    let mut out = Vec::new();
    for cat in categories {
        for file in sorted_files(&cat, "csv")? {
            let key = format!(
                "{}/{}",
                cat.file_name().unwrap_or_default().to_string_lossy(),
                file.file_name().unwrap_or_default().to_string_lossy()
            );
            let mut series = load_csv(&file)?;
            let spans = match windows.get(&key) {
                Some(w) => w
                    .iter()
                    .map(|(a, b)| {
                        let parse = |s: &str| {
                            parse_timestamp(s).ok_or_else(|| {
                                Error::Input(format!("bad window timestamp `{s}` for {key}"))
                            })
                        };
                        Ok((parse(a)?, parse(b)?))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => {
                    warn!("no label windows for {key}; treating it as anomaly-free");
                    Vec::new()
                }
            };
            series.labels = Some(
                series
                    .times
                    .iter()
                    .map(|t| spans.iter().any(|(a, b)| a <= t && t <= b))
                    .collect(),
            );
            let n_train = (series.len() as f64 * NAB_TRAIN_FRACTION).floor() as usize;
            let (train, test) = series.split_at(n_train);
            out.push(BenchmarkSeries {
                name: key.trim_end_matches(".csv").to_string(),
                train,
                test,
            });
        }
    }
    Ok(out)
}

/// Headerless numeric table with comma (or whitespace) separated values.
pub fn read_numeric_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("{}: invalid number `{s}`", path.display()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("{}: expected {first} columns, found {}", path.display(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn indexed_series(rows: Vec<Vec<f64>>, labels: Option<Vec<bool>>) -> Result<LabeledSeries> {
    let dims = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    let mut s = LabeledSeries::new(
        (0..n).map(|i| i as f64).collect(),
        rows.into_iter().map(DVector::from_vec).collect(),
        labels,
    )?;
    s.names = default_names(dims);
    Ok(s)
}

fn read_channel(dir: &Path, chan: &str) -> Result<Vec<Vec<f64>>> {
    let npy = dir.join(format!("{chan}.npy"));
    if npy.is_file() {
        let a = read_npy(&npy)?;
        return Ok((0..a.rows).map(|i| a.row(i).to_vec()).collect());
    }
    let csv = dir.join(format!("{chan}.csv"));
    if csv.is_file() {
        return read_numeric_table(&csv);
    }
    Err(Error::Input(format!("no {chan}.npy or {chan}.csv in {}", dir.display())))
}

/// `"[[10, 20], [40, 45]]"` → `[(10, 20), (40, 45)]`.
fn parse_index_ranges(s: &str) -> Result<Vec<(usize, usize)>> {
    let nums: Vec<usize> = s
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Input(format!("bad anomaly range `{s}`"))))
        .collect::<Result<_>>()?;
    if !nums.len().is_multiple_of(2) {
        return Err(Error::Input(format!("odd number of bounds in `{s}`")));
    }
    Ok(nums.chunks(2).map(|c| (c[0], c[1])).collect())
}

pub fn load_nasa(root: &Path) -> Result<Vec<BenchmarkSeries>> {
    let labels_path = root.join("labeled_anomalies.csv");
    let mut reader = csv::Reader::from_path(&labels_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", labels_path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Input(format!("{} lacks column `{name}`", labels_path.display())))
    };
    let (chan_col, seq_col) = (col("chan_id")?, col("anomaly_sequences")?);
    let mut ranges: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut order = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let chan = rec[chan_col].trim().to_string();
        if !ranges.contains_key(&chan) {
            order.push(chan.clone());
        }
        ranges.entry(chan).or_default().extend(parse_index_ranges(&rec[seq_col])?);
    }
    let mut out = Vec::new();
    for chan in order {
        let train = indexed_series(read_channel(&root.join("train"), &chan)?, None)?;
        let test_rows = read_channel(&root.join("test"), &chan)?;
        let n = test_rows.len();
        let mut labels = vec![false; n];
        for &(a, b) in &ranges[&chan] {
            if a > b || b >= n {
                return Err(Error::Input(format!(
                    "anomaly range [{a}, {b}] outside test series {chan} of length {n}"
                )));
            }
            labels[a..=b].iter_mut().for_each(|l| *l = true);
        }
        let test = indexed_series(test_rows, Some(labels))?;
        out.push(BenchmarkSeries {
            name: chan,
            train,
            test,
        });
    }
    Ok(out)
}

pub fn load_smd(root: &Path) -> Result<Vec<BenchmarkSeries>> {
    let mut out = Vec::new();
    for test_path in sorted_files(&root.join("test"), "txt")? {
        let name = file_stem(&test_path);
        let file = format!("{name}.txt");
        let train = indexed_series(read_numeric_table(&root.join("train").join(&file))?, None)?;
        let test_rows = read_numeric_table(&test_path)?;
        let label_rows = read_numeric_table(&root.join("test_label").join(&file))?;
        if label_rows.len() != test_rows.len() || label_rows.iter().any(|r| r.len() != 1) {
            return Err(Error::Input(format!(
                "labels for {name} must be one 0/1 value per test row"
            )));
        }
        let labels = label_rows.iter().map(|r| r[0] != 0.0).collect();
        let test = indexed_series(test_rows, Some(labels))?;
        if train.dims() != test.dims() {
            return Err(Error::Input(format!("{name}: train and test widths differ")));
        }
        out.push(BenchmarkSeries { name, train, test });
    }
    Ok(out)
}
