//! Dataset, draws and table files. Every file is written to a temporary
//! sibling and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hula_core::mnp::ChoiceDataset;
use hula_core::Draws;

use crate::error::{CliError, CliResult};

pub const CHOICES_FILE: &str = "choices.csv";
pub const ATTRIBUTES_FILE: &str = "attributes.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const TRUTH_FILE: &str = "truth.json";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(err)?;
    file.write_all(bytes).map_err(err)?;
    file.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

/// Builds a CSV document in memory from a header and rows.
pub fn csv_bytes<I, R>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    write_atomic(path, &csv_bytes(header, rows))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::data(path, e))
}

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    Ok(csv::Reader::from_reader(file))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, path: &Path) -> CliResult<T> {
    let raw = rec
        .get(k)
        .ok_or_else(|| CliError::data(path, format!("missing column {}", k + 1)))?;
    raw.trim()
        .parse()
        .map_err(|_| CliError::data(path, format!("cannot parse {raw:?}")))
}

/// Writes `choices.csv` (obs_id, y) and `attributes.csv`
/// (obs_id, alternative, x_1…x_r) into `dir`.
pub fn write_choice_dataset(dir: &Path, data: &ChoiceDataset) -> CliResult<Vec<PathBuf>> {
    let (j, r) = (data.alternatives(), data.regressors());
    let choices = dir.join(CHOICES_FILE);
    write_csv(
        &choices,
        &["obs_id".into(), "y".into()],
        data.y().iter().enumerate().map(|(i, y)| [i.to_string(), y.to_string()]),
    )?;
    let mut header = vec!["obs_id".to_string(), "alternative".to_string()];
    header.extend((1..=r).map(|c| format!("x_{c}")));
    let attributes = dir.join(ATTRIBUTES_FILE);
    let rows = (0..data.len()).flat_map(|i| {
        let xi = data.x_i(i);
        (0..j).map(move |a| {
            let mut row = vec![i.to_string(), (a + 1).to_string()];
            row.extend(xi[a * r..(a + 1) * r].iter().map(|v| v.to_string()));
            row
        })
    });
    write_csv(&attributes, &header, rows)?;
    Ok(vec![choices, attributes])
}

/// Reads the long-format choice files. Observations keep the order of
/// `choices.csv`; attribute rows may come in any order.
pub fn read_choice_dataset(dir: &Path) -> CliResult<ChoiceDataset> {
    let choices_path = dir.join(CHOICES_FILE);
    let mut ids = Vec::new();
    let mut y = Vec::new();
    for rec in reader(&choices_path)?.records() {
        let rec = rec.map_err(|e| CliError::data(&choices_path, e))?;
        ids.push(field::<String>(&rec, 0, &choices_path)?);
        y.push(field::<usize>(&rec, 1, &choices_path)?);
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if index.len() != ids.len() {
        return Err(CliError::data(&choices_path, "duplicate obs_id"));
    }

    let attr_path = dir.join(ATTRIBUTES_FILE);
    let mut rdr = reader(&attr_path)?;
    let r = rdr
        .headers()
        .map_err(|e| CliError::data(&attr_path, e))?
        .len()
        .saturating_sub(2);
    if r == 0 {
        return Err(CliError::data(&attr_path, "no regressor columns"));
    }
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(&attr_path, e))?;
        let id: String = field(&rec, 0, &attr_path)?;
        let obs = *index
            .get(id.as_str())
            .ok_or_else(|| CliError::data(&attr_path, format!("obs_id {id} not in {CHOICES_FILE}")))?;
        let alt: usize = field(&rec, 1, &attr_path)?;
        let x = (0..r)
            .map(|c| field(&rec, c + 2, &attr_path))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push((obs, alt, x));
    }
    let j = rows.iter().map(|(_, a, _)| *a).max().unwrap_or(0);
    if j == 0 || rows.len() != j * ids.len() {
        return Err(CliError::data(
            &attr_path,
            format!("expected {} alternatives per observation", j.max(1)),
        ));
    }
    let mut x = vec![f64::NAN; ids.len() * j * r];
    let mut seen = vec![false; ids.len() * j];
    for (obs, alt, vals) in rows {
        if alt == 0 || std::mem::replace(&mut seen[obs * j + alt - 1], true) {
            return Err(CliError::data(
                &attr_path,
                format!("bad or repeated alternative {alt} for observation {obs}"),
            ));
        }
        let start = (obs * j + alt - 1) * r;
        x[start..start + r].copy_from_slice(&vals);
    }
    ChoiceDataset::new(j, r, y, x).map_err(|e| CliError::data(dir, e))
}

pub fn write_observations(dir: &Path, y: &[f64]) -> CliResult<PathBuf> {
    let path = dir.join(OBSERVATIONS_FILE);
    write_csv(
        &path,
        &["obs_id".into(), "y".into()],
        y.iter().enumerate().map(|(i, v)| [i.to_string(), v.to_string()]),
    )?;
    Ok(path)
}

pub fn read_observations(dir: &Path) -> CliResult<Vec<f64>> {
    let path = dir.join(OBSERVATIONS_FILE);
    reader(&path)?
        .records()
        .map(|rec| field(&rec.map_err(|e| CliError::data(&path, e))?, 1, &path))
        .collect()
}

pub fn draws_file(out: &Path, sampler: &str) -> PathBuf {
    out.join(format!("draws_{sampler}.csv"))
}

pub fn write_draws(path: &Path, names: &[String], draws: &Draws) -> CliResult<()> {
    write_csv(
        path,
        names,
        draws
            .rows()
            .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>()),
    )
}

pub fn read_draws(path: &Path) -> CliResult<(Vec<String>, Draws)> {
    let mut rdr = reader(path)?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::data(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut draws = Draws::new(names.len());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(path, e))?;
        let row = (0..names.len())
            .map(|k| field(&rec, k, path))
            .collect::<CliResult<Vec<f64>>>()?;
        draws.push(&row).map_err(|e| CliError::data(path, e))?;
    }
    Ok((names, draws))
}

/// beta_1…beta_r, kappa_1…kappa_d.
pub fn probit_parameter_names(regressors: usize, angles: usize) -> Vec<String> {
    (1..=regressors)
        .map(|k| format!("beta_{k}"))
        .chain((1..=angles).map(|k| format!("kappa_{k}")))
        .collect()
}
