use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::{edge_count, pair_index, AgencyRecord, CoSubscriptionCounts, Dataset, EdgeVector};
use crate::error::{Error, Result};

/// Layout of the networks file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NetworkFormat {
    /// `agency_id,e_1,...,e_L` with one binary column per pair.
    #[default]
    Wide,
    /// `agency_id,v,u` with one row per present edge (1-based, `v > u`).
    /// Agencies without any row have an empty network.
    EdgeList,
}

struct CsvRows {
    path: std::path::PathBuf,
    headers: StringRecord,
    rows: Vec<StringRecord>,
}

impl CsvRows {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(|e| csv_error(path, e))?);
        }
        Ok(CsvRows {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn err(&self, rec: &StringRecord, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: line_of(rec),
            message: message.into(),
        }
    }

    fn header_err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: 1,
            message: message.into(),
        }
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        let got: Vec<&str> = self.headers.iter().collect();
        if got != expected {
            return Err(self.header_err(format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            )));
        }
        Ok(())
    }

    fn int<T: std::str::FromStr>(&self, rec: &StringRecord, col: usize, what: &str) -> Result<T> {
        let raw = rec.get(col).unwrap_or("");
        raw.parse::<T>().map_err(|_| {
            self.err(
                rec,
                format!("{what}: expected a non-negative integer, found {raw:?}"),
            )
        })
    }

    fn check_width(&self, rec: &StringRecord) -> Result<()> {
        if rec.len() != self.headers.len() {
            return Err(self.err(
                rec,
                format!(
                    "expected {} columns, found {}",
                    self.headers.len(),
                    rec.len()
                ),
            ));
        }
        Ok(())
    }
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn numbered_header(first: &str, prefix: &str, n: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=n).map(|j| format!("{prefix}{j}")))
        .collect()
}

/// `(agency_id, counts, source line)` of one choices row.
type ChoiceRow = (String, Vec<u32>, u64);

fn read_choices(path: &Path) -> Result<(usize, Vec<ChoiceRow>)> {
    let csv = CsvRows::read(path)?;
    let v_count = csv.headers.len().saturating_sub(1);
    if v_count < 2 {
        return Err(csv.header_err("choices file needs agency_id and at least two count columns"));
    }
    let expected = numbered_header("agency_id", "n_", v_count);
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    csv.expect_header(&expected)?;
    let mut out = Vec::with_capacity(csv.rows.len());
    for rec in &csv.rows {
        csv.check_width(rec)?;
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(csv.err(rec, "empty agency_id"));
        }
        let counts = (1..=v_count)
            .map(|j| csv.int::<u32>(rec, j, &format!("n_{j}")))
            .collect::<Result<Vec<_>>>()?;
        out.push((id, counts, line_of(rec)));
    }
    Ok((v_count, out))
}

fn read_networks_wide(path: &Path, v_count: usize) -> Result<HashMap<String, (EdgeVector, u64)>> {
    let csv = CsvRows::read(path)?;
    let l = edge_count(v_count);
    let expected = numbered_header("agency_id", "e_", l);
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    csv.expect_header(&expected)?;
    let mut out = HashMap::new();
    for rec in &csv.rows {
        csv.check_width(rec)?;
        let id = rec[0].to_string();
        let mut bits = Vec::with_capacity(l);
        for j in 1..=l {
            let b: u8 = csv.int(rec, j, &format!("e_{j}"))?;
            if b > 1 {
                return Err(csv.err(rec, format!("e_{j}: expected 0 or 1, found {b}")));
            }
            bits.push(b);
        }
        let e = EdgeVector::new(v_count, bits)?;
        if out.insert(id.clone(), (e, line_of(rec))).is_some() {
            return Err(csv.err(rec, format!("duplicate agency id {id:?}")));
        }
    }
    Ok(out)
}

fn read_networks_edge_list(
    path: &Path,
    v_count: usize,
) -> Result<HashMap<String, (EdgeVector, u64)>> {
    let csv = CsvRows::read(path)?;
    csv.expect_header(&["agency_id", "v", "u"])?;
    let mut out: HashMap<String, (EdgeVector, u64)> = HashMap::new();
    for rec in &csv.rows {
        csv.check_width(rec)?;
        let id = rec[0].to_string();
        let v: usize = csv.int(rec, 1, "v")?;
        let u: usize = csv.int(rec, 2, "u")?;
        let l = pair_index(v, u, v_count).map_err(|e| csv.err(rec, e.to_string()))?;
        let entry = out
            .entry(id)
            .or_insert_with(|| (EdgeVector::empty(v_count), line_of(rec)));
        entry.0.set(l, true);
    }
    Ok(out)
}

/// Loads and cross-validates the choices and networks files.
///
/// Agencies keep the order of the choices file and are matched by
/// `agency_id`.
pub fn load_dataset(
    choices_path: impl AsRef<Path>,
    networks_path: impl AsRef<Path>,
    format: NetworkFormat,
) -> Result<Dataset> {
    let choices_path = choices_path.as_ref();
    let networks_path = networks_path.as_ref();
    let (v_count, choices) = read_choices(choices_path)?;
    let mut networks = match format {
        NetworkFormat::Wide => read_networks_wide(networks_path, v_count)?,
        NetworkFormat::EdgeList => read_networks_edge_list(networks_path, v_count)?,
    };

    let mut seen = HashMap::new();
    let mut agencies = Vec::with_capacity(choices.len());
    for (id, counts, line) in choices {
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(Error::Parse {
                path: choices_path.to_path_buf(),
                line,
                message: format!("duplicate agency id {id:?} (first seen on line {first})"),
            });
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::Parse {
                path: choices_path.to_path_buf(),
                line,
                message: format!("agency {id:?} has no mono-product customers"),
            });
        }
        let network = match networks.remove(&id) {
            Some((e, _)) => e,
            None if format == NetworkFormat::EdgeList => EdgeVector::empty(v_count),
            None => {
                return Err(Error::Parse {
                    path: networks_path.to_path_buf(),
                    line: 0,
                    message: format!("agency {id:?} (choices line {line}) has no network row"),
                })
            }
        };
        agencies.push(AgencyRecord {
            id,
            counts,
            network,
        });
    }
    if let Some((id, (_, line))) = networks.into_iter().min_by_key(|(_, (_, line))| *line) {
        return Err(Error::Parse {
            path: networks_path.to_path_buf(),
            line,
            message: format!("agency {id:?} is missing from the choices file"),
        });
    }
    Dataset::new(v_count, agencies)
}

/// Reads raw co-subscription counts from a pairs file (`agency_id,v,u,c_vu`)
/// and a products file (`agency_id,v,m_v`). Missing pairs or products count
/// as zero; `V` is the largest product index seen in either file.
pub fn load_cosub_counts(
    pairs_path: impl AsRef<Path>,
    products_path: impl AsRef<Path>,
) -> Result<Vec<(String, CoSubscriptionCounts)>> {
    let pairs = CsvRows::read(pairs_path.as_ref())?;
    pairs.expect_header(&["agency_id", "v", "u", "c_vu"])?;
    let products = CsvRows::read(products_path.as_ref())?;
    products.expect_header(&["agency_id", "v", "m_v"])?;

    let mut v_count = 0usize;
    let mut pair_rows = Vec::new();
    for rec in &pairs.rows {
        pairs.check_width(rec)?;
        let v: usize = pairs.int(rec, 1, "v")?;
        let u: usize = pairs.int(rec, 2, "u")?;
        let c: u64 = pairs.int(rec, 3, "c_vu")?;
        if u == 0 || u >= v {
            return Err(pairs.err(rec, format!("need 1 <= u < v, found v={v}, u={u}")));
        }
        v_count = v_count.max(v);
        pair_rows.push((rec[0].to_string(), v, u, c, rec));
    }
    let mut product_rows = Vec::new();
    for rec in &products.rows {
        products.check_width(rec)?;
        let v: usize = products.int(rec, 1, "v")?;
        let m: u64 = products.int(rec, 2, "m_v")?;
        if v == 0 {
            return Err(products.err(rec, "product indices are 1-based"));
        }
        v_count = v_count.max(v);
        product_rows.push((rec[0].to_string(), v, m));
    }
    if v_count < 2 {
        return Err(Error::InvalidData(
            "co-subscription data covers fewer than two products".into(),
        ));
    }

    let mut out: BTreeMap<String, CoSubscriptionCounts> = BTreeMap::new();
    for (id, v, m) in product_rows {
        out.entry(id)
            .or_insert_with(|| CoSubscriptionCounts::zeros(v_count))
            .product_counts[v - 1] = m;
    }
    for (id, v, u, c, rec) in pair_rows {
        let entry = out
            .entry(id)
            .or_insert_with(|| CoSubscriptionCounts::zeros(v_count));
        let (m_v, m_u) = (entry.product_counts[v - 1], entry.product_counts[u - 1]);
        if c > m_v || c > m_u {
            return Err(pairs.err(
                rec,
                format!("c_vu={c} exceeds product counts m_{v}={m_v}, m_{u}={m_u}"),
            ));
        }
        let l = pair_index(v, u, v_count)?;
        entry.pair_counts[l] = c;
    }
    Ok(out.into_iter().collect())
}

pub fn write_choices_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(numbered_header("agency_id", "n_", data.v_count()))?;
    for a in data.agencies() {
        let mut row = vec![a.id.clone()];
        row.extend(a.counts.iter().map(u32::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_networks_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(numbered_header("agency_id", "e_", data.edge_count()))?;
    for a in data.agencies() {
        let mut row = vec![a.id.clone()];
        row.extend(a.network.bits().iter().map(u8::to_string));
        w.write_record(&row)?;
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
