//! Raw CSV input and the on-disk panel format.
//!
//! Input files are named `SOURCE_ASSET.csv` (wide: `date,<feature>...`) or
//! `SOURCE_ASSET_FEATURE.csv` (`date,value`). Google Trends downloads may be
//! split as `GT_ASSET_FEATURE.partN.csv`; parts are linked in `N` order.
//! Empty cells are missing observations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use mfin_core::calendar::Calendar;
use mfin_core::ingest::{link_segments, FactorPanel, RawSeries, Source};

use crate::error::{CliError, Result};
use crate::manifest::sha256_hex;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

/// Columns of one CSV file: `(header, observations)` in file order.
pub type Columns = Vec<(String, Vec<(NaiveDate, f64)>)>;

/// Parses `date,<col>...`; rows are numbered from 1 after the header.
pub fn parse_columns(text: &str, origin: &str) -> Result<Columns> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("date") {
        return Err(CliError::Data(format!("{origin}: header must start with `date` and name at least one column")));
    }
    let mut cols: Columns = headers.iter().skip(1).map(|h| (h.to_string(), Vec::new())).collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{origin}: row {}: {e}", row + 1)))?;
        let date = parse_date(&rec[0])
            .ok_or_else(|| CliError::Data(format!("{origin}: row {}: bad date {:?}", row + 1, &rec[0])))?;
        for (c, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Data(format!("{origin}: row {}: bad number {cell:?} in {}", row + 1, cols[c].0)))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("{origin}: row {}: non-finite value in {}", row + 1, cols[c].0)));
            }
            cols[c].1.push((date, v));
        }
    }
    for (name, obs) in &mut cols {
        obs.sort_by_key(|(d, _)| *d);
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(CliError::Data(format!("{origin}: duplicate date {} in {name}", w[0].0)));
        }
    }
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct FileKey {
    source: Source,
    asset: String,
    feature: Option<String>,
    part: Option<u32>,
}

fn file_key(path: &Path) -> Option<FileKey> {
    let name = path.file_name()?.to_str()?.strip_suffix(".csv")?;
    let (stem, part) = match name.rsplit_once(".part") {
        Some((s, n)) => (s, Some(n.parse().ok()?)),
        None => (name, None),
    };
    let mut it = stem.splitn(3, '_');
    let source = Source::from_tag(it.next()?)?;
    let asset = it.next()?.to_string();
    let feature = it.next().map(str::to_string);
    Some(FileKey { source, asset, feature, part })
}

/// Every series found in `dir`, with segmented files linked.
pub fn load_data_dir(dir: &Path) -> Result<Vec<RawSeries>> {
    let mut files: Vec<(FileKey, PathBuf)> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let key = file_key(&path).ok_or_else(|| {
            CliError::Data(format!("{}: expected SOURCE_ASSET[_FEATURE][.partN].csv", path.display()))
        })?;
        files.push((key, path));
    }
    files.sort();
    let mut grouped: BTreeMap<(Source, String, String), Vec<(Option<u32>, RawSeries)>> = BTreeMap::new();
    for (key, path) in &files {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let origin = path.display().to_string();
        let cols = parse_columns(&text, &origin)?;
        for (header, obs) in cols {
            let feature = match &key.feature {
                Some(f) if cols_is_single(&header) => f.clone(),
                Some(f) => return Err(CliError::Data(format!("{origin}: single-feature file for {f} must have a `value` column"))),
                None => header,
            };
            let s = RawSeries::new(key.asset.clone(), feature.clone(), key.source, obs)?;
            grouped.entry((key.source, key.asset.clone(), feature)).or_default().push((key.part, s));
        }
    }
    let mut out = Vec::new();
    for ((_, asset, feature), parts) in grouped {
        if parts.len() == 1 && parts[0].0.is_none() {
            out.push(parts.into_iter().next().unwrap().1);
            continue;
        }
        if parts.iter().any(|(p, _)| p.is_none()) {
            return Err(CliError::Data(format!("{asset}/{feature}: mixes segmented and whole files")));
        }
        let segs: Vec<RawSeries> = parts.into_iter().map(|(_, s)| s).collect();
        out.push(link_segments(&segs)?);
    }
    Ok(out)
}

fn cols_is_single(header: &str) -> bool {
    header.eq_ignore_ascii_case("value")
}

/// Writes `date,value` rows.
pub fn series_to_csv(obs: &[(NaiveDate, f64)]) -> String {
    let mut s = String::from("date,value\n");
    for (d, v) in obs {
        s.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), v));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelManifest {
    pub assets: Vec<String>,
    pub features: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub n_dates: usize,
    /// First date each `(asset, feature)` is observed.
    pub first_available: BTreeMap<String, BTreeMap<String, Option<NaiveDate>>>,
    /// SHA-256 of every level file.
    pub files: BTreeMap<String, String>,
}

fn asset_file(asset: &str) -> String {
    format!("levels_{asset}.csv")
}

fn levels_csv(panel: &FactorPanel, i: usize) -> String {
    let mut s = String::from("date");
    for f in panel.features() {
        s.push(',');
        s.push_str(f);
    }
    s.push('\n');
    for t in 0..panel.len() {
        s.push_str(&panel.calendar().date(t).format(DATE_FORMAT).to_string());
        for j in 0..panel.n_features() {
            s.push(',');
            if let Some(v) = panel.level(t, i, j) {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes one level CSV per asset plus `manifest.json`.
pub fn write_panel(panel: &FactorPanel, dir: &Path) -> Result<PanelManifest> {
    if panel.is_empty() {
        return Err(CliError::Data("cannot write an empty panel".into()));
    }
    let mut files = BTreeMap::new();
    let mut first_available = BTreeMap::new();
    for (i, asset) in panel.assets().iter().enumerate() {
        let text = levels_csv(panel, i);
        let name = asset_file(asset);
        write_file(&dir.join(&name), text.as_bytes())?;
        files.insert(name, sha256_hex(text.as_bytes()));
        let firsts = panel
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| (f.clone(), panel.first_available(i, j).map(|t| panel.calendar().date(t))))
            .collect();
        first_available.insert(asset.clone(), firsts);
    }
    let cal = panel.calendar();
    let manifest = PanelManifest {
        assets: panel.assets().to_vec(),
        features: panel.features().to_vec(),
        start: cal.date(0),
        end: cal.date(cal.len() - 1),
        n_dates: cal.len(),
        first_available,
        files,
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

/// SHA-256 over every asset's level file, in asset order.
pub fn panel_digest(panel: &FactorPanel) -> String {
    let mut all = String::new();
    for i in 0..panel.n_assets() {
        all.push_str(&levels_csv(panel, i));
    }
    sha256_hex(all.as_bytes())
}

/// Reads a panel written by [`write_panel`], checking hashes and shape.
pub fn read_panel(dir: &Path) -> Result<FactorPanel> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| CliError::io(&mpath, e))?;
    let m: PanelManifest = serde_json::from_str(&text)?;
    let (n, na, nf) = (m.n_dates, m.assets.len(), m.features.len());
    let mut dates: Option<Vec<NaiveDate>> = None;
    let mut levels = vec![None; n * na * nf];
    for (i, asset) in m.assets.iter().enumerate() {
        let name = asset_file(asset);
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        if m.files.get(&name) != Some(&sha256_hex(&bytes)) {
            return Err(CliError::Data(format!("{}: hash does not match manifest", path.display())));
        }
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let header: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        if header != m.features {
            return Err(CliError::Data(format!("{}: features do not match manifest", path.display())));
        }
        let mut ds = Vec::with_capacity(n);
        for (t, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Data(format!("{}: row {}: {e}", path.display(), t + 1)))?;
            if t >= n {
                return Err(CliError::Data(format!("{}: more rows than the manifest", path.display())));
            }
            ds.push(parse_date(&rec[0]).ok_or_else(|| CliError::Data(format!("{}: row {}: bad date", path.display(), t + 1)))?);
            for j in 0..nf {
                let cell = &rec[j + 1];
                if !cell.is_empty() {
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| CliError::Data(format!("{}: row {}: bad number {cell:?}", path.display(), t + 1)))?;
                    levels[(t * na + i) * nf + j] = Some(v);
                }
            }
        }
        match &dates {
            None => dates = Some(ds),
            Some(prev) if *prev == ds => {}
            Some(_) => return Err(CliError::Data(format!("{}: dates differ from other assets", path.display()))),
        }
    }
    let dates = dates.unwrap_or_default();
    if dates.len() != n {
        return Err(CliError::Data("panel files are shorter than the manifest".into()));
    }
    let cal = Calendar::new(dates)?;
    Ok(FactorPanel::from_levels(cal, m.assets, m.features, levels)?)
}

/// Assets and features present in `series`, sorted.
pub fn discovered(series: &[RawSeries]) -> (Vec<String>, Vec<String>) {
    let assets: BTreeSet<&String> = series.iter().map(|s| &s.asset).collect();
    let features: BTreeSet<&String> = series.iter().map(|s| &s.feature).collect();
    (assets.into_iter().cloned().collect(), features.into_iter().cloned().collect())
}

/// Earliest and latest observation over all series.
pub fn span(series: &[RawSeries]) -> Option<(NaiveDate, NaiveDate)> {
    let first = series.iter().filter_map(|s| s.observations.first().map(|o| o.0)).min()?;
    let last = series.iter().filter_map(|s| s.observations.last().map(|o| o.0)).max()?;
    Some((first, last))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_file_parses_with_gaps() {
        let cols = parse_columns("date,open,volume\n2020-01-02,2,\n2020-01-01,1,10\n", "t").unwrap();
        assert_eq!(cols[0].0, "open");
        assert_eq!(cols[0].1.len(), 2);
        assert_eq!(cols[0].1[0].1, 1.0);
        assert_eq!(cols[1].1.len(), 1);
    }

    #[test]
    fn errors_name_the_row() {
        let e = parse_columns("date,open\n2020-01-01,1\n2020-01-02,abc\n", "f.csv").unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert_eq!(e.exit_code(), 3);
        let e = parse_columns("date,open\n2020-01-01,1\n2020-01-01,2\n", "f.csv").unwrap_err();
        assert!(e.to_string().contains("duplicate date"), "{e}");
        let e = parse_columns("date,open\n2020-13-01,1\n", "f.csv").unwrap_err();
        assert!(e.to_string().contains("row 1"), "{e}");
    }

    #[test]
    fn file_names() {
        let k = file_key(Path::new("GT_BTC_google trends.part2.csv")).unwrap();
        assert_eq!(k.source, Source::Gt);
        assert_eq!(k.feature.as_deref(), Some("google trends"));
        assert_eq!(k.part, Some(2));
        let k = file_key(Path::new("CMC_ETH.csv")).unwrap();
        assert_eq!((k.asset.as_str(), k.feature, k.part), ("ETH", None, None));
        assert!(file_key(Path::new("XYZ_ETH.csv")).is_none());
    }
}
