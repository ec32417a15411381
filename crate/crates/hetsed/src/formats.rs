//! On-disk formats: DESED/MAESTRO event TSVs, durations, the `SEDP`
//! posteriorgram and `SEDF` feature binaries, and TOML parameter files.
//! Every writer goes through [`write_atomic`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hetsed_core::postprocess::CsebbParams;
use hetsed_core::{canonicalize_events_in, Event, EventList, Posteriorgram};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MelSpectrogram;

pub const EVENTS_HEADER: &str = "filename\tonset\toffset\tevent_label";
pub const SOFT_EVENTS_HEADER: &str = "filename\tonset\toffset\tevent_label\tconfidence";
pub const DURATIONS_HEADER: &str = "filename\tduration";
pub const POSTERIOR_MAGIC: &[u8; 4] = b"SEDP";
pub const POSTERIOR_VERSION: u16 = 1;
pub const POSTERIOR_EXT: &str = "sedp";
pub const FEATURE_MAGIC: &[u8; 4] = b"SEDF";
pub const FEATURE_EXT: &str = "sedf";

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Strips a trailing `.wav` from a TSV filename.
pub fn clip_id_of(filename: &str) -> &str {
    filename.strip_suffix(".wav").unwrap_or(filename)
}

/// One TSV row before its label is resolved against a class table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEvent {
    pub clip_id: String,
    pub onset: f64,
    pub offset: f64,
    pub label: String,
    pub confidence: Option<f64>,
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, format!("line {line}: bad {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::format(path, format!("line {line}: {what} is not finite")));
    }
    Ok(v)
}

/// Parses an events TSV with or without a trailing `confidence` column. An
/// empty confidence field means "no confidence".
pub fn parse_events(path: &Path, text: &str) -> Result<Vec<LabeledEvent>> {
    let mut lines = text.lines().enumerate();
    let has_conf = match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == EVENTS_HEADER => false,
        Some((_, h)) if h.trim_end_matches('\r') == SOFT_EVENTS_HEADER => true,
        _ => return Err(Error::format(path, format!("expected header `{EVENTS_HEADER}`"))),
    };
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        let expected = if has_conf { 5 } else { 4 };
        if f.len() != expected {
            return Err(Error::format(path, format!("line {n}: expected {expected} fields, found {}", f.len())));
        }
        let confidence = if has_conf && !f[4].trim().is_empty() {
            Some(parse_f64(path, n, f[4], "confidence")?)
        } else {
            None
        };
        out.push(LabeledEvent {
            clip_id: clip_id_of(f[0]).to_owned(),
            onset: parse_f64(path, n, f[1], "onset")?,
            offset: parse_f64(path, n, f[2], "offset")?,
            label: f[3].to_owned(),
            confidence,
        });
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<LabeledEvent>> {
    parse_events(path, &read_text(path)?)
}

fn class_lookup(classes: &[String]) -> HashMap<&str, usize> {
    classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

/// Resolves labels against `classes` and canonicalizes. Unknown labels are
/// an error.
pub fn resolve_events(path: &Path, rows: &[LabeledEvent], classes: &[String]) -> Result<EventList> {
    let lookup = class_lookup(classes);
    let mut events = Vec::with_capacity(rows.len());
    for r in rows {
        let idx = *lookup
            .get(r.label.as_str())
            .ok_or_else(|| Error::format(path, format!("unknown class `{}`", r.label)))?;
        let mut e = Event::new(r.clip_id.clone(), idx, r.onset, r.offset);
        e.confidence = r.confidence;
        events.push(e);
    }
    Ok(canonicalize_events_in(events, Some(classes.len()))?)
}

/// Sorted label set of the given rows.
pub fn labels_of<'a>(rows: impl IntoIterator<Item = &'a LabeledEvent>) -> Vec<String> {
    let mut v: Vec<String> = rows.into_iter().map(|r| r.label.clone()).collect();
    v.sort();
    v.dedup();
    v
}

/// Serializes events. The confidence column is written when any event has
/// one; absent confidences become empty fields.
pub fn format_events(events: &EventList, classes: &[String]) -> String {
    let with_conf = events.iter().any(|e| e.confidence.is_some());
    let mut s = String::from(if with_conf { SOFT_EVENTS_HEADER } else { EVENTS_HEADER });
    s.push('\n');
    for e in events {
        s.push_str(&format!("{}.wav\t{:.6}\t{:.6}\t{}", e.clip_id, e.onset, e.offset, classes[e.class_idx]));
        if with_conf {
            s.push('\t');
            if let Some(c) = e.confidence {
                s.push_str(&format!("{c:.6}"));
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_events(path: &Path, events: &EventList, classes: &[String]) -> Result<()> {
    write_atomic(path, format_events(events, classes).as_bytes())
}

pub fn parse_durations(path: &Path, text: &str) -> Result<BTreeMap<String, f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == DURATIONS_HEADER => {}
        _ => return Err(Error::format(path, format!("expected header `{DURATIONS_HEADER}`"))),
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 {
            return Err(Error::format(path, format!("line {}: expected 2 fields", i + 1)));
        }
        let d = parse_f64(path, i + 1, f[1], "duration")?;
        if d <= 0.0 {
            return Err(Error::format(path, format!("line {}: duration must be positive", i + 1)));
        }
        out.insert(clip_id_of(f[0]).to_owned(), d);
    }
    Ok(out)
}

pub fn read_durations(path: &Path) -> Result<BTreeMap<String, f64>> {
    parse_durations(path, &read_text(path)?)
}

pub fn format_durations(durations: &BTreeMap<String, f64>) -> String {
    let mut s = format!("{DURATIONS_HEADER}\n");
    for (clip, d) in durations {
        s.push_str(&format!("{clip}.wav\t{d:.6}\n"));
    }
    s
}

pub fn write_durations(path: &Path, durations: &BTreeMap<String, f64>) -> Result<()> {
    write_atomic(path, format_durations(durations).as_bytes())
}

fn period_to_us(path: &Path, frame_period: f64) -> Result<u32> {
    let us = (frame_period * 1e6).round();
    if !(us >= 1.0 && us <= u32::MAX as f64) {
        return Err(Error::format(path, format!("frame period {frame_period} s does not fit in microseconds")));
    }
    Ok(us as u32)
}

fn dim_u32(path: &Path, n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::format(path, format!("{what} {n} exceeds u32")))
}

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.path, "truncated file")),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32_matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let n = rows.checked_mul(cols).and_then(|n| n.checked_mul(4));
        let raw = self.take(n.ok_or_else(|| Error::format(self.path, "matrix too large"))?)?;
        let vals: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        Array2::from_shape_vec((rows, cols), vals).map_err(|e| Error::format(self.path, e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.path, "trailing bytes after data"));
        }
        Ok(())
    }
}

fn push_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

/// A posteriorgram together with its class-name table.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFile {
    pub classes: Vec<String>,
    pub post: Posteriorgram,
}

pub fn encode_posterior(path: &Path, post: &Posteriorgram, classes: &[String]) -> Result<Vec<u8>> {
    if classes.len() != post.n_classes() {
        return Err(Error::format(path, "class table does not match the posteriorgram"));
    }
    let mut out = Vec::with_capacity(18 + post.n_frames() * post.n_classes() * 4);
    out.extend_from_slice(POSTERIOR_MAGIC);
    out.extend_from_slice(&POSTERIOR_VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, post.n_frames(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, post.n_classes(), "class count")?.to_le_bytes());
    out.extend_from_slice(&period_to_us(path, post.frame_period())?.to_le_bytes());
    for name in classes {
        let len = u16::try_from(name.len()).map_err(|_| Error::format(path, "class name too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    push_matrix(&mut out, &post.scores().to_owned());
    Ok(out)
}

pub fn decode_posterior(path: &Path, clip_id: &str, bytes: &[u8]) -> Result<PosteriorFile> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != POSTERIOR_MAGIC {
        return Err(Error::format(path, "not a SEDP file"));
    }
    let version = r.u16()?;
    if version != POSTERIOR_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let t = r.u32()? as usize;
    let c = r.u32()? as usize;
    let frame_period = r.u32()? as f64 / 1e6;
    let mut classes = Vec::with_capacity(c.min(4096));
    for _ in 0..c {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "class name is not UTF-8"))?;
        classes.push(name.to_owned());
    }
    let scores = r.f32_matrix(t, c)?;
    r.finish()?;
    let post = Posteriorgram::new(clip_id, frame_period, scores).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(PosteriorFile { classes, post })
}

pub fn posterior_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.{POSTERIOR_EXT}"))
}

pub fn write_posterior(path: &Path, post: &Posteriorgram, classes: &[String]) -> Result<()> {
    write_atomic(path, &encode_posterior(path, post, classes)?)
}

/// Reads one `.sedp` file; the clip id is its file stem.
pub fn read_posterior(path: &Path) -> Result<PosteriorFile> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::format(path, "missing file name"))?;
    decode_posterior(path, &stem, &read_bytes(path)?)
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads a single posteriorgram file or every `.sedp` file of a directory.
/// All files must share one class table.
pub fn read_posteriors(path: &Path) -> Result<(Vec<String>, Vec<Posteriorgram>)> {
    let files = if path.is_dir() { list_files(path, POSTERIOR_EXT)? } else { vec![path.to_path_buf()] };
    if files.is_empty() {
        return Err(Error::format(path, "no posteriorgram files"));
    }
    let mut classes: Option<Vec<String>> = None;
    let mut posts = Vec::with_capacity(files.len());
    for f in &files {
        let pf = read_posterior(f)?;
        match &classes {
            Some(c) if *c != pf.classes => return Err(Error::format(f, "class table differs from the other files")),
            Some(_) => {}
            None => classes = Some(pf.classes.clone()),
        }
        posts.push(pf.post);
    }
    Ok((classes.unwrap_or_default(), posts))
}

pub fn encode_features(path: &Path, mel: &MelSpectrogram) -> Result<Vec<u8>> {
    let (t, m) = mel.values.dim();
    let mut out = Vec::with_capacity(16 + t * m * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&dim_u32(path, t, "frame count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(path, m, "mel count")?.to_le_bytes());
    out.extend_from_slice(&period_to_us(path, mel.frame_period)?.to_le_bytes());
    push_matrix(&mut out, &mel.values);
    Ok(out)
}

/// Decoded feature file. The mel range is not stored on disk.
pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<(Array2<f64>, f64)> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4)? != FEATURE_MAGIC {
        return Err(Error::format(path, "not a SEDF file"));
    }
    let t = r.u32()? as usize;
    let m = r.u32()? as usize;
    let fp = r.u32()? as f64 / 1e6;
    let values = r.f32_matrix(t, m)?;
    r.finish()?;
    Ok((values, fp))
}

pub fn write_features(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    write_atomic(path, &encode_features(path, mel)?)
}

pub fn read_features(path: &Path) -> Result<(Array2<f64>, f64)> {
    decode_features(path, &read_bytes(path)?)
}

/// Per-class post-processing settings; unset fields fall back to `[default]`
/// and then to built-in defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_merge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_merge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl ClassParams {
    fn or(self, fallback: ClassParams) -> ClassParams {
        ClassParams {
            window: self.window.or(fallback.window),
            step: self.step.or(fallback.step),
            rel_merge: self.rel_merge.or(fallback.rel_merge),
            abs_merge: self.abs_merge.or(fallback.abs_merge),
            min_gap: self.min_gap.or(fallback.min_gap),
            median_window: self.median_window.or(fallback.median_window),
            threshold: self.threshold.or(fallback.threshold),
        }
    }

    pub fn csebb(&self) -> CsebbParams {
        let d = CsebbParams::default();
        CsebbParams {
            window: self.window.unwrap_or(d.window),
            step: self.step.unwrap_or(d.step),
            rel_merge: self.rel_merge.unwrap_or(d.rel_merge),
            abs_merge: self.abs_merge.unwrap_or(d.abs_merge),
            min_gap: self.min_gap.unwrap_or(d.min_gap),
        }
    }

    pub fn from_csebb(p: &CsebbParams) -> ClassParams {
        ClassParams {
            window: Some(p.window),
            step: Some(p.step),
            rel_merge: Some(p.rel_merge),
            abs_merge: Some(p.abs_merge),
            min_gap: Some(p.min_gap),
            ..ClassParams::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(default)]
    pub default: ClassParams,
    #[serde(default)]
    pub class: BTreeMap<String, ClassParams>,
}

impl ParamsFile {
    /// Effective settings for every class of `classes`, in order. Entries
    /// naming unknown classes are an error.
    pub fn resolve(&self, path: &Path, classes: &[String]) -> Result<Vec<ClassParams>> {
        if let Some(unknown) = self.class.keys().find(|k| !classes.contains(k)) {
            return Err(Error::format(path, format!("parameters for unknown class `{unknown}`")));
        }
        Ok(classes
            .iter()
            .map(|c| self.class.get(c).copied().unwrap_or_default().or(self.default))
            .collect())
    }
}

pub fn parse_params(path: &Path, text: &str) -> Result<ParamsFile> {
    toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    parse_params(path, &read_text(path)?)
}

pub fn write_params(path: &Path, params: &ParamsFile) -> Result<()> {
    let text = toml::to_string(params).map_err(|e| Error::format(path, e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

/// Candidate values for each cSEBB parameter; the grid is their cartesian
/// product. Missing keys take the default value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub window: Option<Vec<usize>>,
    pub step: Option<Vec<usize>>,
    pub rel_merge: Option<Vec<f64>>,
    pub abs_merge: Option<Vec<f64>>,
    pub min_gap: Option<Vec<f64>>,
}

impl GridFile {
    pub fn expand(&self) -> Vec<CsebbParams> {
        let d = CsebbParams::default();
        let or = |v: &Option<Vec<f64>>, x: f64| v.clone().unwrap_or_else(|| vec![x]);
        let windows = self.window.clone().unwrap_or_else(|| vec![d.window]);
        let steps = self.step.clone().unwrap_or_else(|| vec![d.step]);
        let rels = or(&self.rel_merge, d.rel_merge);
        let abss = or(&self.abs_merge, d.abs_merge);
        let gaps = or(&self.min_gap, d.min_gap);
        let mut grid = Vec::new();
        for &window in &windows {
            for &step in &steps {
                for &rel_merge in &rels {
                    for &abs_merge in &abss {
                        for &min_gap in &gaps {
                            grid.push(CsebbParams { window, step, rel_merge, abs_merge, min_gap });
                        }
                    }
                }
            }
        }
        grid
    }
}

pub fn read_grid(path: &Path) -> Result<Vec<CsebbParams>> {
    let grid: GridFile = toml::from_str(&read_text(path)?).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(grid.expand())
}

/// `key<TAB>value` score report; the first line is `metric<TAB>value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.rows.push((key.into(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        for (k, v) in &self.rows {
            s.push_str(&format!("{k}\t{v}\n"));
        }
        s
    }

    pub fn parse(path: &Path, text: &str) -> Result<Report> {
        let mut lines = text.lines();
        if lines.next().map(|h| h.trim_end_matches('\r')) != Some("metric\tvalue") {
            return Err(Error::format(path, "expected header `metric\tvalue`"));
        }
        let mut report = Report::default();
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(path, format!("line {}: expected 2 fields", i + 2)))?;
            report.push(k, v);
        }
        Ok(report)
    }

    /// Numeric value of `key`.
    pub fn value(&self, path: &Path, key: &str) -> Result<f64> {
        let v = self.get(key).ok_or_else(|| Error::format(path, format!("report has no `{key}` row")))?;
        v.trim().parse().map_err(|_| Error::format(path, format!("`{key}` is not a number")))
    }
}

pub fn read_report(path: &Path) -> Result<Report> {
    Report::parse(path, &read_text(path)?)
}

pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    write_atomic(path, report.to_tsv().as_bytes())
}
