//! Observation-text corpus: generation, stratified splitting, and CSV I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::humansensor::QuantizationScheme;
use crate::random::stream;
use crate::textgen;

pub const CSV_HEADER: &str = "level_ratio,text,split,domain_tag";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    InDomain,
    Ood,
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::InDomain => "in_domain",
            DomainTag::Ood => "ood",
        })
    }
}

impl FromStr for DomainTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in_domain" => Ok(DomainTag::InDomain),
            "ood" => Ok(DomainTag::Ood),
            other => Err(format!("unknown domain tag `{other}`")),
        }
    }
}

/// One report: the water level ratio it was written for and the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub level_ratio: f64,
    pub text: String,
    pub split: Split,
    pub domain_tag: DomainTag,
}

impl ObservationRecord {
    fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.level_ratio) {
            return Err(format!("level_ratio {} outside [0, 1]", self.level_ratio));
        }
        if self.text.is_empty() {
            return Err("empty text".into());
        }
        if self.text.contains(['\n', '\r']) {
            return Err("text contains a line break".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<ObservationRecord>,
    level_grid: Vec<f64>,
}

impl Corpus {
    pub fn from_records(mut records: Vec<ObservationRecord>) -> Result<Self> {
        for (i, r) in records.iter_mut().enumerate() {
            // -0.0 would otherwise form its own grid key.
            r.level_ratio += 0.0;
            r.validate().map_err(|e| Error::Corpus(format!("record {i}: {e}")))?;
        }
        let mut level_grid: Vec<f64> = records.iter().map(|r| r.level_ratio).collect();
        level_grid.sort_by(f64::total_cmp);
        level_grid.dedup();
        Ok(Self { records, level_grid })
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    /// Distinct level ratios, ascending.
    pub fn level_grid(&self) -> &[f64] {
        &self.level_grid
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ObservationRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Every grid key must appear in both the train and test splits.
    pub fn check_split_coverage(&self) -> Result<()> {
        for key in &self.level_grid {
            for split in [Split::Train, Split::Test] {
                if !self.records.iter().any(|r| r.level_ratio == *key && r.split == split) {
                    return Err(Error::Corpus(format!("level {key} has no {split} records")));
                }
            }
        }
        Ok(())
    }

    fn indices_by_key(&self) -> BTreeMap<u64, Vec<usize>> {
        let mut by_key: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            // Non-negative floats order the same as their bit patterns.
            by_key.entry(r.level_ratio.to_bits()).or_default().push(i);
        }
        by_key
    }
}

/// Level grid in whole percent: `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start_percent: u32,
    pub stop_percent: u32,
    pub step_percent: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { start_percent: 0, stop_percent: 100, step_percent: 2 }
    }
}

impl GridSpec {
    pub fn ratios(&self) -> Result<Vec<f64>> {
        if self.step_percent == 0 || self.start_percent > self.stop_percent || self.stop_percent > 100 {
            return Err(Error::Config(format!("bad level grid {self:?}")));
        }
        Ok((self.start_percent..=self.stop_percent)
            .step_by(self.step_percent as usize)
            .map(|p| p as f64 / 100.0)
            .collect())
    }
}

/// Synthesizes `texts_per_level` reports per grid level. All records start in the
/// train split; see [`split_corpus`].
pub fn generate_corpus(seed: u64, grid: GridSpec, texts_per_level: usize) -> Result<Corpus> {
    if texts_per_level < 3 {
        return Err(Error::Config(format!("texts_per_level must be at least 3, got {texts_per_level}")));
    }
    let mut rng = stream(seed, 0);
    let mut records = Vec::new();
    for ratio in grid.ratios()? {
        for _ in 0..texts_per_level {
            records.push(ObservationRecord {
                level_ratio: ratio,
                text: textgen::synth_text(ratio, &mut rng),
                split: Split::Train,
                domain_tag: DomainTag::InDomain,
            });
        }
    }
    Corpus::from_records(records)
}

/// Fractions of each level assigned to train, validation, and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    /// Proportions 1882 : 205 : 289.
    fn default() -> Self {
        Self { train: 1882.0, val: 205.0, test: 289.0 }.normalized()
    }
}

impl SplitFractions {
    fn normalized(self) -> Self {
        let s = self.train + self.val + self.test;
        Self { train: self.train / s, val: self.val / s, test: self.test / s }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f >= 0.0 && f.is_finite())) || self.train <= 0.0 {
            return Err(Error::Config(format!("split fractions must be non-negative with train > 0: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Per-level counts `(train, val, test)` for `n` records.
    pub(crate) fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        let nf = n as f64;
        let mut train = (nf * self.train).round() as usize;
        let mut test = (nf * self.test).round() as usize;
        let need_test = self.test > 0.0;
        let required = 1 + need_test as usize;
        if n < required {
            return Err(Error::Corpus(format!(
                "a level with {n} record(s) cannot be stratified into {required} splits"
            )));
        }
        train = train.clamp(1, n);
        if need_test {
            test = test.max(1);
        }
        while train + test > n {
            if train >= test && train > 1 {
                train -= 1;
            } else {
                test -= 1;
            }
        }
        Ok((train, n - train - test, test))
    }
}

/// Reassigns splits, stratified by level. Record order is preserved.
pub fn split_corpus(corpus: &Corpus, fractions: SplitFractions, seed: u64) -> Result<Corpus> {
    fractions.validate()?;
    let mut rng = stream(seed, 1);
    let mut records = corpus.records.clone();
    for (_, mut idx) in corpus.indices_by_key() {
        let (train, val, _) = fractions.counts(idx.len())?;
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            records[i].split = if pos < train {
                Split::Train
            } else if pos < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    let out = Corpus { records, level_grid: corpus.level_grid.clone() };
    if fractions.test > 0.0 {
        out.check_split_coverage()?;
    }
    Ok(out)
}

fn quote(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(corpus.len() * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &corpus.records {
        out.push_str(&format!("{},{},{},{}\n", r.level_ratio, quote(&r.text), r.split, r.domain_tag));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(1, format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(parse_err(1, format!("expected header `{CSV_HEADER}`")));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", row.len())));
        }
        let level_ratio: f64 = row[0].trim().parse().map_err(|e| parse_err(line, format!("level_ratio: {e}")))?;
        let record = ObservationRecord {
            level_ratio,
            text: row[1].to_string(),
            split: row[2].trim().parse().map_err(|e| parse_err(line, e))?,
            domain_tag: row[3].trim().parse().map_err(|e| parse_err(line, e))?,
        };
        record.validate().map_err(|e| parse_err(line, e))?;
        records.push(record);
    }
    Corpus::from_records(records)
}

/// Training label of a record: its ratio mapped linearly onto the quantizer range.
pub fn label_of(record: &ObservationRecord, scheme: &QuantizationScheme) -> Result<usize> {
    scheme.quantize(level_of(record.level_ratio, scheme))
}

/// Ratio in `[0, 1]` to a level on the quantizer's range.
pub fn level_of(ratio: f64, scheme: &QuantizationScheme) -> f64 {
    let level = ratio * (scheme.hi() - scheme.lo()) + scheme.lo();
    level.clamp(scheme.lo(), scheme.hi())
}

/// Out-of-domain phrases, one per line. Blank lines are skipped.
pub fn load_text_lines(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path)?;
    Ok(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn save_text_lines(lines: &[String], path: &Path) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// The bundled dialect bank used for out-of-domain injection.
pub fn default_ood_bank() -> Vec<String> {
    textgen::dialect_bank()
}
