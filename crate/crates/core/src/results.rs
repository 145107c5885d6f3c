//! Result tables, their CSV/JSON encodings and plot-ready aggregates.
//!
//! CSV columns, in order:
//!
//! ```text
//! config_hash,sweep_variable,sweep_value,scheme,drop,subframe_bucket,se,pe,
//! evd_large,evd_small,pencil_fits,gram_flops,pseudoinverse,reconstruction,flags
//! ```
//!
//! Non-finite reals are written as `inf`, `-inf` or `nan` in both formats,
//! so JSON output stays valid.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{OutputFormat, RunConfig, SweepVariable};
use crate::error::{Error, Result};
use crate::experiment::DropRecord;
use crate::flags::Flags;

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 15] = [
    "config_hash",
    "sweep_variable",
    "sweep_value",
    "scheme",
    "drop",
    "subframe_bucket",
    "se",
    "pe",
    "evd_large",
    "evd_small",
    "pencil_fits",
    "gram_flops",
    "pseudoinverse",
    "reconstruction",
    "flags",
];

mod real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct Real;

    impl Visitor<'_> for Real {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or one of inf, -inf, nan")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => v.parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(Real)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub config_hash: String,
    /// Empty when the run has no sweep.
    pub sweep_variable: String,
    #[serde(with = "real")]
    pub sweep_value: f64,
    pub scheme: String,
    pub drop: usize,
    pub subframe_bucket: usize,
    #[serde(with = "real")]
    pub se: f64,
    #[serde(with = "real")]
    pub pe: f64,
    pub evd_large: u64,
    pub evd_small: u64,
    pub pencil_fits: u64,
    pub gram_flops: u64,
    pub pseudoinverse: u64,
    pub reconstruction: u64,
    /// `|`-separated flag names.
    pub flags: String,
}

impl ResultRow {
    /// Equality that treats NaN as equal to itself.
    pub fn same_as(&self, other: &ResultRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.config_hash == other.config_hash
            && self.sweep_variable == other.sweep_variable
            && eq(self.sweep_value, other.sweep_value)
            && self.scheme == other.scheme
            && self.drop == other.drop
            && self.subframe_bucket == other.subframe_bucket
            && eq(self.se, other.se)
            && eq(self.pe, other.pe)
            && self.evd_large == other.evd_large
            && self.evd_small == other.evd_small
            && self.pencil_fits == other.pencil_fits
            && self.gram_flops == other.gram_flops
            && self.pseudoinverse == other.pseudoinverse
            && self.reconstruction == other.reconstruction
            && self.flags == other.flags
    }

    pub fn flag_set(&self) -> Option<Flags> {
        Flags::from_names(&self.flags)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultTable {
    pub schema_version: u32,
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(config_hash: String) -> Self {
        ResultTable { schema_version: SCHEMA_VERSION, config_hash, rows: Vec::new() }
    }

    /// Rows of every drop in record order; failed drops become one
    /// `drop_failed` row per scheme with NaN metrics.
    pub fn from_records(config: &RunConfig, records: &[DropRecord]) -> Self {
        let hash = config.hash();
        let points = config.sweep_points();
        let mut table = ResultTable::new(hash.clone());
        for rec in records {
            let (var, value) = points[rec.sweep_index];
            let sweep_variable = var.map(|v| v.name().to_string()).unwrap_or_default();
            let base = |scheme: &str, bucket: usize| ResultRow {
                config_hash: hash.clone(),
                sweep_variable: sweep_variable.clone(),
                sweep_value: value,
                scheme: scheme.to_string(),
                drop: rec.drop,
                subframe_bucket: bucket,
                se: f64::NAN,
                pe: f64::NAN,
                evd_large: 0,
                evd_small: 0,
                pencil_fits: 0,
                gram_flops: 0,
                pseudoinverse: 0,
                reconstruction: 0,
                flags: Flags::DROP_FAILED.to_names(),
            };
            match &rec.outcome {
                Ok(schemes) => {
                    for (scheme, buckets) in schemes {
                        for b in buckets {
                            let l = &b.ledger;
                            table.rows.push(ResultRow {
                                se: b.se,
                                pe: b.pe,
                                evd_large: l.evd_large,
                                evd_small: l.evd_small,
                                pencil_fits: l.pencil_fits,
                                gram_flops: l.gram_flops,
                                pseudoinverse: l.pseudoinverse,
                                reconstruction: l.reconstruction,
                                flags: b.flags.to_names(),
                                ..base(scheme.name(), b.bucket)
                            });
                        }
                    }
                }
                Err(_) => {
                    for scheme in &config.schemes {
                        table.rows.push(base(scheme.name(), 0));
                    }
                }
            }
        }
        table
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses CSV written by [`ResultTable::to_csv`]. The header must match
    /// exactly and every row must carry the same config hash.
    pub fn from_csv(text: &str) -> Result<ResultTable> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Config(format!(
                "unexpected CSV header: {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        let hash = rows.first().map(|r| r.config_hash.clone()).unwrap_or_default();
        let table = ResultTable { schema_version: SCHEMA_VERSION, config_hash: hash, rows };
        table.check()?;
        Ok(table)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<ResultTable> {
        let table: ResultTable = serde_json::from_str(text)?;
        if table.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", table.schema_version)));
        }
        table.check()?;
        Ok(table)
    }

    fn check(&self) -> Result<()> {
        for row in &self.rows {
            if row.config_hash != self.config_hash {
                return Err(Error::Config(format!(
                    "row config_hash {} differs from {}",
                    row.config_hash, self.config_hash
                )));
            }
            if row.flag_set().is_none() {
                return Err(Error::Config(format!("unknown flag in `{}`", row.flags)));
            }
        }
        Ok(())
    }
}

/// Runs the experiment described by `config`.
pub fn run_experiment(config: &RunConfig) -> Result<ResultTable> {
    let records = crate::experiment::simulate(config)?;
    Ok(ResultTable::from_records(config, &records))
}

/// Writes `results.csv` and/or `results.json` under `dir`, creating it.
pub fn emit_results(table: &ResultTable, dir: &Path, formats: &[OutputFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for format in formats {
        let (name, body) = match format {
            OutputFormat::Csv => ("results.csv", table.to_csv()?),
            OutputFormat::Json => ("results.json", table.to_json()?),
        };
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Speed,
    Cycle,
    Noise,
}

impl Figure {
    pub fn variable(self) -> SweepVariable {
        match self {
            Figure::Speed => SweepVariable::UeSpeedKmh,
            Figure::Cycle => SweepVariable::TEvd,
            Figure::Noise => SweepVariable::SamplingNoiseDb,
        }
    }

    pub fn from_name(s: &str) -> Option<Figure> {
        match s {
            "speed" => Some(Figure::Speed),
            "cycle" => Some(Figure::Cycle),
            "noise" => Some(Figure::Noise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub sweep_variable: String,
    #[serde(serialize_with = "real::serialize")]
    pub sweep_value: f64,
    pub scheme: String,
    /// Drops contributing, failed drops excluded.
    pub n: usize,
    pub se_mean: f64,
    pub se_stderr: f64,
    pub pe_mean: f64,
    pub pe_stderr: f64,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean ± standard error over drops of the per-drop SE and PE (each the mean
/// over that drop's buckets), per (sweep value, scheme). Rows are ordered by
/// sweep value, then by first appearance of the scheme.
/// drop -> (se sum, pe sum, bucket count).
type DropSums = BTreeMap<usize, (f64, f64, usize)>;

pub fn sweep_figures(table: &ResultTable, figure: Figure) -> Result<Vec<AggregateRow>> {
    let name = figure.variable().name();
    let rows: Vec<&ResultRow> = table.rows.iter().filter(|r| r.sweep_variable == name).collect();
    if rows.is_empty() {
        return Err(Error::MissingVariable(name.to_string()));
    }
    let mut scheme_order: Vec<&str> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<(u64, String), DropSums> = BTreeMap::new();
    for r in rows {
        if !scheme_order.contains(&r.scheme.as_str()) {
            scheme_order.push(&r.scheme);
        }
        if !values.iter().any(|v| v.to_bits() == r.sweep_value.to_bits()) {
            values.push(r.sweep_value);
        }
        if !(r.se.is_finite() && r.pe.is_finite()) {
            continue;
        }
        let e = groups.entry((r.sweep_value.to_bits(), r.scheme.clone())).or_default().entry(r.drop).or_default();
        e.0 += r.se;
        e.1 += r.pe;
        e.2 += 1;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mut out = Vec::new();
    for v in values {
        for scheme in &scheme_order {
            let Some(drops) = groups.get(&(v.to_bits(), scheme.to_string())) else { continue };
            let se: Vec<f64> = drops.values().map(|(s, _, c)| s / *c as f64).collect();
            let pe: Vec<f64> = drops.values().map(|(_, p, c)| p / *c as f64).collect();
            let (se_mean, se_stderr) = mean_stderr(&se);
            let (pe_mean, pe_stderr) = mean_stderr(&pe);
            out.push(AggregateRow {
                sweep_variable: name.to_string(),
                sweep_value: v,
                scheme: scheme.to_string(),
                n: se.len(),
                se_mean,
                se_stderr,
                pe_mean,
                pe_stderr,
            });
        }
    }
    Ok(out)
}

/// CSV encoding of an aggregate table.
pub fn aggregates_to_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "sweep_variable",
            "sweep_value",
            "scheme",
            "n",
            "se_mean",
            "se_stderr",
            "pe_mean",
            "pe_stderr",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, scheme: &str, drop: usize, bucket: usize, se: f64) -> ResultRow {
        ResultRow {
            config_hash: "abc".into(),
            sweep_variable: "ue_speed_kmh".into(),
            sweep_value: value,
            scheme: scheme.into(),
            drop,
            subframe_bucket: bucket,
            se,
            pe: se / 10.0,
            evd_large: 5,
            evd_small: 0,
            pencil_fits: 4,
            gram_flops: 0,
            pseudoinverse: 1,
            reconstruction: 1,
            flags: String::new(),
        }
    }

    fn table(rows: Vec<ResultRow>) -> ResultTable {
        ResultTable { schema_version: SCHEMA_VERSION, config_hash: "abc".into(), rows }
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = ResultTable::new("abc".into()).to_csv().unwrap();
        assert_eq!(csv, CSV_HEADER.join(",") + "\n");
        assert!(ResultTable::from_csv(&csv).unwrap().rows.is_empty());
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let mut rows = vec![row(30.0, "full_evd", 0, 0, 12.5), row(f64::INFINITY, "wiener", 1, 2, 1.0 / 3.0)];
        rows[1].flags = "tracking_lost|extrapolated".into();
        rows.push(ResultRow {
            se: f64::NAN,
            pe: f64::NAN,
            flags: "drop_failed".into(),
            ..row(30.0, "lazy_evd", 2, 0, 0.0)
        });
        let t = table(rows);
        for back in [
            ResultTable::from_csv(&t.to_csv().unwrap()).unwrap(),
            ResultTable::from_json(&t.to_json().unwrap()).unwrap(),
        ] {
            assert_eq!(back.rows.len(), t.rows.len());
            for (a, b) in t.rows.iter().zip(&back.rows) {
                assert!(a.same_as(b), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn json_shape() {
        let t = table(vec![row(f64::INFINITY, "full_evd", 0, 0, 2.0)]);
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["config_hash"], "abc");
        let r = &v["rows"][0];
        assert_eq!(r["sweep_value"], "inf");
        assert!(r["se"].is_number() && r["drop"].is_u64() && r["flags"].is_string());
        assert_eq!(r.as_object().unwrap().len(), CSV_HEADER.len());
    }

    #[test]
    fn readback_rejects_bad_input() {
        assert!(ResultTable::from_csv("a,b\n1,2\n").is_err());
        let mut t = table(vec![row(1.0, "x", 0, 0, 1.0)]);
        t.rows[0].flags = "bogus".into();
        assert!(ResultTable::from_csv(&t.to_csv().unwrap()).is_err());
        assert!(ResultTable::from_json("{\"schema_version\":2,\"config_hash\":\"\",\"rows\":[]}").is_err());
    }

    #[test]
    fn single_value_single_scheme_aggregates_to_one_row() {
        let t = table(vec![row(30.0, "full_evd", 0, 0, 2.0), row(30.0, "full_evd", 0, 1, 4.0)]);
        let agg = sweep_figures(&t, Figure::Speed).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].n, 1);
        assert!((agg[0].se_mean - 3.0).abs() < 1e-15 && agg[0].se_stderr == 0.0);
    }

    #[test]
    fn constant_rows_have_zero_stderr() {
        let rows = (0..10).map(|d| row(120.0, "egvp_wcm", d, 0, 7.0)).collect();
        let agg = sweep_figures(&table(rows), Figure::Speed).unwrap();
        assert_eq!(agg[0].se_stderr, 0.0);
        assert_eq!(agg[0].n, 10);
    }

    #[test]
    fn aggregate_matches_second_pass() {
        let mut rows = Vec::new();
        for v in [250.0, 30.0] {
            for d in 0..6 {
                for b in 0..3 {
                    rows.push(row(v, "lazy_evd", d, b, v / 100.0 + d as f64 * 0.3 + b as f64 * 0.1));
                    rows.push(row(v, "full_evd", d, b, (d * b) as f64));
                }
            }
        }
        let t = table(rows);
        let agg = sweep_figures(&t, Figure::Speed).unwrap();
        assert_eq!(agg.iter().map(|a| a.sweep_value).collect::<Vec<_>>(), vec![30.0, 30.0, 250.0, 250.0]);
        assert_eq!(agg[0].scheme, "lazy_evd");
        for a in &agg {
            let per_drop: Vec<f64> = (0..6)
                .map(|d| {
                    let xs: Vec<f64> = t
                        .rows
                        .iter()
                        .filter(|r| r.sweep_value == a.sweep_value && r.scheme == a.scheme && r.drop == d)
                        .map(|r| r.se)
                        .collect();
                    xs.iter().sum::<f64>() / xs.len() as f64
                })
                .collect();
            let m = per_drop.iter().sum::<f64>() / 6.0;
            let sd = (per_drop.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 5.0).sqrt();
            assert!((a.se_mean - m).abs() < 1e-12);
            assert!((a.se_stderr - sd / 6f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_variable() {
        let t = table(vec![row(1.0, "full_evd", 0, 0, 1.0)]);
        assert!(matches!(sweep_figures(&t, Figure::Noise), Err(Error::MissingVariable(_))));
    }
}
