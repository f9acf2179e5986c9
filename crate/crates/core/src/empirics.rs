//! Tax-head and GDP series: ingest, gap filling and composition shares.

use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TAX_HEADS: [&str; 5] = ["personal_income_tax", "company_tax", "vat", "excise", "other"];
pub const GDP: &str = "gdp";
pub const HEADER: [&str; 7] = ["year", "personal_income_tax", "company_tax", "vat", "excise", "other", "gdp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// `None` marks a missing cell.
    pub values: Vec<Option<f64>>,
}

/// Annual series, one column per tax head plus GDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiscalSeries {
    pub years: Vec<i32>,
    pub columns: Vec<Column>,
}

impl FiscalSeries {
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flat_map(|c| &c.values).filter(|v| v.is_none()).count()
    }

    /// Builds a complete series from rows of `(year, [heads..., gdp])`.
    pub fn from_rows(rows: &[(i32, [f64; 6])]) -> Result<Self> {
        let rows: Vec<(i32, [Option<f64>; 6])> = rows.iter().map(|(y, v)| (*y, v.map(Some))).collect();
        Self::from_optional_rows(&rows)
    }

    pub fn from_optional_rows(rows: &[(i32, [Option<f64>; 6])]) -> Result<Self> {
        let mut columns: Vec<Column> = HEADER[1..]
            .iter()
            .map(|n| Column { name: n.to_string(), values: Vec::with_capacity(rows.len()) })
            .collect();
        let mut years = Vec::with_capacity(rows.len());
        for (year, values) in rows {
            years.push(*year);
            for (col, v) in columns.iter_mut().zip(values) {
                col.values.push(*v);
            }
        }
        let series = FiscalSeries { years, columns };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.years.windows(2) {
            if w[1] == w[0] {
                return Err(Error::Schema(format!("duplicate year {}", w[0])));
            }
            if w[1] < w[0] {
                return Err(Error::Schema(format!("years must ascend ({} after {})", w[1], w[0])));
            }
        }
        for c in &self.columns {
            if c.values.len() != self.years.len() {
                return Err(Error::Schema(format!("column {} has the wrong length", c.name)));
            }
            for (year, v) in self.years.iter().zip(&c.values) {
                if let Some(v) = v {
                    if !v.is_finite() || *v < 0.0 {
                        return Err(Error::Schema(format!("{} in {year} must be finite and >= 0", c.name)));
                    }
                    if c.name == GDP && *v <= 0.0 {
                        return Err(Error::Schema(format!("gdp in {year} must be > 0")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the CSV schema; values use the shortest exact decimal form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", HEADER.join(","))?;
        for (i, year) in self.years.iter().enumerate() {
            write!(w, "{year}")?;
            for c in &self.columns {
                match c.values[i] {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<FiscalSeries> {
    let file = std::fs::File::open(path)?;
    parse_csv(file)
}

/// Parses the `year,personal_income_tax,company_tax,vat,excise,other,gdp`
/// schema; an empty cell is a missing value.
pub fn parse_csv<R: Read>(reader: R) -> Result<FiscalSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema("empty file".into()));
    }
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Schema(format!("expected header `{}`", HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", HEADER.len(), record.len()),
            });
        }
        let year: i32 =
            record[0].parse().map_err(|_| Error::Parse { line, message: format!("invalid year `{}`", &record[0]) })?;
        let mut values = [None; 6];
        for (i, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("invalid number `{cell}` in {}", HEADER[i + 1]) })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse { line, message: format!("{} must be finite and >= 0", HEADER[i + 1]) });
            }
            values[i] = Some(v);
        }
        rows.push((year, values));
    }
    FiscalSeries::from_optional_rows(&rows)
}

/// Replaces each missing cell by the mean of the `k` present values of the
/// same column whose years are nearest; ties go to the earlier year.
pub fn knn_impute(series: &FiscalSeries, k: usize) -> Result<FiscalSeries> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let mut out = series.clone();
    for (col_in, col_out) in series.columns.iter().zip(out.columns.iter_mut()) {
        if col_in.values.iter().all(Option::is_some) {
            continue;
        }
        let present: Vec<(i32, f64)> =
            series.years.iter().zip(&col_in.values).filter_map(|(y, v)| v.map(|v| (*y, v))).collect();
        if present.len() < k {
            return Err(Error::Imputation {
                column: col_in.name.clone(),
                message: format!("{} present values, need at least {k}", present.len()),
            });
        }
        for (year, cell) in series.years.iter().zip(col_out.values.iter_mut()) {
            if cell.is_some() {
                continue;
            }
            let mut neighbours = present.clone();
            neighbours.sort_by_key(|(y, _)| ((y - year).abs(), *y));
            let sum: f64 = neighbours[..k].iter().map(|(_, v)| v).sum();
            *cell = Some(sum / k as f64);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearRatio {
    pub year: i32,
    /// Total tax over GDP.
    pub ratio: f64,
    pub personal_income_tax: f64,
    pub company_tax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub first_year: i32,
    pub last_year: i32,
    /// Share of each head in total tax over the range, in `TAX_HEADS` order.
    pub shares: Vec<(String, f64)>,
    pub ratios: Vec<YearRatio>,
    pub peak_year: i32,
    pub peak_ratio: f64,
}

impl CompositionReport {
    pub fn share(&self, head: &str) -> Option<f64> {
        self.shares.iter().find(|(h, _)| h == head).map(|(_, v)| *v)
    }
}

/// Shares of each head and per-year tax-to-GDP ratios over `years`.
pub fn composition(series: &FiscalSeries, years: RangeInclusive<i32>) -> Result<CompositionReport> {
    series.validate()?;
    let rows: Vec<usize> = (0..series.len()).filter(|&i| years.contains(&series.years[i])).collect();
    if rows.is_empty() {
        return Err(Error::domain(format!("no data in years {}..{}", years.start(), years.end())));
    }
    let value = |name: &str, i: usize| -> Result<f64> {
        let col = series.column(name).ok_or_else(|| Error::Schema(format!("missing column {name}")))?;
        col.values[i].ok_or(Error::RequiresImputation { column: name.to_string(), year: series.years[i] })
    };

    let mut sums = [0.0; 5];
    let mut ratios = Vec::with_capacity(rows.len());
    for &i in &rows {
        let mut total = 0.0;
        for (h, head) in TAX_HEADS.iter().enumerate() {
            let v = value(head, i)?;
            sums[h] += v;
            total += v;
        }
        let gdp = value(GDP, i)?;
        ratios.push(YearRatio {
            year: series.years[i],
            ratio: total / gdp,
            personal_income_tax: value("personal_income_tax", i)? / gdp,
            company_tax: value("company_tax", i)? / gdp,
        });
    }
    let grand: f64 = sums.iter().sum();
    if grand <= 0.0 {
        return Err(Error::domain("total tax over the range is zero"));
    }
    let shares = TAX_HEADS.iter().zip(sums).map(|(h, s)| (h.to_string(), s / grand)).collect();
    let peak = ratios.iter().fold(ratios[0], |best, r| if r.ratio > best.ratio { *r } else { best });
    Ok(CompositionReport {
        first_year: series.years[rows[0]],
        last_year: series.years[*rows.last().unwrap()],
        shares,
        ratios,
        peak_year: peak.year,
        peak_ratio: peak.ratio,
    })
}

/// Reference points for South African data (1974-2021).
pub const REFERENCE_PEAK_YEAR: i32 = 1991;
pub const REFERENCE_PEAK_RATIO: f64 = 0.25;
pub const REFERENCE_SHARES: [(&str, f64); 4] =
    [("personal_income_tax", 0.41), ("company_tax", 0.23), ("vat", 0.19), ("excise", 0.11)];

/// Informational comparison against the published reference; never gating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub reference_peak_year: i32,
    pub reference_peak_ratio: f64,
    pub computed_peak_year: i32,
    pub computed_peak_ratio: f64,
    pub peak_year_matches: bool,
    pub share_differences: Vec<(String, f64)>,
}

pub fn compare_with_reference(report: &CompositionReport) -> ReferenceComparison {
    ReferenceComparison {
        reference_peak_year: REFERENCE_PEAK_YEAR,
        reference_peak_ratio: REFERENCE_PEAK_RATIO,
        computed_peak_year: report.peak_year,
        computed_peak_ratio: report.peak_ratio,
        peak_year_matches: report.peak_year == REFERENCE_PEAK_YEAR,
        share_differences: REFERENCE_SHARES
            .iter()
            .map(|(h, v)| (h.to_string(), report.share(h).unwrap_or(0.0) - v))
            .collect(),
    }
}
