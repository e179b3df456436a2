//! Sales panels, annual growth rates and leave-one-out rescaling.
//!
//! Panels are stored row-major (one row per firm, one column per quarter)
//! with an explicit observation mask. Unobserved cells hold `0.0` in the
//! value buffer and must never be read without consulting the mask.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Raw quarterly sales, one row per firm.
#[derive(Debug, Clone, PartialEq)]
pub struct SalesPanel {
    pub firm_ids: Vec<String>,
    /// Contiguous quarter indices covering every observation in the file.
    pub timestamps: Vec<i64>,
    values: Vec<f64>,
    mask: Vec<bool>,
    pub sector: Vec<Option<String>>,
    pub country: Vec<Option<String>>,
}

impl SalesPanel {
    /// Builds a panel from per-firm rows of optional sales.
    ///
    /// Every observed value must be strictly positive.
    pub fn from_rows(
        firm_ids: Vec<String>,
        timestamps: Vec<i64>,
        rows: &[Vec<Option<f64>>],
    ) -> Result<Self> {
        let n = firm_ids.len();
        let t = timestamps.len();
        if rows.len() != n {
            return Err(Error::Contract(format!(
                "{} rows for {} firms",
                rows.len(),
                n
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract("timestamps must be strictly increasing".into()));
        }
        let mut values = vec![0.0; n * t];
        let mut mask = vec![false; n * t];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Contract(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    t
                )));
            }
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Domain(format!(
                            "firm {}: sales must be positive, got {}",
                            firm_ids[i], v
                        )));
                    }
                    values[i * t + c] = v;
                    mask[i * t + c] = true;
                }
            }
        }
        Ok(SalesPanel {
            sector: vec![None; n],
            country: vec![None; n],
            firm_ids,
            timestamps,
            values,
            mask,
        })
    }

    pub fn n_firms(&self) -> usize {
        self.firm_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn get(&self, i: usize, t: usize) -> Option<f64> {
        let k = i * self.n_times() + t;
        self.mask[k].then(|| self.values[k])
    }

    pub fn observed_count(&self, i: usize) -> usize {
        let t = self.n_times();
        self.mask[i * t..(i + 1) * t].iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Deserialize)]
struct SalesRecord {
    firm_id: String,
    quarter: String,
    sales: String,
    #[serde(default)]
    sector: Option<String>,
    #[serde(default)]
    country: Option<String>,
}

/// Reads `firm_id,quarter,sales[,sector][,country]` and keeps firms with at
/// least `4 * min_years` observed quarters.
pub fn load_sales_csv(path: impl AsRef<Path>, min_years: usize) -> Result<SalesPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sales(file, min_years)
}

/// Same as [`load_sales_csv`] over any reader.
pub fn read_sales<R: std::io::Read>(reader: R, min_years: usize) -> Result<SalesPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    for required in ["firm_id", "quarter", "sales"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing column `{required}`"),
            });
        }
    }

    let mut firm_index: HashMap<String, usize> = HashMap::new();
    let mut firm_ids: Vec<String> = Vec::new();
    let mut sectors: Vec<Option<String>> = Vec::new();
    let mut countries: Vec<Option<String>> = Vec::new();
    let mut obs: HashMap<(usize, i64), f64> = HashMap::new();

    let mut record = csv::StringRecord::new();
    loop {
        let has = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        if !has {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        let rec: SalesRecord = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        let quarter: i64 = rec.quarter.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("quarter `{}` is not an integer", rec.quarter),
        })?;
        let idx = *firm_index.entry(rec.firm_id.clone()).or_insert_with(|| {
            firm_ids.push(rec.firm_id.clone());
            sectors.push(None);
            countries.push(None);
            firm_ids.len() - 1
        });
        for (slot, val, what) in [
            (&mut sectors[idx], rec.sector, "sector"),
            (&mut countries[idx], rec.country, "country"),
        ] {
            match (slot.as_ref(), val.filter(|v| !v.is_empty())) {
                (None, Some(v)) => *slot = Some(v),
                (Some(old), Some(v)) if *old != v => {
                    return Err(Error::Conflict(format!(
                        "line {line}: firm {} has {what} `{old}` and `{v}`",
                        rec.firm_id
                    )))
                }
                _ => {}
            }
        }
        if rec.sales.is_empty() {
            continue;
        }
        let sales: f64 = rec.sales.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("sales `{}` is not a number", rec.sales),
        })?;
        if !(sales > 0.0) || !sales.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("sales must be positive, got {sales}"),
            });
        }
        if obs.insert((idx, quarter), sales).is_some() {
            return Err(Error::Conflict(format!(
                "line {line}: duplicate row for firm {} quarter {quarter}",
                rec.firm_id
            )));
        }
    }

    let required = 4 * min_years;
    let mut counts = vec![0usize; firm_ids.len()];
    for (i, _) in obs.keys() {
        counts[*i] += 1;
    }
    let keep: Vec<usize> = (0..firm_ids.len())
        .filter(|&i| counts[i] >= required.max(1))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyPanel(format!(
            "no firm has at least {required} observed quarters"
        )));
    }
    let kept_quarters = || {
        obs.keys()
            .filter(|(i, _)| counts[*i] >= required.max(1))
            .map(|(_, q)| *q)
    };
    let lo = kept_quarters().min().unwrap();
    let hi = kept_quarters().max().unwrap();
    let timestamps: Vec<i64> = (lo..=hi).collect();
    let rows: Vec<Vec<Option<f64>>> = keep
        .iter()
        .map(|&i| {
            timestamps
                .iter()
                .map(|q| obs.get(&(i, *q)).copied())
                .collect()
        })
        .collect();
    let mut panel = SalesPanel::from_rows(
        keep.iter().map(|&i| firm_ids[i].clone()).collect(),
        timestamps,
        &rows,
    )?;
    panel.sector = keep.iter().map(|&i| sectors[i].clone()).collect();
    panel.country = keep.iter().map(|&i| countries[i].clone()).collect();
    Ok(panel)
}

/// Growth-rate panel `g_i(t)` with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPanel {
    pub firm_ids: Vec<String>,
    pub timestamps: Vec<i64>,
    values: Vec<f64>,
    mask: Vec<bool>,
    pub rescaled: bool,
}

impl GrowthPanel {
    /// Panel from per-firm rows, `None` marking a missing observation.
    pub fn from_rows(
        firm_ids: Vec<String>,
        timestamps: Vec<i64>,
        rows: &[Vec<Option<f64>>],
        rescaled: bool,
    ) -> Result<Self> {
        let n = firm_ids.len();
        let t = timestamps.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != t) {
            return Err(Error::Contract(format!(
                "rows do not match a {n}x{t} panel"
            )));
        }
        let mut values = vec![0.0; n * t];
        let mut mask = vec![false; n * t];
        for (i, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if !v.is_finite() {
                        return Err(Error::Domain(format!(
                            "firm {}: non-finite value at column {c}",
                            firm_ids[i]
                        )));
                    }
                    values[i * t + c] = *v;
                    mask[i * t + c] = true;
                }
            }
        }
        Ok(GrowthPanel {
            firm_ids,
            timestamps,
            values,
            mask,
            rescaled,
        })
    }

    /// Fully observed panel from a row-major `n x t` buffer.
    pub fn dense(firm_ids: Vec<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), firm_ids.len() * timestamps.len());
        let mask = vec![true; values.len()];
        GrowthPanel {
            firm_ids,
            timestamps,
            values,
            mask,
            rescaled: false,
        }
    }

    /// Fully observed panel with generated ids `f0..f{n-1}` and quarters `0..t`.
    pub fn dense_unnamed(n: usize, t: usize, values: Vec<f64>) -> Self {
        GrowthPanel::dense(
            (0..n).map(|i| format!("f{i}")).collect(),
            (0..t as i64).collect(),
            values,
        )
    }

    pub fn n_firms(&self) -> usize {
        self.firm_ids.len()
    }

    pub fn n_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn get(&self, i: usize, t: usize) -> Option<f64> {
        let k = i * self.n_times() + t;
        self.mask[k].then(|| self.values[k])
    }

    pub fn is_observed(&self, i: usize, t: usize) -> bool {
        self.mask[i * self.n_times() + t]
    }

    /// Raw row buffer; entries where [`Self::mask_row`] is false are meaningless.
    pub fn row(&self, i: usize) -> &[f64] {
        let t = self.n_times();
        &self.values[i * t..(i + 1) * t]
    }

    pub fn mask_row(&self, i: usize) -> &[bool] {
        let t = self.n_times();
        &self.mask[i * t..(i + 1) * t]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self, i: usize) -> usize {
        self.mask_row(i).iter().filter(|m| **m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|m| *m)
    }

    /// Observed values of row `i` in time order.
    pub fn observed(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row(i)
            .iter()
            .zip(self.mask_row(i))
            .enumerate()
            .filter(|(_, (_, m))| **m)
            .map(|(c, (v, _))| (c, *v))
    }

    /// Overwrites observed entries only; `f(i, t, value)` gives the new value.
    pub fn map_observed(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> GrowthPanel {
        let t = self.n_times();
        let mut out = self.clone();
        for k in 0..out.values.len() {
            if out.mask[k] {
                out.values[k] = f(k / t, k % t, out.values[k]);
            }
        }
        out
    }

    /// Restricts the panel to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> GrowthPanel {
        let t = self.n_times();
        let mut values = Vec::with_capacity(rows.len() * t);
        let mut mask = Vec::with_capacity(rows.len() * t);
        for &i in rows {
            values.extend_from_slice(self.row(i));
            mask.extend_from_slice(self.mask_row(i));
        }
        GrowthPanel {
            firm_ids: rows.iter().map(|&i| self.firm_ids[i].clone()).collect(),
            timestamps: self.timestamps.clone(),
            values,
            mask,
            rescaled: self.rescaled,
        }
    }

    pub(crate) fn with_mask(&self, mask: Vec<bool>) -> GrowthPanel {
        assert_eq!(mask.len(), self.mask.len());
        let mut out = self.clone();
        for (v, m) in out.values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        out.mask = mask;
        out
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// `g_i(t) = ln(s_i(t + horizon) / s_i(t))` wherever both quarters are observed.
pub fn growth_rates(sales: &SalesPanel, horizon: usize) -> Result<GrowthPanel> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let t = sales.n_times();
    if horizon >= t {
        return Err(Error::EmptyPanel(format!(
            "horizon {horizon} leaves no columns out of {t}"
        )));
    }
    let cols = t - horizon;
    let rows: Vec<Vec<Option<f64>>> = (0..sales.n_firms())
        .map(|i| {
            (0..cols)
                .map(|c| match (sales.get(i, c), sales.get(i, c + horizon)) {
                    (Some(a), Some(b)) => Some((b / a).ln()),
                    _ => None,
                })
                .collect()
        })
        .collect();
    GrowthPanel::from_rows(
        sales.firm_ids.clone(),
        sales.timestamps[..cols].to_vec(),
        &rows,
        false,
    )
}

/// Leave-one-out standardisation of every row.
///
/// The observation at `t` is centred on the full-row mean and divided by the
/// unbiased standard deviation of the remaining observations.
pub fn rescale_loo(g: &GrowthPanel) -> Result<GrowthPanel> {
    let mut out = g.clone();
    let t = g.n_times();
    for i in 0..g.n_firms() {
        let n = g.observed_count(i);
        if n < 3 {
            return Err(Error::InsufficientData {
                firm: g.firm_ids[i].clone(),
                observed: n,
                required: 3,
            });
        }
        let nf = n as f64;
        let mean = g.observed(i).map(|(_, v)| v).sum::<f64>() / nf;
        let ss: f64 = g.observed(i).map(|(_, v)| (v - mean).powi(2)).sum();
        let floor = 1e-12 * ss / (nf - 1.0);
        for (c, v) in g.observed(i) {
            let d = v - mean;
            // sum of squares of the other n-1 points about their own mean
            let rest = ss - d * d * nf / (nf - 1.0);
            let var = rest / (nf - 2.0);
            if !(var > floor) || var <= 0.0 {
                return Err(Error::DegenerateSeries {
                    firm: g.firm_ids[i].clone(),
                    column: c,
                });
            }
            out.values[i * t + c] = d / var.sqrt();
        }
    }
    out.rescaled = true;
    Ok(out)
}

/// Writes `firm_id,quarter,value`, omitting missing entries.
pub fn write_growth_csv<W: std::io::Write>(g: &GrowthPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["firm_id", "quarter", "value"])?;
    for i in 0..g.n_firms() {
        for (c, v) in g.observed(i) {
            w.write_record([
                g.firm_ids[i].as_str(),
                &g.timestamps[c].to_string(),
                &v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<growth csv>", e))?;
    Ok(())
}

/// Reads the format produced by [`write_growth_csv`].
///
/// Quarters span the contiguous range between the smallest and largest
/// quarter present; firms keep their order of first appearance.
pub fn read_growth_csv<R: std::io::Read>(reader: R, rescaled: bool) -> Result<GrowthPanel> {
    #[derive(Deserialize)]
    struct Rec {
        firm_id: String,
        quarter: i64,
        value: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids = Vec::new();
    let mut cells: HashMap<(usize, i64), f64> = HashMap::new();
    for (k, rec) in rdr.deserialize::<Rec>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: k + 2,
            msg: e.to_string(),
        })?;
        let i = *index.entry(rec.firm_id.clone()).or_insert_with(|| {
            ids.push(rec.firm_id.clone());
            ids.len() - 1
        });
        if cells.insert((i, rec.quarter), rec.value).is_some() {
            return Err(Error::Conflict(format!(
                "duplicate entry for firm {} quarter {}",
                rec.firm_id, rec.quarter
            )));
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyPanel("growth file has no rows".into()));
    }
    let lo = cells.keys().map(|k| k.1).min().unwrap();
    let hi = cells.keys().map(|k| k.1).max().unwrap();
    let timestamps: Vec<i64> = (lo..=hi).collect();
    let rows: Vec<Vec<Option<f64>>> = (0..ids.len())
        .map(|i| timestamps.iter().map(|q| cells.get(&(i, *q)).copied()).collect())
        .collect();
    GrowthPanel::from_rows(ids, timestamps, &rows, rescaled)
}
