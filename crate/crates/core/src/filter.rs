//! Selection of temporally unbiased noisy cells and the enrollment database.

use crate::characterize::CharacterizationMap;
use crate::model::{CellAddress, DramGeometry};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const ENROLLMENT_TAG: &str = "DLTRNG-ENROLLMENT v1";
const WINDOW_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid window [{lo}, {hi}]: need 0 <= lo < hi <= 1")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("enrollment database line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O error")]
    Io(#[from] std::io::Error),
}

/// How per-cell ones fractions are compared with the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Ones over all measurements, regardless of pattern.
    #[default]
    Pooled,
    /// Every pattern's ones fraction must lie in the window on its own.
    PerPattern,
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowMode::Pooled => "pooled",
            WindowMode::PerPattern => "per-pattern",
        })
    }
}

impl std::str::FromStr for WindowMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pooled" => Ok(WindowMode::Pooled),
            "per-pattern" => Ok(WindowMode::PerPattern),
            other => Err(format!("unknown window mode `{other}`")),
        }
    }
}

/// Inclusive ones-fraction bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for BiasWindow {
    fn default() -> Self {
        BiasWindow { lo: 0.40, hi: 0.60 }
    }
}

impl BiasWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self, FilterError> {
        let w = BiasWindow { lo, hi };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(FilterError::InvalidWindow {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, ones: u32, total: u32) -> bool {
        let f = ones as f64 / total as f64;
        f >= self.lo - WINDOW_EPS && f <= self.hi + WINDOW_EPS
    }
}

/// The enrolled cells used for generation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSet {
    pub geometry: DramGeometry,
    pub window: BiasWindow,
    pub mode: WindowMode,
    pub total_measurements: u32,
    pub campaign_id: String,
    pub config_digest: Option<String>,
    members: Vec<CellAddress>,
}

impl FilterSet {
    pub fn new(
        geometry: DramGeometry,
        window: BiasWindow,
        mode: WindowMode,
        total_measurements: u32,
        campaign_id: String,
        mut members: Vec<CellAddress>,
    ) -> Self {
        members.sort_unstable();
        members.dedup();
        FilterSet {
            geometry,
            window,
            mode,
            total_measurements,
            campaign_id,
            config_digest: None,
            members,
        }
    }

    pub fn members(&self) -> &[CellAddress] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members grouped by page as `((bank, row), columns)`, in page order.
    pub fn pages(&self) -> Vec<((u32, u32), Vec<u32>)> {
        let mut out: Vec<((u32, u32), Vec<u32>)> = Vec::new();
        for m in &self.members {
            match out.last_mut() {
                Some((page, cols)) if *page == (m.bank, m.row) => cols.push(m.col),
                _ => out.push(((m.bank, m.row), vec![m.col])),
            }
        }
        out
    }

    pub fn page_stats(&self) -> PageStats {
        let pages = self.pages();
        let occupied = pages.len();
        PageStats {
            occupied_pages: occupied as u64,
            total_pages: self.geometry.page_count(),
            avg_bits_per_occupied_page: if occupied == 0 {
                0.0
            } else {
                self.members.len() as f64 / occupied as f64
            },
            occupied_fraction: occupied as f64 / self.geometry.page_count() as f64,
        }
    }

    pub fn to_db_string(&self) -> String {
        let g = self.geometry;
        let mut s = String::with_capacity(32 + self.members.len() * 16);
        let _ = writeln!(s, "# {ENROLLMENT_TAG}");
        let _ = writeln!(
            s,
            "# geometry {} {} {}",
            g.banks, g.rows_per_bank, g.cols_per_row
        );
        let _ = writeln!(
            s,
            "# window {} {} {}",
            self.window.lo, self.window.hi, self.mode
        );
        let _ = writeln!(s, "# total_measurements {}", self.total_measurements);
        let _ = writeln!(s, "# campaign {}", self.campaign_id);
        if let Some(d) = &self.config_digest {
            let _ = writeln!(s, "# config {d}");
        }
        for m in &self.members {
            let _ = writeln!(s, "{},{},{}", m.bank, m.row, m.col);
        }
        s
    }

    pub fn parse_db(text: &str) -> Result<Self, FilterError> {
        let err = |line: usize, msg: &str| FilterError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == format!("# {ENROLLMENT_TAG}") => {}
            _ => return Err(err(1, "missing format tag")),
        }
        let mut geometry = None;
        let mut window = None;
        let mut mode = WindowMode::Pooled;
        let mut total = None;
        let mut campaign = String::new();
        let mut config = None;
        let mut members = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                let key = parts.next().unwrap_or("");
                let vals: Vec<&str> = parts.collect();
                match key {
                    "geometry" => {
                        let v =
                            parse_list::<u32>(&vals, 3).ok_or_else(|| err(n, "bad geometry"))?;
                        let g = DramGeometry::new(v[0], v[1], v[2])
                            .map_err(|e| err(n, &e.to_string()))?;
                        geometry = Some(g);
                    }
                    "window" => {
                        if vals.len() < 2 {
                            return Err(err(n, "bad window"));
                        }
                        let v =
                            parse_list::<f64>(&vals[..2], 2).ok_or_else(|| err(n, "bad window"))?;
                        window =
                            Some(BiasWindow::new(v[0], v[1]).map_err(|e| err(n, &e.to_string()))?);
                        if let Some(m) = vals.get(2) {
                            mode = m.parse().map_err(|e: String| err(n, &e))?;
                        }
                    }
                    "total_measurements" => {
                        total = Some(
                            parse_list::<u32>(&vals, 1).ok_or_else(|| err(n, "bad total"))?[0],
                        );
                    }
                    "campaign" => campaign = vals.first().unwrap_or(&"").to_string(),
                    "config" => config = vals.first().map(|s| s.to_string()),
                    _ => {}
                }
                continue;
            }
            let v = line
                .split(',')
                .map(|x| x.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| err(n, "expected bank,row,col"))?;
            if v.len() != 3 {
                return Err(err(n, "expected bank,row,col"));
            }
            let addr = CellAddress::new(v[0], v[1], v[2]);
            let g = geometry.ok_or_else(|| err(n, "record before geometry header"))?;
            if !g.contains(addr) {
                return Err(err(n, &format!("{addr} outside {g}")));
            }
            if let Some(&last) = members.last() {
                if addr <= last {
                    return Err(err(n, "records are not strictly increasing"));
                }
            }
            members.push(addr);
        }
        let geometry = geometry.ok_or_else(|| err(0, "missing geometry header"))?;
        let window = window.ok_or_else(|| err(0, "missing window header"))?;
        let total = total.ok_or_else(|| err(0, "missing total_measurements header"))?;
        let mut set = FilterSet::new(geometry, window, mode, total, campaign, members);
        set.config_digest = config;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FilterError> {
        fs::write(path, self.to_db_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        Self::parse_db(&fs::read_to_string(path)?)
    }
}

fn parse_list<T: std::str::FromStr>(vals: &[&str], n: usize) -> Option<Vec<T>> {
    if vals.len() != n {
        return None;
    }
    vals.iter().map(|v| v.parse().ok()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageStats {
    pub occupied_pages: u64,
    pub total_pages: u64,
    /// Averaged over occupied pages only.
    pub avg_bits_per_occupied_page: f64,
    pub occupied_fraction: f64,
}

/// Keeps the noisy cells whose ones fraction lies in `window`.
pub fn select_unbiased(
    map: &CharacterizationMap,
    window: BiasWindow,
    mode: WindowMode,
) -> Result<FilterSet, FilterError> {
    window.validate()?;
    let geometry = map.geometry();
    let total = map.total_measurements();
    let repeats: Vec<u32> = map.patterns().iter().map(|&(_, r)| r).collect();
    let members = map
        .noisy_indices()
        .iter()
        .enumerate()
        .filter(|&(k, _)| match mode {
            WindowMode::Pooled => window.contains(map.noisy_total_ones(k), total),
            WindowMode::PerPattern => map
                .noisy_pattern_ones(k)
                .iter()
                .zip(&repeats)
                .all(|(&c, &r)| window.contains(c as u32, r)),
        })
        .map(|(_, &i)| geometry.address_of(i))
        .collect();
    let mut set = FilterSet::new(
        geometry,
        window,
        mode,
        total,
        map.campaign_id().to_string(),
        members,
    );
    set.config_digest = map.config_digest().map(str::to_string);
    Ok(set)
}
