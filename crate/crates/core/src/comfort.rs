//! Perceived-pressure maps, QUEST product items and perceived force direction.
//!
//! Pressure marks are drawn directly on a canonical raster template, so no
//! registration step is needed. Cells are linear indices `row * width + col`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::session::ExoVersion;

#[derive(Debug, thiserror::Error)]
pub enum ComfortError {
    #[error("unknown region '{0}'")]
    UnknownRegion(String),
    #[error("cell {cell} outside the {width}x{height} template")]
    CellOutOfBounds { cell: u32, width: u32, height: u32 },
    #[error("mark cells must be strictly ascending")]
    NonCanonicalCells,
    #[error("intensity {0} not in 1..=3")]
    BadIntensity(u8),
    #[error("template masks overlap at cell {0}")]
    OverlappingMasks(u32),
    #[error("template region {0} is empty")]
    EmptyRegion(&'static str),
    #[error("no participants")]
    EmptySet,
    #[error("QUEST item {item} = {value} outside [0, 5]")]
    QuestOutOfRange { item: &'static str, value: f64 },
    #[error("duplicate response from participant '{participant}' for {version:?}")]
    DuplicateResponse { participant: String, version: ExoVersion },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ----------------------------------------------------------------------------
// template

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    UpperArm,
    Armpit,
    Flank,
    Torso,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::UpperArm, Region::Armpit, Region::Flank, Region::Torso];

    pub fn name(self) -> &'static str {
        match self {
            Region::UpperArm => "upper_arm",
            Region::Armpit => "armpit",
            Region::Flank => "flank",
            Region::Torso => "torso",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = ComfortError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| ComfortError::UnknownRegion(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsoTemplate {
    pub version: String,
    pub width: u32,
    pub height: u32,
    /// Sorted cell lists per region.
    pub regions: BTreeMap<Region, Vec<u32>>,
}

pub const TEMPLATE_VERSION: &str = "torso-grid-1";

/// Cells of the half-open rectangle `[c0, c1) × [r0, r1)`.
pub fn rect_cells(width: u32, (c0, c1): (u32, u32), (r0, r1): (u32, u32)) -> Vec<u32> {
    (r0..r1).flat_map(|r| (c0..c1).map(move |c| r * width + c)).collect()
}

impl TorsoTemplate {
    /// 200 columns by 300 rows, right-side view.
    pub fn canonical() -> Self {
        let (w, h) = (200, 300);
        let mut regions = BTreeMap::new();
        regions.insert(Region::UpperArm, rect_cells(w, (150, 200), (20, 140)));
        regions.insert(Region::Armpit, rect_cells(w, (110, 150), (60, 100)));
        regions.insert(Region::Flank, rect_cells(w, (110, 150), (100, 220)));
        regions.insert(Region::Torso, rect_cells(w, (20, 110), (20, 260)));
        TorsoTemplate { version: TEMPLATE_VERSION.into(), width: w, height: h, regions }
    }

    pub fn n_cells(&self) -> u32 {
        self.width * self.height
    }

    pub fn cell(&self, row: u32, col: u32) -> u32 {
        row * self.width + col
    }

    pub fn mask(&self, region: Region) -> &[u32] {
        self.regions.get(&region).map_or(&[], |v| v.as_slice())
    }

    pub fn region_by_name(&self, name: &str) -> Result<&[u32], ComfortError> {
        Ok(self.mask(name.parse()?))
    }

    pub fn validate(&self) -> Result<(), ComfortError> {
        let mut seen = BTreeSet::new();
        for r in Region::ALL {
            let m = self.mask(r);
            if m.is_empty() {
                return Err(ComfortError::EmptyRegion(r.name()));
            }
            for &c in m {
                self.check_cell(c)?;
                if !seen.insert(c) {
                    return Err(ComfortError::OverlappingMasks(c));
                }
            }
        }
        Ok(())
    }

    fn check_cell(&self, c: u32) -> Result<(), ComfortError> {
        if c >= self.n_cells() {
            return Err(ComfortError::CellOutOfBounds { cell: c, width: self.width, height: self.height });
        }
        Ok(())
    }
}

// ----------------------------------------------------------------------------
// marks and scores

/// 1 light pressure, 2 uncomfortable, 3 painful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Intensity {
    Light = 1,
    Uncomfortable = 2,
    Painful = 3,
}

impl TryFrom<u8> for Intensity {
    type Error = ComfortError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Intensity::Light),
            2 => Ok(Intensity::Uncomfortable),
            3 => Ok(Intensity::Painful),
            other => Err(ComfortError::BadIntensity(other)),
        }
    }
}

impl From<Intensity> for u8 {
    fn from(i: Intensity) -> u8 {
        i as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PressureMark {
    pub cells: Vec<u32>,
    pub intensity: Intensity,
}

/// Body of a `comfort_submit` message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComfortSubmission {
    pub participant: String,
    pub version: ExoVersion,
    pub marks: Vec<PressureMark>,
}

impl ComfortSubmission {
    /// Cells must be in bounds and strictly ascending within each mark.
    pub fn validate(&self, t: &TorsoTemplate) -> Result<(), ComfortError> {
        for m in &self.marks {
            if m.cells.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ComfortError::NonCanonicalCells);
            }
            for &c in &m.cells {
                t.check_cell(c)?;
            }
        }
        Ok(())
    }
}

/// Per-cell maximum intensity (0 = unmarked).
pub fn rasterize(marks: &[PressureMark], t: &TorsoTemplate) -> Result<Vec<u8>, ComfortError> {
    let mut grid = vec![0u8; t.n_cells() as usize];
    for m in marks {
        for &c in &m.cells {
            t.check_cell(c)?;
            let g = &mut grid[c as usize];
            *g = (*g).max(m.intensity as u8);
        }
    }
    Ok(grid)
}

/// Area-normalized weighted score of one region, in [0, 3].
pub fn score_region(marks: &[PressureMark], t: &TorsoTemplate, region: Region) -> Result<f64, ComfortError> {
    let grid = rasterize(marks, t)?;
    Ok(score_grid(&grid, t.mask(region)))
}

fn score_grid(grid: &[u8], mask: &[u32]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let sum: u64 = mask.iter().map(|&c| grid[c as usize] as u64).sum();
    sum as f64 / mask.len() as f64
}

pub type RegionScores = BTreeMap<Region, f64>;

pub fn score_all(marks: &[PressureMark], t: &TorsoTemplate) -> Result<RegionScores, ComfortError> {
    let grid = rasterize(marks, t)?;
    Ok(Region::ALL.iter().map(|&r| (r, score_grid(&grid, t.mask(r)))).collect())
}

pub fn aggregate_group(per_participant: &[RegionScores]) -> Result<RegionScores, ComfortError> {
    if per_participant.is_empty() {
        return Err(ComfortError::EmptySet);
    }
    let n = per_participant.len() as f64;
    Ok(Region::ALL
        .iter()
        .map(|&r| (r, per_participant.iter().map(|s| s.get(&r).copied().unwrap_or(0.0)).sum::<f64>() / n))
        .collect())
}

/// `100·(b − a)/a`, or `None` when the baseline is zero.
pub fn relative_change_pct(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| 100.0 * (b - a) / a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionComparison {
    pub region: Region,
    pub v1_mean: f64,
    pub v2_mean: f64,
    pub rel_change_pct: Option<f64>,
}

pub fn compare_maps(v1: &RegionScores, v2: &RegionScores) -> Vec<RegionComparison> {
    Region::ALL
        .iter()
        .map(|&r| {
            let (a, b) = (v1.get(&r).copied().unwrap_or(0.0), v2.get(&r).copied().unwrap_or(0.0));
            RegionComparison { region: r, v1_mean: a, v2_mean: b, rel_change_pct: relative_change_pct(a, b) }
        })
        .collect()
}

/// `region,version,mean_score,rel_change_pct`; the change is reported on the v2 row.
pub fn write_comfort_csv<W: Write>(w: W, rows: &[RegionComparison]) -> Result<(), ComfortError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["region", "version", "mean_score", "rel_change_pct"])?;
    for r in rows {
        wr.write_record([r.region.name(), "v1", &format!("{:.4}", r.v1_mean), ""])?;
        let rel = r.rel_change_pct.map_or(String::new(), |v| format!("{v:.1}"));
        wr.write_record([r.region.name(), "v2", &format!("{:.4}", r.v2_mean), &rel])?;
    }
    wr.flush()?;
    Ok(())
}

// ----------------------------------------------------------------------------
// QUEST

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestItem {
    Size,
    Weight,
    Adjustability,
    Safety,
    Durability,
    EaseOfUse,
    Comfort,
    Effectiveness,
}

impl QuestItem {
    pub const ALL: [QuestItem; 8] = [
        QuestItem::Size,
        QuestItem::Weight,
        QuestItem::Adjustability,
        QuestItem::Safety,
        QuestItem::Durability,
        QuestItem::EaseOfUse,
        QuestItem::Comfort,
        QuestItem::Effectiveness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestItem::Size => "size",
            QuestItem::Weight => "weight",
            QuestItem::Adjustability => "adjustability",
            QuestItem::Safety => "safety",
            QuestItem::Durability => "durability",
            QuestItem::EaseOfUse => "ease_of_use",
            QuestItem::Comfort => "comfort",
            QuestItem::Effectiveness => "effectiveness",
        }
    }
}

/// Eight product items on the 0 to 5 satisfaction scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestScores {
    pub size: f64,
    pub weight: f64,
    pub adjustability: f64,
    pub safety: f64,
    pub durability: f64,
    pub ease_of_use: f64,
    pub comfort: f64,
    pub effectiveness: f64,
}

impl QuestScores {
    pub fn uniform(v: f64) -> Self {
        QuestScores {
            size: v,
            weight: v,
            adjustability: v,
            safety: v,
            durability: v,
            ease_of_use: v,
            comfort: v,
            effectiveness: v,
        }
    }

    pub fn get(&self, item: QuestItem) -> f64 {
        match item {
            QuestItem::Size => self.size,
            QuestItem::Weight => self.weight,
            QuestItem::Adjustability => self.adjustability,
            QuestItem::Safety => self.safety,
            QuestItem::Durability => self.durability,
            QuestItem::EaseOfUse => self.ease_of_use,
            QuestItem::Comfort => self.comfort,
            QuestItem::Effectiveness => self.effectiveness,
        }
    }

    pub fn set(&mut self, item: QuestItem, v: f64) {
        let slot = match item {
            QuestItem::Size => &mut self.size,
            QuestItem::Weight => &mut self.weight,
            QuestItem::Adjustability => &mut self.adjustability,
            QuestItem::Safety => &mut self.safety,
            QuestItem::Durability => &mut self.durability,
            QuestItem::EaseOfUse => &mut self.ease_of_use,
            QuestItem::Comfort => &mut self.comfort,
            QuestItem::Effectiveness => &mut self.effectiveness,
        };
        *slot = v;
    }

    pub fn validate(&self) -> Result<(), ComfortError> {
        for it in QuestItem::ALL {
            let v = self.get(it);
            if !(0.0..=5.0).contains(&v) {
                return Err(ComfortError::QuestOutOfRange { item: it.name(), value: v });
            }
        }
        Ok(())
    }
}

/// Body of a `quest_submit` message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestForm {
    pub participant: String,
    pub version: ExoVersion,
    pub scores: QuestScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestItemDelta {
    pub item: QuestItem,
    pub v1_mean: f64,
    pub v1_sem: f64,
    pub v2_mean: f64,
    pub v2_sem: f64,
    pub abs_delta: f64,
    /// Relative change of the item means; `None` when the v1 mean is zero.
    pub rel_change_pct: Option<f64>,
    /// Mean ± SEM of per-participant relative changes (participants with a nonzero v1 score).
    pub participant_rel_mean: Option<f64>,
    pub participant_rel_sem: Option<f64>,
}

pub fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Per-item v1 → v2 variation. Forms are paired by participant where both exist.
pub fn quest_delta(v1: &[QuestScores], v2: &[QuestScores]) -> Result<Vec<QuestItemDelta>, ComfortError> {
    if v1.is_empty() || v2.is_empty() {
        return Err(ComfortError::EmptySet);
    }
    for f in v1.iter().chain(v2) {
        f.validate()?;
    }
    Ok(QuestItem::ALL
        .iter()
        .map(|&it| {
            let a: Vec<f64> = v1.iter().map(|f| f.get(it)).collect();
            let b: Vec<f64> = v2.iter().map(|f| f.get(it)).collect();
            let (am, asem) = mean_sem(&a);
            let (bm, bsem) = mean_sem(&b);
            let per: Vec<f64> =
                a.iter().zip(&b).filter_map(|(x, y)| relative_change_pct(*x, *y)).collect();
            let (pm, psem) = if per.is_empty() { (None, None) } else {
                let (m, s) = mean_sem(&per);
                (Some(m), Some(s))
            };
            QuestItemDelta {
                item: it,
                v1_mean: am,
                v1_sem: asem,
                v2_mean: bm,
                v2_sem: bsem,
                abs_delta: bm - am,
                rel_change_pct: relative_change_pct(am, bm),
                participant_rel_mean: pm,
                participant_rel_sem: psem,
            }
        })
        .collect())
}

pub fn write_quest_csv<W: Write>(w: W, rows: &[QuestItemDelta]) -> Result<(), ComfortError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["item", "v1_mean", "v1_sem", "v2_mean", "v2_sem", "abs_delta", "rel_change_pct"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.1}"));
    for r in rows {
        wr.write_record(&[
            r.item.name().to_string(),
            format!("{:.3}", r.v1_mean),
            format!("{:.3}", r.v1_sem),
            format!("{:.3}", r.v2_mean),
            format!("{:.3}", r.v2_sem),
            format!("{:.3}", r.abs_delta),
            opt(r.rel_change_pct),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

// ----------------------------------------------------------------------------
// perceived direction

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Front,
    Side,
    Oblique,
}

/// Body of a `direction_submit` message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionResponse {
    pub participant: String,
    pub version: ExoVersion,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DirectionCounts {
    pub front: u32,
    pub side: u32,
    pub oblique: u32,
}

pub fn direction_tally(responses: &[DirectionResponse]) -> Result<BTreeMap<ExoVersion, DirectionCounts>, ComfortError> {
    let mut seen = BTreeSet::new();
    let mut out: BTreeMap<ExoVersion, DirectionCounts> = BTreeMap::new();
    for r in responses {
        if !seen.insert((r.participant.as_str(), r.version)) {
            return Err(ComfortError::DuplicateResponse { participant: r.participant.clone(), version: r.version });
        }
        let c = out.entry(r.version).or_default();
        match r.direction {
            Direction::Front => c.front += 1,
            Direction::Side => c.side += 1,
            Direction::Oblique => c.oblique += 1,
        }
    }
    Ok(out)
}
