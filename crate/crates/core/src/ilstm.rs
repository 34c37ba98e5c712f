//! Per-link spatio-temporal speed accumulation.
//!
//! An [`Ilstm`] collects raw speed registrations of a single link into a
//! `7 days x 24 hours x S` grid, where `S = 100 / percent` positional slots
//! split the link by the fraction of its length already travelled. Finalizing
//! yields a [`SpeedGrid`] of `(count, mean)` cells.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{position_percent, DomainError, DAYS, HOURS};

pub const DEFAULT_PERCENT: u32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IlstmError {
    #[error("percent {0} does not divide 100")]
    InvalidPercent(u32),
    #[error("{dists} distances but {speeds} speeds")]
    LengthMismatch { dists: usize, speeds: usize },
    #[error("day {day} / hour {hour} out of range")]
    TimeOutOfRange { day: u8, hour: u8 },
    #[error(transparent)]
    Position(#[from] DomainError),
    #[error("grid has {got} cells, expected {expected}")]
    CellCount { got: usize, expected: usize },
    #[error("cell {0}: mean must be present exactly when count > 0, and non-negative")]
    InconsistentCell(usize),
}

/// Number of slots for a subdivision percentage.
pub fn slot_count(percent: u32) -> Result<usize, IlstmError> {
    if percent == 0 || percent > 100 || 100 % percent != 0 {
        return Err(IlstmError::InvalidPercent(percent));
    }
    Ok((100 / percent) as usize)
}

/// Slot holding a position given in percent. The final slot is closed on the
/// right so that the link end falls in slot `S - 1`.
pub fn slot_of(link_percent: f64, percent: u32) -> usize {
    let slots = (100 / percent) as usize;
    let raw = (link_percent / percent as f64).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(slots - 1)
    }
}

#[inline]
fn flat_index(slots: usize, day: usize, hour: usize, slot: usize) -> usize {
    (day * HOURS + hour) * slots + slot
}

/// Raw accumulation grid. A cell's count is the length of its speed list.
#[derive(Debug, Clone, PartialEq)]
pub struct Ilstm {
    percent: u32,
    slots: usize,
    cells: Vec<Vec<f64>>,
}

impl Ilstm {
    pub fn new(percent: u32) -> Result<Self, IlstmError> {
        let slots = slot_count(percent)?;
        Ok(Self {
            percent,
            slots,
            cells: vec![Vec::new(); DAYS * HOURS * slots],
        })
    }

    pub fn percent(&self) -> u32 {
        self.percent
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn count(&self, day: usize, hour: usize, slot: usize) -> usize {
        self.cells[flat_index(self.slots, day, hour, slot)].len()
    }

    pub fn speeds(&self, day: usize, hour: usize, slot: usize) -> &[f64] {
        &self.cells[flat_index(self.slots, day, hour, slot)]
    }

    pub fn total_count(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// Record registrations made on one link at one `(day, hour)`. Inputs are
    /// checked up front; on error the grid is left untouched.
    pub fn fill(
        &mut self,
        day: u8,
        hour: u8,
        dists: &[f64],
        speeds: &[f64],
        link_length: f64,
    ) -> Result<(), IlstmError> {
        if dists.len() != speeds.len() {
            return Err(IlstmError::LengthMismatch {
                dists: dists.len(),
                speeds: speeds.len(),
            });
        }
        if day as usize >= DAYS || hour as usize >= HOURS {
            return Err(IlstmError::TimeOutOfRange { day, hour });
        }
        let slots = dists
            .iter()
            .map(|&d| position_percent(d, link_length).map(|p| slot_of(p, self.percent)))
            .collect::<Result<Vec<_>, _>>()?;
        for (slot, &speed) in slots.into_iter().zip(speeds) {
            let idx = flat_index(self.slots, day as usize, hour as usize, slot);
            self.cells[idx].push(speed);
        }
        Ok(())
    }

    pub fn finalize(&self) -> SpeedGrid {
        let cells = self
            .cells
            .iter()
            .map(|speeds| {
                if speeds.is_empty() {
                    GridCell::EMPTY
                } else {
                    // Summing in sorted order makes the mean independent of fill order.
                    let mut sorted = speeds.clone();
                    sorted.sort_by(f64::total_cmp);
                    let sum: f64 = sorted.iter().sum();
                    GridCell {
                        count: speeds.len() as u64,
                        mean: Some(sum / speeds.len() as f64),
                    }
                }
            })
            .collect();
        SpeedGrid {
            percent: self.percent,
            slots: self.slots,
            cells,
        }
    }
}

/// `(count, mean speed)`; the mean is absent exactly when the count is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u64, Option<f64>)", into = "(u64, Option<f64>)")]
pub struct GridCell {
    pub count: u64,
    pub mean: Option<f64>,
}

impl GridCell {
    pub const EMPTY: GridCell = GridCell {
        count: 0,
        mean: None,
    };

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl From<(u64, Option<f64>)> for GridCell {
    fn from((count, mean): (u64, Option<f64>)) -> Self {
        Self { count, mean }
    }
}

impl From<GridCell> for (u64, Option<f64>) {
    fn from(c: GridCell) -> Self {
        (c.count, c.mean)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpeedGridRepr {
    percent: u32,
    cells: Vec<GridCell>,
}

/// Finalized grid. Serialized as `{percent, cells}` with cells flattened in
/// day-major, then hour, then slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpeedGridRepr", into = "SpeedGridRepr")]
pub struct SpeedGrid {
    percent: u32,
    slots: usize,
    cells: Vec<GridCell>,
}

impl TryFrom<SpeedGridRepr> for SpeedGrid {
    type Error = IlstmError;

    fn try_from(r: SpeedGridRepr) -> Result<Self, Self::Error> {
        Self::from_cells(r.percent, r.cells)
    }
}

impl From<SpeedGrid> for SpeedGridRepr {
    fn from(g: SpeedGrid) -> Self {
        SpeedGridRepr {
            percent: g.percent,
            cells: g.cells,
        }
    }
}

impl SpeedGrid {
    pub fn empty(percent: u32) -> Result<Self, IlstmError> {
        let slots = slot_count(percent)?;
        Ok(Self {
            percent,
            slots,
            cells: vec![GridCell::EMPTY; DAYS * HOURS * slots],
        })
    }

    pub fn from_cells(percent: u32, cells: Vec<GridCell>) -> Result<Self, IlstmError> {
        let slots = slot_count(percent)?;
        let expected = DAYS * HOURS * slots;
        if cells.len() != expected {
            return Err(IlstmError::CellCount {
                got: cells.len(),
                expected,
            });
        }
        let consistent = |c: &GridCell| match c.mean {
            None => c.count == 0,
            Some(m) => c.count > 0 && m.is_finite() && m >= 0.0,
        };
        if let Some(i) = cells.iter().position(|c| !consistent(c)) {
            return Err(IlstmError::InconsistentCell(i));
        }
        Ok(Self {
            percent,
            slots,
            cells,
        })
    }

    pub fn percent(&self) -> u32 {
        self.percent
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn cell(&self, day: usize, hour: usize, slot: usize) -> GridCell {
        self.cells[flat_index(self.slots, day, hour, slot)]
    }

    #[cfg(test)]
    pub(crate) fn cell_mut(&mut self, day: usize, hour: usize, slot: usize) -> &mut GridCell {
        &mut self.cells[flat_index(self.slots, day, hour, slot)]
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [GridCell] {
        &mut self.cells
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// Count-weighted mean over every non-empty cell.
    pub fn overall_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .cells
            .iter()
            .filter_map(|c| c.mean.map(|m| (m * c.count as f64, c.count)))
            .fold((0.0, 0u64), |(s, n), (x, c)| (s + x, n + c));
        (n > 0).then(|| sum / n as f64)
    }
}
