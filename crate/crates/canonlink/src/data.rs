//! Aggregated trial data: covariate stratum x arm cells with event and
//! trial counts, CSV ingestion, and expansion to individual-level rows.

use std::fmt::Write as _;

use thiserror::Error;

/// Invariant violation at the level of a single cell.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CellError {
    #[error("events ({events}) exceed trials ({trials})")]
    EventsExceedTrials { events: u64, trials: u64 },
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("covariate and arm indicators must be 0 or 1 (got x={x}, z={z})")]
    NonBinaryIndicator { x: u64, z: u64 },
}

/// Error building or parsing a [`CellTable`]. Row numbers are 1-based
/// positions in the CSV body (or in the cell list for programmatic input).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("malformed header: expected `x,z,events,trials`, got `{0}`")]
    MalformedHeader(String),
    #[error("row {row}: expected 4 comma-separated fields, got {count}")]
    WrongFieldCount { row: usize, count: usize },
    #[error("row {row}: field `{field}` is not a nonnegative integer: `{value}`")]
    NonIntegerField {
        row: usize,
        field: &'static str,
        value: String,
    },
    #[error("row {row}: {source}")]
    InvalidCell { row: usize, source: CellError },
    #[error("row {row}: duplicate cell for (x={x}, z={z})")]
    DuplicateCell { row: usize, x: u8, z: u8 },
    #[error("no cells: the table body is empty")]
    NoCells,
    #[error("missing arm: no cell has z={arm}")]
    MissingArm { arm: u8 },
}

/// One covariate-stratum-by-arm cell: `events` successes out of `trials`
/// individuals with covariate level `x` in arm `z` (1 = experimental).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    x: u8,
    z: u8,
    events: u64,
    trials: u64,
}

/// One individual: covariate level, arm, and binary outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndividualRow {
    pub x: u8,
    pub z: u8,
    pub y: u8,
}

impl Cell {
    pub fn new(x: u64, z: u64, events: u64, trials: u64) -> Result<Self, CellError> {
        if x > 1 || z > 1 {
            return Err(CellError::NonBinaryIndicator { x, z });
        }
        if trials == 0 {
            return Err(CellError::ZeroTrials);
        }
        if events > trials {
            return Err(CellError::EventsExceedTrials { events, trials });
        }
        Ok(Cell {
            x: x as u8,
            z: z as u8,
            events,
            trials,
        })
    }

    pub fn x(&self) -> u8 {
        self.x
    }

    pub fn z(&self) -> u8 {
        self.z
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Observed event proportion.
    pub fn proportion(&self) -> f64 {
        self.events as f64 / self.trials as f64
    }

    /// Individual-level rows for this cell: `events` rows with `y = 1`
    /// followed by `trials - events` rows with `y = 0`.
    pub fn rows(&self) -> impl Iterator<Item = IndividualRow> + '_ {
        let (x, z) = (self.x, self.z);
        (0..self.trials).map(move |i| IndividualRow {
            x,
            z,
            y: u8::from(i < self.events),
        })
    }
}

/// Aggregated trial data: an ordered list of cells, unique on `(x, z)`,
/// with at least one cell in each arm. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellTable {
    cells: Vec<Cell>,
}

impl CellTable {
    pub fn new(cells: Vec<Cell>) -> Result<Self, DataError> {
        if cells.is_empty() {
            return Err(DataError::NoCells);
        }
        for (i, cell) in cells.iter().enumerate() {
            if cells[..i].iter().any(|c| c.x == cell.x && c.z == cell.z) {
                return Err(DataError::DuplicateCell {
                    row: i + 1,
                    x: cell.x,
                    z: cell.z,
                });
            }
        }
        for arm in [0u8, 1u8] {
            if !cells.iter().any(|c| c.z == arm) {
                return Err(DataError::MissingArm { arm });
            }
        }
        Ok(CellTable { cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn total_trials(&self) -> u64 {
        self.cells.iter().map(|c| c.trials).sum()
    }

    pub fn total_events(&self) -> u64 {
        self.cells.iter().map(|c| c.events).sum()
    }

    pub fn arm_trials(&self, z: u8) -> u64 {
        self.cells
            .iter()
            .filter(|c| c.z == z)
            .map(|c| c.trials)
            .sum()
    }

    pub fn arm_events(&self, z: u8) -> u64 {
        self.cells
            .iter()
            .filter(|c| c.z == z)
            .map(|c| c.events)
            .sum()
    }

    /// Expands the table into one row per individual, preserving cell order.
    pub fn expand_to_rows(&self) -> Vec<IndividualRow> {
        self.cells.iter().flat_map(|c| c.rows()).collect()
    }
}

/// Trial counts per covariate level within each arm, and whether those
/// counts are identical across arms for every level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceReport {
    pub balanced: bool,
    /// Sorted by covariate level.
    pub levels: Vec<LevelBalance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelBalance {
    pub x: u8,
    pub control_trials: u64,
    pub experimental_trials: u64,
}

/// Reports whether every covariate level has identical trial counts in the
/// two arms. Independent of cell ordering.
pub fn check_balance(table: &CellTable) -> BalanceReport {
    let mut levels: Vec<LevelBalance> = Vec::new();
    for cell in table.cells() {
        let entry = match levels.iter_mut().find(|l| l.x == cell.x()) {
            Some(l) => l,
            None => {
                levels.push(LevelBalance {
                    x: cell.x(),
                    control_trials: 0,
                    experimental_trials: 0,
                });
                levels.last_mut().unwrap()
            }
        };
        if cell.z() == 1 {
            entry.experimental_trials += cell.trials();
        } else {
            entry.control_trials += cell.trials();
        }
    }
    levels.sort_by_key(|l| l.x);
    let balanced = levels
        .iter()
        .all(|l| l.control_trials == l.experimental_trials);
    BalanceReport { balanced, levels }
}

const HEADER: &str = "x,z,events,trials";

/// Parses the `x,z,events,trials` cell CSV. Accepts LF or CRLF line
/// endings; the header must match exactly.
pub fn parse_cell_csv(text: &str) -> Result<CellTable, DataError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != HEADER {
        return Err(DataError::MalformedHeader(header.to_string()));
    }
    let mut cells = Vec::new();
    let mut row = 0usize;
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::WrongFieldCount {
                row,
                count: fields.len(),
            });
        }
        let mut parsed = [0u64; 4];
        for (i, name) in ["x", "z", "events", "trials"].iter().enumerate() {
            parsed[i] =
                fields[i]
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| DataError::NonIntegerField {
                        row,
                        field: name,
                        value: fields[i].to_string(),
                    })?;
        }
        let cell = Cell::new(parsed[0], parsed[1], parsed[2], parsed[3])
            .map_err(|source| DataError::InvalidCell { row, source })?;
        if cells
            .iter()
            .any(|c: &Cell| c.x() == cell.x() && c.z() == cell.z())
        {
            return Err(DataError::DuplicateCell {
                row,
                x: cell.x(),
                z: cell.z(),
            });
        }
        cells.push(cell);
    }
    CellTable::new(cells)
}

/// Inverse of [`parse_cell_csv`]: emits the header plus one LF-terminated
/// line per cell in table order.
pub fn render_cell_csv(table: &CellTable) -> String {
    let mut out = String::from(HEADER);
    for cell in table.cells() {
        let _ = write!(
            out,
            "\n{},{},{},{}",
            cell.x(),
            cell.z(),
            cell.events(),
            cell.trials()
        );
    }
    out.push('\n');
    out
}
