//! Grid maps, scenario files and single-agent distance fields.
//!
//! Maps use the community octile text format but movement is 4-connected
//! plus wait. Cells are addressed row-major, row 0 being the first map line.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

/// A cell index into a [`GridMap`], `row * width + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Cell(pub u32);

impl Cell {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: expected row of width {expected}, found {found}")]
    RowLength { line: usize, expected: usize, found: usize },
    #[error("line {line}: unknown map character {ch:?}")]
    UnknownChar { line: usize, ch: char },
    #[error("scenario row {row}: {reason}")]
    Scenario { row: usize, reason: String },
    #[error("requested {requested} agents but the scenario only has {available} rows")]
    NotEnoughAgents { requested: usize, available: usize },
}

/// Static obstacle grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    blocked: Vec<bool>,
}

impl GridMap {
    /// Builds a map from a row-major blocked mask.
    ///
    /// Panics if the mask length is not `width * height` or a dimension is zero.
    pub fn new(width: usize, height: usize, blocked: Vec<bool>) -> Self {
        assert!(width > 0 && height > 0, "map dimensions must be positive");
        assert_eq!(blocked.len(), width * height, "blocked mask size mismatch");
        Self { width, height, blocked }
    }

    pub fn open(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    /// Builds a map from rows of `.` (open) and `@` (blocked) characters.
    /// Any of the octile blocking symbols is accepted.
    pub fn from_rows(rows: &[&str]) -> Result<Self, ParseError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if width == 0 {
            return Err(ParseError::Malformed { line: 1, reason: "empty map".into() });
        }
        let mut blocked = Vec::with_capacity(width * height);
        for (i, row) in rows.iter().enumerate() {
            parse_row(row, i + 1, width, &mut blocked)?;
        }
        Ok(Self::new(width, height, blocked))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        debug_assert!(row < self.height && col < self.width);
        Cell((row * self.width + col) as u32)
    }

    pub fn try_cell(&self, row: usize, col: usize) -> Option<Cell> {
        (row < self.height && col < self.width).then(|| self.cell(row, col))
    }

    /// `(row, col)` of a cell.
    pub fn coords(&self, cell: Cell) -> (usize, usize) {
        (cell.index() / self.width, cell.index() % self.width)
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[cell.index()]
    }

    pub fn is_passable(&self, cell: Cell) -> bool {
        cell.index() < self.blocked.len() && !self.blocked[cell.index()]
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn passable_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len() as u32).map(Cell).filter(|c| !self.is_blocked(*c))
    }

    /// Wait plus every unblocked cardinal neighbor, in the order
    /// wait, up, down, left, right.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (r, c) = self.coords(cell);
        let up = r.checked_sub(1).map(|r| self.cell(r, c));
        let down = (r + 1 < self.height).then(|| self.cell(r + 1, c));
        let left = c.checked_sub(1).map(|c| self.cell(r, c));
        let right = (c + 1 < self.width).then(|| self.cell(r, c + 1));
        [Some(cell), up, down, left, right]
            .into_iter()
            .flatten()
            .filter(move |n| !self.is_blocked(*n))
    }

    /// Cardinal neighbors only (no wait).
    pub fn moves(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        self.neighbors(cell).skip(1)
    }

    /// True if `to` is `from` or one of its unblocked cardinal neighbors.
    pub fn is_legal_move(&self, from: Cell, to: Cell) -> bool {
        self.is_passable(from) && self.is_passable(to) && self.neighbors(from).any(|n| n == to)
    }

    /// Serializes to the octile text format (`.` open, `@` blocked).
    pub fn to_map_string(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(if self.blocked[r * self.width + c] { '@' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn parse_row(row: &str, line: usize, width: usize, blocked: &mut Vec<bool>) -> Result<(), ParseError> {
    let found = row.chars().count();
    if found != width {
        return Err(ParseError::RowLength { line, expected: width, found });
    }
    for ch in row.chars() {
        blocked.push(match ch {
            '.' | 'G' => false,
            '@' | 'O' | 'T' | 'W' => true,
            _ => return Err(ParseError::UnknownChar { line, ch }),
        });
    }
    Ok(())
}

fn header_value(line: Option<(usize, &str)>, key: &str) -> Result<usize, ParseError> {
    let (no, text) = line.ok_or(ParseError::Malformed { line: 0, reason: format!("missing `{key}` header") })?;
    let mut parts = text.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(v), None) if k == key => v.parse().map_err(|_| ParseError::Malformed {
            line: no,
            reason: format!("invalid {key} value {v:?}"),
        }),
        _ => Err(ParseError::Malformed { line: no, reason: format!("expected `{key} <n>`") }),
    }
}

/// Parses an octile `.map` file. LF and CRLF line endings are accepted.
pub fn parse_map(text: &str) -> Result<GridMap, ParseError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, l)) if l.split_whitespace().eq(["type", "octile"]) => {}
        Some((no, _)) => return Err(ParseError::Malformed { line: no, reason: "expected `type octile`".into() }),
        None => return Err(ParseError::Malformed { line: 1, reason: "empty input".into() }),
    }
    let height = header_value(lines.next(), "height")?;
    let width = header_value(lines.next(), "width")?;
    match lines.next() {
        Some((_, "map")) => {}
        Some((no, _)) => return Err(ParseError::Malformed { line: no, reason: "expected `map`".into() }),
        None => return Err(ParseError::Malformed { line: 4, reason: "missing `map` line".into() }),
    }
    if width == 0 || height == 0 {
        return Err(ParseError::Malformed { line: 2, reason: "zero map dimension".into() });
    }

    let mut blocked = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (no, line) in lines {
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(ParseError::Malformed { line: no, reason: "more rows than declared height".into() });
        }
        parse_row(line, no, width, &mut blocked)?;
        rows += 1;
    }
    if rows != height {
        return Err(ParseError::Malformed {
            line: 4 + rows + 1,
            reason: format!("expected {height} rows, found {rows}"),
        });
    }
    Ok(GridMap::new(width, height, blocked))
}

/// One agent's start and goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AgentTask {
    pub agent_id: usize,
    pub start: Cell,
    pub goal: Cell,
}

/// A parsed scenario row, kept for logging alongside the task.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub bucket: u32,
    pub map_name: String,
    pub task: AgentTask,
    /// The file's optimal length column. Octile distances, so only informative.
    pub optimal_length: f64,
}

/// Parses the first `agents` rows of a `.scen` file against `map`.
pub fn parse_scenario(text: &str, map: &GridMap, agents: usize) -> Result<Vec<ScenarioRow>, ParseError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_start().starts_with("version") => {}
        Some((no, _)) => return Err(ParseError::Malformed { line: no, reason: "expected `version` header".into() }),
        None => return Err(ParseError::Malformed { line: 1, reason: "empty scenario".into() }),
    }

    let mut rows = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows.len() == agents {
            break;
        }
        let row = no;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(ParseError::Scenario { row, reason: format!("expected 9 tab-separated fields, found {}", fields.len()) });
        }
        let num = |i: usize| -> Result<usize, ParseError> {
            fields[i].trim().parse().map_err(|_| ParseError::Scenario { row, reason: format!("field {} is not an integer: {:?}", i + 1, fields[i]) })
        };
        let bucket = num(0)? as u32;
        let (w, h) = (num(2)?, num(3)?);
        if w != map.width() || h != map.height() {
            return Err(ParseError::Scenario {
                row,
                reason: format!("scenario size {w}x{h} does not match map {}x{}", map.width(), map.height()),
            });
        }
        let (sc, sr, gc, gr) = (num(4)?, num(5)?, num(6)?, num(7)?);
        let optimal_length = fields[8]
            .trim()
            .parse()
            .map_err(|_| ParseError::Scenario { row, reason: format!("invalid optimal length {:?}", fields[8]) })?;
        let locate = |r: usize, c: usize, what: &str| -> Result<Cell, ParseError> {
            match map.try_cell(r, c) {
                Some(cell) if !map.is_blocked(cell) => Ok(cell),
                Some(_) => Err(ParseError::Scenario { row, reason: format!("{what} ({r}, {c}) is blocked") }),
                None => Err(ParseError::Scenario { row, reason: format!("{what} ({r}, {c}) is out of bounds") }),
            }
        };
        let task = AgentTask { agent_id: rows.len(), start: locate(sr, sc, "start")?, goal: locate(gr, gc, "goal")? };
        rows.push(ScenarioRow { bucket, map_name: fields[1].to_string(), task, optimal_length });
    }
    if rows.len() < agents {
        return Err(ParseError::NotEnoughAgents { requested: agents, available: rows.len() });
    }
    Ok(rows)
}

/// Serializes tasks in the `.scen` format. The optimal length column holds
/// the 4-connected distance.
pub fn write_scenario(map: &GridMap, map_name: &str, tasks: &[AgentTask], fields: &[DistanceField]) -> String {
    let mut out = String::from("version 1\n");
    for (task, field) in tasks.iter().zip(fields) {
        let (sr, sc) = map.coords(task.start);
        let (gr, gc) = map.coords(task.goal);
        let d = field.get(task.start).map_or(-1.0, f64::from);
        out.push_str(&format!(
            "0\t{map_name}\t{}\t{}\t{sc}\t{sr}\t{gc}\t{gr}\t{d:.8}\n",
            map.width(),
            map.height()
        ));
    }
    out
}

/// Exact move counts to one goal cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    goal: Cell,
    dist: Vec<u32>,
}

impl DistanceField {
    pub const UNREACHABLE: u32 = u32::MAX;

    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// Distance to the goal, `None` if unreachable.
    #[inline]
    pub fn get(&self, cell: Cell) -> Option<u32> {
        let d = self.dist[cell.index()];
        (d != Self::UNREACHABLE).then_some(d)
    }

    /// Distance to the goal; unreachable cells read as [`Self::UNREACHABLE`].
    #[inline]
    pub fn raw(&self, cell: Cell) -> u32 {
        self.dist[cell.index()]
    }
}

/// Shortest move counts from every cell to `goal`.
///
/// All moves cost one, so the backward search reduces to a breadth-first
/// sweep from the goal.
pub fn backward_dijkstra(map: &GridMap, goal: Cell) -> DistanceField {
    assert!(map.is_passable(goal), "goal {goal} is blocked");
    let mut dist = vec![DistanceField::UNREACHABLE; map.num_cells()];
    let mut queue = VecDeque::new();
    dist[goal.index()] = 0;
    queue.push_back(goal);
    while let Some(cell) = queue.pop_front() {
        let d = dist[cell.index()] + 1;
        for n in map.moves(cell) {
            if dist[n.index()] == DistanceField::UNREACHABLE {
                dist[n.index()] = d;
                queue.push_back(n);
            }
        }
    }
    DistanceField { goal, dist }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tiny_map() {
        let map = parse_map("type octile\nheight 2\nwidth 2\nmap\n.@\n..\n").unwrap();
        assert_eq!((map.width(), map.height()), (2, 2));
        let blocked: Vec<_> = (0..2)
            .flat_map(|r| (0..2).map(move |c| (r, c)))
            .filter(|&(r, c)| map.is_blocked(map.cell(r, c)))
            .collect();
        assert_eq!(blocked, vec![(0, 1)]);
    }

    #[test]
    fn crlf_and_all_symbols() {
        let map = parse_map("type octile\r\nheight 1\r\nwidth 6\r\nmap\r\n.G@OTW\r\n").unwrap();
        assert_eq!(map.blocked_count(), 4);
    }

    #[test]
    fn row_length_mismatch_names_line() {
        let err = parse_map("type octile\nheight 2\nwidth 3\nmap\n...\n..\n").unwrap_err();
        assert_eq!(err, ParseError::RowLength { line: 6, expected: 3, found: 2 });
    }

    #[test]
    fn bad_header_and_char() {
        assert!(matches!(parse_map("type grid\n"), Err(ParseError::Malformed { line: 1, .. })));
        assert!(matches!(parse_map("type octile\nheight x\n"), Err(ParseError::Malformed { line: 2, .. })));
        assert_eq!(
            parse_map("type octile\nheight 1\nwidth 2\nmap\n.x\n").unwrap_err(),
            ParseError::UnknownChar { line: 5, ch: 'x' }
        );
        assert!(parse_map("type octile\nheight 3\nwidth 1\nmap\n.\n.\n").is_err());
    }

    #[test]
    fn scenario_field_mapping() {
        let map = GridMap::open(32, 32);
        let rows = parse_scenario("version 1\n0\tm.map\t32\t32\t5\t7\t9\t2\t9.0\n", &map, 1).unwrap();
        assert_eq!(rows[0].task.start, map.cell(7, 5));
        assert_eq!(rows[0].task.goal, map.cell(2, 9));
        assert_eq!(rows[0].optimal_length, 9.0);
    }

    #[test]
    fn scenario_errors() {
        let map = GridMap::from_rows(&["..", ".@"]).unwrap();
        let ok = "version 1\n0\tm\t2\t2\t0\t0\t1\t0\t1\n";
        assert!(matches!(parse_scenario(ok, &map, 2), Err(ParseError::NotEnoughAgents { requested: 2, available: 1 })));
        let blocked = "version 1\n0\tm\t2\t2\t0\t0\t1\t1\t1\n";
        assert!(matches!(parse_scenario(blocked, &map, 1), Err(ParseError::Scenario { row: 2, .. })));
        let oob = "version 1\n0\tm\t2\t2\t0\t0\t5\t0\t1\n";
        assert!(matches!(parse_scenario(oob, &map, 1), Err(ParseError::Scenario { row: 2, .. })));
        let size = "version 1\n0\tm\t3\t2\t0\t0\t1\t0\t1\n";
        assert!(matches!(parse_scenario(size, &map, 1), Err(ParseError::Scenario { .. })));
    }

    #[test]
    fn neighbor_counts() {
        let map = GridMap::open(3, 3);
        assert_eq!(map.neighbors(map.cell(1, 1)).count(), 5);
        assert_eq!(map.neighbors(map.cell(0, 0)).count(), 3);
        let walled = GridMap::from_rows(&["@@@", "@.@", "@@@"]).unwrap();
        assert_eq!(walled.neighbors(walled.cell(1, 1)).collect::<Vec<_>>(), vec![walled.cell(1, 1)]);
    }

    #[test]
    fn neighbor_order() {
        let map = GridMap::open(3, 3);
        let c = map.cell(1, 1);
        let got: Vec<_> = map.neighbors(c).collect();
        assert_eq!(got, vec![c, map.cell(0, 1), map.cell(2, 1), map.cell(1, 0), map.cell(1, 2)]);
    }

    #[test]
    fn distances() {
        let map = GridMap::open(3, 3);
        let field = backward_dijkstra(&map, map.cell(0, 0));
        assert_eq!(field.get(map.cell(2, 2)), Some(4));
        assert_eq!(field.get(map.cell(0, 0)), Some(0));

        let wall = GridMap::from_rows(&[".@.", ".@.", ".@."]).unwrap();
        let field = backward_dijkstra(&wall, wall.cell(0, 0));
        assert_eq!(field.get(wall.cell(2, 2)), None);
    }

    #[test]
    fn map_round_trip() {
        let map = GridMap::from_rows(&["..@.", "@...", "...."]).unwrap();
        assert_eq!(parse_map(&map.to_map_string()).unwrap(), map);
    }
}
