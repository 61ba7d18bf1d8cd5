//! Two-dimensional pit instances: blocks, profits and the parent relation.
//!
//! A block at `(row, col)` has as parents every block at `(row - 1, col')`
//! with `|col - col'| <= 1`. Parents that fall outside the lattice are air and
//! impose nothing.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub id: usize,
    /// Depth, 0 at the surface.
    pub row: i64,
    pub col: i64,
    pub profit: i64,
    pub value: Option<i64>,
    pub cost: Option<i64>,
}

impl Block {
    pub fn new(row: i64, col: i64, profit: i64) -> Self {
        Block {
            id: 0,
            row,
            col,
            profit,
            value: None,
            cost: None,
        }
    }

    /// Block whose profit is `value - cost`.
    pub fn from_value_cost(row: i64, col: i64, value: i64, cost: i64) -> Self {
        Block {
            id: 0,
            row,
            col,
            profit: value - cost,
            value: Some(value),
            cost: Some(cost),
        }
    }
}

/// Excavation pattern, one bit per block; `bits[i] == 1` means block `i` is dug.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::arg("bit string entries must be 0 or 1"));
        }
        Ok(BitString(bits))
    }

    pub fn zeros(n: usize) -> Self {
        BitString(vec![0; n])
    }

    pub fn ones(n: usize) -> Self {
        BitString(vec![1; n])
    }

    /// Decodes a basis index (bit `i` of `index` is `z_i`).
    pub fn from_index(index: usize, n: usize) -> Self {
        BitString((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Formats basis index `index` as `z_0 z_1 ... z_{n-1}`.
pub fn index_label(index: usize, n: usize) -> String {
    (0..n)
        .map(|i| if (index >> i) & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitLattice {
    blocks: Vec<Block>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl PitLattice {
    /// Builds a lattice from blocks; ids are reassigned in the given order.
    pub fn new(mut blocks: Vec<Block>) -> Result<Self> {
        let mut by_pos: HashMap<(i64, i64), usize> = HashMap::with_capacity(blocks.len());
        for (id, b) in blocks.iter_mut().enumerate() {
            b.id = id;
            if let (Some(v), Some(c)) = (b.value, b.cost) {
                if v - c != b.profit {
                    return Err(Error::invalid(format!(
                        "block {id}: profit {} differs from value - cost = {}",
                        b.profit,
                        v - c
                    )));
                }
            }
            if by_pos.insert((b.row, b.col), id).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate block position (row {}, col {})",
                    b.row, b.col
                )));
            }
        }
        let parents: Vec<Vec<usize>> = blocks
            .iter()
            .map(|b| {
                (-1..=1)
                    .filter_map(|dc| by_pos.get(&(b.row - 1, b.col + dc)).copied())
                    .collect::<Vec<_>>()
            })
            .map(|mut p| {
                p.sort_unstable();
                p
            })
            .collect();
        let mut children = vec![Vec::new(); blocks.len()];
        for (child, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(child);
            }
        }
        Ok(PitLattice {
            blocks,
            parents,
            children,
        })
    }

    /// Parses the text instance format: a `rows R` header followed by `R`
    /// lines of `col:profit` pairs. `#` starts a comment; blank lines are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Option<usize> = None;
        let mut row = 0usize;
        let mut blocks = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some(expected) = rows else {
                let mut it = line.split_whitespace();
                match (it.next(), it.next(), it.next()) {
                    (Some("rows"), Some(r), None) => {
                        let r: usize = r.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("invalid row count {r:?}"),
                        })?;
                        rows = Some(r);
                        continue;
                    }
                    _ => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "expected header `rows R`".into(),
                        })
                    }
                }
            };
            if row >= expected {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("more than {expected} rows"),
                });
            }
            for tok in line.split_whitespace() {
                let bad = || Error::Parse {
                    line: line_no,
                    msg: format!("expected `col:profit`, got {tok:?}"),
                };
                let (c, w) = tok.split_once(':').ok_or_else(bad)?;
                let col: i64 = c.parse().map_err(|_| bad())?;
                let profit: i64 = w.parse().map_err(|_| bad())?;
                blocks.push(Block::new(row as i64, col, profit));
            }
            row += 1;
        }
        let Some(expected) = rows else {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: "missing header `rows R`".into(),
            });
        };
        if row != expected {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                msg: format!("header declares {expected} rows, found {row}"),
            });
        }
        PitLattice::new(blocks)
    }

    /// Writes the instance back in the text format, one line per row.
    pub fn to_text(&self) -> String {
        let rows = self.blocks.iter().map(|b| b.row).max().map_or(0, |r| r + 1);
        let mut out = format!("rows {rows}\n");
        for r in 0..rows {
            let line: Vec<String> = self
                .blocks
                .iter()
                .filter(|b| b.row == r)
                .map(|b| format!("{}:{}", b.col, b.profit))
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn profits(&self) -> impl Iterator<Item = i64> + '_ {
        self.blocks.iter().map(|b| b.profit)
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// All `(child, parent)` pairs in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(i, ps)| ps.iter().map(move |&j| (i, j)))
    }

    pub fn pair_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Distinct row indices, ascending.
    pub fn rows(&self) -> Vec<i64> {
        let mut rows: Vec<i64> = self.blocks.iter().map(|b| b.row).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    fn check_len(&self, z: &BitString) -> Result<()> {
        if z.len() != self.len() {
            return Err(Error::arg(format!(
                "bit string has length {}, lattice has {} blocks",
                z.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `P(z) = sum_i w_i z_i`.
    pub fn profit(&self, z: &BitString) -> Result<i64> {
        self.check_len(z)?;
        Ok(self.profit_of_index(z.to_index()))
    }

    /// Number of excavated blocks with an unexcavated parent, counted per pair.
    pub fn smoothness(&self, z: &BitString) -> Result<u64> {
        self.check_len(z)?;
        Ok(self.smoothness_of_index(z.to_index()))
    }

    pub fn profit_of_index(&self, index: usize) -> i64 {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| (index >> i) & 1 == 1)
            .map(|(_, b)| b.profit)
            .sum()
    }

    pub fn smoothness_of_index(&self, index: usize) -> u64 {
        let mut s = 0;
        for (i, ps) in self.parents.iter().enumerate() {
            if (index >> i) & 1 == 1 {
                s += ps.iter().filter(|&&j| (index >> j) & 1 == 0).count() as u64;
            }
        }
        s
    }
}
