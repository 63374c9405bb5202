//! Grid topology over index space: neighbourhoods and the min-max diagonal.

use serde::{Deserialize, Serialize};

use super::{DesignSpace, Point, SpaceError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Manhattan distance.
    L1,
    /// Chebyshev distance.
    Linf,
}

impl Norm {
    pub fn distance(self, a: &[usize], b: &[usize]) -> usize {
        let diffs = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y));
        match self {
            Norm::L1 => diffs.sum(),
            Norm::Linf => diffs.max().unwrap_or(0),
        }
    }

    /// Number of lattice offsets within distance `d` in `dims` dimensions,
    /// saturating at `cap`.
    fn ball_size(self, dims: usize, d: usize, cap: usize) -> usize {
        match self {
            Norm::Linf => {
                let side = 2 * d + 1;
                let mut n = 1usize;
                for _ in 0..dims {
                    n = n.saturating_mul(side);
                    if n > cap {
                        return cap + 1;
                    }
                }
                n
            }
            // Coarse bound: (2d+1)^dims also contains the L1 ball.
            Norm::L1 => Norm::Linf.ball_size(dims, d, cap),
        }
    }
}

fn for_each_offset(
    norm: Norm,
    center: &[usize],
    cards: &[usize],
    d: usize,
    f: &mut dyn FnMut(&[usize]),
) {
    fn rec(
        norm: Norm,
        center: &[usize],
        cards: &[usize],
        budget: usize,
        d: usize,
        cur: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        let k = cur.len();
        if k == center.len() {
            f(cur);
            return;
        }
        let c = center[k];
        let lo = c.saturating_sub(budget);
        let hi = (c + budget).min(cards[k] - 1);
        for v in lo..=hi {
            let used = c.abs_diff(v);
            let next = match norm {
                Norm::L1 => budget - used,
                Norm::Linf => d,
            };
            cur.push(v);
            rec(norm, center, cards, next, d, cur, f);
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(center.len());
    rec(norm, center, cards, d, d, &mut cur, f);
}

impl DesignSpace {
    /// Positions of every point within distance `d` of the point at `pos`
    /// (excluding `pos` itself), in enumeration order.
    pub fn neighbour_positions(&self, pos: usize, norm: Norm, d: usize) -> Vec<usize> {
        let center = &self.points[pos].coords;
        let dims = center.len();
        let mut out = Vec::new();
        if norm.ball_size(dims, d, self.points.len()) <= self.points.len() {
            let cards = self.schema.cardinalities();
            let index = self.coord_index();
            for_each_offset(norm, center, &cards, d, &mut |c| {
                if let Some(ps) = index.get(c) {
                    out.extend(ps.iter().copied().filter(|&q| q != pos));
                }
            });
            out.sort_unstable();
        } else {
            out.extend(
                self.points
                    .iter()
                    .enumerate()
                    .filter(|(q, p)| *q != pos && norm.distance(center, &p.coords) <= d)
                    .map(|(q, _)| q),
            );
        }
        out
    }

    /// Points within distance `d` of `p` in index space, `p` excluded.
    pub fn get_neighbours(
        &self,
        p: &Point,
        norm: Norm,
        d: usize,
    ) -> Result<Vec<&Point>, SpaceError> {
        let pos = self
            .position_of(p)
            .ok_or_else(|| SpaceError::PointNotInSpace(p.coords.clone()))?;
        Ok(self
            .neighbour_positions(pos, norm, d)
            .into_iter()
            .map(|q| &self.points[q])
            .collect())
    }

    /// Coordinates of the diagonal from the all-min to the all-max corner:
    /// `L + 1` points with `coords[k] = round(t * (n_k - 1) / L)`, rounding
    /// half up.
    pub fn diagonal_coords(&self) -> Vec<Vec<usize>> {
        diagonal_coords(&self.schema.cardinalities())
    }

    /// Positions of the diagonal points; requires a full grid.
    pub fn diagonal_positions(&self) -> Result<Vec<usize>, SpaceError> {
        if !self.is_full_grid() {
            return Err(SpaceError::NotAFullGrid {
                present: self.coord_index().len(),
                expected: self.schema.cardinality(),
            });
        }
        Ok(self
            .diagonal_coords()
            .iter()
            .map(|c| self.positions_at(c)[0])
            .collect())
    }

    pub fn get_diagonal(&self) -> Result<Vec<&Point>, SpaceError> {
        Ok(self
            .diagonal_positions()?
            .into_iter()
            .map(|q| &self.points[q])
            .collect())
    }
}

pub(crate) fn diagonal_coords(cards: &[usize]) -> Vec<Vec<usize>> {
    let span = cards.iter().map(|&n| n - 1).max().unwrap_or(0);
    if span == 0 {
        return vec![vec![0; cards.len()]];
    }
    (0..=span)
        .map(|t| {
            cards
                .iter()
                .map(|&n| (2 * t * (n - 1) + span) / (2 * span))
                .collect()
        })
        .collect()
}
