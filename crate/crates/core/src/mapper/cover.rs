use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` (closed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Patch {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.x.0 <= px && px <= self.x.1 && self.y.0 <= py && py <= self.y.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub patches: Vec<Patch>,
    /// Point index -> ids of the patches containing it, ascending.
    pub index: Vec<Vec<usize>>,
}

impl Cover {
    /// Point indices in each patch, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.patches.len()];
        for (i, ps) in self.index.iter().enumerate() {
            for &p in ps {
                out[p].push(i);
            }
        }
        out
    }
}

/// `r` equal base intervals over `[lo, hi]`, each grown by `g * L / 2` on both
/// sides and clipped to the range. A degenerate range yields one interval.
pub fn axis_intervals(lo: f64, hi: f64, r: usize, g: f64) -> Vec<(f64, f64)> {
    if hi <= lo {
        return vec![(lo, hi)];
    }
    let len = (hi - lo) / r as f64;
    let pad = g * len / 2.0;
    (0..r)
        .map(|j| {
            let a = if j == 0 { lo } else { (lo + j as f64 * len - pad).max(lo) };
            let b = if j + 1 == r { hi } else { (lo + (j + 1) as f64 * len + pad).min(hi) };
            (a, b)
        })
        .collect()
}

pub fn build_cover(filter_values: &Matrix, g: f64, r: usize) -> Result<Cover> {
    let m = filter_values.nrows();
    if m == 0 {
        return Err(Error::Empty("cover needs at least one point".into()));
    }
    if filter_values.ncols() != 2 {
        return Err(Error::param("cover expects 2-D filter values"));
    }
    if r == 0 {
        return Err(Error::param("resolution must be >= 1"));
    }
    if !(0.0..1.0).contains(&g) {
        return Err(Error::param("gain must lie in [0, 1)"));
    }
    let range = |c: usize| {
        let col = filter_values.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let xs = axis_intervals(x0, x1, r, g);
    let ys = axis_intervals(y0, y1, r, g);
    let mut patches = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            patches.push(Patch { x, y });
        }
    }
    let hits = |ivs: &[(f64, f64)], v: f64| -> Vec<usize> {
        ivs.iter().enumerate().filter(|(_, iv)| iv.0 <= v && v <= iv.1).map(|(i, _)| i).collect()
    };
    let index = (0..m)
        .map(|i| {
            let hx = hits(&xs, filter_values.get(i, 0));
            let hy = hits(&ys, filter_values.get(i, 1));
            let mut ids = Vec::with_capacity(hx.len() * hy.len());
            for &a in &hx {
                for &b in &hy {
                    ids.push(a * ys.len() + b);
                }
            }
            ids
        })
        .collect();
    Ok(Cover { patches, index })
}
