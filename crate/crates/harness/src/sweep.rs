//! Tabulation of `D(λ)` along a line of spectral parameters.

use std::str::FromStr;

use dtnkit_core::dtn::dtn_eval;
use dtnkit_core::realizations::in_resolvent_set;
use dtnkit_core::C64;
use rayon::prelude::*;

use crate::instance::Instance;

/// `count` equispaced points from `start` to `stop` on the line `Im λ = im`,
/// written `START:STOP:COUNT[:IM]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub im: f64,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("grid `{s}` is not START:STOP:COUNT[:IM]"));
        }
        let real = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("grid `{s}`: `{t}`: {e}"))
        };
        let grid = Grid {
            start: real(parts[0])?,
            stop: real(parts[1])?,
            count: parts[2]
                .trim()
                .parse()
                .map_err(|e| format!("grid `{s}`: `{}`: {e}", parts[2]))?,
            im: parts.get(3).map_or(Ok(0.0), |t| real(t))?,
        };
        if ![grid.start, grid.stop, grid.im]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(format!("grid `{s}` has non-finite bounds"));
        }
        Ok(grid)
    }
}

impl Grid {
    pub fn points(&self) -> Vec<C64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![C64::new(self.start, self.im)],
            n => (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    C64::new(self.start + t * (self.stop - self.start), self.im)
                })
                .collect(),
        }
    }

    /// Distance between neighbouring points, zero for fewer than two.
    pub fn step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.stop - self.start).abs() / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: C64,
    pub distance: f64,
    pub margin: f64,
    /// Inside the margin around the Dirichlet spectrum.
    pub flagged: bool,
    /// `D(λ)` row-major, absent when `λ` is not in the resolvent set.
    pub entries: Option<Vec<C64>>,
}

/// Evaluates `D(λ)` at every grid point. A point is flagged when it is
/// closer to the Dirichlet spectrum than `margin` or fails the resolvent
/// test; `margin` defaults to half the grid step.
pub fn sweep(inst: &Instance, grid: &Grid, margin: Option<f64>) -> Vec<SweepRow> {
    let margin = margin.unwrap_or(0.5 * grid.step());
    grid.points()
        .par_iter()
        .map(|&lambda| {
            let check = in_resolvent_set(&inst.pencil, lambda);
            let distance = inst.pencil.distance_to_spectrum(lambda);
            let entries = if check.in_resolvent {
                dtn_eval(&inst.forms, &inst.pencil, lambda).ok().map(|d| {
                    (0..d.nrows())
                        .flat_map(|i| (0..d.ncols()).map(move |j| (i, j)))
                        .map(|ij| d[ij])
                        .collect()
                })
            } else {
                None
            };
            SweepRow {
                lambda,
                distance,
                margin: check.margin,
                flagged: !check.in_resolvent || distance < margin,
                entries,
            }
        })
        .collect()
}

/// CSV with columns `lambda_re, lambda_im, distance, margin, flagged` and
/// `d_i_j_re, d_i_j_im` for the `n × n` boundary matrix.
pub fn to_csv(rows: &[SweepRow], n: usize) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["lambda_re", "lambda_im", "distance", "margin", "flagged"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..n {
        for j in 0..n {
            header.push(format!("d_{i}_{j}_re"));
            header.push(format!("d_{i}_{j}_im"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.lambda.re.to_string(),
            r.lambda.im.to_string(),
            r.distance.to_string(),
            r.margin.to_string(),
            r.flagged.to_string(),
        ];
        match &r.entries {
            Some(e) => rec.extend(e.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()])),
            None => rec.extend(std::iter::repeat_n(String::new(), 2 * n * n)),
        }
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grid_specs() {
        let g: Grid = "-4:-0.1:40".parse().unwrap();
        assert_eq!((g.start, g.stop, g.count, g.im), (-4.0, -0.1, 40, 0.0));
        let g: Grid = "0:1:3:0.5".parse().unwrap();
        assert_eq!(
            g.points(),
            vec![C64::new(0.0, 0.5), C64::new(0.5, 0.5), C64::new(1.0, 0.5)]
        );
        assert!("0:1".parse::<Grid>().is_err());
        assert!("0:x:3".parse::<Grid>().is_err());
        assert!("0:1:-1".parse::<Grid>().is_err());
    }

    #[test]
    fn empty_grid_is_header_only() {
        let g: Grid = "0:1:0".parse().unwrap();
        assert!(g.points().is_empty());
        let csv = to_csv(&[], 2).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("lambda_re,lambda_im,distance,margin,flagged,d_0_0_re"));
    }
}
