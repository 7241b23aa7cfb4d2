//! Plain-text ingestion and emission of point patterns and covariate
//! rasters.
//!
//! Pattern CSV: first line exactly `x,y`, then one `x,y` float pair per
//! line. Raster: first line `nx ny xmin xmax ymin ymax`, then `nx*ny`
//! whitespace-separated values in row-major order (rows run over y from
//! `ymin` upward).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CovariateField, Point, PointPattern, Window};

/// Read a point pattern CSV, validating every coordinate against `window`.
/// Out-of-window coordinates are collected and reported together.
pub fn read_pattern_csv(path: &Path, window: Window) -> Result<PointPattern> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();

    match lines.next() {
        Some((_, header)) if header.trim_end() == "x,y" => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                path: display,
                line: 1,
                message: format!("expected header `x,y`, found `{header}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                path: display,
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut points = Vec::new();
    let mut outside = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (xs, ys) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Parse {
                    path: display,
                    line: lineno,
                    message: "expected two comma-separated values".into(),
                })
            }
        };
        let parse = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line: lineno,
                message: format!("not a number: `{s}`"),
            })?;
            if v.is_nan() {
                return Err(Error::Parse {
                    path: display.clone(),
                    line: lineno,
                    message: "NaN coordinate".into(),
                });
            }
            Ok(v)
        };
        let (x, y) = (parse(xs)?, parse(ys)?);
        if !window.contains(x, y) {
            outside.push(lineno);
        } else {
            points.push(Point::new(x, y));
        }
    }

    if !outside.is_empty() {
        return Err(Error::PointsOutsideWindow {
            path: display,
            lines: outside,
        });
    }
    PointPattern::new(points, window)
}

/// Write a pattern as CSV. Coordinates print with shortest round-trip
/// precision.
pub fn write_pattern_csv(pattern: &PointPattern, path: &Path) -> Result<()> {
    let mut out = String::from("x,y\n");
    for p in pattern.points() {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a covariate raster.
pub fn read_raster(path: &Path) -> Result<CovariateField> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: display.clone(),
        line: 1,
        message: "empty file".into(),
    })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 6 {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!("expected `nx ny xmin xmax ymin ymax`, found `{header}`"),
        });
    }
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line: 1,
            message: format!("not a grid dimension: `{s}`"),
        })
    };
    let parse_f = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Parse {
            path: display.clone(),
            line: 1,
            message: format!("not a number: `{s}`"),
        })
    };
    let nx = parse_dim(head[0])?;
    let ny = parse_dim(head[1])?;
    let window = Window::new(
        parse_f(head[2])?,
        parse_f(head[3])?,
        parse_f(head[4])?,
        parse_f(head[5])?,
    )?;

    let mut values = Vec::with_capacity(nx * ny);
    for (idx, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                line: idx + 1,
                message: format!("not a number: `{tok}`"),
            })?;
            values.push(v);
        }
    }
    if values.len() != nx * ny {
        return Err(Error::Parse {
            path: display,
            line: 1,
            message: format!(
                "raster {nx} x {ny} needs {} values, file holds {}",
                nx * ny,
                values.len()
            ),
        });
    }
    CovariateField::new(nx, ny, window, values)
}

/// Write a covariate raster, one grid row per line.
pub fn write_raster(field: &CovariateField, path: &Path) -> Result<()> {
    let w = field.window();
    let mut out = format!(
        "{} {} {} {} {} {}\n",
        field.nx(),
        field.ny(),
        w.xmin,
        w.xmax,
        w.ymin,
        w.ymax
    );
    for row in field.values().chunks(field.nx()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
