use std::path::Path;

use crate::error::CliError;
use crate::output::write_atomic;
use crate::svg::{Heatmap, LinePlot, Series};
use crate::{PlotArgs, PlotKind};

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let bad = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(bad)?;
    let header: Vec<String> = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(bad)?;
    if header.is_empty() || rows.is_empty() {
        return Err(CliError::Config(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

fn number(field: &str, line: usize) -> Result<f64, CliError> {
    match field.to_ascii_lowercase().as_str() {
        "nan" | "" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse()
            .map_err(|_| CliError::Config(format!("line {line}: `{field}` is not a number"))),
    }
}

/// First column on x, every other column as a series.
fn line_plot(t: &Table, title: &str, log_y: bool) -> Result<LinePlot, CliError> {
    if t.header.len() < 2 {
        return Err(CliError::Config("a line plot needs at least 2 columns".into()));
    }
    let mut series: Vec<Series> = t.header[1..]
        .iter()
        .map(|h| Series { name: h.clone(), points: Vec::new() })
        .collect();
    for (i, row) in t.rows.iter().enumerate() {
        let x = number(&row[0], i + 2)?;
        for (s, field) in series.iter_mut().zip(&row[1..]) {
            s.points.push((x, number(field, i + 2)?));
        }
    }
    Ok(LinePlot {
        title: title.into(),
        x_label: t.header[0].clone(),
        y_label: if t.header.len() == 2 { t.header[1].clone() } else { String::new() },
        series,
        log_y,
    })
}

/// Columns 1 and 2 are the x and y categories, column 3 is the cell value.
fn heatmap(t: &Table, title: &str) -> Result<Heatmap, CliError> {
    if t.header.len() < 3 {
        return Err(CliError::Config("a heatmap needs 3 columns (x, y, value)".into()));
    }
    let mut xs: Vec<String> = Vec::new();
    let mut ys: Vec<String> = Vec::new();
    for row in &t.rows {
        if !xs.contains(&row[0]) {
            xs.push(row[0].clone());
        }
        if !ys.contains(&row[1]) {
            ys.push(row[1].clone());
        }
    }
    let mut values = vec![vec![f64::NAN; xs.len()]; ys.len()];
    for (i, row) in t.rows.iter().enumerate() {
        let c = xs.iter().position(|x| *x == row[0]).unwrap();
        let r = ys.iter().position(|y| *y == row[1]).unwrap();
        values[r][c] = number(&row[2], i + 2)?;
    }
    Ok(Heatmap {
        title: title.into(),
        x_label: t.header[0].clone(),
        y_label: t.header[1].clone(),
        x_ticks: xs,
        y_ticks: ys,
        values,
    })
}

pub fn run(a: &PlotArgs) -> Result<(), CliError> {
    let table = read_table(&a.csv)?;
    let title = a
        .title
        .clone()
        .unwrap_or_else(|| a.csv.file_stem().map_or(String::new(), |s| s.to_string_lossy().into_owned()));
    let svg = match a.kind {
        PlotKind::Line => line_plot(&table, &title, a.log_y)?.render(),
        PlotKind::Heatmap => heatmap(&table, &title)?.render(),
    };
    let out = a.out.clone().unwrap_or_else(|| a.csv.with_extension("svg"));
    write_atomic(&out, svg.as_bytes())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
