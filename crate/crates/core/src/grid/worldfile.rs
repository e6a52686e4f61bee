//! On-disk world layout: one sparse CSV raster per channel plus population,
//! station, and city tables, all in one directory.
//!
//! Raster files (`channel_RRC.csv`, ...) carry a two-line dimension header
//! followed by a `row,col,value` table listing only nonzero cells:
//!
//! ```text
//! rows,cols,cell_km
//! 300,300,10
//! row,col,value
//! 12,40,1530.5
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::grid::{age_group_index, ChannelId, Station, World, AGE_GROUPS};

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CoreError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CoreError::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub(crate) struct CsvLines<'a> {
    file: String,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> CsvLines<'a> {
    pub(crate) fn new(path: &Path, text: &'a str) -> CsvLines<'a> {
        CsvLines {
            file: file_label(path),
            lines: text.lines().enumerate(),
        }
    }

    /// Next non-empty line, split on commas, with its 1-based line number.
    pub(crate) fn next_row(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            return Some((idx + 1, trimmed.split(',').map(str::trim).collect()));
        }
        None
    }

    pub(crate) fn schema(&self, line: usize, message: impl Into<String>) -> CoreError {
        CoreError::schema(&self.file, line, message)
    }

    pub(crate) fn expect_header(&mut self, expected: &[&str]) -> Result<()> {
        match self.next_row() {
            Some((line, fields)) => {
                if fields != expected {
                    return Err(self.schema(
                        line,
                        format!("expected header '{}', found '{}'", expected.join(","), fields.join(",")),
                    ));
                }
                Ok(())
            }
            None => Err(self.schema(1, format!("missing header '{}'", expected.join(",")))),
        }
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    csv: &CsvLines<'_>,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.parse()
        .map_err(|_| csv.schema(line, format!("bad {name} '{raw}'")))
}

fn channel_file_name(id: ChannelId) -> String {
    format!("channel_{}.csv", id.name())
}

struct RasterHeader {
    rows: usize,
    cols: usize,
    cell_km: f64,
}

fn read_raster(path: &Path, expect: Option<&RasterHeader>) -> Result<(RasterHeader, Vec<f64>)> {
    let text = read_file(path)?;
    let mut csv = CsvLines::new(path, &text);
    csv.expect_header(&["rows", "cols", "cell_km"])?;
    let (line, dims) = csv
        .next_row()
        .ok_or_else(|| csv.schema(2, "missing dimension line"))?;
    if dims.len() != 3 {
        return Err(csv.schema(line, format!("expected 3 dimension fields, found {}", dims.len())));
    }
    let header = RasterHeader {
        rows: parse_field(&csv, line, "rows", dims[0])?,
        cols: parse_field(&csv, line, "cols", dims[1])?,
        cell_km: parse_field(&csv, line, "cell_km", dims[2])?,
    };
    if header.rows == 0 || header.cols == 0 {
        return Err(csv.schema(line, "grid dimensions must be positive"));
    }
    if !(header.cell_km.is_finite() && header.cell_km > 0.0) {
        return Err(csv.schema(line, format!("bad cell size {}", header.cell_km)));
    }
    if let Some(e) = expect {
        if header.rows != e.rows || header.cols != e.cols || header.cell_km != e.cell_km {
            return Err(csv.schema(
                line,
                format!(
                    "grid {}x{} @ {} km disagrees with {}x{} @ {} km from the first raster",
                    header.rows, header.cols, header.cell_km, e.rows, e.cols, e.cell_km
                ),
            ));
        }
    }
    csv.expect_header(&["row", "col", "value"])?;
    let mut data = vec![0.0; header.rows * header.cols];
    let mut seen = vec![false; header.rows * header.cols];
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 3 {
            return Err(csv.schema(line, format!("expected 3 fields, found {}", fields.len())));
        }
        let row: usize = parse_field(&csv, line, "row", fields[0])?;
        let col: usize = parse_field(&csv, line, "col", fields[1])?;
        let value: f64 = parse_field(&csv, line, "value", fields[2])?;
        if row >= header.rows || col >= header.cols {
            return Err(csv.schema(
                line,
                format!("cell ({row}, {col}) outside {}x{} grid", header.rows, header.cols),
            ));
        }
        if !value.is_finite() {
            return Err(csv.schema(line, format!("non-finite value '{}'", fields[2])));
        }
        let idx = row * header.cols + col;
        if seen[idx] {
            return Err(csv.schema(line, format!("duplicate entry for cell ({row}, {col})")));
        }
        seen[idx] = true;
        data[idx] = value;
    }
    Ok((header, data))
}

fn write_raster(path: &Path, world: &World, id: ChannelId) -> Result<()> {
    let mut out = String::new();
    out.push_str("rows,cols,cell_km\n");
    let _ = writeln!(out, "{},{},{}", world.rows, world.cols, world.cell_km);
    out.push_str("row,col,value\n");
    let data = world.channel(id);
    for row in 0..world.rows {
        for col in 0..world.cols {
            let v = data[row * world.cols + col];
            if v != 0.0 {
                let _ = writeln!(out, "{row},{col},{v}");
            }
        }
    }
    write_file(path, &out)
}

/// Writes every world table into `dir`, creating it if needed.
pub fn save_world(world: &World, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    for id in ChannelId::ALL {
        write_raster(&dir.join(channel_file_name(id)), world, id)?;
    }

    let mut pop = String::from("row,col,age_group,count\n");
    for row in 0..world.rows {
        for col in 0..world.cols {
            let groups = world.population_at(row, col);
            for (g, count) in groups.iter().enumerate() {
                if *count != 0.0 {
                    let _ = writeln!(pop, "{row},{col},{},{count}", AGE_GROUPS[g]);
                }
            }
        }
    }
    write_file(&dir.join("population.csv"), &pop)?;

    let mut st = String::from("id,row,col,city_id,pm25_ugm3\n");
    for s in &world.stations {
        let _ = writeln!(st, "{},{},{},{},{}", s.id, s.row, s.col, s.city_id, s.pm25);
    }
    write_file(&dir.join("stations.csv"), &st)?;

    let mut ci = String::from("city_id,population\n");
    for (city, popn) in &world.cities {
        let _ = writeln!(ci, "{city},{popn}");
    }
    write_file(&dir.join("cities.csv"), &ci)
}

/// Loads a world directory written by [`save_world`] and validates it.
pub fn load_world(dir: &Path) -> Result<World> {
    let mut header: Option<RasterHeader> = None;
    let mut channels = Vec::with_capacity(ChannelId::ALL.len());
    for id in ChannelId::ALL {
        let path = dir.join(channel_file_name(id));
        let (h, data) = read_raster(&path, header.as_ref())?;
        if header.is_none() {
            header = Some(h);
        }
        channels.push(data);
    }
    let header = header.expect("at least one channel");
    let mut world = World::new(header.rows, header.cols, header.cell_km)?;
    for (id, data) in ChannelId::ALL.into_iter().zip(channels) {
        world.channel_mut(id).copy_from_slice(&data);
    }

    let pop_path = dir.join("population.csv");
    let pop_text = read_file(&pop_path)?;
    let mut csv = CsvLines::new(&pop_path, &pop_text);
    csv.expect_header(&["row", "col", "age_group", "count"])?;
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 4 {
            return Err(csv.schema(line, format!("expected 4 fields, found {}", fields.len())));
        }
        let row: usize = parse_field(&csv, line, "row", fields[0])?;
        let col: usize = parse_field(&csv, line, "col", fields[1])?;
        let group = age_group_index(fields[2])
            .map_err(|_| csv.schema(line, format!("unknown age group '{}'", fields[2])))?;
        let count: f64 = parse_field(&csv, line, "count", fields[3])?;
        if row >= world.rows || col >= world.cols {
            return Err(csv.schema(
                line,
                format!("cell ({row}, {col}) outside {}x{} grid", world.rows, world.cols),
            ));
        }
        if !(count.is_finite() && count >= 0.0) {
            return Err(csv.schema(line, format!("bad population count '{}'", fields[3])));
        }
        world.population_at_mut(row, col)[group] += count;
    }

    let cities_path = dir.join("cities.csv");
    let cities_text = read_file(&cities_path)?;
    let mut csv = CsvLines::new(&cities_path, &cities_text);
    csv.expect_header(&["city_id", "population"])?;
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 2 {
            return Err(csv.schema(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let popn: f64 = parse_field(&csv, line, "population", fields[1])?;
        if !(popn.is_finite() && popn > 0.0) {
            return Err(csv.schema(line, format!("bad city population '{}'", fields[1])));
        }
        if world.cities.insert(fields[0].to_string(), popn).is_some() {
            return Err(csv.schema(line, format!("duplicate city '{}'", fields[0])));
        }
    }

    let st_path = dir.join("stations.csv");
    let st_text = read_file(&st_path)?;
    let mut csv = CsvLines::new(&st_path, &st_text);
    csv.expect_header(&["id", "row", "col", "city_id", "pm25_ugm3"])?;
    while let Some((line, fields)) = csv.next_row() {
        if fields.len() != 5 {
            return Err(csv.schema(line, format!("expected 5 fields, found {}", fields.len())));
        }
        let row: usize = parse_field(&csv, line, "row", fields[1])?;
        let col: usize = parse_field(&csv, line, "col", fields[2])?;
        let pm25: f64 = parse_field(&csv, line, "pm25_ugm3", fields[4])?;
        if !(pm25.is_finite() && pm25 >= 0.0) {
            return Err(csv.schema(line, format!("bad pm25 '{}'", fields[4])));
        }
        world.stations.push(Station {
            id: fields[0].to_string(),
            row,
            col,
            city_id: fields[3].to_string(),
            pm25,
        });
    }

    world.validate()?;
    Ok(world)
}
