//! CSV formats for point clouds, plans and embeddings.
//!
//! * point cloud: header `x1,...,xd[,w]`; without `w` the weights are uniform.
//! * plan: header `i,mass,y1,...,ym`, zero-based source index.
//! * embedding: header `x1,...,xd,mass,y1,...,ym`, one row per atom.
//!
//! Floats are written with 17 significant digits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{Atom, DeterministicMap, EmbeddingPlan, PointCloud};

/// 17 significant digits, scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::input(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::input("CSV has no header row"));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::input(format!("bad CSV record: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::input(format!(
                "line {line}: {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_field(value: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| {
        Error::input(format!("line {line}, column '{column}': cannot parse '{value}' as a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::input(format!(
            "line {line}, column '{column}': value '{value}' is not finite"
        )));
    }
    Ok(v)
}

fn expect_prefixed(header: &[String], prefix: char, what: &str) -> Result<()> {
    for (k, h) in header.iter().enumerate() {
        if *h != format!("{prefix}{}", k + 1) {
            return Err(Error::input(format!(
                "column {}: expected header '{prefix}{}' for {what}, found '{h}'",
                k + 1,
                k + 1
            )));
        }
    }
    Ok(())
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let table = read_table(text)?;
    let has_w = table.header.last().is_some_and(|h| h == "w");
    let d = table.header.len() - usize::from(has_w);
    if d == 0 {
        return Err(Error::input("point cloud CSV needs at least one x column"));
    }
    expect_prefixed(&table.header[..d], 'x', "coordinates")?;
    if table.rows.is_empty() {
        return Err(Error::input("point cloud CSV has no data rows"));
    }
    let mut coords = Vec::with_capacity(table.rows.len() * d);
    let mut weights = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        for (k, v) in row[..d].iter().enumerate() {
            coords.push(parse_field(v, *line, &table.header[k])?);
        }
        if has_w {
            let w = parse_field(&row[d], *line, "w")?;
            if w < 0.0 {
                return Err(Error::input(format!("line {line}, column 'w': negative weight {w}")));
            }
            weights.push(w);
        }
    }
    PointCloud::from_flat(d, coords, has_w.then_some(weights))
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_cloud(&read_to_string(path)?)
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let d = cloud.dim();
    let mut out: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    out.push("w".into());
    let mut s = out.join(",");
    s.push('\n');
    for (p, &w) in cloud.points().zip(cloud.weights()) {
        let mut fields: Vec<String> = p.iter().map(|&v| fmt17(v)).collect();
        fields.push(fmt17(w));
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn plan_to_csv(plan: &EmbeddingPlan) -> String {
    let m = plan.dim_m();
    let mut s = String::from("i,mass");
    for k in 1..=m {
        s.push_str(&format!(",y{k}"));
    }
    s.push('\n');
    for (i, row) in plan.rows().iter().enumerate() {
        for a in row {
            s.push_str(&format!("{i},{}", fmt17(a.mass)));
            for &v in &a.y {
                s.push(',');
                s.push_str(&fmt17(v));
            }
            s.push('\n');
        }
    }
    s
}

pub fn parse_plan(text: &str, cloud: &PointCloud) -> Result<EmbeddingPlan> {
    let table = read_table(text)?;
    if table.header.len() < 3 || table.header[0] != "i" || table.header[1] != "mass" {
        return Err(Error::input("plan CSV header must be 'i,mass,y1,...,ym'"));
    }
    expect_prefixed(&table.header[2..], 'y', "embedding coordinates")?;
    let mut rows: Vec<Vec<Atom>> = vec![Vec::new(); cloud.len()];
    for (line, row) in &table.rows {
        let i: usize = row[0].parse().map_err(|_| {
            Error::input(format!("line {line}, column 'i': '{}' is not a source index", row[0]))
        })?;
        if i >= cloud.len() {
            return Err(Error::input(format!(
                "line {line}, column 'i': source {i} out of range for {} points",
                cloud.len()
            )));
        }
        let mass = parse_field(&row[1], *line, "mass")?;
        let y = row[2..]
            .iter()
            .zip(&table.header[2..])
            .map(|(v, h)| parse_field(v, *line, h))
            .collect::<Result<Vec<_>>>()?;
        rows[i].push(Atom::new(mass, y));
    }
    EmbeddingPlan::new(cloud, rows)
}

pub fn read_plan(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<EmbeddingPlan> {
    parse_plan(&read_to_string(path)?, cloud)
}

/// Map CSV: header `y1,...,ym`, one row per source point in cloud order.
pub fn parse_map(text: &str) -> Result<DeterministicMap> {
    let table = read_table(text)?;
    expect_prefixed(&table.header, 'y', "embedding coordinates")?;
    let images = table
        .rows
        .iter()
        .map(|(line, row)| {
            row.iter()
                .zip(&table.header)
                .map(|(v, h)| parse_field(v, *line, h))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DeterministicMap::new(images)
}

pub fn map_to_csv(map: &DeterministicMap) -> String {
    let mut s = (1..=map.dim_m()).map(|k| format!("y{k}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for y in map.images() {
        s.push_str(&y.iter().map(|&v| fmt17(v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// `x1..xd,mass,y1..ym`: one row per atom, so deterministic plans give one
/// row per point.
pub fn embedding_to_csv(cloud: &PointCloud, plan: &EmbeddingPlan) -> String {
    let mut header: Vec<String> = (1..=cloud.dim()).map(|k| format!("x{k}")).collect();
    header.push("mass".into());
    header.extend((1..=plan.dim_m()).map(|k| format!("y{k}")));
    let mut s = header.join(",");
    s.push('\n');
    for (i, row) in plan.rows().iter().enumerate() {
        for a in row {
            let mut fields: Vec<String> = cloud.point(i).iter().map(|&v| fmt17(v)).collect();
            fields.push(fmt17(a.mass));
            fields.extend(a.y.iter().map(|&v| fmt17(v)));
            s.push_str(&fields.join(","));
            s.push('\n');
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub x: Vec<f64>,
    pub mass: f64,
    pub y: Vec<f64>,
}

pub fn parse_embedding(text: &str) -> Result<Vec<EmbeddingRow>> {
    let table = read_table(text)?;
    let mass_col = table
        .header
        .iter()
        .position(|h| h == "mass")
        .ok_or_else(|| Error::input("embedding CSV needs a 'mass' column"))?;
    expect_prefixed(&table.header[..mass_col], 'x', "features")?;
    expect_prefixed(&table.header[mass_col + 1..], 'y', "embedding coordinates")?;
    table
        .rows
        .iter()
        .map(|(line, row)| {
            let num = |k: usize| parse_field(&row[k], *line, &table.header[k]);
            Ok(EmbeddingRow {
                x: (0..mass_col).map(num).collect::<Result<_>>()?,
                mass: num(mass_col)?,
                y: (mass_col + 1..row.len()).map(num).collect::<Result<_>>()?,
            })
        })
        .collect()
}
