//! Empirical TV from `simulate` against the bound from `bounds`, per level.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;
use crate::table::{Cell, Table, BOUNDS_HEADER, COMPARE_HEADER, SIMULATE_HEADER};

struct Rows {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read(path: &Path, expected: &[&str], kind: &str) -> Result<Rows, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Compare(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Compare(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CliError::Compare(format!("{} is empty", path.display())));
    }
    if header != expected {
        return Err(CliError::Compare(format!(
            "{} does not have the {kind} header",
            path.display()
        )));
    }
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Compare(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Compare(format!("{} has no rows", path.display())));
    }
    Ok(Rows { header, rows })
}

impl Rows {
    fn get<'a>(&self, row: &'a csv::StringRecord, name: &str) -> &'a str {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .expect("header checked");
        &row[i]
    }

    fn num(&self, row: &csv::StringRecord, name: &str) -> Result<f64, CliError> {
        self.get(row, name)
            .parse()
            .map_err(|_| CliError::Compare(format!("column `{name}` holds a non-number")))
    }

    fn level(&self, row: &csv::StringRecord) -> Result<usize, CliError> {
        self.get(row, "level")
            .parse()
            .map_err(|_| CliError::Compare("column `level` holds a non-integer".into()))
    }
}

pub fn compare(simulate: &Path, bounds: &Path) -> Result<Table, CliError> {
    let sim = read(simulate, SIMULATE_HEADER, "simulate")?;
    let bnd = read(bounds, BOUNDS_HEADER, "bounds")?;
    let echo = sim.get(&sim.rows[0], "params").to_string();
    let same = sim.rows.iter().all(|r| sim.get(r, "params") == echo)
        && bnd.rows.iter().all(|r| bnd.get(r, "params") == echo);
    if !same {
        return Err(CliError::Compare(
            "mismatched configs: the parameter echoes of the two files differ".into(),
        ));
    }
    let mut by_level = BTreeMap::new();
    for r in &bnd.rows {
        by_level.insert(bnd.level(r)?, r);
    }
    let mut t = Table::new("compare", COMPARE_HEADER);
    for r in &sim.rows {
        let level = sim.level(r)?;
        let Some(b) = by_level.get(&level) else {
            continue;
        };
        let tv = sim.num(r, "tv")?;
        let se = sim.num(r, "tv_se")?;
        let applicable = bnd.get(b, "applicable") == "true";
        let (bound, pass) = if applicable {
            let bound = bnd.num(b, "bound")?;
            (Cell::Float(bound), Cell::Bool(tv <= bound + 3.0 * se))
        } else {
            (Cell::Text("n/a".into()), Cell::Text("n/a".into()))
        };
        t.push(vec![
            level.into(),
            tv.into(),
            se.into(),
            bound,
            applicable.into(),
            pass,
        ]);
    }
    if t.rows.is_empty() {
        return Err(CliError::Compare("the two files share no level".into()));
    }
    Ok(t)
}
