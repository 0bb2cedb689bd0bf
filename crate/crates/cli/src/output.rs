use crate::CliError;

/// A CSV table held as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// `prefix_i_j` for every entry, row by row, 1-based.
pub fn entry_columns(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).flat_map(|i| (1..=p).map(move |j| format!("{prefix}_{i}_{j}"))).collect()
}

pub fn coordinate_columns(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("z{j}")).collect()
}
