//! Dataset CSV: `index,clean_label,observed_label,f0,...` with a header
//! row and features written to 9 significant digits.

use std::path::Path;

use cotrain_core::data::{Dataset, LabeledSample};

use crate::error::{CliError, CliResult};

/// `v` rounded to 9 significant digits, printed in its shortest form.
pub fn format_feature(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

pub fn write_to<W: std::io::Write>(dataset: &Dataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "clean_label".into(), "observed_label".into()];
    header.extend((0..dataset.dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut row = vec![s.index.to_string(), s.clean_label.to_string(), s.observed_label.to_string()];
        row.extend(s.features.iter().map(|&v| format_feature(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write(dataset: &Dataset, path: &Path) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_to(dataset, std::io::BufWriter::new(file)).map_err(|e| CliError::format(path, e))
}

pub fn read_from<R: std::io::Read>(input: R, classes: usize) -> Result<Dataset, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 4 || names[..3] != ["index", "clean_label", "observed_label"] {
        return Err("header must start with index,clean_label,observed_label and list features".into());
    }
    let dim = names.len() - 3;
    for (k, name) in names[3..].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(format!("feature column {k} is named {name:?}"));
        }
    }
    let mut samples = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let at = |e: &dyn std::fmt::Display| format!("row {}: {e}", line + 1);
        let int = |k: usize| record[k].trim().parse::<usize>().map_err(|e| at(&e));
        let features = (3..3 + dim)
            .map(|k| record[k].trim().parse::<f64>().map_err(|e| at(&e)))
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(LabeledSample {
            index: int(0)?,
            clean_label: int(1)?,
            observed_label: int(2)?,
            features,
        });
    }
    Dataset::new(classes, dim, samples).map_err(|e| e.to_string())
}

pub fn read(path: &Path, classes: usize) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_from(std::io::BufReader::new(file), classes).map_err(|m| CliError::format(path, m))
}
