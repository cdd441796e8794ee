use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sort_class_names, Dataset, FeatureGroup, FeatureKind, FeatureSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Whitespace,
    /// Comma when the header line contains one, whitespace otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TabularOptions {
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub delimiter: Delimiter,
}

enum Column {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

/// Loads a delimiter-separated file with a header row.
///
/// Categorical columns are one-hot encoded in place (levels in sorted
/// order, encoded names `column=level`); all other non-label columns are
/// parsed as reals. Empty cells and `?` are rejected as missing values.
pub fn load_tabular(path: impl AsRef<Path>, options: &TabularOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tabular(&text, options)
}

pub(crate) fn parse_tabular(text: &str, options: &TabularOptions) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Format("file has no header row".into()))?;
    let comma = match options.delimiter {
        Delimiter::Comma => true,
        Delimiter::Whitespace => false,
        Delimiter::Auto => header_line.contains(','),
    };
    let split = |line: &str| -> Vec<String> {
        if comma {
            line.split(',').map(|c| c.trim().to_string()).collect()
        } else {
            line.split_whitespace().map(str::to_string).collect()
        }
    };

    let header = split(header_line);
    let label_pos = header
        .iter()
        .position(|h| *h == options.label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{}' not found", options.label_column)))?;
    for c in &options.categorical_columns {
        if !header.contains(c) {
            return Err(Error::Schema(format!("categorical column '{c}' not found")));
        }
        if *c == options.label_column {
            return Err(Error::Schema(format!("label column '{c}' cannot be categorical")));
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut data_lines = Vec::new();
    for (line_no, line) in lines {
        data_lines.push(line_no + 1);
        let row = split(line);
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: line_no + 1,
                column: "*".into(),
                message: format!("expected {} cells, found {}", header.len(), row.len()),
            });
        }
        for (c, cell) in row.into_iter().enumerate() {
            if cell.is_empty() || cell == "?" {
                return Err(Error::Parse {
                    row: line_no + 1,
                    column: header[c].clone(),
                    message: "missing value".into(),
                });
            }
            cells[c].push(cell);
        }
    }
    let n = cells[label_pos].len();
    if n == 0 {
        return Err(Error::Format("file has no data rows".into()));
    }

    let mut columns = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == label_pos {
            continue;
        }
        let values = &cells[c];
        if options.categorical_columns.contains(name) {
            let levels: Vec<String> = values.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            let codes = values
                .iter()
                .map(|v| levels.binary_search(v).expect("level drawn from the same column"))
                .collect();
            columns.push((name.clone(), Column::Categorical { levels, codes }));
        } else {
            let parsed = values
                .iter()
                .enumerate()
                .map(|(r, v)| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::Parse {
                            row: data_lines[r],
                            column: name.clone(),
                            message: format!("'{v}' is not a finite number"),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            columns.push((name.clone(), Column::Numeric(parsed)));
        }
    }

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut groups = Vec::new();
    for (name, col) in &columns {
        let start = names.len();
        match col {
            Column::Numeric(_) => {
                names.push(name.clone());
                kinds.push(FeatureKind::Numeric);
            }
            Column::Categorical { levels, .. } => {
                for level in levels {
                    names.push(format!("{name}={level}"));
                    kinds.push(FeatureKind::OneHot);
                }
            }
        }
        groups.push(FeatureGroup {
            name: name.clone(),
            columns: (start..names.len()).collect(),
        });
    }
    let d = names.len();
    let schema = FeatureSchema::new(names, kinds, groups)?;

    let mut values = vec![0.0; n * d];
    for ((_, col), group) in columns.iter().zip(schema.groups()) {
        let base = group.columns[0];
        match col {
            Column::Numeric(v) => {
                for (r, x) in v.iter().enumerate() {
                    values[r * d + base] = *x;
                }
            }
            Column::Categorical { codes, .. } => {
                for (r, &code) in codes.iter().enumerate() {
                    values[r * d + base + code] = 1.0;
                }
            }
        }
    }

    let mut classes: Vec<String> = cells[label_pos]
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    sort_class_names(&mut classes);
    let labels = cells[label_pos]
        .iter()
        .map(|l| {
            classes
                .iter()
                .position(|c| c == l)
                .expect("class drawn from the label column")
        })
        .collect();

    Dataset::new(values, labels, classes, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(label: &str, cats: &[&str]) -> TabularOptions {
        TabularOptions {
            label_column: label.into(),
            categorical_columns: cats.iter().map(|s| s.to_string()).collect(),
            delimiter: Delimiter::Auto,
        }
    }

    #[test]
    fn onehot_encodes_a_two_level_categorical() {
        let text = "age,colour,y\n30,red,1\n41,blue,0\n29,red,1\n";
        let ds = parse_tabular(text, &opts("y", &["colour"])).unwrap();
        assert_eq!(ds.schema().feature_names(), ["age", "colour=blue", "colour=red"]);
        // Hand encoding: red -> (0, 1), blue -> (1, 0).
        assert_eq!(ds.row(0), &[30.0, 0.0, 1.0]);
        assert_eq!(ds.row(1), &[41.0, 1.0, 0.0]);
        assert_eq!(ds.row(2), &[29.0, 0.0, 1.0]);
        for r in ds.rows() {
            assert_eq!(r[1] + r[2], 1.0);
            ds.schema().validate_row(r).unwrap();
        }
        assert_eq!(ds.classes(), ["0", "1"]);
        assert_eq!(ds.labels(), &[1, 0, 1]);
    }

    #[test]
    fn no_categoricals_is_identity_encoding() {
        let text = "a b c label\n1 2 3 x\n4 5 6 y\n";
        let ds = parse_tabular(text, &opts("label", &[])).unwrap();
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(ds.schema().groups().len(), 3);
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let err = parse_tabular("a,b\n1,2\n", &opts("y", &[])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        let err = parse_tabular("a,y\n1,2\n", &opts("y", &["nope"])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn unparseable_cell_reports_location() {
        let err = parse_tabular("a,y\n1,0\nabc,1\n", &opts("y", &[])).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        assert!(matches!(
            parse_tabular("a,y\n,0\n", &opts("y", &[])),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_tabular("a,y\n?,0\n", &opts("y", &[])),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn rows_keep_file_order() {
        let text = "v,y\n5,a\n3,b\n9,a\n1,b\n";
        let ds = parse_tabular(text, &opts("y", &[])).unwrap();
        let col: Vec<f64> = ds.rows().map(|r| r[0]).collect();
        assert_eq!(col, [5.0, 3.0, 9.0, 1.0]);
    }
}
