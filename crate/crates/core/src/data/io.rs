use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::{IdMap, InteractionMatrix};
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Tab,
    Comma,
    /// Any run of spaces or tabs.
    #[default]
    Whitespace,
}

/// Column layout of an interaction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Format {
    pub delimiter: Delimiter,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    /// Keep only records whose rating is at least this value.
    pub min_rating: Option<f64>,
    pub header: bool,
}

impl Default for Format {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Whitespace,
            user_col: 0,
            item_col: 1,
            rating_col: None,
            min_rating: None,
            header: false,
        }
    }
}

impl Format {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self.delimiter {
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        }
    }
}

pub fn load_interactions(path: &Path, format: &Format) -> Result<InteractionMatrix, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_interactions(BufReader::new(file), format).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Parses delimiter-separated records into a deduplicated binary matrix.
/// Blank lines and lines starting with `#` are skipped. Ids are indexed in
/// order of first appearance.
pub fn parse_interactions<R: BufRead>(
    reader: R,
    format: &Format,
) -> Result<InteractionMatrix, DataError> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut pairs = Vec::new();
    let rating_col = match (format.rating_col, format.min_rating) {
        (Some(c), Some(t)) => Some((c, t)),
        _ => None,
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: String::new(),
            source,
        })?;
        let lineno = lineno + 1;
        if lineno == 1 && format.header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = format.split(trimmed);
        let field = |c: usize, what: &str| -> Result<&str, DataError> {
            match fields.get(c) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(DataError::Malformed {
                    line: lineno,
                    message: format!("missing {what} column {c}"),
                }),
            }
        };
        let user = field(format.user_col, "user")?;
        let item = field(format.item_col, "item")?;
        if let Some((c, threshold)) = rating_col {
            let raw = field(c, "rating")?;
            let rating: f64 = raw.parse().map_err(|_| DataError::Malformed {
                line: lineno,
                message: format!("rating {raw:?} is not a number"),
            })?;
            if rating < threshold {
                continue;
            }
        }
        pairs.push((users.intern(user), items.intern(item)));
    }
    if pairs.is_empty() {
        return Err(DataError::Empty);
    }
    InteractionMatrix::from_pairs(users, items, pairs)
}

/// Writes `user_id<TAB>item_id` lines sorted by id strings.
pub fn write_pairs<W: Write>(m: &InteractionMatrix, mut out: W) -> std::io::Result<()> {
    let mut lines: Vec<(&str, &str)> = m
        .entries()
        .map(|(u, i)| (m.users().id(u), m.items().id(i)))
        .collect();
    lines.sort_unstable();
    for (u, i) in lines {
        writeln!(out, "{u}\t{i}")?;
    }
    Ok(())
}
