use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ThemeError;

const BUNDLED: &str = include_str!("../../data/taxonomy.csv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: String,
    pub name: String,
    pub description: String,
}

/// Ordered set of themes an abstract can be labelled with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeTaxonomy {
    pub themes: Vec<Theme>,
}

impl ThemeTaxonomy {
    /// The eight-theme default shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv(BUNDLED.as_bytes()).expect("bundled taxonomy is valid")
    }

    /// Validates ids and names: both non-empty and unique.
    pub fn new(themes: Vec<Theme>) -> Result<Self, ThemeError> {
        if themes.is_empty() {
            return Err(ThemeError::Format {
                row: 1,
                message: "taxonomy has no themes".into(),
            });
        }
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for (i, t) in themes.iter().enumerate() {
            let row = i + 2;
            if t.id.is_empty() || t.name.is_empty() {
                return Err(ThemeError::Format {
                    row,
                    message: "empty theme id or name".into(),
                });
            }
            if !ids.insert(t.id.as_str()) {
                return Err(ThemeError::Format {
                    row,
                    message: format!("duplicate theme id '{}'", t.id),
                });
            }
            if !names.insert(t.name.as_str()) {
                return Err(ThemeError::Format {
                    row,
                    message: format!("duplicate theme name '{}'", t.name),
                });
            }
        }
        Ok(ThemeTaxonomy { themes })
    }

    /// Reads `theme_id,name,description` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ThemeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| ThemeError::Format {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| ThemeError::Format {
                    row: 1,
                    message: format!("missing column '{name}'"),
                })
        };
        let (ci, cn, cd) = (col("theme_id")?, col("name")?, col("description")?);
        let mut themes = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| ThemeError::Format {
                row: i + 2,
                message: e.to_string(),
            })?;
            let get = |c: usize| row.get(c).unwrap_or("").to_string();
            themes.push(Theme {
                id: get(ci),
                name: get(cn),
                description: get(cd),
            });
        }
        Self::new(themes)
    }

    /// Loads either a taxonomy file or an edited reconciliation worksheet.
    pub fn import(path: &Path) -> Result<Self, ThemeError> {
        let text = std::fs::read_to_string(path)?;
        let header = text.lines().next().unwrap_or("");
        if header.split(',').any(|h| h.trim() == "final_name") {
            super::import_worksheet(text.as_bytes())
        } else {
            Self::from_csv(text.as_bytes())
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["theme_id", "name", "description"])
            .expect("in-memory write");
        for t in &self.themes {
            w.write_record([&t.id, &t.name, &t.description])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Short content hash; assignments record it so a taxonomy swap is visible.
    pub fn version(&self) -> String {
        crate::sha256_hex(self.to_csv())[..16].to_string()
    }

    pub fn len(&self) -> usize {
        self.themes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.themes.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.themes.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn by_id(&self, id: &str) -> Option<&Theme> {
        self.themes.iter().find(|t| t.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&Theme> {
        self.themes.iter().find(|t| t.name == name)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.themes.iter().position(|t| t.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_has_eight_themes() {
        let t = ThemeTaxonomy::bundled();
        assert_eq!(t.len(), 8);
        assert_eq!(t.themes[0].id, "T1");
        assert_eq!(t.by_id("T6").unwrap().name, "Patient-Centered Experiences and Advocacy");
        assert_eq!(ThemeTaxonomy::from_csv(t.to_csv().as_bytes()).unwrap(), t);
        assert_eq!(t.version(), ThemeTaxonomy::bundled().version());
    }

    #[test]
    fn duplicate_ids_are_rejected_with_row() {
        let csv = "theme_id,name,description\nA,x,\nA,y,\n";
        match ThemeTaxonomy::from_csv(csv.as_bytes()) {
            Err(ThemeError::Format { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }
}
