use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::{Homography, Quad};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutCell {
    pub column: String,
    pub row: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl LayoutCell {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.w, self.h)
    }
}

/// Cell rectangles of the blank reference card, in template pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<LayoutCell>,
}

impl TemplateLayout {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width as f64, self.height as f64);
        let mut keys = HashSet::new();
        for c in &self.cells {
            if !(c.w > 0.0 && c.h > 0.0 && c.x >= 0.0 && c.y >= 0.0 && c.x + c.w <= w && c.y + c.h <= h) {
                return Err(Error::Schema(format!("cell {}/{} outside {}x{} template", c.column, c.row, self.width, self.height)));
            }
            if !keys.insert((c.column.as_str(), c.row)) {
                return Err(Error::Schema(format!("duplicate cell {}/{}", c.column, c.row)));
            }
        }
        for (i, a) in self.cells.iter().enumerate() {
            for b in &self.cells[i + 1..] {
                if a.rect().overlaps(&b.rect()) {
                    return Err(Error::Schema(format!("cells {}/{} and {}/{} overlap", a.column, a.row, b.column, b.row)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let layout: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn cell(&self, column: &str, row: usize) -> Option<&LayoutCell> {
        self.cells.iter().find(|c| c.column == column && c.row == row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRegion {
    pub doc_id: String,
    pub quad: Quad,
    pub column_name: String,
    pub row_index: usize,
}

impl CellRegion {
    pub fn file_name(&self) -> String {
        cell_file_name(&self.doc_id, &self.column_name, self.row_index)
    }
}

pub fn cell_file_name(doc_id: &str, column: &str, row: usize) -> String {
    format!("{doc_id}_{column}_{row}.png")
}

/// Maps every layout rectangle into the scan through the inverse of the
/// scan-to-template homography.
pub fn project_layout(doc_id: &str, layout: &TemplateLayout, scan_to_template: &Homography) -> Result<Vec<CellRegion>> {
    let inv = scan_to_template.inverse()?;
    layout
        .cells
        .iter()
        .map(|c| {
            let mapped = c.rect().corners().map(|p| inv.apply(p));
            if mapped.iter().any(Option::is_none) {
                return Err(Error::DegenerateQuad(format!("cell {}/{} maps to infinity", c.column, c.row)));
            }
            let quad = Quad::new(mapped.map(|p| p.expect("checked")))?;
            Ok(CellRegion { doc_id: doc_id.to_string(), quad, column_name: c.column.clone(), row_index: c.row })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> TemplateLayout {
        TemplateLayout {
            width: 300,
            height: 200,
            cells: vec![
                LayoutCell { column: "LAND".into(), row: 0, x: 10.0, y: 20.0, w: 100.0, h: 40.0 },
                LayoutCell { column: "LAND".into(), row: 1, x: 10.0, y: 60.0, w: 100.0, h: 40.0 },
                LayoutCell { column: "BUILDINGS".into(), row: 0, x: 110.0, y: 20.0, w: 100.0, h: 40.0 },
            ],
        }
    }

    #[test]
    fn validation_rules() {
        layout().validate().unwrap();
        let mut l = layout();
        l.cells[1].row = 0;
        assert!(l.validate().is_err());
        let mut l = layout();
        l.cells[2].x = 100.0;
        assert!(l.validate().is_err());
        let mut l = layout();
        l.cells[0].w = 400.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn identity_projection_returns_rectangles() {
        let regions = project_layout("d", &layout(), &Homography::identity()).unwrap();
        assert_eq!(regions.len(), 3);
        for (r, c) in regions.iter().zip(&layout().cells) {
            assert_eq!(r.quad, c.rect().to_quad().unwrap());
            assert_eq!((r.column_name.as_str(), r.row_index), (c.column.as_str(), c.row));
        }
    }

    #[test]
    fn translation_projects_through_inverse() {
        let h = Homography::translation(7.0, -3.0);
        let regions = project_layout("d", &layout(), &h).unwrap();
        for (r, c) in regions.iter().zip(&layout().cells) {
            let expect = c.rect().translated(-7.0, 3.0).to_quad().unwrap();
            for (a, b) in r.quad.corners.iter().zip(expect.corners.iter()) {
                assert!(a.distance(b) < 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_and_file_names() {
        let l = layout();
        let text = serde_json::to_string(&l).unwrap();
        assert!(text.contains("\"column\":\"LAND\""));
        let back: TemplateLayout = serde_json::from_str(&text).unwrap();
        assert_eq!(back, l);
        assert_eq!(cell_file_name("c12", "BUILDINGS", 0), "c12_BUILDINGS_0.png");
    }
}
