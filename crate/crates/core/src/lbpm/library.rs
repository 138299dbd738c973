use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Vec2;

/// One surveyed marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Marker {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            x,
            y,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surveyed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    accuracy: Option<String>,
}

/// Read-only table of marker IDs and world positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerLibrary {
    markers: Vec<Marker>,
    index: HashMap<String, usize>,
    pub surveyed: Option<String>,
    pub accuracy: Option<String>,
}

/// Marker pair closer than the separation threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingWarning {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

impl MarkerLibrary {
    /// Builds a library; IDs must be unique.
    pub fn new(markers: Vec<Marker>) -> Result<Self> {
        let mut index = HashMap::with_capacity(markers.len());
        for (i, m) in markers.iter().enumerate() {
            if !(m.x.is_finite() && m.y.is_finite()) {
                return Err(Error::Input(format!(
                    "marker {:?} has non-finite position",
                    m.id
                )));
            }
            if index.insert(m.id.clone(), i).is_some() {
                return Err(Error::DuplicateMarker(m.id.clone()));
            }
        }
        Ok(Self {
            markers,
            index,
            surveyed: None,
            accuracy: None,
        })
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn get(&self, i: usize) -> Option<&Marker> {
        self.markers.get(i)
    }

    pub fn position(&self, i: usize) -> Vec2 {
        self.markers[i].position()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownMarker(id.to_string()))
    }

    /// Nearest marker to `p` and its distance.
    pub fn nearest(&self, p: Vec2) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in self.markers.iter().enumerate() {
            let d2 = (m.x - p.x).powi(2) + (m.y - p.y).powi(2);
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Indices of markers within `range` of `p`.
    pub fn within(&self, p: Vec2, range: f64) -> impl Iterator<Item = usize> + '_ {
        let r2 = range * range;
        self.markers
            .iter()
            .enumerate()
            .filter(move |(_, m)| (m.x - p.x).powi(2) + (m.y - p.y).powi(2) <= r2)
            .map(|(i, _)| i)
    }

    /// Pairs of markers closer than `min_distance`.
    pub fn spacing_warnings(&self, min_distance: f64) -> Vec<SpacingWarning> {
        let mut out = Vec::new();
        for (i, a) in self.markers.iter().enumerate() {
            for b in &self.markers[i + 1..] {
                let d = (a.position() - b.position()).norm();
                if d < min_distance {
                    out.push(SpacingWarning {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        distance: d,
                    });
                }
            }
        }
        out
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: LibraryFile = serde_json::from_str(s)?;
        let mut lib = Self::new(f.markers)?;
        lib.surveyed = f.surveyed;
        lib.accuracy = f.accuracy;
        Ok(lib)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LibraryFile {
            markers: self.markers.clone(),
            surveyed: self.surveyed.clone(),
            accuracy: self.accuracy.clone(),
        })?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_are_rejected() {
        let r = MarkerLibrary::new(vec![Marker::new("a", 0.0, 0.0), Marker::new("a", 1.0, 0.0)]);
        assert!(matches!(r, Err(Error::DuplicateMarker(_))));
    }

    #[test]
    fn json_round_trip() {
        let json = r#"{ "markers": [ {"id": "m1", "x": 1.5, "y": -2.0},
                                     {"id": "m2", "x": 4.0, "y": 0.0} ],
                        "surveyed": "2024-03-01" }"#;
        let lib = MarkerLibrary::from_json(json).unwrap();
        assert_eq!(lib.len(), 2);
        assert_eq!(lib.index_of("m2").unwrap(), 1);
        assert_eq!(lib.surveyed.as_deref(), Some("2024-03-01"));
        let back = MarkerLibrary::from_json(&lib.to_json().unwrap()).unwrap();
        assert_eq!(back, lib);
        assert!(lib.index_of("zz").is_err());
    }

    #[test]
    fn nearest_and_spacing() {
        let lib = MarkerLibrary::new(vec![
            Marker::new("a", 0.0, 0.0),
            Marker::new("b", 0.6, 0.0),
            Marker::new("c", 5.0, 5.0),
        ])
        .unwrap();
        let (i, d) = lib.nearest(Vec2::new(4.0, 5.0)).unwrap();
        assert_eq!(i, 2);
        assert!((d - 1.0).abs() < 1e-12);
        let w = lib.spacing_warnings(1.0);
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].a.as_str(), w[0].b.as_str()), ("a", "b"));
        assert_eq!(lib.within(Vec2::zeros(), 1.0).count(), 2);
    }
}
