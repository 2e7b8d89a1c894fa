//! Label polygons as GeoJSON FeatureCollections.
//!
//! Each feature needs a `Polygon` or `MultiPolygon` geometry and a string
//! property `class`, matched case-insensitively against the scheme. The
//! optional `provenance` property is `manual` (default), `osm` or `pseudo`.
//! Coordinates are taken to be in the raster's projected meters.

use std::path::Path;

use lulc_core::{ClassScheme, LabelPolygon, Provenance};
use serde_json::{json, Value};

use crate::{Error, Result};

/// Features that could not become polygons, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Ignored {
    pub feature: usize,
    pub reason: String,
}

pub fn read_polygons(path: &Path, scheme: &ClassScheme) -> Result<(Vec<LabelPolygon>, Vec<Ignored>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    parse_collection(&doc, scheme).map_err(|m| Error::format(path, m))
}

fn parse_collection(doc: &Value, scheme: &ClassScheme) -> std::result::Result<(Vec<LabelPolygon>, Vec<Ignored>), String> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err("expected a GeoJSON FeatureCollection".into());
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or("FeatureCollection has no `features` array")?;
    let mut polys = Vec::new();
    let mut ignored = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let class_name = props
            .and_then(|p| p.get("class"))
            .and_then(Value::as_str)
            .ok_or_else(|| format!("feature {i} has no string `class` property"))?;
        let class = scheme
            .index_of(class_name)
            .ok_or_else(|| format!("feature {i}: class `{class_name}` is not in scheme `{}`", scheme.name))?;
        if class == 0 {
            return Err(format!("feature {i}: polygons cannot be labeled Unlabeled"));
        }
        let provenance = match props.and_then(|p| p.get("provenance")) {
            None | Some(Value::Null) => Provenance::Manual,
            Some(v) => v
                .as_str()
                .and_then(Provenance::parse)
                .ok_or_else(|| format!("feature {i}: unknown provenance {v}"))?,
        };
        let geometry = f.get("geometry").unwrap_or(&Value::Null);
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
        let coords = geometry.get("coordinates");
        let parts: Vec<&Value> = match (kind, coords) {
            ("Polygon", Some(c)) => vec![c],
            ("MultiPolygon", Some(Value::Array(ps))) => ps.iter().collect(),
            _ => {
                ignored.push(Ignored {
                    feature: i,
                    reason: format!("unsupported geometry `{kind}`"),
                });
                continue;
            }
        };
        for part in parts {
            match parse_rings(part) {
                Ok(mut rings) if !rings.is_empty() => {
                    let exterior = rings.remove(0);
                    polys.push(LabelPolygon::new(exterior, class, provenance).with_holes(rings));
                }
                Ok(_) => ignored.push(Ignored {
                    feature: i,
                    reason: "polygon without rings".into(),
                }),
                Err(reason) => ignored.push(Ignored { feature: i, reason }),
            }
        }
    }
    Ok((polys, ignored))
}

fn parse_rings(v: &Value) -> std::result::Result<Vec<Vec<[f64; 2]>>, String> {
    let rings = v.as_array().ok_or("polygon coordinates must be an array of rings")?;
    rings
        .iter()
        .map(|ring| {
            let pts = ring.as_array().ok_or("ring must be an array of positions")?;
            let mut out = pts
                .iter()
                .map(|p| {
                    let xy = p.as_array().filter(|a| a.len() >= 2).ok_or("position needs x and y")?;
                    match (xy[0].as_f64(), xy[1].as_f64()) {
                        (Some(x), Some(y)) => Ok([x, y]),
                        _ => Err("non-numeric coordinate".to_string()),
                    }
                })
                .collect::<std::result::Result<Vec<_>, String>>()?;
            if out.len() > 1 && out.first() == out.last() {
                out.pop();
            }
            Ok(out)
        })
        .collect()
}

fn closed(ring: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = ring.to_vec();
    if let Some(&first) = ring.first() {
        out.push(first);
    }
    out
}

pub fn to_geojson(polys: &[LabelPolygon], scheme: &ClassScheme) -> Value {
    let features: Vec<Value> = polys
        .iter()
        .map(|p| {
            let mut rings = vec![closed(&p.exterior)];
            rings.extend(p.holes.iter().map(|h| closed(h)));
            json!({
                "type": "Feature",
                "properties": {
                    "class": scheme.name_of(p.class).unwrap_or("?"),
                    "provenance": p.provenance.as_str(),
                },
                "geometry": { "type": "Polygon", "coordinates": rings },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn write_polygons(path: &Path, polys: &[LabelPolygon], scheme: &ClassScheme) -> Result<()> {
    let mut text = serde_json::to_string(&to_geojson(polys, scheme)).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
