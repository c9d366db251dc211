use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::Deserializer;
use serde_json::{Map, Value};

use super::{ObjectInstance, Region, Scene, SceneError};

const REGIONS_KEY: &str = "regions";
const SCENE_ID_KEY: &str = "scene_id";

/// Top-level entries in document order, duplicates kept so they can be reported.
struct Entries(Vec<(String, Value)>);

impl<'de> serde::Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of instance_id to object record")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    parse_scene(&text, stem, &path.display().to_string())
}

/// Parses a scene document. `default_id` is used when the document carries no `scene_id`.
pub fn parse_scene(text: &str, default_id: &str, origin: &str) -> Result<Scene, SceneError> {
    let entries: Entries = serde_json::from_str(text).map_err(|e| SceneError::Syntax {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let field_err = |field: &str, msg: String| SceneError::Field {
        path: origin.to_string(),
        field: field.to_string(),
        msg,
    };

    let mut scene = Scene { scene_id: default_id.to_string(), ..Default::default() };
    for (key, value) in entries.0 {
        match key.as_str() {
            REGIONS_KEY => {
                scene.regions = serde_json::from_value::<Vec<Region>>(value)
                    .map_err(|e| field_err(REGIONS_KEY, e.to_string()))?;
            }
            SCENE_ID_KEY => {
                scene.scene_id = value
                    .as_str()
                    .ok_or_else(|| field_err(SCENE_ID_KEY, "expected a string".into()))?
                    .to_string();
            }
            _ => {
                let obj: ObjectInstance =
                    serde_json::from_value(value).map_err(|e| field_err(&key, e.to_string()))?;
                if scene.objects.values().any(|o| o.instance_id == obj.instance_id)
                    || scene.objects.contains_key(&key)
                {
                    return Err(SceneError::Validation(format!("duplicate instance_id `{key}`")));
                }
                scene.objects.insert(key, obj);
            }
        }
    }
    scene.validate()?;
    Ok(scene)
}

fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(_), _) if !n.is_f64() => Value::Number(n),
            (_, Some(f)) => serde_json::Number::from_f64(round9(f)).map(Value::Number).unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, canonical(v))).collect();
            Value::Object(sorted.into_iter().collect::<Map<String, Value>>())
        }
        other => other,
    }
}

/// Canonical rendering: sorted keys, floats rounded to 1e-9, two-space indent.
pub fn scene_to_string(scene: &Scene) -> String {
    let mut top = BTreeMap::new();
    for (id, obj) in &scene.objects {
        top.insert(id.clone(), serde_json::to_value(obj).expect("object records serialize"));
    }
    top.insert(
        REGIONS_KEY.to_string(),
        serde_json::to_value(&scene.regions).expect("regions serialize"),
    );
    top.insert(SCENE_ID_KEY.to_string(), Value::String(scene.scene_id.clone()));
    let doc = canonical(Value::Object(top.into_iter().collect()));
    let mut s = serde_json::to_string_pretty(&doc).expect("value serializes");
    s.push('\n');
    s
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    std::fs::write(path, scene_to_string(scene)).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })
}
