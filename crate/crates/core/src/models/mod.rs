//! Built-in model zoo, the subprocess bridge and model files.

mod external;
mod linear;
mod tree;

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{ModelHandle, ModelInfo};

pub use external::{external_model, parse_scores, ExternalModel, ExternalModelConfig};
pub use linear::{train_linear, LinearModel};
pub use tree::{
    train_gbm, train_random_forest, EnsembleMode, ForestParams, GbmParams, SplitRule, Tree,
    TreeEnsemble, TreeNode, DEFAULT_MIN_LEAF,
};

/// Version tag written into every model file.
pub const MODEL_FORMAT: &str = "ibd-model/1";

fn info_value(info: &ModelInfo) -> Value {
    Value::Object(
        info.hyperparameters
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect(),
    )
}

/// Serializes a built-in model to its JSON document.
pub fn model_to_json(handle: &ModelHandle) -> Result<String> {
    let (family, body) = if let Some(m) = handle.downcast_ref::<TreeEnsemble>() {
        (handle.info().family.clone(), serde_json::to_value(m)?)
    } else if let Some(m) = handle.downcast_ref::<LinearModel>() {
        ("linear".to_string(), serde_json::to_value(m)?)
    } else {
        return Err(Error::Unsupported);
    };
    let mut doc = Map::new();
    doc.insert("format".into(), Value::String(MODEL_FORMAT.into()));
    doc.insert("family".into(), Value::String(family));
    doc.insert("name".into(), Value::String(handle.name().to_string()));
    doc.insert("hyperparameters".into(), info_value(handle.info()));
    let Value::Object(fields) = body else {
        unreachable!("models serialize as objects")
    };
    doc.extend(fields);
    let mut s = serde_json::to_string(&Value::Object(doc))?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<ModelHandle> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("not a model document: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Format("model document is not an object".into()))?;
    match obj.get("format").and_then(Value::as_str) {
        Some(MODEL_FORMAT) => {}
        Some(other) => return Err(Error::Format(format!("unknown format version `{other}`"))),
        None => return Err(Error::Format("missing format tag".into())),
    }
    let family = obj
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Format("missing family".into()))?
        .to_string();
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .unwrap_or(&family)
        .to_string();
    let mut info = ModelInfo::new(name, family.clone());
    if let Some(Value::Object(h)) = obj.get("hyperparameters") {
        for (k, v) in h {
            info = info.with(k, v.as_str().unwrap_or_default());
        }
    }
    let bad = |e: serde_json::Error| Error::Format(format!("{family} model: {e}"));
    match family.as_str() {
        "gbm" | "random_forest" => {
            let m: TreeEnsemble = serde_json::from_value(doc.clone()).map_err(bad)?;
            // re-run structural checks
            let mut m = TreeEnsemble::new(
                m.schema,
                m.mode,
                m.max_depth,
                m.learning_rate,
                m.init_score,
                m.trees,
                ModelInfo::default(),
            )?;
            m.set_info(info);
            Ok(ModelHandle::new(m))
        }
        "linear" => {
            let m: LinearModel = serde_json::from_value(doc.clone()).map_err(bad)?;
            let mut m = LinearModel::new(m.schema, m.intercept, m.weights)?;
            m.set_info(info);
            Ok(ModelHandle::new(m))
        }
        other => Err(Error::Format(format!("unknown model family `{other}`"))),
    }
}

pub fn save_model(handle: &ModelHandle, path: &Path) -> Result<()> {
    let text = model_to_json(handle)?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: &Path) -> Result<ModelHandle> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    model_from_json(&text)
}

/// Feature schema a built-in model was trained on.
pub fn model_schema(handle: &ModelHandle) -> Option<&crate::dataset::Schema> {
    if let Some(m) = handle.downcast_ref::<TreeEnsemble>() {
        Some(&m.schema)
    } else {
        handle.downcast_ref::<LinearModel>().map(|m| &m.schema)
    }
}
