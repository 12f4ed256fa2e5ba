//! A single type for every fitted model, and the model file format.
//!
//! A model file is JSON: `{"format_version": 1, "kind": "<kind>", "payload": {...}}`
//! where the payload is the fitted model of that kind.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cart::{fit_cart, CartConfig, CartTree};
use crate::ensembles::{
    fit_booging, fit_bt, fit_rf, BoogingConfig, BoogingModel, BtConfig, BtModel, RfConfig, RfModel,
};
use crate::error::{Error, Result};
use crate::lasso::{fit_lasso_cv, LassoConfig, LassoModel};
use crate::sgt::{fit_sgt, SgtConfig, SgtModel};
use crate::tabular::{Dataset, FeatureMatrix};

pub const FORMAT_VERSION: u32 = 1;

pub trait Regressor {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;
    fn n_features(&self) -> usize;
}

/// A learner and its fixed hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
pub enum ModelSpec {
    Cart(CartConfig),
    Sgt(SgtConfig),
    Rf(RfConfig),
    Bt(BtConfig),
    Booging(BoogingConfig),
    /// Penalty chosen by internal cross-validation.
    Lasso(LassoConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Cart(_) => "cart",
            ModelSpec::Sgt(_) => "sgt",
            ModelSpec::Rf(_) => "rf",
            ModelSpec::Bt(_) => "bt",
            ModelSpec::Booging(_) => "booging",
            ModelSpec::Lasso(_) => "lasso",
        }
    }

    /// Same learner with its seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::Cart(c) => c.seed = seed,
            ModelSpec::Sgt(c) => c.seed = seed,
            ModelSpec::Rf(c) => c.seed = seed,
            ModelSpec::Bt(c) => c.seed = seed,
            ModelSpec::Booging(c) => c.seed = seed,
            ModelSpec::Lasso(c) => c.seed = seed,
        }
        self
    }

    pub fn fit(&self, train: &Dataset) -> Result<Model> {
        Ok(match self {
            ModelSpec::Cart(c) => Model::Cart(fit_cart(train, c)?),
            ModelSpec::Sgt(c) => Model::Sgt(fit_sgt(train, c)?),
            ModelSpec::Rf(c) => Model::Rf(fit_rf(train, c)?),
            ModelSpec::Bt(c) => Model::Bt(fit_bt(train, c)?),
            ModelSpec::Booging(c) => Model::Booging(fit_booging(train, c)?),
            ModelSpec::Lasso(c) => Model::Lasso(fit_lasso_cv(train, c)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Cart(CartTree),
    Sgt(SgtModel),
    Rf(RfModel),
    Bt(BtModel),
    Booging(BoogingModel),
    Lasso(LassoModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Cart(_) => "cart",
            Model::Sgt(_) => "sgt",
            Model::Rf(_) => "rf",
            Model::Bt(_) => "bt",
            Model::Booging(_) => "booging",
            Model::Lasso(_) => "lasso",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_json_with_features(None)
    }

    /// Model file text, optionally recording the training feature names so
    /// prediction inputs can be matched by column name.
    pub fn to_json_with_features(&self, feature_names: Option<&[String]>) -> Result<String> {
        let payload = match self {
            Model::Cart(m) => serde_json::to_value(m)?,
            Model::Sgt(m) => serde_json::to_value(m)?,
            Model::Rf(m) => serde_json::to_value(m)?,
            Model::Bt(m) => serde_json::to_value(m)?,
            Model::Booging(m) => serde_json::to_value(m)?,
            Model::Lasso(m) => serde_json::to_value(m)?,
        };
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            kind: self.kind().to_string(),
            feature_names: feature_names.map(<[String]>::to_vec),
            payload,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::from_json_with_features(text)?.0)
    }

    /// The model and the feature names stored with it, if any.
    pub fn from_json_with_features(text: &str) -> Result<(Self, Option<Vec<String>>)> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(file.format_version));
        }
        let p = file.payload;
        let model = match file.kind.as_str() {
            "cart" => Model::Cart(serde_json::from_value(p)?),
            "sgt" => Model::Sgt(serde_json::from_value(p)?),
            "rf" => Model::Rf(serde_json::from_value(p)?),
            "bt" => Model::Bt(serde_json::from_value(p)?),
            "booging" => Model::Booging(serde_json::from_value(p)?),
            "lasso" => Model::Lasso(serde_json::from_value(p)?),
            other => return Err(Error::InvalidData(format!("unknown model kind `{other}`"))),
        };
        if let Some(names) = &file.feature_names {
            if names.len() != model.n_features() {
                return Err(Error::InvalidData(format!(
                    "model file lists {} feature names for a model with {} features",
                    names.len(),
                    model.n_features()
                )));
            }
        }
        Ok((model, file.feature_names))
    }

    pub fn save(&self, path: impl AsRef<Path>, feature_names: Option<&[String]>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_with_features(feature_names)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<Vec<String>>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_with_features(&text)
    }
}

impl Regressor for Model {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            Model::Cart(m) => m.predict(x),
            Model::Sgt(m) => m.predict(x),
            Model::Rf(m) => m.predict(x),
            Model::Bt(m) => m.predict(x),
            Model::Booging(m) => m.predict(x),
            Model::Lasso(m) => m.predict(x),
        }
    }

    fn n_features(&self) -> usize {
        match self {
            Model::Cart(m) => m.n_features,
            Model::Sgt(m) => m.n_features,
            Model::Rf(m) => m.n_features,
            Model::Bt(m) => m.n_features,
            Model::Booging(m) => m.n_features(),
            Model::Lasso(m) => m.n_features(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
    payload: serde_json::Value,
}
