//! One entry point over the five learners: fitting from a config, prediction
//! and persistence through [`ModelEnvelope`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::data::{Bag, MimlDataset};
use crate::dataio::{Config, ModelEnvelope};
use crate::dmimlsvm::{self, DMimlConfig, DMimlSvmModel};
use crate::error::{MimlError, Result};
use crate::insdif::{self, InsDifConfig, InsDifModel};
use crate::metrics::LabelScores;
use crate::mimlboost::{self, BoostConfig, BoostModel};
use crate::mimlsvm::{self, MimlSvmConfig, MimlSvmModel};
use crate::subcod::{self, SubCodConfig, SubCodModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    MimlBoost,
    MimlSvm,
    DMimlSvm,
    InsDif,
    SubCod,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::MimlBoost,
        Algorithm::MimlSvm,
        Algorithm::DMimlSvm,
        Algorithm::InsDif,
        Algorithm::SubCod,
    ];

    /// Tag used on the command line and in model envelopes.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MimlBoost => "mimlboost",
            Algorithm::MimlSvm => "mimlsvm",
            Algorithm::DMimlSvm => "dmimlsvm",
            Algorithm::InsDif => "insdif",
            Algorithm::SubCod => "subcod",
        }
    }

    pub fn config_keys(self) -> &'static [&'static str] {
        match self {
            Algorithm::MimlBoost => &mimlboost::CONFIG_KEYS,
            Algorithm::MimlSvm => &mimlsvm::CONFIG_KEYS,
            Algorithm::DMimlSvm => &dmimlsvm::CONFIG_KEYS,
            Algorithm::InsDif => &insdif::CONFIG_KEYS,
            Algorithm::SubCod => &subcod::CONFIG_KEYS,
        }
    }

    /// Config key holding the learner's random seed, if it has one.
    pub fn seed_key(self) -> Option<&'static str> {
        self.config_keys()
            .iter()
            .copied()
            .find(|k| k.ends_with(".seed"))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = MimlError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| MimlError::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    MimlBoost(BoostModel),
    MimlSvm(MimlSvmModel),
    DMimlSvm(DMimlSvmModel),
    InsDif(InsDifModel),
    SubCod(SubCodModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::MimlBoost(_) => Algorithm::MimlBoost,
            Model::MimlSvm(_) => Algorithm::MimlSvm,
            Model::DMimlSvm(_) => Algorithm::DMimlSvm,
            Model::InsDif(_) => Algorithm::InsDif,
            Model::SubCod(_) => Algorithm::SubCod,
        }
    }

    pub fn n_labels(&self) -> usize {
        match self {
            Model::MimlBoost(m) => m.n_labels,
            Model::MimlSvm(m) => m.n_labels,
            Model::DMimlSvm(m) => m.n_labels,
            Model::InsDif(m) => m.n_labels,
            Model::SubCod(m) => m.n_classes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::MimlBoost(m) => m.dim,
            Model::MimlSvm(m) => m.dim,
            Model::DMimlSvm(m) => m.dim,
            Model::InsDif(m) => m.dim,
            Model::SubCod(m) => m.dim,
        }
    }

    pub fn predict(&self, bag: &Bag) -> Result<LabelScores> {
        match self {
            Model::MimlBoost(m) => m.predict(bag),
            Model::MimlSvm(m) => m.predict(bag),
            Model::DMimlSvm(m) => m.predict(bag),
            Model::InsDif(m) => m.predict_bag(bag),
            Model::SubCod(m) => m.predict(bag),
        }
    }

    /// Predictions for every bag of `ds`, after checking that the label count
    /// and dimension agree with the model.
    pub fn predict_dataset(&self, ds: &MimlDataset) -> Result<Vec<LabelScores>> {
        if ds.n_labels() != self.n_labels() {
            return Err(MimlError::InvalidDataset(format!(
                "model predicts {} labels but the data has {}",
                self.n_labels(),
                ds.n_labels()
            )));
        }
        if ds.dim() != self.dim() {
            return Err(MimlError::DimensionMismatch {
                expected: self.dim(),
                found: ds.dim(),
            });
        }
        ds.bags().map(|b| self.predict(b)).collect()
    }
}

/// A fitted model with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub hyperparameters: BTreeMap<String, String>,
}

impl TrainedModel {
    pub fn to_envelope(&self) -> Result<ModelEnvelope> {
        let (tag, hp) = (self.model.algorithm().name(), self.hyperparameters.clone());
        match &self.model {
            Model::MimlBoost(m) => ModelEnvelope::wrap(tag, hp, m),
            Model::MimlSvm(m) => ModelEnvelope::wrap(tag, hp, m),
            Model::DMimlSvm(m) => ModelEnvelope::wrap(tag, hp, m),
            Model::InsDif(m) => ModelEnvelope::wrap(tag, hp, m),
            Model::SubCod(m) => ModelEnvelope::wrap(tag, hp, m),
        }
    }

    pub fn from_envelope(env: &ModelEnvelope) -> Result<Self> {
        let model = match env.algorithm.parse::<Algorithm>() {
            Ok(Algorithm::MimlBoost) => Model::MimlBoost(env.payload()?),
            Ok(Algorithm::MimlSvm) => Model::MimlSvm(env.payload()?),
            Ok(Algorithm::DMimlSvm) => Model::DMimlSvm(env.payload()?),
            Ok(Algorithm::InsDif) => Model::InsDif(env.payload()?),
            Ok(Algorithm::SubCod) => Model::SubCod(env.payload()?),
            Err(_) => {
                return Err(MimlError::ModelFormat(format!(
                    "unknown algorithm tag {:?}",
                    env.algorithm
                )))
            }
        };
        Ok(Self {
            model,
            hyperparameters: env.hyperparameters.clone(),
        })
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(self.to_envelope()?.to_text())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_envelope(&ModelEnvelope::from_text(text)?)
    }
}

/// Fits `algorithm` on `ds` with settings from `cfg`. Keys belonging to other
/// learners are rejected.
pub fn train(algorithm: Algorithm, ds: &MimlDataset, cfg: &Config) -> Result<TrainedModel> {
    cfg.check_keys(algorithm.config_keys())?;
    let (model, hyperparameters) = match algorithm {
        Algorithm::MimlBoost => {
            let c = BoostConfig::from_config(cfg)?;
            (
                Model::MimlBoost(mimlboost::fit(ds, &c)?),
                c.hyperparameters(),
            )
        }
        Algorithm::MimlSvm => {
            let c = MimlSvmConfig::from_config(cfg)?;
            (Model::MimlSvm(mimlsvm::fit(ds, &c)?), c.hyperparameters())
        }
        Algorithm::DMimlSvm => {
            let c = DMimlConfig::from_config(cfg)?;
            (Model::DMimlSvm(dmimlsvm::fit(ds, &c)?), c.hyperparameters())
        }
        Algorithm::InsDif => {
            let c = InsDifConfig::from_config(cfg)?;
            (Model::InsDif(insdif::fit(ds, &c)?), c.hyperparameters())
        }
        Algorithm::SubCod => {
            let c = SubCodConfig::from_config(cfg)?;
            (Model::SubCod(subcod::fit(ds, &c)?), c.hyperparameters())
        }
    };
    Ok(TrainedModel {
        model,
        hyperparameters,
    })
}
