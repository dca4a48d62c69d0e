//! Oscillogram classifiers and the per-component model registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use diagnostica_neural::{cam, interpolate, z_normalize, CamMethod, FcnModel, Heatmap, TimeSeries};

use crate::{CircuitError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub anomalous: bool,
    /// In [0,1].
    pub uncertainty: f64,
    /// Same length as the submitted series.
    pub heatmap: Option<Heatmap>,
}

pub trait Classifier: Send + Sync {
    fn model_id(&self) -> &str;
    fn classify(&self, component: &str, series: &[f64]) -> Result<Verdict>;
}

/// Trained FCN with a class activation map for the predicted class.
pub struct FcnClassifier {
    model_id: String,
    model: FcnModel,
    method: CamMethod,
}

impl FcnClassifier {
    pub fn new(model_id: impl Into<String>, model: FcnModel, method: CamMethod) -> Self {
        FcnClassifier { model_id: model_id.into(), model, method }
    }

    pub fn model(&self) -> &FcnModel {
        &self.model
    }
}

impl Classifier for FcnClassifier {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn classify(&self, _component: &str, series: &[f64]) -> Result<Verdict> {
        let raw = TimeSeries::new(series.to_vec());
        let n = self.model.config().input_length;
        let input = if raw.len() == n {
            z_normalize(&raw)?
        } else {
            z_normalize(&raw)?;
            z_normalize(&TimeSeries::new(interpolate(series, n)))?
        };
        let prediction = self.model.predict(&input)?;
        let mut heatmap = cam(&self.model, &input, Some(prediction.best_guess), self.method)?;
        if heatmap.values.len() != series.len() {
            heatmap.values = interpolate(&heatmap.values, series.len());
        }
        Ok(Verdict { anomalous: prediction.is_anomalous(), uncertainty: prediction.uncertainty, heatmap: Some(heatmap) })
    }
}

/// Answers from a fixed set of anomalous components; for tests and dry runs.
#[derive(Debug, Clone, Default)]
pub struct StubClassifier {
    pub anomalous: BTreeSet<String>,
}

impl StubClassifier {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(anomalous: I) -> Self {
        StubClassifier { anomalous: anomalous.into_iter().map(Into::into).collect() }
    }
}

impl Classifier for StubClassifier {
    fn model_id(&self) -> &str {
        "stub"
    }

    fn classify(&self, component: &str, series: &[f64]) -> Result<Verdict> {
        z_normalize(&TimeSeries::new(series.to_vec()))?;
        Ok(Verdict { anomalous: self.anomalous.contains(component), uncertainty: 0.0, heatmap: None })
    }
}

/// Component name to classifier.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<String, Arc<dyn Classifier>>,
}

impl fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.models.iter().map(|(c, m)| (c, m.model_id()))).finish()
    }
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, component: impl Into<String>, classifier: Arc<dyn Classifier>) {
        self.models.insert(component.into(), classifier);
    }

    /// Loads a saved FCN; the model id is the file stem.
    pub fn register_file(&mut self, component: &str, path: impl AsRef<Path>, method: CamMethod) -> Result<()> {
        let path = path.as_ref();
        let model = FcnModel::load(path).map_err(|e| CircuitError::Model {
            component: component.to_string(),
            message: format!("{}: {e}", path.display()),
        })?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| component.to_string());
        self.register(component, Arc::new(FcnClassifier::new(id, model, method)));
        Ok(())
    }

    pub fn get(&self, component: &str) -> Option<&Arc<dyn Classifier>> {
        self.models.get(component)
    }

    pub fn components(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use diagnostica_neural::FcnConfig;

    use super::*;

    fn wave(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.3).sin()).collect()
    }

    #[test]
    fn stub_answers_by_name() {
        let stub = StubClassifier::new(["C_A"]);
        assert!(stub.classify("C_A", &wave(16)).unwrap().anomalous);
        assert!(!stub.classify("C_C", &wave(16)).unwrap().anomalous);
        assert!(matches!(stub.classify("C_A", &[1.0; 16]), Err(CircuitError::DegenerateSeries)));
    }

    #[test]
    fn fcn_heatmap_matches_submitted_length() {
        let model = FcnModel::new(FcnConfig::tiny(32), 1).unwrap();
        let c = FcnClassifier::new("m1", model, CamMethod::GradCam);
        for n in [32, 50, 20] {
            let v = c.classify("x", &wave(n)).unwrap();
            let h = v.heatmap.unwrap();
            assert_eq!(h.values.len(), n);
            assert!(h.values.iter().all(|x| (0.0..=1.0).contains(x)));
            assert!((0.0..=1.0).contains(&v.uncertainty));
        }
        assert!(matches!(c.classify("x", &[2.0; 32]), Err(CircuitError::DegenerateSeries)));
    }

    #[test]
    fn unreadable_model_file_names_component() {
        let mut r = ModelRegistry::new();
        let err = r.register_file("C_D", "/nonexistent/model.json", CamMethod::GradCam).unwrap_err();
        assert!(matches!(&err, CircuitError::Model { component, .. } if component == "C_D"), "{err}");
        assert!(r.is_empty());
    }
}
