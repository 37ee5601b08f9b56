//! The on-disk model file and shared text formatting.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypernet::{HypernetArch, HypernetModel};
use crate::problems::ProblemId;
use crate::scalarize::ScalarizationSpec;
use crate::train::RunConfig;

pub const FORMAT_VERSION: u64 = 1;
pub const SUPPORTED_VERSIONS: [u64; 1] = [FORMAT_VERSION];
pub const INIT_SCHEME: &str = "uniform-glorot, zero biases";

/// A real with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

/// Joins reals as one CSV row fragment.
pub fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSnapshot {
    pub lr: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub seed: u64,
    pub samples_per_step: usize,
    pub batch_size: usize,
    pub init: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub problem: ProblemId,
    pub arch: HypernetArch,
    pub scalarization: ScalarizationSpec,
    pub training: TrainingSnapshot,
    /// Little-endian `f64` array, base64.
    pub weights: String,
    pub weight_count: usize,
    pub created: String,
}

impl ModelFile {
    pub fn new(config: &RunConfig, model: &HypernetModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            problem: config.problem,
            arch: model.arch.clone(),
            scalarization: config.scalarization.clone(),
            training: TrainingSnapshot {
                lr: config.lr,
                alpha: config.alpha,
                iterations: config.iterations,
                seed: config.seed,
                samples_per_step: config.samples_per_step,
                batch_size: config.batch_size,
                init: INIT_SCHEME.into(),
            },
            weights: encode_weights(&model.weights),
            weight_count: model.weights.len(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn model(&self) -> Result<HypernetModel> {
        let weights = decode_weights(&self.weights)?;
        if weights.len() != self.weight_count {
            return Err(Error::Integrity(format!(
                "header says {} weights, payload holds {}",
                self.weight_count,
                weights.len()
            )));
        }
        if weights.len() != self.arch.param_count() {
            return Err(Error::Integrity(format!(
                "architecture needs {} weights, payload holds {}",
                self.arch.param_count(),
                weights.len()
            )));
        }
        HypernetModel::from_weights(self.arch.clone(), weights, self.training.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Integrity(format!("not a model document: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Integrity("missing format_version".into()))?;
        if !SUPPORTED_VERSIONS.contains(&version) {
            return Err(Error::Version {
                found: version,
                supported: SUPPORTED_VERSIONS.to_vec(),
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Integrity(format!("malformed model document: {e}")))?;
        file.model()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn encode_weights(weights: &[f64]) -> String {
    let bytes: Vec<u8> = weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_weights(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Integrity(format!("weights are not valid base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Integrity(format!(
            "weight payload of {} bytes is not a whole number of reals",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefs::PreferenceVector;
    use crate::problems::ProblemSpec;
    use crate::scalarize::ScalarKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> (RunConfig, HypernetModel) {
        let problem = ProblemSpec::new(ProblemId::Ex73).unwrap();
        let mut cfg = RunConfig::phn(&problem, ScalarKind::Cheby);
        cfg.seed = 77;
        let mut model = HypernetModel::build(cfg.arch.clone(), cfg.seed).unwrap();
        // awkward bit patterns survive too
        model.weights[0] = -0.0;
        model.weights[1] = f64::MIN_POSITIVE / 3.0;
        model.weights[2] = 1.0 / 3.0;
        (cfg, model)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (cfg, model) = sample();
        let file = ModelFile::new(&cfg, &model);
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap().model().unwrap();
        let bits = |w: &[f64]| w.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.weights), bits(&model.weights));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
            let r = PreferenceVector::normalized(&raw).unwrap();
            let a = model.forward(&r).unwrap();
            let b = back.forward(&r).unwrap();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn truncated_file_is_an_integrity_error() {
        let (cfg, model) = sample();
        let json = ModelFile::new(&cfg, &model).to_json().unwrap();
        let cut = &json[..json.len() / 2];
        assert!(matches!(ModelFile::from_json(cut), Err(Error::Integrity(_))));
    }

    #[test]
    fn corrupt_payloads_are_integrity_errors() {
        let (cfg, model) = sample();
        let mut file = ModelFile::new(&cfg, &model);
        file.weights.insert(3, '!');
        assert!(matches!(
            ModelFile::from_json(&file.to_json().unwrap()),
            Err(Error::Integrity(_))
        ));

        let mut file = ModelFile::new(&cfg, &model);
        file.weight_count += 1;
        assert!(matches!(
            ModelFile::from_json(&file.to_json().unwrap()),
            Err(Error::Integrity(_))
        ));

        let mut file = ModelFile::new(&cfg, &model);
        file.weights = encode_weights(&model.weights[1..]);
        file.weight_count -= 1;
        assert!(matches!(
            ModelFile::from_json(&file.to_json().unwrap()),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn future_version_names_supported_versions() {
        let (cfg, model) = sample();
        let mut file = ModelFile::new(&cfg, &model);
        file.format_version = 2;
        match ModelFile::from_json(&file.to_json().unwrap()) {
            Err(e @ Error::Version { .. }) => assert!(e.to_string().contains("[1]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reals_format_with_seventeen_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678] {
            assert_eq!(fmt_real(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_row(&[0.5, 0.0]), "5.0000000000000000e-1,0");
    }
}
