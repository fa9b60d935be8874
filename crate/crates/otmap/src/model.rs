//! Serializable transport-map models produced by the estimators.
//!
//! All three estimator families — the grid-based potential estimator, the
//! kernel smoother, and the raw sample matching — produce a
//! [`TransportMapModel`]: a value that can map points of the source domain to
//! the target domain and that round-trips losslessly through JSON. The JSON
//! payload is self-describing via a `"kind"` field (`"wavelet"`, `"kernel"`,
//! or `"matching"`), so models written by one command can be read back by any
//! other without out-of-band context.

use std::path::Path;

use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::kernel::KernelModel;
use crate::samples::squared_distance;
use crate::{Error, Grid, Result, SampleSet, ScalarField, VectorField};

/// Fit log attached to a grid-potential model: the truncation scale, the
/// optimizer's iteration count and accepted-objective trace, the seed the
/// training data was drawn with (informational), whether the line search ever
/// failed, and whether the convexification step ran before taking gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletFitMeta {
    /// Number of detail levels retained in the truncated expansion.
    #[serde(rename = "J")]
    pub scale: usize,
    /// Accepted optimizer iterations.
    pub iters: usize,
    /// Objective value at the start and after every accepted iteration.
    pub objective_trace: Vec<f64>,
    /// Seed recorded for provenance of the training data (not used by the fit).
    pub seed: u64,
    /// True when some line search exhausted its halvings and the fit returned
    /// the best iterate found up to that point.
    #[serde(default)]
    pub line_search_failed: bool,
    /// True when the potential was convexified (double conjugation) before
    /// its gradient was taken.
    #[serde(default = "default_true")]
    pub envelope: bool,
}

fn default_true() -> bool {
    true
}

/// A transport map represented by the gradient of a grid-sampled potential,
/// evaluated by multilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletModel {
    potential: ScalarField,
    map: VectorField,
    meta: WaveletFitMeta,
}

impl WaveletModel {
    /// Wraps a fitted potential, its gradient field, and the fit log.
    ///
    /// # Errors
    ///
    /// The potential and the map must be sampled on the same grid.
    pub fn new(potential: ScalarField, map: VectorField, meta: WaveletFitMeta) -> Result<Self> {
        if potential.grid() != map.grid() {
            return Err(Error::invalid(
                "wavelet model",
                "potential and map must share one grid",
            ));
        }
        Ok(WaveletModel {
            potential,
            map,
            meta,
        })
    }

    /// The grid both fields are sampled on.
    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    /// The fitted (possibly convexified) potential.
    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    /// The map field (gradient of the potential).
    pub fn map(&self) -> &VectorField {
        &self.map
    }

    /// The fit log.
    pub fn meta(&self) -> &WaveletFitMeta {
        &self.meta
    }
}

#[derive(Deserialize)]
struct RawGridSpec {
    #[serde(rename = "box")]
    bounds: crate::Bounds,
    n: usize,
}

#[derive(Deserialize)]
struct RawWaveletModel {
    kind: String,
    grid: RawGridSpec,
    map_values: Vec<Vec<f64>>,
    potential_values: Vec<f64>,
    meta: WaveletFitMeta,
}

impl TryFrom<RawWaveletModel> for WaveletModel {
    type Error = Error;

    fn try_from(raw: RawWaveletModel) -> Result<Self> {
        if raw.kind != "wavelet" {
            return Err(Error::invalid(
                "wavelet model",
                format!("kind must be \"wavelet\", got {:?}", raw.kind),
            ));
        }
        let grid = Grid::new(raw.grid.bounds, raw.grid.n)?;
        let d = grid.dim();
        if raw.map_values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                context: "map values",
                expected: grid.node_count(),
                got: raw.map_values.len(),
            });
        }
        let mut flat = Vec::with_capacity(raw.map_values.len() * d);
        for row in &raw.map_values {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "map value components",
                    expected: d,
                    got: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let map = VectorField::new(grid.clone(), flat)?;
        let potential = ScalarField::new(grid, raw.potential_values)?;
        WaveletModel::new(potential, map, raw.meta)
    }
}

impl<'de> Deserialize<'de> for WaveletModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawWaveletModel::deserialize(deserializer)?;
        WaveletModel::try_from(raw).map_err(D::Error::custom)
    }
}

impl Serialize for WaveletModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct GridSpec<'a> {
            #[serde(rename = "box")]
            bounds: &'a crate::Bounds,
            n: usize,
        }
        let grid = self.grid();
        let rows: Vec<&[f64]> = self.map.values().chunks(grid.dim()).collect();
        let mut st = serializer.serialize_struct("WaveletModel", 5)?;
        st.serialize_field("kind", "wavelet")?;
        st.serialize_field(
            "grid",
            &GridSpec {
                bounds: grid.bounds(),
                n: grid.n(),
            },
        )?;
        st.serialize_field("map_values", &rows)?;
        st.serialize_field("potential_values", self.potential.values())?;
        st.serialize_field("meta", &self.meta)?;
        st.end()
    }
}

/// The raw matching estimator: each training point maps to its assigned
/// target point. Off-sample queries are an error unless a nearest-neighbor
/// extension is installed (see [`crate::ot::one_nn_extend`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingModel {
    train: SampleSet,
    mapped: SampleSet,
    extended: bool,
}

impl MatchingModel {
    /// Pairs each training point with its mapped target value.
    ///
    /// # Errors
    ///
    /// The two sets must have equal, positive size and equal dimension.
    pub fn new(train: SampleSet, mapped: SampleSet, extended: bool) -> Result<Self> {
        if train.len() != mapped.len() {
            return Err(Error::DimensionMismatch {
                context: "matching model pairs",
                expected: train.len(),
                got: mapped.len(),
            });
        }
        if train.dim() != mapped.dim() {
            return Err(Error::DimensionMismatch {
                context: "matching model dimension",
                expected: train.dim(),
                got: mapped.dim(),
            });
        }
        Ok(MatchingModel {
            train,
            mapped,
            extended,
        })
    }

    /// Training points (the only evaluable queries unless extended).
    pub fn train(&self) -> &SampleSet {
        &self.train
    }

    /// Mapped target values, index-aligned with the training points.
    pub fn mapped(&self) -> &SampleSet {
        &self.mapped
    }

    /// Whether off-sample queries fall back to the nearest training point.
    pub fn extended(&self) -> bool {
        self.extended
    }

    /// A copy of this model with the nearest-neighbor extension installed.
    pub fn with_extension(&self) -> MatchingModel {
        MatchingModel {
            train: self.train.clone(),
            mapped: self.mapped.clone(),
            extended: true,
        }
    }

    /// Index of the training point a query resolves to: the first exact
    /// coordinate match, or (when extended) the nearest training point with
    /// ties broken toward the smallest index.
    ///
    /// # Errors
    ///
    /// Off-sample query without the extension, or dimension mismatch.
    pub fn resolve(&self, query: &[f64]) -> Result<usize> {
        if query.len() != self.train.dim() {
            return Err(Error::DimensionMismatch {
                context: "matching query",
                expected: self.train.dim(),
                got: query.len(),
            });
        }
        for (i, point) in self.train.iter().enumerate() {
            if point == query {
                return Ok(i);
            }
        }
        if !self.extended {
            return Err(Error::invalid(
                "matching evaluation",
                "query is not a training point and no nearest-neighbor extension is installed",
            ));
        }
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, point) in self.train.iter().enumerate() {
            let dist = squared_distance(point, query);
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        Ok(best)
    }
}

#[derive(Deserialize)]
struct RawMatchingModel {
    kind: String,
    #[serde(rename = "X")]
    train: SampleSet,
    mapped: SampleSet,
    #[serde(default)]
    extended: bool,
}

impl TryFrom<RawMatchingModel> for MatchingModel {
    type Error = Error;

    fn try_from(raw: RawMatchingModel) -> Result<Self> {
        if raw.kind != "matching" {
            return Err(Error::invalid(
                "matching model",
                format!("kind must be \"matching\", got {:?}", raw.kind),
            ));
        }
        MatchingModel::new(raw.train, raw.mapped, raw.extended)
    }
}

impl<'de> Deserialize<'de> for MatchingModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawMatchingModel::deserialize(deserializer)?;
        MatchingModel::try_from(raw).map_err(D::Error::custom)
    }
}

impl Serialize for MatchingModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("MatchingModel", 4)?;
        st.serialize_field("kind", "matching")?;
        st.serialize_field("X", &self.train)?;
        st.serialize_field("mapped", &self.mapped)?;
        st.serialize_field("extended", &self.extended)?;
        st.end()
    }
}

/// A fitted transport-map estimator of any of the three families.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportMapModel {
    /// Gradient of a grid-sampled potential, interpolated.
    Wavelet(WaveletModel),
    /// Radial-basis-function regression of matched targets.
    Kernel(KernelModel),
    /// Raw point-to-point matching (optionally nearest-neighbor extended).
    Matching(MatchingModel),
}

impl TransportMapModel {
    /// The `kind` label used in the JSON payload and in result tables.
    pub fn kind_name(&self) -> &'static str {
        match self {
            TransportMapModel::Wavelet(_) => "wavelet",
            TransportMapModel::Kernel(_) => "kernel",
            TransportMapModel::Matching(_) => "matching",
        }
    }

    /// Dimension of the domain (and codomain) the model works in.
    pub fn dim(&self) -> usize {
        match self {
            TransportMapModel::Wavelet(m) => m.grid().dim(),
            TransportMapModel::Kernel(m) => m.train_x().dim(),
            TransportMapModel::Matching(m) => m.train().dim(),
        }
    }

    /// A short human-readable summary of the model's tuning parameters,
    /// suitable for one CSV cell (never contains commas or newlines).
    pub fn params_label(&self) -> String {
        match self {
            TransportMapModel::Wavelet(m) => format!("J={}", m.meta().scale),
            TransportMapModel::Kernel(m) => format!(
                "nu_kernel={:?};nu_ridge={:?}",
                m.params().nu_kernel(),
                m.params().nu_ridge()
            ),
            TransportMapModel::Matching(m) => {
                if m.extended() {
                    "extended=1nn".to_string()
                } else {
                    String::new()
                }
            }
        }
    }

    /// The wavelet payload, when this is a wavelet model.
    pub fn as_wavelet(&self) -> Option<&WaveletModel> {
        match self {
            TransportMapModel::Wavelet(m) => Some(m),
            _ => None,
        }
    }

    /// The kernel payload, when this is a kernel model.
    pub fn as_kernel(&self) -> Option<&KernelModel> {
        match self {
            TransportMapModel::Kernel(m) => Some(m),
            _ => None,
        }
    }

    /// The matching payload, when this is a matching model.
    pub fn as_matching(&self) -> Option<&MatchingModel> {
        match self {
            TransportMapModel::Matching(m) => Some(m),
            _ => None,
        }
    }

    /// Maps `query` through the model, filling `out` (length `dim`).
    ///
    /// # Errors
    ///
    /// Dimension mismatches; queries outside a grid model's box; off-sample
    /// queries of an unextended matching model.
    pub fn predict_into(&self, query: &[f64], out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "prediction output",
                expected: self.dim(),
                got: out.len(),
            });
        }
        match self {
            TransportMapModel::Wavelet(m) => m.map().interpolate_into(query, out),
            TransportMapModel::Kernel(m) => m.predict_into(query, out),
            TransportMapModel::Matching(m) => {
                let idx = m.resolve(query)?;
                out.copy_from_slice(m.mapped().point(idx));
                Ok(())
            }
        }
    }

    /// Maps `query` through the model.
    ///
    /// # Errors
    ///
    /// As [`TransportMapModel::predict_into`].
    pub fn predict(&self, query: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.predict_into(query, &mut out)?;
        Ok(out)
    }

    /// Maps every point of `queries` through the model.
    ///
    /// # Errors
    ///
    /// As [`TransportMapModel::predict_into`].
    pub fn predict_set(&self, queries: &SampleSet) -> Result<SampleSet> {
        let d = self.dim();
        let mut flat = vec![0.0; queries.len() * d];
        for (i, q) in queries.iter().enumerate() {
            self.predict_into(q, &mut flat[i * d..(i + 1) * d])?;
        }
        SampleSet::new(d, flat)
    }

    /// Serializes the model to a pretty-printed JSON string.
    ///
    /// # Errors
    ///
    /// Serialization failures (should not occur for valid models).
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a model of any kind from its JSON payload.
    ///
    /// # Errors
    ///
    /// Malformed JSON, a missing or unknown `kind`, or payload validation
    /// failures.
    pub fn from_json_str(text: &str) -> Result<TransportMapModel> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let kind = value
            .get("kind")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| {
                Error::invalid("model payload", "missing string field \"kind\"")
            })?;
        match kind {
            "wavelet" => Ok(TransportMapModel::Wavelet(serde_json::from_value(value)?)),
            "kernel" => Ok(TransportMapModel::Kernel(serde_json::from_value(value)?)),
            "matching" => Ok(TransportMapModel::Matching(serde_json::from_value(value)?)),
            other => Err(Error::invalid(
                "model payload",
                format!("unknown model kind {other:?}"),
            )),
        }
    }

    /// Writes the model as JSON to `path`.
    ///
    /// # Errors
    ///
    /// Serialization or file-system failures.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// Reads a model of any kind from a JSON file.
    ///
    /// # Errors
    ///
    /// File-system failures or payload problems as in
    /// [`TransportMapModel::from_json_str`].
    pub fn load(path: &Path) -> Result<TransportMapModel> {
        let text = std::fs::read_to_string(path)?;
        TransportMapModel::from_json_str(&text)
    }
}

impl Serialize for TransportMapModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TransportMapModel::Wavelet(m) => m.serialize(serializer),
            TransportMapModel::Kernel(m) => m.serialize(serializer),
            TransportMapModel::Matching(m) => m.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for TransportMapModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        let text = serde_json::to_string(&value).map_err(D::Error::custom)?;
        TransportMapModel::from_json_str(&text).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Bounds;

    fn tiny_wavelet_model() -> WaveletModel {
        let grid = Grid::new(Bounds::cube(-0.5, 1.5, 1).unwrap(), 5).unwrap();
        let potential = ScalarField::from_fn(grid.clone(), |x| 0.5 * x[0] * x[0] + 0.1);
        let map = potential.gradient();
        let meta = WaveletFitMeta {
            scale: 1,
            iters: 3,
            objective_trace: vec![1.0, 0.5, 0.40000000000000302, 0.1 + 0.2],
            seed: 42,
            line_search_failed: false,
            envelope: true,
        };
        WaveletModel::new(potential, map, meta).unwrap()
    }

    fn tiny_matching_model(extended: bool) -> MatchingModel {
        let train = SampleSet::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let mapped = SampleSet::new(2, vec![0.5, 0.5, 2.0, 0.0, 0.0, 2.0]).unwrap();
        MatchingModel::new(train, mapped, extended).unwrap()
    }

    #[test]
    fn wavelet_model_round_trips_through_json_bitwise() {
        let model = TransportMapModel::Wavelet(tiny_wavelet_model());
        let text = model.to_json_string().unwrap();
        assert!(text.contains("\"kind\": \"wavelet\""));
        let back = TransportMapModel::from_json_str(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn matching_model_round_trips_and_keeps_extension_flag() {
        for extended in [false, true] {
            let model = TransportMapModel::Matching(tiny_matching_model(extended));
            let text = model.to_json_string().unwrap();
            let back = TransportMapModel::from_json_str(&text).unwrap();
            assert_eq!(model, back);
            assert_eq!(back.as_matching().unwrap().extended(), extended);
        }
    }

    #[test]
    fn kernel_model_parses_through_the_unified_entry_point() {
        let x = SampleSet::new(1, vec![0.0, 1.0]).unwrap();
        let y = SampleSet::new(1, vec![0.0, 2.0]).unwrap();
        let params = crate::kernel::KernelParams::new(1.0, 1e-3).unwrap();
        let fitted = crate::kernel::fit(&x, &y, params).unwrap();
        let model = TransportMapModel::Kernel(fitted);
        let text = model.to_json_string().unwrap();
        let back = TransportMapModel::from_json_str(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(back.kind_name(), "kernel");
    }

    #[test]
    fn unknown_or_missing_kind_is_rejected_with_a_clear_error() {
        let missing = r#"{"grid": 1}"#;
        let err = TransportMapModel::from_json_str(missing).unwrap_err();
        assert!(err.to_string().contains("kind"), "{err}");
        let unknown = r#"{"kind": "spline"}"#;
        let err = TransportMapModel::from_json_str(unknown).unwrap_err();
        assert!(err.to_string().contains("spline"), "{err}");
    }

    #[test]
    fn mismatched_payload_shapes_are_rejected() {
        let model = TransportMapModel::Wavelet(tiny_wavelet_model());
        let mut value: serde_json::Value =
            serde_json::from_str(&model.to_json_string().unwrap()).unwrap();
        value["map_values"].as_array_mut().unwrap().pop();
        let text = serde_json::to_string(&value).unwrap();
        assert!(TransportMapModel::from_json_str(&text).is_err());
    }

    #[test]
    fn wavelet_prediction_interpolates_the_gradient_field() {
        let model = tiny_wavelet_model();
        let wrapped = TransportMapModel::Wavelet(model.clone());
        for q in [[-0.3], [0.1], [1.25]] {
            let direct = model.map().interpolate(&q).unwrap();
            let via = wrapped.predict(&q).unwrap();
            assert_eq!(direct, via);
        }
        assert!(wrapped.predict(&[2.5]).is_err());
    }

    #[test]
    fn matching_prediction_is_exact_on_sample_and_errs_off_sample() {
        let model = TransportMapModel::Matching(tiny_matching_model(false));
        assert_eq!(model.predict(&[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        let err = model.predict(&[0.5, 0.5]).unwrap_err();
        assert!(err.to_string().contains("not a training point"), "{err}");
    }

    #[test]
    fn extended_matching_takes_nearest_with_smallest_index_ties() {
        let model = TransportMapModel::Matching(tiny_matching_model(true));
        // Closest to (0.9, 0.1) is the second training point (1, 0).
        assert_eq!(model.predict(&[0.9, 0.1]).unwrap(), vec![2.0, 0.0]);
        // (0.5, 0.5) is equidistant from all three points: index 0 wins.
        assert_eq!(model.predict(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        // Exactly on a training point: that point's value, not a neighbor's.
        assert_eq!(model.predict(&[0.0, 1.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn params_labels_are_csv_safe() {
        let wavelet = TransportMapModel::Wavelet(tiny_wavelet_model());
        assert_eq!(wavelet.params_label(), "J=1");
        let matching = TransportMapModel::Matching(tiny_matching_model(true));
        assert_eq!(matching.params_label(), "extended=1nn");
        let x = SampleSet::new(1, vec![0.0]).unwrap();
        let y = SampleSet::new(1, vec![1.0]).unwrap();
        let params = crate::kernel::KernelParams::new(1e-9, 1e-5).unwrap();
        let kernel = TransportMapModel::Kernel(crate::kernel::fit(&x, &y, params).unwrap());
        let label = kernel.params_label();
        assert_eq!(label, "nu_kernel=1e-9;nu_ridge=1e-5");
        for model in [&wavelet, &matching, &kernel] {
            let label = model.params_label();
            assert!(!label.contains(',') && !label.contains('\n'), "{label}");
        }
    }
}
