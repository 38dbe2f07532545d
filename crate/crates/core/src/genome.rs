//! Genotype encoding for gait control and leg morphology parameters.
//!
//! An individual is a vector of 10 genes, each normalized to [0, 1]. The
//! first eight genes control the gait, the last two extend the femur and
//! tibia segments. Decoding maps each gene linearly onto its physical range;
//! encoding inverts the map. Feasibility caps the commanded forward speed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of genes in a genotype.
pub const GENE_COUNT: usize = 10;

/// Commanded-speed cap: step_length x gait_frequency, in metres per minute.
pub const SPEED_LIMIT_M_PER_MIN: f64 = 10.0;

/// Gene indices of the morphology parameters (femur and tibia extension).
pub const MORPHOLOGY_GENES: std::ops::Range<usize> = 8..10;

/// Gene indices of the control parameters.
pub const CONTROL_GENES: std::ops::Range<usize> = 0..8;

/// Physical range of each gene, in genotype order.
const GENE_RANGES: [(&str, f64, f64); GENE_COUNT] = [
    ("step_length", 0.005, 0.300),
    ("step_height", 0.025, 0.075),
    ("step_smoothing", 0.0, 0.050),
    ("gait_frequency", 0.2, 2.0),
    ("lift_duration", 0.05, 0.20),
    ("wag_phase", -0.2, 0.2),
    ("wag_x_amp", 0.0, 0.050),
    ("wag_y_amp", 0.0, 0.050),
    ("femur_length", 0.0, 0.025),
    ("tibia_length", 0.0, 0.095),
];

/// Name of the parameter decoded from gene `index`.
pub fn gene_name(index: usize) -> &'static str {
    GENE_RANGES[index].0
}

/// Errors raised by genotype decoding and encoding.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenomeError {
    #[error("gene {index} ({name}) is {value}, outside [0, 1]")]
    GeneOutOfRange {
        index: usize,
        name: &'static str,
        value: f64,
    },
    #[error("{name} is {value}, outside [{lo}, {hi}]")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

/// A normalized individual: 10 genes in [0, 1].
///
/// Gene order is fixed: step_length, step_height, step_smoothing,
/// gait_frequency, lift_duration, wag_phase, wag_x_amp, wag_y_amp,
/// femur extension, tibia extension. Serializes as a plain JSON array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genotype(pub [f64; GENE_COUNT]);

impl Genotype {
    /// Maps every gene onto its physical range.
    ///
    /// Fails if any gene lies outside [0, 1].
    pub fn decode(&self) -> Result<GaitParams, GenomeError> {
        let mut values = [0.0; GENE_COUNT];
        for (index, (&gene, out)) in self.0.iter().zip(values.iter_mut()).enumerate() {
            let (name, lo, hi) = GENE_RANGES[index];
            if !(0.0..=1.0).contains(&gene) {
                return Err(GenomeError::GeneOutOfRange {
                    index,
                    name,
                    value: gene,
                });
            }
            // Lerp form so gene 0 and 1 land exactly on the range bounds.
            *out = lo * (1.0 - gene) + hi * gene;
        }
        Ok(GaitParams::from_array(values))
    }

    /// True when the genotype decodes and respects the speed cap.
    pub fn is_feasible(&self) -> bool {
        self.decode().map(|p| p.is_feasible()).unwrap_or(false)
    }
}

/// Decoded gait and morphology parameters, in physical units.
///
/// Lengths are metres, `gait_frequency` is Hz, `lift_duration` and
/// `wag_phase` are cycle fractions. `femur_ext` and `tibia_ext` extend the
/// leg segments beyond their shortest configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub step_length: f64,
    pub step_height: f64,
    pub step_smoothing: f64,
    pub gait_frequency: f64,
    pub lift_duration: f64,
    pub wag_phase: f64,
    pub wag_x_amp: f64,
    pub wag_y_amp: f64,
    #[serde(rename = "femur_length")]
    pub femur_ext: f64,
    #[serde(rename = "tibia_length")]
    pub tibia_ext: f64,
}

impl GaitParams {
    fn from_array(v: [f64; GENE_COUNT]) -> Self {
        GaitParams {
            step_length: v[0],
            step_height: v[1],
            step_smoothing: v[2],
            gait_frequency: v[3],
            lift_duration: v[4],
            wag_phase: v[5],
            wag_x_amp: v[6],
            wag_y_amp: v[7],
            femur_ext: v[8],
            tibia_ext: v[9],
        }
    }

    fn to_array(self) -> [f64; GENE_COUNT] {
        [
            self.step_length,
            self.step_height,
            self.step_smoothing,
            self.gait_frequency,
            self.lift_duration,
            self.wag_phase,
            self.wag_x_amp,
            self.wag_y_amp,
            self.femur_ext,
            self.tibia_ext,
        ]
    }

    /// Inverse of [`Genotype::decode`].
    ///
    /// Fails if any parameter lies outside its physical range.
    pub fn encode(&self) -> Result<Genotype, GenomeError> {
        let values = self.to_array();
        let mut genes = [0.0; GENE_COUNT];
        for (index, (&value, gene)) in values.iter().zip(genes.iter_mut()).enumerate() {
            let (name, lo, hi) = GENE_RANGES[index];
            if value < lo || value > hi {
                return Err(GenomeError::ParamOutOfRange {
                    name,
                    value,
                    lo,
                    hi,
                });
            }
            // Clamp shaves off rounding dust at the range bounds.
            *gene = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
        Ok(Genotype(genes))
    }

    /// Commanded forward speed, metres per minute.
    pub fn speed_product(&self) -> f64 {
        self.step_length * self.gait_frequency * 60.0
    }

    /// Speed cap check; the cap itself is feasible.
    pub fn is_feasible(&self) -> bool {
        self.speed_product() <= SPEED_LIMIT_M_PER_MIN
    }
}
