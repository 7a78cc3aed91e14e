//! Training data: (angle, stiffness) inputs and the two bellows pressures.

use thiserror::Error;

use crate::plant::{PRESSURE_MAX, PRESSURE_MIN};

/// Header of the dataset CSV interchange format.
pub const DATASET_CSV_HEADER: &str = "q_deg,s_nm_per_rad,p1_bar,p2_bar";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("mismatched record counts: {inputs} inputs, {outputs_i} channel-I outputs, {outputs_ii} channel-II outputs")]
    LengthMismatch {
        inputs: usize,
        outputs_i: usize,
        outputs_ii: usize,
    },
    #[error("dataset needs at least 2 records, got {0}")]
    TooFew(usize),
    #[error("record {index}: pressure {value} bar outside [{PRESSURE_MIN}, {PRESSURE_MAX}]")]
    PressureOutOfRange { index: usize, value: f64 },
    #[error("record {0}: non-finite value")]
    NonFinite(usize),
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Which bellows pressure a GP models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Agonist pressure `p_1`.
    I,
    /// Antagonist pressure `p_2`.
    II,
}

impl Channel {
    pub fn index(self) -> u64 {
        match self {
            Channel::I => 0,
            Channel::II => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::I => "I",
            Channel::II => "II",
        }
    }
}

/// The training set: `n` records of inputs `(q in deg, s in Nm/rad)` with
/// the two bellows pressures in bar as outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<[f64; 2]>,
    outputs_i: Vec<f64>,
    outputs_ii: Vec<f64>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<[f64; 2]>,
        outputs_i: Vec<f64>,
        outputs_ii: Vec<f64>,
    ) -> Result<Self, DataError> {
        if inputs.len() != outputs_i.len() || inputs.len() != outputs_ii.len() {
            return Err(DataError::LengthMismatch {
                inputs: inputs.len(),
                outputs_i: outputs_i.len(),
                outputs_ii: outputs_ii.len(),
            });
        }
        if inputs.len() < 2 {
            return Err(DataError::TooFew(inputs.len()));
        }
        for (index, ([q, s], (p1, p2))) in inputs
            .iter()
            .zip(outputs_i.iter().zip(&outputs_ii))
            .enumerate()
        {
            if !(q.is_finite() && s.is_finite() && p1.is_finite() && p2.is_finite()) {
                return Err(DataError::NonFinite(index));
            }
            for &p in [p1, p2] {
                if !(PRESSURE_MIN..=PRESSURE_MAX).contains(&p) {
                    return Err(DataError::PressureOutOfRange { index, value: p });
                }
            }
        }
        Ok(Dataset {
            inputs,
            outputs_i,
            outputs_ii,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `(q in deg, s in Nm/rad)` input rows.
    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.inputs
    }

    /// Pressures of the requested bellows, in bar.
    pub fn outputs(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::I => &self.outputs_i,
            Channel::II => &self.outputs_ii,
        }
    }

    /// New dataset containing only the given records (training splits).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, DataError> {
        Dataset::new(
            indices.iter().map(|&i| self.inputs[i]).collect(),
            indices.iter().map(|&i| self.outputs_i[i]).collect(),
            indices.iter().map(|&i| self.outputs_ii[i]).collect(),
        )
    }

    /// Serializes as CSV with header [`DATASET_CSV_HEADER`]. Floats use the
    /// shortest round-trip decimal form, independent of locale.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(DATASET_CSV_HEADER);
        out.push('\n');
        for (([q, s], p1), p2) in self
            .inputs
            .iter()
            .zip(&self.outputs_i)
            .zip(&self.outputs_ii)
        {
            out.push_str(&format!("{q},{s},{p1},{p2}\n"));
        }
        out
    }

    /// Parses the CSV format written by [`Dataset::to_csv`]. Errors carry
    /// 1-based line numbers.
    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == DATASET_CSV_HEADER => {}
            Some((_, header)) => {
                return Err(DataError::Csv {
                    line: 1,
                    message: format!(
                        "expected header `{DATASET_CSV_HEADER}`, found `{header}`"
                    ),
                })
            }
            None => {
                return Err(DataError::Csv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        let mut inputs = Vec::new();
        let mut outputs_i = Vec::new();
        let mut outputs_ii = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(DataError::Csv {
                    line: line_no,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let mut values = [0.0; 4];
            for (v, field) in values.iter_mut().zip(&fields) {
                *v = field.trim().parse::<f64>().map_err(|e| DataError::Csv {
                    line: line_no,
                    message: format!("`{field}`: {e}"),
                })?;
            }
            inputs.push([values[0], values[1]]);
            outputs_i.push(values[2]);
            outputs_ii.push(values[3]);
        }
        Dataset::new(inputs, outputs_i, outputs_ii)
    }
}
