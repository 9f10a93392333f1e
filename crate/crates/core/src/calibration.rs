//! Post-hoc logit calibration against a neutral reference vector.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{predict_logits, ModelParams};
use crate::neutral::{neutral_logit_vector, NeutralGraph};
use crate::numeric::{argmax_rows, softmax_rows};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    None,
    Subtract,
    Scale {
        lambda: f64,
    },
    /// Divides by `sigma`, or by the population standard deviation of the
    /// reference entries when `sigma` is absent.
    Normalize {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    #[default]
    Logits,
    PostSoftmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    #[serde(flatten)]
    pub variant: Variant,
    #[serde(default)]
    pub position: Position,
}

impl CalibrationSpec {
    pub const NONE: Self = Self::at_logits(Variant::None);
    pub const SUBTRACT: Self = Self::at_logits(Variant::Subtract);

    pub const fn at_logits(variant: Variant) -> Self {
        Self {
            variant,
            position: Position::Logits,
        }
    }

    pub fn scale(lambda: f64) -> Self {
        Self::at_logits(Variant::Scale { lambda })
    }

    pub fn normalize() -> Self {
        Self::at_logits(Variant::Normalize { sigma: None })
    }

    pub fn post_softmax(self) -> Self {
        Self {
            position: Position::PostSoftmax,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::Scale { lambda } if !(lambda.is_finite() && lambda > 0.0) => {
                Err(Error::Config(format!("scale lambda must be finite and > 0, got {lambda}")))
            }
            Variant::Normalize { sigma: Some(s) } if !(s.is_finite() && s > 0.0) => {
                Err(Error::Config(format!("normalize sigma must be finite and > 0, got {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Stable identifier, e.g. `subtract@logits` or `scale(0.75)@post_softmax`.
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CalibrationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            Variant::None => write!(f, "none")?,
            Variant::Subtract => write!(f, "subtract")?,
            Variant::Scale { lambda } => write!(f, "scale({lambda})")?,
            Variant::Normalize { sigma: None } => write!(f, "normalize")?,
            Variant::Normalize { sigma: Some(s) } => write!(f, "normalize({s})")?,
        }
        match self.position {
            Position::Logits => write!(f, "@logits"),
            Position::PostSoftmax => write!(f, "@post_softmax"),
        }
    }
}

impl FromStr for CalibrationSpec {
    type Err = Error;

    /// Parses `variant[(arg)][@position]`, also accepting `scale:0.8`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse calibration spec '{s}'"));
        let (head, position) = match s.split_once('@') {
            Some((h, "logits")) => (h, Position::Logits),
            Some((h, "post_softmax")) => (h, Position::PostSoftmax),
            Some(_) => return Err(bad()),
            None => (s, Position::Logits),
        };
        let (name, arg) = if let Some((n, rest)) = head.split_once('(') {
            (n, Some(rest.strip_suffix(')').ok_or_else(bad)?))
        } else if let Some((n, a)) = head.split_once(':') {
            (n, Some(a))
        } else {
            (head, None)
        };
        let arg = arg
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .transpose()?;
        let variant = match (name.trim(), arg) {
            ("none", None) => Variant::None,
            ("subtract", None) => Variant::Subtract,
            ("scale", Some(lambda)) => Variant::Scale { lambda },
            ("normalize", sigma) => Variant::Normalize { sigma },
            _ => return Err(bad()),
        };
        let spec = Self { variant, position };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedOutput {
    pub probabilities: Array2<f64>,
    pub predicted_labels: Vec<usize>,
    /// Present for the logits position only.
    pub corrected_logits: Option<Array2<f64>>,
}

fn population_std(v: &Array1<f64>) -> f64 {
    v.std(0.0)
}

/// Applies `variant` to `values` against `reference`, row-wise.
fn correct(values: &Array2<f64>, reference: &Array1<f64>, variant: Variant) -> Result<Array2<f64>> {
    Ok(match variant {
        Variant::None => values.clone(),
        Variant::Subtract => values - reference,
        Variant::Scale { lambda } => (values - reference) * lambda,
        Variant::Normalize { sigma } => {
            let s = sigma.unwrap_or_else(|| population_std(reference));
            if s == 0.0 || !s.is_finite() {
                return Err(Error::DegenerateReference(
                    "neutral logits have zero standard deviation".into(),
                ));
            }
            (values - reference) / s
        }
    })
}

/// Calibrates logits against the pooled neutral vector.
///
/// At the logits position the correction is applied before the softmax. At
/// the post-softmax position it is applied to probabilities; negative
/// results are clamped to zero and rows renormalized.
pub fn calibrate(
    logits: &Array2<f64>,
    neutral_vec: &Array1<f64>,
    spec: &CalibrationSpec,
) -> Result<CalibratedOutput> {
    spec.validate()?;
    if logits.ncols() != neutral_vec.len() {
        return Err(Error::Shape(format!(
            "logits have {} classes, neutral vector has {}",
            logits.ncols(),
            neutral_vec.len()
        )));
    }
    match spec.position {
        Position::Logits => {
            let corrected = correct(logits, neutral_vec, spec.variant)?;
            let probabilities = softmax_rows(&corrected);
            Ok(CalibratedOutput {
                predicted_labels: argmax_rows(&probabilities),
                probabilities,
                corrected_logits: Some(corrected),
            })
        }
        Position::PostSoftmax => {
            let probs = softmax_rows(logits);
            let probabilities = if spec.variant == Variant::None {
                probs
            } else {
                let reference = softmax_rows(&neutral_vec.clone().insert_axis(ndarray::Axis(0)))
                    .row(0)
                    .to_owned();
                let mut adjusted = correct(&probs, &reference, spec.variant)?;
                for (i, mut row) in adjusted.rows_mut().into_iter().enumerate() {
                    row.mapv_inplace(|v| v.max(0.0));
                    let sum = row.sum();
                    if !(sum > 0.0) {
                        return Err(Error::DegenerateRow(i));
                    }
                    row /= sum;
                }
                adjusted
            };
            Ok(CalibratedOutput {
                predicted_labels: argmax_rows(&probabilities),
                probabilities,
                corrected_logits: None,
            })
        }
    }
}

pub fn predict_calibrated(
    params: &ModelParams,
    graph: &crate::graph::Graph,
    neutral: &NeutralGraph,
    spec: &CalibrationSpec,
) -> Result<CalibratedOutput> {
    calibrate(
        &predict_logits(params, graph)?,
        &neutral_logit_vector(params, neutral)?,
        spec,
    )
}

/// Directional diagnostics for a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub majority_class: usize,
    pub majority_prob_before: f64,
    pub majority_prob_after: f64,
    pub majority_prob_decreased: bool,
    /// Mean over nodes of `corrected - original`, per class.
    pub logit_shift: Vec<f64>,
    /// Class pairs `(a, b)` with `neutral[a] < neutral[b]`.
    pub ordered_pairs: usize,
    /// Pairs among those where `shift[a] > shift[b]` fails.
    pub ordering_violations: Vec<(usize, usize)>,
}

pub fn check_bias_reduction(
    logits: &Array2<f64>,
    calibrated: &CalibratedOutput,
    neutral_vec: &Array1<f64>,
    majority_class: usize,
) -> Result<BiasReport> {
    let c = logits.ncols();
    if majority_class >= c || neutral_vec.len() != c || calibrated.probabilities.dim() != logits.dim() {
        return Err(Error::Shape("bias check inputs disagree in shape".into()));
    }
    let n = logits.nrows().max(1) as f64;
    let before = softmax_rows(logits);
    let majority_prob_before = before.column(majority_class).sum() / n;
    let majority_prob_after = calibrated.probabilities.column(majority_class).sum() / n;
    let logit_shift: Vec<f64> = match &calibrated.corrected_logits {
        Some(corrected) => (0..c)
            .map(|k| (&corrected.column(k) - &logits.column(k)).sum() / n)
            .collect(),
        None => vec![0.0; c],
    };
    let mut ordered_pairs = 0;
    let mut ordering_violations = Vec::new();
    if calibrated.corrected_logits.is_some() {
        for a in 0..c {
            for b in 0..c {
                if neutral_vec[a] < neutral_vec[b] {
                    ordered_pairs += 1;
                    if !(logit_shift[a] > logit_shift[b]) {
                        ordering_violations.push((a, b));
                    }
                }
            }
        }
    }
    Ok(BiasReport {
        majority_class,
        majority_prob_before,
        majority_prob_after,
        majority_prob_decreased: majority_prob_after < majority_prob_before,
        logit_shift,
        ordered_pairs,
        ordering_violations,
    })
}

/// Writes `node_id,predicted_label,p_0..p_{C-1}` with a header row.
pub fn write_predictions_csv(output: &CalibratedOutput, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let c = output.probabilities.ncols();
    let mut out = String::from("node_id,predicted_label");
    for k in 0..c {
        write!(out, ",p_{k}").unwrap();
    }
    out.push('\n');
    for (i, row) in output.probabilities.rows().into_iter().enumerate() {
        write!(out, "{i},{}", output.predicted_labels[i]).unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the predicted labels back, indexed by node id.
pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |what: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad {what}")))
        };
        let id = field("node_id")?;
        let label = field("predicted_label")?;
        rows.push((id, label));
    }
    rows.sort_unstable();
    if rows.iter().enumerate().any(|(k, (id, _))| k != *id) {
        return Err(Error::parse(path, 1, "node ids must cover 0..N exactly once"));
    }
    Ok(rows.into_iter().map(|(_, l)| l).collect())
}
