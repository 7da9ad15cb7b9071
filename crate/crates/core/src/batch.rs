use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Per-point optimization record.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTelemetry<T> {
    pub iterations: usize,
    /// Density of the target class at the emitted point (density attacks only).
    pub final_likelihood: Option<T>,
    /// Attacker's objective for optimisation-based baselines.
    pub objective: Option<T>,
    pub bandwidth: Option<T>,
    pub hit_cap: bool,
    pub wall_seconds: f64,
}

impl<T> PointTelemetry<T> {
    pub fn untouched() -> Self {
        Self {
            iterations: 0,
            final_likelihood: None,
            objective: None,
            bandwidth: None,
            hit_cap: false,
            wall_seconds: 0.0,
        }
    }
}

/// Crafted points, the labels they are injected with (`y_p`) and the class
/// each one was built from (`y_t`). Labels are internal indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonBatch<T> {
    pub points: Matrix<T>,
    pub labels: Vec<usize>,
    pub target_classes: Vec<usize>,
    pub telemetry: Vec<PointTelemetry<T>>,
}

impl<T: Scalar> PoisonBatch<T> {
    pub fn empty(d: usize) -> Self {
        Self {
            points: Matrix::zeros(0, d),
            labels: Vec::new(),
            target_classes: Vec::new(),
            telemetry: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, point: &[T], label: usize, target: usize, telemetry: PointTelemetry<T>) -> Result<()> {
        self.points.push_row(point)?;
        self.labels.push(label);
        self.target_classes.push(target);
        self.telemetry.push(telemetry);
        Ok(())
    }

    /// Mean bandwidth over points that used one.
    pub fn mean_bandwidth(&self) -> Option<f64> {
        let hs: Vec<f64> = self
            .telemetry
            .iter()
            .filter_map(|t| t.bandwidth.map(|h| h.as_f64()))
            .collect();
        (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64)
    }

    /// `y_t,y_p,iters,final_p,f0..f{d-1}`; classes written as source identifiers,
    /// `final_p` left empty where no density was evaluated.
    pub fn write_csv<W: Write>(&self, class_map: &[u32], mut out: W) -> Result<()> {
        let lookup = |l: usize| {
            class_map.get(l).copied().ok_or(Error::InvalidLabel {
                label: l,
                limit: class_map.len(),
            })
        };
        let io = |e: std::io::Error| Error::io("poison batch csv", e);
        let mut header = String::from("y_t,y_p,iters,final_p");
        for j in 0..self.points.cols() {
            header.push_str(&format!(",f{j}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for i in 0..self.len() {
            let t = &self.telemetry[i];
            let p = t.final_likelihood.map(|p| p.to_string()).unwrap_or_default();
            write!(
                out,
                "{},{},{},{}",
                lookup(self.target_classes[i])?,
                lookup(self.labels[i])?,
                t.iterations,
                p
            )
            .map_err(io)?;
            for v in self.points.row(i) {
                write!(out, ",{v}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        Ok(())
    }
}
