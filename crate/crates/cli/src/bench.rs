//! Per-frame latency measurement for the extraction and prediction phases.

use std::time::Instant;

use fer_core::features::extract;
use fer_core::geometry::LandmarkSet;
use fer_core::imaging::GrayImage;
use fer_core::mlp::MlpModel;
use fer_core::Result;
use serde::Serialize;

/// Summary of one phase, in seconds per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl PhaseStats {
    /// Statistics of a non-empty sample of durations.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "no timing samples");
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self {
            mean: sorted.iter().sum::<f64>() / n as f64,
            min: sorted[0],
            max: sorted[n - 1],
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub iterations: usize,
    pub feature_extraction: PhaseStats,
    pub prediction: PhaseStats,
    pub total: PhaseStats,
    /// `1 / total.mean`.
    pub fps: f64,
}

pub struct Frame {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
}

/// Times extraction and prediction of every frame, `iterations` times, after
/// one untimed warm-up pass.
pub fn run_bench(model: &MlpModel, frames: &[Frame], iterations: usize) -> Result<BenchReport> {
    assert!(iterations >= 1 && !frames.is_empty());
    for f in frames {
        model.predict(&extract(&f.image, &f.landmarks)?)?;
    }

    let capacity = frames.len() * iterations;
    let mut ext = Vec::with_capacity(capacity);
    let mut pred = Vec::with_capacity(capacity);
    let mut total = Vec::with_capacity(capacity);
    for _ in 0..iterations {
        for f in frames {
            let t0 = Instant::now();
            let fv = extract(&f.image, &f.landmarks)?;
            let t1 = Instant::now();
            std::hint::black_box(model.predict(&fv)?);
            let t2 = Instant::now();
            ext.push((t1 - t0).as_secs_f64());
            pred.push((t2 - t1).as_secs_f64());
            total.push((t2 - t0).as_secs_f64());
        }
    }
    let total = PhaseStats::from_samples(&total);
    Ok(BenchReport {
        frames: frames.len(),
        iterations,
        feature_extraction: PhaseStats::from_samples(&ext),
        prediction: PhaseStats::from_samples(&pred),
        fps: 1.0 / total.mean,
        total,
    })
}

impl BenchReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{:<20}{:>12}{:>12}{:>12}{:>12}\n",
            "Phase", "Mean (s)", "Min (s)", "Max (s)", "Median (s)"
        );
        for (name, s) in [
            ("Feature Extraction", &self.feature_extraction),
            ("Prediction", &self.prediction),
            ("Total", &self.total),
        ] {
            out.push_str(&format!(
                "{name:<20}{:>12.6}{:>12.6}{:>12.6}{:>12.6}\n",
                s.mean, s.min, s.max, s.median
            ));
        }
        out.push_str(&format!("FPS: {:.1}\n", self.fps));
        out.push_str(&format!(
            "{} frames x {} iterations; landmark detection is not included (landmarks are read from files)\n",
            self.frames, self.iterations
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let s = PhaseStats::from_samples(&[3.0, 1.0, 2.0]);
        assert_eq!((s.min, s.median, s.max, s.mean), (1.0, 2.0, 3.0, 2.0));
        let s = PhaseStats::from_samples(&[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.median, 2.5);
    }
}
