use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sensor::{GridPose, SensorFrame};
use super::world::WorldModel;
use crate::config::NoiseConfig;
use crate::detection::Detection;

/// Reports the instances the sensor swept this frame, with a miss rate and a
/// label-confusion table.
pub struct OracleDetector {
    miss_rate: f64,
    confusion: BTreeMap<String, BTreeMap<String, f64>>,
    range_m: f64,
    rng: ChaCha8Rng,
}

impl OracleDetector {
    pub fn new(noise: &NoiseConfig, range_m: f64, seed: u64) -> Self {
        Self {
            miss_rate: noise.miss_rate,
            confusion: noise.confusion.clone(),
            range_m,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn detect(&mut self, world: &WorldModel, frame: &SensorFrame, pose: GridPose) -> Vec<Detection> {
        let mut out = Vec::new();
        for (&cell, &d) in &frame.visible {
            for o in world.objects_at(cell) {
                let miss: f64 = self.rng.random();
                let swap: f64 = self.rng.random();
                if miss < self.miss_rate {
                    continue;
                }
                let mut label = o.label.clone();
                if let Some(row) = self.confusion.get(&o.label) {
                    let mut acc = 0.0;
                    for (other, p) in row {
                        acc += p;
                        if swap < acc {
                            label = other.clone();
                            break;
                        }
                    }
                }
                out.push(Detection {
                    label,
                    cell,
                    confidence: (1.0 - d / self.range_m).clamp(0.0, 1.0),
                    source_pose: pose,
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SensorConfig;
    use crate::sim::generate::{generate, GenConfig};
    use crate::sim::sensor::sense;

    #[test]
    fn reports_swept_objects_and_honours_noise() {
        let (w, _) = generate(5, &GenConfig::default()).unwrap();
        let o = &w.objects[0];
        let pose = GridPose::at_cell(&w.spec, o.cell, 0.0);
        let frame = sense(&w, pose, &SensorConfig::default());
        let mut det = OracleDetector::new(&NoiseConfig::default(), 3.0, 1);
        let found = det.detect(&w, &frame, pose);
        assert!(found.iter().any(|d| d.cell == o.cell && d.label == o.label));
        for d in &found {
            assert!(w.objects_at(d.cell).any(|x| x.label == d.label));
        }

        let blind = NoiseConfig {
            miss_rate: 1.0,
            ..Default::default()
        };
        assert!(OracleDetector::new(&blind, 3.0, 1).detect(&w, &frame, pose).is_empty());

        let mut confused = NoiseConfig::default();
        confused
            .confusion
            .insert(o.label.clone(), BTreeMap::from([("widget".to_string(), 1.0)]));
        let got = OracleDetector::new(&confused, 3.0, 1).detect(&w, &frame, pose);
        assert!(got.iter().any(|d| d.cell == o.cell && d.label == "widget"));
    }
}
