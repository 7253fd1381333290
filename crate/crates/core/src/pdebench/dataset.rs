use serde::{Deserialize, Serialize};

use super::{reference_solve, PdeFamily, PdeSpec};
use crate::error::{invalid, Result};
use crate::gradcore::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeSample {
    pub u0: Vec<f64>,
    /// States on the record grid, `trajectory[k]` at `k·record_dt`.
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeDataset {
    pub spec: PdeSpec,
    pub samples: Vec<PdeSample>,
    /// Record-grid times.
    pub times: Vec<f64>,
}

impl PdeDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn record_index(&self, t: f64) -> Result<usize> {
        let k = (t / self.spec.record_dt).round() as usize;
        if k >= self.times.len() || (self.times[k] - t).abs() > 1e-9 {
            return Err(invalid(format!("time {t} is not recorded")));
        }
        Ok(k)
    }

    /// Initial states of `idx` as `[len, N]`.
    pub fn initial(&self, idx: &[usize]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.samples[i].u0.clone()).collect();
        Tensor::from_rows(&rows)
    }

    /// States of `idx` at time `t` as `[len, N]`.
    pub fn at(&self, t: f64, idx: &[usize]) -> Result<Tensor> {
        let k = self.record_index(t)?;
        let rows: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| self.samples[i].trajectory[k].clone())
            .collect();
        Tensor::from_rows(&rows)
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn split(&self, train: usize) -> Result<(PdeDataset, PdeDataset)> {
        if train == 0 || train >= self.len() {
            return Err(invalid(format!(
                "cannot split {} samples at {train}",
                self.len()
            )));
        }
        let mut a = self.clone();
        let b_samples = a.samples.split_off(train);
        let b = PdeDataset {
            samples: b_samples,
            ..self.clone()
        };
        Ok((a, b))
    }
}

fn initial_state(spec: &PdeSpec, rng: &mut Rng) -> Vec<f64> {
    let n = spec.grid;
    let two_pi = 2.0 * std::f64::consts::PI;
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let k = (1 + rng.below(4)) as f64;
            let amp = rng.uniform_in(0.2, 0.6);
            let phase = rng.uniform_in(0.0, two_pi);
            (k, amp, phase)
        })
        .collect();
    let packet = rng.uniform() < 0.5;
    let (centre, width, height) = (
        rng.uniform_in(0.0, spec.length),
        rng.uniform_in(0.3, 0.6),
        rng.uniform_in(-0.5, 0.5),
    );
    let (offset, scale) = match spec.family {
        // positive states keep the logistic reaction well-posed
        PdeFamily::B => (0.5, 0.2),
        _ => (0.0, 1.0),
    };
    (0..n)
        .map(|i| {
            let x = spec.x(i);
            let mut v: f64 = modes
                .iter()
                .map(|&(k, a, ph)| a * (k * x * two_pi / spec.length + ph).sin())
                .sum();
            if packet {
                let mut d = (x - centre).abs() % spec.length;
                d = d.min(spec.length - d);
                v += height * (-0.5 * (d / width).powi(2)).exp();
            }
            offset + scale * v
        })
        .collect()
}

/// Random smooth initial states (three Fourier modes, optionally plus a
/// periodic Gaussian packet) propagated by the reference solver and
/// recorded up to the largest horizon.
pub fn generate_pde_dataset(spec: &PdeSpec, count: usize, rng: &Rng) -> Result<PdeDataset> {
    spec.validate()?;
    if count == 0 {
        return Err(invalid("count must be > 0"));
    }
    let records = (spec.max_horizon() / spec.record_dt).round() as usize;
    let times: Vec<f64> = (0..=records).map(|k| k as f64 * spec.record_dt).collect();
    let u0: Vec<Vec<f64>> = (0..count)
        .map(|i| initial_state(spec, &mut rng.substream("u0", i as u64)))
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(count);
    let chunk = count.div_ceil(workers);
    let solved: Vec<Result<Vec<Tensor>>> = std::thread::scope(|s| {
        let handles: Vec<_> = u0
            .chunks(chunk)
            .map(|rows| {
                let times = &times;
                s.spawn(move || reference_solve(spec, &Tensor::from_rows(rows)?, times))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let mut samples = Vec::with_capacity(count);
    for (rows, states) in u0.chunks(chunk).zip(solved) {
        let states = states?;
        for (r, u) in rows.iter().enumerate() {
            samples.push(PdeSample {
                u0: u.clone(),
                trajectory: states.iter().map(|s| s.row_slice(r).to_vec()).collect(),
            });
        }
    }
    Ok(PdeDataset {
        spec: spec.clone(),
        samples,
        times,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    /// Each initial state paired with another sample's trajectory.
    RandomPair,
    /// Recorded states of each trajectory put in random order.
    ShuffledTime,
}

/// Corrupted copy of `data` that keeps every initial state but breaks the
/// link between state and later time.
pub fn negative_control(data: &PdeDataset, control: Control, rng: &Rng) -> Result<PdeDataset> {
    let n = data.len();
    if n < 2 {
        return Err(invalid("negative controls need at least 2 samples"));
    }
    let mut out = data.clone();
    match control {
        Control::RandomPair => {
            let mut r = rng.stream("random_pair");
            // a rotation of a random order never maps a sample to itself
            let order = r.permutation(n);
            for k in 0..n {
                let (dst, src) = (order[k], order[(k + 1) % n]);
                out.samples[dst].trajectory = data.samples[src].trajectory.clone();
                out.samples[dst].trajectory[0] = data.samples[dst].u0.clone();
            }
        }
        Control::ShuffledTime => {
            for (i, s) in out.samples.iter_mut().enumerate() {
                let mut r = rng.substream("shuffled_time", i as u64);
                r.shuffle(&mut s.trajectory[1..]);
            }
        }
    }
    Ok(out)
}
