//! One-hot encoding of samples, partial observations and latent masks.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bn::{Assignment, BayesianNetwork, Evidence};
use crate::error::{Error, Result};

/// How unobserved variables appear in the observation vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationEncoding {
    /// Unobserved blocks are all zeros; observation width equals D.
    #[default]
    ZeroBlock,
    /// Each block gets an extra trailing "unobserved" slot; width D + M.
    ExtraState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotLayout {
    pub offsets: Vec<usize>,
    pub widths: Vec<usize>,
    pub total: usize,
    pub encoding: ObservationEncoding,
}

impl OneHotLayout {
    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn block(&self, variable: usize) -> std::ops::Range<usize> {
        self.offsets[variable]..self.offsets[variable] + self.widths[variable]
    }

    /// Width of the observation vector fed to the models.
    pub fn input_width(&self) -> usize {
        match self.encoding {
            ObservationEncoding::ZeroBlock => self.total,
            ObservationEncoding::ExtraState => self.total + self.widths.len(),
        }
    }

    fn input_block(&self, variable: usize) -> std::ops::Range<usize> {
        match self.encoding {
            ObservationEncoding::ZeroBlock => self.block(variable),
            ObservationEncoding::ExtraState => {
                let start = self.offsets[variable] + variable;
                start..start + self.widths[variable] + 1
            }
        }
    }
}

pub fn build_layout(network: &BayesianNetwork) -> OneHotLayout {
    build_layout_with(network, ObservationEncoding::ZeroBlock)
}

pub fn build_layout_with(network: &BayesianNetwork, encoding: ObservationEncoding) -> OneHotLayout {
    let widths = network.cardinalities();
    let mut offsets = Vec::with_capacity(widths.len());
    let mut total = 0;
    for &k in &widths {
        offsets.push(total);
        total += k;
    }
    OneHotLayout { offsets, widths, total, encoding }
}

pub fn encode_assignment(layout: &OneHotLayout, assignment: &Assignment) -> Array1<f64> {
    let mut x = Array1::zeros(layout.total);
    for (v, &s) in assignment.0.iter().enumerate() {
        x[layout.offsets[v] + s] = 1.0;
    }
    x
}

/// Inverse of [`encode_assignment`]: argmax of every block.
pub fn decode_assignment(layout: &OneHotLayout, x: &[f64]) -> Assignment {
    Assignment(
        (0..layout.len())
            .map(|v| argmax(&x[layout.block(v)]))
            .collect(),
    )
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPair {
    /// Observation vector of width `layout.input_width()`.
    pub o: Array1<f64>,
    /// 1 on latent (unobserved) blocks, 0 on observed blocks; width D.
    pub mask: Array1<f64>,
}

pub fn encode_observation(layout: &OneHotLayout, evidence: &Evidence) -> ObservationPair {
    let mut o = Array1::zeros(layout.input_width());
    let mut mask = Array1::ones(layout.total);
    write_observation(layout, evidence, o.as_slice_mut().unwrap(), mask.as_slice_mut().unwrap());
    ObservationPair { o, mask }
}

/// Fills preallocated rows (zeroed `o`, all-ones `mask`).
pub(crate) fn write_observation(layout: &OneHotLayout, evidence: &Evidence, o: &mut [f64], mask: &mut [f64]) {
    for v in 0..layout.len() {
        let input = layout.input_block(v);
        match evidence.get(v) {
            Some(s) => {
                o[input.start + s] = 1.0;
                mask[layout.block(v)].iter_mut().for_each(|m| *m = 0.0);
            }
            None => {
                if layout.encoding == ObservationEncoding::ExtraState {
                    o[input.end - 1] = 1.0;
                }
            }
        }
    }
}

/// Observation rows for a batch of evidence sets.
pub fn encode_observations(layout: &OneHotLayout, evidence: &[&Evidence]) -> (Array2<f64>, Array2<f64>) {
    let mut o = Array2::zeros((evidence.len(), layout.input_width()));
    let mut mask = Array2::ones((evidence.len(), layout.total));
    for (i, ev) in evidence.iter().enumerate() {
        let mut orow = o.row_mut(i);
        let mut mrow = mask.row_mut(i);
        write_observation(layout, ev, orow.as_slice_mut().unwrap(), mrow.as_slice_mut().unwrap());
    }
    (o, mask)
}

/// Per-variable slices of a model output.
pub fn decode_distribution(layout: &OneHotLayout, y: &[f64]) -> Result<Vec<Vec<f64>>> {
    if y.len() != layout.total {
        return Err(Error::Shape(format!("output length {} != {}", y.len(), layout.total)));
    }
    Ok((0..layout.len()).map(|v| y[layout.block(v)].to_vec()).collect())
}

/// Clamps a block to [0, 1] and renormalizes; an all-zero block becomes uniform.
pub fn normalized_block(block: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = block.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let s: f64 = clamped.iter().sum();
    if s > 0.0 {
        clamped.into_iter().map(|x| x / s).collect()
    } else {
        vec![1.0 / block.len() as f64; block.len()]
    }
}

pub fn decode_distribution_normalized(layout: &OneHotLayout, y: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(decode_distribution(layout, y)?.iter().map(|b| normalized_block(b)).collect())
}
