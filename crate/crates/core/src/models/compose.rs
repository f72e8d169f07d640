use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::Net;
use crate::error::{Error, Result};
use crate::nn::{Layer, NetSpec, Params};

/// Merges per-variable nets into one net whose output is their concatenation.
///
/// Members must share the input width, depth and activations. The first
/// layer's weights are concatenated column-wise; every later layer is
/// block-diagonal, so no member sees another member's hidden units.
pub fn compose_block_diagonal(members: &[Net]) -> Result<Net> {
    let first = members.first().ok_or(Error::EmptySelection)?;
    let depth = first.spec.layer_count();
    for m in members {
        if m.spec.input_width() != first.spec.input_width() {
            return Err(Error::Shape("members differ in input width".into()));
        }
        if m.spec.activations != first.spec.activations {
            return Err(Error::Shape("members differ in depth or activations".into()));
        }
    }

    let mut widths = vec![first.spec.input_width()];
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let bias = concatenate(Axis(0), &members.iter().map(|m| m.params.layers[l].bias.view()).collect::<Vec<_>>())
            .expect("1-d biases");
        let weight = if l == 0 {
            concatenate(Axis(1), &members.iter().map(|m| m.params.layers[0].weight.view()).collect::<Vec<_>>())
                .expect("shared input width")
        } else {
            let rows: usize = members.iter().map(|m| m.params.layers[l].weight.nrows()).sum();
            let mut w = Array2::zeros((rows, bias.len()));
            let (mut r, mut c) = (0, 0);
            for m in members {
                let block = &m.params.layers[l].weight;
                w.slice_mut(s![r..r + block.nrows(), c..c + block.ncols()]).assign(block);
                r += block.nrows();
                c += block.ncols();
            }
            w
        };
        widths.push(bias.len());
        layers.push(Layer { weight, bias: Array1::from(bias.to_vec()) });
    }
    let spec = NetSpec::new(widths, first.spec.activations.clone())?;
    Ok(Net { spec, params: Params { layers } })
}
