//! Signed distance decoders: image features plus point features in, one
//! signed distance out.
//!
//! Layout: `[I, P]` (256 + 6) -> 512 -> 250, then `[I, P, h]` (512) -> 512 ->
//! 512 -> 1, relu on hidden layers and a scaled tanh on the output. The
//! image-feature part of the two input layers is the same for every query
//! point of a scene, so it is evaluated once per scene and broadcast.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, NodeId, ParamStore, Tape, Tensor};
use crate::nn::{bias_name, init_linear, weight_name};
use crate::Exec;

pub const FEATURE_DIM: usize = 256;
pub const POINT_DIM: usize = 6;
pub const INPUT_DIM: usize = FEATURE_DIM + POINT_DIM;
const SKIP_HIDDEN: usize = 250;

/// `(fan_in, fan_out)` per layer.
pub const LAYER_SHAPES: [(usize, usize); 5] =
    [(INPUT_DIM, 512), (512, SKIP_HIDDEN), (INPUT_DIM + SKIP_HIDDEN, 512), (512, 512), (512, 1)];

/// Points per no-grad evaluation chunk.
pub const EVAL_CHUNK: usize = 2048;

/// Architecture descriptor; the weights live in a [`ParamStore`] under
/// `"{prefix}.l{i}.weight"` / `"{prefix}.l{i}.bias"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfDecoder {
    pub prefix: String,
    /// Outputs lie in `(-output_scale, output_scale)`.
    pub output_scale: f64,
}

/// A decoder with freshly initialized weights under `prefix`.
pub fn build_decoder(prefix: &str, seed: u64, output_scale: f64) -> Result<(SdfDecoder, ParamStore), AutodiffError> {
    let dec = SdfDecoder { prefix: prefix.to_string(), output_scale };
    let mut store = ParamStore::new();
    dec.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((dec, store))
}

impl SdfDecoder {
    pub fn new(prefix: &str, output_scale: f64) -> Self {
        Self { prefix: prefix.to_string(), output_scale }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<(), AutodiffError> {
        for (i, &(fi, fo)) in LAYER_SHAPES.iter().enumerate() {
            init_linear(store, &self.prefix, i, fi, fo, rng)?;
        }
        Ok(())
    }

    /// Per-scene constant part: the image-feature rows of the two input
    /// layers plus their biases, each `1 x width`.
    pub fn feature_rows(&self, tape: &mut Tape, store: &ParamStore, features: NodeId) -> Result<[NodeId; 2], AutodiffError> {
        let mut rows = [features; 2];
        for (slot, layer) in [0usize, 2].into_iter().enumerate() {
            let w = tape.param(store, &weight_name(&self.prefix, layer))?;
            let b = tape.param(store, &bias_name(&self.prefix, layer))?;
            let wi = tape.slice_rows(w, 0, FEATURE_DIM)?;
            rows[slot] = tape.affine(features, wi, Some(b))?;
        }
        Ok(rows)
    }

    /// Signed distances (`n x 1`) for point features `points` (`n x 6`).
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, features: NodeId, points: NodeId) -> Result<NodeId, AutodiffError> {
        let rows = self.feature_rows(tape, store, features)?;
        self.decode_with_rows(tape, store, rows, points)
    }

    pub fn decode_with_rows(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        rows: [NodeId; 2],
        points: NodeId,
    ) -> Result<NodeId, AutodiffError> {
        let p = &self.prefix;
        let w0 = tape.param(store, &weight_name(p, 0))?;
        let w0p = tape.slice_rows(w0, FEATURE_DIM, POINT_DIM)?;
        let h = tape.affine(points, w0p, None)?;
        let h = tape.add_row(h, rows[0])?;
        let h = tape.relu(h);
        let w1 = tape.param(store, &weight_name(p, 1))?;
        let b1 = tape.param(store, &bias_name(p, 1))?;
        let h = tape.affine(h, w1, Some(b1))?;
        let h = tape.relu(h);
        let skip = tape.concat_cols(points, h)?;
        let w2 = tape.param(store, &weight_name(p, 2))?;
        let w2p = tape.slice_rows(w2, FEATURE_DIM, POINT_DIM + SKIP_HIDDEN)?;
        let h = tape.affine(skip, w2p, None)?;
        let h = tape.add_row(h, rows[1])?;
        let mut h = tape.relu(h);
        for layer in 3..5 {
            let w = tape.param(store, &weight_name(p, layer))?;
            let b = tape.param(store, &bias_name(p, layer))?;
            h = tape.affine(h, w, Some(b))?;
            if layer < 4 {
                h = tape.relu(h);
            }
        }
        let h = tape.tanh(h);
        Ok(tape.scale(h, self.output_scale))
    }

    /// No-grad evaluation over many points, chunked and optionally parallel.
    /// Results are in input order regardless of `exec`.
    pub fn eval_points(
        &self,
        store: &ParamStore,
        features: &[f64],
        points: &[[f64; POINT_DIM]],
        exec: Exec,
    ) -> Result<Vec<f64>, AutodiffError> {
        let mut tape = Tape::no_grad();
        let f = tape.constant(Tensor::row(features));
        let rows = self.feature_rows(&mut tape, store, f)?;
        let rows = [tape.value(rows[0]).clone(), tape.value(rows[1]).clone()];
        let chunks: Vec<Result<Vec<f64>, AutodiffError>> = exec.map_slice(
            &points.chunks(EVAL_CHUNK).collect::<Vec<_>>(),
            |chunk| {
                let mut tape = Tape::no_grad();
                let r = [tape.constant(rows[0].clone()), tape.constant(rows[1].clone())];
                let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
                let pts = tape.constant(Tensor::matrix(chunk.len(), POINT_DIM, flat));
                let out = self.decode_with_rows(&mut tape, store, r, pts)?;
                Ok(tape.value(out).data().to_vec())
            },
        );
        let mut out = Vec::with_capacity(points.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }
}

/// Point features `[x, x_canonical]`.
pub fn point_features(x: &[[f64; 3]], canonical: &[[f64; 3]]) -> Vec<[f64; POINT_DIM]> {
    x.iter()
        .zip(canonical)
        .map(|(a, c)| [a[0], a[1], a[2], c[0], c[1], c[2]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handkin::canonicalize_hand;
    use crate::nn::weight_name;
    use rand::Rng;

    fn features(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn same_seed_same_weights() {
        let (_, a) = build_decoder("sdf_h", 4, 1.0).unwrap();
        let (_, b) = build_decoder("sdf_h", 4, 1.0).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<_> = a.iter().filter(|(n, _)| n.ends_with("weight")).map(|(_, t)| t.dims()).collect();
        assert_eq!(shapes, vec![(262, 512), (512, 250), (512, 512), (512, 512), (512, 1)]);
        let biases: Vec<_> = a.iter().filter(|(n, _)| n.ends_with("bias")).map(|(_, t)| t.dims().1).collect();
        assert_eq!(biases, vec![512, 250, 512, 512, 1]);
    }

    #[test]
    fn zero_weights_give_zero() {
        let (dec, mut store) = build_decoder("sdf_o", 1, 1.3).unwrap();
        for v in store.values_mut() {
            *v = v.map(|_| 0.0);
        }
        let out = dec.eval_points(&store, &features(0), &[[0.1, 0.2, 0.3, -0.4, 0.5, 0.9]; 3], Exec::Serial).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn output_bounded_and_repeatable() {
        let (dec, store) = build_decoder("sdf_h", 2, 0.7).unwrap();
        let pts: Vec<[f64; 6]> = (0..3000).map(|i| [(i as f64).sin() * 5.0; 6]).collect();
        let a = dec.eval_points(&store, &features(1), &pts, Exec::Serial).unwrap();
        let b = dec.eval_points(&store, &features(1), &pts, Exec::available()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() < 0.7));
    }

    #[test]
    fn x_slot_free_decoder_is_pose_invariant() {
        let (dec, mut store) = build_decoder("sdf_h", 3, 1.0).unwrap();
        for layer in [0, 2] {
            let i = store.index_of(&weight_name("sdf_h", layer)).unwrap();
            let w = store.get_index_mut(i);
            let cols = w.cols();
            for r in FEATURE_DIM..FEATURE_DIM + 3 {
                w.data_mut()[r * cols..(r + 1) * cols].fill(0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<[f64; 3]> = (0..50).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let theta = [0.4, -0.3, 1.1];
        let base = dec.eval_points(&store, &features(2), &point_features(&x, &canonicalize_hand(&x, theta, [0.0; 3])), Exec::Serial).unwrap();
        for extra in [[0.0, 0.0, 1.0], [2.0, -1.0, 0.3]] {
            let r = crate::geom::rodrigues(&crate::geom::v3(extra));
            let xr: Vec<[f64; 3]> = x.iter().map(|p| crate::geom::arr(&(r * crate::geom::v3(*p)))).collect();
            let composed = crate::geom::rotation_log(&(r * crate::geom::rodrigues(&crate::geom::v3(theta))));
            let xc = canonicalize_hand(&xr, crate::geom::arr(&composed), [0.0; 3]);
            let out = dec.eval_points(&store, &features(2), &point_features(&xr, &xc), Exec::Serial).unwrap();
            for (a, b) in out.iter().zip(&base) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
