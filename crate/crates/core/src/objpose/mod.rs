//! Object translation from a volumetric heatmap over a wrist-centered cube,
//! read out with a soft-argmax, and the object-frame canonicalization.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, NodeId, ParamStore, Tape, Tensor};
use crate::nn::Mlp;

/// Default grid resolution per axis.
pub const DEFAULT_RESOLUTION: usize = 16;
/// Default half-width of the heatmap cube, normalized units.
pub const DEFAULT_HALF_WIDTH: f64 = 1.25;

/// Logits over an `n x n x n` grid spanning `[-c, c]^3`. Voxel `(i, j, k)`
/// sits at flat index `(i * n + j) * n + k`, with `i` along x.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumetricHeatmap {
    pub n: usize,
    pub half_width: f64,
    pub logits: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub n: usize,
    pub half_width: f64,
}

impl Default for HeatmapGrid {
    fn default() -> Self {
        Self { n: DEFAULT_RESOLUTION, half_width: DEFAULT_HALF_WIDTH }
    }
}

impl HeatmapGrid {
    pub fn voxels(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn pitch(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn axis_center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.pitch()
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.axis_center(i), self.axis_center(j), self.axis_center(k)]
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// `n^3 x 3` table of voxel centers in flat order.
    pub fn center_table(&self) -> Tensor {
        let n = self.n;
        let mut data = Vec::with_capacity(3 * self.voxels());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    data.extend_from_slice(&self.center(i, j, k));
                }
            }
        }
        Tensor::matrix(self.voxels(), 3, data)
    }

    /// Whether `t` lies in the hull of voxel centers, i.e. is reachable by
    /// the soft-argmax.
    pub fn reachable(&self, t: [f64; 3]) -> bool {
        let lim = self.half_width - 0.5 * self.pitch();
        t.iter().all(|v| v.abs() <= lim)
    }
}

impl VolumetricHeatmap {
    pub fn uniform(grid: HeatmapGrid) -> Self {
        Self { n: grid.n, half_width: grid.half_width, logits: vec![0.0; grid.voxels()] }
    }

    pub fn grid(&self) -> HeatmapGrid {
        HeatmapGrid { n: self.n, half_width: self.half_width }
    }

    /// Voxel probabilities (softmax, temperature 1).
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

/// Expected voxel-center coordinate under the heatmap's softmax.
pub fn soft_argmax(hm: &VolumetricHeatmap) -> [f64; 3] {
    let grid = hm.grid();
    let p = hm.probabilities();
    let mut t = [0.0; 3];
    for i in 0..grid.n {
        for j in 0..grid.n {
            for k in 0..grid.n {
                let w = p[grid.flat_index(i, j, k)];
                let c = grid.center(i, j, k);
                for a in 0..3 {
                    t[a] += w * c[a];
                }
            }
        }
    }
    t
}

/// Heatmap head: 256 -> 512 relu -> n^3 logits.
pub fn heatmap_head(grid: HeatmapGrid) -> Mlp {
    Mlp::new("heatmap_head", &[256, 512, grid.voxels()])
}

/// Logits node (`1 x n^3`) for the given features.
pub fn predict_heatmap(
    tape: &mut Tape,
    store: &ParamStore,
    features: NodeId,
    grid: HeatmapGrid,
) -> Result<NodeId, AutodiffError> {
    heatmap_head(grid).forward(tape, store, features)
}

/// Soft-argmax recorded on the tape; `centers` from [`HeatmapGrid::center_table`].
pub fn soft_argmax_tape(tape: &mut Tape, logits: NodeId, centers: &Tensor) -> Result<NodeId, AutodiffError> {
    let p = tape.softmax(logits);
    tape.weighted_sum(p, centers)
}

/// Object-frame coordinates: `x - t_o`.
pub fn canonicalize_object(points: &[[f64; 3]], t_o: [f64; 3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p[0] - t_o[0], p[1] - t_o[1], p[2] - t_o[2]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(grid: HeatmapGrid, idx: &[(usize, f64)]) -> VolumetricHeatmap {
        let mut hm = VolumetricHeatmap::uniform(grid);
        for &(i, v) in idx {
            hm.logits[i] = v;
        }
        hm
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut hm = VolumetricHeatmap::uniform(HeatmapGrid::default());
        for (i, l) in hm.logits.iter_mut().enumerate() {
            *l = ((i * 7919) % 113) as f64 / 10.0;
        }
        let s: f64 = hm.probabilities().iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_is_center() {
        let t = soft_argmax(&VolumetricHeatmap::uniform(HeatmapGrid::default()));
        assert!(t.iter().all(|v| v.abs() < 1e-12), "{t:?}");
    }

    #[test]
    fn delta_is_voxel_center() {
        let g = HeatmapGrid::default();
        let hm = one_hot(g, &[(g.flat_index(3, 9, 14), 40.0)]);
        let t = soft_argmax(&hm);
        let c = g.center(3, 9, 14);
        for a in 0..3 {
            assert!((t[a] - c[a]).abs() < 1e-9);
        }
    }

    #[test]
    fn two_voxels_give_midpoint() {
        let g = HeatmapGrid::default();
        let (a, b) = (g.flat_index(2, 5, 5), g.flat_index(6, 5, 11));
        let t = soft_argmax(&one_hot(g, &[(a, 60.0), (b, 60.0)]));
        let (ca, cb) = (g.center(2, 5, 5), g.center(6, 5, 11));
        for k in 0..3 {
            assert!((t[k] - 0.5 * (ca[k] + cb[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn tape_matches_plain() {
        let g = HeatmapGrid { n: 4, half_width: 1.0 };
        let logits: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let hm = VolumetricHeatmap { n: 4, half_width: 1.0, logits: logits.clone() };
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::matrix(1, 64, logits));
        let t = soft_argmax_tape(&mut tape, l, &g.center_table()).unwrap();
        let plain = soft_argmax(&hm);
        for a in 0..3 {
            assert!((tape.value(t).data()[a] - plain[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn head_width() {
        assert_eq!(heatmap_head(HeatmapGrid::default()).output_width(), 4096);
    }

    #[test]
    fn canonicalize_object_examples() {
        let x = [[0.1, 0.2, 0.3]];
        assert_eq!(canonicalize_object(&x, [0.0; 3]), x.to_vec());
        assert_eq!(canonicalize_object(&x, x[0]), vec![[0.0; 3]]);
    }

    proptest! {
        #[test]
        fn shifting_mass_moves_one_pitch(i in 0usize..15, j in 0usize..16, k in 0usize..16, w in 0.0..5.0f64) {
            let g = HeatmapGrid::default();
            let a = one_hot(g, &[(g.flat_index(i, j, k), 30.0 + w), (g.flat_index(i, (j + 3) % 16, k), 30.0)]);
            let b = one_hot(g, &[(g.flat_index(i + 1, j, k), 30.0 + w), (g.flat_index(i + 1, (j + 3) % 16, k), 30.0)]);
            let (ta, tb) = (soft_argmax(&a), soft_argmax(&b));
            prop_assert!((tb[0] - ta[0] - g.pitch()).abs() < 1e-9);
            prop_assert!((tb[1] - ta[1]).abs() < 1e-12);
        }

        #[test]
        fn canonicalize_inverts(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, tx in -1.0..1.0f64) {
            let t = [tx, -tx * 0.5, 0.25];
            let c = canonicalize_object(&[[x, y, z]], t)[0];
            let back = [c[0] + t[0], c[1] + t[1], c[2] + t[2]];
            for (u, v) in back.iter().zip([x, y, z]) {
                prop_assert!((u - v).abs() <= 1e-15);
            }
        }
    }
}
