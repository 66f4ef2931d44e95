//! Central finite-difference checks of tape gradients.

use super::{AutodiffError, NodeId, ParamStore, Tape, Tensor};

/// Relative error with a floor on the denominator, so that near-zero
/// gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error over all entries of `inputs`, for a scalar function
/// built on a fresh tape from leaves holding those inputs.
pub fn check_leaves<F>(inputs: &[Tensor], h: f64, build: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId, AutodiffError>,
{
    let eval = |vals: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut t = Tape::no_grad();
        let ids: Vec<NodeId> = vals.iter().map(|v| t.constant(v.clone())).collect();
        let out = build(&mut t, &ids)?;
        Ok(t.value(out).item())
    };
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let grads = tape.backward(out)?;
    let mut worst: f64 = 0.0;
    for (k, id) in ids.iter().enumerate() {
        let g = grads.wrt(&tape, *id).unwrap_or_else(|| inputs[k].map(|_| 0.0));
        for e in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= h;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            worst = worst.max(relative_error(g.data()[e], numeric));
        }
    }
    Ok(worst)
}

/// Analytic and finite-difference slopes of one parameter entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryCheck {
    pub analytic: f64,
    pub central: f64,
    pub forward: f64,
    pub backward: f64,
}

impl EntryCheck {
    pub fn relative_error(&self) -> f64 {
        relative_error(self.analytic, self.central)
    }

    /// One-sided slopes agree to `tol`. They split apart when the stencil
    /// straddles a kink (a relu input or an L1 residual crossing zero), while
    /// a wrong analytic gradient leaves them in agreement.
    pub fn is_smooth(&self, tol: f64) -> bool {
        relative_error(self.forward, self.backward) < tol
    }
}

/// Per-entry slopes for the listed `(parameter, entry)` pairs of `store`,
/// for a scalar built from the store.
pub fn probe_params<F>(store: &ParamStore, entries: &[(String, usize)], h: f64, build: F) -> Result<Vec<EntryCheck>, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId, AutodiffError>,
{
    let mut tape = Tape::new();
    let out = build(&mut tape, store)?;
    let base = tape.value(out).item();
    let grads = tape.backward(out)?.for_store(store);
    let mut checks = Vec::with_capacity(entries.len());
    for (name, e) in entries {
        let idx = store.index_of(name).ok_or_else(|| AutodiffError::UnknownParam(name.clone()))?;
        let eval_at = |delta: f64| -> Result<f64, AutodiffError> {
            let mut s = store.clone();
            s.get_index_mut(idx).data_mut()[*e] += delta;
            let mut t = Tape::no_grad();
            let out = build(&mut t, &s)?;
            Ok(t.value(out).item())
        };
        let (plus, minus) = (eval_at(h)?, eval_at(-h)?);
        checks.push(EntryCheck {
            analytic: grads[idx].data()[*e],
            central: (plus - minus) / (2.0 * h),
            forward: (plus - base) / h,
            backward: (base - minus) / h,
        });
    }
    Ok(checks)
}

/// Worst relative error over the listed `(parameter, entry)` pairs of
/// `store`, for a scalar built from the store.
pub fn check_params<F>(store: &ParamStore, entries: &[(String, usize)], h: f64, build: F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<NodeId, AutodiffError>,
{
    let checks = probe_params(store, entries, h, build)?;
    Ok(checks.iter().map(EntryCheck::relative_error).fold(0.0, f64::max))
}

fn random_tensor(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Check one operation on random shapes and values. Non-scalar outputs are
/// reduced with a squared distance to a random target.
pub fn check_op(op: super::OpKind, rng: &mut impl rand::Rng) -> Result<f64, AutodiffError> {
    use super::OpKind::*;
    let (n, m, k) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let r = |rows, cols, rng: &mut _| random_tensor(rows, cols, rng);
    let (inputs, coords): (Vec<Tensor>, Tensor) = match op {
        Affine => (vec![r(n, m, rng), r(m, k, rng), r(1, k, rng)], Tensor::zeros(1, 1)),
        AddRow => (vec![r(n, m, rng), r(1, m, rng)], Tensor::zeros(1, 1)),
        ConcatCols => (vec![r(n, m, rng), r(n, k, rng)], Tensor::zeros(1, 1)),
        ConcatRows => (vec![r(n, m, rng), r(k, m, rng)], Tensor::zeros(1, 1)),
        Add | Sub | Mul | L1Mean | L2Mean => (vec![r(n, m, rng), r(n, m, rng)], Tensor::zeros(1, 1)),
        WeightedSum => (vec![r(1, n * m, rng)], r(n * m, 3, rng)),
        Softmax => (vec![r(1, n * m, rng).map(|v| 3.0 * v)], r(n * m, 3, rng)),
        RotatePoints => (vec![r(n, 3, rng), r(1, 3, rng).map(|v| 2.5 * v)], Tensor::zeros(1, 1)),
        Clamp => (vec![r(n, m, rng).map(|v| 2.0 * v)], Tensor::zeros(1, 1)),
        _ => (vec![r(n, m, rng).map(|v| 2.0 * v)], Tensor::zeros(1, 1)),
    };
    let probe = |rows: usize, cols: usize, seed: usize| {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|i| ((i * 7 + seed * 13) % 11) as f64 / 5.0 - 1.0).collect())
    };
    let start = rng.random_range(0..m);
    let len = rng.random_range(1..=m - start);
    let rstart = rng.random_range(0..n);
    let rlen = rng.random_range(1..=n - rstart);
    let c = rng.random_range(-2.0..2.0);
    check_leaves(&inputs, 1e-6, |t, x| {
        let out = match op {
            Affine => t.affine(x[0], x[1], Some(x[2]))?,
            AddRow => t.add_row(x[0], x[1])?,
            Relu => t.relu(x[0]),
            Tanh => t.tanh(x[0]),
            Clamp => t.clamp(x[0], -0.7, 0.9),
            ConcatCols => t.concat_cols(x[0], x[1])?,
            ConcatRows => t.concat_rows(x[0], x[1])?,
            SliceCols => t.slice_cols(x[0], start, len)?,
            SliceRows => t.slice_rows(x[0], rstart, rlen)?,
            Add => t.add(x[0], x[1])?,
            Sub => t.sub(x[0], x[1])?,
            Mul => t.mul(x[0], x[1])?,
            Scale => t.scale(x[0], c),
            Softmax => {
                let p = t.softmax(x[0]);
                t.weighted_sum(p, &coords)?
            }
            WeightedSum => t.weighted_sum(x[0], &coords)?,
            L1Mean => return t.l1_mean(x[0], x[1]),
            L2Mean => return t.l2_mean(x[0], x[1]),
            RotatePoints => t.rotate_points(x[0], x[1])?,
        };
        let (rows, cols) = t.value(out).dims();
        let target = t.constant(probe(rows, cols, rows + cols));
        t.l2_mean(out, target)
    })
}
