//! Distance-aware neural color fields. A small MLP maps encoded position,
//! normalized depth, encoded view direction and learned embeddings to RGB;
//! depth as an input lets the network absorb LOD-dependent appearance.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SplatError};
use crate::mlp::{Mlp, MlpGrads, OutputActivation};

pub const HIDDEN: usize = 64;
pub const L_POS: usize = 6;
pub const L_DIR: usize = 2;
pub const EMB_DIM: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldParams {
    pub net: Mlp,
    /// Learned per-frame appearance embeddings, one row per frame.
    pub time_table: DMatrix<f64>,
    /// Learned per-class embeddings (dynamic field only).
    pub class_table: Option<DMatrix<f64>>,
    /// Depth is divided by this before entering the network.
    pub depth_scale: f64,
}

fn encoded_dim(with_class: bool) -> usize {
    let base = 3 * 2 * L_POS + 1 + 3 * 2 * L_DIR + EMB_DIM;
    if with_class {
        base + EMB_DIM
    } else {
        base
    }
}

impl FieldParams {
    /// Static field: NeurF_sta(mu, d, dir, emb(t)).
    pub fn new_static(frame_count: usize, depth_scale: f64, rng: &mut impl Rng) -> Self {
        let dim = encoded_dim(false);
        FieldParams {
            net: Mlp::new(&[dim, HIDDEN, HIDDEN, 3], OutputActivation::Sigmoid, rng),
            time_table: DMatrix::from_fn(frame_count.max(1), EMB_DIM, |_, _| {
                rng.gen_range(-0.1..0.1)
            }),
            class_table: None,
            depth_scale,
        }
    }

    /// Dynamic field: NeurF_dyn additionally conditions on a class embedding.
    pub fn new_dynamic(
        frame_count: usize,
        class_count: usize,
        depth_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let dim = encoded_dim(true);
        FieldParams {
            net: Mlp::new(&[dim, HIDDEN, HIDDEN, 3], OutputActivation::Sigmoid, rng),
            time_table: DMatrix::from_fn(frame_count.max(1), EMB_DIM, |_, _| {
                rng.gen_range(-0.1..0.1)
            }),
            class_table: Some(DMatrix::from_fn(class_count.max(1), EMB_DIM, |_, _| {
                rng.gen_range(-0.1..0.1)
            })),
            depth_scale,
        }
    }

    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.net.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        out.time_table.fill(0.0);
        if let Some(t) = &mut out.class_table {
            t.fill(0.0);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FieldInput {
    pub position: Vector3<f64>,
    pub depth: f64,
    /// Unit view direction.
    pub direction: Vector3<f64>,
    pub time_index: usize,
    pub class_index: Option<usize>,
}

/// Sinusoidal encoding: [sin(2^k pi x), cos(2^k pi x)] per component.
fn encode(v: &Vector3<f64>, levels: usize, out: &mut Vec<f64>) {
    for k in 0..levels {
        let f = (1u64 << k) as f64 * std::f64::consts::PI;
        for c in 0..3 {
            out.push((f * v[c]).sin());
            out.push((f * v[c]).cos());
        }
    }
}

fn assemble_input(params: &FieldParams, input: &FieldInput) -> Result<DVector<f64>> {
    if input.time_index >= params.time_table.nrows() {
        return Err(SplatError::IndexOutOfRange {
            index: input.time_index,
            len: params.time_table.nrows(),
        });
    }
    let mut x = Vec::with_capacity(params.net.input_dim());
    encode(&input.position, L_POS, &mut x);
    x.push(input.depth / params.depth_scale);
    encode(&input.direction, L_DIR, &mut x);
    for c in 0..EMB_DIM {
        x.push(params.time_table[(input.time_index, c)]);
    }
    if let Some(table) = &params.class_table {
        let ci = input.class_index.ok_or_else(|| {
            SplatError::InvalidArgument("dynamic field requires a class index".into())
        })?;
        if ci >= table.nrows() {
            return Err(SplatError::IndexOutOfRange {
                index: ci,
                len: table.nrows(),
            });
        }
        for c in 0..EMB_DIM {
            x.push(table[(ci, c)]);
        }
    }
    debug_assert_eq!(x.len(), params.net.input_dim());
    Ok(DVector::from_vec(x))
}

/// Deterministic forward pass; sigmoid output keeps RGB in (0,1).
pub fn field_forward(params: &FieldParams, input: &FieldInput) -> Result<[f64; 3]> {
    let x = assemble_input(params, input)?;
    let y = params.net.forward(&x);
    Ok([y[0], y[1], y[2]])
}

/// Time embedding at a fractional frame position: linear interpolation
/// between the two neighboring per-frame rows.
pub fn time_embedding_at(params: &FieldParams, frame_pos: f64) -> DVector<f64> {
    let n = params.time_table.nrows();
    let clamped = frame_pos.clamp(0.0, (n - 1) as f64);
    let lo = clamped.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = clamped - lo as f64;
    let a = params.time_table.row(lo);
    let b = params.time_table.row(hi);
    DVector::from_fn(EMB_DIM, |c, _| a[c] * (1.0 - w) + b[c] * w)
}

/// Gradients of the mean squared error over a batch, for every parameter
/// group (network weights plus both embedding tables).
#[derive(Debug, Clone)]
pub struct FieldGrads {
    pub net: MlpGrads,
    pub time_table: DMatrix<f64>,
    pub class_table: Option<DMatrix<f64>>,
}

/// Batch loss: (1/N) sum over samples of the squared RGB error.
pub fn field_loss(params: &FieldParams, batch: &[FieldInput], targets: &[[f64; 3]]) -> Result<f64> {
    if batch.len() != targets.len() {
        return Err(SplatError::LengthMismatch {
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let mut total = 0.0;
    for (input, target) in batch.iter().zip(targets) {
        let y = field_forward(params, input)?;
        total += (0..3).map(|c| (y[c] - target[c]).powi(2)).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Exact analytic gradient of [`field_loss`] w.r.t. all parameters.
pub fn field_gradient(
    params: &FieldParams,
    batch: &[FieldInput],
    targets: &[[f64; 3]],
) -> Result<FieldGrads> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(SplatError::LengthMismatch {
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let mut grads = FieldGrads {
        net: MlpGrads::zeros_like(&params.net),
        time_table: DMatrix::zeros(params.time_table.nrows(), params.time_table.ncols()),
        class_table: params
            .class_table
            .as_ref()
            .map(|t| DMatrix::zeros(t.nrows(), t.ncols())),
    };
    let inv_n = 1.0 / batch.len() as f64;
    let time_off = 3 * 2 * L_POS + 1 + 3 * 2 * L_DIR;
    for (input, target) in batch.iter().zip(targets) {
        let x = assemble_input(params, input)?;
        let cache = params.net.forward_cached(&x);
        let y = cache.output();
        let grad_out = DVector::from_fn(3, |c, _| 2.0 * inv_n * (y[c] - target[c]));
        let grad_in = params.net.backward(&cache, &grad_out, &mut grads.net);
        for c in 0..EMB_DIM {
            grads.time_table[(input.time_index, c)] += grad_in[time_off + c];
        }
        if let (Some(tg), Some(ci)) = (&mut grads.class_table, input.class_index) {
            for c in 0..EMB_DIM {
                tg[(ci, c)] += grad_in[time_off + EMB_DIM + c];
            }
        }
    }
    Ok(grads)
}

/// Plain gradient descent on the batch MSE. Returns the per-iteration loss
/// trace; aborts if the loss goes non-finite.
pub fn fit_field(
    params: &mut FieldParams,
    batch: &[FieldInput],
    targets: &[[f64; 3]],
    learning_rate: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(SplatError::InvalidArgument("empty training batch".into()));
    }
    let mut trace = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let loss = field_loss(params, batch, targets)?;
        if !loss.is_finite() {
            return Err(SplatError::Diverged(format!(
                "field loss non-finite at iteration {iter}"
            )));
        }
        trace.push(loss);
        if learning_rate == 0.0 {
            continue;
        }
        let grads = field_gradient(params, batch, targets)?;
        params.net.apply_step(&grads.net, learning_rate);
        params.time_table -= learning_rate * &grads.time_table;
        if let (Some(t), Some(g)) = (&mut params.class_table, &grads.class_table) {
            *t -= learning_rate * g;
        }
    }
    Ok(trace)
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldSidecar {
    layer_dims: Vec<usize>,
    frame_count: usize,
    class_count: Option<usize>,
    depth_scale: f64,
    value_count: usize,
}

/// Writes the parameters as little-endian f32 with a JSON shape sidecar
/// (`<path>` and `<path>.json`).
pub fn save_field(params: &FieldParams, path: &Path) -> Result<()> {
    let mut values: Vec<f64> = params.net.flatten();
    values.extend(params.time_table.iter());
    if let Some(t) = &params.class_table {
        values.extend(t.iter());
    }
    let mut dims = vec![params.net.input_dim()];
    for l in &params.net.layers {
        dims.push(l.bias.len());
    }
    let sidecar = FieldSidecar {
        layer_dims: dims,
        frame_count: params.time_table.nrows(),
        class_count: params.class_table.as_ref().map(|t| t.nrows()),
        depth_scale: params.depth_scale,
        value_count: values.len(),
    };
    let mut f = std::fs::File::create(path)?;
    for v in &values {
        f.write_all(&(*v as f32).to_le_bytes())?;
    }
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<FieldParams> {
    let sidecar: FieldSidecar =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != sidecar.value_count * 4 {
        return Err(SplatError::Malformed(format!(
            "expected {} f32 values, file holds {} bytes",
            sidecar.value_count,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut net = Mlp::zeros(&sidecar.layer_dims, OutputActivation::Sigmoid);
    let net_n = net.param_count();
    net.load_flat(&values[..net_n])?;
    let mut off = net_n;
    let tt_n = sidecar.frame_count * EMB_DIM;
    let time_table =
        DMatrix::from_iterator(sidecar.frame_count, EMB_DIM, values[off..off + tt_n].iter().copied());
    off += tt_n;
    let class_table = sidecar.class_count.map(|n| {
        DMatrix::from_iterator(n, EMB_DIM, values[off..off + n * EMB_DIM].iter().copied())
    });
    Ok(FieldParams {
        net,
        time_table,
        class_table,
        depth_scale: sidecar.depth_scale,
    })
}
