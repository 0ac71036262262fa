//! Batched forward/backward engine.
//!
//! The forward pass carries, next to each activation value, one tangent
//! channel per requested input direction (forward-mode through the whole
//! network, batched as matrices). The backward pass is reverse-mode over
//! that tangent-carrying computation: given cotangents for the output value
//! and for each output tangent, it accumulates the exact parameter gradient
//! of `Σ_b cot_val·φ̃ + Σ_{b,t} cot_tan·∂φ̃/∂s_t`.
//!
//! This is what makes the Eikonal loss gradient exact: the loss is a
//! function of network *input-derivatives*, and its parameter gradient is a
//! weighted combination of exactly these mixed second derivatives.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use super::{MlpParameters, Layout};

/// Stored activations of one batched forward pass.
pub struct BatchTrace {
    /// Lifted input values (B × d) and tangents (per seed).
    x: Array2<f64>,
    xt: Vec<Array2<f64>>,
    /// Encoders: post-activation values, pre-activation tangents,
    /// post-activation tangents.
    u: Array2<f64>,
    upre_t: Vec<Array2<f64>>,
    ut: Vec<Array2<f64>>,
    v: Array2<f64>,
    vpre_t: Vec<Array2<f64>>,
    vt: Vec<Array2<f64>>,
    /// Per block: z values, z pre-activation tangents, blended h values and
    /// h tangents.
    z: Vec<Array2<f64>>,
    zpre_t: Vec<Vec<Array2<f64>>>,
    h: Vec<Array2<f64>>,
    ht: Vec<Vec<Array2<f64>>>,
}

fn weight_view<'a>(data: &'a [f64], range: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &data[range.clone()]).expect("weight shape")
}

fn bias_view<'a>(data: &'a [f64], range: &std::ops::Range<usize>) -> ArrayView1<'a, f64> {
    ArrayView1::from_shape(range.len(), &data[range.clone()]).expect("bias shape")
}

/// Lift raw standardized inputs and their seed tangents into feature space.
fn lift_batch(
    xs: ArrayView2<f64>,
    fourier: usize,
    seeds: &[(usize, f64)],
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let b = xs.nrows();
    let n = xs.ncols();
    let d = n * (1 + 2 * fourier);
    let mut x = Array2::zeros((b, d));
    x.slice_mut(ndarray::s![.., 0..n]).assign(&xs);
    for k in 1..=fourier {
        let freq = k as f64 * std::f64::consts::PI;
        for j in 0..n {
            for row in 0..b {
                let arg = freq * xs[[row, j]];
                x[[row, n * (2 * k - 1) + j]] = arg.sin();
                x[[row, n * (2 * k) + j]] = arg.cos();
            }
        }
    }
    let mut xt = Vec::with_capacity(seeds.len());
    for &(col, scale) in seeds {
        let mut t = Array2::zeros((b, d));
        for row in 0..b {
            t[[row, col]] = scale;
        }
        for k in 1..=fourier {
            let freq = k as f64 * std::f64::consts::PI;
            for row in 0..b {
                let arg = freq * xs[[row, col]];
                t[[row, n * (2 * k - 1) + col]] = freq * arg.cos() * scale;
                t[[row, n * (2 * k) + col]] = -freq * arg.sin() * scale;
            }
        }
        xt.push(t);
    }
    (x, xt)
}

/// Batched forward pass with tangent channels.
///
/// `xs` is `B × input_dim` of raw standardized inputs; each seed
/// `(col, scale)` adds a tangent channel `∂/∂s_t` with
/// `∂xs[·, col]/∂s_t = scale`. Returns the trace (for [`backward_batch`]),
/// the output values (B) and output tangents (B × T).
pub fn forward_batch(
    params: &MlpParameters,
    xs: ArrayView2<f64>,
    seeds: &[(usize, f64)],
) -> (BatchTrace, Array1<f64>, Array2<f64>) {
    let arch = &params.arch;
    debug_assert_eq!(xs.ncols(), arch.input_dim);
    let layout = arch.layout();
    let p = params.data();
    let w = arch.width;
    let b = xs.nrows();
    let nt = seeds.len();
    let d = arch.lifted_dim();

    let (x, xt) = lift_batch(xs, arch.fourier_features, seeds);

    let encoder = |wr: &std::ops::Range<usize>, br: &std::ops::Range<usize>| {
        let wts = weight_view(p, wr, w, d);
        let bias = bias_view(p, br);
        let mut pre = x.dot(&wts.t());
        pre += &bias;
        let act = pre.mapv(f64::tanh);
        let mut pre_t = Vec::with_capacity(nt);
        let mut act_t = Vec::with_capacity(nt);
        for t in 0..nt {
            let pt = xt[t].dot(&wts.t());
            let at = (1.0 - &act * &act) * &pt;
            pre_t.push(pt);
            act_t.push(at);
        }
        (act, pre_t, act_t)
    };
    let (u, upre_t, ut) = encoder(&layout.wu, &layout.bu);
    let (v, vpre_t, vt) = encoder(&layout.wv, &layout.bv);

    let mut z_all = Vec::with_capacity(arch.depth);
    let mut zpre_t_all = Vec::with_capacity(arch.depth);
    let mut h_all: Vec<Array2<f64>> = Vec::with_capacity(arch.depth);
    let mut ht_all: Vec<Vec<Array2<f64>>> = Vec::with_capacity(arch.depth);

    for (k, (wr, br, in_dim)) in layout.blocks.iter().enumerate() {
        let wts = weight_view(p, wr, w, *in_dim);
        let bias = bias_view(p, br);
        let (h_in, ht_in): (&Array2<f64>, &Vec<Array2<f64>>) = if k == 0 {
            (&x, &xt)
        } else {
            (&h_all[k - 1], &ht_all[k - 1])
        };
        let mut zpre = h_in.dot(&wts.t());
        zpre += &bias;
        let z = zpre.mapv(f64::tanh);
        let dz = 1.0 - &z * &z;
        let h = (1.0 - &z) * &u + &z * &v;
        let mut zpre_t = Vec::with_capacity(nt);
        let mut ht = Vec::with_capacity(nt);
        for t in 0..nt {
            let pt = ht_in[t].dot(&wts.t());
            let zt = &dz * &pt;
            let hnew_t = &zt * (&v - &u) + (1.0 - &z) * &ut[t] + &z * &vt[t];
            zpre_t.push(pt);
            ht.push(hnew_t);
        }
        z_all.push(z);
        zpre_t_all.push(zpre_t);
        h_all.push(h);
        ht_all.push(ht);
    }

    let head_w = bias_view(p, &layout.head_w);
    let head_b = p[layout.head_b];
    let h_last = &h_all[arch.depth - 1];
    let values = h_last.dot(&head_w) + head_b;
    let mut tangents = Array2::zeros((b, nt));
    for t in 0..nt {
        let col = ht_all[arch.depth - 1][t].dot(&head_w);
        tangents.column_mut(t).assign(&col);
    }

    (
        BatchTrace {
            x,
            xt,
            u,
            upre_t,
            ut,
            v,
            vpre_t,
            vt,
            z: z_all,
            zpre_t: zpre_t_all,
            h: h_all,
            ht: ht_all,
        },
        values,
        tangents,
    )
}

/// Values only, no tangents, no trace — the cheap inference path.
pub fn forward_values(params: &MlpParameters, xs: ArrayView2<f64>) -> Array1<f64> {
    let (_, values, _) = forward_batch(params, xs, &[]);
    values
}

fn grad_mut<'a>(grad: &'a mut [f64], range: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut grad[range.clone()]).expect("grad shape")
}

/// Reverse pass over a stored trace.
///
/// Computes the parameter gradient of
/// `S = Σ_b cot_value[b]·out[b] + Σ_{t,b} cot_tangents[t][b]·out_t[t][b]`.
pub fn backward_batch(
    params: &MlpParameters,
    trace: &BatchTrace,
    cot_value: ArrayView1<f64>,
    cot_tangents: &[ArrayView1<f64>],
) -> Vec<f64> {
    let arch = &params.arch;
    let layout: Layout = arch.layout();
    let p = params.data();
    let w = arch.width;
    let nt = trace.xt.len();
    debug_assert_eq!(cot_tangents.len(), nt);

    let mut grad = vec![0.0; params.len()];

    let head_w = bias_view(p, &layout.head_w);
    let h_last = &trace.h[arch.depth - 1];
    let ht_last = &trace.ht[arch.depth - 1];

    // head
    {
        let mut gw = head_w.to_owned() * 0.0;
        gw += &h_last.t().dot(&cot_value);
        for t in 0..nt {
            gw += &ht_last[t].t().dot(&cot_tangents[t]);
        }
        grad[layout.head_w.clone()].copy_from_slice(gw.as_slice().expect("contiguous"));
        grad[layout.head_b] = cot_value.sum();
    }

    // seed the running adjoints of h and its tangents
    let cot2 = cot_value.insert_axis(Axis(1));
    let mut h_bar: Array2<f64> = &cot2 * &head_w;
    let mut ht_bar: Vec<Array2<f64>> = (0..nt)
        .map(|t| &cot_tangents[t].insert_axis(Axis(1)) * &head_w)
        .collect();

    // accumulated adjoints for the encoder outputs
    let mut u_bar: Array2<f64> = Array2::zeros(h_bar.raw_dim());
    let mut ut_bar: Vec<Array2<f64>> = (0..nt).map(|_| Array2::zeros(h_bar.raw_dim())).collect();
    let mut v_bar: Array2<f64> = Array2::zeros(h_bar.raw_dim());
    let mut vt_bar: Vec<Array2<f64>> = (0..nt).map(|_| Array2::zeros(h_bar.raw_dim())).collect();

    let u = &trace.u;
    let v = &trace.v;
    let v_minus_u = v - u;

    for k in (0..arch.depth).rev() {
        let z = &trace.z[k];
        let dz = 1.0 - z * z;
        let one_minus_z = 1.0 - z;

        // blend: h = (1−z)⊙u + z⊙v ; ht = zt⊙(v−u) + (1−z)⊙ut + z⊙vt
        let mut z_bar = &h_bar * &v_minus_u;
        let mut zt_bar: Vec<Array2<f64>> = Vec::with_capacity(nt);
        for t in 0..nt {
            let zt = &dz * &trace.zpre_t[k][t];
            z_bar += &(&ht_bar[t] * &(&trace.vt[t] - &trace.ut[t]));
            u_bar -= &(&ht_bar[t] * &zt);
            v_bar += &(&ht_bar[t] * &zt);
            ut_bar[t] += &(&ht_bar[t] * &one_minus_z);
            vt_bar[t] += &(&ht_bar[t] * z);
            zt_bar.push(&ht_bar[t] * &v_minus_u);
        }
        u_bar += &(&h_bar * &one_minus_z);
        v_bar += &(&h_bar * z);

        // tanh: z = tanh(zpre), zt = dz⊙zpre_t
        let mut zpre_bar = &z_bar * &dz;
        let mut zpre_t_bar: Vec<Array2<f64>> = Vec::with_capacity(nt);
        for t in 0..nt {
            zpre_bar += &(&zt_bar[t] * &(-2.0 * z * &dz) * &trace.zpre_t[k][t]);
            zpre_t_bar.push(&zt_bar[t] * &dz);
        }

        // linear: zpre = h_in·Wᵀ + b
        let (wr, br, in_dim) = &layout.blocks[k];
        let wts = weight_view(p, wr, w, *in_dim);
        let (h_in, ht_in): (&Array2<f64>, &Vec<Array2<f64>>) = if k == 0 {
            (&trace.x, &trace.xt)
        } else {
            (&trace.h[k - 1], &trace.ht[k - 1])
        };
        {
            let mut gw = grad_mut(&mut grad, wr, w, *in_dim);
            gw += &zpre_bar.t().dot(h_in);
            for t in 0..nt {
                gw += &zpre_t_bar[t].t().dot(&ht_in[t]);
            }
        }
        {
            let gb = zpre_bar.sum_axis(Axis(0));
            grad[br.clone()]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(s, g)| *s += g);
        }
        if k > 0 {
            h_bar = zpre_bar.dot(&wts);
            for t in 0..nt {
                ht_bar[t] = zpre_t_bar[t].dot(&wts);
            }
        }
    }

    // encoders: a = tanh(x·Wᵀ + b)
    let encoder_back = |a: &Array2<f64>,
                            apre_t: &[Array2<f64>],
                            a_bar: &Array2<f64>,
                            at_bar: &[Array2<f64>],
                            wr: &std::ops::Range<usize>,
                            br: &std::ops::Range<usize>,
                            grad: &mut [f64]| {
        let da = 1.0 - a * a;
        let mut pre_bar = a_bar * &da;
        let mut pre_t_bar: Vec<Array2<f64>> = Vec::with_capacity(nt);
        for t in 0..nt {
            pre_bar += &(&at_bar[t] * &(-2.0 * a * &da) * &apre_t[t]);
            pre_t_bar.push(&at_bar[t] * &da);
        }
        let d = arch.lifted_dim();
        {
            let mut gw = grad_mut(grad, wr, w, d);
            gw += &pre_bar.t().dot(&trace.x);
            for t in 0..nt {
                gw += &pre_t_bar[t].t().dot(&trace.xt[t]);
            }
        }
        let gb = pre_bar.sum_axis(Axis(0));
        grad[br.clone()]
            .iter_mut()
            .zip(gb.iter())
            .for_each(|(s, g)| *s += g);
    };
    encoder_back(u, &trace.upre_t, &u_bar, &ut_bar, &layout.wu, &layout.bu, &mut grad);
    encoder_back(v, &trace.vpre_t, &v_bar, &vt_bar, &layout.wv, &layout.bv, &mut grad);

    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, init, MlpArchitecture};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batched_values_match_scalar_forward() {
        let arch = MlpArchitecture::new(4, 10, 3);
        let p = init(arch, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = 7;
        let xs = Array2::from_shape_fn((b, 4), |_| rng.gen_range(-1.0..1.0));
        let vals = forward_values(&p, xs.view());
        for row in 0..b {
            let x: Vec<f64> = xs.row(row).to_vec();
            let scalar = forward(&p, &x);
            assert!(
                (vals[row] - scalar).abs() < 1e-12,
                "row {row}: {} vs {scalar}",
                vals[row]
            );
        }
    }

    #[test]
    fn batched_tangents_match_finite_differences() {
        let arch = MlpArchitecture {
            input_dim: 3,
            width: 9,
            depth: 2,
            fourier_features: 1,
        };
        let p = init(arch, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-0.9..0.9));
        let seeds: Vec<(usize, f64)> = vec![(0, 1.0), (2, 0.5)];
        let (_, _, tangents) = forward_batch(&p, xs.view(), &seeds);
        let h = 1e-6;
        for row in 0..5 {
            for (t, &(col, scale)) in seeds.iter().enumerate() {
                let mut xp: Vec<f64> = xs.row(row).to_vec();
                let mut xm = xp.clone();
                xp[col] += h;
                xm[col] -= h;
                let fd = scale * (forward(&p, &xp) - forward(&p, &xm)) / (2.0 * h);
                assert!(
                    (tangents[[row, t]] - fd).abs() < 1e-7,
                    "row {row} seed {t}: {} vs {fd}",
                    tangents[[row, t]]
                );
            }
        }
    }

    #[test]
    fn backward_weighted_combination_matches_finite_differences() {
        let arch = MlpArchitecture::new(2, 5, 3);
        let p = init(arch, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = 4;
        let xs = Array2::from_shape_fn((b, 2), |_| rng.gen_range(-0.8..0.8));
        let seeds: Vec<(usize, f64)> = vec![(0, 1.0), (1, 1.0)];
        let cot_val = Array1::from_shape_fn(b, |_| rng.gen_range(-1.0..1.0));
        let cot_tan: Vec<Array1<f64>> =
            (0..2).map(|_| Array1::from_shape_fn(b, |_| rng.gen_range(-1.0..1.0))).collect();

        let (trace, _, _) = forward_batch(&p, xs.view(), &seeds);
        let grad = backward_batch(
            &p,
            &trace,
            cot_val.view(),
            &cot_tan.iter().map(|a| a.view()).collect::<Vec<_>>(),
        );

        let objective = |params: &crate::network::MlpParameters| -> f64 {
            let (_, values, tangents) = forward_batch(params, xs.view(), &seeds);
            let mut s = 0.0;
            for row in 0..b {
                s += cot_val[row] * values[row];
                for t in 0..2 {
                    s += cot_tan[t][row] * tangents[[row, t]];
                }
            }
            s
        };

        let h = 1e-6;
        for _ in 0..30 {
            let idx = rng.gen_range(0..p.len());
            let mut pp = p.clone();
            pp.data_mut()[idx] += h;
            let mut pm = p.clone();
            pm.data_mut()[idx] -= h;
            let fd = (objective(&pp) - objective(&pm)) / (2.0 * h);
            assert!(
                (grad[idx] - fd).abs() < 1e-5_f64.max(1e-5 * fd.abs()),
                "param {idx}: exact {} vs fd {fd}",
                grad[idx]
            );
        }
    }
}
