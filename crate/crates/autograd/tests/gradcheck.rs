use ctaug_autograd::ops::concat;
use ctaug_autograd::{Graph, Group, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Compares analytic gradients of `f` against central differences for every
/// element of every input.
fn check<F>(shapes: &[&[usize]], seed: u64, f: F)
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| store.add(format!("in{i}"), random(s, &mut rng), Group::Body))
        .collect();
    // Weight the output by a fixed random projection so every output element matters.
    let eval = |store: &ParamStore<f64>, track: bool| {
        let g = Graph::new();
        if track {
            g.track(store);
        }
        let vars: Vec<_> = ids.iter().map(|&id| g.param(store, id)).collect();
        let out = f(&g, &vars);
        let mut prng = ChaCha8Rng::seed_from_u64(99);
        let proj = Tensor::from_fn(out.shape(), |_| prng.random_range(-1.0..1.0));
        let loss = out.mul(g.input(proj)).sum_all();
        let value = loss.item();
        let grads = track.then(|| g.backward(loss));
        (value, grads.map(|gr| ids.iter().map(|&id| gr.get(store, id).cloned()).collect::<Vec<_>>()))
    };
    let (_, analytic) = eval(&store, true);
    let analytic = analytic.unwrap();
    let h = 1e-6;
    for (k, &id) in ids.iter().enumerate() {
        let grad = analytic[k].clone().expect("input gradient");
        for i in 0..store.value(id).numel() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let (plus, _) = eval(&store, false);
            store.value_mut(id).data_mut()[i] = orig - h;
            let (minus, _) = eval(&store, false);
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (a - numeric).abs() / denom < 1e-5,
                "input {k} element {i}: analytic {a}, numeric {numeric}"
            );
        }
    }
}

#[test]
fn elementwise_ops() {
    check(&[&[2, 3], &[2, 3]], 1, |_, v| v[0].mul(v[1]).add(v[0]).sub(v[1].scale(0.5)));
    check(&[&[2, 5]], 2, |_, v| v[0].tanh().add(v[0].sigmoid()).add(v[0].silu()));
    check(&[&[2, 5]], 3, |_, v| v[0].gelu().add(v[0].leaky_relu(0.2)).add(v[0].square()));
    check(&[&[3, 4]], 4, |_, v| v[0].add_scalar(2.0).abs().add(v[0].relu()));
}

#[test]
fn broadcast_and_channel_scale() {
    check(&[&[3, 2, 4], &[1, 2, 4]], 5, |_, v| v[0].add_broadcast0(v[1]));
    check(&[&[2, 3, 2, 2], &[2, 3]], 6, |_, v| v[0].scale_channels(v[1]));
    check(&[&[1, 2, 3]], 7, |_, v| v[0].expand0(3));
}

#[test]
fn shape_ops() {
    check(&[&[2, 3, 4]], 8, |_, v| v[0].permute(&[2, 0, 1]).reshape(&[4, 6]));
    check(&[&[2, 5, 3]], 9, |_, v| v[0].narrow(1, 1, 3));
    check(&[&[2, 2, 3], &[2, 1, 3]], 10, |_, v| concat(&[v[0], v[1]], 1));
}

#[test]
fn reductions_and_pooling() {
    check(&[&[2, 3, 4, 4]], 11, |_, v| v[0].global_avg_pool());
    check(&[&[2, 2, 4, 5]], 12, |_, v| v[0].avg_pool2d(2));
    check(&[&[3, 4]], 13, |_, v| v[0].mean_all());
}

#[test]
fn convolutions() {
    check(&[&[2, 3, 6, 5], &[4, 3, 3, 3], &[4]], 14, |_, v| v[0].conv2d(v[1], Some(v[2]), 1, 1));
    check(&[&[1, 2, 7, 7], &[3, 2, 4, 4], &[3]], 15, |_, v| v[0].conv2d(v[1], Some(v[2]), 2, 1));
    check(&[&[1, 2, 5, 5], &[2, 2, 3, 3]], 16, |_, v| v[0].conv2d(v[1], None, 2, 0));
    check(&[&[2, 3, 3, 4], &[3, 2, 3, 3], &[2]], 17, |_, v| {
        v[0].conv_transpose2d(v[1], Some(v[2]), 2, 1, 1)
    });
    check(&[&[2, 3, 6, 6], &[3, 1, 3, 3], &[3]], 18, |_, v| {
        v[0].depthwise_conv2d(v[1], Some(v[2]), 2, 1)
    });
    check(&[&[1, 2, 4, 5]], 19, |_, v| v[0].pad_reflect(2));
}

#[test]
fn normalization() {
    check(&[&[2, 3, 3, 3]], 20, |_, v| v[0].instance_norm(1e-5));
    check(&[&[2, 3, 5], &[5], &[5]], 21, |_, v| v[0].layer_norm(v[1], v[2], 1e-6));
}

#[test]
fn matmuls_and_softmax() {
    check(&[&[2, 3, 4], &[5, 4], &[5]], 22, |_, v| v[0].linear(v[1], Some(v[2])));
    check(&[&[2, 3, 4], &[2, 4, 5]], 23, |_, v| v[0].bmm(v[1], false));
    check(&[&[2, 3, 4], &[2, 5, 4]], 24, |_, v| v[0].bmm(v[1], true));
    check(&[&[3, 6]], 25, |_, v| v[0].softmax_last());
}

#[test]
fn losses() {
    check(&[&[4, 3]], 26, |_, v| v[0].cross_entropy(&[0, 2, 1, 2]));
    check(&[&[2, 1, 3, 3]], 27, |_, v| v[0].mse_to(1.0));
    check(&[&[2, 5], &[2, 5]], 28, |_, v| v[0].l1(v[1]));
}

#[test]
fn shared_parameter_accumulates_gradient() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::new(vec![1], vec![3.0]).unwrap(), Group::Body);
    let g = Graph::new();
    g.track(&store);
    let x = g.param(&store, id);
    let x2 = g.param(&store, id);
    let loss = x.mul(x2).sum_all();
    let grads = g.backward(loss);
    assert_eq!(grads.get(&store, id).unwrap().data(), &[6.0]);
}

#[test]
fn frozen_and_untracked_parameters_get_no_gradient() {
    let mut store = ParamStore::<f64>::new();
    let a = store.add("a", Tensor::new(vec![1], vec![2.0]).unwrap(), Group::Body);
    let b = store.add("b", Tensor::new(vec![1], vec![5.0]).unwrap(), Group::Head);
    store.set_group_frozen(Group::Body, true);
    let other = ParamStore::<f64>::new();
    let g = Graph::new();
    g.track(&store);
    let loss = g.param(&store, a).mul(g.param(&store, b)).sum_all();
    let grads = g.backward(loss);
    assert!(grads.get(&store, a).is_none());
    assert_eq!(grads.get(&store, b).unwrap().data(), &[2.0]);
    assert!(grads.get(&other, a).is_none());

    let g = Graph::new();
    let loss = g.param(&store, b).square().sum_all();
    assert!(!loss.requires_grad());
    assert!(g.backward(loss).is_empty());
}

#[test]
fn conv2d_forward_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (n, c, h, w, o, k, stride, pad) = (2, 3, 7, 6, 4, 3, 2, 1);
    let x = random(&[n, c, h, w], &mut rng);
    let wt = random(&[o, c, k, k], &mut rng);
    let g = Graph::new();
    let y = g.input(x.clone()).conv2d(g.input(wt.clone()), None, stride, pad).value();
    let (oh, ow) = (y.shape()[2], y.shape()[3]);
    assert_eq!((oh, ow), ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1));
    for s in 0..n {
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for a in 0..k {
                            for b in 0..k {
                                let iy = (i * stride + a) as isize - pad as isize;
                                let ix = (j * stride + b) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((s * c + ci) * h + iy as usize) * w + ix as usize]
                                    * wt.data()[((oc * c + ci) * k + a) * k + b];
                            }
                        }
                    }
                    let got = y.data()[((s * o + oc) * oh + i) * ow + j];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // <convT(x; W), z> == <x, conv(z; W)> for matching geometry.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (ci, co, k, stride, pad, out_pad) = (3, 2, 3, 2, 1, 1);
    let x = random(&[1, ci, 4, 4], &mut rng);
    let wt = random(&[ci, co, k, k], &mut rng);
    let g = Graph::new();
    let up = g.input(x.clone()).conv_transpose2d(g.input(wt.clone()), None, stride, pad, out_pad).value();
    assert_eq!(up.shape(), &[1, co, 8, 8]);
    let z = random(up.shape(), &mut rng);
    let down = g.input(z.clone()).conv2d(g.input(wt), None, stride, pad).value();
    let lhs: f64 = up.data().iter().zip(z.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.data().iter().zip(down.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10);
}
