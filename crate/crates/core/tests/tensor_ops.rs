mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::{seeded, tensor};
use windsched::tensor::{read_checkpoint, write_checkpoint, AttentionSpec, Checkpoint, Graph, Tensor, TensorError, Var, MASK_NEG};

fn row(values: &[f64]) -> Tensor {
    Tensor::new(vec![1, values.len()], values.to_vec()).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::new();
    let x = g.input(row(&[0.0, 0.0, 0.0]));
    let p = g.softmax(x);
    for &v in g.value(p).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn masked_entry_gets_exactly_zero() {
    let mut g = Graph::new();
    let x = g.input(row(&[0.0, 0.0, 0.0]));
    let m = g.masked_add(x, &[0.0, MASK_NEG, 0.0]).unwrap();
    let p = g.softmax(m);
    assert_eq!(g.value(p).data(), &[0.5, 0.0, 0.5]);
}

#[test]
fn fully_masked_row_is_an_error() {
    let mut g = Graph::new();
    let x = g.input(row(&[1.0, 2.0]));
    assert!(matches!(g.masked_add(x, &[MASK_NEG, MASK_NEG]), Err(TensorError::FullyMasked)));
}

#[test]
fn matmul_fixture_by_hand() {
    let mut g = Graph::new();
    let a = g.input(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap());
    let b = g.input(Tensor::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0], vec![11.0, 12.0]]).unwrap());
    let c = g.matmul(a, b).unwrap();
    // [1*7+2*9+3*11, 1*8+2*10+3*12; 4*7+5*9+6*11, 4*8+5*10+6*12]
    assert_eq!(g.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    assert_eq!(g.value(c).shape(), &[2, 2]);
}

#[test]
fn matmul_shape_mismatch() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[2, 3]));
    assert!(matches!(g.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn square_has_gradient_six_at_three() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(3.0));
    let y = g.mul(x, x).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[6.0]);
}

#[test]
fn sum_of_softmax_has_zero_gradient() {
    let mut g = Graph::new();
    let x = g.input(row(&[0.3, -1.2, 2.0, 0.7]));
    let p = g.softmax(x);
    let s = g.sum(p);
    let grads = g.backward(s).unwrap();
    for &d in grads.get(x).unwrap() {
        assert!(d.abs() < 1e-15);
    }
}

#[test]
fn backward_twice_is_an_error() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(1.0));
    let y = g.tanh(x);
    g.backward(y).unwrap();
    assert!(matches!(g.backward(y), Err(TensorError::BackwardTwice)));
}

#[test]
fn non_scalar_loss_is_an_error() {
    let mut g = Graph::new();
    let x = g.input(row(&[1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
}

/// Builds `sum(w * f(inputs))` for a fixed random `w`, so every output
/// entry carries a distinct weight.
fn weighted_loss(g: &mut Graph, out: Var, rng: &mut ChaCha8Rng) -> Var {
    let (r, c) = g.value(out).matrix_dims();
    let w = g.input(tensor(r, c, rng));
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// Compares reverse-mode gradients of every input with central differences.
fn check_op(inputs: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    const EPS: f64 = 1e-5;
    let loss_of = |inputs: &[Tensor]| -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = build(&mut g, &vars);
        let loss = weighted_loss(&mut g, out, &mut seeded(99));
        (g, vars, loss)
    };
    let (mut g, vars, loss) = loss_of(&inputs);
    let grads = g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (n, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[n], t.len());
        for k in 0..t.len() {
            let eval = |d: f64| {
                let mut moved = inputs.clone();
                moved[n].data_mut()[k] += d;
                let (g, _, l) = loss_of(&moved);
                g.value(l).data()[0]
            };
            let numeric = (eval(EPS) - eval(-EPS)) / (2.0 * EPS);
            let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

const FD_TOL: f64 = 1e-4;

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = seeded(1);
    let mut cases: Vec<(&str, f64)> = Vec::new();
    let (a, b) = (tensor(3, 4, &mut rng), tensor(4, 2, &mut rng));
    cases.push(("matmul", check_op(vec![a.clone(), b], |g, v| g.matmul(v[0], v[1]).unwrap())));
    let c = tensor(3, 4, &mut rng);
    cases.push(("add", check_op(vec![a.clone(), c.clone()], |g, v| g.add(v[0], v[1]).unwrap())));
    cases.push(("mul", check_op(vec![a.clone(), c.clone()], |g, v| g.mul(v[0], v[1]).unwrap())));
    let bias = tensor(1, 4, &mut rng);
    cases.push(("add_row", check_op(vec![a.clone(), bias], |g, v| g.add_row(v[0], v[1]).unwrap())));
    cases.push(("scale", check_op(vec![a.clone()], |g, v| g.scale(v[0], -2.5))));
    cases.push(("concat0", check_op(vec![a.clone(), c.clone()], |g, v| g.concat(&[v[0], v[1]], 0).unwrap())));
    cases.push(("concat1", check_op(vec![a.clone(), c.clone()], |g, v| g.concat(&[v[0], v[1]], 1).unwrap())));
    cases.push(("slice_rows", check_op(vec![a.clone()], |g, v| g.slice_rows(v[0], 1, 2).unwrap())));
    cases.push(("gather_rows", check_op(vec![a.clone()], |g, v| g.gather_rows(v[0], &[2, 0, 2, 1]).unwrap())));
    cases.push(("transpose", check_op(vec![a.clone()], |g, v| g.transpose(v[0]))));
    cases.push(("softmax", check_op(vec![a.clone()], |g, v| g.softmax(v[0]))));
    cases.push(("sigmoid", check_op(vec![a.clone()], |g, v| g.sigmoid(v[0]))));
    cases.push(("tanh", check_op(vec![a.clone()], |g, v| g.tanh(v[0]))));
    let pos = Tensor::new(vec![3, 4], a.data().iter().map(|x| x.abs() + 0.5).collect()).unwrap();
    cases.push(("log", check_op(vec![pos], |g, v| g.log(v[0]))));
    cases.push(("sum", check_op(vec![a.clone()], |g, v| g.sum(v[0]))));
    cases.push(("sum_axis0", check_op(vec![a.clone()], |g, v| g.sum_axis(v[0], 0).unwrap())));
    cases.push(("sum_axis1", check_op(vec![a.clone()], |g, v| g.sum_axis(v[0], 1).unwrap())));
    cases.push((
        "masked_add",
        check_op(vec![a.clone()], |g, v| {
            let m = g.masked_add(v[0], &[0.0, MASK_NEG, 0.0, 0.0]).unwrap();
            g.softmax(m)
        }),
    ));
    cases.push(("element", check_op(vec![a.clone()], |g, v| g.element(v[0], 5).unwrap())));
    cases.push(("row_standardize", check_op(vec![a.clone()], |g, v| g.row_standardize(v[0]))));
    let (q, k, val) = (tensor(4, 4, &mut rng), tensor(6, 4, &mut rng), tensor(6, 6, &mut rng));
    cases.push((
        "attention",
        check_op(vec![q, k, val], |g, v| {
            g.attention(
                v[0],
                v[1],
                v[2],
                AttentionSpec {
                    groups: 2,
                    q_rows: 2,
                    kv_rows: 3,
                    heads: 2,
                    scale: 0.7,
                    key_mask: Some(vec![0.0, MASK_NEG, 0.0]),
                },
            )
            .unwrap()
        }),
    ));
    for (name, err) in &cases {
        assert!(*err < FD_TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn attention_two_keys_by_hand() {
    // one query [1, 0], keys [1, 0] and [0, 1], scale 1: weights softmax([1, 0])
    let mut g = Graph::new();
    let q = g.input(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
    let k = g.input(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let v = g.input(Tensor::from_rows(&[vec![10.0], vec![20.0]]).unwrap());
    let out = g
        .attention(
            q,
            k,
            v,
            AttentionSpec {
                groups: 1,
                q_rows: 1,
                kv_rows: 2,
                heads: 1,
                scale: 1.0,
                key_mask: None,
            },
        )
        .unwrap();
    let e = std::f64::consts::E;
    let w0 = e / (e + 1.0);
    let w = g.attention_weights(out).unwrap();
    assert!((w[0] - w0).abs() < 1e-15 && (w[1] - (1.0 - w0)).abs() < 1e-15);
    assert!((g.value(out).data()[0] - (10.0 * w0 + 20.0 * (1.0 - w0))).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>(), masked in any::<u8>()) {
        let mut rng = seeded(seed);
        let t = Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-30.0..30.0)).collect()).unwrap();
        let mut mask: Vec<f64> = (0..cols).map(|j| if (masked >> (j % 8)) & 1 == 1 { MASK_NEG } else { 0.0 }).collect();
        mask[0] = 0.0;
        let mut g = Graph::new();
        let x = g.input(t);
        let plain = g.softmax(x);
        let m = g.masked_add(x, &mask).unwrap();
        let post = g.softmax(m);
        for p in [plain, post] {
            for r in g.value(p).data().chunks(cols) {
                prop_assert!(r.iter().all(|&v| v >= 0.0));
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        for r in g.value(post).data().chunks(cols) {
            for (v, mk) in r.iter().zip(&mask) {
                if *mk != 0.0 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = seeded(seed);
        let tensors: Vec<(String, Tensor)> = (0..n)
            .map(|k| {
                let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
                let data = (0..r * c).map(|_| f64::from_bits(rng.random::<u64>() >> 2)).collect();
                (format!("t{k}"), Tensor::new(vec![r, c], data).unwrap())
            })
            .collect();
        let ck = Checkpoint { meta: format!("{{\"seed\":{seed}}}"), tensors };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        write_checkpoint(&p, &ck).unwrap();
        let back = read_checkpoint(&p).unwrap();
        prop_assert_eq!(back.meta, ck.meta);
        for ((na, ta), (nb, tb)) in back.tensors.iter().zip(&ck.tensors) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(ta.shape(), tb.shape());
            let bits_a: Vec<u64> = ta.data().iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = tb.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
    }
}
