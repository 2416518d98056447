use super::*;
use crate::error::Result;
use crate::seed;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn rand(shape: &[usize], s: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut seed::rng(s))
}

#[test]
fn affine_identity_and_zero_input() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.5]).unwrap());
    let mut eye = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    let w = tape.constant(eye);
    let b0 = tape.constant(Tensor::zeros(&[3]));
    let y = tape.affine(x, w, b0).unwrap();
    assert_eq!(tape.value(y), tape.value(x));

    let zero = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::vector(vec![0.5, -1.0, 2.0]));
    let y = tape.affine(zero, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);

    let bad = tape.constant(Tensor::zeros(&[2, 4]));
    assert!(tape.affine(bad, w, b).is_err());
}

#[test]
fn affine_gradient() {
    for s in 0..20 {
        let f = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let y = t.affine(v[0], v[1], v[2])?;
            let w = t.constant(rand(&[3, 2], 1000 + s));
            let yw = t.mul(y, w)?;
            Ok(t.sum(yw))
        };
        let point = [rand(&[3, 4], s), rand(&[4, 2], s + 50), rand(&[2], s + 99)];
        let r = gradient_check(f, &point, H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

#[test]
fn relu_values_and_dead_region() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![-1.0, 2.0, 0.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 2.0, 0.0]);

    let neg = tape.param(Tensor::full(&[4], -0.3));
    let r = tape.relu(neg);
    let s = tape.sum(r);
    assert_eq!(tape.value(s).item(), 0.0);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(neg).unwrap().data(), &[0.0; 4]);
    // subgradient at zero is zero
    let s2 = tape.sum(y);
    assert_eq!(tape.backward(s2).unwrap().get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn relu_gradient() {
    for s in 0..20 {
        let f = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let r = t.relu(v[0]);
            let w = t.constant(rand(&[5, 3], 77 + s));
            let rw = t.mul(r, w)?;
            Ok(t.sum(rw))
        };
        let r = gradient_check(f, &[rand(&[5, 3], s)], H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

#[test]
fn dropout_contract() {
    let mut rng = seed::rng(3);
    let mut tape = Tape::new();
    let x = tape.param(rand(&[100], 1));
    assert_eq!(tape.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.7, Mode::Infer, &mut rng).unwrap(), x);
    assert!(tape.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
    assert!(tape.dropout(x, -0.1, Mode::Train, &mut rng).is_err());

    let n = 10_000;
    let ones = tape.param(Tensor::full(&[n], 1.0));
    let d = tape.dropout(ones, 0.5, Mode::Train, &mut rng).unwrap();
    let vals = tape.value(d).data();
    let zeros = vals.iter().filter(|&&v| v == 0.0).count() as f64;
    // binomial(n, 0.5): sigma = sqrt(n p (1 - p)) = 50
    assert!((zeros - 5000.0).abs() <= 3.0 * 50.0, "{zeros} zeros");
    assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));

    // same seed, same mask
    let mask = |seed| {
        let mut t = Tape::new();
        let x = t.param(Tensor::full(&[64], 1.0));
        let d = t.dropout(x, 0.3, Mode::Train, &mut seed::rng(seed)).unwrap();
        t.value(d).clone()
    };
    assert_eq!(mask(11), mask(11));
}

#[test]
fn dropout_gradient() {
    for s in 0..20 {
        let f = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let d = t.dropout(v[0], 0.4, Mode::Train, &mut seed::rng(s))?;
            let w = t.constant(rand(&[6], s + 1));
            let dw = t.mul(d, w)?;
            Ok(t.sum(dw))
        };
        let r = gradient_check(f, &[rand(&[6], s)], H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

#[test]
fn conv1d_identity_and_shift_invariance() {
    let mut tape = Tape::new();
    let seq = tape.constant(rand(&[5, 3], 4));
    let mut filt = Tensor::zeros(&[1, 3, 3]);
    for d in 0..3 {
        filt.data_mut()[d * 3 + d] = 1.0;
    }
    let f = tape.constant(filt);
    let b = tape.constant(Tensor::zeros(&[3]));
    let out = tape.conv1d(seq, f, b).unwrap();
    assert_eq!(tape.value(out), tape.value(seq));

    let constant = tape.constant(Tensor::full(&[6, 3], 0.7));
    let f3 = tape.constant(rand(&[3, 3, 4], 5));
    let b4 = tape.constant(rand(&[4], 6));
    let out = tape.conv1d(constant, f3, b4).unwrap();
    let v = tape.value(out);
    assert_eq!(v.shape(), &[4, 4]);
    for t in 1..4 {
        assert_eq!(v.row(t), v.row(0));
    }

    let short = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.conv1d(short, f3, b4), Err(crate::Error::InvalidArgument(_))));
}

#[test]
fn conv1d_bank_gradient() {
    for s in 0..20 {
        let f = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let outs = t.conv1d_bank(v[0], &[(v[1], v[2]), (v[3], v[4])])?;
            let mut terms = Vec::new();
            for (k, o) in outs.into_iter().enumerate() {
                let shape = t.value(o).shape().to_vec();
                let w = t.constant(rand(&shape, 500 + s * 7 + k as u64));
                let ow = t.mul(o, w)?;
                terms.push(t.sum(ow));
            }
            t.add_n(&terms)
        };
        let point = [rand(&[7, 3], s), rand(&[2, 3, 2], s + 1), rand(&[2], s + 2), rand(&[3, 3, 2], s + 3), rand(&[2], s + 4)];
        let r = gradient_check(f, &point, H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

#[test]
fn max_over_time_ties_and_singleton() {
    let mut tape = Tape::new();
    let one = tape.param(Tensor::matrix(1, 3, vec![1.0, -2.0, 3.0]).unwrap());
    let m = tape.max_over_time(one).unwrap();
    assert_eq!(tape.value(m).data(), &[1.0, -2.0, 3.0]);

    let flat = tape.param(Tensor::full(&[4, 2], 0.25));
    let m = tape.max_over_time(flat).unwrap();
    assert_eq!(tape.value(m).data(), &[0.25, 0.25]);
    let s = tape.sum(m);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(flat).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    let empty = tape.param(Tensor::zeros(&[0, 2]));
    assert!(tape.max_over_time(empty).is_err());
}

#[test]
fn max_over_time_gradient() {
    for s in 0..20 {
        let f = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let m = t.max_over_time(v[0])?;
            let w = t.constant(rand(&[4], 40 + s));
            let mw = t.mul(m, w)?;
            Ok(t.sum(mw))
        };
        let r = gradient_check(f, &[rand(&[5, 4], s)], H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

fn lstm_point(t_len: usize, dim: usize, hidden: usize, s: u64) -> Vec<Tensor> {
    vec![
        rand(&[t_len, dim], s),
        rand(&[dim, 4 * hidden], s + 1),
        rand(&[hidden, 4 * hidden], s + 2),
        rand(&[4 * hidden], s + 3),
        rand(&[hidden], s + 4),
        rand(&[hidden], s + 5),
    ]
}

#[test]
fn lstm_zero_parameters_give_zero_output() {
    let mut tape = Tape::new();
    let seq = tape.constant(rand(&[4, 3], 8));
    let z = |t: &mut Tape, shape: &[usize]| t.param(Tensor::zeros(shape));
    let (wx, wh, b, h0, c0) = (z(&mut tape, &[3, 8]), z(&mut tape, &[2, 8]), z(&mut tape, &[8]), z(&mut tape, &[2]), z(&mut tape, &[2]));
    let h = tape.lstm_sequence(seq, 4, wx, wh, b, h0, c0).unwrap();
    assert_eq!(tape.value(h).data(), &[0.0, 0.0]);
    assert!(tape.lstm_sequence(seq, 0, wx, wh, b, h0, c0).is_err());
    assert!(tape.lstm_sequence(seq, 5, wx, wh, b, h0, c0).is_err());
}

#[test]
fn lstm_ignores_rows_past_true_length() {
    let p = lstm_point(6, 3, 4, 21);
    let run = |seq: Tensor| {
        let mut t = Tape::new();
        let vars: Vec<Var> = std::iter::once(seq).chain(p[1..].iter().cloned()).map(|x| t.param(x)).collect();
        let h = t.lstm_sequence(vars[0], 1, vars[1], vars[2], vars[3], vars[4], vars[5]).unwrap();
        t.value(h).clone()
    };
    let mut other = p[0].clone();
    other.data_mut()[3..].iter_mut().for_each(|v| *v = 9.0);
    assert_eq!(run(p[0].clone()), run(other));
}

#[test]
fn lstm_gradient_all_parameters() {
    for s in 0..20 {
        let len = 1 + (s as usize % 6);
        let f = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let h = t.lstm_sequence(v[0], len, v[1], v[2], v[3], v[4], v[5])?;
            let w = t.constant(rand(&[4], 300 + s));
            let hw = t.mul(h, w)?;
            Ok(t.sum(hw))
        };
        let r = gradient_check(f, &lstm_point(6, 3, 4, s * 10), H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}

#[test]
fn softmax_cross_entropy_values() {
    let (loss, probs) = softmax_cross_entropy(&[0.3; 4], 2).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-15);
    assert!(probs.iter().all(|p| (p - 0.25).abs() < 1e-15));

    let logits = [0.1, -2.0, 3.5];
    let (l1, p1) = softmax_cross_entropy(&logits, 0).unwrap();
    let shifted: Vec<f64> = logits.iter().map(|z| z + 123.0).collect();
    let (l2, p2) = softmax_cross_entropy(&shifted, 0).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in p1.iter().zip(&p2) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(softmax_cross_entropy(&logits, 3).is_err());
    let (big, p) = softmax_cross_entropy(&[1000.0, -1000.0], 1).unwrap();
    assert!(big.is_finite() && p.iter().all(|v| v.is_finite()));
}

#[test]
fn softmax_gradient_is_probs_minus_onehot() {
    for s in 0..20 {
        let label = (s % 5) as usize;
        let logits = rand(&[5], s);
        let mut tape = Tape::new();
        let z = tape.param(logits.clone());
        let loss = tape.softmax_cross_entropy(z, label).unwrap();
        let g = tape.backward(loss).unwrap();
        let probs = softmax(logits.data());
        for (c, (&gc, p)) in g.get(z).unwrap().data().iter().zip(&probs).enumerate() {
            let expected = p - if c == label { 1.0 } else { 0.0 };
            assert!((gc - expected).abs() < 1e-15);
        }
        let f = move |t: &mut Tape, v: &[Var]| t.softmax_cross_entropy(v[0], label);
        assert!(gradient_check(f, &[logits], H, TOL).unwrap().passed);

        let batch = rand(&[3, 5], s + 100);
        let f = |t: &mut Tape, v: &[Var]| t.softmax_cross_entropy_mean(v[0], &[0, 4, 2]);
        assert!(gradient_check(f, &[batch], H, TOL).unwrap().passed);
    }
}

#[test]
fn backward_linear_and_disconnected() {
    let mut tape = Tape::new();
    let w = tape.param(rand(&[3, 2], 1));
    let unused = tape.param(rand(&[4], 2));
    let loss = tape.sum(w);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(w).unwrap().data(), &[1.0; 6]);
    assert_eq!(g.get(unused).unwrap().data(), &[0.0; 4]);
    // non-scalar root
    assert!(tape.backward(w).is_err());
}

#[test]
fn shared_parameter_gradients_accumulate() {
    // f(W) = sum(relu(x W + b)) + sum(W * c); W used twice. Compare against a
    // copy of the graph where each use gets its own leaf.
    let x = rand(&[2, 3], 5);
    let w = rand(&[3, 3], 6);
    let b = rand(&[3], 7);
    let c = rand(&[3, 3], 8);

    let mut shared = Tape::new();
    let (xv, wv, bv, cv) = (shared.constant(x.clone()), shared.param(w.clone()), shared.constant(b.clone()), shared.constant(c.clone()));
    let h = shared.affine(xv, wv, bv).unwrap();
    let r = shared.relu(h);
    let s1 = shared.sum(r);
    let wc = shared.mul(wv, cv).unwrap();
    let s2 = shared.sum(wc);
    let loss = shared.add_n(&[s1, s2]).unwrap();
    let g_shared = shared.backward(loss).unwrap().get(wv).unwrap().clone();

    let mut split = Tape::new();
    let (xv, w1, w2, bv, cv) = (split.constant(x), split.param(w.clone()), split.param(w), split.constant(b), split.constant(c));
    let h = split.affine(xv, w1, bv).unwrap();
    let r = split.relu(h);
    let s1 = split.sum(r);
    let wc = split.mul(w2, cv).unwrap();
    let s2 = split.sum(wc);
    let loss = split.add_n(&[s1, s2]).unwrap();
    let g = split.backward(loss).unwrap();
    let summed: Vec<f64> = g.get(w1).unwrap().data().iter().zip(g.get(w2).unwrap().data()).map(|(a, b)| a + b).collect();
    assert_eq!(g_shared.data(), summed.as_slice());
}

#[test]
fn gather_concat_scale_gradients() {
    for s in 0..20 {
        let f = |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let rows = t.gather(v[0], &[2, 0, 2, 3])?;
            let m = t.max_over_time(rows)?;
            let c = t.concat(&[m, v[1]]);
            let sc = t.scale(c, 0.7);
            let w = t.constant(rand(&[5], s + 9));
            let p = t.mul(sc, w)?;
            Ok(t.sum(p))
        };
        let r = gradient_check(f, &[rand(&[4, 3], s), rand(&[2], s + 1)], H, TOL).unwrap();
        assert!(r.passed, "seed {s}: {r:?}");
    }
}
