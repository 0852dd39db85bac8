#![allow(dead_code)]

use cloudfuse::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Uniform values with `|x| >= margin`, keeping finite differences off kinks.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(margin..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Relative error between analytic and central finite-difference gradients
/// of a scalar function of several inputs: `|a - n| / max(|a|, |n|)` over
/// the concatenated gradient vectors.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let root = f(&mut g, &vars);
    g.backward(root).expect("backward");
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|&v| g.grad(v).expect("grad populated").data().to_vec())
        .collect();

    let eval = |ins: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &vars);
        g.value(root).item()
    };
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
    }
    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Reduce a tensor-valued op to a scalar through a fixed random projection.
pub fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Var {
    let shape = g.value(y).shape().to_vec();
    let mut r = rng(seed ^ 0x5eed);
    let w = g.constant(uniform(&mut r, &shape, -1.0, 1.0));
    let p = g.mul(y, w).unwrap();
    g.sum(p)
}

pub type OpCase = (&'static str, fn(u64) -> f64);

/// One finite-difference case per differentiable op, parameterised by seed.
/// Shapes stay within 2x3x8x8.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        ("conv2d", |s| {
            let mut r = rng(s);
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let f = r.gen_range(1..=3);
            let k = if r.gen_bool(0.7) { 3 } else { 1 };
            let stride = r.gen_range(1..=2);
            let pad = if k == 3 { r.gen_range(0..=1) } else { 0 };
            let h = r.gen_range(3..=8);
            let w = r.gen_range(3..=8);
            let x = uniform(&mut r, &[n, c, h, w], -1.0, 1.0);
            let wt = uniform(&mut r, &[f, c, k, k], -1.0, 1.0);
            let b = uniform(&mut r, &[f], -1.0, 1.0);
            gradcheck(&[x, wt, b], |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, pad).unwrap();
                project(g, y, s)
            })
        }),
        ("upsample_nearest2x", |s| {
            let mut r = rng(s);
            let (h, w) = (r.gen_range(1..=4), r.gen_range(1..=4));
            let x = uniform(&mut r, &[2, 3, h, w], -1.0, 1.0);
            gradcheck(&[x], |g, v| {
                let y = g.upsample_nearest2x(v[0]).unwrap();
                project(g, y, s)
            })
        }),
        ("max_pool2x", |s| {
            let mut r = rng(s);
            let (h, w) = (2 * r.gen_range(1..=4), 2 * r.gen_range(1..=4));
            let x = uniform(&mut r, &[2, 3, h, w], -1.0, 1.0);
            gradcheck(&[x], |g, v| {
                let y = g.max_pool2x(v[0]).unwrap();
                project(g, y, s)
            })
        }),
        ("relu", |s| {
            let mut r = rng(s);
            let x = away_from_zero(&mut r, &[2, 3, 8, 8], 1e-3);
            gradcheck(&[x], |g, v| {
                let y = g.relu(v[0]);
                project(g, y, s)
            })
        }),
        ("sigmoid", |s| {
            let mut r = rng(s);
            let x = uniform(&mut r, &[2, 3, 8, 8], -4.0, 4.0);
            gradcheck(&[x], |g, v| {
                let y = g.sigmoid(v[0]);
                project(g, y, s)
            })
        }),
        ("add+mul+affine", |s| {
            let mut r = rng(s);
            let a = uniform(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
            let b = uniform(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
            gradcheck(&[a, b], |g, v| {
                let p = g.mul(v[0], v[1]).unwrap();
                let q = g.affine(p, -1.7, 0.3);
                let y = g.add(q, v[0]).unwrap();
                project(g, y, s)
            })
        }),
        ("concat_channels", |s| {
            let mut r = rng(s);
            let a = uniform(&mut r, &[2, 1, 3, 5], -1.0, 1.0);
            let b = uniform(&mut r, &[2, 2, 3, 5], -1.0, 1.0);
            gradcheck(&[a, b], |g, v| {
                let y = g.concat_channels(v[0], v[1]).unwrap();
                project(g, y, s)
            })
        }),
        ("mean", |s| {
            let mut r = rng(s);
            let x = uniform(&mut r, &[2, 3, 8, 8], -1.0, 1.0);
            gradcheck(&[x], |g, v| {
                let y = g.mul(v[0], v[0]).unwrap();
                g.mean(y)
            })
        }),
        ("softmax_over_stack", |s| {
            let mut r = rng(s);
            let k = r.gen_range(1..=6);
            let xs: Vec<_> = (0..k).map(|_| uniform(&mut r, &[2, 1, 4, 4], 0.0, 1.0)).collect();
            gradcheck(&xs, |g, v| {
                let ws = g.softmax_over_stack(v).unwrap();
                let parts: Vec<Var> = ws
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| project(g, w, s + j as u64))
                    .collect();
                parts[1..].iter().fold(parts[0], |acc, &p| g.add(acc, p).unwrap())
            })
        }),
        ("weighted_sum", |s| {
            let mut r = rng(s);
            let k = r.gen_range(1..=4);
            let mut ins: Vec<_> = (0..k).map(|_| uniform(&mut r, &[2, 3, 4, 4], 0.0, 1.0)).collect();
            ins.extend((0..k).map(|_| uniform(&mut r, &[2, 1, 4, 4], 0.0, 1.0)));
            gradcheck(&ins, |g, v| {
                let y = g.weighted_sum(&v[..k], &v[k..]).unwrap();
                project(g, y, s)
            })
        }),
        ("cross_entropy", |s| {
            let mut r = rng(s);
            let x = uniform(&mut r, &[2, 3, 4, 4], -2.0, 2.0);
            let labels: Vec<u8> = (0..32).map(|_| r.gen_range(0..3)).collect();
            gradcheck(&[x], move |g, v| g.cross_entropy(v[0], &labels).unwrap())
        }),
        ("bce_loss", |s| {
            let mut r = rng(s);
            let p = uniform(&mut r, &[2, 1, 8, 8], 0.05, 0.95);
            let t: Vec<f64> = (0..128).map(|_| if r.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            gradcheck(&[p], move |g, v| g.bce_loss(v[0], &t).unwrap())
        }),
        ("dice_coefficient", |s| {
            let mut r = rng(s);
            let p = uniform(&mut r, &[2, 1, 8, 8], 0.0, 1.0);
            let t: Vec<f64> = (0..128).map(|_| if r.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            gradcheck(&[p], move |g, v| g.dice_coefficient(v[0], &t).unwrap())
        }),
    ]
}
