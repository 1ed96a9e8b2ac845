#![allow(dead_code)]

use ctsgm::rng::{substream, Domain};
use ctsgm::sensing::{gaussian_ensemble, generate_measurements, sample_signal, MeasurementSet, NoiseModel, SensingEnsemble};
use ctsgm::tv::{group_prox, jtv_adjoint, jtv_apply, tv_norm, GradField, ImageVec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64, index: u64) -> ChaCha8Rng {
    substream(seed, Domain::Probe, index)
}

pub fn normal_vec(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(r)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform point in the ball of radius `radius`.
pub fn in_ball(r: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let g = normal_vec(r, dim);
    let s = radius * r.gen::<f64>().powf(1.0 / dim as f64) / norm(&g);
    g.iter().map(|v| v * s).collect()
}

pub fn clean_instance(dim: usize, samples: usize, signal_norm: f64, seed: u64) -> (SensingEnsemble<f64>, MeasurementSet<f64>) {
    let a = gaussian_ensemble(dim, samples, seed);
    let x = sample_signal(dim, signal_norm, seed);
    let meas = generate_measurements(&a, &x, NoiseModel::Clean, seed).unwrap();
    (a, meas)
}

// ---- adaptive Gauss–Kronrod (7/15) quadrature ----

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let s = f(c - h * XGK[k]) + f(c + h * XGK[k]);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// `∫_a^b f` by recursive bisection until the Kronrod/Gauss gap is below
/// `tol` relative to the running magnitude.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
        if whole.1 <= tol || depth > 50 {
            return whole.0;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        rec(f, a, m, left, 0.5 * tol, depth + 1) + rec(f, m, b, right, 0.5 * tol, depth + 1)
    }
    let whole = gk15(f, a, b);
    let scale = whole.0.abs().max(f64::MIN_POSITIVE);
    rec(f, a, b, whole, tol * scale, 0)
}

pub fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ---- TV projection oracle ----

/// `prox_{μ TV}(y)` via accelerated projected gradient on the dual
/// `min_{‖p_i‖ ≤ μ} ½‖y − Jᵀp‖²`; `p` is the warm start and is updated.
pub fn tv_prox_dual(y: &ImageVec<f64>, mu: f64, p: &mut GradField<f64>, iters: usize) -> ImageVec<f64> {
    let n = y.side();
    let len = n * n;
    let step = 1.0 / 8.0; // ‖J‖² ≤ 8
    let clip = |q: &mut GradField<f64>| {
        let s = q.as_mut_slice();
        for i in 0..len {
            let r = (s[i] * s[i] + s[len + i] * s[len + i]).sqrt();
            if r > mu {
                s[i] *= mu / r;
                s[len + i] *= mu / r;
            }
        }
    };
    clip(p);
    let mut q = p.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let jt = jtv_adjoint(&q);
        let resid: Vec<f64> = y.as_slice().iter().zip(jt.as_slice()).map(|(a, b)| a - b).collect();
        let g = jtv_apply(&ImageVec::new(resid, n).unwrap());
        let mut next = q.clone();
        for (v, gv) in next.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *v += step * gv;
        }
        clip(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        let mut mom = next.clone();
        for ((m, &a), &b) in mom.as_mut_slice().iter_mut().zip(next.as_slice()).zip(p.as_slice()) {
            *m = a + w * (a - b);
        }
        *p = next;
        q = mom;
        t = t_next;
    }
    let jt = jtv_adjoint(p);
    ImageVec::new(y.as_slice().iter().zip(jt.as_slice()).map(|(a, b)| a - b).collect(), n).unwrap()
}

/// Projection onto `{TV ≤ λ}` as `prox_{μ TV}` with `μ` found by bisection
/// on `TV(prox_μ(y)) = λ`.
pub fn tv_ball_oracle(y: &ImageVec<f64>, lambda: f64, iters: usize) -> ImageVec<f64> {
    if tv_norm(y) <= lambda {
        return y.clone();
    }
    let n = y.side();
    let mut lo = 0.0;
    let mut hi = norm(y.as_slice()) + 1.0;
    let mut p = GradField::zeros(n);
    let mut best = y.clone();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let x = tv_prox_dual(y, mid, &mut p, iters);
        if tv_norm(&x) > lambda {
            lo = mid;
        } else {
            hi = mid;
            best = x;
        }
    }
    best
}

/// Group-ball projection by bisection on the shrinkage level.
pub fn group_ball_oracle(z: &GradField<f64>, lambda: f64) -> GradField<f64> {
    if z.group_norm() <= lambda {
        return z.clone();
    }
    let len = z.side() * z.side();
    let norms: Vec<f64> = (0..len).map(|p| z.pair_norm(p)).collect();
    let excess = |mu: f64| norms.iter().map(|&r| (r - mu).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, norms.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    group_prox(z, 0.5 * (lo + hi))
}

/// Dense Sylvester–Hadamard matrix of order `d`.
pub fn sylvester(d: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < d {
        let k = h.len();
        let mut next = vec![vec![0.0; 2 * k]; 2 * k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = h[i][j];
                next[i][j + k] = h[i][j];
                next[i + k][j] = h[i][j];
                next[i + k][j + k] = -h[i][j];
            }
        }
        h = next;
    }
    h
}
