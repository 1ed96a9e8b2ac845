//! End-to-end acceptance checks. Runs every criterion, prints one
//! `PASS`/`FAIL` line each, and exits non-zero if any failed.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::*;
use ctsgm::analytics::{exp_plus_moment, exp_pos_moment, expected_loss_at_zero, kappa_bound, lipschitz_bound, mu_bound, theory_constants};
use ctsgm::experiments::{run_ct_reconstruction, run_noisy, run_phase_transition, CtConfig, NoisyConfig, PhaseTransitionConfig};
use ctsgm::sensing::fwht_in_place;
use ctsgm::solvers::{ad_polyak_sgm, polyak_sgm, AdaptiveOptions, SolveOptions};
use ctsgm::tv::{group_ball_project, jtv_apply, tv_ball_project, tv_norm, GradField, ImageVec};
use ctsgm::Objective;
use rand::Rng;

type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn c1_moments() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for k in 0..=100 {
        let c = 0.5 * k as f64;
        let pos = |x: f64| (-c * x).exp() * gaussian_pdf(x);
        let plus = |x: f64| x * (-c * x).exp() * gaussian_pdf(x);
        for (f, closed) in [(&pos as &dyn Fn(f64) -> f64, exp_pos_moment(c)), (&plus, exp_plus_moment(c))] {
            let quad = integrate(f, 0.0, 1.0, 1e-14) + integrate(f, 1.0, 40.0, 1e-14);
            worst = worst.max(((closed - quad) / quad).abs());
        }
    }
    let t = start.elapsed();
    check(
        worst <= 1e-10 && within(t, 10),
        format!("max relative error {worst:.2e} over c in [0, 50]; {:.1}s", t.as_secs_f64()),
    )
}

fn c2_concentration() -> Outcome {
    let start = Instant::now();
    let (d, m, r) = (64, 64 * 64, 2.0);
    let band = 2.0 * (d as f64 / m as f64).sqrt();
    let target = expected_loss_at_zero(r);
    let mut hits = 0;
    for seed in 0..100 {
        let (a, meas) = clean_instance(d, m, r, 1000 + seed);
        let f0 = Objective::l1(&a, &meas).unwrap().value(&vec![0.0; d]).unwrap();
        if (f0 - target).abs() <= band {
            hits += 1;
        }
    }
    let t = start.elapsed();
    check(
        hits >= 95 && within(t, 60),
        format!("{hits}/100 ensembles within {band} of {target:.6}; {:.1}s", t.as_secs_f64()),
    )
}

fn c3_lipschitz() -> Outcome {
    let (d, m) = (64, 4 * 64);
    let lip: f64 = lipschitz_bound(d, m);
    let mut violations = 0;
    let mut worst_ratio = 0.0_f64;
    let mut worst_norm = 0.0_f64;
    for seed in 0..20 {
        let (a, meas) = clean_instance(d, m, 1.0, 2000 + seed);
        let obj = Objective::l1(&a, &meas).unwrap();
        let mut r = rng(seed, 3);
        for _ in 0..200 {
            let x = in_ball(&mut r, d, 3.0);
            let y = in_ball(&mut r, d, 3.0);
            let ratio = (obj.value(&x).unwrap() - obj.value(&y).unwrap()).abs() / dist(&x, &y);
            let gnorm = norm(&obj.l1_subgradient(&x).unwrap());
            worst_ratio = worst_ratio.max(ratio);
            worst_norm = worst_norm.max(gnorm);
            violations += usize::from(ratio > lip) + usize::from(gnorm > lip);
        }
    }
    check(
        violations == 0,
        format!("{violations} violations of L = {lip}; max slope {worst_ratio:.4}, max subgradient norm {worst_norm:.4}"),
    )
}

fn c4_aiming() -> Outcome {
    let start = Instant::now();
    let d = 32;
    let mut details = Vec::new();
    let mut ok = true;
    for r in [1.0_f64, 2.0] {
        let m = 32 * d * r.powi(4) as usize;
        let mu = mu_bound(r);
        let mut good = 0;
        let mut smallest = f64::INFINITY;
        for seed in 0..20 {
            let (a, meas) = clean_instance(d, m, r, 3000 + seed);
            let obj = Objective::l1(&a, &meas).unwrap();
            let x_star = meas.truth.clone().unwrap();
            let mut rg = rng(seed, 4);
            let mut min_aim = f64::INFINITY;
            for i in 0..10_000 {
                let mut x = if i % 2 == 0 {
                    in_ball(&mut rg, d, 3.0 * r)
                } else {
                    // points close to the signal, where the ratio is smallest
                    let u = normal_vec(&mut rg, d);
                    let delta = r * 10f64.powf(-3.0 * rg.gen::<f64>()) / norm(&u);
                    x_star.iter().zip(&u).map(|(s, v)| s + delta * v).collect()
                };
                let nx = norm(&x);
                if nx > 3.0 * r {
                    x.iter_mut().for_each(|v| *v *= 3.0 * r / nx);
                }
                let diff: Vec<f64> = x.iter().zip(&x_star).map(|(a, b)| a - b).collect();
                let v = obj.l1_subgradient(&x).unwrap();
                min_aim = min_aim.min(dot(&v, &diff) / norm(&diff));
            }
            smallest = smallest.min(min_aim);
            if min_aim >= mu {
                good += 1;
            }
        }
        ok &= good >= 19;
        details.push(format!("r={r}: {good}/20 seeds with min ≥ {mu:.3e} (smallest {smallest:.3e})"));
    }
    let t = start.elapsed();
    check(ok && within(t, 180), format!("{}; {:.1}s", details.join(", "), t.as_secs_f64()))
}

fn c5_phase_transition() -> Outcome {
    let start = Instant::now();
    let cfg = PhaseTransitionConfig::desk();
    let res = run_phase_transition(&cfg).map_err(|e| e.to_string())?;
    let polyak = res.cell(4.0, 8).unwrap().polyak_rate();
    let gd = res.cell(8.0, 4).unwrap().gd_rate();
    let mut monotone = true;
    let mut sharper = true;
    for &r in &cfg.signal_norms {
        let row: Vec<_> = cfg.ratios.iter().map(|&q| res.cell(r, q).unwrap()).collect();
        for w in row.windows(2) {
            monotone &= w[1].polyak_rate() >= w[0].polyak_rate() && w[1].gd_rate() >= w[0].gd_rate();
        }
        for c in &row {
            sharper &= c.polyak_rate() >= c.gd_rate();
        }
    }
    let t = start.elapsed();
    check(
        polyak >= 0.9 && gd <= 0.2 && monotone && sharper && within(t, 300),
        format!(
            "polyak(4, 8) = {polyak:.2}, gd(8, 4) = {gd:.2}, monotone in m/d: {monotone}, polyak ≥ gd per cell: {sharper}; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn c6_adaptive_budget() -> Outcome {
    let eps = 1e-3;
    let kappa: f64 = kappa_bound(1.0);
    let max_rounds = kappa.log2().ceil() as usize + 1;
    let max_evals = 8.0 * kappa.powf(3.5) + 3.0 * kappa.powi(3) * (kappa / eps).ln();
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let (a, meas) = clean_instance(32, 8 * 32, 1.0, 6000 + seed);
        let obj = Objective::l1(&a, &meas).unwrap();
        let x0 = vec![0.0; 32];
        let out = ad_polyak_sgm(&obj, &x0, eps, &AdaptiveOptions::default()).map_err(|e| e.to_string())?;
        let reached = obj.value(&out.x).unwrap() <= eps * obj.value(&x0).unwrap();
        ok &= reached && out.rounds.len() <= max_rounds && (out.total_evals as f64) <= max_evals;
        lines.push(format!("{}r/{}e", out.rounds.len(), out.total_evals));
    }
    check(
        ok,
        format!("rounds/evals per seed [{}] vs ≤ {max_rounds} rounds, ≤ {max_evals:.3e} evals", lines.join(" ")),
    )
}

fn c7_monotone_distance() -> Outcome {
    let (d, r) = (32, 2.0);
    let m = d * 16;
    let eta = theory_constants(r, d, m).unwrap().safe_eta();
    let iters = 2000;
    let mut good = 0;
    let mut worst_rate = 0.0_f64;
    for seed in 0..20 {
        let (a, meas) = clean_instance(d, m, r, 7000 + seed);
        let obj = Objective::l1(&a, &meas).unwrap();
        let (_, trace) = polyak_sgm(&obj, &vec![0.0; d], &SolveOptions::new(eta, iters)).map_err(|e| e.to_string())?;
        let dists: Vec<f64> = trace.records.iter().map(|t| t.dist.unwrap()).collect();
        let nonincreasing = dists[1..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let bounded = trace.records.iter().all(|t| t.x_norm <= 2.0 * r);
        let k = dists.len() - 1;
        let rate = (dists[k] / dists[1]).powf(1.0 / (k - 1) as f64);
        worst_rate = worst_rate.max(rate);
        if nonincreasing && bounded && rate < 1.0 {
            good += 1;
        }
    }
    check(
        good == 20,
        format!("{good}/20 runs monotone, bounded by 2r and contracting (worst per-step rate {worst_rate:.8})"),
    )
}

fn c8_tv_projection() -> Outcome {
    let start = Instant::now();
    let mut worst_oracle = 0.0_f64;
    let mut worst_group = 0.0_f64;
    let mut worst_idem = 0.0_f64;
    let mut feasible = true;
    let cases = (0..20).map(|s| (3, s)).chain((0..5).map(|s| (8, 100 + s)));
    for (n, seed) in cases {
        let mut r = rng(seed, 8);
        let y = ImageVec::new(normal_vec(&mut r, n * n), n).unwrap();
        let lambda = 0.5 * tv_norm(&y);
        let x = tv_ball_project(&y, lambda, 1e-9, 200_000).map_err(|e| e.to_string())?;
        let oracle = tv_ball_oracle(&y, lambda, if n == 3 { 4000 } else { 20_000 });
        worst_oracle = worst_oracle.max(dist(x.as_slice(), oracle.as_slice()));
        feasible &= tv_norm(&x) <= lambda * (1.0 + 1e-9);
        let again = tv_ball_project(&x, lambda, 1e-9, 200_000).map_err(|e| e.to_string())?;
        worst_idem = worst_idem.max(dist(again.as_slice(), x.as_slice()));

        let z = GradField::new(normal_vec(&mut r, 2 * n * n), n).unwrap();
        for (field, radius) in [(jtv_apply(&y), lambda), (z.clone(), 0.3 * z.group_norm())] {
            let (p, _) = group_ball_project(&field, radius).map_err(|e| e.to_string())?;
            worst_group = worst_group.max(dist(p.as_slice(), group_ball_oracle(&field, radius).as_slice()));
        }
    }
    let t = start.elapsed();
    check(
        worst_oracle <= 1e-5 && worst_group <= 1e-9 && worst_idem <= 1e-9 && feasible && within(t, 120),
        format!(
            "oracle gap {worst_oracle:.2e}, group-ball gap {worst_group:.2e}, idempotence gap {worst_idem:.2e}, feasible: {feasible}; {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn c9_fwht() -> Outcome {
    let mut worst = 0.0_f64;
    let mut worst_sq = 0.0_f64;
    for d in [2, 4, 8, 16] {
        let h = sylvester(d);
        let mut r = rng(d as u64, 9);
        for _ in 0..10 {
            let v = normal_vec(&mut r, d);
            let dense: Vec<f64> = h.iter().map(|row| dot(row, &v)).collect();
            let mut fast = v.clone();
            fwht_in_place(&mut fast).unwrap();
            worst = worst.max(dist(&fast, &dense));
            fwht_in_place(&mut fast).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * d as f64).collect();
            worst_sq = worst_sq.max(dist(&fast, &scaled));
        }
        for i in 0..d {
            for j in 0..d {
                let hh: f64 = (0..d).map(|k| h[i][k] * h[k][j]).sum();
                let expect = if i == j { d as f64 } else { 0.0 };
                worst_sq = worst_sq.max((hh - expect).abs());
            }
        }
    }
    check(
        worst <= 1e-12 && worst_sq <= 1e-12,
        format!("fast vs dense {worst:.1e}, H² − dI {worst_sq:.1e}"),
    )
}

fn c10_ct() -> Outcome {
    let start = Instant::now();
    let cfg = CtConfig {
        write_images: false,
        ..CtConfig::desk()
    };
    let res = run_ct_reconstruction(&cfg).map_err(|e| e.to_string())?;
    let mut wins = 0;
    let mut pairs = Vec::new();
    for run in &res.runs {
        let p = run.final_psnr("polyak").unwrap();
        let g = run.final_psnr("gd").unwrap();
        wins += usize::from(p > g);
        pairs.push(format!("{p:.2}/{g:.2}"));
    }
    let t = start.elapsed();
    check(
        wins >= 4 && within(t, 300),
        format!(
            "Polyak beats GD on {wins}/{} scans (PSNR polyak/gd: {}); {:.1}s",
            res.runs.len(),
            pairs.join(" "),
            t.as_secs_f64()
        ),
    )
}

fn c11_noisy() -> Outcome {
    let start = Instant::now();
    let cfg = NoisyConfig {
        signal_norms: vec![2.0],
        trials: 10,
        ..NoisyConfig::desk()
    };
    let res = run_noisy(&cfg).map_err(|e| e.to_string())?;
    let noopt = res.median_noopt_evals();
    let gd = res.median_gd_evals();
    let t = start.elapsed();
    check(
        noopt <= gd / 5.0 && within(t, 180),
        format!("median evals to 2x final distance: noopt {noopt}, gd {gd}; {:.1}s", t.as_secs_f64()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("C1 closed-form moments vs quadrature", c1_moments),
        ("C2 loss concentration at zero", c2_concentration),
        ("C3 Lipschitz and subgradient bounds", c3_lipschitz),
        ("C4 aiming constant", c4_aiming),
        ("C5 recovery phase transition", c5_phase_transition),
        ("C6 adaptive method budget", c6_adaptive_budget),
        ("C7 monotone distance decrease", c7_monotone_distance),
        ("C8 TV projection vs oracle", c8_tv_projection),
        ("C9 fast Walsh-Hadamard transform", c9_fwht),
        ("C10 CT reconstruction ordering", c10_ct),
        ("C11 noisy comparison", c11_noisy),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let stdout = std::io::stdout();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let mut out = stdout.lock();
        writeln!(out, "{tag} {name}: {detail}").unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
