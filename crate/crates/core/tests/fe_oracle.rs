use nalgebra::{DMatrix, DVector};
use peerfx::fe::{absorb, cluster_vcov, ols_absorbed, wald_joint, FESpec, Factor, RegressionResult, Regressor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    a: Vec<u32>,
    b: Vec<u32>,
    cl: Vec<u32>,
}

fn instance(seed: u64, n: usize, k: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(rand_distr::StandardNormal) };
    let la = rng.random_range(3..=10u32);
    let lb = rng.random_range(2..=6u32);
    let a: Vec<u32> = (0..n as u32).map(|i| if i < la { i } else { rng.random_range(0..la) }).collect();
    let b: Vec<u32> = (0..n as u32).map(|i| if i < lb { i } else { rng.random_range(0..lb) }).collect();
    // clusters nest the first factor
    let cl: Vec<u32> = a.iter().map(|&l| l * 2 + rng.random_range(0..2)).collect();
    let x: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|i| z(&mut rng) + 0.2 * a[i] as f64).collect()).collect();
    let y = (0..n)
        .map(|i| x.iter().map(|c| 0.7 * c[i]).sum::<f64>() + (a[i] as f64).powi(2) * 0.1 - b[i] as f64 + z(&mut rng))
        .collect();
    Instance { y, x, a, b, cl }
}

fn regs(x: &[Vec<f64>]) -> Vec<Regressor> {
    x.iter().enumerate().map(|(j, c)| Regressor::new(format!("x{j}"), c.clone())).collect()
}

fn spec(factors: Vec<Factor>, cl: &[u32]) -> FESpec {
    let mut s = FESpec::new(factors, Factor::from_keys("cl", cl));
    s.tol = 1e-13;
    s.drop_singletons = false;
    s
}

fn fit_two_way(inst: &Instance) -> RegressionResult {
    let f = vec![Factor::from_keys("a", &inst.a), Factor::from_keys("b", &inst.b)];
    ols_absorbed(&inst.y, &regs(&inst.x), &spec(f, &inst.cl)).unwrap()
}

/// Dense design: regressors, intercept, then dummies for all but the first level of each factor.
fn dummy_design(inst: &Instance, two_way: bool) -> DMatrix<f64> {
    let n = inst.y.len();
    let k = inst.x.len();
    let la = *inst.a.iter().max().unwrap() as usize + 1;
    let lb = if two_way { *inst.b.iter().max().unwrap() as usize + 1 } else { 1 };
    DMatrix::from_fn(n, k + la + lb - 1, |i, j| {
        if j < k {
            inst.x[j][i]
        } else if j == k {
            1.0
        } else if j < k + la {
            f64::from(inst.a[i] as usize == j - k)
        } else {
            f64::from(inst.b[i] as usize == j - k - la + 1)
        }
    })
}

fn dense_ols(x: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let y = DVector::from_column_slice(y);
    let inv = (x.transpose() * x).try_inverse().unwrap();
    let beta = &inv * x.transpose() * &y;
    let e = &y - x * &beta;
    (beta, e, inv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn absorbed_ols_equals_dummy_variables(seed in any::<u64>(), n in 40usize..400, k in 1usize..4) {
        let inst = instance(seed, n, k);
        let res = fit_two_way(&inst);
        let (beta, _, _) = dense_ols(&dummy_design(&inst, true), &inst.y);
        for j in 0..k {
            prop_assert!((res.coef[j] - beta[j]).abs() <= 1e-6 * beta[j].abs().max(1e-3));
        }
    }

    #[test]
    fn one_way_clustered_vcov_equals_dummy_sandwich(seed in any::<u64>(), n in 40usize..200, k in 1usize..3) {
        let inst = instance(seed, n, k);
        let res = ols_absorbed(&inst.y, &regs(&inst.x), &spec(vec![Factor::from_keys("a", &inst.a)], &inst.cl)).unwrap();
        let xd = dummy_design(&inst, false);
        let (_, e, inv) = dense_ols(&xd, &inst.y);
        let cols = xd.ncols();
        let g = *inst.cl.iter().max().unwrap() as usize + 1;
        let mut meat = DMatrix::<f64>::zeros(cols, cols);
        for c in 0..g {
            let mut s = DVector::<f64>::zeros(cols);
            for i in (0..n).filter(|&i| inst.cl[i] as usize == c) {
                s += xd.row(i).transpose() * e[i];
            }
            meat += &s * s.transpose();
        }
        let used = inst.cl.iter().collect::<std::collections::BTreeSet<_>>().len() as f64;
        let factor = used / (used - 1.0) * (n as f64 - 1.0) / (n - cols) as f64;
        let v = &inv * meat * &inv * factor;
        for a in 0..k {
            for b in 0..k {
                prop_assert!((res.vcov_clustered[a][b] - v[(a, b)]).abs() <= 1e-8 * v[(a, a)].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn absorption_is_idempotent(seed in any::<u64>(), n in 20usize..300) {
        let inst = instance(seed, n, 2);
        let f = vec![Factor::from_keys("a", &inst.a), Factor::from_keys("b", &inst.b)];
        let once = absorb(&inst.x, &f, 1e-12, 10_000).unwrap();
        let twice = absorb(&once, &f, 1e-12, 10_000).unwrap();
        for (c1, c2) in once.iter().zip(&twice) {
            for (u, v) in c1.iter().zip(c2) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn functions_of_the_fixed_effects_do_not_move_coefficients(seed in any::<u64>(), n in 40usize..300, shift in -50.0f64..50.0) {
        let inst = instance(seed, n, 2);
        let base = fit_two_way(&inst);
        let moved = Instance {
            y: inst.y.iter().zip(&inst.a).zip(&inst.b).map(|((y, &a), &b)| y + shift * (a as f64).sin() + (b as f64).exp()).collect(),
            ..instance(seed, n, 2)
        };
        let res = fit_two_way(&moved);
        for j in 0..2 {
            prop_assert!((res.coef[j] - base.coef[j]).abs() < 1e-7 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn t_statistics_ignore_regressor_scale(seed in any::<u64>(), n in 40usize..300, scale in 0.001f64..1000.0) {
        let inst = instance(seed, n, 2);
        let base = fit_two_way(&inst);
        let mut scaled = instance(seed, n, 2);
        scaled.x[0].iter_mut().for_each(|v| *v *= scale);
        let res = fit_two_way(&scaled);
        prop_assert!((res.t[0] - base.t[0]).abs() < 1e-6 * base.t[0].abs().max(1.0));
        prop_assert!((res.coef[0] * scale - base.coef[0]).abs() < 1e-6 * base.coef[0].abs().max(1e-3));
    }

    #[test]
    fn estimates_ignore_row_order(seed in any::<u64>(), n in 40usize..200) {
        let inst = instance(seed, n, 2);
        let base = fit_two_way(&inst);
        let perm: Vec<usize> = (0..n).rev().collect();
        let p = |v: &[u32]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let shuffled = Instance {
            y: perm.iter().map(|&i| inst.y[i]).collect(),
            x: inst.x.iter().map(|c| perm.iter().map(|&i| c[i]).collect()).collect(),
            a: p(&inst.a),
            b: p(&inst.b),
            cl: p(&inst.cl),
        };
        let res = fit_two_way(&shuffled);
        for j in 0..2 {
            prop_assert!((res.coef[j] - base.coef[j]).abs() < 1e-9);
            prop_assert!((res.se[j] - base.se[j]).abs() < 1e-9);
        }
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 60;
    let k = 3;
    let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample(rand_distr::StandardNormal) });
    let e: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let own = Factor::from_keys("obs", &(0..n).collect::<Vec<_>>());
    let v = cluster_vcov(&x, &e, &own, k).unwrap();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let r = x.row(i).transpose();
        meat += &r * r.transpose() * e[i] * e[i];
    }
    // HC1 uses n/(n-k); CR1 with G = n adds the factor (n-1)/(n-1) = 1 on top
    let hc1 = &inv * meat * &inv * (n as f64 / (n - k) as f64);
    assert!((v - hc1).abs().max() < 1e-12);
}

#[test]
fn duplicating_observations_keeps_coefficients() {
    let inst = instance(5, 120, 2);
    let base = fit_two_way(&inst);
    let twice = |v: &[u32], off: u32| v.iter().copied().chain(v.iter().map(|c| c + off)).collect::<Vec<_>>();
    let doubled = Instance {
        y: [inst.y.clone(), inst.y.clone()].concat(),
        x: inst.x.iter().map(|c| [c.clone(), c.clone()].concat()).collect(),
        a: [inst.a.clone(), inst.a.clone()].concat(),
        b: [inst.b.clone(), inst.b.clone()].concat(),
        cl: twice(&inst.cl, 1000),
    };
    let res = fit_two_way(&doubled);
    for j in 0..2 {
        assert!((res.coef[j] - base.coef[j]).abs() < 1e-9);
    }
}

#[test]
fn single_restriction_wald_is_squared_t() {
    let res = fit_two_way(&instance(17, 250, 3));
    for (j, name) in res.names.iter().enumerate() {
        let w = wald_joint(&res, &[name.as_str()]).unwrap();
        assert!((w.f - res.t[j] * res.t[j]).abs() < 1e-9 * w.f.max(1.0));
        assert!((w.p - res.p[j]).abs() < 1e-9);
    }
}

#[test]
fn a_huge_effect_is_detected() {
    let mut inst = instance(23, 300, 1);
    for (y, x) in inst.y.iter_mut().zip(&inst.x[0]) {
        *y += 100.0 * x;
    }
    let res = fit_two_way(&inst);
    assert!(wald_joint(&res, &["x0"]).unwrap().p < 1e-12);
}
