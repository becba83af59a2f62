//! Nelder-Mead simplex minimization.
//!
//! Non-finite objective values are treated as `+inf`, so infeasible regions
//! simply repel the simplex.

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when `f_max - f_min <= f_tol_abs + f_tol_rel * |f_min|` ...
    pub f_tol_rel: f64,
    pub f_tol_abs: f64,
    /// ... and every vertex lies within `x_tol` (sup norm) of the best one.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 5_000,
            f_tol_rel: 1e-12,
            f_tol_abs: 1e-30,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of the given
/// per-coordinate step sizes.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], opts: &SimplexOptions) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert_eq!(dim, step.len(), "step size per coordinate");
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    verts.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step[i];
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut trial2 = vec![0.0; dim];
    loop {
        sort_simplex(&mut verts, &mut vals);
        let (best, worst) = (vals[0], vals[dim]);
        let spread_ok = if best.is_finite() {
            worst - best <= opts.f_tol_abs + opts.f_tol_rel * best.abs()
        } else {
            false
        };
        let size = verts[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&verts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread_ok && size <= opts.x_tol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &verts[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let along = |coef: f64, out: &mut Vec<f64>, worst: &[f64], centroid: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(centroid).zip(worst) {
                *o = c + coef * (c - w);
            }
        };

        along(REFLECT, &mut trial, &verts[dim], &centroid);
        let f_reflect = eval(&trial, &mut evals);
        if f_reflect < vals[0] {
            along(EXPAND, &mut trial2, &verts[dim], &centroid);
            let f_expand = eval(&trial2, &mut evals);
            if f_expand < f_reflect {
                verts[dim].clone_from(&trial2);
                vals[dim] = f_expand;
            } else {
                verts[dim].clone_from(&trial);
                vals[dim] = f_reflect;
            }
            continue;
        }
        if f_reflect < vals[dim - 1] {
            verts[dim].clone_from(&trial);
            vals[dim] = f_reflect;
            continue;
        }
        // Contraction, outside if the reflection improved on the worst point.
        let outside = f_reflect < vals[dim];
        let coef = if outside { CONTRACT * REFLECT } else { -CONTRACT };
        along(coef, &mut trial2, &verts[dim], &centroid);
        let f_contract = eval(&trial2, &mut evals);
        let accept = if outside {
            f_contract <= f_reflect
        } else {
            f_contract < vals[dim]
        };
        if accept {
            verts[dim].clone_from(&trial2);
            vals[dim] = f_contract;
            continue;
        }
        let best_vertex = verts[0].clone();
        for i in 1..=dim {
            for (x, b) in verts[i].iter_mut().zip(&best_vertex) {
                *x = b + SHRINK * (*x - b);
            }
            vals[i] = eval(&verts[i], &mut evals);
        }
    }
    sort_simplex(&mut verts, &mut vals);
    SimplexOutcome {
        x: verts.swap_remove(0),
        f: vals[0],
        evals,
        converged,
    }
}

fn sort_simplex(verts: &mut [Vec<f64>], vals: &mut [f64]) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let v: Vec<Vec<f64>> = idx.iter().map(|&i| std::mem::take(&mut verts[i])).collect();
    let f: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
    for (i, (vv, ff)) in v.into_iter().zip(f).enumerate() {
        verts[i] = vv;
        vals[i] = ff;
    }
}
