use super::tape::{Tape, Var};
use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst coordinate.
    pub worst_values: (f64, f64),
    pub coordinates: usize,
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

fn eval<'s, F>(store: &'s ParamStore, f: &F, param: &str) -> Result<(Tape<'s>, Var)>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(store);
    let root = f(&mut tape)?;
    if !tape.scalar(root).is_finite() {
        return Err(Error::NonFinite { param: param.to_owned() });
    }
    Ok((tape, root))
}

/// `(f(θ+ε) − f(θ−ε)) / 2ε`. The difference is propagated through the two
/// recordings operation by operation, which keeps it accurate when the
/// gradient is many orders of magnitude below the loss. Falls back to the
/// plain subtraction when the recordings differ in structure.
fn central_difference(plus: (&Tape<'_>, Var), minus: (&Tape<'_>, Var), eps: f64) -> f64 {
    let plain = plus.0.scalar(plus.1) - minus.0.scalar(minus.1);
    let diff = match plus.1 == minus.1 {
        true => plus.0.difference(minus.0, plus.1),
        false => None,
    };
    let tol = 1e-9 * (1.0 + plus.0.scalar(plus.1).abs());
    match diff {
        Some(d) if d.is_finite() && (d - plain).abs() <= tol => d / (2.0 * eps),
        _ => plain / (2.0 * eps),
    }
}

/// Compares reverse-mode gradients of the scalar computed by `f` against
/// central differences `(f(θ+ε) − f(θ−ε)) / 2ε` on every coordinate of every
/// parameter. `f` must be deterministic.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let root = f(&mut tape)?;
        if !tape.scalar(root).is_finite() {
            return Err(Error::NonFinite { param: "loss".into() });
        }
        tape.backward(root)
    };
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coordinates: 0,
    };
    let mut plus_store = store.clone();
    let mut minus_store = store.clone();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_owned();
        let grad = analytic.dense(store, id);
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                param: format!("{name}[{bad}]"),
            });
        }
        for (k, a) in grad.iter().enumerate() {
            let orig = store.get(id).data[k];
            plus_store.get_mut(id).data[k] = orig + eps;
            minus_store.get_mut(id).data[k] = orig - eps;
            let numeric = {
                let (tp, rp) = eval(&plus_store, &f, &name)?;
                let (tm, rm) = eval(&minus_store, &f, &name)?;
                central_difference((&tp, rp), (&tm, rm), eps)
            };
            plus_store.get_mut(id).data[k] = orig;
            minus_store.get_mut(id).data[k] = orig;
            let err = relative_error(*a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.clone(), k));
                report.worst_values = (*a, numeric);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::tensor::{ParamId, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_with(params: &[(&str, Vec<usize>)], seed: u64) -> (ParamStore, Vec<ParamId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let ids = params
            .iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                s.add(*name, Tensor::new(shape.clone(), data).unwrap()).unwrap()
            })
            .collect();
        (s, ids)
    }

    fn check<F>(params: &[(&str, Vec<usize>)], f: F) -> GradReport
    where
        F: Fn(&mut Tape<'_>, &[ParamId]) -> Result<Var>,
    {
        let (mut s, ids) = store_with(params, 11);
        let r = grad_check(&mut s, 1e-5, |t| f(t, &ids)).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        r
    }

    #[test]
    fn square_at_three() {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::new(vec![1], vec![3.0]).unwrap()).unwrap();
        let f = |t: &mut Tape<'_>| {
            let x = t.param(id);
            Ok(t.dot(x, x))
        };
        let mut tape = Tape::new(&s);
        let root = f(&mut tape).unwrap();
        let g = tape.backward(root).dense(&s, id);
        assert!((g[0] - 6.0).abs() < 1e-12);
        let r = grad_check(&mut s, 1e-5, f).unwrap();
        assert!(r.max_rel_error < 1e-9 / 6.0, "{r:?}");
    }

    #[test]
    fn matvec_and_matvec_t() {
        check(&[("w", vec![3, 4]), ("x", vec![4]), ("y", vec![3])], |t, p| {
            let x = t.param(p[1]);
            let wx = t.matvec(p[0], x);
            let y = t.param(p[2]);
            let wty = t.matvec_t(p[0], y);
            let a = t.dot(wx, wx);
            let b = t.dot(wty, x);
            Ok(t.add(a, b))
        });
    }

    #[test]
    fn elementwise_ops() {
        check(&[("a", vec![5]), ("b", vec![5])], |t, p| {
            let a = t.param(p[0]);
            let b = t.param(p[1]);
            let s = t.sigmoid(a);
            let h = t.tanh(b);
            let m = t.mul(s, h);
            let k = t.scale(m, -1.7);
            let q = t.mask(k, vec![1.0, 0.0, 2.0, 1.0, 0.5]);
            let r = t.add(q, a);
            Ok(t.dot(r, r))
        });
    }

    #[test]
    fn concat_slice_sum() {
        check(&[("a", vec![3]), ("b", vec![2])], |t, p| {
            let a = t.param(p[0]);
            let b = t.param(p[1]);
            let c = t.concat(&[a, b, a]);
            let s1 = t.slice(c, 1, 4);
            let s2 = t.slice(c, 4, 4);
            let s = t.sum(&[s1, s2, s1]);
            let h = t.tanh(s);
            Ok(t.dot(h, s))
        });
    }

    #[test]
    fn embedding_lookup_accumulates() {
        check(&[("emb", vec![4, 3]), ("w", vec![3])], |t, p| {
            let r1 = t.row(p[0], 2);
            let r2 = t.row(p[0], 0);
            let r3 = t.row(p[0], 2);
            let s = t.sum(&[r1, r2, r3]);
            let w = t.param(p[1]);
            let h = t.tanh(s);
            Ok(t.dot(h, w))
        });
    }

    #[test]
    fn softmax_weighted_sum_and_nll() {
        check(&[("s", vec![3]), ("k", vec![3, 2]), ("w", vec![2, 2])], |t, p| {
            let s = t.param(p[0]);
            let wts = t.softmax(s);
            let keys: Vec<Var> = (0..3).map(|j| t.row(p[1], j)).collect();
            let c = t.weighted_sum(wts, &keys);
            let logits = t.matvec(p[2], c);
            Ok(t.nll(logits, 1))
        });
    }

    #[test]
    fn difference_matches_plain_subtraction() {
        let params = [("s", vec![3]), ("k", vec![3, 2]), ("w", vec![2, 2]), ("a", vec![2])];
        let (s, ids) = store_with(&params, 5);
        let mut s2 = s.clone();
        s2.get_mut(ids[2]).data[1] += 1e-3;
        s2.get_mut(ids[3]).data[0] -= 2e-3;
        let f = |t: &mut Tape<'_>| {
            let sv = t.param(ids[0]);
            let wts = t.softmax(sv);
            let keys: Vec<Var> = (0..3).map(|j| t.row(ids[1], j)).collect();
            let c = t.weighted_sum(wts, &keys);
            let a = t.param(ids[3]);
            let g = t.sigmoid(a);
            let h = t.tanh(c);
            let m = t.mul(g, h);
            let z = t.concat(&[m, a]);
            let z = t.slice(z, 1, 2);
            let z = t.sum(&[z, c]);
            let z = t.scale(z, 0.7);
            let z = t.mask(z, vec![1.0, 2.0]);
            let l = t.matvec(ids[2], z);
            let u = t.matvec_t(ids[2], l);
            let q = t.dot(u, a);
            let n = t.nll(l, 0);
            t.add(q, n)
        };
        let mut tp = Tape::new(&s2);
        let rp = f(&mut tp);
        let mut tm = Tape::new(&s);
        let rm = f(&mut tm);
        let plain = tp.scalar(rp) - tm.scalar(rm);
        let d = tp.difference(&tm, rp).unwrap();
        assert!(plain.abs() > 1e-5);
        assert!((d - plain).abs() < 1e-12, "{d} vs {plain}");
    }

    #[test]
    fn nan_is_reported_with_parameter_name() {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::new(vec![1], vec![f64::NAN]).unwrap()).unwrap();
        let err = grad_check(&mut s, 1e-5, |t| {
            let x = t.param(id);
            Ok(t.dot(x, x))
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 3.0) - 0.5).abs() < 1e-15);
    }
}
