//! Adaptive Gauss–Kronrod (G7/K15) integration of vector-valued integrands
//! over finite segments and semi-infinite tails.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::Result;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-6, abs_tol: 0.0, max_intervals: 4000 }
    }
}

/// Integration domain piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Finite(f64, f64),
    /// [a, ∞) with a > 0, mapped by ω = a/t.
    UpperTail(f64),
    /// (−∞, −a] with a > 0, mapped by ω = −a/t.
    LowerTail(f64),
}

impl Segment {
    fn domain(&self) -> (f64, f64) {
        match *self {
            Segment::Finite(a, b) => (a, b),
            _ => (0.0, 1.0),
        }
    }

    /// Physical abscissa and Jacobian for a parameter value.
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Segment::Finite(..) => (t, 1.0),
            Segment::UpperTail(a) => (a / t, a / (t * t)),
            Segment::LowerTail(a) => (-a / t, a / (t * t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub intervals: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl<const N: usize> QuadResult<N> {
    /// Worst error relative to the magnitude of the corresponding value.
    pub fn max_rel_error(&self) -> f64 {
        self.value
            .iter()
            .zip(&self.error)
            .map(|(v, e)| if *v == 0.0 { if *e == 0.0 { 0.0 } else { f64::INFINITY } } else { e / v.abs() })
            .fold(0.0, f64::max)
    }
}

struct Piece<const N: usize> {
    seg: usize,
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    priority: f64,
}

impl<const N: usize> PartialEq for Piece<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority.total_cmp(&other.priority) == Ordering::Equal
    }
}
impl<const N: usize> Eq for Piece<N> {}
impl<const N: usize> PartialOrd for Piece<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Piece<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn kronrod<const N: usize, F>(f: &F, seg: &Segment, a: f64, b: f64) -> Result<([f64; N], [f64; N])>
where
    F: Fn(f64) -> Result<[f64; N]>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> Result<[f64; N]> {
        let (w, jac) = seg.map(t);
        let mut v = f(w)?;
        v.iter_mut().for_each(|x| *x *= jac);
        Ok(v)
    };

    let fc = eval(centre)?;
    let mut rk = [0.0; N];
    let mut rg = [0.0; N];
    let mut rabs = [0.0; N];
    for i in 0..N {
        rk[i] = WGK[7] * fc[i];
        rg[i] = WG[3] * fc[i];
        rabs[i] = rk[i].abs();
    }
    let mut samples = [[[0.0; N]; 2]; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(centre - dx)?;
        let f2 = eval(centre + dx)?;
        for i in 0..N {
            rk[i] += WGK[j] * (f1[i] + f2[i]);
            rabs[i] += WGK[j] * (f1[i].abs() + f2[i].abs());
            if j % 2 == 1 {
                rg[i] += WG[j / 2] * (f1[i] + f2[i]);
            }
        }
        samples[j] = [f1, f2];
    }

    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for i in 0..N {
        let mean = 0.5 * rk[i];
        let mut asc = WGK[7] * (fc[i] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((samples[j][0][i] - mean).abs() + (samples[j][1][i] - mean).abs());
        }
        let asc = asc * half.abs();
        let resabs = rabs[i] * half.abs();
        let mut err = ((rk[i] - rg[i]) * half).abs();
        if asc != 0.0 && err != 0.0 {
            err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        value[i] = rk[i] * half;
        error[i] = err;
    }
    Ok((value, error))
}

fn tolerance<const N: usize>(total: &[f64; N], opts: &QuadOptions) -> [f64; N] {
    let mut tol = [0.0; N];
    for i in 0..N {
        tol[i] = opts.abs_tol.max(opts.rel_tol * total[i].abs()).max(f64::MIN_POSITIVE);
    }
    tol
}

fn priority<const N: usize>(error: &[f64; N], tol: &[f64; N]) -> f64 {
    error.iter().zip(tol).map(|(e, t)| e / t).fold(0.0, f64::max)
}

/// Integrate `f` over the union of `segments`; segments are bisected
/// adaptively until every component meets its own tolerance.
pub fn integrate<const N: usize, F>(f: F, segments: &[Segment], opts: &QuadOptions) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> Result<[f64; N]>,
{
    let mut pieces = Vec::with_capacity(segments.len());
    for (k, seg) in segments.iter().enumerate() {
        let (a, b) = seg.domain();
        if a == b {
            continue;
        }
        let (value, error) = kronrod(&f, seg, a, b)?;
        pieces.push(Piece { seg: k, a, b, value, error, priority: 0.0 });
    }
    let mut evaluations = 15 * pieces.len();

    let sum = |pieces: &mut dyn Iterator<Item = &Piece<N>>| {
        let mut v = [0.0; N];
        let mut e = [0.0; N];
        for p in pieces {
            for i in 0..N {
                v[i] += p.value[i];
                e[i] += p.error[i];
            }
        }
        (v, e)
    };

    let (mut total, mut err) = sum(&mut pieces.iter());
    let mut tol = tolerance(&total, opts);
    let mut heap: BinaryHeap<Piece<N>> = pieces
        .into_iter()
        .map(|mut p| {
            p.priority = priority(&p.error, &tol);
            p
        })
        .collect();

    let done = |err: &[f64; N], tol: &[f64; N]| err.iter().zip(tol).all(|(e, t)| e.is_finite() && e <= t);
    let mut converged = done(&err, &tol);
    while !converged && heap.len() < opts.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            heap.push(worst);
            break;
        }
        let seg = &segments[worst.seg];
        let (v1, e1) = kronrod(&f, seg, worst.a, mid)?;
        let (v2, e2) = kronrod(&f, seg, mid, worst.b)?;
        evaluations += 30;
        for i in 0..N {
            total[i] += v1[i] + v2[i] - worst.value[i];
            err[i] += e1[i] + e2[i] - worst.error[i];
        }
        let new_tol = tolerance(&total, opts);
        let rescale = new_tol.iter().zip(&tol).any(|(n, o)| (n / o - 1.0).abs() > 0.5);
        tol = new_tol;
        heap.push(Piece { seg: worst.seg, a: worst.a, b: mid, value: v1, error: e1, priority: priority(&e1, &tol) });
        heap.push(Piece { seg: worst.seg, a: mid, b: worst.b, value: v2, error: e2, priority: priority(&e2, &tol) });
        if rescale {
            let mut items = std::mem::take(&mut heap).into_vec();
            for p in &mut items {
                p.priority = priority(&p.error, &tol);
            }
            heap = items.into();
        }
        converged = done(&err, &tol);
    }

    // Re-sum from scratch to drop accumulated cancellation error.
    let intervals = heap.len();
    let (value, error) = sum(&mut heap.iter());
    let converged = value.iter().all(|v| v.is_finite())
        && (converged || done(&error, &tolerance(&value, opts)));
    Ok(QuadResult { value, error, intervals, evaluations, converged })
}

/// Split [lo, hi] at the sorted, deduplicated interior points.
pub fn split_at(lo: f64, hi: f64, points: &[f64]) -> Vec<Segment> {
    let mut cuts: Vec<f64> = points.iter().copied().filter(|x| *x > lo && *x < hi && x.is_finite()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (hi - lo));
    let mut edges = vec![lo];
    edges.extend(cuts);
    edges.push(hi);
    edges.windows(2).map(|w| Segment::Finite(w[0], w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn opts(rel: f64) -> QuadOptions {
        QuadOptions { rel_tol: rel, ..Default::default() }
    }

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(
            |x| Ok([1.0, x, x.powi(10), x.powi(22)]),
            &[Segment::Finite(-1.0, 2.0)],
            &opts(1e-12),
        )
        .unwrap();
        let exact = [3.0, 1.5, (2f64.powi(11) + 1.0) / 11.0, (2f64.powi(23) + 1.0) / 23.0];
        for i in 0..4 {
            assert!((r.value[i] / exact[i] - 1.0).abs() < 1e-13, "{i}: {}", r.value[i]);
        }
        assert!(r.converged);
    }

    #[test]
    fn narrow_lorentzian_with_breakpoints_and_tails() {
        // ∫ γ/((x−x0)² + γ²) over the real line is π, with width 1e-7 of the range.
        let (x0, g) = (3.0, 1e-6);
        let f = |x: f64| Ok([g / ((x - x0).powi(2) + g * g)]);
        let mut segs = split_at(-10.0, 10.0, &[x0 - 10.0 * g, x0, x0 + 10.0 * g]);
        segs.push(Segment::UpperTail(10.0));
        segs.push(Segment::LowerTail(10.0));
        let r = integrate(f, &segs, &opts(1e-10)).unwrap();
        assert!(r.converged);
        assert!((r.value[0] / PI - 1.0).abs() < 1e-9, "{}", r.value[0]);
    }

    #[test]
    fn tail_mapping() {
        let r = integrate(|x| Ok([1.0 / (x * x), (-x.abs()).exp()]), &[Segment::UpperTail(2.0), Segment::LowerTail(2.0)], &opts(1e-12)).unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-12);
        assert!((r.value[1] / (2.0 * (-2.0f64).exp()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn components_converge_independently() {
        // A tiny smooth component next to a large peaked one still gets full relative accuracy.
        let f = |x: f64| Ok([1e12 / (x * x + 1e-8), 1e-9 * x.cos()]);
        let r = integrate(f, &split_at(-1.0, 1.0, &[0.0]), &opts(1e-9)).unwrap();
        assert!(r.converged);
        assert!((r.value[1] / (2e-9 * 1f64.sin()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interval_cap_reports_non_convergence() {
        let f = |x: f64| Ok([x.sqrt().recip()]);
        let r = integrate(f, &[Segment::Finite(0.0, 1.0)], &QuadOptions { rel_tol: 1e-14, abs_tol: 0.0, max_intervals: 10 }).unwrap();
        assert!(!r.converged, "{r:?}");
        assert!(r.intervals <= 10);
        let r = integrate(|x: f64| Ok([1.0 / x]), &[Segment::Finite(-1.0, 1.0)], &opts(1e-6)).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn integrand_errors_propagate() {
        let r = integrate(|_| Err::<[f64; 1], _>(crate::Error::SingularTransfer { omega: 0.0 }), &[Segment::Finite(0.0, 1.0)], &opts(1e-6));
        assert!(r.is_err());
    }
}
