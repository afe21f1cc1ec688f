//! Gaussian peak fits by damped least squares.

use super::AnalysisError;
use crate::jpd::Projection;

const MAX_ITERATIONS: usize = 200;
const INITIAL_RADIUS: i64 = 8;
const MIN_CELLS_2D: usize = 25;
const MIN_CELLS_1D: usize = 4;
/// Narrower Gaussians put nearly all their weight in one cell, so the data
/// no longer constrain the width.
const MIN_WIDTH_PX: f64 = 0.3;

/// Two-dimensional fit `A exp(-(u-u0)^2/(2 wu^2) - (v-v0)^2/(2 wv^2)) + B`,
/// in the pixel coordinates of the fitted grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub u0: f64,
    pub v0: f64,
    pub width_u: f64,
    pub width_v: f64,
    pub offset: f64,
    /// Sum of squared residuals over the fitted region.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GaussianFit {
    /// Either width is below one pixel.
    pub fn subpixel(&self) -> bool {
        self.width_u < 1.0 || self.width_v < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit1d {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub offset: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct LmResult<const P: usize> {
    params: [f64; P],
    residual: f64,
    iterations: usize,
    converged: bool,
}

/// Solve `a x = b` for a symmetric positive definite `a`.
fn cholesky_solve<const P: usize>(a: &[[f64; P]; P], b: &[f64; P]) -> Option<[f64; P]> {
    let mut l = [[0.0; P]; P];
    for i in 0..P {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; P];
    for i in 0..P {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; P];
    for i in (0..P).rev() {
        let mut s = y[i];
        for k in i + 1..P {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Levenberg-Marquardt over `n` points; `model(i, p)` returns the model
/// value at point `i` and its gradient with respect to `p`.
fn levenberg_marquardt<const P: usize>(
    init: [f64; P],
    y: &[f64],
    model: impl Fn(usize, &[f64; P]) -> (f64, [f64; P]),
) -> LmResult<P> {
    let chi2 = |p: &[f64; P]| -> f64 {
        y.iter()
            .enumerate()
            .map(|(i, yi)| {
                let r = yi - model(i, p).0;
                r * r
            })
            .sum()
    };
    let mut p = init;
    let mut cost = chi2(&p);
    let mut lambda = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        let mut jtj = [[0.0; P]; P];
        let mut jtr = [0.0; P];
        for (i, yi) in y.iter().enumerate() {
            let (f, g) = model(i, &p);
            let r = yi - f;
            for a in 0..P {
                jtr[a] += g[a] * r;
                for b in 0..=a {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        for a in 0..P {
            for b in 0..a {
                jtj[b][a] = jtj[a][b];
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for a in 0..P {
                m[a][a] += lambda * jtj[a][a].max(1e-300);
            }
            let Some(step) = cholesky_solve(&m, &jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for a in 0..P {
                trial[a] += step[a];
            }
            let c = chi2(&trial);
            if c.is_finite() && c <= cost {
                let small = (0..P).all(|a| step[a].abs() <= 1e-10 * (p[a].abs() + 1e-10));
                let flat = cost - c <= 1e-15 * cost;
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small || flat || cost == 0.0 {
                    return LmResult {
                        params: p,
                        residual: cost,
                        iterations: it,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step even with heavy damping: at a minimum.
            return LmResult {
                params: p,
                residual: cost,
                iterations: it,
                converged: lambda < 1e20,
            };
        }
    }
    LmResult {
        params: p,
        residual: cost,
        iterations: MAX_ITERATIONS,
        converged: false,
    }
}

/// Width guess from the run of cells at or above half height around `peak`.
fn half_max_width(values: impl Fn(usize) -> f64, len: usize, peak: usize, base: f64) -> f64 {
    let half = base + 0.5 * (values(peak) - base);
    let mut lo = peak;
    while lo > 0 && values(lo - 1) >= half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < len && values(hi + 1) >= half {
        hi += 1;
    }
    ((hi - lo + 1) as f64 / 2.354_820_045_030_949).max(0.3)
}

/// Lowest-residual run among the starting points that converged.
fn best_run<const P: usize>(
    runs: impl IntoIterator<Item = LmResult<P>>,
    sane: impl Fn(&[f64; P]) -> bool,
) -> (Option<LmResult<P>>, usize) {
    let mut best: Option<LmResult<P>> = None;
    let mut iterations = 0;
    for r in runs {
        iterations += r.iterations;
        if r.converged && sane(&r.params) && best.as_ref().is_none_or(|b| r.residual < b.residual) {
            best = Some(r);
        }
    }
    (best, iterations)
}

/// Window of a 1D grid: `[lo, hi)` indices.
fn window(center: i64, radius: i64, len: usize) -> (usize, usize) {
    let lo = (center - radius).max(0) as usize;
    let hi = ((center + radius + 1).min(len as i64)) as usize;
    (lo, hi)
}

struct Moments {
    total: f64,
    mean: [f64; 2],
    var: [f64; 2],
}

fn moments2d(p: &Projection, xr: (usize, usize), yr: (usize, usize)) -> Moments {
    let (mut t, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for iy in yr.0..yr.1 {
        for ix in xr.0..xr.1 {
            let w = p.at(ix, iy).max(0.0);
            let (x, y) = ((p.x0 + ix as i64) as f64, (p.y0 + iy as i64) as f64);
            t += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            syy += w * y * y;
        }
    }
    let (mx, my) = (sx / t, sy / t);
    Moments {
        total: t,
        mean: [mx, my],
        var: [(sxx / t - mx * mx).max(0.0), (syy / t - my * my).max(0.0)],
    }
}

fn fit2d_region(p: &Projection, xr: (usize, usize), yr: (usize, usize)) -> Result<GaussianFit, AnalysisError> {
    let m = moments2d(p, xr, yr);
    if !(m.total > 0.0) {
        return Err(AnalysisError::EmptyGrid);
    }
    let moment_fit = |iterations| {
        // Pixel quantization alone gives a variance of 1/12.
        let wu = m.var[0].max(1.0 / 12.0).sqrt();
        let wv = m.var[1].max(1.0 / 12.0).sqrt();
        GaussianFit {
            amplitude: m.total / (2.0 * std::f64::consts::PI * wu * wv),
            u0: m.mean[0],
            v0: m.mean[1],
            width_u: wu,
            width_v: wv,
            offset: 0.0,
            residual: f64::NAN,
            converged: false,
            iterations,
        }
    };
    let nx = xr.1 - xr.0;
    let mut ys = Vec::with_capacity(nx * (yr.1 - yr.0));
    let mut coords = Vec::with_capacity(ys.capacity());
    let mut nonzero = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for iy in yr.0..yr.1 {
        for ix in xr.0..xr.1 {
            let v = p.at(ix, iy);
            nonzero += (v != 0.0) as usize;
            lo = lo.min(v);
            hi = hi.max(v);
            ys.push(v);
            coords.push(((p.x0 + ix as i64) as f64, (p.y0 + iy as i64) as f64));
        }
    }
    if nonzero < MIN_CELLS_2D {
        return Ok(moment_fit(0));
    }
    let base = lo.max(0.0);
    let peak = (0..ys.len()).fold(0, |b, i| if ys[i] > ys[b] { i } else { b });
    let (px, py) = (peak % nx, peak / nx);
    let ny = yr.1 - yr.0;
    let starts = [
        [
            hi - base,
            coords[peak].0,
            coords[peak].1,
            half_max_width(|i| ys[py * nx + i], nx, px, base),
            half_max_width(|i| ys[i * nx + px], ny, py, base),
            base,
        ],
        [
            hi - base,
            m.mean[0],
            m.mean[1],
            m.var[0].max(0.25).sqrt(),
            m.var[1].max(0.25).sqrt(),
            base,
        ],
    ];
    let model = |i: usize, q: &[f64; 6]| {
        let (u, v) = coords[i];
        let (du, dv) = (u - q[1], v - q[2]);
        let (su, sv) = (q[3] * q[3], q[4] * q[4]);
        let e = (-du * du / (2.0 * su) - dv * dv / (2.0 * sv)).exp();
        let f = q[0] * e + q[5];
        let g = [
            e,
            q[0] * e * du / su,
            q[0] * e * dv / sv,
            q[0] * e * du * du / (su * q[3]),
            q[0] * e * dv * dv / (sv * q[4]),
            1.0,
        ];
        (f, g)
    };
    let inside = |c: f64, lo: i64, hi: i64| c >= lo as f64 - 0.5 && c <= hi as f64 + 0.5;
    let sane = |q: &[f64; 6]| {
        q.iter().all(|v| v.is_finite())
            && q[0] > 0.0
            && q[3].abs() >= MIN_WIDTH_PX
            && q[4].abs() >= MIN_WIDTH_PX
            && inside(q[1], p.x0 + xr.0 as i64, p.x0 + xr.1 as i64 - 1)
            && inside(q[2], p.y0 + yr.0 as i64, p.y0 + yr.1 as i64 - 1)
    };
    let (best, iterations) = best_run(starts.map(|init| levenberg_marquardt(init, &ys, model)), sane);
    let Some(r) = best else {
        return Ok(moment_fit(iterations));
    };
    let q = r.params;
    Ok(GaussianFit {
        amplitude: q[0],
        u0: q[1],
        v0: q[2],
        width_u: q[3].abs(),
        width_v: q[4].abs(),
        offset: q[5],
        residual: r.residual,
        converged: true,
        iterations,
    })
}

/// Fit the dominant peak of a projection.
///
/// The fit region is a square around the largest 3x3 box sum, grown and
/// re-centred until it spans at least five fitted widths on each side.
pub fn fit_gaussian2d(p: &Projection) -> Result<GaussianFit, AnalysisError> {
    if !p.data.iter().any(|v| *v > 0.0) {
        return Err(AnalysisError::EmptyGrid);
    }
    let (mut cx, mut cy) = smoothed_argmax2d(p);
    let mut radius = INITIAL_RADIUS;
    let max_radius = p.nx.max(p.ny) as i64;
    let mut fit = fit2d_region(p, window(cx, radius, p.nx), window(cy, radius, p.ny))?;
    for _ in 0..4 {
        let needed = (5.0 * fit.width_u.max(fit.width_v)).ceil() as i64;
        if needed <= radius || radius >= max_radius {
            break;
        }
        radius = needed.min(max_radius);
        cx = recentre(fit.u0 - p.x0 as f64, cx, p.nx);
        cy = recentre(fit.v0 - p.y0 as f64, cy, p.ny);
        fit = fit2d_region(p, window(cx, radius, p.nx), window(cy, radius, p.ny))?;
    }
    Ok(fit)
}

/// Grid index of the largest 3x3 box sum (first in row-major order on
/// ties), so a lone noisy cell does not anchor the fit.
fn smoothed_argmax2d(p: &Projection) -> (i64, i64) {
    let (nx, ny) = (p.nx as i64, p.ny as i64);
    let mut best = (0, 0);
    let mut best_sum = f64::NEG_INFINITY;
    for iy in 0..ny {
        for ix in 0..nx {
            if p.at(ix as usize, iy as usize) <= 0.0 {
                continue;
            }
            let mut s = 0.0;
            for y in (iy - 1).max(0)..=(iy + 1).min(ny - 1) {
                for x in (ix - 1).max(0)..=(ix + 1).min(nx - 1) {
                    s += p.at(x as usize, y as usize);
                }
            }
            if s > best_sum {
                best_sum = s;
                best = (ix, iy);
            }
        }
    }
    best
}

fn smoothed_argmax1d(values: &[f64]) -> Option<usize> {
    let n = values.len();
    let mut best = None;
    let mut best_sum = f64::NEG_INFINITY;
    for (i, v) in values.iter().enumerate() {
        if *v <= 0.0 {
            continue;
        }
        let s: f64 = values[i.saturating_sub(1)..(i + 2).min(n)].iter().sum();
        if s > best_sum {
            best_sum = s;
            best = Some(i);
        }
    }
    best
}

/// Grid index nearest a fitted centre; `fallback` when the centre is unusable.
fn recentre(c: f64, fallback: i64, len: usize) -> i64 {
    if c.is_finite() {
        (c.round() as i64).clamp(0, len as i64 - 1)
    } else {
        fallback
    }
}

fn fit1d_region(values: &[f64], x0: f64, r: (usize, usize)) -> Result<GaussianFit1d, AnalysisError> {
    let (mut t, mut s, mut ss) = (0.0, 0.0, 0.0);
    let mut nonzero = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, v) in values[r.0..r.1].iter().enumerate() {
        let x = x0 + (r.0 + i) as f64;
        let w = v.max(0.0);
        t += w;
        s += w * x;
        ss += w * x * x;
        nonzero += (*v != 0.0) as usize;
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(t > 0.0) {
        return Err(AnalysisError::EmptyGrid);
    }
    let mean = s / t;
    let var = (ss / t - mean * mean).max(0.0);
    let moment_fit = |iterations| {
        let w = var.max(1.0 / 12.0).sqrt();
        GaussianFit1d {
            amplitude: t / ((2.0 * std::f64::consts::PI).sqrt() * w),
            center: mean,
            width: w,
            offset: 0.0,
            residual: f64::NAN,
            converged: false,
            iterations,
        }
    };
    if nonzero < MIN_CELLS_1D {
        return Ok(moment_fit(0));
    }
    let ys = &values[r.0..r.1];
    let base = lo.max(0.0);
    let peak = (0..ys.len()).fold(0, |b, i| if ys[i] > ys[b] { i } else { b });
    let starts = [
        [
            hi - base,
            x0 + (r.0 + peak) as f64,
            half_max_width(|i| ys[i], ys.len(), peak, base),
            base,
        ],
        [hi - base, mean, var.max(0.25).sqrt(), base],
    ];
    let model = |i: usize, q: &[f64; 4]| {
        let d = x0 + (r.0 + i) as f64 - q[1];
        let s2 = q[2] * q[2];
        let e = (-d * d / (2.0 * s2)).exp();
        (
            q[0] * e + q[3],
            [e, q[0] * e * d / s2, q[0] * e * d * d / (s2 * q[2]), 1.0],
        )
    };
    let sane = |q: &[f64; 4]| {
        q.iter().all(|v| v.is_finite())
            && q[0] > 0.0
            && q[2].abs() >= MIN_WIDTH_PX
            && q[1] >= x0 + r.0 as f64 - 0.5
            && q[1] <= x0 + r.1 as f64 - 0.5
    };
    let (best, iterations) = best_run(starts.map(|init| levenberg_marquardt(init, ys, model)), sane);
    let Some(res) = best else {
        return Ok(moment_fit(iterations));
    };
    let q = res.params;
    Ok(GaussianFit1d {
        amplitude: q[0],
        center: q[1],
        width: q[2].abs(),
        offset: q[3],
        residual: res.residual,
        converged: true,
        iterations,
    })
}

/// Fit the dominant peak of a 1D histogram whose cell `i` sits at `x0 + i`.
pub fn fit_gaussian1d(values: &[f64], x0: f64) -> Result<GaussianFit1d, AnalysisError> {
    let Some(mut c) = smoothed_argmax1d(values).map(|c| c as i64) else {
        return Err(AnalysisError::EmptyGrid);
    };
    let mut radius = INITIAL_RADIUS;
    let max_radius = values.len() as i64;
    let mut fit = fit1d_region(values, x0, window(c, radius, values.len()))?;
    for _ in 0..4 {
        let needed = (5.0 * fit.width).ceil() as i64;
        if needed <= radius || radius >= max_radius {
            break;
        }
        radius = needed.min(max_radius);
        c = recentre(fit.center - x0, c, values.len());
        fit = fit1d_region(values, x0, window(c, radius, values.len()))?;
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpd::ProjectionKind;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn render(nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Projection {
        let mut p = Projection::zeros(ProjectionKind::Minus, nx, ny, -(nx as i64 / 2), -(ny as i64 / 2));
        for iy in 0..ny {
            for ix in 0..nx {
                p.data[iy * nx + ix] = f((p.x0 + ix as i64) as f64, (p.y0 + iy as i64) as f64);
            }
        }
        p
    }

    #[test]
    fn noiseless_self_consistency() {
        let p = render(61, 61, |u, v| {
            1000.0 * (-(u - 1.3).powi(2) / (2.0 * 4.0) - (v + 0.7).powi(2) / (2.0 * 9.0)).exp()
        });
        let f = fit_gaussian2d(&p).unwrap();
        assert!(f.converged);
        assert!((f.width_u / 2.0 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.width_v / 3.0 - 1.0).abs() < 1e-6, "{f:?}");
        assert!((f.u0 - 1.3).abs() < 1e-6 && (f.v0 + 0.7).abs() < 1e-6);
        assert!((f.amplitude / 1000.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn offset_recovered() {
        let p = render(41, 41, |u, v| 50.0 * (-(u * u + v * v) / 8.0).exp() + 3.0);
        let f = fit_gaussian2d(&p).unwrap();
        assert!((f.offset - 3.0).abs() < 1e-6);
        assert!((f.width_u - 2.0).abs() < 1e-6);
    }

    #[test]
    fn narrow_peak_on_background_does_not_collapse() {
        // A sub-pixel conditional over a flat accidental floor; a wide
        // starting guess used to slide into a near-zero width.
        let col = [
            24.0, 16.0, 27.0, 15.0, 17.0, 17.0, 28.0, 168.0, 292.0, 135.0, 30.0, 20.0, 21.0, 20.0, 17.0, 17.0, 14.0,
        ];
        let mut values = vec![20.0; 64];
        values[20..37].copy_from_slice(&col);
        let f = fit_gaussian1d(&values, 0.0).unwrap();
        assert!(f.converged);
        assert!(f.width > 0.6 && f.width < 1.0, "{f:?}");
        assert!((f.center - 28.0).abs() < 0.2);
    }

    #[test]
    fn zero_grid_errors() {
        let p = Projection::zeros(ProjectionKind::Sum, 10, 10, 0, 0);
        assert!(matches!(fit_gaussian2d(&p), Err(AnalysisError::EmptyGrid)));
        assert!(fit_gaussian1d(&[0.0; 5], 0.0).is_err());
    }

    #[test]
    fn sparse_grid_uses_moments() {
        let mut p = Projection::zeros(ProjectionKind::Sum, 10, 10, 0, 0);
        p.data[55] = 3.0;
        p.data[56] = 1.0;
        let f = fit_gaussian2d(&p).unwrap();
        assert!(!f.converged);
        assert!((f.u0 - 5.25).abs() < 1e-12);
    }

    #[test]
    fn poisson_sample_width() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = Normal::new(0.0, 3.0).unwrap();
        let mut p = Projection::zeros(ProjectionKind::Minus, 81, 81, -40, -40);
        let mut xs = Vec::new();
        for _ in 0..100_000 {
            let (x, y): (f64, f64) = (g.sample(&mut rng), g.sample(&mut rng));
            let (ix, iy) = (x.round() as i64 + 40, y.round() as i64 + 40);
            if (0..81).contains(&ix) && (0..81).contains(&iy) {
                p.data[iy as usize * 81 + ix as usize] += 1.0;
                xs.push(x.round());
            }
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let moment = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let f = fit_gaussian2d(&p).unwrap();
        assert!(f.converged);
        assert!((f.width_u / moment - 1.0).abs() < 0.02, "{} vs {moment}", f.width_u);
    }

    #[test]
    fn one_dimensional_exact() {
        let v: Vec<f64> = (0..50)
            .map(|i| 200.0 * (-((i as f64 + 10.0 - 33.2).powi(2)) / (2.0 * 2.5 * 2.5)).exp() + 1.0)
            .collect();
        let f = fit_gaussian1d(&v, 10.0).unwrap();
        assert!(f.converged);
        assert!((f.width - 2.5).abs() < 1e-6 && (f.center - 33.2).abs() < 1e-6, "{f:?}");
    }
}
