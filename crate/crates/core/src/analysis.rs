//! Numeric evaluation of the decay condition, rate fitting, Laplace
//! functionals, packing statistics, and the rank test used by the
//! stationarity check.

use std::io::Write as IoWrite;

use serde::Serialize;

use crate::cftp::sample_stationary;
use crate::config::{InitKind, SimParams};
use crate::coupling::{advance_coupled, CoupledState, DensityRow, DensitySeries};
use crate::dynamics::{generate_initial, simulate, Configuration};
use crate::error::{Error, Result};
use crate::geometry::{kissing_number, unit_ball_volume, Coord};

/// Sign report for the decay condition at given (rho, d, lambda).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionReport {
    pub rho: f64,
    pub d: usize,
    pub kappa: usize,
    pub nu1: f64,
    /// nu1 * lambda * (1 - 2 rho): negative already suffices for decay.
    pub naive_bound: f64,
    /// The refined expression; decay holds when this is negative.
    pub theorem_value: f64,
    pub satisfied_naive: bool,
    pub satisfied_theorem: bool,
}

/// Evaluate the refined decay condition
/// (1-2r) - r^k (1-r)^2 ((3/2)^d - 1) / (4^d (k-1) (1 + r - r^2))
/// with k the kissing number of dimension d, exactly as displayed.
pub fn theorem_condition(rho: f64, d: usize, lambda: f64) -> Result<ConditionReport> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParams(format!("rho = {rho} not in [0,1]")));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidParams(format!("d = {d} not in {{1,2,3}}")));
    }
    let kappa = kissing_number(d);
    let nu1 = unit_ball_volume(d);
    let k = kappa as f64;
    let correction = rho.powi(kappa as i32) * (1.0 - rho).powi(2) * (1.5f64.powi(d as i32) - 1.0)
        / (4.0f64.powi(d as i32) * (k - 1.0) * (1.0 + rho - rho * rho));
    let theorem_value = (1.0 - 2.0 * rho) - correction;
    let naive_bound = nu1 * lambda * (1.0 - 2.0 * rho);
    Ok(ConditionReport {
        rho,
        d,
        kappa,
        nu1,
        naive_bound,
        theorem_value,
        satisfied_naive: naive_bound < 0.0,
        satisfied_theorem: theorem_value < 0.0,
    })
}

/// Locate the sign change of the refined condition in rho by bisection.
pub fn theorem_threshold(d: usize, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let value = |r: f64| theorem_condition(r, d, 1.0).map(|c| c.theorem_value);
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (value(lo)?, value(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::contract(format!(
            "no sign change on [{lo}, {hi}] for d = {d}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if value(mid)?.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fitted exponential decay beta ~ alpha * exp(-c_hat * t).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub c_hat: f64,
    pub alpha_hat: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Time of the first zero beta_S row after the fit window began, if any.
    pub extinction_time: Option<f64>,
}

/// Least-squares line on (t, log beta_S) over rows with t >= t_min.
///
/// Rows after beta_S first hits zero are excluded: on a finite torus the
/// specials go extinct in finite time and the log is undefined past that
/// point; the extinction time is reported instead.
pub fn fit_decay_rate(series: &DensitySeries, t_min: f64) -> Result<DecayFit> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut extinction_time = None;
    for row in series.rows.iter().filter(|r| r.t >= t_min) {
        if row.beta_s > 0.0 {
            pts.push((row.t, row.beta_s.ln()));
        } else {
            extinction_time = Some(row.t);
            break;
        }
    }
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} positive rows past t_min = {t_min}, need 10",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mt;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        c_hat: -slope,
        alpha_hat: intercept.exp(),
        r2,
        window: (pts[0].0, pts[pts.len() - 1].0),
        n_points: pts.len(),
        extinction_time,
    })
}

/// Nonnegative test function s * indicator(box); bounded with compact
/// support, which is all the Laplace machinery needs.
#[derive(Clone, Copy, Debug)]
pub struct BoxFunction {
    pub scale: f64,
    pub lo: Coord,
    pub hi: Coord,
}

impl BoxFunction {
    pub fn new(scale: f64, lo: Coord, hi: Coord) -> Result<Self> {
        if scale < 0.0 {
            return Err(Error::contract("test function must be nonnegative"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::contract("test function box has lo > hi"));
        }
        Ok(BoxFunction { scale, lo, hi })
    }

    pub fn eval(&self, x: Coord, d: usize) -> f64 {
        let inside = (0..d).all(|k| self.lo[k] <= x[k] && x[k] < self.hi[k]);
        if inside {
            self.scale
        } else {
            0.0
        }
    }

    pub fn l1_norm(&self, d: usize) -> f64 {
        self.scale * (0..d).map(|k| self.hi[k] - self.lo[k]).product::<f64>()
    }

    pub fn sum_over(&self, c: &Configuration) -> f64 {
        let d = c.window().d;
        c.iter().map(|(_, rec)| self.eval(rec.x, d)).sum()
    }
}

/// Empirical Laplace functional E[exp(-sum f)] over replica snapshots,
/// with its standard error.
pub fn laplace_functional(snapshots: &[Configuration], f: &BoxFunction) -> Result<(f64, f64)> {
    if snapshots.is_empty() {
        return Err(Error::InsufficientData("no snapshots".into()));
    }
    let vals: Vec<f64> = snapshots
        .iter()
        .map(|c| (-f.sum_over(c)).exp())
        .collect();
    Ok(mean_se(&vals))
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LaplaceRow {
    pub t: f64,
    /// |L_hat - L|: absolute difference of the two empirical functionals.
    pub diff: f64,
    pub se: f64,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LaplaceCheck {
    pub c_hat: f64,
    pub beta_s0: f64,
    pub l1_norm: f64,
    pub rows: Vec<LaplaceRow>,
    pub n_violations: usize,
    pub advisory: Option<String>,
}

/// Check |L_hat_t - L_t| <= ||f||_1 * beta_S(0) * exp(-c_hat t) along coupled
/// runs: an ergodic start against a CFTP stationary start, `replicas` seeds,
/// paired differences, violations flagged beyond 3 standard errors.
#[allow(clippy::too_many_arguments)]
pub fn laplace_bound_check(
    p: &SimParams,
    f: &BoxFunction,
    t_end: f64,
    sample_dt: f64,
    replicas: usize,
    t_init: f64,
    t_max: f64,
) -> Result<LaplaceCheck> {
    p.validate()?;
    if replicas < 2 || !(t_end > 0.0) || !(sample_dt > 0.0) {
        return Err(Error::InvalidParams("need replicas >= 2 and positive times".into()));
    }
    let advisory = {
        let cond = theorem_condition(p.rho, p.d, p.lambda)?;
        (!cond.satisfied_theorem)
            .then(|| format!("decay condition not satisfied at rho = {}", p.rho))
    };
    let volume = p.window().volume();
    let n_times = (t_end / sample_dt).round() as usize + 1;
    // per sample time: paired exp(-sum f) values and special densities
    let mut diffs: Vec<Vec<f64>> = vec![Vec::new(); n_times];
    let mut betas: Vec<Vec<f64>> = vec![Vec::new(); n_times];
    for i in 0..replicas {
        let pi = p.replica(i as u64);
        let stationary = sample_stationary(&pi, t_init, t_max)?.sample;
        let ergodic = generate_initial(InitKind::Matern2, 1.0, &pi)?;
        let mut s = CoupledState::new(ergodic, stationary)?;
        for (k, (dk, bk)) in diffs.iter_mut().zip(betas.iter_mut()).enumerate() {
            if k > 0 {
                advance_coupled(&mut s, &pi, k as f64 * sample_dt)?;
            }
            let e1 = (-f.sum_over(&s.proc1)).exp();
            let e2 = (-f.sum_over(&s.proc2)).exp();
            dk.push(e1 - e2);
            let (_, a, z) = s.counts();
            bk.push((a + z) as f64 / volume);
        }
    }
    let beta_rows: Vec<DensityRow> = (0..n_times)
        .map(|k| {
            let b = betas[k].iter().sum::<f64>() / replicas as f64;
            DensityRow {
                t: k as f64 * sample_dt,
                beta_r: 0.0,
                beta_a: 0.0,
                beta_z: 0.0,
                beta_s: b,
            }
        })
        .collect();
    let beta_s0 = beta_rows[0].beta_s;
    let mean_series = DensitySeries { rows: beta_rows };
    // fall back on the naive rate when specials die too fast to fit
    let c_hat = fit_decay_rate(&mean_series, 1.0)
        .map(|fit| fit.c_hat)
        .unwrap_or_else(|_| {
            (unit_ball_volume(p.d) * p.lambda * (2.0 * p.rho - 1.0)).max(0.0)
        });
    let l1 = f.l1_norm(p.d);
    let rows: Vec<LaplaceRow> = (0..n_times)
        .map(|k| {
            let t = k as f64 * sample_dt;
            let (m, se) = mean_se(&diffs[k]);
            let diff = m.abs();
            let bound = l1 * beta_s0 * (-c_hat * t).exp();
            LaplaceRow { t, diff, se, bound, violation: diff > bound + 3.0 * se }
        })
        .collect();
    let n_violations = rows.iter().filter(|r| r.violation).count();
    Ok(LaplaceCheck { c_hat, beta_s0, l1_norm: l1, rows, n_violations, advisory })
}

/// Fraction of the window covered by disjoint radius-1/2 balls around the
/// points of a hard-core configuration.
pub fn packing_fraction(c: &Configuration) -> f64 {
    let w = c.window();
    c.len() as f64 * unit_ball_volume(w.d) * 0.5f64.powi(w.d as i32) / w.volume()
}

pub fn matern1_intensity(lambda: f64, d: usize) -> f64 {
    lambda * (-lambda * unit_ball_volume(d)).exp()
}

pub fn matern2_intensity(lambda: f64, d: usize) -> f64 {
    let nu1 = unit_ball_volume(d);
    (1.0 - (-lambda * nu1).exp()) / nu1
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub intensity: f64,
    pub packing_fraction: f64,
    pub matern1_ref: f64,
    pub matern2_ref: f64,
    pub coalesced: bool,
}

/// Stationary-regime statistics per rho: exact CFTP samples when coalescence
/// is reached, long forward runs otherwise (flagged in the table).
pub fn rho_sweep(
    p: &SimParams,
    rhos: &[f64],
    t_long: f64,
    t_init: f64,
    t_max: f64,
    matern_lambda: f64,
) -> Result<Vec<SweepRow>> {
    let volume = p.window().volume();
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidParams(format!("sweep rho = {rho} not in (0,1]")));
        }
        let pr = SimParams { rho, ..*p };
        let out = sample_stationary(&pr, t_init, t_max)?;
        let (sample, coalesced) = if out.result.coalesced {
            (out.sample, true)
        } else {
            let (_, long) = simulate(&pr, Configuration::new(pr.window()), 0.0, t_long, false)?;
            (long, false)
        };
        rows.push(SweepRow {
            rho,
            intensity: sample.len() as f64 / volume,
            packing_fraction: packing_fraction(&sample),
            matern1_ref: matern1_intensity(matern_lambda, p.d),
            matern2_ref: matern2_intensity(matern_lambda, p.d),
            coalesced,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: IoWrite>(rows: &[SweepRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "rho,intensity,packing_fraction,matern1_ref,matern2_ref,coalesced")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.rho, r.intensity, r.packing_fraction, r.matern1_ref, r.matern2_ref, r.coalesced
        )?;
    }
    Ok(())
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (absolute error < 1.5e-7, ample for rank-test p-values).
pub fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x < 0.0 { -erf } else { erf };
    0.5 * (1.0 + erf)
}

/// Two-sided Mann-Whitney rank-sum test (normal approximation with tie
/// correction and continuity correction); returns the p-value.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<f64> {
    let (n1, n2) = (a.len(), b.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData("rank test needs >= 2 per sample".into()));
    }
    let mut all: Vec<(f64, usize)> = a
        .iter()
        .map(|&v| (v, 0))
        .chain(b.iter().map(|&v| (v, 1)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = avg;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let r1: f64 = all
        .iter()
        .zip(&ranks)
        .filter(|((_, g), _)| *g == 0)
        .map(|(_, r)| r)
        .sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * (nf + 1.0 - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(1.0); // all observations tied
    }
    let z = (u1 - mean).abs() - 0.5;
    let z = z.max(0.0) / var.sqrt();
    Ok(2.0 * (1.0 - normal_cdf(z)))
}
