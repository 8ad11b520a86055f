//! Sweep drivers: rate thresholds across measure families, growth-rate
//! fits, and the ball-volume certificate that ties decay-class membership to
//! ball sizes.
//!
//! Sweeps report evidence — CI-separated orderings and proximity verdicts —
//! never a dimension as a proved number.

use num::{BigInt, BigRational};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::groups::GroupContext;
use crate::measures::Measure;
use crate::percolation::{lambda_c_estimate, CappedReason, PercConfig, PercModel};
use crate::report::{csv_f64, Table};
use crate::rng::mix2;
use crate::stats::linear_fit;

/// Width of the "approaching 1" band: a family is called consistent with the
/// limit when the last CI's lower edge sits below 1 + band. Finite windows
/// inflate the estimates, so this is a report parameter, not a truth claim.
pub const DEFAULT_PROXIMITY_BAND: f64 = 0.15;
/// Heaviest-atom floor below which a family no longer counts as obstructed.
pub const DEFAULT_DELTA_FLOOR: f64 = 0.05;

/// Smallest last/first heaviest-atom ratio still counted as "delta stays
/// bounded below" (a draining atom mass halves and keeps halving as the
/// radius grid extends; a pinned one barely moves).
pub const DEFAULT_DELTA_TREND_MIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepParams {
    pub proximity_band: f64,
    pub delta_floor: f64,
    pub delta_trend_min: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            proximity_band: DEFAULT_PROXIMITY_BAND,
            delta_floor: DEFAULT_DELTA_FLOOR,
            delta_trend_min: DEFAULT_DELTA_TREND_MIN,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    /// Grid coordinates, in family order (e.g. [("s", 3.0), ("R", 8.0)]).
    pub params: Vec<(String, f64)>,
    pub measure: String,
    pub lambda_hat: Option<f64>,
    pub ci: (f64, f64),
    pub capped: bool,
    pub capped_reason: Option<String>,
    /// Point-level failure (e.g. cap exceeded while building the ball);
    /// recorded here so the sweep continues.
    pub error: Option<String>,
    /// Heaviest atom mass of the point's measure.
    pub delta_atom: f64,
    /// The exact seed this point ran under; rerunning with it reproduces the
    /// estimate bit for bit.
    pub seed: u64,
}

impl SweepPoint {
    fn usable(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierClass {
    /// Every point of the row was capped.
    Capped,
    /// CI-separated decreasing with the last CI entering the proximity band.
    ApproachingOne,
    /// Heaviest atom bounded below across the grid (floor + trend) and every
    /// CI fully above the band — the atom obstruction realized numerically.
    /// Thresholds may still drift down; what matters is that the atom mass
    /// does not drain and the estimates stay clear of 1.
    ObstructedAboveOne,
    Unresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrontierRow {
    pub exponent: f64,
    pub class: FrontierClass,
    pub decreasing_ci_separated: bool,
    pub min_delta: f64,
    /// Heaviest-atom mass at the last grid radius over the first — near 1
    /// when the atom is pinned, small when the tail absorbs it.
    pub delta_trend: f64,
    pub last_ci_low: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub group: String,
    pub family: String,
    pub window: u32,
    pub trials: u64,
    pub theta: f64,
    /// Master seed; per-point seeds in the rows derive from it by grid index.
    pub master_seed: u64,
    pub params: SweepParams,
    pub points: Vec<SweepPoint>,
    /// Per-exponent classification for decay-grid sweeps; empty otherwise.
    pub frontier: Vec<FrontierRow>,
    pub verdicts: Vec<Verdict>,
}

/// Successive estimates ordered with interior-disjoint 95% intervals.
/// Touching endpoints are allowed: interval edges are certified one-sided
/// probe verdicts, so a shared bisection probe that is decisively below
/// theta for one measure and decisively above for the next still witnesses
/// the ordering.
pub fn ci_separated_decreasing(points: &[SweepPoint]) -> bool {
    let usable: Vec<&SweepPoint> = points.iter().filter(|p| p.usable() && !p.capped).collect();
    if usable.len() != points.len() || usable.len() < 2 {
        return false;
    }
    usable.windows(2).all(|w| w[1].ci.1 <= w[0].ci.0)
}

fn capped_reason_label(reason: &Option<CappedReason>) -> Option<String> {
    reason.as_ref().map(|r| match r {
        CappedReason::SurvivalBelowThetaAtLambdaMax => {
            "survival below theta at lambda_max".to_string()
        }
        CappedReason::CutPointCertificate { drift } => {
            format!("cut-point certificate (drift {})", csv_f64(*drift))
        }
    })
}

/// Run one sweep point: build the measure, estimate the rate threshold under
/// a point-specific seed derived from the master seed and the grid index.
fn run_point(
    params: Vec<(String, f64)>,
    measure: Result<Measure>,
    cfg: &PercConfig,
    index: u64,
) -> SweepPoint {
    let seed = mix2(cfg.seed, index);
    let measure = match measure {
        Ok(m) => m,
        Err(e) => {
            return SweepPoint {
                params,
                measure: String::new(),
                lambda_hat: None,
                ci: (f64::NAN, f64::NAN),
                capped: false,
                capped_reason: None,
                error: Some(e.to_string()),
                delta_atom: f64::NAN,
                seed,
            }
        }
    };
    let descriptor = measure.descriptor().to_string();
    let delta_atom = measure.max_atom().1;
    let point_cfg = PercConfig {
        seed,
        ..cfg.clone()
    };
    match lambda_c_estimate(&PercModel::from(measure), &point_cfg) {
        Ok(est) => SweepPoint {
            params,
            measure: descriptor,
            lambda_hat: est.lambda_hat,
            ci: (est.ci_low, est.ci_high),
            capped: est.capped,
            capped_reason: capped_reason_label(&est.capped_reason),
            error: None,
            delta_atom,
            seed,
        },
        Err(e) => SweepPoint {
            params,
            measure: descriptor,
            lambda_hat: None,
            ci: (f64::NAN, f64::NAN),
            capped: false,
            capped_reason: None,
            error: Some(e.to_string()),
            delta_atom,
            seed,
        },
    }
}

/// Rate thresholds for ball-uniform measures along growing radii. The
/// verdict is "consistent with percolative" only when the sequence is
/// CI-separated decreasing and the last interval reaches the proximity band
/// above 1; any capped point renders the family not percolative at this
/// window.
pub fn percolativity_sweep(
    ctx: &GroupContext,
    n_list: &[u32],
    cfg: &PercConfig,
    params: &SweepParams,
) -> Result<SweepReport> {
    if n_list.is_empty() {
        return Err(Error::usage(
            "percolativity sweep needs at least one radius",
        ));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::usage("radius list must be strictly increasing"));
    }
    cfg.validate()?;
    let points: Vec<SweepPoint> = n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            run_point(
                vec![("n".into(), n as f64)],
                Measure::uniform_on_ball(ctx, n),
                cfg,
                i as u64,
            )
        })
        .collect();
    let mut verdicts = Vec::new();
    let any_capped = points.iter().any(|p| p.capped);
    let decreasing = ci_separated_decreasing(&points);
    let near_one = points
        .last()
        .map(|p| p.usable() && !p.capped && p.ci.0 < 1.0 + params.proximity_band)
        .unwrap_or(false);
    let verdict = if any_capped {
        for p in points.iter().filter(|p| p.capped) {
            verdicts.push(Verdict {
                name: format!("caveat n={}", p.params[0].1),
                value: p.capped_reason.clone().unwrap_or_else(|| "capped".into()),
            });
        }
        format!("not percolative at window L={}", cfg.escape_radius)
    } else if decreasing && near_one {
        "consistent with percolative".to_string()
    } else {
        format!("not resolved at window L={}", cfg.escape_radius)
    };
    verdicts.push(Verdict {
        name: "percolative".into(),
        value: verdict,
    });
    verdicts.push(Verdict {
        name: "ci_separated_decreasing".into(),
        value: decreasing.to_string(),
    });
    verdicts.push(Verdict {
        name: "last_ci_in_band".into(),
        value: near_one.to_string(),
    });
    Ok(SweepReport {
        group: ctx.spec().to_string(),
        family: "ball-uniform".into(),
        window: cfg.escape_radius,
        trials: cfg.trials,
        theta: cfg.theta,
        master_seed: cfg.seed,
        params: *params,
        points,
        frontier: Vec::new(),
        verdicts,
    })
}

fn classify_rows(
    s_list: &[f64],
    r_len: usize,
    points: &[SweepPoint],
    params: &SweepParams,
) -> Vec<FrontierRow> {
    let mut rows = Vec::with_capacity(s_list.len());
    for (si, &s) in s_list.iter().enumerate() {
        let row = &points[si * r_len..(si + 1) * r_len];
        let usable: Vec<&SweepPoint> = row.iter().filter(|p| p.usable()).collect();
        let all_capped = !usable.is_empty() && usable.iter().all(|p| p.capped);
        let decreasing = ci_separated_decreasing(row);
        let min_delta = usable
            .iter()
            .map(|p| p.delta_atom)
            .fold(f64::INFINITY, f64::min);
        let delta_trend = match (usable.first(), usable.last()) {
            (Some(first), Some(last)) if first.delta_atom > 0.0 => {
                last.delta_atom / first.delta_atom
            }
            _ => f64::NAN,
        };
        let active: Vec<&&SweepPoint> = usable.iter().filter(|p| !p.capped).collect();
        let last_ci_low = active.last().map(|p| p.ci.0).unwrap_or(f64::NAN);
        let all_above_band =
            !active.is_empty() && active.iter().all(|p| p.ci.0 >= 1.0 + params.proximity_band);
        let class = if usable.is_empty() {
            FrontierClass::Unresolved
        } else if all_capped {
            FrontierClass::Capped
        } else if decreasing && last_ci_low < 1.0 + params.proximity_band {
            FrontierClass::ApproachingOne
        } else if min_delta >= params.delta_floor
            && delta_trend >= params.delta_trend_min
            && all_above_band
        {
            FrontierClass::ObstructedAboveOne
        } else {
            FrontierClass::Unresolved
        };
        rows.push(FrontierRow {
            exponent: s,
            class,
            decreasing_ci_separated: decreasing,
            min_delta,
            delta_trend,
            last_ci_low,
        });
    }
    rows
}

fn frontier_verdicts(frontier: &[FrontierRow]) -> Vec<Verdict> {
    frontier
        .iter()
        .map(|row| Verdict {
            name: format!("s={}", row.exponent),
            value: format!(
                "{:?} (decreasing={}, min_delta={:.4}, delta_trend={:.4}, last_ci_low={:.4})",
                row.class,
                row.decreasing_ci_separated,
                row.min_delta,
                row.delta_trend,
                row.last_ci_low
            ),
        })
        .collect()
}

/// Grid sweep over polynomial-decay measures: for each exponent s, rate
/// estimates across truncation radii with the heaviest-atom mass recorded.
/// The rank-one cut certificate is disabled: truncations here stand in for
/// their unbounded-range limits, so the finite-window pseudo-threshold is the
/// object of interest.
pub fn pdim_sweep(
    ctx: &GroupContext,
    s_list: &[f64],
    r_list: &[u32],
    cfg: &PercConfig,
    params: &SweepParams,
) -> Result<SweepReport> {
    if s_list.is_empty() || r_list.is_empty() {
        return Err(Error::usage("pdim sweep needs non-empty s and R grids"));
    }
    cfg.validate()?;
    let cfg = PercConfig {
        one_d_cut_certificate: false,
        ..cfg.clone()
    };
    let grid: Vec<(usize, f64, u32)> = s_list
        .iter()
        .enumerate()
        .flat_map(|(si, &s)| {
            r_list
                .iter()
                .enumerate()
                .map(move |(ri, &r)| (si * r_list.len() + ri, s, r))
        })
        .collect();
    let points: Vec<SweepPoint> = grid
        .into_par_iter()
        .map(|(idx, s, r)| {
            run_point(
                vec![("s".into(), s), ("R".into(), r as f64)],
                Measure::poly_decay(ctx, s, r),
                &cfg,
                idx as u64,
            )
        })
        .collect();
    let frontier = classify_rows(s_list, r_list.len(), &points, params);
    let verdicts = frontier_verdicts(&frontier);
    Ok(SweepReport {
        group: ctx.spec().to_string(),
        family: "poly-decay".into(),
        window: cfg.escape_radius,
        trials: cfg.trials,
        theta: cfg.theta,
        master_seed: cfg.seed,
        params: *params,
        points,
        frontier,
        verdicts,
    })
}

/// Grid sweep over stretched-exponential measures at a fixed base r.
pub fn epdim_sweep(
    ctx: &GroupContext,
    r: f64,
    s_list: &[f64],
    r_list: &[u32],
    cfg: &PercConfig,
    params: &SweepParams,
) -> Result<SweepReport> {
    if s_list.is_empty() || r_list.is_empty() {
        return Err(Error::usage("epdim sweep needs non-empty s and R grids"));
    }
    if !(0.0 < r && r < 1.0) {
        return Err(Error::usage(
            "stretched-exponential base must lie in (0, 1)",
        ));
    }
    if !s_list.iter().all(|&s| 0.0 < s && s <= 1.0) {
        return Err(Error::usage("stretch exponents must lie in (0, 1]"));
    }
    cfg.validate()?;
    let cfg = PercConfig {
        one_d_cut_certificate: false,
        ..cfg.clone()
    };
    let grid: Vec<(usize, f64, u32)> = s_list
        .iter()
        .enumerate()
        .flat_map(|(si, &s)| {
            r_list
                .iter()
                .enumerate()
                .map(move |(ri, &radius)| (si * r_list.len() + ri, s, radius))
        })
        .collect();
    let points: Vec<SweepPoint> = grid
        .into_par_iter()
        .map(|(idx, s, radius)| {
            run_point(
                vec![("s".into(), s), ("R".into(), radius as f64)],
                Measure::stretched_exp_decay(ctx, r, s, radius),
                &cfg,
                idx as u64,
            )
        })
        .collect();
    let frontier = classify_rows(s_list, r_list.len(), &points, params);
    let mut verdicts = frontier_verdicts(&frontier);
    verdicts.push(Verdict {
        name: "base".into(),
        value: csv_f64(r),
    });
    Ok(SweepReport {
        group: ctx.spec().to_string(),
        family: "stretched-exp-decay".into(),
        window: cfg.escape_radius,
        trials: cfg.trials,
        theta: cfg.theta,
        master_seed: cfg.seed,
        params: *params,
        points,
        frontier,
        verdicts,
    })
}

/// One row per point: `group,family,params,L,trials,theta,lambda_hat,ci_low,
/// ci_high,capped,capped_reason,error,delta_atom,seed`. Params are rendered
/// `name=value` joined by `;`.
pub fn sweep_csv(report: &SweepReport) -> Table {
    let mut t = Table::new(&[
        "group",
        "family",
        "params",
        "L",
        "trials",
        "theta",
        "lambda_hat",
        "ci_low",
        "ci_high",
        "capped",
        "capped_reason",
        "error",
        "delta_atom",
        "seed",
    ]);
    t.set_config("group", &report.group);
    t.set_config("family", &report.family);
    t.set_config("L", report.window);
    t.set_config("trials", report.trials);
    t.set_config("theta", report.theta);
    t.set_config("seed", report.master_seed);
    t.set_config("proximity_band", report.params.proximity_band);
    t.set_config("delta_floor", report.params.delta_floor);
    t.set_config("delta_trend_min", report.params.delta_trend_min);
    for v in &report.verdicts {
        t.set_config(&v.name, &v.value);
    }
    for p in &report.points {
        let params = p
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        t.push_row(vec![
            report.group.clone(),
            report.family.clone(),
            params,
            report.window.to_string(),
            report.trials.to_string(),
            csv_f64(report.theta),
            p.lambda_hat.map(csv_f64).unwrap_or_default(),
            if p.ci.0.is_nan() {
                String::new()
            } else {
                csv_f64(p.ci.0)
            },
            if p.ci.1.is_nan() {
                String::new()
            } else {
                csv_f64(p.ci.1)
            },
            p.capped.to_string(),
            p.capped_reason.clone().unwrap_or_default(),
            p.error.clone().unwrap_or_default(),
            if p.delta_atom.is_nan() {
                String::new()
            } else {
                csv_f64(p.delta_atom)
            },
            p.seed.to_string(),
        ]);
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub group: String,
    pub radii: Vec<u32>,
    pub ball_sizes: Vec<u64>,
    /// Least-squares slope of log|B(n)| against log(n + 1/2). The half-step
    /// centering absorbs most of the small-radius boundary bias (plain log n
    /// underestimates the plane's exponent by ~10% at radii <= 16).
    pub d_hat: f64,
    pub residual_rms: f64,
    /// Polynomial fit rejected by the residual test.
    pub exponential: bool,
    /// When the polynomial fit is rejected: slope of log log|B(n)| vs
    /// log(n + 1/2), i.e. the stretch exponent of an exp(c n^s) profile.
    pub stretched_exponent: Option<f64>,
    pub statement: String,
}

/// Residual RMS above which the polynomial growth model is rejected.
const POLY_RESIDUAL_LIMIT: f64 = 0.05;
/// Slack added to the fitted exponent in the reported upper-bound statement.
const FIT_SLACK: f64 = 0.1;

/// Fit ball growth along a geometric progression of radii (>= 3 terms; the
/// default families use 4 where the element cap allows).
pub fn growth_fit(ctx: &GroupContext, radii: &[u32]) -> Result<GrowthFit> {
    if radii.len() < 3 {
        return Err(Error::usage("growth fit needs at least 3 radii"));
    }
    if radii[0] == 0 {
        return Err(Error::usage("growth fit radii must be positive"));
    }
    if !radii.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::usage("growth fit radii must be strictly increasing"));
    }
    let ratio = radii[1] / radii[0];
    let geometric = ratio >= 2 && radii.windows(2).all(|w| w[1] == w[0] * ratio);
    if !geometric {
        return Err(Error::usage(
            "growth fit radii must form a geometric progression (constant integer ratio >= 2)",
        ));
    }
    let ball = ctx.ball(*radii.last().unwrap())?;
    let cumulative: Vec<u64> = ball
        .sphere_sizes
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    let ball_sizes: Vec<u64> = radii.iter().map(|&r| cumulative[r as usize]).collect();
    let log_points: Vec<(f64, f64)> = radii
        .iter()
        .zip(&ball_sizes)
        .map(|(&r, &b)| ((r as f64 + 0.5).ln(), (b as f64).ln()))
        .collect();
    let (d_hat, _, residual_rms) = linear_fit(&log_points);
    let exponential = residual_rms > POLY_RESIDUAL_LIMIT;
    let (stretched_exponent, statement) = if exponential {
        let loglog: Vec<(f64, f64)> = radii
            .iter()
            .zip(&ball_sizes)
            .map(|(&r, &b)| ((r as f64 + 0.5).ln(), (b as f64).ln().ln()))
            .collect();
        let (s_hat, _, _) = linear_fit(&loglog);
        (
            Some(s_hat),
            format!(
                "growth superpolynomial (residual rms {residual_rms:.4}); \
                 log-log fit suggests exp(c n^{s_hat:.2})"
            ),
        )
    } else {
        (
            None,
            format!(
                "polynomial growth degree ~ {d_hat:.2}; \
                 supports an upper bound of {:.2} on the ball-family dimension",
                d_hat + FIT_SLACK
            ),
        )
    };
    Ok(GrowthFit {
        group: ctx.spec().to_string(),
        radii: radii.to_vec(),
        ball_sizes,
        d_hat,
        residual_rms,
        exponential,
        stretched_exponent,
        statement,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LbRow {
    pub n: u32,
    pub ball_size: u64,
    /// |B(n)| > b n^s, checked exactly for integer s.
    pub size_ok: bool,
    /// Heaviest-mass scale of uniform_on_ball(n) against 1/b:
    /// n^s/(|B(n)|-1) <= 1/b, i.e. the measure lies in the polynomial decay
    /// class with constant 1/b.
    pub b_min: f64,
    pub membership_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LbCertificate {
    pub group: String,
    pub s: f64,
    pub b: f64,
    /// `p/q` when the checks ran in exact rational arithmetic (integer s).
    pub b_exact: Option<String>,
    pub rows: Vec<LbRow>,
    pub all_hold: bool,
    /// An accompanying percolativity verdict, when the caller ran the sweep.
    pub percolativity: Option<String>,
}

/// Check, along n_list, that ball-uniform measures decay no faster than
/// |g|^-s with constant 1/b: both the ball-size inequality |B(n)| > b n^s
/// and the decay-class membership n^s/(|B(n)|-1) <= 1/b. Integer s runs in
/// exact rational arithmetic. Default b is half the first point's implied
/// constant (|B(n0)|-1)/n0^s.
pub fn lb_certificate(
    ctx: &GroupContext,
    s: f64,
    n_list: &[u32],
    b: Option<f64>,
    percolativity: Option<String>,
) -> Result<LbCertificate> {
    if n_list.is_empty() {
        return Err(Error::usage("certificate needs at least one radius"));
    }
    if !n_list.iter().all(|&n| n >= 1) {
        return Err(Error::usage("certificate radii must be positive"));
    }
    if !(s > 0.0) {
        return Err(Error::usage("decay exponent must be positive"));
    }
    let exact_s = if s.fract() == 0.0 && (1.0..=32.0).contains(&s) {
        Some(s as u32)
    } else {
        None
    };
    let ball = ctx.ball(*n_list.iter().max().unwrap())?;
    let cumulative: Vec<u64> = ball
        .sphere_sizes
        .iter()
        .scan(0u64, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let size_of = |n: u32| cumulative[n as usize];

    // Exact path: b as a rational, comparisons in BigInt.
    if let Some(su) = exact_s {
        let b_rat: BigRational = match b {
            Some(v) => {
                BigRational::from_float(v).ok_or_else(|| Error::usage("b must be finite"))?
            }
            None => {
                let n0 = n_list[0];
                BigRational::new(
                    BigInt::from(size_of(n0) - 1),
                    BigInt::from(2u64) * BigInt::from(n0).pow(su),
                )
            }
        };
        let mut rows = Vec::new();
        let mut all_hold = true;
        for &n in n_list {
            let size = size_of(n);
            let n_pow = BigRational::from_integer(BigInt::from(n).pow(su));
            let threshold = &b_rat * &n_pow;
            let size_ok = BigRational::from_integer(BigInt::from(size)) > threshold;
            let membership_ok = threshold <= BigRational::from_integer(BigInt::from(size - 1));
            let b_min = (n as f64).powi(su as i32) / (size - 1) as f64;
            all_hold &= size_ok && membership_ok;
            rows.push(LbRow {
                n,
                ball_size: size,
                size_ok,
                b_min,
                membership_ok,
            });
        }
        use num::ToPrimitive;
        return Ok(LbCertificate {
            group: ctx.spec().to_string(),
            s,
            b: b_rat.to_f64().unwrap_or(f64::NAN),
            b_exact: Some(b_rat.to_string()),
            rows,
            all_hold,
            percolativity,
        });
    }

    // Float path for non-integer exponents.
    let b_val = match b {
        Some(v) => v,
        None => {
            let n0 = n_list[0];
            (size_of(n0) - 1) as f64 / (2.0 * (n0 as f64).powf(s))
        }
    };
    let mut rows = Vec::new();
    let mut all_hold = true;
    for &n in n_list {
        let size = size_of(n);
        let threshold = b_val * (n as f64).powf(s);
        let size_ok = size as f64 > threshold;
        let membership_ok = threshold <= (size - 1) as f64;
        let b_min = (n as f64).powf(s) / (size - 1) as f64;
        all_hold &= size_ok && membership_ok;
        rows.push(LbRow {
            n,
            ball_size: size,
            size_ok,
            b_min,
            membership_ok,
        });
    }
    Ok(LbCertificate {
        group: ctx.spec().to_string(),
        s,
        b: b_val,
        b_exact: None,
        rows,
        all_hold,
        percolativity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::tree_oracle_lambda_c;

    fn ctx(spec: &str) -> GroupContext {
        GroupContext::parse(spec).unwrap()
    }

    fn sweep_cfg(window: u32, trials: u64) -> PercConfig {
        PercConfig {
            escape_radius: window,
            trials,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn growth_fit_recovers_lattice_dimensions() {
        let radii = [2u32, 4, 8, 16];
        let expected = [(1usize, 1.0f64), (2, 2.0), (3, 3.0)];
        for (d, want) in expected {
            let c = ctx(&format!("zd:{d}"));
            let fit = growth_fit(&c, &radii).unwrap();
            assert!(!fit.exponential, "zd:{d} flagged exponential");
            assert!(
                (fit.d_hat - want).abs() / want < 0.05,
                "zd:{d}: d_hat {}",
                fit.d_hat
            );
            assert!(fit.statement.contains("polynomial"));
        }
        // Tighter windows from the examples: the line within 0.05 absolute,
        // the plane within 0.1.
        let fit1 = growth_fit(&ctx("zd:1"), &radii).unwrap();
        assert!((fit1.d_hat - 1.0).abs() < 0.05);
        let fit2 = growth_fit(&ctx("zd:2"), &radii).unwrap();
        assert!((fit2.d_hat - 2.0).abs() < 0.1);
    }

    #[test]
    fn growth_fit_flags_exponential_growth() {
        let f2 = ctx("free:2");
        let fit = growth_fit(&f2, &[2, 4, 8]).unwrap();
        assert!(fit.exponential, "residual rms {}", fit.residual_rms);
        let s = fit.stretched_exponent.unwrap();
        assert!((s - 1.0).abs() < 0.25, "stretch exponent {s}");
        assert!(fit.statement.contains("superpolynomial"));

        let lamp = ctx("lamp");
        let fit = growth_fit(&lamp, &[2, 4, 8]).unwrap();
        assert!(fit.exponential);
    }

    #[test]
    fn growth_fit_validates_radii() {
        let z2 = ctx("zd:2");
        assert!(matches!(growth_fit(&z2, &[2, 4]), Err(Error::Usage(_))));
        assert!(matches!(growth_fit(&z2, &[2, 4, 6]), Err(Error::Usage(_))));
        assert!(matches!(growth_fit(&z2, &[0, 2, 4]), Err(Error::Usage(_))));
        assert!(matches!(
            growth_fit(&z2, &[2, 4, 8, 17]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn heisenberg_growth_is_quartic() {
        // Growth degree 4; radius 2 still carries too much curvature, so the
        // window starts at 4.
        let h = ctx("heis");
        let fit = growth_fit(&h, &[4, 8, 16, 32]).unwrap();
        assert!(!fit.exponential, "residual rms {}", fit.residual_rms);
        assert!(fit.d_hat > 3.8 && fit.d_hat < 4.4, "d_hat {}", fit.d_hat);
    }

    #[test]
    fn percolativity_on_the_plane() {
        let z2 = ctx("zd:2");
        let report =
            percolativity_sweep(&z2, &[1, 2], &sweep_cfg(16, 400), &SweepParams::default())
                .unwrap();
        assert_eq!(report.points.len(), 2);
        assert!(report.points.iter().all(|p| !p.capped && p.error.is_none()));
        // First point sits near the nearest-neighbor anchor; second is
        // CI-separated below it.
        let p1 = &report.points[0];
        let p2 = &report.points[1];
        assert!(p1.lambda_hat.unwrap() > p2.lambda_hat.unwrap());
        assert!(p2.ci.1 < p1.ci.0, "expected CI separation: {p1:?} {p2:?}");
        assert!(report
            .verdicts
            .iter()
            .any(|v| v.name == "ci_separated_decreasing" && v.value == "true"));
        // delta for ball-uniform is 1/(|B|-1).
        assert!((p1.delta_atom - 0.25).abs() < 1e-15);
        assert!((p2.delta_atom - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn percolativity_on_the_line_is_capped() {
        let z1 = ctx("zd:1");
        let report =
            percolativity_sweep(&z1, &[1, 2], &sweep_cfg(32, 200), &SweepParams::default())
                .unwrap();
        assert!(report.points.iter().all(|p| p.capped));
        let verdict = report
            .verdicts
            .iter()
            .find(|v| v.name == "percolative")
            .unwrap();
        assert_eq!(verdict.value, "not percolative at window L=32");
        assert!(report
            .verdicts
            .iter()
            .any(|v| v.name.starts_with("caveat") && v.value.contains("cut-point")));
    }

    #[test]
    fn tree_surrogate_family_approaches_one() {
        // Closed-form thresholds for the free-family surrogate: strictly
        // decreasing in the rank and approaching 1.
        let mut prev = f64::INFINITY;
        for k in 2..=8u32 {
            let v = tree_oracle_lambda_c(k).unwrap();
            assert!(v < prev && v > 1.0, "k={k}: {v}");
            prev = v;
        }
        assert!(tree_oracle_lambda_c(500).unwrap() < 1.0 + 1.1 / 500.0);
    }

    #[test]
    fn pdim_frontier_on_the_plane() {
        let z2 = ctx("zd:2");
        let report = pdim_sweep(
            &z2,
            &[1.5, 3.0],
            &[2, 4, 8],
            &sweep_cfg(12, 1500),
            &SweepParams::default(),
        )
        .unwrap();
        assert_eq!(report.points.len(), 6);
        assert!(report.points.iter().all(|p| p.error.is_none() && !p.capped));
        let light = &report.frontier[0]; // s = 1.5
        let heavy = &report.frontier[1]; // s = 3.0
                                         // Heavy tails: thresholds fall CI-separated as the radius grows and
                                         // the atom mass drains away.
        assert!(light.decreasing_ci_separated, "{report:?}");
        assert_ne!(light.class, FrontierClass::ObstructedAboveOne, "{report:?}");
        assert!(light.min_delta < 0.125);
        assert!(
            light.delta_trend < 0.5,
            "delta should drain: {}",
            light.delta_trend
        );
        // s = 3: the unit atoms keep delta >= 1/8 and the estimates stay
        // clear of 1 even as they drift down with the radius.
        assert_eq!(heavy.class, FrontierClass::ObstructedAboveOne, "{report:?}");
        assert!(heavy.min_delta >= 0.125);
        assert!(heavy.delta_trend >= 0.5);
        assert!(heavy.last_ci_low >= 1.15);
    }

    #[test]
    fn pdim_on_the_line_with_certificate_disabled() {
        // Truncated heavy-tail measures on the line: the certificate is off,
        // so finite pseudo-thresholds exist and fall with the radius.
        let z1 = ctx("zd:1");
        let report = pdim_sweep(
            &z1,
            &[1.5],
            &[8, 32],
            &sweep_cfg(24, 400),
            &SweepParams::default(),
        )
        .unwrap();
        let pts = &report.points;
        assert!(
            pts.iter().all(|p| !p.capped && p.lambda_hat.is_some()),
            "{pts:?}"
        );
        assert!(pts[1].lambda_hat.unwrap() < pts[0].lambda_hat.unwrap());
    }

    #[test]
    fn lambda_nondecreasing_in_s_at_fixed_radius() {
        let z2 = ctx("zd:2");
        let report = pdim_sweep(
            &z2,
            &[1.5, 3.0],
            &[4],
            &sweep_cfg(12, 400),
            &SweepParams::default(),
        )
        .unwrap();
        let light = &report.points[0];
        let heavy = &report.points[1];
        assert!(
            light.ci.1 < heavy.ci.0,
            "heavier tails must percolate first: {light:?} vs {heavy:?}"
        );
    }

    #[test]
    fn epdim_obstruction_on_the_plane() {
        let z2 = ctx("zd:2");
        let report = epdim_sweep(
            &z2,
            0.5,
            &[1.0],
            &[2, 4],
            &sweep_cfg(12, 300),
            &SweepParams::default(),
        )
        .unwrap();
        let row = &report.frontier[0];
        assert_eq!(row.class, FrontierClass::ObstructedAboveOne, "{report:?}");
        assert!(report.verdicts.iter().any(|v| v.name == "base"));
    }

    #[test]
    fn epdim_degenerate_base_matches_ball_uniform() {
        let z2 = ctx("zd:2");
        let cfg = sweep_cfg(12, 400);
        let stretched =
            epdim_sweep(&z2, 0.999_999, &[1.0], &[2], &cfg, &SweepParams::default()).unwrap();
        let ball = percolativity_sweep(&z2, &[2], &cfg, &SweepParams::default()).unwrap();
        let a = &stretched.points[0];
        let b = &ball.points[0];
        // As the base approaches 1 the weights flatten to uniform on the
        // ball; the two estimates must agree within their intervals.
        assert!(
            a.ci.0 <= b.ci.1 && b.ci.0 <= a.ci.1,
            "expected CI overlap: {a:?} vs {b:?}"
        );
    }

    #[test]
    fn epdim_validates_parameters() {
        let z2 = ctx("zd:2");
        let cfg = sweep_cfg(8, 50);
        let p = SweepParams::default();
        assert!(matches!(
            epdim_sweep(&z2, 1.5, &[1.0], &[2], &cfg, &p),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            epdim_sweep(&z2, 0.5, &[1.5], &[2], &cfg, &p),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sweep_points_reproducible_from_recorded_seed() {
        let z2 = ctx("zd:2");
        let cfg = sweep_cfg(12, 200);
        let report = percolativity_sweep(&z2, &[1, 2], &cfg, &SweepParams::default()).unwrap();
        for (i, point) in report.points.iter().enumerate() {
            assert_eq!(point.seed, mix2(cfg.seed, i as u64));
            let mu = Measure::uniform_on_ball(&z2, point.params[0].1 as u32).unwrap();
            let rerun = lambda_c_estimate(
                &PercModel::from(mu),
                &PercConfig {
                    seed: point.seed,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert_eq!(
                rerun.lambda_hat.unwrap().to_bits(),
                point.lambda_hat.unwrap().to_bits()
            );
        }
    }

    #[test]
    fn sweep_csv_shape() {
        let z1 = ctx("zd:1");
        let report =
            percolativity_sweep(&z1, &[1], &sweep_cfg(16, 50), &SweepParams::default()).unwrap();
        let text = sweep_csv(&report).render();
        assert!(text.contains("group,family,params,L,trials,theta"));
        assert!(text.contains("zd:1,ball-uniform,n=1,16,50,"));
        assert!(text.contains(",true,cut-point certificate"));
        // JSON serialization carries the whole report.
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"family\":\"ball-uniform\""));
        assert!(json.contains("\"verdicts\""));
    }

    #[test]
    fn lb_certificate_examples() {
        // Line, s = 1, b = 2: |B(n)| = 2n+1 > 2n with membership equality.
        let z1 = ctx("zd:1");
        let cert = lb_certificate(&z1, 1.0, &[1, 2, 4, 8], Some(2.0), None).unwrap();
        assert!(cert.all_hold, "{cert:?}");
        assert_eq!(cert.b_exact.as_deref(), Some("2"));
        for row in &cert.rows {
            assert_eq!(row.ball_size, 2 * row.n as u64 + 1);
            assert!((row.b_min - 0.5).abs() < 1e-15);
        }

        // Plane, s = 2, default b = (|B(2)|-1)/(2*4) = 3/2.
        let z2 = ctx("zd:2");
        let cert = lb_certificate(&z2, 2.0, &[2, 4, 8], None, None).unwrap();
        assert!(cert.all_hold, "{cert:?}");
        assert_eq!(cert.b_exact.as_deref(), Some("3/2"));
        assert_eq!(cert.rows[1].ball_size, 41);

        // Plane, s = 3: balls are eventually too small.
        let cert = lb_certificate(&z2, 3.0, &[2, 4, 8], None, None).unwrap();
        assert!(!cert.all_hold);
        assert!(cert.rows[0].size_ok && cert.rows[0].membership_ok);
        assert!(!cert.rows[1].membership_ok);
        assert!(!cert.rows[2].size_ok);

        // Non-integer exponent takes the float path.
        let cert = lb_certificate(&z2, 1.5, &[2, 4, 8], None, None).unwrap();
        assert!(cert.b_exact.is_none());
        assert!(cert.all_hold);

        // The certificate can carry a percolativity verdict along.
        let cert = lb_certificate(
            &z2,
            2.0,
            &[2, 4],
            None,
            Some("consistent with percolative".into()),
        )
        .unwrap();
        assert_eq!(
            cert.percolativity.as_deref(),
            Some("consistent with percolative")
        );
    }
}
