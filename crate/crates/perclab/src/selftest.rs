//! Frozen acceptance experiments, each checked against an oracle computed by
//! an independent code path (closed forms, direct lattice samplers, integer
//! walk counts). `run_all` executes the twelve criteria in order; the CLI
//! `selftest` subcommand and the acceptance test target both drive this
//! module, so the pass/fail lines printed there are the same in both places.

use crate::dimension::{self, SweepParams};
use crate::error::{Error, Result};
use crate::groups::GroupContext;
use crate::measures::Measure;
use crate::percolation::{
    lambda_c_estimate, reach_target_probability, tree_oracle_lambda_c, LambdaCEstimate,
    PairWeights, PercConfig, PercModel,
};
use crate::report::{csv_f64, Table};
use crate::saw;
use crate::spectral::{self, ConvMode};
use crate::stats::{wilson, Z99};
use num::BigRational;
use std::time::Instant;

pub const CRITERIA_COUNT: u32 = 12;

/// Result of one acceptance criterion, with the one-line summary both the
/// CLI and the test target print.
#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub index: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed_secs: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {} {}: {} [{:.1}s]",
            self.index,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed_secs,
        )
    }
}

/// Lazily shared expensive estimates (the two calibrated thresholds), so the
/// criteria that reuse them do not pay twice when run in one session.
#[derive(Default)]
pub struct Session {
    tree_run: Option<(LambdaCEstimate, String)>,
    plane_run: Option<LambdaCEstimate>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    fn tree_estimate(&mut self) -> Result<&(LambdaCEstimate, String)> {
        if self.tree_run.is_none() {
            self.tree_run = Some(tree_threshold_run()?);
        }
        Ok(self.tree_run.as_ref().unwrap())
    }

    fn plane_estimate(&mut self) -> Result<&LambdaCEstimate> {
        if self.plane_run.is_none() {
            self.plane_run = Some(plane_threshold_run()?.0);
        }
        Ok(self.plane_run.as_ref().unwrap())
    }
}

/// Independent implementations used only to check the production code.
pub mod oracle {
    use crate::rng::pair_uniform;
    use std::collections::{HashMap, HashSet, VecDeque};

    /// Survival to depth `l` of the cluster of the root in the 4-regular
    /// tree with every edge open independently with probability
    /// 1 - exp(-lambda/4): the root sees Binom(4, q) open edges and every
    /// deeper vertex Binom(3, q), so survival satisfies the exact recursion
    /// u_{j+1} = 1 - (1 - q u_j)^3 with the root factor applied last.
    pub fn tree_survival_to_depth(lambda: f64, l: u32) -> f64 {
        assert!(l >= 1);
        let q = 1.0 - (-lambda / 4.0).exp();
        let mut u = 1.0;
        for _ in 0..(l - 1) {
            let miss = 1.0 - q * u;
            u = 1.0 - miss * miss * miss;
        }
        let miss = 1.0 - q * u;
        1.0 - miss * miss * miss * miss
    }

    fn site_code(x: i32, y: i32, offset: i32) -> u64 {
        debug_assert!(x + offset >= 0 && y + offset >= 0);
        (((x + offset) as u64) << 16) | ((y + offset) as u64)
    }

    fn bond_key(a: u64, b: u64) -> u64 {
        if a <= b {
            (a << 32) | b
        } else {
            (b << 32) | a
        }
    }

    const STEPS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

    /// Fraction of trials in which the open cluster of the origin of the
    /// square-lattice bond model reaches l1 distance `l`. Raw lattice BFS:
    /// no group machinery involved.
    pub fn grid_one_arm(p: f64, l: i32, trials: u64, seed: u64) -> f64 {
        let mut hits = 0u64;
        for trial in 0..trials {
            let mut seen: HashSet<(i32, i32)> = HashSet::new();
            let mut queue = VecDeque::new();
            seen.insert((0, 0));
            queue.push_back((0, 0));
            'bfs: while let Some((x, y)) = queue.pop_front() {
                for (dx, dy) in STEPS {
                    let (nx, ny) = (x + dx, y + dy);
                    let key = bond_key(site_code(x, y, l + 1), site_code(nx, ny, l + 1));
                    if pair_uniform(seed, trial, key) < p && seen.insert((nx, ny)) {
                        if nx.abs() + ny.abs() >= l {
                            hits += 1;
                            break 'bfs;
                        }
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        hits as f64 / trials as f64
    }

    /// Fraction of trials with an open left-to-right crossing of the
    /// n-by-n box (bond model, BFS from the whole left column).
    pub fn grid_crossing(p: f64, n: i32, trials: u64, seed: u64) -> f64 {
        let mut hits = 0u64;
        for trial in 0..trials {
            let mut seen: HashSet<(i32, i32)> = HashSet::new();
            let mut queue = VecDeque::new();
            for y in 0..n {
                seen.insert((0, y));
                queue.push_back((0, y));
            }
            'bfs: while let Some((x, y)) = queue.pop_front() {
                for (dx, dy) in STEPS {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || nx >= n || ny < 0 || ny >= n {
                        continue;
                    }
                    let key = bond_key(site_code(x, y, 0), site_code(nx, ny, 0));
                    if pair_uniform(seed, trial, key) < p && seen.insert((nx, ny)) {
                        if nx == n - 1 {
                            hits += 1;
                            break 'bfs;
                        }
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        hits as f64 / trials as f64
    }

    /// Largest root of z = 1 - exp(-c z), the limiting giant-component
    /// fraction of the sparse random graph with mean degree c > 1.
    pub fn giant_fixed_point(c: f64) -> f64 {
        assert!(c > 1.0);
        let mut z = 0.5;
        for _ in 0..200 {
            z = 1.0 - (-c * z).exp();
        }
        z
    }

    /// Exact number of length-n closed walks at the identity of F_2 with
    /// steps the 4 generators, by integer element-wise convolution. Counts
    /// stay below 4^n, so u64 arithmetic is exact through n = 12.
    pub fn f2_walk_counts_element(ctx: &crate::groups::GroupContext, n_max: u32) -> Vec<u64> {
        assert!(n_max <= 12, "4^n must fit comfortably in u64 bookkeeping");
        let gens = ctx.generators().expect("free group has generators");
        let e = ctx.identity();
        let mut counts: HashMap<crate::groups::GroupElement, u64> = HashMap::new();
        counts.insert(e.clone(), 1);
        let mut out = vec![1u64];
        for _ in 1..=n_max {
            let mut next: HashMap<crate::groups::GroupElement, u64> = HashMap::new();
            for (g, c) in &counts {
                for s in &gens {
                    *next.entry(ctx.mul(g, s)).or_insert(0) += c;
                }
            }
            counts = next;
            out.push(counts.get(&e).copied().unwrap_or(0));
        }
        out
    }

    /// The same closed-walk counts from the distance-from-identity chain:
    /// a vertex at distance d > 0 has 3 steps outward and 1 inward, the
    /// identity has 4 outward. Pure integer recursion, no group elements.
    pub fn f2_walk_counts_radial(n_max: u32) -> Vec<u64> {
        let n = n_max as usize;
        let mut w = vec![0u64; n + 2];
        w[0] = 1;
        let mut out = vec![1u64];
        for _ in 1..=n_max {
            let mut next = vec![0u64; n + 2];
            next[1] += 4 * w[0];
            for d in 1..=n {
                if w[d] == 0 {
                    continue;
                }
                next[d + 1] += 3 * w[d];
                next[d - 1] += w[d];
            }
            w = next;
            out.push(w[0]);
        }
        out
    }
}

fn ctx(spec: &str) -> Result<GroupContext> {
    GroupContext::parse(spec)
}

fn uniform_gens(ctx: &GroupContext) -> Result<Measure> {
    Measure::uniform_on_ball(ctx, 1)
}

/// Criterion 1 core: tree threshold estimate with the survival threshold
/// theta calibrated from the exact branching recursion at the known
/// critical rate. Returns the estimate and its rendered table.
fn tree_threshold_run() -> Result<(LambdaCEstimate, String)> {
    let g = ctx("free:2")?;
    let mu = uniform_gens(&g)?;
    let lambda_star = tree_oracle_lambda_c(2)?;
    let theta = oracle::tree_survival_to_depth(lambda_star, 40);
    let cfg = PercConfig {
        escape_radius: 40,
        trials: 1250,
        theta,
        seed: 101,
        ..PercConfig::default()
    };
    let model = PercModel::GroupMeasure(mu);
    let est = lambda_c_estimate(&model, &cfg)?;
    let rendered = est.to_table(&model, &cfg).render();
    Ok((est, rendered))
}

fn criterion_1(session: &mut Session) -> Result<(bool, String)> {
    let start = Instant::now();
    let lambda_star = tree_oracle_lambda_c(2)?;
    // Timing condition is single-threaded by construction.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
    let (est, rendered) = pool.install(tree_threshold_run)?;
    let elapsed = start.elapsed().as_secs_f64();
    let lambda_hat = est
        .lambda_hat
        .ok_or_else(|| Error::usage("tree estimate unexpectedly capped"))?;
    let rel = (lambda_hat - lambda_star).abs() / lambda_star;
    let total_trials = est.probes.len() as u64 * 1250;
    let pass = rel <= 0.05 && total_trials <= 20_000 && elapsed < 60.0;
    session.tree_run = Some((est, rendered));
    Ok((
        pass,
        format!(
            "lambda_hat {lambda_hat:.4} vs oracle {lambda_star:.4} (rel err {:.2}%), \
             {total_trials} trials total",
            rel * 100.0
        ),
    ))
}

/// Criterion 2 core: plane threshold estimate at L = 64 with theta set to
/// the one-arm probability measured by the raw lattice sampler at the
/// self-dual point.
fn plane_threshold_run() -> Result<(LambdaCEstimate, f64)> {
    let g = ctx("zd:2")?;
    let mu = uniform_gens(&g)?;
    let theta = oracle::grid_one_arm(0.5, 64, 8000, 202);
    let cfg = PercConfig {
        escape_radius: 64,
        trials: 2000,
        theta,
        seed: 205,
        ..PercConfig::default()
    };
    let est = lambda_c_estimate(&PercModel::GroupMeasure(mu), &cfg)?;
    Ok((est, theta))
}

fn criterion_2(session: &mut Session) -> Result<(bool, String)> {
    let start = Instant::now();
    let lambda_star = 4.0 * 2.0f64.ln();
    // The edge probability 1 - exp(-lambda/4) is monotone in lambda and the
    // lattice sampler works in p directly, so the crossing sanity checks
    // bracket the self-dual point from both sides.
    let cross_low = oracle::grid_crossing(0.45, 128, 300, 203);
    let cross_high = oracle::grid_crossing(0.55, 128, 300, 204);
    let (est, theta) = plane_threshold_run()?;
    let elapsed = start.elapsed().as_secs_f64();
    let lambda_hat = est
        .lambda_hat
        .ok_or_else(|| Error::usage("plane estimate unexpectedly capped"))?;
    let rel = (lambda_hat - lambda_star).abs() / lambda_star;
    let pass = rel <= 0.05 && cross_low < 0.25 && cross_high > 0.75 && elapsed < 600.0;
    session.plane_run = Some(est);
    Ok((
        pass,
        format!(
            "lambda_hat {lambda_hat:.4} vs 4 ln 2 = {lambda_star:.4} (rel err {:.2}%), \
             theta {theta:.4}, crossings {cross_low:.3}/{cross_high:.3}",
            rel * 100.0
        ),
    ))
}

fn criterion_3(_session: &mut Session) -> Result<(bool, String)> {
    // Representative measures across the group suite; the rate floor must
    // hold for every uncapped estimate and is vacuous for capped ones.
    let suite: [(&str, &str, u32); 9] = [
        ("free:2", "uniform-ball:1", 20),
        ("zd:2", "uniform-ball:1", 16),
        ("zd:2", "uniform-ball:2", 16),
        ("zd:2", "poly:1.5,4", 16),
        ("zd:2", "sexp:0.5,1,4", 16),
        ("zd:1", "uniform-ball:2", 16),
        ("heis", "uniform-ball:1", 12),
        ("lamp", "uniform-ball:1", 12),
        ("free:3", "uniform-ball:1", 16),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, (gspec, mspec, window)) in suite.iter().enumerate() {
        let g = ctx(gspec)?;
        let mu = Measure::parse_spec(&g, mspec)?;
        let cfg = PercConfig {
            escape_radius: *window,
            trials: 500,
            seed: 301 + i as u64,
            ..PercConfig::default()
        };
        let est = lambda_c_estimate(&PercModel::GroupMeasure(mu), &cfg)?;
        match est.lambda_hat {
            Some(l) => {
                if l < 0.98 {
                    pass = false;
                }
                parts.push(format!("{gspec}/{mspec}={l:.3}"));
            }
            None => parts.push(format!("{gspec}/{mspec}=capped")),
        }
    }
    Ok((pass, parts.join(", ")))
}

fn criterion_4(_session: &mut Session) -> Result<(bool, String)> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for gspec in ["zd:1", "zd:2", "free:2", "heis"] {
        let g = ctx(gspec)?;
        let report = saw::check_numu(&g, 6)?;
        if !report.all_pass {
            pass = false;
        }
        parts.push(format!(
            "{gspec}:{}",
            if report.all_pass { "ok" } else { "MISMATCH" }
        ));
    }
    // The plane's length-4 count is pinned to the known value, from the
    // integer enumeration side alone.
    let plane_counts = saw::saw_count(&ctx("zd:2")?, 4)?;
    if plane_counts[4] != 100 {
        pass = false;
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        pass = false;
    }
    parts.push(format!("c_4(plane)={}", plane_counts[4]));
    Ok((pass, parts.join(", ")))
}

fn criterion_5(session: &mut Session) -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut pass = true;
    let tree_hat = session.tree_estimate()?.0.lambda_hat;
    let plane_hat = session.plane_estimate()?.lambda_hat;
    for (gspec, hat) in [("free:2", tree_hat), ("zd:2", plane_hat)] {
        let g = ctx(gspec)?;
        let mu = uniform_gens(&g)?;
        let table = saw::sigma_table(&mu, 8, saw::DEFAULT_WALK_CAP, saw::ExactMode::Auto)?;
        let sigma8 = table.sigma(8).unwrap().to_f64();
        let bound = 1.0 / sigma8.powf(1.0 / 8.0);
        let hat = hat.ok_or_else(|| Error::usage("estimate capped"))?;
        if hat < bound * 0.98 {
            pass = false;
        }
        parts.push(format!(
            "{gspec}: lambda_hat {hat:.3} >= bound {bound:.3} - 2%"
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_6(_session: &mut Session) -> Result<(bool, String)> {
    // Unit edge probability 0.9 means lambda = ln 10 on a unit graph. On
    // both unique-path graphs the e <-> target probability is exactly
    // 0.9^20: all 20 edges of the only path must be open.
    let lambda = 10.0f64.ln();
    let expect = 0.9f64.powi(20);
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, (gspec, target)) in [("canopy:60", "20.1"), ("zd:1", "20")].iter().enumerate() {
        let g = ctx(gspec)?;
        let t = g.parse_element(target)?;
        let cfg = PercConfig {
            lambda,
            escape_radius: 32,
            trials: 10_000,
            seed: 601 + i as u64,
            ..PercConfig::default()
        };
        let est = reach_target_probability(&PercModel::UnitGraph(g), &cfg, &t)?;
        let (lo, hi) = wilson(est.escapes, est.trials, Z99);
        if expect < lo || expect > hi {
            pass = false;
        }
        parts.push(format!(
            "{gspec}: p_hat {:.4} (0.9^20 = {expect:.4})",
            est.p_hat
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_7(_session: &mut Session) -> Result<(bool, String)> {
    let g = ctx("zd:1")?;
    let mu = uniform_gens(&g)?;
    let cfg = PercConfig {
        trials: 300,
        seed: 701,
        ..PercConfig::default()
    };
    let est = lambda_c_estimate(&PercModel::GroupMeasure(mu), &cfg)?;
    let reason = est
        .capped_reason
        .as_ref()
        .map(|r| format!("{r:?}"))
        .unwrap_or_else(|| "none".into());
    Ok((
        est.capped && est.lambda_hat.is_none(),
        format!(
            "capped={} reason={reason} lambda_max={}",
            est.capped, cfg.lambda_max
        ),
    ))
}

/// Criterion 8 core: the ball-uniform family on the plane at radii 1, 2, 4.
fn ball_family_run() -> Result<(dimension::SweepReport, String)> {
    let g = ctx("zd:2")?;
    let cfg = PercConfig {
        escape_radius: 16,
        trials: 2000,
        seed: 801,
        ci_refine: 6,
        ..PercConfig::default()
    };
    let report = dimension::percolativity_sweep(&g, &[1, 2, 4], &cfg, &SweepParams::default())?;
    let rendered = dimension::sweep_csv(&report).render();
    Ok((report, rendered))
}

fn criterion_8(_session: &mut Session) -> Result<(bool, String)> {
    let (report, _) = ball_family_run()?;
    let hats: Vec<f64> = report
        .points
        .iter()
        .map(|p| {
            p.lambda_hat
                .ok_or_else(|| Error::usage("capped point in ball family"))
        })
        .collect::<Result<_>>()?;
    let strict = hats.windows(2).all(|w| w[0] > w[1]);
    let separated = dimension::ci_separated_decreasing(&report.points);
    let detail = format!(
        "lambda_hat(n=1,2,4) = {:.3}, {:.3}, {:.3}; CI-separated: {separated}",
        hats[0], hats[1], hats[2]
    );
    Ok((strict && separated, detail))
}

fn criterion_9(_session: &mut Session) -> Result<(bool, String)> {
    let g = ctx("zd:2")?;
    let radii = [2u32, 4, 8, 16];
    // Exact heaviest-atom lower bound: in the s = 3 family on the plane the
    // four unit steps keep mass >= 1/8 at every truncation radius, checked
    // in rational arithmetic.
    let eighth = BigRational::new(1.into(), 8.into());
    let mut min_delta: Option<BigRational> = None;
    for r in radii {
        let mu = Measure::poly_decay(&g, 3.0, r)?;
        let atoms = mu
            .rational_atoms()
            .ok_or_else(|| Error::usage("integer-exponent family must have rational atoms"))?;
        let delta = atoms.iter().map(|(_, m)| m.clone()).max().unwrap();
        min_delta = Some(match min_delta {
            Some(d) if d <= delta => d,
            _ => delta,
        });
    }
    let min_delta = min_delta.unwrap();
    let delta_ok = min_delta >= eighth;

    let cfg3 = PercConfig {
        escape_radius: 20,
        trials: 400,
        seed: 901,
        ..PercConfig::default()
    };
    let sweep3 = dimension::pdim_sweep(&g, &[3.0], &radii, &cfg3, &SweepParams::default())?;
    let above = sweep3
        .points
        .iter()
        .all(|p| !p.capped && p.error.is_none() && p.ci.0 > 1.1);

    let cfg15 = PercConfig {
        escape_radius: 12,
        trials: 1500,
        seed: 902,
        ..PercConfig::default()
    };
    let sweep15 = dimension::pdim_sweep(&g, &[1.5], &[2, 4, 8], &cfg15, &SweepParams::default())?;
    let decreasing = dimension::ci_separated_decreasing(&sweep15.points);

    let ci_lows: Vec<String> = sweep3
        .points
        .iter()
        .map(|p| format!("{:.3}", p.ci.0))
        .collect();
    Ok((
        delta_ok && above && decreasing,
        format!(
            "min delta {} >= 1/8: {delta_ok}; s=3 ci_low per R: [{}] all > 1.1: {above}; \
             s=1.5 CI-separated decrease: {decreasing}",
            min_delta,
            ci_lows.join(", ")
        ),
    ))
}

fn criterion_10(_session: &mut Session) -> Result<(bool, String)> {
    let f2 = ctx("free:2")?;
    let target = 3.0f64.sqrt() / 2.0;
    let table =
        spectral::return_probabilities_with(&uniform_gens(&f2)?, 200, ConvMode::RadialChain)?;
    let rho = spectral::rho_estimate(&table)?;
    let rel = (rho.rho_hat - target).abs() / target;
    let rho_ok = rel <= 0.03;

    // Kesten's bound 1/|S| <= rho^2 on three groups.
    let mut kesten_ok = true;
    let mut kesten_parts = Vec::new();
    for (gspec, n_max) in [("free:2", 200u32), ("free:3", 200), ("zd:1", 200)] {
        let g = ctx(gspec)?;
        let mu = uniform_gens(&g)?;
        let t = spectral::return_probabilities(&mu, n_max)?;
        let r = spectral::rho_estimate(&t)?;
        let verdict = spectral::kesten_inequality_check(mu.support_size(), r.rho_hat, 1e-9);
        if !verdict.pass {
            kesten_ok = false;
        }
        kesten_parts.push(format!("{gspec} {:.3}", r.rho_hat));
    }

    // Exact cross-validation: integer closed-walk counts from the two
    // independent pipelines must agree exactly through n = 12, and the
    // production f64 tables must match the exact ratios.
    let elem_counts = oracle::f2_walk_counts_element(&f2, 12);
    let radial_counts = oracle::f2_walk_counts_radial(12);
    let counts_ok = elem_counts == radial_counts;
    let mu = uniform_gens(&f2)?;
    let prod_radial = spectral::return_probabilities_with(&mu, 12, ConvMode::RadialChain)?;
    let prod_elem = spectral::return_probabilities_with(&mu, 12, ConvMode::ElementConvolution)?;
    let mut prod_ok = true;
    for i in 0..=6u32 {
        let n = 2 * i;
        let exact = radial_counts[n as usize] as f64 / 4.0f64.powi(n as i32);
        let pr = prod_radial.p(n).unwrap();
        let pe = prod_elem.p(n).unwrap();
        if (pr - exact).abs() > 1e-15 + 1e-13 * exact || (pe - exact).abs() > 1e-12 {
            prod_ok = false;
        }
    }

    Ok((
        rho_ok && kesten_ok && counts_ok && prod_ok,
        format!(
            "rho_hat {:.4} vs sqrt(3)/2 = {target:.4} (rel err {:.2}%); kesten: {}; \
             integer counts n<=12 equal: {counts_ok}; tables match counts: {prod_ok}",
            rho.rho_hat,
            rel * 100.0,
            kesten_parts.join(", ")
        ),
    ))
}

/// Criterion 11 core: giant-component fractions on 1000 vertices at rate 2.
fn giant_run() -> (f64, String) {
    let weights = PairWeights::CompleteUniform {
        n: 1000,
        weight: 1.0 / 1000.0,
    };
    let (mean, runs) = crate::percolation::giant_component_mean(&weights, 2.0, 1101, 20);
    let mut t = Table::new(&["sample", "largest_fraction"]);
    t.set_config("n", 1000);
    t.set_config("lambda", 2);
    t.set_config("seed", 1101);
    t.set_config("mean", csv_f64(mean));
    for (i, r) in runs.iter().enumerate() {
        t.push_row(vec![i.to_string(), csv_f64(r.largest_fraction)]);
    }
    (mean, t.render())
}

fn criterion_11(_session: &mut Session) -> Result<(bool, String)> {
    let zeta = oracle::giant_fixed_point(2.0);
    let (mean, _) = giant_run();
    let pass = (mean - zeta).abs() <= 0.05;
    Ok((
        pass,
        format!("mean largest fraction {mean:.4} vs fixed point {zeta:.4}"),
    ))
}

fn criterion_12(_session: &mut Session) -> Result<(bool, String)> {
    // The three randomized experiments rerun under explicit worker pools;
    // rendered outputs must be byte-identical across 1, 4, and 8 workers.
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, run) in [
        (
            "tree-threshold",
            (|| Ok(tree_threshold_run()?.1)) as fn() -> Result<String>,
        ),
        ("ball-family-order", || Ok(ball_family_run()?.1)),
        ("giant-component", || Ok(giant_run().1)),
    ] {
        let mut rendered = Vec::new();
        for workers in [1usize, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
            rendered.push(pool.install(run)?);
        }
        let same = rendered[0] == rendered[1] && rendered[1] == rendered[2];
        if !same {
            pass = false;
        }
        parts.push(format!(
            "{name}: {}",
            if same { "identical" } else { "DIVERGED" }
        ));
    }
    Ok((pass, parts.join("; ")))
}

const NAMES: [&str; 12] = [
    "tree threshold vs branching oracle",
    "plane threshold vs self-dual point",
    "rate floor over the measure suite",
    "walk identity sigma_n |S|^n = c_n",
    "rate vs walk lower bound",
    "unique-path reach probability",
    "line caps at lambda_max",
    "ball family strictly ordered",
    "polynomial family frontier",
    "spectral cross-checks",
    "giant component fraction",
    "worker-count determinism",
];

pub fn run_criterion(index: u32, session: &mut Session) -> CriterionOutcome {
    assert!(
        (1..=CRITERIA_COUNT).contains(&index),
        "criterion index out of range"
    );
    let start = Instant::now();
    let body: fn(&mut Session) -> Result<(bool, String)> = match index {
        1 => criterion_1,
        2 => criterion_2,
        3 => criterion_3,
        4 => criterion_4,
        5 => criterion_5,
        6 => criterion_6,
        7 => criterion_7,
        8 => criterion_8,
        9 => criterion_9,
        10 => criterion_10,
        11 => criterion_11,
        _ => criterion_12,
    };
    let (pass, detail) = match body(session) {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome {
        index,
        name: NAMES[(index - 1) as usize],
        pass,
        detail,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

/// Run every criterion in order; returns the outcomes and overall verdict.
pub fn run_all() -> (Vec<CriterionOutcome>, bool) {
    let mut session = Session::new();
    let outcomes: Vec<CriterionOutcome> = (1..=CRITERIA_COUNT)
        .map(|i| run_criterion(i, &mut session))
        .collect();
    let all_pass = outcomes.iter().all(|o| o.pass);
    (outcomes, all_pass)
}
