//! Random-walk return probabilities and the diagnostics built on them:
//! spectral-radius estimates, the generator-count inequality 1/|S| <= rho^2,
//! and isoperimetric ratios over ball families.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::groups::{GroupContext, GroupElement};
use crate::measures::Measure;
use crate::report::{csv_f64, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvMode {
    /// Iterated convolution of the measure over the group itself.
    ElementConvolution,
    /// Distance birth-death chain — exact for free groups under the uniform
    /// generator measure (step out with probability (2k-1)/2k, back with
    /// 1/2k away from the root).
    RadialChain,
}

impl ConvMode {
    pub fn label(self) -> &'static str {
        match self {
            ConvMode::ElementConvolution => "element-convolution",
            ConvMode::RadialChain => "radial-chain",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnTable {
    pub group: String,
    pub measure: String,
    pub n_max: u32,
    /// p_n at even n; index i holds p_{2i}. Odd-step returns vanish on
    /// bipartite examples, so only even steps are tabulated.
    pub even_p: Vec<f64>,
    pub mode: ConvMode,
}

impl ReturnTable {
    /// p_n for even n <= n_max.
    pub fn p(&self, n: u32) -> Option<f64> {
        if n % 2 != 0 {
            return None;
        }
        self.even_p.get((n / 2) as usize).copied()
    }

    pub fn largest_even_n(&self) -> u32 {
        (self.even_p.len() as u32 - 1) * 2
    }
}

/// True when the measure is the uniform distribution on the generators of a
/// free group — the case the radial chain computes exactly.
fn radial_mode_applies(mu: &Measure) -> bool {
    let Some(k) = mu.ctx().free_rank() else {
        return false;
    };
    let m = 2 * k;
    if mu.atoms().len() != m {
        return false;
    }
    let even = 1.0 / m as f64;
    mu.atoms()
        .iter()
        .all(|a| a.word_length == 1 && (a.mass - even).abs() < 1e-15)
}

/// Return probabilities with automatic mode selection.
pub fn return_probabilities(mu: &Measure, n_max: u32) -> Result<ReturnTable> {
    let mode = if radial_mode_applies(mu) {
        ConvMode::RadialChain
    } else {
        ConvMode::ElementConvolution
    };
    return_probabilities_with(mu, n_max, mode)
}

/// Return probabilities in an explicit mode (the radial chain demands a
/// uniform generator measure on a free group).
pub fn return_probabilities_with(mu: &Measure, n_max: u32, mode: ConvMode) -> Result<ReturnTable> {
    let even_p = match mode {
        ConvMode::RadialChain => {
            if !radial_mode_applies(mu) {
                return Err(Error::usage(format!(
                    "{}: radial chain requires the uniform generator measure on a free group",
                    mu.descriptor()
                )));
            }
            let k = mu.ctx().free_rank().unwrap();
            radial_chain(k, n_max)
        }
        ConvMode::ElementConvolution => element_convolution(mu, n_max)?,
    };
    Ok(ReturnTable {
        group: mu.ctx().spec().to_string(),
        measure: mu.descriptor().to_string(),
        n_max,
        even_p,
        mode,
    })
}

fn radial_chain(k: usize, n_max: u32) -> Vec<f64> {
    let out = (2 * k - 1) as f64 / (2 * k) as f64;
    let back = 1.0 / (2 * k) as f64;
    let steps = n_max as usize;
    // q[d] = probability of being at distance d after t steps.
    let mut q = vec![0.0f64; steps + 2];
    q[0] = 1.0;
    let mut even_p = vec![1.0f64];
    for t in 1..=steps {
        let mut next = vec![0.0f64; steps + 2];
        for d in 0..=t {
            let mass = q[d];
            if mass == 0.0 {
                continue;
            }
            if d == 0 {
                next[1] += mass;
            } else {
                next[d + 1] += mass * out;
                next[d - 1] += mass * back;
            }
        }
        q = next;
        if t % 2 == 0 {
            even_p.push(q[0]);
        }
    }
    even_p
}

/// Sorted-support convolution step. Splitting the support into fixed-size
/// chunks keeps the floating-point merge order independent of worker count.
const PAR_CHUNK: usize = 4096;

fn convolve_once(
    ctx: &GroupContext,
    cur: &[(GroupElement, f64)],
    atoms: &[(GroupElement, f64)],
) -> Vec<(GroupElement, f64)> {
    let merge_chunk = |chunk: &[(GroupElement, f64)]| {
        let mut local: HashMap<GroupElement, f64> = HashMap::new();
        for (g, p) in chunk {
            for (s, mass) in atoms {
                *local.entry(ctx.mul(g, s)).or_insert(0.0) += p * mass;
            }
        }
        local
    };
    let mut total: HashMap<GroupElement, f64> = HashMap::with_capacity(cur.len() * 2);
    if cur.len() >= 2 * PAR_CHUNK {
        let locals: Vec<HashMap<GroupElement, f64>> =
            cur.par_chunks(PAR_CHUNK).map(merge_chunk).collect();
        // Chunk boundaries are fixed, so this merge order is deterministic.
        for local in locals {
            let mut entries: Vec<(GroupElement, f64)> = local.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (g, p) in entries {
                *total.entry(g).or_insert(0.0) += p;
            }
        }
    } else {
        total = merge_chunk(cur);
    }
    let mut next: Vec<(GroupElement, f64)> = total.into_iter().collect();
    next.sort_by(|a, b| a.0.cmp(&b.0));
    next
}

fn element_convolution(mu: &Measure, n_max: u32) -> Result<Vec<f64>> {
    let ctx = mu.ctx();
    let cap = ctx.element_cap();
    let atoms: Vec<(GroupElement, f64)> = mu
        .atoms()
        .iter()
        .map(|a| (a.element.clone(), a.mass))
        .collect();
    let e = ctx.identity();
    let mut cur: Vec<(GroupElement, f64)> = vec![(e.clone(), 1.0)];
    let mut even_p = vec![1.0f64];
    let mut support_sizes: Vec<u64> = vec![1];
    for t in 1..=n_max {
        let next = convolve_once(ctx, &cur, &atoms);
        if next.len() > cap {
            return Err(Error::CapExceeded {
                cap,
                partial_spheres: support_sizes,
            });
        }
        support_sizes.push(next.len() as u64);
        cur = next;
        if t % 2 == 0 {
            let p = cur
                .binary_search_by(|probe| probe.0.cmp(&e))
                .map(|i| cur[i].1)
                .unwrap_or(0.0);
            even_p.push(p);
        }
    }
    Ok(even_p)
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoEstimate {
    /// sqrt(p_{2n+2} / p_{2n}) at the largest tabulated step — the ratio
    /// estimator, whose finite-n bias decays like 1/n.
    pub rho_hat: f64,
    /// The step 2n+2 the ratio was read at.
    pub at_n: u32,
    /// Raw root sequence (2n, p_{2n}^(1/2n)); non-decreasing toward the
    /// spectral radius by supermultiplicativity of even returns.
    pub roots: Vec<(u32, f64)>,
}

pub fn rho_estimate(table: &ReturnTable) -> Result<RhoEstimate> {
    if table.largest_even_n() < 20 {
        return Err(Error::usage(
            "rho estimate needs return probabilities up to n >= 20",
        ));
    }
    let m = table.even_p.len();
    let rho_hat = (table.even_p[m - 1] / table.even_p[m - 2]).sqrt();
    let mut roots = Vec::with_capacity(m - 1);
    for (i, p) in table.even_p.iter().enumerate().skip(1) {
        let n = 2 * i as u32;
        roots.push((n, p.powf(1.0 / n as f64)));
    }
    Ok(RhoEstimate {
        rho_hat,
        at_n: table.largest_even_n(),
        roots,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct KestenVerdict {
    /// 1/|S|.
    pub lhs: f64,
    /// rho_hat^2.
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The generating-set inequality 1/|S| <= rho^2 (+tol for the estimator).
pub fn kesten_inequality_check(s_size: usize, rho_hat: f64, tolerance: f64) -> KestenVerdict {
    let lhs = 1.0 / s_size as f64;
    let rhs = rho_hat * rho_hat;
    KestenVerdict {
        lhs,
        rhs,
        tolerance,
        pass: lhs <= rhs + tolerance,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheegerRow {
    pub radius: u32,
    pub set_size: u64,
    /// Edges with exactly one endpoint in the ball.
    pub boundary_edges: u64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheegerReport {
    pub group: String,
    pub rows: Vec<CheegerRow>,
    /// Minimum boundary ratio over the family — an upper bound on the
    /// isoperimetric constant.
    pub iota_hat: f64,
    pub degree: u32,
    /// 1/(d * iota_hat): logged diagnostic only, never asserted — with the
    /// unnormalized iota it is already false on the 4-regular tree.
    pub bs_raw: f64,
    /// 1/(d * (iota_hat/d)) = 1/iota_hat: the degree-normalized variant.
    pub bs_degree_normalized: f64,
}

/// Boundary ratios |edge boundary(B(r))| / |B(r)| over a family of balls.
/// Radius 0 gives the singleton at the root, whose ratio is the degree.
pub fn cheeger_report(ctx: &GroupContext, radii: &[u32]) -> Result<CheegerReport> {
    if radii.is_empty() {
        return Err(Error::usage("cheeger report needs at least one radius"));
    }
    let mut rows = Vec::with_capacity(radii.len());
    let mut iota_hat = f64::INFINITY;
    for &r in radii {
        let ball = ctx.ball(r)?;
        let set: std::collections::HashSet<&GroupElement> = ball.iter_elements().collect();
        let mut boundary = 0u64;
        for g in ball.iter_elements() {
            for w in ctx.neighbors(g) {
                if !set.contains(&w) {
                    boundary += 1;
                }
            }
        }
        let size = set.len() as u64;
        let ratio = boundary as f64 / size as f64;
        iota_hat = iota_hat.min(ratio);
        rows.push(CheegerRow {
            radius: r,
            set_size: size,
            boundary_edges: boundary,
            ratio,
        });
    }
    let degree = ctx.max_degree() as u32;
    let d = degree as f64;
    Ok(CheegerReport {
        group: ctx.spec().to_string(),
        rows,
        iota_hat,
        degree,
        bs_raw: 1.0 / (d * iota_hat),
        bs_degree_normalized: 1.0 / iota_hat,
    })
}

/// CSV rows `group,measure,n,p_n,mode` over the tabulated even steps.
pub fn return_csv(table: &ReturnTable) -> Table {
    let mut t = Table::new(&["group", "measure", "n", "p_n", "mode"]);
    t.set_config("group", &table.group);
    t.set_config("measure", &table.measure);
    t.set_config("n_max", table.n_max);
    t.set_config("mode", table.mode.label());
    for (i, p) in table.even_p.iter().enumerate() {
        t.push_row(vec![
            table.group.clone(),
            table.measure.clone(),
            (2 * i).to_string(),
            csv_f64(*p),
            table.mode.label().to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Kahan;

    fn ctx(spec: &str) -> GroupContext {
        GroupContext::parse(spec).unwrap()
    }

    fn uniform_gens(c: &GroupContext) -> Measure {
        Measure::uniform_on_set(c, &c.generators().unwrap(), "uniform-gens".into()).unwrap()
    }

    /// Brute-force oracle: enumerate every length-n word over the support and
    /// add up the weights of those whose product is the identity.
    fn word_return_prob(mu: &Measure, n: u32) -> f64 {
        fn rec(
            ctx: &GroupContext,
            atoms: &[(GroupElement, f64)],
            v: &GroupElement,
            depth: u32,
            n: u32,
            weight: f64,
            e: &GroupElement,
            acc: &mut Kahan,
        ) {
            if depth == n {
                if v == e {
                    acc.add(weight);
                }
                return;
            }
            for (s, mass) in atoms {
                rec(
                    ctx,
                    atoms,
                    &ctx.mul(v, s),
                    depth + 1,
                    n,
                    weight * mass,
                    e,
                    acc,
                );
            }
        }
        let ctx = mu.ctx();
        let atoms: Vec<(GroupElement, f64)> = mu
            .atoms()
            .iter()
            .map(|a| (a.element.clone(), a.mass))
            .collect();
        let e = ctx.identity();
        let mut acc = Kahan::new();
        rec(ctx, &atoms, &e, 0, n, 1.0, &e, &mut acc);
        acc.value()
    }

    fn binomial_u128(n: u32, k: u32) -> u128 {
        let mut r: u128 = 1;
        for i in 0..k as u128 {
            r = r * (n as u128 - i) / (i + 1);
        }
        r
    }

    #[test]
    fn exact_small_returns() {
        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 4).unwrap();
        assert_eq!(t.mode, ConvMode::ElementConvolution);
        assert!((t.p(0).unwrap() - 1.0).abs() < 1e-15);
        assert!((t.p(2).unwrap() - 0.5).abs() < 1e-15);
        assert!((t.p(4).unwrap() - 6.0 / 16.0).abs() < 1e-15);
        assert_eq!(t.p(3), None);

        let f2 = ctx("free:2");
        let t = return_probabilities(&uniform_gens(&f2), 4).unwrap();
        assert_eq!(t.mode, ConvMode::RadialChain);
        assert!((t.p(2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn line_matches_central_binomials() {
        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 40).unwrap();
        for i in 1..=20u32 {
            let expect = binomial_u128(2 * i, i) as f64 / 4.0f64.powi(i as i32);
            assert!((t.p(2 * i).unwrap() - expect).abs() < 1e-13, "n={}", 2 * i);
        }
    }

    #[test]
    fn convolution_matches_word_enumeration() {
        // Independent oracle: full word-space enumeration.
        let cases: Vec<(Measure, u32)> = vec![
            (uniform_gens(&ctx("zd:1")), 10),
            (uniform_gens(&ctx("zd:2")), 8),
            (uniform_gens(&ctx("free:2")), 8),
            (Measure::poly_decay(&ctx("zd:1"), 2.0, 2).unwrap(), 6),
            (uniform_gens(&ctx("heis")), 6),
        ];
        for (mu, n_max) in cases {
            let t = return_probabilities_with(&mu, n_max, ConvMode::ElementConvolution).unwrap();
            for i in 0..=(n_max / 2) {
                let oracle = word_return_prob(&mu, 2 * i);
                let got = t.p(2 * i).unwrap();
                assert!(
                    (got - oracle).abs() <= 1e-12,
                    "{} {} n={}: {got} vs {oracle}",
                    mu.ctx().spec(),
                    mu.descriptor(),
                    2 * i
                );
            }
        }
    }

    #[test]
    fn radial_chain_agrees_with_element_convolution() {
        let f2 = ctx("free:2");
        let mu = uniform_gens(&f2);
        let radial = return_probabilities_with(&mu, 12, ConvMode::RadialChain).unwrap();
        let element = return_probabilities_with(&mu, 12, ConvMode::ElementConvolution).unwrap();
        for n in (0..=12u32).step_by(2) {
            let (a, b) = (radial.p(n).unwrap(), element.p(n).unwrap());
            assert!((a - b).abs() < 1e-13, "n={n}: {a} vs {b}");
        }
        let f3 = ctx("free:3");
        let mu = uniform_gens(&f3);
        let radial = return_probabilities_with(&mu, 6, ConvMode::RadialChain).unwrap();
        let element = return_probabilities_with(&mu, 6, ConvMode::ElementConvolution).unwrap();
        for n in (0..=6u32).step_by(2) {
            assert!((radial.p(n).unwrap() - element.p(n).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn rho_closed_forms() {
        // Free groups: rho = sqrt(2k-1)/k.
        let f2 = ctx("free:2");
        let t = return_probabilities(&uniform_gens(&f2), 200).unwrap();
        let rho = rho_estimate(&t).unwrap();
        let expect = 3.0f64.sqrt() / 2.0;
        assert!(
            (rho.rho_hat - expect).abs() / expect < 0.03,
            "{}",
            rho.rho_hat
        );
        assert!(rho.rho_hat < 0.9);
        assert_eq!(rho.at_n, 200);

        let f3 = ctx("free:3");
        let t = return_probabilities(&uniform_gens(&f3), 200).unwrap();
        let rho3 = rho_estimate(&t).unwrap();
        let expect3 = 5.0f64.sqrt() / 3.0;
        assert!(
            (rho3.rho_hat - expect3).abs() / expect3 < 0.03,
            "{}",
            rho3.rho_hat
        );

        // Amenable side of the dichotomy.
        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 200).unwrap();
        let rho1 = rho_estimate(&t).unwrap();
        assert!((rho1.rho_hat - 1.0).abs() < 0.03);
        assert!(rho1.rho_hat > 0.97);

        let z2 = ctx("zd:2");
        let t = return_probabilities(&uniform_gens(&z2), 60).unwrap();
        let rho2 = rho_estimate(&t).unwrap();
        assert!(rho2.rho_hat > 0.97, "{}", rho2.rho_hat);
    }

    #[test]
    fn root_sequence_nondecreasing() {
        // p_{2(m+n)} >= p_{2m} p_{2n} makes the even-step roots climb.
        for (spec, n_max) in [("zd:1", 100), ("free:2", 100), ("zd:2", 40)] {
            let c = ctx(spec);
            let t = return_probabilities(&uniform_gens(&c), n_max).unwrap();
            let rho = rho_estimate(&t).unwrap();
            for w in rho.roots.windows(2) {
                assert!(w[1].1 >= w[0].1 - 1e-12, "{spec} at {:?}", w);
            }
        }
    }

    #[test]
    fn rho_requires_enough_steps() {
        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 10).unwrap();
        assert!(matches!(rho_estimate(&t), Err(Error::Usage(_))));
    }

    #[test]
    fn kesten_inequality_examples() {
        let f2 = ctx("free:2");
        let t = return_probabilities(&uniform_gens(&f2), 200).unwrap();
        let rho = rho_estimate(&t).unwrap();
        let v = kesten_inequality_check(4, rho.rho_hat, 0.02);
        assert!(v.pass);
        assert!((v.rhs - 0.75).abs() < 0.05);

        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 200).unwrap();
        let rho = rho_estimate(&t).unwrap();
        let v = kesten_inequality_check(2, rho.rho_hat, 0.02);
        assert!(v.pass && v.lhs == 0.5);

        let f3 = ctx("free:3");
        let t = return_probabilities(&uniform_gens(&f3), 200).unwrap();
        let rho = rho_estimate(&t).unwrap();
        let v = kesten_inequality_check(6, rho.rho_hat, 0.02);
        assert!(v.pass);
        assert!((v.rhs - 5.0 / 9.0).abs() < 0.05);

        // The check can fail: a fake sub-threshold rho.
        assert!(!kesten_inequality_check(4, 0.3, 0.01).pass);
    }

    #[test]
    fn cheeger_tree_and_plane() {
        let f2 = ctx("free:2");
        let report = cheeger_report(&f2, &[0, 1, 2, 4, 6]).unwrap();
        for row in &report.rows {
            if row.radius == 0 {
                assert_eq!(row.boundary_edges, 4);
                assert_eq!(row.ratio, 4.0);
            } else {
                // Tree boundary count: every ball has 2|B|+2 outgoing edges.
                assert_eq!(row.boundary_edges, 2 * row.set_size + 2, "r={}", row.radius);
            }
        }
        assert!((report.iota_hat - 2.0).abs() < 0.1);
        assert_eq!(report.degree, 4);
        assert!((report.bs_raw - 1.0 / (4.0 * report.iota_hat)).abs() < 1e-15);
        assert!((report.bs_degree_normalized - 1.0 / report.iota_hat).abs() < 1e-15);
        // The raw bound is the one that contradicts the true threshold on the
        // tree (1/8 < 1/3) — present in the report, asserted nowhere.
        assert!(report.bs_raw < 1.0 / 3.0);

        let z2 = ctx("zd:2");
        let report = cheeger_report(&z2, &[0, 2, 4, 8, 16]).unwrap();
        let ratios: Vec<f64> = report.rows.iter().map(|r| r.ratio).collect();
        assert_eq!(ratios[0], 4.0);
        for w in ratios.windows(2) {
            assert!(w[1] < w[0], "amenable ratios must shrink: {ratios:?}");
        }
        assert!(report.iota_hat < 0.3);
    }

    #[test]
    fn element_mode_respects_cap() {
        let f2 = ctx("free:2").with_element_cap(100);
        let mu = uniform_gens(&f2);
        match return_probabilities_with(&mu, 20, ConvMode::ElementConvolution) {
            Err(Error::CapExceeded {
                cap,
                partial_spheres,
            }) => {
                assert_eq!(cap, 100);
                assert!(!partial_spheres.is_empty());
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn radial_mode_rejects_wrong_measure() {
        let z2 = ctx("zd:2");
        let mu = uniform_gens(&z2);
        assert!(matches!(
            return_probabilities_with(&mu, 10, ConvMode::RadialChain),
            Err(Error::Usage(_))
        ));
        // Non-uniform measure on a free group falls back to element mode.
        let f2 = ctx("free:2");
        let mu = Measure::poly_decay(&f2, 3.0, 2).unwrap();
        let t = return_probabilities(&mu, 4).unwrap();
        assert_eq!(t.mode, ConvMode::ElementConvolution);
    }

    #[test]
    fn csv_shape() {
        let z1 = ctx("zd:1");
        let t = return_probabilities(&uniform_gens(&z1), 4).unwrap();
        let text = return_csv(&t).render();
        assert!(text.contains("group,measure,n,p_n,mode"));
        assert!(text.contains("zd:1,uniform-gens,2,5.0000000000000000e-1,element-convolution"));
        assert!(text.contains("zd:1,uniform-gens,4,3.7500000000000000e-1,element-convolution"));
    }

    #[test]
    fn convolution_deterministic_across_pools() {
        // Fixed chunking makes the parallel merge order worker-independent.
        let z2 = ctx("zd:2");
        let mu = uniform_gens(&z2);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| return_probabilities(&mu, 30).unwrap().even_p)
        };
        let a = run(1);
        let b = run(4);
        let c = run(7);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.iter().zip(&c).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
