//! Exact enumeration of weighted self-avoiding walks.
//!
//! sigma_n is the sum, over all length-n sequences of distinct elements
//! starting at the identity whose consecutive increments lie in the support,
//! of the product of increment masses. Increments are evaluated as
//! g_{i-1}^-1 g_i; by symmetry of the measure this equals the reversed
//! convention g_i g_{i-1}^-1 atom for atom.
//!
//! Arithmetic is exact (arbitrary-precision rationals) when the measure's
//! masses are exactly reconstructible and n stays at or below
//! [`EXACT_N_CAP`]; otherwise compensated floating sums with a reported error
//! bound. Enumeration proceeds by iterative deepening so a walk-budget abort
//! has clean semantics: every depth at or below the reported depth was
//! enumerated completely.

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::groups::{GroupContext, GroupElement};
use crate::measures::Measure;
use crate::percolation::LambdaCEstimate;
use crate::report::{csv_f64, Table};
use crate::stats::Kahan;

/// Largest n at which auto mode picks exact rational arithmetic.
pub const EXACT_N_CAP: u32 = 8;
/// Default budget on walk prefixes examined across all depths.
pub const DEFAULT_WALK_CAP: u64 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactMode {
    /// Exact when masses are reconstructible and n_max <= EXACT_N_CAP.
    Auto,
    /// Fail if exact arithmetic is unavailable.
    Require,
    /// Always use floating sums.
    Never,
}

#[derive(Clone, Debug)]
pub enum SawValue {
    Exact(BigRational),
    Approx { value: f64, error_bound: f64 },
}

impl SawValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            SawValue::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            SawValue::Approx { value, .. } => *value,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, SawValue::Exact(_))
    }

    /// `p/q` for exact values, 17-significant-digit float otherwise.
    pub fn render(&self) -> String {
        match self {
            SawValue::Exact(r) => r.to_string(),
            SawValue::Approx { value, .. } => csv_f64(*value),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SigmaEntry {
    pub n: u32,
    pub sigma: SawValue,
}

#[derive(Clone, Debug)]
pub struct SawTable {
    pub group: String,
    pub measure: String,
    pub entries: Vec<SigmaEntry>,
    /// Walk prefixes examined across all deepening passes.
    pub walks_examined: u64,
}

impl SawTable {
    pub fn sigma(&self, n: u32) -> Option<&SawValue> {
        self.entries.get(n as usize).map(|e| &e.sigma)
    }
}

/// One iterative-deepening pass: sum the weights of all self-avoiding walks
/// of exactly `target` steps. `W` is the weight arithmetic (exact rational or
/// plain double; the double total is compensated by the caller's Kahan).
struct Dfs<'a, W> {
    ctx: &'a GroupContext,
    steps: &'a [(GroupElement, W)],
    target: u32,
    cap: u64,
    examined: &'a mut u64,
}

trait Weight: Clone {
    fn one() -> Self;
    fn mul(&self, rhs: &Self) -> Self;
}

impl Weight for BigRational {
    fn one() -> Self {
        One::one()
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

impl Weight for f64 {
    fn one() -> Self {
        1.0
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
}

impl<W: Weight> Dfs<'_, W> {
    fn run(&mut self, out: &mut Vec<W>) -> Result<()> {
        let root = self.ctx.identity();
        let mut visited = std::collections::HashSet::new();
        visited.insert(root.clone());
        self.recurse(&root, &W::one(), 0, &mut visited, out)
    }

    fn recurse(
        &mut self,
        v: &GroupElement,
        weight: &W,
        depth: u32,
        visited: &mut std::collections::HashSet<GroupElement>,
        out: &mut Vec<W>,
    ) -> Result<()> {
        if depth == self.target {
            out.push(weight.clone());
            return Ok(());
        }
        for (s, mass) in self.steps {
            let w = self.ctx.mul(v, s);
            if visited.contains(&w) {
                continue;
            }
            *self.examined += 1;
            if *self.examined > self.cap {
                return Err(Error::WalkCapExceeded {
                    cap: self.cap,
                    depth: self.target.saturating_sub(1),
                    walks_examined: *self.examined,
                });
            }
            visited.insert(w.clone());
            self.recurse(&w, &weight.mul(mass), depth + 1, visited, out)?;
            visited.remove(&w);
        }
        Ok(())
    }
}

/// The sigma table for n = 0..=n_max.
pub fn sigma_table(mu: &Measure, n_max: u32, walk_cap: u64, mode: ExactMode) -> Result<SawTable> {
    if n_max > 24 {
        return Err(Error::usage(
            "walk length cap is 24; enumeration is exponential",
        ));
    }
    let rational = mu.rational_atoms();
    let exact = match mode {
        ExactMode::Auto => rational.is_some() && n_max <= EXACT_N_CAP,
        ExactMode::Require => {
            if rational.is_none() {
                return Err(Error::usage(format!(
                    "{}: exact arithmetic unavailable (masses are not reconstructible rationals)",
                    mu.descriptor()
                )));
            }
            true
        }
        ExactMode::Never => false,
    };
    let ctx = mu.ctx();
    let mut examined = 0u64;
    let mut entries = Vec::with_capacity(n_max as usize + 1);
    if exact {
        let steps: Vec<(GroupElement, BigRational)> = rational.unwrap();
        for n in 0..=n_max {
            // Completing depth n-1 fixes the partial-depth report if the
            // budget dies inside depth n.
            let mut walks: Vec<BigRational> = Vec::new();
            let mut pass = Dfs {
                ctx,
                steps: &steps,
                target: n,
                cap: walk_cap,
                examined: &mut examined,
            };
            match pass.run(&mut walks) {
                Ok(()) => {}
                Err(Error::WalkCapExceeded {
                    cap,
                    walks_examined,
                    ..
                }) => {
                    return Err(Error::WalkCapExceeded {
                        cap,
                        depth: n.saturating_sub(1),
                        walks_examined,
                    })
                }
                Err(e) => return Err(e),
            }
            let sigma = walks.iter().fold(BigRational::zero(), |acc, w| acc + w);
            entries.push(SigmaEntry {
                n,
                sigma: SawValue::Exact(sigma),
            });
        }
    } else {
        let steps: Vec<(GroupElement, f64)> = mu
            .atoms()
            .iter()
            .map(|a| (a.element.clone(), a.mass))
            .collect();
        for n in 0..=n_max {
            let mut walks: Vec<f64> = Vec::new();
            let mut pass = Dfs {
                ctx,
                steps: &steps,
                target: n,
                cap: walk_cap,
                examined: &mut examined,
            };
            match pass.run(&mut walks) {
                Ok(()) => {}
                Err(Error::WalkCapExceeded {
                    cap,
                    walks_examined,
                    ..
                }) => {
                    return Err(Error::WalkCapExceeded {
                        cap,
                        depth: n.saturating_sub(1),
                        walks_examined,
                    })
                }
                Err(e) => return Err(e),
            }
            let mut total = Kahan::new();
            for w in &walks {
                total.add(*w);
            }
            // Each walk weight is an n-fold product; fold its relative
            // rounding into the summation bound.
            let value = total.value();
            let error_bound = total.error_bound() + value.abs() * n as f64 * f64::EPSILON;
            entries.push(SigmaEntry {
                n,
                sigma: SawValue::Approx { value, error_bound },
            });
        }
    }
    Ok(SawTable {
        group: ctx.spec().to_string(),
        measure: mu.descriptor().to_string(),
        entries,
        walks_examined: examined,
    })
}

/// sigma_n alone.
pub fn sigma_n(mu: &Measure, n: u32) -> Result<SawValue> {
    let table = sigma_table(mu, n, DEFAULT_WALK_CAP, ExactMode::Auto)?;
    Ok(table.entries[n as usize].sigma.clone())
}

/// Exact graph SAW counts c_0..=c_n on the Cayley graph — an independent
/// integer-count enumeration (no measure weights involved).
pub fn saw_count(ctx: &GroupContext, n_max: u32) -> Result<Vec<u64>> {
    if n_max > 24 {
        return Err(Error::usage(
            "walk length cap is 24; enumeration is exponential",
        ));
    }
    let mut counts = Vec::with_capacity(n_max as usize + 1);
    let mut examined = 0u64;
    for n in 0..=n_max {
        let count = count_saws_at_depth(ctx, n, DEFAULT_WALK_CAP, &mut examined)?;
        counts.push(count);
    }
    Ok(counts)
}

fn count_saws_at_depth(
    ctx: &GroupContext,
    target: u32,
    cap: u64,
    examined: &mut u64,
) -> Result<u64> {
    fn rec(
        ctx: &GroupContext,
        v: &GroupElement,
        depth: u32,
        target: u32,
        visited: &mut std::collections::HashSet<GroupElement>,
        cap: u64,
        examined: &mut u64,
    ) -> Result<u64> {
        if depth == target {
            return Ok(1);
        }
        let mut total = 0u64;
        for w in ctx.neighbors(v) {
            if visited.contains(&w) {
                continue;
            }
            *examined += 1;
            if *examined > cap {
                return Err(Error::WalkCapExceeded {
                    cap,
                    depth: target.saturating_sub(1),
                    walks_examined: *examined,
                });
            }
            visited.insert(w.clone());
            total += rec(ctx, &w, depth + 1, target, visited, cap, examined)?;
            visited.remove(&w);
        }
        Ok(total)
    }
    let root = ctx.identity();
    let mut visited = std::collections::HashSet::new();
    visited.insert(root.clone());
    rec(ctx, &root, 0, target, &mut visited, cap, examined)
}

#[derive(Clone, Debug)]
pub struct NumuRow {
    pub n: u32,
    pub sigma: BigRational,
    /// sigma_n * |S|^n, which must equal c_n exactly.
    pub scaled: BigRational,
    pub c_n: u64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct NumuReport {
    pub group: String,
    pub rows: Vec<NumuRow>,
    pub all_pass: bool,
}

/// Verify sigma_n(uniform on S) * |S|^n = c_n exactly for n <= n_max, with S
/// the generating set. The two sides come from independent enumerations
/// (weighted rational DFS vs integer graph DFS).
pub fn check_numu(ctx: &GroupContext, n_max: u32) -> Result<NumuReport> {
    let gens = ctx.generators()?;
    let mu = Measure::uniform_on_set(ctx, &gens, "uniform-gens".into())?;
    let table = sigma_table(&mu, n_max, DEFAULT_WALK_CAP, ExactMode::Require)?;
    let counts = saw_count(ctx, n_max)?;
    let m = BigInt::from(gens.len());
    let mut rows = Vec::new();
    let mut all_pass = true;
    for n in 0..=n_max {
        let sigma = match &table.entries[n as usize].sigma {
            SawValue::Exact(r) => r.clone(),
            SawValue::Approx { .. } => unreachable!("Require mode produced a float"),
        };
        let scaled = &sigma * BigRational::from_integer(m.pow(n));
        let expect = BigRational::from_integer(BigInt::from(counts[n as usize]));
        let pass = scaled == expect;
        all_pass &= pass;
        rows.push(NumuRow {
            n,
            sigma,
            scaled,
            c_n: counts[n as usize],
            pass,
        });
    }
    Ok(NumuReport {
        group: ctx.spec().to_string(),
        rows,
        all_pass,
    })
}

#[derive(Clone, Debug)]
pub struct NuBounds {
    /// (n, sigma_n^(1/n)) for n >= 1 — each a certified upper bound on the
    /// weighted connective constant, by submultiplicativity.
    pub per_n: Vec<(u32, f64)>,
    pub best_n: u32,
    pub best: f64,
}

/// Finite-n upper bounds sigma_n^(1/n) and the best (minimal) one.
pub fn nu_upper(table: &SawTable) -> NuBounds {
    let mut per_n = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_n = 0;
    for e in &table.entries {
        if e.n == 0 {
            continue;
        }
        let bound = e.sigma.to_f64().powf(1.0 / e.n as f64);
        if bound < best {
            best = bound;
            best_n = e.n;
        }
        per_n.push((e.n, bound));
    }
    NuBounds {
        per_n,
        best_n,
        best,
    }
}

#[derive(Clone, Debug)]
pub struct LacocoRow {
    pub n: u32,
    /// 1 / sigma_n^(1/n), a certified lower bound on the critical rate.
    pub rate_lower_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct LacocoReport {
    /// True when the rate estimate was capped: an infinite (or >lambda_max)
    /// critical rate satisfies any lower bound.
    pub vacuous: bool,
    pub rows: Vec<LacocoRow>,
    pub pass: bool,
}

/// Check the rate-vs-walk inequality: the estimated pseudo-critical rate
/// must exceed 1/sigma_n^(1/n) - tol for every tabulated n (each finite-n
/// bound is at least the true 1/nu).
pub fn check_lacoco(est: &LambdaCEstimate, table: &SawTable, tol: f64) -> LacocoReport {
    let Some(lambda_hat) = est.lambda_hat else {
        return LacocoReport {
            vacuous: true,
            rows: Vec::new(),
            pass: true,
        };
    };
    let mut rows = Vec::new();
    let mut pass = true;
    for (n, bound) in nu_upper(table).per_n {
        let lower = 1.0 / bound;
        let ok = lambda_hat >= lower - tol;
        pass &= ok;
        rows.push(LacocoRow {
            n,
            rate_lower_bound: lower,
            pass: ok,
        });
    }
    LacocoReport {
        vacuous: false,
        rows,
        pass,
    }
}

#[derive(Clone, Debug)]
pub struct AtomDragReport {
    pub delta: f64,
    pub heaviest: String,
    /// The finite-n bound sequence sigma_n^(1/n); the heavy atom's drag on it
    /// is visible but no asymptotic claim is made at finite n.
    pub bounds: Vec<(u32, f64)>,
}

/// Max-atom mass delta next to the finite-n connective bounds.
pub fn atom_drag_report(mu: &Measure, table: &SawTable) -> AtomDragReport {
    let (g, delta) = mu.max_atom();
    AtomDragReport {
        delta,
        heaviest: g.to_string(),
        bounds: nu_upper(table).per_n,
    }
}

/// CSV rows `group,measure,n,sigma_n,exact_flag,nu_upper` (rationals as
/// `p/q`; the n=0 row leaves the bound column empty).
pub fn saw_csv(table: &SawTable) -> Table {
    let mut t = Table::new(&["group", "measure", "n", "sigma_n", "exact_flag", "nu_upper"]);
    t.set_config("group", &table.group);
    t.set_config("measure", &table.measure);
    t.set_config("walks_examined", table.walks_examined);
    let nu = nu_upper(table);
    for e in &table.entries {
        let bound = if e.n == 0 {
            String::new()
        } else {
            csv_f64(nu.per_n[e.n as usize - 1].1)
        };
        t.push_row(vec![
            table.group.clone(),
            table.measure.clone(),
            e.n.to_string(),
            e.sigma.render(),
            e.sigma.is_exact().to_string(),
            bound,
        ]);
    }
    t
}
