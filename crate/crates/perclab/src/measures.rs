//! Symmetric finite-support step distributions on a group context.
//!
//! Every measure here is a finitely supported symmetric probability measure
//! with the identity excluded (self-loops never affect connectivity, so
//! constructors drop it and the explicit-file loader renormalizes it away
//! with a recorded correction). Symmetry is exact in the bitwise sense: all
//! constructor weights depend only on the word length, and |g| = |g^-1| for a
//! symmetric generating set, so paired atoms get identical doubles; the
//! explicit loader enforces it by averaging each orbit pair.

use std::collections::HashMap;
use std::fmt;

use num::{BigInt, BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::groups::{GroupContext, GroupElement};
use crate::stats::{fmt_f64, Kahan};

/// One support point: the element, its word length, and its mass.
#[derive(Clone, Debug)]
pub struct Atom {
    pub element: GroupElement,
    pub word_length: u32,
    pub mass: f64,
}

/// How the measure was built; drives the exact-rational reconstruction used
/// by the walk enumerator.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    UniformBall { n: u32 },
    UniformSet,
    PolyDecay { s: f64, radius: u32 },
    StretchedExp { r: f64, s: f64, radius: u32 },
    Explicit,
}

#[derive(Clone, Debug)]
pub struct Measure {
    ctx: GroupContext,
    /// Sorted by (word length, canonical element order); deduplicated.
    atoms: Vec<Atom>,
    index: HashMap<GroupElement, f64>,
    descriptor: String,
    provenance: Provenance,
}

/// Corrections the explicit-file loader applied to make the input a valid
/// measure.
#[derive(Clone, Debug, Default)]
pub struct LoadCorrections {
    /// Identity mass dropped before renormalization.
    pub identity_mass_removed: f64,
    /// Total absolute mass moved while averaging orbit pairs.
    pub symmetrization_l1: f64,
    /// Factor the remaining masses were divided by to reach total mass 1.
    pub normalization_factor: f64,
}

impl LoadCorrections {
    pub fn is_clean(&self) -> bool {
        self.identity_mass_removed == 0.0
            && self.symmetrization_l1 == 0.0
            && (self.normalization_factor - 1.0).abs() < 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayMode {
    Poly,
    StretchedExp,
}

/// Decay-class diagnostics at exponent `s`: the minimal admissible constant
/// and strict-membership checks against it.
#[derive(Clone, Debug)]
pub struct DecayClassReport {
    pub s: f64,
    pub mode: DecayMode,
    /// `b_min = max_g mass(g) |g|^s` (poly) or `r_min = max_g mass(g)^(1/|g|^s)`
    /// (stretched-exponential).
    pub threshold_min: f64,
}

impl DecayClassReport {
    /// Membership is strict: the class with constant `c` admits the measure
    /// iff `c > threshold_min`.
    pub fn admits(&self, c: f64) -> bool {
        c > self.threshold_min
    }
}

/// Mass per doubling annulus around the identity.
#[derive(Clone, Debug)]
pub struct AnnulusMassReport {
    pub base_radius: u32,
    /// Index i holds the mass of A_i (A_0 = B(M), A_i = B(M 2^i) \ B(M 2^(i-1))).
    pub masses: Vec<f64>,
    /// Whether the mass of A_0 exceeds 1/2.
    pub a0_dominant: bool,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor)
    }
}

fn require_group_law(ctx: &GroupContext) -> Result<()> {
    if ctx.is_graph() {
        Err(Error::usage(format!(
            "step measures need a group law; {ctx} is a graph-mode context \
             (its percolation uses unit edge weights instead)"
        )))
    } else {
        Ok(())
    }
}

impl Measure {
    /// Finish construction from (element, length, unnormalized weight)
    /// triples: sorts, normalizes, indexes, validates.
    fn from_weights(
        ctx: GroupContext,
        mut triples: Vec<(GroupElement, u32, f64)>,
        descriptor: String,
        provenance: Provenance,
    ) -> Result<Measure> {
        if triples.is_empty() {
            return Err(Error::InvalidMeasure(format!(
                "{descriptor}: empty support"
            )));
        }
        triples.sort_unstable_by(|(g1, l1, _), (g2, l2, _)| l1.cmp(l2).then_with(|| g1.cmp(g2)));
        let mut total = Kahan::new();
        for (_, _, w) in &triples {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "{descriptor}: nonpositive or non-finite weight {w}"
                )));
            }
            total.add(*w);
        }
        let total = total.value();
        let atoms: Vec<Atom> = triples
            .into_iter()
            .map(|(element, word_length, w)| Atom {
                element,
                word_length,
                mass: w / total,
            })
            .collect();
        let index: HashMap<GroupElement, f64> =
            atoms.iter().map(|a| (a.element.clone(), a.mass)).collect();
        if index.len() != atoms.len() {
            return Err(Error::InvalidMeasure(format!(
                "{descriptor}: duplicate support element"
            )));
        }
        let m = Measure {
            ctx,
            atoms,
            index,
            descriptor,
            provenance,
        };
        m.validate()?;
        Ok(m)
    }

    /// Check the measure invariants: exact symmetry, unit total mass (within
    /// 1e-12), positive masses, identity excluded.
    pub fn validate(&self) -> Result<()> {
        let e = self.ctx.identity();
        let mut total = Kahan::new();
        for a in &self.atoms {
            if a.element == e {
                return Err(Error::InvalidMeasure(format!(
                    "{}: identity in support",
                    self.descriptor
                )));
            }
            let inv = self.ctx.inv(&a.element);
            match self.index.get(&inv) {
                Some(&m) if m == a.mass => {}
                _ => {
                    return Err(Error::InvalidMeasure(format!(
                        "{}: asymmetric at {} (mass {} vs inverse {:?})",
                        self.descriptor,
                        a.element,
                        a.mass,
                        self.index.get(&inv)
                    )))
                }
            }
            total.add(a.mass);
        }
        let total = total.value();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "{}: total mass {total} off unity",
                self.descriptor
            )));
        }
        Ok(())
    }

    /// Equidistribution on the punctured ball B(n) \ {e}.
    pub fn uniform_on_ball(ctx: &GroupContext, n: u32) -> Result<Measure> {
        require_group_law(ctx)?;
        if n == 0 {
            return Err(Error::usage("uniform-ball radius must be >= 1"));
        }
        let ball = ctx.ball(n)?;
        let triples: Vec<(GroupElement, u32, f64)> = ball
            .elements
            .into_iter()
            .filter(|(_, len)| *len > 0)
            .map(|(g, len)| (g, len, 1.0))
            .collect();
        Measure::from_weights(
            ctx.clone(),
            triples,
            format!("uniform-ball:{n}"),
            Provenance::UniformBall { n },
        )
    }

    /// Equidistribution on an explicit symmetric identity-free set.
    pub fn uniform_on_set(
        ctx: &GroupContext,
        set: &[GroupElement],
        descriptor: String,
    ) -> Result<Measure> {
        require_group_law(ctx)?;
        if set.is_empty() {
            return Err(Error::InvalidMeasure(format!("{descriptor}: empty set")));
        }
        let e = ctx.identity();
        let mut seen = std::collections::HashSet::new();
        for g in set {
            ctx.validate_element(g)?;
            if *g == e {
                return Err(Error::InvalidMeasure(format!(
                    "{descriptor}: set contains identity"
                )));
            }
            if !seen.insert(g.clone()) {
                return Err(Error::InvalidMeasure(format!(
                    "{descriptor}: duplicate element {g}"
                )));
            }
        }
        for g in set {
            if !seen.contains(&ctx.inv(g)) {
                return Err(Error::InvalidMeasure(format!(
                    "{descriptor}: set is not symmetric ({g} present, its inverse missing)"
                )));
            }
        }
        let triples: Vec<(GroupElement, u32, f64)> = set
            .iter()
            .map(|g| (g.clone(), ctx.word_length(g), 1.0))
            .collect();
        Measure::from_weights(ctx.clone(), triples, descriptor, Provenance::UniformSet)
    }

    /// mass(g) proportional to |g|^(-s) on B(R) \ {e}.
    pub fn poly_decay(ctx: &GroupContext, s: f64, radius: u32) -> Result<Measure> {
        require_group_law(ctx)?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::usage("poly decay exponent must be positive"));
        }
        if radius == 0 {
            return Err(Error::usage("poly decay radius must be >= 1"));
        }
        let ball = ctx.ball(radius)?;
        let triples: Vec<(GroupElement, u32, f64)> = ball
            .elements
            .into_iter()
            .filter(|(_, len)| *len > 0)
            .map(|(g, len)| (g, len, (len as f64).powf(-s)))
            .collect();
        Measure::from_weights(
            ctx.clone(),
            triples,
            format!("poly:{s},{radius}"),
            Provenance::PolyDecay { s, radius },
        )
    }

    /// mass(g) proportional to r^(|g|^s) on B(R) \ {e}; s = 1 is plain
    /// exponential decay.
    pub fn stretched_exp_decay(ctx: &GroupContext, r: f64, s: f64, radius: u32) -> Result<Measure> {
        require_group_law(ctx)?;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::usage(
                "stretched-exponential base r must be in (0,1)",
            ));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::usage(
                "stretched-exponential exponent s must be in (0,1]",
            ));
        }
        if radius == 0 {
            return Err(Error::usage("stretched-exponential radius must be >= 1"));
        }
        let ball = ctx.ball(radius)?;
        let triples: Vec<(GroupElement, u32, f64)> = ball
            .elements
            .into_iter()
            .filter(|(_, len)| *len > 0)
            .map(|(g, len)| (g, len, r.powf((len as f64).powf(s))))
            .collect();
        Measure::from_weights(
            ctx.clone(),
            triples,
            format!("sexp:{r},{s},{radius}"),
            Provenance::StretchedExp { r, s, radius },
        )
    }

    /// Parse a measure spec: `uniform-ball:<n>`, `uniform-set:<file>`,
    /// `poly:<s>,<R>`, `sexp:<r>,<s>,<R>`, `file:<path>`.
    pub fn parse_spec(ctx: &GroupContext, spec: &str) -> Result<Measure> {
        let spec = spec.trim();
        if let Some(n) = spec.strip_prefix("uniform-ball:") {
            let n: u32 = n
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad ball radius in {spec:?}")))?;
            Measure::uniform_on_ball(ctx, n)
        } else if let Some(path) = spec.strip_prefix("uniform-set:") {
            let text = std::fs::read_to_string(path)?;
            let mut set = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                set.push(ctx.parse_element(line)?);
            }
            Measure::uniform_on_set(ctx, &set, format!("uniform-set:{path}"))
        } else if let Some(rest) = spec.strip_prefix("poly:") {
            let (s, r) = rest
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("expected poly:<s>,<R> in {spec:?}")))?;
            let s: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad exponent in {spec:?}")))?;
            let r: u32 = r
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad radius in {spec:?}")))?;
            Measure::poly_decay(ctx, s, r)
        } else if let Some(rest) = spec.strip_prefix("sexp:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::parse(format!(
                    "expected sexp:<r>,<s>,<R> in {spec:?}"
                )));
            }
            let r: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad base in {spec:?}")))?;
            let s: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad exponent in {spec:?}")))?;
            let radius: u32 = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("bad radius in {spec:?}")))?;
            Measure::stretched_exp_decay(ctx, r, s, radius)
        } else if let Some(path) = spec.strip_prefix("file:") {
            let text = std::fs::read_to_string(path)?;
            let (m, corrections) = Measure::from_explicit_text(ctx, &text, spec.to_string())?;
            if !corrections.is_clean() {
                eprintln!(
                    "warning: {spec}: loader corrections applied \
                     (identity mass removed {:.3e}, symmetrization L1 {:.3e}, \
                      normalization factor {:.12})",
                    corrections.identity_mass_removed,
                    corrections.symmetrization_l1,
                    corrections.normalization_factor
                );
            }
            Ok(m)
        } else {
            Err(Error::usage(format!(
                "unknown measure spec {spec:?} (expected uniform-ball:<n>, uniform-set:<file>, \
                 poly:<s>,<R>, sexp:<r>,<s>,<R>, file:<path>)"
            )))
        }
    }

    /// Load `<element-literal> <probability>` lines. Identity mass is dropped,
    /// orbit pairs are averaged, and the result is renormalized; the applied
    /// corrections are returned alongside the measure.
    pub fn from_explicit_text(
        ctx: &GroupContext,
        text: &str,
        descriptor: String,
    ) -> Result<(Measure, LoadCorrections)> {
        require_group_law(ctx)?;
        let mut raw: HashMap<GroupElement, f64> = HashMap::new();
        let mut order: Vec<GroupElement> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lit, prob) = line.rsplit_once(char::is_whitespace).ok_or_else(|| {
                Error::parse(format!("line {}: expected `<element> <prob>`", lineno + 1))
            })?;
            let g = ctx.parse_element(lit)?;
            let p: f64 = prob.trim().parse().map_err(|_| {
                Error::parse(format!("line {}: bad probability {prob:?}", lineno + 1))
            })?;
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "line {}: probability must be positive and finite",
                    lineno + 1
                )));
            }
            if raw.insert(g.clone(), p).is_some() {
                return Err(Error::InvalidMeasure(format!(
                    "line {}: duplicate element {g}",
                    lineno + 1
                )));
            }
            order.push(g);
        }
        let mut corrections = LoadCorrections {
            normalization_factor: 1.0,
            ..Default::default()
        };
        let e = ctx.identity();
        if let Some(pe) = raw.remove(&e) {
            corrections.identity_mass_removed = pe;
            order.retain(|g| *g != e);
        }
        // Average each orbit pair {g, g^-1}; visit in input order for a
        // deterministic correction tally.
        let mut averaged: HashMap<GroupElement, f64> = HashMap::new();
        let mut sym_l1 = Kahan::new();
        for g in &order {
            if averaged.contains_key(g) {
                continue;
            }
            let inv = ctx.inv(g);
            let pg = raw[g];
            let pinv = raw.get(&inv).copied().unwrap_or(0.0);
            let avg = if *g == inv { pg } else { (pg + pinv) / 2.0 };
            sym_l1.add((pg - avg).abs());
            averaged.insert(g.clone(), avg);
            if *g != inv {
                sym_l1.add((pinv - avg).abs());
                averaged.insert(inv, avg);
            }
        }
        corrections.symmetrization_l1 = sym_l1.value();
        let mut total = Kahan::new();
        for &p in averaged.values() {
            total.add(p);
        }
        corrections.normalization_factor = total.value();
        let triples: Vec<(GroupElement, u32, f64)> = averaged
            .into_iter()
            .map(|(g, p)| {
                let len = ctx.word_length(&g);
                (g, len, p)
            })
            .collect();
        let m = Measure::from_weights(ctx.clone(), triples, descriptor, Provenance::Explicit)?;
        Ok((m, corrections))
    }

    /// Serialize in the explicit-file format (`<element-literal> <prob>` per
    /// line, 17-significant-digit probabilities).
    pub fn to_explicit_text(&self) -> String {
        let mut out = String::new();
        for a in &self.atoms {
            out.push_str(&format!("{} {}\n", a.element, fmt_f64(a.mass)));
        }
        out
    }

    pub fn ctx(&self) -> &GroupContext {
        &self.ctx
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn support_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// mass(g), zero off the support.
    pub fn prob(&self, g: &GroupElement) -> f64 {
        self.index.get(g).copied().unwrap_or(0.0)
    }

    /// Largest word length in the support.
    pub fn support_radius(&self) -> u32 {
        self.atoms.iter().map(|a| a.word_length).max().unwrap_or(0)
    }

    /// Expected number of simple-graph neighbors of a vertex at rate lambda:
    /// sum of 1 - exp(-lambda * mass(g)).
    pub fn expected_simple_degree(&self, lambda: f64) -> f64 {
        let mut k = Kahan::new();
        for a in &self.atoms {
            k.add(-(-lambda * a.mass).exp_m1());
        }
        k.value()
    }

    /// Minimal decay constant at exponent s: `b_min = max mass |g|^s` in
    /// polynomial mode, `r_min = max mass^(1/|g|^s)` in stretched-exponential
    /// mode. Membership in the class with constant c is the strict comparison
    /// `c > threshold_min`.
    pub fn decay_class(&self, s: f64, mode: DecayMode) -> DecayClassReport {
        let threshold_min = match mode {
            DecayMode::Poly => self
                .atoms
                .iter()
                .map(|a| a.mass * (a.word_length as f64).powf(s))
                .fold(f64::NEG_INFINITY, f64::max),
            DecayMode::StretchedExp => self
                .atoms
                .iter()
                .map(|a| a.mass.powf((a.word_length as f64).powf(s).recip()))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        DecayClassReport {
            s,
            mode,
            threshold_min,
        }
    }

    /// Mass per doubling annulus (A_0 = B(M), then dyadic shells) out to the
    /// support radius; flags whether A_0 carries more than half the mass.
    pub fn annulus_mass(&self, base_radius: u32) -> Result<AnnulusMassReport> {
        if base_radius == 0 {
            return Err(Error::usage("annulus base radius must be >= 1"));
        }
        let mut i_max = 0u32;
        let mut bound = base_radius as u64;
        let top = self.support_radius() as u64;
        while bound < top {
            bound *= 2;
            i_max += 1;
        }
        let mut sums: Vec<Kahan> = vec![Kahan::new(); i_max as usize + 1];
        for a in &self.atoms {
            let mut i = 0usize;
            let mut bound = base_radius as u64;
            while (a.word_length as u64) > bound {
                bound *= 2;
                i += 1;
            }
            sums[i].add(a.mass);
        }
        let masses: Vec<f64> = sums.iter().map(|k| k.value()).collect();
        let a0_dominant = masses[0] > 0.5;
        Ok(AnnulusMassReport {
            base_radius,
            masses,
            a0_dominant,
        })
    }

    /// The heaviest atom; ties broken by (word length, canonical element
    /// order), first wins.
    pub fn max_atom(&self) -> (&GroupElement, f64) {
        let mut best = &self.atoms[0];
        for a in &self.atoms[1..] {
            if a.mass > best.mass {
                best = a;
            }
        }
        (&best.element, best.mass)
    }

    /// Exact rational masses, reconstructible when the construction is
    /// arithmetic: equidistributions (1/count) and integer-exponent
    /// polynomial decay (weights 1/|g|^s). Returns atoms in storage order.
    pub fn rational_atoms(&self) -> Option<Vec<(GroupElement, BigRational)>> {
        match &self.provenance {
            Provenance::UniformBall { .. } | Provenance::UniformSet => {
                let count = BigInt::from(self.atoms.len());
                Some(
                    self.atoms
                        .iter()
                        .map(|a| {
                            (
                                a.element.clone(),
                                BigRational::new(BigInt::one(), count.clone()),
                            )
                        })
                        .collect(),
                )
            }
            Provenance::PolyDecay { s, .. } if *s == s.trunc() && *s >= 1.0 && *s <= 32.0 => {
                let s = *s as u32;
                let weights: Vec<BigRational> = self
                    .atoms
                    .iter()
                    .map(|a| BigRational::new(BigInt::one(), BigInt::from(a.word_length).pow(s)))
                    .collect();
                let total: BigRational = weights.iter().fold(BigRational::zero(), |acc, w| acc + w);
                Some(
                    self.atoms
                        .iter()
                        .zip(weights)
                        .map(|(a, w)| (a.element.clone(), w / total.clone()))
                        .collect(),
                )
            }
            _ => None,
        }
    }
}
