//! Exponential random graph models fitted by maximum pseudo-likelihood.
//!
//! Terms: edges, uniform homophily, differential homophily, and the
//! geometrically weighted dyadwise shared partner statistic (GWDSP) with a
//! fixed decay. The fit is a logistic regression of arc indicators on
//! per-dyad change statistics over all ordered non-self pairs, solved by
//! Newton iterations. Pseudo-likelihood is not the MCMC likelihood; reports
//! must carry the MPLE banner.
//!
//! Shared partners are counted on the direction-collapsed graph.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::Error;
use crate::netbuild::Network;
use crate::netstats::NodeAttr;
use crate::Result;

// ---------------------------------------------------------------------------
// Terms

#[derive(Debug, Clone, PartialEq)]
pub enum TermSpec {
    /// Arc count; the sociality baseline.
    Edges,
    /// Arcs whose endpoints share the attribute category.
    UniformHomophily(NodeAttr),
    /// Arcs whose endpoints both carry the named category.
    DifferentialHomophily(NodeAttr, String),
    /// Geometrically weighted dyadwise shared partners at a fixed decay.
    Gwdsp { decay: f64 },
}

impl std::fmt::Display for TermSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TermSpec::Edges => write!(f, "edges"),
            TermSpec::UniformHomophily(attr) => write!(f, "uniform_homophily({attr})"),
            TermSpec::DifferentialHomophily(attr, cat) => {
                write!(f, "differential_homophily({attr}={cat})")
            }
            TermSpec::Gwdsp { decay } => write!(f, "gwdsp({decay})"),
        }
    }
}

/// Newton solver options.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient norm.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TermFit {
    pub term: TermSpec,
    pub theta: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub terms: Vec<TermFit>,
    pub log_pseudo_likelihood: f64,
    /// Information criteria computed from the pseudo-likelihood; not
    /// comparable to MCMC-MLE values.
    pub aic: f64,
    pub bic: f64,
    pub n_dyads: u64,
    pub converged: bool,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// Graph context

/// Preprocessed view of one layer for ERGM computations.
struct ErgmContext {
    n: usize,
    /// Distinct ordered arc pairs (any kind).
    arc_set: BTreeSet<(u32, u32)>,
    /// Direction-collapsed adjacency, sorted.
    collapsed: Vec<Vec<u32>>,
    /// Shared-partner counts for unordered pairs with at least one shared
    /// partner, on the collapsed graph.
    sp: BTreeMap<(u32, u32), u32>,
    /// Category code per node and term (homophily terms only).
    term_cats: Vec<Option<TermCats>>,
    terms: Vec<TermSpec>,
}

struct TermCats {
    cats: Vec<u8>,
    /// For differential homophily: the target category code.
    target: Option<u8>,
}

fn node_categories(layer: &Network, attr: NodeAttr) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(layer.n_nodes());
    for node in &layer.nodes {
        let cat = match attr {
            NodeAttr::Sex => node.sex.map(|s| s as u8),
            NodeAttr::Site => node.site.map(|s| s as u8),
            NodeAttr::SiteSex => match (node.site, node.sex) {
                (Some(s), Some(x)) => Some((s as u8) * 2 + x as u8),
                _ => None,
            },
        };
        match cat {
            Some(c) => out.push(c),
            None => {
                return Err(Error::Undefined(format!(
                    "attribute {attr} missing on node {}",
                    node.entity
                )))
            }
        }
    }
    Ok(out)
}

fn category_code(attr: NodeAttr, label: &str) -> Result<u8> {
    attr.labels()
        .iter()
        .position(|l| l == label)
        .map(|i| i as u8)
        .ok_or_else(|| Error::config(format!("unknown category `{label}` for attribute {attr}")))
}

impl ErgmContext {
    fn build(layer: &Network, terms: &[TermSpec]) -> Result<ErgmContext> {
        if terms.is_empty() {
            return Err(Error::Fit("empty term list".into()));
        }
        let n = layer.n_nodes();
        let mut arc_set = BTreeSet::new();
        for arc in &layer.arcs {
            let s = layer.index_of(arc.src).unwrap() as u32;
            let d = layer.index_of(arc.dst).unwrap() as u32;
            arc_set.insert((s, d));
        }
        let mut collapsed: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
        for &(s, d) in &arc_set {
            collapsed[s as usize].insert(d);
            collapsed[d as usize].insert(s);
        }
        let collapsed: Vec<Vec<u32>> = collapsed
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();

        // Wedge enumeration: every 2-path a-k-b contributes one shared
        // partner to the unordered pair (a, b).
        let mut sp: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for neigh in &collapsed {
            for (ai, &a) in neigh.iter().enumerate() {
                for &b in &neigh[ai + 1..] {
                    *sp.entry((a, b)).or_default() += 1;
                }
            }
        }

        let mut term_cats = Vec::with_capacity(terms.len());
        for term in terms {
            term_cats.push(match term {
                TermSpec::UniformHomophily(attr) => Some(TermCats {
                    cats: node_categories(layer, *attr)?,
                    target: None,
                }),
                TermSpec::DifferentialHomophily(attr, label) => Some(TermCats {
                    cats: node_categories(layer, *attr)?,
                    target: Some(category_code(*attr, label)?),
                }),
                _ => None,
            });
        }
        Ok(ErgmContext {
            n,
            arc_set,
            collapsed,
            sp,
            term_cats,
            terms: terms.to_vec(),
        })
    }

    fn has_arc(&self, i: u32, j: u32) -> bool {
        self.arc_set.contains(&(i, j))
    }

    fn shared_partners(&self, a: u32, b: u32) -> u32 {
        let key = (a.min(b), a.max(b));
        self.sp.get(&key).copied().unwrap_or(0)
    }

    /// Per-term change statistic for toggling the arc (i, j).
    fn change(&self, i: u32, j: u32) -> Result<Vec<f64>> {
        if i == j {
            return Err(Error::Fit("change statistic on a self-loop".into()));
        }
        let mut out = Vec::with_capacity(self.terms.len());
        for (t, term) in self.terms.iter().enumerate() {
            let v = match term {
                TermSpec::Edges => 1.0,
                TermSpec::UniformHomophily(_) => {
                    let cats = &self.term_cats[t].as_ref().unwrap().cats;
                    if cats[i as usize] == cats[j as usize] {
                        1.0
                    } else {
                        0.0
                    }
                }
                TermSpec::DifferentialHomophily(_, _) => {
                    let tc = self.term_cats[t].as_ref().unwrap();
                    let target = tc.target.unwrap();
                    if tc.cats[i as usize] == target && tc.cats[j as usize] == target {
                        1.0
                    } else {
                        0.0
                    }
                }
                TermSpec::Gwdsp { decay } => self.gwdsp_change(i, j, *decay),
            };
            out.push(v);
        }
        Ok(out)
    }

    /// GWDSP change for toggling arc (i, j). When the reverse arc exists the
    /// collapsed edge persists either way and the change is zero; otherwise
    /// the toggle adds or removes the collapsed edge (i, j), shifting the
    /// shared-partner count of every pair (i, b) for b adjacent to j and
    /// (j, b) for b adjacent to i.
    fn gwdsp_change(&self, i: u32, j: u32, decay: f64) -> f64 {
        if self.has_arc(j, i) {
            return 0.0;
        }
        // Shared-partner counts on the graph without the collapsed edge
        // (i, j): if the arc is present in the observed graph, each affected
        // pair currently counts one extra shared partner through it.
        let edge_present = self.has_arc(i, j);
        let adjust = u32::from(edge_present);
        let mut delta = 0.0;
        for &b in &self.collapsed[j as usize] {
            if b == i {
                continue;
            }
            let s = self.shared_partners(i, b) - adjust;
            delta += gwdsp_weight(s + 1, decay) - gwdsp_weight(s, decay);
        }
        for &b in &self.collapsed[i as usize] {
            if b == j {
                continue;
            }
            let s = self.shared_partners(j, b) - adjust;
            delta += gwdsp_weight(s + 1, decay) - gwdsp_weight(s, decay);
        }
        delta
    }

    /// Global statistic of one term on the observed graph.
    fn global(&self, term_index: usize) -> f64 {
        match &self.terms[term_index] {
            TermSpec::Edges => self.arc_set.len() as f64,
            TermSpec::UniformHomophily(_) => {
                let cats = &self.term_cats[term_index].as_ref().unwrap().cats;
                self.arc_set
                    .iter()
                    .filter(|&&(s, d)| cats[s as usize] == cats[d as usize])
                    .count() as f64
            }
            TermSpec::DifferentialHomophily(_, _) => {
                let tc = self.term_cats[term_index].as_ref().unwrap();
                let target = tc.target.unwrap();
                self.arc_set
                    .iter()
                    .filter(|&&(s, d)| {
                        tc.cats[s as usize] == target && tc.cats[d as usize] == target
                    })
                    .count() as f64
            }
            TermSpec::Gwdsp { decay } => self
                .sp
                .values()
                .map(|&s| gwdsp_weight(s, *decay))
                .sum(),
        }
    }
}

/// GWDSP weight of one dyad with `s` shared partners:
/// `e^decay * (1 - (1 - e^(-decay))^s)`. Evaluated as the equivalent
/// partial geometric sum `sum_{k < s} (1 - e^(-decay))^k`, which is exact at
/// the boundary cases: w(0) = 0 and w(1) = 1 for every decay.
fn gwdsp_weight(s: u32, decay: f64) -> f64 {
    let u = 1.0 - (-decay).exp();
    let mut term = 1.0;
    let mut total = 0.0;
    for _ in 0..s {
        total += term;
        term *= u;
    }
    total
}

// ---------------------------------------------------------------------------
// Public statistics

/// The geometrically weighted dyadwise shared partner statistic of a layer.
pub fn gwdsp_statistic(layer: &Network, decay: f64) -> Result<f64> {
    if decay < 0.0 {
        return Err(Error::config("gwdsp decay must be >= 0"));
    }
    let ctx = ErgmContext::build(layer, &[TermSpec::Gwdsp { decay }])?;
    Ok(ctx.global(0))
}

/// Per-term change statistics for toggling one ordered pair.
pub fn change_statistics(
    layer: &Network,
    terms: &[TermSpec],
    pair: (u32, u32),
) -> Result<Vec<f64>> {
    let ctx = ErgmContext::build(layer, terms)?;
    if pair.0 as usize >= ctx.n || pair.1 as usize >= ctx.n {
        return Err(Error::Fit(format!("pair {pair:?} out of range")));
    }
    ctx.change(pair.0, pair.1)
}

/// Global term statistics on the observed layer.
pub fn global_statistics(layer: &Network, terms: &[TermSpec]) -> Result<Vec<f64>> {
    let ctx = ErgmContext::build(layer, terms)?;
    Ok((0..terms.len()).map(|t| ctx.global(t)).collect())
}

/// Logistic transform of a coefficient, with the interpretation string used
/// in reports.
pub fn coefficient_probability(theta: f64) -> (f64, String) {
    let p = 1.0 / (1.0 + (-theta).exp());
    (
        p,
        format!("exp({theta:.3}) / (1 + exp({theta:.3})) = {p:.4}"),
    )
}

// ---------------------------------------------------------------------------
// MPLE fit

/// Two-sided normal p-value from a z score (Abramowitz-Stegun erf
/// approximation, |error| < 1.5e-7).
fn normal_two_sided_p(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc = poly * (-x * x).exp();
    (erfc).clamp(0.0, 1.0)
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Fit by maximum pseudo-likelihood: logistic regression of arc indicators
/// on change statistics over all ordered non-self pairs. Rows with equal
/// covariates are aggregated, so the solve cost is independent of the dyad
/// count once the design is built.
pub fn fit_mple(layer: &Network, terms: &[TermSpec], solver: SolverOptions) -> Result<FitResult> {
    let ctx = ErgmContext::build(layer, terms)?;
    let n = ctx.n;
    if n < 2 {
        return Err(Error::Fit("need at least two nodes".into()));
    }
    let k = terms.len();

    // Aggregate the dyad universe into unique covariate rows.
    let mut rows: BTreeMap<Vec<u64>, (u64, u64)> = BTreeMap::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i == j {
                continue;
            }
            let x = ctx.change(i, j)?;
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let entry = rows.entry(key).or_insert((0, 0));
            entry.0 += 1;
            if ctx.has_arc(i, j) {
                entry.1 += 1;
            }
        }
    }
    let n_dyads = (n as u64) * (n as u64 - 1);
    let total_present: u64 = rows.values().map(|(_, k)| *k).sum();
    if total_present == 0 || total_present == n_dyads {
        return Err(Error::Fit(
            "infinite coefficient: the graph is all-absent or all-present".into(),
        ));
    }

    let design: Vec<(Vec<f64>, f64, f64)> = rows
        .into_iter()
        .map(|(key, (count, present))| {
            let x: Vec<f64> = key.into_iter().map(f64::from_bits).collect();
            (x, count as f64, present as f64)
        })
        .collect();

    // Newton-Raphson on the aggregated design.
    let mut theta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;
    let mut hessian = DMatrix::zeros(k, k);
    for iter in 0..solver.max_iter {
        iterations = iter + 1;
        let mut grad = DVector::zeros(k);
        hessian.fill(0.0);
        for (x, count, present) in &design {
            let eta: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = count * mu * (1.0 - mu);
            for a in 0..k {
                grad[a] += (present - count * mu) * x[a];
                for b in 0..k {
                    hessian[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        if grad.norm() <= solver.tol {
            converged = true;
            break;
        }
        let chol = Cholesky::new(hessian.clone()).ok_or_else(|| {
            Error::Fit("rank-deficient design matrix (singular information)".into())
        })?;
        let step = chol.solve(&grad);
        theta += step;
        if theta.iter().any(|t| !t.is_finite() || t.abs() > 50.0) {
            return Err(Error::Fit(
                "diverging coefficients: separation or infinite MPLE".into(),
            ));
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {} iterations",
            solver.max_iter
        )));
    }

    // Recompute the information and the pseudo-likelihood at the optimum.
    let mut log_pl = 0.0;
    hessian.fill(0.0);
    for (x, count, present) in &design {
        let eta: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        let mu = 1.0 / (1.0 + (-eta).exp());
        let mu = mu.clamp(1e-12, 1.0 - 1e-12);
        log_pl += present * mu.ln() + (count - present) * (1.0 - mu).ln();
        let w = count * mu * (1.0 - mu);
        for a in 0..k {
            for b in 0..k {
                hessian[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    let covariance = Cholesky::new(hessian)
        .ok_or_else(|| Error::Fit("rank-deficient design at the optimum".into()))?
        .inverse();

    let term_fits = terms
        .iter()
        .enumerate()
        .map(|(t, term)| {
            let se = covariance[(t, t)].max(0.0).sqrt();
            let z = if se > 0.0 { theta[t] / se } else { f64::INFINITY };
            let p = normal_two_sided_p(z);
            TermFit {
                term: term.clone(),
                theta: theta[t],
                se,
                z,
                p_value: p,
                stars: stars(p),
            }
        })
        .collect();

    Ok(FitResult {
        terms: term_fits,
        log_pseudo_likelihood: log_pl,
        aic: 2.0 * k as f64 - 2.0 * log_pl,
        bic: (n_dyads as f64).ln() * k as f64 - 2.0 * log_pl,
        n_dyads,
        converged,
        iterations,
    })
}
