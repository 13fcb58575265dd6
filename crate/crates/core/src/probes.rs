//! Named estimate probes: each sweeps a set of fields and reports the
//! extremal ratio of one dyadic or paraproduct inequality.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ledger::LedgerRow;
use crate::littlewood_paley::{block, check_bernstein, equivalence_ratio, lip_block_check, top_shell};
use crate::paraproduct::{
    adjoint_defect_ratio, commutator_ratio, mapping_ratio, rayleigh_quotient, remainder_ratio,
};
use crate::spectral::{band_limited_random, Field, GridSpec};

/// Inputs shared by every probe in one sweep.
#[derive(Debug, Clone, Copy)]
pub struct ProbeInput<'a> {
    pub coefficient: &'a Field,
    pub order: u32,
    pub theta: f64,
    pub fields: &'a [Field],
}

pub trait EstimateProbe: Send + Sync {
    fn id(&self) -> &'static str;
    /// Extremal ratio over `input.fields`.
    fn measure(&self, input: &ProbeInput) -> Result<f64>;
    /// Whether the result depends on `theta` (otherwise it is recorded at 0).
    fn uses_theta(&self) -> bool {
        false
    }
    /// Whether the result depends on the paraproduct order.
    fn uses_order(&self) -> bool {
        false
    }
}

fn sup<F>(fields: &[Field], f: F) -> Result<f64>
where
    F: Fn(&Field) -> Result<f64> + Sync + Send,
{
    if fields.is_empty() {
        return Err(Error::Empty("probe fields"));
    }
    let v: Vec<f64> = fields.par_iter().map(f).collect::<Result<_>>()?;
    Ok(v.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Worst of `gradient / upper` and `lower / gradient` over all nonzero blocks
/// with `nu >= 1`; at most 1 exactly when every sandwich holds.
struct Bernstein;
impl EstimateProbe for Bernstein {
    fn id(&self) -> &'static str {
        "bernstein"
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| {
            let mut worst: f64 = 0.0;
            for nu in 1..=top_shell(u) {
                let c = check_bernstein(&block(nu, u), nu);
                if !c.zero_block && c.gradient > 0.0 {
                    worst = worst.max(c.gradient / c.upper).max(c.lower / c.gradient);
                }
            }
            Ok(worst)
        })
    }
}

/// `max(r, 1/r)` for the block-sum to multiplier norm ratio `r`.
struct SobolevEquivalence;
impl EstimateProbe for SobolevEquivalence {
    fn id(&self) -> &'static str {
        "sobolev-equivalence"
    }
    fn uses_theta(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| {
            let r = equivalence_ratio(u, input.theta);
            Ok(r.max(1.0 / r))
        })
    }
}

/// `max(sup_k 2^k ||Delta_k a||_inf, sup_k ||grad S_k a||_inf) / ||a||_Lip`,
/// taking each sweep field as a coefficient.
struct LipCharacterization;
impl EstimateProbe for LipCharacterization {
    fn id(&self) -> &'static str {
        "lip-characterization"
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| Ok(lip_block_check(u).ratio()))
    }
}

struct Mapping;
impl EstimateProbe for Mapping {
    fn id(&self) -> &'static str {
        "paraproduct-mapping"
    }
    fn uses_theta(&self) -> bool {
        true
    }
    fn uses_order(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| mapping_ratio(input.coefficient, input.order, u, input.theta))
    }
}

/// Smallest Rayleigh quotient `<T u | u> / ||u||^2`; compared against `kappa / 2`.
struct Positivity;
impl EstimateProbe for Positivity {
    fn id(&self) -> &'static str {
        "paraproduct-positivity"
    }
    fn uses_order(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        let neg = sup(input.fields, |u| Ok(-rayleigh_quotient(input.coefficient, input.order, u)?))?;
        Ok(-neg)
    }
}

struct AdjointDefect;
impl EstimateProbe for AdjointDefect {
    fn id(&self) -> &'static str {
        "adjoint-defect"
    }
    fn uses_order(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| adjoint_defect_ratio(input.coefficient, input.order, u))
    }
}

struct Commutator;
impl EstimateProbe for Commutator {
    fn id(&self) -> &'static str {
        "commutator"
    }
    fn uses_theta(&self) -> bool {
        true
    }
    fn uses_order(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| commutator_ratio(input.coefficient, input.order, u, input.theta))
    }
}

/// `||au - T u||_{H^theta} / (||a||_Lip ||u||_{H^(theta-1)})`.
struct Remainder;
impl EstimateProbe for Remainder {
    fn id(&self) -> &'static str {
        "remainder"
    }
    fn uses_theta(&self) -> bool {
        true
    }
    fn uses_order(&self) -> bool {
        true
    }
    fn measure(&self, input: &ProbeInput) -> Result<f64> {
        sup(input.fields, |u| remainder_ratio(input.coefficient, input.order, u, input.theta))
    }
}

pub struct ProbeRegistry {
    probes: BTreeMap<&'static str, Box<dyn EstimateProbe>>,
}

impl ProbeRegistry {
    pub fn empty() -> Self {
        Self { probes: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Bernstein));
        r.register(Box::new(SobolevEquivalence));
        r.register(Box::new(LipCharacterization));
        r.register(Box::new(Mapping));
        r.register(Box::new(Positivity));
        r.register(Box::new(AdjointDefect));
        r.register(Box::new(Commutator));
        r.register(Box::new(Remainder));
        r
    }

    pub fn register(&mut self, probe: Box<dyn EstimateProbe>) {
        self.probes.insert(probe.id(), probe);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.probes.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn EstimateProbe> {
        self.probes
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy { kind: "estimate", name: name.to_string() })
    }
}

/// `count` real unit fields with random dyadic bands below the grid's top
/// representable shell. Field `i` depends only on `(seed, i)`, so a sweep of
/// `2n` fields extends the sweep of `n`.
pub fn sweep_fields(grid: GridSpec, count: usize, seed: u64) -> Result<Vec<Field>> {
    let top = (grid.nyquist().log2().ceil() as i32 - 1).max(1);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(i as u64);
            let lo = (s % top as u64) as i32;
            let hi = lo + ((s >> 17) % (top - lo) as u64) as i32;
            band_limited_random(grid, lo, hi, s)
        })
        .collect()
}

/// Run `probe` once per requested theta and emit ledger rows.
pub fn run_probe(
    probe: &dyn EstimateProbe,
    coefficient: &Field,
    order: u32,
    thetas: &[f64],
    fields: &[Field],
    seed: u64,
) -> Result<Vec<LedgerRow>> {
    let thetas: Vec<f64> = if probe.uses_theta() { thetas.to_vec() } else { vec![0.0] };
    thetas
        .into_iter()
        .map(|theta| {
            let input = ProbeInput { coefficient, order, theta, fields };
            Ok(LedgerRow {
                estimate_id: probe.id().to_string(),
                theta,
                m: if probe.uses_order() { order } else { 0 },
                measured_constant: probe.measure(&input)?,
                sweep_size: fields.len(),
                seed,
            })
        })
        .collect()
}
