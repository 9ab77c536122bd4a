//! Dense potential tables over sets of discrete variables.
//!
//! A table stores one non-negative value per joint configuration of its
//! domain, flat, with the first domain variable varying slowest and the last
//! varying fastest. Values are plain (not log) 64-bit floats; propagation
//! normalizes at its boundaries, which keeps desk-scale computations away
//! from underflow while leaving the division in the smoothing update simple.
//!
//! The canonical domain order is ascending vertex id; comparisons reorder
//! both operands first, so operations are free to keep whatever order falls
//! out of the computation.

use crate::model::{Finding, SliceVar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("cardinality conflict for {var}: {left} vs {right}")]
    CardinalityConflict { var: SliceVar, left: usize, right: usize },
    #[error("variable {0} is not in the table's domain")]
    UnknownVariable(SliceVar),
    #[error("division by zero at configuration {index} ({numerator} / 0)")]
    DivisionByZero { index: usize, numerator: f64 },
    #[error("table has zero total mass (evidence contradicts the model)")]
    ZeroMass,
    #[error("finding has {actual} weights but {var} has {expected} states")]
    FindingLengthMismatch { var: SliceVar, expected: usize, actual: usize },
    #[error("hard finding state {state} out of range for {var} ({card} states)")]
    FindingStateOutOfRange { var: SliceVar, state: usize, card: usize },
    #[error("finding for {0} has no positive weight")]
    FindingAllZero(SliceVar),
    #[error("finding for {var} has a negative weight at state {state}")]
    FindingNegative { var: SliceVar, state: usize },
}

/// Dense real-valued table over an ordered set of discrete variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    domain: Vec<(SliceVar, usize)>,
    values: Vec<f64>,
}

fn size_of(domain: &[(SliceVar, usize)]) -> usize {
    domain.iter().map(|&(_, c)| c).product()
}

/// Strides for a slowest-first flat layout.
fn strides(domain: &[(SliceVar, usize)]) -> Vec<usize> {
    let mut out = vec![1usize; domain.len()];
    for i in (0..domain.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * domain[i + 1].1;
    }
    out
}

impl PotentialTable {
    /// Builds a table from an explicit domain and flat values.
    ///
    /// Panics if the value count does not match the domain size; this is a
    /// construction-site programming error, not a data condition.
    pub fn new(domain: Vec<(SliceVar, usize)>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), size_of(&domain), "table length mismatch");
        PotentialTable { domain, values }
    }

    /// All-ones table over `domain`.
    pub fn unity(domain: Vec<(SliceVar, usize)>) -> Self {
        let n = size_of(&domain);
        PotentialTable { domain, values: vec![1.0; n] }
    }

    /// Zero-variable table holding a single scalar.
    pub fn scalar(value: f64) -> Self {
        PotentialTable { domain: Vec::new(), values: vec![value] }
    }

    pub fn domain(&self) -> &[(SliceVar, usize)] {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn domain_vars(&self) -> impl Iterator<Item = SliceVar> + '_ {
        self.domain.iter().map(|&(v, _)| v)
    }

    pub fn contains_var(&self, v: SliceVar) -> bool {
        self.domain.iter().any(|&(x, _)| x == v)
    }

    pub fn cardinality_of(&self, v: SliceVar) -> Option<usize> {
        self.domain.iter().find(|&&(x, _)| x == v).map(|&(_, c)| c)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Value at an explicit per-domain-variable state assignment.
    pub fn value_at(&self, states: &[usize]) -> f64 {
        assert_eq!(states.len(), self.domain.len());
        let st = strides(&self.domain);
        let mut idx = 0;
        for (i, &s) in states.iter().enumerate() {
            debug_assert!(s < self.domain[i].1);
            idx += s * st[i];
        }
        self.values[idx]
    }

    /// Pointwise product. The result's domain is this table's domain followed
    /// by the other's new variables.
    pub fn multiply(&self, other: &PotentialTable) -> Result<PotentialTable, PotentialError> {
        let mut domain = self.domain.clone();
        for &(v, c) in &other.domain {
            match self.cardinality_of(v) {
                Some(ca) if ca != c => {
                    return Err(PotentialError::CardinalityConflict { var: v, left: ca, right: c })
                }
                Some(_) => {}
                None => domain.push((v, c)),
            }
        }

        let a_strides = aligned_strides(&domain, &self.domain);
        let b_strides = aligned_strides(&domain, &other.domain);
        let n = size_of(&domain);
        let mut values = vec![0.0; n];
        let mut odo = Odometer::new(&domain, &[&a_strides, &b_strides]);
        for slot in values.iter_mut() {
            let [ai, bi] = odo.positions();
            *slot = self.values[ai] * other.values[bi];
            odo.step();
        }
        Ok(PotentialTable { domain, values })
    }

    /// Sums out every variable not in `keep`; total mass is preserved.
    pub fn marginalize(&self, keep: &std::collections::BTreeSet<SliceVar>) -> Result<PotentialTable, PotentialError> {
        for &v in keep {
            if !self.contains_var(v) {
                return Err(PotentialError::UnknownVariable(v));
            }
        }
        let out_domain: Vec<(SliceVar, usize)> =
            self.domain.iter().copied().filter(|&(v, _)| keep.contains(&v)).collect();
        let out_strides = aligned_strides(&self.domain, &out_domain);
        let mut values = vec![0.0; size_of(&out_domain)];
        let mut odo = Odometer::new(&self.domain, &[&out_strides]);
        for &x in &self.values {
            let [oi] = odo.positions();
            values[oi] += x;
            odo.step();
        }
        Ok(PotentialTable { domain: out_domain, values })
    }

    /// Pointwise quotient with the convention `0 / 0 = 0`. A positive value
    /// divided by zero signals an inconsistent tree and is an error.
    pub fn divide(&self, other: &PotentialTable) -> Result<PotentialTable, PotentialError> {
        for &(v, c) in &other.domain {
            match self.cardinality_of(v) {
                None => return Err(PotentialError::UnknownVariable(v)),
                Some(ca) if ca != c => {
                    return Err(PotentialError::CardinalityConflict { var: v, left: ca, right: c })
                }
                _ => {}
            }
        }
        let b_strides = aligned_strides(&self.domain, &other.domain);
        let mut values = vec![0.0; self.values.len()];
        let mut odo = Odometer::new(&self.domain, &[&b_strides]);
        for (i, slot) in values.iter_mut().enumerate() {
            let [bi] = odo.positions();
            let num = self.values[i];
            let den = other.values[bi];
            *slot = if den == 0.0 {
                if num == 0.0 {
                    0.0
                } else {
                    return Err(PotentialError::DivisionByZero { index: i, numerator: num });
                }
            } else {
                num / den
            };
            odo.step();
        }
        Ok(PotentialTable { domain: self.domain.clone(), values })
    }

    /// Scales the table to total mass one and returns the original mass.
    pub fn normalize(&self) -> Result<(PotentialTable, f64), PotentialError> {
        let mass = self.total_mass();
        let usable = mass.is_finite() && mass > 0.0;
        if !usable {
            return Err(PotentialError::ZeroMass);
        }
        let values = self.values.iter().map(|&x| x / mass).collect();
        Ok((PotentialTable { domain: self.domain.clone(), values }, mass))
    }

    /// Applies an evidence finding on `var`: a hard finding zeroes the
    /// inconsistent configurations, a likelihood finding reweights them.
    pub fn reduce_by_evidence(
        &self,
        var: SliceVar,
        finding: &Finding,
    ) -> Result<PotentialTable, PotentialError> {
        let card = self
            .cardinality_of(var)
            .ok_or(PotentialError::UnknownVariable(var))?;
        let weights: Vec<f64> = match finding {
            Finding::Hard(s) => {
                if *s >= card {
                    return Err(PotentialError::FindingStateOutOfRange {
                        var,
                        state: *s,
                        card,
                    });
                }
                (0..card).map(|i| if i == *s { 1.0 } else { 0.0 }).collect()
            }
            Finding::Likelihood(w) => {
                if w.len() != card {
                    return Err(PotentialError::FindingLengthMismatch {
                        var,
                        expected: card,
                        actual: w.len(),
                    });
                }
                if let Some(state) = w.iter().position(|&x| x < 0.0) {
                    return Err(PotentialError::FindingNegative { var, state });
                }
                if !w.iter().any(|&x| x > 0.0) {
                    return Err(PotentialError::FindingAllZero(var));
                }
                w.clone()
            }
        };
        let pos = self.domain.iter().position(|&(v, _)| v == var).unwrap();
        let st = strides(&self.domain);
        let mut values = self.values.clone();
        for (i, slot) in values.iter_mut().enumerate() {
            let state = (i / st[pos]) % card;
            *slot *= weights[state];
        }
        Ok(PotentialTable { domain: self.domain.clone(), values })
    }

    /// Same table with the domain sorted into canonical ascending order.
    pub fn canonical(&self) -> PotentialTable {
        let mut order: Vec<usize> = (0..self.domain.len()).collect();
        order.sort_by_key(|&i| self.domain[i].0);
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return self.clone();
        }
        let out_domain: Vec<(SliceVar, usize)> =
            order.iter().map(|&i| self.domain[i]).collect();
        let in_strides_full = strides(&self.domain);
        let in_strides: Vec<usize> = order.iter().map(|&i| in_strides_full[i]).collect();
        let mut values = vec![0.0; self.values.len()];
        let mut odo = Odometer::new(&out_domain, &[&in_strides]);
        for slot in values.iter_mut() {
            let [ii] = odo.positions();
            *slot = self.values[ii];
            odo.step();
        }
        PotentialTable { domain: out_domain, values }
    }

    /// True iff both tables cover the same variables and agree pointwise
    /// within `tol` after canonical reordering.
    pub fn approx_eq(&self, other: &PotentialTable, tol: f64) -> bool {
        let a = self.canonical();
        let b = other.canonical();
        if a.domain != b.domain {
            return false;
        }
        a.values
            .iter()
            .zip(&b.values)
            .all(|(&x, &y)| (x - y).abs() <= tol)
    }
}

/// For each position of `base`, the stride of that variable inside `sub`
/// (zero when `sub` does not contain it).
fn aligned_strides(base: &[(SliceVar, usize)], sub: &[(SliceVar, usize)]) -> Vec<usize> {
    let sub_strides = strides(sub);
    base.iter()
        .map(|&(v, _)| {
            sub.iter()
                .position(|&(w, _)| w == v)
                .map(|p| sub_strides[p])
                .unwrap_or(0)
        })
        .collect()
}

/// Steps through a slowest-first flat layout while tracking the matching
/// linear positions inside any number of aligned sub-tables.
struct Odometer {
    cards: Vec<usize>,
    digits: Vec<usize>,
    strides: Vec<Vec<usize>>,
    positions: Vec<usize>,
}

impl Odometer {
    fn new(domain: &[(SliceVar, usize)], aligned: &[&Vec<usize>]) -> Self {
        Odometer {
            cards: domain.iter().map(|&(_, c)| c).collect(),
            digits: vec![0; domain.len()],
            strides: aligned.iter().map(|s| (*s).clone()).collect(),
            positions: vec![0; aligned.len()],
        }
    }

    fn positions<const N: usize>(&self) -> [usize; N] {
        let mut out = [0; N];
        out.copy_from_slice(&self.positions);
        out
    }

    fn step(&mut self) {
        for d in (0..self.digits.len()).rev() {
            self.digits[d] += 1;
            for (k, st) in self.strides.iter().enumerate() {
                self.positions[k] += st[d];
            }
            if self.digits[d] == self.cards[d] {
                self.digits[d] = 0;
                for (k, st) in self.strides.iter().enumerate() {
                    self.positions[k] -= st[d] * self.cards[d];
                }
            } else {
                return;
            }
        }
    }
}
