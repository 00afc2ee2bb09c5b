//! Multi-index arithmetic and enumeration of the combinatorial index sets
//! that drive the expansion formulas.
//!
//! A multi-index is a nonnegative integer vector of length `d`. The central
//! enumeration is over assignments `(i_r, ..., i_s)` of multi-indices
//! satisfying the two vector constraints `sum_v v*i_v = l` and
//! `sum_v i_v = i`.

use crate::error::{EngineError, Result};

/// Nonnegative integer vector indexing partial derivatives and moments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// Unit multi-index e_j (0-based coordinate).
    pub fn unit(d: usize, j: usize) -> Self {
        let mut v = vec![0; d];
        v[j] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// |i| = sum of entries.
    pub fn norm(&self) -> usize {
        self.0.iter().sum()
    }

    /// i! = product of entrywise factorials. Errors beyond |i| = 6 per entry
    /// range guard (only small orders are ever needed).
    pub fn factorial(&self) -> Result<u64> {
        let mut acc: u64 = 1;
        for &e in &self.0 {
            if e > 20 {
                return Err(EngineError::Overflow {
                    context: "multi-index factorial",
                });
            }
            let f: u64 = (1..=e as u64).product();
            acc = acc
                .checked_mul(f)
                .ok_or(EngineError::Overflow {
                    context: "multi-index factorial",
                })?;
        }
        Ok(acc)
    }

    pub fn factorial_f64(&self) -> f64 {
        self.factorial().expect("factorial within range") as f64
    }

    /// Componentwise sum.
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Componentwise difference; partial operation, errors when any
    /// component would go negative (the convention that `j - i` implies
    /// `j >= i`).
    pub fn sub(&self, other: &MultiIndex) -> Result<MultiIndex> {
        let mut out = Vec::with_capacity(self.0.len());
        for (k, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            if a < b {
                return Err(EngineError::NegativeIndex { component: k });
            }
            out.push(a - b);
        }
        Ok(MultiIndex(out))
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn scale(&self, c: usize) -> MultiIndex {
        MultiIndex(self.0.iter().map(|e| e * c).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Ordered list of multi-indices `(i_r, ..., i_s)` indexed by positions r..s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexAssignment {
    /// First position r.
    pub start: usize,
    /// terms[v - start] is the multi-index at position v.
    pub terms: Vec<MultiIndex>,
}

impl IndexAssignment {
    pub fn term(&self, position: usize) -> &MultiIndex {
        &self.terms[position - self.start]
    }
}

/// `<v^i> = prod_j v_j^{i_j}` with the 0^0 = 1 convention.
pub fn hadamard_power_product(v: &[f64], i: &MultiIndex) -> Result<f64> {
    if v.len() != i.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: i.dim(),
            got: v.len(),
        });
    }
    let mut acc = 1.0;
    for (x, &e) in v.iter().zip(&i.0) {
        // 0^0 = 1: powi handles this.
        acc *= x.powi(e as i32);
    }
    Ok(acc)
}

/// All multi-indices of dimension `d` with |i| = `norm`, lexicographic order.
pub fn multi_indices_of_norm(d: usize, norm: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; d];
    fn rec(cur: &mut Vec<usize>, pos: usize, left: usize, out: &mut Vec<MultiIndex>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(MultiIndex(cur.clone()));
            cur[pos] = 0;
            return;
        }
        for take in 0..=left {
            cur[pos] = take;
            rec(cur, pos + 1, left - take, out);
        }
        cur[pos] = 0;
    }
    if d == 0 {
        if norm == 0 {
            out.push(MultiIndex(vec![]));
        }
        return out;
    }
    rec(&mut cur, 0, norm, &mut out);
    out.sort();
    out
}

/// The set (r, s, l, i): every assignment (i_r, ..., i_s) of multi-indices
/// with `sum_{v=r}^{s} v*i_v = l` and `sum_v i_v = i`, in lexicographic order
/// on concatenated entries. Empty when unsatisfiable.
pub fn enumerate_rsli(
    r: usize,
    s: usize,
    l: &MultiIndex,
    i: &MultiIndex,
) -> Vec<IndexAssignment> {
    assert!(r <= s, "require r <= s");
    assert_eq!(l.dim(), i.dim(), "l and i must share dimension");
    let d = i.dim();
    let mut out = Vec::new();
    let mut terms: Vec<MultiIndex> = Vec::with_capacity(s - r + 1);

    // Recursive composition: at position v we pick i_v componentwise within
    // the remaining budgets; the position-weighted budget must also hold.
    fn rec(
        v: usize,
        s: usize,
        rem_l: &MultiIndex,
        rem_i: &MultiIndex,
        d: usize,
        terms: &mut Vec<MultiIndex>,
        out: &mut Vec<IndexAssignment>,
        start: usize,
    ) {
        if v > s {
            if rem_l.is_zero() && rem_i.is_zero() {
                out.push(IndexAssignment {
                    start,
                    terms: terms.clone(),
                });
            }
            return;
        }
        // Candidate i_v: each component bounded by rem_i, and v*i_v <= rem_l.
        let mut cand = vec![0usize; d];
        fn comp_rec(
            pos: usize,
            v: usize,
            s: usize,
            cand: &mut Vec<usize>,
            rem_l: &MultiIndex,
            rem_i: &MultiIndex,
            d: usize,
            terms: &mut Vec<MultiIndex>,
            out: &mut Vec<IndexAssignment>,
            start: usize,
        ) {
            if pos == d {
                let iv = MultiIndex(cand.clone());
                let new_i = rem_i.sub(&iv).expect("bounded by construction");
                let weighted = iv.scale(v);
                match rem_l.sub(&weighted) {
                    Ok(new_l) => {
                        terms.push(iv);
                        rec(v + 1, s, &new_l, &new_i, d, terms, out, start);
                        terms.pop();
                    }
                    Err(_) => {}
                }
                return;
            }
            let max_here = if v == 0 {
                rem_i.0[pos]
            } else {
                rem_i.0[pos].min(rem_l.0[pos] / v)
            };
            for take in 0..=max_here {
                cand[pos] = take;
                comp_rec(pos + 1, v, s, cand, rem_l, rem_i, d, terms, out, start);
            }
            cand[pos] = 0;
        }
        comp_rec(0, v, s, &mut cand, rem_l, rem_i, d, terms, out, start);
    }

    rec(r, s, l, i, d, &mut terms, &mut out, r);
    out.sort_by(|a, b| {
        let flat_a: Vec<usize> = a.terms.iter().flat_map(|m| m.0.iter().copied()).collect();
        let flat_b: Vec<usize> = b.terms.iter().flat_map(|m| m.0.iter().copied()).collect();
        flat_a.cmp(&flat_b)
    });
    out
}

/// Scalar index set I_1(a, r, m, l): tuples (i_a, ..., i_r) of nonnegative
/// integers with `sum_v v*i_v = m` and `sum_v i_v = l`.
pub fn enumerate_i1(a: usize, r: usize, m: usize, l: usize) -> Vec<Vec<usize>> {
    assert!(a <= r, "require a <= r");
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r - a + 1);
    fn rec(
        v: usize,
        r: usize,
        rem_m: usize,
        rem_l: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if v > r {
            if rem_m == 0 && rem_l == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let max_here = if v == 0 { rem_l } else { rem_l.min(rem_m / v) };
        for take in 0..=max_here {
            cur.push(take);
            rec(v + 1, r, rem_m - v * take, rem_l - take, cur, out);
            cur.pop();
        }
    }
    rec(a, r, m, l, &mut cur, &mut out);
    out.sort();
    out
}
