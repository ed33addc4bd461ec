//! Source-separation quality metrics.
//!
//! SDR/SIR follow the bss_eval decomposition: the estimate is split by
//! orthogonal projection into a target component, interference from the
//! other references, and an artifact residual. With `filter_len > 1` the
//! projections are onto time-delayed copies of the references (allowed
//! distortion filters), otherwise onto the references themselves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Upper bound reported for SDR/SIR.
pub const SDR_CAP_DB: f64 = 60.0;
/// References whose Gram matrix is worse conditioned than this are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Largest problem solved by exhaustive assignment search.
pub const EXHAUSTIVE_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
}

impl Decomposition {
    /// Sum of the three components; equals the (padded) estimate.
    pub fn reassemble(&self) -> Vec<f64> {
        self.s_target
            .iter()
            .zip(&self.e_interf)
            .zip(&self.e_artif)
            .map(|((s, i), a)| s + i + a)
            .collect()
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        f64::NEG_INFINITY
    } else if den == 0.0 {
        SDR_CAP_DB
    } else {
        (10.0 * (num / den).log10()).min(SDR_CAP_DB)
    }
}

pub fn sdr(d: &Decomposition) -> f64 {
    let err: Vec<f64> = d.e_interf.iter().zip(&d.e_artif).map(|(i, a)| i + a).collect();
    ratio_db(energy(&d.s_target), energy(&err))
}

pub fn sir(d: &Decomposition) -> f64 {
    ratio_db(energy(&d.s_target), energy(&d.e_interf))
}

/// Signal-to-artifact ratio; computed for completeness, not reported.
pub fn sar(d: &Decomposition) -> f64 {
    let sig: Vec<f64> = d.s_target.iter().zip(&d.e_interf).map(|(s, i)| s + i).collect();
    ratio_db(energy(&sig), energy(&d.e_artif))
}

/// Σ_m a[m] b[m + lag], zero outside both signals.
fn lagged_dot(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let (a0, b0) = if lag >= 0 { (0, lag as usize) } else { ((-lag) as usize, 0) };
    if a0 >= a.len() || b0 >= b.len() {
        return 0.0;
    }
    a[a0..].iter().zip(&b[b0..]).map(|(x, y)| x * y).sum()
}

fn gram_condition(refs: &[&[f64]]) -> f64 {
    let n = refs.len();
    let g = DMatrix::from_fn(n, n, |i, j| lagged_dot(refs[i], refs[j], 0));
    let eig = g.symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Least-squares projection of `target` (length `len + taps - 1`) onto the
/// delayed copies `r[n - a]`, `a < taps`, of every signal in `basis`.
fn project(target: &[f64], basis: &[&[f64]], taps: usize) -> Result<Vec<f64>> {
    let dim = basis.len() * taps;
    let gram = DMatrix::from_fn(dim, dim, |p, q| {
        let (j, a) = (p / taps, p % taps);
        let (i, b) = (q / taps, q % taps);
        lagged_dot(basis[j], basis[i], a as isize - b as isize)
    });
    let rhs = DVector::from_fn(dim, |p, _| {
        let (j, a) = (p / taps, p % taps);
        lagged_dot(basis[j], target, a as isize)
    });
    let coeffs = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or(Error::DegenerateReferences {
                condition: f64::INFINITY,
            })?,
    };
    let mut out = vec![0.0; target.len()];
    for (p, c) in coeffs.iter().enumerate() {
        let (j, a) = (p / taps, p % taps);
        for (m, v) in basis[j].iter().enumerate() {
            out[m + a] += c * v;
        }
    }
    Ok(out)
}

/// Projection-based decomposition (no distortion filters).
pub fn decompose(
    estimate: &Waveform,
    references: &[Waveform],
    target_index: usize,
) -> Result<Decomposition> {
    decompose_with_filter(estimate, references, target_index, 0)
}

/// Decomposition allowing `filter_len`-tap distortion filters; `0` or `1`
/// means plain orthogonal projection. Components have length
/// `len + filter_len - 1`.
pub fn decompose_with_filter(
    estimate: &Waveform,
    references: &[Waveform],
    target_index: usize,
    filter_len: usize,
) -> Result<Decomposition> {
    if references.is_empty() {
        return Err(Error::invalid("at least one reference is required"));
    }
    if target_index >= references.len() {
        return Err(Error::invalid(format!(
            "target index {target_index} out of range for {} references",
            references.len()
        )));
    }
    let n = estimate.len();
    if references.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("estimate and references differ in length"));
    }
    let refs: Vec<&[f64]> = references.iter().map(|r| r.samples()).collect();
    let condition = gram_condition(&refs);
    if !(condition < MAX_GRAM_CONDITION) {
        return Err(Error::DegenerateReferences { condition });
    }
    let taps = filter_len.max(1);
    let mut est = estimate.samples().to_vec();
    est.resize(n + taps - 1, 0.0);

    let s_target = project(&est, &refs[target_index..=target_index], taps)?;
    let all = project(&est, &refs, taps)?;
    let e_interf = all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
    let e_artif = est.iter().zip(&all).map(|(e, p)| e - p).collect();
    Ok(Decomposition {
        s_target,
        e_interf,
        e_artif,
    })
}

/// Scores for one (estimate, reference) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub estimate: usize,
    pub reference: usize,
    pub sdr: f64,
    pub sir: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestMatch {
    /// `(estimate, reference)` pairs ordered by estimate index.
    pub assignment: Vec<(usize, usize)>,
    pub pairs: Vec<PairScore>,
}

/// Value used in place of −∞ while searching for the best assignment.
const ASSIGNMENT_FLOOR_DB: f64 = -1000.0;

fn assignment_weight(sdr: f64) -> f64 {
    if sdr.is_finite() {
        sdr
    } else {
        ASSIGNMENT_FLOOR_DB
    }
}

/// Exhaustive search over all one-to-one assignments between rows and
/// columns of `score` (rows = estimates). The first maximum in lexicographic
/// order of chosen estimates wins, so ties favor low estimate indices.
pub fn exhaustive_assignment(score: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n_est = score.len();
    let n_ref = score.first().map_or(0, Vec::len);
    let k = n_est.min(n_ref);
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    for ests in itertools::Itertools::combinations(0..n_est, k) {
        for refs in itertools::Itertools::permutations(0..n_ref, k) {
            let total: f64 = ests.iter().zip(&refs).map(|(&e, &r)| score[e][r]).sum();
            if best.as_ref().map_or(true, |(b, _)| total > *b) {
                best = Some((total, ests.iter().copied().zip(refs).collect()));
            }
        }
    }
    best.map(|(_, a)| a).unwrap_or_default()
}

/// Maximum-weight assignment via the Hungarian algorithm (rows ≤ cols after
/// transposition). Used above the exhaustive limit.
pub fn hungarian_assignment(score: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n_est = score.len();
    let n_ref = score.first().map_or(0, Vec::len);
    let transpose = n_est > n_ref;
    let (rows, cols) = if transpose { (n_ref, n_est) } else { (n_est, n_ref) };
    let cost = |i: usize, j: usize| {
        -if transpose { score[j][i] } else { score[i][j] }
    };
    // 1-indexed potentials formulation.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out: Vec<(usize, usize)> = (1..=cols)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            let (r, c) = (p[j] - 1, j - 1);
            if transpose {
                (c, r)
            } else {
                (r, c)
            }
        })
        .collect();
    out.sort_unstable();
    out
}

/// Matches estimates to references by maximizing total SDR. Counts may
/// differ; surplus estimates or references stay unassigned.
pub fn best_match_permutation(
    estimates: &[Waveform],
    references: &[Waveform],
) -> Result<BestMatch> {
    if estimates.is_empty() || references.is_empty() {
        return Err(Error::invalid("estimates and references must be non-empty"));
    }
    let mut sdrs = vec![vec![0.0; references.len()]; estimates.len()];
    let mut sirs = sdrs.clone();
    for (e, est) in estimates.iter().enumerate() {
        for r in 0..references.len() {
            let d = decompose(est, references, r)?;
            sdrs[e][r] = sdr(&d);
            sirs[e][r] = sir(&d);
        }
    }
    let weights: Vec<Vec<f64>> = sdrs
        .iter()
        .map(|row| row.iter().map(|&s| assignment_weight(s)).collect())
        .collect();
    let assignment = if estimates.len().max(references.len()) <= EXHAUSTIVE_LIMIT {
        exhaustive_assignment(&weights)
    } else {
        hungarian_assignment(&weights)
    };
    let pairs = assignment
        .iter()
        .map(|&(e, r)| PairScore {
            estimate: e,
            reference: r,
            sdr: sdrs[e][r],
            sir: sirs[e][r],
        })
        .collect();
    Ok(BestMatch { assignment, pairs })
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Option<f64>>::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

/// Per-case scores in an evaluation report. `null` in JSON marks −∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub assignment: Vec<[usize; 2]>,
    #[serde(with = "neg_inf_as_null")]
    pub sdr: Vec<f64>,
    #[serde(with = "neg_inf_as_null")]
    pub sir: Vec<f64>,
}

impl From<&BestMatch> for CaseResult {
    fn from(m: &BestMatch) -> Self {
        Self {
            assignment: m.assignment.iter().map(|&(e, r)| [e, r]).collect(),
            sdr: m.pairs.iter().map(|p| p.sdr).collect(),
            sir: m.pairs.iter().map(|p| p.sir).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    pub mean_sdr: f64,
    pub std_sdr: f64,
    pub mean_sir: f64,
    pub std_sir: f64,
    /// Pairs dropped from the aggregates because their SDR was −∞.
    pub excluded_count: usize,
}

/// Population mean and standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Aggregates already-scored cases.
    pub fn from_cases(cases: Vec<CaseResult>) -> Self {
        let mut sdrs = Vec::new();
        let mut sirs = Vec::new();
        let mut excluded_count = 0;
        for c in &cases {
            for (&d, &i) in c.sdr.iter().zip(&c.sir) {
                if d == f64::NEG_INFINITY {
                    excluded_count += 1;
                } else {
                    sdrs.push(d);
                    sirs.push(i);
                }
            }
        }
        let (mean_sdr, std_sdr) = mean_std(&sdrs);
        let (mean_sir, std_sir) = mean_std(&sirs);
        Self {
            cases,
            mean_sdr,
            std_sdr,
            mean_sir,
            std_sir,
            excluded_count,
        }
    }

    pub fn csv_summary(&self) -> String {
        let pairs: usize = self.cases.iter().map(|c| c.sdr.len()).sum();
        format!(
            "mean_sdr,std_sdr,mean_sir,std_sir,pairs,excluded\n{:.4},{:.4},{:.4},{:.4},{},{}\n",
            self.mean_sdr, self.std_sdr, self.mean_sir, self.std_sir, pairs, self.excluded_count
        )
    }
}

/// Best-match scoring of every `(estimates, references)` case, aggregated to
/// mean ± population std over all assigned pairs.
pub fn evaluate_batch(cases: &[(Vec<Waveform>, Vec<Waveform>)]) -> Result<EvalReport> {
    let scored = cases
        .iter()
        .map(|(est, refs)| best_match_permutation(est, refs).map(|m| CaseResult::from(&m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_cases(scored))
}
