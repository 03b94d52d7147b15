//! The statistical decision flow: Shapiro-Wilk normality gate, one-way
//! within-subject ANOVA with sphericity corrections, Friedman fallback,
//! effect sizes, large-effect screening, and Sidak-corrected post hocs.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};
use thiserror::Error;

/// Large-effect threshold for partial eta squared.
pub const ETA_SQ_LARGE: f64 = 0.25;
/// Large-effect threshold for Kendall's W.
pub const KENDALL_W_LARGE: f64 = 0.5;
/// Mauchly's test significance level.
pub const MAUCHLY_ALPHA: f64 = 0.05;
/// Greenhouse-Geisser epsilon above which Huynh-Feldt is used instead.
pub const EPSILON_SWITCH: f64 = 0.75;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample size {found} outside supported range [{min}, {max}]")]
    SampleSize { found: usize, min: usize, max: usize },
    #[error("invalid matrix: {0}")]
    BadShape(String),
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),
    #[error("samples must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Participants x conditions table of one metric (participant-level
/// condition means). No missing cells.
#[derive(Debug, Clone)]
pub struct ConditionMatrix {
    data: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl ConditionMatrix {
    pub fn new(data: Vec<Vec<f64>>, labels: Vec<String>) -> Result<ConditionMatrix, StatsError> {
        let n = data.len();
        if n < 3 {
            return Err(StatsError::BadShape(format!("need >= 3 participants, found {n}")));
        }
        let k = data[0].len();
        if k < 2 {
            return Err(StatsError::BadShape(format!("need >= 2 conditions, found {k}")));
        }
        if labels.len() != k {
            return Err(StatsError::BadShape(format!(
                "{} labels for {k} conditions",
                labels.len()
            )));
        }
        for (i, row) in data.iter().enumerate() {
            if row.len() != k {
                return Err(StatsError::BadShape(format!(
                    "row {i} has {} cells, expected {k} (missing cells are not allowed)",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::BadShape(format!("row {i} has a non-finite cell")));
            }
        }
        Ok(ConditionMatrix { data, labels })
    }

    pub fn participants(&self) -> usize {
        self.data.len()
    }

    pub fn conditions(&self) -> usize {
        self.data[0].len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().map(|row| row[j]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i]
    }
}

/// Which omnibus test ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    RmAnova,
    Friedman,
}

/// Degrees-of-freedom correction applied to the within-subject F test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    /// Sphericity assumed.
    None,
    GreenhouseGeisser(f64),
    HuynhFeldt(f64),
    /// Nonparametric test; no sphericity concept.
    NotApplicable,
}

impl Correction {
    /// Appendix-style label: SA / GG / HF / N/A.
    pub fn label(&self) -> &'static str {
        match self {
            Correction::None => "SA",
            Correction::GreenhouseGeisser(_) => "GG",
            Correction::HuynhFeldt(_) => "HF",
            Correction::NotApplicable => "N/A",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectSize {
    PartialEtaSq(f64),
    KendallW(f64),
}

impl EffectSize {
    pub fn value(&self) -> f64 {
        match self {
            EffectSize::PartialEtaSq(v) | EffectSize::KendallW(v) => *v,
        }
    }

    pub fn is_large(&self) -> bool {
        match self {
            EffectSize::PartialEtaSq(v) => *v >= ETA_SQ_LARGE,
            EffectSize::KendallW(v) => *v >= KENDALL_W_LARGE,
        }
    }
}

/// Result of one omnibus test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    /// Numerator df (possibly fractional after correction); for Friedman,
    /// the chi-squared df.
    pub df1: f64,
    /// Denominator df; absent for Friedman.
    pub df2: Option<f64>,
    pub p: f64,
    pub effect: EffectSize,
    pub correction: Correction,
    pub large_effect: bool,
}

/// Partial eta squared from an F statistic and its degrees of freedom.
/// Invariant under epsilon-scaling of both dfs, so corrected rows reproduce
/// the same value.
pub fn eta_partial_from_f(f: f64, df1: f64, df2: f64) -> f64 {
    f * df1 / (f * df1 + df2)
}

/// Kendall's W from a Friedman chi-squared.
pub fn kendall_w_from_chi2(chi2: f64, n: usize, k: usize) -> f64 {
    chi2 / (n as f64 * (k as f64 - 1.0))
}

/// Sidak family-wise correction: 1 - (1 - p)^k, clamped to [0, 1].
pub fn sidak(p: f64, k: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    (1.0 - (1.0 - p).powi(k as i32)).clamp(0.0, 1.0)
}

fn normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Shapiro-Wilk normality test (Royston's AS R94 algorithm): returns the
/// W statistic and upper-tail p-value. Supports 3 <= n <= 5000. A constant
/// sample is degenerate and should be treated as non-normal by callers.
pub fn shapiro_wilk(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = sample.len();
    if !(3..=5000).contains(&n) {
        return Err(StatsError::SampleSize { found: n, min: 3, max: 5000 });
    }
    let mut x: Vec<f64> = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));

    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss <= 0.0 {
        return Err(StatsError::Degenerate("constant sample"));
    }

    // Expected normal order statistics (Blom approximation).
    let nd = normal();
    let m: Vec<f64> = (1..=n)
        .map(|i| nd.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect();
    let ssumm2: f64 = m.iter().map(|v| v * v).sum();
    let rsqrt = 1.0 / (n as f64).sqrt();

    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -(0.5f64.sqrt());
        a[2] = 0.5f64.sqrt();
    } else {
        // Polynomial adjustments to the extreme weights (Royston 1992).
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let cn = m[n - 1] / ssumm2.sqrt();
        let an = cn + poly(&C1, rsqrt);
        let phi;
        if n > 5 {
            let cn1 = m[n - 2] / ssumm2.sqrt();
            let an1 = cn1 + poly(&C2, rsqrt);
            phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[n - 1] = an;
            a[n - 2] = an1;
            a[0] = -an;
            a[1] = -an1;
            for i in 2..n - 2 {
                a[i] = m[i] / phi.sqrt();
            }
        } else {
            phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            a[n - 1] = an;
            a[0] = -an;
            for i in 1..n - 1 {
                a[i] = m[i] / phi.sqrt();
            }
        }
    }

    let b: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let w = (b * b / ss).min(1.0);

    // P-value via Royston's normalizing transforms.
    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = (3.0f64 / 4.0).sqrt().asin();
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else if n <= 11 {
        const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
        const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
        let an = n as f64;
        let gamma = -2.273 + 0.459 * an;
        let y = -(gamma - (1.0 - w).ln()).ln();
        let mu = poly(&C3, an);
        let sigma = poly(&C4, an).exp();
        1.0 - nd.cdf((y - mu) / sigma)
    } else {
        const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
        const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
        let ln_n = (n as f64).ln();
        let y = (1.0 - w).ln();
        let mu = poly(&C5, ln_n);
        let sigma = poly(&C6, ln_n).exp();
        1.0 - nd.cdf((y - mu) / sigma)
    };
    Ok((w, p.clamp(0.0, 1.0)))
}

/// Normalized Helmert contrasts over k conditions, (k-1) x k.
fn helmert_contrasts(k: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(k - 1);
    for i in 0..k - 1 {
        let mut row = vec![0.0; k];
        for cell in row.iter_mut().take(i + 1) {
            *cell = 1.0;
        }
        row[i + 1] = -((i + 1) as f64);
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut row {
            *v /= norm;
        }
        rows.push(row);
    }
    rows
}

/// Covariance of the contrast-transformed data: T = C S C'.
fn contrast_covariance(matrix: &ConditionMatrix) -> Vec<Vec<f64>> {
    let n = matrix.participants();
    let k = matrix.conditions();
    let c = helmert_contrasts(k);
    // Transform each participant row into contrast space.
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = matrix.row(i);
            c.iter().map(|cr| cr.iter().zip(row).map(|(a, b)| a * b).sum()).collect()
        })
        .collect();
    let d = k - 1;
    let means: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut t = vec![vec![0.0; d]; d];
    for (p, row) in t.iter_mut().enumerate() {
        for (q, cell) in row.iter_mut().enumerate() {
            *cell = z
                .iter()
                .map(|r| (r[p] - means[p]) * (r[q] - means[q]))
                .sum::<f64>()
                / (n as f64 - 1.0);
        }
    }
    t
}

fn trace(m: &[Vec<f64>]) -> f64 {
    (0..m.len()).map(|i| m[i][i]).sum()
}

fn trace_sq(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += m[i][j] * m[j][i];
        }
    }
    s
}

/// Determinant by LU decomposition with partial pivoting.
fn determinant(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..d {
            let f = a[row][col] / a[col][col];
            for c in col..d {
                a[row][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Greenhouse-Geisser epsilon from the contrast covariance.
fn epsilon_gg(t: &[Vec<f64>]) -> f64 {
    let d = t.len() as f64;
    let tr = trace(t);
    let tr2 = trace_sq(t);
    if tr2 <= 0.0 {
        return 1.0;
    }
    (tr * tr / (d * tr2)).clamp(1.0 / d, 1.0)
}

/// Huynh-Feldt epsilon, capped at 1.
fn epsilon_hf(eps_gg: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let km1 = (k - 1) as f64;
    let num = nf * km1 * eps_gg - 2.0;
    let den = km1 * ((nf - 1.0) - km1 * eps_gg);
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).min(1.0)
}

/// Mauchly's sphericity test p-value (chi-squared approximation); `None`
/// when the test is not defined (k = 2, or too few participants for a
/// nonsingular contrast covariance).
fn mauchly_p(t: &[Vec<f64>], n: usize, k: usize) -> Option<f64> {
    if k < 3 || n < k {
        return None;
    }
    let d = (k - 1) as f64;
    let det = determinant(t);
    let mean_var = trace(t) / d;
    if det <= 0.0 || mean_var <= 0.0 {
        // Singular covariance: report maximal violation.
        return Some(0.0);
    }
    let w = det / mean_var.powf(d);
    if w <= 0.0 {
        return Some(0.0);
    }
    let km1 = d;
    let factor = (2.0 * km1 * km1 + km1 + 2.0) / (6.0 * km1 * (n as f64 - 1.0));
    let chi2 = -(1.0 - factor) * (n as f64 - 1.0) * w.ln();
    let df = k as f64 * (k as f64 - 1.0) / 2.0 - 1.0;
    let dist = ChiSquared::new(df).ok()?;
    Some(1.0 - dist.cdf(chi2.max(0.0)))
}

/// One-way within-subject ANOVA. Mauchly's test at alpha = 0.05 decides the
/// correction: Greenhouse-Geisser, or Huynh-Feldt when the GG epsilon
/// exceeds 0.75.
pub fn rm_anova(matrix: &ConditionMatrix) -> Result<TestResult, StatsError> {
    let n = matrix.participants();
    let k = matrix.conditions();
    let nf = n as f64;
    let kf = k as f64;

    let grand: f64 =
        (0..n).map(|i| matrix.row(i).iter().sum::<f64>()).sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> =
        (0..n).map(|i| matrix.row(i).iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> =
        (0..k).map(|j| matrix.column(j).iter().sum::<f64>() / nf).collect();

    let ss_subjects: f64 = kf * row_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
    let ss_conditions: f64 = nf * col_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>();
    let ss_total: f64 = (0..n)
        .flat_map(|i| matrix.row(i).iter().map(move |v| (v - grand) * (v - grand)))
        .sum();
    let ss_error = (ss_total - ss_subjects - ss_conditions).max(0.0);

    let df1 = kf - 1.0;
    let df2 = (nf - 1.0) * (kf - 1.0);
    if ss_error <= 1e-300 {
        return Err(StatsError::Degenerate("zero error variance"));
    }
    let f = (ss_conditions / df1) / (ss_error / df2);
    let eta = ss_conditions / (ss_conditions + ss_error);

    // Sphericity handling. A two-level factor is trivially spherical.
    let t = contrast_covariance(matrix);
    let correction = match mauchly_p(&t, n, k) {
        Some(p_mauchly) if p_mauchly < MAUCHLY_ALPHA => {
            let gg = epsilon_gg(&t);
            if gg > EPSILON_SWITCH {
                Correction::HuynhFeldt(epsilon_hf(gg, n, k))
            } else {
                Correction::GreenhouseGeisser(gg)
            }
        }
        _ => Correction::None,
    };
    let eps = match correction {
        Correction::GreenhouseGeisser(e) | Correction::HuynhFeldt(e) => e,
        _ => 1.0,
    };
    let (cdf1, cdf2) = (df1 * eps, df2 * eps);
    let dist = FisherSnedecor::new(cdf1, cdf2)
        .map_err(|_| StatsError::Degenerate("invalid degrees of freedom"))?;
    let p = 1.0 - dist.cdf(f);

    let effect = EffectSize::PartialEtaSq(eta);
    Ok(TestResult {
        kind: TestKind::RmAnova,
        statistic: f,
        df1: cdf1,
        df2: Some(cdf2),
        p,
        large_effect: effect.is_large(),
        effect,
        correction,
    })
}

/// Average ranks of a row, ties shared.
fn rank_row(row: &[f64]) -> Vec<f64> {
    let k = row.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite"));
    let mut ranks = vec![0.0; k];
    let mut i = 0;
    while i < k {
        let mut j = i;
        while j + 1 < k && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &slot in &idx[i..=j] {
            ranks[slot] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman rank test with tie correction; effect size is Kendall's W.
pub fn friedman(matrix: &ConditionMatrix) -> Result<TestResult, StatsError> {
    let n = matrix.participants();
    let k = matrix.conditions();
    let nf = n as f64;
    let kf = k as f64;

    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for i in 0..n {
        let ranks = rank_row(matrix.row(i));
        for (j, r) in ranks.iter().enumerate() {
            rank_sums[j] += r;
        }
        // Tie sizes within this row.
        let mut sorted: Vec<f64> = matrix.row(i).to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut run = 1usize;
        for w in 1..=k {
            if w < k && sorted[w] == sorted[w - 1] {
                run += 1;
            } else {
                let t = run as f64;
                tie_term += t * t * t - t;
                run = 1;
            }
        }
    }

    let raw = 12.0 / (nf * kf * (kf + 1.0)) * rank_sums.iter().map(|r| r * r).sum::<f64>()
        - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_term / (nf * kf * (kf * kf - 1.0));
    let chi2 = if correction <= 0.0 { 0.0 } else { (raw / correction).max(0.0) };

    let df = kf - 1.0;
    let p = if chi2 == 0.0 {
        1.0
    } else {
        let dist = ChiSquared::new(df).map_err(|_| StatsError::Degenerate("bad df"))?;
        1.0 - dist.cdf(chi2)
    };
    let effect = EffectSize::KendallW(kendall_w_from_chi2(chi2, n, k));
    Ok(TestResult {
        kind: TestKind::Friedman,
        statistic: chi2,
        df1: df,
        df2: None,
        p,
        large_effect: effect.is_large(),
        effect,
        correction: Correction::NotApplicable,
    })
}

/// Two-sided paired-samples t test: returns (t, df, p).
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 3 {
        return Err(StatsError::SampleSize { found: n, min: 3, max: usize::MAX });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(StatsError::Degenerate("zero-variance differences"));
    }
    let t = mean / (var / n as f64).sqrt();
    let df = n as f64 - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid df");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, df, p.clamp(0.0, 1.0)))
}

/// Exact distribution of the positive-rank sum under random signs, via
/// dynamic programming over doubled (half-integer safe) rank units.
fn signed_rank_exact_tail(ranks2: &[u64], w2: u64, upper: bool) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        reach += r as usize;
        for s in (0..=reach).rev() {
            if s >= r as usize {
                counts[s] += counts[s - r as usize];
            }
        }
    }
    let denom = 2f64.powi(ranks2.len() as i32);
    let tail: f64 = if upper {
        counts[w2 as usize..].iter().sum()
    } else {
        counts[..=w2 as usize].iter().sum()
    };
    tail / denom
}

/// Wilcoxon signed-rank test: returns (min rank sum, two-sided p). Exact
/// enumeration for n <= 25 effective pairs, normal approximation with
/// continuity and tie corrections above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return Err(StatsError::Degenerate("all differences are zero"));
    }
    if n < 5 {
        return Err(StatsError::SampleSize { found: n, min: 5, max: usize::MAX });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = rank_row(&abs);
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = n as f64 * (n as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let p = if n <= 25 {
        let ranks2: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        let w2 = (w_plus * 2.0).round() as u64;
        let lower = signed_rank_exact_tail(&ranks2, w2, false);
        let upper = signed_rank_exact_tail(&ranks2, w2, true);
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mu = total / 2.0;
        let mut tie_var = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut run = 1usize;
        for w in 1..=n {
            if w < n && sorted[w] == sorted[w - 1] {
                run += 1;
            } else {
                let t = run as f64;
                tie_var += t * t * t - t;
                run = 1;
            }
        }
        let sigma2 = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_var / 48.0;
        if sigma2 <= 0.0 {
            return Err(StatsError::Degenerate("zero variance under ties"));
        }
        let diff = w_plus - mu;
        let z = (diff - 0.5 * diff.signum()) / sigma2.sqrt();
        2.0 * (1.0 - normal().cdf(z.abs()))
    };
    Ok((statistic, p.clamp(0.0, 1.0)))
}

/// Per-experiment pipeline constants: the number of conditions dividing the
/// normality alpha, and the Sidak family size for post hocs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineSettings {
    pub normality_conditions: usize,
    pub sidak_k: usize,
}

/// Settings per experiment. Experiment 2 has two post-hoc families: k = 4
/// for the two-level task-partner factor, k = 12 for the three-level joint
/// visibility factor; the factor is identified by its condition count.
pub fn settings_for_experiment(experiment: u8, conditions: usize) -> PipelineSettings {
    match experiment {
        1 => PipelineSettings { normality_conditions: 4, sidak_k: 66 },
        2 => PipelineSettings {
            normality_conditions: 6,
            sidak_k: if conditions == 2 { 4 } else { 12 },
        },
        3 => PipelineSettings { normality_conditions: 4, sidak_k: 90 },
        4 => PipelineSettings { normality_conditions: 4, sidak_k: 24 },
        _ => PipelineSettings { normality_conditions: conditions.max(1), sidak_k: 1 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostHocKind {
    PairedT,
    Wilcoxon,
}

#[derive(Debug, Clone)]
pub struct PostHoc {
    pub pair: (usize, usize),
    pub kind: PostHocKind,
    pub statistic: f64,
    pub raw_p: f64,
    pub sidak_p: f64,
    /// Degenerate pair (for example zero-variance differences).
    pub degenerate: bool,
}

/// Full decision flow for one metric.
#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub omnibus: TestResult,
    /// Per-condition Shapiro-Wilk normality at alpha = 0.05 / N-conditions;
    /// degenerate (constant) conditions count as non-normal.
    pub condition_normal: Vec<bool>,
    pub posthocs: Vec<PostHoc>,
    pub settings: PipelineSettings,
}

/// Runs the paper's decision flow on one condition matrix: normality gate,
/// RM-ANOVA or Friedman, effect size, and (for large effects) all pairwise
/// post hocs with Sidak correction.
pub fn analysis_pipeline(
    matrix: &ConditionMatrix,
    settings: PipelineSettings,
) -> Result<AnalysisOutcome, StatsError> {
    let k = matrix.conditions();
    let alpha = 0.05 / settings.normality_conditions as f64;
    let condition_normal: Vec<bool> = (0..k)
        .map(|j| match shapiro_wilk(&matrix.column(j)) {
            Ok((_, p)) => p >= alpha,
            Err(_) => false,
        })
        .collect();
    let non_normal = condition_normal.iter().filter(|ok| !**ok).count();

    // Friedman when normality cannot be assumed for more than one condition.
    let omnibus = if non_normal > 1 { friedman(matrix)? } else { rm_anova(matrix)? };

    let mut posthocs = Vec::new();
    if omnibus.large_effect {
        for i in 0..k {
            for j in i + 1..k {
                let a = matrix.column(i);
                let b = matrix.column(j);
                let parametric = condition_normal[i] && condition_normal[j];
                let post = if parametric {
                    match paired_t(&a, &b) {
                        Ok((t, _, p)) => PostHoc {
                            pair: (i, j),
                            kind: PostHocKind::PairedT,
                            statistic: t,
                            raw_p: p,
                            sidak_p: sidak(p, settings.sidak_k),
                            degenerate: false,
                        },
                        Err(_) => PostHoc {
                            pair: (i, j),
                            kind: PostHocKind::PairedT,
                            statistic: f64::NAN,
                            raw_p: 1.0,
                            sidak_p: 1.0,
                            degenerate: true,
                        },
                    }
                } else {
                    match wilcoxon_signed_rank(&a, &b) {
                        Ok((s, p)) => PostHoc {
                            pair: (i, j),
                            kind: PostHocKind::Wilcoxon,
                            statistic: s,
                            raw_p: p,
                            sidak_p: sidak(p, settings.sidak_k),
                            degenerate: false,
                        },
                        Err(_) => PostHoc {
                            pair: (i, j),
                            kind: PostHocKind::Wilcoxon,
                            statistic: f64::NAN,
                            raw_p: 1.0,
                            sidak_p: 1.0,
                            degenerate: true,
                        },
                    }
                };
                posthocs.push(post);
            }
        }
    }

    Ok(AnalysisOutcome { omnibus, condition_normal, posthocs, settings })
}
