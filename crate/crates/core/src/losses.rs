//! Supervised and self-supervised training objectives.
//!
//! Every term comes in two flavours: a plain value function and a `*_grad`
//! function returning the value together with its gradient with respect to
//! the student-side input (logits, features or projections).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::{self, Matrix};
use crate::model::{ForwardOutput, NetworkParams, OutputGrads};

/// Shift added to relation-matrix rows before they are read as
/// distributions.
pub const KL_SHIFT: f64 = 1e-8;
/// Rows of the Gram matrix with a smaller norm are replaced by a uniform row.
pub const DEGENERATE_ROW_NORM: f64 = 1e-12;

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(xs.map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::invalid("one label per logit row required"));
    }
    if labels.iter().any(|&y| y >= logits.cols()) {
        return Err(Error::invalid("label out of range"));
    }
    Ok(())
}

/// `-log softmax(logits_i)[label_i]` for every row.
pub fn per_sample_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    Ok(logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row.iter().copied()) - row[y])
        .collect())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() == 0 {
        return Err(Error::invalid("cross entropy of an empty batch"));
    }
    let losses = per_sample_cross_entropy(logits, labels)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Cross-entropy averaged over the rows where `mask` is set; the gradient
/// is zero on the other rows. An empty mask contributes zero.
pub fn masked_cross_entropy_grad(
    logits: &Matrix,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    if mask.len() != logits.rows() {
        return Err(Error::invalid("mask length does not match batch"));
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((0.0, grad));
    }
    let probs = softmax_rows(logits);
    let scale = 1.0 / count as f64;
    let mut total = 0.0;
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        let row = logits.row(r);
        total += log_sum_exp(row.iter().copied()) - row[labels[r]];
        let g = grad.row_mut(r);
        for (g, &p) in g.iter_mut().zip(probs.row(r)) {
            *g = p * scale;
        }
        g[labels[r]] -= scale;
    }
    Ok((total * scale, grad))
}

pub fn cross_entropy_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() == 0 {
        return Err(Error::invalid("cross entropy of an empty batch"));
    }
    masked_cross_entropy_grad(logits, labels, &vec![true; logits.rows()])
}

/// Mean squared L2 distance between matching probability rows.
pub fn consistency(student_probs: &Matrix, teacher_probs: &Matrix) -> Result<f64> {
    if student_probs.rows() != teacher_probs.rows() || student_probs.cols() != teacher_probs.cols() {
        return Err(Error::invalid("consistency inputs differ in shape"));
    }
    if student_probs.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = student_probs
        .iter_rows()
        .zip(teacher_probs.iter_rows())
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / student_probs.rows() as f64)
}

/// Consistency between `softmax(student_logits)` and fixed teacher
/// probabilities, with the gradient on the student logits.
pub fn consistency_grad(student_logits: &Matrix, teacher_probs: &Matrix) -> Result<(f64, Matrix)> {
    let p = softmax_rows(student_logits);
    let value = consistency(&p, teacher_probs)?;
    let b = p.rows().max(1) as f64;
    let mut grad = Matrix::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        let (pr, qr) = (p.row(r), teacher_probs.row(r));
        let g: Vec<f64> = pr.iter().zip(qr).map(|(a, b_)| 2.0 * (a - b_) / b).collect();
        let gp = matrix::dot(&g, pr);
        for ((d, &gi), &pi) in grad.row_mut(r).iter_mut().zip(&g).zip(pr) {
            *d = pi * (gi - gp);
        }
    }
    Ok((value, grad))
}

/// Row-L2-normalised Gram matrix of nonnegative batch features.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix(Matrix);

impl RelationMatrix {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    /// Row `i` shifted by [`KL_SHIFT`] and rescaled to sum to one.
    fn distribution(&self, i: usize) -> (Vec<f64>, f64) {
        let row = self.0.row(i);
        let total: f64 = row.iter().map(|v| v + KL_SHIFT).sum();
        (row.iter().map(|v| (v + KL_SHIFT) / total).collect(), total)
    }
}

struct RelationParts {
    relation: RelationMatrix,
    gram: Matrix,
    norms: Vec<f64>,
}

fn relation_parts(features: &Matrix) -> Result<RelationParts> {
    if features.rows() == 0 {
        return Err(Error::invalid("relation matrix of an empty batch"));
    }
    if !features.is_finite() {
        return Err(Error::NonFinite { term: "relation features" });
    }
    if features.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("relation features must be nonnegative"));
    }
    let b = features.rows();
    let gram = features.matmul_transposed(features);
    let mut m = gram.clone();
    let mut norms = Vec::with_capacity(b);
    for r in 0..b {
        let n = matrix::norm(gram.row(r));
        norms.push(n);
        let row = m.row_mut(r);
        if n < DEGENERATE_ROW_NORM {
            row.fill(1.0 / b as f64);
        } else {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    Ok(RelationParts { relation: RelationMatrix(m), gram, norms })
}

/// `G = F Fᵀ` with every row divided by its L2 norm. All-zero feature
/// rows give the uniform row `1/B`.
pub fn relation_matrix(features: &Matrix) -> Result<RelationMatrix> {
    Ok(relation_parts(features)?.relation)
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * libm::log(a / b)).sum()
}

/// Symmetrised KL divergence between the row distributions of two
/// relation matrices, summed over rows and divided by the batch size.
pub fn global_relation_loss(student: &RelationMatrix, teacher: &RelationMatrix) -> Result<f64> {
    if student.0.rows() != teacher.0.rows() || student.0.cols() != teacher.0.cols() {
        return Err(Error::invalid("relation matrices differ in shape"));
    }
    let b = student.len();
    if b == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..b {
        let (p, _) = student.distribution(i);
        let (q, _) = teacher.distribution(i);
        total += 0.5 * (kl(&p, &q) + kl(&q, &p));
    }
    Ok(total / b as f64)
}

/// Global relation loss between student features and a fixed teacher
/// relation matrix, with the gradient on the student features.
pub fn global_relation_grad(student_features: &Matrix, teacher: &RelationMatrix) -> Result<(f64, Matrix)> {
    let parts = relation_parts(student_features)?;
    let value = global_relation_loss(&parts.relation, teacher)?;
    let b = student_features.rows();
    let m = parts.relation.as_matrix();

    // dL/dG, row by row
    let mut d_gram = Matrix::zeros(b, b);
    for i in 0..b {
        if parts.norms[i] < DEGENERATE_ROW_NORM {
            continue;
        }
        let (p, total) = parts.relation.distribution(i);
        let (q, _) = teacher.distribution(i);
        let d_p: Vec<f64> = p
            .iter()
            .zip(&q)
            .map(|(&pj, &qj)| (libm::log(pj / qj) + 1.0 - qj / pj) / (2.0 * b as f64))
            .collect();
        let mean = matrix::dot(&d_p, &p);
        let d_m: Vec<f64> = d_p.iter().map(|g| (g - mean) / total).collect();
        let proj = matrix::dot(&d_m, m.row(i));
        let n = parts.norms[i];
        for (dg, (&dm, &mj)) in d_gram.row_mut(i).iter_mut().zip(d_m.iter().zip(m.row(i))) {
            *dg = (dm - mj * proj) / n;
        }
    }
    debug_assert_eq!(parts.gram.rows(), b);

    // G = F Fᵀ  =>  dF = (dG + dGᵀ) F
    let mut sym = d_gram.clone();
    for i in 0..b {
        for j in 0..b {
            sym[(i, j)] += d_gram[(j, i)];
        }
    }
    Ok((value, sym.matmul(student_features)))
}

/// Projections of two augmented views per source sample, with the pairing
/// that links each view to its sibling.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    z: Matrix,
    partner: Vec<usize>,
    tau: f64,
}

impl ContrastiveBatch {
    /// `partner` must be a fixed-point-free involution on the rows.
    pub fn new(z: Matrix, partner: Vec<usize>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid("temperature must be positive"));
        }
        if z.rows() < 2 || partner.len() != z.rows() {
            return Err(Error::invalid("contrastive batch needs a partner for every row"));
        }
        for (i, &j) in partner.iter().enumerate() {
            if j >= partner.len() || j == i || partner[j] != i {
                return Err(Error::invalid("pairing must be a fixed-point-free involution"));
            }
        }
        Ok(ContrastiveBatch { z, partner, tau })
    }

    /// Rows `0..N` are view one and rows `N..2N` view two of the same
    /// `N` sources, in the same order.
    pub fn two_views(first: &Matrix, second: &Matrix, tau: f64) -> Result<Self> {
        if first.rows() != second.rows() || first.cols() != second.cols() {
            return Err(Error::invalid("views differ in shape"));
        }
        let n = first.rows();
        let mut data = Vec::with_capacity(2 * n * first.cols());
        data.extend_from_slice(first.as_slice());
        data.extend_from_slice(second.as_slice());
        let z = Matrix::from_vec(2 * n, first.cols(), data)?;
        let partner = (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect();
        Self::new(z, partner, tau)
    }

    pub fn projections(&self) -> &Matrix {
        &self.z
    }

    pub fn partner(&self) -> &[usize] {
        &self.partner
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Mean over the `2N` anchors of the normalised temperature-scaled cross
/// entropy. Zero-norm projections have cosine similarity 0 with everything.
pub fn local_contrastive_loss(batch: &ContrastiveBatch) -> Result<f64> {
    Ok(local_contrastive_grad(batch)?.0)
}

/// Contrastive loss and its gradient with respect to every projection row.
pub fn local_contrastive_grad(batch: &ContrastiveBatch) -> Result<(f64, Matrix)> {
    let z = &batch.z;
    if !z.is_finite() {
        return Err(Error::NonFinite { term: "projections" });
    }
    let rows = z.rows();
    let tau = batch.tau;
    let norms: Vec<f64> = z.iter_rows().map(matrix::norm).collect();
    let mut unit = z.clone();
    for (r, &n) in norms.iter().enumerate() {
        let row = unit.row_mut(r);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row.fill(0.0);
        }
    }
    let logits = {
        let mut s = unit.matmul_transposed(&unit);
        s.as_mut_slice().iter_mut().for_each(|v| *v /= tau);
        s
    };

    let scale = 1.0 / rows as f64;
    let mut total = 0.0;
    let mut d_unit = Matrix::zeros(rows, z.cols());
    let mut weights = vec![0.0; rows];
    for i in 0..rows {
        let j = batch.partner[i];
        let row = logits.row(i);
        let others = (0..rows).filter(move |&k| k != i).map(move |k| row[k]);
        let lse = log_sum_exp(others);
        total += lse - row[j];

        for k in 0..rows {
            weights[k] = if k == i { 0.0 } else { libm::exp(row[k] - lse) };
        }
        weights[j] -= 1.0;
        for (k, &w) in weights.iter().enumerate() {
            if k == i || w == 0.0 {
                continue;
            }
            let a = w * scale / tau;
            for c in 0..z.cols() {
                d_unit[(i, c)] += a * unit[(k, c)];
                d_unit[(k, c)] += a * unit[(i, c)];
            }
        }
    }

    let mut grad = Matrix::zeros(rows, z.cols());
    for (r, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        let u = unit.row(r);
        let du = d_unit.row(r);
        let radial = matrix::dot(u, du);
        for (g, (&d, &uc)) in grad.row_mut(r).iter_mut().zip(du.iter().zip(u)) {
            *g = (d - uc * radial) / n;
        }
    }
    Ok((total * scale, grad))
}

/// Ramp for the weight of the unsupervised terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub warmup_epochs: usize,
    pub ramp_epochs: usize,
    pub lambda_max: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { warmup_epochs: 5, ramp_epochs: 10, lambda_max: 10.0 }
    }
}

/// Zero through the end of warm-up, then linear up to `lambda_max` over
/// `ramp_epochs`, constant afterwards.
pub fn lambda_schedule(epoch: usize, weights: &LossWeights) -> f64 {
    if epoch <= weights.warmup_epochs {
        return 0.0;
    }
    let since = epoch - weights.warmup_epochs;
    if since >= weights.ramp_epochs {
        weights.lambda_max
    } else {
        weights.lambda_max * since as f64 / weights.ramp_epochs as f64
    }
}

/// Values of the four loss terms for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub ce: f64,
    pub global: f64,
    pub local: f64,
    pub con: f64,
}

impl LossTerms {
    pub fn check_finite(&self) -> Result<()> {
        ensure_finite(self.ce, "L_ce")?;
        ensure_finite(self.global, "L_global")?;
        ensure_finite(self.local, "L_local")?;
        ensure_finite(self.con, "L_con")?;
        Ok(())
    }
}

/// `ce + lambda * (global + local + con)`.
pub fn total_loss(terms: &LossTerms, lambda: f64) -> Result<f64> {
    terms.check_finite()?;
    ensure_finite(lambda, "lambda")?;
    Ok(terms.ce + lambda * (terms.global + terms.local + terms.con))
}

/// Which terms contribute to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveTerms {
    pub ce: bool,
    pub con: bool,
    pub global: bool,
    pub local: bool,
}

impl ActiveTerms {
    pub const ALL: ActiveTerms = ActiveTerms { ce: true, con: true, global: true, local: true };
    pub const CE_ONLY: ActiveTerms = ActiveTerms { ce: true, con: false, global: false, local: false };
}

/// Everything besides the student's own forward pass that one batch's
/// objective depends on.
#[derive(Debug, Clone, Copy)]
pub struct BatchTargets<'a> {
    /// Observed labels of the batch rows.
    pub labels: &'a [usize],
    /// Clean flag per row: CE is applied on clean rows, the contrastive
    /// loss on the remaining rows.
    pub clean: &'a [bool],
    /// Teacher outputs on the second view; treated as constants.
    pub teacher: Option<&'a ForwardOutput>,
    pub lambda: f64,
    pub tau: f64,
    pub terms: ActiveTerms,
}

/// Loss breakdown of a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    pub terms: LossTerms,
    pub total: f64,
}

/// Evaluate the composite objective on a student forward pass and return
/// the upstream gradients for [`NetworkParams::backward`].
///
/// Terms that are inactive, or whose lambda weight is zero, are neither
/// evaluated nor differentiated.
pub fn objective(student: &ForwardOutput, t: &BatchTargets<'_>) -> Result<(BatchLoss, OutputGrads)> {
    let b = student.logits.rows();
    if t.labels.len() != b || t.clean.len() != b {
        return Err(Error::invalid("labels and masks must cover the batch"));
    }
    let unsupervised = t.lambda != 0.0 && (t.terms.con || t.terms.global || t.terms.local);
    let teacher = match (unsupervised, t.teacher) {
        (true, None) => return Err(Error::invalid("unsupervised terms need teacher outputs")),
        (true, Some(out)) => {
            if out.logits.rows() != b {
                return Err(Error::invalid("teacher batch size differs"));
            }
            Some(out)
        }
        (false, _) => None,
    };

    let mut terms = LossTerms::default();
    let mut d_logits = Matrix::zeros(b, student.logits.cols());
    let mut d_features = None;
    let mut d_proj = None;

    if t.terms.ce {
        let (v, g) = masked_cross_entropy_grad(&student.logits, t.labels, t.clean)?;
        terms.ce = ensure_finite(v, "L_ce")?;
        d_logits = g;
    }
    if let Some(teacher) = teacher {
        let lambda = t.lambda;
        if t.terms.con {
            let (v, g) = consistency_grad(&student.logits, &softmax_rows(&teacher.logits))?;
            terms.con = ensure_finite(v, "L_con")?;
            axpy(&mut d_logits, lambda, &g);
        }
        if t.terms.global {
            let teacher_rel = relation_matrix(&teacher.features)?;
            let (v, mut g) = global_relation_grad(&student.features, &teacher_rel)?;
            terms.global = ensure_finite(v, "L_global")?;
            g.as_mut_slice().iter_mut().for_each(|x| *x *= lambda);
            d_features = Some(g);
        }
        if t.terms.local {
            let noisy: Vec<usize> = (0..b).filter(|&r| !t.clean[r]).collect();
            if !noisy.is_empty() {
                let first = student.projections.select_rows(&noisy);
                let second = teacher.projections.select_rows(&noisy);
                let batch = ContrastiveBatch::two_views(&first, &second, t.tau)?;
                let (v, g) = local_contrastive_grad(&batch)?;
                terms.local = ensure_finite(v, "L_local")?;
                let mut full = Matrix::zeros(b, student.projections.cols());
                for (k, &r) in noisy.iter().enumerate() {
                    for (d, &gv) in full.row_mut(r).iter_mut().zip(g.row(k)) {
                        *d = lambda * gv;
                    }
                }
                d_proj = Some(full);
            }
        }
    }
    let lambda = if unsupervised { t.lambda } else { 0.0 };
    let total = total_loss(&terms, lambda)?;
    let grads = OutputGrads { features: d_features, logits: Some(d_logits), projections: d_proj };
    Ok((BatchLoss { terms, total }, grads))
}

fn axpy(acc: &mut Matrix, a: f64, x: &Matrix) {
    for (y, &v) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *y += a * v;
    }
}

/// Analytic gradient of the composite objective with respect to every
/// student parameter.
pub fn gradients(
    params: &NetworkParams,
    inputs: &Matrix,
    targets: &BatchTargets<'_>,
) -> Result<(BatchLoss, NetworkParams)> {
    let cache = params.forward_cached(inputs)?;
    let (loss, upstream) = objective(&cache.output, targets)?;
    Ok((loss, params.backward(&cache, &upstream)))
}

/// Objective value only, for finite-difference checks.
pub fn objective_value(params: &NetworkParams, inputs: &Matrix, targets: &BatchTargets<'_>) -> Result<f64> {
    let out = params.forward(inputs)?;
    Ok(objective(&out, targets)?.0.total)
}
