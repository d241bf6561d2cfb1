//! Numerical embodiment of the generalization-bound analysis.
//!
//! Every bound has the shape K·C/nᵃ + ε: a capacity-over-sample-size
//! estimation term with learning-rate exponent a ∈ [½, 1], plus an
//! approximation error. Distillation bounds add the capacities of both
//! function classes and use the pair's exponent and error. The cascade
//! comparison asks whether the distilled student's bound against the
//! teacher undercuts the original student's: it must, whenever the
//! distilled student learns from the teacher at a faster rate and the
//! errors do not grow.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Learning-rate exponents of the seven (model, training-route) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub direct_student: f64,
    pub direct_ta: f64,
    pub direct_teacher: f64,
    pub student_from_ta: f64,
    pub student_from_teacher: f64,
    pub distilled_student: f64,
    pub distilled_from_teacher: f64,
}

/// Approximation errors of the same pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    pub direct_student: f64,
    pub direct_ta: f64,
    pub direct_teacher: f64,
    pub student_from_ta: f64,
    pub student_from_teacher: f64,
    pub distilled_student: f64,
    pub distilled_from_teacher: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub student_cap: f64,
    pub ta_cap: f64,
    pub teacher_cap: f64,
    /// Capacity of the student class after distillation; same
    /// architecture, so equal to `student_cap` unless overridden.
    pub distilled_student_cap: f64,
    /// Sample size n ≥ 1.
    pub n: f64,
    pub exponents: Exponents,
    pub epsilons: Epsilons,
    /// The shared hidden constant of every estimation term.
    pub k: f64,
    /// Check the ordering assumptions of the analysis on validation.
    pub enforce_assumptions: bool,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            student_cap: 1.0,
            ta_cap: 2.0,
            teacher_cap: 8.0,
            distilled_student_cap: 1.0,
            n: 1e6,
            exponents: Exponents {
                direct_student: 0.5,
                direct_ta: 0.6,
                direct_teacher: 0.8,
                student_from_ta: 0.55,
                student_from_teacher: 0.55,
                distilled_student: 0.6,
                distilled_from_teacher: 0.7,
            },
            epsilons: Epsilons {
                direct_student: 0.01,
                direct_ta: 0.01,
                direct_teacher: 0.01,
                student_from_ta: 0.01,
                student_from_teacher: 0.01,
                distilled_student: 0.01,
                distilled_from_teacher: 0.01,
            },
            k: 1.0,
            enforce_assumptions: true,
        }
    }
}

fn check_exponent(name: &str, a: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&a) {
        return Err(Error::InvalidArgument {
            op: "bound_params",
            detail: format!("exponent {name} = {a} outside [0.5, 1]"),
        });
    }
    Ok(())
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("student_cap", self.student_cap),
            ("ta_cap", self.ta_cap),
            ("teacher_cap", self.teacher_cap),
            ("distilled_student_cap", self.distilled_student_cap),
        ] {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument {
                    op: "bound_params",
                    detail: format!("{name} must be positive, got {c}"),
                });
            }
        }
        if !(self.n >= 1.0) {
            return Err(Error::InvalidArgument {
                op: "bound_params",
                detail: format!("sample size n must be ≥ 1, got {}", self.n),
            });
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidArgument {
                op: "bound_params",
                detail: format!("constant k must be positive, got {}", self.k),
            });
        }
        let e = &self.exponents;
        for (name, a) in [
            ("direct_student", e.direct_student),
            ("direct_ta", e.direct_ta),
            ("direct_teacher", e.direct_teacher),
            ("student_from_ta", e.student_from_ta),
            ("student_from_teacher", e.student_from_teacher),
            ("distilled_student", e.distilled_student),
            ("distilled_from_teacher", e.distilled_from_teacher),
        ] {
            check_exponent(name, a)?;
        }
        let eps = &self.epsilons;
        for (name, v) in [
            ("direct_student", eps.direct_student),
            ("direct_ta", eps.direct_ta),
            ("direct_teacher", eps.direct_teacher),
            ("student_from_ta", eps.student_from_ta),
            ("student_from_teacher", eps.student_from_teacher),
            ("distilled_student", eps.distilled_student),
            ("distilled_from_teacher", eps.distilled_from_teacher),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidArgument {
                    op: "bound_params",
                    detail: format!("epsilon {name} = {v} must be nonnegative"),
                });
            }
        }
        if self.enforce_assumptions {
            let checks = [
                ("direct_teacher ≥ direct_student", e.direct_teacher >= e.direct_student),
                ("student_from_ta ≤ direct_ta", e.student_from_ta <= e.direct_ta),
                (
                    "distilled_from_teacher ≤ direct_teacher",
                    e.distilled_from_teacher <= e.direct_teacher,
                ),
                ("direct_student ≤ distilled_student", e.direct_student <= e.distilled_student),
                (
                    "student_from_teacher ≤ distilled_from_teacher",
                    e.student_from_teacher <= e.distilled_from_teacher,
                ),
            ];
            for (name, ok) in checks {
                if !ok {
                    return Err(Error::InvalidArgument {
                        op: "bound_params",
                        detail: format!("assumption violated: {name}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// The elementary bound template: K·C/nᵃ + ε.
pub fn bound_value(capacity: f64, n: f64, a: f64, eps: f64, k: f64) -> Result<f64> {
    if !(capacity > 0.0) || !(n >= 1.0) || !(k > 0.0) || eps < 0.0 {
        return Err(Error::InvalidArgument {
            op: "bound_value",
            detail: format!("domain violation: C={capacity}, n={n}, eps={eps}, K={k}"),
        });
    }
    check_exponent("a", a)?;
    Ok(k * capacity / n.powf(a) + eps)
}

/// Which distillation pair a combined bound covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdPair {
    /// Original student distilled from the teacher.
    StudentTeacher,
    /// Original student distilled from the assistant.
    StudentTa,
    /// Distilled student further distilled from the teacher.
    DistilledTeacher,
}

/// Combined distillation bound K·(C₁+C₂)/nᵃ + ε_pair + ε_upper for the
/// selected pair.
pub fn kd_bound(p: &BoundParams, pair: KdPair) -> Result<f64> {
    p.validate()?;
    let (c1, c2, a, eps_pair, eps_upper) = match pair {
        KdPair::StudentTeacher => (
            p.student_cap,
            p.teacher_cap,
            p.exponents.student_from_teacher,
            p.epsilons.student_from_teacher,
            p.epsilons.direct_teacher,
        ),
        KdPair::StudentTa => (
            p.student_cap,
            p.ta_cap,
            p.exponents.student_from_ta,
            p.epsilons.student_from_ta,
            p.epsilons.direct_ta,
        ),
        KdPair::DistilledTeacher => (
            p.distilled_student_cap,
            p.teacher_cap,
            p.exponents.distilled_from_teacher,
            p.epsilons.distilled_from_teacher,
            p.epsilons.direct_teacher,
        ),
    };
    Ok(p.k * (c1 + c2) / p.n.powf(a) + eps_pair + eps_upper)
}

/// Outcome of the cascade-vs-baseline comparison at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkdComparison {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Does the cascade's estimation term undercut single-teacher
/// distillation?  lhs = K(C_s̄+C_t)/n^a(distilled) + ε(distilled);
/// rhs = K(C_s+C_t)/n^a(direct pair) + ε(direct pair); holds ⇔ lhs ≤ rhs.
pub fn ckd_wins(p: &BoundParams) -> Result<CkdComparison> {
    p.validate()?;
    let lhs = p.k * (p.distilled_student_cap + p.teacher_cap)
        / p.n.powf(p.exponents.distilled_from_teacher)
        + p.epsilons.distilled_from_teacher;
    let rhs = p.k * (p.student_cap + p.teacher_cap) / p.n.powf(p.exponents.student_from_teacher)
        + p.epsilons.student_from_teacher;
    Ok(CkdComparison { holds: lhs <= rhs, lhs, rhs, margin: rhs - lhs })
}

// ── parameter sweeps ─────────────────────────────────────────────────

/// Grid specification over the comparison-relevant parameters. Empty
/// axes fall back to the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: BoundParams,
    #[serde(default)]
    pub n_values: Vec<f64>,
    /// Values for the student-from-teacher exponent.
    #[serde(default)]
    pub student_from_teacher: Vec<f64>,
    /// Gaps added to the student-from-teacher exponent to form the
    /// distilled exponent.
    #[serde(default)]
    pub distilled_gap: Vec<f64>,
    #[serde(default)]
    pub teacher_caps: Vec<f64>,
    /// (ε student-from-teacher, ε distilled-from-teacher) pairs.
    #[serde(default)]
    pub epsilon_pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: f64,
    pub student_from_teacher: f64,
    pub distilled_from_teacher: f64,
    pub teacher_cap: f64,
    pub eps_student_from_teacher: f64,
    pub eps_distilled_from_teacher: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// A point on the boundary surface: `holds` flips between consecutive n
/// at an otherwise fixed grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipPoint {
    pub student_from_teacher: f64,
    pub distilled_from_teacher: f64,
    pub teacher_cap: f64,
    pub eps_student_from_teacher: f64,
    pub eps_distilled_from_teacher: f64,
    pub n_before: f64,
    pub n_after: f64,
    pub holds_before: bool,
    pub holds_after: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub records: Vec<SweepRecord>,
    pub holds_fraction: f64,
    pub flips: Vec<FlipPoint>,
}

fn axis(values: &[f64], fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Evaluate the cascade comparison over the full grid and report each
/// point, the overall holds-fraction, and the boundary where the
/// inequality flips along n.
pub fn regime_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    let base = &spec.base;
    let n_axis = axis(&spec.n_values, base.n);
    let a_axis = axis(&spec.student_from_teacher, base.exponents.student_from_teacher);
    let gap_axis = axis(
        &spec.distilled_gap,
        base.exponents.distilled_from_teacher - base.exponents.student_from_teacher,
    );
    let cap_axis = axis(&spec.teacher_caps, base.teacher_cap);
    let eps_axis: Vec<(f64, f64)> = if spec.epsilon_pairs.is_empty() {
        vec![(base.epsilons.student_from_teacher, base.epsilons.distilled_from_teacher)]
    } else {
        spec.epsilon_pairs.clone()
    };

    let mut records = Vec::new();
    // n innermost so flips along n are consecutive records per group.
    for &a_st in &a_axis {
        for &gap in &gap_axis {
            for &cap in &cap_axis {
                for &(eps_st, eps_dt) in &eps_axis {
                    for &n in &n_axis {
                        let mut p = *base;
                        p.n = n;
                        p.teacher_cap = cap;
                        p.exponents.student_from_teacher = a_st;
                        p.exponents.distilled_from_teacher = a_st + gap;
                        p.epsilons.student_from_teacher = eps_st;
                        p.epsilons.distilled_from_teacher = eps_dt;
                        let cmp = ckd_wins(&p)?;
                        records.push(SweepRecord {
                            n,
                            student_from_teacher: a_st,
                            distilled_from_teacher: a_st + gap,
                            teacher_cap: cap,
                            eps_student_from_teacher: eps_st,
                            eps_distilled_from_teacher: eps_dt,
                            lhs: cmp.lhs,
                            rhs: cmp.rhs,
                            margin: cmp.margin,
                            holds: cmp.holds,
                        });
                    }
                }
            }
        }
    }

    let holds = records.iter().filter(|r| r.holds).count();
    let holds_fraction = holds as f64 / records.len().max(1) as f64;

    let mut flips = Vec::new();
    for group in records.chunks(n_axis.len()) {
        for w in group.windows(2) {
            if w[0].holds != w[1].holds {
                flips.push(FlipPoint {
                    student_from_teacher: w[0].student_from_teacher,
                    distilled_from_teacher: w[0].distilled_from_teacher,
                    teacher_cap: w[0].teacher_cap,
                    eps_student_from_teacher: w[0].eps_student_from_teacher,
                    eps_distilled_from_teacher: w[0].eps_distilled_from_teacher,
                    n_before: w[0].n,
                    n_after: w[1].n,
                    holds_before: w[0].holds,
                    holds_after: w[1].holds,
                });
            }
        }
    }

    Ok(SweepTable { records, holds_fraction, flips })
}
