//! Monotone maps `[0,1]^m → ℝ ∪ {±∞}` as a closed expression algebra.
//!
//! The construction composes baseline CDF values through monotone functions.
//! Arbitrary user code cannot be checked for monotonicity, so the algebra is
//! a fixed node set chosen to cover products, powers, complements, affine
//! mixes, `−ln` compositions, ratio (odds / competing-risk) maps and
//! exponential decays. Every node carries a sound direction-propagation
//! rule: inference is conservative and answers `Unknown` rather than guess.
//!
//! Limit conventions are baked into evaluation (`−ln 0 = +∞`,
//! `exp(−λ·∞) = 0`, `c/0⁺ = +∞` for `c > 0`) so corner conditions reduce to
//! plain evaluations at the corners of `[0,1]^m`.

mod parse;

pub use parse::parse;

use crate::ext_real::ExtReal;
use std::fmt;

/// Slack for domain checks during evaluation; absorbs float overshoot of
/// compositions like `1 − (1 − g)` around the ends of `[0, 1]`.
const EVAL_SLACK: f64 = 1e-9;

/// Step used by the central-difference fallback of [`partial_with_method`].
pub const FD_STEP: f64 = 1e-6;

/// AST of a monotone map over variables `g1..gm`.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneExpr {
    /// `g_i`, 1-based.
    Var(usize),
    Const(f64),
    PosInf,
    NegInf,
    Sum(Vec<MonotoneExpr>),
    Product(Vec<MonotoneExpr>),
    /// `child^alpha` with `alpha ≥ 0`; `alpha = 0` is the constant 1.
    Power(Box<MonotoneExpr>, f64),
    /// `1 − child`.
    Complement(Box<MonotoneExpr>),
    /// `(1−θ)·child + θ` with `θ ∈ [0, 1]`.
    AffineMix(Box<MonotoneExpr>, f64),
    /// `−ln(child)` for `child ∈ [0, 1]`; `−ln 0 = +∞`.
    NegLog(Box<MonotoneExpr>),
    /// `−ln(1 − child)` for `child ∈ [0, 1]`; value `+∞` at `child = 1`.
    NegLogComplement(Box<MonotoneExpr>),
    /// `c·child` with `c ≥ 0`.
    Scale(Box<MonotoneExpr>, f64),
    /// `num/den`. `den_lower_bound` is the declared positivity certificate:
    /// a lower bound for `den` on the open cube (0 allowed when `den` only
    /// vanishes at corners, where the `c/0⁺ = +∞` convention applies).
    Ratio {
        num: Box<MonotoneExpr>,
        den: Box<MonotoneExpr>,
        den_lower_bound: f64,
    },
    /// `exp(−λ·child)` with `λ ≥ 0`.
    ExpNeg(Box<MonotoneExpr>, f64),
}

/// Direction of a map in one variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
    Constant,
    Unknown,
}

impl Direction {
    fn flip(self) -> Direction {
        match self {
            Direction::NonDecreasing => Direction::NonIncreasing,
            Direction::NonIncreasing => Direction::NonDecreasing,
            d => d,
        }
    }

    /// True when the map can serve where a nondecreasing one is required.
    pub fn is_nondecreasing(self) -> bool {
        matches!(self, Direction::NonDecreasing | Direction::Constant)
    }

    pub fn is_nonincreasing(self) -> bool {
        matches!(self, Direction::NonIncreasing | Direction::Constant)
    }
}

/// Per-variable directions of an expression, one entry per `g_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionVector(pub Vec<Direction>);

impl DirectionVector {
    pub fn all_nondecreasing(&self) -> bool {
        self.0.iter().all(|d| d.is_nondecreasing())
    }

    pub fn all_nonincreasing(&self) -> bool {
        self.0.iter().all(|d| d.is_nonincreasing())
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|d| matches!(d, Direction::Constant))
    }

    pub fn any_unknown(&self) -> bool {
        self.0.iter().any(|d| matches!(d, Direction::Unknown))
    }
}

/// Evaluation / analysis errors.
#[derive(Debug, Clone, PartialEq)]
pub enum DslError {
    Syntax { offset: usize, message: String },
    VarOutOfRange { index: usize, arity: usize },
    Domain(String),
    NonFinite(String),
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslError::Syntax { offset, message } => {
                write!(f, "syntax error at byte {offset}: {message}")
            }
            DslError::VarOutOfRange { index, arity } => {
                write!(f, "expression references g{index} but only g1..g{arity} exist")
            }
            DslError::Domain(msg) => write!(f, "domain error: {msg}"),
            DslError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

impl std::error::Error for DslError {}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

impl MonotoneExpr {
    pub fn var(i: usize) -> MonotoneExpr {
        assert!(i >= 1, "variables are 1-based");
        MonotoneExpr::Var(i)
    }

    pub fn constant(c: f64) -> MonotoneExpr {
        MonotoneExpr::Const(c)
    }

    pub fn from_ext(v: ExtReal) -> MonotoneExpr {
        match v {
            ExtReal::NegInf => MonotoneExpr::NegInf,
            ExtReal::PosInf => MonotoneExpr::PosInf,
            ExtReal::Finite(c) => MonotoneExpr::Const(c),
        }
    }

    pub fn sum(terms: Vec<MonotoneExpr>) -> MonotoneExpr {
        MonotoneExpr::Sum(terms)
    }

    pub fn product(factors: Vec<MonotoneExpr>) -> MonotoneExpr {
        MonotoneExpr::Product(factors)
    }

    pub fn power(self, alpha: f64) -> MonotoneExpr {
        assert!(alpha >= 0.0, "Power exponent must be >= 0");
        MonotoneExpr::Power(Box::new(self), alpha)
    }

    pub fn complement(self) -> MonotoneExpr {
        MonotoneExpr::Complement(Box::new(self))
    }

    pub fn affine_mix(self, theta: f64) -> MonotoneExpr {
        assert!((0.0..=1.0).contains(&theta), "AffineMix needs θ in [0,1]");
        MonotoneExpr::AffineMix(Box::new(self), theta)
    }

    pub fn neg_log(self) -> MonotoneExpr {
        match self {
            MonotoneExpr::Complement(inner) => MonotoneExpr::NegLogComplement(inner),
            e => MonotoneExpr::NegLog(Box::new(e)),
        }
    }

    pub fn neg_log_complement(self) -> MonotoneExpr {
        MonotoneExpr::NegLogComplement(Box::new(self))
    }

    pub fn scale(self, c: f64) -> MonotoneExpr {
        assert!(c >= 0.0, "Scale factor must be >= 0");
        MonotoneExpr::Scale(Box::new(self), c)
    }

    pub fn ratio(num: MonotoneExpr, den: MonotoneExpr, den_lower_bound: f64) -> MonotoneExpr {
        assert!(den_lower_bound >= 0.0, "denominator bound must be >= 0");
        MonotoneExpr::Ratio {
            num: Box::new(num),
            den: Box::new(den),
            den_lower_bound,
        }
    }

    pub fn exp_neg(self, lambda: f64) -> MonotoneExpr {
        assert!(lambda >= 0.0, "ExpNeg rate must be >= 0");
        MonotoneExpr::ExpNeg(Box::new(self), lambda)
    }

    /// Highest variable index referenced (0 when the map is constant).
    pub fn arity(&self) -> usize {
        match self {
            MonotoneExpr::Var(i) => *i,
            MonotoneExpr::Const(_) | MonotoneExpr::PosInf | MonotoneExpr::NegInf => 0,
            MonotoneExpr::Sum(es) | MonotoneExpr::Product(es) => {
                es.iter().map(|e| e.arity()).max().unwrap_or(0)
            }
            MonotoneExpr::Power(e, _)
            | MonotoneExpr::Complement(e)
            | MonotoneExpr::AffineMix(e, _)
            | MonotoneExpr::NegLog(e)
            | MonotoneExpr::NegLogComplement(e)
            | MonotoneExpr::Scale(e, _)
            | MonotoneExpr::ExpNeg(e, _) => e.arity(),
            MonotoneExpr::Ratio { num, den, .. } => num.arity().max(den.arity()),
        }
    }

    /// Replaces `Var(i)` with `replacements[i−1]`; used to compose a
    /// univariate outer map with an inner multivariate one.
    pub fn substitute(&self, replacements: &[MonotoneExpr]) -> MonotoneExpr {
        match self {
            MonotoneExpr::Var(i) => replacements
                .get(*i - 1)
                .cloned()
                .unwrap_or_else(|| self.clone()),
            MonotoneExpr::Const(_) | MonotoneExpr::PosInf | MonotoneExpr::NegInf => self.clone(),
            MonotoneExpr::Sum(es) => {
                MonotoneExpr::Sum(es.iter().map(|e| e.substitute(replacements)).collect())
            }
            MonotoneExpr::Product(es) => {
                MonotoneExpr::Product(es.iter().map(|e| e.substitute(replacements)).collect())
            }
            MonotoneExpr::Power(e, a) => {
                MonotoneExpr::Power(Box::new(e.substitute(replacements)), *a)
            }
            MonotoneExpr::Complement(e) => {
                MonotoneExpr::Complement(Box::new(e.substitute(replacements)))
            }
            MonotoneExpr::AffineMix(e, t) => {
                MonotoneExpr::AffineMix(Box::new(e.substitute(replacements)), *t)
            }
            MonotoneExpr::NegLog(e) => MonotoneExpr::NegLog(Box::new(e.substitute(replacements))),
            MonotoneExpr::NegLogComplement(e) => {
                MonotoneExpr::NegLogComplement(Box::new(e.substitute(replacements)))
            }
            MonotoneExpr::Scale(e, c) => {
                MonotoneExpr::Scale(Box::new(e.substitute(replacements)), *c)
            }
            MonotoneExpr::Ratio { num, den, den_lower_bound } => MonotoneExpr::Ratio {
                num: Box::new(num.substitute(replacements)),
                den: Box::new(den.substitute(replacements)),
                den_lower_bound: *den_lower_bound,
            },
            MonotoneExpr::ExpNeg(e, l) => {
                MonotoneExpr::ExpNeg(Box::new(e.substitute(replacements)), *l)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn check_unit_interval(x: f64, what: &str) -> Result<f64, DslError> {
    if x < -EVAL_SLACK || x > 1.0 + EVAL_SLACK {
        return Err(DslError::Domain(format!("{what} must lie in [0,1], got {x}")));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Evaluates `expr` at a point of `[0,1]^m`.
pub fn eval(expr: &MonotoneExpr, point: &[f64]) -> Result<ExtReal, DslError> {
    use MonotoneExpr::*;
    match expr {
        Var(i) => {
            let x = *point
                .get(*i - 1)
                .ok_or(DslError::VarOutOfRange { index: *i, arity: point.len() })?;
            Ok(ExtReal::Finite(check_unit_interval(x, "variable value")?))
        }
        Const(c) => Ok(ExtReal::Finite(*c)),
        PosInf => Ok(ExtReal::PosInf),
        NegInf => Ok(ExtReal::NegInf),
        Sum(es) => {
            let mut acc = ExtReal::Finite(0.0);
            for e in es {
                let v = eval(e, point)?;
                acc = acc
                    .checked_add(v)
                    .map_err(|e| DslError::Domain(e.to_string()))?;
            }
            Ok(acc)
        }
        Product(es) => {
            let mut acc = ExtReal::Finite(1.0);
            for e in es {
                let v = eval(e, point)?;
                acc = acc
                    .checked_mul(v)
                    .map_err(|e| DslError::Domain(e.to_string()))?;
            }
            Ok(acc)
        }
        Power(e, alpha) => {
            if *alpha == 0.0 {
                return Ok(ExtReal::Finite(1.0));
            }
            match eval(e, point)? {
                ExtReal::PosInf => Ok(ExtReal::PosInf),
                ExtReal::NegInf => Err(DslError::Domain("(-inf)^alpha".into())),
                ExtReal::Finite(x) => {
                    if x < -EVAL_SLACK {
                        return Err(DslError::Domain(format!(
                            "Power base must be >= 0, got {x}"
                        )));
                    }
                    Ok(ExtReal::Finite(x.max(0.0).powf(*alpha)))
                }
            }
        }
        Complement(e) => match eval(e, point)? {
            ExtReal::Finite(x) => Ok(ExtReal::Finite(1.0 - x)),
            ExtReal::PosInf => Ok(ExtReal::NegInf),
            ExtReal::NegInf => Ok(ExtReal::PosInf),
        },
        AffineMix(e, theta) => {
            if *theta == 1.0 {
                return Ok(ExtReal::Finite(1.0));
            }
            match eval(e, point)? {
                ExtReal::Finite(x) => Ok(ExtReal::Finite((1.0 - theta) * x + theta)),
                inf => Ok(inf),
            }
        }
        NegLog(e) => match eval(e, point)? {
            ExtReal::Finite(x) => {
                let x = check_unit_interval(x, "NegLog argument")?;
                if x == 0.0 {
                    Ok(ExtReal::PosInf)
                } else {
                    Ok(ExtReal::Finite(-x.ln()))
                }
            }
            _ => Err(DslError::Domain("NegLog of an infinite value".into())),
        },
        NegLogComplement(e) => match eval(e, point)? {
            ExtReal::Finite(x) => {
                let x = check_unit_interval(x, "NegLogComplement argument")?;
                if x == 1.0 {
                    Ok(ExtReal::PosInf)
                } else {
                    // ln_1p keeps precision near x = 0.
                    Ok(ExtReal::Finite(-(-x).ln_1p()))
                }
            }
            _ => Err(DslError::Domain("NegLogComplement of an infinite value".into())),
        },
        Scale(e, c) => ExtReal::Finite(*c)
            .checked_mul(eval(e, point)?)
            .map_err(|e| DslError::Domain(e.to_string())),
        Ratio { num, den, .. } => {
            let n = eval(num, point)?;
            let d = eval(den, point)?;
            match (n, d) {
                (ExtReal::Finite(n), ExtReal::Finite(d)) => {
                    if d > 0.0 {
                        Ok(ExtReal::Finite(n / d))
                    } else if d >= -EVAL_SLACK && n > EVAL_SLACK {
                        // Corner limit: positive numerator over a vanishing
                        // denominator.
                        Ok(ExtReal::PosInf)
                    } else if d >= -EVAL_SLACK && n.abs() <= EVAL_SLACK {
                        Err(DslError::Domain("Ratio evaluates to 0/0".into()))
                    } else {
                        Err(DslError::Domain(format!(
                            "Ratio denominator must be > 0, got {d}"
                        )))
                    }
                }
                _ => Err(DslError::Domain("Ratio with infinite operand".into())),
            }
        }
        ExpNeg(e, lambda) => {
            if *lambda == 0.0 {
                return Ok(ExtReal::Finite(1.0));
            }
            match eval(e, point)? {
                ExtReal::Finite(x) => Ok(ExtReal::Finite((-lambda * x).exp())),
                ExtReal::PosInf => Ok(ExtReal::Finite(0.0)),
                ExtReal::NegInf => Ok(ExtReal::PosInf),
            }
        }
    }
}

/// Values at the all-zeros and all-ones corners of `[0,1]^m`.
pub fn corner_values(expr: &MonotoneExpr, m: usize) -> Result<(ExtReal, ExtReal), DslError> {
    let zeros = vec![0.0; m.max(expr.arity())];
    let ones = vec![1.0; m.max(expr.arity())];
    Ok((eval(expr, &zeros)?, eval(expr, &ones)?))
}

// ---------------------------------------------------------------------------
// Direction, strictness, range analysis
// ---------------------------------------------------------------------------

/// Conservative value range of a node over `[0,1]^m` (IEEE infinities as
/// bounds; used only to gate direction rules, never for evaluation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    fn point(x: f64) -> Range {
        Range { lo: x, hi: x }
    }
    fn nonnegative(self) -> bool {
        self.lo >= 0.0
    }
    fn positive(self) -> bool {
        self.lo > 0.0
    }
    fn inside_unit(self) -> bool {
        self.lo >= -EVAL_SLACK && self.hi <= 1.0 + EVAL_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct VarInfo {
    pub dir: Direction,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Analysis {
    pub vars: Vec<VarInfo>,
    pub range: Range,
}

fn combine_sum(a: VarInfo, b: VarInfo) -> VarInfo {
    use Direction::*;
    let dir = match (a.dir, b.dir) {
        (Unknown, _) | (_, Unknown) => Unknown,
        (Constant, d) | (d, Constant) => d,
        (NonDecreasing, NonDecreasing) => NonDecreasing,
        (NonIncreasing, NonIncreasing) => NonIncreasing,
        _ => Unknown,
    };
    let strict = match dir {
        NonDecreasing | NonIncreasing => a.strict || b.strict,
        _ => false,
    };
    VarInfo { dir, strict }
}

fn interval_sum(a: Range, b: Range) -> Range {
    Range { lo: a.lo + b.lo, hi: a.hi + b.hi }
}

fn interval_product(a: Range, b: Range) -> Range {
    let candidates = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in candidates {
        // 0 · ∞ at a range corner: treat conservatively as unbounded.
        let c = if c.is_nan() { f64::INFINITY } else { c };
        lo = lo.min(c);
        hi = hi.max(if c == f64::INFINITY { f64::INFINITY } else { c });
    }
    if candidates.iter().any(|c| c.is_nan()) {
        return Range { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
    }
    Range { lo, hi }
}

pub(crate) fn analyze(expr: &MonotoneExpr, m: usize) -> Analysis {
    use Direction::*;
    use MonotoneExpr::*;
    let m = m.max(expr.arity());
    let constant_info = |range: Range| Analysis {
        vars: vec![VarInfo { dir: Constant, strict: false }; m],
        range,
    };
    match expr {
        Var(i) => {
            let mut vars = vec![VarInfo { dir: Constant, strict: false }; m];
            if *i >= 1 && *i <= m {
                vars[*i - 1] = VarInfo { dir: NonDecreasing, strict: true };
            }
            Analysis { vars, range: Range { lo: 0.0, hi: 1.0 } }
        }
        Const(c) => constant_info(Range::point(*c)),
        PosInf => constant_info(Range::point(f64::INFINITY)),
        NegInf => constant_info(Range::point(f64::NEG_INFINITY)),
        Sum(es) => {
            let mut acc = constant_info(Range::point(0.0));
            for e in es {
                let a = analyze(e, m);
                for v in 0..m {
                    acc.vars[v] = combine_sum(acc.vars[v], a.vars[v]);
                }
                acc.range = interval_sum(acc.range, a.range);
            }
            acc
        }
        Product(es) => {
            let parts: Vec<Analysis> = es.iter().map(|e| analyze(e, m)).collect();
            let mut range = Range::point(1.0);
            for p in &parts {
                range = interval_product(range, p.range);
            }
            let all_nonneg = parts.iter().all(|p| p.range.nonnegative());
            let mut vars = Vec::with_capacity(m);
            for v in 0..m {
                let infos: Vec<VarInfo> = parts.iter().map(|p| p.vars[v]).collect();
                if infos.iter().all(|i| i.dir == Constant) {
                    vars.push(VarInfo { dir: Constant, strict: false });
                    continue;
                }
                if !all_nonneg {
                    vars.push(VarInfo { dir: Unknown, strict: false });
                    continue;
                }
                let dir = if infos.iter().all(|i| i.dir.is_nondecreasing()) {
                    NonDecreasing
                } else if infos.iter().all(|i| i.dir.is_nonincreasing()) {
                    NonIncreasing
                } else {
                    Unknown
                };
                // Strict only when one factor is strict and every other
                // factor stays strictly positive.
                let strict = matches!(dir, NonDecreasing | NonIncreasing)
                    && infos.iter().enumerate().any(|(idx, i)| {
                        i.strict
                            && parts
                                .iter()
                                .enumerate()
                                .all(|(jdx, p)| jdx == idx || p.range.positive())
                    });
                vars.push(VarInfo { dir, strict });
            }
            Analysis { vars, range }
        }
        Power(e, alpha) => {
            if *alpha == 0.0 {
                return constant_info(Range::point(1.0));
            }
            let a = analyze(e, m);
            if !a.range.nonnegative() && a.range.lo < -EVAL_SLACK {
                return Analysis {
                    vars: vec![VarInfo { dir: Unknown, strict: false }; m],
                    range: Range { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
                };
            }
            let lo = a.range.lo.max(0.0).powf(*alpha);
            let hi = if a.range.hi == f64::INFINITY {
                f64::INFINITY
            } else {
                a.range.hi.max(0.0).powf(*alpha)
            };
            Analysis { vars: a.vars, range: Range { lo, hi } }
        }
        Complement(e) => {
            let a = analyze(e, m);
            Analysis {
                vars: a
                    .vars
                    .iter()
                    .map(|v| VarInfo { dir: v.dir.flip(), strict: v.strict })
                    .collect(),
                range: Range { lo: 1.0 - a.range.hi, hi: 1.0 - a.range.lo },
            }
        }
        AffineMix(e, theta) => {
            if *theta == 1.0 {
                return constant_info(Range::point(1.0));
            }
            let a = analyze(e, m);
            Analysis {
                vars: a.vars,
                range: Range {
                    lo: (1.0 - theta) * a.range.lo + theta,
                    hi: (1.0 - theta) * a.range.hi + theta,
                },
            }
        }
        NegLog(e) => {
            let a = analyze(e, m);
            if !a.range.inside_unit() {
                return Analysis {
                    vars: vec![VarInfo { dir: Unknown, strict: false }; m],
                    range: Range { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
                };
            }
            let lo = if a.range.hi >= 1.0 { 0.0 } else { -a.range.hi.ln() };
            let hi = if a.range.lo <= 0.0 { f64::INFINITY } else { -a.range.lo.ln() };
            Analysis {
                vars: a
                    .vars
                    .iter()
                    .map(|v| VarInfo { dir: v.dir.flip(), strict: v.strict })
                    .collect(),
                range: Range { lo, hi },
            }
        }
        NegLogComplement(e) => {
            let a = analyze(e, m);
            if !a.range.inside_unit() {
                return Analysis {
                    vars: vec![VarInfo { dir: Unknown, strict: false }; m],
                    range: Range { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
                };
            }
            let lo = if a.range.lo <= 0.0 { 0.0 } else { -(-a.range.lo).ln_1p() };
            let hi = if a.range.hi >= 1.0 {
                f64::INFINITY
            } else {
                -(-a.range.hi).ln_1p()
            };
            Analysis { vars: a.vars, range: Range { lo, hi } }
        }
        Scale(e, c) => {
            if *c == 0.0 {
                return constant_info(Range::point(0.0));
            }
            let a = analyze(e, m);
            Analysis {
                vars: a.vars,
                range: Range { lo: c * a.range.lo, hi: c * a.range.hi },
            }
        }
        Ratio { num, den, den_lower_bound } => {
            analyze_ratio(num, den, *den_lower_bound, m)
        }
        ExpNeg(e, lambda) => {
            if *lambda == 0.0 {
                return constant_info(Range::point(1.0));
            }
            let a = analyze(e, m);
            let lo = if a.range.hi == f64::INFINITY { 0.0 } else { (-lambda * a.range.hi).exp() };
            let hi = if a.range.lo == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                (-lambda * a.range.lo).exp()
            };
            Analysis {
                vars: a
                    .vars
                    .iter()
                    .map(|v| VarInfo { dir: v.dir.flip(), strict: v.strict })
                    .collect(),
                range: Range { lo, hi },
            }
        }
    }
}

/// Direction rules for `num/den`.
///
/// Two sound patterns:
/// 1. competing form `n/(n + r)` (the denominator is a sum containing the
///    numerator): the map rises exactly when `n` rises and `r` falls;
/// 2. general quotient with `num ≥ 0`, `den > 0`: opposite-moving numerator
///    and denominator give a known direction.
fn analyze_ratio(num: &MonotoneExpr, den: &MonotoneExpr, den_lb: f64, m: usize) -> Analysis {
    use Direction::*;
    let a_num = analyze(num, m);
    let a_den = analyze(den, m);

    let den_lo = a_den.range.lo.max(den_lb);
    let range = if a_num.range.nonnegative() && den_lo >= 0.0 {
        let lo = if a_den.range.hi == f64::INFINITY || a_den.range.hi == 0.0 {
            0.0
        } else {
            a_num.range.lo / a_den.range.hi
        };
        let hi = if den_lo == 0.0 {
            f64::INFINITY
        } else {
            a_num.range.hi / den_lo
        };
        Range { lo, hi }
    } else {
        Range { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    };

    let unknown = Analysis {
        vars: vec![VarInfo { dir: Unknown, strict: false }; m],
        range,
    };
    if !a_num.range.nonnegative() || den_lo < 0.0 {
        return unknown;
    }

    // Competing form: den = num + rest (structurally).
    let rest_analysis = match den {
        MonotoneExpr::Sum(terms) => terms
            .iter()
            .position(|t| t == num)
            .map(|pos| {
                let rest: Vec<MonotoneExpr> = terms
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != pos)
                    .map(|(_, t)| t.clone())
                    .collect();
                analyze(&MonotoneExpr::Sum(rest), m)
            }),
        _ => None,
    };

    let mut vars = Vec::with_capacity(m);
    for v in 0..m {
        let n = a_num.vars[v];
        let d = a_den.vars[v];
        let info = if let Some(rest) = rest_analysis.as_ref().filter(|r| r.range.nonnegative()) {
            let r = rest.vars[v];
            let dir = match (n.dir, r.dir) {
                (Constant, Constant) => Constant,
                (nd, rd) if nd.is_nondecreasing() && rd.is_nonincreasing() => NonDecreasing,
                (nd, rd) if nd.is_nonincreasing() && rd.is_nondecreasing() => NonIncreasing,
                _ => Unknown,
            };
            let strict = matches!(dir, NonDecreasing | NonIncreasing)
                && ((n.strict && r.strict)
                    || (n.strict && rest.range.positive())
                    || (r.strict && a_num.range.positive()));
            VarInfo { dir, strict }
        } else {
            let dir = match (n.dir, d.dir) {
                (Constant, Constant) => Constant,
                (nd, dd) if nd.is_nondecreasing() && dd.is_nonincreasing() => NonDecreasing,
                (nd, dd) if nd.is_nonincreasing() && dd.is_nondecreasing() => NonIncreasing,
                _ => Unknown,
            };
            let strict = matches!(dir, NonDecreasing | NonIncreasing)
                && (n.strict || (d.strict && a_num.range.positive()));
            VarInfo { dir, strict }
        };
        vars.push(info);
    }
    Analysis { vars, range }
}

/// Sound per-variable direction inference. Never claims a direction the map
/// does not have; answers [`Direction::Unknown`] when the rules cannot tell.
pub fn infer_direction(expr: &MonotoneExpr, m: usize) -> DirectionVector {
    DirectionVector(analyze(expr, m).vars.into_iter().map(|v| v.dir).collect())
}

/// True when inference certifies the map strictly monotone (same strict
/// sense in every non-constant variable, at least one strict variable).
pub fn is_certified_strict(expr: &MonotoneExpr, m: usize) -> bool {
    let a = analyze(expr, m);
    let mut sense: Option<Direction> = None;
    for v in &a.vars {
        match v.dir {
            Direction::Constant => continue,
            Direction::Unknown => return false,
            d => {
                if !v.strict {
                    return false;
                }
                match sense {
                    None => sense = Some(d),
                    Some(s) if s == d => {}
                    _ => return false,
                }
            }
        }
    }
    sense.is_some()
}

// ---------------------------------------------------------------------------
// Partial derivatives
// ---------------------------------------------------------------------------

/// Which path produced a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartialMethod {
    Symbolic,
    CentralDifference,
}

/// `∂ expr / ∂ g_var` at `point` (1-based `var`).
///
/// Every node has a symbolic rule; when the symbolic value degenerates
/// (e.g. `x^{α−1}` at the edge) the central difference of [`eval`] with step
/// [`FD_STEP`] clamped to `[0,1]` is used instead, and the method is
/// reported.
pub fn partial_with_method(
    expr: &MonotoneExpr,
    var: usize,
    point: &[f64],
) -> Result<(f64, PartialMethod), DslError> {
    match eval_with_derivative(expr, var, point) {
        Ok((_, d)) if d.is_finite() => Ok((d, PartialMethod::Symbolic)),
        Err(e @ DslError::VarOutOfRange { .. }) => Err(e),
        _ => {
            let x = point[var - 1];
            let h = FD_STEP;
            let lo = (x - h).max(0.0);
            let hi = (x + h).min(1.0);
            let mut p_lo = point.to_vec();
            let mut p_hi = point.to_vec();
            p_lo[var - 1] = lo;
            p_hi[var - 1] = hi;
            let f_lo = eval(expr, &p_lo)?
                .finite()
                .ok_or_else(|| DslError::NonFinite("finite difference hit ±inf".into()))?;
            let f_hi = eval(expr, &p_hi)?
                .finite()
                .ok_or_else(|| DslError::NonFinite("finite difference hit ±inf".into()))?;
            Ok(((f_hi - f_lo) / (hi - lo), PartialMethod::CentralDifference))
        }
    }
}

/// Convenience wrapper of [`partial_with_method`].
pub fn partial(expr: &MonotoneExpr, var: usize, point: &[f64]) -> Result<f64, DslError> {
    partial_with_method(expr, var, point).map(|(d, _)| d)
}

/// Forward-mode value+derivative evaluation. Derivative may come out
/// non-finite at domain edges; the caller decides whether to fall back.
fn eval_with_derivative(
    expr: &MonotoneExpr,
    var: usize,
    point: &[f64],
) -> Result<(f64, f64), DslError> {
    use MonotoneExpr::*;
    match expr {
        Var(i) => {
            let x = *point
                .get(*i - 1)
                .ok_or(DslError::VarOutOfRange { index: *i, arity: point.len() })?;
            Ok((x, if *i == var { 1.0 } else { 0.0 }))
        }
        Const(c) => Ok((*c, 0.0)),
        PosInf | NegInf => Err(DslError::NonFinite("derivative of ±inf".into())),
        Sum(es) => {
            let mut v = 0.0;
            let mut d = 0.0;
            for e in es {
                let (ev, ed) = eval_with_derivative(e, var, point)?;
                v += ev;
                d += ed;
            }
            Ok((v, d))
        }
        Product(es) => {
            // Product rule; values of all siblings enter each term.
            let parts: Result<Vec<(f64, f64)>, DslError> = es
                .iter()
                .map(|e| eval_with_derivative(e, var, point))
                .collect();
            let parts = parts?;
            let value: f64 = parts.iter().map(|(v, _)| v).product();
            let mut d = 0.0;
            for i in 0..parts.len() {
                let mut term = parts[i].1;
                for (j, (v, _)) in parts.iter().enumerate() {
                    if j != i {
                        term *= v;
                    }
                }
                d += term;
            }
            Ok((value, d))
        }
        Power(e, alpha) => {
            if *alpha == 0.0 {
                return Ok((1.0, 0.0));
            }
            let (v, d) = eval_with_derivative(e, var, point)?;
            let v = v.max(0.0);
            Ok((v.powf(*alpha), alpha * v.powf(alpha - 1.0) * d))
        }
        Complement(e) => {
            let (v, d) = eval_with_derivative(e, var, point)?;
            Ok((1.0 - v, -d))
        }
        AffineMix(e, theta) => {
            if *theta == 1.0 {
                return Ok((1.0, 0.0));
            }
            let (v, d) = eval_with_derivative(e, var, point)?;
            Ok(((1.0 - theta) * v + theta, (1.0 - theta) * d))
        }
        NegLog(e) => {
            let (v, d) = eval_with_derivative(e, var, point)?;
            if v <= 0.0 {
                return Err(DslError::NonFinite("NegLog at 0".into()));
            }
            Ok((-v.ln(), -d / v))
        }
        NegLogComplement(e) => {
            let (v, d) = eval_with_derivative(e, var, point)?;
            if v >= 1.0 {
                return Err(DslError::NonFinite("NegLogComplement at 1".into()));
            }
            Ok((-(-v).ln_1p(), d / (1.0 - v)))
        }
        Scale(e, c) => {
            let (v, d) = eval_with_derivative(e, var, point)?;
            Ok((c * v, c * d))
        }
        Ratio { num, den, .. } => {
            let (n, dn) = eval_with_derivative(num, var, point)?;
            let (dv, dd) = eval_with_derivative(den, var, point)?;
            if dv <= 0.0 {
                return Err(DslError::NonFinite("Ratio denominator reaches 0".into()));
            }
            Ok((n / dv, (dn * dv - n * dd) / (dv * dv)))
        }
        ExpNeg(e, lambda) => {
            if *lambda == 0.0 {
                return Ok((1.0, 0.0));
            }
            let (v, d) = eval_with_derivative(e, var, point)?;
            let value = (-lambda * v).exp();
            Ok((value, -lambda * value * d))
        }
    }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Numeric monotonicity scan used by the test suite to confirm inference:
/// each variable is swept over `grid` points with the others fixed at
/// 0, 1/2 and 1. Returns a description of the first observed violation of
/// the claimed direction beyond `tol`, or `None`.
pub fn direction_scan_violation(
    expr: &MonotoneExpr,
    m: usize,
    claimed: &DirectionVector,
    grid: usize,
    tol: f64,
) -> Option<String> {
    let m = m.max(expr.arity());
    let anchors = [0.0, 0.5, 1.0];
    let mut others: Vec<usize> = vec![0; m];
    loop {
        let base: Vec<f64> = others.iter().map(|&i| anchors[i]).collect();
        for v in 0..m {
            let dir = claimed.0[v];
            if matches!(dir, Direction::Unknown) {
                continue;
            }
            let mut prev: Option<f64> = None;
            for k in 0..grid {
                let mut p = base.clone();
                p[v] = k as f64 / (grid - 1) as f64;
                let val = match eval(expr, &p) {
                    Ok(x) => x.as_f64(),
                    Err(_) => continue,
                };
                if let Some(pv) = prev {
                    let delta = val - pv;
                    let bad = match dir {
                        Direction::NonDecreasing => delta < -tol,
                        Direction::NonIncreasing => delta > tol,
                        Direction::Constant => delta.abs() > tol,
                        Direction::Unknown => false,
                    };
                    if bad {
                        return Some(format!(
                            "claimed {dir:?} in g{} violated near {p:?}: step {delta:e}",
                            v + 1
                        ));
                    }
                }
                if val.is_finite() {
                    prev = Some(val);
                } else {
                    prev = None;
                }
            }
        }
        // Advance the anchor combination.
        let mut carry = true;
        for slot in others.iter_mut() {
            if carry {
                *slot += 1;
                if *slot == anchors.len() {
                    *slot = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            return None;
        }
    }
}

impl fmt::Display for MonotoneExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MonotoneExpr::*;
        match self {
            Var(i) => write!(f, "g{i}"),
            Const(c) => write!(f, "{c}"),
            PosInf => write!(f, "inf"),
            NegInf => write!(f, "-inf"),
            Sum(es) => {
                write!(f, "(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            Product(es) => {
                write!(f, "(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            Power(e, a) => write!(f, "{e}^{a}"),
            Complement(e) => write!(f, "(1 - {e})"),
            AffineMix(e, t) => write!(f, "({t} + {} * {e})", 1.0 - t),
            NegLog(e) => write!(f, "-ln({e})"),
            NegLogComplement(e) => write!(f, "-ln((1 - {e}))"),
            Scale(e, c) => write!(f, "({c} * {e})"),
            Ratio { num, den, .. } => write!(f, "[{num} / {den}]"),
            ExpNeg(e, l) => write!(f, "exp(-{l} * {e})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(i: usize) -> MonotoneExpr {
        MonotoneExpr::var(i)
    }

    #[test]
    fn eval_basic_arithmetic() {
        // (1−θ)·g1 + θ at g1 = 0.4 with θ = 0.5, times g2².
        let e = MonotoneExpr::product(vec![g(1).affine_mix(0.5), g(2).power(2.0)]);
        let v = eval(&e, &[0.4, 0.5]).unwrap();
        assert!((v.as_f64() - 0.175).abs() < 1e-15);
    }

    #[test]
    fn eval_complement_and_limits() {
        assert_eq!(
            eval(&g(1).complement(), &[0.3]).unwrap(),
            ExtReal::Finite(0.7)
        );
        assert_eq!(
            eval(&g(1).neg_log_complement(), &[1.0]).unwrap(),
            ExtReal::PosInf
        );
        assert_eq!(eval(&MonotoneExpr::NegLog(Box::new(g(1))), &[0.0]).unwrap(), ExtReal::PosInf);
        assert_eq!(eval(&g(1).exp_neg(2.0), &[0.0]).unwrap(), ExtReal::Finite(1.0));
    }

    #[test]
    fn eval_ratio_conventions() {
        // Odds g/(1−g): finite inside, +inf at the corner.
        let odds = MonotoneExpr::ratio(g(1), g(1).complement(), 0.0);
        assert!((eval(&odds, &[0.2]).unwrap().as_f64() - 0.25).abs() < 1e-15);
        assert_eq!(eval(&odds, &[1.0]).unwrap(), ExtReal::PosInf);
        // 0/0 is a domain error.
        let zz = MonotoneExpr::ratio(g(1), g(1), 0.0);
        assert!(eval(&zz, &[0.0]).is_err());
    }

    #[test]
    fn corner_values_examples() {
        assert_eq!(
            corner_values(&g(1), 1).unwrap(),
            (ExtReal::Finite(0.0), ExtReal::Finite(1.0))
        );
        assert_eq!(
            corner_values(&g(1).neg_log_complement(), 1).unwrap(),
            (ExtReal::Finite(0.0), ExtReal::PosInf)
        );
        let (z, o) = corner_values(&g(1).affine_mix(0.25), 1).unwrap();
        assert!((z.as_f64() - 0.25).abs() < 1e-15);
        assert!((o.as_f64() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn directions_simple() {
        let d = infer_direction(&g(1), 1);
        assert_eq!(d.0, vec![Direction::NonDecreasing]);
        let d = infer_direction(&g(1).complement(), 1);
        assert_eq!(d.0, vec![Direction::NonIncreasing]);
    }

    #[test]
    fn directions_product_form() {
        // ((1−θ)g1 + θ)^α · (1 − (1−g2)^β), θ ∈ [0,1], α, β ≥ 0.
        let e = MonotoneExpr::product(vec![
            g(1).affine_mix(0.3).power(2.0),
            g(2).complement().power(3.0).complement(),
        ]);
        let d = infer_direction(&e, 2);
        assert_eq!(d.0, vec![Direction::NonDecreasing, Direction::NonDecreasing]);
        // Confirmed by a numeric sweep (the derived oracle for this case).
        assert_eq!(direction_scan_violation(&e, 2, &d, 33, 1e-12), None);
    }

    #[test]
    fn directions_marshall_olkin_ratio() {
        // g/(g + b(1−g)) rises in g for every b > 0, including b < 1 where
        // the naive quotient rule is inconclusive.
        for &b in &[0.5, 1.0, 2.0] {
            let num = g(1);
            let den = MonotoneExpr::sum(vec![g(1), g(1).complement().scale(b)]);
            let e = MonotoneExpr::ratio(num, den, b.min(1.0));
            let d = infer_direction(&e, 1);
            assert_eq!(d.0, vec![Direction::NonDecreasing], "b={b}");
            assert!(is_certified_strict(&e, 1), "b={b}");
            assert_eq!(direction_scan_violation(&e, 1, &d, 33, 1e-12), None);
        }
    }

    #[test]
    fn direction_unknown_on_opposing_sum() {
        // 2g + (1−g) is numerically increasing but the algebra cannot tell.
        let e = MonotoneExpr::sum(vec![g(1).scale(2.0), g(1).complement()]);
        let d = infer_direction(&e, 1);
        assert_eq!(d.0, vec![Direction::Unknown]);
    }

    #[test]
    fn complement_is_exact() {
        let e = g(1).complement();
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let v = eval(&e, &[x]).unwrap().as_f64();
            assert_eq!(v, 1.0 - x);
        }
    }

    #[test]
    fn partials_pinned() {
        assert!((partial(&g(1), 1, &[0.37]).unwrap() - 1.0).abs() < 1e-15);
        assert!((partial(&g(1).power(2.0), 1, &[0.5]).unwrap() - 1.0).abs() < 1e-15);
        // d/dg −ln(1−g) = 1/(1−g) = 2 at g = 0.5.
        assert!(
            (partial(&g(1).neg_log_complement(), 1, &[0.5]).unwrap() - 2.0).abs() < 1e-12
        );
    }

    #[test]
    fn partials_match_finite_differences() {
        let exprs = vec![
            g(1).affine_mix(0.3).power(2.5),
            MonotoneExpr::product(vec![g(1), g(2).complement().power(2.0)]),
            g(1).neg_log_complement(),
            MonotoneExpr::ratio(
                g(1),
                MonotoneExpr::sum(vec![g(1), g(1).complement().scale(2.0)]),
                1.0,
            ),
            g(1).exp_neg(1.5),
        ];
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.05 + 0.9 * ((state >> 11) as f64 / (1u64 << 53) as f64)
        };
        for e in &exprs {
            let m = e.arity();
            for _ in 0..20 {
                let p: Vec<f64> = (0..m).map(|_| next()).collect();
                for v in 1..=m {
                    let (d, method) = partial_with_method(e, v, &p).unwrap();
                    assert_eq!(method, PartialMethod::Symbolic);
                    let h = 1e-6;
                    let mut pl = p.clone();
                    let mut ph = p.clone();
                    pl[v - 1] = (p[v - 1] - h).max(0.0);
                    ph[v - 1] = (p[v - 1] + h).min(1.0);
                    let fd = (eval(e, &ph).unwrap().as_f64() - eval(e, &pl).unwrap().as_f64())
                        / (ph[v - 1] - pl[v - 1]);
                    let denom = fd.abs().max(1.0);
                    assert!(
                        (d - fd).abs() / denom < 1e-5,
                        "expr {e}, var {v}, point {p:?}: symbolic {d} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn substitution_composes() {
        let outer = g(1).neg_log(); // −ln(t)
        let inner = MonotoneExpr::product(vec![g(1), g(2)]);
        let composed = outer.substitute(&[inner]);
        let v = eval(&composed, &[0.5, 0.5]).unwrap().as_f64();
        assert!((v - (-(0.25f64).ln())).abs() < 1e-14);
    }
}
