//! N-functions of `(p, δ)`-type, their shifts and conjugates, and the
//! vector-valued constitutive maps built from them.
//!
//! For `p > 1`, `δ ≥ 0` and a shift `a ≥ 0` the shifted N-function is
//! `φ_a(t) = ∫₀ᵗ (δ + a + s)^{p-2} s ds`. The constitutive laws act on
//! 2-vectors (scalar unknowns in two dimensions):
//!
//! * `S_a(Q) = (δ + a + |Q|)^{p-2} Q` (with `a = 0` the primal law),
//! * `F(Q) = (δ + |Q|)^{(p-2)/2} Q`, `F*(Q) = (δ^{p-1} + |Q|)^{(p'-2)/2} Q`,
//! * `D(S) = (δ^{2(p-1)} + |S|²)^{(p'-2)/2} S`, the flux-to-gradient law of
//!   the mixed experiments.
//!
//! Monotone radial maps are inverted with a bracketed Newton iteration.

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

const RADIAL_MAX_ITER: usize = 200;

#[inline]
pub fn norm(q: Vec2) -> f64 {
    q[0].hypot(q[1])
}

#[inline]
fn scale(c: f64, q: Vec2) -> Vec2 {
    [c * q[0], c * q[1]]
}

/// Parameters `(p, δ, a)` of a shifted N-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NFunctionParams {
    pub p: f64,
    pub delta: f64,
    pub shift: f64,
}

/// Selects the value or the derivative of an N-function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiQuantity {
    Value,
    Deriv,
}

impl NFunctionParams {
    pub fn new(p: f64, delta: f64, shift: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
        }
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
        }
        Ok(Self { p, delta, shift })
    }

    /// Same `p` and `δ`, new shift.
    pub fn with_shift(self, shift: f64) -> Self {
        Self { shift, ..self }
    }

    /// Conjugate exponent `p' = p / (p - 1)`.
    pub fn p_conj(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    #[inline]
    fn offset(&self) -> f64 {
        self.delta + self.shift
    }

    /// `φ_a'(t) = (δ + a + t)^{p-2} t`.
    pub fn deriv(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        (self.offset() + t).powf(self.p - 2.0) * t
    }

    /// `φ_a''(t) = (δ + a + t)^{p-3} (δ + a + (p - 1) t)`.
    pub fn second_deriv(&self, t: f64) -> f64 {
        let c = self.offset();
        (c + t).powf(self.p - 3.0) * (c + (self.p - 1.0) * t)
    }

    /// `φ_a(t)` in closed form.
    pub fn value(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let p = self.p;
        let c = self.offset();
        if c == 0.0 {
            return t.powf(p) / p;
        }
        let x = t / c;
        if x < 0.5 {
            // c^{p-2} t² Σ_k binom(p-2, k) x^k / (k + 2)
            let mut coeff = 1.0;
            let mut xk = 1.0;
            let mut sum = 0.0;
            for k in 0..200 {
                let term = coeff * xk / (k as f64 + 2.0);
                sum += term;
                if term.abs() <= 1e-17 * sum.abs() {
                    break;
                }
                coeff *= (p - 2.0 - k as f64) / (k as f64 + 1.0);
                xk *= x;
            }
            c.powf(p - 2.0) * t * t * sum
        } else {
            let ct = c + t;
            ct.powf(p - 1.0) * (ct / p - c / (p - 1.0)) + c.powf(p) / (p * (p - 1.0))
        }
    }

    /// Value or derivative, rejecting negative arguments.
    pub fn eval(&self, t: f64, what: PhiQuantity) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeArgument(t));
        }
        Ok(match what {
            PhiQuantity::Value => self.value(t),
            PhiQuantity::Deriv => self.deriv(t),
        })
    }

    /// `(φ_a')^{-1}(t)`, the maximiser in the conjugate.
    pub fn deriv_inverse(&self, t: f64) -> Result<f64> {
        radial_inverse(t, |s| self.deriv(s), |s| self.second_deriv(s))
    }

    /// `(φ_a)*(t) = sup_{s ≥ 0} (t s - φ_a(s))`.
    pub fn conj(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeArgument(t));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let s = self.deriv_inverse(t)?;
        Ok((t * s - self.value(s)).max(0.0))
    }
}

/// Solves `f(r) = target` for `r ≥ 0` where `f` is strictly increasing with
/// `f(0) = 0`.
pub fn radial_inverse(
    target: f64,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(Error::NonFinite(format!("radial target {target}")));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = target.max(1.0);
    let mut grow = 0;
    while f(hi) < target {
        lo = hi;
        hi *= 4.0;
        grow += 1;
        if grow > 600 {
            return Err(Error::InversionFailed {
                target,
                iterations: grow,
            });
        }
    }
    // shrink the bracket from above before Newton
    while hi > 1e-300 && f(0.5 * hi) >= target && lo == 0.0 {
        hi *= 0.5;
    }
    if lo == 0.0 {
        lo = 0.5 * hi;
        if f(lo) >= target {
            lo = 0.0;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..RADIAL_MAX_ITER {
        let r = f(x) - target;
        if r == 0.0 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 && d.is_finite() { x - r / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-16 * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::InversionFailed {
        target,
        iterations: RADIAL_MAX_ITER,
    })
}

/// Which constitutive relation a [`ConstitutiveLaw`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawVariant {
    /// `S(Q) = (δ + |Q|)^{p-2} Q`; the shift of the parameters is ignored.
    PrimalS,
    /// `S_a(Q) = (δ + a + |Q|)^{p-2} Q`.
    ShiftedS,
    /// `D(S) = (δ^{2(p-1)} + |S|²)^{(p'-2)/2} S`.
    PaperD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawQuantity {
    Value,
    Jacobian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawOutput {
    Value(Vec2),
    Jacobian(Mat2),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaturalDistance {
    F,
    FStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DMode {
    PaperDValue,
    PaperDInverse,
    SInverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstitutiveLaw {
    pub params: NFunctionParams,
    pub variant: LawVariant,
}

impl ConstitutiveLaw {
    pub fn new(params: NFunctionParams, variant: LawVariant) -> Self {
        Self { params, variant }
    }

    pub fn primal(p: f64, delta: f64) -> Result<Self> {
        Ok(Self::new(NFunctionParams::new(p, delta, 0.0)?, LawVariant::PrimalS))
    }

    pub fn shifted(p: f64, delta: f64, shift: f64) -> Result<Self> {
        Ok(Self::new(NFunctionParams::new(p, delta, shift)?, LawVariant::ShiftedS))
    }

    pub fn paper_d(p: f64, delta: f64) -> Result<Self> {
        Ok(Self::new(NFunctionParams::new(p, delta, 0.0)?, LawVariant::PaperD))
    }

    fn s_offset(&self) -> f64 {
        match self.variant {
            LawVariant::ShiftedS => self.params.delta + self.params.shift,
            _ => self.params.delta,
        }
    }

    fn d_offset(&self) -> f64 {
        self.params.delta.powf(2.0 * (self.params.p - 1.0))
    }

    /// Applies the law.
    pub fn apply(&self, q: Vec2) -> Vec2 {
        match self.variant {
            LawVariant::PrimalS | LawVariant::ShiftedS => self.s_value(q),
            LawVariant::PaperD => self.d_value(q),
        }
    }

    /// Derivative of [`Self::apply`].
    pub fn jacobian(&self, q: Vec2) -> Result<Mat2> {
        match self.variant {
            LawVariant::PrimalS | LawVariant::ShiftedS => self.s_jacobian(q),
            LawVariant::PaperD => self.d_jacobian(q),
        }
    }

    /// Inverse of [`Self::apply`].
    pub fn invert(&self, g: Vec2) -> Result<Vec2> {
        match self.variant {
            LawVariant::PrimalS | LawVariant::ShiftedS => self.s_inverse(g),
            LawVariant::PaperD => self.d_inverse(g),
        }
    }

    /// `(c + |Q|)^{p-2} Q` with `c = δ` (primal) or `δ + a` (shifted).
    pub fn s_value(&self, q: Vec2) -> Vec2 {
        let r = norm(q);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        scale((self.s_offset() + r).powf(self.params.p - 2.0), q)
    }

    pub fn s_jacobian(&self, q: Vec2) -> Result<Mat2> {
        let p = self.params.p;
        let c = self.s_offset();
        let r = norm(q);
        if r == 0.0 {
            if c == 0.0 {
                if p == 2.0 {
                    return Ok([[1.0, 0.0], [0.0, 1.0]]);
                }
                if p < 3.0 {
                    return Err(Error::SingularLaw { p });
                }
                return Ok([[0.0; 2]; 2]);
            }
            let d = c.powf(p - 2.0);
            return Ok([[d, 0.0], [0.0, d]]);
        }
        let cr = c + r;
        let a = cr.powf(p - 2.0);
        let b = (p - 2.0) * cr.powf(p - 3.0) / r;
        Ok([
            [a + b * q[0] * q[0], b * q[0] * q[1]],
            [b * q[1] * q[0], a + b * q[1] * q[1]],
        ])
    }

    /// `D(S) = (δ^{2(p-1)} + |S|²)^{(p'-2)/2} S`.
    pub fn d_value(&self, s: Vec2) -> Vec2 {
        let r2 = s[0] * s[0] + s[1] * s[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        let pc = self.params.p_conj();
        scale((self.d_offset() + r2).powf(0.5 * (pc - 2.0)), s)
    }

    pub fn d_jacobian(&self, s: Vec2) -> Result<Mat2> {
        let pc = self.params.p_conj();
        let c = self.d_offset();
        let r2 = s[0] * s[0] + s[1] * s[1];
        if r2 == 0.0 && c == 0.0 {
            if pc == 2.0 {
                return Ok([[1.0, 0.0], [0.0, 1.0]]);
            }
            if pc < 3.0 {
                return Err(Error::SingularLaw { p: self.params.p });
            }
            return Ok([[0.0; 2]; 2]);
        }
        let base = c + r2;
        let a = base.powf(0.5 * (pc - 2.0));
        let b = (pc - 2.0) * base.powf(0.5 * (pc - 4.0));
        Ok([
            [a + b * s[0] * s[0], b * s[0] * s[1]],
            [b * s[1] * s[0], a + b * s[1] * s[1]],
        ])
    }

    /// `S^{-1}`: solves `(c + r)^{p-2} r = |S|` radially.
    pub fn s_inverse(&self, s: Vec2) -> Result<Vec2> {
        let target = norm(s);
        if target == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let p = self.params.p;
        let c = self.s_offset();
        let r = radial_inverse(
            target,
            |r| (c + r).powf(p - 2.0) * r,
            |r| (c + r).powf(p - 3.0) * (c + (p - 1.0) * r),
        )?;
        Ok(scale(r / target, s))
    }

    /// `D^{-1}`: solves `(c + r²)^{(p'-2)/2} r = |G|` radially.
    pub fn d_inverse(&self, g: Vec2) -> Result<Vec2> {
        let target = norm(g);
        if target == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let pc = self.params.p_conj();
        let c = self.d_offset();
        let r = radial_inverse(
            target,
            |r| (c + r * r).powf(0.5 * (pc - 2.0)) * r,
            |r| (c + r * r).powf(0.5 * (pc - 4.0)) * (c + (pc - 1.0) * r * r),
        )?;
        Ok(scale(r / target, g))
    }

    /// `F(Q) = (δ + |Q|)^{(p-2)/2} Q`.
    pub fn f_value(&self, q: Vec2) -> Vec2 {
        let r = norm(q);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        scale((self.params.delta + r).powf(0.5 * (self.params.p - 2.0)), q)
    }

    /// `F*(Q) = (δ^{p-1} + |Q|)^{(p'-2)/2} Q`.
    pub fn fstar_value(&self, q: Vec2) -> Vec2 {
        let r = norm(q);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let d = self.params.delta.powf(self.params.p - 1.0);
        scale((d + r).powf(0.5 * (self.params.p_conj() - 2.0)), q)
    }
}

/// `φ_a(t)` or `φ_a'(t)`.
pub fn phi_eval(params: &NFunctionParams, t: f64, what: PhiQuantity) -> Result<f64> {
    params.eval(t, what)
}

/// `(φ_a)*(t)`.
pub fn phi_conj_eval(params: &NFunctionParams, t: f64) -> Result<f64> {
    params.conj(t)
}

/// The shifted law `S_a` (`a = params.shift`) or its Jacobian.
pub fn law_s(params: &NFunctionParams, q: Vec2, what: LawQuantity) -> Result<LawOutput> {
    if !(q[0].is_finite() && q[1].is_finite()) {
        return Err(Error::NonFinite(format!("law argument {q:?}")));
    }
    let law = ConstitutiveLaw::new(*params, LawVariant::ShiftedS);
    Ok(match what {
        LawQuantity::Value => LawOutput::Value(law.s_value(q)),
        LawQuantity::Jacobian => LawOutput::Jacobian(law.s_jacobian(q)?),
    })
}

/// `F` or `F*`.
pub fn law_f(params: &NFunctionParams, q: Vec2, which: NaturalDistance) -> Vec2 {
    let law = ConstitutiveLaw::new(*params, LawVariant::PrimalS);
    match which {
        NaturalDistance::F => law.f_value(q),
        NaturalDistance::FStar => law.fstar_value(q),
    }
}

/// `D`, `D^{-1}` or `S^{-1}` (the latter with the shift of `params`).
pub fn law_d(params: &NFunctionParams, x: Vec2, mode: DMode) -> Result<Vec2> {
    if !(x[0].is_finite() && x[1].is_finite()) {
        return Err(Error::NonFinite(format!("law argument {x:?}")));
    }
    match mode {
        DMode::PaperDValue => Ok(ConstitutiveLaw::new(*params, LawVariant::PaperD).d_value(x)),
        DMode::PaperDInverse => ConstitutiveLaw::new(*params, LawVariant::PaperD).d_inverse(x),
        DMode::SInverse => ConstitutiveLaw::new(*params, LawVariant::ShiftedS).s_inverse(x),
    }
}
