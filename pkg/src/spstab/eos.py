"""Equations of state for mixed-state occupation numbers.

A state profile f maps single-particle energy s to an occupation weight.
Admissible profiles are continuous, strictly decreasing where positive,
vanish beyond a cutoff s0 (possibly +inf), blow up as s -> -inf, and decay
at least like (1+s)^(-7/2-delta) for s >= 0.  Three families are built in:

* ``boltzmann(beta)``:      f(s) = exp(-beta*s)
* ``fermi_dirac(C, eps)``:  f(s) = 4*pi*C * int_0^inf r^2/(eps+exp(r^2/2+s)) dr
* ``power_cutoff(s0, q)``:  f(s) = max(s0-s, 0)^q

Derived objects: the antiderivative F(s) = int_s^inf f, the inverse f^-1,
and the convex conjugate F*(-lam) = -int_0^lam f^-1(sigma) dsigma, which
prices an occupation lam in the dual (energy-Casimir) functional.  F* is
always evaluated by quadrature of the inverse, not by the closed forms
that exist for some families; tests cross-check the two routes.

``shifted(eos, sigma)`` returns the profile s -> f(s + sigma), which is
again admissible.  Stability audits use the shift to absorb the chemical
potential of a reference steady state into the profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .errors import QuadratureError

__all__ = [
    "EquationOfState",
    "boltzmann",
    "fermi_dirac",
    "power_cutoff",
    "shifted",
    "f_eval",
    "F_eval",
    "f_many",
    "F_many",
    "f_inverse",
    "Fstar_eval",
    "fstar_many",
    "casimir_sum",
    "ConjugateTable",
    "conjugate_table",
    "CasimirClassReport",
    "validate_casimir_class",
]

_KINDS = ("boltzmann", "fermi-dirac", "power-cutoff")

# decay exponent used when fitting the (1+s)^(-7/2-delta) envelope
_DECAY_POW = 4.0


@dataclass(frozen=True)
class EquationOfState:
    """Parameters of one occupation profile.  Use the factory helpers."""

    kind: str
    beta: float = 1.0
    C: float = 1.0
    eps: float = 1.0
    s0: float = math.inf
    q: float = 1.0
    quad_tol: float = 1e-10
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown eos kind {self.kind!r}, expected one of {_KINDS}")
        if not (self.quad_tol > 0.0 and self.quad_tol <= 1e-4):
            raise ValueError("quad_tol must lie in (0, 1e-4]")
        if not np.isfinite(self.shift):
            raise ValueError("shift must be finite")
        if self.kind == "boltzmann":
            if not (self.beta > 0.0 and np.isfinite(self.beta)):
                raise ValueError("boltzmann profile needs beta > 0")
        elif self.kind == "fermi-dirac":
            if not (self.C > 0.0 and np.isfinite(self.C)):
                raise ValueError("fermi-dirac profile needs C > 0")
            if not (self.eps > 0.0 and np.isfinite(self.eps)):
                raise ValueError("fermi-dirac profile needs eps > 0")
        else:
            if not np.isfinite(self.s0):
                raise ValueError("power-cutoff profile needs a finite cutoff s0")
            if not (self.q >= 1.0 and np.isfinite(self.q)):
                raise ValueError("power-cutoff exponent must satisfy q >= 1")

    @property
    def cutoff(self) -> float:
        """Energy above which the (shifted) profile vanishes."""
        return self.s0 - self.shift

    def params(self) -> dict:
        """Plain-dict form for JSON headers and hashing."""
        out = {"kind": self.kind, "quad_tol": self.quad_tol, "shift": self.shift}
        if self.kind == "boltzmann":
            out["beta"] = self.beta
        elif self.kind == "fermi-dirac":
            out["C"] = self.C
            out["eps"] = self.eps
        else:
            out["s0"] = self.s0
            out["q"] = self.q
        return out


def boltzmann(beta: float = 1.0, quad_tol: float = 1e-10) -> EquationOfState:
    return EquationOfState(kind="boltzmann", beta=beta, quad_tol=quad_tol)


def fermi_dirac(C: float = 1.0, eps: float = 1.0, quad_tol: float = 1e-10) -> EquationOfState:
    return EquationOfState(kind="fermi-dirac", C=C, eps=eps, quad_tol=quad_tol)


def power_cutoff(s0: float, q: float = 1.0, quad_tol: float = 1e-10) -> EquationOfState:
    return EquationOfState(kind="power-cutoff", s0=s0, q=q, quad_tol=quad_tol)


def shifted(eos: EquationOfState, sigma: float) -> EquationOfState:
    """Profile s -> f(s + sigma) built on the same base family."""
    if not np.isfinite(sigma):
        raise ValueError("shift must be finite")
    return replace(eos, shift=eos.shift + float(sigma))


# ---------------------------------------------------------------------------
# profile evaluation


def _gl_nodes(n: int):
    # cached Gauss-Legendre rule on [-1, 1]
    key = n
    rule = _GL_CACHE.get(key)
    if rule is None:
        rule = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[key] = rule
    return rule


_GL_CACHE: dict = {}


def _panel_rule(a: float, b: float, panels: int, order: int):
    """Nodes and weights of a composite Gauss rule on [a, b]."""
    xi, wi = _gl_nodes(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    weights = (half[:, None] * wi[None, :]).ravel()
    return nodes, weights


def _fd_f_kernel(r: np.ndarray, s: np.ndarray, eps: float) -> np.ndarray:
    # r^2 / (eps + exp(r^2/2 + s)), stable for any sign of the exponent
    arg = 0.5 * r * r + s
    pos = arg > 0.0
    with np.errstate(over="ignore"):
        e_neg = np.exp(np.where(pos, -arg, 0.0))
        out_pos = r * r * e_neg / (eps * e_neg + 1.0)
        out_neg = r * r / (eps + np.exp(np.where(pos, 0.0, arg)))
    return np.where(pos, out_pos, out_neg)


def _fd_F_kernel(r: np.ndarray, s: np.ndarray, eps: float) -> np.ndarray:
    # r^2 * log(1 + eps*exp(-r^2/2 - s)), stable in both regimes
    x = -0.5 * r * r - s
    big = x > 0.0
    with np.errstate(over="ignore"):
        val_big = x + np.log(eps + np.exp(np.where(big, -x, 0.0)))
        val_small = np.log1p(eps * np.exp(np.where(big, 0.0, x)))
    return r * r * np.where(big, val_big, val_small)


def _fd_quad(kernel, s: np.ndarray, eos: EquationOfState) -> np.ndarray:
    """Composite-Gauss radial integral of ``kernel`` for a batch of energies.

    Refines once and compares against the coarse rule; if the relative
    difference exceeds quad_tol the call raises rather than returning a
    value of unknown quality.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s_min = float(np.min(s)) if s.size else 0.0
    R = math.sqrt(2.0 * max(0.0, -s_min) + 130.0)
    panels = max(10, int(R / 0.7))
    vals = []
    for order in (24, 16):
        nodes, weights = _panel_rule(0.0, R, panels, order)
        mat = kernel(nodes[None, :], s[:, None], eos.eps)
        vals.append(mat @ weights)
    fine, coarse = vals
    scale = np.abs(fine) + 1e-300
    err = np.max(np.abs(fine - coarse) / scale)
    if err > eos.quad_tol:
        raise QuadratureError(
            "fermi-dirac radial quadrature stalled at rel. error %.2e" % err,
            achieved=float(err))
    return fine


def f_many(eos: EquationOfState, s) -> np.ndarray:
    """Vectorized profile evaluation f(s) (with any configured shift)."""
    s = np.atleast_1d(np.asarray(s, dtype=float)) + eos.shift
    if eos.kind == "boltzmann":
        with np.errstate(over="ignore"):
            return np.exp(-eos.beta * s)
    if eos.kind == "power-cutoff":
        return np.maximum(eos.s0 - s, 0.0) ** eos.q
    return 4.0 * math.pi * eos.C * _fd_quad(_fd_f_kernel, s, eos)


def F_many(eos: EquationOfState, s) -> np.ndarray:
    """Vectorized antiderivative F(s) = int_s^inf f."""
    s = np.atleast_1d(np.asarray(s, dtype=float)) + eos.shift
    if eos.kind == "boltzmann":
        with np.errstate(over="ignore"):
            return np.exp(-eos.beta * s) / eos.beta
    if eos.kind == "power-cutoff":
        return np.maximum(eos.s0 - s, 0.0) ** (eos.q + 1.0) / (eos.q + 1.0)
    return (4.0 * math.pi * eos.C / eos.eps) * _fd_quad(_fd_F_kernel, s, eos)


def f_eval(eos: EquationOfState, s: float) -> float:
    """Occupation weight at energy s."""
    return float(f_many(eos, float(s))[0])


def F_eval(eos: EquationOfState, s: float) -> float:
    """Tail integral of the profile from s upward."""
    return float(F_many(eos, float(s))[0])


def f_inverse(eos: EquationOfState, lam: float) -> float:
    """Energy s with f(s) = lam, found by bisection.

    The bracket is grown leftward in doubling steps from the cutoff (or
    from zero when there is none) until it encloses lam; strict
    monotonicity of the profile makes the root unique.  Accurate to
    1e-12 absolute in s.
    """
    lam = float(lam)
    if not (lam > 0.0 and np.isfinite(lam)):
        raise ValueError(f"f_inverse needs a finite occupation > 0, got {lam}")
    if math.isfinite(eos.cutoff):
        hi = eos.cutoff
    else:
        hi = 1.0
        while f_eval(eos, hi) > lam:
            hi = 2.0 * max(hi, 1.0)
            if hi > 1e12:
                raise ValueError("no finite energy reaches such a small occupation")
    lo = hi - 1.0
    while f_eval(eos, lo) < lam:
        lo = hi - 2.0 * (hi - lo)
        if hi - lo > 1e12:
            raise ValueError("bracket expansion failed; occupation out of range")
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # interval at floating-point resolution
        if f_eval(eos, mid) >= lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# cached inverse and the conjugate integral

# width, in log-occupation, of the window resolved by the conjugate
# quadrature; mass below exp(-_LOG_WINDOW) is handled by the asymptote
_LOG_WINDOW = 45.0
_FSTAR_PANELS = 12


@dataclass(frozen=True)
class ConjugateTable:
    """Cached inverse profile and conjugate samples for one base family.

    The inverse is evaluated at occupation exp(t); below ``t_lo`` the
    logarithmic asymptote a - b*t takes over.  For quadrature-backed
    families a second Chebyshev series caches the normalized conjugate
    J(T) = -F*(-exp(T)) / exp(T), checked against direct quadrature at
    build time.  ``lam_grid``/``inv_grid``/``fstar_grid`` tabulate f^-1
    and F* of the unshifted family on a reference grid for reporting.
    """

    t_lo: float
    t_hi: float
    cheb_coef: np.ndarray | None
    asymp_a: float
    asymp_b: float
    lam_grid: np.ndarray
    inv_grid: np.ndarray
    fstar_grid: np.ndarray
    fstar_cheb: np.ndarray | None = None

    @property
    def lam_max(self) -> float:
        return math.exp(self.t_hi)


_TABLE_CACHE: dict = {}


def _base_key(eos: EquationOfState):
    return (eos.kind, eos.beta, eos.C, eos.eps, eos.s0, eos.q, eos.quad_tol)


def _inverse_on_log_grid(eos: EquationOfState, t: np.ndarray) -> np.ndarray:
    """Vectorized bisection for the unshifted inverse at occupations exp(t)."""
    base = replace(eos, shift=0.0)
    lam = np.exp(t)
    lo = np.full(t.shape, -5.0)
    while True:
        mask = f_many(base, lo) < lam
        if not mask.any():
            break
        lo[mask] *= 2.0
    if math.isfinite(base.s0):
        hi = np.full(t.shape, base.s0)
    else:
        hi = np.full(t.shape, 5.0)
        while True:
            mask = f_many(base, hi) > lam
            if not mask.any():
                break
            hi[mask] *= 2.0
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        take_lo = f_many(base, mid) >= lam
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    return 0.5 * (lo + hi)


def _build_table(eos: EquationOfState, t_hi_request: float) -> ConjugateTable:
    base = replace(eos, shift=0.0)
    kind = eos.kind
    if kind == "boltzmann":
        # inverse is -t/beta exactly; no interpolant needed
        t_lo, t_hi = -60.0, max(60.0, t_hi_request)
        cheb = None
        a, b = 0.0, 1.0 / eos.beta
    elif kind == "power-cutoff":
        t_lo, t_hi = -60.0, max(60.0, t_hi_request)
        cheb = None
        a, b = eos.s0, 0.0
    else:
        t_lo = -55.0
        t_hi = max(math.log(f_eval(base, -45.0)), t_hi_request)
        deg = 240
        from numpy.polynomial import chebyshev as chebmod

        fit = chebmod.Chebyshev.interpolate(
            lambda t: _inverse_on_log_grid(base, np.asarray(t)),
            deg, domain=[t_lo, t_hi])
        cheb = fit.coef
        # calibrate the exponential-regime asymptote s = a - t at the low edge
        a = float(chebmod.chebval(-1.0, cheb)) + t_lo
        b = 1.0
    table = ConjugateTable(
        t_lo=t_lo, t_hi=t_hi, cheb_coef=cheb, asymp_a=a, asymp_b=b,
        lam_grid=np.empty(0), inv_grid=np.empty(0), fstar_grid=np.empty(0))
    if cheb is not None:
        # cache the conjugate too: J(T) = -F*(-exp(T))/exp(T) is smooth and
        # O(|inverse|), so one series gives it near machine accuracy
        from numpy.polynomial import chebyshev as chebmod

        def j_direct(t):
            t = np.asarray(t, dtype=float)
            lam = np.exp(t)
            return -_fstar_direct(table, base, lam) / lam

        jfit = chebmod.Chebyshev.interpolate(j_direct, 320, domain=[t_lo, t_hi])
        t_check = np.linspace(t_lo, t_hi, 157)
        resid = np.abs(jfit(t_check) - j_direct(t_check))
        worst = float(np.max(resid / (1.0 + np.abs(jfit(t_check)))))
        if worst > eos.quad_tol:
            raise QuadratureError(
                "cached conjugate series misses direct quadrature by %.2e" % worst,
                achieved=worst)
        table = replace(table, fstar_cheb=jfit.coef)
    # reference grids (for reports) always describe the unshifted family
    t_ref = np.linspace(max(t_lo, t_hi - 90.0), t_hi, 181)
    lam_ref = np.exp(t_ref)
    inv_ref = _eval_inverse(table, base, t_ref)
    fstar_ref = _fstar_from_table(table, base, lam_ref)
    return replace(table, lam_grid=lam_ref, inv_grid=inv_ref, fstar_grid=fstar_ref)


def conjugate_table(eos: EquationOfState, lam_max: float | None = None) -> ConjugateTable:
    """Fetch (building or growing on demand) the cached inverse table."""
    key = _base_key(eos)
    need_t = math.log(lam_max) if lam_max else 0.0
    table = _TABLE_CACHE.get(key)
    if table is None or table.t_hi < need_t:
        table = _build_table(eos, need_t + 2.0)
        _TABLE_CACHE[key] = table
    return table


def _eval_inverse(table: ConjugateTable, eos: EquationOfState, t: np.ndarray) -> np.ndarray:
    """Inverse of the shifted profile at occupations exp(t)."""
    t = np.asarray(t, dtype=float)
    if table.cheb_coef is None:
        if eos.kind == "boltzmann":
            s = -t / eos.beta
        else:
            s = eos.s0 - np.exp(t / eos.q)
    else:
        from numpy.polynomial import chebyshev as chebmod

        u = 2.0 * (t - table.t_lo) / (table.t_hi - table.t_lo) - 1.0
        interior = chebmod.chebval(np.clip(u, -1.0, 1.0), table.cheb_coef)
        asymp = table.asymp_a - table.asymp_b * t
        s = np.where(t < table.t_lo, asymp, interior)
    return s - eos.shift


def _fstar_from_table(table: ConjugateTable, eos: EquationOfState, lam: np.ndarray) -> np.ndarray:
    """Conjugate values, from the cached series when one exists."""
    lam = np.asarray(lam, dtype=float)
    if table.fstar_cheb is None:
        return _fstar_direct(table, eos, lam)
    out = np.zeros(lam.shape)
    pos = lam > 0.0
    if not np.any(pos):
        return out
    lp = lam[pos]
    t = np.log(lp)
    a_eff = table.asymp_a - eos.shift
    b = table.asymp_b
    low = t < table.t_lo
    from numpy.polynomial import chebyshev as chebmod

    u = 2.0 * (t - table.t_lo) / (table.t_hi - table.t_lo) - 1.0
    j = chebmod.chebval(np.clip(u, -1.0, 1.0), table.fstar_cheb)
    val = -lp * (j - eos.shift)
    val_low = -lp * (a_eff - b * t + b)
    out[pos] = np.where(low, val_low, val)
    return out


def _fstar_direct(table: ConjugateTable, eos: EquationOfState, lam: np.ndarray) -> np.ndarray:
    """F*(-lam) = -int_0^lam f^-1, integrated in log-occupation space.

    With sigma = exp(t) the integrand inv(exp(t))*exp(t) is smooth (the
    endpoint log singularity of the inverse becomes linear in t), so a
    fixed composite Gauss rule over the top _LOG_WINDOW log-units plus the
    analytic contribution of the asymptote below it reaches near machine
    accuracy.  Two rules of different order provide the error estimate.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape)
    pos = lam > 0.0
    if not np.any(pos):
        return out
    T = np.log(lam[pos])
    t_cut = T - _LOG_WINDOW
    # exact integral of (a - shift - b*t) * exp(t) over t < t_cut
    a_eff = table.asymp_a - eos.shift
    tail = np.exp(t_cut) * (a_eff - table.asymp_b * (t_cut - 1.0))
    vals = []
    for order in (24, 16):
        xi, wi = _gl_nodes(order)
        edges = np.linspace(0.0, 1.0, _FSTAR_PANELS + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        u = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
        w = (half[:, None] * wi[None, :]).ravel() * _LOG_WINDOW
        t_nodes = t_cut[:, None] + _LOG_WINDOW * u[None, :]
        g = _eval_inverse(table, eos, t_nodes) * np.exp(t_nodes)
        vals.append(g @ w)
        if order == 24:
            scale = np.abs(g) @ w + np.exp(t_cut) * (abs(a_eff) + table.asymp_b * (np.abs(t_cut) + 1.0))
    fine, coarse = vals
    err = np.abs(fine - coarse) / (scale + 1e-300)
    worst = float(np.max(err))
    if worst > eos.quad_tol:
        raise QuadratureError(
            "conjugate quadrature stalled at rel. error %.2e" % worst,
            achieved=worst)
    out[pos] = -(fine + tail)
    return out


def fstar_many(eos: EquationOfState, lam) -> np.ndarray:
    """Vectorized conjugate F*(-lam) for occupations lam >= 0."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size and (np.any(lam < 0.0) or not np.all(np.isfinite(lam))):
        raise ValueError("occupations must be finite and >= 0")
    lam_max = float(np.max(lam)) if lam.size else 0.0
    table = conjugate_table(eos, lam_max if lam_max > 0 else None)
    return _fstar_from_table(table, eos, lam)


def Fstar_eval(eos: EquationOfState, s: float) -> float:
    """Convex conjugate F*(s) for s <= 0 (s = -lam prices occupation lam)."""
    s = float(s)
    if s > 0.0:
        raise ValueError("the conjugate is only defined for arguments <= 0")
    return float(fstar_many(eos, -s)[0])


def casimir_sum(eos: EquationOfState, lam) -> float:
    """Sum of conjugate prices F*(-lam_k) over an occupation sequence."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size == 0:
        return 0.0
    if np.any(lam < 0.0):
        raise ValueError("occupations must be >= 0")
    return float(np.sum(fstar_many(eos, lam)))


# ---------------------------------------------------------------------------
# admissibility checks


@dataclass(frozen=True)
class CasimirClassReport:
    """Outcome of the three admissibility checks on a profile."""

    ok_support: bool
    ok_monotone: bool
    ok_decay: bool
    decay_constant: float
    decay_window: float
    left_growth_ratio: float
    notes: str = ""

    @property
    def passed(self) -> bool:
        return self.ok_support and self.ok_monotone and self.ok_decay


def validate_casimir_class(eos: EquationOfState, f_override=None) -> CasimirClassReport:
    """Check positivity/support, strict decrease, and polynomial decay.

    ``f_override`` substitutes an arbitrary vectorized profile for the
    family's own, so that deliberately broken profiles can be shown to
    fail.  The decay check fits the envelope constant
    C = max f(s)*(1+s)^4 on an adaptive window [0, S] and requires the
    weighted profile to have dropped well below its peak by S.
    """
    fval = (lambda s: f_many(eos, s)) if f_override is None else \
        (lambda s: np.asarray(f_override(np.asarray(s, dtype=float)), dtype=float))
    cut = eos.cutoff if f_override is None else math.inf

    if math.isfinite(cut):
        s_left = np.concatenate([
            np.linspace(cut - 40.0, cut - 1.0, 40),
            cut - np.geomspace(0.9, 1e-6, 25)])
        s_right = cut + np.geomspace(1e-6, 10.0, 25)
        ok_support = bool(np.all(fval(s_left) > 0.0) and np.all(fval(s_right) == 0.0))
        mono_grid = s_left
    else:
        mono_grid = np.concatenate([np.linspace(-40.0, 0.0, 60),
                                    np.geomspace(1e-3, 50.0, 60)])
        ok_support = bool(np.all(fval(mono_grid) > 0.0))

    fm = fval(mono_grid)
    ok_monotone = bool(np.all(np.diff(fm) < 0.0))
    left_ratio = float(fm[0] / max(fm[-1], 1e-300))

    # decay envelope on s >= 0, widening the window until the weighted
    # profile has clearly rolled over (or a cap declares failure)
    S = 60.0
    ok_decay = False
    c_fit = math.nan
    while S <= 1e5:
        sg = np.linspace(0.0, S, 121)
        w = fval(sg) * (1.0 + sg) ** _DECAY_POW
        c_fit = float(np.max(w))
        if c_fit == 0.0 or w[-1] <= 0.05 * c_fit:
            ok_decay = True
            break
        S *= 2.0
    notes = "" if ok_decay else "weighted profile still near its peak at s=%g" % S
    return CasimirClassReport(
        ok_support=ok_support, ok_monotone=ok_monotone, ok_decay=ok_decay,
        decay_constant=c_fit, decay_window=S,
        left_growth_ratio=left_ratio, notes=notes)


def reference_f_quad(eos: EquationOfState, s: float) -> float:
    """Slow QUADPACK evaluation of the fermi-dirac radial integral.

    Exists for cross-checks and the selfcheck command; production code
    uses the vectorized composite rule in ``f_many``.
    """
    if eos.kind != "fermi-dirac":
        raise ValueError("reference quadrature applies to the fermi-dirac family")
    se = float(s) + eos.shift
    val, err = quad(lambda r: float(_fd_f_kernel(np.array(r), np.array(se), eos.eps)),
                    0.0, math.sqrt(2.0 * max(0.0, -se) + 140.0), limit=200,
                    epsabs=1e-13, epsrel=1e-12)
    return 4.0 * math.pi * eos.C * val
