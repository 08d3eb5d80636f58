"""Moduli of continuity of order n, their regularity constants, the tail
integral xi and the associated modulus.

A modulus is a vectorised evaluator plus metadata.  Log-type families are
only increasing near the origin, so each carries a validity bound
``t_max``: above it the evaluator continues as ``omega(t_max)*(t/t_max)**n``.
Integrals over (x, 1) that define xi and the extremal profile use the
family formula itself (``profile``), which is what the closed forms for
``t*log^s(1/t)`` describe.
"""
from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from .errors import NonPositiveValue, ParameterOutOfRange, QuadratureFailure
from .quadrature import integrate

XI_RTOL = 1e-9
DINI_PROBE_LEVEL = 40
DINI_THRESHOLD = 1e6
# Tail increments of xi must decay like k**(-beta) with beta above this.
DINI_DECAY_EXPONENT = 1.25


@dataclass(frozen=True)
class ModulusOfContinuity:
    formula: Callable
    order_n: int
    q: float
    r: float
    C_q: float = 1.0
    C_r: float = 1.0
    label: str = ""
    t_max: float = math.inf
    dini: Optional[bool] = None
    spec: dict = field(default_factory=dict)
    # L -> omega(exp(-L)) * exp(n*L); the xi integrand after t = exp(-L)
    log_integrand: Optional[Callable] = None

    def profile(self, t):
        return self.formula(np.asarray(t, dtype=float))

    def xi_integrand_log(self, L):
        L = np.asarray(L, dtype=float)
        if self.log_integrand is not None:
            return self.log_integrand(L)
        return self.formula(np.exp(-L)) * np.exp(self.order_n * L)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if math.isinf(self.t_max):
            return self.formula(t)
        cap = float(self.formula(np.array(self.t_max)))
        inside = t <= self.t_max
        tin = np.where(inside, t, self.t_max)
        return np.where(inside, self.formula(tin), cap * (t / self.t_max) ** self.order_n)

    __call__ = eval

    def params_ok(self):
        n = self.order_n
        return n >= 1 and n <= self.q < n + 1 and n - 1 < self.r < n


@dataclass(frozen=True)
class DerivedModulus:
    base: ModulusOfContinuity
    xi_eval: Callable
    assoc_eval: Callable
    dini_regular: bool


@dataclass
class RegularityReport:
    C_q: float
    C_r: float
    violations: list
    n_pairs: int

    @property
    def ok(self):
        return not self.violations


# ---------------------------------------------------------------------------
# built-in families


def power(n):
    n = int(n)
    return ModulusOfContinuity(
        formula=lambda t: t ** n,
        log_integrand=lambda L: np.ones_like(L),
        order_n=n,
        q=float(n),
        r=n - 0.5,
        C_q=1.0,
        C_r=1.0,
        label=f"t^{n}",
        dini=False,
        spec={"family": "power", "n": n},
    )


def _log_inv(t):
    with np.errstate(divide="ignore"):
        return -np.log(t)


def powerlog(n, s, shift=None):
    """``t**n * (log(1/t) + shift)**s``.

    ``shift`` defaults to 0 for s > -1 (the literal family) and to 1 for
    s <= -1, where the literal formula is not integrable at t = 1.
    """
    n = int(n)
    s = float(s)
    if shift is None:
        shift = 0.0 if s > -1 else 1.0
    shift = float(shift)
    if s == 0:
        m = power(n)
        return ModulusOfContinuity(
            formula=m.formula, log_integrand=m.log_integrand, order_n=n, q=m.q, r=m.r, C_q=1.0, C_r=1.0,
            label=f"t^{n}*log^0(1/t)", dini=False,
            spec={"family": "powerlog", "n": n, "s": 0.0},
        )

    def formula(t):
        return t ** n * (_log_inv(t) + shift) ** s

    def log_integrand(L):
        return (L + shift) ** s

    # increasing while log(1/t) + shift > s/n; keep a margin of one unit
    t_max = math.exp(min(shift - max(s / n, 0.0) - 1.0, 0.0)) if s > 0 else math.exp(-1.0)
    dini = s < -1
    # fitted constants on the default grid stay below 1.5 for every built-in
    C_q = C_r = 2.0
    label = f"t^{n}*log^{s:g}(1/t)" if shift == 0 else f"t^{n}*(log(1/t)+{shift:g})^{s:g}"
    return ModulusOfContinuity(
        formula=formula,
        log_integrand=log_integrand,
        order_n=n,
        q=n + 0.5,
        r=n - 0.5,
        C_q=C_q,
        C_r=C_r,
        label=label,
        t_max=t_max,
        dini=dini,
        spec={"family": "powerlog", "n": n, "s": s, "shift": shift},
    )


def builtin_moduli():
    """The standard family used across the experiments."""
    out = [power(1), power(2), power(3)]
    out += [powerlog(1, s) for s in (-0.5, 0.0, 1.0, 2.0)]
    out += [powerlog(n, -2.0) for n in (1, 2, 3)]
    return out


def from_spec(spec):
    """Build a modulus from ``{family, n, s}`` or the CLI shorthand.

    Shorthand: ``power:2`` or ``powerlog:1:-0.5``.
    """
    if isinstance(spec, ModulusOfContinuity):
        return spec
    if isinstance(spec, str):
        parts = spec.split(":")
        fam = parts[0]
        try:
            if fam == "power" and len(parts) == 2:
                return power(int(parts[1]))
            if fam == "powerlog" and len(parts) in (3, 4):
                shift = float(parts[3]) if len(parts) == 4 else None
                return powerlog(int(parts[1]), float(parts[2]), shift)
        except ValueError as exc:
            raise ParameterOutOfRange(f"bad modulus spec {spec!r}") from exc
        raise ParameterOutOfRange(f"bad modulus spec {spec!r}")
    fam = spec.get("family")
    if fam == "power":
        return power(spec["n"])
    if fam == "powerlog":
        return powerlog(spec["n"], spec.get("s", 0.0), spec.get("shift"))
    raise ParameterOutOfRange(f"unknown modulus family {fam!r}")


# ---------------------------------------------------------------------------
# operations


def default_grid(omega, num=121):
    hi = omega.t_max if math.isfinite(omega.t_max) else 1.0
    return np.geomspace(1e-12, hi, num)


def check_regularity(omega, grid=None, s_values=None, growth_factor=2.0):
    """Fit the almost-monotonicity constants of ``omega`` on a sample.

    ``C_q = max_{s>1} omega(st)/(s^q omega(t))`` and
    ``C_r = max_{s<1} omega(st)/(s^r omega(t))`` over the (s, t) sample.
    Violations collect: parameter ranges outside n <= q < n+1, n-1 < r < n, pairs where omega
    decreases, fitted constants above the declared ones, and ratios still
    growing at the edge of the s-range (unbounded constants).
    """
    t = default_grid(omega) if grid is None else np.asarray(grid, dtype=float)
    if s_values is None:
        s_values = 2.0 ** np.arange(-20.0, 20.5, 0.5)
    s = np.asarray(s_values, dtype=float)
    s = s[s != 1.0]
    T = t[None, :]
    S = s[:, None]
    w_t = np.asarray(omega.eval(t), dtype=float)
    w_st = np.asarray(omega.eval(S * T), dtype=float)
    if np.any(w_t <= 0) or np.any(w_st <= 0):
        bad = t[w_t <= 0] if np.any(w_t <= 0) else (S * T)[w_st <= 0]
        raise NonPositiveValue(f"{omega.label}: non-positive value near t={bad.ravel()[0]:.3g}")
    ratio = w_st / w_t[None, :]
    violations = []
    n = omega.order_n
    if not n <= omega.q < n + 1:
        violations.append(("q-range", omega.q))
    if not n - 1 < omega.r < n:
        violations.append(("r-range", omega.r))
    up = s > 1
    down = s < 1
    rq = ratio[up] / s[up, None] ** omega.q
    rr = ratio[down] / s[down, None] ** omega.r
    C_q = float(rq.max()) if rq.size else 0.0
    C_r = float(rr.max()) if rr.size else 0.0
    dec = np.argwhere(ratio[up] < 1.0 - 1e-12)
    for i, j in dec[:20]:
        violations.append(("decreasing", float(s[up][i]), float(t[j])))
    if C_q > omega.C_q * (1 + 1e-9):
        violations.append(("C_q-exceeded", C_q, omega.C_q))
    if C_r > omega.C_r * (1 + 1e-9):
        violations.append(("C_r-exceeded", C_r, omega.C_r))
    # unboundedness: sup over the full s-range vs the inner half of it
    s_up = s[up]
    if s_up.size > 2:
        inner = s_up <= math.sqrt(s_up.max())
        if inner.any() and C_q > growth_factor * float(rq[inner].max()):
            violations.append(("C_q-unbounded", C_q, float(rq[inner].max())))
    s_dn = s[down]
    if s_dn.size > 2:
        inner = s_dn >= math.sqrt(s_dn.min())
        if inner.any() and C_r > growth_factor * float(rr[inner].max()):
            violations.append(("C_r-unbounded", C_r, float(rr[inner].max())))
    return RegularityReport(C_q=C_q, C_r=C_r, violations=violations, n_pairs=int(ratio.size))


def _log_points(L0, L1):
    # geometric grading toward the lower end, where log families are singular
    if L1 <= L0:
        return []
    span = L1 - L0
    return [L0 + span * 2.0 ** -k for k in range(1, 64)]


def xi_between(omega, a, b, rtol=XI_RTOL, weight_power=0):
    """``int_a^b omega(t) t^(-n-1+j) dt`` with ``j = weight_power``, 0 < a <= b <= 1.

    Evaluated in the variable L = log(1/t), where the integrand is
    ``omega(e^-L) e^(nL) e^(-jL)`` and the t -> 1 end becomes L -> 0.
    """
    if b <= a:
        return 0.0
    L0 = -math.log(b)
    L1 = -math.log(a)
    if weight_power:
        def g(L):
            return omega.xi_integrand_log(L) * np.exp(-weight_power * L)
    else:
        g = omega.xi_integrand_log
    pts = _log_points(L0, L1) if L0 == 0.0 else None
    val, _ = integrate(g, L0, L1, rtol=rtol, atol=1e-300, points=pts)
    return val


def xi(omega, x, rtol=XI_RTOL):
    """``int_x^1 omega(t) t^(-n-1) dt`` by adaptive quadrature.

    Raises ParameterOutOfRange for x <= 0; returns 0 for x >= 1.
    """
    x = float(x)
    if x <= 0:
        raise ParameterOutOfRange(f"xi needs x > 0, got {x}")
    if x >= 1:
        return 0.0
    return xi_between(omega, x, 1.0, rtol)


def xi_increment(omega, a, b, rtol=XI_RTOL):
    """``int_a^b omega(t) t^(-n-1) dt`` (additivity checks, Dini probe)."""
    return xi_between(omega, a, b, rtol)


def detect_dini(omega, level=DINI_PROBE_LEVEL, rtol=XI_RTOL):
    """Numerical Dini test on the grid x = 2^-k, k <= level.

    Declared convergent when xi(2^-level) stays below DINI_THRESHOLD and
    the dyadic increments of xi decay faster than k^-DINI_DECAY_EXPONENT.
    """
    ks = np.arange(1, level + 1)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            incs = np.array([xi_increment(omega, 2.0 ** -k, 2.0 ** (1 - k), rtol) for k in ks])
            total = xi(omega, 2.0 ** -level, rtol) if level > 0 else 0.0
    except QuadratureFailure:
        # xi itself diverges (e.g. a non-integrable singularity at t = 1)
        return False, math.inf, float("nan")
    if not math.isfinite(total) or total > DINI_THRESHOLD or not np.all(incs > 0):
        return False, total, float("nan")
    k1, k2 = level // 2, level
    beta = -math.log(incs[k2 - 1] / incs[k1 - 1]) / math.log(k2 / k1)
    return bool(beta > DINI_DECAY_EXPONENT), total, beta


def associated(omega, rtol=XI_RTOL):
    """Associated modulus ``omega(x)/max{1, xi(x)}`` with a Dini flag."""
    def xi_eval(x):
        x = np.asarray(x, dtype=float)
        flat = [xi(omega, v, rtol) if v < 1 else 0.0 for v in x.ravel()]
        return np.array(flat).reshape(x.shape)

    def assoc_eval(x):
        x = np.asarray(x, dtype=float)
        return omega.eval(x) / np.maximum(1.0, xi_eval(x))

    dini, _, _ = detect_dini(omega, rtol=rtol)
    return DerivedModulus(base=omega, xi_eval=xi_eval, assoc_eval=assoc_eval, dini_regular=dini)


def tail_integral_bounds(omega, p, t):
    """Normalised tails ``int_t^inf w s^(-p-1) ds`` and ``int_0^t w s^(-p-1) ds``
    divided by ``w(t) t^(-p)``.

    The upper tail is computed when p > q, the lower when p < r; the other
    entry is None.  Raises ParameterOutOfRange when neither applies.
    """
    t = float(t)
    upper_ok = p > omega.q
    lower_ok = p < omega.r
    if not (upper_ok or lower_ok):
        raise ParameterOutOfRange(f"p={p} needs p > q={omega.q} or p < r={omega.r}")
    scale = float(omega.eval(t)) * t ** (-p)
    upper = lower = None
    if upper_ok:
        # s = t/u maps (t, inf) onto (0, 1]
        def g(u):
            s = t / u
            return omega.eval(s) * s ** (-p - 1.0) * t / u ** 2

        val, _ = integrate(g, 0.0, 1.0, rtol=1e-10, atol=1e-300,
                           points=[2.0 ** -k for k in range(1, 60)])
        upper = val / scale
    if lower_ok:
        def h(s):
            return omega.eval(s) * s ** (-p - 1.0)

        val, _ = integrate(h, 0.0, t, rtol=1e-10, atol=1e-300,
                           points=[t * 2.0 ** -k for k in range(1, 60)])
        lower = val / scale
    return upper, lower
