"""Polynomial replacements for the ReLU activation.

Three groups of tools:

* minimax approximation of ReLU on a symmetric interval, both the
  closed-form degree-2 solution and a general Remez exchange solver;
* decision procedures for whether a function can be uniformly
  approximated by polynomials with *integer* coefficients (the answer
  depends on the interval: length >= 4, the unit interval, and the
  documented algebraic-kernel special cases);
* construction of the integer activation x^2 + a*x from the scaled
  minimax polynomial.

Coefficients are kept as plain Python numbers so the interpolation
routines stay exact when fed ints or fractions.Fraction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)

# The documented algebraic-kernel range for symmetric intervals [-a, a].
KERNEL_ALPHA_MIN = SQRT2
KERNEL_ALPHA_MAX = 1.563

DEFAULT_TOL_INT = 1e-9


class RemezError(RuntimeError):
    """Raised when the levelling linear system is singular."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def symmetric(cls, a: float) -> "Interval":
        if not a > 0:
            raise ValueError(f"symmetric interval needs a > 0, got {a}")
        return cls(-a, a)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _near_int(v, tol) -> bool:
    return abs(v - round(v)) <= tol


@dataclass(frozen=True)
class Polynomial:
    """coeffs[k] is the coefficient of x^k; any real number type works."""

    coeffs: tuple
    tol_int: float = DEFAULT_TOL_INT

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if len(self.coeffs) == 0:
            raise ValueError("polynomial needs at least one coefficient")

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    @property
    def trimmed_coeffs(self) -> tuple:
        c = list(self.coeffs)
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        return tuple(c)

    @property
    def degree(self) -> int:
        return len(self.trimmed_coeffs) - 1

    @property
    def leading(self):
        return self.trimmed_coeffs[-1]

    @property
    def is_integer_poly(self) -> bool:
        return all(_near_int(c, self.tol_int) for c in self.coeffs)

    def rounded(self) -> "Polynomial":
        return Polynomial(tuple(int(round(c)) for c in self.coeffs), self.tol_int)

    def scaled(self, factor) -> "Polynomial":
        return Polynomial(tuple(c * factor for c in self.coeffs), self.tol_int)

    def drop_constant(self) -> "Polynomial":
        c = list(self.coeffs)
        c[0] = 0 * c[0]
        return Polynomial(tuple(c), self.tol_int)

    def __str__(self) -> str:
        terms = []
        for k in reversed(range(len(self.trimmed_coeffs))):
            c = self.trimmed_coeffs[k]
            if c == 0 and len(self.trimmed_coeffs) > 1:
                continue
            if k == 0:
                terms.append(f"{c}")
            elif k == 1:
                terms.append("x" if c == 1 else f"{c}*x")
            else:
                terms.append(f"x^{k}" if c == 1 else f"{c}*x^{k}")
        return " + ".join(terms) if terms else "0"


def eval_poly(p: Polynomial, x):
    """Horner evaluation of sum c_k x^k."""
    return p(x)


def relu(x):
    return max(x, 0)


def scaled_relu(x, c):
    return max(c * x, 0)


def interpolate_deg2(f_neg1, f_0, f_1) -> Polynomial:
    """Degree-2 polynomial through (-1, f_neg1), (0, f_0), (1, f_1).

    Exact when the inputs are ints or Fractions.
    """
    c2 = (f_1 + f_neg1 - 2 * f_0) / 2
    c1 = (f_1 - f_neg1) / 2
    return Polynomial((f_0, c1, c2))


class Reason(enum.Enum):
    OK = "ok"
    NOT_INTEGER_VALUED = "not_integer_valued"
    PARITY_MISMATCH = "parity_mismatch"
    INTERVAL_TOO_LONG = "interval_too_long"
    KERNEL_INTERPOLANT_NOT_INTEGER = "kernel_interpolant_not_integer"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ApproximabilityVerdict:
    approximable: bool
    reason: Reason
    witness: Optional[str] = None
    interpolant: Optional[Polynomial] = None


def check_approx_unit_interval(
    f_neg1, f_0, f_1, tol_int: float = DEFAULT_TOL_INT
) -> ApproximabilityVerdict:
    """Uniform integer-coefficient approximability of a continuous f on [-1, 1].

    Decidable from the three samples alone: f must be integer-valued at
    -1, 0, 1 and f(-1), f(1) must share parity.
    """
    for x, v in ((-1, f_neg1), (0, f_0), (1, f_1)):
        if not _near_int(v, tol_int):
            return ApproximabilityVerdict(
                False, Reason.NOT_INTEGER_VALUED, witness=f"f({x}) = {v} is not an integer"
            )
    lo, hi = round(f_neg1), round(f_1)
    if (hi - lo) % 2 != 0:
        return ApproximabilityVerdict(
            False,
            Reason.PARITY_MISMATCH,
            witness=f"f(-1) = {lo} and f(1) = {hi} differ in parity",
        )
    return ApproximabilityVerdict(True, Reason.OK)


def check_interval_length(iv: Interval, f_is_integer_poly: bool) -> ApproximabilityVerdict:
    """On intervals of length >= 4 only integer polynomials approximate themselves."""
    if iv.length < 4:
        raise ValueError(
            f"interval length {iv.length} < 4; use the unit-interval or kernel checker"
        )
    if f_is_integer_poly:
        return ApproximabilityVerdict(True, Reason.OK)
    return ApproximabilityVerdict(
        False,
        Reason.INTERVAL_TOO_LONG,
        witness=f"interval [{iv.lo}, {iv.hi}] has length >= 4 and f is not an integer polynomial",
    )


@dataclass(frozen=True)
class AlgebraicKernelSpecialCase:
    """Kernel point set for symmetric intervals [-a, a] with sqrt(2) <= a <= 1.563."""

    alpha: float
    points: tuple

    @classmethod
    def for_alpha(cls, alpha: float) -> "AlgebraicKernelSpecialCase":
        if not (KERNEL_ALPHA_MIN <= alpha <= KERNEL_ALPHA_MAX):
            raise ValueError(
                f"alpha {alpha} outside the documented kernel range "
                f"[{KERNEL_ALPHA_MIN}, {KERNEL_ALPHA_MAX}]"
            )
        # 0 plus whichever of +-1, +-sqrt(2) lie inside; all do in this range.
        return cls(alpha, (-SQRT2, -1.0, 0.0, 1.0, SQRT2))


def check_kernel_special_case(
    alpha: float,
    f_samples: Mapping[float, float],
    tol_int: float = DEFAULT_TOL_INT,
) -> ApproximabilityVerdict:
    """Approximability on [-alpha, alpha] via interpolation on the kernel points.

    Only the documented range sqrt(2) <= alpha <= 1.563 is decided; anything
    else returns Unknown rather than guessing at the general kernel.
    """
    if not (KERNEL_ALPHA_MIN <= alpha <= KERNEL_ALPHA_MAX):
        return ApproximabilityVerdict(
            False,
            Reason.UNKNOWN,
            witness=f"alpha {alpha} outside the documented kernel range",
        )
    kernel = AlgebraicKernelSpecialCase.for_alpha(alpha)
    try:
        ys = [f_samples[x] for x in kernel.points]
    except KeyError as e:
        raise ValueError(f"missing sample for kernel point {e.args[0]}") from None
    coeffs = np.polynomial.polynomial.polyfit(
        np.asarray(kernel.points, dtype=float), np.asarray(ys, dtype=float), len(kernel.points) - 1
    )
    interp = Polynomial(tuple(float(c) for c in coeffs), tol_int)
    if interp.is_integer_poly:
        return ApproximabilityVerdict(True, Reason.OK, interpolant=interp)
    bad = next(c for c in interp.coeffs if not _near_int(c, tol_int))
    return ApproximabilityVerdict(
        False,
        Reason.KERNEL_INTERPOLANT_NOT_INTEGER,
        witness=f"kernel interpolant coefficient {bad} is not an integer",
        interpolant=interp,
    )


@dataclass(frozen=True)
class MinimaxResult:
    poly: Polynomial
    error: float
    ref_points: tuple
    iterations: int
    converged: bool


def relu_minimax_deg2(a: float) -> MinimaxResult:
    """Closed-form best degree-2 approximation of ReLU on [-a, a].

    The polynomial is x^2/(2a) + x/2 + a/16 with sup error a/16; the error
    equioscillates at -a, -a/2, 0, a/2, a (five points: the optimum is
    degenerate, so the alternation set exceeds degree+2).
    """
    if not a > 0:
        raise ValueError(f"interval half-width must be positive, got {a}")
    poly = Polynomial((a / 16, 0.5, 1 / (2 * a)))
    return MinimaxResult(
        poly=poly,
        error=a / 16,
        ref_points=(-a, -a / 2, 0.0, a / 2, a),
        iterations=0,
        converged=True,
    )


def _cheb_design(xs: np.ndarray, degree: int, lo: float, hi: float) -> np.ndarray:
    t = (2.0 * xs - (lo + hi)) / (hi - lo)
    cols = np.empty((len(xs), degree + 1))
    cols[:, 0] = 1.0
    if degree >= 1:
        cols[:, 1] = t
    for k in range(2, degree + 1):
        cols[:, k] = 2.0 * t * cols[:, k - 1] - cols[:, k - 2]
    return cols


def _cheb_to_monomial(cheb_coeffs: np.ndarray, degree: int, lo: float, hi: float) -> Polynomial:
    c = np.polynomial.chebyshev.Chebyshev(cheb_coeffs, domain=[lo, hi])
    mono = c.convert(kind=np.polynomial.polynomial.Polynomial)
    coeffs = list(float(v) for v in mono.coef)
    while len(coeffs) < degree + 1:
        coeffs.append(0.0)
    return Polynomial(tuple(coeffs[: degree + 1]))


def _golden_max(g: Callable[[float], float], a: float, b: float, iters: int = 60):
    """Golden-section maximization of g on [a, b]."""
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - gr * (b - a)
    x2 = a + gr * (b - a)
    g1, g2 = g(x1), g(x2)
    for _ in range(iters):
        if g1 < g2:
            a, x1, g1 = x1, x2, g2
            x2 = a + gr * (b - a)
            g2 = g(x2)
        else:
            b, x2, g2 = x2, x1, g1
            x1 = b - gr * (b - a)
            g1 = g(x1)
    return (x1, g1) if g1 >= g2 else (x2, g2)


def remez(
    f: Callable[[float], float],
    degree: int,
    iv: Interval,
    tol: float = 1e-9,
    max_iter: int = 100,
    grid_points: int = 4096,
) -> MinimaxResult:
    """Remez single-exchange iteration for the minimax polynomial of degree <= n.

    Starts from Chebyshev points of the second kind, solves the levelled
    system in the Chebyshev basis, locates the worst error extremum on a
    dense grid refined by golden section, and exchanges it into the
    reference set preserving sign alternation.  Stops when
    (max_error - |levelled|) / |levelled| < tol (or max_error <= tol
    outright, which covers f already being a polynomial of degree <= n).
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = iv.lo, iv.hi
    m = degree + 2

    k = np.arange(m)
    t = -np.cos(np.pi * k / (m - 1))
    refs = list(0.5 * (lo + hi) + 0.5 * (hi - lo) * t)

    xs = np.linspace(lo, hi, grid_points)
    fxs = np.array([f(x) for x in xs])

    poly: Polynomial = Polynomial((0.0,))
    max_err = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        ref_arr = np.asarray(refs)
        design = _cheb_design(ref_arr, degree, lo, hi)
        signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        system = np.hstack([design, signs[:, None]])
        rhs = np.array([f(x) for x in refs])
        try:
            sol = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as e:
            raise RemezError(
                f"levelling system singular at iteration {it} (refs={refs})"
            ) from e
        cheb_coeffs, levelled = sol[:-1], sol[-1]
        poly = _cheb_to_monomial(cheb_coeffs, degree, lo, hi)

        def err(x):
            return f(x) - poly(x)

        errs = fxs - poly(xs)
        i_star = int(np.argmax(np.abs(errs)))
        bracket_lo = xs[max(i_star - 1, 0)]
        bracket_hi = xs[min(i_star + 1, grid_points - 1)]
        x_star, abs_e_star = _golden_max(lambda x: abs(err(x)), bracket_lo, bracket_hi)
        if abs(errs[i_star]) > abs_e_star:
            x_star, abs_e_star = float(xs[i_star]), float(abs(errs[i_star]))
        max_err = abs_e_star

        lev = abs(levelled)
        if max_err <= tol or (lev > 0 and (max_err - lev) / lev < tol):
            converged = True
            break

        # Exchange x_star for the reference point it can replace without
        # breaking alternation (signs are the solved pattern +-+-... times
        # sign(levelled)).
        sgn_lev = 1.0 if levelled >= 0 else -1.0
        ref_signs = [sgn_lev * (1.0 if i % 2 == 0 else -1.0) for i in range(m)]
        e_star_sign = 1.0 if err(x_star) >= 0 else -1.0
        if x_star < refs[0]:
            if e_star_sign == ref_signs[0]:
                refs[0] = x_star
            else:
                refs = [x_star] + refs[:-1]
        elif x_star > refs[-1]:
            if e_star_sign == ref_signs[-1]:
                refs[-1] = x_star
            else:
                refs = refs[1:] + [x_star]
        else:
            j = 0
            while j + 1 < m and not (refs[j] <= x_star <= refs[j + 1]):
                j += 1
            if e_star_sign == ref_signs[j]:
                refs[j] = x_star
            else:
                refs[j + 1] = x_star

    return MinimaxResult(
        poly=poly,
        error=float(max_err),
        ref_points=tuple(float(r) for r in refs),
        iterations=it,
        converged=converged,
    )


def scale_to_integer(p: Polynomial, target_leading) -> Polynomial:
    """Rescale p so its leading coefficient equals target_leading.

    With the closed-form ReLU minimax and target 1 this produces
    x^2 + a*x + a^2/8, the form whose non-constant part rounds to the
    integer activation.
    """
    lead = p.leading
    if lead == 0:
        raise ValueError("cannot scale a zero polynomial")
    return p.scaled(target_leading / lead)


def poly_activation(a: int) -> Polynomial:
    """The integer activation polynomial x^2 + a*x (constant term dropped)."""
    if isinstance(a, bool) or not isinstance(a, int):
        raise ValueError(f"activation parameter must be an int, got {a!r}")
    if a < 1:
        raise ValueError(f"activation parameter must be >= 1, got {a}")
    return Polynomial((0, a, 1))
