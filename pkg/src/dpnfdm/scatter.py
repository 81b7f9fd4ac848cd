"""Direct nonlinear Fourier transform for the Manakov system.

Solves ``v' = M(t, lam) v`` with

    M = [[-i lam, q1, q2], [-q1*, i lam, 0], [-q2*, 0, i lam]]

from the left edge of the grid with ``v ~ (1, 0, 0) e^{-i lam t}`` and reads
the scattering data off the right edge:

    a = v1 e^{i lam t},   b_j = v_{j+1} e^{-i lam t}.

Continuous spectrum is ``rho = b / a`` on the real axis, the discrete
spectrum consists of the zeros of ``a`` in the upper half plane together with
the coefficients ``b`` (and norming constants ``d = b / a'``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .core import NORMALIZED, DualPolSignal, NonlinearSpectrum, DiscreteComponent, UnitsError


class BoundaryConditionError(ValueError):
    """The signal does not vanish at the edges of its grid."""


class SingularSpectrumError(ArithmeticError):
    """|a(lambda)| is too small to form rho = b / a at some real lambda."""

    def __init__(self, message, lambdas):
        super().__init__(message)
        self.lambdas = np.asarray(lambdas)


class EigenvalueSearchError(RuntimeError):
    """Newton refinement of an eigenvalue failed."""


@dataclass
class ScatteringData:
    lam: complex
    a: complex
    b: np.ndarray
    a_prime: complex

    def unimodularity_residual(self) -> float:
        return float(abs(abs(self.a) ** 2 + np.sum(np.abs(self.b) ** 2) - 1))


@dataclass
class EigenvalueSearchConfig:
    initial_guesses: Sequence[complex] = (0.3j, 0.6j)
    max_iter: int = 50
    tol_residual: float = 1e-9
    tol_step: float = 1e-12

    def __post_init__(self):
        if self.tol_residual <= 0 or self.tol_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        for g in self.initial_guesses:
            if not complex(g).imag > 0:
                raise ValueError(f"initial guess {g} is not in the upper half plane")


@dataclass
class DiscreteCoefficient:
    eigenvalue: complex
    b: np.ndarray
    a_prime: complex

    @property
    def d(self) -> np.ndarray:
        return self.b / self.a_prime


def _require_normalized(q: DualPolSignal) -> None:
    if q.units != NORMALIZED:
        raise UnitsError("the scattering problem is posed in normalized units")


def check_boundaries(
    q: DualPolSignal, warn_level: float = 1e-6, error_level: float = 1e-3, mode: str = "raise"
) -> float:
    """Relative edge amplitude max(|q(t_0)|, |q(t_end)|) / max|q|.

    Above ``error_level`` raises :class:`BoundaryConditionError` (or warns when
    ``mode == "warn"``); between the two levels a warning is issued.
    ``mode == "ignore"`` skips the check.
    """
    if mode == "ignore":
        return 0.0
    amp = np.sqrt(q.power())
    peak = amp.max()
    if peak == 0:
        return 0.0
    edge = max(amp[0], amp[-1]) / peak
    if edge > error_level:
        msg = f"signal does not vanish at the grid edges (relative edge amplitude {edge:.2e})"
        if mode == "raise":
            raise BoundaryConditionError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    elif edge > warn_level:
        warnings.warn(
            f"signal edges only decay to {edge:.2e} of the peak", RuntimeWarning, stacklevel=3
        )
    return float(edge)


def scattering_arrays(q: DualPolSignal, lams, derivative: bool = False):
    """Vectorized scattering data over ``lams``.

    Returns ``(a, b)`` with ``b`` of shape ``(2, m)``, plus ``a_prime`` when
    ``derivative`` is set. Each lambda is propagated independently, so the
    result does not depend on the ordering of ``lams``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=np.complex128))
    g = q.grid
    if derivative:
        a, b1, b2, ap = _kernels.scatter_with_derivative(q.pol1, q.pol2, g.t_start, g.dt, lams)
        return a, np.stack([b1, b2]), ap
    a, b1, b2 = _kernels.scatter(q.pol1, q.pol2, g.t_start, g.dt, lams)
    return a, np.stack([b1, b2])


def scatter_at(q: DualPolSignal, lam: complex, boundary: str = "raise") -> ScatteringData:
    _require_normalized(q)
    check_boundaries(q, mode=boundary)
    a, b, ap = scattering_arrays(q, [lam], derivative=True)
    return ScatteringData(complex(lam), complex(a[0]), b[:, 0].copy(), complex(ap[0]))


def continuous_spectrum(
    q: DualPolSignal,
    lambda_grid=None,
    a_min: float = 1e-8,
    boundary: str = "raise",
):
    """rho_j(lambda) = b_j / a on a real grid (default: the grid dual to ``q``)."""
    _require_normalized(q)
    check_boundaries(q, mode=boundary)
    if lambda_grid is None:
        lambda_grid = q.grid.lambda_grid()
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(lambda_grid) <= 0):
        raise ValueError("lambda grid must be strictly ascending")
    a, b = scattering_arrays(q, lambda_grid)
    small = np.abs(a) < a_min
    if np.any(small):
        raise SingularSpectrumError(
            f"|a| below {a_min} at {small.sum()} grid points", lambda_grid[small]
        )
    return b[0] / a, b[1] / a


def unimodularity_residual(q: DualPolSignal, lambda_grid) -> float:
    """max over the grid of | |a|^2 + |b1|^2 + |b2|^2 - 1 |."""
    a, b = scattering_arrays(q, np.asarray(lambda_grid, dtype=float))
    return float(np.max(np.abs(np.abs(a) ** 2 + np.sum(np.abs(b) ** 2, axis=0) - 1)))


def refine_eigenvalue(q: DualPolSignal, guess: complex, cfg: EigenvalueSearchConfig) -> complex:
    """Newton iteration on a(lambda) starting from ``guess``."""
    lam = complex(guess)
    for _ in range(cfg.max_iter):
        a, _, ap = scattering_arrays(q, [lam], derivative=True)
        a, ap = complex(a[0]), complex(ap[0])
        if abs(a) < cfg.tol_residual:
            return lam
        if ap == 0:
            raise EigenvalueSearchError(f"zero derivative at {lam}")
        step = a / ap
        lam = lam - step
        if lam.imag <= 0:
            raise EigenvalueSearchError(f"iterate left the upper half plane ({lam})")
        if abs(step) < cfg.tol_step:
            a, _ = scattering_arrays(q, [lam])
            if abs(a[0]) < cfg.tol_residual:
                return lam
            break
    raise EigenvalueSearchError(
        f"no convergence from guess {guess} after {cfg.max_iter} iterations (last {lam})"
    )


@dataclass
class EigenvalueSearchResult:
    eigenvalues: List[complex] = field(default_factory=list)
    failures: List[tuple] = field(default_factory=list)


def search_eigenvalues(q: DualPolSignal, cfg: EigenvalueSearchConfig) -> EigenvalueSearchResult:
    _require_normalized(q)
    result = EigenvalueSearchResult()
    for guess in cfg.initial_guesses:
        try:
            result.eigenvalues.append(refine_eigenvalue(q, guess, cfg))
        except EigenvalueSearchError as exc:
            result.failures.append((complex(guess), str(exc)))
    return result


def find_eigenvalues(q: DualPolSignal, cfg: Optional[EigenvalueSearchConfig] = None) -> List[complex]:
    """Refined eigenvalues for each guess that converges.

    Failed guesses are reported through ``warnings`` and skipped; use
    :func:`search_eigenvalues` to inspect them programmatically.
    """
    cfg = cfg or EigenvalueSearchConfig()
    result = search_eigenvalues(q, cfg)
    for guess, reason in result.failures:
        warnings.warn(f"eigenvalue guess {guess}: {reason}", RuntimeWarning, stacklevel=2)
    return result.eigenvalues


def discrete_coefficients(
    q: DualPolSignal, eigenvalues, a_prime_min: float = 1e-10
) -> List[DiscreteCoefficient]:
    _require_normalized(q)
    lams = np.asarray(list(eigenvalues), dtype=np.complex128)
    if lams.size == 0:
        return []
    _, b, ap = scattering_arrays(q, lams, derivative=True)
    out = []
    for k, lam in enumerate(lams):
        if abs(ap[k]) < a_prime_min:
            raise ArithmeticError(f"|a'| vanishes at {lam}: degenerate eigenvalue")
        out.append(DiscreteCoefficient(complex(lam), b[:, k].copy(), complex(ap[k])))
    return out


def direct_nft(
    q: DualPolSignal,
    search: Optional[EigenvalueSearchConfig] = None,
    lambda_grid=None,
    boundary: str = "raise",
) -> NonlinearSpectrum:
    """Continuous spectrum on the dual grid plus the guess-seeded discrete part."""
    if lambda_grid is None:
        lambda_grid = q.grid.lambda_grid()
    rho1, rho2 = continuous_spectrum(q, lambda_grid, boundary=boundary)
    discrete = []
    if search is not None and len(search.initial_guesses):
        eigs = find_eigenvalues(q, search)
        discrete = [DiscreteComponent(c.eigenvalue, c.b) for c in discrete_coefficients(q, eigs)]
    return NonlinearSpectrum(lambda_grid, rho1, rho2, discrete)
