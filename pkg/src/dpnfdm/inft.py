"""Joint inverse NFT: continuous spectrum by layer peeling, eigenvalues by
Darboux transformation.

Pipeline for a spectrum ``(rho, {(lam_k, b_k)})``:

1. pre-modify ``rho -> rho * prod_k (lam - lam_k) / (lam - conj(lam_k))``,
2. invert the pre-modified continuous spectrum with no eigenvalues,
3. for each eigenvalue build the auxiliary solution with boundary values
   ``v1(T) = 1``, ``(v2, v3)(-T) = -b_k`` and apply the Darboux step.

The continuous inversion is the exact inverse of the discrete scattering
map used by :mod:`dpnfdm.scatter`: the trapezoidal transfer matrix of a
signal vanishing at the grid edges factors into a product of per-node Cayley
transforms, so the first column of the total transfer matrix is a vector
polynomial in ``exp(-2i lam dt)`` that can be peeled node by node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .core import (
    NORMALIZED,
    DiscreteComponent,
    DualPolSignal,
    NonlinearSpectrum,
    TimeGrid,
    check_dual_grid,
    rms_relative_error,
)
from .scatter import scattering_arrays

log = logging.getLogger(__name__)


class InftDivergenceError(RuntimeError):
    """The continuous-spectrum inversion did not reach its tolerance."""

    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class DegenerateAuxiliaryError(ArithmeticError):
    """Auxiliary solution is singular or vanishes somewhere on the grid."""


@dataclass
class JointInftConfig:
    """Knobs of the joint inverse transform.

    ``refine_tol`` is the RMS relative residual on the reconstructed
    pre-modified spectrum at which defect correction stops; the iteration
    also stops once it no longer improves. ``divergence_level`` is the
    residual above which the continuous inversion is reported as failed;
    between ``warn_level`` and that level the best iterate is returned with a
    logged warning, since high-energy spectra legitimately end there.

    ``joint_refine_iter`` passes of defect correction are run on the full
    spectrum after the three-step synthesis, adjusting the requested
    continuous spectrum, eigenvalues and b-vectors against the direct
    transform of the result. Zero gives the plain three-step synthesis.
    """

    refine_max_iter: int = 8
    refine_tol: float = 1e-8
    divergence_level: float = 1.0
    warn_level: float = 1e-2
    darboux_order: str = "ascending"
    joint_refine_iter: int = 6
    joint_tol: float = 1e-7

    def __post_init__(self):
        if self.refine_tol <= 0 or self.divergence_level <= 0 or self.joint_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.refine_max_iter < 1 or self.joint_refine_iter < 0:
            raise ValueError("iteration counts must be non-negative (refine_max_iter >= 1)")
        if self.darboux_order not in ("ascending", "descending", "given"):
            raise ValueError(f"unknown darboux_order {self.darboux_order!r}")


@dataclass
class InftReport:
    iterations: int = 0
    residual: float = 0.0
    history: List[float] = field(default_factory=list)
    joint_history: List[float] = field(default_factory=list)


# -- step 1 ------------------------------------------------------------------


def premodify_continuous(rho1, rho2, lambda_grid, eigenvalues):
    lam = np.asarray(lambda_grid, dtype=float)
    factor = np.ones(lam.shape, dtype=complex)
    for ev in eigenvalues:
        ev = complex(ev)
        factor *= (lam - ev) / (lam - np.conj(ev))
    return np.asarray(rho1) * factor, np.asarray(rho2) * factor


# -- step 2: continuous-only inversion ----------------------------------------


def _min_phase_a(rho_fft: np.ndarray) -> np.ndarray:
    """Zero-free a(lambda) on the FFT-ordered dual grid with |a|^2 = 1/(1+|rho|^2)."""
    n = rho_fft.shape[-1]
    log_mod = -0.5 * np.log1p(np.sum(np.abs(rho_fft) ** 2, axis=0))
    cep = np.fft.ifft(log_mod)
    causal = np.zeros(n, dtype=complex)
    causal[0] = cep[0]
    causal[1 : (n + 1) // 2] = 2 * cep[1 : (n + 1) // 2]
    if n % 2 == 0:
        causal[n // 2] = cep[n // 2]
    return np.exp(np.fft.fft(causal))


def layer_peel(rho1, rho2, grid: TimeGrid) -> DualPolSignal:
    """Signal with continuous spectrum ``rho`` and no eigenvalues.

    Exact inverse of :func:`dpnfdm.scatter.continuous_spectrum` for signals
    that are zero at the first and last node; for other targets the result is
    the peeled approximation and residuals are left to defect correction.
    """
    n = grid.n_samples
    if n < 4:
        raise ValueError("layer peeling needs at least 4 samples")
    h = grid.dt
    c = 0.5 * h
    m_layers = n - 2
    lam_asc = grid.lambda_grid()
    w = grid.angular_frequencies()
    lam_fft = -0.5 * w
    order = np.searchsorted(lam_asc, lam_fft)
    rho = np.stack([np.asarray(rho1), np.asarray(rho2)])[:, order]

    a = _min_phase_a(rho)
    t1 = grid.t_start + h
    b = rho * a * np.exp(2j * lam_fft * t1)

    # first column of the transfer matrix as a vector polynomial in exp(-2i lam h)
    coeff = np.empty((3, m_layers), dtype=complex)
    a_coeff = np.fft.ifft(a)
    coeff[0] = a_coeff[m_layers - 1 :: -1]
    coeff[1:] = (np.fft.fft(b, axis=-1) / n)[:, :m_layers]

    q, failed = _kernels.peel_layers(coeff, c)
    if failed:
        raise InftDivergenceError("layer peeling hit a zero leading coefficient", failed, np.inf)
    return DualPolSignal(grid, q[0], q[1])


def inft_continuous(
    rho1,
    rho2,
    grid: TimeGrid,
    cfg: Optional[JointInftConfig] = None,
    return_report: bool = False,
):
    """Invert a continuous spectrum given on ``grid.lambda_grid()``.

    Layer peeling followed by defect correction on the target spectrum,
    ``target += rho_requested - rho(q)``, which removes the residual left by
    the finite time window.
    """
    cfg = cfg or JointInftConfig()
    if grid.units != NORMALIZED:
        raise ValueError("inverse NFT works on a normalized grid")
    lam = grid.lambda_grid()
    rho = np.stack([np.asarray(rho1, complex), np.asarray(rho2, complex)])
    report = InftReport()
    if not np.any(rho):
        q = DualPolSignal.zeros(grid)
        return (q, report) if return_report else q

    target = rho.copy()
    best, best_res = None, np.inf
    stalled = 0
    for it in range(max(cfg.refine_max_iter, 1)):
        q = layer_peel(target[0], target[1], grid)
        if not np.all(np.isfinite(q.pol1)) or not np.all(np.isfinite(q.pol2)):
            break
        a, b = scattering_arrays(q, lam)
        got = b / a
        res = rms_relative_error(got, rho)
        report.history.append(res)
        report.iterations = it + 1
        if res < best_res:
            stalled = 0 if res < 0.9 * best_res else stalled + 1
            best, best_res = q, res
        else:
            stalled += 1
        if best_res < cfg.refine_tol or stalled >= 2:
            break
        target = target + (rho - got)
    report.residual = best_res
    if best is None or best_res > cfg.divergence_level:
        raise InftDivergenceError(
            "continuous inversion did not converge", report.iterations, best_res
        )
    if best_res > cfg.warn_level:
        log.warning("inft_continuous: residual %.2e after %d iterations", best_res, report.iterations)
    else:
        log.debug("inft_continuous: %d iterations, residual %.2e", report.iterations, best_res)
    return (best, report) if return_report else best


# -- step 2b: auxiliary solutions ---------------------------------------------


@dataclass
class AuxiliaryTrajectory:
    eigenvalue: complex
    v: np.ndarray  # shape (3, n)
    left_value: Optional[np.ndarray] = None
    condition: float = 1.0
    t_first: float = 0.0
    t_last: float = 0.0

    @property
    def v1(self):
        return self.v[0]

    @property
    def v2(self):
        return self.v[1]

    @property
    def v3(self):
        return self.v[2]

    def boundary_residual(self) -> float:
        """Deviation from ``v1(T) e^{i lam T} = 1`` and
        ``(v2, v3)(-T) e^{-i lam T} = -left_value``."""
        if self.left_value is None:
            raise ValueError("no boundary data attached")
        lam = self.eigenvalue
        r1 = abs(self.v[0, -1] * np.exp(1j * lam * self.t_last) - 1)
        r2 = np.max(np.abs(self.v[1:, 0] * np.exp(-1j * lam * self.t_first) + self.left_value))
        return float(max(r1, r2))


def auxiliary_solution(
    q: DualPolSignal, lam_k: complex, b_k, cond_max: float = 1e12, a_min: float = 1e-8
) -> AuxiliaryTrajectory:
    """Eigenfunction of L(q) at ``lam_k`` that makes the Darboux step add
    ``(lam_k, b_k)``.

    ``v = (phi - phibar b_k) / a(lam_k)`` with ``phi`` the solution leaving
    the left edge as ``e1 exp(-i lam t)`` and ``phibar`` the pair reaching the
    right edge as ``(0, e_j) exp(i lam t)``. Hence ``v1 ~ exp(-i lam t)`` at
    the right edge and ``(v2, v3) ~ -Abar b_k / a exp(i lam t)`` at the left
    edge, where ``Abar`` is the lower 2x2 block of ``phibar`` there. On the
    zero signal this is the familiar ``(v2, v3)(-T) = -b_k``.
    """
    g = q.grid
    lam_k = complex(lam_k)
    b_k = np.asarray(b_k, dtype=complex).reshape(2)
    t = g.t
    psi = _kernels.left_trajectory(q.pol1, q.pol2, g.t_start, g.dt, lam_k).T  # (3, n)
    psib = _kernels.right_trajectory(q.pol1, q.pol2, g.t_start, g.dt, lam_k)  # (n, 3, 2)

    a_k = psi[0, -1]
    if abs(a_k) < a_min:
        raise DegenerateAuxiliaryError(f"a vanishes at {lam_k}: eigenvalue already present")
    block = psib[0, 1:, :]
    cond = float(np.linalg.cond(block))
    if not np.isfinite(cond) or cond > cond_max:
        raise DegenerateAuxiliaryError(
            f"right solution block at -T is singular at {lam_k} (condition {cond:.2e})"
        )
    inner = (psi - (psib @ b_k).T) / a_k
    v = np.empty_like(inner)
    v[0] = np.exp(-1j * lam_k * t) * inner[0]
    v[1:] = np.exp(1j * lam_k * t) * inner[1:]
    left = block @ b_k / a_k
    return AuxiliaryTrajectory(lam_k, v, left, cond, t[0], t[-1])


# -- step 3: Darboux transformation -------------------------------------------


def dressing_matrix_apply(aux: AuxiliaryTrajectory, lam, vec: np.ndarray) -> np.ndarray:
    """[(lam - conj(l_k)) I + (conj(l_k) - l_k) v v^H / |v|^2] applied pointwise."""
    lk = aux.eigenvalue
    v = aux.v
    norm2 = np.sum(np.abs(v) ** 2, axis=0)
    proj = np.sum(np.conj(v) * vec, axis=0) / norm2
    return (lam - np.conj(lk)) * vec + (np.conj(lk) - lk) * v * proj


def darboux_add(
    q: DualPolSignal,
    aux: AuxiliaryTrajectory,
    remaining: Sequence[AuxiliaryTrajectory] = (),
    min_norm: float = 1e-300,
) -> Tuple[DualPolSignal, List[AuxiliaryTrajectory]]:
    """Add the eigenvalue carried by ``aux`` to ``q``.

    Remaining auxiliary solutions are dressed with the Darboux matrix
    evaluated at their own eigenvalues so that they solve the new problem.
    """
    lk = aux.eigenvalue
    v = aux.v
    norm2 = np.sum(np.abs(v) ** 2, axis=0)
    if np.any(norm2 <= min_norm) or not np.all(np.isfinite(norm2)):
        raise DegenerateAuxiliaryError(f"auxiliary solution at {lk} vanishes on the grid")
    gain = 2j * (np.conj(lk) - lk) * v[0] / norm2
    q_new = q.with_samples(q.pol1 + gain * np.conj(v[1]), q.pol2 + gain * np.conj(v[2]))
    updated = [
        AuxiliaryTrajectory(
            r.eigenvalue,
            dressing_matrix_apply(aux, r.eigenvalue, r.v),
            r.left_value,
            r.condition,
            r.t_first,
            r.t_last,
        )
        for r in remaining
    ]
    return q_new, updated


def _ordered(discrete, order: str):
    items = list(discrete)
    if order == "ascending":
        return sorted(items, key=lambda d: abs(d.eigenvalue.imag))
    if order == "descending":
        return sorted(items, key=lambda d: -abs(d.eigenvalue.imag))
    return items


def _dress(q: DualPolSignal, discrete) -> DualPolSignal:
    auxes = [auxiliary_solution(q, d.eigenvalue, d.b) for d in discrete]
    while auxes:
        q, auxes = darboux_add(q, auxes[0], auxes[1:])
    return q


def _three_step(rho, discrete, grid, cfg, peel_only):
    lam = grid.lambda_grid()
    eigs = [d.eigenvalue for d in discrete]
    r1, r2 = premodify_continuous(rho[0], rho[1], lam, eigs)
    if peel_only:
        q, rep = layer_peel(r1, r2, grid), None
    else:
        q, rep = inft_continuous(r1, r2, grid, cfg, return_report=True)
    return _dress(q, discrete), rep


def _measure(q, lam, discrete):
    """Continuous spectrum and refined discrete data of ``q`` near ``discrete``."""
    from .scatter import EigenvalueSearchConfig, refine_eigenvalue

    a, b = scattering_arrays(q, lam)
    rho = b / a
    search = EigenvalueSearchConfig(initial_guesses=(), tol_residual=1e-12)
    found = []
    for d in discrete:
        ev = refine_eigenvalue(q, d.eigenvalue, search)
        _, bk = scattering_arrays(q, [ev])
        found.append(DiscreteComponent(ev, bk[:, 0]))
    return rho, found


def _joint_residual(rho, found, rho_ref, discrete) -> float:
    res = rms_relative_error(rho, rho_ref)
    for f, d in zip(found, discrete):
        res = max(
            res,
            float(np.linalg.norm(f.b - d.b) / max(np.linalg.norm(d.b), 1e-300)),
            abs(f.eigenvalue - d.eigenvalue) / abs(d.eigenvalue),
        )
    return res


def inft_joint(
    spectrum: NonlinearSpectrum,
    grid: TimeGrid,
    cfg: Optional[JointInftConfig] = None,
    return_report: bool = False,
):
    """Time-domain signal with the requested continuous and discrete spectrum.

    All auxiliary solutions are built on the continuous-only signal and
    dressed along with it; an auxiliary solution recomputed on an already
    dressed signal would carry the wrong scattering coefficient.

    The Darboux step is exact for the continuous-time problem, so the direct
    transform of the sampled result is off by the O(dt^2) discretization
    error of the scattering solver; the optional joint refinement removes it.
    """
    cfg = cfg or JointInftConfig()
    check_dual_grid(spectrum.lambda_grid, grid)
    discrete = _ordered(spectrum.discrete, cfg.darboux_order)
    rho_ref = spectrum.rho
    q, report = _three_step(rho_ref, discrete, grid, cfg, peel_only=False)
    if not discrete or cfg.joint_refine_iter == 0:
        return (q, report) if return_report else q

    from .scatter import EigenvalueSearchError

    lam = grid.lambda_grid()
    rho_t = rho_ref.copy()
    disc_t = list(discrete)
    best, best_res = q, np.inf
    for _ in range(cfg.joint_refine_iter + 1):
        try:
            rho_m, found = _measure(q, lam, disc_t)
        except (EigenvalueSearchError, ArithmeticError) as exc:
            log.debug("joint refinement stopped: %s", exc)
            break
        res = _joint_residual(rho_m, found, rho_ref, discrete)
        report.joint_history.append(res)
        if not res < best_res:
            break
        best, best_res = q, res
        if res < cfg.joint_tol or len(report.joint_history) > cfg.joint_refine_iter:
            break
        rho_t = rho_t + (rho_ref - rho_m)
        new = []
        for t, f, d in zip(disc_t, found, discrete):
            ev = t.eigenvalue + (d.eigenvalue - f.eigenvalue)
            if ev.imag <= 0:
                ev = t.eigenvalue
            new.append(DiscreteComponent(ev, t.b + (d.b - f.b)))
        disc_t = new
        try:
            q, _ = _three_step(rho_t, disc_t, grid, cfg, peel_only=True)
        except (InftDivergenceError, DegenerateAuxiliaryError) as exc:
            log.debug("joint refinement stopped: %s", exc)
            break
        if not np.all(np.isfinite(q.samples)):
            break
    return (best, report) if return_report else best
