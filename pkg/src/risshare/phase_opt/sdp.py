"""Max-min unit-diagonal SDP relaxation and Gaussian-randomization rounding.

The relaxation of one hop is::

    maximize    t
    subject to  zeta_m <a_m a_m^H, V> >= t     m = 1..M
                diag(V) = 1,  V Hermitian PSD

Written as a standard-form conic program over ``K = H^n_+ x R^{M+1}_+`` with
variables ``(V, s_1..s_M, t)`` and equality rows ``V_kk = 1`` and
``zeta_m <a_m a_m^H, V> - s_m - t = 0``, it is solved with an infeasible
primal-dual path-following method (HKM search direction, Mehrotra
predictor-corrector).  The objective ``t >= 0`` loses nothing because every
``<a a^H, V>`` is nonnegative on the cone.

The reported ``upper_bound`` is not the solver's dual objective but a bound
certified from it: the multipliers are projected onto the simplex and the
diagonal dual is shifted until ``Diag(u) - sum_m lambda_m zeta_m a_m a_m^H`` is
PSD, so it holds even when the iterate is slightly infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .hop import HopProblem, theta_from_v


class SdpConvergenceError(RuntimeError):
    def __init__(self, message, best: "SdpSolution"):
        super().__init__(message)
        self.best = best


@dataclass
class SdpSolution:
    V: np.ndarray
    upper_bound: float
    relaxed_value: float          # min_m zeta_m tr(A_m V) at the returned V
    iterations: int = 0
    extracted_phases: np.ndarray | None = None
    achieved_value: float | None = None
    randomization_trials: int = 0

    @property
    def certified_gap(self) -> float:
        """Relative distance between the certified bound and the value of ``V``."""
        if self.upper_bound <= 0:
            return 0.0
        return (self.upper_bound - self.relaxed_value) / self.upper_bound


def _max_step(X: np.ndarray, dX: np.ndarray, x: np.ndarray, dx: np.ndarray) -> float:
    """Largest alpha keeping X + alpha dX PD and x + alpha dx > 0."""
    L = np.linalg.cholesky(X)
    Li = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.conj().T)[0]
    alpha = np.inf if lam >= 0 else -1.0 / lam
    neg = dx < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-x[neg] / dx[neg])))
    return alpha


def _herm(A):
    return (A + A.conj().T) / 2


def certified_bound(C: np.ndarray, u: np.ndarray, lam: np.ndarray) -> float:
    """Upper bound sum(u') with Diag(u') >= sum_m lam_m c_m c_m^H, lam on the simplex.

    ``C`` holds the scaled vectors ``c_m`` as columns.
    """
    n, M = C.shape
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum() if lam.sum() > 0 else np.full(M, 1.0 / M)
    S = np.diag(u).astype(complex) - (C * lam) @ C.conj().T
    S = _herm(S)
    shift = max(0.0, -np.linalg.eigvalsh(S)[0])
    # slack for the eigenvalue error of the check itself
    slack = 64 * n * np.finfo(float).eps * max(1.0, np.linalg.norm(S, 2))
    return float(np.sum(u) + n * (shift + slack))


def sdp_maxmin(problem: HopProblem, tol: float = 1e-7, max_iter: int = 100) -> SdpSolution:
    """Solve the relaxation of one hop.

    The returned ``V`` has its diagonal rescaled to exactly one, and the run
    stops once ``upper_bound - value(V) <= tol * upper_bound`` up to a rounding
    floor of ``1e-12 n`` relative to the largest ``zeta_m ||a_m||^2``.  Raises
    :class:`SdpConvergenceError` carrying the best iterate seen if that does
    not happen within ``max_iter`` iterations or the iteration breaks down
    numerically.
    """
    a, zetas = problem.a, problem.zetas
    M, n = a.shape
    if M < 1 or n < 1:
        raise ValueError("need at least one car and one element")
    if problem.degenerate:
        V = np.eye(n, dtype=complex)
        return SdpSolution(V=V, upper_bound=0.0, relaxed_value=0.0)
    if n == 1:
        val = float(np.min(zetas * np.abs(a[:, 0]) ** 2))
        return SdpSolution(V=np.ones((1, 1), dtype=complex), upper_bound=val, relaxed_value=val)

    # scale so the largest trace(zeta_m a_m a_m^H) is n
    w = zetas * np.sum(np.abs(a) ** 2, axis=1)
    scale = w.max() / n
    C = (np.sqrt(zetas / scale)[:, None] * a).T          # (n, M) columns c_m
    nu = n + M + 1
    b = np.concatenate([np.ones(n), np.zeros(M)])

    def A_op(W: np.ndarray, wl: np.ndarray) -> np.ndarray:
        diag = np.real(np.diag(W))
        quad = np.real(np.einsum("im,ij,jm->m", C.conj(), W, C))
        return np.concatenate([diag, quad - wl[:M] - wl[M]])

    def At_op(y: np.ndarray):
        Ysd = np.diag(y[:n]).astype(complex) + (C * y[n:]) @ C.conj().T
        ylp = np.concatenate([-y[n:], [-y[n:].sum()]])
        return Ysd, ylp

    def _newton_step(X, x, Z, z, rp, Rd, rd, mu):
        Zi = _herm(np.linalg.inv(Z))
        XC = X @ C
        ZiC = Zi @ C
        schur = np.empty((n + M, n + M))
        schur[:n, :n] = np.real(X * Zi.T)
        cross = np.real(XC * ZiC.conj())
        schur[:n, n:] = cross
        schur[n:, :n] = cross.T
        schur[n:, n:] = (np.real((C.conj().T @ XC) * (C.conj().T @ ZiC).T)
                         + np.diag(x[:M] / z[:M]) + x[M] / z[M])
        chol = np.linalg.cholesky((schur + schur.T) / 2)

        def solve(R, r):
            # dX = R - X dZ Zi  with  dZ = Rd - A*(dy)
            rhs = rp - A_op(R - X @ Rd @ Zi, r - x * rd / z)
            dy = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            Ysd, ylp = At_op(dy)
            dZ = _herm(Rd - Ysd)
            dz = rd - ylp
            dX = _herm(R - X @ dZ @ Zi)
            return dX, r - x * dz / z, dy, dZ, dz

        # predictor
        dXa, dxa, _, dZa, dza = solve(-X, -x)
        ap = min(1.0, _max_step(X, dXa, x, dxa))
        ad = min(1.0, _max_step(Z, dZa, z, dza))
        mu_aff = (np.real(np.vdot(X + ap * dXa, Z + ad * dZa))
                  + (x + ap * dxa) @ (z + ad * dza)) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3)
        # corrector
        R = sigma * mu * Zi - X - dXa @ dZa @ Zi
        r = sigma * mu / z - x - dxa * dza / z
        dX, dx, dy, dZ, dz = solve(R, r)
        ap = min(1.0, 0.98 * _max_step(X, dX, x, dx))
        ad = min(1.0, 0.98 * _max_step(Z, dZ, z, dz))
        return ap * dX, ap * dx, ad * dZ, ad * dz, ad * dy

    Csd = np.zeros((n, n), dtype=complex)
    clp = np.zeros(M + 1)
    clp[M] = -1.0

    X = np.eye(n, dtype=complex)
    x = np.ones(M + 1)
    Z = np.eye(n, dtype=complex)
    z = np.ones(M + 1)
    y = np.zeros(n + M)

    def snapshot(it):
        # X, y are read from the enclosing loop
        V = _herm(X)
        d = np.sqrt(np.clip(np.real(np.diag(V)), 1e-300, None))
        V = V / np.outer(d, d)
        relaxed = float(np.min(zetas * np.real(np.einsum("mi,ij,mj->m", a.conj(), V, a))))
        u = -y[:n]
        bound = certified_bound(C, u, y[n:]) * scale
        return SdpSolution(V=V, upper_bound=max(bound, relaxed), relaxed_value=relaxed, iterations=it)

    # floor for the certificate's own rounding, in unscaled units
    atol = 1e-12 * n * scale
    best = None
    for it in range(1, max_iter + 1):
        Ysd, ylp = At_op(y)
        Rd = Csd - Ysd - Z
        rd = clp - ylp - z
        rp = b - A_op(X, x)
        mu = (np.real(np.vdot(X, Z)) + x @ z) / nu
        gap = abs(x[M] + b @ y) / (1 + abs(x[M]) + abs(b @ y))
        if gap < 1e3 * tol:
            snap = snapshot(it)
            if best is None or snap.certified_gap < best.certified_gap:
                best = snap
            if snap.upper_bound - snap.relaxed_value <= tol * snap.upper_bound + atol:
                return snap
        if mu < 1e-16:
            break  # stalled at machine precision
        try:
            step = _newton_step(X, x, Z, z, rp, Rd, rd, mu)
        except np.linalg.LinAlgError:
            break  # iterate too ill-conditioned to continue
        X, x, Z, z, y = X + step[0], x + step[1], Z + step[2], z + step[3], y + step[4]
        X, Z = _herm(X), _herm(Z)

    if best is None:
        best = snapshot(it)
    raise SdpConvergenceError(
        f"certified gap {best.certified_gap:.2e} above tol={tol} after {it} iterations", best)


def extract_rank_one(sol: SdpSolution, problem: HopProblem, trials: int = 200, seed=0) -> SdpSolution:
    """Gaussian randomization: candidates U Σ^{1/2} r projected to unit modulus.

    The principal eigenvector is evaluated as candidate 0, then ``trials``
    random draws.  The first candidate with the best max-min value wins.
    Returns a copy of ``sol`` with the phases and achieved value filled in.
    """
    n = problem.n_elements
    w, U = np.linalg.eigh(_herm(sol.V))
    w = np.clip(w, 0.0, None)
    rng = np.random.default_rng(seed)
    r = (rng.standard_normal((trials, n)) + 1j * rng.standard_normal((trials, n))) / np.sqrt(2)
    cands = np.vstack([U[:, -1], (r * np.sqrt(w)) @ U.T])
    mag = np.abs(cands)
    cands = np.where(mag > 0, cands / np.where(mag > 0, mag, 1), 1.0)
    vals = np.min(problem.zetas * np.abs(cands.conj() @ problem.a.T) ** 2, axis=1)
    k = int(np.argmax(vals))
    return replace(sol, extracted_phases=theta_from_v(cands[k]), achieved_value=float(vals[k]),
                   randomization_trials=trials)


def sdr_hop(problem: HopProblem, trials: int = 200, seed=0, tol: float = 1e-7) -> SdpSolution:
    """Relax, solve and round one hop."""
    try:
        sol = sdp_maxmin(problem, tol=tol)
    except SdpConvergenceError as exc:
        sol = exc.best
    return extract_rank_one(sol, problem, trials, seed)
