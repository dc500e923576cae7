"""Pure numpy implementations of the hot kernels.

These are the reference versions; the compiled module in ``_ckernels``
must agree with them to rounding error.
"""

from __future__ import annotations

import numpy as np

DIM = 16
_TRIL = np.tril_indices(DIM, -1)


def unpack_t(t: np.ndarray) -> np.ndarray:
    T = np.zeros((DIM, DIM), dtype=np.complex128)
    T[np.diag_indices(DIM)] = t[:DIM]
    off = t[DIM:].reshape(-1, 2)
    T[_TRIL] = off[:, 0] + 1j * off[:, 1]
    return T


def pack_grad(z: np.ndarray) -> np.ndarray:
    off = z[_TRIL]
    out = np.empty(DIM * DIM)
    out[:DIM] = z.diagonal().real
    out[DIM::2] = off.real
    out[DIM + 1::2] = off.imag
    return out


def objective_and_gradient(t, x, qflat, counts, total, lam):
    """Penalized least-squares objective and its gradient in ``t``.

    ``x`` holds the amplitudes ``<psi_b|A_m|phi_a>`` per setting and
    ``qflat`` the trace-preservation constraint rows over ``vec(chi)``.
    """
    T = unpack_t(t)
    w = x.conj() @ T.T
    p = np.einsum("sj,sj->s", w.real, w.real) + np.einsum("sj,sj->s", w.imag, w.imag)
    r = counts - total * p
    chi = T.conj().T @ T
    g = qflat @ chi.reshape(-1)
    g[0] -= 1.0
    f = r @ r / total + lam * np.real(np.vdot(g, g))
    z = -4.0 * (w * r[:, None]).T @ x
    h = (2.0 * lam) * (g.conj() @ qflat).reshape(DIM, DIM)
    z += T @ (h.T + h.conj())
    return f, pack_grad(z)


_FLIP = np.array([-1.0, 1.0, 1.0, -1.0])


def _batched_concurrence(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    root = v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    # Y(x)Y conj(rho) Y(x)Y is a sign pattern on the index-reversed conjugate
    flipped = _FLIP[:, None] * _FLIP[None, :] * rho[:, ::-1, ::-1].conj()
    m = np.conj(np.swapaxes(root, 1, 2)) @ flipped @ root
    lam = np.linalg.eigvalsh((m + np.conj(np.swapaxes(m, 1, 2))) / 2)
    lam = np.sqrt(np.clip(lam, 0.0, None))
    return np.maximum(0.0, lam[:, 3] - lam[:, 2] - lam[:, 1] - lam[:, 0])


def sweep_rows(superop, unitary, kets, threads=1):
    """Scatter-table rows for pure inputs ``kets`` of shape ``(n, 4)``.

    Columns: input tangle, output tangle, tangle change, fidelity to the
    ideal output and normalized linear entropy of the output.
    """
    del threads  # numpy releases the GIL internally; no explicit pool
    kets = np.ascontiguousarray(kets, dtype=np.complex128)
    n = kets.shape[0]
    rho_in = (kets[:, :, None] * kets.conj()[:, None, :]).reshape(n, 16)
    out = (rho_in @ np.asarray(superop).T).reshape(n, 4, 4)
    out = (out + np.conj(np.swapaxes(out, 1, 2))) / 2
    ideal = kets @ np.asarray(unitary).T
    fid = np.real(np.einsum("ni,nij,nj->n", ideal.conj(), out, ideal))
    pur = np.einsum("nij,nij->n", out.real, out.real) + np.einsum("nij,nij->n", out.imag, out.imag)
    tin = np.abs(2 * (kets[:, 0] * kets[:, 3] - kets[:, 1] * kets[:, 2])) ** 2
    tout = _batched_concurrence(out) ** 2
    rows = np.empty((n, 5))
    rows[:, 0] = np.minimum(tin, 1.0)
    rows[:, 1] = np.minimum(tout, 1.0)
    rows[:, 2] = rows[:, 1] - rows[:, 0]
    rows[:, 3] = np.clip(fid, 0.0, 1.0)
    rows[:, 4] = np.clip(4.0 / 3.0 * (1.0 - pur), 0.0, 1.0)
    return rows
