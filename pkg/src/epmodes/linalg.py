"""Dense complex linear algebra for superoperator spectral analysis.

Vectorization follows the row-stacking convention vec(A) = sum_ij A_ij |i>|j>,
so left/right multiplication vectorize as vec(A X B) = (A kron B^T) vec(X).
All routines work on plain ``numpy`` arrays; matrices here are small (dim of
order 100), so dense LAPACK factorizations are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AmbiguousClusterError, NumericalError, StiffnessError

__all__ = [
    "kron",
    "vec",
    "unvec",
    "liouvillian_from_parts",
    "eigendecompose",
    "cluster_eigenvalues",
    "jordan_structure",
    "jordan_chains",
    "propagate",
    "propagate_jordan",
    "partial_trace",
    "save_matrix_text",
    "load_matrix_text",
    "SpectrumResult",
    "JordanReport",
    "JordanChainSet",
    "EIG_DIMENSION_CAP",
]

#: Largest matrix dimension accepted by :func:`eigendecompose`.
EIG_DIMENSION_CAP = 4096

#: Relative eigenpair residual bound enforced by :func:`eigendecompose`.
TOL_EIG = 1e-10

#: Default relative eigenvalue clustering tolerance.
TOL_CLUSTER = 1e-6

#: Default singular-value threshold (fraction of the largest singular value)
#: used for numerical rank decisions in Jordan analysis.
TOL_RANK = 1e-8

#: Eigenvector-matrix condition number below which spectral propagation is
#: trusted over ODE integration.
SPECTRAL_COND_CAP = 1e8


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product of two complex matrices."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def vec(a) -> np.ndarray:
    """Row-stacking vectorization, vec(A)[i*cols + j] = A[i, j]."""
    return _as_matrix(a).reshape(-1)


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`; ``cols`` defaults to ``rows``."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    cols = rows if cols is None else cols
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape(rows, cols)


def liouvillian_from_parts(h, jumps=()) -> np.ndarray:
    """Matrix representation of a Lindblad-form generator.

    Parameters
    ----------
    h : array_like
        Hamiltonian part; may be non-Hermitian.
    jumps : iterable of (operator, rate)
        Jump operators with their damping rates.

    Returns
    -------
    numpy.ndarray
        ``-i(H ⊗ 1 - 1 ⊗ H^T) + Σ (γ/2)(2 L⊗L* - L†L⊗1 - 1⊗L^T L*)`` acting on
        row-stacked vectorized operators.
    """
    h = _as_matrix(h)
    n = h.shape[0]
    if h.shape[1] != n:
        raise ValueError("Hamiltonian must be square")
    eye = np.eye(n)
    liouv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in jumps:
        op = _as_matrix(op)
        if op.shape != (n, n):
            raise ValueError(f"jump operator shape {op.shape} != Hamiltonian shape {(n, n)}")
        anti = op.conj().T @ op
        liouv += 0.5 * rate * (
            2.0 * np.kron(op, op.conj())
            - np.kron(anti, eye)
            - np.kron(eye, anti.T)
        )
    return liouv


@dataclass
class SpectrumResult:
    """Full eigendecomposition sorted by (Re λ, Im λ) ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # unit-norm columns, same order as eigenvalues
    residuals: np.ndarray     # per-pair ||M v - λ v||


def eigendecompose(m, tol_eig: float = TOL_EIG) -> SpectrumResult:
    """Eigenvalues and unit-norm right eigenvectors of a dense matrix.

    Uses the LAPACK nonsymmetric solver (Hessenberg reduction plus shifted QR).
    Raises :class:`NumericalError` if the solver fails or any eigenpair
    residual exceeds ``tol_eig * ||M||``.
    """
    m = _as_matrix(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("matrix must be square")
    if n > EIG_DIMENSION_CAP:
        raise ValueError(f"dimension {n} exceeds cap {EIG_DIMENSION_CAP}")
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare LAPACK failure
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    residuals = np.linalg.norm(m @ vecs - vecs * vals, axis=0)
    scale = max(np.linalg.norm(m, 2), 1e-300)
    if np.any(residuals > tol_eig * scale):
        worst = float(residuals.max() / scale)
        raise NumericalError(f"eigenpair residual {worst:.2e} exceeds {tol_eig:.1e} (relative)")
    return SpectrumResult(vals, vecs, residuals)


def cluster_eigenvalues(eigenvalues, tol_cluster: float = TOL_CLUSTER) -> list[np.ndarray]:
    """Group eigenvalues into clusters of pairwise distance < tol_cluster * s.

    The scale is s = max(1, spectral radius).  Returns index arrays, one per
    cluster, ordered by the real part of the cluster mean.
    """
    vals = np.asarray(eigenvalues, dtype=complex)
    s = max(1.0, float(np.abs(vals).max(initial=0.0)))
    thresh = tol_cluster * s
    n = vals.size
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) < thresh:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = [np.array(sorted(g)) for g in groups.values()]
    clusters.sort(key=lambda idx: (vals[idx].mean().real, vals[idx].mean().imag))
    return clusters


@dataclass
class JordanReport:
    """Jordan structure of one eigenvalue cluster.

    ``chain_lengths`` is sorted descending; its maximum is the order of the
    degeneracy (the EP order when it exceeds 1).
    """

    eigenvalue: complex
    algebraic_multiplicity: int
    geometric_multiplicity: int
    chain_lengths: tuple[int, ...]
    rank_tolerance: float = TOL_RANK

    @property
    def order(self) -> int:
        return max(self.chain_lengths)

    @property
    def is_defective(self) -> bool:
        return self.order > 1


def _numerical_rank(m: np.ndarray, tol: float, scale: float | None = None) -> int:
    """Rank with singular values below tol * scale treated as zero.

    ``scale`` guards powers of nilpotent matrices, whose own largest singular
    value can be pure noise; it defaults to the largest singular value.
    """
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0:
        return 0
    cutoff = tol * max(sv[0], scale if scale is not None else 0.0)
    if cutoff == 0.0:
        return 0
    return int(np.count_nonzero(sv > cutoff))


def _cluster_members(vals: np.ndarray, lam: complex, tol_cluster: float) -> np.ndarray:
    s = max(1.0, float(np.abs(vals).max(initial=0.0)))
    return np.flatnonzero(np.abs(vals - lam) < tol_cluster * s)


def jordan_structure(
    m,
    lam: complex,
    tol: float = TOL_RANK,
    tol_cluster: float = TOL_CLUSTER,
) -> JordanReport:
    """Chain lengths of the eigenvalue cluster represented by ``lam``.

    The cluster consists of all eigenvalues within ``tol_cluster * s`` of
    ``lam``.  Chain lengths follow from the rank sequence
    r_k = rank((M - λI)^k): the number of chains of length >= k equals
    r_{k-1} - r_k, and the geometric multiplicity is n - r_1.

    Raises :class:`AmbiguousClusterError` when another eigenvalue lies within
    ten cluster radii of ``lam`` without being a member.
    """
    m = _as_matrix(m)
    n = m.shape[0]
    vals = eigendecompose(m).eigenvalues
    members = _cluster_members(vals, lam, tol_cluster)
    if members.size == 0:
        raise ValueError(f"no eigenvalue of the matrix lies near {lam}")
    radius = float(np.abs(vals[members] - lam).max())
    outside = np.setdiff1d(np.arange(n), members)
    if radius > 0 and outside.size:
        gaps = np.abs(vals[outside] - lam)
        too_close = gaps < 10.0 * radius
        if np.any(too_close):
            raise AmbiguousClusterError(
                "cluster at {0} is ambiguous: excluded eigenvalues at distance {1} "
                "vs cluster radius {2:.3e}".format(
                    lam, np.array2string(gaps[too_close], precision=3), radius
                )
            )
    alg = int(members.size)
    lam_rep = complex(vals[members].mean())

    shifted = m - lam_rep * np.eye(n)
    # Noise floor: a shifted matrix whose norm is negligible relative to the
    # parent matrix is numerically zero, whatever its own largest singular
    # value happens to be.
    floor = np.sqrt(tol) * max(np.linalg.norm(m, 2), 1.0)
    shift_norm = max(np.linalg.norm(shifted, 2), floor)
    ranks = [n]
    power = np.eye(n, dtype=complex)
    for k in range(1, alg + 1):
        power = power @ shifted
        ranks.append(_numerical_rank(power, tol, scale=shift_norm**k))
        if ranks[-1] <= n - alg:
            break
    counts = [ranks[k - 1] - ranks[k] for k in range(1, len(ranks))]  # chains >= k
    chain_lengths: list[int] = []
    for k in range(len(counts), 0, -1):
        longer = counts[k] if k < len(counts) else 0
        chain_lengths.extend([k] * (counts[k - 1] - longer))
    chain_lengths.sort(reverse=True)
    if sum(chain_lengths) != alg:
        raise NumericalError(
            f"inconsistent rank sequence {ranks} for multiplicity {alg}; "
            f"adjust the rank tolerance (currently {tol:.1e})"
        )
    return JordanReport(
        eigenvalue=lam_rep,
        algebraic_multiplicity=alg,
        geometric_multiplicity=counts[0],
        chain_lengths=tuple(chain_lengths),
        rank_tolerance=tol,
    )


@dataclass
class JordanChainSet:
    """Explicit Jordan chains of one cluster.

    ``chains[c][j]`` is the j-th generalized eigenvector of chain c, with
    (M - λI) chains[c][0] ≈ 0 and (M - λI) chains[c][j] ≈ chains[c][j-1].
    """

    eigenvalue: complex
    chains: list[list[np.ndarray]] = field(default_factory=list)

    @property
    def vectors(self) -> np.ndarray:
        cols = [v for chain in self.chains for v in chain]
        return np.column_stack(cols)

    @property
    def chain_lengths(self) -> tuple[int, ...]:
        return tuple(sorted((len(c) for c in self.chains), reverse=True))


def _nullspace(m: np.ndarray, tol: float, scale: float | None = None) -> np.ndarray:
    u, sv, vh = np.linalg.svd(m)
    if sv.size == 0:
        return np.eye(m.shape[1], dtype=complex)
    cutoff = tol * max(sv[0], scale if scale is not None else 0.0)
    rank = int(np.count_nonzero(sv > cutoff)) if cutoff > 0 else 0
    return vh[rank:].conj().T


def jordan_chains(
    m,
    lam: complex,
    tol: float = TOL_RANK,
    tol_cluster: float = TOL_CLUSTER,
) -> JordanChainSet:
    """Generalized eigenvector chains for the cluster represented by ``lam``.

    The matrix is first reduced to the cluster's invariant subspace with an
    ordered complex Schur decomposition; chains are built there from the
    kernels of powers of the shifted block and mapped back.  This keeps the
    construction well conditioned even though the full matrix is defective.
    """
    m = _as_matrix(m)
    vals = eigendecompose(m).eigenvalues
    members = _cluster_members(vals, lam, tol_cluster)
    if members.size == 0:
        raise ValueError(f"no eigenvalue of the matrix lies near {lam}")
    alg = int(members.size)
    lam_rep = complex(vals[members].mean())
    s = max(1.0, float(np.abs(vals).max(initial=0.0)))
    radius = max(float(np.abs(vals[members] - lam_rep).max()), tol_cluster * s)

    t, z, sdim = scipy.linalg.schur(
        m, output="complex", sort=lambda x: abs(x - lam_rep) <= 1.5 * radius
    )
    if sdim != alg:
        raise NumericalError(
            f"Schur reordering selected {sdim} eigenvalues for a cluster of size {alg}"
        )
    t11 = t[:alg, :alg]
    z1 = z[:, :alg]

    nilp = t11 - lam_rep * np.eye(alg)
    floor = np.sqrt(tol) * max(np.linalg.norm(m, 2), 1.0)
    nilp_norm = max(np.linalg.norm(nilp, 2), floor)
    # Kernel filtration of the (numerically) nilpotent restricted block.
    kernels = []
    power = np.eye(alg, dtype=complex)
    for k in range(1, alg + 1):
        power = power @ nilp
        kernels.append(_nullspace(power, tol, scale=nilp_norm**k))
        if kernels[-1].shape[1] == alg:
            break
    kmax = len(kernels)
    kdims = [0] + [k.shape[1] for k in kernels]
    at_least = [kdims[h] - kdims[h - 1] for h in range(1, kmax + 1)]  # chains >= h
    if kdims[-1] != alg or any(np.diff(at_least) > 0):
        raise NumericalError(
            f"inconsistent kernel filtration {kdims[1:]} for multiplicity {alg}; "
            f"adjust the rank tolerance (currently {tol:.1e})"
        )

    chains: list[list[np.ndarray]] = []
    used = np.zeros((alg, 0), dtype=complex)  # consumed directions
    for height in range(kmax, 0, -1):
        n_new = at_least[height - 1] - (at_least[height] if height < kmax else 0)
        if n_new == 0:
            continue
        space = kernels[height - 1]
        lower = kernels[height - 2] if height >= 2 else np.zeros((alg, 0))
        # Chain tops of this height: in ker(N^h), independent of ker(N^{h-1})
        # and of everything already consumed by taller chains.
        blocked = np.column_stack([lower, used]) if (lower.size or used.size) else None
        candidates = space
        if blocked is not None and blocked.size:
            q, _ = np.linalg.qr(blocked)
            candidates = space - q @ (q.conj().T @ space)
        u, sv, _ = np.linalg.svd(candidates, full_matrices=False)
        if sv.size < n_new or sv[n_new - 1] < 1e-8 * max(1.0, sv[0]):
            raise NumericalError(
                f"could not isolate {n_new} chain tops of height {height} "
                f"(candidate singular values {sv})"
            )
        for i in range(n_new):
            top = u[:, i]
            chain = [top]
            for _ in range(height - 1):
                chain.append(nilp @ chain[-1])
            chain.reverse()  # eigenvector first
            chains.append(chain)
            used = np.column_stack([used] + chain)
    chains.sort(key=len, reverse=True)
    full = [[z1 @ v for v in chain] for chain in chains]
    return JordanChainSet(eigenvalue=lam_rep, chains=full)


def propagate(
    liouv,
    v0,
    times,
    method: str = "auto",
    rtol: float = 1e-10,
    atol: float | None = None,
) -> np.ndarray:
    """Evolve v(t) = exp(L t) v0 on the given time grid.

    ``method`` is one of ``"auto"``, ``"ode"`` (adaptive Runge-Kutta) or
    ``"spectral"`` (eigenbasis reconstruction, used automatically when the
    eigenvector matrix condition number is below ``SPECTRAL_COND_CAP``).
    Returns an array of shape (len(times), dim).
    """
    liouv = _as_matrix(liouv)
    v0 = np.asarray(v0, dtype=complex).reshape(-1)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-D array")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")

    if method == "auto":
        method = "spectral" if _spectral_applicable(liouv) else "ode"
    if method == "spectral":
        return _propagate_spectral(liouv, v0, times)
    if method == "ode":
        return _propagate_ode(liouv, v0, times, rtol, atol)
    raise ValueError(f"unknown propagation method {method!r}")


def _spectral_applicable(liouv: np.ndarray) -> bool:
    try:
        _, vecs = np.linalg.eig(liouv)
        return np.linalg.cond(vecs) < SPECTRAL_COND_CAP
    except np.linalg.LinAlgError:
        return False


def _propagate_spectral(liouv: np.ndarray, v0: np.ndarray, times: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(liouv)
    coeff = np.linalg.solve(vecs, v0)
    phases = np.exp(np.outer(times, vals))  # (nt, dim)
    return (phases * coeff) @ vecs.T


def _propagate_ode(
    liouv: np.ndarray,
    v0: np.ndarray,
    times: np.ndarray,
    rtol: float,
    atol: float | None,
) -> np.ndarray:
    from scipy.integrate import solve_ivp

    if atol is None:
        atol = 1e-12 * max(1.0, float(np.linalg.norm(v0)))
    t_eval = times
    prepend_zero = times[0] > 0.0
    if prepend_zero:
        t_eval = np.concatenate([[0.0], times])
    if t_eval.size == 1:  # single time point t=0
        return v0[None, :].copy()
    sol = solve_ivp(
        lambda _t, y: liouv @ y,
        (t_eval[0], t_eval[-1]),
        v0,
        t_eval=t_eval,
        method="RK45",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise StiffnessError(f"ODE propagation failed: {sol.message}")
    out = sol.y.T
    return out[1:] if prepend_zero else out


def propagate_jordan(
    liouv,
    v0,
    times,
    tol: float = TOL_RANK,
    tol_cluster: float = TOL_CLUSTER,
) -> np.ndarray:
    """Evolve through a complete (generalized) eigenbasis.

    Every eigenvalue cluster contributes e^{λt} times a polynomial in t whose
    degree is one less than the chain length, which makes this route exact at
    exceptional points where plain spectral reconstruction breaks down.
    """
    liouv = _as_matrix(liouv)
    v0 = np.asarray(v0, dtype=complex).reshape(-1)
    times = np.asarray(times, dtype=float)
    vals = eigendecompose(liouv).eigenvalues
    clusters = cluster_eigenvalues(vals, tol_cluster)

    columns = []
    blocks = []  # (eigenvalue, chain length) per chain, in column order
    for idx in clusters:
        chain_set = jordan_chains(liouv, complex(vals[idx].mean()), tol, tol_cluster)
        for chain in chain_set.chains:
            blocks.append((chain_set.eigenvalue, len(chain)))
            columns.extend(chain)
    basis = np.column_stack(columns)
    coeff = np.linalg.solve(basis, v0)

    out = np.zeros((times.size, v0.size), dtype=complex)
    col = 0
    for lam, length in blocks:
        c = coeff[col : col + length]
        phase = np.exp(lam * times)
        for j in range(length):
            # exp((λI + N)t) applied to the chain: vector j picks up
            # contributions from generalized vectors j..length-1.
            amp = np.zeros(times.size, dtype=complex)
            for m in range(length - j):
                amp += c[j + m] * times**m / _factorial(m)
            out += np.outer(amp * phase, basis[:, col + j])
        col += length
    return out


def _factorial(n: int) -> float:
    out = 1.0
    for k in range(2, n + 1):
        out *= k
    return out


def partial_trace(rho, dims, keep) -> np.ndarray:
    """Trace out all subsystems not listed in ``keep``.

    ``dims`` lists the subsystem dimensions (product must equal the matrix
    dimension); ``keep`` is an iterable of subsystem indices to retain, in
    their original order.
    """
    rho = _as_matrix(rho)
    dims = list(int(d) for d in dims)
    n = int(np.prod(dims))
    if rho.shape != (n, n):
        raise ValueError(f"matrix shape {rho.shape} incompatible with dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    reshaped = rho.reshape(dims + dims)
    traced = [i for i in range(len(dims)) if i not in keep]
    for offset, axis in enumerate(traced):
        ax = axis - offset  # axes shift as we trace
        reshaped = np.trace(reshaped, axis1=ax, axis2=ax + reshaped.ndim // 2)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return reshaped.reshape(d_keep, d_keep)


def save_matrix_text(m, path_or_file) -> None:
    """Write a matrix as a dims header plus row-major ``re im`` pairs."""
    m = _as_matrix(m)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    for entry in m.reshape(-1):
        lines.append(f"{entry.real:.17g} {entry.imag:.17g}")
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", encoding="ascii") as fh:
            fh.write(text)


def load_matrix_text(path_or_file) -> np.ndarray:
    """Read a matrix written by :func:`save_matrix_text`."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file, "r", encoding="ascii") as fh:
            text = fh.read()
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("matrix text is truncated")
    rows, cols = int(tokens[0]), int(tokens[1])
    values = tokens[2:]
    if len(values) != 2 * rows * cols:
        raise ValueError(
            f"expected {2 * rows * cols} numbers for a {rows}x{cols} matrix, got {len(values)}"
        )
    data = np.array(values, dtype=float)
    return (data[0::2] + 1j * data[1::2]).reshape(rows, cols)
