"""Pseudomode extended Hamiltonians, Liouvillians and effective NHHs.

Each exponent term of the bath correlation becomes one damped bosonic mode
with coupling sqrt(weight) (principal branch, imaginary for negative weights)
and damping equal to the term's decay rate.  For rotating-wave models at zero
temperature the dynamics closes in the single-excitation sector, where the
generator reduces to a small dense matrix suitable for exact Jordan analysis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .environment import CorrelationSpec
from .errors import ParameterError, UnsupportedConfigurationError

__all__ = [
    "PseudomodeModel",
    "ExtendedLiouvillian",
    "ReducedEigenmatrix",
    "BosonicNetwork",
    "spin_boson_model",
    "build_pm_hamiltonian",
    "build_pm_liouvillian",
    "restrict_single_excitation",
    "reduced_eigenmatrices",
    "effective_nhh",
    "two_mode_network",
    "evolve_amplitudes",
]

#: Hard cap on the extended Hilbert-space dimension of full-space builds.
DIMENSION_CAP = 4096

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|, basis (g, e)
SIGMA_PLUS = SIGMA_MINUS.conj().T


@dataclass(frozen=True)
class PseudomodeModel:
    """System plus one pseudomode per correlation exponent.

    ``coupling_op`` is the bare system operator Q (or its rotating-wave
    lowering form when ``rwa`` is set, in which case the coupling enters as
    α (Q a† + Q† a)).  ``n_max`` is the per-mode Fock truncation; the default
    of one boson is exact for rotating-wave zero-temperature models started
    in the single-excitation sector.
    """

    h_sys: np.ndarray
    coupling_op: np.ndarray
    spec: CorrelationSpec
    rwa: bool = True
    n_max: int = 1

    def __post_init__(self):
        object.__setattr__(self, "h_sys", np.asarray(self.h_sys, dtype=complex))
        object.__setattr__(self, "coupling_op", np.asarray(self.coupling_op, dtype=complex))
        if self.h_sys.shape[0] != self.h_sys.shape[1]:
            raise ParameterError("system Hamiltonian must be square")
        if self.coupling_op.shape != self.h_sys.shape:
            raise ParameterError("coupling operator must match the system dimension")
        if self.n_max < 1:
            raise ParameterError("n_max must be at least 1")
        if not self.rwa:
            warnings.warn(
                f"non-rotating-wave pseudomode dynamics at Fock truncation "
                f"n_max={self.n_max} has no validated reference results",
                stacklevel=3,
            )

    @property
    def system_dim(self) -> int:
        return self.h_sys.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.spec.terms)

    @property
    def mode_couplings(self) -> np.ndarray:
        """Principal square roots of the exponent weights."""
        return np.array([np.sqrt(complex(t.weight)) for t in self.spec.terms])

    @property
    def mode_dampings(self) -> np.ndarray:
        return np.array([t.decay for t in self.spec.terms])

    @property
    def mode_frequencies(self) -> np.ndarray:
        return np.array([t.frequency for t in self.spec.terms])

    @property
    def dims(self) -> list[int]:
        return [self.system_dim] + [self.n_max + 1] * self.n_modes


def spin_boson_model(spec: CorrelationSpec, n_max: int = 1) -> PseudomodeModel:
    """Qubit with lowering-operator coupling in the interaction picture."""
    return PseudomodeModel(
        h_sys=np.zeros((2, 2), dtype=complex),
        coupling_op=SIGMA_MINUS,
        spec=spec,
        rwa=True,
        n_max=n_max,
    )


@dataclass
class ExtendedLiouvillian:
    """Dense generator with a labeled tensor-product basis."""

    matrix: np.ndarray
    basis_labels: list[str]
    subsystem_dims: list[int]
    provenance: str  # "pmeom" | "heom"
    ket_labels: list[str] = field(default_factory=list)
    #: For restricted sectors: the full-space ket index of each sector ket.
    ket_indices: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _mode_annihilator(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


def _embed(op: np.ndarray, dims: list[int], site: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, op if k == site else np.eye(d))
    return out


def _mode_ops(model: PseudomodeModel) -> list[np.ndarray]:
    dims = model.dims
    a = _mode_annihilator(model.n_max + 1)
    return [_embed(a, dims, 1 + i) for i in range(model.n_modes)]


def build_pm_hamiltonian(model: PseudomodeModel) -> np.ndarray:
    """Extended Hamiltonian on system ⊗ modes.

    Non-Hermitian whenever some exponent weight is negative, since the
    corresponding coupling is purely imaginary.
    """
    dims = model.dims
    total = int(np.prod(dims))
    if total > DIMENSION_CAP:
        raise ParameterError(f"extended dimension {total} exceeds cap {DIMENSION_CAP}")
    h = _embed(model.h_sys, dims, 0)
    q = _embed(model.coupling_op, dims, 0)
    mode_ops = _mode_ops(model)
    for alpha, omega, a in zip(model.mode_couplings, model.mode_frequencies, mode_ops):
        h = h + omega * (a.conj().T @ a)
        if model.rwa:
            h = h + alpha * (q @ a.conj().T + q.conj().T @ a)
        else:
            h = h + alpha * (q @ (a.conj().T + a))
    return h


def _ket_labels(model: PseudomodeModel) -> list[str]:
    sys_names = ["g", "e"] if model.system_dim == 2 else [str(i) for i in range(model.system_dim)]
    labels = []
    for idx in range(int(np.prod(model.dims))):
        rem = idx
        parts = []
        for d in reversed(model.dims):
            parts.append(rem % d)
            rem //= d
        parts.reverse()
        name = sys_names[parts[0]]
        labels.append("|" + ",".join([name] + [str(p) for p in parts[1:]]) + ">")
    return labels


def _outer_labels(kets: list[str]) -> list[str]:
    return [k + "<" + b[1:-1] + "|" for k in kets for b in kets]


def build_pm_liouvillian(model: PseudomodeModel) -> ExtendedLiouvillian:
    """Full-space extended Liouvillian with one dissipator per pseudomode."""
    h = build_pm_hamiltonian(model)
    mode_ops = _mode_ops(model)
    jumps = [(a, g) for a, g in zip(mode_ops, model.mode_dampings)]
    matrix = linalg.liouvillian_from_parts(h, jumps)
    kets = _ket_labels(model)
    return ExtendedLiouvillian(
        matrix=matrix,
        basis_labels=_outer_labels(kets),
        subsystem_dims=model.dims,
        provenance="pmeom",
        ket_labels=kets,
        ket_indices=list(range(len(kets))),
    )


def _single_excitation_kets(model: PseudomodeModel) -> list[int]:
    """Full-space indices of {|g,0..0>, |e,0..0>, |g, one boson in mode i>}."""
    dims = model.dims
    n = model.n_modes

    def index(sys_idx: int, occupied: int | None) -> int:
        idx = sys_idx
        for i in range(n):
            idx = idx * dims[1 + i] + (1 if occupied == i else 0)
        return idx

    kets = [index(0, None), index(1, None)]
    kets.extend(index(0, i) for i in range(n))
    return kets


def restrict_single_excitation(model: PseudomodeModel) -> ExtendedLiouvillian:
    """Single-excitation-sector generator for rotating-wave qubit models.

    The sector is spanned by outer products of the kets
    {|g,0...>, |e,0...>, |g, 1 at mode i>} in that order, giving a
    (2 + N)^2-dimensional superoperator for N pseudomodes.
    """
    if not model.rwa:
        raise UnsupportedConfigurationError(
            "the single-excitation restriction requires a rotating-wave model"
        )
    if model.system_dim != 2:
        raise UnsupportedConfigurationError("the single-excitation restriction expects a qubit")
    full = build_pm_liouvillian(model)
    kets = _single_excitation_kets(model)
    d = int(np.prod(model.dims))
    vec_idx = [i * d + j for i in kets for j in kets]
    sub = full.matrix[np.ix_(vec_idx, vec_idx)]
    ket_names = [full.ket_labels[i] for i in kets]
    return ExtendedLiouvillian(
        matrix=sub,
        basis_labels=_outer_labels(ket_names),
        subsystem_dims=model.dims,
        provenance="pmeom",
        ket_labels=ket_names,
        ket_indices=kets,
    )


@dataclass
class ReducedEigenmatrix:
    """System-space projection of one (generalized) eigenmatrix."""

    eigenvalue: complex
    chain_index: int  # 0 = eigenmatrix proper, >= 1 generalized
    chain_id: int
    matrix: np.ndarray


def _sector_ket_configs(model: PseudomodeModel) -> list[tuple[int, tuple[int, ...]]]:
    """(system index, mode occupations) for each single-excitation ket."""
    n = model.n_modes
    configs = [(0, tuple([0] * n)), (1, tuple([0] * n))]
    for i in range(n):
        occ = [0] * n
        occ[i] = 1
        configs.append((0, tuple(occ)))
    return configs


def _reduce_sector_matrix(model: PseudomodeModel, m: np.ndarray) -> np.ndarray:
    """Partial trace over the pseudomodes of a single-excitation-sector matrix."""
    configs = _sector_ket_configs(model)
    d = model.system_dim
    out = np.zeros((d, d), dtype=complex)
    for a, (sa, occ_a) in enumerate(configs):
        for b, (sb, occ_b) in enumerate(configs):
            if occ_a == occ_b:
                out[sa, sb] += m[a, b]
    return out


def sector_initial_vector(model: PseudomodeModel, rho0) -> np.ndarray:
    """Coefficients of rho0 ⊗ vacuum on the single-excitation sector basis."""
    rho0 = np.asarray(rho0, dtype=complex)
    configs = _sector_ket_configs(model)
    n = len(configs)
    vacuum = tuple([0] * model.n_modes)
    out = np.zeros(n * n, dtype=complex)
    for a, (sa, occ_a) in enumerate(configs):
        for b, (sb, occ_b) in enumerate(configs):
            if occ_a == vacuum and occ_b == vacuum:
                out[a * n + b] = rho0[sa, sb]
    return out


def sector_reduce(model: PseudomodeModel, state: np.ndarray) -> np.ndarray:
    """Reduced system matrix from a vectorized single-excitation-sector state."""
    n = len(_sector_ket_configs(model))
    return _reduce_sector_matrix(model, np.asarray(state, dtype=complex).reshape(n, n))


def reduced_eigenmatrices(
    ext: ExtendedLiouvillian,
    model: PseudomodeModel,
    tol_rank: float = linalg.TOL_RANK,
    tol_cluster: float = linalg.TOL_CLUSTER,
) -> list[ReducedEigenmatrix]:
    """Partial-traced (generalized) eigenmatrices of a restricted generator.

    Jordan chains are computed per eigenvalue cluster; every chain vector is
    unvec'd on the sector basis and traced over the pseudomodes.  Chain index
    0 labels a true eigenmatrix, larger indices are generalized ones.
    """
    matrix = ext.matrix
    side = int(round(np.sqrt(matrix.shape[0])))
    if side * side != matrix.shape[0]:
        raise ValueError("generator dimension is not a perfect square")
    vals = linalg.eigendecompose(matrix).eigenvalues
    clusters = linalg.cluster_eigenvalues(vals, tol_cluster)
    out: list[ReducedEigenmatrix] = []
    chain_id = 0
    for idx in clusters:
        chain_set = linalg.jordan_chains(
            matrix, complex(vals[idx].mean()), tol_rank, tol_cluster
        )
        for chain in chain_set.chains:
            for j, vec_j in enumerate(chain):
                sector_matrix = linalg.unvec(vec_j, side)
                out.append(
                    ReducedEigenmatrix(
                        eigenvalue=chain_set.eigenvalue,
                        chain_index=j,
                        chain_id=chain_id,
                        matrix=_reduce_sector_matrix(model, sector_matrix),
                    )
                )
            chain_id += 1
    return out


@dataclass(frozen=True)
class BosonicNetwork:
    """Linear network of coherently coupled modes with one lossy port.

    ``couplings`` is a symmetric matrix of coherent hopping amplitudes; the
    mode with index ``env_mode`` (default: the last one) couples to the
    environment described by ``spec``.  ``markov_rate`` replaces the
    pseudomode expansion with a flat decay of the port mode, which is the
    infinite-bandwidth limit.
    """

    frequencies: tuple[float, ...]
    couplings: np.ndarray
    spec: CorrelationSpec | None = None
    markov_rate: float | None = None
    env_mode: int = -1

    def __post_init__(self):
        freq = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freq)
        c = np.asarray(self.couplings, dtype=complex)
        m = len(freq)
        if c.shape != (m, m):
            raise ParameterError(f"coupling matrix must be {m}x{m}, got {c.shape}")
        if not np.allclose(c, c.T, atol=1e-14):
            raise ParameterError("coupling matrix must be symmetric")
        object.__setattr__(self, "couplings", c)
        env = self.env_mode if self.env_mode >= 0 else m + self.env_mode
        if not 0 <= env < m:
            raise ParameterError(f"environment-coupled mode index {self.env_mode} out of range")
        object.__setattr__(self, "env_mode", env)
        if self.spec is None and self.markov_rate is None:
            raise ParameterError("either a correlation spec or a Markovian rate is required")

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)


def two_mode_network(
    chi: float,
    spec: CorrelationSpec | None = None,
    markov_rate: float | None = None,
) -> BosonicNetwork:
    """Two resonant modes with hopping chi; the second mode is the lossy port."""
    couplings = np.array([[0.0, chi], [chi, 0.0]])
    return BosonicNetwork((0.0, 0.0), couplings, spec=spec, markov_rate=markov_rate)


def effective_nhh(network: BosonicNetwork) -> np.ndarray:
    """Matrix generating the amplitude dynamics <v'(t)> = i H <v(t)>.

    System modes occupy the leading block (frequencies on the diagonal,
    hopping off-diagonal); each pseudomode adds a row/column with coupling
    sqrt(weight) to the port mode and i γ/2 on its diagonal.  In the
    Markovian limit the port mode itself acquires i Γ.
    """
    m = network.n_modes
    n_pm = 0 if network.spec is None else len(network.spec.terms)
    size = m + n_pm
    h = np.zeros((size, size), dtype=complex)
    h[:m, :m] = network.couplings
    h[np.arange(m), np.arange(m)] = np.asarray(network.frequencies, dtype=complex)
    if network.markov_rate is not None:
        h[network.env_mode, network.env_mode] += 1j * network.markov_rate
    if network.spec is not None:
        for i, term in enumerate(network.spec.terms):
            k = m + i
            alpha = np.sqrt(complex(term.weight))
            h[network.env_mode, k] = alpha
            h[k, network.env_mode] = alpha
            h[k, k] = term.frequency + 0.5j * term.decay
    return h


def evolve_amplitudes(h_eff, v0, times, **kwargs) -> np.ndarray:
    """Amplitude trajectories v(t) = exp(i H_eff t) v0."""
    h_eff = np.asarray(h_eff, dtype=complex)
    return linalg.propagate(1j * h_eff, v0, times, **kwargs)
