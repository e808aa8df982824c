"""Hierarchical-equations-of-motion generators and block analysis.

Auxiliary density operators (ADOs) are indexed by unordered multi-indices
over the correlation exponents, enumerated level-major and lexicographically
within a level.  Rotating-wave models at zero temperature carry, for each
emission exponent, a conjugate absorption-side index with vanishing direct
weight; it couples downward through the conjugated emission weight and is
required for Hermiticity-preserving population dynamics.

Downward couplings sum over the distinct exponents present in a multi-index
(no occupation-count factor).  Repeated-index ADOs stay dynamically decoupled
from the physical sectors of the models treated here, so this convention
reproduces the exact reduced dynamics and keeps the block matrices in
their simplest form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import linalg
from .environment import CorrelationSpec
from .errors import BlockMixingError, ParameterError

__all__ = [
    "HeomExponent",
    "HeomModel",
    "AdoIndex",
    "HeomLiouvillian",
    "HeomBlocks",
    "enumerate_ados",
    "build_heom_rwa",
    "build_heom_general",
    "project_system",
    "block_decompose",
]

DIMENSION_CAP = 4096

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


@dataclass(frozen=True)
class HeomExponent:
    """One hierarchy index: an exponential component of the correlation.

    ``weight`` is the direct coefficient entering the downward coupling;
    ``conj_weight`` is the conjugate-side coefficient used by rotating-wave
    indices (zero for the general real/imaginary decomposition).
    """

    label: str
    decay: complex
    weight: complex
    sector: str  # "emission" | "absorption" | "real" | "imag"
    conj_weight: complex = 0.0


@dataclass(frozen=True)
class HeomModel:
    h_sys: np.ndarray
    q_op: np.ndarray
    exponents: tuple[HeomExponent, ...]
    rwa: bool
    tier: int = 2

    def __post_init__(self):
        object.__setattr__(self, "h_sys", np.asarray(self.h_sys, dtype=complex))
        object.__setattr__(self, "q_op", np.asarray(self.q_op, dtype=complex))
        if self.h_sys.shape[0] != self.h_sys.shape[1]:
            raise ParameterError("system Hamiltonian must be square")
        if self.q_op.shape != self.h_sys.shape:
            raise ParameterError("coupling operator must match the system dimension")
        if self.tier < 0:
            raise ParameterError("tier cutoff must be nonnegative")

    @property
    def system_dim(self) -> int:
        return self.h_sys.shape[0]

    @classmethod
    def rwa_zero_temperature(
        cls,
        spec: CorrelationSpec,
        h_sys=None,
        q_op=None,
        tier: int = 2,
        include_conjugate_side: bool = True,
    ) -> "HeomModel":
        """Rotating-wave hierarchy for a zero-temperature exponential bath.

        Every correlation term becomes an emission index; with
        ``include_conjugate_side`` each also gets an absorption-side mirror
        carrying zero direct weight and the conjugated decay.  Absorption
        indices are listed first.
        """
        if h_sys is None:
            h_sys = np.zeros((2, 2), dtype=complex)
        if q_op is None:
            q_op = SIGMA_MINUS
        absorption = []
        emission = []
        for i, term in enumerate(spec.terms, start=1):
            chi = 0.5 * term.decay + 1j * term.frequency
            emission.append(
                HeomExponent(
                    label=f"-{i}", decay=chi, weight=complex(term.weight),
                    sector="emission", conj_weight=0.0,
                )
            )
            if include_conjugate_side:
                absorption.append(
                    HeomExponent(
                        label=f"+{i}", decay=np.conj(chi), weight=0.0,
                        sector="absorption", conj_weight=np.conj(complex(term.weight)),
                    )
                )
        return cls(h_sys, q_op, tuple(absorption + emission), rwa=True, tier=tier)

    @classmethod
    def general(
        cls,
        h_sys,
        q_op,
        real_exponents=(),
        imag_exponents=(),
        tier: int = 2,
    ) -> "HeomModel":
        """Non-rotating-wave hierarchy from real/imaginary exponent sets.

        ``real_exponents`` and ``imag_exponents`` are iterables of
        (weight, decay) pairs for the real and imaginary correlation parts.
        """
        exps = [
            HeomExponent(label=f"R{i}", decay=complex(chi), weight=complex(xi), sector="real")
            for i, (xi, chi) in enumerate(real_exponents, start=1)
        ]
        exps += [
            HeomExponent(label=f"I{i}", decay=complex(chi), weight=complex(xi), sector="imag")
            for i, (xi, chi) in enumerate(imag_exponents, start=1)
        ]
        return cls(h_sys, q_op, tuple(exps), rwa=False, tier=tier)


@dataclass(frozen=True)
class AdoIndex:
    """Multi-index naming the exponents attached to one ADO (1-based)."""

    entries: tuple[int, ...]

    @property
    def level(self) -> int:
        return len(self.entries)

    def label(self, model: HeomModel) -> str:
        if not self.entries:
            return "[]"
        return "[" + ",".join(model.exponents[e - 1].label for e in self.entries) + "]"


def enumerate_ados(model: HeomModel) -> list[AdoIndex]:
    """All multi-indices up to the tier cutoff, level-major then lexicographic."""
    n = len(model.exponents)
    out = []
    for level in range(model.tier + 1):
        for combo in combinations_with_replacement(range(1, n + 1), level):
            out.append(AdoIndex(entries=combo))
    return out


@dataclass
class HeomLiouvillian:
    """Dense hierarchy generator with its ADO bookkeeping."""

    matrix: np.ndarray
    ado_indices: list[AdoIndex]
    model: HeomModel
    block_offsets: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def system_dim(self) -> int:
        return self.model.system_dim

    def ado_manifest(self) -> str:
        """One line per ADO: position, level, exponent labels."""
        lines = []
        for pos, ado in enumerate(self.ado_indices):
            lines.append(f"{pos} level={ado.level} {ado.label(self.model)}")
        return "\n".join(lines) + "\n"


def _left_right(op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(op.shape[0])
    return np.kron(op, eye), np.kron(eye, op.T)


def _rwa_superops(model: HeomModel) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-exponent up (A) and down (B) superoperator blocks."""
    q = model.q_op
    ups, downs = [], []
    for exp in model.exponents:
        if exp.sector == "emission":
            op_self, op_bar = q, q.conj().T
        elif exp.sector == "absorption":
            op_self, op_bar = q.conj().T, q
        else:
            raise ParameterError(f"exponent {exp.label!r} is not a rotating-wave sector")
        bar_l, bar_r = _left_right(op_bar)
        self_l, self_r = _left_right(op_self)
        ups.append(bar_l - bar_r)
        downs.append(exp.weight * self_l - exp.conj_weight * self_r)
    return ups, downs


def _general_superops(model: HeomModel) -> tuple[list[np.ndarray], list[np.ndarray]]:
    q_l, q_r = _left_right(model.q_op)
    commutator = q_l - q_r
    anticommutator = q_l + q_r
    ups, downs = [], []
    for exp in model.exponents:
        ups.append(commutator)
        if exp.sector == "real":
            downs.append(exp.weight * commutator)
        elif exp.sector == "imag":
            downs.append(1j * exp.weight * anticommutator)
        else:
            raise ParameterError(f"exponent {exp.label!r} is not a real/imag sector")
    return ups, downs


def _assemble(model: HeomModel, ups, downs) -> HeomLiouvillian:
    d = model.system_dim
    d2 = d * d
    ados = enumerate_ados(model)
    position = {ado.entries: i for i, ado in enumerate(ados)}
    size = len(ados) * d2
    if size > DIMENSION_CAP:
        raise ParameterError(
            f"hierarchy dimension {size} exceeds cap {DIMENSION_CAP}; lower the tier"
        )
    l0 = linalg.liouvillian_from_parts(model.h_sys)
    matrix = np.zeros((size, size), dtype=complex)
    offsets = []
    for row, ado in enumerate(ados):
        r0 = row * d2
        offsets.append(r0)
        damping = sum(model.exponents[e - 1].decay for e in ado.entries)
        matrix[r0 : r0 + d2, r0 : r0 + d2] = l0 - damping * np.eye(d2)
        if ado.level < model.tier:
            for p in range(1, len(model.exponents) + 1):
                target = tuple(sorted(ado.entries + (p,)))
                c0 = position[target] * d2
                matrix[r0 : r0 + d2, c0 : c0 + d2] += -1j * ups[p - 1]
        # Downward coupling: one term per distinct exponent in the multi-index.
        for p in sorted(set(ado.entries)):
            reduced = list(ado.entries)
            reduced.remove(p)
            c0 = position[tuple(reduced)] * d2
            matrix[r0 : r0 + d2, c0 : c0 + d2] += -1j * downs[p - 1]
    return HeomLiouvillian(matrix=matrix, ado_indices=ados, model=model, block_offsets=offsets)


def build_heom_rwa(model: HeomModel) -> HeomLiouvillian:
    """Rotating-wave hierarchy generator."""
    if not model.rwa:
        raise ParameterError("model was not built for the rotating-wave hierarchy")
    if not model.exponents:
        warnings.warn("empty exponent set: the hierarchy decouples from the bath", stacklevel=2)
        return _assemble(model, [], [])
    ups, downs = _rwa_superops(model)
    return _assemble(model, ups, downs)


def build_heom_general(model: HeomModel) -> HeomLiouvillian:
    """Non-rotating-wave hierarchy generator from real/imag exponent sets."""
    if model.rwa:
        raise ParameterError("model was built for the rotating-wave hierarchy")
    if not model.exponents:
        warnings.warn("empty exponent set: the hierarchy decouples from the bath", stacklevel=2)
        return _assemble(model, [], [])
    ups, downs = _general_superops(model)
    return _assemble(model, ups, downs)


def project_system(state, heom: HeomLiouvillian) -> np.ndarray:
    """Discard all ADOs: unvec the level-0 block of an extended state."""
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.size != heom.dim:
        raise ValueError(f"state length {state.size} != generator dimension {heom.dim}")
    d = heom.system_dim
    return linalg.unvec(state[: d * d], d)


def initial_state(heom: HeomLiouvillian, rho0) -> np.ndarray:
    """Extended initial condition: vec(rho0) at level 0, all ADOs zero."""
    rho0 = np.asarray(rho0, dtype=complex)
    d = heom.system_dim
    if rho0.shape != (d, d):
        raise ValueError(f"initial state must be {d}x{d}")
    state = np.zeros(heom.dim, dtype=complex)
    state[: d * d] = linalg.vec(rho0)
    return state


@dataclass
class HeomBlocks:
    """Sector decomposition of a qubit hierarchy generator."""

    population: np.ndarray
    coherence: np.ndarray
    coherence_conj: np.ndarray
    population_indices: list[int]
    coherence_indices: list[int]
    coherence_conj_indices: list[int]
    extra_blocks: list[np.ndarray] = field(default_factory=list)


def _connected_components(adj: np.ndarray) -> list[list[int]]:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        comps.append(sorted(comp))
    return comps


def block_decompose(heom: HeomLiouvillian, zero_tol: float = 1e-12) -> HeomBlocks:
    """Split a qubit hierarchy into population / coherence / conjugate blocks.

    Sectors are identified structurally from the coupling graph of the
    generator (reachability of basis elements), not from assumed index
    positions.  The population block is the component containing the system
    populations, the coherence block contains <e|rho|g>, and its conjugate
    contains <g|rho|e>.  Components that touch none of the system elements
    are returned in ``extra_blocks``; they never influence the reduced
    dynamics.  Raises :class:`BlockMixingError` if populations and coherences
    end up coupled.
    """
    if heom.system_dim != 2:
        raise ParameterError("block decomposition is defined for qubit hierarchies")
    m = heom.matrix
    scale = max(float(np.abs(m).max()), 1.0)
    adj = np.abs(m) > zero_tol * scale
    adj |= adj.T
    comps = _connected_components(adj)

    def component_of(member: int) -> list[int]:
        for comp in comps:
            if member in comp:
                return comp
        raise AssertionError("component bookkeeping failed")

    # Level-0 system components sit at the head of the basis: gg, ge, eg, ee.
    pop = component_of(0)
    if component_of(3) != pop:
        raise BlockMixingError("the two system populations fall in different sectors")
    coh = component_of(2)   # |e><g|
    coh_c = component_of(1)  # |g><e|
    if set(pop) & set(coh) or set(pop) & set(coh_c):
        raise BlockMixingError("population and coherence sectors are coupled")
    named = {tuple(pop), tuple(coh), tuple(coh_c)}
    extras = [m[np.ix_(c, c)] for c in comps if tuple(c) not in named]
    return HeomBlocks(
        population=m[np.ix_(pop, pop)],
        coherence=m[np.ix_(coh, coh)],
        coherence_conj=m[np.ix_(coh_c, coh_c)],
        population_indices=pop,
        coherence_indices=coh,
        coherence_conj_indices=coh_c,
        extra_blocks=extras,
    )
