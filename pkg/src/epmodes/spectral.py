"""Parameter sweeps, EP detection and classification, and scaling analysis."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import BracketError, NumericalError, ParameterError, TrackingError

__all__ = [
    "SweepTable",
    "EpReport",
    "ScalingFit",
    "sweep_spectrum",
    "detect_ep",
    "locate_ep_1d",
    "perturbation_scaling",
    "puiseux_coefficients",
]


def _matrix_of(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "matrix", obj), dtype=complex)


@dataclass
class SweepTable:
    """Eigenvalue tracks over a 1-D parameter grid.

    Tracks are continuity-matched: consecutive grid points pair eigenvalues
    by greedy minimal displacement, so each column follows one branch.
    Failed grid points carry NaN rows and are listed in ``failed_points``.
    """

    parameter: str
    grid: np.ndarray
    tracks: np.ndarray
    failed_points: list[int] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [f"{self.parameter},track,re_eigenvalue,im_eigenvalue"]
        for i, p in enumerate(self.grid):
            for k in range(self.tracks.shape[1]):
                lam = self.tracks[i, k]
                lines.append(f"{float(p)!r},{k},{float(lam.real)!r},{float(lam.imag)!r}")
        return "\n".join(lines) + "\n"


def _greedy_match(previous: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Order ``current`` so entry k continues track k of ``previous``."""
    n = previous.size
    dist = np.abs(previous[:, None] - current[None, :])
    order = np.dstack(np.unravel_index(np.argsort(dist, axis=None), dist.shape))[0]
    out = np.empty(n, dtype=complex)
    used_prev = np.zeros(n, dtype=bool)
    used_cur = np.zeros(n, dtype=bool)
    assigned = 0
    for i, j in order:
        if used_prev[i] or used_cur[j]:
            continue
        out[i] = current[j]
        used_prev[i] = used_cur[j] = True
        assigned += 1
        if assigned == n:
            break
    return out


def sweep_spectrum(builder, grid, parameter: str = "parameter", jobs: int | None = None) -> SweepTable:
    """Eigenvalue tracks of ``builder(p)`` over the grid.

    ``builder`` must be deterministic in its parameter and may return either
    a matrix or any object with a ``matrix`` attribute.  Eigensolver failures
    flag the point and the sweep continues.
    """
    grid = np.asarray(grid, dtype=float)

    def solve(p):
        return linalg.eigendecompose(_matrix_of(builder(p))).eigenvalues

    point_failures = (NumericalError, np.linalg.LinAlgError, ValueError)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(solve, p) for p in grid]
            results = []
            for fut in futures:
                try:
                    results.append(fut.result())
                except point_failures:
                    results.append(None)
    else:
        results = []
        for p in grid:
            try:
                results.append(solve(p))
            except point_failures:
                results.append(None)

    n_eig = next((r.size for r in results if r is not None), 0)
    if n_eig == 0:
        raise NumericalError("every grid point failed to eigendecompose")
    tracks = np.full((grid.size, n_eig), np.nan + 0j, dtype=complex)
    failed = [i for i, r in enumerate(results) if r is None]
    previous = None
    for i, r in enumerate(results):
        if r is None:
            continue
        tracks[i] = r if previous is None else _greedy_match(previous, r)
        previous = tracks[i]
    return SweepTable(parameter=parameter, grid=grid, tracks=tracks, failed_points=failed)


@dataclass
class EpReport:
    """Degeneracy record for one eigenvalue cluster.

    ``order`` is the longest Jordan chain; a cluster whose chains all have
    length one is a diabolic (diagonalizable) degeneracy, not an EP.  The
    tolerances used are carried along because Jordan analysis near an EP is
    intrinsically ill conditioned.
    """

    eigenvalue: complex
    order: int
    chain_lengths: tuple[int, ...]
    algebraic_multiplicity: int
    geometric_multiplicity: int
    tol_cluster: float
    tol_rank: float
    parameter: float | None = None

    @property
    def is_ep(self) -> bool:
        return self.order >= 2

    @property
    def is_diabolic(self) -> bool:
        return self.order == 1

    def to_text(self) -> str:
        kind = f"EP{self.order}" if self.is_ep else "diabolic"
        lines = [
            f"kind {kind}",
            f"eigenvalue {self.eigenvalue.real:.17g} {self.eigenvalue.imag:.17g}",
            f"algebraic_multiplicity {self.algebraic_multiplicity}",
            f"geometric_multiplicity {self.geometric_multiplicity}",
            "chain_lengths " + " ".join(str(c) for c in self.chain_lengths),
            f"tol_cluster {self.tol_cluster:.17g}",
            f"tol_rank {self.tol_rank:.17g}",
        ]
        if self.parameter is not None:
            lines.append(f"parameter {self.parameter:.17g}")
        return "\n".join(lines) + "\n"


def detect_ep(
    m,
    tol_cluster: float = linalg.TOL_CLUSTER,
    tol_rank: float = linalg.TOL_RANK,
    parameter: float | None = None,
) -> list[EpReport]:
    """Degeneracy reports for every eigenvalue cluster of multiplicity >= 2.

    Diabolic clusters are included with order 1; filter on ``is_ep`` for
    genuine exceptional points.  Ambiguous clusterings raise, listing the
    borderline gaps.
    """
    if tol_cluster <= 0 or tol_rank <= 0:
        raise ParameterError("tolerances must be positive")
    m = _matrix_of(m)
    vals = linalg.eigendecompose(m).eigenvalues
    clusters = linalg.cluster_eigenvalues(vals, tol_cluster)
    reports = []
    for idx in clusters:
        if idx.size < 2:
            continue
        rep = linalg.jordan_structure(
            m, complex(vals[idx].mean()), tol=tol_rank, tol_cluster=tol_cluster
        )
        reports.append(
            EpReport(
                eigenvalue=rep.eigenvalue,
                order=rep.order,
                chain_lengths=rep.chain_lengths,
                algebraic_multiplicity=rep.algebraic_multiplicity,
                geometric_multiplicity=rep.geometric_multiplicity,
                tol_cluster=tol_cluster,
                tol_rank=tol_rank,
                parameter=parameter,
            )
        )
    return reports


def _imag_indicator(m: np.ndarray) -> float:
    vals = np.linalg.eigvals(m)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    return float(np.abs(vals.imag).max(initial=0.0) / scale)


def _min_gap(m: np.ndarray, guide: complex | None, window: float | None) -> float:
    vals = np.linalg.eigvals(m)
    if guide is not None:
        radius = window if window is not None else np.inf
        sel = vals[np.abs(vals - guide) <= radius]
        if sel.size >= 2:
            vals = sel
    if vals.size < 2:
        raise BracketError("fewer than two eigenvalues available for the gap metric")
    d = np.abs(vals[:, None] - vals[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def locate_ep_1d(
    builder,
    bracket,
    tol: float = 1e-6,
    strategy: str = "auto",
    guide: complex | None = None,
    window: float | None = None,
    imag_threshold: float = 1e-9,
    max_iter: int = 200,
) -> float:
    """Locate an EP parameter inside a 1-D bracket.

    Strategies: ``"real_to_complex"`` bisects on the onset of imaginary
    eigenvalue parts (the overdamped-to-underdamped transition of real
    generators); ``"min_gap"`` golden-section-minimizes the smallest pairwise
    eigenvalue gap, optionally restricted to eigenvalues within ``window`` of
    ``guide``.  ``"auto"`` picks the first when exactly one bracket end has a
    real spectrum.  Raises :class:`BracketError` when the bracket does not
    isolate the transition or gap minimum.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if not b > a:
        raise ParameterError("bracket must satisfy lo < hi")

    def matrix(p):
        return _matrix_of(builder(p))

    if strategy == "auto":
        fa, fb = _imag_indicator(matrix(a)), _imag_indicator(matrix(b))
        real_a, real_b = fa <= imag_threshold, fb <= imag_threshold
        strategy = "real_to_complex" if real_a != real_b else "min_gap"

    if strategy == "real_to_complex":
        fa = _imag_indicator(matrix(a)) - imag_threshold
        fb = _imag_indicator(matrix(b)) - imag_threshold
        if fa * fb > 0:
            raise BracketError(
                f"spectrum does not change real/complex character over [{a}, {b}]"
            )
        for _ in range(max_iter):
            if b - a <= tol:
                break
            mid = 0.5 * (a + b)
            fm = _imag_indicator(matrix(mid)) - imag_threshold
            if (fm > 0) == (fb > 0):
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        return 0.5 * (a + b)

    if strategy == "min_gap":
        phi = 0.5 * (np.sqrt(5.0) - 1.0)
        ga = _min_gap(matrix(a), guide, window)
        gb = _min_gap(matrix(b), guide, window)
        x1 = b - phi * (b - a)
        x2 = a + phi * (b - a)
        g1 = _min_gap(matrix(x1), guide, window)
        g2 = _min_gap(matrix(x2), guide, window)
        for _ in range(max_iter):
            if b - a <= tol:
                break
            if g1 <= g2:
                b, x2, g2 = x2, x1, g1
                x1 = b - phi * (b - a)
                g1 = _min_gap(matrix(x1), guide, window)
            else:
                a, x1, g1 = x1, x2, g2
                x2 = a + phi * (b - a)
                g2 = _min_gap(matrix(x2), guide, window)
        best = 0.5 * (a + b)
        if min(ga, gb) <= _min_gap(matrix(best), guide, window):
            raise BracketError("no interior gap minimum found inside the bracket")
        return best

    raise ParameterError(f"unknown strategy {strategy!r}")


@dataclass
class ScalingFit:
    """Log-log fit of eigenvalue splittings against perturbation strength."""

    eps_grid: np.ndarray
    splittings: np.ndarray
    exponent: float
    coefficient: float
    residual: float

    def to_csv(self) -> str:
        lines = ["epsilon,splitting"]
        for e, s in zip(self.eps_grid, self.splittings):
            lines.append(f"{float(e)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"


DEFAULT_EPS_GRID = np.logspace(-6.0, -3.0, 13)


def _cluster_eigs(m: np.ndarray, center: complex, size: int) -> np.ndarray:
    vals = np.linalg.eigvals(m)
    order = np.argsort(np.abs(vals - center))
    chosen = vals[order[:size]]
    if vals.size > size:
        inner = float(np.abs(chosen - center).max())
        outer = float(np.abs(vals[order[size]] - center))
        if outer < 3.0 * max(inner, 1e-300):
            raise TrackingError(
                f"perturbed cluster mixes with the outside spectrum "
                f"(cluster radius {inner:.3e}, next eigenvalue at {outer:.3e})"
            )
    return chosen


def perturbation_scaling(
    builder,
    ep_point: float,
    eps_grid=None,
    ep_eigenvalue: complex = 0.0,
    order: int = 2,
    direction: float = 1.0,
) -> ScalingFit:
    """Splitting-versus-perturbation fit at an exceptional point.

    The parameter is perturbed multiplicatively, p = ep_point (1 + direction
    eps); at each eps the ``order`` eigenvalues nearest ``ep_eigenvalue`` are
    selected and the splitting is their maximum pairwise distance.  The fit
    is least squares on log(splitting) versus log(eps).
    """
    eps_grid = DEFAULT_EPS_GRID.copy() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if np.any(eps_grid <= 0):
        raise ParameterError("perturbations must be positive")
    if eps_grid.max() / eps_grid.min() < 99.0:
        raise ParameterError("the perturbation grid must span at least two decades")
    splittings = np.empty(eps_grid.size)
    for i, eps in enumerate(eps_grid):
        m = _matrix_of(builder(ep_point * (1.0 + direction * eps)))
        cluster = _cluster_eigs(m, ep_eigenvalue, order)
        d = np.abs(cluster[:, None] - cluster[None, :])
        splittings[i] = d.max()
    coeffs, residuals, *_ = np.polyfit(np.log(eps_grid), np.log(splittings), 1, full=True)
    rss = float(residuals[0]) if len(residuals) else 0.0
    return ScalingFit(
        eps_grid=eps_grid,
        splittings=splittings,
        exponent=float(coeffs[0]),
        coefficient=float(np.exp(coeffs[1])),
        residual=float(np.sqrt(rss / eps_grid.size)),
    )


def puiseux_coefficients(
    builder,
    ep_point: float,
    eps_grid=None,
    ep_eigenvalue: complex = 0.0,
    order: int = 2,
    direction: float = 1.0,
) -> np.ndarray:
    """Leading branch coefficients x_i of λ_i ≈ λ_EP + x_i eps^{1/n}.

    Each branch displacement divided by eps^{1/n} is extrapolated linearly in
    eps^{1/n} to zero, which removes the next Puiseux correction.  Branches
    are tracked across the grid by their phase.
    """
    eps_grid = DEFAULT_EPS_GRID.copy() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    eps_grid = np.sort(eps_grid)[::-1]  # large-to-small: least noisy first
    branches = np.empty((eps_grid.size, order), dtype=complex)
    reference = None
    for i, eps in enumerate(eps_grid):
        m = _matrix_of(builder(ep_point * (1.0 + direction * eps)))
        deltas = _cluster_eigs(m, ep_eigenvalue, order) - ep_eigenvalue
        if reference is None:
            deltas = deltas[np.argsort(np.angle(deltas))]
        else:
            phases = deltas / np.abs(deltas)
            out = np.empty(order, dtype=complex)
            taken = np.zeros(order, dtype=bool)
            for k in range(order):
                dist = np.abs(phases - reference[k])
                dist[taken] = np.inf
                j = int(np.argmin(dist))
                out[k] = deltas[j]
                taken[j] = True
            deltas = out
        reference = deltas / np.abs(deltas)
        branches[i] = deltas
    root = eps_grid ** (1.0 / order)
    coeffs = np.empty(order, dtype=complex)
    for k in range(order):
        scaled = branches[:, k] / root
        fit_re = np.polyfit(root, scaled.real, 1)
        fit_im = np.polyfit(root, scaled.imag, 1)
        coeffs[k] = fit_re[1] + 1j * fit_im[1]
    return coeffs
