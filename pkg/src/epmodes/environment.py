"""Spectral densities and exponential decompositions of bath correlations.

Everything here lives in the interaction picture relative to the spectral
density's center frequency, so the built-in decompositions carry zero
oscillation frequencies.  The quadrature routine provides an independent
cross-check of the closed-form exponent sums.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import DegenerateEnvironmentError, ParameterError, QuadratureError

__all__ = [
    "SpectralDensity",
    "ExponentTerm",
    "CorrelationSpec",
    "lorentzian",
    "bandgap",
    "evaluate_spectral_density",
    "exponents_for",
    "correlation_value",
    "correlation_quadrature",
]


@dataclass(frozen=True)
class SpectralDensity:
    """Parametric environment profile J(ω).

    ``lorentzian`` is a Lorentzian of half-width ``width`` centered at
    ``center`` with J(center) = coupling/2.  ``bandgap`` subtracts a narrower
    Lorentzian of width ``gap_fraction * width`` so that J(center) = 0.
    """

    kind: str
    coupling: float          # Γ
    width: float             # Λ
    center: float = 0.0      # ω0
    gap_fraction: float = 0.0  # q, bandgap only

    def __post_init__(self):
        if self.kind not in ("lorentzian", "bandgap"):
            raise ParameterError(f"unknown spectral density kind {self.kind!r}")
        if not self.coupling > 0:
            raise ParameterError(f"coupling strength must be positive, got {self.coupling}")
        if not self.width > 0:
            raise ParameterError(f"spectral width must be positive, got {self.width}")
        if self.kind == "bandgap":
            q = self.gap_fraction
            if q >= 1.0 or q < 0.0:
                raise ParameterError(
                    f"gap fraction must lie in [0, 1), got {q} "
                    "(q = 1 leaves an identically vanishing profile)"
                )

    def __call__(self, omega) -> np.ndarray | float:
        return evaluate_spectral_density(self, omega)


def lorentzian(coupling: float, width: float, center: float = 0.0) -> SpectralDensity:
    return SpectralDensity("lorentzian", coupling, width, center)


def bandgap(coupling: float, width: float, center: float = 0.0, gap_fraction: float = 0.25) -> SpectralDensity:
    return SpectralDensity("bandgap", coupling, width, center, gap_fraction)


def evaluate_spectral_density(density: SpectralDensity, omega):
    """Evaluate J(ω); nonnegative for both profiles."""
    omega = np.asarray(omega, dtype=float)
    g, lam, w0 = density.coupling, density.width, density.center
    out = 0.5 * g * lam**2 / ((omega - w0) ** 2 + lam**2)
    if density.kind == "bandgap" and density.gap_fraction > 0.0:
        ql = density.gap_fraction * lam
        out = out - 0.5 * g * ql**2 / ((omega - w0) ** 2 + ql**2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ExponentTerm:
    """One exponential contribution weight * exp(-i frequency t - decay |t|/2)."""

    weight: complex  # α², may be negative/complex for unphysical modes
    decay: float     # γ > 0
    frequency: float = 0.0  # Ω; zero in the interaction picture

    def __post_init__(self):
        if not self.decay > 0:
            raise ParameterError(f"decay rate must be positive, got {self.decay}")


@dataclass(frozen=True)
class CorrelationSpec:
    """Finite exponential decomposition of the bath correlation function."""

    terms: tuple[ExponentTerm, ...]
    rwa: bool = True
    temperature: float = 0.0

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ParameterError("correlation spec needs at least one exponent term")
        if self.temperature != 0.0:
            raise ParameterError("only zero-temperature correlation specs are supported")

    @property
    def initial_value(self) -> complex:
        """C(0) = sum of weights."""
        return complex(sum(t.weight for t in self.terms))

    def value(self, t):
        return correlation_value(self, t)

    def to_text(self) -> str:
        """Serialize as one (re α², im α², Ω, γ) quadruple per line."""
        lines = ["# re(weight) im(weight) frequency decay"]
        for term in self.terms:
            w = complex(term.weight)
            lines.append(f"{w.real:.17g} {w.imag:.17g} {term.frequency:.17g} {term.decay:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, rwa: bool = True) -> "CorrelationSpec":
        terms = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"expected 4 numbers per exponent line, got {raw!r}")
            re_w, im_w, freq, decay = (float(p) for p in parts)
            terms.append(ExponentTerm(weight=re_w + 1j * im_w, decay=decay, frequency=freq))
        return cls(terms=tuple(terms), rwa=rwa)


def exponents_for(density: SpectralDensity) -> CorrelationSpec:
    """Exponential decomposition of the zero-temperature correlation function.

    Lorentzian: a single term with weight ΓΛ/2 and decay 2Λ.  Bandgap: the
    same term plus a negative-weight term (-qΓΛ/2, decay 2qΛ) whose coupling
    square root is purely imaginary.
    """
    g, lam = density.coupling, density.width
    terms = [ExponentTerm(weight=0.5 * g * lam, decay=2.0 * lam)]
    if density.kind == "bandgap":
        q = density.gap_fraction
        if q == 1.0:  # unreachable through the constructor, kept for direct calls
            raise DegenerateEnvironmentError("q = 1 leaves an identically zero correlation")
        if q > 0.0:
            terms.append(ExponentTerm(weight=-0.5 * q * g * lam, decay=2.0 * q * lam))
    return CorrelationSpec(terms=tuple(terms), rwa=True)


def correlation_value(spec: CorrelationSpec, t):
    """Evaluate sum_i weight_i exp(-i Ω_i t - γ_i |t|/2)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for term in spec.terms:
        out += term.weight * np.exp(-1j * term.frequency * t - 0.5 * term.decay * np.abs(t))
    return out if out.ndim else complex(out)


def _fourier_piece(f, a, b, t, kind, abs_tol):
    """∫_a^b f(x) cos/sin(t x) dx with QUADPACK's oscillatory weights."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            if t == 0.0:
                if kind == "sin":
                    return 0.0, 0.0
                val, err = quad(f, a, b, epsabs=abs_tol, epsrel=0.0, limit=400)
            elif np.isinf(b):
                val, err = quad(f, a, b, weight=kind, wvar=t, epsabs=abs_tol, limlst=200, limit=400)
            else:
                val, err = quad(f, a, b, weight=kind, wvar=t, epsabs=abs_tol, limit=400)
        except IntegrationWarning as exc:
            raise QuadratureError(f"quadrature did not converge: {exc}") from exc
    if err > 50.0 * abs_tol:
        raise QuadratureError(
            f"quadrature achieved tolerance {err:.3e}, requested {abs_tol:.3e}", achieved=err
        )
    return val, err


def correlation_quadrature(
    density: SpectralDensity,
    t: float,
    extend_negative: bool = True,
    abs_tol: float = 1e-8,
):
    """Zero-temperature correlation integral evaluated by adaptive quadrature.

    Computes (1/π) ∫ J(ω) exp(-i (ω - ω0) t) dω, i.e. the correlation in the
    interaction picture relative to the center frequency ω0.  The lower edge
    of the integral is 0 by default and -∞ when ``extend_negative`` is set;
    in the latter case the result is the oracle for
    :func:`correlation_value` whenever ω0 is many widths above zero.

    Raises :class:`QuadratureError` (reporting the achieved tolerance) when
    the adaptive scheme does not converge.
    """
    t = float(t)
    if t < 0:
        raise ParameterError("correlation quadrature expects t >= 0")
    w0 = density.center

    def j_shift(u):  # J as a function of the detuning from the center
        return evaluate_spectral_density(density, u + w0)

    def j_shift_neg(u):
        return evaluate_spectral_density(density, w0 - u)

    # Split at the center: the upper half runs over [0, ∞) in the detuning u,
    # the lower half is folded to positive u and runs to ω0 (or ∞).
    upper_cos, _ = _fourier_piece(j_shift, 0.0, np.inf, t, "cos", abs_tol)
    upper_sin, _ = _fourier_piece(j_shift, 0.0, np.inf, t, "sin", abs_tol)
    lower_edge = np.inf if extend_negative else w0
    lower_cos, _ = _fourier_piece(j_shift_neg, 0.0, lower_edge, t, "cos", abs_tol)
    lower_sin, _ = _fourier_piece(j_shift_neg, 0.0, lower_edge, t, "sin", abs_tol)

    real = (upper_cos + lower_cos) / np.pi
    imag = (-upper_sin + lower_sin) / np.pi
    return complex(real, imag)
