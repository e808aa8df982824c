"""Command-line front end: config-driven sweeps, EP location, dynamics,
sensitivity and cross-validation, with CSV/JSON/SVG emission.

The config is a single TOML document; all rates are dimensionless ratios
relative to the spectral width, which the CLI fixes to 1.  Exit codes:
0 success, 2 config validation, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, dynamics, heom, linalg, pseudomode, spectral, svg
from .environment import (
    CorrelationSpec,
    ExponentTerm,
    SpectralDensity,
    exponents_for,
)
from .errors import (
    BracketError,
    NotInRegimeError,
    NumericalError,
    ParameterError,
    QuadratureError,
    StiffnessError,
    TrackingError,
)

ACTIONS = ("sweep", "ep-find", "dynamics", "sensitivity", "validate")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_NUMERICAL_ERRORS = (
    NumericalError,
    BracketError,
    TrackingError,
    QuadratureError,
    StiffnessError,
    NotInRegimeError,
    np.linalg.LinAlgError,
)


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


def _get(section: dict, field: str, path: str, default=None, required: bool = False):
    if field not in section:
        if required:
            raise ConfigError(f"{path}.{field}", "missing")
        return default
    return section[field]


def _positive(value, path: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {value!r}") from None
    if out <= 0:
        raise ConfigError(path, f"must be positive, got {out}")
    return out


class Scenario:
    """Validated configuration plus the model builders derived from it."""

    def __init__(self, config: dict, action: str):
        self.raw = config
        self.action = action
        model = _get(config, "model", "", required=True)
        if not isinstance(model, dict):
            raise ConfigError("model", "must be a table")
        self.kind = _get(model, "kind", "model", default="spin-boson")
        if self.kind not in ("spin-boson", "bosonic-network"):
            raise ConfigError("model.kind", f"unknown model kind {self.kind!r}")
        self.mapping = _get(model, "mapping", "model", default="pmeom")
        if self.mapping not in ("pmeom", "heom", "both"):
            raise ConfigError("model.mapping", f"unknown mapping {self.mapping!r}")

        declared = _get(config.get("action", {}), "name", "action")
        if declared is not None and declared != action:
            raise ConfigError("action.name", f"config declares {declared!r}, invoked as {action!r}")
        self.params = config.get("action", {})

        numerics = config.get("numerics", {})
        self.tol_cluster = _positive(_get(numerics, "tol_cluster", "numerics", 1e-6), "numerics.tol_cluster")
        self.tol_rank = _positive(_get(numerics, "tol_rank", "numerics", 1e-8), "numerics.tol_rank")
        self.rtol = _positive(_get(numerics, "rtol", "numerics", 1e-10), "numerics.rtol")
        self.tier = int(_get(numerics, "tier", "numerics", 2))
        self.n_max = int(_get(numerics, "n_max", "numerics", 1))
        if self.tier < 0:
            raise ConfigError("numerics.tier", "must be nonnegative")

        out = config.get("output", {})
        self.out_dir = _get(out, "dir", "output", default="out")
        self.formats = list(_get(out, "formats", "output", default=["csv"]))
        for fmt in self.formats:
            if fmt not in ("csv", "json", "svg"):
                raise ConfigError("output.formats", f"unknown format {fmt!r}")

        self.width = 1.0
        self._parse_environment(model)
        if self.kind == "bosonic-network":
            self._parse_network(model)

    # -- model parsing -------------------------------------------------

    def _parse_environment(self, model: dict) -> None:
        sd = model.get("spectral_density")
        corr = model.get("correlation")
        if sd is None and corr is None and self.kind == "spin-boson":
            raise ConfigError("model.spectral_density", "missing (or provide model.correlation)")
        self.density = None
        self.spec = None
        if sd is not None:
            variant = _get(sd, "variant", "model.spectral_density", default="lorentzian")
            if variant not in ("lorentzian", "bandgap"):
                raise ConfigError("model.spectral_density.variant", f"unknown variant {variant!r}")
            coupling = _positive(
                _get(sd, "coupling", "model.spectral_density", required=True),
                "model.spectral_density.coupling",
            )
            self.width = _positive(
                _get(sd, "width", "model.spectral_density", default=1.0),
                "model.spectral_density.width",
            )
            q = float(_get(sd, "gap_fraction", "model.spectral_density", default=0.0))
            try:
                self.density = SpectralDensity(variant, coupling, self.width, 0.0, q)
            except ParameterError as exc:
                raise ConfigError("model.spectral_density", str(exc)) from exc
            self.spec = exponents_for(self.density)
        elif corr is not None:
            terms = corr.get("terms")
            if not terms:
                raise ConfigError("model.correlation.terms", "missing or empty")
            parsed = []
            for i, term in enumerate(terms):
                path = f"model.correlation.terms[{i}]"
                weight = complex(
                    float(_get(term, "re_weight", path, default=0.0)),
                    float(_get(term, "im_weight", path, default=0.0)),
                )
                decay = _positive(_get(term, "decay", path, required=True), f"{path}.decay")
                freq = float(_get(term, "frequency", path, default=0.0))
                parsed.append(ExponentTerm(weight=weight, decay=decay, frequency=freq))
            self.spec = CorrelationSpec(terms=tuple(parsed), rwa=True)

    def _parse_network(self, model: dict) -> None:
        net = model.get("network")
        if net is None:
            raise ConfigError("model.network", "missing for a bosonic-network model")
        self.chi = float(_get(net, "chi", "model.network", required=True))
        markov = net.get("markovian_rate")
        self.markov_rate = None if markov is None else _positive(markov, "model.network.markovian_rate")
        if self.markov_rate is None and self.spec is None:
            raise ConfigError(
                "model.network", "needs either markovian_rate or a spectral density/correlation"
            )

    # -- builders -------------------------------------------------------

    def _density_at(self, coupling: float) -> SpectralDensity:
        if self.density is None:
            raise ConfigError("model.spectral_density", "parameter sweeps need a parametric density")
        return SpectralDensity(
            self.density.kind, coupling, self.density.width, 0.0, self.density.gap_fraction
        )

    def builder(self, mapping: str, parameter: str):
        """Parameterized generator constructor for sweeps and EP searches."""
        if self.kind == "spin-boson":
            if parameter not in ("coupling", "gap_fraction"):
                raise ConfigError("action.parameter", f"unknown spin-boson parameter {parameter!r}")

            def density_of(p):
                if parameter == "coupling":
                    return self._density_at(p)
                base = self._density_at(self.density.coupling)
                return SpectralDensity("bandgap", base.coupling, base.width, 0.0, p)

            if mapping == "pmeom":
                def build(p):
                    spec = exponents_for(density_of(p))
                    return pseudomode.restrict_single_excitation(
                        pseudomode.spin_boson_model(spec, n_max=self.n_max)
                    )
                return build

            def build(p):
                spec = exponents_for(density_of(p))
                model = heom.HeomModel.rwa_zero_temperature(spec, tier=self.tier)
                return heom.build_heom_rwa(model)
            return build

        if parameter != "chi":
            raise ConfigError("action.parameter", f"unknown network parameter {parameter!r}")

        def build(p):
            net = pseudomode.two_mode_network(p, spec=self.spec, markov_rate=self.markov_rate)
            return pseudomode.effective_nhh(net)
        return build

    def mappings(self) -> list[str]:
        if self.kind == "bosonic-network":
            return ["nhh"]
        return ["pmeom", "heom"] if self.mapping == "both" else [self.mapping]


class OutputWriter:
    def __init__(self, out_dir: str, formats: list[str]):
        self.dir = Path(out_dir)
        self.formats = formats
        self.written: list[str] = []

    def _emit(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text, encoding="utf-8")
        self.written.append(name)

    def csv(self, stem: str, text: str) -> None:
        if "csv" in self.formats:
            self._emit(stem + ".csv", text)

    def json(self, stem: str, payload) -> None:
        if "json" in self.formats:
            self._emit(stem + ".json", json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def svg(self, stem: str, document: str) -> None:
        if "svg" in self.formats:
            self._emit(stem + ".svg", document)

    def text(self, name: str, text: str) -> None:
        self._emit(name, text)

    def manifest(self, scenario: Scenario, action: str) -> None:
        import scipy

        payload = {
            "package": "epmodes",
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "action": action,
            "tolerances": {
                "tol_cluster": scenario.tol_cluster,
                "tol_rank": scenario.tol_rank,
                "rtol": scenario.rtol,
                "tier": scenario.tier,
                "n_max": scenario.n_max,
            },
            "config": scenario.raw,
            "outputs": sorted(self.written),
        }
        self._emit("manifest.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")


def render_svg(obj) -> str:
    """Static SVG for a sweep table (two panels) or a trajectory (one)."""
    if isinstance(obj, spectral.SweepTable):
        if obj.grid.size == 0 or obj.tracks.size == 0:
            raise ValueError("sweep table is empty")
        series_re = {f"track {k}": obj.tracks[:, k].real for k in range(obj.tracks.shape[1])}
        series_im = {f"track {k}": obj.tracks[:, k].imag for k in range(obj.tracks.shape[1])}
        panels = [
            svg.line_panel(obj.grid, series_re, obj.parameter, "Re eigenvalue / width"),
            svg.line_panel(obj.grid, series_im, obj.parameter, "Im eigenvalue / width"),
        ]
        return svg.render_panels(panels)
    if isinstance(obj, dynamics.Trajectory):
        if obj.times.size == 0:
            raise ValueError("trajectory is empty")
        coherence = np.abs(obj.states[:, 1, 0])
        population = obj.states[:, 1, 1].real
        panel = svg.line_panel(
            obj.times,
            {"|coherence|": coherence, "excited population": population},
            "t * width",
            "reduced-state components",
        )
        return svg.render_panels([panel])
    if isinstance(obj, dynamics.DecoherenceRecord):
        panel = svg.line_panel(
            obj.times, {"|G|": np.abs(obj.values)}, "t * width", "|G(t)|"
        )
        return svg.render_panels([panel])
    raise TypeError(f"cannot render a {type(obj).__name__}")


# -- actions -------------------------------------------------------------


def _action_sweep(scenario: Scenario, writer: OutputWriter, jobs: int | None) -> int:
    params = scenario.params
    parameter = _get(params, "parameter", "action", default="coupling" if scenario.kind == "spin-boson" else "chi")
    start = _positive(_get(params, "start", "action", required=True), "action.start")
    stop = _positive(_get(params, "stop", "action", required=True), "action.stop")
    count = int(_get(params, "count", "action", default=96))
    if count < 2:
        raise ConfigError("action.count", "need at least two grid points")
    grid = np.linspace(start, stop, count)
    for mapping in scenario.mappings():
        table = spectral.sweep_spectrum(
            scenario.builder(mapping, parameter), grid, parameter=parameter, jobs=jobs
        )
        stem = f"sweep_{mapping}"
        writer.csv(stem, table.to_csv())
        writer.json(stem, {
            "parameter": parameter,
            "grid": [float(p) for p in table.grid],
            "tracks_re": table.tracks.real.tolist(),
            "tracks_im": table.tracks.imag.tolist(),
            "failed_points": table.failed_points,
        })
        writer.svg(stem, render_svg(table))
    return 0


def _detect_with_escalation(matrix, scenario: Scenario, parameter: float):
    """Classify the degeneracy at a located (hence slightly inexact) point.

    Jordan analysis a distance delta from the EP sees eigenvalues split by
    delta^(1/order), so the cluster and rank tolerances are widened together
    until a defective cluster emerges; a warning records the widening.
    """
    ladder = [
        (scenario.tol_cluster, scenario.tol_rank),
        (1e-4, 1e-6),
        (1e-3, 1e-5),
        (3e-3, 1e-4),
        (1e-2, 1e-3),
    ]
    reports = []
    for tol_cluster, tol_rank in ladder:
        try:
            reports = spectral.detect_ep(matrix, tol_cluster, tol_rank, parameter=parameter)
        except _NUMERICAL_ERRORS:
            continue
        if any(r.is_ep for r in reports):
            if (tol_cluster, tol_rank) != ladder[0]:
                print(
                    f"warning: EP classified with widened tolerances "
                    f"(cluster {tol_cluster:g}, rank {tol_rank:g}); the located "
                    "parameter is only accurate to the search tolerance",
                    file=sys.stderr,
                )
            return reports
    return reports


def _action_ep_find(scenario: Scenario, writer: OutputWriter) -> int:
    params = scenario.params
    bracket = _get(params, "bracket", "action", required=True)
    if not (isinstance(bracket, (list, tuple)) and len(bracket) == 2):
        raise ConfigError("action.bracket", "expected [lo, hi]")
    tol = _positive(_get(params, "tol", "action", default=1e-6), "action.tol")
    parameter = _get(params, "parameter", "action", default="coupling" if scenario.kind == "spin-boson" else "chi")
    mapping = scenario.mappings()[0]
    builder = scenario.builder(mapping, parameter)
    located = spectral.locate_ep_1d(builder, (float(bracket[0]), float(bracket[1])), tol=tol)
    reports = _detect_with_escalation(builder(located), scenario, located)
    text = f"located {parameter} = {located:.17g}\n\n" + "\n".join(r.to_text() for r in reports)
    writer.text("ep_report.txt", text)
    writer.json("ep_report", {
        "parameter": parameter,
        "located": located,
        "reports": [
            {
                "eigenvalue": [r.eigenvalue.real, r.eigenvalue.imag],
                "order": r.order,
                "chain_lengths": list(r.chain_lengths),
                "algebraic_multiplicity": r.algebraic_multiplicity,
                "geometric_multiplicity": r.geometric_multiplicity,
                "is_ep": r.is_ep,
                "tol_cluster": r.tol_cluster,
                "tol_rank": r.tol_rank,
            }
            for r in reports
        ],
    })
    print(f"located {parameter} = {located:.12g}")
    return 0


def _rho0_from(params: dict) -> np.ndarray:
    raw = _get(params, "rho0", "action", default=[0.5, 0.3, 0.0])
    if not (isinstance(raw, (list, tuple)) and len(raw) == 3):
        raise ConfigError("action.rho0", "expected [excited_population, re_coherence, im_coherence]")
    p, re_c, im_c = (float(x) for x in raw)
    c = re_c + 1j * im_c
    rho0 = np.array([[1.0 - p, np.conj(c)], [c, p]], dtype=complex)
    if np.linalg.eigvalsh(rho0).min() < -1e-12:
        raise ConfigError("action.rho0", "not a positive semidefinite state")
    return rho0


def _action_dynamics(scenario: Scenario, writer: OutputWriter) -> int:
    if scenario.kind != "spin-boson":
        raise ConfigError("action", "dynamics runs on the spin-boson model")
    params = scenario.params
    t_max = _positive(_get(params, "t_max", "action", default=10.0), "action.t_max")
    count = int(_get(params, "t_count", "action", default=400))
    rho0 = _rho0_from(params)
    times = dynamics.default_time_grid(scenario.width, span=t_max * scenario.width, count=count)
    q = scenario.density.gap_fraction if scenario.density is not None else 0.0

    trajectories = {}
    for mapping in scenario.mappings():
        if mapping == "pmeom":
            model = pseudomode.spin_boson_model(scenario.spec, n_max=scenario.n_max)
        else:
            model = heom.HeomModel.rwa_zero_temperature(scenario.spec, tier=scenario.tier)
        trajectories[mapping] = dynamics.evolve_reduced(model, rho0, times, rtol=scenario.rtol)
    if scenario.density is not None:
        trajectories["analytic"] = dynamics.analytic_trajectory(
            scenario.density.coupling, scenario.width, q, rho0, times
        )

    g_mag = None
    if scenario.density is not None:
        g_mag = np.abs(np.asarray(dynamics.decoherence_function(
            scenario.density.coupling, scenario.width, q, times
        )))
    for name, traj in trajectories.items():
        writer.csv(f"trajectory_{name}", traj.to_csv(decoherence_magnitude=g_mag))
        writer.svg(f"trajectory_{name}", render_svg(traj))
    return 0


def _action_sensitivity(scenario: Scenario, writer: OutputWriter) -> int:
    params = scenario.params
    target = _get(params, "target", "action", default="splitting")
    eps_start = _positive(_get(params, "eps_start", "action", default=1e-6), "action.eps_start")
    eps_stop = _positive(_get(params, "eps_stop", "action", default=1e-3), "action.eps_stop")
    eps_count = int(_get(params, "eps_count", "action", default=13))
    eps_grid = np.logspace(np.log10(eps_start), np.log10(eps_stop), eps_count)

    if target == "vanishing-time":
        if scenario.kind != "spin-boson":
            raise ConfigError("action.target", "vanishing-time sensitivity needs the spin-boson model")
        lam = scenario.width
        rows = ["epsilon,t_vanish,inverse"]
        inverses = []
        for eps in eps_grid:
            t_v = dynamics.first_vanishing_time(0.5 * lam * (1.0 + eps), lam)
            rows.append(f"{float(eps)!r},{float(t_v)!r},{float(1.0 / t_v)!r}")
            inverses.append(1.0 / t_v)
        slope, intercept = np.polyfit(np.log(eps_grid), np.log(inverses), 1)
        writer.csv("vanishing_time", "\n".join(rows) + "\n")
        writer.json("vanishing_time", {
            "eps": eps_grid.tolist(),
            "inverse_t_vanish": inverses,
            "fit_exponent": float(slope),
            "fit_coefficient": float(np.exp(intercept)),
        })
        print(f"vanishing-time fit: exponent {slope:.4f}, coefficient {np.exp(intercept):.6g}")
        return 0

    if target != "splitting":
        raise ConfigError("action.target", f"unknown sensitivity target {target!r}")
    if scenario.kind != "bosonic-network":
        raise ConfigError("action.target", "splitting sensitivity runs on the bosonic network")
    ep_point = float(_get(params, "ep_point", "action", default=scenario.chi))
    order = int(_get(params, "order", "action", default=3 if scenario.markov_rate is None else 2))
    if scenario.markov_rate is not None:
        center = 0.5j * scenario.markov_rate
    else:
        center = complex(
            _get(params, "center_re", "action", default=0.0),
            _get(params, "center_im", "action", default=scenario.width / 3.0),
        )
    builder = scenario.builder("nhh", "chi")
    fit = spectral.perturbation_scaling(
        builder, ep_point, eps_grid, ep_eigenvalue=center, order=order
    )
    writer.csv("scaling", fit.to_csv())
    writer.json("scaling", {
        "eps": fit.eps_grid.tolist(),
        "splittings": fit.splittings.tolist(),
        "exponent": fit.exponent,
        "coefficient": fit.coefficient,
        "residual": fit.residual,
    })
    print(f"splitting fit: exponent {fit.exponent:.4f}, coefficient {fit.coefficient:.6g}")
    return 0


def _action_validate(scenario: Scenario, writer: OutputWriter) -> int:
    """Cross-check PMEOM, HEOM and the analytic decoherence solution."""
    tolerance = float(_get(scenario.params, "tolerance", "action", default=1e-8))
    lam = 1.0
    couplings = (0.3, 0.5, 0.8)
    gaps = (0.0, 0.25, 0.5)
    rho0 = np.array([[0.4, 0.25 - 0.1j], [0.25 + 0.1j, 0.6]], dtype=complex)
    times = np.linspace(0.0, 10.0 / lam, 101)
    worst = {"pmeom_vs_heom": 0.0, "pmeom_vs_analytic": 0.0, "heom_vs_analytic": 0.0}
    rows = ["coupling,gap_fraction,pmeom_vs_heom,pmeom_vs_analytic,heom_vs_analytic"]
    for q in gaps:
        for g in couplings:
            kind = "bandgap" if q > 0 else "lorentzian"
            spec = exponents_for(SpectralDensity(kind, g, lam, 0.0, q))
            pm = dynamics.evolve_reduced(
                pseudomode.spin_boson_model(spec), rho0, times, rtol=scenario.rtol
            )
            hm = dynamics.evolve_reduced(
                heom.HeomModel.rwa_zero_temperature(spec, tier=scenario.tier),
                rho0, times, rtol=scenario.rtol,
            )
            an = dynamics.analytic_trajectory(g, lam, q, rho0, times)
            d1 = float(np.abs(pm.states - hm.states).max())
            d2 = float(np.abs(pm.states - an.states).max())
            d3 = float(np.abs(hm.states - an.states).max())
            worst["pmeom_vs_heom"] = max(worst["pmeom_vs_heom"], d1)
            worst["pmeom_vs_analytic"] = max(worst["pmeom_vs_analytic"], d2)
            worst["heom_vs_analytic"] = max(worst["heom_vs_analytic"], d3)
            rows.append(f"{float(g)!r},{float(q)!r},{d1!r},{d2!r},{d3!r}")
    ok = all(v <= tolerance for v in worst.values())
    writer.csv("validation", "\n".join(rows) + "\n")
    writer.json("validation", {"max_deviations": worst, "tolerance": tolerance, "passed": ok})
    for name, v in worst.items():
        print(f"{name}: max deviation {v:.3e} (tolerance {tolerance:.1e})")
    if not ok:
        print("validation FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("validation passed")
    return 0


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epmodes",
        description="Extended-Liouvillian exceptional-point analysis for non-Markovian open systems",
    )
    sub = parser.add_subparsers(dest="action", required=True)
    for name in ACTIONS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML scenario file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--jobs", type=int, default=None, help="worker threads for sweeps")
        p.add_argument(
            "--format", action="append", default=None, choices=("csv", "json", "svg"),
            help="output format; repeatable (overrides config)",
        )
    return parser


def run(config: dict, action: str, out_dir=None, formats=None, jobs=None) -> int:
    scenario = Scenario(config, action)
    out = out_dir or os.environ.get("EPMODES_OUT") or scenario.out_dir
    writer = OutputWriter(out, list(formats) if formats else scenario.formats)
    handlers = {
        "sweep": lambda: _action_sweep(scenario, writer, jobs),
        "ep-find": lambda: _action_ep_find(scenario, writer),
        "dynamics": lambda: _action_dynamics(scenario, writer),
        "sensitivity": lambda: _action_sensitivity(scenario, writer),
        "validate": lambda: _action_validate(scenario, writer),
    }
    status = handlers[action]()
    writer.manifest(scenario, action)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "rb") as fh:
            config = tomllib.load(fh)
    except FileNotFoundError as exc:
        print(f"error: cannot open config: {exc}", file=sys.stderr)
        return EXIT_IO
    except tomllib.TOMLDecodeError as exc:
        print(f"error: config is not valid TOML: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(config, args.action, out_dir=args.out, formats=args.format, jobs=args.jobs)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
