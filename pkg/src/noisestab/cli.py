"""``noisestab`` command line: compute, expand, verify, optimize, sweep.

Exit codes: 0 pass, 1 property failure, 2 usage or parse error,
3 convergence failure, 4 infeasible search, 5 I/O error.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Callable

import click
import numpy as np

from . import __version__
from .functionals import (
    DeficitReport,
    ObjectiveSpec,
    PENALTIES,
    deficit_report,
    halfspace_objective,
    halfspace_stability,
    noise_stability,
)
from .gaussian_core import ConvergenceError, gamma1
from .hermite_mehler import expand_gaussian_bump, expand_gaussian_derivative, expand_phi_penalty
from .optimizer import InfeasibleError, SearchConfig, epsilon_cap, maximize
from .sets_1d import (
    IntervalUnion,
    SetSyntaxError,
    alpha_of,
    barycenter,
    format_set,
    measure,
    parse_set,
    random_interval_union,
    random_set_with_measure,
)
from .variational import (
    boundary_kernel,
    divergence_residual,
    halfspace_profile_h,
    profile_epsilon_cap,
    stability_form,
    stability_form_lower_bound,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_INFEASIBLE, EXIT_IO = range(6)


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    seed: int | None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_header(self) -> list[str]:
        # timestamp stays out of CSV so identical manifests give identical files
        return [
            f"# command: {self.command}",
            f"# params: {json.dumps(self.params, sort_keys=True)}",
            f"# seed: {self.seed}",
            f"# tool_version: {self.tool_version}",
        ]


def _num(v) -> object:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def _clean(d: dict) -> dict:
    return {k: _num(v) for k, v in d.items()}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        click.echo(f"error: cannot write {path}: {exc}", err=True)
        sys.exit(EXIT_IO)


def json_report(manifest: RunManifest, cases: list[dict]) -> str:
    return json.dumps({"manifest": manifest.to_dict(), "cases": cases}, indent=2)


def csv_report(manifest: RunManifest, columns: list[str], rows: list[list], notes: list[str] = ()) -> str:
    buf = io.StringIO()
    for line in manifest.csv_header():
        buf.write(line + "\n")
    for line in notes:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _parse_set_or_exit(text: str) -> IntervalUnion:
    try:
        return parse_set(text)
    except SetSyntaxError as exc:
        raise click.UsageError(f"cannot parse set {text!r}: {exc}") from exc


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="noisestab")
def main() -> None:
    """Numerical checks of Gaussian noise stability for sets on the line."""


# -- stability -------------------------------------------------------------------

_METHODS = {"quadrature": "quadrature", "mehler": "mehler", "mc": "monte_carlo"}


@main.command()
@click.option("--set", "set_text", required=True, help='Interval union, e.g. "(-inf,0];[1,2]".')
@click.option("--rho", type=float, required=True)
@click.option("--method", type=click.Choice(list(_METHODS)), default="quadrature", show_default=True)
@click.option("--samples", type=int, default=10_000_000, show_default=True, help="Monte Carlo pairs.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON report path.")
def stability(set_text: str, rho: float, method: str, samples: int, seed: int, out: str | None) -> None:
    """Noise stability P(X in s, Y in s) at correlation RHO."""
    s = _parse_set_or_exit(set_text)
    if not -1.0 < rho < 1.0:
        raise click.BadParameter("rho must lie in (-1, 1)", param_hint="--rho")
    try:
        res = noise_stability(s, rho, _METHODS[method], samples=samples, seed=seed)
    except ConvergenceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    manifest = RunManifest("stability", {"set": format_set(s), "rho": rho, "method": method}, seed)
    outputs = _clean({"value": res.value, "error": res.error, "method": res.method})
    click.echo(f"{res.value:.17g}\t(error {res.error:.3g}, {res.method})")
    _write(out, json_report(manifest, [{"inputs": manifest.params, "outputs": outputs, "pass": True}]))


# -- expand ----------------------------------------------------------------------

_EXPANSIONS = {"phi": expand_phi_penalty, "bump": expand_gaussian_bump, "derivative": expand_gaussian_derivative}


@main.command()
@click.option("--kind", type=click.Choice(list(_EXPANSIONS)), required=True)
@click.option("--beta", type=float, required=True)
@click.option("--alpha", type=float, default=0.0, show_default=True)
@click.option("--order", type=int, default=60, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def expand(kind: str, beta: float, alpha: float, order: int, out: str | None) -> None:
    """Hermite coefficients of a penalty profile."""
    try:
        series = _EXPANSIONS[kind](beta, alpha, N=order)
    except ConvergenceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    for k, c in enumerate(series.coeffs):
        click.echo(f"{k}\t{c:.17g}")
    _write(out, series.to_json())


# -- verify ----------------------------------------------------------------------


def _suite_borell(rng, trials, rhos, a_values):
    for _ in range(trials):
        s = random_interval_union(rng)
        m = measure(s)
        for rho in rhos:
            st = noise_stability(s, rho).value
            hs = halfspace_stability(m, rho)
            yield (
                {"set": format_set(s), "rho": rho, "measure": m},
                {"stability": st, "halfspace": hs, "slack": hs - st},
                st <= hs + 1e-8,
            )


def _suite_sandwich(rng, trials, rhos, a_values):
    z_min = 0.05
    for a in a_values:
        for _ in range(trials):
            while True:
                s = random_set_with_measure(rng, a)
                if abs(barycenter(s)) >= z_min:
                    break
            for rho in rhos:
                r = deficit_report(s, rho, rho, a, z_min)
                ok = r.upper_ok and r.lower_ok and r.symmetric_lower_ok is not False
                yield (
                    {"set": r.set, "rho": rho, "beta": rho, "a": a, "z0": z_min},
                    _clean({k: v for k, v in r.to_dict().items() if k not in ("set", "seed")}),
                    ok,
                )


def _suite_variational(rng, trials, rhos, a_values):
    for _ in range(trials):
        s = random_interval_union(rng)
        x = rng.uniform(-4.0, 4.0, 20)
        xb, _ = s.boundary_arrays()
        for rho in rhos:
            div = float(np.max(divergence_residual(s, rho, x)))
            form = stability_form(s, rho).value
            eig = float(np.min(np.linalg.eigvalsh(boundary_kernel(rho, xb)))) if xb.size else 0.0
            yield (
                {"set": format_set(s), "rho": rho},
                {"divergence_residual": div, "stability_form": form, "kernel_min_eigenvalue": eig,
                 "stability_form_bound": stability_form_lower_bound(s, rho)},
                div <= 1e-10 and form >= -1e-10 and eig >= -1e-12,
            )


PROFILE_TRIPLES = ((0.5, 0.3), (0.3, 0.5), (0.7, 0.7))


def _suite_profiles(rng, trials, rhos, a_values):
    pairs = [(a, b) for a, b in PROFILE_TRIPLES] if not a_values else [(a, 0.5) for a in a_values]
    for a, beta in pairs:
        alpha = alpha_of(a)
        for kind in ("lemma_finallem2", "lemma_finallem3"):
            eps = 0.5 * profile_epsilon_cap(kind, a, beta)
            grid = alpha + np.arange(-1000, 1001) * 1e-3
            h = np.array([halfspace_profile_h(t, kind, a, beta, eps) for t in grid])
            t_min = float(grid[int(np.argmin(h))])
            yield (
                {"kind": kind, "a": a, "beta": beta, "epsilon": eps},
                {"argmin": t_min, "alpha": alpha, "h_min": float(h.min())},
                abs(t_min - alpha) <= 1e-3 + 1e-12,
            )


SUITES: dict[str, Callable] = {
    "borell": _suite_borell,
    "sandwich": _suite_sandwich,
    "variational": _suite_variational,
    "profiles": _suite_profiles,
}


@main.command()
@click.option("--suite", type=click.Choice(list(SUITES)), required=True)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rho", "rhos", type=float, multiple=True, help="Repeatable; default depends on the suite.")
@click.option("--a", "a_values", type=float, multiple=True, help="Repeatable measure targets.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def verify(suite: str, trials: int, seed: int, rhos: tuple[float, ...], a_values: tuple[float, ...], out: str | None) -> None:
    """Run a property suite; exit 0 iff every case passes."""
    if trials < 1:
        raise click.BadParameter("trials must be positive", param_hint="--trials")
    rhos = rhos or ((0.3, 0.5, 0.7) if suite == "sandwich" else (0.2, 0.5, 0.8))
    if any(not 0.0 < r < 1.0 for r in rhos):
        raise click.BadParameter("rho must lie in (0, 1)", param_hint="--rho")
    if suite == "sandwich":
        a_values = a_values or (0.5,)
    rng = np.random.default_rng(seed)
    manifest = RunManifest(
        "verify", {"suite": suite, "trials": trials, "rho": list(rhos), "a": list(a_values)}, seed
    )
    try:
        cases = [
            {"inputs": _clean(i), "outputs": _clean(o), "pass": bool(ok)}
            for i, o, ok in SUITES[suite](rng, trials, rhos, a_values)
        ]
    except ConvergenceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    failures = sum(not c["pass"] for c in cases)
    click.echo(f"{suite}: {len(cases) - failures}/{len(cases)} cases pass")
    _write(out, json_report(manifest, cases))
    sys.exit(EXIT_FAIL if failures else EXIT_OK)


# -- optimize --------------------------------------------------------------------

_PENALTY_ALIASES = {"barycenter": "barycenter_squared", "phi": "phi_squared", "volume": "phi_squared_with_volume"}


@main.command()
@click.option("--rho", type=float, required=True)
@click.option("--beta", type=float, default=None, help="Defaults to rho.")
@click.option("--a", type=float, default=0.5, show_default=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--epsilon-frac", type=float, default=None, help="Fraction of the admissible epsilon cap.")
@click.option("--z0", type=float, default=None, help="Barycenter floor for the cap; defaults to gamma1(alpha).")
@click.option(
    "--penalty",
    type=click.Choice(list(PENALTIES) + list(_PENALTY_ALIASES)),
    default="phi_squared_with_volume",
    show_default=True,
)
@click.option("--components", type=int, default=2, show_default=True)
@click.option("--restarts", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON report path.")
@click.option("--history", "history_out", type=click.Path(dir_okay=False), default=None, help="History CSV path.")
def optimize(rho, beta, a, epsilon, epsilon_frac, z0, penalty, components, restarts, seed, out, history_out) -> None:
    """Maximize a penalized stability objective over interval unions."""
    if epsilon is not None and epsilon_frac is not None:
        raise click.UsageError("give --epsilon or --epsilon-frac, not both")
    penalty = _PENALTY_ALIASES.get(penalty, penalty)
    try:
        beta = rho if beta is None else beta
        cap = degenerate = None
        if epsilon_frac is not None:
            z0 = gamma1(alpha_of(a)) if z0 is None else z0
            cap, degenerate = epsilon_cap(rho, beta, a, z0)
            epsilon = epsilon_frac * cap
        spec = ObjectiveSpec(rho=rho, beta=beta, epsilon=epsilon or 0.0, a=a, penalty=penalty)
        config = SearchConfig(spec, components=components, restarts=restarts, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    try:
        res = maximize(config)
    except InfeasibleError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    hs_value = halfspace_objective(spec)
    params = dict(config.to_dict(), epsilon_cap=cap, cap_degenerate=degenerate)
    manifest = RunManifest("optimize", params, seed)
    outputs = _clean(
        {
            "best_set": format_set(res.best_set),
            "best_value": res.best_value,
            "halfspace_value": hs_value,
            "is_halfspace": res.is_halfspace,
            "converged": res.converged,
            "evaluations": res.evaluations,
        }
    )
    click.echo(f"best_set\t{outputs['best_set']}")
    click.echo(f"best_value\t{res.best_value:.17g}")
    click.echo(f"halfspace_value\t{hs_value:.17g}")
    click.echo(f"is_halfspace\t{str(res.is_halfspace).lower()}")
    _write(out, json_report(manifest, [{"inputs": _clean(spec.to_dict()), "outputs": outputs, "pass": True}]))
    if history_out:
        _write(history_out, "\n".join(manifest.csv_header()) + "\n" + res.history_csv())


# -- sweep -----------------------------------------------------------------------


def parse_grid(specs: tuple[str, ...]) -> dict[str, list[float]]:
    """``name=start:stop:count`` (inclusive linspace) or ``name=v1,v2,...``."""
    axes: dict[str, list[float]] = {}
    for spec in specs:
        name, sep, body = spec.partition("=")
        name = name.strip()
        if not sep or not name or not body.strip():
            raise click.BadParameter(f"malformed grid axis {spec!r}", param_hint="--grid")
        try:
            if ":" in body:
                start, stop, count = body.split(":")
                values = np.linspace(float(start), float(stop), int(count)).tolist()
            else:
                values = [float(v) for v in body.split(",") if v.strip()]
        except ValueError as exc:
            raise click.BadParameter(f"malformed grid axis {spec!r}", param_hint="--grid") from exc
        if not values:
            raise click.BadParameter(f"grid axis {name!r} is empty", param_hint="--grid")
        axes[name] = [round(v, 15) for v in values]
    if not axes:
        raise click.BadParameter("empty grid", param_hint="--grid")
    return axes


def _sweep_stability(s, axes):
    cols = ["set", "rho", "value", "error"]
    rows = []
    for rho in axes["rho"]:
        r = noise_stability(s, rho)
        rows.append([format_set(s), rho, r.value, r.error])
    return cols, rows


def _sweep_stability_form(s, axes):
    cols = ["set", "rho", "value", "closed_form", "lower_bound"]
    rows = []
    for rho in axes["rho"]:
        f = stability_form(s, rho)
        rows.append([format_set(s), rho, f.value, f.closed_form, stability_form_lower_bound(s, rho)])
    return cols, rows


def _sweep_deficit(s, axes):
    a = measure(s)
    z0 = abs(barycenter(s))
    betas = axes.get("beta")
    rows = []
    for rho in axes["rho"]:
        for beta in betas or [rho]:
            r = deficit_report(s, rho, beta, a, z0)
            rows.append(r.csv_row())
    return list(DeficitReport.CSV_COLUMNS), rows


SWEEPS = {"stability": _sweep_stability, "stability-form": _sweep_stability_form, "deficit": _sweep_deficit}
SWEEP_NOTES = {
    "stability": "value = P(X in set, Y in set); error = |order-24 - order-16| quadrature estimate",
    "stability-form": "value = boundary sum of rho S(1) - |dT|; lower_bound = rho(1-rho)min(a,1-a)/80 * max(gap, gap^2)",
    "deficit": "a = measure(set); z0 = |barycenter(set)|; beta defaults to rho",
}


@main.command()
@click.option("--what", type=click.Choice(list(SWEEPS)), required=True)
@click.option("--grid", "grid", multiple=True, help="Axis as name=start:stop:count or name=v1,v2 (repeatable).")
@click.option("--set", "set_text", default="[0,inf)", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path; stdout when omitted.")
def sweep(what: str, grid: tuple[str, ...], set_text: str, out: str | None) -> None:
    """Evaluate a quantity over a parameter grid and emit CSV."""
    axes = parse_grid(grid)
    if "rho" not in axes:
        raise click.BadParameter("grid needs a rho axis", param_hint="--grid")
    if any(not 0.0 <= r < 1.0 for r in axes["rho"]) or (what != "stability" and min(axes["rho"]) <= 0.0):
        raise click.BadParameter("rho values out of range", param_hint="--grid")
    s = _parse_set_or_exit(set_text)
    manifest = RunManifest("sweep", {"what": what, "grid": axes, "set": format_set(s)}, None)
    try:
        cols, rows = SWEEPS[what](s, axes)
    except ConvergenceError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    text = csv_report(manifest, cols, rows, [SWEEP_NOTES[what]])
    if out is None:
        click.echo(text, nl=False)
    else:
        _write(out, text)


if __name__ == "__main__":  # pragma: no cover
    main()
