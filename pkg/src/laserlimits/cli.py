"""Command-line interface.

Every command writes one table, as CSV (``#``-prefixed header lines followed
by comma-separated rows) or JSON (``{"header": ..., "data": [...]}``). The
header carries the tool version and the fully resolved configuration.

Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .diagnostics import CHAIN_OUTPUTS, LimitInputs, predicted_linewidth, schawlow_townes_chain
from .dynamics import (
    ATOL,
    RTOL,
    default_omega_grid,
    g1_series,
    measure_linewidth,
    power_spectrum,
    slowest_decay_rate,
    stationary_distribution,
)
from .errors import InputError, NumericalError
from .fock import TAIL_TOL, moments
from .models import ModelKind, make_model, sideband_block
from .trajectories import TrajectoryConfig, ensemble_stats, run_ensemble

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
KAPPA_UNITS = "times in 1/kappa, rates and frequencies in kappa (kappa = 1)"
SI_UNITS = "SI: angular frequencies in rad/s, power in W"


class CliError(InputError):
    def __init__(self, flag, message):
        super().__init__(f"{flag}: {message}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _jsonable(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def render(header: dict, columns: list, rows: list, fmt: str) -> str:
    if fmt == "json":
        data = [{c: _jsonable(v) for c, v in zip(columns, row)} for row in rows]
        head = {k: _jsonable(v) for k, v in header.items()}
        return json.dumps({"header": head, "data": data}, indent=1) + "\n"
    buf = io.StringIO()
    for k, v in header.items():
        val = json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else _fmt(v)
        buf.write(f"# {k}: {val}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_output(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _model_from_args(args, mu=None, phi=None):
    mu = args.mu if mu is None else mu
    if mu is None or not mu > 0:
        raise CliError("--mu", f"must be > 0, got {mu}")
    kind = ModelKind(args.model)
    eps = getattr(args, "epsilon", None)
    if phi is None:
        phi = getattr(args, "phi", None)
    if kind is ModelKind.MICROMASER:
        if (eps is None) == (phi is None):
            raise CliError("--epsilon/--phi", "micromaser needs exactly one of them")
    elif eps is not None or phi is not None:
        raise CliError("--epsilon/--phi", f"only valid with --model micromaser")
    if args.nmax is not None and args.nmax < 1:
        raise CliError("--nmax", "must be >= 1")
    return make_model(kind, mu, epsilon=eps, phi=phi, n_max=args.nmax)


def _header(args, model=None, units=KAPPA_UNITS, **extra):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    h = {"tool": "laserlimits", "version": __version__, "command": args.command, "config": cfg}
    if model is not None:
        h["model"] = model.kind.value
        h["mu"] = model.mu
        h["n_max"] = model.n_max
        if model.epsilon is not None:
            h["epsilon"] = model.epsilon
            h["phi"] = model.phi
    h["tolerances"] = {"tail": TAIL_TOL, "ode_rtol": RTOL, "ode_atol": ATOL}
    h["units"] = units
    h.update(extra)
    return h


def _time_grid(args, rate):
    if args.tmax is None and args.dt is None:
        return None
    tmax = args.tmax if args.tmax is not None else 8.0 / rate
    dt = args.dt if args.dt is not None else tmax / 512
    if not tmax > 0:
        raise CliError("--tmax", "must be > 0")
    if not dt > 0:
        raise CliError("--dt", "must be > 0")
    return np.linspace(0.0, tmax, int(round(tmax / dt)) + 1)


def cmd_stationary(args):
    model = _model_from_args(args)
    dist = stationary_distribution(model)
    mom = moments(dist)
    header = _header(args, model, mean=mom.mean, variance=mom.variance, fano=mom.fano)
    rows = [(n, p) for n, p in enumerate(dist.p)]
    return header, ["n", "P_n"], rows


LINEWIDTH_COLUMNS = [
    "model", "mu", "phi", "n_max", "predicted", "eigen_fwhm", "spectrum_fwhm", "fit_fwhm",
    "dev_eigen", "dev_spectrum", "dev_fit",
]


def linewidth_row(model):
    rep = measure_linewidth(model)
    pred = predicted_linewidth(model)
    return (
        model.kind.value, model.mu, model.phi, model.n_max, pred,
        rep.eigen_fwhm, rep.spectrum_fwhm, rep.fit_fwhm,
        rep.eigen_fwhm / pred - 1, rep.spectrum_fwhm / pred - 1, rep.fit_fwhm / pred - 1,
    )


def cmd_linewidth(args):
    model = _model_from_args(args)
    return _header(args, model), LINEWIDTH_COLUMNS, [linewidth_row(model)]


def _sweep_point(payload):
    kind, mu, phi, eps, nmax = payload
    return linewidth_row(make_model(kind, mu, phi=phi, epsilon=eps, n_max=nmax))


def cmd_sweep(args):
    if (args.phis is None) == (args.mus is None):
        raise CliError("--phis/--mus", "give exactly one sweep list")
    values = args.phis if args.phis is not None else args.mus
    if not values:
        raise CliError("--phis" if args.phis is not None else "--mus", "sweep list is empty")
    points = []
    for v in values:
        if args.phis is not None:
            model = _model_from_args(args, phi=v)
        else:
            model = _model_from_args(args, mu=v)
        points.append((model.kind.value, model.mu, model.phi, None, args.nmax))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, points))
    else:
        rows = [_sweep_point(p) for p in points]
    return _header(args), LINEWIDTH_COLUMNS, rows


def cmd_traj(args):
    model = _model_from_args(args)
    if not args.duration > 0:
        raise CliError("--duration", "must be > 0")
    if args.seeds < 2:
        raise CliError("--seeds", "need at least 2 trajectories")
    if not 0 <= args.burn_in < args.duration:
        raise CliError("--burn-in", "must lie in [0, duration)")
    cfg = TrajectoryConfig(model, args.duration, seed=args.seed, sample_dt=args.sample_dt,
                           epsilon=args.pass_epsilon)
    records = run_ensemble(cfg, args.seeds, workers=args.workers)
    st = ensemble_stats(records, args.burn_in)
    header = _header(
        args, model,
        pass_epsilon=cfg.pass_epsilon,
        mean=st.mean, mean_se=st.mean_se, fano=st.fano, fano_se=st.fano_se,
        atoms=st.atoms, chi2=st.chi2, chi2_p=st.chi2_p,
    )
    rows = [
        (lo, hi, obs, exp)
        for lo, hi, obs, exp in zip(st.k_edges[:-1], st.k_edges[1:], st.k_observed, st.k_expected)
    ]
    return header, ["k_lo", "k_hi", "observed", "expected"], rows


def _read_limits_file(path):
    with open(path) as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        out = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
        return out


def cmd_limits(args):
    values = {}
    if args.input:
        values.update(_read_limits_file(args.input))
    for name in LimitInputs.field_names():
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    unknown = set(values) - set(LimitInputs.field_names())
    if unknown:
        raise CliError("--input", f"unknown fields {sorted(unknown)}")
    try:
        inputs = LimitInputs(**{k: float(v) for k, v in values.items()})
    except ValueError as exc:
        raise CliError("--input", str(exc)) from exc
    want = tuple(args.want.split(",")) if args.want else CHAIN_OUTPUTS
    result = schawlow_townes_chain(inputs, want)
    return _header(args, units=SI_UNITS), ["quantity", "value"], list(result.items())


def cmd_g1(args):
    model = _model_from_args(args)
    rate = slowest_decay_rate(sideband_block(model, 1, "f"))
    series = g1_series(model, _time_grid(args, rate))
    rows = [(t, g.real, g.imag) for t, g in zip(series.tau, series.g1)]
    return _header(args, model), ["tau", "g1_re", "g1_im"], rows


def cmd_spectrum(args):
    model = _model_from_args(args)
    rate = slowest_decay_rate(sideband_block(model, 1, "f"))
    series = g1_series(model, _time_grid(args, rate))
    if args.wmax is not None:
        if not args.wmax > 0:
            raise CliError("--wmax", "must be > 0")
        omega = np.linspace(-args.wmax, args.wmax, args.nw)
    else:
        omega = default_omega_grid(rate, points=args.nw)
    spec = power_spectrum(series, omega)
    header = _header(args, model, fwhm=spec.fwhm, fit_decay=spec.fit_decay,
                     predicted=predicted_linewidth(model))
    return header, ["omega", "power"], list(zip(spec.omega, spec.power))


def _float_list(text):
    if text.strip() == "":
        return []
    return [float(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laserlimits", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", default=None, help="output file (default stdout)")
    out.add_argument("--format", choices=("csv", "json"), default="csv")

    mdl = argparse.ArgumentParser(add_help=False)
    mdl.add_argument("--model", choices=[k.value for k in ModelKind], default="standard")
    mdl.add_argument("--mu", type=float, default=None, required=True)
    grp = mdl.add_mutually_exclusive_group()
    grp.add_argument("--epsilon", type=float, default=None)
    grp.add_argument("--phi", type=float, default=None)
    mdl.add_argument("--nmax", type=int, default=None)

    swp = argparse.ArgumentParser(add_help=False)
    swp.add_argument("--model", choices=[k.value for k in ModelKind], default="standard")
    swp.add_argument("--mu", type=float, default=None)
    swp.add_argument("--epsilon", type=float, default=None)
    swp.add_argument("--nmax", type=int, default=None)

    tgrid = argparse.ArgumentParser(add_help=False)
    tgrid.add_argument("--tmax", type=float, default=None)
    tgrid.add_argument("--dt", type=float, default=None)

    s = sub.add_parser("stationary", parents=[mdl, out], help="stationary photon distribution")
    s.set_defaults(func=cmd_stationary)
    s = sub.add_parser("linewidth", parents=[mdl, out], help="linewidth by eigenvalue and spectrum")
    s.set_defaults(func=cmd_linewidth)
    s = sub.add_parser("sweep", parents=[swp, out], help="linewidth over a phi or mu list")
    s.add_argument("--phis", type=_float_list, default=None)
    s.add_argument("--mus", type=_float_list, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("traj", parents=[mdl, out], help="quantum-jump trajectory ensemble")
    s.add_argument("--seeds", type=int, default=100, help="number of trajectories")
    s.add_argument("--seed", type=int, default=0, help="base RNG seed")
    s.add_argument("--duration", type=float, default=200.0)
    s.add_argument("--burn-in", type=float, default=20.0)
    s.add_argument("--sample-dt", type=float, default=1.0)
    s.add_argument("--pass-epsilon", type=float, default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_traj)
    s = sub.add_parser("limits", parents=[out], help="Schawlow-Townes refinement chain (SI)")
    s.add_argument("--input", default=None, help="JSON or key=value file")
    for name in LimitInputs.field_names():
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)
    s.add_argument("--want", default=None, help="comma list of " + ",".join(CHAIN_OUTPUTS))
    s.set_defaults(func=cmd_limits)
    s = sub.add_parser("g1", parents=[mdl, tgrid, out], help="first-order coherence g1(tau)")
    s.set_defaults(func=cmd_g1)
    s = sub.add_parser("spectrum", parents=[mdl, tgrid, out], help="power spectrum and FWHM")
    s.add_argument("--wmax", type=float, default=None)
    s.add_argument("--nw", type=int, default=2001)
    s.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        header, columns, rows = args.func(args)
        text = render(header, columns, rows, args.format)
        write_output(text, args.out)
    except InputError as exc:
        print(f"laserlimits {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"laserlimits {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"laserlimits {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
