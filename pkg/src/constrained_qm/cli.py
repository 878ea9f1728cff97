"""Command-line front end.

    constrained-qm [--config FILE] [--out DIR] [--set key=value ...] [--threads N] COMMAND

Commands: spectrum, classical, compare, residual, takens, validate, scenarios.
Configuration is a YAML file with one section per command plus a
``scenario`` section (``id`` and knob values); ``--set`` overrides any entry
by dotted path, e.g. ``--set scenario.a=2.0 --set compare.T=0.5``.

Exit codes: 0 success, 64 configuration error, 65 run rejected,
66 convergence threshold not met.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .classical import FunnelSpec, homogenized_potential, integrate_flat, takens_funnel
from .errors import ConfigurationError, ConstrainedQMError, GenericityError
from .quantum.approximant import residual_at
from .quantum.study import GridRules, check_hbar_list, convergence_study, fit_slope, plan_run
from .scenarios import SCENARIO_IDS, build_scenario, list_scenarios
from .transverse import (
    RellichModel,
    fd_eigensolve_1d,
    fd_eigensolve_2d,
    rellich_spectrum,
    sextic_qes_check,
)

EXIT_OK = 0
EXIT_CONFIG = 64
EXIT_REJECTED = 65
EXIT_THRESHOLD = 66

log = logging.getLogger("constrained_qm")

DEFAULTS = {
    "scenario": {"id": "standard"},
    "spectrum": {"s_min": -2.0, "s_max": 2.0, "count": 21, "n_max": 2, "spacing": 0.01, "angle": 0.0, "spacing_2d": 0.2},
    "classical": {"hbar": 1.0, "T": None, "dt": 1e-3},
    "compare": {
        "hbar_list": [0.08, 0.04, 0.02, 0.01],
        "T": None,
        "threshold": 0.45,
        "correction": False,
        "dt_factor": 0.02,
        "points_per_width": 4.0,
        "residual": True,
    },
    "residual": {"hbar_list": [0.08, 0.04, 0.02, 0.01], "t": None, "threshold": 1.3},
    "takens": {"a": 1.0, "splits": 7, "v_star": [0.3, 0.1], "T": 0.8, "dt": 1e-3},
    "validate": {"seed": 0},
    "output": {"record_runtime": False},
}


# ---------------------------------------------------------------------------
# configuration


def _set_dotted(cfg: dict, key: str, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"cannot set {key!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the YAML file, then ``key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError("the configuration file must hold a mapping")
        cfg = _merge(cfg, data)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse value for {key!r}: {exc}") from exc
        _set_dotted(cfg, key.strip(), value)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def scenario_from_config(cfg: dict):
    sec = dict(cfg.get("scenario") or {})
    sid = sec.pop("id", "standard")
    knobs = sec.pop("knobs", {}) or {}
    knobs.update(sec)
    return build_scenario(sid, knobs)


# ---------------------------------------------------------------------------
# output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


class Writer:
    """Header-stamped, write-then-rename output files."""

    def __init__(self, out_dir, cfg: dict, scenario_id: str):
        self.out = Path(out_dir)
        self.hash = config_hash(cfg)
        self.scenario_id = scenario_id
        self.written = []

    def header_lines(self):
        return [
            f"# constrained-qm {__version__}",
            f"# config-hash {self.hash}",
            f"# scenario {self.scenario_id}",
        ]

    def _commit(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.chmod(tmp, 0o644)
            os.replace(tmp, self.out / name)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(self.out / name)
        return self.out / name

    def csv(self, name: str, columns, rows):
        buf = io.StringIO()
        buf.write("\n".join(self.header_lines()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
        return self._commit(name, buf.getvalue())

    def json(self, name: str, payload: dict):
        # JSON has no comments, so the header travels as the first key
        doc = {"header": {"artifact": f"constrained-qm {__version__}", "config_hash": self.hash, "scenario": self.scenario_id}}
        doc.update(payload)
        text = json.dumps(_jsonable(doc), indent=2) + "\n"
        return self._commit(name, text)

    def plot(self, name: str, x, y):
        lines = self.header_lines() + ["# log10(hbar) log10(value)"]
        lines += [f"{fmt(a)} {fmt(b)}" for a, b in zip(x, y)]
        return self._commit(name, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg, writer, threads=1):
    sc = scenario_from_config(cfg)
    p = cfg["spectrum"]
    lo, hi, count = float(p["s_min"]), float(p["s_max"]), int(p["count"])
    if not hi > lo or count < 1:
        raise ConfigurationError("spectrum needs s_min < s_max and count >= 1")
    xs = np.linspace(lo, hi, count)
    nmax = int(p["n_max"])
    if sc.id == "rellich":
        levels = [(0, 0), (0, 1), (1, 0)]
        model = sc.model if sc.model is not None else RellichModel(sc.a)
        ang = float(p["angle"])
        cols = ["t", "x1", "x2"]
        for nn in levels:
            cols += [f"E{nn[0]}{nn[1]}_closed", f"E{nn[0]}{nn[1]}_numeric", f"E{nn[0]}{nn[1]}_diff"]
        rows = []
        for t in xs:
            x = np.array([t * np.cos(ang), t * np.sin(ang)])
            try:
                closed = [rellich_spectrum(model, x, *nn) for nn in levels]
                pairs = fd_eigensolve_2d(model.potential(x, cut=False), 3, spacing=float(p["spacing_2d"]))
            except ConstrainedQMError as exc:
                raise type(exc)(f"at x = ({x[0]:.6g}, {x[1]:.6g}): {exc}") from exc
            # match numeric levels to closed forms by ordering
            num = sorted(pe.energy for pe in pairs)
            order = np.argsort(closed)
            matched = np.empty(3)
            matched[order] = num
            row = [t, x[0], x[1]]
            for c, m in zip(closed, matched):
                row += [c, m, m - c]
            rows.append(row)
        writer.csv("spectrum.csv", cols, rows)
        return EXIT_OK
    if sc.profile is None:
        raise ConfigurationError(f"scenario {sc.id!r} has no transverse profile")
    prof = sc.profile
    cols = ["s"]
    for n in range(nmax + 1):
        cols += [f"E{n}_closed", f"E{n}_numeric", f"E{n}_diff"]
    rows = []
    frame = prof.frame
    if sc.chart is not None:
        s0, s1 = sc.chart.s_interval
        if lo < s0 or hi > s1:
            raise ConfigurationError(f"spectrum range leaves the chart interval [{s0:.6g}, {s1:.6g}]")
    for s in xs:
        try:
            if hasattr(prof, "omega"):
                w = float(prof.omega(np.array([s]))[0][0])
                q = frame.position(np.array([s]))
                nrm = frame.normal(np.array([s]))
                k2 = float(np.einsum("...i,...ij,...j->...", nrm, sc.W.hessian(q), nrm)[0])
                V = 0.0 if prof.V_field is None else float(prof.V_field(q)[0])
                pot = lambda u, k2=k2: 0.5 * k2 * u**2 / sc.a**2  # noqa: E731
                closed = [(n + 0.5) * w / sc.a + V for n in range(nmax + 1)]
                kin = 0.5
            else:
                V = 0.0 if prof.V_field is None else float(prof.V_field(np.array([[s, 0.0]]))[0])
                pot = sc.transverse_potential
                closed = [float("nan")] * (nmax + 1)
                closed[0] = sextic_qes_check(sc.knobs["V4"], sc.knobs["V6"], "half").closed_form_energy + V
                kin = 0.5
            pairs = fd_eigensolve_1d(pot, nmax + 1, spacing=float(p["spacing"]), kinetic=kin)
        except ConstrainedQMError as exc:
            raise type(exc)(f"at s = {s:.6g}: {exc}") from exc
        row = [s]
        for n in range(nmax + 1):
            num = pairs[n].energy + V
            row += [closed[n], num, num - closed[n]]
        rows.append(row)
    writer.csv("spectrum.csv", cols, rows)
    return EXIT_OK


def cmd_classical(cfg, writer, threads=1):
    sc = scenario_from_config(cfg)
    p = cfg["classical"]
    if sc.profile is None:
        raise ConfigurationError(f"scenario {sc.id!r} has no effective potential on a curve")
    T = sc.T if p.get("T") is None else float(p["T"])
    init = sc.initial_data()
    E = sc.profile.energy_field(float(p["hbar"]))
    traj = integrate_flat(E, [init.a], [init.eta], T, float(p["dt"]), A0=[[init.A]], B0=[[init.B]], domain=sc.classical_domain)
    names, data = traj.columns()
    names = names + ["energy_drift", "condition_residual"]
    data = np.column_stack([data, traj.energy_drift, traj.condition_residuals()])
    writer.csv("classical.csv", names, data.tolist())
    return EXIT_OK


def _rules(p) -> GridRules:
    return GridRules(points_per_width=float(p["points_per_width"]), dt_factor=float(p["dt_factor"]))


def sextic_summary(V4: float, V6: float) -> dict:
    """Both kinetic conventions of the sextic ground-state check, side by side."""
    out = {}
    for c in ("unit", "half"):
        v = sextic_qes_check(V4, V6, c)
        out[c] = {
            "closed_form_energy": v.closed_form_energy,
            "numeric_energy": v.numeric_energy,
            "condition_satisfied": v.qes_condition_satisfied,
            "condition_residual": v.condition_residual,
        }
    return out


def cmd_compare(cfg, writer, threads=1):
    sc = scenario_from_config(cfg)
    p = cfg["compare"]
    hbars = check_hbar_list(p["hbar_list"])
    if not sc.runnable:
        raise ConfigurationError(f"scenario {sc.id!r} cannot be propagated on a 2D grid")
    res = convergence_study(
        sc,
        hbars,
        None if p.get("T") is None else float(p["T"]),
        _rules(p),
        float(p["threshold"]),
        bool(p["correction"]),
        int(threads),
        with_residual=bool(p.get("residual", True)),
    )
    keep_runtime = bool(cfg["output"].get("record_runtime", False))
    rows = []
    for r in res.records:
        row = r.row()
        if not keep_runtime:
            row[-1] = float("nan")
        rows.append(row)
    writer.csv("convergence.csv", list(r.CSV_COLUMNS), rows)
    summary = res.to_dict()
    if not keep_runtime:
        for rec in summary["records"]:
            rec["runtime_seconds"] = None
    if sc.id == "sextic":
        summary["sextic_conventions"] = sextic_summary(sc.knobs["V4"], sc.knobs["V6"])
    writer.json("summary.json", summary)
    writer.plot("plot_data.dat", np.log10(hbars), np.log10([r.l2_error_phase_opt for r in res.records]))
    log.info("slope %.4f (threshold %.3g)", res.slope, res.threshold)
    print(f"slope {res.slope:.6f} threshold {res.threshold:g} {'pass' if res.passed else 'fail'}")
    return EXIT_OK if res.passed else EXIT_THRESHOLD


def cmd_residual(cfg, writer, threads=1):
    sc = scenario_from_config(cfg)
    p = cfg["residual"]
    hbars = check_hbar_list(p["hbar_list"])
    if not sc.runnable:
        raise ConfigurationError(f"scenario {sc.id!r} has no approximant")
    t = sc.T if p.get("t") is None else float(p["t"])
    init = sc.initial_data()
    rows = []
    on, off = [], []
    for h in hbars:
        plan = plan_run(sc, h, max(t, 1e-12))
        pot = lambda q, h=h: sc.potential(q, h)  # noqa: E731
        E = sc.profile.energy_field(h)
        r_on = residual_at(sc.profile, pot, E, init, t, h, plan.cut, correction=True)
        r_off = residual_at(sc.profile, pot, E, init, t, h, plan.cut, correction=False)
        on.append(r_on)
        off.append(r_off)
        rows.append([h, r_on, r_off])
    s_on, _, _ = fit_slope(hbars, on)
    s_off, _, _ = fit_slope(hbars, off)
    writer.csv("residual.csv", ["hbar", "residual_norm", "residual_norm_uncorrected"], rows)
    writer.json(
        "residual_summary.json",
        {"hbar_list": hbars, "t": t, "slope": s_on, "slope_uncorrected": s_off, "threshold": float(p["threshold"])},
    )
    writer.plot("residual_plot_data.dat", np.log10(hbars), np.log10(on))
    print(f"slope {s_on:.6f} (uncorrected {s_off:.6f}) threshold {float(p['threshold']):g}")
    return EXIT_OK if s_on >= float(p["threshold"]) else EXIT_THRESHOLD


def cmd_takens(cfg, writer, threads=1):
    p = cfg["takens"]
    a = float(p["a"])
    total = 1.0 / a
    n = int(p["splits"])
    if n < 2:
        raise ConfigurationError("takens needs at least two splits")
    v_star = np.asarray(p["v_star"], dtype=float)
    T = float(p["T"])
    dt = float(p["dt"])
    rows = []
    cols = ["split", "theta_plus", "theta_minus", "t", "x1", "x2", "v1", "v2", "energy", "energy_drift"]
    fractions = np.linspace(0.0, 1.0, n)
    try:
        for i, f in enumerate(fractions):
            spec = FunnelSpec(f * total, (1 - f) * total, tuple(v_star), T)
            tr = takens_funnel(spec, dt)
            for j in range(len(tr.times)):
                rows.append([i, spec.theta_plus, spec.theta_minus, tr.times[j], *tr.a[j], *tr.eta[j], tr.energy[j], tr.energy_drift[j]])
        q = FunnelSpec(0.5 * total, 0.5 * total, tuple(v_star), T)
        tr = takens_funnel(q, dt)
    except GenericityError as exc:
        raise ConfigurationError(str(exc)) from exc
    for j in range(len(tr.times)):
        rows.append(["quantum", q.theta_plus, q.theta_minus, tr.times[j], *tr.a[j], *tr.eta[j], tr.energy[j], tr.energy_drift[j]])
    writer.csv("takens.csv", cols, rows)
    # the equal split reproduces the gradient of the quantum ground level E_00
    rng = np.random.default_rng(int(cfg["validate"].get("seed", 0)))
    pts = rng.uniform(-0.35, 0.35, size=(32, 2))
    U = homogenized_potential(q.theta_plus, q.theta_minus)
    model = RellichModel(a)
    h = 1e-6
    gE = np.array(
        [
            [
                (rellich_spectrum(model, x + h * e, 0, 0) - rellich_spectrum(model, x - h * e, 0, 0)) / (2 * h)
                for e in np.eye(2)
            ]
            for x in pts
        ]
    )
    diff = float(np.max(np.abs(U.gradient(pts) - gE)))
    writer.json("takens_summary.json", {"splits": n, "theta_sum": total, "quantum_selection_gradient_max_diff": diff})
    return EXIT_OK


def cmd_validate(cfg, writer, threads=1):
    sc = scenario_from_config(cfg)
    rep = sc.validate()
    payload = rep.to_dict()
    payload["tags"] = list(sc.tags)
    writer.json("validate.json", payload)
    print(json.dumps(_jsonable({"scenario": sc.id, "passed": rep.passed, "tags": list(sc.tags)})))
    return EXIT_OK


def cmd_scenarios(cfg, writer, threads=1):
    cat = list_scenarios()
    writer.json("scenarios.json", {"scenarios": cat})
    for entry in cat:
        print(f"{entry['id']:<14} {entry['description']}")
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "classical": cmd_classical,
    "compare": cmd_compare,
    "residual": cmd_residual,
    "takens": cmd_takens,
    "validate": cmd_validate,
    "scenarios": cmd_scenarios,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="constrained-qm", description="Constrained quantum motion: semiclassical packets vs grid reference.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML configuration file")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config entry by dotted path")
    ap.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        cfg = load_config(args.config, args.overrides)
        sid = (cfg.get("scenario") or {}).get("id", "standard")
        if args.command not in ("takens", "scenarios") and sid not in SCENARIO_IDS:
            raise ConfigurationError(f"unknown scenario {sid!r}")
        writer = Writer(args.out, cfg, sid if args.command != "takens" else "takens")
        return COMMANDS[args.command](cfg, writer, args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConstrainedQMError):
            print(f"run rejected: {exc}", file=sys.stderr)
            return EXIT_REJECTED
        print(f"configuration error: {exc!r}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstrainedQMError as exc:
        msg = str(exc)
        t = getattr(exc, "time", None)
        if t is not None:
            msg += f" (exit time {t:.17g})"
        print(f"run rejected: {msg}", file=sys.stderr)
        return EXIT_REJECTED


if __name__ == "__main__":
    sys.exit(main())
