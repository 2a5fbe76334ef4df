"""Command-line front end: ``oscmult <command> --config run.ini --out DIR``.

A run config is an INI file with blocks ``[space]``, ``[multiplier]``,
``[numerics]``, ``[group]`` and ``[task]``.  Every run writes
``manifest.json`` echoing the resolved config and its hash next to the
CSV/JSON artifacts.  Exit codes: 0 success, 1 usage error, 2 numerical
quality failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import ModelPoint, make_space
from .groups import (
    GroupValidationError,
    TailUnboundedError,
    classify,
    critical_exponent_estimate,
    enumerate_orbit,
    group_from_block,
    poincare_partial,
    quotient_wave_kernel,
)
from .kernels import (
    WaveKernelSpec,
    decay_check_q1,
    kernel_table_csv,
    l1_scaling_fit,
    oscillating_kernel,
    subordination_assemble,
    wave_kernel,
)
from .kunze_stein import certify, far_kernel, ks_total, shells_to_csv
from .multipliers import MultiplierSpec, smoothness_order
from .special import ConvergenceError
from .transform import (
    RADIAL_TEST_FUNCTIONS,
    RadialGrid,
    forward_transform,
    radial_to_csv,
    roundtrip,
    spectral_nodes,
    spectral_to_csv,
)

log = logging.getLogger("oscmult")

EXIT_OK, EXIT_USAGE, EXIT_QUALITY = 0, 1, 2
COMMANDS = ("transform", "kernel", "decay", "l1scaling", "subordination", "ksbound", "certify", "group")


class UsageError(Exception):
    pass


class QualityError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config ------------------------------------------------------------------


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        # configparser messages carry the offending line number
        raise UsageError(str(exc)) from None
    return cp


def _block(cp, name):
    if not cp.has_section(name):
        raise UsageError(f"config has no [{name}] block")
    return cp[name]


def _float(sec, key, default=None):
    if key not in sec:
        if default is None:
            raise UsageError(f"[{sec.name}] needs '{key}'")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise UsageError(f"[{sec.name}] {key} = {sec[key]!r} is not a number") from None


def _floats(sec, key, default=None):
    if key not in sec:
        if default is None:
            raise UsageError(f"[{sec.name}] needs '{key}'")
        return list(default)
    try:
        return [float(v) for v in sec[key].replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"[{sec.name}] {key} must be a list of numbers") from None


def _bool(sec, key, default=False):
    if key not in sec:
        return default
    try:
        return sec.getboolean(key)
    except ValueError:
        raise UsageError(f"[{sec.name}] {key} must be true or false") from None


def space_from(cp):
    sec = _block(cp, "space")
    if "family" not in sec:
        raise UsageError("[space] needs 'family'")
    try:
        k = int(sec["k"]) if "k" in sec else None
        return make_space(sec["family"], k)
    except ValueError as exc:
        raise UsageError(f"[space] {exc}") from None


def multiplier_from(cp, rho):
    sec = _block(cp, "multiplier")
    beta = complex(_float(sec, "beta_re", 0.0), _float(sec, "beta_im", 0.0))
    try:
        return MultiplierSpec(_float(sec, "alpha"), beta, rho)
    except ValueError as exc:
        raise UsageError(f"[multiplier] {exc}") from None


_NUMERICS_DEFAULTS = {"lambda_max": 200.0, "t_max": 12.0, "tol": 1e-6, "eps": 1e-3}


def numerics_from(cp):
    if not cp.has_section("numerics"):
        return dict(_NUMERICS_DEFAULTS)
    sec = cp["numerics"]
    return {k: _float(sec, k, d) for k, d in _NUMERICS_DEFAULTS.items()}


def task_from(cp):
    return cp["task"] if cp.has_section("task") else cp["DEFAULT"]


def resolved(cp) -> dict:
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def config_hash(cp) -> str:
    blob = json.dumps(resolved(cp), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# -- output helpers ----------------------------------------------------------


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    return str(x)


def _check_quality(report, key, limit):
    val = report.get(key)
    if val is None or not math.isfinite(val) or val > limit:
        raise QualityError(f"{key} = {val} exceeds {limit:.1e}")


# -- commands ----------------------------------------------------------------


def cmd_transform(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    num = numerics_from(cp)
    task = task_from(cp)
    names = task.get("functions", "gauss").split()
    report = {"space": sp.label, "functions": {}}
    worst = 0.0
    for name in names:
        if name not in RADIAL_TEST_FUNCTIONS:
            raise UsageError(f"unknown test function {name!r}; choose from {sorted(RADIAL_TEST_FUNCTIONS)}")
        tf = RADIAL_TEST_FUNCTIONS[name]
        ts = np.linspace(0.0, min(tf.t_max, 4.0), 41)
        lam_max = tf.lambda_max
        lams, _ = spectral_nodes(lam_max, float(ts.max()), phase_rate=0.0)
        fwd = forward_transform(sp, tf.fn, lams, t_max=tf.t_max, threads=threads)
        back = roundtrip(sp, tf.fn, ts, lambda_max=lam_max, t_max=tf.t_max, threads=threads)
        ref = tf.fn(ts)
        err = float(np.max(np.abs(back - ref)) / np.max(np.abs(ref)))
        worst = max(worst, err)
        spectral_to_csv(fwd, out / f"forward_{name}.csv", header_note=f"spherical transform of {name}; lambda in inverse distance units")
        radial_to_csv(RadialGrid(ts, back), out / f"inverse_{name}.csv", header_note=f"round trip of {name}; t in distance units")
        report["functions"][name] = {"roundtrip_rel_err": err, "lambda_max": lam_max, "t_max": tf.t_max}
    report["roundtrip_rel_err"] = worst
    report["tol"] = num["tol"]
    _write_json(out / "transform_report.json", report)
    _check_quality(report, "roundtrip_rel_err", num["tol"])
    return report


def cmd_kernel(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    num = numerics_from(cp)
    task = task_from(cp)
    ts = np.array(_floats(task, "ts", [0.5, 1.0, 2.0, 4.0]))
    kind = task.get("kind", "wave")
    far_from = _float(task, "far_from", math.inf)
    far = None if math.isinf(far_from) else far_from
    if kind == "wave":
        res = wave_kernel(WaveKernelSpec(sp, _float(task, "sigma", 1.0), _float(task, "alpha", 1.0)), ts, far_from=far, threads=threads)
        note = "q_sigma damped wave kernel (wave kernel definition); t in distance units"
    elif kind == "oscillating":
        spec = multiplier_from(cp, sp.rho)
        res = oscillating_kernel(sp, spec, ts, eps=num["eps"], lambda_max=num["lambda_max"], far_from=far, threads=threads)
        note = "kappa_alpha_beta oscillating kernel (operatorX1); t in distance units"
    else:
        raise UsageError(f"[task] kind must be wave or oscillating, got {kind!r}")
    env = np.abs(res.grid.values) * (res.grid.t_nodes + 1) ** 1.5 * np.exp(2 * sp.rho * res.grid.t_nodes)
    kernel_table_csv(out / f"kernel_{kind}.csv", res.grid, envelope_ratio=env, header_note=note)
    rel = res.error / np.maximum(np.abs(res.grid.values), 1e-300)
    report = {"kind": kind, "space": sp.label, "max_rel_error": float(rel.max()), "tol": num["tol"]}
    _write_json(out / "kernel_report.json", report)
    _check_quality(report, "max_rel_error", max(num["tol"], 1e-3))
    return report


def cmd_decay(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    task = task_from(cp)
    sigmas = _floats(task, "sigmas", [1.0])
    lo, hi = _float(task, "t_lo", 2.0), _float(task, "t_hi", 8.0)
    rate = _float(task, "weight_rate", 2 * sp.rho)
    rows = {}
    for s in sigmas:
        rep = decay_check_q1(sp, s, (lo, hi), weight_rate=rate)
        rows[repr(s)] = {
            "sup": rep.sup,
            "stable": rep.stable,
            "stabilized_at": rep.stabilized_at,
            "usable_t_max": rep.usable_t_max,
            "growth_ratio": rep.growth_ratio,
        }
        grid = RadialGrid(rep.t, rep.normalized)
        kernel_table_csv(
            out / f"decay_sigma_{s:g}.csv", grid, envelope_ratio=rep.running_sup,
            header_note=f"q1 normalized |q_sigma|(t+1)^1.5 e^(w t), w={rate:g}; re column holds the normalized value",
        )
    report = {"space": sp.label, "weight_rate": rate, "sigmas": rows}
    _write_json(out / "decay_report.json", report)
    if not all(r["stable"] for r in rows.values()):
        raise QualityError("running sup did not stabilize for every sigma")
    return report


def cmd_l1scaling(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    task = task_from(cp)
    sigmas = _floats(task, "sigmas", list(np.geomspace(0.0125, 0.125, 6)))
    slope, results = l1_scaling_fit(sp, sigmas, threads=threads)
    target = (1 - sp.n) / 2
    path = out / "l1_scaling.csv"
    with open(path, "w") as fh:
        fh.write("# q_sigmaest L1 norm of q_sigma; sigma dimensionless\n")
        fh.write("sigma,l1_norm,body,tail_estimate,tail_bound\n")
        for r in results:
            fh.write(f"{r.sigma!r},{r.value!r},{r.body!r},{r.tail_estimate!r},{r.tail_bound!r}\n")
    report = {"space": sp.label, "slope": slope, "expected": target, "within_0.15": abs(slope - target) <= 0.15}
    _write_json(out / "l1_report.json", report)
    return report


def cmd_subordination(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    spec = multiplier_from(cp, sp.rho)
    num = numerics_from(cp)
    task = task_from(cp)
    ts = np.array(_floats(task, "ts", [0.5, 2.0]))
    sub = subordination_assemble(sp, spec.alpha, spec.beta, ts, threads=threads)
    direct = oscillating_kernel(sp, spec, ts, eps=num["eps"], threads=threads)
    rel = np.abs(sub.value - direct.grid.values) / np.abs(direct.grid.values)
    with open(out / "subordination.csv", "w") as fh:
        fh.write("# Ta,b subordination vs direct inversion; t in distance units\n")
        fh.write("t,direct_re,direct_im,sub_re,sub_im,rel_diff\n")
        for t, d, s, r in zip(ts, direct.grid.values, sub.value, rel):
            fh.write(f"{t!r},{d.real!r},{d.imag!r},{s.real!r},{s.imag!r},{r!r}\n")
    report = {"space": sp.label, "max_rel_diff": float(rel.max()), "tol": 1e-3}
    _write_json(out / "subordination_report.json", report)
    _check_quality(report, "max_rel_diff", 1e-3)
    return report


def cmd_ksbound(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    spec = multiplier_from(cp, sp.rho)
    num = numerics_from(cp)
    task = task_from(cp)
    p = _float(task, "p", 2.0)
    eta = _float(task, "eta_ratio", 1.0)
    j_max = int(_float(task, "j_max", 40.0))
    if j_max < 15:
        raise UsageError(f"[task] j_max = {j_max} is below the 15 shells the decay fit needs")
    N = smoothness_order(sp.n, 1 - spec.alpha) if spec.alpha < 1 else None
    kinf = far_kernel(sp, spec, j_max, eps=num["eps"], threads=threads)
    res = ks_total(sp, kinf, p, eta, j_max, N)
    shells_to_csv(out / "shells.csv", res.shells, header_note=f"cocentric shells I_j, p={p:g}, eta_ratio={eta:g}")
    fit = res.fit
    report = {
        "space": sp.label,
        "I_total": res.I_total,
        "partial_sum": res.partial_sum,
        "tail_bound": res.tail_bound,
        "converged": res.converged,
        "power_slope": fit.power_slope if fit else None,
        "exp_rate": fit.exp_rate if fit else None,
        "decay_ok": fit.ok if fit else None,
    }
    _write_json(out / "ksbound_report.json", report)
    if not res.converged:
        raise QualityError("Kunze-Stein shell sum did not converge")
    return report


def cmd_certify(cp, out: Path, threads: int, rng) -> dict:
    sp = space_from(cp)
    spec = multiplier_from(cp, sp.rho)
    task = task_from(cp)
    flags = {"delta_lt_2rho": _bool(task, "delta_lt_2rho"), "ct": _bool(task, "ct")}
    cert = certify(sp, spec, _float(task, "p", 2.0), _float(task, "eta_ratio", 1.0), flags)
    (out / "certificate.json").write_text(cert.to_json() + "\n")
    return json.loads(cert.to_json())


def _point(text, dim):
    try:
        coords = tuple(float(v) for v in text.replace(",", " ").split())
        pt = ModelPoint(coords)
    except ValueError as exc:
        raise UsageError(f"[group] bad point {text!r}: {exc}") from None
    if pt.dim != dim:
        raise UsageError(f"[group] point {text!r} does not live in H^{dim}")
    return pt


def cmd_group(cp, out: Path, threads: int, rng) -> dict:
    sec = _block(cp, "group")
    try:
        g, L = group_from_block(dict(sec))
    except (ValueError, GroupValidationError) as exc:
        raise UsageError(f"[group] {exc}") from None
    default_pt = "0 1" if g.model_dim == 2 else "0 0 1"
    x = _point(sec.get("x", default_pt), g.model_dim)
    y = _point(sec.get("y", sec.get("x", default_pt)), g.model_dim)
    task = task_from(cp)
    mode = task.get("mode", "poincare")
    orbit = enumerate_orbit(g, x, y, L)
    orbit.to_csv(out / "orbit.csv")
    report = {"mode": mode, "kind": g.kind.value, "L": L, "words": int(orbit.distances.size)}
    if mode == "poincare":
        s = _float(task, "s", 1.0)
        report.update(poincare_partial(orbit, s), s=s)
    elif mode == "delta":
        est = critical_exponent_estimate(orbit)
        sp = space_from(cp) if cp.has_section("space") else None
        cls = classify(g, orbit, _bool(task, "ct"), sp=sp, estimate=est)
        report.update(
            delta_hat=est.delta_hat, ci=est.ci, two_rho=cls.two_rho,
            delta_lt_2rho=cls.delta_lt_2rho, ct_flag=cls.ct_flag, note=cls.divergence_note,
            truncation_warning=est.truncation_warning,
        )
    elif mode == "quotient":
        sp = space_from(cp)
        q = quotient_wave_kernel(g, sp, _float(task, "sigma", 1.0), x, y, L)
        report.update(q)
    else:
        raise UsageError(f"[task] mode must be poincare, delta or quotient, got {mode!r}")
    _write_json(out / f"group_{mode}.json", report)
    return report


HANDLERS = {
    "transform": cmd_transform,
    "kernel": cmd_kernel,
    "decay": cmd_decay,
    "l1scaling": cmd_l1scaling,
    "subordination": cmd_subordination,
    "ksbound": cmd_ksbound,
    "certify": cmd_certify,
    "group": cmd_group,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oscmult", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="INI run config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized test points")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("oscmult: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        cp = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "command": args.command,
            "config": resolved(cp),
            "config_hash": config_hash(cp),
            "threads": args.threads,
            "seed": args.seed,
            "version": __version__,
        }
        _write_json(out / "manifest.json", manifest)
        rng = np.random.default_rng(args.seed)
        report = HANDLERS[args.command](cp, out, args.threads, rng)
    except UsageError as exc:
        print(f"oscmult: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QualityError, ConvergenceError, TailUnboundedError) as exc:
        print(f"oscmult: numerical quality failure: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    except ValueError as exc:
        # parameter validation in the library (word caps, grids, ranges)
        print(f"oscmult: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(report, indent=2, sort_keys=True, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
