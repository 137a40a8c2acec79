"""Command-line entry point.

    lbtransport <command> --config <path> [--out <path>] [--tol-quad X]
                [--lead-length L] [--grid a:b:n] [--window T1:T2] [--samples n]

Exit status: 0 success, 1 validation failure, 2 numerical failure,
3 verification failure.  Warnings go to stderr, one per line, prefixed
``WARN:``.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .leads import ExceptionalEnergyError
from .model import ModelValidationError, band, open_channels
from .quadrature import QuadratureError
from .quench import WindowError, build_finite, echo_bound, standard_window, steady_compare
from .scattering import NearSingularError, ScatteringInconsistency, coupling_subspace, t_matrix
from .transport import positivity_verdict, transport
from .verify import run_checks

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

COMMANDS = ("validate", "bands", "tmatrix", "currents", "entropy", "verify", "quench")

log = logging.getLogger("lbtransport")


def fmt(x) -> str:
    """Locale-free float formatting with 17 significant digits."""
    return format(float(x), ".17g")


class _LogFormatter(logging.Formatter):
    def format(self, record):
        prefix = {logging.WARNING: "WARN", logging.INFO: "INFO"}.get(record.levelno, record.levelname)
        return f"{prefix}: {record.getMessage()}"


def _setup_logging(quiet: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_LogFormatter())
    root = logging.getLogger("lbtransport")
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if quiet else logging.INFO)
    return handler


@contextlib.contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _writer(fh) -> csv.writer:
    return csv.writer(fh, lineterminator="\n")


def cmd_validate(cfg: RunConfig, args) -> int:
    m = cfg.model
    sub = coupling_subspace(m)
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["scatterer_dim", m.scatterer.dim])
        w.writerow(["leads", " ".join(str(i) for i in m.lead_ids)])
        w.writerow(["couplings", len(m.couplings)])
        w.writerow(["contacts", len(m.contacts)])
        w.writerow(["coupling_rank", int(np.linalg.matrix_rank(sub.v_matrix)) if sub.dim else 0])
        w.writerow(["time_reversal_symmetric", str(m.is_real).lower()])
        w.writerow(["reservoir_states", len(cfg.states)])
    return EXIT_OK


def cmd_bands(cfg: RunConfig, args) -> int:
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["lead", "onsite", "hopping", "band_min", "band_max"])
        for ld in cfg.model.leads:
            lo, hi = band(ld)
            w.writerow([ld.id, fmt(ld.onsite), fmt(ld.hopping), fmt(lo), fmt(hi)])
    return EXIT_OK


def cmd_tmatrix(cfg: RunConfig, args) -> int:
    m = cfg.model
    ids = m.lead_ids
    pairs = [(j, k) for j in ids for k in ids]
    header = ["E"]
    for j, k in pairs:
        header += [f"ReT_{j}_{k}", f"ImT_{j}_{k}", f"absS2_{j}_{k}"]
    rows = []
    for E in cfg.energies:
        ch = open_channels(m, E)
        if not ch:
            continue
        try:
            T = t_matrix(m, E, tol_pole=cfg.options["tol_pole"], cond_max=cfg.options["cond_max"])
        except (ExceptionalEnergyError, NearSingularError) as exc:
            log.warning("event=exceptional_energy E=%s reason=%s", fmt(E), type(exc).__name__)
            continue
        S = np.eye(len(ch)) - 2j * np.pi * T.entries
        row = [fmt(E)]
        for j, k in pairs:
            if j in ch and k in ch:
                a, b = ch.index(j), ch.index(k)
                t = T.entries[a, b]
                row += [fmt(t.real), fmt(t.imag), fmt(abs(S[a, b]) ** 2)]
            else:
                row += ["", "", ""]
        rows.append(row)
    if not rows:
        log.warning("event=no_open_channels grid=%s", ":".join(fmt(x) for x in cfg.options["grid"]))
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return EXIT_OK


def _require_states(cfg: RunConfig) -> None:
    if not cfg.states:
        raise ConfigError("reservoirs: this command needs one [[reservoirs]] entry per lead")


def cmd_currents(cfg: RunConfig, args) -> int:
    _require_states(cfg)
    res = transport(cfg.model, cfg.states, cfg.options["tol_quad"], tol_pole=cfg.options["tol_pole"])
    for orig, new in res.excluded:
        log.warning("event=exceptional_node E=%s shifted_to=%s", fmt(orig), "none" if new is None else fmt(new))
    q = res.quadrature
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["lead", "beta", "mu", "charge_current", "energy_current", "particle_current"])
        for i, lid in enumerate(res.lead_ids):
            st = res.states[lid]
            w.writerow(
                [lid, fmt(st.beta), fmt(st.mu), fmt(res.charge_currents[i]), fmt(res.energy_currents[i]), fmt(res.particle_currents[i])]
            )
        w.writerow(
            [
                "#sigma",
                f"from_currents={fmt(res.sigma_from_currents)}",
                f"direct={fmt(res.sigma_direct)}",
                f"symmetrized={fmt(res.sigma_symmetrized)}",
                f"nodes={q.nodes}",
                f"error_estimate={fmt(q.error)}",
                f"excluded={len(res.excluded)}",
            ]
        )
    return EXIT_OK


def cmd_entropy(cfg: RunConfig, args) -> int:
    _require_states(cfg)
    tq = cfg.options["tol_quad"]
    res = transport(cfg.model, cfg.states, tq, tol_pole=cfg.options["tol_pole"])
    v = positivity_verdict(cfg.model, cfg.states, tq, result=res)
    pairs = lambda ps: " ".join(f"{a}-{b}" for a, b in ps)  # noqa: E731
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["sigma_from_currents", fmt(res.sigma_from_currents)])
        w.writerow(["sigma_direct", fmt(res.sigma_direct)])
        w.writerow(["sigma_symmetrized", fmt(res.sigma_symmetrized)])
        w.writerow(["route_deviation", fmt(res.route_deviation)])
        w.writerow(["time_reversal_symmetric", str(cfg.model.is_real).lower()])
        w.writerow(["nontrivial_channels", pairs(v.nontrivial_channels)])
        w.writerow(["distinct_state_pairs", pairs(v.distinct_state_pairs)])
        w.writerow(["predicted_strict_positive", str(v.predicted_strict_positive).lower()])
        w.writerow(["verdict_holds", str(v.holds).lower()])
    if not cfg.model.is_real and res.route_deviation > 10 * tq * max(1.0, abs(res.sigma_direct)):
        log.warning("event=time_reversal_breaking symmetrized_minus_direct=%s", fmt(res.sigma_symmetrized - res.sigma_direct))
    return EXIT_OK if v.holds else EXIT_VERIFY


def cmd_verify(cfg: RunConfig, args) -> int:
    checks = run_checks(cfg)
    with _output(args.out) as fh:
        w = _writer(fh)
        w.writerow(["check", "value", "tolerance", "status"])
        for c in checks:
            w.writerow([c.name, fmt(c.value), fmt(c.tolerance), "pass" if c.passed else "FAIL"])
    failed = [c.name for c in checks if not c.passed]
    for name in failed:
        log.warning("event=verification_failed check=%s", name)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_quench(cfg: RunConfig, args) -> int:
    _require_states(cfg)
    o = cfg.options
    try:
        fin = build_finite(cfg.model, o["lead_length"], cfg.states, o["scatterer_occupation"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    window = o["window"] if o["window"] is not None else standard_window(fin)
    if window[1] > echo_bound(fin):
        raise WindowError(f"window end T2={fmt(window[1])} exceeds the echo bound {fmt(echo_bound(fin))} for L={fin.L}")
    rep = steady_compare(fin, window, o["samples"], o["tol_quad"])
    ids = cfg.model.lead_ids
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(["t"] + [f"j_{l}" for l in ids] + [f"Phi_{l}" for l in ids])
    s = rep.series
    for i, t in enumerate(s.times):
        w.writerow([fmt(t)] + [fmt(s.charge[l][i]) for l in ids] + [fmt(s.energy[l][i]) for l in ids])
    summary = json.dumps(rep.summary(), indent=2, sort_keys=True)
    if args.out is None:
        sys.stdout.write(buf.getvalue())
        sys.stdout.write("\n" + summary + "\n")
    else:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        Path(str(args.out) + ".summary.json").write_text(summary + "\n", encoding="utf-8")
    return EXIT_OK


HANDLERS = {
    "validate": cmd_validate,
    "bands": cmd_bands,
    "tmatrix": cmd_tmatrix,
    "currents": cmd_currents,
    "entropy": cmd_entropy,
    "verify": cmd_verify,
    "quench": cmd_quench,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lbtransport", description="Multi-terminal Landauer-Buttiker transport solver")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--tol-quad", type=float, dest="tol_quad")
    p.add_argument("--tol-scatter", type=float, dest="tol_scatter")
    p.add_argument("--tol-pole", type=float, dest="tol_pole")
    p.add_argument("--cond-max", type=float, dest="cond_max")
    p.add_argument("--lead-length", type=int, dest="lead_length")
    p.add_argument("--grid", help="energy grid a:b:n")
    p.add_argument("--window", help="quench averaging window T1:T2")
    p.add_argument("--samples", type=int)
    p.add_argument("--occupation", type=float, dest="scatterer_occupation")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress INFO lines")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.quiet)
    overrides = {
        k: getattr(args, k)
        for k in ("tol_quad", "tol_scatter", "tol_pole", "cond_max", "lead_length", "grid", "window", "samples", "scatterer_occupation")
    }
    try:
        cfg = load_config(args.config, overrides)
        return HANDLERS[args.command](cfg, args)
    except ModelValidationError as exc:
        for v in exc.violations:
            print(f"ERROR: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, WindowError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (QuadratureError, NearSingularError, ExceptionalEnergyError, np.linalg.LinAlgError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ScatteringInconsistency as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
