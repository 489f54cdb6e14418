"""Command-line front end: tabular data for the visibility/key-rate figures,
maximum-distance scans, detector sweeps, Monte Carlo validation reports and
the imperfect-source penalty.

Exit codes: 0 success, 1 Monte Carlo validation failure, 2 usage or
parameter error.  Output is byte-stable for identical flags and seed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import montecarlo, optimize
from .model import info_metrics, key_rates, link_metrics
from .optimize import (DETECTOR_LINES, DetectorLine, NoKeyPossibleError,
                       OutOfModelError, UnsupportedReconciliationError,
                       max_distance_approx, max_distance_exact)
from .params import (DEFAULT_ALPHA_DB_PER_KM, DEFAULT_DARK_PROB, DEFAULT_ETA,
                     DEFAULT_V_OPT, ChannelParams, DetectorParams,
                     InvalidParameterError, RelayConfig)

Z_THRESHOLD = 4.0

_DEFAULTS = {
    "alpha": DEFAULT_ALPHA_DB_PER_KM,
    "eta": DEFAULT_ETA,
    "dark": DEFAULT_DARK_PROB,
    "vopt": DEFAULT_V_OPT,
}


def _fmt(x: float) -> str:
    """Floats with 10 significant digits; stable for file diffing."""
    return format(x, ".10g")


def _json_safe(obj):
    """Round floats to 10 significant digits; non-finite values become null."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _param_comment(params: dict) -> str:
    return ("# alpha=" + _fmt(params["alpha"]) + " eta=" + _fmt(params["eta"])
            + " dark=" + _fmt(params["dark"]) + " vopt=" + _fmt(params["vopt"]))


def _csv(params: dict, header: list[str], rows: list[list[str]],
         comments: list[str] | None = None) -> str:
    lines = [_param_comment(params)]
    lines.extend(comments or [])
    lines.append(",".join(header))
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_doc(payload: dict) -> str:
    return json.dumps(_json_safe(payload), indent=2) + "\n"


def parse_sections(spec: str) -> list[int]:
    """Accept 'lo..hi', a comma list 'a,b,c', or a single integer."""
    spec = spec.strip()
    try:
        if ".." in spec:
            lo_s, hi_s = spec.split("..", 1)
            lo, hi = int(lo_s), int(hi_s)
            if hi < lo:
                raise ValueError
            values = list(range(lo, hi + 1))
        elif "," in spec:
            values = [int(tok) for tok in spec.split(",")]
        else:
            values = [int(spec)]
    except ValueError:
        raise InvalidParameterError(f"cannot parse section spec {spec!r}") from None
    if not values or any(n < 1 for n in values):
        raise InvalidParameterError(f"section counts must be >= 1 in {spec!r}")
    return values


def inclusive_grid(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive arithmetic grid; empty when hi < lo."""
    if step <= 0:
        raise InvalidParameterError(f"grid step must be > 0, got {step}")
    if lo < 0:
        raise InvalidParameterError(f"grid start must be >= 0, got {lo}")
    if hi < lo:
        return []
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _load_config_file(path: str) -> dict:
    """Plain key=value file; keys alpha, eta, dark, vopt; '#' comments allowed."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidParameterError(
                f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise InvalidParameterError(
                f"{path}:{lineno}: unknown key {key!r} "
                f"(expected one of {sorted(_DEFAULTS)})")
        try:
            values[key] = float(value.strip())
        except ValueError:
            raise InvalidParameterError(
                f"{path}:{lineno}: cannot parse value {value.strip()!r}") from None
    return values


def _resolve_params(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    params = dict(_DEFAULTS)
    if args.config:
        params.update(_load_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key)
        if flag is not None:
            params[key] = flag
    return params


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_visibility(args, params, channel, detector):
    sections = parse_sections(args.sections)
    grid = inclusive_grid(args.dmin, args.dmax, args.dstep)
    rows = []
    for n in sections:
        for d in grid:
            lm = link_metrics(RelayConfig(n, d, channel, detector))
            rows.append((n, d, lm.v_ab))
    if args.format == "json":
        payload = {"params": params,
                   "rows": [{"n": n, "distance_km": d, "v_ab": v}
                            for n, d, v in rows]}
        return _json_doc(payload), 0
    csv_rows = [[str(n), _fmt(d), _fmt(v)] for n, d, v in rows]
    return _csv(params, ["n", "distance_km", "v_ab"], csv_rows), 0


def _cmd_keyrate(args, params, channel, detector):
    sections = parse_sections(args.sections)
    if args.reconciliation == "reverse" and sections != [1]:
        raise UnsupportedReconciliationError(
            "reverse reconciliation requires --sections 1")
    grid = inclusive_grid(args.dmin, args.dmax, args.dstep)
    rows = []
    for n in sections:
        for d in grid:
            cfg = RelayConfig(n, d, channel, detector)
            lm = link_metrics(cfg)
            im = info_metrics(cfg)
            kr = key_rates(cfg)
            rate = (kr.rate_reverse if args.reconciliation == "reverse"
                    else kr.rate_forward)
            rows.append((n, d, rate, im.i_ab, im.i_ae, im.i_be, lm.p_total))
    header = ["n", "distance_km", "rate_bits_per_pulse", "i_ab", "i_ae",
              "i_be", "p_total"]
    if args.format == "json":
        payload = {"params": params,
                   "reconciliation": args.reconciliation,
                   "rows": [dict(zip(header, row)) for row in rows]}
        return _json_doc(payload), 0
    csv_rows = [[str(r[0])] + [_fmt(v) for v in r[1:]] for r in rows]
    return _csv(params, header, csv_rows), 0


def _cmd_maxdist(args, params, channel, detector):
    sections = parse_sections(args.sections)
    want_exact = args.method in ("exact", "both")
    want_approx = args.method in ("approx", "both")
    rows = []
    for n in sections:
        d_exact = (max_distance_exact(n, channel, detector).d_max_km
                   if want_exact else None)
        d_approx = None
        if want_approx:
            try:
                d_approx = max_distance_approx(n, channel, detector).d_max_km
            except NoKeyPossibleError:
                d_approx = 0.0
        rows.append((n, d_exact, d_approx))

    ranking = [(n, e if e is not None else a) for n, e, a in rows]
    n_star, d_star = max(ranking, key=lambda item: (item[1], -item[0]))

    if args.format == "json":
        payload = {"params": params,
                   "rows": [{"n": n, "d_max_exact_km": e, "d_max_approx_km": a}
                            for n, e, a in rows],
                   "summary": {"n_star": n_star, "d_max_km": d_star}}
        return _json_doc(payload), 0
    comments = [f"# summary: n_star={n_star} d_max_km={_fmt(d_star)}"]
    csv_rows = [[str(n),
                 "" if e is None else _fmt(e),
                 "" if a is None else _fmt(a)] for n, e, a in rows]
    return _csv(params, ["n", "d_max_exact_km", "d_max_approx_km"],
                csv_rows, comments), 0


def _make_line(args) -> DetectorLine:
    if args.line == "custom":
        if args.line_a is None or args.line_b is None:
            raise InvalidParameterError(
                "--line custom requires --line-a and --line-b")
        return DetectorLine(args.line_a, args.line_b, "custom")
    return DETECTOR_LINES[args.line]


def _cmd_detector_sweep(args, params, channel, detector):
    sections = parse_sections(args.sections)
    line = _make_line(args)
    eta_grid = inclusive_grid(args.eta_min, args.eta_max, args.eta_step)
    if not eta_grid:
        raise InvalidParameterError("empty eta grid")
    result = optimize.detector_sweep(args.distance, sections, line, eta_grid,
                                     channel=channel)
    header = ["n", "eta", "dark_prob", "rate"]
    if args.format == "json":
        payload = {"params": params,
                   "line": {"name": line.name, "a_coeff": line.a_coeff,
                            "b_coeff": line.b_coeff},
                   "distance_km": args.distance,
                   "rows": [{"n": p.n_sections, "eta": p.eta,
                             "dark_prob": p.dark_prob, "rate": p.rate}
                            for p in result.points],
                   "best": {str(n): {"eta": p.eta, "dark_prob": p.dark_prob,
                                     "rate": p.rate}
                            for n, p in sorted(result.best_by_n.items())}}
        return _json_doc(payload), 0
    comments = [f"# best: n={n} eta={_fmt(p.eta)} dark_prob={_fmt(p.dark_prob)}"
                f" rate={_fmt(p.rate)}"
                for n, p in sorted(result.best_by_n.items())]
    csv_rows = [[str(p.n_sections), _fmt(p.eta), _fmt(p.dark_prob),
                 _fmt(p.rate)] for p in result.points]
    return _csv(params, header, csv_rows, comments), 0


def _cmd_mc(args, params, channel, detector):
    relay = RelayConfig(args.sections, args.distance, channel, detector)
    trial = montecarlo.TrialConfig(relay, args.trials, args.seed,
                                   args.chunk_size)
    est = montecarlo.simulate(trial, workers=args.workers)
    lm = link_metrics(relay)

    degenerate = []
    z_p = z_v = None
    if est.accepted == 0:
        # no conditional visibility sample; the count itself still checks
        degenerate = ["p_total", "v_ab"]
        se_p = math.sqrt(lm.p_total * (1.0 - lm.p_total) / est.trials)
        if se_p > 0.0:
            z_p = (est.p_total_hat - lm.p_total) / se_p
    else:
        z_p, z_v = montecarlo.zscore(est, lm.p_total, lm.v_ab)
        # a sample too small to carry its own variance estimate is flagged,
        # though the analytic-SE z-score above still applies
        if est.se_p_total == 0.0:
            degenerate.append("p_total")
        if est.se_v_ab == 0.0 or math.isnan(est.se_v_ab):
            degenerate.append("v_ab")
        if not math.isfinite(z_p):
            z_p = None
        if not math.isfinite(z_v):
            z_v = None

    finite = [z for z in (z_p, z_v) if z is not None]
    passed = all(abs(z) <= Z_THRESHOLD for z in finite)

    payload = {
        "params": params,
        "config": {"n_sections": args.sections, "distance_km": args.distance,
                   "trials": args.trials, "seed": args.seed,
                   "chunk_size": args.chunk_size},
        "analytic": {"p_total": lm.p_total, "v_ab": lm.v_ab},
        "estimate": {"accepted": est.accepted, "correct": est.correct,
                     "p_total_hat": est.p_total_hat, "v_ab_hat": est.v_ab_hat,
                     "se_p_total": est.se_p_total, "se_v_ab": est.se_v_ab},
        "z_scores": {"p_total": z_p, "v_ab": z_v,
                     "degenerate_sample": degenerate},
        "threshold": Z_THRESHOLD,
        "pass": passed,
        "generator": montecarlo.GENERATOR_METADATA,
    }
    return _json_doc(payload), 0 if passed else 1


def _cmd_source_penalty(args, params, channel, detector):
    penalty = optimize.source_penalty(args.sources, args.emission_prob,
                                      channel.alpha_db_per_km)
    if args.format == "json":
        payload = {"params": params,
                   "m_sources": args.sources,
                   "emission_prob": args.emission_prob,
                   "rate_factor": penalty.rate_factor,
                   "distance_loss_km": penalty.distance_loss_km}
        return _json_doc(payload), 0
    header = ["m_sources", "emission_prob", "rate_factor", "distance_loss_km"]
    row = [str(args.sources), _fmt(args.emission_prob),
           _fmt(penalty.rate_factor), _fmt(penalty.distance_loss_km)]
    return _csv(params, header, [row]), 0


_HANDLERS = {
    "visibility": _cmd_visibility,
    "keyrate": _cmd_keyrate,
    "maxdist": _cmd_maxdist,
    "detector-sweep": _cmd_detector_sweep,
    "mc": _cmd_mc,
    "source-penalty": _cmd_source_penalty,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("global options")
    group.add_argument("--alpha", type=float, default=None,
                       help="fibre loss in dB/km (default 0.25)")
    group.add_argument("--eta", type=float, default=None,
                       help="detector efficiency (default 0.3)")
    group.add_argument("--dark", type=float, default=None,
                       help="dark-count probability per gate (default 1e-4)")
    group.add_argument("--vopt", type=float, default=None,
                       help="single-section optical visibility (default 0.99)")
    group.add_argument("--config", metavar="PATH", default=None,
                       help="key=value file with alpha/eta/dark/vopt; "
                            "flags override the file")
    group.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="tabular output format (default csv)")
    group.add_argument("--out", metavar="PATH", default=None,
                       help="write output to PATH instead of stdout")

    parser = argparse.ArgumentParser(
        prog="qkdrelay",
        description="Secret-key rates, visibilities and operating-point "
                    "optimization for multi-section quantum relay QKD links.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("visibility", parents=[common],
                       help="visibility of Alice's bit at Bob over a "
                            "(sections, distance) grid")
    p.add_argument("--sections", default="1..10",
                   help="'lo..hi', 'a,b,c' or a single integer (default 1..10)")
    p.add_argument("--dmin", type=float, default=0.0)
    p.add_argument("--dmax", type=float, default=800.0)
    p.add_argument("--dstep", type=float, default=1.0)

    p = sub.add_parser("keyrate", parents=[common],
                       help="secret-key rate and mutual informations over a "
                            "(sections, distance) grid")
    p.add_argument("--sections", default="1..20")
    p.add_argument("--dmin", type=float, default=0.0)
    p.add_argument("--dmax", type=float, default=700.0)
    p.add_argument("--dstep", type=float, default=1.0)
    p.add_argument("--reconciliation", choices=("forward", "reverse"),
                   default="forward",
                   help="reverse is only valid with --sections 1")

    p = sub.add_parser("maxdist", parents=[common],
                       help="maximum secret-key distance per section count")
    p.add_argument("--sections", default="1..30")
    p.add_argument("--method", choices=("exact", "approx", "both"),
                   default="both")

    p = sub.add_parser("detector-sweep", parents=[common],
                       help="key rate across the detector efficiency/dark "
                            "tradeoff line at a fixed distance")
    p.add_argument("--distance", type=float, default=400.0)
    p.add_argument("--sections", default="4,5,6")
    p.add_argument("--line", choices=("normal", "good", "best", "custom"),
                   default="good")
    p.add_argument("--line-a", type=float, default=None,
                   help="custom line: dark probability at eta=0")
    p.add_argument("--line-b", type=float, default=None,
                   help="custom line: exponential slope")
    p.add_argument("--eta-min", type=float, default=0.02)
    p.add_argument("--eta-max", type=float, default=0.30)
    p.add_argument("--eta-step", type=float, default=0.01)

    p = sub.add_parser("mc", parents=[common],
                       help="Monte Carlo cross-check of p_total and v_ab "
                            "(JSON report; exits 1 when |z| > 4)")
    p.add_argument("--sections", type=int, default=1)
    p.add_argument("--distance", type=float, default=50.0)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--chunk-size", type=int,
                   default=montecarlo.DEFAULT_CHUNK_SIZE)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("source-penalty", parents=[common],
                       help="rate factor and distance loss of imperfect "
                            "single-photon/pair sources")
    p.add_argument("--sources", type=int, required=True,
                   help="number of sources in the chain")
    p.add_argument("--emission-prob", type=float, default=0.1,
                   help="per-pulse emission probability (default 0.1)")

    return parser


def _write_output(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = _resolve_params(args)
        channel = ChannelParams(params["alpha"], params["vopt"])
        detector = DetectorParams(params["eta"], params["dark"])
        text, code = _HANDLERS[args.cmd](args, params, channel, detector)
    except (InvalidParameterError, UnsupportedReconciliationError,
            OutOfModelError, NoKeyPossibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_output(text, args.out)
    return code


def run() -> None:
    raise SystemExit(main())
