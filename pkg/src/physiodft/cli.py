"""Command-line interface: preprocess, estimate, simulate, validate.

Every command reads an optional JSON or YAML config; command-line flags
override config entries. Exit codes: 0 success, 2 input or config error,
3 numerical failure (non-convergence, oracle pass rate below threshold).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import STATIC_ATTRIBUTES, read_dataset, write_dataset
from .dft import ChoiceTask
from .errors import PhysioDftError
from .estimation import estimate
from .link import LinkSpec, LinkTerm
from .models import Variant, get_variant, variant_keys
from .params import ParamDef, ParamSpace
from .signals import GazeConfig, SignalStream, fixation_shares, gap_features
from .simulate import GapDesign, StaticDesign, generate_dataset, simulate_trajectory, validate_oracle

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
log = logging.getLogger("physiodft")


class ConfigError(PhysioDftError):
    pass


@dataclass
class RunConfig:
    command: str
    data: str | None = None
    out: str = "out"
    variant: str | None = None
    overrides: dict = field(default_factory=dict)
    link: list = field(default_factory=list)
    seed: int = 0
    workers: int = 1
    tol: float = 1e-6
    draws: int = 1_000_000
    raw: dict = field(default_factory=dict)

    def section(self, name) -> dict:
        sec = self.raw.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        return sec


_KNOWN_KEYS = {"variant", "data", "out", "seed", "workers", "tol", "draws", "overrides", "link",
               "simulate", "validate", "preprocess", "estimate"}


def load_config(args) -> RunConfig:
    raw = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
            raw = yaml.safe_load(text) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {args.config} does not parse: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping of keys to values")
        unknown = sorted(set(raw) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config key(s) {unknown}; allowed: {sorted(_KNOWN_KEYS)}")
    cfg = RunConfig(
        command=args.command,
        data=raw.get("data"),
        out=raw.get("out", "out"),
        variant=raw.get("variant"),
        overrides=raw.get("overrides") or {},
        link=raw.get("link") or [],
        seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
        tol=float(raw.get("tol", 1e-6)),
        draws=int(raw.get("draws", 1_000_000)),
        raw=raw,
    )
    for name in ("data", "out", "seed", "workers", "tol", "draws"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if not cfg.tol > 0:
        raise ConfigError("tol must be > 0")
    if cfg.draws < 1:
        raise ConfigError("draws must be >= 1")
    return cfg


def _g(v) -> str:
    return f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v)


def _full(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_full(v) for v in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def build_variant(cfg: RunConfig, application=None, attribute_names=None, n_alternatives=None) -> Variant:
    """Registered variant with config overrides and extra link terms applied."""
    if not cfg.variant:
        raise ConfigError(f"config needs a 'variant'; known: {', '.join(variant_keys())}")
    key = cfg.variant if ":" in cfg.variant else f"{application}:{cfg.variant}"
    v = get_variant(key, attribute_names=attribute_names, n_alternatives=n_alternatives)
    space = v.space
    link = v.link
    if cfg.link:
        terms = list(link.terms)
        params = list(space.params)
        for i, t in enumerate(cfg.link):
            try:
                term = LinkTerm(str(t["target"]), str(t["feature"]), str(t["coef"]),
                                int(t.get("attribute", 0)), int(t.get("alternative", 0)))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"link entry {i} needs target, feature and coef: {exc}") from None
            terms.append(term)
            if term.coef not in space.names and term.coef not in [p.name for p in params]:
                params.append(ParamDef(term.coef, 0.0))
        link = LinkSpec(tuple(terms), base=v.key)
        space = ParamSpace(params)
        key = f"{v.key}+custom"
    if cfg.overrides:
        space = space.override(cfg.overrides)
    return Variant(key, v.application, v.family, space, link, v.base if not cfg.link else v.key, v.description)


def _variant_for_data(cfg, data):
    return build_variant(cfg, data.application, data.attribute_names or None, data.n_alternatives)


# estimate ---------------------------------------------------------------

def cmd_estimate(cfg: RunConfig) -> int:
    """Fit a model variant; write parameter, fit and probability files."""
    if not cfg.data:
        raise ConfigError("estimate needs --data or 'data' in the config")
    data = read_dataset(cfg.data)
    if len(data) == 0:
        raise ConfigError(f"{cfg.data}: no observations")
    variant = _variant_for_data(cfg, data)
    sec = cfg.section("estimate")
    res = estimate(data, variant, variant.space, workers=cfg.workers, tol=cfg.tol,
                   gtol=float(sec.get("gtol", 1e-5)), maxiter=int(sec.get("maxiter", 500)))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = [(n, res.estimates[n], res.std_errors.get(n, float("nan")), res.t_ratios.get(n, float("nan")), res.fixed[n])
            for n in res.names]
    _write_csv(out / "params.csv", ["name", "estimate", "robust_se", "robust_t", "fixed"], rows)
    _write_json(out / "fit.json", {
        "variant": res.variant, "n_obs": res.n_obs, "n_params": res.n_params,
        "loglik": res.loglik, "null_loglik": res.null_loglik, "adj_rho2": res.adj_rho2, "bic": res.bic,
        "converged": res.converged, "convergence": res.convergence, "grad_max": res.grad_max,
        "iterations": res.iterations, "n_floored": res.n_floored, "hessian_asymmetry": res.hessian_asymmetry,
        "warnings": res.warnings, "seed": cfg.seed, "workers": cfg.workers, "tol": cfg.tol,
        "estimates": res.estimates, "robust_se": res.std_errors, "robust_t": res.t_ratios,
        "fixed": res.fixed,
    })
    (out / "report.txt").write_text(format_report(res), encoding="utf-8")

    P = variant.probabilities(data, res.estimates, tol=cfg.tol)
    J = data.n_alternatives
    _write_csv(out / "probabilities.csv", ["participant_id", "task_id", "chosen"] + [f"p{j}" for j in range(J)] + ["p_chosen"],
               [(data.participant_id[n], data.task_id[n], int(data.chosen[n]), *P[n], P[n, data.chosen[n]])
                for n in range(len(data))])
    if not res.converged:
        log.error("estimation did not converge: %s", "; ".join(res.warnings))
        return EXIT_NUMERIC
    return EXIT_OK


def format_report(res) -> str:
    """Parameter table and fit-statistic block, 6 significant digits."""
    w = max([len(n) for n in res.names] + [9])
    lines = [f"Model {res.variant}", "", f"{'parameter':<{w}}  {'estimate':>12}  {'rob. t-rat.':>12}"]
    for n in res.names:
        t = "(fixed)" if res.fixed[n] else _g(res.t_ratios[n])
        lines.append(f"{n:<{w}}  {_g(res.estimates[n]):>12}  {t:>12}")
    lines += [
        "",
        f"{'Log-likelihood(null)':<24}{_g(res.null_loglik):>14}",
        f"{'Log-likelihood':<24}{_g(res.loglik):>14}",
        f"{'Adj. rho2':<24}{_g(res.adj_rho2):>14}",
        f"{'BIC':<24}{_g(res.bic):>14}",
        f"{'Parameters (K)':<24}{res.n_params:>14}",
        f"{'Observations (N)':<24}{res.n_obs:>14}",
        f"{'Converged':<24}{('yes (' + res.convergence + ')') if res.converged else 'NO':>14}",
        f"{'max |gradient|':<24}{_g(res.grad_max):>14}",
        f"{'Iterations':<24}{res.iterations:>14}",
    ]
    lines += [f"warning: {m}" for m in res.warnings]
    return "\n".join(lines) + "\n"


# simulate ---------------------------------------------------------------

def _design(sec):
    d = dict(sec.get("design") or {})
    app = d.pop("application", "static")
    cls = {"static": StaticDesign, "gap": GapDesign}.get(app)
    if cls is None:
        raise ConfigError(f"design application must be 'static' or 'gap', got {app!r}")
    try:
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"bad design entry: {exc}") from None


def cmd_simulate(cfg: RunConfig) -> int:
    """Generate a synthetic dataset with a ground-truth sidecar."""
    sec = cfg.section("simulate")
    design = _design(sec)
    n = int(sec.get("n", 100))
    if n < 0:
        raise ConfigError("simulate.n must be >= 0")
    names = getattr(design, "attribute_names", None)
    variant = build_variant(cfg, design.application, names, getattr(design, "n_alternatives", None))
    theta = variant.space.theta()
    truth_over = sec.get("theta") or {}
    unknown = [k for k in truth_over if k not in theta]
    if unknown:
        raise ConfigError(f"simulate.theta names {unknown} are not parameters of {variant.key} ({list(theta)})")
    theta.update({k: float(v) for k, v in truth_over.items()})
    data, truth = generate_dataset(design, variant, theta, n, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out / "dataset.csv")
    _write_json(out / "truth.json", truth)

    n_traj = int(sec.get("trajectories", 0))
    if n_traj:
        if variant.family != "dft":
            raise ConfigError("trajectory dumps need a DFT variant")
        resolved = variant.resolve(data, theta)
        rows = []
        J = data.n_alternatives
        for i in range(min(n_traj, len(data))):
            task = ChoiceTask(resolved.M[i], task_id=str(data.task_id[i]))
            tr = simulate_trajectory(task, resolved.params(i), cfg.seed, index=i)
            for step, p in enumerate(tr.path):
                att = "" if step == 0 else int(tr.attended[step - 1])
                rows.append((data.task_id[i], step, att, *p))
        _write_csv(out / "trajectories.csv", ["task_id", "step", "attended"] + [f"p{j}" for j in range(J)], rows)
    return EXIT_OK


# validate ---------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    """Compare analytic probabilities with trajectory simulation."""
    sec = cfg.section("validate")
    n_cases = int(sec.get("cases", 50))
    threshold = int(sec.get("threshold", int(np.ceil(0.96 * n_cases))))
    cases = validate_oracle(n_cases, cfg.draws, seed=cfg.seed, tol=cfg.tol, workers=cfg.workers)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for c in cases:
        for j in range(c.n_alternatives):
            rows.append((c.index, c.n_alternatives, c.n_attributes, c.tau, j, c.analytic[j], c.simulated[j], c.z[j], c.passed))
    _write_csv(out / "validation.csv", ["case", "J", "K", "tau", "alternative", "analytic", "simulated", "z", "case_passed"], rows)
    passes = sum(c.passed for c in cases)
    lines = [f"Oracle validation: {n_cases} random tasks, {cfg.draws} draws each, seed {cfg.seed}",
             f"criterion: every alternative within 3 binomial standard errors", ""]
    lines.append(f"{'case':>4} {'J':>2} {'K':>2} {'tau':>4} {'max z':>10} {'max |diff|':>12}  result")
    for c in cases:
        lines.append(f"{c.index:>4} {c.n_alternatives:>2} {c.n_attributes:>2} {c.tau:>4} {_g(c.max_z):>10} "
                     f"{_g(float(np.max(np.abs(c.simulated - c.analytic)))):>12}  {'pass' if c.passed else 'FAIL'}")
    ok = passes >= threshold
    lines += ["", f"passed {passes}/{n_cases} (threshold {threshold}): {'OK' if ok else 'FAILED'}"]
    (out / "validation.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(lines[-1])
    return EXIT_OK if ok else EXIT_NUMERIC


# preprocess -------------------------------------------------------------

SIGNAL_COLUMNS = ("participant_id", "timestamp", "head_yaw", "head_pitch", "left_yaw", "left_pitch",
                  "right_yaw", "right_pitch", "hr", "eda")
EVENT_COLUMNS = ("participant_id", "task_id", "gap_index", "onset", "x_scen")
FIXATION_COLUMNS = ("participant_id", "task_id", "attribute", "alternative", "duration")
GAP_FEATURES = ("z_hr", "z_scr", "y_gaze_left", "y_gaze_yaw_sd", "y_gaze_pitch_sd")


def _read_table(path, required, what):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file: {exc}") from None
    if not rows:
        raise ConfigError(f"{path}: empty {what} file")
    head = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in head]
    if missing:
        raise ConfigError(f"{path}: {what} schema mismatch; missing column(s) {missing}; found {head}")
    body = [r for r in rows[1:] if any(x.strip() for x in r)]
    for ln, r in enumerate(body, 2):
        if len(r) != len(head):
            raise ConfigError(f"{path}: line {ln} has {len(r)} fields, header has {len(head)}")
    if not body:
        raise ConfigError(f"{path}: {what} file has a header but no rows")
    return head, body


def _num(text, path, col, ln):
    if text.strip() == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{path}: line {ln}, column {col!r}: not a number: {text!r}") from None


def read_signals(path):
    """Signal CSV to {participant_id: SignalStream}, in order of first appearance."""
    head, body = _read_table(path, SIGNAL_COLUMNS, "signal")
    col = {c: head.index(c) for c in SIGNAL_COLUMNS}
    by = {}
    for ln, r in enumerate(body, 2):
        by.setdefault(r[col["participant_id"]], []).append(
            [_num(r[col[c]], path, c, ln) for c in SIGNAL_COLUMNS[1:]])
    out = {}
    for pid, recs in by.items():
        a = np.array(recs, dtype=float)
        if np.any(np.isnan(a[:, 0])):
            raise ConfigError(f"{path}: participant {pid!r} has a blank timestamp")
        out[pid] = SignalStream(pid, *[a[:, i] for i in range(a.shape[1])])
    return out


def _preprocess_gap(cfg, sec, signals_path, summary):
    streams = read_signals(signals_path)
    events_path = sec.get("gaps")
    if not events_path:
        raise ConfigError("preprocess needs 'gaps' (gap onset CSV) alongside the signal file")
    head, body = _read_table(events_path, EVENT_COLUMNS, "gap event")
    passthrough = [c for c in head if c not in ("onset",) and c not in GAP_FEATURES]
    g = GazeConfig(**{k: sec[k] for k in ("window", "scr_window", "scr_min_amplitude", "centre_radius",
                                          "positive_yaw_left") if k in sec})
    ip, io = head.index("participant_id"), head.index("onset")
    by = {}
    for ln, r in enumerate(body, 2):
        by.setdefault(r[ip], []).append((ln, r))
    out_rows = []
    skipped = 0
    for pid, evs in by.items():
        if pid not in streams:
            raise ConfigError(f"{events_path}: participant {pid!r} has gap events but no signal samples")
        onsets = [_num(r[io], events_path, "onset", ln) for ln, r in evs]
        ids = [r[head.index("task_id")] for _, r in evs]
        feats, sk = gap_features(streams[pid], onsets, ids, g)
        skipped += sk
        for i, (_, r) in enumerate(evs):
            out_rows.append([r[head.index(c)] for c in passthrough] + [feats[f][i] for f in GAP_FEATURES])
    summary.update({
        "mode": "gap", "participants": len(by), "samples": int(sum(len(s.t) for s in streams.values())),
        "gaze_samples_skipped": skipped, "rows": len(out_rows),
        "participants_without_gaps": sorted(set(streams) - set(by)),
    })
    return passthrough + list(GAP_FEATURES), out_rows


def _preprocess_static(cfg, sec, fix_path, summary):
    names = tuple(sec.get("attribute_names") or STATIC_ATTRIBUTES)
    head, body = _read_table(fix_path, FIXATION_COLUMNS, "fixation")
    col = {c: head.index(c) for c in FIXATION_COLUMNS}
    by = {}
    for ln, r in enumerate(body, 2):
        a = r[col["attribute"]].strip()
        if a in names:
            k = float(names.index(a))
        else:
            k = _num(a, fix_path, "attribute", ln) if a else np.nan
        by.setdefault((r[col["participant_id"]], r[col["task_id"]]), ([], []))
        by[(r[col["participant_id"]], r[col["task_id"]])][0].append(k)
        by[(r[col["participant_id"]], r[col["task_id"]])][1].append(_num(r[col["duration"]], fix_path, "duration", ln))
    rows, excluded = [], 0
    for (pid, tid), (ks, ds) in by.items():
        try:
            counts, times, ex = fixation_shares(ks, ds, len(names))
        except PhysioDftError as exc:
            raise type(exc)(f"participant {pid!r}, task {tid!r}: {exc}") from None
        excluded += ex
        rows.append([pid, tid, *counts, *times])
    summary.update({"mode": "static", "tasks": len(rows), "fixations": len(body), "fixations_excluded": excluded,
                    "rows": len(rows)})
    return ["participant_id", "task_id"] + [f"count_share_{a}" for a in names] + [f"time_share_{a}" for a in names], rows


def cmd_preprocess(cfg: RunConfig) -> int:
    """Raw signal or fixation CSVs to a feature table."""
    sec = cfg.section("preprocess")
    summary = {}
    if sec.get("fixations") or (cfg.data and not sec.get("gaps") and not sec.get("signals")):
        header, rows = _preprocess_static(cfg, sec, cfg.data or sec["fixations"], summary)
    else:
        signals = cfg.data or sec.get("signals")
        if not signals:
            raise ConfigError("preprocess needs --data (signal CSV) or preprocess.signals / preprocess.fixations")
        header, rows = _preprocess_gap(cfg, sec, signals, summary)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "features.csv", header, rows)
    _write_json(out / "ingest.json", summary)
    print("ingest: " + ", ".join(f"{k}={v}" for k, v in summary.items()), file=sys.stderr)
    return EXIT_OK


COMMANDS = {"preprocess": cmd_preprocess, "estimate": cmd_estimate, "simulate": cmd_simulate, "validate": cmd_validate}


def build_parser():
    p = argparse.ArgumentParser(prog="physiodft", description="DFT and MNL choice models with physiological data")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__.strip().rstrip("."))
        s.add_argument("--config", help="JSON or YAML run configuration")
        s.add_argument("--data", help="input CSV (overrides config)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
        s.add_argument("--workers", type=int, help="worker threads for likelihood or simulation")
        s.add_argument("--draws", type=int, help="simulation draws per oracle case")
        s.add_argument("--tol", type=float, help="absolute tolerance for orthant probabilities")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PhysioDftError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
