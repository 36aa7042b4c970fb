"""Command surface: validated run configs, dispatch, artifacts, replay.

A run is a (command, params, seed, output_dir) quadruple.  Flags mirror
the config fields one to one, `--config file.json` replaces the flags
wholesale, and the FLOORWALK_SEED environment variable overrides the seed
from either source.  Each run claims its output directory with a
lockfile, writes the command's declared artifacts plus a manifest of
checksums, and exits 0 on success, 2 when a claim experiment comes back
not consistent, and 1 on any error.  `replay manifest.json` re-executes
the recorded config into a scratch directory and compares checksums.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, replace

from . import artifacts as art
from .dla import dla_run_continuous, dla_run_discrete
from .errors import (
    ChecksumMismatch,
    ConfigInvalid,
    FloorwalkError,
    IoError,
)
from .growth import radius_tail_experiment, simulate_pure_growth, \
    simulate_slowed_growth
from .kernel import build_kernel
from .lab import (
    CLAIMS,
    escape_probability_experiment,
    exit_asymmetry_experiment,
    ladder_tail_experiment,
    sqrt_envelope_suite,
)
from .lattice import Cluster, vertical_segment
from .measure import exact_profile, h_limit, mc_h_point_visits

__all__ = ["RunConfig", "main", "replay", "run", "validate_config"]

PROFILE_HEADER = "kind,x1,x2,tx1,tx2,value,stderr,method,n_samples,seed"
POINT_HEADER = "x1,x2,value,stderr,method,n_samples,seed"
LIMIT_HEADER = "x1,x2,value,converged"
EVENTS_HEADER = "t,sx1,sx2,tx1,tx2,accepted"
SERIES_HEADER = "n,t,h,radius,size"
TAIL_HEADER = "n,empirical,stderr,bound,runs,discarded"
KERNEL_HEADER = "x1,x2,a"
POINTS_HEADER = "parameter,estimate,stderr"

_INT, _FLOAT, _STR, _INT_LIST, _MAP = ("integer", "number", "string",
                                       "integer list", "object")

# every parameter a command understands; unknown keys are rejected
_PARAM_SPECS = {
    "hm-exact": {"segment": _INT, "cluster_path": _STR, "height": _INT},
    "hm-mc": {"segment": _INT, "cluster_path": _STR, "height": _INT,
              "x1": _INT, "x2": _INT, "samples": _INT},
    "hm-limit": {"segment": _INT, "cluster_path": _STR, "x1": _INT,
                 "x2": _INT, "schedule": _INT_LIST},
    "dla-discrete": {"n_steps": _INT},
    "dla-continuous": {"t_max": _FLOAT},
    "growth": {"kind": _STR, "t_max": _FLOAT, "width": _INT,
               "height": _INT, "initial_path": _STR},
    "tail": {"t": _FLOAT, "n_max": _INT, "runs": _INT},
    "kernel": {"radius": _INT},
    "verify": {"claim": _STR, "samples": _INT, "n_list": _INT_LIST,
               "r_list": _INT_LIST, "m_list": _INT_LIST, "mode": _STR,
               "segments": _INT_LIST, "singles": _INT_LIST,
               "animals": _MAP, "dla": _MAP},
}
_REQUIRED = {
    "hm-exact": (),
    "hm-mc": ("x1", "x2", "samples"),
    "hm-limit": ("x1", "x2", "schedule"),
    "dla-discrete": ("n_steps",),
    "dla-continuous": ("t_max",),
    "growth": ("kind", "t_max", "width", "height"),
    "tail": ("t", "n_max", "runs"),
    "kernel": ("radius",),
    "verify": ("claim",),
}
_CLUSTER_COMMANDS = ("hm-exact", "hm-mc", "hm-limit")


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict
    seed: int
    output_dir: str

    def to_doc(self) -> dict:
        return {"command": self.command, "params": self.params,
                "seed": self.seed, "output_dir": self.output_dir}


def _type_ok(value, kind) -> bool:
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value,
                                                                  bool)
    if kind == _STR:
        return isinstance(value, str)
    if kind == _INT_LIST:
        return (isinstance(value, list) and len(value) > 0
                and all(isinstance(v, int) and not isinstance(v, bool)
                        for v in value))
    return isinstance(value, dict)


def validate_config(doc) -> RunConfig:
    """Strict-schema check of a config document; raises ConfigInvalid
    with a JSON pointer to the first offending field."""
    if not isinstance(doc, dict):
        raise ConfigInvalid("/", "config must be a JSON object")
    unknown = set(doc) - {"command", "params", "seed", "output_dir"}
    if unknown:
        raise ConfigInvalid(f"/{sorted(unknown)[0]}", "unknown key")
    command = doc.get("command")
    if command not in _PARAM_SPECS:
        raise ConfigInvalid(
            "/command", f"must be one of {sorted(_PARAM_SPECS)}, "
            f"got {command!r}")
    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid("/params", "must be an object")
    spec = _PARAM_SPECS[command]
    for key, value in params.items():
        if key not in spec:
            raise ConfigInvalid(f"/params/{key}",
                                f"unknown parameter for {command}")
        if not _type_ok(value, spec[key]):
            raise ConfigInvalid(
                f"/params/{key}", f"expected {spec[key]}, "
                f"got {type(value).__name__}")
    for key in _REQUIRED[command]:
        if key not in params:
            raise ConfigInvalid(f"/params/{key}", "required parameter "
                                                  "is missing")
    if command in _CLUSTER_COMMANDS:
        given = [k for k in ("segment", "cluster_path") if k in params]
        if len(given) != 1:
            raise ConfigInvalid(
                "/params", "exactly one of segment or cluster_path "
                "must be given")
    if command == "growth" and params["kind"] not in ("pure", "slowed"):
        raise ConfigInvalid("/params/kind", "must be 'pure' or 'slowed'")
    if command == "verify":
        if params["claim"] not in CLAIMS:
            raise ConfigInvalid("/params/claim",
                                f"must be one of {sorted(CLAIMS)}")
        if params.get("mode", "exact") not in ("exact", "mc"):
            raise ConfigInvalid("/params/mode", "must be 'exact' or 'mc'")
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool)):
        raise ConfigInvalid("/seed", "expected integer, "
                                     f"got {type(seed).__name__}")
    if not 0 <= seed < 2**64:
        raise ConfigInvalid("/seed", "must fit in 64 bits")
    chash = art.config_hash(command, params, seed)
    output_dir = doc.get("output_dir", f"{command}-{chash}")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigInvalid("/output_dir", "expected nonempty string")
    return RunConfig(command=command, params=params, seed=seed,
                     output_dir=output_dir)


# ---------------------------------------------------------------------------
# command bodies; each returns (artifact names, meta, exit code)

def _load_cluster(params) -> Cluster:
    if "segment" in params:
        return vertical_segment(params["segment"])
    path = params["cluster_path"]
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return Cluster.from_text(fh.read())
    except OSError as exc:
        raise IoError(f"cannot read cluster {path}: {exc}") from exc


def _clean(meta: dict) -> dict:
    out = {}
    for key, value in meta.items():
        if isinstance(value, float) and not math.isfinite(value):
            value = None
        out[key] = value
    return out


def _cmd_hm_exact(params, seed, outdir, chash):
    cluster = _load_cluster(params)
    height = params.get("height", cluster.max_height + 1)
    profile = exact_profile(cluster, height=height)
    art.write_csv(os.path.join(outdir, "profile.csv"), PROFILE_HEADER,
                  profile.rows(), chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"), cluster, chash)
    meta = {"height": height, "sites": len(cluster),
            "total": profile.total.value}
    return ["profile.csv", "cluster.txt"], meta, 0


def _cmd_hm_mc(params, seed, outdir, chash):
    cluster = _load_cluster(params)
    height = params.get("height", cluster.max_height + 1)
    x = (params["x1"], params["x2"])
    est = mc_h_point_visits(cluster, x, height, params["samples"], seed)
    rows = [(x[0], x[1], est.value, est.stderr, est.method, est.n_samples,
             est.seed)]
    art.write_csv(os.path.join(outdir, "mc.csv"), POINT_HEADER, rows, chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"), cluster, chash)
    meta = {"height": height, "censored": est.censored}
    return ["mc.csv", "cluster.txt"], meta, 0


def _cmd_hm_limit(params, seed, outdir, chash):
    cluster = _load_cluster(params)
    x = (params["x1"], params["x2"])
    est = h_limit(cluster, x, params["schedule"])
    rows = [(x[0], x[1], est.value, int(est.converged))]
    art.write_csv(os.path.join(outdir, "limit.csv"), LIMIT_HEADER, rows,
                  chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"), cluster, chash)
    meta = {"converged": bool(est.converged),
            "schedule_top": params["schedule"][-1]}
    return ["limit.csv", "cluster.txt"], meta, 0


def _cmd_dla_discrete(params, seed, outdir, chash):
    report = dla_run_discrete(params["n_steps"], seed=seed)
    art.write_csv(os.path.join(outdir, "series.csv"), SERIES_HEADER,
                  report.rows(), chash)
    art.write_csv(os.path.join(outdir, "events.csv"), EVENTS_HEADER,
                  report.state.event_log.rows(), chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"),
                       report.state.cluster, chash)
    meta = {"n": report.state.n, "height": report.state.height,
            "radius": report.state.radius,
            "height_slope": report.height_slope}
    return ["series.csv", "events.csv", "cluster.txt"], _clean(meta), 0


def _cmd_dla_continuous(params, seed, outdir, chash):
    state = dla_run_continuous(params["t_max"], seed=seed)
    art.write_csv(os.path.join(outdir, "events.csv"), EVENTS_HEADER,
                  state.event_log.rows(), chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"), state.cluster,
                       chash)
    meta = {"n": state.n, "t": state.t, "height": state.height}
    return ["events.csv", "cluster.txt"], meta, 0


def _cmd_growth(params, seed, outdir, chash):
    if "initial_path" in params:
        try:
            with open(params["initial_path"], "r", encoding="utf-8") as fh:
                initial = Cluster.from_text(fh.read())
        except OSError as exc:
            raise IoError(f"cannot read initial cluster: {exc}") from exc
    else:
        initial = Cluster([(0, 0)])
    window = (params["width"], params["height"])
    simulate = (simulate_pure_growth if params["kind"] == "pure"
                else simulate_slowed_growth)
    state, log = simulate(initial, params["t_max"], window, seed)
    rows = [(t, s[0], s[1], y[0], y[1], int(born))
            for t, s, y, born in log.rows]
    art.write_csv(os.path.join(outdir, "arrows.csv"), EVENTS_HEADER, rows,
                  chash)
    art.write_snapshot(os.path.join(outdir, "cluster.txt"), state.occupied,
                       chash)
    meta = {"overflow": state.overflow, "t": state.t,
            "sites": len(state.occupied)}
    return ["arrows.csv", "cluster.txt"], meta, 0


def _cmd_tail(params, seed, outdir, chash):
    rows = radius_tail_experiment(params["t"], params["n_max"],
                                  params["runs"], seed)
    table = [(r["n"], r["empirical"], r["stderr"], r["bound"], r["runs"],
              r["discarded"]) for r in rows]
    art.write_csv(os.path.join(outdir, "tail.csv"), TAIL_HEADER, table,
                  chash)
    return ["tail.csv"], {"rows": len(table)}, 0


def _cmd_kernel(params, seed, outdir, chash):
    table = build_kernel(params["radius"])
    art.write_csv(os.path.join(outdir, "kernel.csv"), KERNEL_HEADER,
                  table.rows(), chash)
    meta = {"fitted_slope": table.fitted_slope,
            "fitted_intercept": table.fitted_intercept}
    return ["kernel.csv"], meta, 0


def _cmd_verify(params, seed, outdir, chash):
    claim = params["claim"]
    if claim.startswith("thm-"):
        overrides = {key: params[key] for key in
                     ("segments", "singles", "animals", "dla")
                     if key in params}
        reports = sqrt_envelope_suite(overrides or None, seed=seed)
        report = next(r for r in reports if r.claim_id == claim)
    elif claim == "eq-4.14":
        report = escape_probability_experiment(
            params.get("n_list", [16, 32, 64, 128, 256]),
            params.get("samples", 10**6), seed=seed)
    elif claim == "lemma-4.3":
        report = ladder_tail_experiment(
            params.get("r_list", [16, 32, 64, 128, 256]),
            params.get("samples", 10**6), seed=seed)
    else:
        report = exit_asymmetry_experiment(
            params.get("m_list", list(range(2, 13))),
            params.get("mode", "exact"), params.get("samples", 0),
            seed=seed)
    art.write_json(os.path.join(outdir, "report.json"), report.to_dict(),
                   chash)
    art.write_csv(os.path.join(outdir, "points.csv"), POINTS_HEADER,
                  report.points, chash)
    art.write_json(os.path.join(outdir, "registry.json"),
                   {"claims": CLAIMS}, chash)
    meta = {"claim": claim, "verdict": report.verdict}
    code = 0 if report.verdict == "consistent" else 2
    return ["report.json", "points.csv", "registry.json"], meta, code


_DISPATCH = {
    "hm-exact": _cmd_hm_exact,
    "hm-mc": _cmd_hm_mc,
    "hm-limit": _cmd_hm_limit,
    "dla-discrete": _cmd_dla_discrete,
    "dla-continuous": _cmd_dla_continuous,
    "growth": _cmd_growth,
    "tail": _cmd_tail,
    "kernel": _cmd_kernel,
    "verify": _cmd_verify,
}


def run(config: RunConfig) -> int:
    """Execute one validated run: lock, dispatch, artifacts, manifest."""
    chash = art.config_hash(config.command, config.params, config.seed)
    try:
        os.makedirs(config.output_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {config.output_dir}: {exc}") from exc
    started = time.monotonic()
    with art.OutputLock(config.output_dir):
        names, meta, code = _DISPATCH[config.command](
            config.params, config.seed, config.output_dir, chash)
        art.write_manifest(config.output_dir, config.to_doc(), chash,
                           names, meta, time.monotonic() - started)
    return code


def replay(manifest_path) -> int:
    """Re-execute a manifest's config and compare artifact checksums."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read manifest: {exc}") from exc
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise IoError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "config" not in doc \
            or "artifacts" not in doc:
        raise IoError("manifest lacks config or artifacts")
    config = validate_config(doc["config"])
    base = os.path.dirname(os.path.abspath(manifest_path))
    for name in doc["artifacts"]:
        if not os.path.isfile(os.path.join(base, name)):
            raise IoError(f"artifact {name} referenced by the manifest "
                          f"is missing")
    with tempfile.TemporaryDirectory() as scratch:
        run(replace(config, output_dir=scratch))
        with open(os.path.join(scratch, art.MANIFEST_NAME),
                  encoding="utf-8") as fh:
            fresh = json.load(fh)
    divergent = sorted(
        name for name, digest in doc["artifacts"].items()
        if fresh["artifacts"].get(name) != digest)
    if divergent:
        raise ChecksumMismatch(
            "divergent artifacts: " + ", ".join(divergent))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    # usage mistakes are config errors (exit 1), not verdicts (exit 2)
    def error(self, message):
        raise ConfigInvalid("/", message)


def _int_list_flag(text: str):
    return [int(tok) for tok in text.split(",") if tok]


_FLAG_TYPES = {_INT: int, _FLOAT: float, _STR: str,
               _INT_LIST: _int_list_flag}


def _build_parser() -> _Parser:
    parser = _Parser(prog="floorwalk")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, spec in _PARAM_SPECS.items():
        p = sub.add_parser(command)
        for key, kind in spec.items():
            if kind == _MAP:
                continue  # nested objects ride in via --config only
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, type=_FLAG_TYPES[kind],
                           default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", dest="output_dir", default=None)
        p.add_argument("--config", dest="config", default=None)
    rp = sub.add_parser("replay")
    rp.add_argument("manifest")
    return parser


def _doc_from_args(args) -> dict:
    params = {}
    for key in _PARAM_SPECS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    doc = {"command": args.command, "params": params}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.output_dir is not None:
        doc["output_dir"] = args.output_dir
    return doc


def _load_config_file(path, command) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ConfigInvalid("/", f"config file is not valid JSON: {exc}") \
            from None
    if not isinstance(doc, dict):
        raise ConfigInvalid("/", "config must be a JSON object")
    if doc.get("command", command) != command:
        raise ConfigInvalid(
            "/command", f"config file names {doc.get('command')!r} but "
            f"the command line says {command!r}")
    doc.setdefault("command", command)
    return doc


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "replay":
            return replay(args.manifest)
        if args.config is not None:
            doc = _load_config_file(args.config, args.command)
        else:
            doc = _doc_from_args(args)
        env_seed = os.environ.get("FLOORWALK_SEED")
        if env_seed is not None:
            try:
                doc["seed"] = int(env_seed)
            except ValueError:
                raise ConfigInvalid(
                    "/seed", f"FLOORWALK_SEED is not an integer: "
                    f"{env_seed!r}") from None
        return run(validate_config(doc))
    except FloorwalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
