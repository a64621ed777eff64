"""Command-line front end: ``python -m interlacements <command> ...``.

Parameters come from an optional TOML file (``--config``) overridden by
flags.  Every JSON or CSV result embeds a manifest with the config digest,
the package version and the seed; ``audit`` re-checks those manifests.

Exit codes: 0 ok, 2 usage, 3 numerical failure, 4 failed precondition.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:        # Python < 3.11
    import tomli as tomllib

from . import __version__, bounds, percolation, renorm
from .errors import InterlacementError, NumericalError
from .green import GreenTable
from .potential import FiniteSet, equilibrium
from .sampler import sample_interlacement

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 2, 3, 4
THREADS_ENV = "INTERLACEMENTS_THREADS"
GRID_MAGIC = b"RIOCC002"
QUANT_BITS = 20
INF_SENTINEL = 0xFFFFFFFF
# parameters that change how, not what, is computed
_NOT_DIGESTED = {"out", "workers"}


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    params: dict
    seed: int | None = None
    out: str | None = None
    workers: int = 1

    def to_dict(self) -> dict:
        return {"command": self.command, "params": self.params, "seed": self.seed,
                "out": self.out, "workers": self.workers}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(data["command"], dict(data["params"]), data.get("seed"),
                   data.get("out"), int(data.get("workers", 1)))

    def result_config(self) -> dict:
        """The part of the config that determines the results."""
        return {"command": self.command, "seed": self.seed,
                "params": {k: v for k, v in self.params.items() if k not in _NOT_DIGESTED}}

    def digest(self) -> str:
        text = json.dumps(self.result_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def manifest(self) -> dict:
        return {"config": self.result_config(), "digest": self.digest(),
                "version": __version__, "seed": self.seed}


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _constants(text) -> dict:
    if isinstance(text, dict):
        return {k: float(v) for k, v in text.items()}
    out = {}
    for item in str(text).split(","):
        if not item.strip():
            continue
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"constant {item!r} is not of the form name=value")
        out[key.strip()] = float(val)
    return out


# command -> {param: (type, default, help)}; _REQUIRED marks mandatory parameters
_REQUIRED = object()
COMMANDS = {
    "green": {"dim": (int, _REQUIRED, "lattice dimension"),
              "point": (_int_list, _REQUIRED, "comma-separated coordinates"),
              "tol": (float, 1e-10, "absolute quadrature tolerance")},
    "capacity": {"dim": (int, _REQUIRED, "lattice dimension"),
                 "set": (str, _REQUIRED, "file, builtin:ball:R or builtin:pair:dx,dy,..")},
    "sample": {"dim": (int, _REQUIRED, "lattice dimension"),
               "box": (int, _REQUIRED, "side length L of the window [0, L)^d"),
               "umax": (float, _REQUIRED, "largest level"),
               "shell": (float, None, "truncation radius (default: twice the circumradius)"),
               "mode": (str, "truncate", "truncate or reentry"),
               "keep_paths": (bool, False, "also write the trajectories"),
               "out": (str, _REQUIRED, "output path prefix")},
    "crossing": {"kind": (str, _REQUIRED, "vacant or occupied"),
                 "dim": (int, 3, "lattice dimension"),
                 "L0": (int, 10, "initial scale"),
                 "level": (int, 0, "renormalization level n"),
                 "u": (_float_list, _REQUIRED, "comma-separated levels"),
                 "trials": (int, _REQUIRED, "number of samples"),
                 "mode": (str, "reentry", "sampler mode"),
                 "out": (str, None, "CSV path (default: stdout)"),
                 "workers": (int, None, "threads")},
    "eta": {"M": (_int_list, _REQUIRED, "comma-separated radii"),
            "u": (_float_list, _REQUIRED, "comma-separated levels"),
            "trials": (int, _REQUIRED, "number of samples"),
            "dim": (int, 3, "lattice dimension"),
            "mode": (str, "reentry", "sampler mode"),
            "out": (str, None, "CSV path (default: stdout)"),
            "workers": (int, None, "threads")},
    "ustar": {"bracket": (_float_list, _REQUIRED, "u_lo,u_hi"),
              "threshold": (float, 0.5, "proxy threshold"),
              "M": (int, 20, "radius"),
              "trials": (int, _REQUIRED, "number of samples"),
              "iters": (int, 8, "bisection steps"),
              "dim": (int, 3, "lattice dimension"),
              "mode": (str, "reentry", "sampler mode"),
              "out": (str, None, "JSON path (default: stdout)"),
              "workers": (int, None, "threads")},
    "scales": {"dim": (int, _REQUIRED, "lattice dimension"),
               "L0": (int, _REQUIRED, "initial scale"),
               "nmax": (int, _REQUIRED, "last level"),
               "u0": (float, None, "initial level"),
               "r": (int, None, "sprinkling exponent"),
               "c1": (float, None, "level increment constant")},
    "verify": {"kind": (str, _REQUIRED, "vacant or planar"),
               "pn": (str, _REQUIRED, "CSV with columns n,p"),
               "constants": (_constants, _REQUIRED, "c2=..,c3=.. (vacant: also u0, r, c1)"),
               "dim": (int, _REQUIRED, "lattice dimension"),
               "L0": (int, _REQUIRED, "initial scale")},
    "peierls": {"dmin": (int, 14, "smallest dimension"),
                "dmax": (int, 24, "largest dimension"),
                "out": (str, None, "CSV path (default: stdout)")},
    "u1": {"dim": (int, _REQUIRED, "lattice dimension"),
           "m": (int, _REQUIRED, "subspace dimension"),
           "lambda": (float, _REQUIRED, "exponent lambda")},
    "audit": {"paths": (str, _REQUIRED, "comma-separated output files or directories")},
}
_SEEDED = {"sample", "crossing", "eta", "ustar"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="interlacements",
                                     description="Random interlacements laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML file with parameter values")
        if name in _SEEDED:
            p.add_argument("--seed", type=int)
        for key, (kind, _, text) in params.items():
            flag = "--" + key.replace("_", "-")
            if kind is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, help=text)
            else:
                p.add_argument(flag, dest=key, help=text)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults, the config file and flags; validate before any compute."""
    command = args.command
    declared = COMMANDS[command]
    values = {}
    if args.config:
        with open(args.config, "rb") as fh:
            values.update(tomllib.load(fh))
        values.pop("command", None)
    for key in declared:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    unknown = set(values) - set(declared) - {"seed"}
    if unknown:
        raise UsageError(f"unknown parameters for {command}: {sorted(unknown)}")
    seed = getattr(args, "seed", None)
    seed = values.pop("seed", None) if seed is None else seed
    params = {}
    for key, (kind, default, _) in declared.items():
        if key in values:
            try:
                params[key] = kind(values[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for --{key}: {values[key]!r} ({exc})") from exc
        elif default is _REQUIRED:
            raise UsageError(f"{command} needs --{key.replace('_', '-')}")
        else:
            params[key] = default
    if command in _SEEDED:
        if seed is None:
            raise UsageError(f"{command} needs --seed")
        seed = int(seed)
        if seed < 0:
            raise UsageError("seed must be nonnegative")
    workers = params.get("workers")
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1"))
    if "workers" in params:
        params["workers"] = workers
    cfg = ExperimentConfig(command, params, seed, params.get("out"), workers)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    p = cfg.params
    if cfg.workers < 1:
        raise UsageError("workers must be at least 1")
    if "dim" in p and p["dim"] < 3:
        raise UsageError("dim must be at least 3")
    if cfg.command == "green" and len(p["point"]) != p["dim"]:
        raise UsageError(f"point has {len(p['point'])} coordinates, dim is {p['dim']}")
    if cfg.command == "crossing" and p["kind"] not in ("vacant", "occupied"):
        raise UsageError("--kind must be vacant or occupied")
    if cfg.command == "verify" and p["kind"] not in ("vacant", "planar"):
        raise UsageError("--kind must be vacant or planar")
    if cfg.command == "verify":
        need = {"vacant": ("c2", "c3", "u0", "r", "c1"), "planar": ("c5", "c6")}[p["kind"]]
        missing = [k for k in need if k not in p["constants"]]
        if missing:
            raise UsageError(f"--constants is missing {missing}")
    if cfg.command == "ustar":
        if len(p["bracket"]) != 2:
            raise UsageError("--bracket takes exactly two levels")
    if cfg.command in ("sample", "crossing", "eta", "ustar") and p["mode"] not in (
            "truncate", "reentry"):
        raise UsageError("--mode must be truncate or reentry")
    if cfg.command in ("crossing", "eta", "ustar") and p["trials"] < 1:
        raise UsageError("--trials must be positive")
    if cfg.command == "peierls" and not 5 <= p["dmin"] <= p["dmax"]:
        raise UsageError("need 5 <= dmin <= dmax")
    if cfg.command == "scales":
        given = [p[k] is not None for k in ("u0", "r", "c1")]
        if any(given) and not all(given):
            raise UsageError("--u0, --r and --c1 go together")


def _json_text(payload: dict, cfg: ExperimentConfig) -> str:
    return json.dumps({**payload, "manifest": cfg.manifest()}, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows: list[list], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    m = cfg.manifest()
    buf.write(f"# digest={m['digest']} version={m['version']} seed={m['seed']}\n")
    buf.write("# config=" + json.dumps(m["config"], sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in rows])
    return buf.getvalue()


def _emit(text: str, path: str | None, stdout):
    if path:
        Path(path).write_text(text)
    else:
        stdout.write(text)


def _parse_set(text: str, dim: int) -> FiniteSet:
    if text.startswith("builtin:ball:"):
        return FiniteSet.ball(dim, int(text.split(":")[2]))
    if text.startswith("builtin:pair:"):
        offset = _int_list(text.split(":")[2])
        if len(offset) != dim:
            raise UsageError(f"pair offset has {len(offset)} coordinates, dim is {dim}")
        return FiniteSet([[0] * dim, offset], dim)
    if text.startswith("builtin:"):
        raise UsageError(f"unknown builtin set {text!r}")
    return FiniteSet.from_file(text, dim)


def quantize_levels(levels: np.ndarray, u_max: float) -> np.ndarray:
    """Levels to uint32 codes k with level in ((k-1) u_max / 2^20, k u_max / 2^20].

    Sublevel sets at the grid levels j u_max / 2^20 are preserved: a site is
    covered at such a level exactly when its code is at most j.
    """
    out = np.full(levels.shape, INF_SENTINEL, dtype=np.uint32)
    fin = np.isfinite(levels)
    if fin.any():
        k = np.ceil(levels[fin] * (1 << QUANT_BITS) / u_max)
        out[fin] = np.clip(k, 1, 1 << QUANT_BITS).astype(np.uint32)
    return out


def write_grid(path: Path, occ, codes: np.ndarray, digest: str = "0" * 64):
    head = GRID_MAGIC + digest.encode("ascii") + struct.pack("<I", len(occ.shape))
    head += struct.pack(f"<{len(occ.shape)}q", *occ.lower)
    head += struct.pack(f"<{len(occ.shape)}I", *occ.shape)
    head += struct.pack("<dQdd", occ.u_max, occ.n_trajectories, occ.bias_bound, occ.bias_total)
    path.write_bytes(head + codes.astype("<u4").tobytes(order="C"))


def read_grid(path) -> dict:
    """Inverse of the binary dump written by ``sample``."""
    data = Path(path).read_bytes()
    if data[:8] != GRID_MAGIC:
        raise UsageError(f"{path} is not a level grid dump")
    digest = data[8:72].decode("ascii")
    pos = 72
    (d,) = struct.unpack_from("<I", data, pos)
    pos += 4
    lower = struct.unpack_from(f"<{d}q", data, pos)
    pos += 8 * d
    shape = struct.unpack_from(f"<{d}I", data, pos)
    pos += 4 * d
    u_max, n, bound, total = struct.unpack_from("<dQdd", data, pos)
    pos += 32
    codes = np.frombuffer(data, dtype="<u4", offset=pos).reshape(shape)
    return {"digest": digest, "lower": lower, "shape": shape, "u_max": u_max, "n_trajectories": n,
            "bias_bound": bound, "bias_total": total, "codes": codes}


def _run_sample(cfg: ExperimentConfig) -> str:
    p = cfg.params
    W = FiniteSet.box(p["dim"], [0] * p["dim"], [p["box"]] * p["dim"])
    R = p["shell"] if p["shell"] is not None else max(2.0 * W.circumradius, 1.0)
    occ = sample_interlacement(W, p["umax"], R, cfg.seed, mode=p["mode"],
                               keep_paths=p["keep_paths"], workers=cfg.workers)
    out = Path(p["out"])
    grid = out.with_suffix(".bin")
    write_grid(grid, occ, quantize_levels(occ.levels, occ.u_max) if occ.u_max > 0
               else np.full(occ.shape, INF_SENTINEL, dtype=np.uint32), cfg.digest())
    files = [grid.name]
    if p["keep_paths"]:
        trajs = occ.trajectories
        steps = [t.steps for t in trajs]
        paths = out.with_suffix(".paths.npz")
        np.savez(paths, starts=np.array([t.start for t in trajs], dtype=np.int64).reshape(
                     -1, p["dim"]),
                 labels=np.array([t.label for t in trajs]),
                 offsets=np.cumsum([0] + [len(s) for s in steps]),
                 steps=np.concatenate(steps) if steps else np.empty(0, np.int8),
                 manifest=np.array(json.dumps(cfg.manifest(), sort_keys=True)))
        files.append(paths.name)
    meta = {"files": files, "shape": list(occ.shape), "lower": [int(v) for v in occ.lower],
            "u_max": occ.u_max, "n_trajectories": occ.n_trajectories, "shell": R,
            "mode": occ.mode, "bias_bound": occ.bias_bound, "bias_total": occ.bias_total,
            "step_cap_hits": occ.step_cap_hits, "quantization": f"2^{QUANT_BITS}",
            "inf_sentinel": INF_SENTINEL,
            "grid_sha256": hashlib.sha256(grid.read_bytes()).hexdigest()}
    sidecar = out.with_suffix(".json")
    sidecar.write_text(_json_text(meta, cfg))
    written = [str(out.with_name(f)) for f in files] + [str(sidecar)]
    return json.dumps({"written": written}) + "\n"


def _read_pn(path: str) -> dict[int, float]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or [c.strip() for c in rows[0][:2]] != ["n", "p"]:
        raise UsageError(f"{path} must start with a header row 'n,p'")
    return {int(r[0]): float(r[1]) for r in rows[1:] if r}


def run(cfg: ExperimentConfig, stdout=None) -> int:
    """Execute a resolved config, writing results; returns the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    p = cfg.params
    c = cfg.command
    if c == "green":
        table = GreenTable(p["dim"], tol=p["tol"])
        value = table.value(p["point"])
        _emit(_json_text({"dim": p["dim"], "point": p["point"], "value": value,
                          "error": table.error(p["point"]), "quadrature": table.config},
                         cfg), None, stdout)
    elif c == "capacity":
        K = _parse_set(p["set"], p["dim"])
        eq = equilibrium(K)
        _emit(_json_text({"capacity": eq.capacity, "weights": eq.weights.tolist(),
                          "points": K.points.tolist(), "residual": eq.residual}, cfg),
              None, stdout)
    elif c == "sample":
        stdout.write(_run_sample(cfg))
    elif c == "crossing":
        est = percolation.estimate_crossing(p["kind"], p["level"], p["u"], p["trials"],
                                            cfg.seed, d=p["dim"], L0=p["L0"],
                                            mode=p["mode"], workers=cfg.workers)
        rows = [[e.u, e.level, e.trials, e.successes, e.lo95, e.hi95] for e in est]
        _emit(_csv_text(["u", "level", "trials", "successes", "lo95", "hi95"], rows, cfg),
              p["out"], stdout)
    elif c == "eta":
        samples = percolation.eta_samples(p["M"], max(p["u"]), p["trials"], cfg.seed,
                                          d=p["dim"], mode=p["mode"], workers=cfg.workers)
        rows = []
        for M in samples.radii:
            for u in p["u"]:
                e = samples.estimate(u, M)
                rows.append([M, e.u, e.trials, e.successes, e.lo95, e.hi95])
        _emit(_csv_text(["M", "u", "trials", "successes", "lo95", "hi95"], rows, cfg),
              p["out"], stdout)
    elif c == "ustar":
        lo, hi = p["bracket"]
        b = percolation.bracket_u_star(lo, hi, p["M"], p["trials"], p["threshold"], cfg.seed,
                                       iters=p["iters"], d=p["dim"], mode=p["mode"],
                                       workers=cfg.workers)
        ends = {k: {"u": e.u, "estimate": e.estimate, "lo95": e.lo95, "hi95": e.hi95}
                for k, e in (("lo", b.estimate_lo), ("hi", b.estimate_hi))}
        _emit(_json_text({"interval": [b.lo, b.hi], "threshold": b.threshold, "M": b.M,
                          "endpoints": ends, "note": b.note}, cfg), p["out"], stdout)
    elif c == "scales":
        seq = renorm.build_scales(p["dim"], p["L0"], p["nmax"])
        if p["u0"] is not None:
            renorm.build_levels(seq, p["u0"], p["r"], p["c1"])
        _emit(_json_text(seq.as_dict(), cfg), None, stdout)
    elif c == "verify":
        pn = _read_pn(p["pn"])
        k = p["constants"]
        seq = renorm.build_scales(p["dim"], p["L0"], max(pn) if pn else 0)
        if p["kind"] == "vacant":
            renorm.build_levels(seq, k["u0"], int(k["r"]), k["c1"])
            rep = renorm.verify_induction_vacant(seq, pn, k["c2"], k["c3"],
                                                 c4=k.get("c4", 1.0))
        else:
            rep = renorm.verify_induction_planar(seq, pn, k["c5"], k["c6"])
        _emit(_json_text(rep.as_dict(), cfg), None, stdout)
    elif c == "peierls":
        rows = []
        for d in range(p["dmin"], p["dmax"] + 1):
            value, holds = bounds.peierls_condition(d)
            rows.append([d, value, holds])
        _emit(_csv_text(["d", "value", "holds"], rows, cfg), p["out"], stdout)
    elif c == "u1":
        bp = bounds.BoundParams.make(p["dim"], p["m"], p["lambda"])
        u1 = bounds.u1_threshold(p["dim"], p["m"], p["lambda"])
        _emit(_json_text({"u1": u1, "chi": bp.chi, "lambda_tilde": bp.lam_tilde}, cfg),
              None, stdout)
    elif c == "audit":
        report = audit([s for s in p["paths"].split(",") if s])
        stdout.write(json.dumps(report, sort_keys=True) + "\n")
        return EXIT_OK if report["ok"] else EXIT_PRECONDITION
    return EXIT_OK


def _manifest_problems(manifest: dict | None) -> list[str]:
    if not isinstance(manifest, dict):
        return ["no manifest"]
    problems = [f"missing {k}" for k in ("digest", "version", "seed", "config")
                if k not in manifest]
    if not problems:
        recomputed = ExperimentConfig.from_dict(manifest["config"]).digest()
        if recomputed != manifest["digest"]:
            problems.append("digest does not match the embedded config")
        if manifest["config"].get("seed") != manifest["seed"]:
            problems.append("seed differs from the embedded config")
    return problems


def _audit_file(path: Path) -> list[str]:
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            return [f"unreadable JSON: {exc}"]
        problems = _manifest_problems(data.get("manifest"))
        for name in data.get("files", []):
            if name.endswith(".bin"):
                grid = path.with_name(name)
                if not grid.exists():
                    problems.append(f"missing grid {name}")
                elif hashlib.sha256(grid.read_bytes()).hexdigest() != data.get("grid_sha256"):
                    problems.append(f"grid {name} does not match its checksum")
        return problems
    if path.suffix == ".csv":
        lines = path.read_text().splitlines()
        if len(lines) < 2 or not lines[0].startswith("# digest=") \
                or not lines[1].startswith("# config="):
            return ["no manifest header"]
        fields = dict(f.split("=", 1) for f in lines[0][2:].split())
        config = json.loads(lines[1][len("# config="):])
        seed = None if fields.get("seed") == "None" else int(fields.get("seed"))
        return _manifest_problems({"digest": fields.get("digest"),
                                   "version": fields.get("version"),
                                   "seed": seed, "config": config})
    if path.suffix == ".bin":
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            return ["grid dump without JSON sidecar"]
        try:
            digest = read_grid(path)["digest"]
        except (UsageError, struct.error, UnicodeDecodeError, ValueError):
            return ["unreadable grid dump"]
        manifest = json.loads(sidecar.read_text()).get("manifest") or {}
        return [] if digest == manifest.get("digest") else ["grid digest differs from sidecar"]
    if path.suffix == ".npz":
        with np.load(path) as data:
            if "manifest" not in data:
                return ["no manifest"]
            return _manifest_problems(json.loads(str(data["manifest"])))
    return []


def audit(paths: list[str]) -> dict:
    """Check that every JSON/CSV output carries a consistent manifest."""
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(f for f in p.rglob("*") if f.suffix in (".json", ".csv", ".bin", ".npz"))
        elif p.exists():
            files.append(p)
        else:
            files.append(p)
    results = {}
    for f in files:
        results[str(f)] = ["file not found"] if not f.exists() else _audit_file(f)
    return {"ok": all(not v for v in results.values()), "files": results}


def main(argv: list[str] | None = None, stdout=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(args)
        return run(cfg, stdout)
    except (UsageError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"interlacements {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"interlacements {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InterlacementError, ValueError) as exc:
        print(f"interlacements {args.command}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
