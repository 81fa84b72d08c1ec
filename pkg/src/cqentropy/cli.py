"""Command-line front end.

    cqentropy bb84 --n 1e6 --k 1e5 --ez 0.02 --ex 0.02 --eps-sec 1e-9 --leak auto
    cqentropy diqkd --n 1e6 --k 1e6 --omega 0.85 --eps-t 1e-10 --eps-g 1e-10 --leak auto --qber 0.05
    cqentropy qrng --n 1e6 --k 1e5 --Q 0.005 --eps-sec 1e-10
    cqentropy mineval --lambdas 0.7,0.3
    cqentropy simulate bb84 --pairs 10000 --depol 0.08 --seed 1

Every command accepts --out {json,csv,text}, --seed, --config FILE and
--sweep NAME=START:STOP:STEPS. Values come from built-in defaults, then the
JSON config file, then explicit flags. Reports echo the resolved parameters
under "config", so feeding that object back through --config reproduces the
run. Exit status: 0 success, 2 invalid input, 3 numerical failure.

Bitstreams from ``simulate qrng --emit-bits`` are packed little-endian within
each byte: bit i of byte j is raw bit 8j + i.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bb84, bounds, diqkd, minentropy, qrng
from .errors import ConfigParse, NumericalError, OutOfRange, ValidationError

FORMATS = ("json", "csv", "text")


def _number(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigParse(f"not a number: {text!r}") from None


def _count(text) -> int:
    v = _number(text)
    if not math.isfinite(v) or not v.is_integer():
        raise OutOfRange(f"expected an integer count, got {text!r}")
    return int(v)


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [_number(v) for v in text]
    return [_number(v) for v in str(text).split(",") if v.strip()]


def _leak(text):
    if text == "auto":
        return "auto"
    return _number(text)


@dataclass
class Param:
    name: str
    parse: Callable
    default: object = None
    help: str = ""
    flag: str | None = None

    @property
    def option(self) -> str:
        return self.flag or "--" + self.name.replace("_", "-")


@dataclass
class Command:
    name: str
    params: list[Param]
    run: Callable[[dict, int], dict]
    help: str = ""
    sweepable: bool = True
    extra: list[Param] = field(default_factory=list)


def _bb84(cfg: dict, seed: int) -> dict:
    budget = bounds.FailureBudget.from_eps_sec(cfg["eps_sec"], cfg["eps_cor"])
    if cfg["leak"] == "auto":
        p = bb84.Bb84Params.with_auto_leak(cfg["n"], cfg["k"], cfg["ex"], cfg["ez"], budget, cfg["efficiency"])
    else:
        p = bb84.Bb84Params(cfg["n"], cfg["k"], cfg["ex"], cfg["ez"], cfg["leak"], budget)
    return bb84.bb84_key_length(p).to_dict()


def _diqkd(cfg: dict, seed: int) -> dict:
    budget = bounds.FailureBudget.for_diqkd(cfg["eps_t"], cfg["eps_g"], cfg["eps_cor"])
    if cfg["leak"] == "auto":
        if cfg["qber"] is None:
            raise OutOfRange("--leak auto needs --qber")
        p = diqkd.DiqkdParams.with_auto_leak(cfg["n"], cfg["k"], cfg["omega"], cfg["qber"], budget, cfg["efficiency"])
    else:
        p = diqkd.DiqkdParams(cfg["n"], cfg["k"], cfg["omega"], cfg["leak"], budget)
    return diqkd.diqkd_key_length(p).to_dict()


def _qrng(cfg: dict, seed: int) -> dict:
    if cfg["asymptotic"]:
        q = min(max(cfg["Q"], 0.0), 0.75)
        return {"q_hat": q, "rate": qrng.asymptotic_rate(q)}
    budget = bounds.FailureBudget.from_eps_sec(cfg["eps_sec"])
    rep = qrng.qrng_output_length(qrng.QrngParams(cfg["n"], cfg["k"], cfg["Q"], budget)).to_dict()
    rep["rate"] = rep["terms"]["rate"]
    return rep


def _mineval(cfg: dict, seed: int) -> dict:
    prof = minentropy.EigProfile(np.asarray(cfg["lambdas"], dtype=float))
    return {"d": prof.d, "hmin": minentropy.min_entropy_lb(prof), "pguess": minentropy.guess_prob_bound(prof)}


def _sim_bb84(cfg: dict, seed: int) -> dict:
    s = bb84.simulate_bb84(cfg["pairs"], cfg["depol"], seed, cfg["p_x"])
    return {"e_x": s.e_x, "e_z": s.e_z, "phase_error": s.phase_error, "counts": s.counts}


def _sim_chsh(cfg: dict, seed: int) -> dict:
    if cfg["spectrum"] is not None:
        spec = diqkd.SingleRoundSpectrum(*cfg["spectrum"]) if len(cfg["spectrum"]) == 4 else None
        if spec is None:
            raise OutOfRange("--spectrum needs four weights l00,l10,l01,l11")
    else:
        spec = diqkd.SingleRoundSpectrum.werner(cfg["werner"])
    angles = diqkd.MeasurementAngles(cfg["alpha"], cfg["beta"])
    s = diqkd.simulate_chsh(cfg["rounds"], spec, angles, seed, cfg["key_rounds"])
    predicted = diqkd.winning_freq(spec, diqkd.chsh_decompose(angles))
    return {"omega": s.omega, "omega_predicted": predicted, "qber": s.qber, "counts": s.counts}


def _source(cfg: dict) -> qrng.FockDiagonalState:
    kind = cfg["source"]
    if kind == "poisson":
        return qrng.FockDiagonalState.poisson(cfg["mu"])
    if kind == "thermal":
        return qrng.FockDiagonalState.thermal(cfg["mu"])
    if kind == "fock":
        return qrng.FockDiagonalState.fock(_count(cfg["mu"]) if cfg["mu"] else 0)
    raise OutOfRange(f"unknown source {kind!r}; choose poisson, thermal or fock")


def _sim_qrng(cfg: dict, seed: int) -> dict:
    src = _source(cfg)
    s = qrng.simulate_qrng(cfg["rounds"], src, seed)
    bits = qrng.symbols_to_bits(s.x)
    out = {
        "click_freq": s.click_freq,
        "symbol_counts": np.bincount(s.x, minlength=qrng.BINS).tolist(),
        "hmin_per_round": qrng.qrng_hmin_per_round(qrng.residue_profile(src)),
        "raw_bits": int(bits.size),
    }
    if cfg["extract_len"]:
        length = cfg["extract_len"]
        rng = np.random.default_rng([seed, 1])
        hash_seed = qrng.ToeplitzSeed.random(bits.size, length, rng)
        bits = qrng.toeplitz_extract(bits, hash_seed, length)
        out["extracted_bits"] = int(bits.size)
    if cfg["emit_bits"]:
        with open(cfg["emit_bits"], "wb") as fh:
            fh.write(np.packbits(bits, bitorder="little").tobytes())
        out["bits_written"] = int(bits.size)
    return out


_EPS = [
    Param("eps_cor", _number, 1e-15, "correctness parameter"),
]

COMMANDS = {
    "bb84": Command(
        "bb84",
        [
            Param("n", _count, None, "key-generation bits"),
            Param("k", _count, None, "test bits per basis"),
            Param("ez", _number, None, "observed Z-basis error rate"),
            Param("ex", _number, None, "observed X-basis error rate"),
            Param("eps_sec", _number, 1e-9, "secrecy parameter"),
            *_EPS,
            Param("leak", _leak, "auto", "error-correction leakage in bits, or 'auto'"),
            Param("efficiency", _number, bb84.LEAK_EFFICIENCY, "reconciliation efficiency for --leak auto"),
        ],
        _bb84,
        "BB84 finite key length",
    ),
    "diqkd": Command(
        "diqkd",
        [
            Param("n", _count, None, "key rounds per setting combination"),
            Param("k", _count, None, "test rounds per setting combination"),
            Param("omega", _number, None, "observed CHSH winning frequency"),
            Param("eps_t", _number, 1e-10, "testing failure probability"),
            Param("eps_g", _number, 1e-10, "generation failure probability"),
            *_EPS,
            Param("leak", _leak, "auto", "error-correction leakage in bits, or 'auto'"),
            Param("qber", _number, None, "key-round bit error rate for --leak auto"),
            Param("efficiency", _number, 1.16, "reconciliation efficiency for --leak auto"),
        ],
        _diqkd,
        "DI-QKD finite key length",
    ),
    "qrng": Command(
        "qrng",
        [
            Param("n", _count, None, "generation rounds"),
            Param("k", _count, None, "test rounds"),
            Param("Q", _number, None, "observed click frequency", flag="--Q"),
            Param("eps_sec", _number, 1e-10, "secrecy parameter"),
            Param("asymptotic", bool, False, "report the infinite-n rate 2 - H(Q)"),
        ],
        _qrng,
        "QRNG output length",
    ),
    "mineval": Command(
        "mineval",
        [Param("lambdas", _float_list, None, "comma-separated eigenvalue profile")],
        _mineval,
        "min-entropy bound of an eigenvalue profile",
        sweepable=False,
    ),
}

SIMULATIONS = {
    "bb84": Command(
        "bb84",
        [
            Param("pairs", _count, 10000, "number of EPR pairs"),
            Param("depol", _number, 0.0, "depolarizing strength q"),
            Param("p_x", _number, 0.5, "probability of choosing the X basis"),
        ],
        _sim_bb84,
        "depolarized BB84 run",
    ),
    "chsh": Command(
        "chsh",
        [
            Param("rounds", _count, 10000, "test rounds"),
            Param("spectrum", _float_list, None, "Bell weights l00,l10,l01,l11"),
            Param("werner", _number, 0.0, "Werner noise q, used when --spectrum is absent"),
            Param("alpha", _number, 0.0, "Alice angle"),
            Param("beta", _number, math.pi / 4, "Bob angle"),
            Param("key_rounds", _count, 0, "extra A0/A0 rounds for the bit error rate") ,
        ],
        _sim_chsh,
        "CHSH game on a Bell-diagonal source",
    ),
    "qrng": Command(
        "qrng",
        [
            Param("rounds", _count, 10000, "heterodyne rounds"),
            Param("source", str, "poisson", "poisson, thermal or fock"),
            Param("mu", _number, 0.0, "intensity (poisson), mean photon number (thermal) or photon number (fock)"),
            Param("extract_len", _count, 0, "Toeplitz-hash the raw bits down to this many"),
            Param("emit_bits", str, None, "write packed bits to this path"),
        ],
        _sim_qrng,
        "heterodyne QRNG run",
        sweepable=False,
    ),
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--out", choices=FORMATS, default="json")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--config", default=None, help="JSON file with parameter values")
    p.add_argument("--sweep", default=None, help="NAME=START:STOP:STEPS")


def _add_params(p: argparse.ArgumentParser, cmd: Command):
    for prm in cmd.params:
        if prm.parse is bool:
            p.add_argument(prm.option, dest=prm.name, action="store_true", default=argparse.SUPPRESS, help=prm.help)
        else:
            p.add_argument(prm.option, dest=prm.name, default=argparse.SUPPRESS, help=prm.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqentropy", description="Min-entropy bounds and finite-size key lengths.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, help=cmd.help)
        _add_params(p, cmd)
        _add_common(p)
    sim = sub.add_parser("simulate", help="Monte Carlo protocol simulators")
    simsub = sim.add_subparsers(dest="target", required=True)
    for cmd in SIMULATIONS.values():
        p = simsub.add_parser(cmd.name, help=cmd.help)
        _add_params(p, cmd)
        _add_common(p)
    return parser


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigParse("config must be a JSON object")
    # a saved report nests its inputs under "config"
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(cmd: Command, args: argparse.Namespace) -> tuple[dict, int]:
    """Merge defaults, config file and explicit flags; parse every value."""
    file_cfg = _load_config(args.config)
    known = {p.name for p in cmd.params} | {"seed"}
    unknown = sorted(set(file_cfg) - known - {"command", "target"})
    if unknown:
        raise ConfigParse(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for prm in cmd.params:
        raw = getattr(args, prm.name, file_cfg.get(prm.name, prm.default))
        if raw is None:
            cfg[prm.name] = None
        elif prm.parse is bool:
            cfg[prm.name] = bool(raw)
        else:
            cfg[prm.name] = prm.parse(raw)
    seed = getattr(args, "seed", file_cfg.get("seed", 0))
    try:
        seed = int(seed)
    except (TypeError, ValueError):
        raise ConfigParse(f"seed must be an integer, got {seed!r}") from None
    return cfg, seed


def _check_required(cmd: Command, cfg: dict, optional=("qber", "spectrum", "emit_bits")):
    missing = [p.option for p in cmd.params if cfg[p.name] is None and p.name not in optional]
    if missing:
        raise ConfigParse(f"missing required parameters: {' '.join(missing)}")


def parse_sweep(text: str, cmd: Command) -> tuple[str, list]:
    try:
        name, spec = text.split("=", 1)
        start, stop, steps = spec.split(":")
        grid = np.linspace(_number(start), _number(stop), _count(steps))
    except ValueError:
        raise ConfigParse(f"bad sweep {text!r}; expected NAME=START:STOP:STEPS") from None
    name = name.strip().replace("-", "_").lstrip("_")
    names = {p.name: p for p in cmd.params}
    if name not in names:
        raise ConfigParse(f"sweep parameter {name!r} is not a {cmd.name} parameter")
    if not cmd.sweepable or names[name].parse not in (_count, _number, _leak):
        raise ConfigParse(f"cannot sweep {name!r}")
    return name, [names[name].parse(repr(float(v))) for v in grid]


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = ";".join(str(x) for x in v)
        else:
            out[key] = v
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def render(doc: dict, records: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"
    rows = [_flatten(r) for r in records]
    if fmt == "csv":
        buf = io.StringIO()
        header = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow(r)
        return buf.getvalue()
    lines = [f"# {doc['command']}"]
    for i, r in enumerate(rows):
        if len(rows) > 1:
            lines.append(f"[{i}]")
        width = max(len(k) for k in r)
        lines.extend(f"{k:<{width}}  {v}" for k, v in r.items())
    return "\n".join(lines) + "\n"


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "simulate":
        cmd = SIMULATIONS[args.target]
        title = f"simulate {cmd.name}"
    else:
        cmd = COMMANDS[args.command]
        title = cmd.name
    try:
        cfg, seed = resolve(cmd, args)
        sweep = parse_sweep(args.sweep, cmd) if args.sweep else None
        if sweep is None:
            _check_required(cmd, cfg)
            result = cmd.run(cfg, seed)
            doc = {"command": title, **result, "config": {**cfg, "seed": seed}}
            records = [result]
        else:
            name, values = sweep
            records = []
            for v in values:
                point = {**cfg, name: v}
                _check_required(cmd, point)
                records.append({name: v, **cmd.run(point, seed)})
            doc = {
                "command": title,
                "sweep": {"name": name, "values": values},
                "records": records,
                "config": {**cfg, "seed": seed},
            }
        stdout.write(render(doc, records, args.out))
        return 0
    except ValidationError as exc:
        stderr.write(f"error: {exc}\n")
        return 2
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return 3


def main() -> None:
    sys.exit(run())
