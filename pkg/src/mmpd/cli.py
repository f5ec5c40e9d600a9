"""Command-line entry point: code inspection, BP/model evaluation, training.

Configuration is a single JSON document; ``--set path=value`` overrides
individual keys (dotted paths, JSON-literal values).  Unknown keys are
rejected before any compute.  Exit codes: 0 ok, 2 input error, 3 training
divergence, 4 checkpoint/code mismatch, 1 anything else.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from . import autodiff as ad
from .bp import BpConfig
from .codes import load_alist
from .harness import (StopRule, bp_decoder, mmpd_decoder, run_sweep)
from .model import ModelConfig
from .training import (CheckpointError, TrainConfig, load_checkpoint, train)

_DATACLASS_SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "bp": BpConfig,
    "stop": StopRule,
}

_TOP_KEYS = {"code", "seed", "ebn0_db", "codeword_mode", "out",
             "model", "train", "bp", "stop"}

_DEFAULTS = {
    "code": None,
    "seed": 0,
    "ebn0_db": [4.0, 5.0],
    "codeword_mode": "zero",
    "out": None,
    "model": {},
    "train": {},
    "bp": {},
    "stop": {},
}


class InputError(Exception):
    """Bad configuration, arguments, or input files (exit code 2)."""


def _check_keys(mapping: dict, allowed, where: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise InputError(f"unknown config key(s) in {where}: "
                         f"{', '.join(unknown)}")


def _parse_set(expr: str):
    if "=" not in expr:
        raise InputError(f"--set expects path=value, got {expr!r}")
    path, _, raw = expr.partition("=")
    path = path.strip()
    if not path:
        raise InputError(f"--set expects path=value, got {expr!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are convenient: --set codeword_mode=zero
    return path.split("."), value


def load_config(path: str | None, overrides=()) -> dict:
    """Merge defaults <- config file <- --set overrides, then validate."""
    cfg = copy.deepcopy(_DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise InputError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise InputError(f"config file {path} is not valid JSON: {e}") \
                from e
        if not isinstance(user, dict):
            raise InputError("config root must be a JSON object")
        _check_keys(user, _TOP_KEYS, "config root")
        for key, value in user.items():
            if key in _DATACLASS_SECTIONS:
                if not isinstance(value, dict):
                    raise InputError(f"config section {key!r} must be an "
                                     "object")
                cfg[key].update(value)
            else:
                cfg[key] = value
    for expr in overrides:
        keys, value = _parse_set(expr)
        node = cfg
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise InputError(f"--set path {'.'.join(keys)!r} does not "
                                 "name a config section")
            node = node[k]
        if keys[0] not in _TOP_KEYS:
            raise InputError(f"unknown config key(s) in --set: {keys[0]}")
        node[keys[-1]] = value
    for section, cls in _DATACLASS_SECTIONS.items():
        fields = cls.__dataclass_fields__
        _check_keys(cfg[section], fields, f"section {section!r}")
    return cfg


def _build(cfg: dict, section: str):
    cls = _DATACLASS_SECTIONS[section]
    try:
        return cls(**cfg[section])
    except (TypeError, ValueError) as e:
        raise InputError(f"invalid {section} config: {e}") from e


def _load_spec(cfg: dict):
    code = cfg.get("code")
    if not code:
        raise InputError("config key 'code' (alist path) is required")
    try:
        return load_alist(code)
    except FileNotFoundError as e:
        raise InputError(f"code file not found: {code}") from e
    except ValueError as e:
        raise InputError(f"could not parse code file {code}: {e}") from e


def _out_dir(cfg: dict, args) -> Path:
    out = args.out or cfg.get("out")
    if not out:
        raise InputError("an output directory is required (--out or config "
                         "key 'out')")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_info(args) -> int:
    try:
        spec = load_alist(args.code)
    except FileNotFoundError as e:
        raise InputError(f"code file not found: {args.code}") from e
    except ValueError as e:
        raise InputError(f"could not parse code file {args.code}: {e}") from e
    dv = spec.h.sum(axis=0)
    dc = spec.h.sum(axis=1)
    print(f"n={spec.n} k={spec.k} rate={spec.rate:.4f} edges={spec.edge_count}")
    print(f"var degrees [{dv.min()}, {dv.max()}]  "
          f"check degrees [{dc.min()}, {dc.max()}]")
    print(f"h_sha256={spec.h_sha256}")
    return 0


def cmd_bp_eval(args) -> int:
    cfg = load_config(args.config, args.set or ())
    spec = _load_spec(cfg)
    bp_cfg = _build(cfg, "bp")
    stop = _build(cfg, "stop")
    out = _out_dir(cfg, args)
    name = f"bp{bp_cfg.max_iterations}"
    csv_path = out / f"{name}_{spec.name}.csv"
    run_sweep(bp_decoder(bp_cfg), spec, cfg["ebn0_db"], stop,
              seed=int(cfg["seed"]), decoder_name=name,
              codeword_mode=cfg["codeword_mode"], csv_path=csv_path,
              workers=args.workers, verbose=True)
    print(f"report written to {csv_path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or ())
    spec = _load_spec(cfg)
    model_cfg = _build(cfg, "model")
    train_cfg = _build(cfg, "train")
    out = _out_dir(cfg, args)
    result = train(spec, model_cfg, train_cfg, out_dir=out,
                   log_every=args.log_every)
    print(f"parameters: {result.params.param_count()}")
    print(f"validation loss: initial {result.val_initial:.6f}  "
          f"final {result.val_final:.6f}")
    print(f"artifacts written to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set or ())
    spec = _load_spec(cfg)
    stop = _build(cfg, "stop")
    out = _out_dir(cfg, args)
    base = args.checkpoint
    for suffix in (".manifest.json", ".bin"):
        if base.endswith(suffix):
            base = base[:-len(suffix)]
    params = load_checkpoint(base, spec)
    csv_path = out / f"mmpd_{spec.name}.csv"
    run_sweep(mmpd_decoder(params), spec, cfg["ebn0_db"], stop,
              seed=int(cfg["seed"]), decoder_name="mmpd",
              codeword_mode=cfg["codeword_mode"], csv_path=csv_path,
              workers=args.workers,
              extra_header=(f"param_count={params.param_count()}",),
              verbose=True)
    print(f"report written to {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmpd",
        description="Message-passing neural decoder toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", help="summarize a parity-check matrix")
    p.add_argument("code", help="alist file")
    p.set_defaults(fn=cmd_info)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", action="append", metavar="PATH=VALUE",
                       help="override a config key (JSON-literal value)")
        p.add_argument("--out", default=None, help="artifact directory")
        p.add_argument("--workers", type=int, default=1,
                       help="concurrency cap for evaluation batches")

    p = sub.add_parser("bp-eval", help="evaluate the BP baseline")
    common(p)
    p.set_defaults(fn=cmd_bp_eval)

    p = sub.add_parser("train", help="train the decoder")
    common(p)
    p.add_argument("--log-every", type=int, default=50,
                   help="print a loss line every N steps (0: silent)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint base path (or its manifest/bin path)")
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except ad.NumericsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - last-resort mapping
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
