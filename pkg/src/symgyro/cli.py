"""Command-line entry points.

Every subcommand reads one JSON config (all keys optional, defaults below),
applies ``--seed`` / ``--out-dir`` overrides, writes its result files
atomically into the output directory together with ``manifest.json``, and on
failure prints a JSON error object to stderr and exits nonzero.

    symgyro generate-data  --config data.json --out-dir runs/data
    symgyro train          --config train.json --out-dir runs/train
    symgyro rollout        --config rollout.json --steps 1000
    symgyro adiabatic-scan --out-dir runs/scan --plot
    symgyro check-symplectic --config check.json
    symgyro baseline-henonnet --config baseline.json
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import output
from .benchmark_systems import (
    CoupledOscillatorSystem,
    FlowDataset,
    generate_dataset,
    system_from_dict,
    trajectory,
)
from .errors import ConfigurationError, NumericalError, RolloutError
from .experiments import AdiabaticScanConfig, adiabatic_scan, averaged_hamiltonian_along
from .gyroceptron import SymplecticGyroceptron
from .symplectic_maps import HenonNet, symplectic_defect
from .training import TrainConfig, train

EXIT_CONFIG = 2
EXIT_FILE = 3
EXIT_NUMERICAL = 4
EXIT_CHECK_FAILED = 5


class CheckFailed(Exception):
    def __init__(self, message: str, details: dict):
        super().__init__(message)
        self.details = details


class ConfigValidationError(ConfigurationError):
    def __init__(self, problems: list[dict]):
        keys = ", ".join(p["key"] for p in problems)
        super().__init__(f"invalid config: {keys}")
        self.problems = problems


# -- schemas ---------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_int0 = {"type": "integer", "minimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 2}

SYSTEM_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"enum": ["oscillators", "charged_particle"]},
        "epsilon": _nonneg,
        "potentials": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
    "required": ["name"],
    "additionalProperties": False,
}

DATASET_SCHEMA = {
    "type": "object",
    "properties": {
        "system": SYSTEM_SCHEMA,
        "flow_time": _nonneg,
        "count": _int1,
        "substeps": {"anyOf": [_int1, {"type": "null"}]},
        "box": {"anyOf": [{"type": "array", "items": _vec, "minItems": 2, "maxItems": 2}, {"type": "null"}]},
        "seed": _int0,
    },
    "additionalProperties": False,
}

TRAINING_SCHEMA = {
    "type": "object",
    "properties": {
        "learning_rate": _nonneg,
        "final_learning_rate": {"anyOf": [_nonneg, {"type": "null"}]},
        "batch_size": _int1,
        "epochs": _int0,
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "adam_eps": _pos,
        "validation_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "checkpoint_every": _int0,
        "log_every": _int0,
    },
    "additionalProperties": False,
}

_data_source = {
    "data": {"type": ["string", "null"]},
    "dataset": DATASET_SCHEMA,
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        **_data_source,
        "model": {
            "type": "object",
            "properties": {
                "psi_layers": _int0,
                "psi_hidden": _int1,
                "iota_layers": _int0,
                "iota_hidden": _int1,
                "theta0": _num,
                "epsilon": {"anyOf": [_nonneg, {"type": "null"}]},
            },
            "additionalProperties": False,
        },
        "training": TRAINING_SCHEMA,
        "seed": _int0,
    },
    "additionalProperties": False,
}

BASELINE_SCHEMA = {
    "type": "object",
    "properties": {
        **_data_source,
        "model": {
            "type": "object",
            "properties": {"layers": _int1, "hidden": _int1},
            "additionalProperties": False,
        },
        "training": TRAINING_SCHEMA,
        "seed": _int0,
    },
    "additionalProperties": False,
}

ROLLOUT_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"type": "string"},
        "z0": {"anyOf": [{"type": "array", "items": _vec, "minItems": 1}, {"type": "null"}]},
        "steps": _int0,
        "reference": {
            "anyOf": [
                {
                    "type": "object",
                    "properties": {"system": SYSTEM_SCHEMA, "flow_time": _pos, "substeps": {"anyOf": [_int1, {"type": "null"}]}},
                    "required": ["system", "flow_time"],
                    "additionalProperties": False,
                },
                {"type": "null"},
            ]
        },
        "seed": _int0,
    },
    "required": ["model"],
    "additionalProperties": False,
}

SCAN_SCHEMA = {
    "type": "object",
    "properties": {
        "epsilons": {"type": "array", "items": _pos, "minItems": 1},
        "iterations": _int1,
        "rho": {"type": "number", "exclusiveMinimum": 1},
        "max_iterations": _int1,
        "threshold_epsilons": {"anyOf": [{"type": "array", "items": _pos}, {"type": "null"}]},
        "model_seed": _int0,
        "dim": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "psi_layers": _int0,
        "psi_hidden": _int1,
        "iota_layers": _int0,
        "iota_hidden": _int1,
        "theta": {"anyOf": [_num, {"type": "null"}]},
        "z0": {"anyOf": [_vec, {"type": "null"}]},
    },
    "additionalProperties": False,
}

CHECK_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"type": "string"},
        "samples": _int1,
        "step": _pos,
        "tolerance": _pos,
        "box": _pos,
        "seed": _int0,
    },
    "required": ["model"],
    "additionalProperties": False,
}

DEFAULTS = {
    "generate-data": {
        "system": {"name": "oscillators", "epsilon": 0.01},
        "flow_time": 0.05,
        "count": 5000,
        "substeps": None,
        "box": None,
        "seed": 0,
    },
    "train": {
        "data": None,
        "dataset": {},
        "model": {"psi_layers": 6, "psi_hidden": 8, "iota_layers": 4, "iota_hidden": 6, "theta0": 0.0, "epsilon": None},
        "training": {},
        "seed": 0,
    },
    "baseline-henonnet": {
        "data": None,
        "dataset": {},
        "model": {"layers": 16, "hidden": 10},
        "training": {},
        "seed": 0,
    },
    "rollout": {"z0": None, "steps": 1000, "reference": None, "seed": 0},
    "adiabatic-scan": {},
    "check-symplectic": {"samples": 100, "step": 1e-5, "tolerance": 1e-5, "box": 1.0, "seed": 0},
}

SCHEMAS = {
    "generate-data": DATASET_SCHEMA,
    "train": TRAIN_SCHEMA,
    "baseline-henonnet": BASELINE_SCHEMA,
    "rollout": ROLLOUT_SCHEMA,
    "adiabatic-scan": SCAN_SCHEMA,
    "check-symplectic": CHECK_SCHEMA,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(schema: dict, config: dict) -> None:
    """Raise :class:`ConfigValidationError` listing every offending key."""
    problems = []
    for err in sorted(jsonschema.Draft202012Validator(schema).iter_errors(config), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path)
        if err.validator == "additionalProperties":
            allowed = set(err.schema.get("properties", {}))
            for extra in sorted(set(err.instance) - allowed):
                problems.append({"key": f"{where}/{extra}" if where else extra, "message": "unknown key"})
        elif err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            for k in missing:
                problems.append({"key": f"{where}/{k}" if where else k, "message": "missing required key"})
        else:
            problems.append({"key": where or "<root>", "message": err.message})
    if problems:
        raise ConfigValidationError(problems)


def load_config(command: str, path: str | None, overrides: dict | None = None) -> dict:
    """Read the JSON config, apply command-line overrides, fill defaults and validate."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigValidationError([{"key": "<file>", "message": f"not valid JSON: {exc}"}]) from exc
        if not isinstance(user, dict):
            raise ConfigValidationError([{"key": "<root>", "message": "config must be a JSON object"}])
    user.update({k: v for k, v in (overrides or {}).items() if v is not None})
    validate(SCHEMAS[command], user)
    config = _merge(DEFAULTS[command], user)
    validate(SCHEMAS[command], config)
    return config


# -- helpers ---------------------------------------------------------------------


def load_model(path) -> SymplecticGyroceptron | HenonNet:
    d = json.loads(Path(path).read_text())
    if "version" in d:
        return SymplecticGyroceptron.from_dict(d)
    if "layers" in d:
        return HenonNet.from_dict(d)
    raise ConfigurationError(f"{path} is neither a gyroceptron nor a HenonNet checkpoint")


def _dataset_for(config: dict, seed: int) -> FlowDataset:
    if config.get("data"):
        return FlowDataset.load(config["data"])
    ds_cfg = _merge(DEFAULTS["generate-data"], config.get("dataset", {}))
    return _generate(ds_cfg, ds_cfg.get("seed", seed))


def _generate(ds_cfg: dict, seed: int) -> FlowDataset:
    system = system_from_dict({"epsilon": 0.01, **ds_cfg["system"]})
    box = None if ds_cfg.get("box") is None else (np.asarray(ds_cfg["box"][0]), np.asarray(ds_cfg["box"][1]))
    return generate_dataset(system, ds_cfg["flow_time"], ds_cfg["count"], box, ds_cfg.get("substeps"), seed)


def _train_config(config: dict, out_dir: Path) -> TrainConfig:
    tc = TrainConfig(**config["training"], seed=config["seed"])
    if tc.checkpoint_every:
        tc.checkpoint_dir = str(out_dir / "checkpoints")
    return tc


def _rollout_any(model, z0: np.ndarray, steps: int) -> np.ndarray:
    if isinstance(model, SymplecticGyroceptron):
        return model.rollout(z0, steps)
    traj = np.empty((steps + 1,) + z0.shape)
    traj[0] = z = z0
    for k in range(1, steps + 1):
        z = model.forward(z)
        if not np.all(np.isfinite(z)):
            raise RolloutError(k, traj[:k].copy())
        traj[k] = z
    return traj


def _plot_lines(path: Path, series: dict[str, tuple[np.ndarray, np.ndarray]], xlabel: str, ylabel: str, logy=False):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label, lw=0.8)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="svg")
    plt.close(fig)
    tmp.replace(path)


# -- commands --------------------------------------------------------------------


def cmd_generate_data(config: dict, out: Path, args) -> dict:
    t0 = time.perf_counter()
    ds = _generate(config, config["seed"])
    ds.save(out / "dataset.csv")
    return {"timings": {"generate_seconds": time.perf_counter() - t0}, "outputs": ["dataset.csv", "dataset.json"]}


def _fit(model, ds: FlowDataset, data_seconds: float, config: dict, out: Path, args) -> dict:
    report = train(model, ds.inputs, ds.targets, _train_config(config, out))
    output.write_json(out / "model.json", report.model.to_dict(), indent=None)
    output.write_json(out / "train_report.json", report.to_dict())
    outputs = ["model.json", "train_report.json"]
    if args.plot and report.epochs:
        _plot_lines(
            out / "train_loss.svg",
            {"train": (report.epochs, report.train_loss), "validation": (report.epochs, report.val_loss)},
            "epoch",
            "MSE",
            logy=True,
        )
        outputs.append("train_loss.svg")
    return {
        "timings": {"data_seconds": data_seconds, "train_seconds": report.wall_seconds},
        "outputs": outputs,
        "final_val_loss": report.val_loss[-1] if report.val_loss else None,
        "dataset": {"system": ds.system, "flow_time": ds.flow_time, "count": len(ds.inputs)},
    }


def _load_data(config: dict) -> tuple[FlowDataset, float]:
    t0 = time.perf_counter()
    ds = _dataset_for(config, config["seed"])
    return ds, time.perf_counter() - t0


def cmd_train(config: dict, out: Path, args) -> dict:
    ds, data_seconds = _load_data(config)
    system = system_from_dict(ds.system)
    m = config["model"]
    eps = system.epsilon if m.get("epsilon") is None else m["epsilon"]
    rng = np.random.default_rng(config["seed"])
    model = SymplecticGyroceptron.random(
        system.circle_action(m["theta0"]), eps, rng, m["psi_layers"], m["psi_hidden"], m["iota_layers"], m["iota_hidden"]
    )
    return _fit(model, ds, data_seconds, config, out, args)


def cmd_baseline(config: dict, out: Path, args) -> dict:
    ds, data_seconds = _load_data(config)
    rng = np.random.default_rng(config["seed"])
    model = HenonNet.random(ds.inputs.shape[1] // 2, config["model"]["layers"], config["model"]["hidden"], rng)
    return _fit(model, ds, data_seconds, config, out, args)


def cmd_rollout(config: dict, out: Path, args) -> dict:
    model = load_model(config["model"])
    steps = config["steps"]
    dim = model.dim if isinstance(model, SymplecticGyroceptron) else 2 * model.n
    if config.get("z0") is None:
        z0 = np.random.default_rng(config["seed"]).uniform(-1, 1, size=(1, dim))
    else:
        z0 = np.asarray(config["z0"], dtype=float)
    if z0.shape[1] != dim:
        raise ConfigValidationError([{"key": "z0", "message": f"states must have dimension {dim}"}])
    t0 = time.perf_counter()
    traj = _rollout_any(model, z0, steps)
    surrogate_seconds = time.perf_counter() - t0
    outputs = []
    for i in range(z0.shape[0]):
        name = "trajectory.csv" if z0.shape[0] == 1 else f"trajectory_{i:03d}.csv"
        output.write_trajectory_csv(out / name, traj[:, i])
        outputs.append(name)
    result = {"timings": {"surrogate_seconds": surrogate_seconds}, "outputs": outputs}
    ref_cfg = config.get("reference")
    if ref_cfg:
        system = system_from_dict({"epsilon": 0.01, **ref_cfg["system"]})
        t1 = time.perf_counter()
        ref = trajectory(system, z0, ref_cfg["flow_time"], steps, ref_cfg.get("substeps"))
        rk4_seconds = time.perf_counter() - t1
        for i in range(z0.shape[0]):
            name = "reference.csv" if z0.shape[0] == 1 else f"reference_{i:03d}.csv"
            output.write_trajectory_csv(out / name, ref[:, i])
            outputs.append(name)
        comparison = {
            "max_state_error": float(np.max(np.abs(traj - ref))),
            "rk4_seconds": rk4_seconds,
            "speedup": rk4_seconds / surrogate_seconds if surrogate_seconds > 0 else None,
        }
        result["timings"]["rk4_seconds"] = rk4_seconds
        if isinstance(system, CoupledOscillatorSystem):
            vp = np.ptp(averaged_hamiltonian_along(traj), axis=0)
            vr = np.ptp(averaged_hamiltonian_along(ref), axis=0)
            comparison["hbar_variation_predicted"] = vp.tolist()
            comparison["hbar_variation_reference"] = vr.tolist()
            with np.errstate(divide="ignore", invalid="ignore"):
                comparison["hbar_variation_ratio"] = (vp / vr).tolist()
        output.write_json(out / "rollout_report.json", comparison)
        outputs.append("rollout_report.json")
        result["comparison"] = comparison
    if args.plot:
        _plot_lines(
            out / "trajectory.svg",
            {f"z0 #{i}": (traj[:, i, dim // 2 - 1 if dim > 2 else 0], traj[:, i, -1]) for i in range(z0.shape[0])},
            "x (last pair)",
            "y (last pair)",
        )
        outputs.append("trajectory.svg")
    return result


def cmd_adiabatic_scan(config: dict, out: Path, args) -> dict:
    cfg = AdiabaticScanConfig(**config)
    result = adiabatic_scan(cfg)
    rows = result.summary_rows()
    output.write_csv(
        out / "adiabatic_scan.csv",
        ["epsilon", "N", "exceeded_flag", "max_drift"],
        ([r["epsilon"], r["N"], r["exceeded_flag"], r["max_drift"]] for r in rows),
    )
    outputs = ["adiabatic_scan.csv"]
    for eps, series in result.drifts.items():
        name = f"drift_eps_{eps:g}.csv"
        output.write_csv(out / name, ["step", "mu_minus_mu0"], enumerate(series.values))
        outputs.append(name)
    output.write_json(out / "adiabatic_scan.json", result.to_dict())
    outputs.append("adiabatic_scan.json")
    if args.plot:
        _plot_lines(
            out / "drift.svg",
            {f"eps={e:g}": (np.arange(s.values.size), np.abs(s.values) + 1e-300) for e, s in result.drifts.items()},
            "iteration",
            "|mu - mu0|",
            logy=True,
        )
        outputs.append("drift.svg")
    return {"timings": result.timings, "outputs": outputs, "rows": rows}


def cmd_check_symplectic(config: dict, out: Path, args) -> dict:
    model = load_model(config["model"])
    dim = model.dim if isinstance(model, SymplecticGyroceptron) else 2 * model.n
    rng = np.random.default_rng(config["seed"])
    z = rng.uniform(-config["box"], config["box"], size=(config["samples"], dim))
    checks = {"forward": model.forward}
    if isinstance(model, SymplecticGyroceptron):
        checks["conjugated_rotation"] = model.conjugated_rotation
    report = {"samples": config["samples"], "step": config["step"], "tolerance": config["tolerance"]}
    ok = True
    for name, fn in checks.items():
        defect = max(symplectic_defect(fn, zi, step=config["step"]) for zi in z)
        report[f"{name}_defect"] = defect
        ok &= defect <= config["tolerance"]
    report["passed"] = bool(ok)
    output.write_json(out / "symplectic_report.json", report)
    if not ok:
        raise CheckFailed("symplectic defect above tolerance", report)
    return {"outputs": ["symplectic_report.json"], "report": report}


COMMANDS = {
    "generate-data": cmd_generate_data,
    "train": cmd_train,
    "rollout": cmd_rollout,
    "adiabatic-scan": cmd_adiabatic_scan,
    "check-symplectic": cmd_check_symplectic,
    "baseline-henonnet": cmd_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symgyro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", default=None, help="output directory (default: runs/<command>)")
        p.add_argument("--plot", action="store_true", help="also write SVG plots")
        if name in ("rollout", "check-symplectic"):
            p.add_argument("--model", help="checkpoint path (overrides the config)")
        if name == "rollout":
            p.add_argument("--steps", type=int, help="override the number of rollout steps")
    return parser


def _error(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(output.to_json({"error": kind, "message": message, **extra}, indent=None) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out_dir or Path("runs") / args.command)
    started = time.perf_counter()
    try:
        overrides = {"model_seed" if args.command == "adiabatic-scan" else "seed": args.seed}
        overrides["model"] = getattr(args, "model", None)
        overrides["steps"] = getattr(args, "steps", None)
        config = load_config(args.command, args.config, overrides)
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](config, out, args)
    except ConfigValidationError as exc:
        return _error("ConfigValidationError", str(exc), EXIT_CONFIG, problems=exc.problems)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _error("FileError", str(exc), EXIT_FILE, path=getattr(exc, "filename", None))
    except CheckFailed as exc:
        return _error("CheckFailed", str(exc), EXIT_CHECK_FAILED, details=exc.details)
    except ConfigurationError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_CONFIG)
    except NumericalError as exc:
        return _error(type(exc).__name__, str(exc), EXIT_NUMERICAL)
    except (ValueError, TypeError, KeyError) as exc:
        return _error(type(exc).__name__, str(exc), 1)

    manifest = {
        "command": args.command,
        "config": config,
        "config_sha256": output.config_hash(config),
        "versions": output.versions(),
        "timings": {**result.get("timings", {}), "total_seconds": time.perf_counter() - started},
        "outputs": result.get("outputs", []),
    }
    output.write_json(out / "manifest.json", manifest)
    print(output.to_json({"out_dir": str(out), "outputs": manifest["outputs"]}, indent=None))
    return 0


if __name__ == "__main__":
    sys.exit(main())
