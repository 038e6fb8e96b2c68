"""Command-line interface: simulate, serve, record, replay, calibrate,
reconstruct, evaluate and export-model.

Every command prints a JSON report with a ``schema_version`` on stdout.
Exit codes: 1 usage, 2 configuration, 3 data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import metrics, session
from .acquisition import protocol as proto
from .acquisition.recording import RecordingError, replay
from .acquisition.transport import BindError, record_stream, serve
from .calibration import (
    CalibrationError,
    MissingSensor,
    ModelHashMismatch,
    calibration_document,
    load_calibration,
)
from .hand_model import (
    ModelError,
    PoseParams,
    build_mesh,
    load_default_model,
    load_model,
    model_hash,
    model_to_dict,
)

SCHEMA_VERSION = session.REPORT_SCHEMA_VERSION
EXIT_USAGE, EXIT_CONFIG, EXIT_DATA = 1, 2, 3
DEFAULT_PORT = 7878
DEFAULT_SEED = 0

log = logging.getLogger("glovecal")


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# fallback values once flags and --config have been merged
DEFAULTS = {
    "seed": DEFAULT_SEED,
    "scenario": "calibration",
    "host": "127.0.0.1",
    "port": DEFAULT_PORT,
    "clients": 1,
    "speed": "realtime",
    "window_ns": 10_000_000,
    "every": 10,
    "noise": {},
    "stride": 10,
    "sigma_mm": 0.5,
    "timeout": 30.0,
}


def _common(p, *names):
    p.add_argument("--config", help="JSON file with option values; flags take precedence")
    if "seed" in names:
        p.add_argument("--seed", type=int)
    if "output" in names:
        p.add_argument("--output", "-o")
    if "model" in names:
        p.add_argument("--model", help="hand model JSON (default: built-in model)")
    if "input" in names:
        p.add_argument("--input", "-i", help="recording file")
    if "port" in names:
        p.add_argument("--port", type=int)
        p.add_argument("--host")
    if "noise" in names:
        p.add_argument("--noise", action="append", metavar="FIELD=VALUE",
                       help="noise model override, e.g. sigma_static_deg=0 (repeatable)")
    if "window" in names:
        p.add_argument("--window-ns", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glovecal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated recording and its answer key")
    _common(p, "seed", "output", "model", "noise")
    p.add_argument("--scenario", help=f"preset ({', '.join(session.PRESETS)}) or scenario JSON")
    p.add_argument("--jitter-ns", type=int)
    p.add_argument("--clock-offset-ns", type=int)

    p = sub.add_parser("serve", help="stream a simulated session over TCP")
    _common(p, "seed", "model", "noise", "port")
    p.add_argument("--scenario")
    p.add_argument("--clients", type=int, help="wait for this many clients before streaming")
    p.add_argument("--speed", help="realtime (default) or max")
    p.add_argument("--timeout", type=float, help="seconds to wait for clients")

    p = sub.add_parser("record", help="record a live stream to a file")
    _common(p, "output", "port")
    p.add_argument("--timeout", type=float, help="seconds to keep retrying the connection")

    p = sub.add_parser("replay", help="play back a recording")
    _common(p, "input", "port")
    p.add_argument("--speed", help="max, realtime or a speed factor")
    p.add_argument("--broadcast", action="store_true", help="serve the replay on --port")
    p.add_argument("--clients", type=int)

    p = sub.add_parser("calibrate", help="calibrate from the tagged segments of a recording")
    _common(p, "input", "output", "model", "window")

    p = sub.add_parser("reconstruct", help="per-frame hand poses from a recording")
    _common(p, "input", "output", "model", "window")
    p.add_argument("--calibration", help="calibration JSON from the calibrate command")
    p.add_argument("--mesh-dir", help="write an OBJ mesh every --every frames into this directory")
    p.add_argument("--every", type=int)

    p = sub.add_parser("evaluate", help="compare against the simulator's answer key")
    p.add_argument("kind", choices=["joint", "shape", "pinch", "interaction", "drift"])
    _common(p, "seed", "input", "output", "model", "noise", "window")
    p.add_argument("--calibration")
    p.add_argument("--truth", help="answer key JSON (default: <input>.truth.json)")
    p.add_argument("--object", help="OBJ mesh for the interaction metric")
    p.add_argument("--stride", type=int)
    p.add_argument("--sigma-mm", type=float, help="scan noise for the shape metric")

    p = sub.add_parser("export-model", help="write the hand model JSON, optionally a mesh")
    _common(p, "output", "model")
    p.add_argument("--obj", help="also write the rest-pose mesh as OBJ")
    p.add_argument("--beta", type=float, nargs="+", help="shape coefficients for --obj")
    return parser


# ----------------------------------------------------------------------
# option handling


def _merge_config(args, parser_dests) -> argparse.Namespace:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest not in parser_dests or dest in ("config", "command", "kind"):
                raise ConfigError(f"config {path}: unknown option {key!r} for {args.command}")
            if dest == "noise" and isinstance(value, dict):
                args.noise = {**value, **_noise_flags(args.noise)}
            elif getattr(args, dest) is None:
                setattr(args, dest, value)
    if "noise" in parser_dests:
        args.noise = _noise_flags(args.noise)
    for key, value in DEFAULTS.items():
        if key in parser_dests and getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _noise_flags(items):
    if isinstance(items, dict):
        return items
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--noise expects FIELD=VALUE, got {item!r}")
        try:
            out[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"--noise {key}: {value!r} is not a number") from exc
    return out


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required (flag or config)")


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _model(args):
    if getattr(args, "model", None) is None:
        return load_default_model()
    path = _existing(args.model, "model file")
    try:
        return load_model(path)
    except ModelError as exc:
        raise ConfigError(f"model file {path}: {exc}") from exc


def _scenario(args) -> dict:
    name = args.scenario
    overrides = {"seed": args.seed}
    if getattr(args, "jitter_ns", None) is not None:
        overrides["jitter_ns"] = args.jitter_ns
    if getattr(args, "clock_offset_ns", None) is not None:
        overrides["clock_offset_ns"] = args.clock_offset_ns
    try:
        if isinstance(name, dict) or name not in session.PRESETS:
            if isinstance(name, dict):
                doc = dict(name)
            else:
                path = _existing(name, "scenario file")
                try:
                    doc = json.loads(path.read_text())
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"scenario {path}: {exc}") from exc
            preset = doc.pop("preset", "calibration")
            sc = session.make_scenario(preset)
            sc.update(doc)
        else:
            sc = session.make_scenario(name)
        for key, value in overrides.items():
            sc[key] = value
        sc["noise"] = {**sc.get("noise", {}), **args.noise}
        return session.validate_scenario(sc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def _emit(doc: dict, output=None) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    text = session.dumps(doc)
    if output is not None:
        Path(output).write_text(text)
    sys.stdout.write(text)
    sys.stdout.flush()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_recording(args):
    _require(args, "input")
    path = _existing(args.input, "recording")
    rec = session.read_recording(path)
    if len(rec.imu) == 0:
        raise session.DataError(f"{path} contains no IMU samples")
    present = set(np.unique(rec.imu["sensor"]).tolist())
    missing = [s for s in range(proto.N_IMU) if s not in present]
    if missing:
        raise MissingSensor(missing)
    return rec


def _calibration(args, model, rec, frames):
    if getattr(args, "calibration", None) is None:
        return session.calibrate_recording(model, rec, frames)
    path = _existing(args.calibration, "calibration file")
    try:
        calib, shape, dorsal = load_calibration(path, model)
    except (json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"calibration file {path}: {exc}") from exc
    return session.SessionCalibration(calib, shape, dorsal, [])


# ----------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    model = _model(args)
    sc = _scenario(args)
    _require(args, "output")
    out = Path(args.output)
    if out.is_dir():
        out = out / f"{sc['name']}_seed{sc['seed']}.fsgr"
    sim = session.simulate_session(model, sc)
    rec_path, key_path, npz_path = session.write_simulation(model, sim, out)
    _emit({
        "command": "simulate",
        "recording": str(rec_path),
        "answer_key": str(key_path),
        "truth": str(npz_path),
        "packets": len(sim.packets),
        "segments": [s.kind for s in sim.trajectory.segments],
        "recording_sha256": _sha256(rec_path),
    })
    return 0


def _listening(port):
    sys.stderr.write(json.dumps({"event": "listening", "port": port}) + "\n")
    sys.stderr.flush()


def cmd_serve(args) -> int:
    model = _model(args)
    sim = session.simulate_session(model, _scenario(args))
    realtime = args.speed != "max"
    sent = serve(sim.packets, args.host, args.port, min_clients=args.clients, realtime=realtime,
                 timestamps=sim.packet_timestamps, ready=_listening, accept_timeout=args.timeout)
    _emit({"command": "serve", "packets": sent})
    return 0


def cmd_record(args) -> int:
    _require(args, "output")
    try:
        res = record_stream(args.host, args.port, args.output, connect_timeout=args.timeout)
    except OSError as exc:
        raise ConfigError(f"cannot connect to {args.host}:{args.port}: {exc}") from exc
    _emit({
        "command": "record",
        "output": str(args.output),
        "packets": res.packets,
        "bytes": res.bytes,
        "truncated": res.truncated,
        "error": res.error,
    })
    if res.truncated:
        log.warning("stream ended early: %s", res.error or "partial packet at end of stream")
        return EXIT_DATA
    return 0


def cmd_replay(args) -> int:
    _require(args, "input")
    path = _existing(args.input, "recording")
    speed = args.speed
    if speed not in ("max", "realtime"):
        try:
            speed = float(speed)
        except ValueError as exc:
            raise ConfigError(f"--speed must be max, realtime or a number, got {args.speed!r}") from exc
        if speed <= 0:
            raise ConfigError("--speed factor must be positive")
    if args.broadcast:
        sent = serve(replay(path, speed), args.host, args.port, min_clients=args.clients or 1, ready=_listening)
        _emit({"command": "replay", "packets": sent, "broadcast": True})
        return 0
    counts = Counter()
    first = last = None
    for pkt in replay(path, speed, decode=True):
        counts[type(pkt).__name__] += 1
        ts = pkt.timestamp
        first = ts if first is None else min(first, ts)
        last = ts if last is None else max(last, ts)
    _emit({
        "command": "replay",
        "packets": sum(counts.values()),
        "by_type": dict(sorted(counts.items())),
        "first_timestamp_ns": first,
        "last_timestamp_ns": last,
    })
    return 0


def cmd_calibrate(args) -> int:
    model = _model(args)
    rec = _load_recording(args)
    frames = session.synchronize_recording(rec, args.window_ns)
    cal = session.calibrate_recording(model, rec, frames)
    doc = calibration_document(model, cal.calib, cal.shape, cal.dorsal)
    if args.output is not None:
        session.write_json(args.output, doc)
    per_sensor = cal.calib.residuals_deg.max(axis=1)
    for s, r in enumerate(per_sensor):
        sys.stderr.write(f"sensor {s:2d}  max residual {r:7.3f} deg\n")
    for note in cal.notes:
        sys.stderr.write(f"note: {note}\n")
    report = {
        "command": "calibrate",
        "calibration": None if args.output is None else str(args.output),
        "frames": len(frames),
        "dropped": int(sum(frames.dropped)),
        "poses": list(cal.calib.kinds),
        "residual_deg_per_sensor": per_sensor,
        "max_residual_deg": cal.calib.max_residual_deg,
        "alignment_iterations": cal.calib.n_iter,
        "shape": None if cal.shape is None else {
            "beta": cal.shape.beta,
            "energy": cal.shape.energy,
            "iterations": cal.shape.n_iter,
            "converged": cal.shape.converged,
        },
        "notes": cal.notes,
    }
    _emit(report)
    return 0


def cmd_reconstruct(args) -> int:
    model = _model(args)
    _require(args, "calibration")
    rec = _load_recording(args)
    frames = session.synchronize_recording(rec, args.window_ns)
    cal = _calibration(args, model, rec, frames)
    root, trans, joints = session.reconstruct_recording(model, rec, frames, cal.calib, cal.dorsal)
    beta = cal.shape.beta if cal.shape is not None else np.zeros(model.n_shape)
    doc = {
        "command": "reconstruct",
        "model_hash": model_hash(model),
        "beta": beta,
        "frames": len(frames),
        "dropped": int(sum(frames.dropped)),
    }
    if args.output is not None:
        poses = session.pose_quaternions(root, trans, joints)
        for ts, p in zip(frames.timestamps.tolist(), poses):
            p["timestamp_ns"] = ts
        session.write_json(args.output, {"schema_version": SCHEMA_VERSION, **doc, "poses": poses}, compact=True)
        doc["output"] = str(args.output)
    if args.mesh_dir is not None:
        if args.every < 1:
            raise ConfigError("--every must be at least 1")
        out = Path(args.mesh_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = 0
        for k in range(0, len(frames), args.every):
            mesh = build_mesh(model, beta, PoseParams(root[k], trans[k], joints[k]))
            (out / f"frame_{k:06d}.obj").write_text(mesh.to_obj())
            written += 1
        doc["meshes"] = written
    _emit(doc)
    return 0


def _read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
            for j in range(1, len(idx) - 1):
                faces.append([idx[0], idx[j], idx[j + 1]])
    if not faces:
        raise session.DataError(f"{path} has no faces")
    return np.asarray(verts, dtype=float), np.asarray(faces, dtype=np.int64)


def cmd_evaluate(args) -> int:
    if args.kind == "joint":
        report = session.evaluate_joint(args.seed, args.noise)
        _emit(report, args.output)
        return 0
    rec = _load_recording(args)
    truth_path = Path(args.truth) if args.truth else Path(str(args.input) + ".truth.json")
    key, truth = session.load_answer_key(_existing(truth_path, "answer key"))
    if args.kind == "drift":
        _emit(session.evaluate_drift(rec, truth), args.output)
        return 0
    model = _model(args)
    if key.get("model_hash") != model_hash(model):
        raise ModelHashMismatch("answer key was generated with a different hand model")
    frames = session.synchronize_recording(rec, args.window_ns)
    cal = _calibration(args, model, rec, frames)
    if args.kind == "shape":
        report = session.evaluate_shape(model, rec, frames, cal, key, truth, seed=args.seed, sigma_mm=args.sigma_mm)
    elif args.kind == "pinch":
        report = session.evaluate_pinch(model, rec, frames, cal)
    else:
        obj = None if args.object is None else _read_obj(_existing(args.object, "object mesh"))
        report = session.evaluate_interaction(model, rec, frames, cal, key, truth, object_mesh=obj, stride=args.stride)
    _emit(report, args.output)
    return 0


def cmd_export_model(args) -> int:
    model = _model(args)
    _require(args, "output")
    text = json.dumps(model_to_dict(model), indent=1) + "\n"
    Path(args.output).write_text(text)
    doc = {"command": "export-model", "output": str(args.output), "model_hash": model_hash(model),
           "vertices": int(model.n_vertices), "links": int(len(model.parents))}
    if args.obj is not None:
        beta = np.zeros(model.n_shape) if args.beta is None else args.beta
        try:
            beta = model.check_beta(beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        Path(args.obj).write_text(build_mesh(model, beta, PoseParams.identity()).to_obj())
        doc["obj"] = str(args.obj)
    _emit(doc)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "serve": cmd_serve,
    "record": cmd_record,
    "replay": cmd_replay,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "export-model": cmd_export_model,
}

CONFIG_ERRORS = (ConfigError, ModelHashMismatch, BindError, TimeoutError)
DATA_ERRORS = (session.DataError, RecordingError, proto.ProtocolError, CalibrationError, MissingSensor,
               metrics.MetricError, ModelError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    try:
        _merge_config(args, dests)
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
