"""Scripted scenario runs: load, simulate, log, assert.

Scripts are JSON documents validated against the published schema.
Runs are deterministic: identical script + overrides produce
byte-identical CSV logs. Logs carry an embedded schema version line.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    GuardFailed,
    MissingColumn,
    NumericalDivergence,
    ScenarioAssertionFailed,
)
from .leg_control import ManipTarget, ToolPhase
from .modes import DEFAULT_POSTURES, LegMode, SystemMode
from .protocol import LOG_SCHEMA_VERSION, validate_scenario
from .runtime import ControlLoop, RunConfig
from .sim import (
    PayloadSpec,
    RobotParams,
    TerrainPatch,
    WorldModel,
    initial_state,
    pretension_wires,
)
from .tension import gravity_wrench, solve_tension_qp
from .geometry import build_jacobian
from .wire_control import WireMode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3
EXIT_DIVERGENCE = 4


# ---------------------------------------------------------------------------
# run log
# ---------------------------------------------------------------------------

def log_columns(wire_count: int, payload_count: int) -> list:
    cols = [
        "time",
        "px", "py", "pz", "qw", "qx", "qy", "qz",
        "vx", "vy", "vz", "wx", "wy", "wz",
    ]
    for i in range(wire_count):
        cols += [
            f"wire{i}_attached", f"wire{i}_len", f"wire{i}_rate",
            f"wire{i}_tension", f"wire{i}_current", f"wire{i}_rate_ref",
        ]
    cols += [
        "wheel_left", "wheel_right",
        "hip_roll_l", "hip_pitch_l", "knee_l",
        "hip_roll_r", "hip_pitch_r", "knee_r",
        "contact_wheel_l", "contact_wheel_r", "contact_knee_l", "contact_knee_r",
        "wire_mode", "leg_mode",
        "cmd_vx", "cmd_vy", "cmd_vz", "cmd_wx", "cmd_wy", "cmd_wz",
    ]
    for j in range(payload_count):
        cols += [f"payload{j}_x", f"payload{j}_y", f"payload{j}_z",
                 f"payload{j}_latched"]
    return cols


@dataclass
class RunLog:
    columns: list
    rows: list = field(default_factory=list)

    def append(self, values: list):
        if len(values) != len(self.columns):
            raise ValueError("row width does not match columns")
        self.rows.append(values)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingColumn(f"log has no column {name!r}")
        k = self.columns.index(name)
        out = []
        for row in self.rows:
            v = row[k]
            out.append(v if isinstance(v, (int, float)) else np.nan)
        return np.asarray(out, dtype=float)

    def text_column(self, name: str) -> list:
        if name not in self.columns:
            raise MissingColumn(f"log has no column {name!r}")
        k = self.columns.index(name)
        return [str(row[k]) for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {LOG_SCHEMA_VERSION}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunLog":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ConfigError("log missing schema version line")
        version = lines[0][2:].strip()
        if version != LOG_SCHEMA_VERSION:
            raise ConfigError(
                f"log schema {version!r} unsupported, expected {LOG_SCHEMA_VERSION!r}"
            )
        reader = csv.reader(lines[1:])
        header = next(reader, None)
        if header is None:
            raise ConfigError("log missing header row")
        log = cls(columns=list(header))
        for row in reader:
            parsed = []
            for cell in row:
                try:
                    parsed.append(float(cell))
                except ValueError:
                    parsed.append(cell)
            log.append(parsed)
        return log


# ---------------------------------------------------------------------------
# script loading
# ---------------------------------------------------------------------------

def bundled_scenario_path(name: str) -> Path:
    ref = resources.files("wirebot").joinpath("scenarios").joinpath(f"{name}.json")
    with resources.as_file(ref) as p:
        return Path(p)


def list_bundled_scenarios() -> list:
    folder = resources.files("wirebot").joinpath("scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_script(source) -> dict:
    """Parse and schema-validate a scenario from a path, name or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        path = Path(source)
        if not path.exists() and not str(source).endswith(".json"):
            path = bundled_scenario_path(str(source))
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"scenario not found: {source}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario is not valid JSON: {e}") from e
    validate_scenario(doc)
    events = doc.get("events", [])
    if any(events[i]["t"] > events[i + 1]["t"] for i in range(len(events) - 1)):
        raise ConfigError("events must be time-ordered")
    return doc


def apply_overrides(doc: dict, overrides: dict | None) -> dict:
    """Apply `key=value` config overrides onto the script's config block."""
    if not overrides:
        return doc
    out = json.loads(json.dumps(doc))
    cfg = out.setdefault("config", {})
    for key, value in overrides.items():
        cfg[key] = value
    validate_scenario(out)
    return out


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _build_world(doc: dict) -> WorldModel:
    w = doc.get("world", {})
    terrain = [
        TerrainPatch(
            t["origin"], t["axis_u"], t["axis_v"], t["half_u"], t["half_v"],
            t.get("friction", 0.8),
        )
        for t in w.get("terrain", [])
    ]
    payloads = [
        PayloadSpec(p["mass"], p["radius"], p["position"])
        for p in w.get("payloads", [])
    ]
    return WorldModel(
        gravity=w.get("gravity", [0.0, 0.0, -9.81]),
        anchors=w.get("anchors", []),
        terrain=terrain,
        payloads=payloads,
    )


def _named_joints(name: str) -> np.ndarray:
    table = {
        "vehicle": DEFAULT_POSTURES.vehicle_joints,
        "tucked": DEFAULT_POSTURES.tucked_joints,
        "arm_ready": DEFAULT_POSTURES.arm_ready_joints,
    }
    return table[name].copy()


def build_loop(doc: dict) -> ControlLoop:
    cfg = doc.get("config", {})
    config = RunConfig(**cfg)
    robot = doc.get("robot", {})
    params = RobotParams(
        mass=robot.get("mass", 12.0),
        leg_mass=robot.get("leg_mass", 0.75),
    )
    world = _build_world(doc)
    joints = robot.get("joints", "vehicle")
    joints = _named_joints(joints) if isinstance(joints, str) else np.asarray(joints)
    if "orientation" in robot:
        orientation = robot["orientation"]
    elif "pitch" in robot:
        half = 0.5 * float(robot["pitch"])
        orientation = [math.cos(half), 0.0, math.sin(half), 0.0]
    else:
        orientation = [1.0, 0.0, 0.0, 0.0]
    state = initial_state(
        params, world,
        position=robot.get("position", [0.0, 0.0, 0.5]),
        orientation=orientation,
        joints=joints,
    )
    loop = ControlLoop(params, world, state, config)
    for wire in robot.get("wires", []):
        loop.attach(wire["index"], wire["anchor"])
    if robot.get("pretension") and loop.state.attached_indices():
        attached = loop.state.attached_indices()
        from .sim import wire_geometries

        jac = build_jacobian(loop.state.body, wire_geometries(loop.state, params))
        qp = solve_tension_qp(
            jac,
            gravity_wrench(loop.control_mass, world.gravity),
            config.limits(len(attached)),
            regularization=config.qp_regularization,
        )
        loop.state = pretension_wires(loop.state, params, qp.tensions)
    return loop


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def _apply_event(loop: ControlLoop, ev: dict):
    kind = ev["type"]
    if kind == "attach_wire":
        loop.attach(int(ev["wire"]), ev["anchor"])
    elif kind == "detach_wire":
        loop.detach(int(ev["wire"]))
    elif kind == "transition":
        loop.request_mode(
            SystemMode(WireMode(ev["wire_mode"]), LegMode(ev["leg_mode"])),
            source="scenario",
        )
    elif kind == "set_velocity":
        loop.set_velocity(ev["twist"])
    elif kind == "set_wire_rates":
        loop.set_wire_rates(ev["rates"])
    elif kind == "set_drive":
        loop.set_drive(ev.get("vx", 0.0), ev.get("yaw_rate", 0.0),
                       ev.get("hip_pitch"))
    elif kind == "set_manip_target":
        loop.set_manip_target(
            ManipTarget(ev["target"], ev.get("width", 0.1),
                        ev.get("wheel_spin", 2.0))
        )
    elif kind == "tool_phase":
        loop.set_tool_phase(ToolPhase(ev["phase"]))
    elif kind == "latch_tool":
        new = loop.state.copy()
        new.tool_mass = float(ev.get("mass", 0.5))
        new.tool_offset = np.asarray(
            ev.get("offset", [-0.12, 0.0, 0.0]), dtype=float
        )
        loop.state = new
    elif kind == "release_payload":
        new = loop.state.copy()
        pl = new.payloads[int(ev.get("payload", 0))]
        pl.latched = False
        pl.attach_offset = None
        loop.state = new
    else:  # schema forbids this
        raise ConfigError(f"unknown event type {kind!r}")


def _log_row(loop: ControlLoop, cols: list) -> list:
    from .sim import contact_flags

    s = loop.state
    b = s.body
    flags = contact_flags(s, loop.world, loop.params)
    refs = loop.wire_rate_refs
    currents = loop.currents
    r_winch = loop.params.winch.radius
    row = [s.time]
    row += [float(x) for x in b.position] + [float(x) for x in b.orientation]
    row += [float(x) for x in b.linear_velocity]
    row += [float(x) for x in b.angular_velocity]
    for i, slot in enumerate(s.wires):
        row += [
            float(1.0 if slot.attached else 0.0),
            float(slot.length),
            float(slot.payout_rate(r_winch)),
            float(slot.tension),
            float(currents[i]),
            float(refs[i]),
        ]
    row += [float(s.legs.wheel_speeds[0]), float(s.legs.wheel_speeds[1])]
    row += [float(x) for x in s.legs.joints[0]]
    row += [float(x) for x in s.legs.joints[1]]
    row += [float(x) for x in flags]
    row += [loop.mode.wire_mode.value, loop.mode.leg_mode.value]
    row += [float(x) for x in loop.command_twist]
    for pl in s.payloads:
        row += [float(pl.position[0]), float(pl.position[1]),
                float(pl.position[2]), float(1.0 if pl.latched else 0.0)]
    if len(row) != len(cols):
        raise RuntimeError("log row width mismatch")
    return row


# ---------------------------------------------------------------------------
# assertions
# ---------------------------------------------------------------------------

def _window(log: RunLog, spec: dict):
    t = log.column("time")
    start = spec.get("start", float(t[0]) if len(t) else 0.0)
    end = spec.get("end", float(t[-1]) if len(t) else 0.0)
    return (t >= start - 1e-9) & (t <= end + 1e-9)


def evaluate_assertion(log: RunLog, spec: dict):
    """Returns (passed, detail) for one named check."""
    kind = spec["type"]
    if kind == "monotone_nonincreasing":
        vals = log.column(spec["column"])[_window(log, spec)]
        slack = spec.get("slack", 1e-6)
        worst = float(np.max(np.diff(vals))) if len(vals) > 1 else 0.0
        return worst <= slack, f"max increase {worst:.3e} (slack {slack:.1e})"
    if kind == "bounds":
        vals = log.column(spec["column"])[_window(log, spec)]
        lo = spec.get("min", -math.inf)
        hi = spec.get("max", math.inf)
        vmin = float(np.min(vals)) if len(vals) else math.nan
        vmax = float(np.max(vals)) if len(vals) else math.nan
        ok = len(vals) > 0 and vmin >= lo - 1e-12 and vmax <= hi + 1e-12
        return ok, f"range [{vmin:.4g}, {vmax:.4g}] vs [{lo:.4g}, {hi:.4g}]"
    if kind == "final_delta":
        vals = log.column(spec["column"])
        delta = float(vals[-1] - vals[0])
        ok = spec["min"] <= delta <= spec["max"]
        return ok, f"delta {delta:.4g} vs [{spec['min']:.4g}, {spec['max']:.4g}]"
    if kind == "max_drift":
        mask = _window(log, spec)
        cols = [log.column(c)[mask] for c in spec["columns"]]
        ref = [c[0] for c in cols]
        drift = np.sqrt(sum((c - r) ** 2 for c, r in zip(cols, ref)))
        worst = float(np.max(drift)) if len(drift) else 0.0
        return worst <= spec["max"], f"max drift {worst:.3e} (cap {spec['max']:.1e})"
    if kind == "final_close":
        vals = log.column(spec["column"])
        err = abs(float(vals[-1]) - spec["value"])
        return err <= spec["tol"], f"|final - {spec['value']:.4g}| = {err:.3e}"
    if kind == "rms_error":
        mask = _window(log, spec)
        a = log.column(spec["column"])[mask]
        b = log.column(spec["reference_column"])[mask]
        rms = float(np.sqrt(np.mean((a - b) ** 2))) if len(a) else math.nan
        return rms <= spec["max"], f"rms {rms:.4g} (cap {spec['max']:.4g})"
    raise ConfigError(f"unknown assertion type {kind!r}")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    exit_code: int
    log: RunLog
    metrics: dict

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def run_scenario(source, overrides: dict | None = None,
                 out_dir=None) -> RunResult:
    """Execute a scenario; deterministic; see module docstring.

    Exit codes: 0 ok, 2 config error (raised as ConfigError before any
    run), 3 assertion or guard failure, 4 numerical divergence.
    """
    doc = apply_overrides(load_script(source), overrides)
    loop = build_loop(doc)
    duration = float(doc["duration"])
    cols = log_columns(loop.params.wire_count, len(loop.state.payloads))
    log = RunLog(columns=cols)
    events = sorted(doc.get("events", []), key=lambda e: e["t"])
    metrics = {
        "name": doc["name"],
        "config_hash": config_hash(doc),
        "duration": duration,
        "events_applied": [],
        "assertions": [],
    }

    total_steps = int(round(duration / loop.config.physics_dt))
    next_event = 0
    exit_code = EXIT_OK
    error = None
    try:
        for k in range(total_steps):
            while (
                next_event < len(events)
                and events[next_event]["t"] <= loop.state.time + 1e-9
            ):
                ev = events[next_event]
                _apply_event(loop, ev)
                metrics["events_applied"].append(
                    {"t": round(loop.state.time, 9), "type": ev["type"]}
                )
                next_event += 1
            if k % loop.config.log_every == 0:
                log.append(_log_row(loop, cols))
            loop.step_physics()
        if total_steps % loop.config.log_every == 0:
            log.append(_log_row(loop, cols))
    except NumericalDivergence as e:
        exit_code, error = EXIT_DIVERGENCE, f"divergence: {e}"
    except GuardFailed as e:
        exit_code, error = EXIT_ASSERTION, f"guard failed: {e}"

    if exit_code == EXIT_OK:
        for spec in doc.get("assertions", []):
            passed, detail = evaluate_assertion(log, spec)
            metrics["assertions"].append(
                {"name": spec["name"], "type": spec["type"],
                 "passed": bool(passed), "detail": detail}
            )
            if not passed:
                exit_code = EXIT_ASSERTION
    if error:
        metrics["error"] = error
    metrics["rows"] = len(log.rows)
    metrics["final_time"] = float(loop.state.time)
    metrics["exit_code"] = exit_code

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log.save(out / f"{doc['name']}_log.csv")
        (out / f"{doc['name']}_metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return RunResult(exit_code, log, metrics)


def raise_on_failure(result: RunResult):
    for a in result.metrics["assertions"]:
        if not a["passed"]:
            raise ScenarioAssertionFailed(a["name"], a["detail"])


# ---------------------------------------------------------------------------
# plot series emission
# ---------------------------------------------------------------------------

PLOT_PANELS = {
    "wire_rates": ["time"]
    + [f"wire{i}_rate" for i in range(5)]
    + [f"wire{i}_rate_ref" for i in range(5)],
    "wire_lengths": ["time"] + [f"wire{i}_len" for i in range(5)],
    "wheel_speeds": ["time", "wheel_left", "wheel_right"],
    "cog_velocity": ["time", "vx", "vy", "vz", "cmd_vx", "cmd_vy", "cmd_vz"],
}


def emit_plots(log_path, out_dir) -> list:
    """Write one columnar series file per figure panel; no rendering.

    Raises MissingColumn when the log lacks a panel column.
    """
    log = RunLog.load(log_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(log_path).stem
    written = []
    for panel, cols in PLOT_PANELS.items():
        for c in cols:
            if c not in log.columns:
                raise MissingColumn(f"panel {panel!r} needs column {c!r}")
        idx = [log.columns.index(c) for c in cols]
        path = out / f"{stem}.{panel}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for row in log.rows:
                writer.writerow(
                    [repr(row[k]) if isinstance(row[k], float) else row[k]
                     for k in idx]
                )
        written.append(path)
    return written
