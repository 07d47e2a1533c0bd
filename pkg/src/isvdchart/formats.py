"""On-disk formats: stream records, calibration files, chart snapshots, configs.

Streams are JSON lines, one ``{"t": .., "x": [[..], ..], "y": [[..], ..]}``
object per subgroup. Everything else is a single JSON document. Config
readers reject unknown keys.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .factored import FactoredMatrix
from .model import Subgroup
from .monitor import MonitorConfig, MonitorState, Sigma0Factors


class FormatError(ValueError):
    """Malformed input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class StreamMismatch(ValueError):
    """A record whose dimensions disagree with the chart."""

    def __init__(self, t, message):
        self.t = t
        super().__init__(f"record t={t}: {message}")


def _matrix(value, name, line):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise FormatError(f"{name} is not a numeric array", line) from None
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise FormatError(f"{name} must be a non-empty array of equal-length arrays", line)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{name} has non-finite values", line)
    return arr


def parse_record(text: str, line=None) -> Subgroup:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", line) from None
    if not isinstance(obj, dict):
        raise FormatError("record must be a JSON object", line)
    extra = set(obj) - {"t", "x", "y"}
    if extra:
        raise FormatError(f"unknown keys {sorted(extra)}", line)
    for key in ("t", "x", "y"):
        if key not in obj:
            raise FormatError(f"missing key {key!r}", line)
    t = obj["t"]
    if not isinstance(t, int) or isinstance(t, bool) or t < 1:
        raise FormatError("t must be a positive integer", line)
    xs, ys = _matrix(obj["x"], "x", line), _matrix(obj["y"], "y", line)
    if xs.shape[0] != ys.shape[0]:
        raise FormatError(f"x has {xs.shape[0]} rows but y has {ys.shape[0]}", line)
    return Subgroup(t, xs, ys)


def read_records(fh):
    """Yield ``(line_number, Subgroup)``; blank lines are skipped."""
    for n, text in enumerate(fh, start=1):
        if text.strip():
            yield n, parse_record(text, n)


def format_record(sg: Subgroup) -> str:
    return json.dumps({"t": int(sg.t), "x": sg.xs.tolist(), "y": sg.ys.tolist()})


def write_records(subgroups, fh):
    for sg in subgroups:
        fh.write(format_record(sg) + "\n")


# calibration file

def _sigma0_doc(sigma0: Sigma0Factors):
    return [{"s0j_sq": float(sigma0.s0_sq[j]), "u0j": sigma0.U0[:, j].tolist(),
             "v0j": sigma0.V0[:, j].tolist()} for j in range(sigma0.J)]


def _sigma0_from_doc(components, p, q):
    if not components:
        return Sigma0Factors.none(p, q)
    try:
        s0 = [c["s0j_sq"] for c in components]
        U0 = np.column_stack([np.asarray(c["u0j"], float) for c in components])
        V0 = np.column_stack([np.asarray(c["v0j"], float) for c in components])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad Sigma0 component: {exc}") from None
    if U0.shape[0] != p or V0.shape[0] != q:
        raise FormatError("Sigma0 pattern lengths disagree with p, q")
    return Sigma0Factors(s0, U0, V0)


def calibration_doc(sigma0, config: MonitorConfig, result, p, q, mu_x=None, mu_y=None):
    doc = {
        "p": p, "q": q, "J": sigma0.J, "components": _sigma0_doc(sigma0),
        "H": result.H, "lambda": config.lam, "r": config.r, "m": config.m,
        "target_arl0": result.target_arl0, "achieved_arl": result.achieved_arl,
        "std_error": result.std_error, "censor_fraction": result.censor_fraction,
        "replications": result.replications, "seed": result.seed,
    }
    if mu_x is not None:
        doc["mu_x"] = np.asarray(mu_x).tolist()
        doc["mu_y"] = np.asarray(mu_y).tolist()
    return doc


CALIBRATION_KEYS = {"p", "q", "J", "components", "H", "lambda", "r", "m", "target_arl0",
                    "achieved_arl", "std_error", "censor_fraction", "replications",
                    "seed", "mu_x", "mu_y"}


def load_calibration(path):
    """Return ``(sigma0, config, doc)`` from a calibration file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    extra = set(doc) - CALIBRATION_KEYS
    if extra:
        raise FormatError(f"{path}: unknown keys {sorted(extra)}")
    try:
        p, q = int(doc["p"]), int(doc["q"])
        config = MonitorConfig(float(doc["lambda"]), int(doc["r"]), float(doc["H"]),
                               int(doc.get("m", 5)))
    except KeyError as exc:
        raise FormatError(f"{path}: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    sigma0 = _sigma0_from_doc(doc.get("components", []), p, q)
    if int(doc.get("J", sigma0.J)) != sigma0.J:
        raise FormatError(f"{path}: J disagrees with number of components")
    return sigma0, config, doc


# chart snapshot

def state_doc(state: MonitorState):
    return {
        "t": state.t,
        "p": state.p, "q": state.q,
        "U": state.D.U.tolist(), "S": state.D.S.tolist(), "V": state.D.V.tolist(),
        "config": {"lambda": state.config.lam, "r": state.config.r,
                   "H": state.config.H, "m": state.config.m},
        "sigma0": _sigma0_doc(state.sigma0),
        "update_count": state.update_count,
    }


def state_from_doc(doc) -> MonitorState:
    try:
        p, q = int(doc["p"]), int(doc["q"])
        S = np.asarray(doc["S"], float).reshape(-1)
        k = S.size
        U = np.asarray(doc["U"], float).reshape(p, k)
        V = np.asarray(doc["V"], float).reshape(q, k)
        c = doc["config"]
        config = MonitorConfig(float(c["lambda"]), int(c["r"]), float(c["H"]), int(c["m"]))
        sigma0 = _sigma0_from_doc(doc["sigma0"], p, q)
        return MonitorState(int(doc["t"]), FactoredMatrix(U, S, V), config, sigma0,
                            int(doc.get("update_count", 0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad state snapshot: {exc}") from None


def save_state(state: MonitorState, path):
    with open(path, "w") as fh:
        json.dump(state_doc(state), fh)


def load_state(path) -> MonitorState:
    with open(path) as fh:
        return state_from_doc(json.load(fh))


# configs

CALIBRATE_DEFAULTS = {
    "lambda": 0.02, "r": 5, "m": 5, "J": "auto", "edge_factor": 1.5,
    "target_arl0": 200.0, "tolerance": 0.02, "replications": 2000,
    "max_run_length": None, "seed": 0, "center_means": False,
}

SIMULATE_DEFAULTS = {
    "setups": list(range(1, 10)), "methods": ["isvd"], "target_arl0": 200.0,
    "tolerance": 0.02, "replications": 2000, "max_run_length": None, "seed": 0,
    "s_sq_grid": None, "figure": True,
}

SETUP_KEYS = {"id", "J", "s01", "oc_geometry", "lambda", "r", "s_sq_grid", "p", "q", "m"}


def load_config(path, defaults):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    unknown = set(doc) - set(defaults)
    if unknown:
        raise FormatError(f"{path}: unknown keys {sorted(unknown)}")
    out = dict(defaults)
    out.update(doc)
    return out


def num(value):
    """JSON-safe float (infinities become strings)."""
    value = float(value)
    return value if math.isfinite(value) else str(value)
