"""File formats: observed paths (JSON/CSV), price schedules, run configs and reports.

Floats are written with 17 significant digits, enough for every double to
read back unchanged.
"""

import csv
import io
import json
import math
from dataclasses import asdict, fields

import numpy as np

from .experiments import ExperimentConfig
from .model import MarketParams, TransformedParams, from_transformed, make_response
from .pricing import PricePath, make_policy
from .simulate import ObservedPath, SimConfig


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _num(v):
    return f"{float(v):.17g}"


def _encode(obj, level):
    pad = "  " * (level + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # non-finite values become null so the JSON stays standard
        return _num(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, level + 1)}" for k, v in obj.items()]
    elif isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, level + 1) for v in obj]
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")
    close = "  " * level + ("}" if isinstance(obj, dict) else "]")
    opener = "{" if isinstance(obj, dict) else "["
    return opener + "\n" + ",\n".join(items) + "\n" + close


def dumps_json(obj):
    """JSON text with two-space indent and 17-digit floats."""
    return _encode(obj, 0) + "\n"


def path_to_dict(path):
    return {
        "m": path.m,
        "horizon": path.horizon,
        "price_segments": [{"start": s, "end": e, "price": p} for s, e, p in path.price_path.segments],
        "adoption_times": path.adoption_times.tolist(),
    }


def path_from_dict(doc):
    expected = {"m", "horizon", "price_segments", "adoption_times"}
    if not isinstance(doc, dict) or set(doc) != expected:
        got = sorted(doc) if isinstance(doc, dict) else type(doc).__name__
        raise FormatError(f"path document needs keys {sorted(expected)}, got {got}")
    try:
        segs = [(s["start"], s["end"], s["price"]) for s in doc["price_segments"]]
        return ObservedPath(doc["m"], doc["horizon"], doc["adoption_times"], PricePath(segs))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid path: {exc}") from None


def dumps_path_json(path):
    return dumps_json(path_to_dict(path))


def dumps_path_csv(path):
    lines = [f"#m={path.m},horizon={_num(path.horizon)}", "#segments", "start,end,price"]
    lines += [f"{_num(s)},{_num(e)},{_num(p)}" for s, e, p in path.price_path.segments]
    lines.append("#adoptions")
    lines += [_num(t) for t in path.adoption_times]
    return "\n".join(lines) + "\n"


def loads_path_csv(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        head = lines[0]
        if not head.startswith("#m="):
            raise FormatError("first line must be '#m=<int>,horizon=<float>'")
        meta = dict(part.split("=", 1) for part in head[1:].split(","))
        m, horizon = int(meta["m"]), float(meta["horizon"])
        seg_at, ad_at = lines.index("#segments"), lines.index("#adoptions")
    except (IndexError, KeyError, ValueError) as exc:
        raise FormatError(f"bad path CSV header: {exc}") from None
    seg_lines = lines[seg_at + 1: ad_at]
    if seg_lines and seg_lines[0].replace(" ", "") == "start,end,price":
        seg_lines = seg_lines[1:]
    try:
        segs = [tuple(float(v) for v in ln.split(",")) for ln in seg_lines]
        if any(len(s) != 3 for s in segs):
            raise FormatError("segment rows need three fields")
        times = [float(ln) for ln in lines[ad_at + 1:]]
        return ObservedPath(m, horizon, times, PricePath(segs))
    except ValueError as exc:
        raise FormatError(f"invalid path: {exc}") from None


def read_path(filename):
    """Load a path from ``.json`` or ``.csv``."""
    with open(filename) as fh:
        text = fh.read()
    if str(filename).endswith(".csv"):
        return loads_path_csv(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not valid JSON: {exc}") from None
    return path_from_dict(doc)


def write_path(path, filename):
    text = dumps_path_csv(path) if str(filename).endswith(".csv") else dumps_path_json(path)
    with open(filename, "w") as fh:
        fh.write(text)


def read_price_csv(filename):
    """Price schedule with header ``start,end,price``."""
    with open(filename, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["start", "end", "price"]:
            raise FormatError("price file needs header 'start,end,price'")
        try:
            return PricePath([(float(r["start"]), float(r["end"]), float(r["price"])) for r in reader])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"invalid price file: {exc}") from None


def write_price_csv(path, filename):
    with open(filename, "w") as fh:
        fh.write("start,end,price\n")
        for s, e, p in path.segments:
            fh.write(f"{_num(s)},{_num(e)},{_num(p)}\n")


def _params(doc, m):
    natural = {"alpha", "beta"} & set(doc)
    transformed = {"alpha_p", "beta_p"} & set(doc)
    if natural and transformed:
        raise FormatError("give either alpha/beta or alpha_p/beta_p, not both")
    if natural == {"alpha", "beta"}:
        return MarketParams(doc.pop("alpha"), doc.pop("beta"), m)
    if transformed == {"alpha_p", "beta_p"}:
        return from_transformed(TransformedParams(doc.pop("alpha_p"), doc.pop("beta_p")), m)
    raise FormatError("missing parameters: need alpha and beta, or alpha_p and beta_p")


def _load_json(filename):
    try:
        with open(filename) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read config: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("config must be a JSON object")
    return doc


def experiment_config_from_dict(doc):
    doc = dict(doc)
    if "m" not in doc:
        raise FormatError("config is missing 'm'")
    try:
        params = _params(doc, doc.pop("m"))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    allowed = {f.name for f in fields(ExperimentConfig)} - {"alpha", "beta", "m"}
    unknown = set(doc) - allowed
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    missing = {"n_grid", "replications", "seed"} - set(doc)
    if missing:
        raise FormatError(f"missing config keys: {sorted(missing)}")
    try:
        return ExperimentConfig(alpha=params.alpha, beta=params.beta, m=params.m, **doc)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config: {exc}") from None


def load_experiment_config(filename):
    return experiment_config_from_dict(_load_json(filename))


_SIM_KEYS = {"x", "policy", "horizon", "target_n", "seed", "review_times", "tail"}


def sim_config_from_dict(doc):
    doc = dict(doc)
    if "m" not in doc:
        raise FormatError("config is missing 'm'")
    try:
        params = _params(doc, doc.pop("m"))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    unknown = set(doc) - _SIM_KEYS
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    if "seed" not in doc:
        raise FormatError("config is missing 'seed'")
    try:
        x = make_response(doc.pop("x", "const"))
        policy = make_policy(doc.pop("policy", {"type": "constant", "price": 0.0}))
        return SimConfig(params, x, policy, **doc)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config: {exc}") from None


def load_sim_config(filename):
    return sim_config_from_dict(_load_json(filename))


_REPORT_COLUMNS = ["n", "mse_alpha_p", "mse_beta_p", "mse_beta_natural", "mse_total",
                   "mse_total_scaled", "replications", "excluded", "mc_se", "invalid",
                   "mean_iterations"]


def report_csv(report):
    buf = io.StringIO()
    buf.write(",".join(_REPORT_COLUMNS) + "\n")
    for row in report.rows:
        d = asdict(row)
        cells = []
        for col in _REPORT_COLUMNS:
            v = d[col]
            if isinstance(v, bool):
                cells.append(str(v).lower())
            elif isinstance(v, int):
                cells.append(str(v))
            else:
                cells.append(_num(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def report_json(config, report, bound=None, invariance=None):
    doc = {"config": config.to_dict(), "report": report.to_dict()}
    if bound is not None:
        doc["bound_check"] = bound.to_dict()
    if invariance is not None:
        doc["m_invariance"] = invariance.to_dict()
    return dumps_json(doc)
