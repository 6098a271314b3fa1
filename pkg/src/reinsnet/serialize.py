"""JSON and CSV output with an embedded run manifest.

Currency goes out as decimal strings (``repr`` of the float, which round-trips
exactly); infinite caps are written as ``"inf"``.  JSON keys are sorted and no
timestamps are recorded, so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import Contract, Firm, ReinsuranceNetwork

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)
    arguments: dict = field(default_factory=dict)
    version: str = ""

    def to_dict(self):
        return {"command": self.command, "config": jsonable(self.config), "seed": self.seed,
                "inputs": dict(sorted(self.inputs.items())),
                "arguments": jsonable(self.arguments), "version": self.version}


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def decimal(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def parse_decimal(s) -> float:
    return float(s)


def jsonable(obj):
    """Recursively convert numpy values and tuples; NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return decimal(x)
        return x
    return obj


def dumps(payload: dict, manifest: RunManifest | None = None) -> str:
    data = dict(payload)
    if manifest is not None:
        data["manifest"] = manifest.to_dict()
    return json.dumps(jsonable(data), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, payload: dict, manifest: RunManifest | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps(payload, manifest), encoding="utf-8")
    return path


def write_csv(path, header, rows, manifest: RunManifest | None = None) -> Path:
    """CSV with an optional first line ``# manifest: {...}``."""
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest: " + json.dumps(manifest.to_dict(), sort_keys=True,
                                               separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (decimal(v) if isinstance(v, float) else v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


# --- networks ------------------------------------------------------------------


def network_to_dict(net: ReinsuranceNetwork) -> dict:
    ids = net.firm_ids
    return {
        "format_version": FORMAT_VERSION,
        "kind": net.kind,
        "firms": [{"id": f.id, "role": f.role.value, "equity": decimal(f.equity),
                   "primary_premiums": decimal(f.primary_premiums),
                   "foreign_reins_premiums": decimal(f.foreign_reins_premiums)} for f in net.firms],
        "contracts": [{"reinsurer": ids[k.reinsurer], "reinsured": ids[k.reinsured],
                       "rate": k.rate, "deductible": decimal(k.deductible), "cap": decimal(k.cap),
                       "layer": k.layer,
                       "premium": None if k.premium is None else decimal(k.premium)}
                      for k in net.contracts],
        "shock": [decimal(x) for x in net.shock],
    }


def network_from_dict(data: dict) -> ReinsuranceNetwork:
    try:
        firms = tuple(Firm(f["id"], f["role"], parse_decimal(f["equity"]),
                           parse_decimal(f.get("primary_premiums", 0)),
                           parse_decimal(f.get("foreign_reins_premiums", 0)))
                      for f in data["firms"])
        idx = {f.id: i for i, f in enumerate(firms)}
        contracts = tuple(Contract(idx[c["reinsurer"]], idx[c["reinsured"]], float(c["rate"]),
                                   parse_decimal(c.get("deductible", 0)),
                                   parse_decimal(c.get("cap", "inf")), int(c.get("layer", 0)),
                                   None if c.get("premium") is None else parse_decimal(c["premium"]))
                          for c in data["contracts"])
        shock = data.get("shock")
        shock = None if shock is None else [parse_decimal(x) for x in shock]
    except KeyError as exc:
        raise ValueError(f"network file is missing field or firm {exc}") from None
    return ReinsuranceNetwork(firms, contracts, shock, data.get("kind", "custom"))


def save_network(net: ReinsuranceNetwork, path, manifest: RunManifest | None = None) -> Path:
    return write_json(path, network_to_dict(net), manifest)


def load_network(path) -> ReinsuranceNetwork:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    return network_from_dict(data)
