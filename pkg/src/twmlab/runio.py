"""On-disk run layout: manifest.json (written atomically at run end),
diagnostics.ndjson (one record per sample), snapshot_<t>.csv (17 significant
digits), reconstruction outputs, and the readers for all of them."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

FLOAT_FMT = "%.17g"


def config_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def config_hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _t_tag(t: float) -> str:
    return f"{t:.6f}"


def write_manifest(outdir: str, manifest: dict):
    """Atomic write (tmp + rename) so a crash never leaves a half manifest."""
    path = os.path.join(outdir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_manifest(rundir: str) -> dict:
    path = os.path.join(rundir, "manifest.json")
    if not os.path.exists(path):
        raise ConfigurationError(f"no manifest.json in {rundir}")
    with open(path) as fh:
        return json.load(fh)


def write_diagnostics(outdir: str, records: list[dict]) -> str:
    path = os.path.join(outdir, "diagnostics.ndjson")
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    return path


def read_diagnostics(rundir: str) -> list[dict]:
    path = os.path.join(rundir, "diagnostics.ndjson")
    if not os.path.exists(path):
        raise ConfigurationError(f"no diagnostics.ndjson in {rundir}")
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def snapshot_header(n: int, formulation: str) -> list[str]:
    if formulation == "frame":
        names = [f"E^{a+1}" for a in range(n)] + [f"H^{a+1}" for a in range(n)] \
            + [f"B^{a+1}" for a in range(n)]
    else:
        names = [f"phi^{a+1}" for a in range(n)] + [f"theta^{a+1}" for a in range(n)]
    return ["x"] + names


def write_snapshot(outdir: str, t: float, x: np.ndarray, fields: list[np.ndarray],
                   formulation: str) -> str:
    """fields: [E, H, B] (frame) or [phi, theta] (wavemap), each (n, N).
    The file name tag is truncated for readability; the exact time lives in
    the leading comment line."""
    n = fields[0].shape[0]
    path = os.path.join(outdir, f"snapshot_{_t_tag(t)}.csv")
    cols = [x] + [f[a] for f in fields for a in range(n)]
    header = snapshot_header(n, formulation)
    data = np.column_stack(cols)
    with open(path, "w") as fh:
        fh.write("# t = " + (FLOAT_FMT % t) + "\n")
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")
    return path


def read_snapshot(path: str):
    """Returns (t, x, blocks) where blocks maps field name prefix to (n, N)."""
    base = os.path.basename(path)
    t = float(base[len("snapshot_"):-len(".csv")])
    with open(path) as fh:
        first = fh.readline().strip()
        if first.startswith("#"):
            t = float(first.split("=")[1])
            header = fh.readline().strip().split(",")
        else:
            header = first.split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    x = data[:, 0]
    blocks: dict[str, list] = {}
    for j, name in enumerate(header[1:], start=1):
        prefix = name.split("^")[0]
        blocks.setdefault(prefix, []).append(data[:, j])
    arrays = {k: np.stack(v) for k, v in blocks.items()}
    return t, x, arrays


def list_snapshots(rundir: str) -> list[str]:
    names = [f for f in os.listdir(rundir)
             if f.startswith("snapshot_") and f.endswith(".csv")]
    return [os.path.join(rundir, f) for f in
            sorted(names, key=lambda f: float(f[len("snapshot_"):-len(".csv")]))]


def load_run(rundir: str):
    """(manifest, records, times, series) with series a dict of lists of
    (n, N) arrays keyed by field prefix, ordered by snapshot time."""
    manifest = read_manifest(rundir)
    records = read_diagnostics(rundir)
    times, series = [], {}
    for path in list_snapshots(rundir):
        t, _x, arrays = read_snapshot(path)
        times.append(t)
        for key, arr in arrays.items():
            series.setdefault(key, []).append(arr)
    return manifest, records, np.array(times), series


def write_group_field(outdir: str, t: float, x: np.ndarray, U: np.ndarray) -> str:
    """group_field_<t>.csv: x, then row-major interleaved re/im entries."""
    d = U.shape[-1]
    path = os.path.join(outdir, f"group_field_{_t_tag(t)}.csv")
    header = ["x"]
    for i in range(d):
        for j in range(d):
            header += [f"U{i}{j}_re", f"U{i}{j}_im"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(U.shape[0]):
            vals = [x[k]]
            for i in range(d):
                for j in range(d):
                    vals += [U[k, i, j].real, U[k, i, j].imag]
            fh.write(",".join(FLOAT_FMT % v for v in vals) + "\n")
    return path


def write_report(outdir: str, name: str, records: list[dict]) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    return path


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
