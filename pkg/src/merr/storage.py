"""File formats: bag CSVs, dataset manifests, model files and config files.

* A bag file is a headerless CSV with one point per row.
* A manifest is a CSV with header ``bag_path,y_1,...,y_d``; bag paths are
  relative to the manifest's directory.
* A model file starts with the line ``MERR-MODEL v1`` followed by
  ``key=value`` lines.  Floats are written with ``repr`` so they round-trip
  exactly; the training bags are referenced by path and the Cholesky factor
  is recomputed on load.
* A config file holds ``key=value`` lines with dotted keys; ``#`` starts a
  comment.
"""

from __future__ import annotations

import csv
import hashlib
import os
import warnings
from pathlib import Path

import numpy as np
from scipy import linalg

from .embedding import BaseKernelSpec, PointBag
from .outer_kernel import OuterKernelSpec, outer_gram
from .regressor import LabeledDataset, TrainedModel, training_geometry

__all__ = [
    "MODEL_HEADER",
    "DataFormatError",
    "read_bag",
    "write_bag",
    "read_manifest",
    "write_manifest",
    "save_model",
    "load_model",
    "parse_config",
    "config_hash",
]

MODEL_HEADER = "MERR-MODEL v1"


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


def read_bag(path) -> PointBag:
    try:
        with warnings.catch_warnings():
            # an empty file is rejected below as an empty bag
            warnings.simplefilter("ignore", UserWarning)
            pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise DataFormatError(f"cannot read bag {path}: {exc}") from exc
    try:
        return PointBag(pts)
    except ValueError as exc:
        raise DataFormatError(f"invalid bag {path}: {exc}") from exc


def write_bag(path, bag: PointBag) -> None:
    np.savetxt(path, bag.points, delimiter=",", fmt="%.17g")


def read_manifest(path, label_bound: float | None = None):
    """Load a labelled dataset.  Returns ``(dataset, resolved bag paths)``."""
    path = Path(path)
    root = path.parent
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"manifest {path} is empty")
    header, body = rows[0], rows[1:]
    if not header or header[0].strip() != "bag_path":
        raise DataFormatError("manifest header must start with 'bag_path'")
    if not body:
        raise DataFormatError(f"manifest {path} lists no bags")
    ncol = len(header)
    paths, labels = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != ncol:
            raise DataFormatError(f"manifest line {lineno}: expected {ncol} fields, got {len(row)}")
        paths.append(root / row[0].strip())
        try:
            labels.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DataFormatError(f"manifest line {lineno}: {exc}") from exc
    bags = [read_bag(p) for p in paths]
    Y = np.array(labels, dtype=float).reshape(len(bags), ncol - 1)
    try:
        return LabeledDataset(bags, Y, label_bound), paths
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc


def write_manifest(path, bag_paths, labels) -> None:
    """Write a manifest; ``bag_paths`` are stored relative to the manifest's directory."""
    path = Path(path)
    Y = np.asarray(labels, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bag_path"] + [f"y_{k + 1}" for k in range(Y.shape[1])])
        for p, y in zip(bag_paths, Y):
            rel = os.path.relpath(Path(p).resolve(), path.parent.resolve())
            w.writerow([Path(rel).as_posix()] + [repr(float(v)) for v in y])


def save_model(model: TrainedModel, path, bag_paths=None) -> None:
    """Persist a model.  Without ``bag_paths`` the training bags are written to ``<path>.bags/``."""
    path = Path(path)
    if bag_paths is None:
        bag_dir = Path(str(path) + ".bags")
        bag_dir.mkdir(parents=True, exist_ok=True)
        bag_paths = []
        for i, bag in enumerate(model.train_bags):
            p = bag_dir / f"bag_{i:05d}.csv"
            write_bag(p, bag)
            bag_paths.append(p)
    bag_paths = list(bag_paths)
    if len(bag_paths) != model.size:
        raise ValueError("need one bag path per training bag")
    lines = [
        MODEL_HEADER,
        f"base.family={model.base.family}",
        f"base.bandwidth={model.base.bandwidth!r}",
        f"outer.family={model.outer.family}",
        f"outer.theta={float(model.outer.theta)!r}",
        f"lambda={model.lam!r}",
        f"jitter={model.jitter_used!r}",
        f"method={model.method}",
        f"l={model.size}",
        f"output_dim={model.output_dim}",
    ]
    for p, row in zip(bag_paths, model.duals):
        rel = os.path.relpath(Path(p).resolve(), path.parent.resolve())
        lines.append(f"bag={Path(rel).as_posix()}")
        lines.append("dual=" + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_model(path) -> TrainedModel:
    """Load a model file and recompute its training geometry and factor."""
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read model {path}: {exc}") from exc
    if not text or text[0].strip() != MODEL_HEADER:
        raise DataFormatError(f"{path} is not a {MODEL_HEADER} file")
    meta, bag_paths, duals = {}, [], []
    for line in text[1:]:
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFormatError(f"malformed model line {line!r}")
        if key == "bag":
            bag_paths.append(path.parent / value)
        elif key == "dual":
            duals.append([float(v) for v in value.split(",")])
        else:
            meta[key] = value
    try:
        base = BaseKernelSpec(meta["base.family"], float(meta["base.bandwidth"]))
        outer = OuterKernelSpec(meta["outer.family"], float(meta["outer.theta"]))
        lam = float(meta["lambda"])
        jitter = float(meta["jitter"])
        method = meta.get("method", "exact")
        l = int(meta["l"])
        d = int(meta["output_dim"])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"model {path} is missing or has an invalid field: {exc}") from exc
    if len(bag_paths) != l or len(duals) != l or any(len(r) != d for r in duals):
        raise DataFormatError(f"model {path}: bag/dual records do not match l={l}, d={d}")
    bags = tuple(read_bag(p) for p in bag_paths)
    geom, method, taylor = training_geometry(bags, base, method)
    K = outer_gram(outer, geom)
    A = K + (l * lam + jitter) * np.eye(l)
    try:
        factor = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise DataFormatError(f"model {path}: stored system is not positive definite") from exc
    return TrainedModel(
        base=base,
        outer=outer,
        lam=lam,
        train_bags=bags,
        factor=factor,
        duals=np.array(duals, dtype=float),
        jitter_used=jitter,
        train_diag=geom.diag,
        method=method,
        taylor=taylor,
    )


def parse_config(source) -> dict:
    """Parse ``key=value`` lines (dotted keys allowed) into a dict of strings.

    ``source`` is a path or an iterable of lines.  Duplicate keys are an error.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            lines = Path(source).read_text().splitlines()
        except OSError as exc:
            raise DataFormatError(f"cannot read config {source}: {exc}") from exc
    else:
        lines = list(source)
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise DataFormatError(f"config line {lineno}: expected key=value, got {raw!r}")
        if key in out:
            raise DataFormatError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_hash(mapping: dict) -> str:
    """sha256 of the canonical ``key=value`` listing, sorted by key."""
    canon = "".join(f"{k}={mapping[k]}\n" for k in sorted(mapping))
    return hashlib.sha256(canon.encode()).hexdigest()
