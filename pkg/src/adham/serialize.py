"""Deterministic on-disk model files.

A model file is a stored (uncompressed) zip with one JSON member describing
the structure and one raw ``.npy`` member per parameter array, written with
fixed timestamps, permissions, and member order. Saving the same model twice
therefore produces byte-identical files, and the file's SHA-256 doubles as a
stable model fingerprint. Parameters are float64 and round-trip bitwise.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

from .data import DataError, StandardizationStats
from .model import AdhamModel
from .network import Mlp

__all__ = ["MODEL_FORMAT_VERSION", "save_model", "load_model", "model_hash"]

MODEL_FORMAT_VERSION = 1
_STAMP = (1980, 1, 1, 0, 0, 0)  # fixed timestamp: rebuilds stay byte-identical


def _array_members(model: AdhamModel) -> list[tuple[str, np.ndarray]]:
    members = [("importance_logits", model.importance_logits)]
    for prefix, net in (("assignment", model.assignment), ("bank", model.hazard_bank)):
        for i, p in enumerate(net.param_list()):
            members.append((f"{prefix}/p{i:03d}", p))
    if model.stats is not None:
        members.append(("stats/mean", model.stats.mean))
        members.append(("stats/std", model.stats.std))
    return sorted(members)


def _meta(model: AdhamModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "adham-model",
        "assignment": model.assignment.spec(),
        "hazard_bank": model.hazard_bank.spec(),
        "n_subgroups": model.n_subgroups,
        "n_features": model.n_features,
        "time_scale": model.time_scale,
        "feature_names": model.feature_names,
        "has_stats": model.stats is not None,
        "groups": model.groups,
        "lineage": model.lineage,
    }


def _build_bytes(model: AdhamModel) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:

        def put(name, payload):
            info = zipfile.ZipInfo(name, date_time=_STAMP)
            info.external_attr = 0o600 << 16
            zf.writestr(info, payload)

        put("meta.json", json.dumps(_meta(model), indent=1, sort_keys=True))
        for name, arr in _array_members(model):
            out = io.BytesIO()
            np.lib.format.write_array(out, np.ascontiguousarray(arr))
            put(name + ".npy", out.getvalue())
    return buf.getvalue()


def save_model(model: AdhamModel, path) -> None:
    """Write a model file; identical models produce identical bytes."""
    with open(path, "wb") as fh:
        fh.write(_build_bytes(model))


def model_hash(model: AdhamModel) -> str:
    """SHA-256 of the model's serialized form (equals the saved file's hash)."""
    return hashlib.sha256(_build_bytes(model)).hexdigest()


def load_model(path) -> AdhamModel:
    """Read a model file back; parameters round-trip bitwise.

    Raises
    ------
    DataError
        If the file is not a model file or its format version is unknown.
    """
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            _check_meta(path, meta)
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(
                        io.BytesIO(zf.read(name)))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a readable model file ({exc})") from exc

    try:
        assignment = Mlp.from_spec(meta["assignment"])
        assignment.set_params([arrays[f"assignment/p{i:03d}"]
                               for i in range(len(assignment.param_list()))])
        bank = Mlp.from_spec(meta["hazard_bank"])
        bank.set_params([arrays[f"bank/p{i:03d}"]
                         for i in range(len(bank.param_list()))])
        stats = None
        if meta["has_stats"]:
            stats = StandardizationStats(mean=arrays["stats/mean"],
                                         std=arrays["stats/std"])
        return AdhamModel(
            assignment, arrays["importance_logits"], bank, meta["time_scale"],
            stats=stats, feature_names=meta["feature_names"],
            groups=meta["groups"], lineage=meta["lineage"],
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc


def _check_meta(path, meta) -> None:
    if not isinstance(meta, dict) or meta.get("kind") != "adham-model":
        raise DataError(f"{path}: not a model file")
    version = meta.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported model format version {version!r} "
            f"(this build reads version {MODEL_FORMAT_VERSION})"
        )
