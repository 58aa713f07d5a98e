"""The TXMD model container: one file holding named, typed model sections.

Layout: magic `TXMD`, u32 version, u32 section count, then per section a
type tag, a user-chosen name, and a length-prefixed named-array payload.
Everything is little-endian and timestamp-free, so identical models write
identical bytes.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from ._arrayio import (
    pack_string,
    read_exact,
    read_named_arrays,
    read_u32,
    read_u64,
    unpack_string,
    write_named_arrays,
    write_u32,
    write_u64,
)
from .errors import FormatError
from .filterbank import FilterBank, KernelMeta
from .learn import CalibrationParams, KernelModel, KernelSpec, LinearClassifier
from .vocab import Codebook, GmmModel, PcaWhitener

TXMD_MAGIC = b"TXMD"
TXMD_VERSION = 1


def _to_arrays(obj) -> tuple[str, dict[str, np.ndarray]]:
    if isinstance(obj, PcaWhitener):
        return "whitener", {
            "mean": obj.mean,
            "basis": obj.basis,
            "eigenvalues": obj.eigenvalues,
        }
    if isinstance(obj, Codebook):
        return "codebook", {"centers": obj.centers}
    if isinstance(obj, GmmModel):
        return "gmm", {
            "priors": obj.priors,
            "means": obj.means,
            "variances": obj.variances,
        }
    if isinstance(obj, LinearClassifier):
        return "linear_svm", {
            "weights": obj.weights,
            "biases": obj.biases,
            "classes": pack_string(json.dumps(list(obj.classes))),
        }
    if isinstance(obj, KernelModel):
        arrays = {
            "dual_coef": obj.dual_coef,
            "biases": obj.biases,
            "classes": pack_string(json.dumps(list(obj.classes))),
            "spec": pack_string(
                json.dumps(
                    {"kind": obj.spec.kind, "lam": obj.spec.lam, "normalize": obj.spec.normalize}
                )
            ),
        }
        if obj.training_vectors is not None:
            arrays["training_vectors"] = obj.training_vectors
        return "kernel_svm", arrays
    if isinstance(obj, CalibrationParams):
        return "calibration", {"ab": np.array([obj.a, obj.b])}
    if isinstance(obj, FilterBank):
        meta = [
            {"family": m.family, "scale": m.scale, "orientation": m.orientation}
            for m in obj.meta
        ]
        return "filterbank", {
            "kernels": obj.kernels,
            "meta": pack_string(json.dumps(meta)),
        }
    raise TypeError(f"cannot serialize {type(obj).__name__} into the model container")


def _from_arrays(tag: str, arrays: dict[str, np.ndarray]):
    if tag == "whitener":
        return PcaWhitener(arrays["mean"], arrays["basis"], arrays["eigenvalues"])
    if tag == "codebook":
        return Codebook(arrays["centers"])
    if tag == "gmm":
        return GmmModel(arrays["priors"], arrays["means"], arrays["variances"])
    if tag == "linear_svm":
        classes = tuple(json.loads(unpack_string(arrays["classes"])))
        return LinearClassifier(classes, arrays["weights"], arrays["biases"])
    if tag == "kernel_svm":
        classes = tuple(json.loads(unpack_string(arrays["classes"])))
        spec_d = json.loads(unpack_string(arrays["spec"]))
        spec = KernelSpec(spec_d["kind"], spec_d["lam"], spec_d["normalize"])
        return KernelModel(
            classes,
            arrays["dual_coef"],
            arrays["biases"],
            spec,
            arrays.get("training_vectors"),
        )
    if tag == "calibration":
        a, b = arrays["ab"]
        return CalibrationParams(float(a), float(b))
    if tag == "filterbank":
        meta = tuple(
            KernelMeta(m["family"], m["scale"], m["orientation"])
            for m in json.loads(unpack_string(arrays["meta"]))
        )
        return FilterBank(arrays["kernels"], meta)
    raise FormatError(f"unknown model section type {tag!r}")


def save_models(path: str | Path, models: dict[str, object]) -> None:
    """Write named models into one TXMD container."""
    with open(path, "wb") as f:
        f.write(TXMD_MAGIC)
        write_u32(f, TXMD_VERSION)
        write_u32(f, len(models))
        for name, obj in models.items():
            tag, arrays = _to_arrays(obj)
            tag_b = tag.encode("ascii")
            name_b = name.encode("utf-8")
            write_u32(f, len(tag_b))
            f.write(tag_b)
            write_u32(f, len(name_b))
            f.write(name_b)
            payload = io.BytesIO()
            write_named_arrays(payload, arrays)
            raw = payload.getvalue()
            write_u64(f, len(raw))
            f.write(raw)


def load_models(path: str | Path) -> dict[str, object]:
    """Read back every section of a TXMD container as {name: model}."""
    out: dict[str, object] = {}
    with open(path, "rb") as f:
        if read_exact(f, 4) != TXMD_MAGIC:
            raise FormatError(f"{path}: bad magic, not a TXMD container")
        version = read_u32(f)
        if version != TXMD_VERSION:
            raise FormatError(f"{path}: unsupported TXMD version {version}")
        count = read_u32(f)
        for _ in range(count):
            tag = read_exact(f, read_u32(f)).decode("ascii")
            name = read_exact(f, read_u32(f)).decode("utf-8")
            payload = read_exact(f, read_u64(f))
            arrays = read_named_arrays(io.BytesIO(payload))
            out[name] = _from_arrays(tag, arrays)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes")
    return out
