"""Durable persistence for population models and session records.

Documents are canonical JSON (sorted keys, compact separators, repr-exact
float encoding) wrapped with a schema version, a sha256 checksum of the
body, and a created_at timestamp; two saves of the same content differ only
in created_at. Writes are atomic (temp file + rename in the target
directory). A gallery is a directory of one document per model, named
``<theme>__<id>.mpo.json`` with the id derived from the body checksum.
"""

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .acquisition import PopulationGallery
from .errors import StoreError
from .gp import KernelHyperparams, LatentGoodness, PreferenceGP
from .preference import PreferenceDataset, SelectionEvent

SCHEMA_VERSION = 1
MODEL_SUFFIX = ".mpo.json"


def canonical_json(obj):
    """Deterministic JSON bytes; floats keep their shortest exact decimal."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def body_checksum(body):
    return hashlib.sha256(canonical_json(body)).hexdigest()


def _wrap(kind, body, created_at=None):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "checksum": body_checksum(body),
        "created_at": created_at or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "body": body,
    }


def _unwrap(doc, kind, source="document"):
    for key in ("schema_version", "kind", "checksum", "body"):
        if key not in doc:
            raise StoreError(f"{source}: missing field {key!r}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise StoreError(f"{source}: unsupported schema version {doc['schema_version']}")
    if doc["kind"] != kind:
        raise StoreError(f"{source}: expected kind {kind!r}, found {doc['kind']!r}")
    if body_checksum(doc["body"]) != doc["checksum"]:
        raise StoreError(f"{source}: checksum mismatch (corrupted document)")
    return doc["body"]


def atomic_write(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise StoreError(f"failed to write {path}: {exc}") from exc


def _floats(arr):
    return [float(v) for v in np.asarray(arr).reshape(-1)]


def _points(arr):
    return [[float(v) for v in row] for row in np.asarray(arr).reshape(len(arr), -1)]


def _dataset_body(dataset):
    return {
        "dimension": dataset.dimension,
        "events": [
            {
                "iteration_index": ev.iteration_index,
                "chosen": _floats(ev.chosen),
                "rejected": _points(ev.rejected),
            }
            for ev in dataset.events
        ],
    }


def _dataset_from_body(body):
    events = tuple(
        SelectionEvent(
            chosen=np.array(ev["chosen"], dtype=np.float64),
            rejected=np.array(ev["rejected"], dtype=np.float64),
            iteration_index=int(ev["iteration_index"]),
        )
        for ev in body["events"]
    )
    return PreferenceDataset(events=events, dimension=int(body["dimension"]))


def _model_body_from_gp(gp):
    h = gp.hyperparams
    return {
        "hyperparams": {
            "signal_variance": float(h.signal_variance),
            "length_scales": _floats(h.length_scales),
            "noise_variance": float(h.noise_variance),
        },
        "observed_points": _points(gp.observed_points),
        "latents": _floats(gp.latent.values),
        "dataset_ref": gp.dataset_ref,
    }


def _gp_from_model_body(body, dimension):
    h = body["hyperparams"]
    return PreferenceGP(
        KernelHyperparams(
            float(h["signal_variance"]),
            np.array(h["length_scales"], dtype=np.float64),
            float(h["noise_variance"]),
        ),
        np.array(body["observed_points"], dtype=np.float64).reshape(-1, dimension),
        LatentGoodness(np.array(body["latents"], dtype=np.float64)),
        dataset_ref=body.get("dataset_ref", ""),
    )


@dataclass(frozen=True)
class StoredModel:
    id: str
    path: Path
    schema_version: int
    dimension: int
    method: str
    plane_strategy: str
    theme: str
    created_at: str


def _sanitize_theme(theme):
    slug = re.sub(r"[^a-z0-9-]+", "-", (theme or "").lower()).strip("-")
    return slug or "untitled"


def _model_document_body(record):
    if record.model is None:
        raise StoreError("record has no fitted model to store")
    return {
        "dimension": record.config.dimension,
        "method": record.config.method,
        "plane_strategy": record.plane_strategy,
        "theme": record.config.theme,
        "seed": record.config.seed,
        "least_iteration": record.least_iteration,
        "model": _model_body_from_gp(record.model),
        "dataset": _dataset_body(record.dataset),
    }


def _existing_dimensions(directory):
    dims = {}
    for path in sorted(Path(directory).glob(f"*{MODEL_SUFFIX}")):
        try:
            with open(path, "rb") as fh:
                doc = json.load(fh)
            dims[path.name] = int(doc["body"]["dimension"])
        except (OSError, KeyError, ValueError, json.JSONDecodeError):
            continue
    return dims


def save_model(record, directory):
    """Store a session record's fitted model; returns the StoredModel."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    body = _model_document_body(record)
    for name, dim in _existing_dimensions(directory).items():
        if dim != body["dimension"]:
            raise StoreError(
                f"dimension mismatch with existing gallery: {name} has dimension {dim}, new model has {body['dimension']}"
            )
    doc = _wrap("population-model", body)
    model_id = doc["checksum"][:12]
    path = directory / f"{_sanitize_theme(body['theme'])}__{model_id}{MODEL_SUFFIX}"
    atomic_write(path, canonical_json(doc))
    return StoredModel(
        id=model_id,
        path=path,
        schema_version=SCHEMA_VERSION,
        dimension=body["dimension"],
        method=body["method"],
        plane_strategy=body["plane_strategy"],
        theme=body["theme"],
        created_at=doc["created_at"],
    )


def load_model(path):
    """(PreferenceGP, metadata dict) from a stored model document."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreError(f"cannot read model document {path}: {exc}") from exc
    body = _unwrap(doc, "population-model", source=str(path))
    gp = _gp_from_model_body(body["model"], int(body["dimension"]))
    meta = {
        "id": doc["checksum"][:12],
        "path": path,
        "dimension": int(body["dimension"]),
        "method": body["method"],
        "plane_strategy": body["plane_strategy"],
        "theme": body["theme"],
        "seed": body.get("seed"),
        "least_iteration": body.get("least_iteration"),
        "created_at": doc["created_at"],
        "dataset": body["dataset"],
    }
    return gp, meta


def load_gallery(source, expected_dimension):
    """PopulationGallery from a directory or explicit model paths.

    Models are ordered by id (not filesystem enumeration order) and start
    with uniform weight 1. Mixed dimensions are rejected with the offenders
    listed; themes are provenance labels, never constraints.
    """
    if isinstance(source, (str, Path)):
        directory = Path(source)
        if not directory.is_dir():
            raise StoreError(f"gallery directory {directory} does not exist")
        paths = sorted(directory.glob(f"*{MODEL_SUFFIX}"))
    else:
        paths = [Path(p) for p in source]
    if not paths:
        raise StoreError(f"no population models found in {source}")
    loaded = [load_model(p) for p in paths]
    loaded.sort(key=lambda item: item[1]["id"])
    offenders = [f"{m['id']} (d={m['dimension']})" for _, m in loaded if m["dimension"] != expected_dimension]
    if offenders:
        raise StoreError(
            f"gallery models must all have dimension {expected_dimension}; offending models: {', '.join(offenders)}"
        )
    gallery = PopulationGallery(
        models=tuple(gp for gp, _ in loaded),
        weights=np.ones(len(loaded)),
        source_labels=tuple(f"{m['theme']}__{m['id']}" for _, m in loaded),
    )
    gallery.tags = tuple(
        {
            "id": m["id"],
            "theme": m["theme"],
            "method": m["method"],
            "plane_strategy": m["plane_strategy"],
            "dimension": m["dimension"],
        }
        for _, m in loaded
    )
    return gallery


def session_record_document(record, created_at=None):
    from .session import SATISFIED, EXHAUSTED  # local import to avoid a cycle

    cfg = record.config
    body = {
        "config": {
            "dimension": cfg.dimension,
            "method": cfg.method,
            "max_iterations": cfg.max_iterations,
            "decay": {"d1": cfg.decay.d1, "d2": cfg.decay.d2},
            "seed": cfg.seed,
            "gallery_ref": cfg.gallery_ref,
            "theme": cfg.theme,
        },
        "status": record.status,
        "partial": record.status not in (SATISFIED, EXHAUSTED),
        "least_iteration": record.least_iteration,
        "selections": list(record.selections),
        "planes": [
            {"center": _floats(c), "corner1": _floats(c1), "corner2": _floats(c2)}
            for c, c1, c2 in record.planes
        ],
        "dataset": _dataset_body(record.dataset),
        "plane_strategy": record.plane_strategy,
        "model": _model_body_from_gp(record.model) if record.model is not None else None,
        "engine_options": _options_body(record.options),
    }
    return _wrap("session-record", body, created_at=created_at)


def _options_body(options):
    m = options.maximizer
    return {
        "maximizer": {
            "starts": m.starts,
            "iters": m.iters,
            "step0": m.step0,
            "shrink": m.shrink,
            "min_step": m.min_step,
            "cull": [list(c) for c in (m.cull or ())],
        },
        "fit": _fit_body(options.fit),
        "refit": _fit_body(options.refit),
        "lookahead_fit": _fit_body(options.lookahead_fit),
        "two_step_mode": options.two_step_mode,
        "mc_samples": options.mc_samples,
        "plane_retries": options.plane_retries,
    }


def _fit_body(fit):
    return {
        "restarts": fit.restarts,
        "maxiter": fit.maxiter,
        "gtol": fit.gtol,
        "noise_variance": fit.noise_variance,
        "inner_tol": fit.inner_tol,
        "inner_maxiter": fit.inner_maxiter,
    }


def _options_from_body(body):
    from .acquisition import MaximizerOptions
    from .preference import FitOptions
    from .session import EngineOptions

    if body is None:
        return EngineOptions()
    m = body["maximizer"]

    def fit(key):
        f = body[key]
        return FitOptions(
            restarts=int(f["restarts"]),
            maxiter=int(f["maxiter"]),
            gtol=float(f["gtol"]),
            noise_variance=float(f["noise_variance"]),
            inner_tol=float(f["inner_tol"]),
            inner_maxiter=int(f["inner_maxiter"]),
        )

    return EngineOptions(
        maximizer=MaximizerOptions(
            starts=int(m["starts"]),
            iters=int(m["iters"]),
            step0=float(m["step0"]),
            shrink=float(m["shrink"]),
            min_step=float(m["min_step"]),
            cull=tuple(tuple(c) for c in m["cull"]),
        ),
        fit=fit("fit"),
        refit=fit("refit"),
        lookahead_fit=fit("lookahead_fit"),
        two_step_mode=body["two_step_mode"],
        mc_samples=int(body["mc_samples"]),
        plane_retries=int(body["plane_retries"]),
    )


def session_record_bytes(record, created_at=None):
    return canonical_json(session_record_document(record, created_at=created_at))


def load_session_record(source):
    """SessionRecord from a path, bytes, or parsed document."""
    from .acquisition import DecaySchedule
    from .session import SessionConfig, SessionRecord

    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            doc = json.load(fh)
        label = str(source)
    elif isinstance(source, (bytes, bytearray)):
        doc = json.loads(source)
        label = "bytes"
    else:
        doc = source
        label = "document"
    body = _unwrap(doc, "session-record", source=label)
    cfg = body["config"]
    config = SessionConfig(
        dimension=int(cfg["dimension"]),
        method=cfg["method"],
        max_iterations=int(cfg["max_iterations"]),
        decay=DecaySchedule(int(cfg["decay"]["d1"]), float(cfg["decay"]["d2"])),
        seed=int(cfg["seed"]),
        gallery_ref=cfg.get("gallery_ref"),
        theme=cfg.get("theme", ""),
    )
    dataset = _dataset_from_body(body["dataset"])
    model = _gp_from_model_body(body["model"], config.dimension) if body.get("model") else None
    return SessionRecord(
        config=config,
        status=body["status"],
        least_iteration=body.get("least_iteration"),
        selections=tuple(
            {"grid_index": int(s["grid_index"]), "satisfied": bool(s["satisfied"])} for s in body["selections"]
        ),
        planes=tuple(
            (
                np.array(p["center"], dtype=np.float64),
                np.array(p["corner1"], dtype=np.float64),
                np.array(p["corner2"], dtype=np.float64),
            )
            for p in body["planes"]
        ),
        dataset=dataset,
        model=model,
        plane_strategy=body["plane_strategy"],
        options=_options_from_body(body.get("engine_options")),
    )
