"""Server-side interactive sessions: state, wire encodings, export, replay.

A session owns one volume (uploaded or synthetic), its one-time encoded image
features, the evolving PromptState, and the prediction history. Prompt
submission is serialized per session; distinct sessions never share mutable
state. Idle sessions are evicted after a TTL and exported to a spool
directory on the way out. An exported archive replays to bit-identical masks
under the same checkpoint.
"""

from __future__ import annotations

import base64
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .grids import (
    BinaryMask,
    Volume,
    clip_intensities,
    foreground_mask,
    grid_from_bytes,
    grid_to_bytes,
    zscore_normalize,
)
from .metrics import dice_score
from .model.network import PromptableSegmenter
from .prompts import (
    BoxImmutableError,
    BoxPrompt,
    PointPrompt,
    PromptState,
    Scribble,
)
from .synthdata import SynthSpec, generate_case

SESSION_ARCHIVE_FORMAT = "iseg3d-session"
SESSION_ARCHIVE_VERSION = 1


class EmptyPromptError(ValueError):
    """A prompt submission carried no sparse prompt at all."""


# -- wire encodings ----------------------------------------------------------
# Masks and slices travel as raw base64 or run-length pairs, whichever encodes
# smaller. RLE is [value, count, value, count, ...] over the flattened array.


def rle_encode(arr: np.ndarray) -> list[int]:
    flat = np.asarray(arr, dtype=np.uint8).ravel()
    if flat.size == 0:
        return []
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [flat.size]))
    out: list[int] = []
    for s, e in zip(starts, ends):
        out.extend((int(flat[s]), int(e - s)))
    return out


def rle_decode(runs: list[int], shape) -> np.ndarray:
    if len(runs) % 2:
        raise ValueError("run-length payload must have even length")
    values = np.repeat(np.asarray(runs[0::2], dtype=np.uint8), np.asarray(runs[1::2], dtype=np.int64))
    expected = int(np.prod(shape))
    if values.size != expected:
        raise ValueError(f"run-length payload decodes to {values.size} values, expected {expected}")
    return values.reshape(shape)


def encode_mask_payload(arr: np.ndarray) -> dict:
    raw_b64 = base64.b64encode(np.asarray(arr, dtype=np.uint8).tobytes()).decode("ascii")
    runs = rle_encode(arr)
    if len(json.dumps(runs)) < len(raw_b64):
        return {"encoding": "rle", "rle": runs, "shape": list(arr.shape)}
    return {"encoding": "raw", "data_b64": raw_b64, "shape": list(arr.shape)}


def decode_mask_payload(payload: dict) -> np.ndarray:
    shape = tuple(payload["shape"])
    if payload["encoding"] == "raw":
        flat = np.frombuffer(base64.b64decode(payload["data_b64"]), dtype=np.uint8)
        return flat.reshape(shape).copy()
    if payload["encoding"] == "rle":
        return rle_decode(payload["rle"], shape)
    raise ValueError(f"unknown mask encoding {payload['encoding']!r}")


# -- prompt payload parsing ---------------------------------------------------


def parse_prompt_payload(doc: dict, shape) -> tuple[list[PointPrompt], list[Scribble], BoxPrompt | None]:
    points = []
    for p in doc.get("points", []):
        coord = tuple(int(c) for c in p["coord"])
        if any(c < 0 or c >= s for c, s in zip(coord, shape)):
            raise ValueError(f"point {coord} outside grid {tuple(shape)}")
        points.append(PointPrompt(coord, int(p["label"])))
    scribbles = []
    for s in doc.get("scribbles", []):
        voxels = np.asarray(s["voxels"], dtype=np.int64)
        if voxels.ndim != 2 or voxels.shape[1] != 3:
            raise ValueError("scribble voxels must be a list of [z, y, x]")
        if (voxels < 0).any() or (voxels >= np.asarray(shape)).any():
            raise ValueError("scribble voxel outside grid")
        scribbles.append(Scribble(voxels, int(s["label"])))
    box = None
    if doc.get("box") is not None:
        b = doc["box"]
        box = BoxPrompt(tuple(int(c) for c in b["min"]), tuple(int(c) for c in b["max"]))
        box.check_in_grid(shape)
    return points, scribbles, box


# -- the session itself --------------------------------------------------------


def prepare_session_volume(volume: Volume, gt: BinaryMask | None, patch_size):
    """Deterministic preprocessing for serving: normalize, center on content.

    Returns (patch image, patch gt or None, offset). Volumes already at patch
    size keep offset (0, 0, 0).
    """
    fg = foreground_mask(volume)
    v = zscore_normalize(clip_intensities(volume, fg), fg)
    if tuple(volume.shape) == tuple(patch_size):
        gt_np = gt.data if gt is not None else None
        return v.data, gt_np, (0, 0, 0)
    if gt is not None and gt.data.any():
        center = np.argwhere(gt.astype_bool()).mean(axis=0).round().astype(int)
    else:
        center = np.asarray(volume.shape) // 2
    offset = tuple(int(c) - s // 2 for c, s in zip(center, patch_size))
    img = np.zeros(patch_size, dtype=np.float32)
    gt_np = np.zeros(patch_size, dtype=np.uint8) if gt is not None else None
    src_lo = [max(0, o) for o in offset]
    src_hi = [min(sh, o + s) for sh, o, s in zip(volume.shape, offset, patch_size)]
    dst_lo = [sl - o for sl, o in zip(src_lo, offset)]
    dst_hi = [dl + (sh - sl) for dl, sl, sh in zip(dst_lo, src_lo, src_hi)]
    src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
    dst = tuple(slice(lo, hi) for lo, hi in zip(dst_lo, dst_hi))
    img[dst] = v.data[src]
    if gt_np is not None:
        gt_np[dst] = gt.data[src]
    return img, gt_np, offset


@dataclass
class PredictionRecord:
    iteration: int
    scores: list[float]
    selected_index: int
    dice: float | None
    mask: np.ndarray  # refined binary mask, patch space


@dataclass
class Session:
    session_id: str
    model_id: str
    volume: Volume
    gt: BinaryMask | None
    patch_image: np.ndarray
    patch_gt: np.ndarray | None
    offset: tuple[int, int, int]
    encoded: object
    created_at: float = field(default_factory=time.time)
    last_activity: float = field(default_factory=time.time)
    state: PromptState | None = None
    dense: object | None = None  # selected candidate logits (torch), next dense prompt
    history: list[PredictionRecord] = field(default_factory=list)
    prompt_log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def iteration(self) -> int:
        """1-based index of the iteration the next submission will run."""
        return len(self.history) + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.patch_image.shape


def _log_prompts(points, scribbles, box) -> dict:
    doc = {
        "points": [{"coord": list(p.coord), "label": p.label} for p in points],
        "scribbles": [{"voxels": s.voxels.tolist(), "label": s.label} for s in scribbles],
        "box": None,
    }
    if box is not None:
        doc["box"] = {"min": list(box.min_corner), "max": list(box.max_corner)}
    return doc


class SessionStore:
    """Keyed session registry with idle-TTL eviction and export-on-evict."""

    def __init__(self, models: dict[str, PromptableSegmenter], ttl_seconds: float = 1800.0, spool_dir=None):
        self.models = models
        self.ttl = ttl_seconds
        self.spool_dir = Path(spool_dir) if spool_dir else None
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- lifecycle ------------------------------------------------------------

    def create_from_volume(self, model_id: str, volume: Volume, gt: BinaryMask | None) -> Session:
        model = self._model(model_id)
        patch, patch_gt, offset = prepare_session_volume(volume, gt, model.cfg.patch_size)
        with torch.no_grad():
            encoded = model.encode_image(torch.from_numpy(patch), case_id=f"session:{model_id}")
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            model_id=model_id,
            volume=volume,
            gt=gt,
            patch_image=patch,
            patch_gt=patch_gt,
            offset=offset,
            encoded=encoded,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def create_synthetic(self, model_id: str, spec: SynthSpec, case_seed: int, with_gt: bool = True) -> Session:
        volume, gt = generate_case(spec, case_seed)
        return self.create_from_volume(model_id, volume, gt if with_gt else None)

    def get(self, session_id: str) -> Session:
        self.sweep()
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            session = self._sessions[session_id]
        session.last_activity = time.time()
        return session

    def sweep(self, now: float | None = None) -> list[str]:
        """Evict idle sessions; exports them to the spool directory first."""
        now = time.time() if now is None else now
        evicted = []
        with self._lock:
            for sid in list(self._sessions):
                if now - self._sessions[sid].last_activity > self.ttl:
                    evicted.append(self._sessions.pop(sid))
        for session in evicted:
            if self.spool_dir is not None:
                self.spool_dir.mkdir(parents=True, exist_ok=True)
                out = self.spool_dir / f"{session.session_id}.json"
                out.write_text(json.dumps(export_session(session)))
        return [s.session_id for s in evicted]

    def _model(self, model_id: str) -> PromptableSegmenter:
        if model_id not in self.models:
            raise KeyError(model_id)
        return self.models[model_id]

    # -- the interactive step ---------------------------------------------------

    def submit_prompts(self, session_id: str, payload: dict) -> dict:
        session = self.get(session_id)
        model = self._model(session.model_id)
        with session.lock:
            points, scribbles, box = parse_prompt_payload(payload, session.shape)
            if not points and not scribbles and box is None:
                raise EmptyPromptError("submission must carry at least one sparse prompt")
            if session.state is None:
                state = PromptState.initial(session.shape, points, scribbles, box=box)
            else:
                state = session.state.advance(points, scribbles, previous_logits=session.dense, box=box)

            with torch.no_grad():
                outputs = model.forward_iteration(session.encoded, state, dense_override=_dense_tensor(session))
                refined = model.refine(
                    torch.from_numpy(session.patch_image),
                    outputs.selected_map,
                    torch.from_numpy(state.cumulative_positive.data),
                    torch.from_numpy(state.cumulative_negative.data),
                )
            mask = (refined.numpy() > 0).astype(np.uint8)
            dice = None
            if session.patch_gt is not None:
                dice = dice_score(BinaryMask(mask), BinaryMask(session.patch_gt))
            record = PredictionRecord(
                iteration=len(session.history) + 1,
                scores=[float(s) for s in outputs.scores],
                selected_index=outputs.selected_index,
                dice=dice,
                mask=mask,
            )
            session.state = state
            session.dense = outputs.selected_map
            session.history.append(record)
            session.prompt_log.append(_log_prompts(points, scribbles, box))
            return {
                "iteration": session.iteration,
                "scores": record.scores,
                "selected_index": record.selected_index,
                "dice": record.dice,
                "mask": encode_mask_payload(mask),
            }


def _dense_tensor(session: Session):
    if session.dense is None:
        return None
    return session.dense


# -- slices ---------------------------------------------------------------------

_AXES = {"z": 0, "y": 1, "x": 2}


def get_slice(session: Session, axis: str, index: int, layer: str) -> dict:
    """One 2D slice of the working grid as a wire payload.

    Layers: image (float32 raw + window), mask (latest prediction; zeros before
    any), prompts (0 none / 1 positive / 2 negative, cumulative).
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}")
    ax = _AXES[axis]
    shape = session.shape
    if not (0 <= index < shape[ax]):
        raise IndexError(f"slice {index} out of range for axis {axis} (size {shape[ax]})")

    if layer == "image":
        plane = np.take(session.patch_image, index, axis=ax).astype(np.float32)
        lo, hi = float(session.patch_image.min()), float(session.patch_image.max())
        return {
            "axis": axis,
            "index": index,
            "layer": layer,
            "shape": list(plane.shape),
            "dtype": "f32",
            "encoding": "raw",
            "data_b64": base64.b64encode(plane.tobytes()).decode("ascii"),
            "window": {"lo": lo, "hi": hi},
        }
    if layer == "mask":
        full = session.history[-1].mask if session.history else np.zeros(shape, dtype=np.uint8)
    elif layer == "prompts":
        if session.state is None:
            full = np.zeros(shape, dtype=np.uint8)
        else:
            pos = session.state.cumulative_positive.data
            neg = session.state.cumulative_negative.data
            full = (pos + 2 * neg * (1 - pos)).astype(np.uint8)
    else:
        raise ValueError(f"unknown layer {layer!r}")
    plane = np.take(full, index, axis=ax)
    payload = encode_mask_payload(plane)
    payload.update({"axis": axis, "index": index, "layer": layer, "dtype": "u8"})
    return payload


# -- export / replay -------------------------------------------------------------


def export_session(session: Session) -> dict:
    """Archive with the volume, the ordered prompt log, and the final mask."""
    doc = {
        "format": SESSION_ARCHIVE_FORMAT,
        "version": SESSION_ARCHIVE_VERSION,
        "session_id": session.session_id,
        "model_id": session.model_id,
        "created_at": session.created_at,
        "offset": list(session.offset),
        "volume_b64": base64.b64encode(grid_to_bytes(session.volume)).decode("ascii"),
        "gt_b64": base64.b64encode(grid_to_bytes(session.gt)).decode("ascii") if session.gt is not None else None,
        "prompt_log": session.prompt_log,
        "predictions": [
            {
                "iteration": r.iteration,
                "scores": r.scores,
                "selected_index": r.selected_index,
                "dice": r.dice,
            }
            for r in session.history
        ],
        "final_mask_b64": (
            base64.b64encode(grid_to_bytes(BinaryMask(session.history[-1].mask))).decode("ascii")
            if session.history
            else None
        ),
    }
    return doc


def replay_session(archive: dict, models: dict[str, PromptableSegmenter]) -> dict:
    """Re-run an exported prompt log; returns the replayed final payload.

    (volume, checkpoint, ordered prompt log) fully determine every
    prediction, so the replayed mask must match the archived one.
    """
    if archive.get("format") != SESSION_ARCHIVE_FORMAT:
        raise ValueError("not a session archive")
    if archive.get("version") != SESSION_ARCHIVE_VERSION:
        raise ValueError(f"unsupported session archive version {archive.get('version')}")
    volume = grid_from_bytes(base64.b64decode(archive["volume_b64"]))
    gt = grid_from_bytes(base64.b64decode(archive["gt_b64"])) if archive.get("gt_b64") else None
    store = SessionStore(models, ttl_seconds=float("inf"))
    session = store.create_from_volume(archive["model_id"], volume, gt)
    result = None
    for prompts in archive["prompt_log"]:
        result = store.submit_prompts(session.session_id, prompts)
    return {"session_id": session.session_id, "final": result, "history": session.history}
