"""HTTP inference service over interactive sessions.

JSON request/response; every request body carries a protocol version and
unknown versions are rejected outright. Error responses are
``{"error": <code>, "detail": <message>}`` with meaningful HTTP statuses:
400 malformed payloads, 404 unknown sessions or out-of-range slices,
409 protocol violations (a box after iteration 1).
"""

from __future__ import annotations

import base64
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .grids import BinaryMask, GridError, Volume, grid_from_bytes
from .model.network import load_checkpoint
from .prompts import BoxImmutableError
from .session import EmptyPromptError, SessionStore, export_session, get_slice
from .synthdata import SynthSpec

PROTOCOL_VERSION = 1


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def load_models(checkpoint_dir) -> dict:
    models = {}
    for path in sorted(Path(checkpoint_dir).glob("*.pt")):
        model, _ = load_checkpoint(path)
        model.eval()
        models[path.stem] = model
    return models


def create_app(models: dict, ttl_seconds: float = 1800.0, spool_dir=None) -> FastAPI:
    app = FastAPI(title="iseg3d session service")
    store = SessionStore(models, ttl_seconds=ttl_seconds, spool_dir=spool_dir)
    app.state.store = store

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": PROTOCOL_VERSION, "models": sorted(models)}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return _error(400, "format", "request body is not valid JSON")
        if doc.get("version") != PROTOCOL_VERSION:
            return _error(400, "bad_version", f"unsupported payload version {doc.get('version')!r}")
        model_id = doc.get("checkpoint")
        if model_id not in models:
            return _error(400, "unknown_checkpoint", f"no checkpoint {model_id!r}")
        try:
            if doc.get("volume_b64"):
                volume = grid_from_bytes(base64.b64decode(doc["volume_b64"]), origin="upload")
                if not isinstance(volume, Volume):
                    return _error(400, "format", "uploaded grid is not a volume")
                gt = None
                if doc.get("gt_b64"):
                    gt = grid_from_bytes(base64.b64decode(doc["gt_b64"]), origin="upload-gt")
                    if not isinstance(gt, BinaryMask):
                        return _error(400, "format", "uploaded ground truth is not a mask")
                session = store.create_from_volume(model_id, volume, gt)
            elif doc.get("synthetic") is not None:
                spec_doc = dict(doc["synthetic"])
                case_seed = int(spec_doc.pop("case_seed", 0))
                with_gt = bool(spec_doc.pop("with_gt", True))
                session = store.create_synthetic(model_id, SynthSpec(**spec_doc), case_seed, with_gt=with_gt)
            else:
                return _error(400, "format", "need volume_b64 or synthetic")
        except GridError as e:
            return _error(400, "format", str(e))
        except (TypeError, ValueError) as e:
            return _error(400, "format", str(e))
        return {
            "version": PROTOCOL_VERSION,
            "session_id": session.session_id,
            "iteration": session.iteration,
            "shape": list(session.shape),
            "original_shape": list(session.volume.shape),
            "spacing": list(session.volume.spacing),
            "offset": list(session.offset),
            "has_gt": session.patch_gt is not None,
            "scores_per_prediction": models[model_id].cfg.mask_heads,
        }

    @app.post("/sessions/{session_id}/prompts")
    async def submit_prompts(session_id: str, request: Request):
        try:
            doc = await request.json()
        except Exception:
            return _error(400, "format", "request body is not valid JSON")
        if doc.get("version") != PROTOCOL_VERSION:
            return _error(400, "bad_version", f"unsupported payload version {doc.get('version')!r}")
        try:
            result = store.submit_prompts(session_id, doc)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        except BoxImmutableError as e:
            return _error(409, "box_immutable", str(e))
        except EmptyPromptError as e:
            return _error(400, "empty_prompts", str(e))
        except (TypeError, ValueError) as e:
            return _error(400, "format", str(e))
        result["version"] = PROTOCOL_VERSION
        return result

    @app.get("/sessions/{session_id}/slice")
    def slice_endpoint(session_id: str, axis: str = "z", index: int = 0, layer: str = "image"):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        try:
            payload = get_slice(session, axis, index, layer)
        except IndexError as e:
            return _error(404, "out_of_range", str(e))
        except ValueError as e:
            return _error(400, "format", str(e))
        payload["version"] = PROTOCOL_VERSION
        return payload

    @app.get("/sessions/{session_id}/state")
    def state_endpoint(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return {
            "version": PROTOCOL_VERSION,
            "session_id": session.session_id,
            "iteration": session.iteration,
            "predictions": len(session.history),
            "has_gt": session.patch_gt is not None,
            "box_set": session.state.box is not None if session.state else False,
            "history": [
                {
                    "iteration": r.iteration,
                    "scores": r.scores,
                    "selected_index": r.selected_index,
                    "dice": r.dice,
                }
                for r in session.history
            ],
        }

    @app.get("/sessions/{session_id}/export")
    def export_endpoint(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with session.lock:
            doc = export_session(session)
        return doc

    return app


def serve(models: dict, port: int = 8000, host: str = "127.0.0.1", ttl_seconds: float = 1800.0, spool_dir=None):
    import uvicorn

    app = create_app(models, ttl_seconds=ttl_seconds, spool_dir=spool_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
