"""HTTP service for interactive exploration.

One session per uploaded HDR image. Renders and searches run on a preview
copy bounded to 512 px on the long edge, so every response stays cheap;
requests within a session serialize on a per-session lock, while separate
sessions proceed concurrently.

Preview tokens are 128-bit digests keyed by a per-session secret, which
makes identical render requests map to identical URLs (responses are
cacheable) without making tokens guessable. Validation failures are 400,
unknown ids 404, oversized uploads 413; unexpected failures are a bare 500
with no internal detail.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse, Response

from . import hdrio
from . import tensorgrad as tg
from .cli import FALLBACK_GAMMA_BASE, FALLBACK_GAMMA_POST, WEIGHTS_ENV
from .errors import ContractError, FormatError, TonescopeError
from .networks import ToneMapModel
from .pipeline import (GAMMA_BASE_RANGE, GAMMA_POST_RANGE, gaussian_kernels,
                       tonemap_with_kernels)
from .tmqi import TmqiConfig, tmqi

MAX_UPLOAD_BYTES = 64 * 1024 * 1024
PREVIEW_LONG_EDGE = 512
MAX_SESSIONS = 64
MAX_PREVIEWS_PER_SESSION = 128
MAX_STARTS = 16
MAX_ITERS = 200


@dataclass
class Session:
    session_id: str
    secret: bytes
    hdr: np.ndarray                      # preview-resolution radiance
    lock: threading.Lock = field(default_factory=threading.Lock)
    previews: "OrderedDict[str, bytes]" = field(default_factory=OrderedDict)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _shrink_to_preview(hdr: np.ndarray) -> np.ndarray:
    return hdrio.resize_area(hdr, PREVIEW_LONG_EDGE)


class AppState:
    def __init__(self, model: Optional[ToneMapModel]):
        self.model = model
        self.sessions: "OrderedDict[str, Session]" = OrderedDict()
        self.sessions_lock = threading.Lock()

    def add_session(self, sess: Session) -> None:
        with self.sessions_lock:
            while len(self.sessions) >= MAX_SESSIONS:
                self.sessions.popitem(last=False)
            self.sessions[sess.session_id] = sess

    def get_session(self, sid: str) -> Optional[Session]:
        with self.sessions_lock:
            return self.sessions.get(sid)

    def find_preview(self, token: str) -> Optional[bytes]:
        with self.sessions_lock:
            sessions = list(self.sessions.values())
        for sess in sessions:
            data = sess.previews.get(token)
            if data is not None:
                return data
        return None

    @property
    def d_z(self) -> int:
        return self.model.d_z if self.model is not None else 8


def _render_ldr(state: AppState, hdr: np.ndarray, z: np.ndarray,
                gamma_base: Optional[float], gamma_post: Optional[float]):
    if state.model is not None:
        return state.model.render(hdr, z, gamma_base=gamma_base,
                                  gamma_post=gamma_post)
    h, w = hdr.shape[:2]
    gb = FALLBACK_GAMMA_BASE if gamma_base is None else float(gamma_base)
    gp = FALLBACK_GAMMA_POST if gamma_post is None else float(gamma_post)
    with tg.no_grad():
        return tonemap_with_kernels(hdr.astype(np.float32),
                                    gaussian_kernels(h, w), gb, gp)


def _store_preview(sess: Session, token: str, png: bytes) -> None:
    sess.previews[token] = png
    sess.previews.move_to_end(token)
    while len(sess.previews) > MAX_PREVIEWS_PER_SESSION:
        sess.previews.popitem(last=False)


def _render_token(sess: Session, z: np.ndarray,
                  gamma_base: Optional[float],
                  gamma_post: Optional[float]) -> str:
    h = hashlib.blake2b(sess.secret, digest_size=16)
    h.update(np.asarray(z, dtype=np.float64).tobytes())
    h.update(b"-" if gamma_base is None else np.float64(gamma_base).tobytes())
    h.update(b"-" if gamma_post is None else np.float64(gamma_post).tobytes())
    return h.hexdigest()


def _parse_z(value, d_z: int) -> np.ndarray:
    if not isinstance(value, list) or len(value) != d_z:
        raise ContractError("z must be a list of %d numbers" % d_z)
    try:
        z = np.asarray([float(v) for v in value], dtype=np.float64)
    except (TypeError, ValueError):
        raise ContractError("z must contain only numbers") from None
    if not np.all(np.isfinite(z)):
        raise ContractError("z must be finite")
    return z


def _parse_gamma(body: dict, key: str, lo: float, hi: float) -> Optional[float]:
    if key not in body or body[key] is None:
        return None
    try:
        v = float(body[key])
    except (TypeError, ValueError):
        raise ContractError("%s must be a number" % key) from None
    if not (lo <= v <= hi):
        raise ContractError("%s=%g outside [%g, %g]" % (key, v, lo, hi))
    return v


def create_app(model: Optional[ToneMapModel] = None,
               model_path: Optional[str] = None,
               static_dir: Optional[str] = None) -> FastAPI:
    """Build the service; weight problems surface here, not at first use."""
    if model is None:
        path = model_path or os.environ.get(WEIGHTS_ENV)
        if path:
            model = ToneMapModel.load(path)
    state = AppState(model)
    app = FastAPI(title="tonescope", docs_url=None, redoc_url=None)
    app.state.tonescope = state

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        return _error(500, "internal server error")

    @app.get("/healthz")
    def healthz():
        from ._core import backend_name
        return {"status": "ok", "model": state.model is not None,
                "d_z": state.d_z, "backend": backend_name()}

    @app.post("/session")
    async def create_session(hdr: UploadFile):
        blob = await hdr.read()
        if len(blob) > MAX_UPLOAD_BYTES:
            return _error(413, "upload exceeds %d bytes" % MAX_UPLOAD_BYTES)
        try:
            img = hdrio.read_hdr(blob)
        except (FormatError, TonescopeError) as exc:
            return _error(400, str(exc))
        preview_hdr = _shrink_to_preview(img.data.astype(np.float64))
        sess = Session(session_id=secrets.token_urlsafe(16),
                       secret=secrets.token_bytes(16), hdr=preview_hdr)
        z0 = np.zeros(state.d_z)
        with sess.lock:
            res = _render_ldr(state, sess.hdr, z0, None, None)
            token = _render_token(sess, z0, None, None)
            _store_preview(sess, token, hdrio.encode_png(res.ldr))
        state.add_session(sess)
        return {"session_id": sess.session_id, "d_z": state.d_z,
                "preview_url": "/preview/%s" % token}

    @app.post("/session/{sid}/render")
    async def render(sid: str, request: Request):
        sess = state.get_session(sid)
        if sess is None:
            return _error(404, "unknown session")
        try:
            body = json.loads(await request.body())
            if not isinstance(body, dict):
                raise ContractError("request body must be a JSON object")
            z = _parse_z(body.get("z"), state.d_z)
            gb = _parse_gamma(body, "gamma_base", *GAMMA_BASE_RANGE)
            gp = _parse_gamma(body, "gamma_post", *GAMMA_POST_RANGE)
        except (json.JSONDecodeError, ContractError) as exc:
            return _error(400, str(exc))
        with sess.lock:
            res = _render_ldr(state, sess.hdr, z, gb, gp)
            score = tmqi(sess.hdr, res.ldr,
                         TmqiConfig().for_size(*sess.hdr.shape[:2]))
            token = _render_token(sess, z, gb, gp)
            _store_preview(sess, token, hdrio.encode_png(res.ldr))
        return {"preview_url": "/preview/%s" % token,
                "q": score.q, "s": score.s, "n": score.n,
                "gamma_base": res.gamma_base, "gamma_post": res.gamma_post}

    @app.post("/session/{sid}/optimize")
    async def optimize(sid: str, request: Request):
        sess = state.get_session(sid)
        if sess is None:
            return _error(404, "unknown session")
        if state.model is None:
            return _error(400, "no trained model loaded; optimize is "
                          "unavailable in fallback mode")
        try:
            body = json.loads(await request.body())
            if not isinstance(body, dict):
                raise ContractError("request body must be a JSON object")
            starts = int(body.get("starts", 4))
            iters = int(body.get("iters", 30))
            if not (1 <= starts <= MAX_STARTS):
                raise ContractError("starts must be in [1, %d]" % MAX_STARTS)
            if not (0 <= iters <= MAX_ITERS):
                raise ContractError("iters must be in [0, %d]" % MAX_ITERS)
        except (json.JSONDecodeError, ValueError, ContractError) as exc:
            return _error(400, str(exc))
        from .latentopt import candidate_sweep
        with sess.lock:
            cands = candidate_sweep(state.model, sess.hdr, n_starts=starts,
                                    steps=iters, seed=0)
            out = []
            for c in cands:
                res = _render_ldr(state, sess.hdr, c.z, None, None)
                token = _render_token(sess, c.z, None, None)
                _store_preview(sess, token, hdrio.encode_png(res.ldr))
                out.append({"z": [float(v) for v in c.z],
                            "q": c.q, "s": c.s, "n": c.n,
                            "preview_url": "/preview/%s" % token})
        return {"candidates": out}

    @app.get("/preview/{token}")
    def preview(token: str):
        data = state.find_preview(token)
        if data is None:
            return _error(404, "unknown preview token")
        return Response(content=data, media_type="image/png")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # Mounted last so the API routes above keep priority.
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="ui")

    return app
