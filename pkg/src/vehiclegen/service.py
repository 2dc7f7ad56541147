"""HTTP generation service consumed by the CLI and the browser studio.

Endpoints:
  GET  /api/health        version, checkpoint hash, size-filter bounds
  GET  /api/images        server-side sample images with dims
  GET  /api/images/{id}   PNG bytes
  POST /api/generate      {"image_id" | "image_b64", "box": {x,y,w,h},
                           "alpha_band"?, "seed"?}; add ?stages=1 for the
                          gray/color stage images.

/api/generate responds with multipart/mixed: a JSON manifest part followed
by PNG image parts (composed, then optionally gray and color). The
checkpoint is loaded once and never mutated; a bounded semaphore caps
concurrent forward passes.
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import secrets

import cv2
import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from . import __version__, networks
from .data import MIN_SIZE, MAX_W, MAX_H
from .imaging import Box, load_image
from .inference import BoxFilterError, GenerationEngine, GenerationRequest

MULTIPART_SUBTYPE = "mixed"


def png_bytes(img: np.ndarray) -> bytes:
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if u8.ndim == 3:
        u8 = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".png", u8)
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return bytes(buf)


def decode_png(data: bytes) -> np.ndarray:
    bgr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_COLOR)
    if bgr is None:
        raise ValueError("payload is not a decodable image")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def build_multipart(parts: list[tuple[str, str, bytes]]) -> tuple[bytes, str]:
    """Render (name, content_type, payload) parts as multipart/mixed bytes."""
    boundary = "vehiclegen-" + secrets.token_hex(8)
    out = io.BytesIO()
    for name, ctype, payload in parts:
        out.write(f"--{boundary}\r\n".encode())
        out.write(f"Content-Type: {ctype}\r\n".encode())
        out.write(f"Content-Disposition: inline; name=\"{name}\"\r\n".encode())
        out.write(f"Content-Length: {len(payload)}\r\n\r\n".encode())
        out.write(payload)
        out.write(b"\r\n")
    out.write(f"--{boundary}--\r\n".encode())
    return out.getvalue(), boundary


def parse_multipart(body: bytes, content_type: str) -> dict[str, tuple[str, bytes]]:
    """Inverse of build_multipart, for tests and simple clients."""
    boundary = content_type.split("boundary=")[1].strip('"')
    delim = f"--{boundary}".encode()
    parts: dict[str, tuple[str, bytes]] = {}
    for chunk in body.split(delim)[1:]:
        chunk = chunk.lstrip(b"\r\n")
        if chunk.startswith(b"--") or not chunk:
            continue
        head, _, payload = chunk.partition(b"\r\n\r\n")
        headers = {}
        for line in head.decode().split("\r\n"):
            k, _, v = line.partition(":")
            headers[k.strip().lower()] = v.strip()
        name = headers.get("content-disposition", "").split('name="')[1].split('"')[0]
        length = int(headers["content-length"])
        parts[name] = (headers.get("content-type", ""), payload[:length])
    return parts


def create_app(
    ckpt_path: str,
    images_root: str | None = None,
    max_concurrency: int = 2,
) -> FastAPI:
    try:
        ckpt = networks.load_checkpoint(ckpt_path)
        engine = GenerationEngine(ckpt)
    except Exception as exc:
        raise RuntimeError(f"cannot load checkpoint {ckpt_path}: {exc}") from exc
    ckpt_hash = networks.checkpoint_hash(ckpt_path)
    gate = threading.Semaphore(max_concurrency)
    counter = {"requests": 0}
    counter_lock = threading.Lock()

    app = FastAPI(title="vehiclegen", version=__version__)

    def _list_images() -> dict[str, str]:
        if not images_root:
            return {}
        found = {}
        for name in sorted(os.listdir(images_root)):
            if name.lower().endswith((".png", ".jpg", ".jpeg")):
                found[os.path.splitext(name)[0]] = os.path.join(images_root, name)
        return found

    @app.get("/api/health")
    def health():
        return {
            "version": __version__,
            "checkpoint": ckpt_hash,
            "size_filter": {"min": MIN_SIZE, "max_w": MAX_W, "max_h": MAX_H},
            "requests": counter["requests"],
        }

    @app.get("/api/images")
    def images():
        out = []
        for image_id, path in _list_images().items():
            img = load_image(path)
            out.append(
                {"id": image_id, "height": img.shape[0], "width": img.shape[1]}
            )
        return out

    @app.get("/api/images/{image_id}")
    def image(image_id: str):
        path = _list_images().get(image_id)
        if path is None:
            raise HTTPException(404, f"unknown image id {image_id!r}")
        return Response(png_bytes(load_image(path)), media_type="image/png")

    @app.post("/api/generate")
    def generate(payload: dict, request: Request):
        stages = request.query_params.get("stages") == "1"
        if "image_id" in payload:
            path = _list_images().get(payload["image_id"])
            if path is None:
                raise HTTPException(404, f"unknown image id {payload['image_id']!r}")
            img = load_image(path)
        elif "image_b64" in payload:
            try:
                img = decode_png(base64.b64decode(payload["image_b64"]))
            except Exception as exc:
                raise HTTPException(422, f"bad image payload: {exc}")
        else:
            raise HTTPException(422, "need image_id or image_b64")
        try:
            b = payload["box"]
            box = Box(x=int(b["x"]), y=int(b["y"]), w=int(b["w"]), h=int(b["h"]))
            box.validate_inside(img.shape[0], img.shape[1])
        except (KeyError, TypeError) as exc:
            raise HTTPException(422, f"malformed box: {exc}")
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        req = GenerationRequest(
            image=img,
            box=box,
            alpha_band=int(payload.get("alpha_band", 0)),
            seed=int(payload.get("seed", 0)),
            override_size_filter=bool(payload.get("override_size_filter", False)),
        )
        with gate:
            try:
                result = engine.generate(req)
            except BoxFilterError as exc:
                raise HTTPException(422, str(exc))
        with counter_lock:
            counter["requests"] += 1
        manifest = {
            "box": {"x": box.x, "y": box.y, "w": box.w, "h": box.h},
            "seed": req.seed,
            "alpha_band": req.alpha_band,
            "checkpoint": ckpt_hash,
            "image_dims": {"height": img.shape[0], "width": img.shape[1]},
        }
        parts = [
            ("manifest", "application/json", json.dumps(manifest).encode()),
            ("composed", "image/png", png_bytes(result.composed)),
        ]
        if stages:
            parts.append(("gray", "image/png", png_bytes(result.gray_stage)))
            parts.append(("color", "image/png", png_bytes(result.color_stage)))
        body, boundary = build_multipart(parts)
        return Response(
            body, media_type=f"multipart/{MULTIPART_SUBTYPE}; boundary={boundary}"
        )

    return app
