"""HTTP classification service with per-upload exploration sessions.

Uploads (a ZIP of numbered frames, or a single energy-image PNG) are turned
into a prediction plus a session directory holding the energy image, so the
UI can later fetch feature maps and explanation overlays for the same input.
Sessions expire after a TTL; expiry is checked at access time and a sweeper
thread removes leftovers.
"""

from __future__ import annotations

import contextlib
import io
import json
import os
import re
import secrets
import shutil
import smtplib
import subprocess
import tempfile
import threading
import time
import zipfile
from dataclasses import dataclass, field
from email.message import EmailMessage
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import CLASS_NAMES, explain
from .dataset import energy_images_from_masks
from .gait import ENERGY_SIZE, EnergyImage
from .model import GaitModel, Prediction, load_model, predict
from .silhouette import denoise, largest_component, learn_background, segment

EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_FRAME_PNG_RE = re.compile(r"(^|/)frame_(\d+)\.png$")
_FRAME_POSE_RE = re.compile(r"(^|/)frame_(\d+)\.json$")
_BACKGROUND_RE = re.compile(r"(^|/)background\.png$")


@dataclass
class Settings:
    model_gei: str | None = None
    model_sei: str | None = None
    port: int = 8020
    session_ttl_secs: float = 3600.0
    max_upload_mb: float = 64.0
    smtp_url: str | None = None
    decoder_cmd: str | None = None
    session_root: str | None = None
    static_dir: str | None = None

    @classmethod
    def from_env(cls, env=os.environ) -> "Settings":
        return cls(
            model_gei=env.get("GAITWORKS_MODEL_GEI"),
            model_sei=env.get("GAITWORKS_MODEL_SEI"),
            port=int(env.get("GAITWORKS_PORT", "8020")),
            session_ttl_secs=float(env.get("GAITWORKS_SESSION_TTL_SECS", "3600")),
            max_upload_mb=float(env.get("GAITWORKS_MAX_UPLOAD_MB", "64")),
            smtp_url=env.get("GAITWORKS_SMTP_URL"),
            decoder_cmd=env.get("GAITWORKS_DECODER_CMD"),
            session_root=env.get("GAITWORKS_SESSION_ROOT"),
            static_dir=env.get("GAITWORKS_STATIC_DIR"),
        )


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


# --- mail gateways -----------------------------------------------------------

class SmtpGateway:
    """Sends reports through the SMTP endpoint given as smtp://host:port."""

    def __init__(self, url: str):
        m = re.match(r"^smtp://([^:/]+)(?::(\d+))?$", url)
        if not m:
            raise ValueError(f"bad SMTP url {url!r}; expected smtp://host[:port]")
        self.host = m.group(1)
        self.port = int(m.group(2) or 25)

    def send(self, to_addr: str, subject: str, body: str,
             attachments: list[tuple[str, bytes]] = ()) -> None:
        msg = EmailMessage()
        msg["From"] = "gaitworks@localhost"
        msg["To"] = to_addr
        msg["Subject"] = subject
        msg.set_content(body)
        for name, data in attachments:
            msg.add_attachment(data, maintype="image", subtype="png", filename=name)
        with smtplib.SMTP(self.host, self.port, timeout=10) as smtp:
            smtp.send_message(msg)


class CapturingMailGateway:
    """Test stub that records outgoing messages instead of sending them."""

    def __init__(self):
        self.messages: list[dict] = []

    def send(self, to_addr, subject, body, attachments=()):
        self.messages.append({"to": to_addr, "subject": subject, "body": body,
                              "attachments": [name for name, _ in attachments]})


# --- session store -----------------------------------------------------------

class SessionStore:
    def __init__(self, root: Path, ttl_secs: float):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.ttl = ttl_secs
        self._lock = threading.Lock()

    def create(self, kind: str, image: EnergyImage, result: dict) -> str:
        session_id = secrets.token_hex(16)
        d = self.root / session_id
        d.mkdir(parents=True)
        np.save(d / "energy.npy", image.pixels)
        cv2.imwrite(str(d / "energy.png"), np.round(image.pixels * 255.0).astype(np.uint8))
        meta = {"created": time.time(), "kind": kind, **result}
        with open(d / "meta.json", "w") as f:
            json.dump(meta, f)
        return session_id

    def _dir(self, session_id: str) -> Path:
        if not re.fullmatch(r"[0-9a-f]{32}", session_id or ""):
            raise ApiError(404, "unknown_session", "unknown or expired session")
        return self.root / session_id

    def load(self, session_id: str) -> tuple[dict, np.ndarray]:
        d = self._dir(session_id)
        meta_path = d / "meta.json"
        if not meta_path.exists():
            raise ApiError(404, "unknown_session", "unknown or expired session")
        with open(meta_path) as f:
            meta = json.load(f)
        if time.time() - meta["created"] > self.ttl:
            shutil.rmtree(d, ignore_errors=True)
            raise ApiError(404, "unknown_session", "session expired")
        return meta, np.load(d / "energy.npy")

    def sweep(self) -> None:
        now = time.time()
        for d in self.root.iterdir():
            meta_path = d / "meta.json"
            try:
                with open(meta_path) as f:
                    created = json.load(f)["created"]
                if now - created > self.ttl:
                    shutil.rmtree(d, ignore_errors=True)
            except (OSError, ValueError, KeyError):
                continue


# --- upload decoding ---------------------------------------------------------

def _decode_png_gray(data: bytes) -> np.ndarray:
    img = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ApiError(400, "malformed_payload", "not a decodable PNG")
    if img.ndim != 2:
        raise ApiError(400, "malformed_payload",
                       f"expected a grayscale energy image, got {img.shape}")
    if img.shape != (ENERGY_SIZE, ENERGY_SIZE):
        raise ApiError(400, "malformed_payload",
                       f"energy image must be {ENERGY_SIZE}x{ENERGY_SIZE}, got {img.shape}")
    return img.astype(np.float32) / 255.0


def _load_zip_members(data: bytes):
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile:
        raise ApiError(400, "malformed_payload", "broken ZIP archive") from None
    frames, poses, background = [], [], None
    for name in sorted(zf.namelist()):
        if _FRAME_PNG_RE.search(name):
            frames.append(zf.read(name))
        elif _FRAME_POSE_RE.search(name):
            poses.append(zf.read(name))
        elif _BACKGROUND_RE.search(name):
            background = zf.read(name)
    if not frames:
        raise ApiError(400, "malformed_payload", "archive holds no frame_*.png members")
    return frames, poses, background


def _frames_to_masks(frame_blobs: list[bytes], background_blob: bytes | None) -> list[np.ndarray]:
    decoded = []
    for blob in frame_blobs:
        img = cv2.imdecode(np.frombuffer(blob, np.uint8), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise ApiError(400, "malformed_payload", "undecodable frame in archive")
        decoded.append(img)
    if decoded[0].ndim == 2:  # already binary silhouettes
        return [(f > 127).astype(np.uint8) for f in decoded]
    rgb = [cv2.cvtColor(f, cv2.COLOR_BGR2RGB) for f in decoded]
    if background_blob is not None:
        bg = cv2.imdecode(np.frombuffer(background_blob, np.uint8), cv2.IMREAD_COLOR)
        bg = cv2.cvtColor(bg, cv2.COLOR_BGR2RGB)
    else:
        bg = rgb[0]  # best effort: assume the subject has not entered yet
    model = learn_background(bg)
    masks = []
    for frame in rgb:
        mask = denoise(segment(frame, model))
        if mask.any():
            mask = largest_component(mask)
        masks.append(mask)
    return masks


def run_frames_pipeline(masks: list[np.ndarray], source_fps: float, kind: str,
                        poses: list[np.ndarray] | None = None):
    """trim -> resample -> detect cycles -> one energy image per cycle."""
    if kind == "sei" and (not poses or len(poses) < len(masks)):
        raise ApiError(400, "sei_requires_poses",
                       "SEI from an archive needs one pose JSON per frame")
    try:
        _, per_cycle, _ = energy_images_from_masks(masks, source_fps, kind, poses=poses)
    except ValueError as e:
        raise ApiError(400, "no_gait_cycle", str(e)) from None
    if not per_cycle:
        raise ApiError(400, "no_gait_cycle", "no complete gait cycle found")
    return per_cycle


# --- app factory -------------------------------------------------------------

def _prediction_payload(pred: Prediction) -> dict:
    return {"label": pred.class_name, "label_index": pred.label,
            "probabilities": [float(p) for p in pred.probabilities],
            "class_names": list(CLASS_NAMES)}


def create_app(settings: Settings, mail_gateway=None) -> FastAPI:
    models: dict[str, GaitModel] = {}
    for kind, path in (("gei", settings.model_gei), ("sei", settings.model_sei)):
        if path:
            if not Path(path).exists():
                raise FileNotFoundError(f"{kind} model file not found: {path}")
            model = load_model(path)
            if model.kind != kind:
                raise ValueError(f"{path} holds a {model.kind} model, expected {kind}")
            models[kind] = model
    if not models:
        raise FileNotFoundError("no model configured: set GAITWORKS_MODEL_GEI and/or GAITWORKS_MODEL_SEI")

    if mail_gateway is None and settings.smtp_url:
        mail_gateway = SmtpGateway(settings.smtp_url)

    session_root = Path(settings.session_root or (Path(tempfile.gettempdir()) / "gaitworks-sessions"))
    store = SessionStore(session_root, settings.session_ttl_secs)
    max_bytes = int(settings.max_upload_mb * 1024 * 1024)

    stop_sweeper = threading.Event()

    @contextlib.asynccontextmanager
    async def lifespan(_app):
        def loop():
            while not stop_sweeper.wait(max(settings.session_ttl_secs / 2.0, 1.0)):
                store.sweep()
        threading.Thread(target=loop, daemon=True, name="session-sweeper").start()
        yield
        stop_sweeper.set()

    app = FastAPI(title="gaitworks", version="0.1.0", lifespan=lifespan)
    app.state.store = store
    app.state.models = models
    app.state.mail_gateway = mail_gateway

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code, "message": exc.message}})

    @app.exception_handler(Exception)
    async def _unhandled(_request: Request, exc: Exception):
        return JSONResponse(status_code=500,
                            content={"error": {"code": "internal_error",
                                               "message": "internal error"}})

    def model_for(kind: str) -> GaitModel:
        if kind not in ("gei", "sei"):
            raise ApiError(400, "bad_representation", f"representation must be gei or sei, got {kind!r}")
        if kind not in models:
            raise ApiError(400, "representation_unavailable",
                           f"no {kind} model is loaded on this server")
        return models[kind]

    @app.get("/api/health")
    def health():
        return {"status": "ok", "model_loaded": True,
                "representation_kinds": sorted(models.keys())}

    @app.post("/api/classify")
    async def classify(file: UploadFile = File(...),
                       representation: str = Form("gei"),
                       fps: float = Form(10.0)):
        model = model_for(representation)
        data = await file.read()
        if len(data) > max_bytes:
            raise ApiError(413, "payload_too_large",
                           f"upload exceeds the {settings.max_upload_mb:g} MB limit")
        if len(data) == 0:
            raise ApiError(400, "malformed_payload", "empty upload")

        if data[:8] == b"\x89PNG\r\n\x1a\n":
            pixels = _decode_png_gray(data)
            image = EnergyImage(pixels, kind=representation)
            pred = predict(model, image)
            result = {**_prediction_payload(pred), "representation": representation,
                      "source": "energy_image", "cycles": []}
        elif data[:2] == b"PK" or settings.decoder_cmd:
            if data[:2] == b"PK":
                frame_blobs, pose_blobs, background = _load_zip_members(data)
            else:
                frame_blobs = _decode_video_upload(settings.decoder_cmd, data,
                                                   file.filename or "upload.bin")
                pose_blobs, background = [], None
            masks = _frames_to_masks(frame_blobs, background)
            poses = None
            if pose_blobs:
                poses = [np.asarray(json.loads(b), dtype=np.float32) for b in pose_blobs]
            per_cycle = run_frames_pipeline(masks, fps, representation, poses)
            image = per_cycle[0][1]  # first complete cycle is the headline result
            pred = predict(model, image)
            cycles = []
            for cycle, img in per_cycle:
                p = predict(model, img)
                cycles.append({"start": cycle.start, "end": cycle.end,
                               "label": p.class_name,
                               "probabilities": [float(v) for v in p.probabilities]})
            result = {**_prediction_payload(pred), "representation": representation,
                      "source": "frames_archive", "cycles": cycles}
        else:
            raise ApiError(415, "unsupported_media_type",
                           "upload a PNG energy image or a ZIP of frame PNGs")

        session_id = store.create(representation, image, result)
        return {"session_id": session_id, **result}

    @app.get("/api/session/{session_id}")
    def session_info(session_id: str):
        meta, _ = store.load(session_id)
        return {"session_id": session_id,
                **{k: meta[k] for k in ("label", "label_index", "probabilities",
                                        "class_names", "representation", "source",
                                        "cycles")}}

    @app.get("/api/session/{session_id}/layers")
    def layers(session_id: str):
        meta, _ = store.load(session_id)
        model = model_for(meta["kind"])
        return {"layers": explain.conv_layer_summary(model)}

    @app.get("/api/session/{session_id}/feature-map")
    def feature_map(session_id: str, layer: int, channel: int):
        meta, pixels = store.load(session_id)
        model = model_for(meta["kind"])
        summary = explain.conv_layer_summary(model)
        if not 0 <= layer < len(summary):
            raise ApiError(400, "bad_layer", f"layer must be in [0, {len(summary)})")
        if not 0 <= channel < summary[layer]["channels"]:
            raise ApiError(400, "bad_channel",
                           f"channel must be in [0, {summary[layer]['channels']})")
        maps = explain.feature_maps(model, pixels, layer)
        data = np.round(maps[channel] * 255.0).astype(np.uint8)
        ok, buf = cv2.imencode(".png", data)
        if not ok:
            raise ApiError(500, "internal_error", "PNG encoding failed")
        return Response(content=buf.tobytes(), media_type="image/png")

    @app.post("/api/session/{session_id}/explain")
    async def explain_endpoint(session_id: str, request: Request):
        meta, pixels = store.load(session_id)
        model = model_for(meta["kind"])
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise ApiError(400, "malformed_payload", "explain expects a JSON body") from None
        method = body.get("method")
        target = body.get("target_class")
        if target is not None and not (isinstance(target, int) and 0 <= target < len(CLASS_NAMES)):
            raise ApiError(400, "bad_target_class", f"target_class must be in [0, {len(CLASS_NAMES)})")
        if method == "saliency":
            heat = explain.saliency(model, pixels, target_class=target)
        elif method == "gradcam":
            layer = body.get("layer")
            n_blocks = len(model.conv_activations)
            if layer is not None and not (isinstance(layer, int) and 0 <= layer < n_blocks):
                raise ApiError(400, "bad_layer", f"layer must be in [0, {n_blocks})")
            heat = explain.grad_cam(model, pixels, conv_layer=layer, target_class=target)
        else:
            raise ApiError(400, "bad_method", "method must be saliency or gradcam")
        overlay = explain.render_overlay(pixels, heat)
        ok, buf = cv2.imencode(".png", cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR))
        if not ok:
            raise ApiError(500, "internal_error", "PNG encoding failed")
        headers = {"X-Explain-Method": heat.method,
                   "X-Explain-Target-Class": str(heat.target_class),
                   "X-Explain-Target-Label": CLASS_NAMES[heat.target_class]}
        if heat.source_layer is not None:
            headers["X-Explain-Layer"] = str(heat.source_layer)
        return Response(content=buf.tobytes(), media_type="image/png", headers=headers)

    @app.post("/api/session/{session_id}/report")
    async def report(session_id: str, request: Request):
        meta, pixels = store.load(session_id)
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise ApiError(400, "malformed_payload", "report expects a JSON body") from None
        email = body.get("email", "")
        if not EMAIL_RE.fullmatch(email or ""):
            raise ApiError(400, "bad_email", f"invalid e-mail address {email!r}")
        if mail_gateway is None:
            raise ApiError(501, "mail_disabled", "no outbound mail gateway is configured")
        model = model_for(meta["kind"])
        heat = explain.grad_cam(model, pixels)
        overlay = explain.render_overlay(pixels, heat)
        ok, buf = cv2.imencode(".png", cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR))
        probs = ", ".join(f"{name}={p:.3f}" for name, p in
                          zip(CLASS_NAMES, meta["probabilities"]))
        body_text = (f"Gait classification result: {meta['label']}\n"
                     f"Probabilities: {probs}\nRepresentation: {meta['kind'].upper()}\n")
        mail_gateway.send(email, f"Gait analysis report: {meta['label']}", body_text,
                          attachments=[("gradcam_overlay.png", buf.tobytes())] if ok else [])
        return JSONResponse(status_code=202, content={"status": "queued", "to": email})

    static_dir = settings.static_dir
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webui")

    return app


def decode_video_with_external_command(decoder_cmd: str, video_path: Path, out_dir: Path) -> None:
    """Run the configured external decoder: it must write frame_%04d.png files."""
    cmd = [part.format(input=str(video_path), output=str(out_dir))
           for part in decoder_cmd.split()]
    subprocess.run(cmd, check=True, capture_output=True)


def _decode_video_upload(decoder_cmd: str, data: bytes, filename: str) -> list[bytes]:
    suffix = Path(filename).suffix or ".bin"
    with tempfile.TemporaryDirectory(prefix="gaitworks-decode-") as td:
        video_path = Path(td) / f"upload{suffix}"
        video_path.write_bytes(data)
        out_dir = Path(td) / "frames"
        out_dir.mkdir()
        try:
            decode_video_with_external_command(decoder_cmd, video_path, out_dir)
        except subprocess.CalledProcessError as e:
            raise ApiError(400, "decoder_failed",
                           f"external decoder exited with {e.returncode}") from None
        frames = sorted(out_dir.glob("frame_*.png"))
        if not frames:
            raise ApiError(400, "decoder_failed", "external decoder produced no frames")
        return [p.read_bytes() for p in frames]


def serve(settings: Settings, mail_gateway=None) -> None:
    import uvicorn

    app = create_app(settings, mail_gateway=mail_gateway)
    uvicorn.run(app, host="0.0.0.0", port=settings.port, log_level="info")
