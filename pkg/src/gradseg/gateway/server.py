"""HTTP annotation service: one live loop, one session, human annotators.

The loop runs on a background thread. Whenever it needs annotations it
parks in the session annotator, which exposes the pending ids over the
API and blocks until a mask has been submitted for every one of them.
Mutation of session state is serialized through a single condition
variable; training keeps running while GET endpoints stay responsive.
"""

import io
import json
import threading
import time

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ..orchestrator import _LoopState, _run_iteration, save_loop_checkpoint


class LoopAborted(RuntimeError):
    pass


class SessionAnnotator:
    """Annotator that feeds from HTTP submissions."""

    def __init__(self, session):
        self.session = session

    def annotate_batch(self, ids, iteration, suggestions=None):
        s = self.session
        with s.cond:
            s.pending = {int(i): None for i in ids}
            s.pending_meta = suggestions or [
                {"suggested_id": int(i), "distance": None, "cosine": None,
                 "fallback": False}
                for i in ids
            ]
            s.phase = "awaiting"
            s.cond.notify_all()
            while True:
                if s.abort_requested:
                    raise LoopAborted()
                if all(m is not None for m in s.pending.values()):
                    masks = {i: m for i, m in s.pending.items()}
                    s.pending = {}
                    s.pending_meta = []
                    s.phase = "training"
                    s.cond.notify_all()
                    return masks
                s.cond.wait(timeout=0.1)


class Session:
    """Single active annotation session wrapping a loop run."""

    def __init__(self, config, dataset, vae, checkpoint_path=None):
        config.validate(n_train=len(dataset.split("train")))
        self.config = config
        self.dataset = dataset
        self.checkpoint_path = checkpoint_path
        self.cond = threading.Condition()
        self.pending = {}
        self.pending_meta = []
        self.phase = "training"
        self.abort_requested = False
        self.error = None
        self.state = _LoopState(config, dataset, vae)
        self.annotations = {}  # all human-submitted masks, by id
        self.thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self.thread.start()

    def _run(self):
        annotator = SessionAnnotator(self)
        try:
            for it in range(self.config.n_iterations + 1):
                _run_iteration(self.state, it, annotator)
                if self.checkpoint_path:
                    save_loop_checkpoint(self.state, self.checkpoint_path)
            with self.cond:
                self.phase = "finished"
                self.cond.notify_all()
        except LoopAborted:
            with self.cond:
                self.phase = "aborted"
                self.cond.notify_all()
        except Exception as e:  # surfaced via /api/session
            with self.cond:
                self.error = f"{type(e).__name__}: {e}"
                self.phase = "failed"
                self.cond.notify_all()

    # -- accessors used by the endpoints -----------------------------------

    def snapshot(self):
        with self.cond:
            return {
                "iteration": self.state.completed_iterations + 1,
                "labeled_count": len(self.state.pool.labeled_ids),
                "pending_ids": sorted(self.pending),
                "phase": self.phase,
                "error": self.error,
            }

    def suggestions(self):
        with self.cond:
            return [
                {
                    "id": m["suggested_id"],
                    "distance": m["distance"],
                    "cosine": m["cosine"],
                    "fallback": m["fallback"],
                }
                for m in self.pending_meta
            ]

    def submit(self, sample_id, labels):
        """Validate and store a mask; returns (status_code, body)."""
        spec = self.dataset.spec
        try:
            self.dataset.by_id(sample_id)
        except KeyError:
            return 404, {"error": f"unknown sample id {sample_id}"}
        arr = np.asarray(labels)
        if arr.ndim != 2 or arr.shape != (spec.height, spec.width):
            return 422, {
                "error": f"mask extents {list(arr.shape)} != "
                f"[{spec.height}, {spec.width}]"
            }
        if not np.issubdtype(arr.dtype, np.integer):
            return 422, {"error": "labels must be integers"}
        if arr.min() < 0 or arr.max() >= spec.n_classes:
            return 422, {"error": f"label values must be in [0, {spec.n_classes})"}
        with self.cond:
            if sample_id not in self.pending:
                return 409, {
                    "error": f"sample {sample_id} is not pending in this iteration"
                }
            mask = arr.astype(np.uint8)
            self.pending[sample_id] = mask
            self.annotations[sample_id] = mask
            self.cond.notify_all()
        return 200, {"ok": True, "id": sample_id}

    def stored_annotation(self, sample_id):
        with self.cond:
            mask = self.annotations.get(sample_id)
        return None if mask is None else mask.tolist()

    def abort(self):
        with self.cond:
            self.abort_requested = True
            self.cond.notify_all()

    def metrics(self):
        with self.cond:
            r = self.state.report
            return {
                "config": r.config,
                "rows": list(r.rows),
                "loss_curve": list(r.loss_curve),
                "suggestion_log": list(r.suggestion_log),
            }


def image_png(pixels):
    """Min-max rescale a z-scored image to 8-bit grayscale PNG (display only)."""
    lo, hi = float(pixels.min()), float(pixels.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    img = ((pixels - lo) * scale).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def create_app(session, static_dir=None):
    app = FastAPI(title="gradseg annotation service")

    @app.get("/api/session")
    def get_session():
        return session.snapshot()

    @app.get("/api/suggestions")
    def get_suggestions():
        return session.suggestions()

    @app.get("/api/sample/{sample_id}/image")
    def get_image(sample_id: int):
        try:
            sample = session.dataset.by_id(sample_id)
        except KeyError:
            return JSONResponse({"error": f"unknown sample id {sample_id}"}, 404)
        return Response(image_png(sample.pixels), media_type="image/png")

    @app.get("/api/sample/{sample_id}/annotation")
    def get_annotation(sample_id: int):
        labels = session.stored_annotation(sample_id)
        if labels is None:
            return JSONResponse({"error": f"no annotation for {sample_id}"}, 404)
        return {"id": sample_id, "labels": labels}

    @app.post("/api/sample/{sample_id}/annotation")
    async def post_annotation(sample_id: int, body: dict):
        if "labels" not in body:
            return JSONResponse({"error": "body must contain 'labels'"}, 422)
        try:
            status, payload = session.submit(sample_id, body["labels"])
        except (TypeError, ValueError) as e:
            return JSONResponse({"error": f"malformed payload: {e}"}, 422)
        return JSONResponse(payload, status_code=status)

    @app.get("/api/metrics")
    def get_metrics():
        return session.metrics()

    @app.post("/api/control/abort")
    def post_abort():
        session.abort()
        return {"ok": True, "phase": "aborting"}

    @app.get("/api/dataset")
    def get_dataset_info():
        spec = session.dataset.spec
        return {
            "height": spec.height,
            "width": spec.width,
            "n_classes": spec.n_classes,
            "m": session.config.m,
            "n_iterations": session.config.n_iterations,
        }

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(session, port, static_dir=None, host="127.0.0.1"):
    import uvicorn

    session.start()
    app = create_app(session, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def wait_for_phase(session, phases, timeout=300.0):
    """Block until the session reaches one of `phases` (test/client helper)."""
    deadline = time.time() + timeout
    with session.cond:
        while session.phase not in phases:
            remaining = deadline - time.time()
            if remaining <= 0:
                raise TimeoutError(f"phase still {session.phase!r}")
            session.cond.wait(timeout=min(0.1, remaining))
    return session.phase
