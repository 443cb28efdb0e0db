"""HTTP surface: POST /embed and GET /healthz.

Stateless request handling over a read-only model; the threading server
makes concurrent requests safe. The model can be attached after the server
starts (both endpoints answer 503 until it is).

    POST /embed   {"texts": [...], "width": int?}
                  -> 200 {"vectors": [[...], ...], "model_id": "..."}
                  -> 400 malformed body, empty texts, or width out of range
                  -> 413 more texts than the batch cap
                  -> 503 model not loaded yet
    GET /healthz  -> 200 {"status": "ok", "model_id": "...", "width": N}
                  -> 503 {"status": "loading"}
"""

from __future__ import annotations

import json
import logging
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .model import CodeVectorModel

log = logging.getLogger(__name__)

DEFAULT_BATCH_CAP = 1024

HOST_ENV = "EMBED_SERVICE_HOST"
PORT_ENV = "EMBED_SERVICE_PORT"
BATCH_CAP_ENV = "EMBED_SERVICE_BATCH_CAP"


class EmbedServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, model: CodeVectorModel | None, batch_cap: int):
        super().__init__(address, _Handler)
        self.model = model
        self.batch_cap = batch_cap


class _Handler(BaseHTTPRequestHandler):
    server: EmbedServer

    def _reply(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.client_address[0], *args)

    def do_GET(self):
        if self.path != "/healthz":
            self._reply(404, {"error": f"no such path {self.path}"})
            return
        model = self.server.model
        if model is None:
            self._reply(503, {"status": "loading"})
            return
        self._reply(
            200, {"status": "ok", "model_id": model.model_id, "width": model.width}
        )

    def do_POST(self):
        if self.path != "/embed":
            self._reply(404, {"error": f"no such path {self.path}"})
            return
        model = self.server.model
        if model is None:
            self._reply(503, {"error": "model not loaded"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            self._reply(400, {"error": "body is not valid JSON"})
            return
        texts = body.get("texts") if isinstance(body, dict) else None
        if (
            not isinstance(texts, list)
            or not texts
            or not all(isinstance(t, str) for t in texts)
        ):
            self._reply(400, {"error": "texts must be a non-empty list of strings"})
            return
        if len(texts) > self.server.batch_cap:
            self._reply(
                413,
                {"error": f"batch of {len(texts)} exceeds cap {self.server.batch_cap}"},
            )
            return
        width = body.get("width", model.width)
        if not isinstance(width, int) or width < 1 or width > model.width:
            self._reply(
                400, {"error": f"width must be an integer in 1..{model.width}"}
            )
            return
        vectors = model.embed(texts, width=width)
        self._reply(
            200, {"vectors": vectors.tolist(), "model_id": model.model_id}
        )


def make_server(
    host: str = "127.0.0.1",
    port: int = 0,
    model: CodeVectorModel | None = None,
    batch_cap: int = DEFAULT_BATCH_CAP,
) -> EmbedServer:
    return EmbedServer((host, port), model, batch_cap)


def serve() -> None:
    """Blocking entry point; the model loads in the background so health
    checks answer immediately (503 until ready)."""
    logging.basicConfig(level=logging.INFO)
    host = os.environ.get(HOST_ENV, "127.0.0.1")
    port = int(os.environ.get(PORT_ENV, "8470"))
    batch_cap = int(os.environ.get(BATCH_CAP_ENV, str(DEFAULT_BATCH_CAP)))
    server = make_server(host, port, model=None, batch_cap=batch_cap)

    def load():
        model = CodeVectorModel()
        server.model = model
        log.info("model %s ready (width %d)", model.model_id, model.width)

    threading.Thread(target=load, daemon=True).start()
    log.info("serving on http://%s:%d", host, server.server_port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
