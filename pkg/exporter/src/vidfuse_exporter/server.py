"""Minimal text-embeddings HTTP service.

Speaks the embeddings JSON convention the consumer pipeline's client
expects: POST /v1/embeddings {"input": [texts]} -> {"data": [{"index",
"embedding"}]}. Batches are answered in input order; GET / reports the
model and dimension.
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

logger = logging.getLogger(__name__)


def make_server(backend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            logger.info("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, obj: dict):
            body = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path in ("/", "/healthz"):
                self._send(200, {"ok": True, "model": backend.model_name, "dim": backend.dim})
            else:
                self._send(404, {"error": "unknown path"})

        def do_POST(self):
            if self.path != "/v1/embeddings":
                self._send(404, {"error": "unknown path"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length)) if length else {}
            except (ValueError, json.JSONDecodeError):
                self._send(400, {"error": "body is not valid JSON"})
                return
            texts = payload.get("input")
            if isinstance(texts, str):
                texts = [texts]
            if not isinstance(texts, list) or not texts or not all(
                isinstance(t, str) for t in texts
            ):
                self._send(400, {"error": "input must be a non-empty list of strings"})
                return
            vectors = backend.embed_texts(texts)
            self._send(200, {
                "object": "list",
                "model": backend.model_name,
                "data": [
                    {"object": "embedding", "index": i, "embedding": vectors[i].tolist()}
                    for i in range(len(texts))
                ],
            })

    return ThreadingHTTPServer((host, port), Handler)


def serve_forever(backend, host: str, port: int) -> None:
    httpd = make_server(backend, host, port)
    actual = httpd.server_address
    logger.info("serving %s (dim %d) on http://%s:%d", backend.model_name, backend.dim, *actual)
    print(f"serving {backend.model_name} on http://{actual[0]}:{actual[1]}", flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
