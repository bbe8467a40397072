"""Minimal HTTP service exposing a trained subspace to interactive clients.

Endpoints:
  GET  /model/info   latent dimension, box, mesh connectivity
  POST /eval         one latent point -> positions, energy, diagnostics
  POST /keyframes    piecewise-linear latent path -> sampled shapes

Stdlib-only (ThreadingHTTPServer); JSON in, JSON out. Malformed requests
get a 400 with an error message, unknown routes a 404.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .dynamics import sample_keyframe_path
from .errors import ModalSubError
from .subspace import SubspaceModel

MAX_BODY_BYTES = 16 * 1024 * 1024


class ServiceState:
    """Shared model context handed to every request handler."""

    def __init__(self, model: SubspaceModel, energy_model):
        if model.fingerprint and model.fingerprint != energy_model.fingerprint():
            raise ModalSubError("model and energy model fingerprints differ")
        self.model = model
        self.energy_model = energy_model
        self.lock = threading.Lock()

    def info(self) -> dict:
        model = self.model
        mesh = model.mesh
        return {
            "num_modes": model.num_modes,
            "box": [[float(lo), float(hi)] for lo, hi in model.box],
            "aux": list(model.aux_spec),
            "num_vertices": mesh.num_vertices,
            "kind": mesh.kind,
            "elements": mesh.elements.tolist(),
            "rest_positions": mesh.rest_positions.tolist(),
            "fingerprint": model.fingerprint,
        }

    def eval_point(self, z, aux=None) -> dict:
        model = self.model
        z = np.asarray(z, dtype=float)
        if z.shape != (model.num_modes,):
            raise ValueError(
                f"z must have {model.num_modes} entries, got shape {z.shape}"
            )
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")
        extrapolated = bool(
            np.any(z < model.box[:, 0]) or np.any(z > model.box[:, 1])
        )
        with self.lock:
            x = model.decode(z, aux)
            energy = float(self.energy_model.energy(x))
            stats = model.ortho_stats(z[None, :], aux)
        return {
            "positions": x.tolist(),
            "energy": energy,
            "constraint_residual": stats["mean_ratio"],
            "extrapolated": extrapolated,
        }

    def keyframe_path(self, keys, num_samples: int) -> dict:
        model = self.model
        parsed = []
        for item in keys:
            t = float(item["t"])
            z = np.asarray(item["z"], dtype=float)
            if z.shape != (model.num_modes,):
                raise ValueError(
                    f"keyframe z must have {model.num_modes} entries"
                )
            parsed.append((t, z))
        if not 2 <= num_samples <= 10_000:
            raise ValueError("num_samples must be between 2 and 10000")
        with self.lock:
            ts, zs, positions, energies = sample_keyframe_path(
                self.model, self.energy_model, parsed, num_samples
            )
        return {
            "times": ts.tolist(),
            "zs": zs.tolist(),
            "positions": positions.tolist(),
            "energies": energies.tolist(),
        }


class _Handler(BaseHTTPRequestHandler):
    # Set by make_server on the handler subclass.
    state: ServiceState = None
    quiet: bool = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, code: int, message: str) -> None:
        self._send(code, {"error": message})

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0))
        if length <= 0 or length > MAX_BODY_BYTES:
            raise ValueError("missing or oversized request body")
        return json.loads(self.rfile.read(length))

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        if self.path.rstrip("/") == "/model/info":
            self._send(200, self.state.info())
        else:
            self._error(404, f"unknown path {self.path}")

    def do_POST(self):
        path = self.path.rstrip("/")
        try:
            data = self._read_json()
        except (ValueError, json.JSONDecodeError) as exc:
            self._error(400, f"bad request body: {exc}")
            return
        try:
            if path == "/eval":
                if not isinstance(data, dict) or "z" not in data:
                    raise ValueError("body must be an object with a 'z' field")
                out = self.state.eval_point(data["z"], data.get("aux"))
            elif path == "/keyframes":
                if not isinstance(data, dict) or "keys" not in data:
                    raise ValueError("body must be an object with a 'keys' field")
                out = self.state.keyframe_path(
                    data["keys"], int(data.get("num_samples", 60))
                )
            else:
                self._error(404, f"unknown path {self.path}")
                return
        except (ValueError, TypeError, KeyError, ModalSubError) as exc:
            self._error(400, str(exc))
            return
        self._send(200, out)


def make_server(
    model: SubspaceModel,
    energy_model,
    host: str = "127.0.0.1",
    port: int = 8765,
    quiet: bool = True,
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; callers own its lifecycle."""
    state = ServiceState(model, energy_model)
    handler = type("BoundHandler", (_Handler,), {"state": state, "quiet": quiet})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(model, energy_model, host="127.0.0.1", port=8765,
                  quiet=False) -> None:
    server = make_server(model, energy_model, host, port, quiet=quiet)
    host, port = server.server_address[:2]
    print(f"serving subspace on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
