"""Client adapter for external segmentation backends.

Speaks a line-delimited JSON protocol over a subprocess's stdio or a TCP
socket. Every request carries a monotonically increasing id; the matching
response is awaited before the next request goes out. Image and mask
payloads travel as base64-encoded little-endian float32, row-major.
"""

from __future__ import annotations

import base64
import json
import shlex
import socket
import subprocess

import numpy as np

from .errors import BridgeTransportError
from .masks import Image, SoftMask
from .points import PromptSet
from .segmentor import PromptableSegmentor

_IO_TIMEOUT_S = 30.0


def encode_f32(values: np.ndarray) -> str:
    return base64.b64encode(np.asarray(values, dtype="<f4").tobytes(order="C")).decode("ascii")


def decode_f32(data: str, count: int) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise BridgeTransportError(f"mask payload is not valid base64: {exc}") from exc
    if len(raw) != 4 * count:
        raise BridgeTransportError(f"mask payload is {len(raw)} bytes, expected {4 * count}")
    return np.frombuffer(raw, dtype="<f4").astype(float)


class _StdioTransport:
    def __init__(self, command):
        self.proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )

    def send_line(self, line: str):
        if self.proc.poll() is not None:
            raise BridgeTransportError("backend process exited")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeTransportError(f"backend pipe closed: {exc}") from exc

    def recv_line(self) -> str:
        line = self.proc.stdout.readline()
        if line == "":
            raise BridgeTransportError("backend closed its output stream")
        return line.rstrip("\n")

    def close(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int):
        try:
            self.sock = socket.create_connection((host, port), timeout=_IO_TIMEOUT_S)
        except OSError as exc:
            raise BridgeTransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._buf = b""

    def send_line(self, line: str):
        try:
            self.sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise BridgeTransportError(f"socket send failed: {exc}") from exc

    def recv_line(self) -> str:
        while b"\n" not in self._buf:
            try:
                chunk = self.sock.recv(65536)
            except OSError as exc:
                raise BridgeTransportError(f"socket receive failed: {exc}") from exc
            if not chunk:
                raise BridgeTransportError("backend closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class BridgeSegmentor(PromptableSegmentor):
    """PromptableSegmentor backed by an external process or service."""

    analytic_gradient = False

    def __init__(self, transport):
        self._transport = transport
        self._next_id = 0
        self.name = "bridge"
        self.version = ""
        self._hello()

    @staticmethod
    def spawn_stdio(command) -> "BridgeSegmentor":
        """Start ``command`` (list or shell-ish string) and talk over its stdio."""
        if isinstance(command, str):
            command = shlex.split(command)
        return BridgeSegmentor(_StdioTransport(command))

    @staticmethod
    def connect_tcp(host: str, port: int) -> "BridgeSegmentor":
        return BridgeSegmentor(_TcpTransport(host, port))

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, request: dict) -> dict:
        self._next_id += 1
        request = dict(request, id=self._next_id)
        self._transport.send_line(json.dumps(request))
        # The server is serial, but scan by id anyway so stray lines
        # (e.g. logging on stdout) cannot desynchronize us.
        for _ in range(100):
            line = self._transport.recv_line()
            try:
                response = json.loads(line)
            except json.JSONDecodeError:
                continue
            if isinstance(response, dict) and response.get("id") == self._next_id:
                return response
        raise BridgeTransportError("no response matching request id")

    def _hello(self):
        response = self._roundtrip({"op": "hello"})
        if not response.get("ok", False):
            raise BridgeTransportError(f"handshake failed: {response.get('error')}")
        if "backend" not in response or "version" not in response:
            raise BridgeTransportError("handshake response missing backend/version")
        self.name = f"bridge:{response['backend']}"
        self.version = str(response["version"])

    def predict(self, image: Image, prompts: PromptSet) -> SoftMask:
        if not any(p.positive for p in prompts):
            raise ValueError("predict needs at least one positive point")
        request = {
            "op": "predict",
            "image": {
                "w": image.width,
                "h": image.height,
                "enc": "b64f32",
                "data": encode_f32(image.intensity),
            },
            "points": prompts.to_records(),
        }
        response = self._roundtrip(request)
        if not response.get("ok", False):
            raise BridgeTransportError(f"predict failed: {response.get('error')}")
        mask = response.get("mask")
        if not isinstance(mask, dict) or mask.get("enc") != "b64f32":
            raise BridgeTransportError("predict response lacks a b64f32 mask")
        if mask.get("w") != image.width or mask.get("h") != image.height:
            raise BridgeTransportError(
                f"mask is {mask.get('w')}x{mask.get('h')}, expected {image.width}x{image.height}"
            )
        values = decode_f32(mask.get("data", ""), image.width * image.height)
        values = values.reshape(image.height, image.width)
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise BridgeTransportError("mask values must be finite and in [0, 1]")
        return SoftMask(values)
