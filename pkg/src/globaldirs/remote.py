"""Line-delimited JSON protocol for generators/classifiers in a child process.

Requests::

    {"op": "decode", "z_sem": [...], "z_T": 7}
    {"op": "classify", "image": {"w": 64, "h": 64, "px": [...]}}

Responses are ``{"ok": true, "image": {...}}``, ``{"ok": true, "logit": x}``
or ``{"ok": false, "error": "..."}``.  ``python -m globaldirs.remote`` serves
the built-in synthetic model or simple stubs over stdin/stdout.
"""

from __future__ import annotations

import argparse
import json
import selectors
import shlex
import subprocess
import sys
import threading

import numpy as np

from .io import dumps, image_from_dict, image_to_dict


class RemoteError(RuntimeError):
    def __init__(self, message: str, payload: str = ""):
        super().__init__(f"{message}: {payload!r}" if payload else message)
        self.payload = payload


def encode_request(op: str, **fields) -> str:
    return dumps({"op": op, **fields}, indent=None)


def decode_response(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RemoteError(f"malformed response ({exc.msg})", line) from None
    if not isinstance(msg, dict) or "ok" not in msg:
        raise RemoteError("response lacks an 'ok' field", line)
    if not msg["ok"]:
        raise RemoteError(f"remote error: {msg.get('error', '?')}", line)
    return msg


class RemoteModel:
    """Generator and classifier handle backed by a child process.

    One request is in flight at a time; pool several handles for parallelism.
    """

    def __init__(self, command: str | list[str], timeout: float = 60.0, n: int | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.n = n
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      stderr=subprocess.PIPE, text=True, bufsize=1)
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)

    def _call(self, line: str) -> dict:
        with self._lock:
            proc = self._proc
            if proc.poll() is not None:
                raise RemoteError(f"remote process exited with code {proc.returncode}", proc.stderr.read())
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
            except BrokenPipeError:
                proc.wait()
                raise RemoteError(f"remote process exited with code {proc.returncode}", proc.stderr.read()) from None
            if not self._sel.select(self.timeout):
                raise RemoteError(f"no response within {self.timeout} s", line[:200])
            reply = proc.stdout.readline()
            if reply == "":
                code = proc.wait()
                raise RemoteError(f"remote process exited with code {code}", proc.stderr.read())
        return decode_response(reply)

    def decode(self, z_sem, z_T: int) -> np.ndarray:
        msg = self._call(encode_request("decode", z_sem=np.asarray(z_sem, dtype=np.float64), z_T=int(z_T)))
        if "image" not in msg:
            raise RemoteError("decode response lacks an image", json.dumps(msg)[:200])
        try:
            img = image_from_dict(msg["image"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteError(f"bad image payload ({exc})", json.dumps(msg)[:200]) from None
        return img

    def decode_batch(self, Z, z_T: int) -> np.ndarray:
        return np.stack([self.decode(z, z_T) for z in np.asarray(Z, dtype=np.float64)])

    def classify(self, x) -> float:
        msg = self._call(encode_request("classify", image=image_to_dict(x)))
        try:
            return float(msg["logit"])
        except (KeyError, TypeError, ValueError):
            raise RemoteError("classify response lacks a numeric logit", json.dumps(msg)[:200]) from None

    def classify_batch(self, X) -> np.ndarray:
        return np.array([self.classify(x) for x in np.asarray(X, dtype=np.float64)])

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._sel.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def remote_model(endpoint: str, timeout: float = 60.0) -> RemoteModel:
    return RemoteModel(endpoint, timeout)


# ---------------------------------------------------------------- server side

def serve(decode_fn, classify_fn, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            if req.get("op") == "decode":
                reply = {"ok": True, "image": image_to_dict(decode_fn(np.asarray(req["z_sem"], dtype=np.float64),
                                                                      int(req["z_T"])))}
            elif req.get("op") == "classify":
                reply = {"ok": True, "logit": float(classify_fn(image_from_dict(req["image"])))}
            else:
                reply = {"ok": False, "error": f"unknown op {req.get('op')!r}"}
        except Exception as exc:
            reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(dumps(reply, indent=None) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m globaldirs.remote",
                                 description="Serve a model over the line-delimited JSON protocol.")
    ap.add_argument("--config", help="run config whose generator/classifier to serve (default: built-in)")
    ap.add_argument("--constant-image", type=float, metavar="LEVEL",
                    help="decode always returns a constant image at LEVEL")
    ap.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("W", "H"))
    ap.add_argument("--logit", choices=("model", "first-pixel", "constant"), default="model",
                    help="classifier stub: synthetic disk model, first pixel value, or a constant")
    ap.add_argument("--constant-logit", type=float, default=1.0)
    args = ap.parse_args(argv)

    from .config import RunConfig
    from .worldmodel import DiskClassifier, SyntheticGenerator

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    gen = SyntheticGenerator(cfg.generator)
    clf = DiskClassifier(cfg.classifier_spec())
    if args.constant_image is not None:
        w, h = args.size
        decode_fn = lambda z, t: np.full((h, w), args.constant_image)  # noqa: E731
    else:
        decode_fn = gen.decode
    if args.logit == "first-pixel":
        classify_fn = lambda x: x.reshape(-1)[0]  # noqa: E731
    elif args.logit == "constant":
        classify_fn = lambda x: args.constant_logit  # noqa: E731
    else:
        classify_fn = clf.classify
    serve(decode_fn, classify_fn)
    return 0


if __name__ == "__main__":
    sys.exit(main())
