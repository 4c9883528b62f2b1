"""Scripted end-to-end scenario runner.

A scenario is a JSON document: optional login credentials plus an ordered
step list. Step kinds:

    add_tag      {"uid": N, "card": "card.json"}        bring a tag in field
    remove_tag   {"uid": N}
    emit_vital   {"line": "VITAL ..."}                   one sample line
    wait         {"ms": N} or {"until": <expect>, "timeout_ms": N}
    expect       assertion on device/server state via their HTTP APIs
    http         explicit API call with an expected status

An expect clause reads one endpoint and walks a dotted path into the JSON:
{"source": "device", "path": "/alarms", "json_path": "alarms.length",
"equals": 1}. The runner fails fast on the first violated step and emits a
JSON report with one entry per executed step.
"""

from __future__ import annotations

import json
import socket
import time
from pathlib import Path

import requests

from .cip_codec import card_from_json, encode_cip
from .rfid_link import ReaderClient

DEFAULT_WAIT_TIMEOUT_MS = 5000
DEFAULT_POLL_MS = 50


class ScenarioError(Exception):
    pass


class StepFailure(ScenarioError):
    def __init__(self, index: int, detail: str):
        self.index = index
        super().__init__(f"step {index}: {detail}")


def _walk(node, json_path: str):
    """Walk a dotted path; 'length' takes the size of a list node."""
    for part in json_path.split("."):
        if part == "length" and isinstance(node, list):
            node = len(node)
        elif isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            if part not in node:
                raise KeyError(part)
            node = node[part]
        else:
            raise KeyError(part)
    return node


class ScenarioRunner:
    def __init__(self, script: dict, *, device_url: str, simopac_url: str,
                 vitals_addr: tuple[str, int], reader_addr: tuple[str, int],
                 base_dir: str | Path = ".", http_timeout: float = 5.0):
        self.script = script
        self.device_url = device_url.rstrip("/")
        self.simopac_url = simopac_url.rstrip("/")
        self.vitals_addr = vitals_addr
        self.base_dir = Path(base_dir)
        self.http_timeout = http_timeout
        self.reader = ReaderClient(*reader_addr)
        self._vitals_sock: socket.socket | None = None
        self._tokens: dict[str, str | None] = {"device": None, "simopac": None}

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScenarioRunner":
        path = Path(path)
        script = json.loads(path.read_text(encoding="utf-8"))
        kwargs.setdefault("base_dir", path.parent)
        return cls(script, **kwargs)

    # plumbing ---------------------------------------------------------------

    def _base(self, target: str) -> str:
        return self.device_url if target == "device" else self.simopac_url

    def _login(self, target: str) -> str | None:
        if self._tokens[target] is None:
            creds = self.script.get(f"{target}_login")
            if not creds:
                return None
            response = requests.post(f"{self._base(target)}/login", json=creds,
                                     timeout=self.http_timeout)
            if response.status_code != 200:
                raise ScenarioError(
                    f"{target} login failed: {response.status_code}")
            self._tokens[target] = response.json()["token"]
        return self._tokens[target]

    def _request(self, target: str, method: str, path: str,
                 body=None, auth: bool = True) -> requests.Response:
        headers = {}
        if auth:
            token = self._login(target)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return requests.request(method, self._base(target) + path,
                                json=body, headers=headers,
                                timeout=self.http_timeout)

    def _vitals_line(self, line: str) -> None:
        if self._vitals_sock is None:
            self._vitals_sock = socket.create_connection(self.vitals_addr,
                                                         timeout=5.0)
        self._vitals_sock.sendall(line.encode("utf-8") + b"\n")

    def close(self) -> None:
        if self._vitals_sock is not None:
            self._vitals_sock.close()
            self._vitals_sock = None
        self.reader.close()

    # step execution -----------------------------------------------------------

    def _check_expect(self, spec: dict) -> tuple[bool, str]:
        target = spec.get("source", "device")
        response = self._request(target, "GET", spec["path"],
                                 auth=spec.get("auth", True))
        if response.status_code != spec.get("status", 200):
            return False, f"GET {spec['path']} -> {response.status_code}"
        if "json_path" in spec:
            try:
                actual = _walk(response.json(), spec["json_path"])
            except (KeyError, IndexError, ValueError) as exc:
                return False, f"path {spec['json_path']}: {exc}"
            if actual != spec.get("equals"):
                return (False, f"{spec['json_path']} = {actual!r}, "
                               f"want {spec.get('equals')!r}")
        return True, "ok"

    def _run_step(self, step: dict) -> str:
        kind = step["step"]
        if kind == "add_tag":
            card = card_from_json(json.loads(
                (self.base_dir / step["card"]).read_text(encoding="utf-8")))
            self.reader.add_tag(step["uid"], encode_cip(card))
            return f"tag {step['uid']} in field"
        if kind == "remove_tag":
            self.reader.remove_tag(step["uid"])
            return f"tag {step['uid']} removed"
        if kind == "emit_vital":
            self._vitals_line(step["line"])
            return "sample sent"
        if kind == "wait":
            if "ms" in step:
                time.sleep(step["ms"] / 1000.0)
                return f"slept {step['ms']} ms"
            deadline = time.monotonic() + step.get(
                "timeout_ms", DEFAULT_WAIT_TIMEOUT_MS) / 1000.0
            poll = step.get("poll_ms", DEFAULT_POLL_MS) / 1000.0
            while True:
                ok, detail = self._check_expect(step["until"])
                if ok:
                    return "condition met"
                if time.monotonic() >= deadline:
                    raise ScenarioError(f"timed out waiting: {detail}")
                time.sleep(poll)
        if kind == "expect":
            ok, detail = self._check_expect(step)
            if not ok:
                raise ScenarioError(detail)
            return "ok"
        if kind == "http":
            response = self._request(
                step.get("target", "device"), step.get("method", "GET"),
                step["path"], body=step.get("body"),
                auth=step.get("auth", True))
            want = step.get("expect_status", 200)
            if response.status_code != want:
                raise ScenarioError(
                    f"{step.get('method', 'GET')} {step['path']} -> "
                    f"{response.status_code}, want {want}")
            return f"status {response.status_code}"
        raise ScenarioError(f"unknown step kind {kind!r}")

    def run(self) -> dict:
        report = {"scenario": self.script.get("name", "unnamed"),
                  "passed": True, "steps": []}
        try:
            for index, step in enumerate(self.script.get("steps", [])):
                started = time.monotonic()
                try:
                    detail = self._run_step(step)
                    ok = True
                except (ScenarioError, OSError, requests.RequestException,
                        KeyError) as exc:
                    detail = str(exc)
                    ok = False
                report["steps"].append({
                    "index": index, "step": step["step"], "ok": ok,
                    "detail": detail,
                    "elapsed_ms": round((time.monotonic() - started) * 1000, 1),
                })
                if not ok:
                    report["passed"] = False
                    report["failed_step"] = index
                    break
        finally:
            self.close()
        return report
