"""JSON configuration shared by every service subcommand.

Sections: device, reader, vitals, thresholds, simopac, users. Every field
has a default so a minimal deployment can run from an empty object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .hl7_gateway import RetryPolicy
from .vitals import Thresholds, VitalsError


class BadConfig(Exception):
    def __init__(self, path, cause: str):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"{path}: {cause}")


@dataclass
class DeviceSection:
    http_host: str = "127.0.0.1"
    http_port: int = 4500
    ui_dir: str | None = None
    poll_interval: float = 0.2
    deterministic: bool = False


@dataclass
class ReaderSection:
    host: str = "127.0.0.1"
    port: int = 4501


@dataclass
class VitalsSection:
    host: str = "127.0.0.1"
    port: int = 4502
    window_size: int = 10


@dataclass
class SimopacSection:
    # client side (the device talking to the central system)
    mllp_host: str = "127.0.0.1"
    mllp_port: int = 4503
    service_user: str = ""
    service_password: str = ""
    retry_attempts: int = 3
    retry_backoff_ms: tuple = (200, 400, 800)
    retry_timeout_ms: int = 2000
    # server side (the stub itself)
    http_host: str = "127.0.0.1"
    http_port: int = 4504
    data_dir: str = "./data"
    patients: list = dc_field(default_factory=list)

    def retry_policy(self) -> RetryPolicy:
        return RetryPolicy(
            attempts=self.retry_attempts,
            backoff=tuple(ms / 1000.0 for ms in self.retry_backoff_ms),
            timeout=self.retry_timeout_ms / 1000.0)


@dataclass
class AppConfig:
    device: DeviceSection = dc_field(default_factory=DeviceSection)
    reader: ReaderSection = dc_field(default_factory=ReaderSection)
    vitals: VitalsSection = dc_field(default_factory=VitalsSection)
    thresholds: Thresholds = dc_field(default_factory=Thresholds)
    simopac: SimopacSection = dc_field(default_factory=SimopacSection)
    users: list = dc_field(default_factory=list)


def _fill(instance, section: dict, path) -> None:
    for key, value in section.items():
        if not hasattr(instance, key):
            raise BadConfig(path, f"unknown key {key!r} in section "
                                  f"{type(instance).__name__}")
        setattr(instance, key, value)


def parse_config(obj: dict, path="<memory>") -> AppConfig:
    if not isinstance(obj, dict):
        raise BadConfig(path, "top level must be a JSON object")
    config = AppConfig()
    known = {"device", "reader", "vitals", "thresholds", "simopac", "users"}
    unknown = set(obj) - known
    if unknown:
        raise BadConfig(path, f"unknown section {sorted(unknown)[0]!r}")
    for name in ("device", "reader", "vitals", "simopac"):
        if name in obj:
            _fill(getattr(config, name), obj[name], path)
    if "thresholds" in obj:
        try:
            config.thresholds = Thresholds.from_json(obj["thresholds"])
        except (VitalsError, KeyError, TypeError, ValueError) as exc:
            raise BadConfig(path, f"thresholds: {exc}")
    if "users" in obj:
        config.users = list(obj["users"])
    return config


def load_config(path) -> AppConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BadConfig(path, str(exc))
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadConfig(path, f"line {exc.lineno}: {exc.msg}")
    return parse_config(obj, path)
