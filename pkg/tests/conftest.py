"""Shared fixtures: random card generation and the in-process service stack."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

import pytest
import requests

from cipdev.cip_codec import BloodGroup, CipCard, Rh
from cipdev.config import AppConfig
from cipdev.device import Device
from cipdev.rfid_link import TagSimulator
from cipdev.simopac_server import SimopacServer

# byte lengths 1..3 so generated strings exercise multi-byte utf-8 bounds
_POOL = [(c, len(c.encode("utf-8")))
         for c in "abcdefghijklmnopqrstuvwxyz0123456789-. éșî日"]


def random_text(rng: random.Random, max_bytes: int, min_bytes: int = 1) -> str:
    budget = rng.randint(min_bytes, max_bytes)
    chars = []
    used = 0
    while True:
        char, width = _POOL[rng.randrange(len(_POOL))]
        if used + width > budget:
            if used >= min_bytes:
                return "".join(chars)
            continue
        chars.append(char)
        used += width


def random_ascii(rng: random.Random, max_len: int, min_len: int = 0) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-"
    return "".join(rng.choice(alphabet)
                   for _ in range(rng.randint(min_len, max_len)))


def random_card(rng: random.Random) -> CipCard:
    """A uniformly messy but always-encodable card (512-byte budget kept)."""
    uri = random_text(rng, 128)
    modifier = random_ascii(rng, 32)
    # fixed layout portion: header 16 + counts 2 + last_modified 8 + CRC 2
    budget = 512 - (16 + (1 + len(uri.encode())) + 2 + 8
                    + (1 + len(modifier.encode())) + 2)
    lists = {"allergies": [], "conditions": []}
    for name in ("allergies", "conditions"):
        for _ in range(rng.randint(0, 16)):
            entry = random_text(rng, 32)
            cost = 1 + len(entry.encode())
            if cost > budget:
                break
            lists[name].append(entry)
            budget -= cost
    return CipCard(
        serial=rng.randint(1, 2**64 - 1),
        blood_group=rng.choice(list(BloodGroup)),
        rh=rng.choice(list(Rh)),
        hiv_positive=rng.random() < 0.5,
        transmittable_disease=rng.random() < 0.5,
        chronic_disease=rng.random() < 0.5,
        language="".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(2)),
        server_uri=uri,
        allergies=tuple(lists["allergies"]),
        conditions=tuple(lists["conditions"]),
        last_modified=rng.randint(0, 2**64 - 1),
        modifier_id=modifier,
    )


DEVICE_USERS = [
    {"user": "dr.pop", "password": "parola1", "role": "physician"},
    {"user": "asist", "password": "parola2", "role": "viewer"},
]
SIMOPAC_USERS = [
    {"user": "dr.pop", "password": "parola1", "role": "physician"},
    {"user": "device1", "password": "svc-secret", "role": "physician"},
    {"user": "admin", "password": "parola3", "role": "admin"},
]
DEMO_PATIENTS = [
    {"serial": 42, "display_name": "Popescu, Ion", "birth_year": 1974},
]


@dataclass
class Stack:
    tagsim: TagSimulator
    simopac: SimopacServer
    device: Device
    device_url: str
    simopac_url: str

    def login(self, user: str = "dr.pop", password: str = "parola1") -> dict:
        response = requests.post(f"{self.device_url}/login",
                                 json={"user": user, "password": password},
                                 timeout=5)
        assert response.status_code == 200, response.text
        token = response.json()["token"]
        return {"Authorization": f"Bearer {token}"}

    def patient_card_json(self, serial: int = 42) -> dict:
        return {
            "serial": serial,
            "blood_group": "Unknown",
            "rh": "Positive",
            "language": "ro",
            "server_uri": self.simopac_url,
            "allergies": ["penicilina"],
            "conditions": [],
            "last_modified": 0,
            "modifier_id": "",
        }

    def stop(self):
        self.device.stop()
        self.simopac.stop()
        self.tagsim.stop()


def build_stack(tmp_path, deterministic: bool = True,
                poll_interval: float = 3600.0, window_size: int = 10) -> Stack:
    tagsim = TagSimulator(port=0)
    tagsim.start()
    simopac = SimopacServer(data_dir=tmp_path / "data", users=SIMOPAC_USERS,
                            patients=DEMO_PATIENTS, mllp_port=0, http_port=0)
    simopac.start()

    config = AppConfig()
    config.device.http_port = 0
    config.device.poll_interval = poll_interval
    config.device.deterministic = deterministic
    config.reader.port = tagsim.port
    config.vitals.port = 0
    config.vitals.window_size = window_size
    config.simopac.mllp_port = simopac.mllp_port
    config.simopac.http_port = simopac.http_port
    config.simopac.service_user = "device1"
    config.simopac.service_password = "svc-secret"
    config.simopac.retry_backoff_ms = (10, 20, 40)
    config.simopac.retry_timeout_ms = 1000
    config.users = list(DEVICE_USERS)
    device = Device(config)
    device.start()
    return Stack(
        tagsim=tagsim, simopac=simopac, device=device,
        device_url=f"http://127.0.0.1:{device.api.port}",
        simopac_url=f"http://127.0.0.1:{simopac.http_port}")


@pytest.fixture
def stack(tmp_path):
    st = build_stack(tmp_path)
    yield st
    st.stop()


def wait_until(predicate, timeout: float = 5.0, interval: float = 0.02):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(interval)
    return predicate()
