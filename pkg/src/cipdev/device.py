"""Device assembly: reader client, agents, vitals listener, web API, poller."""

from __future__ import annotations

import logging
import threading
import time

from .agent_runtime import AgentSystem, DeviceState, SimopacEndpoint
from .config import AppConfig
from .device_api import DeviceApi
from .rfid_link import LinkError, ReaderClient
from .vitals import VitalsListener

logger = logging.getLogger(__name__)


class FieldPoller(threading.Thread):
    """Periodic INVENTORY diffing; newly seen tags trigger identification."""

    def __init__(self, reader, system: AgentSystem, interval: float):
        super().__init__(name="field-poller", daemon=True)
        self.reader = reader
        self.system = system
        self.interval = interval
        self._halt = threading.Event()
        self._known: set[int] = set()
        self._lock = threading.Lock()

    def poll_once(self) -> None:
        with self._lock:
            try:
                uids = set(self.reader.inventory())
            except LinkError as exc:
                logger.warning("inventory failed: %s", exc)
                return
            new = sorted(uids - self._known)
            self._known = uids
        for uid in new:
            self.system.on_tag_seen(uid)

    def run(self) -> None:
        while not self._halt.is_set():
            self.poll_once()
            self._halt.wait(self.interval)

    def stop(self) -> None:
        self._halt.set()
        if self.is_alive():
            self.join(timeout=5)


class Device:
    """The whole simulated device; start() brings every part up."""

    def __init__(self, config: AppConfig, reader=None, clock=time.time):
        self.config = config
        self.state = DeviceState(clock=clock)
        self.reader = reader if reader is not None else ReaderClient(
            config.reader.host, config.reader.port)
        endpoint = SimopacEndpoint(
            mllp_host=config.simopac.mllp_host,
            mllp_port=config.simopac.mllp_port,
            service_user=config.simopac.service_user,
            service_password=config.simopac.service_password)
        self.system = AgentSystem(
            self.reader, self.state, config.thresholds, endpoint,
            window_size=config.vitals.window_size,
            retry_policy=config.simopac.retry_policy(),
            deterministic=config.device.deterministic, clock=clock)
        self.vitals = VitalsListener(
            self.system.on_sample, host=config.vitals.host,
            port=config.vitals.port)
        self.api = DeviceApi(
            self.system, config.users, ui_dir=config.device.ui_dir,
            host=config.device.http_host, port=config.device.http_port,
            clock=clock)
        self.poller = FieldPoller(self.reader, self.system,
                                  config.device.poll_interval)

    def start(self) -> None:
        self.reader.connect()
        self.system.start()
        self.vitals.start()
        self.api.start()
        self.poller.start()
        logger.info("device up: api %d, vitals %d, reader %s:%d",
                    self.api.port, self.vitals.port,
                    self.config.reader.host, self.config.reader.port)

    def stop(self) -> None:
        self.poller.stop()
        self.vitals.stop()
        self.api.stop()
        self.system.stop()
        self.reader.close()
