"""SIMOPAC stub server: HL7 results over MLLP plus the supplementary API.

MLLP intake (default port 4503): a well-formed ORU^R01 with a numeric PID-3
appends one observation per reported kind and is acknowledged MSA|AA;
anything malformed gets MSA|AE; raw garbage closes the connection.

HTTP (default port 4504): POST /login, GET /patients/{serial}?lang=xx with
a bearer token, GET /health. Every patient query is audited, granted or
not, and record existence is only disclosed to authorized callers.
"""

from __future__ import annotations

import logging
import socketserver
import threading
import time

from .. import hl7_gateway
from ..auth import BadCredentials, SessionStore, Unauthorized, UserTable
from ..web import JsonHttpServer, Request, Route
from .store import EhrStore, Observation

logger = logging.getLogger(__name__)

DEFAULT_MLLP_PORT = 4503
DEFAULT_HTTP_PORT = 4504

_STATS = ("min", "max", "mean")

# display labels for the supplementary record, per language
LABELS = {
    "en": {"patient": "Patient", "birth_year": "Year of birth",
           "observations": "Observations", "kind": "Measurement",
           "min": "Minimum", "max": "Maximum", "mean": "Mean",
           "window": "Window", "received_at": "Received"},
    "ro": {"patient": "Pacient", "birth_year": "Anul nasterii",
           "observations": "Observatii", "kind": "Masuratoare",
           "min": "Minim", "max": "Maxim", "mean": "Medie",
           "window": "Fereastra", "received_at": "Primit la"},
}


def extract_observations(msg: hl7_gateway.Hl7Message, source: str,
                         received_at: int) -> tuple[int, list[Observation]]:
    """Pull (serial, observations) out of an ORU; raises Hl7Error on any
    structural problem so the caller can answer AE."""
    if msg.message_type != "ORU^R01":
        raise hl7_gateway.Hl7Error(f"unexpected type {msg.message_type!r}")
    pid = hl7_gateway.find_segment(msg, "PID")
    if pid is None or len(pid) < 4:
        raise hl7_gateway.Hl7Error("missing PID")
    try:
        serial = int(pid[3].split("^")[0])
    except ValueError:
        raise hl7_gateway.Hl7Error(f"unparseable PID-3 {pid[3]!r}")
    obr = hl7_gateway.find_segment(msg, "OBR")
    if obr is None or len(obr) < 9:
        raise hl7_gateway.Hl7Error("missing OBR window")
    try:
        window_start = hl7_gateway.parse_hl7_timestamp(obr[7])
        window_end = hl7_gateway.parse_hl7_timestamp(obr[8])
    except ValueError:
        raise hl7_gateway.Hl7Error("bad OBR timestamps")
    stats: dict[str, dict[str, float]] = {}
    for segment in msg.segments:
        if segment[0] != "OBX":
            continue
        if len(segment) < 7:
            raise hl7_gateway.Hl7Error("short OBX")
        identifier = segment[3].split("^")
        if len(identifier) != 2 or identifier[1] not in _STATS:
            raise hl7_gateway.Hl7Error(f"unexpected OBX id {segment[3]!r}")
        kind, stat = identifier
        try:
            value = float(segment[5])
        except ValueError:
            raise hl7_gateway.Hl7Error(f"non-numeric OBX value {segment[5]!r}")
        stats.setdefault(kind, {})[stat] = value
    if not stats:
        raise hl7_gateway.Hl7Error("no OBX segments")
    observations = []
    for kind, values in stats.items():
        if set(values) != set(_STATS):
            raise hl7_gateway.Hl7Error(f"incomplete statistics for {kind}")
        observations.append(Observation(
            kind=kind, min=values["min"], max=values["max"],
            mean=values["mean"], window_start=window_start,
            window_end=window_end, received_at=received_at, source=source))
    return serial, observations


class SimopacServer:
    """Runs the MLLP listener and the HTTP API over one EhrStore."""

    def __init__(self, data_dir, users: list[dict],
                 patients: list[dict] | None = None,
                 mllp_host: str = "127.0.0.1", mllp_port: int = DEFAULT_MLLP_PORT,
                 http_host: str = "127.0.0.1", http_port: int = DEFAULT_HTTP_PORT,
                 clock=time.time):
        self.store = EhrStore(data_dir, patients=patients, clock=clock)
        self.users = UserTable(users)
        self.sessions = SessionStore(clock=clock)
        self._clock = clock

        routes = [
            Route("POST", "/login", self._login, auth=False),
            # auth handled inside so denials are audited
            Route("GET", "/patients/{serial}", self._get_patient, auth=False),
            Route("GET", "/health", self._health, auth=False),
        ]
        self.http = JsonHttpServer(routes, host=http_host, port=http_port,
                                   sessions=self.sessions, name="simopac-http")

        server = self

        class MllpHandler(socketserver.BaseRequestHandler):
            def handle(self):
                server._handle_mllp(self.request, self.client_address)

        class MllpServer(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._mllp = MllpServer((mllp_host, mllp_port), MllpHandler)
        self._mllp_thread: threading.Thread | None = None

    @property
    def mllp_port(self) -> int:
        return self._mllp.server_address[1]

    @property
    def http_port(self) -> int:
        return self.http.port

    def start(self) -> None:
        self.store.load()
        self._mllp_thread = threading.Thread(
            target=self._mllp.serve_forever, name="simopac-mllp", daemon=True)
        self._mllp_thread.start()
        self.http.start()
        logger.info("simopac stub: MLLP %d, HTTP %d",
                    self.mllp_port, self.http_port)

    def stop(self) -> None:
        self._mllp.shutdown()
        self._mllp.server_close()
        if self._mllp_thread:
            self._mllp_thread.join(timeout=5)
        self.http.stop()
        self.store.close()

    # MLLP ---------------------------------------------------------------------

    def _handle_mllp(self, sock, peer) -> None:
        stream = hl7_gateway.MllpStream()
        while True:
            try:
                data = sock.recv(4096)
            except OSError:
                return
            if not data:
                return
            stream.feed(data)
            while True:
                try:
                    text = stream.next_message()
                except hl7_gateway.BadFraming as exc:
                    logger.warning("MLLP framing error from %s: %s", peer, exc)
                    self._best_effort_ack(sock, "UNKNOWN", "AE")
                    sock.close()
                    return
                if text is None:
                    break
                self._answer(sock, peer, text)

    def _answer(self, sock, peer, text: str) -> None:
        control_id = "UNKNOWN"
        try:
            msg = hl7_gateway.parse_hl7(text)
            control_id = msg.control_id or "UNKNOWN"
            serial, observations = extract_observations(
                msg, source=peer[0], received_at=int(self._clock()))
        except hl7_gateway.Hl7Error as exc:
            logger.warning("rejecting HL7 message from %s: %s", peer, exc)
            self._best_effort_ack(sock, control_id, "AE")
            return
        for observation in observations:
            self.store.add_observation(serial, observation)
        self._best_effort_ack(sock, control_id, "AA")

    def _best_effort_ack(self, sock, control_id: str, code: str) -> None:
        try:
            ack = hl7_gateway.build_ack(control_id, code, int(self._clock()))
            sock.sendall(hl7_gateway.mllp_wrap(hl7_gateway.encode_hl7(ack)))
        except OSError:
            pass

    # HTTP ---------------------------------------------------------------------

    def _login(self, request: Request):
        body = request.body or {}
        user = str(body.get("user", ""))
        password = str(body.get("password", ""))
        try:
            role = self.users.verify(user, password)
        except BadCredentials:
            return 401, {"error": "BadCredentials"}
        session = self.sessions.issue(user, role)
        return 200, {"token": session.token, "expiry": session.expiry,
                     "role": session.role, "user": session.principal}

    def _health(self, request: Request):
        return 200, {"status": "ok",
                     "observations": self.store.observation_count(),
                     "audit_entries": self.store.audit_count()}

    def _get_patient(self, request: Request):
        try:
            serial = int(request.params["serial"])
        except ValueError:
            serial = -1
        try:
            session = self.sessions.validate(request.bearer_token)
        except Unauthorized:
            self.store.record_audit(requester="", address=request.peer[0],
                                    serial=serial, outcome="denied")
            return 401, {"error": "Unauthorized"}
        record = self.store.get_record(serial)
        if record is None:
            self.store.record_audit(requester=session.principal,
                                    address=request.peer[0], serial=serial,
                                    outcome="unknown_patient")
            return 404, {"error": "UnknownPatient"}
        self.store.record_audit(requester=session.principal,
                                address=request.peer[0], serial=serial,
                                outcome="granted")
        language = request.query.get("lang", "en")
        labels = LABELS.get(language) or LABELS["en"]
        return 200, {
            "serial": record.serial,
            "display_name": record.display_name,
            "birth_year": record.birth_year,
            "language": language if language in LABELS else "en",
            "labels": labels,
            "observations": [obs.to_json() for obs in record.observations],
        }
