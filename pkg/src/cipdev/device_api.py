"""The device's mini web server: session-gated JSON endpoints plus the UI.

The route table is the authorization policy: only /login, /health and the
static UI are reachable without a session; card edits and alarm
acknowledgment additionally need the physician role.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

from .agent_runtime import (
    AgentSystem, AlreadyAcknowledged, NoCurrentPatient, TagWriteFailed,
    UnknownAlarmId,
)
from .agent_runtime.state import alarm_to_json
from .auth import BadCredentials, SessionStore, UserTable
from .cip_codec import CipError, CipPatch, ImmutableField, card_to_json
from .vitals import VitalKind, result_to_json, sample_to_json
from .web import (
    ApiError, EventStream, FileResponse, JsonHttpServer, RawResponse, Request,
    Route,
)

logger = logging.getLogger(__name__)

DEFAULT_PORT = 4500

_PLACEHOLDER_PAGE = b"""<!doctype html>
<html><head><title>cipdev</title></head>
<body><h1>cipdev device</h1>
<p>No dashboard build found; the JSON API is live.</p></body></html>
"""


class DeviceApi:
    def __init__(self, system: AgentSystem, users: list[dict],
                 ui_dir: str | None = None, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT, clock=time.time):
        self.system = system
        self.state = system.state
        self.users = UserTable(users)
        self.sessions = SessionStore(clock=clock)
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.routes = [
            Route("POST", "/login", self._login, auth=False),
            Route("GET", "/health", self._health, auth=False),
            Route("GET", "/ui", self._ui, auth=False),
            Route("GET", "/ui/*", self._ui, auth=False),
            Route("GET", "/patient", self._patient),
            Route("PUT", "/cip", self._put_cip, role="physician"),
            Route("GET", "/vitals", self._vitals),
            Route("GET", "/results", self._results),
            Route("GET", "/alarms", self._alarms),
            Route("POST", "/alarms/{id}/ack", self._ack_alarm, role="physician"),
            Route("POST", "/supplementary", self._supplementary),
            Route("GET", "/events", self._events),
            Route("GET", "/diag", self._diag),
        ]
        self.http = JsonHttpServer(self.routes, host=host, port=port,
                                   sessions=self.sessions, name="device-api")

    @property
    def port(self) -> int:
        return self.http.port

    def start(self) -> None:
        self.http.start()

    def stop(self) -> None:
        self.state.close_event_streams()
        self.http.stop()

    # handlers ---------------------------------------------------------------

    def _login(self, request: Request):
        body = request.body or {}
        try:
            role = self.users.verify(str(body.get("user", "")),
                                     str(body.get("password", "")))
        except BadCredentials:
            return 401, {"error": "BadCredentials"}
        session = self.sessions.issue(str(body["user"]), role)
        return 200, {"token": session.token, "expiry": session.expiry,
                     "role": session.role, "user": session.principal}

    def _health(self, request: Request):
        return 200, {"status": "ok"}

    def _patient(self, request: Request):
        card, uid, _ = self.state.current_patient()
        if card is None:
            return 404, {"error": "NoCurrentPatient"}
        payload = card_to_json(card)
        payload["tag_uid"] = uid
        return 200, payload

    def _put_cip(self, request: Request):
        try:
            patch = CipPatch.from_json(request.body or {})
        except ImmutableField as exc:
            raise ApiError(400, "ImmutableField", exc.field)
        except CipError as exc:
            raise ApiError(400, type(exc).__name__, str(exc))
        try:
            card = self.system.update_card(patch, request.session.principal)
        except NoCurrentPatient:
            raise ApiError(409, "NoCurrentPatient")
        except TagWriteFailed as exc:
            raise ApiError(502, "TagWriteFailed", str(exc))
        except CipError as exc:
            raise ApiError(400, type(exc).__name__, str(exc))
        return 200, card_to_json(card)

    def _vitals(self, request: Request):
        kind = request.query.get("kind")
        if kind is not None and kind not in VitalKind._value2member_map_:
            raise ApiError(400, "UnknownVitalType", kind)
        try:
            limit = int(request.query.get("limit", "50"))
        except ValueError:
            raise ApiError(400, "BadLimit")
        samples = self.state.recent_samples(kind, max(1, limit))
        return 200, {"samples": [sample_to_json(s) for s in samples]}

    def _results(self, request: Request):
        card, _, _ = self.state.current_patient()
        results = self.state.latest_results(card.serial if card else None)
        return 200, {"results": [result_to_json(r) for r in results]}

    def _alarms(self, request: Request):
        return 200, {"alarms": [alarm_to_json(a) for a in self.state.alarms()]}

    def _ack_alarm(self, request: Request):
        try:
            alarm_id = int(request.params["id"])
        except ValueError:
            raise ApiError(400, "BadAlarmId")
        try:
            alarm = self.system.acknowledge_alarm(alarm_id,
                                                  request.session.principal)
        except UnknownAlarmId:
            raise ApiError(404, "UnknownAlarmId")
        except AlreadyAcknowledged:
            raise ApiError(409, "AlreadyAcknowledged")
        return 200, alarm_to_json(alarm)

    def _supplementary(self, request: Request):
        try:
            response = self.system.request_supplementary()
        except NoCurrentPatient:
            raise ApiError(409, "NoCurrentPatient")
        if response["ok"]:
            return 200, response
        status = {"UnknownPatient": 404, "Unauthorized": 401}.get(
            response.get("cause"), 502)
        return status, {"error": response.get("cause") or "Upstream",
                        "serial": response.get("serial")}

    def _events(self, request: Request):
        return EventStream(subscribe=self.state.subscribe_events,
                           unsubscribe=self.state.unsubscribe_events)

    def _diag(self, request: Request):
        return 200, self.state.diag()

    def _ui(self, request: Request):
        rel = request.params.get("*", "") or "index.html"
        if self.ui_dir is None:
            if rel == "index.html":
                return RawResponse(_PLACEHOLDER_PAGE)
            return 404, {"error": "NotFound"}
        candidate = (self.ui_dir / rel).resolve()
        if self.ui_dir != candidate and self.ui_dir not in candidate.parents:
            return 404, {"error": "NotFound"}
        if candidate.is_dir():
            candidate = candidate / "index.html"
        if not candidate.is_file():
            return 404, {"error": "NotFound"}
        return FileResponse(candidate)
