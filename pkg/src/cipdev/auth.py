"""Bearer-token sessions and the salted-hash user table."""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import time
from dataclasses import dataclass

TOKEN_TTL_SECONDS = 3600


class AuthError(Exception):
    pass


class BadCredentials(AuthError):
    pass


class Unauthorized(AuthError):
    pass


@dataclass(frozen=True)
class Session:
    token: str
    principal: str
    role: str
    expiry: int


def hash_password(password: str, salt: str) -> str:
    return hashlib.sha256((salt + password).encode("utf-8")).hexdigest()


def make_user_entry(user: str, password: str, role: str) -> dict:
    """Config-file user record with the password stored salted-hashed."""
    salt = secrets.token_hex(8)
    return {"user": user, "role": role, "salt": salt,
            "password_sha256": hash_password(password, salt)}


class UserTable:
    """Credential store; verification is constant-time either way."""

    def __init__(self, entries: list[dict]):
        self._users: dict[str, tuple[str, str, str]] = {}
        for entry in entries:
            user = entry["user"]
            role = entry.get("role", "physician")
            if "password_sha256" in entry:
                salt, digest = entry["salt"], entry["password_sha256"]
            else:
                # plaintext config entry: hash it at load time
                salt = secrets.token_hex(8)
                digest = hash_password(entry["password"], salt)
            self._users[user] = (salt, digest, role)
        # decoy record so unknown users take the same verification path
        self._decoy = ("00" * 8, hash_password(secrets.token_hex(16), "00" * 8))

    def verify(self, user: str, password: str) -> str:
        """Return the role on success; BadCredentials is indistinguishable
        between a wrong password and an unknown user."""
        salt, digest, role = self._users.get(
            user, (self._decoy[0], self._decoy[1], ""))
        candidate = hash_password(password, salt)
        if not hmac.compare_digest(candidate, digest) or not role:
            raise BadCredentials("bad user or password")
        return role


class SessionStore:
    """In-memory token sessions with expiry."""

    def __init__(self, ttl: int = TOKEN_TTL_SECONDS, clock=time.time):
        self._sessions: dict[str, Session] = {}
        self._ttl = ttl
        self._clock = clock
        self._lock = threading.Lock()

    def issue(self, principal: str, role: str) -> Session:
        token = secrets.token_urlsafe(32)  # 256 bits of randomness
        session = Session(token=token, principal=principal, role=role,
                          expiry=int(self._clock()) + self._ttl)
        with self._lock:
            self._sessions[token] = session
        return session

    def validate(self, token: str | None) -> Session:
        if not token:
            raise Unauthorized("missing bearer token")
        with self._lock:
            session = self._sessions.get(token)
        if session is None:
            raise Unauthorized("unknown token")
        if session.expiry <= self._clock():
            with self._lock:
                self._sessions.pop(token, None)
            raise Unauthorized("token expired")
        return session
