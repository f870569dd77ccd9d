"""HTTP client adapting a served model to the predictor contract.

Protocol: POST ``{"texts": [...]}`` to the endpoint, expect status 200 and
``{"probs": [[p_real, p_fake], ...]}`` in the same order. Responses whose
rows are off normalization by at most 1e-3 are renormalized; anything
worse is rejected.
"""

from __future__ import annotations

import threading
from typing import Sequence

import requests

from .classifier import ProbVector
from .errors import InvariantViolationError, MalformedResponseError, TransportError

RENORMALIZE_TOLERANCE = 1e-3


class RemotePredictor:
    """Callable predictor backed by an HTTP endpoint; safe for concurrent use."""

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def predict_proba(self, texts: Sequence[str]) -> list[ProbVector]:
        payload = {"texts": list(texts)}
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._session().post(self.endpoint, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code != 200:
                last_error = TransportError(f"{self.endpoint}: HTTP {response.status_code}")
                continue
            return _parse_probs(response, len(texts))
        raise TransportError(f"{self.endpoint}: giving up after {self.retries + 1} attempts: {last_error}")

    def __call__(self, texts: Sequence[str]) -> list[ProbVector]:
        return self.predict_proba(texts)


def _parse_probs(response: requests.Response, expected: int) -> list[ProbVector]:
    try:
        body = response.json()
        rows = body["probs"]
        pairs = [(float(row[0]), float(row[1])) for row in rows]
    except Exception as exc:
        raise MalformedResponseError(f"cannot parse response body: {exc}") from exc
    if len(pairs) != expected:
        raise MalformedResponseError(f"expected {expected} probability rows, got {len(pairs)}")

    out = []
    for p_real, p_fake in pairs:
        if p_real < 0 or p_fake < 0:
            raise InvariantViolationError(f"negative probability in ({p_real}, {p_fake})")
        total = p_real + p_fake
        if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
            raise InvariantViolationError(f"probabilities sum to {total}, off by more than {RENORMALIZE_TOLERANCE}")
        out.append(ProbVector(p_real=p_real / total, p_fake=p_fake / total))
    return out


def remote_predictor(endpoint: str, timeout: float = 10.0, retries: int = 2) -> RemotePredictor:
    return RemotePredictor(endpoint, timeout=timeout, retries=retries)
